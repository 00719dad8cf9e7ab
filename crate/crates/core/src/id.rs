//! 128-bit identifiers on the circular key space.
//!
//! Node ids and component keys share one representation. An id is read as
//! 32 hexadecimal digits, most significant first, which is the digit string
//! the prefix router works on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

/// Bits per routing digit.
pub const DIGIT_BITS: u32 = 4;
/// Number of digits in an id.
pub const DIGITS: usize = 32;
/// Routing table width (values a digit can take).
pub const RADIX: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("invalid name: component names must be non-empty")]
    InvalidName,
    #[error("no live nodes")]
    NoNodes,
    #[error("malformed id `{0}`: expected 32 hex digits")]
    Malformed(String),
}

/// A point on the ring `0 .. 2^128`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Id(u128);

/// Identifier of an overlay node.
pub type NodeId = Id;
/// Identifier of a stored component.
pub type Key = Id;

impl Id {
    pub const ZERO: Id = Id(0);
    pub const MAX: Id = Id(u128::MAX);

    pub const fn new(raw: u128) -> Self {
        Id(raw)
    }

    pub const fn raw(self) -> u128 {
        self.0
    }

    /// Digit `index` (0 = most significant).
    pub fn digit(self, index: usize) -> u8 {
        assert!(index < DIGITS, "digit index {index} out of range");
        let shift = (DIGITS - 1 - index) as u32 * DIGIT_BITS;
        ((self.0 >> shift) & 0xf) as u8
    }

    pub fn digits(self) -> [u8; DIGITS] {
        let mut out = [0u8; DIGITS];
        for (i, d) in out.iter_mut().enumerate() {
            *d = self.digit(i);
        }
        out
    }

    pub fn from_digits(digits: &[u8; DIGITS]) -> Self {
        let raw = digits
            .iter()
            .fold(0u128, |acc, &d| (acc << DIGIT_BITS) | u128::from(d & 0xf));
        Id(raw)
    }

    /// Number of leading digits shared with `other`; 32 iff equal.
    pub fn shared_prefix_len(self, other: Id) -> usize {
        ((self.0 ^ other.0).leading_zeros() / DIGIT_BITS) as usize
    }

    /// Shorter of the two arcs between `self` and `other`.
    pub fn circular_distance(self, other: Id) -> u128 {
        let cw = other.0.wrapping_sub(self.0);
        let ccw = self.0.wrapping_sub(other.0);
        cw.min(ccw)
    }

    /// Offset travelling clockwise (increasing values) from `self` to `other`.
    pub fn cw_offset(self, other: Id) -> u128 {
        other.0.wrapping_sub(self.0)
    }

    /// Offset travelling counter-clockwise from `self` to `other`.
    pub fn ccw_offset(self, other: Id) -> u128 {
        self.0.wrapping_sub(other.0)
    }

    /// Lowercase 32-digit hex form.
    pub fn to_hex(self) -> String {
        format!("{:032x}", self.0)
    }

    /// Ordering key used wherever a "closest to `target`" choice is made:
    /// smaller circular distance first, then smaller raw value.
    pub fn closeness_to(self, target: Id) -> (u128, u128) {
        (self.circular_distance(target), self.0)
    }
}

impl fmt::Debug for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Eight digits are enough to tell nodes apart in logs.
        write!(f, "Id({:08x}…)", self.0 >> 96)
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for Id {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != DIGITS || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(IdError::Malformed(s.to_string()));
        }
        u128::from_str_radix(s, 16)
            .map(Id)
            .map_err(|_| IdError::Malformed(s.to_string()))
    }
}

impl Serialize for Id {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Id {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// First 128 bits of SHA-1 over `bytes`, big-endian.
pub fn digest128(bytes: &[u8]) -> u128 {
    let full = Sha1::digest(bytes);
    let mut head = [0u8; 16];
    head.copy_from_slice(&full[..16]);
    u128::from_be_bytes(head)
}

/// Maps a component (or node) name onto the ring.
pub fn derive_key(name: &str) -> Result<Key, IdError> {
    if name.is_empty() {
        return Err(IdError::InvalidName);
    }
    Ok(Id(digest128(name.as_bytes())))
}

/// The id in `live` closest to `key`, ties to the smaller raw id.
///
/// This is a plain scan and serves as the reference the router must agree with.
pub fn root_of<I>(live: I, key: Key) -> Result<NodeId, IdError>
where
    I: IntoIterator<Item = NodeId>,
{
    live.into_iter()
        .min_by_key(|id| id.closeness_to(key))
        .ok_or(IdError::NoNodes)
}
