//! Bundle descriptors and the repository index file.
//!
//! The index file is UTF-8 text, one record per bundle, records separated
//! by one blank line. Each record is exactly these lines, in this order:
//!
//! ```text
//! name: log.jar
//! version: 1.0.0
//! digest: f622ce0eb10f562717e0cddcd6cd0aca
//! size: 4096
//! start: org.example.log.Activator
//! imports: org.osgi.framework,org.example.util
//! exports: org.example.log
//! uri: p2p://log.jar
//! ```
//!
//! An empty value is written as the bare `key:`. A non-empty file ends with
//! exactly one newline.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::RepoError;
use crate::simnet::Tick;

const KEYS: [&str; 8] = [
    "name", "version", "digest", "size", "start", "imports", "exports", "uri",
];

/// Dotted numeric version; trailing zero components do not matter.
#[derive(Debug, Clone, Eq)]
pub struct Version {
    text: String,
    parts: Vec<u64>,
}

impl Version {
    fn significant(&self) -> &[u64] {
        let len = self
            .parts
            .iter()
            .rposition(|&p| p != 0)
            .map_or(0, |i| i + 1);
        &self.parts[..len]
    }
}

impl FromStr for Version {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split('.')
            .map(|p| {
                if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                    Err(format!("`{s}` is not a dotted numeric version"))
                } else {
                    p.parse::<u64>()
                        .map_err(|_| format!("version component `{p}` too large"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Version {
            text: s.to_string(),
            parts,
        })
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.significant() == other.significant()
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.significant().cmp(other.significant())
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentDescriptor {
    pub name: String,
    pub version: Version,
    pub digest: u128,
    pub size: u64,
    /// Activator run when the bundle starts.
    pub start_entry: Option<String>,
    pub imports: Vec<String>,
    pub exports: Vec<String>,
    pub source_uri: String,
}

impl ComponentDescriptor {
    /// A descriptor for a `p2p://` bundle with no dependencies.
    pub fn new(name: &str, version: &str, digest: u128, size: u64) -> Result<Self, RepoError> {
        let d = Self {
            name: name.to_string(),
            version: version.parse().map_err(RepoError::InvalidDescriptor)?,
            digest,
            size,
            start_entry: None,
            imports: Vec::new(),
            exports: Vec::new(),
            source_uri: format!("{}{}", super::uri::SCHEME_PREFIX, name),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_imports<I, S>(mut self, packages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.imports = packages.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_exports<I, S>(mut self, packages: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.exports = packages.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_start(mut self, activator: &str) -> Self {
        self.start_entry = Some(activator.to_string());
        self
    }

    /// Checks the constraints the file format relies on.
    pub fn validate(&self) -> Result<(), RepoError> {
        let bad = |msg: String| Err(RepoError::InvalidDescriptor(msg));
        if self.name.is_empty() || self.name.contains(['/', '\n']) {
            return bad(format!("invalid bundle name `{}`", self.name));
        }
        for p in self.imports.iter().chain(&self.exports) {
            if p.is_empty() || p.contains([',', '\n']) || p.trim() != p {
                return bad(format!("invalid package name `{p}` in `{}`", self.name));
            }
        }
        if self.source_uri.is_empty() || self.source_uri.contains('\n') {
            return bad(format!("invalid uri for `{}`", self.name));
        }
        if self
            .start_entry
            .as_deref()
            .is_some_and(|s| s.is_empty() || s.contains('\n'))
        {
            return bad(format!("invalid start entry for `{}`", self.name));
        }
        Ok(())
    }

    fn write_record(&self, out: &mut String) {
        let line = |out: &mut String, key: &str, value: &str| {
            out.push_str(key);
            out.push(':');
            if !value.is_empty() {
                out.push(' ');
                out.push_str(value);
            }
            out.push('\n');
        };
        line(out, "name", &self.name);
        line(out, "version", &self.version.text);
        line(out, "digest", &format!("{:032x}", self.digest));
        line(out, "size", &self.size.to_string());
        line(out, "start", self.start_entry.as_deref().unwrap_or(""));
        line(out, "imports", &self.imports.join(","));
        line(out, "exports", &self.exports.join(","));
        line(out, "uri", &self.source_uri);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepositoryIndex {
    entries: Vec<ComponentDescriptor>,
    /// Sim time the index was assembled; not part of the file.
    pub generated_at: Tick,
}

impl RepositoryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<ComponentDescriptor>) -> Result<Self, RepoError> {
        let mut index = Self::new();
        for d in entries {
            if index.get(&d.name).is_some() {
                return Err(RepoError::InvalidDescriptor(format!(
                    "duplicate bundle `{}`",
                    d.name
                )));
            }
            d.validate()?;
            index.entries.push(d);
        }
        Ok(index)
    }

    pub fn entries(&self) -> &[ComponentDescriptor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ComponentDescriptor> {
        self.entries.iter().find(|d| d.name == name)
    }

    /// Inserts or replaces the descriptor with the same name.
    pub fn upsert(&mut self, descriptor: ComponentDescriptor) {
        match self.entries.iter_mut().find(|d| d.name == descriptor.name) {
            Some(slot) => *slot = descriptor,
            None => self.entries.push(descriptor),
        }
    }

    /// Serializes to the descriptor file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, d) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            d.write_record(&mut out);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse_index(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {field}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

fn parse_index(text: &str) -> Result<RepositoryIndex, ParseError> {
    if text.is_empty() {
        return Ok(RepositoryIndex::new());
    }
    let lines: Vec<&str> = text.split('\n').collect();
    let last_line = lines.len() - 1;
    let err = |line: usize, field: &str, message: String| ParseError {
        line,
        field: field.to_string(),
        message,
    };
    if !text.ends_with('\n') {
        return Err(err(
            last_line + 1,
            "file",
            "truncated: missing final newline".into(),
        ));
    }
    // drop the empty string after the final newline
    let lines = &lines[..last_line];

    let mut entries: Vec<ComponentDescriptor> = Vec::new();
    let mut i = 0;
    loop {
        let record_start = i;
        let mut values: Vec<&str> = Vec::with_capacity(KEYS.len());
        for key in KEYS {
            let lineno = i + 1;
            let Some(&line) = lines.get(i) else {
                return Err(err(lineno, key, "truncated record: field missing".into()));
            };
            let (found, value) = split_field(line).ok_or_else(|| {
                err(
                    lineno,
                    key,
                    format!("expected `{key}: value`, found `{line}`"),
                )
            })?;
            if found != key {
                let message = if KEYS.contains(&found) {
                    format!("field out of order, expected `{key}`")
                } else {
                    format!("unknown key, expected `{key}`")
                };
                return Err(err(lineno, found, message));
            }
            values.push(value);
            i += 1;
        }
        let d = record_from(&values)
            .map_err(|(off, field, message)| err(record_start + 1 + off, field, message))?;
        if entries.iter().any(|e| e.name == d.name) {
            return Err(err(
                record_start + 1,
                "name",
                format!("duplicate bundle `{}`", d.name),
            ));
        }
        entries.push(d);

        if i == lines.len() {
            break;
        }
        if !lines[i].is_empty() {
            return Err(err(
                i + 1,
                "record",
                "expected blank line between records".into(),
            ));
        }
        i += 1;
        if i == lines.len() {
            return Err(err(i, "record", "dangling separator at end of file".into()));
        }
    }
    Ok(RepositoryIndex {
        entries,
        generated_at: 0,
    })
}

fn split_field(line: &str) -> Option<(&str, &str)> {
    if let Some((k, v)) = line.split_once(": ") {
        if !k.is_empty() && !k.contains(':') && !v.is_empty() {
            return Some((k, v));
        }
    }
    let k = line.strip_suffix(':')?;
    (!k.is_empty() && !k.contains(':')).then_some((k, ""))
}

fn record_from(values: &[&str]) -> Result<ComponentDescriptor, (usize, &'static str, String)> {
    let list = |v: &str| -> Vec<String> {
        if v.is_empty() {
            Vec::new()
        } else {
            v.split(',').map(str::to_string).collect()
        }
    };
    let digest_text = values[2];
    if digest_text.len() != 32
        || !digest_text
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return Err((2, "digest", "expected 32 lowercase hex digits".into()));
    }
    let d = ComponentDescriptor {
        name: values[0].to_string(),
        version: values[1].parse().map_err(|m| (1, "version", m))?,
        digest: u128::from_str_radix(digest_text, 16).expect("validated hex"),
        size: values[3]
            .parse()
            .map_err(|_| (3, "size", format!("`{}` is not a byte count", values[3])))?,
        start_entry: (!values[4].is_empty()).then(|| values[4].to_string()),
        imports: list(values[5]),
        exports: list(values[6]),
        source_uri: values[7].to_string(),
    };
    d.validate().map_err(|e| {
        let (off, field) = match &e {
            RepoError::InvalidDescriptor(m) if m.contains("package") => (5, "imports"),
            RepoError::InvalidDescriptor(m) if m.contains("uri") => (7, "uri"),
            _ => (0, "name"),
        };
        (off, field, e.to_string())
    })?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RepositoryIndex {
        let a =
            ComponentDescriptor::new("log.jar", "1.0.0", 0xf622ce0eb10f562717e0cddcd6cd0aca, 4096)
                .unwrap()
                .with_start("org.example.log.Activator")
                .with_imports(["org.osgi.framework"])
                .with_exports(["org.example.log"]);
        let b = ComponentDescriptor::new("util.jar", "2.1", 7, 10).unwrap();
        RepositoryIndex::from_entries(vec![a, b]).unwrap()
    }

    #[test]
    fn empty_index_is_empty_file() {
        let idx = RepositoryIndex::new();
        assert_eq!(idx.to_text(), "");
        assert_eq!(RepositoryIndex::parse("").unwrap(), idx);
    }

    #[test]
    fn exact_text_layout() {
        let text = sample().to_text();
        let expected = "name: log.jar\nversion: 1.0.0\ndigest: f622ce0eb10f562717e0cddcd6cd0aca\nsize: 4096\nstart: org.example.log.Activator\nimports: org.osgi.framework\nexports: org.example.log\nuri: p2p://log.jar\n\nname: util.jar\nversion: 2.1\ndigest: 00000000000000000000000000000007\nsize: 10\nstart:\nimports:\nexports:\nuri: p2p://util.jar\n";
        assert_eq!(text, expected);
        assert_eq!(RepositoryIndex::parse(&text).unwrap(), sample());
    }

    #[test]
    fn unknown_and_misordered_keys_rejected() {
        let text = sample().to_text().replacen("start:", "activator:", 1);
        let e = RepositoryIndex::parse(&text).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (5, "activator"));

        let text = sample()
            .to_text()
            .replacen("version: 1.0.0\ndigest", "digest", 1);
        let e = RepositoryIndex::parse(&text).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (2, "digest"));
    }

    #[test]
    fn bad_values_report_their_field() {
        let text = sample().to_text().replacen("size: 4096", "size: lots", 1);
        let e = RepositoryIndex::parse(&text).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (4, "size"));

        let text = sample().to_text().replacen("f622ce0e", "F622CE0E", 1);
        assert_eq!(RepositoryIndex::parse(&text).unwrap_err().field, "digest");
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = sample().to_text().replace("util.jar", "log.jar");
        let e = RepositoryIndex::parse(&text).unwrap_err();
        assert_eq!(e.line, 10);
        assert!(e.message.contains("duplicate"));
    }

    #[test]
    fn version_ordering() {
        let v = |s: &str| s.parse::<Version>().unwrap();
        assert!(v("1.10") > v("1.9"));
        assert_eq!(v("1.0"), v("1.0.0"));
        assert!(v("2") > v("1.99.99"));
        assert!("1..2".parse::<Version>().is_err());
        assert!("v1".parse::<Version>().is_err());
    }
}
