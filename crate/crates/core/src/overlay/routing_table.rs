use crate::id::{NodeId, DIGITS, RADIX};

/// Prefix routing table: cell `(row, col)` holds a node that shares exactly
/// `row` leading digits with the owner and has digit `col` at position `row`.
///
/// Rows are allocated lazily; deep rows are almost always empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    owner: NodeId,
    rows: Vec<[Option<NodeId>; RADIX]>,
}

impl RoutingTable {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            rows: Vec::new(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<NodeId> {
        self.rows.get(row).and_then(|r| r[col])
    }

    /// Fills the cell `id` belongs to if it is empty. Occupied cells keep
    /// their current contact.
    pub fn insert(&mut self, id: NodeId) -> bool {
        let row = self.owner.shared_prefix_len(id);
        if row == DIGITS {
            return false;
        }
        let col = id.digit(row) as usize;
        if self.rows.len() <= row {
            self.rows.resize(row + 1, [None; RADIX]);
        }
        let cell = &mut self.rows[row][col];
        if cell.is_some() {
            return false;
        }
        *cell = Some(id);
        true
    }

    pub fn remove(&mut self, id: NodeId) -> bool {
        let row = self.owner.shared_prefix_len(id);
        if row == DIGITS || row >= self.rows.len() {
            return false;
        }
        let cell = &mut self.rows[row][id.digit(row) as usize];
        if *cell == Some(id) {
            *cell = None;
            true
        } else {
            false
        }
    }

    /// Occupied cells as `(row, col, id)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, NodeId)> + '_ {
        self.rows.iter().enumerate().flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(c, cell)| cell.map(|id| (r, c, id)))
        })
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells violating the prefix/digit predicate. Always empty unless the
    /// table was corrupted.
    pub fn unsound_cells(&self) -> Vec<(usize, usize)> {
        self.entries()
            .filter(|&(r, c, id)| {
                self.owner.shared_prefix_len(id) != r
                    || id.digit(r) as usize != c
                    || self.owner.digit(r) as usize == c
            })
            .map(|(r, c, _)| (r, c))
            .collect()
    }
}
