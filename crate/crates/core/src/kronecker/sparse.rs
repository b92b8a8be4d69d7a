use std::fmt;

use crate::labels::Label;

use super::AlgebraError;

/// Explicit square adjacency matrix over labels, stored as sorted
/// `(row, col, label)` triples with a row-offset table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMatrix {
    order: usize,
    entries: Vec<(usize, usize, Label)>,
    row_start: Vec<usize>,
}

impl SparseMatrix {
    /// Builds a matrix from unsorted triples. Rejects out-of-range indices
    /// and two labels on the same position.
    pub fn from_triples(
        order: usize,
        mut entries: Vec<(usize, usize, Label)>,
    ) -> Result<Self, AlgebraError> {
        if order == 0 {
            return Err(AlgebraError::EmptyMatrix);
        }
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r >= order || *c >= order) {
            return Err(AlgebraError::IndexOutOfRange { row: r, col: c, order });
        }
        entries.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(AlgebraError::DuplicateEntry { row: w[0].0, col: w[0].1 });
        }
        let mut row_start = vec![0; order + 1];
        for &(r, _, _) in &entries {
            row_start[r + 1] += 1;
        }
        for i in 0..order {
            row_start[i + 1] += row_start[i];
        }
        Ok(SparseMatrix {
            order,
            entries,
            row_start,
        })
    }

    /// The zero matrix of the given order.
    pub fn zero(order: usize) -> Result<Self, AlgebraError> {
        Self::from_triples(order, Vec::new())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of non-zero entries, `||M||`.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, Label)] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[(usize, usize, Label)] {
        &self.entries[self.row_start[i]..self.row_start[i + 1]]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.row_start[i + 1] - self.row_start[i]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&Label> {
        self.row(row)
            .binary_search_by_key(&col, |&(_, c, _)| c)
            .ok()
            .map(|k| &self.row(row)[k].2)
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.entries.iter().map(|(_, _, l)| l)
    }

    /// Dense rendering with `0` for zero entries; handy for comparing
    /// against matrices written out by hand.
    pub fn to_dense_names(&self) -> Vec<Vec<String>> {
        let mut dense = vec![vec!["0".to_string(); self.order]; self.order];
        for (r, c, l) in &self.entries {
            dense[*r][*c] = l.name().to_string();
        }
        dense
    }
}

impl fmt::Display for SparseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.to_dense_names() {
            writeln!(f, "{}", row.join("\t"))?;
        }
        Ok(())
    }
}
