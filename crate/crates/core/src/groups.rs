use std::collections::BTreeMap;
use std::fmt::Display;

use crate::error::{Error, Result};

/// Dense group labelling of rows: `index[i]` is the group of row `i`,
/// groups numbered `0..len()` in sorted label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Groups {
    index: Vec<usize>,
    labels: Vec<String>,
}

impl Groups {
    pub fn from_labels<T: Ord + Display>(labels: &[T]) -> Self {
        let mut map: BTreeMap<&T, usize> = BTreeMap::new();
        for l in labels {
            map.entry(l).or_insert(0);
        }
        let names: Vec<String> = map.keys().map(|l| l.to_string()).collect();
        for (pos, v) in map.values_mut().enumerate() {
            *v = pos;
        }
        let index = labels.iter().map(|l| map[l]).collect();
        Self { index, labels: names }
    }

    /// Groups from precomputed indices; labels are the indices themselves.
    pub fn from_indices(index: Vec<usize>) -> Result<Self> {
        let count = index.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; count];
        index.iter().for_each(|&g| seen[g] = true);
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("group indices are not contiguous".into()));
        }
        Ok(Self {
            index,
            labels: (0..count).map(|g| g.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_rows(&self) -> usize {
        self.index.len()
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        self.index.iter().for_each(|&g| out[g] += 1);
        out
    }

    /// Row indices belonging to each group, in row order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, &g) in self.index.iter().enumerate() {
            out[g].push(i);
        }
        out
    }
}
