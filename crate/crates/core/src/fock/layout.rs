use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// One bosonic mode of a truncated Fock space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub label: String,
    pub dim: usize,
}

/// Ordered list of modes. Basis index is row-major over occupations, the first
/// mode being the most significant (the `kron` order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    modes: Vec<Mode>,
}

impl Layout {
    pub fn new<S: Into<String>>(modes: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let modes: Vec<Mode> = modes
            .into_iter()
            .map(|(label, dim)| Mode { label: label.into(), dim })
            .collect();
        if modes.is_empty() {
            return Err(SimError::InvalidArgument("layout needs at least one mode".into()));
        }
        for (i, m) in modes.iter().enumerate() {
            if m.dim < 2 {
                return Err(SimError::InvalidDimension(m.dim));
            }
            if modes[..i].iter().any(|o| o.label == m.label) {
                return Err(SimError::InvalidArgument(format!("duplicate mode label `{}`", m.label)));
            }
        }
        Ok(Self { modes })
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new([(label.into(), dim)])
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.modes.iter().map(|m| m.dim).product()
    }

    pub fn mode_index(&self, label: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.label == label)
    }

    pub fn require_mode(&self, label: &str) -> Result<usize> {
        self.mode_index(label)
            .ok_or_else(|| SimError::LayoutMismatch(format!("layout has no mode `{label}`")))
    }

    /// Stride of mode `k` in the flattened basis index.
    pub fn stride(&self, k: usize) -> usize {
        self.modes[k + 1..].iter().map(|m| m.dim).product()
    }

    pub fn index_of(&self, occupations: &[usize]) -> usize {
        debug_assert_eq!(occupations.len(), self.modes.len());
        occupations
            .iter()
            .zip(&self.modes)
            .fold(0, |acc, (&n, m)| acc * m.dim + n)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes.len()];
        for (k, m) in self.modes.iter().enumerate().rev() {
            occ[k] = index % m.dim;
            index /= m.dim;
        }
        occ
    }

    /// Occupation of mode `k` in basis state `index`.
    pub fn occupation(&self, index: usize, k: usize) -> usize {
        (index / self.stride(k)) % self.modes[k].dim
    }

    /// Layout with mode `k` removed; `None` if it was the only mode.
    pub fn without(&self, k: usize) -> Option<Layout> {
        if self.modes.len() == 1 {
            return None;
        }
        let mut modes = self.modes.clone();
        modes.remove(k);
        Some(Layout { modes })
    }

    pub fn ensure_same(&self, other: &Layout, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(SimError::LayoutMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.describe(),
                other.describe()
            )))
        }
    }

    pub fn describe(&self) -> String {
        self.modes
            .iter()
            .map(|m| format!("{}[{}]", m.label, m.dim))
            .collect::<Vec<_>>()
            .join("x")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let l = Layout::new([("e", 3), ("h", 2), ("b", 4)]).unwrap();
        assert_eq!(l.dim(), 24);
        for i in 0..l.dim() {
            let occ = l.occupations(i);
            assert_eq!(l.index_of(&occ), i);
            for k in 0..3 {
                assert_eq!(l.occupation(i, k), occ[k]);
            }
        }
        assert_eq!(l.index_of(&[1, 0, 0]), 8);
        assert_eq!(l.stride(1), 4);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert_eq!(Layout::single("a", 1), Err(SimError::InvalidDimension(1)));
        assert!(Layout::new([("a", 2), ("a", 3)]).is_err());
    }
}
