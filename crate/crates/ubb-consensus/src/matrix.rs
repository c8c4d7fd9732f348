//! Dense matrix of per-ordered-pair values, indexed by 1-based agent ids.
//!
//! Disturbances are defined on every ordered pair `(i, j)` of distinct
//! agents, independently of which edges currently exist, so the natural
//! container is a full `n × n` matrix whose diagonal is unused.

/// A square matrix of scalars keyed by ordered agent pairs `(i, j)`,
/// `1 ≤ i, j ≤ n`, `i ≠ j`. Diagonal entries are stored but ignored by all
/// operations.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    n: usize,
    data: Vec<f64>,
}

impl PairMatrix {
    /// All-zero matrix for `n` agents.
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "agent count must be positive");
        PairMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Matrix with every off-diagonal entry set to `value`.
    pub fn filled(n: usize, value: f64) -> Self {
        let mut m = PairMatrix::zeros(n);
        for i in 1..=n {
            for j in 1..=n {
                if i != j {
                    m.set(i, j, value);
                }
            }
        }
        m
    }

    /// Matrix from sparse `(i, j, value)` entries; unspecified pairs are 0.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut m = PairMatrix::zeros(n);
        for &(i, j, v) in entries {
            m.set(i, j, v);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n);
        self.data[(i - 1) * self.n + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            i >= 1 && i <= self.n && j >= 1 && j <= self.n,
            "pair ({i}, {j}) out of range for n = {}",
            self.n
        );
        assert!(i != j, "diagonal entry ({i}, {i}) is unused");
        self.data[(i - 1) * self.n + (j - 1)] = value;
    }

    /// Largest `|value|` over off-diagonal entries.
    pub fn max_abs(&self) -> f64 {
        self.iter_pairs()
            .map(|(_, _, v)| v.abs())
            .fold(0.0, f64::max)
    }

    /// Iterate off-diagonal entries as `(i, j, value)`.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (1..=n).flat_map(move |i| {
            (1..=n)
                .filter(move |&j| j != i)
                .map(move |j| (i, j, self.get(i, j)))
        })
    }

    /// Entrywise linear interpolation `(1 - w) * a + w * b`.
    pub fn lerp(a: &PairMatrix, b: &PairMatrix, w: f64) -> PairMatrix {
        assert_eq!(a.n, b.n);
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| x + (y - x) * w)
            .collect();
        PairMatrix { n: a.n, data }
    }

    /// True when every off-diagonal entry satisfies `lo(i,j) ≤ v ≤ hi(i,j)`.
    pub fn within(&self, lo: &PairMatrix, hi: &PairMatrix) -> bool {
        self.iter_pairs()
            .all(|(i, j, v)| lo.get(i, j) <= v && v <= hi.get(i, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_round_trip() {
        let m = PairMatrix::from_entries(3, &[(1, 2, 0.5), (3, 1, -0.25)]);
        assert_eq!(m.get(1, 2), 0.5);
        assert_eq!(m.get(3, 1), -0.25);
        assert_eq!(m.get(2, 3), 0.0);
        assert_eq!(m.max_abs(), 0.5);
    }

    #[test]
    fn lerp_midpoint() {
        let a = PairMatrix::filled(3, 0.0);
        let b = PairMatrix::filled(3, 1.0);
        let mid = PairMatrix::lerp(&a, &b, 0.5);
        assert_eq!(mid.get(1, 3), 0.5);
    }

    #[test]
    #[should_panic]
    fn diagonal_rejected() {
        let mut m = PairMatrix::zeros(3);
        m.set(2, 2, 1.0);
    }
}
