use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_sparsity, Error, Result};

/// Structured pattern keeping `n` of every `m` consecutive weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NmPattern {
    n: usize,
    m: usize,
}

impl NmPattern {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || n >= m {
            return Err(Error::InvalidInput(format!("n:m pattern needs 0 < n < m, got {n}:{m}")));
        }
        Ok(Self { n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `1 - n/m`, the sparsity of an exact n:m mask.
    pub fn max_sparsity(&self) -> f64 {
        1.0 - self.n as f64 / self.m as f64
    }
}

impl fmt::Display for NmPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

impl FromStr for NmPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, m) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("expected n:m, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("expected n:m, got {s:?}")))
        };
        NmPattern::new(parse(n)?, parse(m)?)
    }
}

/// Keep/prune flags, `true` meaning kept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask(Vec<bool>);

impl Mask {
    pub fn all_kept(len: usize) -> Self {
        Mask(vec![true; len])
    }

    pub fn from_kept_indices(len: usize, kept: impl IntoIterator<Item = usize>) -> Self {
        let mut flags = vec![false; len];
        for i in kept {
            flags[i] = true;
        }
        Mask(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn kept_count(&self) -> usize {
        self.0.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i)
    }

    /// Fraction of pruned entries.
    pub fn sparsity(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        1.0 - self.kept_count() as f64 / self.0.len() as f64
    }

    /// Every entry kept here is also kept in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

impl From<Vec<bool>> for Mask {
    fn from(flags: Vec<bool>) -> Self {
        Mask(flags)
    }
}

/// `ceil((1 - s) * len)`, snapping values within 1e-9 of an integer first so
/// that `0.7 * 10` keeps 7 entries, not 8.
pub fn kept_count(len: usize, s: f64) -> usize {
    let exact = (1.0 - s) * len as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * (len.max(1) as f64) {
        nearest
    } else {
        exact.ceil()
    };
    (k.max(0.0) as usize).min(len)
}

// Indices sorted by descending magnitude, ties by ascending index.
fn by_magnitude(values: &[f64], indices: &mut [usize]) {
    indices.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
}

/// Unstructured magnitude mask: keeps the `ceil((1 - s) len)` largest
/// magnitudes, breaking ties by lowest index.
pub fn gmp_mask(values: &[f64], s: f64) -> Result<Mask> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot prune an empty tensor".into()));
    }
    check_sparsity(s)?;
    let keep = kept_count(values.len(), s);
    let mut order: Vec<usize> = (0..values.len()).collect();
    by_magnitude(values, &mut order);
    Ok(Mask::from_kept_indices(values.len(), order.into_iter().take(keep)))
}

/// Gradual n:m mask.
///
/// The `n` largest entries of every group of `m` consecutive weights are
/// forced into the mask; the rest of the kept budget `ceil((1 - s) len)` goes
/// to the largest remaining magnitudes. At `s = 1 - n/m` the result is an
/// exact n:m mask. Among all masks of that size honoring the per-group floor,
/// this maximizes the kept magnitude sum.
pub fn nm_gradual_mask(values: &[f64], pattern: NmPattern, s: f64) -> Result<Mask> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot prune an empty tensor".into()));
    }
    check_sparsity(s)?;
    let len = values.len();
    if len % pattern.m() != 0 {
        return Err(Error::InvalidInput(format!(
            "length {len} is not a multiple of the group size {}",
            pattern.m()
        )));
    }
    if s > pattern.max_sparsity() + 1e-12 {
        return Err(Error::InvalidInput(format!(
            "sparsity {s} exceeds the {pattern} limit {}",
            pattern.max_sparsity()
        )));
    }
    let forced_total = len / pattern.m() * pattern.n();
    let keep = kept_count(len, s).max(forced_total);

    let mut forced = vec![false; len];
    for start in (0..len).step_by(pattern.m()) {
        let mut group: Vec<usize> = (start..start + pattern.m()).collect();
        by_magnitude(values, &mut group);
        for &i in &group[..pattern.n()] {
            forced[i] = true;
        }
    }
    let mut rest: Vec<usize> = (0..len).filter(|&i| !forced[i]).collect();
    by_magnitude(values, &mut rest);
    for &i in rest.iter().take(keep - forced_total) {
        forced[i] = true;
    }
    Ok(Mask(forced))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kept_values(values: &[f64], mask: &Mask) -> Vec<f64> {
        mask.kept_indices().map(|i| values[i]).collect()
    }

    #[test]
    fn gmp_examples() {
        let w = [1.0, -2.0, 3.0, -4.0];
        assert_eq!(kept_values(&w, &gmp_mask(&w, 0.5).unwrap()), vec![3.0, -4.0]);
        assert_eq!(gmp_mask(&w, 0.0).unwrap(), Mask::all_kept(4));
        let ones = [1.0; 4];
        let m = gmp_mask(&ones, 0.5).unwrap();
        assert_eq!(m.kept_indices().collect::<Vec<_>>(), vec![0, 1]);
        assert!(gmp_mask(&w, 1.0).is_err());
        assert!(gmp_mask(&[], 0.5).is_err());
    }

    #[test]
    fn kept_count_rounding() {
        assert_eq!(kept_count(10, 0.3), 7);
        assert_eq!(kept_count(8, 0.875), 1);
        assert_eq!(kept_count(10, 0.25), 8); // 7.5 rounds up
        assert_eq!(kept_count(3, 0.0), 3);
        assert_eq!(kept_count(16, 1.0 - 2.0 / 4.0), 8);
    }

    #[test]
    fn nm_example() {
        let w = [0.1, -0.5, 0.3, 0.2, 0.9, 0.05, -0.6, 0.4];
        let p = NmPattern::new(2, 4).unwrap();
        let m = nm_gradual_mask(&w, p, 0.25).unwrap();
        assert_eq!(kept_values(&w, &m), vec![-0.5, 0.3, 0.2, 0.9, -0.6, 0.4]);
    }

    #[test]
    fn nm_terminal_and_identity() {
        let w: Vec<f64> = (0..16).map(|i| ((i * 7919) % 23) as f64 - 11.5).collect();
        let p = NmPattern::new(2, 4).unwrap();
        let m = nm_gradual_mask(&w, p, p.max_sparsity()).unwrap();
        for g in 0..4 {
            assert_eq!((g * 4..g * 4 + 4).filter(|&i| m.is_kept(i)).count(), 2);
        }
        assert_eq!(nm_gradual_mask(&w, p, 0.0).unwrap(), Mask::all_kept(16));
    }

    #[test]
    fn nm_errors() {
        let p = NmPattern::new(2, 4).unwrap();
        assert!(nm_gradual_mask(&[1.0; 6], p, 0.25).is_err());
        assert!(nm_gradual_mask(&[1.0; 8], p, 0.6).is_err());
        assert!(NmPattern::new(4, 4).is_err());
        assert!(NmPattern::new(0, 4).is_err());
    }

    #[test]
    fn pattern_parsing() {
        let p: NmPattern = "2:4".parse().unwrap();
        assert_eq!((p.n(), p.m()), (2, 4));
        assert_eq!(p.to_string(), "2:4");
        assert!("2-4".parse::<NmPattern>().is_err());
        assert!("5:4".parse::<NmPattern>().is_err());
    }
}
