//! Antisymmetric component bookkeeping: strictly increasing multi-indices.

use crate::error::{Error, Result};

/// Binomial coefficient (small arguments only; dims here are <= 8).
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// A strictly increasing tuple of axis indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::ValenceMismatch(format!(
                    "multi-index {indices:?} is not strictly increasing"
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::DegreeOverflow {
                    degree: indices.len(),
                    dim,
                });
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// All degree-k multi-indices in lexicographic order.
pub fn index_sets(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(dim, k));
    if k > dim {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + dim - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Lexicographic rank of a sorted index set among `index_sets(dim, k)`.
pub fn rank(dim: usize, set: &[usize]) -> usize {
    let k = set.len();
    let mut r = 0usize;
    let mut prev: isize = -1;
    for (pos, &v) in set.iter().enumerate() {
        for c in (prev + 1) as usize..v {
            r += binomial(dim - c - 1, k - pos - 1);
        }
        prev = v as isize;
    }
    r
}

/// Sorts `set` in place, returning the permutation sign, or None when two
/// entries coincide (the antisymmetric component vanishes).
pub fn sort_with_sign(set: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    // insertion sort; sets here have <= 4 entries
    for i in 1..set.len() {
        let mut j = i;
        while j > 0 && set[j - 1] > set[j] {
            set.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    for w in set.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some(sign)
}

/// Sign and merged sorted index set of the concatenation `a ++ b`, or None
/// when the sets intersect.
pub fn merge_sign(a: &[usize], b: &[usize]) -> Option<(f64, Vec<usize>)> {
    let mut merged: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    let sign = sort_with_sign(&mut merged)?;
    Some((sign, merged))
}

/// Removes position `pos` from a sorted set, returning (−1)^pos and the rest.
pub fn remove_position(set: &[usize], pos: usize) -> (f64, Vec<usize>) {
    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
    let mut rest = set.to_vec();
    rest.remove(pos);
    (sign, rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_and_rank_are_consistent() {
        for dim in 1..=6 {
            for k in 0..=dim {
                let sets = index_sets(dim, k);
                assert_eq!(sets.len(), binomial(dim, k));
                for (i, s) in sets.iter().enumerate() {
                    assert_eq!(rank(dim, s), i, "dim {dim} k {k} set {s:?}");
                }
            }
        }
    }

    #[test]
    fn merge_sign_detects_duplicates_and_parity() {
        assert!(merge_sign(&[0, 2], &[2]).is_none());
        let (s, m) = merge_sign(&[1], &[0]).unwrap();
        assert_eq!(m, vec![0, 1]);
        assert_eq!(s, -1.0);
        let (s, m) = merge_sign(&[0], &[1]).unwrap();
        assert_eq!(m, vec![0, 1]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn multi_index_validation() {
        assert!(MultiIndex::new(vec![0, 1, 3], 4).is_ok());
        assert!(MultiIndex::new(vec![1, 1], 4).is_err());
        assert!(MultiIndex::new(vec![0, 4], 4).is_err());
    }
}
