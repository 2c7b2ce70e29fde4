//! Sparse vectors over an unbounded feature index space.
//!
//! Feature spaces here can reach millions of dimensions while individual
//! examples touch only a handful of indices, so both examples and per-task
//! weight vectors store `index -> value` pairs and treat everything else as
//! an implicit zero. Entries are kept in a `BTreeMap` so iteration is always
//! in ascending index order, which makes every accumulation order (and hence
//! every trace and report) reproducible bit for bit.

use std::collections::BTreeMap;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Map from feature index to value; indices absent from the map are zero.
///
/// Canonical form: no stored entry is exactly `0.0`. All mutating operations
/// preserve this, so two vectors are equal iff their entry maps are equal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: BTreeMap<u32, f64>,
}

impl SparseVector {
    /// The zero vector.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from `(index, value)` pairs, dropping exact zeros.
    /// A repeated index keeps the last value given.
    pub fn from_pairs<I: IntoIterator<Item = (u32, f64)>>(pairs: I) -> Self {
        let mut entries = BTreeMap::new();
        for (i, v) in pairs {
            if v == 0.0 {
                entries.remove(&i);
            } else {
                entries.insert(i, v);
            }
        }
        Self { entries }
    }

    /// Value at `index` (zero when not stored).
    pub fn get(&self, index: u32) -> f64 {
        self.entries.get(&index).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Largest stored index, if any entry exists.
    pub fn max_index(&self) -> Option<u32> {
        self.entries.keys().next_back().copied()
    }

    /// Stored entries in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().map(|(&i, &v)| (i, v))
    }

    /// Inner product. Iterates over the operand with fewer stored entries and
    /// looks the indices up in the other, in ascending index order.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, big) = if self.nnz() <= other.nnz() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc = 0.0;
        for (&i, &v) in &small.entries {
            if let Some(&w) = big.entries.get(&i) {
                acc += v * w;
            }
        }
        acc
    }

    /// `self += alpha * x`, pruning entries that land exactly on zero.
    pub fn axpy(&mut self, alpha: f64, x: &SparseVector) {
        if alpha == 0.0 {
            return;
        }
        for (&i, &v) in &x.entries {
            let updated = self.get(i) + alpha * v;
            if updated == 0.0 {
                self.entries.remove(&i);
            } else {
                self.entries.insert(i, updated);
            }
        }
    }

    /// `self *= s`.
    pub fn scale(&mut self, s: f64) {
        if s == 0.0 {
            self.entries.clear();
            return;
        }
        for v in self.entries.values_mut() {
            *v *= s;
        }
        self.entries.retain(|_, v| *v != 0.0);
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copy scaled to unit L2 norm; the zero vector stays zero.
    pub fn l2_normalized(&self) -> SparseVector {
        let norm = self.l2_norm();
        let mut out = self.clone();
        if norm > 0.0 {
            out.scale(1.0 / norm);
        }
        out
    }

    /// Expands into a dense array of length `dim`. Panics if an index is out
    /// of range; intended for small dimensions (tests, reference checks).
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }
}

impl FromIterator<(u32, f64)> for SparseVector {
    fn from_iter<I: IntoIterator<Item = (u32, f64)>>(iter: I) -> Self {
        Self::from_pairs(iter)
    }
}

// Serialized as a sequence of [index, value] pairs in ascending index order,
// not as a JSON object, so indices stay numeric.
impl Serialize for SparseVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for (&i, &v) in &self.entries {
            seq.serialize_element(&(i, v))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SparseVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;
        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = SparseVector;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a sequence of [index, value] pairs")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut entries = BTreeMap::new();
                while let Some((i, v)) = seq.next_element::<(u32, f64)>()? {
                    if v != 0.0 {
                        entries.insert(i, v);
                    }
                }
                Ok(SparseVector { entries })
            }
        }
        deserializer.deserialize_seq(PairsVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn dot_with_zero_vector_is_zero() {
        assert_eq!(SparseVector::new().dot(&sv(&[(0, 5.0)])), 0.0);
    }

    #[test]
    fn dot_single_overlapping_index() {
        let a = sv(&[(1, 2.0), (3, -1.0)]);
        let b = sv(&[(3, 4.0)]);
        assert_eq!(a.dot(&b), -4.0);
        assert_eq!(b.dot(&a), -4.0);
    }

    #[test]
    fn axpy_identity_on_zero_accumulator() {
        let x = sv(&[(2, 3.0), (7, -0.5)]);
        let mut w = SparseVector::new();
        w.axpy(1.0, &x);
        assert_eq!(w, x);
    }

    #[test]
    fn axpy_exact_cancellation_is_pruned() {
        let mut w = sv(&[(2, 3.0)]);
        w.axpy(-1.0, &sv(&[(2, 3.0)]));
        assert!(w.is_empty());
        assert_eq!(w.nnz(), 0);
    }

    #[test]
    fn axpy_merges_and_scales() {
        let mut w = sv(&[(5, 1.0)]);
        w.axpy(2.0, &sv(&[(0, 1.0), (5, 0.5)]));
        assert_eq!(w, sv(&[(0, 2.0), (5, 2.0)]));
    }

    #[test]
    fn from_pairs_drops_zeros() {
        let v = sv(&[(0, 0.0), (1, 2.0), (4, 0.0)]);
        assert_eq!(v.nnz(), 1);
        assert_eq!(v.get(1), 2.0);
    }

    #[test]
    fn l2_normalized_has_unit_norm() {
        let v = sv(&[(0, 3.0), (1, 4.0)]);
        let n = v.l2_normalized();
        assert!((n.l2_norm() - 1.0).abs() < 1e-12);
        assert!((n.get(0) - 0.6).abs() < 1e-12);
        assert!(SparseVector::new().l2_normalized().is_empty());
    }

    #[test]
    fn serde_round_trip() {
        let v = sv(&[(3, -1.5), (900_000, 2.0)]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "[[3,-1.5],[900000,2.0]]");
        let back: SparseVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    prop_compose! {
        fn arb_vec(dim: usize)(pairs in prop::collection::vec((0..dim as u32, -10.0f64..10.0), 0..=dim)) -> SparseVector {
            SparseVector::from_pairs(pairs)
        }
    }

    proptest! {
        #[test]
        fn dot_matches_dense_reference(a in arb_vec(50), b in arb_vec(50)) {
            let expected = dense_dot(&a.to_dense(50), &b.to_dense(50));
            prop_assert!((a.dot(&b) - expected).abs() <= 1e-12);
        }

        #[test]
        fn dot_is_symmetric_and_homogeneous(a in arb_vec(40), b in arb_vec(40), alpha in -4.0f64..4.0) {
            prop_assert_eq!(a.dot(&b), b.dot(&a));
            let mut scaled = SparseVector::new();
            scaled.axpy(alpha, &a);
            prop_assert!((scaled.dot(&b) - alpha * a.dot(&b)).abs() <= 1e-12);
        }

        #[test]
        fn axpy_matches_dense_reference(mut w in arb_vec(60), x in arb_vec(60), alpha in -5.0f64..5.0) {
            let mut dense = w.to_dense(60);
            for (i, v) in x.iter() {
                dense[i as usize] += alpha * v;
            }
            w.axpy(alpha, &x);
            for i in 0..60u32 {
                prop_assert!((w.get(i) - dense[i as usize]).abs() <= 1e-12);
            }
            // canonical form survives arbitrary op sequences
            prop_assert!(w.iter().all(|(_, v)| v != 0.0));
        }
    }
}
