//! Dense real vectors and the coordinate-wise order statistics used by the
//! aggregation rules.
//!
//! Every reduction runs in `f64` and walks its inputs in the order given, so
//! results are bit-reproducible for a fixed input sequence.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense vector with at least one component.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting empty input and non-finite components.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("vector components"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector components"));
        }
        Ok(Vector(data))
    }

    /// Builds a vector without the finiteness check. Used on internal paths
    /// where the components come from arithmetic on already-valid vectors.
    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty());
        Vector(data)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "vector dimension must be positive");
        Vector(vec![0.0; dim])
    }

    /// The `i`-th standard basis vector.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = 1.0;
        v
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "vector dimension must be positive");
        Vector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Vector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * s).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Vector) -> Result<Vector> {
        self.check_dim(other)?;
        Ok(self.zip_map(other, |a, b| a + s * b))
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Euclidean distance; panics on mismatched dimensions.
    pub fn distance(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "distance between mismatched vectors");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Vector::new(data)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

fn common_dim(vs: &[Vector]) -> Result<usize> {
    let first = vs.first().ok_or(Error::Empty("vector list"))?;
    let dim = first.dim();
    for v in &vs[1..] {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    Ok(dim)
}

/// Componentwise arithmetic mean.
pub fn mean(vs: &[Vector]) -> Result<Vector> {
    let dim = common_dim(vs)?;
    let mut acc = vec![0.0; dim];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    Ok(Vector(acc.into_iter().map(|a| a / n).collect()))
}

/// Mean of the vectors selected by `indices`.
pub fn mean_of(vs: &[Vector], indices: &[usize]) -> Result<Vector> {
    if indices.is_empty() {
        return Err(Error::Empty("index set"));
    }
    let dim = vs[indices[0]].dim();
    let mut acc = vec![0.0; dim];
    for &i in indices {
        let v = &vs[i];
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    let n = indices.len() as f64;
    Ok(Vector(acc.into_iter().map(|a| a / n).collect()))
}

fn sorted_column(vs: &[Vector], c: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(vs.iter().map(|v| v.0[c]));
    buf.sort_by(f64::total_cmp);
}

/// Per-coordinate median. Even counts average the two central order
/// statistics.
pub fn coordinate_median(vs: &[Vector]) -> Result<Vector> {
    let dim = common_dim(vs)?;
    let n = vs.len();
    let mut col = Vec::with_capacity(n);
    let out = (0..dim)
        .map(|c| {
            sorted_column(vs, c, &mut col);
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect();
    Ok(Vector(out))
}

/// Per-coordinate trimmed mean: drops the `trim` smallest and `trim` largest
/// values of each coordinate and averages the rest.
pub fn coordinate_trimmed_mean(vs: &[Vector], trim: usize) -> Result<Vector> {
    let dim = common_dim(vs)?;
    let n = vs.len();
    if 2 * trim >= n {
        return Err(Error::TrimTooLarge { trim, count: n });
    }
    let kept = (n - 2 * trim) as f64;
    let mut col = Vec::with_capacity(n);
    let out = (0..dim)
        .map(|c| {
            sorted_column(vs, c, &mut col);
            col[trim..n - trim].iter().sum::<f64>() / kept
        })
        .collect();
    Ok(Vector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn add_examples() {
        assert_eq!(v(&[1.0, 2.0]).add(&v(&[3.0, 4.0])).unwrap(), v(&[4.0, 6.0]));
        let a = v(&[0.3, -7.0, 2.5]);
        assert_eq!(a.add(&Vector::zeros(3)).unwrap(), a);
        assert_eq!(v(&[1.0]).add(&v(&[-1.0])).unwrap(), v(&[0.0]));
    }

    #[test]
    fn add_rejects_mismatch() {
        let err = v(&[1.0]).add(&v(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, actual: 2 }));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(v(&[1.0, 3.0]).scale(2.0), v(&[2.0, 6.0]));
        assert_eq!(v(&[4.0, -2.0]).scale(0.0), Vector::zeros(2));
        assert_eq!(v(&[5.0]).scale(-1.0), v(&[-5.0]));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(v(&[3.0, 4.0]).l2_norm(), 5.0);
        assert_eq!(Vector::zeros(4).l2_norm(), 0.0);
        assert_eq!(v(&[1.0, 1.0, 1.0, 1.0]).l2_norm(), 2.0);
    }

    #[test]
    fn new_rejects_bad_input() {
        assert!(matches!(Vector::new(vec![]), Err(Error::Empty(_))));
        assert!(matches!(Vector::new(vec![f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(Vector::new(vec![1.0, f64::INFINITY]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&[v(&[0.0, 0.0]), v(&[2.0, 2.0])]).unwrap(), v(&[1.0, 1.0]));
        let a = v(&[1.5, -2.0]);
        assert_eq!(mean(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(mean(&[v(&[1.0]), v(&[2.0]), v(&[3.0])]).unwrap(), v(&[2.0]));
        assert!(matches!(mean(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn median_examples() {
        let vs = [v(&[1.0, 5.0]), v(&[2.0, 4.0]), v(&[100.0, 0.0])];
        assert_eq!(coordinate_median(&vs).unwrap(), v(&[2.0, 4.0]));
        let a = v(&[9.0, -1.0]);
        assert_eq!(coordinate_median(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(coordinate_median(&[v(&[0.0]), v(&[2.0])]).unwrap(), v(&[1.0]));
        assert!(coordinate_median(&[]).is_err());
    }

    #[test]
    fn trimmed_mean_examples() {
        let vs: Vec<_> = [1.0, 2.0, 3.0, 4.0, 100.0].iter().map(|&x| v(&[x])).collect();
        assert_eq!(coordinate_trimmed_mean(&vs, 1).unwrap(), v(&[3.0]));
        assert_eq!(coordinate_trimmed_mean(&vs, 0).unwrap(), mean(&vs).unwrap());
        let same = vec![v(&[2.5, 2.5]); 7];
        assert_eq!(coordinate_trimmed_mean(&same, 3).unwrap(), v(&[2.5, 2.5]));
    }

    #[test]
    fn trimmed_mean_errors() {
        let vs = vec![v(&[1.0]); 4];
        assert!(matches!(
            coordinate_trimmed_mean(&vs, 2),
            Err(Error::TrimTooLarge { trim: 2, count: 4 })
        ));
        assert!(matches!(coordinate_trimmed_mean(&[], 0), Err(Error::Empty(_))));
    }

    fn vec_list(dim: usize) -> impl Strategy<Value = Vec<Vector>> {
        prop::collection::vec(
            prop::collection::vec(-1e3f64..1e3, dim).prop_map(|d| Vector::new(d).unwrap()),
            1..12,
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn vector_space_axioms(
            a in prop::collection::vec(-1e3f64..1e3, 3),
            b in prop::collection::vec(-1e3f64..1e3, 3),
            c in prop::collection::vec(-1e3f64..1e3, 3),
            s in -10f64..10.0,
        ) {
            let (a, b, c) = (v(&a), v(&b), v(&c));
            let left = a.add(&b).unwrap().add(&c).unwrap();
            let right = a.add(&b.add(&c).unwrap()).unwrap();
            let lhs = a.add(&b).unwrap().scale(s);
            let rhs = a.scale(s).add(&b.scale(s)).unwrap();
            for i in 0..3 {
                prop_assert!(close(left[i], right[i]));
                prop_assert!(close(lhs[i], rhs[i]));
            }
        }

        #[test]
        fn order_statistics_are_permutation_invariant(vs in vec_list(3), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = vs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(coordinate_median(&vs).unwrap(), coordinate_median(&shuffled).unwrap());
            let trim = (vs.len() - 1) / 2;
            prop_assert_eq!(
                coordinate_trimmed_mean(&vs, trim).unwrap(),
                coordinate_trimmed_mean(&shuffled, trim).unwrap()
            );
        }

        #[test]
        fn median_lies_in_coordinate_range(vs in vec_list(4)) {
            let med = coordinate_median(&vs).unwrap();
            for c in 0..4 {
                let lo = vs.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
                let hi = vs.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= med[c] && med[c] <= hi);
            }
        }

        #[test]
        fn mean_is_no_farther_than_farthest_input(vs in vec_list(3)) {
            let m = mean(&vs).unwrap();
            for vi in &vs {
                let farthest = vs.iter().map(|vj| vj.distance(vi)).fold(0.0, f64::max);
                prop_assert!(m.distance(vi) <= farthest * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
