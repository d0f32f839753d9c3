//! Circular tensor-ring unfolding and its inverse.
//!
//! The unfolding at (k, d) takes the d circularly consecutive modes starting
//! at mode k as matrix rows and the remaining N-d modes as columns. It is
//! realized by permuting the modes to [k, ..., N, 1, ..., k-1] and
//! reinterpreting the flat storage as a column-major matrix, which matches
//! the first-index-fastest layout exactly, so fold(unfold(t)) is a pure
//! storage permutation with no floating-point error.

use crate::error::{Result, TrcError};
use crate::tensor::DenseTensor;

/// Column-major dense matrix used at module boundaries.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Unfolding position: start mode `k` and number of row modes `d`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnfoldSpec {
    pub k: usize,
    pub d: usize,
}

impl UnfoldSpec {
    pub fn new(k: usize, d: usize) -> Self {
        Self { k, d }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.k < 1 || self.k > order || self.d < 1 || self.d > order {
            return Err(TrcError::InvalidArgument(format!(
                "unfold spec (k={}, d={}) invalid for order {order}",
                self.k, self.d
            )));
        }
        Ok(())
    }

    /// Mode order [k, ..., N, 1, ..., k-1].
    fn mode_order(&self, n: usize) -> Vec<usize> {
        (0..n).map(|i| (self.k - 1 + i) % n + 1).collect()
    }

    /// (rows, cols) of the unfolding of a tensor with these dims.
    pub fn matrix_shape(&self, dims: &[usize]) -> Result<(usize, usize)> {
        self.validate(dims.len())?;
        let n = dims.len();
        let rows: usize = (0..self.d).map(|i| dims[(self.k - 1 + i) % n]).product();
        let cols: usize = (self.d..n).map(|i| dims[(self.k - 1 + i) % n]).product();
        Ok((rows, cols))
    }
}

/// Unfold `t` at `spec` into a (prod of d row dims) x (prod of remaining dims) matrix.
pub fn tr_unfold(t: &DenseTensor, spec: UnfoldSpec) -> Result<Matrix> {
    let (rows, cols) = spec.matrix_shape(t.dims())?;
    let permuted = t.permute(&spec.mode_order(t.order()))?;
    Ok(Matrix::from_column_slice(rows, cols, permuted.values()))
}

/// Inverse of [`tr_unfold`]: rebuild the tensor with `dims` from its unfolding.
pub fn tr_fold(m: &Matrix, dims: &[usize], spec: UnfoldSpec) -> Result<DenseTensor> {
    let (rows, cols) = spec.matrix_shape(dims)?;
    if m.nrows() != rows || m.ncols() != cols {
        return Err(TrcError::shape(&[rows, cols], &[m.nrows(), m.ncols()]));
    }
    let n = dims.len();
    let order = spec.mode_order(n);
    let permuted_dims: Vec<usize> = order.iter().map(|&o| dims[o - 1]).collect();
    let permuted = DenseTensor::new(permuted_dims, m.as_slice().to_vec())?;
    let mut inverse = vec![0usize; n];
    for (a, &o) in order.iter().enumerate() {
        inverse[o - 1] = a + 1;
    }
    permuted.permute(&inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct evaluation of the circular row/column index formulas
    /// (s,t are 1-based; idx is the 1-based multi-index).
    fn direct_st(dims: &[usize], idx: &[usize], spec: UnfoldSpec) -> (usize, usize) {
        let n = dims.len();
        let dim = |c: usize| dims[(c - 1) % n]; // circular, 1-based c
        let ind = |c: usize| idx[(c - 1) % n];
        let mut s = 1;
        let mut stride = 1;
        for c in spec.k..spec.k + spec.d {
            s += (ind(c) - 1) * stride;
            stride *= dim(c);
        }
        let mut t = 1;
        stride = 1;
        for c in spec.k + spec.d..spec.k + n {
            t += (ind(c) - 1) * stride;
            stride *= dim(c);
        }
        (s, t)
    }

    fn all_multi_indices(dims: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &d in dims {
            let mut next = Vec::new();
            for prefix in &out {
                for i in 1..=d {
                    let mut v = prefix.clone();
                    v.push(i);
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }

    fn lcg_values(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn unfold_2_3_4_at_k2_d2() {
        let dims = vec![2usize, 3, 4];
        let t = DenseTensor::new(dims.clone(), lcg_values(24, 7)).unwrap();
        let spec = UnfoldSpec::new(2, 2);
        let m = tr_unfold(&t, spec).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (12, 2));
        // element (2,1,1) lands at (s,t) = (1,2)
        assert_eq!(direct_st(&dims, &[2, 1, 1], spec), (1, 2));
        assert_eq!(m[(0, 1)], t.get(&[2, 1, 1]).unwrap());
        // every element agrees with the direct index formulas
        for idx in all_multi_indices(&dims) {
            let (s, c) = direct_st(&dims, &idx, spec);
            assert_eq!(m[(s - 1, c - 1)], t.get(&idx).unwrap());
        }
        // and the 12x2 matrix folds back to the original tensor
        assert_eq!(tr_fold(&m, &dims, spec).unwrap(), t);
    }

    #[test]
    fn unfold_all_row_modes_gives_column() {
        let t = DenseTensor::new(vec![2, 3], lcg_values(6, 3)).unwrap();
        let m = tr_unfold(&t, UnfoldSpec::new(1, 2)).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (6, 1));
        assert_eq!(m.as_slice(), t.values());
    }

    #[test]
    fn unfold_identity_matrix_is_itself() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = tr_unfold(&t, UnfoldSpec::new(1, 1)).unwrap();
        assert_eq!(m, Matrix::identity(2, 2));
    }

    #[test]
    fn fold_is_exact_inverse_for_every_spec() {
        let dims = vec![3usize, 4, 5];
        let t = DenseTensor::new(dims.clone(), lcg_values(60, 11)).unwrap();
        for k in 1..=3 {
            for d in 1..=3 {
                let spec = UnfoldSpec::new(k, d);
                let m = tr_unfold(&t, spec).unwrap();
                let back = tr_fold(&m, &dims, spec).unwrap();
                assert_eq!(back, t, "roundtrip failed at k={k}, d={d}");
            }
        }
    }

    #[test]
    fn fold_zero_matrix_gives_zero_tensor() {
        let spec = UnfoldSpec::new(2, 1);
        let m = Matrix::zeros(3, 8);
        let t = tr_fold(&m, &[2, 3, 4], spec).unwrap();
        assert_eq!(t, DenseTensor::zeros(&[2, 3, 4]).unwrap());
    }

    #[test]
    fn fold_shape_mismatch_errors() {
        let m = Matrix::zeros(5, 2);
        assert!(matches!(
            tr_fold(&m, &[2, 3, 4], UnfoldSpec::new(2, 2)),
            Err(TrcError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn unfold_preserves_frobenius_norm() {
        let t = DenseTensor::new(vec![2, 3, 4], lcg_values(24, 5)).unwrap();
        for k in 1..=3 {
            for d in 1..=3 {
                let m = tr_unfold(&t, UnfoldSpec::new(k, d)).unwrap();
                assert!((m.norm() - t.frob_norm()).abs() < 1e-12);
            }
        }
    }

    fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(1usize..5, 1..5)
    }

    proptest! {
        #[test]
        fn prop_fold_unfold_identity(dims in dims_strategy(), seed in 0u64..1000) {
            let total: usize = dims.iter().product();
            let t = DenseTensor::new(dims.clone(), lcg_values(total, seed)).unwrap();
            let n = dims.len();
            for k in 1..=n {
                for d in 1..=n {
                    let spec = UnfoldSpec::new(k, d);
                    let m = tr_unfold(&t, spec).unwrap();
                    prop_assert_eq!(tr_fold(&m, &dims, spec).unwrap(), t.clone());
                }
            }
        }

        #[test]
        fn prop_unfold_matches_direct_formulas(dims in dims_strategy(), seed in 0u64..1000) {
            let total: usize = dims.iter().product();
            let t = DenseTensor::new(dims.clone(), lcg_values(total, seed)).unwrap();
            let n = dims.len();
            for k in 1..=n {
                for d in 1..=n {
                    let spec = UnfoldSpec::new(k, d);
                    let m = tr_unfold(&t, spec).unwrap();
                    for idx in all_multi_indices(&dims) {
                        let (s, c) = direct_st(&dims, &idx, spec);
                        prop_assert_eq!(m[(s - 1, c - 1)], t.get(&idx).unwrap());
                    }
                }
            }
        }
    }
}
