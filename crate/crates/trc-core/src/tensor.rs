//! Dense N-order tensor container.
//!
//! Values are stored flat with the FIRST index varying fastest, the same
//! convention the circular unfolding and the on-disk format rely on.
//! Public index arguments are 1-based; internal positions are 0-based.

use crate::error::{Result, TrcError};

/// Dense real tensor with explicit dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

/// Flat position of a 1-based multi-index: sum of (i_c - 1) * prod_{j<c} I_j.
pub fn linear_index(dims: &[usize], multi_index: &[usize]) -> Result<usize> {
    if multi_index.len() != dims.len() {
        return Err(TrcError::IndexOutOfBounds {
            index: multi_index.to_vec(),
            dims: dims.to_vec(),
        });
    }
    for (&i, &n) in multi_index.iter().zip(dims) {
        if i < 1 || i > n {
            return Err(TrcError::IndexOutOfBounds {
                index: multi_index.to_vec(),
                dims: dims.to_vec(),
            });
        }
    }
    Ok(lin0(
        dims,
        &multi_index.iter().map(|&i| i - 1).collect::<Vec<_>>(),
    ))
}

/// Unchecked 0-based linearization, first index fastest.
pub(crate) fn lin0(dims: &[usize], idx0: &[usize]) -> usize {
    let mut pos = 0;
    let mut stride = 1;
    for (&i, &n) in idx0.iter().zip(dims) {
        pos += i * stride;
        stride *= n;
    }
    pos
}

/// Decode a 0-based flat position into the 0-based multi-index `out`.
pub(crate) fn delin0(dims: &[usize], mut pos: usize, out: &mut [usize]) {
    for (o, &n) in out.iter_mut().zip(dims) {
        *o = pos % n;
        pos /= n;
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(TrcError::InvalidArgument(format!(
            "tensor dims must be nonempty positive integers, got {dims:?}"
        )));
    }
    Ok(())
}

impl DenseTensor {
    /// Build a tensor from dims and a flat value vector (first index fastest).
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let total: usize = dims.iter().product();
        if values.len() != total {
            return Err(TrcError::InvalidArgument(format!(
                "value length {} does not match dims {:?} (product {})",
                values.len(),
                dims,
                total
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let total = dims.iter().product();
        Ok(Self {
            dims: dims.to_vec(),
            values: vec![0.0; total],
        })
    }

    pub fn full(dims: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.values.fill(value);
        Ok(t)
    }

    /// Build entrywise from a 1-based multi-index function.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let n = dims.len();
        let mut idx0 = vec![0usize; n];
        let mut idx1 = vec![0usize; n];
        for pos in 0..t.values.len() {
            delin0(dims, pos, &mut idx0);
            for (a, b) in idx1.iter_mut().zip(&idx0) {
                *a = b + 1;
            }
            t.values[pos] = f(&idx1);
        }
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Entry at a 1-based multi-index.
    pub fn get(&self, multi_index: &[usize]) -> Result<f64> {
        Ok(self.values[linear_index(&self.dims, multi_index)?])
    }

    pub fn set(&mut self, multi_index: &[usize], value: f64) -> Result<()> {
        let pos = linear_index(&self.dims, multi_index)?;
        self.values[pos] = value;
        Ok(())
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(TrcError::shape(&self.dims, &other.dims));
        }
        Ok(())
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(DenseTensor {
            dims: self.dims.clone(),
            values,
        })
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(DenseTensor {
            dims: self.dims.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DenseTensor {
            dims: self.dims.clone(),
            values,
        })
    }

    pub fn scale(&self, factor: f64) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Number of nonzero entries (used for observation rates of masks).
    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// Entrywise select: mask*src + (1-mask)*dest.
    pub fn masked_fill(dest: &DenseTensor, src: &DenseTensor, mask: &DenseTensor) -> Result<DenseTensor> {
        dest.check_same_shape(src)?;
        dest.check_same_shape(mask)?;
        let values = dest
            .values
            .iter()
            .zip(&src.values)
            .zip(&mask.values)
            .map(|((d, s), m)| m * s + (1.0 - m) * d)
            .collect();
        Ok(DenseTensor {
            dims: dest.dims.clone(),
            values,
        })
    }

    /// Reinterpret the flat value sequence under new dims of equal size.
    pub fn reshape(&self, new_dims: &[usize]) -> Result<DenseTensor> {
        check_dims(new_dims)?;
        let total: usize = new_dims.iter().product();
        if total != self.values.len() {
            return Err(TrcError::shape(new_dims, &self.dims));
        }
        Ok(DenseTensor {
            dims: new_dims.to_vec(),
            values: self.values.clone(),
        })
    }

    /// Reorder modes: output entry (i_{order[1]},...,i_{order[N]}) = input entry (i_1,...,i_N).
    /// `order` is a 1-based permutation of 1..=N.
    pub fn permute(&self, order: &[usize]) -> Result<DenseTensor> {
        let n = self.dims.len();
        if order.len() != n {
            return Err(TrcError::InvalidArgument(format!(
                "permutation {order:?} does not match order {n}"
            )));
        }
        let mut seen = vec![false; n];
        for &o in order {
            if o < 1 || o > n || seen[o - 1] {
                return Err(TrcError::InvalidArgument(format!(
                    "{order:?} is not a permutation of 1..={n}"
                )));
            }
            seen[o - 1] = true;
        }
        let new_dims: Vec<usize> = order.iter().map(|&o| self.dims[o - 1]).collect();
        let mut out = vec![0.0; self.values.len()];
        let mut src_idx = vec![0usize; n];
        let mut dst_idx = vec![0usize; n];
        for pos in 0..self.values.len() {
            delin0(&self.dims, pos, &mut src_idx);
            for (a, &o) in dst_idx.iter_mut().zip(order) {
                *a = src_idx[o - 1];
            }
            out[lin0(&new_dims, &dst_idx)] = self.values[pos];
        }
        Ok(DenseTensor {
            dims: new_dims,
            values: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_index_first_index_fastest() {
        assert_eq!(linear_index(&[2, 3], &[1, 1]).unwrap(), 0);
        assert_eq!(linear_index(&[2, 3], &[2, 1]).unwrap(), 1);
        // hand evaluation: (2-1)*1 + (3-1)*2 + (4-1)*6 = 23
        assert_eq!(linear_index(&[2, 3, 4], &[2, 3, 4]).unwrap(), 23);
    }

    #[test]
    fn linear_index_rejects_out_of_bounds() {
        assert!(linear_index(&[2, 3], &[3, 1]).is_err());
        assert!(linear_index(&[2, 3], &[0, 1]).is_err());
        assert!(linear_index(&[2, 3], &[1]).is_err());
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap();
        let ones = DenseTensor::full(&[2, 2], 1.0).unwrap();
        assert_eq!(t.hadamard(&ones).unwrap(), t);
    }

    #[test]
    fn frob_norm_closed_form() {
        // eight entries of 2 -> sqrt(32)
        let t = DenseTensor::full(&[2, 2, 2], 2.0).unwrap();
        assert!((t.frob_norm() - 32f64.sqrt()).abs() < 1e-15);
        assert_eq!(DenseTensor::zeros(&[3]).unwrap().frob_norm(), 0.0);
    }

    #[test]
    fn masked_fill_all_ones_returns_src() {
        let dest = DenseTensor::full(&[2, 3], 9.0).unwrap();
        let src = DenseTensor::new(vec![2, 3], (0..6).map(|i| i as f64).collect()).unwrap();
        let mask = DenseTensor::full(&[2, 3], 1.0).unwrap();
        assert_eq!(DenseTensor::masked_fill(&dest, &src, &mask).unwrap(), src);
        let zero_mask = DenseTensor::zeros(&[2, 3]).unwrap();
        assert_eq!(
            DenseTensor::masked_fill(&dest, &src, &zero_mask).unwrap(),
            dest
        );
    }

    #[test]
    fn elementwise_shape_mismatch_errors() {
        let a = DenseTensor::zeros(&[2, 3]).unwrap();
        let b = DenseTensor::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            a.hadamard(&b),
            Err(TrcError::ShapeMismatch { .. })
        ));
        assert!(matches!(a.add(&b), Err(TrcError::ShapeMismatch { .. })));
    }

    #[test]
    fn reshape_roundtrip() {
        let t = DenseTensor::new(vec![6], (0..6).map(|i| i as f64).collect()).unwrap();
        let r = t.reshape(&[2, 3]).unwrap();
        assert_eq!(r.dims(), &[2, 3]);
        assert_eq!(r.reshape(&[6]).unwrap(), t);
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn permute_identity_and_index_chase() {
        let t = DenseTensor::new(vec![2, 3, 4], (0..24).map(|i| i as f64).collect()).unwrap();
        assert_eq!(t.permute(&[1, 2, 3]).unwrap(), t);

        // order [3,1,2]: new dims (4,2,3), new(i3,i1,i2) = old(i1,i2,i3)
        let p = t.permute(&[3, 1, 2]).unwrap();
        assert_eq!(p.dims(), &[4, 2, 3]);
        for i1 in 1..=2 {
            for i2 in 1..=3 {
                for i3 in 1..=4 {
                    assert_eq!(
                        p.get(&[i3, i1, i2]).unwrap(),
                        t.get(&[i1, i2, i3]).unwrap()
                    );
                }
            }
        }
        assert!(t.permute(&[1, 1, 2]).is_err());
    }

    fn small_tensor() -> impl Strategy<Value = DenseTensor> {
        proptest::collection::vec(1usize..4, 1..4).prop_flat_map(|dims| {
            let total: usize = dims.iter().product();
            proptest::collection::vec(-1.0f64..1.0, total)
                .prop_map(move |values| DenseTensor::new(dims.clone(), values).unwrap())
        })
    }

    proptest! {
        #[test]
        fn hadamard_commutes_and_associates(t in small_tensor(), scale in -2.0f64..2.0) {
            let u = t.scale(scale);
            let v = t.scale(-0.5);
            prop_assert_eq!(t.hadamard(&u).unwrap(), u.hadamard(&t).unwrap());
            prop_assert_eq!(
                t.hadamard(&u).unwrap().hadamard(&v).unwrap(),
                t.hadamard(&u.hadamard(&v).unwrap()).unwrap()
            );
        }

        #[test]
        fn permute_then_inverse_is_identity(t in small_tensor()) {
            let n = t.order();
            let order: Vec<usize> = (1..=n).rev().collect();
            let mut inverse = vec![0usize; n];
            for (a, &o) in order.iter().enumerate() {
                inverse[o - 1] = a + 1;
            }
            prop_assert_eq!(t.permute(&order).unwrap().permute(&inverse).unwrap(), t);
        }
    }
}
