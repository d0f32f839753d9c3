//! Ground-truth generators: tensors contracted from a circular chain of
//! third-order cores, with known ring rank, plus the numerical-rank helper
//! used to check the unfolding rank bound rank(X_(k,d)) <= r_k * r_{k+d}.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TrcError};
use crate::rng;
use crate::tensor::DenseTensor;
use crate::unfold::Matrix;

/// Circular chain of N third-order cores; core k has shape r_k x I_k x r_{k+1}
/// with r_{N+1} = r_1.
#[derive(Debug, Clone)]
pub struct TrCores {
    cores: Vec<DenseTensor>,
    ranks: Vec<usize>,
}

impl TrCores {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(TrcError::InvalidArgument("no cores given".into()));
        }
        let n = cores.len();
        let mut ranks = Vec::with_capacity(n);
        for (k, core) in cores.iter().enumerate() {
            let d = core.dims();
            if d.len() != 3 {
                return Err(TrcError::InvalidArgument(format!(
                    "core {} must be third-order, got dims {:?}",
                    k + 1,
                    d
                )));
            }
            let next = cores[(k + 1) % n].dims();
            if d[2] != next[0] {
                return Err(TrcError::InvalidArgument(format!(
                    "rank chain broken between cores {} and {}: {} vs {}",
                    k + 1,
                    (k + 1) % n + 1,
                    d[2],
                    next[0]
                )));
            }
            ranks.push(d[0]);
        }
        Ok(Self { cores, ranks })
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    /// Ring rank vector [r_1..r_N].
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// Mode-2 slice of core k (1-based) at index i (1-based): an r_k x r_{k+1} matrix.
    pub fn slice(&self, k: usize, i: usize) -> Result<Matrix> {
        let core = self
            .cores
            .get(k - 1)
            .ok_or_else(|| TrcError::InvalidArgument(format!("core index {k} out of range")))?;
        let d = core.dims();
        Ok(Matrix::from_fn(d[0], d[2], |a, b| {
            core.get(&[a + 1, i, b + 1]).unwrap()
        }))
    }

    /// Scale core `k` (1-based) in place; the contracted tensor scales by the
    /// same factor (multilinearity).
    pub fn scale_core(&mut self, k: usize, factor: f64) {
        let core = &mut self.cores[k - 1];
        for v in core.values_mut() {
            *v *= factor;
        }
    }
}

/// Contract the circular core chain: each entry is the trace of the ordered
/// product of the mode-2 slice matrices.
pub fn tensor_from_cores(cores: &TrCores) -> Result<DenseTensor> {
    let dims = cores.dims();
    DenseTensor::from_fn(&dims, |idx| {
        let mut prod = cores.slice(1, idx[0]).unwrap();
        for k in 2..=cores.order() {
            prod *= cores.slice(k, idx[k - 1]).unwrap();
        }
        prod.trace()
    })
}

/// Draw cores with i.i.d. standard-normal entries from the seeded "cores"
/// stream and contract them. The result is rescaled (through core 1, keeping
/// tensor == contraction of the returned cores) so max |entry| = 1.
pub fn random_tr_tensor(dims: &[usize], ranks: &[usize], seed: u64) -> Result<(DenseTensor, TrCores)> {
    if dims.len() != ranks.len() {
        return Err(TrcError::InvalidArgument(format!(
            "dims ({}) and ranks ({}) length mismatch",
            dims.len(),
            ranks.len()
        )));
    }
    if ranks.contains(&0) {
        return Err(TrcError::InvalidArgument("ranks must be >= 1".into()));
    }
    let n = dims.len();
    let mut gen = rng::stream(seed, "cores");
    let mut cores = Vec::with_capacity(n);
    for k in 0..n {
        let shape = [ranks[k], dims[k], ranks[(k + 1) % n]];
        let total: usize = shape.iter().product();
        let values: Vec<f64> = (0..total).map(|_| gen.sample(StandardNormal)).collect();
        cores.push(DenseTensor::new(shape.to_vec(), values)?);
    }
    let mut cores = TrCores::new(cores)?;
    let tensor = tensor_from_cores(&cores)?;
    let peak = tensor.max_abs();
    if peak > 0.0 {
        cores.scale_core(1, 1.0 / peak);
        Ok((tensor.scale(1.0 / peak), cores))
    } else {
        Ok((tensor, cores))
    }
}

/// Count singular values above rel_tol * sigma_max; 0 for the zero matrix.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Deterministic piecewise-smooth test image in [0,1]: a smooth bilinear
/// ramp per channel overlaid with constant rectangles and bands, so every
/// channel slice has low matrix rank and local patches are near-constant.
pub fn synthetic_image(rows: usize, cols: usize, channels: usize, seed: u64) -> Result<DenseTensor> {
    let mut gen = rng::stream(seed, "image");
    let mut img = DenseTensor::zeros(&[rows, cols, channels])?;
    let mut coeffs = Vec::with_capacity(channels);
    for _ in 0..channels {
        let c: [f64; 4] = [
            gen.random_range(0.2..0.8),
            gen.random_range(-0.3..0.3),
            gen.random_range(-0.3..0.3),
            gen.random_range(-0.2..0.2),
        ];
        coeffs.push(c);
    }
    for (ch, &[a, b, c, d]) in coeffs.iter().enumerate() {
        for j in 0..cols {
            for i in 0..rows {
                let u = i as f64 / rows as f64;
                let v = j as f64 / cols as f64;
                img.set(&[i + 1, j + 1, ch + 1], a + b * u + c * v + d * u * v)
                    .unwrap();
            }
        }
    }
    // constant rectangles (each adds at most one to the rank of a slice)
    for _ in 0..5 {
        let h = gen.random_range(rows / 6..rows / 2);
        let w = gen.random_range(cols / 6..cols / 2);
        let r0 = gen.random_range(0..rows - h);
        let c0 = gen.random_range(0..cols - w);
        let shade: Vec<f64> = (0..channels).map(|_| gen.random_range(-0.35..0.35)).collect();
        for (ch, &delta) in shade.iter().enumerate() {
            for j in c0..c0 + w {
                for i in r0..r0 + h {
                    let old = img.get(&[i + 1, j + 1, ch + 1]).unwrap();
                    img.set(&[i + 1, j + 1, ch + 1], old + delta).unwrap();
                }
            }
        }
    }
    // one horizontal and one vertical band
    for vertical in [false, true] {
        let extent = if vertical { cols } else { rows };
        let width = (extent / 8).max(1);
        let start = gen.random_range(0..extent - width);
        let shade: Vec<f64> = (0..channels).map(|_| gen.random_range(-0.25..0.25)).collect();
        for (ch, &delta) in shade.iter().enumerate() {
            for j in 0..cols {
                for i in 0..rows {
                    let pos = if vertical { j } else { i };
                    if pos >= start && pos < start + width {
                        let old = img.get(&[i + 1, j + 1, ch + 1]).unwrap();
                        img.set(&[i + 1, j + 1, ch + 1], old + delta).unwrap();
                    }
                }
            }
        }
    }
    for v in img.values_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unfold::{tr_unfold, UnfoldSpec};

    #[test]
    fn rank_one_chain_is_outer_product() {
        // N=2, all ranks 1: slices are scalars a_i, b_j -> X_ij = a_i * b_j
        let a = DenseTensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let b = DenseTensor::new(vec![1, 2, 1], vec![5.0, 7.0]).unwrap();
        let cores = TrCores::new(vec![a, b]).unwrap();
        let x = tensor_from_cores(&cores).unwrap();
        for i in 1..=3 {
            for j in 1..=2 {
                let ai = [1.0, 2.0, 3.0][i - 1];
                let bj = [5.0, 7.0][j - 1];
                assert_eq!(x.get(&[i, j]).unwrap(), ai * bj);
            }
        }
    }

    #[test]
    fn zero_cores_give_zero_tensor() {
        let cores = TrCores::new(vec![
            DenseTensor::zeros(&[2, 3, 2]).unwrap(),
            DenseTensor::zeros(&[2, 4, 2]).unwrap(),
        ])
        .unwrap();
        let x = tensor_from_cores(&cores).unwrap();
        assert_eq!(x.frob_norm(), 0.0);
    }

    #[test]
    fn entry_matches_slice_product_oracle() {
        let (_, cores) = random_tr_tensor(&[2, 2, 2], &[2, 2, 2], 99).unwrap();
        let x = tensor_from_cores(&cores).unwrap();
        // independent slice-by-slice product at entry (1,1,1)
        let a = cores.slice(1, 1).unwrap();
        let b = cores.slice(2, 1).unwrap();
        let c = cores.slice(3, 1).unwrap();
        let prod = &a * &b * &c;
        let trace = prod.trace();
        assert!((x.get(&[1, 1, 1]).unwrap() - trace).abs() < 1e-12);
    }

    #[test]
    fn chain_inconsistency_is_rejected() {
        let bad = TrCores::new(vec![
            DenseTensor::zeros(&[2, 3, 3]).unwrap(),
            DenseTensor::zeros(&[2, 4, 2]).unwrap(),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn random_tr_tensor_is_deterministic_and_normalized() {
        let (x1, _) = random_tr_tensor(&[4, 5, 3], &[2, 2, 2], 17).unwrap();
        let (x2, cores) = random_tr_tensor(&[4, 5, 3], &[2, 2, 2], 17).unwrap();
        assert_eq!(x1, x2);
        assert!((x1.max_abs() - 1.0).abs() < 1e-12);
        // rescaling kept the tensor equal to its core contraction
        let rebuilt = tensor_from_cores(&cores).unwrap();
        for (a, b) in x1.values().iter().zip(rebuilt.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_rank_one_unfoldings_have_rank_one() {
        let (x, _) = random_tr_tensor(&[4, 4, 4], &[1, 1, 1], 3).unwrap();
        for k in 1..=3 {
            for d in 1..=2 {
                let m = tr_unfold(&x, UnfoldSpec::new(k, d)).unwrap();
                assert_eq!(numerical_rank(&m, 1e-8), 1);
            }
        }
    }

    #[test]
    fn unfolding_rank_bounded_by_rank_product() {
        let (x, _) = random_tr_tensor(&[6, 6, 6], &[2, 2, 2], 21).unwrap();
        for k in 1..=3 {
            let m = tr_unfold(&x, UnfoldSpec::new(k, 1)).unwrap();
            assert!(numerical_rank(&m, 1e-8) <= 4);
        }
    }

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&Matrix::identity(3, 3), 1e-8), 3);
        assert_eq!(numerical_rank(&Matrix::zeros(4, 2), 1e-8), 0);
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1e-12]));
        assert_eq!(numerical_rank(&d, 1e-8), 1);
    }

    #[test]
    fn contraction_is_multilinear_in_each_core() {
        let (x, mut cores) = random_tr_tensor(&[3, 3, 3], &[2, 2, 2], 5).unwrap();
        cores.scale_core(2, 2.5);
        let scaled = tensor_from_cores(&cores).unwrap();
        for (a, b) in scaled.values().iter().zip(x.values()) {
            assert!((a - 2.5 * b).abs() < 1e-10);
        }
    }

    #[test]
    fn synthetic_image_is_deterministic_in_range() {
        let a = synthetic_image(32, 48, 3, 9).unwrap();
        let b = synthetic_image(32, 48, 3, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.frob_norm() > 0.0);
    }
}
