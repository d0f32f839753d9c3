//! Two-stage coarse-to-fine completion.
//!
//! Stage one completes the whole tensor (optionally lifted to high order by a
//! plain reshape). Stage two mirrors-pads the observation, the mask, and the
//! coarse result, walks an overlapping patch grid over the original spatial
//! extent, builds a jittered patch tensor per location (all unit-shifted
//! copies within the jitter window stacked along a trailing mode), fills the
//! holes from the coarse reference, weights every entry by its agreement
//! with the reference, re-solves each patch, and averages the refined
//! patches back into the image.
//!
//! Patch origins are 1-based coordinates in the ORIGINAL spatial extent;
//! crops of padded tensors shift by the jitter length internally, which is
//! exactly what keeps every shifted copy inside the padded bounds.

use rayon::prelude::*;

use crate::error::{Result, TrcError};
use crate::solver::{solve, SolveReport, SolverConfig};
use crate::tensor::DenseTensor;

/// Patch-grid and weighting parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPlan {
    /// Patch side length.
    pub m: usize,
    /// Overlap pixels between neighbouring patches.
    pub o: usize,
    /// Jitter length: the window radius of shifted copies.
    pub l: usize,
    /// Similarity scale of the soft weights.
    pub sigma_w: f64,
    /// Weight of entries filled in from the coarse reference.
    pub w0: f64,
}

impl PatchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.o >= self.m {
            return Err(TrcError::InvalidArgument(format!(
                "overlap {} must be smaller than patch size {}",
                self.o, self.m
            )));
        }
        if !(self.sigma_w > 0.0) {
            return Err(TrcError::InvalidArgument("sigma_w must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.w0) {
            return Err(TrcError::InvalidArgument("w0 must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for PatchPlan {
    fn default() -> Self {
        Self {
            m: 36,
            o: 18,
            l: 2,
            sigma_w: 0.3,
            w0: 0.2,
        }
    }
}

/// Coefficients of the rank heuristic for the two stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRule {
    pub global_coeff: f64,
    pub local_coeff: f64,
}

impl Default for RankRule {
    fn default() -> Self {
        Self {
            global_coeff: 0.2,
            local_coeff: 0.5,
        }
    }
}

impl RankRule {
    /// Global-stage rank: round(coeff * sqrt(p * I1 * I2)), at least 1.
    pub fn global_rank(&self, p: f64, i1: usize, i2: usize) -> usize {
        ((self.global_coeff * (p * i1 as f64 * i2 as f64).sqrt()).round() as usize).max(1)
    }

    /// Local-stage rank: round(coeff * sqrt(p) * m * f^(1/3)), at least 1.
    pub fn local_rank(&self, p: f64, m: usize, frames: usize) -> usize {
        ((self.local_coeff * p.sqrt() * m as f64 * (frames as f64).cbrt()).round() as usize).max(1)
    }
}

/// Reflect index v (0-based, may be outside [0, len)) back into range
/// without repeating the edge sample.
fn reflect(v: isize, len: usize) -> usize {
    let n = len as isize;
    let r = if v < 0 {
        -v
    } else if v >= n {
        2 * (n - 1) - v
    } else {
        v
    };
    debug_assert!((0..n).contains(&r));
    r as usize
}

fn pad_axis(t: &DenseTensor, axis: usize, l: usize) -> Result<DenseTensor> {
    if l == 0 {
        return Ok(t.clone());
    }
    let dims = t.dims();
    let len = dims[axis];
    if len < l + 1 {
        return Err(TrcError::InvalidArgument(format!(
            "axis {} of length {len} cannot be mirrored by {l} pixels",
            axis + 1
        )));
    }
    let mut new_dims = dims.to_vec();
    new_dims[axis] = len + 2 * l;
    let mut out = DenseTensor::zeros(&new_dims)?;
    let mut idx = vec![0usize; dims.len()];
    for pos in 0..out.len() {
        crate::tensor::delin0(&new_dims, pos, &mut idx);
        let src_axis = reflect(idx[axis] as isize - l as isize, len);
        let mut src = idx.clone();
        src[axis] = src_axis;
        out.values_mut()[pos] = t.values()[crate::tensor::lin0(dims, &src)];
    }
    Ok(out)
}

/// Mirror-pad the spatial modes (the first two, or the only mode of a
/// 1-order tensor) by `l` pixels, reflecting without the edge sample.
pub fn pad_mirror(t: &DenseTensor, l: usize) -> Result<DenseTensor> {
    if t.order() == 1 {
        return pad_axis(t, 0, l);
    }
    pad_axis(&pad_axis(t, 0, l)?, 1, l)
}

/// Strip `l` border pixels from the spatial modes; inverse of [`pad_mirror`]
/// for the interior.
pub fn crop_center(t: &DenseTensor, l: usize) -> Result<DenseTensor> {
    if l == 0 {
        return Ok(t.clone());
    }
    let dims = t.dims();
    let spatial = if dims.len() == 1 { 1 } else { 2 };
    let mut new_dims = dims.to_vec();
    for d in new_dims.iter_mut().take(spatial) {
        if *d < 2 * l + 1 {
            return Err(TrcError::InvalidArgument(format!(
                "cannot strip a border of {l} from dims {dims:?}"
            )));
        }
        *d -= 2 * l;
    }
    let mut out = DenseTensor::zeros(&new_dims)?;
    let mut idx = vec![0usize; dims.len()];
    for pos in 0..out.len() {
        crate::tensor::delin0(&new_dims, pos, &mut idx);
        let mut src = idx.clone();
        for s in src.iter_mut().take(spatial) {
            *s += l;
        }
        out.values_mut()[pos] = t.values()[crate::tensor::lin0(dims, &src)];
    }
    Ok(out)
}

/// 1-based origins along one axis: stride m-o from 1, with a clamped tail
/// origin so the last patch ends exactly at the boundary.
fn axis_origins(dim: usize, m: usize, o: usize) -> Result<Vec<usize>> {
    if m > dim {
        return Err(TrcError::InvalidArgument(format!(
            "patch size {m} exceeds spatial extent {dim}"
        )));
    }
    let last = dim - m + 1;
    let stride = m - o;
    let mut origins = Vec::new();
    let mut origin = 1;
    while origin <= last {
        origins.push(origin);
        origin += stride;
    }
    if *origins.last().unwrap() != last {
        origins.push(last);
    }
    Ok(origins)
}

/// Full patch grid over a spatial extent: the Cartesian product of the
/// per-axis origin lists, rows outer.
pub fn plan_patches(spatial_dims: (usize, usize), m: usize, o: usize) -> Result<Vec<(usize, usize)>> {
    if o >= m {
        return Err(TrcError::InvalidArgument(format!(
            "overlap {o} must be smaller than patch size {m}"
        )));
    }
    let rows = axis_origins(spatial_dims.0, m, o)?;
    let cols = axis_origins(spatial_dims.1, m, o)?;
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push((r, c));
        }
    }
    Ok(out)
}

/// Stack the (2l+1)^2 unit-shifted copies of the patch at `origin`
/// (1-based, original coordinates) from an `l`-padded tensor. Offsets run
/// row-major over (-l..=l) x (-l..=l); the unshifted copy sits at the center
/// position. Output dims: [m, m, trailing..., (2l+1)^2].
pub fn jitter_stack(
    padded: &DenseTensor,
    origin: (usize, usize),
    m: usize,
    l: usize,
) -> Result<DenseTensor> {
    let pdims = padded.dims();
    if pdims.len() < 2 {
        return Err(TrcError::InvalidArgument(
            "jitter stacking needs at least two spatial modes".into(),
        ));
    }
    let (rows, cols) = (pdims[0] - 2 * l, pdims[1] - 2 * l);
    if origin.0 + m - 1 > rows || origin.1 + m - 1 > cols || origin.0 < 1 || origin.1 < 1 {
        return Err(TrcError::IndexOutOfBounds {
            index: vec![origin.0, origin.1],
            dims: vec![rows, cols],
        });
    }
    let trailing = &pdims[2..];
    let window = 2 * l + 1;
    let mut dims = vec![m, m];
    dims.extend_from_slice(trailing);
    dims.push(window * window);
    let mut out = DenseTensor::zeros(&dims)?;

    let trailing_total: usize = trailing.iter().product();
    let plane = pdims[0] * pdims[1];
    let patch_plane = m * m;
    let values = out.values_mut();
    let mut tidx = vec![0usize; trailing.len()];
    for (s, (dy, dx)) in offsets(l).enumerate() {
        // top-left of this shifted copy in 0-based padded coordinates
        let r0 = (origin.0 as isize - 1 + l as isize + dy) as usize;
        let c0 = (origin.1 as isize - 1 + l as isize + dx) as usize;
        for t in 0..trailing_total {
            crate::tensor::delin0(trailing, t, &mut tidx);
            let src_base = crate::tensor::lin0(trailing, &tidx) * plane;
            let dst_base = s * patch_plane * trailing_total + t * patch_plane;
            for j in 0..m {
                let src_col = src_base + (c0 + j) * pdims[0] + r0;
                let dst_col = dst_base + j * m;
                values[dst_col..dst_col + m]
                    .copy_from_slice(&padded.values()[src_col..src_col + m]);
            }
        }
    }
    Ok(out)
}

/// Offsets (dy, dx) in row-major order over the jitter window.
fn offsets(l: usize) -> impl Iterator<Item = (isize, isize)> {
    let l = l as isize;
    (-l..=l).flat_map(move |dy| (-l..=l).map(move |dx| (dy, dx)))
}

/// Fill holes of `s` from the reference: P o S + (1 - P) o S_hat.
pub fn combine(s: &DenseTensor, s_hat: &DenseTensor, p_s: &DenseTensor) -> Result<DenseTensor> {
    if p_s.values().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(TrcError::InvalidArgument(
            "combine expects a binary observation mask".into(),
        ));
    }
    DenseTensor::masked_fill(s_hat, s, p_s)
}

/// Per-entry confidence in the combined patch: exp(-(S_c - S_hat)^2 /
/// (2 sigma_w^2)) on observed entries, w0 on filled-in entries.
pub fn confidence_weights(
    s_c: &DenseTensor,
    s_hat: &DenseTensor,
    p_s: &DenseTensor,
    sigma_w: f64,
    w0: f64,
) -> Result<DenseTensor> {
    if s_c.dims() != s_hat.dims() || s_c.dims() != p_s.dims() {
        return Err(TrcError::shape(s_c.dims(), s_hat.dims()));
    }
    if !(sigma_w > 0.0) {
        return Err(TrcError::InvalidArgument("sigma_w must be positive".into()));
    }
    let mut out = DenseTensor::zeros(s_c.dims())?;
    for (((o, sc), sh), p) in out
        .values_mut()
        .iter_mut()
        .zip(s_c.values())
        .zip(s_hat.values())
        .zip(p_s.values())
    {
        *o = if *p != 0.0 {
            let d = sc - sh;
            (-d * d / (2.0 * sigma_w * sigma_w)).exp()
        } else {
            w0
        };
    }
    Ok(out)
}

/// Which refined slices contribute to the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregateMode {
    /// Only each patch's unshifted (center) slice, at its own location.
    #[default]
    CenterSlice,
    /// Every jittered slice, at its shifted location.
    AllSlices,
}

/// Average refined patch tensors back into a spatial tensor of
/// `spatial_dims` x trailing dims, then strip the `l`-pixel border.
/// Accumulation runs in patch-index order, so the result is independent of
/// how the refinements were computed.
pub fn aggregate(
    patches: &[((usize, usize), DenseTensor)],
    spatial_dims: (usize, usize),
    l: usize,
    mode: AggregateMode,
) -> Result<DenseTensor> {
    if patches.is_empty() {
        return Err(TrcError::InvalidArgument("no patches to aggregate".into()));
    }
    let pdims = patches[0].1.dims();
    let m = pdims[0];
    let window = 2 * l + 1;
    if pdims[1] != m || *pdims.last().unwrap() != window * window {
        return Err(TrcError::InvalidArgument(format!(
            "patch tensor dims {pdims:?} do not match patch size {m} and jitter {l}"
        )));
    }
    let trailing = &pdims[2..pdims.len() - 1];
    let trailing_total: usize = trailing.iter().product();

    // accumulate in padded coordinates so shifted slices have a home
    let (prows, pcols) = (spatial_dims.0 + 2 * l, spatial_dims.1 + 2 * l);
    let mut acc_dims = vec![prows, pcols];
    acc_dims.extend_from_slice(trailing);
    let mut sums = DenseTensor::zeros(&acc_dims)?;
    let mut counts = vec![0u32; prows * pcols];

    let patch_plane = m * m;
    let plane = prows * pcols;
    let mut tidx = vec![0usize; trailing.len()];
    for ((or, oc), refined) in patches {
        if refined.dims() != pdims {
            return Err(TrcError::shape(pdims, refined.dims()));
        }
        for (s, (dy, dx)) in offsets(l).enumerate() {
            let center = dy == 0 && dx == 0;
            if mode == AggregateMode::CenterSlice && !center {
                continue;
            }
            let r0 = (*or as isize - 1 + l as isize + dy) as usize;
            let c0 = (*oc as isize - 1 + l as isize + dx) as usize;
            for t in 0..trailing_total {
                crate::tensor::delin0(trailing, t, &mut tidx);
                let dst_base = crate::tensor::lin0(trailing, &tidx) * plane;
                let src_base = s * patch_plane * trailing_total + t * patch_plane;
                for j in 0..m {
                    for i in 0..m {
                        let dst = dst_base + (c0 + j) * prows + (r0 + i);
                        sums.values_mut()[dst] += refined.values()[src_base + j * m + i];
                    }
                }
            }
            for j in 0..m {
                for i in 0..m {
                    counts[(c0 + j) * prows + (r0 + i)] += 1;
                }
            }
        }
    }

    let values = sums.values_mut();
    for (pos, v) in values.iter_mut().enumerate() {
        let c = counts[pos % plane];
        if c > 0 {
            *v /= c as f64;
        }
    }

    let cropped = crop_center(&sums, l)?;
    // every interior pixel must be covered by the plan
    let interior_plane = spatial_dims.0 * spatial_dims.1;
    for p in 0..interior_plane {
        let r = p % spatial_dims.0;
        let c = p / spatial_dims.0;
        if counts[(c + l) * prows + (r + l)] == 0 {
            return Err(TrcError::InvalidArgument(format!(
                "pixel ({}, {}) not covered by any patch",
                r + 1,
                c + 1
            )));
        }
    }
    Ok(cropped)
}

/// Per-patch solver reports keyed by origin.
pub type PatchReports = Vec<((usize, usize), SolveReport)>;

/// Everything the pipeline decided and observed, for diagnostics.
#[derive(Debug, Clone)]
pub struct C2fReport {
    pub observation_rate: f64,
    pub global_rank: usize,
    pub local_rank: usize,
    pub global: SolveReport,
    pub patches: PatchReports,
}

/// Pipeline options beyond the patch plan.
#[derive(Debug, Clone, Default)]
pub struct C2fOptions {
    /// Reshape applied to the tensor (and mask) for the global stage only.
    pub global_reshape: Option<Vec<usize>>,
    pub aggregate: AggregateMode,
}

/// Global solve at the heuristic rank, optionally through a high-order
/// reshape. Returns the completed tensor in the original shape.
pub fn global_complete(
    observed: &DenseTensor,
    mask: &DenseTensor,
    base: &SolverConfig,
    rule: &RankRule,
    global_reshape: Option<&[usize]>,
) -> Result<(DenseTensor, SolveReport, usize)> {
    if observed.dims() != mask.dims() {
        return Err(TrcError::shape(observed.dims(), mask.dims()));
    }
    let dims = observed.dims();
    if dims.len() < 2 {
        return Err(TrcError::InvalidArgument(
            "completion expects at least two modes".into(),
        ));
    }
    let p = mask.count_nonzero() as f64 / mask.len() as f64;
    let rank = rule.global_rank(p, dims[0], dims[1]);

    let (work_obs, work_mask) = match global_reshape {
        Some(shape) => (observed.reshape(shape)?, mask.reshape(shape)?),
        None => (observed.clone(), mask.clone()),
    };
    let mut cfg = base.clone();
    cfg.ranks = vec![rank; work_obs.order()];
    cfg.d = None;
    let (x, report) = solve(&work_obs, &work_mask, &cfg)?;
    Ok((x.reshape(dims)?, report, rank))
}

/// The local refinement stage: patch the observation against an existing
/// coarse completion and aggregate the per-patch re-solves.
pub fn refine(
    observed: &DenseTensor,
    mask: &DenseTensor,
    coarse: &DenseTensor,
    plan: &PatchPlan,
    base: &SolverConfig,
    rule: &RankRule,
    options: &C2fOptions,
) -> Result<(DenseTensor, usize, PatchReports)> {
    plan.validate()?;
    let dims = observed.dims().to_vec();
    if dims.len() < 2 {
        return Err(TrcError::InvalidArgument(
            "the pipeline expects spatial-leading tensors".into(),
        ));
    }
    if coarse.dims() != observed.dims() || mask.dims() != observed.dims() {
        return Err(TrcError::shape(observed.dims(), coarse.dims()));
    }
    let p = mask.count_nonzero() as f64 / mask.len() as f64;

    let padded_obs = pad_mirror(observed, plan.l)?;
    let padded_mask = pad_mirror(mask, plan.l)?;
    let padded_ref = pad_mirror(coarse, plan.l)?;

    let origins = plan_patches((dims[0], dims[1]), plan.m, plan.o)?;
    let frames = if dims.len() >= 4 { dims[3] } else { 1 };
    let local_rank = rule.local_rank(p, plan.m, frames);
    // patch tensor order: m x m x trailing... x window^2
    let patch_order = dims.len() + 1;
    let mut local_cfg = base.clone();
    local_cfg.ranks = vec![local_rank; patch_order];
    local_cfg.d = None;

    let refined: Vec<((usize, usize), DenseTensor, SolveReport)> = origins
        .par_iter()
        .map(|&origin| {
            let s = jitter_stack(&padded_obs, origin, plan.m, plan.l)?;
            let p_s = jitter_stack(&padded_mask, origin, plan.m, plan.l)?;
            let s_hat = jitter_stack(&padded_ref, origin, plan.m, plan.l)?;
            let s_c = combine(&s, &s_hat, &p_s)?;
            let w = confidence_weights(&s_c, &s_hat, &p_s, plan.sigma_w, plan.w0)?;
            let (refined, report) = solve(&s_c, &w, &local_cfg)?;
            Ok((origin, refined, report))
        })
        .collect::<Result<Vec<_>>>()?;

    let patches: Vec<((usize, usize), DenseTensor)> = refined
        .iter()
        .map(|(o, t, _)| (*o, t.clone()))
        .collect();
    let output = aggregate(&patches, (dims[0], dims[1]), plan.l, options.aggregate)?;
    let reports = refined.into_iter().map(|(o, _, r)| (o, r)).collect();
    Ok((output, local_rank, reports))
}

/// The full two-stage pipeline.
pub fn run_c2f(
    observed: &DenseTensor,
    mask: &DenseTensor,
    plan: &PatchPlan,
    base: &SolverConfig,
    rule: &RankRule,
    options: &C2fOptions,
) -> Result<(DenseTensor, C2fReport)> {
    let (coarse, global_report, global_rank) =
        global_complete(observed, mask, base, rule, options.global_reshape.as_deref())?;
    let (output, local_rank, patches) =
        refine(observed, mask, &coarse, plan, base, rule, options)?;
    let p = mask.count_nonzero() as f64 / mask.len() as f64;
    let report = C2fReport {
        observation_rate: p,
        global_rank,
        local_rank,
        global: global_report,
        patches,
    };
    Ok((output, report))
}
