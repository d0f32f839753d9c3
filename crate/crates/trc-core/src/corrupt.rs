//! Observation masks and observation noise.
//!
//! Masks mark observed entries with 1. Noise touches observed entries only;
//! unobserved entries are zeroed in the returned observation tensor. Every
//! draw comes from the named streams ("mask", "noise") of the recipe seed,
//! so a corruption is reproducible bit-for-bit.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TrcError};
use crate::rng;
use crate::tensor::DenseTensor;

/// Tiled monochrome mark used by the watermark masks ('#' = occluded).
const WATERMARK_BITMAP: [&str; 7] = [
    "#####  ####    ### ",
    "  #    #   #  #   #",
    "  #    #   #  #    ",
    "  #    ####   #    ",
    "  #    # #    #    ",
    "  #    #  #   #   #",
    "  #    #   #   ### ",
];

/// Which entries are observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    /// Exactly round(p * total) entries observed, sampled without replacement.
    Uniform(f64),
    /// The given fraction of first-mode rows removed entirely.
    MissingRows(f64),
    /// The bundled bitmap tiled over the spatial extent, static.
    Watermark,
    /// The bitmap translated linearly from top-left to bottom-right over frames.
    MovingWatermark,
    /// Per-frame random vertical streaks.
    Raindrop,
}

/// Distribution perturbing the observed entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// Additive zero-mean Gaussian with the given variance.
    Gaussian(f64),
    /// Two-component zero-mean Gaussian mixture (var_a, var_b, gamma):
    /// with probability gamma the high-variance component fires.
    Gmm(f64, f64, f64),
    /// The given fraction of observed entries forced to 0 or 1 equiprobably.
    SaltPepper(f64),
    /// The given fraction of observed entries replaced with uniform [0,1).
    RandomValue(f64),
}

/// A complete corruption recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub mask: MaskKind,
    pub noise: NoiseKind,
    pub seed: u64,
}

fn unit_fraction(value: f64, what: &str) -> Result<f64> {
    if !(0.0..=1.0).contains(&value) {
        return Err(TrcError::Config(format!(
            "{what} must lie in [0, 1], got {value}"
        )));
    }
    Ok(value)
}

fn nonnegative(value: f64, what: &str) -> Result<f64> {
    if !(value >= 0.0) {
        return Err(TrcError::Config(format!(
            "{what} must be nonnegative, got {value}"
        )));
    }
    Ok(value)
}

impl MaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "uniform" => Ok(MaskKind::Uniform(unit_fraction(
                parse_f64(args, "uniform mask rate")?,
                "observation rate",
            )?)),
            "rows" | "missing-rows" => Ok(MaskKind::MissingRows(unit_fraction(
                parse_f64(args, "missing row fraction")?,
                "missing row fraction",
            )?)),
            "watermark" => Ok(MaskKind::Watermark),
            "moving-watermark" => Ok(MaskKind::MovingWatermark),
            "raindrop" => Ok(MaskKind::Raindrop),
            other => Err(TrcError::Config(format!("unknown mask kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for MaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskKind::Uniform(p) => write!(f, "uniform:{p}"),
            MaskKind::MissingRows(r) => write!(f, "missing-rows:{r}"),
            MaskKind::Watermark => write!(f, "watermark"),
            MaskKind::MovingWatermark => write!(f, "moving-watermark"),
            MaskKind::Raindrop => write!(f, "raindrop"),
        }
    }
}

impl NoiseKind {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "none" => Ok(NoiseKind::None),
            "gaussian" => Ok(NoiseKind::Gaussian(nonnegative(
                parse_f64(args, "gaussian variance")?,
                "variance",
            )?)),
            "gmm" => {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 3 {
                    return Err(TrcError::Config(format!(
                        "gmm noise needs var_a,var_b,gamma, got '{args}'"
                    )));
                }
                Ok(NoiseKind::Gmm(
                    nonnegative(parse_f64(parts[0], "gmm var_a")?, "variance")?,
                    nonnegative(parse_f64(parts[1], "gmm var_b")?, "variance")?,
                    unit_fraction(parse_f64(parts[2], "gmm gamma")?, "gamma")?,
                ))
            }
            "salt-pepper" | "sp" => Ok(NoiseKind::SaltPepper(unit_fraction(
                parse_f64(args, "salt-pepper fraction")?,
                "gamma",
            )?)),
            "random-value" | "rv" => Ok(NoiseKind::RandomValue(unit_fraction(
                parse_f64(args, "random-value fraction")?,
                "gamma",
            )?)),
            other => Err(TrcError::Config(format!("unknown noise kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Gaussian(v) => write!(f, "gaussian:{v}"),
            NoiseKind::Gmm(a, b, g) => write!(f, "gmm:{a},{b},{g}"),
            NoiseKind::SaltPepper(g) => write!(f, "salt-pepper:{g}"),
            NoiseKind::RandomValue(g) => write!(f, "random-value:{g}"),
        }
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| TrcError::Config(format!("cannot parse {what} from '{s}'")))
}

/// Pick exactly `count` distinct items from `pool` (partial Fisher-Yates).
fn choose_without_replacement(pool: &mut [usize], count: usize, gen: &mut impl Rng) -> Vec<usize> {
    let count = count.min(pool.len());
    let (chosen, _) = pool.partial_shuffle(gen, count);
    chosen.to_vec()
}

fn build_mask(dims: &[usize], kind: MaskKind, gen: &mut impl Rng) -> Result<DenseTensor> {
    let total: usize = dims.iter().product();
    match kind {
        MaskKind::Uniform(p) => {
            let count = (p * total as f64).round() as usize;
            let mut pool: Vec<usize> = (0..total).collect();
            let chosen = choose_without_replacement(&mut pool, count, gen);
            let mut mask = DenseTensor::zeros(dims)?;
            for i in chosen {
                mask.values_mut()[i] = 1.0;
            }
            Ok(mask)
        }
        MaskKind::MissingRows(fraction) => {
            let rows = dims[0];
            let missing = (fraction * rows as f64).round() as usize;
            let mut pool: Vec<usize> = (0..rows).collect();
            let gone: std::collections::HashSet<usize> =
                choose_without_replacement(&mut pool, missing, gen)
                    .into_iter()
                    .collect();
            let mut mask = DenseTensor::full(dims, 1.0)?;
            let row_stride = rows;
            for (pos, v) in mask.values_mut().iter_mut().enumerate() {
                if gone.contains(&(pos % row_stride)) {
                    *v = 0.0;
                }
            }
            Ok(mask)
        }
        MaskKind::Watermark => {
            spatial_mask(dims, |set_occluded| {
                stamp_tiled(dims, set_occluded);
            })
        }
        MaskKind::MovingWatermark => {
            let frames = if dims.len() >= 4 { dims[3] } else { 1 };
            spatial_mask_per_frame(dims, frames, |frame, set_occluded| {
                let h = WATERMARK_BITMAP.len();
                let w = WATERMARK_BITMAP[0].len();
                let t = if frames > 1 {
                    frame as f64 / (frames - 1) as f64
                } else {
                    0.0
                };
                let r0 = (t * (dims[0].saturating_sub(h)) as f64).round() as usize;
                let c0 = (t * (dims[1].saturating_sub(w)) as f64).round() as usize;
                stamp_bitmap(dims, r0, c0, set_occluded);
            })
        }
        MaskKind::Raindrop => {
            let frames = if dims.len() >= 4 { dims[3] } else { 1 };
            let rows = dims[0];
            let cols = dims[1];
            let streaks = (cols / 6).max(1);
            // draw all streak geometry up-front so the stream usage is
            // independent of closure call order
            let mut geometry: Vec<Vec<(usize, usize, usize)>> = Vec::new();
            for _ in 0..frames {
                let mut per_frame = Vec::new();
                for _ in 0..streaks {
                    let col = gen.random_range(0..cols);
                    let lo = (rows / 4).max(1);
                    let hi = (3 * rows / 4).max(lo + 1);
                    let len = gen.random_range(lo..hi);
                    let start = gen.random_range(0..rows.saturating_sub(len).max(1));
                    per_frame.push((col, start, len));
                }
                geometry.push(per_frame);
            }
            spatial_mask_per_frame(dims, frames, |frame, set_occluded| {
                for &(col, start, len) in &geometry[frame] {
                    for r in start..(start + len).min(rows) {
                        set_occluded(r, col);
                    }
                }
            })
        }
    }
}

/// Build a mask occluding spatial pixels uniformly across all trailing modes.
fn spatial_mask(dims: &[usize], stamp: impl FnOnce(&mut dyn FnMut(usize, usize))) -> Result<DenseTensor> {
    if dims.len() < 2 {
        return Err(TrcError::InvalidArgument(
            "spatial masks need at least two modes".into(),
        ));
    }
    let rows = dims[0];
    let cols = dims[1];
    let mut occluded = vec![false; rows * cols];
    stamp(&mut |r, c| {
        if r < rows && c < cols {
            occluded[r + c * rows] = true;
        }
    });
    let mut mask = DenseTensor::full(dims, 1.0)?;
    let plane = rows * cols;
    for (pos, v) in mask.values_mut().iter_mut().enumerate() {
        if occluded[pos % plane] {
            *v = 0.0;
        }
    }
    Ok(mask)
}

/// Like [`spatial_mask`] but per frame (frames = 4th mode when present).
fn spatial_mask_per_frame(
    dims: &[usize],
    frames: usize,
    mut stamp: impl FnMut(usize, &mut dyn FnMut(usize, usize)),
) -> Result<DenseTensor> {
    if dims.len() < 2 {
        return Err(TrcError::InvalidArgument(
            "spatial masks need at least two modes".into(),
        ));
    }
    let rows = dims[0];
    let cols = dims[1];
    let channels = if dims.len() >= 3 { dims[2] } else { 1 };
    let mut mask = DenseTensor::full(dims, 1.0)?;
    let plane = rows * cols;
    let frame_stride = plane * channels;
    for frame in 0..frames {
        let mut occluded = vec![false; plane];
        stamp(frame, &mut |r, c| {
            if r < rows && c < cols {
                occluded[r + c * rows] = true;
            }
        });
        let values = mask.values_mut();
        for ch in 0..channels {
            let base = frame * frame_stride + ch * plane;
            for (p, &occ) in occluded.iter().enumerate() {
                if occ {
                    values[base + p] = 0.0;
                }
            }
        }
        // trailing modes beyond 4 (if any) repeat the frame pattern
        if dims.len() > 4 {
            let tail: usize = dims[4..].iter().product();
            let values = mask.values_mut();
            for rep in 1..tail {
                let offset = rep * frame_stride * frames;
                for ch in 0..channels {
                    let base = offset + frame * frame_stride + ch * plane;
                    for (p, &occ) in occluded.iter().enumerate() {
                        if occ {
                            values[base + p] = 0.0;
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}

fn stamp_bitmap(dims: &[usize], r0: usize, c0: usize, set_occluded: &mut dyn FnMut(usize, usize)) {
    let _ = dims;
    for (dr, row) in WATERMARK_BITMAP.iter().enumerate() {
        for (dc, ch) in row.chars().enumerate() {
            if ch == '#' {
                set_occluded(r0 + dr, c0 + dc);
            }
        }
    }
}

fn stamp_tiled(dims: &[usize], set_occluded: &mut dyn FnMut(usize, usize)) {
    let h = WATERMARK_BITMAP.len();
    let w = WATERMARK_BITMAP[0].len();
    let step_r = 2 * h;
    let step_c = w + w / 2;
    let mut r0 = h / 2;
    while r0 < dims[0] {
        let mut c0 = w / 4;
        while c0 < dims[1] {
            stamp_bitmap(dims, r0, c0, set_occluded);
            c0 += step_c;
        }
        r0 += step_r;
    }
}

/// Apply the corruption: returns (observed, mask) with noise on the support
/// only and unobserved entries zeroed.
pub fn corrupt(clean: &DenseTensor, spec: &CorruptionSpec) -> Result<(DenseTensor, DenseTensor)> {
    let mut mask_gen = rng::stream(spec.seed, "mask");
    let mask = build_mask(clean.dims(), spec.mask, &mut mask_gen)?;

    let support: Vec<usize> = mask
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();

    let mut observed = clean.hadamard(&mask)?;
    let mut noise_gen = rng::stream(spec.seed, "noise");
    match spec.noise {
        NoiseKind::None => {}
        NoiseKind::Gaussian(var) => {
            let sd = var.sqrt();
            for &p in &support {
                let n: f64 = noise_gen.sample(StandardNormal);
                observed.values_mut()[p] += sd * n;
            }
        }
        NoiseKind::Gmm(var_a, var_b, gamma) => {
            let (sd_a, sd_b) = (var_a.sqrt(), var_b.sqrt());
            for &p in &support {
                let outlier = noise_gen.random::<f64>() < gamma;
                let n: f64 = noise_gen.sample(StandardNormal);
                observed.values_mut()[p] += if outlier { sd_b * n } else { sd_a * n };
            }
        }
        NoiseKind::SaltPepper(gamma) => {
            let count = (gamma * support.len() as f64).round() as usize;
            let mut pool = support.clone();
            for p in choose_without_replacement(&mut pool, count, &mut noise_gen) {
                observed.values_mut()[p] = if noise_gen.random::<bool>() { 1.0 } else { 0.0 };
            }
        }
        NoiseKind::RandomValue(gamma) => {
            let count = (gamma * support.len() as f64).round() as usize;
            let mut pool = support.clone();
            for p in choose_without_replacement(&mut pool, count, &mut noise_gen) {
                observed.values_mut()[p] = noise_gen.random::<f64>();
            }
        }
    }
    Ok((observed, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(dims: &[usize]) -> DenseTensor {
        crate::synth::synthetic_image(dims[0], dims[1], dims[2], 4).unwrap()
    }

    #[test]
    fn full_observation_no_noise_is_identity() {
        let t = clean(&[12, 10, 3]);
        let spec = CorruptionSpec {
            mask: MaskKind::Uniform(1.0),
            noise: NoiseKind::None,
            seed: 1,
        };
        let (obs, mask) = corrupt(&t, &spec).unwrap();
        assert_eq!(obs, t);
        assert_eq!(mask.count_nonzero(), t.len());
    }

    #[test]
    fn uniform_mask_has_exact_count() {
        let t = clean(&[20, 15, 3]);
        for p in [0.0, 0.3, 0.5, 0.77, 1.0] {
            let spec = CorruptionSpec {
                mask: MaskKind::Uniform(p),
                noise: NoiseKind::None,
                seed: 9,
            };
            let (_, mask) = corrupt(&t, &spec).unwrap();
            let expected = (p * t.len() as f64).round() as usize;
            assert_eq!(mask.count_nonzero(), expected);
        }
    }

    #[test]
    fn corruption_is_deterministic_per_seed() {
        let t = clean(&[16, 16, 3]);
        let spec = CorruptionSpec {
            mask: MaskKind::Uniform(0.6),
            noise: NoiseKind::Gmm(0.001, 0.25, 0.4),
            seed: 33,
        };
        let (o1, m1) = corrupt(&t, &spec).unwrap();
        let (o2, m2) = corrupt(&t, &spec).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(m1, m2);
        let other = CorruptionSpec { seed: 34, ..spec };
        let (o3, _) = corrupt(&t, &other).unwrap();
        assert_ne!(o1, o3);
    }

    #[test]
    fn noise_only_touches_support() {
        let t = clean(&[14, 14, 3]);
        let spec = CorruptionSpec {
            mask: MaskKind::Uniform(0.5),
            noise: NoiseKind::Gaussian(0.04),
            seed: 5,
        };
        let (obs, mask) = corrupt(&t, &spec).unwrap();
        for ((o, m), c) in obs.values().iter().zip(mask.values()).zip(t.values()) {
            if *m == 0.0 {
                assert_eq!(*o, 0.0);
            } else {
                // observed entries moved but stay near the clean value
                assert!((o - c).abs() < 1.5);
            }
        }
    }

    #[test]
    fn gmm_with_zero_gamma_is_pure_gaussian_variance() {
        let t = DenseTensor::full(&[50, 50, 40], 0.5).unwrap();
        let spec = CorruptionSpec {
            mask: MaskKind::Uniform(1.0),
            noise: NoiseKind::Gmm(0.01, 0.25, 0.0),
            seed: 6,
        };
        let (obs, _) = corrupt(&t, &spec).unwrap();
        let var = obs
            .values()
            .iter()
            .zip(t.values())
            .map(|(o, c)| (o - c) * (o - c))
            .sum::<f64>()
            / t.len() as f64;
        assert!((var - 0.01).abs() < 0.0005, "variance {var}");
    }

    #[test]
    fn salt_pepper_hits_exact_fraction_with_extreme_values() {
        let t = DenseTensor::full(&[30, 30, 3], 0.5).unwrap();
        let spec = CorruptionSpec {
            mask: MaskKind::Uniform(1.0),
            noise: NoiseKind::SaltPepper(0.3),
            seed: 7,
        };
        let (obs, _) = corrupt(&t, &spec).unwrap();
        let hit: Vec<f64> = obs
            .values()
            .iter()
            .filter(|&&v| v != 0.5)
            .cloned()
            .collect();
        assert_eq!(hit.len(), (0.3 * t.len() as f64).round() as usize);
        assert!(hit.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn random_value_replacements_stay_in_unit_interval() {
        let t = DenseTensor::full(&[20, 20, 3], -2.0).unwrap();
        let spec = CorruptionSpec {
            mask: MaskKind::Uniform(1.0),
            noise: NoiseKind::RandomValue(0.25),
            seed: 8,
        };
        let (obs, _) = corrupt(&t, &spec).unwrap();
        let replaced: Vec<f64> = obs
            .values()
            .iter()
            .filter(|&&v| v != -2.0)
            .cloned()
            .collect();
        assert_eq!(replaced.len(), (0.25 * t.len() as f64).round() as usize);
        assert!(replaced.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn missing_rows_removes_whole_rows() {
        let t = clean(&[10, 8, 3]);
        let spec = CorruptionSpec {
            mask: MaskKind::MissingRows(0.3),
            noise: NoiseKind::None,
            seed: 11,
        };
        let (_, mask) = corrupt(&t, &spec).unwrap();
        let mut missing_rows = 0;
        for r in 1..=10usize {
            let all_zero = (1..=8).all(|c| {
                (1..=3).all(|ch| mask.get(&[r, c, ch]).unwrap() == 0.0)
            });
            let all_one = (1..=8).all(|c| {
                (1..=3).all(|ch| mask.get(&[r, c, ch]).unwrap() == 1.0)
            });
            assert!(all_zero || all_one, "row {r} is partially masked");
            if all_zero {
                missing_rows += 1;
            }
        }
        assert_eq!(missing_rows, 3);
    }

    #[test]
    fn watermark_is_static_across_channels() {
        let t = clean(&[40, 50, 3]);
        let spec = CorruptionSpec {
            mask: MaskKind::Watermark,
            noise: NoiseKind::None,
            seed: 12,
        };
        let (_, mask) = corrupt(&t, &spec).unwrap();
        let occluded = t.len() - mask.count_nonzero();
        assert!(occluded > 0, "watermark occluded nothing");
        for r in 1..=40usize {
            for c in 1..=50 {
                let v1 = mask.get(&[r, c, 1]).unwrap();
                assert_eq!(mask.get(&[r, c, 2]).unwrap(), v1);
                assert_eq!(mask.get(&[r, c, 3]).unwrap(), v1);
            }
        }
    }

    #[test]
    fn moving_watermark_translates_over_frames() {
        let dims = [30usize, 40, 3, 5];
        let t = DenseTensor::full(&dims, 0.5).unwrap();
        let spec = CorruptionSpec {
            mask: MaskKind::MovingWatermark,
            noise: NoiseKind::None,
            seed: 13,
        };
        let (_, mask) = corrupt(&t, &spec).unwrap();
        // first frame occludes near the top-left, last near the bottom-right
        assert_eq!(mask.get(&[1, 3, 1, 1]).unwrap(), 0.0);
        assert_ne!(mask.get(&[1, 3, 1, 5]).unwrap(), 0.0);
        let frames_differ = (1..=30).any(|r| {
            (1..=40).any(|c| {
                mask.get(&[r, c, 1, 1]).unwrap() != mask.get(&[r, c, 1, 5]).unwrap()
            })
        });
        assert!(frames_differ);
    }

    #[test]
    fn raindrop_streaks_are_vertical_and_per_frame() {
        let dims = [24usize, 24, 3, 4];
        let t = DenseTensor::full(&dims, 0.5).unwrap();
        let spec = CorruptionSpec {
            mask: MaskKind::Raindrop,
            noise: NoiseKind::None,
            seed: 14,
        };
        let (_, mask) = corrupt(&t, &spec).unwrap();
        assert!(mask.count_nonzero() < t.len());
        let frames_differ = (1..=24).any(|r| {
            (1..=24).any(|c| {
                mask.get(&[r, c, 1, 1]).unwrap() != mask.get(&[r, c, 1, 4]).unwrap()
            })
        });
        assert!(frames_differ);
    }

    #[test]
    fn parse_roundtrips() {
        for s in [
            "uniform:0.5",
            "missing-rows:0.3",
            "watermark",
            "moving-watermark",
            "raindrop",
        ] {
            let kind = MaskKind::parse(s).unwrap();
            assert_eq!(MaskKind::parse(&kind.to_string()).unwrap(), kind);
        }
        for s in [
            "none",
            "gaussian:0.01",
            "gmm:0.001,0.25,0.5",
            "salt-pepper:0.3",
            "random-value:0.25",
        ] {
            let kind = NoiseKind::parse(s).unwrap();
            assert_eq!(NoiseKind::parse(&kind.to_string()).unwrap(), kind);
        }
        assert!(MaskKind::parse("uniform:1.5").is_err());
        assert!(MaskKind::parse("bogus").is_err());
        assert!(NoiseKind::parse("gmm:1,2").is_err());
    }
}
