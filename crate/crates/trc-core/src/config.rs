//! Flat key=value run configuration.
//!
//! One `key=value` pair per line, '#' starts a comment, unknown keys are
//! rejected. Defaults correspond to the bundled experiment settings
//! (mu0=1e-4, lambda twice mu*N, alpha=1.1, epsilon=1e-3, Cauchy loss with
//! eta=4 and c_min=0.15, 36/18 patches with jitter 2, sigma_w=0.3, w0=0.2).

use std::fmt::Write as _;
use std::path::Path;

use crate::c2f::{AggregateMode, C2fOptions, PatchPlan, RankRule};
use crate::corrupt::{CorruptionSpec, MaskKind, NoiseKind};
use crate::error::{Result, TrcError};
use crate::loss::{AdaptiveC, EstimatorFamily, QuantileMode};
use crate::solver::{LambdaMode, SolverConfig, Weighting};

/// Everything a pipeline run needs, file-serializable.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // paths
    pub input: Option<String>,
    pub mask_path: Option<String>,
    pub output: Option<String>,
    pub report: Option<String>,
    pub clean: Option<String>,
    pub results: Option<String>,

    // solver
    pub mu0: f64,
    pub lambda_mode: String, // "factor" | "absolute"
    pub lambda_factor: f64,
    pub lambda_abs: f64,
    pub alpha: f64,
    pub d: Option<usize>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub min_iters: usize,
    pub estimator: EstimatorFamily,
    pub eta: f64,
    pub c_min: f64,
    pub quantile_mode: QuantileMode,
    pub weighting: Weighting,
    pub ranks: Option<Vec<usize>>,
    /// Per-mode objective weights; accepted for interface completeness but
    /// inert under the hard rank indicator.
    pub betas: Option<Vec<f64>>,

    // rank rule
    pub global_rank_coeff: f64,
    pub local_rank_coeff: f64,

    // patches
    pub patch_size: usize,
    pub patch_overlap: usize,
    pub jitter: usize,
    pub sigma_w: f64,
    pub w0: f64,
    pub aggregate: AggregateMode,

    // pipeline
    pub reshape: Option<Vec<usize>>,
    pub workers: usize,

    // corruption
    pub mask_kind: MaskKind,
    pub noise_kind: NoiseKind,
    pub seed: u64,

    // monte carlo
    pub runs: usize,
    pub record_wall_time: bool,
    pub save_tensors: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            mask_path: None,
            output: None,
            report: None,
            clean: None,
            results: None,
            mu0: 1e-4,
            lambda_mode: "factor".into(),
            lambda_factor: 2.0,
            lambda_abs: 1.0,
            alpha: 1.1,
            d: None,
            epsilon: 1e-3,
            max_iters: 300,
            min_iters: 10,
            estimator: EstimatorFamily::Cauchy,
            eta: 4.0,
            c_min: 0.15,
            quantile_mode: QuantileMode::Magnitude,
            weighting: Weighting::HalfQuadratic,
            ranks: None,
            betas: None,
            global_rank_coeff: 0.2,
            local_rank_coeff: 0.5,
            patch_size: 36,
            patch_overlap: 18,
            jitter: 2,
            sigma_w: 0.3,
            w0: 0.2,
            aggregate: AggregateMode::CenterSlice,
            reshape: None,
            workers: 0,
            mask_kind: MaskKind::Uniform(0.5),
            noise_kind: NoiseKind::None,
            seed: 0,
            runs: 20,
            record_wall_time: true,
            save_tensors: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| TrcError::Config(format!("cannot parse value '{value}' for key '{key}'")))
}

fn parse_usize_list(value: &str, key: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse_num::<usize>(s, key))
        .collect()
}

impl RunConfig {
    /// Parse the key=value text, rejecting unknown keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrcError::Config(format!("line {}: expected key=value, got '{raw}'", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = Some(value.to_string()),
            "mask" => self.mask_path = Some(value.to_string()),
            "output" => self.output = Some(value.to_string()),
            "report" => self.report = Some(value.to_string()),
            "clean" => self.clean = Some(value.to_string()),
            "results" => self.results = Some(value.to_string()),
            "mu0" => self.mu0 = parse_num(value, key)?,
            "lambda_mode" => match value {
                "factor" | "absolute" => self.lambda_mode = value.to_string(),
                _ => {
                    return Err(TrcError::Config(format!(
                        "lambda_mode must be 'factor' or 'absolute', got '{value}'"
                    )))
                }
            },
            "lambda_factor" => self.lambda_factor = parse_num(value, key)?,
            "lambda_abs" => self.lambda_abs = parse_num(value, key)?,
            "alpha" => self.alpha = parse_num(value, key)?,
            "d" => {
                self.d = if value == "auto" {
                    None
                } else {
                    Some(parse_num(value, key)?)
                }
            }
            "epsilon" => self.epsilon = parse_num(value, key)?,
            "max_iters" => self.max_iters = parse_num(value, key)?,
            "min_iters" => self.min_iters = parse_num(value, key)?,
            "estimator" => self.estimator = EstimatorFamily::parse(value)?,
            "eta" => self.eta = parse_num(value, key)?,
            "c_min" => self.c_min = parse_num(value, key)?,
            "quantile_mode" => {
                self.quantile_mode = match value {
                    "magnitude" => QuantileMode::Magnitude,
                    "signed" => QuantileMode::Signed,
                    _ => {
                        return Err(TrcError::Config(format!(
                            "quantile_mode must be 'magnitude' or 'signed', got '{value}'"
                        )))
                    }
                }
            }
            "weighting" => {
                self.weighting = match value {
                    "hq" => Weighting::HalfQuadratic,
                    "uniform" => Weighting::Uniform,
                    _ => {
                        return Err(TrcError::Config(format!(
                            "weighting must be 'hq' or 'uniform', got '{value}'"
                        )))
                    }
                }
            }
            "ranks" => {
                self.ranks = if value == "auto" {
                    None
                } else {
                    Some(parse_usize_list(value, key)?)
                }
            }
            "betas" => {
                self.betas = if value == "none" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|v| parse_num::<f64>(v, key))
                            .collect::<Result<Vec<f64>>>()?,
                    )
                }
            }
            "global_rank_coeff" => self.global_rank_coeff = parse_num(value, key)?,
            "local_rank_coeff" => self.local_rank_coeff = parse_num(value, key)?,
            "patch_size" => self.patch_size = parse_num(value, key)?,
            "patch_overlap" => self.patch_overlap = parse_num(value, key)?,
            "jitter" => self.jitter = parse_num(value, key)?,
            "sigma_w" => {
                self.sigma_w = if value == "inf" {
                    f64::INFINITY
                } else {
                    parse_num(value, key)?
                }
            }
            "w0" => self.w0 = parse_num(value, key)?,
            "aggregate" => {
                self.aggregate = match value {
                    "center" => AggregateMode::CenterSlice,
                    "shifted" => AggregateMode::AllSlices,
                    _ => {
                        return Err(TrcError::Config(format!(
                            "aggregate must be 'center' or 'shifted', got '{value}'"
                        )))
                    }
                }
            }
            "reshape" => {
                self.reshape = if value == "none" {
                    None
                } else {
                    Some(parse_usize_list(value, key)?)
                }
            }
            "workers" => self.workers = parse_num(value, key)?,
            "mask_kind" => self.mask_kind = MaskKind::parse(value)?,
            "noise_kind" => self.noise_kind = NoiseKind::parse(value)?,
            "seed" => self.seed = parse_num(value, key)?,
            "runs" => self.runs = parse_num(value, key)?,
            "timing" => {
                self.record_wall_time = match value {
                    "wall" => true,
                    "none" => false,
                    _ => {
                        return Err(TrcError::Config(format!(
                            "timing must be 'wall' or 'none', got '{value}'"
                        )))
                    }
                }
            }
            "save_tensors" => self.save_tensors = parse_num(value, key)?,
            other => return Err(TrcError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Serialize back into the flat text format (defaults included).
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        if let Some(v) = &self.input {
            kv("input", v.clone());
        }
        if let Some(v) = &self.mask_path {
            kv("mask", v.clone());
        }
        if let Some(v) = &self.output {
            kv("output", v.clone());
        }
        if let Some(v) = &self.report {
            kv("report", v.clone());
        }
        if let Some(v) = &self.clean {
            kv("clean", v.clone());
        }
        if let Some(v) = &self.results {
            kv("results", v.clone());
        }
        kv("mu0", format!("{}", self.mu0));
        kv("lambda_mode", self.lambda_mode.clone());
        kv("lambda_factor", format!("{}", self.lambda_factor));
        kv("lambda_abs", format!("{}", self.lambda_abs));
        kv("alpha", format!("{}", self.alpha));
        kv("d", self.d.map_or("auto".into(), |d| d.to_string()));
        kv("epsilon", format!("{}", self.epsilon));
        kv("max_iters", format!("{}", self.max_iters));
        kv("min_iters", format!("{}", self.min_iters));
        kv("estimator", self.estimator.name().to_string());
        kv("eta", format!("{}", self.eta));
        kv("c_min", format!("{}", self.c_min));
        kv(
            "quantile_mode",
            match self.quantile_mode {
                QuantileMode::Magnitude => "magnitude".into(),
                QuantileMode::Signed => "signed".into(),
            },
        );
        kv(
            "weighting",
            match self.weighting {
                Weighting::HalfQuadratic => "hq".into(),
                Weighting::Uniform => "uniform".into(),
            },
        );
        kv(
            "ranks",
            self.ranks.as_ref().map_or("auto".into(), |r| {
                r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            }),
        );
        kv(
            "betas",
            self.betas.as_ref().map_or("none".into(), |r| {
                r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            }),
        );
        kv("global_rank_coeff", format!("{}", self.global_rank_coeff));
        kv("local_rank_coeff", format!("{}", self.local_rank_coeff));
        kv("patch_size", format!("{}", self.patch_size));
        kv("patch_overlap", format!("{}", self.patch_overlap));
        kv("jitter", format!("{}", self.jitter));
        kv(
            "sigma_w",
            if self.sigma_w.is_infinite() {
                "inf".into()
            } else {
                format!("{}", self.sigma_w)
            },
        );
        kv("w0", format!("{}", self.w0));
        kv(
            "aggregate",
            match self.aggregate {
                AggregateMode::CenterSlice => "center".into(),
                AggregateMode::AllSlices => "shifted".into(),
            },
        );
        kv(
            "reshape",
            self.reshape.as_ref().map_or("none".into(), |r| {
                r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            }),
        );
        kv("workers", format!("{}", self.workers));
        kv("mask_kind", self.mask_kind.to_string());
        kv("noise_kind", self.noise_kind.to_string());
        kv("seed", format!("{}", self.seed));
        kv("runs", format!("{}", self.runs));
        kv(
            "timing",
            if self.record_wall_time { "wall" } else { "none" }.into(),
        );
        kv("save_tensors", format!("{}", self.save_tensors));
        s
    }

    /// Solver configuration; ranks stay empty unless pinned (the pipeline
    /// fills them from the rank rule).
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            mu0: self.mu0,
            lambda: if self.lambda_mode == "absolute" {
                LambdaMode::Absolute(self.lambda_abs)
            } else {
                LambdaMode::FactorOfMuN(self.lambda_factor)
            },
            alpha: self.alpha,
            d: self.d,
            ranks: self.ranks.clone().unwrap_or_default(),
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            min_iters: self.min_iters,
            estimator: self.estimator,
            adaptive: AdaptiveC {
                eta: self.eta,
                c_min: self.c_min,
                quantile_mode: self.quantile_mode,
            },
            betas: self.betas.clone(),
            weighting: self.weighting,
        }
    }

    pub fn patch_plan(&self) -> PatchPlan {
        PatchPlan {
            m: self.patch_size,
            o: self.patch_overlap,
            l: self.jitter,
            sigma_w: self.sigma_w,
            w0: self.w0,
        }
    }

    pub fn rank_rule(&self) -> RankRule {
        RankRule {
            global_coeff: self.global_rank_coeff,
            local_coeff: self.local_rank_coeff,
        }
    }

    pub fn corruption_spec(&self) -> CorruptionSpec {
        CorruptionSpec {
            mask: self.mask_kind,
            noise: self.noise_kind,
            seed: self.seed,
        }
    }

    pub fn c2f_options(&self) -> C2fOptions {
        C2fOptions {
            global_reshape: self.reshape.clone(),
            aggregate: self.aggregate,
        }
    }
}
