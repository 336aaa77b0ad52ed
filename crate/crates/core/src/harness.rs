//! Experiment configuration, Monte-Carlo evaluation, parameter sweeps, and
//! the named presets behind the `reproduce` command.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::SystemOperator;
use crate::design::{
    self, AlphaMode, BaselineKind, DesignResult, SolverDiag, SolverOpts,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{
    binomial, ChannelSpec, CovarianceMode, MacMode, MultiTerminalSpec, SourceModel,
    SupportCollection, SupportSet, SystemSpec,
};
use crate::recon::{self, DecodeResult};
use crate::rng::Stream;

/// Default cap on the sampled support collection Ω′.
pub const OMEGA_PRIME_CAP: usize = 2500;

/// Default draw count for the randomized Bayesian decoder.
pub const DEFAULT_N_DRAWS: usize = 20;

/// Default candidate count for the randomization design.
pub const DEFAULT_N_RAND: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    Single,
    Orthogonal,
    Coherent,
}

impl Setup {
    pub fn name(self) -> &'static str {
        match self {
            Setup::Single => "single",
            Setup::Orthogonal => "orthogonal",
            Setup::Coherent => "coherent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Omp,
    RandomOmp,
    Oracle,
    Exhaustive,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Omp => "omp",
            DecoderKind::RandomOmp => "random_omp",
            DecoderKind::Oracle => "oracle",
            DecoderKind::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    M,
    #[serde(rename = "P_dB")]
    PDb,
    #[serde(rename = "CSNR")]
    Csnr,
    #[serde(rename = "gain_ratio")]
    GainRatio,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "M",
            SweepAxis::PDb => "P_dB",
            SweepAxis::Csnr => "CSNR",
            SweepAxis::GainRatio => "gain_ratio",
        }
    }
}

/// Scalar-or-list measurement count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasurementSpec {
    One(usize),
    Many(Vec<usize>),
}

impl MeasurementSpec {
    pub fn values(&self) -> Vec<usize> {
        match self {
            MeasurementSpec::One(m) => vec![*m],
            MeasurementSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub sigma_w: f64,
    #[serde(default)]
    pub sigma_v: f64,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub g1: Option<f64>,
    #[serde(default)]
    pub g2: Option<f64>,
    #[serde(rename = "P_dB")]
    pub p_db: f64,
    #[serde(rename = "M")]
    pub m: MeasurementSpec,
    pub trials: usize,
    pub seed: u64,
    pub setup: Setup,
    pub designs: Vec<String>,
    pub decoder: DecoderKind,
    #[serde(default)]
    pub omega_prime_size: Option<usize>,
    pub sweep_axis: SweepAxis,
    #[serde(default)]
    pub axis_values: Option<Vec<f64>>,
    #[serde(default)]
    pub n_rand: Option<usize>,
}

fn default_experiment() -> String {
    "custom".to_string()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("config parse: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn gains(&self) -> Result<[f64; 2]> {
        match self.setup {
            Setup::Single => {
                let g = self.g.or(self.g1).ok_or_else(|| {
                    Error::Validation("single setup needs a channel gain g".into())
                })?;
                Ok([g, g])
            }
            _ => {
                let g1 = self.g1.or(self.g).ok_or_else(|| {
                    Error::Validation("multi-terminal setup needs g1".into())
                })?;
                let g2 = self.g2.ok_or_else(|| {
                    Error::Validation("multi-terminal setup needs g2".into())
                })?;
                Ok([g1, g2])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(Error::Validation("need 0 < K < N".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Validation("rho must lie in [0, 1)".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::Validation("at least one design tag required".into()));
        }
        self.gains()?;
        let axis = self.axis_points()?;
        if axis.is_empty() {
            return Err(Error::Validation("empty sweep axis".into()));
        }
        for w in axis.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation("sweep values must be strictly increasing".into()));
            }
        }
        if self.sweep_axis != SweepAxis::M && self.m.values().len() != 1 {
            return Err(Error::Validation(
                "M must be a scalar when sweeping another axis".into(),
            ));
        }
        for tag in &self.designs {
            parse_design_tag(tag, self.setup)?;
        }
        Ok(())
    }

    pub fn axis_points(&self) -> Result<Vec<f64>> {
        match self.sweep_axis {
            SweepAxis::M => Ok(self.m.values().iter().map(|&m| m as f64).collect()),
            _ => self
                .axis_values
                .clone()
                .ok_or_else(|| Error::Validation("axis_values required for this sweep axis".into())),
        }
    }

    pub fn power_linear(&self) -> f64 {
        10f64.powf(self.p_db / 10.0)
    }
}

/// One emitted result row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub experiment: String,
    pub setup: String,
    pub design: String,
    pub decoder: String,
    pub axis_name: String,
    pub axis_value: f64,
    pub m: usize,
    pub p_db: f64,
    pub csnr: f64,
    pub trials: usize,
    pub seed: u64,
    pub nmse_db: f64,
    pub support_recovery: f64,
    pub lb_db: f64,
    pub wall_ms: u64,
}

/// A resolved sweep point: the scalar system parameters at one axis value.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub m: usize,
    pub p: f64,
    pub p_db: f64,
    pub g: [f64; 2],
}

pub fn resolve_point(cfg: &ExperimentConfig, axis_value: f64) -> Result<SweepPoint> {
    let base_g = cfg.gains()?;
    let mut point = SweepPoint {
        axis_value,
        m: cfg.m.values()[0],
        p: cfg.power_linear(),
        p_db: cfg.p_db,
        g: base_g,
    };
    match cfg.sweep_axis {
        SweepAxis::M => point.m = axis_value as usize,
        SweepAxis::PDb => {
            point.p_db = axis_value;
            point.p = 10f64.powf(axis_value / 10.0);
        }
        SweepAxis::Csnr => {
            let g = (axis_value).sqrt() * cfg.sigma_w;
            point.g = [g, g];
        }
        SweepAxis::GainRatio => point.g = [base_g[0], base_g[0] * axis_value],
    }
    Ok(point)
}

/// The effective setup and method of one design tag. Tags may carry a setup
/// override prefix, e.g. `single:procedure1` or `coherent:alpha_opt`, for
/// experiments that compare setups side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignTag {
    pub setup: Setup,
    pub method: DesignMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignMethod {
    Procedure1,
    Randomization,
    Gaussian,
    TightFrame,
    LmmseMin,
    AlphaOpt,
    AlphaEq,
}

pub fn parse_design_tag(tag: &str, default_setup: Setup) -> Result<DesignTag> {
    let (setup, method_str) = match tag.split_once(':') {
        Some((s, m)) => {
            let setup = match s {
                "single" => Setup::Single,
                "orthogonal" => Setup::Orthogonal,
                "coherent" => Setup::Coherent,
                other => {
                    return Err(Error::Validation(format!("unknown setup prefix '{}'", other)))
                }
            };
            (setup, m)
        }
        None => (default_setup, tag),
    };
    let method = match method_str {
        "procedure1" => DesignMethod::Procedure1,
        "randomization" => DesignMethod::Randomization,
        "gaussian" => DesignMethod::Gaussian,
        "tight_frame" => DesignMethod::TightFrame,
        "lmmse_min" => DesignMethod::LmmseMin,
        "alpha_opt" => DesignMethod::AlphaOpt,
        "alpha_eq" => DesignMethod::AlphaEq,
        other => return Err(Error::Validation(format!("unknown design tag '{}'", other))),
    };
    let is_mac_method = matches!(method, DesignMethod::AlphaOpt | DesignMethod::AlphaEq);
    let is_mac_setup = setup != Setup::Single;
    if is_mac_method != is_mac_setup {
        return Err(Error::Validation(format!(
            "design '{}' does not fit setup '{}'",
            tag,
            setup.name()
        )));
    }
    Ok(DesignTag { setup, method })
}

/// Shared problem data for one experiment (axis-independent).
pub struct ProblemData {
    pub r: Matrix,
    pub r_x: Matrix,
    pub model: SourceModel,
    pub supports: SupportCollection,
}

pub fn problem_data(cfg: &ExperimentConfig) -> Result<ProblemData> {
    let r = crate::model::exponential_covariance(cfg.k, cfg.rho, 1.0)?;
    let model = SourceModel::new(cfg.n, cfg.k, r.clone())?;
    // Sample covariance, not the analytic one: the design problem is invariant
    // under coordinate permutations, so with an exact R_x the relaxed gram has a
    // degenerate spectrum and its eigenbasis collapses onto coordinate axes,
    // turning the factored design into plain subsampling. Sampling noise breaks
    // the symmetry and yields a spread eigenbasis.
    let r_x = crate::model::source_covariance(
        &model,
        CovarianceMode::Sampled { n_samples: 100_000, seed: cfg.seed ^ 0x5258_5341 },
    )?;
    let cap = cfg.omega_prime_size.unwrap_or(OMEGA_PRIME_CAP);
    let count = binomial(cfg.n, cfg.k);
    let supports = if count <= cap as u128 {
        SupportCollection::exact(cfg.n, cfg.k)?
    } else {
        // The sampled Ω′ is shared between design and reporting.
        let mut stream = Stream::substream(cfg.seed ^ 0xA11C_E0DE, 0);
        SupportCollection::sampled(cfg.n, cfg.k, cap, &mut stream)?
    };
    Ok(ProblemData { r, r_x, model, supports })
}

fn channel_spec(cfg: &ExperimentConfig, m: usize, g: f64, p: f64) -> Result<ChannelSpec> {
    ChannelSpec::new(Matrix::identity(cfg.n), g, cfg.sigma_v, cfg.sigma_w, m, p)
}

pub fn build_system(cfg: &ExperimentConfig, point: &SweepPoint, setup: Setup) -> Result<SystemSpec> {
    match setup {
        Setup::Single => Ok(SystemSpec::Single(channel_spec(cfg, point.m, point.g[0], point.p)?)),
        Setup::Orthogonal | Setup::Coherent => {
            // Per-terminal budgets are placeholders; only the total matters.
            let t1 = channel_spec(cfg, point.m, point.g[0], point.p / 2.0)?;
            let t2 = channel_spec(cfg, point.m, point.g[1], point.p / 2.0)?;
            let mode = if setup == Setup::Orthogonal { MacMode::Orthogonal } else { MacMode::Coherent };
            Ok(SystemSpec::Multi(MultiTerminalSpec::new([t1, t2], mode, point.p)?))
        }
    }
}

/// Cross-point solver state: relaxed Grams (reusable verbatim on M sweeps)
/// and raw iterates (warm starts elsewhere).
#[derive(Default)]
pub struct SweepState {
    grams: HashMap<String, (Vec<Matrix>, SolverDiag)>,
    warm: HashMap<String, Vec<f64>>,
}

impl SweepState {
    pub fn new() -> Self {
        Self::default()
    }
}

fn design_seed(cfg: &ExperimentConfig, salt: u64) -> u64 {
    cfg.seed ^ salt
}

/// Builds one design at one sweep point, reusing solver state when valid.
pub fn build_design(
    cfg: &ExperimentConfig,
    data: &ProblemData,
    point: &SweepPoint,
    tag: &str,
    state: &mut SweepState,
) -> Result<(Setup, DesignResult)> {
    let parsed = parse_design_tag(tag, cfg.setup)?;
    let sys = build_system(cfg, point, parsed.setup)?;
    // Large support collections get a looser conic tolerance: design quality
    // is insensitive to it well before the Monte-Carlo noise floor.
    let opts = if data.supports.sets.len() > 600 {
        SolverOpts { tol: 1e-5, max_iter: 30_000 }
    } else {
        SolverOpts::default()
    };
    // The relaxation does not depend on M, so Grams cache across an M sweep.
    let gram_reusable = cfg.sweep_axis == SweepAxis::M;
    let result = match (&sys, parsed.method) {
        (SystemSpec::Single(spec), DesignMethod::Procedure1) => {
            let key = format!("{}:p1", parsed.setup.name());
            let (q, diag) = cached_single_gram(data, spec, &key, gram_reusable, opts, state)?;
            design::procedure1_from_gram(&q, spec, &data.r, &data.r_x, &data.supports, Some(diag))?
        }
        (SystemSpec::Single(spec), DesignMethod::Randomization) => {
            let key = format!("{}:p1", parsed.setup.name());
            let (q, _diag) = cached_single_gram(data, spec, &key, gram_reusable, opts, state)?;
            let n_rand = cfg.n_rand.unwrap_or(DEFAULT_N_RAND);
            design::design_randomization(
                spec,
                &data.r,
                &data.r_x,
                &data.supports,
                n_rand,
                design_seed(cfg, 0x52414e44),
                Some(&q),
                opts,
            )?
        }
        (SystemSpec::Single(spec), DesignMethod::Gaussian) => design::design_baseline(
            BaselineKind::Gaussian,
            spec,
            &data.r,
            &data.r_x,
            &data.supports,
            design_seed(cfg, 0x47415553),
            opts,
        )?,
        (SystemSpec::Single(spec), DesignMethod::TightFrame) => design::design_baseline(
            BaselineKind::TightFrame,
            spec,
            &data.r,
            &data.r_x,
            &data.supports,
            design_seed(cfg, 0x54464d45),
            opts,
        )?,
        (SystemSpec::Single(spec), DesignMethod::LmmseMin) => design::design_baseline(
            BaselineKind::LmmseMin,
            spec,
            &data.r,
            &data.r_x,
            &data.supports,
            design_seed(cfg, 0x4c4d4d53),
            opts,
        )?,
        (SystemSpec::Multi(mspec), DesignMethod::AlphaOpt | DesignMethod::AlphaEq) => {
            let key = format!("{}:mac:{:.9}:{:.9}:{:.9}", parsed.setup.name(), point.g[0], point.g[1], point.p);
            let (grams, diag) = if gram_reusable {
                if let Some((g, d)) = state.grams.get(&key) {
                    (g.clone(), d.clone())
                } else {
                    let warm = state.warm.get(&key).map(|v| v.as_slice());
                    let (g, d, raw) =
                        design::mac_grams(mspec, &data.r, &data.r_x, &data.supports, opts, warm)?;
                    state.grams.insert(key.clone(), (g.clone(), d.clone()));
                    state.warm.insert(key.clone(), raw);
                    (g, d)
                }
            } else {
                let wkey = format!("{}:mac", parsed.setup.name());
                let warm = state.warm.get(&wkey).map(|v| v.as_slice());
                let (g, d, raw) =
                    design::mac_grams(mspec, &data.r, &data.r_x, &data.supports, opts, warm)?;
                state.warm.insert(wkey, raw);
                (g, d)
            };
            let alpha = if parsed.method == DesignMethod::AlphaOpt {
                AlphaMode::Optimized
            } else {
                AlphaMode::Equal
            };
            design::design_mac_from_grams(
                mspec,
                &grams,
                &data.r,
                &data.r_x,
                &data.supports,
                alpha,
                opts,
                Some(diag),
                None,
            )?
        }
        _ => return Err(Error::Validation(format!("design '{}' incompatible with setup", tag))),
    };
    Ok((parsed.setup, result))
}

fn cached_single_gram(
    data: &ProblemData,
    spec: &ChannelSpec,
    key: &str,
    reusable: bool,
    opts: SolverOpts,
    state: &mut SweepState,
) -> Result<(Matrix, SolverDiag)> {
    let full_key = format!("{}:{:.9}:{:.9}:{:.9}", key, spec.g, spec.p, spec.sigma_w);
    if reusable {
        if let Some((g, d)) = state.grams.get(&full_key) {
            return Ok((g[0].clone(), d.clone()));
        }
    }
    let warm = state.warm.get(key).map(|v| v.as_slice());
    let (q, diag, raw) =
        design::procedure1_gram(spec, &data.r, &data.r_x, &data.supports, opts, warm)?;
    state.warm.insert(key.to_string(), raw);
    if reusable {
        state.grams.insert(full_key, (vec![q.clone()], diag.clone()));
    }
    Ok((q, diag))
}

/// Everything a trial needs, fixed per (point, design).
pub struct EvalContext {
    pub sys: SystemSpec,
    pub matrices: Vec<Matrix>,
    pub r: Matrix,
    pub r_inv: Matrix,
    pub model: SourceModel,
    pub decoder: DecoderKind,
    pub eff_b: Matrix,
    pub whitener: Option<Matrix>,
    pub op: SystemOperator,
    pub full_supports: Option<SupportCollection>,
    pub seed: u64,
    pub n_draws: usize,
    pub k: usize,
}

impl EvalContext {
    pub fn new(
        cfg: &ExperimentConfig,
        data: &ProblemData,
        sys: &SystemSpec,
        design: &DesignResult,
    ) -> Result<Self> {
        let matrices = design.matrices.clone();
        let (eff_b, whitener) = recon::effective_decoder_system(&matrices, sys)?;
        let op = SystemOperator::new(&matrices, sys)?;
        let r_inv = linalg::inv_spd(&data.r)?;
        let full_supports = if cfg.decoder == DecoderKind::Exhaustive {
            Some(SupportCollection::exact(cfg.n, cfg.k)?)
        } else {
            None
        };
        Ok(EvalContext {
            sys: sys.clone(),
            matrices,
            r: data.r.clone(),
            r_inv,
            model: data.model.clone(),
            decoder: cfg.decoder,
            eff_b,
            whitener,
            op,
            full_supports,
            seed: cfg.seed,
            n_draws: DEFAULT_N_DRAWS,
            k: cfg.k,
        })
    }
}

fn top_k_support(x_hat: &[f64], k: usize) -> SupportSet {
    let mut idx: Vec<usize> = (0..x_hat.len()).collect();
    idx.sort_by(|&a, &b| {
        x_hat[b]
            .abs()
            .partial_cmp(&x_hat[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = idx.into_iter().take(k).collect();
    chosen.sort_unstable();
    SupportSet::new(chosen, x_hat.len()).expect("top-k support")
}

/// Forms the received vector for a trial: signal through the effective
/// system, plus per-terminal sensor noise and receiver noise.
fn received_vector(ctx: &EvalContext, x: &[f64], stream: &mut Stream) -> Vec<f64> {
    let mut y = ctx.eff_b.matvec(x);
    match &ctx.sys {
        SystemSpec::Single(spec) => {
            if spec.sigma_v > 0.0 {
                let v: Vec<f64> = (0..spec.l()).map(|_| spec.sigma_v * stream.normal()).collect();
                let av = ctx.matrices[0].matvec(&v);
                for (yi, ai) in y.iter_mut().zip(&av) {
                    *yi += spec.g * ai;
                }
            }
            for yi in y.iter_mut() {
                *yi += spec.sigma_w * stream.normal();
            }
        }
        SystemSpec::Multi(mspec) => {
            let mut offset = 0usize;
            for (t, term) in mspec.terminals.iter().enumerate() {
                if term.sigma_v > 0.0 {
                    let v: Vec<f64> =
                        (0..term.l()).map(|_| term.sigma_v * stream.normal()).collect();
                    let av = ctx.matrices[t].matvec(&v);
                    match mspec.mode {
                        MacMode::Orthogonal => {
                            for (i, ai) in av.iter().enumerate() {
                                y[offset + i] += term.g * ai;
                            }
                        }
                        MacMode::Coherent => {
                            for (i, ai) in av.iter().enumerate() {
                                y[i] += term.g * ai;
                            }
                        }
                    }
                }
                if mspec.mode == MacMode::Orthogonal {
                    for i in 0..term.m {
                        y[offset + i] += term.sigma_w * stream.normal();
                    }
                    offset += term.m;
                }
            }
            if mspec.mode == MacMode::Coherent {
                let sw = mspec.terminals[0].sigma_w;
                for yi in y.iter_mut() {
                    *yi += sw * stream.normal();
                }
            }
        }
    }
    y
}

/// Runs one Monte-Carlo trial: draw, transmit, decode. Returns the squared
/// error and the recovered-support fraction.
pub fn run_trial(ctx: &EvalContext, trial_index: u64) -> Result<(f64, f64)> {
    let mut stream = Stream::substream(ctx.seed, trial_index);
    let (s_true, x) = ctx.model.draw(&mut stream);
    let y = received_vector(ctx, &x, &mut stream);
    let decoded: DecodeResult = match ctx.decoder {
        DecoderKind::Omp => recon::omp(&y, &ctx.eff_b, ctx.k, ctx.whitener.as_ref())?,
        DecoderKind::RandomOmp => recon::random_omp(
            &y,
            &ctx.matrices,
            &ctx.sys,
            &ctx.r,
            ctx.n_draws,
            &mut stream,
            None,
        )?,
        DecoderKind::Oracle => {
            let x_hat = ctx.op.oracle_estimate(&ctx.r_inv, &s_true, &y)?;
            DecodeResult { x_hat, support_hat: Some(s_true.clone()), iterations: 1, pinv_fallback: false }
        }
        DecoderKind::Exhaustive => {
            let supports = ctx.full_supports.as_ref().ok_or_else(|| {
                Error::Validation("exhaustive decoder needs the full support set".into())
            })?;
            recon::exhaustive_mmse(&y, &ctx.matrices, &ctx.sys, &ctx.r, supports)?
        }
    };
    let se: f64 = decoded.x_hat.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
    let support_est = match &decoded.support_hat {
        Some(s) => s.clone(),
        None => top_k_support(&decoded.x_hat, ctx.k),
    };
    let frac = recon::support_match(&s_true, &support_est);
    Ok((se, frac))
}

/// Worker-thread count: CS_FORGE_THREADS overrides, otherwise all cores.
pub fn thread_count() -> usize {
    match std::env::var("CS_FORGE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n >= 1 => n,
        _ => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

/// Runs `f` over 0..n across threads; results come back indexed, so any
/// later reduction is order-deterministic regardless of thread count.
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = thread_count().min(n.max(1));
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    let mut results: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, slot) in results.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, out) in slot.iter_mut().enumerate() {
                    *out = Some(f(t * chunk + i));
                }
            });
        }
    });
    results.into_iter().map(|o| o.expect("worker filled slot")).collect()
}

/// Aggregates trials into one record. Trial failures above 1% abort the run.
pub fn run_monte_carlo(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    setup: Setup,
    design_tag: &str,
    design: &DesignResult,
    data: &ProblemData,
    sys: &SystemSpec,
) -> Result<SweepRecord> {
    let start = Instant::now();
    let ctx = EvalContext::new(cfg, data, sys, design)?;
    let outcomes = run_indexed(cfg.trials, |i| run_trial(&ctx, i as u64));
    let mut se_sum = 0.0;
    let mut match_sum = 0.0;
    let mut failures = Vec::new();
    for (i, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok((se, frac)) => {
                se_sum += se;
                match_sum += frac;
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.len() * 100 > cfg.trials {
        let (i, e) = &failures[0];
        return Err(Error::Solver(format!(
            "{} of {} trials failed; first failure at trial {}: {}",
            failures.len(),
            cfg.trials,
            i,
            e
        )));
    }
    let ok = cfg.trials - failures.len();
    let nmse = se_sum / ok as f64 / cfg.k as f64;
    let recovery = match_sum / ok as f64;
    let lb_db = 10.0 * (design.lb_value.value / cfg.k as f64).log10();
    Ok(SweepRecord {
        experiment: cfg.experiment.clone(),
        setup: setup.name().to_string(),
        design: design_tag.to_string(),
        decoder: cfg.decoder.name().to_string(),
        axis_name: cfg.sweep_axis.name().to_string(),
        axis_value: point.axis_value,
        m: point.m,
        p_db: point.p_db,
        csnr: point.g[0] * point.g[0] / (cfg.sigma_w * cfg.sigma_w),
        trials: cfg.trials,
        seed: cfg.seed,
        nmse_db: 10.0 * nmse.log10(),
        support_recovery: recovery,
        lb_db,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Sweep output: records plus emitted file paths when an output directory
/// was given.
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub csv_path: Option<PathBuf>,
    pub json_path: Option<PathBuf>,
}

pub fn run_sweep(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SweepOutput> {
    cfg.validate()?;
    let data = problem_data(cfg)?;
    let mut state = SweepState::new();
    let mut records = Vec::new();
    for axis_value in cfg.axis_points()? {
        let point = resolve_point(cfg, axis_value)?;
        for tag in &cfg.designs {
            let (setup, design) = build_design(cfg, &data, &point, tag, &mut state)
                .map_err(|e| Error::Solver(format!("design '{}' at {}={}: {}", tag, cfg.sweep_axis.name(), axis_value, e)))?;
            let sys = build_system(cfg, &point, setup)?;
            let record = run_monte_carlo(cfg, &point, setup, tag, &design, &data, &sys)?;
            records.push(record);
        }
    }
    let (csv_path, json_path) = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let csv = dir.join(format!("{}.csv", cfg.experiment));
            let json = dir.join(format!("{}.json", cfg.experiment));
            write_records_csv(&csv, &records)?;
            write_sidecar_json(&json, cfg, &records)?;
            (Some(csv), Some(json))
        }
        None => (None, None),
    };
    Ok(SweepOutput { records, csv_path, json_path })
}

fn fmt_f64(v: f64) -> String {
    format!("{:.6}", v)
}

pub const CSV_HEADER: &str = "experiment,setup,design,decoder,axis_name,axis_value,M,P_dB,CSNR,trials,seed,nmse_db,support_recovery,lb_db,wall_ms";

/// Records as CSV. `wall_ms` is written as 0 so output is byte-identical
/// across runs and thread counts; real timings live in the JSON sidecar.
pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},0\n",
            r.experiment,
            r.setup,
            r.design,
            r.decoder,
            r.axis_name,
            fmt_f64(r.axis_value),
            r.m,
            fmt_f64(r.p_db),
            fmt_f64(r.csnr),
            r.trials,
            r.seed,
            fmt_f64(r.nmse_db),
            fmt_f64(r.support_recovery),
            fmt_f64(r.lb_db),
        ));
    }
    out
}

fn write_records_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}

fn write_sidecar_json(path: &Path, cfg: &ExperimentConfig, records: &[SweepRecord]) -> Result<()> {
    let doc = serde_json::json!({
        "config": cfg,
        "records": records,
    });
    let mut f = std::fs::File::create(path)?;
    f.write_all(
        serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::Validation(format!("json: {}", e)))?
            .as_bytes(),
    )?;
    f.write_all(b"\n")?;
    Ok(())
}

/// A sensing matrix as CSV: first line `M,L,method`, then the rows.
pub fn matrix_to_csv(a: &Matrix, method: &str) -> String {
    let mut out = format!("{},{},{}\n", a.rows(), a.cols(), method);
    for i in 0..a.rows() {
        let row: Vec<String> = (0..a.cols()).map(|j| format!("{:.12e}", a.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

/// Named experiment presets at desk or full scale.
pub fn preset(fig: &str, scale: Scale) -> Result<ExperimentConfig> {
    let desk = scale == Scale::Desk;
    let trials_big = if desk { 2000 } else { 5000 };
    let trials_mid = if desk { 500 } else { 5000 };
    let trials_lb = if desk { 200 } else { 1000 };
    let cfg = match fig {
        // Coherence study: optimized vs Gaussian over M.
        "fig2" => ExperimentConfig {
            experiment: "fig2".into(),
            n: 48,
            k: 2,
            rho: 0.5,
            sigma_w: 0.1,
            sigma_v: 0.0,
            g: Some(0.5),
            g1: None,
            g2: None,
            p_db: 10.0,
            m: MeasurementSpec::Many(if desk {
                vec![12, 24, 36, 47]
            } else {
                vec![12, 16, 20, 24, 28, 32, 36, 40, 44, 47]
            }),
            trials: trials_lb,
            seed: 1,
            setup: Setup::Single,
            designs: vec!["procedure1".into(), "gaussian".into()],
            decoder: DecoderKind::Oracle,
            omega_prime_size: None,
            sweep_axis: SweepAxis::M,
            axis_values: None,
            n_rand: None,
        },
        // Relaxation gap: factored vs randomized recovery of the Gram.
        "fig3" => ExperimentConfig {
            experiment: "fig3".into(),
            n: 24,
            k: 3,
            rho: 0.5,
            sigma_w: 0.1,
            sigma_v: 0.0,
            g: Some(0.5),
            g1: None,
            g2: None,
            p_db: 10.0,
            m: MeasurementSpec::Many(if desk {
                vec![8, 12, 16, 20]
            } else {
                vec![4, 8, 12, 16, 20, 23]
            }),
            trials: trials_lb,
            seed: 1,
            setup: Setup::Single,
            designs: vec!["procedure1".into(), "randomization".into()],
            decoder: DecoderKind::Oracle,
            omega_prime_size: None,
            sweep_axis: SweepAxis::M,
            axis_values: None,
            n_rand: Some(1000),
        },
        // NMSE vs M, randomized Bayesian decoder.
        "fig4" => ExperimentConfig {
            experiment: "fig4".into(),
            n: 36,
            k: 3,
            rho: 0.25,
            sigma_w: 0.1,
            sigma_v: 0.0,
            g: Some(0.5),
            g1: None,
            g2: None,
            p_db: 10.0,
            m: MeasurementSpec::Many(if desk {
                vec![12, 18, 24, 30]
            } else {
                vec![6, 12, 18, 24, 30, 35]
            }),
            trials: trials_big,
            seed: 1,
            setup: Setup::Single,
            designs: vec![
                "procedure1".into(),
                "lmmse_min".into(),
                "tight_frame".into(),
                "gaussian".into(),
            ],
            decoder: DecoderKind::RandomOmp,
            omega_prime_size: None,
            sweep_axis: SweepAxis::M,
            axis_values: None,
            n_rand: None,
        },
        // NMSE vs transmit power at fixed M.
        "fig5" => ExperimentConfig {
            experiment: "fig5".into(),
            n: 36,
            k: 3,
            rho: 0.25,
            sigma_w: 0.1,
            sigma_v: 0.0,
            g: Some(0.5),
            g1: None,
            g2: None,
            p_db: 10.0,
            m: MeasurementSpec::One(18),
            trials: trials_big,
            seed: 1,
            setup: Setup::Single,
            designs: vec![
                "procedure1".into(),
                "lmmse_min".into(),
                "tight_frame".into(),
                "gaussian".into(),
            ],
            decoder: DecoderKind::RandomOmp,
            omega_prime_size: None,
            sweep_axis: SweepAxis::PDb,
            axis_values: Some(if desk {
                vec![0.0, 5.0, 10.0, 15.0]
            } else {
                vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
            }),
            n_rand: None,
        },
        // NMSE vs channel SNR, greedy decoder.
        "fig6" => ExperimentConfig {
            experiment: "fig6".into(),
            n: 36,
            k: 3,
            rho: 0.5,
            sigma_w: 0.1,
            sigma_v: 0.0,
            g: Some(0.5),
            g1: None,
            g2: None,
            p_db: 10.0,
            m: MeasurementSpec::One(18),
            trials: trials_big,
            seed: 1,
            setup: Setup::Single,
            designs: vec![
                "procedure1".into(),
                "lmmse_min".into(),
                "tight_frame".into(),
                "gaussian".into(),
            ],
            decoder: DecoderKind::Omp,
            omega_prime_size: None,
            sweep_axis: SweepAxis::Csnr,
            axis_values: Some(if desk {
                vec![1.0, 10.0, 100.0, 1000.0]
            } else {
                vec![1.0, 3.16, 10.0, 31.6, 100.0, 316.0, 1000.0]
            }),
            n_rand: None,
        },
        // Higher-dimensional system with the sampled-support approximation.
        // Desk scale shrinks N to keep the conic stage tractable.
        "fig7" => ExperimentConfig {
            experiment: "fig7".into(),
            n: if desk { 48 } else { 100 },
            k: if desk { 4 } else { 5 },
            rho: 0.75,
            sigma_w: 0.1,
            sigma_v: 0.0,
            g: Some(0.5),
            g1: None,
            g2: None,
            p_db: 10.0,
            m: MeasurementSpec::Many(if desk {
                vec![16, 24, 32, 40]
            } else {
                vec![20, 30, 40, 50, 60]
            }),
            trials: trials_mid,
            seed: 1,
            setup: Setup::Single,
            designs: vec!["procedure1".into(), "tight_frame".into(), "gaussian".into()],
            decoder: DecoderKind::RandomOmp,
            omega_prime_size: Some(OMEGA_PRIME_CAP),
            sweep_axis: SweepAxis::M,
            axis_values: None,
            n_rand: None,
        },
        // Two-terminal power rescaling: orthogonal vs coherent, optimized
        // vs equal weights.
        "fig8" => ExperimentConfig {
            experiment: "fig8".into(),
            n: 32,
            k: 3,
            rho: 0.5,
            sigma_w: 0.2,
            sigma_v: 0.0,
            g: None,
            g1: Some(0.5),
            g2: Some(0.75),
            p_db: 10.0,
            m: MeasurementSpec::Many(if desk { vec![8, 12, 16] } else { vec![4, 8, 12, 16] }),
            trials: trials_mid,
            seed: 1,
            setup: Setup::Orthogonal,
            designs: vec![
                "orthogonal:alpha_opt".into(),
                "orthogonal:alpha_eq".into(),
                "coherent:alpha_opt".into(),
                "coherent:alpha_eq".into(),
            ],
            decoder: DecoderKind::RandomOmp,
            omega_prime_size: Some(OMEGA_PRIME_CAP),
            sweep_axis: SweepAxis::M,
            axis_values: None,
            n_rand: None,
        },
        // Gain-ratio sweep comparing one and two terminals. Desk scale
        // shrinks N, K, M from the cited sizes.
        "fig9" => ExperimentConfig {
            experiment: "fig9".into(),
            n: if desk { 32 } else { 64 },
            k: if desk { 3 } else { 4 },
            rho: 0.5,
            sigma_w: 0.02,
            sigma_v: 0.0,
            g: None,
            g1: Some(0.5),
            g2: Some(0.5),
            p_db: 10.0,
            m: MeasurementSpec::One(if desk { 16 } else { 40 }),
            trials: trials_mid,
            seed: 1,
            setup: Setup::Orthogonal,
            designs: vec![
                "single:procedure1".into(),
                "orthogonal:alpha_opt".into(),
                "coherent:alpha_opt".into(),
            ],
            decoder: DecoderKind::RandomOmp,
            omega_prime_size: Some(OMEGA_PRIME_CAP),
            sweep_axis: SweepAxis::GainRatio,
            axis_values: Some(if desk {
                vec![0.5, 1.0, 2.0, 4.0]
            } else {
                vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
            }),
            n_rand: None,
        },
        other => {
            return Err(Error::Validation(format!(
                "unknown preset '{}' (expected fig2..fig9)",
                other
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Named fast invariant checks for the `selftest` command.
pub fn selftest() -> Vec<(&'static str, Result<()>)> {
    let mut out = Vec::new();
    out.push(("trial-determinism", selftest_determinism()));
    out.push(("oracle-zero-noise", selftest_zero_noise()));
    out.push(("no-information-baseline", selftest_prior_energy()));
    out.push(("power-equality", selftest_power()));
    out.push(("bound-ordering", selftest_bounds()));
    out
}

fn tiny_config() -> ExperimentConfig {
    ExperimentConfig {
        experiment: "selftest".into(),
        n: 8,
        k: 2,
        rho: 0.3,
        sigma_w: 0.2,
        sigma_v: 0.0,
        g: Some(1.0),
        g1: None,
        g2: None,
        p_db: 3.0,
        m: MeasurementSpec::One(4),
        trials: 16,
        seed: 11,
        setup: Setup::Single,
        designs: vec!["tight_frame".into()],
        decoder: DecoderKind::Oracle,
        omega_prime_size: None,
        sweep_axis: SweepAxis::M,
        axis_values: None,
        n_rand: None,
    }
}

fn tiny_context(cfg: &ExperimentConfig) -> Result<(ProblemData, SystemSpec, EvalContext)> {
    let data = problem_data(cfg)?;
    let point = resolve_point(cfg, cfg.m.values()[0] as f64)?;
    let mut state = SweepState::new();
    let (_, design) = build_design(cfg, &data, &point, &cfg.designs[0], &mut state)?;
    let sys = build_system(cfg, &point, cfg.setup)?;
    let ctx = EvalContext::new(cfg, &data, &sys, &design)?;
    Ok((data, sys, ctx))
}

fn selftest_determinism() -> Result<()> {
    let cfg = tiny_config();
    let (_, _, ctx) = tiny_context(&cfg)?;
    let a = run_trial(&ctx, 5)?;
    let b = run_trial(&ctx, 5)?;
    if a.0.to_bits() != b.0.to_bits() || a.1.to_bits() != b.1.to_bits() {
        return Err(Error::Validation("trial outputs not bit-identical".into()));
    }
    Ok(())
}

fn selftest_zero_noise() -> Result<()> {
    let mut cfg = tiny_config();
    cfg.sigma_w = 1e-9;
    let (_, _, ctx) = tiny_context(&cfg)?;
    let (se, frac) = run_trial(&ctx, 0)?;
    if se > 1e-10 || frac != 1.0 {
        return Err(Error::Validation(format!("zero-noise oracle se {}", se)));
    }
    Ok(())
}

fn selftest_prior_energy() -> Result<()> {
    let cfg = tiny_config();
    let (data, sys, mut ctx) = tiny_context(&cfg)?;
    // Null sensing matrix: the oracle estimate is zero and the error is the
    // source energy, averaging to Tr{R}.
    let m = ctx.matrices[0].rows();
    let zero = Matrix::zeros(m, cfg.n);
    ctx.matrices = vec![zero.clone()];
    ctx.eff_b = Matrix::zeros(m, cfg.n);
    ctx.op = SystemOperator::new(&ctx.matrices, &sys)?;
    let trials = 4000;
    let mut acc = 0.0;
    for i in 0..trials {
        acc += run_trial(&ctx, i)?.0;
    }
    let mean = acc / trials as f64;
    let expect = data.r.trace();
    if (mean - expect).abs() > 0.1 * expect {
        return Err(Error::Validation(format!(
            "no-information mean {} vs prior energy {}",
            mean, expect
        )));
    }
    Ok(())
}

fn selftest_power() -> Result<()> {
    let cfg = tiny_config();
    let data = problem_data(&cfg)?;
    let point = resolve_point(&cfg, 4.0)?;
    let mut state = SweepState::new();
    let (_, design) = build_design(&cfg, &data, &point, "tight_frame", &mut state)?;
    let rel = (design.achieved_power - point.p).abs() / point.p;
    if rel > 1e-6 {
        return Err(Error::Validation(format!("power mismatch {}", rel)));
    }
    Ok(())
}

fn selftest_bounds() -> Result<()> {
    let cfg = tiny_config();
    let data = problem_data(&cfg)?;
    let point = resolve_point(&cfg, 4.0)?;
    let mut state = SweepState::new();
    let (_, design) = build_design(&cfg, &data, &point, "tight_frame", &mut state)?;
    let sys = build_system(&cfg, &point, Setup::Single)?;
    let ub = crate::bounds::lmmse_upper_bound(&design.matrices, &sys, &data.r_x)?;
    if design.lb_value.value > ub + 1e-9 {
        return Err(Error::Validation(format!(
            "lower bound {} above linear upper bound {}",
            design.lb_value.value, ub
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_unknown_key() {
        let text = r#"{
            "experiment": "t", "N": 10, "K": 2, "rho": 0.4, "sigma_w": 0.2,
            "g": 0.8, "P_dB": 6.0, "M": [4, 6], "trials": 10, "seed": 3,
            "setup": "single", "designs": ["gaussian"], "decoder": "omp",
            "sweep_axis": "M"
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.m.values(), vec![4, 6]);
        assert!((cfg.power_linear() - 10f64.powf(0.6)).abs() < 1e-12);

        let bad = text.replace("\"seed\": 3", "\"seed\": 3, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());

        let zero_trials = text.replace("\"trials\": 10", "\"trials\": 0");
        assert!(ExperimentConfig::from_json(&zero_trials).is_err());

        let bad_sweep = text.replace("[4, 6]", "[6, 4]");
        assert!(ExperimentConfig::from_json(&bad_sweep).is_err());
    }

    #[test]
    fn design_tag_parsing() {
        let t = parse_design_tag("procedure1", Setup::Single).unwrap();
        assert_eq!(t.setup, Setup::Single);
        let t = parse_design_tag("coherent:alpha_opt", Setup::Single).unwrap();
        assert_eq!(t.setup, Setup::Coherent);
        assert!(parse_design_tag("alpha_opt", Setup::Single).is_err());
        assert!(parse_design_tag("procedure1", Setup::Coherent).is_err());
        assert!(parse_design_tag("nonsense", Setup::Single).is_err());
    }

    #[test]
    fn trial_reproducibility_and_zero_noise() {
        let cfg = tiny_config();
        let (_, _, ctx) = tiny_context(&cfg).unwrap();
        let a = run_trial(&ctx, 9).unwrap();
        let b = run_trial(&ctx, 9).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());

        for (name, res) in selftest() {
            assert!(res.is_ok(), "selftest '{}' failed: {:?}", name, res.err());
        }
    }

    #[test]
    fn oracle_monte_carlo_matches_bound() {
        // With the oracle decoder the Monte-Carlo NMSE estimates the very
        // quantity the lower bound computes.
        let mut cfg = tiny_config();
        cfg.trials = 20_000;
        cfg.designs = vec!["gaussian".into()];
        let data = problem_data(&cfg).unwrap();
        let point = resolve_point(&cfg, 4.0).unwrap();
        let mut state = SweepState::new();
        let (setup, design) = build_design(&cfg, &data, &point, "gaussian", &mut state).unwrap();
        let sys = build_system(&cfg, &point, setup).unwrap();
        let rec = run_monte_carlo(&cfg, &point, setup, "gaussian", &design, &data, &sys).unwrap();
        let diff = (rec.nmse_db - rec.lb_db).abs();
        assert!(diff < 0.3, "oracle NMSE {} dB vs bound {} dB", rec.nmse_db, rec.lb_db);
        assert!(rec.nmse_db >= rec.lb_db - 0.5);
    }

    #[test]
    fn clt_scaling() {
        // Standard error of the NMSE estimate shrinks like 1/sqrt(trials).
        let cfg = tiny_config();
        let (_, _, ctx) = tiny_context(&cfg).unwrap();
        let level_se = |trials: usize, reps: usize| -> f64 {
            let means: Vec<f64> = (0..reps)
                .map(|rep| {
                    let mut acc = 0.0;
                    for i in 0..trials {
                        acc += run_trial(&ctx, (rep * trials + i) as u64).unwrap().0;
                    }
                    acc / trials as f64
                })
                .collect();
            let mu = means.iter().sum::<f64>() / reps as f64;
            (means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (reps - 1) as f64).sqrt()
        };
        let s1 = level_se(50, 40);
        let s2 = level_se(200, 40);
        let s3 = level_se(800, 40);
        assert!(s2 < s1 && s3 < s2, "not shrinking: {} {} {}", s1, s2, s3);
        // Quadrupling trials should roughly halve the standard error.
        assert!(s3 / s1 < 0.45, "scaling off: {} {} {}", s1, s3, s3 / s1);
    }

    #[test]
    fn csv_shape_and_determinism() {
        let mut cfg = tiny_config();
        cfg.m = MeasurementSpec::Many(vec![3, 4]);
        cfg.designs = vec!["tight_frame".into(), "gaussian".into()];
        cfg.trials = 20;
        let out1 = run_sweep(&cfg, None).unwrap();
        let out2 = run_sweep(&cfg, None).unwrap();
        let csv1 = records_to_csv(&out1.records);
        let csv2 = records_to_csv(&out2.records);
        assert_eq!(csv1, csv2);
        let mut lines = csv1.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(csv1.lines().count(), 1 + 2 * 2);
        for line in csv1.lines().skip(1) {
            assert_eq!(line.split(',').count(), 15);
            assert!(line.ends_with(",0"), "wall_ms column must be zeroed: {}", line);
        }
        // Thread-count independence.
        std::env::set_var("CS_FORGE_THREADS", "3");
        let out3 = run_sweep(&cfg, None).unwrap();
        std::env::remove_var("CS_FORGE_THREADS");
        assert_eq!(records_to_csv(&out3.records), csv1);
    }

    #[test]
    fn matrix_csv_header() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let csv = matrix_to_csv(&a, "tight_frame");
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "2,3,tight_frame");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn presets_validate() {
        for fig in ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"] {
            for scale in [Scale::Desk, Scale::Paper] {
                let cfg = preset(fig, scale).unwrap();
                assert_eq!(cfg.experiment, fig);
            }
        }
        assert!(preset("fig10", Scale::Desk).is_err());
    }

    #[test]
    fn sampled_support_bound_converges() {
        // The sampled-support lower bound approaches the exact one as the
        // sample grows, and equals it when the sample is the whole family.
        let mut cfg = tiny_config();
        cfg.n = 10;
        cfg.k = 2;
        let data = problem_data(&cfg).unwrap();
        let point = resolve_point(&cfg, 5.0).unwrap();
        let sys = build_system(&cfg, &point, Setup::Single).unwrap();
        let mut state = SweepState::new();
        let (_, design) = build_design(&cfg, &data, &point, "gaussian", &mut state).unwrap();
        let exact = crate::bounds::mse_lower_bound(&design.matrices, &sys, &data.r, &data.supports)
            .unwrap()
            .value;
        let err_at = |size: usize, seed: u64| {
            let mut stream = Stream::substream(seed, 0);
            let sub = SupportCollection::sampled(10, 2, size, &mut stream).unwrap();
            let v = crate::bounds::mse_lower_bound(&design.matrices, &sys, &data.r, &sub)
                .unwrap()
                .value;
            (v - exact).abs()
        };
        let mean_err = |size: usize| -> f64 {
            (0..30).map(|s| err_at(size, s)).sum::<f64>() / 30.0
        };
        let small = mean_err(10);
        let large = mean_err(40);
        assert!(large < small, "sampled bound error not shrinking: {} vs {}", small, large);

        let full = SupportCollection::exact(10, 2).unwrap();
        let v = crate::bounds::mse_lower_bound(&design.matrices, &sys, &data.r, &full)
            .unwrap()
            .value;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn sampled_supports_shared_and_capped() {
        let mut cfg = tiny_config();
        cfg.n = 20;
        cfg.k = 3;
        cfg.omega_prime_size = Some(50);
        let d1 = problem_data(&cfg).unwrap();
        let d2 = problem_data(&cfg).unwrap();
        assert_eq!(d1.supports.sets.len(), 50);
        assert!(!d1.supports.exact);
        for (a, b) in d1.supports.sets.iter().zip(&d2.supports.sets) {
            assert_eq!(a.indices(), b.indices());
        }
    }
}
