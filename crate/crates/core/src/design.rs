//! Sensing-matrix construction: the three-stage relax/factor/rescale
//! procedure, closed-form special cases, the randomization baseline,
//! two-terminal designs, and literature baselines.

use crate::bounds::{mse_lower_bound, BoundReport};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{
    transmit_power, transmit_power_multi, ChannelSpec, MacMode, MultiTerminalSpec,
    SupportCollection, SystemSpec,
};
use crate::rng::Stream;
use crate::sdp::{
    self, assemble_alpha_rescale, assemble_lmmse_min, assemble_sdr, warm_start_identity,
    ConicSolution, SolveStatus,
};

/// Solver knobs shared by every design that goes through the conic stage.
#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts { tol: 1e-6, max_iter: 50_000 }
    }
}

/// Condensed solver health for result plumbing.
#[derive(Debug, Clone)]
pub struct SolverDiag {
    pub objective: f64,
    pub iterations: usize,
    pub feas_residual: f64,
    pub conv_residual: f64,
    pub status: SolveStatus,
}

impl From<&ConicSolution> for SolverDiag {
    fn from(s: &ConicSolution) -> Self {
        SolverDiag {
            objective: s.objective,
            iterations: s.iterations,
            feas_residual: s.feas_residual,
            conv_residual: s.conv_residual,
            status: s.status,
        }
    }
}

/// A finished sensing-matrix design.
#[derive(Debug, Clone)]
pub struct DesignResult {
    /// One matrix (single terminal) or two (MAC).
    pub matrices: Vec<Matrix>,
    pub achieved_power: f64,
    pub lb_value: BoundReport,
    pub method: String,
    pub solver_diag: Option<SolverDiag>,
    /// Per-terminal weighting factors where applicable.
    pub rescale_factors: Option<Vec<f64>>,
    /// Raw flat solver iterate, usable as a warm start for a nearby config.
    pub raw_solution: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

/// Nearest rank-M factor of a PSD Gram: A = [diag(sqrt g_1..g_M) 0] U^T with
/// eigenvalues descending (the left factor is fixed to the identity; any
/// orthogonal left factor is equivalent).
pub fn low_rank_from_gram(q: &Matrix, m: usize) -> Result<Matrix> {
    let l = q.rows();
    if m > l {
        return Err(Error::Dimension(format!("rank {} exceeds size {}", m, l)));
    }
    let eig = linalg::sym_eig(q)?;
    let mut a = Matrix::zeros(m, l);
    for i in 0..m {
        let g = eig.eigenvalues[i].max(0.0).sqrt();
        for j in 0..l {
            a.set(i, j, g * eig.eigenvectors.get(j, i));
        }
    }
    Ok(a)
}

/// Scales a matrix so the transmit power meets the budget with equality.
pub fn power_rescale(a: &Matrix, spec: &ChannelSpec, r_x: &Matrix) -> Result<Matrix> {
    let pw = transmit_power(a, spec, r_x)?;
    if pw <= 0.0 {
        return Err(Error::Domain("cannot rescale a zero-power matrix".into()));
    }
    Ok(a.scale((spec.p / pw).sqrt()))
}

fn finish_single(
    a: Matrix,
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    method: &str,
    diag: Option<SolverDiag>,
    raw: Option<Vec<f64>>,
    notes: Vec<String>,
) -> Result<DesignResult> {
    let a = power_rescale(&a, spec, r_x)?;
    let achieved = transmit_power(&a, spec, r_x)?;
    let sys = SystemSpec::Single(spec.clone());
    let lb = mse_lower_bound(&[a.clone()], &sys, r, supports)?;
    Ok(DesignResult {
        matrices: vec![a],
        achieved_power: achieved,
        lb_value: lb,
        method: method.to_string(),
        solver_diag: diag,
        rescale_factors: None,
        raw_solution: raw,
        notes,
    })
}

/// Stage 1 alone: the relaxed Gram, which does not depend on M. Sweeps over
/// the measurement count reuse one solve.
pub fn procedure1_gram(
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    opts: SolverOpts,
    warm: Option<&[f64]>,
) -> Result<(Matrix, SolverDiag, Vec<f64>)> {
    let sys = SystemSpec::Single(spec.clone());
    let asm = assemble_sdr(&sys, r, r_x, supports)?;
    let warm_vec;
    let warm = match warm {
        Some(w) => w,
        None => {
            warm_vec = warm_start_identity(&asm, &sys, r_x);
            &warm_vec
        }
    };
    let sol = asm.problem.solve(opts.tol, opts.max_iter, Some(warm))?;
    let q = asm.problem.sym_value(&sol, asm.q_vars[0]);
    let diag = SolverDiag::from(&sol);
    Ok((q, diag, sol.values))
}

/// Stages 2+3 from a precomputed Gram.
pub fn procedure1_from_gram(
    q: &Matrix,
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    diag: Option<SolverDiag>,
) -> Result<DesignResult> {
    let a = low_rank_from_gram(q, spec.m)?;
    finish_single(a, spec, r, r_x, supports, "procedure1", diag, None, vec![])
}

/// Stage 1+2+3: relax to the Gram, factor to rank M, rescale to the budget.
pub fn design_procedure1(
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    opts: SolverOpts,
    warm: Option<&[f64]>,
) -> Result<DesignResult> {
    let (q, diag, raw) = procedure1_gram(spec, r, r_x, supports, opts, warm)?;
    let a = low_rank_from_gram(&q, spec.m)?;
    finish_single(a, spec, r, r_x, supports, "procedure1", Some(diag), Some(raw), vec![])
}

/// The relaxation objective per support (a lower bound on any rank-M
/// design's oracle MSE), from a solved design.
pub fn sdr_objective_bound(diag: &SolverDiag, support_count: usize) -> f64 {
    diag.objective / support_count as f64
}

/// Which closed-form special case to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormCase {
    /// Uncorrelated source, identity sensor channel.
    Case1,
    /// Uncorrelated source, noiseless sensors, square full-rank channel.
    Case2,
    /// Vanishing receiver noise.
    Case3,
    /// Vanishing channel SNR asymptote.
    Case4,
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedFormParams {
    /// Seed for the free orthogonal factor; `None` keeps it at the identity.
    pub unitary_seed: Option<u64>,
    /// Channel-SNR ceiling below which the asymptotic case applies.
    pub asymptotic_threshold: f64,
    /// Apply the asymptotic formula regardless of the threshold.
    pub force: bool,
}

impl Default for ClosedFormParams {
    fn default() -> Self {
        ClosedFormParams { unitary_seed: None, asymptotic_threshold: 1e-3, force: false }
    }
}

fn require_isotropic(r: &Matrix) -> Result<f64> {
    let k = r.rows();
    let s = r.get(0, 0);
    for i in 0..k {
        for j in 0..k {
            let expect = if i == j { s } else { 0.0 };
            if (r.get(i, j) - expect).abs() > 1e-12 * s.abs().max(1.0) {
                return Err(Error::Validation(
                    "closed form requires an isotropic nonzero covariance".into(),
                ));
            }
        }
    }
    Ok(s)
}

fn require_identity_h(spec: &ChannelSpec) -> Result<()> {
    let h = &spec.h;
    if h.rows() != h.cols() || h.sub(&Matrix::identity(h.rows())).frobenius_norm() > 1e-12 {
        return Err(Error::Validation("closed form requires an identity sensor channel".into()));
    }
    Ok(())
}

/// Closed-form designs where the relaxation optimum is known analytically.
/// All cases are rescaled to meet the power budget with equality, which may
/// differ from the cited scale constant when the two disagree.
pub fn closed_form(
    case: ClosedFormCase,
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    params: ClosedFormParams,
) -> Result<DesignResult> {
    let n = spec.n();
    let m = spec.m;
    let k = r.rows() as f64;
    let mut notes = Vec::new();
    let a = match case {
        ClosedFormCase::Case1 | ClosedFormCase::Case3 => {
            require_isotropic(r)?;
            require_identity_h(spec)?;
            if case == ClosedFormCase::Case3 && spec.sigma_w > 1e-9 {
                return Err(Error::Validation(
                    "the vanishing-receiver-noise case needs sigma_w ~ 0".into(),
                ));
            }
            let v_a = match params.unitary_seed {
                // The free right factor; the bound is not invariant to it in
                // general, so the seeded draw is part of the design identity.
                Some(seed) => linalg::random_orthogonal(n, &mut Stream::substream(seed, 0)),
                None => Matrix::identity(n),
            };
            // [I_M 0] V_a^T = first M rows of V_a^T.
            let mut a = Matrix::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    a.set(i, j, v_a.get(j, i));
                }
            }
            let sigma_x2 = r.get(0, 0);
            let scale =
                (k * spec.p / (m as f64 * (sigma_x2 + k * spec.sigma_v * spec.sigma_v))).sqrt();
            a.scale(scale)
        }
        ClosedFormCase::Case2 => {
            require_isotropic(r)?;
            if spec.sigma_v != 0.0 {
                return Err(Error::Validation("case 2 requires noiseless sensors".into()));
            }
            let h = &spec.h;
            if h.rows() != h.cols() {
                return Err(Error::Validation("case 2 requires a square channel".into()));
            }
            let (u, sigma, _v) = linalg::svd_thin(h)?;
            if sigma.last().copied().unwrap_or(0.0) <= 1e-12 * sigma[0] {
                return Err(Error::Validation("case 2 requires a full-rank channel".into()));
            }
            // Ascending singular values; invert the M smallest, verbatim
            // from the cited statement (the largest-M alternative is only
            // flagged, not applied).
            notes.push("retained-subspace choice: smallest-M singular values".into());
            let mut a = Matrix::zeros(m, n);
            for i in 0..m {
                let col = n - 1 - i; // ascending order via reversal
                let inv = 1.0 / sigma[col];
                for j in 0..n {
                    a.set(i, j, inv * u.get(j, col));
                }
            }
            let sigma_x2 = r.get(0, 0);
            a.scale((k * spec.p / (m as f64 * sigma_x2)).sqrt())
        }
        ClosedFormCase::Case4 => {
            if spec.sigma_v != 0.0 {
                return Err(Error::Validation("the asymptotic case requires noiseless sensors".into()));
            }
            let snr = spec.g * spec.g / (spec.sigma_w * spec.sigma_w);
            if snr > params.asymptotic_threshold && !params.force {
                return Err(Error::Validation(format!(
                    "channel SNR {:.3e} above the asymptotic threshold {:.3e}",
                    snr, params.asymptotic_threshold
                )));
            }
            // T = sum_S D_S R^2 D_S^T, Z = T^{-1/2} H R_x H^T T^{-1/2}.
            let l = spec.l();
            let r2 = r.matmul(r);
            let mut t = Matrix::zeros(l, l);
            for s in &supports.sets {
                let d_s = spec.h.select_columns(s.indices());
                t = t.add(&d_s.matmul(&r2).matmul_t(&d_s));
            }
            let t = t.symmetrize();
            let t_inv_sqrt = linalg::inv_sqrt_spd(&t)?;
            let z = t_inv_sqrt.matmul(&spec.h).matmul(r_x).matmul_t(&spec.h);
            let z = z.matmul(&t_inv_sqrt).symmetrize();
            let eig = linalg::sym_eig(&z)?;
            // Single active direction at the smallest eigenvalue, verbatim.
            notes.push("asymptotic direction: smallest eigenvalue (largest-eigenvalue alternative flagged, not applied)".into());
            let idx = eig.eigenvalues.len() - 1;
            let gamma = eig.eigenvalues[idx];
            if gamma <= 0.0 {
                return Err(Error::Definiteness("degenerate whitened covariance".into()));
            }
            let u_z = eig.eigenvectors.column(idx);
            let w = t_inv_sqrt.matvec(&u_z);
            // Q* = (P / gamma) w w^T; its rank-1 factor needs no second eig.
            let coef = (spec.p / gamma).sqrt();
            let mut a = Matrix::zeros(m, l);
            for j in 0..l {
                a.set(0, j, coef * w[j]);
            }
            a
        }
    };
    let method = format!("closed_form_{:?}", case).to_lowercase();
    finish_single(a, spec, r, r_x, supports, &method, None, None, notes)
}

/// Randomized rank-M factor recovery: best of `n_rand` candidates
/// A = V Gamma^{1/2} U_q^T with V entries N(0, 1/M), each rescaled to the
/// power budget and ranked by the oracle bound.
pub fn design_randomization(
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    n_rand: usize,
    seed: u64,
    q_star: Option<&Matrix>,
    opts: SolverOpts,
) -> Result<DesignResult> {
    if n_rand == 0 {
        return Err(Error::Domain("need at least one randomization".into()));
    }
    let sys = SystemSpec::Single(spec.clone());
    let owned;
    let (q, diag) = match q_star {
        Some(q) => (q.clone(), None),
        None => {
            let asm = assemble_sdr(&sys, r, r_x, supports)?;
            let warm = warm_start_identity(&asm, &sys, r_x);
            let sol = asm.problem.solve(opts.tol, opts.max_iter, Some(&warm))?;
            owned = asm.problem.sym_value(&sol, asm.q_vars[0]);
            (owned, Some(SolverDiag::from(&sol)))
        }
    };
    let l = q.rows();
    let eig = linalg::sym_eig(&q)?;
    // Gamma^{1/2} U_q^T with eigenvalues clamped at zero.
    let mut root = Matrix::zeros(l, l);
    for i in 0..l {
        let g = eig.eigenvalues[i].max(0.0).sqrt();
        for j in 0..l {
            root.set(i, j, g * eig.eigenvectors.get(j, i));
        }
    }
    let m = spec.m;
    let std = 1.0 / (m as f64).sqrt();
    let mut best: Option<(f64, Matrix)> = None;
    for i in 0..n_rand {
        let mut stream = Stream::substream(seed, i as u64);
        let v = Matrix::from_fn(m, l, |_, _| std * stream.normal());
        let cand = power_rescale(&v.matmul(&root), spec, r_x)?;
        let lb = mse_lower_bound(&[cand.clone()], &sys, r, supports)?.value;
        if best.as_ref().map_or(true, |(b, _)| lb < *b) {
            best = Some((lb, cand));
        }
    }
    let (_, a) = best.unwrap();
    let achieved = transmit_power(&a, spec, r_x)?;
    let lb = mse_lower_bound(&[a.clone()], &sys, r, supports)?;
    Ok(DesignResult {
        matrices: vec![a],
        achieved_power: achieved,
        lb_value: lb,
        method: "randomization".to_string(),
        solver_diag: diag,
        rescale_factors: None,
        raw_solution: None,
        notes: vec![],
    })
}

/// Per-terminal weighting policy for the final rescale stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// Solve the convex weighting program.
    Optimized,
    /// Single common factor across terminals.
    Equal,
}

/// Stage 1 for the two-terminal modes: the relaxed Grams (one per terminal
/// in orthogonal mode, one joint Gram in coherent mode). M-independent.
pub fn mac_grams(
    mspec: &MultiTerminalSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    opts: SolverOpts,
    warm: Option<&[f64]>,
) -> Result<(Vec<Matrix>, SolverDiag, Vec<f64>)> {
    let sys = SystemSpec::Multi(mspec.clone());
    let asm = assemble_sdr(&sys, r, r_x, supports)?;
    let warm_vec;
    let warm = match warm {
        Some(w) => w,
        None => {
            warm_vec = warm_start_identity(&asm, &sys, r_x);
            &warm_vec
        }
    };
    let sol = asm.problem.solve(opts.tol, opts.max_iter, Some(warm))?;
    let grams: Vec<Matrix> =
        asm.q_vars.iter().map(|&v| asm.problem.sym_value(&sol, v)).collect();
    let diag = SolverDiag::from(&sol);
    Ok((grams, diag, sol.values))
}

/// Stages 2+3 from precomputed Grams.
pub fn design_mac_from_grams(
    mspec: &MultiTerminalSpec,
    grams: &[Matrix],
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    alpha_mode: AlphaMode,
    opts: SolverOpts,
    diag: Option<SolverDiag>,
    raw: Option<Vec<f64>>,
) -> Result<DesignResult> {
    let sys = SystemSpec::Multi(mspec.clone());
    let mut notes = Vec::new();

    // Stage 2: per-mode factorization into the fixed (unweighted) matrices.
    let fixed: [Matrix; 2] = match mspec.mode {
        MacMode::Orthogonal => {
            if grams.len() != 2 {
                return Err(Error::Dimension("orthogonal mode needs two grams".into()));
            }
            [
                low_rank_from_gram(&grams[0], mspec.terminals[0].m)?,
                low_rank_from_gram(&grams[1], mspec.terminals[1].m)?,
            ]
        }
        MacMode::Coherent => {
            if grams.len() != 1 {
                return Err(Error::Dimension("coherent mode needs one joint gram".into()));
            }
            let m = mspec.terminals[0].m;
            let stacked = low_rank_from_gram(&grams[0], m)?;
            let scales = sdp::coherent_column_scales(mspec)?;
            let l1 = mspec.terminals[0].l();
            let l2 = mspec.terminals[1].l();
            [
                stacked.block(0, 0, m, l1).scale(1.0 / scales[0]),
                stacked.block(0, l1, m, l2).scale(1.0 / scales[1]),
            ]
        }
    };

    // Stage 3: weighting.
    let mut alphas = match alpha_mode {
        AlphaMode::Equal => vec![1.0, 1.0],
        AlphaMode::Optimized => {
            let aasm = assemble_alpha_rescale(mspec, &fixed, r, r_x, supports)?;
            let asol = aasm.problem.solve(opts.tol, opts.max_iter, None)?;
            let a1 = aasm.problem.scalar_value(&asol, aasm.alphas[0]).max(0.0);
            let a2 = aasm.problem.scalar_value(&asol, aasm.alphas[1]).max(0.0);
            notes.push(format!(
                "alpha program: status {:?}, feas {:.2e}",
                asol.status, asol.feas_residual
            ));
            vec![a1, a2]
        }
    };
    if alphas[0] <= 0.0 && alphas[1] <= 0.0 {
        alphas = vec![1.0, 1.0];
        notes.push("degenerate weighting solution; fell back to equal weights".into());
    }
    let mut mats: Vec<Matrix> =
        fixed.iter().zip(&alphas).map(|(a, &al)| a.scale(al.sqrt())).collect();
    // Exact power equality via a final common factor.
    let pair = [mats[0].clone(), mats[1].clone()];
    let pw = transmit_power_multi(&pair, mspec, r_x)?;
    if pw <= 0.0 {
        return Err(Error::Domain("zero-power design".into()));
    }
    let c = (mspec.p / pw).sqrt();
    for a in mats.iter_mut() {
        *a = a.scale(c);
    }
    let alphas: Vec<f64> = alphas.iter().map(|a| a * c * c).collect();

    let achieved = transmit_power_multi(&[mats[0].clone(), mats[1].clone()], mspec, r_x)?;
    let lb = mse_lower_bound(&mats, &sys, r, supports)?;
    Ok(DesignResult {
        matrices: mats,
        achieved_power: achieved,
        lb_value: lb,
        method: format!(
            "mac_{}_{}",
            match mspec.mode {
                MacMode::Orthogonal => "orthogonal",
                MacMode::Coherent => "coherent",
            },
            match alpha_mode {
                AlphaMode::Optimized => "alpha_opt",
                AlphaMode::Equal => "alpha_eq",
            }
        ),
        solver_diag: diag,
        rescale_factors: Some(alphas),
        raw_solution: raw,
        notes,
    })
}

/// Two-terminal design over an orthogonal or coherent access channel.
pub fn design_mac(
    mspec: &MultiTerminalSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    alpha_mode: AlphaMode,
    opts: SolverOpts,
    warm: Option<&[f64]>,
) -> Result<DesignResult> {
    let (grams, diag, raw) = mac_grams(mspec, r, r_x, supports, opts, warm)?;
    design_mac_from_grams(
        mspec,
        &grams,
        r,
        r_x,
        supports,
        alpha_mode,
        opts,
        Some(diag),
        Some(raw),
    )
}

/// Literature baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Gaussian,
    TightFrame,
    /// Minimizes the linear-estimator upper bound with the same conic stack.
    LmmseMin,
}

pub fn design_baseline(
    kind: BaselineKind,
    spec: &ChannelSpec,
    r: &Matrix,
    r_x: &Matrix,
    supports: &SupportCollection,
    seed: u64,
    opts: SolverOpts,
) -> Result<DesignResult> {
    let n = spec.l();
    let m = spec.m;
    match kind {
        BaselineKind::Gaussian => {
            let mut stream = Stream::substream(seed, 0);
            let a = Matrix::from_fn(m, n, |_, _| stream.normal());
            finish_single(a, spec, r, r_x, supports, "gaussian", None, None, vec![])
        }
        BaselineKind::TightFrame => {
            let mut stream = Stream::substream(seed, 0);
            let v_a = linalg::random_orthogonal(n, &mut stream);
            let a = Matrix::from_fn(m, n, |i, j| v_a.get(j, i));
            finish_single(a, spec, r, r_x, supports, "tight_frame", None, None, vec![])
        }
        BaselineKind::LmmseMin => {
            let sys = SystemSpec::Single(spec.clone());
            let asm = assemble_lmmse_min(&sys, r_x)?;
            let warm = warm_start_identity(&asm, &sys, r_x);
            let sol = asm.problem.solve(opts.tol, opts.max_iter, Some(&warm))?;
            let q = asm.problem.sym_value(&sol, asm.q_vars[0]);
            let a = low_rank_from_gram(&q, m)?;
            finish_single(
                a,
                spec,
                r,
                r_x,
                supports,
                "lmmse_min",
                Some(SolverDiag::from(&sol)),
                None,
                vec![],
            )
        }
    }
}
