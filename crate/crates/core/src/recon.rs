//! Practical decoders: greedy matching pursuit, its Bayesian randomized
//! variant, the exhaustive conditional-mean decoder, plus the oracle and
//! linear decoders used as references.

use crate::bounds::SystemOperator;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{SupportCollection, SupportSet, SystemSpec};
use crate::rng::Stream;

/// Decoder output.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub x_hat: Vec<f64>,
    /// Empty for dense (non-sparse) outputs.
    pub support_hat: Option<SupportSet>,
    pub iterations: usize,
    /// Set when a rank-deficient least-squares step fell back to a
    /// pseudoinverse solve.
    pub pinv_fallback: bool,
}

/// Effective measurement matrix and optional whitener for a decoder.
/// With sensor noise the decoder sees R_n^{-1/2}(y - B x); without it the
/// whitener is a scalar and is omitted.
pub fn effective_decoder_system(
    matrices: &[Matrix],
    spec: &SystemSpec,
) -> Result<(Matrix, Option<Matrix>)> {
    let eff = crate::bounds::effective_system(matrices, spec)?;
    let has_sensor_noise = match spec {
        SystemSpec::Single(s) => s.sigma_v > 0.0,
        SystemSpec::Multi(m) => m.terminals.iter().any(|t| t.sigma_v > 0.0),
    };
    if has_sensor_noise {
        let w = linalg::inv_sqrt_spd(&eff.r_n)?;
        Ok((eff.b, Some(w)))
    } else {
        Ok((eff.b, None))
    }
}

/// Greedy pursuit with known sparsity: K selections by maximum normalized
/// correlation with the residual, re-fitting the coefficients on the
/// selected support after every selection.
pub fn omp(
    y: &[f64],
    effective_matrix: &Matrix,
    k: usize,
    noise_whitener: Option<&Matrix>,
) -> Result<DecodeResult> {
    let m = effective_matrix.rows();
    let n = effective_matrix.cols();
    if y.len() != m {
        return Err(Error::Dimension(format!("y length {} vs {} rows", y.len(), m)));
    }
    if k > m {
        return Err(Error::Validation(format!("sparsity {} exceeds {} measurements", k, m)));
    }
    let (b, yw) = match noise_whitener {
        Some(w) => (w.matmul(effective_matrix), w.matvec(y)),
        None => (effective_matrix.clone(), y.to_vec()),
    };
    let col_norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| b.get(i, j) * b.get(i, j)).sum::<f64>().sqrt())
        .collect();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut residual = yw.clone();
    let mut coeffs: Option<Matrix> = None;
    let mut pinv_fallback = false;
    for _ in 0..k {
        let mut best = usize::MAX;
        let mut best_val = -1.0;
        for j in 0..n {
            if selected.contains(&j) || col_norms[j] <= 0.0 {
                continue;
            }
            let corr: f64 = (0..m).map(|i| b.get(i, j) * residual[i]).sum();
            let val = corr.abs() / col_norms[j];
            if val > best_val {
                best_val = val;
                best = j;
            }
        }
        if best == usize::MAX {
            return Err(Error::Domain("no selectable column".into()));
        }
        selected.push(best);
        let b_s = b.select_columns(&selected);
        // Normal equations; pseudoinverse on rank deficiency.
        let gram = b_s.t_matmul(&b_s);
        let rhs_vec = b_s.transpose().matvec(&yw);
        let rhs = Matrix::column_vector(&rhs_vec);
        let c = match linalg::solve_spd(&gram, &rhs) {
            Ok(c) => c,
            Err(_) => {
                pinv_fallback = true;
                linalg::pinv(&b_s)?.matmul(&Matrix::column_vector(&yw))
            }
        };
        let fit = b_s.matvec(&(0..selected.len()).map(|i| c.get(i, 0)).collect::<Vec<_>>());
        for i in 0..m {
            residual[i] = yw[i] - fit[i];
        }
        coeffs = Some(c);
    }
    let mut x_hat = vec![0.0; n];
    if let Some(c) = &coeffs {
        for (i, &j) in selected.iter().enumerate() {
            x_hat[j] = c.get(i, 0);
        }
    }
    let support = SupportSet::new(selected, n)?;
    Ok(DecodeResult { x_hat, support_hat: Some(support), iterations: k, pinv_fallback })
}

/// Log evidence of y under a candidate support, up to a support-independent
/// constant: ½ b_Sᵀ(P⁻¹+G_SS)⁻¹b_S − ½ log det P − ½ log det(P⁻¹+G_SS),
/// with b = BᵀR_n⁻¹y and G = BᵀR_n⁻¹B.
fn log_evidence(op: &SystemOperator, bty: &[f64], prior: &Matrix, idx: &[usize]) -> Result<f64> {
    let t = idx.len();
    let p_inv = linalg::inv_spd(prior)?;
    let g_sub = Matrix::from_fn(t, t, |i, j| op.gram.get(idx[i], idx[j]));
    let m = p_inv.add(&g_sub);
    let lp = linalg::cholesky(prior)?;
    let lm = linalg::cholesky(&m)?;
    let logdet_p: f64 = (0..t).map(|i| lp.get(i, i).ln()).sum::<f64>() * 2.0;
    let logdet_m: f64 = (0..t).map(|i| lm.get(i, i).ln()).sum::<f64>() * 2.0;
    let rhs: Vec<f64> = idx.iter().map(|&i| bty[i]).collect();
    let sol = linalg::solve_spd(&m, &Matrix::column_vector(&rhs))?;
    let quad: f64 = rhs.iter().enumerate().map(|(i, v)| v * sol.get(i, 0)).sum();
    Ok(0.5 * quad - 0.5 * logdet_p - 0.5 * logdet_m)
}

fn softmax_sample(log_weights: &[f64], stream: &mut Stream) -> usize {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = stream.uniform() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Randomized Bayesian pursuit: draws supports greedily with probabilities
/// proportional to the per-index evidence gain, then averages the oracle
/// conditional means across draws. The output is dense in general.
pub fn random_omp(
    y: &[f64],
    matrices: &[Matrix],
    spec: &SystemSpec,
    r: &Matrix,
    n_draws: usize,
    stream: &mut Stream,
    restrict: Option<&SupportCollection>,
) -> Result<DecodeResult> {
    if n_draws == 0 {
        return Err(Error::Domain("need at least one draw".into()));
    }
    let op = SystemOperator::new(matrices, spec)?;
    let n = op.n();
    let k = r.rows();
    let r_inv = linalg::inv_spd(r)?;
    let bty = op.bt_rninv.matvec(y);
    let mut acc = vec![0.0; n];
    if let Some(omega) = restrict {
        // Restricted prior: sample whole supports from the evidence softmax.
        let log_ev: Vec<f64> = omega
            .sets
            .iter()
            .map(|s| log_evidence(&op, &bty, r, s.indices()))
            .collect::<Result<Vec<_>>>()?;
        for _ in 0..n_draws {
            let pick = if omega.sets.len() == 1 { 0 } else { softmax_sample(&log_ev, stream) };
            let est = op.oracle_estimate(&r_inv, &omega.sets[pick], y)?;
            for (a, e) in acc.iter_mut().zip(&est) {
                *a += e;
            }
        }
    } else {
        for _ in 0..n_draws {
            let mut selected: Vec<usize> = Vec::with_capacity(k);
            for t in 0..k {
                // Marginal prior for a partial support: the leading
                // principal block of R over the sorted selection.
                let prior = Matrix::from_fn(t + 1, t + 1, |i, j| r.get(i, j));
                let mut cands = Vec::new();
                let mut log_ev = Vec::new();
                for j in 0..n {
                    if selected.contains(&j) {
                        continue;
                    }
                    let mut idx = selected.clone();
                    idx.push(j);
                    idx.sort_unstable();
                    log_ev.push(log_evidence(&op, &bty, &prior, &idx)?);
                    cands.push(j);
                }
                selected.push(cands[softmax_sample(&log_ev, stream)]);
            }
            selected.sort_unstable();
            let s = SupportSet::new(selected, n)?;
            let est = op.oracle_estimate(&r_inv, &s, y)?;
            for (a, e) in acc.iter_mut().zip(&est) {
                *a += e;
            }
        }
    }
    for a in acc.iter_mut() {
        *a /= n_draws as f64;
    }
    Ok(DecodeResult { x_hat: acc, support_hat: None, iterations: n_draws, pinv_fallback: false })
}

/// Posterior support weights under a uniform support prior, normalized to
/// sum to one.
pub fn posterior_weights(
    y: &[f64],
    op: &SystemOperator,
    r: &Matrix,
    supports: &SupportCollection,
) -> Result<Vec<f64>> {
    let bty = op.bt_rninv.matvec(y);
    let log_ev: Vec<f64> = supports
        .sets
        .iter()
        .map(|s| log_evidence(op, &bty, r, s.indices()))
        .collect::<Result<Vec<_>>>()?;
    let max = log_ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_ev.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    Ok(w)
}

/// Exact conditional-mean decoder: the posterior-weighted average of the
/// oracle estimates over every support. Test-scale only.
pub fn exhaustive_mmse(
    y: &[f64],
    matrices: &[Matrix],
    spec: &SystemSpec,
    r: &Matrix,
    supports: &SupportCollection,
) -> Result<DecodeResult> {
    let op = SystemOperator::new(matrices, spec)?;
    let r_inv = linalg::inv_spd(r)?;
    let weights = posterior_weights(y, &op, r, supports)?;
    let mut acc = vec![0.0; op.n()];
    for (s, w) in supports.sets.iter().zip(&weights) {
        let est = op.oracle_estimate(&r_inv, s, y)?;
        for (a, e) in acc.iter_mut().zip(&est) {
            *a += w * e;
        }
    }
    Ok(DecodeResult {
        x_hat: acc,
        support_hat: None,
        iterations: supports.sets.len(),
        pinv_fallback: false,
    })
}

/// Known-support conditional mean as a DecodeResult.
pub fn oracle_decode(
    y: &[f64],
    s: &SupportSet,
    matrices: &[Matrix],
    spec: &SystemSpec,
    r: &Matrix,
) -> Result<DecodeResult> {
    let x_hat = crate::bounds::oracle_estimate(y, s, matrices, spec, r)?;
    Ok(DecodeResult { x_hat, support_hat: Some(s.clone()), iterations: 1, pinv_fallback: false })
}

/// Linear conditional mean under the marginal source covariance:
/// (R_x⁻¹ + G)⁻¹ BᵀR_n⁻¹ y.
pub fn lmmse_decode(y: &[f64], op: &SystemOperator, r_x: &Matrix) -> Result<DecodeResult> {
    let n = op.n();
    // Ridge keeps a singular marginal covariance invertible.
    let eps = 1e-10 * r_x.trace().max(1.0) / n as f64;
    let rx_inv = linalg::inv_spd(&r_x.add_scaled_identity(eps))?;
    let m = rx_inv.add(&op.gram);
    let bty = op.bt_rninv.matvec(y);
    let sol = linalg::solve_spd(&m, &Matrix::column_vector(&bty))?;
    let x_hat = (0..n).map(|i| sol.get(i, 0)).collect();
    Ok(DecodeResult { x_hat, support_hat: None, iterations: 1, pinv_fallback: false })
}

/// Fraction of the true support recovered: |true ∩ estimate| / K.
pub fn support_match(true_s: &SupportSet, est_s: &SupportSet) -> f64 {
    true_s.overlap_fraction(est_s)
}
