//! Oracle MMSE estimator, exact/sampled MSE lower bounds, LMMSE upper bound,
//! noise covariances, and the mutual-coherence sandwich.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{ChannelSpec, MacMode, SupportCollection, SupportSet, SystemSpec};

/// Total-noise covariance for a given sensing matrix and system.
#[derive(Debug, Clone)]
pub struct NoiseCov {
    pub matrix: Matrix,
}

/// A lower/upper MSE bound evaluation.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// MSE in squared source units.
    pub value: f64,
    pub per_support_terms: Option<Vec<f64>>,
    pub support_count_used: usize,
    pub exact: bool,
}

fn check_sensing_shape(a: &Matrix, spec: &ChannelSpec) -> Result<()> {
    if a.rows() != spec.m || a.cols() != spec.l() {
        return Err(Error::Dimension(format!(
            "sensing matrix is {}x{}, expected {}x{}",
            a.rows(),
            a.cols(),
            spec.m,
            spec.l()
        )));
    }
    Ok(())
}

fn single_noise(a: &Matrix, spec: &ChannelSpec) -> Result<Matrix> {
    check_sensing_shape(a, spec)?;
    let sw2 = spec.sigma_w * spec.sigma_w;
    if spec.sigma_v == 0.0 {
        return Ok(Matrix::identity(spec.m).scale(sw2));
    }
    let c = spec.g * spec.g * spec.sigma_v * spec.sigma_v;
    Ok(a.matmul_t(a).scale(c).add_scaled_identity(sw2))
}

/// Covariance of the total effective noise seen by the receiver.
pub fn noise_covariance(matrices: &[Matrix], spec: &SystemSpec) -> Result<NoiseCov> {
    let matrix = match spec {
        SystemSpec::Single(c) => {
            if matrices.len() != 1 {
                return Err(Error::Dimension("expected one sensing matrix".into()));
            }
            single_noise(&matrices[0], c)?
        }
        SystemSpec::Multi(m) => {
            if matrices.len() != 2 {
                return Err(Error::Dimension("expected two sensing matrices".into()));
            }
            match m.mode {
                MacMode::Orthogonal => {
                    let r1 = single_noise(&matrices[0], &m.terminals[0])?;
                    let r2 = single_noise(&matrices[1], &m.terminals[1])?;
                    Matrix::blkdiag(&[&r1, &r2])
                }
                MacMode::Coherent => {
                    // Single receiver: noise variances add across terminals.
                    let rows = m.terminals[0].m;
                    let sw2 = m.terminals[0].sigma_w * m.terminals[0].sigma_w;
                    let mut rn = Matrix::identity(rows).scale(sw2);
                    for (a, t) in matrices.iter().zip(&m.terminals) {
                        check_sensing_shape(a, t)?;
                        if t.sigma_v > 0.0 {
                            let c = t.g * t.g * t.sigma_v * t.sigma_v;
                            rn = rn.add(&a.matmul_t(a).scale(c));
                        }
                    }
                    rn
                }
            }
        }
    };
    Ok(NoiseCov { matrix })
}

/// Effective linear observation y = B x + n with n ~ N(0, R_n), folding the
/// channel gains and sensor matrices into B.
#[derive(Debug, Clone)]
pub struct EffectiveSystem {
    pub b: Matrix,
    pub r_n: Matrix,
}

pub fn effective_system(matrices: &[Matrix], spec: &SystemSpec) -> Result<EffectiveSystem> {
    let r_n = noise_covariance(matrices, spec)?.matrix;
    let b = match spec {
        SystemSpec::Single(c) => matrices[0].matmul(&c.h).scale(c.g),
        SystemSpec::Multi(m) => {
            let parts: Vec<Matrix> = matrices
                .iter()
                .zip(&m.terminals)
                .map(|(a, t)| a.matmul(&t.h).scale(t.g))
                .collect();
            match m.mode {
                MacMode::Orthogonal => Matrix::vstack(&parts[0], &parts[1]),
                MacMode::Coherent => parts[0].add(&parts[1]),
            }
        }
    };
    Ok(EffectiveSystem { b, r_n })
}

/// Precomputed whitened quantities shared by the oracle estimator, the
/// bound evaluation, and the greedy decoders.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub b: Matrix,
    pub r_n: Matrix,
    /// B^T R_n^{-1}, N x total measurements.
    pub bt_rninv: Matrix,
    /// B^T R_n^{-1} B.
    pub gram: Matrix,
    /// R_n^{-1}.
    pub rn_inv: Matrix,
}

impl SystemOperator {
    pub fn new(matrices: &[Matrix], spec: &SystemSpec) -> Result<Self> {
        let eff = effective_system(matrices, spec)?;
        Self::from_effective(eff)
    }

    pub fn from_effective(eff: EffectiveSystem) -> Result<Self> {
        let rn_inv = linalg::inv_spd(&eff.r_n)
            .map_err(|_| Error::Definiteness("noise covariance not positive definite".into()))?;
        let bt_rninv = eff.b.t_matmul(&rn_inv);
        let gram = bt_rninv.matmul(&eff.b).symmetrize();
        Ok(SystemOperator { b: eff.b, r_n: eff.r_n, bt_rninv, gram, rn_inv })
    }

    pub fn n(&self) -> usize {
        self.b.cols()
    }

    /// Submatrix of the gram restricted to a support.
    pub fn gram_sub(&self, s: &SupportSet) -> Matrix {
        let idx = s.indices();
        Matrix::from_fn(idx.len(), idx.len(), |i, j| self.gram.get(idx[i], idx[j]))
    }

    /// Conditional mean given the true support: zero off-support and
    /// (R^{-1} + B_S^T R_n^{-1} B_S)^{-1} B_S^T R_n^{-1} y on-support.
    pub fn oracle_estimate(&self, r_inv: &Matrix, s: &SupportSet, y: &[f64]) -> Result<Vec<f64>> {
        let k = s.len();
        if r_inv.rows() != k {
            return Err(Error::Dimension("R^{-1} size must match support cardinality".into()));
        }
        let bty = self.bt_rninv.matvec(y);
        let idx = s.indices();
        let m = r_inv.add(&self.gram_sub(s));
        let rhs: Vec<f64> = idx.iter().map(|&i| bty[i]).collect();
        let xs = linalg::solve_spd(&m, &Matrix::column_vector(&rhs))
            .map_err(|_| Error::Definiteness("singular oracle inner matrix".into()))?;
        let mut x = vec![0.0; self.n()];
        for (j, &i) in idx.iter().enumerate() {
            x[i] = xs.get(j, 0);
        }
        Ok(x)
    }

    /// Tr{(R^{-1} + B_S^T R_n^{-1} B_S)^{-1}} for one support.
    pub fn oracle_mse_term(&self, r_inv: &Matrix, s: &SupportSet) -> Result<f64> {
        let m = r_inv.add(&self.gram_sub(s));
        let inv = linalg::inv_spd(&m)
            .map_err(|_| Error::Definiteness("singular oracle inner matrix".into()))?;
        Ok(inv.trace())
    }
}

/// Oracle (known-support) conditional-mean estimate.
pub fn oracle_estimate(
    y: &[f64],
    s: &SupportSet,
    matrices: &[Matrix],
    spec: &SystemSpec,
    r: &Matrix,
) -> Result<Vec<f64>> {
    let op = SystemOperator::new(matrices, spec)?;
    let r_inv = linalg::inv_spd(r)?;
    op.oracle_estimate(&r_inv, s, y)
}

/// Oracle MSE lower bound averaged over a support collection.
pub fn mse_lower_bound(
    matrices: &[Matrix],
    spec: &SystemSpec,
    r: &Matrix,
    supports: &SupportCollection,
) -> Result<BoundReport> {
    let op = SystemOperator::new(matrices, spec)?;
    mse_lower_bound_with(&op, r, supports)
}

/// Bound evaluation reusing a precomputed operator.
pub fn mse_lower_bound_with(
    op: &SystemOperator,
    r: &Matrix,
    supports: &SupportCollection,
) -> Result<BoundReport> {
    if supports.is_empty() {
        return Err(Error::Domain("empty support collection".into()));
    }
    let r_inv = linalg::inv_spd(r)?;
    let mut terms = Vec::with_capacity(supports.len());
    // Reduction in support order: keeps the sum bit-reproducible.
    let mut acc = 0.0;
    for s in &supports.sets {
        let t = op.oracle_mse_term(&r_inv, s)?;
        acc += t;
        terms.push(t);
    }
    Ok(BoundReport {
        value: acc / supports.len() as f64,
        per_support_terms: Some(terms),
        support_count_used: supports.len(),
        exact: supports.exact,
    })
}

/// Matrix-inversion-lemma form of the noise-covariance inverse for one
/// terminal; falls back to the trivial diagonal when sigma_v = 0.
pub fn woodbury_noise_inverse(a: &Matrix, spec: &ChannelSpec) -> Result<Matrix> {
    check_sensing_shape(a, spec)?;
    let sw2 = spec.sigma_w * spec.sigma_w;
    if spec.sigma_v == 0.0 {
        return Ok(Matrix::identity(spec.m).scale(1.0 / sw2));
    }
    let c = spec.g * spec.g * spec.sigma_v * spec.sigma_v;
    // (sw2 I + c A A^T)^{-1} = sw2^{-1} I - sw2^{-2} A (c^{-1} I + sw2^{-1} A^T A)^{-1} A^T
    let inner = a.t_matmul(a).scale(1.0 / sw2).add_scaled_identity(1.0 / c);
    let inner_inv = linalg::inv_spd(&inner)?;
    let correction = a.matmul(&inner_inv).matmul_t(a).scale(1.0 / (sw2 * sw2));
    Ok(Matrix::identity(spec.m).scale(1.0 / sw2).sub(&correction).symmetrize())
}

/// MSE of the (support-agnostic) LMMSE estimator.
pub fn lmmse_upper_bound(matrices: &[Matrix], spec: &SystemSpec, r_x: &Matrix) -> Result<f64> {
    let op = SystemOperator::new(matrices, spec)?;
    lmmse_upper_bound_with(&op, r_x)
}

pub fn lmmse_upper_bound_with(op: &SystemOperator, r_x: &Matrix) -> Result<f64> {
    let n = r_x.rows();
    let rx_inv = match linalg::inv_spd(r_x) {
        Ok(m) => m,
        Err(_) => {
            // Rank-deficient prior: ridge just enough to invert.
            let eps = 1e-10 * r_x.trace() / n as f64;
            linalg::inv_spd(&r_x.clone().add_scaled_identity(eps))?
        }
    };
    let total = rx_inv.add(&op.gram);
    Ok(linalg::inv_spd(&total)?.trace())
}

/// Column normalization transform: returns (A S, s1, s2) where S scales each
/// column to unit norm and s1/s2 are the max/min original column norms.
pub fn column_normalizer(a: &Matrix) -> Result<(Matrix, f64, f64)> {
    let mut norms = Vec::with_capacity(a.cols());
    for j in 0..a.cols() {
        let n: f64 = (0..a.rows()).map(|i| a.get(i, j) * a.get(i, j)).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::Domain("cannot normalize a zero column".into()));
        }
        norms.push(n);
    }
    let mut out = a.clone();
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            out.set(i, j, a.get(i, j) / norms[j]);
        }
    }
    let s1 = norms.iter().cloned().fold(f64::MIN, f64::max);
    let s2 = norms.iter().cloned().fold(f64::MAX, f64::min);
    Ok((out, s1, s2))
}

/// Gershgorin sandwich on the oracle bound in terms of mutual coherence.
/// `s1`/`s2` are the max/min diagonal entries of the inverse column
/// normalizer of the original (unnormalized) matrix; pass 1.0 for a matrix
/// that already has unit columns.
pub fn coherence_sandwich(
    _a_normalized: &Matrix,
    spec: &ChannelSpec,
    r: &Matrix,
    mu: f64,
    s1: f64,
    s2: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Domain(format!("mutual coherence {} outside [0, 1]", mu)));
    }
    let k = r.rows() as f64;
    let eig = linalg::sym_eig(r)?;
    let lam_min_r = *eig.eigenvalues.last().unwrap();
    let lam_max_r = eig.eigenvalues[0];
    if lam_min_r <= 0.0 {
        return Err(Error::Definiteness("R must be positive definite".into()));
    }
    let lam_max_rinv = 1.0 / lam_min_r;
    let lam_min_rinv = 1.0 / lam_max_r;
    let snr = spec.g * spec.g / (spec.sigma_w * spec.sigma_w);
    let lower = k / (lam_max_rinv + snr * s1 * (1.0 + k * mu));
    let upper = if k * mu >= 1.0 {
        f64::INFINITY
    } else {
        k / (lam_min_rinv + snr * s2 * (1.0 - k * mu))
    };
    Ok((lower, upper))
}

/// Convenience: select the columns of an effective matrix at a support.
pub fn restrict_columns(b: &Matrix, s: &SupportSet) -> Matrix {
    b.select_columns(s.indices())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        enumerate_supports, exponential_covariance, CovarianceMode, SourceModel,
    };
    use crate::rng::Stream;

    fn first_rows_identity(m: usize, n: usize) -> Matrix {
        Matrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    fn random_matrix(rows: usize, cols: usize, stream: &mut Stream) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| stream.normal())
    }

    #[test]
    fn noise_covariance_examples() {
        let n = 4;
        let spec = ChannelSpec::identity(n, 1.5, 0.0, 2.0, 2, 5.0).unwrap();
        let a = first_rows_identity(2, n);
        let rn = noise_covariance(&[a.clone()], &SystemSpec::Single(spec)).unwrap();
        assert!(rn.matrix.sub(&Matrix::identity(2).scale(4.0)).frobenius_norm() < 1e-15);

        let spec = ChannelSpec::identity(n, 1.0, 1.0, 1.0, 3, 5.0).unwrap();
        let a = first_rows_identity(3, n);
        let rn = noise_covariance(&[a], &SystemSpec::Single(spec)).unwrap();
        assert!(rn.matrix.sub(&Matrix::identity(3).scale(2.0)).frobenius_norm() < 1e-14);

        // Orthogonal MAC with sigma_v = 0 on both terminals.
        let t1 = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 2, 1.0).unwrap();
        let t2 = ChannelSpec::identity(n, 1.0, 0.0, 3.0, 2, 1.0).unwrap();
        let mac = crate::model::MultiTerminalSpec::new([t1, t2], MacMode::Orthogonal, 2.0).unwrap();
        let a = first_rows_identity(2, n);
        let rn = noise_covariance(&[a.clone(), a], &SystemSpec::Multi(mac)).unwrap();
        let expect = Matrix::blkdiag(&[
            &Matrix::identity(2),
            &Matrix::identity(2).scale(9.0),
        ]);
        assert!(rn.matrix.sub(&expect).frobenius_norm() < 1e-15);
    }

    #[test]
    fn oracle_zero_input_and_noiseless_limit() {
        let n = 6;
        let k = 2;
        let r = exponential_covariance(k, 0.4, 1.0).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1e-6, 4, 5.0).unwrap();
        let mut stream = Stream::root(7);
        let a = random_matrix(4, n, &mut stream);
        let sys = SystemSpec::Single(spec);
        let s = SupportSet::new(vec![1, 4], n).unwrap();

        let zero = oracle_estimate(&vec![0.0; 4], &s, &[a.clone()], &sys, &r).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        // Vanishing noise: estimate converges to the truth on-support.
        let x_s = [0.8, -1.3];
        let mut x = vec![0.0; n];
        x[1] = x_s[0];
        x[4] = x_s[1];
        let y = a.matvec(&x);
        let xhat = oracle_estimate(&y, &s, &[a], &sys, &r).unwrap();
        for i in 0..n {
            assert!((xhat[i] - x[i]).abs() < 1e-3, "entry {}: {} vs {}", i, xhat[i], x[i]);
        }
    }

    #[test]
    fn oracle_monte_carlo_matches_bound() {
        // The oracle estimator's empirical MSE equals the analytic bound.
        let n = 8;
        let k = 2;
        let m = 4;
        let r = exponential_covariance(k, 0.5, 1.0).unwrap();
        let model = SourceModel::new(n, k, r.clone()).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 0.5, m, 5.0).unwrap();
        let mut stream = Stream::root(42);
        let a = random_matrix(m, n, &mut stream);
        let sys = SystemSpec::Single(spec);

        let supports = SupportCollection::exact(n, k).unwrap();
        let lb = mse_lower_bound(&[a.clone()], &sys, &r, &supports).unwrap();

        let op = SystemOperator::new(&[a], &sys).unwrap();
        let r_inv = linalg::inv_spd(&r).unwrap();
        let trials = 100_000;
        let mut se_sum = 0.0;
        for _ in 0..trials {
            let (s, x) = model.draw(&mut stream);
            let mut y = op.b.matvec(&x);
            for v in y.iter_mut() {
                *v += 0.5 * stream.normal();
            }
            let xhat = op.oracle_estimate(&r_inv, &s, &y).unwrap();
            se_sum += x
                .iter()
                .zip(&xhat)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let emp = se_sum / trials as f64;
        let rel = (emp - lb.value).abs() / lb.value;
        assert!(rel < 0.05, "empirical {} vs bound {} (rel {})", emp, lb.value, rel);
    }

    #[test]
    fn lower_bound_hand_sum() {
        // N=4, K=1, A = first M rows of I: per-support scalar terms.
        let n = 4;
        let m = 2;
        let r = Matrix::diag(&[1.0]);
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, m, 1.0).unwrap();
        let a = first_rows_identity(m, n);
        let sys = SystemSpec::Single(spec);
        let supports = SupportCollection::exact(n, 1).unwrap();
        let lb = mse_lower_bound(&[a], &sys, &r, &supports).unwrap();
        // Supports {0},{1} captured (term 1/2), {2},{3} not (term 1).
        let expect = (0.5 + 0.5 + 1.0 + 1.0) / 4.0;
        assert!((lb.value - expect).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_no_information() {
        let n = 5;
        let k = 2;
        let r = exponential_covariance(k, 0.3, 2.0).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 2, 1.0).unwrap();
        let sys = SystemSpec::Single(spec);
        let supports = SupportCollection::exact(n, k).unwrap();
        let lb = mse_lower_bound(&[Matrix::zeros(2, n)], &sys, &r, &supports).unwrap();
        assert!((lb.value - r.trace()).abs() < 1e-12);
        assert!(lb.value <= r.trace() + 1e-12);
    }

    #[test]
    fn sampled_equals_exact_when_full() {
        let n = 6;
        let k = 2;
        let r = exponential_covariance(k, 0.4, 1.0).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 3, 1.0).unwrap();
        let mut stream = Stream::root(3);
        let a = random_matrix(3, n, &mut stream);
        let sys = SystemSpec::Single(spec);
        let exact = SupportCollection::exact(n, k).unwrap();
        let total = exact.len();
        let sampled = SupportCollection::sampled(n, k, total, &mut stream).unwrap();
        let v1 = mse_lower_bound(&[a.clone()], &sys, &r, &exact).unwrap().value;
        let v2 = mse_lower_bound(&[a], &sys, &r, &sampled).unwrap().value;
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn sampled_bound_unbiased() {
        let n = 10;
        let k = 2;
        let r = exponential_covariance(k, 0.5, 1.0).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 4, 1.0).unwrap();
        let mut stream = Stream::root(17);
        let a = random_matrix(4, n, &mut stream);
        let sys = SystemSpec::Single(spec);
        let op = SystemOperator::new(&[a.clone()], &sys).unwrap();
        let exact = mse_lower_bound_with(&op, &r, &SupportCollection::exact(n, k).unwrap())
            .unwrap()
            .value;
        let resamples = 200;
        let mut vals = Vec::with_capacity(resamples);
        for _ in 0..resamples {
            let c = SupportCollection::sampled(n, k, 20, &mut stream).unwrap();
            vals.push(mse_lower_bound_with(&op, &r, &c).unwrap().value);
        }
        let mean: f64 = vals.iter().sum::<f64>() / resamples as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (resamples - 1) as f64;
        let se = (var / resamples as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 2.0 * se.max(1e-12),
            "mean {} exact {} se {}",
            mean,
            exact,
            se
        );
    }

    #[test]
    fn woodbury_matches_direct() {
        let mut stream = Stream::root(9);
        for trial in 0..100 {
            let m = 3 + trial % 3;
            let l = m + 2 + trial % 4;
            let spec = ChannelSpec::new(
                Matrix::identity(l),
                0.5 + stream.uniform(),
                0.2 + stream.uniform(),
                0.3 + stream.uniform(),
                m,
                1.0,
            )
            .unwrap();
            let a = random_matrix(m, l, &mut stream);
            let direct = linalg::inv_spd(
                &noise_covariance(&[a.clone()], &SystemSpec::Single(spec.clone())).unwrap().matrix,
            )
            .unwrap();
            let wood = woodbury_noise_inverse(&a, &spec).unwrap();
            let rel = wood.sub(&direct).frobenius_norm() / direct.frobenius_norm();
            assert!(rel < 1e-8, "trial {}: rel {}", trial, rel);
        }

        // sigma_v = 0 path.
        let spec = ChannelSpec::identity(5, 1.0, 0.0, 2.0, 3, 1.0).unwrap();
        let a = random_matrix(3, 5, &mut stream);
        let w = woodbury_noise_inverse(&a, &spec).unwrap();
        assert!(w.sub(&Matrix::identity(3).scale(0.25)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn lmmse_examples_and_ordering() {
        let n = 6;
        let k = 2;
        let r = exponential_covariance(k, 0.5, 1.0).unwrap();
        let model = SourceModel::new(n, k, r.clone()).unwrap();
        let rx = crate::model::source_covariance(&model, CovarianceMode::Analytic).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 3, 1.0).unwrap();
        let sys = SystemSpec::Single(spec);

        let ub0 = lmmse_upper_bound(&[Matrix::zeros(3, n)], &sys, &rx).unwrap();
        assert!((ub0 - rx.trace()).abs() < 1e-9 * rx.trace());

        let mut stream = Stream::root(23);
        for _ in 0..20 {
            let a = random_matrix(3, n, &mut stream);
            let ub = lmmse_upper_bound(&[a.clone()], &sys, &rx).unwrap();
            let lb = mse_lower_bound(&[a], &sys, &r, &SupportCollection::exact(n, k).unwrap())
                .unwrap()
                .value;
            assert!(lb <= ub + 1e-9, "lb {} > ub {}", lb, ub);
        }
    }

    #[test]
    fn lmmse_monotone_in_gain() {
        let n = 4;
        let rx = Matrix::identity(n).scale(0.5);
        let mut prev = f64::INFINITY;
        for &g in &[1.0, 2.0, 4.0, 8.0, 64.0] {
            // M = N - 1 keeps the spec's M < L invariant while A captures most rows.
            let spec = ChannelSpec::identity(n, g, 0.0, 1.0, n - 1, 1.0).unwrap();
            let a = first_rows_identity(n - 1, n);
            let ub = lmmse_upper_bound(&[a], &SystemSpec::Single(spec), &rx).unwrap();
            assert!(ub < prev);
            prev = ub;
        }
    }

    #[test]
    fn sandwich_collapse_and_guard() {
        let k = 2;
        let r = Matrix::identity(k).scale(4.0); // sigma_x^2 = 4
        let spec = ChannelSpec::identity(6, 2.0, 0.0, 1.0, 3, 1.0).unwrap();
        let a = Matrix::identity(3); // placeholder, unused by the formula
        let (lo, hi) = coherence_sandwich(&a, &spec, &r, 0.0, 1.0, 1.0).unwrap();
        let expect = k as f64 / (0.25 + 4.0);
        assert!((lo - expect).abs() < 1e-12);
        assert!((hi - expect).abs() < 1e-12);

        let (_, hi) = coherence_sandwich(&a, &spec, &r, 0.6, 1.0, 1.0).unwrap();
        assert!(hi.is_infinite());

        assert!(coherence_sandwich(&a, &spec, &r, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn sandwich_brackets_bound() {
        // H = I, sigma_v = 0: sandwich must bracket the exact oracle bound.
        // Random Gaussian matrices have high coherence at K=2, so mix K=1
        // Gaussian configs with K=2 truncated random-orthogonal configs.
        let n = 8;
        let mut stream = Stream::root(31);
        let mut checked = 0;
        for trial in 0..400 {
            if checked >= 100 {
                break;
            }
            let (k, raw) = if trial % 2 == 0 {
                let m = 4 + stream.uniform_index(2);
                (1, random_matrix(m, n, &mut stream))
            } else {
                // First N-1 rows of a random orthogonal matrix: low coherence.
                let q = linalg::random_orthogonal(n, &mut stream);
                (2, q.block(0, 0, n - 1, n))
            };
            let r = Matrix::identity(k);
            let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, raw.rows(), 1.0).unwrap();
            // The sandwich is stated for unit-column matrices: normalize and
            // evaluate the bound on the normalized matrix (s1 = s2 = 1).
            let (a_norm, _, _) = column_normalizer(&raw).unwrap();
            let mu = crate::model::mutual_coherence(&a_norm).unwrap();
            if (k as f64) * mu >= 1.0 {
                continue;
            }
            let (lo, hi) = coherence_sandwich(&a_norm, &spec, &r, mu, 1.0, 1.0).unwrap();
            let lb = mse_lower_bound(
                &[a_norm.clone()],
                &SystemSpec::Single(spec),
                &r,
                &SupportCollection::exact(n, k).unwrap(),
            )
            .unwrap()
            .value;
            assert!(lo <= lb + 1e-9 && lb <= hi + 1e-9, "{} <= {} <= {}", lo, lb, hi);
            checked += 1;
        }
        assert!(checked >= 100, "too few eligible random configs: {}", checked);
    }

    #[test]
    fn lower_bound_decreases_with_power() {
        let n = 6;
        let k = 2;
        let r = exponential_covariance(k, 0.5, 1.0).unwrap();
        let spec = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 3, 1.0).unwrap();
        let mut stream = Stream::root(4);
        let a = random_matrix(3, n, &mut stream);
        let sys = SystemSpec::Single(spec);
        let supports = SupportCollection::exact(n, k).unwrap();
        let mut prev = f64::INFINITY;
        for &c in &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = mse_lower_bound(&[a.scale(c)], &sys, &r, &supports).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn effective_system_mac_shapes() {
        let n = 6;
        let t1 = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 2, 1.0).unwrap();
        let t2 = ChannelSpec::identity(n, 0.5, 0.0, 1.0, 3, 1.0).unwrap();
        let mac =
            crate::model::MultiTerminalSpec::new([t1, t2], MacMode::Orthogonal, 2.0).unwrap();
        let mut stream = Stream::root(8);
        let a1 = random_matrix(2, n, &mut stream);
        let a2 = random_matrix(3, n, &mut stream);
        let eff = effective_system(&[a1, a2], &SystemSpec::Multi(mac)).unwrap();
        assert_eq!(eff.b.rows(), 5);
        assert_eq!(eff.b.cols(), n);
        assert_eq!(eff.r_n.rows(), 5);

        let t1 = ChannelSpec::identity(n, 1.0, 0.0, 1.0, 3, 1.0).unwrap();
        let t2 = ChannelSpec::identity(n, 2.0, 0.0, 1.0, 3, 1.0).unwrap();
        let mac = crate::model::MultiTerminalSpec::new([t1, t2], MacMode::Coherent, 2.0).unwrap();
        let a1 = random_matrix(3, n, &mut stream);
        let a2 = random_matrix(3, n, &mut stream);
        let eff =
            effective_system(&[a1.clone(), a2.clone()], &SystemSpec::Multi(mac)).unwrap();
        let expect = a1.add(&a2.scale(2.0));
        assert!(eff.b.sub(&expect).frobenius_norm() < 1e-12);
    }

    #[test]
    fn enumerate_capacity_guard_propagates() {
        assert!(enumerate_supports(64, 16, 1000).is_err());
    }
}
