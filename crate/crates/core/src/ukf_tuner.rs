//! Unscented Kalman filter update law for tuning a parameter vector.
//!
//! The tuned parameters play the role of the filter state and follow a random
//! walk with covariance `C_y`. Each update draws `2L + 1` sigma points around
//! the current estimate, pushes every point through a caller-supplied rollout
//! that returns a stacked measurement, and forms the Kalman gain from the
//! weighted sample covariances:
//!
//! ```text
//! P⁻   = P + C_y
//! yᶦ   = ŷ ± √(L+λ)·chol(P⁻)ᶦ
//! xᶦ   = measure(yᶦ),  x̂ = Σ wₐᶦ xᶦ
//! S    = C_v + Σ w꜀ᶦ (xᶦ-x̂)(xᶦ-x̂)ᵀ
//! C_sz = Σ w꜀ᶦ (yᶦ-ŷ)(xᶦ-x̂)ᵀ
//! K    = C_sz S⁻¹,  Δy = K (x_ref - x̂),  P⁺ = P⁻ - K S Kᵀ
//! ```

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::param_net::ParamVector;
use crate::parallel::{map_indexed, Parallelism};
use crate::{Error, Result};

/// Jitter ladder for Cholesky factorizations: 0, then 1e-12 up to 1e-6.
pub const JITTER_START: f64 = 1e-12;
pub const JITTER_MAX: f64 = 1e-6;

/// Stacked horizon measurement, timestep-major and channel-minor, with the
/// per-channel costs already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStack(pub Vec<f64>);

impl MeasurementStack {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Scaled unscented-transform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaWeights {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub dim: usize,
}

impl SigmaWeights {
    pub fn num_points(&self) -> usize {
        2 * self.dim + 1
    }

    /// `√(L + λ)`, the spread applied to each Cholesky column.
    pub fn spread(&self) -> f64 {
        (self.dim as f64 + self.lambda).sqrt()
    }
}

pub fn sigma_weights(dim: usize, alpha: f64, beta: f64, kappa: f64) -> Result<SigmaWeights> {
    if dim == 0 {
        return Err(Error::invalid("dim", "parameter dimension must be >= 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() || !beta.is_finite() || !kappa.is_finite() {
        return Err(Error::invalid(
            "alpha",
            format!("need alpha > 0 and finite beta/kappa, got ({alpha}, {beta}, {kappa})"),
        ));
    }
    let l = dim as f64;
    let lambda = alpha * alpha * (l + kappa) - l;
    let denom = l + lambda;
    if denom == 0.0 {
        return Err(Error::DegenerateScaling(denom));
    }
    if denom < 0.0 {
        // the spread √(L+λ) would be imaginary
        return Err(Error::DegenerateScaling(denom));
    }
    let n = 2 * dim + 1;
    let rest = 1.0 / (2.0 * denom);
    let mut mean = vec![rest; n];
    let mut cov = vec![rest; n];
    mean[0] = lambda / denom;
    cov[0] = lambda / denom + (1.0 - alpha * alpha + beta);
    Ok(SigmaWeights {
        mean,
        cov,
        alpha,
        beta,
        kappa,
        lambda,
        dim,
    })
}

/// Sigma points stored as the columns of an `L × (2L+1)` matrix.
#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: DMatrix<f64>,
    /// Diagonal jitter that was needed to factor the covariance.
    pub jitter: f64,
}

impl SigmaPoints {
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let l = self.points.nrows();
        &self.points.as_slice()[i * l..(i + 1) * l]
    }

    pub fn to_param_vectors(&self) -> Vec<ParamVector> {
        (0..self.len())
            .map(|i| ParamVector::from(DVector::from_column_slice(self.point(i))))
            .collect()
    }
}

pub fn sigma_points(
    center: &ParamVector,
    cov: &DMatrix<f64>,
    weights: &SigmaWeights,
) -> Result<SigmaPoints> {
    let l = center.len();
    if weights.dim != l {
        return Err(Error::DimensionMismatch {
            what: "sigma weights",
            expected: l,
            got: weights.dim,
        });
    }
    if cov.shape() != (l, l) {
        return Err(Error::DimensionMismatch {
            what: "covariance",
            expected: l,
            got: cov.nrows(),
        });
    }
    let (factor, jitter) = psd_cholesky(cov, "estimate covariance")?;
    let spread = weights.spread();
    let mut points = DMatrix::zeros(l, 2 * l + 1);
    let c = center.as_slice();
    points.column_mut(0).copy_from_slice(c);
    for i in 0..l {
        let col = factor.column(i);
        for r in 0..l {
            let s = spread * col[r];
            points[(r, i + 1)] = c[r] + s;
            points[(r, i + 1 + l)] = c[r] - s;
        }
    }
    Ok(SigmaPoints { points, jitter })
}

/// Lower Cholesky factor of a symmetric positive semi-definite matrix.
///
/// Zero pivots (within rounding) yield zero columns, so singular PSD inputs
/// factor without jitter. Genuinely indefinite inputs escalate a diagonal
/// jitter from [`JITTER_START`] by ×10 up to [`JITTER_MAX`].
pub fn psd_cholesky(a: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, f64)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let sym = symmetrize(a);
    if let Some(f) = semidefinite_factor(&sym, 0.0) {
        return Ok((f, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        if let Some(f) = semidefinite_factor(&sym, jitter) {
            return Ok((f, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::CholeskyFailed {
        what,
        max_jitter: JITTER_MAX,
    })
}

fn semidefinite_factor(a: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 64.0 * f64::EPSILON * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d < -tol {
            return None;
        }
    }
    Some(l)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Diagonal of `C_y`, the per-update parameter random-walk covariance.
    pub process_noise: f64,
    /// Diagonal of `C_v`.
    pub measurement_noise: f64,
    /// Diagonal of the initial estimate covariance.
    pub initial_covariance: f64,
    pub parallelism: Parallelism,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            alpha: 1e-1,
            beta: 2.0,
            kappa: 0.0,
            process_noise: 1e-4,
            measurement_noise: 1e-2,
            initial_covariance: 1e-2,
            parallelism: Parallelism::Parallel,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("process_noise", self.process_noise),
            ("measurement_noise", self.measurement_noise),
            ("initial_covariance", self.initial_covariance),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Filter state owned by a single tuning worker.
#[derive(Debug, Clone)]
pub struct TunerState {
    pub estimate: ParamVector,
    pub covariance: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub weights: SigmaWeights,
    pub parallelism: Parallelism,
}

impl TunerState {
    pub fn new(initial: ParamVector, config: &TunerConfig, meas_dim: usize) -> Result<Self> {
        config.validate()?;
        let l = initial.len();
        if meas_dim == 0 {
            return Err(Error::invalid("meas_dim", "measurement dimension must be >= 1"));
        }
        Ok(TunerState {
            weights: sigma_weights(l, config.alpha, config.beta, config.kappa)?,
            estimate: initial,
            covariance: DMatrix::from_diagonal_element(l, l, config.initial_covariance),
            process_noise: DMatrix::from_diagonal_element(l, l, config.process_noise),
            measurement_noise: DMatrix::from_diagonal_element(
                meas_dim,
                meas_dim,
                config.measurement_noise,
            ),
            parallelism: config.parallelism,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.estimate.len()
    }

    pub fn meas_dim(&self) -> usize {
        self.measurement_noise.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Cholesky,
    Lu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    pub innovation_norm: f64,
    pub delta_norm: f64,
    pub trace_prior: f64,
    pub trace_posterior: f64,
    /// `max|eig(S)| / min|eig(S)|`.
    pub s_condition: f64,
    pub p_jitter: f64,
    pub s_jitter: f64,
    pub s_solver: SolveMethod,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct UkfStep {
    pub delta: ParamVector,
    pub state: TunerState,
    pub gain: DMatrix<f64>,
    pub diagnostics: UpdateDiagnostics,
}

/// One auto-tuning update. `state` is left untouched; the caller adopts
/// `UkfStep::state` on success.
pub fn ukf_update<F>(state: &TunerState, measure: F, x_ref: &MeasurementStack) -> Result<UkfStep>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync,
{
    let started = Instant::now();
    let m = state.meas_dim();
    if x_ref.len() != m {
        return Err(Error::DimensionMismatch {
            what: "reference measurement",
            expected: m,
            got: x_ref.len(),
        });
    }
    if x_ref.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reference measurement"));
    }

    let prior = symmetrize(&(&state.covariance + &state.process_noise));
    let sigma = sigma_points(&state.estimate, &prior, &state.weights)?;
    let n = sigma.len();

    let rollouts = map_indexed(n, state.parallelism, |i| measure(sigma.point(i)));
    let mut preds = DMatrix::<f64>::zeros(m, n);
    for (i, r) in rollouts.into_iter().enumerate() {
        let x = r?;
        if x.len() != m {
            return Err(Error::DimensionMismatch {
                what: "rollout output",
                expected: m,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rollout output"));
        }
        preds.column_mut(i).copy_from_slice(&x);
    }

    let x_hat = weighted_mean(&preds, &state.weights.mean);
    let y_hat = weighted_mean(&sigma.points, &state.weights.mean);

    let mut dx = preds;
    let mut dy = sigma.points;
    for i in 0..n {
        let mut c = dx.column_mut(i);
        c -= &x_hat;
        let mut c = dy.column_mut(i);
        c -= &y_hat;
    }
    let mut dx_w = dx.clone();
    for (i, w) in state.weights.cov.iter().enumerate() {
        dx_w.column_mut(i).scale_mut(*w);
    }
    let s = symmetrize(&(&state.measurement_noise + &dx_w * dx.transpose()));
    let c_sz = &dy * dx_w.transpose();

    // K = C_sz S⁻¹, via S Kᵀ = C_szᵀ
    let (k_t, s_jitter, s_solver) = solve_symmetric(&s, &c_sz.transpose())?;
    let gain = k_t.transpose();

    let innovation = DVector::from_column_slice(x_ref.as_slice()) - &x_hat;
    let delta_v = &gain * &innovation;
    let posterior = symmetrize(&(&prior - &c_sz * &k_t));
    if posterior.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("posterior covariance"));
    }

    let delta = ParamVector::from_vec(delta_v.as_slice().to_vec())?;
    let estimate = apply_update(&state.estimate, &delta)?;

    let diagnostics = UpdateDiagnostics {
        innovation_norm: innovation.norm(),
        delta_norm: delta.norm(),
        trace_prior: prior.trace(),
        trace_posterior: posterior.trace(),
        s_condition: condition_estimate(&s),
        p_jitter: sigma.jitter,
        s_jitter,
        s_solver,
        elapsed: started.elapsed(),
    };
    let new_state = TunerState {
        estimate,
        covariance: posterior,
        process_noise: state.process_noise.clone(),
        measurement_noise: state.measurement_noise.clone(),
        weights: state.weights.clone(),
        parallelism: state.parallelism,
    };
    Ok(UkfStep {
        delta,
        state: new_state,
        gain,
        diagnostics,
    })
}

/// `Σ wᵢ Xᵢ` over the columns of `cols`, evaluated as
/// `X₀ + Σ_{i≥1} wᵢ (Xᵢ − X₀)` so the large centre weight of small-`α` sets
/// does not cancel against the others.
pub fn weighted_mean(cols: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
    let x0 = cols.column(0).into_owned();
    let mut acc = DVector::zeros(cols.nrows());
    for (i, wi) in w.iter().enumerate().skip(1) {
        acc.axpy(*wi, &(cols.column(i) - &x0), 1.0);
    }
    x0 + acc
}

/// `Σ wᵢ (Xᵢ − μ)(Xᵢ − μ)ᵀ`.
pub fn weighted_covariance(cols: &DMatrix<f64>, mean: &DVector<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(cols.nrows(), cols.nrows());
    for (i, wi) in w.iter().enumerate() {
        let d = cols.column(i) - mean;
        out.ger(*wi, &d, &d, 1.0);
    }
    out
}

/// Solves `S X = B` for symmetric `S`: Cholesky with the jitter ladder first,
/// LU as the fallback for indefinite `S`.
fn solve_symmetric(
    s: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64, SolveMethod)> {
    let n = s.nrows();
    let mut jitter = 0.0;
    loop {
        let a = if jitter == 0.0 {
            s.clone()
        } else {
            s + DMatrix::<f64>::identity(n, n) * jitter
        };
        if let Some(ch) = a.cholesky() {
            return Ok((ch.solve(b), jitter, SolveMethod::Cholesky));
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            break;
        }
    }
    log::debug!("innovation covariance not positive definite, falling back to LU");
    let x = s.clone().lu().solve(b).ok_or(Error::SingularInnovation)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    Ok((x, 0.0, SolveMethod::Lu))
}

fn condition_estimate(s: &DMatrix<f64>) -> f64 {
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `y_t = y_{t-N} + Δy_t`.
pub fn apply_update(anchor: &ParamVector, delta: &ParamVector) -> Result<ParamVector> {
    if anchor.len() != delta.len() {
        return Err(Error::DimensionMismatch {
            what: "parameter delta",
            expected: anchor.len(),
            got: delta.len(),
        });
    }
    ParamVector::from_vec(
        anchor
            .as_slice()
            .iter()
            .zip(delta.as_slice())
            .map(|(a, d)| a + d)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_hand_evaluated() {
        let w = sigma_weights(1, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(w.lambda, 2.0);
        assert_relative_eq!(w.mean[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(w.mean[1], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(w.mean[2], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(w.cov[0], 2.0 / 3.0 + 2.0, epsilon = 1e-15);
    }

    #[test]
    fn weights_normalize() {
        for &(l, a, b, k) in &[(198, 0.1, 2.0, 0.0), (3, 0.5, 0.0, 1.0), (209, 1.0, 2.0, 0.0)] {
            let w = sigma_weights(l, a, b, k).unwrap();
            assert!((w.mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(sigma_weights(198, 0.1, 2.0, 0.0).unwrap().mean.len(), 397);
    }

    #[test]
    fn degenerate_scaling_rejected() {
        // kappa = -L makes L + lambda = 0
        assert!(matches!(
            sigma_weights(4, 0.5, 2.0, -4.0),
            Err(Error::DegenerateScaling(_))
        ));
        assert!(sigma_weights(4, 0.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn zero_covariance_collapses_points() {
        let w = sigma_weights(4, 0.1, 2.0, 0.0).unwrap();
        let c = ParamVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let sp = sigma_points(&c, &DMatrix::zeros(4, 4), &w).unwrap();
        assert_eq!(sp.jitter, 0.0);
        for p in sp.to_param_vectors() {
            assert_eq!(p, c);
        }
    }

    #[test]
    fn non_finite_covariance_rejected() {
        let w = sigma_weights(2, 0.1, 2.0, 0.0).unwrap();
        let c = ParamVector::zeros(2);
        let mut p = DMatrix::identity(2, 2);
        p[(0, 1)] = f64::NAN;
        assert!(matches!(sigma_points(&c, &p, &w), Err(Error::NonFinite(_))));
    }

    #[test]
    fn indefinite_covariance_fails_after_jitter() {
        let w = sigma_weights(2, 0.1, 2.0, 0.0).unwrap();
        let c = ParamVector::zeros(2);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(sigma_points(&c, &p, &w), Err(Error::CholeskyFailed { .. })));
    }

    #[test]
    fn tiny_negative_eigenvalue_absorbed_by_jitter() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-9]);
        let (_, jitter) = psd_cholesky(&p, "test").unwrap();
        assert!(jitter > 0.0 && jitter <= JITTER_MAX);
    }

    fn scalar_state(p: f64, cy: f64, cv: f64, y: f64) -> TunerState {
        let cfg = TunerConfig {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
            process_noise: cy,
            measurement_noise: cv,
            initial_covariance: p,
            parallelism: Parallelism::Sequential,
        };
        TunerState::new(ParamVector::from_vec(vec![y]).unwrap(), &cfg, 1).unwrap()
    }

    #[test]
    fn linear_scalar_gain() {
        let st = scalar_state(1.0, 0.0, 1.0, 0.0);
        let step = ukf_update(&st, |y| Ok(vec![2.0 * y[0]]), &MeasurementStack(vec![1.0])).unwrap();
        assert_relative_eq!(step.gain[(0, 0)], 0.4, epsilon = 1e-12);
        assert_relative_eq!(step.delta.as_slice()[0], 0.4, epsilon = 1e-12);
        // P⁺ = 1 - 0.4·5·0.4 = 0.2
        assert_relative_eq!(step.state.covariance[(0, 0)], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn zero_innovation_gives_zero_delta() {
        let st = scalar_state(0.5, 0.01, 0.1, 0.7);
        let step = ukf_update(&st, |y| Ok(vec![3.0 * y[0] + 1.0]), &MeasurementStack(vec![3.1]))
            .unwrap();
        assert!(step.delta.norm() < 1e-10);
    }

    #[test]
    fn covariance_shrinks() {
        let st = scalar_state(1.0, 0.1, 0.5, 0.0);
        let step = ukf_update(&st, |y| Ok(vec![y[0]]), &MeasurementStack(vec![2.0])).unwrap();
        assert!(step.diagnostics.trace_posterior < step.diagnostics.trace_prior);
    }

    #[test]
    fn non_finite_rollout_aborts() {
        let st = scalar_state(1.0, 0.0, 1.0, 0.0);
        let r = ukf_update(&st, |_| Ok(vec![f64::NAN]), &MeasurementStack(vec![1.0]));
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert_eq!(st.estimate.as_slice(), &[0.0]);
    }

    #[test]
    fn apply_update_examples() {
        let a = ParamVector::from_vec(vec![1.0, 2.0]).unwrap();
        let z = ParamVector::zeros(2);
        assert_eq!(apply_update(&a, &z).unwrap(), a);
        assert_eq!(apply_update(&z, &a).unwrap(), a);
        let d1 = ParamVector::from_vec(vec![0.5, -1.0]).unwrap();
        let d2 = ParamVector::from_vec(vec![0.25, 3.0]).unwrap();
        let seq = apply_update(&apply_update(&a, &d1).unwrap(), &d2).unwrap();
        let sum = apply_update(&a, &ParamVector::from_vec(vec![0.75, 2.0]).unwrap()).unwrap();
        assert_eq!(seq, sum);
        assert!(apply_update(&a, &ParamVector::zeros(3)).is_err());
    }

    #[test]
    fn update_is_deterministic_across_parallelism() {
        let cfg = TunerConfig {
            parallelism: Parallelism::Sequential,
            ..TunerConfig::default()
        };
        let init = ParamVector::from_vec(vec![0.1, -0.2, 0.3]).unwrap();
        let measure = |y: &[f64]| Ok(vec![y[0] * y[1], y[2].sin(), y[0] + y[2], y[1].max(0.0)]);
        let r = MeasurementStack(vec![0.3, 0.1, -0.2, 0.4]);
        let seq = TunerState::new(init.clone(), &cfg, 4).unwrap();
        let par = TunerState {
            parallelism: Parallelism::Parallel,
            ..seq.clone()
        };
        let a = ukf_update(&seq, measure, &r).unwrap();
        let b = ukf_update(&par, measure, &r).unwrap();
        assert_eq!(a.delta, b.delta);
        assert_eq!(a.state.covariance, b.state.covariance);
    }
}
