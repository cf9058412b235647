//! Conditional inference of the hidden factor from the asset path.
//!
//! Two filters cover the two example models:
//!
//! * **Kalman filter** ([`kalman_run`]) — exact for the linear
//!   Ornstein–Uhlenbeck model.  The conditional variance `Σ(t)` follows a
//!   scalar Riccati ODE solved per step with RK4, or is pinned at the
//!   steady state `Σ̄` of [`steady_state_variance`].  The effective signal
//!   loading `ā` of [`abar`] is what makes the partially observed linear
//!   model equivalent to a full-information one.
//! * **Grid Bayes filter** ([`grid_build`] / [`grid_step`]) — a
//!   finite-state Markov-chain approximation for the nonlinear (CIR)
//!   model.  The factor is discretized on `n` nodes; one step is
//!   predict-by-transition followed by a Bayes correction against the
//!   observed log-return.  The correction runs in log space with
//!   max-subtraction so the small-`σ` regime does not underflow.
//!
//! Transition rows are truncated to a band of ±8.5 kernel standard
//! deviations before normalization; the discarded mass is below `1e-15`
//! relative, comfortably inside the row-stochasticity tolerance, and the
//! banding makes the nested Monte Carlo affordable.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{check_feller, LinearOuModel, ScalarModel};
use crate::sim::PathBundle;

/// Kalman filter output along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    /// Conditional means `Ŷ(t_k)`, length `n_steps + 1`.
    pub yhat: Vec<f64>,
    /// Conditional variances `Σ(t_k)`, length `n_steps + 1`.
    pub var: Vec<f64>,
    /// Whether the variance was pinned at the steady state.
    pub steady: bool,
}

/// Steady-state conditional variance of the linear model:
/// `Σ̄ = −(κσ² + aρσ) + √((κσ² + aρσ)² + (aσ)²(1−ρ²))`.
///
/// Always nonnegative; it is the attracting root of the variance ODE used
/// by [`kalman_run`].
pub fn steady_state_variance(model: &LinearOuModel) -> f64 {
    let b = model.kappa * model.sigma * model.sigma + model.a * model.rho * model.sigma;
    let c = model.a * model.sigma * (1.0 - model.rho * model.rho).sqrt();
    -b + b.hypot(c)
}

/// Effective signal loading `ā = (Σ̄ + σaρ)/σ` of the equivalent
/// full-information model.
///
/// Computed as `(hyp − κσ²)/σ` with `hyp = √((κσ²+aρσ)² + (aσ)²(1−ρ²))`,
/// which makes the bound `ā ≥ −κσ` hold *exactly* in floating point
/// (`ā + κσ = hyp/σ ≥ 0`).
pub fn abar(model: &LinearOuModel) -> f64 {
    let b = model.kappa * model.sigma * model.sigma + model.a * model.rho * model.sigma;
    let c = model.a * model.sigma * (1.0 - model.rho * model.rho).sqrt();
    (b.hypot(c) - model.kappa * model.sigma * model.sigma) / model.sigma
}

/// Right-hand side of the conditional-variance ODE of the Kalman filter:
/// `dΣ/dt = a²(1−ρ²) − 2κΣ − (2aρ/σ)Σ − (Σ/σ)²`.
pub fn variance_ode_rhs(model: &LinearOuModel, var: f64) -> f64 {
    let LinearOuModel {
        kappa,
        a,
        rho,
        sigma,
        ..
    } = *model;
    a * a * (1.0 - rho * rho)
        - 2.0 * kappa * var
        - (2.0 * a * rho / sigma) * var
        - (var / sigma) * (var / sigma)
}

/// Runs the Kalman filter along a simulated linear-model path.
///
/// Update per step:
/// `Ŷ_{k+1} = Ŷ_k − κŶ_k dt + (Σ_k + σaρ)/σ² · Δν_k` with innovation
/// `Δν_k = ΔS_k/S_k − (μ + Ŷ_k) dt` (`ΔS/S` in the crate's discrete
/// convention; the display in the source sets `μ = 0`).  With
/// `use_steady`, `Σ` is pinned at [`steady_state_variance`] and `var0` is
/// ignored; otherwise `Σ` integrates the variance ODE from `var0` with one
/// RK4 step per grid step.
pub fn kalman_run(
    model: &LinearOuModel,
    path: &PathBundle,
    use_steady: bool,
    yhat0: f64,
    var0: f64,
) -> Result<KalmanTrack> {
    if !yhat0.is_finite() || !var0.is_finite() || var0 < 0.0 {
        return Err(Error::invalid(format!(
            "kalman initial state must be finite with var0 ≥ 0, got yhat0={yhat0}, var0={var0}"
        )));
    }
    if (path.sigma - model.sigma).abs() > 1e-12 * model.sigma.abs() {
        return Err(Error::invalid(format!(
            "path volatility {} does not match the model volatility {}",
            path.sigma, model.sigma
        )));
    }
    let n = path.n_steps();
    let dt = path.grid.dt();
    let sbar = steady_state_variance(model);
    let mut yhat = Vec::with_capacity(n + 1);
    let mut var = Vec::with_capacity(n + 1);
    yhat.push(yhat0);
    var.push(if use_steady { sbar } else { var0 });
    for k in 0..n {
        let y = yhat[k];
        let v = var[k];
        let gain = (v + model.sigma * model.a * model.rho) / (model.sigma * model.sigma);
        let innovation = path.return_over_step(k) - (model.mu + y) * dt;
        yhat.push(y - model.kappa * y * dt + gain * innovation);
        let v_next = if use_steady {
            sbar
        } else {
            let k1 = variance_ode_rhs(model, v);
            let k2 = variance_ode_rhs(model, v + 0.5 * dt * k1);
            let k3 = variance_ode_rhs(model, v + 0.5 * dt * k2);
            let k4 = variance_ode_rhs(model, v + dt * k3);
            (v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0)
        };
        var.push(v_next);
    }
    if yhat.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("kalman mean diverged"));
    }
    Ok(KalmanTrack {
        yhat,
        var,
        steady: use_steady,
    })
}

/// Prior laws the grid filter can be initialized with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridPrior {
    /// All mass on the node nearest to the given value.
    PointMass(f64),
    /// Stationary law of the factor (Gaussian for OU, Gamma for CIR; the
    /// latter requires the Feller condition so the density is bounded).
    Stationary,
    /// Gaussian with the given mean and variance, evaluated on the nodes.
    /// `var = 0` degenerates to a point mass.
    Gaussian {
        /// Prior mean.
        mean: f64,
        /// Prior variance (≥ 0).
        var: f64,
    },
}

impl GridPrior {
    fn evaluate(&self, model: &ScalarModel, nodes: &[f64]) -> Result<Vec<f64>> {
        let n = nodes.len();
        match *self {
            GridPrior::PointMass(y) => Ok(point_mass(nodes, y)),
            GridPrior::Gaussian { mean, var } => {
                if var < 0.0 || !var.is_finite() || !mean.is_finite() {
                    return Err(Error::invalid(format!(
                        "gaussian prior requires finite mean and var ≥ 0, got mean={mean}, var={var}"
                    )));
                }
                if var == 0.0 {
                    return Ok(point_mass(nodes, mean));
                }
                let logw: Vec<f64> = nodes
                    .iter()
                    .map(|&y| -(y - mean) * (y - mean) / (2.0 * var))
                    .collect();
                Ok(normalize_from_log(&logw))
            }
            GridPrior::Stationary => match model {
                ScalarModel::Linear(m) => GridPrior::Gaussian {
                    mean: 0.0,
                    var: m.stationary_var(),
                }
                .evaluate(model, nodes),
                ScalarModel::Cir(m) => {
                    if !check_feller(m) {
                        return Err(Error::condition(
                            "stationary CIR prior requires the Feller condition a² ≤ 2κȲ",
                        ));
                    }
                    // Gamma(shape, scale) with shape = 2κȲ/a² ≥ 1, scale = a²/(2κ).
                    let shape = 2.0 * m.kappa * m.ybar / (m.a * m.a);
                    let scale = m.a * m.a / (2.0 * m.kappa);
                    let logw: Vec<f64> = nodes
                        .iter()
                        .map(|&y| {
                            if y > 0.0 {
                                (shape - 1.0) * y.ln() - y / scale
                            } else if y == 0.0 && shape == 1.0 {
                                0.0
                            } else {
                                f64::NEG_INFINITY
                            }
                        })
                        .collect();
                    let w = normalize_from_log(&logw);
                    if w.iter().all(|&p| p == 0.0) {
                        return Err(Error::invalid(format!(
                            "stationary prior has no mass on the {n}-node grid"
                        )));
                    }
                    Ok(w)
                }
            },
        }
    }
}

fn point_mass(nodes: &[f64], y: f64) -> Vec<f64> {
    let idx = nearest_node(nodes, y);
    let mut p = vec![0.0; nodes.len()];
    p[idx] = 1.0;
    p
}

fn nearest_node(nodes: &[f64], y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &v) in nodes.iter().enumerate() {
        let d = (v - y).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Exponentiates log-weights with max-subtraction and normalizes to a
/// probability vector.  All-`-inf` input comes back as all zeros.
fn normalize_from_log(logw: &[f64]) -> Vec<f64> {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return vec![0.0; logw.len()];
    }
    let mut w: Vec<f64> = logw.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Row-banded one-step transition matrix.  Row `j` holds the weights for
/// columns `offset_j .. offset_j + weights_j.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedTransition {
    rows: Vec<(usize, Vec<f64>)>,
    n: usize,
}

impl BandedTransition {
    /// Dense `n×n` representation (tests and diagnostics only).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (j, (off, w)) in self.rows.iter().enumerate() {
            for (i, &v) in w.iter().enumerate() {
                dense[j][off + i] = v;
            }
        }
        dense
    }

    /// Applies the transpose to a probability vector: `out_i = Σ_j T_{ji} p_j`.
    fn apply_transpose(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, (off, w)) in self.rows.iter().enumerate() {
            let pj = p[j];
            if pj == 0.0 {
                continue;
            }
            for (i, &v) in w.iter().enumerate() {
                out[off + i] += pj * v;
            }
        }
    }
}

/// Finite-state Bayes filter for a scalar hidden factor.
///
/// Cloning is cheap: the nodes, cached drifts, and transition matrix are
/// shared behind `Arc`s, and only the probability vector is owned.  That
/// is what lets the nested Monte Carlo branch thousands of filters off one
/// snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFilter {
    nodes: Arc<Vec<f64>>,
    h_nodes: Arc<Vec<f64>>,
    transition: Arc<BandedTransition>,
    probs: Vec<f64>,
    sigma: f64,
    dt: f64,
}

/// Half-width of the Gaussian kernel window, in kernel standard
/// deviations.  `exp(-8.5²/2) ≈ 2e-16`, so the truncated mass is below the
/// row-sum tolerance of the filter invariants.
const KERNEL_HALF_WIDTH_SDS: f64 = 8.5;

impl GridFilter {
    /// Grid nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Current probability vector.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// One-step transition matrix.
    pub fn transition(&self) -> &BandedTransition {
        &self.transition
    }

    /// Step width the transition was built for.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Observation volatility the likelihood uses.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Posterior mean of the factor.
    pub fn mean(&self) -> f64 {
        filter_mean(self, |y| y)
    }

    /// Posterior mean of the asset drift, `ĥ = Σ_j p_j h(y_j)`.
    pub fn hhat(&self) -> f64 {
        self.probs
            .iter()
            .zip(self.h_nodes.iter())
            .map(|(p, h)| p * h)
            .sum()
    }

    /// Replaces the probability vector (used to branch from a snapshot
    /// with a resampled state).  The vector must already be normalized.
    pub fn set_probs(&mut self, probs: Vec<f64>) -> Result<()> {
        if probs.len() != self.nodes.len() {
            return Err(Error::invalid(
                "probability vector length does not match the grid",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if !(sum - 1.0).abs().is_finite() || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!(
                "probabilities must sum to 1, got {sum}"
            )));
        }
        self.probs = probs;
        Ok(())
    }

    /// Advances the filter in place by one observation `dlog_s`.
    ///
    /// Predict: `p ← Tᵀp`.  Correct: `p_j ∝ p_j · N(dlog_s; (h(y_j) −
    /// ½σ²)dt, σ²dt)`, evaluated in log space with max-subtraction.
    pub fn step_in_place(&mut self, dlog_s: f64) -> Result<()> {
        let n = self.nodes.len();
        let mut predicted = vec![0.0; n];
        self.transition.apply_transpose(&self.probs, &mut predicted);
        let s2dt = self.sigma * self.sigma * self.dt;
        let mut logw = vec![f64::NEG_INFINITY; n];
        for j in 0..n {
            if predicted[j] > 0.0 {
                let mean = (self.h_nodes[j] - 0.5 * self.sigma * self.sigma) * self.dt;
                let resid = dlog_s - mean;
                logw[j] = predicted[j].ln() - resid * resid / (2.0 * s2dt);
            }
        }
        let updated = normalize_from_log(&logw);
        let sum: f64 = updated.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::numeric(
                "filter collapse: posterior has no mass after the Bayes update",
            ));
        }
        self.probs = updated;
        Ok(())
    }
}

/// Builds a grid filter for a scalar model.
///
/// Transition row `j` is the Gaussian Euler kernel
/// `N(y_j + b(y_j)dt, a(y_j)²dt)` evaluated at the nodes and normalized;
/// a degenerate kernel (`a(y_j) = 0`) becomes a point mass at the node
/// nearest the drifted value.  The prior is evaluated on the nodes per
/// [`GridPrior`].
pub fn grid_build(
    model: &ScalarModel,
    n: usize,
    y_lo: f64,
    y_hi: f64,
    dt: f64,
    prior: &GridPrior,
) -> Result<GridFilter> {
    let nodes = linspace(y_lo, y_hi, n)?;
    let probs = prior.evaluate(model, &nodes)?;
    let m = *model;
    grid_build_with(
        move |y| m.h(y),
        move |y| m.drift(y),
        move |y| m.diffusion(y),
        model.sigma(),
        n,
        y_lo,
        y_hi,
        dt,
        probs,
    )
}

/// Like [`grid_build`] but with explicit coefficient functions and an
/// explicit (already normalized) prior, for models outside the two scalar
/// examples.
#[allow(clippy::too_many_arguments)]
pub fn grid_build_with(
    h: impl Fn(f64) -> f64,
    b: impl Fn(f64) -> f64,
    a: impl Fn(f64) -> f64,
    sigma: f64,
    n: usize,
    y_lo: f64,
    y_hi: f64,
    dt: f64,
    init_probs: Vec<f64>,
) -> Result<GridFilter> {
    if n < 3 {
        return Err(Error::invalid(format!(
            "grid filter requires n ≥ 3 nodes, got {n}"
        )));
    }
    if !(y_lo < y_hi) {
        return Err(Error::invalid(format!(
            "grid bounds must satisfy y_lo < y_hi, got [{y_lo}, {y_hi}]"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!(
            "grid step must be positive, got {dt}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if init_probs.len() != n {
        return Err(Error::invalid("prior length does not match the grid"));
    }
    let sum: f64 = init_probs.iter().sum();
    if init_probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!(
            "prior must be a probability vector (entries ≥ 0, sum 1), got sum {sum}"
        )));
    }

    let nodes = linspace(y_lo, y_hi, n)?;
    let spacing = (y_hi - y_lo) / (n - 1) as f64;
    let mut rows = Vec::with_capacity(n);
    for &yj in &nodes {
        let mean = yj + b(yj) * dt;
        let sd = a(yj).abs() * dt.sqrt();
        if sd == 0.0 {
            let idx = nearest_node(&nodes, mean);
            rows.push((idx, vec![1.0]));
            continue;
        }
        let half = KERNEL_HALF_WIDTH_SDS * sd;
        let lo = (((mean - half) - y_lo) / spacing).floor().max(0.0) as usize;
        let hi = ((((mean + half) - y_lo) / spacing).ceil().max(0.0) as usize).min(n - 1);
        let lo = lo.min(hi);
        let logw: Vec<f64> = (lo..=hi)
            .map(|i| {
                let d = nodes[i] - mean;
                -d * d / (2.0 * sd * sd)
            })
            .collect();
        let w = normalize_from_log(&logw);
        rows.push((lo, w));
    }
    let transition = BandedTransition { rows, n };
    let h_nodes: Vec<f64> = nodes.iter().map(|&y| h(y)).collect();
    if h_nodes.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("h is not finite on the grid nodes"));
    }
    Ok(GridFilter {
        nodes: Arc::new(nodes),
        h_nodes: Arc::new(h_nodes),
        transition: Arc::new(transition),
        probs: init_probs,
        sigma,
        dt,
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo < hi) {
        return Err(Error::invalid("linspace requires n ≥ 2 and lo < hi"));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect())
}

/// Functional single step of the grid filter: validates that `dt` and the
/// model volatility match what the filter was built with, then applies
/// predict/correct and returns the advanced filter.
pub fn grid_step(
    filter: &GridFilter,
    dlog_s: f64,
    dt: f64,
    model: &ScalarModel,
) -> Result<GridFilter> {
    if (dt - filter.dt).abs() > 1e-12 * filter.dt {
        return Err(Error::invalid(format!(
            "step dt {dt} does not match the transition dt {}",
            filter.dt
        )));
    }
    if (model.sigma() - filter.sigma).abs() > 1e-12 * filter.sigma {
        return Err(Error::invalid(
            "model volatility does not match the filter's likelihood volatility",
        ));
    }
    let mut next = filter.clone();
    next.step_in_place(dlog_s)?;
    Ok(next)
}

/// Posterior expectation `Σ_j p_j g(y_j)` of a test function `g`.
pub fn filter_mean(filter: &GridFilter, g: impl Fn(f64) -> f64) -> f64 {
    filter
        .probs
        .iter()
        .zip(filter.nodes.iter())
        .map(|(&p, &y)| p * g(y))
        .sum()
}

/// Default grid bounds: OU covers mean ± 6 stationary standard deviations,
/// CIR covers `[0, Ȳ + 8·a·√(Ȳ/(2κ))]`.
pub fn default_grid_bounds(model: &ScalarModel) -> (f64, f64) {
    match model {
        ScalarModel::Linear(m) => {
            let sd = m.stationary_var().sqrt();
            (-6.0 * sd, 6.0 * sd)
        }
        ScalarModel::Cir(m) => (0.0, m.ybar + 8.0 * m.a * (m.ybar / (2.0 * m.kappa)).sqrt()),
    }
}
