//! Forward simulation of the factor, the asset, wealth, and innovations.
//!
//! Schemes are chosen so that positivity is structural rather than
//! statistical:
//!
//! * the asset and wealth evolve in log space (log-Euler), so `S` and `X`
//!   are strictly positive by construction;
//! * the Ornstein–Uhlenbeck factor uses its exact Gaussian transition,
//!   jointly coupled with the Brownian increment `ΔB` that the asset sees,
//!   so no discretization error enters the factor at all;
//! * the CIR factor uses the full-truncation explicit scheme and is floored
//!   at zero.
//!
//! Discrete convention used everywhere downstream: the per-step return
//! `ΔS/S` is taken as `Δlog S + ½σ² dt`, which matches the drift convention
//! of [`simulate_market`] to `O(dt²)` and keeps the innovations process
//! consistent with the filters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GeneralModelSpec, ScalarModel};
use crate::rng::{standard_normal, RngSpec, StreamRole};

/// Uniform time grid on `[t0, T]` with `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    /// Left endpoint.
    pub t0: f64,
    /// Right endpoint (the horizon).
    pub t_end: f64,
    /// Number of steps; the grid has `n_steps + 1` nodes.
    pub n_steps: usize,
}

impl TimeGrid {
    /// Validates `T > t0` and `n_steps ≥ 1`.
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::invalid(format!(
                "time grid requires finite t0 < T, got t0={t0}, T={t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::invalid("time grid requires at least one step"));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    /// Step width `dt = (T - t0)/n_steps`.
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Time of node `k` (clamped to the horizon at the last node so that
    /// `time(n_steps) == T` exactly).
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.t_end
        } else {
            self.t0 + self.dt() * k as f64
        }
    }

    /// All node times, length `n_steps + 1`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// One simulated scalar market path: the factor, the log asset, and the
/// Brownian increments that produced them.
///
/// The total volatility `σ` is carried along so that consumers such as
/// [`evolve_wealth`] and [`innovations`] can reconstruct per-step returns
/// without re-supplying the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    /// The grid the path lives on.
    pub grid: TimeGrid,
    /// Factor values at nodes, length `n_steps + 1`.
    pub y: Vec<f64>,
    /// Log asset price at nodes, length `n_steps + 1`.
    pub log_s: Vec<f64>,
    /// Idiosyncratic Brownian increments `ΔW`, length `n_steps`.
    pub dw: Vec<f64>,
    /// Factor Brownian increments `ΔB`, length `n_steps`.
    pub db: Vec<f64>,
    /// Total asset volatility used to generate the path.
    pub sigma: f64,
}

impl PathBundle {
    /// Number of steps.
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    /// Log-price increment of step `k`.
    pub fn dlog_s(&self, k: usize) -> f64 {
        self.log_s[k + 1] - self.log_s[k]
    }

    /// Discrete per-step return `ΔS/S := Δlog S + ½σ² dt` of step `k`.
    pub fn return_over_step(&self, k: usize) -> f64 {
        self.dlog_s(k) + 0.5 * self.sigma * self.sigma * self.grid.dt()
    }
}

/// Coefficients of the exact OU transition over one step of width `dt`,
/// decomposed against the Brownian increment `ΔB` of the same step:
/// `Y_{k+1} = e^{-κ dt} Y_k + c1·ΔB_k + c2·z`, with `z` an independent
/// standard normal.  `(c1, c2)` reproduce both the exact conditional
/// variance and the exact covariance with `ΔB`.
fn ou_step_coefficients(kappa: f64, a: f64, dt: f64) -> (f64, f64, f64) {
    let e = (-kappa * dt).exp();
    let var = a * a * (1.0 - e * e) / (2.0 * kappa);
    let cov = a * (1.0 - e) / kappa; // Cov(noise, ΔB)
    let c1 = cov / dt;
    let c2 = (var - cov * cov / dt).max(0.0).sqrt();
    (e, c1, c2)
}

/// Simulates the factor alone on `grid` starting from `y0`.
///
/// The OU case consumes two normals per step from the factor stream (the
/// shared `ΔB` and the conditionally independent remainder); the CIR case
/// consumes one.  Streams are derived from `rng` with the factor-noise
/// role, so a later [`simulate_market`] call with the same seed and path
/// index reproduces the identical factor path.
pub fn simulate_factor(
    model: &ScalarModel,
    y0: f64,
    grid: &TimeGrid,
    rng: RngSpec,
) -> Result<Vec<f64>> {
    let mut factor_rng = RngSpec::new(rng.seed, rng.path_index, StreamRole::FactorNoise).rng();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut y = Vec::with_capacity(grid.n_steps + 1);
    y.push(y0);
    match model {
        ScalarModel::Linear(m) => {
            let (e, c1, c2) = ou_step_coefficients(m.kappa, m.a, dt);
            for _ in 0..grid.n_steps {
                let db = sqrt_dt * standard_normal(&mut factor_rng);
                let z2 = standard_normal(&mut factor_rng);
                let prev = *y.last().expect("non-empty");
                y.push(e * prev + c1 * db + c2 * z2);
            }
        }
        ScalarModel::Cir(m) => {
            for _ in 0..grid.n_steps {
                let db = sqrt_dt * standard_normal(&mut factor_rng);
                let prev: f64 = *y.last().expect("non-empty");
                let pos = prev.max(0.0);
                let next = prev + m.kappa * (m.ybar - pos) * dt + m.a * pos.sqrt() * db;
                y.push(next.max(0.0));
            }
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "factor path diverged (seed {}, path {})",
            rng.seed, rng.path_index
        )));
    }
    Ok(y)
}

/// Simulates the joint factor/asset path.
///
/// Asset update: `Δlog S = (h(Y_k) − ½σ²)dt + σ_w ΔW_k + σ_y ΔB_k` with the
/// same `ΔB` that drives the factor.
pub fn simulate_market(
    model: &ScalarModel,
    y0: f64,
    s0: f64,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<PathBundle> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::invalid(format!(
            "initial price must be positive, got {s0}"
        )));
    }
    let mut factor_rng = RngSpec::new(seed, path_index, StreamRole::FactorNoise).rng();
    let mut asset_rng = RngSpec::new(seed, path_index, StreamRole::AssetNoise).rng();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let sigma = model.sigma();
    let (sigma_w, sigma_y) = (model.sigma_w(), model.sigma_y());
    let half_var = 0.5 * sigma * sigma;

    let n = grid.n_steps;
    let mut y = Vec::with_capacity(n + 1);
    let mut log_s = Vec::with_capacity(n + 1);
    let mut dw = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    y.push(y0);
    log_s.push(s0.ln());

    let ou_coeff = match model {
        ScalarModel::Linear(m) => Some(ou_step_coefficients(m.kappa, m.a, dt)),
        ScalarModel::Cir(_) => None,
    };

    for _ in 0..n {
        let yk = *y.last().expect("non-empty");
        let db_k = sqrt_dt * standard_normal(&mut factor_rng);
        let y_next = match (model, ou_coeff) {
            (ScalarModel::Linear(_), Some((e, c1, c2))) => {
                let z2 = standard_normal(&mut factor_rng);
                e * yk + c1 * db_k + c2 * z2
            }
            (ScalarModel::Cir(m), _) => {
                let pos = yk.max(0.0);
                (yk + m.kappa * (m.ybar - pos) * dt + m.a * pos.sqrt() * db_k).max(0.0)
            }
            _ => unreachable!("coefficient cache matches the model variant"),
        };
        let dw_k = sqrt_dt * standard_normal(&mut asset_rng);
        let dlog_s = (model.h(yk) - half_var) * dt + sigma_w * dw_k + sigma_y * db_k;
        log_s.push(log_s.last().expect("non-empty") + dlog_s);
        y.push(y_next);
        dw.push(dw_k);
        db.push(db_k);
    }

    if y.iter().chain(log_s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "market path diverged (seed {seed}, path {path_index})"
        )));
    }
    Ok(PathBundle {
        grid: *grid,
        y,
        log_s,
        dw,
        db,
        sigma,
    })
}

/// Wealth under a per-step strategy `pi` (fraction of wealth in the risky
/// asset), via the log-Euler update
/// `Δlog X = r dt + π(Δlog S + ½σ²dt − r dt) − ½σ²π² dt`,
/// which is Eq.-(4)-style dynamics rewritten against the realized path
/// (the factor drift cancels).  Output is strictly positive.
pub fn evolve_wealth(path: &PathBundle, pi: &[f64], r: f64, x0: f64) -> Result<Vec<f64>> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::invalid(format!(
            "initial wealth must be positive, got {x0}"
        )));
    }
    if pi.len() != path.n_steps() {
        return Err(Error::invalid(format!(
            "strategy length {} does not match the {} grid steps",
            pi.len(),
            path.n_steps()
        )));
    }
    if pi.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("strategy contains a non-finite weight"));
    }
    let dt = path.grid.dt();
    let s2 = path.sigma * path.sigma;
    let mut x = Vec::with_capacity(path.n_steps() + 1);
    let mut log_x = x0.ln();
    x.push(x0);
    for (k, &p) in pi.iter().enumerate() {
        let excess = path.return_over_step(k) - r * dt;
        log_x += r * dt + p * excess - 0.5 * s2 * p * p * dt;
        x.push(log_x.exp());
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("wealth overflow in log-Euler evolution"));
    }
    Ok(x)
}

/// Innovations process `ζ` given a drift estimate `ĥ` along the path:
/// `Δζ_k = (ΔS_k/S_k − ĥ_k dt)/σ`, cumulated from `ζ(t0) = 0`.
///
/// `hhat` may have length `n_steps` (per-step values) or `n_steps + 1`
/// (node-aligned; the last entry is unused).
pub fn innovations(path: &PathBundle, hhat: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let n = path.n_steps();
    if hhat.len() != n && hhat.len() != n + 1 {
        return Err(Error::invalid(format!(
            "hhat length {} does not align with the {}-step grid",
            hhat.len(),
            n
        )));
    }
    let dt = path.grid.dt();
    let mut zeta = Vec::with_capacity(n + 1);
    zeta.push(0.0);
    for (k, &h_k) in hhat.iter().take(n).enumerate() {
        let dz = (path.return_over_step(k) - h_k * dt) / sigma;
        zeta.push(zeta.last().expect("non-empty") + dz);
    }
    Ok(zeta)
}

/// A simulated path of the general multi-asset market.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralPathBundle {
    /// The grid the path lives on.
    pub grid: TimeGrid,
    /// Factor values at nodes, length `n_steps + 1` of `q`-vectors.
    pub y: Vec<DVector<f64>>,
    /// Log prices at nodes, length `n_steps + 1` of `d`-vectors.
    pub log_s: Vec<DVector<f64>>,
    /// Idiosyncratic increments `ΔW`, length `n_steps` of `d`-vectors.
    pub dw: Vec<DVector<f64>>,
    /// Factor increments `ΔB`, length `n_steps` of `q`-vectors.
    pub db: Vec<DVector<f64>>,
}

/// Euler simulation of the general market: the factor uses explicit Euler
/// (`Y_{k+1} = Y_k + b(Y_k)dt + a(Y_k)ΔB_k`), the asset the log-Euler
/// update with Itô correction `½ diag(σσᵀ)`.
pub fn simulate_market_general(
    spec: &GeneralModelSpec,
    y0: &DVector<f64>,
    s0: &DVector<f64>,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<GeneralPathBundle> {
    if y0.len() != spec.dim_q {
        return Err(Error::invalid("y0 dimension does not match the model"));
    }
    if s0.len() != spec.dim_d || s0.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("s0 must be a positive d-vector"));
    }
    let mut factor_rng = RngSpec::new(seed, path_index, StreamRole::FactorNoise).rng();
    let mut asset_rng = RngSpec::new(seed, path_index, StreamRole::AssetNoise).rng();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let combined: DMatrix<f64> =
        &spec.sigma_w * spec.sigma_w.transpose() + &spec.sigma_y * spec.sigma_y.transpose();
    let ito_correction: DVector<f64> = combined.diagonal() * 0.5;

    let n = grid.n_steps;
    let mut y = Vec::with_capacity(n + 1);
    let mut log_s = Vec::with_capacity(n + 1);
    let mut dw = Vec::with_capacity(n);
    let mut db = Vec::with_capacity(n);
    y.push(y0.clone());
    log_s.push(s0.map(f64::ln));

    for _ in 0..n {
        let yk = y.last().expect("non-empty").clone();
        let db_k = DVector::from_fn(spec.dim_q, |_, _| {
            sqrt_dt * standard_normal(&mut factor_rng)
        });
        let dw_k = DVector::from_fn(spec.dim_d, |_, _| sqrt_dt * standard_normal(&mut asset_rng));
        let y_next = &yk + spec.b(&yk) * dt + spec.a(&yk) * &db_k;
        let drift = (spec.h(&yk) - &ito_correction) * dt;
        let dlog = drift + &spec.sigma_w * &dw_k + &spec.sigma_y * &db_k;
        log_s.push(log_s.last().expect("non-empty") + dlog);
        y.push(y_next);
        dw.push(dw_k);
        db.push(db_k);
    }

    let finite = y.iter().all(|v| v.iter().all(|x| x.is_finite()))
        && log_s.iter().all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(Error::numeric(format!(
            "general market path diverged (seed {seed}, path {path_index})"
        )));
    }
    Ok(GeneralPathBundle {
        grid: *grid,
        y,
        log_s,
        dw,
        db,
    })
}
