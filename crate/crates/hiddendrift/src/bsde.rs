//! BSDE-state computation: nested Monte Carlo for `ξ(t)`, linear-case
//! closed forms, the drift `β`, the full-information driver `F`, and the
//! classical-solution pair `(χ, ψ)`.
//!
//! The dual state is
//!
//! ```text
//! ξ(t) = E[(Z(T)/Z(t))^{−ν} | F^S_t],    ν = (1−γ)/γ,
//! ```
//!
//! with `Z` the filtered-market density process.  Along the filtration of
//! the innovations `ζ`, `log(Z(T)/Z(t))^{−ν}` is exactly
//! `ν(½∫‖φ‖²du + ∫φᵀdζ)` with market price of risk
//! `φ(u) = σ^{-1}(ĥ(u) − r)`, and the nested estimator averages the
//! exponential of that functional over branches: each branch draws
//! `Y(t)` from the filter posterior, simulates `(Y, S)` forward, and runs
//! the filter along the simulated prices to rebuild `ĥ` and `ζ`.  (The
//! shorthand that keeps only the `∫‖φ‖²` term with constant
//! `(1−γ)/(2γ²)` is the conditional mean of the same exponent under the
//! tilted measure, not an unbiased weight under `P`; using it directly
//! leaves an `O(1)` bias that the linear closed form rejects at a few
//! standard errors.)

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{abar, kalman_run, GridFilter};
use crate::model::{check_mgf_cir, check_novikov_cir, scalar_epsilon, LinearOuModel, ScalarModel};
use crate::riccati::{g_eval, make_ah, AhKind, ClosedFormAH};
use crate::rng::{standard_normal, RngSpec, StreamRole, RESAMPLE_INDEX_OFFSET};
use crate::sim::{simulate_market, PathBundle, TimeGrid};
use rand::Rng;

/// A nested Monte Carlo estimate of `ξ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiEstimate {
    /// Evaluation time.
    pub t: f64,
    /// Sample mean (strictly positive: an average of exponentials).
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    /// Number of inner branches.
    pub n_inner: usize,
}

/// One time point of the BSDE state along a path.
///
/// `xi` is the dual state (for records built from the full-information
/// classical solution, `ξ = χ^{1/γ}`); `alpha_over_xi` is the `dζ`-loading
/// of `log ξ`, available in closed form only for the linear model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsdeRecord {
    /// Time.
    pub t: f64,
    /// Dual state `ξ(t) > 0`.
    pub xi: f64,
    /// `α(t)/ξ(t)` when available (linear closed form), otherwise absent.
    pub alpha_over_xi: Option<f64>,
    /// Value-function coefficient `χ(t) = G(t, Y(t)) > 0`.
    pub chi: f64,
    /// Martingale loading `ψ(t) = a(Y(t))·∂_y G(t, Y(t))`.
    pub psi: f64,
}

/// The conditional law of `Y(t)` a nested estimator samples branches from.
#[derive(Debug, Clone)]
pub enum FilterState {
    /// Gaussian posterior from the Kalman filter (linear model only).
    Kalman {
        /// Conditional mean `Ŷ(t)`.
        yhat: f64,
        /// Conditional variance `Σ(t) ≥ 0`.
        var: f64,
        /// Whether branch filters keep the variance pinned at `Σ̄`.
        steady: bool,
    },
    /// Discrete posterior carried by a grid filter (any scalar model).
    Grid(GridFilter),
}

impl FilterState {
    /// Draws one `Y(t)` sample from the posterior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            FilterState::Kalman { yhat, var, .. } => {
                if !(*var >= 0.0) {
                    return Err(Error::invalid(format!(
                        "kalman variance must be ≥ 0, got {var}"
                    )));
                }
                Ok(yhat + var.sqrt() * standard_normal(rng))
            }
            FilterState::Grid(filter) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let probs = filter.probs();
                for (j, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(filter.nodes()[j]);
                    }
                }
                Ok(*filter.nodes().last().expect("grid filter has nodes"))
            }
        }
    }

    /// Posterior mean `Ŷ(t)`.
    pub fn mean(&self) -> f64 {
        match self {
            FilterState::Kalman { yhat, .. } => *yhat,
            FilterState::Grid(filter) => filter.mean(),
        }
    }
}

/// Tuning knobs of [`estimate_xi_nested`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XiSettings {
    /// Number of inner branches (≥ 2).
    pub n_inner: usize,
    /// Time steps per branch over `[t, T]`.
    pub inner_steps: usize,
    /// Path-index namespace for branch streams; keep at or above
    /// [`crate::rng::BRANCH_INDEX_BASE`] and advance it across distinct
    /// evaluation times so branches are never reused.
    pub branch_base: u64,
    /// Skip the CIR integrability checks (the caller takes responsibility
    /// for warning about the invalidated estimates).
    pub override_checks: bool,
}

/// Integrability conditions required before estimating `ξ` over a horizon.
///
/// The CIR example must satisfy both the Novikov bound and the MGF bound;
/// the linear model imposes no extra condition here.
pub fn check_xi_conditions(model: &ScalarModel, gamma: f64, horizon: f64) -> Result<()> {
    if let ScalarModel::Cir(cir) = model {
        let novikov = check_novikov_cir(cir, horizon)?;
        if !novikov.ok {
            return Err(Error::condition(format!(
                "Novikov condition fails over horizon {horizon}: c²T/(2σ²) = {:.6e} ≥ 2κ/a² = {:.6e}",
                novikov.lhs, novikov.rhs
            )));
        }
        let mgf = check_mgf_cir(cir, gamma, horizon, scalar_epsilon(cir.sigma))?;
        if !mgf.ok {
            return Err(Error::condition(format!(
                "MGF condition fails over horizon {horizon}: lhs = {:.6e} ≥ 2κ/a² = {:.6e}",
                mgf.lhs, mgf.rhs
            )));
        }
    }
    Ok(())
}

/// Runs one branch and returns its weight
/// `exp(ν(½∫‖φ‖²du + ∫φᵀdζ))`.
#[allow(clippy::too_many_arguments)]
fn branch_weight(
    model: &ScalarModel,
    state: &FilterState,
    nu: f64,
    t: f64,
    t_end: f64,
    seed: u64,
    inner_steps: usize,
    path_index: u64,
) -> Result<f64> {
    let mut draw_rng = RngSpec::new(seed, path_index, StreamRole::InnerBranch).rng();
    let y_t = state.sample(&mut draw_rng)?;
    let grid = TimeGrid::new(t, t_end, inner_steps)?;
    let bundle = simulate_market(model, y_t, 1.0, &grid, seed, path_index)?;
    let dt = grid.dt();
    let sigma = model.sigma();
    let r = model.rate();

    // ĥ(u_k) at every node from the filter run along the branch.
    let hhat: Vec<f64> = match state {
        FilterState::Kalman { yhat, var, steady } => {
            let linear = match model {
                ScalarModel::Linear(m) => m,
                ScalarModel::Cir(_) => {
                    return Err(Error::invalid(
                        "a Kalman filter state requires the linear model",
                    ))
                }
            };
            let track = kalman_run(linear, &bundle, *steady, *yhat, *var)?;
            track.yhat.iter().map(|y| linear.mu + y).collect()
        }
        FilterState::Grid(grid_filter) => {
            if (grid_filter.dt() - dt).abs() > 1e-9 * dt {
                return Err(Error::invalid(format!(
                    "grid filter dt {} does not match the branch step {dt}",
                    grid_filter.dt()
                )));
            }
            let mut filter = grid_filter.clone();
            let mut out = Vec::with_capacity(inner_steps + 1);
            out.push(filter.hhat());
            for k in 0..inner_steps {
                filter.step_in_place(bundle.dlog_s(k))?;
                out.push(filter.hhat());
            }
            out
        }
    };

    // ½∫‖φ‖²du by trapezoid, ∫φᵀdζ by the left-point Itô sum.
    let phi: Vec<f64> = hhat.iter().map(|h| (h - r) / sigma).collect();
    let mut quad = 0.5 * (phi[0] * phi[0] + phi[inner_steps] * phi[inner_steps]);
    for p in &phi[1..inner_steps] {
        quad += p * p;
    }
    quad *= dt;
    let mut ito = 0.0;
    for k in 0..inner_steps {
        let dzeta = (bundle.return_over_step(k) - hhat[k] * dt) / sigma;
        ito += phi[k] * dzeta;
    }
    let weight = (nu * (0.5 * quad + ito)).exp();
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::numeric(format!(
            "branch weight degenerate (seed {seed}, path index {path_index}): {weight}"
        )));
    }
    Ok(weight)
}

/// Nested Monte Carlo estimate of `ξ(t)` from a filter state at `t`.
///
/// Branch `ℓ` derives every stream from path index
/// `branch_base + ℓ`: the posterior draw of `Y(t)` from the inner-branch
/// role, the market simulation from the factor/asset roles.  Branches are
/// independent and run in parallel; the reduction runs in fixed index
/// order, so the estimate is bit-reproducible for any worker count.  A
/// branch whose filter collapses is resampled once (its path index offset
/// by [`RESAMPLE_INDEX_OFFSET`]); a second failure is a hard error.
pub fn estimate_xi_nested(
    model: &ScalarModel,
    state: &FilterState,
    gamma: f64,
    t: f64,
    t_end: f64,
    seed: u64,
    settings: &XiSettings,
) -> Result<XiEstimate> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(t >= 0.0 && t <= t_end && t_end.is_finite()) {
        return Err(Error::invalid(format!(
            "need 0 ≤ t ≤ T, got t={t}, T={t_end}"
        )));
    }
    if settings.n_inner < 2 {
        return Err(Error::invalid(format!(
            "n_inner must be ≥ 2, got {}",
            settings.n_inner
        )));
    }
    if t == t_end {
        return Ok(XiEstimate {
            t,
            mean: 1.0,
            stderr: 0.0,
            n_inner: settings.n_inner,
        });
    }
    if settings.inner_steps == 0 {
        return Err(Error::invalid("inner_steps must be ≥ 1"));
    }
    if !settings.override_checks {
        check_xi_conditions(model, gamma, t_end - t)?;
    }
    let nu = (1.0 - gamma) / gamma;
    let weights: Vec<f64> = (0..settings.n_inner)
        .into_par_iter()
        .map(|ell| {
            let base = settings.branch_base + ell as u64;
            branch_weight(model, state, nu, t, t_end, seed, settings.inner_steps, base).or_else(
                |err| match err {
                    Error::Numeric(_) => branch_weight(
                        model,
                        state,
                        nu,
                        t,
                        t_end,
                        seed,
                        settings.inner_steps,
                        base + RESAMPLE_INDEX_OFFSET,
                    ),
                    other => Err(other),
                },
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let ss = weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>();
    let stderr = (ss / (n * (n - 1.0))).sqrt();
    Ok(XiEstimate {
        t,
        mean,
        stderr,
        n_inner: settings.n_inner,
    })
}

/// `ξ(t)` from a prebuilt linear-partial [`ClosedFormAH`]:
/// `exp((A_p(t)·ŷ² + H_p(t))/γ)`.
pub fn xi_closed_form_from_ah(ah: &ClosedFormAH, gamma: f64, t: f64, yhat: f64) -> Result<f64> {
    if ah.kind != AhKind::LinearPartial {
        return Err(Error::invalid(format!(
            "closed-form ξ requires the linear-partial coefficients, got {:?}",
            ah.kind
        )));
    }
    Ok(((ah.a_at(t) * yhat * yhat + ah.h_at(t)) / gamma).exp())
}

/// Closed-form `ξ(t)` for the linear model under partial information.
///
/// Errors in unstable regimes (complex or blow-up Riccati roots).
pub fn xi_closed_form_linear(
    model: &LinearOuModel,
    gamma: f64,
    t_end: f64,
    t: f64,
    yhat: f64,
) -> Result<f64> {
    let ah = make_ah(
        AhKind::LinearPartial,
        &ScalarModel::Linear(*model),
        gamma,
        t_end,
    )?;
    xi_closed_form_from_ah(&ah, gamma, t, yhat)
}

/// `α(t)/ξ(t)` from a prebuilt linear-partial [`ClosedFormAH`]:
/// `2·A_p(t)·ŷ·ā/γ`, the `dζ`-loading of `log ξ`.
pub fn alpha_over_xi_from_ah(
    ah: &ClosedFormAH,
    model: &LinearOuModel,
    gamma: f64,
    t: f64,
    yhat: f64,
) -> Result<f64> {
    if ah.kind != AhKind::LinearPartial {
        return Err(Error::invalid(format!(
            "α/ξ requires the linear-partial coefficients, got {:?}",
            ah.kind
        )));
    }
    Ok(2.0 * ah.a_at(t) * yhat * abar(model) / gamma)
}

/// Closed-form `α(t)/ξ(t)` for the linear model under partial information.
pub fn alpha_over_xi_linear(
    model: &LinearOuModel,
    gamma: f64,
    t_end: f64,
    t: f64,
    yhat: f64,
) -> Result<f64> {
    let ah = make_ah(
        AhKind::LinearPartial,
        &ScalarModel::Linear(*model),
        gamma,
        t_end,
    )?;
    alpha_over_xi_from_ah(&ah, model, gamma, t, yhat)
}

/// The BSDE drift `β` of `ξ`, computed from both displayed forms:
///
/// ```text
/// form 1: (1−γ)/γ·φᵀα + (1−γ)/(2γ²)·‖φ‖²·ξ
/// form 2: (1−γ)/2·ξ·‖φ/γ + α/ξ‖² − (1−γ)/(2ξ)·‖α‖²
/// ```
///
/// with `φ = (ĥ − r)/σ`.  The two must agree to `1e-10` relative; a larger
/// gap is an internal-consistency error.  `γ = 1` is admitted (both forms
/// vanish).
pub fn beta_eval(hhat: f64, r: f64, sigma: f64, gamma: f64, alpha: f64, xi: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::invalid(format!("xi must be positive, got {xi}")));
    }
    let phi = (hhat - r) / sigma;
    let one_m_g = 1.0 - gamma;
    let form1 = one_m_g / gamma * phi * alpha + one_m_g / (2.0 * gamma * gamma) * phi * phi * xi;
    let w = phi / gamma + alpha / xi;
    let form2 = 0.5 * one_m_g * xi * w * w - 0.5 * one_m_g / xi * alpha * alpha;
    if (form1 - form2).abs() > 1e-10 * (1.0 + form1.abs()) {
        return Err(Error::numeric(format!(
            "beta forms disagree: {form1} vs {form2} (internal consistency)"
        )));
    }
    Ok(form1)
}

/// The full-information control objective
/// `f(π) = (−(γ/2)πᵀΣπ + πᵀ(h(y)−r))·g + πᵀσ_y·η`, strictly concave in `π`.
pub fn f_eval(y: f64, pi: f64, g: f64, eta: f64, model: &ScalarModel, gamma: f64) -> Result<f64> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::invalid(format!("g must be positive, got {g}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let sigma2 = model.sigma() * model.sigma();
    let excess = model.h(y) - model.rate();
    Ok((-0.5 * gamma * pi * pi * sigma2 + pi * excess) * g + pi * model.sigma_y() * eta)
}

/// The maximized objective (the BSDE driver, usually written `F`):
/// `(g/(2γ))·mᵀΣ^{-1}m` with `m = (h(y)−r) + σ_y·η/g`.  Nonnegative.
pub fn f_star_eval(y: f64, g: f64, eta: f64, model: &ScalarModel, gamma: f64) -> Result<f64> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::invalid(format!("g must be positive, got {g}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let sigma2 = model.sigma() * model.sigma();
    let m = (model.h(y) - model.rate()) + model.sigma_y() * eta / g;
    Ok(g / (2.0 * gamma) * m * m / sigma2)
}

/// The full-information maximizer
/// `π* = Σ^{-1}((h(y)−r)/γ + σ_y·η/(γg))`.
pub fn pi_star_full(y: f64, g: f64, eta: f64, model: &ScalarModel, gamma: f64) -> Result<f64> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::invalid(format!("g must be positive, got {g}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let sigma2 = model.sigma() * model.sigma();
    Ok(((model.h(y) - model.rate()) / gamma + model.sigma_y() * eta / (gamma * g)) / sigma2)
}

/// `(χ, ψ)` along a factor path from the full-information classical
/// solution: `χ(t_k) = G(t_k, Y_k)` and `ψ = a(Y)·∂_y G`, i.e.
/// `ψ = a·2A(t)·Y·χ` (linear) or `ψ = a√Y·A(t)·χ` (CIR).  Each record
/// also carries `ξ = χ^{1/γ}`.
pub fn chi_psi_path(
    ah: &ClosedFormAH,
    model: &ScalarModel,
    gamma: f64,
    y_path: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<BsdeRecord>> {
    match (ah.kind, model) {
        (AhKind::LinearFull, ScalarModel::Linear(_)) | (AhKind::CirFull, ScalarModel::Cir(_)) => {}
        (AhKind::LinearPartial, _) => {
            return Err(Error::invalid(
                "chi_psi_path requires a full-information coefficient pair",
            ))
        }
        _ => {
            return Err(Error::invalid(
                "AH kind does not match the supplied model variant",
            ))
        }
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if y_path.len() != grid.n_steps + 1 {
        return Err(Error::invalid(format!(
            "factor path length {} does not match the {}-step grid",
            y_path.len(),
            grid.n_steps
        )));
    }
    let mut out = Vec::with_capacity(y_path.len());
    for (k, &y) in y_path.iter().enumerate() {
        let t = grid.time(k);
        let a_t = ah.a_at(t);
        let chi = g_eval(ah, t, y);
        let gradient = match ah.kind {
            AhKind::LinearFull => 2.0 * a_t * y,
            AhKind::CirFull => a_t,
            AhKind::LinearPartial => unreachable!("rejected above"),
        };
        let psi = model.diffusion(y) * gradient * chi;
        out.push(BsdeRecord {
            t,
            xi: chi.powf(1.0 / gamma),
            alpha_over_xi: None,
            chi,
            psi,
        });
    }
    Ok(out)
}

/// Discretized residual of the full-information BSDE along one path:
///
/// ```text
/// R = χ(0) − χ(T) − Σ_k (1−γ)·F(Y_k, χ_k, ψ_k)·dt + Σ_k ψ_k·ΔB_k,
/// ```
///
/// which tends to zero in RMS as the grid refines (the exact relation is
/// `dχ = −(1−γ)F dt + ψ dB`).
pub fn bsde_residual(
    ah: &ClosedFormAH,
    model: &ScalarModel,
    gamma: f64,
    path: &PathBundle,
) -> Result<f64> {
    let records = chi_psi_path(ah, model, gamma, &path.y, &path.grid)?;
    let n = path.n_steps();
    let dt = path.grid.dt();
    let mut acc = records[0].chi - records[n].chi;
    for (k, rec) in records.iter().take(n).enumerate() {
        let f = f_star_eval(path.y[k], rec.chi, rec.psi, model, gamma)?;
        acc += -(1.0 - gamma) * f * dt + rec.psi * path.db[k];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{grid_build, grid_build_with, GridPrior};
    use crate::model::{table1_model, table2_model, CirModel};
    use crate::riccati::make_ah;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const GAMMA: f64 = 1.2;

    fn table1_scalar() -> ScalarModel {
        ScalarModel::Linear(table1_model())
    }

    fn steady_state_table1() -> FilterState {
        let m = table1_model();
        FilterState::Kalman {
            yhat: 0.0,
            var: crate::filter::steady_state_variance(&m),
            steady: true,
        }
    }

    #[test]
    fn test_bsde_xi_trivial_at_horizon() {
        let settings = XiSettings {
            n_inner: 16,
            inner_steps: 10,
            branch_base: 0,
            override_checks: false,
        };
        let est = estimate_xi_nested(
            &table1_scalar(),
            &steady_state_table1(),
            GAMMA,
            1.0,
            1.0,
            7,
            &settings,
        )
        .unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(
            xi_closed_form_linear(&table1_model(), GAMMA, 1.0, 1.0, 0.3).unwrap(),
            1.0
        );
    }

    #[test]
    fn test_bsde_xi_unit_weight_when_hhat_equals_r() {
        // A grid filter whose h-closure is identically r makes φ ≡ 0, so
        // every branch weight is exactly 1 whatever the simulated prices.
        let model = table1_scalar();
        let n = 11;
        let probs = vec![1.0 / n as f64; n];
        let filter = grid_build_with(
            |_| 0.0, // h ≡ 0 = r
            |y| -8.0 * y,
            |_| 0.3,
            model.sigma(),
            n,
            -0.5,
            0.5,
            1e-2,
            probs,
        )
        .unwrap();
        let settings = XiSettings {
            n_inner: 8,
            inner_steps: 100,
            branch_base: 0,
            override_checks: false,
        };
        let est = estimate_xi_nested(
            &model,
            &FilterState::Grid(filter),
            GAMMA,
            0.0,
            1.0,
            3,
            &settings,
        )
        .unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn test_bsde_xi_nested_matches_linear_closed_form() {
        // Table 1 at t = 0 from the stationary steady-state posterior.
        let est = estimate_xi_nested(
            &table1_scalar(),
            &steady_state_table1(),
            GAMMA,
            0.0,
            1.0,
            2024,
            &XiSettings {
                n_inner: 2000,
                inner_steps: 1000,
                branch_base: crate::rng::BRANCH_INDEX_BASE,
                override_checks: false,
            },
        )
        .unwrap();
        let closed = xi_closed_form_linear(&table1_model(), GAMMA, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(closed, 0.9907697511411937, max_relative = 1e-10);
        assert!(
            (est.mean - closed).abs() <= 3.0 * est.stderr,
            "nested ξ {} ± {} vs closed {closed}",
            est.mean,
            est.stderr
        );
        // γ > 1 band: mean ≤ 1 + 3·stderr.
        assert!(est.mean <= 1.0 + 3.0 * est.stderr);
        assert!(est.mean > 0.0);
    }

    #[test]
    fn test_bsde_xi_reproducible_across_pool_sizes() {
        let model = ScalarModel::Cir(table2_model(0.15).unwrap());
        let filter = grid_build(&model, 120, 1e-4, 0.35, 1e-2, &GridPrior::Stationary).unwrap();
        let state = FilterState::Grid(filter);
        let settings = XiSettings {
            n_inner: 64,
            inner_steps: 100,
            branch_base: crate::rng::BRANCH_INDEX_BASE,
            override_checks: false,
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                estimate_xi_nested(&model, &state, GAMMA, 0.0, 1.0, 99, &settings).unwrap()
            })
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.mean.to_bits(), four.mean.to_bits());
        assert_eq!(one.stderr.to_bits(), four.stderr.to_bits());
        assert!(one.mean > 0.0 && one.mean <= 1.0 + 3.0 * one.stderr);
    }

    #[test]
    fn test_bsde_xi_condition_checks_gate_cir() {
        // σ = 0.01 violates Novikov: c²T/(2σ²) = 312.5 > 2κ/a² = 100.
        let cir = CirModel::new(0.25, 8.0, 0.05, 0.4, 0.01, 0.0, 0.0).unwrap();
        let model = ScalarModel::Cir(cir);
        let filter = grid_build(&model, 60, 1e-4, 0.35, 1e-2, &GridPrior::PointMass(0.05)).unwrap();
        let state = FilterState::Grid(filter);
        let mut settings = XiSettings {
            n_inner: 4,
            inner_steps: 10,
            branch_base: 0,
            override_checks: false,
        };
        let err = estimate_xi_nested(&model, &state, GAMMA, 0.0, 1.0, 1, &settings).unwrap_err();
        assert!(matches!(err, Error::Condition(_)), "got {err:?}");
        // The override flag bypasses the gate.
        settings.override_checks = true;
        settings.inner_steps = 100;
        assert!(estimate_xi_nested(&model, &state, GAMMA, 0.0, 1.0, 1, &settings).is_ok());
    }

    #[test]
    fn test_bsde_xi_closed_form_consistency_with_g_eval() {
        let model = table1_scalar();
        let ah = make_ah(AhKind::LinearPartial, &model, GAMMA, 1.0).unwrap();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            for yhat in [-0.3, -0.05, 0.0, 0.11, 0.4] {
                let xi = xi_closed_form_from_ah(&ah, GAMMA, t, yhat).unwrap();
                let g = g_eval(&ah, t, yhat);
                assert_relative_eq!(xi.powf(GAMMA), g, max_relative = 1e-14);
            }
        }
        // ŷ = 0: ξ = exp(H_p(t)/γ) ∈ (0, 1].
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let xi = xi_closed_form_from_ah(&ah, GAMMA, t, 0.0).unwrap();
            assert!(xi > 0.0 && xi <= 1.0);
        }
    }

    #[test]
    fn test_bsde_alpha_over_xi_trivial_zeroes_and_one_step_regression() {
        let m = table1_model();
        assert_eq!(alpha_over_xi_linear(&m, GAMMA, 1.0, 0.3, 0.0).unwrap(), 0.0);
        assert_eq!(
            alpha_over_xi_linear(&m, GAMMA, 1.0, 1.0, 0.25).unwrap(),
            0.0
        );

        // Regress Δlog ξ on Δζ over one dt-step from a fixed state.
        let model = table1_scalar();
        let ah = make_ah(AhKind::LinearPartial, &model, GAMMA, 1.0).unwrap();
        let sbar = crate::filter::steady_state_variance(&m);
        let (t, yhat, dt) = (0.3, 0.1, 1e-4);
        let gain = (sbar + m.sigma * m.a * m.rho) / (m.sigma * m.sigma);
        let log_xi_0 = (ah.a_at(t) * yhat * yhat + ah.h_at(t)) / GAMMA;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        let n = 2000;
        for i in 0..n {
            let mut rng = RngSpec::new(5150, i, StreamRole::InnerBranch).rng();
            let y_true = yhat + sbar.sqrt() * standard_normal(&mut rng);
            let grid = TimeGrid::new(t, t + dt, 1).unwrap();
            let bundle = simulate_market(&model, y_true, 1.0, &grid, 5150, i).unwrap();
            let innovation = bundle.return_over_step(0) - (m.mu + yhat) * dt;
            let dzeta = innovation / m.sigma;
            let yhat_next = yhat - m.kappa * yhat * dt + gain * innovation;
            let log_xi_1 = (ah.a_at(t + dt) * yhat_next * yhat_next + ah.h_at(t + dt)) / GAMMA;
            let (x, y) = (dzeta, log_xi_1 - log_xi_0);
            sxx += x * x;
            sxy += x * y;
            sx += x;
            sy += y;
        }
        let nf = n as f64;
        let slope = (sxy - sx * sy / nf) / (sxx - sx * sx / nf);
        let target = alpha_over_xi_linear(&m, GAMMA, 1.0, t, yhat).unwrap();
        assert!(
            (slope - target).abs() <= 0.02 * target.abs(),
            "regressed slope {slope} vs α/ξ {target}"
        );
    }

    #[test]
    fn test_bsde_beta_trivials_and_two_form_identity() {
        assert_eq!(beta_eval(0.03, 0.03, 0.2, GAMMA, 0.0, 0.9).unwrap(), 0.0);
        assert_eq!(beta_eval(0.08, 0.01, 0.2, 1.0, 0.3, 0.9).unwrap(), 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let hhat = -0.5 + rng.random::<f64>();
            let r = 0.1 * rng.random::<f64>();
            let sigma = 0.1 + 1.9 * rng.random::<f64>();
            let gamma = 0.2 + 4.8 * rng.random::<f64>();
            let alpha = -1.0 + 2.0 * rng.random::<f64>();
            let xi = 0.2 + 4.8 * rng.random::<f64>();
            // beta_eval errors if the forms disagree beyond 1e-10; the
            // tighter 1e-12 bound is recomputed here.
            let phi = (hhat - r) / sigma;
            let form1 = (1.0 - gamma) / gamma * phi * alpha
                + (1.0 - gamma) / (2.0 * gamma * gamma) * phi * phi * xi;
            let w = phi / gamma + alpha / xi;
            let form2 = 0.5 * (1.0 - gamma) * xi * w * w - 0.5 * (1.0 - gamma) / xi * alpha * alpha;
            assert!((form1 - form2).abs() / (1.0 + form1.abs()) < 1e-12);
            assert_eq!(beta_eval(hhat, r, sigma, gamma, alpha, xi).unwrap(), form1);
        }
    }

    #[test]
    fn test_bsde_f_star_matches_brute_force_maximum() {
        let model = table1_scalar();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let y = -0.5 + rng.random::<f64>();
            let g = 0.2 + rng.random::<f64>();
            let eta = -0.5 + rng.random::<f64>();
            let gamma = 0.3 + 3.0 * rng.random::<f64>();
            let f_star = f_star_eval(y, g, eta, &model, gamma).unwrap();
            assert!(f_star >= 0.0);
            let pi_star = pi_star_full(y, g, eta, &model, gamma).unwrap();
            // Golden-section maximization of the strictly concave f.
            let (mut a, mut b) = (pi_star - 5.0, pi_star + 5.0);
            let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
            while b - a > 1e-11 {
                let c = b - inv_phi * (b - a);
                let d = a + inv_phi * (b - a);
                if f_eval(y, c, g, eta, &model, gamma).unwrap()
                    < f_eval(y, d, g, eta, &model, gamma).unwrap()
                {
                    a = c;
                } else {
                    b = d;
                }
            }
            let brute = f_eval(y, 0.5 * (a + b), g, eta, &model, gamma).unwrap();
            assert!(
                (brute - f_star).abs() < 1e-8,
                "brute-force max {brute} vs F {f_star}"
            );
            // The maximizer attains F exactly and has vanishing gradient.
            let at_star = f_eval(y, pi_star, g, eta, &model, gamma).unwrap();
            assert_relative_eq!(at_star, f_star, max_relative = 1e-12, epsilon = 1e-14);
            let eps = 1e-5;
            let grad = (f_eval(y, pi_star + eps, g, eta, &model, gamma).unwrap()
                - f_eval(y, pi_star - eps, g, eta, &model, gamma).unwrap())
                / (2.0 * eps);
            assert!(grad.abs() < 1e-8 * (1.0 + f_star.abs()), "gradient {grad}");
        }
    }

    #[test]
    fn test_bsde_f_eval_trivials_and_concavity() {
        let model = table1_scalar();
        assert_eq!(f_eval(0.2, 0.0, 0.9, 0.4, &model, GAMMA).unwrap(), 0.0);
        assert_eq!(f_star_eval(0.0, 0.9, 0.0, &model, GAMMA).unwrap(), 0.0); // h(0)=r=0, η=0
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let y = -0.5 + rng.random::<f64>();
            let g = 0.2 + rng.random::<f64>();
            let eta = -0.5 + rng.random::<f64>();
            let p1 = -3.0 + 6.0 * rng.random::<f64>();
            let p2 = -3.0 + 6.0 * rng.random::<f64>();
            let mid = f_eval(y, 0.5 * (p1 + p2), g, eta, &model, GAMMA).unwrap();
            let avg = 0.5
                * (f_eval(y, p1, g, eta, &model, GAMMA).unwrap()
                    + f_eval(y, p2, g, eta, &model, GAMMA).unwrap());
            assert!(mid >= avg - 1e-12, "concavity violated: {mid} < {avg}");
        }
    }

    #[test]
    fn test_bsde_chi_psi_terminal_and_zero_factor() {
        let model = table1_scalar();
        let ah = make_ah(AhKind::LinearFull, &model, GAMMA, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let records =
            chi_psi_path(&ah, &model, GAMMA, &[0.0, 0.1, -0.2, 0.05, 0.3], &grid).unwrap();
        assert_eq!(records.len(), 5);
        let last = records.last().unwrap();
        assert_eq!(last.chi, 1.0);
        assert_eq!(last.psi, 0.0);
        assert_eq!(last.xi, 1.0);
        // Y ≡ 0 (linear) → ψ ≡ 0, and ξ = χ^{1/γ} throughout.
        let records = chi_psi_path(&ah, &model, GAMMA, &[0.0; 5], &grid).unwrap();
        for rec in &records {
            assert_eq!(rec.psi, 0.0);
            assert_relative_eq!(rec.xi.powf(GAMMA), rec.chi, max_relative = 1e-14);
            assert!(rec.chi > 0.0 && rec.xi > 0.0);
            assert!(rec.alpha_over_xi.is_none());
        }
        // Partial-information coefficients are rejected.
        let partial = make_ah(AhKind::LinearPartial, &model, GAMMA, 1.0).unwrap();
        assert!(chi_psi_path(&partial, &model, GAMMA, &[0.0; 5], &grid).is_err());
    }

    #[test]
    fn test_bsde_residual_rms_halves_under_refinement() {
        let model = ScalarModel::Cir(table2_model(0.15).unwrap());
        let ah = make_ah(AhKind::CirFull, &model, GAMMA, 1.0).unwrap();
        let rms = |n_steps: usize| {
            let grid = TimeGrid::new(0.0, 1.0, n_steps).unwrap();
            let mut acc = 0.0;
            for j in 0..100u64 {
                let bundle = simulate_market(&model, 0.05, 1.0, &grid, 314, j).unwrap();
                let r = bsde_residual(&ah, &model, GAMMA, &bundle).unwrap();
                acc += r * r;
            }
            (acc / 100.0).sqrt()
        };
        let coarse = rms(1000);
        let fine = rms(2000);
        let ratio = fine / coarse;
        assert!(
            ratio > 0.25 && ratio < 0.75,
            "refinement ratio {ratio} (coarse {coarse}, fine {fine})"
        );
    }
}
