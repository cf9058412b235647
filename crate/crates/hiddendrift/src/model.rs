//! Market models, utility functions, and applicability conditions.
//!
//! The crate works with three levels of model description:
//!
//! * [`GeneralModelSpec`] — the abstract market: `d` assets whose drift
//!   `h(Y)` is driven by a `q`-dimensional hidden factor `Y`, with
//!   idiosyncratic volatility `σ_w` and factor loading `σ_y`.
//! * [`LinearOuModel`] — the tractable scalar special case where `Y` is an
//!   Ornstein–Uhlenbeck process and `h(y) = μ + y`.  Filtering and the
//!   value function are available in closed form here.
//! * [`CirModel`] — the scalar nonlinear example where `Y` is a
//!   Cox–Ingersoll–Ross process and `h(y) = r + c·√y`.  Closed forms exist
//!   under full information; partial information requires the grid filter
//!   and nested Monte Carlo.
//!
//! The module also houses the power utility pair `U`/`U*` and the
//! applicability checks (Feller, Novikov, moment-generating-function bound)
//! that experiments consult before trusting any estimate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Power utility `U(x) = x^{1-γ}/(1-γ)` with risk aversion `γ > 0`, `γ ≠ 1`.
///
/// For `γ > 1` utility is negative and bounded above by zero; for
/// `0 < γ < 1` it is positive and unbounded.  The convex conjugate
/// `U*(p) = sup_x (U(x) - xp) = γ/(1-γ) · p^{-(1-γ)/γ}` is used by the dual
/// value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerUtility {
    gamma: f64,
}

impl PowerUtility {
    /// Validates `γ > 0`, `γ ≠ 1`, finite.
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::invalid(format!(
                "power utility requires gamma > 0, got {gamma}"
            )));
        }
        if gamma == 1.0 {
            return Err(Error::invalid(
                "gamma = 1 is logarithmic utility, outside the power family",
            ));
        }
        Ok(PowerUtility { gamma })
    }

    /// Risk-aversion parameter `γ`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `U(x) = x^{1-γ}/(1-γ)` for `x > 0`.
    pub fn u(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::invalid(format!(
                "utility argument must be positive, got {x}"
            )));
        }
        Ok(x.powf(1.0 - self.gamma) / (1.0 - self.gamma))
    }

    /// Marginal utility `U'(x) = x^{-γ}` for `x > 0`.
    pub fn u_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::invalid(format!(
                "utility argument must be positive, got {x}"
            )));
        }
        Ok(x.powf(-self.gamma))
    }

    /// Convex conjugate `U*(p) = γ/(1-γ) · p^{-(1-γ)/γ}` for `p > 0`.
    pub fn conjugate(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::invalid(format!(
                "conjugate argument must be positive, got {p}"
            )));
        }
        let g = self.gamma;
        Ok(g / (1.0 - g) * p.powf(-(1.0 - g) / g))
    }
}

/// Outcome of a single applicability check: `ok ⇔ lhs < rhs` strictly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// Left-hand side of the inequality being tested.
    pub lhs: f64,
    /// Right-hand side of the inequality being tested.
    pub rhs: f64,
    /// Whether the strict inequality `lhs < rhs` holds.
    pub ok: bool,
}

impl ConditionReport {
    fn strict(lhs: f64, rhs: f64) -> Self {
        ConditionReport {
            lhs,
            rhs,
            ok: lhs < rhs,
        }
    }
}

/// Scalar Ornstein–Uhlenbeck factor model (the linear example).
///
/// Dynamics: `dY = -κY dt + a dB`,
/// `dS/S = (μ + Y) dt + σ(ρ dB + √(1-ρ²) dW)` with independent Brownian
/// motions `B` (factor) and `W` (idiosyncratic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOuModel {
    /// Baseline drift of the asset; `h(y) = μ + y`.
    pub mu: f64,
    /// Mean-reversion speed of the factor, `κ > 0`.
    pub kappa: f64,
    /// Factor volatility, `a > 0`.
    pub a: f64,
    /// Correlation between factor and asset noise, `ρ ∈ (-1, 1)`.
    pub rho: f64,
    /// Total asset volatility, `σ > 0`.
    pub sigma: f64,
    /// Risk-free rate, `r ≥ 0`.
    pub r: f64,
}

impl LinearOuModel {
    /// Validates the parameter ranges listed on the fields.
    pub fn new(mu: f64, kappa: f64, a: f64, rho: f64, sigma: f64, r: f64) -> Result<Self> {
        for (name, v) in [
            ("mu", mu),
            ("kappa", kappa),
            ("a", a),
            ("rho", rho),
            ("sigma", sigma),
            ("r", r),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if kappa <= 0.0 {
            return Err(Error::invalid(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if a <= 0.0 {
            return Err(Error::invalid(format!("a must be positive, got {a}")));
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::invalid(format!(
                "rho must lie in (-1, 1), got {rho}"
            )));
        }
        if sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if r < 0.0 {
            return Err(Error::invalid(format!("r must be non-negative, got {r}")));
        }
        Ok(LinearOuModel {
            mu,
            kappa,
            a,
            rho,
            sigma,
            r,
        })
    }

    /// Stationary variance of the factor, `a²/(2κ)`.
    pub fn stationary_var(&self) -> f64 {
        self.a * self.a / (2.0 * self.kappa)
    }
}

/// Scalar Cox–Ingersoll–Ross factor model (the nonlinear example).
///
/// Dynamics: `dY = κ(Ȳ - Y) dt + a√Y dB`,
/// `dS/S = (r + c√Y) dt + σ dW` with `B ⟂ W` (the example fixes `ρ = 0`).
///
/// The Feller condition `a² ≤ 2κȲ` keeps `Y` strictly positive and is
/// required by every closed form in this crate; it is reported by
/// [`check_feller`] and enforced when a configuration is loaded, but the
/// constructor admits violating parameters so that the check itself is
/// exercisable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirModel {
    /// Risk-premium loading; `h(y) = r + c·√y`.
    pub c: f64,
    /// Mean-reversion speed, `κ > 0`.
    pub kappa: f64,
    /// Long-run mean of the factor, `Ȳ > 0`.
    pub ybar: f64,
    /// Factor volatility scale, `a > 0`.
    pub a: f64,
    /// Total asset volatility, `σ > 0`.
    pub sigma: f64,
    /// Factor–asset correlation; the example fixes `ρ = 0` and the filter
    /// and closed forms assume it.
    pub rho: f64,
    /// Risk-free rate, `r ≥ 0`.
    pub r: f64,
}

impl CirModel {
    /// Validates positivity ranges.  The Feller condition is deliberately
    /// *not* enforced here; see the type-level docs.
    pub fn new(
        c: f64,
        kappa: f64,
        ybar: f64,
        a: f64,
        sigma: f64,
        rho: f64,
        r: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("c", c),
            ("kappa", kappa),
            ("ybar", ybar),
            ("a", a),
            ("sigma", sigma),
            ("rho", rho),
            ("r", r),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if kappa <= 0.0 {
            return Err(Error::invalid(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if ybar <= 0.0 {
            return Err(Error::invalid(format!("ybar must be positive, got {ybar}")));
        }
        if a <= 0.0 {
            return Err(Error::invalid(format!("a must be positive, got {a}")));
        }
        if sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if rho != 0.0 {
            return Err(Error::invalid(format!(
                "the CIR example requires rho = 0 (filter and closed forms assume it), got {rho}"
            )));
        }
        if r < 0.0 {
            return Err(Error::invalid(format!("r must be non-negative, got {r}")));
        }
        Ok(CirModel {
            c,
            kappa,
            ybar,
            a,
            sigma,
            rho,
            r,
        })
    }

    /// Stationary variance of the factor, `a²Ȳ/(2κ)`.
    pub fn stationary_var(&self) -> f64 {
        self.a * self.a * self.ybar / (2.0 * self.kappa)
    }
}

/// Either of the two scalar example models, for code that works with both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarModel {
    /// Ornstein–Uhlenbeck factor, `h(y) = μ + y`.
    Linear(LinearOuModel),
    /// Cox–Ingersoll–Ross factor, `h(y) = r + c√y`.
    Cir(CirModel),
}

impl ScalarModel {
    /// Asset drift `h(y)` as a function of the factor.
    pub fn h(&self, y: f64) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.mu + y,
            ScalarModel::Cir(m) => m.r + m.c * y.max(0.0).sqrt(),
        }
    }

    /// Factor drift `b(y)`.
    pub fn drift(&self, y: f64) -> f64 {
        match self {
            ScalarModel::Linear(m) => -m.kappa * y,
            ScalarModel::Cir(m) => m.kappa * (m.ybar - y),
        }
    }

    /// Factor diffusion `a(y)`; the CIR case uses full truncation
    /// (`a·√(y⁺)`) so Euler steps remain defined for transiently negative
    /// iterates.
    pub fn diffusion(&self, y: f64) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.a,
            ScalarModel::Cir(m) => m.a * y.max(0.0).sqrt(),
        }
    }

    /// Total asset volatility `σ`.
    pub fn sigma(&self) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.sigma,
            ScalarModel::Cir(m) => m.sigma,
        }
    }

    /// Idiosyncratic loading `σ_w = σ√(1-ρ²)`.
    pub fn sigma_w(&self) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.sigma * (1.0 - m.rho * m.rho).sqrt(),
            ScalarModel::Cir(m) => m.sigma,
        }
    }

    /// Factor loading `σ_y = σρ` (zero for the CIR example).
    pub fn sigma_y(&self) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.sigma * m.rho,
            ScalarModel::Cir(_) => 0.0,
        }
    }

    /// Risk-free rate `r`.
    pub fn rate(&self) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.r,
            ScalarModel::Cir(m) => m.r,
        }
    }

    /// Mean-reversion speed `κ`.
    pub fn kappa(&self) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.kappa,
            ScalarModel::Cir(m) => m.kappa,
        }
    }

    /// Stationary mean of the factor (0 for OU, `Ȳ` for CIR).
    pub fn stationary_mean(&self) -> f64 {
        match self {
            ScalarModel::Linear(_) => 0.0,
            ScalarModel::Cir(m) => m.ybar,
        }
    }

    /// Stationary variance of the factor.
    pub fn stationary_var(&self) -> f64 {
        match self {
            ScalarModel::Linear(m) => m.stationary_var(),
            ScalarModel::Cir(m) => m.stationary_var(),
        }
    }

    /// Default initial factor value used by experiments when a
    /// configuration does not pin one (the stationary mean).
    pub fn default_y0(&self) -> f64 {
        self.stationary_mean()
    }
}

/// The general multi-asset market specification.
///
/// `d` assets, `q` hidden factors, constant volatility blocks and arbitrary
/// (Borel, locally bounded) coefficient functions:
///
/// * `h : R^q → R^d` — asset drift,
/// * `b : R^q → R^q` — factor drift,
/// * `a : R^q → R^{q×q}` — factor diffusion.
///
/// The invariant behind every complete-market reduction is that the total
/// covariance `σσᵀ = σ_wσ_wᵀ + σ_yσ_yᵀ` is positive definite with
/// eigenvalues in `[ε, 1/ε]`; [`total_sigma`] verifies it when extracting
/// the square root.
pub struct GeneralModelSpec {
    /// Number of assets `d`.
    pub dim_d: usize,
    /// Number of hidden factors `q`.
    pub dim_q: usize,
    /// Risk-free rate.
    pub r: f64,
    /// Idiosyncratic volatility block, `d×d`.
    pub sigma_w: DMatrix<f64>,
    /// Factor loading block, `d×q`.
    pub sigma_y: DMatrix<f64>,
    /// Ellipticity constant `ε` bounding the spectrum of `σσᵀ`.
    pub eps: f64,
    h: VectorCoefficient,
    b: VectorCoefficient,
    a: MatrixCoefficient,
}

/// Boxed vector-valued coefficient function `R^q → R^d` (or `R^q`).
type VectorCoefficient = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Boxed matrix-valued coefficient function `R^q → R^{q×q}`.
type MatrixCoefficient = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

impl std::fmt::Debug for GeneralModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralModelSpec")
            .field("dim_d", &self.dim_d)
            .field("dim_q", &self.dim_q)
            .field("r", &self.r)
            .field("sigma_w", &self.sigma_w)
            .field("sigma_y", &self.sigma_y)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

impl GeneralModelSpec {
    /// Builds a specification, checking the dimensional layout of the
    /// volatility blocks and `ε > 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim_d: usize,
        dim_q: usize,
        r: f64,
        sigma_w: DMatrix<f64>,
        sigma_y: DMatrix<f64>,
        eps: f64,
        h: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        b: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        a: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim_d == 0 || dim_q == 0 {
            return Err(Error::invalid("dimensions d and q must be positive"));
        }
        if sigma_w.shape() != (dim_d, dim_d) {
            return Err(Error::invalid(format!(
                "sigma_w must be {d}×{d}, got {:?}",
                sigma_w.shape(),
                d = dim_d
            )));
        }
        if sigma_y.shape() != (dim_d, dim_q) {
            return Err(Error::invalid(format!(
                "sigma_y must be {}×{}, got {:?}",
                dim_d,
                dim_q,
                sigma_y.shape()
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!(
                "eps must be a positive real, got {eps}"
            )));
        }
        if !r.is_finite() {
            return Err(Error::invalid(format!("r must be finite, got {r}")));
        }
        Ok(GeneralModelSpec {
            dim_d,
            dim_q,
            r,
            sigma_w,
            sigma_y,
            eps,
            h: Box::new(h),
            b: Box::new(b),
            a: Box::new(a),
        })
    }

    /// Asset drift `h(y)`.
    pub fn h(&self, y: &DVector<f64>) -> DVector<f64> {
        (self.h)(y)
    }

    /// Factor drift `b(y)`.
    pub fn b(&self, y: &DVector<f64>) -> DVector<f64> {
        (self.b)(y)
    }

    /// Factor diffusion `a(y)`.
    pub fn a(&self, y: &DVector<f64>) -> DMatrix<f64> {
        (self.a)(y)
    }

    /// Embeds a [`LinearOuModel`] as a `d = q = 1` specification.
    pub fn from_linear(m: &LinearOuModel) -> Self {
        let mm = *m;
        GeneralModelSpec::new(
            1,
            1,
            m.r,
            DMatrix::from_element(1, 1, m.sigma * (1.0 - m.rho * m.rho).sqrt()),
            DMatrix::from_element(1, 1, m.sigma * m.rho),
            scalar_epsilon(m.sigma),
            move |y| DVector::from_element(1, mm.mu + y[0]),
            move |y| DVector::from_element(1, -mm.kappa * y[0]),
            move |_| DMatrix::from_element(1, 1, mm.a),
        )
        .expect("a validated LinearOuModel always embeds")
    }

    /// Embeds a [`CirModel`] as a `d = q = 1` specification (with full
    /// truncation in the diffusion, matching the simulator).
    pub fn from_cir(m: &CirModel) -> Self {
        let mm = *m;
        GeneralModelSpec::new(
            1,
            1,
            m.r,
            DMatrix::from_element(1, 1, m.sigma),
            DMatrix::from_element(1, 1, 0.0),
            scalar_epsilon(m.sigma),
            move |y| DVector::from_element(1, mm.r + mm.c * y[0].max(0.0).sqrt()),
            move |y| DVector::from_element(1, mm.kappa * (mm.ybar - y[0])),
            move |y| DMatrix::from_element(1, 1, mm.a * y[0].max(0.0).sqrt()),
        )
        .expect("a validated CirModel always embeds")
    }
}

/// Ellipticity constant for a scalar model: `min(σ², 1/σ²)`.
///
/// The applicability bounds tighten as `ε` grows, so the largest `ε` with
/// `ε ≤ σσᵀ ≤ 1/ε` is the least conservative admissible choice.
pub fn scalar_epsilon(sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2.min(1.0 / s2)
}

/// Symmetric positive-definite square root of the total covariance
/// `σ_wσ_wᵀ + σ_yσ_yᵀ`.
///
/// # Errors
///
/// Returns an invalid-model error when the combined matrix has an
/// eigenvalue outside `[ε, 1/ε]` (in particular when it is not positive
/// definite).
pub fn total_sigma(spec: &GeneralModelSpec) -> Result<DMatrix<f64>> {
    let combined =
        &spec.sigma_w * spec.sigma_w.transpose() + &spec.sigma_y * spec.sigma_y.transpose();
    let eigen = combined.clone().symmetric_eigen();
    let lo = spec.eps * (1.0 - 1e-9);
    let hi = (1.0 / spec.eps) * (1.0 + 1e-9);
    for &lambda in eigen.eigenvalues.iter() {
        if !(lambda >= lo && lambda <= hi) {
            return Err(Error::invalid(format!(
                "total covariance eigenvalue {lambda} outside [{}, {}]",
                spec.eps,
                1.0 / spec.eps
            )));
        }
    }
    let sqrt_diag = DMatrix::from_diagonal(&eigen.eigenvalues.map(f64::sqrt));
    Ok(&eigen.eigenvectors * sqrt_diag * eigen.eigenvectors.transpose())
}

/// Feller condition for the CIR factor: `a² ≤ 2κȲ`.
pub fn check_feller(model: &CirModel) -> bool {
    model.a * model.a <= 2.0 * model.kappa * model.ybar
}

/// Novikov sufficient condition for the CIR example:
/// `c²T/(2σ²) < 2κ/a²`.
pub fn check_novikov_cir(model: &CirModel, t_horizon: f64) -> Result<ConditionReport> {
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {t_horizon}"
        )));
    }
    let lhs = model.c * model.c * t_horizon / (2.0 * model.sigma * model.sigma);
    let rhs = 2.0 * model.kappa / (model.a * model.a);
    Ok(ConditionReport::strict(lhs, rhs))
}

/// Moment-generating-function bound for the CIR example:
/// `2T|γ-1||γ-2|/(εγ²) < 2κ/a²`.
pub fn check_mgf_cir(
    model: &CirModel,
    gamma: f64,
    t_horizon: f64,
    eps: f64,
) -> Result<ConditionReport> {
    if !(gamma > 0.0 && gamma.is_finite()) || gamma == 1.0 {
        return Err(Error::invalid(format!(
            "gamma must be positive and ≠ 1, got {gamma}"
        )));
    }
    if !(t_horizon > 0.0 && t_horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {t_horizon}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    let lhs = 2.0 * t_horizon * (gamma - 1.0).abs() * (gamma - 2.0).abs() / (eps * gamma * gamma);
    let rhs = 2.0 * model.kappa / (model.a * model.a);
    Ok(ConditionReport::strict(lhs, rhs))
}

/// The linear example of Table 1: `κ=8`, `a=0.3`, `ρ=-0.8`, `σ=0.15`,
/// `μ=r=0`.
pub fn table1_model() -> LinearOuModel {
    LinearOuModel::new(0.0, 8.0, 0.3, -0.8, 0.15, 0.0).expect("Table 1 parameters are valid")
}

/// The CIR example of Table 2: `c=0.25`, `κ=8`, `Ȳ=0.05`, `a=0.4`, `ρ=0`,
/// `r=0`, with `σ` supplied (the table studies `σ=0.15` and `σ=0.026`).
pub fn table2_model(sigma: f64) -> Result<CirModel> {
    CirModel::new(0.25, 8.0, 0.05, 0.4, sigma, 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_model_power_utility_rejects_bad_gamma() {
        assert!(PowerUtility::new(0.0).is_err());
        assert!(PowerUtility::new(-1.0).is_err());
        assert!(PowerUtility::new(1.0).is_err());
        assert!(PowerUtility::new(f64::NAN).is_err());
        assert!(PowerUtility::new(1.2).is_ok());
        assert!(PowerUtility::new(0.5).is_ok());
    }

    #[test]
    fn test_model_power_utility_conjugate_identity() {
        // U*(U'(x)) = U(x) - x·U'(x) for the convex conjugate.
        for gamma in [0.5, 1.2, 3.0] {
            let u = PowerUtility::new(gamma).unwrap();
            for x in [0.25, 1.0, 2.0, 10.0] {
                let p = u.u_prime(x).unwrap();
                let lhs = u.conjugate(p).unwrap();
                let rhs = u.u(x).unwrap() - x * p;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn test_model_total_sigma_identity_case() {
        // σ_w = I (1×1), σ_y = 0 → σ = 1.
        let spec = GeneralModelSpec::new(
            1,
            1,
            0.0,
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            0.5,
            |_| DVector::zeros(1),
            |_| DVector::zeros(1),
            |_| DMatrix::identity(1, 1),
        )
        .unwrap();
        let sigma = total_sigma(&spec).unwrap();
        assert_relative_eq!(sigma[(0, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn test_model_total_sigma_square_reproduces_covariance() {
        let sigma_w = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.25]);
        let sigma_y = DMatrix::from_row_slice(2, 2, &[0.12, -0.05, 0.07, 0.2]);
        let combined = &sigma_w * sigma_w.transpose() + &sigma_y * sigma_y.transpose();
        let spec = GeneralModelSpec::new(
            2,
            2,
            0.0,
            sigma_w,
            sigma_y,
            1e-3,
            |_| DVector::zeros(2),
            |_| DVector::zeros(2),
            |_| DMatrix::identity(2, 2),
        )
        .unwrap();
        let sigma = total_sigma(&spec).unwrap();
        let square = &sigma * sigma.transpose();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(square[(i, j)], combined[(i, j)], epsilon = 1e-12);
            }
        }
        // The root itself must be symmetric.
        assert_relative_eq!(sigma[(0, 1)], sigma[(1, 0)], epsilon = 1e-13);
    }

    #[test]
    fn test_model_total_sigma_rejects_spectrum_outside_band() {
        // A degenerate covariance (σ_w = 0 in one direction) violates the
        // lower eigenvalue bound.
        let spec = GeneralModelSpec::new(
            2,
            1,
            0.0,
            DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.0]),
            DMatrix::zeros(2, 1),
            1e-3,
            |_| DVector::zeros(2),
            |_| DVector::zeros(1),
            |_| DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(total_sigma(&spec).is_err());
    }

    #[test]
    fn test_model_check_feller_table2_true_and_counterexample() {
        let m = table2_model(0.15).unwrap();
        assert!(check_feller(&m), "Table 2: 0.16 ≤ 0.8");
        let bad = CirModel::new(0.25, 1.0, 0.1, 1.0, 0.15, 0.0, 0.0).unwrap();
        assert!(!check_feller(&bad), "a=1, κ=1, Ȳ=0.1 violates Feller");
    }

    #[test]
    fn test_model_check_novikov_cir_table2_values() {
        let m = table2_model(0.15).unwrap();
        let rep = check_novikov_cir(&m, 1.0).unwrap();
        assert_relative_eq!(rep.lhs, 1.3888888888888888, max_relative = 1e-14);
        assert_relative_eq!(rep.rhs, 100.0, max_relative = 1e-14);
        assert!(rep.ok);

        let m = table2_model(0.026).unwrap();
        let rep = check_novikov_cir(&m, 1.0).unwrap();
        assert_relative_eq!(rep.lhs, 46.22781065088758, max_relative = 1e-13);
        assert!(rep.ok);

        let m = table2_model(0.001).unwrap();
        let rep = check_novikov_cir(&m, 1.0).unwrap();
        assert_relative_eq!(rep.lhs, 31250.0, max_relative = 1e-14);
        assert!(!rep.ok);
    }

    #[test]
    fn test_model_check_mgf_cir_examples() {
        let m = table2_model(0.15).unwrap();
        // γ=2 zeroes the |γ-2| factor.
        let rep = check_mgf_cir(&m, 2.0, 1.0, 0.0225).unwrap();
        assert_eq!(rep.lhs, 0.0);
        assert!(rep.ok);
        // Table 2 at γ=1.2, ε=σ².
        let rep = check_mgf_cir(&m, 1.2, 1.0, 0.0225).unwrap();
        assert_relative_eq!(rep.lhs, 9.876543209876543, max_relative = 1e-13);
        assert!(rep.ok);
        // Small γ blows the bound up.
        let rep = check_mgf_cir(&m, 0.05, 1.0, 0.0225).unwrap();
        assert!(rep.lhs > rep.rhs);
        assert!(!rep.ok);
    }

    #[test]
    fn test_model_scalar_epsilon_is_min_of_sigma_squared_and_inverse() {
        assert_relative_eq!(scalar_epsilon(0.15), 0.0225, max_relative = 1e-15);
        assert_relative_eq!(scalar_epsilon(2.0), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn test_model_cir_constructor_rejects_nonzero_rho() {
        assert!(CirModel::new(0.25, 8.0, 0.05, 0.4, 0.15, 0.3, 0.0).is_err());
    }

    #[test]
    fn test_model_scalar_model_coefficients() {
        let lin = ScalarModel::Linear(table1_model());
        assert_relative_eq!(lin.h(0.02), 0.02, max_relative = 1e-15);
        assert_relative_eq!(lin.drift(0.02), -0.16, max_relative = 1e-15);
        assert_eq!(lin.diffusion(-3.0), 0.3);
        assert_relative_eq!(lin.sigma_y(), -0.12, max_relative = 1e-15);
        assert_relative_eq!(
            lin.sigma_w(),
            0.15 * (1.0f64 - 0.64).sqrt(),
            max_relative = 1e-15
        );

        let cir = ScalarModel::Cir(table2_model(0.15).unwrap());
        assert_relative_eq!(cir.h(0.04), 0.25 * 0.2, max_relative = 1e-15);
        assert_relative_eq!(cir.drift(0.04), 8.0 * 0.01, max_relative = 1e-12);
        // Full truncation keeps the diffusion defined below zero.
        assert_eq!(cir.diffusion(-0.01), 0.0);
        assert_eq!(cir.sigma_y(), 0.0);
    }
}
