//! Riccati machinery for the value-function coefficients `A(t)`, `H(t)`.
//!
//! All three tractable instances — linear model under full information,
//! linear model under partial information (via the effective loading `ā`),
//! and the CIR model under full information — are mapped onto one scalar
//! Riccati convention
//!
//! ```text
//! A'(t) + q2·A² − 2·q1·A + q0 = 0,   A(T) = 0,
//! H'(t) = −k_H·A(t),                 H(T) = 0,
//! ```
//!
//! solved in closed form when the characteristic roots
//! `A± = (q1 ± √(q1² − q2·q0))/q2` are real and `A₊ > 0` (the stable
//! regime), and by RK4 otherwise.  The discriminant `q1² − q2·q0` is
//! exactly the stability expression of the source model, so
//! [`stability_full`]/[`stability_partial`] are thin wrappers around it.
//!
//! When the roots are complex the value function reaches *nirvana*: the
//! Riccati solution blows up at a finite time.  [`nirvana_blowup_time`]
//! locates that time by linearizing `A = u'/(q2·u)` and finding the first
//! backward zero of `u`.  With terminal conditions `u'(T) = 0, u(T) = 1`
//! the correct combination is `cos(Ξτ) + (q1/Ξ)·sin(Ξτ)` in backward time
//! `τ = T − t` (the source text drops the `1/Ξ` on the sine coefficient;
//! the RK4 oracle confirms the form used here).

use crate::error::{Error, Result};
use crate::filter::abar;
use crate::model::{CirModel, LinearOuModel, ScalarModel};

/// Which value-function coefficient pair a [`ClosedFormAH`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AhKind {
    /// Linear model, full information: `G(t,y) = exp(A y² + H)`.
    LinearFull,
    /// Linear model, partial information (`ρ→1`, `a→ā`):
    /// `G(t,ŷ) = exp(A ŷ² + H)`.
    LinearPartial,
    /// CIR model, full information: `G(t,y) = exp(A y + H)`.
    CirFull,
}

/// Coefficients of the unified scalar Riccati equation
/// `A' + q2·A² − 2·q1·A + q0 = 0` with `A(T) = 0`, plus the coupling
/// constant of the companion equation `H' = −k_H·A`, `H(T) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiSpec {
    /// Coefficient of `A²`.
    pub q2: f64,
    /// Half the coefficient of `−A` (sign convention above).
    pub q1: f64,
    /// Constant term.
    pub q0: f64,
    /// Coupling of `H` to `A` (`a²` linear, `ā²` partial, `κȲ` CIR).
    pub k_h: f64,
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) || gamma == 1.0 {
        return Err(Error::invalid(format!(
            "gamma must be positive and ≠ 1, got {gamma}"
        )));
    }
    Ok(())
}

impl RiccatiSpec {
    /// Builds a spec from raw coefficients (all must be finite).
    pub fn new(q2: f64, q1: f64, q0: f64, k_h: f64) -> Result<Self> {
        for (name, v) in [("q2", q2), ("q1", q1), ("q0", q0), ("k_h", k_h)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(RiccatiSpec { q2, q1, q0, k_h })
    }

    /// Linear model, full information:
    /// `q2 = 2a²(1 + (1−γ)ρ²/γ)`, `q1 = κ − (1−γ)ρa/(γσ)`,
    /// `q0 = (1−γ)/(2γσ²)`, `k_H = a²`.
    pub fn linear_full(model: &LinearOuModel, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        let LinearOuModel {
            kappa,
            a,
            rho,
            sigma,
            ..
        } = *model;
        let nu = (1.0 - gamma) / gamma;
        RiccatiSpec::new(
            2.0 * a * a * (1.0 + nu * rho * rho),
            kappa - nu * rho * a / sigma,
            nu / (2.0 * sigma * sigma),
            a * a,
        )
    }

    /// Linear model, partial information: the full-information coefficients
    /// with `ρ → 1` and `a → ā` (which may be negative; only `ā²` and the
    /// product `ā/σ` enter).
    pub fn linear_partial(model: &LinearOuModel, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        let ab = abar(model);
        let nu = (1.0 - gamma) / gamma;
        RiccatiSpec::new(
            2.0 * ab * ab * (1.0 + nu),
            model.kappa - nu * ab / model.sigma,
            nu / (2.0 * model.sigma * model.sigma),
            ab * ab,
        )
    }

    /// CIR model, full information:
    /// `q2 = a²/2`, `q1 = κ/2`, `q0 = c²(1−γ)/(2γσ²)`, `k_H = κȲ`.
    pub fn cir_full(model: &CirModel, gamma: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        let nu = (1.0 - gamma) / gamma;
        RiccatiSpec::new(
            0.5 * model.a * model.a,
            0.5 * model.kappa,
            model.c * model.c * nu / (2.0 * model.sigma * model.sigma),
            model.kappa * model.ybar,
        )
    }

    /// Discriminant `q1² − q2·q0` of the characteristic quadratic.
    pub fn discriminant(&self) -> f64 {
        self.q1 * self.q1 - self.q2 * self.q0
    }

    /// Backward-time derivative `dA/dτ = q2·A² − 2·q1·A + q0` (`τ = T − t`).
    pub fn a_rhs_backward(&self, a: f64) -> f64 {
        self.q2 * a * a - 2.0 * self.q1 * a + self.q0
    }
}

/// Root structure of the characteristic quadratic `q2·A² − 2q1·A + q0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiccatiRoots {
    /// Two real roots (possibly equal), `a_minus ≤ a_plus`.
    Real {
        /// Smaller root `A₋`.
        a_minus: f64,
        /// Larger root `A₊`.
        a_plus: f64,
        /// Discriminant `q1² − q2·q0 ≥ 0`.
        discriminant: f64,
    },
    /// Degenerate quadratic (`q2 = 0`): the equation for `A` is affine.
    AffineFallback {
        /// The single root `q0/(2q1)` of `−2q1·A + q0` when `q1 ≠ 0`
        /// (infinite/absent otherwise, reported as NaN).
        root: f64,
    },
    /// Complex roots: the nirvana regime.
    Complex {
        /// Discriminant `q1² − q2·q0 < 0`.
        discriminant: f64,
    },
}

/// Roots of a raw [`RiccatiSpec`].
pub fn riccati_roots(spec: &RiccatiSpec) -> RiccatiRoots {
    if spec.q2 == 0.0 {
        let root = if spec.q1 != 0.0 {
            spec.q0 / (2.0 * spec.q1)
        } else {
            f64::NAN
        };
        return RiccatiRoots::AffineFallback { root };
    }
    let disc = spec.discriminant();
    if disc < 0.0 {
        return RiccatiRoots::Complex { discriminant: disc };
    }
    // Stable quadratic roots: form the larger-magnitude root by addition
    // (no cancellation), recover the other from the product
    // `A₊·A₋ = q0/q2` so that a tiny q0 yields a tiny root instead of a
    // catastrophically cancelled zero.
    let sq = disc.sqrt();
    let big = if spec.q1 >= 0.0 {
        (spec.q1 + sq) / spec.q2
    } else {
        (spec.q1 - sq) / spec.q2
    };
    let small = if big == 0.0 {
        0.0
    } else {
        spec.q0 / (spec.q2 * big)
    };
    RiccatiRoots::Real {
        a_minus: big.min(small),
        a_plus: big.max(small),
        discriminant: disc,
    }
}

/// Roots of the *full-information linear* Riccati equation for `model`.
pub fn linear_riccati_roots(model: &LinearOuModel, gamma: f64) -> Result<RiccatiRoots> {
    Ok(riccati_roots(&RiccatiSpec::linear_full(model, gamma)?))
}

/// How the closed-form evaluators are realized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    /// `q0 = 0`: `A ≡ 0, H ≡ 0` (zero is an equilibrium of the flow).
    Flat,
    /// `q2 = 0`: affine ODE, `A(τ) = q0(1−e^{−2q1τ})/(2q1)`.
    Affine,
    /// Two distinct real roots with `A₊ > 0`.
    TwoRoots,
}

/// Closed-form value-function coefficients `A(t)`, `H(t)` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormAH {
    /// Which model/information instance this solves.
    pub kind: AhKind,
    /// The unified coefficients.
    pub spec: RiccatiSpec,
    /// Larger characteristic root (NaN for the affine fallback).
    pub a_plus: f64,
    /// Smaller characteristic root (NaN for the affine fallback).
    pub a_minus: f64,
    /// Root gap `D = 2√(q1² − q2q0)` (NaN for the affine fallback).
    pub d: f64,
    /// Horizon `T`.
    pub t_end: f64,
    /// Always true for a constructed value: unstable regimes error out.
    pub stable: bool,
    form: Form,
}

impl ClosedFormAH {
    /// Evaluates `A(t)`.
    pub fn a_at(&self, t: f64) -> f64 {
        let tau = self.t_end - t;
        match self.form {
            Form::Flat => 0.0,
            Form::Affine => {
                let RiccatiSpec { q1, q0, .. } = self.spec;
                if q1 == 0.0 {
                    q0 * tau
                } else {
                    q0 * (1.0 - (-2.0 * q1 * tau).exp()) / (2.0 * q1)
                }
            }
            Form::TwoRoots => {
                let e = (-self.d * tau).exp();
                self.a_minus * (1.0 - e) / (1.0 - (self.a_minus / self.a_plus) * e)
            }
        }
    }

    /// Evaluates `H(t)`.
    pub fn h_at(&self, t: f64) -> f64 {
        let tau = self.t_end - t;
        let k_h = self.spec.k_h;
        match self.form {
            Form::Flat => 0.0,
            Form::Affine => {
                let RiccatiSpec { q1, q0, .. } = self.spec;
                if q1 == 0.0 {
                    0.5 * k_h * q0 * tau * tau
                } else {
                    k_h * q0 / (2.0 * q1) * (tau - (1.0 - (-2.0 * q1 * tau).exp()) / (2.0 * q1))
                }
            }
            Form::TwoRoots => {
                let e = (-self.d * tau).exp();
                let log_term =
                    ((self.a_plus - self.a_minus * e) / (self.a_plus - self.a_minus)).ln();
                k_h * self.a_minus * (tau - log_term / (self.spec.q2 * self.a_minus))
            }
        }
    }
}

/// Builds the closed-form `A`, `H` pair for the requested instance.
///
/// # Errors
///
/// * complex roots → condition error (nirvana regime; consult
///   [`nirvana_blowup_time`]);
/// * real roots with `A₊ ≤ 0` → condition error (the solution still blows
///   up, at `τ = ln(A₋/A₊)/D`);
/// * a double root → condition error (the closed form divides by
///   `A₊ − A₋`; use [`integrate_riccati_rk4`]);
/// * model/kind mismatch → invalid parameter.
pub fn make_ah(kind: AhKind, model: &ScalarModel, gamma: f64, t_end: f64) -> Result<ClosedFormAH> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {t_end}"
        )));
    }
    let spec = match (kind, model) {
        (AhKind::LinearFull, ScalarModel::Linear(m)) => RiccatiSpec::linear_full(m, gamma)?,
        (AhKind::LinearPartial, ScalarModel::Linear(m)) => RiccatiSpec::linear_partial(m, gamma)?,
        (AhKind::CirFull, ScalarModel::Cir(m)) => RiccatiSpec::cir_full(m, gamma)?,
        _ => {
            return Err(Error::invalid(format!(
                "kind {kind:?} does not match the supplied model variant"
            )))
        }
    };
    make_ah_from_spec(kind, spec, t_end)
}

/// [`make_ah`] starting from explicit coefficients.
pub fn make_ah_from_spec(kind: AhKind, spec: RiccatiSpec, t_end: f64) -> Result<ClosedFormAH> {
    if spec.q0 == 0.0 {
        // A(T) = 0 sits on the equilibrium A ≡ 0.
        let (a_minus, a_plus, d) = if spec.q2 != 0.0 {
            let other = 2.0 * spec.q1 / spec.q2;
            (other.min(0.0), other.max(0.0), 2.0 * spec.q1.abs())
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        return Ok(ClosedFormAH {
            kind,
            spec,
            a_plus,
            a_minus,
            d,
            t_end,
            stable: true,
            form: Form::Flat,
        });
    }
    match riccati_roots(&spec) {
        RiccatiRoots::AffineFallback { .. } => Ok(ClosedFormAH {
            kind,
            spec,
            a_plus: f64::NAN,
            a_minus: f64::NAN,
            d: f64::NAN,
            t_end,
            stable: true,
            form: Form::Affine,
        }),
        RiccatiRoots::Complex { discriminant } => Err(Error::condition(format!(
            "Riccati roots are complex (discriminant {discriminant:.6e}): the value function \
             blows up in finite time; use nirvana_blowup_time for the blow-up instant"
        ))),
        RiccatiRoots::Real {
            a_minus,
            a_plus,
            discriminant,
        } => {
            if discriminant == 0.0 {
                return Err(Error::condition(
                    "double Riccati root: the closed form divides by A₊ − A₋; \
                     use integrate_riccati_rk4 instead",
                ));
            }
            if a_minus == 0.0 {
                // q0 ≠ 0 but q0/(q2·A₊) underflowed: the solution is flat
                // to machine precision.
                return Ok(ClosedFormAH {
                    kind,
                    spec,
                    a_plus,
                    a_minus,
                    d: 2.0 * discriminant.sqrt(),
                    t_end,
                    stable: true,
                    form: Form::Flat,
                });
            }
            if a_plus <= 0.0 {
                let d = 2.0 * discriminant.sqrt();
                let tau_sing = (a_minus / a_plus).ln() / d;
                return Err(Error::condition(format!(
                    "both Riccati roots are negative: A(t) blows up at τ = {tau_sing:.6e} \
                     before the horizon; use nirvana_blowup_time / integrate_riccati_rk4"
                )));
            }
            let d = 2.0 * discriminant.sqrt();
            Ok(ClosedFormAH {
                kind,
                spec,
                a_plus,
                a_minus,
                d,
                t_end,
                stable: true,
                form: Form::TwoRoots,
            })
        }
    }
}

/// RK4 samples of `A(τ)`, `H(τ)` in backward time `τ = T − t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiNumeric {
    /// Backward times, ascending from 0; `tau[k] = k·(T/n_steps)` until the
    /// horizon or a blow-up truncates the arrays.
    pub tau: Vec<f64>,
    /// `A(τ_k)`.
    pub a: Vec<f64>,
    /// `H(τ_k)`.
    pub h: Vec<f64>,
    /// Horizon `T` (so `t = T − τ`).
    pub t_end: f64,
    /// Backward time at which `|A|` crossed the divergence threshold, if
    /// it did.
    pub blow_up_tau: Option<f64>,
}

impl RiccatiNumeric {
    /// Blow-up instant in forward time, `t* = T − τ*`, if one was detected.
    pub fn blow_up_time(&self) -> Option<f64> {
        self.blow_up_tau.map(|tau| self.t_end - tau)
    }
}

/// Divergence threshold for the RK4 integration.
const BLOW_UP_THRESHOLD: f64 = 1e8;

/// Classical RK4 integration of the Riccati pair backward from
/// `A(T) = H(T) = 0`.
///
/// Divergence does not error: the arrays are truncated at the last finite
/// sample and the blow-up grid time is reported on the result.
pub fn integrate_riccati_rk4(
    spec: &RiccatiSpec,
    t_end: f64,
    n_steps: usize,
) -> Result<RiccatiNumeric> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {t_end}"
        )));
    }
    if n_steps < 10 {
        return Err(Error::invalid(format!(
            "riccati RK4 requires n_steps ≥ 10, got {n_steps}"
        )));
    }
    let dt = t_end / n_steps as f64;
    let mut tau = Vec::with_capacity(n_steps + 1);
    let mut a = Vec::with_capacity(n_steps + 1);
    let mut h = Vec::with_capacity(n_steps + 1);
    tau.push(0.0);
    a.push(0.0);
    h.push(0.0);
    let mut blow_up_tau = None;
    let mut ak = 0.0f64;
    let mut hk = 0.0f64;
    for k in 0..n_steps {
        // dA/dτ = q2A² − 2q1A + q0 ; dH/dτ = k_H·A.
        let f = |x: f64| spec.a_rhs_backward(x);
        let k1 = f(ak);
        let k2 = f(ak + 0.5 * dt * k1);
        let k3 = f(ak + 0.5 * dt * k2);
        let k4 = f(ak + dt * k3);
        let a_next = ak + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let h_next = hk
            + dt / 6.0
                * spec.k_h
                * (ak + 2.0 * (ak + 0.5 * dt * k1) + 2.0 * (ak + 0.5 * dt * k2) + (ak + dt * k3));
        let tau_next = dt * (k + 1) as f64;
        if !a_next.is_finite() || a_next.abs() > BLOW_UP_THRESHOLD {
            blow_up_tau = Some(tau_next);
            break;
        }
        ak = a_next;
        hk = h_next;
        tau.push(tau_next);
        a.push(ak);
        h.push(hk);
    }
    Ok(RiccatiNumeric {
        tau,
        a,
        h,
        t_end,
        blow_up_tau,
    })
}

/// Stability expression for the linear model under full information:
/// `κ² − ((1−γ)a/(γσ))(2κρ + a/σ)`.  Algebraically identical to the
/// discriminant of [`RiccatiSpec::linear_full`].
pub fn stability_margin_full(model: &LinearOuModel, gamma: f64) -> Result<f64> {
    validate_gamma(gamma)?;
    let LinearOuModel {
        kappa,
        a,
        rho,
        sigma,
        ..
    } = *model;
    let nu = (1.0 - gamma) / gamma;
    Ok(kappa * kappa - nu * a / sigma * (2.0 * kappa * rho + a / sigma))
}

/// `true` iff the full-information Riccati roots are real (no nirvana).
pub fn stability_full(model: &LinearOuModel, gamma: f64) -> Result<bool> {
    Ok(stability_margin_full(model, gamma)? >= 0.0)
}

/// Stability expression under partial information:
/// `κ² − ((1−γ)ā/(γσ))(2κ + ā/σ)` with `ā` from the steady-state filter.
///
/// Because `ā(ā + 2κσ) = a(a + 2κρσ)` identically (both equal the
/// steady-state quadratic's cross term), this expression coincides with
/// [`stability_margin_full`] — the paper's remark that only the
/// fully-informed investor can reach nirvana refers to regimes this
/// identity makes unreachable; the two margins never disagree.
pub fn stability_margin_partial(model: &LinearOuModel, gamma: f64) -> Result<f64> {
    validate_gamma(gamma)?;
    let ab = abar(model);
    let nu = (1.0 - gamma) / gamma;
    Ok(model.kappa * model.kappa - nu * ab / model.sigma * (2.0 * model.kappa + ab / model.sigma))
}

/// `true` iff the partial-information Riccati roots are real.
pub fn stability_partial(model: &LinearOuModel, gamma: f64) -> Result<bool> {
    Ok(stability_margin_partial(model, gamma)? >= 0.0)
}

/// Blow-up (nirvana) instant of the full-information linear value
/// function, as a forward time in `[0, T)`, or `None` when the blow-up
/// lies beyond the horizon.
///
/// # Errors
///
/// Calling this in a stable regime (real roots with `A₊ > 0`, or a double
/// root, for which no finite-time blow-up exists) is a contract error.
pub fn nirvana_blowup_time(model: &LinearOuModel, gamma: f64, t_end: f64) -> Result<Option<f64>> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {t_end}"
        )));
    }
    let spec = RiccatiSpec::linear_full(model, gamma)?;
    match riccati_roots(&spec) {
        RiccatiRoots::AffineFallback { .. } => Err(Error::invalid(
            "nirvana_blowup_time called in a stable regime (affine fallback has no blow-up)",
        )),
        RiccatiRoots::Real {
            a_minus,
            a_plus,
            discriminant,
        } => {
            if a_plus > 0.0 || discriminant == 0.0 {
                return Err(Error::invalid(
                    "nirvana_blowup_time called in a stable regime (real roots, A₊ > 0)",
                ));
            }
            // Both roots negative: the closed-form denominator
            // 1 − (A₋/A₊)e^{−Dτ} vanishes at τ* = ln(A₋/A₊)/D.
            let d = 2.0 * discriminant.sqrt();
            let tau_star = (a_minus / a_plus).ln() / d;
            Ok(if tau_star <= t_end {
                Some(t_end - tau_star)
            } else {
                None
            })
        }
        RiccatiRoots::Complex { discriminant } => {
            let xi = (-discriminant).sqrt();
            // Linearized solution in backward time with u(0)=1, u'(0)=0:
            // u(τ) ∝ cos(Ξτ) + (q1/Ξ)sin(Ξτ); first zero lies in (0, π/Ξ).
            let v = |tau: f64| (xi * tau).cos() + (spec.q1 / xi) * (xi * tau).sin();
            let period = std::f64::consts::PI / xi;
            let mut lo = 0.0;
            let mut hi = period;
            let scan = 64;
            for i in 1..=scan {
                let t = period * i as f64 / scan as f64;
                if v(t) <= 0.0 {
                    hi = t;
                    lo = period * (i - 1) as f64 / scan as f64;
                    break;
                }
            }
            // Bisect to 1e-12 of the period.
            while hi - lo > 1e-12 * period {
                let mid = 0.5 * (lo + hi);
                if v(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau_star = 0.5 * (lo + hi);
            Ok(if tau_star <= t_end {
                Some(t_end - tau_star)
            } else {
                None
            })
        }
    }
}

/// Evaluates the value-function coefficient
/// `G(t, y) = exp(A(t)·y² + H(t))` (linear kinds) or
/// `exp(A(t)·y + H(t))` (CIR).  For the partial-information kind, `y` is
/// the conditional mean `Ŷ(t)`.
pub fn g_eval(ah: &ClosedFormAH, t: f64, y: f64) -> f64 {
    let a = ah.a_at(t);
    let h = ah.h_at(t);
    match ah.kind {
        AhKind::LinearFull | AhKind::LinearPartial => (a * y * y + h).exp(),
        AhKind::CirFull => (a * y + h).exp(),
    }
}
