//! Experiment configuration: a flat file of `key = value` lines.
//!
//! * `#` starts a comment (full-line or trailing); blank lines are ignored.
//! * Keys may appear at most once; unknown keys are rejected.  Every parse or
//!   validation error cites the offending line number.
//! * `model` is the only required key (`linear` or `cir`); every other key
//!   has a default taken from the benchmark parameter sets of the paper, so
//!   a one-line config reproduces the reference experiments.
//! * Defaults that the underlying study leaves unspecified (`y0`, `s0`,
//!   `x0`, `filter_prior`) are tagged `# assumed` in the config echo that
//!   accompanies every result set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hiddendrift::{CirModel, LinearOuModel, ScalarModel, TimeGrid};

use crate::CliError;

/// Every key the parser accepts, in the order used by [`ExperimentConfig::echo`].
pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "gamma",
    "T",
    "r",
    "mu",
    "kappa",
    "a",
    "rho",
    "sigma",
    "c",
    "ybar",
    "y0",
    "s0",
    "x0",
    "seed",
    "n_steps",
    "n_paths",
    "n_inner",
    "checkpoints",
    "filter_n",
    "filter_lo",
    "filter_hi",
    "filter_steady",
    "filter_prior",
    "out_dir",
];

/// Initial law handed to the filter before the first observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// All mass at `y0`.
    Point,
    /// Stationary law of the factor.
    Stationary,
    /// Gaussian with mean 0 and the steady-state Kalman variance
    /// (linear model only).
    Steady,
}

impl PriorKind {
    /// The config-file spelling of the variant.
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Point => "point",
            PriorKind::Stationary => "stationary",
            PriorKind::Steady => "steady",
        }
    }
}

/// A parsed, validated experiment configuration.
///
/// All model invariants (positivity, `|ρ| ≤ 1`, CIR `ρ = 0`, `γ ∉ {0, 1}`)
/// are enforced here, at load time, so the runners never see ill-posed
/// parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// The market model, already constructed and validated.
    pub model: ScalarModel,
    /// Relative risk aversion `γ > 0`, `γ ≠ 1`.
    pub gamma: f64,
    /// Horizon `T > 0`.
    pub t_end: f64,
    /// Initial factor value `Y(0)`.
    pub y0: f64,
    /// Initial asset price `S(0) > 0`.
    pub s0: f64,
    /// Initial wealth `x0 > 0`.
    pub x0: f64,
    /// Master seed for every random stream.
    pub seed: u64,
    /// Outer time steps over `[0, T]`.
    pub n_steps: usize,
    /// Path count for ensemble experiments.
    pub n_paths: usize,
    /// Inner branches per nested Monte Carlo estimate (≥ 2).
    pub n_inner: usize,
    /// Number of evenly spaced checkpoints for nested-MC columns (≥ 2,
    /// ≤ `n_steps + 1`; the first is `t = 0`, the last is `t = T`).
    pub checkpoints: usize,
    /// Grid-filter node count (≥ 3).
    pub filter_n: usize,
    /// Lower edge of the filter grid.
    pub filter_lo: f64,
    /// Upper edge of the filter grid.
    pub filter_hi: f64,
    /// Pin the Kalman variance at its steady state (linear model only).
    pub filter_steady: bool,
    /// Initial law of the filter.
    pub filter_prior: PriorKind,
    /// Directory that receives every output file.
    pub out_dir: PathBuf,
    /// Keys explicitly set by the user (file or command line), as opposed
    /// to defaulted.  Drives the `# assumed` markers in [`Self::echo`].
    set_keys: BTreeSet<String>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces `seed`.
    pub seed: Option<u64>,
    /// Replaces `out_dir`.
    pub out_dir: Option<PathBuf>,
    /// Replaces `n_inner`.
    pub n_inner: Option<usize>,
}

fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

/// `(value, line)` pairs keyed by config key.
type Entries = BTreeMap<String, (String, usize)>;

fn lex(text: &str) -> Result<Entries, CliError> {
    let mut entries = Entries::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let code = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let code = code.trim();
        if code.is_empty() {
            continue;
        }
        let Some((key, value)) = code.split_once('=') else {
            return Err(config_err(format!(
                "line {line_no}: expected `key = value`, got `{code}`"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(config_err(format!(
                "line {line_no}: missing key before `=`"
            )));
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(config_err(format!("line {line_no}: unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(config_err(format!(
                "line {line_no}: empty value for `{key}`"
            )));
        }
        if let Some((_, first)) = entries.get(key) {
            return Err(config_err(format!(
                "line {line_no}: duplicate key `{key}` (first set on line {first})"
            )));
        }
        entries.insert(key.to_string(), (value.to_string(), line_no));
    }
    Ok(entries)
}

fn take_parsed<T: std::str::FromStr>(
    entries: &Entries,
    key: &str,
    what: &str,
    default: T,
) -> Result<T, CliError> {
    match entries.get(key) {
        None => Ok(default),
        Some((value, line)) => value.parse::<T>().map_err(|_| {
            config_err(format!(
                "line {line}: invalid value for `{key}`: expected {what}, got `{value}`"
            ))
        }),
    }
}

fn take_f64(entries: &Entries, key: &str, default: f64) -> Result<f64, CliError> {
    let v = take_parsed::<f64>(entries, key, "a real number", default)?;
    if !v.is_finite() {
        return Err(fail_key(entries, key, format!("must be finite, got {v}")));
    }
    Ok(v)
}

fn take_usize(entries: &Entries, key: &str, default: usize) -> Result<usize, CliError> {
    take_parsed::<usize>(entries, key, "a non-negative integer", default)
}

fn take_u64(entries: &Entries, key: &str, default: u64) -> Result<u64, CliError> {
    take_parsed::<u64>(entries, key, "a non-negative integer", default)
}

fn take_bool(entries: &Entries, key: &str, default: bool) -> Result<bool, CliError> {
    take_parsed::<bool>(entries, key, "`true` or `false`", default)
}

/// Builds a validation error for `key`, citing its line when user-set.
fn fail_key(entries: &Entries, key: &str, msg: impl std::fmt::Display) -> CliError {
    match entries.get(key) {
        Some((_, line)) => config_err(format!("line {line}: `{key}` {msg}")),
        None => config_err(format!("`{key}` {msg}")),
    }
}

fn reject_inapplicable(entries: &Entries, key: &str, model: &str) -> Result<(), CliError> {
    if let Some((_, line)) = entries.get(key) {
        return Err(config_err(format!(
            "line {line}: key `{key}` does not apply to the {model} model"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads and parses the config file at `path`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            config_err(format!("cannot read config file `{}`: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Parses config text.  See the module docs for the format.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let entries = lex(text)?;

        let Some((model_value, model_line)) = entries.get("model") else {
            return Err(config_err(
                "missing required key `model` (required keys: model; all others default)",
            ));
        };
        let linear = match model_value.as_str() {
            "linear" => true,
            "cir" => false,
            other => {
                return Err(config_err(format!(
                    "line {model_line}: `model` must be `linear` or `cir`, got `{other}`"
                )))
            }
        };

        let gamma = take_f64(&entries, "gamma", 1.2)?;
        if gamma <= 0.0 {
            return Err(fail_key(
                &entries,
                "gamma",
                format!("must be positive, got {gamma}"),
            ));
        }
        if gamma == 1.0 {
            return Err(fail_key(
                &entries,
                "gamma",
                "= 1 (log utility) is outside the power-utility family handled here",
            ));
        }
        let t_end = take_f64(&entries, "T", 1.0)?;
        if t_end <= 0.0 {
            return Err(fail_key(
                &entries,
                "T",
                format!("must be positive, got {t_end}"),
            ));
        }

        let lib = |e: hiddendrift::Error| match e {
            hiddendrift::Error::InvalidParameter(msg) => config_err(msg),
            other => config_err(other.to_string()),
        };
        let r = take_f64(&entries, "r", 0.0)?;
        let kappa = take_f64(&entries, "kappa", 8.0)?;
        let sigma = take_f64(&entries, "sigma", 0.15)?;
        let model = if linear {
            reject_inapplicable(&entries, "c", "linear")?;
            reject_inapplicable(&entries, "ybar", "linear")?;
            let mu = take_f64(&entries, "mu", 0.0)?;
            let a = take_f64(&entries, "a", 0.3)?;
            let rho = take_f64(&entries, "rho", -0.8)?;
            ScalarModel::Linear(LinearOuModel::new(mu, kappa, a, rho, sigma, r).map_err(lib)?)
        } else {
            reject_inapplicable(&entries, "mu", "cir")?;
            let c = take_f64(&entries, "c", 0.25)?;
            let ybar = take_f64(&entries, "ybar", 0.05)?;
            let a = take_f64(&entries, "a", 0.4)?;
            let rho = take_f64(&entries, "rho", 0.0)?;
            let cir = CirModel::new(c, kappa, ybar, a, sigma, rho, r).map_err(lib)?;
            if !hiddendrift::model::check_feller(&cir) {
                return Err(fail_key(
                    &entries,
                    "a",
                    format!(
                        "violates the Feller condition a² ≤ 2κ·ybar ({} > {}), which the \
                         CIR closed forms require",
                        a * a,
                        2.0 * kappa * ybar
                    ),
                ));
            }
            ScalarModel::Cir(cir)
        };

        let y0 = take_f64(&entries, "y0", model.default_y0())?;
        if !linear && y0 < 0.0 {
            return Err(fail_key(
                &entries,
                "y0",
                format!("must be ≥ 0 for cir, got {y0}"),
            ));
        }
        let s0 = take_f64(&entries, "s0", 1.0)?;
        if s0 <= 0.0 {
            return Err(fail_key(
                &entries,
                "s0",
                format!("must be positive, got {s0}"),
            ));
        }
        let x0 = take_f64(&entries, "x0", 1.0)?;
        if x0 <= 0.0 {
            return Err(fail_key(
                &entries,
                "x0",
                format!("must be positive, got {x0}"),
            ));
        }

        let seed = take_u64(&entries, "seed", 1)?;
        let n_steps = take_usize(&entries, "n_steps", 1000)?;
        if n_steps == 0 {
            return Err(fail_key(&entries, "n_steps", "must be ≥ 1"));
        }
        let n_paths = take_usize(&entries, "n_paths", 1000)?;
        if n_paths == 0 {
            return Err(fail_key(&entries, "n_paths", "must be ≥ 1"));
        }
        let n_inner = take_usize(&entries, "n_inner", 10)?;
        if n_inner < 2 {
            return Err(fail_key(
                &entries,
                "n_inner",
                format!("must be ≥ 2, got {n_inner}"),
            ));
        }
        let checkpoints = take_usize(&entries, "checkpoints", 50)?;
        if checkpoints < 2 || checkpoints > n_steps + 1 {
            return Err(fail_key(
                &entries,
                "checkpoints",
                format!(
                    "must lie in [2, n_steps + 1] = [2, {}], got {checkpoints}",
                    n_steps + 1
                ),
            ));
        }

        let (default_lo, default_hi) = hiddendrift::filter::default_grid_bounds(&model);
        let filter_n = take_usize(&entries, "filter_n", 400)?;
        if filter_n < 3 {
            return Err(fail_key(
                &entries,
                "filter_n",
                format!("must be ≥ 3, got {filter_n}"),
            ));
        }
        let filter_lo = take_f64(&entries, "filter_lo", default_lo)?;
        let filter_hi = take_f64(&entries, "filter_hi", default_hi)?;
        if filter_lo >= filter_hi {
            return Err(fail_key(
                &entries,
                "filter_lo",
                format!("must be below filter_hi, got [{filter_lo}, {filter_hi}]"),
            ));
        }
        if !linear && filter_lo < 0.0 {
            return Err(fail_key(
                &entries,
                "filter_lo",
                format!("must be ≥ 0 for cir (the factor is non-negative), got {filter_lo}"),
            ));
        }
        let filter_steady = take_bool(&entries, "filter_steady", true)?;

        let default_prior = if linear {
            PriorKind::Steady
        } else {
            PriorKind::Point
        };
        let filter_prior = match entries.get("filter_prior") {
            None => default_prior,
            Some((value, line)) => match value.as_str() {
                "point" => PriorKind::Point,
                "stationary" => PriorKind::Stationary,
                "steady" => PriorKind::Steady,
                other => {
                    return Err(config_err(format!(
                        "line {line}: `filter_prior` must be `point`, `stationary`, or \
                         `steady`, got `{other}`"
                    )))
                }
            },
        };
        if !linear && filter_prior == PriorKind::Steady {
            return Err(fail_key(
                &entries,
                "filter_prior",
                "= steady applies to the linear model only",
            ));
        }

        let out_dir = match entries.get("out_dir") {
            None => PathBuf::from("out"),
            Some((value, _)) => PathBuf::from(value),
        };

        let set_keys = entries.keys().cloned().collect();
        Ok(ExperimentConfig {
            model,
            gamma,
            t_end,
            y0,
            s0,
            x0,
            seed,
            n_steps,
            n_paths,
            n_inner,
            checkpoints,
            filter_n,
            filter_lo,
            filter_hi,
            filter_steady,
            filter_prior,
            out_dir,
            set_keys,
        })
    }

    /// Applies command-line overrides; overridden keys count as user-set.
    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
            self.set_keys.insert("seed".into());
        }
        if let Some(ref out) = overrides.out_dir {
            self.out_dir = out.clone();
            self.set_keys.insert("out_dir".into());
        }
        if let Some(n_inner) = overrides.n_inner {
            if n_inner < 2 {
                return Err(config_err(format!("--n-inner must be ≥ 2, got {n_inner}")));
            }
            self.n_inner = n_inner;
            self.set_keys.insert("n_inner".into());
        }
        Ok(())
    }

    /// Whether the model is the linear one.
    pub fn is_linear(&self) -> bool {
        matches!(self.model, ScalarModel::Linear(_))
    }

    /// Typed access to the linear model; a config error otherwise.
    pub fn linear(&self) -> Result<&LinearOuModel, CliError> {
        match &self.model {
            ScalarModel::Linear(m) => Ok(m),
            ScalarModel::Cir(_) => Err(config_err("this subcommand requires `model = linear`")),
        }
    }

    /// Typed access to the CIR model; a config error otherwise.
    pub fn cir(&self) -> Result<&CirModel, CliError> {
        match &self.model {
            ScalarModel::Cir(m) => Ok(m),
            ScalarModel::Linear(_) => Err(config_err("this subcommand requires `model = cir`")),
        }
    }

    /// The CIR model with its observation volatility replaced by `sigma`.
    pub fn cir_with_sigma(&self, sigma: f64) -> Result<CirModel, CliError> {
        let base = self.cir()?;
        CirModel::new(
            base.c, base.kappa, base.ybar, base.a, sigma, base.rho, base.r,
        )
        .map_err(|e| match e {
            hiddendrift::Error::InvalidParameter(msg) => config_err(format!("--sigma: {msg}")),
            other => CliError::Lib(other),
        })
    }

    /// The outer time grid `[0, T]` with `n_steps` steps.
    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(0.0, self.t_end, self.n_steps).map_err(CliError::Lib)
    }

    /// Outer step indices of the `checkpoints` evenly spaced nested-MC
    /// checkpoints; the first is 0 and the last is `n_steps`.
    pub fn checkpoint_indices(&self) -> Vec<usize> {
        let n = self.n_steps as f64;
        let m = (self.checkpoints - 1) as f64;
        (0..self.checkpoints)
            .map(|i| (i as f64 * n / m).round() as usize)
            .collect()
    }

    /// Effective configuration as config-file text.  Defaults the study
    /// leaves unspecified carry a trailing `# assumed` comment, so the echo
    /// is itself a valid config reproducing this run.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let assumed: &[&str] = &["y0", "s0", "x0", "filter_prior"];
        let mut put = |key: &str, value: String| {
            let marker = if assumed.contains(&key) && !self.set_keys.contains(key) {
                " # assumed"
            } else {
                ""
            };
            let _ = writeln!(out, "{key} = {value}{marker}");
        };
        match &self.model {
            ScalarModel::Linear(m) => {
                put("model", "linear".into());
                put("gamma", self.gamma.to_string());
                put("T", self.t_end.to_string());
                put("r", m.r.to_string());
                put("mu", m.mu.to_string());
                put("kappa", m.kappa.to_string());
                put("a", m.a.to_string());
                put("rho", m.rho.to_string());
                put("sigma", m.sigma.to_string());
            }
            ScalarModel::Cir(m) => {
                put("model", "cir".into());
                put("gamma", self.gamma.to_string());
                put("T", self.t_end.to_string());
                put("r", m.r.to_string());
                put("kappa", m.kappa.to_string());
                put("a", m.a.to_string());
                put("rho", m.rho.to_string());
                put("sigma", m.sigma.to_string());
                put("c", m.c.to_string());
                put("ybar", m.ybar.to_string());
            }
        }
        put("y0", self.y0.to_string());
        put("s0", self.s0.to_string());
        put("x0", self.x0.to_string());
        put("seed", self.seed.to_string());
        put("n_steps", self.n_steps.to_string());
        put("n_paths", self.n_paths.to_string());
        put("n_inner", self.n_inner.to_string());
        put("checkpoints", self.checkpoints.to_string());
        put("filter_n", self.filter_n.to_string());
        put("filter_lo", self.filter_lo.to_string());
        put("filter_hi", self.filter_hi.to_string());
        put("filter_steady", self.filter_steady.to_string());
        put("filter_prior", self.filter_prior.as_str().to_string());
        put("out_dir", self.out_dir.display().to_string());
        out
    }
}
