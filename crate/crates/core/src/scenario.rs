//! Scenario files: schema, built-in library, dotted overrides and problem assembly.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decayfit::{DecayOptions, RtDecay, UtOptions, Window};
use crate::error::{Error, Result};
use crate::evolve::{EnergyRegime, MonitorOptions, Phi1Variant};
use crate::expr::Expr;
use crate::fracops::{default_grading, TimeGrid};
use crate::model::{
    manufactured_perturbation, Growth, Nonlinearity, Perturbation, Problem, Source, Summability,
};
use crate::space::{norm_l2_sq, BoundaryCondition, EllipticOp, Field, Grid1D};
use crate::steady::{solve_steady, SteadyOptions, SteadySolution};

/// A number or an arithmetic expression in `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrExpr {
    Num(f64),
    Expr(String),
}

impl NumOrExpr {
    pub fn field(&self, grid: &Grid1D, key: &str) -> Result<Field> {
        match self {
            NumOrExpr::Num(v) => Ok(Field::constant(grid, *v)),
            NumOrExpr::Expr(text) => {
                let e = Expr::parse(text, "x").map_err(|err| config_err(key, err))?;
                let f = Field::from_fn(grid, |x| e.eval(x));
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config {
                        path: key.into(),
                        message: format!("`{text}` is not finite on the grid"),
                    });
                }
                Ok(f)
            }
        }
    }

    /// Evaluates a scalar expression in the single variable `var`.
    pub fn scalar(&self, var: &str, value: f64, key: &str) -> Result<f64> {
        match self {
            NumOrExpr::Num(v) => Ok(*v),
            NumOrExpr::Expr(text) => {
                let e = Expr::parse(text, var).map_err(|err| config_err(key, err))?;
                let v = e.eval(value);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Config {
                        path: key.into(),
                        message: format!("`{text}` is not finite at {var} = {value}"),
                    })
                }
            }
        }
    }
}

fn config_err(path: &str, err: Error) -> Error {
    Error::Config {
        path: path.into(),
        message: err.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub a: f64,
    pub b: f64,
    pub nx: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshConfig {
    Uniform,
    Graded,
    /// Graded on [0, t_switch], then uniform.
    GradedUniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub nt: usize,
    #[serde(default = "default_mesh")]
    pub mesh: MeshConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_switch: Option<f64>,
    /// Steps on the graded part of a graded_uniform mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_graded: Option<usize>,
}

fn default_mesh() -> MeshConfig {
    MeshConfig::Graded
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcConfig {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(rename = "D")]
    pub diffusion: NumOrExpr,
    pub d: NumOrExpr,
    pub bc: BcConfig,
    /// Boundary data (values for Dirichlet, fluxes for Neumann).
    pub a_inf: [f64; 2],
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            diffusion: NumOrExpr::Num(1.0),
            d: NumOrExpr::Num(0.0),
            bc: BcConfig::Dirichlet,
            a_inf: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientConfig {
    pub p: NumOrExpr,
    pub q: NumOrExpr,
    pub r_exp: f64,
    pub s_exp: f64,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        let s = Summability::default();
        Self {
            p: NumOrExpr::Num(0.0),
            q: NumOrExpr::Num(0.0),
            r_exp: s.r_exp,
            s_exp: s.s_exp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub c2: f64,
    #[serde(rename = "C2")]
    pub cap_c2: f64,
    pub kappa2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// Built-in name or `custom`.
    pub name: String,
    /// f as an expression in `u` when `name = "custom"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthConfig>,
    /// Rewrite f so that f(0) = f'(0) = 0, absorbing the linear part into q and r.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            name: "zero".into(),
            expr: None,
            growth: None,
            normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    None,
    /// amplitude (1+t)^(-exponent) ĝ with ĝ the L²-normalized profile;
    /// `exponent` may be an expression in `alpha`.
    Power {
        amplitude: f64,
        exponent: NumOrExpr,
        profile: NumOrExpr,
    },
    /// amplitude e^(-rate t) ĝ.
    Exponential {
        amplitude: f64,
        rate: f64,
        profile: NumOrExpr,
    },
    /// Source chosen so that u(t) = u∞ + amplitude e^(-rate t) profile exactly.
    Controlled {
        amplitude: f64,
        rate: f64,
        profile: NumOrExpr,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default = "zero_expr")]
    pub r_inf: NumOrExpr,
    /// Prescribed steady state; when set, r∞ is computed from it and `r_inf` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_target: Option<NumOrExpr>,
    #[serde(default = "no_perturbation")]
    pub perturbation: PerturbationConfig,
}

fn zero_expr() -> NumOrExpr {
    NumOrExpr::Num(0.0)
}

fn no_perturbation() -> PerturbationConfig {
    PerturbationConfig::None
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            r_inf: zero_expr(),
            steady_target: None,
            perturbation: PerturbationConfig::None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    /// u0 = u∞ + radius · profile.
    SteadyPlus,
    /// u0 = profile.
    Profile,
    /// u0 = u∞ + radius · (seeded random sine polynomial with unit L² norm).
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub mode: InitialMode,
    pub profile: NumOrExpr,
    pub radius: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            mode: InitialMode::SteadyPlus,
            profile: NumOrExpr::Num(0.0),
            radius: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    /// Decay of u - u∞ (V1–V4).
    Decay,
    /// Decay of u_t.
    Ut,
    /// Smallness probe over `verify.radii`.
    Smallness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowConfig {
    All,
    LastDecade,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub slope: f64,
    pub tauber: f64,
    pub ut_slope: f64,
    pub floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = DecayOptions::default();
        Self {
            slope: d.slope_tol,
            tauber: d.tauber_tol,
            ut_slope: UtOptions::default().slope_tol,
            floor: d.floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RtConfig {
    Zero,
    Power { beta: f64 },
    Exponential { rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub theorems: Vec<TheoremId>,
    /// Energy estimate tracked by the monitor: lo (s=0), hi (s=1) or between.
    pub regime: String,
    pub window: WindowConfig,
    pub tight: bool,
    pub tolerances: Tolerances,
    pub radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rt: Option<RtConfig>,
    /// Builds Φ¹∞ on Φ⁰∼ instead of Φ¹∼.
    pub literal_phi1: bool,
    pub embedding_random: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            theorems: vec![TheoremId::Decay],
            regime: "lo".into(),
            window: WindowConfig::LastDecade,
            tight: false,
            tolerances: Tolerances::default(),
            radii: vec![0.0, 0.1, 0.5, 1.0, 2.0],
            t0: None,
            rt: None,
            literal_phi1: false,
            embedding_random: MonitorOptions::default().embedding_random,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
}

macro_rules! builtin_table {
    ($($name:literal => $file:literal),* $(,)?) => {
        /// Names of the built-in scenarios.
        pub const BUILTIN_NAMES: &[&str] = &[$($name),*];

        /// TOML text of a built-in scenario.
        pub fn builtin_text(name: &str) -> Option<&'static str> {
            match name {
                $($name => Some(include_str!(concat!("../scenarios/", $file))),)*
                _ => None,
            }
        }
    };
}

builtin_table! {
    "allen-cahn-1d" => "allen-cahn-1d.toml",
    "linear-heat" => "linear-heat.toml",
    "linear-fractional" => "linear-fractional.toml",
    "forced-fractional" => "forced-fractional.toml",
    "no-smallness" => "no-smallness.toml",
    "source-controlled" => "source-controlled.toml",
}

/// Parses `value` of a `--set key=value` override as TOML, falling back to a plain string.
fn parse_override_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Applies `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| Error::Config {
        path: assignment.into(),
        message: "override must have the form key=value".into(),
    })?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config {
            path: key.into(),
            message: "empty path segment".into(),
        });
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config {
            path: key.into(),
            message: format!("`{p}` is not a table"),
        })?;
    }
    cur.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(value.trim()),
    );
    Ok(())
}

impl ScenarioConfig {
    /// Parses TOML text, applies dotted overrides and validates the schema.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config {
            path: "<document>".into(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| Error::Config {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn builtin(name: &str, overrides: &[String]) -> Result<Self> {
        let text = builtin_text(name).ok_or_else(|| Error::Config {
            path: "scenario".into(),
            message: format!(
                "unknown built-in scenario `{name}` (available: {})",
                BUILTIN_NAMES.join(", ")
            ),
        })?;
        Self::from_toml(text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            path: "<document>".into(),
            message: e.to_string(),
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: path.into(),
                message,
            })
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("must lie in (0, 1], got {}", self.alpha));
        }
        if self.domain.nx < 5 {
            return bad(
                "domain.nx",
                format!("need at least 5 nodes, got {}", self.domain.nx),
            );
        }
        if !(self.domain.b > self.domain.a) {
            return bad("domain.b", "must exceed domain.a".into());
        }
        if self.time.nt == 0 || !(self.time.t_end > 0.0) {
            return bad("time", "need T > 0 and nt >= 1".into());
        }
        if EnergyRegime::parse(&self.verify.regime).is_none() {
            return bad(
                "verify.regime",
                format!("expected lo, hi or between, got `{}`", self.verify.regime),
            );
        }
        if self.nonlinearity.name == "custom" && self.nonlinearity.expr.is_none() {
            return bad(
                "nonlinearity.expr",
                "required when name = \"custom\"".into(),
            );
        }
        if let Some(a) = self
            .sweep
            .alphas
            .iter()
            .find(|a| !(**a > 0.0 && **a <= 1.0))
        {
            return bad("sweep.alphas", format!("alpha {a} outside (0, 1]"));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let t = &self.time;
        let gamma = t.gamma.unwrap_or_else(|| default_grading(self.alpha));
        let g = match t.mesh {
            MeshConfig::Uniform => TimeGrid::uniform(t.t_end, t.nt),
            MeshConfig::Graded => TimeGrid::graded(t.t_end, t.nt, gamma),
            MeshConfig::GradedUniform => {
                let ts = t.t_switch.unwrap_or(1.0_f64.min(t.t_end / 2.0));
                let ng = t.n_graded.unwrap_or(t.nt / 4).clamp(1, t.nt.max(2) - 1);
                TimeGrid::graded_then_uniform(t.t_end, ng, ts, t.nt - ng, gamma)
            }
        };
        g.map_err(|e| config_err("time", e))
    }

    pub fn monitor_options(&self) -> MonitorOptions {
        MonitorOptions {
            regime: EnergyRegime::parse(&self.verify.regime).unwrap_or(EnergyRegime::Lo),
            phi1: if self.verify.literal_phi1 {
                Phi1Variant::Literal
            } else {
                Phi1Variant::Consistent
            },
            embedding_random: self.verify.embedding_random,
            seed: self.seed,
            ..Default::default()
        }
    }

    fn window(&self) -> Window {
        match self.verify.window {
            WindowConfig::All => Window::All,
            WindowConfig::LastDecade => Window::default(),
        }
    }

    pub fn decay_options(&self) -> DecayOptions {
        DecayOptions {
            window: self.window(),
            floor: self.verify.tolerances.floor,
            slope_tol: self.verify.tolerances.slope,
            tauber_tol: self.verify.tolerances.tauber,
            tight: self.verify.tight,
        }
    }

    /// Declared r_t class; inferred from the source perturbation when not given.
    pub fn ut_options(&self) -> UtOptions {
        let rt = match &self.verify.rt {
            Some(RtConfig::Zero) => RtDecay::Zero,
            Some(RtConfig::Power { beta }) => RtDecay::Power { beta: *beta },
            Some(RtConfig::Exponential { rate }) => RtDecay::Exponential { rate: *rate },
            None => match &self.source.perturbation {
                PerturbationConfig::None => RtDecay::Zero,
                // r_t ~ (1+t)^(-exponent-1)
                PerturbationConfig::Power { exponent, .. } => RtDecay::Power {
                    beta: 2.0 * (exponent.scalar("alpha", self.alpha, "").unwrap_or(0.0) + 1.0),
                },
                PerturbationConfig::Exponential { rate, .. } => {
                    RtDecay::Exponential { rate: 2.0 * rate }
                }
                PerturbationConfig::Controlled { rate, .. } => {
                    if self.alpha >= 1.0 {
                        RtDecay::Exponential { rate: 2.0 * rate }
                    } else {
                        // ∂^α of e^(-rate t) decays like t^(-α-1) after differentiation
                        RtDecay::Power {
                            beta: 2.0 * (self.alpha + 1.0),
                        }
                    }
                }
            },
        };
        UtOptions {
            t0: self.verify.t0,
            rt,
            window: self.window(),
            floor: self.verify.tolerances.floor,
            slope_tol: self.verify.tolerances.ut_slope,
            ..Default::default()
        }
    }
}

/// Assembled problem together with its steady state.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub problem: Problem,
    pub steady: SteadySolution,
}

impl Scenario {
    pub fn u_inf(&self) -> &Field {
        &self.steady.u_inf
    }
}

/// Seeded random sine polynomial Σ_k c_k sin(kπ(x-a)/L), k ≤ 6, with unit L² norm.
pub fn random_profile(grid: &Grid1D, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefs: Vec<f64> = (1..=6)
        .map(|k| rng.random_range(-1.0..1.0) / k as f64)
        .collect();
    let (a, l) = (grid.a(), grid.length());
    let f = Field::from_fn(grid, |x| {
        coefs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * (x - a) / l).sin())
            .sum()
    });
    let n = norm_l2_sq(grid, &f).sqrt();
    Field(f.iter().map(|v| v / n).collect())
}

/// Builds the problem of `cfg` and solves for its steady state.
pub fn build(cfg: &ScenarioConfig) -> Result<Scenario> {
    let grid = Grid1D::new(cfg.domain.a, cfg.domain.b, cfg.domain.nx)
        .map_err(|e| config_err("domain", e))?;
    let dcoef = cfg.operator.diffusion.field(&grid, "operator.D")?;
    let rcoef = cfg.operator.d.field(&grid, "operator.d")?;
    let [l, r] = cfg.operator.a_inf;
    let bc = match cfg.operator.bc {
        BcConfig::Dirichlet => BoundaryCondition::dirichlet(l, r),
        BcConfig::Neumann => BoundaryCondition::neumann(l, r),
    };
    let op = EllipticOp::new(dcoef, rcoef, bc)?;
    let p = cfg.coefficients.p.field(&grid, "coefficients.p")?;
    let q = cfg.coefficients.q.field(&grid, "coefficients.q")?;
    let mut nl = match cfg.nonlinearity.name.as_str() {
        "custom" => Nonlinearity::expression(cfg.nonlinearity.expr.as_deref().unwrap_or(""))
            .map_err(|e| config_err("nonlinearity.expr", e))?,
        name => Nonlinearity::builtin(name).map_err(|e| config_err("nonlinearity.name", e))?,
    };
    if let Some(g) = &cfg.nonlinearity.growth {
        let growth = Growth::new(g.c2, g.cap_c2, g.kappa2)
            .map_err(|e| config_err("nonlinearity.growth", e))?;
        nl = nl.with_growth(growth);
    }
    let tgrid = cfg.time_grid()?;
    let summability = Summability {
        r_exp: cfg.coefficients.r_exp,
        s_exp: cfg.coefficients.s_exp,
    };
    let mut problem = Problem::new(
        grid,
        op,
        cfg.alpha,
        p,
        q,
        nl,
        Source::steady(Field::zeros(&grid)),
        Field::zeros(&grid),
        tgrid,
        summability,
    )?;
    problem.source.r_inf = match &cfg.source.steady_target {
        Some(target) => {
            let phi = target.field(&grid, "source.steady_target")?;
            steady_source(&problem, &phi)
        }
        None => cfg.source.r_inf.field(&grid, "source.r_inf")?,
    };
    if cfg.nonlinearity.normalize {
        problem = problem.normalized();
    }
    let unit = |profile: &NumOrExpr, key: &str| -> Result<Field> {
        Source::unit_profile(&grid, profile.field(&grid, key)?).map_err(|e| config_err(key, e))
    };
    problem.source.perturbation = match &cfg.source.perturbation {
        PerturbationConfig::None | PerturbationConfig::Controlled { .. } => Perturbation::None,
        PerturbationConfig::Power {
            amplitude,
            exponent,
            profile,
        } => Perturbation::Power {
            amplitude: *amplitude,
            exponent: exponent.scalar("alpha", cfg.alpha, "source.perturbation.exponent")?,
            profile: unit(profile, "source.perturbation.profile")?,
        },
        PerturbationConfig::Exponential {
            amplitude,
            rate,
            profile,
        } => Perturbation::Exponential {
            amplitude: *amplitude,
            rate: *rate,
            profile: unit(profile, "source.perturbation.profile")?,
        },
    };
    let steady = solve_steady(&problem, &SteadyOptions::default())?;
    let u_inf = steady.u_inf.clone();
    let shifted = |dir: &Field, radius: f64| {
        Field(
            u_inf
                .iter()
                .zip(dir.iter())
                .map(|(a, g)| a + radius * g)
                .collect(),
        )
    };
    problem.u0 = match cfg.initial.mode {
        InitialMode::SteadyPlus => {
            let g = cfg.initial.profile.field(&grid, "initial.profile")?;
            shifted(&g, cfg.initial.radius)
        }
        InitialMode::Profile => cfg.initial.profile.field(&grid, "initial.profile")?,
        InitialMode::Random => shifted(&random_profile(&grid, cfg.seed), cfg.initial.radius),
    };
    if let PerturbationConfig::Controlled {
        amplitude,
        rate,
        profile,
    } = &cfg.source.perturbation
    {
        let g = profile.field(&grid, "source.perturbation.profile")?;
        let targets: Vec<Field> = problem
            .tgrid
            .nodes()
            .iter()
            .map(|t| shifted(&g, amplitude * (-rate * t).exp()))
            .collect();
        problem.source.perturbation =
            Perturbation::Table(match manufactured_perturbation(&problem, &targets)? {
                Perturbation::Table(rows) => rows,
                _ => Arc::new(vec![]),
            });
        problem.u0 = targets[0].clone();
    }
    problem.validate()?;
    Ok(Scenario {
        config: cfg.clone(),
        problem,
        steady,
    })
}

/// r∞ = 𝕃_h φ - q φ + p f(φ), so that φ is the steady state.
fn steady_source(problem: &Problem, phi: &Field) -> Field {
    let mut r = problem.op.apply(&problem.grid, phi);
    for (i, ri) in r.iter_mut().enumerate() {
        *ri += -problem.q[i] * phi[i] + problem.p[i] * problem.nl.f(phi[i]);
    }
    if problem.op.bc().is_dirichlet() {
        let n = r.len();
        r[0] = 0.0;
        r[n - 1] = 0.0;
    }
    Field(r)
}
