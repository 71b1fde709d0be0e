//! Transient L1/Newton solver and the energy, barrier and bound monitors.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fracops::{
    caputo_series, l1_weights, rl_convolve, CaputoStepper, HistoryMode, TimeGrid,
};
use crate::model::{
    check_between_states, check_decay_r, check_pinfty, p_infty, source_differences, Growth,
    Nonlinearity, Problem, SourceNorm,
};
use crate::quad::gauss_legendre;
use crate::space::{
    assemble, elliptic_regularity_constant, embedding_constants_over, embedding_test_set,
    norm_h1_sq, norm_h2_sq, norm_hs, norm_l2_sq, norm_lq, BcKind, EmbeddingConstants, Field,
    Grid1D,
};
use crate::specialfn::gamma_fn;
use crate::steady::{newton_solve, NewtonOptions, NonlinearSystem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransientOptions {
    pub newton: NewtonOptions,
    pub history: HistoryMode,
    /// ‖u_n‖_∞ at or above this value aborts the run.
    pub blowup: f64,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            history: HistoryMode::Direct,
            blowup: 1e6,
        }
    }
}

/// Discrete trajectory u(t_n, ·), n = 0..=N.
#[derive(Clone, Debug)]
pub struct SolutionHistory {
    pub grid: Grid1D,
    pub tgrid: TimeGrid,
    pub alpha: f64,
    pub bc: BcKind,
    pub states: Vec<Field>,
    pub newton_iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl SolutionHistory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn t(&self, n: usize) -> f64 {
        self.tgrid.nodes()[n]
    }

    /// Times of the stored states.
    pub fn times(&self) -> &[f64] {
        &self.tgrid.nodes()[..self.states.len()]
    }

    /// u(t_n) - u∞.
    pub fn usim(&self, n: usize, u_inf: &[f64]) -> Field {
        self.states[n].sub(&Field(u_inf.to_vec()))
    }

    /// Time grid truncated to the stored states.
    pub fn stored_grid(&self) -> Result<TimeGrid> {
        if self.states.len() == self.tgrid.nodes().len() {
            Ok(self.tgrid.clone())
        } else {
            TimeGrid::from_nodes(self.times().to_vec())
        }
    }
}

/// A transient run that stopped early; `partial` holds the completed steps.
#[derive(Debug, thiserror::Error)]
#[error("time step {step} failed: {source}")]
pub struct TransientError {
    pub step: usize,
    #[source]
    pub source: Error,
    pub partial: Box<SolutionHistory>,
}

impl From<TransientError> for Error {
    fn from(e: TransientError) -> Self {
        match e.source {
            Error::BlowUp { .. } => e.source,
            other => Error::Problem(format!("time step {} failed: {other}", e.step)),
        }
    }
}

/// Implicit L1 stepping: a_nn(u_n - u_{n-1}) + H_n + 𝕃_h u_n - q u_n + p f(u_n) = r(t_n).
pub fn solve_transient(
    problem: &Problem,
    opts: &TransientOptions,
) -> std::result::Result<SolutionHistory, TransientError> {
    let mut hist = SolutionHistory {
        grid: problem.grid,
        tgrid: problem.tgrid.clone(),
        alpha: problem.alpha,
        bc: problem.bc_kind(),
        states: vec![problem.u0.clone()],
        newton_iterations: vec![0],
        residuals: vec![0.0],
    };
    let fail = |hist: SolutionHistory, step: usize, source: Error| TransientError {
        step,
        source,
        partial: Box::new(hist),
    };
    let weights = match l1_weights(&problem.tgrid, problem.alpha) {
        Ok(w) => w,
        Err(e) => return Err(fail(hist, 0, e)),
    };
    let matrix = match assemble(&problem.op, &problem.grid) {
        Ok(m) => m,
        Err(e) => return Err(fail(hist, 0, e)),
    };
    let mut stepper = match CaputoStepper::new(&weights, opts.history, &problem.u0) {
        Ok(s) => s,
        Err(e) => return Err(fail(hist, 0, e)),
    };
    let nodes = problem.tgrid.nodes().to_vec();
    for (n, &t) in nodes.iter().enumerate().skip(1) {
        let a = stepper.leading();
        let h = stepper.history();
        let r = problem.source.at(n, t);
        let prev = stepper.last().to_vec();
        let rhs: Vec<f64> = (0..prev.len()).map(|i| r[i] + a * prev[i] - h[i]).collect();
        let sys = NonlinearSystem {
            grid: &problem.grid,
            op: &problem.op,
            matrix: &matrix,
            p: &problem.p,
            q: &problem.q,
            nl: &problem.nl,
            shift: a,
            rhs: &rhs,
        };
        let (u, rec) = match newton_solve(&sys, &prev, &opts.newton) {
            Ok(v) => v,
            Err(e) => return Err(fail(hist, n, e)),
        };
        let max_abs = u.max_abs();
        if !(max_abs < opts.blowup) {
            return Err(fail(hist, n, Error::BlowUp { step: n, max_abs }));
        }
        stepper.advance(&u);
        hist.states.push(u);
        hist.newton_iterations.push(rec.iterations);
        hist.residuals.push(rec.final_residual());
    }
    Ok(hist)
}

/// ∫₀¹ f''(u∞ + θ u∼)(1 - θ) dθ by 8-point Gauss-Legendre.
pub fn fbarbar(nl: &Nonlinearity, u_inf: f64, usim: f64) -> f64 {
    thread_local! {
        static GL8: (Vec<f64>, Vec<f64>) = gauss_legendre(8);
    }
    GL8.with(|(x, w)| {
        x.iter()
            .zip(w)
            .map(|(xi, wi)| {
                let th = 0.5 * (xi + 1.0);
                0.5 * wi * (1.0 - th) * nl.d2f(u_inf + th * usim)
            })
            .sum()
    })
}

/// (𝕃 + p∞)u∼ + p F(u∼)(u∼)² - (r - r∞), i.e. minus the Caputo derivative of u∼
/// as predicted by the difference equation; zero at Dirichlet nodes.
pub fn difference_operator(
    problem: &Problem,
    u_inf: &[f64],
    usim: &[f64],
    r_diff: &[f64],
) -> Vec<f64> {
    let pinf = p_infty(&problem.p, &problem.q, &problem.nl, u_inf);
    let mut out = problem.op.apply_homogeneous(&problem.grid, usim);
    for i in 0..out.len() {
        let nlin = problem.p[i] * fbarbar(&problem.nl, u_inf[i], usim[i]) * usim[i] * usim[i];
        out[i] += pinf[i] * usim[i] + nlin - r_diff[i];
    }
    if problem.op.bc().is_dirichlet() {
        let n = out.len();
        out[0] = 0.0;
        out[n - 1] = 0.0;
    }
    out
}

/// Residual of the difference equation ∂^α u∼ + (𝕃 + p∞)u∼ + p F (u∼)² = r - r∞ at step n,
/// with the discrete Caputo derivative of the stored trajectory.
pub fn difference_residual(
    history: &SolutionHistory,
    problem: &Problem,
    u_inf: &[f64],
    n: usize,
) -> Result<Field> {
    if n >= history.len() {
        return Err(Error::OutOfRange {
            index: n,
            len: history.len(),
        });
    }
    let weights = l1_weights(&history.tgrid, history.alpha)?;
    let nx = history.grid.nx();
    let mut cap = vec![0.0; nx];
    for j in 1..=n {
        let a = weights.weight(n, j);
        for (i, c) in cap.iter_mut().enumerate() {
            *c += a * (history.states[j][i] - history.states[j - 1][i]);
        }
    }
    let usim = history.usim(n, u_inf);
    let r_diff = problem.source.difference(n, history.t(n));
    let op = difference_operator(problem, u_inf, &usim, &r_diff);
    let mut out: Vec<f64> = cap.iter().zip(&op).map(|(c, o)| c + o).collect();
    if problem.op.bc().is_dirichlet() {
        out[0] = 0.0;
        out[nx - 1] = 0.0;
    }
    Ok(Field(out))
}

/// Which energy estimate the monitor tracks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyRegime {
    /// s = 0, forcing measured in H^{-1}.
    Lo,
    /// s = 1, forcing measured in L².
    Hi,
    /// s = 1 under the sign condition at all intermediate states.
    Between,
}

impl EnergyRegime {
    pub fn s(self) -> i32 {
        match self {
            EnergyRegime::Lo => 0,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyRegime::Lo => "lo",
            EnergyRegime::Hi => "hi",
            EnergyRegime::Between => "between",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lo" => Some(EnergyRegime::Lo),
            "hi" => Some(EnergyRegime::Hi),
            "between" => Some(EnergyRegime::Between),
            _ => None,
        }
    }

    fn source_norm(self) -> SourceNorm {
        match self {
            EnergyRegime::Lo => SourceNorm::Hminus1,
            _ => SourceNorm::L2,
        }
    }
}

/// Which function enters the steady-state term of Φ¹∞.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Phi1Variant {
    /// Φ¹∞ = Φ¹∼ + c₂ C_{H¹→L^{2𝔯/(𝔯-2)}} C_{H²→L∞}.
    #[default]
    Consistent,
    /// Φ¹∞ = Φ⁰∼ + c₂ C_{H¹→L^{2𝔯/(𝔯-2)}} C_{H²→L∞}.
    Literal,
}

#[derive(Clone, Debug)]
pub struct MonitorOptions {
    pub regime: EnergyRegime,
    pub phi1: Phi1Variant,
    pub embedding_random: usize,
    pub seed: u64,
    /// Exponential rate ω of ‖r - r∞‖² for α = 1 (defaults from the source).
    pub omega_r: Option<f64>,
    pub theta_count: usize,
    pub bound_rtol: f64,
    /// Relative margin added to μ in the between-states regime.
    pub mu_margin: f64,
}

impl Default for MonitorOptions {
    fn default() -> Self {
        Self {
            regime: EnergyRegime::Lo,
            phi1: Phi1Variant::Consistent,
            embedding_random: 32,
            seed: 0,
            omega_r: None,
            theta_count: 16,
            bound_rtol: 1e-10,
            mu_margin: 1e-3,
        }
    }
}

/// Φ∼(ξ) = coef ξ^κ and Φ∞(ξ) = Φ∼(ξ) + shift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiPair {
    pub coef: f64,
    pub shift: f64,
    pub kappa: f64,
}

impl PhiPair {
    pub fn sim(&self, xi: f64) -> f64 {
        if self.kappa == 0.0 {
            self.coef
        } else {
            self.coef * xi.powf(self.kappa)
        }
    }

    pub fn inf(&self, xi: f64) -> f64 {
        self.sim(xi) + self.shift
    }
}

/// Constants of one energy estimate: ∂^α η + c η̃ (1 - D) ≤ C̃ ‖r - r∞‖²_X with D = C(…)².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateConstants {
    pub c: f64,
    pub big_c: f64,
    pub c_tilde: f64,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetweenConstants {
    pub margin: f64,
    pub mu: f64,
    pub m: f64,
    pub threshold: f64,
    pub d0: f64,
    pub est: EstimateConstants,
}

/// Every constant used by the monitor; embedding and regularity constants are empirical.
#[derive(Clone, Debug)]
pub struct MonitorConstants {
    pub regime: EnergyRegime,
    pub s: i32,
    pub alpha: f64,
    pub c_lower: f64,
    pub c_d: f64,
    pub p_inf_sup: f64,
    pub p_r_norm: f64,
    pub q_l2: f64,
    pub r_exp: f64,
    pub growth: Growth,
    pub emb: EmbeddingConstants,
    pub c_ell: f64,
    pub phi0: PhiPair,
    pub phi1: PhiPair,
    /// Coefficient of ξ^κ in Φ¹∞.
    pub phi1_inf_coef: f64,
    pub lo: Option<EstimateConstants>,
    pub hi: Option<EstimateConstants>,
    pub between: Option<BetweenConstants>,
    pub c_r: f64,
    pub omega_r: f64,
    pub kernel_factor: f64,
    pub u_inf_l2: f64,
    pub u_inf_h1: f64,
}

impl MonitorConstants {
    /// Estimate of the active regime.
    pub fn active(&self) -> Option<EstimateConstants> {
        match self.regime {
            EnergyRegime::Lo => self.lo,
            EnergyRegime::Hi => self.hi,
            EnergyRegime::Between => self.between.map(|b| b.est),
        }
    }

    /// Key-value header for reports.
    pub fn describe(&self) -> Vec<(String, f64)> {
        let mut v = vec![
            ("alpha".to_string(), self.alpha),
            ("s".to_string(), self.s as f64),
            ("c_lower".to_string(), self.c_lower),
            ("c_D".to_string(), self.c_d),
            ("p_inf_sup".to_string(), self.p_inf_sup),
            ("p_Lr".to_string(), self.p_r_norm),
            ("q_L2".to_string(), self.q_l2),
            ("c2".to_string(), self.growth.c2),
            ("C2".to_string(), self.growth.cap_c2),
            ("kappa2".to_string(), self.growth.kappa2),
            ("empirical_C_H1_Linf".to_string(), self.emb.h1_linf),
            ("empirical_C_H2_Linf".to_string(), self.emb.h2_linf),
            ("empirical_C_L1_Hminus1".to_string(), self.emb.l1_hminus1),
            ("empirical_C_ell".to_string(), self.c_ell),
            ("C_r".to_string(), self.c_r),
            ("omega_r".to_string(), self.omega_r),
            ("kernel_factor".to_string(), self.kernel_factor),
        ];
        if let Some(e) = self.active() {
            v.push(("c".into(), e.c));
            v.push(("C".into(), e.big_c));
            v.push(("C_tilde".into(), e.c_tilde));
            v.push(("mu".into(), e.mu));
        }
        if let Some(b) = self.between {
            v.push(("between_margin".into(), b.margin));
            v.push(("between_threshold".into(), b.threshold));
        }
        v
    }
}

fn lo_exponents(r_exp: f64, kappa: f64) -> (f64, f64) {
    let nu = if r_exp.is_infinite() {
        1.0
    } else {
        r_exp / (r_exp - 1.0)
    };
    ((kappa + 1.0) * nu, nu)
}

fn hi_exponents(r_exp: f64, kappa: f64) -> (f64, f64) {
    let m = if r_exp.is_infinite() {
        2.0
    } else if r_exp <= 2.0 {
        f64::INFINITY
    } else {
        2.0 * r_exp / (r_exp - 2.0)
    };
    ((kappa + 1.0) * m, m)
}

/// Kernel factor 1/(Γ(α)α(1-α)) for α < 1 and 1/ω for α = 1.
pub fn kernel_factor(alpha: f64, omega_r: f64) -> Result<f64> {
    if alpha < 1.0 {
        Ok(1.0 / (gamma_fn(alpha)? * alpha * (1.0 - alpha)))
    } else {
        Ok(1.0 / omega_r)
    }
}

/// Evaluates every constant of the monitor for `problem` around `u_inf`.
pub fn monitor_constants(
    problem: &Problem,
    u_inf: &[f64],
    history: Option<&SolutionHistory>,
    opts: &MonitorOptions,
) -> Result<MonitorConstants> {
    let grid = &problem.grid;
    let bc = problem.bc_kind();
    let growth = problem.nl.growth().ok_or_else(|| {
        Error::Precondition(format!(
            "nonlinearity `{}` has no growth metadata",
            problem.nl.name()
        ))
    })?;
    let kappa = growth.kappa2;
    let r_exp = problem.summability.r_exp;
    let (lo_a, lo_b) = lo_exponents(r_exp, kappa);
    let (hi_a, hi_b) = hi_exponents(r_exp, kappa);
    let set = embedding_test_set(grid, bc, opts.embedding_random, opts.seed)?;
    let emb = embedding_constants_over(grid, &set, &[lo_a, lo_b, hi_a, hi_b]);
    let c_ell = elliptic_regularity_constant(&problem.op, grid, &set);
    let ck = growth.c_kappa();
    let l2 = |q: f64| emb.l2_to(q).unwrap_or(f64::NAN);
    let h1 = |q: f64| emb.h1_to(q).unwrap_or(f64::NAN);
    let phi0 = PhiPair {
        coef: growth.cap_c2 * ck * l2(lo_a).powf(kappa + 1.0) * emb.h1_linf,
        shift: growth.c2 * l2(lo_b) * emb.h1_linf,
        kappa,
    };
    let sim1 = growth.cap_c2 * ck * h1(hi_a).powf(kappa + 1.0) * emb.h2_linf;
    let phi1 = PhiPair {
        coef: sim1,
        shift: growth.c2 * h1(hi_b) * emb.h2_linf,
        kappa,
    };
    // Φ¹∞(ξ) = phi1_inf_coef ξ^κ + phi1.shift
    let phi1_inf_coef = match opts.phi1 {
        Phi1Variant::Consistent => sim1,
        Phi1Variant::Literal => phi0.coef,
    };

    let c_lower = check_pinfty(&problem.p, &problem.q, &problem.nl, u_inf);
    let c_d = problem.op.c_d();
    let pinf = p_infty(&problem.p, &problem.q, &problem.nl, u_inf);
    let p_inf_sup = pinf.max_abs();
    let p_r_norm = norm_lq(grid, &problem.p, r_exp);
    let q_l2 = norm_l2_sq(grid, &problem.q).sqrt();
    let u_inf_l2 = norm_l2_sq(grid, u_inf).sqrt();
    let u_inf_h1 = norm_h1_sq(grid, u_inf).sqrt();

    let lo = (c_lower > 0.0).then(|| {
        let m = c_lower.min(c_d);
        EstimateConstants {
            c: m,
            big_c: emb.l1_hminus1.powi(2) / (2.0 * m * m),
            c_tilde: 2.0 / m,
            mu: 0.0,
        }
    });
    let hi_from = |cl: f64, mu: f64, b: f64| {
        let a = mu.min(c_d);
        let k = mu / cl + 2.0;
        EstimateConstants {
            c: b / a,
            big_c: k / (2.0 * b),
            c_tilde: 2.0 * k / a,
            mu,
        }
    };
    let mu_base = |cl: f64| (1.0 + 2.0 * p_inf_sup * p_inf_sup) / (2.0 * cl);
    let hi =
        (c_lower > 0.0).then(|| hi_from(c_lower, mu_base(c_lower), 1.0 / (2.0 * c_ell * c_ell)));

    let between = match (opts.regime, history) {
        (EnergyRegime::Between, Some(h)) => {
            let margin = check_between_states(
                &problem.p,
                &problem.q,
                &problem.nl,
                &h.states,
                u_inf,
                opts.theta_count,
            );
            if margin > 0.0 {
                let m = (0.5 * margin).min(c_d);
                let u0 = h.usim(0, u_inf);
                let xi0 = norm_h1_sq(grid, &u0).sqrt();
                let d0 = d_between(
                    p_r_norm,
                    q_l2,
                    &phi1,
                    phi1_inf_coef,
                    u_inf_h1,
                    xi0,
                    emb.h2_linf,
                );
                let mu = mu_base(margin).max(4.0 * d0 / m) * (1.0 + opts.mu_margin);
                let threshold = 0.5 * mu * m;
                let a = mu.min(c_d);
                let b = threshold.min(0.5) / (c_ell * c_ell);
                let k = mu / margin + 2.0;
                let est = EstimateConstants {
                    c: b / a,
                    big_c: 1.0,
                    c_tilde: k / a,
                    mu,
                };
                Some(BetweenConstants {
                    margin,
                    mu,
                    m,
                    threshold,
                    d0,
                    est,
                })
            } else {
                Some(BetweenConstants {
                    margin,
                    mu: f64::NAN,
                    m: f64::NAN,
                    threshold: f64::NAN,
                    d0: f64::NAN,
                    est: EstimateConstants {
                        c: f64::NAN,
                        big_c: f64::NAN,
                        c_tilde: f64::NAN,
                        mu: f64::NAN,
                    },
                })
            }
        }
        _ => None,
    };

    let omega_r = opts.omega_r.unwrap_or_else(|| default_omega_r(problem));
    let diffs = source_differences(problem);
    let c_r = check_decay_r(
        grid,
        bc,
        &diffs,
        &problem.tgrid,
        opts.regime.source_norm(),
        problem.alpha,
        omega_r,
    )?;
    let kf = if c_r == 0.0 {
        0.0
    } else {
        kernel_factor(problem.alpha, omega_r)?
    };
    Ok(MonitorConstants {
        regime: opts.regime,
        s: opts.regime.s(),
        alpha: problem.alpha,
        c_lower,
        c_d,
        p_inf_sup,
        p_r_norm,
        q_l2,
        r_exp,
        growth,
        emb,
        c_ell,
        phi0,
        phi1,
        phi1_inf_coef,
        lo,
        hi,
        between,
        c_r,
        omega_r,
        kernel_factor: kf,
        u_inf_l2,
        u_inf_h1,
    })
}

fn default_omega_r(problem: &Problem) -> f64 {
    match &problem.source.perturbation {
        crate::model::Perturbation::Exponential { rate, .. } => 2.0 * rate,
        _ => 1.0,
    }
}

fn d_between(
    p_r: f64,
    q_l2: f64,
    phi1: &PhiPair,
    inf_coef: f64,
    u_inf_h1: f64,
    xi: f64,
    h2_linf: f64,
) -> f64 {
    let inf = if phi1.kappa == 0.0 {
        inf_coef
    } else {
        inf_coef * u_inf_h1.powf(phi1.kappa)
    } + phi1.shift;
    let v = (p_r * (inf + phi1.sim(xi)) + q_l2) * h2_linf;
    v * v
}

/// Per-step monitor output.
#[derive(Clone, Debug)]
pub struct MonitorTrace {
    pub constants: MonitorConstants,
    pub t: Vec<f64>,
    pub l2_sq: Vec<f64>,
    pub h1_sq: Vec<f64>,
    pub h2_sq: Vec<f64>,
    /// ‖∂^α u∼‖²_{H^{s-1}} by the difference equation.
    pub dalpha_sq: Vec<f64>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
    pub d_between: Vec<f64>,
    pub bound_lhs: Vec<f64>,
    pub bound_rhs: Vec<f64>,
    pub bound_ok: Vec<bool>,
    /// Latched barrier flag of the active regime.
    pub barrier_ok: Vec<bool>,
    /// Whether the sign condition of the regime holds (p∞ > 0 or between-states margin > 0).
    pub condition_ok: bool,
}

impl MonitorTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// ‖u∼‖²_{H^s} series of the active regime.
    pub fn eta(&self) -> &[f64] {
        if self.constants.s == 0 {
            &self.l2_sq
        } else {
            &self.h1_sq
        }
    }

    /// ‖u∼‖²_{H^{s+1}} series of the active regime.
    pub fn eta_tilde(&self) -> &[f64] {
        if self.constants.s == 0 {
            &self.h1_sq
        } else {
            &self.h2_sq
        }
    }

    pub fn bound_holds(&self) -> bool {
        self.bound_ok.iter().all(|b| *b)
    }

    pub fn barrier_held(&self) -> bool {
        self.barrier_ok.last().copied().unwrap_or(true)
    }

    /// Largest (lhs - rhs) / max(rhs, tiny) over all steps.
    pub fn bound_worst(&self) -> f64 {
        self.bound_lhs
            .iter()
            .zip(&self.bound_rhs)
            .map(|(l, r)| (l - r) / r.abs().max(1e-300))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "t",
            "norm_L2_sq",
            "norm_H1_sq",
            "norm_H2_sq",
            "D0",
            "D1",
            "D_between",
            "bound_lhs",
            "bound_rhs",
            "barrier_ok",
        ])?;
        for n in 0..self.len() {
            let f = |v: f64| format!("{v:.12e}");
            wtr.write_record([
                f(self.t[n]),
                f(self.l2_sq[n]),
                f(self.h1_sq[n]),
                f(self.h2_sq[n]),
                f(self.d0[n]),
                f(self.d1[n]),
                f(self.d_between[n]),
                f(self.bound_lhs[n]),
                f(self.bound_rhs[n]),
                (self.barrier_ok[n] as u8).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evaluates the energy, barrier and bound monitors along a completed trajectory.
pub fn monitor_energy(
    history: &SolutionHistory,
    problem: &Problem,
    u_inf: &[f64],
    opts: &MonitorOptions,
) -> Result<MonitorTrace> {
    let consts = monitor_constants(problem, u_inf, Some(history), opts)?;
    let grid = &history.grid;
    let bc = history.bc;
    let s = consts.s;
    let n_all = history.len();
    let mut tr = MonitorTrace {
        constants: consts,
        t: history.times().to_vec(),
        l2_sq: Vec::with_capacity(n_all),
        h1_sq: Vec::with_capacity(n_all),
        h2_sq: Vec::with_capacity(n_all),
        dalpha_sq: Vec::with_capacity(n_all),
        d0: Vec::with_capacity(n_all),
        d1: Vec::with_capacity(n_all),
        d_between: Vec::with_capacity(n_all),
        bound_lhs: vec![],
        bound_rhs: vec![],
        bound_ok: vec![],
        barrier_ok: Vec::with_capacity(n_all),
        condition_ok: true,
    };
    let c = &tr.constants;
    for n in 0..n_all {
        let usim = history.usim(n, u_inf);
        let l2 = norm_l2_sq(grid, &usim);
        let h1 = norm_h1_sq(grid, &usim);
        let h2 = norm_h2_sq(grid, &usim);
        let r_diff = problem.source.difference(n, history.t(n));
        let dv = difference_operator(problem, u_inf, &usim, &r_diff);
        let da = if n == 0 {
            f64::NAN
        } else {
            norm_hs(grid, &dv, s - 1, bc)?.powi(2)
        };
        tr.l2_sq.push(l2);
        tr.h1_sq.push(h1);
        tr.h2_sq.push(h2);
        tr.dalpha_sq.push(da);
        let p2 = c.p_r_norm * c.p_r_norm;
        let d0 = match c.lo {
            Some(e) => {
                let phi = c.phi0.inf(c.u_inf_l2) + c.phi0.sim(l2.sqrt());
                e.big_c * p2 * phi * phi * l2
            }
            None => f64::MAX,
        };
        let inf1 = phi1_inf(c.phi1_inf_coef, &c.phi1, c.u_inf_h1);
        let d1 = match c.hi {
            Some(e) => {
                let phi = inf1 + c.phi1.sim(h1.sqrt());
                e.big_c * p2 * phi * phi * h1
            }
            None => f64::MAX,
        };
        let db = d_between(
            c.p_r_norm,
            c.q_l2,
            &c.phi1,
            c.phi1_inf_coef,
            c.u_inf_h1,
            h1.sqrt(),
            c.emb.h2_linf,
        );
        tr.d0.push(d0);
        tr.d1.push(d1);
        tr.d_between.push(db);
        let ok_now = match c.regime {
            EnergyRegime::Lo => c.lo.is_some() && d0 <= 0.5,
            EnergyRegime::Hi => c.hi.is_some() && d1 <= 0.5,
            EnergyRegime::Between => match c.between {
                Some(b) if b.margin > 0.0 => db < b.threshold,
                _ => false,
            },
        };
        let prev = tr.barrier_ok.last().copied().unwrap_or(true);
        tr.barrier_ok.push(prev && ok_now);
    }
    tr.condition_ok = match c.regime {
        EnergyRegime::Lo | EnergyRegime::Hi => c.c_lower > 0.0,
        EnergyRegime::Between => c.between.map(|b| b.margin > 0.0).unwrap_or(false),
    };
    let est = c.active();
    let sgrid = history.stored_grid()?;
    let (eta, eta_t) = (tr.eta().to_vec(), tr.eta_tilde().to_vec());
    match est {
        Some(e) if e.c.is_finite() => {
            let conv = rl_convolve(history.alpha, &sgrid, &eta_t)?;
            let rhs = eta[0] + e.c_tilde * c.c_r * c.kernel_factor;
            for n in 0..n_all {
                let lhs = 0.5 * e.c * conv[n] + eta[n];
                tr.bound_lhs.push(lhs);
                tr.bound_rhs.push(rhs);
                tr.bound_ok
                    .push(lhs <= rhs * (1.0 + opts.bound_rtol) + 1e-300);
            }
        }
        _ => {
            tr.bound_lhs = vec![f64::NAN; n_all];
            tr.bound_rhs = vec![f64::NAN; n_all];
            tr.bound_ok = vec![false; n_all];
        }
    }
    Ok(tr)
}

fn phi1_inf(inf_coef: f64, phi1: &PhiPair, xi: f64) -> f64 {
    let base = if phi1.kappa == 0.0 {
        inf_coef
    } else {
        inf_coef * xi.powf(phi1.kappa)
    };
    base + phi1.shift
}

/// Per-step margins of the discrete low-regularity energy inequality
/// ∂^α‖u∼‖² + m‖u∼‖²_{H¹} ≤ (1/m)‖p F (u∼)² - (r - r∞)‖²_{H^{-1}}; a margin ≥ 0 means it holds.
pub fn energy_inequality_margins(
    history: &SolutionHistory,
    problem: &Problem,
    u_inf: &[f64],
) -> Result<Vec<f64>> {
    let c_lower = check_pinfty(&problem.p, &problem.q, &problem.nl, u_inf);
    if !(c_lower > 0.0) {
        return Err(Error::Precondition(format!(
            "p f'(u∞) - q has minimum {c_lower:e} ≤ 0"
        )));
    }
    let m = c_lower.min(problem.op.c_d());
    let grid = &history.grid;
    let sgrid = history.stored_grid()?;
    let weights = l1_weights(&sgrid, history.alpha)?;
    let l2: Vec<f64> = (0..history.len())
        .map(|n| norm_l2_sq(grid, &history.usim(n, u_inf)))
        .collect();
    let cap = caputo_series(&weights, &l2)?;
    let mut out = vec![0.0];
    for (n, cap_n) in cap.iter().enumerate().skip(1) {
        let usim = history.usim(n, u_inf);
        let r_diff = problem.source.difference(n, history.t(n));
        let g: Vec<f64> = (0..usim.len())
            .map(|i| {
                problem.p[i] * fbarbar(&problem.nl, u_inf[i], usim[i]) * usim[i] * usim[i]
                    - r_diff[i]
            })
            .collect();
        let rhs = norm_hs(grid, &g, -1, history.bc)?.powi(2) / m;
        let lhs = cap_n + m * norm_h1_sq(grid, &usim);
        out.push(rhs - lhs);
    }
    Ok(out)
}

/// Backward-difference time derivatives and derived norm series.
#[derive(Clone, Debug)]
pub struct TimeDerivatives {
    pub t: Vec<f64>,
    /// u_t at nodes n ≥ 1 (index 0 is not finite).
    pub ut: Vec<Field>,
    pub ut_l2_sq: Vec<f64>,
    pub ut_h1_sq: Vec<f64>,
    pub ut_h2_sq: Vec<f64>,
    /// ‖∂^α u‖²_{L²} of the discrete Caputo derivative.
    pub dalpha_l2_sq: Vec<f64>,
}

/// u_t by backward differences and ∂^α u by the L1 formula.
pub fn time_derivative_series(history: &SolutionHistory) -> Result<TimeDerivatives> {
    let grid = &history.grid;
    let nodes = history.times().to_vec();
    let nx = grid.nx();
    let mut out = TimeDerivatives {
        t: nodes.clone(),
        ut: vec![Field(vec![f64::NAN; nx])],
        ut_l2_sq: vec![f64::NAN],
        ut_h1_sq: vec![f64::NAN],
        ut_h2_sq: vec![f64::NAN],
        dalpha_l2_sq: vec![0.0],
    };
    for n in 1..history.len() {
        let tau = nodes[n] - nodes[n - 1];
        let ut = Field(
            history.states[n]
                .iter()
                .zip(history.states[n - 1].iter())
                .map(|(a, b)| (a - b) / tau)
                .collect(),
        );
        out.ut_l2_sq.push(norm_l2_sq(grid, &ut));
        out.ut_h1_sq.push(norm_h1_sq(grid, &ut));
        out.ut_h2_sq.push(norm_h2_sq(grid, &ut));
        out.ut.push(ut);
    }
    if history.len() > 1 {
        let sgrid = history.stored_grid()?;
        let weights = l1_weights(&sgrid, history.alpha)?;
        let mut stepper = CaputoStepper::new(&weights, HistoryMode::Direct, &history.states[0])?;
        for n in 1..history.len() {
            let d = stepper.apply(&history.states[n]);
            out.dalpha_l2_sq.push(norm_l2_sq(grid, &d));
            stepper.advance(&history.states[n]);
        }
    }
    Ok(out)
}

/// ∫₀ᵗ k^α(t - s) s^{-γ} ds for γ < 1 by adaptive quadrature.
pub fn kernel_power_convolution(alpha: f64, gamma: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0 && gamma < 1.0 && t > 0.0) {
        return Err(Error::Domain(format!(
            "need alpha in (0,1), gamma < 1, t > 0; got ({alpha}, {gamma}, {t})"
        )));
    }
    // s = t σ gives t^{1-α-γ} ∫₀¹ (1-σ)^{-α} σ^{-γ} dσ / Γ(1-α); the substitutions
    // σ = u^{1/(1-γ)} near 0 and 1 - σ = v^{1/(1-α)} near 1 remove both singularities
    let g = gamma_fn(1.0 - alpha)?;
    let pl = 1.0 / (1.0 - gamma);
    let pr = 1.0 / (1.0 - alpha);
    let left = crate::quad::integrate(
        |u: f64| pl * (1.0 - u.powf(pl)).powf(-alpha),
        0.0,
        0.5f64.powf(1.0 - gamma),
        1e-15,
        1e-13,
    )
    .0;
    let right = crate::quad::integrate(
        |v: f64| pr * (1.0 - v.powf(pr)).powf(-gamma),
        0.0,
        0.5f64.powf(1.0 - alpha),
        1e-15,
        1e-13,
    )
    .0;
    Ok(t.powf(1.0 - alpha - gamma) * (left + right) / g)
}

/// Result of the T-dependent boundedness check.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundednessReport {
    /// p ≥ 0 and f(ξ)ξ ≥ 0 on the sampled range.
    pub applicable: bool,
    pub lhs: f64,
    pub data: f64,
    /// Empirical constant lhs / data (0 when both vanish).
    pub c_t: f64,
}

/// sup_n ‖u_n‖² + Σ τ_n ‖u_n‖²_{H¹} against ‖u⁰‖² + Σ τ_n ‖r_n‖²_{H^{-1}}.
pub fn boundedness_monitor(
    history: &SolutionHistory,
    problem: &Problem,
) -> Result<BoundednessReport> {
    let grid = &history.grid;
    let umax = history
        .states
        .iter()
        .map(|u| u.max_abs())
        .fold(1.0f64, f64::max);
    let applicable = problem.p.iter().all(|p| *p >= 0.0)
        && (0..=200).all(|k| {
            let xi = -umax + 2.0 * umax * k as f64 / 200.0;
            problem.nl.f(xi) * xi >= -1e-14
        });
    let mut sup = norm_l2_sq(grid, &history.states[0]);
    let mut acc = 0.0;
    let mut data = sup;
    for n in 1..history.len() {
        let tau = history.t(n) - history.t(n - 1);
        let u = &history.states[n];
        sup = sup.max(norm_l2_sq(grid, u));
        acc += tau * norm_h1_sq(grid, u);
        let r = problem.source.at(n, history.t(n));
        data += tau * norm_hs(grid, &r, -1, history.bc)?.powi(2);
    }
    let lhs = sup + acc;
    let c_t = if lhs == 0.0 { 0.0 } else { lhs / data };
    Ok(BoundednessReport {
        applicable,
        lhs,
        data,
        c_t,
    })
}
