//! Decay-rate fits and the theorem-level verdicts built on them.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolve::{
    monitor_energy, solve_transient, time_derivative_series, EnergyRegime, MonitorOptions,
    MonitorTrace, SolutionHistory, TransientOptions,
};
use crate::model::Problem;
use crate::space::{norm_hs, Field};

/// Portion of a time series used by a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    /// Every node with t > 0.
    All,
    /// Nodes with t ≥ t_end/10, widened backwards to at least `min_points`.
    LastDecade { min_points: usize },
    /// Nodes with t in [lo, hi].
    Range(f64, f64),
}

impl Default for Window {
    fn default() -> Self {
        Window::LastDecade { min_points: 10 }
    }
}

/// Series values below this are treated as numerical noise and cut from fit windows.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Result of a least-squares fit; `value` is γ (power) or ω (exponential).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub value: f64,
    pub coef: f64,
    pub r2: f64,
    /// Index range `[start, end)` of the nodes used.
    pub start: usize,
    pub end: usize,
    pub floor_truncated: bool,
}

impl Fit {
    /// Slope of the fitted line (−γ or −ω).
    pub fn slope(&self) -> f64 {
        -self.value
    }
}

fn window_range(t: &[f64], window: Window) -> (usize, usize) {
    let n = t.len();
    let first_pos = t.iter().position(|v| *v > 0.0).unwrap_or(n);
    match window {
        Window::All => (first_pos, n),
        Window::LastDecade { min_points } => {
            let t_end = t.last().copied().unwrap_or(0.0);
            let mut start = t
                .iter()
                .position(|v| *v >= t_end / 10.0)
                .unwrap_or(n)
                .max(first_pos);
            if n - start < min_points {
                start = n.saturating_sub(min_points).max(first_pos);
            }
            (start, n)
        }
        Window::Range(lo, hi) => {
            let start = t.iter().position(|v| *v >= lo && *v > 0.0).unwrap_or(n);
            let end = t.iter().rposition(|v| *v <= hi).map(|i| i + 1).unwrap_or(0);
            (start, end.max(start))
        }
    }
}

/// Least squares y = a + b x; returns (b, a, R²).
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

fn fit_with(
    series: &[f64],
    t: &[f64],
    window: Window,
    floor: f64,
    xmap: fn(f64) -> f64,
) -> Option<Fit> {
    let (start, mut end) = window_range(t, window);
    end = end.min(series.len());
    let mut floor_truncated = false;
    if let Some(k) = series[start.min(end)..end]
        .iter()
        .position(|v| v.is_finite() && *v < floor && *v > 0.0)
    {
        end = start + k;
        floor_truncated = true;
    }
    if end < start + 3 {
        return None;
    }
    let ys = &series[start..end];
    if ys.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let x: Vec<f64> = t[start..end].iter().map(|v| xmap(*v)).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (slope, icept, r2) = linear_regression(&x, &y);
    Some(Fit {
        value: -slope,
        coef: icept.exp(),
        r2,
        start,
        end,
        floor_truncated,
    })
}

/// Fits η ≈ C t^{−γ}; `None` (abstain) when the window holds a nonpositive value or too few points.
pub fn fit_power(series: &[f64], t: &[f64], window: Window) -> Option<Fit> {
    fit_power_floor(series, t, window, DEFAULT_FLOOR)
}

pub fn fit_power_floor(series: &[f64], t: &[f64], window: Window, floor: f64) -> Option<Fit> {
    fit_with(series, t, window, floor, f64::ln)
}

/// Fits η ≈ C e^{−ωt}; `None` (abstain) as for [`fit_power`].
pub fn fit_exponential(series: &[f64], t: &[f64], window: Window) -> Option<Fit> {
    fit_exponential_floor(series, t, window, DEFAULT_FLOOR)
}

pub fn fit_exponential_floor(series: &[f64], t: &[f64], window: Window, floor: f64) -> Option<Fit> {
    fit_with(series, t, window, floor, |v| v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Abstain,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Abstain => "abstain",
        }
    }
}

/// One checked claim; `margin ≥ 0` means the claim holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub id: String,
    pub status: Status,
    pub margin: f64,
    pub fitted: f64,
    pub tolerance: f64,
    pub note: String,
}

impl Verdict {
    fn from_margin(id: &str, margin: f64, fitted: f64, tolerance: f64, note: &str) -> Self {
        Self {
            id: id.into(),
            status: if margin >= 0.0 {
                Status::Pass
            } else {
                Status::Fail
            },
            margin,
            fitted,
            tolerance,
            note: note.into(),
        }
    }

    fn abstain(id: &str, note: &str) -> Self {
        Self {
            id: id.into(),
            status: Status::Abstain,
            margin: f64::NAN,
            fitted: f64::NAN,
            tolerance: f64::NAN,
            note: note.into(),
        }
    }
}

/// Ψ(t) = t^{−α} for α < 1 and e^{−ωt} for α = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayRegime {
    Power,
    Exponential,
}

impl DecayRegime {
    pub fn for_alpha(alpha: f64) -> Self {
        if alpha >= 1.0 {
            DecayRegime::Exponential
        } else {
            DecayRegime::Power
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecayRegime::Power => "power",
            DecayRegime::Exponential => "exponential",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub title: String,
    pub regime: DecayRegime,
    pub alpha: f64,
    /// Fit of the primary decaying series.
    pub fit: Option<Fit>,
    pub window: Window,
    /// Times of the first and last node in the fit window.
    pub fit_times: Option<(f64, f64)>,
    pub verdicts: Vec<Verdict>,
}

impl DecayReport {
    pub fn verdict(&self, id: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    /// Every verdict passed.
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.status == Status::Pass)
    }

    pub fn any_failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Fail)
    }

    /// Pass, fail if any verdict failed, abstain otherwise.
    pub fn status(&self) -> Status {
        if self.any_failed() {
            Status::Fail
        } else if self.passed() {
            Status::Pass
        } else {
            Status::Abstain
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{}\nregime: {} (alpha = {})\n",
            self.title,
            self.regime.as_str(),
            self.alpha
        );
        match (&self.fit, self.fit_times) {
            (Some(f), Some((a, b))) => {
                let name = match self.regime {
                    DecayRegime::Power => "exponent",
                    DecayRegime::Exponential => "rate",
                };
                out += &format!(
                    "fit: {name} {:.6}, C = {:.6e}, R2 = {:.6}, window t in [{a:.6}, {b:.6}] ({} nodes){}\n",
                    f.value,
                    f.coef,
                    f.r2,
                    f.end - f.start,
                    if f.floor_truncated {
                        ", truncated at floor"
                    } else {
                        ""
                    }
                );
            }
            _ => out += "fit: none\n",
        }
        for v in &self.verdicts {
            out += &format!(
                "  {:<14} {:<8} margin {:>13.6e}  fitted {:>13.6e}  tol {:>10.4e}  {}\n",
                v.id,
                v.status.as_str(),
                v.margin,
                v.fitted,
                v.tolerance,
                v.note
            );
        }
        out += &format!("overall: {}\n", self.status().as_str());
        out
    }

    /// Rows `claim_id,status,margin,fitted_value,tolerance`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["claim_id", "status", "margin", "fitted_value", "tolerance"])?;
        for v in &self.verdicts {
            wtr.write_record([
                v.id.clone(),
                v.status.as_str().to_string(),
                format!("{:e}", v.margin),
                format!("{:e}", v.fitted),
                format!("{:e}", v.tolerance),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RateCheck {
    /// Fitted log-log slope at most this value.
    PowerAtMost(f64),
    /// Fitted exponential rate positive.
    ExpPositive,
}

fn rate_verdict(
    id: &str,
    series: &[f64],
    t: &[f64],
    window: Window,
    floor: f64,
    check: RateCheck,
    note: &str,
) -> (Verdict, Option<Fit>) {
    let fit = match check {
        RateCheck::PowerAtMost(_) => fit_power_floor(series, t, window, floor),
        RateCheck::ExpPositive => fit_exponential_floor(series, t, window, floor),
    };
    let tol = match check {
        RateCheck::PowerAtMost(m) => m,
        RateCheck::ExpPositive => 0.0,
    };
    if let Some(f) = fit {
        let (margin, fitted) = match check {
            RateCheck::PowerAtMost(m) => (m - f.slope(), f.slope()),
            RateCheck::ExpPositive => (f.value, f.value),
        };
        return (Verdict::from_margin(id, margin, fitted, tol, note), Some(f));
    }
    let (s, e) = window_range(t, window);
    let e = e.min(series.len());
    let tail = &series[s.min(e)..e];
    if !tail.is_empty() && tail.iter().all(|v| v.is_finite() && v.abs() < floor) {
        let peak = tail.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let v = Verdict {
            id: id.into(),
            status: Status::Pass,
            margin: floor - peak,
            fitted: f64::NAN,
            tolerance: tol,
            note: "vacuous: series below the noise floor on the fit window".into(),
        };
        return (v, None);
    }
    (
        Verdict::abstain(
            id,
            "fit window holds nonpositive values or fewer than 3 points",
        ),
        None,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayOptions {
    pub window: Window,
    pub floor: f64,
    /// Allowed excess of the fitted slope over −α for ‖u∼‖²_{H^s}.
    pub slope_tol: f64,
    /// Allowed excess over −α for the Tauberian series.
    pub tauber_tol: f64,
    /// Adds a two-sided check |slope + α| ≤ slope_tol (forced scenarios that saturate the bound).
    pub tight: bool,
}

impl Default for DecayOptions {
    fn default() -> Self {
        Self {
            window: Window::default(),
            floor: DEFAULT_FLOOR,
            slope_tol: 0.15,
            tauber_tol: 0.2,
            tight: false,
        }
    }
}

/// Verdicts V1 (bound), V2 (decay rate), V3 (barrier latch) and V4 (Tauberian series)
/// for a monitored trajectory.
pub fn verify_decay_theorem(trace: &MonitorTrace, opts: &DecayOptions) -> DecayReport {
    let c = &trace.constants;
    let alpha = c.alpha;
    let regime = DecayRegime::for_alpha(alpha);
    let mut report = DecayReport {
        title: format!(
            "decay of u - u_inf in H^{} ({} estimate)",
            c.s,
            c.regime.as_str()
        ),
        regime,
        alpha,
        fit: None,
        window: opts.window,
        fit_times: None,
        verdicts: vec![],
    };
    if !trace.condition_ok {
        let why = match c.regime {
            EnergyRegime::Between => {
                "sign condition p f'(between states) - q > 0 not met".to_string()
            }
            _ => format!(
                "sign condition inf p_inf > 0 not met (c = {:.4e})",
                c.c_lower
            ),
        };
        for id in ["V1", "V2", "V3", "V4"] {
            report.verdicts.push(Verdict::abstain(id, &why));
        }
        return report;
    }
    let v1 = if trace.bound_lhs.iter().any(|v| !v.is_finite()) || trace.bound_lhs.is_empty() {
        Verdict::abstain("V1", "estimate constants unavailable for this regime")
    } else {
        let ratio = trace
            .bound_lhs
            .iter()
            .zip(&trace.bound_rhs)
            .map(|(l, r)| l / r)
            .fold(0.0f64, f64::max);
        let mut v = Verdict::from_margin(
            "V1",
            0.0 - trace.bound_worst() + 0.0,
            ratio,
            0.0,
            "bound holds at every step; fitted = max lhs/rhs",
        );
        if !trace.bound_holds() {
            v.status = Status::Fail;
        }
        v
    };
    report.verdicts.push(v1);

    let eta = trace.eta();
    let check = match regime {
        DecayRegime::Power => RateCheck::PowerAtMost(-alpha + opts.slope_tol),
        DecayRegime::Exponential => RateCheck::ExpPositive,
    };
    let (v2, fit) = rate_verdict(
        "V2",
        eta,
        &trace.t,
        opts.window,
        opts.floor,
        check,
        match regime {
            DecayRegime::Power => "slope of squared H^s norm <= -alpha + tol",
            DecayRegime::Exponential => "exponential rate of squared H^s norm > 0",
        },
    );
    report.verdicts.push(v2);
    if opts.tight && regime == DecayRegime::Power {
        report.verdicts.push(match fit {
            Some(f) => Verdict::from_margin(
                "V2-tight",
                opts.slope_tol - (f.slope() + alpha).abs(),
                f.slope(),
                opts.slope_tol,
                "|slope + alpha| <= tol",
            ),
            None => Verdict::abstain("V2-tight", "no fit available"),
        });
    }
    if let Some(f) = fit {
        report.fit_times = Some((trace.t[f.start], trace.t[f.end - 1]));
    }
    report.fit = fit;

    let (d, thr) = match c.regime {
        EnergyRegime::Lo => (&trace.d0, 0.5),
        EnergyRegime::Hi => (&trace.d1, 0.5),
        EnergyRegime::Between => (
            &trace.d_between,
            c.between.map(|b| b.threshold).unwrap_or(f64::NAN),
        ),
    };
    let d_max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut v3 = Verdict::from_margin(
        "V3",
        thr - d_max,
        d_max,
        thr,
        "barrier latch never tripped; fitted = max D",
    );
    v3.status = if trace.barrier_held() {
        Status::Pass
    } else {
        Status::Fail
    };
    report.verdicts.push(v3);

    let tauber: Vec<f64> = trace
        .dalpha_sq
        .iter()
        .zip(trace.eta_tilde())
        .map(|(a, b)| a + b)
        .collect();
    let check = match regime {
        DecayRegime::Power => RateCheck::PowerAtMost(-alpha + opts.tauber_tol),
        DecayRegime::Exponential => RateCheck::ExpPositive,
    };
    let (v4, _) = rate_verdict(
        "V4",
        &tauber,
        &trace.t,
        opts.window,
        opts.floor,
        check,
        "tail of |D^alpha u|^2_{H^(s-1)} + |u - u_inf|^2_{H^(s+1)} (T = inf claim, checked on this horizon)",
    );
    report.verdicts.push(v4);
    report
}

/// Solves and monitors one trajectory, then applies [`verify_decay_theorem`].
pub fn run_and_verify(
    problem: &Problem,
    u_inf: &[f64],
    transient: &TransientOptions,
    monitor: &MonitorOptions,
    decay: &DecayOptions,
) -> Result<(SolutionHistory, MonitorTrace, DecayReport)> {
    let history = solve_transient(problem, transient)?;
    let trace = monitor_energy(&history, problem, u_inf, monitor)?;
    let report = verify_decay_theorem(&trace, decay);
    Ok((history, trace, report))
}

#[derive(Clone, Debug)]
pub struct ProbeRow {
    pub radius: f64,
    pub status: Status,
    pub note: String,
    pub report: Option<DecayReport>,
}

/// Radius → decay verdict table of a smallness probe.
#[derive(Clone, Debug)]
pub struct SmallnessTable {
    pub rows: Vec<ProbeRow>,
}

impl SmallnessTable {
    /// Largest tested radius whose verdicts all passed.
    pub fn largest_passing(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.status == Status::Pass)
            .map(|r| r.radius)
            .fold(None, |m, r| Some(m.map_or(r, |v: f64| v.max(r))))
    }

    /// No radius fails while a larger one passes.
    pub fn prefix_monotone(&self) -> bool {
        let mut rows: Vec<&ProbeRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.radius.total_cmp(&b.radius));
        let mut failed = false;
        for r in rows {
            match r.status {
                Status::Pass if failed => return false,
                Status::Pass => {}
                _ => failed = true,
            }
        }
        true
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("smallness probe: radius -> decay verdict\n");
        for r in &self.rows {
            out += &format!(
                "  {:>10.4}  {:<8} {}\n",
                r.radius,
                r.status.as_str(),
                r.note
            );
        }
        match self.largest_passing() {
            Some(r) => out += &format!("largest passing radius: {r}\n"),
            None => out += "largest passing radius: none\n",
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["radius", "status", "note"])?;
        for r in &self.rows {
            wtr.write_record([
                format!("{:e}", r.radius),
                r.status.as_str().into(),
                r.note.clone(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ProbeOptions {
    pub transient: TransientOptions,
    pub monitor: MonitorOptions,
    pub decay: DecayOptions,
}

/// Runs from u∞ + radius ĝ, with ĝ = profile scaled to unit H^s norm, for each radius.
/// Solver failure at a radius is recorded as a fail.
pub fn smallness_probe(
    problem: &Problem,
    u_inf: &[f64],
    profile: &Field,
    radii: &[f64],
    opts: &ProbeOptions,
) -> Result<SmallnessTable> {
    let s = opts.monitor.regime.s();
    let norm = norm_hs(&problem.grid, profile, s, problem.bc_kind())?;
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Problem(
            "probe profile has zero or non-finite norm".into(),
        ));
    }
    let rows = radii
        .par_iter()
        .map(|&radius| {
            let mut pr = problem.clone();
            pr.u0 = Field(
                u_inf
                    .iter()
                    .zip(profile.iter())
                    .map(|(a, g)| a + radius * g / norm)
                    .collect(),
            );
            match run_and_verify(&pr, u_inf, &opts.transient, &opts.monitor, &opts.decay) {
                Ok((_, _, rep)) => ProbeRow {
                    radius,
                    status: rep.status(),
                    note: rep
                        .verdicts
                        .iter()
                        .filter(|v| v.status != Status::Pass)
                        .map(|v| format!("{} {}", v.id, v.status.as_str()))
                        .collect::<Vec<_>>()
                        .join(", "),
                    report: Some(rep),
                },
                Err(e) => ProbeRow {
                    radius,
                    status: Status::Fail,
                    note: e.to_string(),
                    report: None,
                },
            }
        })
        .collect();
    Ok(SmallnessTable { rows })
}

/// Declared decay class of ‖r_t‖²_{L²}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RtDecay {
    Zero,
    Power { beta: f64 },
    Exponential { rate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtOptions {
    /// Start of the measured decay; defaults to the first positive node.
    pub t0: Option<f64>,
    pub rt: RtDecay,
    pub window: Window,
    pub floor: f64,
    pub slope_tol: f64,
    /// Clause (a) requires the final ‖u_t‖_{H¹} below this fraction of its value at t0.
    pub tail_factor: f64,
    /// Local exponent γ in ‖u_t(t)‖ ~ t^{−γ} near t = 0 above which u_t(0) is taken as not finite.
    pub singular_exponent: f64,
}

impl Default for UtOptions {
    fn default() -> Self {
        Self {
            t0: None,
            rt: RtDecay::Zero,
            window: Window::default(),
            floor: DEFAULT_FLOOR,
            slope_tol: 0.2,
            tail_factor: 1e-3,
            singular_exponent: 0.1,
        }
    }
}

/// Clauses (a)–(c) of the u_t decay theorem for a computed trajectory.
pub fn verify_ut_theorem(history: &SolutionHistory, opts: &UtOptions) -> Result<DecayReport> {
    let alpha = history.alpha;
    let regime = DecayRegime::for_alpha(alpha);
    let mut report = DecayReport {
        title: "decay of u_t".into(),
        regime,
        alpha,
        fit: None,
        window: opts.window,
        fit_times: None,
        verdicts: vec![],
    };
    let ids = ["a", "b", "c"];
    if history.len() < 4 {
        for id in ids {
            report
                .verdicts
                .push(Verdict::abstain(id, "trajectory too short"));
        }
        return Ok(report);
    }
    let d = time_derivative_series(history)?;
    let t = &d.t;
    let (n1, n2) = (d.ut_l2_sq[1].sqrt(), d.ut_l2_sq[2].sqrt());
    let gamma0 = if n1 == 0.0 && n2 == 0.0 {
        0.0
    } else {
        (n1 / n2).ln() / (t[2] / t[1]).ln()
    };
    if !(gamma0.is_finite() && gamma0 <= opts.singular_exponent) {
        let why = format!(
            "u_t(0) not finite in the discrete L2 norm (local exponent {gamma0:.3}); \
             cannot be bootstrapped from the PDE"
        );
        for id in ids {
            report.verdicts.push(Verdict::abstain(id, &why));
        }
        return Ok(report);
    }
    let t0 = opts.t0.unwrap_or(t[1]);
    let k0 = match t.iter().skip(1).position(|v| *v >= t0) {
        Some(k) => k + 1,
        None => {
            for id in ids {
                report
                    .verdicts
                    .push(Verdict::abstain(id, "t0 beyond the time horizon"));
            }
            return Ok(report);
        }
    };
    let t0 = t[k0];
    if !d.ut_h1_sq[k0].is_finite() {
        for id in ids {
            report
                .verdicts
                .push(Verdict::abstain(id, "u_t(t0) not finite in H1"));
        }
        return Ok(report);
    }
    let ts: Vec<f64> = t[k0..].iter().map(|v| v - t0).collect();
    let h2: Vec<f64> = d.ut_h2_sq[k0..].to_vec();

    let rt_to_zero = match opts.rt {
        RtDecay::Zero => true,
        RtDecay::Power { beta } => beta > 0.0,
        RtDecay::Exponential { rate } => rate > 0.0,
    };
    report.verdicts.push(if alpha < 1.0 {
        Verdict::abstain("a", "clause stated for alpha = 1")
    } else if !rt_to_zero {
        Verdict::abstain("a", "r_t not declared to decay")
    } else {
        let init = d.ut_h1_sq[k0].sqrt();
        let last = d.ut_h1_sq.last().copied().unwrap_or(f64::NAN).sqrt();
        let limit = opts.tail_factor * init;
        let margin = if limit > 0.0 {
            1.0 - last / limit
        } else if last == 0.0 {
            0.0
        } else {
            -1.0
        };
        Verdict::from_margin(
            "a",
            margin,
            if init > 0.0 { last / init } else { 0.0 },
            opts.tail_factor,
            "final |u_t|_H1 relative to its value at t0",
        )
    });

    let beta = match opts.rt {
        RtDecay::Power { beta } => beta,
        _ => f64::INFINITY,
    };
    let g = alpha.min(beta);
    let (vb, fit_b) = rate_verdict(
        "b",
        &h2,
        &ts,
        opts.window,
        opts.floor,
        RateCheck::PowerAtMost(-g + opts.slope_tol),
        "slope of |u_t|^2_H2 in t - t0 <= -min(alpha, beta) + tol",
    );
    report.verdicts.push(vb);

    let premise = match (regime, opts.rt) {
        (_, RtDecay::Zero) => true,
        (DecayRegime::Exponential, RtDecay::Exponential { rate }) => rate > 0.0,
        (DecayRegime::Power, RtDecay::Power { beta }) => beta >= alpha,
        (DecayRegime::Power, RtDecay::Exponential { rate }) => rate > 0.0,
        (DecayRegime::Exponential, RtDecay::Power { .. }) => false,
    };
    let (vc, fit_c) = if !premise {
        (
            Verdict::abstain(
                "c",
                "premise |r_t|^2 <= C_r Psi not met by the declared r_t class",
            ),
            None,
        )
    } else {
        match regime {
            DecayRegime::Exponential => rate_verdict(
                "c",
                &h2,
                &ts,
                opts.window,
                opts.floor,
                RateCheck::ExpPositive,
                "exponential rate of |u_t|^2_H2 in t - t0 > 0",
            ),
            DecayRegime::Power => rate_verdict(
                "c",
                &h2,
                &ts,
                opts.window,
                opts.floor,
                RateCheck::PowerAtMost(-alpha + opts.slope_tol),
                "slope of |u_t|^2_H2 in t - t0 <= -alpha + tol",
            ),
        }
    };
    report.verdicts.push(vc);
    let fit = match regime {
        DecayRegime::Exponential => fit_c,
        DecayRegime::Power => fit_b,
    };
    if let Some(f) = fit {
        report.fit_times = Some((t[k0 + f.start], t[k0 + f.end - 1]));
    }
    report.fit = fit;
    Ok(report)
}

/// r_t(t) = Σ_{j ≥ 1} χ_[j, j + j^{−4}](t).
pub fn spike_rt(t: f64) -> f64 {
    let j = t.floor();
    if j >= 1.0 && t <= j + j.powi(-4) {
        1.0
    } else {
        0.0
    }
}

/// The spike source: r_t ∈ L²(0, ∞; L²) while ‖r_t(t)‖ does not tend to 0.
pub fn rt_counterexample(t_end: f64) -> DecayReport {
    let n = t_end.floor() as usize;
    let integral: f64 = (1..=n)
        .map(|j| {
            let jf = j as f64;
            jf.powi(-4).min(t_end - jf)
        })
        .sum();
    let limit = std::f64::consts::PI.powi(4) / 90.0;
    let sup_tail = ((n / 2).max(1)..=n)
        .map(|j| spike_rt(j as f64))
        .fold(0.0f64, f64::max);
    DecayReport {
        title: "spike r_t: square integrable without pointwise decay".into(),
        regime: DecayRegime::Exponential,
        alpha: 1.0,
        fit: None,
        window: Window::All,
        fit_times: None,
        verdicts: vec![
            Verdict::from_margin(
                "a-integrability",
                limit - integral,
                integral,
                limit,
                "int_0^T |r_t|^2 dt bounded by zeta(4)",
            ),
            Verdict::from_margin(
                "a-sup-decay",
                -sup_tail,
                sup_tail,
                0.0,
                "sup over [T/2, T] of |r_t| does not tend to 0",
            ),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::{default_grading, TimeGrid};
    use crate::model::{manufactured_perturbation, Nonlinearity, Source, Summability};
    use crate::space::{BoundaryCondition, EllipticOp, Grid1D};
    use crate::steady::{solve_steady, SteadyOptions};
    use std::f64::consts::PI;

    fn linear(alpha: f64, nx: usize, tg: TimeGrid, amp: f64) -> Problem {
        let g = Grid1D::new(0.0, 1.0, nx).unwrap();
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        Problem::new(
            g,
            op,
            alpha,
            Field::zeros(&g),
            Field::constant(&g, -1.0),
            Nonlinearity::zero(),
            Source::steady(Field::zeros(&g)),
            Field::from_fn(&g, |x| amp * (PI * x).sin()),
            tg,
            Summability::default(),
        )
        .unwrap()
    }

    fn verify(pr: &Problem, u_inf: &[f64], decay: &DecayOptions) -> DecayReport {
        run_and_verify(
            pr,
            u_inf,
            &TransientOptions::default(),
            &MonitorOptions::default(),
            decay,
        )
        .unwrap()
        .2
    }

    fn long_grid(alpha: f64, t_end: f64) -> TimeGrid {
        TimeGrid::graded_then_uniform(t_end, 100, 1.0, 300, default_grading(alpha)).unwrap()
    }

    fn lin(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn power_fit_examples() {
        let t = lin(200, 1.0, 100.0);
        let y: Vec<f64> = t.iter().map(|v| 3.0 * v.powf(-0.5)).collect();
        let f = fit_power(&y, &t, Window::All).unwrap();
        assert!(
            (f.value - 0.5).abs() < 1e-10
                && (f.coef - 3.0).abs() < 1e-10
                && (f.r2 - 1.0).abs() < 1e-12
        );
        let y: Vec<f64> = t
            .iter()
            .map(|v| v.powf(-0.5) * (1.0 + 0.01 * v.sin()))
            .collect();
        let f = fit_power(&y, &t, Window::All).unwrap();
        assert!((0.48..=0.52).contains(&f.value));
        let f = fit_power(&vec![2.0; 200], &t, Window::All).unwrap();
        assert!(f.value.abs() < 1e-12);
        let mut bad = y.clone();
        bad[150] = -1.0;
        assert!(fit_power(&bad, &t, Window::All).is_none());
    }

    #[test]
    fn exponential_fit_examples() {
        let t = lin(101, 0.0, 2.0);
        let y: Vec<f64> = t.iter().map(|v| 2.0 * (-3.0 * v).exp()).collect();
        let f = fit_exponential(&y, &t, Window::All).unwrap();
        assert!((f.value - 3.0).abs() < 1e-10 && (f.coef - 2.0).abs() < 1e-10);
        let t = lin(201, 0.0, 12.0);
        let y: Vec<f64> = t.iter().map(|v| (-3.0 * v).exp() + 1e-14).collect();
        let f = fit_exponential(&y, &t, Window::All).unwrap();
        assert!(f.floor_truncated);
        assert!(t[f.end - 1] < 9.3);
        assert!((f.value - 3.0).abs() < 0.01);
    }

    #[test]
    fn last_decade_window() {
        let t = lin(1001, 0.0, 1000.0);
        let (s, e) = window_range(&t, Window::LastDecade { min_points: 10 });
        assert_eq!((s, e), (100, 1001));
        let t = vec![0.0, 1.0, 2.0, 3.0, 1000.0];
        let (s, e) = window_range(&t, Window::LastDecade { min_points: 3 });
        assert_eq!((s, e), (2, 5));
    }

    proptest::proptest! {
        #[test]
        fn power_fit_recovers_exact_data(g in 0.05f64..3.0, c in 0.01f64..100.0) {
            let t = lin(50, 1.0, 1e3);
            let y: Vec<f64> = t.iter().map(|v| c * v.powf(-g)).collect();
            let f = fit_power(&y, &t, Window::All).unwrap();
            proptest::prop_assert!((f.value - g).abs() < 1e-10);
            proptest::prop_assert!((f.coef / c - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn steady_start_is_vacuous_pass() {
        let mut pr = linear(
            0.5,
            41,
            TimeGrid::default_graded(5.0, 60, 0.5).unwrap(),
            0.0,
        );
        pr.u0 = Field::zeros(&pr.grid);
        let rep = verify(&pr, &Field::zeros(&pr.grid), &DecayOptions::default());
        assert!(rep.passed(), "{}", rep.to_text());
    }

    #[test]
    fn unforced_fractional_decays_like_two_alpha() {
        let alpha = 0.6;
        let pr = linear(alpha, 41, long_grid(alpha, 1e3), 0.1);
        let rep = verify(&pr, &Field::zeros(&pr.grid), &DecayOptions::default());
        assert!(rep.passed(), "{}", rep.to_text());
        let slope = rep.fit.unwrap().slope();
        assert!((slope + 2.0 * alpha).abs() < 0.15, "{slope}");
    }

    #[test]
    fn forced_fractional_saturates_the_rate() {
        let alpha = 0.5;
        let mut pr = linear(alpha, 41, long_grid(alpha, 1e3), 0.1);
        let prof =
            Source::unit_profile(&pr.grid, Field::from_fn(&pr.grid, |x| (PI * x).sin())).unwrap();
        pr.source.perturbation = crate::model::Perturbation::Power {
            amplitude: 0.1,
            exponent: alpha / 2.0,
            profile: prof,
        };
        let opts = DecayOptions {
            tight: true,
            ..Default::default()
        };
        let rep = verify(&pr, &Field::zeros(&pr.grid), &opts);
        assert!(rep.passed(), "{}", rep.to_text());
        assert!(rep.verdict("V2-tight").is_some());
    }

    #[test]
    fn heat_equation_rate() {
        let pr = linear(1.0, 201, TimeGrid::uniform(1.0, 2000).unwrap(), 0.1);
        let opts = DecayOptions {
            window: Window::All,
            ..Default::default()
        };
        let rep = verify(&pr, &Field::zeros(&pr.grid), &opts);
        assert!(rep.passed(), "{}", rep.to_text());
        let w = rep.fit.unwrap().value;
        let target = 2.0 * (PI * PI + 1.0);
        assert!((w / target - 1.0).abs() < 0.05, "{w}");
        let mut buf = vec![];
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("claim_id,status,margin,fitted_value,tolerance"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn ut_theorem_heat_rate() {
        let pr = linear(1.0, 201, TimeGrid::uniform(1.0, 2000).unwrap(), 0.1);
        let h = solve_transient(&pr, &TransientOptions::default()).unwrap();
        let opts = UtOptions {
            window: Window::All,
            ..Default::default()
        };
        let rep = verify_ut_theorem(&h, &opts).unwrap();
        assert!(rep.passed(), "{}", rep.to_text());
        let w = rep.fit.unwrap().value;
        assert!((w / (2.0 * (PI * PI + 1.0)) - 1.0).abs() < 0.1, "{w}");
    }

    #[test]
    fn ut_theorem_abstains_on_singular_start() {
        let alpha = 0.5;
        let pr = linear(
            alpha,
            41,
            TimeGrid::default_graded(5.0, 100, alpha).unwrap(),
            0.1,
        );
        let h = solve_transient(&pr, &TransientOptions::default()).unwrap();
        let rep = verify_ut_theorem(&h, &UtOptions::default()).unwrap();
        assert!(rep.verdicts.iter().all(|v| v.status == Status::Abstain));
        assert!(rep.verdicts[0].note.contains("cannot be bootstrapped"));
    }

    fn source_controlled(alpha: f64) -> (Problem, Vec<Field>, Field) {
        let g = Grid1D::new(0.0, 1.0, 81).unwrap();
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        let tg = TimeGrid::uniform(4.0, 400).unwrap();
        let u_inf = Field::from_fn(&g, |x| (PI * x).sin());
        let mut pr = Problem::new(
            g,
            op,
            alpha,
            Field::constant(&g, 1.0),
            Field::constant(&g, -1.0),
            Nonlinearity::cubic(),
            Source::steady(Field::zeros(&g)),
            Field::zeros(&g),
            tg.clone(),
            Summability::default(),
        )
        .unwrap();
        let targets: Vec<Field> = tg
            .nodes()
            .iter()
            .map(|t| Field(u_inf.iter().map(|s| (1.0 + (-t).exp()) * s).collect()))
            .collect();
        // r∞ from the steady state u∞ = sin(πx)
        let mut r_inf = pr.op.apply_homogeneous(&g, &u_inf);
        for i in 0..g.nx() {
            r_inf[i] += u_inf[i] + u_inf[i].powi(3);
        }
        r_inf[0] = 0.0;
        r_inf[g.nx() - 1] = 0.0;
        pr.source.r_inf = Field(r_inf);
        pr.source.perturbation = manufactured_perturbation(&pr, &targets).unwrap();
        pr.u0 = targets[0].clone();
        (pr, targets, u_inf)
    }

    #[test]
    fn source_controlled_fixture_reproduces_trajectory() {
        for alpha in [1.0, 0.5] {
            let (pr, targets, u_inf) = source_controlled(alpha);
            let steady = solve_steady(&pr, &SteadyOptions::default()).unwrap();
            assert!(steady.u_inf.sub(&u_inf).max_abs() < 1e-9);
            let h = solve_transient(&pr, &TransientOptions::default()).unwrap();
            for (u, phi) in h.states.iter().zip(&targets) {
                assert!(u.sub(phi).max_abs() < 1e-9);
            }
            let d = time_derivative_series(&h).unwrap();
            let dt = pr.tgrid.nodes()[1];
            for n in 1..h.len() {
                let t = d.t[n];
                let exact = ((-t + dt).exp() - (-t).exp()) / dt;
                for (a, s) in d.ut[n].iter().zip(u_inf.iter()) {
                    assert!((a + exact * s).abs() < 1e-8);
                }
            }
            let opts = UtOptions {
                rt: if alpha == 1.0 {
                    RtDecay::Exponential { rate: 2.0 }
                } else {
                    RtDecay::Power { beta: 2.0 }
                },
                ..Default::default()
            };
            let rep = verify_ut_theorem(&h, &opts).unwrap();
            assert_eq!(
                rep.verdict("c").unwrap().status,
                Status::Pass,
                "{}",
                rep.to_text()
            );
            if alpha == 1.0 {
                let w = rep.fit.unwrap().value;
                assert!((w - 2.0).abs() < 0.05, "{w}");
            }
        }
    }

    #[test]
    fn spike_source_counterexample() {
        let rep = rt_counterexample(1e4);
        assert_eq!(rep.verdict("a-integrability").unwrap().status, Status::Pass);
        assert_eq!(rep.verdict("a-sup-decay").unwrap().status, Status::Fail);
        assert_eq!(spike_rt(3.0 + 0.5 * 3f64.powi(-4)), 1.0);
        assert_eq!(spike_rt(3.5), 0.0);
    }

    fn allen_cahn(alpha: f64) -> (Problem, Field) {
        let g = Grid1D::new(0.0, 1.0, 41).unwrap();
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        let pr = Problem::new(
            g,
            op,
            alpha,
            Field::constant(&g, 1.0),
            Field::constant(&g, -1.0),
            Nonlinearity::cubic(),
            Source::steady(Field::from_fn(&g, |x| (PI * x).sin())),
            Field::zeros(&g),
            TimeGrid::default_graded(10.0, 80, alpha).unwrap(),
            Summability::default(),
        )
        .unwrap();
        let u_inf = solve_steady(&pr, &SteadyOptions::default()).unwrap().u_inf;
        (pr, u_inf)
    }

    #[test]
    fn smallness_probe_allen_cahn() {
        let (pr, u_inf) = allen_cahn(0.5);
        let prof = Field::from_fn(&pr.grid, |x| (2.0 * PI * x).sin());
        let opts = ProbeOptions {
            decay: DecayOptions {
                window: Window::All,
                ..Default::default()
            },
            ..Default::default()
        };
        let tab = smallness_probe(&pr, &u_inf, &prof, &[0.0, 0.1, 0.5, 1.0, 2.0], &opts).unwrap();
        assert_eq!(tab.rows[0].status, Status::Pass, "{}", tab.to_text());
        assert!(tab.prefix_monotone(), "{}", tab.to_text());
        assert!(tab.largest_passing().unwrap() >= 0.1, "{}", tab.to_text());
    }

    #[test]
    fn no_smallness_regime_passes_all_radii() {
        let alpha = 0.5;
        let g = Grid1D::new(0.0, 1.0, 41).unwrap();
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        let pr = Problem::new(
            g,
            op,
            alpha,
            Field::constant(&g, 1.0),
            Field::zeros(&g),
            Nonlinearity::cubic_plus_linear(),
            Source::steady(Field::zeros(&g)),
            Field::zeros(&g),
            TimeGrid::default_graded(10.0, 80, alpha).unwrap(),
            Summability::default(),
        )
        .unwrap()
        .normalized();
        let opts = ProbeOptions {
            monitor: MonitorOptions {
                regime: EnergyRegime::Between,
                ..Default::default()
            },
            decay: DecayOptions {
                window: Window::All,
                ..Default::default()
            },
            ..Default::default()
        };
        let prof = Field::from_fn(&g, |x| (PI * x).sin());
        let tab = smallness_probe(&pr, &Field::zeros(&g), &prof, &[0.5, 1.0, 2.0], &opts).unwrap();
        assert!(
            tab.rows.iter().all(|r| r.status == Status::Pass),
            "{}",
            tab.to_text()
        );
    }
}
