//! Command-line front end: scenario runs, verification reports and artifact output.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::decayfit::{
    smallness_probe, verify_decay_theorem, verify_ut_theorem, DecayRegime, DecayReport,
    ProbeOptions, SmallnessTable, Status, Verdict, Window,
};
use crate::error::{Error, Result};
use crate::evolve::{
    monitor_energy, solve_transient, EnergyRegime, MonitorTrace, SolutionHistory, TransientOptions,
};
use crate::fracops::TimeGrid;
use crate::gronwall::{
    check_majorization, exp_decay_bound, power_decay_bound, solve_fractional_ode, Forcing,
    MajorantSpec,
};
use crate::model::{check_between_states, check_pinfty};
use crate::plots::{decay_plot, Series};
use crate::scenario::{build, random_profile, InitialMode, Scenario, ScenarioConfig, TheoremId};
use crate::space::{norm_h1_sq, norm_h2_sq, norm_l2_sq};
use crate::specialfn::{logspace, ml_bound_suite, BoundReport};

#[derive(Debug, Parser)]
#[command(
    name = "subdiff",
    version,
    about = "Subdiffusion reaction-diffusion laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the steady state and write steady.csv.
    Steady(RunArgs),
    /// Integrate in time; writes norms, monitor series and plots.
    Evolve(RunArgs),
    /// Integrate and write verdict reports for the configured theorems.
    Verify(RunArgs),
    /// Run `verify` for each alpha of a list.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated alphas (defaults to sweep.alphas of the scenario).
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
    },
    /// Tabulate the fractional Gronwall majorant against the L1 solution for several forcings.
    GronwallDemo(GronwallArgs),
    /// Evaluate the Mittag-Leffler inequality suite on a log grid.
    MlfTable(MlfArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Override a configuration key, e.g. --set time.nt=400.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Seed for randomized profiles.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Exit with status 1 when a verdict fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GronwallArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub phi0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 400)]
    pub nt: usize,
    #[arg(long, default_value = "runs/gronwall")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MlfArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.4, 0.5, 0.7, 0.9])]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub x_min: f64,
    #[arg(long, default_value_t = 1e4)]
    pub x_max: f64,
    #[arg(long, default_value = "runs/mlf")]
    pub out: PathBuf,
}

/// Failure classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Schema(Error),
    #[error("condition check failed: {0}")]
    Condition(Error),
    #[error("solver failed at step {step}: {source}")]
    Solver { step: usize, source: Error },
    #[error("verdict failed: {0}")]
    Verdict(String),
    #[error("{0}")]
    Other(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Condition(_) => 3,
            CliError::Solver { .. } => 4,
            CliError::Verdict(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Expression { .. } => CliError::Schema(e),
            Error::Ellipticity(_)
            | Error::Domain(_)
            | Error::Problem(_)
            | Error::Precondition(_)
            | Error::TimeGrid(_)
            | Error::SpaceGrid(_) => CliError::Condition(e),
            Error::BlowUp { step, .. } => CliError::Solver { step, source: e },
            Error::SingularJacobian { .. } | Error::NewtonStagnation { .. } => {
                CliError::Solver { step: 0, source: e }
            }
            other => CliError::Other(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Steady(a) => {
            let cfg = load_config(a)?;
            let sc = build(&cfg)?;
            let dir = prepare_dir(&a.out, &cfg)?;
            write_steady(&dir, &sc)?;
            println!("steady state written to {}", dir.display());
            Ok(())
        }
        Command::Evolve(a) => {
            let cfg = load_config(a)?;
            let dir = prepare_dir(&a.out, &cfg)?;
            let out = evolve_run(&cfg, &dir)?;
            println!(
                "{} steps written to {}",
                out.history.len() - 1,
                dir.display()
            );
            Ok(())
        }
        Command::Verify(a) => {
            let cfg = load_config(a)?;
            let dir = prepare_dir(&a.out, &cfg)?;
            let out = verify_run(&cfg, &dir)?;
            print!("{}", out.text);
            strict_check(a.strict, &out)
        }
        Command::Sweep { run, alphas } => {
            let cfg = load_config(run)?;
            let list = if alphas.is_empty() {
                cfg.sweep.alphas.clone()
            } else {
                alphas.clone()
            };
            if list.is_empty() {
                return Err(CliError::Schema(Error::Config {
                    path: "sweep.alphas".into(),
                    message: "no alphas given".into(),
                }));
            }
            let base = prepare_dir(&run.out, &cfg)?;
            let results: Vec<CliResult<(f64, VerifyOutput)>> = list
                .par_iter()
                .map(|&alpha| {
                    let mut c = cfg.clone();
                    c.alpha = alpha;
                    let dir = base.join(format!("alpha_{alpha}"));
                    fs::create_dir_all(&dir).map_err(Error::from)?;
                    Ok((alpha, verify_run(&c, &dir)?))
                })
                .collect();
            let mut wtr = csv::Writer::from_path(base.join("sweep.csv")).map_err(Error::from)?;
            wtr.write_record(["alpha", "status", "fitted_value", "r2"])
                .map_err(Error::from)?;
            let mut outs = vec![];
            for r in results {
                let (alpha, out) = r?;
                let (fitted, r2) = out
                    .decay
                    .as_ref()
                    .and_then(|d| d.fit)
                    .map(|f| (f.value, f.r2))
                    .unwrap_or((f64::NAN, f64::NAN));
                wtr.write_record([
                    alpha.to_string(),
                    out.status().as_str().to_string(),
                    format!("{fitted:e}"),
                    format!("{r2:e}"),
                ])
                .map_err(Error::from)?;
                println!("alpha = {alpha}: {}", out.status().as_str());
                outs.push(out);
            }
            wtr.flush().map_err(Error::from)?;
            for out in &outs {
                strict_check(run.strict, out)?;
            }
            Ok(())
        }
        Command::GronwallDemo(g) => {
            let text = gronwall_demo(g)?;
            print!("{text}");
            Ok(())
        }
        Command::MlfTable(m) => {
            let rep = mlf_table(m)?;
            let bad = rep.violations().count();
            println!(
                "{} inequality evaluations, {} violations; written to {}",
                rep.rows.len(),
                bad,
                m.out.join("mlf_bounds.csv").display()
            );
            Ok(())
        }
    }
}

fn strict_check(strict: bool, out: &VerifyOutput) -> CliResult<()> {
    if strict && out.status() == Status::Fail {
        return Err(CliError::Verdict(format!(
            "scenario `{}` has failing verdicts",
            out.name
        )));
    }
    Ok(())
}

/// Loads the scenario named by `--config` or `--scenario` with overrides applied.
pub fn load_config(a: &RunArgs) -> Result<ScenarioConfig> {
    let mut sets = a.sets.clone();
    if let Some(seed) = a.seed {
        sets.push(format!("seed={seed}"));
    }
    match (&a.config, &a.scenario) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            ScenarioConfig::from_toml(&text, &sets)
        }
        (None, Some(name)) => ScenarioConfig::builtin(name, &sets),
        (None, None) => Err(Error::Config {
            path: "--config".into(),
            message: "give --config FILE or --scenario NAME".into(),
        }),
    }
}

/// Creates the run directory and writes the config echo.
fn prepare_dir(out: &Path, cfg: &ScenarioConfig) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    Ok(out.to_path_buf())
}

fn write_steady(dir: &Path, sc: &Scenario) -> Result<()> {
    let f = BufWriter::new(File::create(dir.join("steady.csv"))?);
    sc.steady.write_csv(&sc.problem.grid, f)
}

/// Writes `step,t,norm_L2_sq,norm_H1_sq,norm_H2_sq,max_abs_diff,newton_iterations` of u - u∞.
pub fn write_norms_csv<W: Write>(history: &SolutionHistory, u_inf: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "step",
        "t",
        "norm_L2_sq",
        "norm_H1_sq",
        "norm_H2_sq",
        "max_abs_diff",
        "newton_iterations",
    ])?;
    let g = &history.grid;
    for n in 0..history.len() {
        let d = history.usim(n, u_inf);
        wtr.write_record([
            n.to_string(),
            format!("{:.17e}", history.t(n)),
            format!("{:.17e}", norm_l2_sq(g, &d)),
            format!("{:.17e}", norm_h1_sq(g, &d)),
            format!("{:.17e}", norm_h2_sq(g, &d)),
            format!("{:.17e}", d.max_abs()),
            history.newton_iterations[n].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Artifacts of an `evolve` run.
pub struct EvolveOutput {
    pub scenario: Scenario,
    pub history: SolutionHistory,
    pub trace: Option<MonitorTrace>,
    pub monitor_error: Option<String>,
}

fn solve(sc: &Scenario) -> CliResult<SolutionHistory> {
    solve_transient(&sc.problem, &TransientOptions::default()).map_err(|e| {
        let step = e.step;
        CliError::Solver {
            step,
            source: e.source,
        }
    })
}

/// Builds, integrates and monitors; writes steady.csv, norms.csv, monitor.csv and plots.
pub fn evolve_run(cfg: &ScenarioConfig, dir: &Path) -> CliResult<EvolveOutput> {
    let sc = build(cfg)?;
    write_steady(dir, &sc)?;
    let history = solve(&sc)?;
    let u_inf = sc.u_inf().clone();
    write_norms_csv(
        &history,
        &u_inf,
        BufWriter::new(File::create(dir.join("norms.csv")).map_err(Error::from)?),
    )?;
    let (trace, monitor_error) =
        match monitor_energy(&history, &sc.problem, &u_inf, &cfg.monitor_options()) {
            Ok(tr) => {
                tr.write_csv(BufWriter::new(
                    File::create(dir.join("monitor.csv")).map_err(Error::from)?,
                ))?;
                (Some(tr), None)
            }
            Err(e) => (None, Some(e.to_string())),
        };
    write_plots(dir, &history, &u_inf, trace.as_ref())?;
    Ok(EvolveOutput {
        scenario: sc,
        history,
        trace,
        monitor_error,
    })
}

fn write_plots(
    dir: &Path,
    history: &SolutionHistory,
    u_inf: &[f64],
    trace: Option<&MonitorTrace>,
) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let g = &history.grid;
    let t = history.times();
    let (mut l2, mut h1) = (vec![], vec![]);
    for n in 0..history.len() {
        let d = history.usim(n, u_inf);
        l2.push(norm_l2_sq(g, &d));
        h1.push(norm_h1_sq(g, &d));
    }
    let mut series = vec![
        Series {
            label: "|u - u_inf|^2 L2",
            t,
            y: &l2,
        },
        Series {
            label: "|u - u_inf|^2 H1",
            t,
            y: &h1,
        },
    ];
    let tauber: Vec<f64>;
    if let Some(tr) = trace {
        tauber = tr
            .dalpha_sq
            .iter()
            .zip(tr.eta_tilde())
            .map(|(a, b)| a + b)
            .collect();
        series.push(Series {
            label: "Caputo + higher norm",
            t,
            y: &tauber,
        });
    }
    // a trajectory sitting at the steady state has nothing to plot
    match decay_plot(
        &plots.join("norms.svg"),
        "decay of u - u_inf",
        &series,
        history.alpha,
    ) {
        Ok(()) | Err(Error::Plot(_)) => Ok(()),
        Err(e) => Err(e),
    }
}

/// Artifacts and verdicts of a `verify` run.
pub struct VerifyOutput {
    pub name: String,
    pub evolve: EvolveOutput,
    pub conditions: DecayReport,
    pub decay: Option<DecayReport>,
    pub ut: Option<DecayReport>,
    pub smallness: Option<SmallnessTable>,
    pub text: String,
}

impl VerifyOutput {
    pub fn reports(&self) -> Vec<(&'static str, &DecayReport)> {
        let mut v = vec![("cond", &self.conditions)];
        if let Some(d) = &self.decay {
            v.push(("decay", d));
        }
        if let Some(d) = &self.ut {
            v.push(("ut", d));
        }
        v
    }

    pub fn status(&self) -> Status {
        let mut any_fail = self.reports().iter().any(|(_, r)| r.any_failed());
        if let Some(s) = &self.smallness {
            any_fail |= !s.prefix_monotone();
        }
        if any_fail {
            Status::Fail
        } else if self.reports().iter().all(|(_, r)| r.passed()) {
            Status::Pass
        } else {
            Status::Abstain
        }
    }
}

/// Sign-condition verdicts: inf p∞ and, in the between-states regime, the per-step minimum
/// of p f'(θu + (1-θ)u∞) - q.
pub fn condition_report(
    sc: &Scenario,
    history: &SolutionHistory,
    regime: EnergyRegime,
    theta_count: usize,
) -> DecayReport {
    let pr = &sc.problem;
    let u_inf = sc.u_inf();
    let mut verdicts = vec![];
    let c = check_pinfty(&pr.p, &pr.q, &pr.nl, u_inf);
    verdicts.push(Verdict {
        id: "cond-pinfty".into(),
        status: if c > 0.0 || regime == EnergyRegime::Between {
            Status::Pass
        } else {
            Status::Fail
        },
        margin: c,
        fitted: c,
        tolerance: 0.0,
        note: "inf of p f'(u_inf) - q".into(),
    });
    if regime == EnergyRegime::Between {
        let worst = history
            .states
            .iter()
            .map(|u| {
                check_between_states(
                    &pr.p,
                    &pr.q,
                    &pr.nl,
                    std::slice::from_ref(u),
                    u_inf,
                    theta_count,
                )
            })
            .fold(f64::INFINITY, f64::min);
        verdicts.push(Verdict {
            id: "cond-between-states".into(),
            status: if worst > 0.0 {
                Status::Pass
            } else {
                Status::Fail
            },
            margin: worst,
            fitted: worst,
            tolerance: 0.0,
            note: "min over steps, nodes and theta of p f'(between u and u_inf) - q".into(),
        });
    }
    DecayReport {
        title: "sign conditions".into(),
        regime: DecayRegime::for_alpha(pr.alpha),
        alpha: pr.alpha,
        fit: None,
        window: Window::All,
        fit_times: None,
        verdicts,
    }
}

/// `evolve` followed by the configured verdicts; writes report.txt and report.csv.
pub fn verify_run(cfg: &ScenarioConfig, dir: &Path) -> CliResult<VerifyOutput> {
    let ev = evolve_run(cfg, dir)?;
    let mopts = cfg.monitor_options();
    let conditions = condition_report(&ev.scenario, &ev.history, mopts.regime, mopts.theta_count);
    let mut text = format!("scenario: {} (alpha = {})\n\n", cfg.name, cfg.alpha);
    text += &conditions.to_text();
    let theorems = &cfg.verify.theorems;
    let decay = if theorems.contains(&TheoremId::Decay) {
        let rep = match &ev.trace {
            Some(tr) => verify_decay_theorem(tr, &cfg.decay_options()),
            None => {
                let why = format!(
                    "monitor unavailable: {}",
                    ev.monitor_error.as_deref().unwrap_or("unknown")
                );
                DecayReport {
                    title: "decay of u - u_inf".into(),
                    regime: DecayRegime::for_alpha(cfg.alpha),
                    alpha: cfg.alpha,
                    fit: None,
                    window: cfg.decay_options().window,
                    fit_times: None,
                    verdicts: ["V1", "V2", "V3", "V4"]
                        .iter()
                        .map(|id| Verdict {
                            id: id.to_string(),
                            status: Status::Abstain,
                            margin: f64::NAN,
                            fitted: f64::NAN,
                            tolerance: f64::NAN,
                            note: why.clone(),
                        })
                        .collect(),
                }
            }
        };
        text += "\n";
        text += &rep.to_text();
        if let Some(tr) = &ev.trace {
            text += "constants:\n";
            for (k, v) in tr.constants.describe() {
                text += &format!("  {k} = {v:.6e}\n");
            }
        }
        Some(rep)
    } else {
        None
    };
    let ut = if theorems.contains(&TheoremId::Ut) {
        let rep = verify_ut_theorem(&ev.history, &cfg.ut_options())?;
        text += "\n";
        text += &rep.to_text();
        Some(rep)
    } else {
        None
    };
    let smallness = if theorems.contains(&TheoremId::Smallness) {
        let grid = &ev.scenario.problem.grid;
        let mut profile = cfg.initial.profile.field(grid, "initial.profile")?;
        if cfg.initial.mode == InitialMode::Random || profile.max_abs() == 0.0 {
            profile = random_profile(grid, cfg.seed);
        }
        let opts = ProbeOptions {
            monitor: mopts.clone(),
            decay: cfg.decay_options(),
            ..Default::default()
        };
        let tab = smallness_probe(
            &ev.scenario.problem,
            ev.scenario.u_inf(),
            &profile,
            &cfg.verify.radii,
            &opts,
        )?;
        tab.write_csv(BufWriter::new(
            File::create(dir.join("smallness.csv")).map_err(Error::from)?,
        ))?;
        text += "\n";
        text += &tab.to_text();
        text += &format!("prefix monotone: {}\n", tab.prefix_monotone());
        Some(tab)
    } else {
        None
    };
    let out = VerifyOutput {
        name: cfg.name.clone(),
        evolve: ev,
        conditions,
        decay,
        ut,
        smallness,
        text,
    };
    let mut text = out.text.clone();
    text += &format!("\noverall: {}\n", out.status().as_str());
    fs::write(dir.join("report.txt"), &text).map_err(Error::from)?;
    write_report_csv(&out, dir.join("report.csv"))?;
    Ok(VerifyOutput { text, ..out })
}

fn write_report_csv(out: &VerifyOutput, path: PathBuf) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["claim_id", "status", "margin", "fitted_value", "tolerance"])?;
    for (prefix, rep) in out.reports() {
        for v in &rep.verdicts {
            wtr.write_record([
                format!("{prefix}.{}", v.id),
                v.status.as_str().to_string(),
                format!("{:e}", v.margin),
                format!("{:e}", v.fitted),
                format!("{:e}", v.tolerance),
            ])?;
        }
    }
    if let Some(tab) = &out.smallness {
        for r in &tab.rows {
            wtr.write_record([
                format!("smallness.radius_{}", r.radius),
                r.status.as_str().to_string(),
                "NaN".into(),
                format!("{:e}", r.radius),
                "NaN".into(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// ν-majorant against the L1 solution of the equality for the standard forcing classes.
pub fn gronwall_demo(g: &GronwallArgs) -> CliResult<String> {
    fs::create_dir_all(&g.out).map_err(Error::from)?;
    let tgrid = TimeGrid::default_graded(g.t_end, g.nt, g.alpha)?;
    let mut classes: Vec<(&str, Forcing)> = vec![
        ("zero", Forcing::Zero),
        ("constant", Forcing::Constant { phi0: g.phi0 }),
        (
            "exponential",
            Forcing::Exponential {
                phi0: g.phi0,
                c1: 2.0 * g.c0,
            },
        ),
    ];
    if g.alpha < 1.0 {
        classes.push(("power", Forcing::Power { phi0: g.phi0 }));
    }
    let mut text = format!(
        "fractional Gronwall comparison: alpha = {}, c0 = {}, eta0 = {}, N = {}\n",
        g.alpha, g.c0, g.eta0, g.nt
    );
    for (name, phi) in classes {
        let spec = MajorantSpec::new(g.alpha, g.c0, g.eta0, phi.clone())?;
        let eta = solve_fractional_ode(&spec, &tgrid)?;
        let rep = check_majorization(&eta, &spec, &tgrid)?;
        rep.write_csv(BufWriter::new(
            File::create(g.out.join(format!("gronwall_{name}.csv"))).map_err(Error::from)?,
        ))?;
        text += &format!(
            "  {name:<12} majorized: {:<5} worst gap {:.3e} at t = {:.4e}, sup |eta - nu| = {:.3e}\n",
            rep.pass,
            rep.worst_gap,
            rep.t[rep.worst_index],
            rep.sup_gap()
        );
        match phi {
            Forcing::Power { .. } => {
                let p = power_decay_bound(&spec, &tgrid)?;
                text += &format!(
                    "  {:<12} nu <= K t^-alpha: {} (K = {:.4e}, worst ratio {:.4}); envelope {}\n",
                    "", p.pass, p.k, p.worst_ratio, p.envelope_ok
                );
            }
            Forcing::Exponential { .. } if g.alpha >= 1.0 => {
                let e = exp_decay_bound(&spec, &tgrid)?;
                text += &format!(
                    "  {:<12} nu <= C e^(-c0 t): {} (C = {:.4e}, worst ratio {:.4})\n",
                    "", e.pass, e.coef, e.worst_ratio
                );
            }
            Forcing::Constant { phi0 } => {
                let cap = g.eta0.max(0.0) + phi0 / g.c0;
                let ok = eta.iter().all(|v| *v <= cap + 1e-8);
                text += &format!("  {:<12} eta <= eta0 + phi0/c0 = {cap:.4e}: {ok}\n", "");
            }
            _ => {}
        }
    }
    fs::write(g.out.join("gronwall.txt"), &text).map_err(Error::from)?;
    Ok(text)
}

/// Mittag-Leffler inequality suite for each alpha; writes mlf_bounds.csv.
pub fn mlf_table(m: &MlfArgs) -> CliResult<BoundReport> {
    fs::create_dir_all(&m.out).map_err(Error::from)?;
    let xs = logspace(m.x_min, m.x_max, m.points);
    let reports: Vec<Result<BoundReport>> = m
        .alphas
        .par_iter()
        .map(|a| ml_bound_suite(*a, &xs))
        .collect();
    let mut all = BoundReport::default();
    for r in reports {
        all.rows.extend(r?.rows);
    }
    all.write_csv(BufWriter::new(
        File::create(m.out.join("mlf_bounds.csv")).map_err(Error::from)?,
    ))?;
    Ok(all)
}
