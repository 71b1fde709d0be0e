//! Fractional Gronwall comparison: the majorant ν, its decay corollaries, the barrier
//! implication and the two-function decay lemma.

use std::io::Write;

use rayon::prelude::*;

use crate::decayfit::{fit_power, Window};
use crate::error::{Error, Result};
use crate::fracops::{
    caputo_series, l1_weights, rl_convolve, CaputoStepper, HistoryMode, MeshKind, TimeGrid,
};
use crate::quad::integrate;
use crate::specialfn::{c_alpha_sup, gamma_fn, ln_gamma, ml_neg};

/// Right-hand side φ of ∂^α η + c₀ η ≤ φ.
#[derive(Clone, Debug, PartialEq)]
pub enum Forcing {
    Zero,
    /// φ ≡ φ₀.
    Constant {
        phi0: f64,
    },
    /// φ(t) = φ₀ t^{−α}.
    Power {
        phi0: f64,
    },
    /// φ(t) = φ₀ e^{−c₁ t}.
    Exponential {
        phi0: f64,
        c1: f64,
    },
    /// Values at the time-grid nodes, interpolated linearly in between.
    Series(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MajorantSpec {
    pub alpha: f64,
    pub c0: f64,
    pub eta0: f64,
    pub phi: Forcing,
}

impl MajorantSpec {
    pub fn new(alpha: f64, c0: f64, eta0: f64, phi: Forcing) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0,1], got {alpha}"
            )));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::Domain(format!("c0 must be positive, got {c0}")));
        }
        if !(eta0 >= 0.0 && eta0.is_finite()) {
            return Err(Error::Domain(format!(
                "eta0 must be nonnegative, got {eta0}"
            )));
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let ok = match &phi {
            Forcing::Zero => true,
            Forcing::Constant { phi0 } | Forcing::Power { phi0 } => nonneg(*phi0),
            Forcing::Exponential { phi0, c1 } => nonneg(*phi0) && c1.is_finite(),
            Forcing::Series(v) => v.iter().all(|x| nonneg(*x)),
        };
        if !ok {
            return Err(Error::Domain(
                "forcing must be finite and nonnegative".into(),
            ));
        }
        if alpha == 1.0 && matches!(phi, Forcing::Power { phi0 } if phi0 > 0.0) {
            return Err(Error::Domain(
                "power forcing t^{-1} is not integrable at t = 0".into(),
            ));
        }
        Ok(Self {
            alpha,
            c0,
            eta0,
            phi,
        })
    }

    /// φ at the grid nodes (φ(0) = ∞ for nonzero power forcing).
    pub fn phi_values(&self, tgrid: &TimeGrid) -> Result<Vec<f64>> {
        let t = tgrid.nodes();
        Ok(match &self.phi {
            Forcing::Zero => vec![0.0; t.len()],
            Forcing::Constant { phi0 } => vec![*phi0; t.len()],
            Forcing::Power { phi0 } => t
                .iter()
                .map(|s| {
                    if *phi0 == 0.0 {
                        0.0
                    } else {
                        phi0 * s.powf(-self.alpha)
                    }
                })
                .collect(),
            Forcing::Exponential { phi0, c1 } => t.iter().map(|s| phi0 * (-c1 * s).exp()).collect(),
            Forcing::Series(v) => {
                if v.len() != t.len() {
                    return Err(Error::Precondition(format!(
                        "forcing series has {} values for {} nodes",
                        v.len(),
                        t.len()
                    )));
                }
                v.clone()
            }
        })
    }
}

/// Primitives of the resolvent kernel K(x) = x^{α−1}E_{α,α}(−c₀x^α):
/// K₁(x) = ∫₀ˣ K and K₂(x) = ∫₀ˣ K(y)(x − y) dy.
#[derive(Clone, Copy)]
struct Resolvent {
    alpha: f64,
    c0: f64,
}

impl Resolvent {
    fn k1(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.alpha == 1.0 {
            -(-self.c0 * x).exp_m1() / self.c0
        } else {
            let xa = x.powf(self.alpha);
            xa * ml_neg(self.alpha, self.alpha + 1.0, self.c0 * xa)
        }
    }

    fn k2(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.alpha == 1.0 {
            let c = self.c0;
            (c * x + (-c * x).exp_m1()) / (c * c)
        } else {
            let xa = x.powf(self.alpha);
            xa * x * ml_neg(self.alpha, self.alpha + 2.0, self.c0 * xa)
        }
    }

    fn e1(&self, t: f64) -> f64 {
        if self.alpha == 1.0 {
            (-self.c0 * t).exp()
        } else {
            ml_neg(self.alpha, 1.0, self.c0 * t.powf(self.alpha))
        }
    }
}

/// ν(t_n) = E_{α,1}(−c₀t_n^α)η(0) + ∫₀^{t_n}(t_n−s)^{α−1}E_{α,α}(−c₀(t_n−s)^α)φ(s)ds.
///
/// Constant and power forcings (and exponential forcing at α = 1) use their closed forms;
/// otherwise the kernel is integrated exactly against the piecewise-linear interpolant of φ.
pub fn nu_majorant(spec: &MajorantSpec, tgrid: &TimeGrid) -> Result<Vec<f64>> {
    let t = tgrid.nodes().to_vec();
    let r = Resolvent {
        alpha: spec.alpha,
        c0: spec.c0,
    };
    let (a, c0, e0) = (spec.alpha, spec.c0, spec.eta0);
    match spec.phi {
        Forcing::Zero => return Ok(t.iter().map(|tn| r.e1(*tn) * e0).collect()),
        Forcing::Constant { phi0 } => {
            return Ok(t
                .iter()
                .map(|tn| {
                    let e = r.e1(*tn);
                    e * e0 + phi0 * r.k1(*tn)
                })
                .collect())
        }
        Forcing::Power { phi0 } => {
            // ∫₀ᵗ K(t−s) s^{−α} ds = Γ(1−α)E_{α,1}(−c₀t^α)
            let g = if phi0 == 0.0 { 0.0 } else { gamma_fn(1.0 - a)? };
            return Ok(t
                .iter()
                .map(|tn| {
                    if *tn == 0.0 {
                        e0
                    } else {
                        (e0 + phi0 * g) * r.e1(*tn)
                    }
                })
                .collect());
        }
        Forcing::Exponential { phi0, c1 } if a == 1.0 => {
            return Ok(t
                .iter()
                .map(|tn| {
                    let conv = if (c1 - c0).abs() < 1e-12 * c0.max(1.0) {
                        tn * (-c0 * tn).exp()
                    } else {
                        ((-c1 * tn).exp() - (-c0 * tn).exp()) / (c0 - c1)
                    };
                    (-c0 * tn).exp() * e0 + phi0 * conv
                })
                .collect())
        }
        _ => {}
    }
    let phi = spec.phi_values(tgrid)?;
    // on a uniform grid the kernel primitives depend on n − j only
    let table = matches!(tgrid.kind(), MeshKind::Uniform).then(|| {
        let tau = t[t.len() - 1] / (t.len() - 1) as f64;
        let k1: Vec<f64> = (0..t.len())
            .into_par_iter()
            .map(|m| r.k1(m as f64 * tau))
            .collect();
        let k2: Vec<f64> = (0..t.len())
            .into_par_iter()
            .map(|m| r.k2(m as f64 * tau))
            .collect();
        (k1, k2)
    });
    let out: Vec<f64> = (0..t.len())
        .into_par_iter()
        .map(|n| {
            let tn = t[n];
            let mut v = r.e1(tn) * e0;
            if n == 0 {
                return v;
            }
            let (k1, k2): (Vec<f64>, Vec<f64>) = match &table {
                Some((k1, k2)) => (
                    (0..=n).map(|j| k1[n - j]).collect(),
                    (0..=n).map(|j| k2[n - j]).collect(),
                ),
                None => (
                    (0..=n).map(|j| r.k1(tn - t[j])).collect(),
                    (0..=n).map(|j| r.k2(tn - t[j])).collect(),
                ),
            };
            for j in 0..n {
                // panel [t_j, t_{j+1}] in x = t_n − s; φ linear in x
                let h = t[j + 1] - t[j];
                let dk1 = k1[j] - k1[j + 1];
                let dk2 = k2[j] - k2[j + 1];
                v += phi[j + 1] * dk1 + (phi[j] - phi[j + 1]) * (k1[j] - dk2 / h);
            }
            v
        })
        .collect();
    Ok(out)
}

/// L1 (α < 1) or backward-Euler (α = 1) solution of ∂^α η + c₀ η = φ.
///
/// Power forcing φ₀t^{−α} is the Caputo image of a jump of size φ₀Γ(1−α) at t = 0⁺; nodal
/// sampling is inconsistent there, so the forcing is replaced by the discrete image of that jump.
pub fn solve_fractional_ode(spec: &MajorantSpec, tgrid: &TimeGrid) -> Result<Vec<f64>> {
    let w = l1_weights(tgrid, spec.alpha)?;
    let phi = match spec.phi {
        Forcing::Power { phi0 } => {
            let jump = phi0 * gamma_fn(1.0 - spec.alpha)?;
            (0..tgrid.nodes().len())
                .map(|n| if n == 0 { 0.0 } else { jump * w.weight(n, 1) })
                .collect()
        }
        _ => spec.phi_values(tgrid)?,
    };
    let mut st = CaputoStepper::new(&w, HistoryMode::Direct, &[spec.eta0])?;
    let mut eta = vec![spec.eta0];
    for &ph in phi.iter().skip(1) {
        let a = st.leading();
        let h = st.history()[0];
        let v = (ph + a * st.last()[0] - h) / (a + spec.c0);
        st.advance(&[v]);
        eta.push(v);
    }
    Ok(eta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MajorizationReport {
    pub pass: bool,
    /// max_n (η_n − ν_n).
    pub worst_gap: f64,
    pub worst_index: usize,
    pub first_violation: Option<usize>,
    pub t: Vec<f64>,
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
}

impl MajorizationReport {
    /// max_n |η_n − ν_n|.
    pub fn sup_gap(&self) -> f64 {
        self.eta
            .iter()
            .zip(&self.nu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "eta", "nu", "gap"])?;
        for i in 0..self.t.len() {
            wtr.write_record([
                format!("{:.12e}", self.t[i]),
                format!("{:.12e}", self.eta[i]),
                format!("{:.12e}", self.nu[i]),
                format!("{:.12e}", self.eta[i] - self.nu[i]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Checks η(t_n) ≤ ν(t_n)(1 + 1e−6) + 1e−12 at every node.
pub fn check_majorization(
    eta: &[f64],
    spec: &MajorantSpec,
    tgrid: &TimeGrid,
) -> Result<MajorizationReport> {
    let nu = nu_majorant(spec, tgrid)?;
    majorization_against(eta, &nu, tgrid)
}

/// As [`check_majorization`] with a precomputed ν.
pub fn majorization_against(
    eta: &[f64],
    nu: &[f64],
    tgrid: &TimeGrid,
) -> Result<MajorizationReport> {
    if eta.len() != nu.len() {
        return Err(Error::Precondition(format!(
            "eta has {} values for {} nodes",
            eta.len(),
            nu.len()
        )));
    }
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_index = 0;
    let mut first_violation = None;
    for (i, (e, v)) in eta.iter().zip(nu).enumerate() {
        let gap = e - v;
        if gap > worst_gap {
            worst_gap = gap;
            worst_index = i;
        }
        if first_violation.is_none() && !(*e <= v * (1.0 + 1e-6) + 1e-12) {
            first_violation = Some(i);
        }
    }
    Ok(MajorizationReport {
        pass: first_violation.is_none(),
        worst_gap,
        worst_index,
        first_violation,
        t: tgrid.nodes().to_vec(),
        eta: eta.to_vec(),
        nu: nu.to_vec(),
    })
}

/// Beta function B(a, b).
pub fn beta_fn(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// ∫_{1/2}^1 σ^{α−1}(1−σ)^{−α} dσ.
pub fn sigma_integral(alpha: f64) -> f64 {
    // 1 − σ = v^p with p = 1/(1−α) removes the endpoint singularity
    let p = 1.0 / (1.0 - alpha);
    integrate(
        |v| p * (1.0 - v.powf(p)).powf(alpha - 1.0),
        0.0,
        0.5f64.powf(1.0 - alpha),
        1e-15,
        1e-13,
    )
    .0
}

/// C(α) = 2^α(1 + α + C_α ∫_{1/2}^1 σ^{α−1}(1−σ)^{−α}dσ) with the empirical C_α.
pub fn c_of_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "C(alpha) requires alpha in (0,1), got {alpha}"
        )));
    }
    Ok(2f64.powf(alpha) * (1.0 + alpha + c_alpha_sup(alpha) * sigma_integral(alpha)))
}

/// Kernel factor 1/(Γ(α)α(1−α)) of the bounded-η estimate (∞ at α = 1).
pub fn bounded_factor(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return f64::INFINITY;
    }
    1.0 / (gamma_fn(alpha).unwrap_or(f64::NAN) * alpha * (1.0 - alpha))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerDecayReport {
    /// K = Γ(1+α)c₀^{−α}η(0) + φ₀C(α)/c₀.
    pub k: f64,
    pub c_alpha: f64,
    /// ν(t_n) ≤ K t_n^{−α} for all n ≥ 1.
    pub pass: bool,
    /// max_n ν(t_n) t_n^α / K.
    pub worst_ratio: f64,
    /// η(0) + φ₀/(Γ(α)α(1−α)).
    pub envelope: f64,
    pub envelope_ok: bool,
    pub nu: Vec<f64>,
}

/// Power-decay coefficient for φ = φ₀t^{−α} and the bounded envelope.
pub fn power_decay_bound(spec: &MajorantSpec, tgrid: &TimeGrid) -> Result<PowerDecayReport> {
    let phi0 = match spec.phi {
        Forcing::Power { phi0 } => phi0,
        Forcing::Zero => 0.0,
        _ => {
            return Err(Error::Precondition(
                "power_decay_bound needs power forcing".into(),
            ))
        }
    };
    let a = spec.alpha;
    if a >= 1.0 {
        return Err(Error::Precondition(
            "power_decay_bound needs alpha < 1".into(),
        ));
    }
    let ca = c_of_alpha(a)?;
    let k = gamma_fn(1.0 + a)? * spec.c0.powf(-a) * spec.eta0 + phi0 * ca / spec.c0;
    let nu = nu_majorant(spec, tgrid)?;
    let t = tgrid.nodes();
    let mut worst = 0.0f64;
    let mut pass = true;
    for n in 1..t.len() {
        let lim = k * t[n].powf(-a);
        if !(nu[n] <= lim * (1.0 + 1e-9) + 1e-300) {
            pass = false;
        }
        if k > 0.0 {
            worst = worst.max(nu[n] / lim);
        } else if nu[n] != 0.0 {
            worst = f64::INFINITY;
        }
    }
    let envelope = spec.eta0 + phi0 * bounded_factor(a);
    let envelope_ok = nu.iter().all(|v| *v <= envelope * (1.0 + 1e-9));
    Ok(PowerDecayReport {
        k,
        c_alpha: ca,
        pass,
        worst_ratio: worst,
        envelope,
        envelope_ok,
        nu,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpDecayReport {
    /// η(0) + φ₀/(c₁ − c₀).
    pub coef: f64,
    pub pass: bool,
    /// max_n ν(t_n) e^{c₀t_n} / coef.
    pub worst_ratio: f64,
    pub nu: Vec<f64>,
}

/// Exponential-decay coefficient for α = 1 and φ = φ₀e^{−c₁t}, c₁ > c₀.
pub fn exp_decay_bound(spec: &MajorantSpec, tgrid: &TimeGrid) -> Result<ExpDecayReport> {
    let Forcing::Exponential { phi0, c1 } = spec.phi else {
        return Err(Error::Precondition(
            "exp_decay_bound needs exponential forcing".into(),
        ));
    };
    if spec.alpha != 1.0 {
        return Err(Error::Precondition(
            "exp_decay_bound needs alpha = 1".into(),
        ));
    }
    if !(c1 > spec.c0) {
        return Err(Error::Precondition(format!(
            "need c1 > c0, got c1 = {c1}, c0 = {}",
            spec.c0
        )));
    }
    let coef = spec.eta0 + phi0 / (c1 - spec.c0);
    let nu = nu_majorant(spec, tgrid)?;
    let mut worst = 0.0f64;
    let mut pass = true;
    for (tn, v) in tgrid.nodes().iter().zip(&nu) {
        let lim = coef * (-spec.c0 * tn).exp();
        if !(*v <= lim * (1.0 + 1e-9) + 1e-300) {
            pass = false;
        }
        if coef > 0.0 {
            worst = worst.max(v / lim);
        }
    }
    Ok(ExpDecayReport {
        coef,
        pass,
        worst_ratio: worst,
        nu,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BarrierStatus {
    Pass,
    Violation { index: usize },
    PremiseNotMet,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierReport {
    pub status: BarrierStatus,
    /// Φ(η(0) + c₂/(Γ(α)α(1−α))).
    pub premise_value: f64,
    pub max_phi: f64,
}

/// Barrier implication: if Φ(η(0) + c₂/(Γ(α)α(1−α))) < 1 then Φ(η(t_n)) ≤ 1 at every node.
pub fn barrier_implication<F: Fn(f64) -> f64>(
    eta: &[f64],
    phi: F,
    c2: f64,
    alpha: f64,
) -> BarrierReport {
    let arg = if c2 == 0.0 {
        eta[0]
    } else {
        eta[0] + c2 * bounded_factor(alpha)
    };
    let premise_value = phi(arg);
    let max_phi = eta
        .iter()
        .map(|e| phi(*e))
        .fold(f64::NEG_INFINITY, f64::max);
    let status = if !(premise_value < 1.0) {
        BarrierStatus::PremiseNotMet
    } else {
        match eta.iter().position(|e| !(phi(*e) <= 1.0)) {
            Some(index) => BarrierStatus::Violation { index },
            None => BarrierStatus::Pass,
        }
    };
    BarrierReport {
        status,
        premise_value,
        max_phi,
    }
}

/// Checks η(t) − η(0) + c₀(k^{1−α}∗η)(t) ≤ (k^{1−α}∗φ)(t) + tol at every node; returns the
/// largest excess (≤ tol means it holds).
pub fn convolved_premise_excess(
    eta: &[f64],
    phi: &[f64],
    c0: f64,
    alpha: f64,
    tgrid: &TimeGrid,
) -> Result<f64> {
    let ke = rl_convolve(alpha, tgrid, eta)?;
    let kp = rl_convolve(alpha, tgrid, phi)?;
    Ok((0..eta.len())
        .map(|n| eta[n] - eta[0] + c0 * ke[n] - kp[n])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Inputs of the two-function decay lemma ∂^αη₀ + c₀η₀ + c₁η₁ ≤ C t^{−β}
/// (C e^{−c₀t} when α = 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eta01Params {
    pub c0: f64,
    pub c1: f64,
    pub big_c: f64,
    pub beta: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eta01Options {
    /// Relative slack on the discrete premise, scaled by the magnitude of its terms.
    pub premise_rtol: f64,
    pub slope_tol: f64,
    pub coef_factor: f64,
    pub window: Window,
}

impl Default for Eta01Options {
    fn default() -> Self {
        Self {
            premise_rtol: 1e-2,
            slope_tol: 0.2,
            coef_factor: 1.5,
            window: Window::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Eta01Status {
    Pass,
    Fail,
    PremiseViolated { index: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eta01Report {
    pub status: Eta01Status,
    /// C_j = (CΓ(1−β) + η₀(0))/c_j.
    pub c_j: [f64; 2],
    /// Fitted tail slopes (None: identically zero or not fittable).
    pub slopes: [Option<f64>; 2],
    /// max over the last decade of η_j t^{min{α,β}}.
    pub coefs: [f64; 2],
    pub slope_ok: [bool; 2],
    pub coef_ok: [bool; 2],
    /// α = 1: η₀(t) ≤ (η₀(0) + Ct)e^{−c₀t}.
    pub exp_bound_ok: Option<bool>,
    /// α = 1: c₁∫₀ᵗ e^{c₀s}η₁ ds ≤ η₀(0) + Ct.
    pub eta1_integral_ok: Option<bool>,
    /// α = 1: η₁ has a positive fitted exponential rate on the tail (false when not fittable).
    pub eta1_sup_ok: Option<bool>,
}

impl Eta01Report {
    pub fn to_text(&self) -> String {
        let f = |o: Option<f64>| o.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into());
        let b = |o: Option<bool>| o.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
        format!(
            "status = {:?}\nC_0 = {:.6e}\nC_1 = {:.6e}\nslope_0 = {}\nslope_1 = {}\ncoef_0 = {:.6e}\ncoef_1 = {:.6e}\n\
             exp_bound_ok = {}\neta1_integral_ok = {}\neta1_sup_ok = {}\n",
            self.status,
            self.c_j[0],
            self.c_j[1],
            f(self.slopes[0]),
            f(self.slopes[1]),
            self.coefs[0],
            self.coefs[1],
            b(self.exp_bound_ok),
            b(self.eta1_integral_ok),
            b(self.eta1_sup_ok),
        )
    }
}

/// Asymptotic decay of η₀, η₁ under the premise of the two-function lemma; abstains
/// (PremiseViolated) when the discrete premise fails.
pub fn eta01_rates(
    eta0: &[f64],
    eta1: &[f64],
    params: &Eta01Params,
    tgrid: &TimeGrid,
    opts: &Eta01Options,
) -> Result<Eta01Report> {
    let t = tgrid.nodes();
    if eta0.len() != t.len() || eta1.len() != t.len() {
        return Err(Error::Precondition(
            "series length does not match the time grid".into(),
        ));
    }
    let Eta01Params {
        c0,
        c1,
        big_c,
        beta,
        alpha,
    } = *params;
    let w = l1_weights(tgrid, alpha)?;
    let cap = caputo_series(&w, eta0)?;
    let rhs = |tn: f64| {
        if alpha == 1.0 {
            big_c * (-c0 * tn).exp()
        } else {
            big_c * tn.powf(-beta)
        }
    };
    for n in 1..t.len() {
        let lhs = cap[n] + c0 * eta0[n] + c1 * eta1[n];
        let scale = cap[n].abs() + c0 * eta0[n] + c1 * eta1[n];
        if lhs > rhs(t[n]) + opts.premise_rtol * scale + 1e-12 {
            return Ok(Eta01Report {
                status: Eta01Status::PremiseViolated { index: n },
                c_j: [f64::NAN; 2],
                slopes: [None; 2],
                coefs: [f64::NAN; 2],
                slope_ok: [false; 2],
                coef_ok: [false; 2],
                exp_bound_ok: None,
                eta1_integral_ok: None,
                eta1_sup_ok: None,
            });
        }
    }
    let cg = if big_c == 0.0 {
        0.0
    } else {
        big_c * gamma_fn(1.0 - beta).unwrap_or(f64::INFINITY)
    };
    let c_j = [(cg + eta0[0]) / c0, (cg + eta0[0]) / c1];
    let m = alpha.min(beta);
    let mut slopes = [None; 2];
    let mut coefs = [0.0; 2];
    let mut slope_ok = [true; 2];
    let mut coef_ok = [true; 2];
    let mut exp_bound_ok = None;
    let mut eta1_integral_ok = None;
    let mut eta1_sup_ok = None;
    if alpha < 1.0 {
        let start = t
            .iter()
            .position(|v| *v >= t[t.len() - 1] / 10.0)
            .unwrap_or(0)
            .max(1);
        for (j, eta) in [eta0, eta1].into_iter().enumerate() {
            if eta.iter().all(|v| *v == 0.0) {
                continue;
            }
            let fit = fit_power(eta, t, opts.window);
            slopes[j] = fit.map(|f| f.slope());
            slope_ok[j] = fit
                .map(|f| f.slope() <= -m + opts.slope_tol)
                .unwrap_or(false);
            coefs[j] = (start..t.len())
                .map(|n| eta[n] * t[n].powf(m))
                .fold(0.0, f64::max);
            coef_ok[j] = coefs[j] <= opts.coef_factor * c_j[j];
        }
    } else {
        exp_bound_ok = Some((0..t.len()).all(|n| {
            eta0[n] <= (eta0[0] + big_c * t[n]) * (-c0 * t[n]).exp() * (1.0 + 1e-6) + 1e-12
        }));
        let mut acc = 0.0;
        let mut ok = true;
        for n in 1..t.len() {
            let h = t[n] - t[n - 1];
            acc += 0.5 * h * ((c0 * t[n - 1]).exp() * eta1[n - 1] + (c0 * t[n]).exp() * eta1[n]);
            if c1 * acc > (eta0[0] + big_c * t[n]) * (1.0 + 1e-6) + 1e-12 {
                ok = false;
            }
        }
        eta1_integral_ok = Some(ok);
        eta1_sup_ok = Some(if eta1.iter().all(|v| *v == 0.0) {
            true
        } else {
            crate::decayfit::fit_exponential(eta1, t, opts.window)
                .map(|f| f.value > 0.0)
                .unwrap_or(false)
        });
    }
    let pass = slope_ok.iter().chain(&coef_ok).all(|b| *b) && exp_bound_ok.unwrap_or(true);
    Ok(Eta01Report {
        status: if pass {
            Eta01Status::Pass
        } else {
            Eta01Status::Fail
        },
        c_j,
        slopes,
        coefs,
        slope_ok,
        coef_ok,
        exp_bound_ok,
        eta1_integral_ok,
        eta1_sup_ok,
    })
}
