//! Problem assembly, normalization of the nonlinearity and hypothesis checkers.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fracops::TimeGrid;
use crate::space::{norm_hs, BcKind, BoundaryCondition, EllipticOp, Field, Grid1D};

/// Declared bound |f''(ξ)| ≤ c2 + C2 |ξ|^κ2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Growth {
    pub c2: f64,
    pub cap_c2: f64,
    pub kappa2: f64,
}

impl Growth {
    pub fn new(c2: f64, cap_c2: f64, kappa2: f64) -> Result<Self> {
        if !(c2 >= 0.0 && cap_c2 >= 0.0 && kappa2 >= 0.0) {
            return Err(Error::Problem(format!(
                "growth constants must be nonnegative, got c2={c2}, C2={cap_c2}, kappa2={kappa2}"
            )));
        }
        Ok(Self { c2, cap_c2, kappa2 })
    }

    pub fn bound(&self, xi: f64) -> f64 {
        let pow = if self.kappa2 == 0.0 {
            1.0
        } else {
            xi.abs().powf(self.kappa2)
        };
        self.c2 + self.cap_c2 * pow
    }

    /// C_κ = max{1, 2^(κ2 - 1)}.
    pub fn c_kappa(&self) -> f64 {
        (2f64).powf(self.kappa2 - 1.0).max(1.0)
    }
}

#[derive(Clone, Debug)]
enum Base {
    Polynomial(Vec<f64>),
    Exponential,
    Expression(Box<[Expr; 3]>),
}

/// Scalar nonlinearity f with its first two derivatives and growth metadata.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    name: String,
    base: Base,
    // f(ξ) = base(ξ) - slope ξ - offset
    slope: f64,
    offset: f64,
    growth: Option<Growth>,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &a)| k as f64 * a)
        .collect()
}

fn poly_growth(c: &[f64]) -> Growth {
    let d2 = poly_derivative(&poly_derivative(c));
    let deg = d2.iter().rposition(|&a| a != 0.0);
    match deg {
        None => Growth {
            c2: 0.0,
            cap_c2: 0.0,
            kappa2: 0.0,
        },
        Some(0) => Growth {
            c2: 0.0,
            cap_c2: d2[0].abs(),
            kappa2: 0.0,
        },
        Some(k) => {
            // |ξ|^j ≤ 1 + |ξ|^k for 1 ≤ j ≤ k
            let c2 = d2[..k].iter().map(|a| a.abs()).sum();
            let cap = d2[1..=k].iter().map(|a| a.abs()).sum();
            Growth {
                c2,
                cap_c2: cap,
                kappa2: k as f64,
            }
        }
    }
}

impl Nonlinearity {
    /// Polynomial Σ coeffs[k] ξ^k; growth is derived from the coefficients.
    pub fn polynomial(name: &str, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Problem(format!(
                "nonlinearity `{name}` has non-finite coefficients"
            )));
        }
        let growth = Some(poly_growth(&coeffs));
        Ok(Self {
            name: name.to_string(),
            base: Base::Polynomial(coeffs),
            slope: 0.0,
            offset: 0.0,
            growth,
        })
    }

    pub fn zero() -> Self {
        Self::polynomial("zero", vec![]).expect("finite")
    }

    /// f(ξ) = ξ³.
    pub fn cubic() -> Self {
        Self::polynomial("cubic", vec![0.0, 0.0, 0.0, 1.0]).expect("finite")
    }

    /// f(ξ) = ξ⁴.
    pub fn quartic() -> Self {
        Self::polynomial("quartic", vec![0.0, 0.0, 0.0, 0.0, 1.0]).expect("finite")
    }

    /// f(ξ) = ξ³ - ξ.
    pub fn allen_cahn() -> Self {
        Self::polynomial("allen_cahn", vec![0.0, -1.0, 0.0, 1.0]).expect("finite")
    }

    /// f(ξ) = ξ³ + ξ.
    pub fn cubic_plus_linear() -> Self {
        Self::polynomial("cubic_plus_linear", vec![0.0, 1.0, 0.0, 1.0]).expect("finite")
    }

    /// f(ξ) = e^ξ; no global growth bound, declare one with [`Nonlinearity::with_growth`].
    pub fn exponential() -> Self {
        Self {
            name: "exp".into(),
            base: Base::Exponential,
            slope: 0.0,
            offset: 0.0,
            growth: None,
        }
    }

    /// f given as an expression in `u`; derivatives are taken symbolically.
    pub fn expression(text: &str) -> Result<Self> {
        let f = Expr::parse(text, "u")?;
        let df = f.derivative()?;
        let d2f = df.derivative()?;
        Ok(Self {
            name: "custom".into(),
            base: Base::Expression(Box::new([f, df, d2f])),
            slope: 0.0,
            offset: 0.0,
            growth: None,
        })
    }

    /// Looks up a built-in nonlinearity by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::zero()),
            "cubic" => Ok(Self::cubic()),
            "quartic" => Ok(Self::quartic()),
            "allen_cahn" => Ok(Self::allen_cahn()),
            "cubic_plus_linear" => Ok(Self::cubic_plus_linear()),
            "exp" => Ok(Self::exponential()),
            other => Err(Error::Problem(format!("unknown nonlinearity `{other}`"))),
        }
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = Some(growth);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn growth(&self) -> Option<Growth> {
        self.growth
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self.base, Base::Polynomial(_))
    }

    pub fn f(&self, xi: f64) -> f64 {
        let b = match &self.base {
            Base::Polynomial(c) => poly_eval(c, xi),
            Base::Exponential => xi.exp(),
            Base::Expression(e) => e[0].eval(xi),
        };
        b - self.slope * xi - self.offset
    }

    pub fn df(&self, xi: f64) -> f64 {
        let b = match &self.base {
            Base::Polynomial(c) => poly_eval(&poly_derivative(c), xi),
            Base::Exponential => xi.exp(),
            Base::Expression(e) => e[1].eval(xi),
        };
        b - self.slope
    }

    pub fn d2f(&self, xi: f64) -> f64 {
        match &self.base {
            Base::Polynomial(c) => poly_eval(&poly_derivative(&poly_derivative(c)), xi),
            Base::Exponential => xi.exp(),
            Base::Expression(e) => e[2].eval(xi),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.f(0.0).abs() <= 1e-14 && self.df(0.0).abs() <= 1e-14
    }

    /// ∫₀¹ f''(b + θ(a - b))(1 - θ) dθ via the divided difference (f(a) - f(b) - f'(b)(a - b)) / (a - b)².
    pub fn second_divided(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        if d.abs() < 1e-6 * (1.0 + a.abs().max(b.abs())) {
            0.5 * self.d2f(0.5 * (a + b))
        } else {
            (self.f(a) - self.f(b) - self.df(b) * d) / (d * d)
        }
    }
}

/// Source term r(t) = r∞ + perturbation(t).
#[derive(Clone, Debug)]
pub enum Perturbation {
    None,
    /// amplitude (1+t)^(-exponent) ĝ with ‖ĝ‖_{L²} = 1.
    Power {
        amplitude: f64,
        exponent: f64,
        profile: Field,
    },
    /// amplitude e^(-rate t) ĝ with ‖ĝ‖_{L²} = 1.
    Exponential {
        amplitude: f64,
        rate: f64,
        profile: Field,
    },
    /// r(t_n) - r∞ tabulated at every time node.
    Table(Arc<Vec<Field>>),
}

#[derive(Clone, Debug)]
pub struct Source {
    pub r_inf: Field,
    pub perturbation: Perturbation,
}

impl Source {
    pub fn steady(r_inf: Field) -> Self {
        Self {
            r_inf,
            perturbation: Perturbation::None,
        }
    }

    /// Normalizes `profile` to unit discrete L² norm.
    pub fn unit_profile(grid: &Grid1D, profile: Field) -> Result<Field> {
        let n = crate::space::norm_l2_sq(grid, &profile).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Problem(
                "perturbation profile has zero or non-finite norm".into(),
            ));
        }
        Ok(Field(profile.iter().map(|v| v / n).collect()))
    }

    /// r(t_n) - r∞.
    pub fn difference(&self, n: usize, t: f64) -> Field {
        match &self.perturbation {
            Perturbation::None => Field(vec![0.0; self.r_inf.len()]),
            Perturbation::Power {
                amplitude,
                exponent,
                profile,
            } => {
                let s = amplitude * (1.0 + t).powf(-exponent);
                Field(profile.iter().map(|g| s * g).collect())
            }
            Perturbation::Exponential {
                amplitude,
                rate,
                profile,
            } => {
                let s = amplitude * (-rate * t).exp();
                Field(profile.iter().map(|g| s * g).collect())
            }
            Perturbation::Table(rows) => rows[n.min(rows.len() - 1)].clone(),
        }
    }

    /// r(t_n).
    pub fn at(&self, n: usize, t: f64) -> Field {
        let d = self.difference(n, t);
        Field(
            self.r_inf
                .iter()
                .zip(d.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn is_steady(&self) -> bool {
        matches!(self.perturbation, Perturbation::None)
    }
}

/// Declared summability exponents (𝔯 for p, 𝔰 for q).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summability {
    pub r_exp: f64,
    pub s_exp: f64,
}

impl Default for Summability {
    fn default() -> Self {
        Self {
            r_exp: f64::INFINITY,
            s_exp: 2.0,
        }
    }
}

/// The initial boundary value problem ∂^α u + 𝕃u = q u - p f(u) + r.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid1D,
    pub op: EllipticOp,
    pub alpha: f64,
    pub p: Field,
    pub q: Field,
    pub nl: Nonlinearity,
    pub source: Source,
    pub u0: Field,
    pub tgrid: TimeGrid,
    pub summability: Summability,
}

impl Problem {
    /// Validates all components and returns the assembled problem.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid1D,
        op: EllipticOp,
        alpha: f64,
        p: Field,
        q: Field,
        nl: Nonlinearity,
        source: Source,
        u0: Field,
        tgrid: TimeGrid,
        summability: Summability,
    ) -> Result<Self> {
        let pr = Self {
            grid,
            op,
            alpha,
            p,
            q,
            nl,
            source,
            u0,
            tgrid,
            summability,
        };
        pr.validate()?;
        Ok(pr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        for (name, f) in [
            ("p", &self.p),
            ("q", &self.q),
            ("r_inf", &self.source.r_inf),
            ("u0", &self.u0),
            ("D", self.op.diffusion()),
            ("d", self.op.reaction()),
        ] {
            f.check_len(&self.grid).map_err(|_| {
                Error::Problem(format!(
                    "field `{name}` has {} values, grid has {}",
                    f.len(),
                    self.grid.nx()
                ))
            })?;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Problem(format!(
                    "field `{name}` has non-finite values"
                )));
            }
        }
        match &self.source.perturbation {
            Perturbation::Power { profile, .. } | Perturbation::Exponential { profile, .. } => {
                profile.check_len(&self.grid)?;
            }
            Perturbation::Table(rows) => {
                if rows.len() != self.tgrid.nodes().len() {
                    return Err(Error::Problem(format!(
                        "tabulated source has {} rows, time grid has {} nodes",
                        rows.len(),
                        self.tgrid.nodes().len()
                    )));
                }
                for row in rows.iter() {
                    row.check_len(&self.grid)?;
                }
            }
            Perturbation::None => {}
        }
        if !(self.summability.s_exp >= 2.0) {
            return Err(Error::Problem(format!(
                "summability index s of q must be at least 2, got {}",
                self.summability.s_exp
            )));
        }
        if !(self.summability.r_exp >= 1.0) {
            return Err(Error::Problem(format!(
                "summability index r of p must be at least 1, got {}",
                self.summability.r_exp
            )));
        }
        let bc = self.op.bc();
        if bc.is_dirichlet() {
            let n = self.grid.nx();
            let tol = 1e-12 * (1.0 + bc.data[0].abs().max(bc.data[1].abs()));
            if (self.u0[0] - bc.data[0]).abs() > tol || (self.u0[n - 1] - bc.data[1]).abs() > tol {
                return Err(Error::Problem(format!(
                    "initial datum violates Dirichlet data: u0 = ({}, {}), expected ({}, {})",
                    self.u0[0],
                    self.u0[n - 1],
                    bc.data[0],
                    bc.data[1]
                )));
            }
        }
        Ok(())
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.op.bc()
    }

    pub fn bc_kind(&self) -> BcKind {
        self.op.bc().kind
    }

    /// Returns the problem with f replaced by its normalized form.
    pub fn normalized(&self) -> Problem {
        let (nl, q, source) = normalize(&self.nl, &self.p, &self.q, &self.source);
        Problem {
            nl,
            q,
            source,
            ..self.clone()
        }
    }
}

/// Rewrites f(ξ) = f̃(ξ) + f'(0)ξ + f(0) so that f̃(0) = f̃'(0) = 0 while keeping
/// q u - p f(u) + r unchanged: q̃ = q - f'(0) p and r̃ = r - f(0) p.
pub fn normalize(
    nl: &Nonlinearity,
    p: &Field,
    q: &Field,
    source: &Source,
) -> (Nonlinearity, Field, Source) {
    let f0 = nl.f(0.0);
    let f1 = nl.df(0.0);
    let mut out = nl.clone();
    out.offset += f0;
    out.slope += f1;
    let q2 = Field(q.iter().zip(p.iter()).map(|(q, p)| q - f1 * p).collect());
    let r_inf = Field(
        source
            .r_inf
            .iter()
            .zip(p.iter())
            .map(|(r, p)| r - f0 * p)
            .collect(),
    );
    (
        out,
        q2,
        Source {
            r_inf,
            perturbation: source.perturbation.clone(),
        },
    )
}

/// Pointwise right-hand side q u - p f(u) + r.
pub fn reaction_rhs(nl: &Nonlinearity, p: &[f64], q: &[f64], r: &[f64], u: &[f64]) -> Vec<f64> {
    u.iter()
        .enumerate()
        .map(|(i, &u)| q[i] * u - p[i] * nl.f(u) + r[i])
        .collect()
}

/// c̲ = min_x p f'(u∞) - q.
pub fn check_pinfty(p: &[f64], q: &[f64], nl: &Nonlinearity, u_inf: &[f64]) -> f64 {
    u_inf
        .iter()
        .enumerate()
        .map(|(i, &u)| p[i] * nl.df(u) - q[i])
        .fold(f64::INFINITY, f64::min)
}

/// p∞ = p f'(u∞) - q.
pub fn p_infty(p: &[f64], q: &[f64], nl: &Nonlinearity, u_inf: &[f64]) -> Field {
    Field(
        u_inf
            .iter()
            .enumerate()
            .map(|(i, &u)| p[i] * nl.df(u) - q[i])
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthCheck {
    pub pass: bool,
    pub worst_ratio: f64,
    pub worst_at: f64,
    /// Set when the bound can only hold on the sampled range (non-polynomial f).
    pub range_limited: bool,
}

/// Samples |f''(ξ)| ≤ c2 + C2 |ξ|^κ2 on `range`.
pub fn check_growth(nl: &Nonlinearity, range: [f64; 2], samples: usize) -> Result<GrowthCheck> {
    let g = nl.growth().ok_or_else(|| {
        Error::Precondition(format!(
            "nonlinearity `{}` has no growth metadata",
            nl.name()
        ))
    })?;
    if !(range[1] > range[0]) || samples < 2 {
        return Err(Error::Domain(format!(
            "invalid sampling range {range:?} with {samples} samples"
        )));
    }
    let mut worst = 0.0f64;
    let mut worst_at = range[0];
    for k in 0..samples {
        let xi = range[0] + (range[1] - range[0]) * k as f64 / (samples - 1) as f64;
        let num = nl.d2f(xi).abs();
        let den = g.bound(xi);
        let ratio = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        if ratio > worst || ratio.is_nan() {
            worst = ratio;
            worst_at = xi;
        }
    }
    Ok(GrowthCheck {
        pass: worst <= 1.0 + 1e-12,
        worst_ratio: worst,
        worst_at,
        range_limited: !nl.is_polynomial(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regularity {
    Lo,
    Hi,
    Fail,
}

impl Regularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Regularity::Lo => "lo",
            Regularity::Hi => "hi",
            Regularity::Fail => "fail",
        }
    }

    /// Sobolev index s of the energy estimate.
    pub fn s(self) -> Option<i32> {
        match self {
            Regularity::Lo => Some(0),
            Regularity::Hi => Some(1),
            Regularity::Fail => None,
        }
    }
}

/// Whether (d, 𝔯, κ2) admits the low-regularity estimate.
pub fn summability_lo(d: u8, r_exp: f64, kappa2: f64) -> bool {
    d == 1 && r_exp == f64::INFINITY && kappa2 == 1.0
}

/// Whether (d, 𝔯, κ2) admits the high-regularity estimate.
pub fn summability_hi(d: u8, r_exp: f64, kappa2: f64) -> bool {
    if kappa2 < 0.0 {
        return false;
    }
    match d {
        1 => r_exp >= 2.0,
        2 => r_exp > 2.0 && kappa2.is_finite(),
        3 => r_exp >= 6.0 && kappa2 <= 2.0 - 6.0 / r_exp,
        _ => false,
    }
}

/// Classifies (d, 𝔯, κ2); the low-regularity case takes precedence.
pub fn check_summability(d: u8, r_exp: f64, kappa2: f64) -> Regularity {
    if summability_lo(d, r_exp, kappa2) {
        Regularity::Lo
    } else if summability_hi(d, r_exp, kappa2) {
        Regularity::Hi
    } else {
        Regularity::Fail
    }
}

/// Norm in which r - r∞ is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceNorm {
    Hminus1,
    L2,
}

/// Smallest C_r with ‖r(t_n) - r∞‖²_X ≤ C_r Ψ(t_n) for n ≥ 1, where
/// Ψ = t^{-α} for α < 1 and Ψ = e^{-ωt} for α = 1.
pub fn check_decay_r(
    grid: &Grid1D,
    bc: BcKind,
    differences: &[Field],
    tgrid: &TimeGrid,
    x: SourceNorm,
    alpha: f64,
    omega: f64,
) -> Result<f64> {
    let nodes = tgrid.nodes();
    if differences.len() != nodes.len() {
        return Err(Error::Problem(format!(
            "source series has {} entries, time grid has {} nodes",
            differences.len(),
            nodes.len()
        )));
    }
    let s = match x {
        SourceNorm::Hminus1 => -1,
        SourceNorm::L2 => 0,
    };
    let mut c_r = 0.0f64;
    for (n, d) in differences.iter().enumerate().skip(1) {
        let v = norm_hs(grid, d, s, bc)?.powi(2);
        if v == 0.0 {
            continue;
        }
        let t = nodes[n];
        let psi = if alpha < 1.0 {
            t.powf(-alpha)
        } else {
            (-omega * t).exp()
        };
        let ratio = if psi > 0.0 { v / psi } else { f64::INFINITY };
        c_r = c_r.max(ratio);
    }
    Ok(c_r)
}

/// Tabulated r(t_n) - r∞ for which the discrete trajectory equals `targets` at every node:
/// r_n = ∂^α_h φ_n + 𝕃_h φ_n - q φ_n + p f(φ_n). Targets must satisfy the boundary condition.
pub fn manufactured_perturbation(problem: &Problem, targets: &[Field]) -> Result<Perturbation> {
    let nodes = problem.tgrid.nodes();
    if targets.len() != nodes.len() {
        return Err(Error::Problem(format!(
            "manufactured trajectory has {} states for {} time nodes",
            targets.len(),
            nodes.len()
        )));
    }
    let w = crate::fracops::l1_weights(&problem.tgrid, problem.alpha)?;
    let nx = problem.grid.nx();
    let rows = (0..nodes.len())
        .map(|n| {
            let phi = &targets[n];
            let mut r = problem.op.apply_homogeneous(&problem.grid, phi);
            for j in 1..=n {
                let a = w.weight(n, j);
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri += a * (targets[j][i] - targets[j - 1][i]);
                }
            }
            for i in 0..nx {
                r[i] += -problem.q[i] * phi[i] + problem.p[i] * problem.nl.f(phi[i])
                    - problem.source.r_inf[i];
            }
            if problem.op.bc().is_dirichlet() {
                r[0] = 0.0;
                r[nx - 1] = 0.0;
            }
            Field(r)
        })
        .collect();
    Ok(Perturbation::Table(Arc::new(rows)))
}

/// r(t_n) - r∞ for every node of the problem's time grid.
pub fn source_differences(problem: &Problem) -> Vec<Field> {
    problem
        .tgrid
        .nodes()
        .iter()
        .enumerate()
        .map(|(n, &t)| problem.source.difference(n, t))
        .collect()
}

/// min over steps, nodes and θ ∈ {0, 1/K, …, 1} of p f'(θu + (1-θ)u∞) - q.
pub fn check_between_states(
    p: &[f64],
    q: &[f64],
    nl: &Nonlinearity,
    u_series: &[Field],
    u_inf: &[f64],
    theta_count: usize,
) -> f64 {
    let k = theta_count.max(1);
    let mut worst = f64::INFINITY;
    for u in u_series {
        for i in 0..u_inf.len() {
            for j in 0..=k {
                let th = j as f64 / k as f64;
                let xi = th * u[i] + (1.0 - th) * u_inf[i];
                worst = worst.min(p[i] * nl.df(xi) - q[i]);
            }
        }
    }
    worst
}

/// As [`check_between_states`] restricted to θ = 1.
pub fn check_states(p: &[f64], q: &[f64], nl: &Nonlinearity, u_series: &[Field]) -> f64 {
    u_series
        .iter()
        .map(|u| check_pinfty(p, q, nl, u))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::norm_l2_sq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_grid(nx: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, nx).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let g = unit_grid(11);
        let p = Field::constant(&g, 1.0);
        let q = Field::constant(&g, 0.5);
        let src = Source::steady(Field::constant(&g, 2.0));

        let (nl, q2, s2) = normalize(&Nonlinearity::cubic(), &p, &q, &src);
        assert!(nl.is_normalized());
        assert_eq!(q2.0, q.0);
        assert_eq!(s2.r_inf.0, src.r_inf.0);

        // ξ³ - ξ: q̃ = q + p keeps q u - p f(u) unchanged
        let (nl, q2, s2) = normalize(&Nonlinearity::allen_cahn(), &p, &q, &src);
        assert!(nl.is_normalized());
        assert!((nl.f(0.7) - 0.343).abs() < 1e-15);
        assert!(q2.iter().all(|v| (v - 1.5).abs() < 1e-15));
        assert_eq!(s2.r_inf.0, src.r_inf.0);

        // e^ξ: f̃ = e^ξ - ξ - 1, q̃ = q - p, r̃ = r - p
        let (nl, q2, s2) = normalize(&Nonlinearity::exponential(), &p, &q, &src);
        assert!(nl.is_normalized());
        assert!((nl.f(1.0) - (1f64.exp() - 2.0)).abs() < 1e-15);
        assert!(q2.iter().all(|v| (v + 0.5).abs() < 1e-15));
        assert!(s2.r_inf.iter().all(|v| (v - 1.0).abs() < 1e-15));

        // ξ³ + ξ with q = 0, p = 1 gives p f̃' - q̃ = 3ξ² + 1
        let z = Field::zeros(&g);
        let (nl, q2, _) = normalize(&Nonlinearity::cubic_plus_linear(), &p, &z, &src);
        assert!(q2.iter().all(|v| (v + 1.0).abs() < 1e-15));
        assert!((p[0] * nl.df(0.5) - q2[0] - 1.75).abs() < 1e-15);
    }

    fn any_nl() -> impl Strategy<Value = Nonlinearity> {
        prop_oneof![
            Just(Nonlinearity::cubic()),
            Just(Nonlinearity::allen_cahn()),
            Just(Nonlinearity::exponential()),
            prop::collection::vec(-2.0..2.0f64, 1..5)
                .prop_map(|c| Nonlinearity::polynomial("poly", c).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn normalization_preserves_rhs_and_is_idempotent(
            nl in any_nl(),
            u in prop::collection::vec(-1.5..1.5f64, 6),
            p in prop::collection::vec(0.0..2.0f64, 6),
            q in prop::collection::vec(-2.0..2.0f64, 6),
            r in prop::collection::vec(-2.0..2.0f64, 6),
        ) {
            let g = unit_grid(6);
            let src = Source::steady(Field(r.clone()));
            let (pf, qf) = (Field(p.clone()), Field(q.clone()));
            let (nl2, q2, s2) = normalize(&nl, &pf, &qf, &src);
            prop_assert!(nl2.is_normalized());
            let a = reaction_rhs(&nl, &p, &q, &r, &u);
            let b = reaction_rhs(&nl2, &p, &q2, &s2.r_inf, &u);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
            let (nl3, q3, s3) = normalize(&nl2, &pf, &q2, &s2);
            prop_assert_eq!(q3.0, q2.0);
            prop_assert_eq!(s3.r_inf.0, s2.r_inf.0);
            prop_assert!((nl3.f(0.3) - nl2.f(0.3)).abs() < 1e-15);
            let _ = g;
        }

        #[test]
        fn summability_is_monotone(d in 1u8..4, r in 1.0..20.0f64, dr in 0.0..10.0f64, k in 0.0..3.0f64, dk in 0.0..3.0f64) {
            if check_summability(d, r, k) == Regularity::Hi {
                prop_assert_ne!(check_summability(d, r + dr, k), Regularity::Fail);
                prop_assert_ne!(check_summability(d, r, (k - dk).max(0.0)), Regularity::Fail);
            }
        }

        #[test]
        fn between_states_at_equilibrium_matches_pinfty(
            u in prop::collection::vec(-1.5..1.5f64, 5),
            p in prop::collection::vec(0.0..2.0f64, 5),
            q in prop::collection::vec(-2.0..2.0f64, 5),
        ) {
            let nl = Nonlinearity::cubic();
            let a = check_pinfty(&p, &q, &nl, &u);
            prop_assert_eq!(a, check_states(&p, &q, &nl, &[Field(u.clone())]));
            let b = check_between_states(&p, &q, &nl, &[Field(u.clone())], &u, 16);
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pinfty_examples() {
        let g = unit_grid(21);
        let nl = Nonlinearity::cubic();
        let one = Field::constant(&g, 1.0);
        let z = Field::zeros(&g);
        assert_eq!(check_pinfty(&one, &Field::constant(&g, -1.0), &nl, &z), 1.0);
        assert_eq!(check_pinfty(&one, &z, &nl, &z), 0.0);
        let s = Field::from_fn(&g, |x| (PI * x).sin());
        let m = check_pinfty(&one, &z, &nl, &s);
        // endpoints vanish under Dirichlet data
        assert!(m.abs() < 1e-28);
        let interior = check_pinfty(&one[1..20], &z[1..20], &nl, &s[1..20]);
        let want = 3.0 * (PI * 0.05).sin().powi(2);
        assert!((interior - want).abs() < 1e-14);
    }

    #[test]
    fn growth_examples() {
        let c = check_growth(&Nonlinearity::cubic(), [-5.0, 5.0], 1001).unwrap();
        assert_eq!(
            Nonlinearity::cubic().growth(),
            Some(Growth {
                c2: 0.0,
                cap_c2: 6.0,
                kappa2: 1.0
            })
        );
        assert!(c.pass && (c.worst_ratio - 1.0).abs() < 1e-15 && !c.range_limited);
        let q = Nonlinearity::quartic();
        assert_eq!(q.growth().unwrap().kappa2, 2.0);
        assert_eq!(q.growth().unwrap().cap_c2, 12.0);
        assert!(check_growth(&q, [-5.0, 5.0], 1001).unwrap().pass);
        let e = Nonlinearity::exponential().with_growth(Growth::new(1.0, 2.5e4, 1.0).unwrap());
        let r = check_growth(&e, [-10.0, 10.0], 2001).unwrap();
        assert!(r.pass && r.range_limited);
        assert!(check_growth(&Nonlinearity::exponential(), [-1.0, 1.0], 10).is_err());
        let tight = Nonlinearity::cubic().with_growth(Growth::new(0.0, 5.0, 1.0).unwrap());
        assert!(!check_growth(&tight, [-1.0, 1.0], 11).unwrap().pass);
    }

    #[test]
    fn polynomial_growth_dominates_second_derivative() {
        let nl = Nonlinearity::polynomial("p", vec![0.3, -1.0, 2.0, -0.5, 0.25]).unwrap();
        assert!(check_growth(&nl, [-20.0, 20.0], 4001).unwrap().pass);
    }

    #[test]
    fn expression_nonlinearity_matches_builtin() {
        let e = Nonlinearity::expression("u^3 - u").unwrap();
        let b = Nonlinearity::allen_cahn();
        for &x in &[-1.3, 0.0, 0.4, 2.0] {
            assert!((e.f(x) - b.f(x)).abs() < 1e-13);
            assert!((e.df(x) - b.df(x)).abs() < 1e-13);
            assert!((e.d2f(x) - b.d2f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn summability_examples() {
        assert_eq!(check_summability(3, 6.0, 1.0), Regularity::Hi);
        assert_eq!(check_summability(1, f64::INFINITY, 1.0), Regularity::Lo);
        assert!(summability_hi(1, f64::INFINITY, 1.0));
        assert_eq!(check_summability(3, 4.0, 1.0), Regularity::Fail);
        assert_eq!(check_summability(2, 2.0, 1.0), Regularity::Fail);
        assert_eq!(check_summability(1, 2.0, f64::INFINITY), Regularity::Hi);
    }

    #[test]
    fn decay_r_examples() {
        let g = unit_grid(41);
        let tg = TimeGrid::uniform(10.0, 100).unwrap();
        let zeros: Vec<Field> = tg.nodes().iter().map(|_| Field::zeros(&g)).collect();
        assert_eq!(
            check_decay_r(&g, BcKind::Dirichlet, &zeros, &tg, SourceNorm::L2, 0.5, 1.0).unwrap(),
            0.0
        );

        let alpha = 0.5;
        let prof = Source::unit_profile(&g, Field::from_fn(&g, |x| (PI * x).sin())).unwrap();
        assert!((norm_l2_sq(&g, &prof) - 1.0).abs() < 1e-14);
        let series: Vec<Field> = tg
            .nodes()
            .iter()
            .map(|&t| {
                Field(
                    prof.iter()
                        .map(|v| v * (1.0 + t).powf(-alpha / 2.0))
                        .collect(),
                )
            })
            .collect();
        let c = check_decay_r(
            &g,
            BcKind::Dirichlet,
            &series,
            &tg,
            SourceNorm::L2,
            alpha,
            1.0,
        )
        .unwrap();
        let want = tg.nodes()[1..]
            .iter()
            .map(|t| t.powf(alpha) * (1.0 + t).powf(-alpha))
            .fold(0.0, f64::max);
        assert!((c - want).abs() < 1e-12 && c <= 1.0);

        // indicator spikes on [j, j + j^-4]: the sup over spike nodes never decays
        let nodes: Vec<f64> = (1..=20)
            .flat_map(|j| {
                let j = j as f64;
                [j, j + 0.5 * j.powi(-4)]
            })
            .collect();
        let mut all = vec![0.0];
        all.extend(nodes);
        let tg2 = TimeGrid::from_nodes(all).unwrap();
        let spikes: Vec<Field> = tg2
            .nodes()
            .iter()
            .map(|&t| {
                let j = t.floor();
                let on = j >= 1.0 && t - j <= j.powi(-4);
                Field(prof.iter().map(|v| if on { *v } else { 0.0 }).collect())
            })
            .collect();
        let c = check_decay_r(
            &g,
            BcKind::Dirichlet,
            &spikes,
            &tg2,
            SourceNorm::L2,
            alpha,
            1.0,
        )
        .unwrap();
        assert!(c >= 20f64.powf(alpha) * 0.99);
    }

    #[test]
    fn between_states_examples() {
        let g = unit_grid(11);
        let one = Field::constant(&g, 1.0);
        let z = Field::zeros(&g);
        let nl = Nonlinearity::cubic_plus_linear();
        let traj = vec![Field::constant(&g, 2.0), Field::constant(&g, -3.0)];
        assert!(check_between_states(&one, &z, &nl, &traj, &z, 16) >= 1.0);
        let cubic = Nonlinearity::cubic();
        let crossing = vec![Field::constant(&g, 1.0), Field::constant(&g, -1.0)];
        let u_inf = Field::constant(&g, 1.0);
        let m = check_between_states(&one, &z, &cubic, &crossing, &u_inf, 16);
        assert!(m <= 0.0);
        assert_eq!(
            m,
            check_between_states(&one, &z, &cubic, &crossing, &u_inf, 32)
        );
    }

    #[test]
    fn problem_validation() {
        let g = unit_grid(11);
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        let tg = TimeGrid::uniform(1.0, 10).unwrap();
        let u0 = Field::from_fn(&g, |x| (PI * x).sin());
        let mk = |alpha: f64, u0: Field, s: Summability| {
            Problem::new(
                g,
                op.clone(),
                alpha,
                Field::constant(&g, 1.0),
                Field::zeros(&g),
                Nonlinearity::cubic(),
                Source::steady(Field::zeros(&g)),
                u0,
                tg.clone(),
                s,
            )
        };
        assert!(mk(0.5, u0.clone(), Summability::default()).is_ok());
        assert!(mk(1.2, u0.clone(), Summability::default()).is_err());
        assert!(mk(0.5, Field::constant(&g, 1.0), Summability::default()).is_err());
        assert!(mk(
            0.5,
            u0,
            Summability {
                r_exp: f64::INFINITY,
                s_exp: 1.5
            }
        )
        .is_err());
    }

    #[test]
    fn source_evaluation() {
        let g = unit_grid(5);
        let prof = Field::constant(&g, 1.0);
        let s = Source {
            r_inf: Field::constant(&g, 2.0),
            perturbation: Perturbation::Power {
                amplitude: 3.0,
                exponent: 1.0,
                profile: prof,
            },
        };
        assert!(s.at(0, 1.0).iter().all(|v| (v - 3.5).abs() < 1e-15));
        assert!(!s.is_steady());
    }
}
