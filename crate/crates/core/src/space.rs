//! One-dimensional grid, the elliptic operator `𝕃 = -(D u')' + d u`, discrete
//! Sobolev norms and empirical embedding constants.

use std::io::Write;
use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Uniform grid on `[a, b]` with `nx ≥ 3` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    a: f64,
    b: f64,
    nx: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, nx: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::SpaceGrid(format!("need a < b, got [{a}, {b}]")));
        }
        if nx < 3 {
            return Err(Error::SpaceGrid(format!("need at least 3 nodes, got {nx}")));
        }
        Ok(Self {
            a,
            b,
            nx,
            h: (b - a) / (nx - 1) as f64,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.b
        } else {
            self.a + self.h * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Trapezoid quadrature weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nx {
            0.5 * self.h
        } else {
            self.h
        }
    }
}

/// Nodal values on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(grid: &Grid1D) -> Self {
        Self(vec![0.0; grid.nx()])
    }

    pub fn constant(grid: &Grid1D, c: f64) -> Self {
        Self(vec![c; grid.nx()])
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Grid1D, f: F) -> Self {
        Self(grid.points().into_iter().map(f).collect())
    }

    pub fn check_len(&self, grid: &Grid1D) -> Result<()> {
        if self.0.len() != grid.nx() {
            return Err(Error::SpaceGrid(format!(
                "field has {} values, grid has {} nodes",
                self.0.len(),
                grid.nx()
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Writes `x, <name>` rows.
    pub fn write_csv<W: Write>(&self, grid: &Grid1D, name: &str, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", name])?;
        for (i, v) in self.0.iter().enumerate() {
            wtr.write_record([format!("{:.12e}", grid.x(i)), format!("{:.12e}", v)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Time-constant boundary data: values (Dirichlet) or outward fluxes `D ∂_n u` (Neumann).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub kind: BcKind,
    pub data: [f64; 2],
}

impl BoundaryCondition {
    pub fn dirichlet(left: f64, right: f64) -> Self {
        Self {
            kind: BcKind::Dirichlet,
            data: [left, right],
        }
    }

    pub fn neumann(left: f64, right: f64) -> Self {
        Self {
            kind: BcKind::Neumann,
            data: [left, right],
        }
    }

    pub fn homogeneous(&self) -> Self {
        Self {
            kind: self.kind,
            data: [0.0, 0.0],
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        self.kind == BcKind::Dirichlet
    }
}

/// Tridiagonal matrix; `lower[i]` couples row `i` to `i-1`, `upper[i]` to `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.lower[i] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm; a vanishing pivot is reported with its node.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let scale = self
            .diag
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = self.diag[i] - self.lower[i] * c[i - 1];
            }
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
                return Err(Error::SingularJacobian { node: i, pivot });
            }
            c[i] = if i + 1 < n {
                self.upper[i] / pivot
            } else {
                0.0
            };
            d[i] = if i == 0 {
                rhs[0] / pivot
            } else {
                (rhs[i] - self.lower[i] * d[i - 1]) / pivot
            };
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// `𝕃 u = -(D u')' + d u` with boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOp {
    diffusion: Field,
    reaction: Field,
    bc: BoundaryCondition,
}

impl EllipticOp {
    pub fn new(diffusion: Field, reaction: Field, bc: BoundaryCondition) -> Result<Self> {
        if diffusion.is_empty() || diffusion.len() != reaction.len() {
            return Err(Error::Ellipticity(
                "D and d must be nodal fields of equal length".into(),
            ));
        }
        if let Some((i, v)) = diffusion
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::Ellipticity(format!(
                "D = {v} at node {i}; need min D > 0"
            )));
        }
        if let Some((i, v)) = reaction
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Ellipticity(format!(
                "d = {v} at node {i}; need d >= 0"
            )));
        }
        Ok(Self {
            diffusion,
            reaction,
            bc,
        })
    }

    /// `-u'' + c u` with constant coefficients.
    pub fn constant(
        grid: &Grid1D,
        diffusion: f64,
        reaction: f64,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        Self::new(
            Field::constant(grid, diffusion),
            Field::constant(grid, reaction),
            bc,
        )
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn diffusion(&self) -> &Field {
        &self.diffusion
    }

    pub fn reaction(&self) -> &Field {
        &self.reaction
    }

    /// Ellipticity constant `c_D = min D`.
    pub fn c_d(&self) -> f64 {
        self.diffusion.min()
    }

    fn half(&self, i: usize) -> f64 {
        let (a, b) = (self.diffusion[i], self.diffusion[i + 1]);
        2.0 * a * b / (a + b)
    }

    fn check(&self, grid: &Grid1D) -> Result<()> {
        if self.diffusion.len() != grid.nx() {
            return Err(Error::SpaceGrid(format!(
                "operator has {} nodes, grid has {}",
                self.diffusion.len(),
                grid.nx()
            )));
        }
        Ok(())
    }

    /// `𝕃_h u` including boundary data; zero at Dirichlet boundary nodes.
    pub fn apply(&self, grid: &Grid1D, u: &[f64]) -> Vec<f64> {
        let mut out = self.apply_homogeneous(grid, u);
        if self.bc.kind == BcKind::Neumann {
            let n = grid.nx();
            out[0] -= 2.0 * self.bc.data[0] / grid.h();
            out[n - 1] -= 2.0 * self.bc.data[1] / grid.h();
        }
        out
    }

    /// `𝕃_h u` with homogeneous boundary data.
    pub fn apply_homogeneous(&self, grid: &Grid1D, u: &[f64]) -> Vec<f64> {
        let n = grid.nx();
        let h2 = grid.h() * grid.h();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            let flux_r = self.half(i) * (u[i + 1] - u[i]);
            let flux_l = self.half(i - 1) * (u[i] - u[i - 1]);
            out[i] = -(flux_r - flux_l) / h2 + self.reaction[i] * u[i];
        }
        if self.bc.kind == BcKind::Neumann {
            out[0] = 2.0 * self.half(0) * (u[0] - u[1]) / h2 + self.reaction[0] * u[0];
            out[n - 1] = 2.0 * self.half(n - 2) * (u[n - 1] - u[n - 2]) / h2
                + self.reaction[n - 1] * u[n - 1];
        }
        out
    }
}

/// Matrix of `𝕃_h`: identity rows at Dirichlet nodes (decoupled from the
/// interior), finite-volume half cells for Neumann.
pub fn assemble(op: &EllipticOp, grid: &Grid1D) -> Result<Tridiag> {
    op.check(grid)?;
    let n = grid.nx();
    let h2 = grid.h() * grid.h();
    let mut m = Tridiag {
        lower: vec![0.0; n],
        diag: vec![0.0; n],
        upper: vec![0.0; n],
    };
    for i in 1..n - 1 {
        let (l, r) = (op.half(i - 1), op.half(i));
        m.lower[i] = -l / h2;
        m.upper[i] = -r / h2;
        m.diag[i] = (l + r) / h2 + op.reaction[i];
    }
    match op.bc.kind {
        BcKind::Dirichlet => {
            m.diag[0] = 1.0;
            m.diag[n - 1] = 1.0;
            m.lower[1] = 0.0;
            m.upper[n - 2] = 0.0;
        }
        BcKind::Neumann => {
            m.diag[0] = 2.0 * op.half(0) / h2 + op.reaction[0];
            m.upper[0] = -2.0 * op.half(0) / h2;
            m.diag[n - 1] = 2.0 * op.half(n - 2) / h2 + op.reaction[n - 1];
            m.lower[n - 1] = -2.0 * op.half(n - 2) / h2;
        }
    }
    Ok(m)
}

pub fn inner_l2(grid: &Grid1D, u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .enumerate()
        .map(|(i, (a, b))| grid.weight(i) * a * b)
        .sum()
}

pub fn norm_l2_sq(grid: &Grid1D, v: &[f64]) -> f64 {
    inner_l2(grid, v, v)
}

/// `Σ h ((v_{i+1} - v_i)/h)²`.
pub fn grad_sq(grid: &Grid1D, v: &[f64]) -> f64 {
    let h = grid.h();
    v.windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]) / h)
        .sum()
}

/// Discrete second derivative with one-sided closures at the ends.
pub fn second_difference(grid: &Grid1D, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let h2 = grid.h() * grid.h();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    if n >= 4 {
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
        out[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
    } else {
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    out
}

pub fn norm_h1_sq(grid: &Grid1D, v: &[f64]) -> f64 {
    norm_l2_sq(grid, v) + grad_sq(grid, v)
}

pub fn norm_h2_sq(grid: &Grid1D, v: &[f64]) -> f64 {
    norm_h1_sq(grid, v) + norm_l2_sq(grid, &second_difference(grid, v))
}

/// `⟨v, (-Δ_h + I)^{-1} v⟩` with homogeneous conditions of the given kind.
pub fn norm_hminus1_sq(grid: &Grid1D, v: &[f64], bc: BcKind) -> Result<f64> {
    let op = EllipticOp::constant(
        grid,
        1.0,
        1.0,
        BoundaryCondition {
            kind: bc,
            data: [0.0, 0.0],
        },
    )?;
    let m = assemble(&op, grid)?;
    let mut rhs = v.to_vec();
    if bc == BcKind::Dirichlet {
        let n = rhs.len();
        rhs[0] = 0.0;
        rhs[n - 1] = 0.0;
    }
    let w = m.solve(&rhs)?;
    Ok(inner_l2(grid, &rhs, &w).max(0.0))
}

pub fn norm_hminus1(grid: &Grid1D, v: &[f64], bc: BcKind) -> Result<f64> {
    Ok(norm_hminus1_sq(grid, v, bc)?.sqrt())
}

/// `‖v‖_{H^s}` for `s ∈ {-1, 0, 1, 2}`.
pub fn norm_hs(grid: &Grid1D, v: &[f64], s: i32, bc: BcKind) -> Result<f64> {
    if v.len() != grid.nx() {
        return Err(Error::SpaceGrid(format!(
            "field has {} values, grid has {}",
            v.len(),
            grid.nx()
        )));
    }
    Ok(match s {
        -1 => norm_hminus1_sq(grid, v, bc)?.sqrt(),
        0 => norm_l2_sq(grid, v).sqrt(),
        1 => norm_h1_sq(grid, v).sqrt(),
        2 => norm_h2_sq(grid, v).sqrt(),
        _ => return Err(Error::Domain(format!("Sobolev index {s} not supported"))),
    })
}

/// Discrete `L^q` norm (trapezoid rule), `q = ∞` allowed.
pub fn norm_lq(grid: &Grid1D, v: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| grid.weight(i) * x.abs().powf(q))
        .sum();
    s.powf(1.0 / q)
}

/// Deterministic, prefix-stable family of test fields with homogeneous data.
///
/// Fixed part: constants (Neumann), Fourier modes, Green's functions of
/// `-Δ_h + I`, smooth bumps; then `n_random` random mode combinations.
pub fn embedding_test_set(
    grid: &Grid1D,
    bc: BcKind,
    n_random: usize,
    seed: u64,
) -> Result<Vec<Field>> {
    let n = grid.nx();
    let len = grid.length();
    let mut set = Vec::new();
    let mode = |k: usize| -> Field {
        Field::from_fn(grid, |x| {
            let s = (x - grid.a()) / len;
            match bc {
                BcKind::Dirichlet => (k as f64 * std::f64::consts::PI * s).sin(),
                BcKind::Neumann => (k as f64 * std::f64::consts::PI * s).cos(),
            }
        })
    };
    if bc == BcKind::Neumann {
        set.push(Field::constant(grid, 1.0));
    }
    let kmax = 24.min(n - 2);
    for k in 1..=kmax {
        set.push(mode(k));
    }
    let op = EllipticOp::constant(
        grid,
        1.0,
        1.0,
        BoundaryCondition {
            kind: bc,
            data: [0.0, 0.0],
        },
    )?;
    let m = assemble(&op, grid)?;
    let nodes: Vec<usize> = if bc == BcKind::Dirichlet {
        (1..n - 1).collect()
    } else {
        (0..n).collect()
    };
    let stride = (nodes.len() / 33).max(1);
    for &i in nodes.iter().step_by(stride) {
        let mut rhs = vec![0.0; n];
        rhs[i] = 1.0 / grid.weight(i);
        set.push(Field(m.solve(&rhs)?));
    }
    for c in [0.25, 0.5, 0.75] {
        for w in [0.05, 0.15, 0.3] {
            set.push(Field::from_fn(grid, |x| {
                let s = (x - grid.a()) / len;
                let bump = (-((s - c) / w).powi(2)).exp();
                match bc {
                    BcKind::Dirichlet => bump * (std::f64::consts::PI * s).sin(),
                    BcKind::Neumann => bump,
                }
            }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<Field> = (1..=kmax.min(12)).map(mode).collect();
    for _ in 0..n_random {
        let mut v = vec![0.0; n];
        for (k, md) in modes.iter().enumerate() {
            let c: f64 = rng.random_range(-1.0..1.0) / (1.0 + k as f64);
            for (vi, mi) in v.iter_mut().zip(md.iter()) {
                *vi += c * mi;
            }
        }
        if bc == BcKind::Neumann {
            let c: f64 = rng.random_range(-1.0..1.0);
            v.iter_mut().for_each(|x| *x += c);
        }
        set.push(Field(v));
    }
    Ok(set)
}

/// Empirical embedding constants (lower bounds of the continuous ones).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConstants {
    pub h1_linf: f64,
    pub h2_linf: f64,
    pub h1_l2: f64,
    /// `C_{L¹→H^{-1}}`, equal to `C_{H¹→L^∞}` by duality.
    pub l1_hminus1: f64,
    /// `(q, C_{L²→L^q})`
    pub l2_lq: Vec<(f64, f64)>,
    /// `(q, C_{H¹→L^q})`
    pub h1_lq: Vec<(f64, f64)>,
    pub samples: usize,
}

impl EmbeddingConstants {
    /// `C_{L²→L^q}` if it was requested.
    pub fn l2_to(&self, q: f64) -> Option<f64> {
        lookup(&self.l2_lq, q)
    }

    /// `C_{H¹→L^q}` if it was requested.
    pub fn h1_to(&self, q: f64) -> Option<f64> {
        lookup(&self.h1_lq, q)
    }
}

fn lookup(table: &[(f64, f64)], q: f64) -> Option<f64> {
    table.iter().find(|(e, _)| *e == q).map(|(_, c)| *c)
}

/// Maximises the embedding ratios over [`embedding_test_set`].
pub fn embedding_constants(
    grid: &Grid1D,
    bc: BcKind,
    exponents: &[f64],
    n_random: usize,
    seed: u64,
) -> Result<EmbeddingConstants> {
    let set = embedding_test_set(grid, bc, n_random, seed)?;
    Ok(embedding_constants_over(grid, &set, exponents))
}

pub fn embedding_constants_over(
    grid: &Grid1D,
    set: &[Field],
    exponents: &[f64],
) -> EmbeddingConstants {
    let mut c = EmbeddingConstants {
        h1_linf: 0.0,
        h2_linf: 0.0,
        h1_l2: 0.0,
        l1_hminus1: 0.0,
        l2_lq: exponents.iter().map(|q| (*q, 0.0)).collect(),
        h1_lq: exponents.iter().map(|q| (*q, 0.0)).collect(),
        samples: set.len(),
    };
    for v in set {
        let l2 = norm_l2_sq(grid, v).sqrt();
        if l2 == 0.0 {
            continue;
        }
        let h1 = norm_h1_sq(grid, v).sqrt();
        let h2 = norm_h2_sq(grid, v).sqrt();
        let linf = norm_lq(grid, v, f64::INFINITY);
        c.h1_linf = c.h1_linf.max(linf / h1);
        c.h2_linf = c.h2_linf.max(linf / h2);
        c.h1_l2 = c.h1_l2.max(l2 / h1);
        for (q, cq) in c.l2_lq.iter_mut() {
            *cq = cq.max(norm_lq(grid, v, *q) / l2);
        }
        for (q, cq) in c.h1_lq.iter_mut() {
            *cq = cq.max(norm_lq(grid, v, *q) / h1);
        }
    }
    c.l1_hminus1 = c.h1_linf;
    c
}

/// Empirical elliptic-regularity constant
/// `max ‖v‖_{H²} / (‖𝕃_h v‖_{L²} + ‖v‖_{L²})` over the test set.
pub fn elliptic_regularity_constant(op: &EllipticOp, grid: &Grid1D, set: &[Field]) -> f64 {
    let mut best: f64 = 0.0;
    for v in set {
        let lv = op.apply_homogeneous(grid, v);
        let den = norm_l2_sq(grid, &interior(op, &lv)).sqrt() + norm_l2_sq(grid, v).sqrt();
        if den > 0.0 {
            best = best.max(norm_h2_sq(grid, v).sqrt() / den);
        }
    }
    best
}

// Dirichlet rows of 𝕃_h v are zero by convention; extend by the neighbour so
// the L² norm sees the boundary half cells.
fn interior(op: &EllipticOp, lv: &[f64]) -> Vec<f64> {
    let mut out = lv.to_vec();
    if op.bc().is_dirichlet() {
        let n = out.len();
        out[0] = out[1];
        out[n - 1] = out[n - 2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(nx: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, nx).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 0.0, 5).is_err());
        let g = unit(11);
        assert!((g.h() - 0.1).abs() < 1e-15);
        assert_eq!(g.x(10), 1.0);
    }

    #[test]
    fn ellipticity_is_enforced() {
        let g = unit(5);
        let bc = BoundaryCondition::dirichlet(0.0, 0.0);
        assert!(EllipticOp::constant(&g, 0.0, 0.0, bc).is_err());
        assert!(EllipticOp::constant(&g, 1.0, -1.0, bc).is_err());
    }

    #[test]
    fn laplacian_stencil() {
        let g = unit(11);
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        let m = assemble(&op, &g).unwrap();
        let h2 = 0.01;
        assert!((m.diag[5] - 2.0 / h2).abs() < 1e-9);
        assert!((m.lower[5] + 1.0 / h2).abs() < 1e-9);
        assert!((m.upper[5] + 1.0 / h2).abs() < 1e-9);
        assert_eq!(m.diag[0], 1.0);
    }

    #[test]
    fn apply_sine_is_second_order() {
        let mut errs = Vec::new();
        for nx in [41, 81] {
            let g = unit(nx);
            let op =
                EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
            let u = Field::from_fn(&g, |x| (PI * x).sin());
            let lu = op.apply(&g, &u);
            let e = (1..nx - 1)
                .map(|i| (lu[i] - PI * PI * u[i]).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.8, "{errs:?}");
    }

    #[test]
    fn neumann_constants_in_kernel() {
        let g = unit(21);
        let d = Field::from_fn(&g, |x| 1.0 + x * x);
        let op =
            EllipticOp::new(d, Field::zeros(&g), BoundaryCondition::neumann(0.0, 0.0)).unwrap();
        let lu = op.apply(&g, &Field::constant(&g, 3.0));
        assert!(lu.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn neumann_matrix_is_weighted_symmetric() {
        let g = unit(17);
        let d = Field::from_fn(&g, |x| 1.0 + x);
        let op = EllipticOp::new(
            d,
            Field::constant(&g, 0.5),
            BoundaryCondition::neumann(0.0, 0.0),
        )
        .unwrap();
        let m = assemble(&op, &g).unwrap();
        for i in 0..16 {
            let a = g.weight(i) * m.upper[i];
            let b = g.weight(i + 1) * m.lower[i + 1];
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
    }

    #[test]
    fn thomas_solves_and_reports_singular_node() {
        let m = Tridiag {
            lower: vec![0.0, -1.0, -1.0],
            diag: vec![2.0, 2.0, 2.0],
            upper: vec![-1.0, -1.0, 0.0],
        };
        let x = m.solve(&[1.0, 0.0, 1.0]).unwrap();
        let back = m.mul(&x);
        assert!((back[0] - 1.0).abs() < 1e-14 && back[1].abs() < 1e-14);
        let s = Tridiag {
            lower: vec![0.0, 1.0, 0.0],
            diag: vec![1.0, 1.0, 1.0],
            upper: vec![1.0, 0.0, 0.0],
        };
        match s.solve(&[1.0, 1.0, 1.0]) {
            Err(Error::SingularJacobian { node, .. }) => assert_eq!(node, 1),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn norm_examples() {
        let g = unit(401);
        let one = Field::constant(&g, 1.0);
        assert!((norm_hs(&g, &one, 0, BcKind::Neumann).unwrap() - 1.0).abs() < 1e-14);
        let s = Field::from_fn(&g, |x| (PI * x).sin());
        assert!((norm_hs(&g, &s, 0, BcKind::Dirichlet).unwrap() - 0.5f64.sqrt()).abs() < 1e-6);
        let h1 = norm_hs(&g, &s, 1, BcKind::Dirichlet).unwrap();
        assert!((h1 - (0.5 + PI * PI / 2.0).sqrt()).abs() < 1e-4);
        let hm1 = norm_hminus1(&g, &s, BcKind::Dirichlet).unwrap();
        assert!((hm1 - (1.0 / (2.0 * (PI * PI + 1.0))).sqrt()).abs() < 1e-5);
        assert_eq!(
            norm_hminus1(&g, &Field::zeros(&g), BcKind::Dirichlet).unwrap(),
            0.0
        );
        assert!(norm_hs(&g, &s, 3, BcKind::Dirichlet).is_err());
    }

    #[test]
    fn embedding_constant_examples() {
        let g = unit(101);
        let c = embedding_constants(&g, BcKind::Dirichlet, &[2.0, 1.0, 4.0], 50, 7).unwrap();
        assert!((c.l2_to(2.0).unwrap() - 1.0).abs() < 1e-12);
        let s = Field::from_fn(&g, |x| (PI * x).sin());
        assert!(c.h1_linf >= 1.0 / norm_h1_sq(&g, &s).sqrt());
        // continuous value sqrt(sinh²(1/2)/sinh(1)) for H¹₀(0,1)
        let exact = ((0.5f64).sinh().powi(2) / 1.0f64.sinh()).sqrt();
        assert!((c.h1_linf - exact).abs() < 1e-3, "{} vs {exact}", c.h1_linf);
        assert_eq!(c.l1_hminus1, c.h1_linf);
        let bigger = embedding_constants(&g, BcKind::Dirichlet, &[2.0, 1.0, 4.0], 80, 7).unwrap();
        assert!(bigger.h1_linf >= c.h1_linf && bigger.h2_linf >= c.h2_linf);
        assert!(bigger.h1_to(4.0).unwrap() >= c.h1_to(4.0).unwrap());
    }

    #[test]
    fn regularity_constant_stable_under_refinement() {
        let mut cs = Vec::new();
        for nx in [51, 101, 201] {
            let g = unit(nx);
            let d = Field::from_fn(&g, |x| 1.0 + 0.5 * (PI * x).sin());
            let op = EllipticOp::new(d, Field::zeros(&g), BoundaryCondition::dirichlet(0.0, 0.0))
                .unwrap();
            let set = embedding_test_set(&g, BcKind::Dirichlet, 40, 3).unwrap();
            cs.push(elliptic_regularity_constant(&op, &g, &set));
        }
        assert!(cs.iter().all(|c| c.is_finite() && *c > 0.0));
        assert!(cs[2] / cs[0] < 1.5, "{cs:?}");
    }
}
