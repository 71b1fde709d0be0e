//! Steady state 𝕃u∞ = q u∞ - p f(u∞) + r∞ by damped Newton.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Nonlinearity, Problem};
use crate::space::{assemble, norm_l2_sq, BcKind, EllipticOp, Field, Grid1D, Tridiag};

/// Newton controls shared by the steady and transient solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_iter: 50,
            max_halvings: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SteadyMethod {
    #[default]
    Newton,
    /// Shifted fixed-point iteration; slower, tolerant of poor initial guesses.
    Monotone,
}

#[derive(Clone, Debug, Default)]
pub struct SteadyOptions {
    pub newton: NewtonOptions,
    pub method: SteadyMethod,
    pub initial: Option<Field>,
}

/// Convergence record of an iterative solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub tolerance: f64,
    pub converged: bool,
}

impl Convergence {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

/// The discrete system shift·u + 𝕃_h u - q u + p f(u) = rhs, with Dirichlet rows u = g.
pub struct NonlinearSystem<'a> {
    pub grid: &'a Grid1D,
    pub op: &'a EllipticOp,
    pub matrix: &'a Tridiag,
    pub p: &'a [f64],
    pub q: &'a [f64],
    pub nl: &'a Nonlinearity,
    pub shift: f64,
    pub rhs: &'a [f64],
}

impl NonlinearSystem<'_> {
    fn dirichlet(&self) -> bool {
        self.op.bc().is_dirichlet()
    }

    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.op.apply(self.grid, u);
        for (i, ri) in r.iter_mut().enumerate() {
            *ri += self.shift * u[i] - self.q[i] * u[i] + self.p[i] * self.nl.f(u[i]) - self.rhs[i];
        }
        if self.dirichlet() {
            let n = u.len();
            let g = self.op.bc().data;
            r[0] = u[0] - g[0];
            r[n - 1] = u[n - 1] - g[1];
        }
        r
    }

    pub fn jacobian(&self, u: &[f64]) -> Tridiag {
        let mut j = self.matrix.clone();
        let n = u.len();
        let (lo, hi) = if self.dirichlet() { (1, n - 1) } else { (0, n) };
        for (i, ui) in u.iter().enumerate().take(hi).skip(lo) {
            j.diag[i] += self.shift + self.p[i] * self.nl.df(*ui) - self.q[i];
        }
        j
    }

    pub fn residual_norm(&self, u: &[f64]) -> f64 {
        norm_l2_sq(self.grid, &self.residual(u)).sqrt()
    }

    /// ‖rhs‖ including the Dirichlet data, the scale of the relative tolerance.
    pub fn scale(&self) -> f64 {
        let mut r = self.rhs.to_vec();
        if self.dirichlet() {
            let n = r.len();
            r[0] = self.op.bc().data[0];
            r[n - 1] = self.op.bc().data[1];
        }
        norm_l2_sq(self.grid, &r).sqrt()
    }
}

/// One damped Newton update; the step is halved until the residual decreases.
pub fn newton_step(
    sys: &NonlinearSystem<'_>,
    u: &[f64],
    opts: &NewtonOptions,
) -> Result<(Field, f64)> {
    let r = sys.residual(u);
    let r0 = norm_l2_sq(sys.grid, &r).sqrt();
    let neg: Vec<f64> = r.iter().map(|v| -v).collect();
    let delta = sys.jacobian(u).solve(&neg)?;
    let mut lambda = 1.0;
    for _ in 0..=opts.max_halvings {
        let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
        let rt = sys.residual_norm(&trial);
        if rt < r0 {
            return Ok((Field(trial), rt));
        }
        lambda *= 0.5;
    }
    Err(Error::NewtonStagnation {
        iterations: 0,
        residual: r0,
    })
}

/// Damped Newton from `u0` until ‖R‖ ≤ rtol·scale + atol.
pub fn newton_solve(
    sys: &NonlinearSystem<'_>,
    u0: &[f64],
    opts: &NewtonOptions,
) -> Result<(Field, Convergence)> {
    let tol = opts.rtol * sys.scale() + opts.atol;
    let mut u = Field(u0.to_vec());
    let mut res = sys.residual_norm(&u);
    let mut rec = Convergence {
        iterations: 0,
        residuals: vec![res],
        tolerance: tol,
        converged: false,
    };
    while res > tol {
        if rec.iterations >= opts.max_iter {
            return Err(Error::NewtonStagnation {
                iterations: rec.iterations,
                residual: res,
            });
        }
        match newton_step(sys, &u, opts) {
            Ok((next, r)) => {
                u = next;
                res = r;
            }
            Err(Error::NewtonStagnation { .. }) => {
                return Err(Error::NewtonStagnation {
                    iterations: rec.iterations,
                    residual: res,
                });
            }
            Err(e) => return Err(e),
        }
        rec.iterations += 1;
        rec.residuals.push(res);
    }
    rec.converged = true;
    Ok((u, rec))
}

/// Shifted fixed-point iteration (𝕃_h + shift + σ) u_{k+1} = σu_k + q u_k - p f(u_k) + rhs.
pub fn monotone_solve(
    sys: &NonlinearSystem<'_>,
    u0: &[f64],
    opts: &NewtonOptions,
    max_iter: usize,
) -> Result<(Field, Convergence)> {
    let tol = opts.rtol * sys.scale() + opts.atol;
    let n = u0.len();
    let dirichlet = sys.dirichlet();
    let mut u = Field(u0.to_vec());
    let mut res = sys.residual_norm(&u);
    let mut rec = Convergence {
        iterations: 0,
        residuals: vec![res],
        tolerance: tol,
        converged: false,
    };
    while res > tol {
        if rec.iterations >= max_iter {
            return Err(Error::NewtonStagnation {
                iterations: rec.iterations,
                residual: res,
            });
        }
        let sigma = (0..n)
            .map(|i| sys.p[i] * sys.nl.df(u[i]) - sys.q[i])
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut m = sys.matrix.clone();
        let mut b = vec![0.0; n];
        for i in 0..n {
            if dirichlet && (i == 0 || i == n - 1) {
                b[i] = sys.op.bc().data[if i == 0 { 0 } else { 1 }];
                continue;
            }
            m.diag[i] += sys.shift + sigma;
            b[i] = sigma * u[i] + sys.q[i] * u[i] - sys.p[i] * sys.nl.f(u[i]) + sys.rhs[i];
            if sys.op.bc().kind == BcKind::Neumann && (i == 0 || i == n - 1) {
                let g = sys.op.bc().data[if i == 0 { 0 } else { 1 }];
                b[i] += 2.0 * g / sys.grid.h();
            }
        }
        if dirichlet {
            let (c0, c1) = boundary_couplings(sys.op, sys.grid);
            b[1] -= c0 * b[0];
            b[n - 2] -= c1 * b[n - 1];
        }
        u = Field(m.solve(&b)?);
        res = sys.residual_norm(&u);
        rec.iterations += 1;
        rec.residuals.push(res);
        if !res.is_finite() {
            return Err(Error::NewtonStagnation {
                iterations: rec.iterations,
                residual: res,
            });
        }
    }
    rec.converged = true;
    Ok((u, rec))
}

// Couplings of the first and last interior rows to the Dirichlet nodes.
fn boundary_couplings(op: &EllipticOp, grid: &Grid1D) -> (f64, f64) {
    let n = grid.nx();
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let mut e1 = vec![0.0; n];
    e1[n - 1] = 1.0;
    let a = op.apply_homogeneous(grid, &e0)[1];
    let b = op.apply_homogeneous(grid, &e1)[n - 2];
    (a, b)
}

/// Steady state with its convergence record.
#[derive(Clone, Debug)]
pub struct SteadySolution {
    pub u_inf: Field,
    pub convergence: Convergence,
    pub method: SteadyMethod,
}

impl SteadySolution {
    pub fn write_csv<W: Write>(&self, grid: &Grid1D, w: W) -> Result<()> {
        self.u_inf.write_csv(grid, "u_inf", w)
    }
}

/// Solution of the linear problem (𝕃_h - q) u = r with f frozen at 0.
pub fn linear_guess(grid: &Grid1D, op: &EllipticOp, q: &[f64], r: &[f64]) -> Result<Field> {
    let matrix = assemble(op, grid)?;
    let zero_p = vec![0.0; q.len()];
    let zero = Nonlinearity::zero();
    let sys = NonlinearSystem {
        grid,
        op,
        matrix: &matrix,
        p: &zero_p,
        q,
        nl: &zero,
        shift: 0.0,
        rhs: r,
    };
    let start = boundary_lift(grid, op);
    let neg: Vec<f64> = sys.residual(&start).iter().map(|v| -v).collect();
    let delta = sys.jacobian(&start).solve(&neg)?;
    Ok(Field(
        start.iter().zip(&delta).map(|(a, b)| a + b).collect(),
    ))
}

/// Linear interpolation of Dirichlet data (zero for Neumann).
pub fn boundary_lift(grid: &Grid1D, op: &EllipticOp) -> Field {
    let bc = op.bc();
    if bc.is_dirichlet() {
        let (a, b) = (grid.a(), grid.b());
        Field::from_fn(grid, |x| {
            bc.data[0] + (bc.data[1] - bc.data[0]) * (x - a) / (b - a)
        })
    } else {
        Field::zeros(grid)
    }
}

/// Solves the steady problem of `problem` (its r∞, p, q, f and boundary data).
pub fn solve_steady(problem: &Problem, opts: &SteadyOptions) -> Result<SteadySolution> {
    let grid = &problem.grid;
    let op = &problem.op;
    let matrix = assemble(op, grid)?;
    let sys = NonlinearSystem {
        grid,
        op,
        matrix: &matrix,
        p: &problem.p,
        q: &problem.q,
        nl: &problem.nl,
        shift: 0.0,
        rhs: &problem.source.r_inf,
    };
    let start = match &opts.initial {
        Some(u) => {
            u.check_len(grid)?;
            u.clone()
        }
        None => linear_guess(grid, op, &problem.q, &problem.source.r_inf)
            .unwrap_or_else(|_| boundary_lift(grid, op)),
    };
    let (u_inf, convergence) = match opts.method {
        SteadyMethod::Newton => newton_solve(&sys, &start, &opts.newton)?,
        SteadyMethod::Monotone => monotone_solve(&sys, &start, &opts.newton, 20_000)?,
    };
    Ok(SteadySolution {
        u_inf,
        convergence,
        method: opts.method,
    })
}

/// Jacobian 𝕃_h + diag(p f'(u) - q) of the steady residual at `u`.
pub fn steady_jacobian(problem: &Problem, u: &[f64]) -> Result<Tridiag> {
    let matrix = assemble(&problem.op, &problem.grid)?;
    let sys = NonlinearSystem {
        grid: &problem.grid,
        op: &problem.op,
        matrix: &matrix,
        p: &problem.p,
        q: &problem.q,
        nl: &problem.nl,
        shift: 0.0,
        rhs: &problem.source.r_inf,
    };
    Ok(sys.jacobian(u))
}

/// Smallest eigenvalue of `m` by inverse iteration with a Rayleigh quotient in the
/// trapezoidal inner product; Dirichlet rows are excluded when `dirichlet` is set.
pub fn smallest_eigenvalue(
    m: &Tridiag,
    grid: &Grid1D,
    dirichlet: bool,
    iterations: usize,
) -> Result<f64> {
    let n = m.len();
    let (lo, hi) = if dirichlet { (1, n - 1) } else { (0, n) };
    let sub = Tridiag {
        lower: m.lower[lo..hi].to_vec(),
        diag: m.diag[lo..hi].to_vec(),
        upper: m.upper[lo..hi].to_vec(),
    };
    let k = hi - lo;
    let mut v: Vec<f64> = (0..k)
        .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64)
        .collect();
    let weights: Vec<f64> = (lo..hi).map(|i| grid.weight(i)).collect();
    let wnorm = |v: &[f64]| {
        v.iter()
            .zip(&weights)
            .map(|(a, w)| w * a * a)
            .sum::<f64>()
            .sqrt()
    };
    for _ in 0..iterations {
        let next = sub.solve(&v)?;
        let s = wnorm(&next);
        v = next.iter().map(|a| a / s).collect();
    }
    let mv = sub.mul(&v);
    let num: f64 = v
        .iter()
        .zip(&mv)
        .zip(&weights)
        .map(|((a, b), w)| w * a * b)
        .sum();
    let den: f64 = v.iter().zip(&weights).map(|(a, w)| w * a * a).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::TimeGrid;
    use crate::model::{check_pinfty, Source, Summability};
    use crate::space::BoundaryCondition;
    use std::f64::consts::PI;

    fn problem(
        nx: usize,
        d: f64,
        p: f64,
        q: f64,
        nl: Nonlinearity,
        r: impl Fn(f64) -> f64,
    ) -> Problem {
        let g = Grid1D::new(0.0, 1.0, nx).unwrap();
        let op = EllipticOp::constant(&g, 1.0, d, BoundaryCondition::dirichlet(0.0, 0.0)).unwrap();
        Problem::new(
            g,
            op,
            1.0,
            Field::constant(&g, p),
            Field::constant(&g, q),
            nl,
            Source::steady(Field::from_fn(&g, r)),
            Field::zeros(&g),
            TimeGrid::uniform(1.0, 1).unwrap(),
            Summability::default(),
        )
        .unwrap()
    }

    fn l2_err(g: &Grid1D, u: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let e: Vec<f64> = (0..g.nx()).map(|i| u[i] - f(g.x(i))).collect();
        norm_l2_sq(g, &e).sqrt()
    }

    #[test]
    fn trivial_problem_gives_zero() {
        let pr = problem(51, 0.0, 0.0, 0.0, Nonlinearity::cubic(), |_| 0.0);
        let s = solve_steady(&pr, &SteadyOptions::default()).unwrap();
        assert!(s.u_inf.max_abs() == 0.0);
    }

    #[test]
    fn linear_eigenfunction() {
        let pr = problem(101, 1.0, 0.0, 0.0, Nonlinearity::zero(), |x| (PI * x).sin());
        let s = solve_steady(&pr, &SteadyOptions::default()).unwrap();
        assert!(s.convergence.iterations <= 1);
        let err = (0..101)
            .map(|i| (s.u_inf[i] - (PI * pr.grid.x(i)).sin() / (PI * PI + 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    fn manufactured(nx: usize) -> Problem {
        problem(nx, 0.0, 1.0, 0.0, Nonlinearity::cubic(), |x| {
            let s = (PI * x).sin();
            PI * PI * s + s * s * s
        })
    }

    #[test]
    fn manufactured_allen_cahn_is_second_order() {
        let mut errs = vec![];
        for nx in [101, 201, 401, 801] {
            let pr = manufactured(nx);
            let opts = SteadyOptions {
                initial: Some(Field::zeros(&pr.grid)),
                ..Default::default()
            };
            let s = solve_steady(&pr, &opts).unwrap();
            assert!(
                s.convergence.iterations <= 12,
                "{}",
                s.convergence.iterations
            );
            let r = s.convergence.residuals.windows(2).all(|w| w[1] < w[0]);
            assert!(r);
            errs.push(l2_err(&pr.grid, &s.u_inf, |x| (PI * x).sin()));
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.6..=4.4).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn exact_solution_is_fixed_point() {
        let pr = manufactured(51);
        let s = solve_steady(&pr, &SteadyOptions::default()).unwrap();
        let opts = SteadyOptions {
            initial: Some(s.u_inf.clone()),
            ..Default::default()
        };
        let again = solve_steady(&pr, &opts).unwrap();
        assert_eq!(again.convergence.iterations, 0);
        assert_eq!(again.u_inf.0, s.u_inf.0);
    }

    #[test]
    fn monotone_fallback_agrees_with_newton() {
        let pr = problem(41, 0.0, 1.0, -1.0, Nonlinearity::allen_cahn(), |x| {
            5.0 * (PI * x).sin()
        });
        let a = solve_steady(&pr, &SteadyOptions::default()).unwrap();
        let opts = SteadyOptions {
            method: SteadyMethod::Monotone,
            ..Default::default()
        };
        let b = solve_steady(&pr, &opts).unwrap();
        assert!(a.u_inf.sub(&b.u_inf).max_abs() < 1e-9);
    }

    #[test]
    fn nonhomogeneous_dirichlet_data() {
        let g = Grid1D::new(0.0, 2.0, 81).unwrap();
        let op =
            EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::dirichlet(1.0, 3.0)).unwrap();
        let pr = Problem::new(
            g,
            op,
            0.5,
            Field::zeros(&g),
            Field::zeros(&g),
            Nonlinearity::zero(),
            Source::steady(Field::zeros(&g)),
            Field::from_fn(&g, |x| 1.0 + x),
            TimeGrid::uniform(1.0, 1).unwrap(),
            Summability::default(),
        )
        .unwrap();
        for method in [SteadyMethod::Newton, SteadyMethod::Monotone] {
            let s = solve_steady(
                &pr,
                &SteadyOptions {
                    method,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(l2_err(&g, &s.u_inf, |x| 1.0 + x) < 1e-10);
        }
    }

    #[test]
    fn neumann_problem() {
        // -u'' + u = (π² + 1) cos(πx), u'(0) = u'(1) = 0
        let g = Grid1D::new(0.0, 1.0, 201).unwrap();
        let op = EllipticOp::constant(&g, 1.0, 1.0, BoundaryCondition::neumann(0.0, 0.0)).unwrap();
        let pr = Problem::new(
            g,
            op,
            0.5,
            Field::zeros(&g),
            Field::zeros(&g),
            Nonlinearity::zero(),
            Source::steady(Field::from_fn(&g, |x| (PI * PI + 1.0) * (PI * x).cos())),
            Field::zeros(&g),
            TimeGrid::uniform(1.0, 1).unwrap(),
            Summability::default(),
        )
        .unwrap();
        let s = solve_steady(&pr, &SteadyOptions::default()).unwrap();
        assert!(l2_err(&g, &s.u_inf, |x| (PI * x).cos()) < 1e-4);
    }

    #[test]
    fn singular_jacobian_names_node() {
        // 𝕃 = -Δ with Neumann data and zero potential is singular
        let g = Grid1D::new(0.0, 1.0, 21).unwrap();
        let op = EllipticOp::constant(&g, 1.0, 0.0, BoundaryCondition::neumann(0.0, 0.0)).unwrap();
        let pr = Problem::new(
            g,
            op,
            0.5,
            Field::zeros(&g),
            Field::zeros(&g),
            Nonlinearity::zero(),
            Source::steady(Field::constant(&g, 1.0)),
            Field::zeros(&g),
            TimeGrid::uniform(1.0, 1).unwrap(),
            Summability::default(),
        )
        .unwrap();
        let opts = SteadyOptions {
            initial: Some(Field::zeros(&g)),
            ..Default::default()
        };
        match solve_steady(&pr, &opts) {
            Err(Error::SingularJacobian { node, .. }) => assert_eq!(node, 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn jacobian_positive_definite_when_pinfty_holds() {
        let pr = problem(81, 0.0, 1.0, -1.0, Nonlinearity::cubic(), |x| {
            (PI * x).sin()
        });
        let s = solve_steady(&pr, &SteadyOptions::default()).unwrap();
        assert!(check_pinfty(&pr.p, &pr.q, &pr.nl, &s.u_inf) > 0.0);
        let j = steady_jacobian(&pr, &s.u_inf).unwrap();
        let lam = smallest_eigenvalue(&j, &pr.grid, true, 100).unwrap();
        // bounded below by the Dirichlet eigenvalue plus the potential
        assert!(lam > PI * PI, "{lam}");
    }
}
