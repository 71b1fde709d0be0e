//! L1 discretisation of the Caputo derivative, Riemann-Liouville product
//! integration and the discrete coercivity / maximum-principle checks.

use std::io::Write;

use crate::error::{Error, Result};
use crate::specialfn::{ln_gamma, rgamma};

/// How the nodes of a [`TimeGrid`] were generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshKind {
    Uniform,
    Graded { gamma: f64 },
    GradedThenUniform { gamma: f64, t_switch: f64 },
    Custom,
}

/// Strictly increasing time nodes `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    kind: MeshKind,
}

impl TimeGrid {
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        check_horizon(t_end, n)?;
        let nodes = (0..=n).map(|j| t_end * j as f64 / n as f64).collect();
        Ok(Self {
            nodes,
            kind: MeshKind::Uniform,
        })
    }

    /// `t_j = T (j/N)^γ`.
    pub fn graded(t_end: f64, n: usize, gamma: f64) -> Result<Self> {
        check_horizon(t_end, n)?;
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::TimeGrid(format!(
                "grading exponent must be >= 1, got {gamma}"
            )));
        }
        if gamma == 1.0 {
            return Self::uniform(t_end, n);
        }
        let nodes = (0..=n)
            .map(|j| t_end * (j as f64 / n as f64).powf(gamma))
            .collect();
        let g = Self {
            nodes,
            kind: MeshKind::Graded { gamma },
        };
        g.validate()?;
        Ok(g)
    }

    /// Graded grid with the exponent `min((2-α)/α, 4)`.
    pub fn default_graded(t_end: f64, n: usize, alpha: f64) -> Result<Self> {
        Self::graded(t_end, n, default_grading(alpha))
    }

    /// Graded nodes on `[0, t_switch]` followed by uniform nodes on `[t_switch, T]`.
    pub fn graded_then_uniform(
        t_end: f64,
        n_graded: usize,
        t_switch: f64,
        n_uniform: usize,
        gamma: f64,
    ) -> Result<Self> {
        if !(t_switch > 0.0 && t_switch < t_end) {
            return Err(Error::TimeGrid(format!(
                "switch time {t_switch} must lie strictly inside (0, {t_end})"
            )));
        }
        if n_uniform == 0 {
            return Err(Error::TimeGrid(
                "uniform part needs at least one step".into(),
            ));
        }
        let head = Self::graded(t_switch, n_graded, gamma)?;
        let mut nodes = head.nodes;
        let dt = (t_end - t_switch) / n_uniform as f64;
        nodes.extend((1..=n_uniform).map(|j| {
            if j == n_uniform {
                t_end
            } else {
                t_switch + dt * j as f64
            }
        }));
        let g = Self {
            nodes,
            kind: MeshKind::GradedThenUniform { gamma, t_switch },
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let g = Self {
            nodes,
            kind: MeshKind::Custom,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return Err(Error::TimeGrid("need at least one step".into()));
        }
        if self.nodes[0] != 0.0 {
            return Err(Error::TimeGrid(format!(
                "first node must be 0, got {}",
                self.nodes[0]
            )));
        }
        for (j, w) in self.nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::TimeGrid(format!(
                    "nodes not strictly increasing at index {}: {} -> {}",
                    j + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    /// Number of steps `N`.
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().expect("non-empty grid")
    }

    /// Step `τ_j = t_j - t_{j-1}` for `1 ≤ j ≤ N`.
    pub fn tau(&self, j: usize) -> f64 {
        self.nodes[j] - self.nodes[j - 1]
    }

    pub fn min_step(&self) -> f64 {
        (1..self.nodes.len())
            .map(|j| self.tau(j))
            .fold(f64::INFINITY, f64::min)
    }

    fn is_uniform(&self) -> bool {
        matches!(self.kind, MeshKind::Uniform)
    }
}

fn check_horizon(t_end: f64, n: usize) -> Result<()> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::TimeGrid(format!(
            "horizon must be positive, got {t_end}"
        )));
    }
    if n == 0 {
        return Err(Error::TimeGrid("need at least one step".into()));
    }
    Ok(())
}

/// Default grading exponent `min((2-α)/α, 4)`.
pub fn default_grading(alpha: f64) -> f64 {
    ((2.0 - alpha) / alpha).clamp(1.0, 4.0)
}

/// L1 weights `a_{n,j}` of the Caputo derivative on a time grid.
///
/// `(∂_t^α v)(t_n) ≈ Σ_{j=1}^n a_{n,j} (v_j - v_{j-1})`, rows generated on demand.
#[derive(Debug, Clone)]
pub struct CaputoWeights {
    alpha: f64,
    grid: TimeGrid,
    inv_gamma: f64,
    // (k+1)^{1-α} - k^{1-α} on uniform grids
    uniform_b: Option<Vec<f64>>,
}

/// Builds the L1 weight generator.
pub fn l1_weights(grid: &TimeGrid, alpha: f64) -> Result<CaputoWeights> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "L1 weights need alpha in (0,1], got {alpha}"
        )));
    }
    let uniform_b = grid.is_uniform().then(|| {
        let e = 1.0 - alpha;
        (0..grid.n_steps())
            .map(|k| {
                let k = k as f64;
                if k == 0.0 {
                    1.0
                } else {
                    k.powf(e) * (e * (1.0 / k).ln_1p()).exp_m1()
                }
            })
            .collect()
    });
    Ok(CaputoWeights {
        alpha,
        grid: grid.clone(),
        inv_gamma: rgamma(2.0 - alpha),
        uniform_b,
    })
}

impl CaputoWeights {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `a_{n,j}` for `1 ≤ j ≤ n ≤ N`.
    pub fn weight(&self, n: usize, j: usize) -> f64 {
        debug_assert!(1 <= j && j <= n && n <= self.grid.n_steps());
        let tau = self.grid.tau(j);
        if let Some(b) = &self.uniform_b {
            return b[n - j] * tau.powf(-self.alpha) * self.inv_gamma;
        }
        let e = 1.0 - self.alpha;
        let big = self.grid.nodes[n] - self.grid.nodes[j];
        let diff = if big == 0.0 {
            tau.powf(e)
        } else {
            big.powf(e) * (e * (tau / big).ln_1p()).exp_m1()
        };
        diff * self.inv_gamma / tau
    }

    /// Leading weight `a_{n,n}`.
    pub fn leading(&self, n: usize) -> f64 {
        self.weight(n, n)
    }

    /// Row `[a_{n,1}, ..., a_{n,n}]`.
    pub fn row(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|j| self.weight(n, j)).collect()
    }

    /// Writes the full weight table as `n, j, weight` rows (debugging aid).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["n", "j", "weight"])?;
        for n in 1..=self.grid.n_steps() {
            for j in 1..=n {
                wtr.write_record([
                    n.to_string(),
                    j.to_string(),
                    format!("{:.16e}", self.weight(n, j)),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Discrete Caputo derivative of `history` at node `n`.
pub fn caputo_apply(weights: &CaputoWeights, history: &[f64], n: usize) -> Result<f64> {
    let len = weights.grid.nodes.len();
    if history.len() != len {
        return Err(Error::Precondition(format!(
            "history has {} values, grid has {len} nodes",
            history.len()
        )));
    }
    if n >= len {
        return Err(Error::OutOfRange { index: n, len });
    }
    Ok((1..=n)
        .map(|j| weights.weight(n, j) * (history[j] - history[j - 1]))
        .sum())
}

/// Discrete Caputo derivative at every node (0 at `t_0`).
pub fn caputo_series(weights: &CaputoWeights, history: &[f64]) -> Result<Vec<f64>> {
    (0..history.len())
        .map(|n| caputo_apply(weights, history, n))
        .collect()
}

/// Sum-of-exponentials approximation `k^α(s) ≈ Σ_i w_i e^{-λ_i s}` on `[s_min, s_max]`.
#[derive(Debug, Clone)]
pub struct SoeKernel {
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
}

impl SoeKernel {
    /// Trapezoidal discretisation of `s^{-α} = Γ(α)^{-1} ∫ exp(αy - s e^y) dy`.
    pub fn build(alpha: f64, s_min: f64, s_max: f64, tol: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!(
                "SOE kernel needs alpha in (0,1), got {alpha}"
            )));
        }
        if !(s_min > 0.0 && s_max >= s_min) {
            return Err(Error::Domain(format!(
                "SOE range [{s_min}, {s_max}] invalid"
            )));
        }
        let h = (std::f64::consts::PI.powi(2) / (1.0 / tol).ln()).min(0.6);
        // tail of the integrand above y_hi: exp(-s_min e^y) negligible
        let y_hi = ((1.0 / tol).ln() + 5.0).ln() - s_min.ln() + 1.0;
        // mass below y_lo relative to s_max^{-α} Γ(α)
        let y_lo = ((tol * alpha).ln() + ln_gamma(alpha) - alpha * s_max.ln()) / alpha - 1.0;
        let m_lo = (y_lo / h).floor() as i64;
        let m_hi = (y_hi / h).ceil() as i64;
        let scale = h * rgamma(alpha) * rgamma(1.0 - alpha);
        let (mut weights, mut rates) = (Vec::new(), Vec::new());
        for m in m_lo..=m_hi {
            let y = m as f64 * h;
            weights.push(scale * (alpha * y).exp());
            rates.push(y.exp());
        }
        Ok(Self { weights, rates })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.rates)
            .map(|(w, l)| w * (-l * s).exp())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// History evaluation strategy for [`CaputoStepper`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistoryMode {
    /// Exact O(n) sum over all previous increments.
    Direct,
    /// Sum-of-exponentials recurrence with the given kernel tolerance.
    Compressed { tol: f64 },
}

/// Incremental evaluator of the L1 history term for vector-valued series.
///
/// After `k` calls to [`advance`](Self::advance) the stepper holds `v_0..v_k`
/// and [`history`](Self::history) returns `Σ_{j=1}^{k} a_{k+1,j} (v_j - v_{j-1})`.
#[derive(Debug, Clone)]
pub struct CaputoStepper<'a> {
    weights: &'a CaputoWeights,
    last: Vec<f64>,
    step: usize,
    increments: Vec<Vec<f64>>,
    soe: Option<(SoeKernel, Vec<Vec<f64>>)>,
}

impl<'a> CaputoStepper<'a> {
    pub fn new(weights: &'a CaputoWeights, mode: HistoryMode, v0: &[f64]) -> Result<Self> {
        let soe = match mode {
            HistoryMode::Compressed { tol } if weights.alpha < 1.0 => {
                let k = SoeKernel::build(
                    weights.alpha,
                    weights.grid.min_step(),
                    weights.grid.t_end(),
                    tol,
                )?;
                let state = vec![vec![0.0; v0.len()]; k.len()];
                Some((k, state))
            }
            _ => None,
        };
        Ok(Self {
            weights,
            last: v0.to_vec(),
            step: 0,
            increments: Vec::new(),
            soe,
        })
    }

    /// Index of the next unknown node.
    pub fn next_index(&self) -> usize {
        self.step + 1
    }

    /// Leading weight `a_{n,n}` of the next unknown node.
    pub fn leading(&self) -> f64 {
        self.weights.leading(self.step + 1)
    }

    pub fn last(&self) -> &[f64] {
        &self.last
    }

    /// History contribution for the next unknown node.
    pub fn history(&self) -> Vec<f64> {
        let n = self.step + 1;
        let mut out = vec![0.0; self.last.len()];
        if self.weights.alpha == 1.0 || n == 1 {
            return out;
        }
        match &self.soe {
            Some((k, state)) => {
                let tau = self.weights.grid.tau(n);
                for ((w, lam), g) in k.weights.iter().zip(&k.rates).zip(state) {
                    let c = w * (-lam * tau).exp();
                    for (o, gi) in out.iter_mut().zip(g) {
                        *o += c * gi;
                    }
                }
            }
            None => {
                for (j, inc) in self.increments.iter().enumerate() {
                    let a = self.weights.weight(n, j + 1);
                    for (o, d) in out.iter_mut().zip(inc) {
                        *o += a * d;
                    }
                }
            }
        }
        out
    }

    /// Discrete Caputo derivative at the next node if it took the value `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let a = self.leading();
        let mut h = self.history();
        for ((hi, vi), li) in h.iter_mut().zip(v).zip(&self.last) {
            *hi += a * (vi - li);
        }
        h
    }

    /// Records the value at the next node.
    pub fn advance(&mut self, v: &[f64]) {
        let n = self.step + 1;
        let inc: Vec<f64> = v.iter().zip(&self.last).map(|(a, b)| a - b).collect();
        if let Some((k, state)) = &mut self.soe {
            let tau = self.weights.grid.tau(n);
            for (lam, g) in k.rates.iter().zip(state.iter_mut()) {
                let decay = (-lam * tau).exp();
                // ∫ over the last panel of e^{-λ(t_n - s)} times the slope
                let gain = -(-lam * tau).exp_m1() / (lam * tau);
                for (gi, d) in g.iter_mut().zip(&inc) {
                    *gi = decay * *gi + gain * d;
                }
            }
        } else {
            self.increments.push(inc);
        }
        self.last = v.to_vec();
        self.step = n;
    }
}

/// `(k^{1-α} * v)(t_n)` at every node by product integration of piecewise-linear `v`.
///
/// A non-finite `v_0` is replaced by the constant `v_1` on the first panel.
pub fn rl_convolve(alpha: f64, grid: &TimeGrid, series: &[f64]) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "rl_convolve needs alpha in (0,1], got {alpha}"
        )));
    }
    let t = grid.nodes();
    if series.len() != t.len() {
        return Err(Error::Precondition(format!(
            "series has {} values, grid has {} nodes",
            series.len(),
            t.len()
        )));
    }
    let g = rgamma(alpha);
    let mut out = vec![0.0; t.len()];
    for n in 1..t.len() {
        let mut acc = 0.0;
        for j in 1..=n {
            let tau = t[j] - t[j - 1];
            let big = t[n] - t[j];
            let (m0, m1) = panel_moments(alpha, big, tau);
            if j == 1 && !series[0].is_finite() {
                acc += series[1] * m0;
            } else {
                acc += (series[j] * (tau * m0 - m1) + series[j - 1] * m1) / tau;
            }
        }
        out[n] = g * acc;
    }
    Ok(out)
}

// ∫_B^{B+τ} w^{α-1} dw and ∫_B^{B+τ} w^{α-1} (w - B) dw
fn panel_moments(alpha: f64, big: f64, tau: f64) -> (f64, f64) {
    if big == 0.0 {
        return (
            tau.powf(alpha) / alpha,
            tau.powf(alpha + 1.0) / (alpha + 1.0),
        );
    }
    let eps = tau / big;
    let l = eps.ln_1p();
    let m0 = big.powf(alpha) * (alpha * l).exp_m1() / alpha;
    let s1 = if eps <= 0.1 {
        // ∫_0^ε (1+y)^{α-1} y dy by the binomial series
        let mut c = 1.0;
        let mut pow = eps * eps;
        let mut sum = 0.0;
        for m in 0..60 {
            let term = c * pow / (m as f64 + 2.0);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
            c *= (alpha - 1.0 - m as f64) / (m as f64 + 1.0);
            pow *= eps;
        }
        sum
    } else {
        ((alpha + 1.0) * l).exp_m1() / (alpha + 1.0) - (alpha * l).exp_m1() / alpha
    };
    (m0, big.powf(alpha + 1.0) * s1)
}

/// Per-node coercivity margins `v_n (∂^α v)_n - ½ (∂^α v²)_n`.
#[derive(Debug, Clone)]
pub struct CoercivityReport {
    pub margins: Vec<f64>,
    pub tol: f64,
}

impl CoercivityReport {
    pub fn pass(&self) -> bool {
        self.margins.iter().all(|m| *m >= -self.tol)
    }

    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn coercivity_check(
    weights: &CaputoWeights,
    history: &[f64],
    tol: f64,
) -> Result<CoercivityReport> {
    let len = weights.grid.nodes.len();
    if history.len() != len {
        return Err(Error::Precondition(format!(
            "history has {} values, grid has {len} nodes",
            history.len()
        )));
    }
    let mut margins = vec![0.0; len];
    for (n, m) in margins.iter_mut().enumerate().skip(1) {
        *m = (1..=n)
            .map(|j| {
                let d = history[j] - history[j - 1];
                weights.weight(n, j) * d * (history[n] - 0.5 * (history[j] + history[j - 1]))
            })
            .sum();
    }
    Ok(CoercivityReport { margins, tol })
}

/// Outcome of the maximum-principle check at the (latest) argmax node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPrincipleReport {
    pub node: usize,
    pub caputo: f64,
    pub pass: bool,
}

pub fn max_principle_report(
    weights: &CaputoWeights,
    history: &[f64],
) -> Result<MaxPrincipleReport> {
    let mut node = 0;
    for (j, v) in history.iter().enumerate() {
        if *v >= history[node] {
            node = j;
        }
    }
    let caputo = caputo_apply(weights, history, node)?;
    Ok(MaxPrincipleReport {
        node,
        caputo,
        pass: node == 0 || caputo >= -1e-10,
    })
}

/// True iff the discrete Caputo derivative is nonnegative at the maximiser.
pub fn max_principle_check(weights: &CaputoWeights, history: &[f64]) -> Result<bool> {
    Ok(max_principle_report(weights, history)?.pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gamma(x: f64) -> f64 {
        1.0 / rgamma(x)
    }

    #[test]
    fn grids_validate() {
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::uniform(-1.0, 4).is_err());
        assert!(TimeGrid::graded(1.0, 4, 0.5).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5]).is_err());
        let g = TimeGrid::graded(2.0, 10, 2.0).unwrap();
        assert!((g.nodes()[5] - 2.0 * 0.25).abs() < 1e-15);
        assert_eq!(g.t_end(), 2.0);
        let g = TimeGrid::graded_then_uniform(10.0, 20, 1.0, 9, 3.0).unwrap();
        assert_eq!(g.n_steps(), 29);
        assert_eq!(g.nodes()[20], 1.0);
        assert!((g.tau(29) - 1.0).abs() < 1e-12);
        assert_eq!(default_grading(0.5), 3.0);
        assert_eq!(default_grading(0.2), 4.0);
    }

    #[test]
    fn leading_weight_uniform() {
        let tau: f64 = 0.01;
        for alpha in [0.3, 0.5, 0.9] {
            let w = l1_weights(&TimeGrid::uniform(1.0, 100).unwrap(), alpha).unwrap();
            let want = tau.powf(-alpha) / gamma(2.0 - alpha);
            assert!((w.leading(37) - want).abs() / want < 1e-12);
        }
    }

    #[test]
    fn uniform_cache_matches_general_formula() {
        let g = TimeGrid::uniform(3.0, 50).unwrap();
        let w = l1_weights(&g, 0.4).unwrap();
        let custom = TimeGrid::from_nodes(g.nodes().to_vec()).unwrap();
        let wc = l1_weights(&custom, 0.4).unwrap();
        for n in [1, 7, 50] {
            for j in 1..=n {
                let (a, b) = (w.weight(n, j), wc.weight(n, j));
                assert!((a - b).abs() <= 1e-12 * b.abs(), "n={n} j={j}");
            }
        }
    }

    #[test]
    fn alpha_one_is_backward_difference() {
        let g = TimeGrid::graded(1.0, 20, 2.0).unwrap();
        let w = l1_weights(&g, 1.0).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|t| t * t).collect();
        for n in 1..=20 {
            let row = w.row(n);
            assert!(row[..n - 1].iter().all(|a| *a == 0.0));
            let c = caputo_apply(&w, &v, n).unwrap();
            let bd = (v[n] - v[n - 1]) / g.tau(n);
            assert!((c - bd).abs() < 1e-12 * bd.abs());
        }
    }

    #[test]
    fn caputo_of_constant_vanishes() {
        let g = TimeGrid::default_graded(2.0, 40, 0.4).unwrap();
        let w = l1_weights(&g, 0.4).unwrap();
        let v = vec![5.0; 41];
        for n in 0..=40 {
            assert_eq!(caputo_apply(&w, &v, n).unwrap(), 0.0);
        }
        assert!(caputo_apply(&w, &v, 41).is_err());
    }

    #[test]
    fn caputo_of_linear_is_exact() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let w = l1_weights(&g, 0.5).unwrap();
        let v: Vec<f64> = g.nodes().to_vec();
        let c = caputo_apply(&w, &v, 100).unwrap();
        let want = 2.0 / std::f64::consts::PI.sqrt();
        assert!((c - want).abs() < 1e-12);
    }

    #[test]
    fn caputo_of_square_converges() {
        let alpha: f64 = 0.5;
        let mut errs = Vec::new();
        for n in [40, 80, 160] {
            let g = TimeGrid::uniform(1.0, n).unwrap();
            let w = l1_weights(&g, alpha).unwrap();
            let v: Vec<f64> = g.nodes().iter().map(|t| t * t).collect();
            let e = (1..=n)
                .map(|k| {
                    let t = g.nodes()[k];
                    let exact = 2.0 * t.powf(2.0 - alpha) / gamma(3.0 - alpha);
                    (caputo_apply(&w, &v, k).unwrap() - exact).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(
            errs[0] / errs[1] >= 2.7 && errs[1] / errs[2] >= 2.7,
            "{errs:?}"
        );
    }

    #[test]
    fn rl_convolve_of_one() {
        for alpha in [0.2, 0.5, 0.9] {
            let g = TimeGrid::graded(2.0, 30, 2.0).unwrap();
            let out = rl_convolve(alpha, &g, &[1.0; 31]).unwrap();
            for (t, o) in g.nodes().iter().zip(&out) {
                let want = t.powf(alpha) / gamma(1.0 + alpha);
                assert!((o - want).abs() <= 1e-13 * want.max(1.0));
            }
        }
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        assert!(rl_convolve(0.5, &g, &[0.0; 11])
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn rl_convolve_beta_integral() {
        // ∫_0^t (t-s)^{α-1} s^{-α} ds = B(α, 1-α) = Γ(α)Γ(1-α)
        let alpha = 0.4;
        let g = TimeGrid::graded(1.0, 400, 6.0).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|t| t.powf(-alpha)).collect();
        let out = rl_convolve(alpha, &g, &v).unwrap();
        let want = gamma(1.0 - alpha);
        assert!(
            (out[400] - want).abs() / want < 2e-2,
            "{} vs {want}",
            out[400]
        );
    }

    #[test]
    fn composition_identity() {
        let alpha = 0.6;
        let n = 200;
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let tau = 1.0 / n as f64;
        let w = l1_weights(&g, alpha).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|t| (2.0 * t).sin() + t * t).collect();
        let c = caputo_series(&w, &v).unwrap();
        let back = rl_convolve(alpha, &g, &c).unwrap();
        for k in 0..=n {
            assert!((back[k] - (v[k] - v[0])).abs() <= 10.0 * tau, "k={k}");
        }
    }

    #[test]
    fn coercivity_examples() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let w = l1_weights(&g, 0.5).unwrap();
        let r = coercivity_check(&w, &[3.0; 101], 0.0).unwrap();
        assert!(r.margins.iter().all(|m| *m == 0.0));
        let v: Vec<f64> = g.nodes().to_vec();
        let r = coercivity_check(&w, &v, 0.0).unwrap();
        assert!(r.pass());
    }

    #[test]
    fn max_principle_examples() {
        let g = TimeGrid::uniform(3.0, 300).unwrap();
        let w = l1_weights(&g, 0.5).unwrap();
        let inc: Vec<f64> = g.nodes().iter().map(|t| t * t).collect();
        let r = max_principle_report(&w, &inc).unwrap();
        assert_eq!(r.node, 300);
        assert!(r.caputo > 0.0 && r.pass);
        let r = max_principle_report(&w, &[1.0; 301]).unwrap();
        assert_eq!(r.node, 300);
        assert_eq!(r.caputo, 0.0);
        let s: Vec<f64> = g.nodes().iter().map(|t| t.sin()).collect();
        let r = max_principle_report(&w, &s).unwrap();
        assert!((g.nodes()[r.node] - std::f64::consts::FRAC_PI_2).abs() < 0.01);
        assert!(r.pass);
    }

    #[test]
    fn soe_kernel_accuracy() {
        for alpha in [0.1, 0.4, 0.8, 0.99] {
            let (lo, hi) = (1e-5, 1e3);
            let k = SoeKernel::build(alpha, lo, hi, 1e-10).unwrap();
            for s in crate::specialfn::logspace(lo, hi, 400) {
                let exact = s.powf(-alpha) * rgamma(1.0 - alpha);
                let rel = (k.eval(s) - exact).abs() / exact;
                assert!(rel <= 1e-8, "α={alpha} s={s} rel={rel:e}");
            }
        }
    }

    #[test]
    fn compressed_history_matches_direct() {
        let alpha = 0.35;
        let g = TimeGrid::graded_then_uniform(50.0, 100, 1.0, 400, 3.0).unwrap();
        let w = l1_weights(&g, alpha).unwrap();
        let path = |t: f64| vec![(-t).exp() + 0.1 * t.sin(), (1.0 + t).recip()];
        let v0 = path(0.0);
        let mut direct = CaputoStepper::new(&w, HistoryMode::Direct, &v0).unwrap();
        let mut comp = CaputoStepper::new(&w, HistoryMode::Compressed { tol: 1e-10 }, &v0).unwrap();
        for n in 1..=g.n_steps() {
            let v = path(g.nodes()[n]);
            let (a, b) = (direct.apply(&v), comp.apply(&v));
            for (x, y) in a.iter().zip(&b) {
                assert!(
                    (x - y).abs() <= 1e-7 * x.abs().max(1e-3),
                    "n={n}: {x} vs {y}"
                );
            }
            direct.advance(&v);
            comp.advance(&v);
        }
    }

    #[test]
    fn stepper_reproduces_caputo_apply() {
        let g = TimeGrid::graded(1.0, 30, 2.0).unwrap();
        let w = l1_weights(&g, 0.7).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|t| t.cos()).collect();
        let mut st = CaputoStepper::new(&w, HistoryMode::Direct, &v[..1]).unwrap();
        for n in 1..=30 {
            let got = st.apply(&v[n..n + 1])[0];
            let want = caputo_apply(&w, &v, n).unwrap();
            assert!((got - want).abs() < 1e-12);
            st.advance(&v[n..n + 1]);
        }
    }

    fn trig_history(grid: &TimeGrid, coeffs: &[(f64, f64, f64)]) -> Vec<f64> {
        grid.nodes()
            .iter()
            .map(|t| coeffs.iter().map(|(a, f, p)| a * (f * t + p).sin()).sum())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coercivity_margins_nonnegative(
            alpha in 0.05f64..1.0,
            coeffs in prop::collection::vec((-2.0f64..2.0, 0.0f64..20.0, 0.0f64..6.3), 1..6),
        ) {
            let g = TimeGrid::uniform(1.0, 80).unwrap();
            let w = l1_weights(&g, alpha).unwrap();
            let v = trig_history(&g, &coeffs);
            let r = coercivity_check(&w, &v, 1e-12).unwrap();
            prop_assert!(r.pass(), "min margin {}", r.min_margin());
        }

        #[test]
        fn caputo_is_linear(
            alpha in 0.05f64..1.0,
            a in -3.0f64..3.0,
            c1 in prop::collection::vec((-2.0f64..2.0, 0.0f64..10.0, 0.0f64..6.3), 1..4),
            c2 in prop::collection::vec((-2.0f64..2.0, 0.0f64..10.0, 0.0f64..6.3), 1..4),
        ) {
            let g = TimeGrid::graded(1.0, 40, 1.5).unwrap();
            let w = l1_weights(&g, alpha).unwrap();
            let u = trig_history(&g, &c1);
            let v = trig_history(&g, &c2);
            let uv: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + y).collect();
            for n in [1, 17, 40] {
                let lhs = caputo_apply(&w, &uv, n).unwrap();
                let rhs = a * caputo_apply(&w, &u, n).unwrap() + caputo_apply(&w, &v, n).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn rl_convolve_is_monotone_and_nonnegative(
            alpha in 0.05f64..1.0,
            base in prop::collection::vec(0.0f64..5.0, 31),
            bump in prop::collection::vec(0.0f64..5.0, 31),
        ) {
            let g = TimeGrid::graded(3.0, 30, 2.0).unwrap();
            let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let lo = rl_convolve(alpha, &g, &base).unwrap();
            let hi = rl_convolve(alpha, &g, &upper).unwrap();
            for (l, h) in lo.iter().zip(&hi) {
                prop_assert!(*l >= 0.0);
                prop_assert!(*h >= *l);
            }
        }
    }
}
