//! Backward-Euler finite differences for the one-dimensional friction
//! problem with white noise (`U = 0`, `C_b = 1`):
//!
//! ```text
//! dw/dtau - (1/2) w_yy + b(y) w_y = g,        b(y) = y + a_n'(y)
//! dv/dtau - (1/2) v_yy + b(y) v_y = |w_y|^2
//! ```
//!
//! with zero initial data and homogeneous Neumann rows at `y = -L, L`.
//! `w(y, tau) = E_y int_0^tau g(Y_s) ds` and `v(y, tau)` is the variance of
//! that integral, so `v(0, tau) ~ gamma^2 tau` for large `tau`.

use crate::error::{invalid, Error, Result};
use crate::model::a_n_prime;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub half_width: f64,
    pub nodes: usize,
    pub dy: f64,
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl Grid1D {
    pub fn new(half_width: f64, nodes: usize, dt: f64, t_end: f64) -> Result<Self> {
        if !(half_width > 0.0) || nodes < 3 || !(dt > 0.0) || !(t_end > 0.0) {
            return Err(invalid("grid needs L > 0, N >= 3, dt > 0, T > 0"));
        }
        let ratio = t_end / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(format!("T / dt = {ratio} is not a positive integer")));
        }
        Ok(Self {
            half_width,
            nodes,
            dy: 2.0 * half_width / (nodes - 1) as f64,
            dt,
            t_end,
            steps: steps as usize,
        })
    }

    /// Default grid `L = 10`, `N = 2001`, `dt = 1e-3`.
    pub fn standard(t_end: f64) -> Result<Self> {
        Self::new(10.0, 2001, 1e-3, t_end)
    }

    /// `y_i = -L + i dy` for `i = 0..N`.
    pub fn y(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dy
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.y(i)).collect()
    }

    pub fn describe(&self) -> String {
        format!("L={} N={} dt={} T={}", self.half_width, self.nodes, self.dt, self.t_end)
    }
}

/// Advection coefficient `y + a_n'(y)`.
pub fn advection(y: f64, n: f64) -> f64 {
    y + a_n_prime(y, n)
}

/// Row `i` of the matrix is `(sub[i], diag[i], sup[i])` at columns
/// `(i-1, i, i+1)`; `sub[0]` and `sup[N-1]` are unused.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalOperator {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

pub fn build_operator(grid: &Grid1D, n: u32) -> TridiagonalOperator {
    let nn = grid.nodes;
    let (dy, dt) = (grid.dy, grid.dt);
    let mut op = TridiagonalOperator {
        sub: vec![0.0; nn],
        diag: vec![0.0; nn],
        sup: vec![0.0; nn],
    };
    op.diag[0] = 1.0 / dy;
    op.sup[0] = -1.0 / dy;
    op.sub[nn - 1] = 1.0 / dy;
    op.diag[nn - 1] = -1.0 / dy;
    let nf = f64::from(n);
    for i in 1..nn - 1 {
        let b = advection(grid.y(i), nf);
        op.sub[i] = -0.5 * dt * (1.0 / (dy * dy) + b / dy);
        op.diag[i] = 1.0 + dt / (dy * dy);
        op.sup[i] = -0.5 * dt * (1.0 / (dy * dy) - b / dy);
    }
    op
}

/// Thomas-algorithm factorization, computed once per operator.
#[derive(Clone, Debug)]
pub struct Factorized {
    sub: Vec<f64>,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn factorize(&self) -> Result<Factorized> {
        let n = self.len();
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.sub[i] * prev_c
            };
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::ZeroPivot { row: i });
            }
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = if i + 1 < n { self.sup[i] / pivot } else { 0.0 };
            prev_c = c_prime[i];
        }
        Ok(Factorized {
            sub: self.sub.clone(),
            c_prime,
            inv_pivot,
        })
    }
}

impl Factorized {
    /// Solves in place: `rhs` becomes the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

/// One implicit step `M W^k = (0, dt G_i + W^{k-1}_i, 0)`.
pub fn step_w(op: &TridiagonalOperator, w_prev: &[f64], g: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = op.len();
    if w_prev.len() != n || g.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w_prev.len().min(g.len()),
        });
    }
    let f = op.factorize()?;
    let mut rhs = implicit_rhs(w_prev, g, dt);
    f.solve_in_place(&mut rhs);
    Ok(rhs)
}

fn implicit_rhs(prev: &[f64], src: &[f64], dt: f64) -> Vec<f64> {
    let n = prev.len();
    let mut rhs = vec![0.0; n];
    for i in 1..n - 1 {
        rhs[i] = dt * src[i] + prev[i];
    }
    rhs
}

/// Observables `g(y)` accepted by the solvers and the CLI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    Identity,
    Square,
    /// Indicator of `[a, b]`.
    Indicator(f64, f64),
    Constant(f64),
}

impl Observable {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Observable::Identity => y,
            Observable::Square => y * y,
            Observable::Indicator(a, b) => {
                if y >= a && y <= b {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::Constant(c) => c,
        }
    }

    /// `identity`, `square`, `indicator:a,b` or `constant:c`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unknown observable '{s}'"));
        match s {
            "identity" => Ok(Observable::Identity),
            "square" => Ok(Observable::Square),
            _ => {
                if let Some(rest) = s.strip_prefix("indicator:") {
                    let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                    let a: f64 = a.trim().parse().map_err(|_| bad())?;
                    let b: f64 = b.trim().parse().map_err(|_| bad())?;
                    if !(a <= b) {
                        return Err(bad());
                    }
                    Ok(Observable::Indicator(a, b))
                } else if let Some(rest) = s.strip_prefix("constant:") {
                    Ok(Observable::Constant(rest.trim().parse().map_err(|_| bad())?))
                } else {
                    Err(bad())
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Observable::Identity => "identity".into(),
            Observable::Square => "square".into(),
            Observable::Indicator(a, b) => format!("indicator:{a},{b}"),
            Observable::Constant(c) => format!("constant:{c}"),
        }
    }
}

/// Full fields at one stored time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub tau: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PdeSolution {
    pub grid: Grid1D,
    pub n: u32,
    /// `tau_k = k dt` for `k = 0..=steps`.
    pub taus: Vec<f64>,
    /// `w(0, tau_k)` and `v(0, tau_k)`.
    pub w0: Vec<f64>,
    pub v0: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// `false` when only `w` was computed.
    pub has_v: bool,
}

impl PdeSolution {
    /// Linear interpolation of a center trace at time `tau`.
    pub fn at(&self, trace: &[f64], tau: f64) -> f64 {
        let k = tau / self.grid.dt;
        let lo = (k.floor() as usize).min(self.taus.len() - 1);
        let hi = (lo + 1).min(self.taus.len() - 1);
        let frac = (k - lo as f64).clamp(0.0, 1.0);
        trace[lo] * (1.0 - frac) + trace[hi] * frac
    }

    pub fn v0_at(&self, tau: f64) -> f64 {
        self.at(&self.v0, tau)
    }

    pub fn w0_at(&self, tau: f64) -> f64 {
        self.at(&self.w0, tau)
    }
}

fn value_at_zero(grid: &Grid1D, f: &[f64]) -> f64 {
    let s = grid.half_width / grid.dy;
    let i = (s.floor() as usize).min(grid.nodes - 2);
    let frac = s - i as f64;
    f[i] * (1.0 - frac) + f[i + 1] * frac
}

/// `count` log-spaced times in `[t_min, T]` snapped to the time grid, plus
/// `T` itself; strictly increasing.
pub fn log_checkpoints(grid: &Grid1D, t_min: f64, count: usize) -> Vec<f64> {
    let t_min = t_min.max(grid.dt);
    let mut out: Vec<f64> = Vec::with_capacity(count + 1);
    let ratio = (grid.t_end / t_min).ln();
    for j in 0..count {
        let frac = if count > 1 { j as f64 / (count - 1) as f64 } else { 1.0 };
        let t = t_min * (ratio * frac).exp();
        let k = ((t / grid.dt).round() as usize).clamp(1, grid.steps);
        let snapped = k as f64 * grid.dt;
        if out.last().is_none_or(|&l| snapped > l + 0.5 * grid.dt) {
            out.push(snapped);
        }
    }
    if out.last().is_none_or(|&l| l < grid.t_end - 0.5 * grid.dt) {
        out.push(grid.t_end);
    }
    out
}

fn march(grid: &Grid1D, n: u32, g: &dyn Fn(f64) -> f64, snapshots_at: &[f64], with_v: bool) -> Result<PdeSolution> {
    let op = build_operator(grid, n);
    let fac = op.factorize()?;
    let nn = grid.nodes;
    let dt = grid.dt;
    let gv: Vec<f64> = grid.ys().iter().map(|&y| g(y)).collect();
    let marks: Vec<usize> = snapshots_at.iter().map(|t| (t / dt).round() as usize).collect();
    let mut w = vec![0.0; nn];
    let mut v = vec![0.0; nn];
    let mut rhs = vec![0.0; nn];
    let mut sol = PdeSolution {
        grid: *grid,
        n,
        taus: Vec::with_capacity(grid.steps + 1),
        w0: Vec::with_capacity(grid.steps + 1),
        v0: Vec::with_capacity(grid.steps + 1),
        snapshots: Vec::new(),
        has_v: with_v,
    };
    let record = |k: usize, w: &[f64], v: &[f64], sol: &mut PdeSolution| {
        sol.taus.push(k as f64 * dt);
        sol.w0.push(value_at_zero(grid, w));
        sol.v0.push(value_at_zero(grid, v));
        if marks.contains(&k) {
            sol.snapshots.push(Snapshot {
                tau: k as f64 * dt,
                w: w.to_vec(),
                v: v.to_vec(),
            });
        }
    };
    record(0, &w, &v, &mut sol);
    let inv2dy = 1.0 / (2.0 * grid.dy);
    for k in 1..=grid.steps {
        rhs[0] = 0.0;
        rhs[nn - 1] = 0.0;
        for i in 1..nn - 1 {
            rhs[i] = dt * gv[i] + w[i];
        }
        fac.solve_in_place(&mut rhs);
        std::mem::swap(&mut w, &mut rhs);
        if with_v {
            rhs[0] = 0.0;
            rhs[nn - 1] = 0.0;
            for i in 1..nn - 1 {
                let dw = (w[i + 1] - w[i - 1]) * inv2dy;
                rhs[i] = dt * dw * dw + v[i];
            }
            fac.solve_in_place(&mut rhs);
            std::mem::swap(&mut v, &mut rhs);
        }
        record(k, &w, &v, &mut sol);
    }
    Ok(sol)
}

/// Mean field `w` only.
pub fn solve_w(grid: &Grid1D, n: u32, g: &dyn Fn(f64) -> f64, snapshots_at: &[f64]) -> Result<PdeSolution> {
    march(grid, n, g, snapshots_at, false)
}

/// Mean field `w` and variance field `v`, marched together; the source of
/// the `v` equation uses `w` at the new time level.
pub fn solve_v(grid: &Grid1D, n: u32, g: &dyn Fn(f64) -> f64, snapshots_at: &[f64]) -> Result<PdeSolution> {
    march(grid, n, g, snapshots_at, true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaEstimate {
    pub gamma_sq: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual of the linear fit.
    pub residual: f64,
    pub samples: usize,
    pub grid: String,
}

impl GammaEstimate {
    pub fn gamma(&self) -> f64 {
        self.gamma_sq.sqrt()
    }
}

/// Least-squares line through `(times, values)` restricted to
/// `times >= start`; needs at least 10 samples.
pub fn linear_fit(times: &[f64], values: &[f64], start: f64) -> Result<(f64, f64, f64, usize)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= start - 1e-12)
        .map(|(t, v)| (*t, *v))
        .collect();
    let m = pts.len();
    if m < 10 {
        return Err(invalid(format!("fit window holds {m} samples, need at least 10")));
    }
    let mf = m as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / mf;
    let vm = pts.iter().map(|p| p.1).sum::<f64>() / mf;
    let stt = pts.iter().map(|p| (p.0 - tm).powi(2)).sum::<f64>();
    let stv = pts.iter().map(|p| (p.0 - tm) * (p.1 - vm)).sum::<f64>();
    let slope = stv / stt;
    let intercept = vm - slope * tm;
    let rss = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>();
    Ok((slope, intercept, (rss / mf).sqrt(), m))
}

/// `gamma^2` as the slope of `v(0, tau)` over `tau in [window T, T]`.
pub fn gamma_from_series(times: &[f64], values: &[f64], window: f64, grid: String) -> Result<GammaEstimate> {
    if !(0.0..1.0).contains(&window) {
        return Err(invalid("window fraction must lie in [0, 1)"));
    }
    let t_end = times.last().copied().ok_or_else(|| invalid("empty series"))?;
    let start = window * t_end;
    let (slope, intercept, residual, samples) = linear_fit(times, values, start)?;
    Ok(GammaEstimate {
        gamma_sq: slope.max(0.0),
        intercept,
        window: (start, t_end),
        residual,
        samples,
        grid,
    })
}

pub fn gamma_from_v(sol: &PdeSolution, window: f64) -> Result<GammaEstimate> {
    if !sol.has_v {
        return Err(invalid("solution carries no variance field"));
    }
    gamma_from_series(&sol.taus, &sol.v0, window, sol.grid.describe())
}

/// Long-run rate of `w(0, tau)`, i.e. the slope over the last half of the
/// horizon. It estimates `int g m_n`; `w` itself grows linearly when that
/// integral is non-zero.
pub fn stationary_mean(sol: &PdeSolution) -> Result<f64> {
    let start = 0.5 * sol.grid.t_end;
    Ok(linear_fit(&sol.taus, &sol.w0, start)?.0)
}
