//! Explicit Lyapunov functions `V_{n,d}` and a grid certifier for the drift
//! inequality `(A_n V + eps V)(z) <= C`.
//!
//! ```text
//! V2 = delta (y^2/2 + U(x)) + x y + C_V
//! V3 = V2 + (xi/2) eta^2
//! V4 = V2 + K (H + R + M)
//! ```
//!
//! For the obstacle model `U` is the effective potential `U + chi_n`.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, NoiseSpec, State};

/// Constants of the Lyapunov functions and of the framed drift bounds.
///
/// `xi` is 0 unless the noise is of overdamped Langevin type and `k` is 0
/// unless it is Hamiltonian; the same holds for the matching bound families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovConstants {
    pub dim: usize,
    pub margin: f64,
    pub n: f64,
    pub cb: f64,
    pub delta: f64,
    pub c_v: f64,
    pub xi: f64,
    pub k: f64,
    pub epsilon: f64,
    pub lambda3: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub gamma_tilde: f64,
    pub gamma: f64,
    /// Noise data copied from the spec (0 when absent).
    pub r: f64,
    pub sigma: f64,
    pub delta_tilde: f64,
    pub m: f64,
    pub k2: f64,
    pub k2y: f64,
    pub k2x: f64,
    pub k3: f64,
    pub k3eta: f64,
    pub k3y: f64,
    pub k3x: f64,
    pub k4: f64,
    pub k4zeta: f64,
    pub k4eta: f64,
    pub k4y: f64,
    pub k4x: f64,
}

/// Lower bounds that `delta`, `xi`, `K` must strictly exceed, and the upper
/// bound on `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantFloors {
    pub delta: f64,
    pub c_v: f64,
    pub xi: f64,
    pub k: f64,
    pub epsilon_cap: f64,
}

/// `max(beta3, max_{|z|<=1} |U'(z)|)` with `U'` sampled at 10^4 points.
pub fn beta4(spec: &ModelSpec) -> f64 {
    let b3 = spec.potential.constants.beta3();
    let samples = 10_000;
    let mut m = 0.0f64;
    for i in 0..samples {
        let z = -1.0 + 2.0 * i as f64 / (samples - 1) as f64;
        m = m.max(spec.effective_potential_prime(z).abs());
    }
    b3.max(m)
}

fn floors_for(spec: &ModelSpec, delta: Option<f64>) -> Result<ConstantFloors> {
    let pc = spec.potential.constants;
    let (l1, l3) = (pc.lambda1, pc.lambda3());
    let cb = spec.damping;
    let n = spec.n.as_f64();
    let d = 1.0 / l1.sqrt();
    let d = d.max((2.0 / cb) * (2.0 + 4.0 * (cb + n).powi(2) / (3.0 * l3)));
    if !d.is_finite() || !(l3 > 0.0) {
        return Err(invalid(format!(
            "Lyapunov constants undefined: lambda1={l1}, lambda3={l3}, C_b={cb}"
        )));
    }
    let delta_used = delta.unwrap_or(d);
    let bracket = delta_used / cb + 2.0 / (3.0 * l3);
    let mut out = ConstantFloors {
        delta: d,
        c_v: 1.0 + delta_used * pc.beta1,
        xi: 0.0,
        k: 0.0,
        epsilon_cap: (l3 / delta_used).min(cb),
    };
    match &spec.noise {
        NoiseSpec::White => {}
        NoiseSpec::Colored1(ou) => {
            out.xi = 8.0 / ou.r * bracket;
            out.epsilon_cap = out.epsilon_cap.min(ou.r);
        }
        NoiseSpec::Colored2(h) => {
            if !(h.delta_tilde > 0.0) {
                return Err(invalid("Hamiltonian noise needs delta_tilde > 0"));
            }
            out.k = 4.0 / (h.delta_tilde * h.delta_tilde) * bracket;
            out.epsilon_cap = out.epsilon_cap.min(h.delta_tilde);
        }
    }
    Ok(out)
}

/// Lower bounds on the constants for `spec`, evaluated at the floor value of
/// `delta` itself.
pub fn constant_floors(spec: &ModelSpec) -> Result<ConstantFloors> {
    floors_for(spec, None)
}

/// Each constant set to `margin` times its lower bound; `eps` at
/// `1 / (2 margin)` of its cap; `C_V` exactly at its floor.
pub fn select_constants(spec: &ModelSpec, margin: f64) -> Result<LyapunovConstants> {
    if !(margin >= 1.0) || !margin.is_finite() {
        return Err(invalid("margin must be a finite number >= 1"));
    }
    let pc = spec.potential.constants;
    let delta = margin * floors_for(spec, None)?.delta;
    let fl = floors_for(spec, Some(delta))?;
    let xi = margin * fl.xi;
    let k = margin * fl.k;
    let epsilon = fl.epsilon_cap / (2.0 * margin);
    let n = spec.n.as_f64();
    let (lambda3, beta3) = (pc.lambda3(), pc.beta3());
    let b4 = beta4(spec);
    let gamma_tilde = 0.75 * lambda3;
    let gamma = beta3 + (delta * b4 * n).powi(2) / lambda3;
    let c_v = fl.c_v;
    let (r, sigma, delta_tilde, m) = match &spec.noise {
        NoiseSpec::White => (0.0, 1.0, 0.0, 0.0),
        NoiseSpec::Colored1(ou) => (ou.r, ou.sigma(), 0.0, 0.0),
        NoiseSpec::Colored2(h) => (0.0, 1.0, h.delta_tilde, h.m),
    };
    let k2y = spec.damping * delta / 4.0;
    let k2x = gamma_tilde / 2.0;
    let out = LyapunovConstants {
        dim: spec.dimension(),
        margin,
        n,
        cb: spec.damping,
        delta,
        c_v,
        xi,
        k,
        epsilon,
        lambda3,
        beta3,
        beta4: b4,
        gamma_tilde,
        gamma,
        r,
        sigma,
        delta_tilde,
        m,
        k2: c_v + gamma + delta / 2.0,
        k2y,
        k2x,
        k3: c_v + gamma + xi * sigma * sigma / 2.0,
        k3eta: xi * r / 4.0,
        k3y: k2y / 2.0,
        k3x: k2x / 2.0,
        k4: c_v + gamma + m * (1.0 + k * delta_tilde),
        k4zeta: k * delta_tilde * delta_tilde,
        k4eta: k * delta_tilde * delta_tilde / 2.0,
        k4y: k2y / 2.0,
        k4x: k2x / 2.0,
    };
    if [out.delta, out.gamma, out.epsilon, out.k2, out.k3, out.k4]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(invalid("non-finite Lyapunov constant"));
    }
    Ok(out)
}

fn check_dim(c: &LyapunovConstants, spec: &ModelSpec, z: &State) -> Result<()> {
    let d = spec.dimension();
    if z.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: z.dim(),
        });
    }
    if c.dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: c.dim,
        });
    }
    Ok(())
}

/// `V_{n,d}(z)`.
pub fn eval_v(c: &LyapunovConstants, spec: &ModelSpec, z: &State) -> Result<f64> {
    check_dim(c, spec, z)?;
    Ok(v_unchecked(c, spec, z))
}

fn v_unchecked(c: &LyapunovConstants, spec: &ModelSpec, z: &State) -> f64 {
    let (y, x) = (z.y(), z.x());
    let v2 = c.delta * (0.5 * y * y + spec.effective_potential(x)) + x * y + c.c_v;
    match &spec.noise {
        NoiseSpec::White => v2,
        NoiseSpec::Colored1(_) => v2 + 0.5 * c.xi * z.eta() * z.eta(),
        NoiseSpec::Colored2(h) => {
            let (e, s) = (z.eta(), z.zeta());
            let r = h.correction.as_ref().map_or(0.0, |r| (r.value)(e, s));
            v2 + c.k * ((h.h)(e, s) + r + h.m)
        }
    }
}

/// `(A_n V + eps V)(z)` from the closed-form partial derivatives of `V`.
pub fn eval_av_plus_eps_v(c: &LyapunovConstants, spec: &ModelSpec, z: &State) -> Result<f64> {
    check_dim(c, spec, z)?;
    if let NoiseSpec::Colored2(h) = &spec.noise {
        h.partials(0.0, 0.0)?;
    }
    Ok(av_unchecked(c, spec, z))
}

fn av_unchecked(c: &LyapunovConstants, spec: &ModelSpec, z: &State) -> f64 {
    let (y, x) = (z.y(), z.x());
    let f = spec.drift_unchecked(z);
    let (fy, fx) = (f.y(), f.x());
    let dv_dy = c.delta * y + x;
    let dv_dx = c.delta * spec.effective_potential_prime(x) + y;
    let mech = fy * dv_dy + fx * dv_dx;
    let noise = match &spec.noise {
        NoiseSpec::White => 0.5 * c.delta,
        NoiseSpec::Colored1(_) => {
            let e = z.eta();
            0.5 * c.sigma * c.sigma * c.xi + f.eta() * c.xi * e
        }
        NoiseSpec::Colored2(h) => {
            let p = h.partials(z.eta(), z.zeta()).expect("checked by caller");
            c.k * (0.5 * p.g_zeta_zeta + f.zeta() * p.g_zeta + f.eta() * p.g_eta)
        }
    };
    noise + mech + c.epsilon * v_unchecked(c, spec, z)
}

/// `delta eps U(x) - U'(x) (x + delta f_x(x))`.
pub fn s1(c: &LyapunovConstants, spec: &ModelSpec, x: f64) -> f64 {
    c.delta * c.epsilon * spec.effective_potential(x) - spec.effective_potential_prime(x) * (x + c.delta * spec.f_x(x))
}

pub fn s1_bound(c: &LyapunovConstants, x: f64) -> f64 {
    c.gamma - c.gamma_tilde * x * x
}

/// `-y [x (C_b - eps) + f_x(x)] - f_y(y) (delta y + x)`.
pub fn s2(c: &LyapunovConstants, spec: &ModelSpec, y: f64, x: f64) -> f64 {
    -y * (x * (c.cb - c.epsilon) + spec.f_x(x)) - spec.f_y(y) * (c.delta * y + x)
}

pub fn s2_bound(c: &LyapunovConstants, y: f64, x: f64) -> f64 {
    (c.cb + c.n).powi(2) * y * y / (2.0 * c.gamma_tilde) + 0.5 * c.gamma_tilde * x * x + c.delta * y.abs() + x.abs()
}

/// `(sigma^2/2) xi - v'(eta) xi eta + eps xi eta^2 / 2`.
pub fn s3(c: &LyapunovConstants, spec: &ModelSpec, eta: f64) -> Result<f64> {
    match &spec.noise {
        NoiseSpec::Colored1(ou) => {
            Ok(0.5 * c.sigma * c.sigma * c.xi - ou.v_prime(eta) * c.xi * eta + 0.5 * c.epsilon * c.xi * eta * eta)
        }
        _ => Err(invalid("S3 is defined for overdamped Langevin noise only")),
    }
}

pub fn s3_bound(c: &LyapunovConstants, eta: f64) -> f64 {
    0.5 * c.xi * c.sigma * c.sigma - 0.5 * c.xi * c.r * eta * eta
}

/// `K [G_zz/2 + B1 G_z + B2 G_eta + eps (G + M)]` with `G = H + R`.
pub fn s4(c: &LyapunovConstants, spec: &ModelSpec, zeta: f64, eta: f64) -> Result<f64> {
    match &spec.noise {
        NoiseSpec::Colored2(h) => {
            let p = h.partials(eta, zeta)?;
            Ok(c.k
                * (0.5 * p.g_zeta_zeta
                    + h.b1(eta, zeta) * p.g_zeta
                    + h.b2(eta, zeta) * p.g_eta
                    + c.epsilon * (p.g + h.m)))
        }
        _ => Err(invalid("S4 is defined for Hamiltonian noise only")),
    }
}

pub fn s4_bound(c: &LyapunovConstants, zeta: f64, eta: f64) -> f64 {
    let dd = c.delta_tilde * c.delta_tilde;
    c.m * (1.0 + c.k * c.delta_tilde) - c.k * dd * (zeta * zeta + eta * eta)
}

/// Right-hand side of the framed drift bound for the state dimension.
pub fn closed_form_bound(c: &LyapunovConstants, z: &State) -> f64 {
    let (y, x) = (z.y(), z.x());
    let tail = c.delta * y.abs() + x.abs();
    match z.dim() {
        2 => c.k2 - c.k2y * y * y - c.k2x * x * x + tail,
        3 => {
            let e = z.eta();
            c.k3 - c.k3eta * e * e - c.k3y * y * y - c.k3x * x * x + tail
        }
        _ => {
            let (e, s) = (z.eta(), z.zeta());
            c.k4 - c.k4zeta * s * s - c.k4eta * e * e - c.k4y * y * y - c.k4x * x * x + tail
        }
    }
}

/// Quadratic lower bound `(y^2/2)(delta - 1/(delta lambda1)) + (delta lambda1/2) x^2 + 1`
/// on `V_{n,2}`.
pub fn v2_lower_bound(c: &LyapunovConstants, spec: &ModelSpec, y: f64, x: f64) -> f64 {
    let l1 = spec.potential.constants.lambda1;
    0.5 * y * y * (c.delta - 1.0 / (c.delta * l1)) + 0.5 * c.delta * l1 * x * x + 1.0
}

/// Central-difference application of the generator to `f` at `z`.
pub fn fd_generator(spec: &ModelSpec, f: &dyn Fn(&State) -> f64, z: &State, h: f64) -> f64 {
    let drift = spec.drift_unchecked(z);
    let sigma = spec.sigma();
    let f0 = f(z);
    let shifted = |i: usize, s: f64| {
        let mut w = *z;
        w.as_mut_slice()[i] += s;
        f(&w)
    };
    let mut acc = 0.5 * sigma * sigma * (shifted(0, h) - 2.0 * f0 + shifted(0, -h)) / (h * h);
    for (i, fi) in drift.as_slice().iter().enumerate() {
        acc += fi * (shifted(i, h) - shifted(i, -h)) / (2.0 * h);
    }
    acc
}

/// Tensor grid `[lo, hi]^d` with `points` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        Self {
            lo: -half_width,
            hi: half_width,
            points,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        if self.points < 2 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }

    pub fn describe(&self, dim: usize) -> String {
        format!("{}^{dim} points on [{}, {}]^{dim}", self.points, self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub point: State,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct DriftReport {
    pub grid: String,
    pub points: usize,
    /// `max (A_n V + eps V)` over the grid; an admissible `C` on this grid.
    pub sup_value: f64,
    pub argmax: State,
    pub violation_count: usize,
    /// First few violations, for diagnostics.
    pub violations: Vec<Violation>,
    pub min_slack: f64,
    pub mean_slack: f64,
}

impl DriftReport {
    pub fn inferred_c(&self) -> f64 {
        self.sup_value
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0 && self.sup_value.is_finite()
    }
}

const KEEP_VIOLATIONS: usize = 32;

fn exceeds(value: f64, bound: f64) -> bool {
    !(value <= bound + 1e-9 * (1.0 + bound.abs()))
}

#[derive(Clone)]
struct Acc {
    points: usize,
    sup: f64,
    argmax: Option<State>,
    count: usize,
    kept: Vec<Violation>,
    min_slack: f64,
    slack_sum: f64,
}

impl Acc {
    fn new() -> Self {
        Self {
            points: 0,
            sup: f64::NEG_INFINITY,
            argmax: None,
            count: 0,
            kept: Vec::new(),
            min_slack: f64::INFINITY,
            slack_sum: 0.0,
        }
    }

    fn push(&mut self, z: State, value: f64, bound: f64) {
        self.points += 1;
        if !(value <= self.sup) {
            self.sup = value;
            self.argmax = Some(z);
        }
        let slack = bound - value;
        self.min_slack = self.min_slack.min(slack);
        self.slack_sum += slack;
        if exceeds(value, bound) {
            self.count += 1;
            if self.kept.len() < KEEP_VIOLATIONS {
                self.kept.push(Violation { point: z, value, bound });
            }
        }
    }

    fn merge(mut self, o: Acc) -> Acc {
        self.points += o.points;
        if o.sup > self.sup || o.sup.is_nan() {
            self.sup = o.sup;
            self.argmax = o.argmax;
        }
        self.count += o.count;
        for v in o.kept {
            if self.kept.len() < KEEP_VIOLATIONS {
                self.kept.push(v);
            }
        }
        self.min_slack = self.min_slack.min(o.min_slack);
        self.slack_sum += o.slack_sum;
        self
    }
}

/// Certifies the framed bound for an arbitrary evaluator of `A_n V + eps V`.
pub fn certify_with(
    c: &LyapunovConstants,
    dim: usize,
    grid: &GridSpec,
    evaluator: &(dyn Fn(&State) -> f64 + Sync),
) -> Result<DriftReport> {
    if !(2..=4).contains(&dim) || grid.points < 1 || !(grid.hi >= grid.lo) {
        return Err(invalid("certification needs 2 <= d <= 4 and a non-empty bounded grid"));
    }
    let p = grid.points;
    let inner = p.pow(dim as u32 - 1);
    let acc = (0..p)
        .into_par_iter()
        .fold(Acc::new, |mut acc, i0| {
            let mut comps = [grid.node(i0), 0.0, 0.0, 0.0];
            for j in 0..inner {
                let mut rest = j;
                for slot in comps[1..dim].iter_mut().rev() {
                    *slot = grid.node(rest % p);
                    rest /= p;
                }
                let z = State::from_slice(&comps[..dim]).expect("dimension in range");
                acc.push(z, evaluator(&z), closed_form_bound(c, &z));
            }
            acc
        })
        .reduce(Acc::new, Acc::merge);
    Ok(DriftReport {
        grid: grid.describe(dim),
        points: acc.points,
        sup_value: acc.sup,
        argmax: acc.argmax.unwrap_or(State::origin(dim)?),
        violation_count: acc.count,
        violations: acc.kept,
        min_slack: acc.min_slack,
        mean_slack: acc.slack_sum / acc.points.max(1) as f64,
    })
}

/// Certifies `(A_n V + eps V)(z) <= framed bound` at every grid node.
pub fn certify_drift(c: &LyapunovConstants, spec: &ModelSpec, grid: &GridSpec) -> Result<DriftReport> {
    let d = spec.dimension();
    check_dim(c, spec, &State::origin(d)?)?;
    if let NoiseSpec::Colored2(h) = &spec.noise {
        h.partials(0.0, 0.0)?;
    }
    certify_with(c, d, grid, &|z| av_unchecked(c, spec, z))
}
