//! Threshold crossing of `Delta_g(t) = int_0^t g(Z_s) ds`.
//!
//! `W*(b, T)` is the probability that `|W|` reaches `b` before `T` for a
//! standard Wiener process `W`. Under diffusive scaling
//! `P(max_{t <= pT} |Delta_g| >= sqrt(p) b) -> W*(b / gamma, T)`.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, State};
use crate::pde::{GammaEstimate, Observable};
use crate::simulate::{ensemble_map, first_passage_time, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Series,
    MonteCarlo,
    Asymptotic,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Series => "series",
            Method::MonteCarlo => "mc",
            Method::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingQuery {
    pub b: f64,
    pub t: f64,
    pub p: f64,
    /// `g` acts on the velocity component.
    pub observable: Observable,
}

impl CrossingQuery {
    pub fn new(b: f64, t: f64, p: f64, observable: Observable) -> Result<Self> {
        if !(b >= 0.0) || !(t > 0.0) || !(p >= 1.0) || !b.is_finite() || !t.is_finite() {
            return Err(invalid("crossing query needs b >= 0, T > 0, p >= 1"));
        }
        Ok(Self { b, t, p, observable })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub samples: usize,
    pub method: Method,
    /// Series only: bound on the neglected tail.
    pub truncation_bound: Option<f64>,
    pub b: f64,
    pub t: f64,
    pub p: f64,
}

pub const DEFAULT_TOL: f64 = 1e-12;

/// Upper tail of the standard normal law.
fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Sums an alternating series with terms of decreasing magnitude until the
/// next term drops below `tol`. Returns the partial sum and that term's size.
fn alternating_sum(term: impl Fn(usize) -> f64, tol: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut k = 0;
    loop {
        let a = term(k);
        if a.abs() < tol {
            return (sum, a.abs());
        }
        sum += a;
        k += 1;
    }
}

/// `W*(b, T)`, exact up to the returned truncation bound (`<= tol`).
///
/// For `T / b^2 > 1` the eigenfunction series
/// `1 - (4/pi) sum (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 T / (8 b^2))` converges in
/// a few terms. Below that it needs many terms and loses relative accuracy,
/// so the equivalent image series `4 sum_{k>=1} (-1)^{k-1} Phi_bar((2k-1) b / sqrt T)`
/// is used instead.
pub fn w_star(b: f64, t: f64, tol: f64) -> Result<CrossingEstimate> {
    if !(b > 0.0) || !(t > 0.0) || !(tol > 0.0) {
        return Err(invalid("w_star needs b > 0, T > 0, tol > 0"));
    }
    let ratio = t / (b * b);
    let (value, bound) = if ratio > 1.0 {
        let c = PI * PI * ratio / 8.0;
        let scale = 4.0 / PI;
        let (s, next) = alternating_sum(
            |k| {
                let m = (2 * k + 1) as f64;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                scale * sign / m * (-m * m * c).exp()
            },
            tol,
        );
        (1.0 - s, next)
    } else {
        let x = 1.0 / ratio.sqrt();
        alternating_sum(
            |k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                4.0 * sign * normal_sf((2 * k + 1) as f64 * x)
            },
            tol,
        )
    };
    Ok(CrossingEstimate {
        probability: value.clamp(0.0, 1.0),
        stderr: 0.0,
        samples: 0,
        method: Method::Series,
        truncation_bound: Some(bound),
        b,
        t,
        p: 1.0,
    })
}

/// `W*(b / gamma, T)`.
pub fn asymptotic_crossing(gamma: &GammaEstimate, b: f64, t: f64) -> Result<CrossingEstimate> {
    asymptotic_from_gamma_sq(gamma.gamma_sq, b, t)
}

pub fn asymptotic_from_gamma_sq(gamma_sq: f64, b: f64, t: f64) -> Result<CrossingEstimate> {
    if !(gamma_sq > 0.0) {
        return Err(Error::Degenerate(format!(
            "gamma^2 = {gamma_sq} gives no diffusive limit"
        )));
    }
    let mut est = w_star(b / gamma_sq.sqrt(), t, DEFAULT_TOL)?;
    est.method = Method::Asymptotic;
    est.b = b;
    Ok(est)
}

/// Monte Carlo settings shared by the crossing estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McSettings {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// Estimates `P(max_{t <= pT} |Delta_g(t)| >= sqrt(p) b)` for every `T` in
/// `t_grid` from a single set of `paths` trajectories started at the origin.
pub fn crossing_curve(
    spec: &ModelSpec,
    b: f64,
    p: f64,
    observable: Observable,
    t_grid: &[f64],
    mc: &McSettings,
) -> Result<Vec<CrossingEstimate>> {
    if mc.paths < 100 {
        return Err(invalid("crossing estimates need at least 100 paths"));
    }
    if t_grid.is_empty() {
        return Err(invalid("empty T grid"));
    }
    for &t in t_grid {
        CrossingQuery::new(b, t, p, observable)?;
    }
    let horizon = p * t_grid.iter().cloned().fold(0.0, f64::max);
    let level = p.sqrt() * b;
    let cfg = SimConfig::new(mc.dt, horizon, mc.seed, State::origin(spec.dimension())?);
    let hits = ensemble_map(&cfg, mc.paths, |_, c| {
        first_passage_time(spec, c, level, |z| observable.eval(z.y()))
    })?;
    let m = mc.paths as f64;
    Ok(t_grid
        .iter()
        .map(|&t| {
            // hits are reported on the step grid, compare in step units
            let last = (p * t / mc.dt).round();
            let count = hits
                .iter()
                .filter(|h| h.is_some_and(|s| (s / mc.dt).round() <= last))
                .count();
            let prob = count as f64 / m;
            CrossingEstimate {
                probability: prob,
                stderr: (prob * (1.0 - prob) / m).sqrt(),
                samples: mc.paths,
                method: Method::MonteCarlo,
                truncation_bound: None,
                b,
                t,
                p,
            }
        })
        .collect())
}

/// Single-horizon version of [`crossing_curve`].
pub fn estimate_crossing(spec: &ModelSpec, query: &CrossingQuery, mc: &McSettings) -> Result<CrossingEstimate> {
    Ok(crossing_curve(spec, query.b, query.p, query.observable, &[query.t], mc)?[0])
}

/// Independent brute-force estimate of `W*` used to validate the series.
pub mod oracle {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use rayon::prelude::*;

    use crate::simulate::{path_seed, rng_for, EnsembleStat};

    /// Bridge-corrected and plain discrete-max estimates from the same paths.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct WienerMax {
        pub bridge: EnsembleStat,
        pub discrete: EnsembleStat,
    }

    /// Simulates `paths` Wiener paths with step `dt` and, for each barrier
    /// `(b, T)`, estimates `P(max_{t <= T} |W_t| >= b)`.
    ///
    /// The discrete estimate only looks at grid points and is biased low by
    /// `O(sqrt dt)`. The bridge estimate treats each step as a Brownian
    /// bridge, which leaves `(-b, b)` with probability
    /// `1 - (1 - e^{-2(b-w0)(b-w1)/dt}) (1 - e^{-2(b+w0)(b+w1)/dt})`.
    /// One uniform per step is shared by all barriers, so both estimates are
    /// pathwise monotone in `b`. A path stops once every barrier is decided.
    pub fn wiener_max(barriers: &[(f64, f64)], paths: usize, dt: f64, seed: u64) -> Vec<WienerMax> {
        let steps: Vec<usize> = barriers.iter().map(|&(_, t)| (t / dt).round() as usize).collect();
        let horizon = steps.iter().copied().max().unwrap_or(0);
        let sdt = dt.sqrt();
        let nb = barriers.len();
        let counts = (0..paths)
            .into_par_iter()
            .fold(
                || vec![[0u64; 2]; nb],
                |mut acc, i| {
                    let mut rng = rng_for(path_seed(seed, i as u64));
                    let mut open_bridge: Vec<usize> = (0..nb).collect();
                    let mut open_discrete = open_bridge.clone();
                    let mut w = 0.0f64;
                    let near = 12.0 * sdt;
                    // while |w| stays below `guard` and no barrier expires, nothing can happen
                    let refresh = |ob: &[usize], od: &[usize]| {
                        let guard = ob
                            .iter()
                            .chain(od)
                            .map(|&j| barriers[j].0 - near)
                            .fold(f64::INFINITY, f64::min);
                        let expiry = ob.iter().chain(od).map(|&j| steps[j]).min().unwrap_or(0);
                        (guard, expiry)
                    };
                    let (mut guard, mut expiry) = refresh(&open_bridge, &open_discrete);
                    for k in 1..=horizon {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        let w1 = w + sdt * g;
                        if k <= expiry && w.abs().max(w1.abs()) < guard {
                            w = w1;
                            continue;
                        }
                        let mut u = None;
                        open_bridge.retain(|&j| {
                            if k > steps[j] {
                                return false;
                            }
                            let b = barriers[j].0;
                            let crossed = if w1.abs() >= b {
                                true
                            } else if b - w.abs().max(w1.abs()) > 12.0 * sdt {
                                // bridge probability below e^-288
                                false
                            } else {
                                let pu = (-2.0 * (b - w) * (b - w1) / dt).exp();
                                let pd = (-2.0 * (b + w) * (b + w1) / dt).exp();
                                let prob = 1.0 - (1.0 - pu) * (1.0 - pd);
                                let draw = *u.get_or_insert_with(|| rng.random::<f64>());
                                draw < prob
                            };
                            if crossed {
                                acc[j][0] += 1;
                            }
                            !crossed
                        });
                        open_discrete.retain(|&j| {
                            if k > steps[j] {
                                return false;
                            }
                            let crossed = w1.abs() >= barriers[j].0;
                            if crossed {
                                acc[j][1] += 1;
                            }
                            !crossed
                        });
                        w = w1;
                        if open_bridge.is_empty() && open_discrete.is_empty() {
                            break;
                        }
                        (guard, expiry) = refresh(&open_bridge, &open_discrete);
                    }
                    acc
                },
            )
            .reduce(
                || vec![[0u64; 2]; nb],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        x[0] += y[0];
                        x[1] += y[1];
                    }
                    a
                },
            );
        let stat = |c: u64| {
            let p = c as f64 / paths as f64;
            EnsembleStat {
                estimate: p,
                stderr: (p * (1.0 - p) / paths as f64).sqrt(),
                samples: paths,
            }
        };
        counts
            .into_iter()
            .map(|c| WienerMax {
                bridge: stat(c[0]),
                discrete: stat(c[1]),
            })
            .collect()
    }
}
