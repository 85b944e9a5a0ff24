//! Euler–Maruyama simulation of `dZ = F_n(Z) dt + sigma dW e_1`.
//!
//! Seeding: path `i` of an ensemble with base seed `s` runs with seed
//! `splitmix64(s ^ splitmix64(i))`; a path with seed `t` draws its normals
//! from `Pcg64Mcg::seed_from_u64(t)`. Per-path output is therefore
//! bit-reproducible regardless of thread count.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, State};

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of ensemble member `i`.
pub fn path_seed(base: u64, i: u64) -> u64 {
    splitmix64(base ^ splitmix64(i))
}

pub fn rng_for(seed: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(seed)
}

/// Default step: `1e-3` up to `n = 100`, `1e-4` above (keeps `n dt <= 0.1`).
pub fn default_dt(n: u32) -> f64 {
    if n <= 100 {
        1e-3
    } else {
        1e-4
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub z0: State,
    pub stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, seed: u64, z0: State) -> Self {
        Self {
            dt,
            t_end,
            seed,
            z0,
            stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(invalid("need dt > 0 and a finite T > 0"));
        }
        if self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(invalid("dt must not exceed T"));
        }
        if self.stride == 0 || self.stride as f64 * self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(invalid("stride must be >= 1 with stride * dt <= T"));
        }
        if !self.z0.is_finite() {
            return Err(invalid("initial state must be finite"));
        }
        Ok(())
    }

    /// Number of Euler steps, `round(T / dt)`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Digest of the model that produced the path.
    pub model_digest: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleStat {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl EnsembleStat {
    /// Mean and `sd / sqrt(len)` of `values`.
    pub fn from_samples(values: &[f64]) -> Self {
        let m = values.len();
        let mean = values.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        Self {
            estimate: mean,
            stderr: (var / m as f64).sqrt(),
            samples: m,
        }
    }
}

#[inline]
fn step_in_place(spec: &ModelSpec, z: &mut State, dt: f64, sdt: f64, g: f64) {
    let f = spec.drift_unchecked(z);
    for (zi, fi) in z.as_mut_slice().iter_mut().zip(f.as_slice()) {
        *zi += fi * dt;
    }
    z.as_mut_slice()[0] += sdt * g;
}

/// One Euler–Maruyama step with a given standard normal draw.
pub fn em_step(spec: &ModelSpec, z: &State, dt: f64, gaussian: f64) -> Result<State> {
    if z.dim() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            found: z.dim(),
        });
    }
    let mut out = *z;
    step_in_place(spec, &mut out, dt, spec.sigma() * dt.sqrt(), gaussian);
    if !out.is_finite() {
        return Err(Error::NonFiniteState { step: 0 });
    }
    Ok(out)
}

/// Streams a path to `visit(k, t_k, z_k)` for `k = 0..=steps`. The visitor
/// returns `false` to stop early. Returns the last visited state.
pub fn simulate_with(
    spec: &ModelSpec,
    cfg: &SimConfig,
    mut visit: impl FnMut(usize, f64, &State) -> bool,
) -> Result<State> {
    cfg.validate()?;
    if cfg.z0.dim() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            found: cfg.z0.dim(),
        });
    }
    let mut rng = rng_for(cfg.seed);
    let steps = cfg.steps();
    let sdt = spec.sigma() * cfg.dt.sqrt();
    let mut z = cfg.z0;
    if !visit(0, 0.0, &z) {
        return Ok(z);
    }
    for k in 1..=steps {
        let g: f64 = StandardNormal.sample(&mut rng);
        step_in_place(spec, &mut z, cfg.dt, sdt, g);
        if !z.is_finite() {
            return Err(Error::NonFiniteState { step: k });
        }
        if !visit(k, k as f64 * cfg.dt, &z) {
            break;
        }
    }
    Ok(z)
}

/// Stored path with samples every `stride` steps (including `t = 0`).
pub fn simulate_path(spec: &ModelSpec, cfg: &SimConfig) -> Result<Trajectory> {
    let cap = cfg.steps() / cfg.stride.max(1) + 1;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    simulate_with(spec, cfg, |k, t, z| {
        if k % cfg.stride == 0 {
            times.push(t);
            states.push(*z);
        }
        true
    })?;
    Ok(Trajectory {
        times,
        states,
        model_digest: spec.digest(),
    })
}

/// Runs `per_path(i, cfg_i)` for `i in 0..m` in parallel, where `cfg_i`
/// carries the derived seed of member `i`. Results keep index order.
pub fn ensemble_map<T: Send>(
    cfg: &SimConfig,
    m: usize,
    per_path: impl Fn(usize, &SimConfig) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..m)
        .into_par_iter()
        .map(|i| per_path(i, &cfg.with_seed(path_seed(cfg.seed, i as u64))))
        .collect()
}

/// Mean of `functional` over `m` independent stored paths.
pub fn ensemble_mean(
    spec: &ModelSpec,
    cfg: &SimConfig,
    m: usize,
    functional: impl Fn(&Trajectory) -> f64 + Sync,
) -> Result<EnsembleStat> {
    if m < 2 {
        return Err(invalid("ensemble needs at least 2 paths"));
    }
    let values = ensemble_map(cfg, m, |_, c| Ok(functional(&simulate_path(spec, c)?)))?;
    Ok(EnsembleStat::from_samples(&values))
}

/// Left-endpoint time average of `g` over the stored samples with
/// `t_start <= t < T`.
pub fn time_average(traj: &Trajectory, g: impl Fn(&State) -> f64, t_start: f64) -> f64 {
    let mut acc = 0.0;
    let mut cnt = 0usize;
    for (t, z) in traj
        .times
        .iter()
        .zip(&traj.states)
        .take(traj.times.len().saturating_sub(1))
    {
        if *t >= t_start - 1e-12 {
            acc += g(z);
            cnt += 1;
        }
    }
    acc / cnt.max(1) as f64
}

/// One histogram axis over state component `component` (index into the
/// ordered state slice).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinAxis {
    pub component: usize,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl BinAxis {
    pub fn new(component: usize, lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            component,
            lo,
            hi,
            bins,
        }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        (
            self.lo + i as f64 * self.width(),
            self.lo + (i + 1) as f64 * self.width(),
        )
    }

    fn index(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v < self.hi) {
            return None;
        }
        Some((((v - self.lo) / self.width()) as usize).min(self.bins - 1))
    }
}

/// Normalized histogram of post-burn-in samples. `density[b]` is
/// `count[b] / (samples * cell volume)`; `stderr[b]` comes from batch means.
#[derive(Clone, Debug)]
pub struct Histogram {
    pub axes: Vec<BinAxis>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: u64,
    pub batches: usize,
}

impl Histogram {
    /// Multi-index of flat bin `b`, first axis slowest.
    pub fn bin_index(&self, mut b: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (slot, ax) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = b % ax.bins;
            b /= ax.bins;
        }
        idx
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(BinAxis::width).product()
    }

    /// Probability mass inside the grid.
    pub fn mass(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.samples as f64
    }
}

pub const DEFAULT_BATCHES: usize = 32;

/// Histogram of a single long path after `burn_in`.
pub fn empirical_invariant_density(
    spec: &ModelSpec,
    cfg: &SimConfig,
    burn_in: f64,
    axes: &[BinAxis],
) -> Result<Histogram> {
    empirical_invariant_density_batched(spec, cfg, burn_in, axes, DEFAULT_BATCHES)
}

pub fn empirical_invariant_density_batched(
    spec: &ModelSpec,
    cfg: &SimConfig,
    burn_in: f64,
    axes: &[BinAxis],
    batches: usize,
) -> Result<Histogram> {
    if !(burn_in >= 0.0 && burn_in < cfg.t_end) {
        return Err(invalid("burn-in must lie in [0, T)"));
    }
    if axes.is_empty()
        || axes
            .iter()
            .any(|a| a.bins == 0 || !(a.hi > a.lo) || a.component >= spec.dimension())
    {
        return Err(invalid("bad histogram axes"));
    }
    if batches < 2 {
        return Err(invalid("need at least two batches"));
    }
    let cells: usize = axes.iter().map(|a| a.bins).product();
    let steps = cfg.steps();
    let first = ((burn_in / cfg.dt).ceil() as usize).min(steps);
    let total = (steps - first + 1) as u64;
    let per_batch = total.div_ceil(batches as u64);
    let mut batch_counts = vec![vec![0u64; cells]; batches];
    let mut batch_sizes = vec![0u64; batches];
    simulate_with(spec, cfg, |k, _, z| {
        if k < first || !(k - first).is_multiple_of(cfg.stride) {
            return true;
        }
        let b = (((k - first) as u64) / per_batch) as usize;
        batch_sizes[b] += 1;
        let v = z.as_slice();
        let mut flat = 0usize;
        for ax in axes {
            match ax.index(v[ax.component]) {
                Some(i) => flat = flat * ax.bins + i,
                None => return true,
            }
        }
        batch_counts[b][flat] += 1;
        true
    })?;
    let samples: u64 = batch_sizes.iter().sum();
    let mut counts = vec![0u64; cells];
    for bc in &batch_counts {
        for (c, v) in counts.iter_mut().zip(bc) {
            *c += v;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyHistogram);
    }
    let vol: f64 = axes.iter().map(BinAxis::width).product();
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (samples as f64 * vol)).collect();
    let used: Vec<usize> = (0..batches).filter(|&b| batch_sizes[b] > 0).collect();
    let nb = used.len() as f64;
    let stderr = (0..cells)
        .map(|c| {
            let est: Vec<f64> = used
                .iter()
                .map(|&b| batch_counts[b][c] as f64 / (batch_sizes[b] as f64 * vol))
                .collect();
            let mean = est.iter().sum::<f64>() / nb;
            let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nb - 1.0).max(1.0);
            (var / nb).sqrt()
        })
        .collect();
    Ok(Histogram {
        axes: axes.to_vec(),
        counts,
        density,
        stderr,
        samples,
        batches: used.len(),
    })
}

/// `max_{t <= T} |Delta_g(t)|` with `Delta_g(t_k) = sum_{j<k} g(Z_j) dt`.
pub fn crossing_statistic(spec: &ModelSpec, cfg: &SimConfig, g: impl Fn(&State) -> f64) -> Result<f64> {
    let mut delta = 0.0f64;
    let mut running = 0.0f64;
    let dt = cfg.dt;
    simulate_with(spec, cfg, |_, _, z| {
        running = running.max(delta.abs());
        delta += g(z) * dt;
        true
    })?;
    Ok(running)
}

/// First grid time `t_k` at which `|Delta_g(t_k)| >= level`, or `None`
/// before `T`. The path stops at the crossing.
pub fn first_passage_time(
    spec: &ModelSpec,
    cfg: &SimConfig,
    level: f64,
    g: impl Fn(&State) -> f64,
) -> Result<Option<f64>> {
    let mut delta = 0.0f64;
    let mut hit = None;
    let dt = cfg.dt;
    simulate_with(spec, cfg, |_, t, z| {
        if delta.abs() >= level {
            hit = Some(t);
            return false;
        }
        delta += g(z) * dt;
        true
    })?;
    Ok(hit)
}

/// Monte Carlo estimate of `v(z0, tau) = Var(int_0^tau g(Z_s) ds)` at each
/// requested `tau`, from `m` paths. The standard error uses the sample
/// fourth central moment.
pub fn variance_curve(
    spec: &ModelSpec,
    cfg: &SimConfig,
    m: usize,
    taus: &[f64],
    g: impl Fn(&State) -> f64 + Sync,
) -> Result<Vec<EnsembleStat>> {
    if m < 2 {
        return Err(invalid("variance estimate needs at least 2 paths"));
    }
    if taus.is_empty() || taus.iter().any(|&t| !(t > 0.0) || t > cfg.t_end * (1.0 + 1e-12)) {
        return Err(invalid("checkpoints must lie in (0, T]"));
    }
    let marks: Vec<usize> = taus.iter().map(|t| ((t / cfg.dt).round() as usize).max(1)).collect();
    let last = *marks.iter().max().expect("non-empty");
    let run = SimConfig {
        t_end: last as f64 * cfg.dt,
        ..*cfg
    };
    let paths = ensemble_map(&run, m, |_, c| {
        let mut out = vec![0.0; marks.len()];
        let mut delta = 0.0;
        let dt = c.dt;
        simulate_with(spec, c, |k, _, z| {
            for (o, &mk) in out.iter_mut().zip(&marks) {
                if mk == k {
                    *o = delta;
                }
            }
            delta += g(z) * dt;
            true
        })?;
        Ok(out)
    })?;
    let mf = m as f64;
    Ok((0..marks.len())
        .map(|j| {
            let mean = paths.iter().map(|p| p[j]).sum::<f64>() / mf;
            let m2 = paths.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / mf;
            let m4 = paths.iter().map(|p| (p[j] - mean).powi(4)).sum::<f64>() / mf;
            EnsembleStat {
                estimate: m2 * mf / (mf - 1.0),
                stderr: ((m4 - m2 * m2).max(0.0) / mf).sqrt(),
                samples: m,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::density::GibbsDensity;
    use crate::model::{ModelKind, NoiseSpec, OuNoise, Potential};

    fn quad(kind: ModelKind, n: u32) -> ModelSpec {
        ModelSpec::new(kind, n, 1.0, Potential::quadratic(1.0), NoiseSpec::White).unwrap()
    }

    #[test]
    fn single_step_examples() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let z = em_step(&spec, &State::white(2.0, 0.0), 0.01, 0.0).unwrap();
        assert!((z.y() - 1.97).abs() < 1e-15 && (z.x() - 0.02).abs() < 1e-15);

        let free = ModelSpec::new(ModelKind::Friction, 1, 0.0, Potential::zero(), NoiseSpec::White).unwrap();
        let z = em_step(&free, &State::white(0.0, 0.5), 0.04, 1.5).unwrap();
        assert!((z.y() - 0.3).abs() < 1e-15 && z.x() == 0.5);

        let spec = quad(ModelKind::ElastoPlastic, 2);
        let z0 = State::white(1.0, 2.0);
        let det = em_step(&spec, &z0, 0.1, 0.0).unwrap();
        assert!((det.y() - 0.7).abs() < 1e-15 && (det.x() - 1.9).abs() < 1e-15);
        assert!(em_step(&spec, &State::colored1(0.0, 0.0, 0.0), 0.1, 0.0).is_err());
    }

    #[test]
    fn overflow_reports_step() {
        let spec = quad(ModelKind::Obstacle, 1000);
        let cfg = SimConfig::new(1.0, 5000.0, 1, State::white(0.0, 5.0));
        match simulate_path(&spec, &cfg) {
            Err(Error::NonFiniteState { step }) => assert!(step > 100 && step < 5000),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let z = State::white(0.0, 0.0);
        assert!(SimConfig::new(0.0, 1.0, 0, z).validate().is_err());
        assert!(SimConfig::new(2.0, 1.0, 0, z).validate().is_err());
        assert!(SimConfig::new(0.1, 1.0, 0, z).with_stride(20).validate().is_err());
        assert!(SimConfig::new(0.1, 1.0, 0, z).with_stride(10).validate().is_ok());
    }

    #[test]
    fn trajectories_are_deterministic() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let cfg = SimConfig::new(1e-3, 5.0, 7, State::white(0.0, 0.0)).with_stride(10);
        let a = simulate_path(&spec, &cfg).unwrap();
        let b = simulate_path(&spec, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times.len(), 501);
        assert_eq!(a.times[0], 0.0);
        assert!((a.times[1] - 0.01).abs() < 1e-15);
        let c = simulate_path(&spec, &cfg.with_seed(8)).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn ensembles_independent_of_scheduling() {
        let spec = ModelSpec::friction_1d(10).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 3, State::white(0.0, 0.0));
        let run = || ensemble_map(&cfg, 16, |_, c| Ok(simulate_path(&spec, c)?.states.last().unwrap().x())).unwrap();
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(run);
        assert_eq!(a, b);
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| path_seed(3, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn constant_functional() {
        let spec = ModelSpec::friction_1d(10).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 1, State::white(0.0, 0.0));
        let s = ensemble_mean(&spec, &cfg, 10, |_| 1.0).unwrap();
        assert_eq!((s.estimate, s.stderr, s.samples), (1.0, 0.0, 10));
        assert!(ensemble_mean(&spec, &cfg, 1, |_| 1.0).is_err());
    }

    #[test]
    fn friction_velocity_mean_is_zero() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let cfg = SimConfig::new(1e-2, 100.0, 21, State::white(0.0, 0.0)).with_stride(1);
        let s = ensemble_mean(&spec, &cfg, 64, |tr| time_average(tr, |z| z.y(), 0.0)).unwrap();
        assert!(s.estimate.abs() < 3.0 * s.stderr, "{s:?}");
    }

    #[test]
    fn ou_stationary_variance() {
        let theta = 2.0;
        let ou = OuNoise::ornstein_uhlenbeck(theta, 2.0).unwrap();
        let spec = ModelSpec::new(
            ModelKind::Friction,
            10,
            1.0,
            Potential::quadratic(1.0),
            NoiseSpec::Colored1(ou),
        )
        .unwrap();
        let cfg = SimConfig::new(1e-3, 100.0, 5, State::colored1(0.0, 0.0, 0.0)).with_stride(10);
        let s = ensemble_mean(&spec, &cfg, 32, |tr| time_average(tr, |z| z.eta() * z.eta(), 10.0)).unwrap();
        let exact = 1.0 / (2.0 * theta);
        assert!((s.estimate - exact).abs() < 3.0 * s.stderr + 2e-3, "{s:?} vs {exact}");
    }

    #[test]
    fn crossing_statistic_trivial_functionals() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let cfg = SimConfig::new(1e-3, 2.0, 9, State::white(0.0, 0.0));
        assert_eq!(crossing_statistic(&spec, &cfg, |_| 0.0).unwrap(), 0.0);
        assert!((crossing_statistic(&spec, &cfg, |_| 1.0).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn integral_of_velocity_is_displacement() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let cfg = SimConfig::new(1e-3, 20.0, 4, State::white(0.0, 0.3));
        let stat = crossing_statistic(&spec, &cfg, |z| z.y()).unwrap();
        let tr = simulate_path(&spec, &cfg).unwrap();
        let x0 = tr.states[0].x();
        let max_dx = tr.states.iter().map(|z| (z.x() - x0).abs()).fold(0.0, f64::max);
        let max_y = tr.states.iter().map(|z| z.y().abs()).fold(0.0, f64::max);
        assert!((stat - max_dx).abs() <= 2.0 * cfg.dt * max_y, "{stat} vs {max_dx}");
    }

    #[test]
    fn crossing_statistic_grows_with_horizon() {
        let spec = ModelSpec::friction_1d(50).unwrap();
        let mut prev = 0.0;
        for t in [1.0, 2.0, 5.0, 10.0] {
            let cfg = SimConfig::new(1e-3, t, 17, State::white(0.0, 0.0));
            let s = crossing_statistic(&spec, &cfg, |z| z.y()).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn first_passage_matches_running_max() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let cfg = SimConfig::new(1e-3, 10.0, 12, State::white(0.0, 0.0));
        let m = crossing_statistic(&spec, &cfg, |z| z.y()).unwrap();
        assert!(first_passage_time(&spec, &cfg, 0.999 * m, |z| z.y()).unwrap().is_some());
        assert!(first_passage_time(&spec, &cfg, 1.001 * m, |z| z.y()).unwrap().is_none());
        assert_eq!(first_passage_time(&spec, &cfg, 0.0, |z| z.y()).unwrap(), Some(0.0));
    }

    #[test]
    fn elasto_plastic_confines_displacement() {
        let spec = quad(ModelKind::ElastoPlastic, 100);
        let cfg = SimConfig::new(1e-3, 50.0, 2024, State::white(0.0, 0.0));
        let tr = simulate_path(&spec, &cfg).unwrap();
        let thr = 1.0 + 3.0 / 10.0;
        let frac = tr.states.iter().filter(|z| z.x().abs() > thr).count() as f64 / tr.states.len() as f64;
        assert!(frac < 0.01, "{frac}");
    }

    #[test]
    fn obstacle_excursions_are_finite() {
        let spec = quad(ModelKind::Obstacle, 100);
        let cfg = SimConfig::new(1e-3, 50.0, 2024, State::white(0.0, 0.0));
        let tr = simulate_path(&spec, &cfg).unwrap();
        let m = tr.states.iter().map(|z| z.x().abs()).fold(0.0, f64::max);
        assert!(m > 1.0 && m < 2.0, "{m}");
    }

    #[test]
    fn histogram_errors_and_normalization() {
        let spec = quad(ModelKind::Obstacle, 2);
        let cfg = SimConfig::new(1e-2, 50.0, 1, State::white(0.0, 0.0));
        let far = [BinAxis::new(1, 50.0, 60.0, 4)];
        assert!(matches!(
            empirical_invariant_density(&spec, &cfg, 5.0, &far),
            Err(Error::EmptyHistogram)
        ));
        assert!(empirical_invariant_density(&spec, &cfg, 60.0, &far).is_err());
        let axes = [BinAxis::new(0, -8.0, 8.0, 16), BinAxis::new(1, -8.0, 8.0, 16)];
        let h = empirical_invariant_density(&spec, &cfg, 5.0, &axes).unwrap();
        let integral: f64 = h.density.iter().sum::<f64>() * h.cell_volume();
        assert!((integral - 1.0).abs() < 1e-12);
        assert_eq!(h.bin_index(17), vec![1, 1]);
    }

    #[test]
    fn stationary_law_is_symmetric() {
        let spec = quad(ModelKind::Obstacle, 10);
        let cfg = SimConfig::new(1e-2, 4000.0, 8, State::white(0.0, 0.0));
        let axes = [BinAxis::new(0, -2.0, 2.0, 4), BinAxis::new(1, -2.0, 2.0, 4)];
        let h = empirical_invariant_density(&spec, &cfg, 100.0, &axes).unwrap();
        let cells = h.density.len();
        let mut bad = 0;
        for b in 0..cells / 2 {
            let mirror = cells - 1 - b;
            let se = (h.stderr[b].powi(2) + h.stderr[mirror].powi(2)).sqrt();
            if (h.density[b] - h.density[mirror]).abs() > 3.0 * se + 1e-12 {
                bad += 1;
            }
        }
        assert!(bad <= 1, "{bad} asymmetric cell pairs");
    }

    #[test]
    fn weak_error_shrinks_with_dt() {
        // Coarse paths reuse the fine Brownian increments.
        let spec = quad(ModelKind::Obstacle, 2);
        let gibbs = GibbsDensity::for_model(&spec).unwrap();
        let (ey2, ex2) = gibbs.second_moments();
        let h = 0.025;
        let steps_fine = (4000.0 / h) as usize;
        let errors: Vec<f64> = ensemble_map(&SimConfig::new(h, 1.0, 99, State::white(0.0, 0.0)), 16, |_, c| {
            let mut rng = rng_for(c.seed);
            let mut zs = [State::white(0.0, 0.0); 3];
            let mut acc = [[0.0f64; 2]; 3];
            let mut pending = [0.0f64; 3];
            let burn = steps_fine / 10;
            for k in 1..=steps_fine {
                let dw: f64 = StandardNormal.sample(&mut rng);
                let dw = dw * h.sqrt();
                for (j, mult) in [4usize, 2, 1].iter().enumerate() {
                    pending[j] += dw;
                    if k % mult == 0 {
                        let dt = h * *mult as f64;
                        step_in_place(&spec, &mut zs[j], dt, 1.0, pending[j]);
                        pending[j] = 0.0;
                        if k > burn {
                            acc[j][0] += zs[j].y().powi(2) * dt;
                            acc[j][1] += zs[j].x().powi(2) * dt;
                        }
                    }
                }
            }
            let span = (steps_fine - burn) as f64 * h;
            Ok(acc
                .iter()
                .map(|a| (a[0] / span - ey2).abs() + (a[1] / span - ex2).abs())
                .collect::<Vec<_>>())
        })
        .unwrap()
        .iter()
        .fold(vec![0.0; 3], |mut s, e| {
            for (a, b) in s.iter_mut().zip(e) {
                *a += b / 16.0;
            }
            s
        });
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    }

    #[test]
    fn ergodic_averages_stable() {
        let spec = quad(ModelKind::Friction, 20);
        let cfg = SimConfig::new(1e-2, 400.0, 31, State::white(0.0, 0.0));
        let full = ensemble_mean(&spec, &cfg, 24, |tr| time_average(tr, |z| z.x() * z.x(), 0.0)).unwrap();
        let half = ensemble_mean(&spec, &cfg, 24, |tr| time_average(tr, |z| z.x() * z.x(), 200.0)).unwrap();
        let se = (full.stderr.powi(2) + half.stderr.powi(2)).sqrt();
        assert!((full.estimate - half.estimate).abs() < 3.0 * se, "{full:?} {half:?}");
    }

    #[test]
    fn variance_curve_of_constant_is_zero() {
        let spec = ModelSpec::friction_1d(10).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 2, State::white(0.0, 0.0));
        let v = variance_curve(&spec, &cfg, 50, &[0.5, 1.0], |_| 1.0).unwrap();
        assert!(v.iter().all(|s| s.estimate.abs() < 1e-20));
        let v = variance_curve(&spec, &cfg, 400, &[0.5, 1.0], |z| z.y()).unwrap();
        assert!(v[1].estimate > v[0].estimate);
    }
}
