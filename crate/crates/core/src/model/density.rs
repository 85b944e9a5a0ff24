//! Closed-form stationary densities used as oracles for the simulator.

use super::{ModelKind, ModelSpec, NoiseSpec};
use crate::error::{invalid, Error, Result};

/// Composite Simpson rule on `[a, b]` with `panels` (even) sub-intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels.max(2) + panels % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// `rho(eta) = exp(-beta v(eta)) / Z` where `v` is rebuilt from `v'` with
/// `v(0) = 0`.
pub struct StationaryDensity1D {
    nodes: Vec<f64>,
    v_nodes: Vec<f64>,
    v_prime: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    beta: f64,
    pub normalizer: f64,
    pub window: f64,
}

impl StationaryDensity1D {
    /// Potential `v(eta)`, exact up to Simpson error.
    pub fn potential(&self, eta: f64) -> f64 {
        let w = self.window;
        let e = eta.clamp(-w, w);
        let h = self.nodes[1] - self.nodes[0];
        let j = (((e + w) / h).floor() as usize).min(self.nodes.len() - 2);
        let a = self.nodes[j];
        let mid = 0.5 * (a + e);
        self.v_nodes[j] + (e - a) / 6.0 * ((self.v_prime)(a) + 4.0 * (self.v_prime)(mid) + (self.v_prime)(e))
    }

    pub fn pdf(&self, eta: f64) -> f64 {
        if eta.abs() > self.window {
            return 0.0;
        }
        (-self.beta * self.potential(eta)).exp() / self.normalizer
    }

    /// Probability of `[a, b]` (clipped to the window).
    pub fn probability(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(-self.window), b.min(self.window));
        if b <= a {
            return 0.0;
        }
        simpson(|e| self.pdf(e), a, b, 64)
    }
}

/// Invariant density of the overdamped Langevin noise with
/// `sigma = sqrt(2 / beta)`, truncated to `[-window, window]`.
pub fn ou_stationary_density(
    v_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    beta: f64,
    window: f64,
) -> Result<StationaryDensity1D> {
    if !(beta > 0.0) || !(window > 0.0) {
        return Err(invalid("density needs beta > 0 and window > 0"));
    }
    const CELLS: usize = 4000;
    let h = 2.0 * window / CELLS as f64;
    let nodes: Vec<f64> = (0..=CELLS).map(|i| -window + h * i as f64).collect();
    let cell_integral = |a: f64, b: f64| (b - a) / 6.0 * (v_prime(a) + 4.0 * v_prime(0.5 * (a + b)) + v_prime(b));
    // integrate outward from the centre node so that v(0) = 0
    let centre = CELLS / 2;
    let mut v_nodes = vec![0.0; CELLS + 1];
    for i in centre..CELLS {
        v_nodes[i + 1] = v_nodes[i] + cell_integral(nodes[i], nodes[i + 1]);
    }
    for i in (1..=centre).rev() {
        v_nodes[i - 1] = v_nodes[i] - cell_integral(nodes[i - 1], nodes[i]);
    }
    let weights: Vec<f64> = v_nodes.iter().map(|v| (-beta * v).exp()).collect();
    let peak = weights.iter().cloned().fold(0.0, f64::max);
    let edge = weights[0].max(weights[CELLS]);
    if !peak.is_finite() || !(peak > 0.0) || edge > 1e-10 * peak {
        return Err(Error::NonIntegrable(format!(
            "exp(-beta v) at the window edge is {edge:e} (peak {peak:e})"
        )));
    }
    let mut z = weights[0] + weights[CELLS];
    for (i, w) in weights.iter().enumerate().take(CELLS).skip(1) {
        z += if i % 2 == 1 { 4.0 * w } else { 2.0 * w };
    }
    z *= h / 3.0;
    Ok(StationaryDensity1D {
        nodes,
        v_nodes,
        v_prime: Box::new(v_prime),
        beta,
        normalizer: z,
        window,
    })
}

/// Gibbs density `exp(-beta (y^2/2 + U_n(x))) / Z` of the white-noise
/// obstacle oscillator. Stationarity of the Fokker–Planck equation with unit
/// noise forces `beta = 2 C_b / sigma^2`.
pub struct GibbsDensity {
    spec: ModelSpec,
    pub beta: f64,
    x_window: f64,
    x_normalizer: f64,
}

impl GibbsDensity {
    pub fn for_model(spec: &ModelSpec) -> Result<Self> {
        let beta = 2.0 * spec.damping / (spec.sigma() * spec.sigma());
        Self::with_inverse_temperature(spec, beta)
    }

    pub fn with_inverse_temperature(spec: &ModelSpec, beta: f64) -> Result<Self> {
        if spec.kind != ModelKind::Obstacle || !matches!(spec.noise, NoiseSpec::White) {
            return Err(invalid(
                "explicit Gibbs density exists for the white-noise obstacle model only",
            ));
        }
        if !(beta > 0.0) {
            return Err(invalid("inverse temperature must be positive"));
        }
        // the quadratic lower bound on U keeps the x-marginal inside a modest window
        let mut x_window = 4.0;
        while (-beta * spec.effective_potential(x_window)).exp() > 1e-18 && x_window < 1e4 {
            x_window *= 2.0;
        }
        let x_normalizer = simpson(
            |x| (-beta * spec.effective_potential(x)).exp(),
            -x_window,
            x_window,
            20_000,
        );
        if !x_normalizer.is_finite() || x_window >= 1e4 {
            return Err(Error::NonIntegrable("x-marginal of the Gibbs density".into()));
        }
        Ok(Self {
            spec: spec.clone(),
            beta,
            x_window,
            x_normalizer,
        })
    }

    pub fn pdf(&self, y: f64, x: f64) -> f64 {
        let gy = (self.beta / (2.0 * std::f64::consts::PI)).sqrt() * (-0.5 * self.beta * y * y).exp();
        gy * (-self.beta * self.spec.effective_potential(x)).exp() / self.x_normalizer
    }

    /// Probability of the rectangle `[y0, y1] x [x0, x1]`.
    pub fn rectangle_probability(&self, y0: f64, y1: f64, x0: f64, x1: f64) -> f64 {
        let s = (self.beta / 2.0).sqrt();
        let py = 0.5 * (libm::erf(s * y1) - libm::erf(s * y0));
        let (a, b) = (x0.max(-self.x_window), x1.min(self.x_window));
        let px = if b > a {
            {
                let panels = (((b - a) / 0.005).ceil() as usize).max(16);
                simpson(|x| (-self.beta * self.spec.effective_potential(x)).exp(), a, b, panels) / self.x_normalizer
            }
        } else {
            0.0
        };
        py * px
    }

    /// `E[y^2]` and `E[x^2]` under the density.
    pub fn second_moments(&self) -> (f64, f64) {
        let w = self.x_window;
        let ex2 = simpson(
            |x| x * x * (-self.beta * self.spec.effective_potential(x)).exp(),
            -w,
            w,
            20_000,
        ) / self.x_normalizer;
        (1.0 / self.beta, ex2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Potential, State};

    #[test]
    fn gaussian_case() {
        let d = ou_stationary_density(|e| e, 2.0, 10.0).unwrap();
        let z_exact = std::f64::consts::PI.sqrt();
        assert!((d.normalizer - z_exact).abs() < 1e-8);
        assert!((d.pdf(0.0) - 1.0 / z_exact).abs() < 1e-9);
        for e in [0.1, 0.7, 2.3] {
            assert!((d.pdf(e) - d.pdf(-e)).abs() < 1e-12);
            assert!((d.potential(e) - 0.5 * e * e).abs() < 1e-12);
        }
        assert!((d.probability(-10.0, 10.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_integrable_window_is_rejected() {
        assert!(ou_stationary_density(|e| -e, 2.0, 10.0).is_err());
        // too narrow a window for a flat potential
        assert!(ou_stationary_density(|e| 0.01 * e, 1.0, 5.0).is_err());
    }

    #[test]
    fn gibbs_normalized_and_stationary() {
        let spec = ModelSpec::new(ModelKind::Obstacle, 5, 1.0, Potential::quadratic(1.0), NoiseSpec::White).unwrap();
        let g = GibbsDensity::for_model(&spec).unwrap();
        assert_eq!(g.beta, 2.0);
        let total = g.rectangle_probability(-50.0, 50.0, -50.0, 50.0);
        assert!((total - 1.0).abs() < 1e-9, "{total}");

        // stationary Fokker-Planck residual: (1/2) m_yy - div(F m) at a few points
        let resid = |beta: f64, y: f64, x: f64| {
            let g = GibbsDensity::with_inverse_temperature(&spec, beta).unwrap();
            let h = 1e-3;
            let m = |y: f64, x: f64| g.pdf(y, x);
            let fm = |y: f64, x: f64, i: usize| {
                let f = spec.drift(&State::white(y, x)).unwrap();
                f.as_slice()[i] * m(y, x)
            };
            let m_yy = (m(y + h, x) - 2.0 * m(y, x) + m(y - h, x)) / (h * h);
            let div = (fm(y + h, x, 0) - fm(y - h, x, 0)) / (2.0 * h) + (fm(y, x + h, 1) - fm(y, x - h, 1)) / (2.0 * h);
            (0.5 * m_yy - div) / m(0.0, 0.0)
        };
        for &(y, x) in &[(0.3, 0.5), (-0.8, 1.2), (1.1, -1.4)] {
            assert!(resid(2.0, y, x).abs() < 1e-5, "beta=2 residual {}", resid(2.0, y, x));
            assert!(resid(1.0, y, x).abs() > 1e-2, "beta=1 should not be stationary");
        }
    }

    #[test]
    fn gibbs_requires_obstacle_white() {
        let spec = ModelSpec::friction_1d(10).unwrap();
        assert!(GibbsDensity::for_model(&spec).is_err());
    }
}
