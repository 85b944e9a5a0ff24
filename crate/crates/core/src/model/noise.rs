//! Noise classes driving the oscillators: white noise, overdamped Langevin
//! colored noise (state `eta`) and stochastic Hamiltonian colored noise
//! (state `(zeta, eta)`).

use std::fmt;
use std::sync::Arc;

use super::potential::ScalarFn;
use crate::error::{invalid, Result};

/// A function of `(eta, zeta)`.
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Debug)]
pub enum NoiseSpec {
    White,
    Colored1(OuNoise),
    Colored2(HamiltonianNoise),
}

impl NoiseSpec {
    /// State dimension of the full Markov system driven by this noise.
    pub fn dimension(&self) -> usize {
        match self {
            NoiseSpec::White => 2,
            NoiseSpec::Colored1(_) => 3,
            NoiseSpec::Colored2(_) => 4,
        }
    }

    /// Diffusion intensity on the first state coordinate.
    pub fn sigma(&self) -> f64 {
        match self {
            NoiseSpec::Colored1(ou) => ou.sigma(),
            _ => 1.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            NoiseSpec::White => "white".to_string(),
            NoiseSpec::Colored1(ou) => ou.name.clone(),
            NoiseSpec::Colored2(h) => h.name.clone(),
        }
    }
}

/// `d eta = -v'(eta) dt + sigma dW` with `sigma = sqrt(2 / beta)` and
/// `v'(eta) eta >= r eta^2`.
#[derive(Clone)]
pub struct OuNoise {
    pub name: String,
    v_prime: ScalarFn,
    pub r: f64,
    pub beta: f64,
}

impl fmt::Debug for OuNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OuNoise")
            .field("name", &self.name)
            .field("r", &self.r)
            .field("beta", &self.beta)
            .finish()
    }
}

impl OuNoise {
    pub fn new(
        name: impl Into<String>,
        v_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        r: f64,
        beta: f64,
    ) -> Result<Self> {
        if !(r > 0.0) || !(beta > 0.0) {
            return Err(invalid("colored noise needs r > 0 and beta > 0"));
        }
        Ok(Self {
            name: name.into(),
            v_prime: Arc::new(v_prime),
            r,
            beta,
        })
    }

    /// Ornstein–Uhlenbeck noise, `v(eta) = theta eta^2 / 2`.
    pub fn ornstein_uhlenbeck(theta: f64, beta: f64) -> Result<Self> {
        Self::new(
            format!("ou(theta={theta},beta={beta})"),
            move |e| theta * e,
            theta,
            beta,
        )
    }

    #[inline]
    pub fn v_prime(&self, eta: f64) -> f64 {
        (self.v_prime)(eta)
    }

    pub fn sigma(&self) -> f64 {
        (2.0 / self.beta).sqrt()
    }

    /// Sampled check of `v'(eta) eta >= r eta^2`; returns the failing points.
    pub fn validate(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter()
            .copied()
            .filter(|&e| self.v_prime(e) * e < self.r * e * e - 1e-12 * (1.0 + e * e))
            .collect()
    }
}

/// Optional correction `R(eta, zeta)` together with the partial derivatives
/// the generator needs.
#[derive(Clone)]
pub struct Correction {
    pub value: FieldFn,
    pub d_eta: FieldFn,
    pub d_zeta: FieldFn,
    pub d_zeta_zeta: FieldFn,
}

/// `d zeta = B1 dt + dW`, `d eta = B2 dt` with
/// `B1 = -dH/deta - F dH/dzeta`, `B2 = dH/dzeta`.
#[derive(Clone)]
pub struct HamiltonianNoise {
    pub name: String,
    pub h: FieldFn,
    pub h_eta: FieldFn,
    pub h_zeta: FieldFn,
    /// Needed by the generator; `None` makes drift evaluation impossible.
    pub h_zeta_zeta: Option<FieldFn>,
    pub dissipation: FieldFn,
    /// `None` means `R = 0`.
    pub correction: Option<Correction>,
    pub delta_tilde: f64,
    pub m: f64,
    pub holder_alpha: f64,
    pub holder_const: f64,
    pub ell: f64,
}

impl fmt::Debug for HamiltonianNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianNoise")
            .field("name", &self.name)
            .field("delta_tilde", &self.delta_tilde)
            .field("m", &self.m)
            .field("ell", &self.ell)
            .finish()
    }
}

/// Partial derivatives of `G = H + R` at one point.
#[derive(Clone, Copy, Debug)]
pub struct LyapunovPartials {
    pub g: f64,
    pub g_eta: f64,
    pub g_zeta: f64,
    pub g_zeta_zeta: f64,
}

impl HamiltonianNoise {
    /// Kanai–Tajimi ground filter: `H = (k/2) eta^2 + zeta^2 / 2`, `F = gamma0`.
    ///
    /// `R = c eta zeta` with `c = min(gamma0/2, sqrt(k)/2, k/gamma0)`; with
    /// `R = 0` the dissipation inequality fails along `zeta = 0`. The constants
    /// `delta_tilde` and `M` are derived from the two quadratic forms
    /// `H + R` and `-L(H + R) + 1/2`.
    pub fn kanai_tajimi(k: f64, gamma0: f64) -> Result<Self> {
        if !(k > 0.0) || !(gamma0 > 0.0) {
            return Err(invalid("Kanai-Tajimi needs k > 0 and gamma0 > 0"));
        }
        let c = (0.5 * gamma0).min(0.5 * k.sqrt()).min(k / gamma0);
        // H + R = q_Q, with Q = [[k/2, c/2], [c/2, 1/2]]
        let q = [0.5 * k, 0.5 * c, 0.5];
        // -(L(H + R) - 1/2) = q_P, with P = [[c k, c gamma0/2], [c gamma0/2, gamma0 - c]]
        let p = [c * k, 0.5 * c * gamma0, gamma0 - c];
        let lam_q = min_eig_sym2(q);
        let mu = min_generalized_eig_sym2(p, q);
        if !(lam_q > 0.0) || !(mu > 0.0) {
            return Err(invalid("Kanai-Tajimi quadratic forms are not positive definite"));
        }
        let delta_tilde = (0.5 * lam_q.min(mu)).min(2.0);
        let m = 1.0 / delta_tilde;
        let correction = Correction {
            value: Arc::new(move |e, z| c * e * z),
            d_eta: Arc::new(move |_, z| c * z),
            d_zeta: Arc::new(move |e, _| c * e),
            d_zeta_zeta: Arc::new(|_, _| 0.0),
        };
        Ok(Self {
            name: format!("kt(k={k},gamma0={gamma0})"),
            h: Arc::new(move |e, z| 0.5 * k * e * e + 0.5 * z * z),
            h_eta: Arc::new(move |e, _| k * e),
            h_zeta: Arc::new(|_, z| z),
            h_zeta_zeta: Some(Arc::new(|_, _| 1.0)),
            dissipation: Arc::new(move |_, _| gamma0),
            correction: Some(correction),
            delta_tilde,
            m,
            holder_alpha: 1.0,
            holder_const: 0.0,
            ell: 1.0,
        })
    }

    #[inline]
    pub fn b1(&self, eta: f64, zeta: f64) -> f64 {
        -(self.h_eta)(eta, zeta) - (self.dissipation)(eta, zeta) * (self.h_zeta)(eta, zeta)
    }

    #[inline]
    pub fn b2(&self, eta: f64, zeta: f64) -> f64 {
        (self.h_zeta)(eta, zeta)
    }

    /// Value and partials of `H + R`.
    pub fn partials(&self, eta: f64, zeta: f64) -> Result<LyapunovPartials> {
        let h_zz = self
            .h_zeta_zeta
            .as_ref()
            .ok_or(crate::error::Error::MissingDerivatives("d^2 H / d zeta^2"))?;
        let mut out = LyapunovPartials {
            g: (self.h)(eta, zeta),
            g_eta: (self.h_eta)(eta, zeta),
            g_zeta: (self.h_zeta)(eta, zeta),
            g_zeta_zeta: h_zz(eta, zeta),
        };
        if let Some(r) = &self.correction {
            out.g += (r.value)(eta, zeta);
            out.g_eta += (r.d_eta)(eta, zeta);
            out.g_zeta += (r.d_zeta)(eta, zeta);
            out.g_zeta_zeta += (r.d_zeta_zeta)(eta, zeta);
        }
        Ok(out)
    }

    /// `(1/2) d_zz + B1 d_z + B2 d_eta` applied to `H + R`.
    pub fn generator_of_g(&self, eta: f64, zeta: f64) -> Result<f64> {
        let p = self.partials(eta, zeta)?;
        Ok(0.5 * p.g_zeta_zeta + self.b1(eta, zeta) * p.g_zeta + self.b2(eta, zeta) * p.g_eta)
    }

    /// Sampled check of the coercivity and dissipation inequalities and of the
    /// sign condition `d B2 / d zeta >= ell > 0`.
    pub fn validate(&self, grid: &[f64]) -> Result<Vec<(f64, f64, &'static str)>> {
        let mut bad = Vec::new();
        let dt = self.delta_tilde;
        for &e in grid {
            for &z in grid {
                let p = self.partials(e, z)?;
                let scale = 1.0 + p.g.abs() + e * e + z * z;
                if p.g + self.m < dt * (e * e + z * z) - 1e-12 * scale {
                    bad.push((e, z, "coercivity"));
                }
                let lg = self.generator_of_g(e, z)?;
                if lg > -dt * p.g + self.m + 1e-12 * scale {
                    bad.push((e, z, "dissipation"));
                }
                let db2 = self.h_zeta_zeta.as_ref().map_or(f64::NAN, |f| f(e, z));
                if !(db2 >= self.ell) {
                    bad.push((e, z, "sign"));
                }
            }
        }
        Ok(bad)
    }
}

fn min_eig_sym2(a: [f64; 3]) -> f64 {
    let tr = a[0] + a[2];
    let det = a[0] * a[2] - a[1] * a[1];
    0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt()
}

/// Smallest root of `det(P - mu Q) = 0` for symmetric 2x2 `P`, `Q` with `Q > 0`.
fn min_generalized_eig_sym2(p: [f64; 3], q: [f64; 3]) -> f64 {
    let a = q[0] * q[2] - q[1] * q[1];
    let b = -(p[0] * q[2] + p[2] * q[0] - 2.0 * p[1] * q[1]);
    let c = p[0] * p[2] - p[1] * p[1];
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    (-b - disc) / (2.0 * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..81).map(|i| -10.0 + 0.25 * i as f64).collect()
    }

    #[test]
    fn ou_condition_holds() {
        let ou = OuNoise::ornstein_uhlenbeck(1.5, 2.0).unwrap();
        assert!(ou.validate(&grid()).is_empty());
        assert!((ou.sigma() - 1.0).abs() < 1e-15);
        let over = OuNoise::new("bad", |e| e, 2.0, 2.0).unwrap();
        assert!(!over.validate(&grid()).is_empty());
    }

    #[test]
    fn kanai_tajimi_defaults_satisfy_assumptions() {
        for (k, g) in [(1.0, 1.0), (4.0, 0.5), (0.5, 3.0), (10.0, 10.0)] {
            let kt = HamiltonianNoise::kanai_tajimi(k, g).unwrap();
            let bad = kt.validate(&grid()).unwrap();
            assert!(bad.is_empty(), "k={k} gamma0={g}: {:?}", &bad[..bad.len().min(5)]);
        }
    }

    #[test]
    fn kanai_tajimi_unit_constants() {
        let kt = HamiltonianNoise::kanai_tajimi(1.0, 1.0).unwrap();
        assert!((kt.delta_tilde - 0.125).abs() < 1e-12);
        assert!((kt.m - 8.0).abs() < 1e-9);
        assert_eq!(kt.b1(1.0, 2.0), -1.0 - 2.0);
        assert_eq!(kt.b2(1.0, 2.0), 2.0);
    }

    #[test]
    fn zero_correction_violates_dissipation() {
        let mut kt = HamiltonianNoise::kanai_tajimi(1.0, 1.0).unwrap();
        kt.correction = None;
        // with zeta = 0 the energy does not decay, so the failure shows up for large eta
        let wide: Vec<f64> = (0..81).map(|i| -40.0 + i as f64).collect();
        let bad = kt.validate(&wide).unwrap();
        assert!(bad.iter().any(|b| b.2 == "dissipation"));
    }

    #[test]
    fn missing_second_derivative_is_an_error() {
        let mut kt = HamiltonianNoise::kanai_tajimi(1.0, 1.0).unwrap();
        kt.h_zeta_zeta = None;
        assert!(kt.partials(0.0, 0.0).is_err());
    }

    #[test]
    fn generalized_eigenvalue() {
        // P = 2 Q
        let q = [1.0, 0.2, 0.5];
        let p = [2.0, 0.4, 1.0];
        assert!((min_generalized_eig_sym2(p, q) - 2.0).abs() < 1e-6);
        assert!((min_eig_sym2([2.0, 0.0, 3.0]) - 2.0).abs() < 1e-15);
    }
}
