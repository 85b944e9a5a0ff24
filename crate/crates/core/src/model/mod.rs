//! Penalized oscillator models: penalties, potentials, noise classes and the
//! drift `F_n` of `dZ = F_n(Z) dt + sigma dW`.

pub mod config;
pub mod density;
pub mod noise;
pub mod penalty;
pub mod potential;
pub mod state;

pub use noise::{HamiltonianNoise, NoiseSpec, OuNoise};
pub use penalty::{a_n, a_n_prime, chi_n, chi_n_prime, proj_k, PenalizationLevel};
pub use potential::{Potential, PotentialConstants};
pub use state::State;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Penalty acts on `x` through `f_{n,x} = chi_n'`.
    ElastoPlastic,
    /// Penalty acts on `y` through `f_{n,y} = a_n'`.
    Friction,
    /// Penalty folded into the potential, `U_n = U + chi_n`.
    Obstacle,
}

impl ModelKind {
    pub fn code(self) -> &'static str {
        match self {
            ModelKind::ElastoPlastic => "epp",
            ModelKind::Friction => "fp",
            ModelKind::Obstacle => "op",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "epp" => Ok(ModelKind::ElastoPlastic),
            "fp" => Ok(ModelKind::Friction),
            "op" => Ok(ModelKind::Obstacle),
            other => Err(invalid(format!("unknown model '{other}' (expected epp|fp|op)"))),
        }
    }

    pub const ALL: [ModelKind; 3] = [ModelKind::ElastoPlastic, ModelKind::Friction, ModelKind::Obstacle];
}

/// Everything needed to write down the penalized SDE.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: PenalizationLevel,
    pub damping: f64,
    pub potential: Potential,
    pub noise: NoiseSpec,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, n: u32, damping: f64, potential: Potential, noise: NoiseSpec) -> Result<Self> {
        if !(damping >= 0.0) || !damping.is_finite() {
            return Err(invalid("damping C_b must be finite and >= 0"));
        }
        Ok(Self {
            kind,
            n: PenalizationLevel::new(n)?,
            damping,
            potential,
            noise,
        })
    }

    /// Friction model with `U = 0`, `C_b = 1` and white noise: the velocity
    /// equation decouples into a scalar SDE.
    pub fn friction_1d(n: u32) -> Result<Self> {
        Self::new(ModelKind::Friction, n, 1.0, Potential::zero(), NoiseSpec::White)
    }

    pub fn dimension(&self) -> usize {
        self.noise.dimension()
    }

    #[inline]
    fn nf(&self) -> f64 {
        self.n.as_f64()
    }

    /// Potential seen by the velocity equation (`U + chi_n` for the obstacle).
    #[inline]
    pub fn effective_potential(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::Obstacle => self.potential.value(x) + chi_n(x, self.nf()),
            _ => self.potential.value(x),
        }
    }

    #[inline]
    pub fn effective_potential_prime(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::Obstacle => self.potential.derivative(x) + chi_n_prime(x, self.nf()),
            _ => self.potential.derivative(x),
        }
    }

    /// `f_{n,y}`.
    #[inline]
    pub fn f_y(&self, y: f64) -> f64 {
        match self.kind {
            ModelKind::Friction => a_n_prime(y, self.nf()),
            _ => 0.0,
        }
    }

    /// `f_{n,x}`.
    #[inline]
    pub fn f_x(&self, x: f64) -> f64 {
        match self.kind {
            ModelKind::ElastoPlastic => chi_n_prime(x, self.nf()),
            _ => 0.0,
        }
    }

    /// Diffusion intensity on the first coordinate.
    pub fn sigma(&self) -> f64 {
        self.noise.sigma()
    }

    /// Drift `F_n(z)`.
    pub fn drift(&self, z: &State) -> Result<State> {
        if z.dim() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: z.dim(),
            });
        }
        Ok(self.drift_unchecked(z))
    }

    /// Drift without the dimension check, for inner loops.
    #[inline]
    pub fn drift_unchecked(&self, z: &State) -> State {
        let (y, x) = (z.y(), z.x());
        let mech_y = -self.effective_potential_prime(x) - self.damping * y - self.f_y(y);
        let mech_x = y - self.f_x(x);
        match &self.noise {
            NoiseSpec::White => State::white(mech_y, mech_x),
            NoiseSpec::Colored1(ou) => {
                let eta = z.eta();
                State::colored1(-ou.v_prime(eta), eta + mech_y, mech_x)
            }
            NoiseSpec::Colored2(h) => {
                let (eta, zeta) = (z.eta(), z.zeta());
                State::colored2(h.b1(eta, zeta), h.b2(eta, zeta), eta + mech_y, mech_x)
            }
        }
    }

    /// Stable textual description, used for provenance digests.
    pub fn describe(&self) -> String {
        format!(
            "model={} n={} cb={} potential={} noise={}",
            self.kind.code(),
            self.n.get(),
            self.damping,
            self.potential.name(),
            self.noise.label()
        )
    }

    /// SHA-256 of [`ModelSpec::describe`], hex encoded.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let hash = Sha256::digest(self.describe().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn penalty_check(&self, grid: &[f64]) -> PenaltyReport {
        let n = self.nf();
        check_penalty_properties(|y| self.f_y(y), |x| self.f_x(x), n, grid)
    }
}

/// Outcome of checking `|f_{n,y}| <= 1` and `0 <= sign(x) f_{n,x}(x) <= n|x|`.
#[derive(Clone, Debug, Default)]
pub struct PenaltyReport {
    pub max_abs_f_y: f64,
    /// Smallest of `1 - |f_y|`, `sign(x) f_x`, `n|x| - sign(x) f_x` over the grid.
    pub min_slack: f64,
    pub violations: Vec<PenaltyViolation>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PenaltyViolation {
    VelocityBound { y: f64, value: f64 },
    DisplacementBound { x: f64, value: f64 },
}

impl PenaltyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_penalty_properties(
    f_y: impl Fn(f64) -> f64,
    f_x: impl Fn(f64) -> f64,
    n: f64,
    grid: &[f64],
) -> PenaltyReport {
    let mut report = PenaltyReport {
        max_abs_f_y: 0.0,
        min_slack: f64::INFINITY,
        violations: vec![],
    };
    let tol = 1e-12;
    for &v in grid {
        let fy = f_y(v);
        report.max_abs_f_y = report.max_abs_f_y.max(fy.abs());
        report.min_slack = report.min_slack.min(1.0 - fy.abs());
        if fy.abs() > 1.0 + tol {
            report
                .violations
                .push(PenaltyViolation::VelocityBound { y: v, value: fy });
        }
        let sx = if v > 0.0 {
            f_x(v)
        } else if v < 0.0 {
            -f_x(v)
        } else {
            f_x(v).abs()
        };
        let cap = n * v.abs();
        report.min_slack = report.min_slack.min(sx).min(cap - sx);
        if sx < -tol || sx > cap * (1.0 + tol) + tol {
            report
                .violations
                .push(PenaltyViolation::DisplacementBound { x: v, value: f_x(v) });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> Potential {
        Potential::quadratic(1.0)
    }

    #[test]
    fn friction_drift_example() {
        let spec = ModelSpec::friction_1d(100).unwrap();
        let f = spec.drift(&State::white(2.0, 0.0)).unwrap();
        assert_eq!(f.as_slice(), &[-3.0, 2.0]);
    }

    #[test]
    fn obstacle_drift_example() {
        let spec = ModelSpec::new(ModelKind::Obstacle, 2, 1.0, Potential::zero(), NoiseSpec::White).unwrap();
        let f = spec.drift(&State::white(0.0, 2.0)).unwrap();
        assert_eq!(f.as_slice(), &[-2.0, 0.0]);
    }

    #[test]
    fn elasto_plastic_drift_example() {
        let spec = ModelSpec::new(ModelKind::ElastoPlastic, 2, 1.0, quad(), NoiseSpec::White).unwrap();
        let f = spec.drift(&State::white(1.0, 2.0)).unwrap();
        assert_eq!(f.as_slice(), &[-3.0, -1.0]);
    }

    #[test]
    fn drift_rejects_wrong_dimension() {
        let spec = ModelSpec::friction_1d(10).unwrap();
        let err = spec.drift(&State::colored1(0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 3 }));
    }

    #[test]
    fn obstacle_is_gradient_of_penalized_potential() {
        let spec = ModelSpec::new(ModelKind::Obstacle, 7, 0.5, quad(), NoiseSpec::White).unwrap();
        for &(y, x) in &[(0.3, 1.7), (-1.0, -2.5), (2.0, 0.2)] {
            let f = spec.drift(&State::white(y, x)).unwrap();
            let un_prime = x + chi_n_prime(x, 7.0);
            assert_eq!(f.y(), -(un_prime + 0.5 * y));
            assert_eq!(f.x(), y);
        }
    }

    #[test]
    fn colored_drifts_extend_white_rows() {
        let ou = OuNoise::ornstein_uhlenbeck(2.0, 2.0).unwrap();
        let spec = ModelSpec::new(ModelKind::Friction, 5, 1.0, quad(), NoiseSpec::Colored1(ou)).unwrap();
        let f = spec.drift(&State::colored1(0.5, 1.0, -1.0)).unwrap();
        assert_eq!(f.as_slice(), &[-1.0, 0.5 + 1.0 - 1.0 - 1.0, 1.0]);

        let kt = HamiltonianNoise::kanai_tajimi(1.0, 1.0).unwrap();
        let spec = ModelSpec::new(ModelKind::ElastoPlastic, 5, 1.0, quad(), NoiseSpec::Colored2(kt)).unwrap();
        let f = spec.drift(&State::colored2(1.0, 2.0, 0.0, 0.0)).unwrap();
        assert_eq!(f.as_slice(), &[-2.0 - 1.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn penalty_properties_examples() {
        let fric = ModelSpec::new(ModelKind::Friction, 10, 1.0, quad(), NoiseSpec::White).unwrap();
        assert!(fric.penalty_check(&[-2.0, 0.0, 2.0]).passed());
        let epp = ModelSpec::new(ModelKind::ElastoPlastic, 10, 1.0, quad(), NoiseSpec::White).unwrap();
        assert!(epp.penalty_check(&[1.5]).passed());
        let n = 10.0;
        let bad = check_penalty_properties(|_| 0.0, |x| 2.0 * n * x, n, &[1.0]);
        assert_eq!(bad.violations.len(), 1);
    }

    #[test]
    fn penalty_properties_hold_for_all_models_and_levels() {
        let grid: Vec<f64> = (0..1000).map(|i| -10.0 + 20.0 * i as f64 / 999.0).collect();
        for kind in ModelKind::ALL {
            for n in 1..=1000 {
                let spec = ModelSpec::new(kind, n, 1.0, quad(), NoiseSpec::White).unwrap();
                let r = spec.penalty_check(&grid);
                assert!(r.passed(), "{kind:?} n={n}: {:?}", r.violations.first());
            }
        }
    }

    #[test]
    fn digest_is_stable() {
        let a = ModelSpec::friction_1d(100).unwrap();
        let b = ModelSpec::friction_1d(100).unwrap();
        let c = ModelSpec::friction_1d(10).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }
}
