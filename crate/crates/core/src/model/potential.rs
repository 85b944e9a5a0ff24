use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared constants of the potential assumptions:
/// `|U'(x) - U'(y)| <= kappa |x - y|`, `U(x) >= lambda1 x^2 - beta1`,
/// `x U'(x) >= lambda2 U(x) - beta2`, `U >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialConstants {
    pub kappa: f64,
    pub lambda1: f64,
    pub beta1: f64,
    pub lambda2: f64,
    pub beta2: f64,
}

impl PotentialConstants {
    /// `lambda3 = lambda1 lambda2 / (1 + lambda1)`.
    pub fn lambda3(&self) -> f64 {
        self.lambda1 * self.lambda2 / (1.0 + self.lambda1)
    }

    /// `beta3 = beta2 + lambda2 beta1 / (1 + lambda1)`.
    pub fn beta3(&self) -> f64 {
        self.beta2 + self.lambda2 * self.beta1 / (1.0 + self.lambda1)
    }
}

/// A confining potential given as a pair of closures `(U, U')` plus the
/// constants it is claimed to satisfy.
#[derive(Clone)]
pub struct Potential {
    name: String,
    value: ScalarFn,
    derivative: ScalarFn,
    pub constants: PotentialConstants,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("constants", &self.constants)
            .finish()
    }
}

impl Potential {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        constants: PotentialConstants,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            constants,
        }
    }

    /// `U = 0`. It satisfies no coercivity bound (`lambda1 = 0`), so drift
    /// certification rejects it.
    pub fn zero() -> Self {
        Self::new(
            "zero",
            |_| 0.0,
            |_| 0.0,
            PotentialConstants {
                kappa: 0.0,
                lambda1: 0.0,
                beta1: 0.0,
                lambda2: 0.0,
                beta2: 0.0,
            },
        )
    }

    /// `U(x) = k x^2 / 2`.
    pub fn quadratic(k: f64) -> Self {
        Self::new(
            format!("quadratic(k={k})"),
            move |x| 0.5 * k * x * x,
            move |x| k * x,
            PotentialConstants {
                kappa: k,
                lambda1: 0.5 * k,
                beta1: 0.0,
                lambda2: 2.0,
                beta2: 0.0,
            },
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    /// Checks the declared constants at every grid point (and every pair for
    /// the Lipschitz bound).
    pub fn validate(&self, grid: &[f64]) -> PotentialReport {
        let c = self.constants;
        let tol = 1e-12;
        let mut report = PotentialReport::default();
        for &x in grid {
            let u = self.value(x);
            let du = self.derivative(x);
            if u < -tol {
                report.violations.push((x, Assumption::NonNegative));
            }
            if u < c.lambda1 * x * x - c.beta1 - tol * (1.0 + u.abs()) {
                report.violations.push((x, Assumption::Coercive));
            }
            if x * du < c.lambda2 * u - c.beta2 - tol * (1.0 + u.abs()) {
                report.violations.push((x, Assumption::RadialGrowth));
            }
            if x * du < c.lambda3() * (u + x * x) - c.beta3() - tol * (1.0 + u.abs() + x * x) {
                report.violations.push((x, Assumption::Combined));
            }
        }
        for (i, &a) in grid.iter().enumerate() {
            for &b in &grid[i + 1..] {
                let lhs = (self.derivative(a) - self.derivative(b)).abs();
                if lhs > c.kappa * (a - b).abs() * (1.0 + 1e-12) + tol {
                    report.violations.push((a, Assumption::Lipschitz));
                    break;
                }
            }
        }
        report
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    Lipschitz,
    Coercive,
    RadialGrowth,
    NonNegative,
    Combined,
}

#[derive(Clone, Debug, Default)]
pub struct PotentialReport {
    pub violations: Vec<(f64, Assumption)>,
}

impl PotentialReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..201).map(|i| -10.0 + 0.1 * i as f64).collect()
    }

    #[test]
    fn quadratic_satisfies_declared_constants() {
        for k in [0.5, 1.0, 3.0] {
            let p = Potential::quadratic(k);
            assert!(p.validate(&grid()).passed(), "k = {k}");
        }
    }

    #[test]
    fn derived_constants() {
        let c = Potential::quadratic(1.0).constants;
        assert!((c.lambda3() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.beta3(), 0.0);
        let c = PotentialConstants {
            kappa: 1.0,
            lambda1: 1.0,
            beta1: 2.0,
            lambda2: 3.0,
            beta2: 0.5,
        };
        assert!((c.lambda3() - 1.5).abs() < 1e-15);
        assert!((c.beta3() - 3.5).abs() < 1e-15);
    }

    #[test]
    fn overclaimed_constants_are_reported() {
        let mut p = Potential::quadratic(1.0);
        p.constants.lambda1 = 0.8;
        let r = p.validate(&grid());
        assert!(r.violations.iter().any(|v| v.1 == Assumption::Coercive));

        let mut p = Potential::quadratic(1.0);
        p.constants.kappa = 0.5;
        let r = p.validate(&grid());
        assert!(r.violations.iter().any(|v| v.1 == Assumption::Lipschitz));
    }

    #[test]
    fn zero_potential_has_degenerate_lambda3() {
        assert_eq!(Potential::zero().constants.lambda3(), 0.0);
    }
}
