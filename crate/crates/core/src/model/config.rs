//! Flat `key=value` model configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Defaults:
//! `model=fp n=100 cb=1 potential=quadratic k=1 noise=white theta_v=1 beta=2
//! kt_k=1 kt_gamma0=1`.

use std::fmt::Write as _;
use std::path::Path;

use super::{HamiltonianNoise, ModelKind, ModelSpec, NoiseSpec, OuNoise, Potential};
use crate::error::{invalid, Error, Result};

pub const KEYS: [&str; 10] = [
    "model",
    "n",
    "cb",
    "potential",
    "k",
    "noise",
    "theta_v",
    "beta",
    "kt_k",
    "kt_gamma0",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialChoice {
    Zero,
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseChoice {
    White,
    Ou,
    Kt,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub n: u32,
    pub cb: f64,
    pub potential: PotentialChoice,
    pub k: f64,
    pub noise: NoiseChoice,
    pub theta_v: f64,
    pub beta: f64,
    pub kt_k: f64,
    pub kt_gamma0: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Friction,
            n: 100,
            cb: 1.0,
            potential: PotentialChoice::Quadratic,
            k: 1.0,
            noise: NoiseChoice::White,
            theta_v: 1.0,
            beta: 2.0,
            kt_k: 1.0,
            kt_gamma0: 1.0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| invalid(format!("cannot parse {key}='{v}'")))
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Config {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Overrides a single key; used for both file lines and CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = ModelKind::parse(value)?,
            "n" => self.n = num(key, value)?,
            "cb" => self.cb = num(key, value)?,
            "potential" => {
                self.potential = match value {
                    "zero" => PotentialChoice::Zero,
                    "quadratic" => PotentialChoice::Quadratic,
                    _ => return Err(invalid(format!("unknown potential '{value}'"))),
                }
            }
            "k" => self.k = num(key, value)?,
            "noise" => {
                self.noise = match value {
                    "white" => NoiseChoice::White,
                    "ou" => NoiseChoice::Ou,
                    "kt" => NoiseChoice::Kt,
                    _ => return Err(invalid(format!("unknown noise '{value}'"))),
                }
            }
            "theta_v" => self.theta_v = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "kt_k" => self.kt_k = num(key, value)?,
            "kt_gamma0" => self.kt_gamma0 = num(key, value)?,
            _ => return Err(invalid(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let potential = match self.potential {
            PotentialChoice::Zero => Potential::zero(),
            PotentialChoice::Quadratic => {
                if !(self.k > 0.0) {
                    return Err(invalid("quadratic potential needs k > 0"));
                }
                Potential::quadratic(self.k)
            }
        };
        let noise = match self.noise {
            NoiseChoice::White => NoiseSpec::White,
            NoiseChoice::Ou => NoiseSpec::Colored1(OuNoise::ornstein_uhlenbeck(self.theta_v, self.beta)?),
            NoiseChoice::Kt => NoiseSpec::Colored2(HamiltonianNoise::kanai_tajimi(self.kt_k, self.kt_gamma0)?),
        };
        ModelSpec::new(self.model, self.n, self.cb, potential, noise)
    }

    /// Every key with its resolved value, in `KEYS` order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pot = match self.potential {
            PotentialChoice::Zero => "zero",
            PotentialChoice::Quadratic => "quadratic",
        };
        let noise = match self.noise {
            NoiseChoice::White => "white",
            NoiseChoice::Ou => "ou",
            NoiseChoice::Kt => "kt",
        };
        let _ = writeln!(s, "model={}", self.model.code());
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "cb={}", self.cb);
        let _ = writeln!(s, "potential={pot}");
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "noise={noise}");
        let _ = writeln!(s, "theta_v={}", self.theta_v);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "kt_k={}", self.kt_k);
        let _ = writeln!(s, "kt_gamma0={}", self.kt_gamma0);
        s
    }
}
