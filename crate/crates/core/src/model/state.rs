use crate::error::{Error, Result};

/// Ordered state `(zeta, eta, y, x)` truncated to its last `dim` entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    dim: usize,
    comps: [f64; 4],
}

impl State {
    pub fn white(y: f64, x: f64) -> Self {
        Self {
            dim: 2,
            comps: [y, x, 0.0, 0.0],
        }
    }

    pub fn colored1(eta: f64, y: f64, x: f64) -> Self {
        Self {
            dim: 3,
            comps: [eta, y, x, 0.0],
        }
    }

    pub fn colored2(zeta: f64, eta: f64, y: f64, x: f64) -> Self {
        Self {
            dim: 4,
            comps: [zeta, eta, y, x],
        }
    }

    pub fn origin(dim: usize) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: dim,
            });
        }
        Ok(Self { dim, comps: [0.0; 4] })
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if !(2..=4).contains(&v.len()) {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: v.len(),
            });
        }
        let mut comps = [0.0; 4];
        comps[..v.len()].copy_from_slice(v);
        Ok(Self { dim: v.len(), comps })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.comps[..self.dim]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.comps[..self.dim]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.comps[self.dim - 2]
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.comps[self.dim - 1]
    }

    /// `eta`, or 0 for white noise.
    #[inline]
    pub fn eta(&self) -> f64 {
        if self.dim >= 3 {
            self.comps[self.dim - 3]
        } else {
            0.0
        }
    }

    /// `zeta`, or 0 below dimension 4.
    #[inline]
    pub fn zeta(&self) -> f64 {
        if self.dim == 4 {
            self.comps[0]
        } else {
            0.0
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Column names matching [`State::as_slice`], e.g. `["eta", "y", "x"]`.
    pub fn column_names(dim: usize) -> &'static [&'static str] {
        const ALL: [&str; 4] = ["zeta", "eta", "y", "x"];
        &ALL[4 - dim.clamp(2, 4)..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accessors_follow_ordering() {
        let s = State::colored2(1.0, 2.0, 3.0, 4.0);
        assert_eq!((s.zeta(), s.eta(), s.y(), s.x()), (1.0, 2.0, 3.0, 4.0));
        let s = State::colored1(2.0, 3.0, 4.0);
        assert_eq!((s.zeta(), s.eta(), s.y(), s.x()), (0.0, 2.0, 3.0, 4.0));
        let s = State::white(3.0, 4.0);
        assert_eq!(s.as_slice(), &[3.0, 4.0]);
        assert_eq!(State::column_names(3), &["eta", "y", "x"]);
    }

    #[test]
    fn bad_dimensions() {
        assert!(State::from_slice(&[1.0]).is_err());
        assert!(State::origin(5).is_err());
        assert_eq!(State::origin(3).unwrap().dim(), 3);
    }
}
