use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How a dimension maps onto the unit interval the surrogate works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
    /// Integers `lo..=hi`, each owning an equal-width cell of `[0, 1]`.
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl Dim {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, scale: Scale) -> Result<Self> {
        let dim = Self {
            name: name.into(),
            lo,
            hi,
            scale,
        };
        dim.validate()?;
        Ok(dim)
    }

    fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::Spec(format!("dimension {}: {why}", self.name)));
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return bad("bounds must be finite with lo < hi");
        }
        match self.scale {
            Scale::Log if self.lo <= 0.0 => bad("log scale needs lo > 0"),
            Scale::Integer if self.lo.fract() != 0.0 || self.hi.fract() != 0.0 => {
                bad("integer bounds must be whole numbers")
            }
            _ => Ok(()),
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp().clamp(self.lo, self.hi),
            Scale::Integer => (self.lo + (u * (self.hi - self.lo + 1.0)).floor()).min(self.hi),
        }
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
            Scale::Integer => (v - self.lo + 0.5) / (self.hi - self.lo + 1.0),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi && (self.scale != Scale::Integer || v.fract() == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        let space = Self { dims };
        space.validate()?;
        Ok(space)
    }

    /// Learning rate, hidden width, latent size, embedding size and batch size.
    pub fn rcvae() -> Self {
        let dim = |name: &str, lo, hi, scale| Dim {
            name: name.into(),
            lo,
            hi,
            scale,
        };
        Self {
            dims: vec![
                dim("eta", 1e-5, 1e-2, Scale::Log),
                dim("h", 32.0, 512.0, Scale::Integer),
                dim("J", 4.0, 64.0, Scale::Integer),
                dim("D", 8.0, 512.0, Scale::Integer),
                dim("K", 32.0, 256.0, Scale::Integer),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Spec("search space has no dimensions".into()));
        }
        self.dims.iter().try_for_each(Dim::validate)
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(u).map(|(d, &x)| d.from_unit(x)).collect()
    }

    pub fn to_unit(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &x)| d.to_unit(x)).collect()
    }

    /// Errors unless `point` has one in-bounds value per dimension.
    pub fn check(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.len() {
            return Err(Error::Spec(format!(
                "point has {} coordinates, space has {}",
                point.len(),
                self.len()
            )));
        }
        for (d, &v) in self.dims.iter().zip(point) {
            if !d.contains(v) {
                return Err(Error::Spec(format!(
                    "{} = {v} is outside [{}, {}] or not integral",
                    d.name, d.lo, d.hi
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn integer_cells_round_trip() {
        let d = Dim::new("h", 32.0, 512.0, Scale::Integer).unwrap();
        for v in [32.0, 33.0, 200.0, 511.0, 512.0] {
            assert_eq!(d.from_unit(d.to_unit(v)), v);
        }
        assert_eq!(d.from_unit(0.0), 32.0);
        assert_eq!(d.from_unit(1.0), 512.0);
    }

    #[test]
    fn invalid_dims_rejected() {
        assert!(Dim::new("a", 1.0, 1.0, Scale::Linear).is_err());
        assert!(Dim::new("a", 0.0, 1.0, Scale::Log).is_err());
        assert!(Dim::new("a", 0.5, 3.0, Scale::Integer).is_err());
    }

    #[test]
    fn check_rejects_out_of_bounds() {
        let s = SearchSpace::rcvae();
        assert!(s.check(&[1e-3, 64.0, 8.0, 16.0, 64.0]).is_ok());
        assert!(s.check(&[1e-1, 64.0, 8.0, 16.0, 64.0]).is_err());
        assert!(s.check(&[1e-3, 64.5, 8.0, 16.0, 64.0]).is_err());
        assert!(s.check(&[1e-3, 64.0]).is_err());
    }

    proptest! {
        #[test]
        fn proposals_always_in_bounds(u in proptest::collection::vec(-0.5f64..1.5, 5)) {
            let s = SearchSpace::rcvae();
            prop_assert!(s.check(&s.from_unit(&u)).is_ok());
        }
    }
}
