use serde::{Deserialize, Serialize};

use super::{DataType, ResampledCycle};
use crate::{Error, Result};

/// Per-type min/max fitted on the training split; maps each type onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    /// `(min, max)` indexed by [`DataType::index`].
    pub ranges: [(f64, f64); 4],
}

/// Count of values that fell outside the fitted range and were clipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScaleReport {
    pub clipped: usize,
}

impl ScalerParams {
    pub fn new(ranges: [(f64, f64); 4]) -> Result<Self> {
        for ty in DataType::ALL {
            let (lo, hi) = ranges[ty.index()];
            if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
                return Err(Error::Data(format!(
                    "degenerate range [{lo}, {hi}] for {}",
                    ty.short()
                )));
            }
        }
        Ok(Self { ranges })
    }

    /// Fits on training cycles only.
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a ResampledCycle>) -> Result<Self> {
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 4];
        let mut seen = false;
        for cycle in train {
            seen = true;
            for ty in DataType::ALL {
                let r = &mut ranges[ty.index()];
                for &v in cycle.get(ty) {
                    r.0 = r.0.min(v);
                    r.1 = r.1.max(v);
                }
            }
        }
        if !seen {
            return Err(Error::Data("cannot fit scaler on an empty training set".into()));
        }
        Self::new(ranges)
    }

    pub fn range(&self, ty: DataType) -> (f64, f64) {
        self.ranges[ty.index()]
    }

    /// Scaled value, clipped to `[0, 1]`; the flag is set when clipping occurred.
    pub fn apply(&self, ty: DataType, value: f64) -> (f64, bool) {
        let (lo, hi) = self.range(ty);
        let y = (value - lo) / (hi - lo);
        if (0.0..=1.0).contains(&y) {
            (y, false)
        } else {
            (y.clamp(0.0, 1.0), true)
        }
    }

    pub fn invert(&self, ty: DataType, scaled: f64) -> f64 {
        let (lo, hi) = self.range(ty);
        lo + scaled * (hi - lo)
    }

    pub fn apply_cycle(&self, cycle: &ResampledCycle, report: &mut ScaleReport) -> ResampledCycle {
        let mut out = cycle.clone();
        for ty in DataType::ALL {
            for v in out.get_mut(ty) {
                let (y, clipped) = self.apply(ty, *v);
                report.clipped += usize::from(clipped);
                *v = y;
            }
        }
        out
    }

    pub fn invert_cycle(&self, cycle: &ResampledCycle) -> ResampledCycle {
        let mut out = cycle.clone();
        for ty in DataType::ALL {
            for v in out.get_mut(ty) {
                *v = self.invert(ty, *v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn scaler() -> ScalerParams {
        ScalerParams::new([(2.0, 4.0), (0.0, 5.0), (25.0, 40.0), (0.0, 1.1)]).unwrap()
    }

    #[test]
    fn midpoint_and_clip() {
        let s = scaler();
        assert_eq!(s.apply(DataType::Voltage, 3.0), (0.5, false));
        assert_eq!(s.apply(DataType::Voltage, 5.0), (1.0, true));
        assert_eq!(s.apply(DataType::Voltage, 1.0), (0.0, true));
    }

    #[test]
    fn degenerate_range_names_type() {
        let cyc = ResampledCycle::new(vec![1.0, 2.0], vec![3.0, 3.0], vec![1.0, 2.0], vec![0.0, 1.0])
            .unwrap();
        let err = ScalerParams::fit([&cyc]).unwrap_err().to_string();
        assert!(err.contains(" I"), "{err}");
        assert!(ScalerParams::fit(std::iter::empty()).is_err());
    }

    #[test]
    fn invert_apply_round_trip() {
        let s = scaler();
        let mut rng = Rng::seed_from(11);
        for _ in 0..1000 {
            for ty in DataType::ALL {
                let (lo, hi) = s.range(ty);
                let x = rng.uniform_range(lo, hi);
                let (y, clipped) = s.apply(ty, x);
                assert!(!clipped);
                assert!((s.invert(ty, y) - x).abs() < 1e-12);
            }
        }
    }
}
