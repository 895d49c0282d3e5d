use super::{BatteryRecord, CycleSeries, DataType};
use crate::labels::LabelKey;
use crate::{Error, Result};

/// The four series of one cycle on a common uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledCycle {
    values: [Vec<f64>; 4],
}

impl ResampledCycle {
    pub fn new(voltage: Vec<f64>, current: Vec<f64>, temperature: Vec<f64>, capacity: Vec<f64>) -> Result<Self> {
        let n = voltage.len();
        if current.len() != n || temperature.len() != n || capacity.len() != n {
            return Err(Error::Dimension("series lengths differ".into()));
        }
        Ok(Self {
            values: [voltage, current, temperature, capacity],
        })
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.values[0].is_empty()
    }

    pub fn get(&self, ty: DataType) -> &[f64] {
        &self.values[ty.index()]
    }

    pub fn get_mut(&mut self, ty: DataType) -> &mut [f64] {
        &mut self.values[ty.index()]
    }
}

/// Linearly interpolates every series onto `length` equally spaced times
/// spanning the cycle's first to last timestamp.
pub fn resample(series: &CycleSeries, length: usize) -> Result<ResampledCycle> {
    if length < 2 {
        return Err(Error::Data(format!("resample length {length} < 2")));
    }
    let pts = &series.points;
    if pts.len() < 2 {
        return Err(Error::Data(format!(
            "{} cycle {} has {} point(s); need at least 2",
            series.battery_id,
            series.cycle_index,
            pts.len()
        )));
    }
    let t0 = pts[0].time_s;
    let span = pts[pts.len() - 1].time_s - t0;

    let mut values: [Vec<f64>; 4] = Default::default();
    for v in &mut values {
        v.reserve(length);
    }
    let mut seg = 0;
    for j in 0..length {
        let t = t0 + span * j as f64 / (length - 1) as f64;
        while seg + 2 < pts.len() && pts[seg + 1].time_s <= t {
            seg += 1;
        }
        let (a, b) = (&pts[seg], &pts[seg + 1]);
        let frac = if j == length - 1 {
            1.0
        } else {
            ((t - a.time_s) / (b.time_s - a.time_s)).clamp(0.0, 1.0)
        };
        for ty in DataType::ALL {
            let (va, vb) = (a.value(ty), b.value(ty));
            let v = if frac == 0.0 {
                va
            } else if frac == 1.0 {
                vb
            } else {
                va + frac * (vb - va)
            };
            values[ty.index()].push(v);
        }
    }
    Ok(ResampledCycle { values })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub dropped_cycles: usize,
    pub clipped_values: usize,
}

/// Drops cycles with non-finite values, non-increasing time or fewer than two
/// points, and clips the rest to each type's physical range.
pub fn clean(records: &[BatteryRecord]) -> (Vec<BatteryRecord>, CleanReport) {
    let mut report = CleanReport::default();
    let cleaned = records
        .iter()
        .map(|rec| {
            let cycles = rec
                .cycles
                .iter()
                .filter(|c| {
                    let ok = c.points.len() >= 2
                        && c.points.iter().all(|p| p.is_finite())
                        && c.points.windows(2).all(|w| w[1].time_s > w[0].time_s);
                    if !ok {
                        report.dropped_cycles += 1;
                    }
                    ok
                })
                .map(|c| {
                    let mut c = c.clone();
                    for p in &mut c.points {
                        for ty in DataType::ALL {
                            let (lo, hi) = ty.physical_range();
                            let v = p.value_mut(ty);
                            if *v < lo || *v > hi {
                                *v = v.clamp(lo, hi);
                                report.clipped_values += 1;
                            }
                        }
                    }
                    c
                })
                .collect();
            BatteryRecord {
                battery_id: rec.battery_id.clone(),
                eol: rec.eol,
                cycles,
            }
        })
        .collect();
    (cleaned, report)
}

/// One resampled cycle with its condition, before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub battery_id: String,
    pub label: LabelKey,
    pub series: ResampledCycle,
}

/// Takes the first `n_cycles` cycles of every battery (in cycle order) and
/// resamples each to `length` points.
pub fn build_samples(records: &[BatteryRecord], n_cycles: usize, length: usize) -> Result<Vec<RawSample>> {
    let mut out = Vec::new();
    for rec in records {
        let mut cycles: Vec<&CycleSeries> = rec.cycles.iter().collect();
        cycles.sort_by_key(|c| c.cycle_index);
        for c in cycles.into_iter().take(n_cycles) {
            out.push(RawSample {
                battery_id: rec.battery_id.clone(),
                label: LabelKey::new(rec.eol, c.cycle_index)?,
                series: resample(c, length)?,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Data("no usable cycles".into()));
    }
    Ok(out)
}
