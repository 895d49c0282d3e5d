//! Synthetic charging data standing in for a real cycling dataset.
//!
//! Each cycle follows a CC-CV-like template. The battery's normalised life
//! `(EOL - eol_min) / (eol_max - eol_min)` sets the charge rate, the voltage
//! swing and the temperature rise, so the EOL is readable from any single
//! cycle. Wear `cycle / EOL` shortens the CC phase and fades capacity slowly.

use super::{BatteryRecord, ChargePoint, CycleSeries};
use crate::numcore::Rng;
use crate::{Error, Result};

/// Standard deviation of the voltage noise, in volts.
pub const SYNTH_VOLTAGE_NOISE: f64 = 0.002;
const CURRENT_NOISE: f64 = 0.01;
const TEMPERATURE_NOISE: f64 = 0.05;
const NOMINAL_CAPACITY_AH: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    pub n_batteries: usize,
    pub n_cycles: u32,
    pub eol_min: u32,
    pub eol_max: u32,
}

fn check_range(eol_range: (u32, u32)) -> Result<()> {
    let (lo, hi) = eol_range;
    if lo == 0 || lo > hi {
        return Err(Error::Spec(format!("invalid EOL range {lo}..={hi}")));
    }
    Ok(())
}

/// Generates `n_batteries` batteries with EOL uniform in `eol_range` and
/// cycles `1..=min(n_cycles, EOL)`.
pub fn synth_generate(
    rng: &mut Rng,
    n_batteries: usize,
    n_cycles: u32,
    eol_range: (u32, u32),
) -> Result<Vec<BatteryRecord>> {
    check_range(eol_range)?;
    if n_batteries == 0 || n_cycles == 0 {
        return Err(Error::Spec("need at least one battery and one cycle".into()));
    }
    let span = (eol_range.1 - eol_range.0) as usize + 1;
    (0..n_batteries)
        .map(|b| {
            let eol = eol_range.0 + rng.below(span) as u32;
            synth_battery(rng, &format!("s{b:03}"), eol, n_cycles, eol_range)
        })
        .collect()
}

/// One synthetic battery with a chosen EOL.
pub fn synth_battery(
    rng: &mut Rng,
    battery_id: &str,
    eol: u32,
    n_cycles: u32,
    eol_range: (u32, u32),
) -> Result<BatteryRecord> {
    check_range(eol_range)?;
    if eol == 0 {
        return Err(Error::Spec("EOL must be positive".into()));
    }
    let (lo, hi) = eol_range;
    let life = if hi > lo {
        ((f64::from(eol) - f64::from(lo)) / f64::from(hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let voltage_offset = 0.005 * rng.normal();
    let ambient = 30.0 + 0.5 * rng.normal();

    let cycles = (1..=n_cycles.min(eol))
        .map(|k| {
            let wear = f64::from(k) / f64::from(eol);
            CycleSeries {
                battery_id: battery_id.to_string(),
                cycle_index: k,
                points: synth_cycle(rng, life, wear, voltage_offset, ambient),
            }
        })
        .collect();
    Ok(BatteryRecord {
        battery_id: battery_id.to_string(),
        eol,
        cycles,
    })
}

fn synth_cycle(rng: &mut Rng, life: f64, wear: f64, voltage_offset: f64, ambient: f64) -> Vec<ChargePoint> {
    let n = 200 + rng.below(61);
    let duration = 3600.0 * (0.6 + 0.3 * life) * (1.0 - 0.1 * wear);
    let spacing = duration / (n - 1) as f64;
    let times: Vec<f64> = (0..n)
        .map(|i| {
            let t = duration * i as f64 / (n - 1) as f64;
            if i == 0 || i == n - 1 {
                t
            } else {
                t + rng.uniform_range(-0.3, 0.3) * spacing
            }
        })
        .collect();

    let cc_rate = 1.0 + 4.0 * (1.0 - life);
    let cv_start = 0.75 - 0.1 * wear;
    let current = |s: f64| {
        if s < cv_start {
            cc_rate
        } else {
            cc_rate * (-(s - cv_start) / 0.07).exp()
        }
    };
    let swing = 0.30 + 0.40 * (1.0 - life) + 0.05 * wear;
    let heating = 3.0 + 6.0 * (1.0 - life);
    let capacity = NOMINAL_CAPACITY_AH * (1.0 - 0.2 * wear) * (0.85 + 0.15 * life);

    // Capacity is the normalised running integral of the noise-free current.
    let clean_current: Vec<f64> = times.iter().map(|t| current(t / duration)).collect();
    let mut charge = vec![0.0; n];
    for i in 1..n {
        charge[i] =
            charge[i - 1] + 0.5 * (clean_current[i] + clean_current[i - 1]) * (times[i] - times[i - 1]);
    }
    let total = charge[n - 1];

    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let s = t / duration;
            ChargePoint {
                time_s: t,
                voltage_v: 2.9
                    + voltage_offset
                    + swing * (1.0 - (-s / 0.18).exp())
                    + 0.1 * wear * s
                    + SYNTH_VOLTAGE_NOISE * rng.normal(),
                current_rate_c: clean_current[i] + CURRENT_NOISE * rng.normal(),
                temperature_c: ambient
                    + heating * (std::f64::consts::PI * s).sin() * (1.0 + 0.5 * wear)
                    + TEMPERATURE_NOISE * rng.normal(),
                charge_capacity_ah: capacity * charge[i] / total,
            }
        })
        .collect()
}
