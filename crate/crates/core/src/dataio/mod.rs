//! Battery cycle ingest and preprocessing into fixed-shape conditioned samples.
//!
//! Pipeline: [`load_csv`] or [`synth_generate`] → [`clean`] → [`build_samples`]
//! (resample each early cycle to `L` points) → [`split`] → [`ScalerParams::fit`]
//! on the training split → [`pack`] into the quasi-video layout.

mod archive;
mod csvio;
mod pack;
mod prepare;
mod scaler;
mod series;
mod split;
mod synth;

pub use archive::{read_dataset, write_dataset, DatasetArchive, SplitTag};
pub use csvio::{load_csv, write_csv};
pub use pack::{pack, unpack, Layout, QuasiVideoSample, DEPTH_CONVENTION};
pub use prepare::{prepare, Prepared};
pub use scaler::{ScaleReport, ScalerParams};
pub use series::{build_samples, clean, resample, CleanReport, RawSample, ResampledCycle};
pub use split::{split, split_indices, SplitIndices, SplitSpec};
pub use synth::{synth_battery, synth_generate, SynthOptions, SYNTH_VOLTAGE_NOISE};

/// One charging measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargePoint {
    pub time_s: f64,
    pub voltage_v: f64,
    pub current_rate_c: f64,
    pub temperature_c: f64,
    pub charge_capacity_ah: f64,
}

impl ChargePoint {
    pub fn value(&self, ty: DataType) -> f64 {
        match ty {
            DataType::Voltage => self.voltage_v,
            DataType::Current => self.current_rate_c,
            DataType::Temperature => self.temperature_c,
            DataType::Capacity => self.charge_capacity_ah,
        }
    }

    fn value_mut(&mut self, ty: DataType) -> &mut f64 {
        match ty {
            DataType::Voltage => &mut self.voltage_v,
            DataType::Current => &mut self.current_rate_c,
            DataType::Temperature => &mut self.temperature_c,
            DataType::Capacity => &mut self.charge_capacity_ah,
        }
    }

    fn is_finite(&self) -> bool {
        self.time_s.is_finite() && DataType::ALL.iter().all(|&t| self.value(t).is_finite())
    }
}

/// One charging cycle of one battery. `cycle_index` is the sample's ECL.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSeries {
    pub battery_id: String,
    pub cycle_index: u32,
    pub points: Vec<ChargePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryRecord {
    pub battery_id: String,
    pub eol: u32,
    pub cycles: Vec<CycleSeries>,
}

/// The four measured series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Voltage,
    Current,
    Temperature,
    Capacity,
}

impl DataType {
    pub const ALL: [DataType; 4] = [
        DataType::Voltage,
        DataType::Current,
        DataType::Temperature,
        DataType::Capacity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used in report columns.
    pub fn short(self) -> &'static str {
        match self {
            DataType::Voltage => "V",
            DataType::Current => "I",
            DataType::Temperature => "T",
            DataType::Capacity => "Qc",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            DataType::Voltage => "V",
            DataType::Current => "C",
            DataType::Temperature => "degC",
            DataType::Capacity => "Ah",
        }
    }

    /// Physical clip range applied during cleaning.
    pub fn physical_range(self) -> (f64, f64) {
        match self {
            DataType::Voltage => (1.5, 4.5),
            DataType::Current => (-10.0, 10.0),
            DataType::Temperature => (-20.0, 80.0),
            DataType::Capacity => (0.0, 2.0),
        }
    }
}
