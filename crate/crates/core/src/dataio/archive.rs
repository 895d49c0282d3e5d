//! `dataset.bin`: packed samples plus the scaler and layout they were built with.
//!
//! Layout (little-endian): magic `RCVD`, `u32` version, `u64` height, `u64`
//! width, four `(f64 min, f64 max)` scaler pairs in V, I, T, Qc order, `u64`
//! sample count, then per sample: battery id (`u32` length + UTF-8), `u32` EOL,
//! `u32` ECL, `u8` split tag (0 train, 1 val, 2 test), `3·2·H·W` f64 features.

use std::path::Path;

use super::{Layout, QuasiVideoSample, ScalerParams};
use crate::binio::{read_preamble, write_atomic, ByteReader, ByteWriter};
use crate::labels::LabelKey;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"RCVD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetArchive {
    pub layout: Layout,
    pub scaler: ScalerParams,
    pub samples: Vec<(QuasiVideoSample, SplitTag)>,
}

impl DatasetArchive {
    pub fn split(&self, tag: SplitTag) -> Vec<QuasiVideoSample> {
        self.samples
            .iter()
            .filter(|(_, t)| *t == tag)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.usize(self.layout.height);
        w.usize(self.layout.width);
        for (lo, hi) in self.scaler.ranges {
            w.f64(lo);
            w.f64(hi);
        }
        w.usize(self.samples.len());
        for (s, tag) in &self.samples {
            w.str(&s.battery_id);
            w.u32(s.label.eol);
            w.u32(s.label.ecl);
            w.u8(*tag as u8);
            for v in &s.features {
                w.f64(*v);
            }
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        read_preamble(&mut r, MAGIC, VERSION)?;
        let layout = Layout::new(r.usize()?, r.usize()?).map_err(|e| r.error(e.to_string()))?;
        let mut ranges = [(0.0, 0.0); 4];
        for range in &mut ranges {
            *range = (r.f64()?, r.f64()?);
        }
        let scaler = ScalerParams::new(ranges).map_err(|e| r.error(e.to_string()))?;
        let count = r.usize()?;
        let d = layout.feature_len();
        let mut samples = Vec::with_capacity(count.min(bytes.len() / (8 * d).max(1)));
        for _ in 0..count {
            let battery_id = r.str()?;
            let (eol, ecl) = (r.u32()?, r.u32()?);
            let label = LabelKey::new(eol, ecl).map_err(|e| r.error(e.to_string()))?;
            let tag = match r.u8()? {
                0 => SplitTag::Train,
                1 => SplitTag::Val,
                2 => SplitTag::Test,
                t => return Err(r.error(format!("unknown split tag {t}"))),
            };
            let features = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            samples.push((
                QuasiVideoSample {
                    features,
                    label,
                    battery_id,
                },
                tag,
            ));
        }
        r.expect_end()?;
        Ok(Self {
            layout,
            scaler,
            samples,
        })
    }
}

pub fn write_dataset(archive: &DatasetArchive, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &archive.to_bytes())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetArchive> {
    let bytes = std::fs::read(path.as_ref()).map_err(Error::Io)?;
    DatasetArchive::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let layout = Layout::new(1, 2).unwrap();
        let scaler = ScalerParams::new([(0.0, 1.0); 4]).unwrap();
        let sample = QuasiVideoSample {
            features: (0..12).map(|i| i as f64 / 12.0).collect(),
            label: LabelKey::new(500, 3).unwrap(),
            battery_id: "b7".into(),
        };
        let archive = DatasetArchive {
            layout,
            scaler,
            samples: vec![(sample, SplitTag::Val)],
        };
        let bytes = archive.to_bytes();
        assert_eq!(DatasetArchive::from_bytes(&bytes).unwrap(), archive);
        let err = DatasetArchive::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
