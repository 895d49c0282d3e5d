//! Quasi-video packing.
//!
//! A sample is a `(channel, depth, height, width)` block flattened in that
//! order. Channels are voltage, current rate and temperature. Depth 0 holds
//! the channel's own series; depth 1 holds the charge-capacity series,
//! replicated in every channel. Each series of length `L = H·W` fills its
//! `H × W` plane row-major.

use serde::{Deserialize, Serialize};

use super::{DataType, ResampledCycle};
use crate::labels::LabelKey;
use crate::{Error, Result};

/// Identifier of the depth convention above, stored in checkpoints.
pub const DEPTH_CONVENTION: u64 = 1;

const CHANNELS: [DataType; 3] = [DataType::Voltage, DataType::Current, DataType::Temperature];
const DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub height: usize,
    pub width: usize,
}

impl Layout {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height * width < 2 {
            return Err(Error::Spec(format!("invalid layout {height}x{width}")));
        }
        Ok(Self { height, width })
    }

    /// Resample length `L = H·W`.
    pub fn series_len(&self) -> usize {
        self.height * self.width
    }

    /// Flattened feature length `3·2·H·W`.
    pub fn feature_len(&self) -> usize {
        CHANNELS.len() * DEPTH * self.series_len()
    }

    #[inline]
    pub fn offset(&self, channel: usize, depth: usize, row: usize, col: usize) -> usize {
        ((channel * DEPTH + depth) * self.height + row) * self.width + col
    }

    /// The scaled-feature type at each flattened position.
    pub fn feature_types(&self) -> Vec<DataType> {
        let plane = self.series_len();
        (0..self.feature_len())
            .map(|i| {
                let block = i / plane;
                if block % DEPTH == 1 {
                    DataType::Capacity
                } else {
                    CHANNELS[block / DEPTH]
                }
            })
            .collect()
    }
}

/// A packed, scaled sample with its condition.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiVideoSample {
    pub features: Vec<f64>,
    pub label: LabelKey,
    pub battery_id: String,
}

pub fn pack(series: &ResampledCycle, label: LabelKey, battery_id: &str, layout: Layout) -> Result<QuasiVideoSample> {
    let l = layout.series_len();
    if series.len() != l {
        return Err(Error::Dimension(format!(
            "series length {} does not fill a {}x{} plane",
            series.len(),
            layout.height,
            layout.width
        )));
    }
    let mut features = vec![0.0; layout.feature_len()];
    let capacity = series.get(DataType::Capacity);
    for (c, ty) in CHANNELS.iter().enumerate() {
        let own = series.get(*ty);
        let base0 = layout.offset(c, 0, 0, 0);
        let base1 = layout.offset(c, 1, 0, 0);
        features[base0..base0 + l].copy_from_slice(own);
        features[base1..base1 + l].copy_from_slice(capacity);
    }
    Ok(QuasiVideoSample {
        features,
        label,
        battery_id: battery_id.to_string(),
    })
}

/// Inverse of [`pack`]. Capacity is the mean of its three depth-1 copies, which
/// differ only for model reconstructions.
pub fn unpack(features: &[f64], layout: Layout) -> Result<ResampledCycle> {
    if features.len() != layout.feature_len() {
        return Err(Error::Dimension(format!(
            "feature length {} != {}",
            features.len(),
            layout.feature_len()
        )));
    }
    let l = layout.series_len();
    let plane = |c: usize, d: usize| {
        let base = layout.offset(c, d, 0, 0);
        features[base..base + l].to_vec()
    };
    let copies: Vec<Vec<f64>> = (0..CHANNELS.len()).map(|c| plane(c, 1)).collect();
    let capacity: Vec<f64> = (0..l)
        .map(|i| copies.iter().map(|p| p[i]).sum::<f64>() / copies.len() as f64)
        .collect();
    ResampledCycle::new(plane(0, 0), plane(1, 0), plane(2, 0), capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label() -> LabelKey {
        LabelKey::new(700, 10).unwrap()
    }

    #[test]
    fn row_major_plane() {
        let layout = Layout::new(2, 2).unwrap();
        let cyc = ResampledCycle::new(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0; 4],
            vec![6.0; 4],
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        let s = pack(&cyc, label(), "b", layout).unwrap();
        assert_eq!(&s.features[0..4], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.features[layout.offset(0, 0, 1, 0)], 3.0);
        assert_eq!(&s.features[4..8], &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(&s.features[8..12], &[5.0; 4]);
        assert_eq!(&s.features[20..24], &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn feature_length_for_16x16() {
        assert_eq!(Layout::new(16, 16).unwrap().feature_len(), 1536);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let layout = Layout::new(2, 2).unwrap();
        let cyc = ResampledCycle::new(vec![1.0; 3], vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(pack(&cyc, label(), "b", layout), Err(Error::Dimension(_))));
    }

    #[test]
    fn feature_types_follow_layout() {
        let layout = Layout::new(1, 2).unwrap();
        use DataType::*;
        assert_eq!(
            layout.feature_types(),
            vec![Voltage, Voltage, Capacity, Capacity, Current, Current, Capacity, Capacity, Temperature, Temperature, Capacity, Capacity]
        );
    }
}
