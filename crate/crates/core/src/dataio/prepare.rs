use super::{
    build_samples, clean, pack, split_indices, BatteryRecord, CleanReport, DatasetArchive,
    Layout, QuasiVideoSample, ScaleReport, ScalerParams, SplitSpec, SplitTag,
};
use crate::Result;

/// Output of the full preprocessing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub archive: DatasetArchive,
    pub clean_report: CleanReport,
    pub scale_report: ScaleReport,
}

/// Clean, resample the first `spec.n_cycles` cycles of each battery, split at
/// sample level, fit the scaler on the training split and pack every sample.
/// Archive samples keep their pre-split order.
pub fn prepare(records: &[BatteryRecord], spec: &SplitSpec, layout: Layout) -> Result<Prepared> {
    let (cleaned, clean_report) = clean(records);
    let raw = build_samples(&cleaned, spec.n_cycles, layout.series_len())?;
    let idx = split_indices(raw.len(), spec)?;
    let mut tags = vec![SplitTag::Train; raw.len()];
    for &i in &idx.val {
        tags[i] = SplitTag::Val;
    }
    for &i in &idx.test {
        tags[i] = SplitTag::Test;
    }
    let scaler = ScalerParams::fit(idx.train.iter().map(|&i| &raw[i].series))?;
    let mut scale_report = ScaleReport::default();
    let samples = raw
        .iter()
        .zip(tags)
        .map(|(r, tag)| {
            let scaled = scaler.apply_cycle(&r.series, &mut scale_report);
            Ok((pack(&scaled, r.label, &r.battery_id, layout)?, tag))
        })
        .collect::<Result<Vec<(QuasiVideoSample, SplitTag)>>>()?;
    Ok(Prepared {
        archive: DatasetArchive {
            layout,
            scaler,
            samples,
        },
        clean_report,
        scale_report,
    })
}
