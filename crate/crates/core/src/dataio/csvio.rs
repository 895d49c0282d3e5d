use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatteryRecord, ChargePoint, CycleSeries};
use crate::{Error, Result};

#[derive(Debug, Deserialize, Serialize)]
struct DataRow {
    battery_id: String,
    cycle_index: u32,
    time_s: f64,
    #[serde(rename = "voltage_V")]
    voltage_v: f64,
    #[serde(rename = "current_rate_C")]
    current_rate_c: f64,
    #[serde(rename = "temperature_degC")]
    temperature_degc: f64,
    #[serde(rename = "charge_capacity_Ah")]
    charge_capacity_ah: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct MetaRow {
    battery_id: String,
    eol: u32,
}

const DATA_HEADER: [&str; 7] = [
    "battery_id",
    "cycle_index",
    "time_s",
    "voltage_V",
    "current_rate_C",
    "temperature_degC",
    "charge_capacity_Ah",
];

fn check_header(rdr: &mut csv::Reader<std::fs::File>, expected: &[&str], path: &Path) -> Result<()> {
    let headers = rdr.headers()?;
    for col in expected {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::Parse(format!(
                "{}: missing column {col:?}",
                path.display()
            )));
        }
    }
    Ok(())
}

fn row_error(path: &Path, line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{} line {line}: {msg}", path.display()))
}

/// Reads the data CSV and metadata CSV into per-battery records.
///
/// Batteries come out sorted by id and cycles by index, so row order in the
/// input does not matter.
pub fn load_csv(path: impl AsRef<Path>, metadata_path: impl AsRef<Path>) -> Result<Vec<BatteryRecord>> {
    let path = path.as_ref();
    let metadata_path = metadata_path.as_ref();

    let mut meta_rdr = csv::Reader::from_path(metadata_path)?;
    check_header(&mut meta_rdr, &["battery_id", "eol"], metadata_path)?;
    let mut eols: HashMap<String, u32> = HashMap::new();
    for (i, row) in meta_rdr.deserialize::<MetaRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| row_error(metadata_path, line, e))?;
        if row.eol == 0 {
            return Err(row_error(metadata_path, line, "eol must be positive"));
        }
        if eols.insert(row.battery_id.clone(), row.eol).is_some() {
            return Err(row_error(
                metadata_path,
                line,
                format!("duplicate battery {:?}", row.battery_id),
            ));
        }
    }

    let mut rdr = csv::Reader::from_path(path)?;
    check_header(&mut rdr, &DATA_HEADER, path)?;
    // battery -> cycle -> (line, point)
    let mut grouped: BTreeMap<String, BTreeMap<u32, Vec<(u64, ChargePoint)>>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<DataRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| row_error(path, line, e))?;
        let eol = *eols.get(&row.battery_id).ok_or_else(|| {
            row_error(
                path,
                line,
                format!("battery {:?} missing from metadata", row.battery_id),
            )
        })?;
        if row.cycle_index == 0 || row.cycle_index > eol {
            return Err(row_error(
                path,
                line,
                format!(
                    "cycle_index {} outside 1..={eol} for battery {:?}",
                    row.cycle_index, row.battery_id
                ),
            ));
        }
        let point = ChargePoint {
            time_s: row.time_s,
            voltage_v: row.voltage_v,
            current_rate_c: row.current_rate_c,
            temperature_c: row.temperature_degc,
            charge_capacity_ah: row.charge_capacity_ah,
        };
        if !point.is_finite() {
            return Err(row_error(path, line, "non-finite value"));
        }
        grouped
            .entry(row.battery_id)
            .or_default()
            .entry(row.cycle_index)
            .or_default()
            .push((line, point));
    }

    let mut records = Vec::with_capacity(grouped.len());
    for (battery_id, cycles) in grouped {
        let mut series = Vec::with_capacity(cycles.len());
        for (cycle_index, mut points) in cycles {
            points.sort_by(|a, b| a.1.time_s.total_cmp(&b.1.time_s));
            if let Some(w) = points.windows(2).find(|w| w[1].1.time_s <= w[0].1.time_s) {
                return Err(row_error(
                    path,
                    w[1].0,
                    format!("non-monotone time in {battery_id} cycle {cycle_index}"),
                ));
            }
            if points.len() < 2 {
                return Err(row_error(
                    path,
                    points[0].0,
                    format!("{battery_id} cycle {cycle_index} has a single point"),
                ));
            }
            series.push(CycleSeries {
                battery_id: battery_id.clone(),
                cycle_index,
                points: points.into_iter().map(|(_, p)| p).collect(),
            });
        }
        records.push(BatteryRecord {
            eol: eols[&battery_id],
            battery_id,
            cycles: series,
        });
    }
    Ok(records)
}

/// Writes records in the layout [`load_csv`] reads.
pub fn write_csv(
    records: &[BatteryRecord],
    path: impl AsRef<Path>,
    metadata_path: impl AsRef<Path>,
) -> Result<()> {
    let mut meta = csv::Writer::from_path(metadata_path)?;
    let mut data = csv::Writer::from_path(path)?;
    for rec in records {
        meta.serialize(MetaRow {
            battery_id: rec.battery_id.clone(),
            eol: rec.eol,
        })?;
        for cycle in &rec.cycles {
            for p in &cycle.points {
                data.serialize(DataRow {
                    battery_id: rec.battery_id.clone(),
                    cycle_index: cycle.cycle_index,
                    time_s: p.time_s,
                    voltage_v: p.voltage_v,
                    current_rate_c: p.current_rate_c,
                    temperature_degc: p.temperature_c,
                    charge_capacity_ah: p.charge_capacity_ah,
                })?;
            }
        }
    }
    meta.flush()?;
    data.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const HEADER: &str =
        "battery_id,cycle_index,time_s,voltage_V,current_rate_C,temperature_degC,charge_capacity_Ah\n";

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "d.csv",
            &format!("{HEADER}b0,1,0.0,3.0,1.0,30.0,0.0\nb0,1,10.0,3.6,1.0,31.0,0.5\n"),
        );
        let meta = write(dir.path(), "m.csv", "battery_id,eol\nb0,500\n");
        let recs = load_csv(&data, &meta).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].eol, 500);
        assert_eq!(recs[0].cycles.len(), 1);
        assert_eq!(recs[0].cycles[0].points.len(), 2);
    }

    #[test]
    fn cycle_beyond_eol_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(
            dir.path(),
            "d.csv",
            &format!("{HEADER}b0,501,0.0,3.0,1.0,30.0,0.0\nb0,501,1.0,3.1,1.0,30.0,0.1\n"),
        );
        let meta = write(dir.path(), "m.csv", "battery_id,eol\nb0,500\n");
        let err = load_csv(&data, &meta).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_battery_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(dir.path(), "m.csv", "battery_id,eol\nb0,500\n");
        let data = write(
            dir.path(),
            "d.csv",
            &format!("{HEADER}b0,1,0,3,1,30,0\nb0,1,1,3,1,30,0.1\nzz,1,0,3,1,30,0\n"),
        );
        let err = load_csv(&data, &meta).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("zz"), "{err}");

        let data = write(dir.path(), "d2.csv", "battery_id,cycle_index,time_s\nb0,1,0\n");
        let err = load_csv(&data, &meta).unwrap_err().to_string();
        assert!(err.contains("voltage_V"), "{err}");
    }

    #[test]
    fn duplicate_time_is_non_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(dir.path(), "m.csv", "battery_id,eol\nb0,500\n");
        let data = write(
            dir.path(),
            "d.csv",
            &format!("{HEADER}b0,1,5,3,1,30,0\nb0,1,0,3,1,30,0\nb0,1,5,3.1,1,30,0.1\n"),
        );
        let err = load_csv(&data, &meta).unwrap_err().to_string();
        assert!(err.contains("non-monotone"), "{err}");
    }
}
