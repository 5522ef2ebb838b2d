use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BiasSetting, Mode, ProtocolError};
use crate::imaging::QcReason;

const HEADER: [&str; 9] = ["shot_id", "Ix", "Iy", "Iz", "polarity", "y_px", "z_px", "qc", "seed"];

/// One shot. The fitted centre is present for every fast-mode shot and for
/// full-mode shots that passed the quality gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_id: u64,
    pub bias: BiasSetting,
    pub polarity: i8,
    pub fitted_center: Option<[f64; 2]>,
    pub qc_passed: bool,
    pub qc_reasons: Vec<QcReason>,
    pub seed: u64,
    pub mode: Mode,
}

/// Writes records as CSV with header
/// `shot_id,Ix,Iy,Iz,polarity,y_px,z_px,qc,seed`. Floats use the shortest
/// representation that reads back exactly; a missing centre is empty.
pub fn write_records_csv<W: Write>(records: &[ShotRecord], writer: W) -> Result<(), ProtocolError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in records {
        let (y, z) = match r.fitted_center {
            Some([y, z]) => (y.to_string(), z.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.shot_id.to_string(),
            r.bias.ix.to_string(),
            r.bias.iy.to_string(),
            r.bias.iz.to_string(),
            r.polarity.to_string(),
            y,
            z,
            if r.qc_passed { "pass" } else { "fail" }.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| ProtocolError::Csv(e.to_string()))
}

/// Reads records written by [`write_records_csv`]. The CSV does not carry
/// the mode or the individual QC reasons; `mode` is applied to every record.
pub fn read_records_csv<R: Read>(reader: R, mode: Mode) -> Result<Vec<ShotRecord>, ProtocolError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(ProtocolError::Csv(format!("unexpected header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |field: &str| ProtocolError::Csv(format!("row {}: bad {field}", line + 1));
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad(HEADER[i]));
        let center = match (&row[5], &row[6]) {
            ("", "") => None,
            _ => Some([f(5)?, f(6)?]),
        };
        let qc_passed = match &row[7] {
            "pass" => true,
            "fail" => false,
            _ => return Err(bad("qc")),
        };
        out.push(ShotRecord {
            shot_id: row[0].parse().map_err(|_| bad("shot_id"))?,
            bias: BiasSetting::new(f(1)?, f(2)?, f(3)?),
            polarity: row[4].parse().map_err(|_| bad("polarity"))?,
            fitted_center: center,
            qc_passed,
            qc_reasons: Vec::new(),
            seed: row[8].parse().map_err(|_| bad("seed"))?,
            mode,
        });
    }
    Ok(out)
}
