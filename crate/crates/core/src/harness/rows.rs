//! CSV persistence of result rows.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const FIELDS: [&str; 16] = [
    "scenario",
    "n",
    "K",
    "D",
    "replication",
    "seed",
    "excess_kl",
    "nll",
    "gap",
    "l1_error",
    "l2_error",
    "zeta_estimate",
    "bound_id",
    "bound_rhs",
    "bound_satisfied",
    "wall_time_ms",
];

/// One (replication, bound) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub replication: usize,
    pub seed: u64,
    pub excess_kl: f64,
    pub nll: f64,
    pub gap: f64,
    pub l1_error: f64,
    pub l2_error: f64,
    pub zeta_estimate: f64,
    pub bound_id: String,
    pub bound_rhs: f64,
    pub bound_satisfied: bool,
    pub wall_time_ms: f64,
}

/// 17 significant digits.
fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

impl ResultRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.n.to_string(),
            self.k.to_string(),
            self.d.to_string(),
            self.replication.to_string(),
            self.seed.to_string(),
            real(self.excess_kl),
            real(self.nll),
            real(self.gap),
            real(self.l1_error),
            real(self.l2_error),
            real(self.zeta_estimate),
            self.bound_id.clone(),
            real(self.bound_rhs),
            (self.bound_satisfied as u8).to_string(),
            real(self.wall_time_ms),
        ]
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != FIELDS.len() {
            return Err(invalid(format!("expected {} fields, found {}", FIELDS.len(), rec.len())));
        }
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| invalid(format!("field '{}': bad integer '{}'", FIELDS[i], &rec[i])))
        };
        let flt = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| invalid(format!("field '{}': bad number '{}'", FIELDS[i], &rec[i])))
        };
        let flag = match &rec[14] {
            "0" => false,
            "1" => true,
            other => return Err(invalid(format!("field 'bound_satisfied': expected 0 or 1, got '{other}'"))),
        };
        Ok(Self {
            scenario: rec[0].to_string(),
            n: int(1)? as usize,
            k: int(2)? as usize,
            d: int(3)? as usize,
            replication: int(4)? as usize,
            seed: int(5)?,
            excess_kl: flt(6)?,
            nll: flt(7)?,
            gap: flt(8)?,
            l1_error: flt(9)?,
            l2_error: flt(10)?,
            zeta_estimate: flt(11)?,
            bound_id: rec[12].to_string(),
            bound_rhs: flt(13)?,
            bound_satisfied: flag,
            wall_time_ms: flt(15)?,
        })
    }
}

pub fn write_rows_to(out: impl Write, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIELDS)?;
    for r in rows {
        w.write_record(r.to_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_rows_to(std::fs::File::create(path)?, rows)
}

pub fn read_rows_from(input: impl Read) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(FIELDS.iter().copied()) {
        return Err(invalid("CSV header does not match the result schema"));
    }
    r.records().map(|rec| ResultRow::from_record(&rec?)).collect()
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows_from(std::fs::File::open(path)?)
}
