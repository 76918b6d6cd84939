//! CSV exchange formats. Scan numbers in files are 1-based.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Provenance, ScanData, TruthTrack};
use crate::error::{Error, Result};
use crate::models::{PathLabel, SlantMeasurement, StateVector};

#[derive(Serialize, Deserialize)]
struct ScanRow {
    k: usize,
    r: f64,
    r_dot: f64,
    zeta: f64,
    provenance: String,
}

fn provenance_str(p: &Provenance) -> String {
    match p {
        Provenance::Clutter => "clutter".into(),
        Provenance::Target { id, path } => format!("target{id}:{path}"),
    }
}

fn parse_provenance(s: &str) -> Result<Provenance> {
    if s == "clutter" {
        return Ok(Provenance::Clutter);
    }
    let bad = || Error::Config(format!("bad provenance '{s}'"));
    let rest = s.strip_prefix("target").ok_or_else(bad)?;
    let (id, label) = rest.split_once(':').ok_or_else(bad)?;
    let path = match label {
        "EE" => PathLabel::EE,
        "EF" => PathLabel::EF,
        "FE" => PathLabel::FE,
        "FF" => PathLabel::FF,
        _ => return Err(bad()),
    };
    Ok(Provenance::Target { id: id.parse().map_err(|_| bad())?, path })
}

/// Columns: `k, r, r_dot, zeta, provenance`.
pub fn write_scans_csv(scans: &[ScanData], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in scans {
        for (m, p) in s.measurements.iter().zip(&s.provenance) {
            wr.serialize(ScanRow { k: s.k + 1, r: m.r, r_dot: m.r_dot, zeta: m.zeta, provenance: provenance_str(p) })?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads scans; `n_scans` fixes the number of (possibly empty) scans returned.
pub fn read_scans_csv(r: impl Read, n_scans: usize) -> Result<Vec<ScanData>> {
    let mut scans: Vec<ScanData> =
        (0..n_scans).map(|k| ScanData { k, measurements: Vec::new(), provenance: Vec::new() }).collect();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: ScanRow = row?;
        if row.k == 0 || row.k > n_scans {
            return Err(Error::Config(format!("scan {} outside 1..={n_scans}", row.k)));
        }
        let s = &mut scans[row.k - 1];
        s.measurements.push(SlantMeasurement { r: row.r, r_dot: row.r_dot, zeta: row.zeta, scan: row.k - 1 });
        s.provenance.push(parse_provenance(&row.provenance)?);
    }
    Ok(scans)
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    target: usize,
    k: usize,
    g: f64,
    g_dot: f64,
    theta: f64,
    theta_dot: f64,
}

/// Columns: `target, k, g, g_dot, theta, theta_dot`.
pub fn write_truth_csv(truth: &[TruthTrack], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for t in truth {
        for (n, x) in t.states.iter().enumerate() {
            wr.serialize(TruthRow { target: t.id, k: t.birth + n + 1, g: x[0], g_dot: x[1], theta: x[2], theta_dot: x[3] })?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn read_truth_csv(r: impl Read) -> Result<Vec<TruthTrack>> {
    let mut out: Vec<TruthTrack> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: TruthRow = row?;
        let x = StateVector::new(row.g, row.g_dot, row.theta, row.theta_dot);
        let k = row.k.checked_sub(1).ok_or_else(|| Error::Config("scan 0 in truth file".into()))?;
        match out.iter_mut().find(|t| t.id == row.target) {
            Some(t) if t.death + 1 == k => {
                t.death = k;
                t.states.push(x);
            }
            Some(_) => return Err(Error::Config(format!("truth rows of target {} not contiguous", row.target))),
            None => out.push(TruthTrack { id: row.target, birth: k, death: k, states: vec![x] }),
        }
    }
    Ok(out)
}
