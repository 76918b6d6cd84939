//! Track and existence CSV files. Scan numbers in files are 1-based.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TrackEstimate;
use crate::error::{Error, Result};
use crate::jdtvb::VbTrack;
use crate::models::{PathLabel, StateVector};

/// One row of the tracks file. `estimate` is a path label or `fused`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub target: usize,
    pub estimate: String,
    pub k: usize,
    pub g: f64,
    pub g_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub var_g: f64,
    pub var_g_dot: f64,
    pub var_theta: f64,
    pub var_theta_dot: f64,
}

fn row(target: usize, estimate: String, k: usize, x: &StateVector<f64>, p: &nalgebra::Matrix4<f64>) -> TrackRow {
    TrackRow {
        target,
        estimate,
        k: k + 1,
        g: x[0],
        g_dot: x[1],
        theta: x[2],
        theta_dot: x[3],
        var_g: p[(0, 0)],
        var_g_dot: p[(1, 1)],
        var_theta: p[(2, 2)],
        var_theta_dot: p[(3, 3)],
    }
}

/// Fused and per-path smoothed estimates of every track.
pub fn write_tracks_csv(tracks: &[VbTrack], labels: &[PathLabel], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for t in tracks {
        for (l, (x, p)) in t.fused.mean.iter().zip(&t.fused.cov).enumerate() {
            wr.serialize(row(t.id, "fused".into(), t.start + l, x, p))?;
        }
        for pt in &t.paths {
            let label = labels.get(pt.path).map_or_else(|| format!("path{}", pt.path), |l| l.to_string());
            for (l, (x, p)) in pt.mean.iter().zip(&pt.cov).enumerate() {
                wr.serialize(row(t.id, label.clone(), t.start + l, x, p))?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ExistenceRow {
    target: usize,
    k: usize,
    q: f64,
    decision: u8,
}

/// Columns: `target, k, q, decision` (decision is 0 or 1).
pub fn write_existence_csv(tracks: &[VbTrack], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for t in tracks {
        for (l, (&q, &d)) in t.q.iter().zip(&t.decisions).enumerate() {
            let decision = u8::from(d && !t.failed);
            wr.serialize(ExistenceRow { target: t.id, k: t.start + l + 1, q, decision })?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Fused rows of a tracks file as `(target, k, state)`, `k` 0-based.
pub fn read_tracks_csv(r: impl Read) -> Result<Vec<(usize, usize, StateVector<f64>)>> {
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize() {
        let rec: TrackRow = rec?;
        if rec.estimate == "fused" {
            let k = rec.k.checked_sub(1).ok_or_else(|| Error::Config("scan 0 in tracks file".into()))?;
            out.push((rec.target, k, StateVector::new(rec.g, rec.g_dot, rec.theta, rec.theta_dot)));
        }
    }
    Ok(out)
}

/// Rebuilds evaluation tracks from a tracks file and an existence file.
pub fn read_existence_csv(r: impl Read, fused: &[(usize, usize, StateVector<f64>)]) -> Result<Vec<TrackEstimate>> {
    let states: std::collections::HashMap<(usize, usize), StateVector<f64>> =
        fused.iter().map(|&(t, k, x)| ((t, k), x)).collect();
    let mut out: Vec<TrackEstimate> = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize() {
        let rec: ExistenceRow = rec?;
        let k = rec.k.checked_sub(1).ok_or_else(|| Error::Config("scan 0 in existence file".into()))?;
        let x = *states
            .get(&(rec.target, k))
            .ok_or_else(|| Error::Config(format!("no fused state for target {} scan {}", rec.target, rec.k)))?;
        match out.iter_mut().find(|t| t.id == rec.target) {
            Some(t) if t.start + t.states.len() == k => {
                t.states.push(x);
                t.active.push(rec.decision == 1);
            }
            Some(_) => return Err(Error::Config(format!("existence rows of target {} not contiguous", rec.target))),
            None => out.push(TrackEstimate { id: rec.target, start: k, states: vec![x], active: vec![rec.decision == 1] }),
        }
    }
    Ok(out)
}
