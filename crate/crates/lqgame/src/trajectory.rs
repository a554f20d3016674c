//! Trajectory CSV export.
//!
//! Layout: `#`-prefixed lines carrying the run configuration as pretty JSON, then
//! a header `iter,K1_1,…,KN_k,f_1,…,f_N,grad_norm` and one row per recorded
//! sample. `K{i}_{j}` is entry `j` (row-major, 1-based) of player `i`'s gain.
//! Missing values (non-stabilizing samples) are empty fields.

use std::io::{BufRead, Write};

use lqgame_core::{Cost, JointPolicy, Matrix, SimStatus, SimTrajectory};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub step_sizes: Vec<f64>,
    pub max_iters: usize,
    pub record_every: usize,
    pub init_radius: f64,
    pub seed: u64,
    pub stop_on_destabilize: bool,
    pub status: String,
    pub state_dim: usize,
    pub input_dims: Vec<usize>,
}

pub fn status_label(status: SimStatus) -> String {
    match status {
        SimStatus::Completed => "Completed".to_string(),
        SimStatus::ConvergedToCritical => "ConvergedToCritical".to_string(),
        SimStatus::Destabilized(n) => format!("Destabilized({n})"),
    }
}

fn column_names(policy: &JointPolicy) -> Vec<String> {
    let mut cols = vec!["iter".to_string()];
    for (i, k) in policy.gains().iter().enumerate() {
        for j in 0..k.len() {
            cols.push(format!("K{}_{}", i + 1, j + 1));
        }
    }
    for i in 0..policy.players() {
        cols.push(format!("f_{}", i + 1));
    }
    cols.push("grad_norm".to_string());
    cols
}

pub fn write_trajectory<W: Write>(
    mut out: W,
    header: &TrajectoryHeader,
    traj: &SimTrajectory,
) -> Result<()> {
    let json =
        serde_json::to_string_pretty(header).map_err(|e| Error::json("trajectory header", e))?;
    let io = |e| Error::io("<trajectory>", e);
    for line in json.lines() {
        writeln!(out, "# {line}").map_err(io)?;
    }
    let Some(first) = traj.iterates.first() else {
        return Ok(());
    };
    writeln!(out, "{}", column_names(first).join(",")).map_err(io)?;
    for k in 0..traj.len() {
        let mut fields = vec![traj.iters[k].to_string()];
        for v in traj.iterates[k].to_vector().iter() {
            fields.push(v.to_string());
        }
        for c in &traj.costs[k] {
            fields.push(match c {
                Cost::Finite(v) => v.to_string(),
                Cost::NonFinite => String::new(),
            });
        }
        fields.push(
            traj.grad_norms[k]
                .map(|g| g.to_string())
                .unwrap_or_default(),
        );
        writeln!(out, "{}", fields.join(",")).map_err(io)?;
    }
    Ok(())
}

/// Recorded samples of a trajectory file: header plus `(iter, policy)` rows.
#[derive(Debug, Clone)]
pub struct TrajectoryData {
    pub header: TrajectoryHeader,
    pub iters: Vec<usize>,
    pub iterates: Vec<JointPolicy>,
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<TrajectoryData> {
    let mut json = String::new();
    let mut body = String::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<trajectory>", e))?;
        if let Some(rest) = line.strip_prefix('#') {
            json.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            json.push('\n');
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let header: TrajectoryHeader =
        serde_json::from_str(&json).map_err(|e| Error::json("trajectory header", e))?;
    let m = header.state_dim;
    let len: usize = header.input_dims.iter().sum::<usize>() * m;
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let mut iters = Vec::new();
    let mut iterates = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number {s:?}")))
        };
        let iter = record
            .get(0)
            .ok_or_else(|| Error::Format("missing iter".into()))?
            .parse()
            .map_err(|_| Error::Format("bad iter".into()))?;
        let values = (1..=len)
            .map(|c| parse(record.get(c).unwrap_or("")))
            .collect::<Result<Vec<_>>>()?;
        let mut offset = 0;
        let gains = header
            .input_dims
            .iter()
            .map(|&d| {
                let k = Matrix::from_row_slice(d, m, &values[offset..offset + d * m]);
                offset += d * m;
                k
            })
            .collect();
        iters.push(iter);
        iterates.push(JointPolicy::new(gains));
    }
    Ok(TrajectoryData {
        header,
        iters,
        iterates,
    })
}

impl TrajectoryData {
    /// Rebuilds a trajectory usable by the diagnostics in `lqgame_core::pgsim`.
    /// Costs and gradient norms are not restored.
    pub fn to_trajectory(&self) -> SimTrajectory {
        let n = self.iters.len();
        let players = self.header.input_dims.len();
        SimTrajectory {
            iters: self.iters.clone(),
            iterates: self.iterates.clone(),
            costs: vec![vec![Cost::NonFinite; players]; n],
            grad_norms: vec![None; n],
            status: SimStatus::Completed,
            record_every: self.header.record_every,
        }
    }
}
