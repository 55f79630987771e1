use crate::config::ExperimentConfig;
use crate::run::{generate_for, run_pipeline};
use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::Write;
use std::time::Instant;

/// Config fields that may be swept, under their serialized names.
pub const SWEEP_AXES: &[&str] = &[
    "n", "k", "K", "epsilon", "n1", "n2", "nk", "tau", "eps_prime", "eps_2", "R", "C", "sigma", "seed", "learner_seed",
];

/// One sweep point; failures keep the row with an error label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub tran1: Option<f64>,
    pub tran2: Option<f64>,
    pub wall_time_s: f64,
    pub seed: u64,
    pub error: Option<String>,
}

/// `template` with `axis` set to `value`; integer fields need integral values.
pub fn with_axis(template: &ExperimentConfig, axis: &str, value: f64) -> Result<ExperimentConfig> {
    if !SWEEP_AXES.contains(&axis) {
        bail!("`{axis}` is not a numeric config field (expected one of {SWEEP_AXES:?})");
    }
    let mut v = serde_json::to_value(template)?;
    let current = v.get(axis).cloned().unwrap_or(Value::Null);
    let float_field = matches!(axis, "epsilon" | "tau" | "eps_prime" | "eps_2" | "C" | "sigma");
    let json = if float_field || current.is_f64() {
        serde_json::json!(value)
    } else {
        if value.fract() != 0.0 || value < 0.0 {
            bail!("`{axis}` takes non-negative integers, got {value}");
        }
        serde_json::json!(value as u64)
    };
    v[axis] = json;
    Ok(serde_json::from_value(v)?)
}

fn run_point(template: &ExperimentConfig, axis: &str, value: f64) -> SweepRow {
    let start = Instant::now();
    let outcome = with_axis(template, axis, value).and_then(|c| {
        let data = generate_for(&c)?;
        Ok((c.seed, run_pipeline(&c, &data)?))
    });
    let wall_time_s = start.elapsed().as_secs_f64();
    match outcome {
        Ok((seed, rep)) => SweepRow {
            value,
            tran1: rep.tran1,
            tran2: rep.tran2,
            wall_time_s,
            seed,
            error: rep.distance_error,
        },
        Err(e) => SweepRow { value, tran1: None, tran2: None, wall_time_s, seed: template.seed, error: Some(format!("{e:#}")) },
    }
}

/// One run per value, each regenerating its data from the template's
/// mixture. Rows come back sorted by value.
pub fn sweep(template: &ExperimentConfig, axis: &str, values: &[f64], parallel: bool) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = if parallel {
        values.par_iter().map(|&v| run_point(template, axis, v)).collect()
    } else {
        values.iter().map(|&v| run_point(template, axis, v)).collect()
    };
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    rows
}

/// CSV with columns `value,tran1,tran2,wall_time_s,seed,error`.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "tran1", "tran2", "wall_time_s", "seed", "error"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.value.to_string(),
            opt(r.tran1),
            opt(r.tran2),
            r.wall_time_s.to_string(),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a CSV written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let opt = |i: usize| -> Result<Option<f64>> {
            Ok(if rec[i].is_empty() { None } else { Some(rec[i].parse()?) })
        };
        rows.push(SweepRow {
            value: rec[0].parse()?,
            tran1: opt(1)?,
            tran2: opt(2)?,
            wall_time_s: rec[3].parse()?,
            seed: rec[4].parse()?,
            error: if rec[5].is_empty() { None } else { Some(rec[5].to_string()) },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::run_pipeline;

    fn template() -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "pipeline": "coin-general", "n": 2, "k": 2, "K": 8, "nk": 5000, "seed": 2,
            "mixture": {"kind": "kspike-unit-interval", "n": 2, "k": 2,
                        "spikes": [{"point": [0.3], "weight": 0.5}, {"point": [0.7], "weight": 0.5}]}
        }))
        .unwrap()
    }

    #[test]
    fn rows_sorted_and_complete() {
        let rows = sweep(&template(), "K", &[16.0, 4.0, 8.0], true);
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![4.0, 8.0, 16.0]);
        assert!(rows.iter().all(|r| r.error.is_none() && r.tran1.is_some()));
    }

    #[test]
    fn single_value_matches_run() {
        let t = template();
        let rows = sweep(&t, "K", &[8.0], false);
        let rep = run_pipeline(&t, &generate_for(&t).unwrap()).unwrap();
        assert_eq!(rows[0].tran1, rep.tran1);
        assert_eq!(rows[0].tran2, rep.tran2);
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&sweep(&template(), "K", &[], false), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "value,tran1,tran2,wall_time_s,seed,error\n");
    }

    #[test]
    fn failures_become_rows() {
        let rows = sweep(&template(), "epsilon", &[0.5, 2.0], false);
        assert!(rows[0].error.is_none());
        assert!(rows[1].error.is_some());
        assert!(with_axis(&template(), "K", 2.5).is_err());
        assert!(with_axis(&template(), "pipeline", 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = sweep(&template(), "K", &[4.0, 8.0], false);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}
