//! CSV output of round records and run summaries.

use std::io::{Read, Write};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::run::{RoundRecord, RunTrace};
use crate::harness::sweep::SweepRun;

pub const ROUND_COLUMNS: [&str; 10] = [
    "run_id",
    "seed",
    "t",
    "gap",
    "grad_norm_sq",
    "byz_fraction",
    "cost",
    "level",
    "failsafe",
    "dynamic_round",
];

/// Round-trippable float formatting.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn axis_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes one row per round of every trace, in the given order.
pub fn write_rounds<W: Write>(out: W, runs: &[(usize, &RunTrace)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROUND_COLUMNS)?;
    for &(run_id, trace) in runs {
        if trace.rounds.is_empty() {
            return Err(Error::Empty("trace rounds"));
        }
        for r in &trace.rounds {
            w.write_record([
                run_id.to_string(),
                trace.seed.to_string(),
                r.t.to_string(),
                float(r.gap),
                float(r.grad_norm_sq),
                float(r.byz_fraction),
                r.cost.to_string(),
                r.level.to_string(),
                u8::from(r.failsafe).to_string(),
                u8::from(r.dynamic_round).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A parsed row of [`write_rounds`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub run_id: usize,
    pub seed: u64,
    pub record: RoundRecord,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::invalid(format!("missing column {}", ROUND_COLUMNS[i])))?;
    raw.parse()
        .map_err(|_| Error::invalid(format!("bad value `{raw}` in column {}", ROUND_COLUMNS[i])))
}

fn flag(rec: &csv::StringRecord, i: usize) -> Result<bool> {
    Ok(field::<u8>(rec, i)? != 0)
}

pub fn read_rounds<R: Read>(input: R) -> Result<Vec<RoundRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(ROUND_COLUMNS) {
        return Err(Error::invalid("unexpected round CSV header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(RoundRow {
            run_id: field(&rec, 0)?,
            seed: field(&rec, 1)?,
            record: RoundRecord {
                t: field(&rec, 2)?,
                gap: field(&rec, 3)?,
                grad_norm_sq: field(&rec, 4)?,
                byz_fraction: field(&rec, 5)?,
                cost: field(&rec, 6)?,
                level: field(&rec, 7)?,
                failsafe: flag(&rec, 8)?,
                dynamic_round: flag(&rec, 9)?,
            },
        });
    }
    Ok(rows)
}

/// One row per sweep run: axis values, then the run summary.
pub fn write_summary<W: Write>(out: W, runs: &[SweepRun]) -> Result<()> {
    let first = runs.first().ok_or(Error::Empty("sweep runs"))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["run_id".into(), "seed".into(), "replicate".into()];
    header.extend(first.point.axes.iter().map(|(p, _)| p.clone()));
    header.extend(
        [
            "avg_grad_norm_sq",
            "min_gap",
            "final_gap",
            "total_cost",
            "failsafe_count",
            "dynamic_rounds",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for run in runs {
        if run.trace.rounds.is_empty() {
            return Err(Error::Empty("trace rounds"));
        }
        let s = run.trace.summary();
        let mut row = vec![
            run.point.run_id.to_string(),
            run.trace.seed.to_string(),
            run.point.replicate.to_string(),
        ];
        row.extend(run.point.axes.iter().map(|(_, v)| axis_text(v)));
        row.extend([
            float(s.avg_grad_norm_sq),
            float(s.min_gap),
            float(s.final_gap),
            s.total_cost.to_string(),
            s.failsafe_count.to_string(),
            s.dynamic_rounds.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
