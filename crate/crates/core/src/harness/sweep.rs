//! Grid sweeps over dotted config paths, run in parallel.

use rayon::prelude::*;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::run::{run_with_seed, RunTrace};
use crate::rng::child_seed;

/// One swept parameter: a dotted path into the config document and the
/// values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub path: String,
    pub values: Vec<Value>,
}

impl Axis {
    /// Parses `path=v1,v2,…`. Each value is read as JSON, falling back to a
    /// plain string.
    pub fn parse(spec: &str) -> Result<Self> {
        let (path, rest) = spec
            .split_once('=')
            .ok_or_else(|| Error::config("axis", format!("`{spec}` is not of the form path=v1,v2")))?;
        let path = path.trim();
        if path.is_empty() {
            return Err(Error::config("axis", "empty path"));
        }
        let values: Vec<Value> = split_values(rest)
            .into_iter()
            .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())))
            .collect();
        if values.is_empty() {
            return Err(Error::config("axis", format!("`{path}` has no values")));
        }
        Ok(Axis {
            path: path.to_string(),
            values,
        })
    }
}

/// Splits on commas that are not nested inside brackets or braces.
fn split_values(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|v| !v.is_empty());
    out
}

/// Writes `value` at a dotted path, creating intermediate objects.
/// Numeric segments index into arrays.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        let last = n + 1 == parts.len();
        cur = match cur {
            Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| Error::config(path, format!("`{part}` is not an array index")))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| Error::config(path, format!("index {i} out of range")))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(if last {
                Value::Null
            } else {
                Value::Object(Default::default())
            }),
            _ => return Err(Error::config(path, format!("cannot descend into `{part}`"))),
        };
    }
    *cur = value;
    Ok(())
}

/// Seed of replicate `s`: the master seed itself for `s = 0`, a derived
/// child seed otherwise. Replicates share seeds across grid points.
pub fn replicate_seed(master: u64, s: usize) -> u64 {
    if s == 0 {
        master
    } else {
        child_seed(master, s as u64)
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub run_id: usize,
    /// `(path, value)` of each axis at this point.
    pub axes: Vec<(String, Value)>,
    pub replicate: usize,
    pub config: RunConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub point: SweepPoint,
    pub trace: RunTrace,
}

/// Expands the grid: axis values in row-major order (last axis fastest),
/// replicates innermost. Every point is validated before anything runs.
pub fn expand(base: &RunConfig, axes: &[Axis], seeds: usize) -> Result<Vec<SweepPoint>> {
    if seeds == 0 {
        return Err(Error::config("seeds", "must be at least 1"));
    }
    let doc = serde_json::to_value(base)?;
    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for axis in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((axis.path.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let mut points = Vec::with_capacity(combos.len() * seeds);
    for combo in combos {
        let mut d = doc.clone();
        for (path, v) in &combo {
            set_path(&mut d, path, v.clone())?;
        }
        let config: RunConfig = serde_json::from_value(d)?;
        config.validate()?;
        for s in 0..seeds {
            points.push(SweepPoint {
                run_id: points.len(),
                axes: combo.clone(),
                replicate: s,
                seed: replicate_seed(config.seed, s),
                config: config.clone(),
            });
        }
    }
    Ok(points)
}

/// Worker threads: `BYZSIM_THREADS` if set to a positive integer, otherwise
/// rayon's default.
pub fn thread_count() -> Option<usize> {
    std::env::var("BYZSIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs every point; results come back ordered by `run_id` regardless of
/// scheduling.
pub fn run_points(points: Vec<SweepPoint>) -> Result<Vec<SweepRun>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        points
            .into_par_iter()
            .map(|point| {
                let trace = run_with_seed(&point.config, point.seed)?;
                Ok(SweepRun { point, trace })
            })
            .collect()
    })
}

pub fn sweep(base: &RunConfig, axes: &[Axis], seeds: usize) -> Result<Vec<SweepRun>> {
    run_points(expand(base, axes, seeds)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_axes() {
        let a = Axis::parse("lr.eta=0.1,0.01").unwrap();
        assert_eq!(a.path, "lr.eta");
        assert_eq!(a.values, vec![json!(0.1), json!(0.01)]);
        let b = Axis::parse("start=[1,2],[3,4]").unwrap();
        assert_eq!(b.values, vec![json!([1, 2]), json!([3, 4])]);
        let c = Axis::parse("aggregator.kind=cwmed,mean").unwrap();
        assert_eq!(c.values, vec![json!("cwmed"), json!("mean")]);
        assert!(Axis::parse("nothing").unwrap_err().is_config());
    }

    #[test]
    fn sets_nested_paths() {
        let mut doc = json!({"a": {"b": [1, 2]}});
        set_path(&mut doc, "a.b.1", json!(5)).unwrap();
        set_path(&mut doc, "a.c", json!(true)).unwrap();
        assert_eq!(doc, json!({"a": {"b": [1, 5], "c": true}}));
        assert!(set_path(&mut doc, "a.b.9", json!(0)).is_err());
    }

    #[test]
    fn expansion_order_and_seeds() {
        let base: RunConfig = serde_json::from_value(json!({
            "objective": {"kind": "quadratic", "a": [[2, 1], [1, 2]]},
            "noise": {"kind": "gaussian", "sigma": 0.1},
            "start": [1, 1],
            "workers": 4,
            "method": {"kind": "sgd"},
            "aggregator": {"kind": "mean"},
            "lr": {"kind": "fixed", "eta": 0.1},
            "horizon": 20,
            "seed": 9
        }))
        .unwrap();
        let axes = [
            Axis::parse("lr.eta=0.1,0.2").unwrap(),
            Axis::parse("workers=4,6,8").unwrap(),
        ];
        let pts = expand(&base, &axes, 2).unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0].seed, 9);
        assert_eq!(pts[1].seed, child_seed(9, 1));
        assert_eq!(pts[2].config.workers, 6);
        assert_eq!(pts[2].seed, 9);
        assert_eq!(pts[6].axes[0].1, json!(0.2));
        let runs = run_points(pts).unwrap();
        assert!(runs.iter().enumerate().all(|(i, r)| r.point.run_id == i));
        assert!(runs.iter().all(|r| r.trace.rounds.len() == 20));

        let bad = [Axis::parse("workers=0").unwrap()];
        assert!(expand(&base, &bad, 1).unwrap_err().is_config());
    }
}
