//! Parameter sweeps: a grid of dotted config paths, one run per cell.

use crate::config::RunConfig;
use crate::engine;
use crate::error::{Result, SimError};
use crate::metrics::{analyze_file, summary_row};
use crate::rng;
use rayon::prelude::*;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Maps a dotted path (`parameters.delta`, `environment.episodes.0.period`)
/// to the values it takes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(BTreeMap<String, Vec<Value>>);

impl Grid {
    pub fn from_json(text: &str) -> Result<Self> {
        let axes: BTreeMap<String, Vec<Value>> =
            serde_json::from_str(text).map_err(|e| SimError::validation("<grid>", e.to_string()))?;
        if axes.is_empty() {
            return Err(SimError::validation("<grid>", "grid has no axes"));
        }
        if let Some((k, _)) = axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(SimError::validation(k, "axis has no values"));
        }
        Ok(Grid(axes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Assignments of every cell, last axis varying fastest.
    pub fn cells(&self) -> Vec<Vec<(&str, &Value)>> {
        let mut out: Vec<Vec<(&str, &Value)>> = vec![Vec::new()];
        for (key, values) in &self.0 {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut cell = prefix.clone();
                        cell.push((key.as_str(), v));
                        cell
                    })
                })
                .collect();
        }
        out
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_string(), value);
                    return Ok(());
                }
                map.get_mut(*part).ok_or_else(|| SimError::validation(path, format!("no field `{part}`")))?
            }
            Value::Array(items) => {
                let idx: usize =
                    part.parse().map_err(|_| SimError::validation(path, format!("`{part}` is not an index")))?;
                let slot =
                    items.get_mut(idx).ok_or_else(|| SimError::validation(path, format!("index {idx} out of range")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(SimError::validation(path, format!("`{part}` is not inside an object or array"))),
        };
    }
    Err(SimError::validation(path, "empty path"))
}

/// Builds and validates every cell's configuration. Cell `i` runs with seed
/// `derive(base.seed, [i])`.
pub fn expand(base: &RunConfig, grid: &Grid) -> Result<Vec<RunConfig>> {
    let template = serde_json::to_value(base)?;
    grid.cells()
        .into_iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut doc = template.clone();
            for (path, v) in cell {
                set_path(&mut doc, path, v.clone())?;
            }
            let mut cfg: RunConfig = serde_json::from_value(doc)
                .map_err(|e| SimError::validation(format!("cells[{i}]"), e.to_string()))?;
            cfg.seed = rng::derive(base.seed, &[i as u64]);
            cfg.validate().map_err(|e| match e {
                SimError::Validation { field, message } => {
                    SimError::validation(format!("cells[{i}].{field}"), message)
                }
                other => other,
            })?;
            Ok(cfg)
        })
        .collect()
}

type Row = Vec<(String, String)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepSummary {
    pub traces: Vec<PathBuf>,
    pub csv: PathBuf,
}

/// Runs every cell on a pool of `threads` workers (all cores when `None`) and
/// writes `cell_NNNN.jsonl` traces plus `metrics.csv` into `out`. All cells are
/// validated before any run starts; CSV rows are in cell order.
pub fn sweep(base: &RunConfig, grid: &Grid, out: &Path, threads: Option<usize>) -> Result<SweepSummary> {
    let configs = expand(base, grid)?;
    std::fs::create_dir_all(out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| SimError::contract(format!("thread pool: {e}")))?;
    let rows: Vec<Result<(PathBuf, Row)>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let path = out.join(format!("cell_{i:04}.jsonl"));
                let run = engine::run(cfg, &path)?;
                let report = analyze_file(&path)?;
                let mut row = summary_row(cfg, &report);
                row.push(("trace_digest".into(), run.digest));
                Ok((path, row))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let csv_path = out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let cells = grid.cells();
    let mut header = vec!["cell".to_string()];
    header.extend(grid.0.keys().cloned());
    if let Some((_, row)) = rows.first() {
        header.extend(row.iter().map(|(k, _)| k.clone()));
    }
    w.write_record(&header)?;
    for (i, ((_, row), cell)) in rows.iter().zip(&cells).enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(cell.iter().map(|(_, v)| v.to_string()));
        rec.extend(row.iter().map(|(_, v)| v.clone()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(SweepSummary { traces: rows.into_iter().map(|(p, _)| p).collect(), csv: csv_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_are_the_cartesian_product_in_key_order() {
        let g = Grid::from_json(r#"{"parameters.delta": [0.01, 0.05], "parameters.eta_c": [0.2, 0.3, 0.4]}"#).unwrap();
        let cells = g.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0][0].0, "parameters.delta");
        assert_eq!(cells[1][1].1, &serde_json::json!(0.3));
    }

    #[test]
    fn empty_grids_are_rejected() {
        assert!(Grid::from_json("{}").unwrap_err().is_validation());
        assert!(Grid::from_json(r#"{"parameters.delta": []}"#).unwrap_err().is_validation());
    }

    #[test]
    fn set_path_walks_objects_and_arrays() {
        let mut v = serde_json::json!({"a": {"b": [1, {"c": 2}]}});
        set_path(&mut v, "a.b.1.c", serde_json::json!(5)).unwrap();
        set_path(&mut v, "a.d", serde_json::json!(true)).unwrap();
        assert_eq!(v, serde_json::json!({"a": {"b": [1, {"c": 5}], "d": true}}));
        assert!(set_path(&mut v, "a.b.7", serde_json::json!(0)).is_err());
        assert!(set_path(&mut v, "x.y", serde_json::json!(0)).is_err());
    }
}
