use cogsim_core::config::RunConfig;
use cogsim_core::sweep::{expand, sweep, Grid};
use cogsim_core::SimError;
use std::path::PathBuf;

fn base() -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reinforcement.json");
    RunConfig::load(&path).unwrap()
}

#[test]
fn invalid_cell_aborts_before_any_run() {
    let grid = Grid::from_json(r#"{"parameters.eta_c": [0.5, 1.5]}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    match sweep(&base(), &grid, &out, Some(2)) {
        Err(SimError::Validation { field, .. }) => assert_eq!(field, "cells[1].parameters.eta_c"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(!out.exists());
}

#[test]
fn cells_get_distinct_derived_seeds() {
    let grid = Grid::from_json(r#"{"parameters.delta": [0.01, 0.02, 0.03]}"#).unwrap();
    let cells = expand(&base(), &grid).unwrap();
    assert_eq!(cells.len(), 3);
    assert_eq!(cells[2].parameters.delta, 0.03);
    let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
    seeds.dedup();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let mut cfg = base();
    cfg.ticks = 60;
    let grid = Grid::from_json(r#"{"parameters.delta": [0.01, 0.1], "parameters.eta_c": [0.2, 0.5]}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let one = sweep(&cfg, &grid, &dir.path().join("one"), Some(1)).unwrap();
    let four = sweep(&cfg, &grid, &dir.path().join("four"), Some(4)).unwrap();
    assert_eq!(one.traces.len(), 4);
    assert_eq!(std::fs::read(&one.csv).unwrap(), std::fs::read(&four.csv).unwrap());
    let rows = std::fs::read_to_string(&one.csv).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(rows.lines().next().unwrap().starts_with("cell,parameters.delta,parameters.eta_c,"));
}
