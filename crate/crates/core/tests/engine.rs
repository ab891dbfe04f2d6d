use cogsim_core::config::RunConfig;
use cogsim_core::engine::{self, run_records, Simulation};
use cogsim_core::metrics::{analyze, analyze_file};
use cogsim_core::oracle::{predict, MAX_TICKS};
use cogsim_core::trace::{read_trace_file, RecordBody, TraceRecord};
use cogsim_core::types::Signature;
use cogsim_core::SimError;
use proptest::prelude::*;
use std::collections::BTreeSet;
use std::path::PathBuf;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> RunConfig {
    RunConfig::load(&configs_dir().join(format!("{name}.json"))).unwrap()
}

#[test]
fn zero_ticks_gives_header_only() {
    let mut cfg = config("default");
    cfg.ticks = 0;
    let records = run_records::<f64>(&cfg).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].header_config(), Some(cfg));
}

#[test]
fn trace_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let cfg = config("hierarchy");
    let summary = engine::run(&cfg, &path).unwrap();
    let from_file = read_trace_file(&path).unwrap();
    assert_eq!(from_file, run_records::<f64>(&cfg).unwrap());
    assert_eq!(summary.records, from_file.len());
    assert_eq!(summary.digest, cogsim_core::trace::digest(&std::fs::read(&path).unwrap()));
    assert!(!dir.path().join("t.partial").exists());
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut cfg = config("default");
    cfg.parameters.theta_att = 1.5;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    match engine::run(&cfg, &out) {
        Err(SimError::Validation { field, .. }) => assert_eq!(field, "parameters.theta_att"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(!out.exists());
}

#[test]
fn failed_write_leaves_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("t.jsonl");
    assert!(matches!(engine::run(&config("default"), &out), Err(SimError::Io(_))));
    assert!(!out.exists());
}

#[test]
fn report_is_deterministic_and_file_based() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let cfg = config("recall");
    engine::run(&cfg, &path).unwrap();
    let a = analyze_file(&path).unwrap().to_json();
    let b = analyze(&run_records::<f64>(&cfg).unwrap()).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn default_config_has_a_single_scale0_signature() {
    // Noise types nobody attends cannot enter a detection, so the only
    // reachable scale-0 signature is the episode's compound.
    let cfg = config("default");
    let attended_noise: Vec<u32> = cfg
        .effective_noise_types()
        .into_iter()
        .filter(|t| {
            cfg.population.agents.iter().any(|a| a.sensitivity.get(t).is_some_and(|w| *w >= cfg.parameters.theta_att))
        })
        .collect();
    assert!(attended_noise.is_empty());
    let expected = Signature::new(cfg.environment.episodes[0].sequence[0].signature.iter().copied());

    let rep = analyze(&run_records::<f64>(&cfg).unwrap()).unwrap();
    let scale0: Vec<&Signature> = rep.novelty.iter().filter(|p| p.scale == 0).map(|p| &p.signature).collect();
    assert_eq!(scale0, vec![&expected]);
    assert!(rep.trivial_agents.is_empty());
}

#[test]
fn half_life_matches_closed_form() {
    let cfg = config("forgetting");
    let rep = analyze(&run_records::<f64>(&cfg).unwrap()).unwrap();
    let c = &rep.coalitions[0];
    assert!(c.dissipated_at.is_some());
    let closed = (0.5f64.ln() / (1.0 - cfg.parameters.delta).ln()).ceil() as u64;
    let hl = c.half_life.unwrap();
    assert!(hl.abs_diff(closed) <= 1, "half-life {hl} vs {closed}");
}

#[test]
fn single_precision_backend_reproduces_the_structure() {
    let cfg = config("hierarchy");
    let signatures = |records: &[TraceRecord]| -> Vec<(u64, u32, Signature)> {
        records
            .iter()
            .filter_map(|r| match &r.body {
                RecordBody::CoalitionFormed { signature, .. } => Some((r.tick, r.scale, signature.clone())),
                _ => None,
            })
            .collect()
    };
    let wide = run_records::<f64>(&cfg).unwrap();
    let narrow = run_records::<f32>(&cfg).unwrap();
    assert_eq!(signatures(&wide), signatures(&narrow));
    let reinforcement = run_records::<f32>(&config("reinforcement")).unwrap();
    let first = reinforcement.iter().find_map(|r| match &r.body {
        RecordBody::Activated { mean_strength, .. } => Some(*mean_strength),
        _ => None,
    });
    assert!((first.unwrap() - 0.55).abs() < 1e-6);
}

/// Every config in the corpus the oracle accepts (truncated to its tick limit)
/// must agree with the engine: strengths exactly, timings within one tick.
#[test]
fn oracle_agrees_with_engine_on_the_corpus() {
    let mut checked = 0;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let mut cfg = RunConfig::load(&path).unwrap();
        cfg.ticks = cfg.ticks.min(MAX_TICKS);
        let Ok(oracle) = predict(&cfg) else { continue };
        checked += 1;
        let records = run_records::<f64>(&cfg).unwrap();
        let name = path.display();
        for oc in &oracle.coalitions {
            let formed = records.iter().find_map(|r| match &r.body {
                RecordBody::CoalitionFormed { coalition_id, signature, .. } if r.scale == 0 && *signature == oc.signature => {
                    Some((r.tick, *coalition_id))
                }
                _ => None,
            });
            let (tick, id) = formed.unwrap_or_else(|| panic!("{name}: engine never formed {}", oc.signature));
            assert!(tick.abs_diff(oc.formed_at) <= 1, "{name}: formation {tick} vs {}", oc.formed_at);

            let acts: Vec<(u64, Vec<f64>)> = records
                .iter()
                .filter_map(|r| match &r.body {
                    RecordBody::Activated { coalition_id, strengths, .. } if *coalition_id == id => {
                        Some((r.tick, strengths.values().copied().collect()))
                    }
                    _ => None,
                })
                .collect();
            assert_eq!(acts.len(), oc.activations.len(), "{name}: activation count for {}", oc.signature);
            for ((t, strengths), want) in acts.iter().zip(&oc.activations) {
                assert!(t.abs_diff(want.tick) <= 1, "{name}: activation at {t} vs {}", want.tick);
                for s in strengths {
                    assert_eq!(*s, want.strength, "{name}: strength at tick {t}");
                }
            }

            let dissipated = records.iter().find_map(|r| match &r.body {
                RecordBody::Dissipated { coalition_id, .. } if *coalition_id == id => Some(r.tick),
                _ => None,
            });
            match (dissipated, oc.dissipated_at) {
                (Some(a), Some(b)) => assert!(a.abs_diff(b) <= 1, "{name}: dissipation {a} vs {b}"),
                (a, b) => assert_eq!(a, b, "{name}: dissipation"),
            }
            let promoted = records.iter().find_map(|r| match &r.body {
                RecordBody::Promoted { coalition_id, .. } if *coalition_id == id => Some(r.tick),
                _ => None,
            });
            match (promoted, oc.promoted_at) {
                (Some(a), Some(b)) => assert!(a.abs_diff(b) <= 1, "{name}: promotion {a} vs {b}"),
                (a, b) => assert_eq!(a, b, "{name}: promotion"),
            }
        }
        let engine_scale0 = records
            .iter()
            .filter(|r| r.scale == 0 && matches!(r.body, RecordBody::CoalitionFormed { .. }))
            .count();
        assert_eq!(engine_scale0, oracle.coalitions.len(), "{name}: coalition count");
    }
    assert!(checked >= 4, "only {checked} oracle-eligible configs");
}

fn random_config(seed: u64, noise: f64, delta: f64, max_scale: u32, sens: Vec<Vec<(u32, f64)>>) -> RunConfig {
    let agents: Vec<serde_json::Value> = sens
        .iter()
        .map(|s| {
            let sensitivity: serde_json::Map<String, serde_json::Value> =
                s.iter().map(|(t, w)| (t.to_string(), serde_json::json!(w))).collect();
            let actions: serde_json::Map<String, serde_json::Value> =
                s.iter().map(|(t, _)| (t.to_string(), serde_json::json!({"8": 0.5, "9": 0.4}))).collect();
            serde_json::json!({"sensitivity": sensitivity, "action_table": actions})
        })
        .collect();
    let doc = serde_json::json!({
        "seed": seed,
        "ticks": 300,
        "environment": {
            "n_types": 10,
            "noise_rate": noise,
            "noise_types": [0, 1, 2, 3, 4, 5, 6, 7],
            "allow_noise_overlap": true,
            "episodes": [
                {"sequence": [{"signature": [1, 2], "window": 1}, {"signature": [3, 4], "window": 2}],
                 "period": 12, "gap": 2, "expected_response": [8, 9]},
                {"sequence": [{"signature": [5, 6, 7], "window": 2}], "period": 9, "gap": 1, "offset": 4,
                 "expected_response": [8]}
            ]
        },
        "population": {"agents": agents},
        "parameters": {"delta": delta, "max_scale": max_scale, "theta_promote": 0.6, "n_promote": 3,
                        "intent_mode": {"mode": "softmax", "temperature": 0.2}}
    });
    RunConfig::from_json(&doc.to_string()).unwrap()
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        any::<u64>(),
        0.0f64..0.3,
        0.005f64..0.2,
        1u32..4,
        proptest::collection::vec(proptest::collection::vec((1u32..8, 0.4f64..1.0), 1..4), 2..6),
    )
        .prop_map(|(seed, noise, delta, max_scale, sens)| random_config(seed, noise, delta, max_scale, sens))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn records_follow_phase_order(cfg in arb_config()) {
        let records = run_records::<f64>(&cfg).unwrap();
        prop_assert!(records.windows(2).all(|w| w[0].order_key() <= w[1].order_key()));
        prop_assert!(records.iter().all(|r| r.tick < cfg.ticks || r.body.kind() == "Header"));
    }

    #[test]
    fn same_seed_same_trace(cfg in arb_config()) {
        let a: Vec<String> = run_records::<f64>(&cfg).unwrap().iter().map(TraceRecord::to_line).collect();
        let b: Vec<String> = run_records::<f64>(&cfg).unwrap().iter().map(TraceRecord::to_line).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn report_invariants(cfg in arb_config()) {
        let rep = analyze(&run_records::<f64>(&cfg).unwrap()).unwrap();
        prop_assert!(rep.novelty.windows(2).all(|w| w[0].distinct < w[1].distinct && w[0].tick <= w[1].tick));
        prop_assert!(rep.max_depth <= cfg.parameters.max_scale);
        prop_assert!(rep.series.iter().all(|t| t.mean_variety_reduction.is_none_or(|v| v >= 0.0)));
        prop_assert_eq!(rep.series.len() as u64, cfg.ticks);
        let seen: BTreeSet<(u32, &Signature)> = rep.coalitions.iter().map(|c| (c.scale, &c.signature)).collect();
        prop_assert_eq!(seen.len(), rep.novelty.len());
    }

    #[test]
    fn strengths_stay_in_unit_interval(cfg in arb_config()) {
        let mut sim = Simulation::<f64>::new(&cfg).unwrap();
        let mut sink = Vec::new();
        for _ in 0..cfg.ticks {
            sim.step(&mut sink).unwrap();
        }
        for c in sim.registry().iter() {
            for s in c.strengths.values() {
                prop_assert!((0.0..=1.0).contains(s));
            }
            prop_assert!(c.scale < cfg.parameters.max_scale);
        }
    }
}
