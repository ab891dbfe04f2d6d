//! Run-level summaries computed from a trace alone.

use crate::agent::{variety_reduction, Verdict};
use crate::config::RunConfig;
use crate::environment::SimpleEvent;
use crate::error::{Result, SimError};
use crate::trace::{DissipationReason, RecordBody, TraceRecord, VerdictEntry};
use crate::types::{AgentId, CoalitionId, MemberId, Outcome, Signature, Tick};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const REPORT_FORMAT: &str = "cogsim-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub ticks: u64,
    pub max_scale: u32,
    pub series: Vec<TickMetrics>,
    pub coalitions: Vec<CoalitionSummary>,
    /// One point per newly seen (signature, scale) pair.
    pub novelty: Vec<NoveltyPoint>,
    /// Agents that never joined a coalition, so their context never changed.
    pub trivial_agents: Vec<AgentId>,
    pub recall: RecallStats,
    pub requisite_variety: RequisiteVariety,
    pub symmetry: SymmetryStats,
    pub max_depth: u32,
    pub promotions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickMetrics {
    pub tick: Tick,
    /// Mean over the tick's attend calls; absent when nothing was attended.
    pub mean_variety_reduction: Option<f64>,
    /// Indexed by scale.
    pub live_coalitions: Vec<usize>,
    pub mean_strength: Vec<Option<f64>>,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoalitionSummary {
    pub coalition_id: CoalitionId,
    pub scale: u32,
    pub signature: Signature,
    pub members: Vec<MemberId>,
    pub formed_at: Tick,
    pub activations: u64,
    pub last_activated: Option<Tick>,
    pub strength_at_last_activation: Option<f64>,
    pub dissipated_at: Option<Tick>,
    pub dissipation: Option<DissipationReason>,
    /// Ticks from the last activation until the mean strength first fell to
    /// the midpoint between its value then and the baseline.
    pub half_life: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoveltyPoint {
    pub tick: Tick,
    pub scale: u32,
    pub signature: Signature,
    pub distinct: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallStats {
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessCount {
    pub scored: u64,
    pub successes: u64,
    pub rate: Option<f64>,
}

impl SuccessCount {
    fn add(&mut self, success: bool) {
        self.scored += 1;
        self.successes += u64::from(success);
        self.rate = Some(self.successes as f64 / self.scored as f64);
    }
}

/// Coordinated-vote success against what each participant would have done alone.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RequisiteVariety {
    pub coalition: SuccessCount,
    pub members: BTreeMap<MemberId, SuccessCount>,
    pub best_member_rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymmetryStats {
    pub attend_calls: u64,
    /// Calls whose post-selection partition was strictly coarser than the input.
    pub broken: u64,
    pub min_variety_reduction: Option<f64>,
}

struct Tracked {
    summary: CoalitionSummary,
    live: bool,
    mean: f64,
    half_target: Option<f64>,
}

/// Computes the report. The trace must start with its header.
pub fn analyze(records: &[TraceRecord]) -> Result<MetricsReport> {
    let config = records
        .first()
        .and_then(TraceRecord::header_config)
        .ok_or_else(|| SimError::Trace { line: 1, message: "missing or invalid header".into() })?;
    let t0 = config.parameters.t0;
    let n_scales = config.parameters.max_scale as usize;

    let mut coalitions: BTreeMap<CoalitionId, Tracked> = BTreeMap::new();
    let mut series = Vec::with_capacity(config.ticks as usize);
    let mut novelty = Vec::new();
    let mut seen: BTreeSet<(u32, Signature)> = BTreeSet::new();
    let mut ever_member: BTreeSet<MemberId> = BTreeSet::new();
    let mut recall = RecallStats::default();
    let mut rv = RequisiteVariety::default();
    let mut symmetry = SymmetryStats::default();
    let mut promotions = 0;

    let mut idx = 1;
    for tick in 0..config.ticks {
        let mut reductions = Vec::new();
        while let Some(rec) = records.get(idx).filter(|r| r.tick == tick) {
            idx += 1;
            match &rec.body {
                RecordBody::Verdict { verdicts, .. } => {
                    let vr = verdict_reduction(verdicts, tick)?;
                    symmetry.attend_calls += 1;
                    symmetry.broken += u64::from(vr > 0.0);
                    symmetry.min_variety_reduction =
                        Some(symmetry.min_variety_reduction.map_or(vr, |m: f64| m.min(vr)));
                    reductions.push(vr);
                }
                RecordBody::CoalitionFormed { coalition_id, signature, members, strength } => {
                    ever_member.extend(members.iter().copied());
                    if seen.insert((rec.scale, signature.clone())) {
                        novelty.push(NoveltyPoint {
                            tick,
                            scale: rec.scale,
                            signature: signature.clone(),
                            distinct: seen.len(),
                        });
                    }
                    coalitions.insert(
                        *coalition_id,
                        Tracked {
                            summary: CoalitionSummary {
                                coalition_id: *coalition_id,
                                scale: rec.scale,
                                signature: signature.clone(),
                                members: members.clone(),
                                formed_at: tick,
                                activations: 0,
                                last_activated: None,
                                strength_at_last_activation: None,
                                dissipated_at: None,
                                dissipation: None,
                                half_life: None,
                            },
                            live: true,
                            mean: *strength,
                            half_target: None,
                        },
                    );
                }
                RecordBody::Activated { coalition_id, mean_strength, outcome, expected, intentions, .. } => {
                    let c = tracked(&mut coalitions, *coalition_id, idx)?;
                    c.summary.activations += 1;
                    c.summary.last_activated = Some(tick);
                    c.summary.strength_at_last_activation = Some(*mean_strength);
                    c.summary.half_life = None;
                    c.mean = *mean_strength;
                    c.half_target = Some((mean_strength + t0) / 2.0);
                    if *outcome != Outcome::Unscored {
                        rv.coalition.add(*outcome == Outcome::Success);
                        for (m, intention) in intentions {
                            let alone = expected.is_some() && intention == expected;
                            rv.members.entry(*m).or_default().add(alone);
                        }
                    }
                }
                RecordBody::Decayed { coalitions: batch } => {
                    for (id, mean) in batch {
                        let c = tracked(&mut coalitions, *id, idx)?;
                        c.mean = *mean;
                        if let (Some(target), Some(last), None) =
                            (c.half_target, c.summary.last_activated, c.summary.half_life)
                        {
                            if *mean <= target {
                                c.summary.half_life = Some(tick - last);
                            }
                        }
                    }
                }
                RecordBody::Dissipated { coalition_id, mean_strength, reason } => {
                    let c = tracked(&mut coalitions, *coalition_id, idx)?;
                    c.live = false;
                    c.mean = *mean_strength;
                    c.summary.dissipated_at = Some(tick);
                    c.summary.dissipation = Some(*reason);
                }
                RecordBody::Promoted { .. } => promotions += 1,
                RecordBody::RecallHit { .. } => recall.hits += 1,
                RecordBody::RecallMiss { .. } => recall.misses += 1,
                RecordBody::Header { .. } => {
                    return Err(SimError::Trace { line: idx, message: "second header".into() });
                }
                _ => {}
            }
        }

        let mut live = vec![0usize; n_scales];
        let mut sums = vec![0.0f64; n_scales];
        for c in coalitions.values().filter(|c| c.live) {
            let s = c.summary.scale as usize;
            if s < n_scales {
                live[s] += 1;
                sums[s] += c.mean;
            }
        }
        let depth = live.iter().rposition(|n| *n > 0).map_or(0, |s| s as u32 + 1);
        series.push(TickMetrics {
            tick,
            mean_variety_reduction: (!reductions.is_empty())
                .then(|| reductions.iter().sum::<f64>() / reductions.len() as f64),
            mean_strength: live.iter().zip(&sums).map(|(n, s)| (*n > 0).then(|| s / *n as f64)).collect(),
            live_coalitions: live,
            depth,
        });
    }
    if let Some(rec) = records.get(idx) {
        return Err(SimError::Trace {
            line: idx + 1,
            message: format!("record at tick {} beyond the configured {} ticks", rec.tick, config.ticks),
        });
    }

    recall.hit_rate = rate(recall.hits, recall.hits + recall.misses);
    rv.best_member_rate = rv.members.values().filter_map(|m| m.rate).reduce(f64::max);
    let trivial_agents = (0..config.population.agents.len() as AgentId)
        .filter(|a| !ever_member.contains(&MemberId::Agent(*a)))
        .collect();
    Ok(MetricsReport {
        format: REPORT_FORMAT.into(),
        ticks: config.ticks,
        max_scale: config.parameters.max_scale,
        max_depth: series.iter().map(|t| t.depth).max().unwrap_or(0),
        series,
        coalitions: coalitions
            .into_values()
            .map(|c| {
                let mut s = c.summary;
                if s.dissipated_at.is_none() {
                    s.half_life = None;
                }
                s
            })
            .collect(),
        novelty,
        trivial_agents,
        recall,
        requisite_variety: rv,
        symmetry,
        promotions,
    })
}

fn tracked(map: &mut BTreeMap<CoalitionId, Tracked>, id: CoalitionId, line: usize) -> Result<&mut Tracked> {
    map.get_mut(&id)
        .ok_or_else(|| SimError::Trace { line, message: format!("coalition {id} used before it was formed") })
}

fn rate(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn verdict_reduction(entries: &[VerdictEntry], tick: Tick) -> Result<f64> {
    let verdicts: Vec<Verdict<SimpleEvent, f64>> = entries
        .iter()
        .map(|e| Verdict {
            event: SimpleEvent::environment(e.event_type, tick),
            relevance: e.relevance,
            passed: e.passed,
        })
        .collect();
    variety_reduction(&verdicts)
}

impl MetricsReport {
    /// Canonical serialization: fixed field order, sorted maps, pretty-printed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `series.csv`, `coalitions.csv` and `novelty.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("series.csv"))?;
        let mut header = vec!["tick".to_string(), "mean_variety_reduction".into(), "depth".into()];
        for s in 0..self.max_scale {
            header.push(format!("live_scale{s}"));
            header.push(format!("strength_scale{s}"));
        }
        w.write_record(&header)?;
        for t in &self.series {
            let mut row = vec![t.tick.to_string(), opt(t.mean_variety_reduction), t.depth.to_string()];
            for (n, s) in t.live_coalitions.iter().zip(&t.mean_strength) {
                row.push(n.to_string());
                row.push(opt(*s));
            }
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("coalitions.csv"))?;
        w.write_record([
            "coalition_id",
            "scale",
            "signature",
            "formed_at",
            "activations",
            "last_activated",
            "dissipated_at",
            "half_life",
        ])?;
        for c in &self.coalitions {
            w.write_record([
                c.coalition_id.to_string(),
                c.scale.to_string(),
                c.signature.to_string(),
                c.formed_at.to_string(),
                c.activations.to_string(),
                opt(c.last_activated),
                opt(c.dissipated_at),
                opt(c.half_life),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("novelty.csv"))?;
        w.write_record(["tick", "scale", "signature", "distinct"])?;
        for p in &self.novelty {
            w.write_record([p.tick.to_string(), p.scale.to_string(), p.signature.to_string(), p.distinct.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads a trace file and analyzes it.
pub fn analyze_file(path: &Path) -> Result<MetricsReport> {
    analyze(&crate::trace::read_trace_file(path)?)
}

/// One-line summary used by sweeps.
pub fn summary_row(config: &RunConfig, report: &MetricsReport) -> Vec<(String, String)> {
    let final_live: usize = report.series.last().map_or(0, |t| t.live_coalitions.iter().sum());
    let vr: Vec<f64> = report.series.iter().filter_map(|t| t.mean_variety_reduction).collect();
    vec![
        ("seed".into(), config.seed.to_string()),
        ("ticks".into(), config.ticks.to_string()),
        ("coalitions_formed".into(), report.coalitions.len().to_string()),
        ("live_at_end".into(), final_live.to_string()),
        ("max_depth".into(), report.max_depth.to_string()),
        ("promotions".into(), report.promotions.to_string()),
        ("distinct_signatures".into(), report.novelty.len().to_string()),
        ("trivial_agents".into(), report.trivial_agents.len().to_string()),
        ("recall_hit_rate".into(), opt(report.recall.hit_rate)),
        ("coalition_success_rate".into(), opt(report.requisite_variety.coalition.rate)),
        ("best_member_success_rate".into(), opt(report.requisite_variety.best_member_rate)),
        ("mean_variety_reduction".into(), opt((!vr.is_empty()).then(|| vr.iter().sum::<f64>() / vr.len() as f64))),
    ]
}

pub type Partition<K> = Vec<BTreeSet<K>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    pub classes_before: usize,
    pub classes_after: usize,
    /// Every `before` block lies inside a single `after` block.
    pub is_coarsening: bool,
    pub symmetry_broken: bool,
}

/// Compares an input partition with the classes selection produced.
pub fn partition_refinement<K: Ord + Clone + std::fmt::Debug>(
    before: &Partition<K>,
    after: &Partition<K>,
) -> Result<Refinement> {
    let label = |p: &Partition<K>, which: &str| -> Result<BTreeMap<K, usize>> {
        let mut map = BTreeMap::new();
        for (i, block) in p.iter().enumerate() {
            for k in block {
                if map.insert(k.clone(), i).is_some() {
                    return Err(SimError::contract(format!("{which} partition lists {k:?} twice")));
                }
            }
        }
        Ok(map)
    };
    let b = label(before, "before")?;
    let a = label(after, "after")?;
    if !b.keys().eq(a.keys()) {
        return Err(SimError::contract("partitions cover different event sets"));
    }
    let is_coarsening = before
        .iter()
        .all(|block| block.iter().map(|k| a[k]).collect::<BTreeSet<_>>().len() <= 1);
    let classes_before = before.iter().filter(|b| !b.is_empty()).count();
    let classes_after = after.iter().filter(|b| !b.is_empty()).count();
    Ok(Refinement {
        classes_before,
        classes_after,
        is_coarsening,
        symmetry_broken: is_coarsening && classes_after < classes_before,
    })
}
