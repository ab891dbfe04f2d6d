//! The deterministic per-tick run loop.
//!
//! Each tick applies scheduled episode switches, then processes the scales
//! bottom-up. Within a scale the phases run in a fixed order:
//! emit, attend, detect, form/rejoin, conflict, activate, dismantle, decay,
//! promote, memory. The signatures detected at scale `k` are the events that
//! super-agents at scale `k + 1` attend in the same tick.

use crate::agent::{attend, intend, learn, AgentContext, IntentMode};
use crate::coalition::{
    action_complete, activate, coordinated_action, Coalition, decay_scale, dismantle, dissipate, resolve_conflict,
    CoalitionState, Detection, Formation, JointDetector, LifecycleParams, Registry,
};
use crate::config::{RunConfig, ScheduleAction};
use crate::environment::{Environment, EventSource, SimpleEvent};
use crate::error::{Result, SimError};
use crate::hierarchy::{super_attend, Hierarchy, HierarchyParams, MemoryEvent};
use crate::rng;
use crate::scalar::Scalar;
use crate::trace::{DissipationReason, RecordBody, RecordSink, TraceRecord, TraceWriter, VerdictEntry};
use crate::types::{ActionType, CoalitionId, EventType, MemberId, Outcome, Signature, SuperId, Tick};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub struct Simulation<S> {
    config: RunConfig,
    lifecycle: LifecycleParams<S>,
    hierarchy_params: HierarchyParams<S>,
    theta_att: S,
    theta_act: S,
    eta_a: S,
    intent_mode: IntentMode,
    env: Environment,
    agents: Vec<AgentContext<S>>,
    registry: Registry<S>,
    hierarchy: Hierarchy<S>,
    detectors: Vec<JointDetector>,
    joining: ChaCha8Rng,
    intention: ChaCha8Rng,
    echoes: Vec<SimpleEvent>,
    tick: Tick,
}

/// What one scale hands to the next within a tick.
#[derive(Default)]
struct LayerOutput {
    detections: Vec<Signature>,
    actions: BTreeMap<Signature, Option<ActionType>>,
}

struct Vote {
    member: MemberId,
    focus: Option<EventType>,
    intention: Option<ActionType>,
}

impl<S: Scalar> Simulation<S> {
    /// Validates the configuration and builds the initial state.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let p = &config.parameters;
        let env = Environment::new(
            config.environment.episodes.iter().map(|e| e.to_episode()).collect(),
            config.environment.noise_rate,
            config.effective_noise_types(),
            config.environment.n_types,
            config.seed,
        )?;
        let agents = config
            .population
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut ctx = AgentContext::new(i as u32, p.recent_capacity, a.capacity_limit.unwrap_or(p.capacity))
                    .with_sensitivity(a.sensitivity.iter().map(|(t, w)| (*t, S::of(*w))));
                for (t, row) in &a.action_table {
                    ctx = ctx.with_actions(*t, row.iter().map(|(act, w)| (*act, S::of(*w))));
                }
                ctx
            })
            .collect();
        Ok(Simulation {
            lifecycle: p.lifecycle(),
            hierarchy_params: p.hierarchy(),
            theta_att: S::of(p.theta_att),
            theta_act: S::of(p.theta_act),
            eta_a: S::of(p.eta_a),
            intent_mode: p.intent_mode,
            env,
            agents,
            registry: Registry::new(),
            hierarchy: Hierarchy::new(),
            detectors: (0..p.max_scale).map(|k| JointDetector::new(config.window_at(k))).collect(),
            joining: rng::substream(config.seed, rng::JOINING),
            intention: rng::substream(config.seed, rng::INTENTION),
            echoes: Vec::new(),
            tick: 0,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn agents(&self) -> &[AgentContext<S>] {
        &self.agents
    }

    pub fn registry(&self) -> &Registry<S> {
        &self.registry
    }

    pub fn hierarchy(&self) -> &Hierarchy<S> {
        &self.hierarchy
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn header(&self) -> TraceRecord {
        TraceRecord::header(&self.config)
    }

    fn capacity_of(agents: &[AgentContext<S>], default: usize, m: MemberId) -> usize {
        match m {
            MemberId::Agent(id) => agents.get(id as usize).map_or(default, |a| a.capacity_limit),
            MemberId::Super(_) => default,
        }
    }

    fn member_exists(&self, m: MemberId) -> bool {
        match m {
            MemberId::Agent(id) => (id as usize) < self.agents.len(),
            MemberId::Super(id) => self.hierarchy.get(id).is_some(),
        }
    }

    /// Runs one tick, streaming its records into `sink`.
    pub fn step(&mut self, sink: &mut dyn RecordSink) -> Result<()> {
        let t = self.tick;
        for entry in self.config.schedule.iter().filter(|s| s.tick == t) {
            match entry.action {
                ScheduleAction::Deactivate => self.env.deactivate_episode(entry.episode)?,
                ScheduleAction::Activate => self.env.activate_episode(entry.episode, t)?,
            }
        }
        let mut below = LayerOutput::default();
        for scale in 0..self.config.parameters.max_scale {
            below = self.layer(scale, &below, sink)?;
        }
        for c in self.registry.iter().filter(|c| c.scale == 0) {
            for (m, s) in &c.strengths {
                if let MemberId::Agent(id) = m {
                    self.agents[*id as usize].tendencies.insert(c.coalition_id, *s);
                }
            }
        }
        self.tick += 1;
        Ok(())
    }

    fn emit(&self, sink: &mut dyn RecordSink, scale: u32, body: RecordBody) -> Result<()> {
        sink.record(TraceRecord { tick: self.tick, scale, body })
    }

    fn layer(&mut self, scale: u32, below: &LayerOutput, sink: &mut dyn RecordSink) -> Result<LayerOutput> {
        let t = self.tick;

        // emit + attend
        let mut passed_by_super: BTreeMap<SuperId, Vec<Signature>> = BTreeMap::new();
        if scale == 0 {
            let mut events = self.env.emit_events(t);
            events.extend(self.echoes.drain(..).filter(|e| e.tick == t));
            for e in &events {
                self.emit(sink, 0, RecordBody::Event { event_type: e.event_type, source: e.source })?;
            }
            if !events.is_empty() {
                for i in 0..self.agents.len() {
                    let verdicts = attend(&mut self.agents[i], &events, self.theta_att);
                    let unit = MemberId::Agent(i as u32);
                    for v in verdicts.iter().filter(|v| v.passed) {
                        self.detectors[0].observe(unit, v.event.event_type, t);
                    }
                    let entries = verdicts
                        .iter()
                        .map(|v| VerdictEntry {
                            event_type: v.event.event_type,
                            relevance: v.relevance.to_f64_lossy(),
                            passed: v.passed,
                        })
                        .collect();
                    self.emit(sink, 0, RecordBody::Verdict { unit, verdicts: entries })?;
                }
            }
        } else if !below.detections.is_empty() {
            for sig in &below.detections {
                self.hierarchy.symbols(scale).intern(sig);
            }
            for id in self.hierarchy.ids_at(scale) {
                let sa = self.hierarchy.get_mut(id).expect("listed super-agent");
                let verdicts = super_attend(sa, &below.detections, self.theta_att);
                let unit = MemberId::Super(id);
                let table = self.hierarchy.symbols(scale);
                let mut entries = Vec::with_capacity(verdicts.len());
                for v in &verdicts {
                    let symbol = table.intern(&v.event);
                    entries.push(VerdictEntry { event_type: symbol, relevance: v.relevance.to_f64_lossy(), passed: v.passed });
                    if v.passed {
                        self.detectors[scale as usize].observe(unit, symbol, t);
                        passed_by_super.entry(id).or_default().push(v.event.clone());
                    }
                }
                self.emit(sink, scale, RecordBody::Verdict { unit, verdicts: entries })?;
            }
        }

        // detect
        let known = self.registry.triggers_at(scale);
        let detections = self.detectors[scale as usize].close(t, &known);
        let mut out = LayerOutput::default();
        for d in &detections {
            self.emit(
                sink,
                scale,
                RecordBody::CandidateDetected {
                    signature: d.signature.clone(),
                    involved: d.involved.iter().copied().collect(),
                    novel: d.novel,
                },
            )?;
            out.detections.push(d.signature.clone());
        }

        // form / rejoin
        let mut triggered: Vec<(CoalitionId, &Detection)> = Vec::new();
        for d in &detections {
            let agents = &self.agents;
            let default_cap = self.lifecycle.capacity;
            let formation = self.registry.form_or_rejoin(
                d,
                scale,
                |m| Self::capacity_of(agents, default_cap, m),
                &self.lifecycle,
                t,
                &mut self.joining,
            );
            match formation {
                Formation::Formed(id) => {
                    let c = self.registry.get(id).expect("just formed");
                    self.emit(
                        sink,
                        scale,
                        RecordBody::CoalitionFormed {
                            coalition_id: id,
                            signature: c.trigger.clone(),
                            members: c.members.iter().copied().collect(),
                            strength: self.lifecycle.t0.to_f64_lossy(),
                        },
                    )?;
                    triggered.push((id, d));
                }
                Formation::Rejoined(id) => triggered.push((id, d)),
                Formation::Discarded => {}
            }
        }

        // conflict
        let mut demands: BTreeMap<MemberId, Vec<CoalitionId>> = BTreeMap::new();
        for (id, _) in &triggered {
            let c = self.registry.get(*id).expect("triggered coalition");
            for m in c.members.iter().filter(|m| self.member_exists(**m)) {
                demands.entry(*m).or_default().push(*id);
            }
        }
        let mut participants: BTreeMap<CoalitionId, BTreeSet<MemberId>> = BTreeMap::new();
        for (m, cids) in &demands {
            // A unit keeps the coalitions it is already bound to and takes new
            // ones only into free slots, best first.
            let bound: Vec<CoalitionId> = self
                .registry
                .iter()
                .filter(|c| c.state == CoalitionState::Active && c.engaged.contains(m))
                .map(|c| c.coalition_id)
                .collect();
            let cap = Self::capacity_of(&self.agents, self.lifecycle.capacity, *m);
            let free = cap.saturating_sub(bound.len());
            let mut winners: Vec<CoalitionId> = cids.iter().copied().filter(|id| bound.contains(id)).collect();
            let mut remaining: Vec<&Coalition<S>> =
                cids.iter().filter(|id| !bound.contains(id)).filter_map(|id| self.registry.get(*id)).collect();
            for _ in 0..free {
                let Some(w) = resolve_conflict(*m, &remaining) else { break };
                let w = w.coalition_id;
                remaining.retain(|c| c.coalition_id != w);
                winners.push(w);
            }
            if winners.len() < cids.len() {
                winners.sort_unstable();
                self.emit(sink, scale, RecordBody::ConflictResolved { unit: *m, contenders: cids.clone(), winners: winners.clone() })?;
            }
            for w in winners {
                participants.entry(w).or_default().insert(*m);
            }
        }

        // activate
        let mut activated = Vec::new();
        for (id, _) in &triggered {
            let parts = participants.remove(id).unwrap_or_default();
            if parts.len() < 2 {
                continue;
            }
            let trigger = self.registry.get(*id).expect("triggered coalition").trigger.clone();
            let votes: Vec<Vote> = parts.iter().map(|m| self.vote(*m, scale, &trigger)).collect();
            let c = self.registry.get(*id).expect("triggered coalition");
            let ballots: Vec<_> = votes.iter().map(|v| (v.member, v.intention, c.strength(v.member))).collect();
            let action = coordinated_action(&ballots);
            let step = if scale == 0 { self.env.locate(&trigger) } else { None };
            let (outcome, expected) = match step {
                Some((ep, j)) => (self.env.score_response(ep, j, action)?, self.env.expected(ep, j)),
                None => (Outcome::Unscored, None),
            };
            let c = self.registry.get_mut(*id).expect("triggered coalition");
            activate(c, &parts, action, outcome, &self.lifecycle, t)?;
            let record = RecordBody::Activated {
                coalition_id: *id,
                signature: trigger.clone(),
                participants: parts.iter().copied().collect(),
                strengths: c.strengths.iter().map(|(m, s)| (*m, s.to_f64_lossy())).collect(),
                mean_strength: c.mean_strength().to_f64_lossy(),
                action,
                outcome,
                expected,
                intentions: votes.iter().map(|v| (v.member, v.intention)).collect(),
            };
            let strengths = c.strengths.clone();
            self.emit(sink, scale, record)?;

            if scale == 0 {
                for v in &votes {
                    let (MemberId::Agent(aid), Some(focus), Some(a)) = (v.member, v.focus, action) else { continue };
                    if outcome != Outcome::Unscored {
                        learn(&mut self.agents[aid as usize], focus, a, outcome, self.eta_a);
                    }
                }
                if let (true, Some(a)) = (self.config.environment.echo_actions, action) {
                    for m in &parts {
                        if let MemberId::Agent(aid) = m {
                            self.echoes.push(SimpleEvent { event_type: a, tick: t + 1, source: EventSource::AgentAction(*aid) });
                        }
                    }
                }
            }
            if let Some(sid) = self.hierarchy.for_origin(*id) {
                let sa = self.hierarchy.get_mut(sid).expect("indexed super-agent");
                sa.last_response = action;
                sa.joint_context.tendencies = strengths;
            }
            out.actions.insert(trigger.clone(), action);
            activated.push(*id);
        }

        // dismantle
        let duration = self.lifecycle.action_duration;
        let finished: Vec<CoalitionId> = self
            .registry
            .live_at(scale)
            .filter(|c| action_complete(c, t, duration))
            .map(|c| c.coalition_id)
            .collect();
        for id in finished {
            dismantle(self.registry.get_mut(id).expect("listed coalition"))?;
            self.emit(sink, scale, RecordBody::Dismantled { coalition_id: id })?;
        }

        // decay
        let mut orphaned = Vec::new();
        if scale > 0 {
            let gone: Vec<(CoalitionId, Vec<MemberId>)> = self
                .registry
                .live_at(scale)
                .map(|c| (c.coalition_id, c.members.iter().copied().filter(|m| !self.member_exists(*m)).collect::<Vec<_>>()))
                .filter(|(_, g)| !g.is_empty())
                .collect();
            for (id, members) in gone {
                let c = self.registry.get_mut(id).expect("listed coalition");
                for m in members {
                    c.remove_member(m);
                }
                if c.members.len() < 2 {
                    dissipate(c);
                    orphaned.push((id, c.mean_strength().to_f64_lossy()));
                }
            }
        }
        let decay = decay_scale(&mut self.registry, &self.lifecycle, scale);
        if !decay.decayed.is_empty() {
            let coalitions = decay.decayed.iter().map(|(id, _, m)| (*id, m.to_f64_lossy())).collect();
            self.emit(sink, scale, RecordBody::Decayed { coalitions })?;
        }
        for (id, mean) in orphaned {
            self.emit(sink, scale, RecordBody::Dissipated { coalition_id: id, mean_strength: mean, reason: DissipationReason::MemberRetired })?;
        }
        for id in &decay.dissipated {
            let c = self.registry.get(*id).expect("dissipated coalition");
            let reason = if decay.stillborn.contains(id) { DissipationReason::Stillborn } else { DissipationReason::Forgotten };
            self.emit(sink, scale, RecordBody::Dissipated { coalition_id: *id, mean_strength: c.mean_strength().to_f64_lossy(), reason })?;
        }

        // promote
        let retiring: Vec<CoalitionId> = self
            .hierarchy
            .iter()
            .filter(|sa| sa.scale == scale + 1)
            .map(|sa| sa.origin_coalition)
            .filter(|cid| self.registry.get(*cid).is_none_or(|c| !c.is_live()))
            .collect();
        for cid in retiring {
            if let Some(sa) = self.hierarchy.retire(cid) {
                if let Some(d) = self.detectors.get_mut(sa.scale as usize) {
                    d.forget(MemberId::Super(sa.super_id));
                }
                self.emit(sink, scale, RecordBody::Retired { super_id: sa.super_id, coalition_id: cid })?;
            }
        }
        for id in activated {
            let c = self.registry.get(id).expect("activated coalition").clone();
            let agents = &self.agents;
            let hierarchy = &self.hierarchy;
            let profiles: BTreeMap<MemberId, BTreeMap<EventType, S>> = c
                .members
                .iter()
                .map(|m| {
                    let p = match m {
                        MemberId::Agent(aid) => agents[*aid as usize].sensitivity.clone(),
                        MemberId::Super(sid) => hierarchy.symbol_profile(*sid),
                    };
                    (*m, p)
                })
                .collect();
            if let Some(sid) = self.hierarchy.promote(&c, &self.hierarchy_params, |m| profiles[&m].clone()) {
                let symbol = self.hierarchy.symbols(scale + 1).intern(&c.trigger);
                self.emit(
                    sink,
                    scale,
                    RecordBody::Promoted { super_id: sid, coalition_id: id, super_scale: scale + 1, signature: c.trigger.clone(), symbol },
                )?;
            }
        }

        // memory
        if scale > 0 {
            for id in self.hierarchy.ids_at(scale) {
                let mut events = Vec::new();
                let sa = self.hierarchy.get_mut(id).expect("listed super-agent");
                for sig in passed_by_super.remove(&id).unwrap_or_default() {
                    let action = below.actions.get(&sig).copied().flatten();
                    events.extend(sa.episodic_memory.record(sig, action, t, &self.hierarchy_params));
                }
                events.extend(sa.episodic_memory.decay(t, &self.hierarchy_params));
                for e in events {
                    self.emit(sink, scale, memory_record(id, e))?;
                }
            }
        }
        Ok(out)
    }

    fn vote(&mut self, member: MemberId, scale: u32, trigger: &Signature) -> Vote {
        match member {
            MemberId::Agent(aid) => {
                let ctx = &self.agents[aid as usize];
                let focus = ctx.focus(trigger);
                let intention =
                    focus.and_then(|f| intend(ctx, f, self.theta_act, self.intent_mode, &mut self.intention));
                Vote { member, focus, intention }
            }
            MemberId::Super(sid) => {
                let profile = self.hierarchy.symbol_profile(sid);
                let focus = crate::agent::argmax_by_key(
                    trigger.types().iter().map(|s| (*s, profile.get(s).copied().unwrap_or_else(S::zero))),
                );
                let sig = focus.and_then(|f| self.hierarchy.symbols(scale).resolve(f).cloned());
                let intention = match (sig, self.hierarchy.get(sid)) {
                    (Some(sig), Some(sa)) => sa.intend(&sig),
                    _ => None,
                };
                Vote { member, focus, intention }
            }
        }
    }

    /// Number of Active coalitions holding `m`'s resources right now.
    pub fn engaged_count(&self, m: MemberId) -> usize {
        self.registry.engaged_count(m)
    }

    /// Current hierarchy depth: one more than the highest scale with a live coalition.
    pub fn depth(&self) -> u32 {
        self.registry.iter().filter(|c| c.is_live()).map(|c| c.scale + 1).max().unwrap_or(0)
    }

    /// Runs every remaining tick into `sink`, header first.
    pub fn run_into(mut self, sink: &mut dyn RecordSink) -> Result<Self> {
        if self.tick == 0 {
            sink.record(self.header())?;
        }
        while self.tick < self.config.ticks {
            self.step(sink)?;
        }
        Ok(self)
    }
}

fn memory_record<S: Scalar>(super_id: SuperId, e: MemoryEvent<S>) -> RecordBody {
    match e {
        MemoryEvent::Stored { trace_id, sequence, strength, reinforced } => {
            RecordBody::EpisodeStored { super_id, trace_id, sequence, strength: strength.to_f64_lossy(), reinforced }
        }
        MemoryEvent::Forgotten { trace_id, sequence } => RecordBody::EpisodeForgotten { super_id, trace_id, sequence },
        MemoryEvent::Recall { predicted, actual, hit: true } => RecordBody::RecallHit { super_id, predicted, actual },
        MemoryEvent::Recall { predicted, actual, hit: false } => RecordBody::RecallMiss { super_id, predicted, actual },
    }
}

/// Runs a configuration in memory and returns its records.
pub fn run_records<S: Scalar>(config: &RunConfig) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    Simulation::<S>::new(config)?.run_into(&mut records)?;
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub path: PathBuf,
    pub records: usize,
    /// Hex SHA-256 of the trace file.
    pub digest: String,
}

/// Runs a configuration and writes its trace to `out`. The trace is written
/// to a temporary sibling and renamed into place only on success.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    let sim = Simulation::<f64>::new(config)?;
    let tmp = out.with_extension("partial");
    let result = (|| {
        let file = std::fs::File::create(&tmp)?;
        let mut writer = TraceWriter::new(std::io::BufWriter::new(file));
        sim.run_into(&mut writer)?;
        let records = writer.count();
        let digest = writer.finish()?;
        std::fs::rename(&tmp, out)?;
        Ok(RunSummary { path: out.to_path_buf(), records, digest })
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(|e: SimError| e)
}
