//! Promotion of consolidated coalitions into super-agents, their gestalt
//! attention over lower-scale signatures, and their episodic memory.

use crate::agent::{rank, Verdict};
use crate::coalition::{reinforce, relax, Coalition};
use crate::scalar::Scalar;
use crate::types::{ActionType, CoalitionId, EventType, MemberId, Signature, SuperId, Tick};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HierarchyParams<S> {
    pub theta_promote: S,
    pub n_promote: u64,
    /// Number of coalition scales allowed; super-agents live at scales `1..max_scale`.
    pub max_scale: u32,
    /// Largest tick gap between two observations of the same episode.
    pub episode_gap: u64,
    pub t0: S,
    pub eta_c: S,
    pub delta: S,
    pub eps_diss: S,
}

/// Merged context of a super-agent's members.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct JointContext<S> {
    /// Per-type mean over the members that are sensitive to the type.
    pub sensitivity: BTreeMap<EventType, S>,
    /// The origin coalition's commitment strengths.
    pub tendencies: BTreeMap<MemberId, S>,
}

impl<S: Scalar> JointContext<S> {
    pub fn merge<'a>(
        profiles: impl IntoIterator<Item = &'a BTreeMap<EventType, S>>,
        tendencies: BTreeMap<MemberId, S>,
    ) -> Self {
        let mut sums: BTreeMap<EventType, (S, usize)> = BTreeMap::new();
        for p in profiles {
            for (t, w) in p {
                let e = sums.entry(*t).or_insert((S::zero(), 0));
                e.0 = e.0 + *w;
                e.1 += 1;
            }
        }
        let sensitivity = sums
            .into_iter()
            .map(|(t, (sum, n))| (t, sum / S::from_usize(n).unwrap_or_else(S::one)))
            .collect();
        JointContext { sensitivity, tendencies }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace<S> {
    pub trace_id: u64,
    pub sequence: Vec<Signature>,
    pub response_sequence: Vec<Option<ActionType>>,
    pub strength: S,
    pub last_seen: Tick,
}

impl<S> EpisodeTrace<S> {
    fn starts_with(&self, prefix: &[Signature]) -> bool {
        self.sequence.len() >= prefix.len() && self.sequence[..prefix.len()] == *prefix
    }
}

/// Something the episodic memory did while observing or decaying.
#[derive(Clone, Debug, PartialEq)]
pub enum MemoryEvent<S> {
    Stored { trace_id: u64, sequence: Vec<Signature>, strength: S, reinforced: bool },
    Forgotten { trace_id: u64, sequence: Vec<Signature> },
    Recall { predicted: Signature, actual: Signature, hit: bool },
}

/// Stored episode traces plus the cursor over the episode currently unfolding.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodicMemory<S> {
    pub traces: Vec<EpisodeTrace<S>>,
    next_trace: u64,
    /// Signatures observed so far in the current episode.
    current: Vec<Signature>,
    /// Trace the current episode is following.
    following: Option<u64>,
    /// Whether `following` is being built by the current episode.
    building: bool,
    last_obs: Option<Tick>,
    prediction: Option<Signature>,
}

impl<S: Scalar> Default for EpisodicMemory<S> {
    fn default() -> Self {
        EpisodicMemory {
            traces: Vec::new(),
            next_trace: 0,
            current: Vec::new(),
            following: None,
            building: false,
            last_obs: None,
            prediction: None,
        }
    }
}

impl<S: Scalar> EpisodicMemory<S> {
    pub fn trace(&self, id: u64) -> Option<&EpisodeTrace<S>> {
        self.traces.iter().find(|t| t.trace_id == id)
    }

    fn trace_mut(&mut self, id: u64) -> Option<&mut EpisodeTrace<S>> {
        self.traces.iter_mut().find(|t| t.trace_id == id)
    }

    /// The signature the memory currently expects next, if any.
    pub fn prediction(&self) -> Option<&Signature> {
        self.prediction.as_ref()
    }

    fn strongest(&self, prefix: &[Signature], strictly_longer: bool) -> Option<&EpisodeTrace<S>> {
        self.traces
            .iter()
            .filter(|t| t.starts_with(prefix) && (!strictly_longer || t.sequence.len() > prefix.len()))
            .reduce(|best, t| {
                let better = t.strength > best.strength
                    || (t.strength == best.strength && t.last_seen > best.last_seen);
                if better { t } else { best }
            })
    }

    /// Next signature of the strongest trace that starts with `prefix`
    /// (ties: most recently seen).
    pub fn recall(&self, prefix: &[Signature]) -> Option<Signature> {
        self.strongest(prefix, true).map(|t| t.sequence[prefix.len()].clone())
    }

    fn store(&mut self, sequence: Vec<Signature>, responses: Vec<Option<ActionType>>, tick: Tick, p: &HierarchyParams<S>) -> MemoryEvent<S> {
        let id = self.next_trace;
        self.next_trace += 1;
        let strength = reinforce(p.t0, p.eta_c);
        self.traces.push(EpisodeTrace {
            trace_id: id,
            sequence: sequence.clone(),
            response_sequence: responses,
            strength,
            last_seen: tick,
        });
        self.following = Some(id);
        self.building = true;
        MemoryEvent::Stored { trace_id: id, sequence, strength, reinforced: false }
    }

    /// Follows trace `id` one step further (its element at the last position of
    /// `current` matches); reinforces it when the episode completes it.
    fn advance(&mut self, id: u64, action: Option<ActionType>, tick: Tick, p: &HierarchyParams<S>) -> Option<MemoryEvent<S>> {
        let pos = self.current.len() - 1;
        let building = self.building;
        let t = self.trace_mut(id)?;
        t.last_seen = tick;
        t.response_sequence[pos] = action;
        if pos + 1 == t.sequence.len() && !building {
            t.strength = reinforce(t.strength, p.eta_c);
            return Some(MemoryEvent::Stored {
                trace_id: id,
                sequence: t.sequence.clone(),
                strength: t.strength,
                reinforced: true,
            });
        }
        None
    }

    /// Switches to the strongest stored trace matching the episode so far, or
    /// stores the episode so far as a new trace.
    fn rebind(&mut self, action: Option<ActionType>, tick: Tick, p: &HierarchyParams<S>) -> Option<MemoryEvent<S>> {
        match self.strongest(&self.current, false).map(|t| t.trace_id) {
            Some(id) => {
                self.following = Some(id);
                self.building = false;
                self.advance(id, action, tick, p)
            }
            None => {
                let mut responses: Vec<Option<ActionType>> = self
                    .following
                    .and_then(|id| self.trace(id))
                    .map(|t| t.response_sequence.iter().take(self.current.len() - 1).copied().collect())
                    .unwrap_or_default();
                responses.resize(self.current.len() - 1, None);
                responses.push(action);
                Some(self.store(self.current.clone(), responses, tick, p))
            }
        }
    }

    /// Observes one attended signature and the response taken to it.
    pub fn record(
        &mut self,
        signature: Signature,
        action: Option<ActionType>,
        tick: Tick,
        p: &HierarchyParams<S>,
    ) -> Vec<MemoryEvent<S>> {
        let mut out = Vec::new();
        let continuing = self.following.is_some()
            && self.last_obs.is_some_and(|l| tick.saturating_sub(l) <= p.episode_gap);
        if continuing {
            if let Some(predicted) = self.prediction.take() {
                let hit = predicted == signature;
                out.push(MemoryEvent::Recall { predicted, actual: signature.clone(), hit });
            }
            self.current.push(signature.clone());
            let pos = self.current.len() - 1;
            let id = self.following.expect("continuing implies a followed trace");
            let (len, matches) = self
                .trace(id)
                .map(|t| (t.sequence.len(), t.sequence.get(pos) == Some(&signature)))
                .unwrap_or((0, false));
            if matches {
                out.extend(self.advance(id, action, tick, p));
            } else if pos == len && self.building {
                let t = self.trace_mut(id).expect("followed trace exists");
                t.sequence.push(signature);
                t.response_sequence.push(action);
                t.last_seen = tick;
                out.push(MemoryEvent::Stored {
                    trace_id: id,
                    sequence: t.sequence.clone(),
                    strength: t.strength,
                    reinforced: false,
                });
            } else {
                out.extend(self.rebind(action, tick, p));
            }
        } else {
            self.prediction = None;
            self.current = vec![signature];
            self.following = None;
            self.building = false;
            out.extend(self.rebind(action, tick, p));
        }
        self.last_obs = Some(tick);
        self.prediction = self.recall(&self.current);
        out
    }

    /// Relaxes every trace not seen at `tick` and forgets those below `eps_diss`.
    pub fn decay(&mut self, tick: Tick, p: &HierarchyParams<S>) -> Vec<MemoryEvent<S>> {
        let mut out = Vec::new();
        for t in self.traces.iter_mut().filter(|t| t.last_seen < tick) {
            t.strength = relax(t.strength, p.t0, p.delta);
        }
        let following = self.following;
        let mut lost_cursor = false;
        self.traces.retain(|t| {
            let keep = t.strength >= p.eps_diss;
            if !keep {
                lost_cursor |= following == Some(t.trace_id);
                out.push(MemoryEvent::Forgotten { trace_id: t.trace_id, sequence: t.sequence.clone() });
            }
            keep
        });
        if lost_cursor {
            self.following = None;
            self.building = false;
            self.prediction = None;
        }
        out
    }

    /// Response stored for `signature` in the strongest trace containing it.
    pub fn response_for(&self, signature: &Signature) -> Option<ActionType> {
        self.traces
            .iter()
            .filter_map(|t| t.sequence.iter().position(|s| s == signature).map(|i| (t, i)))
            .max_by(|(a, _), (b, _)| {
                a.strength.partial_cmp(&b.strength).unwrap_or(std::cmp::Ordering::Equal)
            })
            .and_then(|(t, i)| t.response_sequence[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperAgent<S> {
    pub super_id: SuperId,
    pub origin_coalition: CoalitionId,
    pub scale: u32,
    /// Trigger of the origin coalition, in the origin's alphabet.
    pub trigger: Signature,
    pub gestalt_sensitivity: BTreeMap<Signature, S>,
    pub joint_context: JointContext<S>,
    pub episodic_memory: EpisodicMemory<S>,
    /// Last coordinated action of the origin coalition.
    pub last_response: Option<ActionType>,
}

impl<S: Scalar> SuperAgent<S> {
    /// Relevance of a lower-scale signature: 1 for the own trigger, otherwise
    /// the mean joint-context sensitivity over its components.
    pub fn gestalt_relevance(&self, signature: &Signature) -> S {
        if *signature == self.trigger {
            return S::one();
        }
        if let Some(w) = self.gestalt_sensitivity.get(signature) {
            return *w;
        }
        if signature.is_empty() {
            return S::zero();
        }
        let sum = signature
            .types()
            .iter()
            .map(|t| self.joint_context.sensitivity.get(t).copied().unwrap_or_else(S::zero))
            .fold(S::zero(), |a, b| a + b);
        sum / S::from_usize(signature.len()).unwrap_or_else(S::one)
    }

    /// Intended response to a lower-scale signature.
    pub fn intend(&self, signature: &Signature) -> Option<ActionType> {
        if *signature == self.trigger {
            self.last_response
        } else {
            self.episodic_memory.response_for(signature)
        }
    }
}

/// Selection for relevance over the signatures detected one scale below.
/// Newly scored signatures are cached in the gestalt profile.
pub fn super_attend<S: Scalar>(
    sa: &mut SuperAgent<S>,
    detections: &[Signature],
    theta_att: S,
) -> Vec<Verdict<Signature, S>> {
    for d in detections {
        if !sa.gestalt_sensitivity.contains_key(d) {
            let r = sa.gestalt_relevance(d);
            sa.gestalt_sensitivity.insert(d.clone(), r);
        }
    }
    rank(detections, theta_att, |d| sa.gestalt_relevance(d))
}

/// Promotion gate: consolidated (mean strength and activation count at
/// threshold) and below the top scale.
pub fn is_promotable<S: Scalar>(c: &Coalition<S>, p: &HierarchyParams<S>) -> bool {
    c.is_live()
        && c.scale + 1 < p.max_scale
        && c.mean_strength() >= p.theta_promote
        && c.activation_count >= p.n_promote
}

/// Interned alphabet of one scale above 0: each symbol stands for a
/// signature of the scale below.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    ids: BTreeMap<Signature, EventType>,
    signatures: Vec<Signature>,
}

impl SymbolTable {
    pub fn intern(&mut self, s: &Signature) -> EventType {
        if let Some(id) = self.ids.get(s) {
            return *id;
        }
        let id = self.signatures.len() as EventType;
        self.ids.insert(s.clone(), id);
        self.signatures.push(s.clone());
        id
    }

    pub fn lookup(&self, s: &Signature) -> Option<EventType> {
        self.ids.get(s).copied()
    }

    pub fn resolve(&self, id: EventType) -> Option<&Signature> {
        self.signatures.get(id as usize)
    }
}

/// Every super-agent of a run plus the per-scale symbol tables.
#[derive(Clone, Debug, Default)]
pub struct Hierarchy<S> {
    supers: BTreeMap<SuperId, SuperAgent<S>>,
    by_origin: BTreeMap<CoalitionId, SuperId>,
    next_id: SuperId,
    /// `symbols[k]` is the alphabet of scale `k + 1`.
    symbols: Vec<SymbolTable>,
}

impl<S: Scalar> Hierarchy<S> {
    pub fn new() -> Self {
        Hierarchy { supers: BTreeMap::new(), by_origin: BTreeMap::new(), next_id: 0, symbols: Vec::new() }
    }

    pub fn get(&self, id: SuperId) -> Option<&SuperAgent<S>> {
        self.supers.get(&id)
    }

    pub fn get_mut(&mut self, id: SuperId) -> Option<&mut SuperAgent<S>> {
        self.supers.get_mut(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SuperAgent<S>> {
        self.supers.values()
    }

    pub fn ids_at(&self, scale: u32) -> Vec<SuperId> {
        self.supers.values().filter(|s| s.scale == scale).map(|s| s.super_id).collect()
    }

    pub fn for_origin(&self, coalition: CoalitionId) -> Option<SuperId> {
        self.by_origin.get(&coalition).copied()
    }

    pub fn symbols(&mut self, scale: u32) -> &mut SymbolTable {
        let idx = scale.saturating_sub(1) as usize;
        if self.symbols.len() <= idx {
            self.symbols.resize_with(idx + 1, SymbolTable::default);
        }
        &mut self.symbols[idx]
    }

    /// Sensitivity of super-agent `id` over its own scale's symbols.
    pub fn symbol_profile(&self, id: SuperId) -> BTreeMap<EventType, S> {
        let Some(sa) = self.supers.get(&id) else { return BTreeMap::new() };
        let Some(table) = self.symbols.get(sa.scale.saturating_sub(1) as usize) else {
            return BTreeMap::new();
        };
        sa.gestalt_sensitivity
            .iter()
            .filter_map(|(sig, w)| table.lookup(sig).map(|id| (id, *w)))
            .collect()
    }

    /// Promotes `c` if it passes the gate and has no super-agent yet.
    /// `profile` gives each member's sensitivity over the coalition's alphabet.
    pub fn promote(
        &mut self,
        c: &Coalition<S>,
        p: &HierarchyParams<S>,
        profile: impl Fn(MemberId) -> BTreeMap<EventType, S>,
    ) -> Option<SuperId> {
        if self.by_origin.contains_key(&c.coalition_id) || !is_promotable(c, p) {
            return None;
        }
        let profiles: Vec<_> = c.members.iter().map(|m| profile(*m)).collect();
        let joint_context = JointContext::merge(profiles.iter(), c.strengths.clone());
        let id = self.next_id;
        self.next_id += 1;
        let mut gestalt_sensitivity = BTreeMap::new();
        gestalt_sensitivity.insert(c.trigger.clone(), S::one());
        self.supers.insert(
            id,
            SuperAgent {
                super_id: id,
                origin_coalition: c.coalition_id,
                scale: c.scale + 1,
                trigger: c.trigger.clone(),
                gestalt_sensitivity,
                joint_context,
                episodic_memory: EpisodicMemory::default(),
                last_response: c.last_action,
            },
        );
        self.by_origin.insert(c.coalition_id, id);
        Some(id)
    }

    /// Removes the super-agent of a dissipated coalition together with its memory.
    pub fn retire(&mut self, coalition: CoalitionId) -> Option<SuperAgent<S>> {
        let id = self.by_origin.remove(&coalition)?;
        self.supers.remove(&id)
    }

    pub fn max_scale(&self) -> u32 {
        self.supers.values().map(|s| s.scale).max().unwrap_or(0)
    }
}
