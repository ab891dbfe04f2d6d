//! The generic cognitive agent: selection for relevance (attention), selection
//! for action (intention) and the context both depend on.

use crate::environment::SimpleEvent;
use crate::error::{Result, SimError};
use crate::scalar::Scalar;
use crate::types::{ActionType, AgentId, CoalitionId, EventType, Outcome, Signature, Tick};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Width of the relevance buckets that define post-selection equivalence classes.
pub const BUCKET_WIDTH: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentContext<S> {
    pub agent_id: AgentId,
    pub sensitivity: BTreeMap<EventType, S>,
    pub action_table: BTreeMap<EventType, BTreeMap<ActionType, S>>,
    /// Commitment memory: strength toward each coalition joined so far.
    pub tendencies: BTreeMap<CoalitionId, S>,
    pub recent: VecDeque<(EventType, Tick)>,
    pub recent_capacity: usize,
    pub capacity_limit: usize,
}

impl<S: Scalar> AgentContext<S> {
    pub fn new(agent_id: AgentId, recent_capacity: usize, capacity_limit: usize) -> Self {
        AgentContext {
            agent_id,
            sensitivity: BTreeMap::new(),
            action_table: BTreeMap::new(),
            tendencies: BTreeMap::new(),
            recent: VecDeque::new(),
            recent_capacity,
            capacity_limit,
        }
    }

    pub fn with_sensitivity(mut self, entries: impl IntoIterator<Item = (EventType, S)>) -> Self {
        self.sensitivity.extend(entries);
        self
    }

    pub fn with_actions(
        mut self,
        event_type: EventType,
        row: impl IntoIterator<Item = (ActionType, S)>,
    ) -> Self {
        self.action_table.entry(event_type).or_default().extend(row);
        self
    }

    pub fn relevance(&self, event_type: EventType) -> S {
        self.sensitivity.get(&event_type).copied().unwrap_or_else(S::zero)
    }

    /// The trigger component this agent cares most about (ties: lowest type).
    pub fn focus(&self, signature: &Signature) -> Option<EventType> {
        argmax_by_key(signature.types().iter().map(|t| (*t, self.relevance(*t))))
    }

    fn remember(&mut self, event_type: EventType, tick: Tick) {
        if self.recent_capacity == 0 {
            return;
        }
        while self.recent.len() >= self.recent_capacity {
            self.recent.pop_front();
        }
        self.recent.push_back((event_type, tick));
    }
}

/// Items an attention mechanism can rank. `key` identifies the item's type
/// for variety accounting.
pub trait Attendable: Clone {
    type Key: Ord + Clone;
    fn key(&self) -> Self::Key;
}

impl Attendable for SimpleEvent {
    type Key = EventType;
    fn key(&self) -> EventType {
        self.event_type
    }
}

impl Attendable for Signature {
    type Key = Signature;
    fn key(&self) -> Signature {
        self.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict<E, S> {
    pub event: E,
    pub relevance: S,
    pub passed: bool,
}

pub type RelevanceVerdict<S> = Verdict<SimpleEvent, S>;

/// Scores every item, thresholds at `theta`, and orders the verdicts by
/// descending relevance (ties: ascending key, then input order).
pub fn rank<E: Attendable, S: Scalar>(
    events: &[E],
    theta: S,
    relevance: impl Fn(&E) -> S,
) -> Vec<Verdict<E, S>> {
    let mut verdicts: Vec<Verdict<E, S>> = events
        .iter()
        .map(|e| {
            let r = relevance(e);
            Verdict { event: e.clone(), relevance: r, passed: r >= theta }
        })
        .collect();
    verdicts.sort_by(|a, b| {
        b.relevance
            .partial_cmp(&a.relevance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.event.key().cmp(&b.event.key()))
    });
    verdicts
}

/// Selection for relevance. Passed events are appended to `ctx.recent` in
/// verdict order; relevance values themselves depend only on the sensitivity
/// profile.
pub fn attend<S: Scalar>(
    ctx: &mut AgentContext<S>,
    events: &[SimpleEvent],
    theta_att: S,
) -> Vec<RelevanceVerdict<S>> {
    let verdicts = rank(events, theta_att, |e| ctx.relevance(e.event_type));
    for v in verdicts.iter().filter(|v| v.passed) {
        ctx.remember(v.event.event_type, v.event.tick);
    }
    verdicts
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum IntentMode {
    #[default]
    Argmax,
    Softmax { temperature: f64 },
}

/// Selection for action. Returns `None` ("do nothing") when the row is empty
/// or no weight reaches `theta_act`. Argmax mode draws no randomness.
pub fn intend<S: Scalar, R: Rng + ?Sized>(
    ctx: &AgentContext<S>,
    event_type: EventType,
    theta_act: S,
    mode: IntentMode,
    rng: &mut R,
) -> Option<ActionType> {
    let row = ctx.action_table.get(&event_type)?;
    let eligible: Vec<(ActionType, S)> =
        row.iter().filter(|(_, w)| **w >= theta_act).map(|(a, w)| (*a, *w)).collect();
    if eligible.is_empty() {
        return None;
    }
    match mode {
        IntentMode::Argmax => argmax_by_key(eligible.into_iter()),
        IntentMode::Softmax { temperature } => {
            let temp = S::of(temperature);
            let top = eligible.iter().map(|(_, w)| *w).fold(S::neg_infinity(), S::max);
            let weights: Vec<f64> = eligible
                .iter()
                .map(|(_, w)| ((*w - top) / temp).exp().to_f64_lossy())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for ((a, _), w) in eligible.iter().zip(&weights) {
                if u < *w {
                    return Some(*a);
                }
                u -= w;
            }
            eligible.last().map(|(a, _)| *a)
        }
    }
}

/// Outcome-driven association update: success moves the weight toward 1 by
/// `eta`, failure shrinks it by the factor `1 - eta`. Unscored leaves it alone.
pub fn learn<S: Scalar>(
    ctx: &mut AgentContext<S>,
    event_type: EventType,
    action: ActionType,
    outcome: Outcome,
    eta: S,
) {
    let w = ctx.action_table.entry(event_type).or_default().entry(action).or_insert_with(S::zero);
    *w = match outcome {
        Outcome::Success => *w + eta * (S::one() - *w),
        Outcome::Failure => *w * (S::one() - eta),
        Outcome::Unscored => *w,
    };
}

/// Relevance bucket used for post-selection equivalence classes.
pub fn bucket<S: Scalar>(relevance: S) -> i64 {
    (relevance.to_f64_lossy() / BUCKET_WIDTH).round() as i64
}

/// Post-selection class of a verdict: its relevance bucket if passed,
/// otherwise the shared rejected class (`None`).
pub fn class_of<E, S: Scalar>(v: &Verdict<E, S>) -> Option<i64> {
    v.passed.then(|| bucket(v.relevance))
}

/// Bits discarded by a selection: log2 of distinct input types minus log2 of
/// distinct post-selection classes.
pub fn variety_reduction<E: Attendable, S: Scalar>(verdicts: &[Verdict<E, S>]) -> Result<S> {
    if verdicts.is_empty() {
        return Err(SimError::contract("variety_reduction needs at least one verdict"));
    }
    let types: BTreeSet<E::Key> = verdicts.iter().map(|v| v.event.key()).collect();
    let classes: BTreeSet<Option<i64>> = verdicts.iter().map(class_of).collect();
    let n_in = S::from_usize(types.len()).unwrap_or_else(S::one);
    let n_out = S::from_usize(classes.len()).unwrap_or_else(S::one);
    Ok((n_in.log2() - n_out.log2()).max(S::zero()))
}

/// Highest-weighted key; ties go to the smallest key.
pub fn argmax_by_key<K: Ord + Copy, S: Scalar>(items: impl Iterator<Item = (K, S)>) -> Option<K> {
    let mut best: Option<(K, S)> = None;
    for (k, w) in items {
        best = match best {
            None => Some((k, w)),
            Some((bk, bw)) if w > bw || (w == bw && k < bk) => Some((k, w)),
            keep => keep,
        };
    }
    best.map(|(k, _)| k)
}
