//! Coalition lifecycle: joint detection of compound events, formation and
//! rejoining, commitment-weighted coordinated action, Hebbian reinforcement,
//! dismantling, decay toward baseline, dissipation and capacity conflicts.
//!
//! Everything here is scale-agnostic: at scale 0 the members are agents and
//! the alphabet is environment event types; at higher scales the members are
//! super-agents and the alphabet is interned lower-scale signatures.

use crate::error::{Result, SimError};
use crate::scalar::Scalar;
use crate::types::{ActionType, CoalitionId, EventType, MemberId, Outcome, Signature, Tick};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoalitionState {
    Forming,
    Active,
    Dormant,
    Dissipated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coalition<S> {
    pub coalition_id: CoalitionId,
    pub trigger: Signature,
    pub members: BTreeSet<MemberId>,
    pub strengths: BTreeMap<MemberId, S>,
    pub state: CoalitionState,
    pub activation_count: u64,
    pub last_activated: Option<Tick>,
    pub formed_at: Tick,
    pub scale: u32,
    /// Members whose resources are committed to the current activation.
    pub engaged: BTreeSet<MemberId>,
    pub last_action: Option<ActionType>,
}

impl<S: Scalar> Coalition<S> {
    pub fn new(
        coalition_id: CoalitionId,
        trigger: Signature,
        members: impl IntoIterator<Item = MemberId>,
        t0: S,
        scale: u32,
        tick: Tick,
    ) -> Self {
        let members: BTreeSet<MemberId> = members.into_iter().collect();
        let strengths = members.iter().map(|m| (*m, t0)).collect();
        Coalition {
            coalition_id,
            trigger,
            members,
            strengths,
            state: CoalitionState::Forming,
            activation_count: 0,
            last_activated: None,
            formed_at: tick,
            scale,
            engaged: BTreeSet::new(),
            last_action: None,
        }
    }

    pub fn strength(&self, m: MemberId) -> S {
        self.strengths.get(&m).copied().unwrap_or_else(S::zero)
    }

    pub fn mean_strength(&self) -> S {
        if self.strengths.is_empty() {
            return S::zero();
        }
        let sum = self.strengths.values().fold(S::zero(), |a, b| a + *b);
        sum / S::from_usize(self.strengths.len()).unwrap_or_else(S::one)
    }

    pub fn is_live(&self) -> bool {
        self.state != CoalitionState::Dissipated
    }

    /// Drops a member (e.g. a retired super-agent).
    pub fn remove_member(&mut self, m: MemberId) {
        self.members.remove(&m);
        self.strengths.remove(&m);
        self.engaged.remove(&m);
    }
}

/// Parameters of the coalition update laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifecycleParams<S> {
    pub t0: S,
    pub eta_c: S,
    pub mu_success: S,
    pub mu_failure: S,
    pub delta: S,
    pub eps_diss: S,
    pub p_join: S,
    pub capacity: usize,
    pub action_duration: u64,
}

impl<S: Scalar> LifecycleParams<S> {
    pub fn defaults() -> Self {
        LifecycleParams {
            t0: S::of(0.1),
            eta_c: S::of(0.3),
            mu_success: S::one(),
            mu_failure: S::one(),
            delta: S::of(0.05),
            eps_diss: S::of(0.12),
            p_join: S::of(0.8),
            capacity: 4,
            action_duration: 1,
        }
    }
}

/// Bounded exponential approach toward 1.
pub fn reinforce<S: Scalar>(s: S, rate: S) -> S {
    s + rate * (S::one() - s)
}

/// Geometric relaxation toward the baseline `t0`.
pub fn relax<S: Scalar>(s: S, t0: S, delta: S) -> S {
    t0 + (s - t0) * (S::one() - delta)
}

/// A compound event identified jointly by several units within one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub signature: Signature,
    pub involved: BTreeSet<MemberId>,
    /// The passed (member, type, tick) observations that cover the signature.
    pub matched: Vec<(MemberId, EventType, Tick)>,
    pub tick: Tick,
    /// True when the signature matched no live coalition trigger.
    pub novel: bool,
}

/// Joint detection over one window's passed observations.
///
/// Every known trigger contained in the window's type union and covered by at
/// least two units is a candidate. Whatever remains uncovered becomes a novel
/// candidate when it still spans two types and two units (if nothing known
/// matched, the whole union is the novel candidate).
pub fn detect_joint(
    observations: &[(MemberId, EventType, Tick)],
    known_triggers: &[Signature],
    tick: Tick,
) -> Vec<Detection> {
    let union = Signature::new(observations.iter().map(|(_, t, _)| *t));
    let units: BTreeSet<MemberId> = observations.iter().map(|(m, _, _)| *m).collect();
    if union.len() < 2 || units.len() < 2 {
        return Vec::new();
    }
    let build = |sig: &Signature, novel: bool| -> Option<Detection> {
        let matched: Vec<_> =
            observations.iter().filter(|(_, t, _)| sig.contains(*t)).copied().collect();
        let involved: BTreeSet<MemberId> = matched.iter().map(|(m, _, _)| *m).collect();
        (involved.len() >= 2 && sig.len() >= 2).then(|| Detection {
            signature: sig.clone(),
            involved,
            matched,
            tick,
            novel,
        })
    };

    let mut known: Vec<&Signature> = known_triggers.iter().collect();
    known.sort();
    known.dedup();
    let mut out: Vec<Detection> = known
        .into_iter()
        .filter(|k| k.is_subset_of(&union))
        .filter_map(|k| build(k, false))
        .collect();
    let covered: BTreeSet<EventType> =
        out.iter().flat_map(|d| d.signature.types().iter().copied()).collect();
    let residual = Signature::new(union.types().iter().copied().filter(|t| !covered.contains(t)));
    if let Some(d) = build(&residual, true) {
        out.push(d);
    }
    out
}

/// Anchored detection windows: the first passed observation opens a window of
/// `window` ticks; candidates are evaluated once, at the closing tick.
#[derive(Clone, Debug, Default)]
pub struct JointDetector {
    pub window: u64,
    open_since: Option<Tick>,
    pending: Vec<(MemberId, EventType, Tick)>,
}

impl JointDetector {
    pub fn new(window: u64) -> Self {
        JointDetector { window: window.max(1), open_since: None, pending: Vec::new() }
    }

    pub fn observe(&mut self, member: MemberId, event_type: EventType, tick: Tick) {
        self.open_since.get_or_insert(tick);
        self.pending.push((member, event_type, tick));
    }

    pub fn is_open(&self) -> bool {
        self.open_since.is_some()
    }

    /// Closes the window if `tick` is its last tick and returns its candidates.
    pub fn close(&mut self, tick: Tick, known_triggers: &[Signature]) -> Vec<Detection> {
        match self.open_since {
            Some(open) if tick + 1 >= open + self.window => {
                let obs = std::mem::take(&mut self.pending);
                self.open_since = None;
                detect_joint(&obs, known_triggers, tick)
            }
            _ => Vec::new(),
        }
    }

    /// Drops observations from a unit that no longer exists.
    pub fn forget(&mut self, member: MemberId) {
        self.pending.retain(|(m, _, _)| *m != member);
    }
}

/// Result of handling one candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formation {
    /// A live coalition with this trigger already exists.
    Rejoined(CoalitionId),
    Formed(CoalitionId),
    /// Fewer than two units joined.
    Discarded,
}

/// All coalitions of a run, at every scale. Ids are global and never reused.
#[derive(Clone, Debug, Default)]
pub struct Registry<S> {
    coalitions: BTreeMap<CoalitionId, Coalition<S>>,
    next_id: CoalitionId,
}

impl<S: Scalar> Registry<S> {
    pub fn new() -> Self {
        Registry { coalitions: BTreeMap::new(), next_id: 0 }
    }

    pub fn get(&self, id: CoalitionId) -> Option<&Coalition<S>> {
        self.coalitions.get(&id)
    }

    pub fn get_mut(&mut self, id: CoalitionId) -> Option<&mut Coalition<S>> {
        self.coalitions.get_mut(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Coalition<S>> {
        self.coalitions.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Coalition<S>> {
        self.coalitions.values_mut()
    }

    pub fn live_at(&self, scale: u32) -> impl Iterator<Item = &Coalition<S>> {
        self.coalitions.values().filter(move |c| c.scale == scale && c.is_live())
    }

    pub fn live_by_trigger(&self, trigger: &Signature, scale: u32) -> Option<&Coalition<S>> {
        self.live_at(scale).find(|c| &c.trigger == trigger)
    }

    pub fn triggers_at(&self, scale: u32) -> Vec<Signature> {
        self.live_at(scale).map(|c| c.trigger.clone()).collect()
    }

    /// Number of Active coalitions holding `m`'s resources.
    pub fn engaged_count(&self, m: MemberId) -> usize {
        self.coalitions
            .values()
            .filter(|c| c.state == CoalitionState::Active && c.engaged.contains(&m))
            .count()
    }

    /// Strength `m` retained in dissipated coalitions with this trigger.
    pub fn residual_tendency(&self, m: MemberId, trigger: &Signature, scale: u32) -> S {
        self.coalitions
            .values()
            .filter(|c| !c.is_live() && c.scale == scale && &c.trigger == trigger)
            .filter_map(|c| c.strengths.get(&m).copied())
            .fold(S::zero(), S::max)
    }

    /// Inserts a coalition built by the caller, assigning the next id.
    pub fn insert(&mut self, mut c: Coalition<S>) -> CoalitionId {
        let id = self.next_id;
        self.next_id += 1;
        c.coalition_id = id;
        self.coalitions.insert(id, c);
        id
    }

    /// Rejoins the live coalition with the candidate's trigger, or forms a new
    /// one. Each involved unit with spare capacity joins a new coalition with
    /// probability `p_join` plus its residual tendency toward the signature.
    pub fn form_or_rejoin<R: Rng + ?Sized>(
        &mut self,
        candidate: &Detection,
        scale: u32,
        capacity_of: impl Fn(MemberId) -> usize,
        params: &LifecycleParams<S>,
        tick: Tick,
        rng: &mut R,
    ) -> Formation {
        if let Some(c) = self.live_by_trigger(&candidate.signature, scale) {
            return Formation::Rejoined(c.coalition_id);
        }
        let mut joined = Vec::new();
        for m in &candidate.involved {
            if self.engaged_count(*m) >= capacity_of(*m) {
                continue;
            }
            let bonus = self.residual_tendency(*m, &candidate.signature, scale);
            let p = (params.p_join + bonus).clamp_to(S::zero(), S::one()).to_f64_lossy();
            if rng.gen::<f64>() < p {
                joined.push(*m);
            }
        }
        if joined.len() < 2 {
            return Formation::Discarded;
        }
        let c = Coalition::new(0, candidate.signature.clone(), joined, params.t0, scale, tick);
        Formation::Formed(self.insert(c))
    }
}

/// Commitment-weighted plurality over member intentions. Members intending
/// nothing do not vote; ties go to the smallest action id.
pub fn coordinated_action<S: Scalar>(votes: &[(MemberId, Option<ActionType>, S)]) -> Option<ActionType> {
    let mut tally: BTreeMap<ActionType, S> = BTreeMap::new();
    for (_, action, weight) in votes {
        if let Some(a) = action {
            let e = tally.entry(*a).or_insert_with(S::zero);
            *e = *e + *weight;
        }
    }
    crate::agent::argmax_by_key(tally.into_iter())
}

/// Applies one activation: reinforcement (or failure weakening, floored at
/// `t0`) for every participant, bookkeeping and the transition to Active.
pub fn activate<S: Scalar>(
    c: &mut Coalition<S>,
    participants: &BTreeSet<MemberId>,
    action: Option<ActionType>,
    outcome: Outcome,
    params: &LifecycleParams<S>,
    tick: Tick,
) -> Result<()> {
    if c.state == CoalitionState::Dissipated {
        return Err(SimError::contract(format!("coalition {} is dissipated", c.coalition_id)));
    }
    for m in participants {
        let Some(s) = c.strengths.get_mut(m) else {
            return Err(SimError::contract(format!("{m} is not a member of coalition {}", c.coalition_id)));
        };
        *s = match outcome {
            Outcome::Success => reinforce(*s, params.eta_c * params.mu_success),
            Outcome::Unscored => reinforce(*s, params.eta_c),
            Outcome::Failure => (*s * (S::one() - params.eta_c * params.mu_failure)).max(params.t0),
        };
    }
    c.activation_count += 1;
    c.last_activated = Some(tick);
    c.last_action = action;
    c.state = CoalitionState::Active;
    c.engaged.extend(participants.iter().copied());
    Ok(())
}

/// Ends an activation: Active becomes Dormant, resources are released and
/// strengths are kept.
pub fn dismantle<S: Scalar>(c: &mut Coalition<S>) -> Result<()> {
    if c.state != CoalitionState::Active {
        return Err(SimError::contract(format!(
            "cannot dismantle coalition {} in state {:?}",
            c.coalition_id, c.state
        )));
    }
    c.state = CoalitionState::Dormant;
    c.engaged.clear();
    Ok(())
}

/// Whether an Active coalition's action has run its course at `tick`.
pub fn action_complete<S>(c: &Coalition<S>, tick: Tick, duration: u64) -> bool {
    c.state == CoalitionState::Active && c.last_activated.is_some_and(|t| tick >= t + duration)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecayOutcome<S> {
    /// (coalition, scale, mean strength after decay)
    pub decayed: Vec<(CoalitionId, u32, S)>,
    pub dissipated: Vec<CoalitionId>,
    /// Subset of `dissipated` that never activated.
    pub stillborn: Vec<CoalitionId>,
}

/// One tick of forgetting. Active coalitions hold their strengths; every other
/// live coalition relaxes toward `t0` and dissipates once its mean strength
/// falls below `eps_diss`. A coalition still Forming here never activated and
/// dissipates immediately.
pub fn decay_all<S: Scalar>(registry: &mut Registry<S>, params: &LifecycleParams<S>) -> DecayOutcome<S> {
    decay_where(registry, params, |_| true)
}

/// [`decay_all`] restricted to the coalitions of one scale.
pub fn decay_scale<S: Scalar>(
    registry: &mut Registry<S>,
    params: &LifecycleParams<S>,
    scale: u32,
) -> DecayOutcome<S> {
    decay_where(registry, params, |c| c.scale == scale)
}

fn decay_where<S: Scalar>(
    registry: &mut Registry<S>,
    params: &LifecycleParams<S>,
    filter: impl Fn(&Coalition<S>) -> bool,
) -> DecayOutcome<S> {
    let mut out = DecayOutcome::default();
    for c in registry.iter_mut().filter(|c| filter(c)) {
        match c.state {
            CoalitionState::Active | CoalitionState::Dissipated => continue,
            CoalitionState::Forming => {
                c.state = CoalitionState::Dissipated;
                c.engaged.clear();
                out.dissipated.push(c.coalition_id);
                out.stillborn.push(c.coalition_id);
                continue;
            }
            CoalitionState::Dormant => {}
        }
        for s in c.strengths.values_mut() {
            *s = relax(*s, params.t0, params.delta);
        }
        let mean = c.mean_strength();
        out.decayed.push((c.coalition_id, c.scale, mean));
        if mean < params.eps_diss {
            c.state = CoalitionState::Dissipated;
            c.engaged.clear();
            out.dissipated.push(c.coalition_id);
        }
    }
    out
}

/// Marks a coalition Dissipated regardless of strength (e.g. it lost members).
pub fn dissipate<S>(c: &mut Coalition<S>) {
    c.state = CoalitionState::Dissipated;
    c.engaged.clear();
}

/// The coalition an overcommitted unit stays bound to: highest commitment,
/// then most activations, then lowest id.
pub fn resolve_conflict<'a, S: Scalar>(
    member: MemberId,
    contenders: &[&'a Coalition<S>],
) -> Option<&'a Coalition<S>> {
    contenders.iter().copied().reduce(|best, c| {
        let (sb, sc) = (best.strength(member), c.strength(member));
        let better = sc > sb
            || (sc == sb && c.activation_count > best.activation_count)
            || (sc == sb
                && c.activation_count == best.activation_count
                && c.coalition_id < best.coalition_id);
        if better { c } else { best }
    })
}

/// Ticks of idle decay until a strength starting at `s` drops below `eps`,
/// from the closed form `t0 + (s - t0)(1 - delta)^n < eps`. `None` if it never does.
pub fn forgetting_horizon(s: f64, t0: f64, delta: f64, eps: f64) -> Option<u64> {
    if eps <= t0 {
        return None;
    }
    if s < eps {
        return Some(0);
    }
    let n = ((eps - t0) / (s - t0)).ln() / (1.0 - delta).ln();
    Some(n.ceil().max(0.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A: MemberId = MemberId::Agent(0);
    const B: MemberId = MemberId::Agent(1);
    const C: MemberId = MemberId::Agent(2);

    fn params() -> LifecycleParams<f64> {
        LifecycleParams { eta_c: 0.5, delta: 0.5, p_join: 1.0, ..LifecycleParams::defaults() }
    }

    fn sig(t: &[u32]) -> Signature {
        Signature::new(t.iter().copied())
    }

    fn coalition(id: u32, members: &[MemberId], s: f64) -> Coalition<f64> {
        let mut c = Coalition::new(id, sig(&[2, 5]), members.iter().copied(), 0.1, 0, 0);
        c.strengths.values_mut().for_each(|v| *v = s);
        c.state = CoalitionState::Dormant;
        c
    }

    #[test]
    fn detection_examples() {
        let mut d = JointDetector::new(2);
        assert!(d.close(9, &[]).is_empty());
        d.observe(A, 2, 10);
        assert!(d.close(10, &[]).is_empty());
        d.observe(B, 5, 11);
        let got = d.close(11, &[]);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].signature, sig(&[2, 5]));
        assert_eq!(got[0].tick, 11);
        assert!(got[0].novel);
        assert_eq!(got[0].involved, [A, B].into_iter().collect());
        assert!(!d.is_open());

        assert!(detect_joint(&[(A, 2, 10), (A, 5, 10)], &[], 10).is_empty());
        assert!(detect_joint(&[(A, 2, 10), (B, 2, 10)], &[], 10).is_empty());
    }

    #[test]
    fn detection_splits_known_triggers() {
        let obs = [(A, 2, 0), (B, 5, 0), (C, 8, 1), (A, 9, 1)];
        let got = detect_joint(&obs, &[sig(&[2, 5]), sig(&[8, 9]), sig(&[1, 2])], 1);
        let sigs: Vec<_> = got.iter().map(|d| (d.signature.clone(), d.novel)).collect();
        assert_eq!(sigs, vec![(sig(&[2, 5]), false), (sig(&[8, 9]), false)]);

        let got = detect_joint(&obs, &[sig(&[2, 5])], 1);
        let sigs: Vec<_> = got.iter().map(|d| (d.signature.clone(), d.novel)).collect();
        assert_eq!(sigs, vec![(sig(&[2, 5]), false), (sig(&[8, 9]), true)]);
    }

    #[test]
    fn formation_examples() {
        let mut reg = Registry::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let det = detect_joint(&[(A, 2, 0), (B, 5, 0)], &[], 0).remove(0);
        let f = reg.form_or_rejoin(&det, 0, |_| 4, &params(), 0, &mut rng);
        assert_eq!(f, Formation::Formed(0));
        let c = reg.get(0).unwrap();
        assert_eq!(c.state, CoalitionState::Forming);
        assert_eq!(c.strengths, [(A, 0.1), (B, 0.1)].into_iter().collect());

        reg.get_mut(0).unwrap().state = CoalitionState::Active;
        let f = reg.form_or_rejoin(&det, 0, |_| 4, &params(), 1, &mut rng);
        assert_eq!(f, Formation::Rejoined(0));
        assert_eq!(reg.iter().count(), 1);
        // Same trigger at another scale is a different coalition.
        assert_eq!(reg.form_or_rejoin(&det, 1, |_| 4, &params(), 1, &mut rng), Formation::Formed(1));
    }

    #[test]
    fn formation_respects_capacity() {
        let mut reg = Registry::<f64>::new();
        let mut busy = Coalition::new(0, sig(&[7, 8]), [A, C], 0.1, 0, 0);
        busy.state = CoalitionState::Active;
        busy.engaged.insert(A);
        reg.insert(busy);
        let det = detect_joint(&[(A, 2, 0), (B, 5, 0)], &[], 0).remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(reg.form_or_rejoin(&det, 0, |_| 1, &params(), 0, &mut rng), Formation::Discarded);
    }

    #[test]
    fn activation_arithmetic() {
        let p = params();
        let mut c = coalition(0, &[A, B], 0.1);
        let all: BTreeSet<_> = [A, B].into_iter().collect();
        activate(&mut c, &all, Some(1), Outcome::Success, &p, 3).unwrap();
        assert!((c.strength(A) - 0.55).abs() < 1e-12 && (c.strength(B) - 0.55).abs() < 1e-12);
        assert_eq!(c.state, CoalitionState::Active);
        assert_eq!(c.activation_count, 1);

        let mut c = coalition(0, &[A], 0.55);
        let only_a: BTreeSet<_> = [A].into_iter().collect();
        activate(&mut c, &only_a, None, Outcome::Failure, &p, 0).unwrap();
        assert!((c.strength(A) - 0.275).abs() < 1e-12);

        let mut c = coalition(0, &[A, B], 0.1);
        c.state = CoalitionState::Dissipated;
        assert!(activate(&mut c, &all, None, Outcome::Success, &p, 0).is_err());
    }

    #[test]
    fn failure_is_floored_at_baseline() {
        let p = LifecycleParams { eta_c: 0.9, ..params() };
        let mut c = coalition(0, &[A, B], 0.15);
        let all: BTreeSet<_> = [A, B].into_iter().collect();
        activate(&mut c, &all, None, Outcome::Failure, &p, 0).unwrap();
        assert_eq!(c.strength(A), 0.1);
    }

    #[test]
    fn decay_arithmetic_and_fixed_point() {
        let p = params();
        let mut reg = Registry::new();
        reg.insert(coalition(0, &[A, B], 0.55));
        reg.insert(coalition(0, &[A, C], 0.1));
        let out = decay_all(&mut reg, &LifecycleParams { eps_diss: 0.0, ..p });
        assert!((reg.get(0).unwrap().strength(A) - 0.325).abs() < 1e-12);
        assert_eq!(out.decayed.len(), 2);
        for _ in 0..50 {
            decay_all(&mut reg, &LifecycleParams { eps_diss: 0.0, ..p });
        }
        assert_eq!(reg.get(1).unwrap().strength(A), 0.1);
    }

    #[test]
    fn idle_coalition_dissipates_at_closed_form_horizon() {
        let (t0, delta, eps) = (0.1, 0.05, 0.12);
        for s in [0.3, 0.55, 0.8, 0.99] {
            let p = LifecycleParams { delta, eps_diss: eps, ..params() };
            let mut reg = Registry::new();
            reg.insert(coalition(0, &[A, B], s));
            let mut n = 0;
            while reg.get(0).unwrap().is_live() {
                decay_all(&mut reg, &p);
                n += 1;
            }
            assert_eq!(Some(n), forgetting_horizon(s, t0, delta, eps), "s={s}");
        }
    }

    #[test]
    fn active_coalitions_hold_and_forming_ones_are_stillborn() {
        let p = params();
        let mut reg = Registry::new();
        let mut active = coalition(0, &[A, B], 0.11);
        active.state = CoalitionState::Active;
        reg.insert(active);
        reg.insert(Coalition::new(0, sig(&[3, 4]), [A, B], 0.1, 0, 0));
        let out = decay_all(&mut reg, &p);
        assert_eq!(reg.get(0).unwrap().strength(A), 0.11);
        assert_eq!(reg.get(0).unwrap().state, CoalitionState::Active);
        assert_eq!(out.dissipated, vec![1]);
    }

    #[test]
    fn dismantle_transitions() {
        let mut c = coalition(0, &[A, B], 0.4);
        c.state = CoalitionState::Active;
        c.engaged.insert(A);
        dismantle(&mut c).unwrap();
        assert_eq!(c.state, CoalitionState::Dormant);
        assert!(c.engaged.is_empty());
        assert_eq!(c.strength(A), 0.4);
        assert!(dismantle(&mut c).is_err());
        let mut f = Coalition::new(0, sig(&[1, 2]), [A, B], 0.1, 0, 0);
        assert!(dismantle(&mut f).is_err());
        // Dormant coalitions reactivate without re-formation.
        let all: BTreeSet<_> = [A, B].into_iter().collect();
        activate(&mut c, &all, None, Outcome::Unscored, &params(), 9).unwrap();
        assert_eq!(c.state, CoalitionState::Active);
    }

    #[test]
    fn conflict_examples() {
        let c1 = coalition(1, &[A, B], 0.7);
        let c2 = coalition(2, &[A, C], 0.4);
        assert_eq!(resolve_conflict(A, &[&c2, &c1]).unwrap().coalition_id, 1);
        let mut c3 = coalition(3, &[A, B], 0.7);
        c3.activation_count = 12;
        let mut c4 = coalition(4, &[A, C], 0.7);
        c4.activation_count = 3;
        assert_eq!(resolve_conflict(A, &[&c4, &c3]).unwrap().coalition_id, 3);
        let c5 = coalition(5, &[A, C], 0.7);
        let c6 = coalition(6, &[A, C], 0.7);
        assert_eq!(resolve_conflict(A, &[&c6, &c5]).unwrap().coalition_id, 5);
        assert!(resolve_conflict::<f64>(A, &[]).is_none());
    }

    #[test]
    fn plurality_vote() {
        let v = [(A, Some(3), 0.2), (B, Some(1), 0.5), (C, Some(3), 0.4)];
        assert_eq!(coordinated_action(&v), Some(3));
        let v = [(A, Some(3), 0.5), (B, Some(1), 0.5), (C, None, 0.9)];
        assert_eq!(coordinated_action(&v), Some(1));
        assert_eq!(coordinated_action::<f64>(&[(A, None, 1.0)]), None);
        // Redundancy: removing one voter of three still yields an action.
        let v = [(A, Some(3), 0.2), (B, Some(3), 0.5)];
        assert_eq!(coordinated_action(&v), Some(3));
    }

    #[test]
    fn horizon_edge_cases() {
        assert_eq!(forgetting_horizon(0.5, 0.1, 0.05, 0.1), None);
        assert_eq!(forgetting_horizon(0.11, 0.1, 0.05, 0.12), Some(0));
    }

    proptest! {
        #[test]
        fn strengths_stay_in_band(
            eta in 0.01f64..=1.0,
            delta in 0.01f64..0.99,
            ops in prop::collection::vec(0u8..4, 1..80),
        ) {
            let p = LifecycleParams { eta_c: eta, delta, eps_diss: 0.0, ..LifecycleParams::defaults() };
            let mut reg = Registry::new();
            reg.insert(Coalition::new(0, sig(&[1, 2]), [A, B], p.t0, 0, 0));
            let all: BTreeSet<_> = [A, B].into_iter().collect();
            for (i, op) in ops.into_iter().enumerate() {
                let c = reg.get_mut(0).unwrap();
                match op {
                    0 => activate(c, &all, None, Outcome::Success, &p, i as u64).unwrap(),
                    1 => activate(c, &all, None, Outcome::Failure, &p, i as u64).unwrap(),
                    2 => { if c.state == CoalitionState::Active { dismantle(c).unwrap(); } }
                    _ => { decay_all(&mut reg, &p); }
                }
                let c = reg.get(0).unwrap();
                if !c.is_live() { break; }
                for s in c.strengths.values() {
                    prop_assert!(*s >= p.t0 && *s <= 1.0, "{}", s);
                }
            }
        }

        #[test]
        fn consecutive_successes_increase_to_one(eta in 0.01f64..0.99, n in 1usize..60) {
            let p = LifecycleParams { eta_c: eta, ..LifecycleParams::defaults() };
            let mut c = Coalition::new(0, sig(&[1, 2]), [A, B], p.t0, 0, 0);
            let all: BTreeSet<_> = [A, B].into_iter().collect();
            let mut prev = c.strength(A);
            for i in 0..n {
                activate(&mut c, &all, None, Outcome::Success, &p, i as u64).unwrap();
                let s = c.strength(A);
                prop_assert!(s <= 1.0);
                prop_assert!(s > prev || s == 1.0);
                prev = s;
            }
        }
    }
}
