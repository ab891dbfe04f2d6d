//! Structured event source: recurring episodes of compound events over a
//! background of Bernoulli noise, plus response scoring.

use crate::error::{Result, SimError};
use crate::rng;
use crate::types::{ActionType, AgentId, EventType, Outcome, Signature, Tick};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventSource {
    Environment,
    AgentAction(AgentId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleEvent {
    pub event_type: EventType,
    pub tick: Tick,
    pub source: EventSource,
}

impl SimpleEvent {
    pub fn environment(event_type: EventType, tick: Tick) -> Self {
        SimpleEvent { event_type, tick, source: EventSource::Environment }
    }
}

/// A set of event types that co-occur within `window` ticks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompoundEvent {
    pub signature: Signature,
    pub window: u64,
}

impl CompoundEvent {
    /// Tick offset (relative to the compound's start) of each component, in
    /// ascending event-type order. Components are spread evenly over the window.
    pub fn component_offsets(&self) -> impl Iterator<Item = (EventType, u64)> + '_ {
        let n = self.signature.len() as u64;
        self.signature
            .types()
            .iter()
            .enumerate()
            .map(move |(i, t)| (*t, i as u64 * self.window / n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub sequence: Vec<CompoundEvent>,
    pub period: u64,
    pub gap: u64,
    /// Tick of the first playback.
    pub offset: u64,
    pub active: bool,
    /// Playbacks starting before this tick are suppressed (set on re-activation).
    pub resume_from: Tick,
    pub expected_response: Vec<ActionType>,
}

impl Episode {
    pub fn max_window(&self) -> u64 {
        self.sequence.iter().map(|c| c.window).max().unwrap_or(0)
    }

    /// Ticks between the starts of consecutive compound events in one playback.
    pub fn stride(&self) -> u64 {
        self.max_window() + self.gap
    }

    /// Start tick of compound `step` in the playback beginning at `start`.
    pub fn step_start(&self, start: Tick, step: usize) -> Tick {
        start + step as u64 * self.stride()
    }

    fn events_at(&self, tick: Tick, out: &mut Vec<SimpleEvent>) {
        if !self.active || tick < self.offset {
            return;
        }
        let start = self.offset + (tick - self.offset) / self.period * self.period;
        if start < self.resume_from {
            return;
        }
        let rel = tick - start;
        let step = (rel / self.stride()) as usize;
        let Some(compound) = self.sequence.get(step) else { return };
        let within = rel - step as u64 * self.stride();
        out.extend(
            compound
                .component_offsets()
                .filter(|(_, off)| *off == within)
                .map(|(t, _)| SimpleEvent::environment(t, tick)),
        );
    }
}

#[derive(Clone, Debug)]
pub struct Environment {
    episodes: Vec<Episode>,
    noise_rate: f64,
    noise_types: Vec<EventType>,
    n_types: u32,
    noise_seed: u64,
}

impl Environment {
    /// `noise_types` are sorted and deduplicated. Episode and noise types must
    /// lie in `[0, n_types)`.
    pub fn new(
        episodes: Vec<Episode>,
        noise_rate: f64,
        mut noise_types: Vec<EventType>,
        n_types: u32,
        seed: u64,
    ) -> Result<Self> {
        if n_types == 0 {
            return Err(SimError::contract("n_types must be positive"));
        }
        if !(0.0..=1.0).contains(&noise_rate) {
            return Err(SimError::contract(format!("noise_rate {noise_rate} outside [0,1]")));
        }
        noise_types.sort_unstable();
        noise_types.dedup();
        if let Some(t) = noise_types.iter().find(|t| **t >= n_types) {
            return Err(SimError::contract(format!("noise type {t} outside [0,{n_types})")));
        }
        for (i, ep) in episodes.iter().enumerate() {
            check_episode(ep, n_types).map_err(|m| SimError::contract(format!("episode {i}: {m}")))?;
        }
        Ok(Environment {
            episodes,
            noise_rate,
            noise_types,
            n_types,
            noise_seed: rng::substream_seed(seed, rng::ENVIRONMENT),
        })
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn n_types(&self) -> u32 {
        self.n_types
    }

    pub fn noise_types(&self) -> &[EventType] {
        &self.noise_types
    }

    /// All simple events due at `tick`: episode components in ascending type
    /// order, then noise events in ascending type order. Depends only on the
    /// environment state, the seed and `tick`.
    pub fn emit_events(&self, tick: Tick) -> Vec<SimpleEvent> {
        let mut out = Vec::new();
        for ep in &self.episodes {
            ep.events_at(tick, &mut out);
        }
        out.sort_by_key(|e| e.event_type);
        if self.noise_rate > 0.0 {
            for &t in &self.noise_types {
                let u = rng::unit_interval(rng::derive(self.noise_seed, &[tick, u64::from(t)]));
                if u < self.noise_rate {
                    out.push(SimpleEvent::environment(t, tick));
                }
            }
        }
        out
    }

    /// `Success` iff `action` equals the expected response of the step.
    /// Doing nothing (`None`) is a failure.
    pub fn score_response(
        &self,
        episode_id: usize,
        step_index: usize,
        action: Option<ActionType>,
    ) -> Result<Outcome> {
        let ep = self
            .episodes
            .get(episode_id)
            .ok_or_else(|| SimError::contract(format!("unknown episode {episode_id}")))?;
        let expected = ep.expected_response.get(step_index).ok_or_else(|| {
            SimError::contract(format!("episode {episode_id} has no step {step_index}"))
        })?;
        Ok(if action == Some(*expected) { Outcome::Success } else { Outcome::Failure })
    }

    /// Expected response of a step, if the step exists.
    pub fn expected(&self, episode_id: usize, step_index: usize) -> Option<ActionType> {
        self.episodes.get(episode_id)?.expected_response.get(step_index).copied()
    }

    pub fn deactivate_episode(&mut self, episode_id: usize) -> Result<()> {
        let ep = self
            .episodes
            .get_mut(episode_id)
            .ok_or_else(|| SimError::contract(format!("unknown episode {episode_id}")))?;
        ep.active = false;
        Ok(())
    }

    /// Re-enables an episode; playback resumes at the first period boundary
    /// at or after `tick`.
    pub fn activate_episode(&mut self, episode_id: usize, tick: Tick) -> Result<()> {
        let ep = self
            .episodes
            .get_mut(episode_id)
            .ok_or_else(|| SimError::contract(format!("unknown episode {episode_id}")))?;
        if !ep.active {
            ep.active = true;
            ep.resume_from = tick;
        }
        Ok(())
    }

    /// First active episode step whose compound signature equals `signature`.
    pub fn locate(&self, signature: &Signature) -> Option<(usize, usize)> {
        self.episodes.iter().enumerate().filter(|(_, ep)| ep.active).find_map(|(i, ep)| {
            ep.sequence.iter().position(|c| &c.signature == signature).map(|j| (i, j))
        })
    }
}

/// Checks the structural invariants of one episode; returns a message on failure.
pub fn check_episode(ep: &Episode, n_types: u32) -> std::result::Result<(), String> {
    if ep.sequence.is_empty() {
        return Err("sequence must contain at least one compound event".into());
    }
    for (j, c) in ep.sequence.iter().enumerate() {
        if c.signature.len() < 2 {
            return Err(format!("step {j}: signature needs at least 2 event types"));
        }
        if c.window == 0 {
            return Err(format!("step {j}: window must be >= 1"));
        }
        if let Some(t) = c.signature.types().iter().find(|t| **t >= n_types) {
            return Err(format!("step {j}: event type {t} outside [0,{n_types})"));
        }
    }
    if ep.gap == 0 {
        return Err("gap must be >= 1".into());
    }
    let needed = ep.sequence.len() as u64 * ep.stride();
    if ep.period < needed {
        return Err(format!("period {} shorter than playback length {needed}", ep.period));
    }
    if ep.expected_response.len() != ep.sequence.len() {
        return Err("expected_response length must equal sequence length".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn episode(sig: &[u32], window: u64, period: u64, gap: u64) -> Episode {
        Episode {
            sequence: vec![CompoundEvent { signature: Signature::new(sig.iter().copied()), window }],
            period,
            gap,
            offset: 0,
            active: true,
            resume_from: 0,
            expected_response: vec![0],
        }
    }

    fn types_at(env: &Environment, t: Tick) -> Vec<u32> {
        env.emit_events(t).iter().map(|e| e.event_type).collect()
    }

    #[test]
    fn single_episode_playback() {
        let env = Environment::new(vec![episode(&[5, 2], 2, 10, 3)], 0.0, vec![], 10, 1).unwrap();
        assert_eq!(
            env.emit_events(0),
            vec![SimpleEvent::environment(2, 0)]
        );
        assert_eq!(env.emit_events(1), vec![SimpleEvent::environment(5, 1)]);
        let stream: Vec<_> = (0..10).flat_map(|t| env.emit_events(t)).collect();
        assert_eq!(stream, vec![SimpleEvent::environment(2, 0), SimpleEvent::environment(5, 1)]);
        assert_eq!(types_at(&env, 10), vec![2]);
        assert_eq!(types_at(&env, 11), vec![5]);
    }

    #[test]
    fn silent_environment() {
        let env = Environment::new(vec![], 0.0, vec![0, 1, 2], 5, 9).unwrap();
        assert!((0..100).all(|t| env.emit_events(t).is_empty()));
    }

    #[test]
    fn certain_noise() {
        let env = Environment::new(vec![], 1.0, vec![3, 1, 4], 5, 9).unwrap();
        let ev = env.emit_events(7);
        assert_eq!(ev.len(), 3);
        assert!(ev.iter().all(|e| e.tick == 7));
        assert_eq!(ev.iter().map(|e| e.event_type).collect::<Vec<_>>(), vec![1, 3, 4]);
    }

    #[test]
    fn noise_is_reproducible() {
        let a = Environment::new(vec![], 0.3, vec![0, 1, 2, 3], 5, 11).unwrap();
        let b = Environment::new(vec![], 0.3, vec![0, 1, 2, 3], 5, 11).unwrap();
        let sa: Vec<_> = (0..200).flat_map(|t| a.emit_events(t)).collect();
        let sb: Vec<_> = (0..200).flat_map(|t| b.emit_events(t)).collect();
        assert_eq!(sa, sb);
        assert!(!sa.is_empty());
        // Query order does not matter.
        assert_eq!(a.emit_events(150), b.emit_events(150));
    }

    #[test]
    fn scoring() {
        let mut ep = episode(&[2, 5], 1, 10, 1);
        ep.sequence.push(CompoundEvent { signature: Signature::new([7, 8]), window: 1 });
        ep.expected_response = vec![0, 4];
        let env = Environment::new(vec![ep], 0.0, vec![], 10, 0).unwrap();
        assert_eq!(env.score_response(0, 1, Some(4)).unwrap(), Outcome::Success);
        assert_eq!(env.score_response(0, 1, Some(9)).unwrap(), Outcome::Failure);
        assert_eq!(env.score_response(0, 0, Some(0)).unwrap(), Outcome::Success);
        assert_eq!(env.score_response(0, 0, None).unwrap(), Outcome::Failure);
        assert!(env.score_response(1, 0, Some(0)).is_err());
        assert!(env.score_response(0, 2, Some(0)).is_err());
    }

    #[test]
    fn deactivation_silences_playback() {
        let mut env = Environment::new(vec![episode(&[2, 5], 2, 10, 3)], 0.0, vec![], 10, 0).unwrap();
        env.deactivate_episode(0).unwrap();
        assert!((0..30).all(|t| env.emit_events(t).is_empty()));
        assert!(env.deactivate_episode(99).is_err());
    }

    #[test]
    fn reactivation_resumes_at_next_period_boundary() {
        // Hand-walked schedule: period 10, components at offsets 0 and 1.
        // Deactivated before tick 0, re-activated at tick 5: the playback that
        // started at tick 0 stays silent, the one at tick 10 plays.
        let mut env = Environment::new(vec![episode(&[2, 5], 2, 10, 3)], 0.0, vec![], 10, 0).unwrap();
        env.deactivate_episode(0).unwrap();
        let mut trace = Vec::new();
        for t in 0..20 {
            if t == 5 {
                env.activate_episode(0, t).unwrap();
            }
            trace.extend(env.emit_events(t).into_iter().map(|e| (e.tick, e.event_type)));
        }
        assert_eq!(trace, vec![(10, 2), (11, 5)]);
    }

    #[test]
    fn multi_step_schedule() {
        let ep = Episode {
            sequence: vec![
                CompoundEvent { signature: Signature::new([2, 5]), window: 1 },
                CompoundEvent { signature: Signature::new([8, 9]), window: 1 },
            ],
            period: 10,
            gap: 3,
            offset: 2,
            active: true,
            resume_from: 0,
            expected_response: vec![0, 1],
        };
        let env = Environment::new(vec![ep], 0.0, vec![], 10, 0).unwrap();
        let trace: Vec<_> = (0..20)
            .flat_map(|t| env.emit_events(t))
            .map(|e| (e.tick, e.event_type))
            .collect();
        assert_eq!(
            trace,
            vec![(2, 2), (2, 5), (6, 8), (6, 9), (12, 2), (12, 5), (16, 8), (16, 9)]
        );
        assert_eq!(env.locate(&Signature::new([8, 9])), Some((0, 1)));
        assert_eq!(env.locate(&Signature::new([2, 9])), None);
    }

    #[test]
    fn episode_checks() {
        assert!(check_episode(&episode(&[2, 5], 2, 10, 3), 10).is_ok());
        assert!(check_episode(&episode(&[2], 2, 10, 3), 10).is_err());
        assert!(check_episode(&episode(&[2, 5], 2, 4, 3), 10).is_err());
        assert!(check_episode(&episode(&[2, 50], 2, 10, 3), 10).is_err());
        assert!(check_episode(&episode(&[2, 5], 0, 10, 3), 10).is_err());
    }
}
