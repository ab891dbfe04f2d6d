//! Expected behaviour of small configurations, derived by walking the episode
//! schedule directly. Shares no code with the engine: playback, detection,
//! voting, learning and strength arithmetic are all restated here.

use crate::agent::IntentMode;
use crate::config::{RunConfig, ScheduleAction};
use crate::error::{Result, SimError};
use crate::types::{ActionType, AgentId, EventType, Outcome, Signature, Tick};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const MAX_AGENTS: usize = 4;
pub const MAX_EPISODES: usize = 2;
pub const MAX_TICKS: u64 = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub ticks: u64,
    pub coalitions: Vec<OracleCoalition>,
    /// First scale-1 joint detection among the super-agents, if any.
    pub first_super_candidate: Option<SuperCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCoalition {
    pub signature: Signature,
    pub members: Vec<AgentId>,
    pub formed_at: Tick,
    pub activations: Vec<OracleActivation>,
    pub promoted_at: Option<Tick>,
    pub dissipated_at: Option<Tick>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleActivation {
    pub tick: Tick,
    /// Every member's strength after the update (members move in lockstep).
    pub strength: f64,
    pub action: Option<ActionType>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperCandidate {
    pub tick: Tick,
    /// Scale-0 signatures the super-agents passed within the window.
    pub signatures: Vec<Signature>,
}

fn refuse(msg: impl Into<String>) -> SimError {
    SimError::OracleRefused(msg.into())
}

/// Checks the configuration lies inside what the schedule walk can predict.
pub fn check_bounds(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let p = &cfg.parameters;
    if cfg.population.agents.len() > MAX_AGENTS {
        return Err(refuse(format!("{} agents exceed the limit of {MAX_AGENTS}", cfg.population.agents.len())));
    }
    if cfg.environment.episodes.len() > MAX_EPISODES {
        return Err(refuse(format!(
            "{} episodes exceed the limit of {MAX_EPISODES}",
            cfg.environment.episodes.len()
        )));
    }
    if cfg.ticks > MAX_TICKS {
        return Err(refuse(format!("{} ticks exceed the limit of {MAX_TICKS}", cfg.ticks)));
    }
    if cfg.environment.noise_rate > 0.0 && !cfg.effective_noise_types().is_empty() {
        return Err(refuse("noise makes the schedule stochastic"));
    }
    if p.p_join < 1.0 {
        return Err(refuse("p_join below 1 makes formation stochastic"));
    }
    if p.intent_mode != IntentMode::Argmax {
        return Err(refuse("softmax intention is stochastic"));
    }
    if cfg.environment.echo_actions {
        for a in &cfg.population.agents {
            let acts = cfg.population.agents.iter().flat_map(|b| b.action_table.values().flat_map(|r| r.keys()));
            for act in acts {
                if a.sensitivity.get(act).is_some_and(|w| *w >= p.theta_att) {
                    return Err(refuse(format!("an agent attends the echo of action {act}")));
                }
            }
        }
    }
    Ok(())
}

struct Walk<'a> {
    cfg: &'a RunConfig,
    tables: Vec<BTreeMap<EventType, BTreeMap<ActionType, f64>>>,
    coalitions: Vec<Live>,
}

struct Live {
    out: OracleCoalition,
    strength: f64,
    active_until: Option<Tick>,
    dead: bool,
}

/// Episode components due at `tick`, given each episode's resume tick.
fn playback(cfg: &RunConfig, tick: Tick, resume: &[Option<Tick>]) -> Vec<EventType> {
    let mut out = Vec::new();
    for (i, ep) in cfg.environment.episodes.iter().enumerate() {
        let Some(resume) = resume[i] else { continue };
        if tick < ep.offset {
            continue;
        }
        let k = (tick - ep.offset) / ep.period;
        let start = ep.offset + k * ep.period;
        if start < resume {
            continue;
        }
        let widest = ep.sequence.iter().map(|c| c.window).max().unwrap_or(0);
        let stride = widest + ep.gap;
        for (j, c) in ep.sequence.iter().enumerate() {
            let mut sig = c.signature.clone();
            sig.sort_unstable();
            let n = sig.len() as u64;
            for (idx, t) in sig.iter().enumerate() {
                if start + j as u64 * stride + idx as u64 * c.window / n == tick {
                    out.push(*t);
                }
            }
        }
    }
    out
}

fn lowest_best<K: Ord + Copy>(items: impl IntoIterator<Item = (K, f64)>) -> Option<K> {
    let mut sorted: Vec<(K, f64)> = items.into_iter().collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.first().map(|(k, _)| *k)
}

impl<'a> Walk<'a> {
    fn sens(&self, a: AgentId, t: EventType) -> f64 {
        self.cfg.population.agents[a as usize].sensitivity.get(&t).copied().unwrap_or(0.0)
    }

    fn capacity(&self, a: AgentId) -> usize {
        self.cfg.population.agents[a as usize].capacity_limit.unwrap_or(self.cfg.parameters.capacity)
    }

    fn busy(&self, a: AgentId, except: Option<usize>) -> usize {
        self.coalitions
            .iter()
            .enumerate()
            .filter(|(i, c)| Some(*i) != except && !c.dead && c.active_until.is_some())
            .filter(|(_, c)| c.out.members.contains(&a))
            .count()
    }

    fn step_of(&self, sig: &Signature) -> Option<(usize, usize)> {
        self.cfg.environment.episodes.iter().enumerate().find_map(|(i, ep)| {
            ep.sequence
                .iter()
                .position(|c| Signature::new(c.signature.iter().copied()) == *sig)
                .map(|j| (i, j))
        })
    }

    fn fire(&mut self, idx: usize, tick: Tick, active: &[bool]) -> Result<()> {
        let p = &self.cfg.parameters;
        let members = self.coalitions[idx].out.members.clone();
        for a in &members {
            if self.busy(*a, Some(idx)) >= self.capacity(*a) {
                return Err(refuse(format!("agent {a} would face a capacity conflict at tick {tick}")));
            }
        }
        let sig = self.coalitions[idx].out.signature.clone();
        let mut votes: BTreeMap<ActionType, usize> = BTreeMap::new();
        let mut ballots = Vec::new();
        for a in &members {
            let focus = lowest_best(sig.types().iter().map(|t| (*t, self.sens(*a, *t))));
            let intention = focus.and_then(|f| {
                let row = self.tables[*a as usize].get(&f)?;
                lowest_best(row.iter().filter(|(_, w)| **w >= p.theta_act).map(|(k, w)| (*k, *w)))
            });
            if let Some(i) = intention {
                *votes.entry(i).or_default() += 1;
            }
            ballots.push((*a, focus));
        }
        let action = lowest_best(votes.iter().map(|(a, n)| (*a, *n as f64)));
        let outcome = match self.step_of(&sig) {
            Some((ep, j)) if active[ep] => {
                if action == Some(self.cfg.environment.episodes[ep].expected_response[j]) {
                    Outcome::Success
                } else {
                    Outcome::Failure
                }
            }
            _ => Outcome::Unscored,
        };
        let c = &mut self.coalitions[idx];
        let s = c.strength;
        c.strength = match outcome {
            Outcome::Success => s + p.eta_c * p.mu_success * (1.0 - s),
            Outcome::Unscored => s + p.eta_c * (1.0 - s),
            Outcome::Failure => (s * (1.0 - p.eta_c * p.mu_failure)).max(p.t0),
        };
        c.active_until = Some(tick + p.action_duration);
        c.out.activations.push(OracleActivation { tick, strength: c.strength, action, outcome });
        let n = c.out.activations.len() as u64;
        if c.out.promoted_at.is_none() && p.max_scale > 1 && n >= p.n_promote && c.strength >= p.theta_promote {
            c.out.promoted_at = Some(tick);
        }
        if let (Some(act), true) = (action, outcome != Outcome::Unscored) {
            for (a, focus) in ballots {
                if let Some(f) = focus {
                    let w = self.tables[a as usize].entry(f).or_default().entry(act).or_insert(0.0);
                    *w = if outcome == Outcome::Success { *w + p.eta_a * (1.0 - *w) } else { *w * (1.0 - p.eta_a) };
                }
            }
        }
        Ok(())
    }

    /// Joint detection over one closed window.
    fn detect(&mut self, obs: &[(AgentId, EventType)], tick: Tick, active: &[bool]) -> Result<Vec<Signature>> {
        let union: BTreeSet<EventType> = obs.iter().map(|o| o.1).collect();
        let agents: BTreeSet<AgentId> = obs.iter().map(|o| o.0).collect();
        if union.len() < 2 || agents.len() < 2 {
            return Ok(Vec::new());
        }
        let units_for = |sig: &BTreeSet<EventType>| -> BTreeSet<AgentId> {
            obs.iter().filter(|o| sig.contains(&o.1)).map(|o| o.0).collect()
        };
        let mut fired = Vec::new();
        let mut covered = BTreeSet::new();
        let mut known: Vec<usize> = (0..self.coalitions.len()).filter(|i| !self.coalitions[*i].dead).collect();
        known.sort_by(|a, b| self.coalitions[*a].out.signature.cmp(&self.coalitions[*b].out.signature));
        for i in known {
            let types: BTreeSet<EventType> = self.coalitions[i].out.signature.types().iter().copied().collect();
            if types.is_subset(&union) && units_for(&types).len() >= 2 {
                covered.extend(types.iter().copied());
                fired.push(self.coalitions[i].out.signature.clone());
                self.fire(i, tick, active)?;
            }
        }
        let residual: BTreeSet<EventType> = union.difference(&covered).copied().collect();
        let involved = units_for(&residual);
        if residual.len() >= 2 && involved.len() >= 2 {
            let free: Vec<AgentId> =
                involved.into_iter().filter(|a| self.busy(*a, None) < self.capacity(*a)).collect();
            if free.len() >= 2 {
                let sig = Signature::new(residual.iter().copied());
                self.coalitions.push(Live {
                    out: OracleCoalition {
                        signature: sig.clone(),
                        members: free,
                        formed_at: tick,
                        activations: Vec::new(),
                        promoted_at: None,
                        dissipated_at: None,
                    },
                    strength: self.cfg.parameters.t0,
                    active_until: None,
                    dead: false,
                });
                let idx = self.coalitions.len() - 1;
                fired.push(sig);
                self.fire(idx, tick, active)?;
            }
        }
        Ok(fired)
    }
}

/// Super-agent relevance of a scale-0 signature: 1 for its own trigger,
/// otherwise the mean over the signature's types of the members' averaged
/// sensitivity (types no member knows count as 0).
fn super_relevance(cfg: &RunConfig, own: &Signature, members: &[AgentId], sig: &Signature) -> f64 {
    if sig == own {
        return 1.0;
    }
    let joint = |t: EventType| -> f64 {
        let known: Vec<f64> = members
            .iter()
            .filter_map(|a| cfg.population.agents[*a as usize].sensitivity.get(&t).copied())
            .collect();
        if known.is_empty() { 0.0 } else { known.iter().sum::<f64>() / known.len() as f64 }
    };
    sig.types().iter().map(|t| joint(*t)).sum::<f64>() / sig.len() as f64
}

/// Walks the schedule of an oracle-eligible configuration.
pub fn predict(cfg: &RunConfig) -> Result<OracleReport> {
    check_bounds(cfg)?;
    let p = &cfg.parameters;
    let window = cfg.window_at(0);
    let mut walk = Walk {
        cfg,
        tables: cfg.population.agents.iter().map(|a| a.action_table.clone()).collect(),
        coalitions: Vec::new(),
    };
    let mut resume: Vec<Option<Tick>> =
        cfg.environment.episodes.iter().map(|e| e.active.then_some(0)).collect();
    let mut pending: Vec<(AgentId, EventType)> = Vec::new();
    let mut opened: Option<Tick> = None;
    // super-agent (by coalition index) -> passed scale-0 signatures with tick
    let mut super_obs: Vec<(usize, Signature)> = Vec::new();
    let mut super_opened: Option<Tick> = None;
    let mut first_super = None;

    for tick in 0..cfg.ticks {
        for s in cfg.schedule.iter().filter(|s| s.tick == tick) {
            resume[s.episode] = match (s.action, resume[s.episode]) {
                (ScheduleAction::Deactivate, _) => None,
                (ScheduleAction::Activate, None) => Some(tick),
                (ScheduleAction::Activate, r) => r,
            };
        }
        let active: Vec<bool> = resume.iter().map(Option::is_some).collect();
        for t in playback(cfg, tick, &resume) {
            for a in 0..cfg.population.agents.len() as AgentId {
                if walk.sens(a, t) >= p.theta_att {
                    opened.get_or_insert(tick);
                    pending.push((a, t));
                }
            }
        }
        let mut detected = Vec::new();
        if opened.is_some_and(|o| tick + 1 >= o + window) {
            let obs = std::mem::take(&mut pending);
            opened = None;
            detected = walk.detect(&obs, tick, &active)?;
        }

        // scale 1: super-agents (including any promoted just now) attend this tick's detections
        if first_super.is_none() && !detected.is_empty() {
            let supers: Vec<usize> = (0..walk.coalitions.len())
                .filter(|i| walk.coalitions[*i].out.promoted_at.is_some() && !walk.coalitions[*i].dead)
                .collect();
            for i in &supers {
                let c = &walk.coalitions[*i].out;
                for sig in &detected {
                    if super_relevance(cfg, &c.signature, &c.members, sig) >= p.theta_att {
                        super_opened.get_or_insert(tick);
                        super_obs.push((*i, sig.clone()));
                    }
                }
            }
        }
        if first_super.is_none() && super_opened.is_some_and(|o| tick + 1 >= o + p.super_window) {
            let units: BTreeSet<usize> = super_obs.iter().map(|o| o.0).collect();
            let sigs: BTreeSet<Signature> = super_obs.iter().map(|o| o.1.clone()).collect();
            if units.len() >= 2 && sigs.len() >= 2 {
                first_super = Some(SuperCandidate { tick, signatures: sigs.into_iter().collect() });
            }
            super_obs.clear();
            super_opened = None;
        }

        // dismantle, then decay
        for c in walk.coalitions.iter_mut().filter(|c| !c.dead) {
            if let Some(until) = c.active_until {
                if tick >= until {
                    c.active_until = None;
                } else {
                    continue;
                }
            }
            if c.out.activations.is_empty() {
                c.dead = true;
                c.out.dissipated_at = Some(tick);
                continue;
            }
            c.strength = p.t0 + (c.strength - p.t0) * (1.0 - p.delta);
            if c.strength < p.eps_diss {
                c.dead = true;
                c.out.dissipated_at = Some(tick);
            }
        }
    }
    Ok(OracleReport {
        ticks: cfg.ticks,
        coalitions: walk.coalitions.into_iter().map(|c| c.out).collect(),
        first_super_candidate: first_super,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_agent(ticks: u64) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{
                "seed": 1, "ticks": {ticks},
                "environment": {{"n_types": 8, "episodes": [
                    {{"sequence": [{{"signature": [2, 5], "window": 1}}], "period": 10, "gap": 1,
                      "expected_response": [6]}}
                ]}},
                "population": {{"agents": [
                    {{"sensitivity": {{"2": 0.9}}, "action_table": {{"2": {{"6": 0.5}}}}}},
                    {{"sensitivity": {{"5": 0.9}}, "action_table": {{"5": {{"6": 0.5}}}}}}
                ]}},
                "parameters": {{"p_join": 1.0, "eta_c": 0.5}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn forms_at_first_window_close_and_reinforces() {
        let r = predict(&two_agent(30)).unwrap();
        assert_eq!(r.coalitions.len(), 1);
        let c = &r.coalitions[0];
        assert_eq!(c.formed_at, 0);
        assert_eq!(c.activations.iter().map(|a| a.tick).collect::<Vec<_>>(), vec![0, 10, 20]);
        assert_eq!(c.activations[0].strength, 0.55);
        assert_eq!(c.activations[0].outcome, Outcome::Success);
    }

    #[test]
    fn refuses_large_or_stochastic_configs() {
        let mut c = two_agent(30);
        c.ticks = 201;
        assert!(matches!(predict(&c), Err(SimError::OracleRefused(_))));
        let mut c = two_agent(30);
        c.parameters.p_join = 0.5;
        assert!(matches!(predict(&c), Err(SimError::OracleRefused(_))));
        let mut c = two_agent(30);
        for _ in 0..8 {
            c.population.agents.push(c.population.agents[0].clone());
        }
        assert!(matches!(predict(&c), Err(SimError::OracleRefused(_))));
    }

    #[test]
    fn playback_spreads_components_over_the_window() {
        let mut c = two_agent(30);
        c.environment.episodes[0].sequence[0].window = 2;
        let on = [Some(0)];
        assert_eq!(playback(&c, 0, &on), vec![2]);
        assert_eq!(playback(&c, 1, &on), vec![5]);
        assert!(playback(&c, 2, &on).is_empty());
        assert_eq!(playback(&c, 10, &on), vec![2]);
        assert!(playback(&c, 0, &[None]).is_empty());
    }
}
