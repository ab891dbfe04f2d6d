//! Run configuration: a single JSON document, validated before any work.

use crate::agent::IntentMode;
use crate::coalition::LifecycleParams;
use crate::environment::{check_episode, CompoundEvent, Episode};
use crate::error::{Result, SimError};
use crate::hierarchy::HierarchyParams;
use crate::scalar::Scalar;
use crate::types::{ActionType, EventType, Signature};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub ticks: u64,
    pub environment: EnvironmentConfig,
    pub population: PopulationConfig,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub n_types: u32,
    #[serde(default)]
    pub noise_rate: f64,
    /// Defaults to every type not used by an episode signature.
    #[serde(default)]
    pub noise_types: Option<Vec<EventType>>,
    #[serde(default)]
    pub allow_noise_overlap: bool,
    /// Re-broadcast coordinated actions as attendable events on the next tick.
    #[serde(default = "yes")]
    pub echo_actions: bool,
    #[serde(default)]
    pub episodes: Vec<EpisodeConfig>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundConfig {
    pub signature: Vec<EventType>,
    pub window: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub sequence: Vec<CompoundConfig>,
    pub period: u64,
    pub gap: u64,
    #[serde(default)]
    pub offset: u64,
    #[serde(default = "yes")]
    pub active: bool,
    pub expected_response: Vec<ActionType>,
}

impl EpisodeConfig {
    pub fn to_episode(&self) -> Episode {
        Episode {
            sequence: self
                .sequence
                .iter()
                .map(|c| CompoundEvent {
                    signature: Signature::new(c.signature.iter().copied()),
                    window: c.window,
                })
                .collect(),
            period: self.period,
            gap: self.gap,
            offset: self.offset,
            active: self.active,
            resume_from: 0,
            expected_response: self.expected_response.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub agents: Vec<AgentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub sensitivity: BTreeMap<EventType, f64>,
    #[serde(default)]
    pub action_table: BTreeMap<EventType, BTreeMap<ActionType, f64>>,
    /// Overrides `parameters.capacity` for this agent.
    #[serde(default)]
    pub capacity_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Parameters {
    pub theta_att: f64,
    pub theta_act: f64,
    pub eta_a: f64,
    pub eta_c: f64,
    pub delta: f64,
    pub t0: f64,
    pub eps_diss: f64,
    pub capacity: usize,
    pub p_join: f64,
    pub mu_success: f64,
    pub mu_failure: f64,
    pub theta_promote: f64,
    pub n_promote: u64,
    pub max_scale: u32,
    pub intent_mode: IntentMode,
    /// Scale-0 detection window; defaults to the widest compound window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detect_window: Option<u64>,
    pub super_window: u64,
    pub episode_gap: u64,
    pub action_duration: u64,
    pub recent_capacity: usize,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            theta_att: 0.5,
            theta_act: 0.1,
            eta_a: 0.1,
            eta_c: 0.3,
            delta: 0.05,
            t0: 0.1,
            eps_diss: 0.12,
            capacity: 4,
            p_join: 0.8,
            mu_success: 1.0,
            mu_failure: 1.0,
            theta_promote: 0.8,
            n_promote: 5,
            max_scale: 3,
            intent_mode: IntentMode::Argmax,
            detect_window: None,
            super_window: 6,
            episode_gap: 5,
            action_duration: 1,
            recent_capacity: 16,
        }
    }
}

impl Parameters {
    pub fn lifecycle<S: Scalar>(&self) -> LifecycleParams<S> {
        LifecycleParams {
            t0: S::of(self.t0),
            eta_c: S::of(self.eta_c),
            mu_success: S::of(self.mu_success),
            mu_failure: S::of(self.mu_failure),
            delta: S::of(self.delta),
            eps_diss: S::of(self.eps_diss),
            p_join: S::of(self.p_join),
            capacity: self.capacity,
            action_duration: self.action_duration,
        }
    }

    pub fn hierarchy<S: Scalar>(&self) -> HierarchyParams<S> {
        HierarchyParams {
            theta_promote: S::of(self.theta_promote),
            n_promote: self.n_promote,
            max_scale: self.max_scale,
            episode_gap: self.episode_gap,
            t0: S::of(self.t0),
            eta_c: S::of(self.eta_c),
            delta: S::of(self.delta),
            eps_diss: S::of(self.eps_diss),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleAction {
    #[default]
    Deactivate,
    Activate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub episode: usize,
    pub tick: u64,
    #[serde(default)]
    pub action: ScheduleAction,
}

fn check(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok { Ok(()) } else { Err(SimError::validation(field, message())) }
}

fn unit(value: f64, field: &str) -> Result<()> {
    check((0.0..=1.0).contains(&value), field, || format!("must be in [0,1], got {value}"))
}

fn open_unit(value: f64, field: &str) -> Result<()> {
    check(value > 0.0 && value < 1.0, field, || format!("must be in (0,1), got {value}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::validation("<document>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Noise types actually used by the environment.
    /// Detection window of a scale.
    pub fn window_at(&self, scale: u32) -> u64 {
        if scale > 0 {
            return self.parameters.super_window;
        }
        self.parameters.detect_window.unwrap_or_else(|| {
            let widest = self.environment.episodes.iter().flat_map(|e| &e.sequence).map(|c| c.window).max();
            widest.unwrap_or(1).max(1)
        })
    }

    pub fn effective_noise_types(&self) -> Vec<EventType> {
        match &self.environment.noise_types {
            Some(v) => v.clone(),
            None => {
                let used = self.signature_types();
                (0..self.environment.n_types).filter(|t| !used.contains(t)).collect()
            }
        }
    }

    fn signature_types(&self) -> BTreeSet<EventType> {
        self.environment
            .episodes
            .iter()
            .flat_map(|e| e.sequence.iter().flat_map(|c| c.signature.iter().copied()))
            .collect()
    }

    /// Rejects out-of-range values; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        let env = &self.environment;
        let n = env.n_types;
        check(n >= 1, "environment.n_types", || "must be positive".into())?;
        unit(env.noise_rate, "environment.noise_rate")?;
        if let Some(types) = &env.noise_types {
            for t in types {
                check(*t < n, "environment.noise_types", || format!("type {t} outside [0,{n})"))?;
            }
            if !env.allow_noise_overlap {
                let used = self.signature_types();
                if let Some(t) = types.iter().find(|t| used.contains(t)) {
                    return Err(SimError::validation(
                        "environment.noise_types",
                        format!("type {t} overlaps an episode signature (set allow_noise_overlap)"),
                    ));
                }
            }
        }
        for (i, ep) in env.episodes.iter().enumerate() {
            let field = format!("environment.episodes[{i}]");
            for (j, c) in ep.sequence.iter().enumerate() {
                let distinct: BTreeSet<_> = c.signature.iter().collect();
                check(distinct.len() == c.signature.len(), &format!("{field}.sequence[{j}].signature"), || {
                    "duplicate event types".into()
                })?;
            }
            check_episode(&ep.to_episode(), n).map_err(|m| SimError::validation(&field, m))?;
            if env.echo_actions {
                for a in &ep.expected_response {
                    check(*a < n, &format!("{field}.expected_response"), || {
                        format!("action {a} outside [0,{n}) while echo_actions is on")
                    })?;
                }
            }
        }
        for (i, a) in self.population.agents.iter().enumerate() {
            let field = format!("population.agents[{i}]");
            for (t, w) in &a.sensitivity {
                check(*t < n, &format!("{field}.sensitivity"), || format!("type {t} outside [0,{n})"))?;
                unit(*w, &format!("{field}.sensitivity.{t}"))?;
            }
            for (t, row) in &a.action_table {
                check(*t < n, &format!("{field}.action_table"), || format!("type {t} outside [0,{n})"))?;
                for (act, w) in row {
                    unit(*w, &format!("{field}.action_table.{t}.{act}"))?;
                    if env.echo_actions {
                        check(*act < n, &format!("{field}.action_table.{t}"), || {
                            format!("action {act} outside [0,{n}) while echo_actions is on")
                        })?;
                    }
                }
            }
            if let Some(k) = a.capacity_limit {
                check(k >= 1, &format!("{field}.capacity_limit"), || "must be >= 1".into())?;
            }
        }
        let p = &self.parameters;
        unit(p.theta_att, "parameters.theta_att")?;
        unit(p.theta_act, "parameters.theta_act")?;
        open_unit(p.eta_a, "parameters.eta_a")?;
        check(p.eta_c > 0.0 && p.eta_c <= 1.0, "parameters.eta_c", || {
            format!("must be in (0,1], got {}", p.eta_c)
        })?;
        open_unit(p.delta, "parameters.delta")?;
        unit(p.t0, "parameters.t0")?;
        unit(p.eps_diss, "parameters.eps_diss")?;
        check(p.capacity >= 1, "parameters.capacity", || "must be >= 1".into())?;
        check(p.p_join > 0.0 && p.p_join <= 1.0, "parameters.p_join", || {
            format!("must be in (0,1], got {}", p.p_join)
        })?;
        check(p.mu_success >= 0.0 && p.eta_c * p.mu_success <= 1.0, "parameters.mu_success", || {
            format!("must be >= 0 with eta_c * mu_success <= 1, got {}", p.mu_success)
        })?;
        check(p.mu_failure >= 0.0 && p.mu_failure.is_finite(), "parameters.mu_failure", || {
            format!("must be a finite value >= 0, got {}", p.mu_failure)
        })?;
        unit(p.theta_promote, "parameters.theta_promote")?;
        check(p.n_promote >= 1, "parameters.n_promote", || "must be >= 1".into())?;
        check(p.max_scale >= 1, "parameters.max_scale", || "must be >= 1".into())?;
        if let IntentMode::Softmax { temperature } = p.intent_mode {
            check(temperature > 0.0 && temperature.is_finite(), "parameters.intent_mode.temperature", || {
                format!("must be positive, got {temperature}")
            })?;
        }
        if let Some(w) = p.detect_window {
            check(w >= 1, "parameters.detect_window", || "must be >= 1".into())?;
        }
        check(p.super_window >= 1, "parameters.super_window", || "must be >= 1".into())?;
        check(p.episode_gap >= 1, "parameters.episode_gap", || "must be >= 1".into())?;
        check(p.action_duration >= 1, "parameters.action_duration", || "must be >= 1".into())?;
        check(p.recent_capacity >= 1, "parameters.recent_capacity", || "must be >= 1".into())?;
        for (i, s) in self.schedule.iter().enumerate() {
            check(s.episode < env.episodes.len(), &format!("schedule[{i}].episode"), || {
                format!("unknown episode {}", s.episode)
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::from_json(
            r#"{
                "seed": 1, "ticks": 10,
                "environment": {"n_types": 10, "episodes": [
                    {"sequence": [{"signature": [2, 5], "window": 2}], "period": 10, "gap": 3,
                     "expected_response": [7]}
                ]},
                "population": {"agents": [{"sensitivity": {"2": 0.9}, "action_table": {"2": {"7": 0.5}}}]}
            }"#,
        )
        .unwrap()
    }

    fn field_of(e: SimError) -> String {
        match e {
            SimError::Validation { field, .. } => field,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn defaults_and_noise_types() {
        let c = base();
        c.validate().unwrap();
        assert_eq!(c.parameters, Parameters::default());
        assert!(c.environment.echo_actions);
        assert_eq!(c.effective_noise_types(), vec![0, 1, 3, 4, 6, 7, 8, 9]);
    }

    #[test]
    fn rejects_out_of_range_fields_by_name() {
        let mut c = base();
        c.parameters.theta_att = 1.5;
        assert_eq!(field_of(c.validate().unwrap_err()), "parameters.theta_att");

        let mut c = base();
        c.parameters.delta = 1.0;
        assert_eq!(field_of(c.validate().unwrap_err()), "parameters.delta");

        let mut c = base();
        c.environment.episodes[0].period = 4;
        assert_eq!(field_of(c.validate().unwrap_err()), "environment.episodes[0]");

        let mut c = base();
        c.environment.episodes[0].sequence[0].signature = vec![2, 2];
        assert_eq!(field_of(c.validate().unwrap_err()), "environment.episodes[0].sequence[0].signature");

        let mut c = base();
        c.environment.noise_types = Some(vec![5]);
        assert_eq!(field_of(c.validate().unwrap_err()), "environment.noise_types");
        c.environment.allow_noise_overlap = true;
        c.validate().unwrap();

        let mut c = base();
        c.schedule.push(ScheduleEntry { episode: 3, tick: 1, action: ScheduleAction::Deactivate });
        assert_eq!(field_of(c.validate().unwrap_err()), "schedule[0].episode");

        let mut c = base();
        c.population.agents[0].sensitivity.insert(3, -0.1);
        assert_eq!(field_of(c.validate().unwrap_err()), "population.agents[0].sensitivity.3");
    }

    #[test]
    fn unknown_fields_and_bad_json_are_validation_errors() {
        assert!(RunConfig::from_json("{").unwrap_err().is_validation());
        let err = RunConfig::from_json(r#"{"seed":1,"ticks":1,"environment":{"n_types":1},"population":{"agents":[]},"bogus":1}"#)
            .unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn json_round_trip() {
        let c = base();
        assert_eq!(RunConfig::from_json(&c.to_json_pretty()).unwrap(), c);
    }
}
