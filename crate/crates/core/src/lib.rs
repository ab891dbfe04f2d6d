//! Deterministic multi-agent simulation of selection-driven cognition:
//! agents attend and act, coalitions form around compound events, and
//! consolidated coalitions become agents one scale up.
//!
//! The domain types are generic over the [`Scalar`] used for weights and
//! strengths. Configuration, traces and reports always use `f64`.

pub mod agent;
pub mod coalition;
pub mod config;
pub mod engine;
pub mod environment;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod sweep;
pub mod trace;
pub mod types;

pub use config::RunConfig;
pub use error::{Result, SimError};
pub use scalar::Scalar;
pub use types::{ActionType, AgentId, CoalitionId, EventType, MemberId, Outcome, Signature, SuperId, Tick};

pub type Simulation = engine::Simulation<f64>;
pub type Simulation32 = engine::Simulation<f32>;
pub type AgentContext = agent::AgentContext<f64>;
pub type AgentContext32 = agent::AgentContext<f32>;
pub type Coalition = coalition::Coalition<f64>;
pub type Coalition32 = coalition::Coalition<f32>;
pub type Registry = coalition::Registry<f64>;
pub type LifecycleParams = coalition::LifecycleParams<f64>;
pub type SuperAgent = hierarchy::SuperAgent<f64>;
pub type Hierarchy = hierarchy::Hierarchy<f64>;
