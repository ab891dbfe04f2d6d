//! Identifier newtypes shared across modules.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Identifier of a simple event type at some scale. At scale 0 this is the
/// environment's event alphabet; at scale `k > 0` it is an interned
/// scale-`k-1` signature.
pub type EventType = u32;

/// Identifier of an action an agent may select.
pub type ActionType = u32;

pub type AgentId = u32;
pub type CoalitionId = u32;
pub type SuperId = u32;
pub type Tick = u64;

/// Canonically sorted, duplicate-free set of event types.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(Vec<EventType>);

impl Signature {
    /// Builds a signature, sorting and removing duplicates.
    pub fn new(types: impl IntoIterator<Item = EventType>) -> Self {
        let mut v: Vec<EventType> = types.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Signature(v)
    }

    pub fn types(&self) -> &[EventType] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, t: EventType) -> bool {
        self.0.binary_search(&t).is_ok()
    }

    pub fn is_subset_of(&self, other: &Signature) -> bool {
        self.0.iter().all(|t| other.contains(*t))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}

/// A participant in a coalition: a scale-0 agent or a promoted super-agent.
///
/// Serialized as `"a<id>"` / `"s<id>"` so it can key JSON maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemberId {
    Agent(AgentId),
    Super(SuperId),
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberId::Agent(id) => write!(f, "a{id}"),
            MemberId::Super(id) => write!(f, "s{id}"),
        }
    }
}

impl FromStr for MemberId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (tag, rest) = s.split_at(s.len().min(1));
        let id: u32 = rest.parse().map_err(|_| format!("bad member id {s:?}"))?;
        match tag {
            "a" => Ok(MemberId::Agent(id)),
            "s" => Ok(MemberId::Super(id)),
            _ => Err(format!("bad member id {s:?}")),
        }
    }
}

impl Serialize for MemberId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MemberId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Result of scoring a coordinated action against the environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
    Unscored,
}
