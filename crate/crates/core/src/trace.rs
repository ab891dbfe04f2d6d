//! Run trace: JSON Lines, one record per line, fields in a fixed order.
//!
//! The first line is a `Header` carrying the full configuration, so every
//! derived metric can be recomputed from the trace alone.

use crate::config::RunConfig;
use crate::environment::EventSource;
use crate::error::{Result, SimError};
use crate::types::{ActionType, CoalitionId, EventType, MemberId, Outcome, Signature, SuperId, Tick};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

pub const TRACE_FORMAT: &str = "cogsim-trace/1";

/// Per-tick phases; records within one (tick, scale) appear in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Header,
    Emit,
    Attend,
    Detect,
    Form,
    Conflict,
    Activate,
    Dismantle,
    Decay,
    Promote,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    /// Event type at scale 0, interned symbol above.
    pub event_type: EventType,
    pub relevance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RecordBody {
    Header {
        format: String,
        /// The run configuration as a JSON document; see [`TraceRecord::header`].
        config: serde_json::Value,
    },
    Event {
        event_type: EventType,
        source: EventSource,
    },
    Verdict {
        unit: MemberId,
        verdicts: Vec<VerdictEntry>,
    },
    CandidateDetected {
        signature: Signature,
        involved: Vec<MemberId>,
        novel: bool,
    },
    CoalitionFormed {
        coalition_id: CoalitionId,
        signature: Signature,
        members: Vec<MemberId>,
        strength: f64,
    },
    ConflictResolved {
        unit: MemberId,
        contenders: Vec<CoalitionId>,
        /// Contenders the unit stays bound to; empty when it has no free slot.
        winners: Vec<CoalitionId>,
    },
    Activated {
        coalition_id: CoalitionId,
        signature: Signature,
        participants: Vec<MemberId>,
        strengths: BTreeMap<MemberId, f64>,
        mean_strength: f64,
        action: Option<ActionType>,
        outcome: Outcome,
        expected: Option<ActionType>,
        intentions: BTreeMap<MemberId, Option<ActionType>>,
    },
    Dismantled {
        coalition_id: CoalitionId,
    },
    Decayed {
        /// (coalition, mean strength after decay)
        coalitions: Vec<(CoalitionId, f64)>,
    },
    Dissipated {
        coalition_id: CoalitionId,
        mean_strength: f64,
        reason: DissipationReason,
    },
    Promoted {
        super_id: SuperId,
        coalition_id: CoalitionId,
        super_scale: u32,
        signature: Signature,
        symbol: EventType,
    },
    Retired {
        super_id: SuperId,
        coalition_id: CoalitionId,
    },
    EpisodeStored {
        super_id: SuperId,
        trace_id: u64,
        sequence: Vec<Signature>,
        strength: f64,
        reinforced: bool,
    },
    EpisodeForgotten {
        super_id: SuperId,
        trace_id: u64,
        sequence: Vec<Signature>,
    },
    RecallHit {
        super_id: SuperId,
        predicted: Signature,
        actual: Signature,
    },
    RecallMiss {
        super_id: SuperId,
        predicted: Signature,
        actual: Signature,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissipationReason {
    /// Mean strength decayed below the dissipation threshold.
    Forgotten,
    /// Formed but never activated.
    Stillborn,
    /// Fewer than two members left after super-agents retired.
    MemberRetired,
}

impl RecordBody {
    pub fn phase(&self) -> Phase {
        use RecordBody::*;
        match self {
            Header { .. } => Phase::Header,
            Event { .. } => Phase::Emit,
            Verdict { .. } => Phase::Attend,
            CandidateDetected { .. } => Phase::Detect,
            CoalitionFormed { .. } => Phase::Form,
            ConflictResolved { .. } => Phase::Conflict,
            Activated { .. } => Phase::Activate,
            Dismantled { .. } => Phase::Dismantle,
            Decayed { .. } | Dissipated { .. } => Phase::Decay,
            Promoted { .. } | Retired { .. } => Phase::Promote,
            EpisodeStored { .. } | EpisodeForgotten { .. } | RecallHit { .. } | RecallMiss { .. } => {
                Phase::Memory
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        use RecordBody::*;
        match self {
            Header { .. } => "Header",
            Event { .. } => "Event",
            Verdict { .. } => "Verdict",
            CandidateDetected { .. } => "CandidateDetected",
            CoalitionFormed { .. } => "CoalitionFormed",
            ConflictResolved { .. } => "ConflictResolved",
            Activated { .. } => "Activated",
            Dismantled { .. } => "Dismantled",
            Decayed { .. } => "Decayed",
            Dissipated { .. } => "Dissipated",
            Promoted { .. } => "Promoted",
            Retired { .. } => "Retired",
            EpisodeStored { .. } => "EpisodeStored",
            EpisodeForgotten { .. } => "EpisodeForgotten",
            RecallHit { .. } => "RecallHit",
            RecallMiss { .. } => "RecallMiss",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: Tick,
    pub scale: u32,
    #[serde(flatten)]
    pub body: RecordBody,
}

impl TraceRecord {
    pub fn header(config: &RunConfig) -> Self {
        TraceRecord {
            tick: 0,
            scale: 0,
            body: RecordBody::Header {
                format: TRACE_FORMAT.into(),
                config: serde_json::to_value(config).expect("config serializes"),
            },
        }
    }

    /// The configuration carried by a header record.
    pub fn header_config(&self) -> Option<RunConfig> {
        match &self.body {
            RecordBody::Header { config, .. } => serde_json::from_value(config.clone()).ok(),
            _ => None,
        }
    }

    pub fn order_key(&self) -> (Tick, u32, Phase) {
        (self.tick, self.scale, self.body.phase())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

/// Destination for trace records.
pub trait RecordSink {
    fn record(&mut self, rec: TraceRecord) -> Result<()>;
}

impl RecordSink for Vec<TraceRecord> {
    fn record(&mut self, rec: TraceRecord) -> Result<()> {
        self.push(rec);
        Ok(())
    }
}

/// Writes JSON Lines and hashes every byte written.
pub struct TraceWriter<W: Write> {
    out: W,
    hasher: Sha256,
    count: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out, hasher: Sha256::new(), count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Flushes and returns the hex SHA-256 of everything written.
    pub fn finish(mut self) -> Result<String> {
        self.out.flush()?;
        Ok(hex::encode(self.hasher.finalize().as_slice()))
    }
}

impl<W: Write> RecordSink for TraceWriter<W> {
    fn record(&mut self, rec: TraceRecord) -> Result<()> {
        let mut line = rec.to_line();
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.hasher.update(line.as_bytes());
        self.count += 1;
        Ok(())
    }
}

/// Hex SHA-256 of arbitrary bytes (used for trace and CSV digests).
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

/// Parses a trace and checks its ordering: a single leading header, then
/// records non-decreasing in (tick, scale, phase).
pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    let mut last: Option<(Tick, u32, Phase)> = None;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| SimError::Trace { line: line_no, message: format!("malformed record: {e}") })?;
        let is_header = matches!(rec.body, RecordBody::Header { .. });
        if records.is_empty() != is_header {
            let message = if is_header { "duplicate header" } else { "trace must start with a Header record" };
            return Err(SimError::Trace { line: line_no, message: message.into() });
        }
        if let RecordBody::Header { format, config } = &rec.body {
            if format != TRACE_FORMAT {
                return Err(SimError::Trace { line: line_no, message: format!("unsupported format {format:?}") });
            }
            serde_json::from_value::<RunConfig>(config.clone())
                .map_err(|e| SimError::Trace { line: line_no, message: format!("header config: {e}") })?;
        }
        let key = rec.order_key();
        if let Some(prev) = last {
            if key < prev {
                return Err(SimError::Trace {
                    line: line_no,
                    message: format!(
                        "{} record at tick {} scale {} is out of order (after {:?} at tick {} scale {})",
                        rec.body.kind(), rec.tick, rec.scale, prev.2, prev.0, prev.1
                    ),
                });
            }
        }
        last = Some(key);
        records.push(rec);
    }
    if records.is_empty() {
        return Err(SimError::Trace { line: 1, message: "empty trace".into() });
    }
    Ok(records)
}

pub fn read_trace_file(path: &std::path::Path) -> Result<Vec<TraceRecord>> {
    let f = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(f))
}
