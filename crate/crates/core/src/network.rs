//! Message passing between agents.
//!
//! Every infrastructure agent reports its confirmed tracks to the ego each
//! tick. Depending on the topology, infrastructure agents also send their
//! detections (or, optionally, their tracks) to each other ("crosstalk") with
//! a fixed per-pair probability and absorb what they receive naively. Their
//! reports to the ego then share information, a correlation the ego does not
//! know about. The ego never transmits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::fuse_at_tracking;
use crate::geometry::ClassLabel;
use crate::scenario::AgentKind;
use crate::sensing::Detection;
use crate::tracking::{GaussianEstimate, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    NoCorrelation,
    MinorCorrelation,
    MajorCorrelation,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [
        TopologyKind::NoCorrelation,
        TopologyKind::MinorCorrelation,
        TopologyKind::MajorCorrelation,
    ];

    pub fn default_probability(self) -> f64 {
        match self {
            TopologyKind::NoCorrelation => 0.0,
            TopologyKind::MinorCorrelation => 0.1,
            TopologyKind::MajorCorrelation => 0.8,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            TopologyKind::NoCorrelation => "none",
            TopologyKind::MinorCorrelation => "minor",
            TopologyKind::MajorCorrelation => "major",
        }
    }
}

/// What an infrastructure agent sends to its peers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrosstalkPayload {
    /// Its current detections.
    #[default]
    Detections,
    /// Its confirmed tracks, the same payload it reports to the ego.
    Tracks,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyModel {
    pub kind: TopologyKind,
    /// Per-tick probability that an infrastructure agent sends to each other one.
    pub infra_crosstalk_probability: f64,
    #[serde(default)]
    pub crosstalk_payload: CrosstalkPayload,
    #[serde(default)]
    pub latency_ticks: u64,
}

impl TopologyModel {
    pub fn new(kind: TopologyKind) -> Self {
        TopologyModel {
            kind,
            infra_crosstalk_probability: kind.default_probability(),
            crosstalk_payload: CrosstalkPayload::default(),
            latency_ticks: 0,
        }
    }

    pub fn with_probability(mut self, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("crosstalk probability {p} outside [0, 1]")));
        }
        self.infra_crosstalk_probability = p;
        Ok(self)
    }
}

/// One track as transmitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    /// Sender-local track id.
    pub track_id: u64,
    pub estimate: GaussianEstimate,
    pub class_label: ClassLabel,
    /// Agents whose data entered the estimate.
    pub sources: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender_id: String,
    pub receiver_id: String,
    pub tick_sent: u64,
    pub payload: Vec<TrackReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    ToEgo,
    Crosstalk,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub sender_id: String,
    pub receiver_id: String,
    pub kind: RouteKind,
}

/// Agent identity as seen by the router.
#[derive(Debug, Clone, Copy)]
pub struct Node<'a> {
    pub agent_id: &'a str,
    pub kind: AgentKind,
}

/// Routes for one tick. Crosstalk draws are made for every ordered
/// infrastructure pair in agent order, so the stream layout depends only on
/// the agent list. Crosstalk routes come first, then the reports to the ego.
pub fn route_tick(nodes: &[Node<'_>], topology: &TopologyModel, rng: &mut dyn RngCore) -> Vec<Route> {
    let ego = nodes.iter().find(|n| n.kind == AgentKind::EgoVehicle);
    let infra: Vec<&Node<'_>> = nodes.iter().filter(|n| n.kind == AgentKind::Infrastructure).collect();
    let mut routes = Vec::new();
    for a in &infra {
        for b in &infra {
            if a.agent_id == b.agent_id {
                continue;
            }
            if rng.random::<f64>() < topology.infra_crosstalk_probability {
                routes.push(Route {
                    sender_id: a.agent_id.to_string(),
                    receiver_id: b.agent_id.to_string(),
                    kind: RouteKind::Crosstalk,
                });
            }
        }
    }
    if let Some(ego) = ego {
        for a in &infra {
            routes.push(Route {
                sender_id: a.agent_id.to_string(),
                receiver_id: ego.agent_id.to_string(),
                kind: RouteKind::ToEgo,
            });
        }
    }
    routes
}

/// Detections as reports: position and measurement covariance, zero velocity
/// with `velocity_variance`. Report ids are indices into `detections`.
pub fn report_detections(detections: &[Detection], velocity_variance: f64) -> Vec<TrackReport> {
    detections
        .iter()
        .enumerate()
        .map(|(i, d)| TrackReport {
            track_id: i as u64,
            estimate: GaussianEstimate::from_position(d.position, &d.covariance, velocity_variance),
            class_label: d.class_label,
            sources: [d.agent_id.clone()].into(),
        })
        .collect()
}

/// Confirmed tracks of a tracker, ready to send.
pub fn report_tracks(tracker: &Tracker) -> Vec<TrackReport> {
    tracker
        .confirmed()
        .map(|t| TrackReport {
            track_id: t.track_id,
            estimate: t.estimate.clone(),
            class_label: t.class_label,
            sources: t.contributors.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageLogRecord {
    pub sender: String,
    pub receiver: String,
    pub tick: u64,
    pub payload_size: usize,
}

/// In-flight messages with fixed latency.
#[derive(Debug, Default)]
pub struct Network {
    pub latency_ticks: u64,
    pending: Vec<Message>,
    pub log: Vec<MessageLogRecord>,
}

impl Network {
    pub fn new(latency_ticks: u64) -> Self {
        Network {
            latency_ticks,
            pending: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn send(&mut self, msg: Message) {
        self.log.push(MessageLogRecord {
            sender: msg.sender_id.clone(),
            receiver: msg.receiver_id.clone(),
            tick: msg.tick_sent,
            payload_size: msg.payload.len(),
        });
        self.pending.push(msg);
    }

    /// Removes and returns messages due at `tick`, grouped by receiver in send order.
    pub fn deliver(&mut self, tick: u64) -> BTreeMap<String, Vec<Message>> {
        let latency = self.latency_ticks;
        let (due, later): (Vec<Message>, Vec<Message>) =
            std::mem::take(&mut self.pending).into_iter().partition(|m| m.tick_sent + latency <= tick);
        self.pending = later;
        let mut out: BTreeMap<String, Vec<Message>> = BTreeMap::new();
        for m in due {
            out.entry(m.receiver_id.clone()).or_default().push(m);
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    pub fn write_log(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.log {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Infrastructure agents absorb crosstalk through naive fusion at tracking.
pub fn ingest_crosstalk(tracker: &mut Tracker, messages: &[Message], tick: u64) -> Result<()> {
    for m in messages {
        fuse_at_tracking(tracker, &m.payload, &m.sender_id, tick)?;
    }
    Ok(())
}
