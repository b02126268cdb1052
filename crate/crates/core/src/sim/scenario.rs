//! Scenario files.
//!
//! A scenario is a JSON object. Every field except `strategy` has a default:
//!
//! ```json
//! {
//!   "topology": "testbed",
//!   "strategy": "concurrent",
//!   "chunks": 1000,
//!   "chunk_size": 32,
//!   "device_classes": "shared",
//!   "link": { "loss": 0.10, "collision": 0.25 },
//!   "seed": 7,
//!   "duration_s": 14400,
//!   "attacker": { "edge": ["n6", "n7"], "mode": "tamper_payload", "rate": 1.0 },
//!   "outages": [ { "edge": ["gw", "n1"], "at_us": 60000000 } ]
//! }
//! ```
//!
//! `topology` is either the string `"testbed"` or
//! `{"nodes": [{"id": "gw"}, {"id": "x1", "parent": "gw"}]}`.
//! The image size is given by `chunks` (times `chunk_size`) or by
//! `image_size` in bytes, not both.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::link::LinkModel;
use super::topology::{build_testbed_topology, NodeSpec, Topology};
use super::SimError;
use crate::agent::Strategy;
use crate::ndn::ForwarderConfig;
use crate::vendor::TruncLen;
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Preset(String),
    Inline { nodes: Vec<NodeSpec> },
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Preset("testbed".into())
    }
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, SimError> {
        match self {
            TopologySpec::Preset(p) if p == "testbed" => Ok(build_testbed_topology()),
            TopologySpec::Preset(p) => Err(SimError::invalid(
                "topology",
                format!("unknown preset {p:?} (expected \"testbed\" or an inline node list)"),
            )),
            TopologySpec::Inline { nodes } => Topology::from_specs(nodes).map_err(|e| match e {
                SimError::Topology(m) => SimError::invalid("topology.nodes", m),
                other => other,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassMode {
    /// Every device shares one class and one image.
    #[default]
    Shared,
    /// Every device has its own class and image.
    Unique,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    #[serde(alias = "TamperPayload")]
    TamperPayload,
    #[serde(alias = "ForgeTag")]
    ForgeTag,
    #[serde(alias = "ReplayStale")]
    ReplayStale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerSpec {
    pub edge: [String; 2],
    pub mode: AttackMode,
    /// Fraction of chunk Data crossing the edge that is attacked.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub edge: [String; 2],
    /// The edge delivers nothing from this simulated time on.
    pub at_us: Micros,
}

/// Clocks, timers and processing costs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub poll_period_s: u64,
    pub app_retx_base_ms: u64,
    pub app_retx_jitter_ms: u64,
    /// Per-packet handling delay before a node's radio sends a response.
    pub processing_us: Micros,
    /// Flash write cost per stored chunk.
    pub flash_write_us: Micros,
    /// Wall-clock seconds at simulated time zero.
    pub start_wall_s: u64,
    pub granularity_s: u64,
    pub granularity_offset_s: i64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            poll_period_s: 30,
            app_retx_base_ms: 10_000,
            app_retx_jitter_ms: 5_000,
            processing_us: 4_000,
            flash_write_us: 10_000,
            start_wall_s: 1_632_261_660,
            granularity_s: 3_600,
            granularity_offset_s: 0,
        }
    }
}

fn default_chunk_size() -> u32 {
    32
}

fn default_duration() -> u64 {
    4 * 3_600
}

fn default_tag_len() -> TruncLen {
    TruncLen::B8
}

pub const DEFAULT_CHUNKS: u32 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub topology: TopologySpec,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunks: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<u32>,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: u32,
    #[serde(default)]
    pub device_classes: ClassMode,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default)]
    pub forwarder: ForwarderConfig,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default = "default_tag_len")]
    pub tag_len: TruncLen,
    /// Shorthand for `forwarder.nacks_enabled`.
    #[serde(default)]
    pub nack: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacker: Option<AttackerSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outages: Vec<Outage>,
    /// Devices that run an update agent; all devices when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updating: Option<Vec<String>>,
    /// Explicit image bytes, overriding the generated image (shared classes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<Vec<u8>>,
}

impl Scenario {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            topology: TopologySpec::default(),
            strategy,
            chunks: None,
            image_size: None,
            chunk_size: default_chunk_size(),
            device_classes: ClassMode::Shared,
            link: LinkModel::default(),
            forwarder: ForwarderConfig::default(),
            timing: Timing::default(),
            tag_len: default_tag_len(),
            nack: false,
            seed: 0,
            duration_s: default_duration(),
            attacker: None,
            outages: Vec::new(),
            updating: None,
            image: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            SimError::Parse {
                line: inner.line(),
                column: inner.column(),
                field: path,
                message: inner.to_string(),
            }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::invalid("path", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Image length in bytes.
    pub fn image_len(&self) -> u64 {
        if let Some(img) = &self.image {
            return img.len() as u64;
        }
        match (self.image_size, self.chunks) {
            (Some(size), _) => size as u64,
            (None, Some(c)) => c as u64 * self.chunk_size as u64,
            (None, None) => DEFAULT_CHUNKS as u64 * self.chunk_size as u64,
        }
    }

    pub fn chunk_count(&self) -> u32 {
        self.image_len().div_ceil(self.chunk_size.max(1) as u64) as u32
    }

    pub fn forwarder_config(&self) -> ForwarderConfig {
        let mut f = self.forwarder;
        f.nacks_enabled |= self.nack;
        f
    }

    fn edge_exists(topo: &Topology, edge: &[String; 2], field: &str) -> Result<(), SimError> {
        let id = |n: &String| {
            topo.id_of(n)
                .ok_or_else(|| SimError::invalid(field, format!("unknown node {n:?}")))
        };
        let (a, b) = (id(&edge[0])?, id(&edge[1])?);
        if topo.are_adjacent(a, b) {
            Ok(())
        } else {
            Err(SimError::invalid(
                field,
                format!("{:?} and {:?} are not linked", edge[0], edge[1]),
            ))
        }
    }

    pub fn validate(&self) -> Result<Topology, SimError> {
        let topo = self.topology.build()?;
        if topo.len() < 2 {
            return Err(SimError::invalid(
                "topology",
                "needs a gateway and at least one device",
            ));
        }
        if self.chunk_size == 0 {
            return Err(SimError::invalid("chunk_size", "must be positive"));
        }
        let sources = [
            self.chunks.is_some(),
            self.image_size.is_some(),
            self.image.is_some(),
        ];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(SimError::invalid(
                "image_size",
                "give at most one of chunks, image_size, image",
            ));
        }
        if self.chunks == Some(0)
            || self.image_size == Some(0)
            || self.image.as_ref().is_some_and(Vec::is_empty)
        {
            return Err(SimError::invalid("chunks", "image must not be empty"));
        }
        if self.image_len() > u32::MAX as u64 {
            return Err(SimError::invalid("image_size", "exceeds 4 GiB"));
        }
        if self.image.is_some() && self.device_classes == ClassMode::Unique {
            return Err(SimError::invalid(
                "image",
                "explicit image requires shared classes",
            ));
        }
        self.link.validate()?;
        if self.forwarder.pit_capacity == 0 || self.forwarder.cs_capacity == 0 {
            return Err(SimError::invalid(
                "forwarder",
                "table capacities must be positive",
            ));
        }
        let t = &self.timing;
        if t.granularity_s == 0 || t.granularity_offset_s.unsigned_abs() >= t.granularity_s {
            return Err(SimError::invalid(
                "timing.granularity_s",
                "period must be positive and larger than |offset|",
            ));
        }
        if t.poll_period_s == 0 {
            return Err(SimError::invalid(
                "timing.poll_period_s",
                "must be positive",
            ));
        }
        if t.app_retx_jitter_ms > t.app_retx_base_ms {
            return Err(SimError::invalid(
                "timing.app_retx_jitter_ms",
                "must not exceed the base",
            ));
        }
        if let Some(a) = &self.attacker {
            Self::edge_exists(&topo, &a.edge, "attacker.edge")?;
            if !(0.0..=1.0).contains(&a.rate) {
                return Err(SimError::invalid("attacker.rate", "must lie in [0, 1]"));
            }
        }
        for (i, o) in self.outages.iter().enumerate() {
            Self::edge_exists(&topo, &o.edge, &format!("outages[{i}].edge"))?;
        }
        if let Some(list) = &self.updating {
            for n in list {
                match topo.id_of(n) {
                    None => {
                        return Err(SimError::invalid("updating", format!("unknown node {n:?}")))
                    }
                    Some(id) if id == topo.gateway() => {
                        return Err(SimError::invalid("updating", "the gateway does not update"))
                    }
                    _ => {}
                }
            }
        }
        Ok(topo)
    }
}

/// Copy of `scenario` with an attacker on the given edge.
pub fn inject_attacker(scenario: &Scenario, attacker: AttackerSpec) -> Result<Scenario, SimError> {
    let mut s = scenario.clone();
    s.attacker = Some(attacker);
    s.validate()?;
    Ok(s)
}

/// Copy of `scenario` whose `edge` delivers nothing from `at_us` on.
pub fn sever_uplink(
    scenario: &Scenario,
    edge: [&str; 2],
    at_us: Micros,
) -> Result<Scenario, SimError> {
    let mut s = scenario.clone();
    s.outages.push(Outage {
        edge: [edge[0].to_string(), edge[1].to_string()],
        at_us,
    });
    s.validate()?;
    Ok(s)
}
