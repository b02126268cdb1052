//! Seeded discrete-event simulation of firmware roll-outs over a lossy
//! multi-hop tree.

mod engine;
mod link;
mod metrics;
mod scenario;
mod topology;

pub use engine::{run, RetxTotals, RunOutput, RunSummary, Simulation};
pub use link::{LinkModel, Transmission};
pub use metrics::{
    read_csv, to_csv_string, write_csv, MalformedCsv, MetricEvent, MetricsRecord, CSV_HEADER,
};
pub use scenario::{
    inject_attacker, sever_uplink, AttackMode, AttackerSpec, ClassMode, Outage, Scenario, Timing,
    TopologySpec, DEFAULT_CHUNKS,
};
pub use topology::{build_testbed_topology, NodeId, NodeSpec, TopoNode, Topology, LONG_PATH};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("frame of {frame} bytes exceeds the {mtu}-byte MTU")]
    MtuExceeded { frame: usize, mtu: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("invalid scenario field `{field}`: {message}")]
    ScenarioInvalid { field: String, message: String },
    #[error("invalid scenario at line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Vendor(#[from] crate::vendor::VendorError),
}

impl SimError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::ScenarioInvalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the scenario input rather than the simulator.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SimError::ScenarioInvalid { .. } | SimError::Parse { .. } | SimError::Topology(_)
        )
    }
}
