/// Simulated or wall-clock time in microseconds.
pub type Micros = u64;

pub mod agent;
pub mod harness;
pub mod naming;
pub mod ndn;
pub mod sim;
pub mod vendor;
