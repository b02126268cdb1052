//! Fixtures shared by the benchmarks.

use fwup_core::agent::Strategy;
use fwup_core::naming::BaseName;
use fwup_core::sim::Scenario;

pub fn base() -> BaseName {
    BaseName::new("saclay", "riot", "m3", 1_632_261_600).expect("valid name")
}

/// Deterministic filler image of `len` bytes.
pub fn image(len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| (i.wrapping_mul(31) ^ (i >> 3)) as u8)
        .collect()
}

/// The 31-node preset with a reduced chunk count.
pub fn preset(strategy: Strategy, chunks: u32) -> Scenario {
    let mut sc = Scenario::new(strategy);
    sc.chunks = Some(chunks);
    sc.seed = 1;
    sc
}
