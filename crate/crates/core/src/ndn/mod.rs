//! Minimal NDN-style forwarder: Interest/Data/Nack packets, a pending
//! Interest table with aggregation and local-consumer registration, an LRU
//! content store, a FIB with longest-prefix match and hop-wise Interest
//! retransmission timers.

mod cs;
mod fib;
mod forwarder;
mod packet;
mod pit;

use serde::{Deserialize, Serialize};

pub use cs::{cs_insert, ContentStore};
pub use fib::Fib;
pub use forwarder::{
    on_data, on_interest, tick_retransmissions, AppHook, DataAction, DropReason, Expired,
    Forwarder, ForwarderConfig, HookVerdict, InterestAction, NackAction, NoApp, RetxOutcome,
    AGENT_CONSUMER,
};
pub use packet::{
    Auth, Data, Interest, Nack, NackReason, Packet, PacketSizeModel, DEFAULT_INTEREST_LIFETIME_MS,
};
pub use pit::{ConsumerId, Pit, PitEntry};

/// A forwarding face: a link to a neighbor, or the local application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FaceId(pub u32);

impl FaceId {
    pub const LOCAL: FaceId = FaceId(u32::MAX);

    pub fn is_local(self) -> bool {
        self == Self::LOCAL
    }
}
