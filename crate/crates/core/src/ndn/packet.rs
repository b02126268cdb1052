use serde::{Deserialize, Serialize};

use crate::naming::{FirmwareName, NameSizeModel};

/// Authentication material carried by a Data packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Auth {
    /// Truncated HMAC-SHA256 prefix over the chunk.
    HmacTag(Vec<u8>),
    /// Asymmetric signature over the manifest body.
    ManifestSignature(Vec<u8>),
    None,
}

impl Auth {
    pub fn len(&self) -> usize {
        match self {
            Auth::HmacTag(t) => t.len(),
            Auth::ManifestSignature(s) => s.len(),
            Auth::None => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interest {
    pub name: FirmwareName,
    pub nonce: u32,
    pub lifetime_ms: u32,
}

impl Interest {
    pub fn new(name: FirmwareName, nonce: u32) -> Self {
        Self {
            name,
            nonce,
            lifetime_ms: DEFAULT_INTEREST_LIFETIME_MS,
        }
    }
}

pub const DEFAULT_INTEREST_LIFETIME_MS: u32 = 2_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Data {
    pub name: FirmwareName,
    pub payload: Vec<u8>,
    pub auth: Auth,
    pub freshness_ms: u32,
}

/// Application-level reason carried in a Nack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NackReason {
    NoSuchVersion,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nack {
    pub name: FirmwareName,
    pub reason: NackReason,
    pub freshness_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(Data),
    Nack(Nack),
}

impl Packet {
    pub fn name(&self) -> &FirmwareName {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
            Packet::Nack(n) => &n.name,
        }
    }
}

/// Serialized-size model for packets.
///
/// Sizes are `name + payload + auth + structural overhead`, with the
/// structural overhead per packet type held as constants here. The defaults
/// reproduce the experiment numbers: a 45-byte chunk name, 32 bytes of
/// payload and an 8-byte tag give a 92-byte Data packet, i.e. a 115-byte
/// frame behind a 23-byte link header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketSizeModel {
    pub name: NameSizeModel,
    /// Outer TLV, nonce and lifetime.
    pub interest_overhead: usize,
    /// Outer TLV, content TLV and signature TLVs.
    pub data_overhead: usize,
    pub nack_overhead: usize,
}

impl Default for PacketSizeModel {
    fn default() -> Self {
        Self {
            name: NameSizeModel::default(),
            interest_overhead: 12,
            data_overhead: 7,
            nack_overhead: 8,
        }
    }
}

impl PacketSizeModel {
    pub fn interest_size(&self, i: &Interest) -> usize {
        i.name.encoded_size(&self.name) + self.interest_overhead
    }

    pub fn data_size(&self, d: &Data) -> usize {
        d.name.encoded_size(&self.name) + d.payload.len() + d.auth.len() + self.data_overhead
    }

    pub fn nack_size(&self, n: &Nack) -> usize {
        n.name.encoded_size(&self.name) + self.nack_overhead
    }

    pub fn size(&self, p: &Packet) -> usize {
        match p {
            Packet::Interest(i) => self.interest_size(i),
            Packet::Data(d) => self.data_size(d),
            Packet::Nack(n) => self.nack_size(n),
        }
    }
}
