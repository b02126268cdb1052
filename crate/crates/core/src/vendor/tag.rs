use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::VendorError;
use crate::naming::BaseName;

type HmacSha256 = Hmac<Sha256>;

/// Pre-shared secret of a device class.
#[derive(Clone, PartialEq, Eq)]
pub struct Psk(Vec<u8>);

impl Psk {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for Psk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Psk(..)")
    }
}

/// Number of HMAC-SHA256 bytes transmitted with each chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TruncLen(usize);

impl TruncLen {
    pub const B8: TruncLen = TruncLen(8);
    pub const B16: TruncLen = TruncLen(16);
    pub const B32: TruncLen = TruncLen(32);

    pub fn new(len: usize) -> Result<Self, VendorError> {
        match len {
            8 | 16 | 32 => Ok(Self(len)),
            other => Err(VendorError::InvalidTruncation(other)),
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for TruncLen {
    type Error = VendorError;

    fn try_from(v: usize) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TruncLen> for usize {
    fn from(t: TruncLen) -> usize {
        t.0
    }
}

/// First `trunc` bytes of HMAC-SHA256(psk, base-name TLV ‖ index (u32 BE) ‖ payload).
pub fn tag_chunk(
    base: &BaseName,
    index: u32,
    payload: &[u8],
    psk: &Psk,
    trunc: TruncLen,
) -> Vec<u8> {
    let mut mac = HmacSha256::new_from_slice(psk.as_bytes()).expect("HMAC accepts any key length");
    mac.update(&base.to_wire());
    mac.update(&index.to_be_bytes());
    mac.update(payload);
    let full = mac.finalize().into_bytes();
    full[..trunc.get()].to_vec()
}
