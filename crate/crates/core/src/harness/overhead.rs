use serde::{Deserialize, Serialize};

/// Structural bytes left once header compression has elided the name.
pub const COMPRESSED_STRUCTURAL_BYTES: u64 = 6;

/// Per-frame byte budget of a signed chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadModel {
    pub mtu: u64,
    pub name_bytes: u64,
    pub structural_bytes: u64,
    pub link_header_bytes: u64,
    pub signature_bytes: u64,
    /// Elide the name and shrink structural fields to
    /// [`COMPRESSED_STRUCTURAL_BYTES`].
    pub compressed: bool,
}

impl OverheadModel {
    /// 802.15.4 frame, 16-byte name and TLV fields, 64-byte EdDSA signature.
    pub fn ieee802154_eddsa() -> Self {
        Self {
            mtu: 128,
            name_bytes: 16,
            structural_bytes: 16,
            link_header_bytes: 23,
            signature_bytes: 64,
            compressed: false,
        }
    }

    pub fn effective_name_bytes(&self) -> u64 {
        if self.compressed {
            0
        } else {
            self.name_bytes
        }
    }

    pub fn effective_structural_bytes(&self) -> u64 {
        if self.compressed {
            self.structural_bytes.min(COMPRESSED_STRUCTURAL_BYTES)
        } else {
            self.structural_bytes
        }
    }

    /// Payload bytes per frame; `None` when the overhead fills the frame.
    pub fn payload_capacity(&self) -> Option<u64> {
        let used = self
            .effective_name_bytes()
            .checked_add(self.effective_structural_bytes())?
            .checked_add(self.link_header_bytes)?
            .checked_add(self.signature_bytes)?;
        self.mtu.checked_sub(used).filter(|c| *c > 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub payload_capacity: u64,
    pub chunk_count: u64,
    pub signature_overhead_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no room for payload: {used} bytes of overhead in a {mtu}-byte frame")]
pub struct NoPayloadRoom {
    pub used: u64,
    pub mtu: u64,
}

pub fn overhead_report(
    model: &OverheadModel,
    firmware_size: u64,
) -> Result<OverheadReport, NoPayloadRoom> {
    let cap = model.payload_capacity().ok_or(NoPayloadRoom {
        used: model.effective_name_bytes()
            + model.effective_structural_bytes()
            + model.link_header_bytes
            + model.signature_bytes,
        mtu: model.mtu,
    })?;
    let chunk_count = firmware_size.div_ceil(cap);
    Ok(OverheadReport {
        payload_capacity: cap,
        chunk_count,
        signature_overhead_bytes: chunk_count * model.signature_bytes,
    })
}

/// Parse a byte size such as `36864`, `36KiB`, `36K` or `1MiB` (binary units).
pub fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: u64 = num.parse().ok()?;
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" | "kb" => 1 << 10,
        "m" | "mib" | "mb" => 1 << 20,
        _ => return None,
    };
    n.checked_mul(mult)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_and_compressed_capacity() {
        let m = OverheadModel::ieee802154_eddsa();
        assert_eq!(m.payload_capacity(), Some(9));
        let c = OverheadModel {
            compressed: true,
            ..m
        };
        assert_eq!(c.payload_capacity(), Some(35));
    }

    #[test]
    fn signature_overheads() {
        let m = OverheadModel::ieee802154_eddsa();
        let small = overhead_report(&m, 36 * 1024).unwrap();
        assert_eq!(
            (small.chunk_count, small.signature_overhead_bytes),
            (4096, 262_144)
        );
        let large = overhead_report(&m, 144 * 1024).unwrap();
        assert_eq!(
            (large.chunk_count, large.signature_overhead_bytes),
            (16_384, 1 << 20)
        );
    }

    #[test]
    fn no_room() {
        let m = OverheadModel {
            signature_bytes: 73,
            ..OverheadModel::ieee802154_eddsa()
        };
        assert!(overhead_report(&m, 10).is_err());
        let m = OverheadModel {
            signature_bytes: 72,
            ..OverheadModel::ieee802154_eddsa()
        };
        assert_eq!(overhead_report(&m, 10).unwrap().payload_capacity, 1);
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("36KiB"), Some(36_864));
        assert_eq!(parse_size("144K"), Some(147_456));
        assert_eq!(parse_size("1MiB"), Some(1 << 20));
        assert_eq!(parse_size("77"), Some(77));
        assert_eq!(parse_size("3 parsecs"), None);
    }

    proptest! {
        #[test]
        fn chunks_cover_firmware(size in 0u64..10_000_000, sig in 0u64..80) {
            let m = OverheadModel { signature_bytes: sig, ..OverheadModel::ieee802154_eddsa() };
            if let Ok(r) = overhead_report(&m, size) {
                prop_assert!(r.chunk_count * r.payload_capacity >= size);
                prop_assert!(r.chunk_count == 0 || (r.chunk_count - 1) * r.payload_capacity < size);
                prop_assert_eq!(r.signature_overhead_bytes, r.chunk_count * sig);
            }
        }
    }
}
