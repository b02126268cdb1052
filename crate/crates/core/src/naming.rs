//! Hierarchical firmware namespace.
//!
//! Every artifact of a roll-out is addressed as
//! `/<deployment>/<vendor>/<class>/<epoch>/<suffix…>` where the suffix is
//! one of `manifest`, `firmware` or `chunk/<id>`. The first four components
//! form the *base name* shared by all artifacts of one image.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// TLV type of an NDN name.
pub const TLV_NAME: u8 = 0x07;
/// TLV type of a generic name component.
pub const TLV_COMPONENT: u8 = 0x08;

const SUFFIX_MANIFEST: &str = "manifest";
const SUFFIX_FIRMWARE: &str = "firmware";
const SUFFIX_CHUNK: &str = "chunk";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("malformed name: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> NameError {
    NameError::Malformed(msg.into())
}

/// Trailing part of a firmware name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Suffix {
    Manifest,
    Firmware,
    Chunk(u32),
}

/// The suffix-free prefix `/deployment/vendor/class/epoch` of an image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BaseName {
    deployment: Arc<str>,
    vendor: Arc<str>,
    class: Arc<str>,
    epoch: u64,
}

/// A fully qualified firmware name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FirmwareName {
    base: BaseName,
    suffix: Suffix,
}

fn check_identifier(s: &str) -> Result<(), NameError> {
    if s.is_empty() {
        return Err(malformed("empty identifier component"));
    }
    if s.contains('/') {
        return Err(malformed(format!("identifier {s:?} contains '/'")));
    }
    Ok(())
}

fn parse_unsigned<T: FromStr>(s: &str, what: &str) -> Result<T, NameError> {
    // `u64::from_str` accepts a leading '+', which would break round-trips.
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(format!(
            "{what} {s:?} is not an unsigned integer"
        )));
    }
    s.parse()
        .map_err(|_| malformed(format!("{what} {s:?} out of range")))
}

impl BaseName {
    pub fn new(
        deployment: impl Into<String>,
        vendor: impl Into<String>,
        class: impl Into<String>,
        epoch: u64,
    ) -> Result<Self, NameError> {
        let (deployment, vendor, class) = (deployment.into(), vendor.into(), class.into());
        check_identifier(&deployment)?;
        check_identifier(&vendor)?;
        check_identifier(&class)?;
        Ok(Self {
            deployment: deployment.into(),
            vendor: vendor.into(),
            class: class.into(),
            epoch,
        })
    }

    pub fn deployment(&self) -> &str {
        &self.deployment
    }

    pub fn vendor(&self) -> &str {
        &self.vendor
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Same deployment, vendor and device class (epochs may differ).
    pub fn same_class(&self, other: &BaseName) -> bool {
        self.deployment == other.deployment
            && self.vendor == other.vendor
            && self.class == other.class
    }

    pub fn with_epoch(&self, epoch: u64) -> BaseName {
        BaseName {
            epoch,
            ..self.clone()
        }
    }

    pub fn manifest(&self) -> FirmwareName {
        FirmwareName::new(self.clone(), Suffix::Manifest)
    }

    pub fn firmware(&self) -> FirmwareName {
        FirmwareName::new(self.clone(), Suffix::Firmware)
    }

    pub fn chunk(&self, index: u32) -> FirmwareName {
        FirmwareName::new(self.clone(), Suffix::Chunk(index))
    }

    pub fn components(&self) -> Vec<String> {
        vec![
            self.deployment.to_string(),
            self.vendor.to_string(),
            self.class.to_string(),
            self.epoch.to_string(),
        ]
    }

    /// Canonical binary form: a name TLV holding the four base components.
    pub fn to_wire(&self) -> Vec<u8> {
        encode_components(&self.components())
    }
}

impl FirmwareName {
    pub fn new(base: BaseName, suffix: Suffix) -> Self {
        Self { base, suffix }
    }

    pub fn base(&self) -> &BaseName {
        &self.base
    }

    pub fn suffix(&self) -> Suffix {
        self.suffix
    }

    pub fn epoch(&self) -> u64 {
        self.base.epoch
    }

    pub fn chunk_index(&self) -> Option<u32> {
        match self.suffix {
            Suffix::Chunk(i) => Some(i),
            _ => None,
        }
    }

    pub fn is_chunk(&self) -> bool {
        matches!(self.suffix, Suffix::Chunk(_))
    }

    pub fn is_manifest(&self) -> bool {
        self.suffix == Suffix::Manifest
    }

    /// Check the chunk id against a known chunk count.
    pub fn check_chunk_bound(&self, chunk_count: u32) -> Result<(), NameError> {
        match self.suffix {
            Suffix::Chunk(i) if i >= chunk_count => Err(malformed(format!(
                "chunk id {i} outside [0, {chunk_count})"
            ))),
            _ => Ok(()),
        }
    }

    /// Parse a component sequence such as
    /// `["OilRig-3", "IoTCompany-5", "Valve-7", "1632261600", "manifest"]`.
    pub fn parse<S: AsRef<str>>(components: &[S]) -> Result<Self, NameError> {
        if components.len() < 5 {
            return Err(malformed(format!(
                "expected at least 5 components, got {}",
                components.len()
            )));
        }
        let c = |i: usize| components[i].as_ref();
        let epoch = parse_unsigned(c(3), "epoch")?;
        let base = BaseName::new(c(0), c(1), c(2), epoch)?;
        let suffix = match (c(4), components.len()) {
            (SUFFIX_MANIFEST, 5) => Suffix::Manifest,
            (SUFFIX_FIRMWARE, 5) => Suffix::Firmware,
            (SUFFIX_CHUNK, 6) => Suffix::Chunk(parse_unsigned(c(5), "chunk id")?),
            (SUFFIX_CHUNK, n) => {
                return Err(malformed(format!(
                    "chunk suffix needs 6 components, got {n}"
                )))
            }
            (SUFFIX_MANIFEST | SUFFIX_FIRMWARE, n) => {
                return Err(malformed(format!("expected 5 components, got {n}")))
            }
            (other, _) => return Err(malformed(format!("unknown suffix {other:?}"))),
        };
        Ok(Self { base, suffix })
    }

    pub fn components(&self) -> Vec<String> {
        let mut out = self.base.components();
        match self.suffix {
            Suffix::Manifest => out.push(SUFFIX_MANIFEST.into()),
            Suffix::Firmware => out.push(SUFFIX_FIRMWARE.into()),
            Suffix::Chunk(i) => {
                out.push(SUFFIX_CHUNK.into());
                out.push(i.to_string());
            }
        }
        out
    }

    pub fn to_wire(&self) -> Vec<u8> {
        encode_components(&self.components())
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, NameError> {
        let (components, used) = decode_components(bytes)?;
        if used != bytes.len() {
            return Err(malformed("trailing bytes after name"));
        }
        Self::parse(&components)
    }

    /// Size of this name under a parameterized encoding model.
    pub fn encoded_size(&self, model: &NameSizeModel) -> usize {
        let b = &self.base;
        let mut raw = b.deployment.len() + b.vendor.len() + b.class.len() + digits(b.epoch);
        let count = match self.suffix {
            Suffix::Manifest => {
                raw += SUFFIX_MANIFEST.len();
                5
            }
            Suffix::Firmware => {
                raw += SUFFIX_FIRMWARE.len();
                5
            }
            Suffix::Chunk(i) => {
                raw += SUFFIX_CHUNK.len() + digits(i as u64);
                6
            }
        };
        raw + count * model.per_component + model.per_name
    }
}

/// Parse a component sequence into a [`FirmwareName`].
pub fn parse_name<S: AsRef<str>>(components: &[S]) -> Result<FirmwareName, NameError> {
    FirmwareName::parse(components)
}

/// Format a name into its component sequence.
pub fn format_name(name: &FirmwareName) -> Vec<String> {
    name.components()
}

impl fmt::Display for BaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "/{}/{}/{}/{}",
            self.deployment, self.vendor, self.class, self.epoch
        )
    }
}

impl fmt::Display for FirmwareName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.components() {
            write!(f, "/{c}")?;
        }
        Ok(())
    }
}

impl FromStr for FirmwareName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix('/')
            .ok_or_else(|| malformed(format!("{s:?} does not start with '/'")))?;
        let parts: Vec<&str> = rest.split('/').collect();
        Self::parse(&parts)
    }
}

/// Per-component and per-name structural overhead used to size names.
///
/// The default (2 bytes per component, 2 bytes per name) matches the
/// TLV encoding produced by [`FirmwareName::to_wire`] for components shorter
/// than 253 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSizeModel {
    pub per_component: usize,
    pub per_name: usize,
}

impl Default for NameSizeModel {
    fn default() -> Self {
        Self {
            per_component: 2,
            per_name: 2,
        }
    }
}

impl NameSizeModel {
    pub const ZERO: NameSizeModel = NameSizeModel {
        per_component: 0,
        per_name: 0,
    };

    pub fn size_of<S: AsRef<str>>(&self, components: &[S]) -> usize {
        let raw: usize = components.iter().map(|c| c.as_ref().len()).sum();
        raw + components.len() * self.per_component + self.per_name
    }
}

/// Epoch quantization for a device class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Granularity {
    period: u64,
    offset: i64,
}

impl Granularity {
    pub fn new(period: u64, offset: i64) -> Result<Self, NameError> {
        if period == 0 {
            return Err(malformed("granularity period must be positive"));
        }
        if offset.unsigned_abs() >= period {
            return Err(malformed(format!(
                "granularity offset {offset} not within (-{period}, {period})"
            )));
        }
        Ok(Self { period, offset })
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn daily_utc() -> Self {
        Self {
            period: 86_400,
            offset: 0,
        }
    }
}

/// Greatest epoch `e <= t` with `e ≡ offset (mod period)`.
///
/// The offset is the phase of the epoch grid relative to UTC, so local
/// midnight in UTC+2 is `Granularity::new(86_400, -7_200)`.
pub fn align_epoch(t: u64, g: Granularity) -> u64 {
    let period = g.period as i128;
    let shifted = t as i128 - g.offset as i128;
    let aligned = shifted - shifted.rem_euclid(period) + g.offset as i128;
    // Only reachable for t smaller than a negative offset.
    aligned.max(0) as u64
}

fn digits(mut n: u64) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

fn push_varnum(out: &mut Vec<u8>, n: usize) {
    if n < 253 {
        out.push(n as u8);
    } else {
        out.push(253);
        out.extend_from_slice(&(n as u16).to_be_bytes());
    }
}

fn read_varnum(bytes: &[u8]) -> Result<(usize, usize), NameError> {
    match bytes.first() {
        None => Err(malformed("truncated TLV length")),
        Some(&b) if b < 253 => Ok((b as usize, 1)),
        Some(&253) if bytes.len() >= 3 => {
            Ok((u16::from_be_bytes([bytes[1], bytes[2]]) as usize, 3))
        }
        Some(_) => Err(malformed("unsupported TLV length encoding")),
    }
}

fn encode_components<S: AsRef<str>>(components: &[S]) -> Vec<u8> {
    let mut inner = Vec::new();
    for c in components {
        let c = c.as_ref().as_bytes();
        inner.push(TLV_COMPONENT);
        push_varnum(&mut inner, c.len());
        inner.extend_from_slice(c);
    }
    let mut out = Vec::with_capacity(inner.len() + 4);
    out.push(TLV_NAME);
    push_varnum(&mut out, inner.len());
    out.extend_from_slice(&inner);
    out
}

/// Decode a name TLV, returning its components and the bytes consumed.
pub fn decode_components(bytes: &[u8]) -> Result<(Vec<String>, usize), NameError> {
    if bytes.first() != Some(&TLV_NAME) {
        return Err(malformed("missing name TLV"));
    }
    let (len, n) = read_varnum(&bytes[1..])?;
    let start = 1 + n;
    let end = start + len;
    if bytes.len() < end {
        return Err(malformed("truncated name TLV"));
    }
    let mut components = Vec::new();
    let mut pos = start;
    while pos < end {
        if bytes[pos] != TLV_COMPONENT {
            return Err(malformed("unexpected TLV inside name"));
        }
        let (clen, n) = read_varnum(&bytes[pos + 1..end])?;
        let cstart = pos + 1 + n;
        if cstart + clen > end {
            return Err(malformed("truncated name component"));
        }
        let s = std::str::from_utf8(&bytes[cstart..cstart + clen])
            .map_err(|_| malformed("component is not UTF-8"))?;
        components.push(s.to_owned());
        pos = cstart + clen;
    }
    Ok((components, end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_oil_rig_manifest_name() {
        let n = parse_name(&[
            "OilRig-3",
            "IoTCompany-5",
            "Valve-7",
            "1632261600",
            "manifest",
        ])
        .unwrap();
        assert_eq!(n.base().deployment(), "OilRig-3");
        assert_eq!(n.base().vendor(), "IoTCompany-5");
        assert_eq!(n.base().class(), "Valve-7");
        assert_eq!(n.epoch(), 1_632_261_600);
        assert_eq!(n.suffix(), Suffix::Manifest);
        assert_eq!(
            n.to_string(),
            "/OilRig-3/IoTCompany-5/Valve-7/1632261600/manifest"
        );
    }

    #[test]
    fn minimal_chunk_name() {
        let n = parse_name(&["D", "V", "C", "0", "chunk", "0"]).unwrap();
        assert_eq!(n.epoch(), 0);
        assert_eq!(n.suffix(), Suffix::Chunk(0));
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            vec!["D", "V", "C", "10", "chunk", "-1"],
            vec!["D", "V", "C", "10", "chunk", "+1"],
            vec!["D", "V", "C", "10", "chunk"],
            vec!["D", "V", "C", "ten", "manifest"],
            vec!["D", "V", "C", "10", "manifest", "x"],
            vec!["D", "V", "C", "10", "blob"],
            vec!["D", "", "C", "10", "manifest"],
            vec!["D", "V", "C", "10"],
        ] {
            assert!(
                matches!(parse_name(&bad), Err(NameError::Malformed(_))),
                "{bad:?}"
            );
        }
        assert!("/a/b/c/1/manifest".parse::<FirmwareName>().is_ok());
        assert!("a/b/c/1/manifest".parse::<FirmwareName>().is_err());
        assert!(BaseName::new("a/b", "v", "c", 0).is_err());
    }

    #[test]
    fn formats_suffixes() {
        let base = BaseName::new("D", "V", "C", 5).unwrap();
        assert_eq!(format_name(&base.chunk(42))[4..], ["chunk", "42"]);
        assert_eq!(format_name(&base.firmware()).last().unwrap(), "firmware");
        assert_eq!(format_name(&base.manifest()).last().unwrap(), "manifest");
    }

    #[test]
    fn chunk_bound() {
        let base = BaseName::new("D", "V", "C", 5).unwrap();
        assert!(base.chunk(9).check_chunk_bound(10).is_ok());
        assert!(base.chunk(10).check_chunk_bound(10).is_err());
        assert!(base.manifest().check_chunk_bound(0).is_ok());
    }

    #[test]
    fn aligns_to_local_midnight() {
        // 2021-09-22T13:47:00+02:00
        let t = 1_632_311_220;
        let g = Granularity::new(86_400, -7_200).unwrap();
        assert_eq!(align_epoch(t, g), 1_632_261_600);
    }

    #[test]
    fn alignment_boundaries() {
        let g = Granularity::daily_utc();
        assert_eq!(align_epoch(86_400, g), 86_400);
        assert_eq!(align_epoch(86_399, g), 0);
        assert_eq!(align_epoch(0, g), 0);
        assert!(Granularity::new(0, 0).is_err());
        assert!(Granularity::new(10, 10).is_err());
        assert!(Granularity::new(10, -10).is_err());
    }

    #[test]
    fn encoded_size_models() {
        let n = parse_name(&["a", "b", "c", "0", "manifest"]).unwrap();
        assert_eq!(n.encoded_size(&NameSizeModel::ZERO), 12);
        let plus_one = NameSizeModel {
            per_component: 1,
            per_name: 0,
        };
        assert_eq!(
            n.encoded_size(&plus_one) - n.encoded_size(&NameSizeModel::ZERO),
            5
        );
        // Name used by the experiment configuration: sizes to 45 bytes.
        let exp = parse_name(&["saclay", "riot", "m3", "1632261600", "chunk", "3999"]).unwrap();
        assert_eq!(exp.encoded_size(&NameSizeModel::default()), 45);
        assert_eq!(exp.to_wire().len(), 45);
    }

    #[test]
    fn wire_decode_rejects_garbage() {
        assert!(FirmwareName::from_wire(&[]).is_err());
        assert!(FirmwareName::from_wire(&[TLV_NAME, 5, TLV_COMPONENT, 9]).is_err());
        let mut w = parse_name(&["a", "b", "c", "0", "manifest"])
            .unwrap()
            .to_wire();
        w.push(0);
        assert!(FirmwareName::from_wire(&w).is_err());
    }

    fn ident() -> impl Strategy<Value = String> {
        "[A-Za-z0-9._-]{1,24}"
    }

    fn any_name() -> impl Strategy<Value = FirmwareName> {
        let suffix = prop_oneof![
            Just(Suffix::Manifest),
            Just(Suffix::Firmware),
            any::<u32>().prop_map(Suffix::Chunk),
        ];
        (ident(), ident(), ident(), any::<u64>(), suffix)
            .prop_map(|(d, v, c, e, s)| FirmwareName::new(BaseName::new(d, v, c, e).unwrap(), s))
    }

    proptest! {
        #[test]
        fn round_trips(n in any_name()) {
            prop_assert_eq!(&parse_name(&format_name(&n)).unwrap(), &n);
            prop_assert_eq!(&n.to_string().parse::<FirmwareName>().unwrap(), &n);
            prop_assert_eq!(&FirmwareName::from_wire(&n.to_wire()).unwrap(), &n);
            prop_assert_eq!(n.to_wire().len(), n.encoded_size(&NameSizeModel::default()));
        }

        #[test]
        fn encoded_size_is_linear(n in any_name(), pc in 0usize..8, pn in 0usize..8) {
            let m = NameSizeModel { per_component: pc, per_name: pn };
            prop_assert_eq!(n.encoded_size(&m), m.size_of(&format_name(&n)));
        }

        #[test]
        fn chunk_names_share_base_prefix(n in any_name(), a in any::<u32>(), b in any::<u32>()) {
            let ca = format_name(&n.base().chunk(a));
            let cb = format_name(&n.base().chunk(b));
            prop_assert_eq!(&ca[..4], &cb[..4]);
        }

        #[test]
        fn alignment_properties(
            t1 in 0u64..4_000_000_000,
            t2 in 0u64..4_000_000_000,
            period in 1u64..200_000,
            off in any::<i64>(),
        ) {
            let offset = off % period as i64;
            let g = Granularity::new(period, offset).unwrap();
            let a = align_epoch(t1, g);
            prop_assert!(a <= t1);
            prop_assert_eq!(align_epoch(a, g), a);
            // a == 0 with a non-zero offset is the clamp for t before the first epoch.
            if a > 0 || offset == 0 {
                prop_assert_eq!((a as i128 - offset as i128).rem_euclid(period as i128), 0);
                prop_assert!(t1 - a < period);
            }
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(align_epoch(lo, g) <= align_epoch(hi, g));
        }
    }
}
