use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};

use super::{chunk_count, chunk_image, FirmwareImage, VendorError};
use crate::naming::{decode_components, BaseName};
use crate::ndn::{Auth, Data};

pub const MANIFEST_SIGNATURE_LEN: usize = 64;
const FIXED_FIELDS_LEN: usize = 4 + 32 + 4 + 4;

/// Signed description of one published image.
///
/// Wire layout (big endian): base-name TLV, image size (u32), SHA-256
/// digest (32 bytes), chunk size (u32), chunk count (u32), followed by the
/// 64-byte Ed25519 signature over everything before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub base: BaseName,
    pub image_size: u32,
    pub image_digest: [u8; 32],
    pub chunk_size: u32,
    pub chunk_count: u32,
    pub signature: [u8; MANIFEST_SIGNATURE_LEN],
}

impl Manifest {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut out = self.base.to_wire();
        out.extend_from_slice(&self.image_size.to_be_bytes());
        out.extend_from_slice(&self.image_digest);
        out.extend_from_slice(&self.chunk_size.to_be_bytes());
        out.extend_from_slice(&self.chunk_count.to_be_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VendorError> {
        let body_len = bytes
            .len()
            .checked_sub(MANIFEST_SIGNATURE_LEN)
            .ok_or_else(|| VendorError::MalformedManifest("too short".into()))?;
        let mut signature = [0u8; MANIFEST_SIGNATURE_LEN];
        signature.copy_from_slice(&bytes[body_len..]);
        let mut m = Self::decode_body(&bytes[..body_len])?;
        m.signature = signature;
        Ok(m)
    }

    fn decode_body(body: &[u8]) -> Result<Self, VendorError> {
        let (components, used) =
            decode_components(body).map_err(|e| VendorError::MalformedManifest(e.to_string()))?;
        let [d, v, c, e] = components.as_slice() else {
            return Err(VendorError::MalformedManifest(format!(
                "base name has {} components",
                components.len()
            )));
        };
        let epoch = e
            .parse()
            .map_err(|_| VendorError::MalformedManifest(format!("bad epoch {e:?}")))?;
        let base = BaseName::new(d.as_str(), v.as_str(), c.as_str(), epoch)?;
        let rest = &body[used..];
        if rest.len() != FIXED_FIELDS_LEN {
            return Err(VendorError::MalformedManifest(format!(
                "expected {FIXED_FIELDS_LEN} bytes of fields, got {}",
                rest.len()
            )));
        }
        let u32_at = |o: usize| u32::from_be_bytes(rest[o..o + 4].try_into().unwrap());
        let mut image_digest = [0u8; 32];
        image_digest.copy_from_slice(&rest[4..36]);
        Ok(Self {
            base,
            image_size: u32_at(0),
            image_digest,
            chunk_size: u32_at(36),
            chunk_count: u32_at(40),
            signature: [0; MANIFEST_SIGNATURE_LEN],
        })
    }

    pub fn verify(&self, key: &VerifyingKey) -> Result<(), VendorError> {
        let sig = Signature::from_bytes(&self.signature);
        key.verify(&self.signed_bytes(), &sig)
            .map_err(|_| VendorError::SignatureInvalid)
    }

    /// Size of the final (possibly short) chunk.
    pub fn chunk_len(&self, index: u32) -> usize {
        if index + 1 < self.chunk_count {
            self.chunk_size as usize
        } else {
            self.image_size as usize - self.chunk_size as usize * (self.chunk_count as usize - 1)
        }
    }

    pub fn digest_matches(&self, bytes: &[u8]) -> bool {
        Sha256::digest(bytes).as_slice() == self.image_digest
    }

    /// Manifest Data: the signed body as payload, the signature as auth.
    pub fn to_data(&self, freshness_ms: u32) -> Data {
        Data {
            name: self.base.manifest(),
            payload: self.signed_bytes(),
            auth: Auth::ManifestSignature(self.signature.to_vec()),
            freshness_ms,
        }
    }

    pub fn from_data(d: &Data) -> Result<Self, VendorError> {
        let Auth::ManifestSignature(sig) = &d.auth else {
            return Err(VendorError::MalformedManifest("missing signature".into()));
        };
        let signature: [u8; MANIFEST_SIGNATURE_LEN] = sig
            .as_slice()
            .try_into()
            .map_err(|_| VendorError::MalformedManifest("bad signature length".into()))?;
        let mut m = Self::decode_body(&d.payload)?;
        if m.base != *d.name.base() {
            return Err(VendorError::MalformedManifest(
                "manifest base name differs from packet name".into(),
            ));
        }
        m.signature = signature;
        Ok(m)
    }
}

pub fn build_manifest(
    img: &FirmwareImage,
    chunk_size: u32,
    key: &SigningKey,
) -> Result<Manifest, VendorError> {
    chunk_image(&img.bytes, chunk_size)?;
    let image_size =
        u32::try_from(img.bytes.len()).map_err(|_| VendorError::ImageTooLarge(img.bytes.len()))?;
    let mut m = Manifest {
        base: img.base.clone(),
        image_size,
        image_digest: Sha256::digest(&img.bytes).into(),
        chunk_size,
        chunk_count: chunk_count(image_size as u64, chunk_size)?,
        signature: [0; MANIFEST_SIGNATURE_LEN],
    };
    m.signature = key.sign(&m.signed_bytes()).to_bytes();
    Ok(m)
}
