//! Vendor-side firmware preparation: linear chunking, signed manifests,
//! per-chunk truncated HMAC tags and a versioned repository.

mod chunking;
mod manifest;
mod repo;
mod tag;

use thiserror::Error;

use crate::naming::{BaseName, NameError};

pub use chunking::{chunk_count, chunk_image, join_chunks};
pub use manifest::{build_manifest, Manifest, MANIFEST_SIGNATURE_LEN};
pub use repo::{publish, RepoEntry, Repository, SharedRepository};
pub use tag::{tag_chunk, Psk, TruncLen};

/// A precompiled image for one device class and epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareImage {
    pub base: BaseName,
    pub bytes: Vec<u8>,
}

impl FirmwareImage {
    pub fn new(base: BaseName, bytes: Vec<u8>) -> Self {
        Self { base, bytes }
    }
}

/// One fixed-length piece of an image with its truncated tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub index: u32,
    pub payload: Vec<u8>,
    pub tag: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum VendorError {
    #[error("firmware image is empty")]
    EmptyImage,
    #[error("chunk size must be positive")]
    InvalidChunkSize,
    #[error("image of {0} bytes does not fit the manifest size field")]
    ImageTooLarge(usize),
    #[error("truncation length {0} not one of 8, 16, 32")]
    InvalidTruncation(usize),
    #[error("inconsistent publication: {0}")]
    InconsistentPublication(String),
    #[error("epoch already published for {0}")]
    DuplicateEpoch(BaseName),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("manifest signature does not verify")]
    SignatureInvalid,
    #[error(transparent)]
    Name(#[from] NameError),
    #[error("repository I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Chunk an image and tag every chunk.
pub fn prepare_chunks(
    img: &FirmwareImage,
    chunk_size: u32,
    psk: &Psk,
    trunc: TruncLen,
) -> Result<Vec<Chunk>, VendorError> {
    let payloads = chunk_image(&img.bytes, chunk_size)?;
    Ok(payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| {
            let index = i as u32;
            let tag = tag_chunk(&img.base, index, &payload, psk, trunc);
            Chunk {
                index,
                payload,
                tag,
            }
        })
        .collect())
}
