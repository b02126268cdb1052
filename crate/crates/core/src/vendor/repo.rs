use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use super::{join_chunks, Chunk, Manifest, VendorError};
use crate::naming::{BaseName, FirmwareName, Suffix};
use crate::ndn::{Auth, Data};

const MANIFEST_FILE: &str = "manifest.bin";
const CHUNKS_FILE: &str = "chunks.bin";
const RECORD_HEADER: usize = 4 + 4 + 1;

type ClassKey = (String, String, String);

#[derive(Debug, Clone)]
struct Publication {
    manifest: Manifest,
    chunks: Vec<Chunk>,
}

/// Versioned store of manifests and chunks, keyed by device class and epoch.
///
/// Wrap in [`SharedRepository`] for concurrent readers with exclusive writers.
#[derive(Debug, Clone, Default)]
pub struct Repository {
    classes: BTreeMap<ClassKey, BTreeMap<u64, Publication>>,
}

pub type SharedRepository = Arc<RwLock<Repository>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepoEntry<'a> {
    Manifest(&'a Manifest),
    Chunk(&'a Chunk),
}

fn class_key(base: &BaseName) -> ClassKey {
    (
        base.deployment().to_owned(),
        base.vendor().to_owned(),
        base.class().to_owned(),
    )
}

fn inconsistent(msg: impl Into<String>) -> VendorError {
    VendorError::InconsistentPublication(msg.into())
}

fn check_consistent(manifest: &Manifest, chunks: &[Chunk]) -> Result<(), VendorError> {
    if chunks.len() != manifest.chunk_count as usize {
        return Err(inconsistent(format!(
            "manifest announces {} chunks, got {}",
            manifest.chunk_count,
            chunks.len()
        )));
    }
    let tag_len = chunks.first().map_or(0, |c| c.tag.len());
    if !matches!(tag_len, 8 | 16 | 32) {
        return Err(inconsistent(format!("tag length {tag_len}")));
    }
    for (i, c) in chunks.iter().enumerate() {
        if c.index as usize != i {
            return Err(inconsistent(format!(
                "chunk at position {i} has index {}",
                c.index
            )));
        }
        if c.payload.len() != manifest.chunk_len(c.index) {
            return Err(inconsistent(format!(
                "chunk {i} has {} bytes, expected {}",
                c.payload.len(),
                manifest.chunk_len(c.index)
            )));
        }
        if c.tag.len() != tag_len {
            return Err(inconsistent(format!("chunk {i} tag length differs")));
        }
    }
    let payloads: Vec<&[u8]> = chunks.iter().map(|c| c.payload.as_slice()).collect();
    if !manifest.digest_matches(&join_chunks(&payloads)) {
        return Err(inconsistent(
            "chunks do not reassemble to the manifest digest",
        ));
    }
    Ok(())
}

/// Store a manifest and its chunks; epochs are immutable once published.
pub fn publish(
    repo: &mut Repository,
    manifest: Manifest,
    chunks: Vec<Chunk>,
) -> Result<(), VendorError> {
    repo.publish(manifest, chunks)
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, manifest: Manifest, chunks: Vec<Chunk>) -> Result<(), VendorError> {
        check_consistent(&manifest, &chunks)?;
        let epochs = self.classes.entry(class_key(&manifest.base)).or_default();
        if epochs.contains_key(&manifest.base.epoch()) {
            return Err(VendorError::DuplicateEpoch(manifest.base.clone()));
        }
        epochs.insert(manifest.base.epoch(), Publication { manifest, chunks });
        Ok(())
    }

    fn publication(&self, base: &BaseName) -> Option<&Publication> {
        self.classes.get(&class_key(base))?.get(&base.epoch())
    }

    pub fn lookup(&self, name: &FirmwareName) -> Result<RepoEntry<'_>, VendorError> {
        let not_found = || VendorError::NotFound(name.to_string());
        let p = self.publication(name.base()).ok_or_else(not_found)?;
        match name.suffix() {
            Suffix::Manifest => Ok(RepoEntry::Manifest(&p.manifest)),
            Suffix::Chunk(i) => p
                .chunks
                .get(i as usize)
                .map(RepoEntry::Chunk)
                .ok_or_else(not_found),
            Suffix::Firmware => Err(not_found()),
        }
    }

    pub fn manifest(&self, base: &BaseName) -> Option<&Manifest> {
        self.publication(base).map(|p| &p.manifest)
    }

    pub fn chunks(&self, base: &BaseName) -> Option<&[Chunk]> {
        self.publication(base).map(|p| p.chunks.as_slice())
    }

    /// Answer an Interest name with a Data packet, if published.
    pub fn serve(&self, name: &FirmwareName, freshness_ms: u32) -> Option<Data> {
        match self.lookup(name).ok()? {
            RepoEntry::Manifest(m) => Some(m.to_data(freshness_ms)),
            RepoEntry::Chunk(c) => Some(Data {
                name: name.clone(),
                payload: c.payload.clone(),
                auth: Auth::HmacTag(c.tag.clone()),
                freshness_ms,
            }),
        }
    }

    /// Published base names in (class, epoch) order.
    pub fn bases(&self) -> Vec<BaseName> {
        self.classes
            .values()
            .flat_map(|e| e.values().map(|p| p.manifest.base.clone()))
            .collect()
    }

    pub fn purge(&mut self, base: &BaseName) -> bool {
        self.classes
            .get_mut(&class_key(base))
            .is_some_and(|e| e.remove(&base.epoch()).is_some())
    }

    fn dir_of(root: &Path, base: &BaseName) -> PathBuf {
        root.join(base.deployment())
            .join(base.vendor())
            .join(base.class())
            .join(base.epoch().to_string())
    }

    /// Write one publication to `<root>/<deployment>/<vendor>/<class>/<epoch>/`.
    pub fn save_publication(&self, root: &Path, base: &BaseName) -> Result<PathBuf, VendorError> {
        let p = self
            .publication(base)
            .ok_or_else(|| VendorError::NotFound(base.to_string()))?;
        let dir = Self::dir_of(root, base);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(MANIFEST_FILE), p.manifest.encode())?;
        fs::write(dir.join(CHUNKS_FILE), encode_chunks(&p.manifest, &p.chunks))?;
        Ok(dir)
    }

    pub fn save(&self, root: &Path) -> Result<(), VendorError> {
        for base in self.bases() {
            self.save_publication(root, &base)?;
        }
        Ok(())
    }

    /// Load every publication below `root`.
    pub fn load(root: &Path) -> Result<Self, VendorError> {
        let mut repo = Repository::new();
        let mut dirs = Vec::new();
        collect_leaf_dirs(root, 0, &mut dirs)?;
        dirs.sort();
        for dir in dirs {
            let manifest = Manifest::decode(&fs::read(dir.join(MANIFEST_FILE))?)?;
            let chunks = decode_chunks(&manifest, &fs::read(dir.join(CHUNKS_FILE))?)?;
            repo.publish(manifest, chunks)?;
        }
        Ok(repo)
    }
}

fn collect_leaf_dirs(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<(), VendorError> {
    if depth == 4 {
        if dir.join(MANIFEST_FILE).is_file() {
            out.push(dir.to_owned());
        }
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            collect_leaf_dirs(&entry.path(), depth + 1, out)?;
        }
    }
    Ok(())
}

/// Fixed-length records: index (u32 BE), payload length (u32 BE), tag
/// length (u8), payload zero-padded to the chunk size, tag.
fn encode_chunks(manifest: &Manifest, chunks: &[Chunk]) -> Vec<u8> {
    let size = manifest.chunk_size as usize;
    let mut out = Vec::new();
    for c in chunks {
        out.extend_from_slice(&c.index.to_be_bytes());
        out.extend_from_slice(&(c.payload.len() as u32).to_be_bytes());
        out.push(c.tag.len() as u8);
        out.extend_from_slice(&c.payload);
        out.resize(out.len() + size - c.payload.len(), 0);
        out.extend_from_slice(&c.tag);
    }
    out
}

fn decode_chunks(manifest: &Manifest, bytes: &[u8]) -> Result<Vec<Chunk>, VendorError> {
    let bad = |m: &str| VendorError::InconsistentPublication(format!("{CHUNKS_FILE}: {m}"));
    if bytes.len() < RECORD_HEADER {
        return Err(bad("truncated"));
    }
    let tag_len = bytes[8] as usize;
    let record = RECORD_HEADER + manifest.chunk_size as usize + tag_len;
    if !bytes.len().is_multiple_of(record) {
        return Err(bad("length is not a multiple of the record size"));
    }
    bytes
        .chunks(record)
        .map(|r| {
            let index = u32::from_be_bytes(r[0..4].try_into().unwrap());
            let len = u32::from_be_bytes(r[4..8].try_into().unwrap()) as usize;
            if len > manifest.chunk_size as usize || r[8] as usize != tag_len {
                return Err(bad("corrupt record header"));
            }
            Ok(Chunk {
                index,
                payload: r[RECORD_HEADER..RECORD_HEADER + len].to_vec(),
                tag: r[record - tag_len..].to_vec(),
            })
        })
        .collect()
}
