//! Device-side update state machine.
//!
//! An [`UpdateAgent`] polls for the manifest of the current epoch, joins
//! manifest requests it forwards for same-class neighbors, verifies the
//! manifest signature, then fetches the image one chunk at a time
//! (stop-and-wait). Every chunk is checked against its truncated HMAC before
//! it is written into the chunk buffer at `index * chunk_size`; three failed
//! checks of the same index abort the update. A complete buffer is checked
//! against the manifest digest and installed, after which the node serves
//! the image straight from its flash copy.

use std::collections::BTreeMap;

use ed25519_dalek::VerifyingKey;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::naming::{align_epoch, BaseName, FirmwareName, Granularity, Suffix};
use crate::ndn::{AppHook, Auth, Data, FaceId, HookVerdict, Interest};
use crate::vendor::{tag_chunk, Manifest, Psk, TruncLen};
use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Overlapping updates along a path, with buffer diversion.
    Concurrent,
    /// A node serves same-class chunks only once its own update completed.
    Cascading,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concurrent" => Ok(Strategy::Concurrent),
            "cascading" => Ok(Strategy::Cascading),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    AwaitManifest,
    Fetching { next_chunk: u32 },
    VerifyingImage,
    Installing,
    Serving,
}

impl Phase {
    fn accepts_new_version(self) -> bool {
        matches!(self, Phase::Idle | Phase::Serving)
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::Idle => "Idle",
            Phase::AwaitManifest => "AwaitManifest",
            Phase::Fetching { .. } => "Fetching",
            Phase::VerifyingImage => "VerifyingImage",
            Phase::Installing => "Installing",
            Phase::Serving => "Serving",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Deployment, vendor and class of this device; the epoch is ignored.
    pub class: BaseName,
    pub granularity: Granularity,
    pub poll_period_s: u64,
    pub strategy: Strategy,
    pub trunc: TruncLen,
    pub app_retx_base_ms: u64,
    pub app_retx_jitter_ms: u64,
    pub max_tag_failures: u32,
    pub max_image_retries: u32,
    /// Wall-clock seconds at simulated time zero.
    pub clock_offset_s: u64,
}

impl AgentConfig {
    pub fn new(class: BaseName, granularity: Granularity, strategy: Strategy) -> Self {
        Self {
            class,
            granularity,
            poll_period_s: 30,
            strategy,
            trunc: TruncLen::B8,
            app_retx_base_ms: 10_000,
            app_retx_jitter_ms: 5_000,
            max_tag_failures: 3,
            max_image_retries: 1,
            clock_offset_s: 0,
        }
    }
}

/// The image in the node's flash, plus the backup kept across an update.
#[derive(Debug, Clone)]
pub struct InstalledFirmware {
    pub bytes: Vec<u8>,
    pub epoch: u64,
    pub chunk_size: u32,
    pub manifest: Option<Manifest>,
    pub previous: Option<Vec<u8>>,
}

impl InstalledFirmware {
    pub fn factory(bytes: Vec<u8>, epoch: u64, chunk_size: u32) -> Self {
        Self {
            bytes,
            epoch,
            chunk_size,
            manifest: None,
            previous: None,
        }
    }

    fn chunk(&self, index: u32) -> Option<&[u8]> {
        let size = self.chunk_size as usize;
        let start = (index as usize).checked_mul(size)?;
        if start >= self.bytes.len() || size == 0 {
            return None;
        }
        Some(&self.bytes[start..(start + size).min(self.bytes.len())])
    }
}

/// Received-set bitmap over a flat byte buffer.
#[derive(Debug, Clone)]
pub struct ChunkBuffer {
    bytes: Vec<u8>,
    received: Vec<bool>,
    stored: u32,
    /// Smallest index not yet received.
    cursor: u32,
    chunk_size: u32,
}

impl ChunkBuffer {
    fn for_manifest(m: &Manifest) -> Self {
        Self {
            bytes: vec![0; m.image_size as usize],
            received: vec![false; m.chunk_count as usize],
            stored: 0,
            cursor: 0,
            chunk_size: m.chunk_size,
        }
    }

    pub fn contains(&self, index: u32) -> bool {
        self.received.get(index as usize).copied().unwrap_or(false)
    }

    pub fn smallest_missing(&self) -> u32 {
        self.cursor
    }

    pub fn is_complete(&self) -> bool {
        self.stored as usize == self.received.len()
    }

    pub fn stored(&self) -> u32 {
        self.stored
    }

    fn write(&mut self, index: u32, payload: &[u8]) {
        let off = index as usize * self.chunk_size as usize;
        self.bytes[off..off + payload.len()].copy_from_slice(payload);
        if !self.received[index as usize] {
            self.received[index as usize] = true;
            self.stored += 1;
        }
        while (self.cursor as usize) < self.received.len() && self.received[self.cursor as usize] {
            self.cursor += 1;
        }
    }

    fn get(&self, index: u32) -> Option<&[u8]> {
        if !self.contains(index) {
            return None;
        }
        let off = index as usize * self.chunk_size as usize;
        let end = (off + self.chunk_size as usize).min(self.bytes.len());
        Some(&self.bytes[off..end])
    }

    /// Flip one byte of the buffer, for fault-injection tests.
    pub fn corrupt_byte(&mut self, offset: usize) {
        self.bytes[offset] ^= 0xff;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentEvent {
    PhaseChange {
        from: Phase,
        to: Phase,
    },
    ChunkStored {
        index: u32,
        diverted: bool,
    },
    TagFail {
        index: u32,
        count: u32,
        diverted: bool,
    },
    Abort {
        epoch: u64,
        reason: String,
    },
    InstallComplete {
        epoch: u64,
    },
    /// Incident report addressed to the vendor.
    VendorReport(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestOutcome {
    /// Signature valid, newer epoch: fetching starts at chunk 0.
    Started,
    /// Not newer than the installed image, or not awaited.
    Ignored,
    SignatureInvalid,
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkOutcome {
    Stored,
    /// Every chunk is present; the image awaits verification.
    Complete,
    Duplicate,
    /// Tag mismatch on the requested index; request it again.
    TagMismatch {
        count: u32,
    },
    /// Tag mismatch on a diverted chunk; discarded without counting.
    Rejected,
    AbortIrrecoverable,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalizeOutcome {
    Installed {
        epoch: u64,
    },
    /// Digest mismatch; the whole image is fetched again.
    Refetch,
    DigestMismatch,
    NotReady,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutOutcome {
    /// Manifest request failed; wait for the next poll.
    ManifestLost,
    /// Application-level retransmission of the chunk at the given time.
    RetryAt(Micros),
    Ignored,
}

#[derive(Debug, Clone)]
pub struct UpdateAgent {
    config: AgentConfig,
    psk: Psk,
    vendor_key: VerifyingKey,
    phase: Phase,
    installed: InstalledFirmware,
    active: Option<Manifest>,
    buffer: Option<ChunkBuffer>,
    fail_counts: BTreeMap<u32, u32>,
    outstanding: Option<u32>,
    retry_at: Option<Micros>,
    aborted_epoch: Option<u64>,
    image_retries: u32,
    events: Vec<AgentEvent>,
}

impl UpdateAgent {
    pub fn new(
        config: AgentConfig,
        psk: Psk,
        vendor_key: VerifyingKey,
        installed: InstalledFirmware,
    ) -> Self {
        Self {
            config,
            psk,
            vendor_key,
            phase: Phase::Idle,
            installed,
            active: None,
            buffer: None,
            fail_counts: BTreeMap::new(),
            outstanding: None,
            retry_at: None,
            aborted_epoch: None,
            image_retries: 0,
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn installed(&self) -> &InstalledFirmware {
        &self.installed
    }

    pub fn active_manifest(&self) -> Option<&Manifest> {
        self.active.as_ref()
    }

    pub fn buffer(&self) -> Option<&ChunkBuffer> {
        self.buffer.as_ref()
    }

    pub fn buffer_mut(&mut self) -> Option<&mut ChunkBuffer> {
        self.buffer.as_mut()
    }

    pub fn outstanding(&self) -> Option<u32> {
        self.outstanding
    }

    pub fn fail_count(&self, index: u32) -> u32 {
        self.fail_counts.get(&index).copied().unwrap_or(0)
    }

    pub fn aborted_epoch(&self) -> Option<u64> {
        self.aborted_epoch
    }

    pub fn drain_events(&mut self) -> Vec<AgentEvent> {
        std::mem::take(&mut self.events)
    }

    fn set_phase(&mut self, to: Phase) {
        if self.phase != to {
            self.events.push(AgentEvent::PhaseChange {
                from: self.phase,
                to,
            });
            self.phase = to;
        }
    }

    fn wall_clock(&self, now: Micros) -> u64 {
        self.config.clock_offset_s + now / 1_000_000
    }

    fn is_candidate_epoch(&self, epoch: u64) -> bool {
        epoch > self.installed.epoch && self.aborted_epoch != Some(epoch)
    }

    fn own_class(&self, name: &FirmwareName) -> bool {
        name.base().same_class(&self.config.class)
    }

    fn active_base(&self) -> Option<&BaseName> {
        self.active.as_ref().map(|m| &m.base)
    }

    /// Manifest Interest for the latest epoch, if newer than the installed one.
    pub fn poll_version(&mut self, now: Micros, nonce: u32) -> Option<Interest> {
        if !self.phase.accepts_new_version() {
            return None;
        }
        let epoch = align_epoch(self.wall_clock(now), self.config.granularity);
        if !self.is_candidate_epoch(epoch) {
            return None;
        }
        self.set_phase(Phase::AwaitManifest);
        Some(Interest::new(
            self.config.class.with_epoch(epoch).manifest(),
            nonce,
        ))
    }

    /// Decide whether to join a manifest request forwarded for a neighbor.
    pub fn implicit_discovery(&mut self, forwarded: &Interest) -> bool {
        let name = &forwarded.name;
        if !name.is_manifest()
            || !self.own_class(name)
            || !self.phase.accepts_new_version()
            || !self.is_candidate_epoch(name.epoch())
        {
            return false;
        }
        self.set_phase(Phase::AwaitManifest);
        true
    }

    pub fn on_manifest(&mut self, d: &Data) -> ManifestOutcome {
        if self.phase != Phase::AwaitManifest || !self.own_class(&d.name) {
            return ManifestOutcome::Ignored;
        }
        let manifest = match Manifest::from_data(d) {
            Ok(m) => m,
            Err(e) => {
                self.set_phase(self.resting_phase());
                return ManifestOutcome::Malformed(e.to_string());
            }
        };
        if manifest.verify(&self.vendor_key).is_err() {
            self.events.push(AgentEvent::VendorReport(format!(
                "manifest signature invalid for {}",
                manifest.base
            )));
            self.set_phase(self.resting_phase());
            return ManifestOutcome::SignatureInvalid;
        }
        if !self.is_candidate_epoch(manifest.base.epoch()) || manifest.chunk_count == 0 {
            self.set_phase(self.resting_phase());
            return ManifestOutcome::Ignored;
        }
        self.start_fetch(manifest);
        ManifestOutcome::Started
    }

    fn start_fetch(&mut self, manifest: Manifest) {
        self.buffer = Some(ChunkBuffer::for_manifest(&manifest));
        self.active = Some(manifest);
        self.fail_counts.clear();
        self.outstanding = None;
        self.retry_at = None;
        self.set_phase(Phase::Fetching { next_chunk: 0 });
    }

    fn resting_phase(&self) -> Phase {
        if self.installed.manifest.is_some() {
            Phase::Serving
        } else {
            Phase::Idle
        }
    }

    /// Next chunk Interest under stop-and-wait, if one may be sent now.
    pub fn next_request(&mut self, now: Micros, nonce: u32) -> Option<Interest> {
        if !matches!(self.phase, Phase::Fetching { .. }) || self.outstanding.is_some() {
            return None;
        }
        if let Some(at) = self.retry_at {
            if now < at {
                return None;
            }
        }
        self.retry_at = None;
        let buffer = self.buffer.as_ref()?;
        if buffer.is_complete() {
            return None;
        }
        let index = buffer.smallest_missing();
        let base = self.active_base()?.clone();
        self.outstanding = Some(index);
        self.set_phase(Phase::Fetching { next_chunk: index });
        Some(Interest::new(base.chunk(index), nonce))
    }

    pub fn retry_at(&self) -> Option<Micros> {
        self.retry_at
    }

    /// Network-layer timeout of one of this agent's Interests.
    pub fn on_timeout<R: Rng + ?Sized>(
        &mut self,
        name: &FirmwareName,
        now: Micros,
        rng: &mut R,
    ) -> TimeoutOutcome {
        match name.suffix() {
            Suffix::Manifest if self.phase == Phase::AwaitManifest => {
                self.set_phase(self.resting_phase());
                TimeoutOutcome::ManifestLost
            }
            Suffix::Chunk(i)
                if self.outstanding == Some(i) && Some(name.base()) == self.active_base() =>
            {
                self.outstanding = None;
                let base = self.config.app_retx_base_ms;
                let jitter = self.config.app_retx_jitter_ms.min(base);
                let delay_ms = rng.gen_range(base - jitter..=base + jitter);
                let at = now + delay_ms * 1_000;
                self.retry_at = Some(at);
                TimeoutOutcome::RetryAt(at)
            }
            _ => TimeoutOutcome::Ignored,
        }
    }

    fn verify_chunk(&self, d: &Data, index: u32) -> bool {
        let (Some(m), Auth::HmacTag(tag)) = (self.active.as_ref(), &d.auth) else {
            return false;
        };
        tag.len() == self.config.trunc.get()
            && d.payload.len() == m.chunk_len(index)
            && *tag == tag_chunk(&m.base, index, &d.payload, &self.psk, self.config.trunc)
    }

    /// Handle a chunk of the active image, requested or diverted.
    pub fn on_chunk(&mut self, d: &Data, diverted: bool) -> ChunkOutcome {
        let Some(index) = d.name.chunk_index() else {
            return ChunkOutcome::Ignored;
        };
        let in_range = self.active.as_ref().is_some_and(|m| index < m.chunk_count);
        if !matches!(self.phase, Phase::Fetching { .. })
            || Some(d.name.base()) != self.active_base()
            || !in_range
        {
            return ChunkOutcome::Ignored;
        }
        let requested = self.outstanding == Some(index);
        if self.buffer.as_ref().is_some_and(|b| b.contains(index)) {
            if requested {
                self.outstanding = None;
            }
            return ChunkOutcome::Duplicate;
        }
        if !self.verify_chunk(d, index) {
            if !requested {
                self.events.push(AgentEvent::TagFail {
                    index,
                    count: self.fail_count(index),
                    diverted,
                });
                return ChunkOutcome::Rejected;
            }
            self.outstanding = None;
            let count = {
                let c = self.fail_counts.entry(index).or_insert(0);
                *c += 1;
                *c
            };
            self.events.push(AgentEvent::TagFail {
                index,
                count,
                diverted,
            });
            if count >= self.config.max_tag_failures {
                self.abort(format!("chunk {index} failed verification {count} times"));
                return ChunkOutcome::AbortIrrecoverable;
            }
            return ChunkOutcome::TagMismatch { count };
        }
        if requested {
            self.outstanding = None;
        }
        self.fail_counts.remove(&index);
        let buffer = self.buffer.as_mut().expect("fetching has a buffer");
        buffer.write(index, &d.payload);
        let complete = buffer.is_complete();
        let next = buffer.smallest_missing();
        self.events
            .push(AgentEvent::ChunkStored { index, diverted });
        if complete {
            self.set_phase(Phase::VerifyingImage);
            ChunkOutcome::Complete
        } else {
            if self.outstanding.is_none() {
                self.set_phase(Phase::Fetching { next_chunk: next });
            }
            ChunkOutcome::Stored
        }
    }

    fn abort(&mut self, reason: String) {
        let epoch = self.active_base().map_or(0, BaseName::epoch);
        self.events.push(AgentEvent::Abort {
            epoch,
            reason: reason.clone(),
        });
        self.aborted_epoch = Some(epoch);
        self.active = None;
        self.buffer = None;
        self.fail_counts.clear();
        self.outstanding = None;
        self.retry_at = None;
        self.set_phase(Phase::Idle);
    }

    /// Check the reassembled image against the manifest digest and install it.
    pub fn finalize(&mut self) -> FinalizeOutcome {
        if self.phase != Phase::VerifyingImage {
            return FinalizeOutcome::NotReady;
        }
        let (Some(manifest), Some(buffer)) = (self.active.as_ref(), self.buffer.as_ref()) else {
            return FinalizeOutcome::NotReady;
        };
        if !buffer.is_complete() {
            return FinalizeOutcome::NotReady;
        }
        if !manifest.digest_matches(&buffer.bytes) {
            if self.image_retries < self.config.max_image_retries {
                self.image_retries += 1;
                let manifest = manifest.clone();
                self.start_fetch(manifest);
                return FinalizeOutcome::Refetch;
            }
            self.abort("image digest mismatch".into());
            return FinalizeOutcome::DigestMismatch;
        }
        self.set_phase(Phase::Installing);
        let manifest = self.active.take().expect("checked above");
        let buffer = self.buffer.take().expect("checked above");
        let epoch = manifest.base.epoch();
        let old = std::mem::replace(&mut self.installed.bytes, buffer.bytes);
        self.installed.previous = Some(old);
        self.installed.epoch = epoch;
        self.installed.chunk_size = manifest.chunk_size;
        self.installed.manifest = Some(manifest);
        self.image_retries = 0;
        self.fail_counts.clear();
        self.events.push(AgentEvent::InstallComplete { epoch });
        self.set_phase(Phase::Serving);
        FinalizeOutcome::Installed { epoch }
    }

    fn make_chunk_data(&self, base: &BaseName, index: u32, payload: &[u8]) -> Data {
        Data {
            name: base.chunk(index),
            payload: payload.to_vec(),
            auth: Auth::HmacTag(tag_chunk(
                base,
                index,
                payload,
                &self.psk,
                self.config.trunc,
            )),
            freshness_ms: 0,
        }
    }

    /// Answer a chunk Interest from the installed image, with a recomputed tag.
    pub fn serve_chunk(&self, interest: &Interest) -> Option<Data> {
        let name = &interest.name;
        let index = name.chunk_index()?;
        if !self.own_class(name) {
            return None;
        }
        if name.epoch() == self.installed.epoch && self.installed.manifest.is_some() {
            let payload = self.installed.chunk(index)?;
            return Some(self.make_chunk_data(name.base(), index, payload));
        }
        if self.config.strategy == Strategy::Concurrent && Some(name.base()) == self.active_base() {
            let payload = self.buffer.as_ref()?.get(index)?;
            return Some(self.make_chunk_data(name.base(), index, payload));
        }
        None
    }

    /// Whether a neighbor's Interest must go unanswered under cascading.
    pub fn denies(&self, interest: &Interest) -> bool {
        self.config.strategy == Strategy::Cascading
            && interest.name.is_chunk()
            && self.own_class(&interest.name)
            && interest.name.epoch() > self.installed.epoch
    }

    pub fn wants_chunk(&self, d: &Data) -> bool {
        self.config.strategy == Strategy::Concurrent
            && matches!(self.phase, Phase::Fetching { .. })
            && Some(d.name.base()) == self.active_base()
            && d.name
                .chunk_index()
                .is_some_and(|i| self.buffer.as_ref().is_some_and(|b| !b.contains(i)))
    }
}

impl AppHook for UpdateAgent {
    fn lookup(&mut self, face: FaceId, interest: &Interest, _now: Micros) -> HookVerdict {
        if !face.is_local() && self.denies(interest) {
            return HookVerdict::Deny;
        }
        if interest.name.is_manifest()
            && interest.name.epoch() == self.installed.epoch
            && self.own_class(&interest.name)
        {
            if let Some(m) = &self.installed.manifest {
                return HookVerdict::Serve(m.to_data(0));
            }
        }
        match self.serve_chunk(interest) {
            Some(d) => HookVerdict::Serve(d),
            None => HookVerdict::Pass,
        }
    }

    fn observe_forwarded(&mut self, interest: &Interest) -> bool {
        self.implicit_discovery(interest)
    }

    fn wants_diversion(&self, data: &Data) -> bool {
        self.wants_chunk(data)
    }
}
