use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use ed25519_dalek::SigningKey;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::link::LinkModel;
use super::metrics::{MetricEvent, MetricsRecord};
use super::scenario::{AttackMode, ClassMode, Scenario};
use super::topology::{NodeId, Topology};
use super::SimError;
use crate::agent::{
    AgentConfig, AgentEvent, ChunkOutcome, FinalizeOutcome, InstalledFirmware, ManifestOutcome,
    Phase, Strategy, UpdateAgent,
};
use crate::naming::{align_epoch, BaseName, FirmwareName, Granularity};
use crate::ndn::{
    AppHook, Auth, Data, DataAction, FaceId, Fib, Forwarder, HookVerdict, Interest, InterestAction,
    NackAction, Packet, PacketSizeModel, AGENT_CONSUMER,
};
use crate::vendor::{build_manifest, prepare_chunks, FirmwareImage, Psk, Repository};
use crate::Micros;

const DEPLOYMENT: &str = "saclay";
const VENDOR: &str = "riot";
const CLASS: &str = "m3";
const VENDOR_KEY_SEED: [u8; 32] = [0x42; 32];
const PSK_BYTES: &[u8; 32] = b"fwsim pre-shared chunk tag key!!";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetxTotals {
    pub link: u64,
    pub network: u64,
    pub application: u64,
}

/// Per-run outcome, emitted as JSON by the harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub strategy: Strategy,
    pub chunk_count: u32,
    pub updating: usize,
    pub completed: usize,
    /// Time of the last processed event.
    pub sim_end_us: Micros,
    /// InstallComplete time per node.
    pub completion_us: BTreeMap<String, Micros>,
    /// First to last stored own chunk, per completed node.
    pub fetch_duration_us: BTreeMap<String, Micros>,
    pub retransmissions: RetxTotals,
    pub aborts: Vec<String>,
    pub tag_failures: u64,
    /// Completed nodes whose flash equals the vendor image.
    pub images_verified: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
}

/// Validate, simulate and summarize a scenario.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario)?;
    sim.run();
    Ok(sim.into_output())
}

#[derive(Debug)]
enum Ev {
    Poll(NodeId),
    TxStart(NodeId),
    TxEnd(NodeId),
    Arrive {
        to: NodeId,
        from: NodeId,
        packet: Packet,
    },
    FwdTick(NodeId),
    AppWake(NodeId),
}

struct Scheduled {
    at: Micros,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap pops the earliest (time, sequence) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct GatewayApp {
    repo: Repository,
}

enum App {
    Gateway(GatewayApp),
    Relay,
    Device(Box<UpdateAgent>),
}

impl AppHook for App {
    fn lookup(&mut self, face: FaceId, interest: &Interest, now: Micros) -> HookVerdict {
        match self {
            App::Gateway(g) => match g.repo.serve(&interest.name, 0) {
                Some(d) => HookVerdict::Serve(d),
                None => HookVerdict::Pass,
            },
            App::Relay => HookVerdict::Pass,
            App::Device(a) => a.lookup(face, interest, now),
        }
    }

    fn observe_forwarded(&mut self, interest: &Interest) -> bool {
        match self {
            App::Device(a) => a.observe_forwarded(interest),
            _ => false,
        }
    }

    fn wants_diversion(&self, data: &Data) -> bool {
        match self {
            App::Device(a) => a.wants_diversion(data),
            _ => false,
        }
    }
}

struct InFlight {
    to: NodeId,
    packet: Packet,
    frames: Vec<usize>,
    frame: usize,
    attempt: u32,
    start: Micros,
    end: Micros,
    tx_id: u64,
}

struct Node {
    fwd: Forwarder,
    app: App,
    queue: VecDeque<(NodeId, Packet)>,
    tx: Option<InFlight>,
    radio_busy: bool,
    tick_at: Option<Micros>,
    wake_at: Option<Micros>,
    flash_free_at: Micros,
    first_chunk_at: Option<Micros>,
    last_chunk_at: Option<Micros>,
    completed_at: Option<Micros>,
    finished: bool,
    class: usize,
}

struct AirRecord {
    tx_id: u64,
    edge: NodeId,
    start: Micros,
    end: Micros,
}

struct AttackerState {
    edge: NodeId,
    mode: AttackMode,
    rate: f64,
    seen: u64,
}

impl AttackerState {
    /// Deterministic thinning: the k-th observed chunk is attacked when
    /// `floor(k * rate)` steps up.
    fn strikes(&mut self) -> bool {
        self.seen += 1;
        let k = self.seen as f64;
        (k * self.rate).floor() > ((k - 1.0) * self.rate).floor()
    }
}

pub struct Simulation {
    topo: Topology,
    link: LinkModel,
    sizes: PacketSizeModel,
    nodes: Vec<Node>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: Micros,
    duration_us: Micros,
    rng: ChaCha8Rng,
    nonce: u32,
    tx_seq: u64,
    airlog: VecDeque<AirRecord>,
    max_air: Micros,
    conflicts: Vec<Vec<bool>>,
    attacker: Option<AttackerState>,
    outages: Vec<(NodeId, Micros)>,
    records: Vec<MetricsRecord>,
    poll_period_us: Micros,
    processing_us: Micros,
    flash_write_us: Micros,
    target_epoch: u64,
    previous_epoch: u64,
    images: Vec<Vec<u8>>,
    updating: usize,
    finished: usize,
    retx: RetxTotals,
    tag_failures: u64,
    seed: u64,
    strategy: Strategy,
    chunk_count: u32,
}

fn image_bytes(seed: u64, class: usize, salt: u64, len: usize) -> Vec<u8> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ salt ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

fn chunk_of(p: &Packet) -> Option<u32> {
    p.name().chunk_index()
}

fn kind_of(p: &Packet) -> &'static str {
    match p {
        Packet::Interest(i) if i.name.is_manifest() => "manifest-interest",
        Packet::Interest(_) => "interest",
        Packet::Data(d) if d.name.is_manifest() => "manifest",
        Packet::Data(_) => "data",
        Packet::Nack(_) => "nack",
    }
}

impl Simulation {
    pub fn new(sc: &Scenario) -> Result<Self, SimError> {
        let topo = sc.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let t = &sc.timing;
        let granularity = Granularity::new(t.granularity_s, t.granularity_offset_s)
            .map_err(|e| SimError::invalid("timing.granularity_s", e.to_string()))?;
        let target_epoch = align_epoch(t.start_wall_s, granularity);
        let previous_epoch = target_epoch.checked_sub(t.granularity_s).ok_or_else(|| {
            SimError::invalid(
                "timing.start_wall_s",
                "must lie at least one period after 0",
            )
        })?;
        let gw = topo.gateway();
        let updating: Vec<bool> = (0..topo.len())
            .map(|id| {
                id != gw
                    && sc
                        .updating
                        .as_ref()
                        .is_none_or(|list| list.iter().any(|n| n == topo.name(id)))
            })
            .collect();
        let class_of: Vec<usize> = match sc.device_classes {
            ClassMode::Shared => vec![0; topo.len()],
            ClassMode::Unique => (0..topo.len()).collect(),
        };
        let class_name = |c: usize| match sc.device_classes {
            ClassMode::Shared => CLASS.to_string(),
            ClassMode::Unique => format!("{CLASS}-{}", topo.name(c)),
        };
        let mut classes: Vec<usize> = (0..topo.len())
            .filter(|&id| updating[id])
            .map(|id| class_of[id])
            .collect();
        classes.sort_unstable();
        classes.dedup();

        let key = SigningKey::from_bytes(&VENDOR_KEY_SEED);
        let psk = Psk::new(PSK_BYTES.to_vec());
        let len = sc.image_len() as usize;
        let mut repo = Repository::new();
        let mut images = vec![Vec::new(); topo.len()];
        let mut factory = vec![Vec::new(); topo.len()];
        for &c in &classes {
            let class = BaseName::new(DEPLOYMENT, VENDOR, class_name(c), 0)
                .map_err(crate::vendor::VendorError::from)?;
            let new = match &sc.image {
                Some(bytes) => bytes.clone(),
                None => image_bytes(sc.seed, c, 0x006E_6577, len),
            };
            let old = image_bytes(sc.seed, c, 0x006F_6C64, new.len());
            for (epoch, bytes) in [(previous_epoch, &old), (target_epoch, &new)] {
                let img = FirmwareImage::new(class.with_epoch(epoch), bytes.clone());
                let manifest = build_manifest(&img, sc.chunk_size, &key)?;
                let chunks = prepare_chunks(&img, sc.chunk_size, &psk, sc.tag_len)?;
                repo.publish(manifest, chunks)?;
            }
            images[c] = new;
            factory[c] = old;
        }

        let fcfg = sc.forwarder_config();
        let mut repo = Some(repo);
        let mut nodes = Vec::with_capacity(topo.len());
        for id in 0..topo.len() {
            let fib = match topo.node(id).parent {
                Some(p) => Fib::with_default(FaceId(p as u32)),
                None => Fib::new(),
            };
            let app = if id == gw {
                App::Gateway(GatewayApp {
                    repo: repo.take().expect("one gateway"),
                })
            } else if updating[id] {
                let c = class_of[id];
                let class = BaseName::new(DEPLOYMENT, VENDOR, class_name(c), 0)
                    .map_err(crate::vendor::VendorError::from)?;
                let mut cfg = AgentConfig::new(class, granularity, sc.strategy);
                cfg.poll_period_s = t.poll_period_s;
                cfg.trunc = sc.tag_len;
                cfg.app_retx_base_ms = t.app_retx_base_ms;
                cfg.app_retx_jitter_ms = t.app_retx_jitter_ms;
                cfg.clock_offset_s = t.start_wall_s;
                let installed =
                    InstalledFirmware::factory(factory[c].clone(), previous_epoch, sc.chunk_size);
                App::Device(Box::new(UpdateAgent::new(
                    cfg,
                    psk.clone(),
                    key.verifying_key(),
                    installed,
                )))
            } else {
                App::Relay
            };
            nodes.push(Node {
                fwd: Forwarder::new(fcfg, fib),
                app,
                queue: VecDeque::new(),
                tx: None,
                radio_busy: false,
                tick_at: None,
                wake_at: None,
                flash_free_at: 0,
                first_chunk_at: None,
                last_chunk_at: None,
                completed_at: None,
                finished: false,
                class: class_of[id],
            });
        }

        let edge_id = |e: &[String; 2]| {
            let (a, b) = (topo.id_of(&e[0]).unwrap(), topo.id_of(&e[1]).unwrap());
            topo.edge_between(a, b).expect("validated edge")
        };
        let attacker = sc.attacker.as_ref().map(|a| AttackerState {
            edge: edge_id(&a.edge),
            mode: a.mode,
            rate: a.rate,
            seen: 0,
        });
        let outages = sc
            .outages
            .iter()
            .map(|o| (edge_id(&o.edge), o.at_us))
            .collect();

        let mut sim = Self {
            conflicts: topo.interference_matrix(),
            max_air: sc.link.airtime(sc.link.mtu),
            link: sc.link.clone(),
            sizes: PacketSizeModel::default(),
            nodes,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            duration_us: sc.duration_s.saturating_mul(1_000_000),
            rng: ChaCha8Rng::seed_from_u64(0),
            nonce: 0,
            tx_seq: 0,
            airlog: VecDeque::new(),
            attacker,
            outages,
            records: Vec::new(),
            poll_period_us: t.poll_period_s * 1_000_000,
            processing_us: t.processing_us,
            flash_write_us: t.flash_write_us,
            target_epoch,
            previous_epoch,
            images: images.clone(),
            updating: updating.iter().filter(|u| **u).count(),
            finished: 0,
            retx: RetxTotals::default(),
            tag_failures: 0,
            seed: sc.seed,
            strategy: sc.strategy,
            chunk_count: sc.chunk_count(),
            topo,
        };
        for (id, up) in updating.iter().enumerate() {
            if *up {
                let at = rng.gen_range(0..sim.poll_period_us);
                sim.schedule(at, Ev::Poll(id));
            }
        }
        sim.rng = rng;
        Ok(sim)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn target_epoch(&self) -> u64 {
        self.target_epoch
    }

    pub fn previous_epoch(&self) -> u64 {
        self.previous_epoch
    }

    pub fn agent(&self, name: &str) -> Option<&UpdateAgent> {
        match &self.nodes[self.topo.id_of(name)?].app {
            App::Device(a) => Some(a),
            _ => None,
        }
    }

    /// The image the vendor published for this node's class.
    pub fn vendor_image(&self, name: &str) -> Option<&[u8]> {
        let id = self.topo.id_of(name)?;
        let img = &self.images[self.nodes[id].class];
        (!img.is_empty()).then_some(img.as_slice())
    }

    fn schedule(&mut self, at: Micros, ev: Ev) {
        self.seq += 1;
        self.heap.push(Scheduled {
            at,
            seq: self.seq,
            ev,
        });
    }

    fn next_nonce(&mut self) -> u32 {
        self.nonce = self.nonce.wrapping_add(1);
        self.nonce
    }

    fn log(
        &mut self,
        id: NodeId,
        event: MetricEvent,
        chunk_id: Option<u32>,
        detail: impl Into<String>,
    ) {
        self.records.push(MetricsRecord {
            sim_time_us: self.now,
            node: self.topo.name(id).to_string(),
            event,
            chunk_id,
            detail: detail.into(),
        });
    }

    /// Process events until every updating node finished or time runs out.
    pub fn run(&mut self) {
        while self.finished < self.updating {
            let Some(s) = self.heap.pop() else { break };
            if s.at >= self.duration_us {
                break;
            }
            self.now = s.at;
            self.dispatch(s.ev);
        }
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Poll(id) => self.on_poll(id),
            Ev::TxStart(id) => self.on_tx_start(id),
            Ev::TxEnd(id) => self.on_tx_end(id),
            Ev::Arrive { to, from, packet } => self.on_arrive(to, from, packet),
            Ev::FwdTick(id) => self.on_tick(id),
            Ev::AppWake(id) => {
                if self.nodes[id].wake_at == Some(self.now) {
                    self.nodes[id].wake_at = None;
                }
                self.pump(id);
            }
        }
    }

    fn drain_agent(&mut self, id: NodeId) {
        let App::Device(agent) = &mut self.nodes[id].app else {
            return;
        };
        let events = agent.drain_events();
        for e in events {
            match e {
                AgentEvent::PhaseChange { from, to } => {
                    if from.label() != to.label() {
                        self.log(
                            id,
                            MetricEvent::PhaseChange,
                            None,
                            format!("{}->{}", from.label(), to.label()),
                        );
                    }
                }
                AgentEvent::ChunkStored { index, diverted } => {
                    let n = &mut self.nodes[id];
                    n.first_chunk_at.get_or_insert(self.now);
                    n.last_chunk_at = Some(self.now);
                    let how = if diverted { "diverted" } else { "requested" };
                    self.log(id, MetricEvent::DataRecv, Some(index), how);
                }
                AgentEvent::TagFail {
                    index,
                    count,
                    diverted,
                } => {
                    self.tag_failures += 1;
                    let detail = if diverted {
                        "diverted".to_string()
                    } else {
                        format!("count={count}")
                    };
                    self.log(id, MetricEvent::TagFail, Some(index), detail);
                }
                AgentEvent::Abort { epoch, reason } => {
                    self.log(
                        id,
                        MetricEvent::Abort,
                        None,
                        format!("epoch {epoch}: {reason}"),
                    );
                    self.finish(id);
                }
                AgentEvent::InstallComplete { epoch } => {
                    self.log(id, MetricEvent::InstallComplete, None, epoch.to_string());
                    if epoch == self.target_epoch {
                        self.nodes[id].completed_at = Some(self.now);
                        self.finish(id);
                    }
                }
                AgentEvent::VendorReport(msg) => {
                    self.log(id, MetricEvent::Abort, None, format!("report: {msg}"));
                }
            }
        }
    }

    fn finish(&mut self, id: NodeId) {
        if !self.nodes[id].finished {
            self.nodes[id].finished = true;
            self.finished += 1;
        }
    }

    fn on_poll(&mut self, id: NodeId) {
        if self.nodes[id].finished {
            return;
        }
        let nonce = self.next_nonce();
        let now = self.now;
        let interest = match &mut self.nodes[id].app {
            App::Device(a) => a.poll_version(now, nonce),
            _ => None,
        };
        self.drain_agent(id);
        if let Some(i) = interest {
            self.log(id, MetricEvent::InterestSent, None, "manifest");
            self.send_local(id, i);
        }
        self.schedule(now + self.poll_period_us, Ev::Poll(id));
    }

    fn wake(&mut self, id: NodeId, at: Micros) {
        let n = &mut self.nodes[id];
        if let Some(t) = n.wake_at {
            if t >= self.now && t <= at {
                return;
            }
        }
        n.wake_at = Some(at);
        self.schedule(at, Ev::AppWake(id));
    }

    /// Advance the agent: finalize a complete image or issue the next request.
    fn pump(&mut self, id: NodeId) {
        loop {
            let now = self.now;
            let flash_free_at = self.nodes[id].flash_free_at;
            let App::Device(agent) = &mut self.nodes[id].app else {
                return;
            };
            match agent.phase() {
                Phase::VerifyingImage => {
                    if now < flash_free_at {
                        self.wake(id, flash_free_at);
                        return;
                    }
                    let outcome = agent.finalize();
                    self.drain_agent(id);
                    if outcome == FinalizeOutcome::Refetch {
                        continue;
                    }
                    return;
                }
                Phase::Fetching { .. } => {}
                _ => return,
            }
            if now < flash_free_at {
                self.wake(id, flash_free_at);
                return;
            }
            let retry = agent.retry_at();
            if let Some(t) = retry {
                if now < t {
                    self.wake(id, t);
                    return;
                }
            }
            let nonce = self.next_nonce();
            let App::Device(agent) = &mut self.nodes[id].app else {
                return;
            };
            let Some(i) = agent.next_request(now, nonce) else {
                self.drain_agent(id);
                return;
            };
            self.drain_agent(id);
            let chunk = i.name.chunk_index();
            if retry.is_some() {
                self.retx.application += 1;
                self.log(id, MetricEvent::AppRetx, chunk, "timeout");
            }
            self.log(id, MetricEvent::InterestSent, chunk, "chunk");
            self.send_local(id, i);
            return;
        }
    }

    fn send_local(&mut self, id: NodeId, i: Interest) {
        let now = self.now;
        let node = &mut self.nodes[id];
        let action = node.fwd.on_interest(FaceId::LOCAL, &i, now, &mut node.app);
        match action {
            InterestAction::ServeData(d) => self.local_data(id, d, false),
            InterestAction::Forward(up, fwd) => {
                self.enqueue(id, up.0 as NodeId, Packet::Interest(fwd));
                self.ensure_tick(id);
            }
            InterestAction::Aggregate => {}
            InterestAction::Drop(_)
            | InterestAction::DenyCascading
            | InterestAction::ServeNack(_) => self.local_timeout(id, &i.name),
        }
    }

    fn local_timeout(&mut self, id: NodeId, name: &FirmwareName) {
        let now = self.now;
        let App::Device(agent) = &mut self.nodes[id].app else {
            return;
        };
        let _ = agent.on_timeout(name, now, &mut self.rng);
        let retry = agent.retry_at();
        self.drain_agent(id);
        if let Some(t) = retry {
            self.wake(id, t);
        }
    }

    fn local_data(&mut self, id: NodeId, d: Data, diverted: bool) {
        let now = self.now;
        let flash = self.flash_write_us;
        let node = &mut self.nodes[id];
        let App::Device(agent) = &mut node.app else {
            return;
        };
        if d.name.is_manifest() {
            let started = agent.on_manifest(&d) == ManifestOutcome::Started;
            self.drain_agent(id);
            if started {
                self.wake(id, now);
            }
            return;
        }
        match agent.on_chunk(&d, diverted) {
            ChunkOutcome::Stored | ChunkOutcome::Complete => {
                node.flash_free_at = node.flash_free_at.max(now) + flash;
                let at = node.flash_free_at;
                self.drain_agent(id);
                self.wake(id, at);
            }
            ChunkOutcome::TagMismatch { .. } => {
                node.fwd.cs.remove(&d.name);
                self.drain_agent(id);
                self.wake(id, now);
            }
            ChunkOutcome::Rejected | ChunkOutcome::AbortIrrecoverable => {
                node.fwd.cs.remove(&d.name);
                self.drain_agent(id);
            }
            ChunkOutcome::Duplicate => {
                self.drain_agent(id);
                self.wake(id, now);
            }
            ChunkOutcome::Ignored => {}
        }
    }

    fn ensure_tick(&mut self, id: NodeId) {
        let n = &mut self.nodes[id];
        if let Some(d) = n.fwd.next_deadline() {
            if n.tick_at.is_none_or(|t| d < t) {
                n.tick_at = Some(d);
                self.schedule(d, Ev::FwdTick(id));
            }
        }
    }

    fn on_tick(&mut self, id: NodeId) {
        let now = self.now;
        if self.nodes[id].tick_at == Some(now) {
            self.nodes[id].tick_at = None;
        }
        let nonce = &mut self.nonce;
        let out = self.nodes[id].fwd.tick_retransmissions(now, || {
            *nonce = nonce.wrapping_add(1);
            *nonce
        });
        for (up, i) in out.resend {
            self.retx.network += 1;
            let detail = if i.name.is_manifest() {
                "manifest"
            } else {
                "chunk"
            };
            self.log(id, MetricEvent::NetRetx, i.name.chunk_index(), detail);
            self.enqueue(id, up.0 as NodeId, Packet::Interest(i));
        }
        for e in out.expired {
            if e.consumers.contains(&AGENT_CONSUMER) {
                self.local_timeout(id, &e.name);
            }
        }
        self.ensure_tick(id);
    }

    fn enqueue(&mut self, id: NodeId, to: NodeId, packet: Packet) {
        let n = &mut self.nodes[id];
        n.queue.push_back((to, packet));
        if !n.radio_busy {
            n.radio_busy = true;
            let at = self.now + self.processing_us;
            self.schedule(at, Ev::TxStart(id));
        }
    }

    fn on_tx_start(&mut self, id: NodeId) {
        let n = &mut self.nodes[id];
        if n.tx.is_none() {
            let Some((to, packet)) = n.queue.pop_front() else {
                n.radio_busy = false;
                return;
            };
            let frames = self.link.fragment_lengths(self.sizes.size(&packet));
            n.tx = Some(InFlight {
                to,
                packet,
                frames,
                frame: 0,
                attempt: 0,
                start: 0,
                end: 0,
                tx_id: 0,
            });
        }
        self.begin_attempt(id);
    }

    fn begin_attempt(&mut self, id: NodeId) {
        let now = self.now;
        while self
            .airlog
            .front()
            .is_some_and(|r| r.end + self.max_air <= now)
        {
            self.airlog.pop_front();
        }
        self.tx_seq += 1;
        let tx_id = self.tx_seq;
        let tx = self.nodes[id].tx.as_mut().expect("attempt without frame");
        let air = self.link.airtime(tx.frames[tx.frame]);
        tx.start = now;
        tx.end = now + air;
        tx.tx_id = tx_id;
        let edge = self.topo.edge_between(id, tx.to).expect("neighbors only");
        self.airlog.push_back(AirRecord {
            tx_id,
            edge,
            start: now,
            end: now + air,
        });
        self.schedule(now + air, Ev::TxEnd(id));
    }

    fn on_tx_end(&mut self, id: NodeId) {
        let now = self.now;
        let tx = self.nodes[id].tx.as_ref().expect("in flight");
        let edge = self.topo.edge_between(id, tx.to).expect("neighbors only");
        let row = &self.conflicts[edge];
        let overlaps = self
            .airlog
            .iter()
            .filter(|r| r.tx_id != tx.tx_id && row[r.edge] && r.start < tx.end && r.end > tx.start)
            .count() as u32;
        let severed = self.outages.iter().any(|&(e, at)| e == edge && now >= at);
        let lost = severed || self.rng.gen::<f64>() < self.link.attempt_loss(overlaps);
        let tx = self.nodes[id].tx.as_mut().expect("in flight");
        if !lost {
            tx.frame += 1;
            tx.attempt = 0;
            if tx.frame < tx.frames.len() {
                self.begin_attempt(id);
                return;
            }
            let done = self.nodes[id].tx.take().expect("in flight");
            let at = now + self.link.propagation_us;
            self.schedule(
                at,
                Ev::Arrive {
                    to: done.to,
                    from: id,
                    packet: done.packet,
                },
            );
            self.next_frame(id);
            return;
        }
        tx.attempt += 1;
        if tx.attempt <= self.link.max_retries {
            let attempt = tx.attempt;
            let chunk = chunk_of(&tx.packet);
            let kind = kind_of(&tx.packet);
            self.retx.link += 1;
            self.log(id, MetricEvent::LinkRetx, chunk, kind);
            let backoff = self.link.backoff(attempt, &mut self.rng);
            self.schedule(now + backoff, Ev::TxStart(id));
        } else {
            self.nodes[id].tx = None;
            self.next_frame(id);
        }
    }

    fn next_frame(&mut self, id: NodeId) {
        if self.nodes[id].queue.is_empty() {
            self.nodes[id].radio_busy = false;
        } else {
            self.on_tx_start(id);
        }
    }

    fn attack(&mut self, from: NodeId, to: NodeId, packet: &mut Packet) {
        let Some(att) = self.attacker.as_mut() else {
            return;
        };
        let Packet::Data(d) = packet else { return };
        let Some(index) = d.name.chunk_index() else {
            return;
        };
        if self.topo.edge_between(from, to) != Some(att.edge) || !att.strikes() {
            return;
        }
        match att.mode {
            AttackMode::TamperPayload => {
                if let Some(b) = d.payload.first_mut() {
                    *b ^= 0xFF;
                } else {
                    d.payload.push(0);
                }
            }
            AttackMode::ForgeTag => {
                if let Auth::HmacTag(tag) = &mut d.auth {
                    tag.iter_mut().for_each(|b| *b ^= 0xA5);
                }
            }
            AttackMode::ReplayStale => {
                let stale = d.name.base().with_epoch(self.previous_epoch);
                let gw = self.topo.gateway();
                if let App::Gateway(g) = &self.nodes[gw].app {
                    if let Some(chunks) = g.repo.chunks(&stale) {
                        let c = &chunks[index as usize % chunks.len()];
                        d.payload = c.payload.clone();
                        d.auth = Auth::HmacTag(c.tag.clone());
                    }
                }
            }
        }
    }

    fn on_arrive(&mut self, to: NodeId, from: NodeId, mut packet: Packet) {
        self.attack(from, to, &mut packet);
        let now = self.now;
        let face = FaceId(from as u32);
        match packet {
            Packet::Interest(i) => {
                let node = &mut self.nodes[to];
                let action = node.fwd.on_interest(face, &i, now, &mut node.app);
                self.drain_agent(to);
                match action {
                    InterestAction::ServeData(d) => self.enqueue(to, from, Packet::Data(d)),
                    InterestAction::ServeNack(n) => self.enqueue(to, from, Packet::Nack(n)),
                    InterestAction::Forward(up, fwd) => {
                        self.enqueue(to, up.0 as NodeId, Packet::Interest(fwd));
                        self.ensure_tick(to);
                    }
                    InterestAction::Aggregate
                    | InterestAction::Drop(_)
                    | InterestAction::DenyCascading => {}
                }
            }
            Packet::Data(d) => {
                let node = &mut self.nodes[to];
                let actions = node.fwd.on_data(face, &d, now, &mut node.app);
                for a in actions {
                    match a {
                        DataAction::ForwardDownstream(faces) => {
                            for f in faces {
                                self.enqueue(to, f.0 as NodeId, Packet::Data(d.clone()));
                            }
                        }
                        DataAction::DeliverLocal(_) => self.local_data(to, d.clone(), false),
                        DataAction::DivertToBuffer => self.local_data(to, d.clone(), true),
                        DataAction::CacheInsert { .. } | DataAction::Drop(_) => {}
                    }
                }
            }
            Packet::Nack(n) => {
                let actions = self.nodes[to].fwd.on_nack(&n);
                for a in actions {
                    match a {
                        NackAction::ForwardDownstream(faces) => {
                            for f in faces {
                                self.enqueue(to, f.0 as NodeId, Packet::Nack(n.clone()));
                            }
                        }
                        NackAction::DeliverLocal(_) => self.local_timeout(to, &n.name),
                        NackAction::Drop(_) => {}
                    }
                }
            }
        }
    }

    pub fn summary(&self) -> RunSummary {
        let mut completion_us = BTreeMap::new();
        let mut fetch_duration_us = BTreeMap::new();
        let mut aborts = Vec::new();
        let mut images_verified = 0;
        for (id, n) in self.nodes.iter().enumerate() {
            let App::Device(agent) = &n.app else { continue };
            let name = self.topo.name(id).to_string();
            if let Some(t) = n.completed_at {
                completion_us.insert(name.clone(), t);
                if let (Some(a), Some(b)) = (n.first_chunk_at, n.last_chunk_at) {
                    fetch_duration_us.insert(name.clone(), b - a);
                }
                if agent.installed().bytes == self.images[n.class] {
                    images_verified += 1;
                }
            }
            if agent.aborted_epoch().is_some() {
                aborts.push(name);
            }
        }
        RunSummary {
            seed: self.seed,
            strategy: self.strategy,
            chunk_count: self.chunk_count,
            updating: self.updating,
            completed: completion_us.len(),
            sim_end_us: self.now,
            completion_us,
            fetch_duration_us,
            retransmissions: self.retx,
            aborts,
            tag_failures: self.tag_failures,
            images_verified,
        }
    }

    pub fn into_output(self) -> RunOutput {
        let summary = self.summary();
        RunOutput {
            records: self.records,
            summary,
        }
    }
}
