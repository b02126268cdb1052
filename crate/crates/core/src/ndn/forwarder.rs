use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{
    ConsumerId, ContentStore, Data, FaceId, Fib, Interest, Nack, NackReason, Pit, PitEntry,
};
use crate::naming::FirmwareName;
use crate::Micros;

/// Consumer id of the node's own update agent.
pub const AGENT_CONSUMER: ConsumerId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwarderConfig {
    pub pit_capacity: usize,
    pub cs_capacity: usize,
    pub nonce_capacity: usize,
    pub retx_interval_ms: u64,
    pub retx_budget: u8,
    pub nacks_enabled: bool,
}

impl Default for ForwarderConfig {
    fn default() -> Self {
        Self {
            pit_capacity: 16,
            cs_capacity: 64,
            nonce_capacity: 128,
            retx_interval_ms: 2_000,
            retx_budget: 3,
            nacks_enabled: false,
        }
    }
}

/// What the local application wants done with an incoming Interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HookVerdict {
    Serve(Data),
    Nack(NackReason),
    Deny,
    Pass,
}

/// Callbacks into the application co-located with the forwarder.
pub trait AppHook {
    /// Consulted for every Interest before the content store.
    fn lookup(&mut self, face: FaceId, interest: &Interest, now: Micros) -> HookVerdict;
    /// Called when an Interest from a neighbor is forwarded upstream; returning
    /// true registers the application as a local consumer of the PIT entry.
    fn observe_forwarded(&mut self, interest: &Interest) -> bool;
    /// Whether a Data packet not addressed to the application should still be
    /// handed to it (buffer diversion).
    fn wants_diversion(&self, data: &Data) -> bool;
}

/// Hook for nodes without an application.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoApp;

impl AppHook for NoApp {
    fn lookup(&mut self, _: FaceId, _: &Interest, _: Micros) -> HookVerdict {
        HookVerdict::Pass
    }

    fn observe_forwarded(&mut self, _: &Interest) -> bool {
        false
    }

    fn wants_diversion(&self, _: &Data) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Loop,
    NoRoute,
    PitFull,
    Unsolicited,
    NacksDisabled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InterestAction {
    ServeData(Data),
    ServeNack(Nack),
    Aggregate,
    Forward(FaceId, Interest),
    Drop(DropReason),
    DenyCascading,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataAction {
    DeliverLocal(Vec<ConsumerId>),
    ForwardDownstream(Vec<FaceId>),
    CacheInsert { evicted: Option<FirmwareName> },
    DivertToBuffer,
    Drop(DropReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NackAction {
    DeliverLocal(Vec<ConsumerId>),
    ForwardDownstream(Vec<FaceId>),
    Drop(DropReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expired {
    pub name: FirmwareName,
    pub consumers: Vec<ConsumerId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetxOutcome {
    pub resend: Vec<(FaceId, Interest)>,
    pub expired: Vec<Expired>,
}

#[derive(Debug, Clone)]
struct NonceFilter {
    capacity: usize,
    order: VecDeque<(FirmwareName, u32)>,
    seen: HashSet<(FirmwareName, u32)>,
}

impl NonceFilter {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: VecDeque::new(),
            seen: HashSet::new(),
        }
    }

    /// Records the pair; false if it was already present.
    fn insert(&mut self, name: &FirmwareName, nonce: u32) -> bool {
        let key = (name.clone(), nonce);
        if self.seen.contains(&key) {
            return false;
        }
        if self.capacity == 0 {
            return true;
        }
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.order.push_back(key.clone());
        self.seen.insert(key);
        true
    }
}

/// One node's forwarding plane: PIT, content store, FIB and loop filter.
#[derive(Debug, Clone)]
pub struct Forwarder {
    config: ForwarderConfig,
    pub pit: Pit,
    pub cs: ContentStore,
    pub fib: Fib,
    nonces: NonceFilter,
}

impl Forwarder {
    pub fn new(config: ForwarderConfig, fib: Fib) -> Self {
        Self {
            pit: Pit::new(config.pit_capacity),
            cs: ContentStore::new(config.cs_capacity),
            nonces: NonceFilter::new(config.nonce_capacity),
            fib,
            config,
        }
    }

    pub fn config(&self) -> &ForwarderConfig {
        &self.config
    }

    fn retx_interval(&self) -> Micros {
        self.config.retx_interval_ms * 1_000
    }

    pub fn on_interest(
        &mut self,
        face: FaceId,
        interest: &Interest,
        now: Micros,
        hook: &mut dyn AppHook,
    ) -> InterestAction {
        if !self.nonces.insert(&interest.name, interest.nonce) {
            return InterestAction::Drop(DropReason::Loop);
        }
        let verdict = hook.lookup(face, interest, now);
        if verdict == HookVerdict::Deny && !face.is_local() {
            if self.config.nacks_enabled {
                return InterestAction::ServeNack(Nack {
                    name: interest.name.clone(),
                    reason: NackReason::Denied,
                    freshness_ms: 0,
                });
            }
            return InterestAction::DenyCascading;
        }
        if let Some(d) = self.cs.lookup(&interest.name, now) {
            return InterestAction::ServeData(d.clone());
        }
        match verdict {
            HookVerdict::Serve(d) => return InterestAction::ServeData(d),
            HookVerdict::Nack(reason) if self.config.nacks_enabled => {
                return InterestAction::ServeNack(Nack {
                    name: interest.name.clone(),
                    reason,
                    freshness_ms: 0,
                })
            }
            _ => {}
        }
        if let Some(entry) = self.pit.get_mut(&interest.name) {
            if face.is_local() {
                entry.local_consumers.insert(AGENT_CONSUMER);
            } else {
                entry.downstream.insert(face);
            }
            return InterestAction::Aggregate;
        }
        let upstream = match self.fib.lookup(&interest.name) {
            Some(up) if up != face => up,
            _ => return InterestAction::Drop(DropReason::NoRoute),
        };
        if self.pit.is_full() {
            return InterestAction::Drop(DropReason::PitFull);
        }
        let mut entry = PitEntry {
            name: interest.name.clone(),
            interest: interest.clone(),
            upstream,
            downstream: BTreeSet::new(),
            local_consumers: BTreeSet::new(),
            retx_budget: self.config.retx_budget,
            next_retx_at: now + self.retx_interval(),
            created_at: now,
        };
        if face.is_local() {
            entry.local_consumers.insert(AGENT_CONSUMER);
        } else {
            entry.downstream.insert(face);
            if hook.observe_forwarded(interest) {
                entry.local_consumers.insert(AGENT_CONSUMER);
            }
        }
        self.pit.insert(entry);
        InterestAction::Forward(upstream, interest.clone())
    }

    pub fn on_data(
        &mut self,
        face: FaceId,
        data: &Data,
        now: Micros,
        hook: &mut dyn AppHook,
    ) -> Vec<DataAction> {
        let Some(entry) = self.pit.remove(&data.name) else {
            if hook.wants_diversion(data) {
                return vec![DataAction::DivertToBuffer];
            }
            return vec![DataAction::Drop(DropReason::Unsolicited)];
        };
        let mut actions = Vec::with_capacity(3);
        let faces: Vec<FaceId> = entry
            .downstream
            .iter()
            .copied()
            .filter(|f| *f != face)
            .collect();
        if !faces.is_empty() {
            actions.push(DataAction::ForwardDownstream(faces));
        }
        if !entry.local_consumers.is_empty() {
            actions.push(DataAction::DeliverLocal(
                entry.local_consumers.into_iter().collect(),
            ));
        } else if hook.wants_diversion(data) {
            actions.push(DataAction::DivertToBuffer);
        }
        let evicted = self.cs.insert(data, now);
        actions.push(DataAction::CacheInsert { evicted });
        actions
    }

    pub fn on_nack(&mut self, nack: &Nack) -> Vec<NackAction> {
        if !self.config.nacks_enabled {
            return vec![NackAction::Drop(DropReason::NacksDisabled)];
        }
        let Some(entry) = self.pit.remove(&nack.name) else {
            return vec![NackAction::Drop(DropReason::Unsolicited)];
        };
        let mut actions = Vec::new();
        if !entry.downstream.is_empty() {
            actions.push(NackAction::ForwardDownstream(
                entry.downstream.into_iter().collect(),
            ));
        }
        if !entry.local_consumers.is_empty() {
            actions.push(NackAction::DeliverLocal(
                entry.local_consumers.into_iter().collect(),
            ));
        }
        actions
    }

    /// Re-emit due Interests with fresh nonces and expire exhausted entries.
    ///
    /// Entries are processed in (deadline, name) order.
    pub fn tick_retransmissions(
        &mut self,
        now: Micros,
        mut next_nonce: impl FnMut() -> u32,
    ) -> RetxOutcome {
        let mut out = RetxOutcome::default();
        let interval = self.retx_interval();
        for name in self.pit.due(now) {
            let entry = self.pit.get_mut(&name).expect("due entry exists");
            if entry.retx_budget == 0 {
                let entry = self.pit.remove(&name).expect("due entry exists");
                out.expired.push(Expired {
                    name,
                    consumers: entry.local_consumers.into_iter().collect(),
                });
                continue;
            }
            entry.retx_budget -= 1;
            entry.next_retx_at += interval;
            entry.interest.nonce = next_nonce();
            let interest = entry.interest.clone();
            let upstream = entry.upstream;
            self.nonces.insert(&interest.name, interest.nonce);
            out.resend.push((upstream, interest));
        }
        out
    }

    pub fn next_deadline(&self) -> Option<Micros> {
        self.pit.next_deadline()
    }
}

/// Process an Interest arriving on `face`.
pub fn on_interest(
    fwd: &mut Forwarder,
    face: FaceId,
    i: &Interest,
    now: Micros,
    hook: &mut dyn AppHook,
) -> InterestAction {
    fwd.on_interest(face, i, now, hook)
}

/// Process a Data packet arriving on `face`.
pub fn on_data(
    fwd: &mut Forwarder,
    face: FaceId,
    d: &Data,
    now: Micros,
    hook: &mut dyn AppHook,
) -> Vec<DataAction> {
    fwd.on_data(face, d, now, hook)
}

pub fn tick_retransmissions(
    fwd: &mut Forwarder,
    now: Micros,
    next_nonce: impl FnMut() -> u32,
) -> RetxOutcome {
    fwd.tick_retransmissions(now, next_nonce)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naming::BaseName;
    use crate::ndn::Auth;

    const UP: FaceId = FaceId(0);

    fn base() -> BaseName {
        BaseName::new("d", "v", "c", 100).unwrap()
    }

    fn fwd() -> Forwarder {
        Forwarder::new(ForwarderConfig::default(), Fib::with_default(UP))
    }

    fn interest(i: u32, nonce: u32) -> Interest {
        Interest::new(base().chunk(i), nonce)
    }

    fn data(i: u32) -> Data {
        Data {
            name: base().chunk(i),
            payload: vec![i as u8; 32],
            auth: Auth::HmacTag(vec![0; 8]),
            freshness_ms: 0,
        }
    }

    /// Hook with fixed answers.
    struct Scripted {
        verdict: HookVerdict,
        register: bool,
        divert: bool,
    }

    impl AppHook for Scripted {
        fn lookup(&mut self, _: FaceId, _: &Interest, _: Micros) -> HookVerdict {
            self.verdict.clone()
        }
        fn observe_forwarded(&mut self, _: &Interest) -> bool {
            self.register
        }
        fn wants_diversion(&self, _: &Data) -> bool {
            self.divert
        }
    }

    #[test]
    fn cache_hit_serves_data() {
        let mut f = fwd();
        f.cs.insert(&data(3), 0);
        assert_eq!(
            f.on_interest(FaceId(1), &interest(3, 1), 10, &mut NoApp),
            InterestAction::ServeData(data(3))
        );
    }

    #[test]
    fn aggregates_second_downstream() {
        let mut f = fwd();
        assert!(matches!(
            f.on_interest(FaceId(1), &interest(3, 1), 0, &mut NoApp),
            InterestAction::Forward(UP, _)
        ));
        assert_eq!(
            f.on_interest(FaceId(2), &interest(3, 2), 5, &mut NoApp),
            InterestAction::Aggregate
        );
        let e = f.pit.get(&base().chunk(3)).unwrap();
        assert_eq!(e.downstream.len(), 2);
    }

    #[test]
    fn duplicate_nonce_is_dropped() {
        let mut f = fwd();
        f.on_interest(FaceId(1), &interest(3, 7), 0, &mut NoApp);
        assert_eq!(
            f.on_interest(FaceId(2), &interest(3, 7), 1, &mut NoApp),
            InterestAction::Drop(DropReason::Loop)
        );
    }

    #[test]
    fn no_route_and_full_pit() {
        let mut f = Forwarder::new(ForwarderConfig::default(), Fib::new());
        assert_eq!(
            f.on_interest(FaceId(1), &interest(0, 1), 0, &mut NoApp),
            InterestAction::Drop(DropReason::NoRoute)
        );
        let mut f = Forwarder::new(
            ForwarderConfig {
                pit_capacity: 2,
                ..Default::default()
            },
            Fib::with_default(UP),
        );
        f.on_interest(FaceId(1), &interest(0, 1), 0, &mut NoApp);
        f.on_interest(FaceId(1), &interest(1, 2), 0, &mut NoApp);
        assert_eq!(
            f.on_interest(FaceId(1), &interest(2, 3), 0, &mut NoApp),
            InterestAction::Drop(DropReason::PitFull)
        );
        // An Interest arriving from the upstream face has nowhere to go.
        assert_eq!(
            f.on_interest(UP, &interest(9, 4), 0, &mut NoApp),
            InterestAction::Drop(DropReason::NoRoute)
        );
    }

    #[test]
    fn cascading_denial_precedes_cache_and_pit() {
        let mut f = fwd();
        f.cs.insert(&data(0), 0);
        let mut deny = Scripted {
            verdict: HookVerdict::Deny,
            register: false,
            divert: false,
        };
        assert_eq!(
            f.on_interest(FaceId(1), &interest(0, 1), 1, &mut deny),
            InterestAction::DenyCascading
        );
        assert!(f.pit.is_empty());
        // The node's own requests are never denied.
        assert_eq!(
            f.on_interest(FaceId::LOCAL, &interest(0, 2), 1, &mut deny),
            InterestAction::ServeData(data(0))
        );
    }

    #[test]
    fn hook_serves_from_flash() {
        let mut f = fwd();
        let mut serve = Scripted {
            verdict: HookVerdict::Serve(data(5)),
            register: false,
            divert: false,
        };
        assert_eq!(
            f.on_interest(FaceId(1), &interest(5, 1), 0, &mut serve),
            InterestAction::ServeData(data(5))
        );
    }

    #[test]
    fn data_fans_out_to_faces_and_local_consumer() {
        let mut f = fwd();
        let mut register = Scripted {
            verdict: HookVerdict::Pass,
            register: true,
            divert: false,
        };
        f.on_interest(FaceId(1), &interest(3, 1), 0, &mut register);
        f.on_interest(FaceId(2), &interest(3, 2), 0, &mut register);
        let actions = f.on_data(UP, &data(3), 10, &mut NoApp);
        assert_eq!(
            actions,
            vec![
                DataAction::ForwardDownstream(vec![FaceId(1), FaceId(2)]),
                DataAction::DeliverLocal(vec![AGENT_CONSUMER]),
                DataAction::CacheInsert { evicted: None },
            ]
        );
        assert!(f.pit.is_empty());
        assert_eq!(f.cs.peek(&data(3).name), Some(&data(3)));
    }

    #[test]
    fn unsolicited_data() {
        let mut f = fwd();
        assert_eq!(
            f.on_data(UP, &data(9), 0, &mut NoApp),
            vec![DataAction::Drop(DropReason::Unsolicited)]
        );
        let mut divert = Scripted {
            verdict: HookVerdict::Pass,
            register: false,
            divert: true,
        };
        assert_eq!(
            f.on_data(UP, &data(9), 0, &mut divert),
            vec![DataAction::DivertToBuffer]
        );
        assert!(f.cs.is_empty());
    }

    #[test]
    fn forwarded_data_is_diverted_when_wanted() {
        let mut f = fwd();
        let mut divert = Scripted {
            verdict: HookVerdict::Pass,
            register: false,
            divert: true,
        };
        f.on_interest(FaceId(1), &interest(4, 1), 0, &mut divert);
        let actions = f.on_data(UP, &data(4), 1, &mut divert);
        assert!(actions.contains(&DataAction::DivertToBuffer));
        assert!(actions.contains(&DataAction::ForwardDownstream(vec![FaceId(1)])));
    }

    #[test]
    fn retransmission_schedule() {
        let mut f = fwd();
        f.on_interest(FaceId::LOCAL, &interest(0, 1), 0, &mut NoApp);
        let mut nonce = 100;
        let mut next = || {
            nonce += 1;
            nonce
        };
        let mut resent = Vec::new();
        let mut expired_at = None;
        for t in (0..=10_000_000u64).step_by(500_000) {
            let out = f.tick_retransmissions(t, &mut next);
            for (face, i) in out.resend {
                assert_eq!(face, UP);
                resent.push((t, i.nonce));
            }
            if !out.expired.is_empty() {
                assert_eq!(out.expired[0].consumers, vec![AGENT_CONSUMER]);
                expired_at = Some(t);
            }
        }
        let times: Vec<u64> = resent.iter().map(|r| r.0).collect();
        assert_eq!(times, [2_000_000, 4_000_000, 6_000_000]);
        let nonces: BTreeSet<u32> = resent.iter().map(|r| r.1).collect();
        assert_eq!(nonces.len(), 3);
        assert_eq!(expired_at, Some(8_000_000));
    }

    #[test]
    fn satisfied_before_timer_means_no_retransmission() {
        let mut f = fwd();
        f.on_interest(FaceId::LOCAL, &interest(0, 1), 0, &mut NoApp);
        f.on_data(UP, &data(0), 1_500_000, &mut NoApp);
        let out = f.tick_retransmissions(10_000_000, || 1);
        assert_eq!(out, RetxOutcome::default());
    }

    #[test]
    fn retransmissions_ordered_by_deadline_then_name() {
        let mut f = fwd();
        f.on_interest(FaceId(1), &interest(7, 1), 0, &mut NoApp);
        f.on_interest(FaceId(1), &interest(2, 2), 0, &mut NoApp);
        f.on_interest(FaceId(1), &interest(5, 3), 100, &mut NoApp);
        let out = f.tick_retransmissions(3_000_000, || 9);
        let order: Vec<u32> = out
            .resend
            .iter()
            .map(|(_, i)| i.name.chunk_index().unwrap())
            .collect();
        assert_eq!(order, [2, 7, 5]);
    }

    #[test]
    fn nacks_behind_flag() {
        let mut f = fwd();
        let nack = Nack {
            name: base().chunk(1),
            reason: NackReason::NoSuchVersion,
            freshness_ms: 0,
        };
        assert_eq!(
            f.on_nack(&nack),
            vec![NackAction::Drop(DropReason::NacksDisabled)]
        );

        let mut f = Forwarder::new(
            ForwarderConfig {
                nacks_enabled: true,
                ..Default::default()
            },
            Fib::with_default(UP),
        );
        f.on_interest(FaceId(3), &interest(1, 1), 0, &mut NoApp);
        assert_eq!(
            f.on_nack(&nack),
            vec![NackAction::ForwardDownstream(vec![FaceId(3)])]
        );
        let mut deny = Scripted {
            verdict: HookVerdict::Deny,
            register: false,
            divert: false,
        };
        assert!(matches!(
            f.on_interest(FaceId(3), &interest(1, 2), 0, &mut deny),
            InterestAction::ServeNack(Nack {
                reason: NackReason::Denied,
                ..
            })
        ));
    }
}
