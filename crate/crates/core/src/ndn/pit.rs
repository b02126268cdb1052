use std::collections::{BTreeMap, BTreeSet};

use super::{FaceId, Interest};
use crate::naming::FirmwareName;
use crate::Micros;

/// Identifier of an application registered on a PIT entry.
pub type ConsumerId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitEntry {
    pub name: FirmwareName,
    /// Last Interest sent upstream; retransmissions reuse it with a new nonce.
    pub interest: Interest,
    pub upstream: FaceId,
    pub downstream: BTreeSet<FaceId>,
    pub local_consumers: BTreeSet<ConsumerId>,
    pub retx_budget: u8,
    pub next_retx_at: Micros,
    pub created_at: Micros,
}

/// Pending Interest Table.
#[derive(Debug, Clone)]
pub struct Pit {
    capacity: usize,
    entries: BTreeMap<FirmwareName, PitEntry>,
}

impl Pit {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn get(&self, name: &FirmwareName) -> Option<&PitEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &FirmwareName) -> Option<&mut PitEntry> {
        self.entries.get_mut(name)
    }

    pub fn insert(&mut self, entry: PitEntry) {
        self.entries.insert(entry.name.clone(), entry);
    }

    pub fn remove(&mut self, name: &FirmwareName) -> Option<PitEntry> {
        self.entries.remove(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PitEntry> {
        self.entries.values()
    }

    /// Names whose timer is due, ordered by deadline then name.
    pub fn due(&self, now: Micros) -> Vec<FirmwareName> {
        let mut due: Vec<(Micros, &FirmwareName)> = self
            .entries
            .values()
            .filter(|e| e.next_retx_at <= now)
            .map(|e| (e.next_retx_at, &e.name))
            .collect();
        due.sort();
        due.into_iter().map(|(_, n)| n.clone()).collect()
    }

    pub fn next_deadline(&self) -> Option<Micros> {
        self.entries.values().map(|e| e.next_retx_at).min()
    }
}
