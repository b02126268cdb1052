use std::collections::BTreeMap;

use super::Data;
use crate::naming::FirmwareName;
use crate::Micros;

#[derive(Debug, Clone)]
struct CsEntry {
    data: Data,
    arrival: Micros,
    last_use: Micros,
    seq: u64,
}

/// Fixed-capacity content store with least-recently-used replacement.
///
/// Recency ties under equal timestamps are broken by an operation counter,
/// so eviction order is fully deterministic.
#[derive(Debug, Clone)]
pub struct ContentStore {
    capacity: usize,
    entries: BTreeMap<FirmwareName, CsEntry>,
    recency: BTreeMap<(Micros, u64), FirmwareName>,
    counter: u64,
}

impl ContentStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: BTreeMap::new(),
            recency: BTreeMap::new(),
            counter: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn touch(&mut self, name: &FirmwareName, now: Micros) {
        self.counter += 1;
        let seq = self.counter;
        if let Some(e) = self.entries.get_mut(name) {
            self.recency.remove(&(e.last_use, e.seq));
            e.last_use = now;
            e.seq = seq;
            self.recency.insert((now, seq), name.clone());
        }
    }

    /// Insert or refresh `d`; returns the evicted name if capacity overflowed.
    pub fn insert(&mut self, d: &Data, now: Micros) -> Option<FirmwareName> {
        if self.capacity == 0 {
            return None;
        }
        if let Some(e) = self.entries.get_mut(&d.name) {
            e.data = d.clone();
            e.arrival = now;
            let name = d.name.clone();
            self.touch(&name, now);
            return None;
        }
        let evicted = if self.entries.len() >= self.capacity {
            let (_, victim) = self.recency.pop_first().expect("non-empty store");
            self.entries.remove(&victim);
            Some(victim)
        } else {
            None
        };
        self.counter += 1;
        self.entries.insert(
            d.name.clone(),
            CsEntry {
                data: d.clone(),
                arrival: now,
                last_use: now,
                seq: self.counter,
            },
        );
        self.recency.insert((now, self.counter), d.name.clone());
        evicted
    }

    /// Look up a name, refreshing its recency on a hit.
    pub fn lookup(&mut self, name: &FirmwareName, now: Micros) -> Option<&Data> {
        if !self.entries.contains_key(name) {
            return None;
        }
        self.touch(name, now);
        self.entries.get(name).map(|e| &e.data)
    }

    pub fn peek(&self, name: &FirmwareName) -> Option<&Data> {
        self.entries.get(name).map(|e| &e.data)
    }

    pub fn arrival(&self, name: &FirmwareName) -> Option<Micros> {
        self.entries.get(name).map(|e| e.arrival)
    }

    pub fn remove(&mut self, name: &FirmwareName) -> bool {
        match self.entries.remove(name) {
            Some(e) => {
                self.recency.remove(&(e.last_use, e.seq));
                true
            }
            None => false,
        }
    }

    /// Names from least to most recently used.
    pub fn lru_order(&self) -> Vec<FirmwareName> {
        self.recency.values().cloned().collect()
    }
}

/// Insert into a content store; returns the evicted name, if any.
pub fn cs_insert(cs: &mut ContentStore, d: &Data, now: Micros) -> Option<FirmwareName> {
    cs.insert(d, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naming::BaseName;
    use crate::ndn::Auth;

    fn data(i: u32) -> Data {
        Data {
            name: BaseName::new("d", "v", "c", 1).unwrap().chunk(i),
            payload: vec![i as u8; 4],
            auth: Auth::HmacTag(vec![1; 8]),
            freshness_ms: 0,
        }
    }

    #[test]
    fn capacity_64() {
        let mut cs = ContentStore::new(64);
        for i in 0..64 {
            assert_eq!(cs.insert(&data(i), i as u64), None);
        }
        assert_eq!(cs.len(), 64);
        assert_eq!(cs.insert(&data(64), 100), Some(data(0).name));
        assert_eq!(cs.len(), 64);
    }

    #[test]
    fn reinsert_refreshes() {
        let mut cs = ContentStore::new(2);
        cs.insert(&data(0), 0);
        cs.insert(&data(1), 1);
        assert_eq!(cs.insert(&data(0), 2), None);
        assert_eq!(cs.insert(&data(2), 3), Some(data(1).name));
    }

    #[test]
    fn lookup_is_byte_identical_and_refreshes() {
        let mut cs = ContentStore::new(2);
        cs.insert(&data(0), 0);
        cs.insert(&data(1), 0);
        assert_eq!(cs.lookup(&data(0).name, 5).unwrap(), &data(0));
        assert_eq!(cs.insert(&data(2), 6), Some(data(1).name));
        assert!(cs.lookup(&data(1).name, 7).is_none());
    }

    #[test]
    fn remove_entry() {
        let mut cs = ContentStore::new(4);
        cs.insert(&data(0), 0);
        assert!(cs.remove(&data(0).name));
        assert!(!cs.remove(&data(0).name));
        assert!(cs.is_empty());
        assert!(cs.lru_order().is_empty());
    }
}
