//! Cuckoo index from entity labels to block lists of node addresses.
//!
//! Buckets hold four entries. Each entry is a 12-bit fingerprint plus a
//! handle to the entity's [`BlockListHead`], which keeps the full label (used
//! to reject fingerprint collisions and to rehash on expansion), a
//! temperature counter, and the chain of address blocks.
//!
//! Placement is partial-key cuckoo hashing: an entity may live in
//! `i1 = H(label) mod m` or `i2 = i1 ^ H(fp) mod m`, and an entry can be
//! moved between its two buckets knowing only its fingerprint.
//!
//! Lookups bump the hit entity's temperature and, when sorting is enabled,
//! swap it toward the front of its bucket so hot entities are probed first.

mod blocks;
mod snapshot;

use std::collections::BTreeMap;
use std::num::NonZeroU16;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::forest::{Forest, NodeAddress};
use crate::hash::{fingerprint_hash, label_hash, FINGERPRINT_BITS, FINGERPRINT_MASK};

pub use blocks::{AddressBlock, BlockId, BlockIter, BlockListHead, BlockStore, HeadId, BLOCK_CAPACITY};
pub use snapshot::{IndexSnapshot, SnapshotEntity, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

pub const SLOTS_PER_BUCKET: usize = 4;
pub const DEFAULT_BUCKETS: usize = 1024;
pub const DEFAULT_MAX_KICKS: u32 = 500;
pub const DEFAULT_GROW_THRESHOLD: f64 = 0.85;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("bucket count {0} is not a non-zero power of two")]
    BucketCount(usize),
    #[error("grow threshold {0} is outside (0, 1]")]
    Threshold(f64),
    #[error("expansion from {bucket_count} buckets could not re-place every entity")]
    ExpansionFailed { bucket_count: usize },
    #[error("could not place `{label}` while restoring a snapshot")]
    RestoreFailed { label: String },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// A non-zero 12-bit fingerprint. Zero marks an empty slot and is never
/// produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint(NonZeroU16);

impl Fingerprint {
    pub fn of(label: &str) -> Self {
        Self::from_hash(label_hash(label))
    }

    /// Takes the top 12 bits of the label hash; bucket indices use the low
    /// bits.
    fn from_hash(hash: u64) -> Self {
        let raw = ((hash >> (64 - FINGERPRINT_BITS)) & FINGERPRINT_MASK) as u16;
        Self(NonZeroU16::new(raw).unwrap_or(NonZeroU16::MIN))
    }

    pub fn value(self) -> u16 {
        self.0.get()
    }
}

/// Both candidate buckets of `label` for a table of `bucket_count` buckets.
pub fn candidate_indices(label: &str, bucket_count: usize) -> (usize, usize) {
    debug_assert!(bucket_count.is_power_of_two());
    let hash = label_hash(label);
    let fp = Fingerprint::from_hash(hash);
    let i1 = hash as usize & (bucket_count - 1);
    (i1, partner_index(i1, fp, bucket_count))
}

/// The other candidate bucket of an entry sitting in bucket `index`.
#[inline]
pub fn partner_index(index: usize, fp: Fingerprint, bucket_count: usize) -> usize {
    (index ^ fingerprint_hash(fp.value()) as usize) & (bucket_count - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Entry {
    fp: Fingerprint,
    head: HeadId,
}

type Bucket = [Option<Entry>; SLOTS_PER_BUCKET];

#[derive(Clone, Debug, PartialEq)]
pub struct IndexConfig {
    /// Initial bucket count; must be a power of two.
    pub initial_buckets: usize,
    pub max_kicks: u32,
    /// Load factor above which the table doubles. `None` disables growth.
    pub grow_threshold: Option<f64>,
    /// Reorder bucket entries by temperature on lookup.
    pub sort_on_touch: bool,
    /// Seed for victim selection during relocation.
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            initial_buckets: DEFAULT_BUCKETS,
            max_kicks: DEFAULT_MAX_KICKS,
            grow_threshold: Some(DEFAULT_GROW_THRESHOLD),
            sort_on_touch: true,
            seed: 0,
        }
    }
}

impl IndexConfig {
    pub fn fixed(buckets: usize) -> Self {
        Self {
            initial_buckets: buckets,
            grow_threshold: None,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), IndexError> {
        if self.initial_buckets == 0 || !self.initial_buckets.is_power_of_two() {
            return Err(IndexError::BucketCount(self.initial_buckets));
        }
        if let Some(t) = self.grow_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(IndexError::Threshold(t));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    AppendedExisting,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Found(HeadId),
    Absent,
}

impl Lookup {
    pub fn head(self) -> Option<HeadId> {
        match self {
            Lookup::Found(h) => Some(h),
            Lookup::Absent => None,
        }
    }

    pub fn is_found(self) -> bool {
        matches!(self, Lookup::Found(_))
    }
}

/// Result of a raw probe that also reports fingerprint-only matches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeOutcome {
    /// Some slot in a candidate bucket carried the query's fingerprint.
    pub fingerprint_matched: bool,
    /// The label check confirmed a stored entity.
    pub found: Option<HeadId>,
    /// Occupied slots across the distinct candidate buckets.
    pub occupied_slots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexStats {
    pub bucket_count: usize,
    pub entry_count: usize,
    pub load_factor: f64,
    pub total_addresses: usize,
    /// Successful placements keyed by the number of relocations they needed.
    pub kick_histogram: BTreeMap<u32, u64>,
    pub failed_inserts: u64,
    pub expansions: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SlotPosition {
    pub bucket: usize,
    pub slot: usize,
}

pub struct CuckooIndex {
    buckets: Vec<Bucket>,
    store: BlockStore,
    entry_count: usize,
    config: IndexConfig,
    rng: ChaCha8Rng,
    kick_histogram: BTreeMap<u32, u64>,
    failed_inserts: u64,
    expansions: u32,
}

impl std::fmt::Debug for CuckooIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CuckooIndex")
            .field("bucket_count", &self.buckets.len())
            .field("entry_count", &self.entry_count)
            .field("config", &self.config)
            .finish()
    }
}

/// Places `entry` in bucket `i1` or `i2`, relocating residents if both are
/// full. On failure every swap is undone and `None` is returned; otherwise
/// the number of relocations used.
fn place(
    buckets: &mut [Bucket],
    entry: Entry,
    i1: usize,
    i2: usize,
    max_kicks: u32,
    rng: &mut ChaCha8Rng,
) -> Option<u32> {
    for i in [i1, i2] {
        if let Some(slot) = buckets[i].iter().position(Option::is_none) {
            buckets[i][slot] = Some(entry);
            return Some(0);
        }
    }

    let m = buckets.len();
    let mut i = if rng.random_bool(0.5) { i1 } else { i2 };
    let mut carried = entry;
    let mut path: Vec<(usize, usize)> = Vec::new();
    for kick in 0..max_kicks {
        let slot = rng.random_range(0..SLOTS_PER_BUCKET);
        let resident = buckets[i][slot].replace(carried).expect("relocation hit an empty slot");
        carried = resident;
        path.push((i, slot));
        i = partner_index(i, carried.fp, m);
        if let Some(free) = buckets[i].iter().position(Option::is_none) {
            buckets[i][free] = Some(carried);
            return Some(kick + 1);
        }
    }

    for &(b, s) in path.iter().rev() {
        carried = buckets[b][s].replace(carried).expect("rollback hit an empty slot");
    }
    debug_assert_eq!(carried, entry);
    None
}

impl CuckooIndex {
    pub fn new(config: IndexConfig) -> Result<Self, IndexError> {
        config.validate()?;
        Ok(Self {
            buckets: vec![[None; SLOTS_PER_BUCKET]; config.initial_buckets],
            store: BlockStore::new(),
            entry_count: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            kick_histogram: BTreeMap::new(),
            failed_inserts: 0,
            expansions: 0,
        })
    }

    /// Indexes every label of `forest` with all of its addresses. Labels
    /// are inserted in order of first occurrence.
    pub fn build(forest: &Forest, config: IndexConfig) -> Result<Self, IndexError> {
        let mut index = Self::new(config)?;
        for (label, addresses) in forest.grouped_labels() {
            if index.insert(label, &addresses) == InsertOutcome::Failed {
                return Err(IndexError::ExpansionFailed {
                    bucket_count: index.bucket_count(),
                });
            }
        }
        Ok(index)
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn set_sort_on_touch(&mut self, enabled: bool) {
        self.config.sort_on_touch = enabled;
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn entry_count(&self) -> usize {
        self.entry_count
    }

    pub fn is_empty(&self) -> bool {
        self.entry_count == 0
    }

    pub fn load_factor(&self) -> f64 {
        self.entry_count as f64 / (self.buckets.len() * SLOTS_PER_BUCKET) as f64
    }

    pub fn head(&self, id: HeadId) -> &BlockListHead {
        self.store.head(id)
    }

    pub fn blocks(&self, id: HeadId) -> BlockIter<'_> {
        self.store.blocks_of(id)
    }

    pub fn addresses(&self, id: HeadId) -> impl Iterator<Item = NodeAddress> + '_ {
        self.store.addresses_of(id)
    }

    pub fn candidates(&self, label: &str) -> (usize, usize) {
        candidate_indices(label, self.buckets.len())
    }

    fn find(&self, label: &str, probes: &mut u64) -> Option<SlotPosition> {
        let hash = label_hash(label);
        let fp = Fingerprint::from_hash(hash);
        let m = self.buckets.len();
        let i1 = hash as usize & (m - 1);
        let i2 = partner_index(i1, fp, m);
        for bucket in [i1, i2] {
            for (slot, entry) in self.buckets[bucket].iter().enumerate() {
                *probes += 1;
                if let Some(e) = entry {
                    if e.fp == fp && self.store.head(e.head).label() == label {
                        return Some(SlotPosition { bucket, slot });
                    }
                }
            }
            if i1 == i2 {
                break;
            }
        }
        None
    }

    /// Read-only lookup: no temperature change, no reordering.
    pub fn lookup(&self, label: &str) -> Lookup {
        match self.find(label, &mut 0) {
            Some(pos) => Lookup::Found(self.entry_at(pos).head),
            None => Lookup::Absent,
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.lookup(label).is_found()
    }

    /// Where `label` currently sits, if stored.
    pub fn position_of(&self, label: &str) -> Option<SlotPosition> {
        self.find(label, &mut 0)
    }

    fn entry_at(&self, pos: SlotPosition) -> Entry {
        self.buckets[pos.bucket][pos.slot].expect("position refers to an empty slot")
    }

    /// Looks `label` up, bumps its temperature and, with sorting enabled,
    /// moves it ahead of entries with strictly lower temperature.
    pub fn lookup_and_touch(&mut self, label: &str) -> Lookup {
        self.lookup_and_touch_counted(label).0
    }

    /// [`lookup_and_touch`](Self::lookup_and_touch) that also reports how
    /// many slots were examined.
    pub fn lookup_and_touch_counted(&mut self, label: &str) -> (Lookup, u64) {
        let mut probes = 0;
        let Some(pos) = self.find(label, &mut probes) else {
            return (Lookup::Absent, probes);
        };
        let head = self.entry_at(pos).head;
        let temperature = {
            let h = self.store.head_mut(head);
            h.temperature += 1;
            h.temperature
        };
        if self.config.sort_on_touch {
            self.promote(pos, temperature);
        }
        (Lookup::Found(head), probes)
    }

    fn promote(&mut self, pos: SlotPosition, temperature: u64) {
        let bucket = &mut self.buckets[pos.bucket];
        let mut slot = pos.slot;
        while slot > 0 {
            let ahead = match bucket[slot - 1] {
                None => true,
                Some(e) => self.store.head(e.head).temperature < temperature,
            };
            if !ahead {
                break;
            }
            bucket.swap(slot - 1, slot);
            slot -= 1;
        }
    }

    /// Probe used by false-positive measurements: reports a fingerprint
    /// match separately from the label-verified result.
    pub fn probe(&self, label: &str) -> ProbeOutcome {
        let (i1, i2) = self.candidates(label);
        let fp = Fingerprint::of(label);
        let mut outcome = ProbeOutcome {
            fingerprint_matched: false,
            found: None,
            occupied_slots: 0,
        };
        let distinct: &[usize] = if i1 == i2 { &[i1] } else { &[i1, i2] };
        for &b in distinct {
            for e in self.buckets[b].iter().flatten() {
                outcome.occupied_slots += 1;
                if e.fp == fp {
                    outcome.fingerprint_matched = true;
                    if outcome.found.is_none() && self.store.head(e.head).label() == label {
                        outcome.found = Some(e.head);
                    }
                }
            }
        }
        outcome
    }

    /// Inserts `label` with its addresses, or appends them if the label is
    /// already indexed.
    pub fn insert(&mut self, label: &str, addresses: &[NodeAddress]) -> InsertOutcome {
        if let Some(pos) = self.find(label, &mut 0) {
            let head = self.entry_at(pos).head;
            for &a in addresses {
                self.store.append(head, a);
            }
            return InsertOutcome::AppendedExisting;
        }

        let head = self.store.create(label, addresses);
        let entry = Entry {
            fp: Fingerprint::of(label),
            head,
        };
        let (i1, i2) = self.candidates(label);
        let mut placed = place(&mut self.buckets, entry, i1, i2, self.config.max_kicks, &mut self.rng);
        if placed.is_none() && self.config.grow_threshold.is_some() && self.expand().is_ok() {
            let (i1, i2) = self.candidates(label);
            placed = place(&mut self.buckets, entry, i1, i2, self.config.max_kicks, &mut self.rng);
        }
        let Some(kicks) = placed else {
            self.store.release(head);
            self.failed_inserts += 1;
            return InsertOutcome::Failed;
        };

        self.entry_count += 1;
        *self.kick_histogram.entry(kicks).or_default() += 1;
        if let Some(threshold) = self.config.grow_threshold {
            if self.load_factor() > threshold {
                // The entity is already placed; a failed growth leaves the
                // table as it was.
                let _ = self.expand();
            }
        }
        InsertOutcome::Inserted
    }

    /// Appends one address to a stored entity's block list.
    pub fn append_address(&mut self, head: HeadId, addr: NodeAddress) -> bool {
        self.store.append(head, addr)
    }

    /// Deletes `label` and its block list.
    pub fn remove(&mut self, label: &str) -> bool {
        let Some(pos) = self.find(label, &mut 0) else {
            return false;
        };
        let entry = self.buckets[pos.bucket][pos.slot].take().expect("found slot is occupied");
        self.store.release(entry.head);
        self.entry_count -= 1;
        true
    }

    /// Doubles the bucket array and re-places every entity from its stored
    /// label. If some entity cannot be placed, a quadrupled table is tried
    /// before giving up; the index is unchanged on failure.
    pub fn expand(&mut self) -> Result<(), IndexError> {
        let old = self.buckets.len();
        let entries: Vec<Entry> = self.buckets.iter().flat_map(|b| b.iter().flatten().copied()).collect();
        for factor in [2, 4] {
            let m = old * factor;
            let mut fresh = vec![[None; SLOTS_PER_BUCKET]; m];
            let mut ok = true;
            for &e in &entries {
                let (i1, i2) = candidate_indices(self.store.head(e.head).label(), m);
                if place(&mut fresh, e, i1, i2, self.config.max_kicks, &mut self.rng).is_none() {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.buckets = fresh;
                self.expansions += 1;
                return Ok(());
            }
        }
        Err(IndexError::ExpansionFailed { bucket_count: old })
    }

    pub fn stats(&self) -> IndexStats {
        let total_addresses = self
            .entries()
            .map(|(_, e)| self.store.head(e.head).count())
            .sum();
        IndexStats {
            bucket_count: self.buckets.len(),
            entry_count: self.entry_count,
            load_factor: self.load_factor(),
            total_addresses,
            kick_histogram: self.kick_histogram.clone(),
            failed_inserts: self.failed_inserts,
            expansions: self.expansions,
        }
    }

    fn entries(&self) -> impl Iterator<Item = (SlotPosition, Entry)> + '_ {
        self.buckets.iter().enumerate().flat_map(|(bucket, b)| {
            b.iter()
                .enumerate()
                .filter_map(move |(slot, e)| e.map(|e| (SlotPosition { bucket, slot }, e)))
        })
    }

    /// Every stored entity with its position, in bucket order.
    pub fn occupied(&self) -> impl Iterator<Item = (SlotPosition, HeadId)> + '_ {
        self.entries().map(|(p, e)| (p, e.head))
    }

    /// Fingerprint and head of the entry at a slot.
    pub fn slot(&self, bucket: usize, slot: usize) -> Option<(Fingerprint, HeadId)> {
        self.buckets.get(bucket)?.get(slot)?.map(|e| (e.fp, e.head))
    }

    /// Full-scan audit of the table invariants. Returns a description of the
    /// first violation found.
    pub fn audit(&self) -> Result<(), String> {
        let m = self.buckets.len();
        if !m.is_power_of_two() {
            return Err(format!("bucket count {m} is not a power of two"));
        }
        let mut seen = 0;
        for (pos, e) in self.entries() {
            seen += 1;
            let head = self.store.head(e.head);
            let label = head.label();
            if Fingerprint::of(label) != e.fp {
                return Err(format!("fingerprint of `{label}` does not match its slot"));
            }
            let (i1, i2) = candidate_indices(label, m);
            if pos.bucket != i1 && pos.bucket != i2 {
                return Err(format!("`{label}` sits in bucket {} outside {{{i1}, {i2}}}", pos.bucket));
            }
            let partner = partner_index(pos.bucket, e.fp, m);
            if partner_index(partner, e.fp, m) != pos.bucket {
                return Err(format!("partner map is not an involution at bucket {}", pos.bucket));
            }
            let counted: usize = self.store.blocks_of(e.head).map(|b| b.addresses().len()).sum();
            if counted != head.count() {
                return Err(format!("`{label}` count {} disagrees with its chain ({counted})", head.count()));
            }
            let blocks: Vec<&AddressBlock> = self.store.blocks_of(e.head).collect();
            if blocks.iter().rev().skip(1).any(|b| !b.is_full()) {
                return Err(format!("`{label}` has a partially filled inner block"));
            }
        }
        if seen != self.entry_count {
            return Err(format!("entry_count {} but {seen} occupied slots", self.entry_count));
        }
        if self.store.live_heads() != self.entry_count {
            return Err("leaked or dangling block-list heads".into());
        }
        Ok(())
    }

    /// Whether occupied entries of `bucket` have non-increasing temperature.
    pub fn bucket_is_ordered(&self, bucket: usize) -> bool {
        let temps: Vec<u64> = self.buckets[bucket]
            .iter()
            .flatten()
            .map(|e| self.store.head(e.head).temperature())
            .collect();
        temps.windows(2).all(|w| w[0] >= w[1])
    }

    pub(crate) fn set_temperature(&mut self, head: HeadId, temperature: u64) {
        self.store.head_mut(head).temperature = temperature;
    }
}
