//! JSON snapshots of an index.
//!
//! A snapshot records the table geometry and, per entity, its label,
//! temperature and addresses. Restoring replays the entities through
//! [`CuckooIndex::insert`] in snapshot order, so bucket positions may differ
//! from the original while the label -> (temperature, addresses) map is
//! reproduced exactly.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CuckooIndex, IndexConfig, IndexError, InsertOutcome};
use crate::forest::NodeAddress;

pub const SNAPSHOT_FORMAT: &str = "cftrag-index";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntity {
    pub label: String,
    pub temperature: u64,
    pub addresses: Vec<NodeAddress>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexSnapshot {
    pub format: String,
    pub version: u32,
    pub bucket_count: usize,
    pub max_kicks: u32,
    pub grow_threshold: Option<f64>,
    pub sort_on_touch: bool,
    pub seed: u64,
    /// Tree and node counts of the forest the index was built over.
    pub forest_shape: Option<(usize, usize)>,
    pub entities: Vec<SnapshotEntity>,
}

impl IndexSnapshot {
    pub fn capture(index: &CuckooIndex, forest_shape: Option<(usize, usize)>) -> Self {
        let entities = index
            .occupied()
            .map(|(_, head)| {
                let h = index.head(head);
                SnapshotEntity {
                    label: h.label().to_string(),
                    temperature: h.temperature(),
                    addresses: index.addresses(head).collect(),
                }
            })
            .collect();
        let cfg = index.config();
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            bucket_count: index.bucket_count(),
            max_kicks: cfg.max_kicks,
            grow_threshold: cfg.grow_threshold,
            sort_on_touch: cfg.sort_on_touch,
            seed: cfg.seed,
            forest_shape,
            entities,
        }
    }

    pub fn restore(&self) -> Result<CuckooIndex, IndexError> {
        if self.format != SNAPSHOT_FORMAT {
            return Err(IndexError::Snapshot(format!("unknown format `{}`", self.format)));
        }
        if self.version != SNAPSHOT_VERSION {
            return Err(IndexError::Snapshot(format!("unsupported version {}", self.version)));
        }
        let mut index = CuckooIndex::new(IndexConfig {
            initial_buckets: self.bucket_count,
            max_kicks: self.max_kicks,
            grow_threshold: self.grow_threshold,
            sort_on_touch: self.sort_on_touch,
            seed: self.seed,
        })?;
        for e in &self.entities {
            match index.insert(&e.label, &e.addresses) {
                InsertOutcome::Inserted => {}
                InsertOutcome::AppendedExisting => {
                    return Err(IndexError::Snapshot(format!("duplicate entity `{}`", e.label)))
                }
                InsertOutcome::Failed => return Err(IndexError::RestoreFailed { label: e.label.clone() }),
            }
            let head = index.lookup(&e.label).head().expect("entity was just inserted");
            index.set_temperature(head, e.temperature);
        }
        Ok(index)
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()
    }

    pub fn read_from(path: &Path) -> std::io::Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        Ok(serde_json::from_reader(reader)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_roundtrip() {
        let mut index = CuckooIndex::new(IndexConfig::default()).unwrap();
        for i in 0..300u32 {
            let addrs: Vec<NodeAddress> = (0..i % 11).map(|n| NodeAddress::new(i, n)).collect();
            index.insert(&format!("ent {i}"), &addrs);
        }
        for _ in 0..4 {
            index.lookup_and_touch("ent 17");
        }
        let snap = IndexSnapshot::capture(&index, Some((300, 1500)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        snap.write_to(&path).unwrap();
        let loaded = IndexSnapshot::read_from(&path).unwrap();
        assert_eq!(loaded, snap);

        let restored = loaded.restore().unwrap();
        restored.audit().unwrap();
        assert_eq!(restored.entry_count(), index.entry_count());
        for (_, head) in index.occupied() {
            let h = index.head(head);
            let r = restored.lookup(h.label()).head().unwrap();
            assert_eq!(restored.head(r).temperature(), h.temperature());
            assert_eq!(
                restored.addresses(r).collect::<Vec<_>>(),
                index.addresses(head).collect::<Vec<_>>()
            );
        }
        // Capturing the restored index again gives the same entity set.
        let mut a = IndexSnapshot::capture(&restored, Some((300, 1500))).entities;
        let mut b = snap.entities.clone();
        a.sort_by(|x, y| x.label.cmp(&y.label));
        b.sort_by(|x, y| x.label.cmp(&y.label));
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_foreign_snapshots() {
        let index = CuckooIndex::new(IndexConfig::default()).unwrap();
        let mut snap = IndexSnapshot::capture(&index, None);
        snap.version = 99;
        assert!(matches!(snap.restore(), Err(IndexError::Snapshot(_))));
        snap.version = SNAPSHOT_VERSION;
        snap.format = "other".into();
        assert!(snap.restore().is_err());
    }
}
