//! Single-slot, latest-wins weight store with wait-free reads.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwapOption;

use crate::nn::{NnError, WeightSnapshot};

use super::PipelineError;

#[derive(Debug, Default)]
pub struct WeightStore {
    slot: ArcSwapOption<WeightSnapshot>,
    version: AtomicU64,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Version of the latest publish; 0 before the first.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }

    /// Replaces the slot. The snapshot must carry exactly the next version.
    /// Only one thread may publish.
    pub fn publish(&self, snap: WeightSnapshot) -> Result<(), PipelineError> {
        let expected = self.version() + 1;
        if snap.version() != expected {
            return Err(PipelineError::VersionGap {
                expected,
                got: snap.version(),
            });
        }
        self.slot.store(Some(Arc::new(snap)));
        self.version.store(expected, Ordering::Release);
        Ok(())
    }

    /// The latest snapshot after checksum verification; `None` before the
    /// first publish.
    pub fn fetch_latest(&self) -> Result<Option<Arc<WeightSnapshot>>, NnError> {
        match self.slot.load_full() {
            None => Ok(None),
            Some(s) => {
                s.verify()?;
                Ok(Some(s))
            }
        }
    }

    /// Stores a snapshot without any check. Fault injection only.
    pub fn inject_unchecked(&self, snap: WeightSnapshot) {
        let v = snap.version();
        self.slot.store(Some(Arc::new(snap)));
        self.version.store(v, Ordering::Release);
    }

    pub fn reader(&self) -> StoreReader<'_> {
        StoreReader { store: self, seen: 0 }
    }
}

/// A reader that remembers the newest version it has seen.
#[derive(Debug)]
pub struct StoreReader<'a> {
    store: &'a WeightStore,
    seen: u64,
}

impl StoreReader<'_> {
    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Returns the latest snapshot only if it is newer than anything seen.
    /// A cheap version compare comes first; the checksum is verified only on
    /// an actual change.
    pub fn fetch_if_newer(&mut self) -> Result<Option<Arc<WeightSnapshot>>, PipelineError> {
        if self.store.version() <= self.seen {
            return Ok(None);
        }
        let Some(snap) = self.store.fetch_latest()? else {
            return Ok(None);
        };
        if snap.version() < self.seen {
            return Err(PipelineError::VersionRegression {
                seen: self.seen,
                got: snap.version(),
            });
        }
        if snap.version() == self.seen {
            return Ok(None);
        }
        self.seen = snap.version();
        Ok(Some(snap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParamSet, Tensor};

    fn snap(v: u64) -> WeightSnapshot {
        let mut p = ParamSet::<f32>::new();
        p.insert("w", Tensor::from_f64(&[2], &[v as f64, -(v as f64)])).unwrap();
        WeightSnapshot::encode(&p, v)
    }

    #[test]
    fn latest_wins_and_empty_before_publish() {
        let s = WeightStore::new();
        assert!(s.fetch_latest().unwrap().is_none());
        s.publish(snap(1)).unwrap();
        s.publish(snap(2)).unwrap();
        assert_eq!(s.fetch_latest().unwrap().unwrap().version(), 2);
    }

    #[test]
    fn version_gaps_rejected() {
        let s = WeightStore::new();
        assert!(matches!(s.publish(snap(2)), Err(PipelineError::VersionGap { expected: 1, got: 2 })));
        s.publish(snap(1)).unwrap();
        assert!(s.publish(snap(1)).is_err());
    }

    #[test]
    fn corrupted_slot_is_reported() {
        let s = WeightStore::new();
        let mut bytes = snap(1).as_bytes().to_vec();
        let n = bytes.len();
        bytes[n / 2] ^= 0x10;
        s.inject_unchecked(WeightSnapshot::from_bytes_unchecked(bytes).unwrap());
        assert!(s.fetch_latest().is_err());
        assert!(s.reader().fetch_if_newer().is_err());
    }

    #[test]
    fn reader_sees_each_version_once() {
        let s = WeightStore::new();
        let mut r = s.reader();
        assert!(r.fetch_if_newer().unwrap().is_none());
        s.publish(snap(1)).unwrap();
        assert_eq!(r.fetch_if_newer().unwrap().unwrap().version(), 1);
        assert!(r.fetch_if_newer().unwrap().is_none());
    }
}
