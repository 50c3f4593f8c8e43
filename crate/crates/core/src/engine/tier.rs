//! Capacity-bounded arena standing in for device memory.
//!
//! All fast-tier buffers are sized at planning time from the block map and the
//! codec assignment and allocated once per run, so the peak resident total is
//! known before the first transfer.

use std::fmt;

use crate::codec::Codec;

use super::blocks::{BlockMap, RegionId};
use super::store::{region_extents, Dataset};
use super::EngineError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub label: String,
    pub count: usize,
    pub bytes_each: usize,
}

impl PlanEntry {
    pub fn bytes(&self) -> usize {
        self.count * self.bytes_each
    }
}

/// Fast-tier requirement of one configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityPlan {
    pub entries: Vec<PlanEntry>,
}

impl CapacityPlan {
    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(PlanEntry::bytes).sum()
    }

    pub fn entry(&self, label: &str) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

impl fmt::Display for CapacityPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "  {:<16} {} x {} bytes = {} bytes", e.label, e.count, e.bytes_each, e.bytes())?;
        }
        writeln!(f, "  {:<16} {} bytes", "total", self.total_bytes())
    }
}

pub const UPLOAD_SLOTS: usize = 2;
pub const DOWNLOAD_SLOTS: usize = 2;
/// prev, curr, velocity and the Laplacian scratch.
pub const WORKING_SLABS: usize = 4;

pub(crate) fn payload_bytes(map: &BlockMap, codec: Codec, id: RegionId) -> usize {
    codec.payload_bytes(region_extents(map.spec(), map.region(id)))
}

/// Bytes staged for upload by block `i` over all streamed datasets.
pub(crate) fn upload_bytes(map: &BlockMap, codecs: &[Codec; 3], i: usize) -> usize {
    Dataset::ALL
        .iter()
        .flat_map(|d| map.uploads(i).into_iter().map(move |id| payload_bytes(map, codecs[d.index()], id)))
        .sum()
}

/// Bytes staged for download by block `i` over the read-write datasets.
pub(crate) fn download_bytes(map: &BlockMap, codecs: &[Codec; 3], i: usize) -> usize {
    Dataset::READ_WRITE
        .iter()
        .flat_map(|d| map.downloads(i).into_iter().map(move |id| payload_bytes(map, codecs[d.index()], id)))
        .sum()
}

/// Computes the buffers one sweep needs:
/// double-buffered upload and download staging, four working slabs, the
/// input-time copies of a common region for each streamed dataset, and the
/// output buffer that assembles a common region from two blocks.
pub fn plan_capacity(map: &BlockMap, codecs: &[Codec; 3]) -> CapacityPlan {
    let pb = map.spec().plane_bytes();
    let d = map.divisions();
    let common = if d > 1 { 2 * map.halo_depth() * pb } else { 0 };
    let up = (0..d).map(|i| upload_bytes(map, codecs, i)).max().unwrap_or(0);
    let down = (0..d).map(|i| download_bytes(map, codecs, i)).max().unwrap_or(0);
    let entries = vec![
        PlanEntry { label: "upload-slot".into(), count: UPLOAD_SLOTS, bytes_each: up },
        PlanEntry { label: "working-slab".into(), count: WORKING_SLABS, bytes_each: map.max_slab_planes() * pb },
        PlanEntry { label: "input-copy".into(), count: Dataset::ALL.len(), bytes_each: common },
        PlanEntry { label: "output-buffer".into(), count: Dataset::READ_WRITE.len(), bytes_each: common },
        PlanEntry { label: "download-slot".into(), count: DOWNLOAD_SLOTS, bytes_each: down },
    ];
    CapacityPlan { entries }
}

/// Allocation ledger enforcing the capacity bound.
#[derive(Debug, Clone)]
pub struct FastTier {
    capacity: usize,
    resident: usize,
    peak: usize,
}

impl FastTier {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, resident: 0, peak: 0 }
    }

    /// Rejects a plan that cannot fit before anything is allocated.
    pub fn admit(&self, plan: &CapacityPlan) -> Result<(), EngineError> {
        let required = plan.total_bytes();
        if self.resident + required > self.capacity {
            return Err(EngineError::Capacity { required, capacity: self.capacity });
        }
        Ok(())
    }

    pub fn alloc(&mut self, bytes: usize) -> Result<(), EngineError> {
        let next = self.resident + bytes;
        if next > self.capacity {
            return Err(EngineError::Capacity { required: next, capacity: self.capacity });
        }
        self.resident = next;
        self.peak = self.peak.max(next);
        Ok(())
    }

    pub fn release(&mut self, bytes: usize) {
        debug_assert!(bytes <= self.resident);
        self.resident -= bytes;
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn resident(&self) -> usize {
        self.resident
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}
