//! Fast-tier buffers and the five stage actions of one block pass.

use std::ops::Range;

use crate::codec::Codec;
use crate::field::{copy_planes, PlaneRange, Volume};
use crate::kernel::{compute_temporal_block_with, cone_at_step, Propagator, WaveState};

use super::blocks::{BlockMap, RegionId};
use super::schedule::{Stage, Task, Work};
use super::store::{decode_bytes, encode_region, CompressedStore, Dataset};
use super::tier::{plan_capacity, CapacityPlan, FastTier, DOWNLOAD_SLOTS, UPLOAD_SLOTS};
use super::EngineError;

/// Byte used to overwrite staging buffers after their last read.
const POISON_BYTE: u8 = 0xa5;

/// Transfer and write-back counters of one sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepStats {
    /// Bytes uploaded per dataset, indexed by [`Dataset::index`].
    pub uploaded: [u64; 3],
    /// Bytes downloaded per dataset.
    pub downloaded: [u64; 3],
    /// Write-backs per padded plane for each read-write dataset.
    pub plane_writes: [Vec<u32>; 2],
}

impl SweepStats {
    fn new(planes: usize) -> Self {
        Self { uploaded: [0; 3], downloaded: [0; 3], plane_writes: [vec![0; planes], vec![0; planes]] }
    }
}

fn count_values(work: &mut Work, codec: Codec, map: &BlockMap, planes: PlaneRange) {
    let n = (planes.len() * map.spec().plane_len()) as u64;
    match codec {
        Codec::Passthrough => work.raw_values += n,
        Codec::FixedRate(_) => work.coded_values += n,
    }
}

struct Segment {
    dataset: Dataset,
    region: RegionId,
    bytes: Range<usize>,
}

fn slab_of<'a>(state: &'a mut WaveState, velocity: &'a mut Volume, d: Dataset) -> &'a mut Volume {
    match d {
        Dataset::Previous => &mut state.u_prev,
        Dataset::Current => &mut state.u_curr,
        Dataset::Velocity => velocity,
    }
}

/// Owns the compressed store and every fast-tier buffer.
pub(crate) struct SweepEngine {
    pub store: CompressedStore,
    map: BlockMap,
    codecs: [Codec; 3],
    prop: Propagator,
    poison: bool,
    pub tier: FastTier,
    pub plan: CapacityPlan,
    upload: [Vec<u8>; UPLOAD_SLOTS],
    download: [Vec<u8>; DOWNLOAD_SLOTS],
    state: WaveState,
    velocity: Volume,
    /// Input-time copies of the common region below the current block.
    stash: Vec<Volume>,
    /// Updated common region assembled from two consecutive blocks.
    output: Vec<Volume>,
    pub stats: SweepStats,
}

impl SweepEngine {
    pub fn new(store: CompressedStore, prop: Propagator, capacity: usize, poison: bool) -> Result<Self, EngineError> {
        let map = store.map().clone();
        let spec = *map.spec();
        let codecs = Dataset::ALL.map(|d| store.codec(d));
        let plan = plan_capacity(&map, &codecs);
        let mut tier = FastTier::new(capacity);
        tier.admit(&plan)?;
        let entry = |label: &str| plan.entry(label).expect("plan lists every buffer kind").bytes_each;

        let mut staging = |bytes: usize| -> Result<Vec<u8>, EngineError> {
            tier.alloc(bytes)?;
            Ok(Vec::with_capacity(bytes))
        };
        let upload = [staging(entry("upload-slot"))?, staging(entry("upload-slot"))?];
        let download = [staging(entry("download-slot"))?, staging(entry("download-slot"))?];

        let max_planes = map.max_slab_planes();
        let first = map.working_slab(0);
        let mut slab = || -> Result<Volume, EngineError> {
            tier.alloc(max_planes * spec.plane_bytes())?;
            Ok(Volume::slab_with_capacity(spec, first, max_planes)?)
        };
        let state = WaveState { u_prev: slab()?, u_curr: slab()?, scratch: slab()? };
        let velocity = slab()?;

        let (mut stash, mut output) = (Vec::new(), Vec::new());
        if map.divisions() > 1 {
            let c0 = map.common(0);
            for n in [Dataset::ALL.len(), Dataset::READ_WRITE.len()] {
                let bufs = if n == 3 { &mut stash } else { &mut output };
                for _ in 0..n {
                    tier.alloc(c0.len() * spec.plane_bytes())?;
                    bufs.push(Volume::slab(spec, c0)?);
                }
            }
        }
        debug_assert_eq!(tier.resident(), plan.total_bytes());
        let stats = SweepStats::new(spec.full_range().len());
        Ok(Self { store, map, codecs, prop, poison, tier, plan, upload, download, state, velocity, stash, output, stats })
    }

    pub fn begin_sweep(&mut self) {
        self.stats = SweepStats::new(self.map.spec().full_range().len());
    }

    pub fn act(&mut self, task: Task) -> Result<Work, EngineError> {
        let i = task.block;
        match task.stage {
            Stage::Upload => self.upload(i),
            Stage::Decompress => self.decompress(i),
            Stage::Compute => self.compute(i),
            Stage::Compress => self.compress(i),
            Stage::Download => self.download(i),
        }
    }

    fn layout(&self, datasets: &[Dataset], regions: &[RegionId]) -> Vec<Segment> {
        let mut off = 0;
        let mut out = Vec::new();
        for &dataset in datasets {
            for &region in regions {
                let len = self.store.payload_bytes(dataset, region);
                out.push(Segment { dataset, region, bytes: off..off + len });
                off += len;
            }
        }
        out
    }

    fn upload(&mut self, i: usize) -> Result<Work, EngineError> {
        let segs = self.layout(&Dataset::ALL, &self.map.uploads(i));
        let buf = &mut self.upload[i % UPLOAD_SLOTS];
        buf.clear();
        for s in &segs {
            buf.extend_from_slice(self.store.payload(s.dataset, s.region).bytes());
            self.stats.uploaded[s.dataset.index()] += s.bytes.len() as u64;
        }
        Ok(Work { bytes: buf.len() as u64, ..Work::default() })
    }

    fn decompress(&mut self, i: usize) -> Result<Work, EngineError> {
        let window = self.map.working_slab(i);
        for v in [&mut self.state.u_prev, &mut self.state.u_curr, &mut self.state.scratch, &mut self.velocity] {
            v.retarget(window)?;
        }
        if self.poison {
            for v in [&mut self.state.u_prev, &mut self.state.u_curr, &mut self.state.scratch, &mut self.velocity] {
                v.values_mut().fill(f64::NAN);
            }
        }
        let mut work = Work::default();
        if i > 0 {
            let below = self.map.common(i - 1);
            for d in Dataset::ALL {
                copy_planes(&self.stash[d.index()], below, slab_of(&mut self.state, &mut self.velocity, d), below)?;
            }
        }
        let slot = i % UPLOAD_SLOTS;
        let segs = self.layout(&Dataset::ALL, &self.map.uploads(i));
        let buf = std::mem::take(&mut self.upload[slot]);
        for s in &segs {
            let planes = self.map.region(s.region);
            let codec = self.codecs[s.dataset.index()];
            decode_bytes(codec, &buf[s.bytes.clone()], slab_of(&mut self.state, &mut self.velocity, s.dataset), planes)?;
            count_values(&mut work, codec, &self.map, planes);
        }
        work.bytes = buf.len() as u64;
        self.upload[slot] = buf;
        if self.poison {
            self.upload[slot].fill(POISON_BYTE);
        }
        self.state.u_prev.apply_dirichlet();
        self.state.u_curr.apply_dirichlet();
        if i + 1 < self.map.divisions() {
            let c = self.map.common(i);
            for d in Dataset::ALL {
                let stash = &mut self.stash[d.index()];
                stash.retarget(c)?;
                copy_planes(slab_of(&mut self.state, &mut self.velocity, d), c, stash, c)?;
            }
        } else if self.poison {
            for s in &mut self.stash {
                s.values_mut().fill(f64::NAN);
            }
        }
        Ok(work)
    }

    fn compute(&mut self, i: usize) -> Result<Work, EngineError> {
        let spec = *self.map.spec();
        let window = self.map.working_slab(i);
        let steps = self.map.temporal_steps();
        let poison = self.poison;
        let valid = compute_temporal_block_with(&mut self.state, &self.velocity, &self.prop, steps, |_, ok, st| {
            if !poison {
                return;
            }
            for z in window.planes().filter(|z| !ok.contains_plane(*z)) {
                let r = PlaneRange::new(z, z + 1);
                for v in [&mut st.u_prev, &mut st.u_curr, &mut st.scratch] {
                    v.planes_mut(r).expect("plane lies in the slab").fill(f64::NAN);
                }
            }
        })?;
        let block = self.map.block(i);
        if !valid.contains(&block) {
            return Err(EngineError::Schedule(format!("block {i}: valid planes {valid} miss {block}")));
        }
        let updates: usize = (1..=steps).map(|s| cone_at_step(&spec, window, s).len()).sum();
        Ok(Work { point_updates: (updates * spec.nx * spec.ny) as u64, ..Work::default() })
    }

    fn compress(&mut self, i: usize) -> Result<Work, EngineError> {
        let slot = i % DOWNLOAD_SLOTS;
        let mut buf = std::mem::take(&mut self.download[slot]);
        buf.clear();
        let mut work = Work::default();
        let h = self.map.halo_depth() as isize;
        let block = self.map.block(i);
        let last = i + 1 == self.map.divisions();
        for (k, d) in Dataset::READ_WRITE.into_iter().enumerate() {
            let codec = self.codecs[d.index()];
            let slab = slab_of(&mut self.state, &mut self.velocity, d);
            let r = self.map.remainder(i);
            buf.extend_from_slice(encode_region(codec, slab, r)?.bytes());
            count_values(&mut work, codec, &self.map, r);
            if self.output.is_empty() {
                continue;
            }
            let out = &mut self.output[k];
            if i > 0 {
                // upper half of C_{i-1} comes from this block
                let upper = PlaneRange::new(block.z_begin, block.z_begin + h);
                copy_planes(slab, upper, out, upper)?;
                let c = self.map.common(i - 1);
                buf.extend_from_slice(encode_region(codec, out, c)?.bytes());
                count_values(&mut work, codec, &self.map, c);
                if self.poison {
                    out.values_mut().fill(f64::NAN);
                }
            }
            if !last {
                // lower half of C_i waits for block i + 1
                out.retarget(self.map.common(i))?;
                let lower = PlaneRange::new(block.z_end - h, block.z_end);
                copy_planes(slab, lower, out, lower)?;
            }
        }
        work.bytes = buf.len() as u64;
        self.download[slot] = buf;
        if self.poison {
            for v in [&mut self.state.u_prev, &mut self.state.u_curr, &mut self.state.scratch, &mut self.velocity] {
                v.values_mut().fill(f64::NAN);
            }
        }
        Ok(work)
    }

    fn download(&mut self, i: usize) -> Result<Work, EngineError> {
        let slot = i % DOWNLOAD_SLOTS;
        let segs = self.layout(&Dataset::READ_WRITE, &self.map.downloads(i));
        let full = self.map.spec().full_range();
        for s in &segs {
            self.store.write_back(s.dataset, s.region, &self.download[slot][s.bytes.clone()])?;
            self.stats.downloaded[s.dataset.index()] += s.bytes.len() as u64;
            let writes = &mut self.stats.plane_writes[s.dataset.index()];
            for z in self.map.region(s.region).planes() {
                writes[(z - full.z_begin) as usize] += 1;
            }
        }
        let bytes = self.download[slot].len() as u64;
        if self.poison {
            self.download[slot].fill(POISON_BYTE);
        }
        Ok(Work { bytes, ..Work::default() })
    }
}
