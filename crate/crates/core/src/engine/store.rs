//! Host-side store of separately compressed regions, and the run modes that
//! decide which dataset uses which codec.

use std::fmt;
use std::str::FromStr;

use crate::codec::{self, Codec, EncodedPayload, Rate};
use crate::field::{GridSpec, PlaneRange, Volume};

use super::blocks::{BlockMap, RegionId};
use super::EngineError;

/// The streamed datasets. `Previous` and `Current` are the read-write time
/// levels; `Velocity` is read-only. The Laplacian scratch lives only in the
/// fast tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dataset {
    Previous,
    Current,
    Velocity,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::Previous, Dataset::Current, Dataset::Velocity];
    pub const READ_WRITE: [Dataset; 2] = [Dataset::Previous, Dataset::Current];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_read_only(self) -> bool {
        self == Dataset::Velocity
    }

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Previous => "previous",
            Dataset::Current => "current",
            Dataset::Velocity => "velocity",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| EngineError::Mode(format!("unknown dataset `{s}` (expected previous, current or velocity)")))
    }
}

/// Codec assignment per dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunMode {
    /// Everything stored raw.
    Baseline,
    /// `current` at 32 bits per value.
    Rw32,
    /// `velocity` at 32 bits per value.
    Ro32,
    /// `current` and `velocity` at 24 bits per value.
    RwRo24,
    Custom { rate: Rate, datasets: Vec<Dataset> },
}

impl RunMode {
    pub fn custom(rate: u32, datasets: &[Dataset]) -> Result<Self, EngineError> {
        let rate = Rate::new(rate).map_err(|e| EngineError::Mode(e.to_string()))?;
        if datasets.is_empty() {
            return Err(EngineError::Mode("custom mode needs at least one dataset".into()));
        }
        let mut datasets = datasets.to_vec();
        datasets.sort();
        datasets.dedup();
        Ok(RunMode::Custom { rate, datasets })
    }

    /// Parses a mode name; `rate` is required by `custom` and must match the
    /// fixed rate of a named mode if given.
    pub fn parse(name: &str, rate: Option<u32>, datasets: Option<&[Dataset]>) -> Result<Self, EngineError> {
        let mode = match name {
            "baseline" => RunMode::Baseline,
            "rw32" => RunMode::Rw32,
            "ro32" => RunMode::Ro32,
            "rw-ro-24" => RunMode::RwRo24,
            "custom" => {
                let rate = rate.ok_or_else(|| EngineError::Mode("custom mode needs a rate".into()))?;
                let datasets = datasets.unwrap_or(&[Dataset::Current]);
                return RunMode::custom(rate, datasets);
            }
            other => {
                return Err(EngineError::Mode(format!(
                    "unknown mode `{other}` (expected baseline, rw32, ro32, rw-ro-24 or custom)"
                )))
            }
        };
        if let Some(r) = rate {
            let expected = mode.rate().map(|r| r.bits_per_value());
            if expected != Some(r) {
                return Err(EngineError::Mode(match expected {
                    Some(e) => format!("mode {} fixes rate {e}, got {r}", mode.name()),
                    None => format!("mode {} takes no rate, got {r}", mode.name()),
                }));
            }
        }
        if datasets.is_some() {
            return Err(EngineError::Mode(format!("mode {} has a fixed dataset set", mode.name())));
        }
        Ok(mode)
    }

    pub fn name(&self) -> String {
        match self {
            RunMode::Baseline => "baseline".into(),
            RunMode::Rw32 => "rw32".into(),
            RunMode::Ro32 => "ro32".into(),
            RunMode::RwRo24 => "rw-ro-24".into(),
            RunMode::Custom { rate, datasets } => {
                let names: Vec<_> = datasets.iter().map(|d| d.name()).collect();
                format!("custom-{}-{}", rate.bits_per_value(), names.join("+"))
            }
        }
    }

    pub fn rate(&self) -> Option<Rate> {
        let r = |bits| Some(Rate::new(bits).expect("built-in rate is valid"));
        match self {
            RunMode::Baseline => None,
            RunMode::Rw32 | RunMode::Ro32 => r(32),
            RunMode::RwRo24 => r(24),
            RunMode::Custom { rate, .. } => Some(*rate),
        }
    }

    pub fn compressed(&self) -> Vec<Dataset> {
        match self {
            RunMode::Baseline => vec![],
            RunMode::Rw32 => vec![Dataset::Current],
            RunMode::Ro32 => vec![Dataset::Velocity],
            RunMode::RwRo24 => vec![Dataset::Current, Dataset::Velocity],
            RunMode::Custom { datasets, .. } => datasets.clone(),
        }
    }

    pub fn codec_for(&self, dataset: Dataset) -> Codec {
        match self.rate() {
            Some(rate) if self.compressed().contains(&dataset) => Codec::FixedRate(rate),
            _ => Codec::Passthrough,
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Extents handed to the codec for a run of whole padded planes.
pub fn region_extents(spec: &GridSpec, planes: PlaneRange) -> [usize; 3] {
    let [px, py, _] = spec.padded();
    [px, py, planes.len()]
}

/// Encodes `planes` of `vol`; an empty range (an interior remainder when
/// `P = 2h`) gives an empty payload.
pub(crate) fn encode_region(codec: Codec, vol: &Volume, planes: PlaneRange) -> Result<EncodedPayload, EngineError> {
    let extents = region_extents(vol.spec(), planes);
    if planes.is_empty() {
        return Ok(EncodedPayload::from_parts(codec, extents, Vec::new())?);
    }
    Ok(codec::encode(codec, vol.planes(planes)?, extents)?)
}

pub(crate) fn decode_region(payload: &EncodedPayload, vol: &mut Volume, planes: PlaneRange) -> Result<(), EngineError> {
    decode_bytes(payload.codec(), payload.bytes(), vol, planes)
}

pub(crate) fn decode_bytes(codec: Codec, bytes: &[u8], vol: &mut Volume, planes: PlaneRange) -> Result<(), EngineError> {
    if planes.is_empty() {
        return Ok(());
    }
    let extents = region_extents(vol.spec(), planes);
    codec::decode_into(codec, extents, bytes, vol.planes_mut(planes)?)?;
    Ok(())
}

/// Every region of every streamed dataset as an independent payload.
#[derive(Debug, Clone)]
pub struct CompressedStore {
    map: BlockMap,
    codecs: [Codec; 3],
    /// `payloads[dataset][region]` in [`BlockMap::regions`] order.
    payloads: [Vec<EncodedPayload>; 3],
}

impl CompressedStore {
    /// Encodes full volumes of the three datasets region by region.
    pub fn from_volumes(map: &BlockMap, mode: &RunMode, volumes: [&Volume; 3]) -> Result<Self, EngineError> {
        let spec = *map.spec();
        let codecs = Dataset::ALL.map(|d| mode.codec_for(d));
        let mut payloads: [Vec<EncodedPayload>; 3] = Default::default();
        for d in Dataset::ALL {
            let vol = volumes[d.index()];
            if *vol.spec() != spec || vol.range() != spec.full_range() {
                return Err(EngineError::Field(crate::field::FieldError::ExtentMismatch));
            }
            for id in map.regions() {
                payloads[d.index()].push(encode_region(codecs[d.index()], vol, map.region(id))?);
            }
        }
        Ok(Self { map: map.clone(), codecs, payloads })
    }

    pub fn map(&self) -> &BlockMap {
        &self.map
    }

    pub fn codec(&self, d: Dataset) -> Codec {
        self.codecs[d.index()]
    }

    fn slot(&self, id: RegionId) -> usize {
        match id {
            RegionId::Remainder(i) => 2 * i,
            RegionId::Common(i) => 2 * i + 1,
        }
    }

    pub fn payload(&self, d: Dataset, id: RegionId) -> &EncodedPayload {
        &self.payloads[d.index()][self.slot(id)]
    }

    pub fn payload_bytes(&self, d: Dataset, id: RegionId) -> usize {
        self.payload(d, id).bytes().len()
    }

    /// Overwrites the stored bytes of one region in place.
    pub(crate) fn write_back(&mut self, d: Dataset, id: RegionId, bytes: &[u8]) -> Result<(), EngineError> {
        let slot = self.slot(id);
        let p = &mut self.payloads[d.index()][slot];
        if p.bytes().len() != bytes.len() {
            return Err(EngineError::Codec(codec::CodecError::PayloadLength {
                expected: p.bytes().len(),
                actual: bytes.len(),
            }));
        }
        p.bytes_mut().copy_from_slice(bytes);
        Ok(())
    }

    /// Total stored bytes of one dataset.
    pub fn dataset_bytes(&self, d: Dataset) -> usize {
        self.payloads[d.index()].iter().map(|p| p.bytes().len()).sum()
    }

    /// Decodes one dataset back into a full volume.
    pub fn assemble(&self, d: Dataset) -> Result<Volume, EngineError> {
        let spec = *self.map.spec();
        let mut vol = Volume::zeros(spec)?;
        for id in self.map.regions() {
            decode_region(self.payload(d, id), &mut vol, self.map.region(id))?;
        }
        if !d.is_read_only() {
            vol.apply_dirichlet();
        }
        Ok(vol)
    }
}
