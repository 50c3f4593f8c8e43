//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three operations: code a small field at a chosen rate, run a small
//! out-of-core simulation in a chosen mode and return a slice of it, and
//! lay out one modeled pipeline sweep as a timeline. The plain-Rust
//! functions carry the logic so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use wasm_bindgen::prelude::*;

use stencilstream::analysis::{breakdown_from_events, relative_error, sample_points};
use stencilstream::codec::{decode, encode, Codec};
use stencilstream::engine::{run, run_in_core, CostModel, Execution, Problem, RunConfig, RunMode, Timing};
use stencilstream::field::{make_volume, GridSpec, InitKind, Volume};
use stencilstream::kernel::Medium;

/// Edge length of the codec explorer's cube.
pub const CODEC_N: usize = 24;
/// Grid of the wave demo: `WAVE_NX x WAVE_NX x WAVE_NZ`.
pub const WAVE_NX: usize = 32;
pub const WAVE_NZ: usize = 48;
const DIVISIONS: usize = 2;
const TEMPORAL_STEPS: usize = 3;

#[wasm_bindgen]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecStats {
    pub rate: u32,
    pub raw_bytes: usize,
    pub payload_bytes: usize,
    pub max_abs_error: f64,
    pub rms_error: f64,
}

#[wasm_bindgen]
impl CodecStats {
    pub fn ratio(&self) -> f64 {
        self.raw_bytes as f64 / self.payload_bytes as f64
    }
}

/// Interior values of `v` in x-fastest order.
fn interior(v: &Volume) -> Vec<f64> {
    let s = *v.spec();
    let mut out = Vec::with_capacity(s.nx * s.ny * s.nz);
    for z in 0..s.nz as isize {
        for y in 0..s.ny {
            for x in 0..s.nx {
                out.push(v.get(x, y, z));
            }
        }
    }
    out
}

/// Codes a smooth field (`field` 0) or a Gaussian pulse (`field` 1) at `rate`
/// bits per value.
pub fn codec_stats(rate: u32, field: u32) -> Result<CodecStats, String> {
    let spec = GridSpec::cube(CODEC_N, 4).map_err(|e| e.to_string())?;
    let init = match field {
        0 => InitKind::SmoothSinusoid { frequencies: [1.0, 2.0, 3.0] },
        1 => InitKind::centered_pulse(&spec, 3.0, 1.0),
        other => return Err(format!("unknown field {other}")),
    };
    let values = interior(&make_volume(spec, init).map_err(|e| e.to_string())?);
    let extents = [CODEC_N; 3];
    let codec = Codec::fixed_rate(rate).map_err(|e| e.to_string())?;
    let payload = encode(codec, &values, extents).map_err(|e| e.to_string())?;
    let out = decode(&payload).map_err(|e| e.to_string())?;
    let (mut max, mut sq) = (0.0f64, 0.0);
    for (a, b) in values.iter().zip(&out) {
        max = max.max((a - b).abs());
        sq += (a - b) * (a - b);
    }
    Ok(CodecStats {
        rate,
        raw_bytes: values.len() * 8,
        payload_bytes: payload.bytes().len(),
        max_abs_error: max,
        rms_error: (sq / values.len() as f64).sqrt(),
    })
}

fn demo_config(mode: &str, steps: usize, timing: Timing) -> Result<RunConfig, String> {
    let spec = GridSpec::new(WAVE_NX, WAVE_NX, WAVE_NZ, 4).map_err(|e| e.to_string())?;
    let mode = RunMode::parse(mode, None, None).map_err(|e| e.to_string())?;
    Ok(RunConfig {
        spec,
        divisions: DIVISIONS,
        temporal_steps: TEMPORAL_STEPS,
        total_steps: steps,
        mode,
        problem: Problem::with_courant(
            InitKind::GaussianPulse { center: [16.0, 16.0, 14.0], width: 3.0, amplitude: 1.0 },
            Medium::TwoLayer { upper: 1500.0, lower: 2500.0, interface: 25, ripple: 0.05 },
            10.0,
            0.4,
        ),
        capacity: None,
        timing,
        execution: Execution::Pipelined,
        poison: false,
    })
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSlice {
    pub width: usize,
    pub height: usize,
    pub avg_rel_error: f64,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl WaveSlice {
    /// Row-major `height x width` samples of the x-z plane through the
    /// pulse centre.
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// Runs `steps` steps in `mode` and returns the central x-z slice with its
/// sampled error against the in-core solver.
pub fn wave_slice(mode: &str, steps: usize) -> Result<WaveSlice, String> {
    let steps = steps.max(TEMPORAL_STEPS) / TEMPORAL_STEPS * TEMPORAL_STEPS;
    let cfg = demo_config(mode, steps, Timing::Modeled(CostModel::default()))?;
    let rep = run(&cfg).map_err(|e| e.to_string())?;
    let reference = run_in_core(cfg.spec, &cfg.problem, steps, 0, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let samples = sample_points(&cfg.spec, 64, 1).map_err(|e| e.to_string())?;
    let err = relative_error(&reference.u_curr, &rep.current, &samples, &cfg.mode.name(), steps)
        .map_err(|e| e.to_string())?;
    let y = WAVE_NX / 2;
    let mut values = Vec::with_capacity(WAVE_NX * WAVE_NZ);
    for z in 0..WAVE_NZ as isize {
        for x in 0..WAVE_NX {
            values.push(rep.current.get(x, y, z));
        }
    }
    Ok(WaveSlice { width: WAVE_NX, height: WAVE_NZ, avg_rel_error: err.avg_rel_error, values })
}

#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub makespan_ns: f64,
    pub serialized_ns: f64,
    bounding: String,
    events: Vec<f64>,
}

#[wasm_bindgen]
impl Timeline {
    /// Flattened `[block, stage, lane, start_ns, end_ns]` per event; stage
    /// indices run upload, decompress, compute, compress, download.
    pub fn events(&self) -> Vec<f64> {
        self.events.clone()
    }

    pub fn bounding(&self) -> String {
        self.bounding.clone()
    }
}

/// One modeled sweep of the demo grid at `bandwidth_gbs` GB/s transfers.
pub fn timeline(mode: &str, bandwidth_gbs: f64) -> Result<Timeline, String> {
    if !(bandwidth_gbs > 0.0 && bandwidth_gbs.is_finite()) {
        return Err(format!("bandwidth must be positive, got {bandwidth_gbs}"));
    }
    let model = CostModel { transfer_bytes_per_s: bandwidth_gbs * 1e9, ..CostModel::default() };
    let cfg = demo_config(mode, TEMPORAL_STEPS, Timing::Modeled(model))?;
    let rep = run(&cfg).map_err(|e| e.to_string())?;
    let b = breakdown_from_events(&rep.events).map_err(|e| e.to_string())?;
    let events = rep
        .events
        .iter()
        .flat_map(|e| [e.block as f64, e.stage.index() as f64, e.lane as f64, e.start_ns as f64, e.end_ns as f64])
        .collect();
    Ok(Timeline {
        makespan_ns: rep.makespan_ns() as f64,
        serialized_ns: b.total_seconds() * 1e9,
        bounding: b.bounding().name().to_string(),
        events,
    })
}

#[wasm_bindgen(js_name = exploreCodec)]
pub fn explore_codec(rate: u32, field: u32) -> Result<CodecStats, JsError> {
    codec_stats(rate, field).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = waveSlice)]
pub fn wave_slice_js(mode: &str, steps: usize) -> Result<WaveSlice, JsError> {
    wave_slice(mode, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = pipelineTimeline)]
pub fn timeline_js(mode: &str, bandwidth_gbs: f64) -> Result<Timeline, JsError> {
    timeline(mode, bandwidth_gbs).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codec_error_falls_with_rate() {
        let lo = codec_stats(8, 0).unwrap();
        let hi = codec_stats(32, 0).unwrap();
        assert_eq!(lo.payload_bytes * 4, hi.payload_bytes);
        assert_eq!(hi.ratio(), 2.0);
        assert!(hi.max_abs_error < lo.max_abs_error);
        assert!(codec_stats(4, 0).is_err());
        assert!(codec_stats(16, 7).is_err());
    }

    #[test]
    fn baseline_slice_is_exact() {
        let s = wave_slice("baseline", 12).unwrap();
        assert_eq!(s.values().len(), s.width * s.height);
        assert_eq!(s.avg_rel_error, 0.0);
        assert!(s.values().iter().any(|&v| v != 0.0));
        assert!(wave_slice("rw32", 12).unwrap().avg_rel_error > 0.0);
        assert!(wave_slice("fast", 12).is_err());
    }

    #[test]
    fn timeline_overlaps() {
        let t = timeline("rw32", 12.0).unwrap();
        assert_eq!(t.events().len(), DIVISIONS * 5 * 5);
        assert!(t.makespan_ns < t.serialized_ns);
        assert_eq!(timeline("baseline", 0.5).unwrap().bounding(), "upload");
    }
}
