//! Precision-loss sampling, error metrics and timing breakdowns.
//!
//! Sample coordinates come from ChaCha8 (the `rand_chacha` crate) seeded with
//! the run seed, using the plane index as the stream id; each plane draws
//! `n` distinct interior `(x, y)` positions with `rand::seq::index::sample`.
//! Both crates document value-stable output, so samples are identical across
//! platforms.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{audit_events, EngineError, Lane, Stage, StageEvent};
use crate::field::{GridSpec, Volume};

/// References with smaller magnitude are skipped by [`relative_error`].
pub const REL_ERROR_GUARD: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("cannot draw {requested} points from a {available}-point plane")]
    Oversubscribed { requested: usize, available: usize },
    #[error("volumes do not share a grid")]
    SpecMismatch,
    #[error("sample vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Audit(#[from] EngineError),
}

/// Interior points drawn per plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub points_per_plane: usize,
    pub seed: u64,
    pub coords: Vec<(usize, usize, isize)>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Values of `v` at every sample point; planes must lie in `v`'s range.
    pub fn values(&self, v: &Volume) -> Vec<f64> {
        self.coords.iter().map(|&(x, y, z)| v.get(x, y, z)).collect()
    }
}

pub fn sample_points(spec: &GridSpec, n_per_plane: usize, seed: u64) -> Result<SampleSet, AnalysisError> {
    let available = spec.nx * spec.ny;
    if n_per_plane > available {
        return Err(AnalysisError::Oversubscribed { requested: n_per_plane, available });
    }
    let mut coords = Vec::with_capacity(n_per_plane * spec.nz);
    for z in 0..spec.nz {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(z as u64);
        for idx in rand::seq::index::sample(&mut rng, available, n_per_plane) {
            coords.push((idx % spec.nx, idx / spec.nx, z as isize));
        }
    }
    Ok(SampleSet { points_per_plane: n_per_plane, seed, coords })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub mode: String,
    pub total_steps: usize,
    /// Mean of `|a - b| / |b|` over samples with `|b| >= 1e-30`.
    pub avg_rel_error: f64,
    pub samples: usize,
    pub skipped: usize,
}

impl ErrorReport {
    /// More than 1% of references were too small to divide by.
    pub fn flagged(&self) -> bool {
        self.skipped * 100 >= self.samples.max(1)
    }
}

/// Reference-denominated mean relative error of two sample vectors.
pub fn relative_error_values(reference: &[f64], candidate: &[f64]) -> Result<(f64, usize), AnalysisError> {
    if reference.len() != candidate.len() {
        return Err(AnalysisError::LengthMismatch(reference.len(), candidate.len()));
    }
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for (&b, &a) in reference.iter().zip(candidate) {
        if b.abs() < REL_ERROR_GUARD {
            skipped += 1;
            continue;
        }
        sum += (a - b).abs() / b.abs();
        used += 1;
    }
    Ok((if used == 0 { 0.0 } else { sum / used as f64 }, skipped))
}

pub fn relative_error(
    reference: &Volume,
    candidate: &Volume,
    samples: &SampleSet,
    mode: &str,
    total_steps: usize,
) -> Result<ErrorReport, AnalysisError> {
    if reference.spec() != candidate.spec() {
        return Err(AnalysisError::SpecMismatch);
    }
    let (avg_rel_error, skipped) = relative_error_values(&samples.values(reference), &samples.values(candidate))?;
    Ok(ErrorReport { mode: mode.to_string(), total_steps, avg_rel_error, samples: samples.len(), skipped })
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// input is constant or shorter than two.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mean = (xs.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Time per stage category and overall wall time, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    /// Indexed by [`Stage::index`].
    pub seconds: [f64; 5],
    pub bytes: [u64; 5],
    pub wall_seconds: f64,
    /// Busy time per lane, indexed by [`Lane::index`].
    pub lane_busy_seconds: [f64; 3],
}

impl Breakdown {
    pub fn category(&self, stage: Stage) -> f64 {
        self.seconds[stage.index()]
    }

    /// The category with the largest total, which bounds wall time under
    /// perfect overlap.
    pub fn bounding(&self) -> Stage {
        let mut best = Stage::Upload;
        for s in Stage::ALL {
            if self.seconds[s.index()] > self.seconds[best.index()] {
                best = s;
            }
        }
        best
    }

    pub fn total_seconds(&self) -> f64 {
        self.seconds.iter().sum()
    }

    /// Wall time during which `lane` had no stage running.
    pub fn lane_idle_seconds(&self, lane: Lane) -> f64 {
        (self.wall_seconds - self.lane_busy_seconds[lane.index()]).max(0.0)
    }
}

pub fn breakdown_from_events(events: &[StageEvent]) -> Result<Breakdown, AnalysisError> {
    audit_events(events, None)?;
    let mut ns = [0u64; 5];
    let mut bytes = [0u64; 5];
    let mut lane_ns = [0u64; 3];
    for e in events {
        ns[e.stage.index()] += e.duration_ns();
        bytes[e.stage.index()] += e.bytes;
        lane_ns[e.lane] += e.duration_ns();
    }
    let start = events.iter().map(|e| e.start_ns).min().unwrap_or(0);
    let end = events.iter().map(|e| e.end_ns).max().unwrap_or(0);
    Ok(Breakdown {
        seconds: ns.map(|n| n as f64 * 1e-9),
        bytes,
        wall_seconds: (end - start) as f64 * 1e-9,
        lane_busy_seconds: lane_ns.map(|n| n as f64 * 1e-9),
    })
}

pub const ERROR_CSV_HEADER: &str = "mode,total_steps,avg_rel_error,skipped";
pub const BREAKDOWN_CSV_HEADER: &str = "mode,category,seconds";

pub fn write_errors_csv<W: Write>(mut out: W, reports: &[ErrorReport]) -> io::Result<()> {
    writeln!(out, "{ERROR_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{},{},{:e},{}", r.mode, r.total_steps, r.avg_rel_error, r.skipped)?;
    }
    Ok(())
}

/// One row per category plus a `wall` row per mode.
pub fn write_breakdown_csv<W: Write>(mut out: W, rows: &[(String, Breakdown)]) -> io::Result<()> {
    writeln!(out, "{BREAKDOWN_CSV_HEADER}")?;
    for (mode, b) in rows {
        for s in Stage::ALL {
            writeln!(out, "{mode},{},{:.9}", s.name(), b.category(s))?;
        }
        writeln!(out, "{mode},wall,{:.9}", b.wall_seconds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_volume, InitKind};

    #[test]
    fn sample_counts_and_determinism() {
        let big = GridSpec::new(8, 16, 1152, 4).unwrap();
        assert_eq!(sample_points(&big, 100, 1).unwrap().len(), 115_200);
        let desk = GridSpec::cube(144, 4).unwrap();
        let a = sample_points(&desk, 100, 42).unwrap();
        assert_eq!(a.len(), 14_400);
        assert_eq!(a, sample_points(&desk, 100, 42).unwrap());
        assert_ne!(a.coords, sample_points(&desk, 100, 43).unwrap().coords);
        assert!(matches!(sample_points(&GridSpec::cube(8, 4).unwrap(), 65, 0), Err(AnalysisError::Oversubscribed { .. })));
    }

    #[test]
    fn samples_are_distinct_within_a_plane() {
        let spec = GridSpec::cube(12, 4).unwrap();
        let s = sample_points(&spec, 144, 9).unwrap();
        for z in 0..12 {
            let mut pts: Vec<_> = s.coords.iter().filter(|c| c.2 == z).map(|c| (c.0, c.1)).collect();
            pts.sort();
            pts.dedup();
            assert_eq!(pts.len(), 144);
        }
    }

    #[test]
    fn relative_error_examples() {
        let spec = GridSpec::cube(16, 4).unwrap();
        let r = make_volume(spec, InitKind::SmoothSinusoid { frequencies: [1.0, 1.0, 1.0] }).unwrap();
        let s = sample_points(&spec, 20, 5).unwrap();
        let same = relative_error(&r, &r, &s, "baseline", 48).unwrap();
        assert_eq!(same.avg_rel_error, 0.0);
        let mut scaled = r.clone();
        scaled.values_mut().iter_mut().for_each(|v| *v *= 1.0 + 1e-6);
        let e = relative_error(&r, &scaled, &s, "x", 48).unwrap();
        assert!((e.avg_rel_error - 1e-6).abs() < 1e-12, "{}", e.avg_rel_error);
        let other = Volume::zeros(GridSpec::cube(8, 4).unwrap()).unwrap();
        assert_eq!(relative_error(&r, &other, &s, "x", 0), Err(AnalysisError::SpecMismatch));
    }

    #[test]
    fn guard_skips_tiny_references() {
        let (avg, skipped) = relative_error_values(&[1.0, 0.0, 1e-31, 2.0], &[1.5, 5.0, 1.0, 2.0]).unwrap();
        assert_eq!(skipped, 2);
        assert!((avg - 0.25).abs() < 1e-15);
        let r = ErrorReport { mode: "m".into(), total_steps: 0, avg_rel_error: 0.0, samples: 200, skipped: 2 };
        assert!(r.flagged());
        assert!(!ErrorReport { skipped: 1, ..r }.flagged());
    }

    #[test]
    fn spearman_oracle() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        // d^2 sum = 2 for n=4 with one swap: 1 - 6*2/(4*15) = 0.8
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap() > 0.0);
    }

    fn ev(block: usize, stage: Stage, s: u64, e: u64) -> StageEvent {
        StageEvent { sweep: 0, block, stage, lane: stage.lane().index(), start_ns: s, end_ns: e, bytes: 8 }
    }

    #[test]
    fn serial_log_wall_equals_sum() {
        let mut t = 0;
        let log: Vec<_> = Stage::ALL
            .iter()
            .map(|&st| {
                t += 10;
                ev(0, st, t - 10, t)
            })
            .collect();
        let b = breakdown_from_events(&log).unwrap();
        assert!((b.wall_seconds - b.total_seconds()).abs() < 1e-15);
    }

    #[test]
    fn overlapped_log_wall_equals_max() {
        // three lanes fully busy in parallel: wall equals the busiest category
        let log = vec![
            ev(0, Stage::Upload, 0, 100),
            ev(1, Stage::Compute, 0, 60),
            ev(2, Stage::Download, 0, 100),
        ];
        let b = breakdown_from_events(&log).unwrap();
        assert!((b.wall_seconds - 100e-9).abs() < 1e-18);
        assert!(b.wall_seconds <= b.total_seconds());
        assert!((b.lane_idle_seconds(Lane::Compute) - 40e-9).abs() < 1e-18);
        assert_eq!(b.lane_idle_seconds(Lane::Upload), 0.0);
        let with_compute_bound = vec![ev(0, Stage::Upload, 0, 10), ev(0, Stage::Compute, 10, 90), ev(0, Stage::Download, 90, 95)];
        assert_eq!(breakdown_from_events(&with_compute_bound).unwrap().bounding(), Stage::Compute);
        let bad = vec![ev(0, Stage::Upload, 0, 10), ev(1, Stage::Upload, 5, 15)];
        assert!(matches!(breakdown_from_events(&bad), Err(AnalysisError::Audit(_))));
    }

    #[test]
    fn csv_layouts() {
        let mut buf = Vec::new();
        let r = ErrorReport { mode: "rw32".into(), total_steps: 48, avg_rel_error: 1.5e-9, samples: 10, skipped: 0 };
        write_errors_csv(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "mode,total_steps,avg_rel_error,skipped\nrw32,48,1.5e-9,0\n");
        let mut buf = Vec::new();
        let b = Breakdown {
            seconds: [1.0, 0.0, 2.0, 0.0, 0.5],
            bytes: [0; 5],
            wall_seconds: 3.0,
            lane_busy_seconds: [1.0, 2.0, 0.5],
        };
        write_breakdown_csv(&mut buf, &[("baseline".into(), b)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.contains("baseline,upload,1.000000000\n"));
        assert!(text.ends_with("baseline,wall,3.000000000\n"));
    }
}
