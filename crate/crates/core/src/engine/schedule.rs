//! Per-block stage DAG, three-lane discrete-event executor and event log.
//!
//! Stage actions run one at a time on the calling thread in a topological
//! order chosen by the scheduler; each is stamped on a virtual timeline where
//! it starts once its lane is free and its dependencies have finished. The
//! serial executor runs the canonical block-major order back to back and is
//! the correctness reference.

use std::fmt;
use std::io::{self, Write};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Upload,
    Decompress,
    Compute,
    Compress,
    Download,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Upload, Stage::Decompress, Stage::Compute, Stage::Compress, Stage::Download];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn lane(self) -> Lane {
        match self {
            Stage::Upload => Lane::Upload,
            Stage::Decompress | Stage::Compute | Stage::Compress => Lane::Compute,
            Stage::Download => Lane::Download,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Upload => "upload",
            Stage::Decompress => "decompress",
            Stage::Compute => "compute",
            Stage::Compress => "compress",
            Stage::Download => "download",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lane {
    Upload,
    Compute,
    Download,
}

impl Lane {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Task {
    pub block: usize,
    pub stage: Stage,
}

impl Task {
    pub fn new(block: usize, stage: Stage) -> Self {
        Self { block, stage }
    }

    fn id(self) -> usize {
        self.block * Stage::ALL.len() + self.stage.index()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.stage, self.block)
    }
}

/// One executed stage on the virtual timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageEvent {
    pub sweep: usize,
    pub block: usize,
    pub stage: Stage,
    pub lane: usize,
    pub start_ns: u64,
    pub end_ns: u64,
    pub bytes: u64,
}

impl StageEvent {
    pub fn duration_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

/// Dependency graph of one sweep over `blocks` blocks.
#[derive(Debug, Clone)]
pub struct TaskGraph {
    blocks: usize,
    deps: Vec<Vec<Task>>,
}

impl TaskGraph {
    /// The sweep DAG. Besides each block's stage chain:
    /// - `Compress[i-1] -> Decompress[i]`: block `i` reuses the working slabs
    ///   and reads the input-time copy of `C_{i-1}`;
    /// - `Compress[i-1] -> Compress[i]`: `C_{i-1}` is finished from block
    ///   `i-1`'s output half;
    /// - `Decompress[i-2] -> Upload[i]` and `Download[i-2] -> Compress[i]`:
    ///   staging slots are double buffered.
    pub fn sweep(blocks: usize) -> Self {
        let mut g = Self { blocks, deps: vec![Vec::new(); blocks * Stage::ALL.len()] };
        for i in 0..blocks {
            for w in Stage::ALL.windows(2) {
                g.add(Task::new(i, w[0]), Task::new(i, w[1]));
            }
            if i >= 1 {
                g.add(Task::new(i - 1, Stage::Compress), Task::new(i, Stage::Decompress));
                g.add(Task::new(i - 1, Stage::Compress), Task::new(i, Stage::Compress));
            }
            if i >= 2 {
                g.add(Task::new(i - 2, Stage::Decompress), Task::new(i, Stage::Upload));
                g.add(Task::new(i - 2, Stage::Download), Task::new(i, Stage::Compress));
            }
        }
        g
    }

    pub fn add(&mut self, before: Task, after: Task) {
        self.deps[after.id()].push(before);
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn tasks(&self) -> Vec<Task> {
        (0..self.blocks).flat_map(|b| Stage::ALL.map(|s| Task::new(b, s))).collect()
    }

    pub fn deps(&self, t: Task) -> &[Task] {
        &self.deps[t.id()]
    }

    /// Block-major order, which is a topological order of [`TaskGraph::sweep`].
    pub fn canonical_order(&self) -> Vec<Task> {
        self.tasks()
    }
}

/// Work counters an action reports, used by the modeled clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Work {
    /// Bytes moved or produced.
    pub bytes: u64,
    /// Values passed through the raw codec.
    pub raw_values: u64,
    /// Values passed through the fixed-rate codec.
    pub coded_values: u64,
    /// Stencil point updates.
    pub point_updates: u64,
}

/// Deterministic per-unit costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub ns_per_point_update: f64,
    pub ns_per_raw_value: f64,
    pub ns_per_coded_value: f64,
    pub transfer_bytes_per_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { ns_per_point_update: 1.0, ns_per_raw_value: 0.25, ns_per_coded_value: 6.0, transfer_bytes_per_s: 12e9 }
    }
}

/// How stage durations are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timing {
    /// Wall-clock time of each action; transfers also pay
    /// `bytes / bandwidth` when a bandwidth is set.
    Measured { bandwidth: Option<f64> },
    /// Durations computed from [`Work`] counters; reproducible.
    Modeled(CostModel),
    /// Fixed duration per stage, indexed by [`Stage::index`].
    Synthetic([u64; 5]),
}

impl Timing {
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Timing::Measured { .. })
    }

    fn duration(&self, stage: Stage, work: &Work, elapsed_ns: u64) -> u64 {
        let transfer = matches!(stage, Stage::Upload | Stage::Download);
        let per_byte = |bw: f64| (work.bytes as f64 / bw * 1e9).round() as u64;
        match *self {
            Timing::Measured { bandwidth } => elapsed_ns + if transfer { bandwidth.map_or(0, per_byte) } else { 0 },
            Timing::Modeled(m) => {
                if transfer {
                    per_byte(m.transfer_bytes_per_s)
                } else {
                    let ns = work.point_updates as f64 * m.ns_per_point_update
                        + work.raw_values as f64 * m.ns_per_raw_value
                        + work.coded_values as f64 * m.ns_per_coded_value;
                    ns.round() as u64
                }
            }
            Timing::Synthetic(d) => d[stage.index()],
        }
    }
}

/// Order in which tasks are taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// Canonical order, one task at a time on a single timeline.
    Serial,
    /// List scheduling on the three lanes: the ready task that can start
    /// earliest goes next, ties broken by position in `submission`.
    Pipelined { submission: Vec<Task> },
}

impl Policy {
    pub fn pipelined(graph: &TaskGraph) -> Self {
        Policy::Pipelined { submission: graph.canonical_order() }
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn stopwatch<T>(measure: bool, f: impl FnOnce() -> T) -> (T, u64) {
    if !measure {
        return (f(), 0);
    }
    let t = std::time::Instant::now();
    let out = f();
    (out, t.elapsed().as_nanos() as u64)
}

#[cfg(target_arch = "wasm32")]
fn stopwatch<T>(_measure: bool, f: impl FnOnce() -> T) -> (T, u64) {
    (f(), 0)
}

/// Executes every task of `graph` once through `action`, returning events
/// stamped from `t0`. Errors from `action` abort the run.
pub fn pipeline_execute<F>(
    graph: &TaskGraph,
    policy: &Policy,
    timing: &Timing,
    sweep: usize,
    t0: u64,
    mut action: F,
) -> Result<Vec<StageEvent>, EngineError>
where
    F: FnMut(Task) -> Result<Work, EngineError>,
{
    let n = graph.tasks().len();
    let mut end: Vec<Option<u64>> = vec![None; n];
    let mut events = Vec::with_capacity(n);
    let measure = matches!(timing, Timing::Measured { .. });
    let mut run = |task: Task, start: u64, end: &mut Vec<Option<u64>>| -> Result<u64, EngineError> {
        let (work, elapsed) = stopwatch(measure, || action(task));
        let work = work?;
        let stop = start + timing.duration(task.stage, &work, elapsed);
        end[task.id()] = Some(stop);
        events.push(StageEvent {
            sweep,
            block: task.block,
            stage: task.stage,
            lane: task.stage.lane().index(),
            start_ns: start,
            end_ns: stop,
            bytes: work.bytes,
        });
        Ok(stop)
    };

    match policy {
        Policy::Serial => {
            let mut clock = t0;
            for task in graph.canonical_order() {
                if let Some(d) = graph.deps(task).iter().find(|d| end[d.id()].is_none()) {
                    return Err(EngineError::Schedule(format!("{task} scheduled before its dependency {d}")));
                }
                clock = run(task, clock, &mut end)?;
            }
        }
        Policy::Pipelined { submission } => {
            let mut pending: Vec<Task> = submission.clone();
            let mut sorted = pending.clone();
            sorted.sort();
            if sorted != graph.tasks() {
                return Err(EngineError::Schedule("submission is not a permutation of the sweep tasks".into()));
            }
            let mut lane_free = [t0; Lane::COUNT];
            while !pending.is_empty() {
                let mut best: Option<(u64, usize)> = None;
                for (pos, &task) in pending.iter().enumerate() {
                    let deps = graph.deps(task);
                    if deps.iter().any(|d| end[d.id()].is_none()) {
                        continue;
                    }
                    let ready = deps.iter().map(|d| end[d.id()].unwrap()).max().unwrap_or(t0);
                    let start = ready.max(lane_free[task.stage.lane().index()]);
                    if best.map_or(true, |(s, _)| start < s) {
                        best = Some((start, pos));
                    }
                }
                let Some((start, pos)) = best else {
                    return Err(EngineError::Schedule("task graph has a cycle".into()));
                };
                let task = pending.remove(pos);
                lane_free[task.stage.lane().index()] = run(task, start, &mut end)?;
            }
        }
    }
    Ok(events)
}

/// Latest end time in `events`, or `t0` if empty.
pub fn makespan_end(events: &[StageEvent], t0: u64) -> u64 {
    events.iter().map(|e| e.end_ns).max().unwrap_or(t0)
}

/// Checks lane exclusivity, per-block stage order and, when given, every DAG
/// edge of each sweep.
pub fn audit_events(events: &[StageEvent], graph: Option<&TaskGraph>) -> Result<(), EngineError> {
    let fail = |msg: String| Err(EngineError::Schedule(format!("event audit: {msg}")));
    let mut by_lane: Vec<Vec<&StageEvent>> = vec![Vec::new(); Lane::COUNT];
    for e in events {
        if e.end_ns < e.start_ns {
            return fail(format!("{} of block {} ends before it starts", e.stage, e.block));
        }
        if e.lane != e.stage.lane().index() {
            return fail(format!("{} of block {} on lane {}", e.stage, e.block, e.lane));
        }
        by_lane[e.lane].push(e);
    }
    for (lane, evs) in by_lane.iter_mut().enumerate() {
        evs.sort_by_key(|e| (e.start_ns, e.end_ns));
        for w in evs.windows(2) {
            if w[1].start_ns < w[0].end_ns {
                return fail(format!(
                    "lane {lane} overlap: {} [{}] and {} [{}]",
                    w[0].stage, w[0].block, w[1].stage, w[1].block
                ));
            }
        }
    }
    let sweeps = events.iter().map(|e| e.sweep + 1).max().unwrap_or(0);
    let blocks = events.iter().map(|e| e.block + 1).max().unwrap_or(0);
    let mut table: Vec<Option<&StageEvent>> = vec![None; sweeps * blocks * Stage::ALL.len()];
    let key = |s: usize, b: usize, st: Stage| (s * blocks + b) * Stage::ALL.len() + st.index();
    for e in events {
        let slot = &mut table[key(e.sweep, e.block, e.stage)];
        if slot.is_some() {
            return fail(format!("{} of block {} in sweep {} recorded twice", e.stage, e.block, e.sweep));
        }
        *slot = Some(e);
    }
    for s in 0..sweeps {
        for b in 0..blocks {
            let starts: Vec<_> = Stage::ALL.iter().filter_map(|&st| table[key(s, b, st)].map(|e| e.start_ns)).collect();
            if starts.windows(2).any(|w| w[1] < w[0]) {
                return fail(format!("stages of block {b} in sweep {s} start out of order"));
            }
            let Some(g) = graph else { continue };
            for st in Stage::ALL {
                let Some(e) = table[key(s, b, st)] else { continue };
                for d in g.deps(Task::new(b, st)) {
                    match table[key(s, d.block, d.stage)] {
                        Some(before) if before.end_ns <= e.start_ns => {}
                        Some(_) => return fail(format!("{} starts before {d} ends (sweep {s})", Task::new(b, st))),
                        None => return fail(format!("{d} missing (sweep {s})")),
                    }
                }
            }
        }
    }
    Ok(())
}

pub const EVENT_CSV_HEADER: &str = "block,stage,lane,start_ns,end_ns,bytes";

pub fn write_events_csv<W: Write>(mut out: W, events: &[StageEvent]) -> io::Result<()> {
    writeln!(out, "{EVENT_CSV_HEADER}")?;
    for e in events {
        writeln!(out, "{},{},{},{},{},{}", e.block, e.stage, e.lane, e.start_ns, e.end_ns, e.bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synthetic(graph: &TaskGraph, policy: &Policy, d: [u64; 5]) -> Vec<StageEvent> {
        pipeline_execute(graph, policy, &Timing::Synthetic(d), 0, 0, |_| Ok(Work::default())).unwrap()
    }

    #[test]
    fn single_block_is_a_serial_chain() {
        let g = TaskGraph::sweep(1);
        let d = [3, 5, 7, 11, 13];
        for policy in [Policy::Serial, Policy::pipelined(&g)] {
            let ev = synthetic(&g, &policy, d);
            assert_eq!(makespan_end(&ev, 0), d.iter().sum::<u64>());
            audit_events(&ev, Some(&g)).unwrap();
        }
    }

    #[test]
    fn four_blocks_overlap() {
        let g = TaskGraph::sweep(4);
        let d = 30;
        // equal time per lane: the compute lane's three stages share d
        let ev = synthetic(&g, &Policy::pipelined(&g), [d, d / 3, d / 3, d / 3, d]);
        audit_events(&ev, Some(&g)).unwrap();
        assert!(makespan_end(&ev, 0) < 4 * 3 * d, "{}", makespan_end(&ev, 0));
        // equal time per stage
        let ev = synthetic(&g, &Policy::pipelined(&g), [d; 5]);
        audit_events(&ev, Some(&g)).unwrap();
        let serial = makespan_end(&synthetic(&g, &Policy::Serial, [d; 5]), 0);
        assert_eq!(serial, 4 * 5 * d);
        assert!(makespan_end(&ev, 0) < serial);
    }

    #[test]
    fn execution_order_is_topological_for_any_submission() {
        let g = TaskGraph::sweep(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut sub = g.canonical_order();
            sub.shuffle(&mut rng);
            let mut seen = Vec::new();
            let ev = pipeline_execute(&g, &Policy::Pipelined { submission: sub }, &Timing::Synthetic([4, 2, 9, 3, 5]), 0, 0, |t| {
                for d in g.deps(t) {
                    assert!(seen.contains(d), "{t} before {d}");
                }
                seen.push(t);
                Ok(Work::default())
            })
            .unwrap();
            audit_events(&ev, Some(&g)).unwrap();
        }
    }

    #[test]
    fn cycle_is_detected() {
        let mut g = TaskGraph::sweep(2);
        g.add(Task::new(1, Stage::Download), Task::new(0, Stage::Upload));
        let r = pipeline_execute(&g, &Policy::pipelined(&g), &Timing::Synthetic([1; 5]), 0, 0, |_| Ok(Work::default()));
        assert!(matches!(r, Err(EngineError::Schedule(_))));
    }

    #[test]
    fn auditor_catches_overlap_and_order() {
        let ev = |block, stage: Stage, s, e| StageEvent {
            sweep: 0,
            block,
            stage,
            lane: stage.lane().index(),
            start_ns: s,
            end_ns: e,
            bytes: 0,
        };
        assert!(audit_events(&[ev(0, Stage::Upload, 0, 10), ev(1, Stage::Upload, 5, 12)], None).is_err());
        assert!(audit_events(&[ev(0, Stage::Upload, 5, 10), ev(0, Stage::Decompress, 0, 4)], None).is_err());
        assert!(audit_events(&[ev(0, Stage::Upload, 0, 10), ev(0, Stage::Decompress, 10, 12)], None).is_ok());
        let g = TaskGraph::sweep(1);
        assert!(audit_events(&[ev(0, Stage::Upload, 0, 10), ev(0, Stage::Decompress, 9, 12)], Some(&g)).is_err());
    }

    #[test]
    fn modeled_durations() {
        let m = CostModel { transfer_bytes_per_s: 1e9, ..CostModel::default() };
        let t = Timing::Modeled(m);
        let w = Work { bytes: 2000, point_updates: 10, ..Work::default() };
        assert_eq!(t.duration(Stage::Upload, &w, 999), 2000);
        assert_eq!(t.duration(Stage::Compute, &w, 999), 10);
        let meas = Timing::Measured { bandwidth: Some(1e9) };
        assert_eq!(meas.duration(Stage::Download, &w, 7), 2007);
        assert_eq!(meas.duration(Stage::Compress, &w, 7), 7);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        let e = StageEvent { sweep: 0, block: 2, stage: Stage::Compress, lane: 1, start_ns: 5, end_ns: 9, bytes: 64 };
        write_events_csv(&mut buf, &[e]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "block,stage,lane,start_ns,end_ns,bytes\n2,compress,1,5,9,64\n");
    }
}
