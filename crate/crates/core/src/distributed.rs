//! In-process simulation of the public-coin distributed protocol: machines
//! sketch their share of the points, send one framed message each, and a
//! coordinator merges and answers.

use std::sync::mpsc;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::median::{uniform_weights, MedianCostState, MedianSketchConfig};
use crate::stream::{reduce_block, CoresetEntry, KCostResult, Reducer, StreamConfig, StreamState};
use crate::wire::{self, Reader, Writer};

const TAG_MACHINE: [u8; 4] = *b"LPMF";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionScheme {
    RoundRobin,
    Contiguous,
}

/// Point indices held by each of `m` machines.
pub fn partition(n: usize, m: usize, scheme: PartitionScheme) -> Result<Vec<Vec<usize>>> {
    if m == 0 {
        return Err(Error::Domain("need at least one machine".into()));
    }
    let mut parts = vec![Vec::new(); m];
    for i in 0..n {
        let owner = match scheme {
            PartitionScheme::RoundRobin => i % m,
            PartitionScheme::Contiguous => i * m / n.max(1),
        };
        parts[owner].push(i);
    }
    Ok(parts)
}

/// Partition from an explicit owner per point.
pub fn partition_from_owners(owners: &[usize], m: usize) -> Result<Vec<Vec<usize>>> {
    let mut parts = vec![Vec::new(); m];
    for (i, &o) in owners.iter().enumerate() {
        if o >= m {
            return Err(Error::IndexOutOfRange { index: o, len: m });
        }
        parts[o].push(i);
    }
    Ok(parts)
}

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub stream: StreamConfig,
    pub median: MedianSketchConfig,
    /// Total point count, public to every machine.
    pub n: usize,
    pub k: usize,
    /// Transcript budget in bytes, if any.
    pub budget: Option<u64>,
}

impl ProtocolConfig {
    pub fn seed(&self) -> u64 {
        self.stream.seed
    }
}

#[derive(Clone, Debug)]
pub struct MachineState {
    pub machine_id: u32,
    pub seed: u64,
    /// `(global id, point)` pairs.
    pub points: Vec<(u64, Vec<f64>)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeter {
    pub per_machine: Vec<u64>,
    pub total: u64,
}

impl TranscriptMeter {
    pub fn new(m: usize) -> Self {
        TranscriptMeter { per_machine: vec![0; m], total: 0 }
    }

    pub fn record(&mut self, machine: usize, bytes: u64) {
        self.per_machine[machine] += bytes;
        self.total += bytes;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub k_cost: KCostResult,
    pub median_estimate: f64,
    pub transcript: TranscriptMeter,
    pub within_budget: bool,
}

fn median_template(cfg: &ProtocolConfig) -> Result<MedianCostState> {
    MedianCostState::new(cfg.median.clone(), cfg.seed(), uniform_weights(cfg.n))
}

/// Builds and frames one machine's message.
pub fn machine_message(cfg: &ProtocolConfig, machine: &MachineState, reducer: Arc<dyn Reducer>) -> Result<Vec<u8>> {
    let stream_cfg = StreamConfig { seed: machine.seed, ..cfg.stream.clone() };
    let mut stream = StreamState::new(stream_cfg.clone(), reducer)?;
    let mut median = MedianCostState::new(cfg.median.clone(), machine.seed, uniform_weights(cfg.n))?;
    for (id, x) in &machine.points {
        stream.ingest_with_id(*id, x)?;
        median.ingest(*id as usize, x)?;
    }
    let coreset = stream.coreset()?;
    let mut w = Writer::new();
    w.header(TAG_MACHINE);
    w.u32(machine.machine_id);
    w.u64(machine.seed);
    w.u64(stream_cfg.fingerprint());
    w.bytes(&wire::encode_median_state(&median));
    w.bytes(&wire::encode_coreset(stream_cfg.fingerprint(), &coreset));
    wire::frame(&w.finish())
}

struct Decoded {
    machine_id: u32,
    median: MedianCostState,
    coreset: Vec<CoresetEntry>,
}

fn decode_message(cfg: &ProtocolConfig, template: &MedianCostState, payload: &[u8]) -> Result<Decoded> {
    let mut r = Reader::new(payload);
    r.header(TAG_MACHINE)?;
    let machine_id = r.u32()?;
    let seed = r.u64()?;
    if seed != cfg.seed() {
        return Err(Error::Protocol(format!("machine {machine_id} used seed {seed}, expected {}", cfg.seed())));
    }
    let fp = cfg.stream.fingerprint();
    if r.u64()? != fp {
        return Err(Error::Protocol(format!("machine {machine_id} has a different configuration")));
    }
    let median = wire::decode_median_state(r.bytes()?, template)?;
    let coreset = wire::decode_coreset(r.bytes()?, fp)?;
    r.expect_done()?;
    Ok(Decoded { machine_id, median, coreset })
}

/// Runs the machines concurrently and the coordinator on the frames.
pub fn run_machines(cfg: &ProtocolConfig, machines: &[MachineState], reducer: Arc<dyn Reducer>) -> Result<ProtocolOutcome> {
    let (tx, rx) = mpsc::channel::<(usize, Result<Vec<u8>>)>();
    std::thread::scope(|s| {
        for (slot, machine) in machines.iter().enumerate() {
            let tx = tx.clone();
            let reducer = reducer.clone();
            s.spawn(move || {
                // The receiver outlives every sender inside the scope.
                let _ = tx.send((slot, machine_message(cfg, machine, reducer)));
            });
        }
    });
    drop(tx);
    let mut frames: Vec<(usize, Vec<u8>)> = Vec::with_capacity(machines.len());
    for (slot, msg) in rx {
        frames.push((slot, msg?));
    }
    coordinate(cfg, machines.len(), frames, reducer)
}

/// Merges framed messages. Arrival order does not matter: frames are
/// processed in machine-id order.
pub fn coordinate(
    cfg: &ProtocolConfig,
    m: usize,
    frames: Vec<(usize, Vec<u8>)>,
    reducer: Arc<dyn Reducer>,
) -> Result<ProtocolOutcome> {
    let mut transcript = TranscriptMeter::new(m);
    let template = median_template(cfg)?;
    let mut decoded = Vec::with_capacity(frames.len());
    for (slot, bytes) in &frames {
        transcript.record(*slot, bytes.len() as u64);
        let payloads = wire::unframe(bytes)?;
        if payloads.len() != 1 {
            return Err(Error::Protocol(format!("expected one frame from machine slot {slot}")));
        }
        decoded.push(decode_message(cfg, &template, payloads[0])?);
    }
    decoded.sort_by_key(|d| d.machine_id);
    if decoded.windows(2).any(|w| w[0].machine_id == w[1].machine_id) {
        return Err(Error::Protocol("duplicate machine id".into()));
    }

    let sketcher = crate::stream::ClusterSketcher::new(cfg.stream.clone())?;
    let mut median = template;
    let mut entries: Vec<CoresetEntry> = Vec::new();
    for d in decoded {
        median.merge(&d.median)?;
        entries.extend(d.coreset);
        if entries.len() > cfg.stream.capacity {
            entries = reduce_block(entries, reducer.as_ref(), cfg.stream.capacity, &sketcher)?;
        }
    }
    entries.sort_by_key(|e| e.id);
    let k_cost = sketcher.evaluate(&entries, cfg.k)?;
    let within_budget = cfg.budget.is_none_or(|b| transcript.total <= b);
    Ok(ProtocolOutcome { k_cost, median_estimate: median.estimate()?, transcript, within_budget })
}

/// Splits `points` across machines sharing the public seed and runs the protocol.
pub fn run_protocol(
    points: &[Vec<f64>],
    parts: &[Vec<usize>],
    cfg: &ProtocolConfig,
    reducer: Arc<dyn Reducer>,
) -> Result<ProtocolOutcome> {
    let mut seen = vec![false; points.len()];
    for &i in parts.iter().flatten() {
        if i >= points.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Protocol(format!("partition is not disjoint or covers index {i} twice")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Protocol("partition does not cover every point".into()));
    }
    let machines: Vec<MachineState> = parts
        .iter()
        .enumerate()
        .map(|(mi, idx)| MachineState {
            machine_id: mi as u32,
            seed: cfg.seed(),
            points: idx.iter().map(|&i| (i as u64, points[i].clone())).collect(),
        })
        .collect();
    run_machines(cfg, &machines, reducer)
}

/// Single-process reference: the same sketches built by one stream.
pub fn run_centralized(points: &[Vec<f64>], cfg: &ProtocolConfig, reducer: Arc<dyn Reducer>) -> Result<(KCostResult, f64)> {
    let mut stream = StreamState::new(cfg.stream.clone(), reducer)?;
    let mut median = median_template(cfg)?;
    for (i, x) in points.iter().enumerate() {
        stream.ingest_with_id(i as u64, x)?;
        median.ingest(i, x)?;
    }
    Ok((stream.query_k_cost(cfg.k)?, median.estimate()?))
}
