//! Insertion-only streaming (k, p)-clustering cost.
//!
//! Every arriving point is turned into a distance sketch plus the slot
//! sketches `S_j^{(m)} x` for every cluster size m <= M and slot j < m, and
//! its coordinates are dropped. A merge-and-reduce tree keeps at most a
//! bounded number of such entries. At query time every partition of the
//! coreset into at most k clusters is scored by recombining the stored slot
//! sketches into each cluster's centered median-cost sketch.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::countmin::buckets_for;
use crate::error::{Error, Result};
use crate::median::{check_weights, MedianSketch, MedianSketchConfig};
use crate::partition::{members, min_partition_cost, PARTITION_CAP};
use crate::rng::{hash_words, SeedCtx};
use crate::stable_sketch::{norm_from_entries, LpSketchConfig, SketchVector, Weights};

const STREAM_DISTANCE: u64 = 0x6469_7374;
const STREAM_REDUCE: u64 = 0x7265_6475;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub dim: usize,
    /// Center count used by the sensitivity reducer.
    pub k: usize,
    /// Coreset capacity M; also the largest cluster size with slot sketches.
    pub capacity: usize,
    /// Merge-and-reduce levels; the top level absorbs further merges.
    pub levels: usize,
    pub distance_width: usize,
    pub seed: u64,
    /// Per-cluster median-cost sketch.
    pub slot: MedianSketchConfig,
}

impl StreamConfig {
    pub fn new(p: f64, eps: f64, delta: f64, dim: usize, k: usize, capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 || k == 0 {
            return Err(Error::Domain("capacity and k must be positive".into()));
        }
        let base = MedianSketchConfig::new(p, eps, delta, dim)?;
        // Every entry stores O(M^2) copies of this state, so it is kept far
        // smaller than the standalone median-cost defaults.
        let buckets = buckets_for(base.eps, p).min(dim.max(4));
        let (a, b) = (base.alpha_width, base.beta_width);
        let slot = base.with_samples(8, 2).with_widths(64, a, b).with_count_min(2, buckets);
        Ok(StreamConfig { p, eps, delta, dim, k, capacity, levels: 2, distance_width: 32, seed, slot })
    }

    pub fn with_slot(mut self, slot: MedianSketchConfig) -> Self {
        self.slot = slot;
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels.max(1);
        self
    }

    pub fn slot_len(&self) -> usize {
        self.slot.state_len()
    }

    pub fn slots_per_point(&self) -> usize {
        self.capacity * (self.capacity + 1) / 2
    }

    /// Floats held by one coreset entry.
    pub fn entry_floats(&self) -> usize {
        self.slots_per_point() * self.slot_len() + self.distance_width
    }

    /// Most floats the merge-and-reduce tree can hold at once: a 2M-entry
    /// merge in flight plus M entries on each other level.
    pub fn peak_float_bound(&self) -> usize {
        (self.levels + 1) * self.capacity * self.entry_floats()
    }

    pub fn fingerprint(&self) -> u64 {
        hash_words(&[
            self.p.to_bits(),
            self.eps.to_bits(),
            self.delta.to_bits(),
            self.dim as u64,
            self.k as u64,
            self.capacity as u64,
            self.levels as u64,
            self.distance_width as u64,
            self.seed,
            self.slot.fingerprint(),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot.dim != self.dim || self.slot.p != self.p {
            return Err(Error::Domain("slot sketch must share p and dimension".into()));
        }
        self.slot.validate()
    }
}

/// Offset of slot (m, j) inside an entry's flat slot array (1 <= m, j < m).
#[inline]
pub fn slot_index(m: usize, j: usize) -> usize {
    (m - 1) * m / 2 + j
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetEntry {
    pub id: u64,
    pub weight: f64,
    pub distance: Vec<f64>,
    /// `slots_per_point` blocks of `slot_len` floats.
    pub slots: Vec<f64>,
}

impl CoresetEntry {
    pub fn floats(&self) -> usize {
        self.distance.len() + self.slots.len()
    }
}

/// Shared read-only sketch families and evaluation logic.
#[derive(Clone, Debug)]
pub struct ClusterSketcher {
    pub config: StreamConfig,
    families: Vec<MedianSketch>,
    distance: LpSketchConfig,
}

impl ClusterSketcher {
    pub fn new(config: StreamConfig) -> Result<Self> {
        config.validate()?;
        let families = (1..=config.capacity)
            .map(|m| MedianSketch::with_family(config.slot.clone(), config.seed, m as u64))
            .collect::<Result<Vec<_>>>()?;
        let distance = LpSketchConfig::new(
            config.p,
            config.distance_width,
            config.dim,
            SeedCtx::new(config.seed, STREAM_DISTANCE),
        )?;
        Ok(ClusterSketcher { config, families, distance })
    }

    pub fn family(&self, m: usize) -> &MedianSketch {
        &self.families[m - 1]
    }

    /// Sketch a raw point into an entry of weight 1.
    pub fn make_entry(&self, id: u64, x: &[f64]) -> Result<CoresetEntry> {
        let c = &self.config;
        if x.len() != c.dim {
            return Err(Error::LengthMismatch { expected: c.dim, found: x.len() });
        }
        let vals: Vec<(usize, f64)> = x.iter().copied().enumerate().collect();
        let distance = crate::stable_sketch::apply_sketch(&self.distance, &vals, &Weights::Uniform)?.entries;
        let s = c.slot_len();
        let mut slots = vec![0.0; c.slots_per_point() * s];
        for m in 1..=c.capacity {
            let fam = self.family(m);
            for j in 0..m {
                let off = slot_index(m, j) * s;
                fam.add_point(j, x, 1.0, &mut slots[off..off + s]);
            }
        }
        Ok(CoresetEntry { id, weight: 1.0, distance, slots })
    }

    /// Centered, weighted median-cost state of a cluster, rebuilt from the
    /// members' stored slot sketches. `members` must be sorted by id.
    pub fn cluster_state(&self, members: &[&CoresetEntry]) -> (Vec<f64>, Vec<f64>) {
        let m = members.len();
        let s = self.config.slot_len();
        let p = self.config.p;
        let total: f64 = members.iter().map(|e| e.weight).sum();
        let lambda: Vec<f64> = members.iter().map(|e| e.weight / total).collect();
        let roots: Vec<f64> = lambda.iter().map(|l| l.powf(1.0 / p)).collect();
        let mut state = vec![0.0; s];
        for (t, e) in members.iter().enumerate() {
            for h in 0..m {
                let coef = if h == t { roots[t] } else { 0.0 } - lambda[t] * roots[h];
                let off = slot_index(m, h) * s;
                for (a, v) in state.iter_mut().zip(&e.slots[off..off + s]) {
                    *a += coef * v;
                }
            }
        }
        (state, lambda)
    }

    /// Estimated weighted l_p^p-median cost of one cluster.
    pub fn cluster_cost(&self, members: &[&CoresetEntry]) -> Result<f64> {
        let m = members.len();
        if m <= 1 {
            return Ok(0.0);
        }
        if m > self.config.capacity {
            return Err(Error::CoresetTooLarge { size: m, cap: self.config.capacity });
        }
        let total: f64 = members.iter().map(|e| e.weight).sum();
        let (state, lambda) = self.cluster_state(members);
        if state.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        check_weights(&lambda).ok();
        Ok(self.family(m).estimate_from_state(&state, &lambda)? * total)
    }

    /// Minimum over partitions into at most k clusters of the summed cluster estimates.
    pub fn evaluate(&self, entries: &[CoresetEntry], k: usize) -> Result<KCostResult> {
        let size = entries.len();
        if k == 0 || k > size {
            return Err(Error::KOutOfRange { k, size });
        }
        let base = KCostResult { k, estimate: 0.0, partition_count: 1, coreset_size: size, seed: self.config.seed };
        if k == size {
            return Ok(base);
        }
        if size > PARTITION_CAP {
            return Err(Error::CoresetTooLarge { size, cap: PARTITION_CAP });
        }
        let mut sorted: Vec<&CoresetEntry> = entries.iter().collect();
        sorted.sort_by_key(|e| e.id);
        let mut failure = None;
        let search = min_partition_cost(size, k, |mask| {
            let group: Vec<&CoresetEntry> = members(mask).map(|i| sorted[i]).collect();
            match self.cluster_cost(&group) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(KCostResult { estimate: search.best, partition_count: search.partitions, ..base })
    }

    pub fn approx_distance(&self, a: &CoresetEntry, b: &CoresetEntry) -> f64 {
        let diff: Vec<f64> = a.distance.iter().zip(&b.distance).map(|(x, y)| x - y).collect();
        norm_from_entries(&diff, self.config.p, &mut Vec::with_capacity(diff.len()))
    }

    pub fn distance_config(&self) -> &LpSketchConfig {
        &self.distance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KCostResult {
    pub k: usize,
    pub estimate: f64,
    pub partition_count: u64,
    pub coreset_size: usize,
    pub seed: u64,
}

/// Context handed to a reducer.
pub struct ReduceCtx<'a> {
    pub seed: u64,
    pub k: usize,
    pub p: f64,
    pub sketcher: &'a ClusterSketcher,
}

impl ReduceCtx<'_> {
    pub fn distance(&self, a: &CoresetEntry, b: &CoresetEntry) -> f64 {
        self.sketcher.approx_distance(a, b)
    }
}

/// Maps a weighted block to a weighted subset of at most `bound` entries,
/// looking only at sketches and approximate distances.
pub trait Reducer: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn reduce(&self, block: Vec<CoresetEntry>, bound: usize, ctx: &ReduceCtx) -> Result<Vec<CoresetEntry>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Passthrough;

impl Reducer for Passthrough {
    fn name(&self) -> &'static str {
        "passthrough"
    }

    fn reduce(&self, block: Vec<CoresetEntry>, _bound: usize, _ctx: &ReduceCtx) -> Result<Vec<CoresetEntry>> {
        Ok(block)
    }
}

fn total_weight(entries: &[CoresetEntry]) -> f64 {
    entries.iter().map(|e| e.weight).sum()
}

fn rescale_to(entries: &mut [CoresetEntry], target: f64) {
    let now = total_weight(entries);
    if now > 0.0 {
        let f = target / now;
        for e in entries.iter_mut() {
            e.weight *= f;
        }
    }
}

/// Uniform sample without replacement, reweighted to the block's mass.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformSampling;

impl Reducer for UniformSampling {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn reduce(&self, mut block: Vec<CoresetEntry>, bound: usize, ctx: &ReduceCtx) -> Result<Vec<CoresetEntry>> {
        if block.len() <= bound {
            return Ok(block);
        }
        let target = total_weight(&block);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        // Partial Fisher-Yates.
        for i in 0..bound {
            let j = rng.random_range(i..block.len());
            block.swap(i, j);
        }
        block.truncate(bound);
        rescale_to(&mut block, target);
        block.sort_by_key(|e| e.id);
        Ok(block)
    }
}

/// Sensitivity-style sampling: probability proportional to the share of an
/// approximate clustering cost plus a uniform share; inverse-probability
/// weights, then rescaled so the total mass is unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct SensitivitySampling;

impl Reducer for SensitivitySampling {
    fn name(&self) -> &'static str {
        "sensitivity"
    }

    fn reduce(&self, block: Vec<CoresetEntry>, bound: usize, ctx: &ReduceCtx) -> Result<Vec<CoresetEntry>> {
        let n = block.len();
        if n <= bound {
            return Ok(block);
        }
        let target = total_weight(&block);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        // Farthest-first centers under approximate distances.
        let mut nearest = vec![f64::INFINITY; n];
        let mut center = rng.random_range(0..n);
        for _ in 0..ctx.k.min(n) {
            for (i, e) in block.iter().enumerate() {
                nearest[i] = nearest[i].min(ctx.distance(e, &block[center]));
            }
            center = (0..n).max_by(|&a, &b| nearest[a].total_cmp(&nearest[b])).unwrap_or(0);
        }
        let costs: Vec<f64> = block.iter().zip(&nearest).map(|(e, d)| e.weight * d.powf(ctx.p)).collect();
        let cost_total: f64 = costs.iter().sum();
        let sens: Vec<f64> = block
            .iter()
            .zip(&costs)
            .map(|(e, c)| e.weight / target + if cost_total > 0.0 { c / cost_total } else { 0.0 })
            .collect();
        let sens_total: f64 = sens.iter().sum();
        let q: Vec<f64> = sens.iter().map(|s| s / sens_total).collect();
        let mut counts = vec![0usize; n];
        for _ in 0..bound {
            let mut u: f64 = rng.random();
            let mut pick = n - 1;
            for (i, qi) in q.iter().enumerate() {
                if u < *qi {
                    pick = i;
                    break;
                }
                u -= qi;
            }
            counts[pick] += 1;
        }
        let mut out: Vec<CoresetEntry> = block
            .into_iter()
            .zip(counts.iter().zip(&q))
            .filter(|(_, (c, _))| **c > 0)
            .map(|(mut e, (&c, &qi))| {
                e.weight = e.weight * c as f64 / (bound as f64 * qi);
                e
            })
            .collect();
        rescale_to(&mut out, target);
        out.sort_by_key(|e| e.id);
        Ok(out)
    }
}

pub fn reducer_by_name(name: &str) -> Result<Arc<dyn Reducer>> {
    match name {
        "passthrough" => Ok(Arc::new(Passthrough)),
        "uniform" => Ok(Arc::new(UniformSampling)),
        "sensitivity" => Ok(Arc::new(SensitivitySampling)),
        other => Err(Error::Domain(format!("unknown reducer '{other}'"))),
    }
}

/// Runs the plugin and enforces the size bound and mass conservation.
pub fn reduce_block(
    block: Vec<CoresetEntry>,
    plugin: &dyn Reducer,
    bound: usize,
    sketcher: &ClusterSketcher,
) -> Result<Vec<CoresetEntry>> {
    let before = total_weight(&block);
    let mut ids: Vec<u64> = block.iter().map(|e| e.id).collect();
    ids.sort_unstable();
    ids.push(sketcher.config.seed);
    let ctx = ReduceCtx {
        seed: hash_words(&[STREAM_REDUCE, hash_words(&ids)]),
        k: sketcher.config.k,
        p: sketcher.config.p,
        sketcher,
    };
    let out = plugin.reduce(block, bound, &ctx)?;
    if out.len() > bound {
        return Err(Error::ReducerOversize { size: out.len(), bound });
    }
    let after = total_weight(&out);
    if (after - before).abs() > 1e-6 * before.max(1.0) {
        return Err(Error::Domain(format!("reducer changed total weight {before} -> {after}")));
    }
    Ok(out)
}

/// Instrumented count of sketch floats held by the stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryMeter {
    pub current: usize,
    pub peak: usize,
}

impl MemoryMeter {
    fn set(&mut self, now: usize) {
        self.current = now;
        self.peak = self.peak.max(now);
    }
}

#[derive(Clone, Debug)]
pub struct StreamState {
    pub sketcher: ClusterSketcher,
    reducer: Arc<dyn Reducer>,
    buffer: Vec<CoresetEntry>,
    levels: Vec<Option<Vec<CoresetEntry>>>,
    next_id: u64,
    ingested: u64,
    meter: MemoryMeter,
}

impl StreamState {
    pub fn new(config: StreamConfig, reducer: Arc<dyn Reducer>) -> Result<Self> {
        let levels = vec![None; config.levels];
        Ok(StreamState {
            sketcher: ClusterSketcher::new(config)?,
            reducer,
            buffer: Vec::new(),
            levels,
            next_id: 0,
            ingested: 0,
            meter: MemoryMeter::default(),
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.sketcher.config
    }

    pub fn reducer(&self) -> &dyn Reducer {
        self.reducer.as_ref()
    }

    /// Ingest with the next arrival id.
    pub fn ingest(&mut self, x: &[f64]) -> Result<()> {
        let id = self.next_id;
        self.ingest_with_id(id, x)
    }

    /// Ingest a point whose id is fixed by the caller (stable under reordering).
    pub fn ingest_with_id(&mut self, id: u64, x: &[f64]) -> Result<()> {
        let entry = self.sketcher.make_entry(id, x)?;
        self.next_id = self.next_id.max(id + 1);
        self.ingested += 1;
        self.buffer.push(entry);
        self.touch(0);
        if self.buffer.len() >= self.config().capacity {
            let block = std::mem::take(&mut self.buffer);
            self.carry(block)?;
        }
        Ok(())
    }

    pub fn ingested(&self) -> u64 {
        self.ingested
    }

    fn held(&self) -> usize {
        self.buffer.iter().chain(self.levels.iter().flatten().flatten()).map(|e| e.floats()).sum()
    }

    fn touch(&mut self, transient: usize) {
        let now = self.held() + transient;
        self.meter.set(now);
    }

    fn carry(&mut self, mut block: Vec<CoresetEntry>) -> Result<()> {
        let cap = self.config().capacity;
        let top = self.levels.len() - 1;
        for lvl in 0..=top {
            match self.levels[lvl].take() {
                None => {
                    self.levels[lvl] = Some(block);
                    self.touch(0);
                    return Ok(());
                }
                Some(mut merged) => {
                    merged.extend(block);
                    self.touch(merged.iter().map(|e| e.floats()).sum());
                    block = reduce_block(merged, self.reducer.as_ref(), cap, &self.sketcher)?;
                    if lvl == top {
                        self.levels[lvl] = Some(block);
                        self.touch(0);
                        return Ok(());
                    }
                }
            }
        }
        unreachable!("top level absorbs")
    }

    /// All held entries sorted by id, reduced once more if over capacity.
    pub fn coreset(&self) -> Result<Vec<CoresetEntry>> {
        let mut all: Vec<CoresetEntry> =
            self.buffer.iter().chain(self.levels.iter().flatten().flatten()).cloned().collect();
        all.sort_by_key(|e| e.id);
        if all.len() > self.config().capacity {
            all = reduce_block(all, self.reducer.as_ref(), self.config().capacity, &self.sketcher)?;
        }
        Ok(all)
    }

    pub fn query_k_cost(&self, k: usize) -> Result<KCostResult> {
        let coreset = self.coreset()?;
        self.sketcher.evaluate(&coreset, k)
    }

    pub fn memory(&self) -> MemoryMeter {
        self.meter
    }

    pub fn peak_sketch_floats(&self) -> usize {
        self.meter.peak
    }
}

impl SketchVector {
    /// Distance-sketch view of an entry.
    pub fn from_entry(entry: &CoresetEntry, config: &LpSketchConfig) -> SketchVector {
        SketchVector { config_id: config.config_id(), p: config.p, entries: entry.distance.clone() }
    }
}
