//! Conflict-free grouping of sparse-kernel reads.
//!
//! One kernel group (N′ kernels of one input channel) is a bipartite graph
//! between kernel lanes and spectral indices; each nonzero is an edge. A
//! cycle serves a set of edges such that every kernel appears at most once
//! (C1) and at most `r` distinct indices are read (C2), one per replica of
//! the input tile buffer. A schedule is an ordered exact cover of the edges
//! by such cycles.

use std::collections::HashMap;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::netmodel::{SparseKernel, SparseKernelSet};

/// Largest instance [`schedule_bruteforce`] accepts.
pub const BRUTEFORCE_EDGE_LIMIT: usize = 24;

/// Address written into unused INDEX slots in the binary layout.
pub const UNUSED_SLOT: u16 = u16::MAX;

const TABLE_MAGIC: &[u8; 4] = b"IVT1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessGraph {
    /// Spectral window length K².
    pub window: usize,
    /// Sorted nonzero indices per kernel lane.
    pub kernels: Vec<Vec<u16>>,
}

impl AccessGraph {
    pub fn from_indices(window: usize, kernels: Vec<Vec<u16>>) -> Self {
        let kernels = kernels
            .into_iter()
            .map(|mut k| {
                k.sort_unstable();
                k.dedup();
                k
            })
            .collect();
        Self { window, kernels }
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.len()
    }

    pub fn n_edges(&self) -> usize {
        self.kernels.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, u16)> + '_ {
        self.kernels.iter().enumerate().flat_map(|(k, ix)| ix.iter().map(move |&i| (k, i)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.window];
        for (_, i) in self.edges() {
            d[i as usize] += 1;
        }
        d
    }

    pub fn max_nnz(&self) -> usize {
        self.kernels.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// One access graph per kernel group; lanes follow the group order.
pub fn build_graph(kernels: &[&SparseKernel], window: usize) -> AccessGraph {
    AccessGraph::from_indices(window, kernels.iter().map(|k| k.indices().map(|i| i as u16).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleCycle {
    /// (kernel lane, index), sorted by lane.
    pub pairs: Vec<(usize, u16)>,
    /// Sorted distinct indices served.
    pub distinct_indices: Vec<u16>,
}

impl ScheduleCycle {
    fn new(mut pairs: Vec<(usize, u16)>) -> Self {
        pairs.sort_unstable();
        let mut distinct: Vec<u16> = pairs.iter().map(|p| p.1).collect();
        distinct.sort_unstable();
        distinct.dedup();
        Self { pairs, distinct_indices: distinct }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Greedy,
    Random,
    LowestIndex,
    Bruteforce,
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "random" => Ok(Self::Random),
            "lowest-index" | "lowest" => Ok(Self::LowestIndex),
            "bruteforce" | "brute-force" => Ok(Self::Bruteforce),
            other => Err(Error::validation("scheduler", "kind", format!("unknown scheduler `{other}`"))),
        }
    }
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Greedy => "greedy",
            Self::Random => "random",
            Self::LowestIndex => "lowest-index",
            Self::Bruteforce => "bruteforce",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub cycles: Vec<ScheduleCycle>,
    pub n_par: usize,
    pub r: usize,
    pub scheduler: SchedulerKind,
    pub pattern: Option<String>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.cycles.iter().map(|c| c.pairs.len()).sum()
    }

    /// Checks exact cover against `graph` plus C1 and C2 on every cycle.
    pub fn check(&self, graph: &AccessGraph) -> Result<()> {
        let mut seen = vec![vec![false; graph.window]; graph.n_kernels()];
        for (t, c) in self.cycles.iter().enumerate() {
            if c.pairs.is_empty() {
                return Err(Error::Format(format!("cycle {t} is empty")));
            }
            let mut lanes: Vec<usize> = c.pairs.iter().map(|p| p.0).collect();
            lanes.dedup();
            if lanes.len() != c.pairs.len() {
                return Err(Error::Format(format!("cycle {t} serves a kernel twice")));
            }
            if c.distinct_indices.len() > self.r {
                return Err(Error::Format(format!(
                    "cycle {t} reads {} indices with r={}",
                    c.distinct_indices.len(),
                    self.r
                )));
            }
            for &(k, i) in &c.pairs {
                if k >= graph.n_kernels() || graph.kernels[k].binary_search(&i).is_err() {
                    return Err(Error::Format(format!("cycle {t} serves ({k}, {i}) which is not an edge")));
                }
                if std::mem::replace(&mut seen[k][i as usize], true) {
                    return Err(Error::Format(format!("edge ({k}, {i}) served twice")));
                }
                if c.distinct_indices.binary_search(&i).is_err() {
                    return Err(Error::Format(format!("cycle {t} index list misses {i}")));
                }
            }
        }
        let served: usize = seen.iter().flatten().filter(|&&b| b).count();
        if served != graph.n_edges() {
            return Err(Error::Format(format!("{} of {} edges served", served, graph.n_edges())));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("Schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// PE utilization Σ|pairs| / (T·N′). The tile-parallel factor cancels since
/// every cycle is broadcast to all P′ tiles.
pub fn utilization(schedule: &Schedule) -> f64 {
    utilization_of(&[schedule])
}

/// Pooled utilization over several schedules, Σ pairs / Σ (T·N′).
pub fn utilization_of(schedules: &[&Schedule]) -> f64 {
    let pairs: usize = schedules.iter().map(|s| s.n_pairs()).sum();
    let slots: usize = schedules.iter().map(|s| s.len() * s.n_par).sum();
    if slots == 0 {
        1.0
    } else {
        pairs as f64 / slots as f64
    }
}

/// Kernel lanes as a dense bit vector.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Lanes(Vec<u64>);

impl Lanes {
    fn empty(n: usize) -> Self {
        Lanes(vec![0; n.div_ceil(64)])
    }
    fn insert(&mut self, k: usize) {
        self.0[k / 64] |= 1 << (k % 64);
    }
    fn remove(&mut self, k: usize) {
        self.0[k / 64] &= !(1 << (k % 64));
    }
    fn contains(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn union_with(&mut self, o: &Lanes) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a |= b;
        }
    }
    fn intersects(&self, o: &Lanes) -> bool {
        self.0.iter().zip(&o.0).any(|(a, b)| a & b != 0)
    }
    fn subtract(&mut self, o: &Lanes) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a &= !b;
        }
    }
    fn count_minus(&self, o: &Lanes) -> usize {
        self.0.iter().zip(&o.0).map(|(a, b)| (a & !b).count_ones() as usize).sum()
    }
    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &bits)| {
            let mut rest = bits;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    w * 64 + b
                })
            })
        })
    }
}

/// Remaining edges indexed both ways.
struct Residual {
    by_index: Vec<Lanes>,
    active: Lanes,
    per_kernel: Vec<usize>,
}

impl Residual {
    fn new(graph: &AccessGraph) -> Self {
        let n = graph.n_kernels();
        let mut by_index = vec![Lanes::empty(n); graph.window];
        let mut active = Lanes::empty(n);
        for (k, i) in graph.edges() {
            by_index[i as usize].insert(k);
            active.insert(k);
        }
        Self { by_index, active, per_kernel: graph.kernels.iter().map(Vec::len).collect() }
    }

    fn is_empty(&self) -> bool {
        self.active.count() == 0
    }

    fn take(&mut self, k: usize, i: u16) {
        self.by_index[i as usize].remove(k);
        self.per_kernel[k] -= 1;
        if self.per_kernel[k] == 0 {
            self.active.remove(k);
        }
    }
}

struct Candidate {
    full: bool,
    covered: usize,
    degree_sum: usize,
    /// Sorted by (degree, index).
    set: Vec<usize>,
    cov: Lanes,
}

/// Exact-cover greedy.
///
/// Each cycle considers one candidate index set per seed index (seeds in
/// descending remaining degree). A candidate grows from its seed by adding
/// the index that covers the most still-uncovered kernels (ties: lower
/// degree, then lower index) until it has `r` indices or covers every
/// active kernel. Each covered kernel is served from its lowest-degree
/// index in the set. If some candidate covers every active kernel, the one
/// whose used indices have the least total degree wins; otherwise the one
/// covering the most kernels.
pub fn schedule_greedy(graph: &AccessGraph, r: usize) -> Schedule {
    assert!(r >= 1, "r must be at least 1");
    let mut res = Residual::new(graph);
    let mut cycles = Vec::new();
    while !res.is_empty() {
        let deg: Vec<usize> = res.by_index.iter().map(Lanes::count).collect();
        let n_active = res.active.count();
        let mut seeds: Vec<usize> = (0..graph.window).filter(|&i| deg[i] > 0).collect();
        seeds.sort_by_key(|&i| (std::cmp::Reverse(deg[i]), i));

        let mut best: Option<Candidate> = None;
        let mut in_set = vec![false; graph.window];
        for &seed in &seeds {
            let mut set = vec![seed];
            in_set[seed] = true;
            let mut cov = res.by_index[seed].clone();
            while set.len() < r && cov.count() < n_active {
                let pick = seeds
                    .iter()
                    .filter(|&&y| !in_set[y])
                    .map(|&y| (res.by_index[y].count_minus(&cov), y))
                    .filter(|&(g, _)| g > 0)
                    .min_by_key(|&(g, y)| (std::cmp::Reverse(g), deg[y], y));
                let Some((_, y)) = pick else { break };
                set.push(y);
                in_set[y] = true;
                cov.union_with(&res.by_index[y]);
            }
            for &i in &set {
                in_set[i] = false;
            }
            // serve each kernel from its lowest-degree index in the set
            set.sort_by_key(|&i| (deg[i], i));
            let mut left = cov.clone();
            let mut degree_sum = 0;
            for &i in &set {
                if res.by_index[i].intersects(&left) {
                    degree_sum += deg[i];
                    left.subtract(&res.by_index[i]);
                }
            }
            let covered = cov.count();
            let cand = Candidate { full: covered == n_active, covered, degree_sum, set, cov };
            let better = match &best {
                None => true,
                Some(b) => match (cand.full, b.full) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => cand.degree_sum < b.degree_sum,
                    (false, false) => {
                        (cand.covered, std::cmp::Reverse(cand.degree_sum))
                            > (b.covered, std::cmp::Reverse(b.degree_sum))
                    }
                },
            };
            if better {
                best = Some(cand);
            }
        }
        let chosen = best.expect("residual graph has edges");
        let pairs: Vec<(usize, u16)> = chosen
            .cov
            .iter()
            .map(|k| {
                let &i = chosen
                    .set
                    .iter()
                    .find(|&&i| res.by_index[i].contains(k))
                    .expect("covered kernel has an index in the set");
                (k, i as u16)
            })
            .collect();
        for &(k, i) in &pairs {
            res.take(k, i);
        }
        cycles.push(ScheduleCycle::new(pairs));
    }
    Schedule { cycles, n_par: graph.n_kernels(), r, scheduler: SchedulerKind::Greedy, pattern: None }
}

/// Random baseline: each cycle draws random remaining (kernel, index) pairs
/// among kernels not yet served and stops once every kernel is served or
/// `r` distinct indices are in use.
///
/// Successive uniform draws over the unserved kernels' edges are realised
/// as one shuffle of the cycle's edge list, scanned in order.
pub fn schedule_random(graph: &AccessGraph, r: usize, seed: u64) -> Schedule {
    assert!(r >= 1, "r must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<Vec<u16>> = graph.kernels.clone();
    let mut cycles = Vec::new();
    let mut pool: Vec<(usize, u16)> = Vec::new();
    while remaining.iter().any(|k| !k.is_empty()) {
        pool.clear();
        pool.extend(remaining.iter().enumerate().flat_map(|(k, ix)| ix.iter().map(move |&i| (k, i))));
        pool.shuffle(&mut rng);
        let active = remaining.iter().filter(|k| !k.is_empty()).count();
        let mut served = vec![false; remaining.len()];
        let mut indices: Vec<u16> = Vec::new();
        let mut pairs = Vec::new();
        for &(k, i) in &pool {
            if served[k] {
                continue;
            }
            served[k] = true;
            if !indices.contains(&i) {
                indices.push(i);
            }
            pairs.push((k, i));
            if indices.len() == r || pairs.len() == active {
                break;
            }
        }
        for &(k, i) in &pairs {
            remaining[k].retain(|&x| x != i);
        }
        cycles.push(ScheduleCycle::new(pairs));
    }
    Schedule { cycles, n_par: graph.n_kernels(), r, scheduler: SchedulerKind::Random, pattern: None }
}

/// Lowest-index-first baseline: every kernel proposes its lowest remaining
/// index; the `r` smallest proposed indices are accepted and every kernel
/// proposing one of them is served.
pub fn schedule_lowest_index(graph: &AccessGraph, r: usize) -> Schedule {
    assert!(r >= 1, "r must be at least 1");
    let mut heads = vec![0usize; graph.n_kernels()];
    let mut cycles = Vec::new();
    loop {
        let proposals: Vec<(usize, u16)> =
            graph.kernels.iter().enumerate().filter_map(|(k, ix)| ix.get(heads[k]).map(|&i| (k, i))).collect();
        if proposals.is_empty() {
            break;
        }
        let mut accepted: Vec<u16> = proposals.iter().map(|p| p.1).collect();
        accepted.sort_unstable();
        accepted.dedup();
        accepted.truncate(r);
        let pairs: Vec<(usize, u16)> =
            proposals.into_iter().filter(|(_, i)| accepted.binary_search(i).is_ok()).collect();
        for &(k, _) in &pairs {
            heads[k] += 1;
        }
        cycles.push(ScheduleCycle::new(pairs));
    }
    Schedule { cycles, n_par: graph.n_kernels(), r, scheduler: SchedulerKind::LowestIndex, pattern: None }
}

/// Minimum-length schedule by exhaustive search.
///
/// Cycles are restricted to maximal C1/C2-feasible edge sets that contain
/// the lowest remaining edge; neither restriction loses optimality.
pub fn schedule_bruteforce(graph: &AccessGraph, r: usize) -> Result<(usize, Schedule)> {
    assert!(r >= 1, "r must be at least 1");
    let edges: Vec<(usize, u16)> = graph.edges().collect();
    if edges.len() > BRUTEFORCE_EDGE_LIMIT {
        return Err(Error::InstanceTooLarge { edges: edges.len(), limit: BRUTEFORCE_EDGE_LIMIT });
    }
    let full: u32 = if edges.is_empty() { 0 } else { u32::MAX >> (32 - edges.len()) };
    let mut search = Brute { edges: &edges, r, n_kernels: graph.n_kernels(), memo: HashMap::new() };
    search.solve(full);
    let mut cycles = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let (_, set) = search.memo[&mask];
        cycles.push(ScheduleCycle::new((0..edges.len()).filter(|e| set >> e & 1 == 1).map(|e| edges[e]).collect()));
        mask &= !set;
    }
    let schedule =
        Schedule { cycles, n_par: graph.n_kernels(), r, scheduler: SchedulerKind::Bruteforce, pattern: None };
    Ok((schedule.len(), schedule))
}

struct Brute<'a> {
    edges: &'a [(usize, u16)],
    r: usize,
    n_kernels: usize,
    /// mask -> (min cycles, first cycle of an optimal schedule)
    memo: HashMap<u32, (usize, u32)>,
}

impl Brute<'_> {
    fn solve(&mut self, mask: u32) -> usize {
        if mask == 0 {
            return 0;
        }
        if let Some(&(t, _)) = self.memo.get(&mask) {
            return t;
        }
        let mut best = (usize::MAX, 0);
        for set in self.maximal_sets(mask) {
            let t = 1 + self.solve(mask & !set);
            if t < best.0 {
                best = (t, set);
            }
        }
        self.memo.insert(mask, best);
        best.0
    }

    fn maximal_sets(&self, mask: u32) -> Vec<u32> {
        let first = mask.trailing_zeros() as usize;
        let mut per_kernel: Vec<Vec<usize>> = vec![Vec::new(); self.n_kernels];
        for e in (0..self.edges.len()).filter(|e| mask >> e & 1 == 1) {
            per_kernel[self.edges[e].0].push(e);
        }
        let forced = self.edges[first].0;
        per_kernel[forced] = vec![first];
        let mut out = Vec::new();
        let mut chosen = Vec::new();
        self.extend(&per_kernel, forced, 0, &mut chosen, &mut out);
        out.retain(|&set| self.is_maximal(set, mask));
        out
    }

    fn extend(&self, per_kernel: &[Vec<usize>], forced: usize, k: usize, chosen: &mut Vec<usize>, out: &mut Vec<u32>) {
        if k == per_kernel.len() {
            let set = chosen.iter().fold(0u32, |m, &e| m | 1 << e);
            if set != 0 {
                out.push(set);
            }
            return;
        }
        if k != forced {
            self.extend(per_kernel, forced, k + 1, chosen, out);
        }
        for &e in &per_kernel[k] {
            chosen.push(e);
            if self.index_count(chosen) <= self.r {
                self.extend(per_kernel, forced, k + 1, chosen, out);
            }
            chosen.pop();
        }
    }

    fn index_count(&self, chosen: &[usize]) -> usize {
        let mut ix: Vec<u16> = chosen.iter().map(|&e| self.edges[e].1).collect();
        ix.sort_unstable();
        ix.dedup();
        ix.len()
    }

    fn is_maximal(&self, set: u32, mask: u32) -> bool {
        let members: Vec<usize> = (0..self.edges.len()).filter(|e| set >> e & 1 == 1).collect();
        let lanes: Vec<usize> = members.iter().map(|&e| self.edges[e].0).collect();
        (0..self.edges.len()).filter(|e| mask >> e & 1 == 1 && set >> e & 1 == 0).all(|e| {
            if lanes.contains(&self.edges[e].0) {
                return true;
            }
            let mut with = members.clone();
            with.push(e);
            self.index_count(&with) > self.r
        })
    }
}

/// Dispatches on `kind`; `seed` is used by the random baseline only.
pub fn run_scheduler(kind: SchedulerKind, graph: &AccessGraph, r: usize, seed: u64) -> Result<Schedule> {
    Ok(match kind {
        SchedulerKind::Greedy => schedule_greedy(graph, r),
        SchedulerKind::Random => schedule_random(graph, r, seed),
        SchedulerKind::LowestIndex => schedule_lowest_index(graph, r),
        SchedulerKind::Bruteforce => schedule_bruteforce(graph, r)?.1,
    })
}

/// Pooled schedule statistics of one layer's (channel, group) instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerUtilization {
    pub instances: usize,
    pub cycles: u64,
    pub pairs: u64,
    /// Σ T·N′ over instances.
    pub slots: u64,
}

impl LayerUtilization {
    pub fn mu(&self) -> f64 {
        if self.slots == 0 {
            1.0
        } else {
            self.pairs as f64 / self.slots as f64
        }
    }
}

/// Schedules every (input channel, kernel group) of `kernels` and pools the
/// utilization. The random baseline uses seed `seed + in_ch·groups + group`.
pub fn layer_utilization(
    kernels: &SparseKernelSet,
    n_par: usize,
    r: usize,
    kind: SchedulerKind,
    seed: u64,
    exec: Exec,
) -> Result<LayerUtilization> {
    let groups = kernels.n_groups(n_par);
    let window = kernels.spectral.window_len();
    let jobs: Vec<(usize, usize)> = (0..kernels.n_in).flat_map(|c| (0..groups).map(move |g| (c, g))).collect();
    let runs = exec.map(&jobs, |&(c, g)| {
        let graph = build_graph(&kernels.group(c, g, n_par), window);
        run_scheduler(kind, &graph, r, seed.wrapping_add((c * groups + g) as u64))
            .map(|s| (s.len() as u64, s.n_pairs() as u64, (s.len() * s.n_par) as u64))
    });
    let mut out = LayerUtilization { instances: 0, cycles: 0, pairs: 0, slots: 0 };
    for run in runs {
        let (t, pairs, slots) = run?;
        out.instances += 1;
        out.cycles += t;
        out.pairs += pairs;
        out.slots += slots;
    }
    Ok(out)
}

/// Σ wᵢ·μᵢ / Σ wᵢ.
pub fn weighted_mean(points: &[(f64, f64)]) -> f64 {
    let w: f64 = points.iter().map(|p| p.1).sum();
    points.iter().map(|p| p.0 * p.1).sum::<f64>() / w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub value: Complex64,
    /// INDEX slot holding this lane's address.
    pub sel: u8,
    pub valid: bool,
}

impl Lane {
    const IDLE: Lane = Lane { value: Complex64 { re: 0.0, im: 0.0 }, sel: 0, valid: false };
}

/// Per-cycle hardware tables: `r` tile-buffer addresses and one value lane
/// per kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexValueTables {
    pub lanes: usize,
    pub r: usize,
    pub index_table: Vec<Vec<Option<u16>>>,
    pub value_table: Vec<Vec<Lane>>,
}

/// Builds tables for `schedule`. Slots hold a cycle's distinct indices in
/// ascending order; `kernels` must be the lanes the schedule was built from.
pub fn emit_tables(schedule: &Schedule, kernels: &[&SparseKernel]) -> Result<IndexValueTables> {
    if kernels.len() != schedule.n_par {
        return Err(Error::ShapeMismatch(format!(
            "schedule has {} lanes, {} kernels given",
            schedule.n_par,
            kernels.len()
        )));
    }
    if schedule.r > u8::MAX as usize + 1 {
        return Err(Error::validation("tables", "r", "selector does not fit in 8 bits"));
    }
    let mut index_table = Vec::with_capacity(schedule.len());
    let mut value_table = Vec::with_capacity(schedule.len());
    for c in &schedule.cycles {
        let mut slots: Vec<Option<u16>> = c.distinct_indices.iter().map(|&i| Some(i)).collect();
        slots.resize(schedule.r, None);
        let mut lanes = vec![Lane::IDLE; schedule.n_par];
        for &(k, i) in &c.pairs {
            let value = kernels[k]
                .value_at(i as usize)
                .ok_or_else(|| Error::ShapeMismatch(format!("kernel lane {k} has no entry at index {i}")))?;
            let sel = c.distinct_indices.binary_search(&i).expect("pair index is listed") as u8;
            lanes[k] = Lane { value, sel, valid: true };
        }
        index_table.push(slots);
        value_table.push(lanes);
    }
    Ok(IndexValueTables { lanes: schedule.n_par, r: schedule.r, index_table, value_table })
}

impl IndexValueTables {
    pub fn n_cycles(&self) -> usize {
        self.index_table.len()
    }

    /// Valid lanes as (lane, index, value), in cycle then lane order.
    pub fn replay(&self) -> Result<Vec<(usize, u16, Complex64)>> {
        let mut out = Vec::new();
        for (t, (slots, lanes)) in self.index_table.iter().zip(&self.value_table).enumerate() {
            for (k, lane) in lanes.iter().enumerate().filter(|(_, l)| l.valid) {
                let addr = slots
                    .get(lane.sel as usize)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::Format(format!("cycle {t} lane {k} selects an empty slot")))?;
                out.push((k, addr, lane.value));
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// Little-endian layout:
    ///
    /// ```text
    /// "IVT1" u32 lanes u32 r u32 cycles
    /// per cycle: r × u16 address (0xFFFF = unused)
    ///            lanes × { f64 re, f64 im, u8 sel, u8 valid }
    /// ```
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        for v in [self.lanes, self.r, self.n_cycles()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for (slots, lanes) in self.index_table.iter().zip(&self.value_table) {
            for s in slots {
                w.write_all(&s.unwrap_or(UNUSED_SLOT).to_le_bytes())?;
            }
            for l in lanes {
                w.write_all(&l.value.re.to_le_bytes())?;
                w.write_all(&l.value.im.to_le_bytes())?;
                w.write_all(&[l.sel, l.valid as u8])?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut rd: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        rd.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(Error::Format("not an INDEX/VALUE table file".into()));
        }
        let mut u32s = [0usize; 3];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            rd.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b) as usize;
        }
        let [lanes, r, n] = u32s;
        let mut index_table = Vec::with_capacity(n);
        let mut value_table = Vec::with_capacity(n);
        for _ in 0..n {
            let mut slots = Vec::with_capacity(r);
            for _ in 0..r {
                let mut b = [0u8; 2];
                rd.read_exact(&mut b)?;
                let a = u16::from_le_bytes(b);
                slots.push((a != UNUSED_SLOT).then_some(a));
            }
            let mut row = Vec::with_capacity(lanes);
            for _ in 0..lanes {
                let mut b = [0u8; 18];
                rd.read_exact(&mut b)?;
                let re = f64::from_le_bytes(b[0..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(b[8..16].try_into().expect("8 bytes"));
                if b[17] > 1 {
                    return Err(Error::Format(format!("valid flag {} is not 0 or 1", b[17])));
                }
                row.push(Lane { value: Complex64::new(re, im), sel: b[16], valid: b[17] == 1 });
            }
            index_table.push(slots);
            value_table.push(row);
        }
        let mut rest = Vec::new();
        rd.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self { lanes, r, index_table, value_table })
    }
}
