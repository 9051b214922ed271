//! Undirected graphs, set distances, partitions and overlap expansion.
//!
//! Vertex ids are 0-based and contiguous. Original labels (e.g. bus numbers
//! of an ingested network) are kept in [`Graph::labels`] so user data never
//! has to be reordered; blocks are described by index lists instead of a
//! physical relabeling into contiguous ranges.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::StructuredMatrix;

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) are merged; self-loops and out-of-range ids are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) references a vertex outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at vertex {i}")));
            }
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            adj,
            labels: (0..n).collect(),
        })
    }

    /// Builds a graph whose vertices carry arbitrary external labels. Edges
    /// are given in label space; the returned graph uses dense ids ordered by
    /// first appearance in `labels`.
    pub fn from_labeled_edges(labels: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self> {
        let index: std::collections::HashMap<usize, usize> =
            labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        if index.len() != labels.len() {
            return Err(Error::InvalidInput("duplicate vertex labels".into()));
        }
        let mapped = edges
            .iter()
            .map(|(a, b)| match (index.get(a), index.get(b)) {
                (Some(&i), Some(&j)) => Ok((i, j)),
                _ => Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) uses an unknown label"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = Self::from_edges(labels.len(), &mapped)?;
        g.labels = labels;
        Ok(g)
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Edges in canonical orientation `(low, high)`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for (i, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "vertex {v} out of range (graph has {} vertices)",
                self.n_vertices()
            )));
        }
        Ok(())
    }

    /// Minimum edge count from the set `sources` to every vertex. Entries
    /// beyond `cutoff` (or in other components) are `None`.
    pub fn bfs_distance(
        &self,
        sources: &[usize],
        cutoff: Option<usize>,
    ) -> Result<Vec<Option<usize>>> {
        if sources.is_empty() {
            return Err(Error::InvalidInput(
                "bfs_distance needs at least one source".into(),
            ));
        }
        for &s in sources {
            self.check_vertex(s)?;
        }
        let mut dist = vec![None; self.n_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            if cutoff.is_some_and(|c| du >= c) {
                continue;
            }
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Shortest-path distance between two vertices.
    pub fn distance(&self, i: usize, j: usize) -> Result<Option<usize>> {
        self.check_vertex(j)?;
        if i == j {
            self.check_vertex(i)?;
            return Ok(Some(0));
        }
        let mut bfs = BfsScratch::new(self.n_vertices());
        Ok(bfs.distances_to(self, i, &[j]).map(|d| d[0]))
    }

    /// Dense all-pairs distance table; intended for small graphs and oracles.
    pub fn all_pairs_distances(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.n_vertices())
            .map(|i| self.bfs_distance(&[i], None).expect("valid source"))
            .collect()
    }

    /// Connected-component id of every vertex, numbered by lowest member.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n_vertices();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Largest finite distance between two vertices (the diameter for a
    /// connected graph). Costs one BFS per vertex.
    pub fn diameter(&self) -> usize {
        (0..self.n_vertices())
            .map(|i| {
                self.bfs_distance(&[i], None)
                    .expect("valid source")
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }
}

/// Reusable BFS state for many truncated searches on one graph.
pub(crate) struct BfsScratch {
    dist: Vec<usize>,
    stamp: Vec<u32>,
    epoch: u32,
    queue: VecDeque<usize>,
}

impl BfsScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            dist: vec![0; n],
            stamp: vec![0; n],
            epoch: 0,
            queue: VecDeque::new(),
        }
    }

    /// Distances from `source` to each of `targets`, stopping as soon as all
    /// targets are reached. Returns `None` if some target is unreachable.
    pub(crate) fn distances_to(
        &mut self,
        g: &Graph,
        source: usize,
        targets: &[usize],
    ) -> Option<Vec<usize>> {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        let mut wanted: Vec<usize> = targets.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let mut remaining = wanted.len();
        self.queue.clear();
        self.stamp[source] = epoch;
        self.dist[source] = 0;
        if wanted.binary_search(&source).is_ok() {
            remaining -= 1;
        }
        self.queue.push_back(source);
        while remaining > 0 {
            let u = self.queue.pop_front()?;
            for &v in g.neighbors(u) {
                if self.stamp[v] != epoch {
                    self.stamp[v] = epoch;
                    self.dist[v] = self.dist[u] + 1;
                    if wanted.binary_search(&v).is_ok() {
                        remaining -= 1;
                    }
                    self.queue.push_back(v);
                }
            }
        }
        Some(targets.iter().map(|&t| self.dist[t]).collect())
    }
}

/// Disjoint assignment of every vertex to one of `k` non-empty blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    k: usize,
    assignment: Vec<usize>,
}

impl Partition {
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput(
                "partition needs at least one block".into(),
            ));
        }
        let mut seen = vec![false; k];
        for (v, &b) in assignment.iter().enumerate() {
            if b >= k {
                return Err(Error::InvalidInput(format!(
                    "vertex {v} assigned to block {b}, but k = {k}"
                )));
            }
            seen[b] = true;
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("block {b} is empty")));
        }
        Ok(Self { k, assignment })
    }

    /// Single block holding every vertex.
    pub fn single(n: usize) -> Self {
        Self {
            k: 1,
            assignment: vec![0; n],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_vertices(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    /// Sorted member lists, one per block.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (v, &b) in self.assignment.iter().enumerate() {
            out[b].push(v);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &b in &self.assignment {
            out[b] += 1;
        }
        out
    }
}

/// Expanded blocks `{ i : d(i, V_k) <= omega }` for every block of a partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapBlocks {
    pub omega: usize,
    /// Expanded vertex lists, sorted.
    pub blocks: Vec<Vec<usize>>,
    /// Non-overlapping cores, sorted.
    pub interior: Vec<Vec<usize>>,
    /// Vertices outside each expanded block that are adjacent to it.
    pub complement_boundary: Vec<Vec<usize>>,
    /// Owning block of every vertex.
    pub owner: Vec<usize>,
}

impl OverlapBlocks {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.owner.len()
    }

    /// True when some expanded block covers every vertex.
    pub fn covers_all(&self, k: usize) -> bool {
        self.blocks[k].len() == self.n_vertices()
    }
}

/// Expands every block of `p` by `omega` hops in `g`.
pub fn expand_overlap(g: &Graph, p: &Partition, omega: usize) -> Result<OverlapBlocks> {
    if p.n_vertices() != g.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} vertices, graph has {}",
            p.n_vertices(),
            g.n_vertices()
        )));
    }
    let interior = p.blocks();
    let mut blocks = Vec::with_capacity(p.k());
    let mut boundary = Vec::with_capacity(p.k());
    for core in &interior {
        let dist = g.bfs_distance(core, Some(omega + 1))?;
        let mut inside = Vec::new();
        let mut ring = Vec::new();
        for (v, d) in dist.iter().enumerate() {
            match d {
                Some(d) if *d <= omega => inside.push(v),
                Some(_) => ring.push(v),
                None => {}
            }
        }
        blocks.push(inside);
        boundary.push(ring);
    }
    Ok(OverlapBlocks {
        omega,
        blocks,
        interior,
        complement_boundary: boundary,
        owner: p.assignment().to_vec(),
    })
}

/// Target block sizes for the greedy partitioner.
#[derive(Debug, Clone, PartialEq)]
pub enum BalanceMode {
    /// Sizes differ by at most one.
    Uniform,
    /// Sizes proportional to the given positive weights (one per block).
    Skewed(Vec<f64>),
}

/// Splits `total` into `weights.len()` positive integers proportional to the
/// weights (largest-remainder rounding).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let m = weights.len();
    debug_assert!(total >= m && m > 0);
    let wsum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &b in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[b] += 1;
        left -= 1;
    }
    // every block must be non-empty
    while let Some(z) = sizes.iter().position(|&s| s == 0) {
        let big = (0..m)
            .max_by_key(|&b| (sizes[b], std::cmp::Reverse(b)))
            .expect("m > 0");
        sizes[big] -= 1;
        sizes[z] += 1;
    }
    sizes
}

#[derive(Clone, Copy, PartialEq)]
struct Pending {
    weight: f64,
    vertex: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Seeded greedy BFS region-growing partitioner (stand-in for multilevel
/// k-way partitioning).
pub fn greedy_partition(g: &Graph, k: usize, mode: &BalanceMode, seed: u64) -> Result<Partition> {
    greedy_partition_with(g, k, mode, seed, None)
}

/// Like [`greedy_partition`]; when `coupling` is given, regions grow toward
/// the frontier vertex with the largest accumulated `|H_ij|` into the region
/// instead of in BFS order, which tends to keep strong couplings inside
/// blocks.
pub fn greedy_partition_with(
    g: &Graph,
    k: usize,
    mode: &BalanceMode,
    seed: u64,
    coupling: Option<&StructuredMatrix>,
) -> Result<Partition> {
    let n = g.n_vertices();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} vertices into {k} non-empty blocks"
        )));
    }
    let weights = match mode {
        BalanceMode::Uniform => vec![1.0; k],
        BalanceMode::Skewed(w) => {
            if w.len() != k || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "skewed mode needs {k} positive weights, got {w:?}"
                )));
            }
            w.clone()
        }
    };
    if let Some(h) = coupling {
        if h.n() != n {
            return Err(Error::DimensionMismatch(
                "coupling matrix size differs from graph".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Group vertices by component; allocate blocks to components when possible.
    let comp = g.components();
    let n_comp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut members = vec![Vec::new(); n_comp];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }

    let mut assignment = vec![usize::MAX; n];
    if n_comp <= k {
        let comp_sizes: Vec<f64> = members.iter().map(|m| m.len() as f64).collect();
        let mut per_comp = apportion(k, &comp_sizes);
        // A component cannot hold more blocks than vertices.
        loop {
            let over: Vec<usize> = (0..n_comp)
                .filter(|&c| per_comp[c] > members[c].len())
                .collect();
            if over.is_empty() {
                break;
            }
            for c in over {
                let extra = per_comp[c] - members[c].len();
                per_comp[c] = members[c].len();
                for _ in 0..extra {
                    let tgt = (0..n_comp)
                        .filter(|&d| per_comp[d] < members[d].len())
                        .max_by(|&a, &b| {
                            let ra = members[a].len() as f64 / per_comp[a] as f64;
                            let rb = members[b].len() as f64 / per_comp[b] as f64;
                            ra.total_cmp(&rb).then(b.cmp(&a))
                        })
                        .expect("k <= n guarantees room");
                    per_comp[tgt] += 1;
                }
            }
        }
        let mut first_block = 0;
        for (c, verts) in members.iter().enumerate() {
            let ws = &weights[first_block..first_block + per_comp[c]];
            let targets = apportion(verts.len(), ws);
            let start = verts[rng.random_range(0..verts.len())];
            grow_regions(g, start, &targets, first_block, coupling, &mut assignment);
            first_block += per_comp[c];
        }
    } else {
        // More components than blocks: grow across components in BFS order.
        let targets = apportion(n, &weights);
        let start = rng.random_range(0..n);
        grow_regions(g, start, &targets, 0, coupling, &mut assignment);
    }
    debug_assert!(assignment.iter().all(|&b| b != usize::MAX));
    Partition::new(k, assignment)
}

/// Vertex farthest (in hops) from `start`, lowest id on ties.
fn pseudo_peripheral(g: &Graph, start: usize) -> usize {
    let dist = g.bfs_distance(&[start], None).expect("valid start");
    let mut best = start;
    let mut best_d = 0;
    for (v, d) in dist.iter().enumerate() {
        if let Some(d) = *d {
            if d > best_d {
                best_d = d;
                best = v;
            }
        }
    }
    best
}

/// BFS visiting order starting at `root`, then continuing with the lowest
/// unvisited vertex of every remaining component reachable via restarts,
/// restricted to vertices with `assignment == usize::MAX`.
fn visiting_order(g: &Graph, root: usize, assignment: &[usize]) -> Vec<usize> {
    let n = g.n_vertices();
    let mut seen = vec![false; n];
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    let starts = std::iter::once(root).chain(0..n);
    for s in starts {
        if seen[s] || assignment[s] != usize::MAX {
            continue;
        }
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in g.neighbors(u) {
                if !seen[v] && assignment[v] == usize::MAX {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order
}

fn grow_regions(
    g: &Graph,
    start: usize,
    targets: &[usize],
    first_block: usize,
    coupling: Option<&StructuredMatrix>,
    assignment: &mut [usize],
) {
    let root = pseudo_peripheral(g, start);
    let order = visiting_order(g, root, assignment);
    let mut cursor = 0;
    for (offset, &target) in targets.iter().enumerate() {
        let block = first_block + offset;
        let mut taken = 0;
        while taken < target {
            while assignment[order[cursor]] != usize::MAX {
                cursor += 1;
            }
            let seed = order[cursor];
            taken += match coupling {
                None => grow_bfs(g, seed, target - taken, block, assignment),
                Some(h) => grow_coupled(g, h, seed, target - taken, block, assignment),
            };
        }
    }
}

fn grow_bfs(g: &Graph, seed: usize, want: usize, block: usize, assignment: &mut [usize]) -> usize {
    let mut queue = VecDeque::from([seed]);
    let mut queued = vec![seed];
    let mut taken = 0;
    // `queued` doubles as a visited marker through the assignment sentinel.
    assignment[seed] = usize::MAX - 1;
    while let Some(u) = queue.pop_front() {
        if taken == want {
            break;
        }
        assignment[u] = block;
        taken += 1;
        for &v in g.neighbors(u) {
            if assignment[v] == usize::MAX {
                assignment[v] = usize::MAX - 1;
                queued.push(v);
                queue.push_back(v);
            }
        }
    }
    for v in queued {
        if assignment[v] == usize::MAX - 1 {
            assignment[v] = usize::MAX;
        }
    }
    taken
}

fn grow_coupled(
    g: &Graph,
    h: &StructuredMatrix,
    seed: usize,
    want: usize,
    block: usize,
    assignment: &mut [usize],
) -> usize {
    let n = g.n_vertices();
    let mut score = vec![0.0_f64; n];
    let mut heap = BinaryHeap::from([Pending {
        weight: 0.0,
        vertex: seed,
    }]);
    let mut taken = 0;
    while let Some(Pending { weight, vertex: u }) = heap.pop() {
        if taken == want {
            break;
        }
        if assignment[u] != usize::MAX || weight < score[u] {
            continue;
        }
        assignment[u] = block;
        taken += 1;
        for &v in g.neighbors(u) {
            if assignment[v] == usize::MAX {
                score[v] += h.get(u, v).abs().max(f64::MIN_POSITIVE);
                heap.push(Pending {
                    weight: score[v],
                    vertex: v,
                });
            }
        }
    }
    taken
}

/// Block-size statistics per overlap level, laid out like a table with one
/// column per block plus a total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionStats {
    pub k: usize,
    /// `expanded_sizes[w][k] = |V_k^w|` for `w = 0..=max_omega`.
    pub expanded_sizes: Vec<Vec<usize>>,
    /// `ring_sizes[w-1][k] = |V_k^w \ V_k^(w-1)|` for `w = 1..=max_omega`.
    pub ring_sizes: Vec<Vec<usize>>,
}

impl PartitionStats {
    pub fn expanded_totals(&self) -> Vec<usize> {
        self.expanded_sizes.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn ring_totals(&self) -> Vec<usize> {
        self.ring_sizes.iter().map(|r| r.iter().sum()).collect()
    }

    /// Plain-text table (rows = statistic, columns = blocks + total).
    pub fn to_table(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("stat");
        for k in 0..self.k {
            let _ = write!(s, "\t{}", k + 1);
        }
        s.push_str("\tTotal\n");
        for (w, row) in self.expanded_sizes.iter().enumerate() {
            let label = if w == 0 {
                "|V_k|".to_string()
            } else {
                format!("|V_k^{w}|")
            };
            let _ = write!(s, "{label}");
            for x in row {
                let _ = write!(s, "\t{x}");
            }
            let _ = writeln!(s, "\t{}", row.iter().sum::<usize>());
        }
        for (i, row) in self.ring_sizes.iter().enumerate() {
            let w = i + 1;
            let label = if w == 1 {
                "|V_k^1 \\ V_k|".to_string()
            } else {
                format!("|V_k^{w} \\ V_k^{}|", w - 1)
            };
            let _ = write!(s, "{label}");
            for x in row {
                let _ = write!(s, "\t{x}");
            }
            let _ = writeln!(s, "\t{}", row.iter().sum::<usize>());
        }
        s
    }
}

/// Sizes of `V_k^w` and of the rings between consecutive levels.
pub fn partition_stats(g: &Graph, p: &Partition, max_omega: usize) -> Result<PartitionStats> {
    if max_omega == 0 {
        return Err(Error::InvalidInput(
            "partition_stats needs max_omega >= 1".into(),
        ));
    }
    if p.n_vertices() != g.n_vertices() {
        return Err(Error::DimensionMismatch(
            "partition and graph sizes differ".into(),
        ));
    }
    let mut expanded = vec![vec![0; p.k()]; max_omega + 1];
    for (b, core) in p.blocks().iter().enumerate() {
        let dist = g.bfs_distance(core, Some(max_omega))?;
        let mut per_level = vec![0usize; max_omega + 1];
        for d in dist.into_iter().flatten() {
            per_level[d] += 1;
        }
        let mut acc = 0;
        for (w, c) in per_level.iter().enumerate() {
            acc += c;
            expanded[w][b] = acc;
        }
    }
    let rings = (1..=max_omega)
        .map(|w| {
            (0..p.k())
                .map(|b| expanded[w][b] - expanded[w - 1][b])
                .collect()
        })
        .collect();
    Ok(PartitionStats {
        k: p.k(),
        expanded_sizes: expanded,
        ring_sizes: rings,
    })
}
