//! Hierarchical navigable small-world graph over unit-norm rows.
//!
//! Distance is `1 - dot(a, b)`, which orders identically to cosine on unit
//! vectors. Level assignment draws from a ChaCha8 stream seeded by
//! [`HnswParams::seed`], so a single-threaded build is reproducible.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::dot;

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 42,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig("HNSW M must be >= 2".into()));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::InvalidConfig("HNSW ef values must be >= 1".into()));
        }
        Ok(())
    }

    fn level_multiplier(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    fn max_degree(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    node: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswGraph {
    params: HnswParams,
    /// `links[node][level]` is the neighbour list of `node` on `level`.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
}

struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Returns true when `node` was not yet visited in this epoch.
    fn insert(&mut self, node: u32) -> bool {
        let slot = &mut self.marks[node as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

struct Rows<'a> {
    data: &'a [f32],
    dim: usize,
}

impl Rows<'_> {
    fn get(&self, i: u32) -> &[f32] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dist(&self, q: &[f32], i: u32) -> f64 {
        1.0 - dot(q, self.get(i))
    }
}

impl HnswGraph {
    /// Builds the graph over `n = data.len() / dim` unit rows, inserting in row order.
    pub fn build(data: &[f32], dim: usize, params: HnswParams) -> Result<Self> {
        params.validate()?;
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidData("matrix shape does not match dim".into()));
        }
        let n = data.len() / dim;
        if n == 0 {
            return Err(Error::InvalidData("cannot build HNSW over zero rows".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidData("too many rows for HNSW".into()));
        }
        let rows = Rows { data, dim };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = params.level_multiplier();
        let mut graph = Self {
            params,
            links: Vec::with_capacity(n),
            entry_point: 0,
        };
        let mut visited = Visited::new(n);

        for node in 0..n as u32 {
            let u: f64 = rng.random();
            let level = ((-(1.0 - u).ln() * ml).floor() as usize).min(MAX_LEVEL);
            graph.links.push(vec![Vec::new(); level + 1]);
            if node == 0 {
                continue;
            }
            graph.insert(&rows, node, level, &mut visited);
        }
        graph.repair_connectivity(&rows);
        Ok(graph)
    }

    fn top_level(&self) -> usize {
        self.links[self.entry_point as usize].len() - 1
    }

    fn insert(&mut self, rows: &Rows<'_>, node: u32, level: usize, visited: &mut Visited) {
        let q = rows.get(node);
        let top = self.top_level();
        let mut ep = Candidate {
            dist: rows.dist(q, self.entry_point),
            node: self.entry_point,
        };
        for lc in (level + 1..=top).rev() {
            ep = self.greedy_closest(rows, q, ep, lc);
        }
        let mut eps = vec![ep];
        for lc in (0..=level.min(top)).rev() {
            let found = self.search_layer(rows, q, &eps, self.params.ef_construction, lc, visited);
            // Up to 2M links on level 0, as in FAISS; M above.
            let neighbours = select_neighbours(rows, &found, self.params.max_degree(lc));
            self.links[node as usize][lc] = neighbours.iter().map(|c| c.node).collect();
            let cap = self.params.max_degree(lc);
            for c in &neighbours {
                let e = c.node as usize;
                self.links[e][lc].push(node);
                if self.links[e][lc].len() > cap {
                    let base = rows.get(c.node);
                    let mut cands: Vec<Candidate> = self.links[e][lc]
                        .iter()
                        .map(|&o| Candidate {
                            dist: rows.dist(base, o),
                            node: o,
                        })
                        .collect();
                    cands.sort();
                    self.links[e][lc] = select_neighbours(rows, &cands, cap)
                        .into_iter()
                        .map(|c| c.node)
                        .collect();
                }
            }
            eps = found;
        }
        if level > top {
            self.entry_point = node;
        }
    }

    fn greedy_closest(&self, rows: &Rows<'_>, q: &[f32], mut best: Candidate, level: usize) -> Candidate {
        loop {
            let mut changed = false;
            for &nb in &self.links[best.node as usize][level] {
                let c = Candidate {
                    dist: rows.dist(q, nb),
                    node: nb,
                };
                if c < best {
                    best = c;
                    changed = true;
                }
            }
            if !changed {
                return best;
            }
        }
    }

    /// Beam search on one level. Returns up to `ef` nodes sorted by ascending distance.
    fn search_layer(
        &self,
        rows: &Rows<'_>,
        q: &[f32],
        entry: &[Candidate],
        ef: usize,
        level: usize,
        visited: &mut Visited,
    ) -> Vec<Candidate> {
        visited.reset();
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate> = BinaryHeap::new();
        for &c in entry {
            if visited.insert(c.node) {
                frontier.push(Reverse(c));
                best.push(c);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(cur)) = frontier.pop() {
            let worst = best.peek().copied().expect("non-empty beam");
            if cur.dist > worst.dist && best.len() >= ef {
                break;
            }
            for &nb in &self.links[cur.node as usize][level] {
                if !visited.insert(nb) {
                    continue;
                }
                let c = Candidate {
                    dist: rows.dist(q, nb),
                    node: nb,
                };
                if best.len() < ef || c < *best.peek().expect("non-empty beam") {
                    frontier.push(Reverse(c));
                    best.push(c);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Links every node unreachable from the entry point on level 0 to its
    /// nearest reachable node.
    fn repair_connectivity(&mut self, rows: &Rows<'_>) {
        let n = self.links.len();
        if n < 2 {
            return;
        }
        loop {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([self.entry_point]);
            seen[self.entry_point as usize] = true;
            while let Some(u) = queue.pop_front() {
                for &v in &self.links[u as usize][0] {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        queue.push_back(v);
                    }
                }
            }
            let Some(orphan) = seen.iter().position(|s| !s) else {
                return;
            };
            let q = rows.get(orphan as u32);
            let target = (0..n as u32)
                .filter(|&i| seen[i as usize])
                .map(|i| Candidate {
                    dist: rows.dist(q, i),
                    node: i,
                })
                .min()
                .expect("entry point is reachable");
            self.links[orphan][0].push(target.node);
            self.links[target.node as usize][0].push(orphan as u32);
        }
    }

    /// Approximate nearest rows to `q`, at most `max(ef, k)` of them, closest first.
    pub fn search(&self, data: &[f32], dim: usize, q: &[f32], k: usize, ef: usize) -> Vec<u32> {
        let rows = Rows { data, dim };
        let mut ep = Candidate {
            dist: rows.dist(q, self.entry_point),
            node: self.entry_point,
        };
        for lc in (1..=self.top_level()).rev() {
            ep = self.greedy_closest(&rows, q, ep, lc);
        }
        let mut visited = Visited::new(self.links.len());
        self.search_layer(&rows, q, &[ep], ef.max(k), 0, &mut visited)
            .into_iter()
            .map(|c| c.node)
            .collect()
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn set_ef_search(&mut self, ef: usize) {
        self.params.ef_search = ef.max(1);
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    pub fn level_count(&self) -> usize {
        self.top_level() + 1
    }

    pub fn node_level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn neighbours(&self, node: usize, level: usize) -> &[u32] {
        &self.links[node][level]
    }

    /// Number of nodes present on `level`.
    pub fn nodes_on_level(&self, level: usize) -> usize {
        self.links.iter().filter(|l| l.len() > level).count()
    }

    pub fn is_level0_connected(&self) -> bool {
        let n = self.links.len();
        let mut seen = vec![false; n];
        let mut stack = vec![self.entry_point];
        seen[self.entry_point as usize] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.links[u as usize][0] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Serializes as little-endian u32s: level count, entry point, node
    /// count, then per node its level followed by `degree, ids...` for each
    /// of its levels.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
        put(self.level_count() as u32);
        put(self.entry_point);
        put(self.links.len() as u32);
        for node in &self.links {
            put((node.len() - 1) as u32);
            for level in node {
                put(level.len() as u32);
                for &nb in level {
                    put(nb);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], params: HnswParams) -> Result<Self> {
        let corrupt = |msg: &str| Error::InvalidData(format!("hnsw.bin: {msg}"));
        if !bytes.len().is_multiple_of(4) {
            return Err(corrupt("length is not a multiple of 4"));
        }
        let mut words = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let mut next = || words.next().ok_or_else(|| corrupt("unexpected end of data"));
        let level_count = next()? as usize;
        let entry_point = next()?;
        let n = next()? as usize;
        if n == 0 || entry_point as usize >= n {
            return Err(corrupt("bad node count or entry point"));
        }
        let mut links = Vec::with_capacity(n);
        for _ in 0..n {
            let level = next()? as usize;
            if level >= level_count {
                return Err(corrupt("node level exceeds level count"));
            }
            let mut node = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let degree = next()? as usize;
                let mut nbs = Vec::with_capacity(degree);
                for _ in 0..degree {
                    let nb = next()?;
                    if nb as usize >= n {
                        return Err(corrupt("edge endpoint out of range"));
                    }
                    nbs.push(nb);
                }
                node.push(nbs);
            }
            links.push(node);
        }
        if next().is_ok() {
            return Err(corrupt("trailing data"));
        }
        let graph = Self {
            params,
            links,
            entry_point,
        };
        if graph.level_count() != level_count {
            return Err(corrupt("entry point is not on the top level"));
        }
        Ok(graph)
    }
}

/// Neighbour-selection heuristic: keep a candidate only if it is closer to
/// the base than to every neighbour kept so far. `sorted` must be ascending.
fn select_neighbours(rows: &Rows<'_>, sorted: &[Candidate], m: usize) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::with_capacity(m);
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let v = rows.get(c.node);
        if kept.iter().all(|k| rows.dist(v, k.node) > c.dist) {
            kept.push(c);
        }
    }
    kept
}
