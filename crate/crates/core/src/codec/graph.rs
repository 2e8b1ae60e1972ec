use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degree::DegreeDistribution;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SBG1";
const MAX_SWAP_PASSES: usize = 200;

/// Bipartite graph stored twice: edges in check-node order, plus for every
/// variable node the ids of its edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBipartiteGraph {
    vn_count: usize,
    cn_count: usize,
    cn_ptr: Vec<usize>,
    cn_vn: Vec<u32>,
    vn_ptr: Vec<usize>,
    vn_edge: Vec<u32>,
}

impl SparseBipartiteGraph {
    /// Builds the graph from per-check neighbour lists. Lists are sorted;
    /// repeated neighbours are rejected.
    pub fn from_cn_lists(vn_count: usize, lists: Vec<Vec<u32>>) -> Result<Self> {
        let cn_count = lists.len();
        let mut cn_ptr = Vec::with_capacity(cn_count + 1);
        cn_ptr.push(0);
        let mut cn_vn = Vec::new();
        for (j, mut l) in lists.into_iter().enumerate() {
            l.sort_unstable();
            if l.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Construction(format!("check {j} has a repeated neighbour")));
            }
            if let Some(&v) = l.last() {
                if v as usize >= vn_count {
                    return Err(Error::Construction(format!("check {j} references variable {v} of {vn_count}")));
                }
            }
            cn_vn.extend(l);
            cn_ptr.push(cn_vn.len());
        }
        let mut deg = vec![0usize; vn_count];
        for &v in &cn_vn {
            deg[v as usize] += 1;
        }
        let mut vn_ptr = vec![0usize; vn_count + 1];
        for i in 0..vn_count {
            vn_ptr[i + 1] = vn_ptr[i] + deg[i];
        }
        let mut fill = vn_ptr[..vn_count].to_vec();
        let mut vn_edge = vec![0u32; cn_vn.len()];
        for (e, &v) in cn_vn.iter().enumerate() {
            vn_edge[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        Ok(SparseBipartiteGraph { vn_count, cn_count, cn_ptr, cn_vn, vn_ptr, vn_edge })
    }

    pub fn vn_count(&self) -> usize {
        self.vn_count
    }

    pub fn cn_count(&self) -> usize {
        self.cn_count
    }

    pub fn edge_count(&self) -> usize {
        self.cn_vn.len()
    }

    /// Sorted variable neighbours of check `j`.
    pub fn cn_neighbors(&self, j: usize) -> &[u32] {
        &self.cn_vn[self.cn_ptr[j]..self.cn_ptr[j + 1]]
    }

    /// Edge ids of check `j`, in the same order as [`Self::cn_neighbors`].
    pub fn cn_edge_range(&self, j: usize) -> std::ops::Range<usize> {
        self.cn_ptr[j]..self.cn_ptr[j + 1]
    }

    /// Edge ids incident to variable `i`, in increasing check order.
    pub fn vn_edges(&self, i: usize) -> &[u32] {
        &self.vn_edge[self.vn_ptr[i]..self.vn_ptr[i + 1]]
    }

    pub fn edge_vn(&self, e: usize) -> usize {
        self.cn_vn[e] as usize
    }

    pub fn vn_degree(&self, i: usize) -> usize {
        self.vn_ptr[i + 1] - self.vn_ptr[i]
    }

    pub fn cn_degree(&self, j: usize) -> usize {
        self.cn_ptr[j + 1] - self.cn_ptr[j]
    }

    pub fn cn_lists(&self) -> Vec<Vec<u32>> {
        (0..self.cn_count).map(|j| self.cn_neighbors(j).to_vec()).collect()
    }

    /// Same graph with variable `i` renamed to `perm[i]`.
    pub fn relabel_vns(&self, perm: &[usize]) -> Result<Self> {
        let lists = (0..self.cn_count)
            .map(|j| self.cn_neighbors(j).iter().map(|&v| perm[v as usize] as u32).collect())
            .collect();
        Self::from_cn_lists(self.vn_count, lists)
    }

    /// Histogram `degree -> node count` of the variable side.
    pub fn vn_degree_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut h = std::collections::BTreeMap::new();
        for i in 0..self.vn_count {
            *h.entry(self.vn_degree(i)).or_insert(0) += 1;
        }
        h
    }

    pub fn cn_degree_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut h = std::collections::BTreeMap::new();
        for j in 0..self.cn_count {
            *h.entry(self.cn_degree(j)).or_insert(0) += 1;
        }
        h
    }

    /// Little-endian adjacency dump: magic, `vn_count`, `cn_count`, then each
    /// check as its degree followed by its neighbours, all `u32`.
    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.vn_count as u32).to_le_bytes())?;
        w.write_all(&(self.cn_count as u32).to_le_bytes())?;
        for j in 0..self.cn_count {
            let n = self.cn_neighbors(j);
            w.write_all(&(n.len() as u32).to_le_bytes())?;
            for &v in n {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidInput("not a graph file".into()));
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let vn_count = word()? as usize;
        let cn_count = word()? as usize;
        let mut lists = Vec::with_capacity(cn_count);
        for _ in 0..cn_count {
            let d = word()? as usize;
            let l = (0..d).map(|_| word()).collect::<Result<Vec<u32>>>()?;
            lists.push(l);
        }
        Self::from_cn_lists(vn_count, lists)
    }
}

/// Metadata stored next to a binary graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphHeader {
    pub version: u32,
    pub vn_count: usize,
    pub cn_count: usize,
    pub edges: usize,
    pub seed: u64,
    pub vn_dist: DegreeDistribution,
    pub cn_dist: DegreeDistribution,
}

/// Node counts per degree by largest remainder, so that each class is
/// within one node of `count · fraction`.
pub fn degree_counts(count: usize, dist: &DegreeDistribution) -> Vec<(u32, usize)> {
    let node = dist.to_node();
    let exact: Vec<(u32, f64)> = node.iter().map(|(d, w)| (d, w * count as f64)).collect();
    let mut counts: Vec<(u32, usize)> = exact.iter().map(|&(d, x)| (d, x.floor() as usize)).collect();
    let assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a].1 - exact[a].1.floor();
        let rb = exact[b].1 - exact[b].1.floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(count.saturating_sub(assigned)) {
        counts[i].1 += 1;
    }
    counts
}

/// Degree of every node, shuffled, summing to `sockets` when given.
fn degree_sequence(count: usize, dist: &DegreeDistribution, sockets: Option<usize>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut seq: Vec<usize> = degree_counts(count, dist)
        .into_iter()
        .flat_map(|(d, c)| std::iter::repeat_n(d as usize, c))
        .collect();
    if let Some(target) = sockets {
        // Move single sockets onto the lowest (or off the highest) degrees.
        let mut total: usize = seq.iter().sum();
        let n = seq.len();
        let mut i = 0;
        while total < target {
            seq[i % n] += 1;
            total += 1;
            i += 1;
        }
        let mut i = 0;
        while total > target {
            let k = n - 1 - (i % n);
            if seq[k] <= 1 {
                return Err(Error::Construction("socket counts cannot be balanced".into()));
            }
            seq[k] -= 1;
            total -= 1;
            i += 1;
        }
    }
    seq.shuffle(rng);
    Ok(seq)
}

/// Configuration-model graph: variable sockets are shuffled onto check
/// sockets, then repeated edges are removed by swapping endpoints with random
/// other edges. Degrees are preserved exactly.
pub fn random_graph(
    vn_count: usize,
    cn_count: usize,
    vn_dist: &DegreeDistribution,
    cn_dist: &DegreeDistribution,
    seed: u64,
) -> Result<SparseBipartiteGraph> {
    if vn_count == 0 || cn_count == 0 {
        return Err(Error::Construction("graph needs at least one node on each side".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vn_deg = degree_sequence(vn_count, vn_dist, None, &mut rng)?;
    let edges: usize = vn_deg.iter().sum();
    let cn_deg = degree_sequence(cn_count, cn_dist, Some(edges), &mut rng)?;
    if cn_deg.iter().any(|&d| d > vn_count) {
        return Err(Error::Construction(format!("check degree exceeds the {vn_count} variables")));
    }

    let mut sockets: Vec<u32> = vn_deg
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i as u32, d))
        .collect();
    sockets.shuffle(&mut rng);
    let mut ptr = vec![0usize; cn_count + 1];
    for j in 0..cn_count {
        ptr[j + 1] = ptr[j] + cn_deg[j];
    }
    let owner: Vec<usize> = (0..cn_count).flat_map(|j| std::iter::repeat_n(j, cn_deg[j])).collect();
    let contains = |sockets: &[u32], j: usize, v: u32, skip: usize| {
        sockets[ptr[j]..ptr[j + 1]].iter().enumerate().any(|(k, &x)| x == v && ptr[j] + k != skip)
    };

    for _ in 0..MAX_SWAP_PASSES {
        let mut dups = Vec::new();
        for j in 0..cn_count {
            let mut seen = std::collections::HashSet::new();
            for e in ptr[j]..ptr[j + 1] {
                if !seen.insert(sockets[e]) {
                    dups.push(e);
                }
            }
        }
        if dups.is_empty() {
            let lists = (0..cn_count).map(|j| sockets[ptr[j]..ptr[j + 1]].to_vec()).collect();
            return SparseBipartiteGraph::from_cn_lists(vn_count, lists);
        }
        for e in dups {
            let j = owner[e];
            let v = sockets[e];
            if !contains(&sockets, j, v, e) {
                continue;
            }
            for _ in 0..64 {
                let f = rng.random_range(0..edges);
                let k = owner[f];
                let w = sockets[f];
                if k == j || w == v {
                    continue;
                }
                if !contains(&sockets, j, w, e) && !contains(&sockets, k, v, f) {
                    sockets.swap(e, f);
                    break;
                }
            }
        }
    }
    Err(Error::Construction("could not remove repeated edges".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::Perspective;

    #[test]
    fn largest_remainder_counts() {
        let d = DegreeDistribution::new(Perspective::Node, [(6, 0.2063), (7, 0.7472), (100, 0.0465)]).unwrap();
        let c = degree_counts(10200, &d);
        assert_eq!(c.iter().map(|x| x.1).sum::<usize>(), 10200);
        for ((_, n), (_, w)) in c.iter().zip(d.iter()) {
            assert!((*n as f64 - w * 10200.0).abs() <= 1.0);
        }
    }

    #[test]
    fn regular_graph_counts() {
        let r = |d| DegreeDistribution::regular(Perspective::Node, d).unwrap();
        let g = random_graph(2100, 2100, &r(7), &r(7), 1).unwrap();
        assert_eq!(g.edge_count(), 14700);
        assert!((0..2100).all(|i| g.vn_degree(i) == 7 && g.cn_degree(i) == 7));
        for j in 0..g.cn_count() {
            assert!(g.cn_neighbors(j).windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(g, random_graph(2100, 2100, &r(7), &r(7), 1).unwrap());
        assert_ne!(g, random_graph(2100, 2100, &r(7), &r(7), 2).unwrap());
    }

    #[test]
    fn dense_checks_have_no_repeats() {
        let r = |d| DegreeDistribution::regular(Perspective::Node, d).unwrap();
        let g = random_graph(2000, 40, &r(4), &r(200), 3).unwrap();
        assert!((0..40).all(|j| g.cn_degree(j) == 200));
        for i in 0..2000 {
            assert_eq!(g.vn_degree(i), 4);
            for &e in g.vn_edges(i) {
                assert_eq!(g.edge_vn(e as usize), i);
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let r = |d| DegreeDistribution::regular(Perspective::Node, d).unwrap();
        let g = random_graph(300, 100, &r(3), &r(9), 5).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 4 * 100 + 4 * 900);
        assert_eq!(SparseBipartiteGraph::read_binary(&buf[..]).unwrap(), g);
        assert!(SparseBipartiteGraph::read_binary(&b"NOPE"[..]).is_err());
        assert!(SparseBipartiteGraph::read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn rejects_repeated_neighbours() {
        assert!(SparseBipartiteGraph::from_cn_lists(4, vec![vec![1, 1]]).is_err());
        assert!(SparseBipartiteGraph::from_cn_lists(4, vec![vec![5]]).is_err());
    }
}
