use crate::degree::DegreeDistribution;
use crate::error::{invalid, Error, Result};

use super::graph::{random_graph, SparseBipartiteGraph};

/// Generator-matrix code: each check node is a parity bit equal to the XOR of
/// its variable neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdgmCode {
    graph: SparseBipartiteGraph,
}

impl LdgmCode {
    pub fn from_graph(graph: SparseBipartiteGraph) -> Self {
        LdgmCode { graph }
    }

    pub fn graph(&self) -> &SparseBipartiteGraph {
        &self.graph
    }

    pub fn message_len(&self) -> usize {
        self.graph.vn_count()
    }

    pub fn parity_len(&self) -> usize {
        self.graph.cn_count()
    }

    pub fn parity(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.message_len() {
            return Err(invalid(format!("message has {} bits, code expects {}", message.len(), self.message_len())));
        }
        Ok((0..self.graph.cn_count())
            .map(|j| self.graph.cn_neighbors(j).iter().fold(0u8, |acc, &v| acc ^ message[v as usize]))
            .collect())
    }
}

/// Number of check nodes that balances `vn_count` variable sockets.
fn balanced_cn_count(vn_count: usize, vn_dist: &DegreeDistribution, cn_dist: &DegreeDistribution) -> usize {
    (vn_count as f64 * vn_dist.average_degree() / cn_dist.average_degree()).round() as usize
}

pub fn build_ldgm(vn_count: usize, vn_dist: &DegreeDistribution, cn_dist: &DegreeDistribution, seed: u64) -> Result<LdgmCode> {
    let cn_count = balanced_cn_count(vn_count, vn_dist, cn_dist);
    build_ldgm_sized(vn_count, cn_count, vn_dist, cn_dist, seed)
}

pub fn build_ldgm_sized(
    vn_count: usize,
    cn_count: usize,
    vn_dist: &DegreeDistribution,
    cn_dist: &DegreeDistribution,
    seed: u64,
) -> Result<LdgmCode> {
    Ok(LdgmCode { graph: random_graph(vn_count, cn_count, vn_dist, cn_dist, seed)? })
}

/// Parity-check code with a systematic encoder. Variables are labelled so
/// that the information bits occupy positions `0..k`; the remaining
/// positions are parity bits or, when the checks are linearly dependent,
/// extra positions frozen to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    graph: SparseBipartiteGraph,
    k: usize,
    /// For each parity position, the information positions it sums.
    parity_rules: Vec<(usize, Vec<u32>)>,
    frozen: Vec<usize>,
    rank: usize,
}

/// Dense GF(2) row stored as 64-bit words.
#[derive(Clone)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn zeros(n: usize) -> Self {
        BitRow(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn xor(&mut self, other: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
    }
}

impl LdpcCode {
    /// Reduces the parity-check matrix of `graph` and relabels its variables
    /// so that `k` free positions come first. Fails if fewer than `k` positions
    /// are free.
    pub fn from_graph(graph: SparseBipartiteGraph, k: usize) -> Result<Self> {
        let n = graph.vn_count();
        let m = graph.cn_count();
        let mut rows: Vec<BitRow> = (0..m)
            .map(|j| {
                let mut r = BitRow::zeros(n);
                for &v in graph.cn_neighbors(j) {
                    r.set(v as usize);
                }
                r
            })
            .collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            if rank == m {
                break;
            }
            let Some(p) = (rank..m).find(|&r| rows[r].get(col)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row.get(col) {
                    row.xor(&pivot);
                }
            }
            pivots.push(col);
            rank += 1;
        }
        let free: Vec<usize> = {
            let mut is_pivot = vec![false; n];
            pivots.iter().for_each(|&c| is_pivot[c] = true);
            (0..n).filter(|&c| !is_pivot[c]).collect()
        };
        if free.len() < k {
            return Err(Error::Construction(format!(
                "parity checks leave {} free positions, need {k}",
                free.len()
            )));
        }
        // New labels: information, then pivots, then frozen free positions.
        let mut perm = vec![0usize; n];
        let mut next = 0;
        for &c in free[..k].iter().chain(&pivots).chain(&free[k..]) {
            perm[c] = next;
            next += 1;
        }
        let parity_rules = pivots
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                let sums = free[..k].iter().filter(|&&f| rows[r].get(f)).map(|&f| perm[f] as u32).collect();
                (perm[c], sums)
            })
            .collect();
        let frozen = free[k..].iter().map(|&c| perm[c]).collect();
        Ok(LdpcCode { graph: graph.relabel_vns(&perm)?, k, parity_rules, frozen, rank })
    }

    pub fn graph(&self) -> &SparseBipartiteGraph {
        &self.graph
    }

    pub fn message_len(&self) -> usize {
        self.k
    }

    pub fn codeword_len(&self) -> usize {
        self.graph.vn_count()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Positions held at zero because the checks are dependent.
    pub fn frozen_positions(&self) -> &[usize] {
        &self.frozen
    }

    /// Full codeword with the message in positions `0..k`.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k {
            return Err(invalid(format!("message has {} bits, code expects {}", message.len(), self.k)));
        }
        let mut w = vec![0u8; self.codeword_len()];
        w[..self.k].copy_from_slice(message);
        for (pos, sums) in &self.parity_rules {
            w[*pos] = sums.iter().fold(0u8, |acc, &f| acc ^ message[f as usize]);
        }
        Ok(w)
    }

    /// Indices of unsatisfied checks.
    pub fn syndrome_failures(&self, word: &[u8]) -> Vec<usize> {
        (0..self.graph.cn_count())
            .filter(|&j| self.graph.cn_neighbors(j).iter().fold(0u8, |a, &v| a ^ word[v as usize]) == 1)
            .collect()
    }
}

/// Random parity-check code of length `vn_count` with `vn_count − cn_count`
/// information bits.
pub fn build_ldpc(vn_count: usize, vn_dist: &DegreeDistribution, cn_dist: &DegreeDistribution, seed: u64) -> Result<LdpcCode> {
    let cn_count = balanced_cn_count(vn_count, vn_dist, cn_dist);
    build_ldpc_sized(vn_count, cn_count, vn_dist, cn_dist, seed)
}

pub fn build_ldpc_sized(
    vn_count: usize,
    cn_count: usize,
    vn_dist: &DegreeDistribution,
    cn_dist: &DegreeDistribution,
    seed: u64,
) -> Result<LdpcCode> {
    if cn_count >= vn_count {
        return Err(Error::Construction(format!("{cn_count} checks leave no information bits in {vn_count}")));
    }
    let graph = random_graph(vn_count, cn_count, vn_dist, cn_dist, seed)?;
    LdpcCode::from_graph(graph, vn_count - cn_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::Perspective;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reg(d: u32) -> DegreeDistribution {
        DegreeDistribution::regular(Perspective::Node, d).unwrap()
    }

    #[test]
    fn ldgm_parity_is_xor() {
        let g = SparseBipartiteGraph::from_cn_lists(4, vec![vec![0, 1], vec![1, 2, 3]]).unwrap();
        let c = LdgmCode::from_graph(g);
        assert_eq!(c.parity(&[1, 1, 0, 1]).unwrap(), vec![0, 0]);
        assert_eq!(c.parity(&[1, 0, 0, 0]).unwrap(), vec![1, 0]);
        assert!(c.parity(&[1]).is_err());
    }

    #[test]
    fn ldpc_codewords_satisfy_every_check() {
        let code = build_ldpc(10200, &reg(4), &reg(204), 11).unwrap();
        assert_eq!(code.graph().cn_count(), 200);
        assert_eq!(code.message_len(), 10000);
        // Every column has even weight, so the rows sum to zero.
        assert!(code.rank() < 200);
        assert_eq!(code.frozen_positions().len(), 200 - code.rank());
        assert!(code.encode(&vec![0; 10000]).unwrap().iter().all(|&b| b == 0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            let msg: Vec<u8> = (0..10000).map(|_| rng.random_range(0..2)).collect();
            let w = code.encode(&msg).unwrap();
            assert_eq!(&w[..10000], &msg[..]);
            assert!(code.syndrome_failures(&w).is_empty());
        }
    }

    #[test]
    fn frozen_positions_track_rank() {
        let code = build_ldpc(600, &reg(3), &reg(6), 4).unwrap();
        assert!(code.rank() > 290);
        assert_eq!(code.frozen_positions().len(), 300 - code.rank());
        let msg: Vec<u8> = (0..300).map(|i| (i % 3 == 0) as u8).collect();
        let w = code.encode(&msg).unwrap();
        assert!(code.syndrome_failures(&w).is_empty());
        assert!(code.frozen_positions().iter().all(|&p| w[p] == 0));
    }
}
