//! Finite-length construction, encoding, transmission and decoding of the
//! serial concatenation of an outer LDGM or LDPC code with an inner LDGM code.
//!
//! A codeword is laid out as `[s | t | p]`: the `k` information bits, the
//! outer parity bits and the inner parity bits. The inner code's variables
//! are `[s | t]`.

mod codes;
mod decoder;
mod graph;
mod simulate;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use codes::{build_ldgm, build_ldgm_sized, build_ldpc, build_ldpc_sized, LdgmCode, LdpcCode};
pub use decoder::{decode_ldgm, decode_ldpc, hard_decision, DecoderConfig, LLR_CLIP};
pub use graph::{degree_counts, random_graph, GraphHeader, SparseBipartiteGraph};
pub use simulate::{simulate_ber, wilson_interval, write_ber_csv, BerPoint, Schedule, SimulationConfig};

use crate::dde::{CodeEnsemble, EnsembleKind};
use crate::degree::RateSpec;
use crate::error::{invalid, Result};
use decoder::{checks_satisfied, clip, SpState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OuterCode {
    Ldgm(LdgmCode),
    Ldpc(LdpcCode),
}

impl OuterCode {
    pub fn graph(&self) -> &SparseBipartiteGraph {
        match self {
            OuterCode::Ldgm(c) => c.graph(),
            OuterCode::Ldpc(c) => c.graph(),
        }
    }

    pub fn message_len(&self) -> usize {
        match self {
            OuterCode::Ldgm(c) => c.message_len(),
            OuterCode::Ldpc(c) => c.message_len(),
        }
    }

    /// `[s | t]`.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        match self {
            OuterCode::Ldgm(c) => {
                let mut w = message.to_vec();
                w.extend(c.parity(message)?);
                Ok(w)
            }
            OuterCode::Ldpc(c) => c.encode(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcatenatedCode {
    outer: OuterCode,
    inner: LdgmCode,
    rates: RateSpec,
}

impl ConcatenatedCode {
    pub fn new(outer: OuterCode, inner: LdgmCode) -> Result<Self> {
        let k = outer.message_len();
        let k_prime = outer.graph().vn_count()
            + match &outer {
                OuterCode::Ldgm(c) => c.parity_len(),
                OuterCode::Ldpc(_) => 0,
            };
        if inner.message_len() != k_prime {
            return Err(invalid(format!(
                "inner code takes {} bits but the outer codeword has {k_prime}",
                inner.message_len()
            )));
        }
        let rates = RateSpec::new(k, k_prime, k_prime + inner.parity_len())?;
        Ok(ConcatenatedCode { outer, inner, rates })
    }

    /// Samples a code instance from a pair of ensembles with `k` information bits.
    pub fn build(inner: &CodeEnsemble, outer: &CodeEnsemble, k: usize, seed: u64) -> Result<Self> {
        if inner.kind() != EnsembleKind::LdgmInner || !outer.kind().is_outer() {
            return Err(invalid("expected an inner LDGM ensemble and an outer ensemble"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (outer_seed, inner_seed): (u64, u64) = (rng.random(), rng.random());
        let (ov, oc) = (outer.vn_dist(), outer.cn_dist());
        let (ova, oca) = (ov.average_degree(), oc.average_degree());
        let outer_code = match outer.kind() {
            EnsembleKind::LdpcOuter => {
                let m = (k as f64 * ova / (oca - ova)).round() as usize;
                OuterCode::Ldpc(build_ldpc_sized(k + m, m, ov, oc, outer_seed)?)
            }
            _ => OuterCode::Ldgm(build_ldgm(k, ov, oc, outer_seed)?),
        };
        let k_prime = match &outer_code {
            OuterCode::Ldgm(c) => k + c.parity_len(),
            OuterCode::Ldpc(c) => c.codeword_len(),
        };
        let inner_code = build_ldgm(k_prime, inner.vn_dist(), inner.cn_dist(), inner_seed)?;
        Self::new(outer_code, inner_code)
    }

    pub fn outer(&self) -> &OuterCode {
        &self.outer
    }

    pub fn inner(&self) -> &LdgmCode {
        &self.inner
    }

    pub fn rates(&self) -> RateSpec {
        self.rates
    }

    pub fn k(&self) -> usize {
        self.rates.k
    }

    pub fn k_prime(&self) -> usize {
        self.rates.k_prime
    }

    pub fn n(&self) -> usize {
        self.rates.n
    }

    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k() {
            return Err(invalid(format!("message has {} bits, code expects {}", message.len(), self.k())));
        }
        let mut o = self.outer.encode(message)?;
        let p = self.inner.parity(&o)?;
        o.extend(p);
        Ok(o)
    }

    fn check_len(&self, llr: &[f64]) -> Result<()> {
        if llr.len() != self.n() {
            return Err(invalid(format!("got {} channel values, code length is {}", llr.len(), self.n())));
        }
        Ok(())
    }

    /// Inner decoding to completion, then outer decoding of the inner
    /// posteriors.
    pub fn decode_two_step(&self, llr: &[f64], cfg: &DecoderConfig) -> Result<DecodeResult> {
        self.check_len(llr)?;
        let (k, kp) = (self.k(), self.k_prime());
        let (inner_post, inner_iterations) =
            decode_ldgm(self.inner.graph(), &llr[..kp], &llr[kp..], cfg.inner_iters, cfg.early_stop, None);
        let (post, outer_iterations) = match &self.outer {
            OuterCode::Ldgm(c) => {
                decode_ldgm(c.graph(), &inner_post[..k], &inner_post[k..], cfg.outer_iters, cfg.early_stop, None)
            }
            OuterCode::Ldpc(c) => decode_ldpc(c.graph(), &inner_post, cfg.outer_iters, cfg.early_stop),
        };
        Ok(DecodeResult { info_llr: post[..k].to_vec(), inner_iterations, outer_iterations })
    }

    /// Inner and outer passes interleaved every iteration, exchanging
    /// extrinsic information on the shared `[s | t]` bits.
    pub fn decode_joint(&self, llr: &[f64], cfg: &DecoderConfig) -> Result<DecodeResult> {
        self.check_len(llr)?;
        let (k, kp) = (self.k(), self.k_prime());
        let ig = self.inner.graph();
        let og = self.outer.graph();
        let channel: Vec<f64> = llr[..kp].iter().map(|&x| clip(x)).collect();
        let inner_obs: Vec<f64> = llr[kp..].iter().map(|&x| clip(x)).collect();

        let mut inner = SpState::new(ig);
        let mut outer = SpState::new(og);
        let mut outer_ext = vec![0.0; kp];
        let mut inner_ext = vec![0.0; kp];
        let mut inner_prior = channel.clone();
        let mut to_outer = channel.clone();
        let mut o_ext = vec![0.0; og.vn_count()];
        let mut verdict = vec![0.0; og.cn_count()];
        let is_ldpc = matches!(self.outer, OuterCode::Ldpc(_));
        inner.vn_pass(ig, &inner_prior);
        outer.vn_pass(og, &to_outer[..og.vn_count()]);

        let mut used = 0;
        for _ in 0..cfg.joint_iters {
            used += 1;
            let ci = inner.cn_pass(ig, Some(&inner_obs), None);
            inner.vn_pass(ig, &inner_prior);
            inner.extrinsic(ig, &mut inner_ext);
            for i in 0..kp {
                to_outer[i] = clip(channel[i] + inner_ext[i]);
            }
            let (priors, obs) = if is_ldpc { (&to_outer[..], None) } else { (&to_outer[..k], Some(&to_outer[k..])) };
            let co = outer.cn_pass(og, obs, None);
            outer.vn_pass(og, priors);
            outer.extrinsic(og, &mut o_ext);
            outer_ext[..og.vn_count()].copy_from_slice(&o_ext);
            if !is_ldpc {
                outer.check_verdict(og, &mut verdict);
                outer_ext[k..].copy_from_slice(&verdict);
            }
            for i in 0..kp {
                inner_prior[i] = clip(channel[i] + outer_ext[i]);
            }
            if cfg.early_stop && ci.max(co) < 1e-9 {
                break;
            }
            if cfg.early_stop && is_ldpc {
                let post: Vec<f64> = (0..kp).map(|i| to_outer[i] + o_ext[i]).collect();
                if checks_satisfied(og, &post) {
                    break;
                }
            }
        }
        let info_llr = (0..k).map(|i| to_outer[i] + o_ext[i]).collect();
        Ok(DecodeResult { info_llr, inner_iterations: used, outer_iterations: used })
    }

    /// Inner-decoder audit: the largest excess of any check-to-variable
    /// magnitude over its check's channel magnitude or its smallest other
    /// incoming magnitude.
    pub fn audit_inner(&self, llr: &[f64], iters: usize) -> Result<f64> {
        self.check_len(llr)?;
        let kp = self.k_prime();
        let mut worst = f64::NEG_INFINITY;
        decode_ldgm(self.inner.graph(), &llr[..kp], &llr[kp..], iters, false, Some(&mut worst));
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Posterior LLRs of the information bits.
    pub info_llr: Vec<f64>,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

impl DecodeResult {
    pub fn bits(&self) -> Vec<u8> {
        self.info_llr.iter().map(|&l| hard_decision(l)).collect()
    }

    /// Positions that differ from `reference`; an exact-zero LLR always
    /// counts as wrong.
    pub fn bit_errors(&self, reference: &[u8]) -> usize {
        self.info_llr
            .iter()
            .zip(reference)
            .filter(|&(&l, &b)| l == 0.0 || hard_decision(l) != b)
            .count()
    }
}

/// BPSK (0 → +1) over AWGN, returned as clipped channel LLRs `2y/σ²`.
pub fn transmit(bits: &[u8], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    transmit_with(bits, sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn transmit_with(bits: &[u8], sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive and finite, got {sigma}")));
    }
    let scale = 2.0 / (sigma * sigma);
    Ok(bits
        .iter()
        .map(|&b| {
            let x = if b == 0 { 1.0 } else { -1.0 };
            let noise: f64 = rng.sample(StandardNormal);
            clip(scale * (x + sigma * noise))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degree::{DegreeDistribution, Perspective};

    fn code_c(k: usize, seed: u64) -> ConcatenatedCode {
        let inner = CodeEnsemble::regular(EnsembleKind::LdgmInner, 7, 7).unwrap();
        let outer = CodeEnsemble::regular(EnsembleKind::LdgmOuter, 4, 200).unwrap();
        ConcatenatedCode::build(&inner, &outer, k, seed).unwrap()
    }

    fn ldpc_gm(k: usize, seed: u64) -> ConcatenatedCode {
        let inner = CodeEnsemble::regular(EnsembleKind::LdgmInner, 7, 7).unwrap();
        let outer = CodeEnsemble::regular(EnsembleKind::LdpcOuter, 4, 204).unwrap();
        ConcatenatedCode::build(&inner, &outer, k, seed).unwrap()
    }

    #[test]
    fn dimensions() {
        let c = code_c(2000, 1);
        assert_eq!((c.k(), c.k_prime(), c.n()), (2000, 2040, 4080));
        assert!((c.rates().rate() - 25.0 / 51.0).abs() < 1e-12);
        let c = ldpc_gm(2000, 1);
        assert_eq!((c.k(), c.k_prime(), c.n()), (2000, 2040, 4080));
        let inner = CodeEnsemble::regular(EnsembleKind::LdgmInner, 7, 7).unwrap();
        let g = build_ldgm(2100, inner.vn_dist(), inner.cn_dist(), 3).unwrap();
        assert_eq!(g.graph().edge_count(), 14700);
    }

    #[test]
    fn encoder_layout_and_linearity() {
        let c = code_c(2000, 2);
        assert!(c.encode(&vec![0; 2000]).unwrap().iter().all(|&b| b == 0));
        assert!(c.encode(&[0; 3]).is_err());
        // A single information bit maps onto its generator column.
        let mut s = vec![0u8; 2000];
        s[17] = 1;
        let o = c.encode(&s).unwrap();
        let OuterCode::Ldgm(outer) = c.outer() else { panic!() };
        let mut want = vec![0u8; c.n()];
        want[17] = 1;
        for j in 0..outer.parity_len() {
            if outer.graph().cn_neighbors(j).contains(&17) {
                want[2000 + j] ^= 1;
            }
        }
        for j in 0..c.inner().parity_len() {
            let nb = c.inner().graph().cn_neighbors(j);
            want[2040 + j] = nb.iter().fold(0, |a, &v| a ^ want[v as usize]);
        }
        assert_eq!(o, want);
        assert_eq!(o, c.encode(&s).unwrap());
    }

    #[test]
    fn ldpc_outer_codewords_check() {
        let c = ldpc_gm(2000, 5);
        let s: Vec<u8> = (0..2000).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        let o = c.encode(&s).unwrap();
        let OuterCode::Ldpc(outer) = c.outer() else { panic!() };
        assert!(outer.syndrome_failures(&o[..2040]).is_empty());
    }

    #[test]
    fn transmit_properties() {
        let bits: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
        let y = transmit(&bits, 1e-6, 9).unwrap();
        assert!(bits.iter().zip(&y).all(|(&b, &l)| hard_decision(l) == b));
        assert_eq!(y, transmit(&bits, 1e-6, 9).unwrap());
        let zeros = vec![0u8; 100_000];
        let y = transmit(&zeros, 1.0, 4).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 2.0).abs() < 0.05, "{mean}");
        assert!(transmit(&zeros, 0.0, 1).is_err());
    }

    #[test]
    fn noiseless_decoding_recovers_message() {
        for c in [code_c(2000, 3), ldpc_gm(2000, 3)] {
            let s: Vec<u8> = (0..2000).map(|i| ((i * 13) % 5 < 2) as u8).collect();
            let o = c.encode(&s).unwrap();
            let y = transmit(&o, 1e-3, 1).unwrap();
            let one = DecoderConfig { inner_iters: 1, outer_iters: 1, joint_iters: 1, early_stop: false };
            for r in [c.decode_two_step(&y, &one).unwrap(), c.decode_joint(&y, &one).unwrap()] {
                assert_eq!(r.bit_errors(&s), 0);
                assert_eq!(r.bits(), s);
            }
        }
    }

    #[test]
    fn inner_messages_respect_the_ceiling() {
        let c = code_c(2000, 4);
        let s = vec![0u8; 2000];
        let o = c.encode(&s).unwrap();
        let sigma = crate::analysis::sigma_from_eb_no(1.0, c.rates().rate());
        let y = transmit(&o, sigma, 2).unwrap();
        let worst = c.audit_inner(&y, 30).unwrap();
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn irregular_histogram() {
        let lambda = DegreeDistribution::new(Perspective::Node, [(6, 0.2063), (7, 0.7472), (100, 0.0465)]).unwrap();
        let inner = CodeEnsemble::with_completed_checks(EnsembleKind::LdgmInner, lambda.clone(), 0.5).unwrap();
        let code = build_ldgm(10200, inner.vn_dist(), inner.cn_dist(), 8).unwrap();
        let hist = code.graph().vn_degree_histogram();
        for (d, w) in lambda.iter() {
            let got = *hist.get(&(d as usize)).unwrap_or(&0) as f64;
            assert!((got - w * 10200.0).abs() <= 1.0, "degree {d}: {got}");
        }
        assert_eq!(code.parity_len(), 10200);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let c = code_c(2000, 1);
        assert!(c.decode_two_step(&[0.0; 5], &DecoderConfig::default()).is_err());
        assert!(c.decode_joint(&[0.0; 5], &DecoderConfig::default()).is_err());
    }
}
