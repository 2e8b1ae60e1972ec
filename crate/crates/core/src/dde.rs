//! Discretized density evolution for LDGM and LDPC ensembles and for the
//! two-step decoding of their serial concatenation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::degree::{average_degree, complete_check_distribution, DegreeDistribution, Perspective};
use crate::error::{invalid, Result};
use crate::grid::{mixture, r_combine, ConvolutionMethod, LlrGrid, PowerLadder, QuantizedPmf};

/// Tolerance on the edge balance between the two sides of an ensemble.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// Default iteration budget for every decoding stage.
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Inner code; check nodes see a channel observation.
    LdgmInner,
    /// Outer LDGM code; check nodes see the super-channel observation.
    LdgmOuter,
    /// Outer LDPC code; check nodes carry no observation.
    LdpcOuter,
}

impl EnsembleKind {
    pub fn is_outer(self) -> bool {
        !matches!(self, EnsembleKind::LdgmInner)
    }

    pub fn checks_observed(self) -> bool {
        !matches!(self, EnsembleKind::LdpcOuter)
    }
}

/// Degree distributions (node perspective) of one code ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeEnsemble {
    vn_dist: DegreeDistribution,
    cn_dist: DegreeDistribution,
    kind: EnsembleKind,
    rate: f64,
}

/// Ratio of mean check degree to mean variable degree implied by `rate`.
fn degree_ratio(kind: EnsembleKind, rate: f64) -> f64 {
    match kind {
        EnsembleKind::LdgmInner | EnsembleKind::LdgmOuter => rate / (1.0 - rate),
        EnsembleKind::LdpcOuter => 1.0 / (1.0 - rate),
    }
}

impl CodeEnsemble {
    pub fn new(kind: EnsembleKind, vn_dist: DegreeDistribution, cn_dist: DegreeDistribution, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(invalid(format!("rate must lie in (0, 1), got {rate}")));
        }
        let vn_dist = vn_dist.to_node();
        let cn_dist = cn_dist.to_node();
        let want = average_degree(&vn_dist) * degree_ratio(kind, rate);
        let got = average_degree(&cn_dist);
        if (want - got).abs() > BALANCE_TOLERANCE * want.max(1.0) {
            return Err(invalid(format!(
                "edge imbalance: check degree average {got} but rate {rate} requires {want}"
            )));
        }
        Ok(CodeEnsemble { vn_dist, cn_dist, kind, rate })
    }

    /// Builds the ensemble with the check distribution completed from the
    /// variable distribution and the rate.
    pub fn with_completed_checks(kind: EnsembleKind, vn_dist: DegreeDistribution, rate: f64) -> Result<Self> {
        let vn_dist = vn_dist.to_node();
        let target_rate = match kind {
            EnsembleKind::LdgmInner | EnsembleKind::LdgmOuter => rate,
            // Same mean check degree as an LDGM code of rate 1/(2 - r).
            EnsembleKind::LdpcOuter => 1.0 / (2.0 - rate),
        };
        let cn_dist = complete_check_distribution(&vn_dist, target_rate)?;
        Self::new(kind, vn_dist, cn_dist, rate)
    }

    /// Regular ensemble; the rate follows from the two degrees.
    pub fn regular(kind: EnsembleKind, vn_degree: u32, cn_degree: u32) -> Result<Self> {
        let (dv, dc) = (vn_degree as f64, cn_degree as f64);
        let rate = match kind {
            EnsembleKind::LdgmInner | EnsembleKind::LdgmOuter => dc / (dv + dc),
            EnsembleKind::LdpcOuter => 1.0 - dv / dc,
        };
        Self::new(
            kind,
            DegreeDistribution::regular(Perspective::Node, vn_degree)?,
            DegreeDistribution::regular(Perspective::Node, cn_degree)?,
            rate,
        )
    }

    pub fn vn_dist(&self) -> &DegreeDistribution {
        &self.vn_dist
    }

    pub fn cn_dist(&self) -> &DegreeDistribution {
        &self.cn_dist
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// Serializable description of an ensemble: either a regular degree pair or
/// explicit distributions. A missing check distribution is completed from the
/// rate; a missing rate follows from the two distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regular: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vn: Option<DegreeDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cn: Option<DegreeDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

impl EnsembleSpec {
    pub fn regular(kind: EnsembleKind, vn_degree: u32, cn_degree: u32) -> Self {
        EnsembleSpec { kind, regular: Some([vn_degree, cn_degree]), vn: None, cn: None, rate: None }
    }

    pub fn build(&self) -> Result<CodeEnsemble> {
        match (self.regular, &self.vn, &self.cn, self.rate) {
            (Some([dv, dc]), None, None, None) => CodeEnsemble::regular(self.kind, dv, dc),
            (None, Some(vn), Some(cn), Some(rate)) => CodeEnsemble::new(self.kind, vn.clone(), cn.clone(), rate),
            (None, Some(vn), Some(cn), None) => {
                let (a, b) = (vn.average_degree(), cn.average_degree());
                let rate = match self.kind {
                    EnsembleKind::LdpcOuter => 1.0 - a / b,
                    _ => b / (a + b),
                };
                CodeEnsemble::new(self.kind, vn.clone(), cn.clone(), rate)
            }
            (None, Some(vn), None, Some(rate)) => CodeEnsemble::with_completed_checks(self.kind, vn.clone(), rate),
            _ => Err(invalid(
                "ensemble needs either `regular` alone, or `vn` with `cn` and/or `rate`",
            )),
        }
    }
}

/// How the `(d-1)`-fold check combination is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSchedule {
    /// One edge at a time, starting from the check observation. Cost grows
    /// linearly with the check degree.
    Sequential,
    /// Balanced tree by repeated squaring, observation combined last.
    #[default]
    Tree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdeOptions {
    pub grid: LlrGrid,
    pub max_iters: usize,
    pub convolution: ConvolutionMethod,
    pub check_schedule: CheckSchedule,
    /// Stop as soon as the error probability drops below this value.
    pub stop_below: Option<f64>,
    /// Consecutive iterations of negligible relative improvement that end a run.
    pub stall_window: usize,
    pub stall_tolerance: f64,
}

impl Default for DdeOptions {
    fn default() -> Self {
        DdeOptions {
            grid: LlrGrid::default(),
            max_iters: DEFAULT_MAX_ITERS,
            convolution: ConvolutionMethod::Direct,
            check_schedule: CheckSchedule::Tree,
            stop_below: None,
            stall_window: 5,
            stall_tolerance: 1e-12,
        }
    }
}

impl DdeOptions {
    pub fn with_grid(mut self, grid: LlrGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_stop_below(mut self, target: Option<f64>) -> Self {
        self.stop_below = target;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DdeStatus {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdeRecord {
    pub iteration: usize,
    pub error: f64,
    pub decision_mean: f64,
    /// Mean of the check-to-variable message pmf.
    pub message_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTrace {
    pub records: Vec<DdeRecord>,
    pub status: Option<DdeStatus>,
}

impl StageTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.error)
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.error)
    }

    /// First iteration whose error is at or below `level`.
    pub fn first_at_or_below(&self, level: f64) -> Option<usize> {
        self.records.iter().find(|r| r.error <= level).map(|r| r.iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DdeTrace {
    pub inner: StageTrace,
    pub outer: StageTrace,
}

impl DdeTrace {
    /// Error of the last stage that ran.
    pub fn final_error(&self) -> f64 {
        self.outer
            .final_error()
            .or_else(|| self.inner.final_error())
            .unwrap_or(f64::NAN)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "stage,iteration,error_prob,decision_mean")?;
        for (stage, trace) in [("inner", &self.inner), ("outer", &self.outer)] {
            for r in &trace.records {
                writeln!(w, "{stage},{},{:.16e},{:.16e}", r.iteration, r.error, r.decision_mean)?;
            }
        }
        Ok(())
    }
}

/// Channel LLR pmf of BPSK over AWGN with noise standard deviation `sigma`.
pub fn channel_pmf(grid: &LlrGrid, sigma: f64) -> Result<QuantizedPmf> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive and finite, got {sigma}")));
    }
    let s2 = sigma * sigma;
    QuantizedPmf::gaussian(grid, 2.0 / s2, 4.0 / s2)
}

/// `Σ Λ_i · (channel ⊗ msg^{⊗i})` over node-perspective variable degrees.
pub fn decision_pmf(msg: &QuantizedPmf, channel: &QuantizedPmf, vn_dist: &DegreeDistribution) -> Result<QuantizedPmf> {
    decision_pmf_with(ConvolutionMethod::Direct, msg, channel, vn_dist)
}

pub fn decision_pmf_with(
    method: ConvolutionMethod,
    msg: &QuantizedPmf,
    channel: &QuantizedPmf,
    vn_dist: &DegreeDistribution,
) -> Result<QuantizedPmf> {
    if msg.grid() != channel.grid() {
        return Err(invalid("message and channel pmfs live on different grids"));
    }
    let mut ladder = PowerLadder::new(method, msg.clone());
    node_mix(&mut ladder, channel, &vn_dist.to_node(), 0)
}

/// `Σ w_i · (seed ⊗ p^{⊗(i - offset)})`.
fn node_mix(ladder: &mut PowerLadder, seed: &QuantizedPmf, dist: &DegreeDistribution, offset: u32) -> Result<QuantizedPmf> {
    let parts: Vec<(f64, QuantizedPmf)> = dist
        .iter()
        .map(|(d, w)| (w, ladder.apply(seed, (d - offset) as usize)))
        .collect();
    mixture(parts.iter().map(|(w, p)| (*w, p)))
}

/// Check-node update `Σ ω_j R(obs, R^{j-1} p)` over edge-perspective degrees.
/// Without an observation, `R^0 p` is the certain message.
fn check_update(
    schedule: CheckSchedule,
    obs: Option<&QuantizedPmf>,
    p: &QuantizedPmf,
    edge_dist: &DegreeDistribution,
) -> Result<QuantizedPmf> {
    let grid = p.grid();
    let mut parts: Vec<(f64, QuantizedPmf)> = Vec::with_capacity(edge_dist.len());
    match schedule {
        CheckSchedule::Sequential => {
            let mut acc = obs.cloned().unwrap_or_else(|| QuantizedPmf::certain(grid));
            let mut folded = 0usize;
            for (d, w) in edge_dist.iter() {
                let target = (d - 1) as usize;
                while folded < target {
                    acc = r_combine(&acc, p)?;
                    folded += 1;
                }
                parts.push((w, acc.clone()));
            }
        }
        CheckSchedule::Tree => {
            let mut rungs = vec![p.clone()];
            for (d, w) in edge_dist.iter() {
                let mut e = (d - 1) as usize;
                let mut j = 0;
                let mut acc: Option<QuantizedPmf> = None;
                while e > 0 {
                    if e & 1 == 1 {
                        while rungs.len() <= j {
                            let last = rungs.last().expect("non-empty");
                            let next = r_combine(last, last)?;
                            rungs.push(next);
                        }
                        acc = Some(match acc {
                            None => rungs[j].clone(),
                            Some(a) => r_combine(&a, &rungs[j])?,
                        });
                    }
                    e >>= 1;
                    j += 1;
                }
                let msg = match (obs, acc) {
                    (Some(o), Some(a)) => r_combine(o, &a)?,
                    (Some(o), None) => o.clone(),
                    (None, Some(a)) => a,
                    (None, None) => QuantizedPmf::certain(grid),
                };
                parts.push((w, msg));
            }
        }
    }
    mixture(parts.iter().map(|(w, p)| (*w, p)))
}

/// Final state of a single-stage evolution.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub trace: StageTrace,
    pub decision: QuantizedPmf,
}

/// Core loop shared by every ensemble kind. `vn_obs` feeds the variable
/// nodes; `cn_obs` (if any) feeds the check nodes.
fn evolve(
    ensemble: &CodeEnsemble,
    vn_obs: &QuantizedPmf,
    cn_obs: Option<&QuantizedPmf>,
    opts: &DdeOptions,
) -> Result<StageOutcome> {
    if opts.max_iters == 0 {
        return Err(invalid("iteration budget must be at least 1"));
    }
    if let Some(o) = cn_obs {
        if o.grid() != vn_obs.grid() {
            return Err(invalid("observation pmfs live on different grids"));
        }
    }
    let grid = vn_obs.grid();
    let vn_node = ensemble.vn_dist.to_node();
    let vn_edge = ensemble.vn_dist.to_edge();
    let cn_edge = ensemble.cn_dist.to_edge();

    let mut trace = StageTrace::default();
    let mut u = QuantizedPmf::erasure(grid);
    let mut flat = 0usize;
    let mut decision = vn_obs.clone();
    for l in 1..=opts.max_iters {
        let mut ladder = PowerLadder::new(opts.convolution, u);
        let mut v = node_mix(&mut ladder, vn_obs, &vn_edge, 1)?;
        v.normalize();
        u = check_update(opts.check_schedule, cn_obs, &v, &cn_edge)?;
        u.normalize();
        let mut ladder = PowerLadder::new(opts.convolution, u.clone());
        decision = node_mix(&mut ladder, vn_obs, &vn_node, 0)?;
        let error = decision.error_mass();
        let prev = trace.final_error();
        trace.records.push(DdeRecord {
            iteration: l,
            error,
            decision_mean: decision.mean(),
            message_mean: u.mean(),
        });
        if error == 0.0 || opts.stop_below.is_some_and(|t| error < t) {
            trace.status = Some(DdeStatus::Converged);
            break;
        }
        if let Some(prev) = prev {
            if prev - error < opts.stall_tolerance * prev {
                flat += 1;
            } else {
                flat = 0;
            }
            if flat >= opts.stall_window {
                trace.status = Some(DdeStatus::Stalled);
                break;
            }
        }
    }
    if trace.status.is_none() {
        trace.status = Some(DdeStatus::MaxIterations);
    }
    Ok(StageOutcome { trace, decision })
}

/// Inner LDGM decoding over the AWGN channel with noise `sigma`.
pub fn evolve_inner(ensemble: &CodeEnsemble, sigma: f64, opts: &DdeOptions) -> Result<StageOutcome> {
    if ensemble.kind != EnsembleKind::LdgmInner {
        return Err(invalid(format!("expected an inner LDGM ensemble, got {:?}", ensemble.kind)));
    }
    let channel = channel_pmf(&opts.grid, sigma)?;
    evolve(ensemble, &channel, Some(&channel), opts)
}

/// Outer decoding driven by the super-channel pmf `q_u0`.
pub fn evolve_outer(ensemble: &CodeEnsemble, q_u0: &QuantizedPmf, opts: &DdeOptions) -> Result<StageOutcome> {
    if !ensemble.kind.is_outer() {
        return Err(invalid(format!("expected an outer ensemble, got {:?}", ensemble.kind)));
    }
    let cn_obs = ensemble.kind.checks_observed().then_some(q_u0);
    evolve(ensemble, q_u0, cn_obs, opts)
}

/// Inner decoding to completion followed by outer decoding of its output.
pub fn two_step_dde(inner: &CodeEnsemble, outer: &CodeEnsemble, sigma: f64, opts: &DdeOptions) -> Result<DdeTrace> {
    if !outer.kind.is_outer() {
        return Err(invalid(format!("expected an outer ensemble, got {:?}", outer.kind)));
    }
    let inner_opts = DdeOptions { stop_below: None, ..opts.clone() };
    let first = evolve_inner(inner, sigma, &inner_opts)?;
    let second = evolve_outer(outer, &first.decision, opts)?;
    Ok(DdeTrace { inner: first.trace, outer: second.trace })
}
