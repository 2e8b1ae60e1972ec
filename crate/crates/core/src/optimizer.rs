//! Differential-evolution search for inner-code degree distributions that
//! reach a given outer code's critical BER at the lowest `E_b/N_o`.
//!
//! Each level of `E_b/N_o` runs DE/rand/1/bin on the simplex of variable-node
//! coefficients; the check side is always the two-degree completion. Levels
//! are chosen by bisection between the Shannon limit and a feasible start.
//! Population members are screened with a cheap DDE budget, and a level only
//! counts as achieved after a full-fidelity run confirms the best member.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{outer_threshold, shannon_limit, sigma_from_eb_no, ThresholdOptions};
use crate::dde::{evolve_inner, CodeEnsemble, DdeOptions, EnsembleKind, EnsembleSpec};
use crate::degree::{complete_check_distribution, DegreeDistribution, Perspective};
use crate::error::{invalid, Error, Result};
use crate::grid::{ConvolutionMethod, LlrGrid, DEFAULT_L_MAX};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Relative drop of the best screened error that resets the patience count.
const IMPROVEMENT_TOLERANCE: f64 = 1e-3;

/// Grid resolution and iteration count for one class of DDE runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdeBudget {
    pub n_bits: u32,
    pub iterations: usize,
}

impl DdeBudget {
    pub fn options(&self, method: ConvolutionMethod) -> Result<DdeOptions> {
        let mut opts = DdeOptions::default()
            .with_grid(LlrGrid::new(DEFAULT_L_MAX, self.n_bits)?)
            .with_max_iters(self.iterations);
        opts.convolution = method;
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    /// Variable-node degrees the search may use.
    pub degrees: Vec<u32>,
    pub outer: EnsembleSpec,
    /// Overall rate of the concatenation.
    pub rate: f64,
    pub population: usize,
    pub weight: f64,
    pub crossover: f64,
    /// Generations per `E_b/N_o` level.
    pub generations: usize,
    /// A level is abandoned after this many generations in which the best
    /// screened error improves by less than 0.1%.
    pub patience: usize,
    pub screening: DdeBudget,
    pub confirmation: DdeBudget,
    /// Members whose screened error is within this factor of the critical BER
    /// are confirmed at full fidelity.
    pub confirm_ratio: f64,
    pub precision_db: f64,
    /// First level tried; defaults to one dB above the Shannon limit.
    pub start_db: Option<f64>,
    /// Overrides the critical BER computed from the outer threshold.
    pub critical_ber: Option<f64>,
    pub seed: u64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            degrees: vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 50, 100],
            outer: EnsembleSpec::regular(EnsembleKind::LdgmOuter, 4, 200),
            rate: 25.0 / 51.0,
            population: 30,
            weight: 0.85,
            crossover: 0.7,
            generations: 150,
            patience: 20,
            screening: DdeBudget { n_bits: 10, iterations: 100 },
            confirmation: DdeBudget { n_bits: 10, iterations: 200 },
            confirm_ratio: 4.0,
            precision_db: 0.01,
            start_db: None,
            critical_ber: None,
            seed: 0,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() || self.degrees.contains(&0) {
            return Err(invalid("candidate degrees must be non-empty and positive"));
        }
        let mut sorted = self.degrees.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.degrees.len() {
            return Err(invalid("candidate degrees must be distinct"));
        }
        if self.population < 4 {
            return Err(invalid(format!("population {} is below 4", self.population)));
        }
        if !(self.crossover > 0.0 && self.crossover <= 1.0) {
            return Err(invalid(format!("crossover rate {} outside (0, 1]", self.crossover)));
        }
        if !(self.weight > 0.0 && self.weight < 2.0) {
            return Err(invalid(format!("DE weight {} outside (0, 2)", self.weight)));
        }
        if self.generations == 0 || self.patience == 0 {
            return Err(invalid("generations and patience must be at least 1"));
        }
        if !(self.precision_db > 0.0) || !(self.confirm_ratio >= 1.0) {
            return Err(invalid("precision must be positive and confirm_ratio at least 1"));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(invalid(format!("rate {} outside (0, 1)", self.rate)));
        }
        if let Some(c) = self.critical_ber {
            if !(c > 0.0 && c < 0.5) {
                return Err(invalid(format!("critical BER {c} outside (0, 0.5)")));
            }
        }
        let outer = self.outer.build()?;
        if !outer.kind().is_outer() {
            return Err(invalid("the fixed code must be an outer ensemble"));
        }
        let inner_rate = self.rate / outer.rate();
        if !(inner_rate > 0.0 && inner_rate < 1.0) {
            return Err(invalid(format!("overall rate {} is not below the outer rate {}", self.rate, outer.rate())));
        }
        Ok(())
    }
}

/// An inner-code degree distribution pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub vn_dist: DegreeDistribution,
    pub cn_dist: DegreeDistribution,
    pub feasible_at_db: Option<f64>,
}

impl Candidate {
    pub fn new(vn_dist: DegreeDistribution, inner_rate: f64) -> Result<Self> {
        let cn_dist = complete_check_distribution(&vn_dist, inner_rate)?;
        Ok(Candidate { vn_dist, cn_dist, feasible_at_db: None })
    }

    /// Builds the candidate from coefficients on `degrees`.
    pub fn from_coefficients(degrees: &[u32], coeffs: &[f64], inner_rate: f64) -> Result<Self> {
        let vn = DegreeDistribution::new(Perspective::Node, degrees.iter().copied().zip(coeffs.iter().copied()))?;
        Self::new(vn, inner_rate)
    }

    pub fn ensemble(&self, inner_rate: f64) -> Result<CodeEnsemble> {
        CodeEnsemble::new(EnsembleKind::LdgmInner, self.vn_dist.clone(), self.cn_dist.clone(), inner_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub final_error: f64,
    pub feasible: bool,
}

/// Runs inner DDE for `candidate` at `eb_no_db` (overall rate `rate`) and
/// compares the final error with `critical`.
pub fn evaluate_candidate(
    candidate: &Candidate,
    eb_no_db: f64,
    rate: f64,
    inner_rate: f64,
    critical: f64,
    dde: &DdeOptions,
) -> Result<Evaluation> {
    let ensemble = candidate.ensemble(inner_rate)?;
    let opts = dde.clone().with_stop_below(Some(critical));
    let out = evolve_inner(&ensemble, sigma_from_eb_no(eb_no_db, rate), &opts)?;
    let final_error = out.trace.final_error().unwrap_or(f64::INFINITY);
    Ok(Evaluation { final_error, feasible: final_error <= critical })
}

/// Clips negatives to zero and rescales to sum one. Returns `None` for a
/// vector with no positive mass.
pub fn project_to_simplex(v: &[f64]) -> Option<Vec<f64>> {
    let clipped: Vec<f64> = v.iter().map(|&x| if x.is_finite() { x.max(0.0) } else { 0.0 }).collect();
    let sum: f64 = clipped.iter().sum();
    (sum > 0.0).then(|| clipped.iter().map(|x| x / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub level: usize,
    pub eb_no_db: f64,
    pub generation: usize,
    pub best_error: f64,
    pub mean_error: f64,
    /// Members whose screened error reaches the critical BER.
    pub screened_feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLog {
    pub level: usize,
    pub eb_no_db: f64,
    pub feasible: bool,
    pub generations: usize,
    pub best_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchHistory {
    pub generations: Vec<GenerationLog>,
    pub levels: Vec<LevelLog>,
}

/// Everything needed to continue a search from a generation boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub critical_ber: f64,
    pub level: usize,
    pub eb_no_db: f64,
    /// Highest level known to fail, or the Shannon limit.
    pub infeasible_db: f64,
    /// Lowest confirmed level, once one exists.
    pub feasible_db: Option<f64>,
    pub best: Option<Candidate>,
    pub generation: usize,
    pub stale: usize,
    pub level_best: f64,
    pub population: Vec<Vec<f64>>,
    /// Members that failed full-fidelity confirmation at this level.
    pub rejected: Vec<Vec<f64>>,
    pub history: SearchHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub threshold_db: f64,
    pub critical_ber: f64,
    pub history: SearchHistory,
}

/// Generator for one member's trial vector, fixed by the seed and the
/// member's coordinates in the search.
fn member_rng(seed: u64, level: usize, generation: usize, member: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(level as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(generation as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(member as u64);
    rng
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn initial_population(cfg: &OptimizationConfig) -> Vec<Vec<f64>> {
    (0..cfg.population)
        .map(|i| {
            let mut rng = member_rng(cfg.seed, usize::MAX, 0, i);
            let raw: Vec<f64> = cfg.degrees.iter().map(|_| rng.sample::<f64, _>(Exp1)).collect();
            project_to_simplex(&raw).unwrap_or_else(|| vec![1.0 / cfg.degrees.len() as f64; cfg.degrees.len()])
        })
        .collect()
}

fn trial_vector(cfg: &OptimizationConfig, population: &[Vec<f64>], i: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let np = population.len();
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..np);
        if r != i && !taken.contains(&r) {
            return r;
        }
    };
    let r1 = pick(&[]);
    let r2 = pick(&[r1]);
    let r3 = pick(&[r1, r2]);
    let dim = cfg.degrees.len();
    let forced = rng.random_range(0..dim);
    let target = &population[i];
    let trial: Vec<f64> = (0..dim)
        .map(|j| {
            if j == forced || rng.random::<f64>() < cfg.crossover {
                population[r1][j] + cfg.weight * (population[r2][j] - population[r3][j])
            } else {
                target[j]
            }
        })
        .collect();
    project_to_simplex(&trial).unwrap_or_else(|| target.clone())
}

enum LevelResult {
    Feasible(Candidate),
    Infeasible,
}

/// Search state plus the fixed quantities derived from the configuration.
struct Search<'a, F> {
    cfg: &'a OptimizationConfig,
    inner_rate: f64,
    screen: DdeOptions,
    confirm: DdeOptions,
    state: Checkpoint,
    observer: F,
}

impl<F: FnMut(&Checkpoint) -> Result<()>> Search<'_, F> {
    /// Screened error of each vector; vectors that admit no check
    /// distribution score infinity.
    fn screen(&self, vectors: &[Vec<f64>], cache: &mut HashMap<Vec<u64>, f64>) -> Result<Vec<f64>> {
        let mut todo: Vec<&Vec<f64>> = Vec::new();
        for v in vectors {
            if !cache.contains_key(&key(v)) && !todo.iter().any(|t| *t == v) {
                todo.push(v);
            }
        }
        let (cfg, inner_rate, screen) = (self.cfg, self.inner_rate, &self.screen);
        let (db, critical) = (self.state.eb_no_db, self.state.critical_ber);
        let scores: Vec<f64> = todo
            .par_iter()
            .map(|v| match Candidate::from_coefficients(&cfg.degrees, v, inner_rate) {
                Ok(c) => evaluate_candidate(&c, db, cfg.rate, inner_rate, critical, screen).map(|e| e.final_error),
                Err(Error::Infeasible(_)) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        for (v, s) in todo.into_iter().zip(scores) {
            cache.insert(key(v), s);
        }
        Ok(vectors.iter().map(|v| cache[&key(v)]).collect())
    }

    /// Confirms the best member at full fidelity if it is a plausible pass,
    /// or unconditionally when `last` is set.
    fn try_confirm(&mut self, fitness: &[f64], last: bool) -> Result<Option<Candidate>> {
        let (best_i, &best) = fitness
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("population is non-empty");
        let v = &self.state.population[best_i];
        let plausible = best <= self.state.critical_ber * self.cfg.confirm_ratio;
        if !(best.is_finite() && (plausible || last)) || self.state.rejected.contains(v) {
            return Ok(None);
        }
        let mut c = Candidate::from_coefficients(&self.cfg.degrees, v, self.inner_rate)?;
        let ev = evaluate_candidate(&c, self.state.eb_no_db, self.cfg.rate, self.inner_rate, self.state.critical_ber, &self.confirm)?;
        log::debug!("confirmation at {:.4} dB: {:e}", self.state.eb_no_db, ev.final_error);
        if ev.feasible {
            c.feasible_at_db = Some(self.state.eb_no_db);
            Ok(Some(c))
        } else {
            self.state.rejected.push(v.clone());
            Ok(None)
        }
    }

    fn run_level(&mut self) -> Result<LevelResult> {
        let mut cache = HashMap::new();
        let cfg = self.cfg;
        let mut fitness = self.screen(&self.state.population, &mut cache)?;
        let s = &mut self.state;
        s.level_best = fitness.iter().copied().fold(s.level_best, f64::min);
        loop {
            let s = &self.state;
            let last = s.generation >= cfg.generations || s.stale >= cfg.patience;
            if let Some(c) = self.try_confirm(&fitness, last)? {
                return Ok(LevelResult::Feasible(c));
            }
            if last {
                return Ok(LevelResult::Infeasible);
            }
            let s = &self.state;
            let trials: Vec<Vec<f64>> = (0..s.population.len())
                .map(|i| {
                    let mut rng = member_rng(cfg.seed, s.level, s.generation, i);
                    trial_vector(cfg, &s.population, i, &mut rng)
                })
                .collect();
            let trial_fitness = self.screen(&trials, &mut cache)?;
            for (i, (t, tf)) in trials.into_iter().zip(trial_fitness).enumerate() {
                if tf <= fitness[i] {
                    self.state.population[i] = t;
                    fitness[i] = tf;
                }
            }
            let best = fitness.iter().copied().fold(f64::INFINITY, f64::min);
            let finite: Vec<f64> = fitness.iter().copied().filter(|f| f.is_finite()).collect();
            let s = &mut self.state;
            if best < s.level_best * (1.0 - IMPROVEMENT_TOLERANCE) {
                s.stale = 0;
            } else {
                s.stale += 1;
            }
            s.level_best = s.level_best.min(best);
            s.history.generations.push(GenerationLog {
                level: s.level,
                eb_no_db: s.eb_no_db,
                generation: s.generation,
                best_error: best,
                mean_error: if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 },
                screened_feasible: fitness.iter().filter(|&&f| f <= s.critical_ber).count(),
            });
            s.generation += 1;
            (self.observer)(&self.state)?;
        }
    }

    fn run(mut self) -> Result<SearchOutcome> {
        loop {
            let result = self.run_level()?;
            let s = &mut self.state;
            s.history.levels.push(LevelLog {
                level: s.level,
                eb_no_db: s.eb_no_db,
                feasible: matches!(result, LevelResult::Feasible(_)),
                generations: s.generation,
                best_error: s.level_best,
            });
            match result {
                LevelResult::Feasible(c) => {
                    log::info!("level {:.4} dB achieved", s.eb_no_db);
                    s.feasible_db = Some(s.eb_no_db);
                    s.best = Some(c);
                }
                LevelResult::Infeasible if s.feasible_db.is_none() => {
                    return Err(Error::SearchFailure(format!(
                        "no candidate reaches critical BER {:e} at the start level {:.3} dB; best screened error {:e}",
                        s.critical_ber, s.eb_no_db, s.level_best
                    )));
                }
                LevelResult::Infeasible => {
                    log::info!("level {:.4} dB not achieved", s.eb_no_db);
                    s.infeasible_db = s.eb_no_db;
                }
            }
            let hi = s.feasible_db.expect("set above");
            if hi - s.infeasible_db <= self.cfg.precision_db {
                let best = s.best.clone().expect("feasible level has a candidate");
                return Ok(SearchOutcome {
                    best,
                    threshold_db: hi,
                    critical_ber: s.critical_ber,
                    history: std::mem::take(&mut s.history),
                });
            }
            s.level += 1;
            s.eb_no_db = 0.5 * (hi + s.infeasible_db);
            s.generation = 0;
            s.stale = 0;
            s.level_best = f64::INFINITY;
            s.rejected.clear();
            (self.observer)(&self.state)?;
        }
    }
}

/// Starting state for a fresh search. Computes the outer code's critical BER
/// unless the configuration supplies one.
pub fn initial_checkpoint(cfg: &OptimizationConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let outer = cfg.outer.build()?;
    let critical_ber = match cfg.critical_ber {
        Some(c) => c,
        None => {
            let dde = cfg.confirmation.options(ConvolutionMethod::Direct)?;
            outer_threshold(&outer, &ThresholdOptions { dde, ..Default::default() })?.critical_ber
        }
    };
    let limit = shannon_limit(cfg.rate)?;
    let start = cfg.start_db.unwrap_or(limit + 1.0);
    if !(start > limit) {
        return Err(invalid(format!("start level {start} dB is not above the Shannon limit {limit:.4} dB")));
    }
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        seed: cfg.seed,
        critical_ber,
        level: 0,
        eb_no_db: start,
        infeasible_db: limit,
        feasible_db: None,
        best: None,
        generation: 0,
        stale: 0,
        level_best: f64::INFINITY,
        population: initial_population(cfg),
        rejected: Vec::new(),
        history: SearchHistory::default(),
    })
}

pub fn de_search(cfg: &OptimizationConfig) -> Result<SearchOutcome> {
    de_search_from(cfg, initial_checkpoint(cfg)?, |_| Ok(()))
}

/// Runs a search from `state`, calling `observer` after every generation and
/// every change of level. A resumed search follows the same path as an
/// uninterrupted one.
pub fn de_search_from(
    cfg: &OptimizationConfig,
    state: Checkpoint,
    observer: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if state.version != CHECKPOINT_VERSION || state.seed != cfg.seed {
        return Err(invalid("checkpoint does not belong to this configuration"));
    }
    if state.population.len() != cfg.population || state.population.iter().any(|v| v.len() != cfg.degrees.len()) {
        return Err(invalid("checkpoint population does not match the configuration"));
    }
    let outer = cfg.outer.build()?;
    let search = Search {
        cfg,
        inner_rate: cfg.rate / outer.rate(),
        screen: cfg.screening.options(ConvolutionMethod::Fast)?,
        confirm: cfg.confirmation.options(ConvolutionMethod::Direct)?,
        state,
        observer,
    };
    search.run()
}
