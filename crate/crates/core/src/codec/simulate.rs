use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decoder::DecoderConfig;
use super::{transmit_with, ConcatenatedCode};
use crate::analysis::sigma_from_eb_no;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    TwoStep,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub decoder: DecoderConfig,
    pub schedule: Schedule,
    pub max_blocks: usize,
    /// Stop a point early once this many bit errors have been seen.
    pub min_errors: usize,
    pub seed: u64,
    /// Blocks decoded between stopping checks.
    pub batch: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            decoder: DecoderConfig::default(),
            schedule: Schedule::TwoStep,
            max_blocks: 1000,
            min_errors: usize::MAX,
            seed: 0,
            batch: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub eb_no_db: f64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub blocks: usize,
    pub bit_errors: usize,
}

/// Wilson score interval for `errors` successes in `trials` at normal quantile `z`.
pub fn wilson_interval(errors: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Independent generator for one block, fixed by the run seed and the
/// block's coordinates, so results do not depend on scheduling.
fn block_rng(seed: u64, point: usize, block: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(point as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(block as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn run_block(code: &ConcatenatedCode, sigma: f64, cfg: &SimulationConfig, point: usize, block: usize) -> Result<usize> {
    let mut rng = block_rng(cfg.seed, point, block);
    let message: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
    let word = code.encode(&message)?;
    let llr = transmit_with(&word, sigma, &mut rng)?;
    let result = match cfg.schedule {
        Schedule::TwoStep => code.decode_two_step(&llr, &cfg.decoder)?,
        Schedule::Joint => code.decode_joint(&llr, &cfg.decoder)?,
    };
    Ok(result.bit_errors(&message))
}

/// Monte-Carlo bit-error rate of the information bits at each `E_b/N_o`.
pub fn simulate_ber(code: &ConcatenatedCode, eb_no_list: &[f64], cfg: &SimulationConfig) -> Result<Vec<BerPoint>> {
    if cfg.max_blocks == 0 || cfg.batch == 0 {
        return Err(invalid("max_blocks and batch must be at least 1"));
    }
    let rate = code.rates().rate();
    let mut points = Vec::with_capacity(eb_no_list.len());
    for (pi, &db) in eb_no_list.iter().enumerate() {
        let sigma = sigma_from_eb_no(db, rate);
        let (mut blocks, mut errors) = (0usize, 0usize);
        while blocks < cfg.max_blocks && errors < cfg.min_errors {
            let end = (blocks + cfg.batch).min(cfg.max_blocks);
            let found: Vec<usize> = (blocks..end)
                .into_par_iter()
                .map(|b| run_block(code, sigma, cfg, pi, b))
                .collect::<Result<_>>()?;
            errors += found.iter().sum::<usize>();
            blocks = end;
        }
        let bits = blocks * code.k();
        let (ci_low, ci_high) = wilson_interval(errors, bits, 1.959_963_984_540_054);
        log::info!("{db:.3} dB: {errors} errors in {blocks} blocks");
        points.push(BerPoint {
            eb_no_db: db,
            ber: errors as f64 / bits as f64,
            ci_low,
            ci_high,
            blocks,
            bit_errors: errors,
        });
    }
    Ok(points)
}

pub fn write_ber_csv(points: &[BerPoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "eb_no_db,ber,ci_low,ci_high,blocks")?;
    for p in points {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{}", p.eb_no_db, p.ber, p.ci_low, p.ci_high, p.blocks)?;
    }
    Ok(())
}
