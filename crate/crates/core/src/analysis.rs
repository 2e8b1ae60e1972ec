//! Thresholds, critical BER, convergence profiles and closed-form error-floor
//! bounds.

use std::io::Write;

use gauss_quad::GaussHermite;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde::{channel_pmf, evolve_inner, evolve_outer, two_step_dde, CodeEnsemble, DdeOptions, EnsembleKind};
use crate::error::{invalid, Error, Result};

pub use crate::special::q_function;

/// Decoding counts as successful once the error probability is below this.
pub const SUCCESS_TARGET: f64 = 1e-9;

/// `10·log10(1/(2·rate·σ²))`.
pub fn eb_no_from_sigma(sigma: f64, rate: f64) -> f64 {
    10.0 * (1.0 / (2.0 * rate * sigma * sigma)).log10()
}

pub fn sigma_from_eb_no(eb_no_db: f64, rate: f64) -> f64 {
    (1.0 / (2.0 * rate * 10f64.powf(eb_no_db / 10.0))).sqrt()
}

/// One operating point, viewed both as a noise level and as `E_b/N_o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPoint {
    pub sigma: f64,
    pub eb_no_db: f64,
    pub rate: f64,
}

impl ChannelPoint {
    pub fn from_sigma(sigma: f64, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive and finite, got {sigma}")));
        }
        Ok(ChannelPoint { sigma, eb_no_db: eb_no_from_sigma(sigma, rate), rate })
    }

    pub fn from_eb_no(eb_no_db: f64, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        if !eb_no_db.is_finite() {
            return Err(invalid(format!("E_b/N_o must be finite, got {eb_no_db}")));
        }
        Ok(ChannelPoint { sigma: sigma_from_eb_no(eb_no_db, rate), eb_no_db, rate })
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("rate must lie in (0, 1), got {rate}")))
    }
}

/// Largest inner-decoder error probability the outer code can still clean up:
/// `Q(1/σ_th)` for the outer threshold noise level.
pub fn critical_ber(sigma_th_outer: f64) -> f64 {
    if sigma_th_outer <= 0.0 {
        return 0.0;
    }
    q_function(1.0 / sigma_th_outer)
}

/// Capacity in bits of the binary-input AWGN channel with BPSK amplitude 1.
pub fn biawgn_capacity(sigma: f64) -> f64 {
    thread_local! {
        static RULE: GaussHermite = GaussHermite::new(96).expect("valid degree");
    }
    let mean = 2.0 / (sigma * sigma);
    let sd = 2.0 / sigma;
    // E[log2(1 + e^{-L})] for L ~ N(mean, sd²), substituting L = mean + √2·sd·x.
    let loss = RULE.with(|rule| {
        rule.integrate(|x| {
            let l = mean + std::f64::consts::SQRT_2 * sd * x;
            softplus(-l) / std::f64::consts::LN_2
        })
    }) / std::f64::consts::PI.sqrt();
    1.0 - loss
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Smallest `E_b/N_o` (dB) at which BPSK signalling supports `rate`.
pub fn shannon_limit(rate: f64) -> Result<f64> {
    check_rate(rate)?;
    // Capacity decreases in sigma.
    let (mut lo, mut hi) = (1e-3f64, 1e3f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if biawgn_capacity(mid) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok(eb_no_from_sigma(0.5 * (lo + hi), rate))
}

/// `Q(√((d_v+1)/σ²))`: the floor of an LDGM code with variable degree `d_v`.
pub fn ldgm_lower_bound(vn_degree: u32, sigma: f64) -> f64 {
    q_function(((vn_degree as f64 + 1.0) / (sigma * sigma)).sqrt())
}

/// Noise level of the super-channel seen by the outer code when the inner
/// decoder has reached its floor.
pub fn super_channel_sigma(vn_degree: u32, sigma: f64) -> f64 {
    sigma / (vn_degree as f64 + 1.0).sqrt()
}

/// `Q(√((d_v^o+1)(d_v+1)/σ²))`: the floor of the concatenation.
pub fn scldgm_lower_bound(vn_degree: u32, outer_vn_degree: u32, sigma: f64) -> f64 {
    ldgm_lower_bound(outer_vn_degree, super_channel_sigma(vn_degree, sigma))
}

/// Node-degree mixture of [`ldgm_lower_bound`] for a stand-alone outer code;
/// zero for an LDPC code, which has no such floor.
pub fn outer_floor(outer: &CodeEnsemble, sigma: f64) -> f64 {
    match outer.kind() {
        EnsembleKind::LdpcOuter => 0.0,
        _ => outer.vn_dist().iter().map(|(d, w)| w * ldgm_lower_bound(d, sigma)).sum(),
    }
}

/// Node-degree mixture of [`scldgm_lower_bound`]; zero with an LDPC outer code.
pub fn concatenated_floor(inner: &CodeEnsemble, outer: &CodeEnsemble, sigma: f64) -> f64 {
    if outer.kind() == EnsembleKind::LdpcOuter {
        return 0.0;
    }
    let mut total = 0.0;
    for (di, wi) in inner.vn_dist().iter() {
        for (dj, wj) in outer.vn_dist().iter() {
            total += wi * wj * scldgm_lower_bound(di, dj, sigma);
        }
    }
    total
}

/// Error level below which a run counts as successful. An LDGM floor above
/// [`SUCCESS_TARGET`] would otherwise make success unreachable, so runs that
/// settle within a decade of their floor also count.
pub fn success_level(floor: f64) -> f64 {
    SUCCESS_TARGET.max(10.0 * floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOptions {
    pub dde: DdeOptions,
    pub precision_db: f64,
    /// Starting point of the bracket search; defaults to the Shannon limit plus 0.5 dB.
    pub guess_db: Option<f64>,
    /// Offset above the found threshold at which the two-step run is checked.
    pub cross_check_margin_db: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            dde: DdeOptions::default(),
            precision_db: 0.01,
            guess_db: None,
            cross_check_margin_db: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold_eb_no_db: f64,
    pub threshold_sigma: f64,
    pub critical_ber: f64,
    pub gap_to_shannon_db: f64,
    pub search_precision_db: f64,
    /// Highest `E_b/N_o` (dB) verified to fail.
    pub failing_eb_no_db: f64,
}

const MAX_EXPANSIONS: usize = 8;

/// Bisection over `E_b/N_o` for the boundary of a monotone success predicate.
/// Returns `(fail, success)` with `success − fail ≤ precision`.
fn bisect(mut succeeds: impl FnMut(f64) -> Result<bool>, guess: f64, precision: f64) -> Result<(f64, f64)> {
    if !(precision > 0.0) {
        return Err(invalid(format!("precision must be positive, got {precision}")));
    }
    let (mut lo, mut hi) = (guess - 1.0, guess + 2.0);
    let mut lo_fails = false;
    let mut step = 2.0;
    let mut tries = 0;
    while !succeeds(hi)? {
        tries += 1;
        if tries > MAX_EXPANSIONS {
            return Err(Error::SearchBracket(format!("no success up to {hi:.3} dB")));
        }
        lo = hi;
        lo_fails = true;
        hi += step;
        step *= 2.0;
    }
    let mut step = 1.0;
    let mut tries = 0;
    while !lo_fails && succeeds(lo)? {
        tries += 1;
        if tries > MAX_EXPANSIONS {
            return Err(Error::SearchBracket(format!("still succeeding at {lo:.3} dB")));
        }
        hi = lo;
        lo -= step;
        step *= 2.0;
    }
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if succeeds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        log::debug!("bracket [{lo:.4}, {hi:.4}] dB");
    }
    Ok((lo, hi))
}

/// Stand-alone outer decoding of the AWGN channel output at noise `sigma`.
pub fn outer_succeeds(outer: &CodeEnsemble, sigma: f64, dde: &DdeOptions) -> Result<bool> {
    let level = success_level(outer_floor(outer, sigma));
    let opts = dde.clone().with_stop_below(Some(level));
    let q = channel_pmf(&opts.grid, sigma)?;
    let out = evolve_outer(outer, &q, &opts)?;
    Ok(out.trace.final_error().is_some_and(|e| e < level))
}

/// Decoding threshold of an outer code driven directly by the channel, at the
/// code's own rate.
pub fn outer_threshold(outer: &CodeEnsemble, opts: &ThresholdOptions) -> Result<ThresholdResult> {
    if !outer.kind().is_outer() {
        return Err(invalid(format!("expected an outer ensemble, got {:?}", outer.kind())));
    }
    let rate = outer.rate();
    let limit = shannon_limit(rate)?;
    let guess = opts.guess_db.unwrap_or(limit + 0.5);
    let (lo, hi) = bisect(
        |db| outer_succeeds(outer, sigma_from_eb_no(db, rate), &opts.dde),
        guess,
        opts.precision_db,
    )?;
    let sigma = sigma_from_eb_no(hi, rate);
    Ok(ThresholdResult {
        threshold_eb_no_db: hi,
        threshold_sigma: sigma,
        critical_ber: critical_ber(sigma),
        gap_to_shannon_db: hi - limit,
        search_precision_db: opts.precision_db,
        failing_eb_no_db: lo,
    })
}

/// Whether inner decoding at `sigma` reaches `critical`.
pub fn inner_reaches(inner: &CodeEnsemble, sigma: f64, critical: f64, dde: &DdeOptions) -> Result<bool> {
    let opts = dde.clone().with_stop_below(Some(critical));
    let out = evolve_inner(inner, sigma, &opts)?;
    Ok(out.trace.final_error().is_some_and(|e| e <= critical))
}

/// Smallest `E_b/N_o` (at the overall rate) at which inner decoding reaches
/// the outer code's critical BER. The result is cross-checked with a full
/// two-step run slightly above the threshold.
pub fn concatenated_threshold(inner: &CodeEnsemble, outer: &CodeEnsemble, opts: &ThresholdOptions) -> Result<ThresholdResult> {
    if inner.kind() != EnsembleKind::LdgmInner {
        return Err(invalid(format!("expected an inner LDGM ensemble, got {:?}", inner.kind())));
    }
    let outer_opts = ThresholdOptions { guess_db: None, ..opts.clone() };
    let outer_th = outer_threshold(outer, &outer_opts)?;
    let mut result = concatenated_threshold_with(inner, outer_th.critical_ber, outer.rate(), opts)?;
    let check_db = result.threshold_eb_no_db + opts.cross_check_margin_db;
    let rate = inner.rate() * outer.rate();
    let sigma = sigma_from_eb_no(check_db, rate);
    let level = success_level(concatenated_floor(inner, outer, sigma));
    let trace = two_step_dde(inner, outer, sigma, &opts.dde.clone().with_stop_below(Some(level)))?;
    if !(trace.final_error() < level) {
        return Err(Error::Consistency(format!(
            "two-step error {:e} at {check_db:.3} dB does not reach {level:e}",
            trace.final_error()
        )));
    }
    result.critical_ber = outer_th.critical_ber;
    Ok(result)
}

/// Inner-code threshold against a given critical BER, skipping the outer search
/// and the two-step cross-check.
pub fn concatenated_threshold_with(
    inner: &CodeEnsemble,
    critical: f64,
    outer_rate: f64,
    opts: &ThresholdOptions,
) -> Result<ThresholdResult> {
    let rate = inner.rate() * outer_rate;
    let limit = shannon_limit(rate)?;
    let guess = opts.guess_db.unwrap_or(limit + 0.5);
    let (lo, hi) = bisect(
        |db| inner_reaches(inner, sigma_from_eb_no(db, rate), critical, &opts.dde),
        guess,
        opts.precision_db,
    )?;
    Ok(ThresholdResult {
        threshold_eb_no_db: hi,
        threshold_sigma: sigma_from_eb_no(hi, rate),
        critical_ber: critical,
        gap_to_shannon_db: hi - limit,
        search_precision_db: opts.precision_db,
        failing_eb_no_db: lo,
    })
}

/// First inner iteration reaching `critical` for each `E_b/N_o`; `None` if the
/// budget runs out first. Points are evaluated in parallel.
pub fn convergence_profile(
    inner: &CodeEnsemble,
    critical: f64,
    eb_no_list: &[f64],
    rate: f64,
    dde: &DdeOptions,
) -> Result<Vec<(f64, Option<usize>)>> {
    check_rate(rate)?;
    let opts = dde.clone().with_stop_below(Some(critical));
    eb_no_list
        .par_iter()
        .map(|&db| {
            let out = evolve_inner(inner, sigma_from_eb_no(db, rate), &opts)?;
            Ok((db, out.trace.first_at_or_below(critical)))
        })
        .collect()
}

/// One row of a threshold table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub vn_degree: f64,
    pub cn_degree: f64,
    pub result: ThresholdResult,
}

impl ThresholdRow {
    pub fn new(ensemble: &CodeEnsemble, result: ThresholdResult) -> Self {
        ThresholdRow {
            vn_degree: ensemble.vn_dist().average_degree(),
            cn_degree: ensemble.cn_dist().average_degree(),
            result,
        }
    }
}

fn degree_field(d: f64) -> String {
    if d.fract() == 0.0 {
        format!("{d}")
    } else {
        format!("{d:.6}")
    }
}

pub fn write_threshold_csv(rows: &[ThresholdRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "dv,dc,threshold_db,sigma_th,critical_ber")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e}",
            degree_field(r.vn_degree),
            degree_field(r.cn_degree),
            r.result.threshold_eb_no_db,
            r.result.threshold_sigma,
            r.result.critical_ber
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_conversion_round_trip() {
        for &r in &[0.1, 0.5, 25.0 / 51.0, 50.0 / 51.0] {
            for &s in &[0.2, 0.7, 1.0, 3.5] {
                let p = ChannelPoint::from_sigma(s, r).unwrap();
                let q = ChannelPoint::from_eb_no(p.eb_no_db, r).unwrap();
                assert!((q.sigma - s).abs() < 1e-12 * s);
            }
        }
        assert!(ChannelPoint::from_sigma(1.0, 1.0).is_err());
        assert!(ChannelPoint::from_sigma(-1.0, 0.5).is_err());
        let p = ChannelPoint::from_eb_no(0.0, 0.5).unwrap();
        assert!((p.sigma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn critical_ber_examples() {
        assert!((critical_ber(0.375) / 3.848e-3 - 1.0).abs() < 0.02);
        assert!((critical_ber(0.372) / 3.608e-3 - 1.0).abs() < 0.02);
        assert!((critical_ber(0.374) / 3.778e-3 - 1.0).abs() < 0.02);
        assert_eq!(critical_ber(0.0), 0.0);
        assert!(critical_ber(1e-3) < 1e-300);
    }

    #[test]
    fn capacity_limits() {
        assert!(biawgn_capacity(1e-2) > 1.0 - 1e-12);
        assert!(biawgn_capacity(100.0) < 1e-3);
        // Rate one half needs about 0.187 dB with BPSK.
        let l = shannon_limit(0.5).unwrap();
        assert!((l - 0.187).abs() < 0.005, "{l}");
        let l = shannon_limit(25.0 / 51.0).unwrap();
        assert!((l - 0.15).abs() < 0.02, "{l}");
    }

    #[test]
    fn bound_examples() {
        let s = (0.63096f64).sqrt();
        let b = ldgm_lower_bound(7, s);
        assert!((b / 1.85e-4 - 1.0).abs() < 0.01, "{b}");
        assert!((ldgm_lower_bound(3, 1e9) - 0.5).abs() < 1e-9);
        assert_eq!(ldgm_lower_bound(0, 0.8), q_function(1.0 / 0.8));
        let s = sigma_from_eb_no(1.0, 25.0 / 51.0);
        let b = scldgm_lower_bound(7, 4, s);
        assert!((b / q_function((40.0 / (s * s)).sqrt()) - 1.0).abs() < 1e-12);
        assert!(b > 5e-13 && b < 2e-12, "{b}");
        assert_eq!(scldgm_lower_bound(7, 0, 0.9), ldgm_lower_bound(0, super_channel_sigma(7, 0.9)));
    }

    #[test]
    fn bisection_finds_a_step() {
        let (lo, hi) = bisect(|x| Ok(x >= 1.234), 0.0, 1e-3).unwrap();
        assert!(lo < 1.234 && hi >= 1.234 && hi - lo <= 1e-3);
        let (lo, hi) = bisect(|x| Ok(x >= -5.0), 3.0, 1e-3).unwrap();
        assert!(lo < -5.0 && hi >= -5.0);
        assert!(matches!(bisect(|_| Ok(false), 0.0, 0.01), Err(Error::SearchBracket(_))));
        assert!(bisect(|_| Ok(true), 0.0, 0.0).is_err());
    }

    #[test]
    fn threshold_csv_layout() {
        let e = CodeEnsemble::regular(EnsembleKind::LdgmOuter, 4, 200).unwrap();
        let r = ThresholdResult {
            threshold_eb_no_db: 5.59,
            threshold_sigma: 0.375,
            critical_ber: 3.848e-3,
            gap_to_shannon_db: 1.0,
            search_precision_db: 0.01,
            failing_eb_no_db: 5.58,
        };
        let mut buf = Vec::new();
        write_threshold_csv(&[ThresholdRow::new(&e, r)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "dv,dc,threshold_db,sigma_th,critical_ber\n4,200,5.5899999999999999e0,3.7500000000000000e-1,3.8479999999999999e-3\n"
        );
    }
}
