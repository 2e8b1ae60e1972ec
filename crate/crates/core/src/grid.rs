//! Probability mass functions on a uniform, saturating LLR grid and the
//! kernels of discretized density evolution.
//!
//! A grid with `n_b` bits holds `2^{n_b} + 1` bins at `iΔ` for
//! `i ∈ [−2^{n_b−1}, 2^{n_b−1}]`, `Δ = 2·L_a / 2^{n_b}`, so LLR 0 has its own
//! bin. Values are quantized to the nearest bin with ties broken toward zero;
//! anything beyond `±L_a` saturates into the boundary bins.

use std::fmt;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::llr::boxplus;
use crate::special::normal_interval;

/// Mass conservation tolerance for every operation.
pub const MASS_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_L_MAX: f64 = 50.0;
pub const DEFAULT_N_BITS: u32 = 10;

/// A uniform LLR quantization grid. Cloning is cheap; the check-node
/// lookup table is built on first use and shared by all clones.
#[derive(Clone)]
pub struct LlrGrid {
    inner: Arc<GridInner>,
}

struct GridInner {
    l_max: f64,
    n_bits: u32,
    half: usize,
    delta: f64,
    table: OnceLock<BoxplusTable>,
}

impl LlrGrid {
    pub fn new(l_max: f64, n_bits: u32) -> Result<Self> {
        if !(l_max.is_finite() && l_max > 0.0) {
            return Err(invalid(format!("grid bound {l_max} must be positive")));
        }
        if !(2..=12).contains(&n_bits) {
            return Err(invalid(format!("quantization bits {n_bits} outside 2..=12")));
        }
        let half = 1usize << (n_bits - 1);
        Ok(LlrGrid {
            inner: Arc::new(GridInner {
                l_max,
                n_bits,
                half,
                delta: l_max / half as f64,
                table: OnceLock::new(),
            }),
        })
    }

    pub fn l_max(&self) -> f64 {
        self.inner.l_max
    }

    pub fn n_bits(&self) -> u32 {
        self.inner.n_bits
    }

    pub fn delta(&self) -> f64 {
        self.inner.delta
    }

    /// Number of bins on each side of zero.
    pub fn half(&self) -> usize {
        self.inner.half
    }

    pub fn bins(&self) -> usize {
        2 * self.inner.half + 1
    }

    /// Index of the LLR-0 bin.
    pub fn zero_index(&self) -> usize {
        self.inner.half
    }

    /// LLR value at bin `index`.
    pub fn llr(&self, index: usize) -> f64 {
        (index as f64 - self.inner.half as f64) * self.inner.delta
    }

    /// Signed bin offset from the zero bin of `x` (nearest, ties toward zero,
    /// saturated).
    pub fn quantize_offset(&self, x: f64) -> i64 {
        let h = self.inner.half as i64;
        if x.is_nan() {
            return 0;
        }
        let t = x.abs() / self.inner.delta;
        let k = if t >= h as f64 { h } else { ((t - 0.5).ceil().max(0.0)) as i64 };
        if x < 0.0 {
            -k
        } else {
            k
        }
    }

    /// Bin index of `x`.
    pub fn quantize(&self, x: f64) -> usize {
        (self.quantize_offset(x) + self.inner.half as i64) as usize
    }

    fn same(&self, other: &LlrGrid) -> bool {
        self == other
    }

    fn table(&self) -> &BoxplusTable {
        self.inner.table.get_or_init(|| BoxplusTable::build(self))
    }
}

impl Default for LlrGrid {
    fn default() -> Self {
        LlrGrid::new(DEFAULT_L_MAX, DEFAULT_N_BITS).expect("default grid is valid")
    }
}

impl PartialEq for LlrGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.l_max == other.inner.l_max && self.inner.n_bits == other.inner.n_bits)
    }
}

impl fmt::Debug for LlrGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlrGrid")
            .field("l_max", &self.inner.l_max)
            .field("n_bits", &self.inner.n_bits)
            .field("delta", &self.inner.delta)
            .finish()
    }
}

/// Quantized magnitudes of the check rule for every pair of non-negative bins.
///
/// `R(a, b)` is non-decreasing in `b` for fixed `a`, so each row becomes
/// constant after some column; `settle[a]` is the first column `b ≥ a` from
/// which row `a` equals its last entry. The combine kernel sums the constant
/// tail through suffix sums instead of visiting it bin by bin.
struct BoxplusTable {
    width: usize,
    out: Vec<u16>,
    settle: Vec<usize>,
}

impl BoxplusTable {
    fn build(grid: &LlrGrid) -> Self {
        let h = grid.half();
        let width = h + 1;
        let delta = grid.delta();
        let mut out = vec![0u16; width * width];
        for a in 0..width {
            for b in a..width {
                let v = boxplus(a as f64 * delta, b as f64 * delta);
                let k = grid.quantize_offset(v) as u16;
                out[a * width + b] = k;
                out[b * width + a] = k;
            }
        }
        let settle = (0..width)
            .map(|a| {
                let row = &out[a * width..(a + 1) * width];
                let last = row[h];
                let mut s = h;
                while s > a && row[s - 1] == last {
                    s -= 1;
                }
                s
            })
            .collect();
        BoxplusTable { width, out, settle }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> usize {
        self.out[a * self.width + b] as usize
    }
}

/// A probability mass function over the bins of an [`LlrGrid`].
#[derive(Clone, Debug)]
pub struct QuantizedPmf {
    grid: LlrGrid,
    mass: Vec<f64>,
}

impl PartialEq for QuantizedPmf {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.mass == other.mass
    }
}

impl QuantizedPmf {
    /// Builds a pmf from raw bin masses, checking non-negativity and total mass.
    pub fn from_masses(grid: &LlrGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.bins() {
            return Err(invalid(format!("expected {} bins, got {}", grid.bins(), mass.len())));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(invalid("bin masses must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("total mass {total} is not 1")));
        }
        Ok(QuantizedPmf { grid: grid.clone(), mass })
    }

    /// Unit mass at bin offset `offset` (saturated to the grid).
    pub fn point(grid: &LlrGrid, offset: i64) -> Self {
        let h = grid.half() as i64;
        let mut mass = vec![0.0; grid.bins()];
        mass[(offset.clamp(-h, h) + h) as usize] = 1.0;
        QuantizedPmf { grid: grid.clone(), mass }
    }

    /// Unit mass at LLR 0: no information.
    pub fn erasure(grid: &LlrGrid) -> Self {
        Self::point(grid, 0)
    }

    /// Unit mass at `+L_a`: a bit known with certainty.
    pub fn certain(grid: &LlrGrid) -> Self {
        Self::point(grid, grid.half() as i64)
    }

    /// Quantized Gaussian `N(mean, variance)`; tails fold into the boundary bins.
    pub fn gaussian(grid: &LlrGrid, mean: f64, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0 && mean.is_finite()) {
            return Err(invalid("gaussian needs finite mean and non-negative variance"));
        }
        if variance == 0.0 {
            return Ok(Self::point(grid, grid.quantize_offset(mean)));
        }
        let sd = variance.sqrt();
        let delta = grid.delta();
        let n = grid.bins();
        let z = |llr: f64| (llr - mean) / sd;
        let mass = (0..n)
            .map(|i| {
                let center = grid.llr(i);
                let lo = if i == 0 { f64::NEG_INFINITY } else { z(center - 0.5 * delta) };
                let hi = if i == n - 1 { f64::INFINITY } else { z(center + 0.5 * delta) };
                normal_interval(lo, hi)
            })
            .collect();
        Ok(QuantizedPmf { grid: grid.clone(), mass })
    }

    pub fn grid(&self) -> &LlrGrid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mass on bins with LLR ≤ 0, the zero bin included.
    pub fn error_mass(&self) -> f64 {
        self.mass[..=self.grid.zero_index()].iter().sum()
    }

    /// Mass on bins with strictly negative LLR.
    pub fn negative_mass(&self) -> f64 {
        self.mass[..self.grid.zero_index()].iter().sum()
    }

    pub fn zero_mass(&self) -> f64 {
        self.mass[self.grid.zero_index()]
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(i, m)| m * self.grid.llr(i)).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.mass
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let d = self.grid.llr(i) - mu;
                m * d * d
            })
            .sum()
    }

    /// Largest `|LLR|` over bins with non-zero mass.
    /// Rescales to unit total mass. Repeated combination of many pmfs
    /// multiplies rounding drift in the total, so iterative callers renormalize.
    pub fn normalize(&mut self) {
        let t = self.total_mass();
        if t > 0.0 && t != 1.0 {
            let inv = 1.0 / t;
            self.mass.iter_mut().for_each(|m| *m *= inv);
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        let z = self.grid.zero_index();
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, _)| (i as f64 - z as f64).abs() * self.grid.delta())
            .fold(0.0, f64::max)
    }

    /// Writes `(llr, mass)` rows.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "llr,mass")?;
        for (i, m) in self.mass.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.llr(i), m)?;
        }
        Ok(())
    }

    fn check_grid(&self, other: &QuantizedPmf) -> Result<()> {
        if self.grid.same(&other.grid) {
            Ok(())
        } else {
            Err(invalid(format!("grid mismatch: {:?} vs {:?}", self.grid, other.grid)))
        }
    }

    fn support(&self) -> Option<(usize, usize)> {
        let lo = self.mass.iter().position(|m| *m != 0.0)?;
        let hi = self.mass.iter().rposition(|m| *m != 0.0)?;
        Some((lo, hi))
    }
}

/// Weighted sum of pmfs on a common grid. Weights should sum to 1.
pub fn mixture<'a>(terms: impl IntoIterator<Item = (f64, &'a QuantizedPmf)>) -> Result<QuantizedPmf> {
    let mut out: Option<QuantizedPmf> = None;
    for (w, p) in terms {
        match out.as_mut() {
            None => {
                out = Some(QuantizedPmf {
                    grid: p.grid.clone(),
                    mass: p.mass.iter().map(|m| w * m).collect(),
                })
            }
            Some(acc) => {
                acc.check_grid(p)?;
                for (a, m) in acc.mass.iter_mut().zip(&p.mass) {
                    *a += w * m;
                }
            }
        }
    }
    out.ok_or_else(|| invalid("empty mixture"))
}

/// Which algorithm computes variable-node convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionMethod {
    /// Direct summation; exact down to the smallest tail masses.
    #[default]
    Direct,
    /// FFT for long supports, direct otherwise. Faster, but absolute rounding
    /// of order 1e-17 per bin swamps tail masses below roughly 1e-14.
    Fast,
}

/// Supports at or below this length always use direct summation.
pub const FFT_MIN_SUPPORT: usize = 96;

/// Discrete convolution with saturation at the grid boundary.
pub fn convolve(p: &QuantizedPmf, q: &QuantizedPmf) -> Result<QuantizedPmf> {
    convolve_with(ConvolutionMethod::Direct, p, q)
}

pub fn convolve_with(method: ConvolutionMethod, p: &QuantizedPmf, q: &QuantizedPmf) -> Result<QuantizedPmf> {
    p.check_grid(q)?;
    let (Some((plo, phi)), Some((qlo, qhi))) = (p.support(), q.support()) else {
        return Ok(QuantizedPmf {
            grid: p.grid.clone(),
            mass: vec![0.0; p.grid.bins()],
        });
    };
    let ps = &p.mass[plo..=phi];
    let qs = &q.mass[qlo..=qhi];
    let linear = match method {
        ConvolutionMethod::Fast if ps.len().min(qs.len()) > FFT_MIN_SUPPORT => linear_convolve_fft(ps, qs),
        _ => linear_convolve_direct(ps, qs),
    };
    // linear[k] sits at bin plo + qlo + k - half.
    let h = p.grid.half() as i64;
    let n = p.grid.bins() as i64;
    let base = plo as i64 + qlo as i64 - h;
    let mut mass = vec![0.0; p.grid.bins()];
    for (k, v) in linear.into_iter().enumerate() {
        let idx = (base + k as i64).clamp(0, n - 1) as usize;
        mass[idx] += v;
    }
    Ok(QuantizedPmf { grid: p.grid.clone(), mass })
}

fn linear_convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..i + b.len()].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

fn linear_convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..len].iter().map(|c| (c.re * scale).max(0.0)).collect()
}

/// `m`-fold self-convolution by repeated squaring; `m = 0` gives unit mass at 0.
pub fn convolve_power(p: &QuantizedPmf, m: usize) -> QuantizedPmf {
    convolve_power_with(ConvolutionMethod::Direct, p, m)
}

pub fn convolve_power_with(method: ConvolutionMethod, p: &QuantizedPmf, m: usize) -> QuantizedPmf {
    let mut result: Option<QuantizedPmf> = None;
    let mut base = p.clone();
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => convolve_with(method, &r, &base).expect("same grid"),
            });
        }
        e >>= 1;
        if e > 0 {
            base = convolve_with(method, &base, &base).expect("same grid");
        }
    }
    result.unwrap_or_else(|| QuantizedPmf::erasure(&p.grid))
}

/// Powers `p^{⊗2^j}` cached so that several exponents can share squarings.
pub(crate) struct PowerLadder {
    method: ConvolutionMethod,
    rungs: Vec<QuantizedPmf>,
}

impl PowerLadder {
    pub(crate) fn new(method: ConvolutionMethod, p: QuantizedPmf) -> Self {
        PowerLadder { method, rungs: vec![p] }
    }

    /// `seed ⊗ p^{⊗m}`.
    pub(crate) fn apply(&mut self, seed: &QuantizedPmf, m: usize) -> QuantizedPmf {
        let mut acc = seed.clone();
        let mut e = m;
        let mut j = 0;
        while e > 0 {
            if e & 1 == 1 {
                while self.rungs.len() <= j {
                    let last = self.rungs.last().expect("non-empty");
                    let next = convolve_with(self.method, last, last).expect("same grid");
                    self.rungs.push(next);
                }
                acc = convolve_with(self.method, &acc, &self.rungs[j]).expect("same grid");
            }
            e >>= 1;
            j += 1;
        }
        acc
    }
}

/// Check-node combination of two independent messages: every bin pair
/// `(i, j)` deposits `p[i]·q[j]` at `Q(R(iΔ, jΔ))`.
pub fn r_combine(p: &QuantizedPmf, q: &QuantizedPmf) -> Result<QuantizedPmf> {
    p.check_grid(q)?;
    let table = p.grid.table();
    let mut mass = vec![0.0; p.grid.bins()];
    combine_into(table, p.grid.half(), &p.mass, &q.mass, &mut mass);
    Ok(QuantizedPmf { grid: p.grid.clone(), mass })
}

/// Splits signed bin masses into positive and negative halves indexed by
/// magnitude; index 0 of both halves is unused.
fn split(h: usize, mass: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pos = std::iter::once(0.0).chain(mass[h + 1..].iter().copied()).collect();
    let neg = std::iter::once(0.0).chain(mass[..h].iter().rev().copied()).collect();
    (pos, neg)
}

fn suffix_sums(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len() + 1];
    for i in (0..v.len()).rev() {
        out[i] = out[i + 1] + v[i];
    }
    out
}

fn combine_into(table: &BoxplusTable, h: usize, p: &[f64], q: &[f64], out: &mut [f64]) {
    let (pp, pn) = split(h, p);
    let (qp, qn) = split(h, q);
    let (spp, spn) = (suffix_sums(&pp), suffix_sums(&pn));
    let (sqp, sqn) = (suffix_sums(&qp), suffix_sums(&qn));
    let ptot: f64 = p.iter().sum();
    let qtot: f64 = q.iter().sum();
    let mut zero = p[h] * qtot + (ptot - p[h]) * q[h];
    let mut pos = vec![0.0; h + 1];
    let mut neg = vec![0.0; h + 1];

    let mut deposit = |t: usize, xp: f64, xn: f64, yp: f64, yn: f64| {
        let same = xp * yp + xn * yn;
        let opposite = xp * yn + xn * yp;
        if t == 0 {
            zero += same + opposite;
        } else {
            pos[t] += same;
            neg[t] += opposite;
        }
    };

    // Pairs with |p-bin| ≤ |q-bin|.
    for a in 1..=h {
        let (xp, xn) = (pp[a], pn[a]);
        if xp == 0.0 && xn == 0.0 {
            continue;
        }
        let s = table.settle[a].max(a);
        for b in a..s {
            deposit(table.get(a, b), xp, xn, qp[b], qn[b]);
        }
        deposit(table.get(a, h), xp, xn, sqp[s], sqn[s]);
    }
    // Pairs with |q-bin| < |p-bin|.
    for b in 1..h {
        let (yp, yn) = (qp[b], qn[b]);
        if yp == 0.0 && yn == 0.0 {
            continue;
        }
        let s = table.settle[b].max(b + 1);
        for a in b + 1..s {
            deposit(table.get(b, a), yp, yn, pp[a], pn[a]);
        }
        deposit(table.get(b, h), yp, yn, spp[s], spn[s]);
    }

    out[h] = zero;
    for t in 1..=h {
        out[h + t] = pos[t];
        out[h - t] = neg[t];
    }
}

/// Left fold of [`r_combine`] over `m` copies of `p` seeded with `p0`:
/// the message of a degree-`m+1` check node whose own observation is `p0`.
/// `m = 0` returns `p0`.
pub fn r_power(p0: &QuantizedPmf, p: &QuantizedPmf, m: usize) -> Result<QuantizedPmf> {
    p0.check_grid(p)?;
    let mut acc = p0.clone();
    for _ in 0..m {
        acc = r_combine(&acc, p)?;
    }
    Ok(acc)
}

/// `R^m p` by repeated squaring (a balanced combination tree); `m = 0` gives
/// unit mass at `+L_a`, the identity of the check rule.
pub fn r_power_tree(p: &QuantizedPmf, m: usize) -> QuantizedPmf {
    let mut result: Option<QuantizedPmf> = None;
    let mut base = p.clone();
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r_combine(&r, &base).expect("same grid"),
            });
        }
        e >>= 1;
        if e > 0 {
            base = r_combine(&base, &base).expect("same grid");
        }
    }
    result.unwrap_or_else(|| QuantizedPmf::certain(&p.grid))
}
