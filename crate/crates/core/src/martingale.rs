//! Block schedule, conditional-expectation approximants and martingale
//! differences for lacunary sums.
//!
//! Indices are split into alternating short gap blocks `D'_k` and long main
//! blocks `D_k`, in the order `D'_1, D_1, D'_2, D_2, ...`. Each `k` gets a
//! dyadic level `m(k)`, and `F_k` is generated by the level-`m(k)` cells.

use std::borrow::Cow;
use std::f64::consts::PI;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LacunaError, Result};
use crate::exactnum::{
    sample_uniform_bits, stream_rng, turns_to_radians, BitSource, CellCenter, CoordBits, DyadicPoint, Multiplier,
    SmallDyadic,
};
use crate::fourier::FourierPoly;
use crate::lacunary::LacunarySequence;

/// `max(1, ln x)`.
pub fn log1(x: f64) -> f64 {
    x.ln().max(1.0)
}

/// Inputs to [`build_schedule`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub q: f64,
    pub d: usize,
    pub g: u64,
    pub eta: f64,
    /// The constant `C`; searched by doubling from 1 when absent.
    #[serde(default)]
    pub c_scale: Option<f64>,
    /// The constant `C'`; the smallest admissible value when absent.
    #[serde(default)]
    pub c_prime: Option<f64>,
    /// Explicit `(|D'_k|, |D_k|)` lengths. Setting this, or constants that
    /// break the sandwich, requires `allow_override`.
    #[serde(default)]
    pub blocks: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub allow_override: bool,
}

impl ScheduleParams {
    pub fn new(q: f64, d: usize, g: u64, eta: f64) -> Self {
        Self { q, d, g, eta, c_scale: None, c_prime: None, blocks: None, allow_override: false }
    }
}

/// Half-open index range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: usize,
    pub end: usize,
}

impl IndexRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.start..self.end).contains(&n)
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub k: usize,
    pub gap: IndexRange,
    pub main: IndexRange,
    /// Largest index of the block; `k+`.
    pub last: usize,
    /// `m(k) = ceil(log2 ||M_{k+}^T|| + (1+2 eta) log2 k + C')`.
    pub level: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub q: f64,
    pub d: usize,
    pub g: u64,
    pub eta: f64,
    pub c_scale: f64,
    pub c_dg: f64,
    pub c_prime: f64,
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
    pub n: usize,
    pub blocks: Vec<Block>,
    /// The last block was cut short by `n`.
    pub truncated: bool,
    pub overridden: bool,
    /// `eta^(-1/(1+eta)) C_dG^-1 N^(1/(1+eta))`, the growth scale of `K`.
    pub k_scale: f64,
    pub notes: Vec<String>,
}

fn c_dg_of(c: f64, d: usize, g: u64) -> f64 {
    let lg = log1(g as f64);
    c * (lg + log1(d as f64) + d as f64 * log1(5.0 * lg))
}

fn sandwich(c_dg: f64, q: f64, d: usize, g: u64, eta: f64) -> (f64, f64) {
    let l5 = (5.0 * log1(g as f64)).log2();
    let lc = 2.0 * (1.0 + eta) * c_dg.log2();
    let lower = lc + (g as f64).log2() + (d as f64).log2() + (2 * d + 1) as f64 * l5;
    let upper = q.log2() * c_dg - lc - d as f64 * l5;
    (lower, upper)
}

/// `|D'_k|`.
pub fn gap_len(k: usize, q: f64, eta: f64, c_dg: f64) -> usize {
    (2.0 * (1.0 + 2.0 * eta) * (k as f64).ln() / q.ln() + c_dg).ceil().max(0.0) as usize
}

/// `|D_k|`.
pub fn main_len(k: usize, eta: f64, c_dg: f64) -> usize {
    (12.0 / eta * c_dg.powf(1.0 + eta) * (k as f64).powf(eta)).floor() as usize
}

const MAX_BLOCKS: usize = 1 << 24;

/// Builds the schedule covering indices `1..=n`.
pub fn build_schedule(seq: &LacunarySequence, n: usize, p: &ScheduleParams) -> Result<BlockSchedule> {
    if p.d != seq.dim() {
        return Err(LacunaError::DimensionMismatch { expected: seq.dim(), got: p.d });
    }
    if !(p.q > 1.0) || !p.q.is_finite() {
        return Err(invalid("gap ratio q must exceed 1"));
    }
    if !(p.eta > 0.0 && p.eta < 1.0) {
        return Err(invalid("eta must lie in (0,1)"));
    }
    if p.g < 1 {
        return Err(invalid("G must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("N must be positive"));
    }
    if let Some(len) = seq.len() {
        if n > len {
            return Err(LacunaError::IndexOutOfRange { n, len });
        }
    }
    let mut notes = Vec::new();
    let mut overridden = false;
    let c_scale = match p.c_scale {
        Some(c) if c > 0.0 => c,
        Some(_) => return Err(invalid("C must be positive")),
        None => {
            let mut c = 1.0f64;
            loop {
                let (lo, hi) = sandwich(c_dg_of(c, p.d, p.g), p.q, p.d, p.g, p.eta);
                if lo <= hi {
                    break c;
                }
                c *= 2.0;
                if c > 2f64.powi(40) {
                    return Err(invalid("no admissible C below 2^40; q is too close to 1"));
                }
            }
        }
    };
    let c_dg = c_dg_of(c_scale, p.d, p.g);
    let (lower, upper) = sandwich(c_dg, p.q, p.d, p.g, p.eta);
    let c_prime = p.c_prime.unwrap_or(lower);
    if lower > upper || c_prime < lower || c_prime > upper {
        if !p.allow_override {
            return Err(invalid(format!(
                "C' = {c_prime:.4} is outside the admissible interval [{lower:.4}, {upper:.4}]"
            )));
        }
        overridden = true;
        notes.push(format!("C' = {c_prime:.4} outside [{lower:.4}, {upper:.4}]"));
    }
    if p.blocks.is_some() {
        if !p.allow_override {
            return Err(invalid("explicit block lengths require allow_override"));
        }
        overridden = true;
        notes.push("explicit block lengths".into());
    }

    let mut blocks = Vec::new();
    let mut next = 1usize;
    let mut truncated = false;
    let mut k = 0usize;
    while next <= n {
        k += 1;
        if k > MAX_BLOCKS {
            return Err(invalid("schedule exceeds the block limit"));
        }
        let (gl, ml) = match &p.blocks {
            Some(list) => match list.get(k - 1) {
                Some(&v) => v,
                None => return Err(invalid(format!("explicit schedule ends before N = {n}"))),
            },
            None => (gap_len(k, p.q, p.eta, c_dg), main_len(k, p.eta, c_dg)),
        };
        if ml == 0 {
            return Err(invalid(format!("main block {k} is empty")));
        }
        let gap_end = (next + gl).min(n + 1);
        let main_end = (gap_end + ml).min(n + 1);
        if main_end < gap_end + ml {
            truncated = true;
        }
        let gap = IndexRange { start: next, end: gap_end };
        let main = IndexRange { start: gap_end, end: main_end };
        let last = main_end - 1;
        blocks.push(Block { k, gap, main, last, level: 0 });
        next = main_end;
    }
    for b in &mut blocks {
        let lvl = seq.norm_log2(b.last)? + (1.0 + 2.0 * p.eta) * (b.k as f64).log2() + c_prime;
        b.level = lvl.ceil().max(0.0) as u64;
    }
    let k_scale =
        p.eta.powf(-1.0 / (1.0 + p.eta)) * (n as f64).powf(1.0 / (1.0 + p.eta)) / c_dg;
    Ok(BlockSchedule {
        q: p.q,
        d: p.d,
        g: p.g,
        eta: p.eta,
        c_scale,
        c_dg,
        c_prime,
        sandwich_lower: lower,
        sandwich_upper: upper,
        n,
        blocks,
        truncated,
        overridden,
        k_scale,
        notes,
    })
}

impl BlockSchedule {
    /// Number of blocks `K`, counting a truncated last block.
    pub fn k_count(&self) -> usize {
        self.blocks.len()
    }

    /// `m(k)`, with `m(0) = 0`.
    pub fn level(&self, k: usize) -> u64 {
        if k == 0 {
            0
        } else {
            self.blocks[k - 1].level
        }
    }

    /// Block number owning index `n` and whether it sits in the main part.
    pub fn locate(&self, n: usize) -> Option<(usize, bool)> {
        let i = self.blocks.partition_point(|b| b.main.end <= n);
        let b = self.blocks.get(i)?;
        if b.gap.contains(n) {
            Some((b.k, false))
        } else if b.main.contains(n) {
            Some((b.k, true))
        } else {
            None
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Index of the level-`level` cell holding `x`, per coordinate.
pub fn cell_of(x: &DyadicPoint, level: u64) -> Result<Vec<BigUint>> {
    if level > x.bits() {
        return Err(LacunaError::PrecisionInsufficient { have: x.bits(), need: level });
    }
    Ok(x.coords().iter().map(|c| c >> (x.bits() - level)).collect())
}

/// A dyadic cell `prod [v_i, v_i + 1) / 2^level`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub v: Vec<BigUint>,
    pub level: u64,
}

impl Cell {
    pub fn new(v: Vec<BigUint>, level: u64) -> Result<Self> {
        let top = BigUint::one() << level;
        if v.iter().any(|c| c >= &top) {
            return Err(invalid("cell index exceeds 2^level"));
        }
        Ok(Self { v, level })
    }

    fn centers(&self) -> Vec<CoordBits> {
        self.v.iter().map(|c| CoordBits::from_biguint(&((c << 1u32) | BigUint::one()), self.level + 1)).collect()
    }
}

type FreqFn<'a, 'b> = dyn Fn(usize) -> Cow<'a, Multiplier> + 'b;

const SMALL_ARG: f64 = 1.0 / 1048576.0;

/// `sin(pi F / 2^level)`.
fn sin_pi(f: &Multiplier, level: u64) -> f64 {
    let y = f.scaled(level);
    if y.abs() < SMALL_ARG {
        let t = PI * y;
        return t * (1.0 - t * t / 6.0 * (1.0 - t * t / 20.0));
    }
    let turns = f.turns(&SmallDyadic { num: 1, bits: level + 1 });
    turns_to_radians(turns).sin()
}

/// `sin(pi y) / (pi y)` at `y = F / 2^level`; zero at nonzero integers.
fn sinc_pi(f: &Multiplier, level: u64) -> f64 {
    if f.is_zero() {
        return 1.0;
    }
    if f.divisible_by_pow2(level) {
        return 0.0;
    }
    let y = f.scaled(level);
    if y.abs() < SMALL_ARG {
        let t2 = (PI * y).powi(2);
        return 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0);
    }
    if !y.is_finite() {
        // |y| beyond f64 range: the sine is bounded, the ratio vanishes.
        return 0.0;
    }
    sin_pi(f, level) / (PI * y)
}

/// `x * 2^e` without intermediate overflow.
fn ldexp(mut x: f64, mut e: u64) -> f64 {
    while e > 0 && x != 0.0 && x.is_finite() {
        let step = e.min(1000);
        x *= 2f64.powi(step as i32);
        e -= step;
    }
    x
}

/// Average of `e^{2 pi i <F, x>}` over a level-`level` cell given by its
/// centers, as `(re, im)`.
fn exp_average<S: BitSource>(freq: &FreqFn<'_, '_>, centers: &[S], level: u64) -> (f64, f64) {
    let mut mag = 1.0;
    let mut phase = 0u64;
    for (i, c) in centers.iter().enumerate() {
        let f = freq(i);
        if f.is_zero() {
            continue;
        }
        mag *= sinc_pi(&f, level);
        if mag == 0.0 {
            return (0.0, 0.0);
        }
        phase = phase.wrapping_add(f.turns(c));
    }
    let (s, c) = turns_to_radians(phase).sin_cos();
    (mag * c, mag * s)
}

/// Average over a coarse cell of the fine-cell averages of `e^{2 pi i <F, x>}`
/// across its `2^(d r)` subcells, through the Dirichlet kernel of each axis.
fn exp_tower(freq: &FreqFn<'_, '_>, coarse: &Cell, fine: u64) -> (f64, f64) {
    let r = fine - coarse.level;
    let mut mag = 1.0;
    let mut phase = 0u64;
    for (i, v) in coarse.v.iter().enumerate() {
        let f = freq(i);
        if f.is_zero() {
            continue;
        }
        let s_fine = sinc_pi(&f, fine);
        if s_fine == 0.0 {
            return (0.0, 0.0);
        }
        // D_R(theta) / R with theta = F / 2^fine and R = 2^r:
        // e^{pi i (R-1) theta} sin(pi R theta) / (R sin(pi theta))
        if f.divisible_by_pow2(coarse.level) {
            return (0.0, 0.0);
        }
        if f.scaled(fine).abs() < SMALL_ARG {
            // theta may underflow; D_R(theta) / R = sinc(pi R theta) / sinc(pi theta)
            mag *= sinc_pi(&f, coarse.level);
        } else {
            let num = sin_pi(&f, coarse.level);
            let den = ldexp(sin_pi(&f, fine), r);
            mag *= s_fine * num / den;
        }
        // first subcell center (2 v R + 1) / 2^(fine+1)
        let c0 = ((v << r) << 1u32) | BigUint::one();
        phase = phase.wrapping_add(f.turns(&CoordBits::from_biguint(&c0, fine + 1)));
        let rm1 = (BigUint::one() << r) - BigUint::one();
        phase = phase.wrapping_add(f.turns(&CoordBits::from_biguint(&rm1, fine + 1)));
    }
    let (s, c) = turns_to_radians(phase).sin_cos();
    (mag * c, mag * s)
}

struct Term {
    j_small: Option<Vec<i64>>,
    j: Vec<BigInt>,
    a: f64,
    b: f64,
}

enum FreqTable {
    /// `M_n = 2^shift(n)`; frequencies are built on the fly.
    Pow2,
    /// Per index, per term, per axis.
    Table(Vec<Vec<Vec<Multiplier>>>),
}

/// The approximants `phi_n` of a polynomial `p` along a sequence.
pub struct Approximant<'a> {
    seq: &'a LacunarySequence,
    schedule: &'a BlockSchedule,
    mean: f64,
    terms: Vec<Term>,
    table: FreqTable,
}

/// Precomputed frequency tables are refused beyond this many entries.
pub const DEFAULT_TABLE_CAP: usize = 50_000_000;

impl<'a> Approximant<'a> {
    pub fn new(p: &FourierPoly, seq: &'a LacunarySequence, schedule: &'a BlockSchedule) -> Result<Self> {
        if p.dim() != seq.dim() {
            return Err(LacunaError::DimensionMismatch { expected: seq.dim(), got: p.dim() });
        }
        let terms: Vec<Term> = p
            .terms()
            .map(|(j, a, b)| Term {
                j_small: j.iter().map(|v| v.to_i64().filter(|x| x.unsigned_abs() < 1 << 40)).collect(),
                j: j.clone(),
                a,
                b,
            })
            .collect();
        let pow2 = seq.power_of_two_shift(1).is_some() && terms.iter().all(|t| t.j_small.is_some());
        let table = if pow2 {
            FreqTable::Pow2
        } else {
            let n = schedule.n;
            let projected = n as u128 * terms.len() as u128 * seq.dim() as u128;
            if projected > DEFAULT_TABLE_CAP as u128 {
                return Err(LacunaError::CostGuard {
                    what: "frequency table",
                    projected,
                    cap: DEFAULT_TABLE_CAP as u128,
                    hint: "; reduce N or the number of terms",
                });
            }
            let rows = (1..=n)
                .map(|i| {
                    terms
                        .iter()
                        .map(|t| Ok(seq.frequency(i, &t.j)?.iter().map(Multiplier::new).collect()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            FreqTable::Table(rows)
        };
        Ok(Self { seq, schedule, mean: p.mean(), terms, table })
    }

    pub fn schedule(&self) -> &BlockSchedule {
        self.schedule
    }

    /// Bits a point needs for `phi_n` with `n` in blocks up to `k`.
    pub fn required_bits(&self, k: usize) -> u64 {
        self.schedule.level(k) + 1
    }

    fn with_freq<'s, R>(&'s self, n: usize, t: usize, body: impl FnOnce(&FreqFn<'s, '_>) -> R) -> R {
        match &self.table {
            FreqTable::Pow2 => {
                let shift = self.seq.power_of_two_shift(n).expect("power-of-two sequence");
                let js = self.terms[t].j_small.as_ref().expect("small frequency");
                body(&move |i| {
                    Cow::Owned(if js[i] == 0 {
                        Multiplier::Zero
                    } else {
                        Multiplier::Shifted { mult: js[i], shift }
                    })
                })
            }
            FreqTable::Table(rows) => {
                let row = &rows[n - 1][t];
                body(&|i| Cow::Borrowed(&row[i]))
            }
        }
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.schedule.n {
            return Err(LacunaError::IndexOutOfRange { n, len: self.schedule.n });
        }
        Ok(())
    }

    fn average_with<S: BitSource>(&self, n: usize, centers: &[S], level: u64) -> f64 {
        let mut acc = self.mean;
        for (t, term) in self.terms.iter().enumerate() {
            let (re, im) = self.with_freq(n, t, |f| exp_average(f, centers, level));
            acc += term.a * re + term.b * im;
        }
        acc
    }

    /// Average of `p(M_n .)` over the given cell, in closed form.
    pub fn cell_average(&self, n: usize, cell: &Cell) -> Result<f64> {
        self.check_n(n)?;
        check_cell(cell, self.seq.dim())?;
        Ok(self.average_with(n, &cell.centers(), cell.level))
    }

    /// Average over `coarse` of the level-`fine` cell averages of
    /// `p(M_n .)`, summed subcell by subcell in closed form.
    pub fn tower_average(&self, n: usize, coarse: &Cell, fine: u64) -> Result<f64> {
        self.check_n(n)?;
        check_cell(coarse, self.seq.dim())?;
        if fine < coarse.level {
            return Err(invalid("fine level must not be below the coarse level"));
        }
        let mut acc = self.mean;
        for (t, term) in self.terms.iter().enumerate() {
            let (re, im) = self.with_freq(n, t, |f| exp_tower(f, coarse, fine));
            acc += term.a * re + term.b * im;
        }
        Ok(acc)
    }

    fn level_avg(&self, n: usize, x: &[CoordBits], level: u64) -> Result<f64> {
        let centers = x.iter().map(|c| CellCenter::new(c, level)).collect::<Result<Vec<_>>>()?;
        Ok(self.average_with(n, &centers, level))
    }

    /// `hat phi_n(x) = E[p(M_n .) | F_k](x)` for `n` in block `k`.
    pub fn phi_hat(&self, n: usize, x: &[CoordBits]) -> Result<f64> {
        let k = self.block_of(n)?;
        self.level_avg(n, x, self.schedule.level(k))
    }

    /// `phi_n = hat phi_n - E[p(M_n .) | F_{k-1}]`.
    pub fn phi(&self, n: usize, x: &[CoordBits]) -> Result<f64> {
        let k = self.block_of(n)?;
        let fine = self.level_avg(n, x, self.schedule.level(k))?;
        let coarse = self.level_avg(n, x, self.schedule.level(k - 1))?;
        Ok(fine - coarse)
    }

    fn block_of(&self, n: usize) -> Result<usize> {
        self.check_n(n)?;
        Ok(self.schedule.locate(n).expect("schedule covers 1..=N").0)
    }

    /// `p(M_n x)` from exact orbit turns.
    pub fn orbit_value(&self, n: usize, x: &[CoordBits]) -> Result<f64> {
        self.check_n(n)?;
        check_point(x, self.seq.dim())?;
        let mut acc = self.mean;
        for (t, term) in self.terms.iter().enumerate() {
            let turns = self.with_freq(n, t, |f| {
                x.iter().enumerate().fold(0u64, |acc, (i, c)| acc.wrapping_add(f(i).turns(c)))
            });
            let (s, c) = turns_to_radians(turns).sin_cos();
            acc += term.a * c + term.b * s;
        }
        Ok(acc)
    }

    /// `X_1, ..., X_K` at `x` with `X_k = sum_{n in D_k} phi_n(x)`.
    pub fn increments(&self, x: &[CoordBits], k_max: usize) -> Result<Vec<f64>> {
        Ok(self.block_stats(x, k_max, false)?.increments)
    }

    /// Increments together with, when `with_gap` is set, the per-block
    /// `max_{n in D_k} |p(M_n x) - phi_n(x)|`.
    pub fn block_stats(&self, x: &[CoordBits], k_max: usize, with_gap: bool) -> Result<BlockStats> {
        check_point(x, self.seq.dim())?;
        let k_max = k_max.min(self.schedule.k_count());
        if let Some(c) = x.first() {
            let need = self.schedule.level(k_max);
            if c.bits() < need {
                return Err(LacunaError::PrecisionInsufficient { have: c.bits(), need });
            }
        }
        let mut out = BlockStats { increments: Vec::with_capacity(k_max), sup_gap: Vec::new() };
        for b in &self.schedule.blocks[..k_max] {
            let fine = b.level;
            let coarse = self.schedule.level(b.k - 1);
            let fc = x.iter().map(|c| CellCenter::new(c, fine)).collect::<Result<Vec<_>>>()?;
            let cc = x.iter().map(|c| CellCenter::new(c, coarse)).collect::<Result<Vec<_>>>()?;
            let mut s = 0.0;
            let mut gap = 0.0f64;
            for n in b.main.iter() {
                let phi = self.average_with(n, &fc, fine) - self.average_with(n, &cc, coarse);
                s += phi;
                if with_gap {
                    gap = gap.max((self.orbit_value(n, x)? - phi).abs());
                }
            }
            out.increments.push(s);
            if with_gap {
                out.sup_gap.push(gap);
            }
        }
        Ok(out)
    }

    /// Monte Carlo estimate of `E[X_k^2 | F_{k-1}](x)` with its standard error,
    /// drawing points uniformly inside the level-`m(k-1)` cell of `x`.
    pub fn conditional_second_moment(
        &self,
        k: usize,
        x: &DyadicPoint,
        samples: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        if k == 0 || k > self.schedule.k_count() {
            return Err(invalid(format!("block {k} is outside 1..={}", self.schedule.k_count())));
        }
        if samples < 2 {
            return Err(invalid("at least two samples are needed"));
        }
        let coarse = self.schedule.level(k - 1);
        let bits = self.required_bits(k).max(x.bits());
        let cell = cell_of(x, coarse)?;
        let vals = (0..samples as u64)
            .map(|i| {
                let raw = sample_uniform_bits(seed, i, bits, x.dim())?;
                let pt: Vec<CoordBits> = raw
                    .iter()
                    .zip(&cell)
                    .map(|(r, v)| {
                        let low = r.numerator() & ((BigUint::one() << (bits - coarse)) - BigUint::one());
                        CoordBits::from_biguint(&((v << (bits - coarse)) | low), bits)
                    })
                    .collect();
                Ok(self.increments(&pt, k)?[k - 1].powi(2))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(mean_and_se(&vals))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockStats {
    pub increments: Vec<f64>,
    /// Empty unless requested.
    pub sup_gap: Vec<f64>,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn check_cell(cell: &Cell, d: usize) -> Result<()> {
    if cell.v.len() != d {
        return Err(LacunaError::DimensionMismatch { expected: d, got: cell.v.len() });
    }
    Ok(())
}

fn check_point(x: &[CoordBits], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(LacunaError::DimensionMismatch { expected: d, got: x.len() });
    }
    Ok(())
}

/// A uniformly random level-`level` cell, a pure function of `(seed, index)`.
pub fn random_cell(seed: u64, index: u64, d: usize, level: u64) -> Result<Cell> {
    use rand::Rng;
    let mut rng = stream_rng(seed, index);
    let v = (0..d)
        .map(|_| {
            let words: Vec<u32> = (0..level.div_ceil(32)).map(|_| rng.random::<u32>()).collect();
            let mut c = BigUint::new(words);
            if level % 32 != 0 {
                c >>= 32 - level % 32;
            }
            c
        })
        .collect();
    Cell::new(v, level)
}
