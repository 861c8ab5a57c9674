//! Sparse real trigonometric polynomials on the torus.
//!
//! A polynomial is `mean + sum_j a_j cos(2 pi <j,x>) + b_j sin(2 pi <j,x>)`
//! over canonical frequencies `j` (first nonzero entry positive).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LacunaError, Result};
use crate::exactnum::{turns_to_radians, BitSource, DyadicPoint, Multiplier, Turns};
use crate::lacunary::LacunarySequence;

/// Coefficients below this magnitude are dropped after merges.
pub const PRUNE_TOL: f64 = 1e-15;

/// Default cap on the projected number of terms in an expansion.
pub const DEFAULT_TERM_CAP: usize = 20_000_000;

pub type Freq = Vec<BigInt>;

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPoly {
    d: usize,
    mean: f64,
    terms: BTreeMap<Freq, (f64, f64)>,
}

/// Folds `(j, a, b)` into canonical form; `None` for the zero frequency.
fn canonical(mut j: Freq, a: f64, b: f64) -> Option<(Freq, f64, f64)> {
    let first = j.iter().find(|v| !v.is_zero())?;
    if first.is_negative() {
        for v in j.iter_mut() {
            *v = -&*v;
        }
        Some((j, a, -b))
    } else {
        Some((j, a, b))
    }
}

impl FourierPoly {
    pub fn zero(d: usize) -> Self {
        Self { d, mean: 0.0, terms: BTreeMap::new() }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        Self { d, mean: c, terms: BTreeMap::new() }
    }

    /// Builds from small-integer frequencies; repeated frequencies add up.
    pub fn from_terms(d: usize, mean: f64, terms: &[(Vec<i64>, f64, f64)]) -> Result<Self> {
        let mut p = Self::constant(d, mean);
        for (j, a, b) in terms {
            p.add_term(j.iter().map(|&v| BigInt::from(v)).collect(), *a, *b)?;
        }
        p.prune();
        Ok(p)
    }

    /// `cos(2 pi x)`.
    pub fn cosine() -> Self {
        Self::from_terms(1, 0.0, &[(vec![1], 1.0, 0.0)]).expect("valid literal")
    }

    /// `cos(2 pi x) + cos(4 pi x)`.
    pub fn cosine_pair() -> Self {
        Self::from_terms(1, 0.0, &[(vec![1], 1.0, 0.0), (vec![2], 1.0, 0.0)]).expect("valid literal")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.mean == 0.0
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Freq, f64, f64)> {
        self.terms.iter().map(|(j, &(a, b))| (j, a, b))
    }

    pub fn coeff(&self, j: &[i64]) -> (f64, f64) {
        let key: Freq = j.iter().map(|&v| BigInt::from(v)).collect();
        match canonical(key, 0.0, 1.0) {
            None => (self.mean, 0.0),
            Some((k, _, sign)) => self.terms.get(&k).map_or((0.0, 0.0), |&(a, b)| (a, b * sign)),
        }
    }

    /// Adds `a cos(2 pi <j,x>) + b sin(2 pi <j,x>)` without pruning.
    pub fn add_term(&mut self, j: Freq, a: f64, b: f64) -> Result<()> {
        if j.len() != self.d {
            return Err(LacunaError::DimensionMismatch { expected: self.d, got: j.len() });
        }
        match canonical(j, a, b) {
            None => self.mean += a,
            Some((k, a, b)) => {
                let e = self.terms.entry(k).or_insert((0.0, 0.0));
                e.0 += a;
                e.1 += b;
            }
        }
        Ok(())
    }

    pub fn prune(&mut self) {
        self.terms.retain(|_, (a, b)| a.abs() > PRUNE_TOL || b.abs() > PRUNE_TOL);
        if self.mean.abs() <= PRUNE_TOL {
            self.mean = 0.0;
        }
    }

    fn map_terms(&self, mut w: impl FnMut(&Freq) -> f64, keep_mean: bool) -> Self {
        let mut out = Self::constant(self.d, if keep_mean { self.mean } else { 0.0 });
        for (j, &(a, b)) in &self.terms {
            let s = w(j);
            if s != 0.0 {
                out.terms.insert(j.clone(), (a * s, b * s));
            }
        }
        out.prune();
        out
    }

    /// Largest `|j_i|` per axis.
    pub fn degree(&self) -> Vec<BigInt> {
        let mut deg = vec![BigInt::zero(); self.d];
        for j in self.terms.keys() {
            for (g, v) in deg.iter_mut().zip(j) {
                if v.abs() > *g {
                    *g = v.abs();
                }
            }
        }
        deg
    }

    /// Keeps the terms with `|j_i| <= gamma_i` on every axis.
    pub fn partial_sum(&self, gamma: &[u64]) -> Result<Self> {
        if gamma.len() != self.d {
            return Err(LacunaError::DimensionMismatch { expected: self.d, got: gamma.len() });
        }
        Ok(self.map_terms(
            |j| {
                let inside = j.iter().zip(gamma).all(|(v, &g)| v.abs() <= BigInt::from(g));
                if inside { 1.0 } else { 0.0 }
            },
            true,
        ))
    }

    /// Fejér mean: terms with `||j||_inf <= g` scaled by `prod (g+1-|j_i|)/(g+1)`.
    pub fn fejer_mean(&self, g: u64) -> Self {
        self.map_terms(|j| fejer_weight(j, g), true)
    }

    /// `f - fejer_mean(f, g)`.
    pub fn remainder(&self, g: u64) -> Self {
        self.map_terms(|j| 1.0 - fejer_weight(j, g), false)
    }

    /// `mean^2 + (1/2) sum (a_j^2 + b_j^2)`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.mean * self.mean + 0.5 * self.terms.values().map(|(a, b)| a * a + b * b).sum::<f64>()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.map_terms(|_| s, true);
        out.mean *= s;
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.d, other.d)?;
        let mut out = self.clone();
        out.mean += other.mean;
        for (j, &(a, b)) in &other.terms {
            let e = out.terms.entry(j.clone()).or_insert((0.0, 0.0));
            e.0 += a;
            e.1 += b;
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Product via the product-to-sum identities.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        check_same_dim(self.d, other.d)?;
        let mut out = Self::constant(self.d, self.mean * other.mean);
        for (j, &(a, b)) in &other.terms {
            out.add_term(j.clone(), self.mean * a, self.mean * b)?;
        }
        for (j, &(a, b)) in &self.terms {
            out.add_term(j.clone(), other.mean * a, other.mean * b)?;
        }
        for (u, &(a, b)) in &self.terms {
            for (v, &(c, e)) in &other.terms {
                let plus: Freq = u.iter().zip(v).map(|(x, y)| x + y).collect();
                let minus: Freq = u.iter().zip(v).map(|(x, y)| x - y).collect();
                out.add_term(plus.clone(), 0.5 * (a * c - b * e), 0.0)?;
                out.add_term(plus, 0.0, 0.5 * (a * e + b * c))?;
                out.add_term(minus.clone(), 0.5 * (a * c + b * e), 0.0)?;
                out.add_term(minus, 0.0, 0.5 * (b * c - a * e))?;
            }
        }
        out.prune();
        Ok(out)
    }

    /// `x -> f(M x)`: each frequency `j` moves to `M^T j`.
    pub fn compose(&self, m: &crate::exactnum::IntMatrix) -> Result<Self> {
        check_same_dim(self.d, m.dim())?;
        let mut out = Self::constant(self.d, self.mean);
        for (j, &(a, b)) in &self.terms {
            out.add_term(m.transpose_mul_vec(j)?, a, b)?;
        }
        out.prune();
        Ok(out)
    }

    /// Precomputes multipliers for fast repeated evaluation.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            d: self.d,
            mean: self.mean,
            terms: self
                .terms
                .iter()
                .map(|(j, &(a, b))| CompiledTerm {
                    small: j.iter().map(|v| v.to_i64()).collect(),
                    mults: j.iter().map(Multiplier::new).collect(),
                    a,
                    b,
                })
                .collect(),
        }
    }

    /// Evaluates at an exact point.
    pub fn eval(&self, x: &DyadicPoint) -> Result<f64> {
        check_same_dim(self.d, x.dim())?;
        Ok(self.compile().eval_bits(&x.coord_bits()))
    }

    /// Evaluates at a floating point location (coordinates read mod 1).
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.compile().eval_f64(x)
    }

    pub fn to_json(&self) -> PolyFile {
        PolyFile {
            d: self.d,
            mean: self.mean,
            terms: self
                .terms
                .iter()
                .map(|(j, &(a, b))| PolyTerm { j: j.iter().map(JInt::from_big).collect(), a, b })
                .collect(),
        }
    }

    pub fn from_json(file: &PolyFile) -> Result<Self> {
        let mut p = Self::constant(file.d, file.mean);
        for t in &file.terms {
            let j = t.j.iter().map(JInt::to_big).collect::<Result<Freq>>()?;
            p.add_term(j, t.a, t.b)?;
        }
        p.prune();
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(LacunaError::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `prod_i (g+1-|j_i|)/(g+1)` inside the box `||j||_inf <= g`, else 0.
pub fn fejer_weight(j: &[BigInt], g: u64) -> f64 {
    let mut w = 1.0;
    for v in j {
        match v.abs().to_u64() {
            Some(a) if a <= g => w *= (g + 1 - a) as f64 / (g + 1) as f64,
            _ => return 0.0,
        }
    }
    w
}

/// On-disk form: `{d, mean, terms: [{j, a, b}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyFile {
    pub d: usize,
    pub mean: f64,
    pub terms: Vec<PolyTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub j: Vec<JInt>,
    pub a: f64,
    pub b: f64,
}

/// A frequency entry: a JSON integer, or a decimal string when it does not fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JInt {
    Small(i64),
    Text(String),
}

impl JInt {
    fn from_big(v: &BigInt) -> Self {
        v.to_i64().map_or_else(|| JInt::Text(v.to_string()), JInt::Small)
    }

    fn to_big(&self) -> Result<BigInt> {
        match self {
            JInt::Small(v) => Ok(BigInt::from(*v)),
            JInt::Text(s) => s.parse().map_err(|_| LacunaError::Parse(format!("bad frequency {s:?}"))),
        }
    }
}

struct CompiledTerm {
    small: Option<Vec<i64>>,
    mults: Vec<Multiplier>,
    a: f64,
    b: f64,
}

/// A polynomial with frequencies prepared for evaluation from turns.
pub struct CompiledPoly {
    d: usize,
    mean: f64,
    terms: Vec<CompiledTerm>,
}

impl CompiledPoly {
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn term_value(t: &CompiledTerm, phase: u64) -> f64 {
        let (s, c) = turns_to_radians(phase).sin_cos();
        t.a * c + t.b * s
    }

    /// Evaluates at a point given by the leading 64 bits of each coordinate.
    ///
    /// Exact for frequencies that fit in an `i64` up to the truncation of
    /// the inputs.
    #[inline]
    pub fn eval_turns(&self, x: &[u64]) -> f64 {
        let mut acc = self.mean;
        for t in &self.terms {
            let phase = match &t.small {
                Some(j) => j.iter().zip(x).fold(0u64, |p, (&ji, &xi)| p.wrapping_add((ji as u64).wrapping_mul(xi))),
                None => t.mults.iter().zip(x).fold(0u64, |p, (m, &xi)| p.wrapping_add(m.turns(&Turns(xi)))),
            };
            acc += Self::term_value(t, phase);
        }
        acc
    }

    /// Evaluates at an exact point, reading as many bits as each frequency needs.
    pub fn eval_bits<S: BitSource>(&self, x: &[S]) -> f64 {
        let mut acc = self.mean;
        for t in &self.terms {
            let phase = t.mults.iter().zip(x).fold(0u64, |p, (m, xi)| p.wrapping_add(m.turns(xi)));
            acc += Self::term_value(t, phase);
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        let turns: Vec<u64> = x.iter().map(|&v| unit_to_turns(v)).collect();
        self.eval_turns(&turns)
    }
}

/// `frac(v)` as a 64-bit fraction.
pub fn unit_to_turns(v: f64) -> u64 {
    let f = v - v.floor();
    let t = f * 18_446_744_073_709_551_616.0;
    if t >= 18_446_744_073_709_551_615.0 {
        u64::MAX
    } else {
        t as u64
    }
}

const EXPAND_CHUNK: usize = 64;

/// The polynomial `sum_{n=1}^N f(M_n x)`.
///
/// Refuses when `N * terms(f)` exceeds `cap`.
pub fn lacunary_expand(f: &FourierPoly, seq: &LacunarySequence, n_max: usize, cap: usize) -> Result<FourierPoly> {
    lacunary_expand_range(f, seq, 1, n_max, cap)
}

/// The polynomial `sum_{lo<=n<=hi} f(M_n x)`; empty when `hi < lo`.
pub fn lacunary_expand_range(
    f: &FourierPoly,
    seq: &LacunarySequence,
    lo: usize,
    hi: usize,
    cap: usize,
) -> Result<FourierPoly> {
    check_same_dim(f.d, seq.dim())?;
    if lo == 0 {
        return Err(invalid("sequence indices start at 1"));
    }
    let count = (hi + 1).saturating_sub(lo);
    let projected = (count as u128) * (f.terms.len() as u128);
    if projected > cap as u128 {
        return Err(LacunaError::CostGuard {
            what: "lacunary expansion",
            projected,
            cap: cap as u128,
            hint: "; use sigma2_streaming for the norm alone",
        });
    }
    let chunks: Vec<(usize, usize)> = (lo..=hi)
        .step_by(EXPAND_CHUNK)
        .map(|a| (a, (a + EXPAND_CHUNK - 1).min(hi)))
        .collect();
    let parts = chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut acc = FourierPoly::zero(f.d);
            for n in a..=b {
                for (j, &(a, b)) in &f.terms {
                    acc.add_term(seq.frequency(n, j)?, a, b)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = FourierPoly::constant(f.d, f.mean * count as f64);
    for part in parts {
        for (j, (a, b)) in part.terms {
            let e = out.terms.entry(j).or_insert((0.0, 0.0));
            e.0 += a;
            e.1 += b;
        }
    }
    out.prune();
    Ok(out)
}

/// `sigma_N^2 = || sum_{n<=N} f(M_n .) ||_2^2`.
pub fn sigma2(f: &FourierPoly, seq: &LacunarySequence, n_max: usize) -> Result<f64> {
    Ok(lacunary_expand(f, seq, n_max, DEFAULT_TERM_CAP)?.l2_norm_sq())
}

/// `sigma_n^2` for every `n <= N`, inserting one index at a time into a
/// frequency accumulator and keeping the running norm.
pub fn sigma2_streaming(f: &FourierPoly, seq: &LacunarySequence, n_max: usize) -> Result<Vec<f64>> {
    check_same_dim(f.d, seq.dim())?;
    let mut acc: BTreeMap<Freq, (f64, f64)> = BTreeMap::new();
    let mut sq = 0.0;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        for (j, &(a, b)) in &f.terms {
            let (k, a, b) = canonical(seq.frequency(n, j)?, a, b)
                .ok_or_else(|| invalid("non-singular matrices cannot map a nonzero frequency to zero"))?;
            let e = acc.entry(k).or_insert((0.0, 0.0));
            sq -= e.0 * e.0 + e.1 * e.1;
            e.0 += a;
            e.1 += b;
            sq += e.0 * e.0 + e.1 * e.1;
        }
        let m = f.mean * n as f64;
        out.push(m * m + 0.5 * sq.max(0.0));
    }
    Ok(out)
}

/// Truncated Fourier series of a centered box indicator together with the
/// exact squared L2 distance to the full indicator.
#[derive(Clone, Debug)]
pub struct BoxExpansion {
    pub poly: FourierPoly,
    pub tail_l2_sq: f64,
}

/// Per-axis complex coefficients `c_m` of `1_[0,beta)` for `|m| <= g`, as
/// `(re, im)` indexed by `m + g`.
fn axis_coeffs(beta: f64, g: u64) -> Vec<(f64, f64)> {
    let g = g as i64;
    (-g..=g)
        .map(|m| {
            if m == 0 {
                (beta, 0.0)
            } else {
                // (1 - e^{-2 pi i m beta}) / (2 pi i m)
                let t = 2.0 * PI * m as f64;
                let (s, c) = (t * beta).sin_cos();
                (s / t, -(1.0 - c) / t)
            }
        })
        .collect()
}

/// `|c_m|^2` summed over `|m| <= g`.
fn axis_energy(beta: f64, g: u64) -> f64 {
    beta * beta
        + 2.0
            * (1..=g)
                .map(|m| {
                    let s = (PI * m as f64 * beta).sin();
                    s * s / (PI * m as f64).powi(2)
                })
                .sum::<f64>()
}

fn check_beta(beta: &[f64]) -> Result<()> {
    if beta.is_empty() || beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(invalid("box corner must lie in [0,1]^d"));
    }
    Ok(())
}

/// Degree-`gamma` partial sum of `1_[0,beta) - prod beta_i`.
pub fn box_indicator_coeffs(beta: &[f64], gamma: &[u64]) -> Result<BoxExpansion> {
    check_beta(beta)?;
    check_same_dim(beta.len(), gamma.len())?;
    let d = beta.len();
    let axes: Vec<Vec<(f64, f64)>> = beta.iter().zip(gamma).map(|(&b, &g)| axis_coeffs(b, g)).collect();
    let mut poly = FourierPoly::zero(d);
    let mut idx = vec![0usize; d];
    loop {
        let j: Vec<i64> = idx.iter().zip(gamma).map(|(&i, &g)| i as i64 - g as i64).collect();
        let positive = j.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0);
        if positive {
            let (mut re, mut im) = (1.0, 0.0);
            for (ax, &i) in axes.iter().zip(&idx) {
                let (cr, ci) = ax[i];
                (re, im) = (re * cr - im * ci, re * ci + im * cr);
            }
            poly.terms.insert(j.into_iter().map(BigInt::from).collect(), (2.0 * re, -2.0 * im));
        }
        let mut ax = 0;
        loop {
            if ax == d {
                poly.prune();
                let vol: f64 = beta.iter().product();
                let inside: f64 = beta.iter().zip(gamma).map(|(&b, &g)| axis_energy(b, g)).product();
                return Ok(BoxExpansion { poly, tail_l2_sq: (vol - inside).max(0.0) });
            }
            idx[ax] += 1;
            if idx[ax] <= 2 * gamma[ax] as usize {
                break;
            }
            idx[ax] = 0;
            ax += 1;
        }
    }
}

/// `||r_G||_2^2` for the centered indicator of `[0,beta)`, summed directly
/// over the `(2G+1)^d` in-box frequencies plus the closed-form tail.
pub fn box_remainder_norm_sq(beta: &[f64], g: u64) -> Result<f64> {
    check_beta(beta)?;
    let d = beta.len();
    let gi = g as i64;
    // per-axis |c_m|^2 and Fejér factors
    let energy: Vec<Vec<f64>> = beta
        .iter()
        .map(|&b| axis_coeffs(b, g).into_iter().map(|(r, i)| r * r + i * i).collect())
        .collect();
    let weight: Vec<f64> = (-gi..=gi).map(|m| (g + 1 - m.unsigned_abs()) as f64 / (g + 1) as f64).collect();
    let side = (2 * g + 1) as usize;
    let total = side.pow(d as u32);
    let center = total / 2;
    let inside: f64 = (0..total)
        .into_par_iter()
        .with_min_len(4096)
        .map(|mut idx| {
            if idx == center {
                return 0.0;
            }
            let (mut e, mut w) = (1.0, 1.0);
            for ax in energy.iter() {
                let i = idx % side;
                idx /= side;
                e *= ax[i];
                w *= weight[i];
            }
            e * (1.0 - w) * (1.0 - w)
        })
        .sum();
    let vol: f64 = beta.iter().product();
    let in_box: f64 = beta.iter().map(|&b| axis_energy(b, g)).product();
    Ok(inside + (vol - in_box).max(0.0))
}

/// `||f||_2^2 = prod beta - (prod beta)^2` for the centered indicator.
pub fn box_indicator_norm_sq(beta: &[f64]) -> f64 {
    let v: f64 = beta.iter().product();
    v - v * v
}

/// Evaluates the centered indicator `1_[0,beta)(x) - prod beta`.
pub fn box_indicator_value(beta: &[f64], x: &[f64]) -> f64 {
    let inside = beta.iter().zip(x).all(|(&b, &v)| (0.0..b).contains(&v));
    let vol: f64 = beta.iter().product();
    if inside { 1.0 - vol } else { -vol }
}
