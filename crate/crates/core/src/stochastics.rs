//! Monte Carlo experiments for lacunary sums: CLT against candidate limit
//! laws, LIL ratio paths and the LIL for the star discrepancy.

use std::f64::consts::{PI, SQRT_2};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use crate::erf::erfc;

use crate::discrepancy::{star_disc_2d, star_disc_sorted_turns, PointSet};
use crate::error::{invalid, LacunaError, Result};
use crate::exactnum::{
    required_bits, sample_uniform_bits, stream_rng, turns_to_unit, BitSource, CoordBits, Multiplier, DEFAULT_GUARD_BITS,
};
use crate::fourier::{sigma2_streaming, CompiledPoly, FourierPoly};
use crate::lacunary::LacunarySequence;
use crate::martingale::log1;
use crate::quad::integrate;

/// `Phi(t)`.
pub fn normal_cdf(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-t / SQRT_2)
}

const EF_TOL: f64 = 1e-11;

/// `int_0^1 Phi(t / (sqrt2 |cos pi s|)) ds`: the normal variance mixture with
/// variance `2 cos^2(pi s)`, `s` uniform.
pub fn erdos_fortet_cdf(t: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    // symmetric in s about 1/2
    let g = |s: f64| {
        let c = (PI * s).cos();
        if c <= 0.0 {
            if t > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            normal_cdf(t / (SQRT_2 * c))
        }
    };
    2.0 * integrate(&g, 0.0, 0.5, EF_TOL).map(|r| r.0).unwrap_or(f64::NAN)
}

/// `int_0^1 Phi(t |cos pi s| / sqrt2) ds`, the mixture with the scale
/// inverted.
pub fn erdos_fortet_cdf_as_printed(t: f64) -> f64 {
    let g = |s: f64| normal_cdf(t * (PI * s).cos().abs() / SQRT_2);
    2.0 * integrate(&g, 0.0, 0.5, EF_TOL).map(|r| r.0).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LimitLaw {
    StandardNormal,
    ErdosFortetMixture,
    ErdosFortetAsPrinted,
    ScaledNormal { sigma: f64 },
    /// Empirical law of a finite sample; `values` are sorted on use.
    Empirical { values: Vec<f64> },
}

impl LimitLaw {
    pub fn name(&self) -> String {
        match self {
            LimitLaw::StandardNormal => "standard_normal".into(),
            LimitLaw::ErdosFortetMixture => "erdos_fortet_mixture".into(),
            LimitLaw::ErdosFortetAsPrinted => "erdos_fortet_as_printed".into(),
            LimitLaw::ScaledNormal { sigma } => format!("scaled_normal({sigma})"),
            LimitLaw::Empirical { values } => format!("empirical({})", values.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LimitLaw::ScaledNormal { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid("scaled normal needs a positive sigma"))
            }
            LimitLaw::Empirical { values } if values.is_empty() || values.iter().any(|v| v.is_nan()) => {
                Err(invalid("empirical law needs finite values"))
            }
            _ => Ok(()),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            LimitLaw::StandardNormal => normal_cdf(t),
            LimitLaw::ErdosFortetMixture => erdos_fortet_cdf(t),
            LimitLaw::ErdosFortetAsPrinted => erdos_fortet_cdf_as_printed(t),
            LimitLaw::ScaledNormal { sigma } => normal_cdf(t / sigma),
            LimitLaw::Empirical { values } => {
                values.iter().filter(|&&v| v <= t).count() as f64 / values.len() as f64
            }
        }
    }

    /// `P(X < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match self {
            LimitLaw::Empirical { values } => values.iter().filter(|&&v| v < t).count() as f64 / values.len() as f64,
            _ => self.cdf(t),
        }
    }
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical law of
/// `values` and `law`.
pub fn ks_distance(values: &[f64], law: &LimitLaw) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("KS distance needs at least one value"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid("values contain NaN"));
    }
    law.validate()?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let law = match law {
        LimitLaw::Empirical { values } => {
            let mut s = values.clone();
            s.sort_by(f64::total_cmp);
            SortedLaw::Empirical(s)
        }
        other => SortedLaw::Other(other),
    };
    let n = v.len() as f64;
    let mut best = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = (j + 1) as f64 / n;
        best = best.max((upto - law.cdf(v[i])).abs()).max((below - law.cdf_left(v[i])).abs());
        i = j + 1;
    }
    Ok(best)
}

enum SortedLaw<'a> {
    Empirical(Vec<f64>),
    Other(&'a LimitLaw),
}

impl SortedLaw<'_> {
    fn cdf(&self, t: f64) -> f64 {
        match self {
            SortedLaw::Empirical(s) => s.partition_point(|&x| x <= t) as f64 / s.len() as f64,
            SortedLaw::Other(l) => l.cdf(t),
        }
    }

    fn cdf_left(&self, t: f64) -> f64 {
        match self {
            SortedLaw::Empirical(s) => s.partition_point(|&x| x < t) as f64 / s.len() as f64,
            SortedLaw::Other(l) => l.cdf_left(t),
        }
    }
}

/// `sup_t |F_a(t) - F_b(t)|` for continuous laws, with its location: a grid
/// on `[-10, 10]` refined by golden-section search.
pub fn law_distance(a: &LimitLaw, b: &LimitLaw) -> (f64, f64) {
    let gap = |t: f64| (a.cdf(t) - b.cdf(t)).abs();
    let step = 0.01;
    let (mut t_best, mut best) = (0.0, gap(0.0));
    for i in -1000..=1000 {
        let t = i as f64 * step;
        let v = gap(t);
        if v > best {
            (t_best, best) = (t, v);
        }
    }
    let (mut lo, mut hi) = (t_best - step, t_best + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let m1 = hi - r * (hi - lo);
        let m2 = lo + r * (hi - lo);
        if gap(m1) > gap(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    let v = gap(t);
    if v > best {
        (v, t)
    } else {
        (best, t_best)
    }
}

/// Orbit coordinates `frac(M_n x)` as 64-bit turns, prepared for `n <= n_max`.
pub struct OrbitPlan {
    d: usize,
    kind: PlanKind,
}

enum PlanKind {
    Pow2 { step: u64 },
    Table(Vec<Vec<Multiplier>>),
}

/// Multiplier tables are refused beyond this many entries.
pub const DEFAULT_PLAN_CAP: usize = 50_000_000;

impl OrbitPlan {
    pub fn new(seq: &LacunarySequence, n_max: usize) -> Result<Self> {
        let d = seq.dim();
        if let Some(len) = seq.len() {
            if n_max > len {
                return Err(LacunaError::IndexOutOfRange { n: n_max, len });
            }
        }
        if let Some(step) = seq.power_of_two_shift(1) {
            return Ok(Self { d, kind: PlanKind::Pow2 { step } });
        }
        let projected = n_max as u128 * (d * d) as u128;
        if projected > DEFAULT_PLAN_CAP as u128 {
            return Err(LacunaError::CostGuard {
                what: "orbit multiplier table",
                projected,
                cap: DEFAULT_PLAN_CAP as u128,
                hint: "; reduce N",
            });
        }
        let rows = (1..=n_max).map(|n| seq.multipliers(n)).collect::<Result<Vec<_>>>()?;
        Ok(Self { d, kind: PlanKind::Table(rows) })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Writes `frac(M_n x)` into `out`.
    #[inline]
    pub fn orbit_turns(&self, n: usize, x: &[CoordBits], out: &mut [u64]) {
        match &self.kind {
            PlanKind::Pow2 { step } => {
                let s = step * n as u64;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = Multiplier::Shifted { mult: 1, shift: s }.turns(xi);
                }
            }
            PlanKind::Table(rows) => {
                let m = &rows[n - 1];
                for (r, o) in out.iter_mut().enumerate() {
                    *o = (0..self.d).fold(0u64, |acc, c| acc.wrapping_add(m[r * self.d + c].turns(&x[c])));
                }
            }
        }
    }
}

fn check_checkpoints(cps: &[usize]) -> Result<usize> {
    if cps.is_empty() || cps[0] == 0 || cps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("checkpoints must be positive and strictly increasing"));
    }
    Ok(*cps.last().expect("non-empty"))
}

fn resolve_bits(seq: &LacunarySequence, n_max: usize, bits: Option<u64>) -> Result<u64> {
    let need = required_bits(seq, n_max, DEFAULT_GUARD_BITS)?;
    match bits {
        Some(b) if b < need => Err(LacunaError::PrecisionInsufficient { have: b, need }),
        Some(b) => Ok(b),
        None => Ok(need),
    }
}

/// Partial sums `S_N(x_i)` at each checkpoint for every sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumPaths {
    pub checkpoints: Vec<usize>,
    pub bits: u64,
    /// `sums[i][c]` is `S_{checkpoints[c]}(x_i)`.
    pub sums: Vec<Vec<f64>>,
    /// First coordinate of each sample point.
    pub first_coord: Vec<f64>,
}

/// Streams `n = 1..=N_max` per sample, recording the running sum at the
/// checkpoints. `bits = None` picks the smallest safe precision.
pub fn simulate_sums(
    f: &FourierPoly,
    seq: &LacunarySequence,
    checkpoints: &[usize],
    samples: usize,
    seed: u64,
    bits: Option<u64>,
) -> Result<SumPaths> {
    if f.dim() != seq.dim() {
        return Err(LacunaError::DimensionMismatch { expected: seq.dim(), got: f.dim() });
    }
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    let n_max = check_checkpoints(checkpoints)?;
    let bits = resolve_bits(seq, n_max, bits)?;
    let plan = OrbitPlan::new(seq, n_max)?;
    let poly = f.compile();
    let rows = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_uniform_bits(seed, i, bits, seq.dim())?;
            Ok((sample_path(&poly, &plan, &x, checkpoints), turns_to_unit(x[0].window(0))))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sums, first_coord) = rows.into_iter().unzip();
    Ok(SumPaths { checkpoints: checkpoints.to_vec(), bits, sums, first_coord })
}

fn sample_path(poly: &CompiledPoly, plan: &OrbitPlan, x: &[CoordBits], cps: &[usize]) -> Vec<f64> {
    let mut y = vec![0u64; plan.dim()];
    let mut s = 0.0;
    let mut out = Vec::with_capacity(cps.len());
    let mut next = 0;
    for n in 1..=*cps.last().expect("checked") {
        plan.orbit_turns(n, x, &mut y);
        s += poly.eval_turns(&y);
        if n == cps[next] {
            out.push(s);
            next += 1;
        }
    }
    out
}

/// Geometric grid `n_min * 2^(i/4)` on `[n_min, n_max]`, always ending at `n_max`.
pub fn geometric_checkpoints(n_min: usize, n_max: usize) -> Result<Vec<usize>> {
    if n_min == 0 || n_min > n_max {
        return Err(invalid("need 1 <= N_min <= N_max"));
    }
    let mut out = Vec::new();
    let mut i = 0i32;
    loop {
        let n = (n_min as f64 * 2f64.powf(i as f64 / 4.0)).round() as usize;
        if n >= n_max {
            break;
        }
        if out.last() != Some(&n) {
            out.push(n);
        }
        i += 1;
    }
    out.push(n_max);
    Ok(out)
}

/// `log log N` with `log = max(1, ln)`.
pub fn loglog(n: f64) -> f64 {
    log1(log1(n))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `sigma_N`.
    #[default]
    Sigma,
    /// Divide by `sqrt(N)`.
    SqrtN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub n: usize,
    pub law: String,
    pub ks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            q10: quantile_sorted(&v, 0.10),
            q25: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q75: quantile_sorted(&v, 0.75),
            q90: quantile_sorted(&v, 0.90),
        })
    }
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Output of every experiment; one row of `values` per sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub samples: usize,
    pub seed: u64,
    pub bits: u64,
    pub checkpoints: Vec<usize>,
    /// Per-checkpoint divisor applied to the raw statistic.
    pub normalizers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sigma2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ks: Vec<KsRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moments: Vec<MomentRow>,
    /// `values[i][c]`: normalized statistic of sample `i` at checkpoint `c`.
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path_max: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_max_summary: Option<Quantiles>,
    /// Path maxima under `sqrt(N log log N)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path_max_alt: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_max_alt_summary: Option<Quantiles>,
    /// Spearman correlation of `path_max_alt` with `|cos(pi x_1)|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_correlation: Option<f64>,
}

impl ExperimentReport {
    /// Tidy rows `(sample, n, value)`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(move |(i, row)| row.iter().zip(&self.checkpoints).map(move |(&v, &n)| (i, n, v)))
    }

    pub fn ks_at(&self, n: usize, law: &LimitLaw) -> Option<f64> {
        let name = law.name();
        self.ks.iter().find(|r| r.n == n && r.law == name).map(|r| r.ks)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltParams {
    pub n_list: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub bits: Option<u64>,
    #[serde(default)]
    pub normalization: Normalization,
    pub laws: Vec<LimitLaw>,
}

fn mean_var(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = if n > 1.0 { v.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

/// Normalized partial sums at each `N` and their KS distance to each law.
pub fn clt_experiment(f: &FourierPoly, seq: &LacunarySequence, p: &CltParams) -> Result<ExperimentReport> {
    for law in &p.laws {
        law.validate()?;
    }
    let n_max = check_checkpoints(&p.n_list)?;
    let s2_all = sigma2_streaming(f, seq, n_max)?;
    let sigma2: Vec<f64> = p.n_list.iter().map(|&n| s2_all[n - 1]).collect();
    if let Some((i, _)) = sigma2.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(LacunaError::Degenerate(format!("sigma_N^2 = 0 at N = {}", p.n_list[i])));
    }
    let normalizers: Vec<f64> = match p.normalization {
        Normalization::Sigma => sigma2.iter().map(|v| v.sqrt()).collect(),
        Normalization::SqrtN => p.n_list.iter().map(|&n| (n as f64).sqrt()).collect(),
    };
    let paths = simulate_sums(f, seq, &p.n_list, p.samples, p.seed, p.bits)?;
    let values: Vec<Vec<f64>> =
        paths.sums.iter().map(|row| row.iter().zip(&normalizers).map(|(s, z)| s / z).collect()).collect();
    let mut ks = Vec::new();
    let mut moments = Vec::new();
    for (c, &n) in p.n_list.iter().enumerate() {
        let col: Vec<f64> = values.iter().map(|r| r[c]).collect();
        let (mean, variance) = mean_var(col.iter().copied());
        moments.push(MomentRow { n, mean, variance });
        for law in &p.laws {
            ks.push(KsRow { n, law: law.name(), ks: ks_distance(&col, law)? });
        }
    }
    Ok(ExperimentReport {
        experiment: "clt".into(),
        samples: p.samples,
        seed: p.seed,
        bits: paths.bits,
        checkpoints: p.n_list.clone(),
        normalizers,
        sigma2,
        ks,
        moments,
        values,
        ..Default::default()
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let (ma, va) = mean_var(ra.iter().copied());
    let (mb, vb) = mean_var(rb.iter().copied());
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    let cov = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64;
    Some(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilParams {
    pub n_min: usize,
    pub n_max: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub bits: Option<u64>,
}

impl LilParams {
    fn validate(&self) -> Result<Vec<usize>> {
        if self.n_min < 16 {
            return Err(invalid("N_min must be at least 16"));
        }
        if self.samples == 0 {
            return Err(invalid("samples must be positive"));
        }
        geometric_checkpoints(self.n_min, self.n_max)
    }
}

fn finish_lil(
    experiment: &str,
    p: &LilParams,
    bits: u64,
    checkpoints: Vec<usize>,
    raw: &[Vec<f64>],
) -> ExperimentReport {
    let normalizers: Vec<f64> =
        checkpoints.iter().map(|&n| (2.0 * n as f64 * loglog(n as f64)).sqrt()).collect();
    let alt: Vec<f64> = checkpoints.iter().map(|&n| (n as f64 * loglog(n as f64)).sqrt()).collect();
    let values: Vec<Vec<f64>> =
        raw.iter().map(|r| r.iter().zip(&normalizers).map(|(s, z)| s.abs() / z).collect()).collect();
    let path_max: Vec<f64> = values.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let path_max_alt: Vec<f64> = raw
        .iter()
        .map(|r| r.iter().zip(&alt).map(|(s, z)| s.abs() / z).fold(0.0, f64::max))
        .collect();
    ExperimentReport {
        experiment: experiment.into(),
        samples: p.samples,
        seed: p.seed,
        bits,
        checkpoints,
        normalizers,
        values,
        path_max_summary: Quantiles::of(&path_max),
        path_max,
        path_max_alt_summary: Quantiles::of(&path_max_alt),
        path_max_alt,
        ..Default::default()
    }
}

/// Paths of `|S_N| / sqrt(2 N log log N)` on the geometric grid.
pub fn lil_paths(f: &FourierPoly, seq: &LacunarySequence, p: &LilParams) -> Result<ExperimentReport> {
    let cps = p.validate()?;
    let paths = simulate_sums(f, seq, &cps, p.samples, p.seed, p.bits)?;
    let mut rep = finish_lil("lil", p, paths.bits, cps, &paths.sums);
    let cosines: Vec<f64> = paths.first_coord.iter().map(|x| (PI * x).cos().abs()).collect();
    rep.rank_correlation = spearman(&rep.path_max_alt, &cosines);
    Ok(rep)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMode {
    /// `frac(M_n x)` for a uniform `x`.
    #[default]
    Orbit,
    /// Independent uniform points.
    Iid,
}

const IID_SEED_SALT: u64 = 0x1D_5EED;

/// Largest 2-d prefix handled by the exact sweep.
pub const LIL_DISC_2D_CAP: usize = 4096;

/// Paths of `N D*_N / sqrt(2 N log log N)` on the geometric grid.
pub fn lil_discrepancy(seq: &LacunarySequence, p: &LilParams, mode: PointMode) -> Result<ExperimentReport> {
    let cps = p.validate()?;
    let d = seq.dim();
    if d > 2 {
        return Err(invalid("discrepancy paths need d <= 2"));
    }
    if d == 2 && p.n_max > LIL_DISC_2D_CAP {
        return Err(LacunaError::CostGuard {
            what: "2-d discrepancy path",
            projected: p.n_max as u128,
            cap: LIL_DISC_2D_CAP as u128,
            hint: "; reduce N_max",
        });
    }
    let (bits, plan) = match mode {
        PointMode::Orbit => (resolve_bits(seq, p.n_max, p.bits)?, Some(OrbitPlan::new(seq, p.n_max)?)),
        PointMode::Iid => (64, None),
    };
    let raw = (0..p.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut next_point: Box<dyn FnMut(usize, &mut [u64])> = match &plan {
                Some(plan) => {
                    let x = sample_uniform_bits(p.seed, i, bits, d)?;
                    Box::new(move |n, out: &mut [u64]| plan.orbit_turns(n, &x, out))
                }
                None => {
                    let mut rng = stream_rng(p.seed ^ IID_SEED_SALT, i);
                    Box::new(move |_, out: &mut [u64]| out.iter_mut().for_each(|o| *o = rng.next_u64()))
                }
            };
            if d == 1 {
                Ok(disc_path_1d(&cps, &mut *next_point))
            } else {
                disc_path_2d(&cps, &mut *next_point)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let name = match mode {
        PointMode::Orbit => "lil_discrepancy",
        PointMode::Iid => "lil_discrepancy_iid",
    };
    Ok(finish_lil(name, p, bits, cps, &raw))
}

/// `N D*_N` at each checkpoint, merging sorted chunks as the prefix grows.
fn disc_path_1d(cps: &[usize], next_point: &mut dyn FnMut(usize, &mut [u64])) -> Vec<f64> {
    let mut sorted: Vec<u64> = Vec::new();
    let mut chunk = Vec::new();
    let mut out = Vec::with_capacity(cps.len());
    let mut y = [0u64];
    let mut n = 0;
    for &cp in cps {
        chunk.clear();
        while n < cp {
            n += 1;
            next_point(n, &mut y);
            chunk.push(y[0]);
        }
        chunk.sort_unstable();
        sorted = merge_sorted(&sorted, &chunk);
        out.push(cp as f64 * star_disc_sorted_turns(&sorted));
    }
    out
}

fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn disc_path_2d(cps: &[usize], next_point: &mut dyn FnMut(usize, &mut [u64])) -> Result<Vec<f64>> {
    let mut pts: Vec<Vec<u64>> = Vec::new();
    let mut out = Vec::with_capacity(cps.len());
    let mut y = [0u64; 2];
    for &cp in cps {
        while pts.len() < cp {
            next_point(pts.len() + 1, &mut y);
            pts.push(y.to_vec());
        }
        let set = PointSet::from_u64(&pts, 64)?;
        out.push(cp as f64 * star_disc_2d(&set)?.value);
    }
    Ok(out)
}

/// `mean_i S_N(x_i)^4 / N^2` at each checkpoint.
pub fn fourth_moment_ratio(paths: &SumPaths) -> Vec<f64> {
    paths
        .checkpoints
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            paths.sums.iter().map(|r| r[c].powi(4)).sum::<f64>() / paths.sums.len() as f64 / (n as f64).powi(2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(12.0) - 1.0).abs() < 1e-12);
        assert!(normal_cdf(-12.0) < 1e-12);
        let (q, _) = integrate(&|y: f64| (-0.5 * y * y).exp() / (2.0 * PI).sqrt(), -12.0, 1.96, 1e-13).unwrap();
        assert!((normal_cdf(1.96) - q).abs() < 1e-12, "{} {q} {}", normal_cdf(1.96), normal_cdf(1.96) - q);
        assert!((normal_cdf(1.96) - 0.975).abs() < 0.001);
    }

    #[test]
    fn erdos_fortet_symmetry_and_tails() {
        assert_eq!(erdos_fortet_cdf(0.0), 0.5);
        for t in [0.3, 1.0, 2.5] {
            assert!((erdos_fortet_cdf(t) + erdos_fortet_cdf(-t) - 1.0).abs() < 1e-9);
        }
        assert!((erdos_fortet_cdf(12.0) - 1.0).abs() < 1e-6);
        assert!((erdos_fortet_cdf_as_printed(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn erdos_fortet_against_monte_carlo() {
        // P(sqrt2 |cos pi s| Z <= 1) with s, Z independent
        use rand::Rng;
        use rand_distr_free::normal;
        let mut rng = stream_rng(11, 0);
        let n = 400_000;
        let hits = (0..n)
            .filter(|_| {
                let s: f64 = rng.random();
                let z = normal(&mut rng);
                SQRT_2 * (PI * s).cos().abs() * z <= 1.0
            })
            .count() as f64;
        let p = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((erdos_fortet_cdf(1.0) - p).abs() < 3.0 * se, "{} {p} {se}", erdos_fortet_cdf(1.0));
    }

    mod rand_distr_free {
        use rand::Rng;

        /// Box–Muller.
        pub fn normal(rng: &mut impl Rng) -> f64 {
            let u: f64 = 1.0 - rng.random::<f64>();
            let v: f64 = rng.random();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        }
    }

    #[test]
    fn cdfs_monotone_with_limits() {
        for law in [LimitLaw::StandardNormal, LimitLaw::ErdosFortetMixture, LimitLaw::ScaledNormal { sigma: 0.5 }] {
            let mut prev = 0.0;
            for i in -60..=60 {
                let v = law.cdf(i as f64 * 0.2);
                assert!(v + 1e-12 >= prev);
                prev = v;
            }
            assert!(law.cdf(-12.0) < 1e-9);
            assert!(law.cdf(12.0) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn ks_examples() {
        assert!((ks_distance(&[0.0; 10], &LimitLaw::StandardNormal).unwrap() - 0.5).abs() < 1e-15);
        let n = 100;
        let q: Vec<f64> = (1..=n).map(|i| inverse_normal((i as f64 - 0.5) / n as f64)).collect();
        assert!(ks_distance(&q, &LimitLaw::StandardNormal).unwrap() <= 0.005 + 0.5 / n as f64);
        let v = vec![0.3, -1.0, 2.0, 0.3, 5.0];
        assert_eq!(ks_distance(&v, &LimitLaw::Empirical { values: v.clone() }).unwrap(), 0.0);
        assert!(ks_distance(&[], &LimitLaw::StandardNormal).is_err());
    }

    fn inverse_normal(p: f64) -> f64 {
        let (mut lo, mut hi) = (-12.0, 12.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if normal_cdf(m) < p {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn ks_inverse_transform_band() {
        let mut rng = stream_rng(5, 0);
        let v: Vec<f64> =
            (0..10_000).map(|_| inverse_normal(turns_to_unit(rng.next_u64()).clamp(1e-12, 1.0 - 1e-12))).collect();
        assert!(ks_distance(&v, &LimitLaw::StandardNormal).unwrap() <= 1.63 / 100.0 * 1.5);
    }

    #[test]
    fn mixture_distance_is_positive() {
        let (delta, t) = law_distance(&LimitLaw::ErdosFortetMixture, &LimitLaw::StandardNormal);
        assert!(delta > 0.05 && delta < 0.07, "{delta} at {t}");
    }

    #[test]
    fn zero_function_gives_zero_sums() {
        let seq = LacunarySequence::geometric(2).unwrap();
        let p = simulate_sums(&FourierPoly::zero(1), &seq, &[4, 16], 3, 1, None).unwrap();
        assert!(p.sums.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sums_variance_and_determinism() {
        let seq = LacunarySequence::geometric(2).unwrap();
        let f = FourierPoly::cosine();
        let a = simulate_sums(&f, &seq, &[256], 2000, 3, None).unwrap();
        let b = simulate_sums(&f, &seq, &[256], 2000, 3, None).unwrap();
        assert_eq!(a, b);
        let (_, var) = mean_var(a.sums.iter().map(|r| r[0] / 16.0));
        assert!((var - 0.5).abs() < 0.05, "{var}");
    }

    #[test]
    fn precision_checked_before_work() {
        let seq = LacunarySequence::geometric(2).unwrap();
        let e = simulate_sums(&FourierPoly::cosine(), &seq, &[100], 1, 0, Some(80)).unwrap_err();
        assert!(matches!(e, LacunaError::PrecisionInsufficient { .. }));
    }

    #[test]
    fn clt_rejects_degenerate_and_runs() {
        let seq = LacunarySequence::geometric(2).unwrap();
        let p = CltParams {
            n_list: vec![16, 64],
            samples: 500,
            seed: 1,
            bits: None,
            normalization: Normalization::Sigma,
            laws: vec![LimitLaw::StandardNormal],
        };
        assert!(matches!(clt_experiment(&FourierPoly::zero(1), &seq, &p), Err(LacunaError::Degenerate(_))));
        let r = clt_experiment(&FourierPoly::cosine(), &seq, &p).unwrap();
        assert_eq!(r.ks.len(), 2);
        assert!(r.moments.iter().all(|m| (m.variance - 1.0).abs() < 5.0 * (2.0 / 500f64).sqrt()));
    }

    #[test]
    fn checkpoints_are_geometric() {
        let c = geometric_checkpoints(1024, 4096).unwrap();
        assert_eq!(c, vec![1024, 1218, 1448, 1722, 2048, 2435, 2896, 3444, 4096]);
        assert_eq!(geometric_checkpoints(16, 16).unwrap(), vec![16]);
    }

    #[test]
    fn loglog_never_nan() {
        for n in 1..100 {
            assert!(loglog(n as f64) >= 1.0);
        }
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    }

    #[test]
    fn lil_disc_single_checkpoint() {
        let seq = LacunarySequence::geometric(2).unwrap();
        let p = LilParams { n_min: 64, n_max: 64, samples: 1, seed: 2, bits: None };
        let r = lil_discrepancy(&seq, &p, PointMode::Orbit).unwrap();
        assert_eq!(r.values.len(), 1);
        assert_eq!(r.values[0].len(), 1);
        let r2 = lil_discrepancy(&seq, &p, PointMode::Iid).unwrap();
        assert!(r2.values[0][0] > 0.0);
    }

    #[test]
    fn lil_disc_2d_runs() {
        let seq = LacunarySequence::matrix_product(vec![vec![vec![2, 1], vec![1, 2]]]).unwrap();
        let p = LilParams { n_min: 16, n_max: 40, samples: 2, seed: 2, bits: None };
        let r = lil_discrepancy(&seq, &p, PointMode::Orbit).unwrap();
        assert!(r.values.iter().flatten().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn fourth_moment_of_constant() {
        let paths = SumPaths { checkpoints: vec![4], bits: 64, sums: vec![vec![2.0], vec![-2.0]], first_coord: vec![0.0; 2] };
        assert_eq!(fourth_moment_ratio(&paths), vec![1.0]);
    }
}
