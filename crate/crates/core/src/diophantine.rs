//! Resonance counts: how many ordered index pairs `(n, n')` admit small
//! frequencies `j, j'` with `M_n^T j +- M_{n'}^T j' = nu`.
//!
//! Both `j` and `j'` range over the symmetric shell `1 <= ||.||_inf <= G`,
//! so `U_n - U_{n'} = U_n + U_{n'}` and one sumset covers both signs.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use num_bigint::BigInt;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LacunaError, Result};
use crate::fourier::Freq;
use crate::lacunary::{GapRatio, LacunarySequence};

/// Default cap on `N^2 (2G+1)^{2d}`.
pub const DEFAULT_PAIR_CAP: u128 = 2_000_000_000;

const PAIR_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Every reachable `nu` counted exactly.
    Exact,
    /// Exact counts restricted to `nu` in the heaviest hash buckets; the
    /// reported maximum is a lower bound on `L`.
    HeavyHitter,
}

/// Resonance counts for one `(N, G)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DioCount {
    pub n: usize,
    pub g: u64,
    pub d: usize,
    pub mode: CountMode,
    /// Ordered pairs per nonzero `nu` (pairs with `n = n'` included).
    pub pair_count_by_nu: BTreeMap<Freq, u64>,
    /// `max_{nu != 0}` of the counts.
    pub l: u64,
    /// Smallest `nu` attaining `l`.
    pub argmax_nu: Option<Freq>,
    /// Ordered pairs with `n != n'` that reach `nu = 0`.
    pub lstar0: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DioSummary {
    pub n: usize,
    pub g: u64,
    pub d: usize,
    pub mode: CountMode,
    pub l: u64,
    pub argmax_nu: Option<Vec<String>>,
    pub lstar0: u64,
    pub distinct_nu: usize,
}

impl DioCount {
    pub fn count(&self, nu: &[BigInt]) -> u64 {
        self.pair_count_by_nu.get(nu).copied().unwrap_or(0)
    }

    pub fn summary(&self) -> DioSummary {
        DioSummary {
            n: self.n,
            g: self.g,
            d: self.d,
            mode: self.mode,
            l: self.l,
            argmax_nu: self.argmax_nu.as_ref().map(|v| v.iter().map(|x| x.to_string()).collect()),
            lstar0: self.lstar0,
            distinct_nu: self.pair_count_by_nu.len(),
        }
    }

    /// `(nu, count)` rows with `nu` written as space separated entries.
    pub fn rows(&self) -> impl Iterator<Item = (String, u64)> + '_ {
        self.pair_count_by_nu.iter().map(|(nu, &c)| (format_freq(nu), c))
    }
}

pub fn format_freq(v: &[BigInt]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// All `j` with `1 <= ||j||_inf <= g`.
pub fn shell(d: usize, g: u64) -> Vec<Vec<i64>> {
    let g = g as i64;
    let side = (2 * g + 1) as usize;
    (0..side.pow(d as u32))
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let v = (idx % side) as i64 - g;
                    idx /= side;
                    v
                })
                .collect::<Vec<_>>()
        })
        .filter(|j| j.iter().any(|&v| v != 0))
        .collect()
}

/// `U_n = { M_n^T j : 1 <= ||j|| <= G }` for every `n <= N`.
fn images(seq: &LacunarySequence, n_max: usize, g: u64) -> Result<Vec<Vec<Freq>>> {
    let js = shell(seq.dim(), g);
    (1..=n_max)
        .map(|n| {
            let mut u: Vec<Freq> = js
                .iter()
                .map(|j| seq.frequency(n, &j.iter().map(|&v| BigInt::from(v)).collect::<Vec<_>>()))
                .collect::<Result<_>>()?;
            u.sort();
            u.dedup();
            Ok(u)
        })
        .collect()
}

fn check_cost(seq: &LacunarySequence, n_max: usize, g: u64, cap: u128) -> Result<()> {
    if n_max == 0 || g == 0 {
        return Err(invalid("N and G must be at least 1"));
    }
    let per = ((2 * g + 1) as u128).pow(2 * seq.dim() as u32);
    let projected = (n_max as u128).pow(2) * per;
    if projected > cap {
        return Err(LacunaError::CostGuard {
            what: "resonance enumeration",
            projected,
            cap,
            hint: "; try heavy-hitter mode or smaller N, G",
        });
    }
    Ok(())
}

fn pair_sums(u: &[Freq], v: &[Freq]) -> BTreeSet<Freq> {
    let mut out = BTreeSet::new();
    for a in u {
        for b in v {
            out.insert(a.iter().zip(b).map(|(x, y)| x + y).collect());
        }
    }
    out
}

fn finish(n: usize, g: u64, d: usize, mode: CountMode, map: BTreeMap<Freq, u64>, lstar0: u64) -> DioCount {
    let mut l = 0;
    let mut argmax = None;
    for (nu, &c) in &map {
        if c > l {
            l = c;
            argmax = Some(nu.clone());
        }
    }
    DioCount { n, g, d, mode, pair_count_by_nu: map, l, argmax_nu: argmax, lstar0 }
}

/// Exact counts for every reachable nonzero `nu`.
pub fn count_all(seq: &LacunarySequence, n_max: usize, g: u64) -> Result<DioCount> {
    count_all_capped(seq, n_max, g, DEFAULT_PAIR_CAP)
}

pub fn count_all_capped(seq: &LacunarySequence, n_max: usize, g: u64, cap: u128) -> Result<DioCount> {
    check_cost(seq, n_max, g, cap)?;
    let u = images(seq, n_max, g)?;
    let starts: Vec<usize> = (0..n_max).step_by(PAIR_CHUNK).collect();
    let parts: Vec<(BTreeMap<Freq, u64>, u64)> = starts
        .par_iter()
        .map(|&lo| {
            let mut map = BTreeMap::new();
            let mut zero = 0u64;
            for a in lo..(lo + PAIR_CHUNK).min(n_max) {
                for b in 0..n_max {
                    for nu in pair_sums(&u[a], &u[b]) {
                        if nu.iter().all(|x| x.is_zero()) {
                            if a != b {
                                zero += 1;
                            }
                        } else {
                            *map.entry(nu).or_insert(0) += 1;
                        }
                    }
                }
            }
            (map, zero)
        })
        .collect();
    let mut map = BTreeMap::new();
    let mut lstar0 = 0;
    for (m, z) in parts {
        lstar0 += z;
        for (k, c) in m {
            *map.entry(k).or_insert(0) += c;
        }
    }
    Ok(finish(n_max, g, seq.dim(), CountMode::Exact, map, lstar0))
}

fn bucket_of(nu: &[BigInt], buckets: usize) -> usize {
    let mut h = DefaultHasher::new();
    nu.hash(&mut h);
    (h.finish() % buckets as u64) as usize
}

/// Two-pass approximation for large runs: pass one tallies pairs per hash
/// bucket, pass two counts exactly the `nu` that fall in the `top_k`
/// heaviest buckets. The reported `l` is a lower bound on the true value.
pub fn count_heavy_hitters(
    seq: &LacunarySequence,
    n_max: usize,
    g: u64,
    buckets: usize,
    top_k: usize,
) -> Result<DioCount> {
    if buckets == 0 || top_k == 0 {
        return Err(invalid("heavy-hitter mode needs at least one bucket"));
    }
    if n_max == 0 || g == 0 {
        return Err(invalid("N and G must be at least 1"));
    }
    let u = images(seq, n_max, g)?;
    let mut tally = vec![0u64; buckets];
    let mut lstar0 = 0u64;
    for a in 0..n_max {
        for b in 0..n_max {
            let mut seen = HashSet::new();
            for nu in pair_sums(&u[a], &u[b]) {
                if nu.iter().all(|x| x.is_zero()) {
                    if a != b {
                        lstar0 += 1;
                    }
                } else if seen.insert(bucket_of(&nu, buckets)) {
                    tally[bucket_of(&nu, buckets)] += 1;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..buckets).collect();
    order.sort_by(|&x, &y| tally[y].cmp(&tally[x]).then(x.cmp(&y)));
    let heavy: HashSet<usize> = order.into_iter().take(top_k).collect();
    let mut map = BTreeMap::new();
    for a in 0..n_max {
        for b in 0..n_max {
            for nu in pair_sums(&u[a], &u[b]) {
                if !nu.iter().all(|x| x.is_zero()) && heavy.contains(&bucket_of(&nu, buckets)) {
                    *map.entry(nu).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(finish(n_max, g, seq.dim(), CountMode::HeavyHitter, map, lstar0))
}

/// `L(N, G, nu)`; for `nu = 0` only pairs with `n != n'` count.
pub fn count_at(seq: &LacunarySequence, n_max: usize, g: u64, nu: &[BigInt]) -> Result<u64> {
    if nu.len() != seq.dim() {
        return Err(LacunaError::DimensionMismatch { expected: seq.dim(), got: nu.len() });
    }
    check_cost(seq, n_max, g, DEFAULT_PAIR_CAP)?;
    let u = images(seq, n_max, g)?;
    let sets: Vec<BTreeSet<&Freq>> = u.iter().map(|v| v.iter().collect()).collect();
    let zero = nu.iter().all(|x| x.is_zero());
    let mut count = 0;
    for a in 0..n_max {
        for b in 0..n_max {
            if zero && a == b {
                continue;
            }
            let hit = u[a].iter().any(|x| {
                let rest: Freq = nu.iter().zip(x).map(|(p, q)| p - q).collect();
                sets[b].contains(&rest)
            });
            if hit {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: usize,
    pub g: u64,
    pub l: u64,
    pub lstar0: u64,
    pub l_over_n: f64,
    /// `L log(N)^{1.1} / N`.
    pub l_log_over_n: f64,
}

/// Growth table of `L(N, G)` over `n_list`; `g_list` holds either one `G`
/// for every row or one per row.
pub fn growth_profile(seq: &LacunarySequence, g_list: &[u64], n_list: &[usize]) -> Result<Vec<GrowthRow>> {
    if g_list.len() != 1 && g_list.len() != n_list.len() {
        return Err(invalid("G schedule must have one entry or one per N"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("N list must be strictly increasing"));
    }
    n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let g = if g_list.len() == 1 { g_list[0] } else { g_list[i] };
            let c = count_all(seq, n, g)?;
            let lg = (n as f64).ln().max(1.0);
            Ok(GrowthRow {
                n,
                g,
                l: c.l,
                lstar0: c.lstar0,
                l_over_n: c.l as f64 / n as f64,
                l_log_over_n: c.l as f64 * lg.powf(1.1) / n as f64,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearResonance {
    pub hypothesis_met: bool,
    /// `j'` with `||M_n^T j + M_{n'}^T j'|| < ||M_{n''}^T||`.
    pub plus: Vec<Vec<i64>>,
    pub minus: Vec<Vec<i64>>,
    pub unique: bool,
}

/// Enumerates `||j'|| <= G` whose image nearly cancels `M_n^T j`.
#[allow(clippy::too_many_arguments)]
pub fn near_resonance_unique(
    seq: &LacunarySequence,
    q: &GapRatio,
    n: usize,
    n2: usize,
    j: &[i64],
    g: u64,
    n3: usize,
) -> Result<NearResonance> {
    let d = seq.dim();
    if j.len() != d {
        return Err(LacunaError::DimensionMismatch { expected: d, got: j.len() });
    }
    let hypothesis_met = (n3 as f64) <= n.min(n2) as f64 - q.log_of(g as f64) + 1e-12;
    let bound = BigInt::from(seq.transposed_norm(n3)?);
    let base = seq.frequency(n, &j.iter().map(|&v| BigInt::from(v)).collect::<Vec<_>>())?;
    let mut cands = shell(d, g);
    cands.push(vec![0; d]);
    cands.sort();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for jp in cands {
        let img = seq.frequency(n2, &jp.iter().map(|&v| BigInt::from(v)).collect::<Vec<_>>())?;
        let small = |s: i32| {
            base.iter()
                .zip(&img)
                .map(|(x, y)| if s > 0 { x + y } else { x - y })
                .all(|v| v.magnitude() < bound.magnitude())
        };
        if small(1) {
            plus.push(jp.clone());
        }
        if small(-1) {
            minus.push(jp);
        }
    }
    let unique = plus.len() <= 1 && minus.len() <= 1;
    Ok(NearResonance { hypothesis_met, plus, minus, unique })
}
