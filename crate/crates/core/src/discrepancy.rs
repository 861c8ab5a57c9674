//! Star and extreme discrepancy of finite point sets, plus the
//! Koksma–Hlawka check.
//!
//! Counts are exact multiset counts obtained from big-integer comparisons;
//! volumes are products of dyadic side lengths in double precision.

use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::path::Path;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LacunaError, Result};
use crate::exactnum::{stream_rng, top64, turns_to_unit, DyadicPoint};
use crate::variation::Evaluable;

/// Largest set handled exactly by [`star_disc_2d`].
pub const STAR_2D_CAP: usize = 4096;
/// Largest set handled exactly by [`extreme_disc_2d`].
pub const EXTREME_2D_CAP: usize = 128;
/// Random boxes tried when the exact 2-d star method falls back.
pub const FALLBACK_BUDGET: usize = 100_000;

/// A finite multiset of points sharing `d` and `B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    points: Vec<DyadicPoint>,
    d: usize,
    bits: u64,
}

impl PointSet {
    pub fn new(points: Vec<DyadicPoint>) -> Result<Self> {
        let first = points.first().ok_or_else(|| invalid("point set is empty"))?;
        let (d, bits) = (first.dim(), first.bits());
        for p in &points {
            if p.dim() != d {
                return Err(LacunaError::DimensionMismatch { expected: d, got: p.dim() });
            }
            if p.bits() != bits {
                return Err(invalid("all points must share one precision"));
            }
        }
        Ok(Self { points, d, bits })
    }

    pub fn from_u64(rows: &[Vec<u64>], bits: u64) -> Result<Self> {
        Self::new(rows.iter().map(|r| DyadicPoint::from_u64(r, bits)).collect::<Result<_>>()?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn points(&self) -> &[DyadicPoint] {
        &self.points
    }

    fn coord(&self, p: usize, i: usize) -> &BigUint {
        &self.points[p].coords()[i]
    }

    fn unit(&self, v: &BigUint) -> f64 {
        turns_to_unit(top64(v, self.bits))
    }

    /// Reads one point per line, coordinates as `num/2^B` separated by commas.
    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut pts = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            pts.push(line.parse::<DyadicPoint>()?);
        }
        Self::new(pts)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        for p in &self.points {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// One end of a box side, in a form that can be re-evaluated exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Zero,
    One,
    /// The coordinate `numerator / 2^B`; `inclusive` keeps points that sit on it.
    At { numerator: String, inclusive: bool },
}

/// A box `prod [lower_i, upper_i]` with per-end inclusion flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessBox {
    pub lower: Vec<Bound>,
    pub upper: Vec<Bound>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum End {
    Zero,
    One,
    At(usize, usize, bool),
}

impl WitnessBox {
    fn value_of(b: &Bound, bits: u64) -> Result<(f64, Option<(BigUint, bool)>)> {
        Ok(match b {
            Bound::Zero => (0.0, None),
            Bound::One => (1.0, None),
            Bound::At { numerator, inclusive } => {
                let v: BigUint = numerator
                    .parse()
                    .map_err(|_| LacunaError::Parse(format!("bad witness bound {numerator:?}")))?;
                (turns_to_unit(top64(&v, bits)), Some((v, *inclusive)))
            }
        })
    }

    /// `|count/N - volume|` for this box.
    pub fn evaluate(&self, p: &PointSet) -> Result<f64> {
        if self.lower.len() != p.d || self.upper.len() != p.d {
            return Err(LacunaError::DimensionMismatch { expected: p.d, got: self.lower.len() });
        }
        let lo: Vec<_> = self.lower.iter().map(|b| Self::value_of(b, p.bits)).collect::<Result<_>>()?;
        let hi: Vec<_> = self.upper.iter().map(|b| Self::value_of(b, p.bits)).collect::<Result<_>>()?;
        let vol: f64 = lo.iter().zip(&hi).map(|(l, h)| (h.0 - l.0).max(0.0)).product();
        let count = (0..p.len())
            .filter(|&k| {
                (0..p.d).all(|i| {
                    let x = p.coord(k, i);
                    let above = match &lo[i].1 {
                        None => true,
                        Some((v, inc)) => {
                            if *inc {
                                x >= v
                            } else {
                                x > v
                            }
                        }
                    };
                    let below = match &hi[i].1 {
                        None => true,
                        Some((v, inc)) => {
                            if *inc {
                                x <= v
                            } else {
                                x < v
                            }
                        }
                    };
                    above && below
                })
            })
            .count();
        Ok((count as f64 / p.len() as f64 - vol).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscKind {
    Exact,
    LowerBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscResult {
    pub value: f64,
    pub kind: DiscKind,
    pub witness: Option<WitnessBox>,
    pub method: String,
    /// Set when no box was examined.
    pub degenerate: bool,
}

fn end_bound(p: &PointSet, e: End) -> Bound {
    match e {
        End::Zero => Bound::Zero,
        End::One => Bound::One,
        End::At(k, i, inclusive) => Bound::At { numerator: p.coord(k, i).to_string(), inclusive },
    }
}

fn witness(p: &PointSet, lower: &[End], upper: &[End]) -> WitnessBox {
    WitnessBox {
        lower: lower.iter().map(|&e| end_bound(p, e)).collect(),
        upper: upper.iter().map(|&e| end_bound(p, e)).collect(),
    }
}

fn require_dim(p: &PointSet, d: usize) -> Result<()> {
    if p.d != d {
        return Err(LacunaError::DimensionMismatch { expected: d, got: p.d });
    }
    Ok(())
}

/// Distinct values of axis `i` in increasing order with, for each, a
/// representative point and its multiplicity; plus each point's rank.
struct Axis {
    values: Vec<f64>,
    rep: Vec<usize>,
    mult: Vec<usize>,
    rank: Vec<usize>,
}

fn axis(p: &PointSet, i: usize) -> Axis {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p.coord(a, i).cmp(p.coord(b, i)).then(a.cmp(&b)));
    let mut values = Vec::new();
    let mut rep = Vec::new();
    let mut mult: Vec<usize> = Vec::new();
    let mut rank = vec![0; p.len()];
    for (pos, &k) in order.iter().enumerate() {
        let new = pos == 0 || p.coord(order[pos - 1], i).cmp(p.coord(k, i)) != Ordering::Equal;
        if new {
            values.push(p.unit(p.coord(k, i)));
            rep.push(k);
            mult.push(0);
        }
        *mult.last_mut().expect("pushed above") += 1;
        rank[k] = values.len() - 1;
    }
    Axis { values, rep, mult, rank }
}

/// Exact `D*_N` in one dimension:
/// `max_i max(i/N - x_(i), x_(i) - (i-1)/N)` over the order statistics.
pub fn star_disc_1d(p: &PointSet) -> Result<DiscResult> {
    require_dim(p, 1)?;
    let ax = axis(p, 0);
    let n = p.len() as f64;
    let mut best = (-1.0, End::Zero, true);
    let mut below = 0usize;
    for (g, &v) in ax.values.iter().enumerate() {
        // open box [0, v): the points strictly below
        let under = v - below as f64 / n;
        if under > best.0 {
            best = (under, End::At(ax.rep[g], 0, false), false);
        }
        below += ax.mult[g];
        // closed box [0, v]
        let over = below as f64 / n - v;
        if over > best.0 {
            best = (over, End::At(ax.rep[g], 0, true), true);
        }
    }
    let (value, end, _) = best;
    Ok(DiscResult {
        value: value.clamp(0.0, 1.0),
        kind: DiscKind::Exact,
        witness: Some(witness(p, &[End::Zero], &[end])),
        method: "order statistics".into(),
        degenerate: false,
    })
}

/// Exact `D_N` over intervals `[a, b)` in one dimension, linear after sorting.
///
/// With distinct values `v_1 < ... < v_G` and `C_g` the number of points at
/// or below `v_g`, overcounts come from closed `[v_a, v_b]` and undercounts
/// from open `(v_a, v_b)`, with `0` (included) and `1` as sentinels.
pub fn extreme_disc_1d(p: &PointSet) -> Result<DiscResult> {
    require_dim(p, 1)?;
    let ax = axis(p, 0);
    let n = p.len() as f64;
    let gcount = ax.values.len();
    let mut cum = Vec::with_capacity(gcount + 1);
    cum.push(0usize);
    for m in &ax.mult {
        cum.push(cum.last().expect("non-empty") + m);
    }
    // overcount: max_b (C_b/N - v_b) + max_{a<=b} (v_a - C_{a-1}/N)
    let mut best = (-1.0, End::Zero, End::One);
    let mut left: Option<(f64, usize)> = None;
    for b in 0..gcount {
        let cand = ax.values[b] - cum[b] as f64 / n;
        if left.is_none_or(|(v, _)| cand > v) {
            left = Some((cand, b));
        }
        let (lv, la) = left.expect("set above");
        let val = cum[b + 1] as f64 / n - ax.values[b] + lv;
        if val > best.0 {
            best = (val, End::At(ax.rep[la], 0, true), End::At(ax.rep[b], 0, true));
        }
    }
    // undercount: max_b (v_b - C_{b-1}/N) - min_{a<b} (v_a - C_a/N)
    let mut low: (f64, End) = (0.0, End::Zero);
    for b in 0..=gcount {
        let (vb, below, end) = if b == gcount {
            (1.0, p.len(), End::One)
        } else {
            (ax.values[b], cum[b], End::At(ax.rep[b], 0, false))
        };
        let val = vb - below as f64 / n - low.0;
        if val > best.0 {
            best = (val, low.1, end);
        }
        if b < gcount {
            let cand = ax.values[b] - cum[b + 1] as f64 / n;
            if cand < low.0 {
                low = (cand, End::At(ax.rep[b], 0, false));
            }
        }
    }
    Ok(DiscResult {
        value: best.0.clamp(0.0, 1.0),
        kind: DiscKind::Exact,
        witness: Some(witness(p, &[best.1], &[best.2])),
        method: "sorted sweep".into(),
        degenerate: false,
    })
}

/// Exact `D*_N` in two dimensions on the critical grid.
///
/// Sweeping the distinct `x` values, each node is scored twice: the closed
/// box `[0,X_a] x [0,Y_b]` for overcounts and the open box `[0,X_a) x [0,Y_b)`
/// (with `1` allowed on either side) for undercounts. Larger sets fall back
/// to [`star_disc_lower`].
pub fn star_disc_2d(p: &PointSet) -> Result<DiscResult> {
    require_dim(p, 2)?;
    if p.len() > STAR_2D_CAP {
        let mut r = star_disc_lower(p, FALLBACK_BUDGET, 0)?;
        r.method = format!("random boxes (set exceeds {STAR_2D_CAP} points)");
        return Ok(r);
    }
    let ax = axis(p, 0);
    let ay = axis(p, 1);
    let n = p.len() as f64;
    let r = ay.values.len();
    // points grouped by x rank
    let mut by_x: Vec<Vec<usize>> = vec![Vec::new(); ax.values.len()];
    for k in 0..p.len() {
        by_x[ax.rank[k]].push(ay.rank[k]);
    }
    let mut hist = vec![0usize; r];
    let mut best = (-1.0, [End::One, End::One]);
    let consider = |val: f64, ends: [End; 2], best: &mut (f64, [End; 2])| {
        if val > best.0 {
            *best = (val, ends);
        }
    };
    let y_end = |b: usize, inc: bool| End::At(ay.rep[b], 1, inc);
    for a in 0..=ax.values.len() {
        let (xv, x_open) = if a == ax.values.len() {
            (1.0, End::One)
        } else {
            (ax.values[a], End::At(ax.rep[a], 0, false))
        };
        // open side: points with x strictly below xv
        let mut acc = 0usize;
        for b in 0..r {
            consider(xv * ay.values[b] - acc as f64 / n, [x_open, y_end(b, false)], &mut best);
            acc += hist[b];
        }
        consider(xv - acc as f64 / n, [x_open, End::One], &mut best);
        if a == ax.values.len() {
            break;
        }
        for &yr in &by_x[a] {
            hist[yr] += 1;
        }
        // closed side
        let mut acc = 0usize;
        let x_closed = End::At(ax.rep[a], 0, true);
        for b in 0..r {
            acc += hist[b];
            consider(acc as f64 / n - xv * ay.values[b], [x_closed, y_end(b, true)], &mut best);
        }
    }
    Ok(DiscResult {
        value: best.0.clamp(0.0, 1.0),
        kind: DiscKind::Exact,
        witness: Some(witness(p, &[End::Zero, End::Zero], &best.1)),
        method: "critical grid sweep".into(),
        degenerate: false,
    })
}

/// Candidate box ends on one axis: `(value, first rank kept, end)` for lower
/// ends and `(value, last rank kept + 1, end)` for upper ends.
type Cand = (f64, usize, End);

fn cands(ax: &Axis, i: usize) -> (Vec<Cand>, Vec<Cand>, Vec<Cand>, Vec<Cand>) {
    let g = ax.values.len();
    let closed_lo = (0..g).map(|a| (ax.values[a], a, End::At(ax.rep[a], i, true))).collect();
    let closed_hi = (0..g).map(|b| (ax.values[b], b + 1, End::At(ax.rep[b], i, true))).collect();
    let mut open_lo = vec![(0.0, 0, End::Zero)];
    open_lo.extend((0..g).map(|a| (ax.values[a], a + 1, End::At(ax.rep[a], i, false))));
    let mut open_hi: Vec<Cand> = (0..g).map(|b| (ax.values[b], b, End::At(ax.rep[b], i, false))).collect();
    open_hi.push((1.0, g, End::One));
    (closed_lo, closed_hi, open_lo, open_hi)
}

/// Exact `D_N` in two dimensions by scoring every closed box between point
/// coordinates and every open box between coordinates and the unit sides.
pub fn extreme_disc_2d(p: &PointSet) -> Result<DiscResult> {
    require_dim(p, 2)?;
    if p.len() > EXTREME_2D_CAP {
        return Err(LacunaError::CostGuard {
            what: "extreme discrepancy in two dimensions",
            projected: (p.len() as u128).pow(4),
            cap: (EXTREME_2D_CAP as u128).pow(4),
            hint: "",
        });
    }
    let ax = axis(p, 0);
    let ay = axis(p, 1);
    let (gx, gy) = (ax.values.len(), ay.values.len());
    // prefix[a][b] = points with x rank < a and y rank < b
    let mut prefix = vec![vec![0usize; gy + 1]; gx + 1];
    for k in 0..p.len() {
        prefix[ax.rank[k] + 1][ay.rank[k] + 1] += 1;
    }
    for a in 1..=gx {
        for b in 1..=gy {
            prefix[a][b] += prefix[a - 1][b] + prefix[a][b - 1] - prefix[a - 1][b - 1];
        }
    }
    let rect = |a0: usize, a1: usize, b0: usize, b1: usize| -> usize {
        if a1 <= a0 || b1 <= b0 {
            0
        } else {
            prefix[a1][b1] + prefix[a0][b0] - prefix[a0][b1] - prefix[a1][b0]
        }
    };
    let n = p.len() as f64;
    let (clx, chx, olx, ohx) = cands(&ax, 0);
    let (cly, chy, oly, ohy) = cands(&ay, 1);
    let mut best = (-1.0, [End::Zero; 2], [End::One; 2]);
    for (los, his, lys, hys, over) in [(&clx, &chx, &cly, &chy, true), (&olx, &ohx, &oly, &ohy, false)] {
        for lx in los.iter() {
            for hx in his.iter().filter(|h| h.0 >= lx.0) {
                for ly in lys.iter() {
                    for hy in hys.iter().filter(|h| h.0 >= ly.0) {
                        let c = rect(lx.1, hx.1, ly.1, hy.1) as f64 / n;
                        let vol = (hx.0 - lx.0) * (hy.0 - ly.0);
                        let val = if over { c - vol } else { vol - c };
                        if val > best.0 {
                            best = (val, [lx.2, ly.2], [hx.2, hy.2]);
                        }
                    }
                }
            }
        }
    }
    Ok(DiscResult {
        value: best.0.clamp(0.0, 1.0),
        kind: DiscKind::Exact,
        witness: Some(witness(p, &best.1, &best.2)),
        method: "candidate boxes".into(),
        degenerate: false,
    })
}

/// Lower bound on `D*_N` from `budget` anchored boxes whose corners are
/// drawn from point coordinates (or 1), each scored closed and open.
pub fn star_disc_lower(p: &PointSet, budget: usize, seed: u64) -> Result<DiscResult> {
    if budget == 0 {
        return Ok(DiscResult {
            value: 0.0,
            kind: DiscKind::LowerBound,
            witness: None,
            method: "random boxes".into(),
            degenerate: true,
        });
    }
    let d = p.d;
    let n = p.len() as f64;
    let mut rng = stream_rng(seed, u64::MAX);
    let mut best: (f64, Vec<End>) = (-1.0, vec![End::One; d]);
    let mut corner: Vec<Option<usize>> = vec![None; d];
    for _ in 0..budget {
        for c in corner.iter_mut() {
            *c = if rng.random_range(0..=p.len()) == p.len() { None } else { Some(rng.random_range(0..p.len())) };
        }
        let vol: f64 = corner
            .iter()
            .enumerate()
            .map(|(i, c)| c.map_or(1.0, |k| p.unit(p.coord(k, i))))
            .product();
        let (mut closed, mut open) = (0usize, 0usize);
        for k in 0..p.len() {
            let mut c_in = true;
            let mut o_in = true;
            for (i, c) in corner.iter().enumerate() {
                if let Some(r) = c {
                    match p.coord(k, i).cmp(p.coord(*r, i)) {
                        Ordering::Greater => {
                            c_in = false;
                            o_in = false;
                        }
                        Ordering::Equal => o_in = false,
                        Ordering::Less => {}
                    }
                }
            }
            closed += c_in as usize;
            open += o_in as usize;
        }
        let over = closed as f64 / n - vol;
        let under = vol - open as f64 / n;
        for (val, inc) in [(over, true), (under, false)] {
            if val > best.0 {
                best = (val, corner.iter().enumerate().map(|(i, c)| c.map_or(End::One, |k| End::At(k, i, inc))).collect());
            }
        }
    }
    Ok(DiscResult {
        value: best.0.clamp(0.0, 1.0),
        kind: DiscKind::LowerBound,
        witness: Some(witness(p, &vec![End::Zero; d], &best.1)),
        method: "random boxes".into(),
        degenerate: false,
    })
}

/// Best available star discrepancy: exact for `d <= 2`, else a lower bound.
pub fn star_disc(p: &PointSet, budget: usize, seed: u64) -> Result<DiscResult> {
    match p.d {
        1 => star_disc_1d(p),
        2 => star_disc_2d(p),
        _ => star_disc_lower(p, budget, seed),
    }
}

/// `D*_N` of the points `t_k / 2^64` given in increasing order.
pub fn star_disc_sorted_turns(sorted: &[u64]) -> f64 {
    let n = sorted.len() as f64;
    let mut best = 0.0f64;
    for (i, &t) in sorted.iter().enumerate() {
        let x = turns_to_unit(t);
        best = best.max((i + 1) as f64 / n - x).max(x - i as f64 / n);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KhReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// False when the discrepancy is only a lower bound.
    pub certified: bool,
    pub discrepancy: DiscResult,
}

/// `|mean_P f - integral| <= D*_N V_HK(f)`.
pub fn kh_check(f: &dyn Evaluable, v_hk: f64, p: &PointSet, integral: f64) -> Result<KhReport> {
    if f.dim() != p.d {
        return Err(LacunaError::DimensionMismatch { expected: f.dim(), got: p.d });
    }
    let mean = p.points.iter().map(|x| f.value(&x.to_f64_vec())).sum::<f64>() / p.len() as f64;
    let disc = star_disc(p, FALLBACK_BUDGET, 0)?;
    let lhs = (mean - integral).abs();
    let rhs = disc.value * v_hk;
    Ok(KhReport {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
        certified: disc.kind == DiscKind::Exact,
        discrepancy: disc,
    })
}
