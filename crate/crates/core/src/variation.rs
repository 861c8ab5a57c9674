//! Hardy–Krause variation: lower bounds over dyadic ladders and the
//! coefficient decay diagnostic.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LacunaError, Result};
use crate::fourier::{box_indicator_value, CompiledPoly, FourierPoly};

/// Largest number of ladder cells examined for one axis set at one anchor.
pub const DEFAULT_CELL_CAP: u64 = 1 << 24;

/// A function on `[0,1]^d` that can be sampled anywhere, including the
/// upper faces.
pub trait Evaluable: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

impl Evaluable for CompiledPoly {
    fn dim(&self) -> usize {
        CompiledPoly::dim(self)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_f64(x)
    }
}

impl Evaluable for FourierPoly {
    fn dim(&self) -> usize {
        FourierPoly::dim(self)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval_f64(x)
    }
}

/// `1_[0,beta)(x) - prod beta_i`, evaluated literally on `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenteredBox {
    pub beta: Vec<f64>,
}

impl CenteredBox {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid("box corner must lie in [0,1]^d"));
        }
        Ok(Self { beta })
    }

    /// Closed-form Hardy–Krause variation on `[0,1]^d`: every axis with
    /// `0 < beta_i < 1` contributes one jump.
    pub fn hk_variation(&self) -> f64 {
        let vol: f64 = self.beta.iter().product();
        if vol == 0.0 {
            return 0.0;
        }
        let jumps = self.beta.iter().filter(|&&b| b < 1.0).count() as i32;
        2f64.powi(jumps) - 1.0
    }
}

impl Evaluable for CenteredBox {
    fn dim(&self) -> usize {
        self.beta.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        box_indicator_value(&self.beta, x)
    }
}

/// Wraps a closure as an [`Evaluable`].
pub struct FnEval<F> {
    pub d: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Evaluable for FnEval<F> {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Alternating corner sum over the box `[a,b]` on the axes `axes`, other
/// coordinates pinned to `z`. The corner taking every upper endpoint `b_i`
/// carries sign `+`, so in one dimension this is `f(b) - f(a)`.
pub fn delta_j(f: &dyn Evaluable, axes: &[usize], a: &[f64], b: &[f64], z: &[f64]) -> Result<f64> {
    let d = f.dim();
    for v in [a, b, z] {
        if v.len() != d {
            return Err(LacunaError::DimensionMismatch { expected: d, got: v.len() });
        }
    }
    if axes.iter().any(|&i| i >= d) {
        return Err(invalid("axis index out of range"));
    }
    if axes.iter().any(|&i| a[i] > b[i]) {
        return Err(invalid("box requires a_i <= b_i on active axes"));
    }
    let mut c = z.to_vec();
    let mut sum = 0.0;
    for mask in 0u64..(1 << axes.len()) {
        for (bit, &i) in axes.iter().enumerate() {
            c[i] = if mask >> bit & 1 == 1 { a[i] } else { b[i] };
        }
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * f.value(&c);
    }
    Ok(sum)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisVariation {
    pub axes: Vec<usize>,
    pub value: f64,
}

/// Lower bounds on `V_J` for every nonempty axis set and their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub per_axes: Vec<AxisVariation>,
    pub total: f64,
    pub level: u32,
    pub z_samples: usize,
    /// Totals at levels `1..=level`.
    pub trace: Vec<f64>,
}

impl VariationReport {
    pub fn get(&self, axes: &[usize]) -> Option<f64> {
        self.per_axes.iter().find(|v| v.axes == axes).map(|v| v.value)
    }

    pub fn as_map(&self) -> BTreeMap<Vec<usize>, f64> {
        self.per_axes.iter().map(|v| (v.axes.clone(), v.value)).collect()
    }
}

/// Quasi-random anchors from the additive recurrence with the generalized
/// golden ratio, starting at the origin.
pub fn anchors(d: usize, count: usize) -> Vec<Vec<f64>> {
    // root of x^(d+1) = x + 1
    let mut g = 2.0f64;
    for _ in 0..64 {
        g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=d).map(|i| g.powi(-(i as i32))).collect();
    (0..count)
        .map(|n| alpha.iter().map(|a| (n as f64 * a).fract()).collect())
        .collect()
}

fn nonempty_subsets(d: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u64..(1 << d))
        .map(|m| (0..d).filter(|&i| m >> i & 1 == 1).collect())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// Ladder variation on the dyadic grid of step `2^-level` for the axes in
/// `axes`, anchored at `z`.
fn ladder_sum(f: &dyn Evaluable, axes: &[usize], level: u32, z: &[f64]) -> f64 {
    let k = axes.len();
    let side = (1usize << level) + 1;
    let h = 1.0 / (1u64 << level) as f64;
    let total = side.pow(k as u32);
    let mut vals: Vec<f64> = (0..total)
        .into_par_iter()
        .with_min_len(1024)
        .map(|mut idx| {
            let mut c = z.to_vec();
            for &i in axes {
                c[i] = (idx % side) as f64 * h;
                idx /= side;
            }
            f.value(&c)
        })
        .collect();
    // successive forward differences along each active axis
    let mut dims = vec![side; k];
    for ax in 0..k {
        let stride: usize = dims[..ax].iter().product();
        let n = dims[ax];
        let outer: usize = dims[ax + 1..].iter().product();
        let mut next = Vec::with_capacity(stride * (n - 1) * outer);
        for o in 0..outer {
            for i in 0..n - 1 {
                for s in 0..stride {
                    let base = o * n * stride;
                    next.push(vals[base + (i + 1) * stride + s] - vals[base + i * stride + s]);
                }
            }
        }
        // reorder is consistent: index = s + stride*(i + (n-1)*o)
        vals = next;
        dims[ax] = n - 1;
    }
    vals.iter().map(|v| v.abs()).sum()
}

/// Lower bound on the Hardy–Krause variation from the dyadic ladder of
/// step `2^-level` on each active axis, maximized over `z_samples` anchors
/// for the inactive axes.
pub fn hk_lower(f: &dyn Evaluable, level: u32, z_samples: usize) -> Result<VariationReport> {
    hk_lower_capped(f, level, z_samples, DEFAULT_CELL_CAP)
}

pub fn hk_lower_capped(f: &dyn Evaluable, level: u32, z_samples: usize, cap: u64) -> Result<VariationReport> {
    if level == 0 {
        return Err(invalid("ladder level must be at least 1"));
    }
    if z_samples == 0 {
        return Err(invalid("at least one anchor is required"));
    }
    let d = f.dim();
    let projected = 2f64.powi((level as usize * d) as i32);
    if projected > cap as f64 {
        return Err(LacunaError::CostGuard {
            what: "ladder enumeration",
            projected: projected.to_u128().unwrap_or(u128::MAX),
            cap: cap as u128,
            hint: "; lower the level",
        });
    }
    let subsets = nonempty_subsets(d);
    let zs = anchors(d, z_samples);
    let mut trace = Vec::with_capacity(level as usize);
    let mut last = Vec::new();
    for l in 1..=level {
        let per: Vec<f64> = subsets
            .iter()
            .map(|axes| {
                let count = if axes.len() == d { 1 } else { zs.len() };
                zs[..count]
                    .iter()
                    .map(|z| ladder_sum(f, axes, l, z))
                    .fold(0.0, f64::max)
            })
            .collect();
        trace.push(per.iter().sum());
        last = per;
    }
    let per_axes: Vec<AxisVariation> = subsets
        .into_iter()
        .zip(last)
        .map(|(axes, value)| AxisVariation { axes, value })
        .collect();
    Ok(VariationReport {
        total: per_axes.iter().map(|v| v.value).sum(),
        per_axes,
        level,
        z_samples,
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayEntry {
    pub j: Vec<String>,
    pub ratio: f64,
}

/// `max |coef| * prod (2 pi |j_i|) / V_support` over the stored terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub max_ratio: Option<f64>,
    pub argmax: Option<Vec<String>>,
    pub entries: Vec<DecayEntry>,
    /// Frequencies with a nonzero coefficient whose support has zero variation.
    pub violations: Vec<Vec<String>>,
}

pub fn coeff_decay_ratio(f: &FourierPoly, v: &BTreeMap<Vec<usize>, f64>) -> Result<DecayReport> {
    let mut entries = Vec::new();
    let mut violations = Vec::new();
    for (j, a, b) in f.terms() {
        let support: Vec<usize> = (0..j.len()).filter(|&i| j[i] != 0.into()).collect();
        let label: Vec<String> = j.iter().map(|x| x.to_string()).collect();
        let vj = *v
            .get(&support)
            .ok_or_else(|| invalid(format!("no variation supplied for axes {support:?}")))?;
        let scale: f64 = j
            .iter()
            .filter_map(|x| x.to_f64())
            .filter(|x| *x != 0.0)
            .map(|x| 2.0 * std::f64::consts::PI * x.abs())
            .product();
        let c = a.abs().max(b.abs());
        if vj <= 0.0 {
            violations.push(label);
            continue;
        }
        entries.push(DecayEntry { j: label, ratio: c * scale / vj });
    }
    let best = entries.iter().max_by(|x, y| x.ratio.total_cmp(&y.ratio));
    Ok(DecayReport {
        max_ratio: best.map(|e| e.ratio),
        argmax: best.map(|e| e.j.clone()),
        entries,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::box_indicator_coeffs;

    fn cos1() -> CompiledPoly {
        FourierPoly::cosine().compile()
    }

    #[test]
    fn delta_examples() {
        let c = FnEval { d: 2, f: |_: &[f64]| 3.0 };
        assert_eq!(delta_j(&c, &[0], &[0.1, 0.0], &[0.7, 0.0], &[0.0, 0.4]).unwrap(), 0.0);
        let lin = FnEval { d: 1, f: |x: &[f64]| x[0] * x[0] };
        assert!((delta_j(&lin, &[0], &[0.2], &[0.5], &[0.0]).unwrap() - (0.25 - 0.04)).abs() < 1e-15);
        let bil = FnEval { d: 2, f: |x: &[f64]| x[0] * x[1] };
        assert_eq!(delta_j(&bil, &[0, 1], &[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(delta_j(&bil, &[0], &[0.5, 0.0], &[0.2, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_function_has_no_variation() {
        let r = hk_lower(&FourierPoly::zero(2), 3, 4).unwrap();
        assert!(r.per_axes.iter().all(|v| v.value == 0.0));
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn cosine_total_variation() {
        let r = hk_lower(&cos1(), 8, 1).unwrap();
        assert!(r.total >= 3.99 && r.total <= 4.0 + 1e-12, "{}", r.total);
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn box_indicator_variation() {
        let b = CenteredBox::new(vec![0.5, 0.5]).unwrap();
        let r = hk_lower(&b, 6, 8).unwrap();
        assert!((r.total - 3.0).abs() < 1e-12, "{}", r.total);
        assert_eq!(b.hk_variation(), 3.0);
        assert_eq!(r.get(&[0, 1]), Some(1.0));
    }

    #[test]
    fn tensor_products_factor() {
        let f = FnEval { d: 2, f: |x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).sin() * x[1] * x[1] };
        let r = hk_lower(&f, 7, 1).unwrap();
        let tv_sin = hk_lower(&FnEval { d: 1, f: |x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).sin() }, 7, 1)
            .unwrap()
            .total;
        let tv_sq = hk_lower(&FnEval { d: 1, f: |x: &[f64]| x[0] * x[0] }, 7, 1).unwrap().total;
        let v12 = r.get(&[0, 1]).unwrap();
        assert!((v12 / (tv_sin * tv_sq) - 1.0).abs() < 0.05);
    }

    #[test]
    fn cost_guard() {
        let f = FourierPoly::zero(3);
        assert!(matches!(hk_lower_capped(&f, 10, 1, 1 << 20), Err(LacunaError::CostGuard { .. })));
    }

    #[test]
    fn decay_ratio_examples() {
        let mut v = BTreeMap::new();
        v.insert(vec![0], 4.0);
        let r = coeff_decay_ratio(&FourierPoly::cosine(), &v).unwrap();
        assert!((r.max_ratio.unwrap() - std::f64::consts::PI / 2.0).abs() < 1e-12);
        let r = coeff_decay_ratio(&FourierPoly::zero(1), &v).unwrap();
        assert!(r.entries.is_empty() && r.max_ratio.is_none());

        let e = box_indicator_coeffs(&[0.5], &[64]).unwrap();
        v.insert(vec![0], CenteredBox::new(vec![0.5]).unwrap().hk_variation());
        let r = coeff_decay_ratio(&e.poly, &v).unwrap();
        assert!(r.max_ratio.unwrap() <= 4.0 + 1e-9);

        v.insert(vec![0], 0.0);
        assert_eq!(coeff_decay_ratio(&FourierPoly::cosine(), &v).unwrap().violations.len(), 1);
    }

    #[test]
    fn anchors_start_at_origin() {
        let z = anchors(3, 5);
        assert_eq!(z[0], vec![0.0; 3]);
        assert!(z.iter().skip(1).all(|p| p.iter().all(|&c| c > 0.0 && c < 1.0)));
    }
}
