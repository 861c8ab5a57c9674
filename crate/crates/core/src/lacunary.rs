//! Integer matrix sequences and the Hadamard gap check.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Pow, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LacunaError, Result};
use crate::exactnum::{log2_big, ratio_f64, IntMatrix, Multiplier};

/// Serializable description of a sequence `(M_n)_{n >= 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceKind {
    /// `M_n = [[theta^n]]`.
    ScalarGeometric { theta: i64 },
    /// `M_n = [[base^n + shift]]`.
    ScalarShiftedPower { base: i64, shift: i64 },
    /// `M_n = [[values[n-1]]]`.
    ScalarExplicit { values: Vec<i64> },
    /// `M_n = A_n M_{n-1}` with `A_n = factors[(n-1) mod len]`, so that
    /// `M_n^T = A_1^T ... A_n^T`.
    MatrixProduct { factors: Vec<Vec<Vec<i64>>> },
    /// `M_n = matrices[n-1]`.
    MatrixExplicit { matrices: Vec<Vec<Vec<i64>>> },
}

/// A lazily generated sequence of non-singular integer matrices.
///
/// Scalar kinds compute `M_n` on demand; products are memoized.
pub struct LacunarySequence {
    kind: SequenceKind,
    dim: usize,
    mats: Vec<IntMatrix>,
    memo: RwLock<Vec<Arc<IntMatrix>>>,
}

impl Clone for LacunarySequence {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            dim: self.dim,
            mats: self.mats.clone(),
            memo: RwLock::new(self.memo.read().expect("memo lock").clone()),
        }
    }
}

impl fmt::Debug for LacunarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LacunarySequence")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .finish()
    }
}

impl LacunarySequence {
    pub fn new(kind: SequenceKind) -> Result<Self> {
        let (dim, mats) = match &kind {
            SequenceKind::ScalarGeometric { theta } => {
                if *theta == 0 {
                    return Err(LacunaError::SingularMatrix { index: 1 });
                }
                (1, Vec::new())
            }
            SequenceKind::ScalarShiftedPower { base, shift } => {
                if *base == 0 && *shift == 0 {
                    return Err(LacunaError::SingularMatrix { index: 1 });
                }
                (1, Vec::new())
            }
            SequenceKind::ScalarExplicit { values } => {
                if values.is_empty() {
                    return Err(invalid("explicit sequence is empty"));
                }
                if let Some(i) = values.iter().position(|&v| v == 0) {
                    return Err(LacunaError::SingularMatrix { index: i + 1 });
                }
                (1, Vec::new())
            }
            SequenceKind::MatrixProduct { factors: rows } | SequenceKind::MatrixExplicit { matrices: rows } => {
                if rows.is_empty() {
                    return Err(invalid("matrix list is empty"));
                }
                let mats = rows
                    .iter()
                    .map(|r| IntMatrix::from_rows(r))
                    .collect::<Result<Vec<_>>>()?;
                let dim = mats[0].dim();
                for (i, m) in mats.iter().enumerate() {
                    if m.dim() != dim {
                        return Err(LacunaError::DimensionMismatch { expected: dim, got: m.dim() });
                    }
                    if m.is_singular() {
                        return Err(LacunaError::SingularMatrix { index: i + 1 });
                    }
                }
                (dim, mats)
            }
        };
        Ok(Self { kind, dim, mats, memo: RwLock::new(Vec::new()) })
    }

    pub fn geometric(theta: i64) -> Result<Self> {
        Self::new(SequenceKind::ScalarGeometric { theta })
    }

    pub fn shifted_power(base: i64, shift: i64) -> Result<Self> {
        Self::new(SequenceKind::ScalarShiftedPower { base, shift })
    }

    pub fn explicit_scalars(values: &[i64]) -> Result<Self> {
        Self::new(SequenceKind::ScalarExplicit { values: values.to_vec() })
    }

    pub fn matrix_product(factors: Vec<Vec<Vec<i64>>>) -> Result<Self> {
        Self::new(SequenceKind::MatrixProduct { factors })
    }

    pub fn matrix_explicit(matrices: Vec<Vec<Vec<i64>>>) -> Result<Self> {
        Self::new(SequenceKind::MatrixExplicit { matrices })
    }

    pub fn kind(&self) -> &SequenceKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of members for explicit kinds; `None` when infinite.
    pub fn len(&self) -> Option<usize> {
        match &self.kind {
            SequenceKind::ScalarExplicit { values } => Some(values.len()),
            SequenceKind::MatrixExplicit { .. } => Some(self.mats.len()),
            _ => None,
        }
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(invalid("sequence indices start at 1"));
        }
        if let Some(len) = self.len() {
            if n > len {
                return Err(LacunaError::IndexOutOfRange { n, len });
            }
        }
        Ok(())
    }

    /// The single entry of `M_n` for scalar kinds.
    pub fn scalar(&self, n: usize) -> Result<Option<BigInt>> {
        self.check_index(n)?;
        let v = match &self.kind {
            SequenceKind::ScalarGeometric { theta } => BigInt::from(*theta).pow(n as u32),
            SequenceKind::ScalarShiftedPower { base, shift } => BigInt::from(*base).pow(n as u32) + shift,
            SequenceKind::ScalarExplicit { values } => BigInt::from(values[n - 1]),
            _ => return Ok(None),
        };
        if v.is_zero() {
            return Err(LacunaError::SingularMatrix { index: n });
        }
        Ok(Some(v))
    }

    /// `M_n`.
    pub fn get_matrix(&self, n: usize) -> Result<Arc<IntMatrix>> {
        if let Some(v) = self.scalar(n)? {
            return Ok(Arc::new(IntMatrix::scalar(v)));
        }
        match &self.kind {
            SequenceKind::MatrixExplicit { .. } => Ok(Arc::new(self.mats[n - 1].clone())),
            SequenceKind::MatrixProduct { .. } => {
                if let Some(m) = self.memo.read().expect("memo lock").get(n - 1) {
                    return Ok(Arc::clone(m));
                }
                let mut memo = self.memo.write().expect("memo lock");
                while memo.len() < n {
                    let k = memo.len();
                    let a = &self.mats[k % self.mats.len()];
                    let next = match memo.last() {
                        None => a.clone(),
                        Some(prev) => a.mul(prev)?,
                    };
                    memo.push(Arc::new(next));
                }
                Ok(Arc::clone(&memo[n - 1]))
            }
            _ => unreachable!("scalar kinds handled above"),
        }
    }

    /// `s * n` when `M_n = 2^(s n)`, enabling windowed orbit evaluation.
    pub fn power_of_two_shift(&self, n: usize) -> Option<u64> {
        match self.kind {
            SequenceKind::ScalarGeometric { theta } if theta > 1 && (theta as u64).is_power_of_two() => {
                Some(theta.trailing_zeros() as u64 * n as u64)
            }
            _ => None,
        }
    }

    /// Entries of `M_n` (row major) prepared for fractional-part queries.
    pub fn multipliers(&self, n: usize) -> Result<Vec<Multiplier>> {
        if let Some(s) = self.power_of_two_shift(n) {
            self.check_index(n)?;
            return Ok(vec![Multiplier::Shifted { mult: 1, shift: s }]);
        }
        if let SequenceKind::ScalarShiftedPower { base, shift } = self.kind {
            if base > 1 && (base as u64).is_power_of_two() && shift.unsigned_abs() < 1 << 40 {
                let v = self.scalar(n)?.expect("scalar kind");
                let s = base.trailing_zeros() as u64 * n as u64;
                return Ok(vec![Multiplier::sum(vec![(1, s), (shift, 0)], v)]);
            }
        }
        Ok(self.get_matrix(n)?.entries().iter().map(Multiplier::new).collect())
    }

    /// `||M_n^T||_inf`, the largest absolute column sum of `M_n`.
    pub fn transposed_norm(&self, n: usize) -> Result<BigUint> {
        if let Some(s) = self.power_of_two_shift(n) {
            return Ok(BigUint::one() << s);
        }
        if let Some(v) = self.scalar(n)? {
            return Ok(v.magnitude().clone());
        }
        Ok(self.get_matrix(n)?.transpose().op_norm_inf())
    }

    pub fn norm_of(&self, n: usize, kind: NormKind) -> Result<BigUint> {
        match kind {
            NormKind::Induced => self.transposed_norm(n),
            NormKind::Entrywise => {
                if let Some(v) = self.scalar(n)? {
                    return Ok(v.magnitude().clone());
                }
                Ok(self.get_matrix(n)?.max_abs_entry())
            }
        }
    }

    /// `log2 ||M_n^T||_inf`.
    pub fn norm_log2(&self, n: usize) -> Result<f64> {
        if let Some(s) = self.power_of_two_shift(n) {
            return Ok(s as f64);
        }
        Ok(log2_big(&self.transposed_norm(n)?))
    }

    /// The frequency `M_n^T j`.
    pub fn frequency(&self, n: usize, j: &[BigInt]) -> Result<Vec<BigInt>> {
        if j.len() != self.dim {
            return Err(LacunaError::DimensionMismatch { expected: self.dim, got: j.len() });
        }
        if let Some(v) = self.scalar(n)? {
            return Ok(vec![v * &j[0]]);
        }
        self.get_matrix(n)?.transpose_mul_vec(j)
    }
}

/// Matrix norm used on the right-hand side of the gap inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Induced operator norm of `M^T` (largest column sum of `M`).
    #[default]
    Induced,
    /// Largest absolute entry.
    Entrywise,
}

/// An exact rational ratio `q = num / den > 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GapRatio {
    num: BigUint,
    den: BigUint,
}

impl GapRatio {
    pub fn new(num: BigUint, den: BigUint) -> Result<Self> {
        if den.is_zero() || num <= den {
            return Err(invalid(format!("gap ratio {num}/{den} must exceed 1")));
        }
        let g = num.gcd(&den);
        Ok(Self { num: num / &g, den: den / &g })
    }

    /// The exact binary value of a double.
    pub fn from_f64(q: f64) -> Result<Self> {
        if !q.is_finite() || q <= 1.0 {
            return Err(invalid(format!("gap ratio {q} must be a finite number above 1")));
        }
        let bits = q.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64 - 1075;
        let mant = BigUint::from((bits & ((1u64 << 52) - 1)) | (1u64 << 52));
        if exp >= 0 {
            Self::new(mant << exp as u64, BigUint::one())
        } else {
            Self::new(mant, BigUint::one() << (-exp) as u64)
        }
    }

    pub fn to_f64(&self) -> f64 {
        ratio_f64(&self.num, &self.den)
    }

    /// `log_q(x)`.
    pub fn log_of(&self, x: f64) -> f64 {
        x.ln() / self.to_f64().ln()
    }
}

impl FromStr for GapRatio {
    type Err = LacunaError;

    /// Accepts `p/r` or a decimal such as `1.25`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || LacunaError::Parse(format!("cannot read gap ratio {s:?}"));
        if let Some((p, r)) = s.split_once('/') {
            let p = BigUint::from_str(p.trim()).map_err(|_| bad())?;
            let r = BigUint::from_str(r.trim()).map_err(|_| bad())?;
            return Self::new(p, r);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        let num = BigUint::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| bad())?;
        Self::new(num, BigUint::from(10u32).pow(frac.len() as u32))
    }
}

impl fmt::Display for GapRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapViolation {
    pub n: usize,
    pub k: usize,
    pub j: Vec<i64>,
}

/// Outcome of a truncated gap check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub q: String,
    pub n_max: usize,
    pub j_max: u64,
    pub k_max: usize,
    pub norm: NormKind,
    pub verdict: Verdict,
    pub first_violation: Option<GapViolation>,
    /// Smallest `||M_{n+k}^T j|| / (q^k ||M_n^T||)` seen.
    pub margin: f64,
    pub checked: u64,
    /// Triples dropped because `n + k` ran past a finite sequence.
    pub skipped: u64,
}

/// Checks `||M_{n+k}^T j||_inf >= q^k ||M_n^T||_inf` for `1 <= n <= n_max`,
/// `1 <= k <= k_max` with `q^k >= ||j||_inf`, and `0 < ||j||_inf <= j_max`.
///
/// `j` and `-j` give the same left side, so only one of each pair is visited.
pub fn check_hadamard_gap(
    seq: &LacunarySequence,
    q: &GapRatio,
    n_max: usize,
    j_max: u64,
    k_max: usize,
    norm: NormKind,
) -> Result<GapReport> {
    if n_max == 0 || j_max == 0 || k_max == 0 {
        return Err(invalid("truncation bounds must be at least 1"));
    }
    let d = seq.dim();
    let js = canonical_box(d, j_max as i64);
    let qn: Vec<BigUint> = (0..=k_max).map(|k| q.num.clone().pow(k as u32)).collect();
    let qd: Vec<BigUint> = (0..=k_max).map(|k| q.den.clone().pow(k as u32)).collect();
    let limit = seq.len().unwrap_or(usize::MAX);

    let mut margin = f64::INFINITY;
    let mut first = None;
    let mut checked = 0u64;
    let mut skipped = 0u64;
    for n in 1..=n_max.min(limit) {
        let rhs_norm = seq.norm_of(n, norm)?;
        for k in 1..=k_max {
            if n + k > limit {
                skipped += js.len() as u64;
                continue;
            }
            let m = seq.get_matrix(n + k)?;
            let rhs = &qn[k] * &rhs_norm;
            for j in &js {
                let jn = j.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
                // only k >= log_q ||j||
                if qn[k] < &qd[k] * BigUint::from(jn) {
                    continue;
                }
                checked += 1;
                let lhs = m
                    .transpose_mul_small(j)
                    .into_iter()
                    .map(|v| v.magnitude().clone())
                    .max()
                    .unwrap_or_default();
                let lhs = &qd[k] * lhs;
                let violated = lhs < rhs;
                let mut r = ratio_f64(&lhs, &rhs);
                if violated && r >= 1.0 {
                    r = f64::from_bits(1.0f64.to_bits() - 1);
                }
                margin = margin.min(r);
                if violated && first.is_none() {
                    first = Some(GapViolation { n, k, j: j.clone() });
                }
            }
        }
    }
    Ok(GapReport {
        q: q.to_string(),
        n_max,
        j_max,
        k_max,
        norm,
        verdict: if first.is_some() { Verdict::Fail } else { Verdict::Pass },
        first_violation: first,
        margin,
        checked,
        skipped,
    })
}

/// Nonzero integer vectors with `||j||_inf <= r` whose first nonzero entry is positive.
pub fn canonical_box(d: usize, r: i64) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let v = (idx % side) as i64 - r;
                    idx /= side;
                    v
                })
                .collect::<Vec<i64>>()
        })
        .filter(|j| j.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_matrix_examples() {
        let g = LacunarySequence::geometric(2).unwrap();
        assert_eq!(*g.get_matrix(5).unwrap(), IntMatrix::from_rows(&[vec![32]]).unwrap());
        let s = LacunarySequence::shifted_power(2, -1).unwrap();
        assert_eq!(*s.get_matrix(3).unwrap(), IntMatrix::from_rows(&[vec![7]]).unwrap());
        let p = LacunarySequence::matrix_product(vec![vec![vec![1, 0], vec![0, 1]]]).unwrap();
        assert_eq!(*p.get_matrix(7).unwrap(), IntMatrix::identity(2));
    }

    #[test]
    fn construction_rejects_singular_members() {
        assert!(matches!(
            LacunarySequence::explicit_scalars(&[1, 0, 3]),
            Err(LacunaError::SingularMatrix { index: 2 })
        ));
        assert!(LacunarySequence::matrix_explicit(vec![vec![vec![1, 2], vec![2, 4]]]).is_err());
        assert!(LacunarySequence::geometric(0).is_err());
        let s = LacunarySequence::shifted_power(1, -1).unwrap();
        assert!(s.get_matrix(1).is_err());
    }

    #[test]
    fn product_follows_transpose_order() {
        let a1 = vec![vec![2, 1], vec![1, 1]];
        let a2 = vec![vec![1, 1], vec![0, 3]];
        let seq = LacunarySequence::matrix_product(vec![a1.clone(), a2.clone()]).unwrap();
        let a1 = IntMatrix::from_rows(&a1).unwrap();
        let a2 = IntMatrix::from_rows(&a2).unwrap();
        // M_3^T = A_1^T A_2^T A_1^T
        let want = a1.transpose().mul(&a2.transpose()).unwrap().mul(&a1.transpose()).unwrap();
        assert_eq!(seq.get_matrix(3).unwrap().transpose(), want);
    }

    #[test]
    fn index_checks() {
        let e = LacunarySequence::explicit_scalars(&[1, 2]).unwrap();
        assert!(matches!(e.get_matrix(3), Err(LacunaError::IndexOutOfRange { n: 3, len: 2 })));
        assert!(e.get_matrix(0).is_err());
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(IntMatrix::from_rows(&[vec![2]]).unwrap().op_norm_inf(), BigUint::from(2u32));
        assert_eq!(IntMatrix::identity(3).op_norm_inf(), BigUint::one());
        assert_eq!(
            IntMatrix::from_rows(&[vec![2, 1], vec![0, 3]]).unwrap().op_norm_inf(),
            BigUint::from(3u32)
        );
    }

    #[test]
    fn gap_examples() {
        let q = GapRatio::from_f64(2.0).unwrap();
        let g = LacunarySequence::geometric(2).unwrap();
        let r = check_hadamard_gap(&g, &q, 20, 8, 16, NormKind::Induced).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.margin >= 1.0);

        let s = LacunarySequence::shifted_power(2, -1).unwrap();
        let r = check_hadamard_gap(&s, &q, 20, 8, 16, NormKind::Induced).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);

        let lin = LacunarySequence::explicit_scalars(&(1..=40).collect::<Vec<_>>()).unwrap();
        let r = check_hadamard_gap(&lin, &q, 20, 8, 16, NormKind::Induced).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let v = r.first_violation.unwrap();
        // M_3 = 3 < 2^2 * M_1
        assert_eq!((v.n, v.k, v.j), (1, 2, vec![1]));
        assert!(r.margin < 1.0);
    }

    #[test]
    fn gap_ratio_parsing() {
        assert_eq!("3/2".parse::<GapRatio>().unwrap(), GapRatio::from_f64(1.5).unwrap());
        assert_eq!("1.25".parse::<GapRatio>().unwrap().to_f64(), 1.25);
        assert!("1".parse::<GapRatio>().is_err());
        assert!("x".parse::<GapRatio>().is_err());
        assert!(GapRatio::from_f64(0.5).is_err());
    }

    #[test]
    fn canonical_box_counts() {
        assert_eq!(canonical_box(1, 3), vec![vec![1], vec![2], vec![3]]);
        assert_eq!(canonical_box(2, 1).len(), 4);
        assert_eq!(canonical_box(3, 2).len(), (125 - 1) / 2);
    }

    #[test]
    fn descriptor_serde() {
        let k: SequenceKind = serde_json::from_str(r#"{"kind":"scalar_shifted_power","base":2,"shift":-1}"#).unwrap();
        assert_eq!(k, SequenceKind::ScalarShiftedPower { base: 2, shift: -1 });
        assert!(serde_json::from_str::<SequenceKind>(r#"{"kind":"scalar_geometric","theta":2,"x":1}"#).is_err());
    }
}
