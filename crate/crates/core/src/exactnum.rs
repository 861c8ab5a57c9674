//! Exact arithmetic on the torus.
//!
//! A point of `[0,1)^d` is a dyadic rational `X / 2^B` with big-integer
//! numerators, so the fractional part `<Mx>` is exact no matter how large the
//! entries of `M` grow. Trigonometric evaluation only ever needs the leading
//! 64 bits of a fractional part ("turns"); [`Multiplier`] and [`BitSource`]
//! produce those bits directly, in O(1) when the multiplier has the form
//! `m * 2^s` with small `m`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, LacunaError, Result};
use crate::lacunary::LacunarySequence;

/// Extra bits kept below the leading bits of an orbit by default.
pub const DEFAULT_GUARD_BITS: u64 = 64;

/// A point of `[0,1)^d` with coordinates `coords[i] / 2^bits`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DyadicPoint {
    coords: Vec<BigUint>,
    bits: u64,
}

impl DyadicPoint {
    pub fn new(coords: Vec<BigUint>, bits: u64) -> Result<Self> {
        if bits == 0 {
            return Err(invalid("precision must be at least one bit"));
        }
        if coords.is_empty() {
            return Err(invalid("a point needs at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| c.bits() > bits) {
            return Err(invalid(format!("coordinate numerator {c} is not below 2^{bits}")));
        }
        Ok(Self { coords, bits })
    }

    /// Builds a point from machine-word numerators.
    pub fn from_u64(nums: &[u64], bits: u64) -> Result<Self> {
        Self::new(nums.iter().map(|&n| BigUint::from(n)).collect(), bits)
    }

    /// The origin of `[0,1)^d`.
    pub fn zero(d: usize, bits: u64) -> Result<Self> {
        Self::new(vec![BigUint::zero(); d], bits)
    }

    /// Rounds each coordinate of `x` down to a multiple of `2^-bits`.
    pub fn from_f64(x: &[f64], bits: u64) -> Result<Self> {
        let coords = x
            .iter()
            .map(|&v| {
                if !(0.0..1.0).contains(&v) {
                    return Err(invalid(format!("coordinate {v} outside [0,1)")));
                }
                Ok(floor_scaled(v, bits))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords, bits)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn coords(&self) -> &[BigUint] {
        &self.coords
    }

    /// Leading 64 bits of every coordinate.
    pub fn turns(&self) -> Vec<u64> {
        self.coords.iter().map(|c| top64(c, self.bits)).collect()
    }

    pub fn coord_f64(&self, i: usize) -> f64 {
        turns_to_unit(top64(&self.coords[i], self.bits))
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.coord_f64(i)).collect()
    }

    /// Limb views of all coordinates, for repeated windowed reads.
    pub fn coord_bits(&self) -> Vec<CoordBits> {
        self.coords
            .iter()
            .map(|c| CoordBits::from_biguint(c, self.bits))
            .collect()
    }

    /// Re-expresses the point over a larger denominator `2^bits`.
    pub fn with_bits(&self, bits: u64) -> Result<Self> {
        if bits < self.bits {
            return Err(LacunaError::PrecisionInsufficient { have: bits, need: self.bits });
        }
        let shift = bits - self.bits;
        Self::new(self.coords.iter().map(|c| c << shift).collect(), bits)
    }
}

impl fmt::Display for DyadicPoint {
    /// Formats as `num/2^B` per coordinate, comma separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}/2^{}", self.bits)?;
        }
        Ok(())
    }
}

impl FromStr for DyadicPoint {
    type Err = LacunaError;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = None;
        let mut coords = Vec::new();
        for field in s.split(',') {
            let (num, exp) = parse_dyadic(field.trim())?;
            match bits {
                None => bits = Some(exp),
                Some(b) if b != exp => {
                    return Err(LacunaError::Parse(format!(
                        "mixed denominators 2^{b} and 2^{exp} in one point"
                    )))
                }
                _ => {}
            }
            coords.push(num);
        }
        Self::new(coords, bits.unwrap_or(0))
    }
}

/// Parses one coordinate written as `num/2^B`.
pub fn parse_dyadic(s: &str) -> Result<(BigUint, u64)> {
    let (num, den) = s
        .split_once('/')
        .ok_or_else(|| LacunaError::Parse(format!("expected num/2^B, got {s:?}")))?;
    let exp = den
        .trim()
        .strip_prefix("2^")
        .ok_or_else(|| LacunaError::Parse(format!("denominator must be 2^B, got {den:?}")))?;
    let num = BigUint::from_str(num.trim()).map_err(|e| LacunaError::Parse(e.to_string()))?;
    let exp = exp.parse::<u64>().map_err(|e| LacunaError::Parse(e.to_string()))?;
    Ok((num, exp))
}

/// Non-singular square integer matrix with big-integer entries (row major).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<BigInt>,
}

impl IntMatrix {
    pub fn new(dim: usize, entries: Vec<BigInt>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(invalid(format!(
                "a {dim}x{dim} matrix needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("matrix rows must all have length equal to the row count"));
        }
        Self::new(dim, rows.iter().flatten().map(|&v| BigInt::from(v)).collect())
    }

    pub fn scalar(value: BigInt) -> Self {
        Self { dim: 1, entries: vec![value] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![BigInt::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = BigInt::one();
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> &BigInt {
        &self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                entries.push(self.get(c, r).clone());
            }
        }
        Self { dim: d, entries }
    }

    pub fn mul(&self, rhs: &IntMatrix) -> Result<Self> {
        check_dim(self.dim, rhs.dim)?;
        let d = self.dim;
        let mut entries = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                let mut acc = BigInt::zero();
                for k in 0..d {
                    acc += self.get(r, k) * rhs.get(k, c);
                }
                entries.push(acc);
            }
        }
        Ok(Self { dim: d, entries })
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Result<Vec<BigInt>> {
        check_dim(self.dim, v.len())?;
        Ok((0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c) * &v[c]).sum())
            .collect())
    }

    /// `M^T v` without materializing the transpose.
    pub fn transpose_mul_vec(&self, v: &[BigInt]) -> Result<Vec<BigInt>> {
        check_dim(self.dim, v.len())?;
        Ok((0..self.dim)
            .map(|c| (0..self.dim).map(|r| self.get(r, c) * &v[r]).sum())
            .collect())
    }

    /// Same as [`transpose_mul_vec`](Self::transpose_mul_vec) for small vectors.
    pub fn transpose_mul_small(&self, v: &[i64]) -> Vec<BigInt> {
        (0..self.dim)
            .map(|c| {
                (0..self.dim)
                    .filter(|&r| v[r] != 0)
                    .map(|r| self.get(r, c) * v[r])
                    .sum()
            })
            .collect()
    }

    /// Fraction-free Gaussian elimination (Bareiss).
    pub fn determinant(&self) -> BigInt {
        let d = self.dim;
        let mut a: Vec<Vec<BigInt>> = (0..d)
            .map(|r| (0..d).map(|c| self.get(r, c).clone()).collect())
            .collect();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..d {
            if a[k][k].is_zero() {
                match (k + 1..d).find(|&r| !a[r][k].is_zero()) {
                    Some(r) => {
                        a.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                    a[i][j] = v / &prev;
                }
            }
            prev = a[k][k].clone();
        }
        sign * &a[d - 1][d - 1]
    }

    pub fn is_singular(&self) -> bool {
        self.determinant().is_zero()
    }

    /// Induced l-infinity operator norm: the largest absolute row sum.
    pub fn op_norm_inf(&self) -> BigUint {
        (0..self.dim)
            .map(|r| {
                (0..self.dim)
                    .map(|c| self.get(r, c).magnitude().clone())
                    .sum::<BigUint>()
            })
            .max()
            .unwrap_or_default()
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> BigUint {
        self.entries
            .iter()
            .map(|e| e.magnitude().clone())
            .max()
            .unwrap_or_default()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LacunaError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `<Mx>`, exactly: coordinate `i` is `(sum_j M[i][j] X_j) mod 2^B`.
pub fn frac_apply(m: &IntMatrix, x: &DyadicPoint) -> Result<DyadicPoint> {
    check_dim(m.dim(), x.dim())?;
    let modulus = BigInt::one() << x.bits;
    let coords = (0..m.dim())
        .map(|r| {
            let acc: BigInt = (0..m.dim())
                .map(|c| m.get(r, c) * BigInt::from(x.coords[c].clone()))
                .sum();
            acc.mod_floor(&modulus)
                .to_biguint()
                .expect("mod_floor of a positive modulus is non-negative")
        })
        .collect();
    DyadicPoint::new(coords, x.bits)
}

/// Little-endian limbs of a numerator together with its denominator exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoordBits {
    limbs: Vec<u64>,
    bits: u64,
}

impl CoordBits {
    pub fn from_biguint(v: &BigUint, bits: u64) -> Self {
        Self { limbs: v.to_u64_digits(), bits }
    }

    /// Builds from big-endian 64-bit words `0.w0 w1 w2...` truncated to `bits`.
    fn from_be_words(words: &[u64], bits: u64) -> Self {
        let total = words.len() as u64 * 64;
        let drop = total - bits;
        let mut limbs: Vec<u64> = words.iter().rev().copied().collect();
        if drop > 0 {
            // shift right by `drop` (< 64) bits
            let mut carry = 0u64;
            for limb in limbs.iter_mut().rev() {
                let v = *limb;
                *limb = (v >> drop) | carry;
                carry = v << (64 - drop);
            }
        }
        while limbs.last() == Some(&0) {
            limbs.pop();
        }
        Self { limbs, bits }
    }

    fn bit_word(&self, word: i64) -> u64 {
        if word < 0 {
            0
        } else {
            self.limbs.get(word as usize).copied().unwrap_or(0)
        }
    }
}

/// A dyadic value `numerator / 2^bits` whose numerator bits can be read in
/// 64-bit windows.
pub trait BitSource {
    fn bits(&self) -> u64;

    /// Bits `[lo, lo + 64)` of the numerator; positions below zero read as 0.
    fn extract64(&self, lo: i64) -> u64;

    fn numerator(&self) -> BigUint;

    /// Leading 64 bits of `frac(2^shift * value)`.
    fn window(&self, shift: u64) -> u64 {
        let b = self.bits();
        if shift >= b {
            return 0;
        }
        self.extract64((b - shift) as i64 - 64)
    }
}

impl BitSource for CoordBits {
    fn bits(&self) -> u64 {
        self.bits
    }

    fn extract64(&self, lo: i64) -> u64 {
        if lo <= -64 {
            return 0;
        }
        if lo < 0 {
            let below = self.limbs.first().copied().unwrap_or(0);
            let keep = (lo + 64) as u32;
            let masked = if keep >= 64 { below } else { below & ((1u64 << keep) - 1) };
            return masked << (-lo) as u32;
        }
        let word = lo.div_euclid(64);
        let off = lo.rem_euclid(64) as u32;
        let lo_word = self.bit_word(word);
        if off == 0 {
            lo_word
        } else {
            (lo_word >> off) | (self.bit_word(word + 1) << (64 - off))
        }
    }

    fn numerator(&self) -> BigUint {
        BigUint::from_slice(
            &self
                .limbs
                .iter()
                .flat_map(|&l| [l as u32, (l >> 32) as u32])
                .collect::<Vec<_>>(),
        )
    }
}

/// A bare 64-bit fraction `t / 2^64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Turns(pub u64);

impl BitSource for Turns {
    fn bits(&self) -> u64 {
        64
    }

    fn extract64(&self, lo: i64) -> u64 {
        match lo {
            64.. | ..=-64 => 0,
            0.. => self.0 >> lo,
            _ => self.0 << (-lo),
        }
    }

    fn numerator(&self) -> BigUint {
        BigUint::from(self.0)
    }
}

/// A small dyadic `num / 2^bits` with `num < 2^64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmallDyadic {
    pub num: u64,
    pub bits: u64,
}

impl BitSource for SmallDyadic {
    fn bits(&self) -> u64 {
        self.bits
    }

    fn extract64(&self, lo: i64) -> u64 {
        Turns(self.num).extract64(lo)
    }

    fn numerator(&self) -> BigUint {
        BigUint::from(self.num)
    }
}

/// Center of the level-`level` dyadic cell containing a coordinate:
/// `(2v + 1) / 2^(level + 1)` with `v = floor(X / 2^(B - level))`.
#[derive(Clone, Copy, Debug)]
pub struct CellCenter<'a> {
    coord: &'a CoordBits,
    level: u64,
}

impl<'a> CellCenter<'a> {
    pub fn new(coord: &'a CoordBits, level: u64) -> Result<Self> {
        if level > coord.bits {
            return Err(LacunaError::PrecisionInsufficient { have: coord.bits, need: level });
        }
        Ok(Self { coord, level })
    }
}

impl BitSource for CellCenter<'_> {
    fn bits(&self) -> u64 {
        self.level + 1
    }

    fn extract64(&self, lo: i64) -> u64 {
        // numerator bit p >= 1 is coordinate bit p - 1 + (B - level); bit 0 is 1.
        let offset = (self.coord.bits - self.level) as i64;
        let mut w = self.coord.extract64(lo - 1 + offset);
        let cut = 1 - lo;
        if cut >= 64 {
            w = 0;
        } else if cut > 0 {
            w &= !((1u64 << cut) - 1);
        }
        if (0..64).contains(&(-lo)) {
            w |= 1u64 << (-lo);
        }
        w
    }

    fn numerator(&self) -> BigUint {
        let v = self.coord.numerator() >> (self.coord.bits - self.level);
        (v << 1u32) | BigUint::one()
    }
}

const SMALL_MULT_LIMIT: u64 = 1 << 40;

/// An integer factor prepared for repeated `frac(factor * value)` queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Multiplier {
    Zero,
    /// `mult * 2^shift` with `|mult| < 2^40`.
    Shifted { mult: i64, shift: u64 },
    /// A short sum of shifted terms, such as `2^n - 1`.
    Sum { parts: Vec<(i64, u64)>, value: BigInt },
    Big(BigInt),
}

impl Multiplier {
    pub fn new(v: &BigInt) -> Self {
        let Some(tz) = v.trailing_zeros() else {
            return Multiplier::Zero;
        };
        let odd = v >> tz;
        match odd.to_i64() {
            Some(m) if m.unsigned_abs() < SMALL_MULT_LIMIT => Multiplier::Shifted { mult: m, shift: tz },
            _ => Multiplier::Big(v.clone()),
        }
    }

    /// `value = sum mult * 2^shift` over `parts`; the caller guarantees the identity.
    pub fn sum(parts: Vec<(i64, u64)>, value: BigInt) -> Self {
        debug_assert!(parts.iter().all(|(m, _)| m.unsigned_abs() < SMALL_MULT_LIMIT));
        if value.is_zero() {
            return Multiplier::Zero;
        }
        Multiplier::Sum { parts, value }
    }

    pub fn from_i64(v: i64) -> Self {
        Self::new(&BigInt::from(v))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Multiplier::Zero)
    }

    /// Leading 64 bits of `frac(self * value)`.
    ///
    /// The shifted path truncates the value below its leading 64 bits, so the
    /// result is within `|mult| * 2^-64` turns of the exact fractional part.
    pub fn turns<S: BitSource>(&self, src: &S) -> u64 {
        match self {
            Multiplier::Zero => 0,
            Multiplier::Shifted { mult, shift } => (*mult as u64).wrapping_mul(src.window(*shift)),
            Multiplier::Sum { parts, .. } => parts.iter().fold(0u64, |acc, (m, s)| {
                acc.wrapping_add((*m as u64).wrapping_mul(src.window(*s)))
            }),
            Multiplier::Big(v) => {
                let b = src.bits();
                let reduced = low_bits_signed(v, b);
                top64(&low_bits(&(reduced * src.numerator()), b), b)
            }
        }
    }

    /// True when `self / 2^level` is an integer.
    pub fn divisible_by_pow2(&self, level: u64) -> bool {
        match self {
            Multiplier::Zero => true,
            Multiplier::Shifted { mult, shift } => {
                *mult == 0 || *shift + u64::from(mult.trailing_zeros()) >= level
            }
            Multiplier::Sum { value: v, .. } | Multiplier::Big(v) => {
                v.trailing_zeros().is_none_or(|tz| tz >= level)
            }
        }
    }

    /// `self / 2^level` in floating point (may underflow to zero).
    pub fn scaled(&self, level: u64) -> f64 {
        match self {
            Multiplier::Zero => 0.0,
            Multiplier::Shifted { mult, shift } => *mult as f64 * exp2_i(*shift as i64 - level as i64),
            Multiplier::Sum { value: v, .. } | Multiplier::Big(v) => {
                let sign = if v.sign() == Sign::Minus { -1.0 } else { 1.0 };
                let mag = v.magnitude();
                let nb = mag.bits();
                if nb <= 64 {
                    sign * mag.to_f64().unwrap_or(0.0) * exp2_i(-(level as i64))
                } else {
                    let top = (mag >> (nb - 64)).to_u64().unwrap_or(0) as f64;
                    sign * top * exp2_i(nb as i64 - 64 - level as i64)
                }
            }
        }
    }
}

fn exp2_i(e: i64) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e < -1074 {
        0.0
    } else {
        2f64.powi(e as i32)
    }
}

/// `v mod 2^bits` as an unsigned value.
fn low_bits_signed(v: &BigInt, bits: u64) -> BigUint {
    let mag = low_bits(v.magnitude(), bits);
    if v.sign() == Sign::Minus && !mag.is_zero() {
        (BigUint::one() << bits) - mag
    } else {
        mag
    }
}

/// `v mod 2^bits`.
pub fn low_bits(v: &BigUint, bits: u64) -> BigUint {
    if v.bits() <= bits {
        return v.clone();
    }
    let words = bits.div_ceil(64) as usize;
    let mut digits: Vec<u64> = v.iter_u64_digits().take(words).collect();
    let rem = bits % 64;
    if rem != 0 {
        if let Some(last) = digits.last_mut() {
            *last &= (1u64 << rem) - 1;
        }
    }
    let halves: Vec<u32> = digits.iter().flat_map(|&l| [l as u32, (l >> 32) as u32]).collect();
    BigUint::from_slice(&halves)
}

/// Leading 64 bits of `v / 2^bits` for `v < 2^bits`.
pub fn top64(v: &BigUint, bits: u64) -> u64 {
    if bits >= 64 {
        let shifted = v >> (bits - 64);
        shifted.iter_u64_digits().next().unwrap_or(0)
    } else {
        v.iter_u64_digits().next().unwrap_or(0) << (64 - bits)
    }
}

fn floor_scaled(v: f64, bits: u64) -> BigUint {
    // v in [0,1): v = mant * 2^exp exactly
    if v == 0.0 {
        return BigUint::zero();
    }
    let raw = v.to_bits();
    let exp = ((raw >> 52) & 0x7ff) as i64;
    let mant = if exp == 0 { (raw & ((1 << 52) - 1)) << 1 } else { (raw & ((1 << 52) - 1)) | (1 << 52) };
    let e = exp - 1075; // v = mant * 2^e
    let shift = bits as i64 + e;
    let m = BigUint::from(mant);
    if shift >= 0 {
        m << shift as u64
    } else {
        m >> (-shift) as u64
    }
}

/// Converts turns (a fixed-point fraction of a full period) to `[0,1)`.
pub fn turns_to_unit(t: u64) -> f64 {
    t as f64 * (1.0 / 18_446_744_073_709_551_616.0)
}

/// Converts turns to an angle in `[-pi, pi)`.
#[inline]
pub fn turns_to_radians(t: u64) -> f64 {
    (t as i64) as f64 * (TAU / 18_446_744_073_709_551_616.0)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator for the stream owned by `(seed, index)`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Uniform random dyadic point, a pure function of `(seed, index)`.
///
/// Coordinate `i` reads its binary expansion from its own region of the
/// stream, most significant word first, so raising `bits` only appends bits.
pub fn sample_uniform(seed: u64, index: u64, bits: u64, d: usize) -> Result<DyadicPoint> {
    let limbs = sample_uniform_bits(seed, index, bits, d)?;
    DyadicPoint::new(limbs.iter().map(|c| c.numerator()).collect(), bits)
}

/// As [`sample_uniform`], returning limb views directly.
pub fn sample_uniform_bits(seed: u64, index: u64, bits: u64, d: usize) -> Result<Vec<CoordBits>> {
    if bits == 0 {
        return Err(invalid("precision must be at least one bit"));
    }
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let words = bits.div_ceil(64) as usize;
    let mut rng = stream_rng(seed, index);
    Ok((0..d)
        .map(|i| {
            rng.set_word_pos((i as u128) << 48);
            let be: Vec<u64> = (0..words).map(|_| rng.next_u64()).collect();
            CoordBits::from_be_words(&be, bits)
        })
        .collect())
}

/// `ceil(log2 v)` for `v >= 1`.
pub fn ceil_log2(v: &BigUint) -> u64 {
    if v <= &BigUint::one() {
        0
    } else {
        (v - 1u32).bits()
    }
}

/// `log2 v` in floating point for arbitrarily large `v > 0`.
pub fn log2_big(v: &BigUint) -> f64 {
    let nb = v.bits();
    if nb <= 64 {
        return v.to_f64().unwrap_or(0.0).log2();
    }
    let top = (v >> (nb - 64)).to_u64().unwrap_or(0) as f64;
    top.log2() + (nb - 64) as f64
}

/// `a / b` in floating point; monotone, and exactly 1.0 when `a == b`.
pub fn ratio_f64(a: &BigUint, b: &BigUint) -> f64 {
    let nb = a.bits().max(b.bits());
    if nb <= 64 {
        return a.to_f64().unwrap_or(0.0) / b.to_f64().unwrap_or(0.0);
    }
    let s = nb - 64;
    let x = (a >> s).to_u64().unwrap_or(0) as f64;
    let y = (b >> s).to_u64().unwrap_or(0) as f64;
    x / y
}

/// `ceil(log2 ||M_N^T||_inf) + guard`: the precision a point needs so that
/// `<M_n x>` keeps `guard` meaningful bits for every `n <= N`.
pub fn required_bits(seq: &LacunarySequence, n: usize, guard: u64) -> Result<u64> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    let norm = seq.transposed_norm(n)?;
    Ok(ceil_log2(&norm) + guard)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(nums: &[u64], bits: u64) -> DyadicPoint {
        DyadicPoint::from_u64(nums, bits).unwrap()
    }

    #[test]
    fn frac_apply_examples() {
        let two = IntMatrix::from_rows(&[vec![2]]).unwrap();
        assert_eq!(frac_apply(&two, &pt(&[3], 2)).unwrap(), pt(&[2], 2));

        let x = pt(&[5, 9, 13], 4);
        assert_eq!(frac_apply(&IntMatrix::identity(3), &x).unwrap(), x);

        let m = IntMatrix::from_rows(&[vec![2, 1], vec![0, 3]]).unwrap();
        assert_eq!(frac_apply(&m, &pt(&[2, 1], 2)).unwrap(), pt(&[1, 3], 2));
    }

    #[test]
    fn frac_apply_negative_entries_wrap() {
        let m = IntMatrix::from_rows(&[vec![-1]]).unwrap();
        assert_eq!(frac_apply(&m, &pt(&[1], 2)).unwrap(), pt(&[3], 2));
    }

    #[test]
    fn frac_apply_errors() {
        let m = IntMatrix::identity(2);
        assert!(matches!(
            frac_apply(&m, &pt(&[1], 2)),
            Err(LacunaError::DimensionMismatch { .. })
        ));
        assert!(DyadicPoint::from_u64(&[0], 0).is_err());
        assert!(DyadicPoint::from_u64(&[4], 2).is_err());
    }

    #[test]
    fn composition_through_unreduced_numerators() {
        let a = IntMatrix::from_rows(&[vec![3, 1], vec![1, 2]]).unwrap();
        let b = IntMatrix::from_rows(&[vec![5, -2], vec![7, 1]]).unwrap();
        let x = pt(&[12345, 999], 16);
        let ab = a.mul(&b).unwrap();
        let direct = frac_apply(&ab, &x).unwrap();
        // un-reduced path: B*X as integers, then A*(B*X), reduce once
        let bx: Vec<BigInt> = b
            .mul_vec(&x.coords().iter().map(|c| BigInt::from(c.clone())).collect::<Vec<_>>())
            .unwrap();
        let abx = a.mul_vec(&bx).unwrap();
        let m = BigInt::one() << 16u32;
        let reduced: Vec<BigUint> = abx.iter().map(|v| v.mod_floor(&m).to_biguint().unwrap()).collect();
        assert_eq!(direct.coords(), reduced.as_slice());
    }

    #[test]
    fn determinant_and_norms() {
        let m = IntMatrix::from_rows(&[vec![2, 1], vec![0, 3]]).unwrap();
        assert_eq!(m.determinant(), BigInt::from(6));
        assert_eq!(m.op_norm_inf(), BigUint::from(3u32));
        assert_eq!(m.transpose().op_norm_inf(), BigUint::from(4u32));
        assert_eq!(m.max_abs_entry(), BigUint::from(3u32));
        let s = IntMatrix::from_rows(&[vec![1, 2], vec![2, 4]]).unwrap();
        assert!(s.is_singular());
        let p = IntMatrix::from_rows(&[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]]).unwrap();
        assert_eq!(p.determinant(), BigInt::from(-1));
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let a = sample_uniform(7, 3, 200, 2).unwrap();
        let b = sample_uniform(7, 3, 200, 2).unwrap();
        assert_eq!(a, b);
        for k in 0..1000u64 {
            let p = sample_uniform(11, k, 64, 1).unwrap();
            let q = sample_uniform(11, k + 1, 64, 1).unwrap();
            assert_ne!(p, q);
        }
    }

    #[test]
    fn sampling_is_prefix_consistent() {
        let short = sample_uniform(5, 9, 70, 3).unwrap();
        let long = sample_uniform(5, 9, 300, 3).unwrap();
        for i in 0..3 {
            assert_eq!(&(long.coords()[i].clone() >> 230u32), &short.coords()[i]);
        }
    }

    #[test]
    fn sampling_mean_is_one_half() {
        let n = 100_000u64;
        let mean: f64 = (0..n)
            .map(|k| sample_uniform(42, k, 64, 1).unwrap().coord_f64(0))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn windows_match_exact_products() {
        let x = sample_uniform(1, 2, 300, 1).unwrap();
        let bits = &x.coord_bits()[0];
        for shift in [0u64, 1, 5, 63, 64, 65, 150, 236, 237, 290, 299, 300, 400] {
            let m = Multiplier::new(&(BigInt::from(3) << shift));
            let exact = frac_apply(&IntMatrix::scalar(BigInt::from(3) << shift), &x).unwrap();
            let want = top64(&exact.coords()[0], 300);
            let got = m.turns(bits);
            let diff = want.wrapping_sub(got) as i64;
            assert!(diff.unsigned_abs() <= 3, "shift {shift}: {want} vs {got}");
        }
    }

    #[test]
    fn big_multiplier_is_exact() {
        let x = sample_uniform(9, 9, 256, 1).unwrap();
        let f = (BigInt::one() << 200u32) - 1;
        let m = Multiplier::new(&f);
        assert!(matches!(m, Multiplier::Big(_)));
        let exact = frac_apply(&IntMatrix::scalar(f), &x).unwrap();
        assert_eq!(m.turns(&x.coord_bits()[0]), top64(&exact.coords()[0], 256));
    }

    #[test]
    fn sum_multiplier_matches_exact() {
        let x = sample_uniform(4, 4, 400, 1).unwrap();
        let cb = &x.coord_bits()[0];
        for n in [1u64, 10, 63, 64, 65, 200, 390] {
            let v: BigInt = (BigInt::one() << n) - 1;
            let m = Multiplier::sum(vec![(1, n), (-1, 0)], v.clone());
            let exact = frac_apply(&IntMatrix::scalar(v), &x).unwrap();
            let want = top64(&exact.coords()[0], 400);
            let diff = want.wrapping_sub(m.turns(cb)) as i64;
            assert!(diff.unsigned_abs() <= 2, "n {n}");
            assert!(!m.divisible_by_pow2(1));
        }
    }

    #[test]
    fn small_sources() {
        assert_eq!(Turns(1 << 63).window(1), 0);
        assert_eq!(Turns(3 << 62).window(1), 1 << 63);
        let half = SmallDyadic { num: 1, bits: 1 };
        assert_eq!(Multiplier::from_i64(3).turns(&half), 1 << 63);
        assert_eq!(Multiplier::from_i64(4).turns(&half), 0);
    }

    #[test]
    fn cell_center_bits() {
        // x = 3/4 with B = 4 (numerator 12); level 1 cell [1/2,1), center 3/4
        let c = CoordBits::from_biguint(&BigUint::from(12u32), 4);
        let center = CellCenter::new(&c, 1).unwrap();
        assert_eq!(center.numerator(), BigUint::from(3u32));
        assert_eq!(center.window(0), 3u64 << 62);
        // level 2 cell [3/4, 1), center 7/8
        let center = CellCenter::new(&c, 2).unwrap();
        assert_eq!(center.window(0), 7u64 << 61);
        assert_eq!(center.window(1), 3u64 << 62);
        assert!(CellCenter::new(&c, 5).is_err());
    }

    #[test]
    fn cell_center_windows_agree_with_numerator() {
        let x = sample_uniform(3, 4, 500, 1).unwrap();
        let cb = &x.coord_bits()[0];
        for level in [0u64, 1, 10, 63, 64, 65, 200, 499, 500] {
            let c = CellCenter::new(cb, level).unwrap();
            let num = c.numerator();
            for shift in [0u64, 1, 7, 64, 100, 200, 450, 501] {
                let exact = if shift >= c.bits() {
                    0
                } else {
                    top64(&low_bits(&(num.clone() << shift), c.bits()), c.bits())
                };
                assert_eq!(c.window(shift), exact, "level {level} shift {shift}");
            }
        }
    }

    #[test]
    fn dyadic_text_round_trip() {
        let p = pt(&[3, 1], 2);
        let s = p.to_string();
        assert_eq!(s, "3/2^2,1/2^2");
        assert_eq!(s.parse::<DyadicPoint>().unwrap(), p);
        assert!("1/2^2,1/2^3".parse::<DyadicPoint>().is_err());
        assert!("1/3".parse::<DyadicPoint>().is_err());
    }

    #[test]
    fn from_f64_is_exact_for_dyadics() {
        let p = DyadicPoint::from_f64(&[0.75, 0.125], 8).unwrap();
        assert_eq!(p, pt(&[192, 32], 8));
        assert!(DyadicPoint::from_f64(&[1.0], 8).is_err());
    }

    #[test]
    fn log_helpers() {
        assert_eq!(ceil_log2(&BigUint::from(1023u32)), 10);
        assert_eq!(ceil_log2(&BigUint::from(1024u32)), 10);
        assert_eq!(ceil_log2(&BigUint::from(1025u32)), 11);
        assert_eq!(ceil_log2(&BigUint::one()), 0);
        let big = BigUint::one() << 5000u32;
        assert_eq!(log2_big(&big), 5000.0);
        assert_eq!(ratio_f64(&big, &big), 1.0);
    }
}
