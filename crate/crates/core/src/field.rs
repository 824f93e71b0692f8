//! Exact arithmetic over the prime field Z_q.
//!
//! Residues are stored as `u16` so that every modulus up to 257 fits. Words of
//! length `m` are serialized to integers in big-endian base-q positional form,
//! which is what the codebook uses to assign codewords.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Residue = u16;

/// A prime modulus `q` defining the alphabet `Z_q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct FieldSpec {
    q: u16,
}

impl FieldSpec {
    pub const MAX_Q: u16 = 257;

    pub fn new(q: u16) -> Result<Self> {
        if !(2..=Self::MAX_Q).contains(&q) || !is_prime(q) {
            return Err(Error::InvalidModulus(q as u32));
        }
        Ok(Self { q })
    }

    pub fn binary() -> Self {
        Self { q: 2 }
    }

    #[inline]
    pub fn q(&self) -> u16 {
        self.q
    }

    pub fn log2_q(&self) -> f64 {
        (self.q as f64).log2()
    }

    #[inline]
    pub fn add(&self, a: Residue, b: Residue) -> Residue {
        ((a as u32 + b as u32) % self.q as u32) as Residue
    }

    #[inline]
    pub fn sub(&self, a: Residue, b: Residue) -> Residue {
        ((a as u32 + self.q as u32 - b as u32) % self.q as u32) as Residue
    }

    #[inline]
    pub fn neg(&self, a: Residue) -> Residue {
        self.sub(0, a)
    }

    #[inline]
    pub fn mul(&self, a: Residue, b: Residue) -> Residue {
        ((a as u32 * b as u32) % self.q as u32) as Residue
    }

    pub fn check(&self, value: Residue) -> Result<Residue> {
        if value < self.q {
            Ok(value)
        } else {
            Err(Error::ResidueOutOfRange {
                value: value as u32,
                q: self.q,
            })
        }
    }

    /// `q^len` if it fits in a `u64`.
    pub fn space_size(&self, len: usize) -> Option<u64> {
        (self.q as u64).checked_pow(u32::try_from(len).ok()?)
    }

    /// `q^len` as a float; used where only magnitudes matter.
    pub fn space_size_f64(&self, len: usize) -> f64 {
        (self.q as f64).powi(len as i32)
    }

    /// Iterate every word of `X^len` in lexicographic (= index) order.
    pub fn words(&self, len: usize) -> Result<impl Iterator<Item = FieldVector> + '_> {
        let total = self.space_size(len).ok_or(Error::IndexOverflow { q: self.q, len })?;
        Ok((0..total).map(move |i| {
            index_decode(i, len, *self).expect("index within q^len")
        }))
    }
}

impl TryFrom<u16> for FieldSpec {
    type Error = Error;
    fn try_from(q: u16) -> Result<Self> {
        Self::new(q)
    }
}

impl From<FieldSpec> for u16 {
    fn from(spec: FieldSpec) -> u16 {
        spec.q
    }
}

fn is_prime(q: u16) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u16;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// A length-n sequence of residues. Ordering is lexicographic on the symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldVector(Vec<Residue>);

impl FieldVector {
    pub fn new(entries: Vec<Residue>, spec: FieldSpec) -> Result<Self> {
        for &e in &entries {
            spec.check(e)?;
        }
        Ok(Self(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// For entries already known to be in range.
    pub(crate) fn from_raw(entries: Vec<Residue>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Residue] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Residue> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, other: &FieldVector, spec: FieldSpec) -> Result<FieldVector> {
        self.zip_with(other, |a, b| spec.add(a, b))
    }

    pub fn sub(&self, other: &FieldVector, spec: FieldSpec) -> Result<FieldVector> {
        self.zip_with(other, |a, b| spec.sub(a, b))
    }

    fn zip_with(
        &self,
        other: &FieldVector,
        f: impl Fn(Residue, Residue) -> Residue,
    ) -> Result<FieldVector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(FieldVector(
            self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// Digit string for `q <= 10` ("0110"), comma-separated otherwise.
    pub fn to_text(&self, spec: FieldSpec) -> String {
        if spec.q() <= 10 {
            self.0.iter().map(|d| char::from(b'0' + *d as u8)).collect()
        } else {
            self.0
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
    }

    pub fn parse(text: &str, spec: FieldSpec) -> Result<Self> {
        let text = text.trim();
        let entries: Vec<Residue> = if spec.q() <= 10 && !text.contains(',') {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as Residue)
                        .ok_or_else(|| Error::Parse(format!("invalid digit {c:?} in {text:?}")))
                })
                .collect::<Result<_>>()?
        } else if text.is_empty() {
            Vec::new()
        } else {
            text.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<Residue>()
                        .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
                })
                .collect::<Result<_>>()?
        };
        Self::new(entries, spec)
    }
}

impl fmt::Display for FieldVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Row-major `rows x cols` matrix over Z_q.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Residue>,
}

impl FieldMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Residue>, spec: FieldSpec) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        for &e in &entries {
            spec.check(e)?;
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0; rows * cols],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.entries[i * size + i] = 1;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Residue {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Residue] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Residue] {
        &self.entries
    }

    /// Rank over Z_q by Gaussian elimination.
    pub fn rank(&self, spec: FieldSpec) -> usize {
        let mut a = self.entries.clone();
        let (rows, cols) = (self.rows, self.cols);
        let mut rank = 0;
        for col in 0..cols {
            let Some(pivot) = (rank..rows).find(|&r| a[r * cols + col] != 0) else {
                continue;
            };
            for c in 0..cols {
                a.swap(rank * cols + c, pivot * cols + c);
            }
            let inv = inverse(a[rank * cols + col], spec);
            for c in 0..cols {
                a[rank * cols + c] = spec.mul(a[rank * cols + c], inv);
            }
            for r in 0..rows {
                let factor = a[r * cols + col];
                if r != rank && factor != 0 {
                    for c in 0..cols {
                        let t = spec.mul(factor, a[rank * cols + c]);
                        a[r * cols + c] = spec.sub(a[r * cols + c], t);
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

fn inverse(a: Residue, spec: FieldSpec) -> Residue {
    // a^(q-2) by square-and-multiply
    let mut result: Residue = 1;
    let mut base = a;
    let mut e = spec.q() as u32 - 2;
    while e > 0 {
        if e & 1 == 1 {
            result = spec.mul(result, base);
        }
        base = spec.mul(base, base);
        e >>= 1;
    }
    result
}

/// `kA ⊕ b`: row vector times matrix, plus an offset, over Z_q.
pub fn vec_affine(
    k: &FieldVector,
    a: &FieldMatrix,
    b: &FieldVector,
    spec: FieldSpec,
) -> Result<FieldVector> {
    if k.len() != a.rows() || b.len() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "k has length {}, A is {}x{}, b has length {}",
            k.len(),
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let q = spec.q() as u32;
    let mut acc: Vec<u32> = b.as_slice().iter().map(|&x| x as u32).collect();
    for (i, &ki) in k.as_slice().iter().enumerate() {
        if ki == 0 {
            continue;
        }
        for (slot, &aij) in acc.iter_mut().zip(a.row(i)) {
            *slot = (*slot + ki as u32 * aij as u32) % q;
        }
    }
    Ok(FieldVector(acc.into_iter().map(|x| x as Residue).collect()))
}

/// Big-endian base-q value of a word.
pub fn index_encode(v: &FieldVector, spec: FieldSpec) -> Result<u64> {
    let q = spec.q() as u64;
    v.as_slice().iter().try_fold(0u64, |acc, &d| {
        acc.checked_mul(q)
            .and_then(|x| x.checked_add(d as u64))
            .ok_or(Error::IndexOverflow {
                q: spec.q(),
                len: v.len(),
            })
    })
}

/// Inverse of [`index_encode`] for words of length `len`.
pub fn index_decode(index: u64, len: usize, spec: FieldSpec) -> Result<FieldVector> {
    // q^len may exceed u64; in that case every u64 index is in range.
    let in_range = match (spec.q() as u128).checked_pow(len as u32) {
        Some(total) => (index as u128) < total,
        None => true,
    };
    if !in_range {
        return Err(Error::IndexOutOfRange {
            index,
            len,
            q: spec.q(),
        });
    }
    let q = spec.q() as u64;
    let mut digits = vec![0 as Residue; len];
    let mut rest = index;
    for slot in digits.iter_mut().rev() {
        *slot = (rest % q) as Residue;
        rest /= q;
    }
    Ok(FieldVector(digits))
}

/// Digit-wise addition of two word indices without materializing vectors.
pub fn index_add(a: u64, b: u64, len: usize, spec: FieldSpec) -> u64 {
    let q = spec.q() as u64;
    if q == 2 {
        return a ^ b;
    }
    let (mut a, mut b) = (a, b);
    let mut out = 0u64;
    let mut place = 1u64;
    for i in 0..len {
        let d = (a % q + b % q) % q;
        out += d * place;
        a /= q;
        b /= q;
        if i + 1 < len {
            place *= q;
        }
    }
    out
}

/// Digit-wise subtraction `a ⊖ b` of two word indices.
pub fn index_sub(a: u64, b: u64, len: usize, spec: FieldSpec) -> u64 {
    let q = spec.q() as u64;
    if q == 2 {
        return a ^ b;
    }
    let (mut a, mut b) = (a, b);
    let mut out = 0u64;
    let mut place = 1u64;
    for i in 0..len {
        let d = (a % q + q - b % q) % q;
        out += d * place;
        a /= q;
        b /= q;
        if i + 1 < len {
            place *= q;
        }
    }
    out
}
