//! Method-of-types machinery: compositions of `n`, exact class sizes and
//! class probabilities.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSpec, FieldVector, Residue};
use crate::simplex::{entropy_of, kl_divergence_of, Distribution};

/// Symbol counts of a length-n sequence. Ordered lexicographically on counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeComposition {
    counts: Vec<u32>,
}

impl TypeComposition {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidParameter("type over an empty alphabet".into()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    /// The empirical distribution `counts / n`.
    pub fn empirical(&self) -> Distribution {
        let n = self.n() as f64;
        let probs: Vec<f64> = self.counts.iter().map(|&c| c as f64 / n).collect();
        Distribution::from_weights(&probs).expect("non-empty type")
    }

    /// `H(P)` of the empirical distribution, in bits.
    pub fn entropy(&self) -> f64 {
        let n = self.n() as f64;
        let probs: Vec<f64> = self.counts.iter().map(|&c| c as f64 / n).collect();
        entropy_of(&probs)
    }

    /// `D(P || p)` of the empirical distribution against `p`.
    pub fn divergence_from(&self, p: &Distribution) -> f64 {
        let n = self.n() as f64;
        let probs: Vec<f64> = self.counts.iter().map(|&c| c as f64 / n).collect();
        kl_divergence_of(&probs, p.probs())
    }

    /// `|T^n(P)| = n! / Π counts[a]!`, exactly.
    pub fn class_size(&self) -> BigUint {
        let n = self.n();
        let mut num = factorial(n);
        for &c in &self.counts {
            num /= factorial(c);
        }
        num
    }

    pub fn class_size_u64(&self) -> Option<u64> {
        self.class_size().to_u64()
    }

    pub fn class_size_f64(&self) -> f64 {
        self.class_size().to_f64().unwrap_or(f64::INFINITY)
    }

    /// Probability of any single sequence of this type under `p^n`.
    pub fn sequence_prob(&self, p: &Distribution) -> f64 {
        assert_eq!(self.counts.len(), p.len(), "alphabet size mismatch");
        self.counts
            .iter()
            .zip(p.probs())
            .map(|(&c, &pa)| if c == 0 { 1.0 } else { pa.powi(c as i32) })
            .product()
    }

    /// `p^n(T^n(P))`: the exact class size times the per-sequence probability.
    pub fn class_prob(&self, p: &Distribution) -> f64 {
        let per_seq = self.sequence_prob(p);
        if per_seq == 0.0 {
            return 0.0;
        }
        self.class_size_f64() * per_seq
    }

    /// The members of `T^n(P)` in lexicographic symbol order.
    pub fn sequences(&self) -> ClassIter {
        let mut first = Vec::with_capacity(self.n() as usize);
        for (a, &c) in self.counts.iter().enumerate() {
            first.extend(std::iter::repeat_n(a as Residue, c as usize));
        }
        ClassIter { next: Some(first) }
    }
}

pub struct ClassIter {
    next: Option<Vec<Residue>>,
}

impl Iterator for ClassIter {
    type Item = FieldVector;

    fn next(&mut self) -> Option<FieldVector> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(FieldVector::from_raw(current))
    }
}

fn next_permutation(v: &mut [Residue]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn factorial(n: u32) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// The type (symbol counts) of a sequence.
pub fn type_of(x: &FieldVector, spec: FieldSpec) -> TypeComposition {
    let mut counts = vec![0u32; spec.q() as usize];
    for &s in x.as_slice() {
        counts[s as usize] += 1;
    }
    TypeComposition { counts }
}

/// All of `P_n(X)`, lexicographic in the count vector.
pub fn enumerate_types(n: u32, spec: FieldSpec) -> Vec<TypeComposition> {
    let q = spec.q() as usize;
    let mut out = Vec::new();
    let mut counts = vec![0u32; q];
    fill(&mut counts, 0, n, &mut out);
    out
}

fn fill(counts: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<TypeComposition>) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        out.push(TypeComposition {
            counts: counts.clone(),
        });
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill(counts, pos + 1, remaining - c, out);
    }
}

/// `|P_n(X)| = C(n + q - 1, q - 1)`.
pub fn type_count(n: u32, spec: FieldSpec) -> BigUint {
    let q = spec.q() as u32;
    let top = factorial(n + q - 1);
    top / (factorial(n) * factorial(q - 1))
}
