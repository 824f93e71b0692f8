//! The universal fixed-length source code.
//!
//! The codebook is the union of all type classes whose empirical entropy lies
//! strictly below the target rate `R`. Members are numbered type by type
//! (types in lexicographic count order, sequences within a class in
//! lexicographic symbol order), and the i-th member is sent to the word whose
//! base-q index is `i + 1`. Index 0, the all-zero word, is reserved for every
//! sequence outside the codebook.

use std::collections::HashMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{index_decode, index_encode, FieldSpec, FieldVector};
use crate::simplex::Distribution;
use crate::types::{enumerate_types, TypeComposition};

/// Largest `q^n` for which a codebook is materialized.
pub const CODEBOOK_SPACE_LIMIT: u64 = 1 << 22;

/// Rate bookkeeping for block length `n` and target rate `R`.
///
/// `gamma_n = (q log(n+1) + log q + 1) / n`, `R_n = R + gamma_n` and
/// `m = floor(n R_n / log q)`. An explicit `m` bypasses the last formula and
/// marks the plan non-canonical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    n: u32,
    rate: f64,
    gamma_n: f64,
    rate_padded: f64,
    m: usize,
    q: u16,
    canonical: bool,
}

impl RatePlan {
    pub fn new(n: u32, rate: f64, spec: FieldSpec) -> Result<Self> {
        Self::check_inputs(n, rate)?;
        let gamma_n = Self::slack(n, spec);
        let rate_padded = rate + gamma_n;
        let m = (n as f64 * rate_padded / spec.log2_q()).floor() as usize;
        Ok(Self {
            n,
            rate,
            gamma_n,
            rate_padded,
            m,
            q: spec.q(),
            canonical: true,
        })
    }

    /// A plan whose ciphertext length is fixed by the caller.
    pub fn with_explicit_m(n: u32, rate: f64, m: usize, spec: FieldSpec) -> Result<Self> {
        Self::check_inputs(n, rate)?;
        if m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        let mut plan = Self::new(n, rate, spec)?;
        plan.m = m;
        plan.canonical = plan.m == Self::new(n, rate, spec)?.m;
        Ok(plan)
    }

    fn check_inputs(n: u32, rate: f64) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidParameter("block length n must be >= 1".into()));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidRate(format!("R = {rate} must be positive")));
        }
        Ok(())
    }

    /// `gamma_n` in bits per symbol.
    pub fn slack(n: u32, spec: FieldSpec) -> f64 {
        let q = spec.q() as f64;
        (q * (n as f64 + 1.0).log2() + spec.log2_q() + 1.0) / n as f64
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn gamma_n(&self) -> f64 {
        self.gamma_n
    }

    pub fn rate_padded(&self) -> f64 {
        self.rate_padded
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spec(&self) -> FieldSpec {
        FieldSpec::new(self.q).expect("validated at construction")
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    /// `(1/n) log |X^m|`, the rate actually spent on the ciphertext.
    pub fn code_rate(&self) -> f64 {
        self.m as f64 * self.spec().log2_q() / self.n as f64
    }

    /// The window `[R_n - log q / n, R_n]` the code rate must lie in.
    pub fn rate_window(&self) -> (f64, f64) {
        (
            self.rate_padded - self.spec().log2_q() / self.n as f64,
            self.rate_padded,
        )
    }

    /// `(n+1)^q 2^{nR}`, the first cardinality bound on the codebook.
    pub fn size_bound(&self) -> f64 {
        let q = self.q as i32;
        (self.n as f64 + 1.0).powi(q) * (self.n as f64 * self.rate).exp2()
    }
}

/// Types whose empirical entropy is strictly below the rate.
pub fn member_types(n: u32, rate: f64, spec: FieldSpec) -> Vec<TypeComposition> {
    enumerate_types(n, spec)
        .into_iter()
        .filter(|t| t.entropy() < rate)
        .collect()
}

/// `|C^n(R)|` without materializing the members.
pub fn member_count(n: u32, rate: f64, spec: FieldSpec) -> BigUint {
    member_types(n, rate, spec)
        .iter()
        .map(TypeComposition::class_size)
        .sum()
}

/// `Pr[X ∉ C^n(R)]`: total mass of the types with `H(P) >= R`.
pub fn error_prob_by_types(n: u32, rate: f64, p: &Distribution, spec: FieldSpec) -> f64 {
    enumerate_types(n, spec)
        .iter()
        .filter(|t| t.entropy() >= rate)
        .map(|t| t.class_prob(p))
        .sum()
}

#[derive(Clone, Debug)]
pub struct Codebook {
    plan: RatePlan,
    types: Vec<TypeComposition>,
    members: Vec<FieldVector>,
    lookup: HashMap<FieldVector, u64>,
    reserved: FieldVector,
    default_decode: FieldVector,
}

impl Codebook {
    pub fn build(plan: &RatePlan) -> Result<Self> {
        let spec = plan.spec();
        let n = plan.n() as usize;
        match spec.space_size(n) {
            Some(size) if size <= CODEBOOK_SPACE_LIMIT => {}
            _ => {
                return Err(Error::ScaleGuard(format!(
                    "q^n = {}^{} exceeds the codebook limit {}",
                    spec.q(),
                    n,
                    CODEBOOK_SPACE_LIMIT
                )))
            }
        }
        let types = member_types(plan.n(), plan.rate(), spec);
        let members: Vec<FieldVector> = types.iter().flat_map(|t| t.sequences()).collect();

        let capacity = match spec.space_size(plan.m()) {
            Some(words) => words - 1,
            None => u64::MAX,
        };
        if members.len() as u64 > capacity {
            return Err(Error::CodebookOverflow {
                members: members.len() as u64,
                capacity,
            });
        }
        let lookup = members
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), i as u64))
            .collect();
        Ok(Self {
            plan: plan.clone(),
            types,
            members,
            lookup,
            reserved: FieldVector::zeros(plan.m()),
            // the all-zero sequence has an entropy-0 type, so it is always a member
            default_decode: FieldVector::zeros(n),
        })
    }

    pub fn plan(&self) -> &RatePlan {
        &self.plan
    }

    pub fn spec(&self) -> FieldSpec {
        self.plan.spec()
    }

    pub fn members(&self) -> &[FieldVector] {
        &self.members
    }

    pub fn member_types(&self) -> &[TypeComposition] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, x: &FieldVector) -> bool {
        self.lookup.contains_key(x)
    }

    pub fn reserved_word(&self) -> &FieldVector {
        &self.reserved
    }

    pub fn default_decode(&self) -> &FieldVector {
        &self.default_decode
    }

    /// Codeword of the i-th member.
    pub fn word_of(&self, member_index: u64) -> FieldVector {
        index_decode(member_index + 1, self.plan.m(), self.spec())
            .expect("member count checked against q^m - 1")
    }

    pub fn encode(&self, x: &FieldVector) -> FieldVector {
        match self.lookup.get(x) {
            Some(&i) => self.word_of(i),
            None => self.reserved.clone(),
        }
    }

    pub fn decode(&self, w: &FieldVector) -> FieldVector {
        if w.len() != self.plan.m() {
            return self.default_decode.clone();
        }
        match index_encode(w, self.spec()) {
            Ok(idx) if idx >= 1 && idx <= self.members.len() as u64 => {
                self.members[(idx - 1) as usize].clone()
            }
            _ => self.default_decode.clone(),
        }
    }

    /// Whether `decode(encode(x)) == x`.
    pub fn decodes_correctly(&self, x: &FieldVector) -> bool {
        self.decode(&self.encode(x)) == *x
    }

    /// Exact decoding error probability under the i.i.d. source `p`.
    pub fn exact_error_prob(&self, p: &Distribution) -> f64 {
        error_prob_by_types(self.plan.n(), self.plan.rate(), p, self.spec())
    }

    pub fn export(&self, include_members: bool) -> CodebookExport {
        let spec = self.spec();
        CodebookExport {
            n: self.plan.n(),
            rate: self.plan.rate(),
            q: spec.q(),
            gamma_n: self.plan.gamma_n(),
            m: self.plan.m(),
            member_count: self.members.len() as u64,
            default_decode: self.default_decode.to_text(spec),
            members: include_members
                .then(|| self.members.iter().map(|x| x.to_text(spec)).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookExport {
    pub n: u32,
    #[serde(rename = "R")]
    pub rate: f64,
    pub q: u16,
    pub gamma_n: f64,
    pub m: usize,
    pub member_count: u64,
    pub default_decode: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub members: Option<Vec<String>>,
}
