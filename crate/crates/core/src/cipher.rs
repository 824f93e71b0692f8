//! Affine key encoder `k -> kA ⊕ b`, the cipher built on top of the
//! universal code, the per-type image laws `Ω_P` and the encoder search.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code::{Codebook, RatePlan};
use crate::error::{Error, Result};
use crate::field::{index_encode, vec_affine, FieldMatrix, FieldSpec, FieldVector, Residue};
use crate::types::{enumerate_types, TypeComposition};

/// Largest `q^n` whose type classes are enumerated key by key.
pub const KEY_SPACE_LIMIT: u64 = 1 << 22;

/// Deterministic generator for every seeded draw in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent sub-seed for a named component.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineEncoder {
    matrix: FieldMatrix,
    offset: FieldVector,
    spec: FieldSpec,
    seed: Option<u64>,
}

impl AffineEncoder {
    pub fn new(matrix: FieldMatrix, offset: FieldVector, spec: FieldSpec) -> Result<Self> {
        if offset.len() != matrix.cols() {
            return Err(Error::DimensionMismatch(format!(
                "offset of length {} for a matrix with {} columns",
                offset.len(),
                matrix.cols()
            )));
        }
        Ok(Self {
            matrix,
            offset,
            spec,
            seed: None,
        })
    }

    /// Every entry of `A` (row-major) and then `b` drawn uniformly from Z_q.
    pub fn draw(n: usize, m: usize, spec: FieldSpec, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let q = spec.q();
        let mut sample = |len: usize| -> Vec<Residue> {
            (0..len).map(|_| rng.random_range(0..q)).collect()
        };
        let a = sample(n * m);
        let b = sample(m);
        Self {
            matrix: FieldMatrix::new(n, m, a, spec).expect("entries drawn in range"),
            offset: FieldVector::new(b, spec).expect("entries drawn in range"),
            spec,
            seed: Some(seed),
        }
    }

    pub fn for_plan(plan: &RatePlan, seed: u64) -> Self {
        Self::draw(plan.n() as usize, plan.m(), plan.spec(), seed)
    }

    pub fn matrix(&self) -> &FieldMatrix {
        &self.matrix
    }

    pub fn offset(&self) -> &FieldVector {
        &self.offset
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn m(&self) -> usize {
        self.matrix.cols()
    }

    pub fn apply(&self, k: &FieldVector) -> Result<FieldVector> {
        vec_affine(k, &self.matrix, &self.offset, self.spec)
    }

    pub fn export(&self) -> EncoderExport {
        EncoderExport {
            n: self.n(),
            m: self.m(),
            q: self.spec.q(),
            seed: self.seed,
            a: (0..self.n())
                .map(|i| FieldVector::from_raw(self.matrix.row(i).to_vec()).to_text(self.spec))
                .collect(),
            b: self.offset.to_text(self.spec),
        }
    }

    pub fn from_export(e: &EncoderExport) -> Result<Self> {
        let spec = FieldSpec::new(e.q)?;
        if e.a.len() != e.n {
            return Err(Error::DimensionMismatch(format!("{} rows for n = {}", e.a.len(), e.n)));
        }
        let mut entries = Vec::with_capacity(e.n * e.m);
        for row in &e.a {
            let v = FieldVector::parse(row, spec)?;
            if v.len() != e.m {
                return Err(Error::DimensionMismatch(format!("row of length {}", v.len())));
            }
            entries.extend_from_slice(v.as_slice());
        }
        let matrix = FieldMatrix::new(e.n, e.m, entries, spec)?;
        let mut enc = Self::new(matrix, FieldVector::parse(&e.b, spec)?, spec)?;
        enc.seed = e.seed;
        Ok(enc)
    }
}

/// JSON form `{n, m, q, seed, A, b}` with rows of `A` as digit strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderExport {
    pub n: usize,
    pub m: usize,
    pub q: u16,
    pub seed: Option<u64>,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    pub b: String,
}

/// Codebook plus key encoder: `encrypt(k, x) = (kA ⊕ b) ⊕ encode(x)`.
#[derive(Clone, Debug)]
pub struct CipherSystem {
    codebook: Codebook,
    encoder: AffineEncoder,
}

impl CipherSystem {
    pub fn new(codebook: Codebook, encoder: AffineEncoder) -> Result<Self> {
        let plan = codebook.plan();
        if encoder.n() != plan.n() as usize || encoder.m() != plan.m() {
            return Err(Error::DimensionMismatch(format!(
                "encoder is {}x{}, plan needs {}x{}",
                encoder.n(),
                encoder.m(),
                plan.n(),
                plan.m()
            )));
        }
        if encoder.spec() != codebook.spec() {
            return Err(Error::InvalidParameter("encoder and codebook use different fields".into()));
        }
        Ok(Self { codebook, encoder })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn encoder(&self) -> &AffineEncoder {
        &self.encoder
    }

    pub fn plan(&self) -> &RatePlan {
        self.codebook.plan()
    }

    pub fn spec(&self) -> FieldSpec {
        self.codebook.spec()
    }

    pub fn encrypt(&self, k: &FieldVector, x: &FieldVector) -> Result<FieldVector> {
        let pad = self.encoder.apply(k)?;
        pad.add(&self.codebook.encode(x), self.spec())
    }

    pub fn decrypt(&self, k: &FieldVector, c: &FieldVector) -> Result<FieldVector> {
        let pad = self.encoder.apply(k)?;
        Ok(self.codebook.decode(&c.sub(&pad, self.spec())?))
    }
}

/// `Ω_{P;φ}`: law of `φ(K)` for `K` uniform over one type class, kept as
/// exact integer counts over the class size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OmegaDist {
    counts: BTreeMap<u64, u64>,
    class_size: u64,
    m: usize,
    q: u16,
}

impl OmegaDist {
    /// Nonzero counts keyed by word index.
    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn class_size(&self) -> u64 {
        self.class_size
    }

    pub fn prob(&self, word_index: u64) -> f64 {
        self.counts.get(&word_index).copied().unwrap_or(0) as f64 / self.class_size as f64
    }

    /// `D(Ω || uniform on X^m) = m log q - H(Ω)`.
    pub fn divergence_from_uniform(&self) -> f64 {
        let log_space = self.m as f64 * (self.q as f64).log2();
        let total = self.class_size as f64;
        let h: f64 = self
            .counts
            .values()
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum();
        (log_space - h).max(0.0)
    }

    /// Dense probability vector over all of `X^m`.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let spec = FieldSpec::new(self.q)?;
        let size = spec
            .space_size(self.m)
            .filter(|&s| s <= 1 << 20)
            .ok_or_else(|| Error::ScaleGuard(format!("q^m = {}^{} too large", self.q, self.m)))?;
        let mut v = vec![0.0; size as usize];
        for (&w, &c) in &self.counts {
            v[w as usize] = c as f64 / self.class_size as f64;
        }
        Ok(v)
    }
}

fn check_key_space(n: usize, spec: FieldSpec) -> Result<()> {
    match spec.space_size(n) {
        Some(s) if s <= KEY_SPACE_LIMIT => Ok(()),
        _ => Err(Error::ScaleGuard(format!(
            "q^n = {}^{n} exceeds the key enumeration limit {KEY_SPACE_LIMIT}",
            spec.q()
        ))),
    }
}

fn check_word_space(m: usize, spec: FieldSpec) -> Result<()> {
    if spec.space_size(m).is_none() {
        return Err(Error::ScaleGuard(format!(
            "q^m = {}^{m} does not fit a 64-bit word index",
            spec.q()
        )));
    }
    Ok(())
}

pub fn omega_dist(class: &TypeComposition, enc: &AffineEncoder) -> Result<OmegaDist> {
    let spec = enc.spec();
    check_key_space(enc.n(), spec)?;
    check_word_space(enc.m(), spec)?;
    if class.n() as usize != enc.n() || class.alphabet_size() != spec.q() as usize {
        return Err(Error::DimensionMismatch("type does not match the encoder".into()));
    }
    let mut counts = BTreeMap::new();
    let mut size = 0u64;
    for k in class.sequences() {
        let w = index_encode(&enc.apply(&k)?, spec)?;
        *counts.entry(w).or_insert(0) += 1;
        size += 1;
    }
    Ok(OmegaDist {
        counts,
        class_size: size,
        m: enc.m(),
        q: spec.q(),
    })
}

/// `Θ_n(P) = log(1 + (q^m - 1) / |T^n(P)|)` in bits.
pub fn theta_n(class: &TypeComposition, m: usize, spec: FieldSpec) -> f64 {
    let words = spec.space_size_f64(m);
    (1.0 + (words - 1.0) / class.class_size_f64()).log2()
}

/// `Σ_P D(Ω_P || U) / Θ_n(P)` over all types of length `n`.
pub fn search_score(enc: &AffineEncoder) -> Result<f64> {
    let spec = enc.spec();
    let mut score = 0.0;
    for class in enumerate_types(enc.n() as u32, spec) {
        let omega = omega_dist(&class, enc)?;
        score += omega.divergence_from_uniform() / theta_n(&class, enc.m(), spec);
    }
    Ok(score)
}

/// An encoder certified by `search_score <= |P_n(X)|`.
#[derive(Clone, Debug)]
pub struct DerandomizedEncoder {
    pub encoder: AffineEncoder,
    pub seed: u64,
    pub score: f64,
    pub bound: f64,
    pub attempts: u64,
}

impl DerandomizedEncoder {
    /// `(type, D(Ω_P||U), |P_n| Θ_n(P))` for every type; the first never exceeds the second.
    pub fn per_type_bounds(&self) -> Result<Vec<(TypeComposition, f64, f64)>> {
        let spec = self.encoder.spec();
        enumerate_types(self.encoder.n() as u32, spec)
            .into_iter()
            .map(|class| {
                let d = omega_dist(&class, &self.encoder)?.divergence_from_uniform();
                let b = self.bound * theta_n(&class, self.encoder.m(), spec);
                Ok((class, d, b))
            })
            .collect()
    }
}

/// Relative slack on the score comparison; at `n = 1` the score equals the
/// bound exactly for injective encoders.
const SCORE_SLACK: f64 = 1e-9;

/// Scan seeds `base_seed, base_seed + 1, ...` for an encoder whose score is
/// at most `|P_n(X)|`.
pub fn derandomize(
    n: usize,
    m: usize,
    spec: FieldSpec,
    base_seed: u64,
    max_attempts: u64,
) -> Result<DerandomizedEncoder> {
    let bound = enumerate_types(n as u32, spec).len() as f64;
    let mut best = f64::INFINITY;
    for attempt in 0..max_attempts {
        let seed = base_seed.wrapping_add(attempt);
        let encoder = AffineEncoder::draw(n, m, spec, seed);
        let score = search_score(&encoder)?;
        if score <= bound * (1.0 + SCORE_SLACK) {
            return Ok(DerandomizedEncoder {
                encoder,
                seed,
                score,
                bound,
                attempts: attempt + 1,
            });
        }
        best = best.min(score);
    }
    Err(Error::SearchExhausted {
        attempts: max_attempts,
        best_score: best,
        bound,
    })
}

pub fn derandomize_for_plan(
    plan: &RatePlan,
    base_seed: u64,
    max_attempts: u64,
) -> Result<DerandomizedEncoder> {
    derandomize(plan.n() as usize, plan.m(), plan.spec(), base_seed, max_attempts)
}
