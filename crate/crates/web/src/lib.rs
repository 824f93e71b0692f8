//! Browser bindings. Every exported function takes plain strings and
//! numbers and returns a JSON document; errors surface as JS exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use srcenc_core::cipher::derive_seed;
use srcenc_core::code::error_prob_by_types;
use srcenc_core::exponents::{self, admissible_thresholds, exponent_e, exponent_f, ExponentRow, Method, Thresholds};
use srcenc_core::leakage::{error_bound, exact_mutual_info, security_bound, EXACT_JOINT_LIMIT};
use srcenc_core::{AffineEncoder, CipherSystem, Codebook, Distribution, FieldSpec, FieldVector, RatePlan};

type Outcome = Result<String, String>;

fn js(result: Outcome) -> Result<String, JsValue> {
    result.map_err(|e| JsValue::from_str(&e))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn json<T: Serialize>(value: &T) -> Outcome {
    serde_json::to_string(value).map_err(err)
}

fn law(text: &str) -> Result<Distribution, String> {
    Distribution::parse(text).map_err(|e| format!("{text:?}: {e}"))
}

#[derive(Serialize)]
struct Curves {
    h_x: f64,
    h_k: f64,
    thresholds: Thresholds,
    rows: Vec<ExponentRow>,
}

pub fn exponent_curves_json(px: &str, pk: &str, points: usize) -> Outcome {
    let p_x = law(px)?;
    let p_k = law(pk)?;
    if p_x.len() != p_k.len() {
        return Err("source and key laws need the same alphabet".into());
    }
    let top = (p_x.len() as f64).log2();
    let rates = exponents::rate_grid(top, points.clamp(2, 400));
    let rows = exponents::exponent_table(&p_x, &p_k, &rates, Method::Tilted, exponents::DEFAULT_TOL).map_err(err)?;
    json(&Curves {
        h_x: p_x.entropy(),
        h_k: p_k.entropy(),
        thresholds: admissible_thresholds(&p_x, &p_k),
        rows,
    })
}

/// `E(R|p_x)`, `F(R|p_k)` and positivity over `points` rates in `(0, log2 q]`.
#[wasm_bindgen]
pub fn exponent_curves(px: &str, pk: &str, points: usize) -> Result<String, JsValue> {
    js(exponent_curves_json(px, pk, points))
}

#[derive(Serialize)]
struct BoundRow {
    n: u32,
    m: usize,
    code_rate: f64,
    p_e_exact: f64,
    err_bound: f64,
    sec_bound: f64,
    mi_exact: Option<f64>,
}

/// Largest block length for which the page computes exact leakage.
const DEMO_EXACT_N: u32 = 8;

pub fn bounds_vs_n_json(px: &str, pk: &str, rate: f64, n_max: u32) -> Outcome {
    let p_x = law(px)?;
    let p_k = law(pk)?;
    let spec = FieldSpec::new(p_x.len() as u16).map_err(err)?;
    if p_k.len() != p_x.len() {
        return Err("source and key laws need the same alphabet".into());
    }
    let tol = exponents::DEFAULT_TOL;
    let e = exponent_e(rate, &p_x, Method::Tilted, tol).map_err(err)?.rounded_down();
    let f = exponent_f(rate, &p_k, Method::Tilted, tol).map_err(err)?.rounded_down();
    let mut rows = Vec::new();
    for n in 1..=n_max.min(200) {
        let plan = RatePlan::new(n, rate, spec).map_err(err)?;
        let exact_ok = n <= DEMO_EXACT_N
            && spec.space_size(2 * n as usize).is_some_and(|s| s <= EXACT_JOINT_LIMIT);
        let mi_exact = if exact_ok {
            let sys = CipherSystem::new(
                Codebook::build(&plan).map_err(err)?,
                AffineEncoder::for_plan(&plan, derive_seed(0, n as u64)),
            )
            .map_err(err)?;
            Some(exact_mutual_info(&sys, &p_x, &p_k).map_err(err)?.mi_exact)
        } else {
            None
        };
        rows.push(BoundRow {
            n,
            m: plan.m(),
            code_rate: plan.code_rate(),
            p_e_exact: error_prob_by_types(n, rate, &p_x, spec),
            err_bound: error_bound(n, spec, e),
            sec_bound: security_bound(&plan, f),
            mi_exact,
        });
    }
    json(&rows)
}

/// Exact error probability, leakage and both bounds for `n = 1..=n_max`.
#[wasm_bindgen]
pub fn bounds_vs_n(px: &str, pk: &str, rate: f64, n_max: u32) -> Result<String, JsValue> {
    js(bounds_vs_n_json(px, pk, rate, n_max))
}

#[derive(Serialize)]
struct Trace {
    n: u32,
    m: usize,
    q: u16,
    members: usize,
    in_codebook: bool,
    codeword: String,
    pad: String,
    ciphertext: String,
    decrypted: String,
    encoder: srcenc_core::cipher::EncoderExport,
}

pub fn encrypt_demo_json(plaintext: &str, key: &str, rate: f64, q: u16, seed: u64) -> Outcome {
    let spec = FieldSpec::new(q).map_err(err)?;
    let x = FieldVector::parse(plaintext, spec).map_err(err)?;
    let k = FieldVector::parse(key, spec).map_err(err)?;
    if x.len() != k.len() || x.is_empty() {
        return Err("plaintext and key must be non-empty and of equal length".into());
    }
    let plan = RatePlan::new(x.len() as u32, rate, spec).map_err(err)?;
    let sys = CipherSystem::new(
        Codebook::build(&plan).map_err(err)?,
        AffineEncoder::for_plan(&plan, seed),
    )
    .map_err(err)?;
    let c = sys.encrypt(&k, &x).map_err(err)?;
    json(&Trace {
        n: plan.n(),
        m: plan.m(),
        q,
        members: sys.codebook().len(),
        in_codebook: sys.codebook().contains(&x),
        codeword: sys.codebook().encode(&x).to_text(spec),
        pad: sys.encoder().apply(&k).map_err(err)?.to_text(spec),
        ciphertext: c.to_text(spec),
        decrypted: sys.decrypt(&k, &c).map_err(err)?.to_text(spec),
        encoder: sys.encoder().export(),
    })
}

/// Encrypt and decrypt one plaintext under one key, showing each stage.
#[wasm_bindgen]
pub fn encrypt_demo(plaintext: &str, key: &str, rate: f64, q: u16, seed: u64) -> Result<String, JsValue> {
    js(encrypt_demo_json(plaintext, key, rate, q, seed))
}
