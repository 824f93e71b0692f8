//! The error exponent `E(R|p)`, the security exponent `F(R|p)`, the
//! positivity region and the admissible-rate thresholds.
//!
//! `E(R|p) = min { D(P||p) : H(P) >= R }` and
//! `F(R|p) = min_P { [H(P) - R]^+ + D(P||p) }`.
//!
//! Two solvers are provided. The tilted solver follows the family
//! `P_s ∝ p^s` and bisects on `s` until `H(P_s) = R`. The grid solver
//! evaluates the objective on every point of the simplex at a fixed step and
//! is only available for alphabets of at most three symbols.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{entropy_of, kl_divergence_of, Distribution};

/// Values at or below this are treated as zero when testing positivity.
pub const POSITIVITY_THRESHOLD: f64 = 1e-9;

/// Largest support handled by the grid solver.
pub const GRID_MAX_SUPPORT: usize = 3;

/// Default step of the grid solver and tolerance reported by both solvers.
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grid,
    Tilted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentResult {
    /// Exponent in bits; `f64::INFINITY` when the feasible set is empty.
    pub value: f64,
    pub argmin: Option<Distribution>,
    pub method: Method,
    pub tolerance: f64,
}

impl ExponentResult {
    fn infinite(method: Method, tolerance: f64) -> Self {
        Self {
            value: f64::INFINITY,
            argmin: None,
            method,
            tolerance,
        }
    }

    /// `value - tolerance`, floored at zero.
    pub fn rounded_down(&self) -> f64 {
        (self.value - self.tolerance).max(0.0)
    }

    pub fn is_positive(&self) -> bool {
        self.value > POSITIVITY_THRESHOLD
    }
}

/// Objective of `E` at `pp`: `D(pp||p)`, or `+inf` when `H(pp) < R`.
pub fn e_objective(rate: f64, pp: &[f64], p: &[f64]) -> f64 {
    if entropy_of(pp) < rate - 1e-12 {
        return f64::INFINITY;
    }
    kl_divergence_of(pp, p)
}

/// Objective of `F` at `pp`: `[H(pp) - R]^+ + D(pp||p)`.
pub fn f_objective(rate: f64, pp: &[f64], p: &[f64]) -> f64 {
    (entropy_of(pp) - rate).max(0.0) + kl_divergence_of(pp, p)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 0.5) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} outside (0, 0.5)")));
    }
    Ok(())
}

pub fn exponent_e(rate: f64, p: &Distribution, method: Method, tol: f64) -> Result<ExponentResult> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidRate(format!("R = {rate} must be positive")));
    }
    check_tol(tol)?;
    let support = Support::of(p);
    let result = match method {
        Method::Grid if support.len() <= GRID_MAX_SUPPORT => grid_e(rate, &support, tol),
        _ => tilted_e(rate, &support, tol),
    };
    Ok(result)
}

pub fn exponent_f(rate: f64, p: &Distribution, method: Method, tol: f64) -> Result<ExponentResult> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidRate(format!("R = {rate} must be non-negative")));
    }
    check_tol(tol)?;
    let support = Support::of(p);
    let result = match method {
        Method::Grid if support.len() <= GRID_MAX_SUPPORT => grid_f(rate, &support, tol),
        _ => tilted_f(rate, &support, tol),
    };
    Ok(result)
}

/// The positive-mass symbols of a distribution, with a map back to the
/// full alphabet.
struct Support {
    size: usize,
    index: Vec<usize>,
    probs: Vec<f64>,
    logs: Vec<f64>,
}

impl Support {
    fn of(p: &Distribution) -> Self {
        let index = p.support();
        let probs: Vec<f64> = index.iter().map(|&i| p.get(i)).collect();
        let logs = probs.iter().map(|x| x.log2()).collect();
        Self {
            size: p.len(),
            index,
            probs,
            logs,
        }
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    fn expand(&self, reduced: &[f64]) -> Distribution {
        let mut full = vec![0.0; self.size];
        for (&i, &v) in self.index.iter().zip(reduced) {
            full[i] = v;
        }
        Distribution::from_weights(&full).expect("reduced point is a distribution")
    }

    /// `P_s ∝ p^s` on the support, computed in the log domain.
    fn tilt(&self, s: f64) -> Vec<f64> {
        let top = self
            .logs
            .iter()
            .map(|l| s * l)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.logs.iter().map(|l| (s * l - top).exp2()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// Uniform law on the symbols of largest probability.
    fn argmax_uniform(&self) -> Vec<f64> {
        let pmax = self.probs.iter().cloned().fold(0.0, f64::max);
        let tops: Vec<bool> = self.probs.iter().map(|&x| x >= pmax * (1.0 - 1e-15)).collect();
        let k = tops.iter().filter(|&&t| t).count() as f64;
        tops.into_iter().map(|t| if t { 1.0 / k } else { 0.0 }).collect()
    }
}

/// Bisect `s` in `[lo, hi]` for `H(P_s) = rate`, with `H` decreasing in `s`.
fn bisect_tilt(support: &Support, rate: f64, mut lo: f64, mut hi: f64) -> Vec<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy_of(&support.tilt(mid)) >= rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    // the lower end keeps H(P_s) >= rate
    support.tilt(lo)
}

fn tilted_e(rate: f64, support: &Support, tol: f64) -> ExponentResult {
    let reduced = if rate <= support.entropy() {
        support.probs.clone()
    } else {
        let cap = (support.len() as f64).log2();
        if rate > cap + 1e-12 {
            return ExponentResult::infinite(Method::Tilted, tol);
        }
        if rate >= cap {
            support.tilt(0.0)
        } else {
            // H(P_0) = log|S| > rate > H(P_1)
            bisect_tilt(support, rate, 0.0, 1.0)
        }
    };
    let value = kl_divergence_of(&reduced, &support.probs);
    ExponentResult {
        value,
        argmin: Some(support.expand(&reduced)),
        method: Method::Tilted,
        tolerance: tol,
    }
}

fn tilted_f(rate: f64, support: &Support, tol: f64) -> ExponentResult {
    // [H - R]^+ + D = max(D, CE - R) with CE the cross entropy, so when
    // H(p) > R the minimum is that of the linear CE - R over {H >= R}.
    let reduced = if rate >= support.entropy() {
        support.probs.clone()
    } else {
        let face = support.argmax_uniform();
        if entropy_of(&face) >= rate {
            face
        } else {
            let mut hi = 2.0;
            while entropy_of(&support.tilt(hi)) >= rate {
                hi *= 2.0;
            }
            bisect_tilt(support, rate, 1.0, hi)
        }
    };
    let value = f_objective(rate, &reduced, &support.probs);
    ExponentResult {
        value,
        argmin: Some(support.expand(&reduced)),
        method: Method::Tilted,
        tolerance: tol,
    }
}

/// `t log2 t` for `t = i / steps`, `i = 0..=steps`.
fn tlogt_table(steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            if i == 0 {
                0.0
            } else {
                t * t.log2()
            }
        })
        .collect()
}

/// Minimum of `score(H, CE)` over every grid point of the reduced simplex;
/// `H` is the entropy and `CE` the cross entropy against `p`.
fn grid_min<S>(support: &Support, tol: f64, score: S) -> Option<(f64, Vec<f64>)>
where
    S: Fn(f64, f64) -> f64 + Sync,
{
    let steps = (1.0 / tol).round().max(1.0) as usize;
    let table = tlogt_table(steps);
    let inv = 1.0 / steps as f64;
    let l = &support.logs;
    let to_point = |counts: &[usize]| -> Vec<f64> { counts.iter().map(|&c| c as f64 * inv).collect() };
    let best = match support.len() {
        1 => Some((score(0.0, -l[0]), vec![steps])),
        2 => (0..=steps)
            .into_par_iter()
            .map(|i| {
                let j = steps - i;
                let h = -(table[i] + table[j]);
                let ce = -(i as f64 * l[0] + j as f64 * l[1]) * inv;
                (score(h, ce), i)
            })
            .filter(|(v, _)| v.is_finite())
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(v, i)| (v, vec![i, steps - i])),
        3 => (0..=steps)
            .into_par_iter()
            .filter_map(|i| {
                let mut best: Option<(f64, usize)> = None;
                let base = -(i as f64) * l[0] * inv;
                for j in 0..=steps - i {
                    let k = steps - i - j;
                    let h = -(table[i] + table[j] + table[k]);
                    let ce = base - (j as f64 * l[1] + k as f64 * l[2]) * inv;
                    let v = score(h, ce);
                    if v.is_finite() && best.is_none_or(|(b, _)| v < b) {
                        best = Some((v, j));
                    }
                }
                best.map(|(v, j)| (v, vec![i, j, steps - i - j]))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0)),
        _ => None,
    };
    best.map(|(v, counts)| (v, to_point(&counts)))
}

fn grid_e(rate: f64, support: &Support, tol: f64) -> ExponentResult {
    // D = CE - H
    let found = grid_min(support, tol, |h, ce| {
        if h >= rate {
            (ce - h).max(0.0)
        } else {
            f64::INFINITY
        }
    });
    match found {
        Some((value, point)) => ExponentResult {
            value,
            argmin: Some(support.expand(&point)),
            method: Method::Grid,
            tolerance: tol,
        },
        None => ExponentResult::infinite(Method::Grid, tol),
    }
}

fn grid_f(rate: f64, support: &Support, tol: f64) -> ExponentResult {
    let (value, point) = grid_min(support, tol, |h, ce| (ce - h).max(0.0) + (h - rate).max(0.0))
        .expect("the objective is finite on the reduced simplex");
    ExponentResult {
        value,
        argmin: Some(support.expand(&point)),
        method: Method::Grid,
        tolerance: tol,
    }
}

/// One row of the exponent table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    #[serde(rename = "R")]
    pub rate: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "E_positive")]
    pub e_positive: bool,
    #[serde(rename = "F_positive")]
    pub f_positive: bool,
}

/// `E(R|p_x)` and `F(R|p_k)` with their positivity flags at each rate.
pub fn positivity_region(
    p_x: &Distribution,
    p_k: &Distribution,
    rates: &[f64],
) -> Result<Vec<ExponentRow>> {
    exponent_table(p_x, p_k, rates, Method::Tilted, DEFAULT_TOL)
}

pub fn exponent_table(
    p_x: &Distribution,
    p_k: &Distribution,
    rates: &[f64],
    method: Method,
    tol: f64,
) -> Result<Vec<ExponentRow>> {
    rates
        .par_iter()
        .map(|&rate| {
            let e = exponent_e(rate, p_x, method, tol)?;
            let f = exponent_f(rate, p_k, method, tol)?;
            Ok(ExponentRow {
                rate,
                e: e.value,
                f: f.value,
                e_positive: e.is_positive(),
                f_positive: f.is_positive(),
            })
        })
        .collect()
}

/// `count` evenly spaced rates ending at `top`: `top / count, ..., top`.
pub fn rate_grid(top: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| top * i as f64 / count as f64).collect()
}

pub const EXPONENT_CSV_HEADER: &str = "R,E,F,E_positive,F_positive";

pub fn format_real(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:.9e}")
    } else {
        format!("{v:.9}")
    }
}

pub fn exponent_csv(rows: &[ExponentRow]) -> String {
    let mut out = String::from(EXPONENT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_real(r.rate),
            format_real(r.e),
            format_real(r.f),
            r.e_positive,
            r.f_positive
        );
    }
    out
}

/// Entropies closer than this count as equal in threshold comparisons.
const ENTROPY_TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub h_x: f64,
    pub h_k: f64,
    /// `H(X)` if `H(X) < H(K)`, else `+inf`.
    pub r_star: f64,
    /// `H(X)` if `H(X) <= H(K)`, else `+inf`.
    pub r_star_converse: f64,
    /// Infimum of admissible rates when `H(X) < H(K)`.
    pub theorem3_value: Option<f64>,
}

pub fn admissible_thresholds(p_x: &Distribution, p_k: &Distribution) -> Thresholds {
    let h_x = p_x.entropy();
    let h_k = p_k.entropy();
    let tie = (h_x - h_k).abs() <= ENTROPY_TIE;
    let strict = h_x < h_k && !tie;
    Thresholds {
        h_x,
        h_k,
        r_star: if strict { h_x } else { f64::INFINITY },
        r_star_converse: if strict || tie { h_x } else { f64::INFINITY },
        theorem3_value: strict.then_some(h_x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(p: &[f64]) -> Distribution {
        Distribution::new(p.to_vec()).unwrap()
    }

    /// Independent oracle for binary alphabets: scan t in [0,1] finely.
    fn scan_binary<F: Fn(&[f64]) -> f64>(obj: F, steps: usize) -> f64 {
        (0..=steps)
            .map(|i| {
                let t = i as f64 / steps as f64;
                obj(&[t, 1.0 - t])
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn e_is_zero_below_entropy() {
        let p = d(&[0.9, 0.1]);
        let h = p.entropy();
        for rate in [0.1, 0.3, h] {
            for method in [Method::Grid, Method::Tilted] {
                let r = exponent_e(rate, &p, method, DEFAULT_TOL).unwrap();
                assert!(r.value <= 1e-9, "{rate} {method:?} {}", r.value);
            }
        }
        let u = Distribution::uniform(3);
        assert!(exponent_e(1.5, &u, Method::Tilted, DEFAULT_TOL).unwrap().value < 1e-12);
    }

    #[test]
    fn e_example_against_grid() {
        let p = d(&[0.9, 0.1]);
        let grid = exponent_e(0.8, &p, Method::Grid, 1e-4).unwrap();
        let tilted = exponent_e(0.8, &p, Method::Tilted, 1e-4).unwrap();
        assert!((grid.value - tilted.value).abs() < 1e-3);
        // H(P) = 0.8 at P = (0.7569..., ...); check against a direct scan
        let scan = scan_binary(|pp| e_objective(0.8, pp, p.probs()), 400_000);
        assert!((scan - tilted.value).abs() < 1e-4, "{scan} vs {}", tilted.value);
        assert_eq!(grid.method, Method::Grid);
    }

    #[test]
    fn e_is_infinite_past_log_support() {
        let p = d(&[0.9, 0.1]);
        for method in [Method::Grid, Method::Tilted] {
            assert_eq!(exponent_e(1.2, &p, method, DEFAULT_TOL).unwrap().value, f64::INFINITY);
        }
        // a symbol of zero mass shrinks the reachable entropy
        let p = d(&[0.5, 0.5, 0.0]);
        let r = exponent_e(1.2, &p, Method::Tilted, DEFAULT_TOL).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert!(r.argmin.is_none());
        assert!(exponent_e(0.0, &p, Method::Tilted, DEFAULT_TOL).is_err());
    }

    #[test]
    fn f_examples() {
        for q in [2usize, 3, 5] {
            let u = Distribution::uniform(q);
            let log_q = (q as f64).log2();
            for i in 0..10 {
                let rate = log_q * i as f64 / 10.0;
                let r = exponent_f(rate, &u, Method::Tilted, DEFAULT_TOL).unwrap();
                assert!((r.value - (log_q - rate)).abs() < 1e-9, "q={q} R={rate}");
            }
        }
        let point = Distribution::point_mass(3, 1);
        assert_eq!(exponent_f(0.5, &point, Method::Tilted, DEFAULT_TOL).unwrap().value, 0.0);
        assert_eq!(exponent_f(0.5, &point, Method::Grid, DEFAULT_TOL).unwrap().value, 0.0);
    }

    #[test]
    fn f_example_against_scan() {
        let p = d(&[0.9, 0.1]);
        let tilted = exponent_f(0.3, &p, Method::Tilted, 1e-4).unwrap();
        let grid = exponent_f(0.3, &p, Method::Grid, 1e-4).unwrap();
        let scan = scan_binary(|pp| f_objective(0.3, pp, p.probs()), 400_000);
        assert!((scan - tilted.value).abs() < 1e-5, "{scan} vs {}", tilted.value);
        assert!((grid.value - tilted.value).abs() < 1e-3);
    }

    #[test]
    fn argmin_reproduces_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = Distribution::random(3, &mut rng);
            for rate in [0.2, 0.9, 1.4] {
                for method in [Method::Grid, Method::Tilted] {
                    let e = exponent_e(rate, &p, method, 1e-3).unwrap();
                    if let Some(a) = &e.argmin {
                        let v = e_objective(rate, a.probs(), p.probs());
                        assert!((v - e.value).abs() <= e.tolerance);
                    }
                    let f = exponent_f(rate, &p, method, 1e-3).unwrap();
                    let a = f.argmin.as_ref().unwrap();
                    assert!((f_objective(rate, a.probs(), p.probs()) - f.value).abs() <= f.tolerance);
                }
            }
        }
    }

    #[test]
    fn grid_falls_back_for_large_alphabets() {
        let p = Distribution::uniform(5);
        let r = exponent_f(1.0, &p, Method::Grid, DEFAULT_TOL).unwrap();
        assert_eq!(r.method, Method::Tilted);
        // zero-mass symbols are dropped, leaving a grid-sized support
        let p = d(&[0.5, 0.0, 0.3, 0.0, 0.2]);
        let r = exponent_f(1.0, &p, Method::Grid, 1e-3).unwrap();
        assert_eq!(r.method, Method::Grid);
        assert_eq!(r.argmin.unwrap().get(1), 0.0);
    }

    #[test]
    fn monotone_in_rate() {
        let p = d(&[0.6, 0.3, 0.1]);
        let rates = rate_grid(3f64.log2(), 60);
        let rows = exponent_table(&p, &p, &rates, Method::Tilted, DEFAULT_TOL).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].e >= w[0].e - 1e-12);
            assert!(w[1].f <= w[0].f + 1e-12);
        }
    }

    #[test]
    fn positivity_region_example() {
        let p_x = d(&[0.9, 0.1]);
        let p_k = Distribution::uniform(2);
        let h_x = p_x.entropy();
        let rows = positivity_region(&p_x, &p_k, &rate_grid(1.0, 200)).unwrap();
        for r in &rows {
            assert_eq!(r.e_positive && r.f_positive, h_x < r.rate && r.rate < 1.0, "{r:?}");
        }
        let same = positivity_region(&p_x, &p_x, &rate_grid(1.0, 200)).unwrap();
        assert!(same.iter().all(|r| !(r.e_positive && r.f_positive)));
        let flat = positivity_region(&p_k, &p_k, &rate_grid(1.0, 50)).unwrap();
        assert!(flat.iter().all(|r| !r.e_positive));
    }

    #[test]
    fn threshold_examples() {
        let t = admissible_thresholds(&d(&[0.9, 0.1]), &Distribution::uniform(2));
        assert!((t.r_star - 0.468996).abs() < 1e-6);
        assert_eq!(t.r_star, t.r_star_converse);
        assert_eq!(t.theorem3_value, Some(t.r_star));

        let t = admissible_thresholds(&Distribution::uniform(2), &d(&[0.9, 0.1]));
        assert_eq!(t.r_star, f64::INFINITY);
        assert_eq!(t.r_star_converse, f64::INFINITY);
        assert_eq!(t.theorem3_value, None);

        let p = d(&[0.8, 0.2]);
        let t = admissible_thresholds(&p, &d(&[0.2, 0.8]));
        assert_eq!(t.r_star, f64::INFINITY);
        assert!((t.r_star_converse - p.entropy()).abs() < 1e-15);
    }

    #[test]
    fn csv_is_stable() {
        let rows = positivity_region(&d(&[0.9, 0.1]), &Distribution::uniform(2), &[0.3, 0.5]).unwrap();
        let csv = exponent_csv(&rows);
        assert!(csv.starts_with("R,E,F,E_positive,F_positive\n0.300000000,0.000000000,0.700000000,false,true\n"));
        assert_eq!(csv, exponent_csv(&rows));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn feasible_point_upper_bounds(
            w in prop::collection::vec(0.01f64..1.0, 2..5),
            frac in 0.0f64..1.0,
        ) {
            let p = Distribution::from_weights(&w).unwrap();
            let log_q = (p.len() as f64).log2();
            let rate = frac * log_q;
            let f = exponent_f(rate, &p, Method::Tilted, DEFAULT_TOL).unwrap().value;
            let u = Distribution::uniform(p.len());
            let via_uniform = kl_divergence_of(u.probs(), p.probs()) + (log_q - rate).max(0.0);
            prop_assert!(f <= via_uniform + 1e-9);
            prop_assert!(f <= (p.entropy() - rate).max(0.0) + 1e-9);
            prop_assert!(f >= 0.0);
        }

        #[test]
        fn e_dominates_nearby_feasible_points(
            w in prop::collection::vec(0.01f64..1.0, 3),
            frac in 0.05f64..0.95,
            v in prop::collection::vec(0.01f64..1.0, 3),
        ) {
            let p = Distribution::from_weights(&w).unwrap();
            let rate = frac * 3f64.log2();
            let e = exponent_e(rate, &p, Method::Tilted, DEFAULT_TOL).unwrap().value;
            let other = Distribution::from_weights(&v).unwrap();
            if other.entropy() >= rate {
                prop_assert!(kl_divergence_of(other.probs(), p.probs()) >= e - 1e-9);
            }
        }
    }
}
