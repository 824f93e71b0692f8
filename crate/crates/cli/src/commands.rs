use std::fmt::Write as _;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use srcenc_core::cipher::{derandomize_for_plan, derive_seed, EncoderExport};
use srcenc_core::code::{error_prob_by_types, CodebookExport, CODEBOOK_SPACE_LIMIT};
use srcenc_core::exponents::{exponent_e, exponent_f, format_real, ExponentResult, Method};
use srcenc_core::leakage::{
    check_birkhoff, converse_diagnostics, error_bound, exact_mutual_info, monte_carlo_mi,
    security_bound, strong_converse_probe, theorem1_security_check, BirkhoffReport, BoundCheck,
    ConverseDiagnostics, LeakageReport, Provenance, EXACT_JOINT_LIMIT,
};
use srcenc_core::{AffineEncoder, CipherSystem, Codebook, FieldSpec, RatePlan};

use crate::{
    field_for, parse_distribution, parse_list, ExactMiArgs, ProbeArgs, SearchArgs, SweepArgs,
    SystemArgs, VerifyArgs,
};

fn plan_for(system: &SystemArgs, spec: FieldSpec) -> Result<RatePlan> {
    Ok(match system.m {
        Some(m) => RatePlan::with_explicit_m(system.n, system.rate, m, spec)?,
        None => RatePlan::new(system.n, system.rate, spec)?,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct PlanSummary {
    n: u32,
    #[serde(rename = "R")]
    rate: f64,
    q: u16,
    gamma_n: f64,
    rate_padded: f64,
    m: usize,
    canonical: bool,
    code_rate: f64,
}

impl From<&RatePlan> for PlanSummary {
    fn from(p: &RatePlan) -> Self {
        Self {
            n: p.n(),
            rate: p.rate(),
            q: p.spec().q(),
            gamma_n: p.gamma_n(),
            rate_padded: p.rate_padded(),
            m: p.m(),
            canonical: p.is_canonical(),
            code_rate: p.code_rate(),
        }
    }
}

#[derive(Serialize)]
struct CodebookOutput {
    #[serde(flatten)]
    codebook: CodebookExport,
    canonical: bool,
}

pub fn codebook(system: &SystemArgs, members: bool) -> Result<String> {
    let spec = FieldSpec::new(system.q)?;
    let plan = plan_for(system, spec)?;
    let book = Codebook::build(&plan)?;
    to_json(&CodebookOutput {
        codebook: book.export(members),
        canonical: plan.is_canonical(),
    })
}

#[derive(Serialize)]
struct SearchOutput {
    encoder: EncoderExport,
    seed: u64,
    attempts: u64,
    score: f64,
    bound: f64,
    per_type: Vec<TypeBound>,
}

#[derive(Serialize)]
struct TypeBound {
    counts: Vec<u32>,
    divergence: f64,
    bound: f64,
}

pub fn search_encoder(a: &SearchArgs) -> Result<String> {
    let spec = FieldSpec::new(a.system.q)?;
    let plan = plan_for(&a.system, spec)?;
    let found = derandomize_for_plan(&plan, a.system.seed, a.max_attempts)?;
    let per_type = found
        .per_type_bounds()?
        .into_iter()
        .map(|(t, divergence, bound)| TypeBound {
            counts: t.counts().to_vec(),
            divergence,
            bound,
        })
        .collect();
    to_json(&SearchOutput {
        encoder: found.encoder.export(),
        seed: found.seed,
        attempts: found.attempts,
        score: found.score,
        bound: found.bound,
        per_type,
    })
}

#[derive(Serialize)]
struct ExactMiOutput {
    plan: PlanSummary,
    encoder: EncoderExport,
    certified: bool,
    provenance: Provenance,
    leakage: LeakageReport,
    row_sums: BirkhoffReport,
}

pub fn exact_mi(a: &ExactMiArgs) -> Result<String> {
    let p_x = parse_distribution(&a.source.px, "--px")?;
    let p_k = parse_distribution(&a.source.pk, "--pk")?;
    let spec = field_for(a.system.q, &[&p_x, &p_k])?;
    let plan = plan_for(&a.system, spec)?;
    let encoder = if a.certified {
        derandomize_for_plan(&plan, a.system.seed, a.max_attempts)?.encoder
    } else {
        AffineEncoder::for_plan(&plan, a.system.seed)
    };
    let sys = CipherSystem::new(Codebook::build(&plan)?, encoder)?;
    to_json(&ExactMiOutput {
        plan: (&plan).into(),
        encoder: sys.encoder().export(),
        certified: a.certified,
        provenance: Provenance::Exact,
        leakage: exact_mutual_info(&sys, &p_x, &p_k)?,
        row_sums: check_birkhoff(&sys, &p_k)?,
    })
}

#[derive(Serialize)]
struct SearchSummary {
    seed: u64,
    attempts: u64,
    score: f64,
    bound: f64,
}

#[derive(Serialize)]
struct ExponentSummary {
    #[serde(rename = "E")]
    e: ExponentResult,
    #[serde(rename = "F")]
    f: ExponentResult,
    e_rounded_down: f64,
    f_rounded_down: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    plan: PlanSummary,
    encoder: EncoderExport,
    search: SearchSummary,
    exponents: ExponentSummary,
    leakage: LeakageReport,
    row_sums: BirkhoffReport,
    converse: ConverseDiagnostics,
    checks: Vec<BoundCheck>,
    passed: bool,
}

/// Build, certify and check one system. Returns the JSON report and
/// whether every gating check passed.
pub fn verify(a: &VerifyArgs) -> Result<(String, bool)> {
    let p_x = parse_distribution(&a.source.px, "--px")?;
    let p_k = parse_distribution(&a.source.pk, "--pk")?;
    let spec = field_for(a.system.q, &[&p_x, &p_k])?;
    let plan = plan_for(&a.system, spec)?;
    let book = Codebook::build(&plan)?;
    let found = derandomize_for_plan(&plan, a.system.seed, a.max_attempts)?;
    let sys = CipherSystem::new(book, found.encoder.clone())?;

    let e = exponent_e(plan.rate(), &p_x, Method::Grid, a.tol)?;
    let f = exponent_f(plan.rate(), &p_k, Method::Grid, a.tol)?;
    let leakage = exact_mutual_info(&sys, &p_x, &p_k)?;
    let security = theorem1_security_check(&leakage, &plan, f.rounded_down(), true);
    let row_sums = check_birkhoff(&sys, &p_k)?;
    let converse = converse_diagnostics(&sys, &p_x, &p_k, a.gamma, a.delta_cap)?;

    let mut checks = Vec::new();
    if plan.is_canonical() {
        let (lo, hi) = plan.rate_window();
        let r = plan.code_rate();
        checks.push(BoundCheck::at_most("code_rate_le_padded_rate", r, hi, 0.0, Provenance::Exact));
        checks.push(BoundCheck::at_most("code_rate_ge_window_floor", lo, r, 0.0, Provenance::Exact));
    } else {
        checks.push(BoundCheck::skipped("code_rate_le_padded_rate", "explicit m"));
        checks.push(BoundCheck::skipped("code_rate_ge_window_floor", "explicit m"));
    }
    let p_e = sys.codebook().exact_error_prob(&p_x);
    checks.push(BoundCheck::at_most(
        "error_le_error_bound",
        p_e,
        error_bound(plan.n(), spec, e.rounded_down()),
        1e-12,
        Provenance::Bound,
    ));
    checks.push(BoundCheck::at_most(
        "channel_row_sum_le_one",
        row_sums.max_row_sum,
        1.0,
        1e-12,
        Provenance::Exact,
    ));
    checks.extend(security.checks);
    checks.extend(converse.checks.iter().cloned());
    let passed = checks.iter().all(BoundCheck::passed);

    let report = VerifyReport {
        plan: (&plan).into(),
        encoder: found.encoder.export(),
        search: SearchSummary {
            seed: found.seed,
            attempts: found.attempts,
            score: found.score,
            bound: found.bound,
        },
        exponents: ExponentSummary {
            e_rounded_down: e.rounded_down(),
            f_rounded_down: f.rounded_down(),
            e,
            f,
        },
        leakage,
        row_sums,
        converse,
        checks,
        passed,
    };
    Ok((to_json(&report)?, passed))
}

pub const SWEEP_CSV_HEADER: &str = "n,rate,p_e_exact,err_bound,mi_exact_or_estimate,sec_bound,flags";

pub fn sweep(a: &SweepArgs) -> Result<String> {
    let p_x = parse_distribution(&a.source.px, "--px")?;
    let p_k = parse_distribution(&a.source.pk, "--pk")?;
    let spec = field_for(a.q, &[&p_x, &p_k])?;
    let ns: Vec<u32> = parse_list(&a.n_list, "--n-list")?;
    if ns.is_empty() || ns.contains(&0) {
        bail!("--n-list needs positive block lengths");
    }
    let e = exponent_e(a.rate, &p_x, Method::Grid, a.tol)?.rounded_down();
    let f = exponent_f(a.rate, &p_k, Method::Grid, a.tol)?.rounded_down();

    let rows = ns
        .par_iter()
        .map(|&n| sweep_row(n, a, spec, &p_x, &p_k, e, f))
        .collect::<Result<Vec<String>>>()?;
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    Ok(out)
}

fn sweep_row(
    n: u32,
    a: &SweepArgs,
    spec: FieldSpec,
    p_x: &srcenc_core::Distribution,
    p_k: &srcenc_core::Distribution,
    e: f64,
    f: f64,
) -> Result<String> {
    let plan = RatePlan::new(n, a.rate, spec)?;
    let p_e = error_prob_by_types(n, a.rate, p_x, spec);
    let err_bound = error_bound(n, spec, e);
    let sec_bound = security_bound(&plan, f);

    let buildable = spec.space_size(n as usize).is_some_and(|s| s <= CODEBOOK_SPACE_LIMIT);
    let exact = spec.space_size(2 * n as usize).is_some_and(|s| s <= EXACT_JOINT_LIMIT);
    let (mi, mi_flag) = if !buildable {
        (String::new(), "mi=skipped".to_string())
    } else {
        let enc = AffineEncoder::for_plan(&plan, derive_seed(a.seed, n as u64));
        match Codebook::build(&plan) {
            Err(err) => (String::new(), format!("mi=skipped({err})")),
            Ok(book) => {
                let sys = CipherSystem::new(book, enc)?;
                if exact {
                    let v = exact_mutual_info(&sys, p_x, p_k)?.mi_exact;
                    (format_real(v), "mi=exact".to_string())
                } else {
                    let est = monte_carlo_mi(&sys, p_x, p_k, a.samples, derive_seed(a.seed, 1 << 32 | n as u64))?;
                    (
                        format_real(est.estimate),
                        format!("mi=estimate(se={})", format_real(est.std_error)),
                    )
                }
            }
        }
    };
    let mut row = String::new();
    write!(
        row,
        "{n},{},{},{},{mi},{},rate=exact;p_e=exact;err=bound;{mi_flag};sec=bound",
        format_real(plan.code_rate()),
        format_real(p_e),
        format_real(err_bound),
        format_real(sec_bound),
    )?;
    Ok(row)
}

pub fn converse_probe(a: &ProbeArgs) -> Result<String> {
    let p_x = parse_distribution(&a.px, "--px")?;
    let ns: Vec<u32> = parse_list(&a.n_list, "--n-list")?;
    let rows = strong_converse_probe(&p_x, a.rate, &ns)?;
    let mut out = String::from("n,log2_size,optimal_error\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.n, r.log2_size, format_real(r.optimal_error))?;
    }
    Ok(out)
}
