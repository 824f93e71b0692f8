use std::process::{Command, Output};

use serde_json::Value;

fn srcenc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srcenc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = srcenc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn h2(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

#[test]
fn exponents_csv_values() {
    let h = format!("{}", h2(0.9));
    let rates = format!("0.3,{h},0.8");
    let text = stdout(&["exponents", "--px", "0.9,0.1", "--pk", "0.5,0.5", "--rates", &rates]);
    assert!(text.starts_with("R,E,F,E_positive,F_positive\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows[0][2], "0.700000000");
    assert_eq!(rows[1][1], "0.000000000");
    assert_eq!(rows[1][3], "false");
    assert_eq!(rows[2][3..], ["true", "true"]);
}

#[test]
fn exponents_output_is_deterministic() {
    let args = ["exponents", "--px", "0.6,0.3,0.1", "--pk", "0.3,0.3,0.4", "--points", "15", "--method", "grid", "--tol", "0.001"];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn malformed_distribution_fails() {
    let out = srcenc(&["exponents", "--px", "0.9,x", "--pk", "0.5,0.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--px"));
    let out = srcenc(&["exponents", "--px", "0.9,0.2", "--pk", "0.5,0.5"]);
    assert!(!out.status.success());
}

#[test]
fn verify_smoke_passes() {
    let out = srcenc(&["verify", "--n", "4", "--rate", "0.9", "--px", "0.9,0.1", "--pk", "0.5,0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] == "pass"));
    for c in checks {
        assert!(["exact", "bound", "estimate"].contains(&c["provenance"].as_str().unwrap()));
    }
    assert!(report["converse"]["Q"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_with_explicit_m_skips_exponent_bounds() {
    let out = srcenc(&["verify", "--n", "4", "--rate", "0.9", "--m", "4", "--px", "0.9,0.1", "--pk", "0.5,0.5"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["plan"]["canonical"], false);
    let skipped: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "skipped")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(skipped.contains(&"mi_le_security_bound"));
    assert!(skipped.contains(&"code_rate_le_padded_rate"));
}

#[test]
fn verify_point_mass_key_row_sums() {
    let text = stdout(&["verify", "--n", "3", "--rate", "0.7", "--px", "0.8,0.2", "--pk", "1,0"]);
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["row_sums"]["max_row_sum"], 1.0);
    let row = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "channel_row_sum_le_one")
        .unwrap();
    assert_eq!(row["status"], "pass");
}

#[test]
fn sweep_rows_respect_bounds() {
    let args = ["sweep", "--n-list", "2,4,6,8,10", "--rate", "0.8", "--px", "0.9,0.1", "--pk", "0.6,0.4", "--seed", "3"];
    let text = stdout(&args);
    assert!(text.starts_with("n,rate,p_e_exact,err_bound,mi_exact_or_estimate,sec_bound,flags\n"));
    for row in csv_rows(&text) {
        let n: f64 = row[0].parse().unwrap();
        let rate: f64 = row[1].parse().unwrap();
        let p_e: f64 = row[2].parse().unwrap();
        let bound: f64 = row[3].parse().unwrap();
        assert!(p_e <= bound);
        let gamma = (2.0 * (n + 1.0).log2() + 2.0) / n;
        let padded = 0.8 + gamma;
        assert!(rate <= padded + 1e-9 && rate >= padded - 1.0 / n - 1e-9, "{row:?}");
        assert!(row[6].contains("mi=exact"));
    }
    assert_eq!(text, stdout(&args));
}

#[test]
fn sweep_error_bound_slope() {
    let text = stdout(&["sweep", "--n-list", "200,400", "--rate", "0.8", "--px", "0.9,0.1", "--pk", "0.5,0.5"]);
    let rows = csv_rows(&text);
    let b: Vec<f64> = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).collect();
    let slope = (b[1].log2() - b[0].log2()) / 200.0;
    let e = stdout(&["exponents", "--px", "0.9,0.1", "--pk", "0.5,0.5", "--rates", "0.8", "--method", "grid"]);
    let e: f64 = csv_rows(&e)[0][1].parse().unwrap();
    assert!((slope + e).abs() < 0.02, "slope {slope} vs E {e}");
    assert!(rows.iter().all(|r| r[6].contains("mi=skipped")));
}

#[test]
fn codebook_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("book.json");
    let p = path.to_str().unwrap();
    stdout(&["codebook", "--n", "2", "--rate", "0.5", "--members", "--out", p]);
    let book: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(book["member_count"], 2);
    assert_eq!(book["members"], serde_json::json!(["11", "00"]));
    assert_eq!(book["R"], 0.5);
    assert_eq!(book["canonical"], true);
}

#[test]
fn search_and_exact_mi_reports() {
    let found: Value = serde_json::from_str(&stdout(&["search-encoder", "--n", "4", "--rate", "0.6", "--seed", "11"])).unwrap();
    assert!(found["score"].as_f64().unwrap() <= found["bound"].as_f64().unwrap() * (1.0 + 1e-9));
    assert_eq!(found["encoder"]["A"].as_array().unwrap().len(), 4);
    for t in found["per_type"].as_array().unwrap() {
        assert!(t["divergence"].as_f64().unwrap() <= t["bound"].as_f64().unwrap() * (1.0 + 1e-9));
    }

    let args = ["exact-mi", "--n", "3", "--rate", "0.6", "--m", "2", "--px", "0.8,0.2", "--pk", "0.5,0.5", "--certified"];
    let report: Value = serde_json::from_str(&stdout(&args)).unwrap();
    assert_eq!(report["provenance"], "exact");
    let mi = report["leakage"]["mi_exact"].as_f64().unwrap();
    assert!(mi >= 0.0 && mi <= report["leakage"]["pad_divergence"].as_f64().unwrap() + 1e-10);

    let out = srcenc(&["exact-mi", "--n", "13", "--rate", "0.5", "--px", "0.5,0.5", "--pk", "0.5,0.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Monte-Carlo"));
}

#[test]
fn converse_probe_csv() {
    let text = stdout(&["converse-probe", "--px", "0.7,0.3", "--rate", "0.6"]);
    let errors: Vec<f64> = csv_rows(&text).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(errors.len(), 5);
    assert!(errors.windows(2).all(|w| w[1] >= w[0]));
    assert!(errors[4] > 0.5);
    assert!(!srcenc(&["converse-probe", "--px", "0.7,0.3", "--rate", "0.95"]).status.success());
}
