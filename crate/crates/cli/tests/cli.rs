use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MARKET: &str = "[market]\nlambda_sq = 1\nT = 1\n";
const GRID: &str = "[grid]\nx_max = 20\nnx = 40\nnt = 32\n";

fn setup(body: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ini");
    std::fs::write(&path, body).unwrap();
    (dir, path)
}

fn blackrt(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blackrt"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Rows of a CSV as (header, records).
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn solve_r_vs_x(utility: &str) -> Vec<(f64, f64)> {
    let (dir, cfg) = setup(&format!("{MARKET}[utility]\n{utility}\n{GRID}"));
    let o = blackrt(&["solve"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("out/surface.csv"));
    let (xi, ri) = (column(&h, "x"), column(&h, "r"));
    rows.iter()
        .map(|r| (r[xi].parse().unwrap(), r[ri].parse().unwrap()))
        .collect()
}

#[test]
fn solve_linear_risk_tolerance() {
    for (x, r) in solve_r_vs_x("variant = exp_sum\natoms = 2:1") {
        assert!((r - 2.0 * x).abs() <= 1e-12 * (1.0 + x), "{x} {r}");
    }
    for (x, r) in solve_r_vs_x("variant = fixture\nname = log") {
        assert!((r - x).abs() <= 1e-12 * (1.0 + x), "{x} {r}");
    }
}

#[test]
fn solve_mix23_spot_value() {
    let x = 1f64.exp() + 2.25f64.exp();
    let (dir, cfg) = setup(&format!(
        "{MARKET}[utility]\nvariant = cm_measure\natoms = 2:1, 3:1\n{GRID}x_extra = {x}\n"
    ));
    let o = blackrt(&["solve", "--emit-h"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("out/surface.csv"));
    assert_eq!(h.join(","), "x,t,r,rx,rxx,rtilde,gamma,residual,provenance");
    let row = rows
        .iter()
        .find(|r| r[0].parse::<f64>().unwrap() == x && r[1].parse::<f64>().unwrap() == 0.5)
        .expect("probe row");
    let r: f64 = row[2].parse().unwrap();
    assert!((r - 33.89977).abs() / 33.89977 < 1e-6, "{r}");
    assert_eq!(row[8], "transform");

    let (hh, _) = read_csv(&dir.path().join("out/h_surface.csv"));
    assert_eq!(hh.join(","), "z,t,H,Hz,Hzz,Hzzz");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["evaluator"], "closed_form");
    assert_eq!(summary["provenance"], "transform");
}

#[test]
fn oracle_linear_matches_transform() {
    let (dir, cfg) = setup(&format!("{MARKET}[utility]\nvariant = exp_sum\natoms = 2:1\n{GRID}"));
    let o = blackrt(&["oracle", "--square"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let diff: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/oracle_diff.json")).unwrap()).unwrap();
    assert!(diff["fd_vs_transform"].as_f64().unwrap() < 1e-9, "{diff}");
    assert!(diff["sqrt_f_vs_black"].as_f64().unwrap() < 1e-9, "{diff}");
    let (h, rows) = read_csv(&dir.path().join("out/fd_surface.csv"));
    assert!(rows.iter().all(|r| r[column(&h, "provenance")] == "fd"));
    assert!(dir.path().join("out/fd_square.csv").exists());
}

#[test]
fn oracle_tabulated_skips_transform() {
    let (dir, cfg) = setup(&format!(
        "{MARKET}[utility]\nvariant = tabulated\nfile = sshape.csv\n[grid]\nx_max = 10\nnx = 100\nnt = 50\n"
    ));
    let mut table = String::from("x,R\n");
    for k in 0..=800 {
        let x = k as f64 * 0.05;
        table.push_str(&format!("{x},{}\n", x + 2.0 * (1.0 - (1.0 + x) * (-x).exp())));
    }
    std::fs::write(dir.path().join("sshape.csv"), table).unwrap();
    let o = blackrt(&["oracle"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let diff: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/oracle_diff.json")).unwrap()).unwrap();
    assert!(diff["fd_vs_transform"].is_null());
    assert!(diff["transform_skipped"].is_string());
    let (_, rows) = read_csv(&dir.path().join("out/fd_surface.csv"));
    assert_eq!(rows.len(), 101 * 51);

    // solve needs an inverse marginal
    let o = blackrt(&["solve"], &cfg);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn mix23_with_checks(ids: &str) -> (TempDir, PathBuf) {
    setup(&format!(
        "{MARKET}[utility]\nvariant = fixture\nname = mix23\n{GRID}[checks]\nids = {ids}\n"
    ))
}

#[test]
fn check_exit_status() {
    let (dir, cfg) = mix23_with_checks("cm_bounds");
    let o = blackrt(&["check"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("cm_bounds"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["verdict"], "pass");

    let (_dir, cfg) = mix23_with_checks("curvature:expect=concave");
    assert_eq!(blackrt(&["check"], &cfg).status.code(), Some(1));

    let (_dir, cfg) = mix23_with_checks("");
    let o = blackrt(&["check"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no checks selected"));
}

#[test]
fn config_errors_exit_two_with_line_numbers() {
    let (_dir, cfg) = mix23_with_checks("cm_bounds; warp_drive");
    let o = blackrt(&["check"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("line 12") && stderr(&o).contains("warp_drive"),
        "{}",
        stderr(&o)
    );

    let (_dir, cfg) = setup(&format!("{MARKET}[utility]\nvariant = fixture\nname = nope\n"));
    let o = blackrt(&["solve"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 6"), "{}", stderr(&o));

    let o = blackrt(&["solve"], Path::new("/nonexistent/run.ini"));
    assert_eq!(o.status.code(), Some(2));

    let (_dir, cfg) = mix23_with_checks("cm_bounds");
    let o = Command::new(env!("CARGO_BIN_EXE_blackrt"))
        .args(["check", "--config"])
        .arg(&cfg)
        .env("BLACKRT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_blackrt"))
        .arg("transmogrify")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn policy_csv_for_two_assets() {
    let (dir, cfg) = setup(&format!(
        "[market]\nsigma = 0.2, 0; 0.05, 0.3\nmu = 0.08, 0.06\nrate = 0.02\nT = 1\n\
         [utility]\nvariant = fixture\nname = log\n{GRID}"
    ));
    let o = blackrt(&["policy", "--nx", "50", "--nt", "40"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("out/policy.csv"));
    assert_eq!(h.join(","), "x,t,r,pi_1,pi_2,total");
    assert_eq!(rows.len(), 51 * 41);
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - v[0]).abs() <= 1e-12 * (1.0 + v[0]));
        assert!((v[3] + v[4] - v[5]).abs() <= 1e-12 * (1.0 + v[5].abs()));
    }
}

#[test]
fn out_flag_and_formats() {
    let (dir, cfg) = setup(&format!(
        "{MARKET}[utility]\nvariant = fixture\nname = log\n{GRID}[output]\nformats = json\n"
    ));
    let out = dir.path().join("elsewhere");
    let o = Command::new(env!("CARGO_BIN_EXE_blackrt"))
        .args(["solve", "--quad-order", "64", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.json").exists());
    assert!(!out.join("surface.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["evaluator"], "quadrature");
    assert_eq!(summary["quad_order"], 64);
}
