use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cmps(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmps"))
        .args(args)
        .arg("-o")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn cell(header: &[String], row: &[String], name: &str) -> Option<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    row[i].parse().ok()
}

#[test]
fn help_lists_every_subcommand() {
    let out = Command::new(env!("CARGO_BIN_EXE_cmps")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["ground-state", "spectrum", "delta-n", "bound-state", "bethe"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn invalid_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(dir.path(), &["ground-state", "-c", "-1", "--mu", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c must be positive"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"ll\"\nbond = 3\n").unwrap();
    let out = cmps(dir.path(), &["ground-state", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_cmps")).arg("nonsense").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_mode_ground_state_matches_mean_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(dir.path(), &["ground-state", "-c", "1.3", "--mu", "0.9", "-D", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let obs = json(&dir.path().join("observables_ll_D1.json"));
    assert_eq!(obs["converged"], true);
    let rho = obs["observables"]["rho"].as_f64().unwrap();
    let e = obs["observables"]["e"].as_f64().unwrap();
    assert!((rho - 0.9 / 2.6).abs() < 1e-8);
    assert!((e + 0.81 / 5.2).abs() < 1e-8);
    assert!(dir.path().join("state_ll_D1.json").exists());
}

#[test]
fn gamma_target_is_met_by_tuning_mu() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(dir.path(), &["ground-state", "-c", "1", "--gamma", "2", "-D", "4"]);
    assert!(out.status.success());
    let obs = json(&dir.path().join("observables_ll_D4.json"));
    let gamma = obs["observables"]["gamma"].as_f64().unwrap();
    assert!((gamma - 2.0).abs() / 2.0 < 1e-3, "γ = {gamma}");
}

#[test]
fn pairing_ground_state_breaks_the_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(dir.path(), &["ground-state", "--model", "pairing", "--mu", "1", "-u", "1", "-c", "9.88", "-D", "4"]);
    assert!(out.status.success());
    let obs = json(&dir.path().join("observables_pairing_D4.json"));
    let op = &obs["observables"]["order_param"];
    let norm = op[0].as_f64().unwrap().hypot(op[1].as_f64().unwrap());
    assert!(norm > 0.1, "order parameter {op}");
    assert!(obs["z2_partner_energy_difference"].as_f64().unwrap().abs() < 1e-10);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cmps"))
        .args(["ground-state", "-c", "1", "--mu", "1", "-D", "1"])
        .env("CMPS_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("observables_ll_D1.json").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"ll\"\nc = 1.0\nmu = 1.0\nD = 2\n").unwrap();
    let out = cmps(dir.path(), &["ground-state", "--config", cfg.to_str().unwrap(), "-D", "1"]);
    assert!(out.status.success());
    assert!(dir.path().join("observables_ll_D1.json").exists());
    assert!(!dir.path().join("observables_ll_D2.json").exists());
}

#[test]
fn bethe_table_vanishes_at_the_umklapp_points_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["bethe", "-c", "60", "--gamma", "60", "--p-count", "9"];
    assert!(cmps(dir.path(), &args).status.success());
    let csv = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let first = std::fs::read(&csv).unwrap();
    let (h, rows) = csv_rows(&csv);
    for r in &rows {
        let t = cell(&h, r, "p_over_rho").unwrap() / std::f64::consts::PI;
        if (t.abs() - 1.0).abs() < 1e-9 {
            assert!(cell(&h, r, "type1").unwrap().abs() < 1e-8);
            assert!(cell(&h, r, "type2").unwrap().abs() < 1e-8);
        }
        if t.abs() > 1.0 + 1e-9 {
            assert!(cell(&h, r, "type2").is_none());
        }
    }
    let side = json(&csv.with_extension("json"));
    assert_eq!(side["partial"], false);
    assert!((side["results"]["gamma"].as_f64().unwrap() - 60.0).abs() < 1e-6);

    assert!(cmps(dir.path(), &args).status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), first);

    // twice the quadrature nodes: same curves to 1e-8
    let fine = tempfile::tempdir().unwrap();
    let mut more = args.to_vec();
    more.extend(["--n-quad", "512"]);
    assert!(cmps(fine.path(), &more).status.success());
    let (_, rows2) = csv_rows(&fine.path().join(csv.file_name().unwrap()));
    for (a, b) in rows.iter().zip(&rows2) {
        for (x, y) in a.iter().zip(b) {
            if let (Ok(x), Ok(y)) = (x.parse::<f64>(), y.parse::<f64>()) {
                assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }
}

#[test]
fn minimal_spectrum_run_has_one_row_per_sector() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(
        dir.path(),
        &["spectrum", "-c", "1", "--mu", "1", "-D", "3", "--p-count", "1", "--p-min", "0", "--p-max", "0", "-k", "2"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for sector in ["trivial", "topological"] {
        let path = dir.path().join(format!("spectrum_ll_D3_{sector}.csv"));
        let (h, rows) = csv_rows(&path);
        assert_eq!(rows.len(), 1);
        assert_eq!(h[..4], ["p", "p_over_rho", "E_1", "E_2"].map(String::from));
        assert!(cell(&h, &rows[0], "E_1").unwrap() <= cell(&h, &rows[0], "E_2").unwrap());
        assert_eq!(json(&path.with_extension("json"))["partial"], false);
    }
}

#[test]
fn topological_lieb_liniger_scan_emits_composites() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(
        dir.path(),
        &["spectrum", "-c", "1", "--mu", "1", "-D", "4", "--sectors", "topological", "--p-count", "5", "-k", "1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = csv_rows(&dir.path().join("composites_ll_D4.csv"));
    assert_eq!(h, ["curve", "p", "p_over_rho", "variational", "bethe", "rel_err"].map(String::from));
    assert!(rows.iter().any(|r| r[0] == "type1") && rows.iter().any(|r| r[0] == "type2"));
}

#[test]
fn empty_gamma_list_gives_a_header_only_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cmps(dir.path(), &["delta-n", "-D", "4"]).status.success());
    let (h, rows) = csv_rows(&dir.path().join("delta_n_ll_D4.csv"));
    assert_eq!(h, ["gamma_target", "gamma", "mu", "energy", "delta_n"].map(String::from));
    assert!(rows.is_empty());
}

#[test]
fn single_bond_dimension_leaves_the_extrapolation_blank() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmps(
        dir.path(),
        &["bound-state", "--model", "pairing", "--mu", "1", "-u", "1", "-c", "9.88", "--D-list", "3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = csv_rows(&dir.path().join("bound_state_pairing.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(cell(&h, &rows[0], "D"), Some(3.0));
    assert!(cell(&h, &rows[0], "E_trivial_1").is_some());
    assert!(cell(&h, &rows[0], "E_trivial_1_extrap").is_none());
}
