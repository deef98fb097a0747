use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dephasing"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn csv_body(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# dephasing "), "missing provenance in {}", path.display());
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn fig1_writes_four_curves_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(&["fig1"], None, a.path()).status.success());
    assert!(run(&["fig1"], None, b.path()).status.success());
    let mut names: Vec<String> =
        fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        [
            "fig1_cpf_chibar-0.2.csv",
            "fig1_cpf_chibar-1.0.csv",
            "fig1_rates_chibar-0.2.csv",
            "fig1_rates_chibar-1.0.csv"
        ]
    );
    for n in &names {
        assert_eq!(
            fs::read(a.path().join(n)).unwrap(),
            fs::read(b.path().join(n)).unwrap(),
            "{n} differs between runs"
        );
    }
    // strong coupling drives the rate negative, weak coupling does not
    let min_rate = |name: &str| {
        csv_body(&a.path().join(name))[1..].iter().map(|r| r[2].parse::<f64>().unwrap()).fold(f64::INFINITY, f64::min)
    };
    assert!(min_rate("fig1_rates_chibar-1.0.csv") < 0.0);
    assert!(min_rate("fig1_rates_chibar-0.2.csv") > 0.0);
}

#[test]
fn entangle_scan_table_has_threshold_only_from_three_qubits() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["entangle-scan", "--threads", "2"], Some(&shipped("scan.json")), out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_body(&out.path().join("entangle_scan.csv"));
    assert_eq!(rows[0], ["n", "chi_star_over_gamma", "lower_bound", "upper_bound"]);
    assert_eq!(rows[1][0], "2");
    assert!(rows[1][1].is_empty());
    let stars: Vec<f64> = rows[2..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(stars.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn shipped_configs_run_every_pipeline() {
    for config in ["bipartite.json", "ring.json", "qutrit.json"] {
        for cmd in ["evolve", "system", "rates", "cpf"] {
            let out = tempfile::tempdir().unwrap();
            let o = run(&[cmd], Some(&shipped(config)), out.path());
            assert!(o.status.success(), "{cmd} {config}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
}

#[test]
fn cpf_grid_covers_every_time_pair() {
    let out = tempfile::tempdir().unwrap();
    assert!(run(&["cpf"], Some(&shipped("ring.json")), out.path()).status.success());
    let rows = csv_body(&out.path().join("cpf.csv"));
    assert_eq!(rows[0], ["t", "tau", "y", "cpf"]);
    // 41 times x 5 delays x 2 intermediate outcomes
    assert_eq!(rows.len() - 1, 41 * 5 * 2);
    let tables: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("cpf_tables.json")).unwrap()).unwrap();
    assert_eq!(tables["data"].as_array().unwrap().len(), 41 * 5);
}

#[test]
fn rate_poles_are_flagged_not_clipped() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pole.json");
    // cos(2χt) vanishes at t = 1 for χ = π/4
    fs::write(
        &config,
        r#"{"model": {"ring": {"n": 3, "gamma": 1, "chi": 0.7853981633974483}},
            "times": {"t_start": 0, "t_end": 2, "steps": 5}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert!(run(&["rates"], Some(&config), &out).status.success());
    let rows = csv_body(&out.join("rates.csv"));
    let flagged: Vec<&str> = rows[1..].iter().filter(|r| r[3] == "true").map(|r| r[0].as_str()).collect();
    assert_eq!(flagged, ["1.0000000000000000e0"]);
    assert_eq!(rows[3][1], "nan");
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(
        &config,
        r#"{"model": {"subsystems": [[1, -1]], "gamma": [[-1]]}, "times": {"t_start": 0, "t_end": 1, "steps": 3}}"#,
    )
    .unwrap();
    let o = run(&["system"], Some(&config), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error at model"));

    let o = run(&["evolve"], None, dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["evolve"], Some(&dir.path().join("missing.json")), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_dense_output_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("big.json");
    fs::write(
        &config,
        r#"{"model": {"ring": {"n": 14, "gamma": 1, "chi": 0.5}}, "times": {"t_start": 0, "t_end": 1, "steps": 2}}"#,
    )
    .unwrap();
    let o = run(&["evolve"], Some(&config), dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_passes_on_shipped_config_and_fails_with_impossible_tolerance() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["verify"], Some(&shipped("verify.json")), out.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
    assert!(out.path().join("verify_report.json").exists());

    let o = run(&["verify", "--tolerance", "1e-12"], Some(&shipped("verify.json")), out.path());
    assert_eq!(o.status.code(), Some(4));
}
