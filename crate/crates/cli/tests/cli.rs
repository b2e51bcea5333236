use std::path::Path;
use std::process::{Command, Output};

fn esc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esc")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Header and data rows of a table, ignoring comments.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().expect("header row").split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn equilibrium_map_peaks_near_a_quarter() {
    let text = stdout(&esc(&["--plant", "reactor", "equilibrium", "--u-range", "0.02:1.2:400"]));
    assert!(text.starts_with("# esc "));
    let (header, rows) = table(&text);
    assert_eq!(header, ["u", "J"]);
    assert_eq!(rows.len(), 400);
    let (u, j) = (col(&rows, 0), col(&rows, 1));
    let best = (0..u.len()).max_by(|&a, &b| j[a].total_cmp(&j[b])).unwrap();
    assert!((u[best] - 0.25).abs() < 0.01, "{}", u[best]);
}

#[test]
fn linear_plant_map_is_a_line() {
    let (_, rows) = table(&stdout(&esc(&["--plant", "linear", "equilibrium", "--u-range", "0:2:5"])));
    let (u, j) = (col(&rows, 0), col(&rows, 1));
    let slope = (j[4] - j[0]) / (u[4] - u[0]);
    for (a, b) in u.iter().zip(&j) {
        assert!((b - j[0] - slope * (a - u[0])).abs() < 1e-12);
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(esc(&["equilibrium"]).status.code(), Some(1));
    assert_eq!(esc(&["--plant", "boiler", "equilibrium"]).status.code(), Some(1));
    assert_eq!(esc(&["--plant", "reactor", "--param", "nope=1", "equilibrium"]).status.code(), Some(1));
    assert_eq!(esc(&["--plant", "reactor", "equilibrium", "--u-range", "1:0:3"]).status.code(), Some(1));
    assert_eq!(esc(&["--help"]).status.code(), Some(0));
}

#[test]
fn reactor_has_five_stationary_points() {
    let (header, rows) = table(&stdout(&esc(&["--plant", "reactor", "stationary"])));
    assert_eq!(header, ["u", "omega", "C", "dCdu", "stability"]);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().filter(|r| r[4] == "stable").count(), 3);
    assert_eq!(rows.iter().filter(|r| r[4] == "unstable").count(), 2);
}

#[test]
fn floquet_labels_replace_reduced_ones() {
    let text = stdout(&esc(&["--plant", "reactor", "stationary", "--floquet"]));
    let (_, rows) = table(&text);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().filter(|r| r[4] == "stable").count(), 3);
}

#[test]
fn control_plants() {
    let (_, rows) = table(&stdout(&esc(&["--plant", "hammerstein", "stationary"])));
    assert_eq!(rows.len(), 1);
    assert!((rows[0][0].parse::<f64>().unwrap() - 1.0).abs() <= 1e-3);
    assert_eq!(rows[0][4], "stable");
    let (_, rows) = table(&stdout(&esc(&["--plant", "linear", "stationary"])));
    assert!(rows.is_empty());
}

#[test]
fn branch_reports_the_near_optimal_fold() {
    let (header, rows) = table(&stdout(&esc(&["--plant", "reactor", "branch", "--omega-range", "0.3:0.8"])));
    assert_eq!(header, ["branch_id", "omega", "u", "J", "stability", "is_fold"]);
    let folds: Vec<&Vec<String>> = rows.iter().filter(|r| r[5] == "1").collect();
    assert_eq!(folds.len(), 1);
    assert_eq!(folds[0][4], "fold");
    assert!((folds[0][1].parse::<f64>().unwrap() - 0.614).abs() <= 0.03);
}

#[test]
fn linear_branch_is_empty() {
    let (_, rows) = table(&stdout(&esc(&["--plant", "linear", "branch"])));
    assert!(rows.is_empty());
}

fn orbit_line(text: &str) -> &str {
    text.lines().find_map(|l| l.strip_prefix("# orbit: ")).expect("orbit comment")
}

fn json_number(json: &str, key: &str) -> f64 {
    let rest = &json[json.find(&format!("\"{key}\":")).unwrap() + key.len() + 3..];
    rest[..rest.find([',', '}']).unwrap()].parse().unwrap()
}

#[test]
fn simulation_settles_onto_a_stationary_solution() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("orbit.json");
    let text = stdout(&esc(&[
        "--plant", "reactor", "simulate", "--u0", "0.25", "--periods", "20", "--shoot",
        "--summary", summary.to_str().unwrap(),
    ]));
    let orbit = orbit_line(&text);
    let c = json_number(orbit, "condition_abs");
    let scale = json_number(orbit, "condition_scale");
    assert!(c <= 1e-4 * scale, "{c} vs {scale}");
    assert!(orbit.contains("\"verdict\":\"stable\""));
    let (header, rows) = table(&text);
    assert_eq!(header, ["t", "u", "y", "xi", "eta", "u_hat"]);
    assert_eq!(rows.len(), 20 * 128 + 1);
    assert!(std::fs::read_to_string(&summary).unwrap().contains("\"mean_input\""));

    let other = stdout(&esc(&["--plant", "reactor", "simulate", "--u0", "0.06", "--periods", "20", "--shoot"]));
    let (a, b) = (json_number(orbit, "mean_input"), json_number(orbit_line(&other), "mean_input"));
    assert!((a - b).abs() > 0.1, "{a} vs {b}");
}

#[test]
fn open_loop_without_forcing_stays_put() {
    let text = stdout(&esc(&[
        "--plant", "reactor", "--gain", "0", "--amplitude", "0", "simulate", "--u0", "0.3", "--periods", "2",
    ]));
    let (_, rows) = table(&text);
    let (u_hat, y) = (col(&rows, 5), col(&rows, 2));
    assert!(u_hat.iter().all(|&u| u == 0.3));
    assert!(y.iter().all(|v| (v - y[0]).abs() < 1e-9));
}

#[test]
fn zero_scans() {
    let text = stdout(&esc(&["--plant", "reactor", "zeros"]));
    assert_eq!(text.matches("# crossing zero changes sign in").count(), 1);
    assert_eq!(text.matches("# G(0) changes sign in").count(), 1);
    let text = stdout(&esc(&["--plant", "linear", "zeros"]));
    assert!(!text.contains("changes sign"));
    let text = stdout(&esc(&["--plant", "hammerstein", "zeros"]));
    assert!(text.contains("DegenerateResponse"));
}

fn write(path: &Path, body: &str) {
    std::fs::write(path, body).unwrap();
}

#[test]
fn config_file_is_echoed_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "plant = \"reactor\"\n\n[params]\nk2 = 0.03\n\n[esc]\nomega = 0.3\ngain = 0.02\n\n[stationary]\nu_range = \"0.02:1.2:500\"\n");
    let text = stdout(&esc(&["--config", cfg.to_str().unwrap(), "--omega", "0.4", "stationary"]));
    assert!(text.contains("# k2 = 0.03"));
    assert!(text.contains("# omega = 0.4"));
    assert!(text.contains("# gain = 0.02"));
    assert!(text.contains("# u_range = \"0.02:1.2:500\""));
    let (_, rows) = table(&text);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() == 0.4));

    let out = dir.path().join("a.csv");
    let again = dir.path().join("b.csv");
    for p in [&out, &again] {
        stdout(&esc(&["--config", cfg.to_str().unwrap(), "-o", p.to_str().unwrap(), "stationary"]));
    }
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());

    write(&cfg, "plant = \"reactor\"\n[esc]\nomeg = 0.3\n");
    assert_eq!(esc(&["--config", cfg.to_str().unwrap(), "stationary"]).status.code(), Some(1));
}
