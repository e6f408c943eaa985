use std::path::PathBuf;
use std::process::{Command, Output};

fn ehcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehcr"))
        .args(args)
        .env_remove("EHCR_CONFIG_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ehcr-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn column(csv: &str, row: usize, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines
        .nth(row)
        .unwrap()
        .split(',')
        .nth(i)
        .unwrap()
        .to_string()
}

#[test]
fn analyze_reproduces_the_hand_evaluated_point() {
    let o = ehcr(&[
        "analyze",
        "--preset",
        "fig4",
        "--scheme",
        "no_feedback",
        "--set",
        "traffic.lambda_p=0.126",
    ]);
    // the delay 6.94 exceeds the bound of 2 slots
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let csv = stdout(&o);
    let get = |c| column(&csv, 0, c).parse::<f64>().unwrap();
    assert!((get("mu_p") - 0.252).abs() < 1e-12);
    assert!((get("mu_s") - 0.3154).abs() < 1e-12);
    assert!((get("delay") - 6.9365).abs() < 1e-4);

    let o = ehcr(&[
        "analyze",
        "--preset",
        "fig6",
        "--scheme",
        "nofb",
        "--set",
        "traffic.lambda_p=0.126",
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn no_energy_means_no_secondary_service() {
    let o = ehcr(&["analyze", "--preset", "fig6", "--set", "traffic.lambda_e=0"]);
    let csv = stdout(&o);
    for row in 0..3 {
        assert_eq!(column(&csv, row, "mu_s").parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = scratch("bad");
    let text = ehcr::config::preset_source("fig4")
        .unwrap()
        .replace("lambda_e = 0.8\n", "");
    let path = dir.join("missing.toml");
    std::fs::write(&path, text).unwrap();
    let o = ehcr(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda_e"), "{}", stderr(&o));

    let o = ehcr(&[
        "sweep",
        "--preset",
        "fig4",
        "--set",
        "sweep.values=[]",
        "--set",
        "sweep.range.step=1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = ehcr(&["sweep", "--preset", "fig4", "--set", "sweep.values=[]"]);
    assert_eq!(o.status.code(), Some(1));
    let o = ehcr(&["analyze"]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_dir_env_supplies_files() {
    let dir = scratch("env");
    std::fs::write(
        dir.join("mine.toml"),
        ehcr::config::preset_source("fig6").unwrap(),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ehcr"))
        .args(["analyze", "--config", "mine.toml", "--scheme", "ra"])
        .env("EHCR_CONFIG_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), 0, "scheme"), "random_access");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sweep_file_is_schema_stable_and_repeatable() {
    let dir = scratch("sweep");
    let run = |name: &str| {
        let out = dir.join(name);
        let o = ehcr(&[
            "sweep",
            "--preset",
            "fig8",
            "--set",
            "sweep.range={start=0.1, stop=0.2, step=0.1}",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert!(!a.contains('\r') && a.ends_with('\n'));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(
        lines[0],
        "series_var,series_value,sweep_var,sweep_value,scheme,mu_s,mu_p,delay,sense,access_free,access_busy,access_direct,access_retx,feasible"
    );
    assert_eq!(lines.len(), 1 + 2 * 2 * 3);
    assert!(lines[1]
        .starts_with("mpr_on,1.0000000000000000e0,lambda_p,1.0000000000000001e-1,feedback,"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn optimize_reports_each_scheme() {
    let o = ehcr(&[
        "optimize",
        "--preset",
        "fig4",
        "--set",
        "traffic.lambda_p=0.1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let mu = |r| column(&csv, r, "mu_s").parse::<f64>().unwrap();
    assert!(mu(0) >= mu(1) && mu(1) >= mu(2));

    let o = ehcr(&[
        "optimize",
        "--preset",
        "fig4",
        "--set",
        "traffic.lambda_p=0.6",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_passes_when_energy_never_runs_out() {
    let o = ehcr(&[
        "validate",
        "--preset",
        "fig4",
        "--set",
        "traffic.lambda_e=1",
        "--slots",
        "200000",
        "--scheme",
        "fb",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("validation PASS"));
    assert!(stdout(&o).starts_with("report,check,measured"));
}

#[test]
fn validate_flags_instability_without_failing() {
    let o = ehcr(&[
        "validate",
        "--preset",
        "fig4",
        "--set",
        "traffic.lambda_p=0.9",
        "--slots",
        "100000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("unstable detected"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let args = [
        "simulate",
        "--preset",
        "fig4",
        "--slots",
        "50000",
        "--seed",
        "9",
        "--set",
        "simulation.semantics=\"exact\"",
    ];
    let a = ehcr(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&ehcr(&args)));
    assert_eq!(column(&stdout(&a), 0, "semantics"), "exact");
    let mut other = args.to_vec();
    other[6] = "10";
    assert_ne!(stdout(&a), stdout(&ehcr(&other)));
}
