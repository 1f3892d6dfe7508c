use std::process::{Command, Output};

fn stratcub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratcub"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn indicator_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("arc");
    let o = stratcub(&["indicator", "--draws", "400", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,space,d,N,alpha,eps,kappa,p,q,beta,value,stderr,seed,n_draws,m_y,m_z"
    );
    assert_eq!(lines.count(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"], "pass");
    assert_eq!(summary["predicted"], -1.0);
}

#[test]
fn failed_verdict_exits_with_one() {
    // A high-frequency cosine is far from its asymptotic rate at these N.
    let o = stratcub(&["besov", "--function", r#"{"kind":"cosine","freq":[40]}"#, "--draws", "200"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("[FAIL] slope"));
}

#[test]
fn invalid_input_exits_with_two() {
    let o = stratcub(&["wce", "--n", "8,16"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("N values"));
    let o = stratcub(&["indicator", "--space", "sphere", "--set", r#"{"kind":"torus_box","start":[0.1],"len":[0.2]}"#]);
    assert_eq!(o.status.code(), Some(2));
    let o = stratcub(&["wce", "--kernel", "no_such_kernel"]);
    assert!(!o.status.success());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wce.toml");
    std::fs::write(
        &cfg,
        r#"
kind = "wce"
space = "torus"
n = [8, 16, 32, 64]
n_draws = 20
m_y = 256
m_z = 16
seed = 4

[kernel]
family = "riesz"
alpha = 0.75
d = 1
eps = 1.0
kappa = 0.0
"#,
    )
    .unwrap();
    let o = stratcub(&["wce", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.starts_with("wce,torus,1,8,0.75,1.0,0.0,2.0,2.0,,"), "{row}");
    assert!(row.contains(",5,20,256,16"), "{row}");

    // Kind mismatch between subcommand and file.
    let o = stratcub(&["besov", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        let o = stratcub(&[
            "--threads", threads, "wce", "--space", "sphere", "--alpha", "1.5", "--n", "8,16,32,64", "--draws", "16",
            "--my", "512", "--seed", "3",
        ]);
        assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
        o.stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn rates_suite_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    std::fs::write(
        &suite,
        r#"
[[experiment]]
kind = "indicator"
name = "arc"
space = "torus"
n_draws = 400
set = { kind = "torus_box", start = [0.1234], len = [0.4787] }

[[experiment]]
kind = "sharpness"
name = "bumps"
space = "torus"
p = 4.0
n_draws = 400
"#,
    )
    .unwrap();
    let out = dir.path().join("rates");
    let o = stratcub(&["rates", "--config", suite.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("arc,")).count(), 6);
    assert_eq!(csv.lines().filter(|l| l.starts_with("bumps,")).count(), 6);

    let o = stratcub(&["verify", "--n", "4,16,64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("[ok] kernel_bounds") && err.contains("[ok] extremal_witness"), "{err}");
}
