use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hlaser(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlaser"))
        .args(args)
        .env_remove("WORKERS")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn observe_split_gain_reports_half_mandel_q() {
    let out = hlaser(&[
        "observe", "--family", "plambda", "--p", "4.1479", "--lambda", "0.5", "--dim", "300",
    ]);
    assert!(out.status.success());
    let doc = json_of(&out);
    assert_eq!(doc["schema_version"], 1);
    let q = doc["observables"]["mandel_q"].as_f64().unwrap();
    assert!((q + 0.5).abs() < 0.01, "{q}");
    let rel = doc["prediction"]["relative_difference"].as_f64().unwrap();
    assert!(rel.abs() < 0.1);
}

#[test]
fn observe_tiny_dimension_notes_formula_inapplicable() {
    let out = hlaser(&["observe", "--family", "p", "--p", "4", "--dim", "3"]);
    assert!(out.status.success());
    let doc = json_of(&out);
    assert!(doc["prediction"].is_null());
    let notes = doc["notes"].to_string();
    assert!(
        notes.contains("asymptotic-formula not applicable"),
        "{notes}"
    );
}

#[test]
fn observe_regular_pumping_matches_prediction() {
    let doc = json_of(&hlaser(&[
        "observe", "--family", "pq", "--p", "4.1479", "--q", "-1", "--dim", "300",
    ]));
    let c = doc["observables"]["coherence"].as_f64().unwrap();
    let pred = doc["prediction"]["coherence"].as_f64().unwrap();
    assert!((c / pred - 1.0).abs() < 0.1, "{c} {pred}");
}

#[test]
fn observe_without_dimension_is_usage_error() {
    let out = hlaser(&["observe", "--family", "p"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"]["kind"], "Usage");
}

#[test]
fn invalid_params_exit_two_with_json() {
    let out = hlaser(&["observe", "--family", "p", "--p", "-1", "--dim", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"]["kind"], "InvalidParams");
}

#[test]
fn growing_band_one_mode_is_solver_error() {
    let out = hlaser(&[
        "observe", "--family", "pq", "--p", "4", "--q", "-1", "--dim", "20",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_of(&out);
    assert_eq!(err["error"]["kind"], "SingularBandOne");
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(hlaser(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn predict_optimal_p() {
    let doc = json_of(&hlaser(&["predict", "optimal-p"]));
    assert!((doc["optimal_p"].as_f64().unwrap() - 4.1479).abs() < 5e-4);
}

#[test]
fn predict_coherence_and_pole() {
    let doc = json_of(&hlaser(&[
        "predict", "--family", "p", "--p", "4.1479", "--dim", "1000",
    ]));
    let mu = doc["mu"].as_f64().unwrap();
    let c = doc["coherence"].as_f64().unwrap();
    let pre = doc["prefactor"].as_f64().unwrap();
    assert_eq!(mu, 499.5);
    assert!((c - pre * mu.powi(4)).abs() <= 1e-12 * c);
    assert!(doc["heisenberg_bound"]["value"].as_f64().unwrap() > 0.0);

    let out = hlaser(&["predict", "--family", "p", "--p", "3", "--dim", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"]["kind"], "OutOfDomain");
}

#[test]
fn sweep_fourth_power_prefactors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fourth_power.csv");
    let status = hlaser(&[
        "sweep",
        "--families",
        "p,plambda,pq",
        "--p-grid",
        "4.1479",
        "--lambda-grid",
        "0.5",
        "--q-grid",
        "-1",
        "--dims",
        "550,600,650,700,750,800,850,900,950,1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    assert_eq!(csv_rows(&out).len(), 30);
    for (family, expected) in [("p", 0.0040), ("plambda", 0.0082), ("pq", 0.0140)] {
        let doc = json_of(&hlaser(&[
            "fit",
            "--input",
            out.to_str().unwrap(),
            "--family",
            family,
        ]));
        let c = doc["fit"]["prefactor"].as_f64().unwrap();
        assert!((c / expected - 1.0).abs() < 0.1, "{family}: {c}");
    }
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let status = hlaser(&[
            "sweep",
            "--families",
            "p,pq",
            "--p-grid",
            "3.5,4.5",
            "--dims",
            "40,80,120,160",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("3", "b.csv"));
}

#[test]
fn sweep_row_round_trips_observe_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one.csv");
    let args = [
        "--family", "plambda", "--p", "4.3", "--lambda", "0.2", "--dim", "150",
    ];
    let mut sweep = vec!["sweep"];
    sweep.extend(args);
    sweep.extend(["--out", out.to_str().unwrap()]);
    assert!(hlaser(&sweep).status.success());
    let mut observe = vec!["observe"];
    observe.extend(args);
    let doc = json_of(&hlaser(&observe));

    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    for name in [
        "flux",
        "coherence",
        "linewidth",
        "mandel_q",
        "solver_residual",
    ] {
        let i = header.iter().position(|h| h == name).unwrap();
        let from_csv: f64 = row[i].parse().unwrap();
        let from_json = doc["observables"][name].as_f64().unwrap();
        assert_eq!(from_csv.to_bits(), from_json.to_bits(), "{name}");
    }
}

#[test]
fn sweep_resumes_from_journal() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.csv");
    let resumed = dir.path().join("res.csv");
    let grid = [
        "sweep", "--family", "p", "--p-grid", "3.5,4.5", "--dims", "30,60,90",
    ];
    let run = |out: &Path| {
        let mut a = grid.to_vec();
        a.extend(["--out", out.to_str().unwrap()]);
        hlaser(&a)
    };
    assert!(run(&reference).status.success());
    assert!(!dir.path().join("ref.csv.journal").exists());

    // Build a journal as an interrupted run would leave it: header, two
    // finished rows, and a torn line.
    let spec = serde_json::json!({
        "families": ["p"], "p_grid": [3.5, 4.5], "lambda_grid": [0.5], "q_grid": [-1.0],
        "d_grid": [30, 60, 90],
        "outputs": ["flux", "coherence", "linewidth", "mandel_q", "w_fit"],
    });
    let json_ref = {
        let mut b = grid.to_vec();
        b.extend(["--format", "json"]);
        json_of(&hlaser(&b))
    };
    let mut journal = format!("{spec}\n");
    for i in [0usize, 4] {
        let r = &json_ref["rows"][i];
        let row = serde_json::json!({
            "index": i,
            "row": {
                "family": r["family"], "p": r["p"], "lambda": r["lambda"], "q": r["q"],
                "dim": r["D"], "mu": r["mu"], "flux": r["flux"], "coherence": r["coherence"],
                "linewidth": r["linewidth"], "mandel_q": r["mandel_q"], "wall_time_s": 0.0,
                "solver_residual": r["solver_residual"], "error": null,
            }
        });
        journal.push_str(&format!("{row}\n"));
    }
    journal.push_str("{\"index\": 2, \"row\": {\"fam");
    fs::write(dir.path().join("res.csv.journal"), journal).unwrap();

    let out = run(&resumed);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 already journaled"));
    assert_eq!(fs::read(&reference).unwrap(), fs::read(&resumed).unwrap());
    assert!(!dir.path().join("res.csv.journal").exists());
}

#[test]
fn sweep_refuses_foreign_journal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    fs::write(dir.path().join("x.csv.journal"), "{\"families\":[\"pq\"],\"p_grid\":[1.0],\"lambda_grid\":[0.5],\"q_grid\":[-1.0],\"d_grid\":[5],\"outputs\":[\"flux\"]}\n").unwrap();
    let r = hlaser(&["sweep", "--dims", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn sweep_failures_land_in_error_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let r = hlaser(&[
        "sweep",
        "--family",
        "pq",
        "--p-grid",
        "4",
        "--q-grid",
        "-1",
        "--dims",
        "20,30",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3));
    let rows = csv_rows(&out);
    assert!(rows[0].iter().next_back().unwrap().contains("band-1"));
    assert_eq!(rows[1].iter().next_back().unwrap(), "");
    assert!(dir.path().join("f.csv.journal").exists());
}

#[test]
fn sweep_empty_outputs_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.csv");
    let r = hlaser(&[
        "sweep",
        "--dims",
        "10",
        "--outputs",
        "",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(
        hlaser(&["sweep", "--dims", "10", "--outputs", "bogus"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn split_gain_grid_minimises_q_at_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let r = hlaser(&[
        "sweep",
        "--family",
        "plambda",
        "--p-grid",
        "3.5,4.1479,5",
        "--lambda-grid",
        "0,0.25,0.5,0.75,1",
        "--dims",
        "200",
        "--outputs",
        "mandel_q",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let rows = csv_rows(&out);
    for chunk in rows.chunks(5) {
        let best = chunk
            .iter()
            .min_by(|a, b| {
                a[6].parse::<f64>()
                    .unwrap()
                    .total_cmp(&b[6].parse().unwrap())
            })
            .unwrap();
        assert_eq!(best[2].parse::<f64>().unwrap(), 0.5);
    }
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "family = \"pq\"\np = 4.0\nq = -0.5\ndim = 50\nworkers = 2\n",
    )
    .unwrap();
    let doc = json_of(&hlaser(&["observe", "--config", cfg.to_str().unwrap()]));
    assert_eq!(doc["params"]["family"], "pq");
    assert_eq!(doc["params"]["dim"], 50);
    assert_eq!(doc["params"]["q"], -0.5);
    let doc = json_of(&hlaser(&[
        "observe",
        "--config",
        cfg.to_str().unwrap(),
        "--dim",
        "60",
    ]));
    assert_eq!(doc["params"]["dim"], 60);

    fs::write(&cfg, "dimm = 3\n").unwrap();
    assert_eq!(
        hlaser(&["observe", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn workers_environment_and_flag() {
    let run = |env: &str, extra: &[&str]| {
        let mut a = vec!["observe", "--dim", "20"];
        a.extend(extra);
        Command::new(env!("CARGO_BIN_EXE_hlaser"))
            .args(&a)
            .env("WORKERS", env)
            .output()
            .unwrap()
    };
    assert_eq!(run("lots", &[]).status.code(), Some(2));
    assert!(run("lots", &["--workers", "1"]).status.success());
    assert!(run("2", &[]).status.success());
}

#[test]
fn trace_g1_with_gnuplot_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g1.csv");
    let r = hlaser(&[
        "trace-g1",
        "--family",
        "p",
        "--p",
        "4.15",
        "--dim",
        "100",
        "--points",
        "41",
        "--gnuplot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 41);
    let g: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!((g[0] - 1.0).abs() < 1e-9);
    assert!(g.windows(2).all(|w| w[1] < w[0]));
    for r in &rows {
        let (v, ideal): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((v - ideal).abs() < 1e-4);
    }
    let gp = fs::read_to_string(dir.path().join("g1.csv.gp")).unwrap();
    assert!(gp.contains("plot") && gp.contains("g1.csv"));
}

#[test]
fn trace_g2_json_relaxes_to_one() {
    let doc = json_of(&hlaser(&[
        "trace-g2", "--family", "plambda", "--dim", "100", "--format", "json", "--points", "11",
    ]));
    assert_eq!(doc["command"], "trace-g2");
    let rows = doc["rows"].as_array().unwrap();
    assert!(rows[0]["g2ps"].as_f64().unwrap() < 1.0);
    assert!((rows[10]["g2ps"].as_f64().unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn gnuplot_needs_output_file() {
    let r = hlaser(&["trace-g1", "--dim", "20", "--gnuplot"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn verify_oracle_passes() {
    let out = hlaser(&["verify", "oracle", "--seed", "7"]);
    assert!(out.status.success());
    let doc = json_of(&out);
    assert_eq!(doc["passed"], true);
    assert!(doc["checks"][0]["detail"]["worst"].as_f64().unwrap() < 1e-10);
}

#[test]
fn verify_steady_state_norms() {
    let out = hlaser(&[
        "verify",
        "ss-pq",
        "--p",
        "3",
        "--q",
        "-1",
        "--dims",
        "100,200,400",
    ]);
    assert!(out.status.success());
    let doc = json_of(&out);
    let w = doc["checks"][0]["detail"]["exponent"].as_f64().unwrap();
    assert!(w <= -1.5, "{w}");
}

#[test]
fn verify_regime() {
    let out = hlaser(&["verify", "regime", "--p-grid", "2,4.1479"]);
    assert!(out.status.success());
    assert_eq!(json_of(&out)["checks"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_condition_four() {
    let out = hlaser(&["verify", "cond4", "--dmax", "250", "--seed", "11"]);
    let doc = json_of(&out);
    assert!(out.status.success(), "{doc:#}");
    for check in doc["checks"].as_array().unwrap() {
        if let Some(w) = check["detail"]["exponent"].as_f64() {
            assert!((w + 0.5).abs() <= 0.1);
        }
    }
}

#[test]
fn verify_failure_exits_one() {
    // At small D the p = 3 boundary has not reached its fourth-power law.
    let out = hlaser(&[
        "verify",
        "regime",
        "--family",
        "p",
        "--p-grid",
        "3",
        "--dims",
        "20,30,40,50",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let doc = json_of(&out);
    assert_eq!(doc["passed"], false);
    assert_eq!(doc["checks"][0]["detail"]["tolerance"], 0.3);
}

#[test]
fn fit_respects_window() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("D,coherence\n");
    for d in [10.0f64, 20.0, 30.0, 40.0, 80.0, 160.0, 320.0, 640.0] {
        let y = if d < 50.0 {
            7.0 * d.powi(2)
        } else {
            0.5 * d.powi(4)
        };
        text.push_str(&format!("{d},{y}\n"));
    }
    fs::write(&data, text).unwrap();
    let doc = json_of(&hlaser(&[
        "fit",
        "--input",
        data.to_str().unwrap(),
        "--window",
        "50,1000",
    ]));
    assert!((doc["fit"]["exponent"].as_f64().unwrap() - 4.0).abs() < 1e-10);
    assert!((doc["fit"]["prefactor"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let all = json_of(&hlaser(&["fit", "--input", data.to_str().unwrap()]));
    assert!((all["fit"]["exponent"].as_f64().unwrap() - 4.0).abs() > 0.1);
}
