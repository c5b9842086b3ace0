use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lcda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcda"))
        .args(args)
        .env_remove("LCDA_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four well separated classes in the plane, five points each.
fn separable(dir: &TempDir) -> PathBuf {
    let mut s = String::from("class_id,x,y\n");
    let centers = [(0.0, 0.0), (50.0, 0.0), (0.0, 50.0), (50.0, 50.0)];
    let offsets = [(0.3, -0.2), (-0.4, 0.1), (0.1, 0.5), (-0.2, -0.3), (0.2, -0.1)];
    for (c, (cx, cy)) in centers.iter().enumerate() {
        for (dx, dy) in offsets.iter() {
            let scale = 1.0 + c as f64 * 0.5;
            s.push_str(&format!("c{c},{},{}\n", cx + dx * scale, cy + dy * scale));
        }
    }
    let p = dir.path().join("train.csv");
    fs::write(&p, s).unwrap();
    p
}

fn fit_model(dir: &TempDir, data: &Path, extra: &[&str]) -> PathBuf {
    let model = dir.path().join("model.json");
    let mut args = vec!["fit", "--data", path_str(data), "--out", path_str(&model)];
    args.extend_from_slice(extra);
    let o = lcda(&args);
    assert!(o.status.success(), "fit failed: {}", stderr(&o));
    model
}

#[test]
fn malformed_row_reports_line_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "class_id,x,y\na,1,2\na,2,3\nb,4\n").unwrap();
    let out = dir.path().join("m.json");
    let o = lcda(&["fit", "--data", path_str(&data), "--k", "1", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn missing_k_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let o = lcda(&["fit", "--data", path_str(&data), "--out", path_str(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn k_one_fit_predicts_like_lda() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let lcda_model = fit_model(&dir, &data, &["--k", "1"]);
    let lcda_copy = dir.path().join("lcda.json");
    fs::rename(&lcda_model, &lcda_copy).unwrap();
    let lda_model = fit_model(&dir, &data, &["--method", "lda"]);
    let queries = dir.path().join("q.csv");
    fs::write(&queries, "x,y\n1,1\n21,27\n48,3\n10,40\n").unwrap();
    let a = lcda(&["predict", "--model", path_str(&lcda_copy), "--queries", path_str(&queries)]);
    let b = lcda(&["predict", "--model", path_str(&lda_model), "--queries", path_str(&queries)]);
    let classes = |o: &Output| -> Vec<String> {
        stdout(o).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect()
    };
    assert_eq!(classes(&a), classes(&b));
}

#[test]
fn empty_query_file_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let model = fit_model(&dir, &data, &["--k", "2"]);
    let queries = dir.path().join("empty.csv");
    fs::write(&queries, "").unwrap();
    let o = lcda(&["predict", "--model", path_str(&model), "--queries", path_str(&queries)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn query_dimension_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let model = fit_model(&dir, &data, &["--k", "2"]);
    let queries = dir.path().join("q.csv");
    fs::write(&queries, "id,x,y,z\nq,1,2,3\n").unwrap();
    let o = lcda(&["predict", "--model", path_str(&model), "--queries", path_str(&queries)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn class_mean_query_predicts_its_class() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let model = fit_model(&dir, &data, &["--k", "2"]);
    let queries = dir.path().join("q.csv");
    fs::write(&queries, "id,x,y\nm0,0,0\nm1,50,0\nm2,0,50\nm3,50,50\n").unwrap();
    let o = lcda(&["predict", "--model", path_str(&model), "--queries", path_str(&queries), "--top", "2"]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines[0], "query_id,predicted_class,log_score_top1,log_score_top2");
    for (i, line) in lines[1..].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], format!("m{i}"));
        assert_eq!(f[1], format!("c{i}"));
        assert!(f[2].parse::<f64>().unwrap() >= f[3].parse::<f64>().unwrap());
    }
}

#[test]
fn batch_matches_single_queries() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let model = fit_model(&dir, &data, &["--k", "2"]);
    let mut batch = String::from("id,x,y\n");
    let mut singles = Vec::new();
    for i in 0..1000 {
        let row = format!("q{i},{},{}", (i as f64 * 0.731).sin() * 40.0 + 25.0, (i as f64 * 0.317).cos() * 40.0 + 25.0);
        batch.push_str(&row);
        batch.push('\n');
        singles.push(row);
    }
    let bpath = dir.path().join("batch.csv");
    fs::write(&bpath, batch).unwrap();
    let o = lcda(&["predict", "--model", path_str(&model), "--queries", path_str(&bpath), "--top", "4"]);
    let batch_rows: Vec<String> = stdout(&o).lines().skip(1).map(String::from).collect();
    assert_eq!(batch_rows.len(), 1000);
    // Every single-query run costs a process spawn; a spread sample keeps this fast.
    let spath = dir.path().join("single.csv");
    for i in (0..1000).step_by(37) {
        fs::write(&spath, format!("id,x,y\n{}\n", singles[i])).unwrap();
        let o = lcda(&["predict", "--model", path_str(&model), "--queries", path_str(&spath), "--top", "4"]);
        let row = stdout(&o).lines().nth(1).unwrap().to_string();
        assert_eq!(row, batch_rows[i]);
    }
}

#[test]
fn separable_data_is_classified_perfectly() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let o = lcda(&["evaluate", "--data", path_str(&data), "--k", "2", "--methods", "lcda,lda,qda"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let overall: Vec<&str> = text.lines().filter(|l| l.starts_with("overall,")).collect();
    assert_eq!(overall.len(), 3);
    for line in overall {
        assert!(line.ends_with(",accuracy,1.0"), "{line}");
    }
}

#[test]
fn infeasible_qda_is_na_with_exit_0() {
    let dir = TempDir::new().unwrap();
    let mut s = String::from("class_id,a,b,c,d\n");
    for c in 0..5 {
        for j in 0..3 {
            let t = (c * 3 + j) as f64;
            s.push_str(&format!("c{c},{},{},{},{}\n", c as f64 * 20.0 + t.sin(), t.cos(), (2.0 * t).sin(), (3.0 * t).cos()));
        }
    }
    let data = dir.path().join("small.csv");
    fs::write(&data, s).unwrap();
    let o = lcda(&["evaluate", "--data", path_str(&data), "--methods", "lda,qda"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("overall,qda,accuracy,NA"));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn heldout_reports_each_repeat() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let o = lcda(&[
        "evaluate", "--data", path_str(&data), "--protocol", "heldout", "--g", "1", "--repeats", "10",
        "--methods", "lda,lcda", "--k", "2", "--seed", "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for m in ["lda", "lcda"] {
        let reps = text.lines().filter(|l| l.starts_with(&format!("repeat,{m},"))).count();
        assert_eq!(reps, 10);
        for item in ["mean", "band_lower", "band_upper"] {
            assert!(text.contains(&format!("overall,{m},{item},")));
        }
    }
}

#[test]
fn fit_then_load_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let model = fit_model(&dir, &data, &["--k", "2", "--use-adjusted"]);
    let text = fs::read_to_string(&model).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["kind"], "lcda");
    assert_eq!(v["use_adjusted"], true);
    assert!(v["provenance"]["data_fingerprint"].as_str().unwrap().starts_with("sha256:"));
    let again: serde_json::Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
}

#[test]
fn select_k_prints_bic_table() {
    let dir = TempDir::new().unwrap();
    let data = separable(&dir);
    let model = dir.path().join("m.json");
    let o = lcda(&["fit", "--data", path_str(&data), "--select-k", "1..3", "--out", path_str(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("selected k = "));
    assert_eq!(text.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit()) && l.contains('\t')).count(), 3);
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = lcda(&[
            "--threads", threads, "simulate", "--experiment", "accuracy", "--p", "3", "--k", "2", "--n", "12",
            "--reps", "4", "--seed", "11", "--out", path_str(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 5);
}

#[test]
fn simulate_bias_and_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("design.toml");
    fs::write(
        &cfg,
        "experiment = \"bias\"\n\n[[design]]\np = 3\nk = 2\nn = 40\nni_mode = { fixed = 3 }\nreps = 2\nseed = 5\n",
    )
    .unwrap();
    let o = lcda(&["simulate", "--config", path_str(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("experiment"), "bias");
    assert!(col("bias_mle_max").parse::<f64>().is_ok());
    assert!(col("bias_adjusted_max").parse::<f64>().is_ok());
}

#[test]
fn invalid_design_exits_2() {
    let o = lcda(&["simulate", "--experiment", "ari", "--p", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn group_mean_averages_replicates() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("reps.csv");
    let mut s = String::from("class_id,fragment,x,y\n");
    for c in 0..3 {
        for f in 0..4 {
            for r in 0..3 {
                let t = (c * 12 + f * 3 + r) as f64;
                s.push_str(&format!("c{c},f{f},{},{}\n", c as f64 * 30.0 + f as f64 + 0.1 * t.sin(), f as f64 * 0.7 + 0.1 * t.cos()));
            }
        }
    }
    fs::write(&data, s).unwrap();
    let model = fit_model(&dir, &data, &["--method", "lda", "--group-mean", "fragment"]);
    let out = lcda(&["fit", "--data", path_str(&data), "--method", "lda", "--group-mean", "fragment", "--out", path_str(&model)]);
    assert!(stdout(&out).contains("3 classes, 12 observations, p = 2"), "{}", stdout(&out));
}
