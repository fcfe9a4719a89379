use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn tyfo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tyfo"))
        .args(args)
        .env_remove("TYFO_SEED")
        .output()
        .expect("spawn tyfo")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    let text = format!(
        "# tiny run\ndata = {}\noutput_dir = out\nd_model = 16\nd_txt = 16\nd_ff = 32\nn_layers = 1\nepochs = 2\nbatch_size = 64\ncheckpoint_every = 1\n{extra}",
        p(&fixture("hurdat2_synthetic.txt")),
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn parse_canonicalizes_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let once = dir.path().join("once.txt");
    let twice = dir.path().join("twice.txt");
    let text = ok(tyfo(&["parse", p(&fixture("hurdat2_synthetic.txt")), p(&once)]));
    let first = text.lines().next().unwrap();
    assert!(first.ends_with("records") && first.contains("storms"), "{first}");
    assert!(text.contains("AL142024 MILTON 67"));
    ok(tyfo(&["parse", p(&once), p(&twice)]));
    assert_eq!(std::fs::read(&once).unwrap(), std::fs::read(&twice).unwrap());
}

#[test]
fn parse_reports_bad_lines_and_accepts_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(
        &bad,
        "AL012020,     ARTHUR,      2,\n20200519, 0000,  , TS, 35.0N,  75.0W,  45, 1002,  -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999,\n20200519, 0600,  , TS, 35.0X,  74.0W,  45, 1002,  -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999, -999,\n",
    )
    .unwrap();
    let o = tyfo(&["parse", p(&bad), p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let text = ok(tyfo(&["parse", p(&empty), p(&dir.path().join("y"))]));
    assert!(text.starts_with("0 storms, 0 records"));

    let o = tyfo(&["parse", p(&dir.path().join("missing.txt")), p(&dir.path().join("z"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn prompt_and_embed_caches_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prompts = dir.path().join("prompts.txt");
    let text = ok(tyfo(&["prompt", p(&fixture("milton_2024.txt")), p(&prompts)]));
    assert!(text.starts_with("67 prompts (0 imported)"), "{text}");
    let cache = std::fs::read_to_string(&prompts).unwrap();
    assert_eq!(cache.lines().count(), 67);

    // feeding the cache back counts every line as an import and changes nothing
    let again = dir.path().join("again.txt");
    let text = ok(tyfo(&["prompt", p(&fixture("milton_2024.txt")), p(&again), "--import", p(&prompts)]));
    assert!(text.starts_with("67 prompts (67 imported)"), "{text}");
    assert_eq!(std::fs::read_to_string(&again).unwrap(), cache);

    let emb = dir.path().join("emb.txt");
    let text = ok(tyfo(&["embed", p(&fixture("milton_2024.txt")), p(&emb), "--dim", "12"]));
    assert!(text.starts_with("67 embeddings, dim 12"), "{text}");
    let line = std::fs::read_to_string(&emb).unwrap().lines().next().unwrap().to_string();
    let values: Vec<f64> = line.rsplit('|').next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 12);
    // mean of unit token vectors
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm > 0.0 && norm <= 1.0 + 1e-12, "{norm}");
}

#[test]
fn train_evaluate_forecast_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");

    let text = ok(tyfo(&["train", "--config", p(&cfg)]));
    assert!(text.contains("epoch    1 loss") && text.contains("epoch    2 loss"), "{text}");
    assert!(out_dir.join("checkpoint.tyfo").exists());
    assert!(out_dir.join("checkpoint_epoch0001.tyfo").exists());
    let report = std::fs::read_to_string(out_dir.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3, "{report}");

    let dump = dir.path().join("dump.csv");
    let text = ok(tyfo(&["evaluate", "--config", p(&cfg), "--dump", p(&dump)]));
    assert!(text.contains("MAE (All)") && text.contains("typhoformer"), "{text}");
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    // header, then MAE and ΔR rows for 3 models x 4 horizons
    assert_eq!(metrics.lines().count(), 1 + 3 * 4 * 2, "{metrics}");
    let dump = std::fs::read_to_string(&dump).unwrap();
    assert!(dump.lines().skip(1).any(|l| l.starts_with("persistence,AL142024_MILTON,202410090000,6,")));

    let csv = dir.path().join("forecast.csv");
    let args = ["--config", p(&cfg), "--storm", "AL142024", "--start", "2024-10-09T00:00Z"];
    ok(tyfo(&[&["forecast"][..], &args, &["--out", p(&csv)]].concat()));
    let rows = std::fs::read_to_string(&csv).unwrap();
    let count = |m: &str| rows.lines().filter(|l| l.starts_with(&format!("{m},"))).count();
    assert_eq!(rows.lines().next(), Some("model,storm,issue_time,horizon_h,lat,lon"));
    assert_eq!((count("observed"), count("typhoformer"), count("persistence"), count("cliper_lite"), count("truth")), (8, 4, 4, 4, 4));

    let from_csv = dir.path().join("a.geojson");
    let direct = dir.path().join("b.geojson");
    let text = ok(tyfo(&["export-geojson", "--forecast", p(&csv), "--out", p(&from_csv)]));
    assert!(text.starts_with("wrote 5 features"), "{text}");
    ok(tyfo(&[&["export-geojson"][..], &args, &["--out", p(&direct)]].concat()));
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&from_csv).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&direct).unwrap()).unwrap();
    assert_eq!(a["type"], "FeatureCollection");
    assert_eq!(a["features"].as_array().unwrap().len(), b["features"].as_array().unwrap().len());

    let o = tyfo(&["forecast", "--config", p(&cfg), "--storm", "AL142024", "--start", "203001010000"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "learning_rate = 0.1\n");
    let o = tyfo(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
    assert_eq!(tyfo(&["bogus"]).status.code(), Some(2));
    assert_eq!(tyfo(&["--help"]).status.code(), Some(0));
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 5\n");
    let o = Command::new(env!("CARGO_BIN_EXE_tyfo"))
        .args(["train", "--config", p(&cfg)])
        .env("TYFO_SEED", "99")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("seed 99"), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn example_config_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example.cfg");
    let cfg = typhoformer::config::load_config(&path).unwrap();
    assert!(cfg.data.exists(), "{}", cfg.data.display());
    assert_eq!(cfg.model, typhoformer::model::ModelConfig::default());
}
