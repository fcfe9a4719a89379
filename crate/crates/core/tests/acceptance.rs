//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false`, so the lines print without `--nocapture`.
//! Exits non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{Datelike, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use typhoformer::autodiff::{grad_check, Tape, Tensor};
use typhoformer::checkpoint::ModelCheckpoint;
use typhoformer::cli;
use typhoformer::context::PromptContext;
use typhoformer::embed::{embed, fnv1a64};
use typhoformer::eval::{
    delta_r, evaluate_models, run_forecaster, CliperLite, Forecaster, ModelForecaster, Persistence,
    EARTH_RADIUS_KM,
};
use typhoformer::features::{fit_normalization, make_windows, split_by_year, YearSplit};
use typhoformer::hurdat2::{parse_hurdat2, parse_merged_line, render_hurdat2, StormTrack};
use typhoformer::model::{forward_graph, pgf_fuse, ModelConfig, ModelParams, TyphoFormer};
use typhoformer::prompt::generate_prompt;
use typhoformer::synth::TurningTrackSampler;
use typhoformer::train::{prepare_samples, train_samples, TrainConfig};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture present")
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(
        elapsed < budget,
        format!("took {:.2}s, budget {:.0}s", elapsed.as_secs_f64(), budget.as_secs_f64()),
    )
}

const MILTON_MERGED: &str =
    "AL142024_MILTON,20241010,0030,L,HU,27.4N,82.6W,100,958,180,170,110,220,60,60,70,90,30,30,30,30,20";

fn c1_parser() -> Outcome {
    let start = Instant::now();
    let (id, r) = parse_merged_line(MILTON_MERGED).map_err(|e| e.to_string())?;
    check(id.to_string() == "AL142024" && id.name == "MILTON", format!("id {id}"))?;
    check(r.lat_deg == 27.4 && r.lon_deg == -82.6, format!("position {} {}", r.lat_deg, r.lon_deg))?;
    check(r.max_wind_kt == 100 && r.min_pressure_mb == 958, "wind or pressure")?;
    check(r.wind_radii_34 == [180, 170, 110, 220], "34-kt radii")?;
    check(r.wind_radii_50 == [60, 60, 70, 90], "50-kt radii")?;
    check(r.wind_radii_64 == [30, 30, 30, 30], "64-kt radii")?;
    check(r.radius_max_wind() == Some(20), "RMW")?;

    let text = read_fixture("hurdat2_synthetic.txt");
    let tracks = parse_hurdat2(&text).map_err(|e| e.to_string())?;
    check(tracks.len() >= 50, format!("fixture has {} storms", tracks.len()))?;
    let once = render_hurdat2(&tracks);
    let reparsed = parse_hurdat2(&once).map_err(|e| e.to_string())?;
    check(reparsed == tracks, "parse(render(t)) != t")?;
    check(render_hurdat2(&reparsed) == once, "render is not a fixed point")?;
    let milton = tracks
        .iter()
        .find(|t| t.id.key() == "AL142024_MILTON")
        .ok_or("MILTON missing from fixture")?;
    check(milton.records.contains(&r), "fixture MILTON lacks the landfall record")?;
    within_budget(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{} storms round-trip", tracks.len()))
}

fn numbers(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let in_number = c.is_ascii_digit()
            || (c == '.' && !cur.is_empty() && chars.get(i + 1).is_some_and(char::is_ascii_digit));
        if in_number {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(cur.parse().unwrap());
            cur.clear();
        }
    }
    if !cur.is_empty() {
        out.push(cur.parse().unwrap());
    }
    out
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn c2_prompt() -> Outcome {
    let start = Instant::now();
    let golden = read_fixture("milton_prompt.txt");
    let (id, r) = parse_merged_line(MILTON_MERGED).map_err(|e| e.to_string())?;
    let p = generate_prompt(&id, &r);
    check(
        normalize_ws(&p.text) == normalize_ws(&golden),
        format!("prompt differs from golden:\n  got:  {}\n  want: {}", p.text, golden.trim()),
    )?;
    // The storm code is one token ("AL142024"); strip it before scanning.
    let body = p.text.replace(&id.to_string(), "");
    let got = numbers(&body);
    // Record order: time, date, position, intensity, then each radii band
    // behind its threshold. Equal NE/SE 50-kt radii are named once.
    let [r34, r50, r64] = [r.wind_radii_34, r.wind_radii_50, r.wind_radii_64].map(|b| b.map(f64::from));
    let ts = r.timestamp;
    let mut want = vec![
        f64::from(ts.hour()),
        f64::from(ts.minute()),
        f64::from(ts.day()),
        f64::from(ts.year()),
        r.lat_deg,
        -r.lon_deg,
        f64::from(r.max_wind_kt),
        f64::from(r.min_pressure_mb),
        34.0,
    ];
    want.extend(r34);
    want.extend([50.0, r50[0], r50[2], r50[3], 64.0, r64[0]]);
    want.push(f64::from(r.radius_max_wind().unwrap()));
    check(got == want, format!("numeric tokens {got:?}, expected {want:?}"))?;
    within_budget(start.elapsed(), Duration::from_secs(1))?;
    Ok("golden text and numeric tokens match".into())
}

fn grad_cfg() -> ModelConfig {
    ModelConfig {
        d_txt: 16,
        d_model: 16,
        d_ff: 32,
        history: 4,
        horizons: 2,
        ..ModelConfig::default()
    }
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let cfg = grad_cfg();
    let tracks = parse_hurdat2(&read_fixture("milton_2024.txt")).map_err(|e| e.to_string())?;
    let stats = fit_normalization(&tracks).map_err(|e| e.to_string())?;
    let windows = make_windows(&tracks, cfg.history, cfg.horizons);
    let ctx = PromptContext::new(cfg.d_txt).map_err(|e| e.to_string())?;
    let samples = prepare_samples(&[windows[20].clone(), windows[35].clone()], &ctx, &cfg, &stats)
        .map_err(|e| e.to_string())?;

    let mut params = ModelParams::init(&cfg, 7).map_err(|e| e.to_string())?;
    // Zero output weights would hide every upstream gradient; perturb all
    // tensors so no gradient is trivially zero.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }

    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let value = params.get(name).unwrap().clone();
        let report = grad_check(
            |tape: &mut Tape, x| {
                let mut bound = params.bind(tape);
                bound.replace(name, x);
                let mut losses = Vec::new();
                for s in &samples {
                    let f = forward_graph(tape, &bound, &cfg, s).map_err(|e| match e {
                        typhoformer::model::ModelError::Autodiff(a) => a,
                        other => panic!("{other}"),
                    })?;
                    let t = tape.leaf(s.target_norm.clone().unwrap());
                    losses.push(tape.mse(f.prediction, t)?);
                }
                let stacked = tape.concat_rows(&losses)?;
                tape.mean(stacked, 0)
            },
            &value,
            1e-5,
            1e-4,
        )
        .map_err(|e| e.to_string())?;
        checked += value.len();
        if report.max_relative_error > worst.0 {
            worst = (report.max_relative_error, name.clone());
        }
        check(
            report.passed,
            format!("{name}: max relative error {:.3e}", report.max_relative_error),
        )?;
    }
    within_budget(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{} tensors, {checked} values, worst {:.2e} ({})",
        names.len(),
        worst.0,
        worst.1
    ))
}

fn pgf_value(params: &ModelParams, x: &Tensor, p: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let pv = tape.leaf(p.clone());
    let out = pgf_fuse(&mut tape, &b, xv, pv).unwrap();
    tape.value(out).clone()
}

fn c4_pgf() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        d_model: 8,
        d_txt: 8,
        d_ff: 8,
        n_layers: 1,
        ..ModelConfig::default()
    };
    let d = cfg.d_feat;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ModelParams::init(&cfg, 1).map_err(|e| e.to_string())?;
    let random = |rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    };

    for draw in 0..1000 {
        let scale = [0.1, 1.0, 10.0][draw % 3];
        *params.get_mut("pgf.w_g").unwrap() = random(&mut rng, vec![2 * d, d], scale);
        *params.get_mut("pgf.b_g").unwrap() = random(&mut rng, vec![d], scale);
        let steps = rng.gen_range(1..10);
        let x = random(&mut rng, vec![steps, d], 5.0);
        let p = random(&mut rng, vec![1, d], 5.0);
        let z = pgf_value(&params, &x, &p);
        for t in 0..steps {
            for i in 0..d {
                let (a, b) = (x.at(t, i), p.at(0, i));
                let (lo, hi) = (a.min(b), a.max(b));
                let v = z.at(t, i);
                check(
                    v >= lo - 1e-12 && v <= hi + 1e-12,
                    format!("draw {draw}: {v} outside [{lo}, {hi}]"),
                )?;
            }
        }
    }

    let x = random(&mut rng, vec![6, d], 3.0);
    let p = random(&mut rng, vec![1, d], 3.0);
    *params.get_mut("pgf.w_g").unwrap() = Tensor::zeros(&[2 * d, d]);
    *params.get_mut("pgf.b_g").unwrap() = Tensor::zeros(&[d]);
    let z = pgf_value(&params, &x, &p);
    for t in 0..6 {
        for i in 0..d {
            let want = 0.5 * (x.at(t, i) + p.at(0, i));
            check((z.at(t, i) - want).abs() <= 1e-12, "zero gate is not the midpoint")?;
        }
    }
    *params.get_mut("pgf.b_g").unwrap() = Tensor::filled(&[d], 20.0);
    let z = pgf_value(&params, &x, &p);
    for t in 0..6 {
        for i in 0..d {
            check((z.at(t, i) - x.at(t, i)).abs() <= 1e-6, "open gate does not pass x")?;
        }
    }
    within_budget(start.elapsed(), Duration::from_secs(10))?;
    Ok("1000 convex draws, midpoint and open-gate limits hold".into())
}

fn corpus() -> Vec<StormTrack> {
    parse_hurdat2(&read_fixture("hurdat2_synthetic.txt")).expect("corpus parses")
}

fn c5_persistence() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    let split = split_by_year(&corpus(), &YearSplit::default());
    let stats = fit_normalization(&split.train).map_err(|e| e.to_string())?;
    let windows = make_windows(&split.test, cfg.history, cfg.horizons);
    let params = ModelParams::init(&cfg, 3).map_err(|e| e.to_string())?;
    check(
        params.get("decoder.w2").unwrap().data().iter().all(|&v| v == 0.0)
            && params.get("decoder.b2").unwrap().data().iter().all(|&v| v == 0.0),
        "decoder output layer is not zero-initialised",
    )?;
    let model = TyphoFormer::new(cfg.clone(), params).map_err(|e| e.to_string())?;
    let ctx = PromptContext::new(cfg.d_txt).map_err(|e| e.to_string())?;
    let net = ModelForecaster {
        name: "typhoformer".into(),
        model: &model,
        stats: &stats,
        context: &ctx,
    };
    let ours = run_forecaster(&net, &windows).map_err(|e| e.to_string())?;
    let base = run_forecaster(&Persistence, &windows).map_err(|e| e.to_string())?;
    for (a, b) in ours.iter().zip(&base) {
        for k in 0..a.predicted.len() {
            let d = delta_r(a.predicted[k], b.predicted[k]);
            check(d == 0.0, format!("{} {}: ΔR {d} km at step {}", a.storm, a.issue_time, k + 1))?;
        }
    }
    let table = evaluate_models(&[&net, &Persistence], &windows, None).map_err(|e| e.to_string())?;
    check(
        table.rows[0].mae == table.rows[1].mae && table.rows[0].delta_r == table.rows[1].delta_r,
        "metric rows differ",
    )?;
    within_budget(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{} test windows, ΔR = 0 km everywhere", windows.len()))
}

/// Haversine form, an independent route to the same distance.
fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn c6_metric() -> Outcome {
    let start = Instant::now();
    let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-300);
    check(delta_r((12.3, -45.6), (12.3, -45.6)) == 0.0, "identical points")?;
    let anti = delta_r((0.0, 0.0), (0.0, 180.0));
    check(rel(anti, std::f64::consts::PI * 6371.0) < 1e-6, format!("antipodal {anti}"))?;
    let quarter = delta_r((0.0, 0.0), (0.0, 90.0));
    check(
        rel(quarter, std::f64::consts::FRAC_PI_2 * 6371.0) < 1e-6,
        format!("quarter circle {quarter}"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut point = || (rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..180.0));
    let mut worst_sym = 0.0f64;
    for _ in 0..10_000 {
        let (a, b) = (point(), point());
        let (ab, ba) = (delta_r(a, b), delta_r(b, a));
        worst_sym = worst_sym.max((ab - ba).abs());
        check((ab - ba).abs() <= 1e-9, format!("asymmetric at {a:?} {b:?}: {ab} vs {ba}"))?;
        check(delta_r(a, a) == 0.0, format!("self distance at {a:?}"))?;
        let h = haversine(a, b);
        if h > 1.0 {
            check(rel(ab, h) < 1e-6, format!("disagrees with haversine at {a:?} {b:?}"))?;
        }
    }
    for _ in 0..10_000 {
        let (a, b, c) = (point(), point(), point());
        let lhs = delta_r(a, c);
        let rhs = delta_r(a, b) + delta_r(b, c);
        check(lhs <= rhs + 1e-6, format!("triangle violated at {a:?} {b:?} {c:?}"))?;
    }
    within_budget(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("oracles match, worst asymmetry {worst_sym:.1e} km"))
}

/// Settings for the overfit run. Data, T, K, epochs and seed are fixed by
/// the criterion. With full-batch Adam the loss oscillates near its floor
/// for lr >= 1e-4; 5e-5..9e-5 all descend monotonically, 7e-5 sits mid-band.
fn overfit_configs() -> (ModelConfig, TrainConfig) {
    (
        ModelConfig::default(),
        TrainConfig {
            lr: 7e-5,
            batch_size: 32,
            epochs: 300,
            seed: 42,
            ..TrainConfig::default()
        },
    )
}

fn c7_overfit() -> Outcome {
    let start = Instant::now();
    let (cfg, tcfg) = overfit_configs();
    let tracks = parse_hurdat2(&read_fixture("five_storms.txt")).map_err(|e| e.to_string())?;
    check(tracks.len() == 5, "five storms")?;
    let stats = fit_normalization(&tracks).map_err(|e| e.to_string())?;
    let windows = make_windows(&tracks, cfg.history, cfg.horizons);
    let ctx = PromptContext::new(cfg.d_txt).map_err(|e| e.to_string())?;
    let samples = prepare_samples(&windows, &ctx, &cfg, &stats).map_err(|e| e.to_string())?;
    let (params, report) = train_samples(&samples, &cfg, &tcfg, |_, _| {}).map_err(|e| e.to_string())?;
    let model = TyphoFormer::new(cfg.clone(), params).map_err(|e| e.to_string())?;
    let net = ModelForecaster {
        name: "typhoformer".into(),
        model: &model,
        stats: &stats,
        context: &ctx,
    };
    let results = run_forecaster(&net, &windows).map_err(|e| e.to_string())?;
    let mae_all: f64 = results
        .iter()
        .map(|r| (0..r.predicted.len()).map(|k| r.abs_error(k)).sum::<f64>() / r.predicted.len() as f64)
        .sum::<f64>()
        / results.len() as f64;
    let losses = &report.epoch_losses;
    let rises: Vec<usize> = (5..losses.len()).filter(|&i| losses[i] > losses[i - 1]).map(|i| i + 1).collect();
    let summary = format!(
        "{} windows, MAE {mae_all:.4}°, loss {:.3e} -> {:.3e}",
        windows.len(),
        losses[0],
        losses[losses.len() - 1]
    );
    check(mae_all < 0.05, format!("{summary}: MAE not below 0.05°"))?;
    check(
        rises.is_empty(),
        format!("{summary}: loss rose after epoch 5 at epochs {:?}", &rises[..rises.len().min(10)]),
    )?;
    within_budget(start.elapsed(), Duration::from_secs(300))?;
    Ok(summary)
}

fn c8_curvature() -> Outcome {
    let start = Instant::now();
    let sampler = TurningTrackSampler::default();
    let train_tracks = sampler.sample(160, 801);
    let test_tracks = sampler.sample(40, 802);
    let cfg = ModelConfig {
        d_model: 32,
        d_ff: 64,
        d_txt: 32,
        ..ModelConfig::default()
    };
    let tcfg = TrainConfig {
        lr: 2e-3,
        batch_size: 32,
        epochs: 60,
        seed: 8,
        ..TrainConfig::default()
    };
    let stats = fit_normalization(&train_tracks).map_err(|e| e.to_string())?;
    let train_windows = make_windows(&train_tracks, cfg.history, cfg.horizons);
    let test_windows = make_windows(&test_tracks, cfg.history, cfg.horizons);
    let ctx = PromptContext::new(cfg.d_txt).map_err(|e| e.to_string())?;
    let samples = prepare_samples(&train_windows, &ctx, &cfg, &stats).map_err(|e| e.to_string())?;
    let (params, _) = train_samples(&samples, &cfg, &tcfg, |_, _| {}).map_err(|e| e.to_string())?;
    let model = TyphoFormer::new(cfg.clone(), params).map_err(|e| e.to_string())?;
    let net = ModelForecaster {
        name: "typhoformer".into(),
        model: &model,
        stats: &stats,
        context: &ctx,
    };
    let models: [&dyn Forecaster; 3] = [&net, &Persistence, &CliperLite];
    let table = evaluate_models(&models, &test_windows, None).map_err(|e| e.to_string())?;
    let dr24 = |m: &str| *table.row(m).unwrap().delta_r.last().unwrap();
    let (ours, pers, clip) = (dr24("typhoformer"), dr24("persistence"), dr24("cliper_lite"));
    let summary = format!(
        "24h ΔR: model {ours:.1} km, persistence {pers:.1} km, cliper_lite {clip:.1} km over {} windows",
        test_windows.len()
    );
    check(ours < pers && ours < clip, summary.clone())?;
    within_budget(start.elapsed(), Duration::from_secs(600))?;
    Ok(summary)
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut argv = vec!["tyfo"];
    argv.extend_from_slice(args);
    let code = cli::main_with_args(argv, &mut out);
    let text = String::from_utf8(out).unwrap();
    check(code == 0, format!("`tyfo {}` exited {code}", args.join(" ")))?;
    Ok(text)
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    let text = format!(
        "data = {}\noutput_dir = {}\nd_model = 16\nd_txt = 16\nd_ff = 32\nn_layers = 1\nepochs = 3\nbatch_size = 64\n{extra}",
        fixture("hurdat2_synthetic.txt").display(),
        dir.join("out").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn c9_table_layout() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_config(dir.path(), "");
    let cfg = cfg.to_str().unwrap();
    run_cli(&["train", "--config", cfg])?;
    let csv_path = dir.path().join("metrics.csv");
    let text = run_cli(&["evaluate", "--config", cfg, "--years", "2024", "--out", csv_path.to_str().unwrap()])?;

    for label in ["All", "2024"] {
        let header = format!("MAE ({label})");
        let idx = text.find(&header).ok_or(format!("no {header} block"))?;
        let block: Vec<&str> = text[idx..].lines().take(5).collect();
        check(block[0].contains(&format!("ΔR (km) ({label})")), format!("{label}: ΔR group header"))?;
        let hours: Vec<&str> = block[1].split(['|', ' ']).filter(|s| s.ends_with('h')).collect();
        check(
            hours == ["6h", "12h", "18h", "24h", "6h", "12h", "18h", "24h"],
            format!("{label}: horizon header {hours:?}"),
        )?;
        let models: Vec<&str> = block[2..].iter().map(|l| l.split('|').next().unwrap().trim()).collect();
        check(
            models == ["cliper_lite", "persistence", "typhoformer"],
            format!("{label}: rows {models:?}"),
        )?;
        for row in &block[2..] {
            let cells: Vec<&str> = row.split('|').collect();
            let values = cells[1].split_whitespace().count() + cells[2].split_whitespace().count();
            check(values == 8, format!("{label}: {values} metric cells in {row:?}"))?;
        }
    }

    let csv = std::fs::read_to_string(&csv_path).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    check(lines.next() == Some("model,horizon_h,metric,value,n"), "CSV header")?;
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    check(rows.len() == 3 * 4 * 2, format!("{} CSV rows", rows.len()))?;
    let n: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[4]).collect();
    check(n.len() == 1, "sample counts differ across models")?;

    let split = split_by_year(&corpus(), &YearSplit::default());
    let test_years: std::collections::BTreeSet<i32> = split.test.iter().map(|t| t.id.year).collect();
    check(
        test_years.iter().all(|y| (2022..=2024).contains(y)) && !test_years.is_empty(),
        "test split years",
    )?;
    within_budget(start.elapsed(), Duration::from_secs(120))?;
    Ok("wide table layout for All and 2024 on the 2022-2024 split".into())
}

fn c10_determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let sub = dir.path().join(run);
        std::fs::create_dir_all(&sub).unwrap();
        let cfg = write_config(&sub, "seed = 1234\n");
        run_cli(&["train", "--config", cfg.to_str().unwrap()])?;
        checkpoints.push(std::fs::read(sub.join("out/checkpoint.tyfo")).map_err(|e| e.to_string())?);
    }
    check(checkpoints[0] == checkpoints[1], "checkpoints differ between identical runs")?;
    ModelCheckpoint::parse(std::str::from_utf8(&checkpoints[0]).unwrap()).map_err(|e| e.to_string())?;

    // Cross-platform: prompt text and embedding bits pinned to literals.
    let (id, r) = parse_merged_line(MILTON_MERGED).map_err(|e| e.to_string())?;
    let prompt = generate_prompt(&id, &r);
    let prompt_digest = fnv1a64(prompt.text.as_bytes());
    check(prompt_digest == PROMPT_DIGEST, format!("prompt digest {prompt_digest:#018x}"))?;
    let e = embed(&prompt.text, 64).map_err(|e| e.to_string())?;
    let bits: Vec<u8> = e.mean.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect();
    let embed_digest = fnv1a64(&bits);
    check(embed_digest == EMBED_DIGEST, format!("embedding digest {embed_digest:#018x}"))?;
    within_budget(start.elapsed(), Duration::from_secs(120))?;
    Ok("bit-identical checkpoints, pinned prompt and embedding digests".into())
}

const EMBED_DIGEST: u64 = 0x9697_5de6_c9be_0930;
const PROMPT_DIGEST: u64 = 0x5d08_857c_76a8_df13;

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 10] = [
        ("1 parser golden + round trip", c1_parser),
        ("2 prompt golden", c2_prompt),
        ("3 gradient check", c3_gradients),
        ("4 PGF invariants", c4_pgf),
        ("5 persistence identity", c5_persistence),
        ("6 metric oracle", c6_metric),
        ("7 overfit five storms", c7_overfit),
        ("8 curvature skill", c8_curvature),
        ("9 wide table layout", c9_table_layout),
        ("10 determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if filter.as_deref().is_some_and(|flt| !name.contains(flt)) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {name} ({secs:.2}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.2}s): {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
