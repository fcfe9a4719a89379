//! `tyfo` command-line verbs.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric
//! divergence during training.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::checkpoint::ModelCheckpoint;
use crate::config::{load_config, ConfigError, RunConfig};
use crate::context::PromptContext;
use crate::embed::{load_embeddings, render_embedding_line, HashedEmbedder, TextEmbedder, DEFAULT_TEXT_DIM};
use crate::eval::{evaluate_models, forecasts_to_csv, run_forecaster, CliperLite, Forecaster, ModelForecaster, Persistence};
use crate::features::{fit_normalization, make_windows, split_by_year, SplitTracks, Window, CADENCE_HOURS};
use crate::geojson::{parse_forecast_csv, render_forecast_csv, to_feature_collection, TrackPoint, OBSERVED, TRUTH};
use crate::hurdat2::{parse_hurdat2, render_hurdat2, StormTrack};
use crate::model::TyphoFormer;
use crate::prompt::{load_prompts, render_prompt_line, PromptBook};
use crate::train::{prepare_samples, train_samples, TrainError};

pub const MODEL_NAME: &str = "typhoformer";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

fn data_err(context: impl std::fmt::Display) -> impl FnOnce(String) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

fn io<T, E: std::fmt::Display>(r: Result<T, E>, what: &Path) -> Result<T, CliError> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", what.display())))
}

#[derive(Debug, Parser)]
#[command(name = "tyfo", version, about = "Prompt-augmented transformer for tropical cyclone track forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a HURDAT2 file and write its canonical rendering.
    Parse { input: PathBuf, output: PathBuf },
    /// Write the prompt cache for every record.
    Prompt {
        input: PathBuf,
        output: PathBuf,
        /// Existing cache whose prompts replace the template text.
        #[arg(long = "import")]
        import: Option<PathBuf>,
    },
    /// Write pooled prompt embeddings for every record.
    Embed {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TEXT_DIM)]
        dim: usize,
        /// Prompt cache to embed instead of the template text.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
    /// Train on the configured split and write a checkpoint and loss report.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score the model and baselines on the test split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the checkpoint in the configured output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated seasons, e.g. `2024`.
        #[arg(long)]
        years: Option<String>,
        /// Metric CSV path; defaults to `metrics.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-window forecasts of every model.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Forecast one window identified by storm and issue time.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `AL142024` or `AL142024_MILTON`.
        #[arg(long)]
        storm: String,
        /// Issue time (last observed fix), e.g. `202410090000`.
        #[arg(long)]
        start: String,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a forecast CSV, or a fresh forecast, to GeoJSON.
    ExportGeojson {
        #[arg(long, conflicts_with_all = ["config", "storm", "start"])]
        forecast: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        storm: Option<String>,
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first) and runs. Returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Parse { input, output } => cmd_parse(&input, &output, out),
        Command::Prompt { input, output, import } => cmd_prompt(&input, &output, import.as_deref(), out),
        Command::Embed { input, output, dim, prompts } => {
            cmd_embed(&input, &output, dim, prompts.as_deref(), out)
        }
        Command::Train { config } => cmd_train(&config, out),
        Command::Evaluate { config, checkpoint, years, out: dest, dump } => {
            cmd_evaluate(&config, checkpoint.as_deref(), years.as_deref(), dest.as_deref(), dump.as_deref(), out)
        }
        Command::Forecast { config, checkpoint, storm, start, out: dest } => {
            let points = forecast_points(&config, checkpoint.as_deref(), &storm, &start)?;
            let text = render_forecast_csv(&points);
            match dest {
                Some(p) => io(fs::write(&p, text), &p),
                None => io(out.write_all(text.as_bytes()), Path::new("stdout")),
            }
        }
        Command::ExportGeojson { forecast, config, checkpoint, storm, start, out: dest } => {
            let points = match (forecast, config, storm, start) {
                (Some(f), ..) => {
                    let text = io(fs::read_to_string(&f), &f)?;
                    parse_forecast_csv(&text).map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?
                }
                (None, Some(c), Some(s), Some(t)) => forecast_points(&c, checkpoint.as_deref(), &s, &t)?,
                _ => {
                    return Err(CliError::Usage(
                        "export-geojson needs --forecast, or --config with --storm and --start".into(),
                    ))
                }
            };
            let fc = to_feature_collection(&points);
            let text = serde_json::to_string_pretty(&fc).expect("GeoJSON values serialize");
            io(fs::write(&dest, text + "\n"), &dest)?;
            let n = fc["features"].as_array().map_or(0, Vec::len);
            let _ = writeln!(out, "wrote {n} features to {}", dest.display());
            Ok(())
        }
    }
}

fn read_tracks(path: &Path) -> Result<Vec<StormTrack>, CliError> {
    let text = io(fs::read_to_string(path), path)?;
    parse_hurdat2(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_parse(input: &Path, output: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let tracks = read_tracks(input)?;
    io(fs::write(output, render_hurdat2(&tracks)), output)?;
    let records: usize = tracks.iter().map(StormTrack::len).sum();
    let _ = writeln!(out, "{} storms, {records} records", tracks.len());
    for t in &tracks {
        let _ = writeln!(out, "{} {} {}", t.id, t.id.name, t.len());
    }
    Ok(())
}

fn cmd_prompt(input: &Path, output: &Path, import: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let tracks = read_tracks(input)?;
    let overrides = match import {
        Some(p) => load_prompts(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => Default::default(),
    };
    let book = PromptBook::new(overrides);
    let mut text = String::new();
    let mut n = 0;
    for t in &tracks {
        for r in &t.records {
            text.push_str(&render_prompt_line(&book.prompt(&t.id, r)));
            text.push('\n');
            n += 1;
        }
    }
    io(fs::write(output, text), output)?;
    let _ = writeln!(out, "{n} prompts ({} imported)", book.imported());
    Ok(())
}

fn cmd_embed(
    input: &Path,
    output: &Path,
    dim: usize,
    prompts: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let tracks = read_tracks(input)?;
    let embedder = HashedEmbedder::new(dim).map_err(|e| CliError::Usage(e.to_string()))?;
    let overrides = match prompts {
        Some(p) => load_prompts(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => Default::default(),
    };
    let book = PromptBook::new(overrides);
    let mut text = String::new();
    let mut n = 0;
    for t in &tracks {
        for r in &t.records {
            let p = book.prompt(&t.id, r);
            let e = embedder.embed(&p.text).map_err(|e| CliError::Data(e.to_string()))?;
            text.push_str(&render_embedding_line(&p.key(), &e));
            text.push('\n');
            n += 1;
        }
    }
    io(fs::write(output, text), output)?;
    let _ = writeln!(out, "{n} embeddings, dim {dim}");
    Ok(())
}

/// Config, parsed tracks, year split and prompt context of one run.
struct Pipeline {
    cfg: RunConfig,
    tracks: Vec<StormTrack>,
    split: SplitTracks,
    context: PromptContext,
}

impl Pipeline {
    fn load(config: &Path) -> Result<Self, CliError> {
        let cfg = load_config(config)?;
        let tracks = read_tracks(&cfg.data)?;
        let split = split_by_year(&tracks, &cfg.split);
        let mut context = PromptContext::new(cfg.model.d_txt).map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(p) = &cfg.prompts_import {
            context = context.with_prompts(load_prompts(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?);
        }
        if let Some(p) = &cfg.embeddings_import {
            let emb = load_embeddings(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            context = context.with_embeddings(emb).map_err(|e| CliError::Data(e.to_string()))?;
        }
        Ok(Self { cfg, tracks, split, context })
    }

    fn windows(&self, tracks: &[StormTrack]) -> Vec<Window> {
        make_windows(tracks, self.cfg.model.history, self.cfg.model.horizons)
    }

    fn load_model(&self, checkpoint: Option<&Path>) -> Result<(TyphoFormer, ModelCheckpoint), CliError> {
        let path = checkpoint.map_or_else(|| self.cfg.checkpoint_path(), Path::to_path_buf);
        let ck = ModelCheckpoint::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let model = TyphoFormer::new(self.cfg.model.clone(), ck.params.clone())
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok((model, ck))
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::DivergedLoss { .. } => CliError::Diverged(e.to_string()),
        TrainError::Config(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn cmd_train(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let p = Pipeline::load(config)?;
    let cfg = &p.cfg;
    let stats = fit_normalization(&p.split.train).map_err(|e| CliError::Data(e.to_string()))?;
    let windows = p.windows(&p.split.train);
    let _ = writeln!(
        out,
        "train: {} storms, {} windows (seasons {}-{}), seed {}",
        p.split.train.len(),
        windows.len(),
        cfg.split.train.start(),
        cfg.split.train.end(),
        cfg.train.seed
    );
    let samples = prepare_samples(&windows, &p.context, &cfg.model, &stats).map_err(train_error)?;
    io(fs::create_dir_all(&cfg.output_dir), &cfg.output_dir)?;

    let mut save_error = None;
    let (params, mut report) = train_samples(&samples, &cfg.model, &cfg.train, |ep, params| {
        let _ = writeln!(out, "epoch {:>4} loss {:.6e}", ep.epoch, ep.loss);
        if cfg.checkpoint_every > 0 && ep.epoch % cfg.checkpoint_every == 0 && ep.epoch < cfg.train.epochs {
            let path = cfg.output_dir.join(format!("checkpoint_epoch{:04}.tyfo", ep.epoch));
            let ck = ModelCheckpoint { params: params.clone(), stats: stats.clone() };
            if let Err(e) = ck.save(&path) {
                save_error.get_or_insert_with(|| format!("{}: {e}", path.display()));
            }
        }
    })
    .map_err(train_error)?;
    if let Some(e) = save_error {
        return Err(CliError::Data(e));
    }

    let path = cfg.checkpoint_path();
    ModelCheckpoint { params, stats }
        .save(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    report.checkpoint_path = Some(path.clone());
    let report_path = cfg.report_path();
    io(fs::write(&report_path, report.to_csv()), &report_path)?;
    let _ = writeln!(
        out,
        "wrote {} and {} ({:.1} s)",
        path.display(),
        report_path.display(),
        report.wall_seconds
    );
    Ok(())
}

fn parse_years(s: &str) -> Result<Vec<i32>, CliError> {
    s.split(',')
        .map(|y| y.trim().parse().map_err(|_| CliError::Usage(format!("bad --years entry {y:?}"))))
        .collect()
}

fn cmd_evaluate(
    config: &Path,
    checkpoint: Option<&Path>,
    years: Option<&str>,
    dest: Option<&Path>,
    dump: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let years = years.map(parse_years).transpose()?;
    let p = Pipeline::load(config)?;
    let (model, ck) = p.load_model(checkpoint)?;
    let windows = p.windows(&p.split.test);
    let net = ModelForecaster {
        name: MODEL_NAME.into(),
        model: &model,
        stats: &ck.stats,
        context: &p.context,
    };
    let models: [&dyn Forecaster; 3] = [&CliperLite, &Persistence, &net];
    let eval = |ys: Option<&[i32]>| evaluate_models(&models, &windows, ys).map_err(|e| CliError::Data(e.to_string()));

    let all = eval(None)?;
    let _ = write!(out, "{}", all.to_wide_table());
    let table = match &years {
        Some(ys) => {
            let t = eval(Some(ys))?;
            let _ = write!(out, "\n{}", t.to_wide_table());
            t
        }
        None => all,
    };
    let dest = dest.map_or_else(|| p.cfg.output_dir.join("metrics.csv"), Path::to_path_buf);
    io(fs::write(&dest, table.to_csv()), &dest)?;
    let _ = writeln!(out, "wrote {}", dest.display());

    if let Some(dump) = dump {
        let mut text = String::new();
        for m in models {
            let results = run_forecaster(m, &windows).map_err(|e| CliError::Data(e.to_string()))?;
            let csv = forecasts_to_csv(m.name(), &results);
            // keep a single header
            let body = if text.is_empty() { csv.as_str() } else { csv.split_once('\n').map_or("", |(_, b)| b) };
            text.push_str(body);
        }
        io(fs::write(dump, text), dump)?;
    }
    Ok(())
}

pub fn parse_issue_time(s: &str) -> Result<NaiveDateTime, CliError> {
    let s = s.trim().trim_end_matches('Z');
    ["%Y%m%d%H%M", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .ok_or_else(|| CliError::Usage(format!("bad timestamp {s:?}, expected YYYYMMDDHHMM")))
}

fn forecast_points(
    config: &Path,
    checkpoint: Option<&Path>,
    storm: &str,
    start: &str,
) -> Result<Vec<TrackPoint>, CliError> {
    let issue = parse_issue_time(start)?;
    let p = Pipeline::load(config)?;
    let (model, ck) = p.load_model(checkpoint)?;
    let matches_storm = |t: &&StormTrack| {
        t.id.code().eq_ignore_ascii_case(storm) || t.id.key().eq_ignore_ascii_case(storm)
    };
    let track = p
        .tracks
        .iter()
        .find(matches_storm)
        .ok_or_else(|| CliError::Data(format!("storm {storm} not in {}", p.cfg.data.display())))?;
    let window = p
        .windows(std::slice::from_ref(track))
        .into_iter()
        .find(|w| w.issue_time() == issue)
        .ok_or_else(|| {
            data_err(format!("{storm} at {issue}"))(format!(
                "no window with {} consecutive 6-hourly fixes ending there and {} after",
                p.cfg.model.history, p.cfg.model.horizons
            ))
        })?;

    let net = ModelForecaster {
        name: MODEL_NAME.into(),
        model: &model,
        stats: &ck.stats,
        context: &p.context,
    };
    let code = track.id.code();
    let point = |model: &str, h: i64, (lat, lon): (f64, f64)| TrackPoint {
        model: model.to_string(),
        storm: code.clone(),
        issue_time: issue,
        horizon_h: h,
        lat,
        lon,
    };
    let t = window.history() as i64;
    let mut points: Vec<TrackPoint> = window
        .input_records
        .iter()
        .enumerate()
        .map(|(i, r)| point(OBSERVED, (i as i64 - t + 1) * CADENCE_HOURS, (r.lat_deg, r.lon_deg)))
        .collect();
    for m in [&net as &dyn Forecaster, &Persistence, &CliperLite] {
        let pred = m.forecast(&window).map_err(|e| CliError::Data(e.to_string()))?;
        points.extend(pred.into_iter().enumerate().map(|(k, pos)| point(m.name(), (k as i64 + 1) * CADENCE_HOURS, pos)));
    }
    points.extend(
        window
            .targets
            .iter()
            .enumerate()
            .map(|(k, &pos)| point(TRUTH, (k as i64 + 1) * CADENCE_HOURS, pos)),
    );
    Ok(points)
}
