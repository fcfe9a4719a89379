//! Track-error metrics, reference forecasters and comparison tables.
//!
//! MAE is reported in degrees as the mean of |Δlat| and |Δlon|; ΔR is the
//! great-circle distance in km on a sphere of radius 6371 km.

use std::fmt::Write as _;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::context::{ContextError, PromptContext};
use crate::features::{NormalizationStats, Window, CADENCE_HOURS};
use crate::hurdat2::{wrap_lon, StormId};
use crate::model::{ModelError, TyphoFormer};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no forecasts to score")]
    NoData,
    #[error("constant-motion extrapolation needs at least 2 input fixes, got {0}")]
    InsufficientHistory(usize),
    #[error("forecaster {model} returned {got} horizons, expected {expected}")]
    HorizonMismatch {
        model: String,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// Great-circle distance in km between two (lat, lon) points in degrees.
///
/// Spherical law of cosines, with the cosine of the central angle written as
/// `cos(Δφ) − cos φp cos φr (1 − cos Δλ)` (algebraically identical to
/// `sin φp sin φr + cos φp cos φr cos Δλ`) and clamped to [-1, 1].
pub fn delta_r(pred: (f64, f64), truth: (f64, f64)) -> f64 {
    let (phi_p, lam_p) = (pred.0.to_radians(), pred.1.to_radians());
    let (phi_r, lam_r) = (truth.0.to_radians(), truth.1.to_radians());
    let cos_c = (phi_p - phi_r).cos() - phi_p.cos() * phi_r.cos() * (1.0 - (lam_p - lam_r).cos());
    EARTH_RADIUS_KM * cos_c.clamp(-1.0, 1.0).acos()
}

/// Signed longitude difference folded into (-180, 180].
fn lon_diff(a: f64, b: f64) -> f64 {
    wrap_lon(a - b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub storm: StormId,
    pub issue_time: NaiveDateTime,
    /// (lat, lon) degrees per horizon.
    pub predicted: Vec<(f64, f64)>,
    pub truth: Vec<(f64, f64)>,
}

impl ForecastResult {
    pub fn abs_error(&self, k: usize) -> f64 {
        let (p, t) = (self.predicted[k], self.truth[k]);
        0.5 * ((p.0 - t.0).abs() + lon_diff(p.1, t.1).abs())
    }

    pub fn delta_r(&self, k: usize) -> f64 {
        delta_r(self.predicted[k], self.truth[k])
    }
}

fn per_horizon(results: &[ForecastResult], f: impl Fn(&ForecastResult, usize) -> f64) -> Result<Vec<f64>, EvalError> {
    let first = results.first().ok_or(EvalError::NoData)?;
    let k = first.truth.len();
    let mut sums = vec![0.0; k];
    for r in results {
        for (h, s) in sums.iter_mut().enumerate() {
            *s += f(r, h);
        }
    }
    let n = results.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Per-horizon mean of `(|Δlat| + |Δlon|) / 2`, degrees.
pub fn mae(results: &[ForecastResult]) -> Result<Vec<f64>, EvalError> {
    per_horizon(results, ForecastResult::abs_error)
}

/// Per-horizon mean great-circle error, km.
pub fn mean_delta_r(results: &[ForecastResult]) -> Result<Vec<f64>, EvalError> {
    per_horizon(results, ForecastResult::delta_r)
}

/// Every horizon stays at the last observed position.
pub fn persistence(window: &Window) -> Vec<(f64, f64)> {
    vec![window.last_position(); window.horizons()]
}

/// Constant-motion extrapolation: the mean 6-hourly displacement over the
/// last `min(4, T - 1)` steps, applied `k` times for horizon `k`. Plain
/// degree arithmetic, no great-circle correction.
pub fn cliper_lite(window: &Window) -> Result<Vec<(f64, f64)>, EvalError> {
    let recs = &window.input_records;
    if recs.len() < 2 {
        return Err(EvalError::InsufficientHistory(recs.len()));
    }
    let steps = 4.min(recs.len() - 1);
    let last = &recs[recs.len() - 1];
    let base = &recs[recs.len() - 1 - steps];
    let vlat = (last.lat_deg - base.lat_deg) / steps as f64;
    let vlon = lon_diff(last.lon_deg, base.lon_deg) / steps as f64;
    Ok((1..=window.horizons())
        .map(|k| {
            let k = k as f64;
            (
                (last.lat_deg + k * vlat).clamp(-90.0, 90.0),
                wrap_lon(last.lon_deg + k * vlon),
            )
        })
        .collect())
}

pub trait Forecaster {
    fn name(&self) -> &str;
    fn forecast(&self, window: &Window) -> Result<Vec<(f64, f64)>, EvalError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn forecast(&self, window: &Window) -> Result<Vec<(f64, f64)>, EvalError> {
        Ok(persistence(window))
    }
}

/// Motion-persistence stand-in for the CLIPER statistical baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct CliperLite;

impl Forecaster for CliperLite {
    fn name(&self) -> &str {
        "cliper_lite"
    }

    fn forecast(&self, window: &Window) -> Result<Vec<(f64, f64)>, EvalError> {
        cliper_lite(window)
    }
}

/// A trained network with everything needed to forecast raw windows.
pub struct ModelForecaster<'a> {
    pub name: String,
    pub model: &'a TyphoFormer,
    pub stats: &'a NormalizationStats,
    pub context: &'a PromptContext,
}

impl Forecaster for ModelForecaster<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, window: &Window) -> Result<Vec<(f64, f64)>, EvalError> {
        let prompt = self.context.prompt_tensor(window, self.model.config.prompt_mode)?;
        let out = self.model.forward(window, prompt, self.stats)?;
        Ok(out
            .into_iter()
            .map(|(lat, lon)| (lat.clamp(-90.0, 90.0), wrap_lon(lon)))
            .collect())
    }
}

pub fn run_forecaster(
    model: &dyn Forecaster,
    windows: &[Window],
) -> Result<Vec<ForecastResult>, EvalError> {
    windows
        .iter()
        .map(|w| {
            let predicted = model.forecast(w)?;
            if predicted.len() != w.horizons() {
                return Err(EvalError::HorizonMismatch {
                    model: model.name().to_string(),
                    got: predicted.len(),
                    expected: w.horizons(),
                });
            }
            Ok(ForecastResult {
                storm: w.storm.clone(),
                issue_time: w.issue_time(),
                predicted,
                truth: w.targets.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub mae: Vec<f64>,
    pub delta_r: Vec<f64>,
    pub n: usize,
}

/// Models × horizons × {MAE, ΔR}.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub label: String,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn horizons_h(&self) -> Vec<i64> {
        let k = self.rows.first().map_or(0, |r| r.mae.len());
        (1..=k as i64).map(|h| h * CADENCE_HOURS).collect()
    }

    pub fn row(&self, model: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Long format: `model,horizon_h,metric,value,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,horizon_h,metric,value,n\n");
        let hours = self.horizons_h();
        for r in &self.rows {
            for (metric, vals) in [("mae_deg", &r.mae), ("delta_r_km", &r.delta_r)] {
                for (h, v) in hours.iter().zip(vals.iter()) {
                    let _ = writeln!(out, "{},{h},{metric},{v},{}", r.model, r.n);
                }
            }
        }
        out
    }

    /// Wide layout: one row per model, MAE columns then ΔR columns, under a
    /// two-row header grouping the horizons by metric and split.
    pub fn to_wide_table(&self) -> String {
        let hours = self.horizons_h();
        let k = hours.len();
        let (mae_w, dr_w) = (k * 8, k * 10);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# MAE: degrees, mean of |dlat| and |dlon|. ΔR: great-circle km, Re = {EARTH_RADIUS_KM} km."
        );
        let _ = writeln!(
            out,
            "{:<14}|{:^mae_w$}|{:^dr_w$}|",
            "Models",
            format!("MAE ({})", self.label),
            format!("ΔR (km) ({})", self.label),
        );
        let mut line = format!("{:<14}|", "");
        for h in &hours {
            line.push_str(&format!("{:>8}", format!("{h}h")));
        }
        line.push('|');
        for h in &hours {
            line.push_str(&format!("{:>10}", format!("{h}h")));
        }
        let _ = writeln!(out, "{line}| {:>6}", "n");
        for r in &self.rows {
            let mut line = format!("{:<14}|", r.model);
            for v in &r.mae {
                line.push_str(&format!("{v:>8.3}"));
            }
            line.push('|');
            for v in &r.delta_r {
                line.push_str(&format!("{v:>10.3}"));
            }
            let _ = writeln!(out, "{line}| {:>6}", r.n);
        }
        out
    }
}

/// Scores every model on the same windows. With `years`, only storms from
/// those seasons are kept.
pub fn evaluate_models(
    models: &[&dyn Forecaster],
    windows: &[Window],
    years: Option<&[i32]>,
) -> Result<MetricTable, EvalError> {
    let selected: Vec<Window> = windows
        .iter()
        .filter(|w| years.is_none_or(|ys| ys.contains(&w.storm.year)))
        .cloned()
        .collect();
    if selected.is_empty() {
        return Err(EvalError::NoData);
    }
    let label = match years {
        None => "All".to_string(),
        Some(ys) => ys.iter().map(i32::to_string).collect::<Vec<_>>().join(","),
    };
    let mut rows = Vec::with_capacity(models.len());
    for m in models {
        let results = run_forecaster(*m, &selected)?;
        rows.push(MetricRow {
            model: m.name().to_string(),
            mae: mae(&results)?,
            delta_r: mean_delta_r(&results)?,
            n: results.len(),
        });
    }
    Ok(MetricTable { label, rows })
}

/// Per-window dump: `model,storm,issue_time,horizon_h,pred_lat,pred_lon,true_lat,true_lon,delta_r_km`.
pub fn forecasts_to_csv(model: &str, results: &[ForecastResult]) -> String {
    let mut out = String::from(
        "model,storm,issue_time,horizon_h,pred_lat,pred_lon,true_lat,true_lon,delta_r_km\n",
    );
    for r in results {
        for k in 0..r.predicted.len() {
            let (p, t) = (r.predicted[k], r.truth[k]);
            let _ = writeln!(
                out,
                "{model},{},{},{},{},{},{},{},{}",
                r.storm.key(),
                r.issue_time.format("%Y%m%d%H%M"),
                (k as i64 + 1) * CADENCE_HOURS,
                p.0,
                p.1,
                t.0,
                t.1,
                r.delta_r(k)
            );
        }
    }
    out
}
