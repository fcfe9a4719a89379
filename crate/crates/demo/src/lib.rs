//! Browser bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page has one code path and the functions can be
//! exercised natively.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use typhoformer::autodiff::{Tape, Tensor};
use typhoformer::embed::{embed, tokenize};
use typhoformer::eval::{cliper_lite, delta_r, persistence};
use typhoformer::features::make_windows;
use typhoformer::hurdat2::{parse_merged_line, Basin, StormId};
use typhoformer::model::{pgf_fuse, ModelParams};
use typhoformer::prompt::generate_prompt;
use typhoformer::synth::TurningTrack;

const HISTORY: usize = 8;
const HORIZONS: usize = 4;
const TRACK_LEN: usize = 28;

fn respond(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn pairs(v: &[(f64, f64)]) -> Value {
    v.iter().map(|&(lat, lon)| json!([lat, lon])).collect()
}

/// Synthetic storm turning at a constant rate, forecast from the window whose
/// last observed fix is `issue_step`. Returns the full track, the observed
/// history, truth, both baselines and their per-horizon great-circle error.
#[wasm_bindgen]
pub fn turning_forecast(heading_deg: f64, speed_deg: f64, turn_deg: f64, issue_step: u32) -> String {
    respond(turning_forecast_impl(heading_deg, speed_deg, turn_deg, issue_step as usize))
}

fn turning_forecast_impl(heading_deg: f64, speed_deg: f64, turn_deg: f64, issue_step: usize) -> Result<Value, String> {
    if ![heading_deg, speed_deg, turn_deg].iter().all(|v| v.is_finite()) {
        return Err("parameters must be finite".into());
    }
    if !(0.0..=3.0).contains(&speed_deg) {
        return Err("speed must be within 0..3 degrees per 6 h".into());
    }
    let spec = TurningTrack {
        id: StormId::new(Basin::AL, 1, 2024, "DEMO"),
        start: NaiveDate::from_ymd_opt(2024, 9, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
        start_lat: 15.0,
        start_lon: -45.0,
        heading_deg,
        speed_deg,
        turn_deg,
        records: TRACK_LEN,
        peak_wind_kt: 120,
        quantize: true,
    };
    let track = spec.build();
    let windows = make_windows(std::slice::from_ref(&track), HISTORY, HORIZONS);
    let first = HISTORY - 1;
    let last = first + windows.len().saturating_sub(1);
    if !(first..=last).contains(&issue_step) {
        return Err(format!("issue step must be within {first}..={last}"));
    }
    let w = &windows[issue_step - first];
    let pers = persistence(w);
    let clip = cliper_lite(w).map_err(|e| e.to_string())?;
    let errors = |pred: &[(f64, f64)]| -> Vec<f64> { pred.iter().zip(&w.targets).map(|(&p, &t)| delta_r(p, t)).collect() };
    let observed: Vec<(f64, f64)> = w.input_records.iter().map(|r| (r.lat_deg, r.lon_deg)).collect();
    let track_pos: Vec<(f64, f64)> = track.records.iter().map(|r| (r.lat_deg, r.lon_deg)).collect();
    Ok(json!({
        "track": pairs(&track_pos),
        "issue_time": w.issue_time().format("%Y-%m-%d %H:%MZ").to_string(),
        "observed": pairs(&observed),
        "truth": pairs(&w.targets),
        "persistence": pairs(&pers),
        "cliper_lite": pairs(&clip),
        "delta_r_km": { "persistence": errors(&pers), "cliper_lite": errors(&clip) },
        "horizons_h": (1..=HORIZONS).map(|k| k * 6).collect::<Vec<_>>(),
    }))
}

/// Prompt text for one merged best-track line
/// (`AL142024_MILTON,20241010,0030,L,HU,27.4N,82.6W,...`) with its tokens and
/// the first components of the pooled hashed embedding.
#[wasm_bindgen]
pub fn describe_fix(line: &str, dim: u32) -> String {
    respond(describe_fix_impl(line, dim as usize))
}

fn describe_fix_impl(line: &str, dim: usize) -> Result<Value, String> {
    let (id, record) = parse_merged_line(line.trim()).map_err(|e| e.to_string())?;
    let prompt = generate_prompt(&id, &record);
    let tokens = tokenize(&prompt.text).map_err(|e| e.to_string())?;
    let e = embed(&prompt.text, dim).map_err(|e| e.to_string())?;
    let norm = e.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(json!({
        "storm": id.key(),
        "prompt": prompt.text,
        "tokens": tokens,
        "embedding": e.mean,
        "embedding_norm": norm,
    }))
}

/// Gated fusion on one time step with a gate of the form
/// `σ(w (x_d + p_d) + b)` per dimension. Returns the gate and the blend.
#[wasm_bindgen]
pub fn pgf_blend(x: &[f64], p: &[f64], weight: f64, bias: f64) -> String {
    respond(pgf_blend_impl(x, p, weight, bias))
}

fn pgf_blend_impl(x: &[f64], p: &[f64], weight: f64, bias: f64) -> Result<Value, String> {
    let d = x.len();
    if d == 0 || p.len() != d {
        return Err(format!("x and p need the same nonzero length, got {d} and {}", p.len()));
    }
    // [I; I] scaled by weight, so the gate sees x_d + p_d
    let mut w = vec![0.0; 2 * d * d];
    for i in 0..d {
        w[i * d + i] = weight;
        w[(d + i) * d + i] = weight;
    }
    let tensor = |shape: Vec<usize>, v: Vec<f64>| Tensor::new(shape, v).map_err(|e| e.to_string());
    let params = ModelParams::from_tensors(BTreeMap::from([
        ("pgf.w_g".to_string(), tensor(vec![2 * d, d], w)?),
        ("pgf.b_g".to_string(), tensor(vec![d], vec![bias; d])?),
    ]));
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let xv = tape.leaf(tensor(vec![1, d], x.to_vec())?);
    let pv = tape.leaf(tensor(vec![1, d], p.to_vec())?);
    let fused = pgf_fuse(&mut tape, &bound, xv, pv).map_err(|e| e.to_string())?;
    let fused = tape.value(fused).data().to_vec();
    let gate: Vec<f64> = x
        .iter()
        .zip(p)
        .zip(&fused)
        .map(|((&xi, &pi), &f)| if xi == pi { f64::NAN } else { (f - pi) / (xi - pi) })
        .collect();
    Ok(json!({ "fused": fused, "gate": gate }))
}
