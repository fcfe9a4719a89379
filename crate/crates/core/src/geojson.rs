//! Forecast CSV rows and their GeoJSON rendering.
//!
//! A forecast CSV has the header `model,storm,issue_time,horizon_h,lat,lon`.
//! The `observed` model carries the input history (`horizon_h <= 0`) and
//! `truth` carries the verifying best-track positions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDateTime;
use serde_json::{json, Value};
use thiserror::Error;

pub const FORECAST_HEADER: &str = "model,storm,issue_time,horizon_h,lat,lon";
pub const OBSERVED: &str = "observed";
pub const TRUTH: &str = "truth";
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%MZ";

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("line {line_no}: {reason}")]
    Malformed { line_no: usize, reason: String },
    #[error("forecast file has no rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub model: String,
    pub storm: String,
    pub issue_time: NaiveDateTime,
    pub horizon_h: i64,
    pub lat: f64,
    pub lon: f64,
}

pub fn format_time(ts: &NaiveDateTime) -> String {
    ts.format(TIME_FORMAT).to_string()
}

pub fn render_forecast_csv(points: &[TrackPoint]) -> String {
    let mut out = format!("{FORECAST_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4}",
            p.model,
            p.storm,
            format_time(&p.issue_time),
            p.horizon_h,
            p.lat,
            p.lon
        );
    }
    out
}

pub fn parse_forecast_csv(text: &str) -> Result<Vec<TrackPoint>, GeoJsonError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == FORECAST_HEADER => {}
        Some((idx, _)) => {
            return Err(GeoJsonError::Malformed {
                line_no: idx + 1,
                reason: format!("expected header {FORECAST_HEADER}"),
            })
        }
        None => return Err(GeoJsonError::Empty),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let bad = |reason: String| GeoJsonError::Malformed {
            line_no: idx + 1,
            reason,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let [model, storm, issue, h, lat, lon] = f[..] else {
            return Err(bad(format!("expected 6 fields, found {}", f.len())));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}")));
        let (lat, lon) = (num(lat)?, num(lon)?);
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(bad(format!("position ({lat}, {lon}) out of range")));
        }
        out.push(TrackPoint {
            model: model.to_string(),
            storm: storm.to_string(),
            issue_time: NaiveDateTime::parse_from_str(issue, TIME_FORMAT)
                .map_err(|e| bad(format!("bad issue time {issue:?}: {e}")))?,
            horizon_h: h.parse().map_err(|e| bad(format!("bad horizon {h:?}: {e}")))?,
            lat,
            lon,
        });
    }
    if out.is_empty() {
        return Err(GeoJsonError::Empty);
    }
    Ok(out)
}

/// One LineString per (storm, issue time, model), ordered by horizon.
/// Coordinates are `[lon, lat]`. Forecast lines start at the last observed
/// fix when one is present so they join the history line on a map.
pub fn to_feature_collection(points: &[TrackPoint]) -> Value {
    type Key<'a> = (&'a str, NaiveDateTime, &'a str);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Vec<&TrackPoint>> = BTreeMap::new();
    for p in points {
        let key = (p.storm.as_str(), p.issue_time, p.model.as_str());
        groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&key).unwrap().push(p);
    }

    let features: Vec<Value> = order
        .iter()
        .map(|key| {
            let mut pts = groups[key].clone();
            pts.sort_by_key(|p| p.horizon_h);
            let (storm, issue, model) = *key;
            if model != OBSERVED {
                if let Some(origin) = groups
                    .get(&(storm, issue, OBSERVED))
                    .and_then(|o| o.iter().find(|p| p.horizon_h == 0))
                {
                    if pts.first().is_some_and(|p| p.horizon_h > 0) {
                        pts.insert(0, origin);
                    }
                }
            }
            let coords: Vec<Value> = pts.iter().map(|p| json!([p.lon, p.lat])).collect();
            let horizons: Vec<i64> = pts.iter().map(|p| p.horizon_h).collect();
            let geometry = if coords.len() == 1 {
                json!({"type": "Point", "coordinates": coords[0]})
            } else {
                json!({"type": "LineString", "coordinates": coords})
            };
            json!({
                "type": "Feature",
                "geometry": geometry,
                "properties": {
                    "model": model,
                    "storm": storm,
                    "issue_time": format_time(&issue),
                    "horizon_h": horizons,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
