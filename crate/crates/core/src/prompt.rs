//! Rule-based natural-language descriptions of best-track fixes, plus the
//! `|`-separated prompt cache used to import externally generated text.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::hurdat2::{StormId, StormRecord};

pub type PromptKey = (StormId, NaiveDateTime);

const TS_FORMAT: &str = "%Y%m%d%H%M";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("line {line_no}: duplicate prompt key {key}")]
    DuplicateKey { line_no: usize, key: String },
    #[error("line {line_no}: {reason}")]
    MalformedPromptFile { line_no: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub storm: StormId,
    pub timestamp: NaiveDateTime,
    pub text: String,
}

impl PromptText {
    pub fn key(&self) -> PromptKey {
        (self.storm.clone(), self.timestamp)
    }
}

fn status_name(code: &str) -> &'static str {
    match code {
        "HU" => "Hurricane",
        "TS" => "Tropical Storm",
        "TD" => "Tropical Depression",
        "EX" => "Extratropical Cyclone",
        "SS" => "Subtropical Storm",
        "SD" => "Subtropical Depression",
        "LO" => "Low",
        "WV" => "Tropical Wave",
        "DB" => "Disturbance",
        _ => "Cyclone",
    }
}

const QUADRANTS: [&str; 4] = ["northeast", "southeast", "southwest", "northwest"];

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

/// Describes the extent of one wind band over its non-missing quadrants.
fn quadrant_phrase(values: &[i32; 4], missing: &[bool; 4]) -> Option<String> {
    let present: Vec<usize> = (0..4).filter(|&q| !missing[q]).collect();
    if present.is_empty() {
        return None;
    }
    if present.len() == 4 {
        let [ne, se, sw, nw] = *values;
        if ne == se && se == sw && sw == nw {
            return Some(format!("{ne} km in all four quadrants"));
        }
        if ne == se {
            let rest = if sw == nw {
                format!("{sw} km in both the southwest and northwest")
            } else {
                format!("{sw} km and {nw} km in the southwest and northwest quadrants, respectively")
            };
            return Some(format!("{ne} km in both the northeast and southeast, and {rest}"));
        }
    }
    let items: Vec<String> = present
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            if i == 0 {
                format!("{} km in the {} quadrant", values[q], QUADRANTS[q])
            } else {
                format!("{} km in the {}", values[q], QUADRANTS[q])
            }
        })
        .collect();
    Some(join_list(&items))
}

/// Renders the description of `record`. Clauses whose source fields are
/// missing are left out. Radii are echoed as stored with a `km` label.
pub fn generate_prompt(id: &StormId, record: &StormRecord) -> PromptText {
    let ts = record.timestamp;
    let m = &record.missing;
    let mut sentences = Vec::with_capacity(6);

    let who = if id.name == "UNNAMED" {
        format!("{} {id}", status_name(&record.status))
    } else {
        format!("{} {} ({id})", status_name(&record.status), id.name)
    };
    sentences.push(format!(
        "At {} UTC on {}, {who} was located at {:.1}°{}, {:.1}°{}.",
        ts.format("%H:%M"),
        ts.format("%B %-d, %Y"),
        record.lat_deg.abs(),
        if record.lat_deg < 0.0 { 'S' } else { 'N' },
        record.lon_deg.abs(),
        if record.lon_deg < 0.0 { 'W' } else { 'E' },
    ));

    match (m.max_wind, m.min_pressure) {
        (false, false) => sentences.push(format!(
            "The storm had maximum sustained winds of {} knots and a central pressure of {} hPa.",
            record.max_wind_kt, record.min_pressure_mb
        )),
        (false, true) => sentences.push(format!(
            "The storm had maximum sustained winds of {} knots.",
            record.max_wind_kt
        )),
        (true, false) => sentences.push(format!(
            "The storm had a central pressure of {} hPa.",
            record.min_pressure_mb
        )),
        (true, true) => {}
    }

    let r34 = quadrant_phrase(&record.wind_radii_34, &m.radii_34);
    let has_34 = r34.is_some();
    if let Some(p) = r34 {
        sentences.push(format!("The radius of 34-knot winds extended {p}."));
    }
    if let Some(p) = quadrant_phrase(&record.wind_radii_50, &m.radii_50) {
        let lead = if has_34 { "Meanwhile, the" } else { "The" };
        sentences.push(format!("{lead} radius of 50-knot winds reached {p}."));
    }
    if let Some(p) = quadrant_phrase(&record.wind_radii_64, &m.radii_64) {
        sentences.push(format!("For 64-knot hurricane-force winds, the extent was {p}."));
    }
    if let Some(rmw) = record.radius_max_wind() {
        sentences.push(format!("The radius of the eye was estimated at {rmw} km."));
    }

    PromptText {
        storm: id.clone(),
        timestamp: ts,
        text: sentences.join(" "),
    }
}

/// One cache line: `BBNNYYYY_NAME|YYYYMMDDHHMM|text`.
pub fn render_prompt_line(p: &PromptText) -> String {
    let text: String = p
        .text
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    format!("{}|{}|{}", p.storm.key(), p.timestamp.format(TS_FORMAT), text)
}

pub fn parse_prompt_key(storm: &str, ts: &str) -> Result<PromptKey, String> {
    let id = StormId::parse_key(storm)?;
    let ts = NaiveDateTime::parse_from_str(ts, TS_FORMAT)
        .map_err(|e| format!("bad timestamp {ts:?}: {e}"))?;
    Ok((id, ts))
}

pub fn parse_prompt_cache(text: &str) -> Result<HashMap<PromptKey, PromptText>, PromptError> {
    let mut out = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '|');
        let (Some(storm), Some(ts), Some(body)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(PromptError::MalformedPromptFile {
                line_no,
                reason: "expected BBNNYYYY_NAME|YYYYMMDDHHMM|text".into(),
            });
        };
        let key = parse_prompt_key(storm.trim(), ts.trim())
            .map_err(|reason| PromptError::MalformedPromptFile { line_no, reason })?;
        if body.trim().is_empty() {
            return Err(PromptError::MalformedPromptFile {
                line_no,
                reason: "empty prompt text".into(),
            });
        }
        if out.contains_key(&key) {
            return Err(PromptError::DuplicateKey {
                line_no,
                key: format!("{}|{}", storm.trim(), ts.trim()),
            });
        }
        let prompt = PromptText {
            storm: key.0.clone(),
            timestamp: key.1,
            text: body.to_string(),
        };
        out.insert(key, prompt);
    }
    Ok(out)
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<HashMap<PromptKey, PromptText>, PromptError> {
    parse_prompt_cache(&std::fs::read_to_string(path)?)
}

/// Imported prompts with template fallback.
#[derive(Debug, Clone, Default)]
pub struct PromptBook {
    overrides: HashMap<PromptKey, PromptText>,
}

impl PromptBook {
    pub fn new(overrides: HashMap<PromptKey, PromptText>) -> Self {
        Self { overrides }
    }

    pub fn imported(&self) -> usize {
        self.overrides.len()
    }

    pub fn prompt(&self, id: &StormId, record: &StormRecord) -> PromptText {
        self.overrides
            .get(&(id.clone(), record.timestamp))
            .cloned()
            .unwrap_or_else(|| generate_prompt(id, record))
    }
}
