//! HURDAT2 best-track format: storm headers followed by fixed-cadence data
//! lines. Also handles the single-line `BBNNYYYY_NAME,...` variant in which
//! the storm identity is folded into every record.
//!
//! Longitudes are stored signed east-positive in (-180, 180]. The `-999`
//! sentinel is replaced by 0 and flagged in [`MissingMask`].

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

pub const MISSING: i32 = -999;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("storm {storm_id}: header declares {declared} records, found {actual}")]
    CountMismatch {
        storm_id: String,
        declared: usize,
        actual: usize,
    },
    #[error("storm {storm_id}: line {line_no} is not after the previous record")]
    NonChronological { storm_id: String, line_no: usize },
}

impl ParseError {
    pub fn line_no(&self) -> Option<usize> {
        match self {
            ParseError::MalformedLine { line_no, .. }
            | ParseError::NonChronological { line_no, .. } => Some(*line_no),
            ParseError::CountMismatch { .. } => None,
        }
    }
}

fn malformed(line_no: usize, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedLine {
        line_no,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basin {
    /// North Atlantic
    AL,
    /// Eastern North Pacific
    EP,
    /// Central North Pacific
    CP,
}

impl Basin {
    pub fn code(self) -> &'static str {
        match self {
            Basin::AL => "AL",
            Basin::EP => "EP",
            Basin::CP => "CP",
        }
    }
}

impl FromStr for Basin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AL" => Ok(Basin::AL),
            "EP" => Ok(Basin::EP),
            "CP" => Ok(Basin::CP),
            other => Err(format!("unknown basin {other:?}")),
        }
    }
}

/// Storm identity. Displays as the 8-character ATCF code, e.g. `AL142024`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StormId {
    pub basin: Basin,
    pub number: u8,
    pub year: i32,
    pub name: String,
}

impl StormId {
    pub fn new(basin: Basin, number: u8, year: i32, name: impl Into<String>) -> Self {
        Self {
            basin,
            number,
            year,
            name: name.into(),
        }
    }

    /// Parses the 8-character `BBNNYYYY` code.
    pub fn parse_code(code: &str, name: &str) -> Result<Self, String> {
        if code.len() != 8 || !code.is_ascii() {
            return Err(format!("storm code {code:?} is not BBNNYYYY"));
        }
        let basin: Basin = code[..2].parse()?;
        let number: u8 = code[2..4]
            .parse()
            .map_err(|_| format!("bad storm number in {code:?}"))?;
        if !(1..=99).contains(&number) {
            return Err(format!("storm number {number} out of 1..=99"));
        }
        let year: i32 = code[4..8]
            .parse()
            .map_err(|_| format!("bad year in {code:?}"))?;
        if !(1000..=9999).contains(&year) {
            return Err(format!("year {year} is not 4 digits"));
        }
        let name = name.trim();
        let name = if name.is_empty() { "UNNAMED" } else { name };
        Ok(Self::new(basin, number, year, name.to_ascii_uppercase()))
    }

    /// Parses `BBNNYYYY_NAME` as used by prompt caches and merged lines.
    pub fn parse_key(key: &str) -> Result<Self, String> {
        let (code, name) = key
            .split_once('_')
            .ok_or_else(|| format!("{key:?} is not BBNNYYYY_NAME"))?;
        Self::parse_code(code, name)
    }

    pub fn code(&self) -> String {
        self.to_string()
    }

    /// `BBNNYYYY_NAME`.
    pub fn key(&self) -> String {
        format!("{self}_{}", self.name)
    }
}

impl fmt::Display for StormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}{:04}", self.basin.code(), self.number, self.year)
    }
}

/// Which numeric fields were `-999` (or absent) in the source line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MissingMask {
    pub max_wind: bool,
    pub min_pressure: bool,
    pub radii_34: [bool; 4],
    pub radii_50: [bool; 4],
    pub radii_64: [bool; 4],
    pub radius_max_wind: bool,
}

impl MissingMask {
    pub fn any_radii_34(&self) -> bool {
        self.radii_34.iter().any(|&m| m)
    }
}

/// One best-track fix.
#[derive(Debug, Clone, PartialEq)]
pub struct StormRecord {
    pub timestamp: NaiveDateTime,
    /// `L` landfall, `W` max wind, `P` min pressure, ...
    pub record_id: Option<char>,
    pub status: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub max_wind_kt: i32,
    pub min_pressure_mb: i32,
    /// NE, SE, SW, NW in nautical miles.
    pub wind_radii_34: [i32; 4],
    pub wind_radii_50: [i32; 4],
    pub wind_radii_64: [i32; 4],
    pub radius_max_wind: i32,
    pub missing: MissingMask,
}

impl StormRecord {
    pub fn is_landfall(&self) -> bool {
        self.record_id == Some('L')
    }

    pub fn radius_max_wind(&self) -> Option<i32> {
        (!self.missing.radius_max_wind).then_some(self.radius_max_wind)
    }

    /// On the 00/06/12/18 UTC cadence with zero minutes.
    pub fn is_synoptic(&self) -> bool {
        self.timestamp.minute() == 0 && self.timestamp.hour().is_multiple_of(6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StormTrack {
    pub id: StormId,
    pub records: Vec<StormRecord>,
}

impl StormTrack {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn parse_lat(s: &str) -> Result<f64, String> {
    let (num, hemi) = split_hemisphere(s)?;
    let v: f64 = num.parse().map_err(|_| format!("bad latitude {s:?}"))?;
    let v = match hemi {
        'N' => v,
        'S' => -v,
        _ => return Err(format!("latitude {s:?} must end in N or S")),
    };
    if !(-90.0..=90.0).contains(&v) || v.is_nan() {
        return Err(format!("latitude {s:?} out of range"));
    }
    Ok(v)
}

fn parse_lon(s: &str) -> Result<f64, String> {
    let (num, hemi) = split_hemisphere(s)?;
    let v: f64 = num.parse().map_err(|_| format!("bad longitude {s:?}"))?;
    let v = match hemi {
        'E' => v,
        'W' => -v,
        _ => return Err(format!("longitude {s:?} must end in E or W")),
    };
    if !(-360.0..=360.0).contains(&v) || v.is_nan() {
        return Err(format!("longitude {s:?} out of range"));
    }
    Ok(wrap_lon(v))
}

/// Maps any longitude into (-180, 180].
pub fn wrap_lon(lon: f64) -> f64 {
    let mut v = lon;
    while v > 180.0 {
        v -= 360.0;
    }
    while v <= -180.0 {
        v += 360.0;
    }
    v
}

fn split_hemisphere(s: &str) -> Result<(&str, char), String> {
    let hemi = s.chars().last().ok_or("empty coordinate")?;
    let num = &s[..s.len() - hemi.len_utf8()];
    if num.is_empty() || num.starts_with(['-', '+']) {
        return Err(format!("bad coordinate {s:?}"));
    }
    Ok((num, hemi))
}

/// Returns the value and whether it was the missing sentinel.
fn parse_int(s: &str, what: &str) -> Result<(i32, bool), String> {
    let v: i32 = s.parse().map_err(|_| format!("bad {what} {s:?}"))?;
    if v == MISSING {
        return Ok((0, true));
    }
    if v < 0 {
        return Err(format!("negative {what} {v}"));
    }
    Ok((v, false))
}

fn parse_timestamp(date: &str, time: &str) -> Result<NaiveDateTime, String> {
    if date.len() != 8 || time.len() != 4 || !date.is_ascii() || !time.is_ascii() {
        return Err(format!("bad date/time {date:?} {time:?}"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| format!("bad date/time {date:?} {time:?}"));
    let (y, m, d) = (num(&date[..4])? as i32, num(&date[4..6])?, num(&date[6..])?);
    let (hh, mm) = (num(&time[..2])?, num(&time[2..])?);
    NaiveDate::from_ymd_opt(y, m, d)
        .and_then(|day| day.and_hms_opt(hh, mm, 0))
        .ok_or_else(|| format!("invalid date/time {date} {time}"))
}

/// Splits on commas, trims, and drops the single trailing empty field left
/// by HURDAT2's terminating comma.
fn fields(line: &str) -> Vec<&str> {
    let mut f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() > 1 && f.last() == Some(&"") {
        f.pop();
    }
    f
}

/// Parses the 20 or 21 record fields following any identity prefix.
fn parse_record_fields(f: &[&str], line_no: usize) -> Result<StormRecord, ParseError> {
    if f.len() != 20 && f.len() != 21 {
        return Err(malformed(
            line_no,
            format!("data line has {} fields, expected 20 or 21", f.len()),
        ));
    }
    let err = |reason: String| malformed(line_no, reason);
    let timestamp = parse_timestamp(f[0], f[1]).map_err(err)?;
    let record_id = match f[2] {
        "" => None,
        s if s.len() == 1 && s.is_ascii() => Some(s.chars().next().unwrap()),
        s => return Err(err(format!("record identifier {s:?} is not one character"))),
    };
    let status = f[3];
    if status.len() != 2 || !status.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(err(format!("bad system status {status:?}")));
    }
    let lat_deg = parse_lat(f[4]).map_err(err)?;
    let lon_deg = parse_lon(f[5]).map_err(err)?;
    let mut missing = MissingMask::default();
    let (max_wind_kt, m) = parse_int(f[6], "wind").map_err(err)?;
    missing.max_wind = m;
    let (min_pressure_mb, m) = parse_int(f[7], "pressure").map_err(err)?;
    missing.min_pressure = m;

    let mut radii = [[0i32; 4]; 3];
    let mut radii_missing = [[false; 4]; 3];
    for band in 0..3 {
        for q in 0..4 {
            let (v, m) = parse_int(f[8 + band * 4 + q], "wind radius").map_err(err)?;
            radii[band][q] = v;
            radii_missing[band][q] = m;
        }
    }
    [missing.radii_34, missing.radii_50, missing.radii_64] = radii_missing;

    let radius_max_wind = match f.get(20) {
        Some(s) => {
            let (v, m) = parse_int(s, "radius of max wind").map_err(err)?;
            missing.radius_max_wind = m;
            v
        }
        None => {
            missing.radius_max_wind = true;
            0
        }
    };

    Ok(StormRecord {
        timestamp,
        record_id,
        status: status.to_string(),
        lat_deg,
        lon_deg,
        max_wind_kt,
        min_pressure_mb,
        wind_radii_34: radii[0],
        wind_radii_50: radii[1],
        wind_radii_64: radii[2],
        radius_max_wind,
        missing,
    })
}

/// A header line starts with a basin code, a data line with a date digit.
fn is_header(line: &str) -> bool {
    line.trim_start()
        .bytes()
        .next()
        .is_some_and(|b| b.is_ascii_alphabetic())
}

fn parse_header(line: &str, line_no: usize) -> Result<(StormId, usize), ParseError> {
    let f = fields(line);
    if f.len() != 3 {
        return Err(malformed(
            line_no,
            format!("header has {} fields, expected 3", f.len()),
        ));
    }
    let id = StormId::parse_code(f[0], f[1]).map_err(|r| malformed(line_no, r))?;
    let count = f[2]
        .parse()
        .map_err(|_| malformed(line_no, format!("bad record count {:?}", f[2])))?;
    Ok((id, count))
}

/// Parses a full HURDAT2 file. Blank lines are ignored.
pub fn parse_hurdat2(text: &str) -> Result<Vec<StormTrack>, ParseError> {
    let mut tracks = Vec::new();
    // (track, declared count)
    let mut current: Option<(StormTrack, usize)> = None;

    let finish = |cur: Option<(StormTrack, usize)>,
                  tracks: &mut Vec<StormTrack>|
     -> Result<(), ParseError> {
        if let Some((track, declared)) = cur {
            if track.records.len() != declared {
                return Err(ParseError::CountMismatch {
                    storm_id: track.id.to_string(),
                    declared,
                    actual: track.records.len(),
                });
            }
            if !track.records.is_empty() {
                tracks.push(track);
            }
        }
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if is_header(line) {
            finish(current.take(), &mut tracks)?;
            let (id, count) = parse_header(line, line_no)?;
            current = Some((
                StormTrack {
                    id,
                    records: Vec::with_capacity(count),
                },
                count,
            ));
            continue;
        }
        let Some((track, _)) = current.as_mut() else {
            return Err(malformed(line_no, "data line before any storm header"));
        };
        let record = parse_record_fields(&fields(line), line_no)?;
        if let Some(prev) = track.records.last() {
            if record.timestamp <= prev.timestamp {
                return Err(ParseError::NonChronological {
                    storm_id: track.id.to_string(),
                    line_no,
                });
            }
        }
        track.records.push(record);
    }
    finish(current, &mut tracks)?;
    Ok(tracks)
}

/// Parses the 22-field `BBNNYYYY_NAME,YYYYMMDD,HHMM,...` single-line variant.
pub fn parse_merged_line(line: &str) -> Result<(StormId, StormRecord), ParseError> {
    let f = fields(line);
    if f.len() != 22 {
        return Err(malformed(
            1,
            format!("merged line has {} fields, expected 22", f.len()),
        ));
    }
    let id = StormId::parse_key(f[0]).map_err(|r| malformed(1, r))?;
    let record = parse_record_fields(&f[1..], 1)?;
    Ok((id, record))
}

fn fmt_lat(lat: f64) -> String {
    format!("{:.1}{}", lat.abs(), if lat < 0.0 { 'S' } else { 'N' })
}

fn fmt_lon(lon: f64) -> String {
    format!("{:.1}{}", lon.abs(), if lon < 0.0 { 'W' } else { 'E' })
}

fn or_missing(v: i32, missing: bool) -> i32 {
    if missing {
        MISSING
    } else {
        v
    }
}

/// Canonical NHC-style data line (21 fields, trailing comma).
pub fn render_record(r: &StormRecord) -> String {
    let m = &r.missing;
    let mut s = format!(
        "{}, {}, {}, {}, {:>5}, {:>6}, {:>3}, {:>4},",
        r.timestamp.format("%Y%m%d"),
        r.timestamp.format("%H%M"),
        r.record_id.unwrap_or(' '),
        r.status,
        fmt_lat(r.lat_deg),
        fmt_lon(r.lon_deg),
        or_missing(r.max_wind_kt, m.max_wind),
        or_missing(r.min_pressure_mb, m.min_pressure),
    );
    let bands = [
        (r.wind_radii_34, m.radii_34),
        (r.wind_radii_50, m.radii_50),
        (r.wind_radii_64, m.radii_64),
    ];
    for (vals, miss) in bands {
        for q in 0..4 {
            s.push_str(&format!(" {:>4},", or_missing(vals[q], miss[q])));
        }
    }
    s.push_str(&format!(
        " {:>4},",
        or_missing(r.radius_max_wind, m.radius_max_wind)
    ));
    s
}

pub fn render_header(track: &StormTrack) -> String {
    format!(
        "{},{:>19},{:>7},",
        track.id,
        track.id.name,
        track.records.len()
    )
}

/// Renders tracks back to HURDAT2 text; missing fields come out as `-999`.
pub fn render_hurdat2(tracks: &[StormTrack]) -> String {
    let mut out = String::new();
    for t in tracks {
        out.push_str(&render_header(t));
        out.push('\n');
        for r in &t.records {
            out.push_str(&render_record(r));
            out.push('\n');
        }
    }
    out
}

/// The merged single-line form of a record.
pub fn render_merged_line(id: &StormId, r: &StormRecord) -> String {
    let body = render_record(r);
    let compact: Vec<&str> = fields(&body);
    format!("{},{}", id.key(), compact.join(","))
}

/// Day of year starting at 0 for January 1.
pub fn day_of_year0(ts: &NaiveDateTime) -> u32 {
    ts.ordinal0()
}
