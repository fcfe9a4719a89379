//! Feature vectors, normalization, sliding windows and the year split.

use std::f64::consts::TAU;
use std::ops::RangeInclusive;

use chrono::{Datelike, NaiveDateTime, TimeDelta, Timelike};
use thiserror::Error;

use crate::hurdat2::{StormId, StormRecord, StormTrack};

pub const FEATURE_DIM: usize = 22;

/// Hours between consecutive best-track fixes.
pub const CADENCE_HOURS: i64 = 6;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "lat", "lon", "max_wind", "min_pressure", "r34_ne", "r34_se", "r34_sw", "r34_nw", "r50_ne",
    "r50_se", "r50_sw", "r50_nw", "r64_ne", "r64_se", "r64_sw", "r64_nw", "rmw", "sin_hour",
    "cos_hour", "sin_doy", "cos_doy", "landfall",
];

pub const LAT: usize = 0;
pub const LON: usize = 1;
pub const SIN_HOUR: usize = 17;
pub const COS_HOUR: usize = 18;
pub const SIN_DOY: usize = 19;
pub const COS_DOY: usize = 20;
pub const LANDFALL: usize = 21;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("normalization needs at least one training record")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

fn days_in_year(year: i32) -> f64 {
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    if leap {
        366.0
    } else {
        365.0
    }
}

/// Maps a record to its 22 raw features. Missing fields are already 0.
pub fn extract_features(record: &StormRecord) -> FeatureVector {
    let mut v = [0.0; FEATURE_DIM];
    v[LAT] = record.lat_deg;
    v[LON] = record.lon_deg;
    v[2] = f64::from(record.max_wind_kt);
    v[3] = f64::from(record.min_pressure_mb);
    let radii = record
        .wind_radii_34
        .iter()
        .chain(&record.wind_radii_50)
        .chain(&record.wind_radii_64);
    for (slot, r) in v[4..16].iter_mut().zip(radii) {
        *slot = f64::from(*r);
    }
    v[16] = f64::from(record.radius_max_wind);

    let ts = record.timestamp;
    let hour = f64::from(ts.hour()) + f64::from(ts.minute()) / 60.0;
    let hour_angle = TAU * hour / 24.0;
    v[SIN_HOUR] = hour_angle.sin();
    v[COS_HOUR] = hour_angle.cos();
    let doy = f64::from(ts.ordinal0()) + hour / 24.0;
    let doy_angle = TAU * doy / days_in_year(ts.year());
    v[SIN_DOY] = doy_angle.sin();
    v[COS_DOY] = doy_angle.cos();
    v[LANDFALL] = if record.is_landfall() { 1.0 } else { 0.0 };
    FeatureVector(v)
}

/// Per-feature z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl NormalizationStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    pub fn normalize(&self, f: &FeatureVector) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|i| (f.0[i] - self.mean[i]) / self.std[i])
    }

    pub fn denormalize(&self, z: &[f64; FEATURE_DIM]) -> FeatureVector {
        FeatureVector(std::array::from_fn(|i| z[i] * self.std[i] + self.mean[i]))
    }

    pub fn normalize_position(&self, lat: f64, lon: f64) -> [f64; 2] {
        [
            (lat - self.mean[LAT]) / self.std[LAT],
            (lon - self.mean[LON]) / self.std[LON],
        ]
    }
}

/// Fits z-score stats over every record of the given (training) tracks.
/// Constant features get `std = 1`.
pub fn fit_normalization(tracks: &[StormTrack]) -> Result<NormalizationStats, FeatureError> {
    let feats: Vec<FeatureVector> = tracks
        .iter()
        .flat_map(|t| t.records.iter().map(extract_features))
        .collect();
    let Some(first) = feats.first() else {
        return Err(FeatureError::EmptyTrainingSet);
    };
    let n = feats.len() as f64;
    let mut stats = NormalizationStats::identity();
    for i in 0..FEATURE_DIM {
        if feats.iter().all(|f| f.0[i] == first.0[i]) {
            stats.mean[i] = first.0[i];
            stats.std[i] = 1.0;
            continue;
        }
        let mean = feats.iter().map(|f| f.0[i]).sum::<f64>() / n;
        let var = feats.iter().map(|f| (f.0[i] - mean).powi(2)).sum::<f64>() / n;
        stats.mean[i] = mean;
        stats.std[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    Ok(stats)
}

/// `history` consecutive fixes plus the positions `1..=horizons` cadence
/// steps after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub storm: StormId,
    pub inputs: Vec<FeatureVector>,
    pub input_records: Vec<StormRecord>,
    /// (lat, lon) degrees.
    pub targets: Vec<(f64, f64)>,
}

impl Window {
    pub fn last_record(&self) -> &StormRecord {
        self.input_records.last().expect("window has inputs")
    }

    /// Forecast issue time: the last observed fix.
    pub fn issue_time(&self) -> NaiveDateTime {
        self.last_record().timestamp
    }

    pub fn last_position(&self) -> (f64, f64) {
        let r = self.last_record();
        (r.lat_deg, r.lon_deg)
    }

    pub fn history(&self) -> usize {
        self.inputs.len()
    }

    pub fn horizons(&self) -> usize {
        self.targets.len()
    }
}

/// Builds every window whose `history + horizons` fixes are consecutive
/// synoptic records exactly 6 h apart. Off-synoptic fixes are skipped.
pub fn make_windows(tracks: &[StormTrack], history: usize, horizons: usize) -> Vec<Window> {
    assert!(history >= 1 && horizons >= 1, "history and horizons must be positive");
    let span = history + horizons;
    let step = TimeDelta::hours(CADENCE_HOURS);
    let mut out = Vec::new();
    for track in tracks {
        let synoptic: Vec<&StormRecord> = track.records.iter().filter(|r| r.is_synoptic()).collect();
        if synoptic.len() < span {
            continue;
        }
        // on_cadence[i]: records i and i+1 are one step apart
        let on_cadence: Vec<bool> = synoptic
            .windows(2)
            .map(|p| p[1].timestamp - p[0].timestamp == step)
            .collect();
        for start in 0..=synoptic.len() - span {
            if !on_cadence[start..start + span - 1].iter().all(|&ok| ok) {
                continue;
            }
            let inputs = &synoptic[start..start + history];
            let targets = &synoptic[start + history..start + span];
            out.push(Window {
                storm: track.id.clone(),
                inputs: inputs.iter().map(|r| extract_features(r)).collect(),
                input_records: inputs.iter().map(|r| (*r).clone()).collect(),
                targets: targets.iter().map(|r| (r.lat_deg, r.lon_deg)).collect(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearSplit {
    pub train: RangeInclusive<i32>,
    pub test: RangeInclusive<i32>,
}

impl Default for YearSplit {
    fn default() -> Self {
        Self {
            train: 2004..=2021,
            test: 2022..=2024,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SplitTracks {
    pub train: Vec<StormTrack>,
    pub test: Vec<StormTrack>,
    /// Storms outside both year ranges.
    pub dropped: usize,
}

pub fn split_by_year(tracks: &[StormTrack], split: &YearSplit) -> SplitTracks {
    let mut out = SplitTracks::default();
    for t in tracks {
        if split.train.contains(&t.id.year) {
            out.train.push(t.clone());
        } else if split.test.contains(&t.id.year) {
            out.test.push(t.clone());
        } else {
            out.dropped += 1;
        }
    }
    if out.dropped > 0 {
        log::warn!("{} storms outside the train/test year ranges were dropped", out.dropped);
    }
    out
}
