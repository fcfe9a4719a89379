//! Synthetic storm tracks with constant speed and constant turning rate.
//!
//! Positions move in plain degree space: each 6-hourly step advances
//! `speed_deg` along the current heading, then the heading turns by
//! `turn_deg`. Intensity follows a smooth rise-and-decay curve and the wind
//! radii scale with it, so every record yields a complete prompt.

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::CADENCE_HOURS;
use crate::hurdat2::{wrap_lon, Basin, MissingMask, StormId, StormRecord, StormTrack};

#[derive(Debug, Clone, PartialEq)]
pub struct TurningTrack {
    pub id: StormId,
    pub start: NaiveDateTime,
    pub start_lat: f64,
    pub start_lon: f64,
    /// Degrees counter-clockwise from east.
    pub heading_deg: f64,
    /// Distance per 6 h step, degrees.
    pub speed_deg: f64,
    /// Heading change per 6 h step, degrees.
    pub turn_deg: f64,
    pub records: usize,
    pub peak_wind_kt: i32,
    /// Round positions to 0.1° as best-track files do.
    pub quantize: bool,
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn status_for(wind: i32) -> &'static str {
    match wind {
        w if w >= 64 => "HU",
        w if w >= 34 => "TS",
        _ => "TD",
    }
}

/// Radii (n mi) for one wind band, zero when the storm is below threshold.
fn radii_for(wind: i32, threshold: i32, scale: f64, skew: [f64; 4]) -> [i32; 4] {
    if wind < threshold {
        return [0; 4];
    }
    let excess = f64::from(wind - threshold + 10);
    std::array::from_fn(|q| ((excess * scale * skew[q]) / 5.0).round() as i32 * 5)
}

impl TurningTrack {
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut lat = self.start_lat;
        let mut lon = self.start_lon;
        let mut heading = self.heading_deg.to_radians();
        let turn = self.turn_deg.to_radians();
        let mut out = Vec::with_capacity(self.records);
        for _ in 0..self.records {
            out.push((lat, wrap_lon(lon)));
            lon += self.speed_deg * heading.cos();
            lat += self.speed_deg * heading.sin();
            heading += turn;
        }
        out
    }

    pub fn build(&self) -> StormTrack {
        let n = self.records.max(1);
        let skew = [1.1, 1.0, 0.75, 0.9];
        let records = self
            .positions()
            .into_iter()
            .enumerate()
            .map(|(i, (lat, lon))| {
                let phase = i as f64 / (n - 1).max(1) as f64;
                let shape = (std::f64::consts::PI * phase).sin().powf(0.8);
                let wind = (25.0 + f64::from(self.peak_wind_kt - 25) * shape).round() as i32 / 5 * 5;
                let (lat, lon) = if self.quantize { (round1(lat), round1(lon)) } else { (lat, lon) };
                StormRecord {
                    timestamp: self.start + TimeDelta::hours(CADENCE_HOURS * i as i64),
                    record_id: None,
                    status: status_for(wind).to_string(),
                    lat_deg: lat.clamp(-90.0, 90.0),
                    lon_deg: lon,
                    max_wind_kt: wind,
                    min_pressure_mb: 1012 - (f64::from(wind) * 0.75) as i32,
                    wind_radii_34: radii_for(wind, 34, 3.0, skew),
                    wind_radii_50: radii_for(wind, 50, 1.6, skew),
                    wind_radii_64: radii_for(wind, 64, 0.9, skew),
                    radius_max_wind: if wind >= 34 { 60 - wind / 4 } else { 0 },
                    missing: MissingMask {
                        radius_max_wind: wind < 34,
                        ..MissingMask::default()
                    },
                }
            })
            .collect();
        StormTrack {
            id: self.id.clone(),
            records,
        }
    }
}

/// Knobs for drawing random turning tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct TurningTrackSampler {
    pub years: std::ops::RangeInclusive<i32>,
    pub records: std::ops::RangeInclusive<usize>,
    pub speed_deg: std::ops::Range<f64>,
    /// Magnitude of the turning rate; the sign is drawn separately.
    pub turn_deg: std::ops::Range<f64>,
    pub quantize: bool,
}

impl Default for TurningTrackSampler {
    fn default() -> Self {
        Self {
            years: 2004..=2024,
            records: 16..=28,
            speed_deg: 0.4..1.0,
            turn_deg: 4.0..14.0,
            quantize: true,
        }
    }
}

impl TurningTrackSampler {
    pub fn sample(&self, count: usize, seed: u64) -> Vec<StormTrack> {
        self.specs(count, seed).iter().map(TurningTrack::build).collect()
    }

    pub fn specs(&self, count: usize, seed: u64) -> Vec<TurningTrack> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut numbers = std::collections::HashMap::<i32, u8>::new();
        (0..count)
            .map(|_| {
                let year = rng.gen_range(self.years.clone());
                let number = numbers.entry(year).or_insert(0);
                *number = (*number % 99) + 1;
                let month = rng.gen_range(6..=10);
                let day = rng.gen_range(1..=28);
                let hour = 6 * rng.gen_range(0..4);
                let turn = rng.gen_range(self.turn_deg.clone())
                    * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                TurningTrack {
                    id: StormId::new(Basin::AL, *number, year, format!("SYN{number:02}")),
                    start: NaiveDate::from_ymd_opt(year, month, day)
                        .unwrap()
                        .and_hms_opt(hour, 0, 0)
                        .unwrap(),
                    start_lat: rng.gen_range(12.0..30.0),
                    start_lon: rng.gen_range(-90.0..-40.0),
                    heading_deg: rng.gen_range(0.0..360.0),
                    speed_deg: rng.gen_range(self.speed_deg.clone()),
                    turn_deg: turn,
                    records: rng.gen_range(self.records.clone()),
                    peak_wind_kt: rng.gen_range(40..=140),
                    quantize: self.quantize,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TurningTrack {
        TurningTrack {
            id: StormId::new(Basin::AL, 3, 2015, "SYN03"),
            start: NaiveDate::from_ymd_opt(2015, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            start_lat: 15.0,
            start_lon: -50.0,
            heading_deg: 90.0,
            speed_deg: 0.5,
            turn_deg: 0.0,
            records: 10,
            peak_wind_kt: 100,
            quantize: false,
        }
    }

    #[test]
    fn straight_track() {
        let p = spec().positions();
        assert!((p[4].0 - 17.0).abs() < 1e-12);
        assert!((p[4].1 + 50.0).abs() < 1e-12);
    }

    #[test]
    fn constant_turn_keeps_step_length() {
        let s = TurningTrack { turn_deg: 10.0, ..spec() };
        let p = s.positions();
        for w in p.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            assert!((d - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_seeded() {
        let s = TurningTrackSampler::default();
        assert_eq!(s.sample(5, 9), s.sample(5, 9));
        assert_ne!(s.sample(5, 9), s.sample(5, 10));
        for t in s.sample(20, 1) {
            assert!(t.records.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        }
    }
}
