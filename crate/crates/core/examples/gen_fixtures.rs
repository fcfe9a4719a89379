//! Regenerates the HURDAT2 test fixtures under `tests/fixtures/`.
//!
//!     cargo run -p typhoformer --example gen_fixtures
//!
//! Output is a pure function of the seeds below.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typhoformer::hurdat2::{
    render_hurdat2, wrap_lon, Basin, MissingMask, StormId, StormRecord, StormTrack,
};
use typhoformer::synth::{TurningTrack, TurningTrackSampler};

fn at(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, min, 0).unwrap()
}

fn status(wind: i32, lo: bool, ex: bool) -> &'static str {
    match (lo, ex, wind) {
        (true, ..) => "LO",
        (_, true, _) => "EX",
        (.., w) if w >= 64 => "HU",
        (.., w) if w >= 34 => "TS",
        _ => "TD",
    }
}

fn band(wind: i32, threshold: i32, scale: f64) -> [i32; 4] {
    if wind < threshold {
        return [0; 4];
    }
    let base = f64::from(wind - threshold + 10) * scale;
    let skew = [1.15, 1.0, 0.7, 1.25];
    std::array::from_fn(|q| (base * skew[q] / 10.0).round() as i32 * 10)
}

fn interp(keys: &[(usize, f64)], i: usize) -> f64 {
    let k = keys.windows(2).find(|w| i >= w[0].0 && i <= w[1].0).expect("index inside keyframes");
    let (a, b) = (k[0], k[1]);
    let t = (i - a.0) as f64 / (b.0 - a.0) as f64;
    a.1 + t * (b.1 - a.1)
}

/// 66 six-hourly fixes from 2 Oct 00 UTC plus the 10 Oct 00:30 UTC landfall.
fn milton() -> StormTrack {
    let lat = [
        (0, 20.5), (12, 21.5), (16, 22.5), (20, 22.5), (24, 21.8), (28, 23.5),
        (32, 27.2), (33, 28.2), (36, 29.5), (44, 32.0), (52, 35.0), (65, 41.0),
    ];
    let lon = [
        (0, -93.0), (12, -95.0), (16, -95.3), (20, -93.5), (24, -90.5), (28, -87.0),
        (32, -82.8), (33, -81.0), (36, -75.0), (44, -62.0), (52, -50.0), (65, -30.0),
    ];
    let wind = [
        (0, 20.0), (12, 25.0), (16, 40.0), (20, 90.0), (24, 150.0), (28, 130.0),
        (32, 105.0), (33, 85.0), (36, 65.0), (44, 50.0), (52, 40.0), (65, 30.0),
    ];
    let start = at(2024, 10, 2, 0, 0);
    let mut records: Vec<StormRecord> = (0..66)
        .map(|i| {
            let w = (interp(&wind, i) / 5.0).round() as i32 * 5;
            let (lo, ex) = (i < 12, i > 36);
            StormRecord {
                timestamp: start + TimeDelta::hours(6 * i as i64),
                record_id: None,
                status: status(w, lo, ex).into(),
                lat_deg: (interp(&lat, i) * 10.0).round() / 10.0,
                lon_deg: (interp(&lon, i) * 10.0).round() / 10.0,
                max_wind_kt: w,
                min_pressure_mb: 1012 - (f64::from(w) * 0.55) as i32,
                wind_radii_34: band(w, 34, 2.5),
                wind_radii_50: band(w, 50, 1.4),
                wind_radii_64: band(w, 64, 0.7),
                radius_max_wind: if w >= 34 { (60 - w / 3).max(10) / 5 * 5 } else { 0 },
                missing: MissingMask {
                    radius_max_wind: w < 34,
                    ..MissingMask::default()
                },
            }
        })
        .collect();
    let landfall = StormRecord {
        timestamp: at(2024, 10, 10, 0, 30),
        record_id: Some('L'),
        status: "HU".into(),
        lat_deg: 27.4,
        lon_deg: -82.6,
        max_wind_kt: 100,
        min_pressure_mb: 958,
        wind_radii_34: [180, 170, 110, 220],
        wind_radii_50: [60, 60, 70, 90],
        wind_radii_64: [30, 30, 30, 30],
        radius_max_wind: 20,
        missing: MissingMask::default(),
    };
    records.insert(33, landfall);
    StormTrack {
        id: StormId::new(Basin::AL, 14, 2024, "MILTON"),
        records,
    }
}

/// Quirks seen in real best-track files, applied to a clean synthetic track.
fn roughen(track: &mut StormTrack, rng: &mut ChaCha8Rng) {
    // missing pressure on the first fix
    if rng.gen_bool(0.3) {
        track.records[0].min_pressure_mb = 0;
        track.records[0].missing.min_pressure = true;
    }
    // radii not analysed for a stretch
    if rng.gen_bool(0.25) {
        let from = rng.gen_range(0..track.records.len() / 2);
        for r in &mut track.records[from..from + 3] {
            r.wind_radii_50 = [0; 4];
            r.missing.radii_50 = [true; 4];
        }
    }
    // off-synoptic landfall between two fixes
    if rng.gen_bool(0.3) {
        let i = rng.gen_range(4..track.records.len() - 2);
        let (a, b) = (&track.records[i], &track.records[i + 1]);
        let mut l = a.clone();
        l.timestamp = a.timestamp + TimeDelta::minutes(rng.gen_range(1..12) * 30);
        l.record_id = Some('L');
        l.lat_deg = ((a.lat_deg + b.lat_deg) * 5.0).round() / 10.0;
        l.lon_deg = ((a.lon_deg + b.lon_deg) * 5.0).round() / 10.0;
        track.records.insert(i + 1, l);
    }
}

fn corpus() -> Vec<StormTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sampler = TurningTrackSampler {
        turn_deg: 1.0..8.0,
        ..TurningTrackSampler::default()
    };
    let mut tracks = sampler.sample(48, 7);
    for t in &mut tracks {
        roughen(t, &mut rng);
    }
    // Eastern and central Pacific storms, one crossing the date line.
    let pacific = [
        (Basin::EP, 5, 2015, "PACIFICA", 15.0, -105.0, 100.0, 0.7, 2.0),
        (Basin::EP, 11, 2023, "OTISLIKE", 12.0, -98.0, 80.0, 0.6, 6.0),
        (Basin::CP, 2, 2018, "WESTWARD", 16.0, -172.0, 175.0, 0.9, -1.0),
        (Basin::CP, 1, 2022, "SOUTHERN", -8.0, -160.0, 200.0, 0.5, 3.0),
    ];
    for (basin, number, year, name, lat, lon, heading, speed, turn) in pacific {
        tracks.push(
            TurningTrack {
                id: StormId::new(basin, number, year, name),
                start: at(year, 8, 10, 12, 0),
                start_lat: lat,
                start_lon: lon,
                heading_deg: heading,
                speed_deg: speed,
                turn_deg: turn,
                records: 24,
                peak_wind_kt: 95,
                quantize: true,
            }
            .build(),
        );
    }
    tracks.push(milton());
    for t in &mut tracks {
        for r in &mut t.records {
            r.lon_deg = wrap_lon(r.lon_deg);
        }
    }
    tracks.sort_by(|a, b| {
        (a.id.year, a.id.basin.code(), a.id.number).cmp(&(b.id.year, b.id.basin.code(), b.id.number))
    });
    tracks
}

/// Pre-2021 files carry 20 fields: drop the radius-of-maximum-wind column
/// from the first few storms.
fn without_rmw(text: &str, storms: usize) -> String {
    let mut seen = 0;
    let mut out = String::new();
    for line in text.lines() {
        let is_header = line.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
        if is_header {
            seen += 1;
        }
        if !is_header && seen <= storms {
            let trimmed = line.trim_end_matches(',');
            let cut = trimmed.rfind(',').unwrap();
            out.push_str(&trimmed[..=cut]);
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn five_storms() -> Vec<StormTrack> {
    (0..5)
        .map(|i| {
            TurningTrack {
                id: StormId::new(Basin::AL, 3 + i as u8, 2010 + i, format!("FIT{i}")),
                start: at(2010 + i, 8, 1 + 3 * i as u32, 0, 0),
                start_lat: 14.0 + 2.0 * f64::from(i),
                start_lon: -45.0 - 4.0 * f64::from(i),
                heading_deg: 150.0 - 15.0 * f64::from(i),
                speed_deg: 0.5 + 0.08 * f64::from(i),
                turn_deg: if i % 2 == 0 { -5.0 } else { 3.0 },
                records: 17,
                peak_wind_kt: 70 + 10 * i,
                quantize: true,
            }
            .build()
        })
        .collect()
}

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir)?;
    let corpus = corpus();
    std::fs::write(dir.join("hurdat2_synthetic.txt"), without_rmw(&render_hurdat2(&corpus), 3))?;
    std::fs::write(dir.join("milton_2024.txt"), render_hurdat2(&[milton()]))?;
    std::fs::write(dir.join("five_storms.txt"), render_hurdat2(&five_storms()))?;
    println!("{} storms in the corpus", corpus.len());
    Ok(())
}
