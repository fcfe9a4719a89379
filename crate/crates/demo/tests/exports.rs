use proptest::prelude::*;
use serde_json::Value;

use typhoformer_demo::{describe_fix, pgf_blend, turning_forecast};

fn parse(s: String) -> Value {
    let v: Value = serde_json::from_str(&s).unwrap();
    assert!(v.get("error").is_none(), "{v}");
    v
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

const MILTON: &str =
    "AL142024_MILTON,20241010,0030,L,HU,27.4N,82.6W,100,958,180,170,110,220,60,60,70,90,30,30,30,30,20";

#[test]
fn straight_track_favours_cliper() {
    let v = parse(turning_forecast(60.0, 0.8, 0.0, 12));
    assert_eq!(v["observed"].as_array().unwrap().len(), 8);
    assert_eq!(v["truth"].as_array().unwrap().len(), 4);
    assert_eq!(v["track"].as_array().unwrap().len(), 28);
    let clip = floats(&v["delta_r_km"]["cliper_lite"]);
    let pers = floats(&v["delta_r_km"]["persistence"]);
    // positions are rounded to 0.1°, so extrapolation is only near exact
    assert!(clip.iter().all(|&d| d < 25.0), "{clip:?}");
    assert!(pers.windows(2).all(|p| p[0] < p[1]), "{pers:?}");
    // 0.8° per step for 24 h is ~356 km of latitude-weighted travel
    assert!((pers[3] - 356.0).abs() < 40.0, "{pers:?}");
}

#[test]
fn sharp_turn_hurts_cliper() {
    let straight = parse(turning_forecast(60.0, 0.8, 0.0, 12));
    let turning = parse(turning_forecast(60.0, 0.8, 12.0, 12));
    let at24 = |v: &Value| floats(&v["delta_r_km"]["cliper_lite"])[3];
    assert!(at24(&turning) > at24(&straight) + 50.0);
}

#[test]
fn describe_fix_matches_the_reference_prompt() {
    let v = parse(describe_fix(MILTON, 16));
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/milton_prompt.txt");
    let want = std::fs::read_to_string(path).unwrap();
    let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    assert_eq!(norm(v["prompt"].as_str().unwrap()), norm(&want));
    assert_eq!(v["storm"], "AL142024_MILTON");
    let e = floats(&v["embedding"]);
    assert_eq!(e.len(), 16);
    let n = v["embedding_norm"].as_f64().unwrap();
    assert!((n - e.iter().map(|x| x * x).sum::<f64>().sqrt()).abs() < 1e-12);
    assert!(n > 0.0 && n <= 1.0);
    assert!(v["tokens"].as_array().unwrap().len() > 20);
}

#[test]
fn saturated_gate_keeps_the_observation() {
    let x = [1.5, -2.0, 0.25];
    let p = [-3.0, 4.0, 1.0];
    let v = parse(pgf_blend(&x, &p, 0.0, 20.0));
    for (f, xi) in floats(&v["fused"]).iter().zip(x) {
        assert!((f - xi).abs() < 1e-6 * (1.0 + xi.abs()) * 10.0);
    }
    let v = parse(pgf_blend(&x, &p, 0.0, -20.0));
    for (f, pi) in floats(&v["fused"]).iter().zip(p) {
        assert!((f - pi).abs() < 1e-6 * 10.0);
    }
}

proptest! {
    #[test]
    fn blend_matches_logistic_oracle(
        xs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..8),
        w in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let (x, p): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        let v = parse(pgf_blend(&x, &p, w, b));
        let fused = floats(&v["fused"]);
        for i in 0..x.len() {
            let g = 1.0 / (1.0 + (-(w * (x[i] + p[i]) + b)).exp());
            let want = g * x[i] + (1.0 - g) * p[i];
            prop_assert!((fused[i] - want).abs() < 1e-9, "{} vs {}", fused[i], want);
            prop_assert!(fused[i] >= x[i].min(p[i]) - 1e-12 && fused[i] <= x[i].max(p[i]) + 1e-12);
        }
    }

    #[test]
    fn forecasts_stay_on_the_globe(heading in -180.0..180.0f64, speed in 0.0..3.0f64, turn in -20.0..20.0f64, step in 7u32..24) {
        let v = parse(turning_forecast(heading, speed, turn, step));
        for key in ["persistence", "cliper_lite", "truth"] {
            for pt in v[key].as_array().unwrap() {
                let (lat, lon) = (pt[0].as_f64().unwrap(), pt[1].as_f64().unwrap());
                prop_assert!((-90.0..=90.0).contains(&lat) && lon > -180.0 && lon <= 180.0);
            }
        }
        for d in floats(&v["delta_r_km"]["persistence"]) {
            prop_assert!(d >= 0.0 && d.is_finite());
        }
    }
}
