use cypur_core::data::{fixture_samples, Impact, SensorState};
use cypur_core::nnet::{encode_network, Network};
use cypur_core::yield_model::{
    best_conditions, default_architecture, default_train_config, predict_yield, rmse_on, train_yield_model,
    ConditionGrid, GridAxis, Normalization, SensorReading, YieldEstimator, YieldModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reading(t: f64, h: f64, p: f64) -> SensorReading {
    SensorReading::new(t, h, p).unwrap()
}

#[test]
fn fixture_model_fits_table1() {
    let samples = fixture_samples();
    let (model, history) = train_yield_model(&samples, &default_train_config(2000, 1)).unwrap();
    assert_eq!(history.len(), 2000);
    assert!(history.last().unwrap().loss < history.first().unwrap().loss);

    let rmse = rmse_on(&model, &samples).unwrap();
    let matches = samples
        .iter()
        .filter(|s| predict_yield(&model, &SensorReading::from(*s)).unwrap().impact == s.impact)
        .count();
    println!("rmse {rmse:.4}, impact matches {matches}/30");
    assert!(rmse <= 8.0);
    assert!(matches >= 27);

    let p4 = predict_yield(&model, &reading(26.0, 75.0, 109.56)).unwrap();
    assert!((p4.expected_yield_pct - 89.0).abs() <= 10.0);
    assert_eq!(p4.impact, Impact::Positive);
    let p1 = predict_yield(&model, &reading(14.0, 38.0, 138.24)).unwrap();
    assert_eq!(p1.impact, Impact::Negative);
}

#[test]
fn punjab_subset_is_memorized() {
    let punjab: Vec<_> = fixture_samples().into_iter().filter(|s| s.state == SensorState::Punjab).collect();
    assert_eq!(punjab.len(), 5);
    let (model, _) = train_yield_model(&punjab, &default_train_config(2000, 1)).unwrap();
    let rmse = rmse_on(&model, &punjab).unwrap();
    assert!(rmse <= 2.0, "rmse {rmse}");
}

#[test]
fn training_is_bitwise_reproducible() {
    let samples = fixture_samples();
    let cfg = default_train_config(300, 9);
    let (a, ha) = train_yield_model(&samples, &cfg).unwrap();
    let (b, hb) = train_yield_model(&samples, &cfg).unwrap();
    assert_eq!(encode_network(a.network()).unwrap(), encode_network(b.network()).unwrap());
    assert_eq!(ha, hb);
    let (c, _) = train_yield_model(&samples, &default_train_config(300, 10)).unwrap();
    assert_ne!(encode_network(a.network()).unwrap(), encode_network(c.network()).unwrap());
}

#[test]
fn save_load_roundtrip() {
    let samples = fixture_samples();
    let (model, _) = train_yield_model(&samples, &default_train_config(50, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    assert!(YieldModel::exists_in(dir.path()));
    let back = YieldModel::load(dir.path()).unwrap();
    assert_eq!(back, model);
    let r = reading(29.0, 78.0, 115.78);
    assert_eq!(back.predict(&r).unwrap(), model.predict(&r).unwrap());
}

#[test]
fn predictions_stay_in_range() {
    let samples = fixture_samples();
    let (model, _) = train_yield_model(&samples, &default_train_config(100, 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let r = reading(rng.random_range(-50.0..80.0), rng.random_range(0.0..=100.0), rng.random_range(1.0..400.0));
        let p = model.predict(&r).unwrap();
        assert!((0.0..=100.0).contains(&p.expected_yield_pct));
        assert_eq!(p.impact == Impact::Negative, p.expected_yield_pct < 50.0);
    }
}

/// Output quantized to a handful of levels so ties are common.
struct Quantized {
    a: f64,
    b: f64,
    c: f64,
}

impl YieldEstimator for Quantized {
    fn estimate_pct(&self, r: &SensorReading) -> f64 {
        let v = self.a * r.temperature_c + self.b * r.humidity_pct + self.c * r.pressure_mbar;
        (v.sin() * 3.0).round()
    }
}

fn axis(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> GridAxis {
    let min = rng.random_range(lo..hi);
    let max = rng.random_range(min..=hi);
    GridAxis::new(min, max, rng.random_range(1..9))
}

fn random_grid(rng: &mut ChaCha8Rng) -> ConditionGrid {
    ConditionGrid {
        temperature_c: axis(rng, 0.0, 50.0),
        humidity_pct: axis(rng, 0.0, 100.0),
        pressure_mbar: axis(rng, 80.0, 150.0),
    }
}

/// Enumerates every point, then picks the maximum with lexicographic tie-breaking by sorting.
fn brute_force<E: YieldEstimator>(model: &E, grid: &ConditionGrid) -> (SensorReading, f64) {
    let values = |a: &GridAxis| -> Vec<f64> {
        (0..a.steps)
            .map(|i| match i {
                0 => a.min,
                i if i + 1 == a.steps => a.max,
                i => a.min + (a.max - a.min) * i as f64 / (a.steps - 1) as f64,
            })
            .collect()
    };
    let mut all = Vec::new();
    for &t in &values(&grid.temperature_c) {
        for &h in &values(&grid.humidity_pct) {
            for &p in &values(&grid.pressure_mbar) {
                let r = SensorReading { temperature_c: t, humidity_pct: h, pressure_mbar: p };
                all.push((r, model.estimate_pct(&r)));
            }
        }
    }
    all.sort_by(|(ra, ya), (rb, yb)| {
        yb.total_cmp(ya)
            .then(ra.temperature_c.total_cmp(&rb.temperature_c))
            .then(ra.humidity_pct.total_cmp(&rb.humidity_pct))
            .then(ra.pressure_mbar.total_cmp(&rb.pressure_mbar))
    });
    all[0]
}

fn close(a: &SensorReading, b: &SensorReading) -> bool {
    (a.temperature_c - b.temperature_c).abs() < 1e-9
        && (a.humidity_pct - b.humidity_pct).abs() < 1e-9
        && (a.pressure_mbar - b.pressure_mbar).abs() < 1e-9
}

#[test]
fn best_conditions_matches_brute_force() {
    let samples = fixture_samples();
    let readings: Vec<SensorReading> = samples.iter().map(SensorReading::from).collect();
    let norm = Normalization::fit(&readings);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..100u64 {
        let grid = random_grid(&mut rng);
        if instance % 2 == 0 {
            let net = Network::new(&[3], default_architecture(), instance).unwrap();
            let model = YieldModel::from_parts(net, norm.clone()).unwrap();
            let (got, gy) = best_conditions(&model, &grid).unwrap();
            let (want, wy) = brute_force(&model, &grid);
            assert!(close(&got, &want) && (gy - wy).abs() < 1e-12, "instance {instance}: {got:?} vs {want:?}");
        } else {
            let model = Quantized { a: rng.random_range(-1.0..1.0), b: rng.random_range(-1.0..1.0), c: rng.random_range(-1.0..1.0) };
            let (got, gy) = best_conditions(&model, &grid).unwrap();
            let (want, wy) = brute_force(&model, &grid);
            assert!(close(&got, &want) && gy == wy, "instance {instance}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn oversize_grid_is_rejected() {
    let grid = ConditionGrid {
        temperature_c: GridAxis::new(0.0, 50.0, 101),
        humidity_pct: GridAxis::new(0.0, 100.0, 101),
        pressure_mbar: GridAxis::new(80.0, 150.0, 101),
    };
    let stub = Quantized { a: 1.0, b: 1.0, c: 1.0 };
    assert!(best_conditions(&stub, &grid).is_err());
}
