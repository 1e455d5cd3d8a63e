use std::collections::BTreeSet;

use cypur_core::data::{
    load_sensor_samples, read_sensor_samples, state_profiles, fixture_samples, train_test_split, write_sensor_samples,
    Impact, SensorState,
};

/// The 30 sensor trials, typed out independently of the CSV fixture.
const TRIALS: [(&str, &str, f64, f64, f64, &str, f64); 30] = [
    ("Punjab", "P1", 14.0, 38.0, 138.24, "Negative", 43.0),
    ("Punjab", "P2", 22.0, 59.0, 120.33, "Positive", 77.0),
    ("Punjab", "P3", 25.0, 71.0, 114.46, "Positive", 78.0),
    ("Punjab", "P4", 26.0, 75.0, 109.56, "Positive", 89.0),
    ("Punjab", "P5", 38.0, 88.0, 98.97, "Negative", 42.0),
    ("Tamil Nadu", "TN1", 28.0, 78.0, 114.67, "Positive", 89.0),
    ("Tamil Nadu", "TN2", 29.0, 78.0, 115.78, "Positive", 91.0),
    ("Tamil Nadu", "TN3", 33.0, 80.0, 99.45, "Positive", 88.0),
    ("Tamil Nadu", "TN4", 35.0, 84.0, 96.66, "Positive", 76.0),
    ("Tamil Nadu", "TN5", 43.0, 88.0, 92.34, "Positive", 71.0),
    ("West Bengal", "WB1", 29.0, 78.0, 112.66, "Positive", 88.0),
    ("West Bengal", "WB2", 32.0, 79.0, 112.35, "Positive", 88.0),
    ("West Bengal", "WB3", 33.0, 80.0, 108.67, "Positive", 91.0),
    ("West Bengal", "WB4", 35.0, 84.0, 100.44, "Positive", 92.0),
    ("West Bengal", "WB5", 40.0, 81.0, 99.02, "Positive", 87.0),
    ("Andhra Pradesh", "AP1", 30.0, 78.0, 99.65, "Positive", 88.0),
    ("Andhra Pradesh", "AP2", 31.0, 80.0, 99.78, "Positive", 87.0),
    ("Andhra Pradesh", "AP3", 35.0, 82.0, 91.45, "Positive", 83.0),
    ("Andhra Pradesh", "AP4", 38.0, 82.0, 90.89, "Positive", 74.0),
    ("Andhra Pradesh", "AP5", 43.0, 87.0, 84.23, "Negative", 49.0),
    ("Bihar", "B1", 28.0, 77.0, 116.87, "Positive", 82.0),
    ("Bihar", "B2", 29.0, 77.0, 116.72, "Positive", 85.0),
    ("Bihar", "B3", 32.0, 78.0, 115.45, "Positive", 85.0),
    ("Bihar", "B4", 33.0, 78.0, 115.98, "Positive", 87.0),
    ("Bihar", "B5", 36.0, 78.0, 115.67, "Positive", 88.0),
    ("Karnataka", "K1", 23.0, 61.0, 109.76, "Positive", 79.0),
    ("Karnataka", "K2", 24.0, 61.0, 109.78, "Positive", 77.0),
    ("Karnataka", "K3", 28.0, 66.0, 101.23, "Positive", 79.0),
    ("Karnataka", "K4", 33.0, 75.0, 99.78, "Positive", 73.0),
    ("Karnataka", "K5", 35.0, 77.0, 90.87, "Positive", 71.0),
];

#[test]
fn loader_reproduces_every_cell() {
    let samples = fixture_samples();
    assert_eq!(samples.len(), 30);
    for (s, &(state, id, t, h, p, impact, y)) in samples.iter().zip(TRIALS.iter()) {
        assert_eq!(s.state.label(), state);
        assert_eq!(s.sample_id, id);
        assert_eq!(s.area_sq_m, 100.0);
        assert_eq!(s.temperature_c, t);
        assert_eq!(s.humidity_pct, h);
        assert_eq!(s.pressure_mbar, p);
        assert_eq!(s.impact.label(), impact);
        assert_eq!(s.expected_yield_pct, y);
    }
}

#[test]
fn loading_the_file_matches_embedded_copy() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/table1_sensor_samples.csv");
    assert_eq!(load_sensor_samples(path).unwrap(), fixture_samples());
}

#[test]
fn impact_matches_threshold_on_all_rows() {
    let samples = fixture_samples();
    for s in &samples {
        assert_eq!(s.impact == Impact::Negative, s.expected_yield_pct < 50.0, "{}", s.sample_id);
        assert!(s.impact_is_consistent());
    }
    let negatives: Vec<f64> = samples
        .iter()
        .filter(|s| s.impact == Impact::Negative)
        .map(|s| s.expected_yield_pct)
        .collect();
    assert_eq!(negatives, vec![43.0, 42.0, 49.0]);
}

#[test]
fn csv_roundtrip() {
    let samples = fixture_samples();
    let mut buf = Vec::new();
    write_sensor_samples(&mut buf, &samples).unwrap();
    assert_eq!(read_sensor_samples(buf.as_slice()).unwrap(), samples);
}

#[test]
fn loader_rejects_bad_rows() {
    let header = "state,sample_id,area_sq_m,temperature_c,humidity_pct,pressure_mbar,impact,expected_yield_pct\n";
    let bad_impact = format!("{header}Punjab,P1,100,14,38,138.24,Maybe,43\n");
    assert!(read_sensor_samples(bad_impact.as_bytes()).is_err());
    let bad_pct = format!("{header}Punjab,P1,100,14,138,138.24,Negative,43\n");
    assert!(read_sensor_samples(bad_pct.as_bytes()).is_err());
    let short = format!("{header}Punjab,P1,100\n");
    assert!(read_sensor_samples(short.as_bytes()).is_err());
    assert!(read_sensor_samples("a,b\n".as_bytes()).is_err());
}

#[test]
fn state_profiles_ph() {
    let ph: Vec<(SensorState, f64)> = state_profiles().iter().map(|p| (p.state, p.soil_ph)).collect();
    assert_eq!(
        ph,
        vec![
            (SensorState::Punjab, 7.8),
            (SensorState::TamilNadu, 6.0),
            (SensorState::WestBengal, 6.5),
            (SensorState::AndhraPradesh, 7.0),
            (SensorState::Bihar, 8.4),
            (SensorState::Karnataka, 5.5),
        ]
    );
}

#[test]
fn split_partitions_fixture() {
    let samples = fixture_samples();
    let (train, test) = train_test_split(&samples, 0.2, 7).unwrap();
    assert_eq!((train.len(), test.len()), (24, 6));
    let ids = |v: &[cypur_core::data::SensorSample]| v.iter().map(|s| s.sample_id.clone()).collect::<BTreeSet<_>>();
    assert!(ids(&train).is_disjoint(&ids(&test)));
    let all: BTreeSet<_> = ids(&train).union(&ids(&test)).cloned().collect();
    assert_eq!(all, ids(&samples));
    let again = train_test_split(&samples, 0.2, 7).unwrap();
    assert_eq!(again, (train, test));
    assert!(train_test_split(&samples, 1.5, 7).is_err());
    assert!(train_test_split(&samples, 0.0, 7).is_err());
}
