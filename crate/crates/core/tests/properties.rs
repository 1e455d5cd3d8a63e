use cypur_core::data::{encode_features, CropRecord, CropState, FeatureSchema, Season};
use cypur_core::nnet::{cross_entropy, relu, softmax, Tensor};
use cypur_core::regression::{paper_model, rmse};
use cypur_core::yield_model::{impact_from_yield, Normalization, SensorReading};
use cypur_core::data::Impact;
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..12)
}

fn crop_record() -> impl Strategy<Value = CropRecord> {
    (0.0f64..1e4, 0..CropState::ALL.len(), 0..Season::ALL.len())
        .prop_map(|(a, s, t)| CropRecord::new(a, CropState::ALL[s], Season::ALL[t]))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_normalizes(x in logits()) {
        let p = softmax(&Tensor::vector(&x)).unwrap();
        let sum: f64 = p.data().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn softmax_shift_invariant(x in logits(), c in -500.0f64..500.0) {
        let p = softmax(&Tensor::vector(&x)).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let q = softmax(&Tensor::vector(&shifted)).unwrap();
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_preserves_argmax(x in logits()) {
        let p = softmax(&Tensor::vector(&x)).unwrap();
        // Ties in the logits stay ties after softmax only up to rounding.
        let top = argmax(&x);
        let gap = x.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, v)| x[top] - v).fold(f64::INFINITY, f64::min);
        prop_assume!(gap > 1e-9);
        prop_assert_eq!(p.argmax(), Some(top));
    }

    #[test]
    fn relu_idempotent(x in prop::collection::vec(-1e6f64..1e6, 0..32)) {
        let t = Tensor::vector(&x);
        let once = relu(&t);
        prop_assert_eq!(relu(&once), once.clone());
        for (a, b) in x.iter().zip(once.data()) {
            prop_assert_eq!(*b, a.max(0.0));
        }
    }

    #[test]
    fn cross_entropy_non_negative(x in logits(), k in 0usize..12) {
        let p = softmax(&Tensor::vector(&x)).unwrap();
        let k = k % x.len();
        let l = cross_entropy(&p, k).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, p.data()[k] == 1.0);
    }

    #[test]
    fn prediction_is_linear_in_area(r in crop_record(), delta in 0.0f64..100.0) {
        let m = paper_model();
        let mut bigger = r.clone();
        bigger.area += delta;
        let diff = m.predict(&bigger).unwrap() - m.predict(&r).unwrap();
        let expected = delta * m.coefficient("Area").unwrap();
        prop_assert!((diff - expected).abs() <= 1e-9 * (1.0 + r.area + delta));
    }

    #[test]
    fn prediction_matches_naive_loop(r in crop_record()) {
        let m = paper_model();
        let schema = FeatureSchema::crop();
        // Independent evaluation: walk the named coefficients directly.
        let mut y = m.intercept();
        y += r.area * m.coefficient("Area").unwrap();
        y += m.coefficient(r.state.label()).unwrap();
        y += m.coefficient(r.season.label()).unwrap();
        prop_assert!((m.predict(&r).unwrap() - y).abs() < 1e-9);
        let row = schema.encode_row(&r);
        prop_assert_eq!(row[1..6].iter().sum::<f64>(), 1.0);
        prop_assert_eq!(row[6..11].iter().sum::<f64>(), 1.0);
        prop_assert_eq!(m.predict(&r).unwrap(), m.predict(&r).unwrap());
    }

    #[test]
    fn impact_follows_threshold(y in 0.0f64..=100.0) {
        let impact = impact_from_yield(y).unwrap();
        prop_assert_eq!(impact == Impact::Negative, y < 50.0);
    }

    #[test]
    fn normalization_roundtrip(
        rows in prop::collection::vec((-20.0f64..50.0, 0.0f64..100.0, 50.0f64..200.0), 2..40)
    ) {
        let readings: Vec<SensorReading> =
            rows.iter().map(|&(t, h, p)| SensorReading::new(t, h, p).unwrap()).collect();
        let norm = Normalization::fit(&readings);
        for r in &readings {
            let back = norm.denormalize(&norm.normalize(r));
            prop_assert!((back.temperature_c - r.temperature_c).abs() < 1e-9);
            prop_assert!((back.humidity_pct - r.humidity_pct).abs() < 1e-9);
            prop_assert!((back.pressure_mbar - r.pressure_mbar).abs() < 1e-9);
        }
    }

    #[test]
    fn rmse_zero_iff_equal(a in prop::collection::vec(-1e3f64..1e3, 1..20), d in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let n = a.len().min(d.len());
        let b: Vec<f64> = a[..n].iter().zip(&d[..n]).map(|(x, e)| x + e).collect();
        let r = rmse(&a[..n], &b).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert_eq!(rmse(&a[..n], &a[..n]).unwrap(), 0.0);
        prop_assert_eq!(r == 0.0, a[..n] == b[..]);
    }
}

#[test]
fn encode_features_is_injective_on_pairs() {
    let schema = FeatureSchema::crop();
    let mut records = Vec::new();
    for &s in CropState::ALL {
        for &t in Season::ALL {
            records.push(CropRecord::new(0.0, s, t));
        }
    }
    let x = encode_features(&records, &schema);
    let mut rows: Vec<Vec<u64>> = x.rows().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort();
    rows.dedup();
    assert_eq!(rows.len(), 25);
}
