mod common;

use dpens::data::ground_truth;
use dpens::models::{
    rff_features, scale_gamma, train, Classifier, FeatureEncoder, ForestConfig, GbdtConfig, ModelConfig,
    PlattCalibrator, RffMap,
};
use dpens::random::rng_from_seed;
use rand::Rng;

fn accuracy(c: &Classifier, d: &dpens::data::Dataset) -> f64 {
    let li = d.schema().label_index();
    d.rows().iter().filter(|r| c.predict(r) == (r[li] == 1)).count() as f64 / d.len() as f64
}

#[test]
fn xor_is_learned_by_depth_two_ensembles() {
    let d = common::xor(50);
    let forest = ModelConfig::RandomForest(ForestConfig { trees: 100, max_depth: Some(2), ..Default::default() });
    let gbdt = ModelConfig::Gbdt(GbdtConfig { stages: 50, learning_rate: 0.1, max_depth: 2 });
    for cfg in [forest, gbdt] {
        let c = train(&d, &cfg, &mut rng_from_seed(11)).unwrap();
        assert!(accuracy(&c, &d) >= 0.95, "{}", cfg.name());
    }
}

#[test]
fn rff_approximates_the_rbf_kernel() {
    let schema = ground_truth::schema();
    let enc = FeatureEncoder::new(&schema);
    let gamma = scale_gamma(enc.width(), enc.features().len());
    let map = RffMap::sample(enc.width(), 4096, gamma, &mut rng_from_seed(3));
    let mut rng = rng_from_seed(4);
    let mut within = 0;
    let pairs = 400;
    for _ in 0..pairs {
        let mut row =
            || -> Vec<u32> { (0..schema.len()).map(|a| rng.random_range(0..schema.cardinality(a) as u32)).collect() };
        let (x, y) = (enc.encode(&row()), enc.encode(&row()));
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let approx: f64 = rff_features(&x, &map).iter().zip(rff_features(&y, &map)).map(|(a, b)| a * b).sum();
        if (approx - (-gamma * dist2).exp()).abs() <= 0.05 {
            within += 1;
        }
    }
    assert!(within as f64 >= 0.95 * pairs as f64, "{within}/{pairs}");
}

#[test]
fn platt_two_point_example() {
    let margins: Vec<f64> = (0..100).map(|i| if i < 50 { -2.0 } else { 2.0 }).collect();
    let labels: Vec<bool> = (0..100).map(|i| i >= 50).collect();
    let cal = PlattCalibrator::fit(&margins, &labels);
    assert!(cal.confidence(-2.0) <= 0.1);
    assert!(cal.confidence(2.0) >= 0.9);
}

#[test]
fn trained_models_round_trip_through_json() {
    let d = ground_truth::generate(2_000, 8);
    for cfg in ModelConfig::defaults() {
        let c = train(&d, &cfg, &mut rng_from_seed(1)).unwrap();
        let back: Classifier = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c, "{}", cfg.name());
    }
}
