use shapeword::shapelets::sdist;
use shapeword_wasm::{distance_profile, synthetic_series, Fitted};

#[test]
fn synthetic_series_is_normalized_and_deterministic() {
    let a = synthetic_series(2, 120, 30, 0.3, 5).unwrap();
    assert_eq!(a.len(), 120);
    let mean = a.iter().sum::<f64>() / 120.0;
    let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 120.0;
    assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    assert_eq!(a, synthetic_series(2, 120, 30, 0.3, 5).unwrap());
    assert!(synthetic_series(0, 20, 30, 0.3, 5).is_err());
}

#[test]
fn profile_minimum_is_the_shapelet_distance() {
    let series = synthetic_series(1, 100, 20, 0.2, 3).unwrap();
    let query = series[40..55].to_vec();
    let profile = distance_profile(&query, &series).unwrap();
    assert_eq!(profile.len(), 86);
    assert_eq!(profile[40], 0.0);
    let min = profile.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((min - sdist(&query, &series).unwrap()).abs() < 1e-12);
    assert!(distance_profile(&series, &query).is_err());
}

#[test]
fn discretizer_emits_one_token_per_segment() {
    let fitted = Fitted::fit(20, 3, 1).unwrap();
    let centroids = fitted.centroids();
    assert_eq!(centroids.len(), 3);
    assert!(centroids.iter().all(|c| c.len() == 20));
    let series = synthetic_series(0, 200, 40, 0.3, 9).unwrap();
    let tokens = fitted.tokens(&series).unwrap();
    assert_eq!(tokens.len(), 10);
    assert!(tokens.iter().all(|&t| t < 3));
}
