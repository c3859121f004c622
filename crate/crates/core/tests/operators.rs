use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stein_core::*;

#[test]
fn dictionary_solutions_have_zero_mean_under_the_target() {
    let t = validate_target(Density::standard_normal(), &QuadratureConfig::default()).unwrap();
    let op = SteinOperator::gaussian(Arc::new(t.clone())).unwrap();
    let ind = build_indicator_dictionary(&t, 4, 1000).unwrap();
    let fs: Vec<TestFunction> = build_solution_dictionary(&op, &ind)
        .unwrap()
        .entries()
        .iter()
        .map(|s| s.to_test_function())
        .collect();
    let mut inside = vec![0; fs.len()];
    for rep in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (k, f) in fs.iter().enumerate() {
            let m = expected_stein(&op, f, &xs).unwrap();
            if m.value.abs() <= 4.0 * m.std_error {
                inside[k] += 1;
            }
        }
    }
    for (k, f) in fs.iter().enumerate() {
        assert!(inside[k] >= 95, "{}: {}/100 within 4 SE", f.label(), inside[k]);
    }
}

