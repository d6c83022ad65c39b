mod common;

use common::similarity::{exact_case, grid_search_similarity, noisy_case, param_distance, sse};
use phacosim_core::geometry::fit_similarity;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exact_configurations_are_recovered(seed in any::<u64>(), k in 2usize..20) {
        let c = exact_case(&mut ChaCha8Rng::seed_from_u64(seed), k);
        let fit = fit_similarity(&c.src, &c.dst).unwrap();
        prop_assert!(fit.rms < 1e-9, "rms {}", fit.rms);
        prop_assert!(param_distance(&fit.transform, &c.truth) < 1e-9);
    }
}

#[test]
fn noisy_fit_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..12 {
        let c = noisy_case(&mut rng, 3 + case % 6);
        let fit = fit_similarity(&c.src, &c.dst).unwrap();
        let oracle = grid_search_similarity(&c.src, &c.dst);
        assert!(fit.rms > 0.0);
        let d = param_distance(&fit.transform, &oracle);
        assert!(
            d < 1e-3,
            "case {case}: closed form {:?} vs grid {oracle:?} ({d})",
            fit.transform
        );
        assert!(sse(&c.src, &c.dst, &fit.transform) <= sse(&c.src, &c.dst, &oracle) + 1e-9);
    }
}
