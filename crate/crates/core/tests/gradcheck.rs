mod common;

use common::gradcheck::{layer_errors, presnet_error};

const TOLERANCE: f64 = 1e-5;

#[test]
fn layer_kernels_match_finite_differences() {
    for seed in 0..20 {
        for (name, err) in layer_errors(seed) {
            assert!(err < TOLERANCE, "seed {seed}: {name} error {err:e}");
        }
    }
}

#[test]
fn presnet_matches_finite_differences() {
    let coords = 40;
    for seed in 0..20 {
        let (err, skipped) = presnet_error(seed, coords);
        assert!(err < TOLERANCE, "seed {seed}: error {err:e}");
        // 40 parameters and 80 inputs; at most a fifth may sit on a kink.
        assert!(skipped <= (coords + 80) / 5, "seed {seed}: {skipped} entries on kinks");
    }
}
