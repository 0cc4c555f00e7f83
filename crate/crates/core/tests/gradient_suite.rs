//! Finite-difference verification of every differentiable op and of each
//! network/loss pairing used in the pipeline.

use d4m_core::gradcheck;

const TOLERANCE: f64 = 1e-4;
const SEEDS: u64 = 10;

#[test]
fn op_catalogue_matches_central_differences() {
    for seed in 0..SEEDS {
        let err = gradcheck::op_catalogue_max_rel_err(seed);
        assert!(err < TOLERANCE, "seed {seed}: op-catalogue max rel err {err:.3e} >= {TOLERANCE:e}");
    }
}

#[test]
fn network_heads_match_central_differences() {
    for seed in 0..SEEDS {
        let err = gradcheck::network_max_rel_err(seed);
        assert!(err < TOLERANCE, "seed {seed}: network max rel err {err:.3e} >= {TOLERANCE:e}");
    }
}
