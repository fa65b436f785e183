//! Fixtures shared by the kernel benchmarks.

use std::sync::Arc;

use ipsplice_core::{sample_weights, AnnulusSpec, Configuration, Region, WeightField};

pub const SEED: u64 = 0x5eed;

/// Weight field on `S(radius)`.
pub fn field(radius: i32, seed: u64) -> WeightField {
    sample_weights(Region::boxed(radius), seed)
}

/// Critical threshold configuration on `Ann(n/2, n)`.
pub fn critical_annulus(n: i32, seed: u64) -> (AnnulusSpec, Configuration) {
    let ann = AnnulusSpec::half(n).expect("n >= 2");
    let wf = field(n, seed);
    let config = wf.threshold_on(Arc::new(ann.edges()), 0.5);
    (ann, config)
}
