//! Shared fixtures for the pipeline benchmarks.

use multifrac_core::dei::ExceedanceRecord;
use multifrac_core::dynsys::{SystemSpec, Trajectory};
use multifrac_core::SplitMix64;

pub fn cat_trajectory(len: usize, seed: u64) -> Trajectory {
    Trajectory::generate(&SystemSpec::arnold_cat(), seed, 1000, len).unwrap()
}

pub fn henon_trajectory(len: usize, seed: u64) -> Trajectory {
    Trajectory::generate(&SystemSpec::henon_standard(), seed, 1000, len).unwrap()
}

/// Bernoulli exceedance record over `len` indices.
pub fn synthetic_record(len: usize, p: f64, seed: u64) -> ExceedanceRecord {
    let mut rng = SplitMix64::new(seed);
    let mut indices = Vec::new();
    for i in 0..len {
        if rng.next_f64() < p {
            indices.push(i as u64);
        }
    }
    let n = indices.len();
    ExceedanceRecord {
        threshold: 0.0,
        values: vec![1.0; n],
        indices,
        series_len: len,
        quantile: None,
    }
}
