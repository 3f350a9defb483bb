#![allow(dead_code)]

pub mod faults;
pub mod oracle;

use proptest::test_runner::{Config, RngSeed};

/// Fixed-seed proptest config, so every run draws the same cases.
pub fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}
