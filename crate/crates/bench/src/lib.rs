//! Fixtures shared by the benchmarks: seeded instances from the experiment
//! generator so timings are comparable across runs.

use ndro_core::experiment::{generate_instance, ExperimentConfig, SupportKind};
use ndro_core::{MinVarInstance, NormTag};

pub const SIZES: [usize; 3] = [5, 25, 50];

pub fn ellipsoid_instance(n: usize, rho: f64) -> MinVarInstance {
    let cfg = ExperimentConfig {
        n,
        rho_list: vec![rho],
        ..ExperimentConfig::default()
    };
    generate_instance(&cfg).expect("valid fixture config")
}

pub fn unconstrained_instance(n: usize, rho: f64, norm: NormTag) -> MinVarInstance {
    let cfg = ExperimentConfig {
        n,
        rho_list: vec![rho],
        support: SupportKind::Unconstrained,
        norm,
        ..ExperimentConfig::default()
    };
    generate_instance(&cfg).expect("valid fixture config")
}

pub fn uniform_portfolio(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
