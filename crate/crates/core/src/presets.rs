//! Named scenarios.
//!
//! The three delay regimes use 5 APs, 3 servers and 10 job types. Only the
//! magnitudes of the first type's delay and computation time are pinned by
//! the regime; every other parameter here is a preset choice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::policy::ExpectationMode;
use crate::valuefn::{EsBackend, ValueOptions};

pub const PRESET_NAMES: [&str; 5] = ["tiny", "idle", "comparable", "upload-dominant", "compute-dominant"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub config: SystemConfig,
    /// Expectation mode used for the proposed policy.
    pub expectation_mode: ExpectationMode,
    pub value_options: ValueOptions,
    pub slots: usize,
    pub replications: usize,
    /// Warmup for per-slot statistics.
    pub warmup: usize,
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "tiny" => Ok(small("tiny", 0.3)),
        "idle" => Ok(small("idle", 0.0)),
        "comparable" => Ok(large("comparable", comparable())),
        "upload-dominant" => Ok(large("upload-dominant", upload_dominant())),
        "compute-dominant" => Ok(large("compute-dominant", compute_dominant())),
        other => Err(Error::config(format!("unknown preset `{other}` (expected one of {})", PRESET_NAMES.join(", ")))),
    }
}

/// Uniform PMF on `lo..=hi` padded to `eta_max` entries.
pub fn uniform_pmf(lo: usize, hi: usize, eta_max: usize) -> Vec<f64> {
    assert!(1 <= lo && lo <= hi && hi <= eta_max);
    let p = 1.0 / (hi - lo + 1) as f64;
    (1..=eta_max).map(|x| if (lo..=hi).contains(&x) { p } else { 0.0 }).collect()
}

/// Two APs, two servers, one type; 400 states.
fn small(name: &str, lambda: f64) -> Preset {
    let config = SystemConfig {
        num_aps: 2,
        num_servers: 2,
        num_types: 1,
        arrival_prob: vec![vec![lambda]; 2],
        mean_upload_delay: vec![vec![vec![2.0, 4.0]], vec![vec![4.0, 2.0]]],
        comp_time_pmf: vec![vec![vec![0.5, 0.5]], vec![vec![0.8, 0.2]]],
        discount: 0.95,
        overflow_weight: 10.0,
        n_max: 1,
        l_max: 2,
        eta_max: 2,
    };
    Preset {
        name: name.to_string(),
        config,
        expectation_mode: ExpectationMode::Exact,
        value_options: ValueOptions::default(),
        slots: 1000,
        replications: 50,
        warmup: 100,
    }
}

fn large(name: &str, config: SystemConfig) -> Preset {
    Preset {
        name: name.to_string(),
        config,
        expectation_mode: ExpectationMode::CertaintyEquivalent,
        value_options: ValueOptions { es_backend: EsBackend::Tabulated { grid: 32 }, ..ValueOptions::default() },
        slots: 10_000,
        replications: 50,
        warmup: 1000,
    }
}

const K: usize = 5;
const M: usize = 3;
const J: usize = 10;

fn shell(
    lambda: f64,
    delay: impl Fn(usize, usize, usize) -> f64,
    pmf: impl Fn(usize, usize) -> Vec<f64>,
) -> SystemConfig {
    let comp_time_pmf: Vec<Vec<Vec<f64>>> = (0..M).map(|m| (0..J).map(|j| pmf(m, j)).collect()).collect();
    let eta_max = comp_time_pmf[0][0].len();
    SystemConfig {
        num_aps: K,
        num_servers: M,
        num_types: J,
        arrival_prob: vec![vec![lambda; J]; K],
        mean_upload_delay: (0..K).map(|k| (0..J).map(|j| (0..M).map(|m| delay(k, j, m)).collect()).collect()).collect(),
        comp_time_pmf,
        discount: 0.95,
        overflow_weight: 10.0,
        n_max: 3,
        l_max: 5,
        eta_max,
    }
}

/// Delays spread over 6..=14 slots, 10 on the first link.
fn spread_delay(k: usize, j: usize, m: usize) -> f64 {
    (6 + (4 + 2 * k + 3 * j + 5 * m) % 9) as f64
}

/// Delays about 10 slots; computation uniform on windows of 6 slots
/// starting between 6 and 10, `{10..=15}` for the first type on the first server.
fn comparable() -> SystemConfig {
    shell(0.02, spread_delay, |m, j| {
        let lo = 10 - (3 * m + 2 * j) % 5;
        uniform_pmf(lo, lo + 5, 15)
    })
}

/// Delays about 10 slots; every job computes in one slot.
fn upload_dominant() -> SystemConfig {
    let mut cfg = shell(0.3, spread_delay, |_, _| vec![1.0]);
    cfg.n_max = 6;
    cfg
}

/// One-slot delays; computation uniform on 6-slot windows, `{10..=15}`
/// for the first type on the first server. Each type has one server with
/// computation on `{1..=6}`.
fn compute_dominant() -> SystemConfig {
    shell(
        0.03,
        |_, _, _| 1.0,
        |m, j| {
            let fast = (j + 1) % M;
            let lo = if m == fast { 1 } else { 10 - (m + j) % 3 };
            uniform_pmf(lo, lo + 5, 15)
        },
    )
}
