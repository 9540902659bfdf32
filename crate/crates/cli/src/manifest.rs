use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Everything needed to reproduce and audit a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub code_version: String,
    /// SHA-256 of the config file and any tables it reads.
    pub inputs: BTreeMap<String, String>,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub outputs: BTreeMap<String, OutputEntry>,
    pub flags: Vec<String>,
    #[serde(default)]
    pub cache: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub sha256: String,
    /// Core operation that produced the numbers.
    pub operation: String,
    /// Provenance kinds present (EXACT, UPPER, LOWER, MODEL, MC).
    pub kinds: Vec<String>,
}

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn operation_of(file: &str) -> &'static str {
    match file {
        "ball.json" | "growth.csv" | "ball.wlkb" => "group::enumerate_ball",
        "walk.csv" => "walk::Evolver + walk::monte_carlo_small_ball",
        "exit.csv" => "walk::exit_time_series",
        "profile.json" | "profile.csv" => {
            "profiles::profile_exact_small + profile_upper + csc_lower"
        }
        "bound.csv" => "bounds::theorem11_bound",
        "transforms.csv" => "bounds::transform_agreement",
        "cor17.csv" => "bounds::corollary17_bound",
        "domination.csv" | "domination.json" => "bounds::empirical_domination",
        "prop21.csv" => "prooflab::prop21_verify",
        "wall.json" => {
            "prooflab::wall_normalization_check + first_moment_identity_check + markov_step_check"
        }
        "regularity.csv" | "regularity.json" => {
            "regularity::doubling_diagnostic + slowly_varying_diagnostic + tilde_interpolate"
        }
        "product.json" => "regularity::growth_product_check",
        "occupation.csv" | "occupation.json" => "occupation::occupation_moment",
        "counterexample.csv" => "occupation::counterexample_walk",
        "report.csv" => "report",
        f if f.starts_with("series/") => "report",
        _ => "unknown",
    }
}
