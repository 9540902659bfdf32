//! Run configurations.
//!
//! A config is a JSON object with an `experiment` field naming one of the
//! commands; the remaining fields depend on the experiment. Unknown fields
//! are rejected. Validation errors carry the JSON pointer of the offending
//! field.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use walklab_core::group::GroupSpec;
use walklab_core::occupation::{TailModel, WindowLaw};
use walklab_core::profiles::Strategy;
use walklab_core::regularity::TildeVariant;
use walklab_core::walk::{parse_rational, Kernel};
use walklab_core::Rational;

use crate::error::{CliError, CliResult};

/// A group name together with its parsed specification.
#[derive(Clone, Debug)]
pub struct GroupName {
    pub text: String,
    pub spec: GroupSpec,
}

impl<'de> Deserialize<'de> for GroupName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let spec = text
            .parse::<GroupSpec>()
            .map_err(serde::de::Error::custom)?;
        Ok(Self { text, spec })
    }
}

impl Serialize for GroupName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

/// A rational written as `"p/q"`, a decimal string or an integer.
#[derive(Clone, Debug)]
pub struct RationalText {
    pub text: String,
    pub value: Rational,
}

impl<'de> Deserialize<'de> for RationalText {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(i) => i.to_string(),
            Raw::Text(s) => s,
        };
        let value = parse_rational(&text).map_err(serde::de::Error::custom)?;
        Ok(Self { text, value })
    }
}

impl Serialize for RationalText {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

/// Step distribution. Without fields: the simple walk. With `hold` only:
/// the lazy simple walk. With `weights`: one weight per generator.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<RationalText>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<RationalText>,
}

impl KernelConfig {
    pub fn build(&self, group: &GroupSpec) -> CliResult<Kernel> {
        let deg = group.degree();
        let inverse: Vec<usize> = (0..deg).map(|s| group.inverse_of(s)).collect();
        let hold = match &self.hold {
            Some(h) => {
                let one = Rational::from_integer(1);
                if h.value < Rational::from_integer(0) || h.value > one {
                    return Err(CliError::invalid(
                        "/kernel/hold",
                        format!("holding probability {} is outside [0, 1]", h.value),
                    ));
                }
                h.value
            }
            None => Rational::from_integer(0),
        };
        let kernel = match &self.weights {
            None if self.hold.is_none() => Ok(Kernel::uniform(deg)),
            None => Kernel::lazy(deg, hold),
            Some(w) => {
                if w.len() != deg {
                    return Err(CliError::invalid(
                        "/kernel/weights",
                        format!("expected {deg} weights, got {}", w.len()),
                    ));
                }
                if let Some(s) = (0..deg).find(|&s| w[s].value != w[inverse[s]].value) {
                    return Err(CliError::invalid(
                        &format!("/kernel/weights/{s}"),
                        format!(
                            "weight of generator {s} differs from its inverse {}",
                            inverse[s]
                        ),
                    ));
                }
                Kernel::new(w.iter().map(|x| x.value).collect(), hold)
            }
        }
        .map_err(|e| CliError::invalid("/kernel", e.to_string()))?;
        kernel
            .check_symmetric(&inverse)
            .map_err(|e| CliError::invalid("/kernel", e.to_string()))?;
        Ok(kernel)
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub group: GroupName,
    pub radius: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub group: GroupName,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Ball radius to enumerate; not needed when `ball` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<u32>,
    /// Ball segment written by the `ball` command, used instead of enumerating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<PathBuf>,
    pub steps: Vec<u64>,
    pub rs: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
    /// Killed-walk survival `P(τ_r > k)` for these radii at every step in `steps`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exit_radii: Vec<u32>,
}

fn default_strategy() -> String {
    "structured".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub group: GroupName,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub radius: u32,
    /// Exhaustive search up to this volume (0 to skip).
    #[serde(default)]
    pub exact_n: usize,
    /// Volumes for UPPER witnesses.
    #[serde(default)]
    pub grid: Vec<u64>,
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Add the LOWER bound from growth.
    #[serde(default = "yes")]
    pub csc: bool,
}

fn yes() -> bool {
    true
}

impl ProfileConfig {
    pub fn strategy(&self) -> CliResult<Strategy> {
        self.strategy
            .parse()
            .map_err(|e: walklab_core::Error| CliError::invalid("/strategy", e.to_string()))
    }
}

/// A `(Φ upper, Λ lower)` pair of monotone models.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ModelConfig {
    /// Certified models for the simple walk on `ℤ`.
    Line,
    /// Certified models for `ℤ₂ ≀ ℤ`, with growth read from a ball.
    Lamplighter { radius: u32 },
    /// `a·x^{−p}(ln x)^{−q}` for each of `phi` and `lambda`.
    PowerLog { phi: [f64; 3], lambda: [f64; 3] },
    /// Tables from a `profile.json` written by the profile command.
    Table { path: PathBuf },
}

fn default_c() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    pub ns: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cor17Config {
    pub ks: Vec<f64>,
    pub r: f64,
    pub beta: f64,
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub models: ModelConfig,
    #[serde(default = "default_c")]
    pub c: f64,
    pub ks: Vec<u64>,
    pub rs: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transforms: Option<TransformConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cor17: Option<Cor17Config>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominationConfig {
    pub group: GroupName,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub radius: u32,
    pub ks: Vec<u64>,
    pub rs: Vec<u64>,
    pub models: ModelConfig,
    #[serde(default = "default_c")]
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainsConfig {
    pub count: usize,
    pub size: usize,
    pub density: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub group: GroupName,
    pub radius: u32,
    /// `W` is the ball of this radius around the identity.
    pub set_radius: u32,
    /// Steps for the first-moment identity.
    pub ks: Vec<usize>,
    /// Markov-step levels, each tested from `k = χ_W(ℓ)` on.
    #[serde(default)]
    pub ells: Vec<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProoflabConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chains: Option<ChainsConfig>,
    #[serde(default)]
    pub ns: Vec<usize>,
    #[serde(default)]
    pub ells: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedProfile {
    pub name: String,
    /// `[a, p, q]` for `a·x^{−p}(ln x)^{−q}`.
    pub power_log: [f64; 3],
}

fn default_threshold() -> f64 {
    walklab_core::bounds::DOUBLING_THRESHOLD
}

fn default_variant() -> TildeVariant {
    TildeVariant::Display
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductConfig {
    pub radius: u32,
    #[serde(default = "two")]
    pub m: u32,
}

fn two() -> u32 {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityConfig {
    pub profiles: Vec<NamedProfile>,
    pub m_lo: u32,
    pub m_hi: u32,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_variant")]
    pub variant: TildeVariant,
    /// Growth-based product check of `ℤ` against `ℤ^m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<ProductConfig>,
}

fn default_horizon() -> usize {
    1 << 14
}

fn default_leak() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub law: WindowLaw,
    pub n: usize,
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationConfig {
    pub group: GroupName,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Ball radius; defaults to `2·max(r) + 8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<u32>,
    pub r: Vec<u32>,
    pub p: Vec<u32>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_leak")]
    pub leak_budget: f64,
    /// Defaults to the Gaussian model on lattices and to no model elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleConfig>,
}

impl OccupationConfig {
    pub fn radius(&self) -> u32 {
        self.radius
            .unwrap_or_else(|| 2 * self.r.iter().copied().max().unwrap_or(0) + 8)
    }

    pub fn tail(&self) -> TailModel {
        match (self.tail, self.group.spec.family()) {
            (Some(t), _) => t,
            (None, walklab_core::group::Family::Zd(_)) => TailModel::Gaussian,
            (None, _) => TailModel::None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Experiment {
    Ball(BallConfig),
    Walk(WalkConfig),
    Profile(ProfileConfig),
    Bound(BoundConfig),
    Domination(DominationConfig),
    Prooflab(ProoflabConfig),
    Regularity(RegularityConfig),
    Occupation(OccupationConfig),
}

pub const EXPERIMENTS: [&str; 8] = [
    "ball",
    "walk",
    "profile",
    "bound",
    "check-domination",
    "prooflab",
    "regularity",
    "occupation",
];

fn pointer(path: &serde_path_to_error::Path, message: &str) -> String {
    use serde_path_to_error::Segment;
    let mut p = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => p.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                p.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1")))
            }
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    // Missing fields are reported at their parent.
    if let Some(rest) = message.strip_prefix("missing field `") {
        if let Some(name) = rest.split('`').next() {
            p.push('/');
            p.push_str(name);
        }
    }
    if p.is_empty() {
        "/".into()
    } else {
        p
    }
}

fn parse_as<T: DeserializeOwned>(v: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let message = e.inner().to_string();
        CliError::ConfigInvalid {
            pointer: pointer(e.path(), &message),
            message,
        }
    })
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Ball(_) => "ball",
            Experiment::Walk(_) => "walk",
            Experiment::Profile(_) => "profile",
            Experiment::Bound(_) => "bound",
            Experiment::Domination(_) => "check-domination",
            Experiment::Prooflab(_) => "prooflab",
            Experiment::Regularity(_) => "regularity",
            Experiment::Occupation(_) => "occupation",
        }
    }

    /// Parse a config object. `forced` overrides (or supplies) the
    /// `experiment` field, as when a subcommand is given a config file.
    pub fn from_value(mut v: Value, forced: Option<&str>) -> CliResult<Self> {
        let obj = v
            .as_object_mut()
            .ok_or_else(|| CliError::invalid("/", "config must be a JSON object"))?;
        let named = obj.remove("experiment");
        let name = match (forced, &named) {
            (Some(f), Some(Value::String(n))) if n != f => {
                return Err(CliError::invalid(
                    "/experiment",
                    format!("config is for `{n}`, not `{f}`"),
                ))
            }
            (Some(f), _) => f.to_string(),
            (None, Some(Value::String(n))) => n.clone(),
            (None, Some(_)) => return Err(CliError::invalid("/experiment", "must be a string")),
            (None, None) => {
                return Err(CliError::invalid(
                    "/experiment",
                    "missing field `experiment`",
                ))
            }
        };
        let exp = match name.as_str() {
            "ball" => Experiment::Ball(parse_as(v)?),
            "walk" => Experiment::Walk(parse_as(v)?),
            "profile" => Experiment::Profile(parse_as(v)?),
            "bound" => Experiment::Bound(parse_as(v)?),
            "check-domination" => Experiment::Domination(parse_as(v)?),
            "prooflab" => Experiment::Prooflab(parse_as(v)?),
            "regularity" => Experiment::Regularity(parse_as(v)?),
            "occupation" => Experiment::Occupation(parse_as(v)?),
            other => {
                return Err(CliError::invalid(
                    "/experiment",
                    format!(
                        "unknown experiment `{other}` (expected one of {})",
                        EXPERIMENTS.join(", ")
                    ),
                ))
            }
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn from_json(text: &str, forced: Option<&str>) -> CliResult<Self> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| CliError::invalid("/", e.to_string()))?;
        Self::from_value(v, forced)
    }

    /// The config as a JSON value, `experiment` included.
    pub fn echo(&self) -> Value {
        let mut v = match self {
            Experiment::Ball(c) => serde_json::to_value(c),
            Experiment::Walk(c) => serde_json::to_value(c),
            Experiment::Profile(c) => serde_json::to_value(c),
            Experiment::Bound(c) => serde_json::to_value(c),
            Experiment::Domination(c) => serde_json::to_value(c),
            Experiment::Prooflab(c) => serde_json::to_value(c),
            Experiment::Regularity(c) => serde_json::to_value(c),
            Experiment::Occupation(c) => serde_json::to_value(c),
        }
        .expect("configs serialize");
        v.as_object_mut()
            .unwrap()
            .insert("experiment".into(), Value::String(self.name().into()));
        v
    }

    /// Seeds that influence the outputs.
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Experiment::Walk(c) => c.monte_carlo.iter().map(|m| m.seed).collect(),
            Experiment::Profile(c) => vec![c.seed],
            Experiment::Prooflab(c) => c.chains.iter().map(|m| m.seed).collect(),
            Experiment::Occupation(c) => c.counterexample.iter().map(|m| m.seed).collect(),
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> CliResult<()> {
        let within = |ptr: &str, rs: &[u32], radius: u32| -> CliResult<()> {
            if let Some((i, r)) = rs.iter().enumerate().find(|(_, &r)| r > radius) {
                return Err(CliError::invalid(
                    &format!("{ptr}/{i}"),
                    format!("radius {r} exceeds ball radius {radius}"),
                ));
            }
            Ok(())
        };
        let nonempty = |ptr: &str, len: usize| -> CliResult<()> {
            if len == 0 {
                return Err(CliError::invalid(ptr, "must not be empty"));
            }
            Ok(())
        };
        match self {
            Experiment::Ball(_) => {}
            Experiment::Walk(c) => {
                c.kernel.build(&c.group.spec)?;
                nonempty("/steps", c.steps.len())?;
                nonempty("/rs", c.rs.len())?;
                match (c.radius, &c.ball) {
                    (Some(radius), _) => {
                        within("/rs", &c.rs, radius)?;
                        within("/exit_radii", &c.exit_radii, radius)?;
                    }
                    (None, None) => {
                        return Err(CliError::invalid("/radius", "need `radius` or `ball`"))
                    }
                    // Checked against the segment once it is loaded.
                    (None, Some(_)) => {}
                }
            }
            Experiment::Profile(c) => {
                c.kernel.build(&c.group.spec)?;
                c.strategy()?;
                if c.exact_n > walklab_core::profiles::EXACT_CAP {
                    return Err(CliError::invalid(
                        "/exact_n",
                        format!(
                            "exhaustive search is capped at {}",
                            walklab_core::profiles::EXACT_CAP
                        ),
                    ));
                }
                if c.exact_n == 0 && c.grid.is_empty() {
                    return Err(CliError::invalid(
                        "/grid",
                        "need exact_n > 0 or a nonempty grid",
                    ));
                }
            }
            Experiment::Bound(c) => {
                nonempty("/ks", c.ks.len())?;
                nonempty("/rs", c.rs.len())?;
                if !(c.c > 0.0) {
                    return Err(CliError::invalid("/c", "must be positive"));
                }
            }
            Experiment::Domination(c) => {
                c.kernel.build(&c.group.spec)?;
                nonempty("/ks", c.ks.len())?;
                nonempty("/rs", c.rs.len())?;
                let rs: Vec<u32> =
                    c.rs.iter()
                        .map(|&r| r.min(u32::MAX as u64) as u32)
                        .collect();
                within("/rs", &rs, c.radius)?;
            }
            Experiment::Prooflab(c) => {
                if c.chains.is_none() && c.wall.is_none() {
                    return Err(CliError::invalid("/chains", "need `chains` or `wall`"));
                }
                if let Some(ch) = &c.chains {
                    if ch.size == 0 || ch.size > walklab_core::prooflab::CHAIN_CAP {
                        return Err(CliError::invalid(
                            "/chains/size",
                            format!("must be in 1..={}", walklab_core::prooflab::CHAIN_CAP),
                        ));
                    }
                    nonempty("/ns", c.ns.len())?;
                    nonempty("/ells", c.ells.len())?;
                }
                if let Some(w) = &c.wall {
                    if w.set_radius > w.radius {
                        return Err(CliError::invalid(
                            "/wall/set_radius",
                            "exceeds the ball radius",
                        ));
                    }
                }
            }
            Experiment::Regularity(c) => {
                nonempty("/profiles", c.profiles.len())?;
                if c.m_hi < c.m_lo + 2 {
                    return Err(CliError::invalid("/m_hi", "need m_hi ≥ m_lo + 2"));
                }
            }
            Experiment::Occupation(c) => {
                c.kernel.build(&c.group.spec)?;
                nonempty("/r", c.r.len())?;
                nonempty("/p", c.p.len())?;
                within("/r", &c.r, c.radius())?;
                if let Some((i, _)) = c.p.iter().enumerate().find(|(_, &p)| p == 0) {
                    return Err(CliError::invalid(
                        &format!("/p/{i}"),
                        "p must be at least 1",
                    ));
                }
            }
        }
        Ok(())
    }
}
