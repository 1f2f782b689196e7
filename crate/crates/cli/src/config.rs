//! Experiment configuration: one JSON document tagged by `command`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlab_core::design::PropositionConfig;
use nlab_core::domain::{BoundaryCondition, Domain, Grid};
use nlab_core::harness::SolverConfig;
use serde::{Deserialize, Serialize};

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Theorem2(Theorem2Config),
    Theorem1(Theorem1Config),
    ProofChain(ProofChainConfig),
    Lemma(LemmaConfig),
    Proposition(PropositionSweepConfig),
    TransportSelftest(SelftestConfig),
}

/// Command names as they appear on the command line and in `command`.
pub const COMMANDS: [&str; 6] = [
    "theorem2",
    "theorem1",
    "proof-chain",
    "lemma",
    "proposition",
    "transport-selftest",
];

/// Invalid configuration, reported as a usage error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ExperimentConfig {
    /// Default configuration of a command.
    pub fn default_for(command: &str) -> Result<Self, ConfigError> {
        Ok(match command {
            "theorem2" => ExperimentConfig::Theorem2(Default::default()),
            "theorem1" => ExperimentConfig::Theorem1(Default::default()),
            "proof-chain" => ExperimentConfig::ProofChain(Default::default()),
            "lemma" => ExperimentConfig::Lemma(Default::default()),
            "proposition" => ExperimentConfig::Proposition(Default::default()),
            "transport-selftest" => ExperimentConfig::TransportSelftest(Default::default()),
            other => {
                return Err(ConfigError(format!(
                    "unknown command `{other}`; expected one of {}",
                    COMMANDS.join(", ")
                )))
            }
        })
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        if text.trim().is_empty() {
            return Err(ConfigError("config is empty".into()));
        }
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn command(&self) -> &'static str {
        match self {
            ExperimentConfig::Theorem2(_) => "theorem2",
            ExperimentConfig::Theorem1(_) => "theorem1",
            ExperimentConfig::ProofChain(_) => "proof-chain",
            ExperimentConfig::Lemma(_) => "lemma",
            ExperimentConfig::Proposition(_) => "proposition",
            ExperimentConfig::TransportSelftest(_) => "transport-selftest",
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            ExperimentConfig::Theorem2(c) => c.out.as_deref(),
            ExperimentConfig::Theorem1(c) => c.out.as_deref(),
            ExperimentConfig::ProofChain(c) => c.out.as_deref(),
            ExperimentConfig::Lemma(c) => c.out.as_deref(),
            ExperimentConfig::Proposition(c) => c.out.as_deref(),
            ExperimentConfig::TransportSelftest(c) => c.out.as_deref(),
        }
    }

    pub fn set_out(&mut self, dir: PathBuf) {
        let slot = match self {
            ExperimentConfig::Theorem2(c) => &mut c.out,
            ExperimentConfig::Theorem1(c) => &mut c.out,
            ExperimentConfig::ProofChain(c) => &mut c.out,
            ExperimentConfig::Lemma(c) => &mut c.out,
            ExperimentConfig::Proposition(c) => &mut c.out,
            ExperimentConfig::TransportSelftest(c) => &mut c.out,
        };
        *slot = Some(dir);
    }

    /// Base seed, for commands that draw random data.
    pub fn seed_mut(&mut self) -> Option<&mut u64> {
        match self {
            ExperimentConfig::Theorem2(c) => Some(&mut c.fields.seed),
            ExperimentConfig::Theorem1(c) => Some(&mut c.fields.seed),
            ExperimentConfig::ProofChain(c) => Some(&mut c.fields.seed),
            ExperimentConfig::TransportSelftest(c) => Some(&mut c.seed),
            ExperimentConfig::Lemma(_) | ExperimentConfig::Proposition(_) => None,
        }
    }

    /// Field sampling block, for the commands that build fields.
    pub fn fields_mut(&mut self) -> Option<&mut FieldSet> {
        match self {
            ExperimentConfig::Theorem2(c) => Some(&mut c.fields),
            ExperimentConfig::Theorem1(c) => Some(&mut c.fields),
            ExperimentConfig::ProofChain(c) => Some(&mut c.fields),
            _ => None,
        }
    }

    /// Exponents `p`, for the commands that take them.
    pub fn p_mut(&mut self) -> Option<&mut Vec<f64>> {
        match self {
            ExperimentConfig::Theorem2(c) => Some(&mut c.p),
            ExperimentConfig::ProofChain(c) => Some(&mut c.p),
            _ => None,
        }
    }

    /// Checks parameters that the numerical modules would reject late or not at all.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, why: &str| Err(ConfigError(format!("{field}: {why}")));
        let check_p = |p: &[f64]| {
            if p.is_empty() {
                return bad("p", "at least one exponent is required");
            }
            if let Some(x) = p.iter().find(|&&x| !(x >= 1.0 && x.is_finite())) {
                return bad("p", &format!("exponent {x} must be finite and at least 1"));
            }
            Ok(())
        };
        match self {
            ExperimentConfig::Theorem2(c) => {
                c.fields.validate()?;
                check_p(&c.p)
            }
            ExperimentConfig::Theorem1(c) => {
                c.fields.validate()?;
                if c.fields.families.contains(&Family::Bump) {
                    return bad("fields.families", "theorem1 needs sine or random fields");
                }
                if c.fields.families.contains(&Family::Random) && c.fields.n.iter().any(|&n| n < 2)
                {
                    return bad("fields.n", "orthogonality indices must be at least 2");
                }
                Ok(())
            }
            ExperimentConfig::ProofChain(c) => {
                c.fields.validate()?;
                check_p(&c.p)
            }
            ExperimentConfig::Lemma(c) => {
                if c.shapes.is_empty() {
                    return bad("shapes", "at least one shape is required");
                }
                if c.levels == 0 {
                    return bad("levels", "must be positive");
                }
                let suite = nlab_core::lemma::standard_suite();
                for s in &c.shapes {
                    if !suite.iter().any(|t| t.name() == s) {
                        return bad("shapes", &format!("unknown shape `{s}`"));
                    }
                }
                Ok(())
            }
            ExperimentConfig::Proposition(c) => {
                if c.n < 2 {
                    return bad("n", "a design needs at least two points");
                }
                if !(c.t_min > 0.0 && c.t_max > c.t_min && c.t_max.is_finite()) {
                    return bad("t_min/t_max", "need 0 < t_min < t_max");
                }
                if c.t_count < 2 {
                    return bad("t_count", "need at least two times");
                }
                Ok(())
            }
            ExperimentConfig::TransportSelftest(c) => {
                if c.instances == 0 {
                    return bad("instances", "must be positive");
                }
                if c.max_side == 0 || c.max_side > nlab_core::transport::selftest::MAX_SIDE {
                    return bad("max_side", "must lie in 1..=6");
                }
                Ok(())
            }
        }
    }
}

/// Geometry of the field commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainSpec {
    Torus,
    SquareDirichlet,
    SquareNeumann,
}

impl DomainSpec {
    pub fn domain(self) -> Domain {
        match self {
            DomainSpec::Torus => Domain::torus(),
            DomainSpec::SquareDirichlet => Domain::square(BoundaryCondition::Dirichlet),
            DomainSpec::SquareNeumann => Domain::square(BoundaryCondition::Neumann),
        }
    }

    pub fn grid(self, resolution: usize) -> nlab_core::Result<Arc<Grid>> {
        Grid::lattice(self.domain(), resolution)
    }
}

/// Test-field families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `sin(m x)` on the torus, one field per entry of `m`.
    Sine,
    /// Random high-frequency fields, `count` per entry of `n`.
    Random,
    /// Mean-free Gaussian bumps at random centres, `count` of them.
    Bump,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Sine => "sine",
            Family::Random => "random",
            Family::Bump => "bump",
        }
    }
}

/// Which fields a command is run on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSet {
    pub domain: DomainSpec,
    /// Lattice nodes per side.
    pub resolution: usize,
    pub families: Vec<Family>,
    /// Sine frequencies.
    pub m: Vec<f64>,
    /// Orthogonality indices of random fields.
    pub n: Vec<usize>,
    /// Number of random modes above `n`.
    pub bandwidth: usize,
    /// Random or bump fields per index.
    pub count: usize,
    /// Base seed; field `k` of a batch uses `seed + k`.
    pub seed: u64,
    /// Bump width as a fraction of the domain side.
    pub bump_width: f64,
}

impl Default for FieldSet {
    fn default() -> Self {
        FieldSet {
            domain: DomainSpec::Torus,
            resolution: 256,
            families: vec![Family::Sine],
            m: vec![2.0, 4.0, 8.0],
            n: vec![16, 64],
            bandwidth: 64,
            count: 4,
            seed: 0,
            bump_width: 0.1,
        }
    }
}

impl FieldSet {
    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, why: String| Err(ConfigError(format!("fields.{field}: {why}")));
        if self.families.is_empty() {
            return bad("families", "at least one family is required".into());
        }
        if self.resolution < 8 {
            return bad("resolution", format!("{} is below 8", self.resolution));
        }
        for f in &self.families {
            match f {
                Family::Sine => {
                    if self.domain != DomainSpec::Torus {
                        return bad("families", "the sine family lives on the torus".into());
                    }
                    if self.m.is_empty() {
                        return bad("m", "the sine family needs frequencies".into());
                    }
                    if let Some(m) = self.m.iter().find(|&&m| !(m >= 1.0 && m.fract() == 0.0)) {
                        return bad("m", format!("{m} is not a positive integer"));
                    }
                }
                Family::Random => {
                    if self.n.is_empty() {
                        return bad("n", "random fields need orthogonality indices".into());
                    }
                    if self.bandwidth == 0 || self.count == 0 {
                        return bad("bandwidth/count", "must be positive".into());
                    }
                }
                Family::Bump => {
                    if self.count == 0 {
                        return bad("count", "must be positive".into());
                    }
                    if !(self.bump_width > 0.0 && self.bump_width < 0.5) {
                        return bad(
                            "bump_width",
                            format!("{} outside (0, 0.5)", self.bump_width),
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

/// Tolerances of `theorem2`. `None` disables a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem2Checks {
    /// Target ratio of the sine family and its relative tolerance.
    pub sine_ratio: Option<f64>,
    pub sine_ratio_tol: f64,
    /// Largest relative spread of the sine ratios across `m`.
    pub sine_spread: Option<f64>,
    /// Relative tolerance of `W_1` against `8 pi / m`.
    pub sine_w1_tol: Option<f64>,
    /// Relative tolerance of the nodal length against `4 pi m`.
    pub sine_h1_tol: Option<f64>,
    /// Largest relative gap between `W_1` and its dual certificate on the sine family.
    pub sine_dual_gap: Option<f64>,
    /// Smallest admissible ratio for every field.
    pub ratio_floor: Option<f64>,
    /// Require the dual certificate never to exceed the primal cost.
    pub dual_below_primal: bool,
}

impl Default for Theorem2Checks {
    fn default() -> Self {
        Theorem2Checks {
            sine_ratio: Some(0.5),
            sine_ratio_tol: 0.1,
            sine_spread: Some(0.1),
            sine_w1_tol: Some(0.03),
            sine_h1_tol: Some(0.01),
            sine_dual_gap: Some(0.03),
            ratio_floor: None,
            dual_below_primal: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem2Config {
    pub fields: FieldSet,
    pub p: Vec<f64>,
    pub solver: SolverConfig,
    pub checks: Theorem2Checks,
    /// Write a nodal-set SVG for every field.
    pub svg: bool,
    pub out: Option<PathBuf>,
}

impl Default for Theorem2Config {
    fn default() -> Self {
        Theorem2Config {
            fields: FieldSet::default(),
            p: vec![1.0],
            solver: SolverConfig::default(),
            checks: Theorem2Checks::default(),
            svg: true,
            out: None,
        }
    }
}

/// Tolerances of `theorem1`. `None` disables a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Checks {
    /// Fitted exponent of `lambda` on the sine family and its tolerance.
    pub sine_alpha: Option<f64>,
    pub sine_alpha_tol: f64,
    /// Smallest admissible ratio of random fields.
    pub random_ratio_floor: Option<f64>,
    /// Largest admissible `W_1 / heat bound` of random fields.
    pub c_fit_max: Option<f64>,
    /// Largest relative deviation of the per-`n` mean `c_fit` from their common mean.
    pub c_fit_stability: Option<f64>,
}

impl Default for Theorem1Checks {
    fn default() -> Self {
        Theorem1Checks {
            sine_alpha: Some(0.5),
            sine_alpha_tol: 0.1,
            random_ratio_floor: Some(0.1),
            c_fit_max: Some(3.0),
            c_fit_stability: Some(0.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Config {
    pub fields: FieldSet,
    /// Measure `W_1` of random fields against the heat-flow bound.
    pub heat_check: bool,
    pub solver: SolverConfig,
    pub checks: Theorem1Checks,
    pub out: Option<PathBuf>,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            fields: FieldSet {
                resolution: 128,
                families: vec![Family::Sine, Family::Random],
                m: vec![2.0, 4.0, 8.0, 16.0],
                count: 20,
                n: vec![16, 64, 256],
                ..FieldSet::default()
            },
            heat_check: true,
            solver: SolverConfig {
                support_cap: 1024,
                dual_bound: false,
            },
            checks: Theorem1Checks::default(),
            out: None,
        }
    }
}

/// Tolerances of `proof-chain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProofChainChecks {
    /// Require the Hölder step (within its built-in slack) on every field.
    pub holder: bool,
    /// Relative tolerance of Hölder equality on the sine family at `p = 1`.
    pub sine_equality_tol: Option<f64>,
    /// Require the per-component depth bound on every field.
    pub depth: bool,
}

impl Default for ProofChainChecks {
    fn default() -> Self {
        ProofChainChecks {
            holder: true,
            sine_equality_tol: Some(0.05),
            depth: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProofChainConfig {
    pub fields: FieldSet,
    pub p: Vec<f64>,
    pub solver: SolverConfig,
    pub checks: ProofChainChecks,
    pub out: Option<PathBuf>,
}

impl Default for ProofChainConfig {
    fn default() -> Self {
        ProofChainConfig {
            fields: FieldSet {
                resolution: 128,
                families: vec![Family::Sine, Family::Random],
                n: vec![20],
                bandwidth: 40,
                count: 20,
                ..FieldSet::default()
            },
            p: vec![1.0, 2.0],
            solver: SolverConfig {
                support_cap: 1024,
                dual_bound: false,
            },
            checks: ProofChainChecks::default(),
            out: None,
        }
    }
}

/// Tolerances of `lemma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaChecks {
    /// Largest admissible ratio over rows that satisfy the precondition.
    pub max_ratio: Option<f64>,
    /// Relative tolerance of the disk ratio against 1 at the smallest eps.
    pub disk_limit_tol: Option<f64>,
}

impl Default for LemmaChecks {
    fn default() -> Self {
        LemmaChecks {
            max_ratio: Some(2.0),
            disk_limit_tol: Some(0.05),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    /// Names from the standard suite: disk, square, ellipse, l_shape, star, annulus.
    pub shapes: Vec<String>,
    /// Halvings of eps below `sqrt(area) / 8`.
    pub levels: usize,
    pub checks: LemmaChecks,
    pub out: Option<PathBuf>,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            shapes: ["disk", "square", "ellipse", "l_shape", "star", "annulus"]
                .map(String::from)
                .to_vec(),
            levels: 6,
            checks: LemmaChecks::default(),
            out: None,
        }
    }
}

/// Tolerances of `proposition`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropositionChecks {
    pub h1_slope: Option<f64>,
    pub h1_slope_tol: f64,
    pub linf_slope: Option<f64>,
    pub linf_slope_tol: f64,
    /// Largest `|integral f_t| / ||f_t||_1`.
    pub integral_tol: Option<f64>,
}

impl Default for PropositionChecks {
    fn default() -> Self {
        PropositionChecks {
            h1_slope: Some(0.5),
            h1_slope_tol: 0.1,
            linf_slope: Some(-1.0),
            linf_slope_tol: 0.1,
            integral_tol: Some(1e-6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropositionSweepConfig {
    /// Points of the spherical Fibonacci design.
    pub n: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Log-spaced times from `t_min` to `t_max`.
    pub t_count: usize,
    pub measure: PropositionConfig,
    pub checks: PropositionChecks,
    /// Write the nodal map at the smallest time.
    pub svg: bool,
    pub out: Option<PathBuf>,
}

impl Default for PropositionSweepConfig {
    fn default() -> Self {
        PropositionSweepConfig {
            n: 200,
            t_min: 1e-7,
            t_max: 1e-6,
            t_count: 4,
            measure: PropositionConfig::default(),
            checks: PropositionChecks::default(),
            svg: true,
            out: None,
        }
    }
}

impl PropositionSweepConfig {
    pub fn times(&self) -> Vec<f64> {
        let k = self.t_count - 1;
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        (0..=k)
            .map(|i| match i {
                0 => self.t_min,
                i if i == k => self.t_max,
                i => (a + (b - a) * i as f64 / k as f64).exp(),
            })
            .collect()
    }
}

/// Tolerances of `transport-selftest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestChecks {
    /// Largest absolute difference between the solver and enumeration.
    pub max_error: Option<f64>,
    pub dual_below_primal: bool,
}

impl Default for SelftestChecks {
    fn default() -> Self {
        SelftestChecks {
            max_error: Some(1e-9),
            dual_below_primal: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub instances: usize,
    /// Largest support per side.
    pub max_side: usize,
    pub seed: u64,
    pub checks: SelftestChecks,
    pub out: Option<PathBuf>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            instances: 50,
            max_side: 6,
            seed: 2024,
            checks: SelftestChecks::default(),
            out: None,
        }
    }
}
