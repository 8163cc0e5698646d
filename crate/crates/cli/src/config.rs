//! Run configuration read from TOML.

use std::path::Path;

use prestrain_core::elastic::{law_from_descriptor, ElasticLaw, LawDescriptor};
use prestrain_core::midsurface::{Grid, SurfaceSpec};
use prestrain_core::prestrain::{AbarSpec, BSpec, PrestrainSpec};
use prestrain_core::{SymMat2, SymMat3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Reduce,
    Energy,
    Sweep,
    Wrinkle,
    Regimes,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Reduce => "reduce",
            Command::Energy => "energy",
            Command::Sweep => "sweep",
            Command::Wrinkle => "wrinkle",
            Command::Regimes => "regimes",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n1: 33, n2: 33 }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Grid {
        Grid::unit(self.n1, self.n2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest accepted final relative error of a sweep.
    pub max_relative_error: f64,
    /// Isometry gate for limit energies.
    pub isometry: f64,
    /// Accepted relative gap between closed-form and direct limit energies.
    pub energy_agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            max_relative_error: 0.02,
            isometry: 1e-3,
            energy_agreement: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrinkleConfig {
    /// Membrane strain to be absorbed by the corrugation.
    pub s: SymMat2,
    pub k: f64,
    pub gamma: f64,
    pub max_relative_error: f64,
}

impl Default for WrinkleConfig {
    fn default() -> Self {
        Self {
            s: SymMat2::diag(0.5, 0.0),
            k: 1.0,
            gamma: 0.4,
            max_relative_error: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimesConfig {
    pub cylinder_alpha: Vec<f64>,
    pub cylinder_h: Vec<f64>,
    pub corner_lambda: f64,
    pub corner_h: Vec<f64>,
    pub oscillation_alpha: f64,
    pub oscillation_beta: f64,
    pub oscillation_h: Vec<f64>,
    pub rotation_pairs: usize,
    pub rotation_samples: usize,
    pub metric_h: Vec<f64>,
    /// Grid for the gradient-restricted minimization; uses the config prestrain and law.
    pub gap_grid: GridConfig,
    pub gap_max_iterations: usize,
}

impl Default for RegimesConfig {
    fn default() -> Self {
        Self {
            cylinder_alpha: vec![0.5, 1.0, 2.0],
            cylinder_h: vec![1e-1, 1e-2, 1e-3],
            corner_lambda: 1.0,
            corner_h: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            oscillation_alpha: 2.3,
            oscillation_beta: 1.2,
            oscillation_h: vec![1e-2, 1e-3, 1e-4, 1e-5],
            rotation_pairs: 10,
            rotation_samples: 10_000,
            metric_h: vec![1e-1, 3e-2, 1e-2, 3e-3],
            gap_grid: GridConfig { n1: 17, n2: 17 },
            gap_max_iterations: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
    /// Laws to check; the configured law is always included first.
    pub extra_laws: Vec<LawDescriptor>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            extra_laws: vec![LawDescriptor::Isotropic { mu: 1.0, lambda: 1.0 }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, must match the subcommand.
    pub command: Option<Command>,
    pub law: LawDescriptor,
    pub prestrain: PrestrainSpec,
    pub surface: SurfaceSpec,
    pub grid: GridConfig,
    pub quad_nodes: usize,
    pub h_list: Vec<f64>,
    pub tolerances: Tolerances,
    pub wrinkle: WrinkleConfig,
    pub regimes: RegimesConfig,
    pub verify: VerifyConfig,
    pub seed: u64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            law: LawDescriptor::Dist,
            prestrain: PrestrainSpec {
                abar: AbarSpec::Identity,
                b: BSpec::Zero,
            },
            surface: SurfaceSpec::Plane,
            grid: GridConfig::default(),
            quad_nodes: 16,
            h_list: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            tolerances: Tolerances::default(),
            wrinkle: WrinkleConfig::default(),
            regimes: RegimesConfig::default(),
            verify: VerifyConfig::default(),
            seed: 0,
            threads: 0,
        }
    }
}

fn bad(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn check_h_list(path: &str, h: &[f64]) -> Result<(), CliError> {
    if h.is_empty() {
        return Err(bad(path, "must not be empty"));
    }
    if let Some(v) = h.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(bad(path, format!("entries must lie in (0, 1), got {v}")));
    }
    if h.windows(2).any(|w| w[1] >= w[0]) {
        return Err(bad(path, "must be strictly decreasing"));
    }
    Ok(())
}

fn check_grid(path: &str, g: &GridConfig) -> Result<(), CliError> {
    if g.n1 < 3 || g.n2 < 3 {
        return Err(bad(path, format!("needs at least 3×3 nodes, got {}×{}", g.n1, g.n2)));
    }
    Ok(())
}

fn check_spd(path: &str, m: &SymMat3) -> Result<(), CliError> {
    if !m.is_spd() {
        return Err(bad(path, "must be symmetric positive definite"));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let span = e
                .span()
                .map(|s| format!(" at bytes {}..{}", s.start, s.end))
                .unwrap_or_default();
            bad("<root>", format!("{}{span}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_grid("grid", &self.grid)?;
        check_grid("regimes.gap_grid", &self.regimes.gap_grid)?;
        if !(1..=64).contains(&self.quad_nodes) {
            return Err(bad("quad_nodes", format!("must be in 1..=64, got {}", self.quad_nodes)));
        }
        check_h_list("h_list", &self.h_list)?;
        check_h_list("regimes.cylinder_h", &self.regimes.cylinder_h)?;
        check_h_list("regimes.corner_h", &self.regimes.corner_h)?;
        check_h_list("regimes.oscillation_h", &self.regimes.oscillation_h)?;
        check_h_list("regimes.metric_h", &self.regimes.metric_h)?;
        if let AbarSpec::Constant { value } = &self.prestrain.abar {
            check_spd("prestrain.abar.value", value)?;
        }
        if let BSpec::Layers { breaks, values } = &self.prestrain.b {
            if values.len() != breaks.len() + 1 {
                return Err(bad("prestrain.b.values", "needs one more value than breaks"));
            }
            if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.iter().any(|b| b.abs() >= 0.5) {
                return Err(bad("prestrain.b.breaks", "must be increasing and inside (-1/2, 1/2)"));
            }
        }
        match self.surface {
            SurfaceSpec::Cylinder { rho } | SurfaceSpec::Sphere { rho } if rho.is_nan() || rho <= 0.0 => {
                return Err(bad("surface.rho", "must be positive"));
            }
            SurfaceSpec::StretchedPlane { a, b } if !(a > 0.0 && b > 0.0) => {
                return Err(bad("surface", "stretch factors must be positive"));
            }
            _ => {}
        }
        if self.tolerances.max_relative_error.is_nan() || self.tolerances.max_relative_error <= 0.0 {
            return Err(bad("tolerances.max_relative_error", "must be positive"));
        }
        if !(self.wrinkle.gamma > 0.0 && self.wrinkle.gamma < 0.5) {
            return Err(bad("wrinkle.gamma", "must lie in (0, 1/2)"));
        }
        self.law()?;
        for (i, d) in self.verify.extra_laws.iter().enumerate() {
            law_from_descriptor(d).map_err(|e| bad(&format!("verify.extra_laws[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn law(&self) -> Result<Arc<dyn ElasticLaw>, CliError> {
        law_from_descriptor(&self.law).map_err(|e| bad("law", e.to_string()))
    }

    /// Reject a `command` field that names a different subcommand.
    pub fn check_command(&self, cmd: Command) -> Result<(), CliError> {
        match self.command {
            Some(c) if c != cmd => Err(bad(
                "command",
                format!("config is for `{}`, invoked as `{}`", c.name(), cmd.name()),
            )),
            _ => Ok(()),
        }
    }
}
