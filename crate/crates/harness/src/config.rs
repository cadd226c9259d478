//! Scenario configuration (TOML). One file describes one scenario; every
//! field has a default so that an empty file is the desk-scale case (i).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    I,
    Ii,
    Iii,
    Iv,
    Custom,
}

impl FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Case::I),
            "ii" | "2" => Ok(Case::Ii),
            "iii" | "3" => Ok(Case::Iii),
            "iv" | "4" => Ok(Case::Iv),
            "custom" => Ok(Case::Custom),
            _ => Err(format!("unknown case `{s}` (expected i, ii, iii, iv or custom)")),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Case::I => "i",
            Case::Ii => "ii",
            Case::Iii => "iii",
            Case::Iv => "iv",
            Case::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// n = 20, N = 64.
    Desk,
    /// n = 50, N = 100 (h = 0.02, tau = 0.01).
    Paper,
}

impl Preset {
    pub fn mesh_n(self) -> usize {
        match self {
            Preset::Desk => 20,
            Preset::Paper => 50,
        }
    }

    pub fn steps(self) -> usize {
        match self {
            Preset::Desk => 64,
            Preset::Paper => 100,
        }
    }

    pub fn iterations(self) -> usize {
        match self {
            Preset::Desk => 2000,
            Preset::Paper => 10000,
        }
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset `{s}` (expected desk or paper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Forward,
    Order,
    Continuation,
    Recovery,
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "forward" => Ok(Stage::Forward),
            "order" => Ok(Stage::Order),
            "continuation" | "continue" => Ok(Stage::Continuation),
            "recovery" | "recover" => Ok(Stage::Recovery),
            _ => Err(format!("unknown stage `{s}`")),
        }
    }
}

/// Boundary flux families: `g1` switches on `cos(2 pi s)` at 0.5, `g2` and
/// `g3` switch on `cos(2 n pi s)`, n = 1..3 or 1..5, at staggered times.
/// `constant` is `eta = 1` switched on at 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExcitationKind {
    G1,
    G2,
    G3,
    Constant,
}

/// Geometry in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Disc { center: [f64; 2], radius: f64 },
    Square { center: [f64; 2], side: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    Union { parts: Vec<ShapeSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderConfig {
    pub t0: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Boundary point used for the fit.
    pub point: [f64; 2],
    pub k_max: usize,
    pub axis_k_max: usize,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig {
            t0: vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9],
            alphas: vec![0.3, 0.5, 0.8],
            point: [0.0, 0.0],
            k_max: 30,
            axis_k_max: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    /// Rational degree.
    pub degree: usize,
    /// Samples with `t < t_min` are left out of the fit.
    pub t_min: f64,
    /// Fit in `t^p` instead of `t` when set.
    pub power: Option<f64>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            degree: 4,
            t_min: 1e-3,
            power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    /// Defaults to the preset budget.
    pub iterations: Option<usize>,
    pub beta: f64,
    /// Heaviside width as a multiple of `h`.
    pub eps_factor: f64,
    /// Level-set step. When absent the first step is scaled to move the
    /// level set by at most `h`.
    pub gamma: Option<f64>,
    pub gamma_a1: f64,
    pub gamma_a2: f64,
    pub a1_init: f64,
    pub a2_init: f64,
    pub monotone: bool,
    pub snapshot_every: usize,
    /// Defaults to the case's initial guess.
    pub initial: Option<ShapeSpec>,
    /// Recover from the exact reduced data `h*` instead of continued data.
    pub exact_reduced_data: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            iterations: None,
            beta: 1e-8,
            eps_factor: 1.0,
            gamma: None,
            gamma_a1: 0.0,
            gamma_a2: 0.0,
            a1_init: 0.9,
            a2_init: 10.0,
            monotone: false,
            snapshot_every: 100,
            initial: None,
            exact_reduced_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub case: Case,
    pub preset: Preset,
    /// Overrides the preset mesh.
    pub n: Option<usize>,
    /// Overrides the preset number of time steps.
    pub steps: Option<usize>,
    pub t_final: f64,
    pub alpha: f64,
    /// True coefficient values inside and outside the inclusion.
    pub a1: f64,
    pub a2: f64,
    /// Inclusion for `case = "custom"`.
    pub inclusion: Option<ShapeSpec>,
    pub excitation: Option<ExcitationKind>,
    /// Switch-on time of the flux and split point of the continuation.
    pub t_split: f64,
    pub noise: f64,
    pub seed: u64,
    /// Observed boundary nodes (indices into the boundary node list);
    /// all nodes when absent.
    pub observed: Option<Vec<usize>>,
    pub stages: Vec<Stage>,
    pub order: OrderConfig,
    pub continuation: ContinuationConfig,
    pub recovery: RecoveryConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            case: Case::I,
            preset: Preset::Desk,
            n: None,
            steps: None,
            t_final: 1.0,
            alpha: 0.8,
            a1: 1.0,
            a2: 10.0,
            inclusion: None,
            excitation: None,
            t_split: 0.5,
            noise: 0.0,
            seed: 0,
            observed: None,
            stages: vec![Stage::Forward, Stage::Order, Stage::Continuation, Stage::Recovery],
            order: OrderConfig::default(),
            continuation: ContinuationConfig::default(),
            recovery: RecoveryConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Config {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn mesh_n(&self) -> usize {
        self.n.unwrap_or(self.preset.mesh_n())
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(self.preset.steps())
    }

    pub fn iterations(&self) -> usize {
        self.recovery.iterations.unwrap_or(self.preset.iterations())
    }

    pub fn excitation(&self) -> ExcitationKind {
        self.excitation.unwrap_or(match self.case {
            Case::Iv => ExcitationKind::Constant,
            _ => ExcitationKind::G1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(HarnessError::Config {
                path: path.into(),
                message,
            })
        };
        if self.mesh_n() < 2 {
            return bad("n", format!("mesh needs at least 2 cells per side, got {}", self.mesh_n()));
        }
        if self.steps() < 2 {
            return bad("steps", format!("need at least 2 time steps, got {}", self.steps()));
        }
        if !(self.t_final > 0.0) {
            return bad("t_final", format!("must be positive, got {}", self.t_final));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.a1 > 0.0) {
            return bad("a1", format!("must be positive, got {}", self.a1));
        }
        if !(self.a2 > 0.0) {
            return bad("a2", format!("must be positive, got {}", self.a2));
        }
        if !(self.t_split > 0.0 && self.t_split < self.t_final) {
            return bad("t_split", format!("must lie in (0, t_final), got {}", self.t_split));
        }
        if !(self.noise >= 0.0) {
            return bad("noise", format!("must be non-negative, got {}", self.noise));
        }
        if self.case == Case::Custom && self.inclusion.is_none() {
            return bad("inclusion", "required for case = \"custom\"".into());
        }
        if !(self.recovery.beta >= 0.0) {
            return bad("recovery.beta", format!("must be non-negative, got {}", self.recovery.beta));
        }
        if !(self.recovery.eps_factor > 0.0) {
            return bad("recovery.eps_factor", format!("must be positive, got {}", self.recovery.eps_factor));
        }
        if !(self.recovery.a1_init > 0.0 && self.recovery.a2_init > 0.0) {
            return bad("recovery.a1_init", "initial coefficient values must be positive".into());
        }
        if let Some(g) = self.recovery.gamma {
            if !(g > 0.0) {
                return bad("recovery.gamma", format!("must be positive, got {g}"));
            }
        }
        if self.continuation.degree == 0 {
            return bad("continuation.degree", "must be at least 1".into());
        }
        if self.order.t0.iter().any(|t| !(*t > 0.0)) {
            return bad("order.t0", "sample windows must be positive".into());
        }
        if self.order.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("order.alphas", "orders must lie in (0, 1)".into());
        }
        Ok(())
    }
}
