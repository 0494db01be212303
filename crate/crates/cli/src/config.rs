//! Run configuration: one TOML file, dotted-key overrides, strict schema.

use std::path::{Path, PathBuf};

use bosecycles::cluster::ClusterSampling;
use bosecycles::geometry::SimulationBox;
use bosecycles::ideal_grand::critical_density;
use bosecycles::pimc::{MoveMix, PairPotential, Schedule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    Canonical,
    Grand,
}

fn default_cutoff() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub ensemble: Option<Ensemble>,
    pub dim: usize,
    pub beta: f64,
    /// Box side for single-volume commands.
    #[serde(default)]
    pub side: Option<f64>,
    /// Box sides for finite-size sweeps.
    #[serde(default)]
    pub sides: Vec<f64>,
    #[serde(default)]
    pub rho: Option<f64>,
    /// Density in units of the critical density; alternative to `rho`.
    #[serde(default)]
    pub rho_over_critical: Option<f64>,
    #[serde(default)]
    pub n_particles: Option<usize>,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Constant `c` of the cycle-length cutoff `c L^2 / beta`.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub potential: PairPotential,
    #[serde(default)]
    pub odlro: OdlroSection,
    #[serde(default)]
    pub grand: GrandSection,
    #[serde(default)]
    pub pimc: Option<PimcSection>,
    #[serde(default)]
    pub cluster: ClusterSection,
}

fn default_distances() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdlroSection {
    /// `|x|` values, placed along the first axis.
    #[serde(default = "default_distances")]
    pub distances: Vec<f64>,
}

impl Default for OdlroSection {
    fn default() -> Self {
        Self { distances: default_distances() }
    }
}

fn default_mu_min() -> f64 {
    -3.0
}
fn default_mu_max() -> f64 {
    -0.01
}
fn default_points() -> usize {
    50
}
fn default_max_cycle() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrandSection {
    #[serde(default = "default_mu_min")]
    pub mu_min: f64,
    #[serde(default = "default_mu_max")]
    pub mu_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Cycle lengths listed individually per `mu`.
    #[serde(default = "default_max_cycle")]
    pub max_cycle: usize,
    /// Densities at which the free energy is tabulated, in units of `rho_c` when `relative`.
    #[serde(default)]
    pub densities: Vec<f64>,
    #[serde(default)]
    pub relative: bool,
}

impl Default for GrandSection {
    fn default() -> Self {
        Self {
            mu_min: default_mu_min(),
            mu_max: default_mu_max(),
            points: default_points(),
            max_cycle: default_max_cycle(),
            densities: Vec::new(),
            relative: false,
        }
    }
}

fn default_beads() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PimcSection {
    #[serde(default = "default_beads")]
    pub beads: usize,
    pub schedule: Schedule,
    #[serde(default)]
    pub moves: MoveMix,
    /// Offset of the open trajectory; enables the off-diagonal estimator.
    #[serde(default)]
    pub open_shift: Option<Vec<f64>>,
    /// Write a checkpoint every this many sweeps (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: u64,
}

fn default_winding() -> usize {
    1
}
fn default_samples() -> usize {
    4000
}
fn default_k_max() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    #[serde(default = "default_winding")]
    pub winding: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_beads")]
    pub beads: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self { winding: default_winding(), samples: default_samples(), beads: default_beads(), k_max: default_k_max() }
    }
}

impl ClusterSection {
    pub fn sampling(&self, seed: u64) -> ClusterSampling {
        ClusterSampling { beads: self.beads, samples: self.samples, seed }
    }
}

/// Sets `path` (dot separated) in `table` to `raw`, parsed as a TOML value when possible.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.rho.is_some() && self.rho_over_critical.is_some() {
            return bad("give either rho or rho_over_critical, not both");
        }
        if self.side.iter().chain(&self.sides).any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("box sides must be positive");
        }
        if let Some(mu) = self.mu {
            if !mu.is_finite() {
                return bad("mu must be finite");
            }
        }
        if let Some(r) = self.rho.or(self.rho_over_critical) {
            if !(r.is_finite() && r > 0.0) {
                return bad("density must be positive");
            }
        }
        self.potential.validate().map_err(CliError::from)?;
        Ok(())
    }

    /// Target density, resolving `rho_over_critical`.
    pub fn density(&self) -> Result<f64, CliError> {
        match (self.rho, self.rho_over_critical) {
            (Some(r), _) => Ok(r),
            (None, Some(f)) => {
                let rc = critical_density(self.beta, self.dim)?;
                if !rc.is_finite() {
                    return Err(CliError::Config(format!("no finite critical density in {} dimensions", self.dim)));
                }
                Ok(f * rc)
            }
            (None, None) => Err(CliError::Config("a density (rho or rho_over_critical) is required".into())),
        }
    }

    pub fn chemical_potential(&self) -> Result<f64, CliError> {
        if self.ensemble == Some(Ensemble::Canonical) {
            return Err(CliError::Config("this command needs the grand ensemble".into()));
        }
        self.mu.ok_or_else(|| CliError::Config("mu is required".into()))
    }

    /// Sides to sweep: `sides`, else the single `side`.
    pub fn side_list(&self) -> Result<Vec<f64>, CliError> {
        if !self.sides.is_empty() {
            Ok(self.sides.clone())
        } else if let Some(s) = self.side {
            Ok(vec![s])
        } else {
            Err(CliError::Config("side or sides is required".into()))
        }
    }

    /// Box and particle number for a canonical run at side `side`.
    ///
    /// `n_particles` wins; otherwise `N = round(rho V)`.
    pub fn canonical_system(&self, side: f64) -> Result<(SimulationBox, usize), CliError> {
        if self.ensemble == Some(Ensemble::Grand) {
            return Err(CliError::Config("this command needs the canonical ensemble".into()));
        }
        let bx = SimulationBox::new(self.dim, side)?;
        let n = match self.n_particles {
            Some(n) => n,
            None => (self.density()? * bx.volume()).round() as usize,
        };
        if n == 0 {
            return Err(CliError::Config(format!("no particles fit at side {side}")));
        }
        Ok((bx, n))
    }
}
