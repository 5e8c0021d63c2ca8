use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nls_msol::construct::ShootingConfig;
use nls_msol::{Exponent, Grid, IntegratorConfig, Scheme, SolitonFamily, SolitonParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSpec {
    pub c: f64,
    pub v: f64,
    #[serde(default)]
    pub gamma: f64,
    pub x0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "M")]
    pub points: usize,
}

impl GridSpec {
    pub fn grid(&self) -> nls_msol::Result<Grid> {
        Grid::new(self.length, self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    #[serde(rename = "Sn")]
    pub sn: f64,
    #[serde(rename = "Sn_schedule", default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub p: f64,
    pub solitons: Vec<SolitonSpec>,
    /// One amplitude per soliton; missing means all zero.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    pub grid: GridSpec,
    /// Grid for the unit-frequency eigenproblem.
    #[serde(default = "default_eigen_grid")]
    pub eigen_grid: GridSpec,
    pub times: TimeSpec,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub shooting: ShootingConfig,
    /// Frequencies for `ground-state` dumps and the `spectrum` scaling table.
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_eigen_grid() -> GridSpec {
    GridSpec { length: 60.0, points: 1024 }
}

fn default_c_values() -> Vec<f64> {
    vec![1.0]
}

impl Default for ExperimentConfig {
    /// The two-soliton reference scenario.
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            p: 7.0,
            solitons: vec![
                SolitonSpec { c: 1.0, v: -1.0, gamma: 0.0, x0: -4.5 },
                SolitonSpec { c: 2.0, v: 1.0, gamma: 0.0, x0: 4.5 },
            ],
            amplitudes: vec![1.0, 0.0],
            grid: GridSpec { length: 24.0 * PI, points: 2048 },
            eigen_grid: default_eigen_grid(),
            times: TimeSpec { t0: 1.25, sn: 9.25, schedule: Some(vec![4.25, 7.25, 9.25]) },
            integrator: IntegratorConfig {
                dt: 5e-4,
                scheme: Scheme::FourthOrderSplitting,
                max_gradient: None,
                dealias: true,
                stride: 100,
            },
            shooting: ShootingConfig::default(),
            c_values: default_c_values(),
            output_dir: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", self.version);
        }
        self.family()?;
        self.grid.grid()?;
        self.eigen_grid.grid()?;
        self.integrator.validate()?;
        self.shooting.validate()?;
        if !self.amplitudes.is_empty() && self.amplitudes.len() != self.solitons.len() {
            bail!("amplitudes: expected {} entries, found {}", self.solitons.len(), self.amplitudes.len());
        }
        if self.amplitudes.iter().any(|a| !a.is_finite()) {
            bail!("amplitudes must be finite");
        }
        let TimeSpec { t0, sn, .. } = self.times;
        if !(t0.is_finite() && sn.is_finite() && t0 > 0.0 && sn > t0) {
            bail!("times: need 0 < t0 < Sn, got t0 = {t0}, Sn = {sn}");
        }
        if self.c_values.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            bail!("c_values must be positive");
        }
        Ok(())
    }

    pub fn exponent(&self) -> nls_msol::Result<Exponent> {
        Exponent::new(self.p)
    }

    pub fn family(&self) -> nls_msol::Result<SolitonFamily> {
        let members = self
            .solitons
            .iter()
            .map(|s| SolitonParams::new(s.c, s.v, s.gamma, s.x0))
            .collect::<nls_msol::Result<Vec<_>>>()?;
        SolitonFamily::new(self.exponent()?, members)
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        if self.amplitudes.is_empty() {
            vec![0.0; self.solitons.len()]
        } else {
            self.amplitudes.clone()
        }
    }

    pub fn schedule(&self) -> Vec<f64> {
        self.times.schedule.clone().unwrap_or_default()
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in the file do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canonical))
    }
}
