//! Run configuration: one TOML file covering plant parameters, simulation,
//! library/solver settings and the expression-search budget, plus the
//! global seed that all module seeds derive from.

use crate::dsr::DsrConfig;
use crate::error::{Error, Result};
use crate::plant::{ControlParams, NetworkParams, Params};
use crate::simulator::SimConfig;
use crate::sindy::{LibrarySpec, SolverKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every stochastic stage uses a seed derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub network: NetworkParams,
    pub control: ControlParams,
    pub sim: SimConfig,
    pub library: LibrarySpec,
    pub sindy: SolverKind,
    pub dsr: DsrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            network: NetworkParams::default(),
            control: ControlParams::default(),
            sim: SimConfig::default(),
            library: LibrarySpec::default(),
            sindy: SolverKind::default(),
            dsr: DsrConfig::default(),
        }
    }
}

impl RunConfig {
    /// Load from a TOML file, or defaults when no path is given. The whole
    /// configuration is validated before anything runs.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: RunConfig = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::MissingFile(p.display().to_string()));
                }
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{p:?}: {e}")))?
            }
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.sim.validate()?;
        self.library.validate()?;
        match &self.sindy {
            SolverKind::Stlsq(c) => c.validate()?,
            SolverKind::Lasso(c) => c.validate()?,
        }
        self.dsr.validate()?;
        Ok(())
    }

    pub fn params(&self) -> Params {
        Params {
            net: self.network.clone(),
            ctl: self.control.clone(),
        }
    }

    /// Simulation settings with the noise seed derived from the global one.
    pub fn effective_sim(&self) -> SimConfig {
        let mut sim = self.sim.clone();
        sim.seed = derive_seed(self.seed, "simulate");
        sim
    }

    /// Expression-search settings for one target, seeded per target name.
    pub fn effective_dsr(&self, target: &str) -> DsrConfig {
        let mut dsr = self.dsr.clone();
        dsr.seed = derive_seed(self.seed, &format!("dsr/{target}"));
        dsr
    }
}

/// Derive a module seed from the global seed and a stage label:
/// the first eight bytes of SHA-256(seed_le || label), little-endian.
pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}
