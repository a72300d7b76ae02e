use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{domain, Result};
use crate::qed::{shifted_wavelength, CavityParams};
use crate::spatial::{ModeGeometry, DEFAULT_DETUNING_SPREAD, DEFAULT_SITES, DEFAULT_SPACING};
use crate::stochastic::LoadingModel;
use crate::thermal::{TrapParams, CESIUM_MASS, DEFAULT_N_MAX};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "CQED_CONFIG";

/// Every tunable of a run. Keys match the command-line flags.
///
/// Units: MHz for rates, nm for wavelengths, mm for the cavity length, μm for
/// positions and waists, GHz for the lattice offset, μK and mK for the trap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub g0: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub lambda_probe: f64,
    pub lattice_offset: f64,
    pub cavity_length: f64,
    pub waist: f64,
    pub finesse: f64,
    pub spacing: f64,
    pub n_sites: usize,
    pub center_offset: f64,
    pub detuning_spread: f64,
    pub temperature: f64,
    pub lattice_depth: f64,
    pub n_max: usize,
    pub p_load: f64,
    pub eta: f64,
    pub photon_cutoff: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cavity = CavityParams::default();
        Self {
            g0: cavity.g0,
            kappa: cavity.kappa,
            gamma: cavity.gamma,
            lambda_probe: cavity.lambda_probe,
            lattice_offset: 354.3,
            cavity_length: cavity.cavity_length,
            waist: cavity.waist,
            finesse: cavity.finesse,
            spacing: DEFAULT_SPACING,
            n_sites: DEFAULT_SITES,
            center_offset: 0.0,
            detuning_spread: DEFAULT_DETUNING_SPREAD,
            temperature: 15.0,
            lattice_depth: 0.29,
            n_max: DEFAULT_N_MAX,
            p_load: 0.57,
            eta: 0.01,
            photon_cutoff: crate::oracle::DEFAULT_PHOTON_CUTOFF,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

impl RunConfig {
    /// Defaults, then the JSON file (if any), then `flags` (a JSON object of
    /// explicitly given flags). Later layers win.
    pub fn layered(file: Option<&Path>, flags: Map<String, Value>) -> Result<Self> {
        let mut v = serde_json::to_value(Self::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            let layer: Value = serde_json::from_str(&text)?;
            if !layer.is_object() {
                return Err(domain(format!(
                    "{} must hold a JSON object",
                    path.display()
                )));
            }
            merge(&mut v, layer);
        }
        merge(&mut v, Value::Object(flags));
        let cfg: Self = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`RunConfig::layered`], falling back to the file named by
    /// `CQED_CONFIG` when no path is given.
    pub fn load(file: Option<&Path>, flags: Map<String, Value>) -> Result<Self> {
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        Self::layered(file.or(env.as_deref()), flags)
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity().validate()?;
        self.geometry()?;
        self.trap()?;
        self.loading()?;
        if !(self.eta > 0.0) {
            return Err(domain("eta must be positive"));
        }
        if !(self.detuning_spread >= 0.0) {
            return Err(domain("detuning spread must be non-negative"));
        }
        Ok(())
    }

    pub fn cavity(&self) -> CavityParams {
        CavityParams {
            g0: self.g0,
            kappa: self.kappa,
            gamma: self.gamma,
            lambda_probe: self.lambda_probe,
            lambda_lattice: shifted_wavelength(self.lambda_probe, self.lattice_offset),
            cavity_length: self.cavity_length,
            waist: self.waist,
            finesse: self.finesse,
        }
    }

    pub fn geometry(&self) -> Result<ModeGeometry> {
        ModeGeometry::from_cavity(&self.cavity())
    }

    pub fn trap(&self) -> Result<TrapParams> {
        TrapParams::new(
            self.temperature,
            self.lattice_depth,
            CESIUM_MASS,
            self.cavity().lambda_lattice,
        )
    }

    pub fn loading(&self) -> Result<LoadingModel> {
        LoadingModel::new(self.p_load, self.n_sites)
    }
}
