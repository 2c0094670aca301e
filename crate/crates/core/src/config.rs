//! Experiment configuration.
//!
//! Configs are JSON. Every field is optional; omitted fields take the values
//! of the full field experiment (93 × 20 grid, two designs, two responses,
//! three spatial models, two LKJ shapes, bandwidths 5, 9 and AICc,
//! 100 replicates), so `{}` describes the whole study.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid_design::{DesignKind, TreatmentLevels};
use crate::gwr::{AiccFormula, BandwidthPolicy};
use crate::simulate::{ResponseKind, ResponseSpec};
use crate::spatial_cov::SpatialCovSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_rows: usize,
    pub n_ranges: usize,
    pub treatment_levels: TreatmentLevels,
    pub designs: Vec<DesignKind>,
    pub responses: Vec<ResponseKind>,
    pub spatial: Vec<SpatialCovSpec>,
    /// LKJ shapes for the within-plot coefficient correlation.
    pub etas: Vec<f64>,
    pub sigma_u: Vec<f64>,
    pub sigma_e: f64,
    pub linear_coefficients: Vec<f64>,
    pub quadratic_coefficients: Vec<f64>,
    pub bandwidths: Vec<BandwidthPolicy>,
    pub bandwidth_search: [f64; 2],
    pub aicc_formula: AiccFormula,
    pub replicates: usize,
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_rows: 93,
            n_ranges: 20,
            treatment_levels: TreatmentLevels::default(),
            designs: vec![DesignKind::Randomised, DesignKind::Systematic],
            responses: vec![ResponseKind::Linear, ResponseKind::Quadratic],
            spatial: vec![
                SpatialCovSpec::NoSpatial,
                SpatialCovSpec::ar1_default(),
                SpatialCovSpec::matern_default(),
            ],
            etas: vec![1.0, 0.1],
            sigma_u: vec![5.0, 0.01, 0.0001],
            sigma_e: 1.0,
            linear_coefficients: vec![65.0, 0.05],
            quadratic_coefficients: vec![65.0, 0.05, -0.0003],
            bandwidths: vec![
                BandwidthPolicy::Fixed(5.0),
                BandwidthPolicy::Fixed(9.0),
                BandwidthPolicy::AiccOptimal,
            ],
            bandwidth_search: [1.0, 93.0],
            aicc_formula: AiccFormula::Standard,
            replicates: 100,
            master_seed: 20_220_901,
            output_dir: None,
        }
    }
}

/// One cell of the simulation factor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub design: DesignKind,
    pub response: ResponseKind,
    pub eta: f64,
    pub spatial_index: usize,
    pub spatial: SpatialCovSpec,
}

fn no_duplicates<T, K: Eq + std::hash::Hash>(
    items: &[T],
    key: impl Fn(&T) -> K,
    what: &str,
) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} must not be empty")));
    }
    let mut seen = HashSet::new();
    if items.iter().all(|i| seen.insert(key(i))) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{what} contains duplicates")))
    }
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_ranges == 0 {
            return Err(Error::InvalidConfig(
                "grid dimensions must be positive".into(),
            ));
        }
        if !self.n_ranges.is_multiple_of(self.treatment_levels.len()) {
            return Err(Error::InvalidConfig(format!(
                "{} ranges cannot hold whole blocks of {} strips",
                self.n_ranges,
                self.treatment_levels.len()
            )));
        }
        no_duplicates(&self.designs, |d| *d, "designs")?;
        no_duplicates(&self.responses, |r| *r, "responses")?;
        no_duplicates(&self.spatial, |s| s.label(), "spatial")?;
        no_duplicates(&self.etas, |e| e.to_bits(), "etas")?;
        no_duplicates(&self.bandwidths, |b| b.label(), "bandwidths")?;
        for s in &self.spatial {
            s.validate()
                .map_err(|e| Error::InvalidConfig(format!("spatial {}: {e}", s.label())))?;
        }
        if self.etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "LKJ shapes must be positive: {:?}",
                self.etas
            )));
        }
        let max_k = self
            .responses
            .iter()
            .map(|r| r.n_coefficients())
            .max()
            .unwrap_or(0);
        if self.sigma_u.len() < max_k {
            return Err(Error::InvalidConfig(format!(
                "sigma_u needs {max_k} entries, got {}",
                self.sigma_u.len()
            )));
        }
        if self.sigma_u.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "sigma_u entries must be positive: {:?}",
                self.sigma_u
            )));
        }
        if !(self.sigma_e > 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma_e must be positive, got {}",
                self.sigma_e
            )));
        }
        ResponseSpec::new(
            ResponseKind::Linear,
            self.linear_coefficients.clone(),
            self.sigma_e,
        )
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        ResponseSpec::new(
            ResponseKind::Quadratic,
            self.quadratic_coefficients.clone(),
            self.sigma_e,
        )
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let [lo, hi] = self.bandwidth_search;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth search interval [{lo}, {hi}] is invalid"
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn response_spec(&self, kind: ResponseKind) -> ResponseSpec {
        let b = match kind {
            ResponseKind::Linear => self.linear_coefficients.clone(),
            ResponseKind::Quadratic => self.quadratic_coefficients.clone(),
        };
        ResponseSpec {
            kind,
            b,
            sigma_e: self.sigma_e,
        }
    }

    /// Factor grid in id order: response, then eta, then spatial model, with
    /// design varying fastest so each design pair is contiguous.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &response in &self.responses {
            for &eta in &self.etas {
                for (spatial_index, spatial) in self.spatial.iter().enumerate() {
                    for &design in &self.designs {
                        out.push(Scenario {
                            id: out.len(),
                            design,
                            response,
                            eta,
                            spatial_index,
                            spatial: spatial.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    /// Index of the coefficient-field scenario shared by a design pair.
    pub fn field_scenario_of(&self, scenario_id: usize) -> usize {
        scenario_id / self.designs.len()
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
