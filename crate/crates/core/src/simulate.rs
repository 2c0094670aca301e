//! True coefficient fields, simulated yields and the seeded scenario batch.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Scenario, ScenarioConfig};
use crate::grid_design::{allocate_treatments, build_grid, DesignKind, DesignPlan, FieldGrid};
use crate::seed::{derive_seed, rng_from_seed, StreamDomain};
use crate::spatial_cov::{sample_random_effects, SpatialCovSpec, SpatialFactor, WithinGridCovSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Linear,
    Quadratic,
}

impl ResponseKind {
    /// Number of coefficients (intercept included).
    pub fn n_coefficients(self) -> usize {
        match self {
            ResponseKind::Linear => 2,
            ResponseKind::Quadratic => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ResponseKind::Linear => "linear",
            ResponseKind::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ResponseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ResponseKind::Linear),
            "quadratic" => Ok(ResponseKind::Quadratic),
            other => Err(Error::InvalidInput(format!(
                "unknown response kind `{other}`"
            ))),
        }
    }
}

/// Global response curve and plot-level error scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSpec {
    pub kind: ResponseKind,
    pub b: Vec<f64>,
    pub sigma_e: f64,
}

impl ResponseSpec {
    pub fn new(kind: ResponseKind, b: Vec<f64>, sigma_e: f64) -> Result<Self> {
        if b.len() != kind.n_coefficients() {
            return Err(Error::InvalidInput(format!(
                "{kind} response needs {} global coefficients, got {}",
                kind.n_coefficients(),
                b.len()
            )));
        }
        if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "error standard deviation must be non-negative, got {sigma_e}"
            )));
        }
        Ok(ResponseSpec { kind, b, sigma_e })
    }

    pub fn linear_default() -> Self {
        ResponseSpec {
            kind: ResponseKind::Linear,
            b: vec![65.0, 0.05],
            sigma_e: 1.0,
        }
    }

    pub fn quadratic_default() -> Self {
        ResponseSpec {
            kind: ResponseKind::Quadratic,
            b: vec![65.0, 0.05, -0.0003],
            sigma_e: 1.0,
        }
    }

    /// Noise-free response at rate `n` for coefficients `beta`.
    pub fn mean_response(beta: &[f64], n: f64) -> f64 {
        beta.iter().rev().fold(0.0, |acc, b| acc * n + b)
    }
}

/// True coefficients `β(s_i) = b + u(s_i)`, one row per plot.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub beta: DMatrix<f64>,
}

impl CoefficientField {
    pub fn n_plots(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_coefficients(&self) -> usize {
        self.beta.ncols()
    }
}

/// Draws a coefficient field, building the spatial factor on the fly.
pub fn sample_coefficient_field<R: Rng + ?Sized>(
    grid: &FieldGrid,
    response: &ResponseSpec,
    within: &WithinGridCovSpec,
    spatial: &SpatialCovSpec,
    rng: &mut R,
) -> Result<CoefficientField> {
    let factor = SpatialFactor::new(grid, spatial)?;
    sample_coefficient_field_with(&factor, response, within, rng)
}

/// Draws a coefficient field from a prebuilt spatial factor.
///
/// Consumes the stream in a fixed order: the LKJ correlation first, then
/// `n·k` standard normal deviates.
pub fn sample_coefficient_field_with<R: Rng + ?Sized>(
    spatial: &SpatialFactor,
    response: &ResponseSpec,
    within: &WithinGridCovSpec,
    rng: &mut R,
) -> Result<CoefficientField> {
    let k = response.kind.n_coefficients();
    let (_, lu) = within.sample(k, rng)?;
    let mut beta = sample_random_effects(spatial, &lu, rng);
    for (j, mut col) in beta.column_iter_mut().enumerate() {
        col.add_scalar_mut(response.b[j]);
    }
    Ok(CoefficientField { beta })
}

/// Scenario labels and seeds carried with every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLabels {
    pub scenario_id: usize,
    pub replicate: usize,
    pub design: DesignKind,
    pub response: ResponseKind,
    pub covariance: String,
    pub eta: f64,
    /// Seed of the allocation / error stream.
    pub seed: u64,
    /// Seed of the coefficient-field stream shared by the design pair.
    pub field_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub grid: FieldGrid,
    pub design: DesignPlan,
    pub yields: Vec<f64>,
    pub truth: CoefficientField,
    pub labels: TrialLabels,
}

/// Generates `y_i = Σ_j β_j(s_i) N_i^j + e_i` with `e_i ~ N(0, σe²)`.
pub fn simulate_yield<R: Rng + ?Sized>(
    grid: &FieldGrid,
    design: DesignPlan,
    truth: CoefficientField,
    response: &ResponseSpec,
    labels: TrialLabels,
    rng: &mut R,
) -> Result<TrialData> {
    let n = grid.len();
    if design.treatment.len() != n || truth.n_plots() != n {
        return Err(Error::InvalidInput(format!(
            "grid has {n} plots but design has {} and truth has {}",
            design.treatment.len(),
            truth.n_plots()
        )));
    }
    if truth.n_coefficients() != response.kind.n_coefficients() {
        return Err(Error::InvalidInput(format!(
            "{} response needs {} coefficients, truth has {}",
            response.kind,
            response.kind.n_coefficients(),
            truth.n_coefficients()
        )));
    }
    let k = truth.n_coefficients();
    let mut beta_row = vec![0.0; k];
    let yields = (0..n)
        .map(|i| {
            for (j, b) in beta_row.iter_mut().enumerate() {
                *b = truth.beta[(i, j)];
            }
            let e: f64 = rng.sample(StandardNormal);
            ResponseSpec::mean_response(&beta_row, design.treatment[i]) + response.sigma_e * e
        })
        .collect();
    Ok(TrialData {
        grid: grid.clone(),
        design,
        yields,
        truth,
        labels,
    })
}

/// Precomputed grid and spatial factors shared by every trial of a batch.
pub struct BatchContext {
    config: ScenarioConfig,
    grid: FieldGrid,
    factors: Vec<SpatialFactor>,
    scenarios: Vec<Scenario>,
}

impl BatchContext {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let grid = build_grid(config.n_rows, config.n_ranges)?;
        let factors = config
            .spatial
            .iter()
            .map(|s| SpatialFactor::new(&grid, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchContext {
            scenarios: config.scenarios(),
            config: config.clone(),
            grid,
            factors,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    /// Number of distinct coefficient-field scenarios (designs collapsed).
    pub fn n_field_scenarios(&self) -> usize {
        self.scenarios.len() / self.config.designs.len()
    }

    pub fn field_seed(&self, master_seed: u64, field_scenario: usize, replicate: usize) -> u64 {
        derive_seed(
            master_seed,
            StreamDomain::CoefficientField,
            field_scenario as u64,
            replicate as u64,
        )
    }

    pub fn trial_seed(&self, master_seed: u64, scenario_id: usize, replicate: usize) -> u64 {
        derive_seed(
            master_seed,
            StreamDomain::Trial,
            scenario_id as u64,
            replicate as u64,
        )
    }

    fn field(
        &self,
        master_seed: u64,
        scenario: &Scenario,
        replicate: usize,
    ) -> Result<(CoefficientField, u64)> {
        let field_scenario = self.config.field_scenario_of(scenario.id);
        let seed = self.field_seed(master_seed, field_scenario, replicate);
        let response = self.config.response_spec(scenario.response);
        let within = WithinGridCovSpec {
            sigma_u: self.config.sigma_u.clone(),
            eta: scenario.eta,
        };
        let field = sample_coefficient_field_with(
            &self.factors[scenario.spatial_index],
            &response,
            &within,
            &mut rng_from_seed(seed),
        )?;
        Ok((field, seed))
    }

    fn trial_with_field(
        &self,
        master_seed: u64,
        scenario: &Scenario,
        replicate: usize,
        field: CoefficientField,
        field_seed: u64,
    ) -> Result<TrialData> {
        let seed = self.trial_seed(master_seed, scenario.id, replicate);
        let mut rng = rng_from_seed(seed);
        let design = allocate_treatments(
            &self.grid,
            &self.config.treatment_levels,
            scenario.design,
            &mut rng,
        )?;
        let labels = TrialLabels {
            scenario_id: scenario.id,
            replicate,
            design: scenario.design,
            response: scenario.response,
            covariance: scenario.spatial.label().to_string(),
            eta: scenario.eta,
            seed,
            field_seed,
        };
        let response = self.config.response_spec(scenario.response);
        simulate_yield(&self.grid, design, field, &response, labels, &mut rng)
    }

    /// Reproduces a single trial in isolation.
    pub fn trial(
        &self,
        master_seed: u64,
        scenario_id: usize,
        replicate: usize,
    ) -> Result<TrialData> {
        let scenario = self
            .scenarios
            .get(scenario_id)
            .ok_or_else(|| Error::InvalidInput(format!("scenario {scenario_id} does not exist")))?;
        if replicate >= self.config.replicates {
            return Err(Error::InvalidInput(format!(
                "replicate {replicate} exceeds the configured {}",
                self.config.replicates
            )));
        }
        let (field, field_seed) = self.field(master_seed, scenario, replicate)?;
        self.trial_with_field(master_seed, scenario, replicate, field, field_seed)
    }

    /// All designs sharing one coefficient field, in design order.
    pub fn paired_trials(
        &self,
        master_seed: u64,
        field_scenario: usize,
        replicate: usize,
    ) -> Result<Vec<TrialData>> {
        let n_designs = self.config.designs.len();
        let first = &self.scenarios[field_scenario * n_designs];
        let (field, field_seed) = self.field(master_seed, first, replicate)?;
        (0..n_designs)
            .map(|d| {
                let scenario = &self.scenarios[field_scenario * n_designs + d];
                self.trial_with_field(master_seed, scenario, replicate, field.clone(), field_seed)
            })
            .collect()
    }
}

/// Every trial of the factor grid, ordered by (scenario, replicate).
pub fn scenario_batch(
    config: &ScenarioConfig,
    master_seed: u64,
) -> Result<impl Iterator<Item = Result<TrialData>>> {
    let ctx = BatchContext::new(config)?;
    let n_scenarios = ctx.scenarios().len();
    let replicates = config.replicates;
    Ok((0..n_scenarios)
        .flat_map(move |s| (0..replicates).map(move |r| (s, r)))
        .map(move |(s, r)| ctx.trial(master_seed, s, r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_design::TreatmentLevels;

    fn labels() -> TrialLabels {
        TrialLabels {
            scenario_id: 0,
            replicate: 0,
            design: DesignKind::Systematic,
            response: ResponseKind::Linear,
            covariance: "NS".into(),
            eta: 1.0,
            seed: 0,
            field_seed: 0,
        }
    }

    fn noise_free_trial(response: ResponseSpec) -> TrialData {
        let grid = build_grid(2, 5).unwrap();
        let design = allocate_treatments(
            &grid,
            &TreatmentLevels::default(),
            DesignKind::Systematic,
            &mut rng_from_seed(0),
        )
        .unwrap();
        let k = response.kind.n_coefficients();
        let truth = CoefficientField {
            beta: DMatrix::from_fn(grid.len(), k, |_, j| response.b[j]),
        };
        let response = ResponseSpec {
            sigma_e: 0.0,
            ..response
        };
        simulate_yield(
            &grid,
            design,
            truth,
            &response,
            labels(),
            &mut rng_from_seed(1),
        )
        .unwrap()
    }

    #[test]
    fn noise_free_linear_yield() {
        let t = noise_free_trial(ResponseSpec::linear_default());
        let i = t.design.treatment.iter().position(|&r| r == 140.0).unwrap();
        assert!((t.yields[i] - 72.0).abs() < 1e-12);
    }

    #[test]
    fn noise_free_quadratic_yield() {
        let t = noise_free_trial(ResponseSpec::quadratic_default());
        let i = t.design.treatment.iter().position(|&r| r == 140.0).unwrap();
        assert!((t.yields[i] - 66.12).abs() < 1e-12);
    }

    #[test]
    fn quadratic_vertex() {
        // -b1 / (2 b2) = 0.05 / 0.0006
        let b = ResponseSpec::quadratic_default().b;
        let vertex = -b[1] / (2.0 * b[2]);
        assert!((vertex - 83.3333).abs() < 1e-3);
        let best = TreatmentLevels::default()
            .as_slice()
            .iter()
            .copied()
            .max_by(|a, b| {
                ResponseSpec::mean_response(&[65.0, 0.05, -0.0003], *a)
                    .total_cmp(&ResponseSpec::mean_response(&[65.0, 0.05, -0.0003], *b))
            })
            .unwrap();
        assert_eq!(best, 70.0);
    }

    #[test]
    fn zero_variance_field_is_global() {
        let grid = build_grid(3, 5).unwrap();
        let within = WithinGridCovSpec {
            sigma_u: vec![0.0, 0.0, 0.0],
            eta: 1.0,
        };
        let response = ResponseSpec::quadratic_default();
        let f = sample_coefficient_field(
            &grid,
            &response,
            &within,
            &SpatialCovSpec::ar1_default(),
            &mut rng_from_seed(3),
        )
        .unwrap();
        for i in 0..grid.len() {
            for j in 0..3 {
                assert_eq!(f.beta[(i, j)], response.b[j]);
            }
        }
    }

    #[test]
    fn single_cell_variances() {
        let grid = build_grid(1, 1).unwrap();
        let factor = SpatialFactor::new(&grid, &SpatialCovSpec::NoSpatial).unwrap();
        let within = WithinGridCovSpec::default();
        let response = ResponseSpec::linear_default();
        let mut rng = rng_from_seed(8);
        let draws: Vec<(f64, f64)> = (0..50_000)
            .map(|_| {
                let f =
                    sample_coefficient_field_with(&factor, &response, &within, &mut rng).unwrap();
                (f.beta[(0, 0)], f.beta[(0, 1)])
            })
            .collect();
        let var = |sel: fn(&(f64, f64)) -> f64| {
            let m = draws.iter().map(sel).sum::<f64>() / draws.len() as f64;
            draws.iter().map(|d| (sel(d) - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64
        };
        let v0 = var(|d| d.0);
        let v1 = var(|d| d.1);
        assert!((v0 - 25.0).abs() < 1.0, "var beta0 {v0}");
        assert!((v1 - 1e-4).abs() < 5e-6, "var beta1 {v1}");
    }

    #[test]
    fn ar1_adjacent_rows_correlate_at_rho_row() {
        let grid = build_grid(2, 1).unwrap();
        let factor = SpatialFactor::new(&grid, &SpatialCovSpec::ar1_default()).unwrap();
        let within = WithinGridCovSpec::default();
        let response = ResponseSpec::linear_default();
        let mut rng = rng_from_seed(21);
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let n = 50_000;
        for _ in 0..n {
            let f = sample_coefficient_field_with(&factor, &response, &within, &mut rng).unwrap();
            let (a, b) = (f.beta[(0, 0)] - 65.0, f.beta[(1, 0)] - 65.0);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
        let nf = n as f64;
        let cov = sab / nf - sa * sb / nf / nf;
        let corr = cov / ((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2))).sqrt();
        assert!((corr - 0.5).abs() < 0.02, "correlation {corr}");
    }

    #[test]
    fn simulate_yield_is_deterministic() {
        let grid = build_grid(4, 5).unwrap();
        let response = ResponseSpec::quadratic_default();
        let make = || {
            let mut rng = rng_from_seed(99);
            let field = sample_coefficient_field(
                &grid,
                &response,
                &WithinGridCovSpec::default(),
                &SpatialCovSpec::matern_default(),
                &mut rng,
            )
            .unwrap();
            let design = allocate_treatments(
                &grid,
                &TreatmentLevels::default(),
                DesignKind::Randomised,
                &mut rng,
            )
            .unwrap();
            simulate_yield(&grid, design, field, &response, labels(), &mut rng).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let grid = build_grid(2, 5).unwrap();
        let design = allocate_treatments(
            &grid,
            &TreatmentLevels::default(),
            DesignKind::Systematic,
            &mut rng_from_seed(0),
        )
        .unwrap();
        let truth = CoefficientField {
            beta: DMatrix::zeros(10, 2),
        };
        let r = simulate_yield(
            &grid,
            design,
            truth,
            &ResponseSpec::quadratic_default(),
            labels(),
            &mut rng_from_seed(0),
        );
        assert!(r.is_err());
    }

    fn small_config(replicates: usize) -> ScenarioConfig {
        ScenarioConfig {
            n_rows: 6,
            n_ranges: 10,
            replicates,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn batch_cardinality() {
        let trials: Vec<_> = scenario_batch(&small_config(1), 5).unwrap().collect();
        assert_eq!(trials.len(), 24);
        let trials: Vec<_> = scenario_batch(&small_config(3), 5).unwrap().collect();
        assert_eq!(trials.len(), 72);
    }

    #[test]
    fn default_batch_has_2400_trials() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.scenarios().len() * cfg.replicates, 2400);
    }

    #[test]
    fn batch_is_reproducible_and_paired() {
        let cfg = small_config(2);
        let a: Vec<TrialData> = scenario_batch(&cfg, 77)
            .unwrap()
            .map(|t| t.unwrap())
            .collect();
        let b: Vec<TrialData> = scenario_batch(&cfg, 77)
            .unwrap()
            .map(|t| t.unwrap())
            .collect();
        assert_eq!(a, b);
        for t in &a {
            for u in &a {
                let same_field_scenario = cfg.field_scenario_of(t.labels.scenario_id)
                    == cfg.field_scenario_of(u.labels.scenario_id);
                if same_field_scenario && t.labels.replicate == u.labels.replicate {
                    assert_eq!(t.truth, u.truth);
                }
            }
        }
        let ctx = BatchContext::new(&cfg).unwrap();
        let pair = ctx.paired_trials(77, 3, 1).unwrap();
        assert_eq!(pair[0].truth, pair[1].truth);
        assert_ne!(pair[0].design.kind, pair[1].design.kind);
        assert_eq!(
            pair[0],
            ctx.trial(77, pair[0].labels.scenario_id, 1).unwrap()
        );
    }
}
