//! Simulate → fit → score for a whole factor grid, and the file-based
//! stages behind the command line.
//!
//! Output layout of a run directory:
//!
//! ```text
//! config.json     resolved configuration
//! manifest.json   config hash, seeds and per-trial seeds
//! trials/         trial_SSS_RRRR.csv + .json   (simulate, or run --emit-trials)
//! fits/           fit_SSS_RRRR_bwP.csv + .json (fit, or run --emit-trials)
//! scores.csv      long MSE table               (score)
//! report/         tables, ANOVA, boxplot and histogram data, SVG figures
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::grid_design::DesignKind;
use crate::gwr::{AiccFormula, BandwidthPolicy, GwrFit, GwrProblem, KernelSpec};
use crate::io::{
    fit_stem, list_trials, read_fit, read_scores, read_trial, write_fit, write_json, write_scores,
    write_trial, Staging, FITS_DIR, SCORES_FILE, TRIALS_DIR,
};
use crate::metrics::{coefficient_mse, ResultLabels, ScenarioResult};
use crate::report::{build_report, write_report, REPORT_DIR};
use crate::simulate::{BatchContext, ResponseKind, TrialData};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Fits `trial` under one bandwidth policy. AICc-optimal fits are refitted
/// at the selected bandwidth.
pub fn fit_policy(
    problem: &GwrProblem<'_>,
    policy: BandwidthPolicy,
    config: &ScenarioConfig,
) -> Result<GwrFit> {
    let h = match policy {
        BandwidthPolicy::Fixed(h) => h,
        BandwidthPolicy::AiccOptimal => {
            let search = (config.bandwidth_search[0], config.bandwidth_search[1]);
            problem
                .select_bandwidth(search, config.aicc_formula)?
                .bandwidth
        }
    };
    problem.fit(KernelSpec::gaussian(h)?, config.aicc_formula, policy)
}

/// One fit per configured policy, in configuration order.
pub fn fit_trial(trial: &TrialData, config: &ScenarioConfig) -> Result<Vec<GwrFit>> {
    let problem = GwrProblem::from_trial(trial, trial.labels.response)?;
    config
        .bandwidths
        .iter()
        .map(|p| fit_policy(&problem, *p, config))
        .collect()
}

pub fn score_fit(trial: &TrialData, fit: &GwrFit) -> Result<ScenarioResult> {
    let l = &trial.labels;
    let labels = ResultLabels {
        scenario_id: l.scenario_id,
        replicate: l.replicate,
        seed: l.seed,
        design: l.design,
        response: l.response,
        covariance: l.covariance.clone(),
        eta: l.eta,
        policy: fit.policy,
    };
    let selected = matches!(fit.policy, BandwidthPolicy::AiccOptimal).then_some(fit.bandwidth);
    ScenarioResult::new(labels, coefficient_mse(&trial.truth, fit)?, selected)
}

/// Runs every trial of the grid and returns the scores ordered by
/// (scenario, replicate, policy). Each trial and its fits are also handed
/// to `sink`, which may be called from several threads at once.
pub fn run_experiment<F>(ctx: &BatchContext, sink: F) -> Result<Vec<ScenarioResult>>
where
    F: Fn(&TrialData, &[GwrFit]) -> Result<()> + Sync,
{
    let config = ctx.config();
    let units: Vec<(usize, usize)> = (0..ctx.n_field_scenarios())
        .flat_map(|f| (0..config.replicates).map(move |r| (f, r)))
        .collect();
    let per_unit = units
        .par_iter()
        .map(|&(field_scenario, replicate)| {
            let trials = ctx.paired_trials(config.master_seed, field_scenario, replicate)?;
            let mut scored = Vec::new();
            for trial in &trials {
                let fits = fit_trial(trial, config)?;
                sink(trial, &fits)?;
                for fit in &fits {
                    scored.push(score_fit(trial, fit)?);
                }
            }
            Ok(scored)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results: Vec<ScenarioResult> = per_unit.into_iter().flatten().collect();
    sort_results(&mut results, &config.bandwidths);
    Ok(results)
}

/// Canonical order: scenario, replicate, then configured policy order.
pub fn sort_results(results: &mut [ScenarioResult], policies: &[BandwidthPolicy]) {
    let rank = |p: &BandwidthPolicy| policies.iter().position(|q| q == p).unwrap_or(usize::MAX);
    results.sort_by(|a, b| {
        (
            a.labels.scenario_id,
            a.labels.replicate,
            rank(&a.labels.policy),
        )
            .cmp(&(
                b.labels.scenario_id,
                b.labels.replicate,
                rank(&b.labels.policy),
            ))
    });
}

/// Seeds and labels of one trial, enough to regenerate it in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    pub scenario_id: usize,
    pub replicate: usize,
    pub design: DesignKind,
    pub response: ResponseKind,
    pub covariance: String,
    pub eta: f64,
    pub field_seed: u64,
    pub trial_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub aicc_formula: AiccFormula,
    pub replicates: usize,
    pub trials: Vec<ManifestTrial>,
}

impl Manifest {
    /// Manifest for the given (scenario, replicate) pairs, or the full grid.
    pub fn new(ctx: &BatchContext, only: Option<&[(usize, usize)]>) -> Self {
        let config = ctx.config();
        let seed = config.master_seed;
        let pairs: Vec<(usize, usize)> = match only {
            Some(p) => p.to_vec(),
            None => (0..ctx.scenarios().len())
                .flat_map(|s| (0..config.replicates).map(move |r| (s, r)))
                .collect(),
        };
        let trials = pairs
            .into_iter()
            .map(|(s, r)| {
                let sc = &ctx.scenarios()[s];
                ManifestTrial {
                    scenario_id: s,
                    replicate: r,
                    design: sc.design,
                    response: sc.response,
                    covariance: sc.spatial.label().to_string(),
                    eta: sc.eta,
                    field_seed: ctx.field_seed(seed, config.field_scenario_of(s), r),
                    trial_seed: ctx.trial_seed(seed, s, r),
                }
            })
            .collect();
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config.hash_hex(),
            master_seed: seed,
            aicc_formula: config.aicc_formula,
            replicates: config.replicates,
            trials,
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub aicc_formula: Option<AiccFormula>,
}

/// Loads `path`, else `<fallback_dir>/config.json` if present, else the
/// defaults; then applies the overrides.
pub fn resolve_config(
    path: Option<&Path>,
    fallback_dir: Option<&Path>,
    overrides: &Overrides,
) -> Result<ScenarioConfig> {
    let stored = fallback_dir
        .map(|d| d.join(CONFIG_FILE))
        .filter(|p| p.is_file());
    let mut config = match path.map(Path::to_path_buf).or(stored) {
        Some(p) => ScenarioConfig::load(&p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        config.master_seed = seed;
    }
    if let Some(f) = overrides.aicc_formula {
        config.aicc_formula = f;
    }
    config.validate()?;
    Ok(config)
}

fn write_run_header(
    staging: &Staging,
    ctx: &BatchContext,
    only: Option<&[(usize, usize)]>,
) -> Result<()> {
    write_json(&staging.path().join(CONFIG_FILE), ctx.config())?;
    write_json(
        &staging.path().join(MANIFEST_FILE),
        &Manifest::new(ctx, only),
    )
}

/// Full pipeline into `out`. With `emit_trials`, per-trial and per-fit
/// files are written as well.
pub fn run_to_dir(
    config: &ScenarioConfig,
    out: &Path,
    emit_trials: bool,
) -> Result<Vec<ScenarioResult>> {
    let staging = Staging::new(out)?;
    let ctx = BatchContext::new(config)?;
    let (trials_dir, fits_dir) = if emit_trials {
        (Some(staging.dir(TRIALS_DIR)?), Some(staging.dir(FITS_DIR)?))
    } else {
        (None, None)
    };
    let results = run_experiment(&ctx, |trial, fits| {
        if let (Some(td), Some(fd)) = (&trials_dir, &fits_dir) {
            write_trial(td, trial)?;
            for fit in fits {
                write_fit(fd, trial, fit)?;
            }
        }
        Ok(())
    })?;
    write_scores(&staging.path().join(SCORES_FILE), &results)?;
    let report = build_report(config, &results)?;
    write_report(&staging.dir(REPORT_DIR)?, config, &report)?;
    write_run_header(&staging, &ctx, None)?;
    staging.commit()?;
    Ok(results)
}

/// Simulates every trial, or just `only = (scenario, replicate)`.
pub fn simulate_to_dir(
    config: &ScenarioConfig,
    out: &Path,
    only: Option<(usize, usize)>,
) -> Result<()> {
    let staging = Staging::new(out)?;
    let ctx = BatchContext::new(config)?;
    let dir = staging.dir(TRIALS_DIR)?;
    let seed = config.master_seed;
    match only {
        Some((s, r)) => {
            write_trial(&dir, &ctx.trial(seed, s, r)?)?;
        }
        None => {
            let units: Vec<(usize, usize)> = (0..ctx.n_field_scenarios())
                .flat_map(|f| (0..config.replicates).map(move |r| (f, r)))
                .collect();
            units.par_iter().try_for_each(|&(f, r)| {
                for trial in ctx.paired_trials(seed, f, r)? {
                    write_trial(&dir, &trial)?;
                }
                Ok::<_, Error>(())
            })?;
        }
    }
    let pairs = only.map(|p| vec![p]);
    write_run_header(&staging, &ctx, pairs.as_deref())?;
    staging.commit()
}

/// Fits every trial in `trials_dir` under the configured policies, or a
/// single fixed bandwidth.
pub fn fit_to_dir(
    config: &ScenarioConfig,
    trials_dir: &Path,
    out: &Path,
    bandwidth: Option<f64>,
) -> Result<()> {
    let mut config = config.clone();
    if let Some(h) = bandwidth {
        config.bandwidths = vec![BandwidthPolicy::fixed(h)?];
    }
    let staging = Staging::new(out)?;
    let dir = staging.dir(FITS_DIR)?;
    list_trials(trials_dir)?.par_iter().try_for_each(|path| {
        let trial = read_trial(path)?;
        for fit in fit_trial(&trial, &config)? {
            write_fit(&dir, &trial, &fit)?;
        }
        Ok::<_, Error>(())
    })?;
    staging.commit()
}

/// Scores every trial against its stored fits for each configured policy.
pub fn score_to_dir(
    config: &ScenarioConfig,
    trials_dir: &Path,
    fits_dir: &Path,
    out: &Path,
) -> Result<Vec<ScenarioResult>> {
    let staging = Staging::new(out)?;
    let per_trial = list_trials(trials_dir)?
        .par_iter()
        .map(|path| {
            let trial = read_trial(path)?;
            let l = &trial.labels;
            config
                .bandwidths
                .iter()
                .map(|policy| {
                    let fit_path: PathBuf = fits_dir.join(format!(
                        "{}.csv",
                        fit_stem(l.scenario_id, l.replicate, *policy)
                    ));
                    let (meta, fit) = read_fit(&fit_path)?;
                    if meta.policy != *policy
                        || meta.scenario_id != l.scenario_id
                        || meta.replicate != l.replicate
                    {
                        return Err(Error::Data(format!(
                            "{} does not belong to scenario {} replicate {}",
                            fit_path.display(),
                            l.scenario_id,
                            l.replicate
                        )));
                    }
                    score_fit(&trial, &fit)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results: Vec<ScenarioResult> = per_trial.into_iter().flatten().collect();
    sort_results(&mut results, &config.bandwidths);
    write_scores(&staging.path().join(SCORES_FILE), &results)?;
    staging.commit()?;
    Ok(results)
}

pub fn report_to_dir(config: &ScenarioConfig, scores: &Path, out: &Path) -> Result<()> {
    let mut results = read_scores(scores)?;
    sort_results(&mut results, &config.bandwidths);
    let report = build_report(config, &results)?;
    let staging = Staging::new(out)?;
    write_report(&staging.dir(REPORT_DIR)?, config, &report)?;
    staging.commit()
}
