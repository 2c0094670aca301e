//! Stage files: per-trial CSV + JSON, per-fit CSV + JSON, and the long
//! score table.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back from any stage file is bit-identical to the one written.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::grid_design::{build_grid, DesignKind, DesignPlan, FieldGrid};
use crate::gwr::{BandwidthPolicy, GwrFit};
use crate::metrics::{ResultLabels, ScenarioResult};
use crate::simulate::{CoefficientField, ResponseKind, TrialData, TrialLabels};
use crate::{Error, Result};

pub const TRIALS_DIR: &str = "trials";
pub const FITS_DIR: &str = "fits";
pub const SCORES_FILE: &str = "scores.csv";

pub const SCORE_COLUMNS: [&str; 12] = [
    "scenario_id",
    "replicate",
    "seed",
    "design",
    "response",
    "covariance",
    "eta",
    "bandwidth_policy",
    "coefficient",
    "mse",
    "ln_mse",
    "selected_bandwidth",
];

/// Shortest round-trip text for `v`, switching to exponent notation for
/// very small or very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn schema(file: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        file: file.to_path_buf(),
        message: message.into(),
    }
}

pub fn trial_stem(scenario_id: usize, replicate: usize) -> String {
    format!("trial_{scenario_id:03}_{replicate:04}")
}

pub fn fit_stem(scenario_id: usize, replicate: usize, policy: BandwidthPolicy) -> String {
    format!("fit_{scenario_id:03}_{replicate:04}_bw{}", policy.label())
}

fn trial_columns(response: ResponseKind) -> Vec<String> {
    let mut cols: Vec<String> = ["row", "range", "rate", "yield"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..response.n_coefficients()).map(|j| format!("beta{j}")));
    cols
}

fn fit_columns(response: ResponseKind) -> Vec<String> {
    let mut cols: Vec<String> = vec!["row".into(), "range".into()];
    cols.extend((0..response.n_coefficients()).map(|j| format!("beta{j}_hat")));
    cols.push("fitted".into());
    cols
}

/// Sidecar metadata of a trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    #[serde(flatten)]
    pub labels: TrialLabels,
    pub n_rows: usize,
    pub n_ranges: usize,
    pub replicate_blocks: usize,
    pub strips_per_block: usize,
}

/// Sidecar metadata of a fit CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    pub scenario_id: usize,
    pub replicate: usize,
    pub response: ResponseKind,
    pub n_rows: usize,
    pub n_ranges: usize,
    pub policy: BandwidthPolicy,
    pub bandwidth: f64,
    pub trace_s: f64,
    pub rss: f64,
    pub tau2: f64,
    pub aicc: f64,
}

fn write_csv(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| schema(path, e.to_string()))
}

/// Parses a CSV, checking the header against `expected` column by column.
fn parse_csv(path: &Path, bytes: &[u8], expected: &[String]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header = r
        .headers()
        .map_err(|e| schema(path, e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyInput(format!(
            "{} has no header",
            path.display()
        )));
    }
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(schema(
                    path,
                    format!("column {} is `{got}`, expected `{want}`", i + 1),
                ));
            }
            None => return Err(schema(path, format!("missing column `{want}`"))),
        }
    }
    if header.len() > expected.len() {
        return Err(schema(
            path,
            format!("unexpected column `{}`", &header[expected.len()]),
        ));
    }
    r.records()
        .map(|rec| rec.map_err(|e| schema(path, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    columns: &[String],
    i: usize,
) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        schema(
            path,
            format!(
                "line {line}: column `{}` has unparsable value `{raw}`",
                columns[i]
            ),
        )
    })
}

/// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.json`.
pub fn write_trial(dir: &Path, trial: &TrialData) -> Result<PathBuf> {
    let stem = trial_stem(trial.labels.scenario_id, trial.labels.replicate);
    let csv_path = dir.join(format!("{stem}.csv"));
    let grid = &trial.grid;
    let k = trial.truth.n_coefficients();
    write_csv(
        &csv_path,
        &trial_columns(trial.labels.response),
        (0..grid.len()).map(|i| {
            let mut row = vec![
                grid.row_of(i).to_string(),
                grid.range_of(i).to_string(),
                fmt_f64(trial.design.treatment[i]),
                fmt_f64(trial.yields[i]),
            ];
            row.extend((0..k).map(|j| fmt_f64(trial.truth.beta[(i, j)])));
            row
        }),
    )?;
    let meta = TrialMeta {
        labels: trial.labels.clone(),
        n_rows: grid.n_rows(),
        n_ranges: grid.n_ranges(),
        replicate_blocks: trial.design.replicate_blocks,
        strips_per_block: trial.design.strips_per_block,
    };
    write_json(&csv_path.with_extension("json"), &meta)?;
    Ok(csv_path)
}

fn check_position(
    path: &Path,
    line_row: usize,
    row: usize,
    range: usize,
    want: (usize, usize),
) -> Result<()> {
    if (row, range) != want {
        return Err(schema(
            path,
            format!(
                "record {line_row}: columns `row`,`range` are ({row}, {range}), expected ({}, {}) in rows-within-ranges order",
                want.0, want.1
            ),
        ));
    }
    Ok(())
}

/// Grid of the sidecar dimensions, once the record count agrees with it.
fn records_grid(path: &Path, records: usize, n_rows: usize, n_ranges: usize) -> Result<FieldGrid> {
    if n_rows.checked_mul(n_ranges) != Some(records) {
        return Err(schema(
            path,
            format!("{records} records for a {n_rows}×{n_ranges} grid"),
        ));
    }
    build_grid(n_rows, n_ranges).map_err(|e| schema(path, e.to_string()))
}

/// Reads a trial CSV and its JSON sidecar.
pub fn read_trial(csv_path: &Path) -> Result<TrialData> {
    let meta = read_bytes(&csv_path.with_extension("json"))?;
    parse_trial(csv_path, &read_bytes(csv_path)?, &meta)
}

/// Parses trial CSV and sidecar contents; `csv_path` only labels errors.
pub fn parse_trial(csv_path: &Path, csv_bytes: &[u8], meta_bytes: &[u8]) -> Result<TrialData> {
    let meta: TrialMeta = parse_json(&csv_path.with_extension("json"), meta_bytes)?;
    let columns = trial_columns(meta.labels.response);
    let records = parse_csv(csv_path, csv_bytes, &columns)?;
    let grid = records_grid(csv_path, records.len(), meta.n_rows, meta.n_ranges)?;
    let k = meta.labels.response.n_coefficients();
    let mut treatment = Vec::with_capacity(grid.len());
    let mut yields = Vec::with_capacity(grid.len());
    let mut beta = DMatrix::zeros(grid.len(), k);
    for (i, rec) in records.iter().enumerate() {
        let row: usize = field(csv_path, rec, &columns, 0)?;
        let range: usize = field(csv_path, rec, &columns, 1)?;
        check_position(
            csv_path,
            i + 1,
            row,
            range,
            (grid.row_of(i), grid.range_of(i)),
        )?;
        treatment.push(field(csv_path, rec, &columns, 2)?);
        yields.push(field(csv_path, rec, &columns, 3)?);
        for j in 0..k {
            beta[(i, j)] = field(csv_path, rec, &columns, 4 + j)?;
        }
    }
    Ok(TrialData {
        design: DesignPlan {
            kind: meta.labels.design,
            treatment,
            replicate_blocks: meta.replicate_blocks,
            strips_per_block: meta.strips_per_block,
        },
        grid,
        yields,
        truth: CoefficientField { beta },
        labels: meta.labels,
    })
}

/// Trial CSVs in a directory, sorted by file name.
pub fn list_trials(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("trial_"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no trial files in {}",
            dir.display()
        )));
    }
    Ok(paths)
}

pub fn write_fit(dir: &Path, trial: &TrialData, fit: &GwrFit) -> Result<PathBuf> {
    let l = &trial.labels;
    let csv_path = dir.join(format!(
        "{}.csv",
        fit_stem(l.scenario_id, l.replicate, fit.policy)
    ));
    let grid = &trial.grid;
    write_csv(
        &csv_path,
        &fit_columns(l.response),
        (0..grid.len()).map(|i| {
            let mut row = vec![grid.row_of(i).to_string(), grid.range_of(i).to_string()];
            row.extend(fit.beta_hat.row(i).iter().map(|b| fmt_f64(*b)));
            row.push(fmt_f64(fit.fitted[i]));
            row
        }),
    )?;
    let meta = FitMeta {
        scenario_id: l.scenario_id,
        replicate: l.replicate,
        response: l.response,
        n_rows: grid.n_rows(),
        n_ranges: grid.n_ranges(),
        policy: fit.policy,
        bandwidth: fit.bandwidth,
        trace_s: fit.trace_s,
        rss: fit.rss,
        tau2: fit.tau2,
        aicc: fit.aicc,
    };
    write_json(&csv_path.with_extension("json"), &meta)?;
    Ok(csv_path)
}

pub fn read_fit(csv_path: &Path) -> Result<(FitMeta, GwrFit)> {
    let meta = read_bytes(&csv_path.with_extension("json"))?;
    parse_fit(csv_path, &read_bytes(csv_path)?, &meta)
}

/// Parses fit CSV and sidecar contents; `csv_path` only labels errors.
pub fn parse_fit(
    csv_path: &Path,
    csv_bytes: &[u8],
    meta_bytes: &[u8],
) -> Result<(FitMeta, GwrFit)> {
    let meta: FitMeta = parse_json(&csv_path.with_extension("json"), meta_bytes)?;
    let columns = fit_columns(meta.response);
    let records = parse_csv(csv_path, csv_bytes, &columns)?;
    let k = meta.response.n_coefficients();
    let grid = records_grid(csv_path, records.len(), meta.n_rows, meta.n_ranges)?;
    let n = grid.len();
    let mut beta_hat = DMatrix::zeros(n, k);
    let mut fitted = Vec::with_capacity(n);
    for (i, rec) in records.iter().enumerate() {
        let row: usize = field(csv_path, rec, &columns, 0)?;
        let range: usize = field(csv_path, rec, &columns, 1)?;
        check_position(
            csv_path,
            i + 1,
            row,
            range,
            (grid.row_of(i), grid.range_of(i)),
        )?;
        for j in 0..k {
            beta_hat[(i, j)] = field(csv_path, rec, &columns, 2 + j)?;
        }
        fitted.push(field(csv_path, rec, &columns, 2 + k)?);
    }
    let fit = GwrFit {
        beta_hat,
        fitted,
        trace_s: meta.trace_s,
        rss: meta.rss,
        tau2: meta.tau2,
        aicc: meta.aicc,
        bandwidth: meta.bandwidth,
        policy: meta.policy,
    };
    Ok((meta, fit))
}

fn score_rows(r: &ScenarioResult) -> impl Iterator<Item = Vec<String>> + '_ {
    let l = &r.labels;
    (0..r.mse.len()).map(move |j| {
        vec![
            l.scenario_id.to_string(),
            l.replicate.to_string(),
            l.seed.to_string(),
            l.design.to_string(),
            l.response.to_string(),
            l.covariance.clone(),
            l.eta.to_string(),
            l.policy.label(),
            format!("beta{j}"),
            fmt_f64(r.mse[j]),
            fmt_f64(r.ln_mse[j]),
            r.selected_bandwidth.map(fmt_f64).unwrap_or_default(),
        ]
    })
}

/// Long score table: one line per (trial, policy, coefficient).
pub fn write_scores(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    let header: Vec<String> = SCORE_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_csv(path, &header, results.iter().flat_map(score_rows))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScenarioResult>> {
    parse_scores(path, &read_bytes(path)?)
}

/// Parses score-table bytes; `path` is only used in error messages.
pub fn parse_scores(path: &Path, bytes: &[u8]) -> Result<Vec<ScenarioResult>> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::EmptyInput(format!("{} is empty", path.display())));
    }
    let columns: Vec<String> = SCORE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let records = parse_csv(path, bytes, &columns)?;
    if records.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no score records",
            path.display()
        )));
    }
    // Results keyed by (scenario, replicate, policy) in first-seen order.
    let mut index: BTreeMap<(usize, usize, String), usize> = BTreeMap::new();
    let mut partial: Vec<(ResultLabels, Vec<f64>, Option<f64>)> = Vec::new();
    for rec in &records {
        let f = |i| -> &str { rec.get(i).unwrap_or("") };
        let scenario_id: usize = field(path, rec, &columns, 0)?;
        let replicate: usize = field(path, rec, &columns, 1)?;
        let policy: BandwidthPolicy = field(path, rec, &columns, 7)?;
        let coefficient = f(8)
            .strip_prefix("beta")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| {
                schema(
                    path,
                    format!("column `coefficient` has unparsable value `{}`", f(8)),
                )
            })?;
        let mse: f64 = field(path, rec, &columns, 9)?;
        let selected = match f(11) {
            "" => None,
            _ => Some(field::<f64>(path, rec, &columns, 11)?),
        };
        let key = (scenario_id, replicate, policy.label());
        let slot = *index.entry(key).or_insert_with(|| partial.len());
        if slot == partial.len() {
            let labels = ResultLabels {
                scenario_id,
                replicate,
                seed: field(path, rec, &columns, 2)?,
                design: field::<DesignKind>(path, rec, &columns, 3)?,
                response: field::<ResponseKind>(path, rec, &columns, 4)?,
                covariance: f(5).to_string(),
                eta: field(path, rec, &columns, 6)?,
                policy,
            };
            partial.push((labels, Vec::new(), selected));
        }
        let entry = &mut partial[slot];
        if coefficient != entry.1.len() {
            return Err(schema(
                path,
                format!(
                    "column `coefficient`: beta{coefficient} out of order for scenario {scenario_id} replicate {replicate}"
                ),
            ));
        }
        entry.1.push(mse);
    }
    partial
        .into_iter()
        .map(|(labels, mse, selected)| ScenarioResult::new(labels, mse, selected))
        .collect()
}

/// Output staging: files are written under a hidden directory inside the
/// output directory and moved into place only by [`Staging::commit`].
/// Dropping an uncommitted staging area deletes it.
pub struct Staging {
    out: PathBuf,
    root: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        let meta = fs::metadata(out).map_err(|e| Error::io(out, e))?;
        if !meta.is_dir() {
            return Err(Error::InvalidInput(format!(
                "{} is not a directory",
                out.display()
            )));
        }
        let root = out.join(format!(".ofe-gwr-staging-{}", std::process::id()));
        if root.exists() {
            fs::remove_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        }
        fs::create_dir(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Staging {
            out: out.to_path_buf(),
            root,
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Creates (if needed) and returns a staged subdirectory.
    pub fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    /// Moves every staged file to the same relative path in the output
    /// directory, replacing existing files.
    pub fn commit(mut self) -> Result<()> {
        move_tree(&self.root, &self.out)?;
        fs::remove_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        self.committed = true;
        Ok(())
    }
}

fn move_tree(from: &Path, to: &Path) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(from)
        .map_err(|e| Error::io(from, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for src in entries {
        let dst = to.join(src.file_name().expect("directory entry has a name"));
        if src.is_dir() {
            fs::create_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
            move_tree(&src, &dst)?;
        } else {
            fs::rename(&src, &dst).map_err(|e| Error::io(&dst, e))?;
        }
    }
    Ok(())
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.root);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::gwr::{gwr_fit, AiccFormula, KernelSpec};
    use crate::simulate::BatchContext;

    fn small_trial(scenario: usize) -> TrialData {
        let cfg =
            ScenarioConfig::from_json_str(r#"{"n_rows": 6, "n_ranges": 10, "replicates": 1}"#)
                .unwrap();
        BatchContext::new(&cfg)
            .unwrap()
            .trial(7, scenario, 0)
            .unwrap()
    }

    #[test]
    fn trial_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for s in [0, 1, 23] {
            let trial = small_trial(s);
            let path = write_trial(dir.path(), &trial).unwrap();
            assert_eq!(read_trial(&path).unwrap(), trial);
        }
    }

    #[test]
    fn fit_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let trial = small_trial(1);
        let fit = gwr_fit(
            &trial,
            trial.labels.response,
            KernelSpec::gaussian(5.0).unwrap(),
            AiccFormula::Standard,
        )
        .unwrap();
        let path = write_fit(dir.path(), &trial, &fit).unwrap();
        assert_eq!(read_fit(&path).unwrap().1, fit);
    }

    #[test]
    fn oversized_sidecar_grid_is_rejected_before_allocation() {
        let dir = tempfile::tempdir().unwrap();
        let trial = small_trial(0);
        let path = write_trial(dir.path(), &trial).unwrap();
        let csv = fs::read(&path).unwrap();
        let meta = fs::read_to_string(path.with_extension("json"))
            .unwrap()
            .replace("\"n_rows\": 6", &format!("\"n_rows\": {}", usize::MAX / 2));
        let err = parse_trial(&path, &csv, meta.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("records for a"), "{err}");
    }

    proptest::proptest! {
        #[test]
        fn fmt_f64_round_trips(bits in proptest::num::u64::ANY) {
            let v = f64::from_bits(bits);
            proptest::prop_assume!(v.is_finite());
            let back: f64 = fmt_f64(v).parse().unwrap();
            proptest::prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn renamed_column_is_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let trial = small_trial(0);
        let path = write_trial(dir.path(), &trial).unwrap();
        let text = fs::read_to_string(&path)
            .unwrap()
            .replacen("yield", "yld", 1);
        fs::write(&path, text).unwrap();
        let err = read_trial(&path).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        assert!(err.to_string().contains("`yld`"), "{err}");
    }

    #[test]
    fn bad_value_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let trial = small_trial(0);
        let path = write_trial(dir.path(), &trial).unwrap();
        let mut lines: Vec<String> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        let mut cells: Vec<&str> = lines[3].split(',').collect();
        cells[2] = "lots";
        lines[3] = cells.join(",");
        fs::write(&path, lines.join("\n")).unwrap();
        let err = read_trial(&path).unwrap_err().to_string();
        assert!(err.contains("`rate`") && err.contains("lots"), "{err}");
    }

    #[test]
    fn scores_round_trip() {
        let labels = |policy, rep| ResultLabels {
            scenario_id: 4,
            replicate: rep,
            seed: 99,
            design: DesignKind::Systematic,
            response: ResponseKind::Quadratic,
            covariance: "AR1".into(),
            eta: 0.1,
            policy,
        };
        let results = vec![
            ScenarioResult::new(
                labels(BandwidthPolicy::Fixed(5.0), 0),
                vec![24.1, 1e-4 / 3.0, 2e-9],
                None,
            )
            .unwrap(),
            ScenarioResult::new(
                labels(BandwidthPolicy::AiccOptimal, 0),
                vec![0.1, 0.2, 0.3],
                Some(1.2345),
            )
            .unwrap(),
            ScenarioResult::new(
                labels(BandwidthPolicy::Fixed(5.0), 1),
                vec![1.0, 2.0, 3.0],
                None,
            )
            .unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SCORES_FILE);
        write_scores(&path, &results).unwrap();
        assert_eq!(read_scores(&path).unwrap(), results);
    }

    #[test]
    fn empty_scores_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SCORES_FILE);
        fs::write(&path, "").unwrap();
        assert!(matches!(read_scores(&path), Err(Error::EmptyInput(_))));
        fs::write(&path, SCORE_COLUMNS.join(",") + "\n").unwrap();
        assert!(matches!(read_scores(&path), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn staging_discards_on_drop_and_moves_on_commit() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = Staging::new(dir.path()).unwrap();
            fs::write(s.path().join("a.txt"), "x").unwrap();
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        let s = Staging::new(dir.path()).unwrap();
        let sub = s.dir("report").unwrap();
        fs::write(sub.join("b.txt"), "y").unwrap();
        s.commit().unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("report/b.txt")).unwrap(),
            "y"
        );
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(Staging::new(&dir.path().join("missing")).is_err());
    }
}
