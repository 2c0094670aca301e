//! Coefficient-recovery scores and their summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid_design::DesignKind;
use crate::gwr::{BandwidthPolicy, GwrFit};
use crate::linalg::compensated_sum;
use crate::simulate::{CoefficientField, ResponseKind};
use crate::{Error, Result};

/// Factor labels attached to one scored fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLabels {
    pub scenario_id: usize,
    pub replicate: usize,
    pub seed: u64,
    pub design: DesignKind,
    pub response: ResponseKind,
    pub covariance: String,
    pub eta: f64,
    pub policy: BandwidthPolicy,
}

/// MSE of every coefficient for one (trial, bandwidth policy).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub labels: ResultLabels,
    pub mse: Vec<f64>,
    /// Natural log of `mse`; `−∞` marks an exact-zero MSE, which downstream
    /// summaries reject as a data error.
    pub ln_mse: Vec<f64>,
    /// Present for AICc-selected fits.
    pub selected_bandwidth: Option<f64>,
}

impl ScenarioResult {
    pub fn new(
        labels: ResultLabels,
        mse: Vec<f64>,
        selected_bandwidth: Option<f64>,
    ) -> Result<Self> {
        if mse.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::Data(format!(
                "MSE values must be finite and non-negative: {mse:?}"
            )));
        }
        if mse.len() != labels.response.n_coefficients() {
            return Err(Error::Data(format!(
                "{} response expects {} MSE values, got {}",
                labels.response,
                labels.response.n_coefficients(),
                mse.len()
            )));
        }
        let ln_mse = mse.iter().map(|m| m.ln()).collect();
        Ok(ScenarioResult {
            labels,
            mse,
            ln_mse,
            selected_bandwidth,
        })
    }
}

/// `mse_j = (1/n) Σ_i (β_j(s_i) − β̂_j(s_i))²`.
pub fn coefficient_mse(truth: &CoefficientField, fit: &GwrFit) -> Result<Vec<f64>> {
    if truth.beta.shape() != fit.beta_hat.shape() {
        return Err(Error::InvalidInput(format!(
            "truth is {:?} but estimates are {:?}",
            truth.beta.shape(),
            fit.beta_hat.shape()
        )));
    }
    let n = truth.beta.nrows() as f64;
    Ok((0..truth.beta.ncols())
        .map(|j| {
            let diffs = truth
                .beta
                .column(j)
                .iter()
                .zip(fit.beta_hat.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .collect::<Vec<_>>();
            compensated_sum(diffs) / n
        })
        .collect())
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// already sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("{what} has no observations")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "{what} contains non-finite value {bad}"
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    Ok(quantile_sorted(
        &sorted_finite(values, "median input")?,
        0.5,
    ))
}

/// Grouping factors for [`median_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Design,
    Response,
    Covariance,
    Eta,
    Bandwidth,
    Coefficient,
}

fn factor_value(r: &ScenarioResult, coefficient: usize, f: Factor) -> String {
    match f {
        Factor::Design => r.labels.design.to_string(),
        Factor::Response => r.labels.response.to_string(),
        Factor::Covariance => r.labels.covariance.clone(),
        Factor::Eta => format!("{}", r.labels.eta),
        Factor::Bandwidth => r.labels.policy.label(),
        Factor::Coefficient => format!("beta{coefficient}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub key: Vec<String>,
    pub median: f64,
    pub count: usize,
}

/// Median MSE per group. Each result contributes one observation per
/// coefficient. Groups without observations simply do not appear.
pub fn median_table(results: &[ScenarioResult], group_by: &[Factor]) -> Result<Vec<MedianRow>> {
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in results {
        for (j, m) in r.mse.iter().enumerate() {
            let key = group_by.iter().map(|&f| factor_value(r, j, f)).collect();
            groups.entry(key).or_default().push(*m);
        }
    }
    groups
        .into_iter()
        .map(|(key, values)| {
            Ok(MedianRow {
                median: median(&values)?,
                count: values.len(),
                key,
            })
        })
        .collect()
}

/// Display multiplier for coefficient `j` under `response`.
pub fn table_scale(response: ResponseKind, coefficient: usize) -> f64 {
    match (response, coefficient) {
        (_, 0) => 1.0,
        (ResponseKind::Linear, 1) => 1e3,
        (ResponseKind::Quadratic, 1) => 1e4,
        (_, 2) => 1e8,
        _ => 1.0,
    }
}

pub fn scale_label(scale: f64) -> String {
    if scale == 1.0 {
        String::new()
    } else {
        format!("_x1e{}", scale.log10().round() as i32)
    }
}

/// One line of a median table: scaled medians per bandwidth policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianGridRow {
    pub covariance: String,
    pub design: DesignKind,
    pub coefficient: usize,
    pub scale: f64,
    /// Scaled median per policy, `None` where no results exist.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianGrid {
    pub response: ResponseKind,
    pub eta: f64,
    pub policies: Vec<BandwidthPolicy>,
    pub rows: Vec<MedianGridRow>,
}

impl MedianGrid {
    pub fn value(
        &self,
        covariance: &str,
        design: DesignKind,
        coefficient: usize,
        policy: BandwidthPolicy,
    ) -> Option<f64> {
        let col = self.policies.iter().position(|p| *p == policy)?;
        self.rows
            .iter()
            .find(|r| {
                r.covariance == covariance && r.design == design && r.coefficient == coefficient
            })
            .and_then(|r| r.values[col])
    }
}

/// Median MSE table for one response kind and LKJ shape, laid out as
/// covariance × design × coefficient rows and one column per policy.
pub fn median_grid(
    results: &[ScenarioResult],
    response: ResponseKind,
    eta: f64,
    covariances: &[String],
    designs: &[DesignKind],
    policies: &[BandwidthPolicy],
) -> Result<MedianGrid> {
    let mut rows = Vec::new();
    for cov in covariances {
        for &design in designs {
            for coefficient in 0..response.n_coefficients() {
                let scale = table_scale(response, coefficient);
                let values = policies
                    .iter()
                    .map(|policy| {
                        let vals: Vec<f64> = results
                            .iter()
                            .filter(|r| {
                                r.labels.response == response
                                    && r.labels.eta == eta
                                    && &r.labels.covariance == cov
                                    && r.labels.design == design
                                    && r.labels.policy == *policy
                            })
                            .map(|r| r.mse[coefficient])
                            .collect();
                        if vals.is_empty() {
                            Ok(None)
                        } else {
                            median(&vals).map(|m| Some(m * scale))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(MedianGridRow {
                    covariance: cov.clone(),
                    design,
                    coefficient,
                    scale,
                    values,
                });
            }
        }
    }
    Ok(MedianGrid {
        response,
        eta,
        policies: policies.to_vec(),
        rows,
    })
}

/// Five-number summary with 1.5·IQR outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotStats {
    pub group: Vec<String>,
    pub count: usize,
    /// Lower whisker: smallest value inside the fences, capped at `q1`.
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Upper whisker: largest value inside the fences, floored at `q3`.
    pub max: f64,
    pub outliers: Vec<f64>,
}

pub fn boxplot_stats(group: Vec<String>, values: &[f64]) -> Result<BoxplotStats> {
    let sorted = sorted_finite(values, &format!("group {}", group.join("/")))?;
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let mut inside = sorted.iter().filter(|v| **v >= lo_fence && **v <= hi_fence);
    let min = inside.clone().next().copied().unwrap_or(q1).min(q1);
    let max = inside.next_back().copied().unwrap_or(q3).max(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < lo_fence || *v > hi_fence)
        .collect();
    Ok(BoxplotStats {
        group,
        count: sorted.len(),
        min,
        q1,
        median,
        q3,
        max,
        outliers,
    })
}

/// Unit-width bandwidth histogram; bin `k` counts selections in `[k, k+1)`,
/// the last bin also takes the upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthHistogram {
    pub first_bin: usize,
    pub counts: Vec<usize>,
}

impl BandwidthHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, bin: usize) -> usize {
        bin.checked_sub(self.first_bin)
            .and_then(|i| self.counts.get(i))
            .copied()
            .unwrap_or(0)
    }

    /// Fraction of selections in bins `lo..=hi`.
    pub fn fraction_in(&self, lo: usize, hi: usize) -> f64 {
        let inside: usize = (lo..=hi).map(|b| self.count(b)).sum();
        inside as f64 / self.total().max(1) as f64
    }

    /// Lowest bin among those with the largest count.
    pub fn modal_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        if max == 0 {
            return None;
        }
        self.counts
            .iter()
            .position(|c| *c == max)
            .map(|i| i + self.first_bin)
    }

    pub fn nonzero(&self) -> Vec<(usize, usize)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, c)| (i + self.first_bin, *c))
            .collect()
    }
}

pub fn bandwidth_histogram(selections: &[f64], search: (f64, f64)) -> Result<BandwidthHistogram> {
    let first = search.0.floor().max(0.0) as usize;
    let last = search.1.floor() as usize;
    if last < first {
        return Err(Error::InvalidInput(format!(
            "histogram range [{}, {}] is empty",
            search.0, search.1
        )));
    }
    let mut counts = vec![0; last - first + 1];
    for &h in selections {
        if !h.is_finite() {
            return Err(Error::Data(format!("selected bandwidth {h} is not finite")));
        }
        let bin = (h.floor().max(first as f64) as usize).min(last);
        counts[bin - first] += 1;
    }
    Ok(BandwidthHistogram {
        first_bin: first,
        counts,
    })
}
