//! Geographically weighted regression with a Gaussian kernel.
//!
//! Each plot is a query point. The local estimate solves the weighted least
//! squares problem with weights `exp(−d²/2h²)` on Euclidean grid distance.
//!
//! On a lattice the Gaussian kernel factorises into a row part and a range
//! part, and the design row depends only on the rate. Plots sharing a range
//! and a rate therefore collapse into a single row of the root-weighted
//! design whose weight is the row-kernel sum over the group. The collapsed
//! problem has the same normal equations as the full `n`-row problem, so
//! [`GwrProblem`] factorises a handful of rows per query instead of `n`.
//! [`gwr_fit_dense`] keeps the direct per-query route for cross-checking.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid_design::FieldGrid;
use crate::linalg::{compensated_sum, Qr};
use crate::simulate::{ResponseKind, TrialData};
use crate::{Error, Result};

/// Relative threshold on the diagonal of `R` (after column equilibration)
/// below which a local design is treated as rank deficient.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Golden-section stopping width in grid units.
pub const GOLDEN_TOL: f64 = 0.01;

/// Points in the log-spaced pre-scan of the bandwidth interval.
pub const SCAN_POINTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AiccFormula {
    /// `n ln τ² + n ln 2π + n (n + tr S) / (n − 2 − tr S)`.
    #[default]
    Standard,
    /// Same with a leading `2n ln τ²`.
    PaperLiteral,
}

impl FromStr for AiccFormula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(AiccFormula::Standard),
            "paper-literal" => Ok(AiccFormula::PaperLiteral),
            other => Err(Error::InvalidInput(format!(
                "unknown AICc formula `{other}` (expected standard or paper-literal)"
            ))),
        }
    }
}

/// How the bandwidth of a fit is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub enum BandwidthPolicy {
    Fixed(f64),
    AiccOptimal,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PolicyRepr {
    Fixed(f64),
    Named(String),
}

impl TryFrom<PolicyRepr> for BandwidthPolicy {
    type Error = Error;
    fn try_from(r: PolicyRepr) -> Result<Self> {
        match r {
            PolicyRepr::Fixed(h) => BandwidthPolicy::fixed(h),
            PolicyRepr::Named(s) => s.parse(),
        }
    }
}

impl From<BandwidthPolicy> for PolicyRepr {
    fn from(p: BandwidthPolicy) -> Self {
        match p {
            BandwidthPolicy::Fixed(h) => PolicyRepr::Fixed(h),
            BandwidthPolicy::AiccOptimal => PolicyRepr::Named("aicc".into()),
        }
    }
}

impl BandwidthPolicy {
    pub fn fixed(h: f64) -> Result<Self> {
        KernelSpec::gaussian(h).map(|_| BandwidthPolicy::Fixed(h))
    }

    /// `5`, `9`, … for fixed bandwidths and `aicc` for the selected one.
    pub fn label(&self) -> String {
        match self {
            BandwidthPolicy::Fixed(h) => format!("{h}"),
            BandwidthPolicy::AiccOptimal => "aicc".into(),
        }
    }
}

impl fmt::Display for BandwidthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for BandwidthPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("aicc") {
            return Ok(BandwidthPolicy::AiccOptimal);
        }
        s.parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("unknown bandwidth policy `{s}`")))
            .and_then(BandwidthPolicy::fixed)
    }
}

/// Gaussian kernel with scale `bandwidth` in grid units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    fn weight_sq(&self, d2: f64) -> f64 {
        (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }
}

/// Kernel weights of every plot relative to `query`.
pub fn gaussian_weights(query: [f64; 2], coords: &[[f64; 2]], kernel: KernelSpec) -> Vec<f64> {
    coords
        .iter()
        .map(|c| {
            let dr = c[0] - query[0];
            let dc = c[1] - query[1];
            kernel.weight_sq(dr * dr + dc * dc)
        })
        .collect()
}

/// Polynomial basis `[1, N]` or `[1, N, N²]`.
pub fn basis_row(rate: f64, basis: ResponseKind) -> Vec<f64> {
    (0..basis.n_coefficients())
        .map(|j| rate.powi(j as i32))
        .collect()
}

pub fn design_matrix(rates: &[f64], basis: ResponseKind) -> DMatrix<f64> {
    let p = basis.n_coefficients();
    DMatrix::from_fn(rates.len(), p, |i, j| rates[i].powi(j as i32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub beta: Vec<f64>,
    /// Diagonal smoother entry `S_qq` for the query plot.
    pub hat: f64,
}

/// Root-weighted, column-equilibrated QR of a local design.
struct LocalSolver {
    qr: Qr,
    col_scale: Vec<f64>,
}

impl LocalSolver {
    /// `rows` is column-major `m × p`, already multiplied by `√w`.
    fn new(mut rows: Vec<f64>, m: usize, p: usize) -> Option<Self> {
        if m < p {
            return None;
        }
        let mut col_scale = vec![1.0; p];
        for (j, scale) in col_scale.iter_mut().enumerate() {
            let col = &mut rows[j * m..(j + 1) * m];
            let norm = col.iter().fold(0.0f64, |acc, v| acc.hypot(*v));
            if norm == 0.0 || !norm.is_finite() {
                return None;
            }
            *scale = 1.0 / norm;
            col.iter_mut().for_each(|v| *v *= *scale);
        }
        let qr = Qr::from_col_major(rows, m, p);
        if qr.is_rank_deficient(RANK_REL_TOL) {
            return None;
        }
        Some(LocalSolver { qr, col_scale })
    }

    fn solve(&self, rhs: Vec<f64>) -> Vec<f64> {
        let mut beta = self.qr.least_squares(&rhs);
        for (b, s) in beta.iter_mut().zip(&self.col_scale) {
            *b *= s;
        }
        beta
    }

    /// `zᵀ (ZᵀWZ)⁻¹ z`.
    fn leverage(&self, z: &[f64]) -> f64 {
        let scaled: Vec<f64> = z.iter().zip(&self.col_scale).map(|(v, s)| v * s).collect();
        self.qr.solve_rt(&scaled).iter().map(|v| v * v).sum()
    }
}

/// Weighted least-squares fit at plot `query`.
///
/// Factorises `√W Z` by Householder QR; no normal-equation inverse is formed.
pub fn local_fit(y: &[f64], z: &DMatrix<f64>, w: &[f64], query: usize) -> Result<LocalFit> {
    let (n, p) = z.shape();
    if y.len() != n || w.len() != n || query >= n {
        return Err(Error::InvalidInput(format!(
            "local fit shapes disagree: y {}, z {}×{}, w {}, query {query}",
            y.len(),
            n,
            p,
            w.len()
        )));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "weights must be finite and non-negative".into(),
        ));
    }
    let root: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut rows = Vec::with_capacity(n * p);
    for j in 0..p {
        rows.extend((0..n).map(|i| root[i] * z[(i, j)]));
    }
    let solver = LocalSolver::new(rows, n, p).ok_or(Error::SingularLocalFit { query })?;
    let rhs: Vec<f64> = (0..n).map(|i| root[i] * y[i]).collect();
    let beta = solver.solve(rhs);
    let zq: Vec<f64> = (0..p).map(|j| z[(query, j)]).collect();
    let hat = w[query] * solver.leverage(&zq);
    Ok(LocalFit { beta, hat })
}

/// AICc of a smoother with `trace_s` effective parameters.
pub fn aicc(n: usize, rss: f64, trace_s: f64, formula: AiccFormula) -> f64 {
    let nf = n as f64;
    let denom = nf - 2.0 - trace_s;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    let tau2 = rss / nf;
    let lead = match formula {
        AiccFormula::Standard => 1.0,
        AiccFormula::PaperLiteral => 2.0,
    };
    lead * nf * tau2.ln() + nf * (2.0 * std::f64::consts::PI).ln() + nf * (nf + trace_s) / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwrFit {
    /// `n × p` local estimates.
    pub beta_hat: DMatrix<f64>,
    pub fitted: Vec<f64>,
    pub trace_s: f64,
    pub rss: f64,
    /// Maximum-likelihood error variance `RSS / n`.
    pub tau2: f64,
    pub aicc: f64,
    pub bandwidth: f64,
    pub policy: BandwidthPolicy,
}

/// Plots sharing a range and a rate.
#[derive(Debug)]
struct Group {
    range: usize,
    rate: f64,
    rate_row: Vec<f64>,
    rows: Vec<usize>,
}

/// Prepared GWR problem on a lattice: data, basis and plot groups.
#[derive(Debug)]
pub struct GwrProblem<'a> {
    grid: &'a FieldGrid,
    rates: &'a [f64],
    y: &'a [f64],
    basis: ResponseKind,
    groups: Vec<Group>,
    group_of: Vec<usize>,
}

/// Sums of RSS and hat diagonal for one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSummary {
    pub rss: f64,
    pub trace_s: f64,
}

impl<'a> GwrProblem<'a> {
    pub fn new(
        grid: &'a FieldGrid,
        rates: &'a [f64],
        y: &'a [f64],
        basis: ResponseKind,
    ) -> Result<Self> {
        let n = grid.len();
        if rates.len() != n || y.len() != n {
            return Err(Error::InvalidInput(format!(
                "grid has {n} plots, rates {}, responses {}",
                rates.len(),
                y.len()
            )));
        }
        if rates.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "rates and responses must be finite".into(),
            ));
        }
        let mut groups: Vec<Group> = Vec::new();
        let mut group_of = vec![0; n];
        for range in 1..=grid.n_ranges() {
            let first = groups.len();
            for row in 1..=grid.n_rows() {
                let i = grid.index_of(row, range);
                let rate = rates[i];
                let g = groups[first..].iter().position(|g| g.rate == rate);
                let g = match g {
                    Some(off) => first + off,
                    None => {
                        groups.push(Group {
                            range,
                            rate,
                            rate_row: basis_row(rate, basis),
                            rows: Vec::new(),
                        });
                        groups.len() - 1
                    }
                };
                groups[g].rows.push(row);
                group_of[i] = g;
            }
        }
        Ok(GwrProblem {
            grid,
            rates,
            y,
            basis,
            groups,
            group_of,
        })
    }

    pub fn from_trial(trial: &'a TrialData, basis: ResponseKind) -> Result<Self> {
        Self::new(&trial.grid, &trial.design.treatment, &trial.yields, basis)
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// Per-group kernel sums `Σ_r a(r − r0)` and `Σ_r a(r − r0) y_r` for
    /// every query row `r0`, laid out `[group][r0]`.
    fn row_sums(&self, kernel: KernelSpec) -> (Vec<f64>, Vec<f64>) {
        let n_rows = self.grid.n_rows();
        let a: Vec<f64> = (0..n_rows)
            .map(|d| kernel.weight_sq((d * d) as f64))
            .collect();
        let mut sw = vec![0.0; self.groups.len() * n_rows];
        let mut swy = vec![0.0; self.groups.len() * n_rows];
        for (g, group) in self.groups.iter().enumerate() {
            for r0 in 1..=n_rows {
                let (mut s, mut sy) = (0.0, 0.0);
                for &r in &group.rows {
                    let w = a[r.abs_diff(r0)];
                    s += w;
                    sy += w * self.y[self.grid.index_of(r, group.range)];
                }
                sw[g * n_rows + r0 - 1] = s;
                swy[g * n_rows + r0 - 1] = sy;
            }
        }
        (sw, swy)
    }

    fn solve_all(&self, kernel: KernelSpec) -> Result<Vec<LocalFit>> {
        let n_rows = self.grid.n_rows();
        let p = self.basis.n_coefficients();
        let b: Vec<f64> = (0..self.grid.n_ranges())
            .map(|d| kernel.weight_sq((d * d) as f64))
            .collect();
        let (sw, swy) = self.row_sums(kernel);
        (0..self.n())
            .into_par_iter()
            .map(|q| {
                let r0 = self.grid.row_of(q);
                let c0 = self.grid.range_of(q);
                let mut weights = Vec::with_capacity(self.groups.len());
                for (g, group) in self.groups.iter().enumerate() {
                    let w = b[group.range.abs_diff(c0)] * sw[g * n_rows + r0 - 1];
                    if w > 0.0 {
                        weights.push((g, w));
                    }
                }
                let m = weights.len();
                let mut rows = vec![0.0; m * p];
                let mut rhs = vec![0.0; m];
                for (k, &(g, w)) in weights.iter().enumerate() {
                    let root = w.sqrt();
                    for j in 0..p {
                        rows[j * m + k] = root * self.groups[g].rate_row[j];
                    }
                    rhs[k] = b[self.groups[g].range.abs_diff(c0)] * swy[g * n_rows + r0 - 1] / root;
                }
                let singular = || Error::SingularFit {
                    query: q,
                    row: r0,
                    range: c0,
                    bandwidth: kernel.bandwidth(),
                };
                let solver = LocalSolver::new(rows, m, p).ok_or_else(singular)?;
                let beta = solver.solve(rhs);
                // Own weight is exp(0) = 1.
                let hat = solver.leverage(&self.groups[self.group_of[q]].rate_row);
                Ok(LocalFit { beta, hat })
            })
            .collect()
    }

    fn summarise(&self, fits: &[LocalFit]) -> (Vec<f64>, FitSummary) {
        let fitted: Vec<f64> = fits
            .iter()
            .enumerate()
            .map(|(i, f)| dot(&f.beta, &self.groups[self.group_of[i]].rate_row))
            .collect();
        let rss = compensated_sum(self.y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)));
        let trace_s = compensated_sum(fits.iter().map(|f| f.hat));
        (fitted, FitSummary { rss, trace_s })
    }

    /// RSS and `tr(S)` at one bandwidth without keeping the estimates.
    pub fn evaluate(&self, kernel: KernelSpec) -> Result<FitSummary> {
        let fits = self.solve_all(kernel)?;
        Ok(self.summarise(&fits).1)
    }

    pub fn aicc_at(&self, kernel: KernelSpec, formula: AiccFormula) -> Result<f64> {
        let s = self.evaluate(kernel)?;
        Ok(aicc(self.n(), s.rss, s.trace_s, formula))
    }

    pub fn fit(
        &self,
        kernel: KernelSpec,
        formula: AiccFormula,
        policy: BandwidthPolicy,
    ) -> Result<GwrFit> {
        let fits = self.solve_all(kernel)?;
        let (fitted, summary) = self.summarise(&fits);
        let p = self.basis.n_coefficients();
        let beta_hat = DMatrix::from_fn(self.n(), p, |i, j| fits[i].beta[j]);
        let n = self.n();
        Ok(GwrFit {
            beta_hat,
            fitted,
            trace_s: summary.trace_s,
            rss: summary.rss,
            tau2: summary.rss / n as f64,
            aicc: aicc(n, summary.rss, summary.trace_s, formula),
            bandwidth: kernel.bandwidth(),
            policy,
        })
    }

    /// Minimises AICc over `[lo, hi]`; see [`minimise_bandwidth`].
    pub fn select_bandwidth(
        &self,
        search: (f64, f64),
        formula: AiccFormula,
    ) -> Result<BandwidthSelection> {
        minimise_bandwidth(
            |h| match self.aicc_at(KernelSpec::gaussian(h)?, formula) {
                Err(Error::SingularFit { .. }) => Ok(f64::INFINITY),
                other => other,
            },
            search.0,
            search.1,
        )
    }

    pub fn rates(&self) -> &[f64] {
        self.rates
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// GWR at a fixed kernel for a stored trial.
pub fn gwr_fit(
    trial: &TrialData,
    basis: ResponseKind,
    kernel: KernelSpec,
    formula: AiccFormula,
) -> Result<GwrFit> {
    GwrProblem::from_trial(trial, basis)?.fit(
        kernel,
        formula,
        BandwidthPolicy::Fixed(kernel.bandwidth()),
    )
}

/// Reference GWR: one full `n`-row weighted QR per query plot.
pub fn gwr_fit_dense(
    grid: &FieldGrid,
    rates: &[f64],
    y: &[f64],
    basis: ResponseKind,
    kernel: KernelSpec,
    formula: AiccFormula,
) -> Result<GwrFit> {
    let n = grid.len();
    let z = design_matrix(rates, basis);
    let fits = (0..n)
        .map(|q| {
            let w = gaussian_weights(grid.coords()[q], grid.coords(), kernel);
            local_fit(y, &z, &w, q).map_err(|_| Error::SingularFit {
                query: q,
                row: grid.row_of(q),
                range: grid.range_of(q),
                bandwidth: kernel.bandwidth(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p = basis.n_coefficients();
    let beta_hat = DMatrix::from_fn(n, p, |i, j| fits[i].beta[j]);
    let fitted: Vec<f64> = (0..n)
        .map(|i| (0..p).map(|j| z[(i, j)] * beta_hat[(i, j)]).sum())
        .collect();
    let rss = compensated_sum(y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)));
    let trace_s = compensated_sum(fits.iter().map(|f| f.hat));
    Ok(GwrFit {
        beta_hat,
        fitted,
        trace_s,
        rss,
        tau2: rss / n as f64,
        aicc: aicc(n, rss, trace_s, formula),
        bandwidth: kernel.bandwidth(),
        policy: BandwidthPolicy::Fixed(kernel.bandwidth()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub objective: f64,
}

/// Minimises `objective` over `[lo, hi]`.
///
/// A log-spaced scan of [`SCAN_POINTS`] points runs first. If the scanned
/// values fall then rise (unimodal), golden-section search refines over the
/// whole interval; otherwise golden-section refines only the bracket around
/// the best scanned point. The best point evaluated anywhere is returned.
/// `+∞` marks infeasible bandwidths.
pub fn minimise_bandwidth<F>(mut objective: F, lo: f64, hi: f64) -> Result<BandwidthSelection>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "bandwidth search interval [{lo}, {hi}] is invalid"
        )));
    }
    let mut best = BandwidthSelection {
        bandwidth: f64::NAN,
        objective: f64::INFINITY,
    };
    let mut eval = |h: f64, best: &mut BandwidthSelection| -> Result<f64> {
        let v = objective(h)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.objective || (best.bandwidth.is_nan() && v.is_finite()) {
            *best = BandwidthSelection {
                bandwidth: h,
                objective: v,
            };
        }
        Ok(v)
    };
    let ratio = hi / lo;
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| {
            if k == SCAN_POINTS - 1 {
                hi
            } else {
                lo * ratio.powf(k as f64 / (SCAN_POINTS - 1) as f64)
            }
        })
        .collect();
    let mut fs = Vec::with_capacity(SCAN_POINTS);
    for &x in &xs {
        fs.push(eval(x, &mut best)?);
    }
    if !best.objective.is_finite() && best.objective != f64::NEG_INFINITY {
        return Err(Error::BandwidthSelection { lo, hi });
    }
    let m = (0..SCAN_POINTS)
        .min_by(|&a, &b| fs[a].total_cmp(&fs[b]))
        .expect("scan is non-empty");
    let unimodal =
        fs[..=m].windows(2).all(|w| w[1] <= w[0]) && fs[m..].windows(2).all(|w| w[1] >= w[0]);
    let (mut a, mut b) = if unimodal {
        (lo, hi)
    } else {
        (xs[m.saturating_sub(1)], xs[(m + 1).min(SCAN_POINTS - 1)])
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c, &mut best)?;
    let mut fd = eval(d, &mut best)?;
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c, &mut best)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d, &mut best)?;
        }
    }
    Ok(best)
}

/// AICc-optimal bandwidth for a trial.
pub fn select_bandwidth_aicc(
    trial: &TrialData,
    basis: ResponseKind,
    search: (f64, f64),
    formula: AiccFormula,
) -> Result<BandwidthSelection> {
    GwrProblem::from_trial(trial, basis)?.select_bandwidth(search, formula)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_design::{allocate_treatments, build_grid, DesignKind, TreatmentLevels};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Solves `(ZᵀWZ) β = ZᵀWy` by Gaussian elimination with partial pivoting.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(y: &[f64], z: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
        let p = z.ncols();
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..z.nrows() {
            for r in 0..p {
                for c in 0..p {
                    a[r][c] += w[i] * z[(i, r)] * z[(i, c)];
                }
                a[r][p] += w[i] * z[(i, r)] * y[i];
            }
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|r| a[r][p] / a[r][r]).collect()
    }

    fn random_problem(n: usize, p: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
        let mut rng = rng_from_seed(seed);
        let z = DMatrix::from_fn(n, p, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        });
        let y = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let w = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        (y, z, w)
    }

    fn small_trial(
        n_rows: usize,
        n_ranges: usize,
        kind: DesignKind,
        basis: ResponseKind,
        seed: u64,
    ) -> (FieldGrid, Vec<f64>, Vec<f64>) {
        let grid = build_grid(n_rows, n_ranges).unwrap();
        let mut rng = rng_from_seed(seed);
        let plan = allocate_treatments(&grid, &TreatmentLevels::default(), kind, &mut rng).unwrap();
        let y = plan
            .treatment
            .iter()
            .map(|&n| {
                let mean = match basis {
                    ResponseKind::Linear => 65.0 + 0.05 * n,
                    ResponseKind::Quadratic => 65.0 + 0.05 * n - 0.0003 * n * n,
                };
                mean + 3.0 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        (grid, plan.treatment, y)
    }

    #[test]
    fn weights_closed_form() {
        let k = KernelSpec::gaussian(5.0).unwrap();
        let w = gaussian_weights([3.0, 4.0], &[[3.0, 4.0], [3.0, 9.0], [6.0, 8.0]], k);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((w[1] - 0.60653).abs() < 1e-5);
        assert_eq!(w[1], w[2]);
    }

    #[test]
    fn flat_kernel_limit() {
        let g = build_grid(93, 20).unwrap();
        let k = KernelSpec::gaussian(1e6).unwrap();
        for q in [0, 900, 1859] {
            let w = gaussian_weights(g.coords()[q], g.coords(), k);
            assert!(w.iter().all(|v| (1.0 - v).abs() < 1e-6));
        }
    }

    #[test]
    fn kernel_rejects_nonpositive_bandwidth() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn uniform_weights_give_ols() {
        let (y, z, _) = random_problem(30, 3, 4);
        let w = vec![1.0; 30];
        let fit = local_fit(&y, &z, &w, 0).unwrap();
        let ols = Qr::new(&z).least_squares(&y);
        for (a, b) in fit.beta.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_is_interpolated_exactly() {
        let rates = [0.0, 35.0, 70.0, 105.0, 140.0];
        let z = design_matrix(&rates, ResponseKind::Quadratic);
        let y: Vec<f64> = rates.iter().map(|n| 1.0 + 2.0 * n).collect();
        let w = [0.3, 1.0, 0.7, 0.01, 2.0];
        let fit = local_fit(&y, &z, &w, 2).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-9);
        assert!((fit.beta[1] - 2.0).abs() < 1e-11);
        assert!(fit.beta[2].abs() < 1e-13);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        for seed in 0..5 {
            let (y, z, w) = random_problem(10, 3, seed);
            let fit = local_fit(&y, &z, &w, 3).unwrap();
            let oracle = normal_equations(&y, &z, &w);
            for (a, b) in fit.beta.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn estimate_maximises_local_log_likelihood() {
        // Cyclic coordinate ascent on Σ w (y − zβ)²: each step minimises
        // exactly along one coordinate, no factorisation involved.
        let (y, z, w) = random_problem(12, 3, 44);
        let fit = local_fit(&y, &z, &w, 0).unwrap();
        let mut beta = vec![0.0; 3];
        for _ in 0..20_000 {
            for j in 0..3 {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..12 {
                    let partial: f64 = (0..3)
                        .filter(|&k| k != j)
                        .map(|k| z[(i, k)] * beta[k])
                        .sum();
                    num += w[i] * z[(i, j)] * (y[i] - partial);
                    den += w[i] * z[(i, j)] * z[(i, j)];
                }
                beta[j] = num / den;
            }
        }
        for (a, b) in fit.beta.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        let loglik = |b: &[f64]| -> f64 {
            -(0..12)
                .map(|i| {
                    let r = y[i] - (0..3).map(|k| z[(i, k)] * b[k]).sum::<f64>();
                    w[i] * r * r
                })
                .sum::<f64>()
        };
        let best = loglik(&fit.beta);
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let pert: Vec<f64> = fit
                .beta
                .iter()
                .map(|b| b + 1e-3 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            assert!(loglik(&pert) <= best);
        }
    }

    #[test]
    fn ols_hat_trace_equals_p() {
        let (y, z, _) = random_problem(25, 3, 9);
        let w = vec![1.0; 25];
        let trace: f64 = (0..25).map(|q| local_fit(&y, &z, &w, q).unwrap().hat).sum();
        assert!((trace - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_design_is_reported() {
        let rates = [35.0; 6];
        let z = design_matrix(&rates, ResponseKind::Linear);
        let y = [1.0; 6];
        let r = local_fit(&y, &z, &[1.0; 6], 4);
        assert!(matches!(r, Err(Error::SingularLocalFit { query: 4 })));
    }

    #[test]
    fn lattice_path_matches_dense_path() {
        for (kind, basis, seed) in [
            (DesignKind::Systematic, ResponseKind::Linear, 1),
            (DesignKind::Randomised, ResponseKind::Quadratic, 2),
            (DesignKind::Systematic, ResponseKind::Quadratic, 3),
        ] {
            let (grid, rates, y) = small_trial(7, 10, kind, basis, seed);
            let problem = GwrProblem::new(&grid, &rates, &y, basis).unwrap();
            for h in [1.0, 2.5, 5.0, 30.0] {
                let k = KernelSpec::gaussian(h).unwrap();
                let fast = problem
                    .fit(k, AiccFormula::Standard, BandwidthPolicy::Fixed(h))
                    .unwrap();
                let dense =
                    gwr_fit_dense(&grid, &rates, &y, basis, k, AiccFormula::Standard).unwrap();
                for j in 0..basis.n_coefficients() {
                    let scale = dense.beta_hat.column(j).amax();
                    for i in 0..grid.len() {
                        let diff = (fast.beta_hat[(i, j)] - dense.beta_hat[(i, j)]).abs();
                        assert!(diff <= 1e-9 * scale.max(1.0), "h={h} coef {j}: {diff}");
                    }
                }
                assert!((fast.trace_s - dense.trace_s).abs() < 1e-9);
                assert!((fast.rss - dense.rss).abs() < 1e-8 * dense.rss);
            }
        }
    }

    #[test]
    fn lattice_path_handles_mixed_rates_within_a_range() {
        let grid = build_grid(6, 4).unwrap();
        let mut rng = rng_from_seed(12);
        let levels = [0.0, 35.0, 70.0, 105.0, 140.0];
        let rates: Vec<f64> = (0..grid.len())
            .map(|_| levels[rng.random_range(0..5)])
            .collect();
        let y: Vec<f64> = (0..grid.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let k = KernelSpec::gaussian(1.7).unwrap();
        let fast = GwrProblem::new(&grid, &rates, &y, ResponseKind::Quadratic)
            .unwrap()
            .fit(k, AiccFormula::Standard, BandwidthPolicy::Fixed(1.7))
            .unwrap();
        let dense = gwr_fit_dense(
            &grid,
            &rates,
            &y,
            ResponseKind::Quadratic,
            k,
            AiccFormula::Standard,
        )
        .unwrap();
        for i in 0..grid.len() {
            assert!((fast.fitted[i] - dense.fitted[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_free_global_recovery() {
        let grid = build_grid(93, 20).unwrap();
        let plan = allocate_treatments(
            &grid,
            &TreatmentLevels::default(),
            DesignKind::Systematic,
            &mut rng_from_seed(0),
        )
        .unwrap();
        let y: Vec<f64> = plan.treatment.iter().map(|n| 65.0 + 0.05 * n).collect();
        let problem = GwrProblem::new(&grid, &plan.treatment, &y, ResponseKind::Linear).unwrap();
        let fit = problem
            .fit(
                KernelSpec::gaussian(1e4).unwrap(),
                AiccFormula::Standard,
                BandwidthPolicy::Fixed(1e4),
            )
            .unwrap();
        for i in 0..grid.len() {
            assert!((fit.beta_hat[(i, 0)] - 65.0).abs() < 1e-6);
            assert!((fit.beta_hat[(i, 1)] - 0.05).abs() < 1e-6);
        }
    }

    #[test]
    fn bandwidth_five_is_never_singular_on_systematic_plan() {
        let (grid, rates, y) =
            small_trial(93, 20, DesignKind::Systematic, ResponseKind::Quadratic, 5);
        let fit = GwrProblem::new(&grid, &rates, &y, ResponseKind::Quadratic)
            .unwrap()
            .fit(
                KernelSpec::gaussian(5.0).unwrap(),
                AiccFormula::Standard,
                BandwidthPolicy::Fixed(5.0),
            )
            .unwrap();
        assert_eq!(fit.beta_hat.nrows(), 1860);
        assert!(fit.trace_s > 0.0 && fit.trace_s < 1860.0);
    }

    #[test]
    fn trace_decreases_with_bandwidth() {
        let (grid, rates, y) =
            small_trial(93, 20, DesignKind::Randomised, ResponseKind::Quadratic, 6);
        let problem = GwrProblem::new(&grid, &rates, &y, ResponseKind::Quadratic).unwrap();
        let traces: Vec<f64> = [2.0, 5.0, 9.0, 20.0]
            .iter()
            .map(|&h| {
                problem
                    .evaluate(KernelSpec::gaussian(h).unwrap())
                    .unwrap()
                    .trace_s
            })
            .collect();
        assert!(traces.windows(2).all(|w| w[1] < w[0]), "{traces:?}");
    }

    #[test]
    fn tiny_bandwidth_is_singular() {
        let (grid, rates, y) =
            small_trial(5, 10, DesignKind::Systematic, ResponseKind::Quadratic, 7);
        let problem = GwrProblem::new(&grid, &rates, &y, ResponseKind::Quadratic).unwrap();
        let r = problem.evaluate(KernelSpec::gaussian(0.05).unwrap());
        assert!(matches!(r, Err(Error::SingularFit { .. })));
        let sel = problem.select_bandwidth((0.01, 0.05), AiccFormula::Standard);
        assert!(matches!(sel, Err(Error::BandwidthSelection { .. })));
    }

    #[test]
    fn increasing_objective_selects_lower_bound() {
        let sel = minimise_bandwidth(|h| Ok(h * h), 1.0, 93.0).unwrap();
        assert!((sel.bandwidth - 1.0).abs() < 0.01);
    }

    #[test]
    fn unimodal_objective_is_refined() {
        let sel = minimise_bandwidth(|h| Ok((h - 17.3).powi(2)), 1.0, 93.0).unwrap();
        assert!((sel.bandwidth - 17.3).abs() < 0.01);
    }

    #[test]
    fn multimodal_objective_uses_scan_bracket() {
        // Local minimum near 60, global minimum near 3.
        let f = |h: f64| Ok(((h - 3.0).powi(2) - 5.0).min((h - 60.0).powi(2)));
        let sel = minimise_bandwidth(f, 1.0, 93.0).unwrap();
        assert!((sel.bandwidth - 3.0).abs() < 0.01, "{sel:?}");
    }

    #[test]
    fn singular_candidates_are_skipped() {
        let sel =
            minimise_bandwidth(|h| Ok(if h < 4.0 { f64::INFINITY } else { h }), 1.0, 93.0).unwrap();
        assert!(sel.bandwidth >= 4.0 && sel.bandwidth < 4.5);
    }

    #[test]
    fn aicc_formula_variants() {
        let n = 100;
        let std = aicc(n, 50.0, 5.0, AiccFormula::Standard);
        let lit = aicc(n, 50.0, 5.0, AiccFormula::PaperLiteral);
        assert!((lit - std - 100.0 * 0.5f64.ln()).abs() < 1e-9);
        assert_eq!(aicc(n, 50.0, 98.0, AiccFormula::Standard), f64::INFINITY);
    }

    #[test]
    fn fits_are_identical_across_thread_counts() {
        let (grid, rates, y) =
            small_trial(31, 10, DesignKind::Randomised, ResponseKind::Quadratic, 8);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let problem =
                        GwrProblem::new(&grid, &rates, &y, ResponseKind::Quadratic).unwrap();
                    let sel = problem
                        .select_bandwidth((1.0, 31.0), AiccFormula::Standard)
                        .unwrap();
                    let fit = problem
                        .fit(
                            KernelSpec::gaussian(sel.bandwidth).unwrap(),
                            AiccFormula::Standard,
                            BandwidthPolicy::AiccOptimal,
                        )
                        .unwrap();
                    (sel.bandwidth.to_bits(), fit)
                })
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(8));
    }

    #[test]
    fn policy_labels_round_trip() {
        for p in [
            BandwidthPolicy::Fixed(5.0),
            BandwidthPolicy::Fixed(2.5),
            BandwidthPolicy::AiccOptimal,
        ] {
            assert_eq!(p.label().parse::<BandwidthPolicy>().unwrap(), p);
        }
        assert!("-3".parse::<BandwidthPolicy>().is_err());
    }

    proptest! {
        #[test]
        fn weight_scaling_leaves_estimate_unchanged(seed: u64, scale in 1e-3f64..1e3) {
            let (y, z, w) = random_problem(15, 3, seed);
            let a = local_fit(&y, &z, &w, 0).unwrap();
            let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
            let b = local_fit(&y, &z, &ws, 0).unwrap();
            for (x, y) in a.beta.iter().zip(&b.beta) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}
