//! Covariance structures for the random coefficients.
//!
//! The covariance of the stacked random effects is `Σu = Vs ⊗ Vu`, where
//! `Vs` (n × n) correlates plots and `Vu` (k × k) correlates the coefficients
//! within a plot. With plot-major stacking, `u = (Ls ⊗ Lu) z` reshapes to
//! `U = Ls Z Luᵀ` for an `n × k` matrix `Z` of standard normal deviates, so
//! the full `nk × nk` matrix is never formed.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::grid_design::FieldGrid;
use crate::{Error, Result};

/// Relative pivot threshold for [`chol_lower`].
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Closest an LKJ draw may come to a singular correlation matrix. Beta
/// deviates with shape parameters near 0.1 land within 1e-16 of 0 or 1 a few
/// percent of the time, which would otherwise round to an exactly singular
/// matrix.
pub const LKJ_BOUNDARY_GAP: f64 = 1e-9;

/// Between-plot covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialCovSpec {
    /// `Vs = I`.
    NoSpatial,
    /// `Vs = AR1(rho_col) ⊗ AR1(rho_row)`, columns being ranges.
    Ar1Ar1 {
        #[serde(default = "default_rho_col")]
        rho_col: f64,
        #[serde(default = "default_rho_row")]
        rho_row: f64,
    },
    /// Isotropic Matérn on Euclidean centroid distance.
    Matern {
        #[serde(default = "default_one")]
        sigma2: f64,
        #[serde(default = "default_one")]
        range_scale: f64,
        #[serde(default = "default_nu")]
        nu: f64,
    },
}

fn default_rho_col() -> f64 {
    0.15
}
fn default_rho_row() -> f64 {
    0.5
}
fn default_one() -> f64 {
    1.0
}
fn default_nu() -> f64 {
    1.5
}

impl SpatialCovSpec {
    pub fn ar1_default() -> Self {
        SpatialCovSpec::Ar1Ar1 {
            rho_col: default_rho_col(),
            rho_row: default_rho_row(),
        }
    }

    pub fn matern_default() -> Self {
        SpatialCovSpec::Matern {
            sigma2: 1.0,
            range_scale: 1.0,
            nu: 1.5,
        }
    }

    /// Short label used in result files: `NS`, `AR1` or `Matern`.
    pub fn label(&self) -> &'static str {
        match self {
            SpatialCovSpec::NoSpatial => "NS",
            SpatialCovSpec::Ar1Ar1 { .. } => "AR1",
            SpatialCovSpec::Matern { .. } => "Matern",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SpatialCovSpec::NoSpatial => Ok(()),
            SpatialCovSpec::Ar1Ar1 { rho_col, rho_row } => {
                check_rho(rho_col)?;
                check_rho(rho_row)
            }
            SpatialCovSpec::Matern { .. } => self.matern().map(|_| ()),
        }
    }

    fn matern(&self) -> Result<Matern> {
        match *self {
            SpatialCovSpec::Matern {
                sigma2,
                range_scale,
                nu,
            } => Matern::new(sigma2, range_scale, nu),
            _ => Err(Error::InvalidInput(format!(
                "{} is not a Matérn specification",
                self.label()
            ))),
        }
    }
}

impl fmt::Display for SpatialCovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "AR1 correlation must lie in [0, 1), got {rho}"
        )))
    }
}

/// Half-integer Matérn smoothness values with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl TryFrom<f64> for MaternNu {
    type Error = Error;
    fn try_from(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(MaternNu::Half),
            1.5 => Ok(MaternNu::ThreeHalves),
            2.5 => Ok(MaternNu::FiveHalves),
            other => Err(Error::InvalidInput(format!(
                "Matérn smoothness must be 0.5, 1.5 or 2.5, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matern {
    pub sigma2: f64,
    pub range_scale: f64,
    pub nu: MaternNu,
}

impl Matern {
    pub fn new(sigma2: f64, range_scale: f64, nu: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Matérn variance must be positive, got {sigma2}"
            )));
        }
        if !(range_scale > 0.0 && range_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Matérn range must be positive, got {range_scale}"
            )));
        }
        Ok(Matern {
            sigma2,
            range_scale,
            nu: MaternNu::try_from(nu)?,
        })
    }

    /// Covariance at lag `d ≥ 0`.
    pub fn cov(&self, d: f64) -> f64 {
        let t = d / self.range_scale;
        let poly_exp = match self.nu {
            MaternNu::Half => (-t).exp(),
            MaternNu::ThreeHalves => {
                let a = 3f64.sqrt() * t;
                (1.0 + a) * (-a).exp()
            }
            MaternNu::FiveHalves => {
                let a = 5f64.sqrt() * t;
                (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        };
        self.sigma2 * poly_exp
    }
}

/// Matérn covariance at distance `d` for a `Matern` specification.
pub fn matern_cov(d: f64, spec: &SpatialCovSpec) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "distance must be non-negative, got {d}"
        )));
    }
    Ok(spec.matern()?.cov(d))
}

/// `m × m` AR1 correlation matrix with entries `rho^|i-j|`.
pub fn ar1_matrix(rho: f64, m: usize) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    if m == 0 {
        return Err(Error::InvalidInput("AR1 dimension must be positive".into()));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| {
        rho.powi(i.abs_diff(j) as i32)
    }))
}

/// Between-plot covariance `Vs` in plot order.
pub fn build_vs(grid: &FieldGrid, spec: &SpatialCovSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = grid.len();
    match *spec {
        SpatialCovSpec::NoSpatial => Ok(DMatrix::identity(n, n)),
        SpatialCovSpec::Ar1Ar1 { rho_col, rho_row } => Ok(kron(
            &ar1_matrix(rho_col, grid.n_ranges())?,
            &ar1_matrix(rho_row, grid.n_rows())?,
        )),
        SpatialCovSpec::Matern { .. } => {
            let m = spec.matern()?;
            let c = grid.coords();
            Ok(DMatrix::from_fn(n, n, |i, j| {
                let dr = c[i][0] - c[j][0];
                let dc = c[i][1] - c[j][1];
                m.cov(dr.hypot(dc))
            }))
        }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Lower Cholesky factor `L` with `L Lᵀ = m`.
///
/// Only the lower triangle of `m` is read. Fails when a pivot drops to
/// [`PIVOT_REL_TOL`] times the largest diagonal entry or below.
pub fn chol_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "Cholesky needs a square matrix, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(m[(i, i)]));
    let threshold = PIVOT_REL_TOL * max_diag;
    // Row-major lower triangle: row i holds L[i, 0..=i] contiguously.
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let d = m[(j, j)] - row_j.iter().map(|v| v * v).sum::<f64>();
        if !(d > threshold) {
            return Err(Error::NotPositiveDefinite {
                column: j,
                pivot: d,
            });
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let (head, tail) = l.split_at_mut(i * n);
            let row_j = &head[j * n..j * n + j];
            let row_i = &mut tail[..=j];
            let dot: f64 = row_i[..j].iter().zip(row_j).map(|(a, b)| a * b).sum();
            row_i[j] = (m[(i, j)] - dot) / ljj;
        }
    }
    Ok(DMatrix::from_row_slice(n, n, &l))
}

/// Within-plot coefficient covariance `Vu = B(σu) Ru B(σu)`, `Ru ~ LKJ(η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinGridCovSpec {
    pub sigma_u: Vec<f64>,
    pub eta: f64,
}

impl Default for WithinGridCovSpec {
    fn default() -> Self {
        WithinGridCovSpec {
            sigma_u: vec![5.0, 0.01, 0.0001],
            eta: 1.0,
        }
    }
}

impl WithinGridCovSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.sigma_u.len() < k {
            return Err(Error::InvalidInput(format!(
                "{k} coefficients need {k} standard deviations, got {}",
                self.sigma_u.len()
            )));
        }
        if self.sigma_u.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "coefficient standard deviations must be non-negative: {:?}",
                self.sigma_u
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "LKJ shape must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Draws `Ru` and returns `(Vu, Lu)` with `Lu = B(σu) chol(Ru)`.
    ///
    /// Factoring the correlation and scaling afterwards keeps the pivot check
    /// independent of the very different coefficient scales.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        k: usize,
        rng: &mut R,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.validate(k)?;
        let ru = sample_lkj(self.eta, k, rng)?;
        let lr = chol_lower(&ru)?;
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.sigma_u[..k]));
        let vu = &b * &ru * &b;
        let lu = &b * lr;
        Ok((vu, lu))
    }
}

/// Draws a `k × k` correlation matrix from LKJ(η) by the onion method.
pub fn sample_lkj<R: Rng + ?Sized>(eta: f64, k: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "LKJ shape must be positive, got {eta}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("LKJ dimension must be positive".into()));
    }
    if k == 1 {
        return Ok(DMatrix::identity(1, 1));
    }
    let beta_dist = |a: f64, b: f64| {
        Beta::new(a, b).map_err(|e| Error::InvalidInput(format!("beta({a}, {b}): {e}")))
    };
    let mut beta = eta + (k as f64 - 2.0) / 2.0;
    let x: f64 = beta_dist(beta, beta)?.sample(rng);
    let r12 = (2.0 * x - 1.0).clamp(-1.0 + LKJ_BOUNDARY_GAP, 1.0 - LKJ_BOUNDARY_GAP);
    let mut r = DMatrix::from_row_slice(2, 2, &[1.0, r12, r12, 1.0]);
    for m in 2..k {
        beta -= 0.5;
        let y: f64 = beta_dist(m as f64 / 2.0, beta)?.sample(rng);
        let y = y.min(1.0 - LKJ_BOUNDARY_GAP);
        let mut dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = y.sqrt() / norm;
        dir.iter_mut().for_each(|v| *v *= scale);
        let l = chol_lower(&r)?;
        let z = l * nalgebra::DVector::from_vec(dir);
        let mut next = DMatrix::identity(m + 1, m + 1);
        next.view_mut((0, 0), (m, m)).copy_from(&r);
        for i in 0..m {
            next[(i, m)] = z[i];
            next[(m, i)] = z[i];
        }
        r = next;
    }
    Ok(r)
}

/// Structured Cholesky factor of `Vs`, built once per grid and reused for
/// every draw.
#[derive(Debug, Clone)]
pub enum SpatialFactor {
    Identity {
        n: usize,
    },
    /// `Ls = Lcol ⊗ Lrow`.
    Separable {
        col: DMatrix<f64>,
        row: DMatrix<f64>,
    },
    Dense(DMatrix<f64>),
}

impl SpatialFactor {
    pub fn new(grid: &FieldGrid, spec: &SpatialCovSpec) -> Result<Self> {
        spec.validate()?;
        match *spec {
            SpatialCovSpec::NoSpatial => Ok(SpatialFactor::Identity { n: grid.len() }),
            SpatialCovSpec::Ar1Ar1 { rho_col, rho_row } => Ok(SpatialFactor::Separable {
                col: chol_lower(&ar1_matrix(rho_col, grid.n_ranges())?)?,
                row: chol_lower(&ar1_matrix(rho_row, grid.n_rows())?)?,
            }),
            SpatialCovSpec::Matern { .. } => {
                Ok(SpatialFactor::Dense(chol_lower(&build_vs(grid, spec)?)?))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpatialFactor::Identity { n } => *n,
            SpatialFactor::Separable { col, row } => col.nrows() * row.nrows(),
            SpatialFactor::Dense(l) => l.nrows(),
        }
    }

    /// Materialises `Ls`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SpatialFactor::Identity { n } => DMatrix::identity(*n, *n),
            SpatialFactor::Separable { col, row } => kron(col, row),
            SpatialFactor::Dense(l) => l.clone(),
        }
    }

    /// Returns `Ls · z` for an `n × k` matrix `z`.
    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(z.nrows(), self.dim(), "factor and deviates disagree on n");
        match self {
            SpatialFactor::Identity { .. } => z.clone(),
            SpatialFactor::Dense(l) => l * z,
            SpatialFactor::Separable { col, row } => {
                let (n_rows, n_ranges) = (row.nrows(), col.nrows());
                let mut out = DMatrix::zeros(z.nrows(), z.ncols());
                for j in 0..z.ncols() {
                    // Column j reshaped rows-within-ranges is column-major n_rows × n_ranges.
                    let x = DMatrix::from_column_slice(n_rows, n_ranges, z.column(j).as_slice());
                    let y = row * x * col.transpose();
                    out.column_mut(j).copy_from_slice(y.as_slice());
                }
                out
            }
        }
    }
}

/// Draws `U = Ls Z Luᵀ` (row `i` = random effects at plot `i`).
///
/// `Z` is filled plot by plot, coefficient within plot, from the ziggurat
/// standard normal sampler.
pub fn sample_random_effects<R: Rng + ?Sized>(
    spatial: &SpatialFactor,
    within_factor: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let n = spatial.dim();
    let k = within_factor.nrows();
    let mut z = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    spatial.apply(&z) * within_factor.transpose()
}
