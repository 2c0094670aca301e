//! Fixed-effects factorial ANOVA of ln(MSE) with main effects and all
//! pairwise interactions.
//!
//! Terms enter a treatment-contrast model matrix in a fixed order and their
//! sequential sums of squares are read off the Householder effects `Qᵀy`.

use std::collections::BTreeMap;

use crate::config::ScenarioConfig;
use crate::grid_design::DesignKind;
use crate::gwr::BandwidthPolicy;
use crate::linalg::{compensated_sum, Qr};
use crate::metrics::ScenarioResult;
use crate::simulate::ResponseKind;
use crate::{Error, Result};

const RANK_REL_TOL: f64 = 1e-10;
const CF_MAX_ITER: usize = 200;
const CF_EPS: f64 = 1e-12;
const CF_TINY: f64 = 1e-300;

/// A categorical factor and its level labels; the first level is the
/// baseline of the treatment contrasts.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFactor {
    pub name: String,
    pub levels: Vec<String>,
}

/// Observations with their factor level codes.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorFrame {
    pub factors: Vec<FrameFactor>,
    /// `codes[i][f]` is the level index of factor `f` for observation `i`.
    pub codes: Vec<Vec<usize>>,
    pub response: Vec<f64>,
}

impl FactorFrame {
    pub fn new(
        factors: Vec<FrameFactor>,
        codes: Vec<Vec<usize>>,
        response: Vec<f64>,
    ) -> Result<Self> {
        if response.is_empty() {
            return Err(Error::EmptyInput("ANOVA frame has no observations".into()));
        }
        if codes.len() != response.len() {
            return Err(Error::InvalidInput(format!(
                "{} code rows for {} responses",
                codes.len(),
                response.len()
            )));
        }
        for (i, row) in codes.iter().enumerate() {
            if row.len() != factors.len()
                || row.iter().zip(&factors).any(|(c, f)| *c >= f.levels.len())
            {
                return Err(Error::InvalidInput(format!(
                    "observation {i} has invalid level codes {row:?}"
                )));
            }
        }
        if let Some(bad) = response.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "ANOVA response contains non-finite value {bad}"
            )));
        }
        Ok(FactorFrame {
            factors,
            codes,
            response,
        })
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    fn cell_label(&self, cell: &[usize]) -> String {
        cell.iter()
            .zip(&self.factors)
            .map(|(c, f)| format!("{}={}", f.name, f.levels[*c]))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Replicates per full factorial cell; errors when cells are missing or
    /// counts differ.
    pub fn check_balanced(&self) -> Result<usize> {
        let mut counts: BTreeMap<&[usize], usize> = BTreeMap::new();
        for row in &self.codes {
            *counts.entry(row.as_slice()).or_default() += 1;
        }
        let n_cells: usize = self.factors.iter().map(|f| f.levels.len()).product();
        if counts.len() < n_cells {
            let mut missing = Vec::new();
            let mut cell = vec![0; self.factors.len()];
            loop {
                if !counts.contains_key(cell.as_slice()) {
                    missing.push(self.cell_label(&cell));
                }
                let mut f = self.factors.len();
                loop {
                    if f == 0 {
                        break;
                    }
                    f -= 1;
                    cell[f] += 1;
                    if cell[f] < self.factors[f].levels.len() {
                        break;
                    }
                    cell[f] = 0;
                }
                if cell.iter().all(|c| *c == 0) {
                    break;
                }
            }
            let shown = missing
                .iter()
                .take(12)
                .cloned()
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidInput(format!(
                "{} of {n_cells} factor cells have no observations: {shown}{}",
                missing.len(),
                if missing.len() > 12 { "; ..." } else { "" }
            )));
        }
        let first = *counts.values().next().expect("non-empty frame");
        if let Some((cell, c)) = counts.iter().find(|(_, c)| **c != first) {
            return Err(Error::InvalidInput(format!(
                "unbalanced frame: cell {} has {c} observations, expected {first}",
                self.cell_label(cell)
            )));
        }
        Ok(first)
    }
}

/// Factor levels expected in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLevels {
    pub designs: Vec<DesignKind>,
    pub policies: Vec<BandwidthPolicy>,
    pub covariances: Vec<String>,
    pub etas: Vec<f64>,
}

impl FrameLevels {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        FrameLevels {
            designs: config.designs.clone(),
            policies: config.bandwidths.clone(),
            covariances: config
                .spatial
                .iter()
                .map(|s| s.label().to_string())
                .collect(),
            etas: config.etas.clone(),
        }
    }
}

pub const FACTOR_NAMES: [&str; 5] = [
    "Design",
    "Bandwidth",
    "Covariance",
    "Coefficients",
    "Correlation",
];

/// One observation per (result, coefficient): ln(MSE) with factors Design,
/// Bandwidth, Covariance, Coefficients and Correlation.
pub fn build_frame(
    results: &[ScenarioResult],
    response: ResponseKind,
    levels: &FrameLevels,
) -> Result<FactorFrame> {
    let k = response.n_coefficients();
    let factors = vec![
        FrameFactor {
            name: FACTOR_NAMES[0].into(),
            levels: levels.designs.iter().map(|d| d.to_string()).collect(),
        },
        FrameFactor {
            name: FACTOR_NAMES[1].into(),
            levels: levels.policies.iter().map(|p| p.label()).collect(),
        },
        FrameFactor {
            name: FACTOR_NAMES[2].into(),
            levels: levels.covariances.clone(),
        },
        FrameFactor {
            name: FACTOR_NAMES[3].into(),
            levels: (0..k).map(|j| format!("beta{j}")).collect(),
        },
        FrameFactor {
            name: FACTOR_NAMES[4].into(),
            levels: levels.etas.iter().map(|e| e.to_string()).collect(),
        },
    ];
    let find = |what: &str, pos: Option<usize>, value: String| {
        pos.ok_or_else(|| {
            Error::InvalidInput(format!("{what} level {value} is not part of the frame"))
        })
    };
    let mut codes = Vec::new();
    let mut ys = Vec::new();
    for r in results.iter().filter(|r| r.labels.response == response) {
        let l = &r.labels;
        let d = find(
            "design",
            levels.designs.iter().position(|x| *x == l.design),
            l.design.to_string(),
        )?;
        let b = find(
            "bandwidth",
            levels.policies.iter().position(|x| *x == l.policy),
            l.policy.label(),
        )?;
        let c = find(
            "covariance",
            levels.covariances.iter().position(|x| *x == l.covariance),
            l.covariance.clone(),
        )?;
        let e = find(
            "correlation",
            levels.etas.iter().position(|x| *x == l.eta),
            l.eta.to_string(),
        )?;
        for (j, v) in r.ln_mse.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "ln MSE of beta{j} is {v} in scenario {} replicate {} (bandwidth {})",
                    l.scenario_id,
                    l.replicate,
                    l.policy.label()
                )));
            }
            codes.push(vec![d, b, c, j, e]);
            ys.push(*v);
        }
    }
    if ys.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no {response} results to analyse"
        )));
    }
    let frame = FactorFrame::new(factors, codes, ys)?;
    frame.check_balanced()?;
    Ok(frame)
}

/// A main effect (one factor) or a two-factor interaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term(pub Vec<usize>);

/// Main effects in factor order, then all pairs `(i, j)`, `i < j`,
/// in lexicographic order.
pub fn default_terms(n_factors: usize) -> Vec<Term> {
    let mut terms: Vec<Term> = (0..n_factors).map(|f| Term(vec![f])).collect();
    for i in 0..n_factors {
        for j in i + 1..n_factors {
            terms.push(Term(vec![i, j]));
        }
    }
    terms
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub term: String,
    pub df: usize,
    pub sum_sq: f64,
    pub mean_sq: f64,
    /// `None` on the residual row.
    pub f_value: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub residual: AnovaRow,
    /// Corrected total sum of squares.
    pub total_ss: f64,
    pub n_obs: usize,
}

impl AnovaTable {
    pub fn term(&self, name: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.term == name)
    }
}

pub fn anova_fit(frame: &FactorFrame) -> Result<AnovaTable> {
    anova_fit_terms(frame, &default_terms(frame.factors.len()))
}

/// Sequential (type I) ANOVA with terms entered in the given order. Terms
/// whose factors have a single level contribute no columns and are omitted.
pub fn anova_fit_terms(frame: &FactorFrame, terms: &[Term]) -> Result<AnovaTable> {
    frame.check_balanced()?;
    // Canonical observation order makes the table independent of input order.
    let mut order: Vec<usize> = (0..frame.len()).collect();
    order.sort_by(|&a, &b| {
        frame.codes[a]
            .cmp(&frame.codes[b])
            .then(frame.response[a].total_cmp(&frame.response[b]))
    });
    let m = frame.len();
    let constant = frame.response.iter().all(|v| *v == frame.response[0]);
    let mean = compensated_sum(frame.response.iter().copied()) / m as f64;
    let mut y: Vec<f64> = order
        .iter()
        .map(|&i| {
            if constant {
                0.0
            } else {
                frame.response[i] - mean
            }
        })
        .collect();
    let total_ss = compensated_sum(y.iter().map(|v| v * v));

    let mut packed = vec![1.0; m];
    let mut spans = Vec::new();
    for term in terms {
        if term.0.is_empty() || term.0.iter().any(|f| *f >= frame.factors.len()) {
            return Err(Error::InvalidInput(format!("invalid term {:?}", term.0)));
        }
        let start = packed.len() / m;
        let sizes: Vec<usize> = term
            .0
            .iter()
            .map(|f| frame.factors[*f].levels.len())
            .collect();
        // Non-baseline level combinations, last factor fastest.
        let mut combo = vec![1; sizes.len()];
        if sizes.iter().all(|s| *s > 1) {
            loop {
                packed.extend(order.iter().map(|&i| {
                    let hit = term
                        .0
                        .iter()
                        .zip(&combo)
                        .all(|(f, l)| frame.codes[i][*f] == *l);
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                }));
                let mut pos = combo.len();
                let mut done = true;
                while pos > 0 {
                    pos -= 1;
                    combo[pos] += 1;
                    if combo[pos] < sizes[pos] {
                        done = false;
                        break;
                    }
                    combo[pos] = 1;
                }
                if done {
                    break;
                }
            }
        }
        let end = packed.len() / m;
        if end > start {
            let name = term
                .0
                .iter()
                .map(|f| frame.factors[*f].name.as_str())
                .collect::<Vec<_>>()
                .join(":");
            spans.push((name, start, end));
        }
    }
    let p = packed.len() / m;
    if p >= m {
        return Err(Error::InvalidInput(format!(
            "{m} observations cannot support {p} model columns"
        )));
    }
    let qr = Qr::from_col_major(packed, m, p);
    if qr.is_rank_deficient(RANK_REL_TOL) {
        return Err(Error::InvalidInput(
            "ANOVA model matrix is rank deficient".into(),
        ));
    }
    qr.apply_qt(&mut y);

    let resid_df = m - p;
    let resid_ss = compensated_sum(y[p..].iter().map(|v| v * v));
    let resid_ms = resid_ss / resid_df as f64;
    let rows = spans
        .into_iter()
        .map(|(term, start, end)| {
            let df = end - start;
            let sum_sq = compensated_sum(y[start..end].iter().map(|v| v * v));
            let mean_sq = sum_sq / df as f64;
            let (f, pv) = if sum_sq == 0.0 {
                (0.0, 1.0)
            } else if resid_ms == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let f = mean_sq / resid_ms;
                (f, f_upper_tail(f, df as f64, resid_df as f64))
            };
            AnovaRow {
                term,
                df,
                sum_sq,
                mean_sq,
                f_value: Some(f),
                p_value: Some(pv),
            }
        })
        .collect();
    Ok(AnovaTable {
        rows,
        residual: AnovaRow {
            term: "Residuals".into(),
            df: resid_df,
            sum_sq: resid_ss,
            mean_sq: resid_ms,
            f_value: None,
            p_value: None,
        },
        total_ss,
        n_obs: m,
    })
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn regularized_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// `P(F > f)` for `F ~ F(d1, d2)`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() || f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    // P(F > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)
    let x = d2 / (d2 + d1 * f);
    regularized_beta(d2 / 2.0, d1 / 2.0, x).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    fn factor(name: &str, n: usize) -> FrameFactor {
        FrameFactor {
            name: name.into(),
            levels: (0..n).map(|i| format!("l{i}")).collect(),
        }
    }

    fn two_way(y: [[&[f64]; 2]; 2]) -> FactorFrame {
        let mut codes = Vec::new();
        let mut resp = Vec::new();
        for (a, row) in y.iter().enumerate() {
            for (b, cell) in row.iter().enumerate() {
                for v in cell.iter() {
                    codes.push(vec![a, b]);
                    resp.push(*v);
                }
            }
        }
        FactorFrame::new(vec![factor("A", 2), factor("B", 2)], codes, resp).unwrap()
    }

    #[test]
    fn balanced_two_by_two_matches_hand_computation() {
        // cell means: (a0,b0)=3, (a0,b1)=5, (a1,b0)=8, (a1,b1)=14; grand mean 7.5
        let frame = two_way([[&[2.0, 4.0], &[4.0, 6.0]], [&[7.0, 9.0], &[13.0, 15.0]]]);
        let t = anova_fit(&frame).unwrap();
        // SS_A = 4·((4−7.5)² + (11−7.5)²) = 98
        // SS_B = 4·((5.5−7.5)² + (9.5−7.5)²) = 32
        // SS_AB = 2·Σ (cell − rowmean − colmean + grand)² = 2·4·1 = 8
        // SS_E = 8 observations each 1 away from their cell mean = 8
        let ss: Vec<f64> = t.rows.iter().map(|r| r.sum_sq).collect();
        for (got, want) in ss.iter().zip([98.0, 32.0, 8.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((t.residual.sum_sq - 8.0).abs() < 1e-9);
        assert_eq!(t.residual.df, 4);
        assert!((t.rows[0].f_value.unwrap() - 49.0).abs() < 1e-9);
        assert_eq!(t.rows[2].term, "A:B");
    }

    #[test]
    fn constant_response() {
        let frame = two_way([[&[3.3; 2], &[3.3; 2]], [&[3.3; 2], &[3.3; 2]]]);
        let t = anova_fit(&frame).unwrap();
        for r in &t.rows {
            assert_eq!(r.sum_sq, 0.0);
            assert_eq!(r.f_value, Some(0.0));
            assert_eq!(r.p_value, Some(1.0));
        }
    }

    #[test]
    fn missing_and_unbalanced_cells_rejected() {
        let frame = FactorFrame::new(
            vec![factor("A", 2), factor("B", 2)],
            vec![vec![0, 0], vec![0, 1], vec![1, 0]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let err = anova_fit(&frame).unwrap_err().to_string();
        assert!(err.contains("A=l1,B=l1"), "{err}");
        let frame = two_way([[&[1.0, 2.0], &[4.0]], [&[7.0], &[13.0]]]);
        assert!(anova_fit(&frame).is_err());
    }

    fn five_factor_frame(levels: [usize; 5], reps: usize, seed: u64) -> FactorFrame {
        use crate::seed::rng_from_seed;
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let factors: Vec<_> = FACTOR_NAMES
            .iter()
            .zip(levels)
            .map(|(n, l)| factor(n, l))
            .collect();
        let mut codes = Vec::new();
        let mut resp = Vec::new();
        let n_cells: usize = levels.iter().product();
        for cell in 0..n_cells {
            let mut rest = cell;
            let mut code = vec![0; 5];
            for f in (0..5).rev() {
                code[f] = rest % levels[f];
                rest /= levels[f];
            }
            let mean =
                code[1] as f64 * 0.7 + code[3] as f64 * 2.0 + (code[2] * code[3]) as f64 * 0.3;
            for _ in 0..reps {
                codes.push(code.clone());
                resp.push(mean + rng.random::<f64>());
            }
        }
        FactorFrame::new(factors, codes, resp).unwrap()
    }

    #[test]
    fn quadratic_layout_degrees_of_freedom() {
        let t = anova_fit(&five_factor_frame([2, 3, 3, 3, 2], 2, 1)).unwrap();
        let df = |name: &str| t.term(name).unwrap().df;
        assert_eq!(df("Design"), 1);
        assert_eq!(df("Bandwidth"), 2);
        assert_eq!(df("Covariance"), 2);
        assert_eq!(df("Coefficients"), 2);
        assert_eq!(df("Correlation"), 1);
        assert_eq!(df("Design:Bandwidth"), 2);
        assert_eq!(df("Covariance:Coefficients"), 4);
        assert_eq!(t.rows.len(), 15);
        let model_df: usize = t.rows.iter().map(|r| r.df).sum();
        assert_eq!(model_df + t.residual.df, t.n_obs - 1);
    }

    #[test]
    fn ss_decomposition_identity() {
        let t = anova_fit(&five_factor_frame([2, 3, 3, 2, 2], 3, 2)).unwrap();
        let sum = compensated_sum(t.rows.iter().map(|r| r.sum_sq)) + t.residual.sum_sq;
        assert!(((sum - t.total_ss) / t.total_ss).abs() < 1e-8);
    }

    #[test]
    fn balanced_order_invariance() {
        let frame = five_factor_frame([2, 3, 3, 2, 2], 2, 3);
        let a = anova_fit(&frame).unwrap();
        // Reorder within the main-effect block and within the interaction
        // block; interactions always follow their margins.
        let terms = default_terms(5);
        let mut rev: Vec<Term> = terms[..5].iter().rev().cloned().collect();
        rev.extend(terms[5..].iter().rev().cloned());
        let b = anova_fit_terms(&frame, &rev).unwrap();
        for row in &a.rows {
            let other = b.term(&row.term).unwrap();
            assert!((row.sum_sq - other.sum_sq).abs() <= 1e-9 * a.total_ss.max(1.0));
        }
    }

    #[test]
    fn shift_and_permutation_invariance() {
        use crate::seed::rng_from_seed;
        use rand::seq::SliceRandom;
        let frame = five_factor_frame([2, 3, 3, 2, 2], 2, 4);
        let base = anova_fit(&frame).unwrap();
        let mut shifted = frame.clone();
        shifted.response.iter_mut().for_each(|v| *v += 123.0);
        let s = anova_fit(&shifted).unwrap();
        for (x, y) in base.rows.iter().zip(&s.rows) {
            assert!((x.sum_sq - y.sum_sq).abs() <= 1e-8 * base.total_ss);
            assert!((x.p_value.unwrap() - y.p_value.unwrap()).abs() < 1e-6);
        }
        let mut perm: Vec<usize> = (0..frame.len()).collect();
        perm.shuffle(&mut rng_from_seed(9));
        let permuted = FactorFrame::new(
            frame.factors.clone(),
            perm.iter().map(|&i| frame.codes[i].clone()).collect(),
            perm.iter().map(|&i| frame.response[i]).collect(),
        )
        .unwrap();
        let p = anova_fit(&permuted).unwrap();
        assert_eq!(base.rows, p.rows);
        assert_eq!(base.residual.sum_sq, p.residual.sum_sq);
    }

    #[test]
    fn f_tail_trivial_points() {
        assert_eq!(f_upper_tail(0.0, 3.0, 7.0), 1.0);
        assert_eq!(f_upper_tail(f64::INFINITY, 3.0, 7.0), 0.0);
        assert!((f_upper_tail(1.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f_one_one_closed_form() {
        for f in [0.01, 0.3, 1.0, 2.5, 10.0, 161.4, 4000.0] {
            let want = 1.0 - 2.0 / std::f64::consts::PI * f64::sqrt(f).atan();
            let got = f_upper_tail(f, 1.0, 1.0);
            assert!(
                ((got - want) / want).abs() < 1e-10,
                "f={f}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn f_critical_value() {
        assert!((f_upper_tail(4.9646, 1.0, 10.0) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(11.0) - 3_628_800f64.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn f_tail_matches_reference(f in 0.001f64..50.0, d1 in 1u32..20, d2 in 1u32..8000) {
            let reference = FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().sf(f);
            let got = f_upper_tail(f, d1 as f64, d2 as f64);
            prop_assert!((got - reference).abs() <= 1e-9 * reference.max(1e-3), "{got} vs {reference}");
        }
    }
}
