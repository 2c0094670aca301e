//! Aggregated outputs: median tables, boxplot statistics, bandwidth
//! histograms, ANOVA tables and their figures.

use std::fs;
use std::path::Path;

use crate::anova::{anova_fit, build_frame, AnovaTable, FrameLevels};
use crate::config::ScenarioConfig;
use crate::grid_design::DesignKind;
use crate::gwr::BandwidthPolicy;
use crate::io::fmt_f64;
use crate::metrics::{
    bandwidth_histogram, boxplot_stats, median_grid, scale_label, BandwidthHistogram, BoxplotStats,
    MedianGrid, ScenarioResult,
};
use crate::simulate::ResponseKind;
use crate::svg::{tick_label, ticks, Canvas, Scale, HEIGHT, WIDTH};
use crate::{Error, Result};

pub const REPORT_DIR: &str = "report";

/// Boxplot of ln(MSE) for one (response, eta, covariance, design, policy,
/// coefficient) group.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotGroup {
    pub response: ResponseKind,
    pub eta: f64,
    pub covariance: String,
    pub design: DesignKind,
    pub policy: BandwidthPolicy,
    pub coefficient: usize,
    pub stats: BoxplotStats,
}

/// AICc-selected bandwidths of one scenario cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGroup {
    pub response: ResponseKind,
    pub eta: f64,
    pub covariance: String,
    pub design: DesignKind,
    pub histogram: BandwidthHistogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<MedianGrid>,
    pub boxplots: Vec<BoxplotGroup>,
    pub histograms: Vec<HistogramGroup>,
    pub anova: Vec<(ResponseKind, AnovaTable)>,
}

fn covariance_labels(config: &ScenarioConfig) -> Vec<String> {
    config
        .spatial
        .iter()
        .map(|s| s.label().to_string())
        .collect()
}

pub fn build_report(config: &ScenarioConfig, results: &[ScenarioResult]) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no results to report".into()));
    }
    let covariances = covariance_labels(config);
    let mut tables = Vec::new();
    let mut boxplots = Vec::new();
    let mut histograms = Vec::new();
    let mut anova = Vec::new();
    for &response in &config.responses {
        if !results.iter().any(|r| r.labels.response == response) {
            continue;
        }
        for &eta in &config.etas {
            tables.push(median_grid(
                results,
                response,
                eta,
                &covariances,
                &config.designs,
                &config.bandwidths,
            )?);
            for cov in &covariances {
                for &design in &config.designs {
                    let cell: Vec<&ScenarioResult> = results
                        .iter()
                        .filter(|r| {
                            let l = &r.labels;
                            l.response == response
                                && l.eta == eta
                                && &l.covariance == cov
                                && l.design == design
                        })
                        .collect();
                    for &policy in &config.bandwidths {
                        let group: Vec<&&ScenarioResult> =
                            cell.iter().filter(|r| r.labels.policy == policy).collect();
                        if group.is_empty() {
                            continue;
                        }
                        for coefficient in 0..response.n_coefficients() {
                            let values: Vec<f64> =
                                group.iter().map(|r| r.ln_mse[coefficient]).collect();
                            let key = vec![
                                response.to_string(),
                                eta.to_string(),
                                cov.clone(),
                                design.to_string(),
                                policy.label(),
                                format!("beta{coefficient}"),
                            ];
                            boxplots.push(BoxplotGroup {
                                response,
                                eta,
                                covariance: cov.clone(),
                                design,
                                policy,
                                coefficient,
                                stats: boxplot_stats(key, &values)?,
                            });
                        }
                    }
                    let selected: Vec<f64> =
                        cell.iter().filter_map(|r| r.selected_bandwidth).collect();
                    if !selected.is_empty() {
                        let search = (config.bandwidth_search[0], config.bandwidth_search[1]);
                        histograms.push(HistogramGroup {
                            response,
                            eta,
                            covariance: cov.clone(),
                            design,
                            histogram: bandwidth_histogram(&selected, search)?,
                        });
                    }
                }
            }
        }
        let frame = build_frame(results, response, &FrameLevels::from_config(config))?;
        anova.push((response, anova_fit(&frame)?));
    }
    if tables.is_empty() {
        return Err(Error::EmptyInput(
            "results match no configured response".into(),
        ));
    }
    Ok(Report {
        tables,
        boxplots,
        histograms,
        anova,
    })
}

fn csv_file(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn table_file_name(response: ResponseKind, eta: f64) -> String {
    format!("median_{response}_eta{eta}.csv")
}

pub fn table_rows(table: &MedianGrid) -> Vec<Vec<String>> {
    let mut header = vec![
        "covariance".to_string(),
        "design".into(),
        "coefficient".into(),
    ];
    header.extend(table.policies.iter().map(|p| match p {
        BandwidthPolicy::AiccOptimal => "bwAicc".to_string(),
        fixed => format!("bw{}", fixed.label()),
    }));
    let mut rows = vec![header];
    for r in &table.rows {
        let mut row = vec![
            r.covariance.clone(),
            r.design.to_string(),
            format!("beta{}{}", r.coefficient, scale_label(r.scale)),
        ];
        row.extend(r.values.iter().map(|v| opt(*v)));
        rows.push(row);
    }
    rows
}

pub fn anova_rows(table: &AnovaTable) -> Vec<Vec<String>> {
    let mut rows = vec![vec![
        "term".to_string(),
        "df".into(),
        "sum_sq".into(),
        "pr_f".into(),
    ]];
    for r in table.rows.iter().chain(std::iter::once(&table.residual)) {
        rows.push(vec![
            r.term.clone(),
            r.df.to_string(),
            fmt_f64(r.sum_sq),
            opt(r.p_value),
        ]);
    }
    rows
}

/// Writes every report artefact into `dir`.
pub fn write_report(dir: &Path, config: &ScenarioConfig, report: &Report) -> Result<()> {
    for t in &report.tables {
        csv_file(
            &dir.join(table_file_name(t.response, t.eta)),
            &table_rows(t),
        )?;
    }

    let mut box_rows = vec![[
        "response",
        "eta",
        "covariance",
        "design",
        "bandwidth_policy",
        "coefficient",
        "count",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "outliers",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for b in &report.boxplots {
        let s = &b.stats;
        box_rows.push(vec![
            b.response.to_string(),
            b.eta.to_string(),
            b.covariance.clone(),
            b.design.to_string(),
            b.policy.label(),
            format!("beta{}", b.coefficient),
            s.count.to_string(),
            fmt_f64(s.min),
            fmt_f64(s.q1),
            fmt_f64(s.median),
            fmt_f64(s.q3),
            fmt_f64(s.max),
            s.outliers
                .iter()
                .map(|o| fmt_f64(*o))
                .collect::<Vec<_>>()
                .join(" "),
        ]);
    }
    csv_file(&dir.join("boxplot_ln_mse.csv"), &box_rows)?;

    let mut hist_rows = vec![["response", "eta", "covariance", "design", "bin", "count"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for h in &report.histograms {
        for (i, c) in h.histogram.counts.iter().enumerate() {
            hist_rows.push(vec![
                h.response.to_string(),
                h.eta.to_string(),
                h.covariance.clone(),
                h.design.to_string(),
                (h.histogram.first_bin + i).to_string(),
                c.to_string(),
            ]);
        }
    }
    csv_file(&dir.join("bandwidth_histogram.csv"), &hist_rows)?;

    for (response, table) in &report.anova {
        csv_file(
            &dir.join(format!("anova_{response}.csv")),
            &anova_rows(table),
        )?;
    }

    for &response in &config.responses {
        for &eta in &config.etas {
            let groups: Vec<&BoxplotGroup> = report
                .boxplots
                .iter()
                .filter(|b| b.response == response && b.eta == eta)
                .collect();
            if groups.is_empty() {
                continue;
            }
            let svg = boxplot_svg(config, response, eta, &groups);
            let path = dir.join(format!("boxplot_{response}_eta{eta}.svg"));
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        }
        let hists: Vec<&HistogramGroup> = report
            .histograms
            .iter()
            .filter(|h| h.response == response)
            .collect();
        if !hists.is_empty() {
            let svg = histogram_svg(config, response, &hists);
            let path = dir.join(format!("bandwidth_histogram_{response}.svg"));
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

const DESIGN_FILLS: [&str; 4] = ["#9ecae1", "#fdae6b", "#a1d99b", "#bcbddc"];

/// One panel per coefficient; within a panel, covariance × policy slots
/// with one box per design.
fn boxplot_svg(
    config: &ScenarioConfig,
    response: ResponseKind,
    eta: f64,
    groups: &[&BoxplotGroup],
) -> String {
    let mut c = Canvas::new();
    let k = response.n_coefficients();
    let covs = covariance_labels(config);
    let slots = covs.len() * config.bandwidths.len();
    let n_designs = config.designs.len();
    c.text(
        WIDTH / 2.0,
        22.0,
        14.0,
        "middle",
        &format!("ln(MSE), {response} response, eta = {eta}"),
    );
    let (left, right, top, bottom) = (60.0, 15.0, 60.0, 90.0);
    let panel_w = (WIDTH - left - right) / k as f64;
    for j in 0..k {
        let g: Vec<&&BoxplotGroup> = groups.iter().filter(|b| b.coefficient == j).collect();
        let lo = g
            .iter()
            .flat_map(|b| b.stats.outliers.iter().copied().chain([b.stats.min]))
            .fold(f64::INFINITY, f64::min);
        let hi = g
            .iter()
            .flat_map(|b| b.stats.outliers.iter().copied().chain([b.stats.max]))
            .fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            continue;
        }
        let pad = ((hi - lo) * 0.05).max(0.05);
        let x0 = left + j as f64 * panel_w + 30.0;
        let x1 = left + (j + 1) as f64 * panel_w - 10.0;
        let ys = Scale::new(lo - pad, hi + pad, HEIGHT - bottom, top);
        c.rect(x0, top, x1 - x0, HEIGHT - bottom - top, "none", "#444");
        c.text(
            (x0 + x1) / 2.0,
            top - 8.0,
            12.0,
            "middle",
            &format!("beta{j}"),
        );
        for t in ticks(lo - pad, hi + pad, 6) {
            let y = ys.map(t);
            c.line(x0 - 4.0, y, x0, y, "#444");
            c.text(x0 - 6.0, y + 3.0, 9.0, "end", &tick_label(t));
        }
        let slot_w = (x1 - x0) / slots as f64;
        for (ci, cov) in covs.iter().enumerate() {
            for (pi, policy) in config.bandwidths.iter().enumerate() {
                let slot = ci * config.bandwidths.len() + pi;
                let sx = x0 + slot as f64 * slot_w;
                c.text(
                    sx + slot_w / 2.0,
                    HEIGHT - bottom + 14.0,
                    8.0,
                    "middle",
                    &policy.label(),
                );
                if pi == 0 {
                    let mid = x0 + (ci as f64 + 0.5) * slot_w * config.bandwidths.len() as f64;
                    c.text(mid, HEIGHT - bottom + 30.0, 10.0, "middle", cov);
                    if ci > 0 {
                        c.line(sx, top, sx, HEIGHT - bottom, "#ccc");
                    }
                }
                let box_w = slot_w * 0.8 / n_designs as f64;
                for (di, design) in config.designs.iter().enumerate() {
                    let Some(b) = g.iter().find(|b| {
                        &b.covariance == cov && b.policy == *policy && b.design == *design
                    }) else {
                        continue;
                    };
                    let s = &b.stats;
                    let bx = sx + slot_w * 0.1 + di as f64 * box_w;
                    let mx = bx + box_w / 2.0;
                    c.line(mx, ys.map(s.min), mx, ys.map(s.q1), "#333");
                    c.line(mx, ys.map(s.q3), mx, ys.map(s.max), "#333");
                    c.rect(
                        bx,
                        ys.map(s.q3),
                        box_w,
                        ys.map(s.q1) - ys.map(s.q3),
                        DESIGN_FILLS[di % DESIGN_FILLS.len()],
                        "#333",
                    );
                    c.line(bx, ys.map(s.median), bx + box_w, ys.map(s.median), "#000");
                    for o in &s.outliers {
                        c.circle(mx, ys.map(*o), 1.6, "#333");
                    }
                }
            }
        }
    }
    c.vtext(18.0, (top + HEIGHT - bottom) / 2.0, 11.0, "ln(MSE)");
    for (di, design) in config.designs.iter().enumerate() {
        let x = left + 30.0 + di as f64 * 130.0;
        c.rect(
            x,
            HEIGHT - 30.0,
            12.0,
            12.0,
            DESIGN_FILLS[di % DESIGN_FILLS.len()],
            "#333",
        );
        c.text(x + 18.0, HEIGHT - 20.0, 11.0, "start", design.label());
    }
    c.finish()
}

/// One panel per covariance; bars pool designs and eta levels.
fn histogram_svg(
    config: &ScenarioConfig,
    response: ResponseKind,
    hists: &[&HistogramGroup],
) -> String {
    let mut c = Canvas::new();
    let covs = covariance_labels(config);
    c.text(
        WIDTH / 2.0,
        22.0,
        14.0,
        "middle",
        &format!("AICc-selected bandwidth, {response} response"),
    );
    let (left, right, top, bottom) = (60.0, 20.0, 45.0, 45.0);
    let panel_h = (HEIGHT - top - bottom) / covs.len() as f64;
    let first = hists
        .iter()
        .map(|h| h.histogram.first_bin)
        .min()
        .unwrap_or(1);
    let last = hists
        .iter()
        .map(|h| h.histogram.first_bin + h.histogram.counts.len().saturating_sub(1))
        .max()
        .unwrap_or(first);
    let xs = Scale::new(first as f64, last as f64 + 1.0, left, WIDTH - right);
    for (ci, cov) in covs.iter().enumerate() {
        let mut counts = vec![0usize; last - first + 1];
        for h in hists.iter().filter(|h| &h.covariance == cov) {
            for (i, n) in h.histogram.counts.iter().enumerate() {
                counts[h.histogram.first_bin + i - first] += n;
            }
        }
        let y0 = top + ci as f64 * panel_h + 18.0;
        let y1 = top + (ci + 1) as f64 * panel_h - 6.0;
        let max = counts.iter().copied().max().unwrap_or(0).max(1);
        let ys = Scale::new(0.0, max as f64, y1, y0);
        c.rect(left, y0, WIDTH - right - left, y1 - y0, "none", "#444");
        c.text(left + 6.0, y0 - 4.0, 11.0, "start", cov);
        c.text(left - 6.0, y0 + 8.0, 9.0, "end", &max.to_string());
        c.text(left - 6.0, y1, 9.0, "end", "0");
        for (i, n) in counts.iter().enumerate() {
            if *n == 0 {
                continue;
            }
            let b = (first + i) as f64;
            c.rect(
                xs.map(b),
                ys.map(*n as f64),
                xs.map(b + 1.0) - xs.map(b),
                y1 - ys.map(*n as f64),
                "#6baed6",
                "#2171b5",
            );
        }
    }
    for t in ticks(first as f64, last as f64 + 1.0, 10) {
        let x = xs.map(t);
        c.line(x, HEIGHT - bottom, x, HEIGHT - bottom + 4.0, "#444");
        c.text(x, HEIGHT - bottom + 15.0, 9.0, "middle", &tick_label(t));
    }
    c.text(
        WIDTH / 2.0,
        HEIGHT - 8.0,
        11.0,
        "middle",
        "bandwidth (grid units)",
    );
    c.finish()
}
