//! Field lattice and treatment allocation to strips.
//!
//! Plots are indexed rows-within-ranges: plot `i` (0-based) sits at
//! row `i % n_rows + 1` and range `i / n_rows + 1`. Every vector indexed by
//! plot in this crate uses that ordering.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rectangular `n_rows × n_ranges` lattice with unit plot spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    n_rows: usize,
    n_ranges: usize,
    coords: Vec<[f64; 2]>,
}

impl FieldGrid {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_ranges(&self) -> usize {
        self.n_ranges
    }

    /// Total plot count `n_rows · n_ranges`.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Plot centroids as `(row, range)` in grid units, 1-based.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// 1-based row of plot `i`.
    pub fn row_of(&self, i: usize) -> usize {
        i % self.n_rows + 1
    }

    /// 1-based range of plot `i`.
    pub fn range_of(&self, i: usize) -> usize {
        i / self.n_rows + 1
    }

    /// Plot index of the 1-based `(row, range)` cell.
    pub fn index_of(&self, row: usize, range: usize) -> usize {
        debug_assert!((1..=self.n_rows).contains(&row) && (1..=self.n_ranges).contains(&range));
        (range - 1) * self.n_rows + (row - 1)
    }
}

pub fn build_grid(n_rows: usize, n_ranges: usize) -> Result<FieldGrid> {
    if n_rows == 0 || n_ranges == 0 {
        return Err(Error::InvalidInput(format!(
            "grid dimensions must be positive, got {n_rows} rows × {n_ranges} ranges"
        )));
    }
    let coords = (1..=n_ranges)
        .flat_map(|range| (1..=n_rows).map(move |row| [row as f64, range as f64]))
        .collect();
    Ok(FieldGrid {
        n_rows,
        n_ranges,
        coords,
    })
}

/// Strictly increasing application rates (kg/ha).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TreatmentLevels(Vec<f64>);

impl TreatmentLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidInput(
                "at least two treatment levels are required".into(),
            ));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput(
                "treatment levels must be finite".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "treatment levels must be strictly increasing: {levels:?}"
            )));
        }
        Ok(TreatmentLevels(levels))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for TreatmentLevels {
    fn default() -> Self {
        TreatmentLevels(vec![0.0, 35.0, 70.0, 105.0, 140.0])
    }
}

impl TryFrom<Vec<f64>> for TreatmentLevels {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TreatmentLevels::new(v)
    }
}

impl From<TreatmentLevels> for Vec<f64> {
    fn from(t: TreatmentLevels) -> Self {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Randomised,
    Systematic,
}

impl DesignKind {
    pub fn label(self) -> &'static str {
        match self {
            DesignKind::Randomised => "randomised",
            DesignKind::Systematic => "systematic",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DesignKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomised" => Ok(DesignKind::Randomised),
            "systematic" => Ok(DesignKind::Systematic),
            other => Err(Error::InvalidInput(format!(
                "unknown design kind `{other}`"
            ))),
        }
    }
}

/// Per-plot application rates for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPlan {
    pub kind: DesignKind,
    /// Rate for every plot in plot order.
    pub treatment: Vec<f64>,
    pub replicate_blocks: usize,
    pub strips_per_block: usize,
}

impl DesignPlan {
    /// Rate carried by each range (strip), 1-based range `j` at index `j - 1`.
    pub fn strip_rates(&self, n_rows: usize) -> Vec<f64> {
        self.treatment.chunks(n_rows).map(|c| c[0]).collect()
    }
}

/// Allocates one level per strip, each replicate block of `|levels|`
/// consecutive ranges holding every level once.
///
/// Systematic plans repeat the ascending level order in every block and never
/// touch `rng`. Randomised plans shuffle the levels independently per block.
pub fn allocate_treatments<R: Rng + ?Sized>(
    grid: &FieldGrid,
    levels: &TreatmentLevels,
    kind: DesignKind,
    rng: &mut R,
) -> Result<DesignPlan> {
    let per_block = levels.len();
    if !grid.n_ranges().is_multiple_of(per_block) {
        return Err(Error::InvalidInput(format!(
            "{} ranges cannot be split into blocks of {} strips",
            grid.n_ranges(),
            per_block
        )));
    }
    let blocks = grid.n_ranges() / per_block;
    let mut order: Vec<usize> = (0..per_block).collect();
    let mut strip_rates = Vec::with_capacity(grid.n_ranges());
    for _ in 0..blocks {
        if kind == DesignKind::Randomised {
            order.shuffle(rng);
        }
        strip_rates.extend(order.iter().map(|&l| levels.as_slice()[l]));
    }
    let treatment = strip_rates
        .iter()
        .flat_map(|&rate| std::iter::repeat_n(rate, grid.n_rows()))
        .collect();
    Ok(DesignPlan {
        kind,
        treatment,
        replicate_blocks: blocks,
        strips_per_block: per_block,
    })
}
