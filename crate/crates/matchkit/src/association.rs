//! Concordance counting and Kruskal's gamma over couple data.
//!
//! Association between any two attributes (possibly on different sides of
//! the match) is measured over unordered pairs of couples: a pair is
//! concordant when the two attribute differences share a sign, discordant
//! when they oppose, tied when either difference is zero. Counting goes
//! through the two-attribute contingency table with prefix sums, so cost is
//! linear in table size rather than quadratic in couples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::BivariateTable;

/// Which member of the couple an attribute is read from: `X` is the side
/// stored in each record's `x` vector, `Y` the side in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    X,
    Y,
}

/// One attribute of one side, with 1-based attribute index.
pub type AttrRef = (Side, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupleRecord {
    pub weight: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupleDataset {
    pub records: Vec<CoupleRecord>,
}

impl CoupleDataset {
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyData("couple dataset has no records".into()));
        }
        let xd = self.records[0].x.len();
        let yd = self.records[0].y.len();
        for (i, r) in self.records.iter().enumerate() {
            if r.x.len() != xd || r.y.len() != yd {
                return Err(Error::DimensionMismatch {
                    context: format!("record {i} has dims ({},{}), expected ({xd},{yd})", r.x.len(), r.y.len()),
                });
            }
            if !r.weight.is_finite() || r.weight < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "record {i} has weight {}",
                    r.weight
                )));
            }
        }
        Ok(())
    }

    fn attr_value(&self, record: &CoupleRecord, attr: AttrRef) -> Result<f64> {
        let (side, k) = attr;
        let v = match side {
            Side::X => &record.x,
            Side::Y => &record.y,
        };
        if k == 0 || k > v.len() {
            return Err(Error::InvalidInput(format!(
                "side {side:?} has no attribute {k} (dimension {})",
                v.len()
            )));
        }
        Ok(v[k - 1])
    }
}

/// Raw weighted pair counts. `total_pairs` is the count of all unordered
/// pairs of distinct records (or distinct table cells for table input);
/// ties = total - concordant - discordant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConcordanceCounts {
    pub concordant: f64,
    pub discordant: f64,
    pub ties: f64,
    pub total_pairs: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaResult {
    /// Concordant fraction of all weighted pairs.
    pub concordant: f64,
    /// Discordant fraction.
    pub discordant: f64,
    pub ties: f64,
    pub gamma: f64,
}

fn validate_table(t: &BivariateTable) -> Result<()> {
    if t.mass.is_empty() || t.col_values.is_empty() {
        return Err(Error::EmptyData("contingency table has no cells".into()));
    }
    if t.mass.len() != t.row_values.len()
        || t.mass.iter().any(|r| r.len() != t.col_values.len())
    {
        return Err(Error::DimensionMismatch {
            context: "table mass grid does not match its row/column labels".into(),
        });
    }
    if t.row_values.windows(2).any(|w| !(w[0] < w[1]))
        || t.col_values.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::InvalidInput(
            "table row and column values must be strictly increasing".into(),
        ));
    }
    for row in &t.mass {
        for &m in row {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidInput(format!("table has cell mass {m}")));
            }
        }
    }
    if t.total() <= 0.0 {
        return Err(Error::EmptyData("contingency table has zero total mass".into()));
    }
    Ok(())
}

/// Counts weighted concordant and discordant pairs of a contingency table
/// in one pass of prefix sums over the grid.
pub fn count_concordance_table(t: &BivariateTable) -> Result<ConcordanceCounts> {
    validate_table(t)?;
    let rows = t.row_values.len();
    let cols = t.col_values.len();
    let mut prefix = vec![vec![0.0; cols]; rows];
    for r in 0..rows {
        for c in 0..cols {
            let up = if r > 0 { prefix[r - 1][c] } else { 0.0 };
            let left = if c > 0 { prefix[r][c - 1] } else { 0.0 };
            let diag = if r > 0 && c > 0 { prefix[r - 1][c - 1] } else { 0.0 };
            prefix[r][c] = t.mass[r][c] + up + left - diag;
        }
    }
    let mut concordant = 0.0;
    let mut discordant = 0.0;
    for r in 1..rows {
        for c in 0..cols {
            let below_left = if c > 0 { prefix[r - 1][c - 1] } else { 0.0 };
            let below_right = prefix[r - 1][cols - 1] - prefix[r - 1][c];
            concordant += t.mass[r][c] * below_left;
            discordant += t.mass[r][c] * below_right;
        }
    }
    let total = t.total();
    let sq: f64 = t.mass.iter().flatten().map(|m| m * m).sum();
    let total_pairs = (total * total - sq) / 2.0;
    Ok(ConcordanceCounts {
        concordant,
        discordant,
        ties: total_pairs - concordant - discordant,
        total_pairs,
    })
}

/// Aggregates a dataset into the contingency table of the two selected
/// attributes.
pub fn table_from_dataset(
    data: &CoupleDataset,
    first: AttrRef,
    second: AttrRef,
) -> Result<BivariateTable> {
    data.validate()?;
    let mut pairs = Vec::with_capacity(data.records.len());
    for r in &data.records {
        let u = data.attr_value(r, first)?;
        let v = data.attr_value(r, second)?;
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite attribute values ({u}, {v})"
            )));
        }
        pairs.push((u, v, r.weight));
    }
    let mut row_values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    row_values.sort_by(f64::total_cmp);
    row_values.dedup();
    let mut col_values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    col_values.sort_by(f64::total_cmp);
    col_values.dedup();
    let mut mass = vec![vec![0.0; col_values.len()]; row_values.len()];
    for (u, v, w) in pairs {
        let r = row_values.binary_search_by(|p| p.total_cmp(&u)).unwrap();
        let c = col_values.binary_search_by(|p| p.total_cmp(&v)).unwrap();
        mass[r][c] += w;
    }
    Ok(BivariateTable { row_values, col_values, mass })
}

/// Counts concordance between two attributes of a couple dataset. Pairs are
/// weighted by the product of record weights; self-pairs are excluded.
pub fn count_concordance(
    data: &CoupleDataset,
    first: AttrRef,
    second: AttrRef,
) -> Result<ConcordanceCounts> {
    let table = table_from_dataset(data, first, second)?;
    let from_table = count_concordance_table(&table)?;
    let w: f64 = data.records.iter().map(|r| r.weight).sum();
    let sq: f64 = data.records.iter().map(|r| r.weight * r.weight).sum();
    let total_pairs = (w * w - sq) / 2.0;
    Ok(ConcordanceCounts {
        concordant: from_table.concordant,
        discordant: from_table.discordant,
        ties: total_pairs - from_table.concordant - from_table.discordant,
        total_pairs,
    })
}

fn gamma_from_counts(counts: ConcordanceCounts) -> Result<GammaResult> {
    let cd = counts.concordant + counts.discordant;
    if cd <= 0.0 {
        return Err(Error::AllPairsTied);
    }
    let norm = counts.total_pairs.max(f64::MIN_POSITIVE);
    Ok(GammaResult {
        concordant: counts.concordant / norm,
        discordant: counts.discordant / norm,
        ties: counts.ties / norm,
        gamma: (counts.concordant - counts.discordant) / cd,
    })
}

pub fn kruskal_gamma(data: &CoupleDataset, first: AttrRef, second: AttrRef) -> Result<GammaResult> {
    gamma_from_counts(count_concordance(data, first, second)?)
}

pub fn kruskal_gamma_table(t: &BivariateTable) -> Result<GammaResult> {
    gamma_from_counts(count_concordance_table(t)?)
}
