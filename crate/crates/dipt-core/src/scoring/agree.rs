//! Krippendorff's alpha for nominal data.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Items-by-raters grid of nominal category codes; `None` marks a missing
/// rating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaterMatrix {
    rows: Vec<Vec<Option<String>>>,
}

impl RaterMatrix {
    /// Build from item rows. Requires a rectangular grid with at least two
    /// rater columns.
    pub fn new(rows: Vec<Vec<Option<String>>>) -> Result<Self> {
        let n_raters = rows.first().map_or(0, Vec::len);
        if n_raters < 2 {
            return Err(Error::Input("a rater matrix needs at least 2 raters".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n_raters) {
            return Err(Error::Input(format!(
                "ragged rater matrix: item {} has {} ratings, expected {n_raters}",
                bad,
                rows[bad].len()
            )));
        }
        Ok(Self { rows })
    }

    /// Parse delimited text: one line per item, one field per rater, with
    /// `missing` marking absent ratings. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str, delimiter: char, missing: &str) -> Result<Self> {
        let rows: Vec<Vec<Option<String>>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|line| {
                line.split(delimiter)
                    .map(str::trim)
                    .map(|f| if f == missing { None } else { Some(f.to_string()) })
                    .collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn n_raters(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Option<String>>] {
        &self.rows
    }
}

/// Krippendorff's alpha at the nominal level, computed from the coincidence
/// matrix over all pairable ratings. An item rated by n_u >= 2 raters
/// contributes its n_u(n_u-1) ordered rating pairs at weight 1/(n_u-1).
/// When every pairable rating falls in one category, alpha is 1 by
/// convention.
pub fn krippendorff_alpha(matrix: &RaterMatrix) -> Result<f64> {
    let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
    for row in matrix.rows() {
        for value in row.iter().flatten() {
            let next = categories.len();
            categories.entry(value).or_insert(next);
        }
    }
    let n_cats = categories.len();
    let mut coincidence = vec![vec![0.0f64; n_cats]; n_cats];
    let mut n_pairable = 0.0f64;

    for row in matrix.rows() {
        let present: Vec<usize> = row.iter().flatten().map(|v| categories[v.as_str()]).collect();
        let n_u = present.len();
        if n_u < 2 {
            continue;
        }
        let weight = 1.0 / (n_u as f64 - 1.0);
        for (i, &a) in present.iter().enumerate() {
            for (j, &b) in present.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += weight;
                }
            }
        }
        n_pairable += n_u as f64;
    }

    if n_pairable == 0.0 {
        return Err(Error::InsufficientData(
            "no item has two or more ratings; alpha is undefined".into(),
        ));
    }

    let observed_disagreement: f64 = (0..n_cats)
        .flat_map(|c| (0..n_cats).filter(move |&k| k != c).map(move |k| (c, k)))
        .map(|(c, k)| coincidence[c][k])
        .sum::<f64>()
        / n_pairable;

    let marginals: Vec<f64> = (0..n_cats).map(|c| coincidence[c].iter().sum()).collect();
    let expected_disagreement: f64 = (0..n_cats)
        .flat_map(|c| (0..n_cats).filter(move |&k| k != c).map(move |k| (c, k)))
        .map(|(c, k)| marginals[c] * marginals[k])
        .sum::<f64>()
        / (n_pairable * (n_pairable - 1.0));

    if expected_disagreement == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed_disagreement / expected_disagreement)
}
