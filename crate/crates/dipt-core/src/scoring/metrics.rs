//! Accuracy metrics and answer normalization.

use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};

use crate::corpus::{Metric, TaskInstance, TaskKind};
use crate::error::{Error, Result};

use super::extract::Prediction;

/// Normalize an answer string for flexible comparison: trim, case-fold,
/// strip terminal punctuation, collapse internal whitespace, and canonicalize
/// numeric strings ("42.0", "1,000", "$5", "50%", "3/2" all reduce to a
/// rational in lowest terms).
pub fn normalize_answer(raw: &str) -> String {
    let lower = raw.trim().to_lowercase();
    let stripped = lower.trim_end_matches(|c: char| matches!(c, '.' | '!' | '?' | ',' | ';' | ':'));
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    match parse_rational(&collapsed) {
        Some(q) => rational_string(&q),
        None => collapsed,
    }
}

/// True iff the answer matches any gold string under [`normalize_answer`].
pub fn exact_match_flexible(answer: &str, gold_set: &[String]) -> bool {
    let norm = normalize_answer(answer);
    gold_set.iter().any(|g| normalize_answer(g) == norm)
}

/// Parse a numeric string (integer, decimal, or fraction, with optional
/// currency/percent/comma decoration) into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let cleaned: String = s.chars().filter(|c| !matches!(c, ',' | '$' | '%')).collect();
    let cleaned = cleaned.trim();
    if let Some((num, den)) = cleaned.split_once('/') {
        let num = parse_decimal(num)?;
        let den = parse_decimal(den)?;
        if den.is_zero() {
            return None;
        }
        return Some(num / den);
    }
    parse_decimal(cleaned)
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all_digits = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return None;
    }
    let numer = BigInt::from_str(&format!("{int_part}{frac_part}")).ok()?;
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    let q = BigRational::new(numer, denom);
    Some(if negative { -q } else { q })
}

fn rational_string(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Fraction of items whose gold label appears among the first `k` ranked
/// labels. Failed predictions have no ranked labels and count as incorrect.
pub fn top_k_accuracy(
    predictions: &[Prediction],
    instances: &[TaskInstance],
    k: usize,
) -> Result<f64> {
    if predictions.len() != instances.len() {
        return Err(Error::Input(format!(
            "{} predictions scored against {} instances",
            predictions.len(),
            instances.len()
        )));
    }
    if instances.is_empty() {
        return Err(Error::Input("no items to score".into()));
    }
    if !(1..=2).contains(&k) {
        return Err(Error::Input(format!("top-k accuracy is defined for k in {{1, 2}}, got {k}")));
    }
    let correct = predictions
        .iter()
        .zip(instances)
        .filter(|(pred, inst)| hit_top_k(pred, inst, k))
        .count();
    Ok(correct as f64 / instances.len() as f64)
}

fn hit_top_k(pred: &Prediction, instance: &TaskInstance, k: usize) -> bool {
    pred.ranked_labels.iter().take(k).any(|l| instance.gold.contains(l))
}

/// Score one prediction against its instance's own metric.
pub fn score_prediction(pred: &Prediction, instance: &TaskInstance) -> bool {
    match instance.task_kind {
        TaskKind::Multichoice => {
            let k = match instance.metric {
                Metric::Top2 => 2,
                _ => 1,
            };
            hit_top_k(pred, instance, k)
        }
        TaskKind::Freeform => pred
            .answer_text
            .as_deref()
            .is_some_and(|text| exact_match_flexible(text, &instance.gold)),
    }
}
