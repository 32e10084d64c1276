//! Majority voting for self-consistency.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::{Error, Result};

/// Return the value with maximal multiplicity; ties break toward the value
/// whose first occurrence comes earliest.
pub fn majority_vote<T>(answers: &[T]) -> Result<T>
where
    T: Eq + Hash + Clone,
{
    if answers.is_empty() {
        return Err(Error::Input("majority vote over an empty list".into()));
    }
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for a in answers {
        *counts.entry(a).or_default() += 1;
    }
    let mut seen: HashSet<&T> = HashSet::new();
    let mut best: Option<(&T, usize)> = None;
    for a in answers {
        if !seen.insert(a) {
            continue;
        }
        let count = counts[a];
        if best.is_none_or(|(_, best_count)| count > best_count) {
            best = Some((a, count));
        }
    }
    Ok(best.expect("non-empty input").0.clone())
}
