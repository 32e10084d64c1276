//! Deterministic evaluation-set sampling.

use sha2::{Digest, Sha256};

use crate::corpus::TaskInstance;
use crate::error::{Error, Result};

/// A sampled evaluation subset in its sampled order.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub instances: Vec<TaskInstance>,
    pub seed: u64,
    pub source_size: usize,
}

fn rank_key(seed: u64, id: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    hasher.finalize().into()
}

/// Uniform sample of `n` instances without replacement. Items are ranked by
/// a keyed hash of their ids, so the choice depends only on (ids, seed) and
/// survives re-ordering of the source file.
pub fn sample_eval_set(instances: &[TaskInstance], n: usize, seed: u64) -> Result<EvalSet> {
    if n > instances.len() {
        return Err(Error::Sampling(format!(
            "requested {n} examples but the dataset holds {}",
            instances.len()
        )));
    }
    let mut ranked: Vec<(usize, [u8; 32])> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (i, rank_key(seed, &inst.id)))
        .collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| instances[a.0].id.cmp(&instances[b.0].id)));
    Ok(EvalSet {
        instances: ranked[..n].iter().map(|(i, _)| instances[*i].clone()).collect(),
        seed,
        source_size: instances.len(),
    })
}
