//! Dataset normalization and sampling.

mod adapters;
mod instance;
mod sample;
mod svamp;

pub use adapters::{load_dataset, save_normalized, write_normalized, ADAPTERS};
pub use instance::{Metric, Option_, TaskInstance, TaskKind};
pub use sample::{sample_eval_set, EvalSet};
pub use svamp::{format_number, svamp_make_multichoice};
