//! Protocol orchestration: accuracy/delta experiments, paraphrase
//! stability, runtime-vs-perspectives measurement, and decision sweeps.

use std::path::PathBuf;

use serde::Serialize;

use crate::config::{registry_default, Config};
use crate::corpus::{load_dataset, sample_eval_set, TaskInstance};
use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, ChatRequest, Completion, DecodingParams, Gateway, GatewayMode};
use crate::prompt::{
    compose, paraphrase_prompt, parse_paraphrase_response, DecisionStrategy, MethodSpec,
    PromptAssets, TaskTemplate, TemplateStore,
};
use crate::report::{
    ExperimentReport, MethodSummary, RuntimeReport, RuntimeRow, StabilityReport, StabilityRow,
    Trace,
};
use crate::scoring::{
    aggregate_runs, extract_answer, majority_vote, score_prediction, Prediction, RunScore,
};
use crate::seed::derive_seed;

/// Everything an experiment run needs besides the gateway and templates.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_id: String,
    pub data_path: PathBuf,
    pub adapter: String,
    /// First method is the baseline for deltas.
    pub methods: Vec<MethodSpec>,
    pub model_id: String,
    pub decoding: DecodingParams,
    pub n_examples: usize,
    pub n_runs: usize,
    /// Per-run sampling seeds; only `seeds[0]` is used unless
    /// `resample_per_run` is set.
    pub seeds: Vec<u64>,
    pub root_seed: u64,
    pub resample_per_run: bool,
    pub parallelism: usize,
    pub assets: PromptAssets,
    /// Demonstration text prepended verbatim to every task prompt.
    pub demos: Option<String>,
    pub sample_std: bool,
    pub keep_traces: bool,
    /// Where to dump completed traces when a run aborts mid-flight.
    pub partial_trace_path: Option<PathBuf>,
}

fn default_list(cfg: &Config, key: &str) -> Vec<String> {
    cfg.get_or(key, registry_default(key))
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Decoding parameters from the `decoding.*` config keys.
pub fn decoding_from_config(cfg: &Config) -> Result<DecodingParams> {
    Ok(DecodingParams {
        temperature: cfg.get_f64("decoding.temperature", 1.0)?,
        top_p: cfg.get_f64("decoding.top_p", 1.0)?,
        presence_penalty: cfg.get_f64("decoding.presence_penalty", 0.0)?,
        frequency_penalty: cfg.get_f64("decoding.frequency_penalty", 0.0)?,
        max_tokens: match cfg.get("decoding.max_tokens") {
            None | Some("unset") | Some("") => None,
            Some(v) => Some(v.parse().map_err(|_| {
                Error::Config(format!("decoding.max_tokens: expected an integer, got `{v}`"))
            })?),
        },
        seed: None,
    })
}

impl ExperimentConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let dataset_id = cfg.require("dataset")?.to_string();
        let data_path = PathBuf::from(cfg.require("data")?);
        let adapter = match cfg.get("adapter") {
            Some(a) if !a.is_empty() => a.to_string(),
            _ => dataset_id.clone(),
        };

        let mut methods = Vec::new();
        for raw in default_list(cfg, "methods") {
            let spec = MethodSpec::parse(&raw)?;
            spec.validate()?;
            methods.push(spec);
        }
        if methods.is_empty() {
            return Err(Error::Config("methods: need at least one method".into()));
        }

        let decoding = decoding_from_config(cfg)?;

        let n_examples = cfg.get_usize("n_examples", 300)?;
        let n_runs = cfg.get_usize("n_runs", 3)?;
        if n_examples == 0 || n_runs == 0 {
            return Err(Error::Config("n_examples and n_runs must be at least 1".into()));
        }

        let root_seed = cfg.get_u64("seed", 0)?;
        let seeds = match cfg.get("seeds") {
            None | Some("derived") | Some("") => {
                (0..n_runs).map(|r| derive_seed(root_seed, &format!("sample/run{r}"))).collect()
            }
            Some(list) => {
                let seeds: Vec<u64> = list
                    .split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            Error::Config(format!("seeds: expected integers, got `{s}`"))
                        })
                    })
                    .collect::<Result<_>>()?;
                if seeds.len() != n_runs {
                    return Err(Error::Config(format!(
                        "seeds: {} values for n_runs = {n_runs}",
                        seeds.len()
                    )));
                }
                seeds
            }
        };

        let demos = match cfg.get("demos") {
            None | Some("") => None,
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read demos file {path}: {e}"))
            })?),
        };

        Ok(Self {
            dataset_id,
            data_path,
            adapter,
            methods,
            model_id: cfg.get_or("model", registry_default("model")).to_string(),
            decoding,
            n_examples,
            n_runs,
            seeds,
            root_seed,
            resample_per_run: cfg.get_bool("resample_per_run", false)?,
            parallelism: cfg.get_usize("parallelism", 1)?,
            assets: PromptAssets::from_config(cfg)?,
            demos,
            sample_std: cfg.get_bool("report.sample_std", false)?,
            keep_traces: cfg.get_bool("report.traces", true)?,
            partial_trace_path: None,
        })
    }

    pub(crate) fn sample_seed(&self, run: usize) -> u64 {
        if self.resample_per_run {
            self.seeds[run]
        } else {
            self.seeds[0]
        }
    }
}

pub(crate) struct Ctx<'a> {
    pub(crate) config: &'a ExperimentConfig,
    pub(crate) gateway: &'a Gateway,
    pub(crate) store: &'a TemplateStore,
}

pub(crate) struct MethodRun {
    pub(crate) score: RunScore,
    pub(crate) traces: Vec<Trace>,
}

fn consensus(preds: &[Prediction]) -> Result<Prediction> {
    if preds.len() == 1 {
        return Ok(preds[0].clone());
    }
    let keys: Vec<String> = preds.iter().filter_map(Prediction::vote_key).collect();
    if keys.is_empty() {
        return Ok(Prediction::failed());
    }
    let winner = majority_vote(&keys)?;
    Ok(preds
        .iter()
        .find(|p| p.vote_key().as_deref() == Some(winner.as_str()))
        .expect("winning key came from this list")
        .clone())
}

#[derive(Serialize)]
struct PartialDump<'a> {
    error: String,
    traces: &'a [Trace],
}

fn dump_partial(config: &ExperimentConfig, error: &Error, traces: &[Trace]) {
    let Some(path) = &config.partial_trace_path else { return };
    let dump = PartialDump { error: error.to_string(), traces };
    if let Ok(json) = serde_json::to_string_pretty(&dump) {
        let _ = std::fs::write(path, json);
    }
}

/// Compose, complete, extract, and score one method over one item set.
/// Self-consistency samples are distinguished by derived decoding seeds and
/// combined by majority vote.
pub(crate) fn evaluate_method(
    ctx: &Ctx,
    items: &[TaskInstance],
    spec: &MethodSpec,
    run: usize,
    scope: &str,
) -> Result<MethodRun> {
    if items.is_empty() {
        return Err(Error::Input("no items to evaluate".into()));
    }
    let cfg = ctx.config;
    let method_name = spec.to_string();
    let sc = spec.self_consistency_samples.max(1);

    let mut requests = Vec::with_capacity(items.len() * sc);
    for item in items {
        let prompt = compose(item, ctx.store, spec, cfg.demos.as_deref(), &cfg.assets)?;
        for s in 0..sc {
            let label = format!("{scope}/run{run}/{method_name}/{}/s{s}", item.id);
            let request = ChatRequest::new(&cfg.model_id, vec![ChatMessage::user(&prompt.body)])?
                .with_decoding(cfg.decoding.clone().with_seed(derive_seed(cfg.root_seed, &label)))
                .with_tag(label);
            requests.push(request);
        }
    }

    let mut first_error = None;
    let mut completions: Vec<Option<Completion>> = Vec::with_capacity(requests.len());
    for result in ctx.gateway.complete_batch(&requests, cfg.parallelism) {
        match result {
            Ok(c) => completions.push(Some(c)),
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
                completions.push(None);
            }
        }
    }

    let mut traces = Vec::with_capacity(items.len());
    let mut correct_count = 0usize;
    let mut failures = 0usize;
    for (idx, item) in items.iter().enumerate() {
        let slice = &completions[idx * sc..(idx + 1) * sc];
        if slice.iter().any(Option::is_none) {
            continue;
        }
        let samples: Vec<&Completion> = slice.iter().map(|c| c.as_ref().unwrap()).collect();
        let preds: Vec<Prediction> =
            samples.iter().map(|c| extract_answer(&c.text, item)).collect();
        let prediction = consensus(&preds)?;
        let correct = score_prediction(&prediction, item);
        correct_count += usize::from(correct);
        failures += usize::from(prediction.is_failed());
        traces.push(Trace {
            item_id: item.id.clone(),
            run,
            method: method_name.clone(),
            fingerprints: samples.iter().map(|c| c.fingerprint.clone()).collect(),
            prediction,
            correct,
        });
    }

    if let Some(error) = first_error {
        dump_partial(cfg, &error, &traces);
        return Err(error);
    }

    let n = items.len() as f64;
    Ok(MethodRun {
        score: RunScore {
            score: correct_count as f64 / n,
            parse_failure_rate: failures as f64 / n,
        },
        traces,
    })
}

/// Run the accuracy protocol: sample, evaluate every method over every run,
/// aggregate, and compute deltas against the first method.
pub fn run_experiment(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
) -> Result<ExperimentReport> {
    let ctx = Ctx { config, gateway, store };
    let corpus = load_dataset(&config.data_path, &config.adapter)?;

    let mut run_sets = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        run_sets.push(sample_eval_set(&corpus, config.n_examples, config.sample_seed(run))?);
    }

    let mut summaries = Vec::with_capacity(config.methods.len());
    let mut traces = Vec::new();
    for spec in &config.methods {
        let mut run_scores = Vec::with_capacity(config.n_runs);
        for (run, set) in run_sets.iter().enumerate() {
            let mut outcome = evaluate_method(&ctx, &set.instances, spec, run, "eval")?;
            run_scores.push(outcome.score);
            traces.append(&mut outcome.traces);
        }
        summaries.push(MethodSummary {
            method: spec.to_string(),
            summary: aggregate_runs(&run_scores, config.sample_std)?,
            delta: 0.0,
        });
    }
    let baseline = summaries[0].summary.mean;
    for summary in &mut summaries {
        summary.delta = summary.summary.mean - baseline;
    }

    Ok(ExperimentReport {
        dataset: config.dataset_id.clone(),
        model: config.model_id.clone(),
        n_examples: config.n_examples,
        n_runs: config.n_runs,
        methods: summaries,
        traces: if config.keep_traces { traces } else { Vec::new() },
    })
}

/// Stability protocol knobs.
#[derive(Debug, Clone)]
pub struct StabilityParams {
    pub n_paraphrases: usize,
    /// Score the union of paraphrased items instead of averaging
    /// per-iteration scores.
    pub pooled: bool,
    pub paraphrase_model: String,
}

impl StabilityParams {
    pub fn from_config(cfg: &Config, model_id: &str) -> Result<Self> {
        let n_paraphrases = cfg.get_usize("stability.n_paraphrases", 5)?;
        if n_paraphrases == 0 {
            return Err(Error::Config("stability.n_paraphrases must be at least 1".into()));
        }
        let paraphrase_model = match cfg.get("paraphrase.model") {
            None | Some("") => model_id.to_string(),
            Some(m) => m.to_string(),
        };
        Ok(Self { n_paraphrases, pooled: cfg.get_bool("stability.pooled", false)?, paraphrase_model })
    }
}

fn paraphrased_instance(
    original: &TaskInstance,
    text: &str,
    template: &TaskTemplate,
) -> Option<TaskInstance> {
    let (context, question) = parse_paraphrase_response(text, template)?;
    let mut instance = original.clone();
    if let Some(c) = context {
        instance.context = Some(c);
    }
    if let Some(q) = question {
        instance.question = q;
    }
    Some(instance)
}

/// Run the paraphrase-stability protocol: generate paraphrases per item,
/// evaluate each method on originals and paraphrases, and report the drop.
/// Paraphrases that lose the dataset's structure markers are excluded and
/// counted.
pub fn run_stability(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
    params: &StabilityParams,
) -> Result<StabilityReport> {
    let ctx = Ctx { config, gateway, store };
    let template = store.get(&config.dataset_id)?;
    let corpus = load_dataset(&config.data_path, &config.adapter)?;
    let set = sample_eval_set(&corpus, config.n_examples, config.sample_seed(0))?;
    let items = &set.instances;

    let mut requests = Vec::with_capacity(items.len() * params.n_paraphrases);
    for iteration in 0..params.n_paraphrases {
        for item in items {
            let prompt = paraphrase_prompt(item, store)?;
            let label = format!("paraphrase/i{iteration}/{}", item.id);
            let request =
                ChatRequest::new(&params.paraphrase_model, vec![ChatMessage::user(&prompt.body)])?
                    .with_decoding(
                        config.decoding.clone().with_seed(derive_seed(config.root_seed, &label)),
                    )
                    .with_tag(label);
            requests.push(request);
        }
    }
    let completions: Vec<Completion> = gateway
        .complete_batch(&requests, config.parallelism)
        .into_iter()
        .collect::<Result<_>>()?;

    let mut excluded = 0usize;
    let mut iterations: Vec<Vec<TaskInstance>> = Vec::with_capacity(params.n_paraphrases);
    for iteration in 0..params.n_paraphrases {
        let mut valid = Vec::with_capacity(items.len());
        for (idx, item) in items.iter().enumerate() {
            let completion = &completions[iteration * items.len() + idx];
            match paraphrased_instance(item, &completion.text, template) {
                Some(paraphrased) => valid.push(paraphrased),
                None => excluded += 1,
            }
        }
        iterations.push(valid);
    }
    if iterations.iter().all(Vec::is_empty) {
        return Err(Error::Input(
            "every paraphrase lost its structure markers; nothing to evaluate".into(),
        ));
    }

    let mut rows = Vec::with_capacity(config.methods.len());
    for spec in &config.methods {
        let original =
            evaluate_method(&ctx, items, spec, 0, "stability/original")?.score.score;
        let paraphrased_mean = if params.pooled {
            let pooled: Vec<TaskInstance> = iterations.iter().flatten().cloned().collect();
            evaluate_method(&ctx, &pooled, spec, 0, "stability/para")?.score.score
        } else {
            let mut scores = Vec::new();
            for (iteration, valid) in iterations.iter().enumerate() {
                if valid.is_empty() {
                    continue;
                }
                let scope = format!("stability/para{iteration}");
                scores.push(evaluate_method(&ctx, valid, spec, 0, &scope)?.score.score);
            }
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        rows.push(StabilityRow {
            method: spec.to_string(),
            original_mean: original,
            paraphrased_mean,
            drop: original - paraphrased_mean,
        });
    }

    Ok(StabilityReport {
        dataset: config.dataset_id.clone(),
        model: config.model_id.clone(),
        n_examples: config.n_examples,
        n_paraphrases: params.n_paraphrases,
        excluded_paraphrases: excluded,
        rows,
    })
}

/// Measure mean completion latency while varying the perspective count of
/// the first (DiPT-wrapped) method. The counts must include 1, which
/// anchors the linear projection.
pub fn measure_runtime(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
    perspective_counts: &[usize],
) -> Result<RuntimeReport> {
    if perspective_counts.is_empty() {
        return Err(Error::Input("no perspective counts given".into()));
    }
    if perspective_counts.contains(&0) {
        return Err(Error::Input("perspective counts must be at least 1".into()));
    }
    if !perspective_counts.contains(&1) {
        return Err(Error::Input(
            "perspective counts must include 1 to anchor the linear ratio".into(),
        ));
    }
    let base = &config.methods[0];
    if !base.dipt_wrapped {
        return Err(Error::Config(format!(
            "runtime measurement varies perspectives, so the method must be \
             perspective-wrapped; got `{base}`"
        )));
    }

    let ctx = Ctx { config, gateway, store };
    let corpus = load_dataset(&config.data_path, &config.adapter)?;
    let set = sample_eval_set(&corpus, config.n_examples, config.sample_seed(0))?;
    let items = &set.instances;

    let mut means = Vec::with_capacity(perspective_counts.len());
    for &k in perspective_counts {
        let mut spec = base.clone();
        spec.perspective_hint = Some(k);
        spec.self_consistency_samples = 1;
        let scope = format!("runtime/k{k}");

        let mut requests = Vec::with_capacity(items.len());
        for item in items {
            let prompt = compose(item, store, &spec, config.demos.as_deref(), &config.assets)?;
            let label = format!("{scope}/{}", item.id);
            let request =
                ChatRequest::new(&config.model_id, vec![ChatMessage::user(&prompt.body)])?
                    .with_decoding(
                        config.decoding.clone().with_seed(derive_seed(config.root_seed, &label)),
                    )
                    .with_tag(label);
            requests.push(request);
        }
        let completions: Vec<Completion> = ctx
            .gateway
            .complete_batch(&requests, config.parallelism)
            .into_iter()
            .collect::<Result<_>>()?;
        let mean =
            completions.iter().map(|c| c.latency_seconds).sum::<f64>() / completions.len() as f64;
        means.push((k, mean, completions.len()));
    }

    let mean_1 = means.iter().find(|(k, ..)| *k == 1).expect("1 is present").1;
    if mean_1 <= 0.0 {
        return Err(Error::Input("zero mean latency at K = 1; ratios are undefined".into()));
    }
    let rows = means
        .into_iter()
        .map(|(k, mean_seconds, n_samples)| RuntimeRow {
            perspectives: k,
            mean_seconds,
            n_samples,
            ratio_to_linear: mean_seconds / (k as f64 * mean_1),
        })
        .collect();

    Ok(RuntimeReport {
        dataset: config.dataset_id.clone(),
        model: config.model_id.clone(),
        replayed_latencies: gateway.mode() == GatewayMode::Replay,
        rows,
    })
}

/// Sweep decision strategies over the first (DiPT-wrapped) method. Default
/// is always the baseline column; the remaining strategies keep their given
/// order.
pub fn run_decision_sweep(
    config: &ExperimentConfig,
    gateway: &Gateway,
    store: &TemplateStore,
    strategies: &[DecisionStrategy],
) -> Result<ExperimentReport> {
    if strategies.is_empty() {
        return Err(Error::Config("no decision strategies given".into()));
    }
    let base = &config.methods[0];
    if !base.dipt_wrapped {
        return Err(Error::Config(format!(
            "decision strategies only apply to perspective-wrapped methods; got `{base}`"
        )));
    }
    let mut ordered = vec![DecisionStrategy::Default];
    for &strategy in strategies {
        if !ordered.contains(&strategy) {
            ordered.push(strategy);
        }
    }
    let mut sweep_config = config.clone();
    sweep_config.methods =
        ordered.into_iter().map(|s| base.clone().with_decision(s)).collect();
    run_experiment(&sweep_config, gateway, store)
}
