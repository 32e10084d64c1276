//! `dipt`: one entry point for every workflow in the harness. Subcommands
//! assemble a config (file, then `--set` overrides, then dedicated flags),
//! reject unknown keys, and exit 0 on success, 1 on experiment errors, and
//! 2 on configuration errors.

mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dipt_core::config::{Config, KEY_REGISTRY};
use dipt_core::enrich::{
    enrich_dataset, export_finetune_dataset, load_instruction_dataset, metadata_path, Variant,
};
use dipt_core::gateway::{Cassette, Gateway, GatewayOptions};
use dipt_core::mislabel::{detect_mislabels, rater_specs_from_config};
use dipt_core::prompt::{DecisionStrategy, MethodSpec, TemplateStore};
use dipt_core::report::{write_report, Render, ReportFormat};
use dipt_core::runner::{
    measure_runtime, run_decision_sweep, run_experiment, run_stability, ExperimentConfig,
    StabilityParams,
};
use dipt_core::safety::{load_attack_corpus, CaseOutcome, Moderator, SafetyConfig, Verdict};
use dipt_core::{Error, Result};

fn config_keys_help() -> String {
    let mut out = String::from("Config keys (key = default):\n");
    for spec in KEY_REGISTRY {
        let default = if spec.default.is_empty() { "\"\"" } else { spec.default };
        out.push_str(&format!("  {} = {}\n      {}\n", spec.key, default, spec.help));
    }
    out
}

#[derive(Parser)]
#[command(
    name = "dipt",
    about = "Perspective-taking prompt composition and evaluation harness",
    version,
    after_help = config_keys_help()
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (`key = value` lines)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Gateway mode: live, record, or replay
    #[arg(long)]
    mode: Option<String>,
    /// Root seed; every subsystem seed derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Max in-flight completion requests
    #[arg(long)]
    parallelism: Option<usize>,
    /// Write the report here instead of standard output
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Report format: markdown, csv, or json
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ModerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Serve moderation over one chat-completions HTTP endpoint at ADDR
    /// instead of moderating the attack corpus
    #[arg(long, value_name = "ADDR")]
    serve: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Accuracy and delta over the configured methods
    Eval(CommonArgs),
    /// Paraphrase stability: original vs paraphrased accuracy
    Stability(CommonArgs),
    /// Output-generation runtime as the perspective count grows
    Runtime(CommonArgs),
    /// Decision-strategy sweep over a perspective-wrapped method
    Decisions(CommonArgs),
    /// Moderate an attack corpus, or serve the moderation gate over HTTP
    Moderate(ModerateArgs),
    /// Attack success rate by family, with optional harmfulness judging
    Asr(CommonArgs),
    /// Generate rationale-enriched samples and export a fine-tune file
    Enrich(CommonArgs),
    /// Flag suspect gold labels and categorize them with rater votes
    Mislabel(CommonArgs),
    /// Cassette maintenance
    Cassette(CassetteArgs),
}

#[derive(Args)]
struct CassetteArgs {
    #[command(subcommand)]
    action: CassetteAction,
}

#[derive(Subcommand)]
enum CassetteAction {
    /// Parse every record and report the count; corrupt files name the line
    Verify { path: PathBuf },
}

/// File config, then `--set` pairs, then dedicated flags; unknown keys are
/// rejected rather than ignored.
fn assemble_config(common: &CommonArgs) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::new(),
    };
    cfg.apply_overrides(common.set.iter().map(String::as_str))?;
    if let Some(mode) = &common.mode {
        cfg.set("mode", mode);
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string());
    }
    if let Some(parallelism) = common.parallelism {
        cfg.set("parallelism", &parallelism.to_string());
    }
    cfg.check_known_keys(KEY_REGISTRY)?;
    Ok(cfg)
}

fn store_for(cfg: &Config) -> Result<TemplateStore> {
    match cfg.get_or("templates", "builtin") {
        "builtin" => Ok(TemplateStore::builtin()),
        dir => TemplateStore::from_dir(Path::new(dir)),
    }
}

fn gateway_for(cfg: &Config) -> Result<Gateway> {
    Gateway::new(GatewayOptions::from_config(cfg)?)
}

fn emit<R: Render>(report: &R, common: &CommonArgs) -> Result<()> {
    let format = ReportFormat::parse(&common.format)?;
    match &common.out {
        Some(path) => write_report(report, format, path),
        None => {
            print!("{}", report.render(format));
            Ok(())
        }
    }
}

/// Per-case moderation verdicts, for the `moderate` subcommand.
#[derive(Serialize)]
struct ModerationListing {
    model: String,
    cases: Vec<CaseOutcome>,
}

fn verdict_str(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Answered => "answered",
        Verdict::Refused => "refused",
    }
}

impl Render for ModerationListing {
    fn markdown(&self) -> String {
        let mut out = format!(
            "# Moderation verdicts: {}\n\n| Case | Family | Verdict |\n|---|---|---|\n",
            self.model
        );
        for case in &self.cases {
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                case.id,
                case.family,
                verdict_str(case.outcome.verdict)
            ));
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = String::from("id,family,verdict\n");
        for case in &self.cases {
            out.push_str(&format!(
                "{},{},{}\n",
                case.id,
                case.family,
                verdict_str(case.outcome.verdict)
            ));
        }
        out
    }
}

fn cmd_eval(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = ExperimentConfig::from_config(&cfg)?;
    let report = run_experiment(&config, &gateway_for(&cfg)?, &store_for(&cfg)?)?;
    emit(&report, common)
}

fn cmd_stability(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = ExperimentConfig::from_config(&cfg)?;
    let params = StabilityParams::from_config(&cfg, &config.model_id)?;
    let report = run_stability(&config, &gateway_for(&cfg)?, &store_for(&cfg)?, &params)?;
    emit(&report, common)
}

fn cmd_runtime(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = ExperimentConfig::from_config(&cfg)?;
    let counts: Vec<usize> = cfg
        .get_list("runtime.perspective_counts")
        .iter()
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                Error::Config(format!("runtime.perspective_counts: `{v}` is not a count"))
            })
        })
        .collect::<Result<_>>()?;
    let counts = if counts.is_empty() { vec![1, 2, 4, 8] } else { counts };
    let report = measure_runtime(&config, &gateway_for(&cfg)?, &store_for(&cfg)?, &counts)?;
    emit(&report, common)
}

fn cmd_decisions(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = ExperimentConfig::from_config(&cfg)?;
    let strategies: Vec<DecisionStrategy> = cfg
        .get_list("decisions.strategies")
        .iter()
        .map(|s| DecisionStrategy::parse(s))
        .collect::<Result<_>>()?;
    let strategies = if strategies.is_empty() {
        vec![
            DecisionStrategy::Default,
            DecisionStrategy::Repeat,
            DecisionStrategy::Verify,
            DecisionStrategy::ConditionConsistency,
        ]
    } else {
        strategies
    };
    let report = run_decision_sweep(&config, &gateway_for(&cfg)?, &store_for(&cfg)?, &strategies)?;
    emit(&report, common)
}

fn cmd_moderate(args: &ModerateArgs) -> Result<()> {
    let cfg = assemble_config(&args.common)?;
    let config = SafetyConfig::from_config(&cfg)?;
    let gateway = gateway_for(&cfg)?;
    let store = store_for(&cfg)?;
    let moderator = Moderator { config: &config, gateway: &gateway, store: &store };

    if let Some(addr) = &args.serve {
        return serve::serve_moderation(addr, &moderator);
    }

    let cases = load_attack_corpus(Path::new(cfg.require("attacks")?))?;
    let outcomes = moderator.moderate_corpus(&cases)?;
    let listing = ModerationListing { model: config.model_id.clone(), cases: outcomes };
    emit(&listing, &args.common)
}

fn cmd_asr(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = SafetyConfig::from_config(&cfg)?;
    let gateway = gateway_for(&cfg)?;
    let store = store_for(&cfg)?;
    let moderator = Moderator { config: &config, gateway: &gateway, store: &store };

    let cases = load_attack_corpus(Path::new(cfg.require("attacks")?))?;
    let mut outcomes = moderator.moderate_corpus(&cases)?;
    let judge_failures = if config.judge.is_some() {
        moderator.judge_outcomes(&mut outcomes)?
    } else {
        0
    };
    let report =
        dipt_core::safety::compute_asr(&config.model_id, outcomes, &config.keywords, judge_failures)?;
    emit(&report, common)
}

fn cmd_enrich(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = ExperimentConfig::from_config(&cfg)?;
    let out = common
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("enrich writes a fine-tune file; pass --out".into()))?;

    let variant: Variant = cfg.get_or("enrich.variant", "dipt_cot").parse()?;
    let max_retries = cfg.get_usize("enrich.max_retries", 2)?;
    let n = cfg.get_usize("enrich.n", 3000)?;

    let samples = load_instruction_dataset(&config.data_path)?;
    let gateway = gateway_for(&cfg)?;
    let store = store_for(&cfg)?;
    let enriched = enrich_dataset(&config, &gateway, &store, &samples, variant, max_retries)?;
    let consistent = enriched.iter().filter(|e| e.gold_consistent).count();
    let metadata = export_finetune_dataset(&enriched, variant, n, out, &config.model_id)?;
    println!(
        "exported {} {} records to {} ({consistent}/{} gold-consistent; metadata {})",
        metadata.n,
        variant,
        out.display(),
        enriched.len(),
        metadata_path(out).display()
    );
    Ok(())
}

fn cmd_mislabel(common: &CommonArgs) -> Result<()> {
    let cfg = assemble_config(common)?;
    let config = ExperimentConfig::from_config(&cfg)?;
    let flagging = MethodSpec::parse(cfg.get_or("mislabel.method", "dipt+cot"))?;
    flagging.validate()?;
    let raters = rater_specs_from_config(&cfg)?;
    let report =
        detect_mislabels(&config, &gateway_for(&cfg)?, &store_for(&cfg)?, &flagging, &raters)?;
    emit(&report, common)
}

fn cmd_cassette(args: &CassetteArgs) -> Result<()> {
    match &args.action {
        CassetteAction::Verify { path } => {
            let cassette = Cassette::load(path)?;
            println!("ok: {} records in {}", cassette.len(), path.display());
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Cmd::Eval(common) => cmd_eval(common),
        Cmd::Stability(common) => cmd_stability(common),
        Cmd::Runtime(common) => cmd_runtime(common),
        Cmd::Decisions(common) => cmd_decisions(common),
        Cmd::Moderate(args) => cmd_moderate(args),
        Cmd::Asr(common) => cmd_asr(common),
        Cmd::Enrich(common) => cmd_enrich(common),
        Cmd::Mislabel(common) => cmd_mislabel(common),
        Cmd::Cassette(args) => cmd_cassette(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_config() { 2 } else { 1 })
        }
    }
}
