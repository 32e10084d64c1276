//! Key-value configuration files.
//!
//! The format is plain text, one `key = value` pair per line. Keys are
//! lowercase dotted identifiers (`decision.verify`), values are taken
//! verbatim after trimming surrounding whitespace. Blank lines and lines
//! starting with `#` are ignored. There is no quoting or escaping; a value
//! runs to the end of the line.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// An ordered key-value map parsed from a config file or CLI overrides.
#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse config text. Later assignments to the same key win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    idx + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", idx + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply `key=value` override pairs on top of the parsed file.
    pub fn apply_overrides<'a, I: IntoIterator<Item = &'a str>>(&mut self, pairs: I) -> Result<()> {
        for pair in pairs {
            let Some((key, value)) = pair.split_once('=') else {
                return Err(Error::Config(format!(
                    "override `{pair}` is not of the form key=value"
                )));
            };
            self.values
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    /// Reject keys that are not in the given registry. Dataset manifests and
    /// other open-schema files skip this; experiment configs do not.
    pub fn check_known_keys(&self, registry: &[KeySpec]) -> Result<()> {
        for key in self.values.keys() {
            if !registry.iter().any(|spec| spec.matches(key)) {
                return Err(Error::Config(format!("unknown config key: {key}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required config key: {key}")))
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got `{v}`"))),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got `{v}`"))),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got `{v}`"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("on") | Some("yes") | Some("1") => Ok(true),
            Some("false") | Some("off") | Some("no") | Some("0") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "{key}: expected on/off, got `{v}`"
            ))),
        }
    }

    /// Comma-separated list value, items trimmed, empties dropped.
    pub fn get_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }
}

/// One entry of the config-key registry: name, default, help line.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

impl KeySpec {
    /// `mislabel.rater.*` style entries match any key under the prefix.
    fn matches(&self, key: &str) -> bool {
        match self.key.strip_suffix(".*") {
            Some(prefix) => key.starts_with(prefix) && key.len() > prefix.len(),
            None => self.key == key,
        }
    }
}

/// Every experiment config key the harness understands.
pub const KEY_REGISTRY: &[KeySpec] = &[
    KeySpec { key: "dataset", default: "", help: "dataset id (agnews, sst5, cosmosqa, ...)" },
    KeySpec { key: "data", default: "", help: "path to the dataset file" },
    KeySpec { key: "adapter", default: "<dataset>", help: "source adapter; `normalized` reads the interchange format" },
    KeySpec { key: "methods", default: "standard", help: "comma list of method specs, first is the delta baseline" },
    KeySpec { key: "model", default: "gpt-4-1106-preview", help: "model id sent on the wire" },
    KeySpec { key: "n_examples", default: "300", help: "evaluation sample size" },
    KeySpec { key: "n_runs", default: "3", help: "number of runs aggregated into mean/std" },
    KeySpec { key: "seed", default: "0", help: "root seed; all subsystem seeds derive from it" },
    KeySpec { key: "seeds", default: "derived", help: "explicit comma list of per-run seeds (length n_runs)" },
    KeySpec { key: "resample_per_run", default: "off", help: "resample items each run instead of re-querying the same set" },
    KeySpec { key: "parallelism", default: "1", help: "max in-flight completion requests" },
    KeySpec { key: "mode", default: "replay", help: "gateway mode: live, record, or replay" },
    KeySpec { key: "cassette", default: "", help: "cassette path (required for record/replay)" },
    KeySpec { key: "templates", default: "builtin", help: "template store directory; `builtin` uses the bundled store" },
    KeySpec { key: "demos", default: "", help: "file of demonstration text prepended verbatim (k-shot ICL)" },
    KeySpec { key: "footer", default: "on", help: "append the machine-parsable final-answer footer" },
    KeySpec { key: "footer.text", default: "End with a line `Final answer: <X>`.", help: "footer wording" },
    KeySpec { key: "decoding.temperature", default: "1", help: "sampling temperature" },
    KeySpec { key: "decoding.top_p", default: "1", help: "nucleus sampling mass" },
    KeySpec { key: "decoding.presence_penalty", default: "0", help: "presence penalty" },
    KeySpec { key: "decoding.frequency_penalty", default: "0", help: "frequency penalty" },
    KeySpec { key: "decoding.max_tokens", default: "unset", help: "completion length cap" },
    KeySpec { key: "decision.repeat", default: "State your final answer again explicitly.", help: "Repeat decision suffix" },
    KeySpec { key: "decision.verify", default: "Verify your decision given the analysis of each option, then state the final answer.", help: "Verify decision suffix" },
    KeySpec { key: "decision.condition_consistency", default: "Check that the chosen answer satisfies every condition stated in the problem, then state the final answer.", help: "Condition-consistency decision suffix" },
    KeySpec { key: "dipt.multichoice", default: "Before choosing the answer, for each option explain if it is possible or not.", help: "perspective instruction for option tasks" },
    KeySpec { key: "dipt.freeform", default: "Before answering, list several distinct methods to solve this problem and work through each.", help: "perspective instruction for freeform tasks" },
    KeySpec { key: "dipt.k_perspectives", default: "Before answering, consider {k} different perspectives or solution paths for this problem and work through each.", help: "perspective instruction when a perspective count is hinted" },
    KeySpec { key: "dipt.sentiment_word", default: "sentiment", help: "word substituted for `option` on sentiment-flagged datasets" },
    KeySpec { key: "stability.n_paraphrases", default: "5", help: "paraphrase iterations per item" },
    KeySpec { key: "stability.pooled", default: "off", help: "pool paraphrased items instead of averaging per-iteration scores" },
    KeySpec { key: "paraphrase.model", default: "<model>", help: "generator model for paraphrases" },
    KeySpec { key: "runtime.perspective_counts", default: "1,2,4,8", help: "K values for the runtime curve" },
    KeySpec { key: "decisions.strategies", default: "default,repeat,verify,condition-consistency", help: "decision strategies swept (first is baseline)" },
    KeySpec { key: "attacks", default: "", help: "attack corpus path (id/family/prompt records)" },
    KeySpec { key: "asr.keywords", default: "builtin", help: "refusal keyword list file; `builtin` uses the bundled list" },
    KeySpec { key: "judge.enabled", default: "off", help: "score answered attack cases with a judge model" },
    KeySpec { key: "judge.model", default: "<model>", help: "judge model id" },
    KeySpec { key: "judge.rubric", default: "builtin", help: "judge rubric file; `builtin` uses the bundled rubric" },
    KeySpec { key: "enrich.variant", default: "dipt_cot", help: "rationale variant: plain, cot, or dipt_cot" },
    KeySpec { key: "enrich.max_retries", default: "2", help: "resampling attempts for gold-inconsistent rationales" },
    KeySpec { key: "enrich.n", default: "3000", help: "records per exported fine-tune file" },
    KeySpec { key: "mislabel.method", default: "dipt+cot", help: "flagging method for mislabel detection" },
    KeySpec { key: "mislabel.rater.*", default: "", help: "raters: `model:<method>` or `file:<votes path>` (need >= 2)" },
    KeySpec { key: "report.traces", default: "on", help: "embed per-example traces in reports" },
    KeySpec { key: "report.sample_std", default: "off", help: "use sample instead of population standard deviation" },
    KeySpec { key: "timeout_seconds", default: "120", help: "HTTP request timeout" },
    KeySpec { key: "retry.max_attempts", default: "5", help: "attempt cap for retryable HTTP failures" },
    KeySpec { key: "retry.initial_delay_ms", default: "1000", help: "first retry delay" },
    KeySpec { key: "retry.factor", default: "2", help: "backoff multiplier between attempts" },
];

/// Registry default for a key, for callers that resolve config values
/// against the registry rather than hardcoding the fallback.
pub fn registry_default(key: &str) -> &'static str {
    KEY_REGISTRY
        .iter()
        .find(|spec| spec.key == key)
        .map(|spec| spec.default)
        .unwrap_or_else(|| panic!("key `{key}` is not in the registry"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_pairs() {
        let cfg = Config::parse("# comment\nfoo = bar\n\n  spaced.key =  value with spaces  \n").unwrap();
        assert_eq!(cfg.get("foo"), Some("bar"));
        assert_eq!(cfg.get("spaced.key"), Some("value with spaces"));
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = Config::parse("foo bar\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn later_assignment_wins() {
        let cfg = Config::parse("k = a\nk = b\n").unwrap();
        assert_eq!(cfg.get("k"), Some("b"));
    }

    #[test]
    fn overrides_apply_after_file() {
        let mut cfg = Config::parse("mode = replay\n").unwrap();
        cfg.apply_overrides(["mode=live"]).unwrap();
        assert_eq!(cfg.get("mode"), Some("live"));
        assert!(cfg.apply_overrides(["notapair"]).is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let cfg = Config::parse("mode = replay\nbogus = 1\n").unwrap();
        let err = cfg.check_known_keys(KEY_REGISTRY).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let cfg = Config::parse("mislabel.rater.alice = file:votes.tsv\n").unwrap();
        cfg.check_known_keys(KEY_REGISTRY).unwrap();
    }

    #[test]
    fn typed_getters() {
        let cfg = Config::parse("a = 3\nb = 0.5\nc = on\nd = x, y ,z\n").unwrap();
        assert_eq!(cfg.get_usize("a", 0).unwrap(), 3);
        assert_eq!(cfg.get_f64("b", 0.0).unwrap(), 0.5);
        assert!(cfg.get_bool("c", false).unwrap());
        assert_eq!(cfg.get_list("d"), vec!["x", "y", "z"]);
        assert_eq!(cfg.get_usize("missing", 7).unwrap(), 7);
        assert!(cfg.get_usize("b", 0).is_err());
    }
}
