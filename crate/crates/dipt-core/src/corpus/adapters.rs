//! Source-layout adapters. Each adapter converts one published dataset
//! layout into normalized TaskInstance records; downstream tooling only
//! ever reads the normalized form.
//!
//! Instances get content-derived ids (dataset prefix plus a hash of the
//! salient fields) unless the source carries its own id column, so sampling
//! stays stable when a source file is re-ordered. Exact duplicate rows
//! therefore surface as duplicate-id schema errors instead of silently
//! inflating the corpus.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::corpus::svamp::svamp_make_multichoice;
use crate::corpus::{Metric, Option_, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Adapter ids accepted by `load_dataset`.
pub const ADAPTERS: &[&str] = &[
    "normalized", "agnews", "sst5", "dbpedia", "cosmosqa", "trec", "svamp", "truthfulqa",
    "rte", "drop", "math", "math:all", "gpqa", "openbookqa", "gsm8k", "coqa",
];

/// Load and normalize a dataset file, then check corpus-wide invariants.
pub fn load_dataset(path: &Path, adapter_id: &str) -> Result<Vec<TaskInstance>> {
    let instances = match adapter_id {
        "normalized" => load_normalized(path),
        "agnews" => load_agnews(path),
        "sst5" => load_sst5(path),
        "dbpedia" => load_dbpedia(path),
        "cosmosqa" => load_cosmosqa(path),
        "trec" => load_trec(path),
        "svamp" => load_svamp(path),
        "truthfulqa" => load_truthfulqa(path),
        "rte" => load_rte(path),
        "drop" => load_drop(path),
        "math" => load_math(path, true),
        "math:all" => load_math(path, false),
        "gpqa" => load_gpqa(path),
        "openbookqa" => load_openbookqa(path),
        "gsm8k" => load_gsm8k(path),
        "coqa" => load_coqa(path),
        other => Err(Error::UnsupportedDataset(format!("no adapter named `{other}`"))),
    }?;
    let mut seen = BTreeSet::new();
    for (idx, instance) in instances.iter().enumerate() {
        instance.validate(idx + 1)?;
        if !seen.insert(instance.id.clone()) {
            return Err(Error::Schema {
                row: idx + 1,
                message: format!("duplicate id `{}`", instance.id),
            });
        }
    }
    Ok(instances)
}

/// One instance per line in the interchange format.
pub fn write_normalized(instances: &[TaskInstance]) -> String {
    let mut out = String::new();
    for instance in instances {
        out.push_str(&serde_json::to_string(instance).expect("instance serializes"));
        out.push('\n');
    }
    out
}

pub fn save_normalized(instances: &[TaskInstance], path: &Path) -> Result<()> {
    std::fs::write(path, write_normalized(instances))?;
    Ok(())
}

fn load_normalized(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let instance: TaskInstance = serde_json::from_str(line).map_err(|e| Error::Schema {
            row: idx + 1,
            message: e.to_string(),
        })?;
        instances.push(instance);
    }
    Ok(instances)
}

fn content_id(dataset: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("{dataset}-{hex}")
}

fn schema(row: usize, message: impl Into<String>) -> Error {
    Error::Schema { row, message: message.into() }
}

fn label_options(labels: &[&str]) -> Vec<Option_> {
    labels
        .iter()
        .map(|l| Option_ { label: (*l).into(), text: (*l).into() })
        .collect()
}

// --- CSV helpers -----------------------------------------------------------

fn csv_records(path: &Path, delimiter: u8) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .from_path(path)?;
    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record.map_err(|e| Error::Input(e.to_string()))?);
    }
    Ok(records)
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<&'a str> {
    record
        .get(idx)
        .ok_or_else(|| schema(row, format!("missing column {idx} ({name})")))
}

/// Column lookup for header-carrying CSVs.
struct Columns {
    header: csv::StringRecord,
}

impl Columns {
    fn new(header: csv::StringRecord) -> Self {
        Self { header }
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Input(format!("missing column `{name}` in header")))
    }

    fn get<'a>(&self, record: &'a csv::StringRecord, name: &str, row: usize) -> Result<&'a str> {
        field(record, self.index(name)?, row, name)
    }
}

// --- AG News ---------------------------------------------------------------

const AGNEWS_CLASSES: [(&str, &str); 4] = [
    ("World", "World"),
    ("Sport", "Sport"),
    ("Business", "Business"),
    ("Sci/Tech", "Science/Technology"),
];

fn agnews_label(raw: &str, row: usize) -> Result<String> {
    let label = match raw.trim() {
        "1" | "World" => "World",
        "2" | "Sport" | "Sports" => "Sport",
        "3" | "Business" => "Business",
        "4" | "Sci/Tech" | "Science/Technology" => "Sci/Tech",
        other => return Err(schema(row, format!("unknown AG News class `{other}`"))),
    };
    Ok(label.to_string())
}

fn load_agnews(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b',')?;
    let mut instances = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        let row = idx + 1;
        if idx == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("class index")) {
            continue;
        }
        let class = field(record, 0, row, "class")?;
        let title = field(record, 1, row, "title")?.trim();
        let description = field(record, 2, row, "description")?.trim();
        let article = match (title.is_empty(), description.is_empty()) {
            (false, false) => format!("{title} {description}"),
            (false, true) => title.to_string(),
            (true, false) => description.to_string(),
            (true, true) => return Err(schema(row, "empty article")),
        };
        instances.push(TaskInstance {
            id: content_id("agnews", &[class, title, description]),
            dataset: "agnews".into(),
            context: Some(article),
            question: String::new(),
            options: AGNEWS_CLASSES
                .iter()
                .map(|(l, t)| Option_ { label: (*l).into(), text: (*t).into() })
                .collect(),
            gold: vec![agnews_label(class, row)?],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top2,
        });
    }
    Ok(instances)
}

// --- SST-5 -----------------------------------------------------------------

const SST5_LABELS: [&str; 5] = ["very positive", "positive", "neutral", "negative", "very negative"];

fn sst5_label(raw: &str, row: usize) -> Result<String> {
    let label = match raw.trim().to_lowercase().as_str() {
        "4" | "very positive" => "very positive",
        "3" | "positive" => "positive",
        "2" | "neutral" => "neutral",
        "1" | "negative" => "negative",
        "0" | "very negative" => "very negative",
        other => return Err(schema(row, format!("unknown SST-5 label `{other}`"))),
    };
    Ok(label.to_string())
}

fn load_sst5(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b'\t')?;
    let mut instances = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        let row = idx + 1;
        if idx == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("label")) {
            continue;
        }
        let label = field(record, 0, row, "label")?;
        let sentence = field(record, 1, row, "sentence")?.trim();
        if sentence.is_empty() {
            return Err(schema(row, "empty review"));
        }
        instances.push(TaskInstance {
            id: content_id("sst5", &[label, sentence]),
            dataset: "sst5".into(),
            context: Some(sentence.to_string()),
            question: String::new(),
            options: label_options(&SST5_LABELS),
            gold: vec![sst5_label(label, row)?],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top2,
        });
    }
    Ok(instances)
}

// --- DBPedia ---------------------------------------------------------------

const DBPEDIA_CLASSES: [&str; 14] = [
    "Company",
    "Educational Institution",
    "Artist",
    "Athlete",
    "Office Holder",
    "Mean Of Transportation",
    "Building",
    "Natural Place",
    "Village",
    "Animal",
    "Plant",
    "Album",
    "Film",
    "Written Work",
];

fn dbpedia_label(raw: &str, row: usize) -> Result<String> {
    let raw = raw.trim();
    if let Ok(n) = raw.parse::<usize>() {
        return DBPEDIA_CLASSES
            .get(n.wrapping_sub(1))
            .map(|c| c.to_string())
            .ok_or_else(|| schema(row, format!("DBPedia class index {n} out of range")));
    }
    let squeeze = |s: &str| s.replace(' ', "").to_lowercase();
    DBPEDIA_CLASSES
        .iter()
        .find(|c| squeeze(c) == squeeze(raw))
        .map(|c| c.to_string())
        .ok_or_else(|| schema(row, format!("unknown DBPedia class `{raw}`")))
}

fn load_dbpedia(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b',')?;
    let mut instances = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        let row = idx + 1;
        if idx == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("class")) {
            continue;
        }
        let class = field(record, 0, row, "class")?;
        let title = field(record, 1, row, "title")?.trim();
        let content = field(record, 2, row, "content")?.trim();
        instances.push(TaskInstance {
            id: content_id("dbpedia", &[class, title, content]),
            dataset: "dbpedia".into(),
            context: Some(title.to_string()),
            question: content.to_string(),
            options: label_options(&DBPEDIA_CLASSES),
            gold: vec![dbpedia_label(class, row)?],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top1,
        });
    }
    Ok(instances)
}

// --- CosmosQA --------------------------------------------------------------

fn load_cosmosqa(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b',')?;
    let Some((header, rows)) = records.split_first() else {
        return Ok(Vec::new());
    };
    let columns = Columns::new(header.clone());
    let mut instances = Vec::new();
    for (idx, record) in rows.iter().enumerate() {
        let row = idx + 2;
        let id = columns.get(record, "id", row)?;
        let label: usize = columns
            .get(record, "label", row)?
            .trim()
            .parse()
            .map_err(|_| schema(row, "label must be 0-3"))?;
        if label > 3 {
            return Err(schema(row, format!("label {label} out of range")));
        }
        let options: Vec<Option_> = (0..4)
            .map(|i| {
                columns
                    .get(record, &format!("answer{i}"), row)
                    .map(|text| Option_ { label: (i + 1).to_string(), text: text.to_string() })
            })
            .collect::<Result<_>>()?;
        instances.push(TaskInstance {
            id: format!("cosmosqa-{id}"),
            dataset: "cosmosqa".into(),
            context: Some(columns.get(record, "context", row)?.to_string()),
            question: columns.get(record, "question", row)?.to_string(),
            options,
            gold: vec![(label + 1).to_string()],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top1,
        });
    }
    Ok(instances)
}

// --- TREC ------------------------------------------------------------------

const TREC_CLASSES: [&str; 6] = [
    "Abbreviation",
    "Entity",
    "Description and abstract concept",
    "Human being",
    "Location",
    "Numeric value",
];

fn trec_label(coarse: &str, row: usize) -> Result<String> {
    let label = match coarse {
        "ABBR" => "Abbreviation",
        "ENTY" => "Entity",
        "DESC" => "Description and abstract concept",
        "HUM" => "Human being",
        "LOC" => "Location",
        "NUM" => "Numeric value",
        other => return Err(schema(row, format!("unknown TREC class `{other}`"))),
    };
    Ok(label.to_string())
}

fn load_trec(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (tag, question) = line
            .split_once(' ')
            .ok_or_else(|| schema(row, "expected `COARSE:fine question text`"))?;
        let coarse = tag
            .split_once(':')
            .map(|(c, _)| c)
            .ok_or_else(|| schema(row, "label is not COARSE:fine"))?;
        instances.push(TaskInstance {
            id: content_id("trec", &[tag, question]),
            dataset: "trec".into(),
            context: None,
            question: question.trim().to_string(),
            options: label_options(&TREC_CLASSES),
            gold: vec![trec_label(coarse, row)?],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top2,
        });
    }
    Ok(instances)
}

// --- SVAMP -----------------------------------------------------------------

#[derive(Deserialize)]
struct SvampRow {
    #[serde(alias = "ID")]
    id: String,
    #[serde(alias = "Body")]
    body: String,
    #[serde(alias = "Question")]
    question: String,
    #[serde(alias = "Answer")]
    answer: f64,
}

fn load_svamp(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<SvampRow> =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("SVAMP JSON: {e}")))?;
    let mut instances = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        if !row.answer.is_finite() {
            return Err(schema(idx + 1, "answer is not finite"));
        }
        let seed = derive_seed(0, &format!("svamp-options/{}", row.id));
        let (options, gold_index) = svamp_make_multichoice(row.answer, seed);
        let gold = options[gold_index].label.clone();
        instances.push(TaskInstance {
            id: format!("svamp-{}", row.id),
            dataset: "svamp".into(),
            context: Some(row.body.trim().to_string()),
            question: row.question.trim().to_string(),
            options,
            gold: vec![gold],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top1,
        });
    }
    Ok(instances)
}

// --- TruthfulQA ------------------------------------------------------------

fn load_truthfulqa(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b',')?;
    let Some((header, rows)) = records.split_first() else {
        return Ok(Vec::new());
    };
    let columns = Columns::new(header.clone());
    let mut instances = Vec::new();
    for (idx, record) in rows.iter().enumerate() {
        let row = idx + 2;
        let question = columns.get(record, "Question", row)?.trim().to_string();
        let best = columns.get(record, "Best Answer", row)?.trim().to_string();
        let incorrect: Vec<String> = columns
            .get(record, "Incorrect Answers", row)?
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if incorrect.len() < 3 {
            return Err(schema(
                row,
                format!("need 3 incorrect answers to build 4 options, found {}", incorrect.len()),
            ));
        }
        let id = content_id("truthfulqa", &[&question]);
        let mut texts = vec![best.clone()];
        texts.extend(incorrect.into_iter().take(3));
        let seed = derive_seed(0, &format!("truthfulqa-options/{id}"));
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        texts.shuffle(&mut rng);
        let gold_index = texts.iter().position(|t| *t == best).unwrap();
        instances.push(TaskInstance {
            id,
            dataset: "truthfulqa".into(),
            context: None,
            question,
            options: texts
                .into_iter()
                .enumerate()
                .map(|(i, text)| Option_ { label: (i + 1).to_string(), text })
                .collect(),
            gold: vec![(gold_index + 1).to_string()],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top1,
        });
    }
    Ok(instances)
}

// --- RTE -------------------------------------------------------------------

fn rte_label(raw: &str, row: usize) -> Result<String> {
    match raw.trim().to_lowercase().as_str() {
        "entailment" | "yes" => Ok("Yes".into()),
        "not_entailment" | "no" => Ok("No".into()),
        other => Err(schema(row, format!("unknown RTE label `{other}`"))),
    }
}

fn load_rte(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b'\t')?;
    let mut instances = Vec::new();
    let mut explicit_index: Option<usize> = None;
    let mut start = 0;
    let mut cols = (0usize, 1usize, 2usize);
    if let Some(first) = records.first() {
        let header: Vec<String> = first.iter().map(str::to_lowercase).collect();
        if header.iter().any(|h| h == "sentence1") {
            let pos = |name: &str| header.iter().position(|h| h == name);
            cols = (
                pos("sentence1").unwrap(),
                pos("sentence2").ok_or_else(|| Error::Input("missing sentence2".into()))?,
                pos("label").ok_or_else(|| Error::Input("missing label".into()))?,
            );
            explicit_index = pos("index");
            start = 1;
        }
    }
    for (idx, record) in records.iter().enumerate().skip(start) {
        let row = idx + 1;
        let premise = field(record, cols.0, row, "sentence1")?.trim();
        let hypothesis = field(record, cols.1, row, "sentence2")?.trim();
        let label = field(record, cols.2, row, "label")?;
        let id = match explicit_index {
            Some(col) => format!("rte-{}", field(record, col, row, "index")?),
            None => content_id("rte", &[premise, hypothesis]),
        };
        instances.push(TaskInstance {
            id,
            dataset: "rte".into(),
            context: Some(premise.to_string()),
            question: hypothesis.to_string(),
            options: label_options(&["Yes", "No"]),
            gold: vec![rte_label(label, row)?],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top1,
        });
    }
    Ok(instances)
}

// --- DROP ------------------------------------------------------------------

#[derive(Deserialize)]
struct DropPassage {
    passage: String,
    qa_pairs: Vec<DropQa>,
}

#[derive(Deserialize)]
struct DropQa {
    question: String,
    query_id: String,
    answer: DropAnswer,
    #[serde(default)]
    validated_answers: Vec<DropAnswer>,
}

#[derive(Deserialize, Default)]
struct DropAnswer {
    #[serde(default)]
    number: String,
    #[serde(default)]
    spans: Vec<String>,
    #[serde(default)]
    date: DropDate,
}

#[derive(Deserialize, Default)]
struct DropDate {
    #[serde(default)]
    day: String,
    #[serde(default)]
    month: String,
    #[serde(default)]
    year: String,
}

fn drop_gold(answer: &DropAnswer, gold: &mut Vec<String>) {
    let mut push = |s: String| {
        if !s.is_empty() && !gold.contains(&s) {
            gold.push(s);
        }
    };
    push(answer.number.trim().to_string());
    for span in &answer.spans {
        push(span.trim().to_string());
    }
    if answer.spans.len() > 1 {
        push(answer.spans.iter().map(|s| s.trim()).collect::<Vec<_>>().join(", "));
    }
    let date: Vec<&str> = [&answer.date.day, &answer.date.month, &answer.date.year]
        .into_iter()
        .map(String::as_str)
        .filter(|s| !s.is_empty())
        .collect();
    if !date.is_empty() {
        push(date.join(" "));
    }
}

fn load_drop(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let passages: std::collections::BTreeMap<String, DropPassage> =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("DROP JSON: {e}")))?;
    let mut instances = Vec::new();
    let mut row = 0;
    for passage in passages.values() {
        for qa in &passage.qa_pairs {
            row += 1;
            let mut gold = Vec::new();
            drop_gold(&qa.answer, &mut gold);
            for validated in &qa.validated_answers {
                drop_gold(validated, &mut gold);
            }
            if gold.is_empty() {
                return Err(schema(row, format!("question {} has no answer", qa.query_id)));
            }
            instances.push(TaskInstance {
                id: format!("drop-{}", qa.query_id),
                dataset: "drop".into(),
                context: Some(passage.passage.clone()),
                question: qa.question.clone(),
                options: vec![],
                gold,
                task_kind: TaskKind::Freeform,
                metric: Metric::Exact,
            });
        }
    }
    Ok(instances)
}

// --- MATH ------------------------------------------------------------------

#[derive(Deserialize)]
struct MathRow {
    problem: String,
    #[serde(default)]
    level: String,
    solution: String,
}

fn extract_boxed(solution: &str) -> Option<String> {
    let start = solution.rfind("\\boxed{")? + "\\boxed{".len();
    let mut depth = 1;
    for (offset, c) in solution[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(solution[start..start + offset].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

fn load_math(path: &Path, hard_levels_only: bool) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: MathRow = serde_json::from_str(line)
            .map_err(|e| schema(row, format!("MATH record: {e}")))?;
        if hard_levels_only {
            let level: Option<u32> =
                item.level.rsplit(' ').next().and_then(|n| n.parse().ok());
            if !matches!(level, Some(4) | Some(5)) {
                continue;
            }
        }
        let gold = extract_boxed(&item.solution)
            .ok_or_else(|| schema(row, "solution has no \\boxed{...} answer"))?;
        instances.push(TaskInstance {
            id: content_id("math", &[&item.problem]),
            dataset: "math".into(),
            context: None,
            question: item.problem.trim().to_string(),
            options: vec![],
            gold: vec![gold],
            task_kind: TaskKind::Freeform,
            metric: Metric::Exact,
        });
    }
    Ok(instances)
}

// --- GPQA ------------------------------------------------------------------

fn load_gpqa(path: &Path) -> Result<Vec<TaskInstance>> {
    let records = csv_records(path, b',')?;
    let Some((header, rows)) = records.split_first() else {
        return Ok(Vec::new());
    };
    let columns = Columns::new(header.clone());
    let record_id = columns.index("Record ID").ok();
    let mut instances = Vec::new();
    for (idx, record) in rows.iter().enumerate() {
        let row = idx + 2;
        let question = columns.get(record, "Question", row)?.trim().to_string();
        let answer = columns.get(record, "Correct Answer", row)?.trim().to_string();
        let id = match record_id {
            Some(col) => format!("gpqa-{}", field(record, col, row, "Record ID")?),
            None => content_id("gpqa", &[&question]),
        };
        instances.push(TaskInstance {
            id,
            dataset: "gpqa".into(),
            context: None,
            question,
            options: vec![],
            gold: vec![answer],
            task_kind: TaskKind::Freeform,
            metric: Metric::Exact,
        });
    }
    Ok(instances)
}

// --- OpenbookQA --------------------------------------------------------------

#[derive(Deserialize)]
struct ObqaRow {
    id: String,
    question: ObqaQuestion,
    #[serde(rename = "answerKey")]
    answer_key: String,
}

#[derive(Deserialize)]
struct ObqaQuestion {
    stem: String,
    choices: Vec<ObqaChoice>,
}

#[derive(Deserialize)]
struct ObqaChoice {
    text: String,
    label: String,
}

fn load_openbookqa(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: ObqaRow = serde_json::from_str(line)
            .map_err(|e| schema(row, format!("OpenbookQA record: {e}")))?;
        instances.push(TaskInstance {
            id: format!("openbookqa-{}", item.id),
            dataset: "openbookqa".into(),
            context: None,
            question: item.question.stem,
            options: item
                .question
                .choices
                .into_iter()
                .map(|c| Option_ { label: c.label, text: c.text })
                .collect(),
            gold: vec![item.answer_key],
            task_kind: TaskKind::Multichoice,
            metric: Metric::Top1,
        });
    }
    Ok(instances)
}

// --- GSM8K -------------------------------------------------------------------

#[derive(Deserialize)]
struct Gsm8kRow {
    question: String,
    answer: String,
}

fn load_gsm8k(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item: Gsm8kRow = serde_json::from_str(line)
            .map_err(|e| schema(row, format!("GSM8K record: {e}")))?;
        let gold = item
            .answer
            .rsplit_once("#### ")
            .map(|(_, tail)| tail.trim().to_string())
            .filter(|g| !g.is_empty())
            .ok_or_else(|| schema(row, "answer has no `#### <value>` line"))?;
        instances.push(TaskInstance {
            id: content_id("gsm8k", &[&item.question]),
            dataset: "gsm8k".into(),
            context: None,
            question: item.question.trim().to_string(),
            options: vec![],
            gold: vec![gold],
            task_kind: TaskKind::Freeform,
            metric: Metric::Exact,
        });
    }
    Ok(instances)
}

// --- CoQA --------------------------------------------------------------------

#[derive(Deserialize)]
struct CoqaFile {
    data: Vec<CoqaDialogue>,
}

#[derive(Deserialize)]
struct CoqaDialogue {
    #[serde(default)]
    id: Option<String>,
    story: String,
    questions: Vec<CoqaTurn>,
    answers: Vec<CoqaAnswer>,
}

#[derive(Deserialize)]
struct CoqaTurn {
    input_text: String,
}

#[derive(Deserialize)]
struct CoqaAnswer {
    #[serde(default)]
    span_text: String,
    input_text: String,
}

fn load_coqa(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = std::fs::read_to_string(path)?;
    let file: CoqaFile =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("CoQA JSON: {e}")))?;
    let mut instances = Vec::new();
    for (idx, dialogue) in file.data.iter().enumerate() {
        let row = idx + 1;
        // Single-turn evaluation: first question of each dialogue only, so
        // no conversation history is required.
        let (Some(question), Some(answer)) = (dialogue.questions.first(), dialogue.answers.first())
        else {
            return Err(schema(row, "dialogue has no turns"));
        };
        let mut gold = vec![answer.input_text.trim().to_string()];
        let span = answer.span_text.trim().to_string();
        if !span.is_empty() && !gold.contains(&span) {
            gold.push(span);
        }
        gold.retain(|g| !g.is_empty());
        if gold.is_empty() {
            return Err(schema(row, "first turn has an empty answer"));
        }
        let id = match &dialogue.id {
            Some(id) => format!("coqa-{id}"),
            None => content_id("coqa", &[&dialogue.story]),
        };
        instances.push(TaskInstance {
            id,
            dataset: "coqa".into(),
            context: Some(dialogue.story.clone()),
            question: question.input_text.trim().to_string(),
            options: vec![],
            gold,
            task_kind: TaskKind::Freeform,
            metric: Metric::Exact,
        });
    }
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxed_extraction_handles_nesting() {
        assert_eq!(extract_boxed("so \\boxed{42}."), Some("42".into()));
        assert_eq!(
            extract_boxed("thus \\boxed{\\frac{1}{2}} done"),
            Some("\\frac{1}{2}".into())
        );
        assert_eq!(extract_boxed("first \\boxed{1} then \\boxed{2}"), Some("2".into()));
        assert_eq!(extract_boxed("no box"), None);
        assert_eq!(extract_boxed("\\boxed{unclosed"), None);
    }

    #[test]
    fn unknown_adapter_is_rejected() {
        let err = load_dataset(Path::new("/dev/null"), "mystery").unwrap_err();
        assert!(matches!(err, Error::UnsupportedDataset(_)));
    }

    #[test]
    fn trec_label_mapping() {
        assert_eq!(trec_label("HUM", 1).unwrap(), "Human being");
        assert_eq!(trec_label("NUM", 1).unwrap(), "Numeric value");
        assert!(trec_label("XYZ", 1).is_err());
    }
}
