//! Template store: bundled templates plus loading from a user directory.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::prompt::template::{InstanceField, OptionStyle, ParaphraseTemplate, TaskTemplate};

/// All task templates known to the run, keyed by dataset id, plus the
/// moderation prompt body.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: BTreeMap<String, TaskTemplate>,
    pub moderation: String,
}

const BUILTIN_MANIFEST: &str = include_str!("../../../../assets/templates/manifest.cfg");
const BUILTIN_MODERATION: &str = include_str!("../../../../assets/templates/moderation.txt");

const BUILTIN_FILES: &[(&str, &str)] = &[
    ("agnews.txt", include_str!("../../../../assets/templates/agnews.txt")),
    ("sst5.txt", include_str!("../../../../assets/templates/sst5.txt")),
    ("dbpedia.txt", include_str!("../../../../assets/templates/dbpedia.txt")),
    ("cosmosqa.txt", include_str!("../../../../assets/templates/cosmosqa.txt")),
    ("trec.txt", include_str!("../../../../assets/templates/trec.txt")),
    ("svamp.txt", include_str!("../../../../assets/templates/svamp.txt")),
    ("truthfulqa.txt", include_str!("../../../../assets/templates/truthfulqa.txt")),
    ("rte.txt", include_str!("../../../../assets/templates/rte.txt")),
    ("openbookqa.txt", include_str!("../../../../assets/templates/openbookqa.txt")),
    ("gsm8k.txt", include_str!("../../../../assets/templates/gsm8k.txt")),
    ("math.txt", include_str!("../../../../assets/templates/math.txt")),
    ("drop.txt", include_str!("../../../../assets/templates/drop.txt")),
    ("gpqa.txt", include_str!("../../../../assets/templates/gpqa.txt")),
    ("coqa.txt", include_str!("../../../../assets/templates/coqa.txt")),
    (
        "paraphrase_cosmosqa.txt",
        include_str!("../../../../assets/templates/paraphrase_cosmosqa.txt"),
    ),
    (
        "paraphrase_rte.txt",
        include_str!("../../../../assets/templates/paraphrase_rte.txt"),
    ),
    (
        "paraphrase_sst5.txt",
        include_str!("../../../../assets/templates/paraphrase_sst5.txt"),
    ),
];

/// Template files end with a trailing newline on disk; the prompt body does
/// not include it.
fn trim_file(text: &str) -> String {
    text.strip_suffix('\n').unwrap_or(text).to_string()
}

fn parse_fields(spec: &str) -> Result<Vec<(String, InstanceField)>> {
    let mut fields = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (marker, field) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad paraphrase_fields entry: {part}")))?;
        let field = match field.trim() {
            "context" => InstanceField::Context,
            "question" => InstanceField::Question,
            other => {
                return Err(Error::Config(format!(
                    "unknown paraphrase field target: {other}"
                )))
            }
        };
        fields.push((marker.trim().to_string(), field));
    }
    if fields.is_empty() {
        return Err(Error::Config("empty paraphrase_fields".into()));
    }
    Ok(fields)
}

fn from_manifest(
    manifest: &Config,
    read_file: &dyn Fn(&str) -> Result<String>,
    moderation: String,
) -> Result<TemplateStore> {
    let mut ids: Vec<String> = manifest
        .keys()
        .filter_map(|k| k.strip_suffix(".file").map(str::to_string))
        .collect();
    ids.sort();
    let mut templates = BTreeMap::new();
    for id in ids {
        let file = manifest.require(&format!("{id}.file"))?;
        let header = trim_file(&read_file(&file)?);
        let option_style = OptionStyle::parse(&manifest.get_or(&format!("{id}.option_style"), "none"))?;
        let sentiment = manifest.get_bool(&format!("{id}.sentiment"), false)?;
        let paraphrase = match manifest.get(&format!("{id}.paraphrase_file")) {
            Some(pfile) => {
                let fields_spec = manifest.require(&format!("{id}.paraphrase_fields"))?;
                Some(ParaphraseTemplate {
                    header: trim_file(&read_file(&pfile)?),
                    fields: parse_fields(&fields_spec)?,
                })
            }
            None => None,
        };
        templates.insert(
            id.clone(),
            TaskTemplate { dataset_id: id, header, option_style, sentiment, paraphrase },
        );
    }
    Ok(TemplateStore { templates, moderation })
}

impl TemplateStore {
    /// The templates bundled with the binary.
    pub fn builtin() -> Self {
        let manifest = Config::parse(BUILTIN_MANIFEST).expect("builtin manifest parses");
        let read = |name: &str| -> Result<String> {
            BUILTIN_FILES
                .iter()
                .find(|(f, _)| *f == name)
                .map(|(_, body)| body.to_string())
                .ok_or_else(|| Error::Config(format!("builtin manifest names missing file {name}")))
        };
        from_manifest(&manifest, &read, trim_file(BUILTIN_MODERATION))
            .expect("builtin templates load")
    }

    /// Load templates from a directory holding `manifest.cfg` and the files
    /// it names. A `moderation.txt` in the directory overrides the bundled
    /// moderation prompt.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.cfg");
        let manifest = Config::load(&manifest_path)?;
        let read = |name: &str| -> Result<String> {
            std::fs::read_to_string(dir.join(name)).map_err(Error::from)
        };
        let moderation_path = dir.join("moderation.txt");
        let moderation = if moderation_path.exists() {
            trim_file(&std::fs::read_to_string(moderation_path)?)
        } else {
            trim_file(BUILTIN_MODERATION)
        };
        from_manifest(&manifest, &read, moderation)
    }

    pub fn get(&self, dataset_id: &str) -> Result<&TaskTemplate> {
        self.templates
            .get(dataset_id)
            .ok_or_else(|| Error::UnsupportedDataset(dataset_id.to_string()))
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
