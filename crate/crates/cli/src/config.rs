//! Experiment configuration for the `grid` command.
//!
//! Relative paths inside a config file are resolved against the directory
//! that holds the file. The accepted document is described by
//! `schema/experiment.schema.json`; unknown fields are rejected.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scorefuse::protocol::{ExperimentKind, MethodSpec, ScoreSource, ValidationScope};
use scorefuse::scorebase::{align_tables, load_score_table, Partition};
use scorefuse::{AlignedScores, Error, Result, ScoreRange, SettingDescriptor};

use crate::artifact::{in_file, sha256_file};

fn default_precision() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub kinds: BTreeSet<ExperimentKind>,
    #[serde(default)]
    pub validation_scope: ValidationScope,
    /// Decimals for percentages in CSV summaries.
    #[serde(default = "default_precision")]
    pub report_precision: usize,
    pub scores: Vec<ScoreEntry>,
    pub methods: Vec<MethodSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// One score file: a matcher's comparisons for one setting and partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub matcher_id: String,
    pub setting: SettingDescriptor,
    pub partition: Partition,
    pub path: PathBuf,
}

impl ExperimentConfig {
    /// Read and check a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
        config.validate()?;
        config.base_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::contract("config lists no experiment kinds"));
        }
        if self.methods.is_empty() {
            return Err(Error::contract("config lists no methods"));
        }
        if self.report_precision > 12 {
            return Err(Error::contract("report_precision must be at most 12"));
        }
        let mut seen = HashSet::new();
        for e in &self.scores {
            if !seen.insert((&e.matcher_id, &e.setting, e.partition)) {
                return Err(Error::contract(format!(
                    "two score files for matcher `{}`, {} {}",
                    e.matcher_id,
                    e.setting,
                    e.partition.as_str()
                )));
            }
        }
        let known: HashSet<&String> = self.scores.iter().map(|e| &e.matcher_id).collect();
        let mut ids = HashSet::new();
        for m in &self.methods {
            m.validate()?;
            if !ids.insert(&m.method_id) {
                return Err(Error::contract(format!("method id `{}` appears twice", m.method_id)));
            }
            if let Some(missing) = m.matchers.iter().find(|id| !known.contains(id)) {
                return Err(Error::contract(format!(
                    "method `{}` uses matcher `{missing}` with no score files",
                    m.method_id
                )));
            }
        }
        if self.settings().is_empty() {
            return Err(Error::contract("config has no test score files"));
        }
        Ok(())
    }

    /// Settings with test scores, sorted.
    pub fn settings(&self) -> Vec<SettingDescriptor> {
        let set: BTreeSet<&SettingDescriptor> = self
            .scores
            .iter()
            .filter(|e| e.partition == Partition::Test)
            .map(|e| &e.setting)
            .collect();
        set.into_iter().cloned().collect()
    }
}

type CellKey = (SettingDescriptor, Partition);

/// Score files on disk, grouped by (setting, partition).
pub struct FileSource {
    cells: BTreeMap<CellKey, Vec<(String, PathBuf)>>,
    digests: BTreeMap<CellKey, BTreeMap<String, String>>,
}

impl FileSource {
    /// Index the config's score files and digest each one up front. Digests
    /// are labelled with the paths as written in the config.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut cells: BTreeMap<CellKey, Vec<(String, PathBuf)>> = BTreeMap::new();
        let mut digests: BTreeMap<CellKey, BTreeMap<String, String>> = BTreeMap::new();
        for e in &config.scores {
            let key = (e.setting.clone(), e.partition);
            let path = config.resolve(&e.path);
            digests
                .entry(key.clone())
                .or_default()
                .insert(e.path.display().to_string(), sha256_file(&path)?);
            cells.entry(key).or_default().push((e.matcher_id.clone(), path));
        }
        Ok(FileSource { cells, digests })
    }
}

impl ScoreSource for FileSource {
    fn load(&self, setting: &SettingDescriptor, partition: Partition) -> Result<AlignedScores> {
        let files = self.cells.get(&(setting.clone(), partition)).ok_or_else(|| {
            Error::Lookup(format!("no {} score files for {setting}", partition.as_str()))
        })?;
        let tables = files
            .iter()
            .map(|(matcher, path)| {
                let context = || path.display().to_string();
                let table = load_score_table(path, ScoreRange::UNIT).map_err(in_file(path))?;
                if table.matcher_id() != matcher {
                    return Err(Error::Consistency(format!(
                        "file holds matcher `{}`, config says `{matcher}`",
                        table.matcher_id()
                    ))
                    .context(context()));
                }
                if let Some(r) = table.records().iter().find(|r| &r.setting != setting) {
                    return Err(Error::Consistency(format!(
                        "comparison ({}, {}) has setting {}, config says {setting}",
                        r.probe_id, r.reference_id, r.setting
                    ))
                    .context(context()));
                }
                Ok(table)
            })
            .collect::<Result<Vec<_>>>()?;
        align_tables(&tables)
    }

    fn digests(&self, setting: &SettingDescriptor, partition: Partition) -> BTreeMap<String, String> {
        self.digests
            .get(&(setting.clone(), partition))
            .cloned()
            .unwrap_or_default()
    }
}
