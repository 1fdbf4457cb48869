//! Batch pipeline: ingest → count → select → fit → correlate → cluster →
//! landscape → export.
//!
//! Every stage reads the verified outputs of its upstream stages, writes
//! its own artifacts atomically under the output directory and records
//! content hashes in `manifest.json`. A stage whose inputs and outputs
//! still match the manifest is skipped.

mod config;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub use config::{FitSection, PipelineConfig, SubtopicConfig, Thresholds, TopicConfig};
pub use manifest::{hash_file, sha256_hex, write_atomic, RunManifest, StageRecord};
pub use stages::{slug, TopicEntry};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Count,
    Select,
    Fit,
    Correlate,
    Cluster,
    Landscape,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Count,
        Stage::Select,
        Stage::Fit,
        Stage::Correlate,
        Stage::Cluster,
        Stage::Landscape,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Count => "count",
            Stage::Select => "select",
            Stage::Fit => "fit",
            Stage::Correlate => "correlate",
            Stage::Cluster => "cluster",
            Stage::Landscape => "landscape",
            Stage::Export => "export",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Count => &[Stage::Ingest],
            Stage::Select => &[Stage::Count],
            Stage::Fit => &[Stage::Select],
            Stage::Correlate => &[Stage::Fit],
            Stage::Cluster => &[Stage::Correlate],
            Stage::Landscape => &[Stage::Correlate, Stage::Cluster],
            Stage::Export => &[Stage::Fit, Stage::Correlate, Stage::Cluster, Stage::Landscape],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::InvalidInput(format!("unknown stage `{s}`")))
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub topic: Option<String>,
    pub out: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    /// `true` when the manifest showed the stage up to date.
    pub skipped: bool,
    pub artifacts: usize,
}

pub struct Pipeline {
    config: PipelineConfig,
    base_dir: PathBuf,
    out_dir: PathBuf,
    ratings: Option<PathBuf>,
}

impl Pipeline {
    /// Relative paths in the configuration resolve against `base_dir`.
    pub fn new(config: PipelineConfig, base_dir: &Path, ratings: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let out_dir = base_dir.join(&config.output_dir);
        Ok(Self { config, base_dir: base_dir.to_path_buf(), out_dir, ratings })
    }

    pub fn from_file(path: &Path, overrides: Overrides) -> Result<Self> {
        let mut config = PipelineConfig::load(path)?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(topic) = overrides.topic {
            config.topic_filter = Some(topic);
        }
        if let Some(out) = overrides.out {
            config.output_dir = out;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        let ratings = overrides.ratings.map(|r| if r.is_absolute() { r } else { std::env::current_dir().unwrap_or_default().join(r) });
        Self::new(config, &base, ratings)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub(crate) fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// Hash of the configuration without the output location.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(&self.config).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        sha256_hex(value.to_string().as_bytes())
    }

    /// Runs the given stage if its inputs or outputs changed.
    pub fn run(&self, stage: Stage) -> Result<StageReport> {
        let started = Instant::now();
        let mut manifest = RunManifest::load_or_default(&self.out_dir)?;
        let mut inputs = BTreeMap::new();
        inputs.insert("config".to_string(), sha256_hex(self.stage_config(stage).to_string().as_bytes()));
        for up in stage.upstream() {
            let record = manifest
                .stages
                .get(up.name())
                .ok_or_else(|| Error::MissingArtifact(format!("{} stage outputs", up.name())))?;
            for (rel, hash) in &record.outputs {
                let path = self.out_dir.join(rel);
                if !path.exists() {
                    return Err(Error::MissingArtifact(rel.clone()));
                }
                if &hash_file(&path)? != hash {
                    return Err(Error::StaleUpstream(rel.clone()));
                }
                inputs.insert(rel.clone(), hash.clone());
            }
        }
        for (key, path) in self.external_inputs(stage) {
            inputs.insert(key, hash_file(&path)?);
        }

        if let Some(record) = manifest.stages.get(stage.name()) {
            if record.inputs == inputs {
                let mut complete = true;
                for (rel, hash) in &record.outputs {
                    let path = self.out_dir.join(rel);
                    if !path.exists() {
                        complete = false;
                    } else if &hash_file(&path)? != hash {
                        return Err(Error::StaleUpstream(rel.clone()));
                    }
                }
                if complete {
                    self.record_timing(stage, started)?;
                    return Ok(StageReport { stage, skipped: true, artifacts: record.outputs.len() });
                }
            }
        }

        let files = self.execute(stage)?;
        let mut outputs = BTreeMap::new();
        for (rel, bytes) in &files {
            write_atomic(&self.out_dir.join(rel), bytes)?;
            outputs.insert(rel.clone(), sha256_hex(bytes));
        }
        if let Some(old) = manifest.stages.get(stage.name()) {
            for rel in old.outputs.keys().filter(|rel| !outputs.contains_key(*rel)) {
                let _ = std::fs::remove_file(self.out_dir.join(rel));
            }
        }
        let artifacts = outputs.len();
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        manifest.config_hash = self.config_hash();
        manifest.stages.insert(stage.name().to_string(), StageRecord { inputs, outputs });
        manifest.save(&self.out_dir)?;
        self.record_timing(stage, started)?;
        Ok(StageReport { stage, skipped: false, artifacts })
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        Stage::ALL.into_iter().map(|s| self.run(s)).collect()
    }

    fn record_timing(&self, stage: Stage, started: Instant) -> Result<()> {
        let path = self.out_dir.join("timings.json");
        let mut timings: BTreeMap<String, f64> =
            std::fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or_default();
        timings.insert(stage.name().to_string(), started.elapsed().as_secs_f64());
        let text = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
        write_atomic(&path, text.as_bytes())
    }

    /// The configuration values a stage depends on.
    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.config;
        let t = &c.thresholds;
        let topics: Vec<serde_json::Value> = c
            .topics
            .iter()
            .map(|tc| serde_json::json!({"id": tc.id, "subtopics": tc.subtopics, "include": tc.include_path, "exclude": tc.exclude_path}))
            .collect();
        match stage {
            Stage::Ingest => serde_json::json!({
                "corpus": c.corpus_path, "spelling": c.spelling_path, "abbreviations": c.abbreviations_path,
                "min_words": c.min_words, "topic_filter": c.topic_filter, "topics": topics,
            }),
            Stage::Count => serde_json::json!({"common_pool": t.common_pool, "subsume": t.subsume}),
            Stage::Select => serde_json::json!({
                "dominate": t.dominate, "candidates": t.candidates, "blacklist": c.blacklist_path,
                "identifiers": c.identifiers_path, "topics": topics, "fit": c.fit, "seed": c.seed,
                "components": c.components, "stirling": t.stirling,
            }),
            Stage::Fit => serde_json::json!({
                "fit": c.fit, "seed": c.seed, "components": c.components, "thresholds": t,
            }),
            Stage::Correlate => serde_json::json!({}),
            Stage::Cluster => serde_json::json!({"left_right_topic": c.left_right_topic}),
            Stage::Landscape => serde_json::json!({"anchors": c.anchors}),
            Stage::Export => serde_json::json!({"ratings": self.ratings.is_some()}),
        }
    }

    /// Files outside the output directory that a stage reads.
    fn external_inputs(&self, stage: Stage) -> Vec<(String, PathBuf)> {
        let c = &self.config;
        let file = |p: &Path| (format!("file:{}", p.display()), self.resolve(p));
        let mut out = Vec::new();
        match stage {
            Stage::Ingest => {
                out.push(file(&c.corpus_path));
                out.extend(c.spelling_path.as_deref().map(file));
                out.extend(c.abbreviations_path.as_deref().map(file));
            }
            Stage::Select => {
                out.extend(c.blacklist_path.as_deref().map(file));
                out.extend(c.identifiers_path.as_deref().map(file));
                for tc in &c.topics {
                    out.extend(tc.include_path.as_deref().map(file));
                    out.extend(tc.exclude_path.as_deref().map(file));
                }
            }
            Stage::Export => {
                if let Some(r) = &self.ratings {
                    out.push(("file:ratings".to_string(), r.clone()));
                }
            }
            _ => {}
        }
        out
    }

    fn execute(&self, stage: Stage) -> Result<Vec<(String, Vec<u8>)>> {
        match stage {
            Stage::Ingest => stages::ingest(self),
            Stage::Count => stages::count(self),
            Stage::Select => stages::select(self),
            Stage::Fit => stages::fit(self),
            Stage::Correlate => stages::correlate(self),
            Stage::Cluster => stages::cluster(self),
            Stage::Landscape => stages::landscape(self),
            Stage::Export => stages::export(self, self.ratings.as_deref()),
        }
    }

    pub(crate) fn read_artifact(&self, rel: &str) -> Result<String> {
        let path = self.out_dir.join(rel);
        if !path.exists() {
            return Err(Error::MissingArtifact(rel.to_string()));
        }
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }

    pub(crate) fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let text = self.read_artifact(rel)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { what: rel.to_string(), line: e.line(), message: e.to_string() })
    }
}
