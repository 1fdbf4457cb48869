//! Pipeline configuration (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biasmap::Anchors;
use crate::error::{Error, Result};
use crate::poissonfactor::{FitConfig, PlotThresholds, EXP_OVERFLOW_BOUND, MAX_RANK};
use crate::textprep::MIN_WORDS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Containment fraction above which a phrase is subsumed by its parent.
    pub subsume: f64,
    /// Single-source share above which a phrase is dropped.
    pub dominate: f64,
    pub candidates: usize,
    pub common_pool: usize,
    pub phrase_plot: u64,
    pub phrase_plot_small: u64,
    pub source_plot: u64,
    pub small_topic_articles: u64,
    /// Mean above which the likelihood uses the Stirling series.
    pub stirling: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            subsume: 0.70,
            dominate: 0.90,
            candidates: 1000,
            common_pool: 10000,
            phrase_plot: 200,
            phrase_plot_small: 100,
            source_plot: 200,
            small_topic_articles: 15000,
            stirling: 50.0,
        }
    }
}

impl Thresholds {
    pub fn plot(&self) -> PlotThresholds {
        PlotThresholds {
            phrase: self.phrase_plot,
            phrase_small: self.phrase_plot_small,
            source: self.source_plot,
            small_topic_articles: self.small_topic_articles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub rank: usize,
    pub max_iter: usize,
    pub gtol: f64,
    pub ftol: f64,
    pub restarts: usize,
    /// Overrides the top-level seed for fitting.
    pub seed: Option<u64>,
    pub exp_overflow_bound: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { rank: 3, max_iter: 2000, gtol: 1e-6, ftol: 1e-9, restarts: 3, seed: None, exp_overflow_bound: EXP_OVERFLOW_BOUND }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtopicConfig {
    pub id: String,
    /// Phrases (space-separated tokens) whose presence assigns an article.
    pub triggers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicConfig {
    pub id: String,
    #[serde(default)]
    pub include_path: Option<PathBuf>,
    #[serde(default)]
    pub exclude_path: Option<PathBuf>,
    #[serde(default)]
    pub subtopics: Vec<SubtopicConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_components() -> [usize; 2] {
    [1, 2]
}

fn default_min_words() -> usize {
    MIN_WORDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spelling_path: Option<PathBuf>,
    #[serde(default)]
    pub abbreviations_path: Option<PathBuf>,
    #[serde(default)]
    pub blacklist_path: Option<PathBuf>,
    #[serde(default)]
    pub identifiers_path: Option<PathBuf>,
    #[serde(default = "default_min_words")]
    pub min_words: usize,
    /// A topic known to measure left-right bias; fixes which rotated axis is
    /// called left-right.
    #[serde(default)]
    pub left_right_topic: Option<String>,
    /// Canonical components shown as bias coordinates.
    #[serde(default = "default_components")]
    pub components: [usize; 2],
    /// Restricts every stage to one topic.
    #[serde(default)]
    pub topic_filter: Option<String>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub anchors: Anchors,
    #[serde(default)]
    pub topics: Vec<TopicConfig>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = e
                .span()
                .and_then(|span| text.get(span))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty() && s.len() < 64)
                .unwrap_or_else(|| "<config>".into());
            Error::config(key, message)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        for (key, v) in [("thresholds.subsume", t.subsume), ("thresholds.dominate", t.dominate)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(key, "must lie in (0, 1]"));
            }
        }
        for (key, v) in [
            ("thresholds.candidates", t.candidates as u64),
            ("thresholds.common_pool", t.common_pool as u64),
            ("thresholds.phrase_plot", t.phrase_plot),
            ("thresholds.phrase_plot_small", t.phrase_plot_small),
            ("thresholds.source_plot", t.source_plot),
            ("thresholds.small_topic_articles", t.small_topic_articles),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if t.phrase_plot_small > t.phrase_plot {
            return Err(Error::config("thresholds.phrase_plot_small", "must not exceed thresholds.phrase_plot"));
        }
        if !(t.stirling > 0.0) {
            return Err(Error::config("thresholds.stirling", "must be positive"));
        }
        if self.fit.rank < 3 || self.fit.rank > MAX_RANK {
            return Err(Error::config("fit.rank", format!("must be in 3..={MAX_RANK} (bias components need rank >= 3)")));
        }
        if self.components.iter().any(|&c| c == 0 || c >= self.fit.rank) || self.components[0] == self.components[1] {
            return Err(Error::config("components", "must be two distinct indices in 1..rank"));
        }
        if self.min_words == 0 {
            return Err(Error::config("min_words", "must be positive"));
        }
        self.fit_config("").validate()?;
        let mut ids = BTreeSet::new();
        for topic in &self.topics {
            if topic.id.trim().is_empty() || !ids.insert(topic.id.as_str()) {
                return Err(Error::config("topics.id", format!("empty or duplicate topic id `{}`", topic.id)));
            }
            for sub in &topic.subtopics {
                if sub.id.trim().is_empty() || sub.triggers.iter().all(|t| t.split_whitespace().next().is_none()) {
                    return Err(Error::config("topics.subtopics", format!("subtopic `{}` needs an id and triggers", sub.id)));
                }
            }
        }
        Ok(())
    }

    /// Fit settings for one topic; the seed is mixed with the topic id.
    pub fn fit_config(&self, topic_id: &str) -> FitConfig {
        let base = self.fit.seed.unwrap_or(self.seed);
        FitConfig {
            rank: self.fit.rank,
            max_iter: self.fit.max_iter,
            gtol: self.fit.gtol,
            ftol: self.fit.ftol,
            restarts: self.fit.restarts,
            seed: base ^ fnv1a(topic_id.as_bytes()),
            exp_overflow_bound: self.fit.exp_overflow_bound,
            stirling_cutoff: self.thresholds.stirling,
            ..FitConfig::default()
        }
    }

    pub fn topic(&self, id: &str) -> Option<&TopicConfig> {
        self.topics.iter().find(|t| t.id == id)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::parse("corpus_path = \"c.jsonl\"\n").unwrap();
        assert_eq!(c.thresholds, Thresholds::default());
        assert_eq!(c.fit.rank, 3);
        assert_eq!(c.components, [1, 2]);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn invalid_values_name_the_key() {
        let err = PipelineConfig::parse("corpus_path = \"c\"\n[thresholds]\nphrase_plot_small = 300\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "thresholds.phrase_plot_small"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = PipelineConfig::parse("corpus_path = \"c\"\n[fit]\nrank = 2\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "fit.rank"));
        let err = PipelineConfig::parse("corpus_path = \"c\"\nbogus = 1\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key.contains("bogus")), "{err}");
    }

    #[test]
    fn topics_and_subtopics() {
        let c = PipelineConfig::parse(
            "corpus_path = \"c\"\n[[topics]]\nid = \"BLM\"\nexclude_path = \"ex.txt\"\n\
             [[topics.subtopics]]\nid = \"police\"\ntriggers = [\"tear gas\"]\n",
        )
        .unwrap();
        assert_eq!(c.topic("BLM").unwrap().subtopics[0].triggers, ["tear gas"]);
        assert_ne!(c.fit_config("a").seed, c.fit_config("b").seed);
    }
}
