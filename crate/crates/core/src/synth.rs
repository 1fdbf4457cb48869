//! Synthetic corpus with planted left-right and establishment stances.
//!
//! Every source `s` has a stance `(a_s, b_s)` on the two axes. Each topic is
//! biased along one axis: a term `i` of topic `t` appears in an article of
//! source `s` a Poisson number of times with mean
//! `exp(β_i + γ ℓ_i z_s)`, where `z_s` is `a_s` or `b_s` depending on the
//! topic's axis, `β_i` sets the term's popularity and `ℓ_i ∈ [−1, 1]` its
//! loading. Filler words shared by all topics are unbiased.
//!
//! Terms are one or two made-up words and every occurrence is its own
//! sentence, so phrase counts follow the planted model exactly instead of
//! picking up sparse chance adjacencies. The words of a two-word term never
//! occur alone and are removed by subsumption.
//!
//! The two stance vectors are built with an exact sample correlation so the
//! two topic clusters are correlated with each other, which separates the
//! two leading eigenvalues of the component correlation matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::biasmap::Cluster;
use crate::error::{Error, Result};
use crate::pipeline::write_atomic;
use crate::textprep::{RawArticle, SpellingMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub left_right_topics: usize,
    pub establishment_topics: usize,
    pub sources: usize,
    pub articles_per_source: usize,
    pub terms_per_topic: usize,
    pub filler_words: usize,
    /// `γ`: log-rate change per unit stance at full loading.
    pub bias_strength: f64,
    /// Sample correlation between the two stance vectors.
    pub stance_correlation: f64,
    /// Range of per-article mean counts of topic terms.
    pub word_rate: (f64, f64),
    pub filler_rate: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            left_right_topics: 6,
            establishment_topics: 6,
            sources: 20,
            articles_per_source: 40,
            terms_per_topic: 60,
            filler_words: 40,
            bias_strength: 0.8,
            stance_correlation: 0.35,
            word_rate: (1.0, 4.0),
            filler_rate: (0.3, 1.5),
        }
    }
}

/// Planted ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Source → `[left-right stance, establishment stance]`.
    pub stances: BTreeMap<String, [f64; 2]>,
    /// Topic → planted axis.
    pub topic_axes: BTreeMap<String, Cluster>,
}

impl SynthTruth {
    /// Source with the largest stance on an axis (`0` left-right,
    /// `1` establishment).
    pub fn most_positive(&self, axis: usize) -> &str {
        self.stances
            .iter()
            .max_by(|a, b| a.1[axis].total_cmp(&b.1[axis]))
            .map(|(k, _)| k.as_str())
            .expect("at least one source")
    }

    pub fn first_topic(&self, cluster: Cluster) -> Option<&str> {
        self.topic_axes.iter().find(|(_, &c)| c == cluster).map(|(k, _)| k.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub articles: Vec<RawArticle>,
    pub truth: SynthTruth,
}

/// Random pronounceable lowercase words, unique, and untouched by the
/// spelling map.
fn make_words(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let spelling = SpellingMap::bundled();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.gen_range(2..=3);
        let word: String = (0..syllables)
            .flat_map(|_| [*CONSONANTS.choose(rng).unwrap() as char, *VOWELS.choose(rng).unwrap() as char])
            .collect();
        if spelling.americanize(&word).is_some() || !taken.insert(word.clone()) {
            continue;
        }
        out.push(word);
    }
    out
}

/// Two standardized vectors with sample correlation exactly `rho`.
fn correlated_stances(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> (Vec<f64>, Vec<f64>) {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let standardize = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let sd = (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        v.iter_mut().for_each(|x| *x /= sd);
    };
    let mut a: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    standardize(&mut a);
    let mut e: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    let proj = e.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / n as f64;
    e.iter_mut().zip(&a).for_each(|(x, y)| *x -= proj * y);
    standardize(&mut e);
    let b = a.iter().zip(&e).map(|(x, y)| rho * x + (1.0 - rho * rho).sqrt() * y).collect();
    (a, b)
}

/// One or two fresh words per term.
fn make_terms(rng: &mut ChaCha8Rng, count: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    (0..count)
        .map(|_| {
            let len = if rng.gen_bool(0.5) { 2 } else { 1 };
            make_words(rng, len, taken).join(" ")
        })
        .collect()
}

/// Shuffled occurrences, one capitalized sentence each.
fn render(rng: &mut ChaCha8Rng, mut terms: Vec<&str>) -> String {
    terms.shuffle(rng);
    let mut text = String::new();
    for term in terms {
        if !text.is_empty() {
            text.push(' ');
        }
        let mut chars = term.chars();
        if let Some(first) = chars.next() {
            text.push(first.to_ascii_uppercase());
            text.push_str(chars.as_str());
        }
        text.push('.');
    }
    text
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.sources < 5 || config.left_right_topics + config.establishment_topics == 0 {
        return Err(Error::config("synth", "need at least 5 sources and one topic"));
    }
    if !(config.stance_correlation.abs() < 1.0) {
        return Err(Error::config("synth.stance_correlation", "must lie strictly between -1 and 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (a, b) = correlated_stances(&mut rng, config.sources, config.stance_correlation);
    let sources: Vec<String> = (1..=config.sources).map(|i| format!("src{i:02}")).collect();
    let stances = sources.iter().enumerate().map(|(j, s)| (s.clone(), [a[j], b[j]])).collect();

    let n_topics = config.left_right_topics + config.establishment_topics;
    let mut taken = BTreeSet::new();
    let filler = make_words(&mut rng, config.filler_words, &mut taken);
    let filler_rates: Vec<f64> = filler.iter().map(|_| rng.gen_range(config.filler_rate.0..=config.filler_rate.1)).collect();

    // Interleave the axes so topic names carry no hint of the truth.
    let mut axes = Vec::with_capacity(n_topics);
    let (mut lr, mut est) = (config.left_right_topics, config.establishment_topics);
    while lr + est > 0 {
        if lr > 0 {
            axes.push(Cluster::LeftRight);
            lr -= 1;
        }
        if est > 0 {
            axes.push(Cluster::Establishment);
            est -= 1;
        }
    }

    let mut articles = Vec::new();
    let mut topic_axes = BTreeMap::new();
    for (t, axis) in axes.into_iter().enumerate() {
        let topic = format!("topic{:02}", t + 1);
        topic_axes.insert(topic.clone(), axis);
        let words = make_terms(&mut rng, config.terms_per_topic, &mut taken);
        let (lo, hi) = (config.word_rate.0.ln(), config.word_rate.1.ln());
        let beta: Vec<f64> = words.iter().map(|_| rng.gen_range(lo..=hi)).collect();
        let loading: Vec<f64> = words.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let stance = if axis == Cluster::LeftRight { &a } else { &b };
        for (j, source) in sources.iter().enumerate() {
            let rates: Vec<f64> =
                beta.iter().zip(&loading).map(|(&bi, &li)| (bi + config.bias_strength * li * stance[j]).exp()).collect();
            for _ in 0..config.articles_per_source {
                let mut tokens: Vec<&str> = Vec::new();
                for (w, &rate) in words.iter().chain(&filler).zip(rates.iter().chain(&filler_rates)) {
                    let k = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
                    tokens.extend(std::iter::repeat_n(w.as_str(), k));
                }
                articles.push(RawArticle {
                    source_id: source.clone(),
                    topic_id: topic.clone(),
                    text: render(&mut rng, tokens),
                    published: None,
                });
            }
        }
    }
    Ok(SynthCorpus { articles, truth: SynthTruth { stances, topic_axes } })
}

impl SynthCorpus {
    /// One JSON object per line.
    pub fn corpus_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.articles {
            out.push_str(&serde_json::to_string(a).expect("articles serialize"));
            out.push('\n');
        }
        out
    }

    /// A pipeline configuration for this corpus. Plot thresholds are scaled
    /// to the corpus size and the anchors and axis hint come from the truth.
    pub fn pipeline_config(&self, seed: u64) -> String {
        let lr_topic = self.truth.first_topic(Cluster::LeftRight).unwrap_or_default();
        format!(
            "# Generated synthetic-corpus configuration.\n\
             corpus_path = \"corpus.jsonl\"\n\
             output_dir = \"out\"\n\
             seed = {seed}\n\
             left_right_topic = \"{lr_topic}\"\n\
             \n\
             [thresholds]\n\
             phrase_plot = 200\n\
             phrase_plot_small = 100\n\
             source_plot = 200\n\
             \n\
             [anchors]\n\
             x_positive_source = \"{}\"\n\
             y_positive_source = \"{}\"\n",
            self.truth.most_positive(0),
            self.truth.most_positive(1),
        )
    }

    /// Writes `corpus.jsonl`, `config.toml` and `truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("corpus.jsonl"), self.corpus_jsonl().as_bytes())?;
        write_atomic(&dir.join("config.toml"), self.pipeline_config(seed).as_bytes())?;
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes") + "\n";
        write_atomic(&dir.join("truth.json"), truth.as_bytes())
    }
}
