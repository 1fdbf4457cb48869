//! Phrase counting, information scores and the automatic purge.
//!
//! A phrase is a monogram, bigram or trigram of consecutive tokens inside
//! one sentence. Phrases are counted per source for a topic, the most common
//! ones form the count matrix `N`, and each phrase is scored by its additive
//! contribution to the mutual information between phrases and sources:
//!
//! ```text
//! I_i = Σ_j P_ij log2( P_ij / (P_i· P_·j) ),   P_ij = N_ij / N_··
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::poissonfactor::BiasComponents;
use crate::scalar::Real;
use crate::textprep::{CleanArticle, PERIOD};

pub const MAX_PHRASE_WORDS: usize = 3;

/// Space-joined sequence of one to three case-sensitive word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhraseKey(String);

impl PhraseKey {
    pub fn new<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        if words.is_empty() || words.len() > MAX_PHRASE_WORDS {
            return Err(Error::InvalidInput(format!("phrase must have 1-3 words, got {}", words.len())));
        }
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::InvalidInput(format!("invalid phrase word `{w}`")));
            }
            if w == PERIOD {
                return Err(Error::InvalidInput("phrase may not contain PERIOD".into()));
            }
        }
        Ok(Self(words.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(&text.split_whitespace().collect::<Vec<_>>())
    }

    /// Joins tokens already known to be valid (used on hot counting paths).
    fn from_tokens(tokens: &[String]) -> Self {
        Self(tokens.join(" "))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }

    pub fn len(&self) -> usize {
        self.words().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.words().any(|w| w == word)
    }
}

impl fmt::Display for PhraseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for PhraseKey {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        Self::parse(&value)
    }
}

impl From<PhraseKey> for String {
    fn from(value: PhraseKey) -> Self {
        value.0
    }
}

/// Sentences of an article, split on the `PERIOD` sentinel.
fn sentences(tokens: &[String]) -> impl Iterator<Item = &[String]> {
    tokens.split(|t| t == PERIOD).filter(|s| !s.is_empty())
}

/// All monograms, bigrams and trigrams of an article with multiplicities.
/// N-grams never span or contain `PERIOD`.
pub fn extract_ngrams(article: &CleanArticle) -> BTreeMap<PhraseKey, u64> {
    let mut out = BTreeMap::new();
    for_each_ngram(&article.tokens, |key| *out.entry(key).or_insert(0) += 1);
    out
}

fn for_each_ngram(tokens: &[String], mut f: impl FnMut(PhraseKey)) {
    for sentence in sentences(tokens) {
        for n in 1..=MAX_PHRASE_WORDS {
            for window in sentence.windows(n) {
                f(PhraseKey::from_tokens(window));
            }
        }
    }
}

/// Phrase-by-source count matrix for one topic.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub topic_id: String,
    phrases: Vec<PhraseKey>,
    sources: Vec<String>,
    counts: Counts,
    article_counts: Vec<u64>,
    /// `(child row, parent row) → occurrences of the child inside the parent`.
    /// Children are monograms inside bigrams and bigrams inside trigrams.
    containment: BTreeMap<(usize, usize), u64>,
}

impl CountMatrix {
    pub fn new(
        topic_id: impl Into<String>,
        phrases: Vec<PhraseKey>,
        sources: Vec<String>,
        counts: Counts,
        article_counts: Vec<u64>,
    ) -> Result<Self> {
        let topic_id = topic_id.into();
        if counts.shape() != (phrases.len(), sources.len()) {
            return Err(Error::ShapeMismatch { expected: (phrases.len(), sources.len()), got: counts.shape() });
        }
        if article_counts.len() != sources.len() {
            return Err(Error::InvalidInput("article_counts length differs from source count".into()));
        }
        if phrases.iter().collect::<HashSet<_>>().len() != phrases.len() {
            return Err(Error::InvalidInput("duplicate phrase labels".into()));
        }
        if sources.iter().collect::<HashSet<_>>().len() != sources.len() {
            return Err(Error::InvalidInput("duplicate source labels".into()));
        }
        Ok(Self { topic_id, phrases, sources, counts, article_counts, containment: BTreeMap::new() })
    }

    /// Convenience constructor with generated labels (`p0`, `s0`, ...) and one
    /// article per source.
    pub fn from_counts(topic_id: &str, counts: Counts) -> Self {
        let phrases = (0..counts.rows()).map(|i| PhraseKey(format!("p{i}"))).collect();
        let sources = (0..counts.cols()).map(|j| format!("s{j}")).collect();
        let articles = vec![1; counts.cols()];
        Self::new(topic_id, phrases, sources, counts, articles).expect("generated labels are unique")
    }

    pub fn with_containment(mut self, containment: BTreeMap<(usize, usize), u64>) -> Result<Self> {
        let m = self.phrases.len();
        if containment.keys().any(|&(c, p)| c >= m || p >= m) {
            return Err(Error::InvalidInput("containment index out of range".into()));
        }
        self.containment = containment;
        Ok(self)
    }

    pub fn phrases(&self) -> &[PhraseKey] {
        &self.phrases
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn article_counts(&self) -> &[u64] {
        &self.article_counts
    }

    pub fn containment(&self) -> &BTreeMap<(usize, usize), u64> {
        &self.containment
    }

    /// Total number of articles in the topic.
    pub fn total_articles(&self) -> u64 {
        self.article_counts.iter().sum()
    }

    pub fn row_of(&self, phrase: &PhraseKey) -> Option<usize> {
        self.phrases.iter().position(|p| p == phrase)
    }

    /// Keeps the listed rows (in the given order), remapping containment.
    pub fn restrict_rows(&self, rows: &[usize]) -> Self {
        let remap: HashMap<usize, usize> = rows.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let all_cols: Vec<usize> = (0..self.sources.len()).collect();
        let containment = self
            .containment
            .iter()
            .filter_map(|(&(c, p), &n)| Some(((*remap.get(&c)?, *remap.get(&p)?), n)))
            .collect();
        Self {
            topic_id: self.topic_id.clone(),
            phrases: rows.iter().map(|&i| self.phrases[i].clone()).collect(),
            sources: self.sources.clone(),
            counts: self.counts.select(rows, &all_cols),
            article_counts: self.article_counts.clone(),
            containment,
        }
    }

    /// Keeps the listed columns (in the given order).
    pub fn restrict_columns(&self, cols: &[usize]) -> Self {
        let all_rows: Vec<usize> = (0..self.phrases.len()).collect();
        Self {
            topic_id: self.topic_id.clone(),
            phrases: self.phrases.clone(),
            sources: cols.iter().map(|&j| self.sources[j].clone()).collect(),
            counts: self.counts.select(&all_rows, cols),
            article_counts: cols.iter().map(|&j| self.article_counts[j]).collect(),
            containment: self.containment.clone(),
        }
    }

    /// Drops all-zero rows, then all-zero columns.
    pub fn without_empty(&self) -> Self {
        let rows: Vec<usize> = (0..self.phrases.len()).filter(|&i| self.counts.row_total(i) > 0).collect();
        let reduced = self.restrict_rows(&rows);
        let cols: Vec<usize> = (0..reduced.sources.len()).filter(|&j| reduced.counts.col_total(j) > 0).collect();
        reduced.restrict_columns(&cols)
    }

    /// Keeps rows whose phrases appear in `keep`, preserving row order.
    pub fn restrict_to(&self, keep: &[PhraseKey]) -> Self {
        let wanted: HashSet<&PhraseKey> = keep.iter().collect();
        let rows: Vec<usize> = (0..self.phrases.len()).filter(|&i| wanted.contains(&self.phrases[i])).collect();
        self.restrict_rows(&rows)
    }

    /// Writes the sparse triplet format.
    ///
    /// ```text
    /// %phrasebias-counts v1
    /// %topic<TAB>BLM
    /// %source<TAB>label<TAB>articles      (one per column, in order)
    /// %phrase<TAB>tear gas                (one per row, in order)
    /// %contains<TAB>child<TAB>parent<TAB>n
    /// phrase<TAB>source<TAB>count         (non-zero cells only)
    /// ```
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%phrasebias-counts v1")?;
        writeln!(w, "%topic\t{}", self.topic_id)?;
        for (s, a) in self.sources.iter().zip(&self.article_counts) {
            writeln!(w, "%source\t{s}\t{a}")?;
        }
        for p in &self.phrases {
            writeln!(w, "%phrase\t{p}")?;
        }
        for (&(c, p), n) in &self.containment {
            writeln!(w, "%contains\t{}\t{}\t{n}", self.phrases[c], self.phrases[p])?;
        }
        for (i, p) in self.phrases.iter().enumerate() {
            for (j, s) in self.sources.iter().enumerate() {
                let c = self.counts.get(i, j);
                if c > 0 {
                    writeln!(w, "{p}\t{s}\t{c}")?;
                }
            }
        }
        Ok(())
    }

    pub fn to_triplet_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_triplets(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("triplets are UTF-8")
    }

    pub fn parse_triplets(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: &str| Error::Parse { what: origin.to_string(), line, message: message.into() };
        let mut topic = None;
        let mut sources = Vec::new();
        let mut articles = Vec::new();
        let mut phrases = Vec::new();
        let mut contains = Vec::new();
        let mut cells = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["%phrasebias-counts v1"] => {}
                ["%topic", t] => topic = Some(t.to_string()),
                ["%source", s, a] => {
                    sources.push(s.to_string());
                    articles.push(a.parse().map_err(|_| err(lineno, "bad article count"))?);
                }
                ["%phrase", p] => phrases.push(PhraseKey::parse(p).map_err(|e| err(lineno, &e.to_string()))?),
                ["%contains", c, p, n] => {
                    contains.push((c.to_string(), p.to_string(), n.parse::<u64>().map_err(|_| err(lineno, "bad count"))?))
                }
                [p, s, c] if !p.starts_with('%') => {
                    cells.push((lineno, p.to_string(), s.to_string(), c.parse::<u64>().map_err(|_| err(lineno, "bad count"))?))
                }
                _ => return Err(err(lineno, "unrecognized line")),
            }
        }
        let topic = topic.ok_or_else(|| err(0, "missing %topic header"))?;
        let prow: HashMap<&str, usize> = phrases.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let scol: HashMap<&str, usize> = sources.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
        let mut counts = Counts::zeros(phrases.len(), sources.len());
        for (lineno, p, s, c) in &cells {
            let i = *prow.get(p.as_str()).ok_or_else(|| err(*lineno, "unknown phrase"))?;
            let j = *scol.get(s.as_str()).ok_or_else(|| err(*lineno, "unknown source"))?;
            counts.set(i, j, *c);
        }
        let mut containment = BTreeMap::new();
        for (c, p, n) in &contains {
            let ci = *prow.get(c.as_str()).ok_or_else(|| err(0, "unknown containment child"))?;
            let pi = *prow.get(p.as_str()).ok_or_else(|| err(0, "unknown containment parent"))?;
            containment.insert((ci, pi), *n);
        }
        let phrases_owned = phrases.clone();
        Self::new(topic, phrases_owned, sources, counts, articles)?.with_containment(containment)
    }

    pub fn read_triplets(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_triplets(&text, &path.display().to_string())
    }

    /// Dense CSV: header `phrase,<sources...>`, one row per phrase.
    pub fn to_dense_csv(&self) -> String {
        let mut out = String::from("phrase");
        for s in &self.sources {
            out.push(',');
            out.push_str(&csv_field(s));
        }
        out.push('\n');
        for (i, p) in self.phrases.iter().enumerate() {
            out.push_str(&csv_field(p.as_str()));
            for j in 0..self.sources.len() {
                out.push_str(&format!(",{}", self.counts.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Counts phrases per source for one topic and keeps the `pool_size` most
/// common ones (ties broken lexicographically). Containment statistics are
/// gathered positionally for retained phrase pairs.
pub fn build_count_matrix(corpus: &[CleanArticle], topic_id: &str, pool_size: usize) -> Result<CountMatrix> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(format!("topic `{topic_id}` has no articles")));
    }
    if let Some(a) = corpus.iter().find(|a| a.topic_id != topic_id) {
        return Err(Error::InvalidInput(format!("article topic `{}` differs from `{topic_id}`", a.topic_id)));
    }
    let sources: Vec<String> = corpus.iter().map(|a| a.source_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let per_source: Vec<(HashMap<PhraseKey, u64>, u64)> = sources
        .par_iter()
        .map(|s| {
            let mut map = HashMap::new();
            let mut articles = 0;
            for a in corpus.iter().filter(|a| &a.source_id == s) {
                articles += 1;
                for_each_ngram(&a.tokens, |k| *map.entry(k).or_insert(0) += 1);
            }
            (map, articles)
        })
        .collect();
    let mut totals: HashMap<&PhraseKey, u64> = HashMap::new();
    for (map, _) in &per_source {
        for (k, &c) in map {
            *totals.entry(k).or_insert(0) += c;
        }
    }
    if totals.is_empty() {
        return Err(Error::EmptyCorpus(format!("topic `{topic_id}` produced no phrases")));
    }
    let mut ranked: Vec<(&PhraseKey, u64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(pool_size);
    let phrases: Vec<PhraseKey> = ranked.iter().map(|(k, _)| (*k).clone()).collect();
    let mut counts = Counts::zeros(phrases.len(), sources.len());
    for (i, p) in phrases.iter().enumerate() {
        for (j, (map, _)) in per_source.iter().enumerate() {
            counts.set(i, j, map.get(p).copied().unwrap_or(0));
        }
    }
    let article_counts = per_source.iter().map(|(_, a)| *a).collect();
    let containment = containment_counts(corpus, &phrases);
    CountMatrix::new(topic_id, phrases, sources, counts, article_counts)?.with_containment(containment)
}

/// Positional containment tally. A monogram occurrence is inside a bigram
/// when the bigram occurrence covers its position; each distinct parent is
/// counted once per child occurrence.
fn containment_counts(corpus: &[CleanArticle], phrases: &[PhraseKey]) -> BTreeMap<(usize, usize), u64> {
    let index: HashMap<&str, usize> = phrases.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let merged = corpus
        .par_iter()
        .fold(HashMap::<(usize, usize), u64>::new, |mut acc, article| {
            for sentence in sentences(&article.tokens) {
                for child_len in 1..MAX_PHRASE_WORDS {
                    let parent_len = child_len + 1;
                    if sentence.len() < parent_len {
                        continue;
                    }
                    for start in 0..=sentence.len() - child_len {
                        let child = sentence[start..start + child_len].join(" ");
                        let Some(&ci) = index.get(child.as_str()) else { continue };
                        let mut parents: Vec<usize> = Vec::with_capacity(2);
                        for pstart in [start.checked_sub(1), Some(start)].into_iter().flatten() {
                            if pstart + parent_len > sentence.len() {
                                continue;
                            }
                            let parent = sentence[pstart..pstart + parent_len].join(" ");
                            if let Some(&pi) = index.get(parent.as_str()) {
                                if !parents.contains(&pi) {
                                    parents.push(pi);
                                }
                            }
                        }
                        for pi in parents {
                            *acc.entry((ci, pi)).or_insert(0) += 1;
                        }
                    }
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    merged.into_iter().collect()
}

/// Score of one phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseScore<T> {
    pub phrase: PhraseKey,
    /// Contribution `I_i` to the phrase-source mutual information, in bits.
    pub info_bits: T,
    pub total_count: u64,
    /// `max_j N_ij / N_i·`.
    pub dominant_source_share: T,
}

fn score_order<T: Real>(a: &PhraseScore<T>, b: &PhraseScore<T>) -> std::cmp::Ordering {
    b.info_bits
        .partial_cmp(&a.info_bits)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(b.total_count.cmp(&a.total_count))
        .then_with(|| a.phrase.cmp(&b.phrase))
}

/// Information scores of all phrases with a non-zero total, sorted by
/// decreasing score. Zero cells contribute nothing.
pub fn information_scores<T: Real>(cm: &CountMatrix) -> Result<Vec<PhraseScore<T>>> {
    let counts = cm.counts();
    let grand = counts.total();
    if grand == 0 {
        return Err(Error::EmptyCorpus(format!("topic `{}` has a zero count matrix", cm.topic_id)));
    }
    let n = T::from_count(grand);
    let col_totals: Vec<T> = counts.col_totals().into_iter().map(T::from_count).collect();
    let mut scores = Vec::with_capacity(counts.rows());
    for (i, phrase) in cm.phrases().iter().enumerate() {
        let row_total = counts.row_total(i);
        if row_total == 0 {
            continue;
        }
        let ni = T::from_count(row_total);
        let mut bits = T::zero();
        let mut max_cell = 0;
        for (j, &c) in counts.row(i).iter().enumerate() {
            max_cell = max_cell.max(c);
            if c == 0 {
                continue;
            }
            let nij = T::from_count(c);
            bits = bits + nij / n * (nij * n / (ni * col_totals[j])).log2();
        }
        scores.push(PhraseScore {
            phrase: phrase.clone(),
            info_bits: bits.max(T::zero()),
            total_count: row_total,
            dominant_source_share: T::from_count(max_cell) / ni,
        });
    }
    scores.sort_by(score_order);
    Ok(scores)
}

/// Mutual information (bits) between phrase and source, computed from the
/// marginal and joint entropies `H(I) + H(J) − H(I, J)`.
pub fn mutual_information_bits<T: Real>(counts: &Counts) -> Result<T> {
    let grand = counts.total();
    if grand == 0 {
        return Err(Error::EmptyCorpus("zero count matrix".into()));
    }
    let n = T::from_count(grand);
    let entropy = |values: &mut dyn Iterator<Item = u64>| -> T {
        values.filter(|&c| c > 0).map(|c| {
            let p = T::from_count(c) / n;
            -p * p.log2()
        }).sum()
    };
    let h_rows = entropy(&mut counts.row_totals().into_iter());
    let h_cols = entropy(&mut counts.col_totals().into_iter());
    let h_joint = entropy(&mut counts.as_slice().iter().copied());
    Ok(h_rows + h_cols - h_joint)
}

/// A phrase deleted as subsumed, with the parent and containment fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsumption {
    pub child: PhraseKey,
    pub parent: PhraseKey,
    pub fraction: f64,
}

/// Monograms inside one particular bigram (and bigrams inside one particular
/// trigram) more than `threshold` of the time. Decisions use the counts
/// before any deletion.
pub fn subsumed_phrases(cm: &CountMatrix, threshold: f64) -> Vec<Subsumption> {
    let mut best: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (&(child, parent), &inside) in cm.containment() {
        let total = cm.counts().row_total(child);
        if total == 0 {
            continue;
        }
        let fraction = inside as f64 / total as f64;
        if fraction > threshold {
            let entry = best.entry(child).or_insert((parent, fraction));
            if fraction > entry.1 {
                *entry = (parent, fraction);
            }
        }
    }
    best.into_iter()
        .map(|(c, (p, fraction))| Subsumption { child: cm.phrases()[c].clone(), parent: cm.phrases()[p].clone(), fraction })
        .collect()
}

/// Removes subsumed phrases (see [`subsumed_phrases`]).
pub fn purge_subsumed(cm: &CountMatrix, threshold: f64) -> CountMatrix {
    let dropped: HashSet<PhraseKey> = subsumed_phrases(cm, threshold).into_iter().map(|s| s.child).collect();
    let keep: Vec<usize> = (0..cm.phrases().len()).filter(|&i| !dropped.contains(&cm.phrases()[i])).collect();
    cm.restrict_rows(&keep)
}

/// Thresholds and filters of the automatic purge.
#[derive(Debug, Clone)]
pub struct PurgeRules {
    /// Phrases with a larger single-source share are dropped.
    pub max_dominant_share: f64,
    /// Number of top-scoring survivors returned.
    pub candidates: usize,
    /// Phrases containing any of these words (any case) are dropped.
    pub banned_words: Vec<String>,
}

impl Default for PurgeRules {
    fn default() -> Self {
        Self { max_dominant_share: 0.90, candidates: 1000, banned_words: vec!["said".into(), "told".into()] }
    }
}

/// Applies the dominance, blacklist, banned-word and `PERIOD` filters to
/// scores sorted by decreasing information, then keeps the top candidates.
/// Blacklist entries match case-insensitively.
pub fn apply_purge_rules<T: Real>(
    scores: &[PhraseScore<T>],
    blacklist: &BTreeSet<String>,
    rules: &PurgeRules,
) -> Vec<PhraseScore<T>> {
    let blacklist: HashSet<String> = blacklist.iter().map(|b| b.to_lowercase()).collect();
    let banned: Vec<String> = rules.banned_words.iter().map(|w| w.to_lowercase()).collect();
    let max_share = T::lit(rules.max_dominant_share);
    let mut sorted: Vec<PhraseScore<T>> = scores.to_vec();
    sorted.sort_by(score_order);
    sorted
        .into_iter()
        .filter(|s| s.dominant_source_share <= max_share)
        .filter(|s| !blacklist.contains(&s.phrase.as_str().to_lowercase()))
        .filter(|s| !s.phrase.words().any(|w| banned.contains(&w.to_lowercase())))
        .filter(|s| !s.phrase.contains_word(PERIOD))
        .take(rules.candidates)
        .collect()
}

/// Configuration of the variant-merging rules.
#[derive(Debug, Clone, Default)]
pub struct MergeRules {
    /// Title or identifier tokens (`Mayor`, `Senator`, ...).
    pub identifiers: BTreeSet<String>,
    /// Separation, in combined standard deviations, above which two
    /// capitalization variants are both kept.
    pub capitalization_sigmas: f64,
}

impl MergeRules {
    pub fn new(identifiers: BTreeSet<String>) -> Self {
        Self { identifiers, capitalization_sigmas: 2.0 }
    }
}

/// Resolves singular/plural, capitalization and continuation variants.
///
/// Rules, applied in order over the surviving set:
/// 1. phrases differing only by a trailing `s`/`es` on the last word keep the
///    more frequent variant;
/// 2. phrases equal up to case are both kept only if their component-1
///    coordinates lie more than `capitalization_sigmas` combined standard
///    deviations apart, otherwise the more frequent is kept;
/// 3. overlapping continuations sharing at least two words keep the variant
///    without identifier tokens, else the more informative one.
///
/// Output keeps the input order.
pub fn merge_variants<T: Real>(
    candidates: &[PhraseScore<T>],
    coords: Option<&BiasComponents<T>>,
    rules: &MergeRules,
) -> Result<Vec<PhraseKey>> {
    let n = candidates.len();
    let mut alive = vec![true; n];
    let by_phrase: HashMap<&str, usize> = candidates.iter().enumerate().map(|(i, c)| (c.phrase.as_str(), i)).collect();

    // Frequency preference: count, then information, then lexicographic.
    let prefer_frequent = |a: usize, b: usize| -> usize {
        let (x, y) = (&candidates[a], &candidates[b]);
        let ord = y
            .total_count
            .cmp(&x.total_count)
            .then(y.info_bits.partial_cmp(&x.info_bits).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| x.phrase.cmp(&y.phrase));
        if ord == std::cmp::Ordering::Greater { b } else { a }
    };

    // 1. singular / plural
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for suffix in ["s", "es"] {
            let plural = format!("{}{}", candidates[i].phrase.as_str(), suffix);
            if let Some(&j) = by_phrase.get(plural.as_str()) {
                if alive[i] && alive[j] {
                    let keep = prefer_frequent(i, j);
                    alive[if keep == i { j } else { i }] = false;
                }
            }
        }
    }

    // 2. capitalization variants
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in (0..n).filter(|&i| alive[i]) {
        groups.entry(candidates[i].phrase.as_str().to_lowercase()).or_default().push(i);
    }
    let variant_groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    if !variant_groups.is_empty() {
        let coords = coords.ok_or(Error::MissingCoordinates)?;
        let sigmas = T::lit(rules.capitalization_sigmas);
        for mut group in variant_groups {
            group.sort_by(|&a, &b| if prefer_frequent(a, b) == a { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
            let head = group[0];
            let head_coord = coords.phrase(candidates[head].phrase.as_str());
            for &other in &group[1..] {
                let separated = match (head_coord, coords.phrase(candidates[other].phrase.as_str())) {
                    (Some(a), Some(b)) => match (a.errors[0], b.errors[0]) {
                        (Some(ea), Some(eb)) => (a.coords[0] - b.coords[0]).abs() > sigmas * (ea * ea + eb * eb).sqrt(),
                        _ => false,
                    },
                    _ => false,
                };
                if !separated {
                    alive[other] = false;
                }
            }
        }
    }

    // 3. continuation pairs
    let words: Vec<Vec<&str>> = candidates.iter().map(|c| c.phrase.words().collect()).collect();
    let has_identifier = |i: usize| words[i].iter().any(|w| rules.identifiers.contains(*w));
    for a in 0..n {
        for b in 0..n {
            if a == b || !alive[a] || !alive[b] {
                continue;
            }
            if !continues(&words[a], &words[b]) {
                continue;
            }
            let loser = match (has_identifier(a), has_identifier(b)) {
                (true, false) => a,
                (false, true) => b,
                _ => {
                    let (x, y) = (&candidates[a], &candidates[b]);
                    let ord = y
                        .info_bits
                        .partial_cmp(&x.info_bits)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(y.total_count.cmp(&x.total_count))
                        .then_with(|| x.phrase.cmp(&y.phrase));
                    if ord == std::cmp::Ordering::Greater { a } else { b }
                }
            };
            alive[loser] = false;
        }
    }

    Ok((0..n).filter(|&i| alive[i]).map(|i| candidates[i].phrase.clone()).collect())
}

/// `a` ends with a run of at least two words that starts `b`, or one phrase
/// contains the other as a prefix or suffix of at least two words.
fn continues(a: &[&str], b: &[&str]) -> bool {
    let max_k = a.len().min(b.len());
    (2..=max_k).any(|k| a[a.len() - k..] == b[..k] || b[b.len() - k..] == a[..k])
}

/// Applies per-topic screening lists: phrases on `exclude` are removed;
/// a non-empty `include` list keeps only its members. Order is preserved.
pub fn apply_topic_lists(phrases: &[PhraseKey], include: &BTreeSet<String>, exclude: &BTreeSet<String>) -> Vec<PhraseKey> {
    phrases
        .iter()
        .filter(|p| !exclude.contains(p.as_str()))
        .filter(|p| include.is_empty() || include.contains(p.as_str()))
        .cloned()
        .collect()
}
