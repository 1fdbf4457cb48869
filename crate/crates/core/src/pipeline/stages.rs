//! Stage bodies. Each returns `(relative path, bytes)` pairs; the driver
//! writes them serially and records their hashes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Pipeline;
use crate::biasmap::{
    cluster_components, jackknife_errors, landscape as build_landscape, source_union, topic_ordering, ClusterAssignment,
    CorrelationMatrix, LandscapeMap, TopicComponent, MIN_JACKKNIFE_SOURCES,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lists;
use crate::phrasestats::{
    apply_purge_rules, apply_topic_lists, build_count_matrix, csv_field, information_scores, merge_variants,
    purge_subsumed, CountMatrix, MergeRules, PhraseKey, PurgeRules,
};
use crate::poissonfactor::{component_coordinates, fit as fit_model, per_article_frequency, BiasComponents, FitResult, PlotThresholds};
use crate::svg;
use crate::textprep::{CleanArticle, Normalized, Normalizer, RawArticle, SpellingMap};

type Artifacts = Vec<(String, Vec<u8>)>;

/// One topic as tracked from ingest onward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub id: String,
    /// File-name stem of the topic's artifacts.
    pub slug: String,
    pub articles: usize,
    pub discarded: usize,
    pub sources: usize,
}

/// File-name-safe form of a topic id.
pub fn slug(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// A subtopic id with its trigger phrases as token sequences.
type SubtopicTriggers<'a> = (&'a str, Vec<Vec<String>>);

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    text.into_bytes()
}

fn topic_index(p: &Pipeline, stage: &str) -> Result<Vec<TopicEntry>> {
    p.read_json(&format!("{stage}/topics.json"))
}

fn read_counts(p: &Pipeline, rel: &str) -> Result<CountMatrix> {
    CountMatrix::parse_triplets(&p.read_artifact(rel)?, rel)
}

fn read_list(p: &Pipeline, path: Option<&Path>) -> Result<BTreeSet<String>> {
    match path {
        Some(path) => lists::read_one_column(&p.resolve(path)),
        None => Ok(BTreeSet::new()),
    }
}

fn normalizer(p: &Pipeline) -> Result<Normalizer> {
    let c = p.config();
    let spelling = match &c.spelling_path {
        Some(path) => {
            let path = p.resolve(path);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            SpellingMap::parse(&text)?
        }
        None => SpellingMap::default(),
    };
    let abbreviations = read_list(p, c.abbreviations_path.as_deref())?;
    Ok(Normalizer::default().extended(spelling, abbreviations).with_min_words(c.min_words))
}

fn contains_sequence(tokens: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && tokens.windows(needle.len()).any(|w| w.iter().zip(needle).all(|(a, b)| a.eq_ignore_ascii_case(b)))
}

/// Reads the corpus, normalizes every article, reassigns articles to
/// subtopics by trigger phrase and writes one token file per topic.
pub(super) fn ingest(p: &Pipeline) -> Result<Artifacts> {
    let c = p.config();
    let path = p.resolve(&c.corpus_path);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let origin = path.display().to_string();
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let article: RawArticle = serde_json::from_str(line)
            .map_err(|e| Error::Parse { what: origin.clone(), line: lineno + 1, message: e.to_string() })?;
        raw.push(article);
    }
    let norm = normalizer(p)?;
    let normalized: Vec<Normalized> = raw.par_iter().map(|a| norm.prepare(a)).collect::<Result<_>>()?;

    // Subtopic triggers, tokenized like article text.
    let triggers: BTreeMap<&str, Vec<SubtopicTriggers>> = c
        .topics
        .iter()
        .map(|t| {
            let subs = t
                .subtopics
                .iter()
                .map(|s| (s.id.as_str(), s.triggers.iter().map(|tr| tr.split_whitespace().map(str::to_string).collect()).collect()))
                .collect();
            (t.id.as_str(), subs)
        })
        .collect();

    let mut by_topic: BTreeMap<String, (Vec<CleanArticle>, usize)> = BTreeMap::new();
    for (article, result) in raw.iter().zip(normalized) {
        match result {
            Normalized::Discard { .. } => by_topic.entry(article.topic_id.clone()).or_default().1 += 1,
            Normalized::Clean(mut clean) => {
                if let Some(subs) = triggers.get(clean.topic_id.as_str()) {
                    if let Some((sub, _)) = subs.iter().find(|(_, t)| t.iter().any(|t| contains_sequence(&clean.tokens, t))) {
                        clean.topic_id = sub.to_string();
                    }
                }
                by_topic.entry(clean.topic_id.clone()).or_default().0.push(clean);
            }
        }
    }
    if let Some(filter) = &c.topic_filter {
        by_topic.retain(|id, _| id == filter);
        if by_topic.is_empty() {
            return Err(Error::config("topic_filter", format!("topic `{filter}` does not occur in the corpus")));
        }
    }

    let mut out = Vec::new();
    let mut index = Vec::new();
    let mut slugs = BTreeSet::new();
    for (id, (articles, discarded)) in &by_topic {
        let s = slug(id);
        if !slugs.insert(s.clone()) {
            return Err(Error::InvalidInput(format!("topic ids collide on file name `{s}`")));
        }
        let mut body = String::new();
        for a in articles {
            let _ = writeln!(body, "{}\t{}", a.source_id, a.tokens.join(" "));
        }
        out.push((format!("ingest/{s}.tokens"), body.into_bytes()));
        let sources = articles.iter().map(|a| a.source_id.as_str()).collect::<BTreeSet<_>>().len();
        index.push(TopicEntry { id: id.clone(), slug: s, articles: articles.len(), discarded: *discarded, sources });
    }
    out.push(("ingest/topics.json".into(), json_bytes(&index)));
    Ok(out)
}

fn read_tokens(p: &Pipeline, topic: &TopicEntry) -> Result<Vec<CleanArticle>> {
    let rel = format!("ingest/{}.tokens", topic.slug);
    let text = p.read_artifact(&rel)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let (source, tokens) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse { what: rel.clone(), line: i + 1, message: "expected source<TAB>tokens".into() })?;
            Ok(CleanArticle {
                source_id: source.to_string(),
                topic_id: topic.id.clone(),
                tokens: tokens.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect(),
            })
        })
        .collect()
}

/// Phrase counts per topic with subsumed phrases removed.
pub(super) fn count(p: &Pipeline) -> Result<Artifacts> {
    let t = &p.config().thresholds;
    let index = topic_index(p, "ingest")?;
    let per_topic: Vec<Artifacts> = index
        .par_iter()
        .filter(|topic| topic.articles > 0)
        .map(|topic| {
            let corpus = read_tokens(p, topic)?;
            let cm = build_count_matrix(&corpus, &topic.id, t.common_pool)?;
            let cm = purge_subsumed(&cm, t.subsume);
            Ok(vec![
                (format!("count/{}.counts", topic.slug), cm.to_triplet_string().into_bytes()),
                (format!("count/{}.csv", topic.slug), cm.to_dense_csv().into_bytes()),
            ])
        })
        .collect::<Result<_>>()?;
    let kept: Vec<TopicEntry> = index.into_iter().filter(|t| t.articles > 0).collect();
    let mut out: Artifacts = per_topic.into_iter().flatten().collect();
    out.push(("count/topics.json".into(), json_bytes(&kept)));
    Ok(out)
}

fn has_case_variants(phrases: impl Iterator<Item = String>) -> bool {
    let mut seen = BTreeSet::new();
    phrases.map(|p| p.to_lowercase()).any(|p| !seen.insert(p))
}

/// Information scores, automatic purge, variant merging and topic lists.
pub(super) fn select(p: &Pipeline) -> Result<Artifacts> {
    let c = p.config();
    let blacklist = read_list(p, c.blacklist_path.as_deref())?;
    let identifiers = read_list(p, c.identifiers_path.as_deref())?;
    let index = topic_index(p, "count")?;
    let rules = PurgeRules { max_dominant_share: c.thresholds.dominate, candidates: c.thresholds.candidates, ..PurgeRules::default() };
    let merge = MergeRules::new(identifiers);
    let per_topic: Vec<Artifacts> = index
        .par_iter()
        .map(|topic| {
            let cm = read_counts(p, &format!("count/{}.counts", topic.slug))?;
            let scores = information_scores::<f64>(&cm)?;
            let candidates = apply_purge_rules(&scores, &blacklist, &rules);
            // Capitalization variants are judged on a preliminary fit.
            let coords = if has_case_variants(candidates.iter().map(|s| s.phrase.as_str().to_string())) {
                let keep: Vec<PhraseKey> = candidates.iter().map(|s| s.phrase.clone()).collect();
                let sub = cm.restrict_to(&keep).without_empty();
                let fitted = fit_model::<f64>(sub.counts(), &c.fit_config(&topic.id))?;
                Some(component_coordinates(&fitted.model, &sub, &PlotThresholds::none(), c.components)?)
            } else {
                None
            };
            let merged = merge_variants(&candidates, coords.as_ref(), &merge)?;
            let (include, exclude) = match c.topic(&topic.id) {
                Some(tc) => (read_list(p, tc.include_path.as_deref())?, read_list(p, tc.exclude_path.as_deref())?),
                None => (BTreeSet::new(), BTreeSet::new()),
            };
            let selected = apply_topic_lists(&merged, &include, &exclude);
            let chosen: BTreeSet<&PhraseKey> = selected.iter().collect();
            let mut csv = String::from("phrase,info_bits,total_count,dominant_source_share,selected\n");
            for s in &scores {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    csv_field(s.phrase.as_str()),
                    s.info_bits,
                    s.total_count,
                    s.dominant_source_share,
                    chosen.contains(&s.phrase)
                );
            }
            let reduced = cm.restrict_to(&selected);
            Ok(vec![
                (format!("select/{}.counts", topic.slug), reduced.to_triplet_string().into_bytes()),
                (format!("select/{}.scores.csv", topic.slug), csv.into_bytes()),
            ])
        })
        .collect::<Result<_>>()?;
    let mut out: Artifacts = per_topic.into_iter().flatten().collect();
    out.push(("select/topics.json".into(), json_bytes(&index)));
    Ok(out)
}

fn frequency_csv(cm: &CountMatrix) -> Result<String> {
    let freq = per_article_frequency::<f64>(cm)?;
    let mut csv = String::from("phrase,source,count,per_article,std_error\n");
    for (i, phrase) in cm.phrases().iter().enumerate() {
        for (j, source) in cm.sources().iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                csv_field(phrase.as_str()),
                csv_field(source),
                cm.counts().get(i, j),
                freq.frequency[(i, j)],
                freq.std_error[(i, j)]
            );
        }
    }
    Ok(csv)
}

/// Factorization of every selected count matrix.
pub(super) fn fit(p: &Pipeline) -> Result<Artifacts> {
    let c = p.config();
    let index = topic_index(p, "select")?;
    let plot = c.thresholds.plot();
    let per_topic: Vec<(Artifacts, String)> = index
        .par_iter()
        .map(|topic| {
            let cm = read_counts(p, &format!("select/{}.counts", topic.slug))?.without_empty();
            let result: FitResult<f64> = fit_model(cm.counts(), &c.fit_config(&topic.id))?;
            if !result.converged && !result.rejected_converged {
                return Err(Error::NumericalFailure(format!(
                    "topic `{}`: neither link converged within {} iterations",
                    topic.id, c.fit.max_iter
                )));
            }
            let bc = component_coordinates(&result.model, &cm, &plot, c.components)?;
            let (m, n) = cm.counts().shape();
            let summary = format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&topic.id),
                result.chosen_link,
                result.loglik,
                result.rejected_loglik,
                result.converged,
                result.iterations,
                m,
                n
            );
            Ok((
                vec![
                    (format!("fit/{}.fit", topic.slug), result.to_text(&topic.id).into_bytes()),
                    (format!("fit/{}.components.json", topic.slug), json_bytes(&bc)),
                    (format!("fit/{}.frequency.csv", topic.slug), frequency_csv(&cm)?.into_bytes()),
                ],
                summary,
            ))
        })
        .collect::<Result<_>>()?;
    let mut summary = String::from("topic,link,loglik,rejected_loglik,converged,iterations,phrases,sources\n");
    let mut out = Artifacts::new();
    for (files, line) in per_topic {
        out.extend(files);
        summary.push_str(&line);
    }
    out.push(("fit/summary.csv".into(), summary.into_bytes()));
    out.push(("fit/topics.json".into(), json_bytes(&index)));
    Ok(out)
}

pub(crate) fn matrix_csv(labels: &[String], value: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::from("label");
    for l in labels {
        out.push(',');
        out.push_str(&csv_field(l));
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&csv_field(l));
        for j in 0..labels.len() {
            out.push(',');
            out.push_str(&value(i, j));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CorrelateSummary {
    labels: Vec<String>,
    /// Label pairs imputed as uncorrelated.
    missing: Vec<(String, String)>,
    /// Topics left out, with the reason.
    skipped: BTreeMap<String, String>,
}

fn load_components(p: &Pipeline) -> Result<Vec<TopicComponent<f64>>> {
    p.read_json("correlate/components.json")
}

/// Standardized components of every topic and their correlations.
pub(super) fn correlate(p: &Pipeline) -> Result<Artifacts> {
    let index = topic_index(p, "fit")?;
    let mut components = Vec::new();
    let mut skipped = BTreeMap::new();
    for topic in &index {
        let bc: BiasComponents<f64> = p.read_json(&format!("fit/{}.components.json", topic.slug))?;
        match TopicComponent::from_bias_components(&bc) {
            Ok(pair) => components.extend(pair),
            Err(e @ (Error::TooFewSources { .. } | Error::DegenerateVariance(_))) => {
                skipped.insert(topic.id.clone(), e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    let corr = crate::biasmap::correlation_matrix(&components)?;
    let summary = CorrelateSummary {
        labels: corr.labels.clone(),
        missing: corr.missing.iter().map(|&(i, j)| (corr.labels[i].clone(), corr.labels[j].clone())).collect(),
        skipped,
    };
    Ok(vec![
        ("correlate/components.json".into(), json_bytes(&components)),
        ("correlate/correlation.csv".into(), matrix_csv(&corr.labels, |i, j| corr.r[(i, j)].to_string()).into_bytes()),
        ("correlate/dr.csv".into(), matrix_csv(&corr.labels, |i, j| corr.dr[(i, j)].to_string()).into_bytes()),
        ("correlate/n_common.csv".into(), matrix_csv(&corr.labels, |i, j| corr.n_common(i, j).to_string()).into_bytes()),
        ("correlate/summary.json".into(), json_bytes(&summary)),
    ])
}

fn load_assignment(p: &Pipeline) -> Result<ClusterAssignment<f64>> {
    p.read_json("cluster/assignment.json")
}

/// Eigenvector placement, cluster assignment and jackknife errors.
pub(super) fn cluster(p: &Pipeline) -> Result<Artifacts> {
    let hint = p.config().left_right_topic.as_deref();
    let components = load_components(p)?;
    let (_, mut assignment) = cluster_components(&components, hint)?;
    if source_union(&components).len() >= MIN_JACKKNIFE_SOURCES {
        let errors = jackknife_errors(&components, &assignment, hint)?;
        for (placement, e) in assignment.placements.iter_mut().zip(errors) {
            placement.jackknife_std = Some(e);
        }
    }
    let mut csv = String::from("label,topic,component,number,cluster,eigen1,eigen2,x,y,x_std,y_std,relevance_weight\n");
    for pl in &assignment.placements {
        let (xs, ys) = pl.jackknife_std.map_or((String::new(), String::new()), |[a, b]| (a.to_string(), b.to_string()));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&pl.label),
            csv_field(&pl.topic_id),
            pl.component_index,
            pl.number,
            pl.cluster.name(),
            pl.raw[0],
            pl.raw[1],
            pl.x,
            pl.y,
            xs,
            ys,
            pl.relevance_weight
        );
    }
    let mut eigen = String::from("index,eigenvalue\n");
    for (i, v) in assignment.eigenvalues.iter().enumerate() {
        let _ = writeln!(eigen, "{},{}", i + 1, v);
    }
    let order = topic_ordering(&assignment).join("\n") + "\n";
    Ok(vec![
        ("cluster/assignment.json".into(), json_bytes(&assignment)),
        ("cluster/placements.csv".into(), csv.into_bytes()),
        ("cluster/eigenvalues.csv".into(), eigen.into_bytes()),
        ("cluster/order.txt".into(), order.into_bytes()),
    ])
}

fn load_landscape(p: &Pipeline) -> Result<LandscapeMap<f64>> {
    p.read_json("landscape/landscape.json")
}

/// Relevance-weighted two-axis source map.
pub(super) fn landscape(p: &Pipeline) -> Result<Artifacts> {
    let components = load_components(p)?;
    let assignment = load_assignment(p)?;
    let map = build_landscape(&components, &assignment, &p.config().anchors, false)?;
    let mut csv = String::from("source,x,y,x_std,y_std,x_components,y_components\n");
    for pt in &map.points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_field(&pt.source_id),
            pt.x,
            pt.y,
            pt.x_std,
            pt.y_std,
            pt.contributions[0],
            pt.contributions[1]
        );
    }
    let mut weights = String::from("label,x_weight,y_weight,x_sign,y_sign\n");
    for w in &map.weights_used {
        let _ = writeln!(weights, "{},{},{},{},{}", csv_field(&w.label), w.weights[0], w.weights[1], w.signs[0], w.signs[1]);
    }
    Ok(vec![
        ("landscape/landscape.json".into(), json_bytes(&map)),
        ("landscape/landscape.csv".into(), csv.into_bytes()),
        ("landscape/weights.csv".into(), weights.into_bytes()),
    ])
}

fn reorder_by_labels(corr: &CorrelationMatrix<f64>, labels: &[String]) -> CorrelationMatrix<f64> {
    let order: Vec<usize> = labels.iter().filter_map(|l| corr.labels.iter().position(|x| x == l)).collect();
    corr.reordered(&order)
}

/// SVG figures: one two-panel plot per topic, the correlation heatmap, the
/// component dartboard and the landscape.
pub(super) fn export(p: &Pipeline, ratings: Option<&Path>) -> Result<Artifacts> {
    let ratings = match ratings {
        Some(path) => svg::Ratings::read(path)?,
        None => svg::Ratings::default(),
    };
    let index = topic_index(p, "fit")?;
    let mut out = Artifacts::new();
    for topic in &index {
        let bc: BiasComponents<f64> = p.read_json(&format!("fit/{}.components.json", topic.slug))?;
        out.push((format!("figures/topic_{}.svg", topic.slug), svg::topic_panels(&bc, &ratings).into_bytes()));
    }
    let components = load_components(p)?;
    let assignment = load_assignment(p)?;
    let corr = crate::biasmap::correlation_matrix(&components)?;
    let ordered = reorder_by_labels(&corr, &topic_ordering(&assignment));
    let r = Matrix::from_fn(ordered.len(), ordered.len(), |i, j| ordered.r[(i, j)]);
    out.push(("figures/heatmap.svg".into(), svg::heatmap(&ordered.labels, &r).into_bytes()));
    out.push(("figures/dartboard.svg".into(), svg::dartboard(&assignment, svg::DARTBOARD_LABELS_PER_AXIS).into_bytes()));
    let map = load_landscape(p)?;
    out.push(("figures/landscape.svg".into(), svg::landscape(&map, &ratings).into_bytes()));
    Ok(out)
}
