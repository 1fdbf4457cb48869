//! Plotted bias coordinates and per-article phrase frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::phrasestats::CountMatrix;
use crate::scalar::Real;

use super::{fisher_information, FactorModel};

/// Minimum occurrences for a phrase or source to be plotted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlotThresholds {
    pub phrase: u64,
    /// Phrase threshold for topics with fewer than `small_topic_articles`.
    pub phrase_small: u64,
    pub source: u64,
    pub small_topic_articles: u64,
}

impl Default for PlotThresholds {
    fn default() -> Self {
        Self { phrase: 200, phrase_small: 100, source: 200, small_topic_articles: 15000 }
    }
}

impl PlotThresholds {
    /// No filtering.
    pub fn none() -> Self {
        Self { phrase: 0, phrase_small: 0, source: 0, small_topic_articles: 0 }
    }

    pub fn phrase_threshold(&self, total_articles: u64) -> u64 {
        if total_articles < self.small_topic_articles { self.phrase_small } else { self.phrase }
    }
}

/// Which filters were applied to a topic's coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub total_articles: u64,
    pub phrase_threshold: u64,
    pub source_threshold: u64,
    pub phrases_kept: usize,
    pub phrases_dropped: usize,
    pub sources_kept: usize,
    pub sources_dropped: usize,
}

/// A labelled point with one standard deviation error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate<T> {
    pub label: String,
    pub coords: [T; 2],
    /// `None` where the Fisher information is not positive.
    pub errors: [Option<T>; 2],
    pub occurrences: u64,
}

/// Per-topic coordinates of phrases and sources on two plotted components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasComponents<T> {
    pub topic_id: String,
    /// Canonical component indices that were plotted (usually `[1, 2]`).
    pub components: [usize; 2],
    pub phrase_coords: Vec<Coordinate<T>>,
    pub source_coords: Vec<Coordinate<T>>,
    pub thresholds: ThresholdRecord,
}

impl<T> BiasComponents<T> {
    pub fn phrase(&self, label: &str) -> Option<&Coordinate<T>> {
        self.phrase_coords.iter().find(|c| c.label == label)
    }

    pub fn source(&self, label: &str) -> Option<&Coordinate<T>> {
        self.source_coords.iter().find(|c| c.label == label)
    }
}

/// Columns `components` of the canonical `U` and `V` with Fisher error bars,
/// keeping phrases and sources that reach the occurrence thresholds.
pub fn component_coordinates<T: Real>(
    model: &FactorModel<T>,
    cm: &CountMatrix,
    thresholds: &PlotThresholds,
    components: [usize; 2],
) -> Result<BiasComponents<T>> {
    let r = model.rank();
    if r < 3 {
        return Err(Error::InsufficientRank(r));
    }
    if let Some(&bad) = components.iter().find(|&&k| k >= r) {
        return Err(Error::InvalidInput(format!("component {bad} out of range for rank {r}")));
    }
    let counts = cm.counts();
    let fisher = fisher_information(counts, model)?;
    let total_articles = cm.total_articles();
    let phrase_threshold = thresholds.phrase_threshold(total_articles);
    let [a, b] = components;

    let phrase_totals = counts.row_totals();
    let phrase_coords: Vec<Coordinate<T>> = cm
        .phrases()
        .iter()
        .enumerate()
        .filter(|&(i, _)| phrase_totals[i] >= phrase_threshold)
        .map(|(i, p)| Coordinate {
            label: p.to_string(),
            coords: [model.u[(i, a)], model.u[(i, b)]],
            errors: [fisher.std_u(i, a), fisher.std_u(i, b)],
            occurrences: phrase_totals[i],
        })
        .collect();
    let source_totals = counts.col_totals();
    let source_coords: Vec<Coordinate<T>> = cm
        .sources()
        .iter()
        .enumerate()
        .filter(|&(j, _)| source_totals[j] >= thresholds.source)
        .map(|(j, s)| Coordinate {
            label: s.clone(),
            coords: [model.v[(j, a)], model.v[(j, b)]],
            errors: [fisher.std_v(j, a), fisher.std_v(j, b)],
            occurrences: source_totals[j],
        })
        .collect();
    let thresholds = ThresholdRecord {
        total_articles,
        phrase_threshold,
        source_threshold: thresholds.source,
        phrases_kept: phrase_coords.len(),
        phrases_dropped: cm.phrases().len() - phrase_coords.len(),
        sources_kept: source_coords.len(),
        sources_dropped: cm.sources().len() - source_coords.len(),
    };
    Ok(BiasComponents { topic_id: cm.topic_id.clone(), components, phrase_coords, source_coords, thresholds })
}

/// Occurrences per article with Poisson counting errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerArticleFrequency<T> {
    /// `f_ij = N_ij / A_j`.
    pub frequency: Matrix<T>,
    /// `√N_ij / A_j`.
    pub std_error: Matrix<T>,
}

pub fn per_article_frequency<T: Real>(cm: &CountMatrix) -> Result<PerArticleFrequency<T>> {
    let articles = cm.article_counts();
    if let Some(j) = articles.iter().position(|&a| a == 0) {
        return Err(Error::ZeroArticles(cm.sources()[j].clone()));
    }
    let counts = cm.counts();
    let (m, n) = counts.shape();
    let a: Vec<T> = articles.iter().map(|&x| T::from_count(x)).collect();
    Ok(PerArticleFrequency {
        frequency: Matrix::from_fn(m, n, |i, j| T::from_count(counts.get(i, j)) / a[j]),
        std_error: Matrix::from_fn(m, n, |i, j| T::from_count(counts.get(i, j)).sqrt() / a[j]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::Counts;
    use crate::phrasestats::PhraseKey;
    use crate::poissonfactor::Link;

    fn matrix(counts: Counts, articles: Vec<u64>) -> CountMatrix {
        let phrases = (0..counts.rows()).map(|i| PhraseKey::parse(&format!("p{i}")).unwrap()).collect();
        let sources = (0..counts.cols()).map(|j| format!("s{j}")).collect();
        CountMatrix::new("T", phrases, sources, counts, articles).unwrap()
    }

    #[test]
    fn thresholds_switch_on_topic_size() {
        let t = PlotThresholds::default();
        assert_eq!(t.phrase_threshold(20044), 200);
        assert_eq!(t.phrase_threshold(15000), 200);
        assert_eq!(t.phrase_threshold(14999), 100);
        assert_eq!(t.phrase_threshold(7541), 100);
    }

    #[test]
    fn per_article() {
        let cm = matrix(Counts::from_rows(&[vec![97, 0]]), vec![100, 10]);
        let f = per_article_frequency::<f64>(&cm).unwrap();
        assert!((f.frequency[(0, 0)] - 0.97).abs() < 1e-12);
        assert!((f.std_error[(0, 0)] - 97f64.sqrt() / 100.0).abs() < 1e-12);
        assert_eq!((f.frequency[(0, 1)], f.std_error[(0, 1)]), (0.0, 0.0));
        let cm = matrix(Counts::from_rows(&[vec![1, 1]]), vec![3, 0]);
        assert!(matches!(per_article_frequency::<f64>(&cm), Err(Error::ZeroArticles(s)) if s == "s1"));
    }

    #[test]
    fn coordinates_filter_and_rank_check() {
        let counts = Counts::from_rows(&[vec![300, 10, 5, 1], vec![50, 40, 3, 2], vec![120, 90, 80, 70], vec![1, 2, 3, 4]]);
        let cm = matrix(counts, vec![100, 100, 100, 100]);
        let u = Matrix::from_fn(4, 3, |i, k| ((i + 2 * k) as f64 * 0.3).sin());
        let v = Matrix::from_fn(4, 3, |j, k| ((j * 3 + k) as f64 * 0.4).cos());
        let model = FactorModel::new(u.clone(), vec![3.0, 2.0, 1.0], v, Link::Exp).unwrap();
        let bc = component_coordinates(&model, &cm, &PlotThresholds::default(), [1, 2]).unwrap();
        assert_eq!(bc.thresholds.phrase_threshold, 100);
        assert_eq!(bc.phrase_coords.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["p0", "p2"]);
        assert_eq!(bc.source_coords.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["s0"]);
        assert_eq!(bc.phrase_coords[0].coords, [u[(0, 1)], u[(0, 2)]]);
        assert!(bc.phrase_coords.iter().flat_map(|c| c.errors).all(|e| e.is_some_and(|e| e.is_finite() && e > 0.0)));

        let strict = PlotThresholds { phrase_small: 10_000, ..Default::default() };
        let bc = component_coordinates(&model, &cm, &strict, [1, 2]).unwrap();
        assert!(bc.phrase_coords.is_empty() && !bc.source_coords.is_empty());

        let small = FactorModel::new(u.leading_columns(2), vec![1.0, 1.0], Matrix::from_fn(4, 2, |_, _| 0.5), Link::Exp).unwrap();
        assert!(matches!(component_coordinates(&small, &cm, &PlotThresholds::default(), [1, 2]), Err(Error::InsufficientRank(2))));
    }
}
