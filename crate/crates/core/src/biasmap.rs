//! Cross-topic correlation of bias components, spectral axis discovery and
//! the aggregated two-dimensional media landscape.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix, SymmetricEigen};
use crate::poissonfactor::BiasComponents;
use crate::scalar::Real;

/// Minimum number of sources for standardization and correlation.
pub const MIN_SHARED: usize = 3;
/// Minimum number of sources for jackknife errors.
pub const MIN_JACKKNIFE_SOURCES: usize = 5;

/// One standardized bias component of one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicComponent<T> {
    pub topic_id: String,
    /// Position among the plotted components: 1 or 2.
    pub component_index: u8,
    pub source_values: BTreeMap<String, T>,
    /// Only sources with a finite error bar appear here.
    pub source_errors: BTreeMap<String, T>,
}

impl<T: Real> TopicComponent<T> {
    /// `"<topic> <index>"`, e.g. `"BLM 1"`.
    pub fn label(&self) -> String {
        format!("{} {}", self.topic_id, self.component_index)
    }

    /// Both plotted components of a topic, standardized.
    pub fn from_bias_components(bc: &BiasComponents<T>) -> Result<[Self; 2]> {
        let make = |axis: usize| {
            let values = bc.source_coords.iter().map(|c| (c.label.clone(), c.coords[axis])).collect();
            let errors = bc
                .source_coords
                .iter()
                .filter_map(|c| c.errors[axis].filter(|e| e.is_finite()).map(|e| (c.label.clone(), e)))
                .collect();
            standardize(&bc.topic_id, axis as u8 + 1, &values, &errors)
        };
        Ok([make(0)?, make(1)?])
    }

    fn without_source(&self, source: &str) -> Self {
        let mut out = self.clone();
        out.source_values.remove(source);
        out.source_errors.remove(source);
        out
    }
}

/// Affine rescale to zero mean and unit population variance; error bars are
/// divided by the same standard deviation.
pub fn standardize<T: Real>(
    topic_id: &str,
    component_index: u8,
    values: &BTreeMap<String, T>,
    errors: &BTreeMap<String, T>,
) -> Result<TopicComponent<T>> {
    let n = values.len();
    if n < MIN_SHARED {
        return Err(Error::TooFewSources { got: n, need: MIN_SHARED });
    }
    let count = T::from_count(n as u64);
    let mean = values.values().copied().sum::<T>() / count;
    let var = values.values().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
    let sd = var.sqrt();
    if !(sd > T::zero()) || !sd.is_finite() {
        return Err(Error::DegenerateVariance(format!("{topic_id} {component_index}")));
    }
    Ok(TopicComponent {
        topic_id: topic_id.to_string(),
        component_index,
        source_values: values.iter().map(|(k, &v)| (k.clone(), (v - mean) / sd)).collect(),
        source_errors: errors.iter().filter(|(k, _)| values.contains_key(*k)).map(|(k, &e)| (k.clone(), e / sd)).collect(),
    })
}

/// Pearson correlation with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation<T> {
    pub r: T,
    /// `√((1 − r²)/(n − 2))`.
    pub dr: T,
    pub n: usize,
}

/// `Δr = √((1 − r²)/(n − 2))`; requires `n > 2`.
pub fn pearson_error<T: Real>(r: T, n: usize) -> T {
    ((T::one() - r * r).max(T::zero()) / T::from_count(n as u64 - 2)).sqrt()
}

/// Pearson `r` of two equally long samples (two-pass, centered).
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<Correlation<T>> {
    assert_eq!(a.len(), b.len(), "pearson needs equal-length samples");
    let n = a.len();
    if n < MIN_SHARED {
        return Err(Error::TooFewShared(n));
    }
    let count = T::from_count(n as u64);
    let ma = a.iter().copied().sum::<T>() / count;
    let mb = b.iter().copied().sum::<T>() / count;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if !(saa > T::zero() && sbb > T::zero()) {
        return Err(Error::DegenerateVariance("correlation input is constant".into()));
    }
    let r = (sab / (saa.sqrt() * sbb.sqrt())).max(-T::one()).min(T::one());
    Ok(Correlation { r, dr: pearson_error(r, n), n })
}

/// Pearson correlation over the sources present (with finite values) in both.
pub fn pearson_with_error<T: Real>(a: &BTreeMap<String, T>, b: &BTreeMap<String, T>) -> Result<Correlation<T>> {
    let (xs, ys): (Vec<T>, Vec<T>) = a
        .iter()
        .filter(|(_, x)| x.is_finite())
        .filter_map(|(k, &x)| b.get(k).filter(|y| y.is_finite()).map(|&y| (x, y)))
        .unzip();
    pearson(&xs, &ys)
}

/// Symmetric matrix of pairwise correlations between topic components.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T> {
    pub labels: Vec<String>,
    pub r: Matrix<T>,
    pub dr: Matrix<T>,
    /// Shared-source counts, row-major `k × k`.
    pub n_common: Vec<usize>,
    /// Pairs `(i, j)`, `i < j`, imputed as `r = 0` for lack of shared data.
    pub missing: Vec<(usize, usize)>,
}

impl<T: Real> CorrelationMatrix<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_common(&self, i: usize, j: usize) -> usize {
        self.n_common[i * self.len() + j]
    }

    /// Reordered copy (rows and columns) following `order`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let k = self.len();
        let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let mut missing: Vec<(usize, usize)> =
            self.missing.iter().map(|&(i, j)| (pos[&i].min(pos[&j]), pos[&i].max(pos[&j]))).collect();
        missing.sort_unstable();
        Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            r: Matrix::from_fn(k, k, |a, b| self.r[(order[a], order[b])]),
            dr: Matrix::from_fn(k, k, |a, b| self.dr[(order[a], order[b])]),
            n_common: (0..k * k).map(|ab| self.n_common[order[ab / k] * k + order[ab % k]]).collect(),
            missing,
        }
    }
}

/// All pairwise correlations; pairs without enough shared sources (or with
/// a constant overlap) are imputed as zero and flagged in `missing`.
pub fn correlation_matrix<T: Real>(components: &[TopicComponent<T>]) -> Result<CorrelationMatrix<T>> {
    let k = components.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 components, got {k}")));
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let results: Vec<(usize, Option<Correlation<T>>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let a = &components[i].source_values;
            let b = &components[j].source_values;
            let shared = a.keys().filter(|s| b.contains_key(*s)).count();
            (shared, pearson_with_error(a, b).ok())
        })
        .collect();
    let mut r = Matrix::identity(k);
    let mut dr = Matrix::zeros(k, k);
    let mut n_common = vec![0; k * k];
    let mut missing = Vec::new();
    for (i, c) in components.iter().enumerate() {
        n_common[i * k + i] = c.source_values.len();
    }
    for (&(i, j), (shared, corr)) in pairs.iter().zip(results) {
        n_common[i * k + j] = shared;
        n_common[j * k + i] = shared;
        match corr {
            Some(c) => {
                r[(i, j)] = c.r;
                r[(j, i)] = c.r;
                dr[(i, j)] = c.dr;
                dr[(j, i)] = c.dr;
            }
            None => {
                missing.push((i, j));
                dr[(i, j)] = T::nan();
                dr[(j, i)] = T::nan();
            }
        }
    }
    Ok(CorrelationMatrix { labels: components.iter().map(TopicComponent::label).collect(), r, dr, n_common, missing })
}

/// Full symmetric eigendecomposition, eigenvalues descending.
pub fn spectral_axes<T: Real>(r: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    if r.rows() != r.cols() || !r.is_symmetric(T::lit(1e-12)) {
        return Err(Error::NotSymmetric);
    }
    Ok(symmetric_eigen(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cluster {
    LeftRight,
    Establishment,
}

impl Cluster {
    pub fn name(self) -> &'static str {
        match self {
            Cluster::LeftRight => "left_right",
            Cluster::Establishment => "establishment",
        }
    }
}

/// Where one topic component lands in the rotated eigenvector plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement<T> {
    pub label: String,
    pub topic_id: String,
    pub component_index: u8,
    /// Entries of the first two eigenvectors before rotation.
    pub raw: [T; 2],
    pub x: T,
    pub y: T,
    pub cluster: Cluster,
    /// `|x|` for left-right components, `|y|` for establishment ones.
    pub relevance_weight: T,
    /// Component number after the within-topic renumbering: the component
    /// with the larger weight is `1` if left-right, `2` otherwise.
    pub number: u8,
    pub jackknife_std: Option<[T; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment<T> {
    pub eigenvalues: Vec<T>,
    pub placements: Vec<Placement<T>>,
}

impl<T: Real> ClusterAssignment<T> {
    pub fn get(&self, label: &str) -> Option<&Placement<T>> {
        self.placements.iter().find(|p| p.label == label)
    }
}

/// Identity of a topic component for axis canonicalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentId {
    pub topic_id: String,
    pub component_index: u8,
}

impl ComponentId {
    pub fn label(&self) -> String {
        format!("{} {}", self.topic_id, self.component_index)
    }
}

impl<T: Real> From<&TopicComponent<T>> for ComponentId {
    fn from(c: &TopicComponent<T>) -> Self {
        Self { topic_id: c.topic_id.clone(), component_index: c.component_index }
    }
}

/// Rotation by 45°: `x = c(e₁ − e₂)`, `y = c(e₁ + e₂)`, `c = 1/√2`.
fn rotate<T: Real>(e1: T, e2: T) -> (T, T) {
    let c = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    (c * e1 - c * e2, c * e1 + c * e2)
}

fn orientation<T: Real>(values: &[T]) -> T {
    let sum: T = values.iter().copied().sum();
    let scale: T = values.iter().map(|v| v.abs()).sum();
    if sum.abs() > T::lit(1e-12) * scale {
        return sum.signum();
    }
    let peak = values.iter().copied().fold(T::zero(), |b, v| if v.abs() > b.abs() { v } else { b });
    if peak < T::zero() { -T::one() } else { T::one() }
}

/// Rotated coordinates for a given sign of the second eigenvector, with
/// each axis flipped to have a non-negative coordinate sum.
fn rotated<T: Real>(e1: &[T], e2: &[T], s2: T) -> (Vec<T>, Vec<T>) {
    let (mut xs, mut ys): (Vec<T>, Vec<T>) = e1.iter().zip(e2).map(|(&a, &b)| rotate(a, s2 * b)).unzip();
    for axis in [&mut xs, &mut ys] {
        if axis.iter().copied().sum::<T>() < T::zero() {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
    }
    (xs, ys)
}

/// Places every component in the rotated plane of the two leading
/// eigenvectors and assigns clusters.
///
/// The output does not depend on the signs of the eigenvectors. The first is
/// oriented to a non-negative sum. Flipping the second swaps the rotated
/// axes, so its sign is chosen such that the strongest component of the
/// `left_right_hint` topic lands in the left-right cluster; without a hint,
/// the left-right cluster is the one with the larger total relevance.
pub fn canonicalize_axes<T: Real>(
    eigen: &SymmetricEigen<T>,
    ids: &[ComponentId],
    left_right_hint: Option<&str>,
) -> Result<ClusterAssignment<T>> {
    let k = ids.len();
    if eigen.vectors.rows() != k {
        return Err(Error::ShapeMismatch { expected: (k, k), got: eigen.vectors.shape() });
    }
    let mut e1 = eigen.vectors.column(0);
    let s1 = orientation(&e1);
    e1.iter_mut().for_each(|v| *v = *v * s1);
    let e2 = if eigen.vectors.cols() > 1 { eigen.vectors.column(1) } else { vec![T::zero(); k] };
    let e2_sign = orientation(&e2);

    let score = |s2: T| -> (bool, T) {
        let (xs, ys) = rotated(&e1, &e2, s2);
        // The hinted topic's strongest component must lie on the x side.
        let hinted = left_right_hint
            .and_then(|topic| {
                (0..k)
                    .filter(|&i| ids[i].topic_id == topic)
                    .max_by(|&a, &b| {
                        let (ma, mb) = (xs[a].abs().max(ys[a].abs()), xs[b].abs().max(ys[b].abs()));
                        ma.partial_cmp(&mb).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                    })
            })
            .is_some_and(|i| xs[i].abs() >= ys[i].abs());
        let (mut lr, mut est) = (T::zero(), T::zero());
        for (x, y) in xs.iter().zip(&ys) {
            if x.abs() >= y.abs() {
                lr = lr + x.abs();
            } else {
                est = est + y.abs();
            }
        }
        (hinted, lr - est)
    };
    let (hint_a, margin_a) = score(e2_sign);
    let (hint_b, margin_b) = score(-e2_sign);
    let s2 = match (hint_a, hint_b) {
        (true, false) => e2_sign,
        (false, true) => -e2_sign,
        _ if margin_b > margin_a => -e2_sign,
        _ => e2_sign,
    };
    let (xs, ys) = rotated(&e1, &e2, s2);

    let mut placements: Vec<Placement<T>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (x, y) = (xs[i], ys[i]);
            let cluster = if x.abs() >= y.abs() { Cluster::LeftRight } else { Cluster::Establishment };
            let relevance_weight = match cluster {
                Cluster::LeftRight => x.abs(),
                Cluster::Establishment => y.abs(),
            };
            let number = if cluster == Cluster::LeftRight { 1 } else { 2 };
            Placement {
                label: id.label(),
                topic_id: id.topic_id.clone(),
                component_index: id.component_index,
                raw: [e1[i], s2 * e2[i]],
                x,
                y,
                cluster,
                relevance_weight,
                number,
                jackknife_std: None,
            }
        })
        .collect();
    renumber(&mut placements);
    Ok(ClusterAssignment { eigenvalues: eigen.values.clone(), placements })
}

/// Within each topic the heavier component is numbered by its own cluster
/// and its sibling receives the other number.
fn renumber<T: Real>(placements: &mut [Placement<T>]) {
    let topics: BTreeSet<String> = placements.iter().map(|p| p.topic_id.clone()).collect();
    for topic in topics {
        let idx: Vec<usize> = (0..placements.len()).filter(|&i| placements[i].topic_id == topic).collect();
        let Some(&lead) = idx.iter().max_by(|&&a, &&b| {
            placements[a]
                .relevance_weight
                .partial_cmp(&placements[b].relevance_weight)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(placements[b].component_index.cmp(&placements[a].component_index))
        }) else {
            continue;
        };
        let lead_number = if placements[lead].cluster == Cluster::LeftRight { 1 } else { 2 };
        for &i in &idx {
            placements[i].number = if i == lead { lead_number } else { 3 - lead_number };
        }
    }
}

/// Correlation, eigendecomposition and axis placement in one step.
pub fn cluster_components<T: Real>(
    components: &[TopicComponent<T>],
    left_right_hint: Option<&str>,
) -> Result<(CorrelationMatrix<T>, ClusterAssignment<T>)> {
    let corr = correlation_matrix(components)?;
    let eigen = spectral_axes(&corr.r)?;
    let ids: Vec<ComponentId> = components.iter().map(ComponentId::from).collect();
    let assignment = canonicalize_axes(&eigen, &ids, left_right_hint)?;
    Ok((corr, assignment))
}

/// All sources appearing in any component, sorted.
pub fn source_union<T: Real>(components: &[TopicComponent<T>]) -> Vec<String> {
    components.iter().flat_map(|c| c.source_values.keys().cloned()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Leave-one-source-out jackknife standard deviations of every placement's
/// `(x, y)`. Each replicate's axes are sign-aligned with the full solution.
pub fn jackknife_errors<T: Real>(
    components: &[TopicComponent<T>],
    full: &ClusterAssignment<T>,
    left_right_hint: Option<&str>,
) -> Result<Vec<[T; 2]>> {
    let sources = source_union(components);
    let n = sources.len();
    if n < MIN_JACKKNIFE_SOURCES {
        return Err(Error::TooFewSources { got: n, need: MIN_JACKKNIFE_SOURCES });
    }
    let full_x: Vec<T> = full.placements.iter().map(|p| p.x).collect();
    let full_y: Vec<T> = full.placements.iter().map(|p| p.y).collect();
    let replicates: Vec<(Vec<T>, Vec<T>)> = sources
        .par_iter()
        .map(|s| -> Result<(Vec<T>, Vec<T>)> {
            let reduced: Vec<TopicComponent<T>> = components.iter().map(|c| c.without_source(s)).collect();
            let (_, a) = cluster_components(&reduced, left_right_hint)?;
            let mut xs: Vec<T> = a.placements.iter().map(|p| p.x).collect();
            let mut ys: Vec<T> = a.placements.iter().map(|p| p.y).collect();
            for (axis, reference) in [(&mut xs, &full_x), (&mut ys, &full_y)] {
                let dot: T = axis.iter().zip(reference.iter()).map(|(&a, &b)| a * b).sum();
                if dot < T::zero() {
                    axis.iter_mut().for_each(|v| *v = -*v);
                }
            }
            Ok((xs, ys))
        })
        .collect::<Result<_>>()?;
    let count = T::from_count(n as u64);
    let factor = (count - T::one()) / count;
    let spread = |values: &mut dyn Iterator<Item = T>| -> T {
        let v: Vec<T> = values.collect();
        let mean = v.iter().copied().sum::<T>() / count;
        (factor * v.iter().map(|&t| (t - mean) * (t - mean)).sum::<T>()).sqrt()
    };
    Ok((0..full.placements.len())
        .map(|k| [spread(&mut replicates.iter().map(|r| r.0[k])), spread(&mut replicates.iter().map(|r| r.1[k]))])
        .collect())
}

/// Display order: left-right components by decreasing `x`, then
/// establishment components by increasing `y`.
pub fn topic_ordering<T: Real>(assignment: &ClusterAssignment<T>) -> Vec<String> {
    let by = |cluster: Cluster| {
        let mut v: Vec<&Placement<T>> = assignment.placements.iter().filter(|p| p.cluster == cluster).collect();
        v.sort_by(|a, b| {
            let ord = match cluster {
                Cluster::LeftRight => b.x.partial_cmp(&a.x),
                Cluster::Establishment => a.y.partial_cmp(&b.y),
            };
            ord.unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.label.cmp(&b.label))
        });
        v.into_iter().map(|p| p.label.clone())
    };
    by(Cluster::LeftRight).chain(by(Cluster::Establishment)).collect()
}

/// Presentation filter: the `per_axis` components with the largest `|x|`
/// and with the largest `|y|`, keeping only the heavier component per topic.
pub fn declutter<T: Real>(assignment: &ClusterAssignment<T>, per_axis: usize) -> Vec<String> {
    let mut best: BTreeMap<&str, &Placement<T>> = BTreeMap::new();
    for p in &assignment.placements {
        let entry = best.entry(p.topic_id.as_str()).or_insert(p);
        if p.relevance_weight > entry.relevance_weight {
            *entry = p;
        }
    }
    let pick = |key: fn(&Placement<T>) -> T| {
        let mut v: Vec<&Placement<T>> = best.values().copied().collect();
        v.sort_by(|a, b| key(b).partial_cmp(&key(a)).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.label.cmp(&b.label)));
        v.into_iter().take(per_axis).map(|p| p.label.clone()).collect::<Vec<_>>()
    };
    let mut out: BTreeSet<String> = pick(|p| p.x.abs()).into_iter().collect();
    out.extend(pick(|p| p.y.abs()));
    out.into_iter().collect()
}

/// Sources whose landscape coordinate must come out positive, fixing the
/// global reflection of each axis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Anchors {
    pub x_positive_source: Option<String>,
    pub y_positive_source: Option<String>,
}

/// Aggregated position of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint<T> {
    pub source_id: String,
    pub x: T,
    pub y: T,
    pub x_std: T,
    pub y_std: T,
    /// Number of components contributing to each axis.
    pub contributions: [usize; 2],
}

/// Axis weights of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentWeights<T> {
    pub label: String,
    /// Left-right weight `|x|` and establishment weight `|y|`.
    pub weights: [T; 2],
    /// Orientation `sign(x)`, `sign(y)` applied to the component's values.
    pub signs: [T; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeMap<T> {
    pub points: Vec<LandscapePoint<T>>,
    pub weights_used: Vec<ComponentWeights<T>>,
    /// Sources lacking a finite weighted contribution on some axis.
    pub omitted: Vec<String>,
}

impl<T: Real> LandscapeMap<T> {
    pub fn point(&self, source: &str) -> Option<&LandscapePoint<T>> {
        self.points.iter().find(|p| p.source_id == source)
    }
}

/// Relevance- and inverse-variance-weighted average of the standardized
/// components. On each axis a component enters with weight `|coordinate|`
/// and its values multiplied by the coordinate's sign:
///
/// ```text
/// x_s = Σ_c a_sc v_sc / Σ_c a_sc,   a_sc = w_c / σ_sc²
/// σ(x_s) = √(Σ_c w_c² / σ_sc²) / Σ_c a_sc
/// ```
///
/// With `strict`, a source without contributions on an axis is an error;
/// otherwise it is listed in `omitted`.
pub fn landscape<T: Real>(
    components: &[TopicComponent<T>],
    assignment: &ClusterAssignment<T>,
    anchors: &Anchors,
    strict: bool,
) -> Result<LandscapeMap<T>> {
    let mut weights_used = Vec::with_capacity(components.len());
    for c in components {
        let label = c.label();
        let p = assignment.get(&label).ok_or_else(|| Error::InvalidInput(format!("no placement for `{label}`")))?;
        let sign = |v: T| if v < T::zero() { -T::one() } else { T::one() };
        weights_used.push(ComponentWeights { label, weights: [p.x.abs(), p.y.abs()], signs: [sign(p.x), sign(p.y)] });
    }
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for source in source_union(components) {
        let mut axes = [(T::zero(), T::zero(), T::zero(), 0usize); 2];
        for (c, cw) in components.iter().zip(&weights_used) {
            let (Some(&v), Some(&sigma)) = (c.source_values.get(&source), c.source_errors.get(&source)) else {
                continue;
            };
            if !(sigma > T::zero()) || !v.is_finite() {
                continue;
            }
            let inv_var = T::one() / (sigma * sigma);
            for (axis, acc) in axes.iter_mut().enumerate() {
                let w = cw.weights[axis];
                if !(w > T::zero()) {
                    continue;
                }
                let a = w * inv_var;
                acc.0 = acc.0 + a * cw.signs[axis] * v;
                acc.1 = acc.1 + a;
                acc.2 = acc.2 + w * w * inv_var;
                acc.3 += 1;
            }
        }
        if let Some(axis) = axes.iter().position(|a| a.3 == 0 || !(a.1 > T::zero())) {
            if strict {
                return Err(Error::NoContribution { source_id: source, axis: if axis == 0 { "x" } else { "y" } });
            }
            omitted.push(source);
            continue;
        }
        let [(sx, wx, qx, nx), (sy, wy, qy, ny)] = axes;
        points.push(LandscapePoint {
            source_id: source,
            x: sx / wx,
            y: sy / wy,
            x_std: qx.sqrt() / wx,
            y_std: qy.sqrt() / wy,
            contributions: [nx, ny],
        });
    }
    let mut map = LandscapeMap { points, weights_used, omitted };
    apply_anchors(&mut map, anchors);
    Ok(map)
}

fn apply_anchors<T: Real>(map: &mut LandscapeMap<T>, anchors: &Anchors) {
    let flip_x = anchors.x_positive_source.as_deref().and_then(|s| map.point(s)).is_some_and(|p| p.x < T::zero());
    let flip_y = anchors.y_positive_source.as_deref().and_then(|s| map.point(s)).is_some_and(|p| p.y < T::zero());
    for p in &mut map.points {
        if flip_x {
            p.x = -p.x;
        }
        if flip_y {
            p.y = -p.y;
        }
    }
    for w in &mut map.weights_used {
        if flip_x {
            w.signs[0] = -w.signs[0];
        }
        if flip_y {
            w.signs[1] = -w.signs[1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn component(topic: &str, idx: u8, values: &[f64], errors: &[f64]) -> TopicComponent<f64> {
        let names: Vec<String> = (0..values.len()).map(|i| format!("s{i:02}")).collect();
        TopicComponent {
            topic_id: topic.into(),
            component_index: idx,
            source_values: names.iter().cloned().zip(values.iter().copied()).collect(),
            source_errors: names.into_iter().zip(errors.iter().copied()).collect(),
        }
    }

    #[test]
    fn standardize_examples() {
        let c = standardize("T", 1, &map(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]), &map(&[("a", 0.5)])).unwrap();
        let expected = 1.5f64.sqrt();
        assert!((c.source_values["a"] + expected).abs() < 1e-12);
        assert!(c.source_values["b"].abs() < 1e-12);
        assert!((c.source_errors["a"] - 0.5 * expected).abs() < 1e-12);
        let again = standardize("T", 1, &c.source_values, &c.source_errors).unwrap();
        for (k, v) in &c.source_values {
            assert!((again.source_values[k] - v).abs() < 1e-10);
        }
        assert!(matches!(
            standardize("T", 1, &map(&[("a", 2.0), ("b", 2.0), ("c", 2.0)]), &BTreeMap::new()),
            Err(Error::DegenerateVariance(_))
        ));
        assert!(matches!(standardize("T", 1, &map(&[("a", 2.0)]), &BTreeMap::new()), Err(Error::TooFewSources { .. })));
    }

    #[test]
    fn pearson_examples() {
        let a = [1.0f64, 2.0, 4.0, 8.0];
        let c = pearson(&a, &a).unwrap();
        assert!((c.r - 1.0).abs() < 1e-15 && c.dr == 0.0);
        let dr = pearson_error(0.9f64, 78);
        assert!((0.049..=0.051).contains(&dr));
        assert!(matches!(pearson(&[1.0, 2.0], &[2.0, 1.0]), Err(Error::TooFewShared(2))));
        let neg: Vec<f64> = a.iter().map(|v| -3.0 * v + 1.0).collect();
        assert!((pearson(&a, &neg).unwrap().r + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_uses_shared_sources_only() {
        let a = map(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("x", 100.0)]);
        let b = map(&[("a", 2.0), ("b", 4.0), ("c", 6.0), ("y", -5.0)]);
        let c = pearson_with_error(&a, &b).unwrap();
        assert_eq!(c.n, 3);
        assert!((c.r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_components_and_missing_pairs() {
        let a = component("A", 1, &[1.0, 2.0, 3.0, 5.0], &[1.0; 4]);
        let cm = correlation_matrix(&[a.clone(), TopicComponent { topic_id: "B".into(), ..a.clone() }]).unwrap();
        assert!((cm.r[(0, 1)] - 1.0).abs() < 1e-15);
        assert_eq!(cm.r[(0, 0)], 1.0);
        let mut b = a.clone();
        b.topic_id = "C".into();
        b.source_values = map(&[("s00", 1.0), ("s01", 2.0), ("zz", 3.0)]);
        let cm = correlation_matrix(&[a, b]).unwrap();
        assert_eq!(cm.missing, vec![(0, 1)]);
        assert_eq!(cm.r[(0, 1)], 0.0);
        assert_eq!(cm.n_common(0, 1), 2);
    }

    #[test]
    fn spectral_two_by_two() {
        let e = spectral_axes(&Matrix::from_rows(&[vec![1.0f64, 0.9], vec![0.9, 1.0]])).unwrap();
        assert!((e.values[0] - 1.9).abs() < 1e-12 && (e.values[1] - 0.1).abs() < 1e-12);
        assert!(matches!(spectral_axes(&Matrix::from_rows(&[vec![1.0, 0.9], vec![0.8, 1.0]])), Err(Error::NotSymmetric)));
    }

    fn block_matrix(k: usize, inner: f64, cross: f64) -> Matrix<f64> {
        Matrix::from_fn(2 * k, 2 * k, |i, j| {
            if i == j {
                1.0
            } else if (i < k) == (j < k) {
                inner
            } else {
                cross
            }
        })
    }

    fn ids(n: usize) -> Vec<ComponentId> {
        (0..n).map(|i| ComponentId { topic_id: format!("t{i}"), component_index: 1 }).collect()
    }

    #[test]
    fn planted_clusters_recovered_and_sign_invariant() {
        let r = block_matrix(3, 0.9, 0.3);
        let eigen = spectral_axes(&r).unwrap();
        let hint = Some("t0");
        let a = canonicalize_axes(&eigen, &ids(6), hint).unwrap();
        for (i, p) in a.placements.iter().enumerate() {
            assert_eq!(p.cluster, if i < 3 { Cluster::LeftRight } else { Cluster::Establishment }, "{p:?}");
        }
        for flips in [[-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]] {
            let mut e = eigen.clone();
            for (k, flip) in flips.into_iter().enumerate() {
                let col: Vec<f64> = e.vectors.column(k).iter().map(|v| v * flip).collect();
                e.vectors.set_column(k, &col);
            }
            let b = canonicalize_axes(&e, &ids(6), hint).unwrap();
            for (p, q) in a.placements.iter().zip(&b.placements) {
                assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12 && p.cluster == q.cluster);
            }
        }
    }

    #[test]
    fn single_component_is_left_right() {
        let eigen = spectral_axes(&Matrix::from_rows(&[vec![1.0f64]])).unwrap();
        let a = canonicalize_axes(&eigen, &ids(1), None).unwrap();
        let p = &a.placements[0];
        assert_eq!(p.cluster, Cluster::LeftRight);
        assert!((p.relevance_weight - p.x.abs()).abs() < 1e-15);
    }

    #[test]
    fn renumbering_within_topic() {
        let mk = |idx: u8, cluster: Cluster, w: f64| Placement {
            label: format!("T {idx}"),
            topic_id: "T".into(),
            component_index: idx,
            raw: [0.0, 0.0],
            x: 0.0,
            y: 0.0,
            cluster,
            relevance_weight: w,
            number: 0,
            jackknife_std: None,
        };
        let mut p = vec![mk(1, Cluster::Establishment, 0.2), mk(2, Cluster::Establishment, 0.5)];
        renumber(&mut p);
        assert_eq!((p[0].number, p[1].number), (1, 2));
        let mut p = vec![mk(1, Cluster::Establishment, 0.2), mk(2, Cluster::LeftRight, 0.5)];
        renumber(&mut p);
        assert_eq!((p[0].number, p[1].number), (2, 1));
    }

    #[test]
    fn ordering_rule() {
        let mk = |label: &str, cluster, x: f64, y: f64| Placement {
            label: label.into(),
            topic_id: label.into(),
            component_index: 1,
            raw: [0.0, 0.0],
            x,
            y,
            cluster,
            relevance_weight: 0.0,
            number: 1,
            jackknife_std: None,
        };
        let a = ClusterAssignment {
            eigenvalues: vec![],
            placements: vec![
                mk("e4", Cluster::Establishment, 0.0, 0.4),
                mk("l1", Cluster::LeftRight, 0.1, 0.0),
                mk("e2", Cluster::Establishment, 0.0, 0.2),
                mk("l3", Cluster::LeftRight, 0.3, 0.0),
            ],
        };
        assert_eq!(topic_ordering(&a), ["l3", "l1", "e2", "e4"]);
    }

    fn single_assignment(label: &str) -> ClusterAssignment<f64> {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        ClusterAssignment {
            eigenvalues: vec![1.0],
            placements: vec![Placement {
                label: label.into(),
                topic_id: label.split(' ').next().unwrap().into(),
                component_index: 1,
                raw: [1.0, 0.0],
                x: c,
                y: c,
                cluster: Cluster::LeftRight,
                relevance_weight: c,
                number: 1,
                jackknife_std: None,
            }],
        }
    }

    #[test]
    fn landscape_identity_and_averaging() {
        let c = component("A", 1, &[-1.0, 0.5, 0.5], &[0.2, 0.3, 0.4]);
        let l = landscape(std::slice::from_ref(&c), &single_assignment("A 1"), &Anchors::default(), true).unwrap();
        for p in &l.points {
            assert!((p.x - c.source_values[&p.source_id]).abs() < 1e-15);
            assert!((p.x_std - c.source_errors[&p.source_id]).abs() < 1e-15);
        }
        let d = TopicComponent { topic_id: "B".into(), ..c.clone() };
        let mut two = single_assignment("A 1");
        two.placements.push(Placement { label: "B 1".into(), topic_id: "B".into(), ..two.placements[0].clone() });
        let l = landscape(&[c.clone(), d], &two, &Anchors::default(), true).unwrap();
        for p in &l.points {
            assert!((p.x - c.source_values[&p.source_id]).abs() < 1e-15);
            assert!((p.x_std - c.source_errors[&p.source_id] / 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn landscape_missing_errors() {
        let mut c = component("A", 1, &[-1.0, 0.5, 0.5], &[0.2, 0.3, 0.4]);
        c.source_errors.remove("s01");
        assert!(matches!(
            landscape(std::slice::from_ref(&c), &single_assignment("A 1"), &Anchors::default(), true),
            Err(Error::NoContribution { .. })
        ));
        let l = landscape(&[c], &single_assignment("A 1"), &Anchors::default(), false).unwrap();
        assert_eq!(l.omitted, ["s01"]);
    }

    #[test]
    fn anchors_fix_reflection() {
        let c = component("A", 1, &[-1.0, 0.5, 0.5], &[0.2, 0.3, 0.4]);
        let anchors = Anchors { x_positive_source: Some("s00".into()), y_positive_source: None };
        let l = landscape(&[c], &single_assignment("A 1"), &anchors, true).unwrap();
        assert!(l.point("s00").unwrap().x > 0.0);
        assert!(l.point("s00").unwrap().y < 0.0);
    }

    #[test]
    fn jackknife_minimum_and_outlier() {
        let base = [0.0, 1.0, 2.0, 3.0, 4.0];
        let comps = vec![
            component("A", 1, &base, &[1.0; 5]),
            component("B", 1, &[0.1, 1.1, 1.9, 3.2, 3.9], &[1.0; 5]),
            component("C", 1, &[4.0, 2.5, 2.0, 1.0, 0.2], &[1.0; 5]),
        ];
        let (_, full) = cluster_components(&comps, None).unwrap();
        let jk = jackknife_errors(&comps, &full, None).unwrap();
        assert!(jk.iter().all(|s| s[0].is_finite() && s[1].is_finite()));
        let few: Vec<TopicComponent<f64>> = comps.iter().map(|c| c.without_source("s04")).collect();
        assert!(matches!(jackknife_errors(&few, &full, None), Err(Error::TooFewSources { got: 4, need: 5 })));
    }
}
