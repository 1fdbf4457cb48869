use std::collections::BTreeMap;

use phrasebias::biasmap::{
    canonicalize_axes, cluster_components, landscape, pearson, standardize, Anchors, Cluster, ClusterAssignment, ComponentId,
    Placement, TopicComponent,
};
use phrasebias::linalg::{symmetric_eigen, SymmetricEigen};
use phrasebias::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..30)
        .prop_flat_map(|n| (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(-10.0f64..10.0, n)))
        .prop_filter("both vary", |(a, b)| spread(a) > 1e-3 && spread(b) > 1e-3)
}

fn spread(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn symmetric_strategy() -> impl Strategy<Value = Matrix<f64>> {
    (2usize..8).prop_flat_map(|n| {
        prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |d| {
            let a = Matrix::from_row_major(n, n, d);
            Matrix::from_fn(n, n, |i, j| a[(i, j)] + a[(j, i)])
        })
    })
}

/// Components whose source values follow one of two latent stances.
fn planted_components(seed: u64, topics: usize, sources: usize) -> Vec<TopicComponent<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stance: Vec<[f64; 2]> = (0..sources).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let mut out = Vec::new();
    for t in 0..topics {
        for c in 0..2u8 {
            let axis = (t + c as usize) % 2;
            let values: BTreeMap<String, f64> =
                (0..sources).map(|s| (format!("s{s:02}"), stance[s][axis] + rng.gen_range(-0.2..0.2))).collect();
            let errors = values.keys().map(|k| (k.clone(), rng.gen_range(0.05..0.3))).collect();
            out.push(standardize(&format!("t{t}"), c + 1, &values, &errors).unwrap());
        }
    }
    out
}

fn placement(label: &str, x: f64, y: f64) -> Placement<f64> {
    Placement {
        label: label.into(),
        topic_id: label.split(' ').next().unwrap().into(),
        component_index: label.split(' ').nth(1).unwrap().parse().unwrap(),
        raw: [x, y],
        x,
        y,
        cluster: if x.abs() >= y.abs() { Cluster::LeftRight } else { Cluster::Establishment },
        relevance_weight: x.abs().max(y.abs()),
        number: 1,
        jackknife_std: None,
    }
}

fn component(topic: &str, index: u8, values: &[(&str, f64, f64)]) -> TopicComponent<f64> {
    TopicComponent {
        topic_id: topic.into(),
        component_index: index,
        source_values: values.iter().map(|&(s, v, _)| (s.to_string(), v)).collect(),
        source_errors: values.iter().map(|&(s, _, e)| (s.to_string(), e)).collect(),
    }
}

proptest! {
    #[test]
    fn pearson_is_affine_invariant((a, b) in sample_strategy(), scale in 0.1f64..10.0, shift in -5.0f64..5.0, flip in any::<bool>()) {
        let base = pearson(&a, &b).unwrap();
        let s = if flip { -scale } else { scale };
        let moved: Vec<f64> = a.iter().map(|x| s * x + shift).collect();
        let r = pearson(&moved, &b).unwrap();
        let expected = if flip { -base.r } else { base.r };
        prop_assert!((r.r - expected).abs() < 1e-9);
        prop_assert!((r.dr - base.dr).abs() < 1e-9);
        prop_assert!(r.r.abs() <= 1.0);
    }

    #[test]
    fn eigendecomposition_reconstructs_the_matrix(a in symmetric_strategy()) {
        let e = symmetric_eigen(&a);
        let n = a.rows();
        let rebuilt = e.vectors.scale_columns(&e.values).matmul(&e.vectors.transpose());
        prop_assert!(rebuilt.sub(&a).max_abs() <= 1e-10 * a.max_abs().max(1.0));
        let gram = e.vectors.t_matmul(&e.vectors);
        prop_assert!(gram.sub(&Matrix::identity(n)).max_abs() <= 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn axes_ignore_eigenvector_signs(seed in 0u64..500, flip1 in any::<bool>(), flip2 in any::<bool>()) {
        let components = planted_components(seed, 4, 12);
        let (corr, base) = cluster_components(&components, Some("t0")).unwrap();
        let e = symmetric_eigen(&corr.r);
        let mut vectors = e.vectors.clone();
        for (col, flip) in [(0, flip1), (1, flip2)] {
            if flip {
                let negated: Vec<f64> = vectors.column(col).iter().map(|v| -v).collect();
                vectors.set_column(col, &negated);
            }
        }
        let ids: Vec<ComponentId> = components.iter().map(ComponentId::from).collect();
        let flipped = canonicalize_axes(&SymmetricEigen { values: e.values, vectors }, &ids, Some("t0")).unwrap();
        for (a, b) in base.placements.iter().zip(&flipped.placements) {
            prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
            prop_assert_eq!(a.cluster, b.cluster);
        }
    }

    #[test]
    fn every_component_gets_exactly_one_cluster(seed in 0u64..500) {
        let components = planted_components(seed, 5, 10);
        let (_, assignment) = cluster_components(&components, None).unwrap();
        prop_assert_eq!(assignment.placements.len(), components.len());
        for p in &assignment.placements {
            let expected = if p.x.abs() >= p.y.abs() { Cluster::LeftRight } else { Cluster::Establishment };
            prop_assert_eq!(p.cluster, expected);
        }
        // Within a topic the two components carry the two numbers.
        let mut numbers: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
        for p in &assignment.placements {
            numbers.entry(p.topic_id.as_str()).or_default().push(p.number);
        }
        for n in numbers.values_mut() {
            n.sort();
            prop_assert_eq!(n.as_slice(), &[1, 2]);
        }
    }

    #[test]
    fn correlations_form_a_valid_matrix(seed in 0u64..500) {
        let components = planted_components(seed, 4, 9);
        let (corr, assignment) = cluster_components(&components, None).unwrap();
        let k = corr.len();
        for i in 0..k {
            prop_assert!((corr.r[(i, i)] - 1.0).abs() < 1e-12);
            for j in 0..k {
                prop_assert!((corr.r[(i, j)] - corr.r[(j, i)]).abs() < 1e-15);
                prop_assert!(corr.r[(i, j)].abs() <= 1.0);
            }
        }
        let trace: f64 = assignment.eigenvalues.iter().sum();
        prop_assert!((trace - k as f64).abs() < 1e-8);
    }

    #[test]
    fn standardized_values_have_zero_mean_and_unit_variance(values in prop::collection::vec(-100.0f64..100.0, 3..40)) {
        prop_assume!(spread(&values) > 1e-6);
        let map: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, &v)| (format!("s{i}"), v)).collect();
        let errors: BTreeMap<String, f64> = map.keys().map(|k| (k.clone(), 1.0)).collect();
        let c = standardize("t", 1, &map, &errors).unwrap();
        let n = values.len() as f64;
        let mean = c.source_values.values().sum::<f64>() / n;
        let var = c.source_values.values().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
        // Error bars are rescaled by the same standard deviation.
        let sd = (values.iter().map(|v| (v - values.iter().sum::<f64>() / n).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(c.source_errors.values().all(|e| (e * sd - 1.0).abs() < 1e-9));
    }

    #[test]
    fn landscape_does_not_depend_on_component_order(seed in 0u64..500) {
        let components = planted_components(seed, 4, 8);
        let (_, assignment) = cluster_components(&components, None).unwrap();
        let a = landscape(&components, &assignment, &Anchors::default(), true).unwrap();
        let mut reversed = components.clone();
        reversed.reverse();
        let b = landscape(&reversed, &assignment, &Anchors::default(), true).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert_eq!(&p.source_id, &q.source_id);
            prop_assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12);
            prop_assert!((p.x_std - q.x_std).abs() < 1e-12 && (p.y_std - q.y_std).abs() < 1e-12);
        }
    }
}

#[test]
fn equal_weights_average_values_and_shrink_errors() {
    let components = vec![
        component("a", 1, &[("s", 0.6, 0.2), ("t", -0.4, 0.1)]),
        component("b", 1, &[("s", 0.6, 0.2), ("t", 0.2, 0.1)]),
    ];
    let assignment = ClusterAssignment { eigenvalues: vec![1.5, 0.5], placements: vec![placement("a 1", 0.7, 0.7), placement("b 1", 0.7, 0.7)] };
    let map = landscape(&components, &assignment, &Anchors::default(), true).unwrap();
    let s = map.point("s").unwrap();
    assert!((s.x - 0.6).abs() < 1e-12 && (s.y - 0.6).abs() < 1e-12);
    assert!((s.x_std - 0.2 / 2f64.sqrt()).abs() < 1e-12);
    let t = map.point("t").unwrap();
    assert!((t.x - (-0.1)).abs() < 1e-12);
}

#[test]
fn negative_placement_flips_the_contribution() {
    let components = vec![component("a", 1, &[("s", 0.5, 0.1), ("t", -0.5, 0.1)])];
    let assignment = ClusterAssignment { eigenvalues: vec![1.0], placements: vec![placement("a 1", -0.9, 0.3)] };
    let map = landscape(&components, &assignment, &Anchors::default(), true).unwrap();
    assert!((map.point("s").unwrap().x + 0.5).abs() < 1e-12);
    assert!((map.point("s").unwrap().y - 0.5).abs() < 1e-12);
    let anchored = landscape(&components, &assignment, &Anchors { x_positive_source: Some("s".into()), y_positive_source: None }, true).unwrap();
    assert!((anchored.point("s").unwrap().x - 0.5).abs() < 1e-12);
}
