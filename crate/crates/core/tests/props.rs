//! Property tests for the model-level invariants.

use mnldesign::lmo::{dinkelbach, RatioProblem};
use mnldesign::mnl::{choice_probs, fisher_info, lifted_info, Assortment, Instance};
use mnldesign::oracle;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Builds a valid instance from raw draws: feature rows scaled into the unit
/// ball, revenues clamped into [0, 1].
fn instance_from(
    raw_features: Vec<Vec<f64>>,
    raw_revenues: Vec<f64>,
    k: usize,
    outside: bool,
) -> Option<Instance> {
    let n = raw_features.len();
    let d = raw_features[0].len();
    let mut feats = DMatrix::zeros(n, d);
    for (i, row) in raw_features.iter().enumerate() {
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 1.0 { 0.95 / norm } else { 1.0 };
        for (j, v) in row.iter().enumerate() {
            feats[(i, j)] = v * scale;
        }
    }
    let revenues: Vec<f64> = raw_revenues.iter().map(|r| r.clamp(0.0, 1.0)).collect();
    Instance::new(feats, revenues, k, 2.0, None, outside).ok()
}

fn arb_instance(outside: bool) -> impl Strategy<Value = (Instance, Vec<f64>)> {
    (3usize..7, 2usize..4).prop_flat_map(move |(n, d)| {
        (
            proptest::collection::vec(proptest::collection::vec(-1.0..1.0f64, d), n),
            proptest::collection::vec(0.0..1.0f64, n),
            proptest::collection::vec(-1.5..1.5f64, d),
            2usize..=3,
        )
            .prop_filter_map("valid instance", move |(feats, revs, theta, k)| {
                let k = k.min(feats.len());
                instance_from(feats, revs, k, outside).map(|inst| (inst, theta))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn choice_probs_form_a_distribution((inst, theta) in arb_instance(true)) {
        let theta = DVector::from_vec(theta);
        for s in oracle::all_assortments(&inst) {
            let p = choice_probs(&inst, &s, &theta).unwrap();
            prop_assert!((p.total() - 1.0).abs() <= 1e-12);
            prop_assert!(p.probs.iter().all(|&v| v > 0.0));
            prop_assert!(p.outside.unwrap() > 0.0);
        }
    }

    #[test]
    fn fisher_is_symmetric_psd((inst, theta) in arb_instance(true)) {
        let theta = DVector::from_vec(theta);
        for s in oracle::all_assortments(&inst).into_iter().take(12) {
            let info = fisher_info(&inst, &s, &theta).unwrap();
            prop_assert!((info.clone() - info.transpose()).amax() <= 1e-12);
            let min_eig = info.symmetric_eigenvalues().min();
            prop_assert!(min_eig >= -1e-10, "min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn schur_complement_recovers_fisher((inst, theta) in arb_instance(true)) {
        let theta = DVector::from_vec(theta);
        let d = inst.dim();
        for s in oracle::all_assortments(&inst).into_iter().take(8) {
            let lifted = lifted_info(&inst, &s, &theta).unwrap();
            prop_assert_eq!(lifted[(d, d)], 1.0);
            let top = lifted.view((0, 0), (d, d)).into_owned();
            let col = lifted.view((0, d), (d, 1)).into_owned();
            let schur = top - &col * col.transpose();
            let fisher = fisher_info(&inst, &s, &theta).unwrap();
            prop_assert!((schur - fisher).amax() <= 1e-10);
        }
    }

    #[test]
    fn dinkelbach_equals_enumeration(
        w in proptest::collection::vec(0.05..3.0f64, 3..10),
        s in proptest::collection::vec(-1.0..2.0f64, 10),
        k in 1usize..5,
        outside in proptest::bool::ANY,
    ) {
        let n = w.len();
        let s = s[..n].to_vec();
        let k = k.min(n);
        let p = RatioProblem::unconstrained(
            w,
            s,
            if outside { 1.0 } else { 0.0 },
            k,
            1,
        );
        let (_, ratio) = dinkelbach(&p).unwrap();
        let (_, brute) = oracle::brute_ratio_max(&p).unwrap();
        prop_assert!((ratio - brute).abs() <= 1e-12 * brute.abs().max(1.0));
    }

    #[test]
    fn assortment_labels_round_trip(items in proptest::collection::btree_set(0usize..30, 1..6)) {
        let v: Vec<usize> = items.into_iter().collect();
        let a = Assortment::new(v.clone()).unwrap();
        prop_assert_eq!(a.items(), &v[..]);
        let label = a.label();
        let parsed: Vec<usize> = label.split('|').map(|t| t.parse().unwrap()).collect();
        prop_assert_eq!(parsed, v);
    }
}
