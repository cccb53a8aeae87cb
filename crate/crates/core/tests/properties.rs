use cfaid_core::counterexample::{a_counterexample, theta_counterexample};
use cfaid_core::generator::{random_design, random_model};
use cfaid_core::linalg::{line_angle, relative_frobenius_error, singular_values};
use cfaid_core::oracle::{a_nonidentifiability_witness, intersection_set_bruteforce};
use cfaid_core::recovery::{factor_subspace, recover, recover_theta, Subspace};
use cfaid_core::{DesignMatrix, FactorModel, FactorSet, GeneratorSpec, PatternPolicy, Verdict};
use nalgebra::DMatrix;
use proptest::prelude::*;

const TOL: f64 = 1e-8;

fn design_strategy(max_j: usize, max_k: usize) -> impl Strategy<Value = DesignMatrix> {
    (1..=max_j, 1..=max_k).prop_flat_map(|(j, k)| {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), k), j)
            .prop_map(|rows| DesignMatrix::from_bool_rows(&rows).unwrap())
    })
}

fn permuted(q: &DesignMatrix, rows: &[usize], cols: &[usize]) -> DesignMatrix {
    let out: Vec<Vec<bool>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| q.get(r, c)).collect())
        .collect();
    DesignMatrix::from_bool_rows(&out).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn masking_is_transitive(q in design_strategy(12, 5)) {
        let k = q.n_factors();
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    if a != b && b != c && a != c && q.masks(a, b).unwrap() && q.masks(b, c).unwrap() {
                        prop_assert!(q.masks(a, c).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn masking_verdict_matches_intersection_and_oracle(q in design_strategy(30, 6)) {
        for f in 0..q.n_factors() {
            let by_masking = q.theta_identifiable(f).unwrap();
            let set = q.intersection_set(f).unwrap();
            prop_assert_eq!(by_masking, set == FactorSet::from([f]));
            prop_assert_eq!(set, intersection_set_bruteforce(&q, f).unwrap());
        }
    }

    #[test]
    fn theta_failure_implies_loading_failure(q in design_strategy(15, 5)) {
        let k = q.n_factors();
        for f in 0..k {
            if q.theta_identifiable(f).unwrap() {
                continue;
            }
            let partner = (0..k).find(|&o| o != f && q.masks(f, o).unwrap());
            prop_assert!(partner.is_some() || k == 1);
            if let Some(o) = partner {
                let verdict = q.a_identifiable(o).unwrap();
                prop_assert!(verdict != Verdict::Identifiable);
            }
        }
    }

    #[test]
    fn verdicts_are_permutation_equivariant(
        q in design_strategy(10, 5),
        row_seed in any::<u64>(),
        col_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(row_seed ^ col_seed.rotate_left(17));
        let mut rows: Vec<usize> = (0..q.n_items()).collect();
        let mut cols: Vec<usize> = (0..q.n_factors()).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let base = q.analyze();
        let p = permuted(&q, &rows, &cols).analyze();
        for (new, &old) in cols.iter().enumerate() {
            prop_assert_eq!(p.theta_identifiable[new], base.theta_identifiable[old]);
            prop_assert_eq!(p.a_identifiable[new], base.a_identifiable[old]);
        }
        let only_rows = permuted(&q, &rows, &(0..q.n_factors()).collect::<Vec<_>>()).analyze();
        prop_assert_eq!(&only_rows.theta_identifiable, &base.theta_identifiable);
        prop_assert_eq!(&only_rows.masking, &base.masking);
    }

    #[test]
    fn intersect_is_idempotent(cols in proptest::collection::vec(-1.0f64..1.0, 12)) {
        let m = DMatrix::from_column_slice(6, 2, &cols);
        let w = Subspace::column_space(&m, TOL);
        prop_assert_eq!(w.intersect(&w, TOL).unwrap().dim(), w.dim());
    }
}

#[test]
fn exhaustive_small_designs_agree_with_oracle() {
    for j in 1..=4usize {
        for k in 1..=3usize {
            for bits in 0u32..(1 << (j * k)) {
                let rows: Vec<Vec<bool>> = (0..j)
                    .map(|r| (0..k).map(|c| bits & (1 << (r * k + c)) != 0).collect())
                    .collect();
                let q = DesignMatrix::from_bool_rows(&rows).unwrap();
                for f in 0..k {
                    let set = q.intersection_set(f).unwrap();
                    assert_eq!(set, intersection_set_bruteforce(&q, f).unwrap());
                    assert_eq!(q.theta_identifiable(f).unwrap(), set == FactorSet::from([f]));
                }
            }
        }
    }
}

fn instance(seed: u64, n: usize, j: usize, k: usize, policy: PatternPolicy) -> FactorModel {
    let spec = GeneratorSpec::new(n, j, k, seed, policy);
    let q = random_design(&spec).unwrap();
    random_model(&spec, &q).unwrap()
}

#[test]
fn dimension_and_intersection_laws() {
    for seed in 0..30 {
        let model = instance(seed, 12, 24, 4, PatternPolicy::UniformRandom);
        let m = model.compose();
        let patterns = model.design().realized_patterns();
        let spaces: Vec<Subspace> = patterns
            .iter()
            .map(|p| {
                let cols: Vec<_> = p.items.iter().map(|&i| m.column(i).into_owned()).collect();
                Subspace::column_space(&DMatrix::from_columns(&cols), TOL)
            })
            .collect();
        for (p, s) in patterns.iter().zip(&spaces) {
            assert_eq!(s.dim(), p.factors.len(), "seed {seed}");
        }
        for (a, sa) in patterns.iter().zip(&spaces) {
            for (b, sb) in patterns.iter().zip(&spaces) {
                let common = a.factors.intersection(&b.factors).count();
                assert_eq!(sa.intersect(sb, TOL).unwrap().dim(), common, "seed {seed}");
            }
        }
    }
}

#[test]
fn recovery_up_to_scale_and_recomposition() {
    for seed in 0..40 {
        let model = instance(seed, 15, 20, 4, PatternPolicy::IdentityAnchored);
        let m = model.compose();
        let result = recover(&m, model.design(), TOL).unwrap();
        assert!(result.skipped.is_empty());
        for (f, d) in &result.directions {
            let truth = model.theta().column(*f).into_owned();
            let cos = d.dot(&truth).abs() / truth.norm();
            assert!(cos >= 1.0 - 1e-10, "seed {seed} factor {f}: cos {cos}");
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
        let theta_hat = result.theta_hat().unwrap();
        let loadings = &result.loadings.as_ref().unwrap().loadings;
        let err = relative_frobenius_error(&(theta_hat * loadings.transpose()), &m);
        assert!(err <= 1e-10, "seed {seed}: {err}");
    }
}

#[test]
fn fold_order_does_not_matter() {
    for seed in 0..10 {
        let model = instance(seed, 10, 20, 3, PatternPolicy::IdentityAnchored);
        let m = model.compose();
        let q = model.design();
        for f in 0..3 {
            let forward = factor_subspace(&m, q, f, TOL).unwrap();
            let mut spaces: Vec<Subspace> = q
                .realized_patterns()
                .into_iter()
                .filter(|p| p.factors.contains(&f))
                .map(|p| {
                    let cols: Vec<_> = p.items.iter().map(|&i| m.column(i).into_owned()).collect();
                    Subspace::column_space(&DMatrix::from_columns(&cols), TOL)
                })
                .collect();
            spaces.reverse();
            let mut acc = spaces[0].clone();
            for s in &spaces[1..] {
                acc = acc.intersect(s, TOL).unwrap();
            }
            assert_eq!(acc.dim(), forward.dim());
            let a = forward.basis().column(0).into_owned();
            let b = acc.basis().column(0).into_owned();
            assert!(line_angle(&a, &b) < 1e-10);
        }
    }
}

#[test]
fn masking_factor_is_not_recovered() {
    let model = instance(3, 10, 20, 3, PatternPolicy::PlantedMasking(vec![(0, 1)]));
    let m = model.compose();
    assert!(recover_theta(&m, model.design(), 0, TOL).is_err());
    assert!(recover_theta(&m, model.design(), 1, TOL).is_ok());
    let r = recover(&m, model.design(), TOL).unwrap();
    assert_eq!(r.skipped, vec![0]);
    assert_eq!(r.intersection_dims[0], 2);
}

fn masked_pairs(q: &DesignMatrix) -> Vec<(usize, usize)> {
    let k = q.n_factors();
    (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && q.masks(a, b).unwrap())
        .collect()
}

#[test]
fn counterexamples_are_valid_and_nontrivial() {
    let plants = [vec![(1, 0)], vec![(1, 0), (2, 1)], vec![(0, 2), (3, 2)]];
    for seed in 0..30u64 {
        let plant = plants[seed as usize % plants.len()].clone();
        let model = instance(seed, 10, 30, 4, PatternPolicy::PlantedMasking(plant));
        for (masker, masked) in masked_pairs(model.design()) {
            let t = theta_counterexample(&model, masker, masked, None).unwrap();
            let a = a_counterexample(&model, masked, masker, None).unwrap();
            for alt in [t, a] {
                let v = alt.verify(&model, TOL);
                assert!(v.recomposition_error <= 1e-12);
                assert!(v.assumptions.overall, "seed {seed}: {:?}", v.assumptions);
                assert!(alt.perturbation.epsilon >= 1e-3);
                assert!(alt.perturbed_angle(&model) > 1e-6);
            }
        }
    }
}

#[test]
fn masked_loadings_are_independent() {
    for seed in 0..30u64 {
        let model = instance(seed, 8, 30, 4, PatternPolicy::PlantedMasking(vec![(1, 0), (3, 2)]));
        for (masker, masked) in masked_pairs(model.design()) {
            let pair = model.loadings().select_columns(&[masker, masked]);
            let sv = singular_values(&pair);
            assert!(sv[1] >= TOL * sv[0]);
        }
    }
}

#[test]
fn witness_agrees_with_loading_verdict() {
    let plants = [vec![(1, 0)], vec![(2, 0), (2, 1)], vec![(0, 3), (1, 2)], vec![]];
    for seed in 0..40u64 {
        let plant = plants[seed as usize % plants.len()].clone();
        let model = instance(seed, 8, 30, 4, PatternPolicy::PlantedMasking(plant));
        for f in 0..4 {
            let verdict = model.design().a_identifiable(f).unwrap();
            let witness = a_nonidentifiability_witness(&model, f, TOL);
            assert_eq!(verdict == Verdict::NotIdentifiable, witness.is_some(), "seed {seed} factor {f}");
            if let Some(c) = witness {
                let others: Vec<usize> = (0..4).filter(|&o| o != f).collect();
                let roots: Vec<usize> = (0..30).filter(|&j| !model.design().get(j, f)).collect();
                let combo = model.loadings().select_columns(&others) * c;
                for j in roots {
                    assert!(combo[j].abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn planted_violations_are_detected() {
    let model = instance(1, 8, 20, 3, PatternPolicy::IdentityAnchored);
    let q = model.design().clone();

    let mut theta = model.theta().clone();
    let c = theta.column(0) * 2.0;
    theta.set_column(2, &c);
    let bad = FactorModel::new(theta, model.loadings().clone(), q.clone(), None).unwrap();
    assert!(!bad.check_assumptions(TOL).a1_theta_rank_ok);

    let zero_item = (0..20).find(|&j| !q.get(j, 0)).unwrap();
    let mut a = model.loadings().clone();
    a[(zero_item, 0)] = 0.5;
    let bad = FactorModel::new(model.theta().clone(), a, q.clone(), None).unwrap();
    assert_eq!(bad.check_assumptions(TOL).a3_violations, vec![(zero_item, 0)]);

    let big = model.max_abs_entry();
    let bad = FactorModel::new(model.theta().clone(), model.loadings().clone(), q.clone(), Some(big)).unwrap();
    assert!(!bad.check_assumptions(TOL).a4_ok);

    let pattern = q.realized_patterns().into_iter().find(|p| p.factors.len() >= 2);
    if let Some(p) = pattern {
        let mut a = model.loadings().clone();
        let cols: Vec<usize> = p.factors.iter().copied().collect();
        for &item in &p.items {
            a[(item, cols[1])] = a[(item, cols[0])];
        }
        let bad = FactorModel::new(model.theta().clone(), a, q, None).unwrap();
        assert!(!bad.check_assumptions(TOL).a2_failures.is_empty());
    }
}
