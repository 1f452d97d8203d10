use std::collections::HashSet;

use cera_core::analytic::{efficiency_for_codewords, expected_singles, LoadPoint};
use cera_core::chain::{
    build_lumped_model, build_transition_model, efficiency_from_perceived, model_for, Configuration,
};
use cera_core::codebook::{enumerate_codewords, min_expanded_preambles, DEFAULT_ENUMERATION_CAP};
use cera_core::simulator::{brute_force_expected, outcome_for_codewords, DEFAULT_BRUTE_FORCE_CAP};
use cera_core::{CodebookSpec, Mode};
use num_rational::Ratio;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_budgets() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..=3, 1..=3).prop_filter("non-empty codebook", |m| m.iter().any(|&x| x > 0))
}

/// Exact `N(1 − 1/A)^(N−1)`.
fn exact_singles(users: u64, codewords: u64) -> Ratio<u128> {
    let (n, a) = (u128::from(users), u128::from(codewords));
    let k = (users - 1) as u32;
    Ratio::new(n * (a - 1).pow(k), a.pow(k))
}

fn ratio_f64(r: Ratio<u128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_round_trip(budgets in small_budgets()) {
        let spec = CodebookSpec::expanded(budgets).unwrap();
        let words = enumerate_codewords(&spec, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert_eq!(words.len() as u64, spec.size());
        let distinct: HashSet<_> = words.iter().collect();
        prop_assert_eq!(distinct.len(), words.len());
        for (rank, w) in words.iter().enumerate() {
            prop_assert_eq!(spec.rank_of(w), Some(rank as u64));
            prop_assert!(w.weight() > 0);
        }
        prop_assert!(words.windows(2).all(|p| p[0].symbols() < p[1].symbols()));
    }

    #[test]
    fn samples_belong_to_codebook(budgets in small_budgets(), seed in any::<u64>()) {
        let spec = CodebookSpec::expanded(budgets).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..32 {
            let r = spec.sample_rank(&mut rng);
            prop_assert!(r < spec.size());
            prop_assert_eq!(spec.rank_of(&spec.codeword_at(r)), Some(r));
        }
    }

    #[test]
    fn transition_rows_account_for_every_codeword(budgets in small_budgets()) {
        let spec = CodebookSpec::expanded(budgets).unwrap();
        let model = build_transition_model(&spec).unwrap();
        prop_assert_eq!(model.len() as u64, spec.size());
        prop_assert_eq!(model.initial_counts().iter().sum::<u64>(), spec.size());
        for i in 0..model.len() {
            prop_assert_eq!(model.row(i).map(|(_, c)| c).sum::<u64>(), spec.size());
            // No transition ever shrinks a configuration.
            for (j, _) in model.row(i) {
                let (from, to) = (&model.states()[i], &model.states()[j]);
                prop_assert!(from.counts().iter().zip(to.counts()).all(|(a, b)| a <= b));
                prop_assert!(to.counts().iter().zip(from.counts()).all(|(b, a)| b - a <= 1));
            }
        }
    }

    #[test]
    fn chain_matches_brute_force(budgets in small_budgets(), users in 1u64..=3) {
        let spec = CodebookSpec::expanded(budgets).unwrap();
        prop_assume!(spec.size() <= 12);
        let exact = brute_force_expected(&spec, users, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        let model = build_transition_model(&spec).unwrap();
        prop_assert_eq!(model.exact_perceived_count(users).unwrap(), exact.perceived);
        prop_assert_eq!(exact.singles, exact_singles(users, spec.size()));
        let chain = model.perceived_count(users);
        prop_assert!((chain - ratio_f64(exact.perceived)).abs() < 1e-12);
    }

    #[test]
    fn perceived_is_monotone_and_bounded(budgets in small_budgets()) {
        let spec = CodebookSpec::expanded(budgets).unwrap();
        let model = build_transition_model(&spec).unwrap();
        let curve: Vec<f64> = model.sweep().take(60).map(|(_, p)| p).collect();
        prop_assert!(curve.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!(curve.iter().all(|&p| p >= 1.0 - 1e-12 && p <= spec.size() as f64 + 1e-9));
    }

    #[test]
    fn min_preambles_is_tight(reference in 1u32..=64, frame_len in 1u32..=6) {
        let result = min_expanded_preambles(reference, frame_len);
        let m = u64::from(result.bound);
        let need = u64::from(reference) * u64::from(frame_len);
        let expanded = |m: u64| (m + 1).pow(frame_len) - 1;
        prop_assert!(expanded(m) >= need);
        if m > 0 {
            prop_assert!(expanded(m - 1) < need);
        }
        prop_assert_eq!(result.beats_reference, expanded(m) > need);
    }

    #[test]
    fn outcome_counts_are_consistent(budgets in small_budgets(), seed in any::<u64>(), users in 1usize..=8) {
        let spec = CodebookSpec::expanded(budgets).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<_> = (0..users).map(|_| spec.codeword_at(spec.sample_rank(&mut rng))).collect();
        let o = outcome_for_codewords(&spec, &words).unwrap();
        prop_assert_eq!(o.perceived, o.distinct_used + o.phantoms);
        prop_assert!(o.singles + o.collided_codewords == o.distinct_used);
        prop_assert!(o.singles as usize <= users);
    }
}

#[test]
fn single_subframe_reduces_to_reference() {
    for m in 1..=4u32 {
        let expanded = CodebookSpec::expanded(vec![m]).unwrap();
        let reference = CodebookSpec::reference(m, 1).unwrap();
        assert_eq!(expanded.size(), reference.size());
        let model = build_transition_model(&expanded).unwrap();
        for n in 1..=4u64 {
            let perceived = model.perceived_count(n);
            let brute = brute_force_expected(&reference, n, DEFAULT_BRUTE_FORCE_CAP).unwrap();
            assert!((perceived - ratio_f64(brute.distinct_used)).abs() < 1e-12, "m={m} N={n}");
            assert_eq!(brute.phantoms, Ratio::from_integer(0));
            let e = efficiency_from_perceived(&expanded, n, perceived).unwrap();
            let r = efficiency_for_codewords(n, reference.size()).unwrap();
            let point = LoadPoint::new(n, reference.size()).unwrap();
            assert!((e - expected_singles(point) / perceived).abs() < 1e-12);
            // Reference efficiency counts collided codewords instead of perceived ones.
            assert!(r.is_finite());
        }
    }
}

#[test]
fn lumped_model_agrees_with_full_model() {
    for (m, l) in [(2u32, 2usize), (3, 3), (2, 4), (4, 3)] {
        let spec = CodebookSpec::uniform_expanded(m, l).unwrap();
        let full = build_transition_model(&spec).unwrap();
        let lumped = build_lumped_model(&spec).unwrap();
        assert!(lumped.is_lumped() && lumped.len() < full.len());
        for (a, b) in full.sweep().zip(lumped.sweep()).take(150) {
            assert!((a.1 - b.1).abs() < 1e-10, "m={m} L={l} N={}", a.0);
        }
        assert!(model_for(&spec).unwrap().is_lumped());
    }
}

#[test]
fn reference_specs_have_no_chain() {
    let spec = CodebookSpec::reference(4, 2).unwrap();
    assert_eq!(spec.mode(), Mode::Reference);
    assert!(build_transition_model(&spec).is_err());
}

#[test]
fn configuration_cardinality_is_product_minus_one() {
    assert_eq!(Configuration::new(vec![2, 3]).cardinality(), 5);
    assert_eq!(Configuration::new(vec![5, 5]).cardinality(), 24);
    assert_eq!(Configuration::new(vec![1, 1, 2]).cardinality(), 1);
}
