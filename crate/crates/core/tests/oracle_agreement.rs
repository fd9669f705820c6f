//! The engine, completed by backtracking, must agree with exhaustive
//! enumeration on small trees, and never deduce a pair that some ciphering
//! violates.

use treecipher::oracle::{
    self, decide_complete, enumerate_isomorphisms, is_ciphering, DEFAULT_ENUMERATION_CAP,
};
use treecipher::randgen::{self, GenConfig, Scenario};
use treecipher::{ahu, engine, CipherMode, EngineOptions, LabeledTree, Outcome, Verdict};

fn pair(n: usize, a: usize, seed: u64, scenario: Scenario) -> Option<(LabeledTree, LabeledTree)> {
    randgen::scenario_pair(&GenConfig::new(n, a, seed).unwrap(), scenario).ok()
}

fn cases() -> impl Iterator<Item = (LabeledTree, LabeledTree)> {
    (0..600u64).flat_map(|seed| {
        let n = 1 + (seed % 8) as usize;
        let a = 1 + (seed / 8 % 3) as usize;
        [Scenario::Similar, Scenario::Perturbed]
            .into_iter()
            .filter_map(move |s| pair(n, a, seed, s))
    })
}

#[test]
fn verdicts_match_brute_force() {
    let mut refuted = 0;
    for (t1, t2) in cases() {
        for mode in [CipherMode::Bijective, CipherMode::Identity] {
            let (truth, _) = oracle::decide_brute(&t1, &t2, mode, DEFAULT_ENUMERATION_CAP).unwrap();
            let verdict = decide_complete(&t1, &t2, mode).verdict();
            assert_eq!(
                verdict == Verdict::Isomorphic,
                truth,
                "{} vs {} ({mode:?})",
                t1.serialize(),
                t2.serialize()
            );
            refuted += usize::from(!truth);
        }
    }
    assert!(refuted > 0);
}

/// Relabeled copies exercise the bijective mode with disjoint alphabets.
#[test]
fn verdicts_match_on_ciphered_copies() {
    for seed in 0..300u64 {
        let n = 2 + (seed % 7) as usize;
        let scenario = if seed.is_multiple_of(2) {
            Scenario::Similar
        } else {
            Scenario::Perturbed
        };
        let Some((t1, t2)) = pair(n, 3, seed, scenario) else {
            continue;
        };
        let t2 = randgen::apply_random_cipher(&t2, seed);
        let (truth, _) =
            oracle::decide_brute(&t1, &t2, CipherMode::Bijective, DEFAULT_ENUMERATION_CAP).unwrap();
        let verdict = decide_complete(&t1, &t2, CipherMode::Bijective).verdict();
        assert_eq!(
            verdict == Verdict::Isomorphic,
            truth,
            "{} vs {}",
            t1.serialize(),
            t2.serialize()
        );
    }
}

#[test]
fn deductions_are_sound() {
    for (t1, t2) in cases() {
        let report = engine::run(&t1, &t2, &EngineOptions::default());
        let coloring = ahu::color(&[&t1, &t2]);
        let cipherings: Vec<_> = enumerate_isomorphisms(&t1, &t2, &coloring)
            .filter(|w| is_ciphering(w, CipherMode::Bijective))
            .collect();
        match &report.outcome {
            Outcome::NotIsomorphic(reason) => {
                assert!(
                    cipherings.is_empty(),
                    "{reason} on {} vs {}",
                    t1.serialize(),
                    t2.serialize()
                )
            }
            Outcome::Isomorphic(c) => assert!(cipherings.iter().any(|w| w.phi == c.phi)),
            Outcome::Undecided(state) => {
                assert!(!cipherings.is_empty() || state.log10_search_space() > 0.0);
                for w in &cipherings {
                    for (u, v) in state.phi().iter() {
                        assert_eq!(
                            w.phi[u.index()],
                            v,
                            "{} vs {}",
                            t1.serialize(),
                            t2.serialize()
                        );
                    }
                    for (a, b) in state.f().iter() {
                        let pair = (t1.symbol(a).clone(), t2.symbol(b).clone());
                        assert!(w.induced_relation.contains(&pair));
                    }
                }
            }
        }
    }
}

#[test]
fn witness_count_matches_n_equiv() {
    for seed in 0..300u64 {
        let n = 1 + (seed % 7) as usize;
        let t = randgen::random_recursive_tree(&GenConfig::new(n, 1, seed).unwrap());
        let s = randgen::shuffled_copy(&t, seed);
        let coloring = ahu::color(&[&t, &s]);
        let count = enumerate_isomorphisms(&t, &s, &coloring).count();
        let expected = ahu::n_equiv(&t, coloring.colors(0)).exact;
        assert_eq!(num_bigint::BigUint::from(count), expected);
    }
}
