use std::collections::HashSet;

use sphalign::directional::mean_resultant_ratio;
use sphalign::linalg::row_dot;
use sphalign::model::LabeledPair;
use sphalign::synth::{
    build_anchor_priors, default_sources, generate_relational_pairs, generate_scenario, ObservationModel,
    PairFractions, ScenarioConfig, SourceSpec,
};

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n: 200,
        clusters: 10,
        sources: default_sources(3, 20),
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn default_sources_follow_the_standard_layout() {
    let truth = generate_scenario(&ScenarioConfig {
        sources: default_sources(4, 8),
        sim: PairFractions { positive: 0.0, negative: 0.0 },
        rel: PairFractions { positive: 0.0, negative: 0.0 },
        ..ScenarioConfig::default()
    })
    .unwrap();
    let u = &truth.universe;
    let counts: Vec<usize> = u.sources().iter().map(|s| s.len()).collect();
    assert_eq!(counts, vec![1000, 500, 500, 500]);
    assert_eq!(u.total_observations(), 2500);
    // every feature sits in the first source and in one of the half-range ones
    assert_eq!(u.min_coverage(), 2);
    assert_eq!(u.sources()[2].feature_ids()[0], 300);
    assert_eq!(*u.sources()[2].feature_ids().last().unwrap(), 799);
    assert_eq!(truth.anchors.len(), 35);
}

#[test]
fn regeneration_is_bit_exact() {
    let a = generate_scenario(&small(5)).unwrap();
    let b = generate_scenario(&small(5)).unwrap();
    assert_eq!(a.v, b.v);
    assert_eq!(a.mu, b.mu);
    assert_eq!(a.z, b.z);
    assert_eq!(a.w, b.w);
    for (x, y) in a.universe.sources().iter().zip(b.universe.sources()) {
        assert_eq!(x.embeddings(), y.embeddings());
    }
    assert_eq!(a.pairs, b.pairs);
    assert_eq!(a.heldout, b.heldout);
    assert_eq!(a.priors, b.priors);
    let c = generate_scenario(&small(6)).unwrap();
    assert_ne!(a.v, c.v);
}

#[test]
fn latent_embeddings_concentrate_as_expected() {
    let truth = generate_scenario(&ScenarioConfig {
        n: 2000,
        clusters: 10,
        kappa: 50.0,
        sources: default_sources(1, 6),
        sim: PairFractions { positive: 0.0, negative: 0.0 },
        rel: PairFractions { positive: 0.0, negative: 0.0 },
        ..ScenarioConfig::default()
    })
    .unwrap();
    assert!(truth.v.row_iter().all(|r| (r.norm() - 1.0).abs() < 1e-12));
    assert!(truth.mu.row_iter().all(|r| (r.norm() - 1.0).abs() < 1e-12));
    let cos: Vec<f64> = (0..2000).map(|i| row_dot(&truth.v, i, &truth.mu, truth.z[i])).collect();
    let mean = cos.iter().sum::<f64>() / 2000.0;
    let var = cos.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 1999.0;
    let se = (var / 2000.0).sqrt();
    let want = mean_resultant_ratio(6, 50.0);
    assert!((mean - want).abs() <= 3.0 * se, "mean {mean}, A_r {want}, se {se}");
}

#[test]
fn huge_concentration_collapses_clusters() {
    let truth = generate_scenario(&ScenarioConfig {
        kappa: 1e6,
        ..small(2)
    })
    .unwrap();
    let worst = (0..200)
        .map(|i| row_dot(&truth.v, i, &truth.mu, truth.z[i]).clamp(-1.0, 1.0).acos())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "max angle {worst}");
}

#[test]
fn cluster_sizes_stay_in_the_multinomial_bulk() {
    let mut ok = 0;
    for seed in 0..20 {
        let truth = generate_scenario(&ScenarioConfig {
            sources: default_sources(1, 6),
            sim: PairFractions { positive: 0.0, negative: 0.0 },
            rel: PairFractions { positive: 0.0, negative: 0.0 },
            rng_seed: seed,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let mut sizes = [0usize; 50];
        truth.z.iter().for_each(|&z| sizes[z] += 1);
        if sizes.iter().all(|&s| (5..=40).contains(&s)) {
            ok += 1;
        }
    }
    assert!(ok >= 19, "{ok} of 20 seeds");
}

fn check_pairs(pairs: &[LabeledPair], n: usize) {
    let mut seen = HashSet::new();
    for p in pairs {
        assert!(p.i < p.j && p.j < n);
        assert!(seen.insert((p.i, p.j)), "duplicate pair ({}, {})", p.i, p.j);
    }
}

#[test]
fn pair_counts_follow_the_preset() {
    let config = ScenarioConfig {
        n: 1000,
        clusters: 50,
        sources: default_sources(2, 8),
        ..ScenarioConfig::default()
    };
    let truth = generate_scenario(&config).unwrap();
    let total = 1000 * 999 / 2;
    for (pairs, fr) in [(truth.pairs.sim(), config.sim), (truth.pairs.rel(), config.rel)] {
        check_pairs(pairs, 1000);
        let pos = pairs.iter().filter(|p| p.label).count();
        assert_eq!(pos, (fr.positive * total as f64).round() as usize);
        assert_eq!(pairs.len() - pos, (fr.negative * total as f64).round() as usize);
        assert!(pairs.len().abs_diff(29_970) <= 1);
    }
    // held-out pairs are disjoint from the observed ones
    for (obs, held) in [(truth.pairs.sim(), truth.heldout.sim()), (truth.pairs.rel(), truth.heldout.rel())] {
        check_pairs(held, 1000);
        let seen: HashSet<(usize, usize)> = obs.iter().map(|p| (p.i, p.j)).collect();
        assert!(held.iter().all(|p| !seen.contains(&(p.i, p.j))));
        assert!(held.len().abs_diff((0.2 * obs.len() as f64).round() as usize) <= 1);
    }
}

#[test]
fn zero_logits_give_fair_coin_labels() {
    // keep every positive so the observed share equals the positive rate
    let config = ScenarioConfig {
        n: 400,
        clusters: 5,
        sources: default_sources(1, 6),
        beta1: 0.0,
        beta2: 0.0,
        sim: PairFractions { positive: 1.0, negative: 0.0 },
        rel: PairFractions { positive: 0.0, negative: 0.0 },
        heldout_fraction: 0.0,
        ..ScenarioConfig::default()
    };
    let truth = generate_scenario(&config).unwrap();
    let rate = truth.pairs.n_sim() as f64 / (400.0 * 399.0 / 2.0);
    assert!((rate - 0.5).abs() < 0.01, "positive rate {rate}");
}

#[test]
fn hard_negatives_are_harder_than_random_negatives() {
    let config = small(8);
    let truth = generate_scenario(&config).unwrap();
    let first = &truth.universe.sources()[0];
    let cos = |p: &LabeledPair| row_dot(first.embeddings(), p.i, first.embeddings(), p.j);
    let hard: Vec<f64> = truth.pairs.sim().iter().filter(|p| !p.label).map(cos).collect();
    // every label-0 pair, which is what a uniform draw of negatives averages to
    let all = generate_relational_pairs(
        &truth,
        &ScenarioConfig {
            sim: PairFractions { positive: 0.0, negative: 1.0 },
            heldout_fraction: 0.0,
            ..config
        },
    )
    .unwrap();
    let every: Vec<f64> = all.observed.sim().iter().map(cos).collect();
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    assert!(mean(&hard) > mean(&every));
    assert!(every.len() > hard.len());
}

#[test]
fn anchor_priors() {
    let z: Vec<usize> = (0..500).map(|i| (i * 31 + 7) % 50).collect();
    let full = build_anchor_priors(&z, 50, 1.0, 3, None).unwrap();
    assert!(full.eval_ids.is_empty());
    assert!((0..500).all(|i| full.priors.is_one_hot(i) && full.priors.prob(i, z[i]) == 1.0));

    let part = build_anchor_priors(&z, 50, 0.7, 3, None).unwrap();
    assert_eq!(part.anchors.len(), 35);
    let one_hot = (0..500).filter(|&i| part.priors.is_one_hot(i)).count();
    assert_eq!(one_hot, 350);
    for i in 0..500 {
        let row = part.priors.support(i);
        assert!((row.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-10);
        if part.anchors.contains(&z[i]) {
            assert_eq!(row, &[(z[i], 1.0)]);
        } else {
            assert_eq!(row.len(), 15);
            assert!(row.iter().all(|&(c, _)| !part.anchors.contains(&c)));
            assert!(row.iter().any(|&(c, _)| c == z[i]));
        }
    }
    assert_eq!(part.eval_ids.len(), 150);
    assert!(build_anchor_priors(&z, 50, 0.0, 3, None).is_err());
}

#[test]
fn spectral_priors_favor_the_true_cluster() {
    let config = ScenarioConfig {
        n: 300,
        clusters: 10,
        kappa: 200.0,
        sources: default_sources(1, 20),
        // positives mostly within clusters, so the pair graph carries the structure
        beta1: -4.0,
        beta2: 8.0,
        spectral_priors: true,
        anchor_fraction: 0.5,
        rng_seed: 4,
        ..ScenarioConfig::default()
    };
    let truth = generate_scenario(&config).unwrap();
    for i in 0..300 {
        let row = truth.priors.support(i);
        assert!((row.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(row.iter().all(|&(c, p)| p > 0.0 && (truth.priors.is_one_hot(i) || !truth.anchors.contains(&c))));
    }
    // the spectral rows carry information about the true cluster up to relabeling
    let free = &truth.eval_ids;
    let guess: Vec<usize> = free
        .iter()
        .map(|&i| truth.priors.support(i).iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0)
        .collect();
    let z: Vec<usize> = free.iter().map(|&i| truth.z[i]).collect();
    let score = sphalign::eval::ami(&guess, &z).unwrap();
    assert!(score > 0.3, "ami {score}");
}

#[test]
fn noiseless_additive_observations_are_exact() {
    let truth = generate_scenario(&ScenarioConfig {
        observation: ObservationModel::Additive { noise_sd: 0.0 },
        sources: vec![SourceSpec { dim: 9, start: 0.0, end: 1.0 }, SourceSpec { dim: 7, start: 0.5, end: 1.0 }],
        ..small(1)
    })
    .unwrap();
    for (l, s) in truth.universe.sources().iter().enumerate() {
        let w = &truth.w[l];
        assert!((w.transpose() * w - nalgebra::DMatrix::identity(6, 6)).amax() < 1e-12);
        for (row, &i) in s.feature_ids().iter().enumerate() {
            // W has orthonormal columns and V_i is a unit vector, so W V_i is already unit
            let want = w * truth.v.row(i).transpose();
            assert!((s.embeddings().row(row).transpose() - want).amax() < 1e-12);
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ScenarioConfig { rank: 1, ..small(0) },
        ScenarioConfig { clusters: 0, ..small(0) },
        ScenarioConfig { kappa: -1.0, ..small(0) },
        ScenarioConfig { sources: vec![SourceSpec { dim: 20, start: 0.0, end: 0.5 }], ..small(0) },
        ScenarioConfig { sim: PairFractions { positive: 0.7, negative: 0.4 }, ..small(0) },
        ScenarioConfig { anchor_fraction: 0.0, ..small(0) },
        ScenarioConfig { rel_diag_values: Some(vec![1.0; 3]), ..small(0) },
        ScenarioConfig { sources: default_sources(2, 4), ..small(0) },
    ];
    for config in bad {
        assert!(generate_scenario(&config).is_err(), "{config:?}");
    }
}

#[test]
fn config_round_trips_through_json() {
    let config = ScenarioConfig {
        observation: ObservationModel::Additive { noise_sd: 0.25 },
        rel_diag_values: Some(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        ..small(9)
    };
    let text = serde_json::to_string(&config).unwrap();
    assert_eq!(serde_json::from_str::<ScenarioConfig>(&text).unwrap(), config);
    assert!(serde_json::from_str::<ScenarioConfig>(r#"{"n": 10, "bogus": 1}"#).is_err());
    let partial: ScenarioConfig = serde_json::from_str(r#"{"n": 300, "kappa": 100.0}"#).unwrap();
    assert_eq!(partial.n, 300);
    assert_eq!(partial.clusters, 50);
}
