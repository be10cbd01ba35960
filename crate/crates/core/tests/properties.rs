//! Property tests across module boundaries.

use kidsr::eval::{compute_eer, generate_trials, identify_index, max_normalize, TestRef};
use kidsr::features::{self, BandMode, FeatureMatrix};
use kidsr::gmm::{accumulate_stats, map_adapt, DiagGmm};
use kidsr::svm::{build_supervector, svm_score, train_one_vs_rest, Supervector};
use kidsr::AudioClip;
use proptest::prelude::*;

/// Direct threshold sweep with the same interpolation rule.
fn eer_oracle(targets: &[f64], impostors: &[f64]) -> f64 {
    let mut th: Vec<f64> = targets.iter().chain(impostors).copied().collect();
    th.sort_by(f64::total_cmp);
    th.dedup();
    th.push(f64::INFINITY);
    let mut prev: Option<(f64, f64)> = None;
    for t in th {
        let far = impostors.iter().filter(|&&s| s >= t).count() as f64 / impostors.len() as f64;
        let frr = targets.iter().filter(|&&s| s < t).count() as f64 / targets.len() as f64;
        if far <= frr {
            let v = match prev {
                None => far,
                Some((pa, pr)) => {
                    let denom = (pa - pr) - (far - frr);
                    let lam = if denom == 0.0 { 0.0 } else { (pa - pr) / denom };
                    pa + lam * (far - pa)
                }
            };
            return 100.0 * v;
        }
        prev = Some((far, frr));
    }
    unreachable!()
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-20i32..20).prop_map(f64::from), -20.0..20.0f64],
        1..40,
    )
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("spk{i:02}")).collect()
}

proptest! {
    #[test]
    fn eer_matches_oracle(t in scores(), i in scores()) {
        let eer = compute_eer(&t, &i).unwrap();
        prop_assert!((0.0..=100.0).contains(&eer));
        prop_assert!((eer - eer_oracle(&t, &i)).abs() < 1e-9);
    }

    #[test]
    fn max_normalize_keeps_argmax_and_zeroes_max(s in scores()) {
        let names = ids(s.len());
        let n = max_normalize(&s);
        prop_assert_eq!(identify_index(&names, &s), identify_index(&names, &n));
        prop_assert_eq!(n.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
    }

    #[test]
    fn identification_ignores_monotone_transforms(s in scores(), a in 0.1..5.0f64, b in -10.0..10.0f64) {
        let names = ids(s.len());
        let t: Vec<f64> = s.iter().map(|x| a * x + b).collect();
        let e: Vec<f64> = s.iter().map(|x| (x / 10.0).exp()).collect();
        let base = identify_index(&names, &s);
        prop_assert_eq!(base, identify_index(&names, &t));
        prop_assert_eq!(base, identify_index(&names, &e));
    }

    #[test]
    fn trial_bookkeeping(n_spk in 11usize..40, per in 1usize..4, seed in any::<u64>()) {
        let spk = ids(n_spk);
        let tests: Vec<TestRef> = spk.iter().flat_map(|s| (0..per).map(move |j| TestRef {
            utterance_id: format!("{s}#t{j}"),
            speaker_id: s.clone(),
        })).collect();
        let trials = generate_trials(&tests, &spk, seed).unwrap();
        prop_assert_eq!(trials.len(), 11 * tests.len());
        for (chunk, t) in trials.chunks(11).zip(&tests) {
            prop_assert_eq!(chunk.iter().filter(|x| x.is_target).count(), 1);
            prop_assert!(chunk.iter().all(|x| x.test_utterance_id == t.utterance_id));
            prop_assert!(chunk.iter().filter(|x| !x.is_target).all(|x| x.model_speaker_id != t.speaker_id));
            let mut models: Vec<&str> = chunk.iter().map(|x| x.model_speaker_id.as_str()).collect();
            models.sort();
            models.dedup();
            prop_assert_eq!(models.len(), 11);
        }
    }

    #[test]
    fn map_means_stay_between_prior_and_data(
        means in prop::collection::vec(-3.0..3.0f64, 8),
        data in prop::collection::vec(-5.0..5.0f64, 8..80),
        r in 0.0..100.0f64,
    ) {
        // two components in a 4-D sub-band space
        let band = BandMode::subband(7).unwrap();
        let ubm = DiagGmm::new(vec![0.5, 0.5], means.clone(), vec![1.0; 8]).unwrap();
        let frames = data.len() / 4;
        let feats = FeatureMatrix::new(band, data[..frames * 4].to_vec(), false).unwrap();
        let stats = accumulate_stats(&ubm, &feats).unwrap();
        let adapted = map_adapt(&ubm, &stats, r);
        for c in 0..2 {
            if stats.n[c] <= 0.0 { continue; }
            for d in 0..4 {
                let data_mean = stats.first(c)[d] / stats.n[c];
                let prior = ubm.mean(c)[d];
                let m = adapted.mean(c)[d];
                prop_assert!(m >= data_mean.min(prior) - 1e-9 && m <= data_mean.max(prior) + 1e-9);
            }
        }
    }

    #[test]
    fn supervector_is_injective_on_means(a in -5.0..5.0f64, b in -5.0..5.0f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let ubm = DiagGmm::new(vec![1.0], vec![0.0], vec![4.0]).unwrap();
        let mk = |m: f64| DiagGmm::new(vec![1.0], vec![m], vec![4.0]).unwrap();
        let sa = build_supervector(&mk(a), &ubm, "x", 0).unwrap();
        let sb = build_supervector(&mk(b), &ubm, "x", 0).unwrap();
        prop_assert_ne!(sa.values(), sb.values());
    }

    #[test]
    fn svm_ignores_background_order(
        pts in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 6..12),
        rot in 1usize..5,
    ) {
        let target: Vec<Supervector> = pts[..3].iter().map(|p| Supervector::new("t", 0, p.clone())).collect();
        let background: Vec<Supervector> = pts[3..].iter().map(|p| Supervector::new("b", 0, p.clone())).collect();
        let mut permuted = background.clone();
        permuted.reverse();
        let r = rot % permuted.len();
        permuted.rotate_left(r);
        let a = train_one_vs_rest(&target, &background, 1.0).unwrap();
        let b = train_one_vs_rest(&target, &permuted, 1.0).unwrap();
        let diff: f64 = a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff < 1e-6, "weight difference {diff}");
        prop_assert!(a.kkt_residual <= 1e-6);
        // scoring is affine in the input
        let x = Supervector::new("q", 0, pts[0].clone());
        let x2 = Supervector::new("q", 0, pts[0].iter().map(|v| 2.0 * v).collect());
        let (s1, s2) = (svm_score(&a, &x).unwrap(), svm_score(&a, &x2).unwrap());
        prop_assert!(((s2 - a.bias) - 2.0 * (s1 - a.bias)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn features_are_gain_invariant(gain in 0.05..1.0f64, f in 150.0..2000.0f64, seed in 0u64..1000) {
        // two tones with a noise floor, one second long
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let samples: Vec<f64> = (0..16000).map(|i| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let noise = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.02;
            let t = i as f64 / 16000.0;
            0.4 * (2.0 * std::f64::consts::PI * f * t).sin()
                + 0.2 * (2.0 * std::f64::consts::PI * 2.7 * f * t).sin() + noise
        }).collect();
        let clip = AudioClip::new(samples, "u", "s").unwrap();
        let quiet = clip.scaled(gain).unwrap();
        for band in [BandMode::FullBand, BandMode::subband(9).unwrap()] {
            let a = features::extract(&clip, band).unwrap();
            let b = features::extract(&quiet, band).unwrap();
            prop_assert_eq!(a.n_frames(), b.n_frames());
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
