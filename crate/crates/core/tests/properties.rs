use nssfp_core::model::Distribution;
use nssfp_core::sampler::{nucleus_size, top_p_filter_mitigated, top_p_filter_vulnerable};
use nssfp_core::sidechannel::{filter_noisy, segment_and_reconstruct, simulate_trace};
use nssfp_core::stats::{uniqueness_radius, PairwiseDistanceSample};
use nssfp_core::{ChannelConfig, Trace};
use proptest::prelude::*;

fn trace(id: usize, noise: f64) -> Trace {
    Trace {
        seq_id: format!("t{id}"),
        vocab_size: 10,
        capture_fraction: 1.0,
        estimated_sizes: vec![1.0],
        per_step_hit_counts: vec![9],
        per_step_durations: vec![2700],
        zero_hit_steps: vec![],
        noise_level: noise,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filters_agree_and_leak_exactly(
        logits in prop::collection::vec(-20.0f64..20.0, 2..400),
        p in 0.01f64..=1.0,
    ) {
        let (_, v) = top_p_filter_vulnerable(&logits, p).unwrap();
        let (_, m) = top_p_filter_mitigated(&logits, p).unwrap();
        let n = nucleus_size(&Distribution::from_logits(&logits).unwrap(), p).unwrap() as usize;
        prop_assert_eq!(&v.kept_ids, &m.kept_ids);
        prop_assert_eq!(v.removal_loop_iterations, logits.len() - n);
        prop_assert_eq!(m.removal_loop_iterations, logits.len());
        prop_assert_eq!(v.nucleus_size, n);
    }

    #[test]
    fn nucleus_is_monotone_in_p(
        logits in prop::collection::vec(-10.0f64..10.0, 2..200),
        a in 0.01f64..=1.0,
        b in 0.01f64..=1.0,
    ) {
        let d = Distribution::from_logits(&logits).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(nucleus_size(&d, lo).unwrap() <= nucleus_size(&d, hi).unwrap());
    }

    #[test]
    fn radius_scales_with_distances(
        distances in prop::collection::vec(1.0f64..1e6, 30..120),
        k in 0.1f64..100.0,
    ) {
        let a = PairwiseDistanceSample::new(100, distances.clone()).unwrap();
        let b = PairwiseDistanceSample::new(100, distances.iter().map(|d| d * k).collect()).unwrap();
        if let (Ok(ua), Ok(ub)) = (uniqueness_radius(&a, 1e-6), uniqueness_radius(&b, 1e-6)) {
            prop_assert!((ub.radius - k * ua.radius).abs() <= 1e-9 * ub.radius);
            let strict = uniqueness_radius(&a, 1e-12).unwrap();
            prop_assert!(strict.radius < ua.radius);
        }
    }

    #[test]
    fn noisiest_share_is_dropped(
        noise in prop::collection::vec(0.0f64..1e6, 1..80),
        f in 0.0f64..0.5,
    ) {
        let traces: Vec<Trace> = noise.iter().enumerate().map(|(i, &n)| trace(i, n)).collect();
        let (kept, dropped) = filter_noisy(traces, f).unwrap();
        let expected = (f * noise.len() as f64).ceil() as usize;
        prop_assert_eq!(dropped.len(), expected);
        prop_assert_eq!(kept.len() + dropped.len(), noise.len());
        let kept_max = kept.iter().map(|t| t.noise_level).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(dropped.iter().all(|t| t.noise_level >= kept_max));
    }

    #[test]
    fn lossless_channel_recovers_sizes(
        sizes in prop::collection::vec(0u32..=2000, 1..40),
    ) {
        let cfg = ChannelConfig::lossless();
        let raw = simulate_trace("s", &sizes, 2000, &cfg).unwrap();
        let t = segment_and_reconstruct(&raw, &cfg, 2000).unwrap();
        prop_assert_eq!(t.len(), sizes.len());
        for (est, &s) in t.estimated_sizes.iter().zip(&sizes) {
            prop_assert_eq!(*est, s as f64);
        }
    }
}
