use amc_core::dsp::Spectrogram;
use amc_core::transition::{
    crossfade_from_variance, equal_power_weights, make_plan, max_ss, render, similarity_matrix, similarity_variance,
    ContextFrame, PlanConfig, SimilarityMatrix, Strategy, TransitionPlan,
};
use amc_core::{AudioClip, SAMPLE_RATE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exhaustive_argmax(values: &[f64], t: usize) -> (usize, usize) {
    let mut best = (0, 0);
    for i in 0..t {
        for j in 0..t {
            if values[i * t + j] > values[best.0 * t + best.1] {
                best = (i, j);
            }
        }
    }
    best
}

fn noise_clip(seed: u64, len: usize, source: &str) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len).map(|_| rng.gen_range(-0.3f32..0.3)).collect();
    AudioClip::new(samples, SAMPLE_RATE, source, 0.0).unwrap()
}

#[test]
fn hand_example_similarity_and_cut() {
    let q = Spectrogram::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
    let m = Spectrogram::from_rows(&[vec![0.0, 1.0], vec![3.0, 0.0]]).unwrap();
    let sim = similarity_matrix::<f64>(&q, &m).unwrap();
    assert_eq!(sim.raw_values(), &[0.0, 1.0, 6.0, 0.0]);
    assert_eq!(max_ss(&sim), (1, 0));
}

#[test]
fn window_is_equal_power_everywhere() {
    for len in [1usize, 2, 3, 7, 480, 2401, 12_000, 48_000] {
        for n in 0..len {
            let (w_out, w_in) = equal_power_weights(n, len);
            assert!((w_out * w_out + w_in * w_in - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn white_noise_power_survives_the_overlap() {
    let len = 4800;
    let mut ratios = Vec::new();
    for trial in 0..100 {
        let a = noise_clip(2 * trial, 48_000, "a");
        let b = noise_clip(2 * trial + 1, 48_000, "b");
        let plan = TransitionPlan {
            strategy: Strategy::FixedCrossfade,
            cut_i: 0,
            cut_j: 0,
            query_cut: 24_000,
            match_cut: 24_000,
            crossfade_s: len as f64 / SAMPLE_RATE as f64,
            requested_s: len as f64 / SAMPLE_RATE as f64,
            variance: None,
            phi: 8.0,
            sample_rate: SAMPLE_RATE,
        };
        let out = render(&ContextFrame::whole(&a), &ContextFrame::whole(&b), &plan).unwrap();
        let overlap = &out.samples()[24_000 - len / 2..24_000 + len / 2];
        let power = |s: &[f32]| s.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / s.len() as f64;
        let input = 0.5 * (power(a.samples()) + power(b.samples()));
        ratios.push(power(overlap) / input);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.1, "{mean}");
}

#[test]
fn adaptive_plan_follows_the_variance_rule() {
    let a = noise_clip(1, 3 * 48_000, "a");
    let b = noise_clip(2, 3 * 48_000, "b");
    let q = ContextFrame::new(&a, 48_000, 48_000).unwrap();
    let m = ContextFrame::new(&b, 48_000, 48_000).unwrap();
    let cfg = PlanConfig::default();
    let plan = make_plan(&q, &m, Strategy::MaxSSAdaptive, &cfg).unwrap();
    let var = plan.variance.unwrap();
    assert_eq!(plan.requested_s, crossfade_from_variance(var, 8.0, cfg.l_min, cfg.l_max));
    assert!(plan.crossfade_s >= cfg.l_min && plan.crossfade_s <= cfg.l_max);
    let one = render(&q, &m, &plan).unwrap();
    let two = render(&q, &m, &plan).unwrap();
    assert_eq!(one.samples(), two.samples());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn max_ss_matches_exhaustive_scan(seed in any::<u64>(), t in 1usize..46, levels in 1u32..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // few distinct values so ties are common
        let raw: Vec<f64> = (0..t * t).map(|_| rng.gen_range(0..levels) as f64).collect();
        let sim = SimilarityMatrix::from_parts(raw.clone(), vec![0.0; t * t], t).unwrap();
        prop_assert_eq!(max_ss(&sim), exhaustive_argmax(&raw, t));
    }

    #[test]
    fn crossfade_shrinks_as_variance_grows(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 12;
        let matrix = |rng: &mut ChaCha8Rng, spread: f64| {
            let cos: Vec<f64> = (0..t * t).map(|_| rng.gen_range(-spread..spread)).collect();
            SimilarityMatrix::from_parts(vec![0.0; t * t], cos, t).unwrap()
        };
        let (sa, sb) = (rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0));
        let (a, b) = (matrix(&mut rng, sa), matrix(&mut rng, sb));
        let (va, vb) = (similarity_variance(&a), similarity_variance(&b));
        prop_assume!(va != vb);
        let la = crossfade_from_variance(va, 8.0, 1e-9, 1e9);
        let lb = crossfade_from_variance(vb, 8.0, 1e-9, 1e9);
        prop_assert_eq!(va < vb, la > lb);
    }

    #[test]
    fn render_length_is_exact(seed in any::<u64>(), qcut in 0usize..48_000, mcut in 0usize..48_000, fade_ms in 0usize..400) {
        let a = noise_clip(seed, 3 * 48_000, "a");
        let b = noise_clip(seed ^ 1, 3 * 48_000, "b");
        let q = ContextFrame::new(&a, 48_000, 48_000).unwrap();
        let m = ContextFrame::new(&b, 48_000, 48_000).unwrap();
        let fade = fade_ms as f64 / 1000.0;
        let plan = TransitionPlan {
            strategy: Strategy::FixedCrossfade,
            cut_i: 0,
            cut_j: 0,
            query_cut: qcut,
            match_cut: mcut,
            crossfade_s: fade,
            requested_s: fade,
            variance: None,
            phi: 8.0,
            sample_rate: SAMPLE_RATE,
        };
        match render(&q, &m, &plan) {
            Ok(out) => prop_assert_eq!(out.len(), qcut + 48_000 - mcut),
            Err(e) => {
                // only a fade that does not fit the available audio may fail
                let overlap = (fade * 48_000.0).round() as usize;
                let room = 2 * qcut.min(mcut + 48_000).min(48_000 - mcut);
                prop_assert!(overlap > room.saturating_sub(1), "{e}");
            }
        }
    }
}

#[test]
fn every_strategy_renders_expected_length() {
    let a = noise_clip(7, 2 * 48_000, "a");
    let b = noise_clip(8, 2 * 48_000, "b");
    let q = ContextFrame::new(&a, 0, 48_000).unwrap();
    let m = ContextFrame::new(&b, 48_000, 48_000).unwrap();
    for strategy in Strategy::ALL {
        let plan = make_plan(&q, &m, strategy, &PlanConfig::default()).unwrap();
        let out = render(&q, &m, &plan).unwrap();
        assert_eq!(out.len(), plan.query_cut + 48_000 - plan.match_cut, "{strategy}");
        if strategy == Strategy::Concat {
            assert_eq!(out.len(), 96_000);
            assert_eq!(plan.crossfade_s, 0.0);
        }
    }
}
