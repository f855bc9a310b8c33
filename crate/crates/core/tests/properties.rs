use proptest::prelude::*;
use rand::Rng;
use ste_bnn::model::{
    forward, heaviside, quantize, synthesize_dataset, Dataset, NetworkSpec, NoiseSpec,
};
use ste_bnn::optimizer::{run, step, step_single, InitSpec, StepSchedule, TrainState};
use ste_bnn::rng;

fn instance(seed: u64, m: usize, n: usize, big_n: usize, sigma: f64) -> Dataset {
    let spec = NetworkSpec::random(m, n, &mut rng::stream(seed, &[7])).unwrap();
    let noise = if sigma > 0.0 {
        NoiseSpec::Gaussian { sigma }
    } else {
        NoiseSpec::None
    };
    synthesize_dataset(&spec, big_n, noise, seed).unwrap()
}

fn schedule_strategy() -> impl Strategy<Value = StepSchedule> {
    prop_oneof![
        (0.01f64..10.0).prop_map(|eta0| StepSchedule::Constant { eta0 }),
        (0.01f64..10.0, 0.05f64..=1.0).prop_map(|(eta0, p)| StepSchedule::PowerDecay { eta0, p }),
    ]
}

proptest! {
    #[test]
    fn quantize_idempotent_unit_norm(x in prop::collection::vec(-1e6f64..1e6, 1..64)) {
        let q = quantize(&x);
        prop_assert_eq!(quantize(&q), q.clone());
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        for (a, b) in x.iter().zip(&q) {
            prop_assert_eq!(*a >= 0.0, *b > 0.0);
        }
    }

    #[test]
    fn heaviside_matches_sign_convention(x in prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], 1..32)) {
        let h = heaviside(&x);
        let q = quantize(&x);
        for (a, b) in h.iter().zip(&q) {
            prop_assert_eq!(*a == 1, *b > 0.0);
        }
    }

    #[test]
    fn forward_positive_scale_invariant(seed in any::<u64>(), c in 1e-6f64..1e6, m in 1usize..10, n in 1usize..10) {
        let data = instance(seed, m, n, 4, 0.0);
        let w: Vec<f64> = rng::stream(seed, &[3]).sample_iter(rand_distr::StandardNormal).take(n).collect();
        let scaled: Vec<f64> = w.iter().map(|x| c * x).collect();
        for i in 0..data.len() {
            let a = forward(&w, data.sample(i), data.spec().v()).unwrap();
            let b = forward(&scaled, data.sample(i), data.spec().v()).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn labels_rederive_exactly(seed in any::<u64>(), sigma in 0.0f64..3.0) {
        let data = instance(seed, 5, 4, 12, sigma);
        let again = Dataset::from_parts(data.spec().clone(), data.samples().to_vec(), data.noises().to_vec()).unwrap();
        prop_assert_eq!(again.labels(), data.labels());
        for i in 0..data.len() {
            let f = forward(data.spec().w_star(), data.sample(i), data.spec().v()).unwrap();
            prop_assert_eq!(data.labels()[i], f + data.noises()[i]);
        }
    }

    #[test]
    fn two_step_and_single_step_agree(
        seed in any::<u64>(),
        schedule in schedule_strategy(),
        bounded in any::<bool>(),
        iterations in 1usize..120,
    ) {
        let data = instance(seed, 6, 5, 15, 0.5);
        let init = if bounded { InitSpec::BoundedUniform { c0: 1.0, seed } } else { InitSpec::Zero };
        let mut state = TrainState::from_init(&init, 5, schedule);
        let mut x = state.x.clone();
        for t in 0..iterations {
            state = step(&state, &data).unwrap();
            x = step_single(&x, t, &schedule, &data).unwrap();
            prop_assert_eq!(&state.x, &x);
            prop_assert_eq!(&state.w, &quantize(&x));
        }
    }
}

#[test]
fn eta_homogeneity_from_zero_init() {
    for seed in 0..10 {
        let data = instance(seed, 16, 8, 24, 0.3);
        let runs: Vec<_> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&eta0| {
                run(
                    &data,
                    StepSchedule::Constant { eta0 },
                    &InitSpec::Zero,
                    200,
                    &mut (),
                )
                .unwrap()
            })
            .collect();
        for t in 1..=200 {
            assert_eq!(runs[0].w_at(t), runs[1].w_at(t), "seed {seed} t {t}");
            assert_eq!(runs[1].w_at(t), runs[2].w_at(t), "seed {seed} t {t}");
        }
    }
}

#[test]
fn noiseless_truth_is_stationary() {
    let data = instance(4, 10, 6, 30, 0.0);
    let x0: Vec<f64> = data.spec().w_star().iter().map(|w| w * 0.01).collect();
    let mut s = TrainState::new(x0.clone(), StepSchedule::PowerDecay { eta0: 3.0, p: 0.5 });
    for _ in 0..50 {
        s = step(&s, &data).unwrap();
        assert_eq!(s.x, x0);
        assert_eq!(s.w, data.spec().w_star());
    }
}
