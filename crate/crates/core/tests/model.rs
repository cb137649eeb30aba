use pclab_core::fixtures::{gradcheck_config, gradcheck_instance, random_params, random_state, random_targets, shrunken_spec, tiny_spec};
use pclab_core::gradcheck::{central_difference, rel_error};
use pclab_core::model::train::accuracy;
use pclab_core::model::{
    compute_energy, compute_energy_per_example, energy_gradients, feedforward_init, settle, train, Condition, Dataset,
    EnergyConfig, LatentState, ModelParams, ParamId, TrainConfig,
};
use pclab_core::model::latent::feedforward_logits;
use pclab_core::ops::Mode;
use pclab_core::rng::{Rng, Stream};
use pclab_core::{AdamWConfig, Error, Tensor};

const FD_STEP: f64 = 1e-3;
const FD_TOL: f64 = 1e-4;

fn check_config(condition: Condition) -> EnergyConfig {
    gradcheck_config(condition)
}

fn fd_instance(condition: Condition, rng: &mut Rng, clamp_output: bool) -> (ModelParams, LatentState) {
    gradcheck_instance(condition, rng, clamp_output).unwrap()
}

fn batch_sum_energy(p: &ModelParams, s: &LatentState, cfg: &EnergyConfig) -> f64 {
    compute_energy_per_example(p, s, None, cfg).unwrap().iter().map(|e| e.total).sum()
}

#[test]
fn latent_gradients_match_finite_differences() {
    let mut rng = Rng::new(11).stream(Stream::Test);
    for condition in Condition::ALL {
        let cfg = check_config(condition);
        for clamp in [true, false] {
            if !clamp && condition.needs_target() {
                continue;
            }
            let (params, state) = fd_instance(condition, &mut rng, clamp);
            let (_, grads, _) = energy_gradients(&params, &state, &cfg).unwrap();
            for site in 1..=4 {
                if state.is_clamped(site) {
                    assert_eq!(grads[site - 1].max_abs(), 0.0);
                    continue;
                }
                let numeric = central_difference(state.site(site), FD_STEP, |x| {
                    let mut s = state.clone();
                    s.set_site(site, x.clone()).unwrap();
                    batch_sum_energy(&params, &s, &cfg)
                });
                let err = rel_error(&grads[site - 1], &numeric);
                assert!(err < FD_TOL, "{condition} site {site}: {err:e}");
            }
        }
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = Rng::new(12).stream(Stream::Test);
    for condition in Condition::ALL {
        let cfg = check_config(condition);
        let (params, state) = fd_instance(condition, &mut rng, true);
        let (_, _, grads) = energy_gradients(&params, &state, &cfg).unwrap();
        for id in ParamId::ALL {
            let numeric = central_difference(params.get(id), FD_STEP, |w| {
                let mut p = params.clone();
                *p.get_mut(id) = w.clone();
                compute_energy(&p, &state, None, &cfg).unwrap().total
            });
            let err = rel_error(grads.get(id), &numeric);
            assert!(err < FD_TOL, "{condition} {}: {err:e}", id.name());
        }
    }
}

#[test]
fn settling_is_monotone_at_small_step() {
    let mut rng = Rng::new(13).stream(Stream::Test);
    for condition in Condition::ALL {
        let cfg = EnergyConfig { eta_latent: 0.01, ..EnergyConfig::for_condition(condition) };
        for _ in 0..10 {
            let params = random_params(tiny_spec(), &mut rng).unwrap();
            let mut state = random_state(&params, &mut rng, 3, 1.0).unwrap();
            let (_, target) = random_targets(&mut rng, 3, 10);
            let run = settle(&params, &mut state, Some(&target), &cfg, 50).unwrap();
            assert_eq!(run.trace.len(), 51);
            for w in run.trace.windows(2) {
                assert!(w[1] - w[0] <= 1e-9, "{condition}: {} -> {}", w[0], w[1]);
            }
            assert!(run.trace[50] < run.trace[0]);
        }
    }
}

#[test]
fn breakdown_parts_sum_to_total() {
    let mut rng = Rng::new(14).stream(Stream::Test);
    for i in 0..100 {
        let condition = Condition::ALL[i % 3];
        let cfg = EnergyConfig {
            alpha_gen: rng.uniform(0.0, 2.0),
            alpha_disc: rng.uniform(0.1, 2.0),
            ..EnergyConfig::for_condition(condition)
        };
        let params = random_params(tiny_spec(), &mut rng).unwrap();
        let state = random_state(&params, &mut rng, 2, 1.0).unwrap();
        let (_, target) = random_targets(&mut rng, 2, 10);
        for e in compute_energy_per_example(&params, &state, Some(&target), &cfg).unwrap() {
            assert!(e.residual().abs() <= 1e-12 * e.total.abs().max(1.0));
            assert!(e.disc.iter().chain(&e.gen).all(|&v| v >= 0.0));
            if condition != Condition::Bpc {
                assert_eq!(e.disc[3], 0.0);
            } else {
                assert_eq!(e.output, 0.0);
            }
        }
    }
}

#[test]
fn zero_alpha_gen_drops_generative_terms() {
    let mut rng = Rng::new(15).stream(Stream::Test);
    for condition in Condition::ALL {
        let cfg = EnergyConfig { alpha_gen: 0.0, ..EnergyConfig::for_condition(condition) };
        let params = random_params(tiny_spec(), &mut rng).unwrap();
        let state = random_state(&params, &mut rng, 2, 1.0).unwrap();
        let (_, target) = random_targets(&mut rng, 2, 10);
        let e = compute_energy(&params, &state, Some(&target), &cfg).unwrap();
        assert_eq!(e.gen_sum, 0.0);
        assert_eq!(e.total, e.disc_sum + e.output);
    }
}

#[test]
fn bpc_energy_is_linear_in_each_alpha() {
    let mut rng = Rng::new(16).stream(Stream::Test);
    let params = random_params(tiny_spec(), &mut rng).unwrap();
    let state = random_state(&params, &mut rng, 2, 1.0).unwrap();
    let base = EnergyConfig::for_condition(Condition::Bpc);
    let at = |g: f64, d: f64| {
        compute_energy(&params, &state, None, &EnergyConfig { alpha_gen: g, alpha_disc: d, ..base }).unwrap()
    };
    let (a, b) = (at(1.0, 1.0), at(0.25, 3.0));
    assert!((b.gen_sum - 0.25 * a.gen_sum).abs() < 1e-12 * a.gen_sum.max(1.0));
    assert!((b.disc_sum - 3.0 * a.disc_sum).abs() < 1e-12 * a.disc_sum.max(1.0));
    let swapped = at(3.0, 0.25);
    assert!((swapped.gen_sum - 3.0 * a.gen_sum).abs() < 1e-12 * a.gen_sum.max(1.0));
}

#[test]
fn stdpc_requires_a_target() {
    let mut rng = Rng::new(17).stream(Stream::Test);
    let params = random_params(tiny_spec(), &mut rng).unwrap();
    let state = random_state(&params, &mut rng, 1, 0.0).unwrap();
    for condition in [Condition::StdPcCe, Condition::StdPcMse] {
        let cfg = EnergyConfig::for_condition(condition);
        assert!(matches!(compute_energy(&params, &state, None, &cfg), Err(Error::MissingTarget(_))));
    }
    assert!(compute_energy(&params, &state, None, &EnergyConfig::for_condition(Condition::Bpc)).is_ok());
}

#[test]
fn feedforward_init_matches_logits_and_records_initial() {
    let mut rng = Rng::new(18).stream(Stream::Test);
    let params = random_params(shrunken_spec(), &mut rng).unwrap();
    let input = Tensor::from_fn(&shrunken_spec().input_shape(5), |_| rng.uniform(-1.0, 1.0));
    let state = feedforward_init(&params, &input, Mode::Eval).unwrap();
    assert_eq!(state.site(4), &feedforward_logits(&params, &input, 2).unwrap());
    for site in 1..=4 {
        assert_eq!(state.site(site), state.initial(site));
        assert!(!state.is_clamped(site));
    }
    let cfg = EnergyConfig { alpha_gen: 0.0, ..EnergyConfig::for_condition(Condition::Bpc) };
    assert!(compute_energy(&params, &state, None, &cfg).unwrap().total.abs() < 1e-24);
}

#[test]
fn feedforward_init_with_zero_weights_is_zero() {
    let params = ModelParams::zeros(shrunken_spec());
    let input = Tensor::full(&shrunken_spec().input_shape(2), 0.7);
    let state = feedforward_init(&params, &input, Mode::Eval).unwrap();
    for site in 1..=4 {
        assert_eq!(state.site(site).max_abs(), 0.0);
    }
}

#[test]
fn clamped_sites_do_not_move() {
    let mut rng = Rng::new(19).stream(Stream::Test);
    let params = random_params(tiny_spec(), &mut rng).unwrap();
    let mut state = random_state(&params, &mut rng, 2, 1.0).unwrap();
    state.set_clamped(2, true);
    let before = state.site(2).clone();
    let (_, target) = random_targets(&mut rng, 2, 10);
    let cfg = EnergyConfig::for_condition(Condition::StdPcCe);
    settle(&params, &mut state, Some(&target), &cfg, 5).unwrap();
    assert_eq!(state.site(2), &before);
    assert_eq!(state.site(4), &target);
    assert!(state.relative_displacement(1).iter().all(|&d| d > 0.0));
}

#[test]
fn settling_is_independent_of_batch_composition() {
    let mut rng = Rng::new(20).stream(Stream::Test);
    let params = random_params(tiny_spec(), &mut rng).unwrap();
    let state = random_state(&params, &mut rng, 3, 1.0).unwrap();
    let (_, target) = random_targets(&mut rng, 3, 10);
    let cfg = EnergyConfig::for_condition(Condition::Bpc);
    let mut whole = state.clone();
    settle(&params, &mut whole, Some(&target), &cfg, 8).unwrap();
    let single_input = state.input().gather_rows(&[1]);
    let sites = [1, 2, 3, 4].map(|s| state.site(s).gather_rows(&[1]));
    let mut one = LatentState::from_parts(&params, single_input, sites, state.norm().clone()).unwrap();
    settle(&params, &mut one, Some(&target.gather_rows(&[1])), &cfg, 8).unwrap();
    for site in 1..=4 {
        let a = whole.site(site).row(1);
        let b = one.site(site).row(0);
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

/// Two well-separated Gaussian classes rendered on the tiny image grid.
fn separable_data(rng: &mut Rng, n: usize) -> Dataset {
    let spec = tiny_spec();
    let units = spec.in_channels * spec.image_side * spec.image_side;
    let protos: Vec<Vec<f64>> = (0..2).map(|_| (0..units).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut data = Vec::with_capacity(n * units);
    for &l in &labels {
        data.extend(protos[l].iter().map(|&p| p + 0.5 * rng.normal()));
    }
    let images = Tensor::new(spec.input_shape(n), data).unwrap();
    let mut classes_10 = labels.clone();
    classes_10.iter_mut().for_each(|l| *l *= 3);
    Dataset::new(images, classes_10, spec.classes).unwrap()
}

#[test]
fn training_learns_and_is_deterministic() {
    let mut rng = Rng::new(21).stream(Stream::Test);
    let data = separable_data(&mut rng, 256);
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 32,
        optimizer: AdamWConfig { lr: 3e-3, ..AdamWConfig::default() },
        energy: EnergyConfig::for_condition(Condition::StdPcCe),
    };
    let run = || {
        let mut params = ModelParams::init(tiny_spec(), &Rng::new(5)).unwrap();
        let logs = train(&mut params, &data, Some(&data), &cfg, 5, |_| {}).unwrap();
        (params, logs)
    };
    let (p1, logs1) = run();
    let (p2, logs2) = run();
    assert_eq!(logs1, logs2);
    for id in ParamId::ALL {
        assert_eq!(p1.get(id), p2.get(id));
    }
    let acc = accuracy(&feedforward_logits(&p1, &data.images, 64).unwrap(), &data.labels);
    assert!(acc > 0.9, "accuracy {acc}");
    assert!(logs1.last().unwrap().test_accuracy.unwrap() > 0.9);
}

#[test]
fn training_rejects_mismatched_classes() {
    let spec = tiny_spec();
    let images = Tensor::zeros(&spec.input_shape(2));
    let data = Dataset::new(images, vec![0, 1], 2).unwrap();
    let mut params = ModelParams::init(spec, &Rng::new(1)).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 2,
        optimizer: AdamWConfig::default(),
        energy: EnergyConfig::for_condition(Condition::Bpc),
    };
    assert!(train(&mut params, &data, None, &cfg, 1, |_| {}).is_err());
}
