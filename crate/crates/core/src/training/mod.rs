//! Learning the decoder: hybrid absolute/squared episode loss, back-propagation
//! through each episode, RMSprop with global-norm clipping and the two
//! learning-rate schedules.

mod backprop;
mod gradcheck;
mod loss;
mod optim;
mod schedule;
mod trainer;

pub use backprop::bptt_gradients;
pub use gradcheck::{
    check_episode_gradients, gradient_check, random_problem, relative_error, GradCheckReport, GradProblem, GRADCHECK_TOLERANCE, REL_ERROR_FLOOR,
};
pub use loss::{episode_loss, output_gradients, LossConfig, LossValue, DEFAULT_LAMBDA};
pub use optim::{
    clip_gradients, global_norm, rmsprop_update, OptimizerState, UpdateStats, DEFAULT_CLIP_NORM, DEFAULT_RMSPROP_DECAY, DEFAULT_RMSPROP_EPSILON,
};
pub use schedule::{LrSchedule, LrScheduleKind, ANNEAL_FACTOR, DEFAULT_ETA0, DEFAULT_GAMMA, DEFAULT_PERIOD, ETA_FLOOR, STEP_FACTOR};
pub use trainer::{
    train, EpochLog, TrainBatch, TrainConfig, TrainOutcome, TrainingLog, BATCH_LAYOUT, DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_K,
    DEFAULT_QUALITY_RANGE, DEFAULT_VAL_FRACTION, LOG_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::estimator::{run_episode, ContextBatch, EpisodeTrace, EstimatorConfig, EstimatorKind, EstimatorParams, State, StepCache, StepRecord};
    use crate::image::GrayImage;
    use crate::numerics::{Matrix, Rng};

    fn fake_trace(outputs: Vec<Matrix<f64>>) -> EpisodeTrace<f64> {
        let b = outputs[0].cols();
        EpisodeTrace {
            inputs: ContextBatch {
                slots: vec![],
                presence: Matrix::zeros(9, b),
            },
            e: Matrix::zeros(1, b),
            s_init: State::zeros(EstimatorKind::Mlp, 1, b),
            steps: outputs
                .into_iter()
                .map(|output| StepRecord {
                    cache: StepCache::Mlp,
                    state: State::zeros(EstimatorKind::Mlp, 1, b),
                    output,
                })
                .collect(),
        }
    }

    fn duplicate_lanes(m: &Matrix<f64>) -> Matrix<f64> {
        let cols: Vec<Vec<f64>> = (0..m.cols()).chain(0..m.cols()).map(|j| m.col(j)).collect();
        Matrix::from_columns(&cols).unwrap()
    }

    #[test]
    fn zero_residual_costs_nothing() {
        let t = Matrix::filled(4, 2, 0.3);
        let trace = fake_trace(vec![t.clone(), t.clone()]);
        let l = episode_loss(&t, &trace, &LossConfig::new(0.5, 2)).unwrap();
        assert_eq!((l.mae, l.mse, l.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn worked_loss_example() {
        let t = Matrix::filled(64, 1, 0.5);
        let trace = fake_trace(vec![Matrix::filled(64, 1, 0.75)]);
        let l = episode_loss(&t, &trace, &LossConfig::new(0.235, 1)).unwrap();
        assert_eq!(l.mae, 8.0);
        assert_eq!(l.mse, 2.0);
        assert!((l.total - 6.59).abs() < 1e-12);
    }

    #[test]
    fn lambda_endpoints_and_range() {
        let mut rng = Rng::new(1);
        let t = crate::numerics::uniform_init(16, 3, 0.0, 1.0, &mut rng).unwrap();
        let outs = (0..2)
            .map(|_| crate::numerics::uniform_init(16, 3, 0.0, 1.0, &mut rng).unwrap())
            .collect();
        let trace = fake_trace(outs);
        let mae = episode_loss(&t, &trace, &LossConfig::new(0.0, 2)).unwrap();
        let mse = episode_loss(&t, &trace, &LossConfig::new(1.0, 2)).unwrap();
        assert_eq!(mae.total, mae.mae);
        assert_eq!(mse.total, mse.mse);
        for bad in [-0.1, 1.5, f64::NAN] {
            assert!(matches!(episode_loss(&t, &trace, &LossConfig::new(bad, 2)), Err(Error::Param(_))));
        }
        assert!(episode_loss(&t, &trace, &LossConfig::new(0.2, 3)).is_err());
    }

    #[test]
    fn duplicating_lanes_doubles_only_the_absolute_term() {
        let mut rng = Rng::new(2);
        let t = crate::numerics::uniform_init(8, 2, 0.0, 1.0, &mut rng).unwrap();
        let o = crate::numerics::uniform_init(8, 2, 0.0, 1.0, &mut rng).unwrap();
        let cfg = LossConfig::new(0.235, 1);
        let single = episode_loss(&t, &fake_trace(vec![o.clone()]), &cfg).unwrap();
        let double = episode_loss(&duplicate_lanes(&t), &fake_trace(vec![duplicate_lanes(&o)]), &cfg).unwrap();
        assert!((double.mae - 2.0 * single.mae).abs() < 1e-12);
        assert!((double.mse - single.mse).abs() < 1e-12);
        let norm = LossConfig {
            normalize_mae_by_batch: true,
            ..cfg
        };
        let a = episode_loss(&t, &fake_trace(vec![o.clone()]), &norm).unwrap();
        let b = episode_loss(&duplicate_lanes(&t), &fake_trace(vec![duplicate_lanes(&o)]), &norm).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn loss_ignores_lane_order() {
        let mut rng = Rng::new(3);
        let t = crate::numerics::uniform_init(8, 3, 0.0, 1.0, &mut rng).unwrap();
        let o = crate::numerics::uniform_init(8, 3, 0.0, 1.0, &mut rng).unwrap();
        let perm = |m: &Matrix<f64>| Matrix::from_columns(&[m.col(2), m.col(0), m.col(1)]).unwrap();
        let cfg = LossConfig::new(0.3, 1);
        let a = episode_loss(&t, &fake_trace(vec![o.clone()]), &cfg).unwrap().total;
        let b = episode_loss(&perm(&t), &fake_trace(vec![perm(&o)]), &cfg).unwrap().total;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in EstimatorKind::ALL {
            let r = gradient_check(kind, 4, 4, 3, 2, 7).unwrap();
            assert!(r.passed(GRADCHECK_TOLERANCE), "{kind}: {r:?}");
            assert!(r.entries_checked > 100);
        }
    }

    #[test]
    fn tied_gradients_match_finite_differences() {
        for kind in [EstimatorKind::DeltaRnn, EstimatorKind::Gru] {
            let (mut p, _, s, t) = random_problem::<f64>(kind, 3, 2, 2, 8).unwrap();
            let (_, ctx, _, _) = random_problem::<f64>(kind, 3, 2, 2, 9).unwrap();
            let mut tied = EstimatorParams::init(EstimatorConfig::new(kind, 3, 2).tied(true), &mut Rng::new(10)).unwrap();
            for ((_, dst), (_, src)) in tied.tensors_mut().into_iter().skip(1).zip(p.tensors().into_iter().skip(9)) {
                *dst = src.clone();
            }
            p = tied;
            let r = check_episode_gradients(&p, &ctx, &s, &t, &LossConfig::new(0.4, 2), 1e-5).unwrap();
            assert!(r.passed(GRADCHECK_TOLERANCE), "{kind}: {r:?}");
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let (p, ctx, s, _) = random_problem::<f64>(EstimatorKind::Lstm, 4, 2, 2, 11).unwrap();
        let trace = run_episode(ctx, s, 1, &p).unwrap();
        let t = trace.final_output().clone();
        let g = bptt_gradients(&t, &trace, &p, &LossConfig::new(0.235, 1)).unwrap();
        assert_eq!(g.norm_sq(), 0.0);
    }

    #[test]
    fn gradients_are_linear_in_lambda() {
        let (p, ctx, s, t) = random_problem::<f64>(EstimatorKind::DeltaRnn, 4, 2, 2, 12).unwrap();
        let trace = run_episode(ctx, s, 3, &p).unwrap();
        let g = |l: f64| bptt_gradients(&t, &trace, &p, &LossConfig::new(l, 3)).unwrap();
        let (g0, g1, gh) = (g(0.0), g(1.0), g(0.5));
        for (((_, a), (_, b)), (_, m)) in g0.tensors().into_iter().zip(g1.tensors()).zip(gh.tensors()) {
            for ((&a, &b), &m) in a.as_slice().iter().zip(b.as_slice()).zip(m.as_slice()) {
                assert!((m - 0.5 * (a + b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_cache_is_a_state_error() {
        let (p, ctx, s, t) = random_problem::<f64>(EstimatorKind::Gru, 3, 2, 1, 13).unwrap();
        let mut trace = run_episode(ctx, s, 2, &p).unwrap();
        trace.steps[0].cache = StepCache::Mlp;
        assert!(matches!(bptt_gradients(&t, &trace, &p, &LossConfig::new(0.2, 2)), Err(Error::State(_))));
    }

    fn unit_grads(p: &EstimatorParams<f64>, v: f64) -> EstimatorParams<f64> {
        let mut g = p.zeros_like();
        g.tensors_mut().into_iter().for_each(|(_, m)| m.fill(v));
        g
    }

    #[test]
    fn rmsprop_single_step() {
        let p0 = EstimatorParams::<f64>::zeros(EstimatorConfig::new(EstimatorKind::Mlp, 1, 1)).unwrap();
        let mut p = p0.clone();
        let mut opt = OptimizerState::new(&p);
        opt.clip_norm = 1e9;
        rmsprop_update(&mut p, &unit_grads(&p0, 1.0), &mut opt, 0.002).unwrap();
        for (_, v) in opt.accum.tensors() {
            assert!(v.as_slice().iter().all(|&x| (x - 0.1).abs() < 1e-15));
        }
        for (_, m) in p.tensors() {
            assert!(m.as_slice().iter().all(|&x| (x + 0.0063246).abs() < 1e-7));
        }
    }

    #[test]
    fn zero_gradient_only_decays_accumulators() {
        let p0 = EstimatorParams::<f64>::init(EstimatorConfig::new(EstimatorKind::DeltaRnn, 3, 2), &mut Rng::new(14)).unwrap();
        let mut p = p0.clone();
        let mut opt = OptimizerState::new(&p);
        opt.accum = unit_grads(&p0, 0.5);
        rmsprop_update(&mut p, &p0.zeros_like(), &mut opt, 0.01).unwrap();
        assert_eq!(p, p0);
        assert!(opt
            .accum
            .tensors()
            .iter()
            .all(|(_, m)| m.as_slice().iter().all(|&x| (x - 0.45).abs() < 1e-15)));
    }

    #[test]
    fn clipping_rules() {
        let p = EstimatorParams::<f64>::zeros(EstimatorConfig::new(EstimatorKind::Mlp, 2, 2)).unwrap();
        let n = p.num_parameters() as f64;
        let mut g = unit_grads(&p, 14.0 / n.sqrt());
        assert!((global_norm(&g) - 14.0).abs() < 1e-12);
        let pre = clip_gradients(&mut g, 7.0);
        assert!((pre - 14.0).abs() < 1e-12);
        assert!(g
            .tensors()
            .iter()
            .all(|(_, m)| m.as_slice().iter().all(|&x| (x - 7.0 / n.sqrt()).abs() < 1e-12)));
        let once = g.clone();
        clip_gradients(&mut g, 7.0);
        assert_eq!(g, once);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let p0 = EstimatorParams::<f64>::zeros(EstimatorConfig::new(EstimatorKind::Gru, 2, 2)).unwrap();
        let mut p = p0.clone();
        let mut g = p0.zeros_like();
        g.readout.c[(0, 0)] = f64::NAN;
        let mut opt = OptimizerState::new(&p);
        let before = opt.clone();
        assert!(matches!(rmsprop_update(&mut p, &g, &mut opt, 0.1), Err(Error::Numeric(_))));
        assert_eq!(p, p0);
        assert_eq!(opt, before);
    }

    #[test]
    fn step_schedule_values() {
        let mut s = LrSchedule::new(LrScheduleKind::Step, 0.002);
        let mut rng = Rng::new(0);
        for t in 1..=150 {
            s.next_lr(t, &mut rng).unwrap();
        }
        assert_eq!(s.history[49], 0.002);
        assert!((s.history[50] - 2e-6).abs() < 1e-20);
        assert_eq!(s.history[150], ETA_FLOOR);
        assert_eq!(s.rate_for_epoch(50), 0.002);
        assert!((s.rate_for_epoch(51) - 2e-6).abs() < 1e-20);
    }

    #[test]
    fn stochastic_schedule_values() {
        let mut s = LrSchedule::new(LrScheduleKind::Stochastic, 0.002);
        assert!((s.noise_std(1) - 1.0124e-3).abs() < 1e-7);
        assert_eq!(s.next_lr_with_draw(1, 0.0).unwrap(), 0.002);
        assert!((s.next_lr_with_draw(2, 1.0).unwrap() - (0.002 + 1.025e-6)).abs() < 1e-15);
        // a large negative draw cannot push the rate below the floor
        assert_eq!(s.next_lr_with_draw(3, -1e9).unwrap(), ETA_FLOOR);
        let mut a = LrSchedule::new(LrScheduleKind::Stochastic, 0.002);
        for t in 1..50 {
            a.next_lr_with_draw(t, 0.0).unwrap();
        }
        assert!((a.next_lr_with_draw(50, 0.0).unwrap() - 2e-5).abs() < 1e-18);
        a.noise_is_std = true;
        assert_eq!(a.noise_std(1), DEFAULT_GAMMA);
        assert!(a.next_lr_with_draw(0, 0.0).is_err());
    }

    fn tiny_images(n: usize, size: usize) -> Vec<GrayImage> {
        (0..n)
            .map(|s| {
                let mut rng = Rng::new(100 + s as u64);
                GrayImage::from_fn(size, size, |x, y| {
                    (120.0 + 50.0 * ((x + 2 * y) as f64 * 0.4).sin() + 20.0 * rng.uniform()) as u8
                })
            })
            .collect()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            estimator: EstimatorConfig::new(EstimatorKind::DeltaRnn, 4, 8),
            k: 1,
            epochs: 1,
            batch: 1,
            quality_min: 50,
            quality_max: 50,
            val_fraction: 0.0,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_image_one_epoch_makes_p_updates() {
        let out = train::<f64>(&tiny_images(1, 24), &tiny_config()).unwrap();
        assert_eq!(out.log.epochs.len(), 1);
        assert_eq!(out.log.epochs[0].updates, 9);
        assert!(out.log.epochs[0].val_loss.is_nan());
    }

    #[test]
    fn training_is_deterministic() {
        let imgs = tiny_images(5, 16);
        let cfg = TrainConfig {
            epochs: 2,
            batch: 2,
            k: 2,
            quality_min: 30,
            quality_max: 70,
            val_fraction: 0.2,
            estimator: EstimatorConfig::new(EstimatorKind::Lstm, 3, 8),
            ..tiny_config()
        };
        let a = train::<f64>(&imgs, &cfg).unwrap();
        let b = train::<f64>(&imgs, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log.to_csv(false), b.log.to_csv(false));
        assert_eq!(a.val_indices.len(), 1);
        let other = train::<f64>(&imgs, &TrainConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(other.params, a.params);
    }

    #[test]
    fn training_rejects_bad_input() {
        assert!(matches!(train::<f64>(&[], &tiny_config()), Err(Error::Param(_))));
        let cfg = TrainConfig {
            quality_min: 80,
            quality_max: 20,
            ..tiny_config()
        };
        assert!(matches!(train::<f64>(&tiny_images(1, 16), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn log_csv_layout() {
        let out = train::<f64>(&tiny_images(2, 16), &TrainConfig { epochs: 2, ..tiny_config() }).unwrap();
        let csv = out.log.to_csv(true);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# ") && lines[0].contains("config_hash=") && lines[0].contains("seed=5"));
        assert_eq!(lines[1], LOG_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(
            out.log.to_csv(false).lines().nth(1).unwrap(),
            "epoch,eta,train_loss,val_loss,grad_norm_pre_clip"
        );
    }

    #[test]
    fn config_hash_tracks_settings() {
        let a = TrainConfig::default();
        assert_eq!(a.config_hash(), TrainConfig::default().config_hash());
        assert_eq!(a.config_hash().len(), 16);
        assert_ne!(a.config_hash(), TrainConfig { lambda: 0.3, ..a.clone() }.config_hash());
    }
}
