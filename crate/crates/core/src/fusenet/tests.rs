use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::pose_error;
use crate::neural::{finite_difference_gradient, relative_error, Hyperparams, ParameterSet};
use crate::{Pose, TimedPose, Trajectory, Vec3};

fn random_samples(rng: &mut ChaCha8Rng, n: usize, ratio: usize) -> Vec<FusedSample> {
    (0..n)
        .map(|k| FusedSample {
            timestamp: (k + 1) as f64 * 0.04,
            previous_timestamp: k as f64 * 0.04,
            mag_inputs: (0..ratio).map(|_| std::array::from_fn(|_| rng.random_range(-1.5..1.5))).collect(),
            vis_input: std::array::from_fn(|_| rng.random_range(-1.5..1.5)),
            target: Some(std::array::from_fn(|_| rng.random_range(-1e-3..1e-3))),
        })
        .collect()
}

fn random_normalization(rng: &mut ChaCha8Rng) -> Normalization {
    let mut n = Normalization::identity();
    for k in 0..OUTPUTS {
        n.target.mean[k] = rng.random_range(-1e-3..1e-3);
        n.target.sd[k] = rng.random_range(1e-4..1e-3);
    }
    n
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Independent scalar LSTM step reading every weight through `Matrix::get`.
fn oracle_cell(w: &crate::LstmWeights, x: &[f64], h: &mut Vec<f64>, c: &mut Vec<f64>) {
    let n = w.hidden_size();
    let gate = |wx: &crate::Matrix, wh: &crate::Matrix, k: usize| {
        let mut a = 0.0;
        for j in 0..x.len() {
            a += wx.get(k, j) * x[j];
        }
        for j in 0..n {
            a += wh.get(k, j) * h[j];
        }
        a
    };
    let mut h_new = vec![0.0; n];
    let mut c_new = vec![0.0; n];
    for k in 0..n {
        let i = sigmoid(gate(&w.w_ix, &w.w_ih, k));
        let f = sigmoid(gate(&w.w_fx, &w.w_fh, k));
        let g = gate(&w.w_gx, &w.w_gh, k).tanh();
        let o = sigmoid(gate(&w.w_ox, &w.w_oh, k));
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    *h = h_new;
    *c = c_new;
}

fn oracle_forward(net: &FusionNetwork, samples: &[FusedSample]) -> Vec<[f64; OUTPUTS]> {
    let n = net.hidden_size();
    let (mut hm, mut cm) = (vec![0.0; n], vec![0.0; n]);
    let (mut hv, mut cv) = (vec![0.0; n], vec![0.0; n]);
    let (mut hc, mut cc) = (vec![0.0; n], vec![0.0; n]);
    let mut out = Vec::new();
    for s in samples {
        for m in &s.mag_inputs {
            oracle_cell(&net.mag_lstm, m, &mut hm, &mut cm);
        }
        oracle_cell(&net.vis_lstm, &s.vis_input, &mut hv, &mut cv);
        let joined: Vec<f64> = hm.iter().chain(hv.iter()).copied().collect();
        oracle_cell(&net.core_lstm, &joined, &mut hc, &mut cc);
        let mut skip_x: Vec<f64> = (0..MAG_INPUTS).map(|c| s.mag_inputs.iter().map(|m| m[c]).sum()).collect();
        skip_x.extend_from_slice(&s.vis_input);
        out.push(std::array::from_fn(|r| {
            net.head.bias[r]
                + (0..n).map(|j| net.head.weight.get(r, j) * hc[j]).sum::<f64>()
                + net.skip.bias[r]
                + (0..SKIP_INPUTS).map(|j| net.skip.weight.get(r, j) * skip_x[j]).sum::<f64>()
        }));
    }
    out
}

#[test]
fn zero_weights_output_the_head_bias() {
    let mut net = FusionNetwork::zeros(8, 2);
    net.head.bias = vec![0.1, -0.2, 0.3, -0.4, 0.5, -0.6];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = random_samples(&mut rng, 7, 2);
    let y = net.predict(&samples, &mut net.initial_state()).unwrap();
    assert_eq!(y.len(), samples.len());
    assert!(y.iter().all(|v| v.as_slice() == net.head.bias.as_slice()));
}

#[test]
fn forward_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for ratio in [1, 2, 3] {
        let net = FusionNetwork::random(5, ratio, &mut rng);
        let samples = random_samples(&mut rng, 9, ratio);
        let y = net.predict(&samples, &mut net.initial_state()).unwrap();
        let oracle = oracle_forward(&net, &samples);
        for (a, b) in y.iter().zip(&oracle) {
            for k in 0..OUTPUTS {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn shapes_and_dimension_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = FusionNetwork::random(6, 2, &mut rng);
    net.validate().unwrap();
    assert_eq!(net.mag_lstm.input_size(), 5);
    assert_eq!(net.head.output_size(), 6);
    let mut samples = random_samples(&mut rng, 4, 2);
    assert!(net.predict(&[], &mut net.initial_state()).is_err());
    samples[2].mag_inputs.pop();
    assert!(matches!(net.predict(&samples, &mut net.initial_state()), Err(crate::Error::DimensionMismatch { .. })));
    let mut bad = net.clone();
    bad.head = crate::neural::Linear::zeros(6, 5);
    assert!(bad.validate().is_err());
}

#[test]
fn full_network_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let net = FusionNetwork::random(4, 2, &mut rng);
        let norm = random_normalization(&mut rng);
        let samples = random_samples(&mut rng, 3, 2);
        let beta = rng.random_range(1.0..10.0);
        let span = if seed % 2 == 0 { LossSpan::Step } else { LossSpan::Window };
        let init = NetworkState {
            mag: crate::LstmState { h: vec![0.1; 4], c: vec![-0.2; 4] },
            ..net.initial_state()
        };
        // A fixed dropout seed makes the masks part of the function.
        let loss_at = |flat: &[f64]| {
            let mut n = net.clone();
            n.assign(flat);
            let (y, _, _) = n.forward(&samples, &init, 0.3, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            window_loss(&y, &samples, &norm, beta, span).unwrap().0
        };
        let (y, _, cache) = net.forward(&samples, &init, 0.3, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (_, d) = window_loss(&y, &samples, &norm, beta, span).unwrap();
        let analytic = net.backward(&cache, &d).unwrap().flatten();
        let numeric = finite_difference_gradient(loss_at, &net.flatten(), 1e-6);
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn odd_readout_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let net = FusionNetwork::random(4, 2, &mut rng);
        let mut norm = random_normalization(&mut rng);
        norm.target.mean = vec![0.0; OUTPUTS];
        let samples = random_samples(&mut rng, 4, 2);
        let loss_at = |flat: &[f64]| {
            let mut n = net.clone();
            n.assign(flat);
            let (y, _) = n.forward_readout(&samples, Readout::Odd, 0.2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            window_loss(&y, &samples, &norm, 3.0, LossSpan::Window).unwrap().0
        };
        let (y, cache) = net.forward_readout(&samples, Readout::Odd, 0.2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (_, d) = window_loss(&y, &samples, &norm, 3.0, LossSpan::Window).unwrap();
        let analytic = net.backward_readout(&cache, &d).unwrap();
        let numeric = finite_difference_gradient(loss_at, &net.flatten(), 1e-6);
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn odd_readout_is_exactly_odd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut net = FusionNetwork::random(6, 2, &mut rng);
    net.head.bias = vec![0.3; OUTPUTS];
    let samples = random_samples(&mut rng, 25, 2);
    let flipped: Vec<FusedSample> = samples.iter().map(negated).collect();
    let y = net.predict_from_zero(&samples, Readout::Odd).unwrap();
    let z = net.predict_from_zero(&flipped, Readout::Odd).unwrap();
    for (a, b) in y.iter().zip(&z) {
        for k in 0..OUTPUTS {
            assert_eq!(a[k], -b[k]);
        }
    }
    let direct = net.predict_from_zero(&samples, Readout::Direct).unwrap();
    assert_ne!(direct, y);
    assert_eq!("odd".parse::<Readout>().unwrap(), Readout::Odd);
    assert!("even".parse::<Readout>().is_err());
}

#[test]
fn window_loss_matches_accumulated_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let norm = random_normalization(&mut rng);
    let samples = random_samples(&mut rng, 6, 2);
    let outputs: Vec<[f64; OUTPUTS]> = (0..6).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
    let beta = 4.0;
    let mut expected = 0.0;
    for t in 0..samples.len() {
        let mut p = [0.0; OUTPUTS];
        let mut q = [0.0; OUTPUTS];
        for s in 0..=t {
            for k in 0..OUTPUTS {
                p[k] += (outputs[s][k] * norm.target.sd[k] + norm.target.mean[k]) / norm.target.sd[k];
                q[k] += samples[s].target.unwrap()[k] / norm.target.sd[k];
            }
        }
        let tn = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt();
        let rn = (3..6).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt();
        expected += tn + beta * rn;
    }
    let (loss, _) = window_loss(&outputs, &samples, &norm, beta, LossSpan::Window).unwrap();
    assert!((loss - expected).abs() < 1e-9 * expected, "{loss} vs {expected}");
    let (step, _) = window_loss(&outputs[..1], &samples[..1], &norm, beta, LossSpan::Step).unwrap();
    let (acc, _) = window_loss(&outputs[..1], &samples[..1], &norm, beta, LossSpan::Window).unwrap();
    assert_eq!(step, acc);
}

#[test]
fn skip_prior_reproduces_its_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut norm = random_normalization(&mut rng);
    for k in 0..MAG_INPUTS {
        norm.mag.mean[k] = rng.random_range(-0.5..0.5);
        norm.mag.sd[k] = rng.random_range(0.1..2.0);
    }
    for k in 0..VIS_INPUTS {
        norm.vis.mean[k] = rng.random_range(-0.5..0.5);
        norm.vis.sd[k] = rng.random_range(0.1..2.0);
    }
    let raw = random_samples(&mut rng, 12, 2);
    for kind in [DeltaKind::Relative, DeltaKind::Difference] {
        let map = dof_prior(kind, MagEncoding::Increment);
        let mut net = FusionNetwork::random(5, 2, &mut rng);
        net.set_skip_prior(&map, &norm);
        let normalized: Vec<FusedSample> = raw.iter().map(|s| norm.apply(s)).collect();
        let y = net.predict_from_zero(&normalized, Readout::Direct).unwrap();
        for (s, y) in raw.iter().zip(&y) {
            let mut x: Vec<f64> = (0..MAG_INPUTS).map(|c| s.mag_inputs.iter().map(|m| m[c]).sum()).collect();
            x.extend_from_slice(&s.vis_input);
            let out = norm.output(y);
            for k in 0..OUTPUTS {
                let expected: f64 = (0..SKIP_INPUTS).map(|j| map[k][j] * x[j]).sum();
                assert!((out[k] - expected).abs() < 1e-12, "{kind} {k}: {} vs {expected}", out[k]);
            }
        }
    }
    let diff = dof_prior(DeltaKind::Difference, MagEncoding::Increment);
    assert_eq!(diff[3][MAG_INPUTS + 3], 1.0);
    assert_eq!(diff[0][0], 1.0);
    assert_eq!(dof_prior(DeltaKind::Difference, MagEncoding::Absolute)[0][MAG_INPUTS], 1.0);
}

#[test]
fn chunked_inference_equals_whole() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = FusionNetwork::random(7, 2, &mut rng);
    let samples = random_samples(&mut rng, 20, 2);
    let whole = net.predict(&samples, &mut net.initial_state()).unwrap();
    let mut state = net.initial_state();
    let mut parts = net.predict(&samples[..8], &mut state).unwrap();
    parts.extend(net.predict(&samples[8..], &mut state).unwrap());
    assert_eq!(whole, parts);
}

#[test]
fn beta_calibration_rules() {
    assert_eq!(beta_from_residuals(&[0.001], &[0.001]), BetaCalibration { beta: 1.0, flagged: false });
    let c = beta_from_residuals(&[0.01, 0.01], &[0.0001, 0.0001]);
    assert!((c.beta - 100.0).abs() < 1e-9 && !c.flagged);
    assert_eq!(beta_from_residuals(&[0.01], &[0.0, 0.0]), BetaCalibration { beta: BETA_MAX, flagged: true });
    assert_eq!(beta_from_residuals(&[1e-9], &[1.0]).beta, BETA_MIN);
    assert_eq!(beta_from_residuals(&[1e3], &[1e-3]).beta, BETA_MAX);
}

#[test]
fn early_stopping_counts_stale_epochs() {
    let mut s = EarlyStopping::new(3);
    let stops: Vec<bool> = (1..=6).map(|e| s.update(e, e as f64)).collect();
    assert_eq!(stops, vec![false, false, false, true, true, true]);
    assert_eq!(s.best_epoch, Some(1));
    let mut s = EarlyStopping::new(2);
    assert!(!s.update(1, 5.0) && !s.update(2, 6.0) && !s.update(3, 4.0) && !s.update(4, 4.5) && s.update(5, 4.5));
}

fn constant_delta_sequence(n: usize) -> Vec<FusedSample> {
    let delta = [2e-4, -1e-4, 5e-5, 1e-3, 0.0, -2e-3];
    (0..n)
        .map(|k| {
            let t = k as f64 * 0.04;
            FusedSample {
                timestamp: t + 0.04,
                previous_timestamp: t,
                mag_inputs: vec![[0.01 * (t).sin(), 0.0, -0.06, 1.5, 0.1]; 2],
                vis_input: delta,
                target: Some(delta),
            }
        })
        .collect()
}

fn quick_config() -> (TrainingConfig, Hyperparams) {
    let cfg = TrainingConfig {
        max_epochs: 50,
        window_length: 16,
        warmup_epochs: 5,
        seed: 7,
        skip_prior: false,
        ..TrainingConfig::default()
    };
    let hp = Hyperparams { hidden_size: 8, alpha: 1e-2, ..Hyperparams::default() };
    (cfg, hp)
}

#[test]
fn constant_delta_is_memorized() {
    let (cfg, hp) = quick_config();
    let (ckpt, log) = train(&[constant_delta_sequence(400)], &cfg, &hp).unwrap();
    let best = log.records.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
    assert!(best <= 0.1 * log.initial_loss, "{best:e} vs {:e}", log.initial_loss);
    assert!(log.records.len() <= 50);
    if let Some(b) = log.best_epoch {
        assert!(log.records.last().unwrap().epoch - b <= cfg.early_stop_patience);
    }
    ckpt.validate().unwrap();
    assert!(log.records_text().lines().count() >= log.records.len() + 2);
}

#[test]
fn training_is_deterministic() {
    let (cfg, hp) = quick_config();
    let cfg = TrainingConfig { max_epochs: 8, ..cfg };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = vec![random_samples(&mut rng, 100, 2), random_samples(&mut rng, 60, 2)];
    let a = train(&data, &cfg, &hp).unwrap();
    let b = train(&data, &cfg, &hp).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0.to_json().unwrap(), b.0.to_json().unwrap());
    let c = train(&data, &TrainingConfig { seed: 8, ..cfg }, &hp).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn training_input_errors() {
    let (cfg, hp) = quick_config();
    assert!(train(&[], &cfg, &hp).is_err());
    assert!(train(&[constant_delta_sequence(400)], &TrainingConfig { window_length: 1, ..cfg.clone() }, &hp).is_err());
    let mut no_target = constant_delta_sequence(100);
    no_target[3].target = None;
    assert!(train(&[no_target], &cfg, &hp).is_err());
}

fn trained_like(rng: &mut ChaCha8Rng) -> Checkpoint {
    Checkpoint {
        network: FusionNetwork::random(6, 2, rng),
        hyperparams: Hyperparams { hidden_size: 6, beta_loss: 37.5, ..Hyperparams::default() },
        normalization: random_normalization(rng),
        delta: DeltaKind::Relative,
        mag_encoding: MagEncoding::Absolute,
        readout: Readout::Odd,
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ckpt = trained_like(&mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &ckpt, None).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    save_checkpoint(&path, &ckpt, Some("#capfuse-checkpoint v1 seed=3\n# second")).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    assert!(save_checkpoint(&path, &ckpt, Some("no hash")).is_err());
    let samples = random_samples(&mut rng, 30, 2);
    assert_eq!(back.predict_deltas(&samples).unwrap(), ckpt.predict_deltas(&samples).unwrap());

    let text = ckpt.to_json().unwrap().replacen("\"version\":\"1\"", "\"version\":\"9\"", 1);
    assert!(matches!(Checkpoint::from_json(&text), Err(crate::Error::Version { .. })));
    assert!(Checkpoint::from_json("{\"format\":\"other\"}").is_err());
    assert!(Checkpoint::from_json("not json").is_err());
    let truncated = ckpt.to_json().unwrap().replacen("\"head.bias\"", "\"head.bias2\"", 1);
    assert!(Checkpoint::from_json(&truncated).is_err());
}

fn straight_line(n: usize, step: [f64; 6]) -> Trajectory {
    let start = Pose::new(Vec3::new(0.0, 0.01, -0.05), Vec3::new(0.1, 0.2, 0.3));
    let poses: Vec<TimedPose> = (0..n)
        .map(|k| TimedPose {
            time: k as f64 / 25.0,
            pose: integrate(&start, &vec![step; k], DeltaKind::Difference).last().copied().unwrap_or(start),
        })
        .collect();
    Trajectory::new(poses).unwrap()
}

#[test]
fn exact_outputs_reproduce_the_trajectory() {
    let step = [1e-4, -2e-4, 5e-5, 1e-3, -2e-3, 3e-3];
    let gt = straight_line(60, step);
    let vis: Vec<crate::sim::VisMeasurement> = gt
        .samples()
        .iter()
        .enumerate()
        .map(|(k, s)| crate::sim::VisMeasurement {
            timestamp: s.time,
            delta: if k == 0 { Pose::identity() } else { Pose::from_array(step) },
        })
        .collect();
    let mag: Vec<crate::magloc::MagMeasurement5DoF> = (0..120)
        .map(|k| crate::magloc::MagMeasurement5DoF::from_angles(k as f64 / 50.0, Vec3::new(0.0, 0.0, -0.05), 1.5, 0.0))
        .collect();
    // Zero weights emit the target mean, which is the constant step.
    let mut ckpt = Checkpoint {
        network: FusionNetwork::zeros(4, 2),
        hyperparams: Hyperparams { hidden_size: 4, ..Hyperparams::default() },
        normalization: Normalization::identity(),
        delta: DeltaKind::Difference,
        mag_encoding: MagEncoding::Increment,
        readout: Readout::Direct,
    };
    ckpt.normalization.target.mean = step.to_vec();
    let start = gt.samples()[0].pose;
    let est = predict_trajectory(&ckpt, &mag, &vis, &start).unwrap();
    assert_eq!(est.len(), 59);
    for s in est.samples() {
        let e = pose_error(&s.pose, &gt.interpolate(s.time).unwrap());
        assert!(e.translation < 1e-6 && e.rotation < 1e-6);
    }
    ckpt.normalization.target.mean = vec![0.0; 6];
    let still = predict_trajectory(&ckpt, &mag, &vis, &start).unwrap();
    assert!(still.samples().iter().all(|s| s.pose == start));
}
