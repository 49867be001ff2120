use chanest_core::channel::{generate_dataset, ChannelRealization, ClusterRayConfig};
use chanest_core::dataset_io::{decode_dataset, encode_dataset};
use chanest_core::estimators::{estimate_gan, estimate_omp, nmse_ratio, InversionConfig};
use chanest_core::measurement::{add_awgn, build_operator, sample_phase_networks, sample_pilots, MeasurementOperator, TransceiverConfig};
use chanest_core::neural::{channel_to_real, clip_weights, real_to_channel, rmsprop_step, NetworkParams, RmsPropConfig, RmsPropState};
use chanest_core::numeric::{inner, regularized_hermitian_solve, CMatrix, CVector};
use chanest_core::seed::rng_for;
use chanest_core::wgan::{critic_step, sample_latent, Generator, TrainState, WganConfig};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn cvec(n: usize, seed: u64) -> CVector {
    let mut rng = rng_for(seed, &[7]);
    (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect()
}

fn transceiver() -> impl Strategy<Value = TransceiverConfig> {
    (1usize..5, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(n_tx, n_rx, n_f, n_frames)| {
        (1..=n_tx, 1..=n_rx).prop_flat_map(move |(n_tx_rf, n_rx_rf)| {
            (1..=n_tx_rf).prop_map(move |n_streams| TransceiverConfig {
                n_tx,
                n_rx,
                n_tx_rf,
                n_rx_rf,
                n_streams,
                n_f,
                n_frames,
            })
        })
    })
}

fn random_operator(cfg: &TransceiverConfig, eta: f64, seed: u64) -> MeasurementOperator {
    let mut rng = rng_for(seed, &[1]);
    let pilots = sample_pilots(cfg, eta, &mut rng).unwrap();
    let (f, w) = sample_phase_networks(cfg, &mut rng).unwrap();
    build_operator(pilots, f, w, cfg).unwrap()
}

fn max_abs_diff(a: &CVector, b: &CVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn small_wgan() -> WganConfig {
    WganConfig { latent_dim: 3, generator_hidden: vec![12], critic_hidden: vec![10], batch_size: 6, ..WganConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_is_linear_and_matches_its_adjoint(cfg in transceiver(), eta in 0.1f64..=1.0, seed in any::<u64>()) {
        let op = random_operator(&cfg, eta, seed);
        let n = op.n_cols();
        let (h1, h2, r) = (cvec(n, seed ^ 1), cvec(n, seed ^ 2), cvec(op.n_rows(), seed ^ 3));
        let a = Complex64::new(0.7, -1.3);
        let lhs = op.forward_vec(&(&h1 * a + &h2)).unwrap();
        let rhs = op.forward_vec(&h1).unwrap() * a + op.forward_vec(&h2).unwrap();
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10 * (1.0 + rhs.iter().map(|z| z.norm()).fold(0.0, f64::max)));

        let ah = op.forward_vec(&h1).unwrap();
        let ahr = op.adjoint_vec(&r).unwrap();
        let (p, q) = (inner(&ah, &r), inner(&h1, &ahr));
        prop_assert!((p - q).norm() <= 1e-10 * (1.0 + p.norm()));

        let dense = op.dense_matrix();
        prop_assert!(max_abs_diff(&dense.dot(&h1), &ah) < 1e-10 * (1.0 + ah.iter().map(|z| z.norm()).fold(0.0, f64::max)));
    }

    #[test]
    fn pilots_and_networks_are_constant_modulus(cfg in transceiver(), eta in 0.05f64..=1.0, seed in any::<u64>()) {
        let op = random_operator(&cfg, eta, seed);
        let total = cfg.n_frames * cfg.n_f;
        prop_assert_eq!(op.pilots.active_count(), ((eta * total as f64) - 1e-9).ceil().clamp(1.0, total as f64) as usize);
        prop_assert_eq!(op.n_rows(), op.pilots.active_count() * cfg.n_rx_rf);
        let ps = (1.0 / cfg.n_streams as f64).sqrt();
        for n in 0..cfg.n_frames {
            for k in 0..cfg.n_f {
                let on = op.pilots.is_active(n, k);
                let want = if on { ps } else { 0.0 };
                let ok = op.pilots.symbol(n, k).iter().all(|s| (s.norm() - want).abs() < 1e-12);
                prop_assert!(ok);
            }
        }
        let ft = (1.0 / cfg.n_tx as f64).sqrt();
        let fr = (1.0 / cfg.n_rx as f64).sqrt();
        prop_assert!(op.f_rf.iter().all(|z| (z.norm() - ft).abs() < 1e-12 && z.im == 0.0));
        prop_assert!(op.w_rf.iter().all(|z| (z.norm() - fr).abs() < 1e-12 && z.im == 0.0));
    }

    #[test]
    fn noiseless_observation_is_the_forward_image(cfg in transceiver(), seed in any::<u64>()) {
        let op = random_operator(&cfg, 1.0, seed);
        let h = cvec(op.n_cols(), seed);
        let clean = op.forward_vec(&h).unwrap();
        let rx = add_awgn(&op, &clean, f64::INFINITY, &mut rng_for(seed, &[2])).unwrap();
        prop_assert_eq!(rx.noise_var, 0.0);
        prop_assert_eq!(rx.y, clean);
    }

    #[test]
    fn channel_layouts_round_trip(n_f in 1usize..4, n_rx in 1usize..4, n_tx in 1usize..4, seed in any::<u64>()) {
        let dims = chanest_core::channel::ChannelDims { n_f, n_rx, n_tx };
        let v = cvec(dims.len(), seed);
        let ch = ChannelRealization::from_vector(dims, &v).unwrap();
        prop_assert_eq!(&ch.to_vector(), &v);
        for k in 0..n_f {
            for r in 0..n_rx {
                for t in 0..n_tx {
                    prop_assert_eq!(ch.per_subcarrier[k][[r, t]], v[dims.index(k, r, t)]);
                }
            }
        }
        let x = channel_to_real(&ch);
        prop_assert_eq!(x[0], v[0].re);
        prop_assert_eq!(x[dims.len()], v[0].im);
        prop_assert_eq!(real_to_channel(dims, x.view()).unwrap(), ch);
    }

    #[test]
    fn nmse_is_scale_invariant_and_zero_only_at_truth(seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let dims = chanest_core::channel::ChannelDims { n_f: 2, n_rx: 2, n_tx: 3 };
        let h = cvec(dims.len(), seed);
        let e = &h + &cvec(dims.len(), seed ^ 9).mapv(|z| z * 0.1);
        let truth = ChannelRealization::from_vector(dims, &h).unwrap();
        let est = ChannelRealization::from_vector(dims, &e).unwrap();
        let a = nmse_ratio(&truth, &est).unwrap();
        let b = nmse_ratio(
            &ChannelRealization::from_vector(dims, &h.mapv(|z| z * scale)).unwrap(),
            &ChannelRealization::from_vector(dims, &e.mapv(|z| z * scale)).unwrap(),
        ).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a);
        prop_assert_eq!(nmse_ratio(&truth, &truth).unwrap(), 0.0);
    }

    #[test]
    fn ridge_solve_inverts_the_regularized_gram(n in 1usize..7, ridge in 0.0f64..2.0, seed in any::<u64>()) {
        let x = CMatrix::from_shape_vec((n + 2, n), cvec((n + 2) * n, seed).to_vec()).unwrap();
        let g = x.t().mapv(|z| z.conj()).dot(&x);
        let b = cvec(n, seed ^ 5);
        let sol = regularized_hermitian_solve(&g, &b, ridge).unwrap();
        let back = g.dot(&sol) + &sol.mapv(|z| z * ridge);
        prop_assert!(max_abs_diff(&back, &b) < 1e-8 * (1.0 + b.iter().map(|z| z.norm()).fold(0.0, f64::max)));
    }

    #[test]
    fn omp_residual_never_grows(seed in any::<u64>(), sparsity in 1usize..6) {
        let cfg = TransceiverConfig { n_tx: 4, n_rx: 2, n_tx_rf: 2, n_rx_rf: 2, n_streams: 2, n_f: 2, n_frames: 4 };
        let op = random_operator(&cfg, 1.0, seed);
        let y = cvec(op.n_rows(), seed ^ 4);
        let rx = chanest_core::measurement::ReceivedSignal { y, noise_var: 0.0 };
        let res = estimate_omp(&op, &rx, sparsity).unwrap();
        prop_assert!(res.support.len() <= sparsity);
        prop_assert_eq!(res.residual_norms.len(), res.support.len() + 1);
        prop_assert!(res.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn rmsprop_matches_its_update_rule(seed in any::<u64>(), lr in 1e-5f64..1e-1) {
        let cfg = small_wgan();
        let mut net = NetworkParams::init_he(&cfg.critic_specs(4), &mut rng_for(seed, &[3])).unwrap();
        let before = net.clone();
        let x = Array1::from(vec![0.3, -1.2, 0.5, 2.0]);
        let grads = net.backward(x.view(), Array1::from(vec![1.0]).view()).unwrap();
        let mut state = RmsPropState::new(&net);
        let rc = RmsPropConfig { lr, decay: 0.9, eps: 1e-8 };
        rmsprop_step(&mut net, &grads, &mut state, &rc).unwrap();
        for (i, l) in net.layers.iter().enumerate() {
            for ((p, p0), g) in l.weight.iter().zip(before.layers[i].weight.iter()).zip(grads.weights[i].iter()) {
                let s = 0.1 * g * g;
                prop_assert!((p - (p0 - lr * g / (s + 1e-8f64).sqrt())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn critic_stays_inside_the_clip_box(seed in any::<u64>(), clip in 1e-3f64..0.5) {
        let cfg = WganConfig { clip, ..small_wgan() };
        let mut state = TrainState::init(8, &cfg, seed).unwrap();
        prop_assert!(state.critic.max_abs_param() <= clip);
        let real = Array2::from_shape_fn((6, 8), |(i, j)| ((i * 8 + j) as f64).sin() * 3.0);
        for _ in 0..3 {
            critic_step(&mut state, real.view(), &cfg).unwrap();
            prop_assert!(state.critic.max_abs_param() <= clip);
        }
        let mut wild = state.critic.clone();
        wild.layers[0].weight.fill(10.0);
        clip_weights(&mut wild, clip).unwrap();
        prop_assert!(wild.max_abs_param() <= clip);
    }

    #[test]
    fn latent_search_never_ends_above_its_starting_points(seed in any::<u64>(), step in 1e-3f64..1.0) {
        let t = TransceiverConfig { n_tx: 2, n_rx: 2, n_tx_rf: 2, n_rx_rf: 2, n_streams: 2, n_f: 2, n_frames: 2 };
        let op = random_operator(&t, 1.0, seed);
        let net = NetworkParams::init_he(&small_wgan().generator_specs(2 * op.n_cols()), &mut rng_for(seed, &[4])).unwrap();
        let gen = Generator::new(net, op.dims(), 1.0).unwrap();
        let truth = gen.channel(&sample_latent(1, 3, &mut rng_for(seed, &[5])).row(0).to_owned()).unwrap();
        let rx = add_awgn(&op, &op.apply_forward(&truth).unwrap(), 10.0, &mut rng_for(seed, &[6])).unwrap();
        let inv = InversionConfig { restarts: 3, iterations: 15, step, ..Default::default() };
        let est = estimate_gan(&op, &rx, &gen, &inv, &mut rng_for(seed, &[8])).unwrap();
        let start = est.initial_losses.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(est.loss <= start);
        prop_assert!(est.restart_losses.iter().zip(&est.initial_losses).all(|(b, i)| b <= i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn datasets_regenerate_bit_exactly_and_nest(seed in any::<u64>(), count in 2usize..6) {
        let cfg = ClusterRayConfig {
            n_clusters: 2, n_tx_h: 2, n_tx_v: 1, n_rx_h: 1, n_rx_v: 2, n_subcarriers: 4, n_taps: 2,
            ..ClusterRayConfig::default()
        };
        let a = generate_dataset(&cfg, count, seed).unwrap();
        let b = generate_dataset(&cfg, count + 1, seed).unwrap();
        prop_assert_eq!(&a.realizations[..], &b.realizations[..count]);
        prop_assert_eq!(decode_dataset(&encode_dataset(&a).unwrap()).unwrap(), a.clone());
        let other = generate_dataset(&cfg, count, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(other.realizations, a.realizations);
    }
}
