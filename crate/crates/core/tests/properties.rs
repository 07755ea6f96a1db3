use fdmimo_core::array::{array_factor, build_array, first_null, steering_vector, ArrayConfig, Direction};
use fdmimo_core::channel::{generate_channel, los_probability, pathloss_db, ChannelOptions, LinkGeometry, Scenario};
use fdmimo_core::feedback::{
    build_dft_codebook, cqi_index, kronecker_codebook, pilot_overhead_fraction, select_beam, select_pmi, BeamSet,
    PilotScheme, CQI_EFFICIENCY,
};
use fdmimo_core::linalg::CMat;
use fdmimo_core::precoding::{slnr_precoder, slnr_value, zf_precoder};
use fdmimo_core::rng::{complex_normal, stream, Stream};
use fdmimo_core::scheduler::{greedy_group, SchedulingState};
use fdmimo_core::sim::harq::{HarqOutcome, HarqProcess};
use fdmimo_core::sim::config::HarqConfig;
use fdmimo_core::txru::{build_partitioned, compose_precoder, normalize_power, per_antenna_power, PrecoderStack, TxruGrid};
use fdmimo_core::C64;
use proptest::prelude::*;

fn random_vec(seed: u64, n: usize) -> Vec<C64> {
    let mut rng = stream(seed, Stream::Test, &[n as u64]);
    (0..n).map(|_| complex_normal(&mut rng)).collect()
}

fn random_mat(seed: u64, rows: usize, cols: usize) -> CMat<f64> {
    let v = random_vec(seed, rows * cols);
    CMat::from_fn(rows, cols, |i, j| v[i * cols + j])
}

fn geometry_strategy() -> impl Strategy<Value = ArrayConfig> {
    (1usize..=8, 1usize..=4, 1usize..=2, 0.3f64..1.5, 0.3f64..1.5)
        .prop_map(|(m, n, p, dv, dh)| ArrayConfig::new(m, n, p, dv, dh, 2.0e9))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_entries_unit_modulus(phi in -1.0f64..1.0, gamma in 0.1f64..2.0, n in 1usize..64) {
        let s = steering_vector(phi, gamma, n);
        let energy: f64 = s.entries.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((energy - n as f64).abs() < 1e-9);
        for (k, z) in s.entries.iter().enumerate() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            let expected = C64::from_polar(1.0, -std::f64::consts::TAU * k as f64 * gamma * phi);
            prop_assert!((z - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn matched_weights_give_element_count(cfg in geometry_strategy(), az in -80.0f64..80.0, el in -80.0f64..80.0) {
        let g = build_array::<f64>(&cfg).unwrap();
        let dir = Direction::new(az, el);
        let w: Vec<C64> = g.response(dir).iter().map(|a| a.conj()).collect();
        let af = array_factor(&g, &w, dir).unwrap();
        let n = g.len() as f64;
        prop_assert!(((af.re - n) / n).abs() < 1e-9 && af.im.abs() < 1e-9 * n);
    }

    #[test]
    fn array_factor_conjugate_symmetry(cfg in geometry_strategy(), az in -80.0f64..80.0, el in -80.0f64..80.0, seed: u64) {
        let g = build_array::<f64>(&cfg).unwrap();
        let w = random_vec(seed, g.len());
        let wc: Vec<C64> = w.iter().map(|z| z.conj()).collect();
        let dir = Direction::new(az, el);
        let a = array_factor(&g, &w, dir).unwrap();
        let b = array_factor(&g, &wc, dir.mirrored()).unwrap();
        prop_assert!((a.conj() - b).norm() < 1e-9 * (1.0 + a.norm()));
    }

    #[test]
    fn first_null_zeroes_the_pattern(n in 2usize..16, spacing in 0.3f64..1.2) {
        prop_assume!(n as f64 * spacing >= 1.0);
        let null = first_null(n, spacing).unwrap();
        let g = build_array::<f64>(&ArrayConfig::new(1, n, 1, 0.5, spacing, 2.0e9)).unwrap();
        let w = vec![C64::new(1.0, 0.0); n];
        let af = array_factor(&g, &w, Direction::new(null, 0.0)).unwrap();
        prop_assert!(af.norm() < 1e-9 * n as f64, "{}", af.norm());
    }

    #[test]
    fn precoder_composition_is_associative(l in 1usize..6, np in 1usize..5, r in 1usize..3, seed: u64) {
        let stack = PrecoderStack::new(random_mat(seed, 12, l), random_mat(seed ^ 1, l, np), random_mat(seed ^ 2, np, r)).unwrap();
        let left = stack.w_t.matmul(&stack.w_p).unwrap().matmul(&stack.w_u).unwrap();
        let right = compose_precoder(&stack).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12 * (1.0 + left.frobenius_sq().sqrt()));
    }

    #[test]
    fn partitioned_supports_are_disjoint(nv_pow in 0u32..4, nh_pow in 0u32..3, p in 1usize..=2, seed: u64) {
        let (m, n) = (8usize, 4usize);
        let n_v = 1usize << nv_pow;
        let n_h = (1usize << nh_pow) * p;
        let g = build_array::<f64>(&ArrayConfig::new(m, n, p, 0.8, 0.5, 2.0e9)).unwrap();
        let nc = (m / n_v) * (n / (n_h / p));
        let arch = build_partitioned(&g, TxruGrid::new(n_v, n_h), &random_vec(seed, nc)).unwrap();
        let gram = arch.w_t.adjoint().matmul(&arch.w_t).unwrap();
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                if i != j {
                    prop_assert_eq!(gram[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        for e in 0..arch.w_t.rows() {
            let driven = (0..arch.w_t.cols()).filter(|&j| arch.w_t[(e, j)].norm_sqr() > 0.0).count();
            prop_assert_eq!(driven, 1);
        }
    }

    #[test]
    fn normalized_power_respects_budgets(rows in 1usize..16, r in 1usize..3, power in 0.1f64..10.0, share in 0.05f64..1.0, seed: u64) {
        let w = random_mat(seed, rows, r);
        let limit = power * share;
        let out = normalize_power(&w, power, Some(limit));
        prop_assert!(out.frobenius_sq() <= power * (1.0 + 1e-12));
        for pa in per_antenna_power(&out) {
            prop_assert!(pa <= limit * (1.0 + 1e-12));
        }
        let free = normalize_power(&w, power, None);
        prop_assert!((free.frobenius_sq() - power).abs() < 1e-9 * power);
    }

    #[test]
    fn los_probability_is_monotone(d in 0.0f64..2000.0, step in 0.1f64..200.0, h in 1.5f64..30.0, dh in 0.1f64..10.0) {
        for s in [Scenario::uma(), Scenario::umi()] {
            let p = los_probability(&s, d, h).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(los_probability(&s, d + step, h).unwrap() <= p + 1e-15);
            prop_assert!(los_probability(&s, d, h + dh).unwrap() >= p - 1e-15);
        }
    }

    #[test]
    fn pathloss_increases_with_distance(d in 10.0f64..5000.0, step in 0.1f64..500.0, h in 1.5f64..30.0, los: bool) {
        for s in [Scenario::uma(), Scenario::umi()] {
            prop_assert!(pathloss_db(&s, d + step, h, los).unwrap() > pathloss_db(&s, d, h, los).unwrap());
        }
    }

    #[test]
    fn channel_is_deterministic_per_key(seed: u64, link in 0u64..1000, az in -60.0f64..60.0) {
        let g = build_array::<f64>(&ArrayConfig::default()).unwrap();
        let s = Scenario::uma();
        let geo = LinkGeometry { distance_2d: 150.0, distance_3d: 152.0, ue_height: 1.5, azimuth_deg: az, elevation_deg: -9.0 };
        let draw = || generate_channel(&g, &s, &geo, 2, &ChannelOptions::default(), &mut stream(seed, Stream::Fading, &[link])).unwrap();
        prop_assert_eq!(draw(), draw());
    }

    #[test]
    fn selection_ignores_scale_and_phase(seed: u64, scale in 0.01f64..100.0, phase in 0.0f64..6.28) {
        let cb = build_dft_codebook::<f64>(8, 2).unwrap();
        let h = random_vec(seed, 8);
        let rot = C64::from_polar(scale, phase);
        let h2: Vec<C64> = h.iter().map(|z| z * rot).collect();
        prop_assert_eq!(select_pmi(&h, &cb).unwrap().0, select_pmi(&h2, &cb).unwrap().0);
        let beams = BeamSet::new(cb.codewords.iter().map(|c| c.column(0)).collect()).unwrap();
        prop_assert_eq!(select_beam(&h, &beams).unwrap().0, select_beam(&h2, &beams).unwrap().0);
    }

    #[test]
    fn kronecker_selection_factorizes(seed: u64, nv in 1usize..=4, nh in 1usize..=4) {
        let v = build_dft_codebook::<f64>(nv, 2).unwrap();
        let h = build_dft_codebook::<f64>(nh, 2).unwrap();
        let composite = kronecker_codebook(&v, &h);
        prop_assert_eq!(composite.len(), v.len() * h.len());
        let hv = random_vec(seed, nv);
        let hh = random_vec(seed ^ 7, nh);
        let full: Vec<C64> = hv.iter().flat_map(|a| hh.iter().map(move |b| a * b)).collect();
        let (i, _) = select_pmi(&full, &composite).unwrap();
        let (iv, _) = select_pmi(&hv, &v).unwrap();
        let (ih, _) = select_pmi(&hh, &h).unwrap();
        prop_assert_eq!(composite.split_index(i), (iv, ih));
    }

    #[test]
    fn zf_has_no_leakage_and_full_power(users in 1usize..=4, extra in 0usize..5, power in 0.1f64..10.0, seed: u64) {
        let h = random_mat(seed, users, users + extra + 4);
        let zf = zf_precoder(&h, power).unwrap();
        prop_assert_eq!(zf.served.len(), users);
        prop_assert!((zf.w.frobenius_sq() - power).abs() < 1e-9 * power);
        let g = h.matmul(&zf.w).unwrap();
        for i in 0..users {
            let signal = g[(i, i)].norm_sqr();
            for j in 0..users {
                if i != j {
                    prop_assert!(g[(i, j)].norm_sqr() <= 1e-20 * signal);
                }
            }
        }
    }

    #[test]
    fn slnr_beats_matched_filter(users in 1usize..=4, n_rx in 1usize..=2, noise in 0.01f64..10.0, seed: u64) {
        let channels: Vec<CMat<f64>> = (0..users).map(|k| random_mat(seed.wrapping_add(k as u64), n_rx, 8)).collect();
        let pre = slnr_precoder(&channels, &vec![1; users], noise, 1.0).unwrap();
        prop_assert!((pre.w.frobenius_sq() - 1.0).abs() < 1e-9);
        for k in 0..users {
            let w = pre.w.column(k);
            let (_, vecs) = fdmimo_core::linalg::hermitian_eigen(&channels[k].adjoint().matmul(&channels[k]).unwrap()).unwrap();
            let mf = vecs.column(0);
            let a = slnr_value(&channels, k, &w, noise);
            let b = slnr_value(&channels, k, &mf, noise);
            prop_assert!(a >= b * (1.0 - 1e-9), "{a} < {b}");
            prop_assert!((a - pre.slnr[k]).abs() < 1e-6 * a.max(1.0));
        }
    }

    #[test]
    fn greedy_group_respects_caps(ranks in prop::collection::vec(1usize..=2, 1..8), seed: u64) {
        let cands: Vec<(usize, usize)> = ranks.iter().enumerate().map(|(u, &r)| (u, r)).collect();
        let weights = random_vec(seed, cands.len());
        if let Some((g, value)) = greedy_group(&cands, 4, |g| g.ues.iter().zip(&g.ranks).map(|(&u, &r)| weights[u].norm() * r as f64).sum()) {
            prop_assert!(g.layers() <= 4);
            prop_assert!(g.ranks.iter().all(|&r| (1..=2).contains(&r)));
            prop_assert!(value > 0.0);
            g.validate(4, 2).unwrap();
        }
    }

    #[test]
    fn pf_averages_stay_positive(window in 1.5f64..1000.0, rates in prop::collection::vec(0.0f64..100.0, 1..10)) {
        let mut s = SchedulingState::new(rates.len(), window).unwrap();
        prop_assert!(s.alpha > 0.0 && s.alpha < 1.0);
        for _ in 0..5 {
            s.update(&rates);
            s.update(&vec![0.0; rates.len()]);
        }
        prop_assert!(s.average.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn cqi_index_is_monotone(a in 0.0f64..8.0, b in 0.0f64..8.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cqi_index(lo) <= cqi_index(hi));
        prop_assert!(CQI_EFFICIENCY[cqi_index(hi) as usize] <= hi);
    }

    #[test]
    fn pilot_overhead_is_affine(n in 0usize..100) {
        let f = |k| pilot_overhead_fraction(PilotScheme::NonPrecoded, k);
        prop_assert!((f(n + 1) - f(n) - 1.0 / 168.0).abs() < 1e-12);
    }

    #[test]
    fn harq_never_exceeds_retransmission_budget(mis in prop::collection::vec(0.0f64..500.0, 1..10)) {
        let cfg = HarqConfig::default();
        let mut p = HarqProcess::new(0, 1000.0, vec![0], 1, 0);
        for (k, &mi) in mis.iter().enumerate() {
            match p.receive(mi, 8 * k as u32, &cfg) {
                HarqOutcome::Nack(_) => prop_assert!(p.transmissions <= cfg.max_retransmissions),
                HarqOutcome::Ack | HarqOutcome::Failed => break,
            }
        }
        prop_assert!(p.transmissions <= cfg.max_retransmissions + 1);
    }
}

#[test]
fn pf_shares_equalize_for_symmetric_users() {
    use rand::Rng;
    let mut rng = stream(21, Stream::Test, &[]);
    let n = 4;
    let mut s = SchedulingState::new(n, 100.0).unwrap();
    let mut served = vec![0.0; n];
    for _ in 0..100_000 {
        let rates: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.5..1.5)]).collect();
        let alloc = fdmimo_core::scheduler::pf_schedule(&mut s, &rates).unwrap();
        if let Some(u) = alloc[0] {
            served[u] += rates[u][0];
        }
    }
    let mean = served.iter().sum::<f64>() / n as f64;
    for x in served {
        assert!((x - mean).abs() / mean < 0.02, "{x} vs {mean}");
    }
}

#[test]
fn channel_energy_normalization() {
    let g = build_array::<f64>(&ArrayConfig::default()).unwrap();
    let s = Scenario::uma();
    let geo = LinkGeometry {
        distance_2d: 200.0,
        distance_3d: 201.0,
        ue_height: 1.5,
        azimuth_deg: 10.0,
        elevation_deg: -7.0,
    };
    let opts = ChannelOptions {
        unit_large_scale: true,
        ..Default::default()
    };
    let draws = 10_000;
    let mut rng = stream(2024, Stream::MonteCarlo, &[]);
    let mut acc = 0.0;
    for _ in 0..draws {
        let ch = generate_channel(&g, &s, &geo, 2, &opts, &mut rng).unwrap();
        acc += ch.h.frobenius_sq() / (g.len() * 2) as f64;
    }
    let mean = acc / draws as f64;
    assert!((0.95..=1.05).contains(&mean), "{mean}");
}
