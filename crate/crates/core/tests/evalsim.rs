use std::f64::consts::PI;

use nalgebra::DMatrix;
use nfuca::analytical::design_analytical_clipped;
use nfuca::channel::{build_channel_for, DistanceModel, PathGainMode};
use nfuca::evalsim::{
    design_ps_only, digital_beamformer, fully_digital_baseline, hybrid_digital, run_experiment, spectral_efficiency,
    ChannelNormalization, DigitalBeamformer, ExperimentConfig, Scheme, Sweep, UserSampling,
};
use nfuca::geometry::{make_grid, make_uca_half_wavelength, PolarPoint, Scenario, ScenarioParts};
use num_complex::Complex64;
use proptest::prelude::*;

const C0: f64 = 299_792_458.0;

fn scenario(n: usize, q: usize, k: usize, m: usize, realizations: usize) -> Scenario {
    ScenarioParts {
        geometry: make_uca_half_wavelength(n, 28e9).unwrap(),
        grid: make_grid(28e9, 3e9, m).unwrap(),
        users: vec![],
        n_rf_chains: k,
        n_ttd_per_chain: q,
        snr_db: 15.0,
        tau_max_s: 20e-9,
        realizations,
    }
    .build()
    .unwrap()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn direct_evaluation_of_rates_small_instance() {
    // N = 8, K = 2, M = 2 checked against explicit matrix products.
    let (n, k, q, m_count) = (8, 2, 4, 2);
    let users = vec![PolarPoint::new(1.5, 0.4).unwrap(), PolarPoint::new(2.5, 3.5).unwrap()];
    let s = scenario(n, q, k, m_count, 1).with_users(users.clone()).unwrap();
    let bf = design_analytical_clipped(&s, &users).unwrap();
    let raw = build_channel_for(s.geometry(), s.grid(), &users, DistanceModel::Exact, PathGainMode::Common).unwrap();
    let ch = raw.normalized(1.0);
    let (sigma2, pt) = (0.7, 5.0);
    let digital = hybrid_digital(&ch, &bf, sigma2, pt).unwrap();
    let got = spectral_efficiency(&ch, &bf, &digital, sigma2, pt).unwrap();

    let radius = s.geometry().radius_m();
    let p = n / q;
    for m in 0..m_count {
        let f = s.grid().freq_hz(m);
        let km = 2.0 * PI * f / C0;
        // Hₘ: N × K from Cartesian distances.
        let mut h = DMatrix::<Complex64>::zeros(n, k);
        for (u, pt_u) in users.iter().enumerate() {
            let (ux, uy) = (pt_u.r_m() * pt_u.phi_rad().cos(), pt_u.r_m() * pt_u.phi_rad().sin());
            for i in 0..n {
                let psi = 2.0 * PI * i as f64 / n as f64;
                let d = ((ux - radius * psi.cos()).powi(2) + (uy - radius * psi.sin()).powi(2)).sqrt();
                h[(i, u)] = Complex64::from_polar(1.0, -km * d);
            }
            let norm = h.column(u).norm();
            for i in 0..n {
                h[(i, u)] /= c(norm, 0.0);
            }
        }
        let mut w1 = DMatrix::<Complex64>::zeros(n, q * k);
        let mut w2 = DMatrix::<Complex64>::zeros(q * k, k);
        for l in 0..k {
            for i in 0..n {
                w1[(i, l * q + i / p)] = Complex64::from_polar(1.0 / (n as f64).sqrt(), bf.ps_phases_rad[l][i]);
            }
            for qq in 0..q {
                w2[(l * q + qq, l)] = Complex64::from_polar(1.0, -2.0 * PI * f * bf.delays_s[l][qq]);
            }
        }
        let h_eq = h.adjoint() * &w1 * &w2;
        let rho = pt / (k as f64 * sigma2);
        let a = DMatrix::<Complex64>::identity(k, k) + h_eq.adjoint() * &h_eq * c(rho, 0.0);
        let mut d = a.try_inverse().unwrap() * h_eq.adjoint();
        for mut col in d.column_iter_mut() {
            let nrm = col.norm();
            col /= c(nrm, 0.0);
        }
        let x = &w1 * &w2 * &d * c((pt / k as f64).sqrt(), 0.0);
        for u in 0..k {
            let hu = h.column(u);
            let mut sig = 0.0;
            let mut intf = 0.0;
            for i in 0..k {
                let v: Complex64 = hu.iter().zip(x.column(i).iter()).map(|(a, b)| a.conj() * b).sum();
                if i == u {
                    sig = v.norm_sqr();
                } else {
                    intf += v.norm_sqr();
                }
            }
            let want = (1.0 + sig / (intf + sigma2)).log2();
            let have = got.per_user_per_subcarrier_rate[m][u];
            assert!((want - have).abs() < 1e-10, "m={m} k={u}: {want} vs {have}");
        }
    }
}

#[test]
fn orthogonal_rows_give_aligned_precoders() {
    let h = DMatrix::from_row_slice(2, 3, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, -1.0)]);
    let d = digital_beamformer(&h, 3.0).unwrap();
    for k in 0..2 {
        let hk = h.row(k).adjoint();
        let align = (hk.adjoint() * d.column(k))[(0, 0)].norm() / hk.norm();
        assert!((align - 1.0).abs() < 1e-10);
        let other = h.row(1 - k);
        assert!((other * d.column(k))[(0, 0)].norm() < 1e-10);
    }
}

#[test]
fn small_ratio_tends_to_mrt() {
    let h = DMatrix::from_fn(3, 5, |i, j| c((i + 2 * j) as f64 * 0.17 - 0.5, (i * j) as f64 * 0.11 + 0.2));
    let d = digital_beamformer(&h, 1e-12).unwrap();
    for k in 0..3 {
        let mrt = h.row(k).adjoint() / c(h.row(k).norm(), 0.0);
        assert!((d.column(k) - mrt).norm() < 1e-9);
    }
}

#[test]
fn single_user_rates() {
    let s = scenario(32, 4, 1, 3, 1);
    let users = vec![PolarPoint::new(2.0, 1.0).unwrap()];
    let s = s.with_users(users.clone()).unwrap();
    let ch = build_channel_for(s.geometry(), s.grid(), &users, DistanceModel::Exact, PathGainMode::Common)
        .unwrap()
        .normalized(1.0);
    let pt = 10.0;
    let fd = fully_digital_baseline(&ch, pt, 1.0).unwrap();
    for r in &fd.per_user_per_subcarrier_rate {
        assert!((r[0] - (1.0 + pt).log2()).abs() < 1e-12);
    }
    let bf = design_analytical_clipped(&s, &users).unwrap();
    let d = hybrid_digital(&ch, &bf, 1.0, pt).unwrap();
    let se = spectral_efficiency(&ch, &bf, &d, 1.0, pt).unwrap();
    for m in 0..3 {
        let w = nfuca::analytical::analog_response(&bf, m, 0);
        let g: Complex64 = ch.user(m, 0).iter().zip(&w).map(|(h, w)| h.conj() * w).sum();
        let want = (1.0 + pt * g.norm_sqr()).log2();
        assert!((se.per_user_per_subcarrier_rate[m][0] - want).abs() < 1e-12);
    }
}

#[test]
fn zero_power_gives_zero_rate() {
    let s = scenario(16, 4, 2, 2, 1);
    let users = vec![PolarPoint::new(1.0, 0.0).unwrap(), PolarPoint::new(1.5, 2.0).unwrap()];
    let s = s.with_users(users.clone()).unwrap();
    let ch = build_channel_for(s.geometry(), s.grid(), &users, DistanceModel::Exact, PathGainMode::Common).unwrap();
    let bf = design_ps_only(&s, &users).unwrap();
    let d = hybrid_digital(&ch, &bf, 1.0, 1.0).unwrap();
    let se = spectral_efficiency(&ch, &bf, &d, 1.0, 0.0).unwrap();
    assert!(se.per_user_per_subcarrier_rate.iter().flatten().all(|&r| r == 0.0));
    assert_eq!(fully_digital_baseline(&ch, 0.0, 1.0).unwrap().mean_rate, 0.0);
}

#[test]
fn dimension_mismatch_is_reported() {
    let s = scenario(16, 4, 1, 2, 1);
    let users = vec![PolarPoint::new(1.0, 0.0).unwrap()];
    let s = s.with_users(users.clone()).unwrap();
    let bf = design_ps_only(&s, &users).unwrap();
    let other = scenario(32, 4, 1, 2, 1);
    let ch = build_channel_for(other.geometry(), other.grid(), &users, DistanceModel::Exact, PathGainMode::Common)
        .unwrap();
    let d = DigitalBeamformer { d_m: vec![DMatrix::identity(1, 1); 2] };
    assert!(matches!(
        spectral_efficiency(&ch, &bf, &d, 1.0, 1.0),
        Err(nfuca::Error::DimensionMismatch(_))
    ));
    let ch_ok = build_channel_for(s.geometry(), s.grid(), &users, DistanceModel::Exact, PathGainMode::Common).unwrap();
    let short = DigitalBeamformer { d_m: vec![DMatrix::identity(1, 1)] };
    assert!(spectral_efficiency(&ch_ok, &bf, &short, 1.0, 1.0).is_err());
    assert!(spectral_efficiency(&ch_ok, &bf, &d, 0.0, 1.0).is_err());
}

#[test]
fn ps_only_has_zero_delays() {
    let s = scenario(64, 8, 2, 4, 1);
    let users = vec![PolarPoint::new(3.0, 0.0).unwrap(), PolarPoint::new(6.0, 2.0).unwrap()];
    let bf = design_ps_only(&s, &users).unwrap();
    assert!(bf.delays_s.iter().flatten().all(|&d| d == 0.0));
    assert_eq!(bf.scheme, "ps_only");
}

#[test]
fn fully_digital_dominates_each_instance() {
    let mut parts = scenario(64, 8, 3, 6, 6).to_parts();
    parts.snr_db = 10.0;
    let s = parts.build().unwrap();
    let config = ExperimentConfig {
        seed: 11,
        ..Default::default()
    };
    let table = run_experiment(
        &s,
        &[Scheme::PsOnly, Scheme::Analytical, Scheme::Joint, Scheme::FullyDigital],
        Sweep::Snr,
        &[10.0],
        &config,
    )
    .unwrap();
    let fd = &table.row(10.0, Scheme::FullyDigital).unwrap().per_realization;
    for scheme in [Scheme::PsOnly, Scheme::Analytical, Scheme::Joint] {
        let hy = &table.row(10.0, scheme).unwrap().per_realization;
        for (a, b) in hy.iter().zip(fd) {
            assert!(*a <= b + 1e-9, "{scheme:?}: {a} > {b}");
        }
    }
}

#[test]
fn experiment_is_deterministic_across_thread_counts() {
    let s = scenario(32, 4, 2, 4, 5);
    let config = ExperimentConfig {
        seed: 3,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                run_experiment(&s, &Scheme::ALL, Sweep::TauMax, &[0.0, 5e-9], &config).unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("sweep_value,scheme,mean_se,std_se,n_realizations\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    let other = run_experiment(
        &s,
        &Scheme::ALL,
        Sweep::TauMax,
        &[0.0, 5e-9],
        &ExperimentConfig {
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert_ne!(a.rows[0].mean_se, other.rows[0].mean_se);
}

#[test]
fn sampled_users_respect_bounds() {
    use rand::SeedableRng;
    let sampling = UserSampling::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let users = sampling.draw(&mut rng, 4, 5.0, 35.0).unwrap();
        for (i, u) in users.iter().enumerate() {
            assert!((5.0..35.0).contains(&u.r_m()));
            for v in &users[i + 1..] {
                let d = (u.phi_rad() - v.phi_rad()).rem_euclid(2.0 * PI);
                assert!(d.min(2.0 * PI - d) >= 5f64.to_radians());
            }
        }
    }
}

#[test]
fn sweep_rejects_bad_values() {
    let s = scenario(32, 4, 2, 4, 1);
    assert!(Sweep::Antennas.apply(&s, 30.0).is_err());
    assert!(Sweep::TtdCount.apply(&s, 2.5).is_err());
    assert!(Sweep::TauMax.apply(&s, -1e-9).is_err());
    assert!(Sweep::Bandwidth.apply(&s, f64::NAN).is_err());
    assert_eq!(Sweep::Antennas.apply(&s, 64.0).unwrap().geometry().n_antennas(), 64);
    assert_eq!(Sweep::TtdCount.apply(&s, 8.0).unwrap().n_ttd_per_chain(), 8);
    assert_eq!(Sweep::Bandwidth.apply(&s, 1e8).unwrap().grid().bandwidth_hz(), 1e8);
}

#[test]
fn fixed_users_are_reused() {
    let users = vec![PolarPoint::new(5.0, 0.0).unwrap(), PolarPoint::new(8.0, 1.0).unwrap()];
    let s = scenario(32, 4, 2, 4, 3).with_users(users).unwrap();
    let t = run_experiment(&s, &[Scheme::Analytical], Sweep::Snr, &[15.0], &ExperimentConfig::default()).unwrap();
    let r = &t.rows[0];
    assert_eq!(r.std_se, 0.0);
    assert!(r.per_realization.iter().all(|&x| x == r.per_realization[0]));
}

#[test]
fn normalization_modes_scale_as_documented() {
    let s = scenario(16, 4, 1, 2, 1);
    let users = vec![PolarPoint::new(2.0, 0.3).unwrap()];
    let ch = build_channel_for(s.geometry(), s.grid(), &users, DistanceModel::Exact, PathGainMode::Common).unwrap();
    let norm = |cs: &nfuca::channel::ChannelSet| cs.user(1, 0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    assert!((norm(&ChannelNormalization::UnitNorm.apply(&ch)) - 1.0).abs() < 1e-12);
    assert!((norm(&ChannelNormalization::ArrayGain.apply(&ch)) - 4.0).abs() < 1e-12);
    assert_eq!(ChannelNormalization::PathLoss.apply(&ch), ch);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn precoder_columns_unit_norm(
        k in 1usize..5,
        nf in 1usize..6,
        ratio in 1e-3f64..1e3,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = DMatrix::from_fn(k, nf, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let d = digital_beamformer(&h, ratio).unwrap();
        for col in d.column_iter() {
            prop_assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rates_nonnegative_and_finite(seed in 0u64..1000, snr in -10.0f64..30.0) {
        let mut parts = scenario(16, 4, 2, 3, 2).to_parts();
        parts.snr_db = snr;
        let s = parts.build().unwrap();
        let config = ExperimentConfig { seed, ..Default::default() };
        let t = run_experiment(&s, &[Scheme::PsOnly, Scheme::Analytical, Scheme::FullyDigital], Sweep::Snr, &[snr], &config).unwrap();
        for row in &t.rows {
            for r in row.result.per_user_per_subcarrier_rate.iter().flatten() {
                prop_assert!(r.is_finite() && *r >= 0.0);
            }
        }
    }
}
