//! Property tests for the structural invariants: metric axioms, table
//! monotonicity, Legendre geometry over random IFS weights, estimator
//! clamps and format round-trips.

use multifrac_core::dei::{suveges_theta, ExceedanceRecord};
use multifrac_core::dynsys::{distance, Metric, SystemSpec, Trajectory};
use multifrac_core::evt::{dq_from_local_dims, exceedance_tail, LocalDimSample, UGrid};
use multifrac_core::largedev::{legendre, TauSource, TransformKind};
use multifrac_core::recurrence::{correlation_integral, hitting_integral, RadiusGrid};
use proptest::prelude::*;

fn unit_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in unit_point(), b in unit_point(), c in unit_point()) {
        for metric in [Metric::TorusEuclidean, Metric::Euclidean] {
            let dab = distance(metric, &a, &b).unwrap();
            let dba = distance(metric, &b, &a).unwrap();
            let dac = distance(metric, &a, &c).unwrap();
            let dcb = distance(metric, &c, &b).unwrap();
            prop_assert!(dab >= 0.0);
            prop_assert!((dab - dba).abs() < 1e-15);
            prop_assert!(distance(metric, &a, &a).unwrap() == 0.0);
            prop_assert!(dab <= dac + dcb + 1e-12);
        }
        let d1 = distance(Metric::Interval1D, &a[..1], &b[..1]).unwrap();
        prop_assert!((d1 - (a[0] - b[0]).abs()).abs() < 1e-15);
    }

    #[test]
    fn radius_grid_strictly_decreasing(r_max in 0.01f64..1.0, ratio in 0.3f64..0.95, count in 2usize..20) {
        let grid = RadiusGrid::new(r_max, ratio, count).unwrap();
        let v = grid.values();
        prop_assert_eq!(v.len(), count);
        prop_assert!(v.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn suveges_always_clamped(indices in prop::collection::btree_set(0u64..5000, 2..60)) {
        let indices: Vec<u64> = indices.into_iter().collect();
        let record = ExceedanceRecord {
            threshold: 0.0,
            values: vec![1.0; indices.len()],
            indices,
            series_len: 5000,
            quantile: None,
        };
        let (theta, _) = suveges_theta(&record).unwrap();
        prop_assert!((0.0..=1.0).contains(&theta));
    }

    #[test]
    fn legendre_geometry_random_ifs(w1 in 0.05f64..1.0, w2 in 0.05f64..1.0, w3 in 0.05f64..1.0) {
        let total = w1 + w2 + w3;
        let p = [w1 / total, w2 / total, w3 / total];
        let tau = TauSource::IfsTernary { p };
        let d1 = tau.d1().unwrap();

        // Q and Qhat vanish at the information dimension.
        for kind in [TransformKind::Q, TransformKind::QHat] {
            let curve = legendre(kind, &tau, &[d1]).unwrap();
            prop_assert!(curve.value[0].abs() < 1e-6, "{kind:?}({d1}) = {}", curve.value[0]);
        }
        // f touches the diagonal at the information dimension.
        let f = legendre(TransformKind::FAlpha, &tau, &[d1]).unwrap();
        prop_assert!((f.value[0] - d1).abs() < 1e-6);

        // Convexity and non-negativity of Q on a window around d1.
        let s: Vec<f64> = (0..41).map(|i| d1 - 0.1 + 0.005 * i as f64).collect();
        let q_curve = legendre(TransformKind::Q, &tau, &s).unwrap();
        for i in 0..s.len() {
            if !q_curve.censored[i] {
                prop_assert!(q_curve.value[i] > -1e-9);
            }
        }
        for i in 1..s.len() - 1 {
            if q_curve.censored[i - 1] || q_curve.censored[i] || q_curve.censored[i + 1] {
                continue;
            }
            let second = q_curve.value[i + 1] - 2.0 * q_curve.value[i] + q_curve.value[i - 1];
            prop_assert!(second > -1e-8);
        }
    }

    #[test]
    fn dq_permutation_invariant(seed in 0u64..1000, q in -4.0f64..6.0) {
        prop_assume!((q - 1.0).abs() > 1e-6);
        let mut rng = multifrac_core::SplitMix64::new(seed);
        let n = 64;
        let d1r: Vec<f64> = (0..n).map(|_| 0.8 + rng.next_f64()).collect();
        let r_cut: Vec<f64> = (0..n).map(|_| 0.004 + 0.01 * rng.next_f64()).collect();
        let sample = LocalDimSample {
            centers: vec![vec![0.0]; n],
            d1r: d1r.clone(),
            r_cut: r_cut.clone(),
            n_exceedances: vec![100; n],
            p: None,
        };
        let mut rev = sample.clone();
        rev.d1r.reverse();
        rev.r_cut.reverse();
        let (a, _) = dq_from_local_dims(&sample, q).unwrap();
        let (b, _) = dq_from_local_dims(&rev, q).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        // Power-mean bracketing by the extreme local dimensions.
        let lo = d1r.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d1r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a >= lo - 1e-9 && a <= hi + 1e-9);
    }

    #[test]
    fn trajectory_csv_round_trip(seed in 0u64..10_000, len in 1usize..40) {
        let mut rng = multifrac_core::SplitMix64::new(seed);
        let data: Vec<f64> = (0..len * 3).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let traj = Trajectory::from_states(data, 3, "prop").unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(traj.raw(), back.raw());
    }
}

// Table monotonicity uses real trajectories; plain tests with a few fixed
// seeds keep the runtime sensible.

#[test]
fn gamma_monotone_in_q_and_r() {
    let spec = SystemSpec::three_x_mod1();
    let targets = Trajectory::generate(&spec, 71, 100, 300).unwrap();
    let sample = Trajectory::generate(&spec, 72, 100, 20_000).unwrap();
    let grid = RadiusGrid::spanning(0.2, 0.02, 6).unwrap();
    let q_list = [-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0];
    let table = correlation_integral(&targets, &sample, &grid, &q_list).unwrap();

    // Non-increasing in q at fixed r (integrand mu^(q-1) with mu <= 1),
    // on cells with no dropped targets.
    for ri in 0..6 {
        for qi in 1..q_list.len() {
            if table.dropped(qi - 1, ri) > 0 || table.dropped(qi, ri) > 0 {
                continue;
            }
            assert!(
                table.log_value(qi, ri) <= table.log_value(qi - 1, ri) + 1e-12,
                "Gamma not monotone in q at r index {ri}"
            );
        }
    }
    // Monotone in r at fixed q: ball measures grow with r, so mu^(q-1)
    // grows for q > 1 and shrinks for q < 1. Radii are stored descending.
    for (qi, &q) in q_list.iter().enumerate() {
        for ri in 1..6 {
            if table.dropped(qi, ri - 1) > 0 || table.dropped(qi, ri) > 0 {
                continue;
            }
            let larger_r = table.log_value(qi, ri - 1);
            let smaller_r = table.log_value(qi, ri);
            if q > 1.0 {
                assert!(smaller_r <= larger_r + 1e-12, "q={q} ri={ri}");
            } else if q < 1.0 {
                assert!(smaller_r >= larger_r - 1e-12, "q={q} ri={ri}");
            }
        }
    }
}

#[test]
fn upsilon_monotone_in_q() {
    let spec = SystemSpec::three_x_mod1();
    let targets = Trajectory::generate(&spec, 81, 100, 200).unwrap();
    let sample = Trajectory::generate(&spec, 82, 100, 50_000).unwrap();
    let grid = RadiusGrid::spanning(0.1, 0.02, 5).unwrap();
    let q_list = [-1.0, 0.0, 1.0, 2.0, 4.0];
    let table = hitting_integral(&targets, &sample, &grid, &q_list, 16).unwrap();
    // H >= 1, so H^(1-q) is non-increasing in q pointwise; drops are
    // q-independent, so whole columns compare.
    for ri in 0..5 {
        for qi in 1..q_list.len() {
            assert!(
                table.log_value(qi, ri) <= table.log_value(qi - 1, ri) + 1e-12,
                "Upsilon not monotone in q at r index {ri}"
            );
        }
    }
}

#[test]
fn tail_monotone_and_bounded() {
    let spec = SystemSpec::arnold_cat();
    let a = Trajectory::generate(&spec, 5, 100, 30_000).unwrap();
    let b = Trajectory::generate(&spec, 6, 100, 30_000).unwrap();
    let grid = UGrid::new(-1.0, 9.0, 101).unwrap();
    let tail = exceedance_tail(&[&a, &b], &grid).unwrap();
    assert!(tail.fbar.iter().all(|&f| (0.0..=1.0).contains(&f)));
    assert!(tail.fbar.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(tail.total, 30_000);
}

#[test]
fn phase_box_holds_for_a_million_iterates() {
    for spec in [
        SystemSpec::arnold_cat(),
        SystemSpec::henon_standard(),
        SystemSpec::sierpinski_standard(),
        SystemSpec::lorenz_standard(0.013).unwrap(),
        SystemSpec::three_x_mod1(),
        SystemSpec::gauss_map(),
        SystemSpec::hemmer(),
        SystemSpec::markov_pl(),
    ] {
        let t = Trajectory::generate(&spec, 17, 1000, 1_000_000).unwrap();
        assert!(
            t.states().all(|s| spec.in_phase_box(s)),
            "{} left its phase box",
            spec.kind()
        );
    }
}

/// Empirical occupation of a fixed box converges to its invariant measure
/// within three binomial standard errors.
fn occupation_check(traj: &Trajectory, inside: impl Fn(&[f64]) -> bool, expect: f64) {
    let hits = traj.states().filter(|s| inside(s)).count();
    let n = traj.len() as f64;
    let freq = hits as f64 / n;
    let se = (expect * (1.0 - expect) / n).sqrt();
    assert!(
        (freq - expect).abs() < 3.0 * se.max(5e-4),
        "occupation {freq:.5} vs {expect:.5} (se {se:.5})"
    );
}

#[test]
fn uniform_occupation_three_x_and_cat() {
    let traj = Trajectory::generate(&SystemSpec::three_x_mod1(), 23, 1000, 1_000_000).unwrap();
    occupation_check(&traj, |s| s[0] >= 0.35 && s[0] < 0.45, 0.1);

    let traj = Trajectory::generate(&SystemSpec::arnold_cat(), 29, 1000, 1_000_000).unwrap();
    occupation_check(
        &traj,
        |s| s[0] >= 0.2 && s[0] < 0.3 && s[1] >= 0.6 && s[1] < 0.7,
        0.01,
    );
}

#[test]
fn markov_pl_occupation_matches_piecewise_density() {
    // Integrating the invariant density over thirds gives (1/5, 2/5, 2/5).
    let traj = Trajectory::generate(&SystemSpec::markov_pl(), 31, 1000, 1_000_000).unwrap();
    occupation_check(&traj, |s| s[0] < 1.0 / 3.0, 0.2);
    occupation_check(&traj, |s| (1.0 / 3.0..2.0 / 3.0).contains(&s[0]), 0.4);
    occupation_check(&traj, |s| s[0] >= 2.0 / 3.0, 0.4);
}

#[test]
fn free_energy_convex_for_analytic_sources() {
    let grid: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
    for tau in [
        TauSource::sierpinski_standard(),
        TauSource::IfsTernary { p: [0.1, 0.3, 0.6] },
        TauSource::Uniform { d: 1.7 },
    ] {
        let fe = multifrac_core::largedev::free_energy(&tau, &grid).unwrap();
        assert!(
            fe.convexity_violations(1e-6).is_empty(),
            "free energy not convex"
        );
    }
}
