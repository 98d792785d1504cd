//! End-to-end checks of the estimation pipelines against closed-form
//! values: uniform torus/interval measures, the ternary-IFS dimension
//! formula, and the Lorenz attractor ballpark.

use multifrac_core::dynsys::{SystemSpec, Trajectory};
use multifrac_core::evt::{
    block_maxima_stream, dq_from_gev, exceedance_tail_streamed, fit_gev, local_dimension_pot,
    tau_from_tail, PotThreshold, UGrid,
};
use multifrac_core::largedev::{
    empirical_rate_hitting, legendre, prop2_window, HittingLdpProtocol, TauSource, TransformKind,
};
use multifrac_core::recurrence::{correlation_integral, first_return_integral, RadiusGrid};
use multifrac_core::scaling::{fit_tau, information_dimension};

#[test]
fn cat_tail_q8_slope() {
    // On the uniform torus the product tail decays like exp(-2 (q-1) u):
    // slope -14 at q = 8.
    let spec = SystemSpec::arnold_cat();
    let grid = UGrid::new(0.3, 2.0, 69).unwrap();
    let tail = exceedance_tail_streamed(&spec, 8, 2_000_000, 8, 88, 1000, &grid).unwrap();
    let u_hi = tail
        .u
        .iter()
        .zip(&tail.counts)
        .rev()
        .find(|(_, &c)| c >= 200)
        .map(|(&u, _)| u)
        .unwrap();
    let (tau, _) = tau_from_tail(&tail, (0.8, u_hi)).unwrap();
    assert!(
        (tau - 14.0).abs() / 14.0 < 0.05,
        "q=8 tail slope {tau} (expect 14)"
    );
}

#[test]
fn cat_return_time_integral_consistent_at_negative_q() {
    // The first-return integral sees the same scaling exponent as the
    // correlation integral; on the cat map the dimension-scale slope is 2.
    let spec = SystemSpec::arnold_cat();
    let traj = Trajectory::generate(&spec, 19, 1000, 2_000_000).unwrap();
    let grid = RadiusGrid::spanning(0.1, 0.02, 6).unwrap();
    let table = first_return_integral(&traj, &grid, &[-1.0], 4000).unwrap();
    let (tau, se) = fit_tau(&table, -1.0, None).unwrap();
    let dim = tau / (-1.0 - 1.0);
    assert!(
        (dim - 2.0).abs() < (3.0 * se / 2.0).max(0.2),
        "return-time dimension {dim} +- {se}"
    );
}

#[test]
fn sierpinski_correlation_tau2() {
    // tau(2) = -log2(3/8) ~ 1.415 for the standard IFS weights.
    let spec = SystemSpec::sierpinski_standard();
    let targets = Trajectory::generate(&spec, 41, 1000, 1500).unwrap();
    let sample = Trajectory::generate(&spec, 42, 1000, 400_000).unwrap();
    let grid = RadiusGrid::spanning(0.125, 0.0078125, 9).unwrap();
    let table = correlation_integral(&targets, &sample, &grid, &[2.0]).unwrap();
    let (tau, _) = fit_tau(&table, 2.0, None).unwrap();
    let expect = -(3.0f64 / 8.0).log2();
    assert!((tau - expect).abs() < 0.05, "tau(2) = {tau} vs {expect}");
}

#[test]
fn sierpinski_information_dimension() {
    // q -> 1 limit of the IFS dimension formula: -sum p_i log2 p_i = 1.5.
    let spec = SystemSpec::sierpinski_standard();
    let targets = Trajectory::generate(&spec, 51, 1000, 1500).unwrap();
    let sample = Trajectory::generate(&spec, 52, 1000, 400_000).unwrap();
    let grid = RadiusGrid::spanning(0.125, 0.0078125, 9).unwrap();
    let (d1, _, _) = information_dimension(&targets, &sample, &grid).unwrap();
    assert!((d1 - 1.5).abs() < 0.05, "D1 = {d1}");
}

#[test]
fn sierpinski_vertex_local_dimension() {
    // At the fixed point of the heaviest contraction (the origin, weight
    // 1/2, contraction 1/2) the local dimension is log(1/p3)/log 2 = 1.
    let spec = SystemSpec::sierpinski_standard();
    let series = Trajectory::generate(&spec, 61, 1000, 400_000).unwrap();
    let est =
        local_dimension_pot(&series, &[0.0, 0.0], PotThreshold::Quantile(0.98), 50).unwrap();
    assert!(
        (est.d1r - 1.0).abs() / 1.0 < 0.15,
        "vertex local dimension {}",
        est.d1r
    );
}

#[test]
fn lorenz_blockmax_d2_ballpark() {
    // Euler-integrated Lorenz 1963 at dt = 0.013: the correlation
    // dimension from the block-maxima route lands near 2.
    let spec = SystemSpec::lorenz_standard(0.013).unwrap();
    let maxima = block_maxima_stream(&spec, 2, 2_500_000, 8, 10_000, 71, 1000).unwrap();
    let fit = fit_gev(&maxima).unwrap();
    let d = dq_from_gev(&fit, 2.0, 10_000).unwrap();
    assert!((d.dq - 2.0).abs() <= 0.1, "lorenz D2 = {}", d.dq);
}

#[test]
fn sierpinski_hitting_ldp_approaches_legendre_from_above() {
    // The empirical rate of log H / (-log r) converges to the Legendre
    // Qhat only as r -> 0: at accessible radii the waiting-time
    // fluctuation around Kac's mean adds a positive bias of order
    // 1/|log r|. The invariant checked here is the approach itself:
    // at interior deviations the empirical rate stays above the Legendre
    // curve and decreases toward it as the radius refines.
    let spec = SystemSpec::sierpinski_standard();
    let tau = TauSource::sierpinski_standard();
    let d1 = 1.5;
    let protocol = HittingLdpProtocol {
        orbit_len: 1 << 20,
        n_targets: 512,
        draws_per_target: 64,
        burn_in: 1000,
    };
    let s_interior = [0.1, 0.2, 0.3];
    let axis: Vec<f64> = s_interior.iter().map(|s| d1 + s).collect();
    let reference = legendre(TransformKind::QHat, &tau, &axis).unwrap();
    let (lo, hi) = prop2_window(&tau, d1).unwrap();
    for &s in &s_interior {
        assert!(s > lo && s < hi, "s = {s} outside the validity window");
    }
    let mut previous: Option<Vec<f64>> = None;
    for r_exp in [7, 8, 9] {
        let r = 2.0f64.powi(-r_exp);
        let curve = empirical_rate_hitting(&spec, r, &s_interior, d1, &protocol, 81).unwrap();
        for i in 0..s_interior.len() {
            assert!(!curve.censored[i], "censored at s = {}", s_interior[i]);
            assert!(
                curve.value[i] > reference.value[i],
                "empirical rate below the Legendre limit at s = {}",
                s_interior[i]
            );
            if let Some(prev) = &previous {
                assert!(
                    curve.value[i] < prev[i],
                    "no approach at s = {}: {} then {}",
                    s_interior[i],
                    prev[i],
                    curve.value[i]
                );
            }
        }
        previous = Some(curve.value.clone());
    }
}
