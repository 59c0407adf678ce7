//! Hand-checkable input/output pairs for the graph, simulator and estimator APIs.

use approx::assert_relative_eq;
use hawkes_graph::graph::{self, InteractionGraph};
use hawkes_graph::simulator::expected_counts;
use hawkes_graph::supercritical::p_stat;
use hawkes_graph::{subcritical, EventLog, KernelSpec};

fn self_loop() -> InteractionGraph {
    InteractionGraph::from_rows(&[vec![1]], 1.0, 0).unwrap()
}

#[test]
fn ell_closed_forms() {
    for lambda in [0.1, 0.7, 3.0] {
        let ell = graph::compute_ell(&InteractionGraph::zeros(6), lambda).unwrap();
        assert!(ell.iter().all(|&l| l == 1.0));
    }
    let ell = graph::compute_ell(&InteractionGraph::ones(7), 0.5).unwrap();
    ell.iter().for_each(|&l| assert_relative_eq!(l, 2.0, epsilon = 1e-12));
    let ell = graph::compute_ell(&self_loop(), 0.25).unwrap();
    assert_relative_eq!(ell[0], 4.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn v_and_x_limits_on_extreme_graphs() {
    assert_relative_eq!(graph::v_infinity(&InteractionGraph::ones(8), 0.5, 4).unwrap(), 0.0, epsilon = 1e-12);
    assert_eq!(graph::v_infinity(&InteractionGraph::zeros(8), 0.5, 4).unwrap(), 0.0);

    let x = graph::x_infinity(&InteractionGraph::zeros(9), 0.8, 1.7, 9).unwrap();
    assert_relative_eq!(x.w_inf, 1.7, epsilon = 1e-12);
    assert_relative_eq!(x.x_inf, 1.7, epsilon = 1e-12);
    let x = graph::x_infinity(&InteractionGraph::ones(9), 0.5, 1.0, 9).unwrap();
    assert_relative_eq!(x.x_inf, 8.0, epsilon = 1e-10);
}

#[test]
fn perron_on_the_complete_graph() {
    let g = InteractionGraph::ones(12);
    let pd = graph::perron_data(&g, 0.3).unwrap();
    assert_relative_eq!(pd.rho, 1.0, epsilon = 1e-12);
    pd.v.iter().for_each(|&v| assert_relative_eq!(v, 1.0, epsilon = 1e-12));
    assert_relative_eq!(pd.alpha_n, 0.7, epsilon = 1e-12);
    let u = graph::u_infinity(&g, 0.3, 6).unwrap();
    assert_relative_eq!(u, 0.0, epsilon = 1e-12);
    assert_relative_eq!(p_stat(u), 1.0, epsilon = 1e-12);
}

#[test]
fn spectral_radius_concentrates() {
    let (n, p) = (1000usize, 0.5);
    let g = InteractionGraph::sample(n, p, 41).unwrap();
    let pd = graph::perron_data(&g, 0.1).unwrap();
    assert!((pd.rho - p).abs() <= p / (2.0 * (n as f64).powf(0.375)), "ρ = {}", pd.rho);
}

#[test]
fn row_sums_concentrate() {
    let g = InteractionGraph::sample(1000, 0.4, 17).unwrap();
    let mean = (0..1000).map(|i| g.row_sum(i) as f64).sum::<f64>() / 1000.0;
    assert!((370.0..=430.0).contains(&mean), "{mean}");
}

#[test]
fn expected_counts_examples() {
    let k = KernelSpec::exponential(2.0).unwrap();
    let flat = expected_counts(&InteractionGraph::zeros(4), &k, 1.5, 3.0, 4).unwrap();
    assert!(flat.iter().all(|&c| c == 4.5));
    let one = expected_counts(&self_loop(), &k, 1.0, 1.0, 1).unwrap();
    assert_relative_eq!(one[0], 2.0 - (1.0 - (-1.0f64).exp()), epsilon = 1e-8);
}

#[test]
fn stationary_slope_of_the_mean() {
    // Complete graph, Λ = 1/2: t⁻¹E[Z_t] → μ/(1 - Λ) = 2.
    let k = KernelSpec::exponential(2.0).unwrap();
    let g = InteractionGraph::ones(10);
    let a = expected_counts(&g, &k, 1.0, 199.0, 1).unwrap()[0];
    let b = expected_counts(&g, &k, 1.0, 201.0, 1).unwrap()[0];
    let slope = (b - a) / 2.0;
    assert!((slope - 2.0).abs() <= 0.02, "slope {slope}");
    let c = expected_counts(&g, &k, 1.0, 200.0, 1).unwrap()[0];
    assert!((c / 200.0 - 2.0).abs() <= 0.02, "E[Z]/t = {}", c / 200.0);
}

#[test]
fn empty_log_estimate() {
    let log = EventLog::empty(3, 40.0).unwrap();
    let est = subcritical::estimate(&log, 3, 16.0, 7.0, 0.1).unwrap();
    assert_eq!(est.p_hat, 0.0);
    assert_eq!(est.epsilon, 0.0);
    assert!(est.ci.halfwidth.is_none());
    assert!(est.ci.paper_literal.is_none());
}

#[test]
fn classifier_matches_hand_evaluation() {
    // N = K = 100, t = 10⁴, q = 7: Δ = 10⁴ / (2·100) = 50.
    let d = subcritical::classify_regime(100, 100, 1e4, 7.0, 5.0).unwrap();
    assert_relative_eq!(d.rate_i, 0.1, epsilon = 1e-15);
    assert_relative_eq!(d.rate_ii, 1e-3, epsilon = 1e-15);
    assert_relative_eq!(d.rate_iii, (50.0f64 / 1e4).sqrt(), epsilon = 1e-15);
    assert_eq!(d.dominant, None);
    assert_relative_eq!(d.dominance, 0.1 / 0.005f64.sqrt(), epsilon = 1e-12);

    // N = K = 10⁴, t = 100, q = 7: Δ = 5.
    let d = subcritical::classify_regime(10_000, 10_000, 100.0, 7.0, 5.0).unwrap();
    assert_relative_eq!(d.rate_i, 0.01, epsilon = 1e-15);
    assert_relative_eq!(d.rate_ii, 1.0, epsilon = 1e-12);
    assert_relative_eq!(d.rate_iii, 0.05f64.sqrt(), epsilon = 1e-15);
    assert_eq!(d.dominant, None);

    // Dominance by exactly the factor counts; just under does not.
    let d = subcritical::classify_regime(400, 400, 400.0, 31.0, 5.0).unwrap();
    assert_eq!(d.dominant.is_some(), d.dominance >= 5.0);
}
