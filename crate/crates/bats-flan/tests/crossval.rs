//! Cross-module validation beyond the acceptance criteria: directional
//! properties of the Poisson model and Monte Carlo agreement for the LT
//! special case.

#![allow(clippy::needless_range_loop)]

use bats_flan::bp;
use bats_flan::inact;
use bats_flan::karp;
use bats_flan::model::{CodeParams, DegreeDistribution, Model, RankDistribution};
use bats_flan::poisson;
use bats_flan::sim::{self, BatchCount};

fn model(k: usize, m: usize, q: u64, psi: Vec<f64>, h: Vec<f64>, lt: bool) -> Model<f64> {
    let d = psi.len().min(k);
    let params = CodeParams::new(k, m, q, d, lt).unwrap();
    Model::new(
        params,
        RankDistribution::new(h, true).unwrap(),
        DegreeDistribution::new(psi, true).unwrap(),
    )
    .unwrap()
}

/// Batch-count randomness spreads the stopping law; as the mean grows the
/// Poisson law concentrates and its CDF approaches the fixed-count CDF.
#[test]
fn poisson_gap_shrinks_with_mean() {
    let m = model(
        64,
        4,
        256,
        vec![0.0, 0.5, 0.3, 0.1, 0.05, 0.03, 0.02],
        vec![0.0, 0.0, 0.05, 0.25, 0.7],
        false,
    );
    let mut gaps = Vec::new();
    for nbar in [8usize, 16, 32] {
        let fixed = bp::stopping_time(&m, nbar).cdf();
        let pois = poisson::poisson_stopping_time(&m, nbar as f64, 1e-10)
            .unwrap()
            .cdf();
        let sup = fixed
            .iter()
            .zip(pois.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        gaps.push(sup);
    }
    assert!(
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
        "sup-norm CDF gaps not decreasing: {gaps:?}"
    );
}

/// A Poisson batch count wastes some realizations on the under-supplied side,
/// so it needs more inactivations on average than the fixed count at the same
/// mean.
#[test]
fn poisson_inactivations_exceed_fixed_at_same_mean() {
    let m = model(
        64,
        4,
        256,
        vec![0.2, 0.2, 0.2, 0.2, 0.2],
        vec![0.005, 0.01, 0.05, 0.335, 0.6],
        false,
    );
    let n = 18;
    let fixed = inact::expected_inactivations_fixed(&m, n).expected;
    let pois = inact::expected_inactivations_poisson(&m, n as f64, 1e-10)
        .unwrap()
        .expected;
    assert!(
        pois >= fixed,
        "poisson expectation {pois} below fixed {fixed}"
    );
}

/// In the LT specialization the simulator is a plain peeling decoder; its
/// empirical stopping CDF must agree with both analytic routes.
#[test]
fn lt_mode_simulation_agrees_with_analytics() {
    let m = model(
        16,
        1,
        2,
        vec![0.15, 0.35, 0.25, 0.15, 0.10],
        vec![0.12, 0.88],
        true,
    );
    let n = 12;
    let trials = 40_000u64;
    let dist = bp::stopping_time(&m, n);
    let karp_pmf = karp::karp_stopping_time(&m, n).unwrap();
    for t in 0..=16 {
        assert!((dist.pmf[t] - karp_pmf[t]).abs() < 1e-9, "t={t}");
    }
    let report = sim::monte_carlo(&m, BatchCount::Fixed(n), trials, 7, false).unwrap();
    let analytic = dist.cdf();
    let empirical = report.empirical_stop_cdf();
    for t in 0..=16 {
        let band = sim::confidence_band(analytic[t], trials);
        assert!(
            (analytic[t] - empirical[t]).abs() <= band,
            "t={t}: {} vs {}",
            analytic[t],
            empirical[t]
        );
    }
}

/// Poisson-mode simulation against the Poisson recursion.
#[test]
fn poisson_mode_simulation_agrees_with_recursion() {
    let m = model(
        24,
        2,
        16,
        vec![0.1, 0.4, 0.2, 0.15, 0.1, 0.05],
        vec![0.05, 0.25, 0.7],
        false,
    );
    let nbar = 8.0;
    let trials = 40_000u64;
    let dist = poisson::poisson_stopping_time(&m, nbar, 1e-10).unwrap();
    let report = sim::monte_carlo(&m, BatchCount::Poisson(nbar), trials, 11, false).unwrap();
    let analytic = dist.cdf();
    let empirical = report.empirical_stop_cdf();
    for t in 0..=24 {
        let band = sim::confidence_band(analytic[t], trials);
        assert!(
            (analytic[t] - empirical[t]).abs() <= band,
            "t={t}: {} vs {}",
            analytic[t],
            empirical[t]
        );
    }
}

/// Inactivation-count histogram agreement on a small model, not just the
/// mean: every bin inside its own confidence band.
#[test]
fn inactivation_histogram_matches_per_step_probabilities() {
    let m = model(
        16,
        2,
        16,
        vec![0.2, 0.4, 0.2, 0.1, 0.1],
        vec![0.1, 0.3, 0.6],
        false,
    );
    let n = 6;
    let trials = 40_000u64;
    let analysis = inact::expected_inactivations_fixed(&m, n);
    let report = sim::monte_carlo(&m, BatchCount::Fixed(n), trials, 13, true).unwrap();
    let mean = report.mean_inactivations().unwrap();
    let hist = report.inact_hist.as_ref().unwrap();
    let var: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * (v as f64 - mean).powi(2))
        .sum::<f64>()
        / (trials as f64 - 1.0);
    let sigma_mean = (var / trials as f64).sqrt();
    assert!(
        (analysis.expected - mean).abs() <= 3.0 * sigma_mean,
        "analytic {} vs empirical {mean}",
        analysis.expected
    );
}
