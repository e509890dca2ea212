//! Degree-distribution design.
//!
//! The asymptotic design maximizes the decodable-fraction parameter `theta`
//! subject to `Omega(x) + theta * ln(1-x) >= 0` on a grid over `[0, 1-eta]`;
//! the finite-length heuristic subtracts a tunable `(c/K)(1-x)^{c'}` term
//! from the logarithm. Both are linear in `(Psi, theta)` and are solved with
//! the dense simplex. Candidate distributions are then scored end to end
//! through the exact BP and inactivation analyses.

use thiserror::Error;

use crate::bp;
use crate::combin::LogFactorials;
use crate::inact;
use crate::model::{DegreeDistribution, Model, ModelError, Solvability};
use crate::scalar::{KahanSum, Scalar};
use crate::simplex::{self, Constraint, LpProblem, LpSolution, Relation};

#[derive(Debug, Error)]
pub enum OptError {
    #[error(transparent)]
    Simplex(#[from] simplex::SimplexError),
    #[error("design LP reported {0}")]
    NotOptimal(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Configuration of the design LP.
#[derive(Clone, Debug)]
pub struct OptConfig<S: Scalar> {
    /// Recovery-gap fraction in (0, 1): the design targets decoding a
    /// `1 - eta` fraction of the input symbols.
    pub eta: S,
    /// Number of grid points on `[0, 1-eta]`; at least 64.
    pub grid_points: usize,
    /// Heuristic strength `c >= 0`; zero recovers the asymptotic design.
    pub c_heur: S,
    /// Heuristic exponent `c' >= 0`.
    pub cp_heur: S,
    /// Maximum degree; defaults to `ceil(M/eta) - 1`.
    pub max_degree: Option<usize>,
}

impl<S: Scalar> OptConfig<S> {
    pub fn new(eta: S) -> Self {
        assert!(eta > S::zero() && eta < S::one());
        Self {
            eta,
            grid_points: 512,
            c_heur: S::zero(),
            cp_heur: S::zero(),
            max_degree: None,
        }
    }

    pub fn with_heuristic(mut self, c: S, cp: S) -> Self {
        self.c_heur = c;
        self.cp_heur = cp;
        self
    }

    pub fn with_grid_points(mut self, points: usize) -> Self {
        self.grid_points = points;
        self
    }

    fn effective_max_degree(&self, m: usize) -> usize {
        self.max_degree.unwrap_or_else(|| {
            let d = (S::from_count(m) / self.eta).ceil();
            d.to_usize().expect("degree bound overflow").max(2) - 1
        })
    }
}

/// Result of a design LP.
#[derive(Clone, Debug)]
pub struct OptResult<S: Scalar> {
    pub theta: S,
    pub psi: DegreeDistribution<S>,
    /// Grid abscissas where the design constraint is (numerically) tight.
    pub active_constraints: Vec<S>,
    pub feasible: bool,
    /// Largest constraint violation on the 10x finer verification grid.
    pub max_violation: S,
    /// Grid size of the final solve (grows if refinement was needed).
    pub grid_points: usize,
}

/// Regularized incomplete beta function for integer parameters, evaluated as
/// the binomial tail sum `sum_{j=a}^{a+b-1} C(a+b-1, j) x^j (1-x)^(a+b-1-j)`.
pub fn incomplete_beta<S: Scalar>(a: usize, b: usize, x: S) -> S {
    assert!(a >= 1 && b >= 1);
    if x <= S::zero() {
        return S::zero();
    }
    if x >= S::one() {
        return S::one();
    }
    let n = a + b - 1;
    let lf = LogFactorials::new(n);
    let mut acc = KahanSum::new();
    for j in a..=n {
        acc.add(lf.binom_pmf(n, j, x));
    }
    acc.value()
}

/// Per-degree coefficients of the expected ripple-release function: `Omega(x)
/// = sum_d Psi_d * coeff[d-1]`.
///
/// For degree `d` the coefficient is `d * [sum_{r=1}^{min(M,d-1)} hbar_r *
/// I_{d-r,r}(x)] + d * hbar'_d` (the last term only for `d <= M`). The beta
/// tails for consecutive `r` share binomial terms, so they are accumulated as
/// suffix sums of one binomial row per degree.
pub fn omega_coefficients<S: Scalar>(
    solv: &Solvability<S>,
    d_max: usize,
    x: S,
    lf: &LogFactorials<S>,
) -> Vec<S> {
    let m = solv.batch_size();
    let mut coeffs = vec![S::zero(); d_max];
    for d in 1..=d_max {
        let mut acc = S::zero();
        let r_hi = m.min(d - 1);
        if r_hi >= 1 && x > S::zero() {
            // binomial terms T_j = C(d-1, j) x^j (1-x)^{d-1-j}, j = d-r_hi..d-1;
            // I_{d-r,r}(x) is the suffix sum starting at j = d - r.
            let mut suffix = S::zero();
            let mut tails = vec![S::zero(); r_hi + 1];
            for r in 1..=r_hi {
                let j = d - r;
                suffix += lf.binom_pmf(d - 1, j, x);
                tails[r] = suffix;
            }
            for r in 1..=r_hi {
                acc += solv.hbar(r) * tails[r];
            }
        }
        if d <= m {
            acc += solv.hbar_prime(d);
        }
        coeffs[d - 1] = S::from_count(d) * acc;
    }
    coeffs
}

/// Expected ripple-release function `Omega(x)` for a given degree law.
pub fn omega<S: Scalar>(solv: &Solvability<S>, psi: &DegreeDistribution<S>, x: S) -> S {
    let d_max = psi.max_degree();
    let lf = LogFactorials::new(d_max.max(1));
    let coeffs = omega_coefficients(solv, d_max, x, &lf);
    psi.probs()
        .iter()
        .zip(coeffs.iter())
        .map(|(&p, &c)| p * c)
        .sum()
}

fn grid<S: Scalar>(eta: S, points: usize) -> Vec<S> {
    // Chebyshev-like spacing clustered toward 1 - eta, where the ln(1-x)
    // constraint curvature concentrates. Includes both endpoints.
    let top = S::one() - eta;
    let half_pi = S::from_f(std::f64::consts::FRAC_PI_2);
    (0..points)
        .map(|j| {
            let s = S::from_count(j) / S::from_count(points - 1);
            top * (half_pi * s).sin()
        })
        .collect()
}

fn penalty<S: Scalar>(x: S, c: S, cp: S, k: S) -> S {
    if c <= S::zero() {
        (S::one() - x).ln()
    } else {
        (S::one() - x).ln() - c / k * (S::one() - x).powf(cp)
    }
}

fn solve_design<S: Scalar>(
    solv: &Solvability<S>,
    cfg: &OptConfig<S>,
    block_len: Option<usize>,
) -> Result<OptResult<S>, OptError> {
    let m = solv.batch_size();
    let d_max = cfg.effective_max_degree(m);
    let lf = LogFactorials::new(d_max.max(1));
    let theta_cap = S::from_f(2.0) * solv.expected_rank() / (S::one() - cfg.eta);
    let kf = block_len.map(|k| S::from_count(k)).unwrap_or_else(S::one);
    let c = if block_len.is_some() {
        cfg.c_heur
    } else {
        S::zero()
    };

    let points = cfg.grid_points.max(64);
    let mut xs = grid(cfg.eta, points);
    let fine = grid(cfg.eta, points * 10);
    let mut rounds = 0;
    loop {
        let mut constraints = Vec::with_capacity(xs.len() + 2);
        let mut row_x = Vec::with_capacity(xs.len());
        for &x in &xs {
            let g = penalty(x, c, cfg.cp_heur, kf);
            if g == S::zero() {
                // at x = 0 the asymptotic constraint reduces to
                // Omega(0) >= 0, which holds for any non-negative Psi
                continue;
            }
            let mut coeffs = omega_coefficients(solv, d_max, x, &lf);
            coeffs.push(g);
            constraints.push(Constraint::new(coeffs, Relation::Ge, S::zero()));
            row_x.push(x);
        }
        let mut ones = vec![S::one(); d_max];
        ones.push(S::zero());
        constraints.push(Constraint::new(ones, Relation::Eq, S::one()));
        let mut cap_row = vec![S::zero(); d_max];
        cap_row.push(S::one());
        constraints.push(Constraint::new(cap_row, Relation::Le, theta_cap));

        let mut objective = vec![S::zero(); d_max];
        objective.push(S::one());
        let lp = LpProblem {
            objective,
            constraints,
        };
        let (x_opt, theta) = match simplex::solve(&lp)? {
            LpSolution::Optimal { x, value } => (x, value),
            LpSolution::Infeasible => return Err(OptError::NotOptimal("infeasible")),
            LpSolution::Unbounded => return Err(OptError::NotOptimal("unbounded")),
        };

        // sparsify and renormalize the returned distribution
        let mut psi_raw: Vec<S> = x_opt[..d_max].to_vec();
        let cutoff = S::from_f(1e-9);
        for v in psi_raw.iter_mut() {
            if *v < cutoff {
                *v = S::zero();
            }
        }
        let total: S = psi_raw.iter().copied().sum();
        for v in psi_raw.iter_mut() {
            *v /= total;
        }
        let psi = DegreeDistribution::new(psi_raw, true)?;

        // active constraints on the optimization grid
        let tight = S::from_f(1e-7);
        let mut active = Vec::new();
        for &x in &row_x {
            let val = omega(solv, &psi, x) + theta * penalty(x, c, cfg.cp_heur, kf);
            if val.abs() <= tight {
                active.push(x);
            }
        }

        // verification on a 10x finer grid; the worst violated abscissas
        // become cutting planes for the next round
        let tol = S::from_f(1e-6);
        let mut max_violation = S::zero();
        let mut cuts: Vec<(S, S)> = Vec::new();
        for &x in &fine {
            let val = omega(solv, &psi, x) + theta * penalty(x, c, cfg.cp_heur, kf);
            if -val > max_violation {
                max_violation = -val;
            }
            if -val > tol / S::from_f(10.0) {
                cuts.push((-val, x));
            }
        }
        if max_violation <= tol || rounds >= 3 {
            return Ok(OptResult {
                theta,
                psi,
                active_constraints: active,
                feasible: max_violation <= tol,
                max_violation,
                grid_points: xs.len(),
            });
        }
        cuts.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("violations are finite"));
        cuts.truncate(256);
        xs.extend(cuts.into_iter().map(|(_, x)| x));
        xs.sort_by(|a, b| a.partial_cmp(b).expect("grid points are finite"));
        xs.dedup();
        rounds += 1;
    }
}

/// Solves the asymptotic design LP.
pub fn optimize_asymptotic<S: Scalar>(
    solv: &Solvability<S>,
    cfg: &OptConfig<S>,
) -> Result<OptResult<S>, OptError> {
    solve_design(solv, cfg, None)
}

/// Solves the finite-length heuristic LP for block length `k`.
pub fn optimize_heuristic<S: Scalar>(
    solv: &Solvability<S>,
    cfg: &OptConfig<S>,
    k: usize,
) -> Result<OptResult<S>, OptError> {
    solve_design(solv, cfg, Some(k))
}

/// Scores a candidate degree law by exact BP error probability.
pub fn evaluate_bp_error<S: Scalar>(
    base: &Model<S>,
    psi: &DegreeDistribution<S>,
    n: usize,
    kprime: usize,
) -> S {
    let model = base.with_degree(psi.clone());
    bp::bp_error_probability(&model, n, kprime)
}

/// Scores a candidate degree law by expected inactivation count.
pub fn evaluate_expected_inactivations<S: Scalar>(
    base: &Model<S>,
    psi: &DegreeDistribution<S>,
    n: usize,
) -> S {
    let model = base.with_degree(psi.clone());
    inact::expected_inactivations_fixed(&model, n).expected
}

/// Design rate, capacity and relative overhead.
#[derive(Clone, Copy, Debug)]
pub struct DesignMetrics<S: Scalar> {
    pub rate: S,
    pub capacity: S,
    pub overhead: S,
}

/// Computes the design rate `(1-eta) K / (n M)`, the capacity
/// `sum_i i hbar_i / M` and the relative overhead `capacity/rate - 1`.
pub fn design_metrics<S: Scalar>(
    solv: &Solvability<S>,
    k: usize,
    n: usize,
    eta: S,
) -> DesignMetrics<S> {
    assert!(n >= 1);
    let m = solv.batch_size();
    let rate = (S::one() - eta) * S::from_count(k) / (S::from_count(n) * S::from_count(m));
    let capacity = solv.capacity();
    DesignMetrics {
        rate,
        capacity,
        overhead: capacity / rate - S::one(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{solvability_from_rank, CodeParams, RankDistribution};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solv(m: usize, q: u64, h: Vec<f64>) -> Solvability<f64> {
        let params = CodeParams::new(100, m, q, 10, false).unwrap();
        solvability_from_rank(&RankDistribution::new(h, true).unwrap(), &params).unwrap()
    }

    #[test]
    fn incomplete_beta_spot_values() {
        assert_eq!(incomplete_beta::<f64>(2, 3, 0.0), 0.0);
        assert_eq!(incomplete_beta::<f64>(2, 3, 1.0), 1.0);
        assert!((incomplete_beta::<f64>(1, 1, 0.3) - 0.3).abs() < 1e-15);
        // monotone in x
        let lo = incomplete_beta::<f64>(3, 4, 0.2);
        let hi = incomplete_beta::<f64>(3, 4, 0.4);
        assert!(lo < hi);
    }

    #[test]
    fn omega_at_zero_is_low_degree_release() {
        let s = solv(2, 4, vec![0.1, 0.4, 0.5]);
        let psi = DegreeDistribution::new(vec![0.3, 0.4, 0.2, 0.1], false).unwrap();
        let got = omega(&s, &psi, 0.0);
        let expect = s.hbar_prime(1) * 1.0 * 0.3 + s.hbar_prime(2) * 2.0 * 0.4;
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn omega_degree_one_point_mass_is_constant() {
        let s = solv(1, 2, vec![0.2, 0.8]);
        let psi = DegreeDistribution::new(vec![1.0], false).unwrap();
        for x in [0.0, 0.2, 0.5, 0.9] {
            let got = omega(&s, &psi, x);
            assert!((got - s.hbar_prime(1)).abs() < 1e-14, "x={x}");
        }
    }

    /// The coefficient form must agree with a direct evaluation of the
    /// double sum over (r, d); the two paths share nothing but the beta
    /// function definition.
    #[test]
    fn omega_coefficient_form_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..5 {
            let m = rng.gen_range(1..=4usize);
            let mut h: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>() + 0.02).collect();
            let tot: f64 = h.iter().sum();
            h.iter_mut().for_each(|v| *v /= tot);
            let s = solv(m, 16, h);
            let d_max = rng.gen_range(2..=8usize);
            let mut psi: Vec<f64> = (0..d_max).map(|_| rng.gen::<f64>() + 0.02).collect();
            let tot: f64 = psi.iter().sum();
            psi.iter_mut().for_each(|v| *v /= tot);
            let psi = DegreeDistribution::new(psi, true).unwrap();
            let x = rng.gen_range(0.0..0.98);
            let got = omega(&s, &psi, x);
            let mut direct = 0.0;
            for r in 1..=m {
                for d in (r + 1)..=d_max {
                    direct += d as f64 * psi.prob(d) * s.hbar(r) * incomplete_beta(d - r, r, x);
                }
            }
            for r in 1..=m.min(d_max) {
                direct += s.hbar_prime(r) * r as f64 * psi.prob(r);
            }
            assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
        }
    }

    #[test]
    fn asymptotic_design_respects_rank_bound() {
        let s = solv(2, 16, vec![0.1, 0.3, 0.6]);
        let cfg = OptConfig::new(0.04).with_grid_points(128);
        let res = optimize_asymptotic(&s, &cfg).unwrap();
        assert!(res.feasible);
        let bound = s.expected_rank();
        assert!(
            (1.0 - 0.04) * res.theta <= bound + 1e-6,
            "(1-eta)theta = {} exceeds {bound}",
            0.96 * res.theta
        );
        let total: f64 = res.psi.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(res.psi.probs().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn lossless_m1_design_bound() {
        let s = solv(1, 2, vec![0.0, 1.0]);
        let cfg = OptConfig::new(0.04).with_grid_points(128);
        let res = optimize_asymptotic(&s, &cfg).unwrap();
        assert!(res.theta <= 1.0 / 0.96 + 1e-6);
        assert!(res.feasible, "violation {:e}", res.max_violation);
        assert!(res.max_violation <= 1e-6);
    }

    #[test]
    fn heuristic_with_zero_c_matches_asymptotic() {
        let s = solv(2, 16, vec![0.05, 0.35, 0.6]);
        let cfg = OptConfig::new(0.1).with_grid_points(128);
        let asym = optimize_asymptotic(&s, &cfg).unwrap();
        let heur = optimize_heuristic(&s, &cfg, 64).unwrap();
        assert!(
            (asym.theta - heur.theta).abs() < 1e-8,
            "{} vs {}",
            asym.theta,
            heur.theta
        );
    }

    #[test]
    fn heuristic_tightens_the_design() {
        let s = solv(2, 16, vec![0.05, 0.35, 0.6]);
        let cfg = OptConfig::new(0.1).with_grid_points(128);
        let asym = optimize_asymptotic(&s, &cfg).unwrap();
        let heur = optimize_heuristic(&s, &cfg.clone().with_heuristic(10.0, 0.5), 64).unwrap();
        assert!(heur.theta <= asym.theta + 1e-9);
    }

    #[test]
    fn design_metrics_algebra() {
        let s = solv(4, 16, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
        // eta = 0 and n = K/M gives rate 1, overhead = capacity - 1
        let m = design_metrics(&s, 32, 8, 0.0);
        assert!((m.rate - 1.0).abs() < 1e-14);
        assert!((m.overhead - (m.capacity - 1.0)).abs() < 1e-14);
        assert!(m.capacity < 1.0);
    }
}
