//! Stopping-time analysis for a Poisson-distributed number of batches.
//!
//! Mixing the fixed-count recursion over a Poisson law collapses the batch
//! count out of the state: the ripple distribution evolves by the action of a
//! matrix exponential of the banded transition, which brings the cost down
//! from quadratic to linear in the block length.

use thiserror::Error;

use crate::bp::{BandedTransition, StepSchedule, StoppingTimeDistribution};
use crate::model::Model;
use crate::scalar::{KahanSum, Scalar};

#[derive(Debug, Error)]
pub enum ExpmvError {
    #[error("matrix exponential series did not converge within {0} terms")]
    NoConvergence(usize),
}

const MAX_TERMS: usize = 1_000_000;

/// Computes `v * exp(scale * Q)` for a non-negative banded `Q` by scaling and
/// truncated Taylor summation.
///
/// The operator is split into `m = ceil(|scale| * ||Q||)` pieces so each
/// piece has operator norm at most one, then each piece's series is summed
/// until the term's 1-norm drops below `tol` times the accumulated norm.
pub fn expmv<S: Scalar>(
    scale: S,
    q: &BandedTransition<S>,
    v: &[S],
    tol: S,
) -> Result<Vec<S>, ExpmvError> {
    assert!(scale >= S::zero(), "operator must be non-negative");
    assert!(tol > S::zero() && tol < S::one());
    let dim = q.dim();
    assert_eq!(v.len(), dim);
    let norm = scale * q.max_row_sum();
    if norm <= S::zero() {
        return Ok(v.to_vec());
    }
    let pieces = norm.ceil().to_usize().unwrap_or(1).max(1);
    let step_scale = scale / S::from_count(pieces);

    let mut w = v.to_vec();
    let mut term = vec![S::zero(); dim];
    let mut scratch = vec![S::zero(); dim];
    let mut terms_used = 0usize;
    for _ in 0..pieces {
        term.copy_from_slice(&w);
        let mut acc = w.clone();
        let mut i = 1usize;
        loop {
            q.apply_into(&term, &mut scratch);
            let factor = step_scale / S::from_count(i);
            for (t, &s) in term.iter_mut().zip(scratch.iter()) {
                *t = s * factor;
            }
            let mut term_norm = S::zero();
            for (a, &t) in acc.iter_mut().zip(term.iter()) {
                *a += t;
                term_norm += t.abs();
            }
            terms_used += 1;
            if terms_used > MAX_TERMS {
                return Err(ExpmvError::NoConvergence(MAX_TERMS));
            }
            let acc_norm: S = acc.iter().map(|x| x.abs()).sum();
            if term_norm <= tol * acc_norm {
                break;
            }
            i += 1;
        }
        w = acc;
    }
    Ok(w)
}

/// Ripple distribution at time `t`, marginalized over the Poisson batch count
/// and restricted to runs still alive.
#[derive(Clone, Debug)]
pub struct PoissonState<S: Scalar> {
    pub t: usize,
    pub lambda: Vec<S>,
}

impl<S: Scalar> PoissonState<S> {
    pub fn total_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for &v in &self.lambda {
            acc.add(v);
        }
        acc.value()
    }
}

/// Poisson-batch-count analysis engine.
pub struct PoissonEngine<S: Scalar> {
    schedule: StepSchedule<S>,
    k: usize,
    nbar: S,
    tol: S,
}

impl<S: Scalar> PoissonEngine<S> {
    pub fn new(model: &Model<S>, nbar: S, tol: S) -> Self {
        assert!(nbar >= S::zero());
        Self {
            schedule: StepSchedule::new(model),
            k: model.k(),
            nbar,
            tol,
        }
    }

    pub fn schedule(&self) -> &StepSchedule<S> {
        &self.schedule
    }

    /// Checks the operator-norm budget of the scaled transition at time `t`.
    ///
    /// For `t > 0` the scaled operator norm is bounded by `nbar * D / K`;
    /// violating it indicates a broken schedule, so it is asserted.
    fn checked_transition(&self, t: usize, d_max: usize) -> (S, BandedTransition<S>) {
        let sp = self.schedule.probabilities(t);
        let q = self.schedule.transition(t);
        let a = self.nbar * sp.total;
        if t > 0 {
            let bound = self.nbar * S::from_count(d_max) / S::from_count(self.k);
            let slack = S::from_f(1e-9) * (S::one() + bound);
            assert!(
                a * q.max_row_sum() <= bound + slack,
                "operator norm {} exceeds budget {} at t={}",
                a,
                bound,
                t
            );
        }
        (a, q)
    }

    /// Ripple distribution after time 0.
    pub fn initial(&self, d_max: usize) -> Result<PoissonState<S>, ExpmvError> {
        let (a, q) = self.checked_transition(0, d_max);
        let mut e1 = vec![S::zero(); self.k + 1];
        e1[0] = S::one();
        let lambda = if a <= S::zero() {
            e1
        } else {
            let w = expmv(a, &q, &e1, self.tol)?;
            let decay = (-a).exp();
            w.into_iter().map(|x| x * decay).collect()
        };
        Ok(PoissonState { t: 0, lambda })
    }

    /// One decoding step: drop the ripple-zero mass, then apply the scaled
    /// exponential of the banded transition.
    pub fn step(
        &self,
        state: &PoissonState<S>,
        d_max: usize,
    ) -> Result<PoissonState<S>, ExpmvError> {
        let t = state.t + 1;
        assert!(t <= self.k);
        let (a, q) = self.checked_transition(t, d_max);
        let dropped = &state.lambda[1..];
        let lambda = if a <= S::zero() {
            dropped.to_vec()
        } else {
            let w = expmv(a, &q, dropped, self.tol)?;
            let decay = (-a).exp();
            w.into_iter().map(|x| x * decay).collect()
        };
        Ok(PoissonState { t, lambda })
    }
}

/// Ripple distribution after time 0 for mean batch count `nbar`.
pub fn poisson_initial<S: Scalar>(
    model: &Model<S>,
    nbar: S,
    tol: S,
) -> Result<PoissonState<S>, ExpmvError> {
    PoissonEngine::new(model, nbar, tol).initial(model.max_degree())
}

/// One decoding step of the Poisson recursion.
pub fn poisson_step<S: Scalar>(
    model: &Model<S>,
    state: &PoissonState<S>,
    nbar: S,
    tol: S,
) -> Result<PoissonState<S>, ExpmvError> {
    PoissonEngine::new(model, nbar, tol).step(state, model.max_degree())
}

/// Stopping-time distribution under a Poisson number of batches.
///
/// Any residual mass left by the truncated exponentials is folded into the
/// final entry and reported through the flags.
pub fn poisson_stopping_time<S: Scalar>(
    model: &Model<S>,
    nbar: S,
    tol: S,
) -> Result<StoppingTimeDistribution<S>, ExpmvError> {
    let engine = PoissonEngine::new(model, nbar, tol);
    let d_max = model.max_degree();
    let k = model.k();
    let mut flags = engine.schedule.flags().to_vec();
    let mut pmf = vec![S::zero(); k + 1];
    let mut state = engine.initial(d_max)?;
    pmf[0] = state.lambda[0];
    for t in 1..=k {
        state = engine.step(&state, d_max)?;
        pmf[t] = state.lambda[0];
    }
    let mut acc = KahanSum::new();
    for &p in &pmf {
        acc.add(p);
    }
    let residual = S::one() - acc.value();
    pmf[k] += residual;
    if residual.abs() > S::from_f(1e-8) {
        flags.push(format!("poisson_tail_residual({:e})", residual));
    }
    Ok(StoppingTimeDistribution { pmf, flags })
}

/// Poisson p.m.f. values `0..=n_max` where `n_max` covers all but `tail_mass`.
pub fn poisson_weights<S: Scalar>(nbar: S, tail_mass: S) -> Vec<S> {
    let mut weights = Vec::new();
    let mut acc = KahanSum::new();
    let mut term = (-nbar).exp();
    let mut n = 0usize;
    loop {
        weights.push(term);
        acc.add(term);
        if S::one() - acc.value() <= tail_mass {
            break;
        }
        n += 1;
        term = term * nbar / S::from_count(n);
        if n > 100_000 {
            break;
        }
    }
    weights
}
