//! Expected inactivation count under inactivation decoding.
//!
//! Inactivation decoding never stops: whenever the ripple empties, one
//! undecoded symbol is marked inactive and treated as the single decodable
//! symbol for the next step. In the recursion that means the ripple-zero mass
//! is folded into ripple-one instead of being dropped, so total mass is
//! conserved at every step and the expected number of inactive symbols is the
//! accumulated ripple-zero probability over the first `K` steps.

use crate::bp::{BpEngine, JointState};
use crate::model::Model;
use crate::poisson::{ExpmvError, PoissonEngine, PoissonState};
use crate::scalar::{KahanSum, Scalar};

/// Result of an inactivation analysis.
#[derive(Clone, Debug)]
pub struct InactivationAnalysis<S: Scalar> {
    /// Expected number of inactivated symbols.
    pub expected: S,
    /// `Pr{ripple empty at time t}` for `t = 0..K`.
    pub per_step: Vec<S>,
    /// Largest deviation of the state mass from one seen at any step.
    pub max_mass_error: S,
    pub flags: Vec<String>,
}

fn fold_rows<S: Scalar>(state: &JointState<S>) -> Vec<Vec<S>> {
    state
        .rows
        .iter()
        .map(|row| {
            let mut folded = row[1..].to_vec();
            folded[0] += row[0];
            folded
        })
        .collect()
}

/// One fixed-count inactivation step: fold ripple zero into ripple one, then
/// advance through the same thinning and banded transition as plain BP.
pub fn inact_step_fixed<S: Scalar>(engine: &BpEngine<S>, state: &JointState<S>) -> JointState<S> {
    let folded = JointState {
        t: state.t,
        rows: fold_rows(state)
            .into_iter()
            .map(|mut row| {
                // reinsert a zero ripple-0 slot so the plain step can drop it;
                // the fold happens first, so nothing is lost
                let mut v = Vec::with_capacity(row.len() + 1);
                v.push(S::zero());
                v.append(&mut row);
                v
            })
            .collect(),
    };
    engine.step(&folded)
}

/// Expected inactivation count for `n` received batches.
pub fn expected_inactivations_fixed<S: Scalar>(
    model: &Model<S>,
    n: usize,
) -> InactivationAnalysis<S> {
    let engine = BpEngine::new(model);
    let k = model.k();
    let mut flags = engine.schedule().flags().to_vec();
    let mut per_step = Vec::with_capacity(k);
    let mut expected = KahanSum::new();
    let mut max_mass_error = S::zero();
    let mut state = engine.initial_state(n);
    for _ in 0..k {
        let mass_err = (state.total_mass() - S::one()).abs();
        if mass_err > max_mass_error {
            max_mass_error = mass_err;
        }
        let zero_mass = state.stopped_mass();
        per_step.push(zero_mass);
        expected.add(zero_mass);
        state = inact_step_fixed(&engine, &state);
    }
    let mass_err = (state.total_mass() - S::one()).abs();
    if mass_err > max_mass_error {
        max_mass_error = mass_err;
    }
    if max_mass_error > S::from_f(1e-9) {
        flags.push(format!("inactivation_mass_error({:e})", max_mass_error));
    }
    InactivationAnalysis {
        expected: expected.value(),
        per_step,
        max_mass_error,
        flags,
    }
}

/// One Poisson inactivation step.
pub fn inact_step_poisson<S: Scalar>(
    engine: &PoissonEngine<S>,
    state: &PoissonState<S>,
    d_max: usize,
) -> Result<PoissonState<S>, ExpmvError> {
    let mut folded = vec![S::zero(); state.lambda.len()];
    folded[1..].copy_from_slice(&state.lambda[1..]);
    folded[1] += state.lambda[0];
    engine.step(
        &PoissonState {
            t: state.t,
            lambda: folded,
        },
        d_max,
    )
}

/// Expected inactivation count for a Poisson batch count with mean `nbar`.
pub fn expected_inactivations_poisson<S: Scalar>(
    model: &Model<S>,
    nbar: S,
    tol: S,
) -> Result<InactivationAnalysis<S>, ExpmvError> {
    let engine = PoissonEngine::new(model, nbar, tol);
    let d_max = model.max_degree();
    let k = model.k();
    let mut flags = engine.schedule().flags().to_vec();
    let mut per_step = Vec::with_capacity(k);
    let mut expected = KahanSum::new();
    let mut max_mass_error = S::zero();
    let mut state = engine.initial(d_max)?;
    for _ in 0..k {
        let mass_err = (state.total_mass() - S::one()).abs();
        if mass_err > max_mass_error {
            max_mass_error = mass_err;
        }
        let zero_mass = state.lambda[0];
        per_step.push(zero_mass);
        expected.add(zero_mass);
        state = inact_step_poisson(&engine, &state, d_max)?;
    }
    let mass_err = (state.total_mass() - S::one()).abs();
    if mass_err > max_mass_error {
        max_mass_error = mass_err;
    }
    if max_mass_error > S::from_f(1e-8) {
        flags.push(format!("inactivation_mass_error({:e})", max_mass_error));
    }
    Ok(InactivationAnalysis {
        expected: expected.value(),
        per_step,
        max_mass_error,
        flags,
    })
}
