//! Independent stopping-time oracle tracking per-degree decodable-batch
//! counts.
//!
//! Instead of the ripple size, this recursion follows the joint law of the
//! cloud size and the number of decodable batches of each degree, decoding a
//! symbol from a least-degree decodable batch at every step. The stopping law
//! must coincide with the ripple recursion — the decode order cannot change
//! when the decoder halts — which makes this an end-to-end cross-check. The
//! state space grows like `n^(M+1)`, so it is restricted to `M <= 2`.

use std::collections::HashMap;

use thiserror::Error;

use crate::bp::{StepProbabilities, StepSchedule};
use crate::combin::LogFactorials;
use crate::model::Model;
use crate::scalar::{KahanSum, Scalar};

#[derive(Debug, Error)]
pub enum KarpError {
    #[error("per-degree tracking is limited to M <= 2 (got {0})")]
    UnsupportedBatchSize(usize),
    #[error("per-degree tracking is limited to n <= 64 (got {0})")]
    TooManyBatches(usize),
    #[error("batch size M = 1 required for the polynomial recursion (got {0})")]
    PolynomialNeedsM1(usize),
}

/// Joint state key: cloud size and decodable-batch counts per degree.
/// `o[1]` is unused (zero) when `M = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KarpKey {
    pub c: u32,
    pub o: [u32; 2],
}

/// Sparse joint law over `(c, o)` restricted to runs still alive at `t`.
#[derive(Clone, Debug)]
pub struct KarpState<S: Scalar> {
    pub t: usize,
    pub table: HashMap<KarpKey, S>,
}

const PRUNE_TOL: f64 = 1e-16;

impl<S: Scalar> KarpState<S> {
    pub fn total_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for &v in self.table.values() {
            acc.add(v);
        }
        acc.value()
    }

    /// Mass on states with no decodable batch left.
    pub fn stopped_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for (k, &v) in &self.table {
            if k.o[0] == 0 && k.o[1] == 0 {
                acc.add(v);
            }
        }
        acc.value()
    }
}

fn check_dims<S: Scalar>(model: &Model<S>, n: usize) -> Result<usize, KarpError> {
    let m = model.batch_size();
    if m > 2 {
        return Err(KarpError::UnsupportedBatchSize(m));
    }
    if n > 64 {
        return Err(KarpError::TooManyBatches(n));
    }
    Ok(m)
}

fn degree_split_weight<S: Scalar>(
    sp: &StepProbabilities<S>,
    lf: &LogFactorials<S>,
    counts: &[usize],
) -> S {
    // multinomial weight for distributing the newly decodable batches over
    // degrees 0..=M with probabilities p_s / total
    let total: usize = counts.iter().sum();
    let mut w = lf.get(total);
    for (s, &b) in counts.iter().enumerate() {
        if b == 0 {
            continue;
        }
        let ps = sp.p[s] / sp.total;
        if ps <= S::zero() {
            return S::zero();
        }
        w = w - lf.get(b) + S::from_count(b) * ps.ln();
    }
    w.exp()
}

/// State after time 0: the decodable batches split multinomially over their
/// degrees.
pub fn karp_initial<S: Scalar>(model: &Model<S>, n: usize) -> Result<KarpState<S>, KarpError> {
    let m = check_dims(model, n)?;
    let schedule = StepSchedule::new(model);
    karp_initial_with(&schedule, m, n)
}

fn karp_initial_with<S: Scalar>(
    schedule: &StepSchedule<S>,
    m: usize,
    n: usize,
) -> Result<KarpState<S>, KarpError> {
    let sp = schedule.probabilities(0);
    let lf = LogFactorials::<S>::new(n.max(1));
    let mut table = HashMap::new();
    for c in 0..=n {
        let bc = lf.binom_pmf(n, c, S::one() - sp.rho);
        if bc <= S::zero() {
            continue;
        }
        let nc = n - c;
        if sp.total <= S::zero() {
            if nc == 0 {
                table.insert(
                    KarpKey {
                        c: c as u32,
                        o: [0, 0],
                    },
                    bc,
                );
            }
            continue;
        }
        for o1 in 0..=nc {
            let o2_hi = if m >= 2 { nc - o1 } else { 0 };
            for o2 in 0..=o2_hi {
                let o0 = nc - o1 - o2;
                let w = if m >= 2 {
                    degree_split_weight(sp, &lf, &[o0, o1, o2])
                } else {
                    degree_split_weight(sp, &lf, &[o0, o1])
                };
                if w <= S::zero() {
                    continue;
                }
                let mass = bc * w;
                if mass > S::from_f(PRUNE_TOL) {
                    table.insert(
                        KarpKey {
                            c: c as u32,
                            o: [o1 as u32, o2 as u32],
                        },
                        mass,
                    );
                }
            }
        }
    }
    Ok(KarpState { t: 0, table })
}

/// One decoding step: the decoded symbol comes from a least-degree decodable
/// batch (which drops one degree deterministically); every other decodable
/// degree-`s` batch independently keeps its degree unless the decoded symbol
/// was one of its `s` live contributors; cloud departures split multinomially
/// over their entry degrees.
///
/// States with no decodable batch must be removed (their mass is the stopping
/// p.m.f.) before stepping.
pub fn karp_step<S: Scalar>(
    model: &Model<S>,
    state: &KarpState<S>,
    n: usize,
) -> Result<KarpState<S>, KarpError> {
    let m = check_dims(model, n)?;
    let schedule = StepSchedule::new(model);
    karp_step_with(&schedule, m, model.k(), state, n)
}

fn karp_step_with<S: Scalar>(
    schedule: &StepSchedule<S>,
    m: usize,
    k: usize,
    state: &KarpState<S>,
    n: usize,
) -> Result<KarpState<S>, KarpError> {
    let t = state.t + 1;
    assert!(t <= k);
    let sp = schedule.probabilities(t);
    let lf = LogFactorials::<S>::new(n.max(1));
    let prune = S::from_f(PRUNE_TOL);
    // probability that a degree-s decodable batch keeps its degree this step
    let keep: Vec<S> = (0..=m)
        .map(|s| S::one() - S::from_count(s) / S::from_count(k - t + 1))
        .collect();

    let mut next: HashMap<KarpKey, S> = HashMap::new();
    for (key, &mass) in &state.table {
        let c_old = key.c as usize;
        let o_old = [key.o[0] as usize, key.o[1] as usize];
        let sum_o = o_old[0] + o_old[1];
        assert!(sum_o > 0, "stopped states must be drained before stepping");
        let smin = if o_old[0] > 0 { 1 } else { 2 };

        // stays[s]: decodable degree-s batches (excluding the consumed one)
        // that keep degree s
        let avail1 = o_old[0] - usize::from(smin == 1);
        let avail2 = if m >= 2 {
            o_old[1] - usize::from(smin == 2)
        } else {
            0
        };
        for stay1 in 0..=avail1 {
            let w1 = lf.binom_pmf(avail1, stay1, keep[1]);
            if w1 <= S::zero() {
                continue;
            }
            for stay2 in 0..=avail2 {
                let w2 = if m >= 2 {
                    lf.binom_pmf(avail2, stay2, keep[2])
                } else {
                    S::one()
                };
                if w2 <= S::zero() {
                    continue;
                }
                // cloud: l batches leave, split over degrees 0..=M
                for l in 0..=c_old {
                    let wc = lf.binom_pmf(c_old, c_old - l, S::one() - sp.rho);
                    if wc <= S::zero() {
                        continue;
                    }
                    let base = mass * w1 * w2 * wc;
                    if base <= prune {
                        continue;
                    }
                    let c_new = (c_old - l) as u32;
                    if sp.total <= S::zero() {
                        // no decodable entry fates exist; departures act as
                        // useless (degree-0) batches
                        let drops2 = o_old[1] - stay2;
                        let o_new = [(stay1 + drops2) as u32, stay2 as u32];
                        *next
                            .entry(KarpKey { c: c_new, o: o_new })
                            .or_insert_with(S::zero) += base;
                        continue;
                    }
                    for b1 in 0..=l {
                        let b2_hi = if m >= 2 { l - b1 } else { 0 };
                        for b2 in 0..=b2_hi {
                            let b0 = l - b1 - b2;
                            let wsplit = if m >= 2 {
                                degree_split_weight(sp, &lf, &[b0, b1, b2])
                            } else {
                                degree_split_weight(sp, &lf, &[b0, b1])
                            };
                            if wsplit <= S::zero() {
                                continue;
                            }
                            // degree-2 batches that lost a contributor drop
                            // to degree 1; the consumed batch drops one
                            // degree as well
                            let drops2 = if m >= 2 { o_old[1] - stay2 } else { 0 };
                            let o1_new = stay1 + b1 + drops2;
                            let o2_new = stay2 + b2;
                            let val = base * wsplit;
                            if val <= prune {
                                continue;
                            }
                            *next
                                .entry(KarpKey {
                                    c: c_new,
                                    o: [o1_new as u32, o2_new as u32],
                                })
                                .or_insert_with(S::zero) += val;
                        }
                    }
                }
            }
        }
    }
    next.retain(|_, v| *v > prune);
    Ok(KarpState { t, table: next })
}

/// Stopping-time p.m.f. from the per-degree recursion.
pub fn karp_stopping_time<S: Scalar>(model: &Model<S>, n: usize) -> Result<Vec<S>, KarpError> {
    let m = check_dims(model, n)?;
    let schedule = StepSchedule::new(model);
    let k = model.k();
    let mut pmf = vec![S::zero(); k + 1];
    let mut state = karp_initial_with(&schedule, m, n)?;
    for t in 0..=k {
        pmf[t] = state.stopped_mass();
        if t == k {
            break;
        }
        state.table.retain(|key, _| key.o[0] > 0 || key.o[1] > 0);
        state = karp_step_with(&schedule, m, k, &state, n)?;
    }
    // numerical pruning loses a sliver of mass; report it at t = K like the
    // main recursion's terminal collection
    let mut acc = KahanSum::new();
    for &p in &pmf {
        acc.add(p);
    }
    pmf[k] += S::one() - acc.value();
    Ok(pmf)
}

/// Dense coefficient table of the generating polynomial
/// `sum_{c,o} P_{c,o} x^o y^c` for `M = 1`.
#[derive(Clone, Debug)]
pub struct PolyState<S: Scalar> {
    pub t: usize,
    /// `coeffs[c][o]`
    pub coeffs: Vec<Vec<S>>,
}

impl<S: Scalar> PolyState<S> {
    /// Evaluating at `x = y = 1` gives the total mass.
    pub fn total_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for row in &self.coeffs {
            for &v in row {
                acc.add(v);
            }
        }
        acc.value()
    }

    pub fn stopped_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for row in &self.coeffs {
            acc.add(row[0]);
        }
        acc.value()
    }
}

/// Initial generating polynomial `[(1-rho) y + rho (p0/p + (p1/p) x)]^n`.
pub fn karp_polynomial_initial<S: Scalar>(
    model: &Model<S>,
    n: usize,
) -> Result<PolyState<S>, KarpError> {
    if model.batch_size() != 1 {
        return Err(KarpError::PolynomialNeedsM1(model.batch_size()));
    }
    check_dims(model, n)?;
    let schedule = StepSchedule::new(model);
    Ok(karp_polynomial_initial_with(&schedule, n))
}

fn karp_polynomial_initial_with<S: Scalar>(schedule: &StepSchedule<S>, n: usize) -> PolyState<S> {
    let sp = schedule.probabilities(0);
    let lf = LogFactorials::<S>::new(n.max(1));
    let mut coeffs = vec![vec![S::zero(); n + 1]; n + 1];
    let (w_y, w_x, w_1) = if sp.total <= S::zero() {
        (S::one() - sp.rho, S::zero(), sp.rho)
    } else {
        (
            S::one() - sp.rho,
            sp.rho * sp.p[1] / sp.total,
            sp.rho * sp.p[0] / sp.total,
        )
    };
    for c in 0..=n {
        for o in 0..=(n - c) {
            let rest = n - c - o;
            let ln_mult = lf.get(n) - lf.get(c) - lf.get(o) - lf.get(rest);
            let term = |w: S, e: usize| -> Option<S> {
                if e == 0 {
                    Some(S::zero())
                } else if w <= S::zero() {
                    None
                } else {
                    Some(S::from_count(e) * w.ln())
                }
            };
            let (Some(a), Some(b), Some(d)) = (term(w_y, c), term(w_x, o), term(w_1, rest)) else {
                continue;
            };
            coeffs[c][o] = (ln_mult + a + b + d).exp();
        }
    }
    PolyState { t: 0, coeffs }
}

/// One step of the generating-polynomial recursion for `M = 1`:
/// `P^t(x, y) = [P^{t-1}(alpha, beta) - P^{t-1}(0, beta)] / alpha` with
/// `alpha = (1-u) x + u`, `u = 1/(K-t+1)`, and
/// `beta = (1-rho) y + rho (p0/p + (p1/p) x)`.
pub fn karp_polynomial_step<S: Scalar>(
    model: &Model<S>,
    state: &PolyState<S>,
    n: usize,
) -> Result<PolyState<S>, KarpError> {
    if model.batch_size() != 1 {
        return Err(KarpError::PolynomialNeedsM1(model.batch_size()));
    }
    check_dims(model, n)?;
    let schedule = StepSchedule::new(model);
    karp_polynomial_step_with(&schedule, model.k(), state, n)
}

fn karp_polynomial_step_with<S: Scalar>(
    schedule: &StepSchedule<S>,
    k: usize,
    state: &PolyState<S>,
    n: usize,
) -> Result<PolyState<S>, KarpError> {
    let t = state.t + 1;
    assert!(t <= k);
    let sp = schedule.probabilities(t);
    let u = S::one() / S::from_count(k - t + 1);
    let (beta_1, beta_x, beta_y) = if sp.total <= S::zero() {
        (sp.rho, S::zero(), S::one() - sp.rho)
    } else {
        (
            sp.rho * sp.p[0] / sp.total,
            sp.rho * sp.p[1] / sp.total,
            S::one() - sp.rho,
        )
    };

    // alpha^e as coefficients in x: alpha = u + (1-u) x
    let lf = LogFactorials::<S>::new(n.max(1));
    let mut alpha_pow: Vec<Vec<S>> = Vec::with_capacity(n);
    for e in 0..n {
        let mut row = vec![S::zero(); e + 1];
        for (i, ri) in row.iter_mut().enumerate() {
            *ri = lf.binom_pmf(e, i, S::one() - u);
        }
        alpha_pow.push(row);
    }
    // beta^c as coefficient matrices over (x, y)
    let mut beta_pow: Vec<Vec<Vec<S>>> = Vec::with_capacity(n + 1);
    beta_pow.push(vec![vec![S::one()]]);
    for c in 1..=n {
        let prev = &beta_pow[c - 1];
        let mut cur = vec![vec![S::zero(); c + 1]; c + 1];
        for (xo, row) in prev.iter().enumerate() {
            for (yo, &v) in row.iter().enumerate() {
                if v == S::zero() {
                    continue;
                }
                cur[xo][yo] += v * beta_1;
                cur[xo + 1][yo] += v * beta_x;
                cur[xo][yo + 1] += v * beta_y;
            }
        }
        beta_pow.push(cur);
    }

    let mut coeffs = vec![vec![S::zero(); n + 1]; n + 1];
    for (c_old, row) in state.coeffs.iter().enumerate() {
        for (o_old, &mass) in row.iter().enumerate() {
            if o_old == 0 || mass == S::zero() {
                continue;
            }
            let ap = &alpha_pow[o_old - 1];
            let bp = &beta_pow[c_old];
            for (xa, &wa) in ap.iter().enumerate() {
                if wa == S::zero() {
                    continue;
                }
                for (xb, brow) in bp.iter().enumerate() {
                    for (yb, &wb) in brow.iter().enumerate() {
                        if wb == S::zero() {
                            continue;
                        }
                        coeffs[yb][xa + xb] += mass * wa * wb;
                    }
                }
            }
        }
    }
    Ok(PolyState { t, coeffs })
}

/// Stopping-time p.m.f. via the generating-polynomial recursion (`M = 1`).
pub fn karp_polynomial_stopping_time<S: Scalar>(
    model: &Model<S>,
    n: usize,
) -> Result<Vec<S>, KarpError> {
    if model.batch_size() != 1 {
        return Err(KarpError::PolynomialNeedsM1(model.batch_size()));
    }
    check_dims(model, n)?;
    let schedule = StepSchedule::new(model);
    let k = model.k();
    let mut pmf = vec![S::zero(); k + 1];
    let mut state = karp_polynomial_initial_with(&schedule, n);
    for t in 0..=k {
        pmf[t] = state.stopped_mass();
        if t == k {
            break;
        }
        // the step sums over o >= 1 only, which is exactly the drain of
        // stopped states
        state = karp_polynomial_step_with(&schedule, k, &state, n)?;
    }
    let mut acc = KahanSum::new();
    for &p in &pmf {
        acc.add(p);
    }
    pmf[k] += S::one() - acc.value();
    Ok(pmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp;
    use crate::model::{CodeParams, DegreeDistribution, RankDistribution};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(k: usize, m: usize, q: u64, psi: Vec<f64>, h: Vec<f64>) -> Model<f64> {
        let d = psi.len().min(k);
        let params = CodeParams::new(k, m, q, d, false).unwrap();
        Model::new(
            params,
            RankDistribution::new(h, true).unwrap(),
            DegreeDistribution::new(psi, true).unwrap(),
        )
        .unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, k: usize, m: usize, d: usize, q: u64) -> Model<f64> {
        let mut psi: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() + 0.01).collect();
        let tot: f64 = psi.iter().sum();
        psi.iter_mut().for_each(|x| *x /= tot);
        let mut h: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>() + 0.01).collect();
        let tot: f64 = h.iter().sum();
        h.iter_mut().for_each(|x| *x /= tot);
        model(k, m, q, psi, h)
    }

    #[test]
    fn rejects_large_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let m = random_model(&mut rng, 8, 3, 3, 4);
        assert!(matches!(
            karp_initial(&m, 4),
            Err(KarpError::UnsupportedBatchSize(3))
        ));
    }

    #[test]
    fn initial_no_batches_is_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let m = random_model(&mut rng, 8, 2, 3, 4);
        let st = karp_initial(&m, 0).unwrap();
        assert_eq!(st.table.len(), 1);
        let mass = st.table[&KarpKey { c: 0, o: [0, 0] }];
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn initial_marginal_over_degrees_is_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let m = random_model(&mut rng, 10, 2, 4, 4);
        let n = 6;
        let st = karp_initial(&m, n).unwrap();
        let sched = bp::StepSchedule::new(&m);
        let rho0 = sched.probabilities(0).rho;
        let lf = LogFactorials::<f64>::new(n);
        for c in 0..=n {
            let marginal: f64 = st
                .table
                .iter()
                .filter(|(k, _)| k.c as usize == c)
                .map(|(_, &v)| v)
                .sum();
            let expect = lf.binom_pmf(n, c, 1.0 - rho0);
            assert!((marginal - expect).abs() < 1e-12, "c={c}");
        }
    }

    #[test]
    fn step_conserves_alive_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let m = random_model(&mut rng, 10, 2, 4, 4);
        let n = 5;
        let mut st = karp_initial(&m, n).unwrap();
        for _ in 0..10 {
            st.table.retain(|k, _| k.o[0] > 0 || k.o[1] > 0);
            let alive = st.total_mass();
            if alive < 1e-14 {
                break;
            }
            st = karp_step(&m, &st, n).unwrap();
            assert!((st.total_mass() - alive).abs() < 1e-11);
        }
    }

    #[test]
    fn m1_matches_ripple_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for _ in 0..3 {
            let m = random_model(&mut rng, 14, 1, 5, 2);
            let n = rng.gen_range(2..=6);
            let expect = bp::stopping_time(&m, n).pmf;
            let got = karp_stopping_time(&m, n).unwrap();
            for t in 0..=14 {
                assert!(
                    (got[t] - expect[t]).abs() < 1e-9,
                    "t={t}: {} vs {}",
                    got[t],
                    expect[t]
                );
            }
        }
    }

    #[test]
    fn m2_matches_ripple_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let m = random_model(&mut rng, 10, 2, 4, 4);
        let n = 5;
        let expect = bp::stopping_time(&m, n).pmf;
        let got = karp_stopping_time(&m, n).unwrap();
        for t in 0..=10 {
            assert!(
                (got[t] - expect[t]).abs() < 1e-9,
                "t={t}: {} vs {}",
                got[t],
                expect[t]
            );
        }
    }

    #[test]
    fn polynomial_matches_table_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let m = random_model(&mut rng, 12, 1, 4, 2);
        let n = 5;
        let mut table = karp_initial(&m, n).unwrap();
        let mut poly = karp_polynomial_initial(&m, n).unwrap();
        for _ in 0..6 {
            for c in 0..=n {
                for o in 0..=n {
                    let tv = table
                        .table
                        .get(&KarpKey {
                            c: c as u32,
                            o: [o as u32, 0],
                        })
                        .copied()
                        .unwrap_or(0.0);
                    assert!(
                        (poly.coeffs[c][o] - tv).abs() < 1e-12,
                        "t={} c={c} o={o}: {} vs {}",
                        table.t,
                        poly.coeffs[c][o],
                        tv
                    );
                }
            }
            table.table.retain(|k, _| k.o[0] > 0);
            table = karp_step(&m, &table, n).unwrap();
            poly = karp_polynomial_step(&m, &poly, n).unwrap();
        }
    }

    #[test]
    fn state_space_stays_within_counting_bound() {
        // the table over (c, o) holds at most (n+1)^(M+1) states
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let m = random_model(&mut rng, 10, 2, 4, 4);
        let n = 5usize;
        let mut st = karp_initial(&m, n).unwrap();
        let bound = (n + 1).pow(3);
        for _ in 0..6 {
            assert!(st.table.len() <= bound, "{} > {bound}", st.table.len());
            st.table.retain(|k, _| k.o[0] > 0 || k.o[1] > 0);
            st = karp_step(&m, &st, n).unwrap();
        }
    }

    #[test]
    fn polynomial_total_mass_via_unit_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let m = random_model(&mut rng, 10, 1, 4, 2);
        let poly = karp_polynomial_initial(&m, 6).unwrap();
        assert!((poly.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_rejects_m2() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let m = random_model(&mut rng, 8, 2, 3, 4);
        assert!(matches!(
            karp_polynomial_initial(&m, 4),
            Err(KarpError::PolynomialNeedsM1(2))
        ));
    }
}
