//! Exact stopping-time analysis of the one-symbol-per-step BP decoder for a
//! fixed number of received batches.
//!
//! The decoder state is tracked through the joint law of the undecodable
//! batch count `C^t` and the decodable-symbol count (ripple) `R^t`. Each
//! decoding step maps the state vectors through a banded stochastic matrix;
//! the mass sitting at ripple size zero exits into the stopping-time p.m.f.

use crate::combin::LogFactorials;
use crate::model::Model;
use crate::scalar::{KahanSum, Scalar};

/// Per-step batch-fate probabilities.
///
/// `p[s]` is the probability that a batch becomes decodable for the first
/// time at step `t` with residual degree `s`; `rho` the conditional
/// probability that a batch still undecodable before step `t` becomes
/// decodable at step `t`.
#[derive(Clone, Debug)]
pub struct StepProbabilities<S: Scalar> {
    pub t: usize,
    pub p: Vec<S>,
    pub total: S,
    pub rho: S,
    /// Set when the running remainder underflowed and `rho` was forced to 1.
    pub degenerate: bool,
}

/// Upper-banded stochastic transition of the ripple size over one step.
#[derive(Clone, Debug)]
pub struct BandedTransition<S: Scalar> {
    dim: usize,
    bandwidth: usize,
    /// `diags[off][i]` is the entry at row `i`, column `i + off`.
    diags: Vec<Vec<S>>,
    degenerate: bool,
    max_row_sum_error: S,
}

impl<S: Scalar> BandedTransition<S> {
    /// Builds the ripple transition from the step probabilities `p[0..=M]`,
    /// over ripple sizes `0..dim` (so `dim - 1` undecoded symbols remain).
    ///
    /// When all `p[s]` vanish no batch can newly become decodable and the
    /// transition is the identity, flagged as degenerate.
    pub fn from_step_probs(p: &[S], dim: usize, lf: &LogFactorials<S>) -> Self {
        assert!(dim >= 1);
        let m = p.len() - 1;
        let bandwidth = m.min(dim - 1);
        let total: S = p.iter().copied().sum();
        if total <= S::zero() {
            return Self::identity(dim, bandwidth);
        }
        let n = dim - 1;
        let mut diags: Vec<Vec<S>> = (0..=bandwidth)
            .map(|off| vec![S::zero(); dim - off])
            .collect();
        for i in 0..dim {
            for j in i..=(i + bandwidth).min(dim - 1) {
                let mut acc = S::zero();
                for (s, &ps) in p.iter().enumerate().take(n.min(m) + 1).skip(j - i) {
                    if ps > S::zero() {
                        acc += ps / total * lf.hyge(n, i, s, (i + s - j) as i64);
                    }
                }
                diags[j - i][i] = acc;
            }
        }
        let mut max_err = S::zero();
        for i in 0..dim {
            let mut row = KahanSum::new();
            for off in 0..=bandwidth {
                if i + off < dim {
                    row.add(diags[off][i]);
                }
            }
            let err = (row.value() - S::one()).abs();
            if err > max_err {
                max_err = err;
            }
        }
        Self {
            dim,
            bandwidth,
            diags,
            degenerate: false,
            max_row_sum_error: max_err,
        }
    }

    fn identity(dim: usize, bandwidth: usize) -> Self {
        let mut diags: Vec<Vec<S>> = (0..=bandwidth)
            .map(|off| vec![S::zero(); dim - off])
            .collect();
        for v in diags[0].iter_mut() {
            *v = S::one();
        }
        Self {
            dim,
            bandwidth,
            diags,
            degenerate: true,
            max_row_sum_error: S::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn max_row_sum_error(&self) -> S {
        self.max_row_sum_error
    }

    /// Dense entry accessor (zero outside the band).
    pub fn entry(&self, i: usize, j: usize) -> S {
        if j < i || j - i > self.bandwidth || i >= self.dim || j >= self.dim {
            return S::zero();
        }
        self.diags[j - i][i]
    }

    /// Maximum row 1-norm; the operator norm for right-multiplication of
    /// non-negative row vectors.
    pub fn max_row_sum(&self) -> S {
        let mut best = S::zero();
        for i in 0..self.dim {
            let mut row = S::zero();
            for off in 0..=self.bandwidth {
                if i + off < self.dim {
                    row += self.diags[off][i];
                }
            }
            if row > best {
                best = row;
            }
        }
        best
    }

    /// Row-vector product `out = v * Q`.
    pub fn apply_into(&self, v: &[S], out: &mut [S]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        if self.degenerate {
            out.copy_from_slice(v);
            return;
        }
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for (off, diag) in self.diags.iter().enumerate() {
            for (i, &d) in diag.iter().enumerate() {
                out[i + off] += v[i] * d;
            }
        }
    }

    pub fn apply(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.dim];
        self.apply_into(v, &mut out);
        out
    }
}

/// Precomputed step probabilities for every decoding time `t = 0..=K`.
#[derive(Clone, Debug)]
pub struct StepSchedule<S: Scalar> {
    steps: Vec<StepProbabilities<S>>,
    lf: LogFactorials<S>,
    k: usize,
    flags: Vec<String>,
}

impl<S: Scalar> StepSchedule<S> {
    pub fn new(model: &Model<S>) -> Self {
        let k = model.k();
        let m = model.batch_size();
        let d_max = model.max_degree();
        let lf = LogFactorials::new(k.max(1));
        let solv = model.solvability();
        let psi = model.degree();
        let kf = S::from_count(k);

        let mut steps = Vec::with_capacity(k + 1);
        let mut flags = Vec::new();
        let mut consumed = KahanSum::new();
        for t in 0..=k {
            let mut p = vec![S::zero(); m + 1];
            if t == 0 {
                for (s, ps) in p.iter_mut().enumerate().skip(1) {
                    *ps = psi.prob(s) * solv.hbar_prime(s);
                }
            } else {
                for (s, ps) in p.iter_mut().enumerate() {
                    let hb = solv.hbar(s);
                    if hb <= S::zero() {
                        continue;
                    }
                    let mut acc = KahanSum::new();
                    for d in (s + 1)..=d_max {
                        let w = psi.prob(d);
                        if w <= S::zero() {
                            continue;
                        }
                        let hyp = lf.hyge(k - 1, d - 1, t - 1, (d - s - 1) as i64);
                        if hyp > S::zero() {
                            acc.add(w * S::from_count(d) / kf * hyp);
                        }
                    }
                    *ps = hb * acc.value();
                }
            }
            let total: S = p.iter().copied().sum();
            let mut degenerate = false;
            let rho = if t == 0 {
                total
            } else {
                let remainder = S::one() - consumed.value();
                if remainder <= S::tiny() {
                    degenerate = true;
                    flags.push(format!("rho_denominator_underflow(t={t})"));
                    S::one()
                } else {
                    let raw = total / remainder;
                    if raw > S::one() + S::from_f(1e-9) {
                        flags.push(format!("rho_exceeds_one(t={t})"));
                    }
                    raw.min(S::one()).max(S::zero())
                }
            };
            consumed.add(total);
            steps.push(StepProbabilities {
                t,
                p,
                total,
                rho,
                degenerate,
            });
        }
        Self {
            steps,
            lf,
            k,
            flags,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probabilities(&self, t: usize) -> &StepProbabilities<S> {
        &self.steps[t]
    }

    /// Ripple transition at time `t`, of dimension `K - t + 1`.
    pub fn transition(&self, t: usize) -> BandedTransition<S> {
        let sp = &self.steps[t];
        BandedTransition::from_step_probs(&sp.p, self.k - t + 1, &self.lf)
    }

    pub fn log_factorials(&self) -> &LogFactorials<S> {
        &self.lf
    }

    pub fn flags(&self) -> &[String] {
        &self.flags
    }
}

/// Batch-fate probabilities at a single time; convenience wrapper that builds
/// the schedule prefix internally.
pub fn step_probabilities<S: Scalar>(model: &Model<S>, t: usize) -> StepProbabilities<S> {
    assert!(t <= model.k());
    StepSchedule::new(model).steps[t].clone()
}

/// Ripple transition at time `t`; convenience wrapper.
pub fn build_transition<S: Scalar>(model: &Model<S>, t: usize) -> BandedTransition<S> {
    assert!(t <= model.k());
    StepSchedule::new(model).transition(t)
}

/// Joint law of `(C^t, R^t)` restricted to runs still alive at time `t`.
#[derive(Clone, Debug)]
pub struct JointState<S: Scalar> {
    pub t: usize,
    /// `rows[c][r]`, for `c = 0..=n` batches left undecodable and ripple `r`.
    pub rows: Vec<Vec<S>>,
}

impl<S: Scalar> JointState<S> {
    pub fn total_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for row in &self.rows {
            for &v in row {
                acc.add(v);
            }
        }
        acc.value()
    }

    /// Mass at ripple size zero, summed over the batch count.
    pub fn stopped_mass(&self) -> S {
        let mut acc = KahanSum::new();
        for row in &self.rows {
            acc.add(row[0]);
        }
        acc.value()
    }
}

/// Distribution of the BP stopping time over `t = 0..=K`.
#[derive(Clone, Debug)]
pub struct StoppingTimeDistribution<S: Scalar> {
    pub pmf: Vec<S>,
    pub flags: Vec<String>,
}

impl<S: Scalar> StoppingTimeDistribution<S> {
    pub fn cdf(&self) -> Vec<S> {
        let mut acc = KahanSum::new();
        self.pmf
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect()
    }

    pub fn total(&self) -> S {
        let mut acc = KahanSum::new();
        for &p in &self.pmf {
            acc.add(p);
        }
        acc.value()
    }

    /// Probability the decoder stops before `kprime` symbols are decoded.
    pub fn error_probability(&self, kprime: usize) -> S {
        let mut acc = KahanSum::new();
        for &p in self.pmf.iter().take(kprime) {
            acc.add(p);
        }
        acc.value()
    }
}

/// Fixed-batch-count analysis engine. Holds the precomputed schedule so the
/// per-step recursion stays within the quadratic complexity budget.
pub struct BpEngine<S: Scalar> {
    schedule: StepSchedule<S>,
    k: usize,
}

impl<S: Scalar> BpEngine<S> {
    pub fn new(model: &Model<S>) -> Self {
        let schedule = StepSchedule::new(model);
        let k = model.k();
        Self { schedule, k }
    }

    pub fn from_schedule(schedule: StepSchedule<S>) -> Self {
        let k = schedule.k();
        Self { schedule, k }
    }

    pub fn schedule(&self) -> &StepSchedule<S> {
        &self.schedule
    }

    fn binom_table(&self, n: usize) -> LogFactorials<S> {
        LogFactorials::new(n.max(self.k) + 1)
    }

    /// State after time 0: `n - c` batches are immediately decodable and the
    /// ripple is the size of the union of their contributor sets.
    pub fn initial_state(&self, n: usize) -> JointState<S> {
        let dim = self.k + 1;
        let sp = self.schedule.probabilities(0);
        let q0 = self.schedule.transition(0);
        let lf = self.binom_table(n);
        let mut rows = vec![vec![S::zero(); dim]; n + 1];
        let mut w = vec![S::zero(); dim];
        w[0] = S::one();
        let mut scratch = vec![S::zero(); dim];
        for k in 0..=n {
            let c = n - k;
            let b = lf.binom_pmf(n, c, S::one() - sp.rho);
            if b > S::zero() {
                for (dst, &src) in rows[c].iter_mut().zip(w.iter()) {
                    *dst = b * src;
                }
            }
            if k < n {
                q0.apply_into(&w, &mut scratch);
                std::mem::swap(&mut w, &mut scratch);
            }
        }
        JointState { t: 0, rows }
    }

    /// Advances the joint state by one decoding step.
    ///
    /// The ripple-zero component of every row is dropped first (that mass has
    /// exited into the stopping-time p.m.f.); the surviving rows are then
    /// thinned over the batch count and pushed through powers of the banded
    /// transition, accumulated Horner-style so each target count costs one
    /// extra banded multiply.
    pub fn step(&self, state: &JointState<S>) -> JointState<S> {
        let t = state.t + 1;
        assert!(t <= self.k, "cannot step past t = K");
        let n = state.rows.len() - 1;
        let dim = self.k - t + 1;
        let sp = self.schedule.probabilities(t);
        let q = self.schedule.transition(t);
        let lf = self.binom_table(n);
        let one_minus_rho = S::one() - sp.rho;

        let dropped: Vec<&[S]> = state.rows.iter().map(|row| &row[1..]).collect();
        let mut rows = Vec::with_capacity(n + 1);
        let mut cur = vec![S::zero(); dim];
        let mut scratch = vec![S::zero(); dim];
        for c in 0..=n {
            let b = lf.binom_pmf(n, c, one_minus_rho);
            for (dst, &src) in cur.iter_mut().zip(dropped[n].iter()) {
                *dst = b * src;
            }
            for cp in (c..n).rev() {
                q.apply_into(&cur, &mut scratch);
                std::mem::swap(&mut cur, &mut scratch);
                let b = lf.binom_pmf(cp, c, one_minus_rho);
                if b > S::zero() {
                    for (dst, &src) in cur.iter_mut().zip(dropped[cp].iter()) {
                        *dst += b * src;
                    }
                }
            }
            rows.push(cur.clone());
        }
        JointState { t, rows }
    }

    /// Full stopping-time distribution for `n` received batches.
    pub fn stopping_time(&self, n: usize) -> StoppingTimeDistribution<S> {
        let mut flags: Vec<String> = self.schedule.flags().to_vec();
        let mut pmf = vec![S::zero(); self.k + 1];
        let mut state = self.initial_state(n);
        pmf[0] = state.stopped_mass();
        for t in 1..=self.k {
            state = self.step(&state);
            pmf[t] = state.stopped_mass();
        }
        // At t = K the state vectors have length one, so the final entry
        // already collects all remaining mass.
        let dist = StoppingTimeDistribution { pmf, flags: vec![] };
        let total = dist.total();
        if (total - S::one()).abs() > S::from_f(1e-9) {
            flags.push(format!(
                "stopping_pmf_total_deviation({:e})",
                total - S::one()
            ));
        }
        StoppingTimeDistribution {
            pmf: dist.pmf,
            flags,
        }
    }
}

/// Stopping-time distribution of the BP decoder with `n` received batches.
pub fn stopping_time<S: Scalar>(model: &Model<S>, n: usize) -> StoppingTimeDistribution<S> {
    BpEngine::new(model).stopping_time(n)
}

/// Initial joint state for `n` received batches.
pub fn initial_state<S: Scalar>(model: &Model<S>, n: usize) -> JointState<S> {
    BpEngine::new(model).initial_state(n)
}

/// One decoding step of the joint-state recursion.
pub fn step<S: Scalar>(model: &Model<S>, state: &JointState<S>) -> JointState<S> {
    BpEngine::new(model).step(state)
}

/// Probability that BP stops before decoding `kprime` symbols.
pub fn bp_error_probability<S: Scalar>(model: &Model<S>, n: usize, kprime: usize) -> S {
    assert!(
        (1..=model.k()).contains(&kprime),
        "kprime must satisfy 1 <= K' <= K"
    );
    stopping_time(model, n).error_probability(kprime)
}
