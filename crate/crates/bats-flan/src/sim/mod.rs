//! Ground-truth Monte Carlo: full encoding over GF(2^m), rank-distributed
//! transfer matrices, one-symbol-per-step BP decoding and inactivation
//! decoding.
//!
//! Reproducibility contract: every trial runs on its own ChaCha8 stream
//! keyed by `(seed, trial_index)` (ChaCha is a counter-based generator, so
//! streams are independent and replayable); histogram merging is integer
//! addition, so reports are bit-identical for a given `(model, seed, trials)`
//! regardless of thread count.

pub mod gf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Model, RankDistribution};
use gf::{gf_rank, gf_solve, FieldMatrix, GfError, GfField};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("trials must be >= 1")]
    NoTrials,
}

/// One received batch with live bookkeeping for the unit-step decoder.
#[derive(Clone, Debug)]
pub struct Batch {
    /// Live (undecoded) contributor indices, ascending.
    pub contributors: Vec<usize>,
    /// Live coefficient matrix `G_i^t H_i`, rows aligned with `contributors`.
    pub coeff: FieldMatrix,
    /// Received symbols; meaningful until the first inactivation.
    pub y: Vec<u8>,
    /// Original coefficient rows at their original contributor indices,
    /// kept for the terminal global-rank check.
    original: Vec<(usize, Vec<u8>)>,
    decodable: bool,
}

impl Batch {
    pub fn live_degree(&self) -> usize {
        self.contributors.len()
    }

    pub fn is_decodable(&self) -> bool {
        self.decodable
    }
}

/// Outcome of a single decoding run.
#[derive(Clone, Debug)]
pub struct DecodeTrace {
    /// Number of symbols decoded by BP steps (the stopping time).
    pub stop_time: usize,
    /// Times at which an inactivation occurred (empty for plain BP).
    pub inactivation_times: Vec<usize>,
    pub decoded_count: usize,
    /// Plain BP: all symbols decoded. Inactivation: the residual global
    /// system uniquely determines the inactive symbols.
    pub success: bool,
}

/// Draws an `M x M` transfer matrix whose rank law is `h`: sample the rank
/// `r`, then multiply an `M x r` by an `r x M` factor, redrawing each factor
/// until it reaches rank `r`.
pub fn sample_transfer<R: Rng>(
    h: &RankDistribution<f64>,
    m: usize,
    field: &GfField,
    rng: &mut R,
) -> FieldMatrix {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut rank = 0usize;
    for r in 0..=m {
        acc += h.get(r);
        if u < acc {
            rank = r;
            break;
        }
    }
    if rank == 0 {
        return FieldMatrix::zero(m, m);
    }
    let left = loop {
        let cand = FieldMatrix::random(m, rank, field, rng);
        if gf_rank(&cand, field) == rank {
            break cand;
        }
    };
    let right = loop {
        let cand = FieldMatrix::random(rank, m, field, rng);
        if gf_rank(&cand, field) == rank {
            break cand;
        }
    };
    left.matmul(&right, field)
}

fn sample_degree<R: Rng>(model: &Model<f64>, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for d in 1..=model.max_degree() {
        acc += model.degree().prob(d);
        if u < acc {
            return d;
        }
    }
    model.max_degree()
}

fn sample_contributors<R: Rng>(k: usize, d: usize, rng: &mut R) -> Vec<usize> {
    // partial Fisher-Yates over 0..K
    let mut pool: Vec<usize> = (0..k).collect();
    for i in 0..d {
        let j = rng.gen_range(i..k);
        pool.swap(i, j);
    }
    let mut chosen = pool[..d].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Draws the input symbols and `n` encoded batches.
pub fn encode<R: Rng>(
    model: &Model<f64>,
    n: usize,
    field: &GfField,
    rng: &mut R,
) -> (Vec<u8>, Vec<Batch>) {
    let k = model.k();
    let m = model.batch_size();
    let symbols: Vec<u8> = (0..k).map(|_| field.random_element(rng)).collect();
    let mut batches = Vec::with_capacity(n);
    for _ in 0..n {
        let d = sample_degree(model, rng);
        let contributors = sample_contributors(k, d, rng);
        let generator = if model.params().lt_mode() {
            // deterministic all-identity generator column
            let mut g = FieldMatrix::zero(d, 1);
            for r in 0..d {
                g.set(r, 0, 1);
            }
            g
        } else {
            FieldMatrix::random(d, m, field, rng)
        };
        let transfer = sample_transfer(model.rank(), m, field, rng);
        let coeff = generator.matmul(&transfer, field);
        let mut y = vec![0u8; m];
        for (r, &idx) in contributors.iter().enumerate() {
            let b = symbols[idx];
            for (c, yv) in y.iter_mut().enumerate() {
                *yv = field.add(*yv, field.mul(b, coeff.get(r, c)));
            }
        }
        let original = contributors
            .iter()
            .enumerate()
            .map(|(r, &idx)| (idx, coeff.row(r).to_vec()))
            .collect();
        batches.push(Batch {
            contributors,
            coeff,
            y,
            original,
            decodable: false,
        });
    }
    (symbols, batches)
}

struct DecoderState {
    batches: Vec<Batch>,
    /// batch indices containing each symbol (by original membership)
    membership: Vec<Vec<usize>>,
    /// count of decodable batches currently containing each symbol
    ripple_count: Vec<u32>,
    ripple: std::collections::BTreeSet<usize>,
    decoded: Vec<bool>,
}

impl DecoderState {
    fn new(batches: Vec<Batch>, k: usize, field: &GfField) -> Self {
        let mut membership = vec![Vec::new(); k];
        for (i, b) in batches.iter().enumerate() {
            for &s in &b.contributors {
                membership[s].push(i);
            }
        }
        let mut state = Self {
            batches,
            membership,
            ripple_count: vec![0; k],
            ripple: std::collections::BTreeSet::new(),
            decoded: vec![false; k],
        };
        for i in 0..state.batches.len() {
            let d = state.batches[i].live_degree();
            if gf_rank(&state.batches[i].coeff, field) == d {
                state.mark_decodable(i);
            }
        }
        state
    }

    fn mark_decodable(&mut self, i: usize) {
        let contributors = std::mem::take(&mut self.batches[i].contributors);
        for &s in &contributors {
            self.ripple_count[s] += 1;
            if self.ripple_count[s] == 1 {
                self.ripple.insert(s);
            }
        }
        self.batches[i].contributors = contributors;
        self.batches[i].decodable = true;
    }

    /// Removes symbol `j` from every batch containing it, updating
    /// decodability. `value` is known for plain BP; `None` after an
    /// inactivation, when only the structure is tracked.
    fn substitute(&mut self, j: usize, value: Option<u8>, field: &GfField) {
        let members = self.membership[j].clone();
        for i in members {
            let pos = match self.batches[i].contributors.binary_search(&j) {
                Ok(p) => p,
                Err(_) => continue,
            };
            if let Some(v) = value {
                let row: Vec<u8> = self.batches[i].coeff.row(pos).to_vec();
                for (c, &g) in row.iter().enumerate() {
                    let sub = field.mul(v, g);
                    self.batches[i].y[c] = field.add(self.batches[i].y[c], sub);
                }
            }
            self.batches[i].contributors.remove(pos);
            self.batches[i].coeff.remove_row(pos);
            let was_decodable = self.batches[i].decodable;
            if was_decodable {
                self.ripple_count[j] -= 1;
                // a decodable batch stays decodable as contributors leave
                let d = self.batches[i].live_degree();
                assert_eq!(
                    gf_rank(&self.batches[i].coeff, field),
                    d,
                    "decodable batch lost decodability"
                );
            } else {
                let d = self.batches[i].live_degree();
                if gf_rank(&self.batches[i].coeff, field) == d {
                    self.mark_decodable(i);
                }
            }
        }
        self.ripple.remove(&j);
        self.ripple_count[j] = 0;
        self.decoded[j] = true;
    }

    /// Solves a decodable batch containing `j` and returns the value of `j`.
    fn recover_value(&self, j: usize, field: &GfField) -> u8 {
        for &i in &self.membership[j] {
            let b = &self.batches[i];
            if !b.decodable {
                continue;
            }
            if let Ok(pos) = b.contributors.binary_search(&j) {
                let x = gf_solve(&b.coeff, &b.y, field)
                    .expect("decodable batch must be uniquely solvable");
                return x[pos];
            }
        }
        unreachable!("ripple symbol must contribute to a decodable batch")
    }

    fn global_rank(&self, k: usize, mcols: usize, field: &GfField) -> usize {
        let n = self.batches.len();
        let mut global = FieldMatrix::zero(k, n * mcols);
        for (i, b) in self.batches.iter().enumerate() {
            for (idx, row) in &b.original {
                for (c, &v) in row.iter().enumerate() {
                    global.set(*idx, i * mcols + c, v);
                }
            }
        }
        gf_rank(&global, field)
    }
}

/// One-symbol-per-step BP decoding; ties broken toward the lowest index,
/// which cannot change the stopping time.
pub fn bp_decode(symbols: &[u8], batches: Vec<Batch>, field: &GfField) -> DecodeTrace {
    let k = symbols.len();
    let mut state = DecoderState::new(batches, k, field);
    let mut decoded_count = 0usize;
    while let Some(&j) = state.ripple.first() {
        let value = state.recover_value(j, field);
        assert_eq!(
            value, symbols[j],
            "decoded symbol disagrees with ground truth"
        );
        state.substitute(j, Some(value), field);
        decoded_count += 1;
    }
    DecodeTrace {
        stop_time: decoded_count,
        inactivation_times: Vec::new(),
        decoded_count,
        success: decoded_count == k,
    }
}

/// Inactivation decoding: on an empty ripple, a uniformly random undecoded
/// symbol is marked inactive and substituted as an indeterminate. Values are
/// checked against ground truth until the first inactivation; afterwards only
/// the structure evolves and success is decided by a rank check of the global
/// system.
pub fn inactivation_decode<R: Rng>(
    symbols: &[u8],
    batches: Vec<Batch>,
    field: &GfField,
    rng: &mut R,
) -> DecodeTrace {
    let k = symbols.len();
    let mcols = batches.first().map_or(1, |b| b.y.len());
    let mut state = DecoderState::new(batches, k, field);
    let mut undecoded: Vec<usize> = (0..k).collect();
    let mut position: Vec<usize> = (0..k).collect();
    let remove_undecoded = |undecoded: &mut Vec<usize>, position: &mut Vec<usize>, j: usize| {
        let pos = position[j];
        let last = *undecoded.last().unwrap();
        undecoded.swap_remove(pos);
        if pos < undecoded.len() {
            position[last] = pos;
        }
    };
    let mut decoded_count = 0usize;
    let mut inactivation_times = Vec::new();
    let mut values_valid = true;
    while !undecoded.is_empty() {
        if let Some(&j) = state.ripple.first() {
            let value = if values_valid {
                let v = state.recover_value(j, field);
                assert_eq!(v, symbols[j], "decoded symbol disagrees with ground truth");
                Some(v)
            } else {
                None
            };
            state.substitute(j, value, field);
            remove_undecoded(&mut undecoded, &mut position, j);
            decoded_count += 1;
        } else {
            let t = decoded_count + inactivation_times.len();
            let pick = rng.gen_range(0..undecoded.len());
            let j = undecoded[pick];
            inactivation_times.push(t);
            values_valid = false;
            state.substitute(j, None, field);
            remove_undecoded(&mut undecoded, &mut position, j);
        }
    }
    let success = if inactivation_times.is_empty() {
        true
    } else {
        state.global_rank(k, mcols, field) == k
    };
    DecodeTrace {
        stop_time: decoded_count,
        inactivation_times,
        decoded_count,
        success,
    }
}

/// Batch-count law for a simulation run.
#[derive(Clone, Copy, Debug)]
pub enum BatchCount {
    Fixed(usize),
    Poisson(f64),
}

/// Aggregated statistics over independent trials.
#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    pub trials: u64,
    pub k: usize,
    /// Histogram of BP stopping times, indices `0..=K`.
    pub stop_hist: Vec<u64>,
    /// Histogram of inactivation counts (when inactivation ran).
    pub inact_hist: Option<Vec<u64>>,
    pub bp_successes: u64,
    pub inact_solvable: Option<u64>,
}

impl MonteCarloReport {
    pub fn empirical_stop_cdf(&self) -> Vec<f64> {
        let mut acc = 0u64;
        self.stop_hist
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / self.trials as f64
            })
            .collect()
    }

    pub fn mean_stop_time(&self) -> f64 {
        let total: f64 = self
            .stop_hist
            .iter()
            .enumerate()
            .map(|(t, &c)| t as f64 * c as f64)
            .sum();
        total / self.trials as f64
    }

    pub fn mean_inactivations(&self) -> Option<f64> {
        self.inact_hist.as_ref().map(|h| {
            let total: f64 = h
                .iter()
                .enumerate()
                .map(|(t, &c)| t as f64 * c as f64)
                .sum();
            total / self.trials as f64
        })
    }
}

/// Half-width of the 99.7% band for an empirical CDF point at analytic value
/// `p` over `trials` samples (normal approximation plus continuity
/// correction).
pub fn confidence_band(p: f64, trials: u64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let t = trials as f64;
    3.0 * (p * (1.0 - p) / t).sqrt() + 0.5 / t
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    key[16..24].copy_from_slice(b"batsflan");
    ChaCha8Rng::from_seed(key)
}

struct TrialOutcome {
    stop_time: u16,
    bp_success: bool,
    inactivations: Option<u16>,
    inact_solvable: Option<bool>,
}

fn run_trial(
    model: &Model<f64>,
    count: BatchCount,
    with_inactivation: bool,
    field: &GfField,
    seed: u64,
    trial: u64,
) -> TrialOutcome {
    let mut rng = trial_rng(seed, trial);
    let n = match count {
        BatchCount::Fixed(n) => n,
        BatchCount::Poisson(nbar) => {
            if nbar <= 0.0 {
                0
            } else {
                Poisson::new(nbar).expect("nbar > 0").sample(&mut rng) as usize
            }
        }
    };
    let (symbols, batches) = encode(model, n, field, &mut rng);
    let inact_batches = with_inactivation.then(|| batches.clone());
    let bp = bp_decode(&symbols, batches, field);
    let mut inactivations = None;
    let mut inact_solvable = None;
    if let Some(b) = inact_batches {
        let trace = inactivation_decode(&symbols, b, field, &mut rng);
        // the two processes agree step for step until the first empty ripple
        assert_eq!(
            trace.inactivation_times.is_empty(),
            bp.success,
            "inactivation count must be zero exactly when BP decodes everything"
        );
        assert_eq!(
            trace.decoded_count + trace.inactivation_times.len(),
            symbols.len()
        );
        inactivations = Some(trace.inactivation_times.len() as u16);
        inact_solvable = Some(trace.success);
    }
    TrialOutcome {
        stop_time: bp.stop_time as u16,
        bp_success: bp.success,
        inactivations,
        inact_solvable,
    }
}

/// Runs independent trials in parallel and aggregates the histograms.
pub fn monte_carlo(
    model: &Model<f64>,
    count: BatchCount,
    trials: u64,
    seed: u64,
    with_inactivation: bool,
) -> Result<MonteCarloReport, SimError> {
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let field = GfField::from_q(model.params().q())?;
    let k = model.k();
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| run_trial(model, count, with_inactivation, &field, seed, trial))
        .collect();
    let mut stop_hist = vec![0u64; k + 1];
    let mut inact_hist = with_inactivation.then(|| vec![0u64; k + 1]);
    let mut bp_successes = 0u64;
    let mut inact_solvable = with_inactivation.then_some(0u64);
    for o in outcomes {
        stop_hist[o.stop_time as usize] += 1;
        if o.bp_success {
            bp_successes += 1;
        }
        if let (Some(h), Some(i)) = (inact_hist.as_mut(), o.inactivations) {
            h[i as usize] += 1;
        }
        if let (Some(s), Some(true)) = (inact_solvable.as_mut(), o.inact_solvable) {
            *s += 1;
        }
    }
    Ok(MonteCarloReport {
        trials,
        k,
        stop_hist,
        inact_hist,
        bp_successes,
        inact_solvable,
    })
}
