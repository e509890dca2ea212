//! Probability-model inputs and derived batch-solvability quantities.
//!
//! A model bundles the code parameters (block length `K`, batch size `M`,
//! field size `q`, maximum degree `D`), the rank distribution of the transfer
//! matrix and the degree distribution of the outer code. From those it derives
//! the per-degree solvability probabilities used by every analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{KahanSum, Scalar};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidField {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Returns true when `q` is a prime power. Supports `q <= 2^40`.
fn is_prime_power(q: u64) -> bool {
    if !(2..=(1u64 << 40)).contains(&q) {
        return false;
    }
    let mut p = 0u64;
    let mut n = q;
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            p = d;
            while n.is_multiple_of(d) {
                n /= d;
            }
            break;
        }
        d += 1;
    }
    if p == 0 {
        return true; // q itself is prime
    }
    if n != 1 {
        return false; // a second prime factor remains
    }
    true
}

/// Code parameters: block length, batch size, field size, maximum degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeParams {
    k: usize,
    m: usize,
    q: u64,
    d: usize,
    lt_mode: bool,
}

impl CodeParams {
    pub fn new(k: usize, m: usize, q: u64, d: usize, lt_mode: bool) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(invalid("K", "must be a positive integer"));
        }
        if m == 0 {
            return Err(invalid("M", "must be a positive integer"));
        }
        if !is_prime_power(q) {
            return Err(invalid("q", format!("{q} is not a prime power >= 2")));
        }
        if d == 0 || d > k {
            return Err(invalid("D", format!("must satisfy 1 <= D <= K (got {d})")));
        }
        if lt_mode && m != 1 {
            return Err(invalid("lt_mode", "only valid when M = 1"));
        }
        Ok(Self {
            k,
            m,
            q,
            d,
            lt_mode,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn batch_size(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn max_degree(&self) -> usize {
        self.d
    }

    pub fn lt_mode(&self) -> bool {
        self.lt_mode
    }
}

fn validate_prob_vec<S: Scalar>(
    field: &str,
    v: &mut [S],
    renormalize: bool,
) -> Result<(), ModelError> {
    let mut sum = KahanSum::new();
    for (i, &x) in v.iter().enumerate() {
        if !(x >= S::zero() && x <= S::one() + S::prob_tol()) {
            return Err(invalid(
                &format!("{field}[{i}]"),
                format!("entry {x} outside [0, 1]"),
            ));
        }
        sum.add(x);
    }
    let total = sum.value();
    if (total - S::one()).abs() > S::prob_tol() {
        if renormalize && total > S::zero() {
            for x in v.iter_mut() {
                *x /= total;
            }
        } else {
            return Err(invalid(
                field,
                format!(
                    "entries sum to {total}, expected 1 within {:e}",
                    S::prob_tol()
                ),
            ));
        }
    }
    Ok(())
}

/// Rank law of the transfer matrix: `h[r] = Pr{rank = r}` for `r = 0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDistribution<S: Scalar>(Vec<S>);

impl<S: Scalar> RankDistribution<S> {
    pub fn new(mut h: Vec<S>, renormalize: bool) -> Result<Self, ModelError> {
        if h.is_empty() {
            return Err(invalid("rank_dist", "must have M + 1 entries"));
        }
        validate_prob_vec("rank_dist", &mut h, renormalize)?;
        Ok(Self(h))
    }

    /// Batch size implied by the vector length.
    pub fn batch_size(&self) -> usize {
        self.0.len() - 1
    }

    pub fn probs(&self) -> &[S] {
        &self.0
    }

    pub fn get(&self, r: usize) -> S {
        self.0.get(r).copied().unwrap_or_else(S::zero)
    }
}

/// Degree law of the outer code: `psi[d-1] = Pr{degree = d}` for `d = 1..=D`.
///
/// Degree 0 is disallowed; the vector starts at degree 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeDistribution<S: Scalar>(Vec<S>);

impl<S: Scalar> DegreeDistribution<S> {
    pub fn new(mut psi: Vec<S>, renormalize: bool) -> Result<Self, ModelError> {
        if psi.is_empty() {
            return Err(invalid("degree_dist", "must have at least one entry"));
        }
        validate_prob_vec("degree_dist", &mut psi, renormalize)?;
        Ok(Self(psi))
    }

    pub fn max_degree(&self) -> usize {
        self.0.len()
    }

    /// `Psi_d`; zero outside `1..=D`.
    pub fn prob(&self, d: usize) -> S {
        if d == 0 {
            S::zero()
        } else {
            self.0.get(d - 1).copied().unwrap_or_else(S::zero)
        }
    }

    pub fn probs(&self) -> &[S] {
        &self.0
    }

    /// Folds all mass on degrees above `max_d` into degree `max_d`.
    ///
    /// Used when a designed distribution has support beyond the block length:
    /// every degree larger than `K` behaves like degree `K`.
    pub fn fold_to_max(&self, max_d: usize) -> Self {
        if self.0.len() <= max_d {
            return self.clone();
        }
        let mut folded = self.0[..max_d].to_vec();
        let mut extra = KahanSum::new();
        for &x in &self.0[max_d..] {
            extra.add(x);
        }
        *folded.last_mut().expect("max_d >= 1") += extra.value();
        Self(folded)
    }
}

/// Derived solvability probabilities.
///
/// `hbar[s]` is the probability a batch becomes decodable for the first time
/// when its residual degree is `s`; `hbar_prime[s]` the probability it is
/// decodable at degree `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Solvability<S: Scalar> {
    hbar: Vec<S>,
    hbar_prime: Vec<S>,
}

impl<S: Scalar> Solvability<S> {
    pub fn batch_size(&self) -> usize {
        self.hbar.len() - 1
    }

    /// First-time-decodable probability at degree `s`; zero for `s > M`.
    pub fn hbar(&self, s: usize) -> S {
        self.hbar.get(s).copied().unwrap_or_else(S::zero)
    }

    /// Decodable probability at degree `s`; zero for `s > M`.
    pub fn hbar_prime(&self, s: usize) -> S {
        self.hbar_prime.get(s).copied().unwrap_or_else(S::zero)
    }

    pub fn hbar_all(&self) -> &[S] {
        &self.hbar
    }

    pub fn hbar_prime_all(&self) -> &[S] {
        &self.hbar_prime
    }

    /// Expected usable rank per batch, `sum_s s * hbar_s`.
    pub fn expected_rank(&self) -> S {
        self.hbar
            .iter()
            .enumerate()
            .map(|(s, &v)| S::from_count(s) * v)
            .sum()
    }

    /// Normalized maximum achievable rate, `sum_s s * hbar_s / M`.
    pub fn capacity(&self) -> S {
        self.expected_rank() / S::from_count(self.batch_size())
    }
}

/// `zeta(r, m, q)`: probability that an `r x m` matrix with i.i.d. uniform
/// entries over a `q`-ary field has full row rank.
///
/// Empty product (1) at `r = 0`; clamps to 0 for `r > m` since rank cannot
/// exceed the column count.
pub fn zeta<S: Scalar>(r: usize, m: usize, q: u64) -> S {
    if r == 0 {
        return S::one();
    }
    if r > m {
        return S::zero();
    }
    let qf = S::from_f(q as f64);
    let mut prod = S::one();
    for j in 0..r {
        let e = (m - j) as i32;
        prod *= S::one() - qf.powi(-e);
    }
    prod
}

/// Derives the solvability vectors from the rank distribution.
///
/// In `lt_mode` (M = 1 with deterministic unit generators) the closed forms
/// collapse to `hbar = (h_0, h_1)`, `hbar' = (1, h_1)`.
pub fn solvability_from_rank<S: Scalar>(
    h: &RankDistribution<S>,
    params: &CodeParams,
) -> Result<Solvability<S>, ModelError> {
    let m = h.batch_size();
    if m != params.batch_size() {
        return Err(invalid(
            "rank_dist",
            format!(
                "length {} does not match M + 1 = {}",
                m + 1,
                params.batch_size() + 1
            ),
        ));
    }
    if params.lt_mode() {
        if m != 1 {
            return Err(invalid("lt_mode", "only valid when M = 1"));
        }
        return Ok(Solvability {
            hbar: vec![h.get(0), h.get(1)],
            hbar_prime: vec![S::one(), h.get(1)],
        });
    }
    let q = params.q();
    let qf = S::from_f(q as f64);
    let mut hbar = vec![S::zero(); m + 1];
    let mut hbar_prime = vec![S::zero(); m + 1];
    for s in 0..=m {
        let mut a = KahanSum::new();
        let mut b = KahanSum::new();
        for i in s..=m {
            let z = zeta::<S>(s, i, q);
            a.add(z * qf.powi(-((i - s) as i32)) * h.get(i));
            b.add(z * h.get(i));
        }
        hbar[s] = a.value();
        hbar_prime[s] = b.value();
    }
    Ok(Solvability { hbar, hbar_prime })
}

/// A fully validated analysis model.
#[derive(Clone, Debug)]
pub struct Model<S: Scalar> {
    params: CodeParams,
    rank: RankDistribution<S>,
    degree: DegreeDistribution<S>,
    solvability: Solvability<S>,
}

impl<S: Scalar> Model<S> {
    /// Builds a model, folding degree mass above `K` into degree `K`.
    pub fn new(
        params: CodeParams,
        rank: RankDistribution<S>,
        degree: DegreeDistribution<S>,
    ) -> Result<Self, ModelError> {
        let degree = degree.fold_to_max(params.k());
        let solvability = solvability_from_rank(&rank, &params)?;
        Ok(Self {
            params,
            rank,
            degree,
            solvability,
        })
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.params.k()
    }

    pub fn batch_size(&self) -> usize {
        self.params.batch_size()
    }

    /// Maximum degree after folding to the block length.
    pub fn max_degree(&self) -> usize {
        self.degree.max_degree()
    }

    pub fn rank(&self) -> &RankDistribution<S> {
        &self.rank
    }

    pub fn degree(&self) -> &DegreeDistribution<S> {
        &self.degree
    }

    pub fn solvability(&self) -> &Solvability<S> {
        &self.solvability
    }

    /// Replaces the degree distribution, re-folding to the block length.
    pub fn with_degree(&self, degree: DegreeDistribution<S>) -> Self {
        Self {
            params: self.params,
            rank: self.rank.clone(),
            degree: degree.fold_to_max(self.params.k()),
            solvability: self.solvability.clone(),
        }
    }
}

/// JSON document describing a model.
///
/// Schema: `{ "K": int, "M": int, "q": int, "D": int, "lt_mode": bool,
/// "rank_dist": [real], "degree_dist": [real] }` where `rank_dist` has
/// `M + 1` entries for ranks `0..=M` and `degree_dist` has `D` entries for
/// degrees `1..=D`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelInput {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub q: u64,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(default)]
    pub lt_mode: bool,
    pub rank_dist: Vec<f64>,
    pub degree_dist: Vec<f64>,
}

impl ModelInput {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Validates and converts into an analysis model.
    pub fn into_model<S: Scalar>(&self, renormalize: bool) -> Result<Model<S>, ModelError> {
        if self.rank_dist.len() != self.m + 1 {
            return Err(invalid(
                "rank_dist",
                format!(
                    "expected M + 1 = {} entries, got {}",
                    self.m + 1,
                    self.rank_dist.len()
                ),
            ));
        }
        if self.degree_dist.len() != self.d {
            return Err(invalid(
                "degree_dist",
                format!(
                    "expected D = {} entries for degrees 1..=D (degree 0 is disallowed), got {}",
                    self.d,
                    self.degree_dist.len()
                ),
            ));
        }
        // D may exceed K in the raw document; folding brings it back in range.
        let d_eff = self.d.min(self.k);
        let params = CodeParams::new(self.k, self.m, self.q, d_eff, self.lt_mode)?;
        let conv = |v: &[f64]| v.iter().map(|&x| S::from_f(x)).collect::<Vec<S>>();
        let rank = RankDistribution::new(conv(&self.rank_dist), renormalize)?;
        let degree = DegreeDistribution::new(conv(&self.degree_dist), renormalize)?;
        Model::new(params, rank, degree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: usize, m: usize, q: u64, d: usize, lt: bool) -> CodeParams {
        CodeParams::new(k, m, q, d, lt).unwrap()
    }

    #[test]
    fn zeta_spot_values() {
        assert_eq!(zeta::<f64>(0, 5, 2), 1.0);
        assert!((zeta::<f64>(1, 1, 2) - 0.5).abs() < 1e-15);
        assert!((zeta::<f64>(2, 3, 2) - 0.65625).abs() < 1e-15);
        // rank of an m-column product cannot reach r > m
        assert_eq!(zeta::<f64>(3, 2, 2), 0.0);
        assert!(zeta::<f64>(2, 2, 4) > 0.0);
    }

    #[test]
    fn prime_power_check() {
        for q in [2u64, 3, 4, 8, 9, 16, 27, 243, 256, 1 << 30] {
            assert!(is_prime_power(q), "{q}");
        }
        for q in [0u64, 1, 6, 10, 12, 100, 255] {
            assert!(!is_prime_power(q), "{q}");
        }
    }

    #[test]
    fn lt_mode_solvability_override() {
        let p = params(10, 1, 2, 5, true);
        let h = RankDistribution::new(vec![0.1, 0.9], false).unwrap();
        let s = solvability_from_rank(&h, &p).unwrap();
        assert_eq!(s.hbar_all(), &[0.1, 0.9]);
        assert_eq!(s.hbar_prime_all(), &[1.0, 0.9]);
    }

    #[test]
    fn m1_closed_form() {
        let p = params(10, 1, 2, 5, false);
        let h = RankDistribution::<f64>::new(vec![0.0, 1.0], false).unwrap();
        let s = solvability_from_rank(&h, &p).unwrap();
        assert!((s.hbar(1) - 0.5).abs() < 1e-15);
        // hbar_0 = h_1 / q
        assert!((s.hbar(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn point_mass_at_full_rank() {
        let m = 4;
        let p = params(10, m, 16, 5, false);
        let mut h = vec![0.0; m + 1];
        h[m] = 1.0;
        let h = RankDistribution::new(h, false).unwrap();
        let s = solvability_from_rank(&h, &p).unwrap();
        assert!((s.hbar_prime(m) - zeta::<f64>(m, m, 16)).abs() < 1e-15);
        assert!((s.hbar_prime(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lt_mode_requires_m1() {
        assert!(CodeParams::new(10, 2, 4, 5, true).is_err());
    }

    #[test]
    fn degree_folding() {
        let psi = DegreeDistribution::<f64>::new(vec![0.2, 0.2, 0.2, 0.2, 0.2], false).unwrap();
        let folded = psi.fold_to_max(3);
        assert_eq!(folded.max_degree(), 3);
        assert!((folded.prob(3) - 0.6).abs() < 1e-15);
        let total: f64 = folded.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(RankDistribution::<f64>::new(vec![0.5, 0.6], false).is_err());
        assert!(RankDistribution::<f64>::new(vec![-0.1, 1.1], false).is_err());
        let renorm = RankDistribution::<f64>::new(vec![0.5, 0.6], true).unwrap();
        let total: f64 = renorm.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model_input_roundtrip() {
        let text = r#"{
            "K": 32, "M": 4, "q": 16, "D": 8, "lt_mode": false,
            "rank_dist": [0.0, 0.1, 0.2, 0.3, 0.4],
            "degree_dist": [0.1, 0.2, 0.3, 0.1, 0.1, 0.1, 0.05, 0.05]
        }"#;
        let input = ModelInput::from_json(text).unwrap();
        let model: Model<f64> = input.into_model(false).unwrap();
        assert_eq!(model.k(), 32);
        assert_eq!(model.batch_size(), 4);
        assert_eq!(model.max_degree(), 8);
    }

    #[test]
    fn model_input_field_errors() {
        let text = r#"{
            "K": 32, "M": 4, "q": 16, "D": 8,
            "rank_dist": [0.0, 0.1],
            "degree_dist": [1.0]
        }"#;
        let input = ModelInput::from_json(text).unwrap();
        let err = input.into_model::<f64>(false).unwrap_err();
        assert!(err.to_string().contains("rank_dist"));
    }

    fn random_rank(m: usize, seed: u64) -> RankDistribution<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        RankDistribution::new(raw.into_iter().map(|x| x / total).collect(), true).unwrap()
    }

    #[test]
    fn suffix_sum_identity_and_monotonicity() {
        for seed in 0..20u64 {
            let m = 1 + (seed as usize % 6);
            let q = [2u64, 4, 16, 256][seed as usize % 4];
            let p = params(50, m, q, 10, false);
            let h = random_rank(m, seed);
            let s = solvability_from_rank(&h, &p).unwrap();
            // hbar'_s equals the suffix sums of hbar, hbar'_0 = 1
            assert!((s.hbar_prime(0) - 1.0).abs() < 1e-12);
            for k in 0..=m {
                let suffix: f64 = (k..=m).map(|i| s.hbar(i)).sum();
                assert!(
                    (s.hbar_prime(k) - suffix).abs() < 1e-12,
                    "seed={seed} k={k}"
                );
            }
            let total: f64 = s.hbar_all().iter().sum();
            assert!(total <= 1.0 + 1e-12);
            for k in 1..=m {
                assert!(s.hbar_prime(k) <= s.hbar_prime(k - 1) + 1e-15);
            }
        }
    }

    #[test]
    fn large_field_limit() {
        for seed in 0..5u64 {
            let m = 4;
            let p = params(50, m, 1 << 30, 10, false);
            let h = random_rank(m, seed);
            let s = solvability_from_rank(&h, &p).unwrap();
            for r in 0..=m {
                assert!(
                    (s.hbar(r) - h.get(r)).abs() < 1e-6,
                    "seed={seed} r={r}: {} vs {}",
                    s.hbar(r),
                    h.get(r)
                );
            }
        }
    }

    proptest! {
        #[test]
        fn folding_preserves_mass(weights in proptest::collection::vec(0.01f64..1.0, 2..12), cut in 1usize..6) {
            let total: f64 = weights.iter().sum();
            let psi = DegreeDistribution::new(weights.iter().map(|w| w / total).collect(), true).unwrap();
            let cut = cut.min(psi.max_degree());
            let folded = psi.fold_to_max(cut);
            let s: f64 = folded.probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(folded.max_degree() <= cut);
        }
    }
}
