//! Log-space combinatorial primitives shared by every analysis module.
//!
//! All p.m.f.s are evaluated through a cached log-factorial table and
//! exponentiated at the end, so block lengths in the thousands never touch a
//! raw factorial.

use crate::scalar::{KahanSum, Scalar};

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma<S: Scalar>(x: S) -> S {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > S::zero());
    let x = x - S::one();
    let mut acc = S::from_f(0.999_999_999_999_809_9);
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += S::from_f(c) / (x + S::from_count(i + 1));
    }
    let g = S::from_f(7.5);
    let t = x + g;
    let half = S::from_f(0.5);
    S::from_f(0.918_938_533_204_672_7) + (x + half) * t.ln() - t + acc.ln()
}

/// Cached table of `ln(k!)` built by compensated accumulation of `ln k`.
#[derive(Clone, Debug)]
pub struct LogFactorials<S: Scalar> {
    table: Vec<S>,
}

impl<S: Scalar> LogFactorials<S> {
    /// Table covering `0! ..= max_n!`.
    pub fn new(max_n: usize) -> Self {
        let mut table = Vec::with_capacity(max_n + 1);
        let mut acc = KahanSum::new();
        table.push(S::zero());
        for k in 1..=max_n {
            acc.add(S::from_count(k).ln());
            table.push(acc.value());
        }
        Self { table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize) -> S {
        self.table[n]
    }

    /// `ln C(n, k)`; negative infinity outside the support.
    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> S {
        if k > n {
            return S::neg_infinity();
        }
        self.table[n] - self.table[k] - self.table[n - k]
    }

    /// Hypergeometric p.m.f. `C(i,k) C(n-i, j-k) / C(n,j)`.
    ///
    /// Zero outside `max(0, i+j-n) <= k <= min(i, j)`. Requires `i, j <= n`.
    pub fn hyge(&self, n: usize, i: usize, j: usize, k: i64) -> S {
        debug_assert!(i <= n && j <= n);
        if k < 0 {
            return S::zero();
        }
        let k = k as usize;
        if k > i || k > j || i + j > n + k {
            return S::zero();
        }
        let ln = self.ln_choose(i, k) + self.ln_choose(n - i, j - k) - self.ln_choose(n, j);
        ln.exp()
    }

    /// Binomial p.m.f. `C(n,k) p^k (1-p)^(n-k)`, stable for large `n`.
    pub fn binom_pmf(&self, n: usize, k: usize, p: S) -> S {
        if k > n {
            return S::zero();
        }
        if p <= S::zero() {
            return if k == 0 { S::one() } else { S::zero() };
        }
        if p >= S::one() {
            return if k == n { S::one() } else { S::zero() };
        }
        let kf = S::from_count(k);
        let nkf = S::from_count(n - k);
        (self.ln_choose(n, k) + kf * p.ln() + nkf * (S::one() - p).ln()).exp()
    }
}

/// Convenience wrapper that sizes a table for a single evaluation.
pub fn hyge<S: Scalar>(n: usize, i: usize, j: usize, k: i64) -> S {
    LogFactorials::new(n).hyge(n, i, j, k)
}

/// Convenience wrapper that sizes a table for a single evaluation.
pub fn binom_pmf<S: Scalar>(n: usize, k: usize, p: S) -> S {
    LogFactorials::new(n).binom_pmf(n, k, p)
}
