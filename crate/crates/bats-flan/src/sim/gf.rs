//! Arithmetic and dense linear algebra over GF(2^m), m in {1, 2, 4, 8}.
//!
//! Multiplication goes through log/antilog tables built once per field. The
//! reduction polynomials are fixed so that traces are reproducible bit for
//! bit: x^2+x+1 (0x7), x^4+x+1 (0x13) and the AES polynomial
//! x^8+x^4+x^3+x+1 (0x11B), with generators x, x and x+1 respectively.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GfError {
    #[error("unsupported field exponent m = {0}; must be 1, 2, 4 or 8")]
    UnsupportedField(u32),
    #[error("linear system is underdetermined (rank {rank} < unknowns {unknowns})")]
    Underdetermined { rank: usize, unknowns: usize },
    #[error("linear system is inconsistent")]
    Inconsistent,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// A binary extension field with log/antilog multiplication tables.
#[derive(Clone, Debug)]
pub struct GfField {
    m: u32,
    q: u16,
    exp: Vec<u8>,
    log: Vec<u8>,
}

fn mul_slow(mut a: u16, mut b: u16, poly: u16, m: u32) -> u16 {
    let mut acc = 0u16;
    let high = 1u16 << m;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a <<= 1;
        if a & high != 0 {
            a ^= poly;
        }
        b >>= 1;
    }
    acc
}

impl GfField {
    pub fn new(m: u32) -> Result<Self, GfError> {
        let (poly, generator): (u16, u16) = match m {
            1 => (0x3, 0x1),
            2 => (0x7, 0x2),
            4 => (0x13, 0x2),
            8 => (0x11B, 0x3),
            other => return Err(GfError::UnsupportedField(other)),
        };
        let q = 1u16 << m;
        let order = (q - 1) as usize;
        let mut exp = vec![0u8; 2 * order.max(1)];
        let mut log = vec![0u8; q as usize];
        let mut x = 1u16;
        for (i, e) in exp.iter_mut().enumerate().take(order) {
            *e = x as u8;
            log[x as usize] = i as u8;
            x = mul_slow(x, generator, poly, m);
        }
        assert_eq!(x, 1, "generator order must be q - 1");
        for i in order..2 * order.max(1) {
            exp[i] = exp[i - order];
        }
        Ok(Self { m, q, exp, log })
    }

    pub fn from_q(q: u64) -> Result<Self, GfError> {
        match q {
            2 => Self::new(1),
            4 => Self::new(2),
            16 => Self::new(4),
            256 => Self::new(8),
            _ => Err(GfError::UnsupportedField(q.trailing_zeros())),
        }
    }

    pub fn q(&self) -> u16 {
        self.q
    }

    pub fn bits(&self) -> u32 {
        self.m
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    #[inline]
    pub fn inv(&self, a: u8) -> u8 {
        assert!(a != 0, "zero has no inverse");
        if self.q == 2 {
            return 1;
        }
        let order = (self.q - 1) as usize;
        self.exp[order - self.log[a as usize] as usize]
    }

    #[inline]
    pub fn div(&self, a: u8, b: u8) -> u8 {
        self.mul(a, self.inv(b))
    }

    pub fn random_element<R: Rng>(&self, rng: &mut R) -> u8 {
        rng.gen_range(0..self.q) as u8
    }
}

/// Dense row-major matrix over a binary extension field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl FieldMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn random<R: Rng>(rows: usize, cols: usize, field: &GfField, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| field.random_element(rng))
            .collect();
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn remove_row(&mut self, r: usize) {
        let start = r * self.cols;
        self.data.drain(start..start + self.cols);
        self.rows -= 1;
    }

    pub fn matmul(&self, other: &Self, field: &GfField) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let prod = field.mul(a, other.get(l, j));
                    let cur = out.get(i, j);
                    out.set(i, j, field.add(cur, prod));
                }
            }
        }
        out
    }
}

/// Rank by Gaussian elimination on a working copy.
pub fn gf_rank(a: &FieldMatrix, field: &GfField) -> usize {
    let mut w = a.clone();
    let mut rank = 0usize;
    for col in 0..w.cols {
        if rank == w.rows {
            break;
        }
        let pivot = (rank..w.rows).find(|&r| w.get(r, col) != 0);
        let Some(pivot) = pivot else { continue };
        if pivot != rank {
            for c in 0..w.cols {
                let tmp = w.get(rank, c);
                w.set(rank, c, w.get(pivot, c));
                w.set(pivot, c, tmp);
            }
        }
        let inv = field.inv(w.get(rank, col));
        for c in col..w.cols {
            w.set(rank, c, field.mul(w.get(rank, c), inv));
        }
        for r in 0..w.rows {
            if r != rank && w.get(r, col) != 0 {
                let f = w.get(r, col);
                for c in col..w.cols {
                    let v = field.add(w.get(r, c), field.mul(f, w.get(rank, c)));
                    w.set(r, c, v);
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Solves `x * A = y` for a row vector `x` of `A.rows()` unknowns.
///
/// The system is consistent and uniquely solvable exactly when `A` has full
/// row rank; otherwise an error describes which way it failed.
pub fn gf_solve(a: &FieldMatrix, y: &[u8], field: &GfField) -> Result<Vec<u8>, GfError> {
    if y.len() != a.cols {
        return Err(GfError::Shape(format!(
            "rhs has {} entries, matrix has {} columns",
            y.len(),
            a.cols
        )));
    }
    let unknowns = a.rows;
    // transpose to solve A^T x^T = y^T by elimination on the augmented matrix
    let mut aug = FieldMatrix::zero(a.cols, unknowns + 1);
    for r in 0..a.cols {
        for c in 0..unknowns {
            aug.set(r, c, a.get(c, r));
        }
        aug.set(r, unknowns, y[r]);
    }
    let mut pivot_rows = Vec::with_capacity(unknowns);
    let mut rank = 0usize;
    for col in 0..unknowns {
        let pivot = (rank..aug.rows).find(|&r| aug.get(r, col) != 0);
        let Some(pivot) = pivot else { continue };
        if pivot != rank {
            for c in 0..=unknowns {
                let tmp = aug.get(rank, c);
                aug.set(rank, c, aug.get(pivot, c));
                aug.set(pivot, c, tmp);
            }
        }
        let inv = field.inv(aug.get(rank, col));
        for c in 0..=unknowns {
            aug.set(rank, c, field.mul(aug.get(rank, c), inv));
        }
        for r in 0..aug.rows {
            if r != rank && aug.get(r, col) != 0 {
                let f = aug.get(r, col);
                for c in 0..=unknowns {
                    let v = field.add(aug.get(r, c), field.mul(f, aug.get(rank, c)));
                    aug.set(r, c, v);
                }
            }
        }
        pivot_rows.push((rank, col));
        rank += 1;
    }
    if rank < unknowns {
        return Err(GfError::Underdetermined { rank, unknowns });
    }
    // any remaining nonzero rhs entry marks inconsistency
    for r in rank..aug.rows {
        if aug.get(r, unknowns) != 0 {
            return Err(GfError::Inconsistent);
        }
    }
    let mut x = vec![0u8; unknowns];
    for (row, col) in pivot_rows {
        x[col] = aug.get(row, unknowns);
    }
    Ok(x)
}
