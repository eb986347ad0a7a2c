//! Asymptotic limit `S_T = lim T*^n T^n` and the structure it determines.

use serde::Serialize;
use thiserror::Error;

use crate::contraction::{make_contraction, Contraction, ContractionError};
use crate::numkit::{self, compress, identity, op_norm, CMatrix, Subspace, Tolerances};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticError {
    #[error("asymptotic limit did not converge after {doublings} doublings (residual {residual:.3e})")]
    NoConvergence { doublings: u32, residual: f64 },
    #[error("asymptotic analysis needs a square matrix, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error(transparent)]
    Contraction(#[from] ContractionError),
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticLimit {
    #[serde(with = "numkit::cmatrix_serde")]
    pub s: CMatrix,
    /// `N(S_T)`: vectors whose orbit tends to zero.
    pub null_s: Subspace,
    /// `N(I - S_T)`: vectors whose orbit keeps its norm.
    pub fix_s: Subspace,
    /// Number of squarings; the limit is taken at `T^(2^doublings)`.
    pub doublings: u32,
    /// Norm of the last change between consecutive doublings.
    pub residual: f64,
    pub idempotent: bool,
    /// Eigenvalues of `S_T` within a decade of either rank cutoff.
    pub indeterminate: usize,
}

fn require_square(c: &Contraction) -> Result<usize, AsymptoticError> {
    let (m, n) = c.shape();
    if m != n {
        return Err(AsymptoticError::NotSquare(m, n));
    }
    Ok(n)
}

/// Computes `S_T` along the subsequence `n = 2^k`, which is monotone and has
/// the same limit as the full sequence.
pub fn asymptotic_limit(c: &Contraction, tol: &Tolerances) -> Result<AsymptoticLimit, AsymptoticError> {
    require_square(c)?;
    let mut p = c.matrix().clone();
    let mut s = p.adjoint() * &p;
    let mut residual = f64::INFINITY;
    let mut doublings = 0;
    for k in 1..=64u32 {
        p = &p * &p;
        let next = numkit::hermitian_part(&(p.adjoint() * &p));
        if !numkit::is_finite(&next) {
            return Err(AsymptoticError::NoConvergence { doublings: k, residual: f64::INFINITY });
        }
        residual = op_norm(&(&next - &s));
        s = next;
        doublings = k;
        if residual < tol.conv_tol {
            break;
        }
    }
    if residual >= tol.conv_tol {
        return Err(AsymptoticError::NoConvergence { doublings, residual });
    }
    Ok(split_limit(s, doublings, residual, tol))
}

fn split_limit(s: CMatrix, doublings: u32, residual: f64, tol: &Tolerances) -> AsymptoticLimit {
    let n = s.nrows();
    let (vals, vecs) = numkit::hermitian_eig(&s);
    // S_T has norm 0 or 1, so an absolute cutoff is the relevant one.
    let cut = tol.rank_rtol;
    let pick = |pred: &dyn Fn(f64) -> bool| {
        let idx: Vec<usize> = (0..n).filter(|&i| pred(vals[i])).collect();
        Subspace::from_orthonormal(CMatrix::from_fn(n, idx.len(), |i, j| vecs[(i, idx[j])]))
    };
    let null_s = pick(&|l| l <= cut);
    let fix_s = pick(&|l| l >= 1.0 - cut);
    let idempotent = null_s.dim() + fix_s.dim() == n;
    let near = |x: f64| x > cut / 10.0 && x < cut * 10.0;
    let indeterminate = vals.iter().filter(|&&l| near(l) || near(1.0 - l)).count();
    AsymptoticLimit {
        s,
        null_s,
        fix_s,
        doublings,
        residual,
        idempotent,
        indeterminate,
    }
}

/// Upper triangular form `T = [[Q, R], [0, W]]` over `N(S_T) (+) N(S_T)^perp`.
#[derive(Debug, Clone, Serialize)]
pub struct Triangulation {
    pub stable: Subspace,
    pub persistent: Subspace,
    #[serde(with = "numkit::cmatrix_serde")]
    pub q_block: CMatrix,
    #[serde(with = "numkit::cmatrix_serde")]
    pub r_block: CMatrix,
    #[serde(with = "numkit::cmatrix_serde")]
    pub w_block: CMatrix,
    /// Norm of the block below the diagonal (zero by invariance).
    pub lower_residual: f64,
    /// `Q^n -> 0`, checked by computing the limit of the block.
    pub q_vanishes: bool,
    /// `N(S_W) = {0}`, checked the same way.
    pub w_persistent: bool,
}

pub fn canonical_triangulation(c: &Contraction, tol: &Tolerances) -> Result<Triangulation, AsymptoticError> {
    let lim = asymptotic_limit(c, tol)?;
    let t = c.matrix();
    let stable = lim.null_s.clone();
    let persistent = stable.complement();
    let q_block = compress(t, &stable.basis, &stable.basis);
    let r_block = compress(t, &stable.basis, &persistent.basis);
    let w_block = compress(t, &persistent.basis, &persistent.basis);
    let lower_residual = op_norm(&compress(t, &persistent.basis, &stable.basis));
    let block_limit = |b: &CMatrix| -> Result<Option<AsymptoticLimit>, AsymptoticError> {
        if b.is_empty() {
            return Ok(None);
        }
        let bc = make_contraction(b.clone(), tol)?;
        Ok(Some(asymptotic_limit(&bc, tol)?))
    };
    let q_vanishes = block_limit(&q_block)?.is_none_or(|l| l.fix_s.is_zero() && l.null_s.dim() == q_block.nrows());
    let w_persistent = block_limit(&w_block)?.is_none_or(|l| l.null_s.is_zero());
    Ok(Triangulation {
        stable,
        persistent,
        q_block,
        r_block,
        w_block,
        lower_residual,
        q_vanishes,
        w_persistent,
    })
}

/// Largest subspace reducing `T` on which `T` is isometric: the orthogonal
/// complement of the span of `T^n (I - T*^j T^j)` for `0 <= n <= d`, `1 <= j <= d`.
pub fn reducing_isometric_part(c: &Contraction, tol: &Tolerances) -> Result<Subspace, AsymptoticError> {
    let d = require_square(c)?;
    let t = c.matrix();
    let tpow = numkit::powers(t, d + 1);
    let mut gens = CMatrix::zeros(d, (d + 1) * d * d);
    let mut col = 0;
    for j in 1..=d {
        let defect = identity(d) - tpow[j].adjoint() * &tpow[j];
        for tn in &tpow {
            gens.columns_mut(col, d).copy_from(&(tn * &defect));
            col += d;
        }
    }
    let spread = Subspace::span(&gens, tol.rank_rtol * op_norm(&gens).max(1.0));
    Ok(spread.complement())
}

/// Largest reducing subspace on which `T` is unitary: `N(I - S_T) ∩ N(I - S_T*)`.
pub fn reducing_unitary_part(c: &Contraction, tol: &Tolerances) -> Result<Subspace, AsymptoticError> {
    let a = asymptotic_limit(c, tol)?;
    let b = asymptotic_limit(&c.adjoint(), tol)?;
    Ok(a.fix_s.intersection(&b.fix_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AsymptoticClass {
    /// `T^n -> 0` strongly.
    pub c0_dot: bool,
    /// `T^n h` does not tend to zero for any `h != 0`.
    pub c1_dot: bool,
    /// `T*^n -> 0` strongly.
    pub c_dot0: bool,
    /// `T*^n h` does not tend to zero for any `h != 0`.
    pub c_dot1: bool,
}

impl AsymptoticClass {
    pub fn label(&self) -> &'static str {
        match (self.c0_dot, self.c1_dot, self.c_dot0, self.c_dot1) {
            (true, _, true, _) => "C00",
            (true, _, _, true) => "C01",
            (_, true, true, _) => "C10",
            (_, true, _, true) => "C11",
            _ => "mixed",
        }
    }
}

pub fn class_of(c: &Contraction, tol: &Tolerances) -> Result<AsymptoticClass, AsymptoticError> {
    let n = require_square(c)?;
    let a = asymptotic_limit(c, tol)?;
    let b = asymptotic_limit(&c.adjoint(), tol)?;
    Ok(AsymptoticClass {
        c0_dot: a.null_s.dim() == n,
        c1_dot: a.null_s.is_zero(),
        c_dot0: b.null_s.dim() == n,
        c_dot1: b.null_s.is_zero(),
    })
}
