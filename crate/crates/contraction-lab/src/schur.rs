//! Matrix polynomials in the Schur class, arcs of Schur-class functions between
//! contractions, and hyperbolic length bounds.
//!
//! Sup norms on the circle are certified from above with a Lipschitz
//! branch-and-bound: on an arc of half-width `h` around `θ`,
//! `|F(e^{iφ})| <= |F(e^{iθ})| + h Σ k |c_k|`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contraction::{classify, make_contraction, phase, Contraction, ContractionError};
use crate::numkit::{self, cmatrix_serde, compress, op_norm, CMatrix, Tolerances, ZERO};
use crate::shmulyan::{
    disc_radius, disc_radius_to, partial_isometry_part, shmulyan_equivalent, ShmulyanError,
};

/// Fraction of the disc radius used by an intermediate hop.
pub const HOP_FRACTION: f64 = 0.9;
pub const HOP_BUDGET: usize = 64;
/// Endpoint residual accepted in an arc certificate.
pub const ENDPOINT_TOL: f64 = 1e-8;
/// Width of the band around one reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-6;
/// Gap between certified sup-norm bounds at which refinement stops.
pub const SUP_GAP: f64 = 1e-7;
const MAX_EVALS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchurError {
    #[error("polynomial has no coefficients")]
    Empty,
    #[error("coefficient shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("not in the Schur class (sup norm at least {sup:.6})")]
    NotSchur { sup: f64 },
    #[error("candidate is not in the part of the partial isometry")]
    NotMember,
    #[error("not a partial isometry")]
    NotPartialIsometry,
    #[error(transparent)]
    Contraction(#[from] ContractionError),
    #[error(transparent)]
    Shmulyan(#[from] ShmulyanError),
}

/// `F(λ) = Σ coeffs[k] λ^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPoly {
    #[serde(with = "cmatrix_serde::vec")]
    coeffs: Vec<CMatrix>,
}

impl MatrixPoly {
    pub fn new(coeffs: Vec<CMatrix>) -> Result<Self, SchurError> {
        let first = coeffs.first().ok_or(SchurError::Empty)?.shape();
        if let Some(bad) = coeffs.iter().find(|c| c.shape() != first) {
            return Err(SchurError::ShapeMismatch(first, bad.shape()));
        }
        Ok(MatrixPoly { coeffs })
    }

    pub fn constant(m: CMatrix) -> Self {
        MatrixPoly { coeffs: vec![m] }
    }

    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> CMatrix {
        let (m, n) = self.shape();
        self.coeffs
            .iter()
            .rev()
            .fold(CMatrix::zeros(m, n), |acc, c| acc.map(|v| v * z) + c)
    }

    /// Lipschitz constant of `θ ↦ |F(e^{iθ})|`.
    pub fn lipschitz(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| k as f64 * op_norm(c)).sum()
    }

    fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> MatrixPoly {
        MatrixPoly {
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupMethod {
    Constant,
    ExactDiagonal,
    IsometricSplit,
    Lipschitz,
}

/// `lower <= sup |F| <= upper` on the unit circle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupNorm {
    pub lower: f64,
    pub upper: f64,
    pub method: SupMethod,
}

#[derive(Clone, Copy)]
struct Cell {
    upper: f64,
    mid: f64,
    half: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.upper.total_cmp(&other.upper) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper.total_cmp(&other.upper)
    }
}

/// Branch-and-bound on the circle. Stops once the bounds are `gap` apart, or
/// once `target` is decided either way.
fn lipschitz_sup(f: &MatrixPoly, grid: usize, gap: f64, target: Option<f64>, budget: usize) -> (f64, f64) {
    let lip = f.lipschitz();
    let norm_at = |theta: f64| op_norm(&f.eval(phase(theta)));
    let n = grid.max(16);
    let h = std::f64::consts::TAU / n as f64;
    let mut heap = BinaryHeap::with_capacity(2 * n);
    let mut lower = 0.0f64;
    for k in 0..n {
        let mid = (k as f64 + 0.5) * h;
        let v = norm_at(mid);
        lower = lower.max(v);
        heap.push(Cell {
            upper: v + lip * h / 2.0,
            mid,
            half: h / 2.0,
        });
    }
    let mut evals = n;
    while let Some(top) = heap.peek().copied() {
        if top.upper - lower <= gap || evals >= budget {
            return (lower, top.upper);
        }
        if let Some(t) = target {
            if top.upper <= t || lower > t {
                return (lower, top.upper);
            }
        }
        heap.pop();
        let half = top.half / 2.0;
        for mid in [top.mid - half, top.mid + half] {
            let v = norm_at(mid);
            evals += 1;
            lower = lower.max(v);
            heap.push(Cell {
                upper: v + lip * half,
                mid,
                half,
            });
        }
    }
    (lower, lower)
}

/// Exact sup for diagonal coefficients whose phases line up, entry by entry.
fn exact_diagonal(f: &MatrixPoly) -> Option<f64> {
    let (m, n) = f.shape();
    let off_zero = f
        .coeffs
        .iter()
        .all(|c| (0..m).all(|i| (0..n).all(|j| i == j || c[(i, j)] == ZERO)));
    if !off_zero {
        return None;
    }
    let mut best = 0.0f64;
    for i in 0..m.min(n) {
        let entries: Vec<Complex64> = f.coeffs.iter().map(|c| c[(i, i)]).collect();
        let total: f64 = entries.iter().map(|v| v.norm()).sum();
        let nz: Vec<usize> = (0..entries.len()).filter(|&k| entries[k] != ZERO).collect();
        let attained = match nz.as_slice() {
            [] | [_] => true,
            [k1, k2, ..] => {
                let span = (k2 - k1) as f64;
                let base = (entries[*k1].arg() - entries[*k2].arg()) / span;
                (0..k2 - k1).any(|j| {
                    let z = phase(base + std::f64::consts::TAU * j as f64 / span);
                    let v: Complex64 = entries.iter().rev().fold(ZERO, |acc, &c| acc * z + c);
                    v.norm() >= total * (1.0 - 1e-14)
                })
            }
        };
        if !attained {
            return None;
        }
        best = best.max(total);
    }
    Some(best)
}

/// Splits off the directions where `F(0)` is isometric, when every higher
/// coefficient vanishes there. Returns the remaining block, the norm of the
/// isometric block, and the size of everything dropped.
fn isometric_split(f: &MatrixPoly, tol: &Tolerances) -> Option<(MatrixPoly, f64, f64)> {
    let c0 = make_contraction(f.coeffs[0].clone(), tol).ok()?;
    let dd = c0.defect();
    if dd.null_dt.is_zero() {
        return None;
    }
    let (nin, nout) = (&dd.null_dt.basis, &dd.null_dtstar.basis);
    let (rin, rout) = (&dd.defect_space.basis, &dd.defect_space_star.basis);
    let mut dropped = 0.0;
    for (k, c) in f.coeffs.iter().enumerate() {
        let a = compress(c, rout, nin);
        let b = compress(c, nout, rin);
        dropped += op_norm(&a) + op_norm(&b);
        if k > 0 {
            dropped += op_norm(&compress(c, nout, nin));
        }
    }
    if dropped > 1e-9 {
        return None;
    }
    let iso = op_norm(&compress(&f.coeffs[0], nout, nin));
    Some((f.map(|c| compress(c, rout, rin)), iso, dropped))
}

fn sup_bounds(f: &MatrixPoly, target: Option<f64>, gap: f64, budget: usize, tol: &Tolerances) -> SupNorm {
    if f.shape().0 == 0 || f.shape().1 == 0 {
        return SupNorm {
            lower: 0.0,
            upper: 0.0,
            method: SupMethod::Constant,
        };
    }
    if f.degree() == 0 || f.coeffs[1..].iter().all(|c| op_norm(c) == 0.0) {
        let v = op_norm(&f.coeffs[0]);
        return SupNorm {
            lower: v,
            upper: v,
            method: SupMethod::Constant,
        };
    }
    if let Some(v) = exact_diagonal(f) {
        return SupNorm {
            lower: v,
            upper: v,
            method: SupMethod::ExactDiagonal,
        };
    }
    if let Some((rest, iso, dropped)) = isometric_split(f, tol) {
        let inner = sup_bounds(&rest, target, gap, budget, tol);
        return SupNorm {
            lower: inner.lower.max(iso - dropped),
            upper: inner.upper.max(iso) + dropped,
            method: SupMethod::IsometricSplit,
        };
    }
    let (lower, upper) = lipschitz_sup(f, tol.grid_points, gap, target, budget);
    SupNorm {
        lower,
        upper,
        method: SupMethod::Lipschitz,
    }
}

/// Certified bounds on `sup_{|λ|=1} |F(λ)|`.
pub fn schur_sup_norm(f: &MatrixPoly, tol: &Tolerances) -> SupNorm {
    sup_bounds(f, None, SUP_GAP, MAX_EVALS, tol)
}

/// A matrix polynomial certified to be contractive on the disc.
#[derive(Debug, Clone, Serialize)]
pub struct SchurPoly {
    pub poly: MatrixPoly,
    pub sup_norm: SupNorm,
}

impl SchurPoly {
    pub fn new(poly: MatrixPoly, tol: &Tolerances) -> Result<Self, SchurError> {
        let bound = 1.0 + tol.contraction_slack;
        let sup = sup_bounds(&poly, Some(bound), SUP_GAP, MAX_EVALS, tol);
        if sup.upper > bound {
            return Err(SchurError::NotSchur { sup: sup.lower });
        }
        Ok(SchurPoly { poly, sup_norm: sup })
    }
}

/// `n × n` block lower-triangular Toeplitz matrix with blocks `coeffs[i - j]`.
pub fn toeplitz_truncate(f: &MatrixPoly, n: usize) -> CMatrix {
    let (p, q) = f.shape();
    let mut out = CMatrix::zeros(n * p, n * q);
    for i in 0..n {
        for j in 0..=i {
            if let Some(c) = f.coeffs.get(i - j) {
                out.view_mut((i * p, j * q), (p, q)).copy_from(c);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Arcs

pub fn segment_radius(a: &Contraction, b: &Contraction, tol: &Tolerances) -> Result<f64, SchurError> {
    if a.shape() != b.shape() {
        return Err(SchurError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(disc_radius(a.matrix(), b.matrix(), tol.grid_points))
}

#[derive(Debug, Clone, Serialize)]
pub struct Arc {
    #[serde(flatten)]
    pub poly: MatrixPoly,
    pub lambda: f64,
    pub sup_norm: SupNorm,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArcCertificate {
    pub arcs: Vec<Arc>,
    /// Largest mismatch among `F_1(0) = T`, `F_j(λ_j) = F_{j+1}(0)`, `F_n(λ_n) = T'`.
    pub endpoint_residual: f64,
    /// `Σ atanh |λ_j|`.
    pub bound: f64,
}

impl ArcCertificate {
    fn from_arcs(arcs: Vec<Arc>, start: &CMatrix, end: &CMatrix) -> Self {
        let mut residual = 0.0f64;
        let mut cur = start.clone();
        for arc in &arcs {
            residual = residual.max(numkit::max_abs_diff(&arc.poly.coeffs[0], &cur));
            cur = arc.poly.eval(Complex64::new(arc.lambda, 0.0));
        }
        residual = residual.max(numkit::max_abs_diff(&cur, end));
        let bound = arcs.iter().map(|a| a.lambda.abs().atanh()).sum();
        ArcCertificate {
            arcs,
            endpoint_residual: residual,
            bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ArcResult {
    Connected(ArcCertificate),
    /// The endpoints are not Shmul'yan equivalent, so no chain exists.
    NotConnected { reason: String },
    /// Equivalent endpoints, but the chain did not close within the budget.
    BudgetExhausted { hops: usize, remaining: f64 },
}

/// Chains affine Schur-class arcs `F_j(λ) = C_j + λ s_j (T' - C_j)` from `t` to `t'`.
pub fn connect_arc(t: &Contraction, t_prime: &Contraction, tol: &Tolerances) -> Result<ArcResult, SchurError> {
    if t.shape() != t_prime.shape() {
        return Err(SchurError::ShapeMismatch(t.shape(), t_prime.shape()));
    }
    let eq = shmulyan_equivalent(t, t_prime, tol)?;
    if !eq.equivalent {
        return Ok(ArcResult::NotConnected {
            reason: "endpoints are not Shmul'yan equivalent".into(),
        });
    }
    let target = t_prime.matrix();
    let mut cur = t.matrix().clone();
    let mut arcs = Vec::new();
    let bound = 1.0 + tol.contraction_slack;
    loop {
        let m = target - &cur;
        let mn = op_norm(&m);
        if mn <= 1e-14 {
            break;
        }
        if arcs.len() == HOP_BUDGET {
            return Ok(ArcResult::BudgetExhausted {
                hops: arcs.len(),
                remaining: mn,
            });
        }
        let coarse = disc_radius_to(&cur, target, 64, 1e-3 / mn);
        let last = 1.0 / coarse <= HOP_FRACTION;
        // Final hops first try the full radius, which only cheap exact
        // certificates can confirm; intermediate hops stay clear of the edge.
        let attempts: Vec<(f64, usize)> = if last {
            let r = disc_radius(&cur, target, tol.grid_points);
            vec![(r, 4096), (r * (1.0 - 1e-4), MAX_EVALS)]
        } else {
            vec![(coarse * 0.95, MAX_EVALS)]
        };
        let mut found = None;
        let mut s = attempts[0].0;
        for (i, &(first, budget)) in attempts.iter().chain(std::iter::repeat(&(0.0, MAX_EVALS))).enumerate() {
            s = if i < attempts.len() { first } else { s * 0.95 };
            if s < 1e-8 || i > 200 {
                break;
            }
            let poly = MatrixPoly::new(vec![cur.clone(), m.scale(s)])?;
            let sup = sup_bounds(&poly, Some(bound), SUP_GAP, budget, tol);
            if sup.upper <= bound {
                found = Some(Arc {
                    poly,
                    lambda: (1.0 / s).min(HOP_FRACTION),
                    sup_norm: sup,
                });
                break;
            }
        }
        let Some(arc) = found else {
            return Ok(ArcResult::BudgetExhausted {
                hops: arcs.len(),
                remaining: mn,
            });
        };
        let step = arc.lambda * s;
        let next = if (step - 1.0).abs() <= 1e-12 {
            target.clone()
        } else {
            &cur + m.scale(step)
        };
        arcs.push(arc);
        cur = next;
        if numkit::max_abs_diff(&cur, target) == 0.0 {
            break;
        }
    }
    let cert = ArcCertificate::from_arcs(arcs, t.matrix(), target);
    if cert.endpoint_residual > ENDPOINT_TOL {
        return Ok(ArcResult::BudgetExhausted {
            hops: cert.arcs.len(),
            remaining: cert.endpoint_residual,
        });
    }
    Ok(ArcResult::Connected(cert))
}

/// Single arc `F(λ) = W + λ N_* (Z / √ρ) N*` from a partial isometry to a
/// member `W + N_* Z N*` of its part, with `ρ = |Z|` and `λ₀ = √ρ`.
pub fn partial_isometry_arc(w: &Contraction, t_prime: &Contraction, tol: &Tolerances) -> Result<ArcCertificate, SchurError> {
    let part = partial_isometry_part(w, tol).map_err(|e| match e {
        ShmulyanError::NotPartialIsometry => SchurError::NotPartialIsometry,
        other => SchurError::Shmulyan(other),
    })?;
    let member = part.membership_test(t_prime, tol)?;
    if !member.member {
        return Err(SchurError::NotMember);
    }
    let rho = member.z_norm;
    if rho == 0.0 {
        let arcs = if numkit::max_abs_diff(w.matrix(), t_prime.matrix()) == 0.0 {
            Vec::new()
        } else {
            let poly = MatrixPoly::new(vec![w.matrix().clone(), t_prime.matrix() - w.matrix()])?;
            let sup = schur_sup_norm(&poly, tol);
            vec![Arc { poly, lambda: 0.0, sup_norm: sup }]
        };
        return Ok(ArcCertificate::from_arcs(arcs, w.matrix(), t_prime.matrix()));
    }
    let lambda = rho.sqrt();
    let embedded = &part.cokernel.basis * member.z_block.unscale(lambda) * part.kernel.basis.adjoint();
    let poly = MatrixPoly::new(vec![w.matrix().clone(), embedded])?;
    let sp = SchurPoly::new(poly, tol)?;
    Ok(ArcCertificate::from_arcs(
        vec![Arc {
            poly: sp.poly,
            lambda,
            sup_norm: sp.sup_norm,
        }],
        w.matrix(),
        t_prime.matrix(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum KobayashiBound {
    Finite(f64),
    Infinite,
    /// Equivalent, but no chain was found.
    Unknown,
}

/// Upper bound on the hyperbolic chain distance between `t` and `t'`.
pub fn kobayashi_upper_bound(t: &Contraction, t_prime: &Contraction, tol: &Tolerances) -> Result<KobayashiBound, SchurError> {
    let mut best: Option<f64> = None;
    match connect_arc(t, t_prime, tol)? {
        ArcResult::NotConnected { .. } => return Ok(KobayashiBound::Infinite),
        ArcResult::Connected(c) => best = Some(c.bound),
        ArcResult::BudgetExhausted { .. } => {}
    }
    for (w, other) in [(t, t_prime), (t_prime, t)] {
        if classify(w, tol).partial_isometry {
            if let Ok(c) = partial_isometry_arc(w, other, tol) {
                best = Some(best.map_or(c.bound, |b| b.min(c.bound)));
            }
        }
    }
    Ok(best.map_or(KobayashiBound::Unknown, KobayashiBound::Finite))
}

// ---------------------------------------------------------------------------
// Functions dominated by a partial isometry

#[derive(Debug, Clone, Serialize)]
pub struct DeltaInfty {
    pub member: bool,
    /// Certified bounds on the sup norm of the defect part `F₀`.
    pub sup_norm: SupNorm,
    /// Largest deviation of a coefficient from `D_{W*} F₀ D_W` (plus `W` at degree zero).
    pub residual: f64,
    pub marginal: bool,
    #[serde(with = "cmatrix_serde::vec")]
    pub f0: Vec<CMatrix>,
}

/// Whether `F = W + D_{W*} F₀ D_W` with `F₀` analytic and `sup |F₀| < 1`.
pub fn delta_infty_member(w: &Contraction, f: &MatrixPoly, tol: &Tolerances) -> Result<DeltaInfty, SchurError> {
    if f.shape() != w.shape() {
        return Err(SchurError::ShapeMismatch(w.shape(), f.shape()));
    }
    let part = partial_isometry_part(w, tol).map_err(|e| match e {
        ShmulyanError::NotPartialIsometry => SchurError::NotPartialIsometry,
        other => SchurError::Shmulyan(other),
    })?;
    let (qin, qout) = (&part.kernel.basis, &part.cokernel.basis);
    let mut f0 = Vec::with_capacity(f.coeffs.len());
    let mut residual = 0.0f64;
    for (k, c) in f.coeffs.iter().enumerate() {
        let shifted = if k == 0 { c - w.matrix() } else { c.clone() };
        let block = compress(&shifted, qout, qin);
        residual = residual.max(op_norm(&(&shifted - qout * &block * qin.adjoint())));
        f0.push(block);
    }
    let poly0 = MatrixPoly { coeffs: f0.clone() };
    let sup = sup_bounds(&poly0, Some(1.0), 1e-8, MAX_EVALS, tol);
    let member = residual <= tol.identity_threshold(1.0) && sup.upper < 1.0;
    let marginal = (sup.upper - 1.0).abs() <= MARGINAL_BAND
        || (sup.lower - 1.0).abs() <= MARGINAL_BAND
        || (sup.lower < 1.0 && sup.upper >= 1.0);
    Ok(DeltaInfty {
        member,
        sup_norm: sup,
        residual,
        marginal,
        f0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{c as cx, diag_real, direct_sum, real_matrix, scalar};
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn k(m: CMatrix) -> Contraction {
        make_contraction(m, &tol()).unwrap()
    }

    fn poly(c: Vec<CMatrix>) -> MatrixPoly {
        MatrixPoly::new(c).unwrap()
    }

    fn jordan() -> CMatrix {
        real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    fn e21() -> CMatrix {
        real_matrix(2, 2, &[0.0, 0.0, 1.0, 0.0])
    }

    fn haar_unitary(seed: u64, d: usize) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(d, d, |_, _| {
            cx(rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal))
        });
        numkit::polar_unitary(&g)
    }

    #[test]
    fn sup_norm_examples() {
        let t = real_matrix(2, 2, &[0.3, 0.2, -0.1, 0.5]);
        let s = schur_sup_norm(&MatrixPoly::constant(t.clone()), &tol());
        assert_eq!(s.upper, op_norm(&t));
        let s = schur_sup_norm(&poly(vec![scalar(0.0), scalar(1.0)]), &tol());
        assert!((s.upper - 1.0).abs() < 1e-15);
        let s = schur_sup_norm(&poly(vec![scalar(0.3), scalar(0.4)]), &tol());
        assert!((s.upper - 0.7).abs() < 1e-15 && s.method == SupMethod::ExactDiagonal);
        // opposite phases still attain the coefficient sum, at λ = -1
        let s = schur_sup_norm(&poly(vec![scalar(0.3), scalar(-0.4)]), &tol());
        assert!((s.upper - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_bounds_bracket_the_grid() {
        let u = haar_unitary(4, 3);
        let v = haar_unitary(5, 3);
        let f = poly(vec![u.scale(0.3), v.scale(0.25), (&u * &v).scale(0.2)]);
        let s = schur_sup_norm(&f, &tol());
        assert_eq!(s.method, SupMethod::Lipschitz);
        let grid = (0..4096)
            .map(|j| op_norm(&f.eval(phase(std::f64::consts::TAU * j as f64 / 4096.0))))
            .fold(0.0, f64::max);
        assert!(s.lower <= s.upper && s.upper - s.lower <= SUP_GAP);
        assert!(grid <= s.upper + 1e-15 && grid >= s.lower - 1e-6);
    }

    #[test]
    fn toeplitz_examples() {
        let t = real_matrix(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let b = toeplitz_truncate(&MatrixPoly::constant(t.clone()), 3);
        let expected = direct_sum(&direct_sum(&t, &t), &t);
        assert_eq!(b, expected);
        let s = toeplitz_truncate(&poly(vec![scalar(0.0), scalar(1.0)]), 2);
        assert_eq!(s, real_matrix(2, 2, &[0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn segment_radius_examples() {
        let r = segment_radius(&k(scalar(0.0)), &k(scalar(0.5)), &tol()).unwrap();
        assert!((r - 2.0).abs() <= 1e-6);
        let t = k(scalar(0.3));
        assert!(segment_radius(&t, &t, &tol()).unwrap().is_infinite());
        let u = haar_unitary(9, 2);
        let a = k(direct_sum(&u, &scalar(0.0)));
        let b = k(direct_sum(&u, &scalar(0.5)));
        let r = segment_radius(&a, &b, &tol()).unwrap();
        assert!(r.is_finite() && r > 0.0);
        let edge = (a.matrix().scale(1.0 - r) + b.matrix().scale(r)).clone();
        assert!(op_norm(&edge) <= 1.0 + 1e-12);
    }

    #[test]
    fn scalar_arc_meets_the_hyperbolic_distance() {
        let res = connect_arc(&k(scalar(0.0)), &k(scalar(0.5)), &tol()).unwrap();
        let ArcResult::Connected(cert) = res else { panic!("{res:?}") };
        assert_eq!(cert.arcs.len(), 1);
        assert!(cert.bound <= 0.5f64.atanh() + 1e-6, "{}", cert.bound);
        assert!(cert.endpoint_residual <= 1e-12);

        let same = connect_arc(&k(scalar(0.4)), &k(scalar(0.4)), &tol()).unwrap();
        let ArcResult::Connected(cert) = same else { panic!() };
        assert!(cert.arcs.is_empty() && cert.bound == 0.0);

        let res = connect_arc(&k(scalar(1.0)), &k(scalar(0.5)), &tol()).unwrap();
        assert!(matches!(res, ArcResult::NotConnected { .. }));
        assert_eq!(
            kobayashi_upper_bound(&k(scalar(1.0)), &k(scalar(0.5)), &tol()).unwrap(),
            KobayashiBound::Infinite
        );
    }

    #[test]
    fn arcs_inside_a_partial_isometry_part() {
        let j = k(jordan());
        let member = k(jordan() + e21().scale(0.5));
        let res = connect_arc(&j, &member, &tol()).unwrap();
        let ArcResult::Connected(cert) = res else { panic!("{res:?}") };
        assert!(cert.arcs.iter().all(|a| a.sup_norm.upper <= 1.0 + 1e-10));
        assert!(cert.endpoint_residual <= ENDPOINT_TOL);

        let pi = partial_isometry_arc(&j, &member, &tol()).unwrap();
        assert!((pi.arcs[0].lambda - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((pi.bound - 0.5f64.sqrt().atanh()).abs() < 1e-12);
        assert!(pi.endpoint_residual < 1e-12);
        let back = partial_isometry_arc(&j, &j, &tol()).unwrap();
        assert_eq!(back.bound, 0.0);
        let edge = k(jordan() + e21());
        assert_eq!(partial_isometry_arc(&j, &edge, &tol()).unwrap_err(), SchurError::NotMember);

        let kb = kobayashi_upper_bound(&j, &member, &tol()).unwrap();
        let KobayashiBound::Finite(v) = kb else { panic!() };
        assert!(v <= pi.bound + 1e-12);
    }

    #[test]
    fn delta_infty_examples() {
        let zero = k(scalar(0.0));
        let id = poly(vec![scalar(0.0), scalar(1.0)]);
        let d = delta_infty_member(&zero, &id, &tol()).unwrap();
        assert!(!d.member);

        let j = k(jordan());
        let f = poly(vec![jordan(), e21().scale(0.5)]);
        let d = delta_infty_member(&j, &f, &tol()).unwrap();
        assert!(d.member && (d.sup_norm.upper - 0.5).abs() < 1e-12);

        let d = delta_infty_member(&j, &MatrixPoly::constant(jordan()), &tol()).unwrap();
        assert!(d.member && d.sup_norm.upper == 0.0);

        // off-defect parts must not move
        let bad = poly(vec![jordan(), real_matrix(2, 2, &[0.1, 0.0, 0.0, 0.0])]);
        assert!(!delta_infty_member(&j, &bad, &tol()).unwrap().member);
        assert_eq!(
            delta_infty_member(&k(scalar(0.5)), &MatrixPoly::constant(scalar(0.5)), &tol()).unwrap_err(),
            SchurError::NotPartialIsometry
        );
    }

    #[test]
    fn schur_poly_rejects_large_functions() {
        assert!(SchurPoly::new(poly(vec![scalar(0.6), scalar(0.5)]), &tol()).is_err());
        assert!(SchurPoly::new(poly(vec![diag_real(&[0.5, 0.2]), diag_real(&[0.5, 0.7])]), &tol()).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn toeplitz_norms_grow_to_the_sup(seed in 0u64..10_000) {
            let f = poly(vec![
                haar_unitary(seed, 2).scale(0.4),
                haar_unitary(seed + 1, 2).scale(0.3),
                haar_unitary(seed + 2, 2).scale(0.2),
            ]);
            let sup = schur_sup_norm(&f, &tol());
            let mut prev = 0.0;
            for n in 1..8 {
                let v = op_norm(&toeplitz_truncate(&f, n));
                prop_assert!(v >= prev - 1e-12);
                prop_assert!(v <= sup.upper + 1e-12);
                prev = v;
            }
        }

        #[test]
        fn delta_infty_separates_around_one(seed in 0u64..10_000, scale in prop::sample::select(vec![0.999, 1.001])) {
            let u = haar_unitary(seed, 3);
            let w = k(&u * direct_sum(&numkit::identity(1), &CMatrix::zeros(2, 2)) * haar_unitary(seed + 5, 3));
            let part = partial_isometry_part(&w, &tol()).unwrap();
            let (qin, qout) = (&part.kernel.basis, &part.cokernel.basis);
            let z = haar_unitary(seed + 9, 2);
            let f0 = vec![z.scale(0.5 * scale), z.scale(0.5 * scale)];
            let coeffs = vec![
                w.matrix() + qout * &f0[0] * qin.adjoint(),
                qout * &f0[1] * qin.adjoint(),
            ];
            let d = delta_infty_member(&w, &poly(coeffs), &tol()).unwrap();
            prop_assert_eq!(d.member, scale < 1.0);
        }
    }
}
