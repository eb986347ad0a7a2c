//! Shmul'yan domination `B ≺ A`, meaning `B = A + D_{A*} X D_A` for some `X`.
//!
//! Three routes decide domination independently:
//!
//! * range factorization: solve `B - A = D_{A*} X D_A` two-sided;
//! * form factorization: solve `I - B*A = D_A Y D_A`;
//! * disc test: the largest `r` with `|(1 - e) A + e B| <= 1` on `|e| = r`.
//!
//! The verdict records all three and whether they agree.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::asymptotic::{asymptotic_limit, AsymptoticError};
use crate::contraction::{
    classify, make_contraction, nearest_part_partial_isometry, Contraction, ContractionError,
};
use crate::numkit::{
    self, compress, cvec_serde, identity, op_norm, CMatrix, Subspace, Tolerances,
};

/// Excess over one tolerated by the disc test. Tighter than
/// `contraction_slack` so that second-order growth at isometric directions
/// is still visible at radius `DISC_FLOOR`.
pub const DISC_NORM_SLACK: f64 = 1e-13;
/// Smallest disc radius read as "domination holds".
pub const DISC_FLOOR: f64 = 1e-4;
/// Bisection resolution for disc radii.
pub const DISC_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShmulyanError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("not a partial isometry")]
    NotPartialIsometry,
    #[error("not a quasi-isometry")]
    NotQuasiIsometry,
    #[error("incompatible splits: {0}")]
    IncompatibleSplits(String),
    #[error(transparent)]
    Contraction(#[from] ContractionError),
    #[error(transparent)]
    Asymptotic(#[from] AsymptoticError),
}

fn same_shape(a: &Contraction, b: &Contraction) -> Result<(), ShmulyanError> {
    if a.shape() != b.shape() {
        return Err(ShmulyanError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

/// Pseudo-inverse of a defect operator, built on its (exactly known) support.
pub(crate) fn defect_pinv(d: &CMatrix, support: &Subspace) -> CMatrix {
    let q = &support.basis;
    if q.ncols() == 0 {
        return CMatrix::zeros(d.ncols(), d.nrows());
    }
    let core = compress(d, q, q);
    let inv = numkit::hermitian_part(&core)
        .try_inverse()
        .expect("defect operator is invertible on its support");
    q * inv * q.adjoint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSide {
    /// A vector in `N(D_A)` moved by `B - A`.
    Kernel,
    /// A vector in `N(D_{A*})` not annihilated by `(B - A)*`.
    Cokernel,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationWitness {
    pub side: WitnessSide,
    #[serde(with = "cvec_serde")]
    pub vector: Vec<Complex64>,
    /// `|(B - A) h|` (kernel side) or `|(B - A)* h|` (cokernel side).
    pub escape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RouteVerdicts {
    pub range_factor: bool,
    pub form_factor: bool,
    pub disc: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShmulyanVerdict {
    pub dominates: bool,
    #[serde(with = "numkit::cmatrix_serde::option")]
    pub x_solution: Option<CMatrix>,
    #[serde(with = "numkit::cmatrix_serde::option")]
    pub y_solution: Option<CMatrix>,
    pub routes: RouteVerdicts,
    pub route_agreement: bool,
    pub range_residual: f64,
    pub form_residual: f64,
    #[serde(serialize_with = "numkit::ser_extended_f64")]
    pub radius: f64,
    pub witness: Option<DominationWitness>,
    /// A factorization residual lies within a decade of its threshold.
    pub marginal: bool,
}

fn factor_bound(lhs: &CMatrix, tol: &Tolerances) -> f64 {
    10.0 * tol.rank_rtol * op_norm(lhs).max(1.0)
}

fn near_threshold(residual: f64, bound: f64) -> bool {
    residual > bound / 10.0 && residual < bound * 10.0
}

/// Decides `b ≺ a` (`b` is Shmul'yan dominated by `a`).
pub fn shmulyan_dominates(
    b: &Contraction,
    a: &Contraction,
    tol: &Tolerances,
) -> Result<ShmulyanVerdict, ShmulyanError> {
    same_shape(a, b)?;
    let da = a.defect();
    let am = a.matrix();
    let bm = b.matrix();
    let diff = bm - am;

    // range factorization
    let pa = defect_pinv(&da.d_t, &da.defect_space);
    let pas = defect_pinv(&da.d_tstar, &da.defect_space_star);
    let x = &pas * &diff * &pa;
    let range_residual = op_norm(&(&diff - &da.d_tstar * &x * &da.d_t));
    let range_bound = factor_bound(&diff, tol);
    let range_ok = range_residual <= range_bound;

    // form factorization
    let form = identity(am.ncols()) - bm.adjoint() * am;
    let y = &pa * &form * &pa;
    let form_residual = op_norm(&(&form - &da.d_t * &y * &da.d_t));
    let form_bound = factor_bound(&form, tol);
    let form_ok = form_residual <= form_bound;

    // disc
    let radius = disc_radius(am, bm, tol.grid_points);
    let disc_ok = radius >= DISC_FLOOR;

    let witness = if range_ok {
        None
    } else {
        Some(escape_witness(&diff, &da.null_dt, &da.null_dtstar))
    };
    let marginal = near_threshold(range_residual, range_bound) || near_threshold(form_residual, form_bound);
    Ok(ShmulyanVerdict {
        dominates: range_ok,
        x_solution: range_ok.then_some(x),
        y_solution: form_ok.then_some(y),
        routes: RouteVerdicts {
            range_factor: range_ok,
            form_factor: form_ok,
            disc: disc_ok,
        },
        route_agreement: range_ok == form_ok && range_ok == disc_ok,
        range_residual,
        form_residual,
        radius,
        witness,
        marginal,
    })
}

fn escape_witness(diff: &CMatrix, null_in: &Subspace, null_out: &Subspace) -> DominationWitness {
    let right = diff * &null_in.basis;
    let left = diff.adjoint() * &null_out.basis;
    let (rn, ln) = (op_norm(&right), op_norm(&left));
    if rn >= ln {
        let v = numkit::svd(&right).v.column(0).into_owned();
        DominationWitness {
            side: WitnessSide::Kernel,
            vector: (&null_in.basis * v).iter().copied().collect(),
            escape: rn,
        }
    } else {
        let v = numkit::svd(&left).v.column(0).into_owned();
        DominationWitness {
            side: WitnessSide::Cokernel,
            vector: (&null_out.basis * v).iter().copied().collect(),
            escape: ln,
        }
    }
}

// ---------------------------------------------------------------------------
// Disc test

/// Gram pieces of `K(e) = a + e m`, on the smaller side.
struct Pencil {
    g0: CMatrix,
    g1: CMatrix,
    g2: CMatrix,
}

impl Pencil {
    fn new(a: &CMatrix, m: &CMatrix) -> Self {
        if a.nrows() < a.ncols() {
            // K K* = a a* + conj(e) a m* + e m a* + |e|^2 m m*
            Pencil {
                g0: a * a.adjoint(),
                g1: m * a.adjoint(),
                g2: m * m.adjoint(),
            }
        } else {
            // K* K = a* a + e a* m + conj(e) m* a + |e|^2 m* m
            Pencil {
                g0: a.adjoint() * a,
                g1: a.adjoint() * m,
                g2: m.adjoint() * m,
            }
        }
    }

    fn circle_holds(&self, r: f64, grid: usize, bound: f64) -> bool {
        let n = self.g0.nrows();
        let base = identity(n).scale(bound * bound) - &self.g0 - self.g2.scale(r * r);
        let step = std::f64::consts::TAU / grid as f64;
        (0..grid).all(|k| {
            let z = crate::contraction::phase(k as f64 * step) * r;
            let cross = self.g1.map(|v| v * z);
            let h = &base - &cross - cross.adjoint();
            numkit::is_positive_definite(&h)
        })
    }
}

/// Largest `r` (to `DISC_RESOLUTION`) such that `|(1 - e) a + e b| <= 1`
/// at `grid` equally spaced points of `|e| = r`. Infinite when `a == b`.
pub fn disc_radius(a: &CMatrix, b: &CMatrix, grid: usize) -> f64 {
    disc_radius_to(a, b, grid, DISC_RESOLUTION)
}

/// `disc_radius` with a caller-chosen bisection resolution.
pub fn disc_radius_to(a: &CMatrix, b: &CMatrix, grid: usize, resolution: f64) -> f64 {
    let m = b - a;
    let mn = op_norm(&m);
    if mn == 0.0 {
        return f64::INFINITY;
    }
    let pencil = Pencil::new(a, &m);
    let bound = 1.0 + DISC_NORM_SLACK;
    let mut lo = 0.0;
    let mut hi = 2.0 / mn + 1.0;
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if pencil.circle_holds(mid, grid, bound) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

// ---------------------------------------------------------------------------
// Equivalence

#[derive(Debug, Clone, Serialize)]
pub struct ShmulyanEquivalence {
    pub equivalent: bool,
    /// `b ≺ a`.
    pub forward: ShmulyanVerdict,
    /// `a ≺ b`.
    pub backward: ShmulyanVerdict,
    /// `B = A + D_{B*} X D_A`.
    #[serde(with = "numkit::cmatrix_serde::option")]
    pub x_tilde: Option<CMatrix>,
    /// `I - A*B = D_A Y D_B`.
    #[serde(with = "numkit::cmatrix_serde::option")]
    pub y_tilde: Option<CMatrix>,
    pub tilde_residual: f64,
}

pub fn shmulyan_equivalent(
    a: &Contraction,
    b: &Contraction,
    tol: &Tolerances,
) -> Result<ShmulyanEquivalence, ShmulyanError> {
    let forward = shmulyan_dominates(b, a, tol)?;
    let backward = shmulyan_dominates(a, b, tol)?;
    let equivalent = forward.dominates && backward.dominates;
    let (mut x_tilde, mut y_tilde, mut tilde_residual) = (None, None, 0.0);
    if equivalent {
        let (da, db) = (a.defect(), b.defect());
        let diff = b.matrix() - a.matrix();
        let pa = defect_pinv(&da.d_t, &da.defect_space);
        let pbs = defect_pinv(&db.d_tstar, &db.defect_space_star);
        let pb = defect_pinv(&db.d_t, &db.defect_space);
        let x = &pbs * &diff * &pa;
        let form = identity(a.shape().1) - a.matrix().adjoint() * b.matrix();
        let y = &pa * &form * &pb;
        let rx = op_norm(&(&diff - &db.d_tstar * &x * &da.d_t));
        let ry = op_norm(&(&form - &da.d_t * &y * &db.d_t));
        tilde_residual = rx.max(ry);
        x_tilde = Some(x);
        y_tilde = Some(y);
    }
    Ok(ShmulyanEquivalence {
        equivalent,
        forward,
        backward,
        x_tilde,
        y_tilde,
        tilde_residual,
    })
}

// ---------------------------------------------------------------------------
// Partial isometries

/// `W = U (+) 0` from `R(W*) (+) N(W)` to `R(W) (+) N(W*)`.
#[derive(Debug, Clone, Serialize)]
pub struct PartialIsometryPart {
    pub w: Contraction,
    pub initial: Subspace,
    pub final_space: Subspace,
    pub kernel: Subspace,
    pub cokernel: Subspace,
    #[serde(with = "numkit::cmatrix_serde")]
    pub u_block: CMatrix,
}

pub fn partial_isometry_part(w: &Contraction, tol: &Tolerances) -> Result<PartialIsometryPart, ShmulyanError> {
    if !classify(w, tol).partial_isometry {
        return Err(ShmulyanError::NotPartialIsometry);
    }
    let dd = w.defect();
    Ok(PartialIsometryPart {
        w: w.clone(),
        initial: dd.null_dt.clone(),
        final_space: dd.null_dtstar.clone(),
        kernel: dd.defect_space.clone(),
        cokernel: dd.defect_space_star.clone(),
        u_block: compress(w.matrix(), &dd.null_dtstar.basis, &dd.null_dt.basis),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Membership {
    pub member: bool,
    /// Block of the candidate from `N(W)` to `N(W*)`.
    #[serde(with = "numkit::cmatrix_serde")]
    pub z_block: CMatrix,
    pub z_norm: f64,
    /// Deviation from the form `U (+) Z`.
    pub residual: f64,
}

impl PartialIsometryPart {
    /// Whether `c = U (+) Z` with `|Z| < 1` in the splitting of `W`.
    pub fn membership_test(&self, c: &Contraction, tol: &Tolerances) -> Result<Membership, ShmulyanError> {
        same_shape(&self.w, c)?;
        let cm = c.matrix();
        let u = compress(cm, &self.final_space.basis, &self.initial.basis);
        let upper = compress(cm, &self.final_space.basis, &self.kernel.basis);
        let lower = compress(cm, &self.cokernel.basis, &self.initial.basis);
        let residual = op_norm(&(&u - &self.u_block))
            .max(op_norm(&upper))
            .max(op_norm(&lower));
        let z_block = compress(cm, &self.cokernel.basis, &self.kernel.basis);
        let z_norm = op_norm(&z_block);
        let member = residual <= tol.identity_threshold(1.0) && z_norm < 1.0 - tol.contraction_slack;
        Ok(Membership {
            member,
            z_block,
            z_norm,
            residual,
        })
    }
}

// ---------------------------------------------------------------------------
// Column criterion

/// Criterion for operators whose columns over a splitting of the domain
/// have orthogonal ranges.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnCriterion {
    /// Norms of `C0*C1`, `C0'*C1'`, `C0*C1'`, `C1*C0'`.
    pub orthogonality: [f64; 4],
    pub conditions_hold: bool,
    pub first_columns_equivalent: bool,
    pub second_columns_equivalent: bool,
    /// Both column pairs equivalent (meaningful when the conditions hold).
    pub equivalent: bool,
}

pub fn column_criterion(
    t: &Contraction,
    t_prime: &Contraction,
    domain_split: &Subspace,
    codomain_split: &Subspace,
    tol: &Tolerances,
) -> Result<ColumnCriterion, ShmulyanError> {
    same_shape(t, t_prime)?;
    let (m, n) = t.shape();
    if domain_split.ambient != n || codomain_split.ambient != m {
        return Err(ShmulyanError::IncompatibleSplits(format!(
            "splits live in C^{} and C^{}, operator is {m}x{n}",
            domain_split.ambient, codomain_split.ambient
        )));
    }
    if domain_split.is_zero() || domain_split.dim() == n {
        return Err(ShmulyanError::IncompatibleSplits("domain split is trivial".into()));
    }
    let e0 = &domain_split.basis;
    let e1 = domain_split.complement().basis;
    let c0 = t.matrix() * e0;
    let c1 = t.matrix() * &e1;
    let c0p = t_prime.matrix() * e0;
    let c1p = t_prime.matrix() * &e1;
    let orthogonality = [
        op_norm(&(c0.adjoint() * &c1)),
        op_norm(&(c0p.adjoint() * &c1p)),
        op_norm(&(c0.adjoint() * &c1p)),
        op_norm(&(c1.adjoint() * &c0p)),
    ];
    let thr = tol.identity_threshold(1.0);
    let conditions_hold = orthogonality.iter().all(|&r| r <= thr);
    let col = |x: CMatrix| make_contraction(x, tol);
    let first = shmulyan_equivalent(&col(c0)?, &col(c0p)?, tol)?.equivalent;
    let second = shmulyan_equivalent(&col(c1)?, &col(c1p)?, tol)?.equivalent;
    Ok(ColumnCriterion {
        orthogonality,
        conditions_hold,
        first_columns_equivalent: first,
        second_columns_equivalent: second,
        equivalent: first && second,
    })
}

// ---------------------------------------------------------------------------
// Quasi-isometries

/// Criterion for equivalence with a quasi-isometry, over
/// `H0 = N(I - S_T)` and its complement, where `T = [[V, R], [0, 0]]`.
#[derive(Debug, Clone, Serialize)]
pub struct QuasiIsometryCriterion {
    /// `H0` is invariant for the candidate.
    pub invariance: bool,
    /// `R(Q') ⊂ R(D_R)` and `R(D_R) = R(D_{T'})`.
    pub range_inclusion: bool,
    /// `V' ≺ V` (which forces `V' = V`).
    pub v_dom: bool,
    /// `R' ≺ R`.
    pub r_dom: bool,
    pub result: bool,
    pub invariance_residual: f64,
    /// Residual of `R - R' = D_{R*} X D_{T'}` on the complement of `H0`.
    pub mixed_factor_residual: f64,
}

pub fn quasi_isometry_criterion(
    t: &Contraction,
    t_prime: &Contraction,
    tol: &Tolerances,
) -> Result<QuasiIsometryCriterion, ShmulyanError> {
    same_shape(t, t_prime)?;
    if !t.is_square() || !classify(t, tol).quasi_isometry {
        return Err(ShmulyanError::NotQuasiIsometry);
    }
    let lim = asymptotic_limit(t, tol)?;
    let h0 = lim.fix_s.clone();
    let h1 = h0.complement();
    let tm = t.matrix();
    let tp = t_prime.matrix();
    let thr = tol.identity_threshold(1.0);

    let invariance_residual = op_norm(&compress(tp, &h1.basis, &h0.basis));
    let invariance = invariance_residual <= thr;

    let v = compress(tm, &h0.basis, &h0.basis);
    let r = compress(tm, &h0.basis, &h1.basis);
    let vp = compress(tp, &h0.basis, &h0.basis);
    let rp = compress(tp, &h0.basis, &h1.basis);
    let qp = compress(tp, &h1.basis, &h1.basis);

    // Ranges on the complement of H0, written in the basis of h1.
    let (range_inclusion, mixed_factor_residual, r_dom) = if h1.is_zero() {
        (true, 0.0, true)
    } else if h0.is_zero() {
        // No isometric part: the criterion degenerates to the column Q'.
        let dtp = t_prime.defect();
        let whole = Subspace::full(h1.dim());
        let rq = numkit::range_of(&qp, tol);
        let incl = rq.is_subspace_of(&dtp.defect_space) && whole.equals(&dtp.defect_space);
        (incl, 0.0, true)
    } else {
        let rc = make_contraction(r.clone(), tol)?;
        let rpc = make_contraction(rp.clone(), tol)?;
        let dr = rc.defect();
        let dtp = t_prime.defect();
        // R(D_{T'}) pulled back into the coordinates of h1.
        let dtp_local = compress(&dtp.d_t, &h1.basis, &h1.basis);
        let range_dtp = numkit::range_of(&dtp_local, tol);
        let leak = op_norm(&compress(&dtp.d_t, &h0.basis, &h1.basis));
        let range_q = numkit::range_of(&qp, tol);
        let incl = leak <= thr
            && dr.defect_space.equals(&range_dtp)
            && range_q.is_subspace_of(&dr.defect_space);
        let p_rs = defect_pinv(&dr.d_tstar, &dr.defect_space_star);
        let p_dtp = numkit::pinv(&dtp_local, tol);
        let x0 = &p_rs * (&r - &rp) * &p_dtp;
        let mixed = op_norm(&(&r - &rp - &dr.d_tstar * &x0 * &dtp_local));
        let r_dom = shmulyan_dominates(&rpc, &rc, tol)?.dominates;
        (incl, mixed, r_dom)
    };
    let v_dom = if h0.is_zero() {
        true
    } else {
        let vc = make_contraction(v, tol)?;
        let vpc = make_contraction(vp, tol)?;
        shmulyan_dominates(&vpc, &vc, tol)?.dominates
    };
    Ok(QuasiIsometryCriterion {
        invariance,
        range_inclusion,
        v_dom,
        r_dom,
        result: invariance && range_inclusion && v_dom && r_dom,
        invariance_residual,
        mixed_factor_residual,
    })
}

// ---------------------------------------------------------------------------
// Structure of the persistent part

fn persistent_blocks(t: &Contraction, tol: &Tolerances) -> Result<(Subspace, Subspace, CMatrix, CMatrix), ShmulyanError> {
    let lim = asymptotic_limit(t, tol)?;
    let h0 = lim.fix_s.clone();
    let h1 = h0.complement();
    let r = compress(t.matrix(), &h0.basis, &h1.basis);
    let q = compress(t.matrix(), &h1.basis, &h1.basis);
    Ok((h0, h1, r, q))
}

/// Three equivalent conditions on where the isometric directions of `T` sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IsometricKernelCheck {
    /// `N(D_T)` is invariant for `T`.
    pub kernel_invariant: bool,
    /// `N(D_{T*}) ⊂ N(D_T)`.
    pub cokernel_inside: bool,
    /// The compression of `T` to `N(I - S_T)^perp` is pure.
    pub compression_pure: bool,
    pub agree: bool,
}

pub fn isometric_kernel_check(t: &Contraction, tol: &Tolerances) -> Result<IsometricKernelCheck, ShmulyanError> {
    if !t.is_square() {
        return Err(ShmulyanError::ShapeMismatch(t.shape(), (t.shape().1, t.shape().1)));
    }
    let dd = t.defect();
    let thr = tol.identity_threshold(1.0);
    let kernel_invariant = dd.null_dt.is_invariant_under(t.matrix(), thr);
    let cokernel_inside = dd.null_dtstar.is_subspace_of(&dd.null_dt);
    let (_, _, _, q) = persistent_blocks(t, tol)?;
    let compression_pure = q.is_empty() || make_contraction(q, tol)?.defect().null_dt.is_zero();
    Ok(IsometricKernelCheck {
        kernel_invariant,
        cokernel_inside,
        compression_pure,
        agree: kernel_invariant == cokernel_inside && cokernel_inside == compression_pure,
    })
}

/// Partial isometry in the Harnack part versus the column norm condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnNormCheck {
    /// The nearest partial isometry is equivalent to `T` and the compression is pure.
    pub cond_i: bool,
    /// `|R*R + Q*Q| < 1`.
    pub cond_ii: bool,
    pub column_norm: f64,
    pub agree: bool,
}

pub fn column_norm_check(t: &Contraction, tol: &Tolerances) -> Result<ColumnNormCheck, ShmulyanError> {
    let (_, _, r, q) = persistent_blocks(t, tol)?;
    let column_norm = if q.is_empty() {
        0.0
    } else {
        op_norm(&(r.adjoint() * &r + q.adjoint() * &q))
    };
    let cond_ii = column_norm < 1.0 - tol.contraction_slack;
    let w = nearest_part_partial_isometry(t, tol)?;
    let in_part = shmulyan_equivalent(&w, t, tol)?.equivalent;
    let pure = q.is_empty() || make_contraction(q, tol)?.defect().null_dt.is_zero();
    let cond_i = in_part && pure;
    Ok(ColumnNormCheck {
        cond_i,
        cond_ii,
        column_norm,
        agree: cond_i == cond_ii,
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

    fn jordan() -> CMatrix {
        real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    fn arb_strict(n: usize) -> impl Strategy<Value = CMatrix> {
        (0.05f64..0.95, proptest::collection::vec(-1.0f64..1.0, 2 * n * n)).prop_map(move |(s, v)| {
            let m = CMatrix::from_fn(n, n, |i, j| cx(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]));
            let norm = op_norm(&m).max(1e-12);
            m.scale(s / norm)
        })
    }

    #[test]
    fn scalar_examples() {
        let v = shmulyan_dominates(&k(scalar(0.5)), &k(scalar(1.0)), &tol()).unwrap();
        assert!(!v.dominates && v.route_agreement);
        let w = v.witness.unwrap();
        assert_eq!(w.side, WitnessSide::Kernel);
        assert!((w.vector[0].norm() - 1.0).abs() < 1e-12);

        let v = shmulyan_dominates(&k(scalar(0.0)), &k(scalar(0.5)), &tol()).unwrap();
        assert!(v.dominates && v.route_agreement);
        assert!((disc_radius(&scalar(0.0), &scalar(0.5), 1024) - 2.0).abs() < 2e-6);
    }

    #[test]
    fn jordan_part_membership() {
        let part = partial_isometry_part(&k(jordan()), &tol()).unwrap();
        let inside = real_matrix(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        let m = part.membership_test(&k(inside.clone()), &tol()).unwrap();
        assert!(m.member);
        assert!((m.z_norm - 0.5).abs() < 1e-14);
        let eq = shmulyan_equivalent(&k(jordan()), &k(inside), &tol()).unwrap();
        assert!(eq.equivalent);
        assert!(eq.tilde_residual < 1e-10);

        let outside = real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(!part.membership_test(&k(outside.clone()), &tol()).unwrap().member);
        assert!(!shmulyan_equivalent(&k(jordan()), &k(outside), &tol()).unwrap().equivalent);
        assert!(matches!(
            partial_isometry_part(&k(scalar(0.5)), &tol()),
            Err(ShmulyanError::NotPartialIsometry)
        ));
    }

    #[test]
    fn structural_checks_on_examples() {
        let j = isometric_kernel_check(&k(jordan()), &tol()).unwrap();
        assert!(!j.kernel_invariant && !j.cokernel_inside && !j.compression_pure && j.agree);
        let u_plus = k(direct_sum(&scalar(-1.0), &scalar(0.3)));
        let ok = isometric_kernel_check(&u_plus, &tol()).unwrap();
        assert!(ok.kernel_invariant && ok.cokernel_inside && ok.compression_pure);
        let cc = column_norm_check(&u_plus, &tol()).unwrap();
        assert!(cc.cond_i && cc.cond_ii && cc.agree);
    }

    #[test]
    fn quasi_isometry_examples() {
        let t = k(direct_sum(&diag_real(&[1.0, -1.0]), &scalar(0.0)));
        let good = k(direct_sum(&diag_real(&[1.0, -1.0]), &scalar(0.7)));
        let qi = quasi_isometry_criterion(&t, &good, &tol()).unwrap();
        assert!(qi.result);
        assert!(shmulyan_equivalent(&t, &good, &tol()).unwrap().equivalent);
        let bad = k(direct_sum(&diag_real(&[1.0, -1.0]), &scalar(1.0)));
        let qb = quasi_isometry_criterion(&t, &bad, &tol()).unwrap();
        assert!(!qb.result && !qb.range_inclusion);
        assert!(matches!(
            quasi_isometry_criterion(&k(scalar(0.5)), &good, &tol()),
            Err(ShmulyanError::NotQuasiIsometry) | Err(ShmulyanError::ShapeMismatch(..))
        ));
    }

    proptest! {
        #[test]
        fn strict_pairs_dominate_both_ways(a in arb_strict(3), b in arb_strict(3)) {
            let v = shmulyan_dominates(&k(b.clone()), &k(a.clone()), &tol()).unwrap();
            prop_assert!(v.dominates && v.route_agreement);
            let x = v.x_solution.unwrap();
            let da = k(a.clone()).defect().clone();
            prop_assert!(op_norm(&(&a + &da.d_tstar * &x * &da.d_t - &b)) < 1e-9);
        }

        #[test]
        fn unitary_part_must_be_shared(q in arb_strict(2), theta in 0.1f64..3.0) {
            let u = crate::numkit::diag(&[crate::contraction::phase(theta)]);
            let t = k(direct_sum(&u, &q));
            let same = k(direct_sum(&u, &q.scale(0.5)));
            let moved = k(direct_sum(&crate::numkit::diag(&[crate::contraction::phase(theta + 0.05)]), &q));
            let eq = shmulyan_equivalent(&t, &same, &tol()).unwrap();
            prop_assert!(eq.equivalent && eq.forward.route_agreement && eq.backward.route_agreement);
            let ne = shmulyan_equivalent(&t, &moved, &tol()).unwrap();
            prop_assert!(!ne.equivalent && ne.forward.route_agreement && ne.backward.route_agreement);
        }

        #[test]
        fn column_criterion_on_direct_sums(a in arb_strict(2), b in arb_strict(1), theta in 0.0f64..3.0, unit in proptest::bool::ANY) {
            let top = if unit { crate::numkit::diag(&[crate::contraction::phase(theta)]) } else { b.clone() };
            let t = k(direct_sum(&a, &top));
            let tp = k(direct_sum(&a.scale(0.3), &top.scale(if unit { 1.0 } else { 0.5 })));
            let e0 = Subspace::from_orthonormal(identity(3).columns(0, 2).into_owned());
            let f0 = e0.clone();
            let cc = column_criterion(&t, &tp, &e0, &f0, &tol()).unwrap();
            prop_assert!(cc.conditions_hold);
            prop_assert_eq!(cc.equivalent, shmulyan_equivalent(&t, &tp, &tol()).unwrap().equivalent);
        }
    }
}
