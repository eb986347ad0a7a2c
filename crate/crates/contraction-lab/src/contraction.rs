//! Contractions and their defect operators.
//!
//! A [`Contraction`] is a complex matrix of operator norm at most one. Its
//! defect data is computed once from a full SVD: singular values within
//! `contraction_slack` of one are snapped to one, which fixes the kernels of
//! both defect operators consistently.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::numkit::{
    self, c, complete_basis, compress, diag_real, is_finite, op_norm, polar_unitary, CMatrix,
    MatrixJson, NumError, Subspace, Tolerances,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractionError {
    #[error("not a contraction: operator norm {norm:.12}")]
    NotAContraction { norm: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("empty matrix")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no unitary/pure splitting: {0}")]
    NotDecomposable(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// A matrix with operator norm at most one.
pub struct Contraction {
    t: CMatrix,
    tol: Tolerances,
    defect: OnceLock<DefectData>,
}

impl Clone for Contraction {
    fn clone(&self) -> Self {
        let defect = OnceLock::new();
        if let Some(d) = self.defect.get() {
            let _ = defect.set(d.clone());
        }
        Contraction {
            t: self.t.clone(),
            tol: self.tol,
            defect,
        }
    }
}

impl fmt::Debug for Contraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contraction").field("t", &self.t).finish()
    }
}

impl Serialize for Contraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(&self.t).serialize(s)
    }
}

/// Validates `t`. A norm in `(1, 1 + contraction_slack]` is rescaled to one.
pub fn make_contraction(t: CMatrix, tol: &Tolerances) -> Result<Contraction, ContractionError> {
    if t.is_empty() {
        return Err(ContractionError::Empty);
    }
    if !is_finite(&t) {
        return Err(ContractionError::NonFinite);
    }
    let norm = op_norm(&t);
    let t = if norm <= 1.0 {
        t
    } else if norm <= 1.0 + tol.contraction_slack {
        t.unscale(norm)
    } else {
        return Err(ContractionError::NotAContraction { norm });
    };
    Ok(Contraction {
        t,
        tol: *tol,
        defect: OnceLock::new(),
    })
}

impl Contraction {
    pub fn matrix(&self) -> &CMatrix {
        &self.t
    }

    pub fn into_matrix(self) -> CMatrix {
        self.t
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn shape(&self) -> (usize, usize) {
        self.t.shape()
    }

    pub fn is_square(&self) -> bool {
        self.t.nrows() == self.t.ncols()
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.t)
    }

    pub fn adjoint(&self) -> Contraction {
        Contraction {
            t: self.t.adjoint(),
            tol: self.tol,
            defect: OnceLock::new(),
        }
    }

    /// Defect data at the tolerances the contraction was built with (cached).
    pub fn defect(&self) -> &DefectData {
        self.defect.get_or_init(|| compute_defect(&self.t, &self.tol))
    }
}

/// Defect operators, their kernels and the defect spaces.
#[derive(Debug, Clone, Serialize)]
pub struct DefectData {
    #[serde(with = "numkit::cmatrix_serde")]
    pub d_t: CMatrix,
    #[serde(with = "numkit::cmatrix_serde")]
    pub d_tstar: CMatrix,
    pub null_dt: Subspace,
    pub null_dtstar: Subspace,
    pub defect_space: Subspace,
    pub defect_space_star: Subspace,
    /// Singular values of `T` after snapping, descending.
    pub singular_values: Vec<f64>,
}

/// Defect data, reusing the cache when the tolerances match.
pub fn defect_data(c: &Contraction, tol: &Tolerances) -> DefectData {
    if *tol == c.tol {
        c.defect().clone()
    } else {
        compute_defect(&c.t, tol)
    }
}

fn compute_defect(t: &CMatrix, tol: &Tolerances) -> DefectData {
    let (m, n) = t.shape();
    let dec = numkit::svd(t);
    let k = dec.s.len();
    let snapped: Vec<bool> = dec.s.iter().map(|&s| 1.0 - s <= tol.contraction_slack).collect();
    let sigma: Vec<f64> = dec
        .s
        .iter()
        .zip(&snapped)
        .map(|(&s, &snap)| if snap { 1.0 } else { s })
        .collect();
    let defect_of = |s: f64| ((1.0 - s) * (1.0 + s)).max(0.0).sqrt();

    let v_full = extend(&dec.v);
    let u_full = extend(&dec.u);
    let d_in: Vec<f64> = (0..n).map(|i| if i < k { defect_of(sigma[i]) } else { 1.0 }).collect();
    let d_out: Vec<f64> = (0..m).map(|i| if i < k { defect_of(sigma[i]) } else { 1.0 }).collect();
    let d_t = &v_full * diag_real(&d_in) * v_full.adjoint();
    let d_tstar = &u_full * diag_real(&d_out) * u_full.adjoint();

    let split = |full: &CMatrix, d: &[f64]| {
        let null: Vec<usize> = (0..d.len()).filter(|&i| d[i] == 0.0).collect();
        let rest: Vec<usize> = (0..d.len()).filter(|&i| d[i] != 0.0).collect();
        let pick = |idx: &[usize]| {
            Subspace::from_orthonormal(CMatrix::from_fn(full.nrows(), idx.len(), |i, j| {
                full[(i, idx[j])]
            }))
        };
        (pick(&null), pick(&rest))
    };
    let (null_dt, defect_space) = split(&v_full, &d_in);
    let (null_dtstar, defect_space_star) = split(&u_full, &d_out);
    DefectData {
        d_t: numkit::hermitian_part(&d_t),
        d_tstar: numkit::hermitian_part(&d_tstar),
        null_dt,
        null_dtstar,
        defect_space,
        defect_space_star,
        singular_values: sigma,
    }
}

fn extend(q: &CMatrix) -> CMatrix {
    let extra = complete_basis(q);
    let mut full = CMatrix::zeros(q.nrows(), q.nrows());
    full.columns_mut(0, q.ncols()).copy_from(q);
    full.columns_mut(q.ncols(), extra.ncols()).copy_from(&extra);
    full
}

// ---------------------------------------------------------------------------
// Classification

/// Structural predicates. Those that need a square matrix are false otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Classification {
    pub isometry: bool,
    pub coisometry: bool,
    pub unitary: bool,
    pub partial_isometry: bool,
    pub quasi_normal: bool,
    pub quasi_isometry: bool,
    pub hyponormal: bool,
    pub strict: bool,
    pub pure: bool,
}

impl Classification {
    pub fn labels(&self) -> Vec<&'static str> {
        let all = [
            ("isometry", self.isometry),
            ("coisometry", self.coisometry),
            ("unitary", self.unitary),
            ("partial_isometry", self.partial_isometry),
            ("quasi_normal", self.quasi_normal),
            ("quasi_isometry", self.quasi_isometry),
            ("hyponormal", self.hyponormal),
            ("strict", self.strict),
            ("pure", self.pure),
        ];
        all.iter().filter(|(_, on)| *on).map(|(name, _)| *name).collect()
    }
}

pub fn classify(c: &Contraction, tol: &Tolerances) -> Classification {
    let t = &c.t;
    let (m, n) = t.shape();
    let norm = c.norm();
    let thr = tol.identity_threshold(norm);
    let small = |x: CMatrix| op_norm(&x) <= thr;
    let tt = t.adjoint() * t;
    let tts = t * t.adjoint();
    let isometry = small(&tt - numkit::identity(n));
    let coisometry = small(&tts - numkit::identity(m));
    let partial_isometry = small(t * &tt - t);
    let strict = norm < 1.0 - tol.contraction_slack;
    let pure = defect_data(c, tol).null_dt.is_zero();
    let (mut quasi_normal, mut quasi_isometry, mut hyponormal) = (false, false, false);
    if m == n {
        quasi_normal = small(t * &tt - &tt * t);
        let t2 = t * t;
        quasi_isometry = small(&tt - t2.adjoint() * &t2);
        hyponormal = numkit::psd_order_leq(&tts, &tt, tol).unwrap_or(false);
    }
    Classification {
        isometry,
        coisometry,
        unitary: m == n && isometry && coisometry,
        partial_isometry,
        quasi_normal,
        quasi_isometry,
        hyponormal,
        strict,
        pure,
    }
}

// ---------------------------------------------------------------------------
// Unitary / pure splitting

/// `T = U (+) Q` with `U: N(D_T) -> N(D_T*)` unitary and `Q` strict on the
/// defect spaces. Blocks are written in the bases of the four subspaces.
#[derive(Debug, Clone, Serialize)]
pub struct UpDecomposition {
    pub unitary_in: Subspace,
    pub unitary_out: Subspace,
    pub pure_in: Subspace,
    pub pure_out: Subspace,
    #[serde(with = "numkit::cmatrix_serde")]
    pub u_block: CMatrix,
    #[serde(with = "numkit::cmatrix_serde")]
    pub q_block: CMatrix,
    /// Largest off-diagonal block norm.
    pub cross_residual: f64,
}

impl UpDecomposition {
    /// Reassembles `U (+) Q` in the ambient coordinates.
    pub fn assemble(&self) -> CMatrix {
        &self.unitary_out.basis * &self.u_block * self.unitary_in.basis.adjoint()
            + &self.pure_out.basis * &self.q_block * self.pure_in.basis.adjoint()
    }
}

pub fn up_decompose(c: &Contraction, tol: &Tolerances) -> Result<UpDecomposition, ContractionError> {
    let dd = defect_data(c, tol);
    let t = &c.t;
    let thr = tol.identity_threshold(1.0);
    if dd.null_dt.dim() != dd.null_dtstar.dim() {
        return Err(ContractionError::NotDecomposable(format!(
            "isometric kernels differ in dimension ({} vs {})",
            dd.null_dt.dim(),
            dd.null_dtstar.dim()
        )));
    }
    let u_block = compress(t, &dd.null_dtstar.basis, &dd.null_dt.basis);
    let q_block = compress(t, &dd.defect_space_star.basis, &dd.defect_space.basis);
    let upper = compress(t, &dd.null_dtstar.basis, &dd.defect_space.basis);
    let lower = compress(t, &dd.defect_space_star.basis, &dd.null_dt.basis);
    let cross_residual = op_norm(&upper).max(op_norm(&lower));
    if cross_residual > thr {
        return Err(ContractionError::NotDecomposable(format!(
            "off-diagonal block of norm {cross_residual:.3e}"
        )));
    }
    let k = u_block.nrows();
    let unit_err = op_norm(&(u_block.adjoint() * &u_block - numkit::identity(k)));
    if unit_err > thr {
        return Err(ContractionError::NotDecomposable(format!(
            "isometric block deviates from unitary by {unit_err:.3e}"
        )));
    }
    if op_norm(&q_block) >= 1.0 - tol.contraction_slack && !q_block.is_empty() {
        return Err(ContractionError::NotDecomposable("pure block is not strict".into()));
    }
    Ok(UpDecomposition {
        unitary_in: dd.null_dt.clone(),
        unitary_out: dd.null_dtstar.clone(),
        pure_in: dd.defect_space.clone(),
        pure_out: dd.defect_space_star.clone(),
        u_block,
        q_block,
        cross_residual,
    })
}

/// The partial isometry `U (+) 0` obtained by dropping the pure block.
pub fn nearest_part_partial_isometry(
    c: &Contraction,
    tol: &Tolerances,
) -> Result<Contraction, ContractionError> {
    let up = up_decompose(c, tol)?;
    let u = polar_unitary(&up.u_block);
    let w = &up.unitary_out.basis * u * up.unitary_in.basis.adjoint();
    let w = if w.is_empty() {
        CMatrix::zeros(c.t.nrows(), c.t.ncols())
    } else {
        w
    };
    make_contraction(w, tol)
}

// ---------------------------------------------------------------------------
// Powers of T*T

/// Convergence of `(T*T)^n` to the projection onto `N(D_T)`, checked by
/// repeated squaring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerConvergence {
    pub squarings: u32,
    pub residual: f64,
    pub converged: bool,
}

pub fn gram_power_convergence(c: &Contraction, tol: &Tolerances) -> PowerConvergence {
    let target = defect_data(c, tol).null_dt.projector();
    let mut m = c.t.adjoint() * &c.t;
    let mut residual = op_norm(&(&m - &target));
    for k in 0..=64u32 {
        if residual < tol.conv_tol {
            return PowerConvergence {
                squarings: k,
                residual,
                converged: true,
            };
        }
        if k == 64 {
            break;
        }
        m = numkit::hermitian_part(&(&m * &m));
        residual = op_norm(&(&m - &target));
    }
    PowerConvergence {
        squarings: 64,
        residual,
        converged: false,
    }
}

/// Unit complex number helper used by generators and tests.
pub fn phase(theta: f64) -> num_complex::Complex64 {
    c(theta.cos(), theta.sin())
}
