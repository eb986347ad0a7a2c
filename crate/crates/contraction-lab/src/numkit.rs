//! Dense complex linear algebra shared by every other module.
//!
//! Everything here works on [`CMatrix`], a dynamically sized complex matrix.
//! Rank decisions use the relative cutoff `rank_rtol * sigma_max` unless a
//! function says otherwise.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest principal angle (radians) at which two subspaces count as equal.
pub const SUBSPACE_ANGLE_TOL: f64 = 1e-7;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("Douglas factorization infeasible (residual {residual:.3e})")]
    Infeasible {
        residual: f64,
        witness: Vec<Complex64>,
    },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("invalid matrix encoding: {0}")]
    Encoding(String),
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
}

/// Numerical tolerances threaded through every decision the crate makes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rank_rtol: f64,
    pub psd_atol: f64,
    pub conv_tol: f64,
    pub contraction_slack: f64,
    pub big_ratio: f64,
    pub max_level: usize,
    pub grid_points: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_rtol: 1e-9,
            psd_atol: 1e-10,
            conv_tol: 1e-10,
            contraction_slack: 1e-10,
            big_ratio: 1e12,
            max_level: 64,
            grid_points: 1024,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), NumError> {
        let positive = [
            ("rank_rtol", self.rank_rtol),
            ("psd_atol", self.psd_atol),
            ("conv_tol", self.conv_tol),
            ("contraction_slack", self.contraction_slack),
            ("big_ratio", self.big_ratio),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(NumError::InvalidTolerance(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in &positive[..4] {
            if *v > 1e-4 {
                return Err(NumError::InvalidTolerance(format!("{name} must be at most 1e-4, got {v}")));
            }
        }
        if self.max_level < 2 {
            return Err(NumError::InvalidTolerance("max_level must be at least 2".into()));
        }
        if self.grid_points < 16 {
            return Err(NumError::InvalidTolerance("grid_points must be at least 16".into()));
        }
        Ok(())
    }

    /// Residual threshold for algebraic identities of an operator of the given norm.
    pub fn identity_threshold(&self, norm: f64) -> f64 {
        10.0 * self.rank_rtol * norm.max(1.0).powi(2)
    }
}

// ---------------------------------------------------------------------------
// JSON wire format

/// Row-major JSON encoding `{"rows", "cols", "re", "im"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            re,
            im,
        }
    }

    /// Decodes the matrix. An empty `im` array means a real matrix.
    pub fn to_matrix(&self) -> Result<CMatrix, NumError> {
        let n = self.rows * self.cols;
        if self.re.len() != n {
            return Err(NumError::Encoding(format!(
                "expected {n} real parts, found {}",
                self.re.len()
            )));
        }
        if !self.im.is_empty() && self.im.len() != n {
            return Err(NumError::Encoding(format!(
                "expected {n} imaginary parts, found {}",
                self.im.len()
            )));
        }
        let m = CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let k = i * self.cols + j;
            Complex64::new(self.re[k], self.im.get(k).copied().unwrap_or(0.0))
        });
        if !is_finite(&m) {
            return Err(NumError::NonFinite);
        }
        Ok(m)
    }
}

/// Serde adapters so structs can hold `CMatrix` fields directly.
pub mod cmatrix_serde {
    use super::{CMatrix, MatrixJson};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        raw.to_matrix().map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::super::{CMatrix, MatrixJson};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(m: &Option<CMatrix>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(MatrixJson::from_matrix).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMatrix>, D::Error> {
            let raw = Option::<MatrixJson>::deserialize(d)?;
            raw.map(|r| r.to_matrix().map_err(serde::de::Error::custom))
                .transpose()
        }
    }

    pub mod vec {
        use super::super::{CMatrix, MatrixJson};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(m: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
            let raw: Vec<MatrixJson> = m.iter().map(MatrixJson::from_matrix).collect();
            raw.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
            let raw = Vec::<MatrixJson>::deserialize(d)?;
            raw.iter()
                .map(|r| r.to_matrix().map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// Serde adapter for complex vectors as `{"re": [..], "im": [..]}`.
pub mod cvec_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Split {
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        Split {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw = Split::deserialize(d)?;
        if raw.re.len() != raw.im.len() {
            return Err(serde::de::Error::custom("re/im length mismatch"));
        }
        Ok(raw
            .re
            .into_iter()
            .zip(raw.im)
            .map(|(a, b)| Complex64::new(a, b))
            .collect())
    }
}

/// Writes non-finite floats as the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn ser_extended_f64<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

// ---------------------------------------------------------------------------
// Basic helpers

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Builds a real matrix from row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    assert_eq!(data.len(), rows * cols);
    CMatrix::from_fn(rows, cols, |i, j| c(data[i * cols + j], 0.0))
}

pub fn diag_real(d: &[f64]) -> CMatrix {
    let n = d.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { c(d[i], 0.0) } else { ZERO })
}

pub fn diag(d: &[Complex64]) -> CMatrix {
    let n = d.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { ZERO })
}

pub fn scalar(z: f64) -> CMatrix {
    real_matrix(1, 1, &[z])
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn fro_norm(m: &CMatrix) -> f64 {
    m.norm()
}

/// Operator (spectral) norm; zero for empty matrices, infinite for non-finite ones.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if !is_finite(m) {
        return f64::INFINITY;
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    match to_faer(&m.unscale(scale)).singular_values() {
        Ok(s) => s[0] * scale,
        Err(_) => f64::INFINITY,
    }
}

// nalgebra's complex SVD loses accuracy on some rank-deficient Hermitian
// inputs (errors near 1e-4), so decompositions go through faer.
fn to_faer(m: &CMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `out^* m inp`: the block of `m` between two orthonormal bases.
pub fn compress(m: &CMatrix, out: &CMatrix, inp: &CMatrix) -> CMatrix {
    out.adjoint() * m * inp
}

pub fn powers(t: &CMatrix, count: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(count);
    let mut p = identity(t.nrows());
    for _ in 0..count {
        out.push(p.clone());
        p = &p * t;
    }
    out
}

/// Block-diagonal direct sum.
pub fn direct_sum(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut m = CMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    m
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Decompositions

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(m: &CMatrix) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: CMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: CMatrix::zeros(cols, 0),
        };
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Svd {
            u: CMatrix::identity(rows, k),
            s: vec![if scale == 0.0 { 0.0 } else { f64::INFINITY }; k],
            v: CMatrix::identity(cols, k),
        };
    }
    let dec = to_faer(&m.unscale(scale)).thin_svd().expect("svd of a normalized matrix");
    let (fu, fv) = (dec.U(), dec.V());
    let s = (0..k).map(|i| dec.S().column_vector()[i].re * scale).collect();
    let u = CMatrix::from_fn(rows, k, |i, j| fu[(i, j)]);
    let v = CMatrix::from_fn(cols, k, |i, j| fv[(i, j)]);
    Svd { u, s, v }
}

/// Hermitian eigendecomposition of the Hermitian part, eigenvalues ascending.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let dec = to_faer(&hermitian_part(m))
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("eigendecomposition of a finite matrix");
    let fu = dec.U();
    let vals = (0..n).map(|i| dec.S().column_vector()[i].re).collect();
    let vecs = CMatrix::from_fn(n, n, |i, j| fu[(i, j)]);
    (vals, vecs)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    to_faer(&hermitian_part(m))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("eigenvalues of a finite matrix")
}

pub fn lambda_min(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn lambda_max(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).last().copied().unwrap_or(0.0)
}

fn check_hermitian(m: &CMatrix, tol: &Tolerances) -> Result<(), NumError> {
    if m.nrows() != m.ncols() {
        return Err(NumError::ShapeMismatch {
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    let asymmetry = fro_norm(&(m - m.adjoint()));
    if asymmetry > tol.psd_atol * fro_norm(m).max(1.0) {
        return Err(NumError::NotHermitian { asymmetry });
    }
    Ok(())
}

/// Principal square root of a PSD matrix. Eigenvalues in `[-psd_atol, 0)`
/// are clamped to zero.
pub fn psd_sqrt(m: &CMatrix, tol: &Tolerances) -> Result<CMatrix, NumError> {
    check_hermitian(m, tol)?;
    let (vals, vecs) = hermitian_eig(m);
    let floor = -tol.psd_atol * fro_norm(m).max(1.0);
    if let Some(&lo) = vals.first() {
        if lo < floor {
            return Err(NumError::NotPsd { min_eigenvalue: lo });
        }
    }
    let roots: Vec<Complex64> = vals.iter().map(|&l| c(l.max(0.0).sqrt(), 0.0)).collect();
    Ok(&vecs * diag(&roots) * vecs.adjoint())
}

/// Moore-Penrose pseudo-inverse with the relative cutoff `rank_rtol * sigma_max`.
pub fn pinv(m: &CMatrix, tol: &Tolerances) -> CMatrix {
    let dec = svd(m);
    let cutoff = tol.rank_rtol * dec.s.first().copied().unwrap_or(0.0);
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in dec.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let vk = dec.v.column(k);
            let uk = dec.u.column(k);
            out += (vk * uk.adjoint()).scale(1.0 / s);
        }
    }
    out
}

/// Unitary factor of the polar decomposition of a square matrix.
pub fn polar_unitary(m: &CMatrix) -> CMatrix {
    let dec = svd(m);
    &dec.u * dec.v.adjoint()
}

/// Orthonormal basis of the orthogonal complement of the span of `q`
/// (which must have orthonormal columns).
pub fn complete_basis(q: &CMatrix) -> CMatrix {
    let n = q.nrows();
    let k = q.ncols();
    if k >= n {
        return CMatrix::zeros(n, 0);
    }
    if k == 0 {
        return identity(n);
    }
    let p_perp = identity(n) - q * q.adjoint();
    let (_, vecs) = hermitian_eig(&p_perp);
    vecs.columns(k, n - k).into_owned()
}

/// Whether `(1 + slack)^2 I - m^* m` is positive definite, decided by Cholesky.
pub fn norm_at_most(m: &CMatrix, bound: f64) -> bool {
    let g = if m.nrows() < m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    let n = g.nrows();
    if n == 0 {
        return true;
    }
    let h = identity(n).scale(bound * bound) - hermitian_part(&g);
    is_positive_definite(&h)
}

/// Cholesky-based positive definiteness test for a Hermitian matrix.
///
/// Hand-rolled because the generic complex Cholesky accepts negative pivots
/// (complex square roots always exist).
pub fn is_positive_definite(h: &CMatrix) -> bool {
    let n = h.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = c(d, 0.0);
        for i in (j + 1)..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Subspaces

/// A subspace of `C^ambient` held as an orthonormal basis (columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subspace {
    pub ambient: usize,
    #[serde(with = "cmatrix_serde")]
    pub basis: CMatrix,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: CMatrix::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: identity(ambient),
        }
    }

    /// Span of the columns of `m`, using an absolute singular value cutoff.
    pub fn span(m: &CMatrix, cutoff: f64) -> Self {
        range_abs(m, cutoff)
    }

    /// Wraps columns the caller guarantees to be orthonormal.
    pub fn from_orthonormal(basis: CMatrix) -> Self {
        Subspace {
            ambient: basis.nrows(),
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    pub fn complement(&self) -> Subspace {
        Subspace {
            ambient: self.ambient,
            basis: complete_basis(&self.basis),
        }
    }

    /// `sin` of the largest principal angle from `self` into `other`.
    pub fn gap_into(&self, other: &Subspace) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let resid = &self.basis - other.projector() * &self.basis;
        op_norm(&resid)
    }

    pub fn is_subspace_of(&self, other: &Subspace) -> bool {
        self.dim() <= other.dim() && self.gap_into(other) <= SUBSPACE_ANGLE_TOL
    }

    pub fn equals(&self, other: &Subspace) -> bool {
        self.ambient == other.ambient
            && self.dim() == other.dim()
            && self.gap_into(other) <= SUBSPACE_ANGLE_TOL
    }

    pub fn intersection(&self, other: &Subspace) -> Subspace {
        if self.is_zero() || other.is_zero() {
            return Subspace::zero(self.ambient);
        }
        let resid = &self.basis - other.projector() * &self.basis;
        let dec = svd(&resid);
        let k = self.dim();
        // Right singular vectors with (near) zero singular value; beyond the
        // thin SVD the remaining directions are exact zeros.
        let mut keep = Vec::new();
        for j in 0..k {
            let s = dec.s.get(j).copied().unwrap_or(0.0);
            if s <= SUBSPACE_ANGLE_TOL {
                keep.push(j);
            }
        }
        let mut v_full = dec.v.clone();
        if v_full.ncols() < k {
            let extra = complete_basis(&v_full);
            let base = v_full.ncols();
            v_full = v_full.resize_horizontally(k, ZERO);
            v_full.columns_mut(base, k - base).copy_from(&extra);
            keep.extend(base..k);
        }
        let coeffs = CMatrix::from_fn(k, keep.len(), |i, j| v_full[(i, keep[j])]);
        let raw = &self.basis * coeffs;
        Subspace::span(&raw, 0.5)
    }

    pub fn sum(&self, other: &Subspace) -> Subspace {
        let mut m = CMatrix::zeros(self.ambient, self.dim() + other.dim());
        m.columns_mut(0, self.dim()).copy_from(&self.basis);
        m.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        Subspace::span(&m, 1e-7)
    }

    /// Whether `m` maps this subspace into itself.
    pub fn is_invariant_under(&self, m: &CMatrix, atol: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        let image = m * &self.basis;
        let resid = &image - self.projector() * &image;
        op_norm(&resid) <= atol
    }
}

impl fmt::Display for Subspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subspace of dim {} in C^{}", self.dim(), self.ambient)
    }
}

fn range_abs(m: &CMatrix, cutoff: f64) -> Subspace {
    let dec = svd(m);
    let keep: Vec<usize> = (0..dec.s.len()).filter(|&k| dec.s[k] > cutoff).collect();
    let basis = CMatrix::from_fn(m.nrows(), keep.len(), |i, j| dec.u[(i, keep[j])]);
    Subspace {
        ambient: m.nrows(),
        basis,
    }
}

fn rel_cutoff(m: &CMatrix, tol: &Tolerances) -> f64 {
    tol.rank_rtol * op_norm(m)
}

/// Range of `m` at the relative cutoff.
pub fn range_of(m: &CMatrix, tol: &Tolerances) -> Subspace {
    range_abs(m, rel_cutoff(m, tol))
}

/// Kernel of `m` at the relative cutoff.
pub fn kernel_of(m: &CMatrix, tol: &Tolerances) -> Subspace {
    range_abs(&m.adjoint(), rel_cutoff(m, tol)).complement()
}

/// Kernel with an absolute singular value cutoff.
pub fn kernel_abs(m: &CMatrix, cutoff: f64) -> Subspace {
    range_abs(&m.adjoint(), cutoff).complement()
}

// ---------------------------------------------------------------------------
// Douglas lemma and order

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Solve `lhs = x * factor`.
    Right,
    /// Solve `lhs = factor * x`.
    Left,
}

#[derive(Debug, Clone)]
pub struct DouglasSolution {
    pub x: CMatrix,
    pub residual: f64,
}

/// Douglas factorization: minimal-norm `x` with `lhs = x factor` (right)
/// or `lhs = factor x` (left).
///
/// Infeasible when the residual exceeds `10 * rank_rtol * max(1, |lhs|)`.
/// The witness is a unit vector on which the range/kernel inclusion fails
/// worst: a vector in the kernel of `factor` that `lhs` does not kill (right),
/// or a vector orthogonal to the range of `factor` that `lhs^*` does not kill
/// (left).
pub fn douglas_solve(
    lhs: &CMatrix,
    factor: &CMatrix,
    side: Side,
    tol: &Tolerances,
) -> Result<DouglasSolution, NumError> {
    let (expected, ok) = match side {
        Side::Right => ((lhs.nrows(), factor.nrows()), lhs.ncols() == factor.ncols()),
        Side::Left => ((factor.ncols(), lhs.ncols()), lhs.nrows() == factor.nrows()),
    };
    if !ok {
        return Err(NumError::ShapeMismatch {
            expected,
            found: lhs.shape(),
        });
    }
    let fp = pinv(factor, tol);
    let (x, resid_op) = match side {
        Side::Right => {
            let x = lhs * &fp;
            let r = lhs - &x * factor;
            (x, r)
        }
        Side::Left => {
            let x = &fp * lhs;
            let r = lhs - factor * &x;
            (x, r)
        }
    };
    let residual = op_norm(&resid_op);
    let bound = 10.0 * tol.rank_rtol * op_norm(lhs).max(1.0);
    if residual <= bound {
        return Ok(DouglasSolution { x, residual });
    }
    let w = match side {
        Side::Right => svd(&resid_op).v.column(0).iter().copied().collect(),
        Side::Left => svd(&resid_op).u.column(0).iter().copied().collect(),
    };
    Err(NumError::Infeasible {
        residual,
        witness: w,
    })
}

/// Loewner order `a <= b`, i.e. `lambda_min(b - a) >= -psd_atol`.
pub fn psd_order_leq(a: &CMatrix, b: &CMatrix, tol: &Tolerances) -> Result<bool, NumError> {
    check_hermitian(a, tol)?;
    check_hermitian(b, tol)?;
    if a.shape() != b.shape() {
        return Err(NumError::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let scale = fro_norm(a).max(fro_norm(b)).max(1.0);
    Ok(lambda_min(&(b - a)) >= -tol.psd_atol * scale)
}

// ---------------------------------------------------------------------------
// Maximization on the unit circle

/// Maximum of `f` over `[0, 2pi)`: uniform grid followed by golden-section
/// refinement around the best few local maxima. Returns `(value, angle)`.
pub fn circle_max<F: FnMut(f64) -> f64>(mut f: F, grid_points: usize) -> (f64, f64) {
    let n = grid_points.max(8);
    let h = std::f64::consts::TAU / n as f64;
    let vals: Vec<f64> = (0..n).map(|k| f(k as f64 * h)).collect();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&k| vals[k] >= vals[(k + n - 1) % n] && vals[k] >= vals[(k + 1) % n])
        .collect();
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    peaks.truncate(4);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..n {
        if vals[k] > best.0 {
            best = (vals[k], k as f64 * h);
        }
    }
    for &k in &peaks {
        let center = k as f64 * h;
        let (v, x) = golden_max(&mut f, center - h, center + h);
        if v > best.0 {
            best = (v, x.rem_euclid(std::f64::consts::TAU));
        }
    }
    best
}

fn golden_max<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (f1, x1)
    } else {
        (f2, x2)
    }
}
