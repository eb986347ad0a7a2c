//! Harnack domination through the minimal isometric dilation.
//!
//! `b ≺_H a` with constant `c²` means `Re p(b) <= c² Re p(a)` for every
//! polynomial with nonnegative real part on the disc; equivalently there is an
//! intertwiner `A V_a = V_b A` with `A|_H = I` and `|A| <= c`. Every function
//! here takes the dominant operator first.
//!
//! The level-`N` constant is `c_N² = |A_N|²`, where `A_N` is `A` restricted to
//! `H ⊕ 𝒟_a^N`. Its columns are known in closed form:
//!
//! ```text
//! column H:       (I, 0, 0, ...)
//! column slot k:  (b^k X, D_b b^(k-1) X, ..., D_b X, Y, 0, ...)
//! ```
//!
//! with `X = (b - a) D_a⁻¹` and `Y = D_b D_a⁻¹` on `𝒟_a`. The lower part is block
//! Toeplitz, and `sup_N c_N² = max(1, sup |Θ|²)` over the unit circle for the
//! symbol `Θ(z) = Y + z D_b (I - z b)⁻¹ X`, taken on the part of `b` that is not
//! unitary. `Gram` kernels `G_T` (blocks `T^(n-m)`) are also exposed; whitening
//! one against the other gives a second, independent route to `c_N²`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::asymptotic::{reducing_unitary_part, AsymptoticError};
use crate::contraction::{phase, Contraction, ContractionError};
use crate::numkit::{
    self, cmatrix_serde, cvec_serde, douglas_solve, hermitian_eig, identity, op_norm, CMatrix,
    CVector, NumError, Side, Tolerances, ONE, ZERO,
};
use crate::schur::{connect_arc, ArcResult};
use crate::shmulyan::{defect_pinv, shmulyan_equivalent, ShmulyanError};

/// Relative gap between the trace and the symbol limit at which the trace stops.
pub const TRACE_STOP: f64 = 1e-6;
/// Allowed relative excess of a level constant over the symbol limit.
pub const LIMIT_SLACK: f64 = 1e-8;
/// Relative disagreement tolerated between the two routes to `c_N²`.
pub const ROUTE_TOL: f64 = 1e-6;
/// Levels at which the whitening route is cross-checked.
pub const ROUTE_LEVELS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnackError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("operator is not square: {0:?}")]
    NotSquare((usize, usize)),
    #[error("dominated operator differs from the dominant one on its isometric directions (residual {residual:.3e})")]
    NecessaryConditionFails { residual: f64 },
    #[error("intertwining series diverges (last chunk {chunk:.3e})")]
    ZDiverges { chunk: f64 },
    #[error(transparent)]
    Contraction(#[from] ContractionError),
    #[error(transparent)]
    Asymptotic(#[from] AsymptoticError),
    #[error(transparent)]
    Shmulyan(#[from] ShmulyanError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Schur(#[from] crate::schur::SchurError),
}

fn square_pair(a: &Contraction, b: &Contraction) -> Result<usize, HarnackError> {
    if !a.is_square() {
        return Err(HarnackError::NotSquare(a.shape()));
    }
    if a.shape() != b.shape() {
        return Err(HarnackError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(a.shape().0)
}

// ---------------------------------------------------------------------------
// Gram kernels

/// Gram matrix of `h_0, V h_1, ..., V^N h_N` for the minimal isometric dilation.
#[derive(Debug, Clone, Serialize)]
pub struct HarnackKernel {
    pub level: usize,
    #[serde(with = "cmatrix_serde")]
    pub base: CMatrix,
}

impl HarnackKernel {
    pub fn min_eigenvalue(&self) -> f64 {
        numkit::lambda_min(&self.base)
    }

    pub fn is_psd(&self, tol: &Tolerances) -> bool {
        self.min_eigenvalue() >= -tol.psd_atol * (self.level + 1) as f64
    }
}

/// Block `(m, n)` is `T^(n-m)` for `n >= m` and `(T^(m-n))*` otherwise.
pub fn harnack_kernel(t: &Contraction, level: usize) -> Result<HarnackKernel, HarnackError> {
    if !t.is_square() {
        return Err(HarnackError::NotSquare(t.shape()));
    }
    Ok(HarnackKernel {
        level,
        base: gram_kernel(t.matrix(), level),
    })
}

fn gram_kernel(t: &CMatrix, level: usize) -> CMatrix {
    let d = t.nrows();
    let pw = numkit::powers(t, level + 1);
    let mut g = CMatrix::zeros(d * (level + 1), d * (level + 1));
    for m in 0..=level {
        for n in 0..=level {
            let block = if n >= m { pw[n - m].clone() } else { pw[m - n].adjoint() };
            g.view_mut((m * d, n * d), (d, d)).copy_from(&block);
        }
    }
    g
}

/// Whitening route: `λ_max(W G_b W)` with `W` the pseudo-inverse square root of
/// `G_a`. Ignores the kernel of `G_a`, so it is meaningful only when `b` agrees
/// with `a` on the isometric directions of `a`.
pub fn whitened_constant(a: &CMatrix, b: &CMatrix, level: usize, tol: &Tolerances) -> f64 {
    let ga = gram_kernel(a, level);
    let gb = gram_kernel(b, level);
    let (vals, vecs) = hermitian_eig(&ga);
    let top = vals.last().copied().unwrap_or(0.0);
    let cutoff = tol.rank_rtol * top.max(1.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > cutoff).collect();
    let w = CMatrix::from_fn(ga.nrows(), keep.len(), |i, j| {
        vecs[(i, keep[j])] / vals[keep[j]].sqrt()
    });
    numkit::lambda_max(&numkit::hermitian_part(&(w.adjoint() * gb * &w)))
}

// ---------------------------------------------------------------------------
// Finite sections of the intertwiner

struct Section {
    d: usize,
    r: usize,
    b: CMatrix,
    d_b: CMatrix,
    x0: CMatrix,
    y0: CMatrix,
}

struct SectionAdjoint {
    b: CMatrix,
    x0: CMatrix,
    y0: CMatrix,
}

impl Section {
    fn new(a: &Contraction, b: &Contraction) -> Self {
        let da = a.defect();
        let q = &da.defect_space.basis;
        let lift = defect_pinv(&da.d_t, &da.defect_space) * q;
        let diff = b.matrix() - a.matrix();
        Section {
            d: a.shape().0,
            r: q.ncols(),
            b: b.matrix().clone(),
            d_b: b.defect().d_t.clone(),
            x0: diff * &lift,
            y0: &b.defect().d_t * lift,
        }
    }

    fn cols(&self, level: usize) -> usize {
        self.d + level * self.r
    }

    /// `A_N` for `N = level`; smaller levels are leading column blocks.
    fn matrix(&self, level: usize) -> CMatrix {
        let (d, r) = (self.d, self.r);
        let mut m = CMatrix::zeros(d * (level + 1), self.cols(level));
        m.view_mut((0, 0), (d, d)).copy_from(&identity(d));
        let mut bx = Vec::with_capacity(level);
        let mut cur = self.x0.clone();
        for _ in 0..level {
            let next = &self.b * &cur;
            bx.push(cur);
            cur = next;
        }
        let dbx: Vec<CMatrix> = bx.iter().map(|m| &self.d_b * m).collect();
        for k in 0..level {
            let col = d + k * r;
            m.view_mut((0, col), (d, r)).copy_from(&bx[k]);
            for j in 0..k {
                m.view_mut((d + j * d, col), (d, r)).copy_from(&dbx[k - 1 - j]);
            }
            m.view_mut((d + k * d, col), (d, r)).copy_from(&self.y0);
        }
        m
    }

    /// `A_N v` without forming `A_N`.
    fn apply(&self, level: usize, v: &CVector) -> CVector {
        let (d, r) = (self.d, self.r);
        let mut out = CVector::zeros(d * (level + 1));
        // s_j = Σ_{k > j} b^(k-1-j) X v_k, built from the last slot backwards
        let mut s = CVector::zeros(d);
        for j in (0..level).rev() {
            let vj = v.rows(d + j * r, r);
            out.rows_mut(d + j * d, d).copy_from(&(&self.d_b * &s + &self.y0 * vj));
            s = &self.b * s + &self.x0 * vj;
        }
        out.rows_mut(0, d).copy_from(&(v.rows(0, d) + s));
        out
    }

    /// `A_N* w` without forming `A_N`.
    fn apply_adjoint(&self, level: usize, w: &CVector, adj: &SectionAdjoint) -> CVector {
        let (d, r) = (self.d, self.r);
        let mut out = CVector::zeros(self.cols(level));
        let mut p: CVector = w.rows(0, d).into_owned();
        out.rows_mut(0, d).copy_from(&p);
        for k in 0..level {
            let wk = w.rows(d + k * d, d);
            out.rows_mut(d + k * r, r).copy_from(&(&adj.x0 * &p + &adj.y0 * wk));
            p = &adj.b * p + &self.d_b * wk;
        }
        out
    }

    fn adjoints(&self) -> SectionAdjoint {
        SectionAdjoint {
            b: self.b.adjoint(),
            x0: self.x0.adjoint(),
            y0: self.y0.adjoint(),
        }
    }

    /// `max(1, sup |Θ|²)` on the circle, or infinity when the resolvent blows up.
    fn symbol_limit(&self, unitary: &numkit::Subspace, grid: usize) -> f64 {
        if self.r == 0 {
            return 1.0;
        }
        let q0 = unitary.complement().basis;
        let k = q0.ncols();
        let b0 = q0.adjoint() * &self.b * &q0;
        let left = &self.d_b * &q0;
        let right = q0.adjoint() * &self.x0;
        let mut blown = false;
        let (s, _) = numkit::circle_max(
            |theta| {
                let z = phase(theta);
                let mut theta_z = self.y0.clone();
                if k > 0 {
                    let lhs = identity(k) - b0.map(|v| v * z);
                    match lhs.lu().solve(&right) {
                        Some(sol) => theta_z += (&left * sol).map(|v| v * z),
                        None => {
                            blown = true;
                            return f64::INFINITY;
                        }
                    }
                }
                op_norm(&theta_z).powi(2)
            },
            grid,
        );
        if blown || !s.is_finite() {
            f64::INFINITY
        } else {
            s.max(1.0)
        }
    }
}

/// Top eigenpair of `A_N* A_N`: dense for small sections, otherwise Lanczos
/// on the structured products, warm-started from `start`.
fn top_gram_eig(sec: &Section, adj: &SectionAdjoint, level: usize, start: Option<&CVector>) -> (f64, CVector) {
    let cols = sec.cols(level);
    if cols <= 24 || start.is_none() {
        let a = sec.matrix(level);
        let g = numkit::hermitian_part(&(a.adjoint() * a));
        let (vals, vecs) = hermitian_eig(&g);
        return (vals[cols - 1], vecs.column(cols - 1).into_owned());
    }
    let mut x0 = CVector::zeros(cols);
    let s = start.unwrap();
    x0.rows_mut(0, s.len()).copy_from(s);
    lanczos_top(|v| sec.apply_adjoint(level, &sec.apply(level, v), adj), x0, cols)
}

/// Lanczos with full reorthogonalization for the top eigenpair of a Hermitian
/// positive semidefinite operator. Stops when the top Ritz value settles; the
/// Ritz value never exceeds the true eigenvalue and never drops below the
/// Rayleigh quotient of the start vector.
fn lanczos_top<F: Fn(&CVector) -> CVector>(apply: F, start: CVector, n: usize) -> (f64, CVector) {
    let mut q = vec![start.unscale(start.norm())];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_k = n.min(160);
    let mut prev_theta = f64::NEG_INFINITY;
    loop {
        let j = q.len() - 1;
        let mut w = apply(&q[j]);
        alpha.push(q[j].dotc(&w).re);
        for _ in 0..2 {
            for qi in &q {
                let h = qi.dotc(&w);
                w.axpy(-h, qi, ONE);
            }
        }
        let bnorm = w.norm();
        let k = alpha.len();
        let breakdown = bnorm <= 1e-14 * alpha[0].abs().max(1.0);
        if k % 3 == 0 || k == max_k || breakdown {
            let mut t = nalgebra::DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alpha[i];
                if i + 1 < k {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = nalgebra::SymmetricEigen::new(t);
            let top = (0..k)
                .max_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]))
                .unwrap();
            let theta = eig.eigenvalues[top];
            let s = eig.eigenvectors.column(top);
            let resid = bnorm * s[k - 1].abs();
            let settled = theta - prev_theta <= 1e-15 * theta.abs();
            if settled || resid <= 1e-13 * theta.abs() || k == max_k || breakdown {
                let mut y = CVector::zeros(n);
                for (i, qi) in q.iter().enumerate() {
                    y.axpy(Complex64::new(s[i], 0.0), qi, ONE);
                }
                let y = y.unscale(y.norm());
                return (theta, y);
            }
            prev_theta = theta;
        }
        beta.push(bnorm);
        q.push(w.unscale(bnorm));
    }
}

/// Levels evaluated by the trace: dense at first, then sparser.
pub fn trace_schedule(max_level: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=8).collect();
    let mut n = 10;
    while n <= max_level {
        out.push(n);
        n += match n {
            0..=15 => 2,
            16..=31 => 4,
            _ => 8,
        };
    }
    out.retain(|&n| n <= max_level);
    if out.last() != Some(&max_level) && max_level >= 1 {
        out.push(max_level);
    }
    out
}

// ---------------------------------------------------------------------------
// Verdicts

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HarnackStatus {
    Dominated,
    NotDominated,
    Inconclusive,
}

/// A level-one vector `x = (-a h, h)` with `<G_a x, x> ≈ 0 < <G_b x, x>`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelWitness {
    pub level: usize,
    #[serde(with = "cvec_serde")]
    pub vector: Vec<Complex64>,
    pub dominant_form: f64,
    pub dominated_form: f64,
    #[serde(serialize_with = "numkit::ser_extended_f64")]
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackVerdict {
    pub status: HarnackStatus,
    /// `c_N²` at each entry of `levels`.
    pub constants: Vec<f64>,
    pub levels: Vec<usize>,
    pub levels_used: usize,
    /// `sup_N c_N²` from the symbol; infinite when the intertwiner is unbounded.
    #[serde(serialize_with = "numkit::ser_extended_f64")]
    pub limit: f64,
    /// Domination constant `c²`, present when dominated.
    pub constant: Option<f64>,
    pub witness: Option<KernelWitness>,
    /// `|(b - a)|_{N(D_a)}|`.
    pub kernel_residual: f64,
    /// Size of `b - a` seen from the unitary part of `b`.
    pub unitary_coupling: f64,
    pub nondecreasing: bool,
    /// `(limit - c_N²) / limit` at the last level.
    #[serde(serialize_with = "numkit::ser_extended_f64")]
    pub trace_gap: f64,
    /// Largest relative gap between the section and whitening routes.
    pub route_gap: f64,
    pub note: Option<String>,
}

/// Decides `b ≺_H a`: `a` is the dominant operator.
pub fn harnack_dominates(
    a: &Contraction,
    b: &Contraction,
    tol: &Tolerances,
) -> Result<HarnackVerdict, HarnackError> {
    let d = square_pair(a, b)?;
    let thr = tol.identity_threshold(1.0);
    let diff = b.matrix() - a.matrix();
    let null_a = &a.defect().null_dt.basis;
    let escaping = &diff * null_a;
    let kernel_residual = op_norm(&escaping);

    if kernel_residual > thr {
        let v = numkit::svd(&escaping).v.column(0).into_owned();
        let h = null_a * v;
        let witness = level_one_witness(a, b, &h);
        let status = if witness.ratio > tol.big_ratio {
            HarnackStatus::NotDominated
        } else {
            HarnackStatus::Inconclusive
        };
        let note = (status == HarnackStatus::Inconclusive)
            .then(|| "kernel escape below the certification ratio".to_string());
        return Ok(HarnackVerdict {
            status,
            constants: Vec::new(),
            levels: Vec::new(),
            levels_used: 1,
            limit: f64::INFINITY,
            constant: None,
            witness: Some(witness),
            kernel_residual,
            unitary_coupling: f64::NAN,
            nondecreasing: true,
            trace_gap: f64::INFINITY,
            route_gap: 0.0,
            note,
        });
    }

    let sec = Section::new(a, b);
    let unitary = reducing_unitary_part(b, tol)?;
    let unitary_coupling = if unitary.is_zero() {
        0.0
    } else {
        op_norm(&(unitary.basis.adjoint() * &diff))
    };
    let bounded = unitary_coupling <= thr;
    let limit = if bounded {
        sec.symbol_limit(&unitary, tol.grid_points)
    } else {
        f64::INFINITY
    };

    let trace = run_trace(&sec, &trace_schedule(tol.max_level), limit.is_finite().then_some(limit));
    let mut route_gap: f64 = 0.0;
    for &n in ROUTE_LEVELS.iter().filter(|&&n| n <= tol.max_level) {
        let direct = trace
            .levels
            .iter()
            .position(|&l| l == n)
            .map(|i| trace.constants[i])
            .unwrap_or_else(|| top_gram_eig(&sec, &sec.adjoints(), n, None).0);
        let white = whitened_constant(a.matrix(), b.matrix(), n, tol);
        route_gap = route_gap.max((direct - white).abs() / direct.max(1.0));
    }

    let last = trace.constants.last().copied().unwrap_or(1.0);
    let within_limit = trace.constants.iter().all(|&c| c <= limit * (1.0 + LIMIT_SLACK));
    let trace_gap = if limit.is_finite() { (limit - last) / limit } else { f64::INFINITY };
    let mut note = None;
    let status = if route_gap > ROUTE_TOL {
        note = Some(format!("route mismatch: relative gap {route_gap:.3e}"));
        HarnackStatus::Inconclusive
    } else if !bounded {
        note = Some(format!(
            "unbounded intertwiner: difference reaches the unitary part of the dominated operator ({unitary_coupling:.3e})"
        ));
        HarnackStatus::Inconclusive
    } else if !limit.is_finite() || limit >= tol.big_ratio {
        note = Some("symbol limit beyond the certification ratio".into());
        HarnackStatus::Inconclusive
    } else if !trace.nondecreasing || !within_limit {
        note = Some("level constants inconsistent with the symbol limit".into());
        HarnackStatus::Inconclusive
    } else {
        HarnackStatus::Dominated
    };
    let _ = d;
    Ok(HarnackVerdict {
        status,
        constant: (status == HarnackStatus::Dominated).then_some(limit),
        levels_used: trace.levels.last().copied().unwrap_or(0),
        constants: trace.constants,
        levels: trace.levels,
        limit,
        witness: None,
        kernel_residual,
        unitary_coupling,
        nondecreasing: trace.nondecreasing,
        trace_gap,
        route_gap,
        note,
    })
}

fn level_one_witness(a: &Contraction, b: &Contraction, h: &CVector) -> KernelWitness {
    // M_T (x0, x1) = (x0 + T x1, D_T x1), evaluated with x0 = -a h, x1 = h.
    let dominated_form = (b.matrix() * h - a.matrix() * h).norm_squared() + (&b.defect().d_t * h).norm_squared();
    let dominant_form = (&a.defect().d_t * h).norm_squared();
    let x0 = -(a.matrix() * h);
    let vector: Vec<Complex64> = x0.iter().chain(h.iter()).copied().collect();
    KernelWitness {
        level: 1,
        vector,
        dominant_form,
        dominated_form,
        ratio: dominated_form / dominant_form.max(1e-300),
    }
}

struct Trace {
    levels: Vec<usize>,
    constants: Vec<f64>,
    nondecreasing: bool,
}

fn run_trace(sec: &Section, schedule: &[usize], stop_at: Option<f64>) -> Trace {
    let adj = sec.adjoints();
    let mut levels = Vec::new();
    let mut constants: Vec<f64> = Vec::new();
    let mut nondecreasing = true;
    let mut vec: Option<CVector> = None;
    for &n in schedule {
        let (c, v) = top_gram_eig(sec, &adj, n, vec.as_ref());
        if let Some(&prev) = constants.last() {
            if c < prev * (1.0 - 1e-10) {
                nondecreasing = false;
            }
        }
        levels.push(n);
        constants.push(c);
        vec = Some(v);
        if let Some(limit) = stop_at {
            if (limit - c) / limit <= TRACE_STOP {
                break;
            }
        }
    }
    Trace {
        levels,
        constants,
        nondecreasing,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackTrace {
    pub levels: Vec<usize>,
    pub constants: Vec<f64>,
    pub nondecreasing: bool,
}

/// `c_N²` at every requested level (sorted ascending), without early stopping.
pub fn harnack_trace(
    a: &Contraction,
    b: &Contraction,
    levels: &[usize],
    tol: &Tolerances,
) -> Result<HarnackTrace, HarnackError> {
    square_pair(a, b)?;
    let residual = op_norm(&((b.matrix() - a.matrix()) * &a.defect().null_dt.basis));
    if residual > tol.identity_threshold(1.0) {
        return Err(HarnackError::NecessaryConditionFails { residual });
    }
    let mut sorted: Vec<usize> = levels.iter().copied().filter(|&n| n >= 1).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let t = run_trace(&Section::new(a, b), &sorted, None);
    Ok(HarnackTrace {
        levels: t.levels,
        constants: t.constants,
        nondecreasing: t.nondecreasing,
    })
}

// ---------------------------------------------------------------------------
// Positive-real polynomials and the falsifier

/// `p(z) = ŵ(0) + 2 Σ ŵ(k) z^k` for `w = |q|²` on the circle, so `Re p = |q|² >= 0`.
pub fn positive_real_from(q: &[Complex64]) -> Vec<Complex64> {
    let n = q.len();
    (0..n.max(1))
        .map(|k| {
            let w: Complex64 = (0..n - k.min(n)).map(|l| q[l + k] * q[l].conj()).sum();
            if k == 0 {
                w
            } else {
                w * 2.0
            }
        })
        .collect()
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Vec<Complex64> {
    (0..=degree)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Random positive-real polynomial of the given degree.
pub fn positive_real_sample(degree: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positive_real_from(&random_poly(&mut rng, degree))
}

/// Minimum of `Re p` over `grid` equally spaced points of the circle.
pub fn min_real_on_circle(p: &[Complex64], grid: usize) -> f64 {
    (0..grid)
        .map(|k| eval_scalar(p, phase(std::f64::consts::TAU * k as f64 / grid as f64)).re)
        .fold(f64::INFINITY, f64::min)
}

fn eval_scalar(p: &[Complex64], z: Complex64) -> Complex64 {
    p.iter().rev().fold(ZERO, |acc, &c| acc * z + c)
}

/// `p(T)` by Horner's rule.
pub fn eval_poly(p: &[Complex64], t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    p.iter()
        .rev()
        .fold(CMatrix::zeros(n, n), |acc, &c| acc * t + identity(n).map(|v| v * c))
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    #[serde(with = "cvec_serde")]
    pub coeffs: Vec<Complex64>,
    pub lambda_min: f64,
    pub trial: usize,
}

/// Searches for `p` with `λ_min(c Re p(a) - Re p(b)) < -psd_atol`, where `a`
/// is the dominant operator. Trials cycle through plain random `q`, `q` with a
/// root at the phase of an eigenvalue of `a`, and `q` with a random unimodular root.
pub fn harnack_falsify(
    a: &Contraction,
    b: &Contraction,
    c: f64,
    degrees: &[usize],
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Option<Counterexample>, HarnackError> {
    square_pair(a, b)?;
    let degrees = if degrees.is_empty() { &[2usize][..] } else { degrees };
    let eig: Vec<Complex64> = a
        .matrix()
        .clone()
        .schur()
        .eigenvalues()
        .map(|e| e.iter().copied().collect())
        .unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let deg = degrees[trial % degrees.len()];
        let mut q = random_poly(&mut rng, deg.saturating_sub(1));
        let root = match trial % 3 {
            1 if !eig.is_empty() => {
                let e = eig[rng.random_range(0..eig.len())];
                Some(if e.norm() > 0.0 { e / e.norm() } else { ONE })
            }
            0 => None,
            _ => Some(phase(rng.random_range(0.0..std::f64::consts::TAU))),
        };
        if deg == 0 {
            q.truncate(1);
        } else if let Some(z0) = root {
            // q (z - z0)
            let mut r = vec![ZERO; q.len() + 1];
            for (i, &v) in q.iter().enumerate() {
                r[i + 1] += v;
                r[i] -= v * z0;
            }
            q = r;
        } else {
            q.push(Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        }
        let p = positive_real_from(&q);
        let pa = numkit::hermitian_part(&eval_poly(&p, a.matrix()));
        let pb = numkit::hermitian_part(&eval_poly(&p, b.matrix()));
        let scale = op_norm(&pa).mul_add(c, op_norm(&pb)).max(1.0);
        let lam = numkit::lambda_min(&(pa.scale(c) - pb));
        if lam < -tol.psd_atol * scale {
            return Ok(Some(Counterexample {
                coeffs: p,
                lambda_min: lam,
                trial,
            }));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Intertwining data

#[derive(Debug, Clone, Serialize)]
pub struct IntertwinerData {
    /// `b - a = B₀ D_a`.
    #[serde(with = "cmatrix_serde")]
    pub b0: CMatrix,
    pub b0_residual: f64,
    /// Partial sum of `Σ b^n B₀ B₀* b*^n` up to `n = 2^doublings`.
    #[serde(with = "cmatrix_serde")]
    pub z_partial: CMatrix,
    pub doublings: u32,
    pub z_converged: bool,
    pub z_commutator: f64,
    /// `b = a + D_{b*} W D_a`.
    #[serde(with = "cmatrix_serde::option")]
    pub w: Option<CMatrix>,
    pub w_residual: Option<f64>,
}

/// Intertwining data for `b ≺_H a` (`a` dominant).
pub fn intertwiner_data(
    a: &Contraction,
    b: &Contraction,
    tol: &Tolerances,
) -> Result<IntertwinerData, HarnackError> {
    square_pair(a, b)?;
    let diff = b.matrix() - a.matrix();
    let residual = op_norm(&(&diff * &a.defect().null_dt.basis));
    if residual > tol.identity_threshold(1.0) {
        return Err(HarnackError::NecessaryConditionFails { residual });
    }
    let da = &a.defect().d_t;
    let b0 = &diff * defect_pinv(da, &a.defect().defect_space);
    let b0_residual = op_norm(&(&diff - &b0 * da));

    // Z_{2n} = Z_n + T^n Z_n T*^n
    let t = b.matrix();
    let mut z = &b0 * b0.adjoint();
    let mut p = t.clone();
    let mut doublings = 0;
    let mut converged = false;
    let mut chunk = 0.0;
    while doublings < 64 {
        let add = &p * &z * p.adjoint();
        if !numkit::is_finite(&add) {
            return Err(HarnackError::ZDiverges { chunk: f64::INFINITY });
        }
        chunk = op_norm(&add);
        z += add;
        p = &p * &p;
        doublings += 1;
        if chunk < tol.conv_tol * op_norm(&z).max(1.0) {
            converged = true;
            break;
        }
    }
    let znorm = op_norm(&z);
    if !converged && chunk >= 0.5 * znorm {
        return Err(HarnackError::ZDiverges { chunk });
    }
    let tt = t * t.adjoint();
    let z_commutator = op_norm(&(&z * &tt - &tt * &z));
    let (mut w, mut w_residual) = (None, None);
    if converged && z_commutator <= tol.identity_threshold(1.0) * znorm.max(1.0) {
        if let Ok(sol) = douglas_solve(&b0, &b.defect().d_tstar, Side::Left, tol) {
            w_residual = Some(op_norm(&(&diff - &b.defect().d_tstar * &sol.x * da)));
            w = Some(sol.x);
        }
    }
    Ok(IntertwinerData {
        b0,
        b0_residual,
        z_partial: z,
        doublings,
        z_converged: converged,
        z_commutator,
        w,
        w_residual,
    })
}

// ---------------------------------------------------------------------------
// Equivalence pipeline for doubly commuting pairs

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairHypotheses {
    /// `T*` commutes with `T T*`.
    pub adjoint_quasi_normal: bool,
    pub commute: bool,
    /// `T` commutes with `T'* T'`.
    pub commutes_with_modulus: bool,
    /// `T'` commutes with `T T*`.
    pub dominant_commutes_with_comodulus: bool,
    pub all: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairEquivalences {
    /// `T ≺_H T'`.
    pub harnack: bool,
    /// Bounded intertwining operator; implied by `harnack` under the hypotheses.
    pub operator_implied: bool,
    pub shmulyan: bool,
    /// Schur-class arc, when attempted.
    pub arc: Option<bool>,
    /// `W` with `T = T' + D_{T*} W D_{T'}`.
    pub intertwiner: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub hypotheses: PairHypotheses,
    pub equivalences: PairEquivalences,
    pub w_residual: Option<f64>,
    pub consistent: bool,
}

/// Checks that the Harnack, Shmul'yan, intertwiner and arc characterizations of
/// `t ≺ t'` agree for a pair satisfying the commutation hypotheses.
pub fn equivalence_pipeline(
    t: &Contraction,
    t_prime: &Contraction,
    with_arc: bool,
    tol: &Tolerances,
) -> Result<PipelineReport, HarnackError> {
    square_pair(t, t_prime)?;
    let (x, y) = (t.matrix(), t_prime.matrix());
    let thr = tol.identity_threshold(1.0);
    let comm = |p: &CMatrix, q: &CMatrix| op_norm(&(p * q - q * p)) <= thr;
    let tt = x * x.adjoint();
    let hyp = {
        let adjoint_quasi_normal = comm(&x.adjoint(), &tt);
        let commute = comm(x, y);
        let commutes_with_modulus = comm(x, &(y.adjoint() * y));
        let dominant_commutes_with_comodulus = comm(y, &tt);
        PairHypotheses {
            adjoint_quasi_normal,
            commute,
            commutes_with_modulus,
            dominant_commutes_with_comodulus,
            all: adjoint_quasi_normal && commute && commutes_with_modulus && dominant_commutes_with_comodulus,
        }
    };
    let harnack = harnack_dominates(t_prime, t, tol)?.status == HarnackStatus::Dominated;
    let shmulyan = shmulyan_equivalent(t, t_prime, tol)?.equivalent;
    let (intertwiner, w_residual) = match intertwiner_data(t_prime, t, tol) {
        Ok(data) => (data.w.is_some() && data.w_residual.is_some_and(|r| r <= 1e-8), data.w_residual),
        Err(HarnackError::NecessaryConditionFails { .. } | HarnackError::ZDiverges { .. }) => (false, None),
        Err(e) => return Err(e),
    };
    let arc = if with_arc {
        Some(matches!(connect_arc(t, t_prime, tol)?, ArcResult::Connected(_)))
    } else {
        None
    };
    let agree = harnack == shmulyan && shmulyan == intertwiner && arc.is_none_or(|v| v == shmulyan);
    Ok(PipelineReport {
        hypotheses: hyp,
        equivalences: PairEquivalences {
            harnack,
            operator_implied: harnack,
            shmulyan,
            arc,
            intertwiner,
        },
        w_residual,
        consistent: !hyp.all || agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::make_contraction;
    use crate::numkit::{c as cx, diag_real, direct_sum, real_matrix, scalar};
    use proptest::prelude::*;
    use rand::Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn k(m: CMatrix) -> Contraction {
        make_contraction(m, &tol()).unwrap()
    }

    fn random_contraction(seed: u64, d: usize, norm: f64) -> Contraction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let n = op_norm(&m);
        k(m.scale(norm / n))
    }

    #[test]
    fn kernel_examples() {
        let g = harnack_kernel(&k(CMatrix::zeros(2, 2)), 2).unwrap();
        assert!(numkit::max_abs_diff(&g.base, &identity(6)) < 1e-15);
        let g = harnack_kernel(&k(scalar(0.5)), 1).unwrap();
        assert!(numkit::max_abs_diff(&g.base, &real_matrix(2, 2, &[1.0, 0.5, 0.5, 1.0])) < 1e-15);
        let t = random_contraction(3, 3, 0.8);
        let small = harnack_kernel(&t, 3).unwrap().base;
        let big = harnack_kernel(&t, 4).unwrap().base;
        assert!(numkit::max_abs_diff(&small, &big.view((0, 0), (12, 12)).into_owned()) == 0.0);
        assert!(harnack_kernel(&t, 5).unwrap().is_psd(&tol()));
    }

    #[test]
    fn scalar_half_over_zero() {
        let zero = k(scalar(0.0));
        let half = k(scalar(0.5));
        for (a, b) in [(&zero, &half), (&half, &zero)] {
            let v = harnack_dominates(a, b, &tol()).unwrap();
            assert_eq!(v.status, HarnackStatus::Dominated);
            assert!((v.limit - 3.0).abs() < 1e-9, "{}", v.limit);
            assert!(v.nondecreasing);
        }
        let tr = harnack_trace(&zero, &half, &(1..=64).collect::<Vec<_>>(), &tol()).unwrap();
        let c64 = *tr.constants.last().unwrap();
        assert!((2.9..=3.0).contains(&c64), "{c64}");
        assert!(tr.constants.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        // level one by hand: max eigenvalue of [[1, .5], [.5, 1]] against the identity
        assert!((tr.constants[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unimodular_scalar_against_zero() {
        let one = k(scalar(1.0));
        let zero = k(scalar(0.0));
        let v = harnack_dominates(&one, &zero, &tol()).unwrap();
        assert_eq!(v.status, HarnackStatus::NotDominated);
        assert!(v.witness.unwrap().ratio > 1e12);
        let v = harnack_dominates(&zero, &one, &tol()).unwrap();
        assert_eq!(v.status, HarnackStatus::Inconclusive);
        assert!(v.note.unwrap().contains("unbounded"));
        assert!(v.constants.windows(2).all(|w| w[1] >= w[0]));
        assert!(*v.constants.last().unwrap() > 10.0);
    }

    #[test]
    fn reflexive_with_constant_one() {
        for seed in 0..4 {
            let t = random_contraction(seed, 3, if seed % 2 == 0 { 1.0 } else { 0.7 });
            let v = harnack_dominates(&t, &t, &tol()).unwrap();
            assert_eq!(v.status, HarnackStatus::Dominated);
            assert!(v.constants.iter().all(|&c| (c - 1.0).abs() < 1e-10));
            assert!((v.limit - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_approaches_symbol_limit() {
        let a = random_contraction(11, 3, 0.3);
        let b = random_contraction(12, 3, 0.3);
        let v = harnack_dominates(&a, &b, &tol()).unwrap();
        assert_eq!(v.status, HarnackStatus::Dominated);
        // finite Toeplitz sections close the gap at an algebraic rate
        let tr = harnack_trace(&a, &b, &[16, 64, 256], &tol()).unwrap();
        let gaps: Vec<f64> = tr.constants.iter().map(|c| v.limit - c).collect();
        assert!(gaps.iter().all(|&g| g >= -1e-9 * v.limit));
        assert!(gaps[1] < gaps[0] / 6.0 && gaps[2] < gaps[1] / 6.0, "{gaps:?}");
    }

    #[test]
    fn structured_products_match_the_section() {
        let a = random_contraction(31, 3, 1.0);
        let b = random_contraction(32, 3, 0.8);
        let sec = Section::new(&a, &b);
        let adj = sec.adjoints();
        let m = sec.matrix(5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rv = |n: usize| CVector::from_fn(n, |_, _| cx(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let v = rv(sec.cols(5));
        let w = rv(m.nrows());
        assert!((sec.apply(5, &v) - &m * &v).norm() < 1e-12);
        assert!((sec.apply_adjoint(5, &w, &adj) - m.adjoint() * &w).norm() < 1e-12);
    }

    #[test]
    fn sections_match_whitening() {
        for seed in 0..6 {
            let a = random_contraction(2 * seed, 3, 0.9);
            let b = random_contraction(2 * seed + 1, 3, 0.9);
            let tr = harnack_trace(&a, &b, &[1, 2, 3], &tol()).unwrap();
            for (i, n) in [1, 2, 3].into_iter().enumerate() {
                let w = whitened_constant(a.matrix(), b.matrix(), n, &tol());
                assert!((w - tr.constants[i]).abs() <= 1e-8 * w, "{w} {}", tr.constants[i]);
            }
        }
    }

    #[test]
    fn adjoint_pair_has_same_constants() {
        let a = random_contraction(21, 3, 0.95);
        let b = random_contraction(22, 3, 0.6);
        let v = harnack_dominates(&a, &b, &tol()).unwrap();
        let w = harnack_dominates(&a.adjoint(), &b.adjoint(), &tol()).unwrap();
        assert_eq!(v.status, w.status);
        assert!((v.limit - w.limit).abs() <= 1e-8 * v.limit);
        let n = v.constants.len().min(w.constants.len());
        for i in 0..n {
            assert!((v.constants[i] - w.constants[i]).abs() <= 1e-9 * v.constants[i]);
        }
    }

    #[test]
    fn norm_one_nilpotent_against_zero() {
        let j = k(real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let zero = k(CMatrix::zeros(2, 2));
        assert_eq!(harnack_dominates(&zero, &j, &tol()).unwrap().status, HarnackStatus::Dominated);
        assert_eq!(harnack_dominates(&j, &zero, &tol()).unwrap().status, HarnackStatus::NotDominated);
    }

    #[test]
    fn positive_real_examples() {
        assert_eq!(positive_real_from(&[ONE]), vec![ONE]);
        let p = positive_real_from(&[ONE, ONE]);
        assert_eq!(p, vec![cx(2.0, 0.0), cx(2.0, 0.0)]);
        for seed in 0..20 {
            let p = positive_real_sample(4, seed);
            assert!(min_real_on_circle(&p, 1024) >= -1e-12);
        }
    }

    #[test]
    fn falsifier_examples() {
        let one = k(scalar(1.0));
        let zero = k(scalar(0.0));
        let half = k(scalar(0.5));
        let found = harnack_falsify(&one, &zero, 100.0, &[1, 2, 3], 30, 7, &tol()).unwrap();
        let cex = found.expect("1 does not dominate 0");
        assert!(cex.lambda_min < 0.0);
        let t = random_contraction(5, 3, 0.8);
        assert!(harnack_falsify(&t, &t, 1.0, &[1, 3, 5], 200, 1, &tol()).unwrap().is_none());
        assert!(harnack_falsify(&half, &zero, 3.0 * (1.0 + 1e-6), &[1, 2, 4, 8], 3000, 2, &tol())
            .unwrap()
            .is_none());
        assert!(harnack_falsify(&half, &zero, 2.5, &[1, 2, 4, 8, 16], 3000, 2, &tol())
            .unwrap()
            .is_some());
    }

    #[test]
    fn intertwiner_examples() {
        let t = random_contraction(8, 3, 0.9);
        let same = intertwiner_data(&t, &t, &tol()).unwrap();
        assert!(op_norm(&same.b0) < 1e-14 && op_norm(&same.z_partial) < 1e-14);
        assert!(op_norm(same.w.as_ref().unwrap()) < 1e-14);

        let dominant = k(diag_real(&[0.8, 1.0]));
        let dominated = k(diag_real(&[0.5, 1.0]));
        let data = intertwiner_data(&dominant, &dominated, &tol()).unwrap();
        let w = data.w.unwrap();
        let expected = (0.5 - 0.8) / (0.75f64.sqrt() * 0.6);
        assert!((w[(0, 0)].re - expected).abs() < 1e-12);
        assert!(data.w_residual.unwrap() < 1e-12);

        let err = intertwiner_data(&k(scalar(0.0)), &k(scalar(1.0)), &tol()).unwrap_err();
        assert!(matches!(err, HarnackError::ZDiverges { .. }));
        let err = intertwiner_data(&k(scalar(1.0)), &k(scalar(0.0)), &tol()).unwrap_err();
        assert!(matches!(err, HarnackError::NecessaryConditionFails { .. }));
    }

    #[test]
    fn pipeline_examples() {
        let report = equivalence_pipeline(&k(scalar(1.0)), &k(scalar(0.0)), true, &tol()).unwrap();
        assert!(report.hypotheses.all && report.consistent);
        let e = report.equivalences;
        assert!(!e.harnack && !e.shmulyan && !e.intertwiner && e.arc == Some(false));

        let m = diag_real(&[0.3, -0.6, 1.0]);
        let t = k(m.clone());
        let report = equivalence_pipeline(&t, &t, true, &tol()).unwrap();
        assert!(report.consistent && report.equivalences.harnack && report.equivalences.arc == Some(true));

        let n = numkit::diag(&[cx(0.2, 0.1), cx(0.0, 0.5), ONE]);
        let t = k(&n * &n);
        let tp = k(n.scale(0.9) + direct_sum(&CMatrix::zeros(2, 2), &scalar(0.1)));
        let report = equivalence_pipeline(&t, &tp, true, &tol()).unwrap();
        assert!(report.hypotheses.all && report.consistent);
        assert!(report.equivalences.harnack);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn level_constants_are_transitive(seed in 0u64..10_000, n in 1usize..4) {
            let a = random_contraction(seed, 2, 0.8);
            let b = random_contraction(seed + 1, 2, 0.8);
            let c = random_contraction(seed + 2, 2, 0.8);
            let ab = harnack_trace(&a, &b, &[n], &tol()).unwrap().constants[0];
            let bc = harnack_trace(&b, &c, &[n], &tol()).unwrap().constants[0];
            let ac = harnack_trace(&a, &c, &[n], &tol()).unwrap().constants[0];
            prop_assert!(ac <= ab * bc * (1.0 + 1e-9));
        }

        #[test]
        fn dominated_constant_survives_falsifier(seed in 0u64..10_000) {
            let a = random_contraction(seed, 2, 0.7);
            let b = random_contraction(seed + 7, 2, 0.7);
            let v = harnack_dominates(&a, &b, &tol()).unwrap();
            prop_assert_eq!(v.status, HarnackStatus::Dominated);
            let c = v.constant.unwrap() * (1.0 + 1e-6);
            prop_assert!(harnack_falsify(&a, &b, c, &[1, 2, 3, 5], 200, seed, &tol()).unwrap().is_none());
        }
    }
}
