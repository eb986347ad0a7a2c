//! Named property suites over seeded random instances.
//!
//! Each suite draws its cases from [`crate::corpus`] and from the helpers below,
//! runs the relevant operations, and checks the resulting property-level
//! identities. Suites are deterministic in `(cases, seed, tolerances)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotic::{
    asymptotic_limit, canonical_triangulation, class_of, reducing_isometric_part, reducing_unitary_part,
};
use crate::contraction::{
    classify, gram_power_convergence, make_contraction, nearest_part_partial_isometry, phase, Contraction,
};
use crate::corpus::{generate, ginibre, haar, strict, GenKind, GenParams, GenSpec};
use crate::harnack::{
    harnack_dominates, harnack_kernel, harnack_trace, intertwiner_data, equivalence_pipeline, trace_schedule,
    HarnackStatus, HarnackVerdict,
};
use crate::numkit::{compress, diag_real, direct_sum, identity, op_norm, scalar, CMatrix, Tolerances};
use crate::schur::{connect_arc, delta_infty_member, ArcResult, MatrixPoly};
use crate::shmulyan::{partial_isometry_part, shmulyan_dominates, shmulyan_equivalent};

/// Block identities between commuting pairs are checked to this accuracy.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Kernels must satisfy `λ_min >= -KERNEL_FLOOR`.
pub const KERNEL_FLOOR: f64 = 1e-9;
/// Levels at which the kernels of every contraction entering a Harnack call are audited.
const AUDIT_LEVELS: [usize; 3] = [1, 3, 8];
/// Failure details kept per report.
const MAX_FAILURES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    RouteAgreement,
    FoiasPart,
    ScalarHarnack,
    PartialIsometryParts,
    Commuting,
    Pipeline,
    Arcs,
    DeltaInfty,
    Regularity,
    KernelSoundness,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::RouteAgreement,
        Suite::FoiasPart,
        Suite::ScalarHarnack,
        Suite::PartialIsometryParts,
        Suite::Commuting,
        Suite::Pipeline,
        Suite::Arcs,
        Suite::DeltaInfty,
        Suite::Regularity,
        Suite::KernelSoundness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::RouteAgreement => "route_agreement",
            Suite::FoiasPart => "foias_part",
            Suite::ScalarHarnack => "scalar_harnack",
            Suite::PartialIsometryParts => "partial_isometry_parts",
            Suite::Commuting => "commuting",
            Suite::Pipeline => "pipeline",
            Suite::Arcs => "arcs",
            Suite::DeltaInfty => "delta_infty",
            Suite::Regularity => "regularity",
            Suite::KernelSoundness => "kernel_soundness",
        }
    }

    /// Case count used by the acceptance run.
    pub fn default_cases(self) -> usize {
        match self {
            Suite::RouteAgreement => 1000,
            Suite::FoiasPart => 250,
            Suite::ScalarHarnack => 20,
            Suite::PartialIsometryParts => 200,
            Suite::Commuting => 300,
            Suite::Pipeline => 300,
            Suite::Arcs => 401,
            Suite::DeltaInfty => 101,
            Suite::Regularity => 500,
            Suite::KernelSoundness => 200,
        }
    }

    /// Suites whose Harnack calls feed the kernel audit.
    pub fn audits_kernels(self) -> bool {
        matches!(
            self,
            Suite::FoiasPart | Suite::ScalarHarnack | Suite::PartialIsometryParts | Suite::Commuting | Suite::Pipeline
        )
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.replace('-', "_");
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                format!("unknown suite {s:?} (expected one of {})", names.join(", "))
            })
    }
}

/// Running record of kernel positivity and trace monotonicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelAudit {
    pub kernels: usize,
    pub min_eigenvalue: f64,
    pub negative_kernels: usize,
    pub verdicts: usize,
    pub decreasing_traces: usize,
}

impl Default for KernelAudit {
    fn default() -> Self {
        KernelAudit {
            kernels: 0,
            min_eigenvalue: f64::INFINITY,
            negative_kernels: 0,
            verdicts: 0,
            decreasing_traces: 0,
        }
    }
}

impl KernelAudit {
    pub fn clean(&self) -> bool {
        self.negative_kernels == 0 && self.decreasing_traces == 0
    }

    pub fn merge(&mut self, other: &KernelAudit) {
        self.kernels += other.kernels;
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.negative_kernels += other.negative_kernels;
        self.verdicts += other.verdicts;
        self.decreasing_traces += other.decreasing_traces;
    }

    fn kernel(&mut self, t: &Contraction) {
        if !t.is_square() {
            return;
        }
        for level in AUDIT_LEVELS {
            if let Ok(k) = harnack_kernel(t, level) {
                let ev = k.min_eigenvalue();
                self.kernels += 1;
                self.min_eigenvalue = self.min_eigenvalue.min(ev);
                if ev < -KERNEL_FLOOR {
                    self.negative_kernels += 1;
                }
            }
        }
    }

    fn verdict(&mut self, v: &HarnackVerdict) {
        self.verdicts += 1;
        let monotone = v.constants.windows(2).all(|w| w[1] >= w[0]);
        if !v.nondecreasing || !monotone {
            self.decreasing_traces += 1;
        }
    }

    /// `harnack_dominates(a, b)` with both operands and the verdict recorded.
    fn dominates(&mut self, a: &Contraction, b: &Contraction, tol: &Tolerances) -> Result<HarnackVerdict, String> {
        self.kernel(a);
        self.kernel(b);
        let v = harnack_dominates(a, b, tol).map_err(|e| e.to_string())?;
        self.verdict(&v);
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseFailure {
    pub case: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub cases: usize,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    /// First failures, sorted by case index.
    pub failures: Vec<CaseFailure>,
    /// Coverage counters (which branches the cases exercised).
    pub counts: BTreeMap<String, usize>,
    pub audit: KernelAudit,
    pub ok: bool,
}

impl SuiteReport {
    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} cases passed, kernel audit {} ({} kernels, {} traces)",
            self.suite,
            self.passed,
            self.cases,
            if self.audit.clean() { "clean" } else { "VIOLATED" },
            self.audit.kernels,
            self.audit.verdicts
        )
    }
}

struct Ctx<'a> {
    tol: &'a Tolerances,
    audit: KernelAudit,
    counts: BTreeMap<String, usize>,
}

impl Ctx<'_> {
    fn count(&mut self, key: &str) {
        *self.counts.entry(key.to_string()).or_default() += 1;
    }
}

type CaseResult = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> CaseResult {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn case_rng(seed: u64, case: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(case as u64);
    r
}

fn k(m: CMatrix, tol: &Tolerances) -> Result<Contraction, String> {
    make_contraction(m, tol).map_err(|e| e.to_string())
}

pub fn run_suite(suite: Suite, cases: usize, seed: u64, tol: &Tolerances) -> SuiteReport {
    let mut ctx = Ctx {
        tol,
        audit: KernelAudit::default(),
        counts: BTreeMap::new(),
    };
    let mut failures = Vec::new();
    let mut failed = 0;
    for case in 0..cases {
        let mut g = case_rng(seed, case);
        let res = match suite {
            Suite::RouteAgreement => route_agreement(&mut ctx, &mut g),
            Suite::FoiasPart => foias_part(&mut ctx, &mut g, case, cases),
            Suite::ScalarHarnack => scalar_harnack(&mut ctx, &mut g, case),
            Suite::PartialIsometryParts => partial_isometry_parts(&mut ctx, &mut g),
            Suite::Commuting => commuting(&mut ctx, &mut g, case),
            Suite::Pipeline => pipeline(&mut ctx, &mut g, case),
            Suite::Arcs => arcs(&mut ctx, &mut g, case),
            Suite::DeltaInfty => delta_infty(&mut ctx, &mut g, case),
            Suite::Regularity => regularity(&mut ctx, &mut g, case),
            Suite::KernelSoundness => kernel_soundness(&mut ctx, &mut g, case),
        };
        if let Err(detail) = res {
            failed += 1;
            if failures.len() < MAX_FAILURES {
                failures.push(CaseFailure { case, detail });
            }
        }
    }
    let audit = ctx.audit;
    SuiteReport {
        suite,
        cases,
        seed,
        passed: cases - failed,
        failed,
        failures,
        counts: ctx.counts,
        audit,
        ok: failed == 0 && audit.clean(),
    }
}

// ---------------------------------------------------------------------------
// Instance helpers

/// Random `m × n` contraction; each singular value is 1 with probability 0.3.
fn random_contraction(g: &mut ChaCha8Rng, m: usize, n: usize) -> CMatrix {
    let r = m.min(n);
    let s: Vec<f64> = (0..r)
        .map(|_| if g.random_bool(0.3) { 1.0 } else { g.random_range(0.0..0.95) })
        .collect();
    let u = haar(g, m).columns(0, r).into_owned();
    let v = haar(g, n).columns(0, r).into_owned();
    u * diag_real(&s) * v.adjoint()
}

/// `a + s X` with `s` halved until the result is a contraction.
fn shrink_into_ball(a: &CMatrix, x: &CMatrix) -> CMatrix {
    let mut s = 1.0;
    for _ in 0..60 {
        let b = a + x.scale(s);
        if op_norm(&b) <= 1.0 {
            return b;
        }
        s *= 0.5;
    }
    a.clone()
}

/// `V (U ⊕ Q) V'*` with `U` a `k × k` unitary block.
fn split_contraction(v: &CMatrix, u: &CMatrix, q: &CMatrix, v2: &CMatrix) -> CMatrix {
    v * direct_sum(u, q) * v2.adjoint()
}

// ---------------------------------------------------------------------------
// route_agreement

fn route_agreement(ctx: &mut Ctx, g: &mut ChaCha8Rng) -> CaseResult {
    let tol = ctx.tol;
    let (m, n) = if g.random_bool(0.7) {
        let d = g.random_range(1..=6);
        (d, d)
    } else {
        (g.random_range(1..=6), g.random_range(1..=6))
    };
    let am = random_contraction(g, m, n);
    let a = k(am.clone(), tol)?;
    let bm = match g.random_range(0..5) {
        0 => {
            ctx.count("independent");
            random_contraction(g, m, n)
        }
        1 => {
            ctx.count("defect_factored");
            let dd = a.defect();
            let x = ginibre(g, m, n);
            shrink_into_ball(&am, &(&dd.d_tstar * x * &dd.d_t))
        }
        2 => {
            ctx.count("small_perturbation");
            shrink_into_ball(&am, &ginibre(g, m, n).scale(1e-3))
        }
        3 => {
            ctx.count("equal");
            am.clone()
        }
        _ => {
            ctx.count("kernel_block");
            let dd = a.defect();
            let (qin, qout) = (&dd.defect_space.basis, &dd.defect_space_star.basis);
            let z = ginibre(g, qout.ncols(), qin.ncols());
            let zn = op_norm(&z);
            let scale = if g.random_bool(0.5) { 0.5 } else { 1.0 };
            let z = if zn > 0.0 { z.scale(scale / zn) } else { z };
            shrink_into_ball(&am, &(qout * z * qin.adjoint()))
        }
    };
    let b = k(bm, tol)?;
    for (x, y) in [(&b, &a), (&a, &b)] {
        let v = shmulyan_dominates(x, y, tol).map_err(|e| e.to_string())?;
        ctx.count(if v.dominates { "dominated" } else { "not_dominated" });
        let r = v.routes;
        ensure(r.range_factor == r.form_factor && r.form_factor == r.disc && v.route_agreement, || {
            format!(
                "routes disagree on {m}x{n}: range {} form {} disc {} (residuals {:.3e}, {:.3e}, radius {:.6})",
                r.range_factor, r.form_factor, r.disc, v.range_residual, v.form_residual, v.radius
            )
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// foias_part

/// Upper triangular `T` with `|T| = 1` and diagonal entries of modulus at most 0.9.
fn norm_one_triangular(g: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let mut diag = CMatrix::zeros(d, d);
    let mut upper = CMatrix::zeros(d, d);
    for i in 0..d {
        diag[(i, i)] = phase(g.random_range(0.0..std::f64::consts::TAU)) * g.random_range(0.0..0.9);
        for j in i + 1..d {
            upper[(i, j)] = Complex64::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0));
        }
    }
    // |diag + s upper| is continuous in s, below 1 at 0 and unbounded.
    let (mut lo, mut hi) = (0.0, 1.0);
    while op_norm(&(&diag + upper.scale(hi))) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if op_norm(&(&diag + upper.scale(mid))) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = &diag + upper.scale(hi);
    let n = op_norm(&t);
    t.unscale(n)
}

fn foias_part(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize, cases: usize) -> CaseResult {
    let tol = ctx.tol;
    let strict_cases = cases - cases / 5;
    if case < strict_cases {
        ctx.count("strict");
        let d = g.random_range(1..=6);
        let nb = g.random_range(0.05..=0.9);
        let spec = GenSpec::new(GenKind::Strict, d, g.random()).with(GenParams {
            norm_bound: Some(nb),
            ..Default::default()
        });
        let t = generate(&spec).map_err(|e| e.to_string())?.first;
        let zero = k(CMatrix::zeros(d, d), tol)?;
        for (a, b, label) in [(&t, &zero, "0 under T"), (&zero, &t, "T under 0")] {
            let v = ctx.audit.dominates(a, b, tol)?;
            ensure(v.status == HarnackStatus::Dominated && v.constant.is_some(), || {
                format!("{label}: {:?} for |T| = {nb:.3} (note {:?})", v.status, v.note)
            })?;
        }
        return Ok(());
    }
    let d = g.random_range(2..=6);
    ctx.count("norm_one");
    let t = k(norm_one_triangular(g, d), tol)?;
    let zero = k(CMatrix::zeros(d, d), tol)?;
    let under_zero = ctx.audit.dominates(&zero, &t, tol)?;
    ensure(under_zero.status == HarnackStatus::Dominated, || {
        format!("T under 0 reported {:?} at d = {d} (note {:?})", under_zero.status, under_zero.note)
    })?;
    let over_zero = ctx.audit.dominates(&t, &zero, tol)?;
    ensure(
        over_zero.status == HarnackStatus::NotDominated && over_zero.witness.is_some(),
        || format!("0 under T reported {:?} without witness at d = {d}", over_zero.status),
    )
}

// ---------------------------------------------------------------------------
// scalar_harnack

/// `sup_θ (1 - t²) / |1 - t e^{iθ}|²`, the symbol of the scalar Poisson kernel.
pub fn scalar_symbol_limit(t: f64) -> f64 {
    (1.0 + t.abs()) / (1.0 - t.abs())
}

fn scalar_harnack(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    let t = if case == 0 { 0.5 } else { g.random_range(-0.9..0.9) };
    let tc = k(scalar(t), tol)?;
    let zero = k(scalar(0.0), tol)?;
    let oracle = scalar_symbol_limit(t);
    for (a, b) in [(&tc, &zero), (&zero, &tc)] {
        let v = ctx.audit.dominates(a, b, tol)?;
        ensure(v.status == HarnackStatus::Dominated, || format!("t = {t}: {:?}", v.status))?;
        ensure((v.limit - oracle).abs() <= 1e-9 * oracle, || {
            format!("t = {t}: limit {} against closed form {oracle}", v.limit)
        })?;
        let levels = trace_schedule(tol.max_level);
        let trace = harnack_trace(a, b, &levels, tol).map_err(|e| e.to_string())?;
        ensure(trace.nondecreasing, || format!("t = {t}: trace decreases"))?;
        let last = *trace.constants.last().unwrap_or(&f64::NAN);
        ensure(last <= oracle * (1.0 + 1e-12), || format!("t = {t}: c² {last} above {oracle}"))?;
        if case == 0 {
            ensure((2.9..=3.0).contains(&last), || format!("t = 0.5: c² at level {} is {last}", tol.max_level))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// partial_isometry_parts

fn partial_isometry_parts(ctx: &mut Ctx, g: &mut ChaCha8Rng) -> CaseResult {
    let tol = ctx.tol;
    let d = g.random_range(2..=6);
    let rank = g.random_range(0..d);
    let spec = GenSpec::new(GenKind::PartialIsometry, d, g.random()).with(GenParams {
        rank: Some(rank),
        ..Default::default()
    });
    let w = generate(&spec).map_err(|e| e.to_string())?.first;
    let part = partial_isometry_part(&w, tol).map_err(|e| e.to_string())?;
    let (qin, qout) = (&part.kernel.basis, &part.cokernel.basis);
    let kd = qin.ncols();
    let embed = |z: &CMatrix| w.matrix() + qout * z * qin.adjoint();

    let mut candidates: Vec<(String, CMatrix, bool)> = Vec::new();
    for s in [0.3, 0.9, 1.0] {
        let z = ginibre(g, kd, kd);
        let z = z.unscale(op_norm(&z) / s);
        candidates.push((format!("|Z| = {s}"), embed(&z), s < 1.0));
    }
    // Other partial isometries: an isometric block on the kernel, and a rotated `U`.
    let p = g.random_range(1..=kd);
    let iso = haar(g, kd) * diag_real(&(0..kd).map(|i| if i < p { 1.0 } else { 0.0 }).collect::<Vec<_>>()) * haar(g, kd);
    candidates.push(("partial isometry on the kernel".into(), embed(&iso), false));
    if rank > 0 {
        let theta = g.random_range(0.1..3.0);
        candidates.push(("rotated partial isometry".into(), w.matrix() * phase(theta), false));
    }

    for (label, cm, expected) in candidates {
        let c = k(cm, tol)?;
        let member = part.membership_test(&c, tol).map_err(|e| e.to_string())?.member;
        let equivalent = shmulyan_equivalent(&w, &c, tol).map_err(|e| e.to_string())?.equivalent;
        let fwd = ctx.audit.dominates(&w, &c, tol)?;
        let bwd = ctx.audit.dominates(&c, &w, tol)?;
        let harnack = fwd.status == HarnackStatus::Dominated && bwd.status == HarnackStatus::Dominated;
        let refuted = fwd.status == HarnackStatus::NotDominated || bwd.status == HarnackStatus::NotDominated;
        ctx.count(if expected { "members" } else { "non_members" });
        ensure(member == expected && equivalent == expected && harnack == expected && refuted != expected, || {
            format!(
                "{label} (d = {d}, rank {rank}): membership {member}, Shmul'yan {equivalent}, Harnack {:?}/{:?}, expected {expected}",
                fwd.status, bwd.status
            )
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// commuting

fn commuting(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    let d = g.random_range(1..=6);
    let kind = if case % 3 == 2 { GenKind::DoublyCommutingPair } else { GenKind::CommutingPair };
    let params = GenParams {
        dominated: Some(true),
        unitary_dim: (case % 7 == 0).then_some(d),
        ..Default::default()
    };
    let pair = generate(&GenSpec::new(kind, d, g.random()).with(params)).map_err(|e| e.to_string())?;
    let (t, tp) = (pair.first, pair.second.expect("pair kind"));
    let (x, y) = (t.matrix(), tp.matrix());
    ensure(op_norm(&(x * y - y * x)) <= 1e-12, || "generated pair does not commute".into())?;

    let v = ctx.audit.dominates(&tp, &t, tol)?;
    ensure(v.status == HarnackStatus::Dominated, || {
        format!("construction not Harnack dominated: {:?} ({:?})", v.status, v.note)
    })?;
    ctx.count(kind.name());

    // Both triangulations share the stable subspace and the persistent block.
    let err = |e: crate::asymptotic::AsymptoticError| e.to_string();
    let tri = canonical_triangulation(&t, tol).map_err(err)?;
    let tri_p = canonical_triangulation(&tp, tol).map_err(err)?;
    ensure(tri.stable.equals(&tri_p.stable), || {
        format!("stable subspaces differ ({} vs {})", tri.stable.dim(), tri_p.stable.dim())
    })?;
    let (s, p) = (&tri.stable.basis, &tri.persistent.basis);
    let q2 = compress(y, s, s);
    let r2 = compress(y, s, p);
    let low2 = compress(y, p, s);
    let w2 = compress(y, p, p);
    let (q, r, w) = (&tri.q_block, &tri.r_block, &tri.w_block);
    ensure(op_norm(&low2) <= IDENTITY_TOL, || format!("T' leaves the stable subspace by {:.3e}", op_norm(&low2)))?;
    ensure(op_norm(&(&w2 - w)) <= IDENTITY_TOL, || format!("persistent blocks differ by {:.3e}", op_norm(&(&w2 - w))))?;
    let ident = op_norm(&(q * &r2 - &q2 * r - (&r2 - r) * w));
    ensure(ident <= IDENTITY_TOL, || format!("block identity residual {ident:.3e}"))?;
    let qc = op_norm(&(q * &q2 - &q2 * q));
    ensure(qc <= IDENTITY_TOL, || format!("stable blocks do not commute ({qc:.3e})"))?;
    ensure(tri.q_vanishes && tri_p.q_vanishes && tri.w_persistent, || "triangulation classes wrong".into())?;

    let lim = asymptotic_limit(&t, tol).map_err(err)?;
    let lim_p = asymptotic_limit(&tp, tol).map_err(err)?;
    ensure(lim.idempotent == lim_p.idempotent, || "only one asymptotic limit is idempotent".into())?;
    if lim.idempotent {
        ctx.count("idempotent_limit");
        let gap = op_norm(&(&lim.s - &lim_p.s));
        ensure(gap <= IDENTITY_TOL, || format!("idempotent limits differ by {gap:.3e}"))?;
        ensure(op_norm(r) <= IDENTITY_TOL && op_norm(&r2) <= IDENTITY_TOL, || "off-diagonal blocks nonzero".into())?;
        let iso = op_norm(&(w.adjoint() * w - identity(w.ncols())));
        ensure(iso <= IDENTITY_TOL, || format!("persistent block not isometric ({iso:.3e})"))?;
    }

    // Rigidity: a dominated operator of class C1. or C.1 equals the dominant one.
    let class = class_of(&t, tol).map_err(err)?;
    if class.c1_dot || class.c_dot1 {
        ctx.count("rigid");
        let gap = op_norm(&(x - y));
        ensure(gap <= IDENTITY_TOL, || format!("rigid case differs by {gap:.3e}"))?;
    }

    // Reducing isometric parts.
    let hi = reducing_isometric_part(&t, tol).map_err(err)?;
    let hi_p = reducing_isometric_part(&tp, tol).map_err(err)?;
    ensure(hi_p.is_subspace_of(&hi), || "isometric part of T' not inside that of T".into())?;
    let agree = op_norm(&((x - y) * &hi_p.basis));
    ensure(agree <= IDENTITY_TOL, || format!("T and T' differ on the isometric part of T' ({agree:.3e})"))?;
    let null_dp = &tp.defect().null_dt;
    if hi.is_subspace_of(null_dp) {
        ensure(
            hi_p.is_invariant_under(x, IDENTITY_TOL) && hi_p.is_invariant_under(&x.adjoint(), IDENTITY_TOL),
            || "isometric part of T' does not reduce T".into(),
        )?;
    }
    let back = ctx.audit.dominates(&t, &tp, tol)?;
    if back.status == HarnackStatus::Dominated {
        ctx.count("equivalent");
        ensure(hi.equals(&hi_p), || "Harnack equivalent pair with different isometric parts".into())?;
    }

    if classify(&t, tol).hyponormal {
        ctx.count("hyponormal");
        let hu = reducing_unitary_part(&t, tol).map_err(err)?;
        let hu_p = reducing_unitary_part(&tp, tol).map_err(err)?;
        ensure(hu.equals(&hu_p), || format!("unitary parts differ ({} vs {})", hu.dim(), hu_p.dim()))?;
        let gap = op_norm(&((x - y) * &hu.basis));
        ensure(gap <= IDENTITY_TOL, || format!("unitary parts act differently ({gap:.3e})"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline

fn pipeline(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    let d = g.random_range(1..=6);
    let spec = GenSpec::new(GenKind::DoublyCommutingPair, d, g.random()).with(GenParams {
        dominated: Some(case % 2 == 0),
        ..Default::default()
    });
    let pair = generate(&spec).map_err(|e| e.to_string())?;
    let (t, tp) = (pair.first, pair.second.expect("pair kind"));
    let report = equivalence_pipeline(&t, &tp, false, tol).map_err(|e| e.to_string())?;
    ensure(report.hypotheses.all, || format!("hypotheses fail: {:?}", report.hypotheses))?;
    let eq = report.equivalences;
    ctx.count(if eq.harnack { "dominated" } else { "not_dominated" });
    ensure(report.consistent, || {
        format!("statements disagree: Harnack {}, Shmul'yan {}, intertwiner {}", eq.harnack, eq.shmulyan, eq.intertwiner)
    })?;
    let v = ctx.audit.dominates(&tp, &t, tol)?;
    ensure((v.status == HarnackStatus::Dominated) == eq.harnack, || "repeated Harnack call disagrees".into())?;
    if let Ok(data) = intertwiner_data(&tp, &t, tol) {
        if data.w.is_some() {
            ctx.count("intertwiner");
            let r = data.w_residual.unwrap_or(f64::INFINITY);
            ensure(r <= IDENTITY_TOL, || format!("intertwiner residual {r:.3e}"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// arcs

fn circle_max_norm(f: &MatrixPoly, points: usize) -> f64 {
    (0..points)
        .map(|i| op_norm(&f.eval(phase(std::f64::consts::TAU * i as f64 / points as f64))))
        .fold(0.0, f64::max)
}

fn arcs(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    if case == 0 {
        let (a, b) = (k(scalar(0.0), tol)?, k(scalar(0.5), tol)?);
        let ArcResult::Connected(cert) = connect_arc(&a, &b, tol).map_err(|e| e.to_string())? else {
            return Err("scalar pair (0, 0.5) not connected".into());
        };
        let limit = 0.5f64.atanh() + 1e-6;
        return ensure(cert.bound <= limit, || format!("scalar bound {} above {limit}", cert.bound));
    }
    let d = g.random_range(1..=4);
    let kdim = g.random_range(0..=d);
    let (v, v2) = (haar(g, d), haar(g, d));
    let u = haar(g, kdim);
    let n1 = g.random_range(0.05..0.95);
    let q1 = strict(g, d - kdim, n1);
    let a = k(split_contraction(&v, &u, &q1, &v2), tol)?;
    let equivalent = case % 2 == 1;
    let bm = if equivalent {
        let n2 = g.random_range(0.05..0.95);
        split_contraction(&v, &u, &strict(g, d - kdim, n2), &v2)
    } else if kdim > 0 && g.random_bool(0.5) {
        // Same splitting, different unitary block.
        split_contraction(&v, &(&u * phase(g.random_range(0.2..3.0))), &q1, &v2)
    } else {
        // Different isometric kernel dimension.
        let k2 = if kdim == d { kdim - 1 } else { kdim + 1 };
        split_contraction(&v, &haar(g, k2), &strict(g, d - k2, 0.5), &v2)
    };
    let b = k(bm, tol)?;
    let res = connect_arc(&a, &b, tol).map_err(|e| e.to_string())?;
    match (equivalent, res) {
        (true, ArcResult::Connected(cert)) => {
            ctx.count("connected");
            ensure(cert.endpoint_residual <= 1e-8, || format!("endpoint residual {:.3e}", cert.endpoint_residual))?;
            ensure(cert.bound.is_finite(), || "infinite chain bound".into())?;
            for arc in &cert.arcs {
                let bound = 1.0 + tol.contraction_slack;
                ensure(arc.sup_norm.upper <= bound, || format!("arc certificate {} above 1", arc.sup_norm.upper))?;
                let sampled = circle_max_norm(&arc.poly, 256);
                ensure(sampled <= bound + 1e-12, || format!("arc reaches norm {sampled} on the circle"))?;
            }
            ctx.counts
                .entry("hops".into())
                .and_modify(|h| *h += cert.arcs.len())
                .or_insert(cert.arcs.len());
            Ok(())
        }
        (true, other) => Err(format!("equivalent pair (d = {d}, unitary {kdim}) gave {other:?}")),
        (false, ArcResult::NotConnected { .. }) => {
            ctx.count("not_connected");
            Ok(())
        }
        (false, other) => Err(format!("non-equivalent pair gave {}", outcome_name(&other))),
    }
}

fn outcome_name(r: &ArcResult) -> &'static str {
    match r {
        ArcResult::Connected(_) => "connected",
        ArcResult::NotConnected { .. } => "not_connected",
        ArcResult::BudgetExhausted { .. } => "budget_exhausted",
    }
}

// ---------------------------------------------------------------------------
// delta_infty

fn delta_infty(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    if case == 0 {
        let w = k(scalar(0.0), tol)?;
        let f = MatrixPoly::new(vec![scalar(0.0), scalar(1.0)]).map_err(|e| e.to_string())?;
        let r = delta_infty_member(&w, &f, tol).map_err(|e| e.to_string())?;
        return ensure(!r.member, || "F(λ) = λ accepted for w = 0".into());
    }
    let d = g.random_range(2..=6);
    let rank = g.random_range(0..d);
    let spec = GenSpec::new(GenKind::PartialIsometry, d, g.random()).with(GenParams {
        rank: Some(rank),
        ..Default::default()
    });
    let w = generate(&spec).map_err(|e| e.to_string())?.first;
    let part = partial_isometry_part(&w, tol).map_err(|e| e.to_string())?;
    let (qin, qout) = (&part.kernel.basis, &part.cokernel.basis);
    let kd = qin.ncols();

    let constant = MatrixPoly::constant(w.matrix().clone());
    let r = delta_infty_member(&w, &constant, tol).map_err(|e| e.to_string())?;
    ensure(r.member, || "constant function rejected".into())?;

    // F₀(λ) = s Z ((1 + λ)/2)^m with Z unitary: sup |F₀| = s, attained at λ = 1.
    let z = haar(g, kd);
    let m = g.random_range(1..=3);
    let binom: Vec<f64> = (0..=m).map(|j| binomial(m, j) / 2f64.powi(m as i32)).collect();
    for s in [0.999, 1.001] {
        let coeffs: Vec<CMatrix> = binom
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                let block = qout * z.scale(s * b) * qin.adjoint();
                if j == 0 {
                    w.matrix() + block
                } else {
                    block
                }
            })
            .collect();
        let f = MatrixPoly::new(coeffs).map_err(|e| e.to_string())?;
        let r = delta_infty_member(&w, &f, tol).map_err(|e| e.to_string())?;
        ctx.count(if r.member { "accepted" } else { "rejected" });
        ensure(r.member == (s < 1.0), || {
            format!("scale {s} (d = {d}, rank {rank}, degree {m}): member {} with sup in [{}, {}]", r.member, r.sup_norm.lower, r.sup_norm.upper)
        })?;
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

// ---------------------------------------------------------------------------
// regularity

fn regularity(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    let d = g.random_range(1..=6);
    let kinds = [GenKind::Generic, GenKind::Strict, GenKind::PartialIsometry, GenKind::Normal, GenKind::QuasiIsometry];
    let kind = kinds[case % kinds.len()];
    let t = generate(&GenSpec::new(kind, d, g.random())).map_err(|e| e.to_string())?.first;
    ctx.count(kind.name());
    let pc = gram_power_convergence(&t, tol);
    ensure(pc.converged, || format!("{kind} d = {d}: (T*T)^n residual {:.3e}", pc.residual))?;
    let w = nearest_part_partial_isometry(&t, tol).map_err(|e| e.to_string())?;
    let eq = shmulyan_equivalent(&t, &w, tol).map_err(|e| e.to_string())?;
    ensure(eq.equivalent, || format!("{kind} d = {d}: partial isometry part is not equivalent"))?;
    ensure(classify(&w, tol).partial_isometry, || "part is not a partial isometry".into())
}

// ---------------------------------------------------------------------------
// kernel_soundness

fn kernel_soundness(ctx: &mut Ctx, g: &mut ChaCha8Rng, case: usize) -> CaseResult {
    let tol = ctx.tol;
    let d = g.random_range(1..=5);
    let kind = GenKind::ALL[case % GenKind::ALL.len()];
    let inst = generate(&GenSpec::new(kind, d, g.random())).map_err(|e| e.to_string())?;
    let t = inst.first;
    for level in [0, 1, 2, 4, 8, 16] {
        let kern = harnack_kernel(&t, level).map_err(|e| e.to_string())?;
        let ev = kern.min_eigenvalue();
        ctx.audit.kernels += 1;
        ctx.audit.min_eigenvalue = ctx.audit.min_eigenvalue.min(ev);
        if ev < -KERNEL_FLOOR {
            ctx.audit.negative_kernels += 1;
            return Err(format!("{kind} d = {d}: kernel at level {level} has eigenvalue {ev:.3e}"));
        }
    }
    let other = match inst.second {
        Some(s) => s,
        None => k(random_contraction(g, d, d), tol)?,
    };
    for (a, b) in [(&t, &other), (&other, &t)] {
        let v = ctx.audit.dominates(a, b, tol)?;
        ensure(v.nondecreasing, || format!("{kind} d = {d}: constants decrease: {:?}", v.constants))?;
    }
    ctx.count(kind.name());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("partial-isometry-parts".parse::<Suite>().unwrap(), Suite::PartialIsometryParts);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn norm_one_triangular_has_small_spectrum() {
        let mut g = case_rng(3, 0);
        for d in 2..=6 {
            let t = norm_one_triangular(&mut g, d);
            assert!((op_norm(&t) - 1.0).abs() < 1e-12);
            assert!((0..d).all(|i| t[(i, i)].norm() <= 0.9));
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(3, 1), 3.0);
        assert_eq!(binomial(4, 2), 6.0);
    }

    #[test]
    fn small_runs_pass() {
        let tol = Tolerances::default();
        for s in Suite::ALL {
            let r = run_suite(s, 4, 11, &tol);
            assert!(r.ok, "{}: {:?}", r.summary(), r.failures);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let tol = Tolerances::default();
        let a = serde_json::to_string(&run_suite(Suite::RouteAgreement, 20, 5, &tol)).unwrap();
        let b = serde_json::to_string(&run_suite(Suite::RouteAgreement, 20, 5, &tol)).unwrap();
        assert_eq!(a, b);
    }
}
