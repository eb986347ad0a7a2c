//! Seeded generators for structured contractions and pairs.
//!
//! Every instance is built so that the structure it advertises holds by
//! construction; the structure is then re-checked with [`classify`] in tests.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contraction::{make_contraction, phase, Contraction, ContractionError};
use crate::numkit::{self, c, diag, direct_sum, identity, op_norm, CMatrix, Tolerances, ONE, ZERO};

/// Flag carried by finite truncations of infinite shift models.
pub const TRUNCATED_FLAG: &str = "truncated-infinite-model";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Contraction(#[from] ContractionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Generic,
    Strict,
    Unitary,
    PartialIsometry,
    Normal,
    CommutingPair,
    DoublyCommutingPair,
    #[serde(rename = "direct_sum_U_plus_Q")]
    DirectSumUPlusQ,
    NilpotentShift,
    QuasiIsometry,
}

impl GenKind {
    pub const ALL: [GenKind; 10] = [
        GenKind::Generic,
        GenKind::Strict,
        GenKind::Unitary,
        GenKind::PartialIsometry,
        GenKind::Normal,
        GenKind::CommutingPair,
        GenKind::DoublyCommutingPair,
        GenKind::DirectSumUPlusQ,
        GenKind::NilpotentShift,
        GenKind::QuasiIsometry,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GenKind::Generic => "generic",
            GenKind::Strict => "strict",
            GenKind::Unitary => "unitary",
            GenKind::PartialIsometry => "partial_isometry",
            GenKind::Normal => "normal",
            GenKind::CommutingPair => "commuting_pair",
            GenKind::DoublyCommutingPair => "doubly_commuting_pair",
            GenKind::DirectSumUPlusQ => "direct_sum_U_plus_Q",
            GenKind::NilpotentShift => "nilpotent_shift",
            GenKind::QuasiIsometry => "quasi_isometry",
        }
    }

    pub fn is_pair(self) -> bool {
        matches!(self, GenKind::CommutingPair | GenKind::DoublyCommutingPair)
    }
}

impl fmt::Display for GenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GenKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GenKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CorpusError::InvalidSpec(format!("unknown kind {s:?}")))
    }
}

/// Kind-specific knobs. Unset fields are drawn from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    /// Norm of the strict part (`Q` blocks, strict instances). Default 0.9.
    pub norm_bound: Option<f64>,
    /// Rank of a partial isometry, or number of unit singular values.
    pub rank: Option<usize>,
    /// Size of the unitary block in direct sums and commuting pairs.
    pub unitary_dim: Option<usize>,
    /// First weight of the shift.
    pub weight: Option<f64>,
    /// Doubly commuting pairs: force the second to Harnack dominate the first.
    pub dominated: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub dim: usize,
    pub kind: GenKind,
    pub seed: u64,
    #[serde(default)]
    pub params: GenParams,
}

impl GenSpec {
    pub fn new(kind: GenKind, dim: usize, seed: u64) -> Self {
        GenSpec {
            dim,
            kind,
            seed,
            params: GenParams::default(),
        }
    }

    pub fn with(mut self, params: GenParams) -> Self {
        self.params = params;
        self
    }
}

/// One contraction or a pair, with corpus flags.
#[derive(Debug, Clone, Serialize)]
pub struct Generated {
    pub spec: GenSpec,
    pub first: Contraction,
    pub second: Option<Contraction>,
    pub flags: Vec<String>,
}

pub fn generate(spec: &GenSpec) -> Result<Generated, CorpusError> {
    let d = spec.dim;
    if d == 0 || d > 64 {
        return Err(CorpusError::InvalidSpec(format!("dimension {d} outside 1..=64")));
    }
    let p = spec.params;
    let nb = p.norm_bound.unwrap_or(0.9);
    if !(nb > 0.0 && nb < 1.0) {
        return Err(CorpusError::InvalidSpec(format!("norm_bound {nb} outside (0, 1)")));
    }
    if let Some(r) = p.rank.or(p.unitary_dim) {
        if r > d {
            return Err(CorpusError::InvalidSpec(format!("rank {r} exceeds dimension {d}")));
        }
    }
    if let Some(w) = p.weight {
        if !(w.abs() <= 1.0) {
            return Err(CorpusError::InvalidSpec(format!("weight {w} outside [-1, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((spec.kind as u64) << 56));
    let g = &mut rng;
    let tol = Tolerances::default();
    let mut flags = Vec::new();
    let (first, second) = match spec.kind {
        GenKind::Generic => {
            let ones = p.rank.unwrap_or_else(|| g.random_range(0..=d));
            let s: Vec<f64> = (0..d).map(|i| if i < ones { 1.0 } else { g.random_range(0.0..0.95) }).collect();
            (haar(g, d) * numkit::diag_real(&s) * haar(g, d).adjoint(), None)
        }
        GenKind::Strict => (strict(g, d, nb), None),
        GenKind::Unitary => (haar(g, d), None),
        GenKind::PartialIsometry => {
            let r = p.rank.unwrap_or_else(|| g.random_range(0..=d));
            (partial_isometry(g, d, r), None)
        }
        GenKind::Normal => {
            let unimodular = p.unitary_dim.unwrap_or_else(|| g.random_range(0..=d));
            let ev: Vec<Complex64> = (0..d)
                .map(|i| if i < unimodular { unit(g) } else { disc_point(g, nb) })
                .collect();
            let v = haar(g, d);
            (&v * diag(&ev) * v.adjoint(), None)
        }
        GenKind::CommutingPair => {
            let k = p.unitary_dim.unwrap_or_else(|| g.random_range(0..=d / 2));
            let (t, tp) = commuting_pair(g, d, k, nb);
            (t, Some(tp))
        }
        GenKind::DoublyCommutingPair => {
            let dominated = p.dominated.unwrap_or_else(|| g.random_bool(0.5));
            let mut a = Vec::with_capacity(d);
            let mut b = Vec::with_capacity(d);
            for _ in 0..d {
                match g.random_range(0..4) {
                    0 => {
                        let u = unit(g);
                        a.push(u);
                        b.push(if dominated || g.random_bool(0.5) { u } else { disc_point(g, nb) });
                    }
                    1 if !dominated => {
                        a.push(disc_point(g, nb));
                        b.push(unit(g));
                    }
                    _ => {
                        a.push(disc_point(g, nb));
                        b.push(disc_point(g, nb));
                    }
                }
            }
            let v = haar(g, d);
            (&v * diag(&a) * v.adjoint(), Some(&v * diag(&b) * v.adjoint()))
        }
        GenKind::DirectSumUPlusQ => {
            let k = p.unitary_dim.unwrap_or(d / 2);
            let u = if k > 0 { haar(g, k) } else { CMatrix::zeros(0, 0) };
            let q = if k < d { strict(g, d - k, nb) } else { CMatrix::zeros(0, 0) };
            (direct_sum(&u, &q), None)
        }
        GenKind::NilpotentShift => {
            flags.push(TRUNCATED_FLAG.to_string());
            let w = p.weight.unwrap_or(0.0);
            let mut t = CMatrix::zeros(d, d);
            for i in 0..d.saturating_sub(1) {
                t[(i + 1, i)] = if i == 0 { c(w, 0.0) } else { ONE };
            }
            (t, None)
        }
        GenKind::QuasiIsometry => {
            let k = p.rank.unwrap_or_else(|| g.random_range(0..=d));
            let v = if k > 0 { haar(g, k) } else { CMatrix::zeros(0, 0) };
            let w = haar(g, d);
            (&w * direct_sum(&v, &CMatrix::zeros(d - k, d - k)) * w.adjoint(), None)
        }
    };
    let first = make_contraction(first, &tol)?;
    let second = second.map(|m| make_contraction(m, &tol)).transpose()?;
    Ok(Generated {
        spec: *spec,
        first,
        second,
        flags,
    })
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(g: &mut ChaCha8Rng, r: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(r, cols, |_, _| {
        Complex64::new(g.sample(StandardNormal), g.sample(StandardNormal))
    })
}

/// Haar unitary: QR of a Ginibre matrix with the phases of `R` divided out.
pub fn haar(g: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let qr = ginibre(g, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    let ph: Vec<Complex64> = (0..d)
        .map(|i| {
            let v = r[(i, i)];
            if v.norm() > 0.0 { v / v.norm() } else { ONE }
        })
        .collect();
    q * diag(&ph)
}

pub fn unit(g: &mut ChaCha8Rng) -> Complex64 {
    phase(g.random_range(0.0..std::f64::consts::TAU))
}

fn disc_point(g: &mut ChaCha8Rng, radius: f64) -> Complex64 {
    unit(g) * radius * g.random::<f64>().sqrt()
}

/// Random matrix with norm exactly `nb`.
pub fn strict(g: &mut ChaCha8Rng, d: usize, nb: f64) -> CMatrix {
    let m = ginibre(g, d, d);
    let n = op_norm(&m);
    m.scale(nb / n)
}

fn partial_isometry(g: &mut ChaCha8Rng, d: usize, r: usize) -> CMatrix {
    let mut pattern: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        pattern.swap(i, g.random_range(0..=i));
    }
    let mut proj = vec![0.0; d];
    for &i in &pattern[..r] {
        proj[i] = 1.0;
    }
    haar(g, d) * numkit::diag_real(&proj) * haar(g, d).adjoint()
}

/// `p(M), q(M)` for `M = V (U ⊕ Q) V*`. With a unitary block, `p` and `q` agree
/// with `z` on the spectrum of `U`; otherwise both are rescaled into the ball.
fn commuting_pair(g: &mut ChaCha8Rng, d: usize, k: usize, nb: f64) -> (CMatrix, CMatrix) {
    let ev: Vec<Complex64> = (0..k).map(|_| unit(g)).collect();
    let q = strict(g, d - k, 0.7 * nb);
    let v = haar(g, d);
    let m = &v * direct_sum(&diag(&ev), &q) * v.adjoint();
    let deg = g.random_range(1..=3);
    let poly = |g: &mut ChaCha8Rng| -> Vec<Complex64> {
        (0..=deg)
            .map(|_| Complex64::new(g.sample(StandardNormal), g.sample(StandardNormal)))
            .collect()
    };
    if k == 0 {
        let make = |g: &mut ChaCha8Rng| {
            let x = eval(&poly(g), &m);
            let n = op_norm(&x);
            if n == 0.0 { x } else { x.scale(g.random_range(0.3..1.0) * nb / n) }
        };
        let t = make(g);
        return (t, make(g));
    }
    // m_U(z) = Π (z - u_i) vanishes on the unitary block.
    let mut min_poly = vec![ONE];
    for &u in &ev {
        let mut next = vec![ZERO; min_poly.len() + 1];
        for (i, &a) in min_poly.iter().enumerate() {
            next[i + 1] += a;
            next[i] -= a * u;
        }
        min_poly = next;
    }
    let mq = eval(&min_poly, &q);
    let make = |g: &mut ChaCha8Rng| {
        let r = poly(g);
        let rq = &mq * eval(&r, &q);
        let n = op_norm(&rq);
        let scale = if n == 0.0 { 0.0 } else { g.random_range(0.0..0.25) / n };
        // p(z) = z + scale · m_U(z) r(z)
        let mut p = vec![ZERO; min_poly.len() + r.len()];
        p[1] = ONE;
        for (i, &a) in min_poly.iter().enumerate() {
            for (j, &b) in r.iter().enumerate() {
                p[i + j] += a * b * scale;
            }
        }
        eval(&p, &m)
    };
    let t = make(g);
    (t, make(g))
}

fn eval(p: &[Complex64], m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    p.iter()
        .rev()
        .fold(CMatrix::zeros(n, n), |acc, &a| acc * m + identity(n).map(|v| v * a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::asymptotic_limit;
    use crate::contraction::classify;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn run(kind: GenKind, dim: usize, seed: u64) -> Generated {
        generate(&GenSpec::new(kind, dim, seed)).unwrap()
    }

    #[test]
    fn partial_isometry_identity() {
        let g = run(GenKind::PartialIsometry, 2, 5);
        let a = g.first.matrix();
        assert!(op_norm(&(a * a.adjoint() * a - a)) < 1e-12);
    }

    #[test]
    fn commuting_pair_commutes() {
        for seed in 0..10 {
            let g = run(GenKind::CommutingPair, 3, seed);
            let (a, b) = (g.first.matrix(), g.second.as_ref().unwrap().matrix());
            assert!(op_norm(&(a * b - b * a)) < 1e-13);
        }
    }

    #[test]
    fn shift_at_zero_weight_has_idempotent_limit() {
        let g = run(GenKind::NilpotentShift, 4, 0);
        assert_eq!(g.flags, vec![TRUNCATED_FLAG.to_string()]);
        let lim = asymptotic_limit(&g.first, &tol()).unwrap();
        assert!(lim.idempotent);
        let w = generate(&GenSpec::new(GenKind::NilpotentShift, 4, 0).with(GenParams {
            weight: Some(0.5),
            ..Default::default()
        }))
        .unwrap();
        assert_eq!(w.first.matrix()[(1, 0)], c(0.5, 0.0));
    }

    #[test]
    fn same_spec_same_output() {
        for kind in GenKind::ALL {
            let a = run(kind, 4, 17);
            let b = run(kind, 4, 17);
            assert_eq!(a.first.matrix(), b.first.matrix());
            assert_eq!(kind.is_pair(), a.second.is_some());
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GenSpec::new(GenKind::Strict, 0, 1)).is_err());
        let bad = GenSpec::new(GenKind::PartialIsometry, 2, 1).with(GenParams {
            rank: Some(3),
            ..Default::default()
        });
        assert!(matches!(generate(&bad), Err(CorpusError::InvalidSpec(_))));
        let bad = GenSpec::new(GenKind::Strict, 2, 1).with(GenParams {
            norm_bound: Some(1.5),
            ..Default::default()
        });
        assert!(generate(&bad).is_err());
        assert!("direct_sum_U_plus_Q".parse::<GenKind>().is_ok());
        assert!("bogus".parse::<GenKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn instances_have_their_structure(seed in 0u64..100_000, dim in 1usize..7) {
            let t = tol();
            prop_assert!(classify(&run(GenKind::Unitary, dim, seed).first, &t).unitary);
            prop_assert!(classify(&run(GenKind::PartialIsometry, dim, seed).first, &t).partial_isometry);
            prop_assert!(classify(&run(GenKind::Normal, dim, seed).first, &t).quasi_normal);
            prop_assert!(classify(&run(GenKind::Strict, dim, seed).first, &t).strict);
            prop_assert!(classify(&run(GenKind::QuasiIsometry, dim, seed).first, &t).quasi_isometry);
            let ds = run(GenKind::DirectSumUPlusQ, dim, seed);
            let k = dim / 2;
            let u = ds.first.matrix().view((0, 0), (k, k)).into_owned();
            prop_assert!(op_norm(&(u.adjoint() * &u - identity(k))) < 1e-12);
            let pair = run(GenKind::DoublyCommutingPair, dim, seed);
            let (a, b) = (pair.first.matrix(), pair.second.as_ref().unwrap().matrix());
            prop_assert!(op_norm(&(a * b - b * a)) < 1e-12);
            prop_assert!(op_norm(&(a * b.adjoint() - b.adjoint() * a)) < 1e-12);
            let cp = run(GenKind::CommutingPair, dim, seed);
            let (a, b) = (cp.first.matrix(), cp.second.as_ref().unwrap().matrix());
            prop_assert!(op_norm(&(a * b - b * a)) < 1e-12);
        }
    }
}
