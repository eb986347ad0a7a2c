//! Input loading, error classification and the JSON report envelope.

use std::fmt;
use std::path::Path;

use contraction_lab::asymptotic::AsymptoticError;
use contraction_lab::contraction::{make_contraction, Contraction, ContractionError};
use contraction_lab::corpus::CorpusError;
use contraction_lab::harnack::HarnackError;
use contraction_lab::numkit::{CMatrix, MatrixJson, NumError, Tolerances};
use contraction_lab::schur::{MatrixPoly, SchurError};
use contraction_lab::shmulyan::ShmulyanError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FALSE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::ShapeMismatch { .. }
            | NumError::NonFinite
            | NumError::Encoding(_)
            | NumError::InvalidTolerance(_)
            | NumError::NotHermitian { .. } => CliError::Input(e.to_string()),
            NumError::NotPsd { .. } | NumError::Infeasible { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ContractionError> for CliError {
    fn from(e: ContractionError) -> Self {
        match e {
            ContractionError::Num(n) => n.into(),
            ContractionError::NotDecomposable(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<AsymptoticError> for CliError {
    fn from(e: AsymptoticError) -> Self {
        match e {
            AsymptoticError::Contraction(c) => c.into(),
            AsymptoticError::NotSquare(..) => CliError::Input(e.to_string()),
            AsymptoticError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ShmulyanError> for CliError {
    fn from(e: ShmulyanError) -> Self {
        match e {
            ShmulyanError::Contraction(c) => c.into(),
            ShmulyanError::Asymptotic(a) => a.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SchurError> for CliError {
    fn from(e: SchurError) -> Self {
        match e {
            SchurError::Contraction(c) => c.into(),
            SchurError::Shmulyan(s) => s.into(),
            SchurError::NotSchur { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<HarnackError> for CliError {
    fn from(e: HarnackError) -> Self {
        match e {
            HarnackError::Contraction(c) => c.into(),
            HarnackError::Asymptotic(a) => a.into(),
            HarnackError::Shmulyan(s) => s.into(),
            HarnackError::Num(n) => n.into(),
            HarnackError::Schur(s) => s.into(),
            HarnackError::ShapeMismatch(..) | HarnackError::NotSquare(_) => CliError::Input(e.to_string()),
            HarnackError::NecessaryConditionFails { .. } | HarnackError::ZDiverges { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Contraction(c) => c.into(),
            CorpusError::InvalidSpec(_) => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
    pub cols: usize,
}

fn read(path: &Path) -> Result<(Vec<u8>, String), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let hash = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, hash))
}

pub fn load_matrix(path: &Path) -> Result<(CMatrix, InputRecord), CliError> {
    let (bytes, sha256) = read(path)?;
    let json: MatrixJson = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("{}: malformed matrix JSON: {e}", path.display())))?;
    let m = json.to_matrix()?;
    let rec = InputRecord {
        path: path.display().to_string(),
        sha256,
        rows: m.nrows(),
        cols: m.ncols(),
    };
    Ok((m, rec))
}

pub fn load_contraction(path: &Path, tol: &Tolerances) -> Result<(Contraction, InputRecord), CliError> {
    let (m, rec) = load_matrix(path)?;
    let c = make_contraction(m, tol).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((c, rec))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolyJson {
    Bare(Vec<MatrixJson>),
    Wrapped { coeffs: Vec<MatrixJson> },
}

/// A matrix polynomial given as `[M0, M1, ...]` or `{"coeffs": [M0, M1, ...]}`.
pub fn load_poly(path: &Path) -> Result<(MatrixPoly, InputRecord), CliError> {
    let (bytes, sha256) = read(path)?;
    let json: PolyJson = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("{}: malformed polynomial JSON: {e}", path.display())))?;
    let coeffs = match json {
        PolyJson::Bare(c) | PolyJson::Wrapped { coeffs: c } => c,
    };
    let mats = coeffs
        .iter()
        .map(|m| m.to_matrix())
        .collect::<Result<Vec<_>, _>>()?;
    let poly = MatrixPoly::new(mats)?;
    let (rows, cols) = poly.shape();
    Ok((
        poly,
        InputRecord {
            path: path.display().to_string(),
            sha256,
            rows,
            cols,
        },
    ))
}

#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub command: Vec<String>,
    pub version: &'static str,
    pub inputs: Vec<InputRecord>,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub result: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}
