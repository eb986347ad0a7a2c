mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contraction_lab::asymptotic::{
    asymptotic_limit, canonical_triangulation, class_of, reducing_isometric_part, reducing_unitary_part,
};
use contraction_lab::contraction::classify;
use contraction_lab::corpus::{generate, GenKind, GenParams, GenSpec};
use contraction_lab::harnack::{harnack_dominates, HarnackStatus};
use contraction_lab::numkit::{MatrixJson, Tolerances};
use contraction_lab::schur::{connect_arc, delta_infty_member, ArcResult};
use contraction_lab::shmulyan::{partial_isometry_part, shmulyan_dominates};
use contraction_lab::suites::{run_suite, Suite};
use serde::Serialize;
use serde_json::{json, Value};

use report::{load_contraction, load_poly, CliError, InputRecord, Report, EXIT_FALSE, EXIT_NUMERICAL, EXIT_OK};

#[derive(Parser, Debug)]
#[command(name = "contraction-lab", version, about = "Numerical oracles for matrix contractions")]
struct Cli {
    #[command(flatten)]
    tol: TolFlags,

    /// Add wall-clock time to the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct TolFlags {
    #[arg(long, global = true)]
    rank_rtol: Option<f64>,
    #[arg(long, global = true)]
    psd_atol: Option<f64>,
    #[arg(long, global = true)]
    conv_tol: Option<f64>,
    #[arg(long, global = true)]
    contraction_slack: Option<f64>,
    #[arg(long, global = true)]
    big_ratio: Option<f64>,
    /// Deepest Harnack kernel level.
    #[arg(long, global = true)]
    max_level: Option<usize>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
}

impl TolFlags {
    fn resolve(&self) -> Result<Tolerances, CliError> {
        let mut t = Tolerances::default();
        if let Some(v) = self.rank_rtol {
            t.rank_rtol = v;
        }
        if let Some(v) = self.psd_atol {
            t.psd_atol = v;
        }
        if let Some(v) = self.conv_tol {
            t.conv_tol = v;
        }
        if let Some(v) = self.contraction_slack {
            t.contraction_slack = v;
        }
        if let Some(v) = self.big_ratio {
            t.big_ratio = v;
        }
        if let Some(v) = self.max_level {
            t.max_level = v;
        }
        if let Some(v) = self.grid_points {
            t.grid_points = v;
        }
        t.validate()?;
        Ok(t)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classification, asymptotic limit, triangulation and reducing parts.
    Analyze { matrix: PathBuf },
    /// Whether B is dominated by A in the chosen order.
    Dominate {
        #[arg(long, value_enum)]
        order: Order,
        a: PathBuf,
        b: PathBuf,
    },
    /// Whether C belongs to the Shmul'yan part of the partial isometry W.
    Part { w: PathBuf, c: PathBuf },
    /// Chain of Schur-class arcs joining A to B.
    Arc { a: PathBuf, b: PathBuf },
    /// Whether the matrix polynomial F lies in the class attached to W.
    SchurMember { w: PathBuf, f: PathBuf },
    /// Emit a corpus instance as matrix JSON.
    Gen(GenArgs),
    /// Run a named property suite.
    Suite {
        #[arg(long)]
        name: String,
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Order {
    Harnack,
    Shmulyan,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Select {
    First,
    Second,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    norm_bound: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    unitary_dim: Option<usize>,
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long)]
    dominated: Option<bool>,
    /// Wrap the output in a report with flags and tolerances.
    #[arg(long)]
    report: bool,
    /// For pair kinds, print only one member.
    #[arg(long, value_enum)]
    select: Option<Select>,
}

/// What a subcommand hands back: a JSON result, its exit code and the inputs it read.
struct Outcome {
    result: Value,
    code: u8,
    inputs: Vec<InputRecord>,
    seed: Option<u64>,
    /// Print `result` as is instead of wrapping it in a report.
    bare: bool,
}

impl Outcome {
    fn new(result: impl Serialize, code: u8, inputs: Vec<InputRecord>) -> Result<Self, CliError> {
        let result = serde_json::to_value(result).map_err(|e| CliError::Numerical(e.to_string()))?;
        Ok(Outcome {
            result,
            code,
            inputs,
            seed: None,
            bare: false,
        })
    }
}

fn analyze(path: &PathBuf, tol: &Tolerances) -> Result<Outcome, CliError> {
    let (c, rec) = load_contraction(path, tol)?;
    let cls = classify(&c, tol);
    let mut out = json!({
        "shape": [rec.rows, rec.cols],
        "classification": cls,
        "labels": cls.labels(),
    });
    if c.is_square() {
        let lim = asymptotic_limit(&c, tol)?;
        let tri = canonical_triangulation(&c, tol)?;
        let class = class_of(&c, tol)?;
        let h_i = reducing_isometric_part(&c, tol)?;
        let h_u = reducing_unitary_part(&c, tol)?;
        out["class"] = json!(class.label());
        out["asymptotic"] = json!({
            "idempotent": lim.idempotent,
            "dims": {"stable": lim.null_s.dim(), "persistent": lim.fix_s.dim()},
            "doublings": lim.doublings,
            "residual": lim.residual,
            "indeterminate": lim.indeterminate,
        });
        out["triangulation"] = json!({
            "dims": {"stable": tri.stable.dim(), "persistent": tri.persistent.dim()},
            "residuals": {"lower": tri.lower_residual},
            "q_vanishes": tri.q_vanishes,
            "w_persistent": tri.w_persistent,
        });
        out["parts"] = json!({"dim_h_i": h_i.dim(), "dim_h_u": h_u.dim()});
    }
    Outcome::new(out, EXIT_OK, vec![rec])
}

fn dominate(order: Order, a: &PathBuf, b: &PathBuf, tol: &Tolerances) -> Result<Outcome, CliError> {
    let (ca, ra) = load_contraction(a, tol)?;
    let (cb, rb) = load_contraction(b, tol)?;
    if ca.shape() != cb.shape() {
        return Err(CliError::Input(format!(
            "shape mismatch: {:?} vs {:?}",
            ca.shape(),
            cb.shape()
        )));
    }
    let inputs = vec![ra, rb];
    match order {
        Order::Shmulyan => {
            let v = shmulyan_dominates(&cb, &ca, tol)?;
            let code = if v.dominates { EXIT_OK } else { EXIT_FALSE };
            Outcome::new(v, code, inputs)
        }
        Order::Harnack => {
            let v = harnack_dominates(&ca, &cb, tol)?;
            let code = match v.status {
                HarnackStatus::Dominated => EXIT_OK,
                HarnackStatus::NotDominated => EXIT_FALSE,
                HarnackStatus::Inconclusive => EXIT_NUMERICAL,
            };
            Outcome::new(v, code, inputs)
        }
    }
}

fn part(w: &PathBuf, c: &PathBuf, tol: &Tolerances) -> Result<Outcome, CliError> {
    let (cw, rw) = load_contraction(w, tol)?;
    let (cc, rc) = load_contraction(c, tol)?;
    if cw.shape() != cc.shape() {
        return Err(CliError::Input(format!(
            "shape mismatch: {:?} vs {:?}",
            cw.shape(),
            cc.shape()
        )));
    }
    let p = partial_isometry_part(&cw, tol)?;
    let m = p.membership_test(&cc, tol)?;
    let code = if m.member { EXIT_OK } else { EXIT_FALSE };
    let out = json!({
        "member": m.member,
        "z_norm": m.z_norm,
        "residual": m.residual,
        "z_block": MatrixJson::from_matrix(&m.z_block),
        "dims": {
            "initial": p.initial.dim(),
            "kernel": p.kernel.dim(),
        },
    });
    Outcome::new(out, code, vec![rw, rc])
}

fn arc(a: &PathBuf, b: &PathBuf, tol: &Tolerances) -> Result<Outcome, CliError> {
    let (ca, ra) = load_contraction(a, tol)?;
    let (cb, rb) = load_contraction(b, tol)?;
    let r = connect_arc(&ca, &cb, tol)?;
    let code = match r {
        ArcResult::Connected(_) => EXIT_OK,
        ArcResult::NotConnected { .. } => EXIT_FALSE,
        ArcResult::BudgetExhausted { .. } => EXIT_NUMERICAL,
    };
    Outcome::new(r, code, vec![ra, rb])
}

fn schur_member(w: &PathBuf, f: &PathBuf, tol: &Tolerances) -> Result<Outcome, CliError> {
    let (cw, rw) = load_contraction(w, tol)?;
    let (poly, rf) = load_poly(f)?;
    let d = delta_infty_member(&cw, &poly, tol)?;
    let code = if d.member { EXIT_OK } else { EXIT_FALSE };
    Outcome::new(d, code, vec![rw, rf])
}

fn gen(args: &GenArgs) -> Result<Outcome, CliError> {
    let kind: GenKind = args.kind.parse()?;
    let params = GenParams {
        norm_bound: args.norm_bound,
        rank: args.rank,
        unitary_dim: args.unitary_dim,
        weight: args.weight,
        dominated: args.dominated,
    };
    let spec = GenSpec::new(kind, args.dim, args.seed).with(params);
    let g = generate(&spec)?;
    let first = MatrixJson::from_matrix(g.first.matrix());
    let second = g.second.as_ref().map(|s| MatrixJson::from_matrix(s.matrix()));
    let payload = match (args.select, second) {
        (None, None) | (Some(Select::First), _) => serde_json::to_value(&first),
        (Some(Select::Second), None) => {
            return Err(CliError::Input(format!("kind {kind} produces a single matrix")));
        }
        (Some(Select::Second), Some(s)) => serde_json::to_value(&s),
        (None, Some(s)) => Ok(json!({"first": first, "second": s})),
    }
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    let result = if args.report {
        json!({"kind": kind.name(), "dim": args.dim, "flags": g.flags, "output": payload})
    } else {
        payload
    };
    let mut out = Outcome::new(result, EXIT_OK, Vec::new())?;
    out.seed = Some(args.seed);
    out.bare = !args.report;
    Ok(out)
}

fn suite(name: &str, cases: Option<usize>, seed: u64, tol: &Tolerances) -> Result<Outcome, CliError> {
    let s: Suite = name.parse().map_err(CliError::Input)?;
    let r = run_suite(s, cases.unwrap_or(s.default_cases()), seed, tol);
    let code = if r.ok { EXIT_OK } else { EXIT_FALSE };
    let mut out = Outcome::new(r, code, Vec::new())?;
    out.seed = Some(seed);
    Ok(out)
}

fn dispatch(cli: &Cli, tol: &Tolerances) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Analyze { matrix } => analyze(matrix, tol),
        Command::Dominate { order, a, b } => dominate(*order, a, b, tol),
        Command::Part { w, c } => part(w, c, tol),
        Command::Arc { a, b } => arc(a, b, tol),
        Command::SchurMember { w, f } => schur_member(w, f, tol),
        Command::Gen(args) => gen(args),
        Command::Suite { name, cases, seed } => suite(name, *cases, *seed, tol),
    }
}

fn print(v: &impl Serialize) {
    match serde_json::to_string_pretty(v) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("could not encode report: {e}"),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let start = Instant::now();

    let run = cli.tol.resolve().and_then(|tol| dispatch(&cli, &tol).map(|o| (o, tol)));
    match run {
        Ok((out, tol)) => {
            if out.bare {
                print(&out.result);
            } else {
                print(&Report {
                    command: argv,
                    version: env!("CARGO_PKG_VERSION"),
                    inputs: out.inputs,
                    tolerances: tol,
                    seed: out.seed,
                    result: out.result,
                    elapsed_ms: cli.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
                });
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("contraction-lab: {e}");
            let kind = match e {
                CliError::Input(_) => "input",
                CliError::Numerical(_) => "numerical",
            };
            print(&json!({"command": argv, "error": {"kind": kind, "message": e.to_string()}}));
            ExitCode::from(e.exit_code())
        }
    }
}
