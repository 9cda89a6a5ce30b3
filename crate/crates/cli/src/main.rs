//! `tfheat`: batch driver for the time-fractional heat equation solver.
//!
//! Grid sizes follow the literature's `M x (N+1)` naming: a "128x128" run has
//! `M = 128` time steps and 128 spatial subdivisions, i.e. `--n 127` interior
//! points. Tables use the customary row and column labels (delta, `M=32`,
//! `128x128`, `k=5`, ...).

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tfheat::hmatrix::LeafKind;
use tfheat::wrmg::solve_problem;
use tfheat::{
    CycleConfig, ErrorStudy, HMatrix, HMatrixConfig, InitialGuess, L1Coefficients, MeshKind,
    Problem, ProblemKind, SolveReport, SpaceTimeField, TemporalMesh,
};

const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const THREADS_VAR: &str = "TFHEAT_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "tfheat",
    version,
    about = "Multigrid waveform relaxation for the time-fractional heat equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and write a JSON (or CSV) report.
    #[command(args_override_self = true)]
    Solve(SolveArgs),
    /// Errors and observed orders for doubling numbers of time steps.
    #[command(args_override_self = true)]
    OrderStudy(OrderArgs),
    /// Compression error and storage of the time operator.
    #[command(args_override_self = true)]
    HmatCheck(HmatArgs),
    /// Wall-clock timings over a range of grid sizes.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
    /// Reference experiment tables as CSV.
    #[command(args_override_self = true)]
    Table(TableArgs),
    /// Write the dense time operator as CSV (row, col, value; 1-based).
    #[command(args_override_self = true)]
    DumpR(OperatorArgs),
    /// Print the block tree of the compressed time operator.
    #[command(args_override_self = true)]
    Tree(OperatorArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProblemArg {
    Heat1d,
    Heat2d,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Heat1d => ProblemKind::Heat1d,
            ProblemArg::Heat2d => ProblemKind::Heat2d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MeshArg {
    Graded,
    Uniform,
}

impl From<MeshArg> for MeshKind {
    fn from(m: MeshArg) -> Self {
        match m {
            MeshArg::Graded => MeshKind::Graded,
            MeshArg::Uniform => MeshKind::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// `v01`, `v11`, `w10`, ...: cycle letter, pre- and post-smoothing counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Cycle {
    gamma: usize,
    pre: usize,
    post: usize,
}

impl std::fmt::Display for Cycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let letter = if self.gamma == 1 { 'v' } else { 'w' };
        write!(f, "{letter}{}{}", self.pre, self.post)
    }
}

fn parse_cycle(s: &str) -> Result<Cycle, String> {
    let lower = s.to_ascii_lowercase();
    let mut chars = lower.chars();
    let gamma = match chars.next() {
        Some('v') => 1,
        Some('w') => 2,
        _ => return Err(format!("cycle must look like v01, v11 or w10, got '{s}'")),
    };
    let digits: Vec<usize> = chars
        .map(|c| c.to_digit(10).map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| format!("bad smoothing counts in '{s}'"))?;
    match digits[..] {
        [pre, post] if pre + post > 0 => Ok(Cycle { gamma, pre, post }),
        _ => Err(format!(
            "cycle must have two smoothing digits with a positive sum, got '{s}'"
        )),
    }
}

fn parse_delta(s: &str) -> Result<f64, String> {
    let delta: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if delta > 0.0 && delta < 1.0 {
        Ok(delta)
    } else {
        Err(format!("fractional order must lie in (0, 1), got {delta}"))
    }
}

fn parse_guess(s: &str) -> Result<InitialGuess, String> {
    s.parse().map_err(|e: tfheat::Error| e.to_string())
}

#[derive(Args, Debug, Clone)]
struct ProblemArgs {
    #[arg(long, value_enum, default_value = "heat1d")]
    problem: ProblemArg,
    /// Fractional order, 0 < delta < 1.
    #[arg(long, value_parser = parse_delta, default_value = "0.5")]
    delta: f64,
    /// Interior points per spatial axis (subdivisions minus one).
    #[arg(long, default_value_t = 127)]
    n: usize,
    /// Number of time steps.
    #[arg(long, default_value_t = 128)]
    m: usize,
    #[arg(long, value_enum, default_value = "graded")]
    mesh: MeshArg,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Rank of the low-rank blocks.
    #[arg(long, default_value_t = tfheat::hmatrix::DEFAULT_RANK)]
    rank: usize,
    /// Blocks with a side at most this long are stored densely.
    #[arg(long, default_value_t = tfheat::hmatrix::DEFAULT_LEAF_SIZE)]
    leaf: usize,
    /// Multigrid cycle; defaults to v01 in 1D and v11 in 2D.
    #[arg(long, value_parser = parse_cycle)]
    cycle: Option<Cycle>,
    /// Relative reduction of the max-norm residual.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// zero, random or random:<seed>; solve and bench default to random:0,
    /// order-study to zero.
    #[arg(long, value_parser = parse_guess)]
    initial_guess: Option<InitialGuess>,
    /// Interior points per axis on the coarsest grid.
    #[arg(long, default_value_t = 1)]
    coarsest: usize,
}

impl SolverArgs {
    fn hconfig(&self) -> HMatrixConfig {
        HMatrixConfig {
            rank: self.rank,
            leaf_size: self.leaf,
        }
    }

    fn cycle(&self, dim: usize) -> Cycle {
        self.cycle.unwrap_or(if dim == 1 {
            Cycle {
                gamma: 1,
                pre: 0,
                post: 1,
            }
        } else {
            Cycle {
                gamma: 1,
                pre: 1,
                post: 1,
            }
        })
    }

    fn cycle_config(&self, dim: usize, default_guess: InitialGuess) -> CycleConfig {
        let c = self.cycle(dim);
        CycleConfig {
            pre: c.pre,
            post: c.post,
            gamma: c.gamma,
            coarsest_interior: self.coarsest,
            tol: self.tol,
            max_iter: self.max_iter,
            initial_guess: self.initial_guess.unwrap_or(default_guess),
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report file; standard output if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the computed solution as CSV (m, t, p, x, y, u).
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OrderArgs {
    #[arg(long, value_enum, default_value = "heat1d")]
    problem: ProblemArg,
    #[arg(long, value_parser = parse_delta, default_value = "0.4")]
    delta: f64,
    #[arg(long, default_value_t = 1023)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    m_min: usize,
    #[arg(long, default_value_t = 512)]
    m_max: usize,
    /// Mesh family; both families when omitted.
    #[arg(long, value_enum)]
    mesh: Option<MeshArg>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sweep {
    /// Vary the rank at fixed M.
    Rank,
    /// Vary M at fixed rank.
    Steps,
}

#[derive(Args, Debug)]
struct HmatArgs {
    #[arg(long, value_parser = parse_delta, default_value = "0.5")]
    delta: f64,
    #[arg(long, default_value_t = 512)]
    m: usize,
    #[arg(long, value_enum, default_value = "graded")]
    mesh: MeshArg,
    #[arg(long, value_enum, default_value = "rank")]
    sweep: Sweep,
    /// Ranks for the rank sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    ranks: Vec<usize>,
    /// Rank for the step sweep.
    #[arg(long, default_value_t = tfheat::hmatrix::DEFAULT_RANK)]
    rank: usize,
    /// Step counts for the step sweep.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096")]
    steps: Vec<usize>,
    #[arg(long, default_value_t = tfheat::hmatrix::DEFAULT_LEAF_SIZE)]
    leaf: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "heat1d")]
    problem: ProblemArg,
    #[arg(long, value_parser = parse_delta, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
    deltas: Vec<f64>,
    /// Grid sizes s, each run with M = s and s - 1 interior points per axis.
    #[arg(long, value_delimiter = ',', default_value = "128,256,512,1024")]
    sizes: Vec<usize>,
    /// Keep the interior points fixed and vary only M.
    #[arg(long)]
    fixed_n: Option<usize>,
    #[arg(long, value_enum, default_value = "graded")]
    mesh: MeshArg,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct TableArgs {
    /// 1: errors and orders; 3: 1D iterations; 4: 1D rank sweep; 5: 2D iterations; 6: 2D rank sweep.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(["1", "3", "4", "5", "6"]))]
    which: String,
    /// Largest grid size s (s x s in 1D, s x s x s in 2D) for tables 3 and 5.
    #[arg(long)]
    max_size: Option<usize>,
    /// Starting iterate for the iteration tables.
    #[arg(long, value_parser = parse_guess, default_value = "random:0")]
    initial_guess: InitialGuess,
}

#[derive(Args, Debug)]
struct OperatorArgs {
    #[arg(long, value_parser = parse_delta, default_value = "0.5")]
    delta: f64,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, value_enum, default_value = "graded")]
    mesh: MeshArg,
    #[arg(long, default_value_t = tfheat::hmatrix::DEFAULT_RANK)]
    rank: usize,
    #[arg(long, default_value_t = tfheat::hmatrix::DEFAULT_LEAF_SIZE)]
    leaf: usize,
    /// Output file; required for dump-r, standard output for tree.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    NotConverged(String),
    #[error(transparent)]
    Solver(tfheat::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<tfheat::Error> for CliError {
    fn from(e: tfheat::Error) -> Self {
        use tfheat::Error as E;
        match e {
            E::InvalidOrder(_) | E::InvalidMesh(_) | E::InvalidGrid(_) | E::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn dim_of(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Heat1d => 1,
        ProblemKind::Heat2d => 2,
    }
}

/// Writer for an optional output path, standard output otherwise.
fn sink(path: Option<&PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn grid_label(kind: ProblemKind, n: usize, m: usize) -> String {
    match kind {
        ProblemKind::Heat1d => format!("{m}x{}", n + 1),
        ProblemKind::Heat2d => format!("{}x{}x{m}", n + 1, n + 1),
    }
}

fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let p = &args.problem;
    let kind = ProblemKind::from(p.problem);
    let problem = Problem::new(kind, p.delta, p.n, p.m, p.mesh.into())?;
    let cfg = args
        .solver
        .cycle_config(dim_of(kind), InitialGuess::Random { seed: 0 });
    let (u, report) = solve_problem(&problem, args.solver.hconfig(), &cfg)?;
    let error = problem.max_error(&u.data().view());
    let l1 = L1Coefficients::new(&problem.mesh, p.delta)?;
    let storage = HMatrix::build(&l1, args.solver.hconfig())?.storage_report();

    let mut out = sink(args.output.as_ref())?;
    match args.format {
        Format::Json => {
            let doc = json!({
                "problem": format!("{:?}", p.problem).to_lowercase(),
                "delta": p.delta,
                "n": p.n,
                "m": p.m,
                "grid": grid_label(kind, p.n, p.m),
                "mesh": format!("{:?}", p.mesh).to_lowercase(),
                "rank": args.solver.rank,
                "leaf_size": args.solver.leaf,
                "cycle": args.solver.cycle(dim_of(kind)).to_string(),
                "tol": cfg.tol,
                "initial_guess": guess_label(cfg.initial_guess),
                "iterations": report.iterations,
                "converged": report.converged,
                "convergence_factor": report.convergence_factor,
                "residuals": report.residuals,
                "max_error": error,
                "setup_seconds": report.setup_seconds,
                "solve_seconds": report.solve_seconds,
                "storage": {
                    "compressed_scalars": storage.compressed_scalars(),
                    "dense_equivalent_scalars": storage.dense_equivalent_scalars,
                    "dense_leaves": storage.dense_leaves,
                    "lowrank_leaves": storage.lowrank_leaves,
                    "zero_leaves": storage.zero_leaves,
                },
            });
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "problem,delta,n,m,mesh,iterations,converged,convergence_factor,max_error,setup_seconds,solve_seconds")?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{:e},{:.6},{:.6}",
                format!("{:?}", p.problem).to_lowercase(),
                p.delta,
                p.n,
                p.m,
                format!("{:?}", p.mesh).to_lowercase(),
                report.iterations,
                report.converged,
                report.convergence_factor,
                error,
                report.setup_seconds,
                report.solve_seconds
            )?;
        }
    }
    out.flush()?;
    if let Some(path) = &args.solution {
        write_solution(path, &problem, &u)?;
    }
    if !report.converged {
        return Err(not_converged(&report, cfg.max_iter));
    }
    Ok(())
}

fn not_converged(report: &SolveReport, max_iter: usize) -> CliError {
    let r0 = report.residuals[0];
    let last = report.residuals.last().copied().unwrap_or(r0);
    CliError::NotConverged(format!(
        "no convergence after {max_iter} iterations: residual reduced only to {:.3e} of its initial value",
        last / r0
    ))
}

fn guess_label(g: InitialGuess) -> String {
    match g {
        InitialGuess::Zero => "zero".into(),
        InitialGuess::Random { seed } => format!("random:{seed}"),
    }
}

fn write_solution(path: &PathBuf, problem: &Problem, u: &SpaceTimeField) -> CliResult<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "m,t,p,x,y,u")?;
    for ((m, p), v) in u.data().indexed_iter() {
        let (x, y) = problem.coords(p);
        writeln!(
            out,
            "{},{:e},{p},{x:e},{y:e},{v:e}",
            m + 1,
            problem.mesh.t(m + 1)
        )?;
    }
    out.flush()?;
    Ok(())
}

fn doubling(from: usize, to: usize) -> CliResult<Vec<usize>> {
    if from == 0 || from > to {
        return Err(CliError::Usage(format!(
            "need 0 < m-min <= m-max, got {from} and {to}"
        )));
    }
    Ok(std::iter::successors(Some(from), |&m| Some(m * 2))
        .take_while(|&m| m <= to)
        .collect())
}

fn cmd_order_study(args: &OrderArgs) -> CliResult<()> {
    let kind = ProblemKind::from(args.problem);
    let steps = doubling(args.m_min, args.m_max)?;
    let meshes: Vec<MeshArg> = match args.mesh {
        Some(m) => vec![m],
        None => vec![MeshArg::Graded, MeshArg::Uniform],
    };
    let cfg = args.solver.cycle_config(dim_of(kind), InitialGuess::Zero);
    let mut out = std::io::stdout().lock();
    writeln!(out, "mesh,M,E_M,log2(E_M/E_2M)")?;
    for mesh in meshes {
        let mut study = ErrorStudy::new();
        for &m in &steps {
            let problem = Problem::new(kind, args.delta, args.n, m, mesh.into())?;
            let (u, report) = solve_problem(&problem, args.solver.hconfig(), &cfg)?;
            if !report.converged {
                return Err(not_converged(&report, cfg.max_iter));
            }
            study.push(m, problem.max_error(&u.data().view()));
        }
        let orders = study.orders().unwrap_or_default();
        for (i, &(m, e)) in study.entries.iter().enumerate() {
            let order = orders.get(i).map(|o| format!("{o:.4}")).unwrap_or_default();
            writeln!(
                out,
                "{},{m},{e:.6e},{order}",
                format!("{mesh:?}").to_lowercase()
            )?;
        }
    }
    Ok(())
}

fn lowrank_error(h: &HMatrix, l1: &L1Coefficients) -> f64 {
    let approx = h.densify();
    let mut err = 0.0f64;
    for (b, kind) in h.leaves() {
        if kind == LeafKind::LowRank {
            for m in b.row_lo..=b.row_hi {
                for j in b.col_lo..=b.col_hi {
                    err = err.max((approx[[m - 1, j - 1]] - l1.entry(m, j)).abs());
                }
            }
        }
    }
    err
}

fn cmd_hmat_check(args: &HmatArgs) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "k,M,max_error,lowrank_leaves,dense_leaves,compressed_scalars,dense_equivalent_scalars,scalars_per_MlogM"
    )?;
    let runs: Vec<(usize, usize)> = match args.sweep {
        Sweep::Rank => args.ranks.iter().map(|&k| (k, args.m)).collect(),
        Sweep::Steps => args.steps.iter().map(|&m| (args.rank, m)).collect(),
    };
    for (k, m) in runs {
        if m > 4096 {
            return Err(CliError::Usage(format!(
                "M = {m} is too large to densify (limit 4096)"
            )));
        }
        let mesh = TemporalMesh::new(args.mesh.into(), 1.0, m, args.delta)?;
        let l1 = L1Coefficients::new(&mesh, args.delta)?;
        let h = HMatrix::build(
            &l1,
            HMatrixConfig {
                rank: k,
                leaf_size: args.leaf,
            },
        )?;
        let s = h.storage_report();
        let mlogm = m as f64 * (m as f64).log2().max(1.0);
        writeln!(
            out,
            "{k},{m},{:.3e},{},{},{},{},{:.3}",
            lowrank_error(&h, &l1),
            s.lowrank_leaves,
            s.dense_leaves,
            s.compressed_scalars(),
            s.dense_equivalent_scalars,
            s.compressed_scalars() as f64 / mlogm
        )?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    let kind = ProblemKind::from(args.problem);
    let cfg = args
        .solver
        .cycle_config(dim_of(kind), InitialGuess::Random { seed: 0 });
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "delta,N,M,iterations,convergence_factor,setup_seconds,solve_seconds,total_seconds"
    )?;
    for &delta in &args.deltas {
        for &s in &args.sizes {
            let n = args.fixed_n.unwrap_or(s.saturating_sub(1));
            let problem = Problem::new(kind, delta, n, s, args.mesh.into())?;
            let (_, r) = solve_problem(&problem, args.solver.hconfig(), &cfg)?;
            writeln!(
                out,
                "{delta},{n},{s},{},{:.4},{:.4},{:.4},{:.4}",
                r.iterations,
                r.convergence_factor,
                r.setup_seconds,
                r.solve_seconds,
                r.setup_seconds + r.solve_seconds
            )?;
            out.flush()?;
        }
    }
    Ok(())
}

fn table_solve(
    kind: ProblemKind,
    delta: f64,
    size: usize,
    rank: usize,
    guess: InitialGuess,
) -> CliResult<SolveReport> {
    let problem = Problem::new(kind, delta, size - 1, size, MeshKind::Graded)?;
    let mut cfg = CycleConfig::for_dim(dim_of(kind));
    cfg.initial_guess = guess;
    let hconfig = HMatrixConfig {
        rank,
        ..HMatrixConfig::default()
    };
    Ok(solve_problem(&problem, hconfig, &cfg)?.1)
}

fn cell(r: &SolveReport) -> String {
    format!("{} ({:.2})", r.iterations, r.convergence_factor)
}

const DELTAS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
const RANKS: [usize; 6] = [5, 10, 15, 20, 25, 30];

fn cmd_table(args: &TableArgs) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    let guess = args.initial_guess;
    let sizes = |default_max: usize, from: usize| -> Vec<usize> {
        let max = args.max_size.unwrap_or(default_max);
        std::iter::successors(Some(from), |&s| Some(s * 2))
            .take_while(|&s| s <= max)
            .collect()
    };
    match args.which.as_str() {
        "1" => {
            let steps = [32usize, 64, 128, 256, 512];
            writeln!(out, "delta,,M=32,M=64,M=128,M=256,M=512")?;
            for delta in [0.4, 0.6, 0.8] {
                let mut study = ErrorStudy::new();
                for &m in &steps {
                    let problem =
                        Problem::new(ProblemKind::Heat1d, delta, 1023, m, MeshKind::Graded)?;
                    let (u, _) = solve_problem(
                        &problem,
                        HMatrixConfig::default(),
                        &CycleConfig::for_dim(1),
                    )?;
                    study.push(m, problem.max_error(&u.data().view()));
                }
                let errs: Vec<String> = study
                    .entries
                    .iter()
                    .map(|(_, e)| format!("{e:.2E}"))
                    .collect();
                let ords: Vec<String> = study.orders()?.iter().map(|o| format!("{o:.2}")).collect();
                writeln!(out, "{delta},E_M,{}", errs.join(","))?;
                writeln!(out, "{delta},log2(E_M/E_2M),{},", ords.join(","))?;
                out.flush()?;
            }
        }
        "3" | "5" => {
            let (kind, list) = if args.which == "3" {
                (ProblemKind::Heat1d, sizes(2048, 128))
            } else {
                (ProblemKind::Heat2d, sizes(64, 32))
            };
            let labels: Vec<String> = list
                .iter()
                .map(|&s| {
                    if kind == ProblemKind::Heat1d {
                        format!("{s}x{s}")
                    } else {
                        format!("{s}x{s}x{s}")
                    }
                })
                .collect();
            writeln!(out, "delta,{}", labels.join(","))?;
            for delta in DELTAS {
                let cells: Vec<String> = list
                    .iter()
                    .map(|&s| {
                        table_solve(kind, delta, s, tfheat::hmatrix::DEFAULT_RANK, guess)
                            .map(|r| cell(&r))
                    })
                    .collect::<CliResult<_>>()?;
                writeln!(out, "{delta},{}", cells.join(","))?;
                out.flush()?;
            }
        }
        _ => {
            let (kind, size) = if args.which == "4" {
                (ProblemKind::Heat1d, 512)
            } else {
                (ProblemKind::Heat2d, 64)
            };
            let labels: Vec<String> = RANKS.iter().map(|k| format!("k={k}")).collect();
            writeln!(out, "delta,{}", labels.join(","))?;
            for delta in DELTAS {
                let cells: Vec<String> = RANKS
                    .iter()
                    .map(|&k| table_solve(kind, delta, size, k, guess).map(|r| cell(&r)))
                    .collect::<CliResult<_>>()?;
                writeln!(out, "{delta},{}", cells.join(","))?;
                out.flush()?;
            }
        }
    }
    Ok(())
}

fn operator(args: &OperatorArgs) -> CliResult<L1Coefficients> {
    let mesh = TemporalMesh::new(args.mesh.into(), 1.0, args.m, args.delta)?;
    Ok(L1Coefficients::new(&mesh, args.delta)?)
}

fn cmd_dump_r(args: &OperatorArgs) -> CliResult<()> {
    let path = args
        .output
        .as_ref()
        .ok_or_else(|| CliError::Usage("dump-r needs --output FILE".into()))?;
    operator(args)?.assemble_dense().write_csv(path)?;
    Ok(())
}

fn cmd_tree(args: &OperatorArgs) -> CliResult<()> {
    let l1 = operator(args)?;
    let h = HMatrix::build(
        &l1,
        HMatrixConfig {
            rank: args.rank,
            leaf_size: args.leaf,
        },
    )?;
    let mut out = sink(args.output.as_ref())?;
    out.write_all(h.tree_dump().as_bytes())?;
    out.flush()?;
    let s = h.storage_report();
    eprintln!(
        "{} dense, {} low-rank, {} zero leaves; {} of {} scalars stored",
        s.dense_leaves,
        s.lowrank_leaves,
        s.zero_leaves,
        s.compressed_scalars(),
        s.dense_equivalent_scalars
    );
    Ok(())
}

/// The solver runs on one thread; a request for more is accepted but noted.
fn check_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    match value.trim().parse::<usize>() {
        Ok(0) | Err(_) => Err(CliError::Usage(format!(
            "{THREADS_VAR} must be a positive integer, got '{value}'"
        ))),
        Ok(1) => Ok(()),
        Ok(n) => {
            eprintln!("note: {THREADS_VAR}={n} requested, but the solver is single-threaded");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    check_threads()?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::OrderStudy(a) => cmd_order_study(a),
        Command::HmatCheck(a) => cmd_hmat_check(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Table(a) => cmd_table(a),
        Command::DumpR(a) => cmd_dump_r(a),
        Command::Tree(a) => cmd_tree(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
