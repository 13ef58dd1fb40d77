//! `guas-cert`: analyze, simulate and reproduce the built-in examples.
//!
//! Exit codes: 0 GUAS certified (or simulation done), 1 not GUAS,
//! 2 inconclusive or internal error, 3 violated precondition, 4 I/O, parse or usage error.

mod report;

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use guas_core::analyzer::{analyze, AnalyzeOptions, Conclusion, EvidenceMode, Verdict};
use guas_core::bad_locus::LocusGeometry;
use guas_core::builtins::{
    example_by_name, kdeux_example, mason_pair, shared_output_example, torus_default_freqs, torus_example,
    ExampleInstance,
};
use guas_core::decomposition::{block_form, common_kernel};
use guas_core::linalg::{Mat, Vector};
use guas_core::matrix_core::{normalize, strict_lyapunov_2x2};
use guas_core::problem::ProblemFile;
use guas_core::simulator::{
    bad_feedback_trajectory, estimate_omega_limit, integrate, output_measure, FeedbackRule, StopReason,
    SwitchingSignal, System, Trajectory,
};
use guas_core::{GuasError, Result};

#[derive(Parser, Debug)]
#[command(name = "guas-cert", version, about = "Decide GUAS of a two-mode switched linear system with a weak common quadratic Lyapunov function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze the pair stored in a JSON problem file.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        opts: AnalysisFlags,
    },
    /// Integrate the switched or the bilinear system and write a CSV trajectory.
    Simulate(SimulateArgs),
    /// Build a built-in example and analyze it.
    Example(ExampleArgs),
}

#[derive(Args, Debug, Clone)]
struct AnalysisFlags {
    /// Relative numerical tolerance.
    #[arg(long, default_value_t = guas_core::DEFAULT_TOL)]
    tol: f64,
    /// Number of λ grid points in [0, 1].
    #[arg(long, default_value_t = guas_core::observability::DEFAULT_GRID)]
    grid: usize,
    /// Sphere resolution of the tangency-set scan.
    #[arg(long, default_value_t = guas_core::bad_locus::DEFAULT_RESOLUTION)]
    g_resolution: usize,
    /// Horizon of the evidence simulations.
    #[arg(long = "T", default_value_t = 100.0)]
    t_end: f64,
    /// Step of the evidence simulations.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random initial states in the evidence simulations.
    #[arg(long, default_value_t = 32)]
    n_random: usize,
    #[arg(long, value_enum, default_value_t = EvidenceFlag::Auto)]
    evidence: EvidenceFlag,
    /// Print the verdict as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EvidenceFlag {
    Never,
    /// Only for inconclusive verdicts.
    Auto,
    Always,
}

impl AnalysisFlags {
    fn options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            tol: self.tol,
            grid: self.grid,
            g_resolution: self.g_resolution,
            t_end: self.t_end,
            dt: self.dt,
            seed: self.seed,
            n_random: self.n_random,
            evidence: match self.evidence {
                EvidenceFlag::Never => EvidenceMode::Never,
                EvidenceFlag::Auto => EvidenceMode::IfInconclusive,
                EvidenceFlag::Always => EvidenceMode::Always,
            },
            ..AnalyzeOptions::default()
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    file: PathBuf,
    /// `binary:dur=0|1,...`, `relaxed:dur=λ,...`, `worst` or `badlocus`.
    #[arg(long, allow_hyphen_values = true)]
    signal: String,
    /// Initial state, comma separated: length d for the switched system, dim K for the bilinear one.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long = "T", default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = guas_core::DEFAULT_TOL)]
    tol: f64,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExampleArgs {
    /// hurwitz, shared-output, kdeux, torus or mason.
    name: String,
    /// kdeux: rotation rate of A0.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// kdeux: rotation rate of A1.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// torus: comma-separated frequencies.
    #[arg(long)]
    freqs: Option<String>,
    /// torus: damping of mode 0.
    #[arg(long)]
    d0: Option<f64>,
    /// torus: damping of mode 1.
    #[arg(long)]
    d1: Option<f64>,
    /// shared-output: family 1 or 2.
    #[arg(long)]
    family: Option<u8>,
    /// Write the instance as a problem file instead of analyzing it.
    #[arg(long)]
    write: Option<PathBuf>,
    #[command(flatten)]
    opts: AnalysisFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code_for_error(&e));
    }
    let result = match cli.command {
        Command::Analyze { file, opts } => cmd_analyze(&file, &opts),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Example(args) => cmd_example(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for_error(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GUAS_CERT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| GuasError::InvalidArgument(format!("GUAS_CERT_THREADS='{v}' is not a number")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| GuasError::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn exit_code_for_conclusion(c: Conclusion) -> u8 {
    match c {
        c if c.is_guas() => 0,
        Conclusion::NotGuasConstantInput => 1,
        _ => 2,
    }
}

fn exit_code_for_error(e: &GuasError) -> u8 {
    match e {
        e if e.is_precondition() => 3,
        GuasError::Io(_)
        | GuasError::Parse(_)
        | GuasError::InvalidArgument(_)
        | GuasError::BadSignalSpec(_)
        | GuasError::UnknownExample(_) => 4,
        _ => 2,
    }
}

fn cmd_analyze(file: &PathBuf, flags: &AnalysisFlags) -> Result<u8> {
    let pair = ProblemFile::load(file)?.to_pair()?;
    let verdict = analyze(&pair, &flags.options())?;
    if flags.json {
        println!("{}", serde_json::to_string_pretty(&verdict)?);
    } else {
        print!("{}", report::render_verdict(&verdict));
    }
    Ok(exit_code_for_conclusion(verdict.conclusion))
}

fn parse_vector(s: &str) -> Result<Vector> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| GuasError::Parse(format!("'{t}' in --x0 is not a number")))
        })
        .collect::<Result<_>>()?;
    Ok(Vector::from_vec(vals))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<u8> {
    let pair = ProblemFile::load(&args.file)?.to_pair()?;
    let signal: SwitchingSignal = args.signal.parse()?;
    let x0 = parse_vector(&args.x0)?;
    let d = pair.dim();
    let p = pair.lyapunov().cloned().unwrap_or_else(|| Mat::identity(d, d));
    let normalized = normalize(&pair, &p, args.tol)?;

    let mut exit_line = None;
    let traj: Trajectory = if x0.len() == d {
        let x0n = normalized.provenance.from_raw(&x0);
        integrate(System::Full(&normalized), &signal, &x0n, args.t_end, args.dt)?
    } else {
        let decomp = common_kernel(&normalized, args.tol);
        if x0.len() != decomp.k {
            return Err(GuasError::DimensionMismatch(format!(
                "--x0 has {} entries; expected d = {d} or dim K = {}",
                x0.len(),
                decomp.k
            )));
        }
        let blocks = block_form(&normalized, &decomp, args.tol)?;
        if matches!(signal, SwitchingSignal::Feedback(FeedbackRule::BadLocus)) {
            let geom = LocusGeometry::new(&blocks, args.tol);
            let (tr, _) = bad_feedback_trajectory(&geom, &x0, args.t_end, args.dt, args.tol)?;
            exit_line = Some(match tr.stop {
                StopReason::LeftF { time } => format!("left F at t = {time}"),
                StopReason::ReachedN { time } => format!("reached N at t = {time}; λ is not unique there"),
                StopReason::Completed => format!("stayed in F up to T = {}", tr.duration()),
            });
            tr
        } else {
            integrate(System::Bilinear(&blocks), &signal, &x0, args.t_end, args.dt)?
        }
    };

    match &args.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| GuasError::Io(format!("{}: {e}", path.display())))?;
            traj.write_csv(BufWriter::new(f))?;
        }
        None => traj.write_csv(io::stdout().lock())?,
    }
    let ratio = traj.final_norm() / traj.norms[0];
    eprintln!("final norm ratio: {ratio:.6e}");
    if let Ok(om) = estimate_omega_limit(&traj, traj.duration() / 4.0) {
        eprintln!(
            "omega-limit radius estimate: {:.6e} (plateaued: {}, decayed to zero: {})",
            om.r, om.plateaued, om.decayed_to_zero
        );
    }
    if let Ok(m) = output_measure(&traj, args.tol) {
        eprintln!("fraction of time with nonzero output: {m:.6}");
    }
    if let Some(line) = exit_line {
        eprintln!("{line}");
    }
    Ok(0)
}

fn build_example(args: &ExampleArgs) -> Result<ExampleInstance> {
    match args.name.as_str() {
        "kdeux" => Ok(kdeux_example(args.a.unwrap_or(1.0), args.b.unwrap_or(1.0))),
        "torus" => {
            let freqs = match &args.freqs {
                Some(s) => parse_vector(s)?.iter().copied().collect(),
                None => torus_default_freqs(),
            };
            torus_example(&freqs, args.d0.unwrap_or(1.0), args.d1.unwrap_or(2.0))
        }
        "shared-output" => shared_output_example(args.family.unwrap_or(2)),
        other => example_by_name(other),
    }
}

fn cmd_example(args: &ExampleArgs) -> Result<u8> {
    let ex = build_example(args)?;
    if let Some(path) = &args.write {
        let mut file = ProblemFile::from_pair(&ex.pair, Some(ex.name.clone()));
        file.metadata = Some([("description".to_string(), ex.description.clone())].into());
        file.save(path)?;
        println!("wrote {}", path.display());
        return Ok(0);
    }
    let verdict: Verdict = analyze(&ex.pair, &args.opts.options())?;
    let strict = if ex.name == "mason" {
        Some(strict_lyapunov_2x2(&mason_pair())?)
    } else {
        None
    };
    if args.opts.json {
        let out = serde_json::json!({
            "example": ex.name,
            "description": ex.description,
            "expected": ex.expected,
            "verdict": verdict,
            "strict_lyapunov": strict,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("example:  {} ({})", ex.name, ex.description);
        println!("expected: {} ({})", ex.expected.conclusion, ex.expected.note);
        print!("{}", report::render_verdict(&verdict));
        if let Some(s) = &strict {
            print!("{}", report::render_strict(s));
        }
    }
    Ok(exit_code_for_conclusion(verdict.conclusion))
}
