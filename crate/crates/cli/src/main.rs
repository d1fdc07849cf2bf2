//! `nashmatch`: solve Nash bargaining matching markets from JSON instances.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use nashmatch::certify::{approx_feasibility, certify, nash_objective, CertifyOptions};
use nashmatch::cgd::{fw_solve, FwOptions, SmoothedObjective};
use nashmatch::instance::{feasibility_gap, gen_common_value, gen_random, normalize, with_endowments, Layout};
use nashmatch::mwu::{self, MwuOptions};
use nashmatch::rounding::{bvn_from_allocation, sample_matching};
use nashmatch::{Error, MarketInstance, ModelKind};

const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "nashmatch", version, about = "Nash bargaining solutions for matching markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the result JSON.
    Solve(SolveArgs),
    /// Generate instances from a spec, solve them, and write a CSV summary.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Solver {
    Cgd,
    Mwu,
}

impl Solver {
    fn name(self) -> &'static str {
        match self {
            Solver::Cgd => "cgd",
            Solver::Mwu => "mwu",
        }
    }

    fn default_eps(self) -> f64 {
        match self {
            Solver::Cgd => 1e-3,
            Solver::Mwu => 0.1,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Solver::Cgd)]
    solver: Solver,
    /// Target accuracy in (0, 1); defaults to 1e-3 for cgd and 0.1 for mwu.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration cap for cgd, exact round count for mwu.
    #[arg(long)]
    max_iters: Option<u64>,
    /// Seed for sampling a matching from the lottery.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a per-iteration CSV trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Add KKT, proportionality and best-response checks to the certificate.
    #[arg(long)]
    certify: bool,
    /// Decompose the allocation into a lottery over matchings.
    #[arg(long)]
    round: bool,
    /// Feasibility gap to use instead of solving for it.
    #[arg(long)]
    delta: Option<f64>,
    /// Result file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Generator spec JSON file.
    spec: PathBuf,
    /// CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => run_solve(&args),
        Command::Bench(args) => run_bench(&args).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let infeasible = err.chain().any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::Infeasible(_))));
            ExitCode::from(if infeasible { EXIT_INFEASIBLE } else { EXIT_ERROR })
        }
    }
}

fn check_eps(eps: f64) -> anyhow::Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        bail!("--eps must lie in (0, 1), got {eps}");
    }
    Ok(())
}

/// Feasibility gap for the endowment guarantees, when the instance has one.
fn resolve_delta(inst: &MarketInstance, given: Option<f64>) -> anyhow::Result<Option<f64>> {
    if let Some(d) = given {
        if !(d > 0.0) || !d.is_finite() {
            bail!("--delta must be positive, got {d}");
        }
        return Ok(Some(d));
    }
    if inst.is_fisher() || !inst.kind.is_bipartite() {
        return Ok(None);
    }
    Ok(Some(feasibility_gap(inst)?.delta))
}

struct Solved {
    x: Vec<f64>,
    /// Unprocessed MWU average, when it differs from `x`.
    average: Option<Vec<f64>>,
    duals: Option<mwu::DualState>,
    iterations: u64,
    converged: bool,
    fw_gap: Option<f64>,
    overload: f64,
    trace_csv: Option<String>,
}

fn solve_normalized(
    inst: &MarketInstance,
    solver: Solver,
    eps: f64,
    max_iters: Option<u64>,
    delta: Option<f64>,
    want_trace: bool,
) -> anyhow::Result<Solved> {
    match solver {
        Solver::Cgd => {
            let obj = SmoothedObjective::new(inst, delta)?;
            let sol = fw_solve(inst, &obj, &FwOptions { eps, max_iters, trace: want_trace })?;
            let trace_csv = want_trace.then(|| {
                let mut s = String::from("t,psi,fw_gap,min_utility_minus_c,step_size\n");
                for r in &sol.report.trace {
                    let _ = writeln!(s, "{},{},{},{},{}", r.t, r.psi, r.fw_gap, r.min_utility_minus_c, r.step_size);
                }
                s
            });
            Ok(Solved {
                x: sol.x,
                average: None,
                duals: None,
                iterations: sol.report.iterations,
                converged: sol.report.converged,
                fw_gap: Some(sol.report.gap),
                overload: 0.0,
                trace_csv,
            })
        }
        Solver::Mwu => {
            let sol = mwu::solve(inst, &MwuOptions { eps, iterations: max_iters })?;
            let trace_csv = want_trace.then(|| {
                let mut s =
                    String::from("t,sigma,phi,max_row_overload,max_col_overload,objective_of_running_average\n");
                for r in &sol.trace.rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        r.t, r.sigma, r.ln_phi, r.max_row_overload, r.max_col_overload, r.objective
                    );
                }
                s
            });
            Ok(Solved {
                x: sol.x,
                average: Some(sol.x_bar),
                duals: Some(sol.duals),
                iterations: sol.iterations,
                converged: true,
                fw_gap: None,
                overload: sol.overload,
                trace_csv,
            })
        }
    }
}

/// Per-pair totals, plus per-segment amounts for SPLC kinds.
fn allocation_json(layout: &Layout, x: &[f64]) -> (Value, Option<Value>) {
    let totals = json!(layout.totals(x));
    let segments = layout.kind.is_splc().then(|| {
        Value::Array(
            layout
                .chains
                .iter()
                .map(|ch| json!({"i": ch.agent, "j": ch.good, "x": x[ch.range.clone()].to_vec()}))
                .collect(),
        )
    });
    (totals, segments)
}

fn lottery_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "result".into());
    out.with_file_name(format!("{stem}.lottery.json"))
}

fn run_solve(args: &SolveArgs) -> anyhow::Result<u8> {
    let eps = args.eps.unwrap_or(args.solver.default_eps());
    check_eps(eps)?;
    let text = fs::read_to_string(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let raw = MarketInstance::from_json_str(&text)?;
    if args.solver == Solver::Mwu && !matches!(raw.kind, ModelKind::OneSidedLinear | ModelKind::OneSidedSplc) {
        return Err(Error::Unsupported { solver: "mwu", kind: raw.kind }.into());
    }
    let (inst, mut scaling) = normalize(&raw)?;
    let delta = resolve_delta(&inst, args.delta)?;
    scaling.delta = delta;

    let start = Instant::now();
    let solved = solve_normalized(&inst, args.solver, eps, args.max_iters, delta, args.trace.is_some())?;
    let wall_time = start.elapsed().as_secs_f64();

    let layout = inst.layout();
    let feasibility = approx_feasibility(&layout, &solved.x, eps);
    if !feasibility.passed {
        bail!("solver output violates the allocation constraints by {}", feasibility.overload);
    }

    let certificate = if args.certify {
        serde_json::to_value(certify(
            &inst,
            &solved.x,
            solved.duals.as_ref(),
            &CertifyOptions { eps, delta, fw_gap: solved.fw_gap },
        )?)?
    } else {
        json!({
            "objective": nash_objective(&inst, &solved.x),
            "utilities": layout.utilities(&solved.x),
            "feasibility": feasibility,
            "fw_gap": solved.fw_gap,
        })
    };

    let (allocation, segments) = allocation_json(&layout, &solved.x);
    let mut result = serde_json::Map::new();
    result.insert("kind".into(), json!(inst.kind));
    result.insert("solver".into(), json!(args.solver.name()));
    result.insert("eps".into(), json!(eps));
    result.insert("allocation".into(), allocation);
    if let Some(s) = segments {
        result.insert("segment_allocation".into(), s);
    }
    result.insert("utilities".into(), json!(raw.layout().utilities(&solved.x)));
    if let Some(avg) = &solved.average {
        result.insert("average_allocation".into(), allocation_json(&layout, avg).0);
        result.insert("average_overload".into(), json!(solved.overload));
    }
    if let Some(d) = &solved.duals {
        result.insert("duals".into(), json!({"p": d.p, "q": d.q, "h": d.segment_prices(&layout)}));
    }
    result.insert("certificate".into(), certificate);
    result.insert("scaling".into(), serde_json::to_value(&scaling)?);
    result.insert("iterations".into(), json!(solved.iterations));
    result.insert("converged".into(), json!(solved.converged));

    let mut lottery_text = None;
    if args.round {
        let dec = bvn_from_allocation(&layout, &solved.x)?;
        let sample = sample_matching(&dec, args.seed);
        result.insert("lottery".into(), serde_json::to_value(&dec)?);
        result.insert("sampled_matching".into(), json!(sample));
        lottery_text = Some(serde_json::to_string_pretty(&dec)? + "\n");
    }
    result.insert("wall_time".into(), json!(wall_time));

    let body = serde_json::to_string_pretty(&Value::Object(result))? + "\n";
    match &args.out {
        Some(path) => {
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            if let Some(text) = lottery_text {
                let lp = lottery_path(path);
                fs::write(&lp, text).with_context(|| format!("writing {}", lp.display()))?;
            }
        }
        None => print!("{body}"),
    }
    if let (Some(path), Some(csv)) = (&args.trace, &solved.trace_csv) {
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if solved.converged { 0 } else { EXIT_NOT_CONVERGED })
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Random,
    CommonValue,
}

fn default_kind() -> ModelKind {
    ModelKind::OneSidedLinear
}

fn default_family() -> Family {
    Family::Random
}

/// Generator spec for `bench`; every list defaults to empty.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchSpec {
    #[serde(default = "default_kind")]
    kind: ModelKind,
    #[serde(default = "default_family")]
    family: Family,
    #[serde(default)]
    n: Vec<usize>,
    #[serde(default)]
    seeds: Vec<u64>,
    #[serde(default)]
    solvers: Vec<Solver>,
    #[serde(default)]
    eps: Vec<f64>,
    #[serde(default)]
    sparsity: f64,
    /// Disagreement utilities from a random matching scaled by `1/(1+slack)`.
    #[serde(default)]
    endowment_slack: Option<f64>,
    /// Multiplicative noise of the common-value family.
    #[serde(default)]
    noise: Option<f64>,
    #[serde(default)]
    max_iters: Option<u64>,
}

fn run_bench(args: &BenchArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: BenchSpec = serde_json::from_str(&text).map_err(|e| anyhow!("generator spec: {e}"))?;
    for &e in &spec.eps {
        check_eps(e)?;
    }
    let mut csv = String::from("n,seed,solver,eps,iterations,wall_time,final_gap,final_overload\n");
    let mut ns = spec.n.clone();
    ns.sort_unstable();
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    let mut solvers = spec.solvers.clone();
    solvers.sort_by_key(|s| s.name());
    for &n in &ns {
        for &seed in &seeds {
            let raw = match spec.family {
                Family::Random => gen_random(n, spec.kind, seed, spec.sparsity)?,
                Family::CommonValue => {
                    if spec.kind != ModelKind::OneSidedLinear {
                        bail!("common_value family generates {} instances only", ModelKind::OneSidedLinear);
                    }
                    gen_common_value(n, seed, spec.noise.unwrap_or(0.2))?
                }
            };
            let raw = match spec.endowment_slack {
                Some(s) => with_endowments(&raw, s, seed)?,
                None => raw,
            };
            let (inst, _) = normalize(&raw)?;
            let delta = resolve_delta(&inst, None)?;
            for &solver in &solvers {
                for &eps in &spec.eps {
                    let start = Instant::now();
                    let s = solve_normalized(&inst, solver, eps, spec.max_iters, delta, false)?;
                    let wall = start.elapsed().as_secs_f64();
                    let gap = s.fw_gap.map(|g| g.to_string()).unwrap_or_default();
                    let _ = writeln!(
                        csv,
                        "{n},{seed},{},{eps},{},{wall},{gap},{}",
                        solver.name(),
                        s.iterations,
                        s.overload
                    );
                }
            }
        }
    }
    match &args.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}
