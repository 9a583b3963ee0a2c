//! `cyclecancel` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cyclecancel::instance::load_point;
use cyclecancel::reference::mms_values;
use cyclecancel::{
    brute_opt_maxmin, brute_opt_nsw, cancel_all_cycles, generate, multilinear, nonuniform_pipage, randomized_round,
    solve_mms, solve_nsw, solve_santa, BruteLimits, CancelOptions, Error, EvalMode, Family, GenConfig, Instance,
    IntegralAllocation, MmsParams, NswParams, Result, SantaParams,
};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "cyclecancel", version, about = "Cycle-cancellation rounding and fair-allocation solvers")]
struct Cli {
    /// Evaluation mode for multilinear values; exact when feasible by default.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Samples per estimate in sampled mode.
    #[arg(long, global = true, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Write the JSON output here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Evaluate multilinear values of a point.
    Eval(EvalArgs),
    /// Cancel every support cycle of a point.
    Cancel(PointArgs),
    /// Round a point to an integral allocation.
    Round(RoundArgs),
    /// Run a solver.
    #[command(subcommand)]
    Solve(SolveCommand),
    /// Compute an exact optimum by brute force.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Additive,
    Coverage,
    BudgetAdditive,
    ConcaveAdditive,
    Mixed,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Additive => Family::Additive,
            FamilyArg::Coverage => Family::Coverage,
            FamilyArg::BudgetAdditive => Family::BudgetAdditive,
            FamilyArg::ConcaveAdditive => Family::ConcaveAdditive,
            FamilyArg::Mixed => Family::Mixed,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    goods: usize,
    /// Cap every singleton weight at ε·total/agents (additive only).
    #[arg(long)]
    small_goods: Option<f64>,
    /// Instance file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    point: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: PointArgs,
    /// Only this agent; all agents when absent.
    #[arg(long)]
    agent: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundMethod {
    Pipage,
    Randomized,
}

#[derive(Args)]
struct RoundArgs {
    #[command(flatten)]
    input: PointArgs,
    #[arg(long, value_enum, default_value = "pipage")]
    method: RoundMethod,
}

#[derive(Subcommand)]
enum SolveCommand {
    /// Max-min (Santa Claus).
    Santa(SantaArgs),
    /// Nash social welfare.
    Nsw(NswArgs),
    /// Maximin share.
    Mms(MmsArgs),
}

#[derive(Args)]
struct SantaArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    cg_steps: usize,
    #[arg(long, default_value_t = 0.5)]
    mwu_rate: f64,
    #[arg(long, default_value_t = 40)]
    mwu_rounds: usize,
    #[arg(long, default_value_t = 0.02)]
    bs_rel_precision: f64,
}

#[derive(Args)]
struct NswArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    step_eps: f64,
    /// Local-search gap threshold (default 1e-3 per agent).
    #[arg(long)]
    stop_delta: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    value_floor: f64,
}

#[derive(Args)]
struct MmsArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Skip the brute-force MMS ratios.
    #[arg(long)]
    no_oracle: bool,
    #[arg(long, default_value_t = 2_000_000)]
    max_assignments: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Maxmin,
    Nsw,
    Mms,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(value_enum)]
    kind: OracleKind,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 2_000_000)]
    max_assignments: u64,
}

impl Cli {
    fn eval_mode(&self, goods: usize) -> EvalMode {
        match self.mode {
            Some(ModeArg::Exact) => EvalMode::Exact,
            Some(ModeArg::Sampled) => EvalMode::Sampled {
                samples: self.samples,
                seed: self.seed,
            },
            None => EvalMode::auto(goods, self.samples, self.seed),
        }
    }
}

fn allocation_json(instance: &Instance, a: &IntegralAllocation) -> Result<serde_json::Value> {
    Ok(json!({
        "allocation": a.to_lists(),
        "per_agent_values": a.values(instance.valuations())?,
    }))
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    Ok(match &cli.command {
        Command::Gen(args) => {
            let instance = generate(&GenConfig {
                family: args.family.into(),
                agents: args.agents,
                goods: args.goods,
                seed: cli.seed,
                small_goods: args.small_goods,
            })?;
            if let Some(out) = &args.out {
                instance.save(out)?;
                json!({ "instance": out, "digest": instance.digest() })
            } else {
                to_value(&instance)
            }
        }
        Command::Eval(args) => {
            let instance = Instance::load(&args.input.instance)?;
            let x = load_point(&args.input.point)?;
            let mode = cli.eval_mode(instance.goods());
            match args.agent {
                Some(i) => {
                    if i >= instance.agents() || x.rows() != instance.agents() {
                        return Err(Error::Input(format!(
                            "agent {i} out of range for {} agents and a {}-row point",
                            instance.agents(),
                            x.rows()
                        )));
                    }
                    to_value(&multilinear::eval(instance.valuation(i), x.row(i), mode.rekey(i as u64))?)
                }
                None => to_value(&x.agent_values(instance.valuations(), mode)?),
            }
        }
        Command::Cancel(args) => {
            let instance = Instance::load(&args.instance)?;
            let x = load_point(&args.point)?;
            let opts = CancelOptions::with_mode(cli.eval_mode(instance.goods()));
            let (y, trace) = cancel_all_cycles(&x, instance.valuations(), &opts)?;
            json!({ "point": y, "trace": trace })
        }
        Command::Round(args) => {
            let instance = Instance::load(&args.input.instance)?;
            let x = load_point(&args.input.point)?;
            match args.method {
                RoundMethod::Pipage => {
                    let opts = CancelOptions::with_mode(cli.eval_mode(instance.goods()));
                    let out = nonuniform_pipage(&x, instance.valuations(), &opts)?;
                    let mut v = allocation_json(&instance, &out.allocation)?;
                    v["method"] = json!("pipage");
                    v["acyclic_point"] = to_value(&out.acyclic);
                    v["trace"] = to_value(&out.trace);
                    v
                }
                RoundMethod::Randomized => {
                    if x.rows() != instance.agents() || x.cols() != instance.goods() {
                        return Err(Error::Input("point does not match the instance".into()));
                    }
                    let a = randomized_round(&x, cli.seed);
                    let mut v = allocation_json(&instance, &a)?;
                    v["method"] = json!("randomized");
                    v
                }
            }
        }
        Command::Solve(solver) => {
            let report = match solver {
                SolveCommand::Santa(a) => {
                    let instance = Instance::load(&a.instance)?;
                    let params = SantaParams {
                        eps: a.eps,
                        cg_steps: a.cg_steps,
                        mwu_rate: a.mwu_rate,
                        mwu_rounds: a.mwu_rounds,
                        bs_rel_precision: a.bs_rel_precision,
                        mode: cli.eval_mode(instance.goods()),
                        seed: cli.seed,
                    };
                    solve_santa(&instance, &params)?
                }
                SolveCommand::Nsw(a) => {
                    let instance = Instance::load(&a.instance)?;
                    let params = NswParams {
                        step_eps: a.step_eps,
                        stop_delta: a.stop_delta,
                        max_iters: a.max_iters,
                        value_floor: a.value_floor,
                        mode: cli.eval_mode(instance.goods()),
                        seed: cli.seed,
                    };
                    solve_nsw(&instance, &params)?
                }
                SolveCommand::Mms(a) => {
                    let instance = Instance::load(&a.instance)?;
                    let params = MmsParams {
                        mode: cli.eval_mode(instance.goods()),
                        seed: cli.seed,
                        oracle: !a.no_oracle,
                        oracle_limits: BruteLimits {
                            max_assignments: a.max_assignments,
                        },
                        ..MmsParams::default()
                    };
                    solve_mms(&instance, &params)?
                }
            };
            to_value(&report)
        }
        Command::Oracle(args) => {
            let instance = Instance::load(&args.instance)?;
            let limits = BruteLimits {
                max_assignments: args.max_assignments,
            };
            match args.kind {
                OracleKind::Maxmin => {
                    let (value, a) = brute_opt_maxmin(&instance, &limits)?;
                    let mut v = allocation_json(&instance, &a)?;
                    v["oracle"] = json!("maxmin");
                    v["value"] = json!(value);
                    v
                }
                OracleKind::Nsw => {
                    let (value, a) = brute_opt_nsw(&instance, &limits)?;
                    let mut v = allocation_json(&instance, &a)?;
                    v["oracle"] = json!("nsw");
                    v["value"] = json!(value);
                    v
                }
                OracleKind::Mms => json!({ "oracle": "mms", "values": mms_values(&instance, &limits)? }),
            }
        }
    })
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("output types serialize")
}

fn emit(value: &serde_json::Value, dest: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize") + "\n";
    match dest {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli).and_then(|v| emit(&v, cli.report.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
