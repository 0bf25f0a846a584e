//! `coprop` command line: `propagate <file>` and `verify`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::engine::{Atomic, Engine, EngineConfig, RandomChoice, UpdatePolicy};
use crate::instance::{GenOptions, Instance};
use crate::oracle::{strategy_equivalence, verify_lemma_suite, PlantedFault, SuiteConfig};
use crate::strategies::{default_facts, Branch, StrategyConfig, StrategyKind};

pub const EXIT_FIXPOINT: i32 = 0;
pub const EXIT_EMPTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "coprop",
    version,
    about = "Constraint propagation with composition operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reduce an instance to its greatest common fixed-point.
    Propagate(PropagateArgs),
    /// Run the exhaustive checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UpdateArg {
    Dependency,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BranchArg {
    Gfp,
    Seq,
}

#[derive(Debug, Args)]
struct PropagateArgs {
    file: PathBuf,
    #[arg(long, default_value = "fifo")]
    strategy: StrategyKind,
    #[arg(long, value_enum, default_value = "dependency")]
    update: UpdateArg,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Smallest bound movement that counts as a change.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Precision of box narrowing.
    #[arg(long, default_value_t = GenOptions::default().box_eps)]
    box_eps: f64,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = StrategyConfig::new(StrategyKind::CycleAccel).eps_ratio)]
    eps_ratio: f64,
    /// Parallel strategy: how each block is iterated.
    #[arg(long, value_enum, default_value = "gfp")]
    branch: BranchArg,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    stats: bool,
    /// Random atomic choice instead of FIFO (fifo strategy only).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lemmas,
    Strategies,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    Nonmonotone,
    DependentPair,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum)]
    plant_fault: Option<FaultArg>,
    /// Directory of `.csp` files.
    #[arg(long)]
    instances: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    let result = match cli.command {
        Command::Propagate(a) => propagate(&a, out),
        Command::Verify(a) => verify(&a, out),
    };
    result.unwrap_or_else(|msg| {
        let _ = writeln!(err, "coprop: {msg}");
        EXIT_USAGE
    })
}

fn load(path: &Path) -> Result<Instance, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Instance::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn propagate(a: &PropagateArgs, out: &mut dyn Write) -> Result<i32, String> {
    let instance = load(&a.file)?;
    let opts = GenOptions {
        box_eps: a.box_eps,
        ..GenOptions::default()
    };
    let functions = instance.functions(opts).map_err(|e| e.to_string())?;
    let config = StrategyConfig {
        kind: a.strategy,
        threads: a.threads,
        window: a.window,
        eps_ratio: a.eps_ratio,
        branch: match a.branch {
            BranchArg::Gfp => Branch::Gfp,
            BranchArg::Seq => Branch::Seq,
        },
    };
    config.validate().map_err(|e| e.to_string())?;
    if a.threads == 0 {
        return Err("--threads must be at least 1".into());
    }
    if a.eps.is_nan() || a.eps < 0.0 {
        return Err("--eps must be non-negative".into());
    }
    let engine = Engine::new(&functions)
        .with_config(EngineConfig {
            update: match a.update {
                UpdateArg::Dependency => UpdatePolicy::Dependency,
                UpdateArg::Exact => UpdatePolicy::Exact,
            },
            threads: a.threads,
            min_progress: a.eps,
            trace: a.trace,
            check_invariant: false,
        })
        .with_facts(default_facts(&functions));
    let d0 = instance.domain();
    let outcome = match a.seed {
        Some(seed) if a.strategy == StrategyKind::Fifo => {
            engine.gico(&d0, &mut Atomic(RandomChoice::new(seed)))
        }
        Some(_) => return Err("--seed applies to --strategy=fifo only".into()),
        None => {
            let mut strategy = config.build(&functions).map_err(|e| e.to_string())?;
            engine.gico(&d0, strategy.as_mut())
        }
    }
    .map_err(|e| e.to_string())?;

    let io = |e: std::io::Error| e.to_string();
    for event in &outcome.trace {
        writeln!(out, "{event}").map_err(io)?;
    }
    let empty = outcome.domain.is_empty();
    if !empty {
        for (name, d) in outcome
            .domain
            .vars()
            .iter()
            .zip(outcome.domain.components())
        {
            writeln!(out, "{name}={d}").map_err(io)?;
        }
    }
    writeln!(out, "status: {}", if empty { "empty" } else { "fixpoint" }).map_err(io)?;
    if a.stats {
        writeln!(out, "{}", outcome.stats).map_err(io)?;
    }
    Ok(if empty { EXIT_EMPTY } else { EXIT_FIXPOINT })
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, String> {
    let io = |e: std::io::Error| e.to_string();
    match a.suite {
        SuiteArg::Lemmas => {
            let cfg = SuiteConfig {
                plant: a.plant_fault.map(|f| match f {
                    FaultArg::Nonmonotone => PlantedFault::NonMonotone,
                    FaultArg::DependentPair => PlantedFault::DependentPair,
                }),
                ..SuiteConfig::new(a.seed)
            };
            let report = verify_lemma_suite(&cfg);
            write!(out, "{report}").map_err(io)?;
            Ok(if report.passed() { 0 } else { 1 })
        }
        SuiteArg::Strategies => {
            let dir = a
                .instances
                .as_ref()
                .ok_or("--suite=strategies needs --instances=<dir>")?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| format!("{}: {e}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csp"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(format!("{}: no .csp files", dir.display()));
            }
            let mut ok = true;
            for path in &files {
                let name = path
                    .file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
                let instance = load(path)?;
                let (reference, results) = strategy_equivalence(&instance, a.threads, 1e-9)?;
                for r in results {
                    ok &= r.agrees;
                    let update = match r.update {
                        UpdatePolicy::Dependency => "dependency",
                        UpdatePolicy::Exact => "exact",
                    };
                    if r.agrees {
                        writeln!(out, "INSTANCE {name} strategy={} update={update} PASS", r.strategy.name())
                    } else {
                        writeln!(
                            out,
                            "INSTANCE {name} strategy={} update={update} FAIL witness=got {} expected {reference}",
                            r.strategy.name(),
                            r.outcome.domain
                        )
                    }
                    .map_err(io)?;
                }
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}
