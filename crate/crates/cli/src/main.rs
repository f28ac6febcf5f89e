use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use protoforge::cegis::{report_stats, synthesize, SynthesisConfig, SynthesisResult};
use protoforge::checker::{verify, CheckOptions, Verdict};
use protoforge::config::load_config;
use protoforge::corpus::{default_root, run_corpus};
use protoforge::enumerate::Strategy;
use protoforge::{parse_sketch, Sketch};

const EXIT_FAILURE: u8 = 1;
const EXIT_EXHAUSTED: u8 = 2;
const EXIT_TIMED_OUT: u8 = 3;
const EXIT_UNREALIZABLE: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "protoforge",
    version,
    about = "Synthesize distributed protocols from sketches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete the holes of a sketch.
    Synth(SynthArgs),
    /// Check ground truths and synthesize every case of the benchmark corpus.
    Corpus {
        /// Only cases of this protocol, or this case name.
        filter: Option<String>,
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Naive,
    Cached,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Where to write the completed protocol (stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Where to write the key=value statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    no_equiv_reduction: bool,
    #[arg(long)]
    no_shortcircuit: bool,
    /// Seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    state_cap: Option<usize>,
    /// Largest combined size of a completion.
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long, overrides_with = "no_extra_check")]
    extra_check: bool,
    #[arg(long, overrides_with = "extra_check")]
    no_extra_check: bool,
    /// Verify the (hole-free) protocol instead of synthesizing.
    #[arg(long)]
    check_only: bool,
    /// Accepted and ignored: runs are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Other(String),
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn other(e: impl ToString) -> Failure {
    Failure::Other(e.to_string())
}

fn read_input(path: &Path, what: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| other(format!("writing {}: {e}", path.display())))
}

fn apply_flags(a: &SynthArgs, cfg: &mut SynthesisConfig) -> Result<(), Failure> {
    if matches!(a.strategy, Some(StrategyArg::Naive)) && a.no_equiv_reduction {
        return Err(usage(
            "--no-equiv-reduction is redundant with --strategy naive, which never reduces",
        ));
    }
    match a.strategy {
        Some(StrategyArg::Naive) => cfg.strategy = Strategy::Naive,
        Some(StrategyArg::Cached) => cfg.strategy = Strategy::Cached,
        None => {}
    }
    if a.no_equiv_reduction {
        cfg.reduce = false;
    }
    if a.no_shortcircuit {
        cfg.shortcircuit = false;
    }
    if let Some(t) = a.timeout {
        cfg.timeout = Duration::from_secs(t);
    }
    if let Some(n) = a.state_cap {
        cfg.state_cap = n;
    }
    if a.max_size.is_some() {
        cfg.max_combined_size = a.max_size;
    }
    if a.extra_check {
        cfg.extra_check = true;
    }
    if a.no_extra_check {
        cfg.extra_check = false;
    }
    Ok(())
}

fn check_only(sk: &Sketch, cfg: &SynthesisConfig) -> Result<u8, Failure> {
    if let Some(h) = sk.holes.first() {
        return Err(usage(format!(
            "--check-only needs a hole-free protocol, found hole `{}`",
            h.name
        )));
    }
    let opts = CheckOptions {
        state_cap: cfg.state_cap,
    };
    let extra = if cfg.extra_check {
        &cfg.extra_instances[..]
    } else {
        &[]
    };
    for (i, inst) in std::iter::once(&cfg.instance).chain(extra).enumerate() {
        let r = verify(sk, inst, &opts).map_err(other)?;
        let label = if i == 0 {
            "instance".to_string()
        } else {
            format!("extra instance {i}")
        };
        match r.verdict {
            Verdict::Pass => println!(
                "{label}: pass ({} states, {:.3} s)",
                r.states_explored,
                r.check_time.as_secs_f64()
            ),
            Verdict::Fail(c) => {
                println!("{label}: FAIL\n{c}");
                return Ok(EXIT_FAILURE);
            }
        }
    }
    Ok(0)
}

fn synth(a: &SynthArgs) -> Result<u8, Failure> {
    let spec = read_input(&a.spec, "spec")?;
    read_input(&a.config, "config")?;
    let sk = parse_sketch(&spec).map_err(|e| other(format!("{}: {e}", a.spec.display())))?;
    let mut cfg =
        load_config(&a.config, &sk).map_err(|e| other(format!("{}: {e}", a.config.display())))?;
    apply_flags(a, &mut cfg)?;
    if a.check_only {
        return check_only(&sk, &cfg);
    }
    let result = synthesize(&sk, &cfg).map_err(other)?;
    println!("result={}", result.kind());
    let code = match &result {
        SynthesisResult::Solved {
            completion,
            protocol,
            ..
        } => {
            print!("{completion}");
            let text = protocol.serialize();
            match &a.output {
                Some(path) => {
                    write_output(path, &text)?;
                    println!("solution={}", path.display());
                }
                None => print!("\n{text}\n"),
            }
            0
        }
        SynthesisResult::Exhausted(_) => EXIT_EXHAUSTED,
        SynthesisResult::TimedOut(_) => EXIT_TIMED_OUT,
        SynthesisResult::Unrealizable { run, .. } => {
            println!("no completion avoids this run:\n{run}");
            EXIT_UNREALIZABLE
        }
    };
    let stats = report_stats(result.stats());
    print!("{stats}");
    if let Some(path) = &a.stats {
        write_output(path, &stats)?;
    }
    Ok(code)
}

fn corpus(filter: Option<&str>, root: Option<&Path>) -> Result<u8, Failure> {
    let root = root.map_or_else(default_root, Path::to_path_buf);
    let report = run_corpus(&root, filter).map_err(|e| match e {
        protoforge::corpus::CorpusError::NoMatch(_) => usage(e.to_string()),
        e => other(e),
    })?;
    print!("{report}");
    Ok(if report.ok() { 0 } else { EXIT_FAILURE })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let r = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Corpus { filter, root } => corpus(filter.as_deref(), root.as_deref()),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
