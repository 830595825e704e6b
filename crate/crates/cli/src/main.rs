use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use famvote_core::cost::{comparison_csv, comparison_table, EnergyConstants, MessageSizeModel, Timings};
use famvote_core::protocol::AttackKind;
use famvote_core::sim::{
    attack_demo, bootstrap, emit_dataset, emit_script, generate_dataset, generate_script, load_dataset, load_script,
    report_csv, run, sweep, sweep_csv, write, DatasetConfig, RunReport, SimError, SweepAxis,
};
use famvote_core::TrustParams;

#[derive(Parser)]
#[command(name = "famvote", version, about = "Reputation-voted zone admission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a nodes file.
    GenData(GenData),
    /// Generate an encounter script for a nodes file.
    GenScript(GenScript),
    /// Bootstrap the dataset and play the script.
    Run(RunArgs),
    /// One run per value of a parameter.
    Sweep(SweepArgs),
    /// Mount attacks against established chains.
    AttackDemo(AttackArgs),
    /// Convert a JSON run report.
    Report(ReportArgs),
    /// Communication, computation and energy comparison for k helpers.
    CostTable(CostArgs),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 100)]
    nodes: u32,
    #[arg(long, default_value_t = 20)]
    zones: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_friends: u32,
    #[arg(long, default_value_t = 17)]
    max_friends: u32,
    #[arg(long, default_value_t = 5)]
    min_permitted: u32,
    #[arg(long, default_value_t = 18)]
    max_permitted: u32,
}

#[derive(Args)]
struct GenScript {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 20)]
    zones: u32,
    #[arg(long, default_value_t = 99_999)]
    lines: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RunCommon {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    script: PathBuf,
    #[arg(long, default_value_t = 20)]
    zones: u32,
    #[arg(long, default_value_t = 100)]
    n_max: u32,
    #[arg(long, default_value_t = 80)]
    delta_rep: u32,
    #[arg(long, default_value_t = 7)]
    delta_max: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl RunCommon {
    fn params(&self) -> TrustParams {
        TrustParams {
            n_max: self.n_max,
            delta_reputation: self.delta_rep,
            delta_max_friend: self.delta_max,
            zone_count: self.zones,
            rng_seed: self.seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: RunCommon,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    MaxFriend,
    Reputation,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<u32>,
    #[command(flatten)]
    common: RunCommon,
    /// CSV path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Replay,
    Impersonate,
    Tamper,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, default_value_t = 1000)]
    trials: u32,
    /// Nodes file; a default dataset is generated from the seed when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    zones: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, default_value_t = 7)]
    k: u32,
}

fn read(path: &Path) -> Result<String, SimError> {
    std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), SimError> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::GenData(a) => {
            let d = generate_dataset(&DatasetConfig {
                node_count: a.nodes,
                zone_count: a.zones,
                friends: (a.min_friends, a.max_friends),
                permitted_zones: (a.min_permitted, a.max_permitted),
                seed: a.seed,
            })?;
            write(&a.out, &emit_dataset(&d))
        }
        Command::GenScript(a) => {
            let d = load_dataset(&a.dataset, a.zones)?;
            let s = generate_script(&d, a.lines, a.seed)?;
            write(&a.out, &emit_script(&s))
        }
        Command::Run(a) => {
            let c = &a.common;
            let d = load_dataset(&c.dataset, c.zones)?;
            let s = load_script(&c.script, &d)?;
            let started = Instant::now();
            let (mut world, _) = bootstrap(&d, c.params(), c.seed)?;
            let report = run(&mut world, &s);
            eprintln!(
                "{} encounters in {:.1} ms ({:.1} ms total with bootstrap)",
                report.total_encounters,
                report.wall_clock_ms,
                started.elapsed().as_secs_f64() * 1e3
            );
            emit(a.report.as_deref(), &report.to_json())
        }
        Command::Sweep(a) => {
            let c = &a.common;
            let d = load_dataset(&c.dataset, c.zones)?;
            let s = load_script(&c.script, &d)?;
            let axis = match a.axis {
                AxisArg::MaxFriend => SweepAxis::MaxFriend,
                AxisArg::Reputation => SweepAxis::Reputation,
            };
            let rows = sweep(&d, &s, c.params(), axis, &a.values, c.seed)?;
            emit(a.out.as_deref(), &sweep_csv(&rows))
        }
        Command::AttackDemo(a) => {
            let d = match &a.dataset {
                Some(p) => load_dataset(p, a.zones)?,
                None => generate_dataset(&DatasetConfig {
                    zone_count: a.zones,
                    seed: a.seed,
                    ..DatasetConfig::default()
                })?,
            };
            let (mut world, _) = bootstrap(&d, TrustParams::default(), a.seed)?;
            let kind = match a.kind {
                KindArg::Replay => AttackKind::Replay,
                KindArg::Impersonate => AttackKind::Impersonation,
                KindArg::Tamper => AttackKind::Tamper,
            };
            let summary = attack_demo(&mut world, kind, a.trials, a.seed);
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            println!("{json}");
            Ok(())
        }
        Command::Report(a) => {
            let text = read(&a.input)?;
            let report: RunReport = serde_json::from_str(&text).map_err(|e| SimError::Parse {
                origin: a.input.display().to_string(),
                message: e.to_string(),
            })?;
            match a.format {
                Format::Csv => emit(a.out.as_deref(), &report_csv(&report)),
            }
        }
        Command::CostTable(a) => {
            let rows = comparison_table(
                a.k,
                &MessageSizeModel::default(),
                &EnergyConstants::default(),
                &Timings::default(),
            );
            print!("{}", comparison_csv(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
