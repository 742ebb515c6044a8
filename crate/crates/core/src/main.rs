use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cotag::channel::{calibrate_from_trace, load_trace, TraceOptions};
use cotag::harness::replay::{replay, ReplayCase};
use cotag::harness::{
    run_grid, run_scenario, write_csv, write_records, ChannelKind, GridAxes, MetricsRecord, ScenarioConfig, Scheme,
};
use cotag::simcore::SimTime;

#[derive(Parser)]
#[command(name = "cotag", version, about = "Coded taking-and-giving over two mmWave links, simulated")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics row.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write the per-event log here.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Sweep PER, latency, correlation and scheme.
    Grid {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1e-4])]
        pers: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 5.0])]
        latencies_ms: Vec<f64>,
        /// Target link correlations; pass an empty list to keep the configured q.
        #[arg(long, value_delimiter = ',', default_values_t = [-0.34, 0.0, 0.34], allow_negative_numbers = true)]
        correlations: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = Scheme::ALL)]
        schemes: Vec<Scheme>,
        #[arg(long, default_value_t = 5)]
        repeats: u32,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fit Markov parameters and rate levels to a measured trace.
    Calibrate {
        trace: PathBuf,
        /// The trace has a single rate column; use it for both links.
        #[arg(long)]
        single_link: bool,
    },
    /// Replay the six-packet, two-flow scenario and dump every transmission.
    Replay {
        #[arg(long, value_enum, default_value_t = CaseArg::Balanced)]
        case: CaseArg,
        #[arg(long, default_value_t = Scheme::Cotag)]
        scheme: Scheme,
        /// Interval length; the example's link rates scale with it.
        #[arg(long = "T-ms", default_value_t = 12.0)]
        t_ms: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Balanced,
    Unbalanced,
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    per: Option<f64>,
    #[arg(long)]
    latency_ms: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long = "T-ms")]
    t_ms: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replay a `t_s,rate1_gbps,rate2_gbps` trace instead of the Markov chain.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioArgs {
    fn build(&self) -> Result<ScenarioConfig, Box<dyn std::error::Error>> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(v) = self.per {
            cfg.per = v;
        }
        if let Some(v) = self.latency_ms {
            cfg.latency_ms = v;
        }
        if let Some(v) = self.p {
            cfg.channel.p = v;
        }
        if let Some(v) = self.q {
            cfg.channel.q = v;
            cfg.corr_target = None;
        }
        if let Some(v) = self.t_ms {
            cfg.t_ms = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(path) = &self.trace {
            cfg.channel.kind = ChannelKind::Trace;
            cfg.channel.trace = Some(path.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, records: &[MetricsRecord]) -> Result<(), Box<dyn std::error::Error>> {
    match out {
        Some(path) => write_csv(path, records)?,
        None => write_records(std::io::stdout().lock(), records)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Run { scenario, event_log } => {
            let mut cfg = scenario.build()?;
            cfg.event_log = event_log.is_some();
            let out = run_scenario(&cfg)?;
            if let (Some(path), Some(log)) = (&event_log, &out.event_log) {
                std::fs::write(path, log).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            if out.violations.total() > 0 {
                eprintln!("invariant violations: {:?}", out.violations);
            }
            emit(scenario.out.as_deref(), &[out.record])
        }
        Command::Grid { scenario, pers, latencies_ms, correlations, schemes, repeats, jobs } => {
            let base = scenario.build()?;
            let axes = GridAxes { pers, latencies_ms, correlations, schemes, repeats };
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            let records = run_grid(&base, &axes)?;
            emit(scenario.out.as_deref(), &records)
        }
        Command::Calibrate { trace, single_link } => {
            let records = load_trace(&trace, TraceOptions { duplicate_single_link: single_link })?;
            let c = calibrate_from_trace(&records)?;
            let mut w = std::io::stdout().lock();
            writeln!(w, "# {} samples, medians {:.4} / {:.4} Gbps", records.len(), c.medians.0, c.medians.1)?;
            writeln!(w, "# indicator correlation {:.4}, rate correlation {:.4}", c.indicator_correlation, c.rate_correlation)?;
            writeln!(w, "[channel]")?;
            writeln!(w, "p = {:.6}", c.params.p)?;
            writeln!(w, "q = {:.6}", c.params.q)?;
            writeln!(w, "step_ms = {:.3}", c.params.step.as_millis_f64())?;
            writeln!(w, "[channel.levels]")?;
            writeln!(w, "mean_low = {:.6}", c.levels.mean_low)?;
            writeln!(w, "mean_high = {:.6}", c.levels.mean_high)?;
            writeln!(w, "spread_low = {:.6}", c.levels.spread_low)?;
            writeln!(w, "spread_high = {:.6}", c.levels.spread_high)?;
            Ok(())
        }
        Command::Replay { case, scheme, t_ms } => {
            let case = match case {
                CaseArg::Balanced => ReplayCase::Balanced,
                CaseArg::Unbalanced => ReplayCase::Unbalanced,
            };
            if !(t_ms > 0.0) {
                return Err("--T-ms must be positive".into());
            }
            let report = replay(case, scheme, SimTime::from_millis_f64(t_ms));
            print!("{}", report.dump());
            Ok(())
        }
    }
}
