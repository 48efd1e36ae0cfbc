use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relay_precoding::harness::{self, output, ExperimentConfig};
use relay_precoding::topology::parse_system_spec;
use relay_precoding::Result;

#[derive(Parser)]
#[command(name = "relay-sim", version, about = "Monte Carlo runs of the relay precoding variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average every variant over the power sweep and write results.csv.
    Run(Common),
    /// Same as `run`, also printing the best timesharing value of every curve.
    SweepT(Common),
    /// One realization with full traces.
    Single {
        #[command(flatten)]
        common: Common,
        /// Realization index.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Parse and check a config, then print it in canonical form.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// System string such as "(2^3 x 2^6 x 2^12, 1x1)"; overrides the file.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, &self.system) {
            (Some(path), _) => harness::load_config(path)?,
            (None, Some(system)) => ExperimentConfig::new(parse_system_spec(system)?),
            (None, None) => {
                return Err(relay_precoding::Error::InvalidArgument(
                    "pass --config or --system".into(),
                ))
            }
        };
        if let (Some(_), Some(system)) = (&self.config, &self.system) {
            let mut parsed = parse_system_spec(system)?;
            parsed.relay_noise = config.system.relay_noise;
            parsed.receiver_noise = config.system.receiver_noise;
            config.system = parsed;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(n) = self.realizations {
            config.realizations = n;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if let Some(p) = self.parallel {
            config.parallel = p;
        }
        config.validate()?;
        Ok(config)
    }
}

fn print_rows(rows: &[harness::AggregateRow]) {
    println!("{}", output::CSV_HEADER);
    for r in rows {
        println!(
            "{},{},{},{},{:.6},{:.6},{}",
            r.power_db, r.t, r.series, r.n_init, r.mean_sum_rate_bits, r.stderr_bits, r.realizations
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let config = common.load()?;
            let report = harness::monte_carlo(&config)?;
            let traces: Vec<_> = report.realizations.iter().flat_map(|r| r.traces.clone()).collect();
            let path = harness::emit_results(&config, &report.rows, &traces, report.flags, &config.out)?;
            print_rows(&report.rows);
            eprintln!("wrote {}", path.display());
        }
        Command::SweepT(common) => {
            let config = common.load()?;
            let sweep = harness::timesharing_sweep(&config)?;
            let report = &sweep.report;
            let traces: Vec<_> = report.realizations.iter().flat_map(|r| r.traces.clone()).collect();
            let path = harness::emit_results(&config, &report.rows, &traces, report.flags, &config.out)?;
            print_rows(&report.rows);
            for o in &sweep.optima {
                println!(
                    "best t for {} (power {} dB, N={}): {} -> {:.6} bits",
                    o.series, o.power_db, o.n_init, o.t, o.mean_sum_rate_bits
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Single { common, index } => {
            let mut config = common.load()?;
            config.realizations = 1;
            let result = harness::single_realization(&config, index)?;
            let keys = harness::monte_carlo::cell_keys(&config);
            for (key, value) in keys.iter().zip(&result.values) {
                println!(
                    "power {} dB, t {}, {} (N={}): {:.6} bits",
                    key.power_db, key.t, key.series, key.n_init, value
                );
            }
            let dir = config.out.join(output::TRACE_DIR);
            std::fs::create_dir_all(&dir).map_err(|e| relay_precoding::Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            for trace in &result.traces {
                output::write_trace(trace, &dir.join(output::trace_file_name(trace)))?;
            }
            eprintln!("wrote {} traces to {}", result.traces.len(), dir.display());
        }
        Command::Validate(common) => {
            let config = common.load()?;
            print!("{}", config.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
