use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nfuca::cli::{
    cmd_design, cmd_min_ttd, cmd_se, cmd_squint, exit_code, parse_schemes, parse_values, resolve_seed, DesignScheme,
    SquintArgs, SEED_ENV,
};
use nfuca::config::{load_config, RunConfig};
use nfuca::evalsim::Sweep;
use nfuca::geometry::PolarPoint;
use nfuca::squint::GainAxis;
use nfuca::{Error, Result};

#[derive(Parser)]
#[command(name = "nfuca", version, about = "Near-field wideband UCA beamforming toolkit")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides NFUCA_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured number of realizations.
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Angle,
    Distance,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Analytical,
    Joint,
}

#[derive(Subcommand)]
enum Command {
    /// Gain of a PS-only beamformer across the band, along angle or distance.
    Squint {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "angle")]
        axis: AxisArg,
        /// Focal distance in metres.
        #[arg(long, requires = "focal_phi_deg")]
        focal_r_m: Option<f64>,
        /// Focal azimuth in degrees.
        #[arg(long, requires = "focal_r_m")]
        focal_phi_deg: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Sweep start: metres, or degrees for the angle axis.
        #[arg(long, requires = "to")]
        from: Option<f64>,
        /// Sweep end: metres, or degrees for the angle axis.
        #[arg(long, requires = "from")]
        to: Option<f64>,
    },
    /// Design the analog TTD/PS beamformer for the configured users.
    Design {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "analytical")]
        scheme: SchemeArg,
    },
    /// Smallest TTD count per chain that keeps the band gain above 1 - delta.
    MinTtd {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        bandwidth_hz: f64,
        #[arg(long)]
        radius_m: f64,
        #[arg(long)]
        distance_m: f64,
    },
    /// Monte-Carlo spectral efficiency sweep.
    Se {
        #[command(flatten)]
        run: RunArgs,
        /// snr | bandwidth | antennas | tau_max | ttd_count
        #[arg(long)]
        sweep: String,
        /// Comma-separated values in the sweep's unit (dB, Hz, count, s).
        #[arg(long)]
        values: String,
        /// Comma-separated: ps_only, analytical, joint, fully_digital, or all.
        #[arg(long, default_value = "all")]
        schemes: String,
    },
}

fn load(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = load_config(&run.config)?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.experiment.seed = resolve_seed(run.seed, env.as_deref(), cfg.experiment.seed)?;
    if let Some(r) = run.realizations {
        let mut parts = cfg.scenario.to_parts();
        parts.realizations = r;
        cfg.scenario = parts.build()?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Squint {
            run,
            axis,
            focal_r_m,
            focal_phi_deg,
            samples,
            from,
            to,
        } => {
            let cfg = load(&run)?;
            let axis = match axis {
                AxisArg::Angle => GainAxis::Angle,
                AxisArg::Distance => GainAxis::Distance,
            };
            let focal = match (focal_r_m, focal_phi_deg) {
                (Some(r), Some(phi)) => Some(PolarPoint::from_degrees(r, phi)?),
                _ => None,
            };
            let range = from.zip(to).map(|(a, b)| match axis {
                GainAxis::Angle => (a.to_radians(), b.to_radians()),
                GainAxis::Distance => (a, b),
            });
            let args = SquintArgs {
                axis,
                focal,
                samples,
                range,
            };
            let m = cmd_squint(&cfg, &args, &run.out)?;
            println!("{}", m.outputs.join("\n"));
        }
        Command::Design { run, scheme } => {
            let cfg = load(&run)?;
            let scheme = match scheme {
                SchemeArg::Analytical => DesignScheme::Analytical,
                SchemeArg::Joint => DesignScheme::Joint,
            };
            let m = cmd_design(&cfg, scheme, &run.out)?;
            println!("{}", m.outputs.join("\n"));
        }
        Command::MinTtd {
            delta,
            bandwidth_hz,
            radius_m,
            distance_m,
        } => {
            let report = cmd_min_ttd(delta, bandwidth_hz, radius_m, distance_m)?;
            print!("{}", report.to_text());
        }
        Command::Se {
            run,
            sweep,
            values,
            schemes,
        } => {
            let cfg = load(&run)?;
            let sweep = Sweep::parse(&sweep)?;
            let values = parse_values(&values)?;
            let schemes = parse_schemes(&schemes)?;
            let m = cmd_se(&cfg, sweep, &values, &schemes, &run.out)?;
            println!("{}", m.outputs.join("\n"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: Error = e;
            ExitCode::from(exit_code(&code) as u8)
        }
    }
}
