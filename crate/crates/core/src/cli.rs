//! Command implementations behind the `nfuca` binary. Each command writes
//! its artifacts into an output directory together with `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytical::{band_gains, design_analytical, AnalogBeamformer};
use crate::channel::DistanceModel;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evalsim::{run_experiment, Scheme, Sweep};
use crate::geometry::{ArrayKind, PolarPoint, SPEED_OF_LIGHT};
use crate::jointopt::optimize_joint;
use crate::specfun::{invert_gain_threshold, min_ttd_count};
use crate::squint::{default_range, default_samples, squint_profile, GainAxis};

pub const SEED_ENV: &str = "NFUCA_SEED";

/// Exit status for an error: 2 parse, 3 validation, 4 domain, 1 anything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) => 2,
        Error::Validation { .. } => 3,
        Error::InvalidArgument(_) | Error::OutOfRange(_) | Error::DimensionMismatch(_) => 4,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

/// Record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_digest: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub version: String,
}

impl RunManifest {
    fn new(subcommand: &str, config_digest: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.into(),
            config_digest: config_digest.into(),
            seed,
            outputs: Vec::new(),
            wall_time_s: 0.0,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn finish(mut self, out_dir: &Path, started: Instant) -> Result<Self> {
        self.wall_time_s = started.elapsed().as_secs_f64();
        let path = out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(self)
    }
}

/// Seed precedence: command line, then `NFUCA_SEED`, then the config.
pub fn resolve_seed(cli: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::field(SEED_ENV, format!("must be an unsigned integer, got \"{v}\""))),
        None => Ok(config),
    }
}

fn create(out_dir: &Path, name: &str, manifest: &mut RunManifest) -> Result<(BufWriter<File>, PathBuf)> {
    let path = out_dir.join(name);
    manifest.outputs.push(path.display().to_string());
    Ok((BufWriter::new(File::create(&path)?), path))
}

fn prepare(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    Ok(())
}

pub struct SquintArgs {
    pub axis: GainAxis,
    /// Defaults to the first configured user, else 5 m at 0°.
    pub focal: Option<PolarPoint>,
    pub samples: Option<usize>,
    /// Sweep bounds in metres, or radians for the angle axis.
    pub range: Option<(f64, f64)>,
}

/// Writes `squint_<axis>.csv` (coordinate plus one gain column per
/// subcarrier) and its JSON sidecar.
pub fn cmd_squint(cfg: &RunConfig, args: &SquintArgs, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let s = &cfg.scenario;
    let focal = match args.focal {
        Some(p) => p,
        None => s.users().first().copied().unwrap_or(PolarPoint::new(5.0, 0.0)?),
    };
    let range = args.range.unwrap_or_else(|| default_range(s, &focal, args.axis));
    let samples = args.samples.unwrap_or_else(|| default_samples(args.axis));
    let profile = squint_profile(s, &focal, args.axis, range, samples)?;
    prepare(out_dir)?;
    let mut manifest = RunManifest::new("squint", &cfg.digest, cfg.experiment.seed);
    let stem = match args.axis {
        GainAxis::Angle => "squint_angle",
        GainAxis::Distance => "squint_distance",
    };
    let (mut w, _) = create(out_dir, &format!("{stem}.csv"), &mut manifest)?;
    profile.write_csv(&mut w)?;
    w.flush()?;
    let mut sidecar = profile.sidecar_json();
    sidecar["array"] = serde_json::json!(match s.geometry().kind() {
        ArrayKind::Uca => "uca",
        ArrayKind::Ula => "ula",
    });
    sidecar["config_digest"] = serde_json::json!(cfg.digest);
    let (mut w, _) = create(out_dir, &format!("{stem}.json"), &mut manifest)?;
    w.write_all(serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    w.flush()?;
    manifest.finish(out_dir, started)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignScheme {
    Analytical,
    Joint,
}

impl DesignScheme {
    pub fn name(self) -> &'static str {
        match self {
            DesignScheme::Analytical => "analytical",
            DesignScheme::Joint => "joint",
        }
    }
}

fn write_gain_csv<W: Write>(mut w: W, bf: &AnalogBeamformer, cfg: &RunConfig) -> Result<()> {
    let s = &cfg.scenario;
    let gains: Vec<Vec<f64>> = bf
        .targets
        .iter()
        .enumerate()
        .map(|(l, t)| band_gains(bf, s.geometry(), t, l, DistanceModel::Exact))
        .collect();
    let mut header = String::from("subcarrier,freq_hz");
    for l in 1..=gains.len() {
        header.push_str(&format!(",gain_chain_{l}"));
    }
    writeln!(w, "{header}")?;
    for m in 0..s.grid().len() {
        let mut line = format!("{},{:.9e}", m + 1, s.grid().freq_hz(m));
        for g in &gains {
            line.push_str(&format!(",{:.12e}", g[m]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Designs the analog beamformer for the configured users and writes
/// `design_<scheme>.json`, `design_<scheme>_gain.csv` and, for the joint
/// scheme, `design_joint_trace.csv`.
pub fn cmd_design(cfg: &RunConfig, scheme: DesignScheme, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let s = &cfg.scenario;
    if s.users().is_empty() {
        return Err(Error::field("users", "design needs one configured user per RF chain"));
    }
    let (bf, trace) = match scheme {
        DesignScheme::Analytical => (design_analytical(s, s.users())?, None),
        DesignScheme::Joint => {
            let (bf, trace) = optimize_joint(s, s.users(), &cfg.experiment.joint)?;
            (bf, Some(trace))
        }
    };
    if bf.exceeds_tau_max {
        eprintln!(
            "warning: delay span {:.3e} s exceeds tau_max_s = {:.3e} s",
            bf.max_delay_s(),
            s.tau_max_s()
        );
    }
    prepare(out_dir)?;
    let mut manifest = RunManifest::new("design", &cfg.digest, cfg.experiment.seed);
    let name = scheme.name();
    let (mut w, _) = create(out_dir, &format!("design_{name}.json"), &mut manifest)?;
    w.write_all(bf.to_json()?.as_bytes())?;
    w.flush()?;
    let (mut w, _) = create(out_dir, &format!("design_{name}_gain.csv"), &mut manifest)?;
    write_gain_csv(&mut w, &bf, cfg)?;
    w.flush()?;
    if let Some(trace) = trace {
        let (mut w, _) = create(out_dir, "design_joint_trace.csv", &mut manifest)?;
        trace.write_csv(&mut w)?;
        w.flush()?;
    }
    manifest.finish(out_dir, started)
}

/// Intermediate values of the TTD-count bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTtdReport {
    pub delta: f64,
    pub target_gain: f64,
    /// `f⁻¹(1 − Δ)`.
    pub epsilon: f64,
    /// `π²BR(1 − R/4r)/(c·ε)` before rounding.
    pub bound: f64,
    pub q: usize,
}

impl MinTtdReport {
    pub fn to_text(&self) -> String {
        format!(
            "delta = {}\ntarget_gain = {}\nepsilon = {:.12}\nbound = {:.6}\nq = {}\n",
            self.delta, self.target_gain, self.epsilon, self.bound, self.q
        )
    }
}

pub fn cmd_min_ttd(delta: f64, bandwidth_hz: f64, radius_m: f64, distance_m: f64) -> Result<MinTtdReport> {
    let q = min_ttd_count(delta, bandwidth_hz, radius_m, distance_m)?;
    let epsilon = invert_gain_threshold(delta)?;
    let bound = std::f64::consts::PI.powi(2) * bandwidth_hz * radius_m * (1.0 - radius_m / (4.0 * distance_m))
        / (SPEED_OF_LIGHT * epsilon);
    Ok(MinTtdReport {
        delta,
        target_gain: 1.0 - delta,
        epsilon,
        bound,
        q,
    })
}

/// Runs the Monte-Carlo sweep and writes `se_<sweep>.csv` plus
/// `se_<sweep>.json` holding the full configuration.
pub fn cmd_se(cfg: &RunConfig, sweep: Sweep, values: &[f64], schemes: &[Scheme], out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let table = run_experiment(&cfg.scenario, schemes, sweep, values, &cfg.experiment)?;
    prepare(out_dir)?;
    let mut manifest = RunManifest::new("se", &cfg.digest, cfg.experiment.seed);
    let stem = format!("se_{}", sweep.name());
    let (mut w, _) = create(out_dir, &format!("{stem}.csv"), &mut manifest)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let mut meta = table.manifest_json();
    meta["config_digest"] = serde_json::json!(cfg.digest);
    meta["config_document"] = cfg.document.clone();
    let (mut w, _) = create(out_dir, &format!("{stem}.json"), &mut manifest)?;
    w.write_all(serde_json::to_string_pretty(&meta)?.as_bytes())?;
    w.flush()?;
    manifest.finish(out_dir, started)
}

/// Comma-separated list of reals, e.g. `"0,5e-9,2e-8"`.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse sweep value \"{}\"", v.trim())))
        })
        .collect()
}

/// Comma-separated scheme names, or `all`.
pub fn parse_schemes(text: &str) -> Result<Vec<Scheme>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(Scheme::ALL.to_vec());
    }
    text.split(',').map(Scheme::parse).collect()
}
