//! Digital beamforming, per-subcarrier spectral efficiency and the Monte-Carlo
//! harness that compares hybrid schemes against PS-only and fully-digital
//! baselines.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytical::{analog_response, compensating_phases, design_analytical, design_analytical_clipped, AnalogBeamformer};
use crate::channel::{build_channel_for, ChannelSet, DistanceModel, PathGainMode};
use crate::error::{Error, Result};
use crate::geometry::{make_grid, make_uca_half_wavelength, make_ula_half_wavelength, rayleigh_distance, ArrayKind, PolarPoint, Scenario};
use crate::jointopt::{optimize_joint, JointOptConfig};

type CMat = DMatrix<Complex64>;

/// Per-subcarrier digital precoders, each `N_F × K` with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalBeamformer {
    pub d_m: Vec<CMat>,
}

impl DigitalBeamformer {
    pub fn n_subcarriers(&self) -> usize {
        self.d_m.len()
    }

    pub fn column(&self, m: usize, k: usize) -> Vec<Complex64> {
        self.d_m[m].column(k).iter().copied().collect()
    }
}

/// Spectral efficiency averaged over realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEResult {
    /// `rates[m][k]` in bit/s/Hz.
    pub per_user_per_subcarrier_rate: Vec<Vec<f64>>,
    pub mean_rate: f64,
    pub config_digest: String,
    pub realizations: usize,
}

impl SEResult {
    fn from_rates(rates: Vec<Vec<f64>>, config_digest: String) -> Self {
        let count: usize = rates.iter().map(Vec::len).sum();
        let total: f64 = rates.iter().flatten().sum();
        let mean_rate = if count == 0 { 0.0 } else { total / count as f64 };
        Self {
            per_user_per_subcarrier_rate: rates,
            mean_rate,
            config_digest,
            realizations: 1,
        }
    }
}

fn regularized(h_eq: &CMat, ratio: f64) -> CMat {
    let (k, nf) = h_eq.shape();
    let h_adj = h_eq.adjoint();
    // (I + ρĤᴴĤ)⁻¹Ĥᴴ = Ĥᴴ(I + ρĤĤᴴ)⁻¹: invert whichever side is smaller.
    let mut d = if k <= nf {
        let a = CMat::identity(k, k) + h_eq * &h_adj * Complex64::from(ratio);
        let inv = a.cholesky().expect("identity-regularized Gram matrix is positive definite").inverse();
        h_adj * inv
    } else {
        let a = CMat::identity(nf, nf) + &h_adj * h_eq * Complex64::from(ratio);
        a.cholesky().expect("identity-regularized Gram matrix is positive definite").solve(&h_adj)
    };
    for mut col in d.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::from(norm);
        }
    }
    d
}

/// Regularized precoder for one subcarrier:
/// `dₖ ∝ (I + ρ Σᵢ ĥᵢᴴĥᵢ)⁻¹ ĥₖᴴ`, columns normalized. `h_eq` is `K × N_F`
/// with user `k` in row `k`; `ratio` is `P_t/(Kσ²)`.
pub fn digital_beamformer(h_eq: &CMat, ratio: f64) -> Result<CMat> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::invalid(format!("regularization ratio must be > 0, got {ratio}")));
    }
    if h_eq.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::invalid("equivalent channel has non-finite entries"));
    }
    Ok(regularized(h_eq, ratio))
}

/// `Ĥₘ = Hₘᴴ W₁ W₂,ₘ`: row `k` holds `h_{m,k}ᴴ w_{m,l}` for every chain `l`.
pub fn equivalent_channel(channel: &ChannelSet, analog: &AnalogBeamformer, m: usize) -> Result<CMat> {
    check_dims(channel, analog)?;
    let k = channel.n_users();
    let nf = analog.n_rf_chains();
    let cols: Vec<Vec<Complex64>> = (0..nf).map(|l| analog_response(analog, m, l)).collect();
    Ok(CMat::from_fn(k, nf, |i, l| {
        channel.user(m, i).iter().zip(&cols[l]).map(|(h, w)| h.conj() * w).sum()
    }))
}

fn raw_channel(channel: &ChannelSet, m: usize) -> CMat {
    CMat::from_fn(channel.n_users(), channel.n_antennas(), |k, n| channel.user(m, k)[n].conj())
}

fn check_dims(channel: &ChannelSet, analog: &AnalogBeamformer) -> Result<()> {
    if channel.n_antennas() != analog.n_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} antennas, beamformer {}",
            channel.n_antennas(),
            analog.n_antennas()
        )));
    }
    if channel.n_subcarriers() != analog.grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} subcarriers, beamformer {}",
            channel.n_subcarriers(),
            analog.grid.len()
        )));
    }
    Ok(())
}

fn check_power(sigma2: f64, pt: f64) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be > 0, got {sigma2}")));
    }
    if !(pt.is_finite() && pt >= 0.0) {
        return Err(Error::invalid(format!("pt must be >= 0, got {pt}")));
    }
    Ok(())
}

/// Rates of every user given `G = ĤD`.
fn rates_from_gains(g: &CMat, sigma2: f64, pt: f64) -> Vec<f64> {
    let k = g.nrows();
    let per_stream = pt / k as f64;
    (0..k)
        .map(|i| {
            let row: Vec<f64> = (0..g.ncols()).map(|j| g[(i, j)].norm_sqr()).collect();
            let signal = per_stream * row[i];
            let interference = per_stream * row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum::<f64>();
            (1.0 + signal / (interference + sigma2)).log2()
        })
        .collect()
}

fn digest_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rate of each user on each subcarrier for the hybrid precoder
/// `W₁W₂,ₘ dₘ`, each stream scaled by `√(P_t/K)`.
pub fn spectral_efficiency(
    channel: &ChannelSet,
    analog: &AnalogBeamformer,
    digital: &DigitalBeamformer,
    sigma2: f64,
    pt: f64,
) -> Result<SEResult> {
    check_power(sigma2, pt)?;
    check_dims(channel, analog)?;
    if digital.n_subcarriers() != channel.n_subcarriers() {
        return Err(Error::DimensionMismatch(format!(
            "digital beamformer has {} subcarriers, channel {}",
            digital.n_subcarriers(),
            channel.n_subcarriers()
        )));
    }
    let mut rates = Vec::with_capacity(channel.n_subcarriers());
    for m in 0..channel.n_subcarriers() {
        let h_eq = equivalent_channel(channel, analog, m)?;
        let d = &digital.d_m[m];
        if d.nrows() != h_eq.ncols() || d.ncols() != channel.n_users() {
            return Err(Error::DimensionMismatch(format!(
                "digital precoder is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                h_eq.ncols(),
                channel.n_users()
            )));
        }
        rates.push(rates_from_gains(&(h_eq * d), sigma2, pt));
    }
    let digest = digest_of(&(&analog.scheme, &analog.geometry_digest, &analog.grid, sigma2, pt));
    Ok(SEResult::from_rates(rates, digest))
}

/// Regularized digital precoders for every subcarrier of `analog`, with
/// ratio `P_t/(Kσ²)`.
pub fn hybrid_digital(channel: &ChannelSet, analog: &AnalogBeamformer, sigma2: f64, pt: f64) -> Result<DigitalBeamformer> {
    check_power(sigma2, pt)?;
    let ratio = pt / (channel.n_users() as f64 * sigma2);
    let d_m = (0..channel.n_subcarriers())
        .map(|m| Ok(regularized(&equivalent_channel(channel, analog, m)?, ratio)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DigitalBeamformer { d_m })
}

/// Regularized precoding straight on the `N`-antenna channel.
pub fn fully_digital_baseline(channel: &ChannelSet, pt: f64, sigma2: f64) -> Result<SEResult> {
    check_power(sigma2, pt)?;
    let ratio = pt / (channel.n_users() as f64 * sigma2);
    let rates = (0..channel.n_subcarriers())
        .map(|m| {
            let h = raw_channel(channel, m);
            let d = regularized(&h, ratio);
            rates_from_gains(&(h * d), sigma2, pt)
        })
        .collect();
    let digest = digest_of(&("fully_digital", channel.geometry().digest(), channel.grid(), sigma2, pt));
    Ok(SEResult::from_rates(rates, digest))
}

/// Carrier matched-filter PS phases on every antenna with all delays zero.
pub fn design_ps_only(scenario: &Scenario, targets: &[PolarPoint]) -> Result<AnalogBeamformer> {
    let mut bf = design_analytical(scenario, targets)?;
    for (l, t) in targets.iter().enumerate() {
        bf.delays_s[l].iter_mut().for_each(|d| *d = 0.0);
        bf.ps_phases_rad[l] =
            compensating_phases(scenario.geometry(), scenario.grid(), &bf.layout, t, &bf.delays_s[l]);
    }
    bf.delay_offsets_s.iter_mut().for_each(|o| *o = 0.0);
    bf.scheme = "ps_only".into();
    bf.exceeds_tau_max = false;
    Ok(bf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    PsOnly,
    Analytical,
    Joint,
    FullyDigital,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::PsOnly, Scheme::Analytical, Scheme::Joint, Scheme::FullyDigital];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PsOnly => "ps_only",
            Scheme::Analytical => "analytical",
            Scheme::Joint => "joint",
            Scheme::FullyDigital => "fully_digital",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ps_only" | "psonly" | "ps" => Ok(Scheme::PsOnly),
            "analytical" => Ok(Scheme::Analytical),
            "joint" => Ok(Scheme::Joint),
            "fully_digital" | "fullydigital" | "fd" => Ok(Scheme::FullyDigital),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Values in dB.
    Snr,
    /// Values in Hz.
    Bandwidth,
    /// Antenna count `N`; the array keeps half-wavelength spacing.
    Antennas,
    /// Values in seconds.
    TauMax,
    /// TTD units per chain `Q`.
    TtdCount,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Snr => "snr",
            Sweep::Bandwidth => "bandwidth",
            Sweep::Antennas => "antennas",
            Sweep::TauMax => "tau_max",
            Sweep::TtdCount => "ttd_count",
        }
    }

    pub fn parse(s: &str) -> Result<Sweep> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "snr" => Ok(Sweep::Snr),
            "bandwidth" => Ok(Sweep::Bandwidth),
            "antennas" => Ok(Sweep::Antennas),
            "tau_max" | "taumax" => Ok(Sweep::TauMax),
            "ttd_count" | "ttdcount" | "q" => Ok(Sweep::TtdCount),
            other => Err(Error::invalid(format!("unknown sweep '{other}'"))),
        }
    }

    /// `base` with this sweep's parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("sweep value must be finite, got {value}")));
        }
        let as_count = |what: &str| -> Result<usize> {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::invalid(format!("{what} sweep needs positive integers, got {value}")));
            }
            Ok(value as usize)
        };
        let mut parts = base.to_parts();
        match self {
            Sweep::Snr => parts.snr_db = value,
            Sweep::Bandwidth => {
                parts.grid = make_grid(base.grid().fc_hz(), value, base.grid().len())?;
            }
            Sweep::Antennas => {
                let n = as_count("antennas")?;
                let fc = base.grid().fc_hz();
                parts.geometry = match base.geometry().kind() {
                    ArrayKind::Uca => make_uca_half_wavelength(n, fc)?,
                    ArrayKind::Ula => make_ula_half_wavelength(n, fc)?,
                };
            }
            Sweep::TauMax => {
                if value < 0.0 {
                    return Err(Error::invalid(format!("tau_max sweep needs values >= 0, got {value}")));
                }
                parts.tau_max_s = value;
            }
            Sweep::TtdCount => parts.n_ttd_per_chain = as_count("ttd_count")?,
        }
        parts.build()
    }
}

/// Scaling applied to each channel vector before evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelNormalization {
    /// `‖h_{m,k}‖ = 1`.
    #[default]
    UnitNorm,
    /// Unit-modulus entries, `‖h_{m,k}‖² = N`.
    ArrayGain,
    /// Free-space amplitude `λₘ/(4πrₖ)`.
    PathLoss,
}

impl ChannelNormalization {
    pub fn apply(self, channel: &ChannelSet) -> ChannelSet {
        match self {
            ChannelNormalization::UnitNorm => channel.normalized(1.0),
            ChannelNormalization::ArrayGain => channel.normalized((channel.n_antennas() as f64).sqrt()),
            ChannelNormalization::PathLoss => channel.clone(),
        }
    }
}

/// How users are placed in each realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSampling {
    /// Lower distance. Lowered to `d_r/2` when the Rayleigh distance `d_r`
    /// of a small array falls below it and no upper bound is set.
    pub r_min_m: f64,
    /// Upper distance; `None` uses `d_r` of the base scenario.
    pub r_max_m: Option<f64>,
    pub min_separation_rad: f64,
}

impl Default for UserSampling {
    fn default() -> Self {
        Self {
            r_min_m: 5.0,
            r_max_m: None,
            min_separation_rad: 5.0_f64.to_radians(),
        }
    }
}

impl UserSampling {
    fn bounds(&self, scenario: &Scenario) -> Result<(f64, f64)> {
        let (lo, hi) = match self.r_max_m {
            Some(hi) => (self.r_min_m, hi),
            None => {
                let dr = rayleigh_distance(scenario.geometry(), scenario.grid().fc_hz());
                (self.r_min_m.min(dr / 2.0), dr)
            }
        };
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(Error::field("users.r_min_m", format!("need 0 < r_min <= r_max, got [{lo}, {hi}]")));
        }
        if !(self.min_separation_rad >= 0.0 && self.min_separation_rad * scenario.n_rf_chains() as f64 <= 2.0 * PI) {
            return Err(Error::field("users.min_separation", "cannot fit all users around the circle"));
        }
        Ok((lo, hi))
    }

    /// `K` users with `r ~ U[lo, hi]` and `φ ~ U[0, 2π)`, redrawn until every
    /// pair is at least the minimum separation apart.
    pub fn draw<R: Rng>(&self, rng: &mut R, k: usize, lo: f64, hi: f64) -> Result<Vec<PolarPoint>> {
        let phis = loop {
            let phis: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let ok = (0..k).all(|i| {
                (i + 1..k).all(|j| {
                    let d = (phis[i] - phis[j]).rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d) >= self.min_separation_rad
                })
            });
            if ok {
                break phis;
            }
        };
        phis.into_iter()
            .map(|phi| {
                let r = if hi > lo { rng.random_range(lo..hi) } else { lo };
                PolarPoint::new(r, phi)
            })
            .collect()
    }
}

/// Knobs of [`run_experiment`] beyond the scenario itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub normalization: ChannelNormalization,
    pub users: UserSampling,
    pub joint: JointOptConfig,
    pub sigma2: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            normalization: ChannelNormalization::UnitNorm,
            users: UserSampling::default(),
            joint: JointOptConfig::default(),
            sigma2: 1.0,
        }
    }
}

/// Mean SE of one scheme at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub mean_se: f64,
    pub std_se: f64,
    pub n_realizations: usize,
    /// Mean rate of each realization, in realization order.
    pub per_realization: Vec<f64>,
    pub result: SEResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub sweep: Sweep,
    pub rows: Vec<ExperimentRow>,
    pub scenario: Scenario,
    pub config: ExperimentConfig,
}

impl ExperimentTable {
    pub fn row(&self, sweep_value: f64, scheme: Scheme) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.sweep_value == sweep_value && r.scheme == scheme)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep_value,scheme,mean_se,std_se,n_realizations")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{},{:.12e},{:.12e},{}",
                r.sweep_value,
                r.scheme.name(),
                r.mean_se,
                r.std_se,
                r.n_realizations
            )?;
        }
        Ok(())
    }

    pub fn manifest_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sweep": self.sweep,
            "scenario": self.scenario,
            "config": self.config,
            "seed": self.config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "sweep_values": self.rows.iter().map(|r| r.sweep_value).collect::<Vec<_>>(),
        })
    }
}

/// Rates of `scheme` for one realization of `scenario` (users set).
pub fn evaluate_scheme(scenario: &Scenario, scheme: Scheme, config: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let users = scenario.users();
    let raw = build_channel_for(scenario.geometry(), scenario.grid(), users, DistanceModel::Exact, PathGainMode::Common)?;
    let channel = config.normalization.apply(&raw);
    let pt = 10f64.powf(scenario.snr_db() / 10.0) * config.sigma2;
    let result = match scheme {
        Scheme::FullyDigital => fully_digital_baseline(&channel, pt, config.sigma2)?,
        _ => {
            let analog = match scheme {
                Scheme::PsOnly => design_ps_only(scenario, users)?,
                Scheme::Analytical => design_analytical_clipped(scenario, users)?,
                Scheme::Joint => optimize_joint(scenario, users, &config.joint)?.0,
                Scheme::FullyDigital => unreachable!(),
            };
            let digital = hybrid_digital(&channel, &analog, config.sigma2, pt)?;
            spectral_efficiency(&channel, &analog, &digital, config.sigma2, pt)?
        }
    };
    Ok(result.per_user_per_subcarrier_rate)
}

fn realization_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Monte-Carlo comparison of `schemes` over `sweep_values`.
///
/// Each realization draws its users once from the base scenario (or reuses
/// the configured users) and evaluates every sweep value and scheme on them.
/// Results are independent of the thread count.
pub fn run_experiment(
    scenario: &Scenario,
    schemes: &[Scheme],
    sweep: Sweep,
    sweep_values: &[f64],
    config: &ExperimentConfig,
) -> Result<ExperimentTable> {
    if schemes.is_empty() {
        return Err(Error::invalid("no schemes given"));
    }
    if sweep_values.is_empty() {
        return Err(Error::invalid("no sweep values given"));
    }
    if !(config.sigma2.is_finite() && config.sigma2 > 0.0) {
        return Err(Error::field("sigma2", "must be > 0"));
    }
    config.joint.validate()?;
    let swept = sweep_values
        .iter()
        .map(|&v| sweep.apply(scenario, v))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = config.users.bounds(scenario)?;
    let k = scenario.n_rf_chains();
    let n_real = scenario.realizations();

    // [realization][value][scheme] → rates[m][k]
    let per_real = (0..n_real)
        .into_par_iter()
        .map(|i| {
            let users = if scenario.users().is_empty() {
                config.users.draw(&mut realization_rng(config.seed, i), k, lo, hi)?
            } else {
                scenario.users().to_vec()
            };
            swept
                .iter()
                .map(|s| {
                    let s = s.with_users(users.clone())?;
                    schemes.iter().map(|&sc| evaluate_scheme(&s, sc, config)).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(sweep_values.len() * schemes.len());
    for (vi, (&value, s)) in sweep_values.iter().zip(&swept).enumerate() {
        for (si, &scheme) in schemes.iter().enumerate() {
            let all: Vec<&Vec<Vec<f64>>> = per_real.iter().map(|r| &r[vi][si]).collect();
            let per_realization: Vec<f64> = all
                .iter()
                .map(|rates| {
                    let n: usize = rates.iter().map(Vec::len).sum();
                    rates.iter().flatten().sum::<f64>() / n as f64
                })
                .collect();
            let m = all[0].len();
            let mut avg = vec![vec![0.0; k]; m];
            for rates in &all {
                for (a, r) in avg.iter_mut().zip(rates.iter()) {
                    for (x, y) in a.iter_mut().zip(r) {
                        *x += y / n_real as f64;
                    }
                }
            }
            let mean = per_realization.iter().sum::<f64>() / n_real as f64;
            let std = if n_real > 1 {
                (per_realization.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_real - 1) as f64).sqrt()
            } else {
                0.0
            };
            let digest = digest_of(&(s, scheme, config));
            let mut result = SEResult::from_rates(avg, digest);
            result.mean_rate = mean;
            result.realizations = n_real;
            rows.push(ExperimentRow {
                sweep_value: value,
                scheme,
                mean_se: mean,
                std_se: std,
                n_realizations: n_real,
                per_realization,
                result,
            });
        }
    }
    Ok(ExperimentTable {
        sweep,
        rows,
        scenario: scenario.clone(),
        config: config.clone(),
    })
}
