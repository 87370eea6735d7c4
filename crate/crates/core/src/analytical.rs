//! Analytical TTD + phase-shifter beamformer and its gain predictions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{response_at_wavenumber, taylor2_distance, DistanceModel};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, PolarPoint, Scenario, SubcarrierGrid, SPEED_OF_LIGHT};
use crate::specfun::{bessel_j, hyp1f2_gain};

/// Partition of the UCA into `Q` contiguous sub-arrays of `P` antennas, each
/// driven by one TTD unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubarrayLayout {
    pub q_subarrays: usize,
    pub p_per_subarray: usize,
    /// Phase centre of each sub-array, `(P−1)π/N + 2πq/Q`.
    pub theta_q: Vec<f64>,
}

impl SubarrayLayout {
    pub fn new(n_antennas: usize, q_subarrays: usize) -> Result<Self> {
        if q_subarrays == 0 || !n_antennas.is_multiple_of(q_subarrays) {
            return Err(Error::field(
                "n_ttd_per_chain",
                format!("{n_antennas} antennas are not divisible into {q_subarrays} sub-arrays"),
            ));
        }
        let p = n_antennas / q_subarrays;
        let base = (p as f64 - 1.0) * PI / n_antennas as f64;
        let theta_q = (0..q_subarrays)
            .map(|q| base + 2.0 * PI * q as f64 / q_subarrays as f64)
            .collect();
        Ok(Self { q_subarrays, p_per_subarray: p, theta_q })
    }

    pub fn for_scenario(scenario: &Scenario) -> Result<Self> {
        Self::new(scenario.geometry().n_antennas(), scenario.n_ttd_per_chain())
    }

    /// Sub-array that antenna `n` belongs to.
    pub fn subarray_of(&self, n: usize) -> usize {
        n / self.p_per_subarray
    }
}

/// Hybrid analog stage: one row of PS phases and one row of TTD delays per
/// RF chain. Column `l` on subcarrier `m` has entries
/// `(1/√N)·exp(j·ps[l][n] − j2πfₘ·τ[l][q(n)])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogBeamformer {
    pub scheme: String,
    pub layout: SubarrayLayout,
    pub grid: SubcarrierGrid,
    pub geometry_digest: String,
    pub targets: Vec<PolarPoint>,
    /// `ps_phases_rad[l][n]`, in `[0, 2π)`.
    pub ps_phases_rad: Vec<Vec<f64>>,
    /// `delays_s[l][q]`.
    pub delays_s: Vec<Vec<f64>>,
    /// Common delay removed from each chain so that its smallest delay is 0.
    pub delay_offsets_s: Vec<f64>,
    pub tau_max_s: f64,
    /// True when some chain's delay span exceeds `tau_max_s`.
    pub exceeds_tau_max: bool,
}

impl AnalogBeamformer {
    pub fn n_antennas(&self) -> usize {
        self.layout.q_subarrays * self.layout.p_per_subarray
    }

    pub fn n_rf_chains(&self) -> usize {
        self.ps_phases_rad.len()
    }

    /// Largest per-chain delay.
    pub fn max_delay_s(&self) -> f64 {
        self.delays_s.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Column `l` of `W₁W₂` at frequency `f_hz`.
pub fn analog_response_at(bf: &AnalogBeamformer, f_hz: f64, l: usize) -> Vec<Complex64> {
    let n = bf.n_antennas();
    let scale = 1.0 / (n as f64).sqrt();
    let ps = &bf.ps_phases_rad[l];
    let tau = &bf.delays_s[l];
    (0..n)
        .map(|i| {
            let q = bf.layout.subarray_of(i);
            Complex64::from_polar(scale, ps[i] - 2.0 * PI * f_hz * tau[q])
        })
        .collect()
}

/// Column `l` of `W₁W₂,ₘ`. Unit norm.
pub fn analog_response(bf: &AnalogBeamformer, m: usize, l: usize) -> Vec<Complex64> {
    analog_response_at(bf, bf.grid.freq_hz(m), l)
}

/// |aₘ(target)ᴴ wₗ,ₘ| for every subcarrier.
pub fn band_gains(
    bf: &AnalogBeamformer,
    geometry: &ArrayGeometry,
    target: &PolarPoint,
    l: usize,
    model: DistanceModel,
) -> Vec<f64> {
    (0..bf.grid.len())
        .map(|m| {
            let a = response_at_wavenumber(geometry, bf.grid.wavenumber(m), target, model);
            let w = analog_response(bf, m, l);
            a.iter().zip(&w).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
        })
        .collect()
}

/// Smallest gain over the band.
pub fn band_min_gain(
    bf: &AnalogBeamformer,
    geometry: &ArrayGeometry,
    target: &PolarPoint,
    l: usize,
    model: DistanceModel,
) -> f64 {
    band_gains(bf, geometry, target, l, model).into_iter().fold(f64::INFINITY, f64::min)
}

/// Fresnel distance from the target to sub-array phase centre `θ_q`.
fn phase_center_distance(radius: f64, target: &PolarPoint, theta: f64) -> f64 {
    let c = (target.phi_rad() - theta).cos();
    let r = target.r_m();
    r - radius * c + radius * radius / (2.0 * r) * (1.0 - c * c)
}

/// PS phases that, combined with `delays`, reproduce the carrier matched
/// filter: `−k_c·dₙ + k_c·c·τ_q(n)`.
pub(crate) fn compensating_phases(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    layout: &SubarrayLayout,
    target: &PolarPoint,
    delays: &[f64],
) -> Vec<f64> {
    let kc = grid.center_wavenumber();
    (0..geometry.n_antennas())
        .map(|n| {
            let q = layout.subarray_of(n);
            (-kc * taylor2_distance(geometry, target, n) + kc * SPEED_OF_LIGHT * delays[q]).rem_euclid(2.0 * PI)
        })
        .collect()
}

fn validate_targets(scenario: &Scenario, targets: &[PolarPoint]) -> Result<()> {
    if targets.len() != scenario.n_rf_chains() {
        return Err(Error::invalid(format!(
            "{} targets given for {} RF chains",
            targets.len(),
            scenario.n_rf_chains()
        )));
    }
    let radius = scenario.geometry().max_element_radius();
    for (i, t) in targets.iter().enumerate() {
        if t.r_m() <= radius {
            return Err(Error::invalid(format!(
                "target {i} at r = {} m is not outside the array radius {radius} m",
                t.r_m()
            )));
        }
    }
    Ok(())
}

/// Per-chain TTD delays from the sub-array phase centres, shifted so each
/// chain starts at zero. Returns `(delays, offsets)`.
fn raw_delays(scenario: &Scenario, layout: &SubarrayLayout, targets: &[PolarPoint]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let radius = scenario.geometry().radius_m();
    let mut delays = Vec::with_capacity(targets.len());
    let mut offsets = Vec::with_capacity(targets.len());
    for t in targets {
        let tau: Vec<f64> = layout
            .theta_q
            .iter()
            .map(|&th| phase_center_distance(radius, t, th) / SPEED_OF_LIGHT)
            .collect();
        let min = tau.iter().cloned().fold(f64::INFINITY, f64::min);
        delays.push(tau.iter().map(|x| x - min).collect());
        offsets.push(min);
    }
    (delays, offsets)
}

/// The analytical design. Delays are not limited to `τ_max`; the result is
/// flagged when a span exceeds it.
pub fn design_analytical(scenario: &Scenario, targets: &[PolarPoint]) -> Result<AnalogBeamformer> {
    validate_targets(scenario, targets)?;
    let layout = SubarrayLayout::for_scenario(scenario)?;
    let (delays, offsets) = raw_delays(scenario, &layout, targets);
    let geometry = scenario.geometry();
    let grid = scenario.grid();
    let ps = targets
        .iter()
        .zip(&delays)
        .map(|(t, d)| compensating_phases(geometry, grid, &layout, t, d))
        .collect();
    let tau_max = scenario.tau_max_s();
    let exceeds = delays.iter().flatten().any(|&d| d > tau_max);
    Ok(AnalogBeamformer {
        scheme: "analytical".into(),
        layout,
        grid: grid.clone(),
        geometry_digest: geometry.digest(),
        targets: targets.to_vec(),
        ps_phases_rad: ps,
        delays_s: delays,
        delay_offsets_s: offsets,
        tau_max_s: tau_max,
        exceeds_tau_max: exceeds,
    })
}

/// The analytical design made feasible: delays clipped into `[0, τ_max]`,
/// then PS phases recomputed so the carrier response is still matched.
pub fn design_analytical_clipped(scenario: &Scenario, targets: &[PolarPoint]) -> Result<AnalogBeamformer> {
    let mut bf = design_analytical(scenario, targets)?;
    clip_delays(&mut bf, scenario);
    Ok(bf)
}

pub(crate) fn clip_delays(bf: &mut AnalogBeamformer, scenario: &Scenario) {
    let tau_max = scenario.tau_max_s();
    for (l, t) in bf.targets.clone().iter().enumerate() {
        for d in bf.delays_s[l].iter_mut() {
            *d = d.clamp(0.0, tau_max);
        }
        bf.ps_phases_rad[l] =
            compensating_phases(scenario.geometry(), scenario.grid(), &bf.layout, t, &bf.delays_s[l]);
    }
    bf.exceeds_tau_max = false;
}

/// Gain predicted by averaging J₀ over one sub-array:
/// `(1/P)·Σⱼ J₀(Rⱼ)`, `Rⱼ = √2(k_c−kₘ)R(1−R/4r)·√(1 − cos(2πj/N − ϑ/Q))`,
/// with `ϑ = π − π/P`.
pub fn gain_lemma3(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    layout: &SubarrayLayout,
    target: &PolarPoint,
    m: usize,
) -> f64 {
    let n = geometry.n_antennas() as f64;
    let p = layout.p_per_subarray;
    let q = layout.q_subarrays as f64;
    let radius = geometry.radius_m();
    let dk = grid.center_wavenumber() - grid.wavenumber(m);
    let scale = 2f64.sqrt() * dk * radius * (1.0 - radius / (4.0 * target.r_m()));
    let vartheta = PI - PI / p as f64;
    let sum: f64 = (0..p)
        .map(|j| {
            let arg = 2.0 * PI * j as f64 / n - vartheta / q;
            bessel_j(0, scale * (1.0 - arg.cos()).max(0.0).sqrt())
        })
        .sum();
    sum / p as f64
}

/// `ε = (π/Q)(k_c − kₘ)R(1 − R/4r)`.
pub fn squint_epsilon(geometry: &ArrayGeometry, grid: &SubcarrierGrid, q: usize, target: &PolarPoint, m: usize) -> f64 {
    let radius = geometry.radius_m();
    let dk = grid.center_wavenumber() - grid.wavenumber(m);
    (PI / q as f64) * dk.abs() * radius * (1.0 - radius / (4.0 * target.r_m()))
}

/// Continuous-sub-array gain prediction ₁F₂(1/2; 1, 3/2; −ε²/4).
pub fn predicted_gain_integral(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    q: usize,
    target: &PolarPoint,
    m: usize,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::invalid("Q must be >= 1"));
    }
    Ok(hyp1f2_gain(squint_epsilon(geometry, grid, q, target, m)).value)
}
