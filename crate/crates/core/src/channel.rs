//! Near-field line-of-sight channels and array response vectors.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, PolarPoint, Scenario, SubcarrierGrid};

/// How the element-to-user distance enters the phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceModel {
    /// Exact Euclidean distance.
    Exact,
    /// Second-order (Fresnel) expansion `r − ρcos(φ−ψ) + ρ²/(2r)·(1 − cos²(φ−ψ))`.
    Taylor2,
    /// First-order expansion `r − ρcos(φ−ψ)`.
    FarField,
}

/// Whether the free-space amplitude uses the common distance `r` or each
/// element's own distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGainMode {
    #[default]
    Common,
    PerElement,
}

pub fn exact_distance(geometry: &ArrayGeometry, p: &PolarPoint, n: usize) -> f64 {
    let (rho, psi) = geometry.element_polar(n);
    let r = p.r_m();
    let d2 = r * r + rho * rho - 2.0 * r * rho * (p.phi_rad() - psi).cos();
    d2.max(0.0).sqrt()
}

pub fn taylor2_distance(geometry: &ArrayGeometry, p: &PolarPoint, n: usize) -> f64 {
    p.r_m() + taylor2_offset(geometry, p, n)
}

/// `ς⁽ⁿ⁾`: the Fresnel distance minus `r`.
pub fn taylor2_offset(geometry: &ArrayGeometry, p: &PolarPoint, n: usize) -> f64 {
    let (rho, psi) = geometry.element_polar(n);
    let c = (p.phi_rad() - psi).cos();
    -rho * c + rho * rho / (2.0 * p.r_m()) * (1.0 - c * c)
}

pub fn far_field_distance(geometry: &ArrayGeometry, p: &PolarPoint, n: usize) -> f64 {
    let (rho, psi) = geometry.element_polar(n);
    p.r_m() - rho * (p.phi_rad() - psi).cos()
}

pub fn model_distance(geometry: &ArrayGeometry, p: &PolarPoint, n: usize, model: DistanceModel) -> f64 {
    match model {
        DistanceModel::Exact => exact_distance(geometry, p, n),
        DistanceModel::Taylor2 => taylor2_distance(geometry, p, n),
        DistanceModel::FarField => far_field_distance(geometry, p, n),
    }
}

/// Array response `a(r, φ)` at wavenumber `k`: `(1/√N)·exp(−j·k·dₙ)`.
pub fn response_at_wavenumber(
    geometry: &ArrayGeometry,
    k: f64,
    p: &PolarPoint,
    model: DistanceModel,
) -> Vec<Complex64> {
    let n_ant = geometry.n_antennas();
    let scale = 1.0 / (n_ant as f64).sqrt();
    (0..n_ant)
        .map(|n| Complex64::from_polar(scale, -k * model_distance(geometry, p, n, model)))
        .collect()
}

/// Array response vector `aₘ(r, φ)` on subcarrier `m`. Unit norm.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    p: &PolarPoint,
    m: usize,
    model: DistanceModel,
) -> Result<Vec<Complex64>> {
    if p.r_m() <= 0.0 {
        return Err(Error::invalid("steering vector needs a point with r > 0"));
    }
    if m >= grid.len() {
        return Err(Error::invalid(format!("subcarrier {m} out of range 0..{}", grid.len())));
    }
    Ok(response_at_wavenumber(geometry, grid.wavenumber(m), p, model))
}

/// Beamfocusing vector `b` at wavenumber `k`, i.e. `a` with the common
/// phase `exp(−j·k·r)` removed.
pub fn focusing_at_wavenumber(geometry: &ArrayGeometry, k: f64, p: &PolarPoint) -> Vec<Complex64> {
    let n_ant = geometry.n_antennas();
    let scale = 1.0 / (n_ant as f64).sqrt();
    (0..n_ant)
        .map(|n| Complex64::from_polar(scale, -k * taylor2_offset(geometry, p, n)))
        .collect()
}

/// `bₘ(r, φ)` on subcarrier `m`.
pub fn focusing_vector_b(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    p: &PolarPoint,
    m: usize,
) -> Result<Vec<Complex64>> {
    if p.r_m() <= 0.0 {
        return Err(Error::invalid("focusing vector needs a point with r > 0"));
    }
    if m >= grid.len() {
        return Err(Error::invalid(format!("subcarrier {m} out of range 0..{}", grid.len())));
    }
    Ok(focusing_at_wavenumber(geometry, grid.wavenumber(m), p))
}

/// Per-subcarrier channels for `K` users over `N` antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    geometry: ArrayGeometry,
    grid: SubcarrierGrid,
    n_users: usize,
    // m-major, then user, then antenna
    h: Vec<Complex64>,
    path_gain: Vec<f64>,
}

impl ChannelSet {
    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &SubcarrierGrid {
        &self.grid
    }

    pub fn n_subcarriers(&self) -> usize {
        self.grid.len()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_antennas(&self) -> usize {
        self.geometry.n_antennas()
    }

    /// Channel vector of user `k` on subcarrier `m`.
    pub fn user(&self, m: usize, k: usize) -> &[Complex64] {
        let n = self.n_antennas();
        let start = (m * self.n_users + k) * n;
        &self.h[start..start + n]
    }

    /// Common amplitude `λₘ/(4π rₖ)`.
    pub fn path_gain(&self, m: usize, k: usize) -> f64 {
        self.path_gain[m * self.n_users + k]
    }

    /// Copy in which every `(m, k)` vector is rescaled to norm `target`.
    pub fn normalized(&self, target: f64) -> ChannelSet {
        let mut out = self.clone();
        let n = self.n_antennas();
        for chunk in out.h.chunks_mut(n) {
            let norm = chunk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                let s = target / norm;
                chunk.iter_mut().for_each(|z| *z *= s);
            }
        }
        out
    }

    /// Columnar dump `m,k,n,re,im` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "m,k,n,re,im")?;
        for m in 0..self.n_subcarriers() {
            for k in 0..self.n_users {
                for (n, z) in self.user(m, k).iter().enumerate() {
                    writeln!(w, "{m},{k},{n},{:e},{:e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }

    /// JSON header describing the grid and geometry of [`Self::write_csv`].
    pub fn header_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_subcarriers": self.n_subcarriers(),
            "n_users": self.n_users,
            "n_antennas": self.n_antennas(),
            "grid": self.grid,
            "geometry": self.geometry,
            "columns": ["m", "k", "n", "re", "im"],
        })
    }
}

/// Builds `h[m,k,n] = g·exp(−j·kₘ·dₙ)` for the scenario's users.
pub fn build_channel(scenario: &Scenario, model: DistanceModel) -> Result<ChannelSet> {
    build_channel_for(
        scenario.geometry(),
        scenario.grid(),
        scenario.users(),
        model,
        PathGainMode::Common,
    )
}

pub fn build_channel_for(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    users: &[PolarPoint],
    model: DistanceModel,
    gain_mode: PathGainMode,
) -> Result<ChannelSet> {
    if users.iter().any(|u| u.r_m() <= 0.0) {
        return Err(Error::invalid("channel users need r > 0"));
    }
    let n_ant = geometry.n_antennas();
    let mut h = Vec::with_capacity(grid.len() * users.len() * n_ant);
    let mut path_gain = Vec::with_capacity(grid.len() * users.len());
    for m in 0..grid.len() {
        let k_m = grid.wavenumber(m);
        let lambda = grid.wavelength(m);
        for u in users {
            let g = lambda / (4.0 * std::f64::consts::PI * u.r_m());
            path_gain.push(g);
            for n in 0..n_ant {
                let d = model_distance(geometry, u, n, model);
                let amp = match gain_mode {
                    PathGainMode::Common => g,
                    PathGainMode::PerElement => {
                        lambda / (4.0 * std::f64::consts::PI * exact_distance(geometry, u, n))
                    }
                };
                h.push(Complex64::from_polar(amp, -k_m * d));
            }
        }
    }
    Ok(ChannelSet {
        geometry: geometry.clone(),
        grid: grid.clone(),
        n_users: users.len(),
        h,
        path_gain,
    })
}
