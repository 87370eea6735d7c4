//! Beam squint of a phase-shifter-only beamformer: exact gains, the Bessel
//! closed forms and sampled gain profiles.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::channel::{model_distance, DistanceModel};
use crate::error::{Error, Result};
use crate::geometry::{rayleigh_distance, ArrayGeometry, ArrayKind, PolarPoint, Scenario, SubcarrierGrid};
use crate::specfun::bessel_j;

pub const DEFAULT_ANGLE_SAMPLES: usize = 721;
pub const DEFAULT_DISTANCE_SAMPLES: usize = 200;

/// |bₘ(probe)ᴴ b_c(focal)|, where the PS weights are matched to `focal` at the
/// carrier and `probe` is observed on subcarrier `m`.
pub fn gain_exact(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    probe: &PolarPoint,
    focal: &PolarPoint,
    m: usize,
) -> f64 {
    gain_with_model(geometry, grid.wavenumber(m), grid.center_wavenumber(), probe, focal, DistanceModel::Exact)
}

/// Same inner product with an arbitrary distance model and explicit wavenumbers.
pub fn gain_with_model(
    geometry: &ArrayGeometry,
    k_probe: f64,
    k_focal: f64,
    probe: &PolarPoint,
    focal: &PolarPoint,
    model: DistanceModel,
) -> f64 {
    let n = geometry.n_antennas();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let s1 = model_distance(geometry, probe, i, model) - probe.r_m();
        let s2 = model_distance(geometry, focal, i, model) - focal.r_m();
        acc += Complex64::from_polar(1.0, k_probe * s1 - k_focal * s2);
    }
    acc.norm() / n as f64
}

/// Angular-domain closed form |J₀(η)|, η = R√(k_c² + kₘ² − 2k_c kₘ cos(φ₁−φ₂)).
/// Valid for a UCA at equal probe and focal distance.
pub fn gain_angular_closed_form(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    phi1: f64,
    phi2: f64,
    m: usize,
) -> f64 {
    let kc = grid.center_wavenumber();
    let km = grid.wavenumber(m);
    let half = ((phi1 - phi2) / 2.0).sin();
    let s = (kc - km).powi(2) + 4.0 * kc * km * half * half;
    bessel_j(0, geometry.radius_m() * s.sqrt()).abs()
}

/// Distance-domain closed form |J₀(R(k_c − kₘ) + ϖ)| with
/// ϖ = R²(k_c/4r₂ − kₘ/4r₁). Valid for a UCA at a common angle.
pub fn gain_distance_closed_form(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    r1: f64,
    r2: f64,
    m: usize,
) -> f64 {
    let kc = grid.center_wavenumber();
    let km = grid.wavenumber(m);
    let radius = geometry.radius_m();
    let varpi = radius * radius * (kc / (4.0 * r2) - km / (4.0 * r1));
    bessel_j(0, radius * (kc - km) + varpi).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainAxis {
    /// Sweep the probe azimuth at the focal distance. Coordinates in radians.
    Angle,
    /// Sweep the probe distance at the focal azimuth. Coordinates in metres.
    Distance,
}

impl GainAxis {
    pub fn unit(self) -> &'static str {
        match self {
            GainAxis::Angle => "rad",
            GainAxis::Distance => "m",
        }
    }
}

/// Per-subcarrier gain of a fixed PS beamformer sampled along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainProfile {
    pub axis: GainAxis,
    pub focal: PolarPoint,
    pub grid: SubcarrierGrid,
    pub geometry_digest: String,
    pub coordinates: Vec<f64>,
    /// `gains[s][m]`: sample `s`, subcarrier `m`.
    pub gains: Vec<Vec<f64>>,
}

impl GainProfile {
    /// Gain of subcarrier `m` at every sample.
    pub fn column(&self, m: usize) -> Vec<f64> {
        self.gains.iter().map(|g| g[m]).collect()
    }

    /// Largest gain of subcarrier `m` and the coordinate where it occurs.
    pub fn peak(&self, m: usize) -> (f64, f64) {
        let mut best = (self.coordinates[0], self.gains[0][m]);
        for (c, g) in self.coordinates.iter().zip(&self.gains) {
            if g[m] > best.1 {
                best = (*c, g[m]);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("coordinate");
        for m in 1..=self.grid.len() {
            header.push_str(&format!(",f_{m}"));
        }
        writeln!(w, "{header}")?;
        for (c, g) in self.coordinates.iter().zip(&self.gains) {
            let mut line = format!("{c:.12e}");
            for v in g {
                line.push_str(&format!(",{v:.12e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "axis": self.axis,
            "unit": self.axis.unit(),
            "focal": { "r_m": self.focal.r_m(), "phi_rad": self.focal.phi_rad() },
            "grid": {
                "fc_hz": self.grid.fc_hz(),
                "bandwidth_hz": self.grid.bandwidth_hz(),
                "freqs_hz": self.grid.freqs_hz(),
            },
            "geometry": self.geometry_digest,
            "n_samples": self.coordinates.len(),
        })
    }
}

/// Default sweep for `axis`: ±90° around the focal azimuth, or
/// `[1 m, 2·d_r]` in distance.
pub fn default_range(scenario: &Scenario, focal: &PolarPoint, axis: GainAxis) -> (f64, f64) {
    match axis {
        GainAxis::Angle => (focal.phi_rad() - FRAC_PI_2, focal.phi_rad() + FRAC_PI_2),
        GainAxis::Distance => {
            let dr = rayleigh_distance(scenario.geometry(), scenario.grid().fc_hz());
            (1.0, 2.0 * dr)
        }
    }
}

pub fn default_samples(axis: GainAxis) -> usize {
    match axis {
        GainAxis::Angle => DEFAULT_ANGLE_SAMPLES,
        GainAxis::Distance => DEFAULT_DISTANCE_SAMPLES,
    }
}

/// Exact gains of the PS-only beamformer focused on `focal` at the carrier.
///
/// Angle samples are linear over `range` (radians, absolute azimuth);
/// distance samples are log-spaced over `range` (metres). A ULA uses the
/// Fresnel distance model, a UCA the exact one.
pub fn squint_profile(
    scenario: &Scenario,
    focal: &PolarPoint,
    axis: GainAxis,
    range: (f64, f64),
    n_samples: usize,
) -> Result<GainProfile> {
    if n_samples < 2 {
        return Err(Error::invalid(format!("n_samples must be >= 2, got {n_samples}")));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::invalid(format!("sample range must be finite and increasing, got ({lo}, {hi})")));
    }
    if axis == GainAxis::Distance && lo <= 0.0 {
        return Err(Error::invalid("distance range must be positive"));
    }
    if focal.r_m() <= 0.0 {
        return Err(Error::invalid("focal point needs r > 0"));
    }
    let geometry = scenario.geometry();
    let grid = scenario.grid();
    let model = match geometry.kind() {
        ArrayKind::Uca => DistanceModel::Exact,
        ArrayKind::Ula => DistanceModel::Taylor2,
    };
    let step = 1.0 / (n_samples - 1) as f64;
    let coordinates: Vec<f64> = (0..n_samples)
        .map(|i| {
            let t = i as f64 * step;
            match axis {
                GainAxis::Angle => lo + t * (hi - lo),
                GainAxis::Distance => lo * (hi / lo).powf(t),
            }
        })
        .collect();
    let kc = grid.center_wavenumber();
    let gains = coordinates
        .par_iter()
        .map(|&c| {
            let probe = match axis {
                GainAxis::Angle => PolarPoint::new(focal.r_m(), c),
                GainAxis::Distance => PolarPoint::new(c, focal.phi_rad()),
            }?;
            Ok((0..grid.len())
                .map(|m| gain_with_model(geometry, grid.wavenumber(m), kc, &probe, focal, model))
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(GainProfile {
        axis,
        focal: *focal,
        grid: grid.clone(),
        geometry_digest: geometry.digest(),
        coordinates,
        gains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, make_uca_half_wavelength};

    #[test]
    fn matched_filter_at_carrier() {
        let g = make_uca_half_wavelength(64, 28e9).unwrap();
        let grid = make_grid(28e9, 3e9, 5).unwrap();
        let p = PolarPoint::new(3.0, 0.7).unwrap();
        assert!((gain_exact(&g, &grid, &p, &p, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angular_closed_form_collapses_on_axis() {
        let g = make_uca_half_wavelength(64, 28e9).unwrap();
        let grid = make_grid(28e9, 3e9, 5).unwrap();
        assert!((gain_angular_closed_form(&g, &grid, 0.3, 0.3, 2) - 1.0).abs() < 1e-15);
        let eta = g.radius_m() * (grid.center_wavenumber() - grid.wavenumber(0)).abs();
        assert!((gain_angular_closed_form(&g, &grid, 0.3, 0.3, 0) - bessel_j(0, eta).abs()).abs() < 1e-15);
    }

    #[test]
    fn distance_closed_form_collapses() {
        let g = make_uca_half_wavelength(64, 28e9).unwrap();
        let grid = make_grid(28e9, 3e9, 5).unwrap();
        assert!((gain_distance_closed_form(&g, &grid, 4.0, 4.0, 2) - 1.0).abs() < 1e-15);
        let kc = grid.center_wavenumber();
        let r = g.radius_m();
        let want = bessel_j(0, r * r * kc * (1.0 / 12.0 - 1.0 / 8.0)).abs();
        assert!((gain_distance_closed_form(&g, &grid, 2.0, 3.0, 2) - want).abs() < 1e-15);
    }
}
