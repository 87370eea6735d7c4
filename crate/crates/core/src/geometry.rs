//! Array geometries, the OFDM subcarrier grid and user scenarios.
//!
//! Everything here is immutable once built. Angles are radians throughout;
//! degree conversion happens only when reading user-facing configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Uca,
    Ula,
}

/// Antenna array in the user plane.
///
/// A UCA places `n_antennas` elements on a circle of radius `radius_m` at
/// angles `2πn/N`. A ULA places them on the x-axis, centred on the origin,
/// with pitch `spacing_m`; it exists as a comparison baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    kind: ArrayKind,
    n_antennas: usize,
    radius_m: f64,
    spacing_m: f64,
    element_angles: Vec<f64>,
}

impl ArrayGeometry {
    pub fn uca(n_antennas: usize, radius_m: f64) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::invalid("UCA needs at least one antenna"));
        }
        if !(radius_m.is_finite() && radius_m >= 0.0) {
            return Err(Error::invalid(format!("UCA radius must be finite and >= 0, got {radius_m}")));
        }
        let element_angles = (0..n_antennas)
            .map(|n| TWO_PI * n as f64 / n_antennas as f64)
            .collect();
        Ok(Self {
            kind: ArrayKind::Uca,
            n_antennas,
            radius_m,
            spacing_m: 0.0,
            element_angles,
        })
    }

    pub fn ula(n_antennas: usize, spacing_m: f64) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::invalid("ULA needs at least one antenna"));
        }
        if !(spacing_m.is_finite() && spacing_m > 0.0) {
            return Err(Error::invalid(format!("ULA spacing must be finite and > 0, got {spacing_m}")));
        }
        Ok(Self {
            kind: ArrayKind::Ula,
            n_antennas,
            radius_m: 0.0,
            spacing_m,
            element_angles: Vec::new(),
        })
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    /// UCA radius; zero for a ULA.
    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    /// ULA pitch; zero for a UCA.
    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    /// Element angles ψₙ of a UCA. Empty for a ULA.
    pub fn element_angles(&self) -> &[f64] {
        &self.element_angles
    }

    /// Polar coordinates `(ρ, ψ)` of element `n`.
    ///
    /// For a ULA the element at signed offset x sits at `(|x|, 0)` or
    /// `(|x|, π)`, which lets every distance formula share the UCA form.
    pub fn element_polar(&self, n: usize) -> (f64, f64) {
        match self.kind {
            ArrayKind::Uca => (self.radius_m, self.element_angles[n]),
            ArrayKind::Ula => {
                let x = self.ula_offset(n);
                if x >= 0.0 {
                    (x, 0.0)
                } else {
                    (-x, PI)
                }
            }
        }
    }

    /// Signed position of ULA element `n` along the x-axis.
    pub fn ula_offset(&self, n: usize) -> f64 {
        (n as f64 - (self.n_antennas as f64 - 1.0) / 2.0) * self.spacing_m
    }

    /// Largest element-to-element extent: `2R` for a UCA, `(N−1)d` for a ULA.
    pub fn aperture_m(&self) -> f64 {
        match self.kind {
            ArrayKind::Uca => 2.0 * self.radius_m,
            ArrayKind::Ula => (self.n_antennas as f64 - 1.0) * self.spacing_m,
        }
    }

    /// Largest distance of any element from the origin.
    pub fn max_element_radius(&self) -> f64 {
        match self.kind {
            ArrayKind::Uca => self.radius_m,
            ArrayKind::Ula => self.aperture_m() / 2.0,
        }
    }

    /// Short stable description used in output sidecars.
    pub fn digest(&self) -> String {
        match self.kind {
            ArrayKind::Uca => format!("uca:n={}:radius_m={:.9e}", self.n_antennas, self.radius_m),
            ArrayKind::Ula => format!("ula:n={}:spacing_m={:.9e}", self.n_antennas, self.spacing_m),
        }
    }
}

/// UCA whose circumference is `N·λc/2`, i.e. `R = N·λc/(4π)`.
pub fn make_uca_half_wavelength(n_antennas: usize, fc_hz: f64) -> Result<ArrayGeometry> {
    if n_antennas < 2 {
        return Err(Error::invalid(format!("n_antennas must be >= 2, got {n_antennas}")));
    }
    if !(fc_hz.is_finite() && fc_hz > 0.0) {
        return Err(Error::invalid(format!("fc_hz must be > 0, got {fc_hz}")));
    }
    let lambda = SPEED_OF_LIGHT / fc_hz;
    ArrayGeometry::uca(n_antennas, n_antennas as f64 * lambda / (4.0 * PI))
}

/// ULA with `d = λc/2`.
pub fn make_ula_half_wavelength(n_antennas: usize, fc_hz: f64) -> Result<ArrayGeometry> {
    if n_antennas < 2 {
        return Err(Error::invalid(format!("n_antennas must be >= 2, got {n_antennas}")));
    }
    if !(fc_hz.is_finite() && fc_hz > 0.0) {
        return Err(Error::invalid(format!("fc_hz must be > 0, got {fc_hz}")));
    }
    ArrayGeometry::ula(n_antennas, SPEED_OF_LIGHT / fc_hz / 2.0)
}

/// `2D²/λc` with `D` the array aperture.
pub fn rayleigh_distance(geometry: &ArrayGeometry, fc_hz: f64) -> f64 {
    let d = geometry.aperture_m();
    2.0 * d * d * fc_hz / SPEED_OF_LIGHT
}

/// Equally spaced OFDM subcarriers spanning `[fc − B/2, fc + B/2]`, band
/// edges included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierGrid {
    fc_hz: f64,
    bandwidth_hz: f64,
    freqs_hz: Vec<f64>,
    wavenumbers: Vec<f64>,
}

impl SubcarrierGrid {
    pub fn fc_hz(&self) -> f64 {
        self.fc_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn freq_hz(&self, m: usize) -> f64 {
        self.freqs_hz[m]
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn wavenumber(&self, m: usize) -> f64 {
        self.wavenumbers[m]
    }

    pub fn center_wavenumber(&self) -> f64 {
        TWO_PI * self.fc_hz / SPEED_OF_LIGHT
    }

    pub fn wavelength(&self, m: usize) -> f64 {
        SPEED_OF_LIGHT / self.freqs_hz[m]
    }

    pub fn center_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc_hz
    }

    /// Index of the subcarrier farthest from the carrier (lowest on ties).
    pub fn band_edge_index(&self) -> usize {
        let mut best = 0;
        for (m, f) in self.freqs_hz.iter().enumerate() {
            if (f - self.fc_hz).abs() > (self.freqs_hz[best] - self.fc_hz).abs() + 1e-6 {
                best = m;
            }
        }
        best
    }

    pub fn digest(&self) -> String {
        format!(
            "fc_hz={:.9e}:bandwidth_hz={:.9e}:m={}",
            self.fc_hz,
            self.bandwidth_hz,
            self.freqs_hz.len()
        )
    }
}

/// `fₘ = fc − B/2 + (m−1)·B/(M−1)` for `m = 1..M`; `M = 1` yields `[fc]`.
pub fn make_grid(fc_hz: f64, bandwidth_hz: f64, m: usize) -> Result<SubcarrierGrid> {
    if m == 0 {
        return Err(Error::invalid("subcarrier count must be >= 1"));
    }
    if !(bandwidth_hz.is_finite() && bandwidth_hz >= 0.0) {
        return Err(Error::invalid(format!("bandwidth_hz must be >= 0, got {bandwidth_hz}")));
    }
    if !(fc_hz.is_finite() && fc_hz > bandwidth_hz / 2.0) {
        return Err(Error::invalid(format!(
            "fc_hz must exceed half the bandwidth ({fc_hz} <= {})",
            bandwidth_hz / 2.0
        )));
    }
    let freqs_hz: Vec<f64> = if m == 1 {
        vec![fc_hz]
    } else {
        let step = bandwidth_hz / (m as f64 - 1.0);
        // Offsets are built symmetrically so the grid mean is exactly fc.
        (0..m)
            .map(|i| {
                let j = m - 1 - i;
                fc_hz + (i as f64 - j as f64) * step / 2.0
            })
            .collect()
    };
    let wavenumbers = freqs_hz.iter().map(|f| TWO_PI * f / SPEED_OF_LIGHT).collect();
    Ok(SubcarrierGrid {
        fc_hz,
        bandwidth_hz,
        freqs_hz,
        wavenumbers,
    })
}

/// A point in the array plane: distance from the array centre and azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    r_m: f64,
    phi_rad: f64,
}

impl PolarPoint {
    /// Builds a point, wrapping the angle into `[0, 2π)`.
    pub fn new(r_m: f64, phi_rad: f64) -> Result<Self> {
        if !(r_m.is_finite() && r_m >= 0.0) {
            return Err(Error::invalid(format!("distance must be finite and >= 0, got {r_m}")));
        }
        if !phi_rad.is_finite() {
            return Err(Error::invalid("angle must be finite"));
        }
        Ok(Self {
            r_m,
            phi_rad: wrap_angle(phi_rad),
        })
    }

    pub fn from_degrees(r_m: f64, phi_deg: f64) -> Result<Self> {
        Self::new(r_m, phi_deg.to_radians())
    }

    pub fn r_m(&self) -> f64 {
        self.r_m
    }

    pub fn phi_rad(&self) -> f64 {
        self.phi_rad
    }

    pub fn to_cartesian(&self) -> (f64, f64) {
        (self.r_m * self.phi_rad.cos(), self.r_m * self.phi_rad.sin())
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// A complete, validated simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    geometry: ArrayGeometry,
    grid: SubcarrierGrid,
    users: Vec<PolarPoint>,
    n_rf_chains: usize,
    n_ttd_per_chain: usize,
    snr_db: f64,
    tau_max_s: f64,
    realizations: usize,
}

/// Unvalidated scenario fields. [`ScenarioParts::build`] checks every
/// invariant and names the offending field on failure.
#[derive(Debug, Clone)]
pub struct ScenarioParts {
    pub geometry: ArrayGeometry,
    pub grid: SubcarrierGrid,
    pub users: Vec<PolarPoint>,
    pub n_rf_chains: usize,
    pub n_ttd_per_chain: usize,
    pub snr_db: f64,
    pub tau_max_s: f64,
    pub realizations: usize,
}

impl ScenarioParts {
    pub fn build(self) -> Result<Scenario> {
        let n = self.geometry.n_antennas();
        if self.n_ttd_per_chain == 0 {
            return Err(Error::field("n_ttd_per_chain", "must be >= 1"));
        }
        if !n.is_multiple_of(self.n_ttd_per_chain) {
            return Err(Error::field(
                "n_ttd_per_chain",
                format!("{n} antennas are not divisible into {} sub-arrays", self.n_ttd_per_chain),
            ));
        }
        if self.n_rf_chains == 0 || self.n_rf_chains > n {
            return Err(Error::field(
                "n_rf_chains",
                format!("must be in 1..={n}, got {}", self.n_rf_chains),
            ));
        }
        if !self.users.is_empty() && self.users.len() != self.n_rf_chains {
            return Err(Error::field(
                "users",
                format!(
                    "{} users given but n_rf_chains = {}",
                    self.users.len(),
                    self.n_rf_chains
                ),
            ));
        }
        let r_min = self.geometry.max_element_radius();
        for (i, u) in self.users.iter().enumerate() {
            if u.r_m() <= r_min {
                return Err(Error::field(
                    format!("users[{i}].r_m"),
                    format!("distance {} m must exceed the array radius {r_min} m", u.r_m()),
                ));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::field("snr_db", "must be finite"));
        }
        if !(self.tau_max_s.is_finite() && self.tau_max_s >= 0.0) {
            return Err(Error::field("tau_max_s", "must be finite and >= 0"));
        }
        if self.realizations == 0 {
            return Err(Error::field("realizations", "must be >= 1"));
        }
        Ok(Scenario {
            geometry: self.geometry,
            grid: self.grid,
            users: self.users,
            n_rf_chains: self.n_rf_chains,
            n_ttd_per_chain: self.n_ttd_per_chain,
            snr_db: self.snr_db,
            tau_max_s: self.tau_max_s,
            realizations: self.realizations,
        })
    }
}

impl Scenario {
    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &SubcarrierGrid {
        &self.grid
    }

    pub fn users(&self) -> &[PolarPoint] {
        &self.users
    }

    pub fn n_rf_chains(&self) -> usize {
        self.n_rf_chains
    }

    /// Number of TTD units `Q` per RF chain.
    pub fn n_ttd_per_chain(&self) -> usize {
        self.n_ttd_per_chain
    }

    /// Antennas per sub-array, `P = N/Q`.
    pub fn subarray_size(&self) -> usize {
        self.geometry.n_antennas() / self.n_ttd_per_chain
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn tau_max_s(&self) -> f64 {
        self.tau_max_s
    }

    pub fn realizations(&self) -> usize {
        self.realizations
    }

    pub fn to_parts(&self) -> ScenarioParts {
        ScenarioParts {
            geometry: self.geometry.clone(),
            grid: self.grid.clone(),
            users: self.users.clone(),
            n_rf_chains: self.n_rf_chains,
            n_ttd_per_chain: self.n_ttd_per_chain,
            snr_db: self.snr_db,
            tau_max_s: self.tau_max_s,
            realizations: self.realizations,
        }
    }

    /// Copy of this scenario with a different user set.
    pub fn with_users(&self, users: Vec<PolarPoint>) -> Result<Scenario> {
        let mut parts = self.to_parts();
        parts.users = users;
        parts.build()
    }

    /// Copy of this scenario on another array, e.g. the ULA baseline.
    pub fn with_geometry(&self, geometry: ArrayGeometry) -> Result<Scenario> {
        let mut parts = self.to_parts();
        parts.geometry = geometry;
        parts.build()
    }
}
