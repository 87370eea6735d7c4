//! TOML run configuration.
//!
//! Keys carry their unit (`fc_hz`, `radius_m`, `tau_max_s`). Azimuths are
//! given in degrees (`phi_deg`) and converted to radians here; nothing past
//! this module sees degrees.
//!
//! ```toml
//! seed = 7
//! realizations = 200
//!
//! [array]
//! kind = "uca"
//! n_antennas = 256
//! half_wavelength = true   # or radius_m = 0.2181
//!
//! [band]
//! fc_hz = 28e9
//! bandwidth_hz = 3e9
//! n_subcarriers = 10
//!
//! [hybrid]
//! n_rf_chains = 4
//! n_ttd_per_chain = 16
//! tau_max_s = 20e-9
//!
//! [link]
//! snr_db = 15.0
//!
//! [[users]]
//! r_m = 5.0
//! phi_deg = 0.0
//! ```

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evalsim::{ChannelNormalization, ExperimentConfig, UserSampling};
use crate::geometry::{
    make_grid, make_uca_half_wavelength, make_ula_half_wavelength, ArrayGeometry, PolarPoint, Scenario, ScenarioParts,
};
use crate::jointopt::{JointInit, JointOptConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    realizations: Option<usize>,
    array: Option<RawArray>,
    band: Option<RawBand>,
    hybrid: Option<RawHybrid>,
    link: Option<RawLink>,
    users: Option<Vec<RawUser>>,
    user_sampling: Option<RawSampling>,
    joint: Option<RawJoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    kind: Option<String>,
    n_antennas: Option<usize>,
    radius_m: Option<f64>,
    spacing_m: Option<f64>,
    #[serde(default)]
    half_wavelength: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    fc_hz: Option<f64>,
    bandwidth_hz: Option<f64>,
    n_subcarriers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHybrid {
    n_rf_chains: Option<usize>,
    n_ttd_per_chain: Option<usize>,
    tau_max_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    snr_db: Option<f64>,
    sigma2: Option<f64>,
    normalization: Option<ChannelNormalization>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUser {
    r_m: Option<f64>,
    phi_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    r_min_m: Option<f64>,
    r_max_m: Option<f64>,
    min_separation_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    search_steps_x: Option<usize>,
    max_iters: Option<usize>,
    rel_tol: Option<f64>,
    init: Option<JointInit>,
    rng_seed: Option<u64>,
}

/// A validated configuration document.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub experiment: ExperimentConfig,
    /// SHA-256 over the canonical (key-sorted) JSON form of the document.
    pub digest: String,
    pub document: serde_json::Value,
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| Error::field(field, "is required"))
}

fn finite(value: f64, field: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::field(field, "must be finite"))
    }
}

fn at(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidArgument(reason) | Error::OutOfRange(reason) => Error::field(field, reason),
        other => other,
    }
}

/// Digest of a TOML document that ignores key order and formatting.
pub fn canonical_digest(document: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical.
    let text = serde_json::to_string(document).unwrap_or_default();
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let document = serde_json::to_value(&table).map_err(|e| Error::Parse(e.to_string()))?;
    let raw: RawConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::field("config", e.message().to_string()))?;
    let digest = canonical_digest(&document);
    let (scenario, experiment) = build(raw)?;
    Ok(RunConfig {
        scenario,
        experiment,
        digest,
        document,
    })
}

fn build(raw: RawConfig) -> Result<(Scenario, ExperimentConfig)> {
    let band = required(raw.band, "band")?;
    let fc = finite(required(band.fc_hz, "band.fc_hz")?, "band.fc_hz")?;
    if fc <= 0.0 {
        return Err(Error::field("band.fc_hz", "must be > 0"));
    }
    let bandwidth = finite(required(band.bandwidth_hz, "band.bandwidth_hz")?, "band.bandwidth_hz")?;
    let m = required(band.n_subcarriers, "band.n_subcarriers")?;
    if m == 0 {
        return Err(Error::field("band.n_subcarriers", "must be >= 1"));
    }
    let grid = make_grid(fc, bandwidth, m).map_err(at("band.bandwidth_hz"))?;

    let array = required(raw.array, "array")?;
    let n = required(array.n_antennas, "array.n_antennas")?;
    if n == 0 {
        return Err(Error::field("array.n_antennas", "must be >= 1"));
    }
    let kind = array.kind.as_deref().unwrap_or("uca").to_ascii_lowercase();
    let geometry: ArrayGeometry = match kind.as_str() {
        "uca" => {
            if array.spacing_m.is_some() {
                return Err(Error::field("array.spacing_m", "not used by a UCA; give radius_m"));
            }
            match (array.radius_m, array.half_wavelength) {
                (Some(_), true) => {
                    return Err(Error::field("array.radius_m", "conflicts with half_wavelength = true"))
                }
                (Some(r), false) => {
                    let r = finite(r, "array.radius_m")?;
                    if r <= 0.0 {
                        return Err(Error::field("array.radius_m", "must be > 0"));
                    }
                    ArrayGeometry::uca(n, r).map_err(at("array.radius_m"))?
                }
                (None, true) => make_uca_half_wavelength(n, fc).map_err(at("array.n_antennas"))?,
                (None, false) => {
                    return Err(Error::field(
                        "array.radius_m",
                        "is required for a UCA unless half_wavelength = true",
                    ))
                }
            }
        }
        "ula" => {
            if array.radius_m.is_some() {
                return Err(Error::field("array.radius_m", "not used by a ULA; give spacing_m"));
            }
            match (array.spacing_m, array.half_wavelength) {
                (Some(_), true) => {
                    return Err(Error::field("array.spacing_m", "conflicts with half_wavelength = true"))
                }
                (Some(d), false) => {
                    let d = finite(d, "array.spacing_m")?;
                    if d <= 0.0 {
                        return Err(Error::field("array.spacing_m", "must be > 0"));
                    }
                    ArrayGeometry::ula(n, d).map_err(at("array.spacing_m"))?
                }
                (None, true) => make_ula_half_wavelength(n, fc).map_err(at("array.n_antennas"))?,
                (None, false) => {
                    return Err(Error::field(
                        "array.spacing_m",
                        "is required for a ULA unless half_wavelength = true",
                    ))
                }
            }
        }
        other => return Err(Error::field("array.kind", format!("must be \"uca\" or \"ula\", got \"{other}\""))),
    };

    let users = raw
        .users
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            let r = finite(required(u.r_m, &format!("users[{i}].r_m"))?, &format!("users[{i}].r_m"))?;
            let phi = finite(required(u.phi_deg, &format!("users[{i}].phi_deg"))?, &format!("users[{i}].phi_deg"))?;
            if r <= 0.0 {
                return Err(Error::field(format!("users[{i}].r_m"), "must be > 0"));
            }
            PolarPoint::from_degrees(r, phi).map_err(at(&format!("users[{i}]")))
        })
        .collect::<Result<Vec<_>>>()?;

    let hybrid = raw.hybrid.unwrap_or_default();
    let n_rf_chains = hybrid
        .n_rf_chains
        .unwrap_or(if users.is_empty() { 4.min(n) } else { users.len() });
    let link = raw.link.unwrap_or_default();
    let snr_db = finite(link.snr_db.unwrap_or(15.0), "link.snr_db")?;
    let sigma2 = finite(link.sigma2.unwrap_or(1.0), "link.sigma2")?;
    if sigma2 <= 0.0 {
        return Err(Error::field("link.sigma2", "must be > 0"));
    }
    let tau_max_s = finite(hybrid.tau_max_s.unwrap_or(20e-9), "hybrid.tau_max_s")?;

    let scenario = ScenarioParts {
        geometry,
        grid,
        users,
        n_rf_chains,
        n_ttd_per_chain: hybrid.n_ttd_per_chain.unwrap_or(16.min(n)),
        snr_db,
        tau_max_s,
        realizations: raw.realizations.unwrap_or(200),
    }
    .build()
    .map_err(|e| match e {
        Error::Validation { field, reason } => {
            let prefixed = match field.as_str() {
                "n_rf_chains" | "n_ttd_per_chain" | "tau_max_s" => format!("hybrid.{field}"),
                "snr_db" => "link.snr_db".into(),
                _ => field,
            };
            Error::field(prefixed, reason)
        }
        other => other,
    })?;

    let sampling = raw.user_sampling.unwrap_or_default();
    let defaults = UserSampling::default();
    let users = UserSampling {
        r_min_m: finite(sampling.r_min_m.unwrap_or(defaults.r_min_m), "user_sampling.r_min_m")?,
        r_max_m: sampling.r_max_m.map(|v| finite(v, "user_sampling.r_max_m")).transpose()?,
        min_separation_rad: finite(
            sampling.min_separation_deg.map(f64::to_radians).unwrap_or(defaults.min_separation_rad),
            "user_sampling.min_separation_deg",
        )?,
    };
    if users.r_min_m <= scenario.geometry().max_element_radius() {
        return Err(Error::field("user_sampling.r_min_m", "must exceed the array radius"));
    }
    if let Some(hi) = users.r_max_m {
        if hi < users.r_min_m {
            return Err(Error::field("user_sampling.r_max_m", "must be >= r_min_m"));
        }
    }

    let jd = JointOptConfig::default();
    let j = raw.joint.unwrap_or_default();
    let joint = JointOptConfig {
        search_steps_x: j.search_steps_x.unwrap_or(jd.search_steps_x),
        max_iters: j.max_iters.unwrap_or(jd.max_iters),
        rel_tol: j.rel_tol.unwrap_or(jd.rel_tol),
        init: j.init.unwrap_or(jd.init),
        rng_seed: j.rng_seed.unwrap_or(jd.rng_seed),
    };
    joint.validate().map_err(|e| match e {
        Error::Validation { field, reason } => Error::field(format!("joint.{field}"), reason),
        other => other,
    })?;

    let experiment = ExperimentConfig {
        seed: raw.seed.unwrap_or(0),
        normalization: link.normalization.unwrap_or_default(),
        users,
        joint,
        sigma2,
    };
    Ok((scenario, experiment))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
[array]
n_antennas = 64
half_wavelength = true
[band]
fc_hz = 28e9
bandwidth_hz = 3e9
n_subcarriers = 10
[hybrid]
n_rf_chains = 2
n_ttd_per_chain = 8
"#;

    fn field_of(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Validation { field, .. }) => field,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn parses_defaults() {
        let c = parse_config(BASE).unwrap();
        assert_eq!(c.scenario.geometry().n_antennas(), 64);
        assert_eq!(c.scenario.realizations(), 200);
        assert_eq!(c.scenario.tau_max_s(), 20e-9);
        assert_eq!(c.experiment.seed, 3);
        assert_eq!(c.experiment.normalization, ChannelNormalization::UnitNorm);
    }

    #[test]
    fn digest_ignores_key_order() {
        let reordered = r#"
[hybrid]
n_ttd_per_chain = 8
n_rf_chains = 2
[band]
n_subcarriers = 10
bandwidth_hz = 3e9
fc_hz = 28e9
[array]
half_wavelength = true
n_antennas = 64
"#;
        let a = parse_config(BASE).unwrap();
        let b = parse_config(&format!("seed = 3\n{reordered}")).unwrap();
        assert_eq!(a.digest, b.digest);
        let c = parse_config(&BASE.replace("seed = 3", "seed = 4")).unwrap();
        assert_ne!(a.digest, c.digest);
    }

    #[test]
    fn names_offending_fields() {
        assert_eq!(field_of(&BASE.replace("half_wavelength = true", "")), "array.radius_m");
        assert_eq!(field_of(&BASE.replace("n_ttd_per_chain = 8", "n_ttd_per_chain = 7")), "hybrid.n_ttd_per_chain");
        assert_eq!(field_of(&BASE.replace("fc_hz = 28e9", "")), "band.fc_hz");
        assert_eq!(field_of(&format!("{BASE}\n[[users]]\nr_m = 0.01\nphi_deg = 0\n")), "users");
        assert_eq!(field_of(&BASE.replace("n_rf_chains = 2", "n_rf_chains = 1")
            .replace("[hybrid]", "[[users]]\nr_m = 0.01\nphi_deg = 3\n[hybrid]")), "users[0].r_m");
        assert_eq!(field_of(&BASE.replace("[hybrid]", "[link]\nsigma2 = 0\n[hybrid]")), "link.sigma2");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config(&BASE.replace("fc_hz", "fc_ghz")),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn syntax_errors_are_parse_errors() {
        assert!(matches!(parse_config("[array\nn = 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn degrees_become_radians() {
        let c = parse_config(&BASE.replace("n_rf_chains = 2", "n_rf_chains = 1")
            .replace("[hybrid]", "[[users]]\nr_m = 5.0\nphi_deg = 90\n[hybrid]"))
        .unwrap();
        assert!((c.scenario.users()[0].phi_rad() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
