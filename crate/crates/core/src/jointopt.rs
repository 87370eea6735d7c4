//! Joint PS/TTD alternating optimisation under a maximum-delay constraint.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytical::{design_analytical, AnalogBeamformer, SubarrayLayout};
use crate::channel::{response_at_wavenumber, DistanceModel};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, PolarPoint, Scenario, SubcarrierGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointInit {
    /// Analytical design, delays clipped into `[0, τ_max]` and snapped to the
    /// search grid.
    Analytical,
    /// Uniform random phases and grid delays.
    RandomPhases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointOptConfig {
    pub search_steps_x: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub init: JointInit,
    pub rng_seed: u64,
}

impl Default for JointOptConfig {
    fn default() -> Self {
        Self {
            search_steps_x: 1024,
            max_iters: 50,
            rel_tol: 1e-4,
            init: JointInit::Analytical,
            rng_seed: 0,
        }
    }
}

impl JointOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.search_steps_x < 2 {
            return Err(Error::field("search_steps_x", "must be >= 2"));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::field("rel_tol", "must be > 0"));
        }
        Ok(())
    }

    /// The delay search set `{0, τ_max/(X−1), …, τ_max}`.
    pub fn search_set(&self, tau_max_s: f64) -> Vec<f64> {
        let x = self.search_steps_x;
        (0..x).map(|i| tau_max_s * i as f64 / (x - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    /// Objective after initialisation (index 0) and after each iteration.
    pub objective_per_iter: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,objective")?;
        for (i, v) in self.objective_per_iter.iter().enumerate() {
            writeln!(w, "{i},{v:.15e}")?;
        }
        Ok(())
    }
}

/// `W̃*[m][l]`: the unconstrained optimum for chain `l` on subcarrier `m`,
/// which is the Fresnel response `aₘ(r_l, φ_l)` itself.
pub fn optimal_unconstrained(
    geometry: &ArrayGeometry,
    grid: &SubcarrierGrid,
    targets: &[PolarPoint],
) -> Vec<Vec<Vec<Complex64>>> {
    (0..grid.len())
        .map(|m| {
            targets
                .iter()
                .map(|t| response_at_wavenumber(geometry, grid.wavenumber(m), t, DistanceModel::Taylor2))
                .collect()
        })
        .collect()
}

/// `Σₘ‖w̃*ₗ,ₘ − wₗ,ₘ‖²` for one chain, with `wₗ,ₘ` the normalised analog column.
pub fn chain_objective(
    wstar: &[Vec<Vec<Complex64>>],
    grid: &SubcarrierGrid,
    layout: &SubarrayLayout,
    l: usize,
    ps: &[f64],
    delays: &[f64],
) -> f64 {
    let n = ps.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut total = 0.0;
    for (m, per_m) in wstar.iter().enumerate() {
        let f = grid.freq_hz(m);
        for (i, a) in per_m[l].iter().enumerate() {
            let w = Complex64::from_polar(scale, ps[i] - 2.0 * PI * f * delays[layout.subarray_of(i)]);
            total += (a - w).norm_sqr();
        }
    }
    total
}

/// `Σₘ Re Σₙ conj(w̃*ₙ)·e^{jφₙ}·e^{−j2πfₘτ_q(n)}` for one chain. Maximising this
/// is the same as minimising [`chain_objective`]:
/// `objective = 2M − (2/√N)·correlation`.
pub fn chain_correlation(
    wstar: &[Vec<Vec<Complex64>>],
    grid: &SubcarrierGrid,
    layout: &SubarrayLayout,
    l: usize,
    ps: &[f64],
    delays: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (m, per_m) in wstar.iter().enumerate() {
        let f = grid.freq_hz(m);
        for (i, a) in per_m[l].iter().enumerate() {
            let w = Complex64::from_polar(1.0, ps[i] - 2.0 * PI * f * delays[layout.subarray_of(i)]);
            total += (a.conj() * w).re;
        }
    }
    total
}

/// Optimal PS phases for chain `l` with delays held fixed.
pub fn update_ps(
    delays: &[f64],
    wstar: &[Vec<Vec<Complex64>>],
    grid: &SubcarrierGrid,
    layout: &SubarrayLayout,
    l: usize,
) -> Vec<f64> {
    let n = wstar[0][l].len();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for (m, per_m) in wstar.iter().enumerate() {
        let f = grid.freq_hz(m);
        for (i, a) in per_m[l].iter().enumerate() {
            acc[i] += a * Complex64::from_polar(1.0, 2.0 * PI * f * delays[layout.subarray_of(i)]);
        }
    }
    acc.iter().map(|z| z.arg().rem_euclid(2.0 * PI)).collect()
}

/// Best delay in `search_set` for each sub-array of chain `l`, PS held fixed.
/// Ties go to the smallest delay.
pub fn update_ttd(
    ps: &[f64],
    wstar: &[Vec<Vec<Complex64>>],
    grid: &SubcarrierGrid,
    layout: &SubarrayLayout,
    l: usize,
    search_set: &[f64],
) -> Vec<f64> {
    let n_m = grid.len();
    let p = layout.p_per_subarray;
    let step = if search_set.len() > 1 { search_set[1] - search_set[0] } else { 0.0 };
    (0..layout.q_subarrays)
        .map(|q| {
            let psi: Vec<Complex64> = (0..n_m)
                .map(|m| {
                    (q * p..(q + 1) * p)
                        .map(|i| wstar[m][l][i].conj() * Complex64::from_polar(1.0, ps[i]))
                        .sum()
                })
                .collect();
            let rot: Vec<Complex64> = (0..n_m)
                .map(|m| Complex64::from_polar(1.0, -2.0 * PI * grid.freq_hz(m) * step))
                .collect();
            let mut phasor = psi.clone();
            let mut best = (0usize, f64::NEG_INFINITY);
            for (x, _) in search_set.iter().enumerate() {
                if x % 64 == 0 {
                    // Re-anchor the running product to keep rounding bounded.
                    for m in 0..n_m {
                        phasor[m] = psi[m] * Complex64::from_polar(1.0, -2.0 * PI * grid.freq_hz(m) * search_set[x]);
                    }
                }
                let v: f64 = phasor.iter().map(|z| z.re).sum();
                if v > best.1 {
                    best = (x, v);
                }
                for m in 0..n_m {
                    phasor[m] *= rot[m];
                }
            }
            search_set[best.0]
        })
        .collect()
}

fn snap(tau: f64, search_set: &[f64]) -> f64 {
    let x = search_set.len();
    if x < 2 || search_set[x - 1] == 0.0 {
        return 0.0;
    }
    let step = search_set[1];
    let i = (tau / step).round().clamp(0.0, (x - 1) as f64) as usize;
    search_set[i]
}

/// The analytical design drops each chain's common delay, which the
/// objective sees as a phase ramp across subcarriers. Add back the feasible
/// grid offset that best cancels that ramp and absorb the remaining constant
/// phase into the phase shifters.
fn restore_common_delay(
    bf: &mut AnalogBeamformer,
    l: usize,
    wstar: &[Vec<Vec<Complex64>>],
    grid: &SubcarrierGrid,
    search_set: &[f64],
) {
    let n = bf.n_antennas();
    let layout = &bf.layout;
    let corr: Vec<Complex64> = (0..grid.len())
        .map(|m| {
            let f = grid.freq_hz(m);
            (0..n)
                .map(|i| {
                    let w = Complex64::from_polar(1.0, bf.ps_phases_rad[l][i] - 2.0 * PI * f * bf.delays_s[l][layout.subarray_of(i)]);
                    wstar[m][l][i].conj() * w
                })
                .sum()
        })
        .collect();
    let span = bf.delays_s[l].iter().cloned().fold(0.0, f64::max);
    let tau_max = *search_set.last().unwrap();
    let mut best = (0.0, Complex64::new(0.0, 0.0), f64::NEG_INFINITY);
    for &c0 in search_set.iter().take_while(|&&c0| c0 + span <= tau_max) {
        let s: Complex64 = corr
            .iter()
            .enumerate()
            .map(|(m, g)| g * Complex64::from_polar(1.0, -2.0 * PI * grid.freq_hz(m) * c0))
            .sum();
        if s.norm() > best.2 {
            best = (c0, s, s.norm());
        }
    }
    let (c0, s, _) = best;
    let step = if search_set.len() > 1 { search_set[1] } else { 0.0 };
    for d in bf.delays_s[l].iter_mut() {
        // c0 and d are both grid multiples; re-snap to keep them exactly on the grid.
        *d = if step > 0.0 { search_set[((*d + c0) / step).round() as usize] } else { 0.0 };
    }
    let theta = -s.arg();
    for v in bf.ps_phases_rad[l].iter_mut() {
        *v = (*v + theta).rem_euclid(2.0 * PI);
    }
}

/// Alternating PS/TTD optimisation. Every returned delay lies in the search
/// set, hence in `[0, τ_max]`.
pub fn optimize_joint(
    scenario: &Scenario,
    targets: &[PolarPoint],
    config: &JointOptConfig,
) -> Result<(AnalogBeamformer, OptTrace)> {
    config.validate()?;
    let mut bf = design_analytical(scenario, targets)?;
    let geometry = scenario.geometry();
    let grid = scenario.grid();
    let layout = bf.layout.clone();
    let tau_max = scenario.tau_max_s();
    let search_set = config.search_set(tau_max);
    let wstar = optimal_unconstrained(geometry, grid, targets);
    let n_f = targets.len();

    match config.init {
        JointInit::Analytical => {
            for l in 0..n_f {
                for d in bf.delays_s[l].iter_mut() {
                    *d = snap(d.clamp(0.0, tau_max), &search_set);
                }
                restore_common_delay(&mut bf, l, &wstar, grid, &search_set);
            }
        }
        JointInit::RandomPhases => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            for l in 0..n_f {
                for v in bf.ps_phases_rad[l].iter_mut() {
                    *v = rng.random_range(0.0..2.0 * PI);
                }
                for d in bf.delays_s[l].iter_mut() {
                    *d = search_set[rng.random_range(0..search_set.len())];
                }
            }
        }
    }

    let total = |ps: &[Vec<f64>], delays: &[Vec<f64>]| -> f64 {
        (0..n_f)
            .map(|l| chain_objective(&wstar, grid, &layout, l, &ps[l], &delays[l]))
            .sum()
    };

    let mut objective = vec![total(&bf.ps_phases_rad, &bf.delays_s)];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        let updated: Vec<(Vec<f64>, Vec<f64>)> = (0..n_f)
            .into_par_iter()
            .map(|l| {
                let ps = update_ps(&bf.delays_s[l], &wstar, grid, &layout, l);
                let delays = update_ttd(&ps, &wstar, grid, &layout, l, &search_set);
                (ps, delays)
            })
            .collect();
        for (l, (ps, delays)) in updated.into_iter().enumerate() {
            bf.ps_phases_rad[l] = ps;
            bf.delays_s[l] = delays;
        }
        iterations += 1;
        let prev = *objective.last().unwrap();
        let cur = total(&bf.ps_phases_rad, &bf.delays_s);
        objective.push(cur);
        if (prev - cur).abs() <= config.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    bf.scheme = "joint".into();
    bf.delay_offsets_s = vec![0.0; n_f];
    bf.exceeds_tau_max = false;
    Ok((bf, OptTrace { objective_per_iter: objective, iterations, converged }))
}
