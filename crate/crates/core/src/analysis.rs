//! Extinction, survival, stability, divergence and hitting-time estimates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EnsembleResult, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{IncrementSource, NoiseStream};
use crate::state::{sup_distance, MixedStrategy};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Default fraction of samples discarded before fitting a decay rate.
pub const DEFAULT_BURN_IN: f64 = 0.1;

/// A binomial proportion with its Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                successes,
                trials,
                estimate: f64::NAN,
                lo: 0.0,
                hi: 1.0,
            };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = Z95 * Z95;
        let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
        let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            successes,
            trials,
            estimate: p,
            lo: if successes == 0 { 0.0 } else { (centre - half).max(0.0) },
            hi: if successes == trials {
                1.0
            } else {
                (centre + half).min(1.0)
            },
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("{what} has an invalid entry {v}")));
    }
    Ok(())
}

/// `Σ_α p_α ln(p_α / x_α)`; `+∞` when `p` puts mass where `x` has none.
pub fn kl_divergence(p: &[f64], x: &[f64]) -> Result<f64> {
    if p.len() != x.len() {
        return Err(Error::shape("distribution", p.len(), x.len()));
    }
    check_distribution("p", p)?;
    check_distribution("x", x)?;
    let mut d = 0.0;
    for (&pa, &xa) in p.iter().zip(x) {
        if pa == 0.0 {
            continue;
        }
        if xa == 0.0 {
            return Ok(f64::INFINITY);
        }
        d += pa * (pa / xa).ln();
    }
    Ok(d)
}

/// `D_KL(p, x) − D_KL(p', x)`.
pub fn cross_entropy_v(p: &[f64], p_prime: &[f64], x: &[f64]) -> Result<f64> {
    let a = kl_divergence(p, x)?;
    let b = kl_divergence(p_prime, x)?;
    if a.is_infinite() && b.is_infinite() {
        return Err(Error::Domain("both divergences are infinite".into()));
    }
    Ok(a - b)
}

/// `D_KL(p, x(t))` at every recorded sample, `p` a strategy of population `p.population()`.
pub fn kl_trace(traj: &Trajectory, p: &MixedStrategy) -> Result<Vec<f64>> {
    p.check_against(&traj.layout)?;
    let r = traj.layout.range(p.population());
    traj.states
        .iter()
        .map(|x| kl_divergence(p.probs(), &x[r.clone()]))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub threshold: f64,
    /// `min_{α ∈ supp p} x_α(T) < threshold`.
    pub extinct: bool,
    pub terminal_min_share: f64,
    /// First recorded time at which the minimum over the support fell below the threshold.
    pub first_crossing: Option<f64>,
    /// Terminal flag for every pure strategy of the population.
    pub strategies_extinct: Vec<bool>,
}

pub fn detect_extinction(traj: &Trajectory, p: &MixedStrategy, threshold: f64) -> Result<ExtinctionReport> {
    p.check_against(&traj.layout)?;
    if !(threshold > traj.config.floor && threshold < 1.0) {
        return Err(Error::Domain(format!(
            "threshold {threshold} must lie in ({}, 1)",
            traj.config.floor
        )));
    }
    let off = traj.layout.offset(p.population());
    let support: Vec<usize> = p.support().map(|a| off + a).collect();
    let min_share = |x: &[f64]| support.iter().map(|&i| x[i]).fold(f64::INFINITY, f64::min);
    let first_crossing = traj
        .times
        .iter()
        .zip(&traj.states)
        .find(|(_, x)| min_share(x) < threshold)
        .map(|(t, _)| *t);
    let terminal = traj.terminal();
    let terminal_min_share = min_share(terminal);
    Ok(ExtinctionReport {
        threshold,
        extinct: terminal_min_share < threshold,
        terminal_min_share,
        first_crossing,
        strategies_extinct: terminal[traj.layout.range(p.population())]
            .iter()
            .map(|&v| v < threshold)
            .collect(),
    })
}

/// Fraction of paths whose terminal share of flat strategy `i` is at least `threshold`.
pub fn survival_probability(ens: &EnsembleResult, i: usize, threshold: f64) -> Result<Proportion> {
    if i >= ens.layout.total() {
        return Err(Error::Domain(format!("strategy {i} does not exist")));
    }
    let survived = ens.paths.iter().filter(|p| p.terminal[i] >= threshold).count();
    Ok(Proportion::new(survived as u64, ens.len() as u64))
}

/// Fraction of paths whose terminal share of `i` is below `threshold`.
pub fn extinction_fraction(ens: &EnsembleResult, i: usize, threshold: f64) -> Result<Proportion> {
    let s = survival_probability(ens, i, threshold)?;
    Ok(Proportion::new(s.trials - s.successes, s.trials))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub time: f64,
    pub initial: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub z: f64,
    pub paths: u64,
}

/// `z = (mean of x_i(t) − x_i(0)) / standard error`, with `t` one of the
/// ensemble's observation times or the horizon.
pub fn martingale_check(ens: &EnsembleResult, i: usize, t: f64) -> Result<MartingaleReport> {
    if i >= ens.layout.total() {
        return Err(Error::Domain(format!("strategy {i} does not exist")));
    }
    let initial = ens.x0[i];
    let n = ens.len() as u64;
    if t == 0.0 {
        return Ok(MartingaleReport {
            time: t,
            initial,
            mean: initial,
            standard_error: 0.0,
            z: 0.0,
            paths: n,
        });
    }
    let tol = 0.5 * ens.config.dt;
    let values = if let Some(k) = ens.observe_times.iter().position(|&o| (o - t).abs() < tol) {
        ens.snapshot_shares(k, i)
    } else if (t - ens.config.time(ens.config.steps())).abs() < tol {
        ens.terminal_shares(i)
    } else {
        return Err(Error::Domain(format!("time {t} was not observed")));
    };
    // Deviations from x(0), so a frozen ensemble gives exactly zero.
    let dev: Vec<f64> = values.iter().map(|v| v - initial).collect();
    let m = dev.len() as f64;
    let diff = dev.iter().sum::<f64>() / m;
    let var = if dev.len() > 1 {
        dev.iter().map(|d| (d - diff).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let se = (var / m).sqrt();
    let mean = initial + diff;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(MartingaleReport {
        time: t,
        initial,
        mean,
        standard_error: se,
        z,
        paths: n,
    })
}

/// Probability that a standard Brownian motion ever meets the line `a + b t`.
pub fn hitting_probability_closed_form(a: f64, b: f64) -> f64 {
    (-a * b - (a * b).abs()).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Grid crossings plus Brownian-bridge crossings between grid points.
    pub estimate: Proportion,
    /// Crossings observed at grid points only.
    pub grid_only: Proportion,
    /// `estimate − grid_only`: the detection bias of the grid check.
    pub bias: f64,
    pub closed_form: f64,
}

/// Once the gap has drifted this far from the barrier, the chance of ever
/// returning (`exp(−2|b|g)`) is below `1e-15` and the path is stopped.
const ESCAPE_EXPONENT: f64 = 34.6;

/// Bridge crossing probabilities below `e^{-40}` are treated as zero.
const BRIDGE_CUTOFF: f64 = 40.0;

/// Monte Carlo estimate of `P(τ ≤ horizon)` for `τ = inf{t : W(t) = a + b t}`.
///
/// A crossing is detected when the gap changes sign between grid points, or
/// otherwise with the Brownian-bridge probability `exp(−2 g₀ g₁ / dt)` of
/// touching the barrier within the step.
pub fn hitting_probability_mc(
    a: f64,
    b: f64,
    horizon: f64,
    n_paths: u64,
    dt: f64,
    seed: u64,
) -> Result<HittingEstimate> {
    if !(dt > 0.0 && horizon >= dt) || n_paths == 0 {
        return Err(Error::Config("need dt > 0, horizon ≥ dt and at least one path".into()));
    }
    let closed_form = hitting_probability_closed_form(a, b);
    if a == 0.0 {
        let all = Proportion::new(n_paths, n_paths);
        return Ok(HittingEstimate {
            a,
            b,
            horizon,
            dt,
            estimate: all,
            grid_only: all,
            bias: 0.0,
            closed_form,
        });
    }
    let steps = ((horizon / dt) - 1e-9).ceil() as u64;
    let s = a.signum();
    let drift = s * b;
    let escape = (drift > 0.0).then(|| ESCAPE_EXPONENT / (2.0 * drift));
    let hits: Vec<(bool, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut noise = NoiseStream::new(seed, path);
            let mut dw = [0.0];
            let mut w = 0.0;
            let mut g0 = a.abs();
            let mut bridge = false;
            for step in 0..steps {
                noise.increments(step, dt, &mut dw);
                w += dw[0];
                let g1 = s * (a + b * (step + 1) as f64 * dt - w);
                if g1 <= 0.0 {
                    return (true, true);
                }
                if !bridge {
                    let e = 2.0 * g0 * g1 / dt;
                    if e < BRIDGE_CUTOFF {
                        let u: f64 = noise.aux_rng(step).random();
                        bridge = u < (-e).exp();
                    }
                }
                if escape.is_some_and(|g| g1 > g) {
                    return (bridge, false);
                }
                g0 = g1;
            }
            (bridge, false)
        })
        .collect();
    let bridged = hits.iter().filter(|h| h.0).count() as u64;
    let grid = hits.iter().filter(|h| h.1).count() as u64;
    let estimate = Proportion::new(bridged, n_paths);
    let grid_only = Proportion::new(grid, n_paths);
    Ok(HittingEstimate {
        a,
        b,
        horizon,
        dt,
        estimate,
        grid_only,
        bias: estimate.estimate - grid_only.estimate,
        closed_form,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `ln(x_i / x_j)` against `t²`.
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn quadratic_decay_fit(traj: &Trajectory, i: usize, j: usize) -> Result<DecayFit> {
    quadratic_decay_fit_with(traj, i, j, DEFAULT_BURN_IN)
}

/// As [`quadratic_decay_fit`], discarding the first `burn_in` fraction of samples.
/// Uses the tracked log shares when available, so the fit is not limited by
/// the state floor.
pub fn quadratic_decay_fit_with(traj: &Trajectory, i: usize, j: usize, burn_in: f64) -> Result<DecayFit> {
    let n = traj.layout.total();
    if i >= n || j >= n {
        return Err(Error::Domain(format!("strategy index out of range ({n} strategies)")));
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::Domain(format!("burn-in fraction {burn_in} must lie in [0, 1)")));
    }
    let ratio = |k: usize| match &traj.log_shares {
        Some(y) => y[k][i] - y[k][j],
        None => (traj.states[k][i] / traj.states[k][j]).ln(),
    };
    let start = (traj.times.len() as f64 * burn_in).ceil() as usize;
    let pts: Vec<(f64, f64)> = (start..traj.times.len())
        .map(|k| (traj.times[k] * traj.times[k], ratio(k)))
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateWindow(format!("{} samples after burn-in", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) || !sxy.is_finite() {
        return Err(Error::DegenerateWindow(
            "no spread in t² or non-finite log ratios".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok(DecayFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub radius: f64,
    pub convergence_tolerance: f64,
    /// Paths that never left the ball of radius `radius` around `x*`.
    pub staying: Proportion,
    /// Paths that stayed and end within the convergence tolerance of `x*`.
    pub converging: Proportion,
    /// Paths ending within the tolerance, regardless of excursions.
    pub terminal_only: Proportion,
}

/// Requires an ensemble run with `reference = x*`, so that the largest
/// distance to `x*` was tracked at every step.
pub fn stability_probability(
    ens: &EnsembleResult,
    x_star: &[f64],
    radius: f64,
    convergence_tolerance: f64,
) -> Result<StabilityEstimate> {
    ens.layout.check_len("target state", x_star.len())?;
    let mut staying = 0;
    let mut converging = 0;
    let mut terminal_only = 0;
    for p in &ens.paths {
        let Some(max_d) = p.max_reference_distance else {
            return Err(Error::Config(
                "stability needs an ensemble run with the target as reference state".into(),
            ));
        };
        let stayed = max_d < radius;
        let near = sup_distance(&p.terminal, x_star) < convergence_tolerance;
        staying += u64::from(stayed);
        converging += u64::from(stayed && near);
        terminal_only += u64::from(near);
    }
    let n = ens.len() as u64;
    Ok(StabilityEstimate {
        radius,
        convergence_tolerance,
        staying: Proportion::new(staying, n),
        converging: Proportion::new(converging, n),
        terminal_only: Proportion::new(terminal_only, n),
    })
}
