//! Evaluation of [`AnalysisRequest`]s into serializable reports.

use rand::Rng;
use serde::{Deserialize, Serialize};
use shockrep_core::analysis::{
    extinction_fraction, hitting_probability_mc, martingale_check, quadratic_decay_fit_with, stability_probability,
    survival_probability, HittingEstimate, MartingaleReport, Proportion, StabilityEstimate,
};
use shockrep_core::dynamics::{field_explearn, stratonovich_to_ito, Dynamics};
use shockrep_core::engine::pathwise_deviation;
use shockrep_core::modified::{margin_conditions, MarginReport};
use shockrep_core::rng::{CounterRng, Refined};
use shockrep_core::{EnsembleResult, IntegratorConfig, NoiseStream, Trajectory};

use crate::config::{AnalysisRequest, Scenario, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub alpha: usize,
    pub beta: usize,
    pub burn_in: f64,
    pub slopes: Vec<f64>,
    pub mean_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub states: usize,
    pub max_abs_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub horizon: f64,
    pub paths: u64,
    pub dts: Vec<f64>,
    /// Mean over paths of the RMS deviation, per step size.
    pub mean_rms: Vec<f64>,
    pub mean_max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "kebab-case")]
pub enum Report {
    Survival {
        strategy: usize,
        threshold: f64,
        result: Proportion,
    },
    Extinction {
        strategy: usize,
        threshold: f64,
        result: Proportion,
    },
    Absorption {
        strategy: usize,
        band: f64,
        interior: Proportion,
    },
    Martingale(MartingaleReport),
    Stability(StabilityEstimate),
    QuadraticDecay(DecaySummary),
    Hitting(HittingEstimate),
    StratonovichIdentity(IdentitySummary),
    PathwiseDeviation(DeviationSummary),
    MarginConditions(MarginReport),
}

/// Counter-RNG stream for sampled test states, apart from the Wiener
/// increments (0) and bridge uniforms (1).
const STATE_STREAM: u8 = 2;

/// Random interior states of every population, each share at least `1e-3`.
pub fn random_interior_states(layout: &shockrep_core::Layout, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut x = vec![0.0; layout.total()];
            for r in layout.blocks() {
                let w: Vec<f64> = r.clone().map(|_| rng.random_range(1e-3..1.0)).collect();
                let s: f64 = w.iter().sum();
                for (i, v) in r.zip(w) {
                    x[i] = v / s;
                }
            }
            x
        })
        .collect()
}

/// Mean RMS and max deviation of `dynamics` from its closed form, per step
/// size, every step size seeing the same Brownian paths.
pub fn shared_path_deviation(
    dynamics: &Dynamics,
    x0: &shockrep_core::PopulationState,
    seed: u64,
    dts: &[f64],
    horizon: f64,
    paths: u64,
) -> Result<DeviationSummary> {
    let Dynamics::FirstOrder(field) = dynamics else {
        return Err(Error::Validation("pathwise deviation needs a first-order model".into()));
    };
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut mean_rms = Vec::with_capacity(dts.len());
    let mut mean_max = Vec::with_capacity(dts.len());
    for &dt in dts {
        let factor = (dt / finest).round() as u64;
        let cfg = IntegratorConfig::new(dt, horizon);
        let (mut rms, mut max) = (0.0, 0.0);
        for p in 0..paths {
            let mut noise = Refined::new(NoiseStream::new(seed, p), factor);
            let r = pathwise_deviation(field, x0, &cfg, &mut noise)?;
            rms += r.rms;
            max += r.max;
        }
        mean_rms.push(rms / paths as f64);
        mean_max.push(max / paths as f64);
    }
    Ok(DeviationSummary {
        horizon,
        paths,
        dts: dts.to_vec(),
        mean_rms,
        mean_max,
    })
}

pub fn decay_summary(trajectories: &[Trajectory], alpha: usize, beta: usize, burn_in: f64) -> Result<DecaySummary> {
    let slopes = trajectories
        .iter()
        .map(|t| quadratic_decay_fit_with(t, alpha, beta, burn_in).map(|f| f.slope))
        .collect::<shockrep_core::Result<Vec<_>>>()?;
    Ok(DecaySummary {
        alpha,
        beta,
        burn_in,
        mean_slope: slopes.iter().sum::<f64>() / slopes.len() as f64,
        slopes,
    })
}

pub fn stratonovich_identity(scenario: &Scenario, seed: u64, states: usize) -> Result<IdentitySummary> {
    let noise = scenario
        .noise
        .as_ref()
        .ok_or_else(|| Error::Validation("stratonovich-identity needs a noise model".into()))?;
    let strat = stratonovich_to_ito(&scenario.game, noise)?;
    let exp = field_explearn(&scenario.game, noise)?;
    let mut rng = CounterRng::new(seed, 0, 0, STATE_STREAM);
    let mut max = 0.0f64;
    for x in random_interior_states(scenario.game.layout(), states, &mut rng) {
        for (a, b) in strat.drift(&x).iter().zip(&exp.drift(&x)) {
            max = max.max((a - b).abs());
        }
    }
    Ok(IdentitySummary {
        states,
        max_abs_difference: max,
    })
}

/// Runs one analysis. `ensemble` and `trajectories` must be present for the
/// analyses that need them.
pub fn evaluate(
    req: &AnalysisRequest,
    config: &ScenarioConfig,
    scenario: &Scenario,
    ensemble: Option<&EnsembleResult>,
    trajectories: Option<&[Trajectory]>,
) -> Result<Report> {
    let ens = || ensemble.ok_or_else(|| Error::Validation(format!("{} needs an ensemble", req.name())));
    Ok(match *req {
        AnalysisRequest::Survival { strategy, threshold } => Report::Survival {
            strategy,
            threshold,
            result: survival_probability(ens()?, strategy, threshold)?,
        },
        AnalysisRequest::Extinction { strategy, threshold } => Report::Extinction {
            strategy,
            threshold,
            result: extinction_fraction(ens()?, strategy, threshold)?,
        },
        AnalysisRequest::Absorption { strategy, band } => {
            let shares = ens()?.terminal_shares(strategy);
            let interior = shares.iter().filter(|&&x| x.min(1.0 - x) > band).count();
            Report::Absorption {
                strategy,
                band,
                interior: Proportion::new(interior as u64, shares.len() as u64),
            }
        }
        AnalysisRequest::Martingale { strategy, time } => Report::Martingale(martingale_check(ens()?, strategy, time)?),
        AnalysisRequest::Stability {
            ref target,
            radius,
            tolerance,
        } => Report::Stability(stability_probability(ens()?, &target.concat(), radius, tolerance)?),
        AnalysisRequest::QuadraticDecay { alpha, beta, burn_in } => {
            let t = trajectories
                .ok_or_else(|| Error::Validation("quadratic-decay needs the ensemble's trajectories".into()))?;
            Report::QuadraticDecay(decay_summary(t, alpha, beta, burn_in)?)
        }
        AnalysisRequest::Hitting {
            a,
            b,
            horizon,
            paths,
            dt,
        } => Report::Hitting(hitting_probability_mc(a, b, horizon, paths, dt, config.seed)?),
        AnalysisRequest::StratonovichIdentity { states } => {
            Report::StratonovichIdentity(stratonovich_identity(scenario, config.seed, states)?)
        }
        AnalysisRequest::PathwiseDeviation {
            ref dts,
            horizon,
            paths,
        } => Report::PathwiseDeviation(shared_path_deviation(
            &scenario.dynamics,
            &scenario.x0,
            config.seed,
            dts,
            horizon,
            paths,
        )?),
        AnalysisRequest::MarginConditions {} => {
            let noise = scenario
                .noise
                .as_ref()
                .ok_or_else(|| Error::Validation("margin-conditions needs a noise model".into()))?;
            Report::MarginConditions(margin_conditions(&scenario.game, noise)?)
        }
    })
}
