//! Scenario files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shockrep_core::dynamics::build_dynamics;
use shockrep_core::engine::DEFAULT_EXTINCTION_THRESHOLD;
use shockrep_core::{Dynamics, GameSpec, IntegratorConfig, ModelKind, NoiseKind, NoiseModel, PopulationState};

use crate::error::{Error, Result};

fn one() -> u64 {
    1
}

fn extinction_threshold() -> f64 {
    DEFAULT_EXTINCTION_THRESHOLD
}

fn half() -> f64 {
    0.5
}

fn convergence_tolerance() -> f64 {
    1e-3
}

fn burn_in() -> f64 {
    shockrep_core::analysis::DEFAULT_BURN_IN
}

fn identity_states() -> usize {
    100
}

fn absorption_band() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameConfig {
    /// State-independent payoffs, one row per population.
    Constant { payoffs: Vec<Vec<f64>> },
    /// Single-population game with payoffs `v = V x`.
    Matrix { entries: Vec<Vec<f64>> },
    /// Two populations; row player `a`, column player `b`.
    Bimatrix { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// Payoff tables over pure profiles, last population varying fastest.
    Multilinear { sizes: Vec<usize>, tables: Vec<Vec<f64>> },
}

impl GameConfig {
    pub fn build(&self) -> shockrep_core::Result<GameSpec> {
        match self {
            GameConfig::Constant { payoffs } => GameSpec::constant(payoffs.clone()),
            GameConfig::Matrix { entries } => GameSpec::matrix(entries.clone()),
            GameConfig::Bimatrix { a, b } => GameSpec::bimatrix(a.clone(), b.clone()),
            GameConfig::Multilinear { sizes, tables } => GameSpec::multilinear(sizes.clone(), tables.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    /// One intensity per strategy, one row per population.
    PerStrategy { sigma: Vec<Vec<f64>> },
    /// One intensity per payoff-matrix entry.
    MatrixEntry { sigma: Vec<Vec<f64>> },
    /// One symmetric mutation-intensity matrix per population.
    Mutation { eta: Vec<Vec<Vec<f64>>> },
}

impl NoiseConfig {
    pub fn kind(&self) -> NoiseKind {
        match self {
            NoiseConfig::PerStrategy { .. } => NoiseKind::PerStrategy,
            NoiseConfig::MatrixEntry { .. } => NoiseKind::MatrixEntry,
            NoiseConfig::Mutation { .. } => NoiseKind::Mutation,
        }
    }

    pub fn build(&self) -> shockrep_core::Result<NoiseModel> {
        match self {
            NoiseConfig::PerStrategy { sigma } => NoiseModel::per_strategy(sigma.clone()),
            NoiseConfig::MatrixEntry { sigma } => NoiseModel::matrix_entry(sigma.clone()),
            NoiseConfig::Mutation { eta } => NoiseModel::mutation_from_matrices(eta.clone()),
        }
    }
}

/// A named analysis and its parameters. Strategy indices are flat
/// (population offsets included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnalysisRequest {
    /// Fraction of paths with terminal share at least `threshold`.
    Survival {
        strategy: usize,
        #[serde(default = "extinction_threshold")]
        threshold: f64,
    },
    /// Fraction of paths with terminal share below `threshold`.
    Extinction {
        strategy: usize,
        #[serde(default = "extinction_threshold")]
        threshold: f64,
    },
    /// Fraction of paths whose terminal share stays more than `band` away
    /// from both 0 and 1.
    Absorption {
        strategy: usize,
        #[serde(default = "absorption_band")]
        band: f64,
    },
    Martingale {
        strategy: usize,
        time: f64,
    },
    Stability {
        target: Vec<Vec<f64>>,
        #[serde(default = "half")]
        radius: f64,
        #[serde(default = "convergence_tolerance")]
        tolerance: f64,
    },
    /// Per-path slope of `ln(x_α/x_β)` against `t²`, and its ensemble mean.
    QuadraticDecay {
        alpha: usize,
        beta: usize,
        #[serde(default = "burn_in")]
        burn_in: f64,
    },
    Hitting {
        a: f64,
        b: f64,
        horizon: f64,
        paths: u64,
        dt: f64,
    },
    /// Largest drift gap between the Stratonovich-converted and the
    /// exponential-learning fields over random interior states.
    StratonovichIdentity {
        #[serde(default = "identity_states")]
        states: usize,
    },
    /// Mean RMS deviation from the closed form at each step size, on shared
    /// Brownian paths.
    PathwiseDeviation {
        dts: Vec<f64>,
        horizon: f64,
        paths: u64,
    },
    MarginConditions {},
}

impl AnalysisRequest {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisRequest::Survival { .. } => "survival",
            AnalysisRequest::Extinction { .. } => "extinction",
            AnalysisRequest::Absorption { .. } => "absorption",
            AnalysisRequest::Martingale { .. } => "martingale",
            AnalysisRequest::Stability { .. } => "stability",
            AnalysisRequest::QuadraticDecay { .. } => "quadratic-decay",
            AnalysisRequest::Hitting { .. } => "hitting",
            AnalysisRequest::StratonovichIdentity { .. } => "stratonovich-identity",
            AnalysisRequest::PathwiseDeviation { .. } => "pathwise-deviation",
            AnalysisRequest::MarginConditions {} => "margin-conditions",
        }
    }

    pub const NAMES: [&'static str; 10] = [
        "survival",
        "extinction",
        "absorption",
        "martingale",
        "stability",
        "quadratic-decay",
        "hitting",
        "stratonovich-identity",
        "pathwise-deviation",
        "margin-conditions",
    ];

    /// Whether the analysis reads the scenario's ensemble.
    pub fn needs_ensemble(&self) -> bool {
        !matches!(
            self,
            AnalysisRequest::Hitting { .. }
                | AnalysisRequest::StratonovichIdentity { .. }
                | AnalysisRequest::PathwiseDeviation { .. }
                | AnalysisRequest::MarginConditions {}
        )
    }

    /// Parameters used by `analyze` when the scenario did not request the analysis.
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "survival" => AnalysisRequest::Survival {
                strategy: 0,
                threshold: extinction_threshold(),
            },
            "extinction" => AnalysisRequest::Extinction {
                strategy: 0,
                threshold: extinction_threshold(),
            },
            "absorption" => AnalysisRequest::Absorption {
                strategy: 0,
                band: absorption_band(),
            },
            "stratonovich-identity" => AnalysisRequest::StratonovichIdentity {
                states: identity_states(),
            },
            "margin-conditions" => AnalysisRequest::MarginConditions {},
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub game: GameConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    pub dynamics: ModelKind,
    pub integrator: IntegratorConfig,
    /// Initial state, one row per population.
    pub x0: Vec<Vec<f64>>,
    /// Ensemble size; 0 runs only the analyses that need no ensemble.
    #[serde(default = "one")]
    pub paths: u64,
    pub seed: u64,
    #[serde(default)]
    pub observe_times: Vec<f64>,
    /// Track each path's largest sup-distance to this state.
    #[serde(default)]
    pub reference: Option<Vec<Vec<f64>>>,
    #[serde(default = "extinction_threshold")]
    pub extinction_threshold: f64,
    /// Number of leading paths whose full trajectory is written as CSV.
    #[serde(default)]
    pub trajectories: u64,
    #[serde(default)]
    pub analyses: Vec<AnalysisRequest>,
    /// Output root for this scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

/// The validated objects a scenario describes.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub game: GameSpec,
    pub noise: Option<NoiseModel>,
    pub dynamics: Dynamics,
    pub x0: PopulationState,
}

fn invalid(field: impl std::fmt::Display, e: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{field}: {e}"))
}

/// Noise kind each model needs, if any.
fn required_noise(kind: ModelKind) -> Option<NoiseKind> {
    match kind {
        ModelKind::Rd => None,
        ModelKind::BimatrixShocks => Some(NoiseKind::MatrixEntry),
        ModelKind::RandomMutations => Some(NoiseKind::Mutation),
        _ => Some(NoiseKind::PerStrategy),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.paths {
            self.paths = p;
        }
        if let Some(dt) = o.dt {
            self.integrator.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.integrator.horizon = h;
        }
    }

    /// Checks every field and builds the game, noise and dynamics, before
    /// any simulation runs.
    pub fn validate(&self) -> Result<Scenario> {
        let game = self.game.build().map_err(|e| invalid("game", e))?;
        let layout = game.layout().clone();
        let noise = match &self.noise {
            Some(n) => Some(n.build().map_err(|e| invalid("noise", e))?),
            None => None,
        };
        match (required_noise(self.dynamics), &self.noise) {
            (Some(kind), None) => {
                return Err(invalid("noise", format!("model {} needs {kind}", self.dynamics)));
            }
            (Some(kind), Some(n)) if n.kind() != kind => {
                return Err(invalid(
                    "noise.kind",
                    format!("model {} needs {kind}, found {}", self.dynamics, n.kind()),
                ));
            }
            _ => {}
        }
        if matches!(self.noise, Some(NoiseConfig::MatrixEntry { .. }))
            && !matches!(self.game, GameConfig::Matrix { .. })
        {
            return Err(invalid("game.kind", "matrix-entry noise needs a matrix game"));
        }
        let dynamics = build_dynamics(self.dynamics, &game, noise.as_ref()).map_err(|e| invalid("dynamics", e))?;
        self.integrator
            .validate(&layout)
            .map_err(|e| invalid("integrator", e))?;
        let x0 = PopulationState::from_blocks(self.x0.clone()).map_err(|e| invalid("x0", e))?;
        if x0.layout() != &layout {
            return Err(invalid("x0", format!("expected population sizes {:?}", layout.sizes())));
        }
        if let Some(r) = &self.reference {
            let r = PopulationState::from_blocks(r.clone()).map_err(|e| invalid("reference", e))?;
            if r.layout() != &layout {
                return Err(invalid(
                    "reference",
                    format!("expected population sizes {:?}", layout.sizes()),
                ));
            }
        }
        if !(self.extinction_threshold > 0.0 && self.extinction_threshold < 1.0) {
            return Err(invalid("extinction_threshold", "must lie in (0, 1)"));
        }
        if self.trajectories > self.paths {
            return Err(invalid("trajectories", format!("exceeds the {} paths", self.paths)));
        }
        let horizon = self.integrator.horizon;
        for &t in &self.observe_times {
            if !(0.0..=horizon).contains(&t) {
                return Err(invalid("observe_times", format!("{t} lies outside [0, {horizon}]")));
            }
        }
        let n = layout.total();
        let mut stability_target: Option<&Vec<Vec<f64>>> = None;
        for (i, a) in self.analyses.iter().enumerate() {
            let field = format!("analyses[{i}]");
            if a.needs_ensemble() && self.paths == 0 {
                return Err(invalid(&field, format!("{} needs an ensemble (paths ≥ 1)", a.name())));
            }
            let strategy_ok = |s: usize| {
                if s < n {
                    Ok(())
                } else {
                    Err(invalid(
                        format!("{field}.strategy"),
                        format!("{s} is not one of the {n} strategies"),
                    ))
                }
            };
            match a {
                AnalysisRequest::Survival { strategy, .. }
                | AnalysisRequest::Extinction { strategy, .. }
                | AnalysisRequest::Absorption { strategy, .. } => strategy_ok(*strategy)?,
                AnalysisRequest::Martingale { strategy, time } => {
                    strategy_ok(*strategy)?;
                    if !(0.0..=horizon).contains(time) {
                        return Err(invalid(
                            format!("{field}.time"),
                            format!("{time} lies outside [0, {horizon}]"),
                        ));
                    }
                }
                AnalysisRequest::Stability {
                    target,
                    radius,
                    tolerance,
                } => {
                    let t = PopulationState::from_blocks(target.clone())
                        .map_err(|e| invalid(format!("{field}.target"), e))?;
                    if t.layout() != &layout {
                        return Err(invalid(format!("{field}.target"), "population sizes differ from x0"));
                    }
                    if self.reference.as_ref().is_some_and(|r| r != target)
                        || stability_target.is_some_and(|s| s != target)
                    {
                        return Err(invalid(
                            format!("{field}.target"),
                            "an ensemble tracks a single reference state",
                        ));
                    }
                    stability_target = Some(target);
                    if !(*radius > 0.0 && *tolerance > 0.0) {
                        return Err(invalid(&field, "radius and tolerance must be positive"));
                    }
                }
                AnalysisRequest::QuadraticDecay { alpha, beta, burn_in } => {
                    strategy_ok(*alpha)?;
                    strategy_ok(*beta)?;
                    if !(0.0..1.0).contains(burn_in) {
                        return Err(invalid(format!("{field}.burn_in"), "must lie in [0, 1)"));
                    }
                }
                AnalysisRequest::Hitting {
                    a, horizon, paths, dt, ..
                } => {
                    if !a.is_finite() || !(*dt > 0.0 && horizon >= dt) || *paths == 0 {
                        return Err(invalid(&field, "needs finite a, dt > 0, horizon ≥ dt and paths ≥ 1"));
                    }
                }
                AnalysisRequest::StratonovichIdentity { states } => {
                    if *states == 0 {
                        return Err(invalid(format!("{field}.states"), "must be positive"));
                    }
                    if self.noise.as_ref().map(NoiseConfig::kind) != Some(NoiseKind::PerStrategy) {
                        return Err(invalid(&field, "needs per-strategy noise"));
                    }
                }
                AnalysisRequest::PathwiseDeviation { dts, horizon, paths } => {
                    if !matches!(self.dynamics, ModelKind::AggregateShocks | ModelKind::ExpLearning) {
                        return Err(invalid(&field, "needs aggregate-shocks or exp-learning dynamics"));
                    }
                    if dts.len() < 2 || *paths == 0 || !(*horizon > 0.0) {
                        return Err(invalid(
                            &field,
                            "needs at least two step sizes, paths ≥ 1 and a positive horizon",
                        ));
                    }
                    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
                    for dt in dts {
                        let ratio = dt / finest;
                        if !(finest > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
                            return Err(invalid(
                                format!("{field}.dts"),
                                "every step size must be a whole multiple of the smallest",
                            ));
                        }
                    }
                }
                AnalysisRequest::MarginConditions {} => {
                    if self.noise.as_ref().map(NoiseConfig::kind) != Some(NoiseKind::PerStrategy) {
                        return Err(invalid(&field, "needs per-strategy noise"));
                    }
                }
            }
        }
        Ok(Scenario {
            game,
            noise,
            dynamics,
            x0,
        })
    }

    /// Observation times: the configured ones plus those martingale checks need.
    pub fn effective_observe_times(&self) -> Vec<f64> {
        let mut t = self.observe_times.clone();
        for a in &self.analyses {
            if let AnalysisRequest::Martingale { time, .. } = a {
                if *time > 0.0 && !t.contains(time) {
                    t.push(*time);
                }
            }
        }
        t.sort_by(f64::total_cmp);
        t
    }

    /// Reference state: the configured one, else the stability target.
    pub fn effective_reference(&self) -> Option<Vec<f64>> {
        self.reference
            .clone()
            .or_else(|| {
                self.analyses.iter().find_map(|a| match a {
                    AnalysisRequest::Stability { target, .. } => Some(target.clone()),
                    _ => None,
                })
            })
            .map(|r| r.concat())
    }

    pub fn keeps_trajectories(&self) -> bool {
        self.trajectories > 0
            || self
                .analyses
                .iter()
                .any(|a| matches!(a, AnalysisRequest::QuadraticDecay { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "game": { "kind": "constant", "payoffs": [[0.0, 1.0]] },
            "noise": { "kind": "per-strategy", "sigma": [[0.5, 0.5]] },
            "dynamics": "srd",
            "integrator": { "dt": 0.01, "horizon": 1.0 },
            "x0": [[0.5, 0.5]],
            "paths": 4,
            "seed": 7
        })
    }

    fn error_of(v: serde_json::Value) -> String {
        match ScenarioConfig::from_json(&v.to_string()).and_then(|c| c.validate().map(|_| ())) {
            Err(e) => e.to_string(),
            Ok(()) => panic!("accepted {v}"),
        }
    }

    #[test]
    fn base_scenario_validates() {
        ScenarioConfig::from_json(&base().to_string())
            .unwrap()
            .validate()
            .unwrap();
    }

    #[test]
    fn errors_name_the_offending_field() {
        let mut v = base();
        v["x0"] = serde_json::json!([[0.5, 0.4]]);
        assert!(error_of(v).contains("x0"));

        let mut v = base();
        v["x0"] = serde_json::json!([[0.2, 0.3, 0.5]]);
        assert!(error_of(v).contains("x0"));

        let mut v = base();
        v["analyses"] = serde_json::json!([{ "analysis": "survival", "strategy": 5 }]);
        assert!(error_of(v).contains("analyses[0].strategy"));

        let mut v = base();
        v["analyses"] = serde_json::json!([{ "analysis": "martingale", "strategy": 0, "time": 3.0 }]);
        assert!(error_of(v).contains("analyses[0].time"));

        let mut v = base();
        v["trajectories"] = serde_json::json!(10);
        assert!(error_of(v).contains("trajectories"));

        let mut v = base();
        v["noise"] = serde_json::json!({ "kind": "matrix-entry", "sigma": [[0.1, 0.1], [0.1, 0.1]] });
        assert!(error_of(v).contains("noise.kind"));

        let mut v = base();
        v["dynamics"] = serde_json::json!("random-mutations");
        assert!(error_of(v).contains("noise.kind"));

        let mut v = base();
        v["bogus"] = serde_json::json!(1);
        assert!(error_of(v).contains("bogus"));
    }

    #[test]
    fn stability_targets_must_agree() {
        let mut v = base();
        v["analyses"] = serde_json::json!([
            { "analysis": "stability", "target": [[0.0, 1.0]] },
            { "analysis": "stability", "target": [[1.0, 0.0]] }
        ]);
        assert!(error_of(v).contains("analyses[1].target"));
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = ScenarioConfig::from_json(&base().to_string()).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            paths: Some(2),
            dt: Some(0.5),
            horizon: Some(3.0),
        });
        assert_eq!(
            (c.seed, c.paths, c.integrator.dt, c.integrator.horizon),
            (9, 2, 0.5, 3.0)
        );
    }
}
