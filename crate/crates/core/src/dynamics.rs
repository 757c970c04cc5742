//! Drift and diffusion of every stochastic replicator model.
//!
//! A first-order field maps a flat state `x` to a drift vector and maps a
//! vector of Wiener increments `dW` (length [`DynamicsField::noise_dim`]) to
//! a state increment. Both are tangent to each population's simplex.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, PayoffModel};
use crate::noise::{NoiseKind, NoiseModel};
use crate::state::Layout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Deterministic replicator dynamics.
    Rd,
    /// Replicator dynamics with shocks to imitation payoffs.
    Srd,
    /// Shocks to population growth rates.
    AggregateShocks,
    /// Shocks to the scores of an exponential learning rule.
    ExpLearning,
    /// Stratonovich shocks, converted to Itô form.
    StratonovichSrd,
    /// Independent shocks to every payoff matrix entry.
    BimatrixShocks,
    /// Random mutation flows between strategy pairs.
    RandomMutations,
    /// Dynamics driven by cumulative payoffs.
    SecondOrder,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Rd,
        ModelKind::Srd,
        ModelKind::AggregateShocks,
        ModelKind::ExpLearning,
        ModelKind::StratonovichSrd,
        ModelKind::BimatrixShocks,
        ModelKind::RandomMutations,
        ModelKind::SecondOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rd => "rd",
            ModelKind::Srd => "srd",
            ModelKind::AggregateShocks => "aggregate-shocks",
            ModelKind::ExpLearning => "exp-learning",
            ModelKind::StratonovichSrd => "stratonovich-srd",
            ModelKind::BimatrixShocks => "bimatrix-shocks",
            ModelKind::RandomMutations => "random-mutations",
            ModelKind::SecondOrder => "second-order",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scratch buffers for field evaluation, so stepping does not allocate.
#[derive(Clone, Debug)]
pub struct Workspace {
    v: Vec<f64>,
    s: Vec<f64>,
}

impl Workspace {
    fn new(states: usize, intensities: usize) -> Self {
        Self {
            v: vec![0.0; states],
            s: vec![0.0; intensities],
        }
    }

    /// Payoffs from the most recent evaluation.
    pub fn payoffs(&self) -> &[f64] {
        &self.v
    }

    /// Intensities from the most recent diffusion evaluation.
    pub fn intensities(&self) -> &[f64] {
        &self.s
    }
}

#[derive(Clone, Debug)]
pub struct DynamicsField {
    kind: ModelKind,
    game: GameSpec,
    noise: Option<NoiseModel>,
    noise_dim: usize,
}

fn replicator_into(layout: &Layout, x: &[f64], v: &[f64], out: &mut [f64]) {
    for r in layout.blocks() {
        let mean: f64 = x[r.clone()].iter().zip(&v[r.clone()]).map(|(x, v)| x * v).sum();
        for a in r {
            out[a] = x[a] * (v[a] - mean);
        }
    }
}

fn per_strategy(game: &GameSpec, noise: &NoiseModel) -> Result<()> {
    noise.expect_kind(NoiseKind::PerStrategy)?;
    noise.check_layout(game.layout())
}

fn constant_per_strategy(game: &GameSpec, noise: &NoiseModel, what: &str) -> Result<()> {
    per_strategy(game, noise)?;
    if !noise.is_constant() {
        return Err(Error::Unsupported(format!(
            "{what} is only defined for state-independent intensities"
        )));
    }
    Ok(())
}

pub fn field_rd(game: &GameSpec) -> DynamicsField {
    DynamicsField {
        kind: ModelKind::Rd,
        game: game.clone(),
        noise: None,
        noise_dim: 0,
    }
}

fn with_noise(kind: ModelKind, game: &GameSpec, noise: &NoiseModel, noise_dim: usize) -> DynamicsField {
    DynamicsField {
        kind,
        game: game.clone(),
        noise: Some(noise.clone()),
        noise_dim,
    }
}

pub fn field_srd(game: &GameSpec, noise: &NoiseModel) -> Result<DynamicsField> {
    per_strategy(game, noise)?;
    Ok(with_noise(ModelKind::Srd, game, noise, game.layout().total()))
}

pub fn field_aggregate(game: &GameSpec, noise: &NoiseModel) -> Result<DynamicsField> {
    constant_per_strategy(game, noise, "the aggregate-shocks model")?;
    Ok(with_noise(
        ModelKind::AggregateShocks,
        game,
        noise,
        game.layout().total(),
    ))
}

pub fn field_explearn(game: &GameSpec, noise: &NoiseModel) -> Result<DynamicsField> {
    constant_per_strategy(game, noise, "the exponential-learning model")?;
    Ok(with_noise(ModelKind::ExpLearning, game, noise, game.layout().total()))
}

/// Itô form of the replicator dynamics with Stratonovich payoff shocks.
pub fn stratonovich_to_ito(game: &GameSpec, noise: &NoiseModel) -> Result<DynamicsField> {
    constant_per_strategy(game, noise, "the Stratonovich conversion")?;
    Ok(with_noise(
        ModelKind::StratonovichSrd,
        game,
        noise,
        game.layout().total(),
    ))
}

pub fn field_bimatrix(game: &GameSpec, noise: &NoiseModel) -> Result<DynamicsField> {
    let PayoffModel::Matrix { n, .. } = game.payoff_model() else {
        return Err(Error::kind("matrix game", game.payoff_model().name()));
    };
    noise.expect_kind(NoiseKind::MatrixEntry)?;
    noise.check_layout(game.layout())?;
    Ok(with_noise(ModelKind::BimatrixShocks, game, noise, n * n))
}

pub fn field_mutation(game: &GameSpec, noise: &NoiseModel) -> Result<DynamicsField> {
    noise.expect_kind(NoiseKind::Mutation)?;
    noise.check_layout(game.layout())?;
    let pairs = game.layout().pairs().len();
    Ok(with_noise(ModelKind::RandomMutations, game, noise, pairs))
}

/// `M_{αβ} = X_α(δ_{αβ} − X_β)σ_β`, local indices within one population.
fn srd_coefficient(x: &[f64], s: &[f64], a: usize, b: usize) -> f64 {
    let d = if a == b { 1.0 } else { 0.0 };
    x[a] * (d - x[b]) * s[b]
}

/// `∂M_{αβ}/∂X_γ` for constant σ.
fn srd_coefficient_derivative(x: &[f64], s: &[f64], a: usize, b: usize, g: usize) -> f64 {
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    s[b] * (delta(a, g) * (delta(a, b) - x[b]) - x[a] * delta(b, g))
}

impl DynamicsField {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    pub fn layout(&self) -> &Layout {
        self.game.layout()
    }

    /// Number of Wiener coordinates consumed per step.
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.layout().total(), self.noise.as_ref().map_or(0, NoiseModel::len))
    }

    pub fn drift_into(&self, x: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let layout = self.game.layout();
        self.game.payoffs_into(x, &mut ws.v);
        replicator_into(layout, x, &ws.v, out);
        let Some(noise) = &self.noise else { return };
        match self.kind {
            ModelKind::AggregateShocks => {
                noise.eval_into(x, &mut ws.s);
                let s = &ws.s;
                for r in layout.blocks() {
                    let q: f64 = r.clone().map(|b| s[b] * s[b] * x[b] * x[b]).sum();
                    for a in r {
                        out[a] -= x[a] * (s[a] * s[a] * x[a] - q);
                    }
                }
            }
            ModelKind::ExpLearning => {
                noise.eval_into(x, &mut ws.s);
                let s = &ws.s;
                for r in layout.blocks() {
                    let q: f64 = r.clone().map(|b| s[b] * s[b] * x[b] * (1.0 - 2.0 * x[b])).sum();
                    for a in r {
                        out[a] += 0.5 * x[a] * (s[a] * s[a] * (1.0 - 2.0 * x[a]) - q);
                    }
                }
            }
            ModelKind::StratonovichSrd => {
                // ½ Σ_{β,γ} ∂M_{αβ}/∂X_γ M_{γβ}, population by population.
                noise.eval_into(x, &mut ws.s);
                for r in layout.blocks() {
                    let (xk, sk) = (&x[r.clone()], &ws.s[r.clone()]);
                    let n = xk.len();
                    for a in 0..n {
                        let mut c = 0.0;
                        for b in 0..n {
                            for g in 0..n {
                                c += srd_coefficient_derivative(xk, sk, a, b, g) * srd_coefficient(xk, sk, g, b);
                            }
                        }
                        out[r.start + a] += 0.5 * c;
                    }
                }
            }
            _ => {}
        }
    }

    /// Writes the state increment produced by the Wiener increments `dw`.
    pub fn diffusion_into(&self, x: &[f64], dw: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        out.fill(0.0);
        let Some(noise) = &self.noise else { return };
        let layout = self.game.layout();
        noise.eval_into(x, &mut ws.s);
        let s = &ws.s;
        match self.kind {
            ModelKind::BimatrixShocks => {
                let n = x.len();
                let mut total = 0.0;
                for b in 0..n {
                    for g in 0..n {
                        total += s[b * n + g] * x[b] * x[g] * dw[b * n + g];
                    }
                }
                for a in 0..n {
                    let own: f64 = (0..n).map(|b| s[a * n + b] * x[b] * dw[a * n + b]).sum();
                    out[a] = x[a] * (own - total);
                }
            }
            ModelKind::RandomMutations => {
                // Pair (a, b) with a < b drives dW_{ba} = −dW_{ab}.
                for (p, (a, b)) in layout.pairs().into_iter().enumerate() {
                    let c = x[a] * x[b] * s[p] * dw[p];
                    out[a] += c;
                    out[b] -= c;
                }
            }
            _ => {
                for r in layout.blocks() {
                    let m: f64 = r.clone().map(|b| x[b] * s[b] * dw[b]).sum();
                    for a in r {
                        out[a] = x[a] * (s[a] * dw[a] - m);
                    }
                }
            }
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.drift_into(x, &mut self.workspace(), &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], dw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.diffusion_into(x, dw, &mut self.workspace(), &mut out);
        out
    }

    /// `matrix[i][j]` is the coefficient of `dW_j` in `dX_i`.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.noise_dim]; x.len()];
        let mut e = vec![0.0; self.noise_dim];
        let mut ws = self.workspace();
        let mut col = vec![0.0; x.len()];
        for j in 0..self.noise_dim {
            e[j] = 1.0;
            self.diffusion_into(x, &e, &mut ws, &mut col);
            for (row, c) in out.iter_mut().zip(&col) {
                row[j] = *c;
            }
            e[j] = 0.0;
        }
        out
    }

    /// Log-coordinate view of an SRD field.
    pub fn log_field(&self) -> Result<LogSrdField> {
        if self.kind != ModelKind::Srd {
            return Err(Error::kind(ModelKind::Srd, self.kind));
        }
        Ok(LogSrdField { inner: self.clone() })
    }
}

fn check_interior(x: &[f64]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "the model is only defined in the interior, found share {v}"
        )));
    }
    Ok(())
}

/// SRD written for `Y_α = ln X_α`.
#[derive(Clone, Debug)]
pub struct LogSrdField {
    inner: DynamicsField,
}

pub fn field_srd_log(game: &GameSpec, noise: &NoiseModel) -> Result<LogSrdField> {
    field_srd(game, noise)?.log_field()
}

impl LogSrdField {
    pub fn base(&self) -> &DynamicsField {
        &self.inner
    }

    pub fn workspace(&self) -> Workspace {
        self.inner.workspace()
    }

    pub fn check_interior(&self, x: &[f64]) -> Result<()> {
        check_interior(x)
    }

    /// `(v_α − ⟨v⟩) − ½[(1 − 2x_α)σ_α² + Σ_β σ_β² x_β²]`, evaluated at the share vector `x`.
    pub fn drift_into(&self, x: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let layout = self.inner.layout();
        self.inner.game.payoffs_into(x, &mut ws.v);
        let noise = self.inner.noise.as_ref().expect("SRD carries noise");
        noise.eval_into(x, &mut ws.s);
        let (v, s) = (&ws.v, &ws.s);
        for r in layout.blocks() {
            let mean: f64 = r.clone().map(|b| x[b] * v[b]).sum();
            let q: f64 = r.clone().map(|b| s[b] * s[b] * x[b] * x[b]).sum();
            for a in r {
                out[a] = v[a] - mean - 0.5 * ((1.0 - 2.0 * x[a]) * s[a] * s[a] + q);
            }
        }
    }

    /// `σ_α dW_α − Σ_β x_β σ_β dW_β`.
    pub fn diffusion_into(&self, x: &[f64], dw: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let noise = self.inner.noise.as_ref().expect("SRD carries noise");
        noise.eval_into(x, &mut ws.s);
        let s = &ws.s;
        for r in self.inner.layout().blocks() {
            let m: f64 = r.clone().map(|b| x[b] * s[b] * dw[b]).sum();
            for a in r {
                out[a] = s[a] * dw[a] - m;
            }
        }
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_interior(x)?;
        let mut out = vec![0.0; x.len()];
        self.drift_into(x, &mut self.workspace(), &mut out);
        Ok(out)
    }

    pub fn diffusion(&self, x: &[f64], dw: &[f64]) -> Result<Vec<f64>> {
        check_interior(x)?;
        let mut out = vec![0.0; x.len()];
        self.diffusion_into(x, dw, &mut self.workspace(), &mut out);
        Ok(out)
    }

    /// Shares from log coordinates (per-population softmax).
    pub fn recover(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; y.len()];
        softmax_into(self.inner.layout(), y, &mut x);
        x
    }
}

/// Per-population softmax, shifted by the block maximum.
pub fn softmax_into(layout: &Layout, y: &[f64], out: &mut [f64]) {
    for r in layout.blocks() {
        let m = y[r.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in r.clone() {
            out[i] = (y[i] - m).exp();
            sum += out[i];
        }
        for i in r {
            out[i] /= sum;
        }
    }
}

/// Position, velocity, cumulative payoff and cumulative noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
}

impl SecondOrderState {
    /// Rest state at `x`: zero velocity and nothing accumulated yet.
    pub fn at_rest(x: &[f64]) -> Self {
        let n = x.len();
        Self {
            x: x.to_vec(),
            v: vec![0.0; n],
            u: vec![0.0; n],
            s: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct SecondOrderField {
    game: GameSpec,
    noise: NoiseModel,
}

pub fn field_second_order(game: &GameSpec, noise: &NoiseModel) -> Result<SecondOrderField> {
    per_strategy(game, noise)?;
    Ok(SecondOrderField {
        game: game.clone(),
        noise: noise.clone(),
    })
}

impl SecondOrderField {
    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn layout(&self) -> &Layout {
        self.game.layout()
    }

    pub fn noise_dim(&self) -> usize {
        self.layout().total()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.layout().total(), self.noise.len())
    }

    pub fn check_interior(&self, x: &[f64]) -> Result<()> {
        check_interior(x)
    }

    /// Drift of the velocity:
    /// `x_α(v_α − ⟨v⟩) + V_α²/x_α − x_α Σ_β V_β²/x_β`.
    /// Leaves the payoffs `v(x)` in the workspace.
    pub fn velocity_drift_into(&self, x: &[f64], vel: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        let layout = self.game.layout();
        self.game.payoffs_into(x, &mut ws.v);
        replicator_into(layout, x, &ws.v, out);
        for r in layout.blocks() {
            let q: f64 = r.clone().map(|b| vel[b] * vel[b] / x[b]).sum();
            for a in r {
                out[a] += vel[a] * vel[a] / x[a] - x[a] * q;
            }
        }
    }

    /// Velocity increment `x_α(σ_α dW_α − Σ_β x_β σ_β dW_β)`. Leaves `σ(x)`
    /// in the workspace.
    pub fn velocity_diffusion_into(&self, x: &[f64], dw: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        self.noise.eval_into(x, &mut ws.s);
        let s = &ws.s;
        for r in self.game.layout().blocks() {
            let m: f64 = r.clone().map(|b| x[b] * s[b] * dw[b]).sum();
            for a in r {
                out[a] = x[a] * (s[a] * dw[a] - m);
            }
        }
    }

    /// Drift of the full state: `(V, dV, v(x), 0)`.
    pub fn drift(&self, st: &SecondOrderState) -> Result<SecondOrderState> {
        check_interior(&st.x)?;
        let n = st.x.len();
        let mut ws = self.workspace();
        let mut dv = vec![0.0; n];
        self.velocity_drift_into(&st.x, &st.v, &mut ws, &mut dv);
        Ok(SecondOrderState {
            x: st.v.clone(),
            v: dv,
            u: ws.v.clone(),
            s: vec![0.0; n],
        })
    }

    /// Increment of the full state produced by `dw`: `(0, dV, 0, σ dW)`.
    pub fn diffusion(&self, st: &SecondOrderState, dw: &[f64]) -> Result<SecondOrderState> {
        check_interior(&st.x)?;
        let n = st.x.len();
        let mut ws = self.workspace();
        let mut dv = vec![0.0; n];
        self.velocity_diffusion_into(&st.x, dw, &mut ws, &mut dv);
        Ok(SecondOrderState {
            x: vec![0.0; n],
            v: dv,
            u: vec![0.0; n],
            s: ws.s.iter().zip(dw).map(|(s, w)| s * w).collect(),
        })
    }
}

/// Any model the engine can integrate.
#[derive(Clone, Debug)]
pub enum Dynamics {
    FirstOrder(DynamicsField),
    SecondOrder(SecondOrderField),
}

impl Dynamics {
    pub fn kind(&self) -> ModelKind {
        match self {
            Dynamics::FirstOrder(f) => f.kind(),
            Dynamics::SecondOrder(_) => ModelKind::SecondOrder,
        }
    }

    pub fn layout(&self) -> &Layout {
        match self {
            Dynamics::FirstOrder(f) => f.layout(),
            Dynamics::SecondOrder(f) => f.layout(),
        }
    }

    pub fn game(&self) -> &GameSpec {
        match self {
            Dynamics::FirstOrder(f) => f.game(),
            Dynamics::SecondOrder(f) => f.game(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            Dynamics::FirstOrder(f) => f.noise_dim(),
            Dynamics::SecondOrder(f) => f.noise_dim(),
        }
    }
}

impl From<DynamicsField> for Dynamics {
    fn from(f: DynamicsField) -> Self {
        Dynamics::FirstOrder(f)
    }
}

impl From<SecondOrderField> for Dynamics {
    fn from(f: SecondOrderField) -> Self {
        Dynamics::SecondOrder(f)
    }
}

/// Builds the field of `kind` from a game and (for stochastic kinds) a noise model.
pub fn build_dynamics(kind: ModelKind, game: &GameSpec, noise: Option<&NoiseModel>) -> Result<Dynamics> {
    if kind == ModelKind::Rd {
        return Ok(field_rd(game).into());
    }
    let noise = noise.ok_or_else(|| Error::Config(format!("model {kind} needs a noise model")))?;
    Ok(match kind {
        ModelKind::Rd => unreachable!(),
        ModelKind::Srd => field_srd(game, noise)?.into(),
        ModelKind::AggregateShocks => field_aggregate(game, noise)?.into(),
        ModelKind::ExpLearning => field_explearn(game, noise)?.into(),
        ModelKind::StratonovichSrd => stratonovich_to_ito(game, noise)?.into(),
        ModelKind::BimatrixShocks => field_bimatrix(game, noise)?.into(),
        ModelKind::RandomMutations => field_mutation(game, noise)?.into(),
        ModelKind::SecondOrder => field_second_order(game, noise)?.into(),
    })
}

/// Constant payoffs, equal within every population.
pub fn is_pure_noise(game: &GameSpec) -> bool {
    match game.payoff_model() {
        PayoffModel::Constant(v) => game
            .layout()
            .blocks()
            .all(|r| v[r.clone()].iter().all(|&p| p == v[r.start])),
        _ => false,
    }
}

/// Exact solution of the pure-noise aggregate-shocks or exponential-learning
/// model at time `t`, given the Wiener path value `w = W(t)`.
pub fn closed_form_pure_noise(
    kind: ModelKind,
    game: &GameSpec,
    noise: &NoiseModel,
    x0: &[f64],
    t: f64,
    w: &[f64],
) -> Result<Vec<f64>> {
    if !is_pure_noise(game) {
        return Err(Error::Domain(
            "closed forms need constant payoffs, equal across strategies".into(),
        ));
    }
    constant_per_strategy(game, noise, "the pure-noise closed form")?;
    let layout = game.layout();
    layout.check_len("initial state", x0.len())?;
    layout.check_len("Wiener path", w.len())?;
    let s = noise.constant_values().expect("checked constant");
    let exponent = |a: usize| match kind {
        ModelKind::AggregateShocks => -0.5 * s[a] * s[a] * t + s[a] * w[a],
        _ => s[a] * w[a],
    };
    if !matches!(kind, ModelKind::AggregateShocks | ModelKind::ExpLearning) {
        return Err(Error::kind("aggregate-shocks or exp-learning", kind));
    }
    let mut out = vec![0.0; x0.len()];
    for r in layout.blocks() {
        // Shift exponents by their maximum before exponentiating.
        let m = r
            .clone()
            .filter(|&a| x0[a] > 0.0)
            .map(exponent)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for a in r.clone() {
            out[a] = x0[a] * (exponent(a) - m).exp();
            sum += out[a];
        }
        for a in r {
            out[a] /= sum;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: Vec<f64>) -> GameSpec {
        GameSpec::constant(vec![v]).unwrap()
    }

    fn sigma(s: Vec<f64>) -> NoiseModel {
        NoiseModel::per_strategy(vec![s]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn rd_examples() {
        let f = field_rd(&constant(vec![1.0, 0.0]));
        assert_eq!(f.drift(&[0.5, 0.5]), vec![0.25, -0.25]);
        assert_eq!(f.drift(&[1.0, 0.0]), vec![0.0, 0.0]);
        let f = field_rd(&constant(vec![2.0, 2.0]));
        assert_eq!(f.drift(&[0.3, 0.7]), vec![0.0, 0.0]);
    }

    #[test]
    fn srd_diffusion_rows() {
        let f = field_srd(&constant(vec![0.0, 0.0]), &sigma(vec![1.0, 1.0])).unwrap();
        let m = f.diffusion_matrix(&[0.5, 0.5]);
        assert_eq!(m[0], vec![0.25, -0.25]);
        assert_eq!(m[1], vec![-0.25, 0.25]);
        assert!(f.diffusion_matrix(&[0.0, 1.0]).iter().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn srd_rejects_other_noise_kinds() {
        let g = GameSpec::matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let n = NoiseModel::matrix_entry(vec![vec![1.0; 2]; 2]).unwrap();
        assert!(matches!(field_srd(&g, &n), Err(Error::Kind { .. })));
        assert!(matches!(
            field_bimatrix(&constant(vec![0.0, 0.0]), &n),
            Err(Error::Kind { .. })
        ));
    }

    #[test]
    fn log_field_examples() {
        let f = field_srd_log(&constant(vec![1.0, 0.0]), &sigma(vec![0.0, 0.0])).unwrap();
        assert_eq!(f.drift(&[0.5, 0.5]).unwrap(), vec![0.5, -0.5]);
        let f = field_srd_log(&constant(vec![3.0, 3.0]), &sigma(vec![1.0, 1.0])).unwrap();
        assert_eq!(f.drift(&[0.5, 0.5]).unwrap(), vec![-0.25, -0.25]);
        assert_eq!(f.diffusion(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), vec![0.5, -0.5]);
        assert_eq!(f.diffusion(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), vec![-0.5, 0.5]);
        assert!(matches!(f.drift(&[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn aggregate_and_explearn_corrections() {
        let g = constant(vec![0.0, 0.0]);
        let x = [0.75, 0.25];
        let agg = field_aggregate(&g, &sigma(vec![1.0, 0.0])).unwrap();
        assert_eq!(agg.drift(&x)[0], -0.140625);
        let exp = field_explearn(&g, &sigma(vec![1.0, 0.0])).unwrap();
        assert_eq!(exp.drift(&x)[0], -0.046875);
        let strat = stratonovich_to_ito(&g, &sigma(vec![1.0, 0.0])).unwrap();
        assert!((strat.drift(&x)[0] + 0.046875).abs() < 1e-15);
        for f in [&agg, &exp, &strat] {
            let f = DynamicsField {
                noise: Some(sigma(vec![1.0, 1.0])),
                ..(*f).clone()
            };
            assert_eq!(f.drift(&[0.5, 0.5]), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn constant_sigma_models_reject_state_dependent_noise() {
        let g = constant(vec![0.0, 0.0]);
        let s = NoiseModel::per_strategy_fn(g.layout(), "x", |x, o| o.copy_from_slice(x)).unwrap();
        assert!(matches!(field_aggregate(&g, &s), Err(Error::Unsupported(_))));
        assert!(matches!(field_explearn(&g, &s), Err(Error::Unsupported(_))));
        assert!(matches!(stratonovich_to_ito(&g, &s), Err(Error::Unsupported(_))));
        assert!(field_srd(&g, &s).is_ok());
    }

    #[test]
    fn bimatrix_coefficient() {
        let g = GameSpec::matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let n = NoiseModel::matrix_entry(vec![vec![1.0; 2]; 2]).unwrap();
        let f = field_bimatrix(&g, &n).unwrap();
        assert_eq!(f.noise_dim(), 4);
        let m = f.diffusion_matrix(&[0.5, 0.5]);
        assert_eq!(m[0][0], 0.125);
        assert!(f.diffusion_matrix(&[1.0, 0.0]).iter().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn mutation_coefficients() {
        let g = constant(vec![0.0, 0.0]);
        let n = NoiseModel::mutation(g.layout(), vec![1.0]).unwrap();
        let f = field_mutation(&g, &n).unwrap();
        assert_eq!(f.noise_dim(), 1);
        let m = f.diffusion_matrix(&[0.5, 0.5]);
        assert_eq!((m[0][0], m[1][0]), (0.25, -0.25));
    }

    #[test]
    fn second_order_examples() {
        let f = field_second_order(&constant(vec![1.0, 0.0]), &sigma(vec![1.0, 1.0])).unwrap();
        let d = f.drift(&SecondOrderState::at_rest(&[0.5, 0.5])).unwrap();
        assert_eq!(d.v, vec![0.25, -0.25]);
        assert_eq!(d.x, vec![0.0, 0.0]);
        let st = SecondOrderState {
            x: vec![0.2, 0.3, 0.5],
            v: vec![0.1, -0.3, 0.2],
            u: vec![0.0; 3],
            s: vec![0.0; 3],
        };
        let f = field_second_order(
            &GameSpec::matrix(vec![vec![0.0, 1.0, -1.0], vec![-1.0, 0.0, 1.0], vec![1.0, -1.0, 0.0]]).unwrap(),
            &sigma(vec![0.3, 0.2, 0.1]),
        )
        .unwrap();
        let d = f.drift(&st).unwrap();
        assert!(d.v.iter().sum::<f64>().abs() < 1e-12);
        assert!(matches!(
            f.drift(&SecondOrderState::at_rest(&[1.0, 0.0, 0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn closed_form_examples() {
        let g = constant(vec![1.0, 1.0]);
        let x = closed_form_pure_noise(
            ModelKind::AggregateShocks,
            &g,
            &sigma(vec![1.0, 0.0]),
            &[0.5, 0.5],
            2.0,
            &[0.0, 0.0],
        )
        .unwrap();
        let e = (-1f64).exp();
        close(&x, &[e / (1.0 + e), 1.0 / (1.0 + e)], 1e-15);
        let x = closed_form_pure_noise(
            ModelKind::ExpLearning,
            &g,
            &sigma(vec![1.0, 3.0]),
            &[0.2, 0.8],
            5.0,
            &[0.0, 0.0],
        )
        .unwrap();
        close(&x, &[0.2, 0.8], 1e-15);
        let err = closed_form_pure_noise(
            ModelKind::ExpLearning,
            &constant(vec![1.0, 0.0]),
            &sigma(vec![1.0, 1.0]),
            &[0.5, 0.5],
            1.0,
            &[0.0, 0.0],
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
