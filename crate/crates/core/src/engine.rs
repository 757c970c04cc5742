//! Euler–Maruyama integration on products of simplices.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    closed_form_pure_noise, softmax_into, Dynamics, DynamicsField, LogSrdField, ModelKind, Workspace,
};
use crate::error::{Error, Result};
use crate::rng::{IncrementSource, NoiseStream};
use crate::state::{sup_distance, Layout, PopulationState};

pub const DEFAULT_FLOOR: f64 = 1e-12;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_EXTINCTION_THRESHOLD: f64 = 1e-4;

/// A step whose drift moves the state by more than this is reported.
const DRIFT_WARNING: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Step the shares directly.
    #[default]
    EulerX,
    /// Step log shares and map back by softmax. Available for SRD and the
    /// second-order model (which then steps its integro-differential form).
    LogY,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

fn default_stride() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Steps between recorded samples; the final step is always recorded.
    #[serde(default = "default_stride")]
    pub record_stride: u64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            floor: DEFAULT_FLOOR,
            scheme: Scheme::EulerX,
            record_stride: 1,
        }
    }

    pub fn with_scheme(self, scheme: Scheme) -> Self {
        Self { scheme, ..self }
    }

    pub fn with_stride(self, record_stride: u64) -> Self {
        Self { record_stride, ..self }
    }

    pub fn with_floor(self, floor: f64) -> Self {
        Self { floor, ..self }
    }

    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must be at least dt = {}",
                self.horizon, self.dt
            )));
        }
        let cap = 1.0 / layout.max_size() as f64;
        if !(self.floor > 0.0 && self.floor < cap) {
            return Err(Error::Config(format!("floor {} must lie in (0, {cap})", self.floor)));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps needed to reach the horizon.
    pub fn steps(&self) -> u64 {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as u64
    }

    pub fn time(&self, step: u64) -> f64 {
        step as f64 * self.dt
    }

    /// The step nearest to time `t`.
    pub fn step_at(&self, t: f64) -> u64 {
        (t / self.dt).round().max(0.0) as u64
    }
}

/// Floor activations per coordinate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLog {
    pub activations: Vec<u64>,
    pub first_activation: Vec<Option<f64>>,
}

impl BoundaryLog {
    fn new(n: usize) -> Self {
        Self {
            activations: vec![0; n],
            first_activation: vec![None; n],
        }
    }

    pub fn total(&self) -> u64 {
        self.activations.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `|Σ_α x_α − 1|` over populations and steps.
    pub max_simplex_error: f64,
    /// Smallest share over steps, ignoring coordinates pinned at zero.
    pub min_share: f64,
    /// Largest `max_i |drift_i| · dt` seen.
    pub max_drift_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderRecord {
    pub velocity: Vec<Vec<f64>>,
    pub cumulative_payoff: Vec<Vec<f64>>,
    pub noise_integral: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: ModelKind,
    pub layout: Layout,
    pub config: IntegratorConfig,
    pub seed: Option<u64>,
    pub path: Option<u64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub second_order: Option<SecondOrderRecord>,
    /// Log shares, when the scheme tracks them.
    pub log_shares: Option<Vec<Vec<f64>>>,
    pub boundary: BoundaryLog,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("a trajectory records its initial state")
    }

    /// Writes the trajectory as CSV: `t`, the shares `x_k_a`, then for the
    /// second-order model `v_k_a`, `u_k_a`, `s_k_a`, then `y_k_a` when log
    /// shares were tracked. Floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let names: Vec<String> = self
            .layout
            .blocks()
            .enumerate()
            .flat_map(|(k, r)| (0..r.len()).map(move |a| format!("{k}_{a}")))
            .collect();
        let mut header = vec!["t".to_string()];
        let mut groups: Vec<(&str, &Vec<Vec<f64>>)> = vec![("x", &self.states)];
        if let Some(so) = &self.second_order {
            groups.push(("v", &so.velocity));
            groups.push(("u", &so.cumulative_payoff));
            groups.push(("s", &so.noise_integral));
        }
        if let Some(y) = &self.log_shares {
            groups.push(("y", y));
        }
        for (prefix, _) in &groups {
            header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut buf = ryu::Buffer::new();
        for (i, t) in self.times.iter().enumerate() {
            let mut line = String::from(buf.format(*t));
            for (_, rows) in &groups {
                for v in &rows[i] {
                    line.push(',');
                    line.push_str(buf.format(*v));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Mutable integration state of one path.
pub(crate) struct Stepper<'a> {
    dynamics: &'a Dynamics,
    cfg: &'a IntegratorConfig,
    log_field: Option<LogSrdField>,
    pub(crate) step: u64,
    pub(crate) x: Vec<f64>,
    pinned: Vec<bool>,
    /// Log coordinates (LogY schemes).
    y: Vec<f64>,
    pub(crate) velocity: Vec<f64>,
    pub(crate) u: Vec<f64>,
    pub(crate) s: Vec<f64>,
    pub(crate) dw: Vec<f64>,
    ws: Workspace,
    drift: Vec<f64>,
    diff: Vec<f64>,
    next: Vec<f64>,
    pub(crate) boundary: BoundaryLog,
    pub(crate) diagnostics: Diagnostics,
    warned: bool,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(dynamics: &'a Dynamics, x0: &PopulationState, cfg: &'a IntegratorConfig) -> Result<Self> {
        let layout = dynamics.layout();
        if x0.layout() != layout {
            return Err(Error::shape("initial state", layout.total(), x0.layout().total()));
        }
        cfg.validate(layout)?;
        let n = layout.total();
        let x = x0.as_slice().to_vec();
        let needs_interior = matches!(dynamics, Dynamics::SecondOrder(_)) || cfg.scheme == Scheme::LogY;
        if needs_interior && x.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain(format!(
                "{} with the {:?} scheme needs an interior initial state",
                dynamics.kind(),
                cfg.scheme
            )));
        }
        let log_field = match (dynamics, cfg.scheme) {
            (Dynamics::FirstOrder(f), Scheme::LogY) => Some(
                f.log_field()
                    .map_err(|_| Error::Unsupported(format!("the log scheme is not available for {}", f.kind())))?,
            ),
            _ => None,
        };
        let ws = match dynamics {
            Dynamics::FirstOrder(f) => f.workspace(),
            Dynamics::SecondOrder(f) => f.workspace(),
        };
        let min_share = x.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        Ok(Self {
            dynamics,
            cfg,
            log_field,
            step: 0,
            pinned: x.iter().map(|&v| v == 0.0).collect(),
            y: if cfg.scheme == Scheme::LogY {
                x.iter().map(|v| v.ln()).collect()
            } else {
                Vec::new()
            },
            x,
            velocity: vec![0.0; n],
            u: vec![0.0; n],
            s: vec![0.0; n],
            dw: vec![0.0; dynamics.noise_dim()],
            ws,
            drift: vec![0.0; n],
            diff: vec![0.0; n],
            next: vec![0.0; n],
            boundary: BoundaryLog::new(n),
            diagnostics: Diagnostics {
                max_simplex_error: 0.0,
                min_share,
                max_drift_step: 0.0,
            },
            warned: false,
        })
    }

    pub(crate) fn time(&self) -> f64 {
        self.cfg.time(self.step)
    }

    /// Log shares, when the scheme tracks them.
    pub(crate) fn log_shares(&self) -> Option<Vec<f64>> {
        if self.cfg.scheme != Scheme::LogY {
            return None;
        }
        let mut out = self.y.clone();
        for r in self.dynamics.layout().blocks() {
            let m = self.y[r.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + self.y[r.clone()].iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for i in r {
                out[i] = self.y[i] - lse;
            }
        }
        Some(out)
    }

    fn note_drift(&mut self, drift: &[f64]) {
        let m = drift.iter().fold(0.0f64, |a, d| a.max(d.abs())) * self.cfg.dt;
        self.diagnostics.max_drift_step = self.diagnostics.max_drift_step.max(m);
        if m > DRIFT_WARNING && !self.warned {
            self.warned = true;
            log::warn!(
                "{}: drift moves the state by {m:.3} in one step at t = {}; consider a smaller dt",
                self.dynamics.kind(),
                self.time()
            );
        }
    }

    fn non_finite(&self) -> Error {
        Error::NonFinite {
            step: self.step + 1,
            time: self.cfg.time(self.step + 1),
            last_finite: self.x.clone(),
        }
    }

    /// Clamps `self.next` into the floor, renormalises, and stores it in `self.x`.
    fn project(&mut self) {
        let floor = self.cfg.floor;
        let t = self.cfg.time(self.step + 1);
        let layout = self.dynamics.layout();
        for r in layout.blocks() {
            for i in r.clone() {
                if self.pinned[i] {
                    self.next[i] = 0.0;
                } else if self.next[i] < floor {
                    self.next[i] = floor;
                    self.boundary.activations[i] += 1;
                    self.boundary.first_activation[i].get_or_insert(t);
                } else if self.next[i] > 1.0 {
                    self.next[i] = 1.0;
                }
            }
            let sum: f64 = self.next[r.clone()].iter().sum();
            let mut largest = r.start;
            for i in r.clone() {
                self.next[i] /= sum;
                if !self.pinned[i] && self.next[i] < floor {
                    self.next[i] = floor;
                }
                if self.next[i] > self.next[largest] {
                    largest = i;
                }
            }
            let others: f64 = r.clone().filter(|&i| i != largest).map(|i| self.next[i]).sum();
            self.next[largest] = 1.0 - others;
            let err = (self.next[r.clone()].iter().sum::<f64>() - 1.0).abs();
            self.diagnostics.max_simplex_error = self.diagnostics.max_simplex_error.max(err);
            for i in r.filter(|&i| !self.pinned[i]) {
                self.diagnostics.min_share = self.diagnostics.min_share.min(self.next[i]);
            }
        }
        std::mem::swap(&mut self.x, &mut self.next);
    }

    pub(crate) fn advance<S: IncrementSource + ?Sized>(&mut self, noise: &mut S) -> Result<()> {
        let dt = self.cfg.dt;
        if !self.dw.is_empty() {
            noise.increments(self.step, dt, &mut self.dw);
        }
        let n = self.x.len();
        match (self.dynamics, self.cfg.scheme) {
            (Dynamics::FirstOrder(f), Scheme::EulerX) => {
                f.drift_into(&self.x, &mut self.ws, &mut self.drift);
                f.diffusion_into(&self.x, &self.dw, &mut self.ws, &mut self.diff);
                for i in 0..n {
                    self.next[i] = self.x[i] + self.drift[i] * dt + self.diff[i];
                }
                let drift = std::mem::take(&mut self.drift);
                self.note_drift(&drift);
                self.drift = drift;
                if self.next.iter().any(|v| !v.is_finite()) {
                    return Err(self.non_finite());
                }
                self.project();
            }
            (Dynamics::FirstOrder(_), Scheme::LogY) => {
                let lf = self.log_field.as_ref().expect("log field prepared");
                lf.drift_into(&self.x, &mut self.ws, &mut self.drift);
                lf.diffusion_into(&self.x, &self.dw, &mut self.ws, &mut self.diff);
                for i in 0..n {
                    self.y[i] += self.drift[i] * dt + self.diff[i];
                }
                let drift = std::mem::take(&mut self.drift);
                self.note_drift(&drift);
                self.drift = drift;
                if self.y.iter().any(|v| !v.is_finite()) {
                    return Err(self.non_finite());
                }
                softmax_into(self.dynamics.layout(), &self.y, &mut self.next);
                self.project();
                for i in 0..n {
                    self.y[i] = self.x[i].ln();
                }
            }
            (Dynamics::SecondOrder(f), Scheme::EulerX) => {
                f.velocity_drift_into(&self.x, &self.velocity, &mut self.ws, &mut self.drift);
                for i in 0..n {
                    self.u[i] += self.ws.payoffs()[i] * dt;
                }
                f.velocity_diffusion_into(&self.x, &self.dw, &mut self.ws, &mut self.diff);
                for i in 0..n {
                    self.s[i] += self.ws.intensities()[i] * self.dw[i];
                    self.next[i] = self.x[i] + self.velocity[i] * dt;
                    self.velocity[i] += self.drift[i] * dt + self.diff[i];
                }
                let drift = std::mem::take(&mut self.drift);
                self.note_drift(&drift);
                self.drift = drift;
                if self.next.iter().chain(&self.velocity).any(|v| !v.is_finite()) {
                    return Err(self.non_finite());
                }
                self.project();
                // Keep Σ_α V_α = 0 exact per population.
                for r in self.dynamics.layout().blocks() {
                    let mean = self.velocity[r.clone()].iter().sum::<f64>() / r.len() as f64;
                    for i in r {
                        self.velocity[i] -= mean;
                    }
                }
            }
            (Dynamics::SecondOrder(f), Scheme::LogY) => {
                // Y_α = ∫(U_α + S_α), x = softmax(Y).
                let layout = self.dynamics.layout();
                f.game().payoffs_into(&self.x, &mut self.drift);
                f.noise().eval_into(&self.x, &mut self.diff);
                for i in 0..n {
                    self.y[i] += (self.u[i] + self.s[i]) * dt;
                    self.u[i] += self.drift[i] * dt;
                    self.s[i] += self.diff[i] * self.dw[i];
                }
                if self.y.iter().chain(&self.u).chain(&self.s).any(|v| !v.is_finite()) {
                    return Err(self.non_finite());
                }
                for r in layout.blocks() {
                    let m = self.y[r.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    for i in r {
                        self.y[i] -= m;
                    }
                }
                softmax_into(layout, &self.y, &mut self.next);
                for r in layout.blocks() {
                    let mean: f64 = r.clone().map(|b| self.next[b] * (self.u[b] + self.s[b])).sum();
                    for a in r {
                        self.velocity[a] = self.next[a] * (self.u[a] + self.s[a] - mean);
                    }
                }
                let vel = std::mem::take(&mut self.velocity);
                self.note_drift(&vel);
                self.velocity = vel;
                self.project();
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Drives a path to the horizon, calling `visit` at step 0 and after every step.
pub(crate) fn run<S, F>(
    dynamics: &Dynamics,
    x0: &PopulationState,
    cfg: &IntegratorConfig,
    noise: &mut S,
    mut visit: F,
) -> Result<(BoundaryLog, Diagnostics)>
where
    S: IncrementSource + ?Sized,
    F: FnMut(&Stepper<'_>),
{
    if let Dynamics::SecondOrder(_) = dynamics {
        if cfg.scheme == Scheme::EulerX {
            // The autonomous form is only defined in the interior.
            if x0.as_slice().iter().any(|&v| v <= 0.0) {
                return Err(Error::Domain(
                    "second-order dynamics need an interior initial state".into(),
                ));
            }
        }
    }
    let mut stepper = Stepper::new(dynamics, x0, cfg)?;
    visit(&stepper);
    for _ in 0..cfg.steps() {
        stepper.advance(noise)?;
        visit(&stepper);
    }
    Ok((stepper.boundary, stepper.diagnostics))
}

/// Collects the recorded samples of a path.
struct Recorder {
    stride: u64,
    last: u64,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    second_order: Option<SecondOrderRecord>,
    logs: Option<Vec<Vec<f64>>>,
}

impl Recorder {
    fn new(dynamics: &Dynamics, cfg: &IntegratorConfig) -> Self {
        Self {
            stride: cfg.record_stride,
            last: cfg.steps(),
            times: Vec::new(),
            states: Vec::new(),
            second_order: matches!(dynamics, Dynamics::SecondOrder(_)).then(|| SecondOrderRecord {
                velocity: Vec::new(),
                cumulative_payoff: Vec::new(),
                noise_integral: Vec::new(),
            }),
            logs: (cfg.scheme == Scheme::LogY).then(Vec::new),
        }
    }

    fn visit(&mut self, st: &Stepper<'_>) {
        if !st.step.is_multiple_of(self.stride) && st.step != self.last {
            return;
        }
        self.times.push(st.time());
        self.states.push(st.x.clone());
        if let Some(so) = &mut self.second_order {
            so.velocity.push(st.velocity.clone());
            so.cumulative_payoff.push(st.u.clone());
            so.noise_integral.push(st.s.clone());
        }
        if let (Some(logs), Some(y)) = (&mut self.logs, st.log_shares()) {
            logs.push(y);
        }
    }

    fn finish(
        self,
        dynamics: &Dynamics,
        cfg: &IntegratorConfig,
        provenance: Option<(u64, u64)>,
        boundary: BoundaryLog,
        diagnostics: Diagnostics,
    ) -> Trajectory {
        let (seed, path) = provenance.unzip();
        Trajectory {
            kind: dynamics.kind(),
            layout: dynamics.layout().clone(),
            config: cfg.clone(),
            seed,
            path,
            times: self.times,
            states: self.states,
            second_order: self.second_order,
            log_shares: self.logs,
            boundary,
            diagnostics,
        }
    }
}

/// Integrates one path, recording every `record_stride`-th step and the last.
pub fn integrate<S: IncrementSource + ?Sized>(
    dynamics: &Dynamics,
    x0: &PopulationState,
    cfg: &IntegratorConfig,
    noise: &mut S,
) -> Result<Trajectory> {
    let mut rec = Recorder::new(dynamics, cfg);
    let (boundary, diagnostics) = run(dynamics, x0, cfg, noise, |st| rec.visit(st))?;
    Ok(rec.finish(dynamics, cfg, noise.provenance(), boundary, diagnostics))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub max: f64,
    pub rms: f64,
    pub steps: u64,
}

/// Integrates a pure-noise aggregate-shocks or exponential-learning field and
/// compares every step with the closed-form solution driven by the same
/// Wiener increments.
pub fn pathwise_deviation<S: IncrementSource + ?Sized>(
    field: &DynamicsField,
    x0: &PopulationState,
    cfg: &IntegratorConfig,
    noise: &mut S,
) -> Result<DeviationReport> {
    let model = field
        .noise()
        .ok_or_else(|| Error::kind("pure-noise model", field.kind()))?;
    // Fails early on a game or kind without a closed form.
    closed_form_pure_noise(
        field.kind(),
        field.game(),
        model,
        x0.as_slice(),
        0.0,
        &vec![0.0; x0.as_slice().len()],
    )?;
    let dynamics = Dynamics::FirstOrder(field.clone());
    let mut w = vec![0.0; field.noise_dim()];
    let (mut max, mut sq, mut count) = (0.0f64, 0.0, 0u64);
    let mut err = None;
    run(&dynamics, x0, cfg, noise, |st| {
        if st.step == 0 || err.is_some() {
            return;
        }
        for (w, d) in w.iter_mut().zip(&st.dw) {
            *w += d;
        }
        match closed_form_pure_noise(field.kind(), field.game(), model, x0.as_slice(), st.time(), &w) {
            Ok(exact) => {
                for (a, b) in st.x.iter().zip(&exact) {
                    let d = (a - b).abs();
                    max = max.max(d);
                    sq += d * d;
                    count += 1;
                }
            }
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(DeviationReport {
        max,
        rms: (sq / count.max(1) as f64).sqrt(),
        steps: cfg.steps(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Times at which every path's state is kept.
    pub observe_times: Vec<f64>,
    /// Track the largest sup-distance to this state over every step.
    pub reference: Option<Vec<f64>>,
    pub keep_trajectories: bool,
    pub extinction_threshold: f64,
    /// Drift added to the first Wiener coordinate (negative controls only).
    pub noise_bias: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            observe_times: Vec::new(),
            reference: None,
            keep_trajectories: false,
            extinction_threshold: DEFAULT_EXTINCTION_THRESHOLD,
            noise_bias: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: u64,
    pub terminal: Vec<f64>,
    pub terminal_log_shares: Option<Vec<f64>>,
    /// States at the observation times, in order.
    pub snapshots: Vec<Vec<f64>>,
    pub max_reference_distance: Option<f64>,
    pub floor_activations: u64,
    pub max_simplex_error: f64,
    pub min_share: f64,
    /// Terminal share below the extinction threshold, per strategy.
    pub extinct: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub kind: ModelKind,
    pub layout: Layout,
    pub seed: u64,
    pub config: IntegratorConfig,
    pub x0: Vec<f64>,
    pub observe_times: Vec<f64>,
    pub extinction_threshold: f64,
    pub paths: Vec<PathSummary>,
    pub trajectories: Option<Vec<Trajectory>>,
}

impl EnsembleResult {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Terminal share of flat strategy index `i` on every path.
    pub fn terminal_shares(&self, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.terminal[i]).collect()
    }

    /// Share of `i` at observation `k` on every path.
    pub fn snapshot_shares(&self, k: usize, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.snapshots[k][i]).collect()
    }

    pub fn mean_terminal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.layout.total()];
        for p in &self.paths {
            for (a, b) in m.iter_mut().zip(&p.terminal) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.paths.len() as f64);
        m
    }

    pub fn max_simplex_error(&self) -> f64 {
        self.paths.iter().map(|p| p.max_simplex_error).fold(0.0, f64::max)
    }

    pub fn min_share(&self) -> f64 {
        self.paths.iter().map(|p| p.min_share).fold(f64::INFINITY, f64::min)
    }
}

fn simulate_path(
    dynamics: &Dynamics,
    x0: &PopulationState,
    cfg: &IntegratorConfig,
    seed: u64,
    path: u64,
    opts: &EnsembleOptions,
    observe_steps: &[u64],
) -> Result<(PathSummary, Option<Trajectory>)> {
    let mut noise = NoiseStream::new(seed, path).with_bias(opts.noise_bias);
    let mut snapshots = Vec::with_capacity(observe_steps.len());
    let mut max_ref: Option<f64> = None;
    let mut terminal = Vec::new();
    let mut terminal_log = None;
    let last = cfg.steps();
    let mut recorder = opts.keep_trajectories.then(|| Recorder::new(dynamics, cfg));
    let (boundary, diagnostics) = run(dynamics, x0, cfg, &mut noise, |st| {
        while snapshots.len() < observe_steps.len() && observe_steps[snapshots.len()] == st.step {
            snapshots.push(st.x.clone());
        }
        if let Some(r) = &opts.reference {
            let d = sup_distance(&st.x, r);
            max_ref = Some(max_ref.map_or(d, |m: f64| m.max(d)));
        }
        if st.step == last {
            terminal = st.x.clone();
            terminal_log = st.log_shares();
        }
        if let Some(rec) = &mut recorder {
            rec.visit(st);
        }
    })?;
    let trajectory =
        recorder.map(|rec| rec.finish(dynamics, cfg, noise.provenance(), boundary.clone(), diagnostics.clone()));
    let extinct = terminal.iter().map(|&v| v < opts.extinction_threshold).collect();
    Ok((
        PathSummary {
            path,
            terminal,
            terminal_log_shares: terminal_log,
            snapshots,
            max_reference_distance: max_ref,
            floor_activations: boundary.total(),
            max_simplex_error: diagnostics.max_simplex_error,
            min_share: diagnostics.min_share,
            extinct,
        },
        trajectory,
    ))
}

/// Runs `n_paths` independent paths, path `i` driven by `NoiseStream(seed, i)`.
/// The result does not depend on the number of worker threads.
pub fn simulate_ensemble(
    dynamics: &Dynamics,
    x0: &PopulationState,
    cfg: &IntegratorConfig,
    seed: u64,
    n_paths: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleResult> {
    if n_paths == 0 {
        return Err(Error::Config("an ensemble needs at least one path".into()));
    }
    cfg.validate(dynamics.layout())?;
    if let Some(r) = &opts.reference {
        dynamics.layout().check_len("reference state", r.len())?;
    }
    let last = cfg.steps();
    let mut observe_steps = Vec::with_capacity(opts.observe_times.len());
    for &t in &opts.observe_times {
        let s = cfg.step_at(t);
        if !(t >= 0.0) || s > last {
            return Err(Error::Config(format!(
                "observation time {t} lies outside [0, {}]",
                cfg.horizon
            )));
        }
        if observe_steps.last().is_some_and(|&p| p > s) {
            return Err(Error::Config("observation times must be increasing".into()));
        }
        observe_steps.push(s);
    }
    let results: Vec<(PathSummary, Option<Trajectory>)> = (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_path(dynamics, x0, cfg, seed, i, opts, &observe_steps))
        .collect::<Result<_>>()?;
    let (paths, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(EnsembleResult {
        kind: dynamics.kind(),
        layout: dynamics.layout().clone(),
        seed,
        config: cfg.clone(),
        x0: x0.as_slice().to_vec(),
        observe_times: opts.observe_times.clone(),
        extinction_threshold: opts.extinction_threshold,
        paths,
        trajectories: opts
            .keep_trajectories
            .then(|| trajectories.into_iter().map(|t| t.expect("kept")).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{field_rd, field_srd};
    use crate::game::GameSpec;
    use crate::noise::NoiseModel;

    fn st(v: Vec<f64>) -> PopulationState {
        PopulationState::from_blocks(vec![v]).unwrap()
    }

    #[test]
    fn config_validation() {
        let l = Layout::single(2).unwrap();
        assert!(IntegratorConfig::new(1e-3, 1.0).validate(&l).is_ok());
        assert!(IntegratorConfig::new(0.0, 1.0).validate(&l).is_err());
        assert!(IntegratorConfig::new(1e-3, 1e-4).validate(&l).is_err());
        assert!(IntegratorConfig::new(1e-3, 1.0).with_floor(0.5).validate(&l).is_err());
        assert_eq!(IntegratorConfig::new(1e-3, 10.0).steps(), 10_000);
        assert_eq!(IntegratorConfig::new(0.3, 1.0).steps(), 4);
    }

    #[test]
    fn rd_matches_logistic_solution() {
        let g = GameSpec::constant(vec![vec![1.0, 0.0]]).unwrap();
        let d: Dynamics = field_rd(&g).into();
        let cfg = IntegratorConfig::new(1e-3, 10.0).with_stride(1000);
        let t = integrate(&d, &st(vec![0.5, 0.5]), &cfg, &mut NoiseStream::new(0, 0)).unwrap();
        let e = 10f64.exp();
        assert!((t.terminal()[0] - e / (e + 1.0)).abs() < 1e-3);
        assert_eq!(t.times.len(), 11);
        assert_eq!(*t.times.last().unwrap(), 10.0);
    }

    #[test]
    fn zero_noise_srd_equals_rd() {
        let g = GameSpec::matrix(vec![vec![0.0, 2.0], vec![1.0, 0.5]]).unwrap();
        let zero = NoiseModel::per_strategy(vec![vec![0.0, 0.0]]).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 5.0);
        let x0 = st(vec![0.2, 0.8]);
        let a = integrate(&field_rd(&g).into(), &x0, &cfg, &mut NoiseStream::new(1, 0)).unwrap();
        let b = integrate(
            &field_srd(&g, &zero).unwrap().into(),
            &x0,
            &cfg,
            &mut NoiseStream::new(1, 0),
        )
        .unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn vertex_start_is_a_rest_point() {
        let g = GameSpec::constant(vec![vec![0.0, 1.0]]).unwrap();
        let n = NoiseModel::per_strategy(vec![vec![1.0, 1.0]]).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 2.0);
        let x0 = st(vec![1.0, 0.0]);
        let t = integrate(
            &field_srd(&g, &n).unwrap().into(),
            &x0,
            &cfg,
            &mut NoiseStream::new(3, 0),
        )
        .unwrap();
        assert!(t.states.iter().all(|s| s == &vec![1.0, 0.0]));
        assert_eq!(t.boundary.total(), 0);
    }

    #[test]
    fn log_scheme_rejected_for_other_models() {
        let g = GameSpec::constant(vec![vec![0.0, 1.0]]).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 1.0).with_scheme(Scheme::LogY);
        let err = integrate(
            &field_rd(&g).into(),
            &st(vec![0.5, 0.5]),
            &cfg,
            &mut NoiseStream::new(0, 0),
        );
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn ensemble_of_one_equals_integrate() {
        let g = GameSpec::constant(vec![vec![0.0, 0.0]]).unwrap();
        let n = NoiseModel::per_strategy(vec![vec![1.0, 1.0]]).unwrap();
        let d: Dynamics = field_srd(&g, &n).unwrap().into();
        let cfg = IntegratorConfig::new(1e-2, 3.0);
        let x0 = st(vec![0.3, 0.7]);
        let e = simulate_ensemble(&d, &x0, &cfg, 9, 1, &EnsembleOptions::default()).unwrap();
        let t = integrate(&d, &x0, &cfg, &mut NoiseStream::new(9, 0)).unwrap();
        assert_eq!(e.paths[0].terminal, t.terminal());
    }

    #[test]
    fn csv_layout() {
        let g = GameSpec::constant(vec![vec![1.0, 0.0]]).unwrap();
        let cfg = IntegratorConfig::new(0.5, 1.0);
        let t = integrate(
            &field_rd(&g).into(),
            &st(vec![0.5, 0.5]),
            &cfg,
            &mut NoiseStream::new(0, 0),
        )
        .unwrap();
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_0_0,x_0_1");
        assert_eq!(lines[1], "0.0,0.5,0.5");
        assert_eq!(lines.len(), 4);
    }
}
