//! Population games: payoff models, dominance and equilibrium classification.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{probe_states, Layout, MixedStrategy, PopulationState};

/// Tolerance applied to every payoff inequality.
pub const EQ_TOL: f64 = 1e-9;

/// Number of quasi-random states probed when a payoff model cannot be
/// analysed exactly.
pub const DEFAULT_PROBES: usize = 1000;

pub type PayoffFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Caller-supplied payoff evaluator. Analyses over such payoffs are
/// approximate (sampling based).
#[derive(Clone)]
pub struct CustomPayoff {
    label: String,
    eval: Arc<PayoffFn>,
}

impl CustomPayoff {
    pub fn new(label: impl Into<String>, eval: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for CustomPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPayoff")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

/// Random matching in an N-population normal form game. `tables[k]` holds
/// the payoff to population `k` at every pure profile, last population
/// varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multilinear {
    tables: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

impl Multilinear {
    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub(crate) fn tables_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.tables
    }
}

#[derive(Clone, Debug)]
pub enum PayoffModel {
    /// State-independent payoffs, one per strategy (flat).
    Constant(Vec<f64>),
    /// Single population symmetric random matching, `v = V x`, row-major `V`.
    Matrix {
        n: usize,
        entries: Vec<f64>,
    },
    Multilinear(Multilinear),
    Custom(CustomPayoff),
}

impl PayoffModel {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffModel::Constant(_) => "constant",
            PayoffModel::Matrix { .. } => "matrix",
            PayoffModel::Multilinear(_) => "multilinear",
            PayoffModel::Custom(_) => "custom",
        }
    }

    /// Payoff differences are multilinear in the state, so extrema over
    /// the state space are attained at vertices.
    pub fn is_multilinear(&self) -> bool {
        !matches!(self, PayoffModel::Custom(_))
    }
}

#[derive(Clone, Debug)]
pub struct GameSpec {
    populations: Vec<String>,
    strategies: Vec<Vec<String>>,
    layout: Layout,
    payoff: PayoffModel,
}

fn default_names(layout: &Layout) -> (Vec<String>, Vec<Vec<String>>) {
    let pops = (0..layout.populations()).map(|k| format!("p{k}")).collect();
    let strats = layout
        .sizes()
        .iter()
        .map(|&n| (0..n).map(|a| format!("s{a}")).collect())
        .collect();
    (pops, strats)
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{what} contains a non-finite payoff")));
    }
    Ok(())
}

impl GameSpec {
    fn build(layout: Layout, payoff: PayoffModel) -> Result<Self> {
        let (populations, strategies) = default_names(&layout);
        let game = Self {
            populations,
            strategies,
            layout,
            payoff,
        };
        if let PayoffModel::Custom(_) = game.payoff {
            // Spot-check determinism and finiteness at the vertices.
            let mut out = vec![0.0; game.layout.total()];
            for x in probe_states(&game.layout, 0) {
                game.payoffs_into(&x, &mut out);
                check_finite("custom payoff", &out)?;
            }
        }
        Ok(game)
    }

    /// Constant payoffs, one vector per population.
    pub fn constant(payoffs: Vec<Vec<f64>>) -> Result<Self> {
        let layout = Layout::new(payoffs.iter().map(Vec::len).collect())?;
        let flat = payoffs.concat();
        check_finite("constant game", &flat)?;
        Self::build(layout, PayoffModel::Constant(flat))
    }

    /// Symmetric single-population random matching with payoff matrix `rows`.
    pub fn matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::shape("payoff matrix row", n, r.len()));
        }
        let layout = Layout::single(n)?;
        let entries = rows.concat();
        check_finite("payoff matrix", &entries)?;
        Self::build(layout, PayoffModel::Matrix { n, entries })
    }

    /// Multi-population random matching. `tables[k]` lists population `k`'s
    /// payoff at each pure profile (last population fastest).
    pub fn multilinear(sizes: Vec<usize>, tables: Vec<Vec<f64>>) -> Result<Self> {
        let layout = Layout::new(sizes)?;
        if tables.len() != layout.populations() {
            return Err(Error::shape("payoff tables", layout.populations(), tables.len()));
        }
        let count = layout.profile_count();
        for t in &tables {
            if t.len() != count {
                return Err(Error::shape("payoff table", count, t.len()));
            }
            check_finite("payoff table", t)?;
        }
        let mut strides = vec![1; layout.populations()];
        for k in (0..layout.populations().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * layout.size(k + 1);
        }
        Self::build(layout, PayoffModel::Multilinear(Multilinear { tables, strides }))
    }

    /// Two-population game with row payoffs `a` and column payoffs `b`.
    pub fn bimatrix(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let rows = a.len();
        let cols = a.first().map_or(0, Vec::len);
        if b.len() != rows || a.iter().chain(&b).any(|r| r.len() != cols) {
            return Err(Error::Domain("bimatrix payoffs must share one shape".into()));
        }
        Self::multilinear(vec![rows, cols], vec![a.concat(), b.concat()])
    }

    pub fn custom(
        sizes: Vec<usize>,
        label: impl Into<String>,
        eval: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        let layout = Layout::new(sizes)?;
        Self::build(layout, PayoffModel::Custom(CustomPayoff::new(label, eval)))
    }

    pub(crate) fn with_payoff(&self, payoff: PayoffModel) -> Self {
        Self { payoff, ..self.clone() }
    }

    pub fn with_names(mut self, populations: Vec<String>, strategies: Vec<Vec<String>>) -> Result<Self> {
        if populations.len() != self.layout.populations() {
            return Err(Error::shape(
                "population names",
                self.layout.populations(),
                populations.len(),
            ));
        }
        if strategies.len() != self.layout.populations() {
            return Err(Error::shape(
                "strategy name lists",
                self.layout.populations(),
                strategies.len(),
            ));
        }
        for (k, names) in strategies.iter().enumerate() {
            if names.len() != self.layout.size(k) {
                return Err(Error::shape("strategy names", self.layout.size(k), names.len()));
            }
        }
        self.populations = populations;
        self.strategies = strategies;
        Ok(self)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn payoff_model(&self) -> &PayoffModel {
        &self.payoff
    }

    pub fn population_names(&self) -> &[String] {
        &self.populations
    }

    pub fn strategy_names(&self) -> &[Vec<String>] {
        &self.strategies
    }

    /// Analyses over this game are sampling based rather than exact.
    pub fn is_approximate(&self) -> bool {
        matches!(self.payoff, PayoffModel::Custom(_))
    }

    /// Writes `v_{kα}(x)` for every strategy into `out` (flat).
    pub fn payoffs_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.payoff {
            PayoffModel::Constant(v) => out.copy_from_slice(v),
            PayoffModel::Matrix { n, entries } => {
                for (a, o) in out.iter_mut().enumerate() {
                    let row = &entries[a * n..(a + 1) * n];
                    *o = row.iter().zip(x).map(|(v, xb)| v * xb).sum();
                }
            }
            PayoffModel::Multilinear(m) => self.eval_multilinear(m, x, out),
            PayoffModel::Custom(c) => (c.eval)(x, out),
        }
    }

    fn eval_multilinear(&self, m: &Multilinear, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let npop = self.layout.populations();
        let strategy = |idx: usize, j: usize| (idx / m.strides[j]) % self.layout.size(j);
        for idx in 0..self.layout.profile_count() {
            for k in 0..npop {
                let mut w = 1.0;
                for j in (0..npop).filter(|&j| j != k) {
                    w *= x[self.layout.offset(j) + strategy(idx, j)];
                }
                out[self.layout.offset(k) + strategy(idx, k)] += m.tables[k][idx] * w;
            }
        }
    }

    pub fn payoffs(&self, x: &PopulationState) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let mut out = vec![0.0; self.layout.total()];
        self.payoffs_into(x.as_slice(), &mut out);
        Ok(out)
    }

    fn check_state(&self, x: &PopulationState) -> Result<()> {
        if x.layout() != &self.layout {
            return Err(Error::shape("state", self.layout.total(), x.layout().total()));
        }
        Ok(())
    }

    /// Population `k`'s mean payoff `⟨v_k(x) | x_k⟩`.
    pub fn average_payoff(&self, x: &PopulationState, k: usize) -> Result<f64> {
        if k >= self.layout.populations() {
            return Err(Error::Domain(format!("population {k} does not exist")));
        }
        let v = self.payoffs(x)?;
        let r = self.layout.range(k);
        Ok(v[r.clone()].iter().zip(&x.as_slice()[r]).map(|(v, x)| v * x).sum())
    }

    pub fn check_dominance(&self, p: &MixedStrategy, q: &MixedStrategy) -> Result<Dominance> {
        Ok(DominanceCheck::default().run(self, p, q)?.verdict)
    }

    pub fn classify_equilibrium(&self, x: &PopulationState) -> Result<Equilibrium> {
        self.classify_equilibrium_with(x, EQ_TOL)
    }

    pub fn classify_equilibrium_with(&self, x: &PopulationState, tol: f64) -> Result<Equilibrium> {
        let v = self.payoffs(x)?;
        let xs = x.as_slice();
        let mut strict = true;
        for r in self.layout.blocks() {
            let best = v[r.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let support: Vec<usize> = r.clone().filter(|&i| xs[i] > 0.0).collect();
            if support.iter().any(|&i| v[i] < best - tol) {
                return Ok(Equilibrium::NotNash);
            }
            if support.len() != 1 {
                strict = false;
                continue;
            }
            let a = support[0];
            if r.clone().any(|b| b != a && v[a] <= v[b] + tol) {
                strict = false;
            }
        }
        Ok(if strict {
            Equilibrium::StrictNash
        } else {
            Equilibrium::Nash
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dominance {
    Dominated,
    NotDominated,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Equilibrium {
    NotNash,
    Nash,
    StrictNash,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub verdict: Dominance,
    /// Smallest observed `⟨v(x) | q - p⟩` over the probed states.
    pub min_margin: f64,
    /// Vertex enumeration (true) or sampling (false).
    pub exact: bool,
    pub states_checked: usize,
}

/// Decides whether `p` is dominated by `q` (eq. "always inferior").
#[derive(Clone, Copy, Debug)]
pub struct DominanceCheck {
    pub tolerance: f64,
    pub probes: usize,
}

impl Default for DominanceCheck {
    fn default() -> Self {
        Self {
            tolerance: EQ_TOL,
            probes: DEFAULT_PROBES,
        }
    }
}

impl DominanceCheck {
    pub fn run(&self, game: &GameSpec, p: &MixedStrategy, q: &MixedStrategy) -> Result<DominanceReport> {
        if p.population() != q.population() {
            return Err(Error::Domain(format!(
                "strategies belong to populations {} and {}",
                p.population(),
                q.population()
            )));
        }
        p.check_against(game.layout())?;
        q.check_against(game.layout())?;
        let exact = game.payoff_model().is_multilinear();
        let states = probe_states(game.layout(), if exact { 0 } else { self.probes });
        let r = game.layout().range(p.population());
        let mut v = vec![0.0; game.layout().total()];
        let mut min_margin = f64::INFINITY;
        for x in &states {
            game.payoffs_into(x, &mut v);
            let margin: f64 = v[r.clone()]
                .iter()
                .zip(p.probs().iter().zip(q.probs()))
                .map(|(v, (pa, qa))| v * (qa - pa))
                .sum();
            min_margin = min_margin.min(margin);
        }
        let verdict = if min_margin > self.tolerance {
            Dominance::Dominated
        } else if exact || min_margin < -self.tolerance {
            Dominance::NotDominated
        } else {
            Dominance::Unknown
        };
        Ok(DominanceReport {
            verdict,
            min_margin,
            exact,
            states_checked: states.len(),
        })
    }
}
