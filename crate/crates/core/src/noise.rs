//! Payoff shock intensities.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{probe_states, Layout};

pub type IntensityFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A vector of nonnegative intensities, constant or a function of the state.
#[derive(Clone)]
pub enum Intensities {
    Constant(Vec<f64>),
    StateDependent {
        len: usize,
        label: String,
        f: Arc<IntensityFn>,
    },
}

impl fmt::Debug for Intensities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Intensities::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Intensities::StateDependent { len, label, .. } => f
                .debug_struct("StateDependent")
                .field("len", len)
                .field("label", label)
                .finish_non_exhaustive(),
        }
    }
}

impl Intensities {
    pub fn len(&self) -> usize {
        match self {
            Intensities::Constant(v) => v.len(),
            Intensities::StateDependent { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Intensities::Constant(v) => out.copy_from_slice(v),
            Intensities::StateDependent { f, .. } => f(x, out),
        }
    }

    pub fn as_constant(&self) -> Option<&[f64]> {
        match self {
            Intensities::Constant(v) => Some(v),
            Intensities::StateDependent { .. } => None,
        }
    }

    fn validate(&self, layout: &Layout) -> Result<()> {
        let check = |v: &[f64]| match v.iter().find(|s| !s.is_finite() || **s < 0.0) {
            Some(s) => Err(Error::Domain(format!(
                "noise intensity {s} is not a nonnegative finite number"
            ))),
            None => Ok(()),
        };
        match self {
            Intensities::Constant(v) => check(v),
            Intensities::StateDependent { len, f, .. } => {
                let mut out = vec![0.0; *len];
                for x in probe_states(layout, 64) {
                    f(&x, &mut out);
                    check(&out)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    PerStrategy,
    MatrixEntry,
    Mutation,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoiseKind::PerStrategy => "per-strategy noise",
            NoiseKind::MatrixEntry => "matrix-entry noise",
            NoiseKind::Mutation => "mutation noise",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// `σ_α(x)`, one intensity per strategy (flat over populations).
    PerStrategy { layout: Layout, sigma: Intensities },
    /// Constant `σ_{αβ}` per payoff matrix entry, row-major.
    MatrixEntry { n: usize, sigma: Vec<f64> },
    /// `η` per unordered strategy pair, in the order of [`Layout::pairs`].
    /// Storing one value per pair makes `η_{αβ} = η_{βα}` hold by construction.
    Mutation { layout: Layout, eta: Intensities },
}

impl NoiseModel {
    /// Constant per-strategy intensities, one vector per population.
    pub fn per_strategy(sigma: Vec<Vec<f64>>) -> Result<Self> {
        let layout = Layout::new(sigma.iter().map(Vec::len).collect())?;
        let sigma = Intensities::Constant(sigma.concat());
        sigma.validate(&layout)?;
        Ok(NoiseModel::PerStrategy { layout, sigma })
    }

    /// State-dependent `σ(x)`; `f` writes one value per strategy.
    pub fn per_strategy_fn(
        layout: &Layout,
        label: impl Into<String>,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        let sigma = Intensities::StateDependent {
            len: layout.total(),
            label: label.into(),
            f: Arc::new(f),
        };
        sigma.validate(layout)?;
        Ok(NoiseModel::PerStrategy {
            layout: layout.clone(),
            sigma,
        })
    }

    pub fn matrix_entry(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::shape("noise matrix row", n, r.len()));
        }
        let sigma = rows.concat();
        Intensities::Constant(sigma.clone()).validate(&Layout::single(n)?)?;
        Ok(NoiseModel::MatrixEntry { n, sigma })
    }

    /// Constant mutation intensities, one value per unordered pair.
    pub fn mutation(layout: &Layout, eta: Vec<f64>) -> Result<Self> {
        let pairs = layout.pairs().len();
        if eta.len() != pairs {
            return Err(Error::shape("mutation intensities", pairs, eta.len()));
        }
        let eta = Intensities::Constant(eta);
        eta.validate(layout)?;
        Ok(NoiseModel::Mutation {
            layout: layout.clone(),
            eta,
        })
    }

    /// Mutation intensities from one full `n × n` matrix per population.
    /// The matrices must be symmetric; the diagonal is ignored.
    pub fn mutation_from_matrices(matrices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let layout = Layout::new(matrices.iter().map(Vec::len).collect())?;
        let mut eta = Vec::new();
        for (k, m) in matrices.iter().enumerate() {
            let n = m.len();
            if let Some(r) = m.iter().find(|r| r.len() != n) {
                return Err(Error::shape("mutation matrix row", n, r.len()));
            }
            for a in 0..n {
                for b in a + 1..n {
                    if m[a][b] != m[b][a] {
                        return Err(Error::Invariant(format!(
                            "mutation intensities of population {k} are not symmetric: \
                             eta[{a}][{b}] = {} but eta[{b}][{a}] = {}",
                            m[a][b], m[b][a]
                        )));
                    }
                    eta.push(m[a][b]);
                }
            }
        }
        Self::mutation(&layout, eta)
    }

    /// State-dependent mutation intensities; `f` writes one value per pair.
    pub fn mutation_fn(
        layout: &Layout,
        label: impl Into<String>,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        let eta = Intensities::StateDependent {
            len: layout.pairs().len(),
            label: label.into(),
            f: Arc::new(f),
        };
        eta.validate(layout)?;
        Ok(NoiseModel::Mutation {
            layout: layout.clone(),
            eta,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        match self {
            NoiseModel::PerStrategy { .. } => NoiseKind::PerStrategy,
            NoiseModel::MatrixEntry { .. } => NoiseKind::MatrixEntry,
            NoiseModel::Mutation { .. } => NoiseKind::Mutation,
        }
    }

    /// Number of intensity values produced by [`NoiseModel::eval_into`].
    pub fn len(&self) -> usize {
        match self {
            NoiseModel::PerStrategy { sigma, .. } => sigma.len(),
            NoiseModel::MatrixEntry { sigma, .. } => sigma.len(),
            NoiseModel::Mutation { eta, .. } => eta.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            NoiseModel::PerStrategy { sigma, .. } => sigma.eval_into(x, out),
            NoiseModel::MatrixEntry { sigma, .. } => out.copy_from_slice(sigma),
            NoiseModel::Mutation { eta, .. } => eta.eval_into(x, out),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn constant_values(&self) -> Option<&[f64]> {
        match self {
            NoiseModel::PerStrategy { sigma, .. } => sigma.as_constant(),
            NoiseModel::MatrixEntry { sigma, .. } => Some(sigma),
            NoiseModel::Mutation { eta, .. } => eta.as_constant(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant_values().is_some()
    }

    /// Constant and identically zero.
    pub fn is_zero(&self) -> bool {
        self.constant_values().is_some_and(|v| v.iter().all(|&s| s == 0.0))
    }

    pub(crate) fn expect_kind(&self, kind: NoiseKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::kind(kind, self.kind()));
        }
        Ok(())
    }

    /// Checks that the intensities are laid out for `layout`.
    pub(crate) fn check_layout(&self, layout: &Layout) -> Result<()> {
        match self {
            NoiseModel::PerStrategy { layout: own, .. } | NoiseModel::Mutation { layout: own, .. } => {
                if own != layout {
                    return Err(Error::shape("noise model", layout.total(), own.total()));
                }
            }
            NoiseModel::MatrixEntry { n, .. } => {
                if layout.populations() != 1 || layout.size(0) != *n {
                    return Err(Error::shape("noise matrix", layout.total(), *n));
                }
            }
        }
        Ok(())
    }
}
