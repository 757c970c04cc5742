//! Product-of-simplices state space.
//!
//! A state is stored flat: population `k` owns the contiguous block
//! `layout.range(k)`. Every evaluator in the crate works on such flat slices.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` for a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Block structure of a multi-population state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Domain("a game needs at least one population".into()));
        }
        if let Some((k, &n)) = sizes.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(Error::Domain(format!(
                "population {k} has {n} strategies, at least 2 are required"
            )));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &n in &sizes {
            offsets.push(total);
            total += n;
        }
        Ok(Self { sizes, offsets, total })
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn populations(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.sizes[k]
    }

    /// Total number of strategies over all populations.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.sizes.len()).map(|k| self.range(k))
    }

    /// Population owning the flat coordinate `i`.
    pub fn population_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }

    /// Unordered strategy pairs `(a, b)` with `a < b`, as flat indices,
    /// population-major then lexicographic.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in self.blocks() {
            for a in r.clone() {
                for b in a + 1..r.end {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Number of pure strategy profiles (vertices of the state space).
    pub fn profile_count(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Iterates over all pure profiles, last population varying fastest.
    pub fn profiles(&self) -> Profiles<'_> {
        Profiles {
            sizes: &self.sizes,
            next: Some(vec![0; self.sizes.len()]),
        }
    }

    pub fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.total {
            return Err(Error::shape(what, self.total, len));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for Layout {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Layout::new(sizes)
    }
}

impl From<Layout> for Vec<usize> {
    fn from(layout: Layout) -> Self {
        layout.sizes
    }
}

pub struct Profiles<'a> {
    sizes: &'a [usize],
    next: Option<Vec<usize>>,
}

impl Iterator for Profiles<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for k in (0..succ.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.sizes[k] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[k] = 0;
        }
        Some(current)
    }
}

/// Checks that `x` is a point of the product of simplices described by `layout`.
pub fn check_simplex(layout: &Layout, x: &[f64]) -> Result<()> {
    layout.check_len("state", x.len())?;
    for (k, r) in layout.blocks().enumerate() {
        let block = &x[r];
        if let Some(v) = block.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("population {k} has an invalid share {v}")));
        }
        let sum: f64 = block.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("population {k} shares sum to {sum}, not 1")));
        }
    }
    Ok(())
}

/// Per-population probability vectors, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    layout: Layout,
    values: Vec<f64>,
}

impl PopulationState {
    pub fn new(layout: &Layout, values: Vec<f64>) -> Result<Self> {
        check_simplex(layout, &values)?;
        Ok(Self {
            layout: layout.clone(),
            values,
        })
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let layout = Layout::new(blocks.iter().map(Vec::len).collect())?;
        Self::new(&layout, blocks.concat())
    }

    /// The vertex where population `k` plays `profile[k]`.
    pub fn vertex(layout: &Layout, profile: &[usize]) -> Result<Self> {
        if profile.len() != layout.populations() {
            return Err(Error::shape("profile", layout.populations(), profile.len()));
        }
        let mut values = vec![0.0; layout.total()];
        for (k, &a) in profile.iter().enumerate() {
            if a >= layout.size(k) {
                return Err(Error::Domain(format!("strategy {a} out of range for population {k}")));
            }
            values[layout.offset(k) + a] = 1.0;
        }
        Ok(Self {
            layout: layout.clone(),
            values,
        })
    }

    pub fn barycenter(layout: &Layout) -> Self {
        let mut values = vec![0.0; layout.total()];
        for r in layout.blocks() {
            let w = 1.0 / r.len() as f64;
            values[r].fill(w);
        }
        Self {
            layout: layout.clone(),
            values,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn population(&self, k: usize) -> &[f64] {
        &self.values[self.layout.range(k)]
    }

    /// Every share is at least `floor`.
    pub fn is_interior(&self, floor: f64) -> bool {
        self.values.iter().all(|&v| v >= floor && v > 0.0)
    }

    /// Every population puts all of its mass on a single strategy.
    pub fn is_pure(&self) -> bool {
        self.layout
            .blocks()
            .all(|r| self.values[r].iter().filter(|&&v| v > 0.0).count() == 1)
    }

    /// Sup-norm distance to another state of the same layout.
    pub fn distance(&self, other: &[f64]) -> f64 {
        sup_distance(&self.values, other)
    }
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A probability vector over the strategies of one population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    population: usize,
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(population: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain("mixed strategy has a negative entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("mixed strategy sums to {sum}, not 1")));
        }
        Ok(Self { population, probs })
    }

    pub fn pure(population: usize, strategies: usize, alpha: usize) -> Result<Self> {
        if alpha >= strategies {
            return Err(Error::Domain(format!(
                "strategy {alpha} out of range ({strategies} strategies)"
            )));
        }
        let mut probs = vec![0.0; strategies];
        probs[alpha] = 1.0;
        Ok(Self { population, probs })
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, _)| i)
    }

    pub(crate) fn check_against(&self, layout: &Layout) -> Result<()> {
        if self.population >= layout.populations() {
            return Err(Error::Domain(format!("population {} does not exist", self.population)));
        }
        if self.probs.len() != layout.size(self.population) {
            return Err(Error::shape(
                "mixed strategy",
                layout.size(self.population),
                self.probs.len(),
            ));
        }
        Ok(())
    }
}

/// Deterministic low-discrepancy states used when a property cannot be
/// decided exactly. Points come from the additive recurrence with the
/// generalised golden ratio, mapped to each simplex by normalised `-ln u`.
pub fn quasi_random_states(layout: &Layout, count: usize) -> Vec<Vec<f64>> {
    let d = layout.total();
    let phi = generalized_golden_ratio(d);
    let alphas: Vec<f64> = (1..=d).map(|j| phi.powi(-(j as i32)).fract()).collect();
    (0..count)
        .map(|i| {
            let mut x: Vec<f64> = alphas
                .iter()
                .map(|a| {
                    let u = (0.5 + a * (i + 1) as f64).fract();
                    -u.max(1e-300).ln()
                })
                .collect();
            for r in layout.blocks() {
                let s: f64 = x[r.clone()].iter().sum();
                x[r].iter_mut().for_each(|v| *v /= s);
            }
            x
        })
        .collect()
}

fn generalized_golden_ratio(d: usize) -> f64 {
    // Root of x^(d+1) = x + 1.
    let mut x: f64 = 2.0;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

/// All vertices followed by `samples` quasi-random interior points.
pub(crate) fn probe_states(layout: &Layout, samples: usize) -> Vec<Vec<f64>> {
    let mut states: Vec<Vec<f64>> = layout
        .profiles()
        .map(|p| {
            PopulationState::vertex(layout, &p)
                .expect("profile in range")
                .into_vec()
        })
        .collect();
    states.push(PopulationState::barycenter(layout).into_vec());
    states.extend(quasi_random_states(layout, samples));
    states
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_rejects_single_strategy_population() {
        assert!(Layout::new(vec![2, 1]).is_err());
        assert!(Layout::new(vec![]).is_err());
    }

    #[test]
    fn profiles_enumerate_product() {
        let l = Layout::new(vec![2, 3]).unwrap();
        let all: Vec<_> = l.profiles().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[5], vec![1, 2]);
    }

    #[test]
    fn pairs_are_canonical() {
        let l = Layout::new(vec![3, 2]).unwrap();
        assert_eq!(l.pairs(), vec![(0, 1), (0, 2), (1, 2), (3, 4)]);
        assert_eq!(l.population_of(3), 1);
        assert_eq!(l.population_of(2), 0);
    }

    #[test]
    fn state_validation() {
        let l = Layout::single(2).unwrap();
        assert!(PopulationState::new(&l, vec![0.3, 0.7]).is_ok());
        assert!(PopulationState::new(&l, vec![0.3, 0.6]).is_err());
        assert!(PopulationState::new(&l, vec![-0.1, 1.1]).is_err());
        assert!(PopulationState::new(&l, vec![0.5]).is_err());
    }

    #[test]
    fn quasi_random_states_lie_on_simplex() {
        let l = Layout::new(vec![3, 2]).unwrap();
        for x in quasi_random_states(&l, 200) {
            check_simplex(&l, &x).unwrap();
            assert!(x.iter().all(|&v| v > 0.0));
        }
    }
}
