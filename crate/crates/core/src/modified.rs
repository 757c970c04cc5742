//! Noise-adjusted games and the margin conditions stated against them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameSpec, Multilinear, PayoffModel, DEFAULT_PROBES, EQ_TOL};
use crate::noise::{NoiseKind, NoiseModel};
use crate::state::probe_states;

fn check_noise(game: &GameSpec, noise: &NoiseModel, kind: NoiseKind) -> Result<()> {
    noise.expect_kind(kind)?;
    noise.check_layout(game.layout())
}

/// Wraps `game` so that `correction(x, sigma, v)` is applied after the base
/// payoffs are evaluated.
fn wrap(
    game: &GameSpec,
    noise: &NoiseModel,
    label: &str,
    correction: fn(&GameSpec, &[f64], &[f64], &mut [f64]),
) -> GameSpec {
    let base = game.clone();
    let noise = noise.clone();
    let payoff = PayoffModel::Custom(crate::game::CustomPayoff::new(
        format!("{label}({})", game.payoff_model().name()),
        move |x, out| {
            base.payoffs_into(x, out);
            let sigma = noise.eval(x);
            correction(&base, x, &sigma, out);
        },
    ));
    game.with_payoff(payoff)
}

/// `v_α − ½(1 − 2x_α) σ_α(x)²`.
pub fn adjust_srd(game: &GameSpec, noise: &NoiseModel) -> Result<GameSpec> {
    check_noise(game, noise, NoiseKind::PerStrategy)?;
    if noise.is_zero() {
        return Ok(game.clone());
    }
    Ok(wrap(game, noise, "srd-adjusted", |_, x, s, v| {
        for a in 0..v.len() {
            v[a] -= 0.5 * (1.0 - 2.0 * x[a]) * s[a] * s[a];
        }
    }))
}

/// `v_α − ½σ_α²` for constant intensities. Built-in payoff models stay
/// exact: the shift is folded into their tables.
pub fn adjust_imhof(game: &GameSpec, noise: &NoiseModel) -> Result<GameSpec> {
    check_noise(game, noise, NoiseKind::PerStrategy)?;
    let Some(sigma) = noise.constant_values() else {
        return Err(Error::Unsupported(
            "the constant-shift adjustment needs state-independent intensities".into(),
        ));
    };
    if noise.is_zero() {
        return Ok(game.clone());
    }
    let shift: Vec<f64> = sigma.iter().map(|s| 0.5 * s * s).collect();
    let layout = game.layout();
    let payoff = match game.payoff_model() {
        PayoffModel::Constant(v) => PayoffModel::Constant(v.iter().zip(&shift).map(|(v, s)| v - s).collect()),
        PayoffModel::Matrix { n, entries } => {
            // Rows of V act on a probability vector, so a uniform row shift is a payoff shift.
            let entries = entries.iter().enumerate().map(|(i, e)| e - shift[i / n]).collect();
            PayoffModel::Matrix { n: *n, entries }
        }
        PayoffModel::Multilinear(m) => {
            let mut m: Multilinear = m.clone();
            let profiles: Vec<Vec<usize>> = layout.profiles().collect();
            for (k, table) in m.tables_mut().iter_mut().enumerate() {
                for (idx, p) in profiles.iter().enumerate() {
                    table[idx] -= shift[layout.offset(k) + p[k]];
                }
            }
            PayoffModel::Multilinear(m)
        }
        PayoffModel::Custom(_) => {
            return Ok(wrap(game, noise, "imhof-adjusted", |_, _, s, v| {
                for a in 0..v.len() {
                    v[a] -= 0.5 * s[a] * s[a];
                }
            }))
        }
    };
    Ok(game.with_payoff(payoff))
}

/// `v_α − ½(1 − 2x_α) Σ_β σ_{αβ}² x_β²` for matrix games with entrywise shocks.
pub fn adjust_bimatrix(game: &GameSpec, noise: &NoiseModel) -> Result<GameSpec> {
    if !matches!(game.payoff_model(), PayoffModel::Matrix { .. }) {
        return Err(Error::kind("matrix game", game.payoff_model().name()));
    }
    check_noise(game, noise, NoiseKind::MatrixEntry)?;
    if noise.is_zero() {
        return Ok(game.clone());
    }
    Ok(wrap(game, noise, "bimatrix-adjusted", |_, x, s, v| {
        let n = x.len();
        for a in 0..n {
            let q: f64 = (0..n).map(|b| s[a * n + b].powi(2) * x[b] * x[b]).sum();
            v[a] -= 0.5 * (1.0 - 2.0 * x[a]) * q;
        }
    }))
}

/// `v_α − ½ Σ_{β≠α} x_β² η_{βα}²`.
pub fn adjust_mutation(game: &GameSpec, noise: &NoiseModel) -> Result<GameSpec> {
    check_noise(game, noise, NoiseKind::Mutation)?;
    if noise.is_zero() {
        return Ok(game.clone());
    }
    Ok(wrap(game, noise, "mutation-adjusted", |g, x, eta, v| {
        for (p, (a, b)) in g.layout().pairs().into_iter().enumerate() {
            let e2 = eta[p] * eta[p];
            v[a] -= 0.5 * x[b] * x[b] * e2;
            v[b] -= 0.5 * x[a] * x[a] * e2;
        }
    }))
}

/// Strategy `alpha` is beaten by `beta` by more than the noise margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMargin {
    pub population: usize,
    pub alpha: usize,
    pub beta: usize,
    pub holds: bool,
    /// Minimum over tested states of `v_β − v_α − ½(σ_α² + σ_β²)`.
    pub min_slack: f64,
}

/// The pure profile is a strict equilibrium of the noise-adjusted game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexMargin {
    pub profile: Vec<usize>,
    pub holds: bool,
    /// Minimum over populations and deviations `β` of
    /// `½(σ_α² + σ_β²) − (v_β − v_α)` at the vertex.
    pub min_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub dominance: Vec<PairMargin>,
    pub strictness: Vec<VertexMargin>,
    /// The dominance margins were decided by vertex enumeration.
    pub exact: bool,
    pub states_checked: usize,
}

impl MarginReport {
    pub fn pair(&self, population: usize, alpha: usize, beta: usize) -> Option<&PairMargin> {
        self.dominance
            .iter()
            .find(|m| m.population == population && m.alpha == alpha && m.beta == beta)
    }

    pub fn vertex(&self, profile: &[usize]) -> Option<&VertexMargin> {
        self.strictness.iter().find(|m| m.profile == profile)
    }
}

pub fn margin_conditions(game: &GameSpec, noise: &NoiseModel) -> Result<MarginReport> {
    check_noise(game, noise, NoiseKind::PerStrategy)?;
    let layout = game.layout();
    let exact = game.payoff_model().is_multilinear() && noise.is_constant();
    let states = probe_states(layout, if exact { 0 } else { DEFAULT_PROBES });
    let mut v = vec![0.0; layout.total()];
    let mut s = vec![0.0; layout.total()];

    let mut dominance = Vec::new();
    for (k, r) in layout.blocks().enumerate() {
        for a in r.clone() {
            for b in r.clone().filter(|&b| b != a) {
                dominance.push(PairMargin {
                    population: k,
                    alpha: a - r.start,
                    beta: b - r.start,
                    holds: false,
                    min_slack: f64::INFINITY,
                });
            }
        }
    }
    for x in &states {
        game.payoffs_into(x, &mut v);
        noise.eval_into(x, &mut s);
        for m in &mut dominance {
            let off = layout.offset(m.population);
            let (a, b) = (off + m.alpha, off + m.beta);
            let slack = v[b] - v[a] - 0.5 * (s[a] * s[a] + s[b] * s[b]);
            m.min_slack = m.min_slack.min(slack);
        }
    }
    for m in &mut dominance {
        m.holds = m.min_slack > EQ_TOL;
    }

    let mut strictness = Vec::new();
    for profile in layout.profiles() {
        let x = crate::state::PopulationState::vertex(layout, &profile)?.into_vec();
        game.payoffs_into(&x, &mut v);
        noise.eval_into(&x, &mut s);
        let mut min_slack = f64::INFINITY;
        for (k, r) in layout.blocks().enumerate() {
            let a = r.start + profile[k];
            for b in r.filter(|&b| b != a) {
                min_slack = min_slack.min(0.5 * (s[a] * s[a] + s[b] * s[b]) - (v[b] - v[a]));
            }
        }
        strictness.push(VertexMargin {
            profile,
            holds: min_slack > EQ_TOL,
            min_slack,
        });
    }

    Ok(MarginReport {
        dominance,
        strictness,
        exact,
        states_checked: states.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Equilibrium;
    use crate::state::PopulationState;

    fn st(v: Vec<f64>) -> PopulationState {
        PopulationState::from_blocks(vec![v]).unwrap()
    }

    fn constant(v: Vec<f64>) -> GameSpec {
        GameSpec::constant(vec![v]).unwrap()
    }

    fn sigma(s: Vec<f64>) -> NoiseModel {
        NoiseModel::per_strategy(vec![s]).unwrap()
    }

    #[test]
    fn srd_adjustment_examples() {
        let g = constant(vec![1.0, 0.0]);
        let m = adjust_srd(&g, &sigma(vec![1.0, 1.0])).unwrap();
        assert!(m.is_approximate());
        assert_eq!(m.payoffs(&st(vec![0.5, 0.5])).unwrap(), vec![1.0, 0.0]);
        assert_eq!(m.payoffs(&st(vec![1.0, 0.0])).unwrap(), vec![1.5, -0.5]);
    }

    #[test]
    fn zero_noise_returns_input_game() {
        let g = GameSpec::matrix(vec![vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let zero = sigma(vec![0.0, 0.0]);
        for adjusted in [adjust_srd(&g, &zero).unwrap(), adjust_imhof(&g, &zero).unwrap()] {
            assert!(matches!(adjusted.payoff_model(), PayoffModel::Matrix { .. }));
        }
        let zm = NoiseModel::matrix_entry(vec![vec![0.0; 2]; 2]).unwrap();
        assert!(!adjust_bimatrix(&g, &zm).unwrap().is_approximate());
        let ze = NoiseModel::mutation(g.layout(), vec![0.0]).unwrap();
        assert!(!adjust_mutation(&g, &ze).unwrap().is_approximate());
    }

    #[test]
    fn imhof_examples() {
        let g = constant(vec![1.0, 0.0]);
        let m = adjust_imhof(&g, &sigma(vec![1.0, 1.0])).unwrap();
        assert_eq!(m.payoffs(&st(vec![0.3, 0.7])).unwrap(), vec![0.5, -0.5]);
        let m = adjust_imhof(&g, &sigma(vec![2f64.sqrt(), 0.0])).unwrap();
        let v = m.payoffs(&st(vec![0.3, 0.7])).unwrap();
        assert!(v[0].abs() < 1e-15 && v[1] == 0.0);
    }

    #[test]
    fn imhof_rejects_state_dependent_noise() {
        let g = constant(vec![1.0, 0.0]);
        let s = NoiseModel::per_strategy_fn(g.layout(), "x", |x, o| o.copy_from_slice(x)).unwrap();
        assert!(matches!(adjust_imhof(&g, &s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn imhof_matrix_and_multilinear_stay_exact() {
        let g = GameSpec::matrix(vec![vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let m = adjust_imhof(&g, &sigma(vec![1.0, 2.0])).unwrap();
        assert!(!m.is_approximate());
        let x = st(vec![0.25, 0.75]);
        let (v, w) = (g.payoffs(&x).unwrap(), m.payoffs(&x).unwrap());
        assert!((w[0] - (v[0] - 0.5)).abs() < 1e-15);
        assert!((w[1] - (v[1] - 2.0)).abs() < 1e-15);

        let b = GameSpec::bimatrix(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![5.0, 6.0], vec![7.0, 8.0]],
        )
        .unwrap();
        let n = NoiseModel::per_strategy(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let m = adjust_imhof(&b, &n).unwrap();
        let x = PopulationState::from_blocks(vec![vec![0.4, 0.6], vec![0.1, 0.9]]).unwrap();
        let (v, w) = (b.payoffs(&x).unwrap(), m.payoffs(&x).unwrap());
        let shift = [0.5, 0.0, 0.0, 2.0];
        for i in 0..4 {
            assert!((w[i] - (v[i] - shift[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn bimatrix_adjustment_example() {
        let g = GameSpec::matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let n = NoiseModel::matrix_entry(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let m = adjust_bimatrix(&g, &n).unwrap();
        assert_eq!(m.payoffs(&st(vec![0.5, 0.5])).unwrap(), vec![0.0, 0.0]);
        // Correction −½(1 − 1.5)(0.5625 + 0.0625) = +0.15625.
        assert_eq!(m.payoffs(&st(vec![0.75, 0.25])).unwrap()[0], 0.15625);
    }

    #[test]
    fn bimatrix_adjustment_kind_errors() {
        let g = constant(vec![0.0, 0.0]);
        let n = NoiseModel::matrix_entry(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(adjust_bimatrix(&g, &n), Err(Error::Kind { .. })));
        let g = GameSpec::matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            adjust_bimatrix(&g, &sigma(vec![1.0, 1.0])),
            Err(Error::Kind { .. })
        ));
        assert!(matches!(adjust_srd(&g, &n), Err(Error::Kind { .. })));
    }

    #[test]
    fn mutation_adjustment_examples() {
        let g = constant(vec![1.0, 2.0]);
        let n = NoiseModel::mutation(g.layout(), vec![1.0]).unwrap();
        let m = adjust_mutation(&g, &n).unwrap();
        assert_eq!(m.payoffs(&st(vec![0.5, 0.5])).unwrap(), vec![0.875, 1.875]);
        assert_eq!(m.payoffs(&st(vec![1.0, 0.0])).unwrap()[0], 1.0);
    }

    #[test]
    fn margin_condition_examples() {
        let r = margin_conditions(&constant(vec![0.0, 1.0]), &sigma(vec![0.5, 0.5])).unwrap();
        assert!(r.exact);
        let p = r.pair(0, 0, 1).unwrap();
        assert!(p.holds);
        assert_eq!(p.min_slack, 0.75);
        assert!(!r.pair(0, 1, 0).unwrap().holds);

        let g = constant(vec![1.0, 1.3]);
        let r = margin_conditions(&g, &sigma(vec![2.0, 2.0])).unwrap();
        assert!(r.vertex(&[0]).unwrap().holds);
        assert_eq!(
            g.classify_equilibrium(&st(vec![1.0, 0.0])).unwrap(),
            Equilibrium::NotNash
        );
    }

    #[test]
    fn margin_conditions_sampled_for_state_dependent_noise() {
        let g = constant(vec![0.0, 2.0]);
        let s = NoiseModel::per_strategy_fn(g.layout(), "x", |x, o| o.copy_from_slice(x)).unwrap();
        let r = margin_conditions(&g, &s).unwrap();
        assert!(!r.exact);
        // Worst case is a vertex: 2 − ½·1.
        assert!((r.pair(0, 0, 1).unwrap().min_slack - 1.5).abs() < 1e-12);
    }
}
