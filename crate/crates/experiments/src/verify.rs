//! The acceptance suite: twelve finite-horizon checks of the long-run
//! predictions, at a fast tier (fewer paths, coarser steps, wider
//! tolerances) or the full tier.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use shockrep_core::analysis::{
    hitting_probability_mc, martingale_check, stability_probability, survival_probability, Proportion,
};
use shockrep_core::dynamics::{
    field_aggregate, field_bimatrix, field_explearn, field_mutation, field_rd, field_second_order, field_srd,
    stratonovich_to_ito, DynamicsField,
};
use shockrep_core::engine::EnsembleOptions;
use shockrep_core::rng::CounterRng;
use shockrep_core::state::SIMPLEX_TOL;
use shockrep_core::{
    simulate_ensemble, Dynamics, EnsembleResult, GameSpec, IntegratorConfig, Layout, NoiseModel, PopulationState,
    Scheme,
};

use rand::Rng;

use crate::analyses::{decay_summary, random_interior_states, shared_path_deviation};
use crate::error::{Error, Result};

/// Drift added to the first Wiener coordinate by `--tamper-rng`.
pub const TAMPER_BIAS: f64 = 0.2;

const SEED: u64 = 0x5EED_2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Fast,
    Full,
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Tier::Fast),
            "full" => Ok(Tier::Full),
            _ => Err(Error::Validation(format!(
                "tier: expected `fast` or `full`, found `{s}`"
            ))),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Fast => "fast",
            Tier::Full => "full",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub tier: Tier,
    /// Bias the Wiener increments of every ensemble (negative control).
    pub tamper: bool,
    /// Run only these criteria (1-based).
    pub only: Option<Vec<u8>>,
}

impl VerifyOptions {
    pub fn new(tier: Tier) -> Self {
        Self {
            tier,
            tamper: false,
            only: None,
        }
    }

    fn selected(&self, id: u8) -> bool {
        self.only.as_ref().is_none_or(|o| o.contains(&id))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C{:<2} {:<4} {:<34} {} ({:.1}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tier: Tier,
    pub tamper: bool,
    pub criteria: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: u8) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "verify {}{}: {} of {} criteria passed",
            self.tier,
            if self.tamper { " (tampered rng)" } else { "" },
            self.criteria.iter().filter(|c| c.passed).count(),
            self.criteria.len()
        )?;
        for c in &self.criteria {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Sizes and tolerances of one tier.
struct Params {
    pure_paths: u64,
    pure_dt: f64,
    pure_horizon: f64,
    survival_tol: f64,
    z_max: f64,
    interior_max: f64,
    paths: u64,
    dt: f64,
    eliminated_min: f64,
    coexist_min: f64,
    rms_paths: u64,
    extinct_min: f64,
    stable_min: f64,
    non_nash_min: f64,
    decay_paths: u64,
    decay_dt: f64,
    slope_range: (f64, f64),
    hit_paths: u64,
    hit_dt: f64,
    hit_tol: f64,
    hit_down_min: f64,
    invariant_draws: usize,
}

impl Params {
    fn of(tier: Tier) -> Self {
        match tier {
            Tier::Full => Self {
                pure_paths: 10_000,
                pure_dt: 1e-3,
                pure_horizon: 200.0,
                survival_tol: 0.015,
                z_max: 4.0,
                interior_max: 0.01,
                paths: 2000,
                dt: 1e-3,
                eliminated_min: 0.99,
                coexist_min: 0.95,
                rms_paths: 64,
                extinct_min: 0.99,
                stable_min: 0.9,
                non_nash_min: 0.05,
                decay_paths: 100,
                decay_dt: 1e-3,
                slope_range: (-0.6, -0.4),
                hit_paths: 20_000,
                hit_dt: 1e-3,
                hit_tol: 0.010,
                hit_down_min: 0.99,
                invariant_draws: 1000,
            },
            Tier::Fast => Self {
                pure_paths: 2000,
                pure_dt: 1e-2,
                pure_horizon: 100.0,
                survival_tol: 0.035,
                z_max: 4.5,
                interior_max: 0.02,
                paths: 500,
                dt: 1e-2,
                eliminated_min: 0.97,
                coexist_min: 0.92,
                rms_paths: 64,
                extinct_min: 0.97,
                stable_min: 0.85,
                non_nash_min: 0.03,
                decay_paths: 40,
                decay_dt: 1e-2,
                slope_range: (-0.65, -0.35),
                hit_paths: 5000,
                hit_dt: 1e-2,
                hit_tol: 0.02,
                hit_down_min: 0.98,
                invariant_draws: 200,
            },
        }
    }
}

/// Simplex diagnostics accumulated over every ensemble the suite runs.
#[derive(Default)]
struct SimplexLog {
    runs: usize,
    max_error: f64,
    min_share: f64,
}

struct Suite<'a> {
    opts: &'a VerifyOptions,
    p: Params,
    simplex: SimplexLog,
}

fn constant(v: &[f64]) -> GameSpec {
    GameSpec::constant(vec![v.to_vec()]).expect("valid payoffs")
}

fn sigma(s: &[f64]) -> NoiseModel {
    NoiseModel::per_strategy(vec![s.to_vec()]).expect("valid intensities")
}

fn state(x: &[f64]) -> PopulationState {
    PopulationState::from_blocks(vec![x.to_vec()]).expect("valid state")
}

fn show(p: &Proportion) -> String {
    format!("{:.4} [{:.4}, {:.4}]", p.estimate, p.lo, p.hi)
}

impl Suite<'_> {
    fn ensemble(
        &mut self,
        dynamics: Dynamics,
        x0: &[f64],
        cfg: &IntegratorConfig,
        seed: u64,
        paths: u64,
        mut opts: EnsembleOptions,
    ) -> Result<EnsembleResult> {
        if self.opts.tamper {
            opts.noise_bias = TAMPER_BIAS;
        }
        let e = simulate_ensemble(&dynamics, &state(x0), cfg, seed, paths, &opts)?;
        let log = &mut self.simplex;
        log.min_share = if log.runs == 0 {
            e.min_share()
        } else {
            log.min_share.min(e.min_share())
        };
        log.max_error = log.max_error.max(e.max_simplex_error());
        log.runs += 1;
        Ok(e)
    }

    /// Criteria 1–3 share one pure-noise ensemble.
    fn pure_noise(&mut self) -> Result<EnsembleResult> {
        let d = field_srd(&constant(&[1.0, 1.0]), &sigma(&[1.0, 1.0]))?.into();
        let cfg = IntegratorConfig::new(self.p.pure_dt, self.p.pure_horizon);
        let opts = EnsembleOptions {
            observe_times: vec![10.0],
            ..Default::default()
        };
        self.ensemble(d, &[0.3, 0.7], &cfg, SEED + 1, self.p.pure_paths, opts)
    }

    fn survival(p: &Params, e: &EnsembleResult) -> Result<(bool, String)> {
        let s = survival_probability(e, 0, 0.5)?;
        let ok = (s.estimate - 0.3).abs() <= p.survival_tol;
        Ok((
            ok,
            format!("P(x_α(T) > 0.5) = {}, want 0.30 ± {}", show(&s), p.survival_tol),
        ))
    }

    fn martingale(p: &Params, e: &EnsembleResult) -> Result<(bool, String)> {
        let m = martingale_check(e, 0, 10.0)?;
        Ok((
            m.z.abs() < p.z_max,
            format!(
                "mean x_α(10) = {:.4} ± {:.4}, z = {:.2}, want |z| < {}",
                m.mean, m.standard_error, m.z, p.z_max
            ),
        ))
    }

    fn absorption(p: &Params, e: &EnsembleResult) -> Result<(bool, String)> {
        let shares = e.terminal_shares(0);
        let interior = shares.iter().filter(|&&x| x.min(1.0 - x) > 0.01).count();
        let f = Proportion::new(interior as u64, shares.len() as u64);
        Ok((
            f.estimate < p.interior_max,
            format!(
                "fraction with min(x, 1−x) > 0.01 = {}, want < {}",
                show(&f),
                p.interior_max
            ),
        ))
    }

    fn aggregate(&mut self) -> Result<(bool, String)> {
        let d = field_aggregate(&constant(&[0.0, 0.0]), &sigma(&[1.0, 0.1]))?.into();
        let cfg = IntegratorConfig::new(self.p.dt, 100.0);
        let e = self.ensemble(d, &[0.5, 0.5], &cfg, SEED + 4, self.p.paths, Default::default())?;
        let below = e.paths.iter().filter(|p| p.terminal[0] < 1e-3).count();
        let p = Proportion::new(below as u64, e.len() as u64);
        Ok((
            p.estimate >= self.p.eliminated_min,
            format!("P(x_α(T) < 1e-3) = {}, want ≥ {}", show(&p), self.p.eliminated_min),
        ))
    }

    fn coexistence(&mut self) -> Result<(bool, String)> {
        let dev = shared_path_deviation(
            &field_explearn(&constant(&[0.0, 0.0]), &sigma(&[1.0, 1.0]))?.into(),
            &state(&[0.5, 0.5]),
            SEED + 5,
            &[1e-3, 1e-4],
            5.0,
            self.p.rms_paths,
        )?;
        let ratio = dev.mean_rms[0] / dev.mean_rms[1];
        let d = field_explearn(&constant(&[0.0, 0.0]), &sigma(&[0.2, 0.1]))?.into();
        let cfg = IntegratorConfig::new(self.p.dt, 100.0);
        let e = self.ensemble(d, &[0.5, 0.5], &cfg, SEED + 50, self.p.paths, Default::default())?;
        let both = e.paths.iter().filter(|p| p.terminal.iter().all(|&x| x > 1e-3)).count();
        let p = Proportion::new(both as u64, e.len() as u64);
        let ok = ratio >= 2.0 && p.estimate >= self.p.coexist_min;
        Ok((
            ok,
            format!(
                "RMS dt=1e-3 / dt=1e-4 = {ratio:.2} (want ≥ 2); both > 1e-3 in {} (want ≥ {})",
                show(&p),
                self.p.coexist_min
            ),
        ))
    }

    fn stratonovich(&self) -> Result<(bool, String)> {
        let mut rng = CounterRng::new(SEED + 6, 0, 0, 2);
        let layout = Layout::single(3)?;
        let mut max = 0.0f64;
        for x in random_interior_states(&layout, 100, &mut rng) {
            let v: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0)).collect();
            let g = GameSpec::matrix(v)?;
            let n = sigma(&s);
            let a = stratonovich_to_ito(&g, &n)?.drift(&x);
            let b = field_explearn(&g, &n)?.drift(&x);
            for (p, q) in a.iter().zip(&b) {
                max = max.max((p - q).abs());
            }
        }
        Ok((
            max <= 1e-12,
            format!("max |drift difference| = {max:.3e} over 100 states, want ≤ 1e-12"),
        ))
    }

    fn extinction(&mut self) -> Result<(bool, String)> {
        let d = field_srd(&constant(&[0.0, 1.0]), &sigma(&[0.5, 0.5]))?.into();
        let cfg = IntegratorConfig::new(self.p.dt, 100.0);
        let e = self.ensemble(d, &[0.5, 0.5], &cfg, SEED + 7, self.p.paths, Default::default())?;
        let below = e.paths.iter().filter(|p| p.terminal[0] < 1e-4).count();
        let p = Proportion::new(below as u64, e.len() as u64);
        Ok((
            p.estimate >= self.p.extinct_min,
            format!("P(x_α(T) < 1e-4) = {}, want ≥ {}", show(&p), self.p.extinct_min),
        ))
    }

    fn attraction(&mut self, v: [f64; 2], s: f64, seed: u64) -> Result<Proportion> {
        let d = field_srd(&constant(&v), &sigma(&[s, s]))?.into();
        let cfg = IntegratorConfig::new(self.p.dt, 100.0);
        let target = vec![1.0, 0.0];
        let opts = EnsembleOptions {
            reference: Some(target.clone()),
            ..Default::default()
        };
        let e = self.ensemble(d, &[0.99, 0.01], &cfg, seed, self.p.paths, opts)?;
        Ok(stability_probability(&e, &target, 0.5, 1e-3)?.converging)
    }

    fn decay(&mut self) -> Result<(bool, String)> {
        let d = field_second_order(&constant(&[0.0, 1.0]), &sigma(&[1.0, 1.0]))?.into();
        let stride = (1e-2 / self.p.decay_dt).round().max(1.0) as u64;
        let cfg = IntegratorConfig::new(self.p.decay_dt, 20.0)
            .with_scheme(Scheme::LogY)
            .with_stride(stride);
        let opts = EnsembleOptions {
            keep_trajectories: true,
            ..Default::default()
        };
        let mut e = self.ensemble(d, &[0.5, 0.5], &cfg, SEED + 10, self.p.decay_paths, opts)?;
        let ts = e.trajectories.take().expect("kept");
        let fit = decay_summary(&ts, 0, 1, shockrep_core::analysis::DEFAULT_BURN_IN)?;
        let (lo, hi) = self.p.slope_range;
        Ok((
            (lo..=hi).contains(&fit.mean_slope),
            format!(
                "mean slope = {:.4} over {} paths, want in [{lo}, {hi}]",
                fit.mean_slope,
                ts.len()
            ),
        ))
    }

    fn hitting(&self) -> Result<(bool, String)> {
        let up = hitting_probability_mc(1.0, 1.0, 400.0, self.p.hit_paths, self.p.hit_dt, SEED + 11)?;
        let down = hitting_probability_mc(1.0, -0.5, 400.0, self.p.hit_paths, self.p.hit_dt, SEED + 12)?;
        let ok = (up.estimate.estimate - up.closed_form).abs() <= self.p.hit_tol
            && down.estimate.estimate >= self.p.hit_down_min;
        Ok((
            ok,
            format!(
                "a=1,b=1: {} vs {:.4} ± {} (grid-only bias {:+.4}); a=1,b=−0.5: {:.4}, want ≥ {}",
                show(&up.estimate),
                up.closed_form,
                self.p.hit_tol,
                -up.bias,
                down.estimate.estimate,
                self.p.hit_down_min
            ),
        ))
    }

    fn invariants(&mut self) -> Result<(bool, String)> {
        let (tangency, vertex) = field_invariants(self.p.invariant_draws, SEED + 12)?;
        if self.simplex.runs == 0 {
            let g = GameSpec::matrix(vec![vec![0.0, 1.0], vec![0.5, 0.2]])?;
            let d = field_srd(&g, &sigma(&[1.0, 0.5]))?.into();
            self.ensemble(
                d,
                &[0.5, 0.5],
                &IntegratorConfig::new(1e-2, 10.0),
                SEED,
                50,
                Default::default(),
            )?;
        }
        let simplex_ok = self.simplex.max_error <= SIMPLEX_TOL && self.simplex.min_share >= 0.0;
        let reproducible = reproducible(SEED + 13)?;
        let ok = tangency <= 1e-12 && vertex == 0.0 && simplex_ok && reproducible;
        Ok((
            ok,
            format!(
                "max |Σ drift|,|Σ diffusion| = {tangency:.1e}, max vertex component = {vertex:.1e}, \
                 simplex error ≤ {:.1e} over {} runs, reproducible = {reproducible}",
                self.simplex.max_error, self.simplex.runs
            ),
        ))
    }
}

/// Largest tangency defect and largest vertex component over all seven
/// fields and `draws` random games, noise models and states.
pub fn field_invariants(draws: usize, seed: u64) -> Result<(f64, f64)> {
    const N: usize = 3;
    let layout = Layout::single(N)?;
    let mut rng = CounterRng::new(seed, 0, 0, 2);
    let states = random_interior_states(&layout, draws, &mut rng);
    let (mut tangency, mut vertex) = (0.0f64, 0.0f64);
    for x in states {
        let mut unif = |lo: f64, hi: f64, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
        let v: Vec<Vec<f64>> = (0..N).map(|_| unif(-2.0, 2.0, N)).collect();
        let s = unif(0.0, 2.0, N);
        let m: Vec<Vec<f64>> = (0..N).map(|_| unif(0.0, 2.0, N)).collect();
        let eta = unif(0.0, 2.0, layout.pairs().len());
        let dw = unif(-0.1, 0.1, N * N);
        let g = GameSpec::matrix(v)?;
        let per = sigma(&s);
        let fields: Vec<DynamicsField> = vec![
            field_rd(&g),
            field_srd(&g, &per)?,
            field_aggregate(&g, &per)?,
            field_explearn(&g, &per)?,
            stratonovich_to_ito(&g, &per)?,
            field_bimatrix(&g, &NoiseModel::matrix_entry(m)?)?,
            field_mutation(&g, &NoiseModel::mutation(&layout, eta)?)?,
        ];
        let corner = rng.random_range(0..N);
        let mut e = vec![0.0; N];
        e[corner] = 1.0;
        for f in &fields {
            let w = &dw[..f.noise_dim()];
            tangency = tangency
                .max(f.drift(&x).iter().sum::<f64>().abs())
                .max(f.diffusion(&x, w).iter().sum::<f64>().abs());
            for c in f.drift(&e).into_iter().chain(f.diffusion(&e, w)) {
                vertex = vertex.max(c.abs());
            }
        }
    }
    Ok((tangency, vertex))
}

/// Runs one ensemble twice, and once more on a single worker thread, and
/// compares the serialized results and a trajectory CSV byte for byte.
pub fn reproducible(seed: u64) -> Result<bool> {
    let g = GameSpec::matrix(vec![vec![0.0, 2.0, -1.0], vec![1.0, 0.0, 0.5], vec![-0.5, 1.5, 0.0]])?;
    let d: Dynamics = field_srd(&g, &sigma(&[0.9, 0.4, 1.3]))?.into();
    let x0 = state(&[0.3, 0.3, 0.4]);
    let cfg = IntegratorConfig::new(1e-2, 5.0);
    let opts = EnsembleOptions {
        keep_trajectories: true,
        observe_times: vec![1.0],
        ..Default::default()
    };
    let bytes = |e: &EnsembleResult| -> Result<(Vec<u8>, Vec<u8>)> {
        let mut csv = Vec::new();
        let t = &e.trajectories.as_ref().expect("kept")[3];
        t.write_csv(&mut csv)
            .map_err(|e| Error::io(std::path::Path::new("<memory>"), e))?;
        Ok((serde_json::to_vec(e)?, csv))
    };
    let a = bytes(&simulate_ensemble(&d, &x0, &cfg, seed, 16, &opts)?)?;
    let b = bytes(&simulate_ensemble(&d, &x0, &cfg, seed, 16, &opts)?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let c = pool.install(|| simulate_ensemble(&d, &x0, &cfg, seed, 16, &opts))?;
    let c = bytes(&c)?;
    Ok(a == b && a == c)
}

type Check<'a> = (
    u8,
    &'static str,
    Box<dyn FnOnce(&mut Suite<'_>) -> Result<(bool, String)> + 'a>,
);

type EnsembleCheck = fn(&Params, &EnsembleResult) -> Result<(bool, String)>;

/// Runs the selected criteria and reports each. `progress` sees every
/// result as soon as it is known.
pub fn verify_suite(opts: &VerifyOptions, mut progress: impl FnMut(&CriterionResult)) -> VerifyReport {
    let mut suite = Suite {
        opts,
        p: Params::of(opts.tier),
        simplex: SimplexLog::default(),
    };
    let mut criteria = Vec::new();
    let mut record = |id: u8, title: &'static str, started: Instant, outcome: Result<(bool, String)>| {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        let r = CriterionResult {
            id,
            title: title.to_string(),
            passed,
            detail,
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&r);
        criteria.push(r);
    };

    if (1..=3).any(|i| opts.selected(i)) {
        let started = Instant::now();
        match suite.pure_noise() {
            Ok(e) => {
                let pure: [(u8, &str, EnsembleCheck); 3] = [
                    (1, "pure-noise survival", Suite::survival),
                    (2, "martingale property", Suite::martingale),
                    (3, "pure-noise absorption", Suite::absorption),
                ];
                for (id, title, f) in pure {
                    if opts.selected(id) {
                        record(id, title, started, f(&suite.p, &e));
                    }
                }
            }
            Err(err) => {
                for (id, title) in [
                    (1, "pure-noise survival"),
                    (2, "martingale property"),
                    (3, "pure-noise absorption"),
                ] {
                    if opts.selected(id) {
                        record(id, title, started, Err(Error::Validation(err.to_string())));
                    }
                }
            }
        }
    }

    let rest: Vec<Check<'_>> = vec![
        (4, "aggregate-shocks elimination", Box::new(|s| s.aggregate())),
        (5, "exponential-learning coexistence", Box::new(|s| s.coexistence())),
        (6, "stratonovich identity", Box::new(|s| s.stratonovich())),
        (7, "dominated-strategy extinction", Box::new(|s| s.extinction())),
        (
            8,
            "strict-equilibrium stability",
            Box::new(|s| {
                let p = s.attraction([1.0, 0.0], 0.5, SEED + 8)?;
                let min = s.p.stable_min;
                Ok((
                    p.estimate >= min,
                    format!("P(converge to e_α) = {}, want ≥ {min}", show(&p)),
                ))
            }),
        ),
        (
            9,
            "non-Nash attractor",
            Box::new(|s| {
                let p = s.attraction([1.0, 1.3], 2.0, SEED + 9)?;
                let min = s.p.non_nash_min;
                Ok((
                    p.estimate >= min,
                    format!("P(converge to e_α) = {}, want ≥ {min}", show(&p)),
                ))
            }),
        ),
        (10, "second-order quadratic decay", Box::new(|s| s.decay())),
        (11, "hitting probability", Box::new(|s| s.hitting())),
        (12, "structural invariants", Box::new(|s| s.invariants())),
    ];
    for (id, title, check) in rest {
        if opts.selected(id) {
            let started = Instant::now();
            let outcome = check(&mut suite);
            record(id, title, started, outcome);
        }
    }
    VerifyReport {
        tier: opts.tier,
        tamper: opts.tamper,
        criteria,
    }
}
