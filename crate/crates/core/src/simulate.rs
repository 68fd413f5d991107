//! Monte Carlo realisation of the duel.
//!
//! Each replication draws its own observation epochs and Poisson drain
//! counts, so nothing here shares code with the transform machinery in
//! `analytic`. Replication `i` uses a ChaCha8 generator seeded with the master
//! seed and switched to stream `i`; replications are grouped into fixed
//! batches and batch summaries are merged pairwise in index order, so results
//! do not depend on how many threads run the batches.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::error::{DuelError, Result};
use crate::model::{derive_constants, DecisionConstants, ExitRule, FunctionalParams, GameSpec};
use crate::transforms::LstFamily;

/// Observation epochs generated before a path is declared non-terminating.
pub const DEFAULT_PATH_CAP: usize = 100_000;

/// Smallest replication count accepted by the estimators.
pub const MIN_REPLICATIONS: u64 = 1_000;

/// Smallest draw count accepted by [`validate_transform`].
pub const MIN_TRANSFORM_DRAWS: u64 = 10_000;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "DUELFUEL_THREADS";

const BATCH_SIZE: u64 = 4_096;

/// One simulated trajectory, observed up to the exit epoch(s).
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Observation epochs `τ₀ < τ₁ < …`.
    pub tau: Vec<f64>,
    /// `Δ_k = τ_k − τ_{k−1}` with `τ_{−1} = 0`, so `delta[0] = τ₀`.
    pub delta: Vec<f64>,
    /// `X_k` (with `X₀ = A₀`).
    pub x_incr: Vec<u64>,
    /// `Y_k` (with `Y₀ = B₀`).
    pub y_incr: Vec<u64>,
    pub a_cum: Vec<u64>,
    pub b_cum: Vec<u64>,
    pub nu: Option<usize>,
    /// `None` when player B cannot exit (`λ_b = 0` under exhaustion) or the
    /// path was cut off.
    pub mu: Option<usize>,
    /// `ν ≥ ⌈t*/σ̄⌉`
    pub indicator_time: bool,
    /// `ν − μ ≤ ⌊M_ab/σ̄⌋`
    pub indicator_asset: bool,
    /// False when the epoch cap was hit before the exit indices resolved.
    pub terminated: bool,
}

impl PathRecord {
    pub fn win(&self) -> bool {
        self.terminated && self.indicator_time && self.indicator_asset
    }

    fn a_before(&self, k: usize) -> u64 {
        if k == 0 {
            0
        } else {
            self.a_cum[k - 1]
        }
    }

    fn tau_before(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.tau[k - 1]
        }
    }

    /// `(B_{μ−1}, B_μ)`; when `μ` never fires, B's final level for both.
    fn b_at_mu(&self) -> (u64, u64) {
        match self.mu {
            Some(0) => (0, self.b_cum[0]),
            Some(m) => (self.b_cum[m - 1], self.b_cum[m]),
            None => {
                let last = *self.b_cum.last().unwrap_or(&0);
                (last, last)
            }
        }
    }

    /// `ζ^ν z₀^{A_{ν−1}−B_{μ−1}} z₁^{A_ν−B_μ} e^{−θ₀τ_{ν−1}} e^{−θ₁τ_ν}` times
    /// both indicators. Negative exponents are kept unless `clamp` is set.
    pub fn functional_sample(&self, params: &FunctionalParams, clamp: bool) -> Option<f64> {
        let nu = self.nu.filter(|_| self.terminated)?;
        if !(self.indicator_time && self.indicator_asset) {
            return Some(0.0);
        }
        let (b_pre, b_exit) = self.b_at_mu();
        let mut e0 = self.a_before(nu) as i64 - b_pre as i64;
        let mut e1 = self.a_cum[nu] as i64 - b_exit as i64;
        if clamp {
            e0 = e0.max(0);
            e1 = e1.max(0);
        }
        Some(
            params.zeta.powi(nu as i32)
                * params.z0.powi(e0 as i32)
                * params.z1.powi(e1 as i32)
                * (-params.theta0 * self.tau_before(nu)).exp()
                * (-params.theta1 * self.tau[nu]).exp(),
        )
    }
}

fn sample_time(law: &LstFamily, rng: &mut ChaCha8Rng) -> f64 {
    match *law {
        LstFamily::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
        LstFamily::Deterministic { value } => value,
        LstFamily::Erlang { shape, rate } => {
            let e = Exp::new(rate).expect("validated rate");
            (0..shape).map(|_| e.sample(rng)).sum()
        }
    }
}

fn sample_poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d: Poisson<f64> = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u64
}

fn generator(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Core path generator; `constants` supply the indicator thresholds.
pub fn sample_path_with(
    spec: &GameSpec,
    constants: &DecisionConstants,
    rng: &mut ChaCha8Rng,
    cap: usize,
) -> PathRecord {
    let (la, lb) = (spec.lambda_a(), spec.lambda_b());
    let (ma, mb) = (spec.capacity_a as u64, spec.capacity_b as u64);
    let mut p = PathRecord {
        tau: Vec::new(),
        delta: Vec::new(),
        x_incr: Vec::new(),
        y_incr: Vec::new(),
        a_cum: Vec::new(),
        b_cum: Vec::new(),
        nu: None,
        mu: None,
        indicator_time: false,
        indicator_asset: false,
        terminated: false,
    };
    let (mut t, mut a, mut b) = (0.0, 0u64, 0u64);
    for k in 0..cap {
        let law = if k == 0 {
            &spec.observation.delay_law
        } else {
            &spec.observation.step_law
        };
        let dt = sample_time(law, rng);
        let x = sample_poisson(la * dt, rng);
        let y = sample_poisson(lb * dt, rng);
        t += dt;
        a += x;
        b += y;
        p.tau.push(t);
        p.delta.push(dt);
        p.x_incr.push(x);
        p.y_incr.push(y);
        p.a_cum.push(a);
        p.b_cum.push(b);

        let done = match spec.exit_rule {
            ExitRule::Exhaustion => {
                if p.nu.is_none() && a > ma {
                    p.nu = Some(k);
                }
                if p.mu.is_none() && b > mb {
                    p.mu = Some(k);
                }
                // with no drain B's level is frozen at zero and μ never fires
                p.nu.is_some() && (p.mu.is_some() || lb == 0.0)
            }
            ExitRule::Dominance => {
                if ma as i64 - a as i64 >= mb as i64 - b as i64 {
                    p.nu = Some(k);
                    p.mu = Some(k);
                    true
                } else {
                    false
                }
            }
        };
        if done {
            p.terminated = true;
            break;
        }
    }
    if p.terminated {
        let nu = p.nu.expect("terminated paths have ν");
        p.indicator_time = nu as u64 >= constants.j_min;
        p.indicator_asset = match p.mu {
            Some(mu) => nu as i64 - mu as i64 <= constants.m_cap as i64,
            None => true,
        };
    }
    p
}

/// One trajectory from a fresh generator seeded with `seed`.
pub fn sample_path(spec: &GameSpec, seed: u64) -> Result<PathRecord> {
    let c = derive_constants(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_path_with(spec, &c, &mut rng, DEFAULT_PATH_CAP))
}

/// Replication `index` of a run with `master_seed`.
pub fn replicate_path(
    spec: &GameSpec,
    constants: &DecisionConstants,
    master_seed: u64,
    index: u64,
) -> PathRecord {
    let mut rng = generator(master_seed, index);
    sample_path_with(spec, constants, &mut rng, DEFAULT_PATH_CAP)
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&self, o: &Moments) -> Moments {
        if self.n == 0 {
            return *o;
        }
        if o.n == 0 {
            return *self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64,
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }
}

fn merge_pairwise<const K: usize>(mut level: Vec<([Moments; K], u64)>) -> ([Moments; K], u64) {
    if level.is_empty() {
        return ([Moments::default(); K], 0);
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|c| {
                if c.len() == 1 {
                    c[0]
                } else {
                    let mut m = c[0].0;
                    for (a, b) in m.iter_mut().zip(c[1].0.iter()) {
                        *a = a.merge(b);
                    }
                    (m, c[0].1 + c[1].1)
                }
            })
            .collect();
    }
    level[0]
}

/// Worker threads requested through [`THREADS_ENV`], if any.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run `n` replications. `f` maps a replication's generator to `K` optional
/// observations (or `None` for a non-terminating replication). Returns the
/// merged moments and the non-terminating count.
fn replicate<const K: usize, F>(n: u64, master_seed: u64, f: F) -> ([Moments; K], u64)
where
    F: Fn(&mut ChaCha8Rng) -> Option<[Option<f64>; K]> + Sync,
{
    let batches = n.div_ceil(BATCH_SIZE);
    let run = || {
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut acc = [Moments::default(); K];
                let mut lost = 0u64;
                let end = ((b + 1) * BATCH_SIZE).min(n);
                for i in b * BATCH_SIZE..end {
                    let mut rng = generator(master_seed, i);
                    match f(&mut rng) {
                        Some(obs) => {
                            for (m, v) in acc.iter_mut().zip(obs) {
                                if let Some(v) = v {
                                    m.push(v);
                                }
                            }
                        }
                        None => lost += 1,
                    }
                }
                (acc, lost)
            })
            .collect::<Vec<_>>()
    };
    let per_batch = match configured_threads() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    };
    merge_pairwise(per_batch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub quantity: String,
    pub mean: f64,
    pub std_error: f64,
    /// Replications that contributed.
    pub n_replications: u64,
    /// Replications dropped because the epoch cap was hit.
    pub non_terminating: u64,
}

impl EstimateReport {
    fn from_moments(quantity: &str, m: &Moments, lost: u64) -> Self {
        EstimateReport {
            quantity: quantity.to_string(),
            mean: m.mean,
            std_error: m.std_error(),
            n_replications: m.n,
            non_terminating: lost,
        }
    }
}

fn check_n(n: u64, min: u64) -> Result<()> {
    if n < min {
        return Err(DuelError::InvalidParams(format!(
            "n = {n} below minimum {min}"
        )));
    }
    Ok(())
}

/// Functional estimates with signed and with clamped state exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalEstimate {
    pub signed: EstimateReport,
    pub clamped: EstimateReport,
}

/// Monte Carlo estimate of `Φ(ζ, z₀, z₁, θ₀, θ₁)` with signed exponents.
pub fn monte_carlo_functional(
    spec: &GameSpec,
    params: &FunctionalParams,
    n: u64,
    master_seed: u64,
) -> Result<EstimateReport> {
    Ok(monte_carlo_functional_both(spec, params, n, master_seed, DEFAULT_PATH_CAP)?.signed)
}

/// Signed and clamped estimates from the same paths, each path cut off after
/// `path_cap` epochs.
pub fn monte_carlo_functional_both(
    spec: &GameSpec,
    params: &FunctionalParams,
    n: u64,
    master_seed: u64,
    path_cap: usize,
) -> Result<FunctionalEstimate> {
    check_n(n, MIN_REPLICATIONS)?;
    params.validate()?;
    let c = derive_constants(spec)?;
    let (m, lost) = replicate::<2, _>(n, master_seed, |rng| {
        let p = sample_path_with(spec, &c, rng, path_cap);
        let s = p.functional_sample(params, false)?;
        Some([Some(s), p.functional_sample(params, true)])
    });
    if m[0].n == 0 {
        return Err(DuelError::NoValidSamples(lost));
    }
    Ok(FunctionalEstimate {
        signed: EstimateReport::from_moments("phi", &m[0], lost),
        clamped: EstimateReport::from_moments("phi_clamped", &m[1], lost),
    })
}

/// Indicator-weighted exit statistics, keyed by quantity name:
///
/// * `win_probability`: `P(ν−μ ≤ ⌊M_ab/σ̄⌋, ν ≥ ⌈t*/σ̄⌉)`
/// * `e_nu`, `e_mu`, `e_tau_nu`, `e_tau_pre`: `E[q · 1{win}]` for
///   `q = ν, μ, τ_ν, τ_{ν−1}` (`e_mu` only over paths where `μ` fires)
/// * `e_nu_unweighted`, `e_mu_unweighted`: plain means of `ν` and `μ`
pub fn estimate_exit_stats(
    spec: &GameSpec,
    n: u64,
    master_seed: u64,
) -> Result<BTreeMap<String, EstimateReport>> {
    estimate_exit_stats_capped(spec, n, master_seed, DEFAULT_PATH_CAP)
}

pub fn estimate_exit_stats_capped(
    spec: &GameSpec,
    n: u64,
    master_seed: u64,
    path_cap: usize,
) -> Result<BTreeMap<String, EstimateReport>> {
    check_n(n, MIN_REPLICATIONS)?;
    let c = derive_constants(spec)?;
    let (m, lost) = replicate::<7, _>(n, master_seed, |rng| {
        let p = sample_path_with(spec, &c, rng, path_cap);
        if !p.terminated {
            return None;
        }
        let nu = p.nu.expect("terminated") as f64;
        let w = if p.win() { 1.0 } else { 0.0 };
        Some([
            Some(w),
            Some(nu * w),
            p.mu.map(|mu| mu as f64 * w),
            Some(p.tau[p.nu.unwrap()] * w),
            Some(p.tau_before(p.nu.unwrap()) * w),
            Some(nu),
            p.mu.map(|mu| mu as f64),
        ])
    });
    if m[0].n == 0 {
        return Err(DuelError::NoValidSamples(lost));
    }
    let names = [
        "win_probability",
        "e_nu",
        "e_mu",
        "e_tau_nu",
        "e_tau_pre",
        "e_nu_unweighted",
        "e_mu_unweighted",
    ];
    Ok(names
        .iter()
        .zip(m.iter())
        .map(|(name, mo)| {
            (
                name.to_string(),
                EstimateReport::from_moments(name, mo, lost),
            )
        })
        .collect())
}

/// Empirical distribution of `ν`: `counts[k]` paths exited at `k`; the
/// second value counts non-terminating paths.
pub fn exit_index_histogram(spec: &GameSpec, n: u64, master_seed: u64) -> Result<(Vec<u64>, u64)> {
    let c = derive_constants(spec)?;
    let batches = n.div_ceil(BATCH_SIZE);
    let run = || {
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut counts: Vec<u64> = Vec::new();
                let mut lost = 0;
                for i in b * BATCH_SIZE..((b + 1) * BATCH_SIZE).min(n) {
                    let mut rng = generator(master_seed, i);
                    let p = sample_path_with(spec, &c, &mut rng, DEFAULT_PATH_CAP);
                    match p.nu.filter(|_| p.terminated) {
                        Some(k) => {
                            if counts.len() <= k {
                                counts.resize(k + 1, 0);
                            }
                            counts[k] += 1;
                        }
                        None => lost += 1,
                    }
                }
                (counts, lost)
            })
            .collect::<Vec<_>>()
    };
    let parts = match configured_threads() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .expect("thread pool")
            .install(run),
        None => run(),
    };
    let mut counts: Vec<u64> = Vec::new();
    let mut lost = 0;
    for (c, l) in parts {
        if counts.len() < c.len() {
            counts.resize(c.len(), 0);
        }
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        lost += l;
    }
    Ok((counts, lost))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformCheck {
    pub report: EstimateReport,
    /// `e^{λ_a s (g − 1)}`
    pub analytic: f64,
}

/// Empirical `E[g^{A(s)}]` for player A's drain count over `[0, s]`.
pub fn validate_transform(
    spec: &GameSpec,
    s: f64,
    g: f64,
    n: u64,
    master_seed: u64,
) -> Result<TransformCheck> {
    check_n(n, MIN_TRANSFORM_DRAWS)?;
    if !(s > 0.0 && (0.0..=1.0).contains(&g)) {
        return Err(DuelError::InvalidParams(format!(
            "need s > 0 and g in [0, 1] (got {s}, {g})"
        )));
    }
    let la = spec.lambda_a();
    let (m, lost) = replicate::<1, _>(n, master_seed, |rng| {
        let count = sample_poisson(la * s, rng);
        Some([Some(g.powi(count as i32))])
    });
    Ok(TransformCheck {
        report: EstimateReport::from_moments("transform", &m[0], lost),
        analytic: (la * s * (g - 1.0)).exp(),
    })
}
