//! Analytic evaluation of the joint exit functional `Φ` and the decision
//! parameters read off it.
//!
//! Two evaluators are provided. [`functional_phi_sum`] builds the generating
//! function `Ψ(x, y)` term by term,
//!
//! ```text
//! Ψ = Σ_{j ≥ j_min} ζ^j Γ₀ Γ^{j−1} · γ₁(1 − φ_x) · Σ_{k ≥ max(0, j−m)} φ_y^{k−j}(1 − φ_y)
//! ```
//!
//! with the inner sum taken as its geometric limit `φ_y^{max(0,j−m)−j}`, then
//! extracts the `(M_a, M_b)` rectangle sum. It is the reference evaluator.
//! [`functional_phi_closed`] evaluates the collapsed quotient
//!
//! ```text
//! ζ Γ₀ γ₁ (1 − φ_x) (ζΓ)^{j_min} / (φ_y^{m} (1 − ζΓ))
//! ```
//!
//! as written. The two differ by a factor `ζΓ` (and by the `k ≥ 0` clamp when
//! `j < m`); [`closed_to_sum_ratio`] measures that gap instead of hiding it.

use std::fmt;

use crate::error::{DuelError, Result};
use crate::model::{derive_constants, DecisionConstants, FunctionalParams, GameSpec, HittingCdf};
use crate::series::{bs_ipow, bs_mul, bs_recip, d_inverse, BiSeries};
use crate::transforms::{gamma_eval, lst_eval, taylor_in_x, TaylorJet, Transform};

/// Upper end of the bracketing search for `t*`.
pub const T_MAX: f64 = 1e6;

/// Extra truncation orders carried beyond `(M_a, M_b)`.
pub const GUARD_BAND: usize = 8;

/// Term cap used by the derivative extractors.
pub const DEFAULT_J_MAX: usize = 10_000;

/// Richardson steps for the one-sided derivatives.
pub const RICHARDSON_STEPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

const TAIL_TOL: f64 = 1e-12;
const UNSTABLE_REL: f64 = 1e-3;

/// Earliest `t ≥ 0` with `P_a(t) + P_b(t) ≥ 1`.
pub fn optimal_threshold_time(cdf_a: &HittingCdf, cdf_b: &HittingCdf) -> Result<f64> {
    let reached = |t: f64| cdf_a.eval(t) + cdf_b.eval(t) >= 1.0;
    if reached(0.0) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1e-3;
    while !reached(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > T_MAX {
            if reached(T_MAX) {
                hi = T_MAX;
                break;
            }
            return Err(DuelError::ThresholdUnreachable(T_MAX));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMethod {
    Closed,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiResult {
    pub value: f64,
    pub j_min_used: u64,
    pub m_cap_used: u64,
    pub method: PhiMethod,
    /// Last `j` that contributed to the sum.
    pub truncation_j: Option<usize>,
}

/// The `x`- and `y`-dependent building blocks of `Ψ`.
#[derive(Debug, Clone)]
pub struct ClosedFormTerms {
    /// `Γ = γ(z₀z₁x, θ₀+θ₁)`
    pub gamma: TaylorJet,
    /// `Γ₀ = γ₀(z₀z₁x, θ₀+θ₁)`
    pub gamma0: TaylorJet,
    /// `γ₁ = γ(z₁, θ₁)`
    pub gamma1: f64,
    /// `φ_A(x, 0)`
    pub phi_x: TaylorJet,
    /// `φ_B(y, 0)`
    pub phi_y: TaylorJet,
    /// `φ_A⁰(x, 0)`, the first-epoch increment, used by the `j = 0` term.
    pub phi0_x: TaylorJet,
    /// `γ₀(z₁, θ₁)`
    pub gamma1_0: f64,
}

impl ClosedFormTerms {
    pub fn build(
        spec: &GameSpec,
        params: &FunctionalParams,
        order_x: usize,
        order_y: usize,
    ) -> Result<Self> {
        let step = spec.observation.step_law;
        let delay = spec.observation.delay_law;
        let (la, lb) = (spec.lambda_a(), spec.lambda_b());
        let scale = params.z0 * params.z1;
        let theta = params.theta0 + params.theta1;
        let gamma = taylor_in_x(
            &Transform::Gamma {
                step_law: step,
                lambda_a: la,
                lambda_b: lb,
                scale,
                theta,
            },
            order_x,
        )?;
        let gamma0 = taylor_in_x(
            &Transform::Gamma0 {
                delay_law: delay,
                lambda_a: la,
                lambda_b: lb,
                scale,
                theta,
            },
            order_x,
        )?;
        let phi_x = taylor_in_x(
            &Transform::Phi {
                step_law: step,
                lambda: la,
                theta: 0.0,
            },
            order_x,
        )?;
        let phi0_x = taylor_in_x(
            &Transform::Phi0 {
                delay_law: delay,
                lambda: la,
                theta: 0.0,
            },
            order_x,
        )?;
        let phi_y = taylor_in_x(
            &Transform::Phi {
                step_law: step,
                lambda: lb,
                theta: 0.0,
            },
            order_y,
        )?;
        let gamma1 = gamma_eval(&step, la, lb, params.z1, params.theta1)?;
        let gamma1_0 = lst_eval(&delay, params.theta1 + (la - lb) * (1.0 - params.z1))?;
        Ok(ClosedFormTerms {
            gamma,
            gamma0,
            gamma1,
            phi_x,
            phi_y,
            phi0_x,
            gamma1_0,
        })
    }
}

/// Series-level view of the terms at fixed truncation orders.
struct Prepared {
    constants: DecisionConstants,
    mx: usize,
    my: usize,
    /// `ζΓ`
    zeta_gamma: BiSeries,
    gamma0: BiSeries,
    /// `γ₁(1 − φ_x)`
    l2: BiSeries,
    /// `γ₁⁰(1 − φ⁰_x)`
    l2_first: BiSeries,
    phi_y: BiSeries,
}

fn prepare(spec: &GameSpec, params: &FunctionalParams) -> Result<Prepared> {
    params.validate()?;
    let constants = derive_constants(spec)?;
    let mx = spec.capacity_a as usize + GUARD_BAND;
    let my = spec.capacity_b as usize + GUARD_BAND;
    let t = ClosedFormTerms::build(spec, params, mx, my)?;
    let gamma = BiSeries::from_x_jet(&t.gamma, mx, my);
    let zeta_gamma = gamma.scale(params.zeta);
    let rate = zeta_gamma.constant_term().abs();
    if rate >= 1.0 {
        return Err(DuelError::SeriesDivergence(rate));
    }
    Ok(Prepared {
        constants,
        mx,
        my,
        zeta_gamma,
        gamma0: BiSeries::from_x_jet(&t.gamma0, mx, my),
        l2: BiSeries::from_x_jet(&t.phi_x, mx, my)
            .rsub_scalar(1.0)
            .scale(t.gamma1),
        l2_first: BiSeries::from_x_jet(&t.phi0_x, mx, my)
            .rsub_scalar(1.0)
            .scale(t.gamma1_0),
        phi_y: BiSeries::from_y_jet(&t.phi_y, mx, my),
    })
}

/// Reference evaluator: explicit summation over the exit index `j`.
pub fn functional_phi_sum(
    spec: &GameSpec,
    params: &FunctionalParams,
    j_max: usize,
) -> Result<PhiResult> {
    let p = prepare(spec, params)?;
    let rate = p.zeta_gamma.constant_term().abs();
    let bound = rate.powf(j_max as f64) / (1.0 - rate);
    if bound.is_nan() || bound >= TAIL_TOL {
        return Err(DuelError::TruncationTooShort { j_max, bound });
    }
    let m = p.constants.m_cap;
    let j_min = p.constants.j_min;

    // φ_y^{−i} for i = 0..=min(m, j_max); the inner geometric sum over k
    // contributes φ_y^{max(0, j−m) − j} = φ_y^{−min(j, m)}.
    let y_cap = m.min(j_max as u64) as usize;
    let phi_y_inv = if y_cap > 0 {
        Some(bs_recip(&p.phi_y)?)
    } else {
        None
    };
    let mut y_pows = Vec::with_capacity(y_cap + 1);
    y_pows.push(BiSeries::one(p.mx, p.my));
    for i in 1..=y_cap {
        let next = bs_mul(&y_pows[i - 1], phi_y_inv.as_ref().expect("y_cap > 0"))?;
        y_pows.push(next);
    }
    let l2y: Vec<BiSeries> = y_pows
        .iter()
        .map(|yp| bs_mul(&p.l2, yp))
        .collect::<Result<_>>()?;

    let mut psi = BiSeries::zeros(p.mx, p.my);
    let mut last_j = None;
    if j_min == 0 {
        // first epoch: A_{−1} = 0, τ_{−1} = 0, so L₁ = 1 and the increment is A₀
        psi = p.l2_first.clone();
        last_j = Some(0);
    }
    let j_start = j_min.max(1) as usize;
    if j_start <= j_max {
        // ζ^j Γ₀ Γ^{j−1} = ζ Γ₀ (ζΓ)^{j−1}
        let mut lead = bs_mul(
            &p.gamma0.scale(params.zeta),
            &bs_ipow(&p.zeta_gamma, j_start as i64 - 1)?,
        )?;
        for j in j_start..=j_max {
            let l2_j = &l2y[(j as u64).min(m).min(y_cap as u64) as usize];
            let term = bs_mul(&lead, l2_j)?;
            for (acc, t) in psi.coeffs_mut().iter_mut().zip(term.coeffs()) {
                *acc += t;
            }
            last_j = Some(j);
            lead = bs_mul(&lead, &p.zeta_gamma)?;
            if lead.max_abs() < f64::MIN_POSITIVE {
                break;
            }
        }
    }
    Ok(PhiResult {
        value: d_inverse(&psi, spec.capacity_a as usize, spec.capacity_b as usize)?,
        j_min_used: j_min,
        m_cap_used: m,
        method: PhiMethod::Sum,
        truncation_j: last_j,
    })
}

fn closed_core(spec: &GameSpec, p: &Prepared, zeta: f64, m_cap: u64) -> Result<PhiResult> {
    let j_min = p.constants.j_min;
    let mut num = bs_mul(&p.gamma0.scale(zeta), &p.l2)?;
    num = bs_mul(&num, &bs_ipow(&p.zeta_gamma, j_min as i64)?)?;
    let mut f = bs_mul(&num, &bs_recip(&p.zeta_gamma.rsub_scalar(1.0))?)?;
    if m_cap > 0 {
        f = bs_mul(&f, &bs_ipow(&p.phi_y, -(m_cap as i64))?)?;
    }
    Ok(PhiResult {
        value: d_inverse(&f, spec.capacity_a as usize, spec.capacity_b as usize)?,
        j_min_used: j_min,
        m_cap_used: m_cap,
        method: PhiMethod::Closed,
        truncation_j: None,
    })
}

/// The collapsed closed form, evaluated with series arithmetic.
pub fn functional_phi_closed(spec: &GameSpec, params: &FunctionalParams) -> Result<PhiResult> {
    let p = prepare(spec, params)?;
    let m = p.constants.m_cap;
    closed_core(spec, &p, params.zeta, m)
}

/// Closed form for `M_a = M_b`, where the `φ_y` factor drops out.
pub fn functional_phi_equal_assets(
    spec: &GameSpec,
    params: &FunctionalParams,
) -> Result<PhiResult> {
    if spec.capacity_a != spec.capacity_b {
        return Err(DuelError::Precondition(format!(
            "equal capacities required (M_a = {}, M_b = {})",
            spec.capacity_a, spec.capacity_b
        )));
    }
    let p = prepare(spec, params)?;
    closed_core(spec, &p, params.zeta, 0)
}

/// `closed / sum` at the given parameters and sum truncation.
pub fn closed_to_sum_ratio(
    spec: &GameSpec,
    params: &FunctionalParams,
    j_max: usize,
) -> Result<f64> {
    let closed = functional_phi_closed(spec, params)?.value;
    let sum = functional_phi_sum(spec, params, j_max)?.value;
    Ok(closed / sum)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeEstimate {
    pub value: f64,
    pub error_estimate: f64,
}

/// Richardson extrapolation of first-order one-sided difference quotients
/// taken at the halving steps in [`RICHARDSON_STEPS`].
fn richardson(quotient: impl Fn(f64) -> Result<f64>) -> Result<DerivativeEstimate> {
    let g: Vec<f64> = RICHARDSON_STEPS
        .iter()
        .map(|&h| quotient(h))
        .collect::<Result<_>>()?;
    let r1 = [2.0 * g[1] - g[0], 2.0 * g[2] - g[1]];
    let r2 = (4.0 * r1[1] - r1[0]) / 3.0;
    let err = (r2 - r1[1]).abs();
    if err > UNSTABLE_REL * r2.abs().max(1e-6) {
        return Err(DuelError::DerivativeUnstable(r1[1], r2));
    }
    Ok(DerivativeEstimate {
        value: r2,
        error_estimate: err,
    })
}

/// `∂Φ/∂ζ` at `ζ → 1⁻` with the remaining arguments at `(1, 1, 0, 0)`:
/// the mean exit index, weighted by the indicator events.
pub fn expected_exit_index(spec: &GameSpec) -> Result<DerivativeEstimate> {
    expected_exit_index_with(spec, DEFAULT_J_MAX)
}

pub fn expected_exit_index_with(spec: &GameSpec, j_max: usize) -> Result<DerivativeEstimate> {
    let base = FunctionalParams::default();
    let at_one = functional_phi_sum(spec, &base, j_max)?.value;
    richardson(|h| {
        let v = functional_phi_sum(spec, &base.with_zeta(1.0 - h), j_max)?.value;
        Ok((at_one - v) / h)
    })
}

/// `−∂Φ/∂θ₀` at `θ₀ → 0⁺`: the mean pre-exit time, indicator-weighted.
pub fn expected_preexit_time(spec: &GameSpec) -> Result<DerivativeEstimate> {
    expected_preexit_time_with(spec, DEFAULT_J_MAX)
}

pub fn expected_preexit_time_with(spec: &GameSpec, j_max: usize) -> Result<DerivativeEstimate> {
    let base = FunctionalParams::default();
    let at_zero = functional_phi_sum(spec, &base, j_max)?.value;
    richardson(|h| {
        let v = functional_phi_sum(spec, &base.with_theta0(h), j_max)?.value;
        Ok(-(v - at_zero) / h)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Equal fuel: shoot as soon as `t*` has passed.
    ShootAtThreshold,
    /// Less fuel than the opponent: wait for the opponent's shot.
    Wait,
    General,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ShootAtThreshold => "shoot_at_threshold",
            Strategy::Wait => "wait",
            Strategy::General => "general",
        })
    }
}

pub fn recommend_strategy(spec: &GameSpec) -> Strategy {
    use std::cmp::Ordering::*;
    match spec.capacity_a.cmp(&spec.capacity_b) {
        Equal => Strategy::ShootAtThreshold,
        Less => Strategy::Wait,
        Greater => Strategy::General,
    }
}
