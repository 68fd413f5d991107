//! Parameter types for one duel instance and the decision constants derived
//! from them.

use serde::{Deserialize, Serialize};

use crate::analytic::optimal_threshold_time;
use crate::error::{DuelError, Result};
use crate::transforms::LstFamily;

/// Ratios within this relative distance of an integer are snapped to it
/// before taking floors and ceilings.
const SNAP_TOL: f64 = 1e-9;

/// Probability that a player's shot has hit by time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HittingCdf {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    DeterministicStep { jump_time: f64 },
}

impl HittingCdf {
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            HittingCdf::Exponential { rate } => -(-rate * t).exp_m1(),
            HittingCdf::Weibull { shape, scale } => -(-(t / scale).powf(shape)).exp_m1(),
            HittingCdf::DeterministicStep { jump_time } => {
                if t >= jump_time {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Characteristic time scale of the law.
    pub fn scale(&self) -> f64 {
        match *self {
            HittingCdf::Exponential { rate } => 1.0 / rate,
            HittingCdf::Weibull { scale, .. } => scale,
            HittingCdf::DeterministicStep { jump_time } => jump_time,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            HittingCdf::Exponential { rate } if !ok(rate) => {
                vec![format!("exponential rate must be positive (got {rate})")]
            }
            HittingCdf::Weibull { shape, scale } if !ok(shape) || !ok(scale) => {
                vec![format!(
                    "weibull shape and scale must be positive (got {shape}, {scale})"
                )]
            }
            HittingCdf::DeterministicStep { jump_time }
                if !(jump_time.is_finite() && jump_time >= 0.0) =>
            {
                vec![format!("jump_time must be nonnegative (got {jump_time})")]
            }
            _ => Vec::new(),
        }
    }
}

/// Unit-mark Poisson drain process of one player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedProcessSpec {
    /// Drain events per unit time.
    pub intensity: f64,
}

/// Delayed renewal process of observation epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    /// Law of the first epoch `τ₀`.
    pub delay_law: LstFamily,
    /// Law of the gaps `Δ_k = τ_k − τ_{k−1}`, `k ≥ 1`.
    pub step_law: LstFamily,
}

/// How the exit indices `ν`, `μ` are read off a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitRule {
    /// `ν = inf{k : A_k > M_a}`, `μ = inf{j : B_j > M_b}`, independently.
    #[default]
    Exhaustion,
    /// `ν = μ = inf{k : M_a − A_k ≥ M_b − B_k}`.
    Dominance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub player_a: MarkedProcessSpec,
    pub player_b: MarkedProcessSpec,
    pub observation: ObservationSpec,
    /// `M_a`, in fuel units.
    pub capacity_a: u32,
    /// `M_b`, in fuel units.
    pub capacity_b: u32,
    pub cdf_a: HittingCdf,
    pub cdf_b: HittingCdf,
    pub exit_rule: ExitRule,
}

impl GameSpec {
    pub fn lambda_a(&self) -> f64 {
        self.player_a.intensity
    }

    pub fn lambda_b(&self) -> f64 {
        self.player_b.intensity
    }

    /// The reference instance: unit-rate exponential observation gaps and
    /// delay, `λ_a = 2`, `λ_b = 1`, `M_a = M_b = 4`, unit exponential CDFs.
    pub fn canonical() -> Self {
        GameSpec {
            player_a: MarkedProcessSpec { intensity: 2.0 },
            player_b: MarkedProcessSpec { intensity: 1.0 },
            observation: ObservationSpec {
                delay_law: LstFamily::exponential(1.0),
                step_law: LstFamily::exponential(1.0),
            },
            capacity_a: 4,
            capacity_b: 4,
            cdf_a: HittingCdf::Exponential { rate: 1.0 },
            cdf_b: HittingCdf::Exponential { rate: 1.0 },
            exit_rule: ExitRule::Exhaustion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConstants {
    pub t_star: f64,
    /// Mean observation gap.
    pub sigma_bar: f64,
    /// `⌈t*/σ̄⌉`
    pub j_min: u64,
    /// `⌊M_ab/σ̄⌋`
    pub m_cap: u64,
    /// `|M_a − M_b|`
    pub m_ab: u64,
}

/// Argument tuple `(ζ, z₀, z₁, θ₀, θ₁)` of the joint functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalParams {
    pub zeta: f64,
    pub z0: f64,
    pub z1: f64,
    pub theta0: f64,
    pub theta1: f64,
}

impl Default for FunctionalParams {
    fn default() -> Self {
        FunctionalParams {
            zeta: 1.0,
            z0: 1.0,
            z1: 1.0,
            theta0: 0.0,
            theta1: 0.0,
        }
    }
}

impl FunctionalParams {
    pub fn with_zeta(self, zeta: f64) -> Self {
        FunctionalParams { zeta, ..self }
    }

    pub fn with_theta0(self, theta0: f64) -> Self {
        FunctionalParams { theta0, ..self }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        for (name, v) in [("zeta", self.zeta), ("z0", self.z0), ("z1", self.z1)] {
            if !unit(v) {
                out.push(format!("{name} must lie in (0, 1] (got {v})"));
            }
        }
        for (name, v) in [("theta0", self.theta0), ("theta1", self.theta1)] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("{name} must be nonnegative (got {v})"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(DuelError::InvalidParams(v.join("; ")))
        }
    }
}

fn snapped(r: f64) -> f64 {
    let n = r.round();
    if (r - n).abs() <= SNAP_TOL * n.abs().max(1.0) {
        n
    } else {
        r
    }
}

pub fn derive_constants(spec: &GameSpec) -> Result<DecisionConstants> {
    let sigma_bar = spec.observation.step_law.mean()?;
    if !(sigma_bar.is_finite() && sigma_bar > 0.0) {
        return Err(DuelError::InvalidObservationLaw(format!(
            "mean observation gap must be positive and finite (got {sigma_bar})"
        )));
    }
    let t_star = optimal_threshold_time(&spec.cdf_a, &spec.cdf_b)?;
    let m_ab = (spec.capacity_a as i64 - spec.capacity_b as i64).unsigned_abs();
    let j_min = snapped(t_star / sigma_bar).ceil() as u64;
    let m_cap = snapped(m_ab as f64 / sigma_bar).floor() as u64;
    Ok(DecisionConstants {
        t_star,
        sigma_bar,
        j_min,
        m_cap,
        m_ab,
    })
}

/// Every broken invariant of `spec`, as a message. Empty means valid.
pub fn validate_spec(spec: &GameSpec) -> Vec<String> {
    let mut out = Vec::new();
    let la = spec.player_a.intensity;
    if !(la.is_finite() && la > 0.0) {
        out.push("player_a intensity must be positive".to_string());
    }
    // λ_b = 0 is admitted: it is the regime in which the closed form is exact.
    let lb = spec.player_b.intensity;
    if !(lb.is_finite() && lb >= 0.0) {
        out.push("player_b intensity must be nonnegative".to_string());
    }
    if spec.capacity_a == 0 && spec.capacity_b == 0 {
        out.push("at least one capacity > 0".to_string());
    }
    for (name, law) in [
        ("delay_law", spec.observation.delay_law),
        ("step_law", spec.observation.step_law),
    ] {
        out.extend(law.violations().into_iter().map(|m| format!("{name}: {m}")));
    }
    for (name, cdf) in [("cdf_a", spec.cdf_a), ("cdf_b", spec.cdf_b)] {
        out.extend(cdf.violations().into_iter().map(|m| format!("{name}: {m}")));
    }
    out
}
