//! Laplace–Stieltjes transforms of the observation laws and the composite
//! transforms built on them.
//!
//! Every composite object is `σ(α − β·x)` for some law `σ` and real `α`, `β`:
//!
//! * `γ(z, θ)    = σ(θ + (λ_a − λ_b)(1 − z))`
//! * `φ(x, θ)    = σ(θ + λ(1 − x))`   (step law)
//! * `φ⁰(x, θ)   = σ₀(θ + λ(1 − x))`  (delay law)
//!
//! so evaluation and Taylor expansion in `x` reduce to a single affine
//! composition per family. All three supported families have exact
//! expansions (geometric, negative binomial, exponential).

use serde::{Deserialize, Serialize};

use crate::error::{DuelError, Result};

/// Largest Taylor order `taylor_in_x` will produce.
pub const MAX_TAYLOR_ORDER: usize = 64;

/// Sign of the `λ(1 − x)` shift inside `φ`. With this sign
/// `φ(x, θ) = E[x^X e^{−θΔ}]` for `X ~ Poisson(λΔ)`.
pub const PHI_DRAIN_SIGN: f64 = 1.0;

/// The opposite shift. Kept only so tests can show it is not a
/// probability generating function (it has a pole at `x = 0` when `λ = δ`).
pub const REJECTED_PHI_DRAIN_SIGN: f64 = -1.0;

/// Law of a strictly positive random time, represented by its LST.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LstFamily {
    /// `δ/(δ+θ)`
    Exponential { rate: f64 },
    /// Point mass at `value`: `e^{−θ·value}`
    Deterministic { value: f64 },
    /// Sum of `shape` exponentials: `(δ/(δ+θ))^k`
    Erlang { shape: u32, rate: f64 },
}

impl LstFamily {
    pub fn exponential(rate: f64) -> Self {
        LstFamily::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        LstFamily::Deterministic { value }
    }

    pub fn erlang(shape: u32, rate: f64) -> Self {
        LstFamily::Erlang { shape, rate }
    }

    /// Abscissa of convergence: the transform is analytic for `θ > abscissa`.
    pub fn abscissa(&self) -> f64 {
        match *self {
            LstFamily::Exponential { rate } | LstFamily::Erlang { rate, .. } => -rate,
            LstFamily::Deterministic { .. } => f64::NEG_INFINITY,
        }
    }

    /// Structural problems with the parameters, as human-readable strings.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            LstFamily::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    out.push(format!(
                        "exponential rate must be positive and finite (got {rate})"
                    ));
                }
            }
            LstFamily::Erlang { shape, rate } => {
                if shape == 0 {
                    out.push("erlang shape must be a positive integer".to_string());
                }
                if !(rate.is_finite() && rate > 0.0) {
                    out.push(format!(
                        "erlang rate must be positive and finite (got {rate})"
                    ));
                }
            }
            LstFamily::Deterministic { value } => {
                if !(value.is_finite() && value > 0.0) {
                    out.push(format!(
                        "deterministic value must be positive and finite (got {value})"
                    ));
                }
            }
        }
        out
    }

    /// `σ(θ)`.
    pub fn eval(&self, theta: f64) -> Result<f64> {
        lst_eval(self, theta)
    }

    /// `σ'(θ)`, in closed form.
    pub fn derivative(&self, theta: f64) -> Result<f64> {
        self.check_domain(theta)?;
        Ok(match *self {
            LstFamily::Exponential { rate } => -rate / (rate + theta).powi(2),
            LstFamily::Erlang { shape, rate } => {
                let k = shape as i32;
                -(k as f64) * rate.powi(k) / (rate + theta).powi(k + 1)
            }
            LstFamily::Deterministic { value } => -value * (-theta * value).exp(),
        })
    }

    /// Mean of the law, `−σ'(0)`.
    pub fn mean(&self) -> Result<f64> {
        let m = -self.derivative(0.0)?;
        if m.is_finite() {
            Ok(m)
        } else {
            Err(DuelError::InvalidObservationLaw(format!(
                "non-finite mean for {self:?}"
            )))
        }
    }

    fn check_domain(&self, theta: f64) -> Result<()> {
        if theta.is_nan() || theta <= self.abscissa() {
            return Err(DuelError::Domain(format!(
                "theta = {theta} not above abscissa {} of {self:?}",
                self.abscissa()
            )));
        }
        Ok(())
    }

    /// Taylor coefficients of `x ↦ σ(α − β·x)` at `x = 0`, orders `0..=order`.
    fn affine_jet(&self, alpha: f64, beta: f64, order: usize) -> Result<Vec<f64>> {
        self.check_domain(alpha)?;
        let mut c = Vec::with_capacity(order + 1);
        match *self {
            LstFamily::Exponential { rate } | LstFamily::Erlang { rate, .. } => {
                let shape = match *self {
                    LstFamily::Erlang { shape, .. } => shape,
                    _ => 1,
                };
                let denom = rate + alpha;
                let ratio = beta / denom;
                if order > 0 && ratio.abs() >= 1.0 {
                    return Err(DuelError::SeriesNotValid(format!(
                        "pole at x = {} inside the unit disk",
                        1.0 / ratio
                    )));
                }
                // negative binomial: C(n+k−1, n) ρ^n (δ/(δ+α))^k
                let k = shape as f64;
                c.push((rate / denom).powi(shape as i32));
                for n in 1..=order {
                    let prev = c[n - 1];
                    c.push(prev * ratio * (n as f64 + k - 1.0) / n as f64);
                }
            }
            LstFamily::Deterministic { value } => {
                c.push((-value * alpha).exp());
                for n in 1..=order {
                    let prev = c[n - 1];
                    c.push(prev * value * beta / n as f64);
                }
            }
        }
        Ok(c)
    }
}

/// Univariate truncated Taylor expansion around `base_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorJet {
    pub base_point: f64,
    pub coefficients: Vec<f64>,
}

impl TaylorJet {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.base_point;
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * t + c)
    }
}

/// A composite transform with its scalar arguments fixed, leaving one free
/// generating-function variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `γ(scale·x, θ)` over the step law.
    Gamma {
        step_law: LstFamily,
        lambda_a: f64,
        lambda_b: f64,
        scale: f64,
        theta: f64,
    },
    /// `γ₀(scale·x, θ)`: the same composition over the delay law.
    Gamma0 {
        delay_law: LstFamily,
        lambda_a: f64,
        lambda_b: f64,
        scale: f64,
        theta: f64,
    },
    /// `φ(x, θ)` over the step law.
    Phi {
        step_law: LstFamily,
        lambda: f64,
        theta: f64,
    },
    /// `φ⁰(x, θ)` over the delay law.
    Phi0 {
        delay_law: LstFamily,
        lambda: f64,
        theta: f64,
    },
}

impl Transform {
    /// `(law, α, β)` with the transform equal to `σ(α − β·x)`.
    fn affine(&self) -> (LstFamily, f64, f64) {
        match *self {
            Transform::Gamma {
                step_law: law,
                lambda_a,
                lambda_b,
                scale,
                theta,
            }
            | Transform::Gamma0 {
                delay_law: law,
                lambda_a,
                lambda_b,
                scale,
                theta,
            } => {
                let c = lambda_a - lambda_b;
                (law, theta + c, c * scale)
            }
            Transform::Phi {
                step_law: law,
                lambda,
                theta,
            }
            | Transform::Phi0 {
                delay_law: law,
                lambda,
                theta,
            } => (
                law,
                theta + PHI_DRAIN_SIGN * lambda,
                PHI_DRAIN_SIGN * lambda,
            ),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (law, alpha, beta) = self.affine();
        lst_eval(&law, alpha - beta * x)
    }
}

/// `σ(θ)` in closed form.
pub fn lst_eval(law: &LstFamily, theta: f64) -> Result<f64> {
    law.check_domain(theta)?;
    Ok(match *law {
        LstFamily::Exponential { rate } => rate / (rate + theta),
        LstFamily::Erlang { shape, rate } => (rate / (rate + theta)).powi(shape as i32),
        LstFamily::Deterministic { value } => {
            if theta == 0.0 {
                1.0
            } else {
                (-theta * value).exp()
            }
        }
    })
}

/// `γ(z, θ) = σ(θ + (λ_a − λ_b)(1 − z))`.
pub fn gamma_eval(
    step_law: &LstFamily,
    lambda_a: f64,
    lambda_b: f64,
    z: f64,
    theta: f64,
) -> Result<f64> {
    lst_eval(step_law, theta + (lambda_a - lambda_b) * (1.0 - z))
}

/// `φ(x, θ) = E[x^X e^{−θΔ}] = σ(θ + λ(1 − x))` for the step law.
pub fn phi_eval(step_law: &LstFamily, lambda: f64, x: f64, theta: f64) -> Result<f64> {
    lst_eval(step_law, theta + PHI_DRAIN_SIGN * lambda * (1.0 - x))
}

/// `φ⁰(x, θ) = E[x^{A₀} e^{−θτ₀}] = σ₀(θ + λ(1 − x))` for the delay law.
pub fn phi0_eval(delay_law: &LstFamily, lambda: f64, x: f64, theta: f64) -> Result<f64> {
    lst_eval(delay_law, theta + PHI_DRAIN_SIGN * lambda * (1.0 - x))
}

/// Taylor expansion of `transform` in its free variable around 0.
pub fn taylor_in_x(transform: &Transform, order: usize) -> Result<TaylorJet> {
    if order > MAX_TAYLOR_ORDER {
        return Err(DuelError::SeriesNotValid(format!(
            "order {order} exceeds maximum {MAX_TAYLOR_ORDER}"
        )));
    }
    let (law, alpha, beta) = transform.affine();
    Ok(TaylorJet {
        base_point: 0.0,
        coefficients: law.affine_jet(alpha, beta, order)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Composite Simpson on [0, upper] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, upper: f64, n: usize) -> f64 {
        let h = upper / n as f64;
        let mut s = f(0.0) + f(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn lst_examples() {
        assert_eq!(lst_eval(&LstFamily::exponential(1.0), 0.0).unwrap(), 1.0);
        // ∫ 2e^{-2t} e^{-2t} dt
        let quad = simpson(|t| 2.0 * (-2.0 * t).exp() * (-2.0 * t).exp(), 40.0, 20_000);
        assert!((quad - 0.5).abs() < 1e-10);
        assert!((lst_eval(&LstFamily::exponential(2.0), 2.0).unwrap() - quad).abs() < 1e-10);
        // point mass at 1
        let v = lst_eval(&LstFamily::deterministic(1.0), 1.0).unwrap();
        assert!((v - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn erlang_matches_quadrature() {
        // density δ^k t^{k-1} e^{-δt} / (k-1)!
        let (k, d, th) = (3u32, 1.5f64, 0.7f64);
        let quad = simpson(
            |t| d.powi(3) * t * t * (-d * t).exp() / 2.0 * (-th * t).exp(),
            60.0,
            40_000,
        );
        let v = lst_eval(&LstFamily::erlang(k, d), th).unwrap();
        assert!((v - quad).abs() < 1e-10, "{v} vs {quad}");
    }

    #[test]
    fn pole_crossing_is_rejected() {
        assert!(matches!(
            lst_eval(&LstFamily::exponential(1.0), -1.0),
            Err(DuelError::Domain(_))
        ));
        assert!(lst_eval(&LstFamily::exponential(1.0), -0.5).is_ok());
        assert!(lst_eval(&LstFamily::deterministic(1.0), -50.0).is_ok());
    }

    #[test]
    fn gamma_examples() {
        let law = LstFamily::exponential(1.0);
        assert_eq!(
            gamma_eval(&law, 2.0, 1.0, 1.0, 0.3).unwrap(),
            law.eval(0.3).unwrap()
        );
        assert_eq!(
            gamma_eval(&law, 1.5, 1.5, 0.2, 0.3).unwrap(),
            law.eval(0.3).unwrap()
        );
        let v = gamma_eval(&law, 2.0, 1.0, 0.5, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn phi_examples() {
        let one = LstFamily::exponential(1.0);
        assert_eq!(
            phi_eval(&one, 1.0, 1.0, 0.4).unwrap(),
            one.eval(0.4).unwrap()
        );
        // P(X = 0) = ∫ e^{-t} e^{-t} dt
        let p0 = simpson(|t| (-t).exp() * (-t).exp(), 40.0, 20_000);
        assert!((phi_eval(&one, 1.0, 0.0, 0.0).unwrap() - p0).abs() < 1e-10);
        let two = LstFamily::exponential(2.0);
        assert!((phi_eval(&two, 2.0, 0.5, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn phi0_examples() {
        let one = LstFamily::exponential(1.0);
        assert_eq!(
            phi0_eval(&one, 1.0, 1.0, 0.2).unwrap(),
            one.eval(0.2).unwrap()
        );
        assert!((phi0_eval(&one, 1.0, 0.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        let instant = LstFamily::deterministic(0.0);
        for &(x, th) in &[(0.0, 0.0), (0.3, 1.0), (1.0, 5.0)] {
            assert_eq!(phi0_eval(&instant, 3.0, x, th).unwrap(), 1.0);
        }
    }

    #[test]
    fn rejected_sign_is_not_a_pgf() {
        // δ = λ = 1, θ = 0, x = 0: the rejected shift lands on the pole θ = −δ.
        let law = LstFamily::exponential(1.0);
        let rejected = lst_eval(&law, 0.0 + REJECTED_PHI_DRAIN_SIGN * 1.0 * (1.0 - 0.0));
        assert!(rejected.is_err());
        // and for x slightly below 1 it exceeds one, which no E[x^X] can
        let v = lst_eval(&law, REJECTED_PHI_DRAIN_SIGN * 0.5 * (1.0 - 0.9)).unwrap();
        assert!(v > 1.0);
        assert!(phi_eval(&law, 0.5, 0.9, 0.0).unwrap() < 1.0);
    }

    #[test]
    fn phi_jet_is_geometric() {
        let t = Transform::Phi {
            step_law: LstFamily::exponential(1.0),
            lambda: 1.0,
            theta: 0.0,
        };
        let jet = taylor_in_x(&t, 10).unwrap();
        // long division of 1/(2 − x)
        let mut rem = 1.0;
        for c in &jet.coefficients {
            let q = rem / 2.0;
            assert!((c - q).abs() < 1e-16);
            rem = q;
        }
    }

    #[test]
    fn order_zero_jets_are_values_at_zero() {
        let laws = [
            LstFamily::exponential(1.3),
            LstFamily::deterministic(0.7),
            LstFamily::erlang(2, 2.5),
        ];
        for law in laws {
            let ts = [
                Transform::Gamma {
                    step_law: law,
                    lambda_a: 2.0,
                    lambda_b: 0.5,
                    scale: 0.8,
                    theta: 0.1,
                },
                Transform::Gamma0 {
                    delay_law: law,
                    lambda_a: 2.0,
                    lambda_b: 0.5,
                    scale: 1.0,
                    theta: 0.0,
                },
                Transform::Phi {
                    step_law: law,
                    lambda: 0.9,
                    theta: 0.2,
                },
                Transform::Phi0 {
                    delay_law: law,
                    lambda: 0.9,
                    theta: 0.0,
                },
            ];
            for t in ts {
                let jet = taylor_in_x(&t, 0).unwrap();
                assert_eq!(jet.coefficients.len(), 1);
                assert!((jet.coefficients[0] - t.eval(0.0).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_gamma_jet_is_constant() {
        let t = Transform::Gamma {
            step_law: LstFamily::erlang(2, 1.0),
            lambda_a: 1.7,
            lambda_b: 1.7,
            scale: 1.0,
            theta: 0.3,
        };
        let jet = taylor_in_x(&t, 12).unwrap();
        assert!(jet.coefficients[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn jets_match_finite_differences() {
        // fourth-order central differences on the closed form
        let t = Transform::Phi0 {
            delay_law: LstFamily::erlang(3, 2.0),
            lambda: 1.2,
            theta: 0.1,
        };
        let jet = taylor_in_x(&t, 3).unwrap();
        let h = 1e-3;
        let f = |x: f64| t.eval(x).unwrap();
        let d1 = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
        let d2 = (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h))
            / (12.0 * h * h);
        assert!((jet.coefficients[1] - d1).abs() < 1e-9);
        assert!((jet.coefficients[2] - d2 / 2.0).abs() < 1e-6);

        let g = Transform::Gamma {
            step_law: LstFamily::deterministic(0.8),
            lambda_a: 1.5,
            lambda_b: 0.5,
            scale: 0.9,
            theta: 0.0,
        };
        let jet = taylor_in_x(&g, 2).unwrap();
        let f = |x: f64| g.eval(x).unwrap();
        let d1 = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
        assert!((jet.coefficients[1] - d1).abs() < 1e-9);
    }

    #[test]
    fn pole_in_unit_disk_is_rejected() {
        // γ with λ_b well above λ_a: pole of δ/(δ + c − c x) at x = (δ+c)/c, |.| < 1
        let t = Transform::Gamma {
            step_law: LstFamily::exponential(1.0),
            lambda_a: 0.0,
            lambda_b: 0.8,
            scale: 1.0,
            theta: 0.0,
        };
        assert!(matches!(
            taylor_in_x(&t, 4),
            Err(DuelError::SeriesNotValid(_))
        ));
        assert!(matches!(
            taylor_in_x(&t, MAX_TAYLOR_ORDER + 1),
            Err(DuelError::SeriesNotValid(_))
        ));
    }

    #[test]
    fn means_from_lst_derivative() {
        assert!((LstFamily::exponential(2.0).mean().unwrap() - 0.5).abs() < 1e-15);
        assert!((LstFamily::erlang(3, 2.0).mean().unwrap() - 1.5).abs() < 1e-15);
        assert!((LstFamily::deterministic(0.25).mean().unwrap() - 0.25).abs() < 1e-15);
    }

    fn any_law() -> impl Strategy<Value = LstFamily> {
        prop_oneof![
            (0.1f64..5.0).prop_map(LstFamily::exponential),
            (0.1f64..5.0).prop_map(LstFamily::deterministic),
            (1u32..6, 0.1f64..5.0).prop_map(|(k, r)| LstFamily::erlang(k, r)),
        ]
    }

    proptest! {
        #[test]
        fn lst_at_zero_is_one(law in any_law()) {
            prop_assert_eq!(lst_eval(&law, 0.0).unwrap(), 1.0);
        }

        #[test]
        fn lst_strictly_decreasing(law in any_law(), a in 0.0f64..10.0, gap in 1e-3f64..10.0) {
            prop_assert!(lst_eval(&law, a).unwrap() > lst_eval(&law, a + gap).unwrap());
        }

        #[test]
        fn gamma_with_silent_opponent_is_phi(law in any_law(), la in 0.0f64..3.0, z in 0.0f64..1.0, th in 0.0f64..3.0) {
            let g = gamma_eval(&law, la, 0.0, z, th).unwrap();
            let p = phi_eval(&law, la, z, th).unwrap();
            prop_assert!((g - p).abs() <= 1e-14);
        }

        #[test]
        fn phi_jet_truncation_bound(delta in 0.2f64..4.0, lambda in 0.1f64..4.0, x in 0.0f64..1.0, order in 1usize..40) {
            let law = LstFamily::exponential(delta);
            let jet = taylor_in_x(&Transform::Phi { step_law: law, lambda, theta: 0.0 }, order).unwrap();
            let rho = lambda / (delta + lambda);
            let bound = rho.powi(order as i32 + 1) / (1.0 - rho);
            let exact = phi_eval(&law, lambda, x, 0.0).unwrap();
            prop_assert!((jet.eval(x) - exact).abs() <= bound + 1e-14);
        }
    }
}
