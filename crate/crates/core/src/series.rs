//! Truncated bivariate power series in `(x, y)` and the operator pair that
//! maps double sequences to generating functions and back.
//!
//! `d_forward` sends `f(p, q)` to `(1−x)(1−y)·Σ f(p,q) x^p y^q`; `d_inverse`
//! recovers `f(p, q)` as the `(p, q)` Taylor coefficient of
//! `F/((1−x)(1−y))`. Dividing by `(1−x)(1−y)` convolves with the all-ones
//! series, so that coefficient is the rectangle sum `Σ_{i≤p, j≤q} F_ij`,
//! which is what `d_inverse` computes.

use crate::error::{DuelError, Result};
use crate::transforms::TaylorJet;

/// Dense truncated series; entry `(i, j)` is the coefficient of `x^i y^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiSeries {
    max_x: usize,
    max_y: usize,
    coeffs: Vec<f64>,
}

impl BiSeries {
    pub fn zeros(max_x: usize, max_y: usize) -> Self {
        BiSeries {
            max_x,
            max_y,
            coeffs: vec![0.0; (max_x + 1) * (max_y + 1)],
        }
    }

    pub fn constant(c: f64, max_x: usize, max_y: usize) -> Self {
        let mut s = Self::zeros(max_x, max_y);
        s.coeffs[0] = c;
        s
    }

    pub fn one(max_x: usize, max_y: usize) -> Self {
        Self::constant(1.0, max_x, max_y)
    }

    /// Build from a row-major `(max_x+1) × (max_y+1)` coefficient array.
    pub fn from_fn(max_x: usize, max_y: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(max_x, max_y);
        for i in 0..=max_x {
            for j in 0..=max_y {
                s.coeffs[i * (max_y + 1) + j] = f(i, j);
            }
        }
        s
    }

    /// Embed a jet in `x` (coefficients beyond `max_x` are dropped).
    pub fn from_x_jet(jet: &TaylorJet, max_x: usize, max_y: usize) -> Self {
        let mut s = Self::zeros(max_x, max_y);
        for (i, &c) in jet.coefficients.iter().take(max_x + 1).enumerate() {
            s.set(i, 0, c);
        }
        s
    }

    /// Embed a jet in `y`.
    pub fn from_y_jet(jet: &TaylorJet, max_x: usize, max_y: usize) -> Self {
        let mut s = Self::zeros(max_x, max_y);
        for (j, &c) in jet.coefficients.iter().take(max_y + 1).enumerate() {
            s.set(0, j, c);
        }
        s
    }

    pub fn max_x(&self) -> usize {
        self.max_x
    }

    pub fn max_y(&self) -> usize {
        self.max_y
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.max_x, self.max_y)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * (self.max_y + 1) + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.coeffs[i * (self.max_y + 1) + j] = v;
    }

    /// Row-major coefficients, `x` index major.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, k: f64) -> Self {
        BiSeries {
            max_x: self.max_x,
            max_y: self.max_y,
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    /// `c − self`.
    pub fn rsub_scalar(&self, c: f64) -> Self {
        let mut s = self.scale(-1.0);
        s.coeffs[0] += c;
        s
    }

    fn check_orders(&self, other: &BiSeries) -> Result<()> {
        if self.orders() != other.orders() {
            return Err(DuelError::OrderMismatch {
                left: self.orders(),
                right: other.orders(),
            });
        }
        Ok(())
    }
}

pub fn bs_add(a: &BiSeries, b: &BiSeries) -> Result<BiSeries> {
    a.check_orders(b)?;
    Ok(BiSeries {
        max_x: a.max_x,
        max_y: a.max_y,
        coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(u, v)| u + v).collect(),
    })
}

/// Truncated Cauchy product.
pub fn bs_mul(a: &BiSeries, b: &BiSeries) -> Result<BiSeries> {
    a.check_orders(b)?;
    let (mx, my) = a.orders();
    let mut out = BiSeries::zeros(mx, my);
    for i in 0..=mx {
        for j in 0..=my {
            let av = a.get(i, j);
            if av == 0.0 {
                continue;
            }
            for k in 0..=(mx - i) {
                let row = (i + k) * (my + 1);
                let brow = k * (my + 1);
                for l in 0..=(my - j) {
                    out.coeffs[row + j + l] += av * b.coeffs[brow + l];
                }
            }
        }
    }
    Ok(out)
}

/// Multiplicative inverse by forward substitution in graded order.
pub fn bs_recip(a: &BiSeries) -> Result<BiSeries> {
    let a00 = a.constant_term();
    if a00.abs() <= 1e-12 {
        return Err(DuelError::NotInvertible(a00));
    }
    let (mx, my) = a.orders();
    let mut r = BiSeries::zeros(mx, my);
    for i in 0..=mx {
        for j in 0..=my {
            let mut acc = if i == 0 && j == 0 { 1.0 } else { 0.0 };
            for k in 0..=i {
                for l in 0..=j {
                    if k == 0 && l == 0 {
                        continue;
                    }
                    let av = a.get(k, l);
                    if av != 0.0 {
                        acc -= av * r.get(i - k, j - l);
                    }
                }
            }
            r.set(i, j, acc / a00);
        }
    }
    Ok(r)
}

/// Integer power by repeated squaring; negative powers go through `bs_recip`.
pub fn bs_ipow(a: &BiSeries, n: i64) -> Result<BiSeries> {
    let (mx, my) = a.orders();
    let base = if n < 0 { bs_recip(a)? } else { a.clone() };
    let mut e = n.unsigned_abs();
    let mut acc = BiSeries::one(mx, my);
    let mut sq = base;
    while e > 0 {
        if e & 1 == 1 {
            acc = bs_mul(&acc, &sq)?;
        }
        e >>= 1;
        if e > 0 {
            sq = bs_mul(&sq, &sq)?;
        }
    }
    Ok(acc)
}

/// `(1−x)(1−y)·Σ f(p,q) x^p y^q`, truncated to `(max_x, max_y)`.
///
/// `f` is indexed `f[p][q]` and must cover the full rectangle. Inside the
/// rectangle the truncation is exact: each output coefficient is the mixed
/// backward difference of `f`.
pub fn d_forward(f: &[Vec<f64>], max_x: usize, max_y: usize) -> BiSeries {
    let at = |p: isize, q: isize| -> f64 {
        if p < 0 || q < 0 {
            0.0
        } else {
            f[p as usize][q as usize]
        }
    };
    BiSeries::from_fn(max_x, max_y, |p, q| {
        let (p, q) = (p as isize, q as isize);
        at(p, q) - at(p - 1, q) - at(p, q - 1) + at(p - 1, q - 1)
    })
}

/// `(1/p!q!) ∂^p_x ∂^q_y [F/((1−x)(1−y))]` at the origin, as a rectangle sum.
pub fn d_inverse(f: &BiSeries, p: usize, q: usize) -> Result<f64> {
    if p > f.max_x || q > f.max_y {
        return Err(DuelError::TruncationExceeded {
            p,
            q,
            max_x: f.max_x,
            max_y: f.max_y,
        });
    }
    let mut s = 0.0;
    for i in 0..=p {
        for j in 0..=q {
            s += f.get(i, j);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(mx: usize, my: usize) -> BiSeries {
        let mut s = BiSeries::zeros(mx, my);
        s.set(1, 0, 1.0);
        s
    }

    fn y(mx: usize, my: usize) -> BiSeries {
        let mut s = BiSeries::zeros(mx, my);
        s.set(0, 1, 1.0);
        s
    }

    fn brute_mul(a: &BiSeries, b: &BiSeries) -> BiSeries {
        let (mx, my) = a.orders();
        let mut out = BiSeries::zeros(mx, my);
        for i in 0..=mx {
            for j in 0..=my {
                for k in 0..=mx {
                    for l in 0..=my {
                        if i + k <= mx && j + l <= my {
                            let v = out.get(i + k, j + l) + a.get(i, j) * b.get(k, l);
                            out.set(i + k, j + l, v);
                        }
                    }
                }
            }
        }
        out
    }

    fn series(mx: usize, my: usize) -> impl Strategy<Value = BiSeries> {
        proptest::collection::vec(-2.0f64..2.0, (mx + 1) * (my + 1))
            .prop_map(move |v| BiSeries::from_fn(mx, my, |i, j| v[i * (my + 1) + j]))
    }

    #[test]
    fn add_examples() {
        let z = BiSeries::zeros(3, 3);
        let a = BiSeries::from_fn(3, 3, |i, j| (i * 7 + j) as f64);
        assert_eq!(bs_add(&a, &z).unwrap(), a);
        let s = bs_add(&x(3, 3), &y(3, 3)).unwrap();
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.max_abs(), 1.0);
        assert!(matches!(
            bs_add(&a, &BiSeries::zeros(3, 2)),
            Err(DuelError::OrderMismatch { .. })
        ));
    }

    #[test]
    fn mul_examples() {
        let a = BiSeries::from_fn(4, 4, |i, j| 1.0 / (1 + i + 2 * j) as f64);
        assert_eq!(bs_mul(&a, &BiSeries::one(4, 4)).unwrap(), a);
        let px = bs_add(&BiSeries::one(4, 4), &x(4, 4)).unwrap();
        let py = bs_add(&BiSeries::one(4, 4), &y(4, 4)).unwrap();
        let p = bs_mul(&px, &py).unwrap();
        for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            assert_eq!(p.get(i, j), 1.0);
        }
        assert_eq!(p.max_abs(), 1.0);
        assert_eq!(d_inverse(&p, 4, 4).unwrap(), 4.0);
    }

    #[test]
    fn recip_examples() {
        assert_eq!(bs_recip(&BiSeries::one(3, 3)).unwrap(), BiSeries::one(3, 3));
        let one_minus_x = x(6, 2).rsub_scalar(1.0);
        let r = bs_recip(&one_minus_x).unwrap();
        for i in 0..=6 {
            assert_eq!(r.get(i, 0), 1.0);
            assert_eq!(r.get(i, 1), 0.0);
        }
        assert!(matches!(
            bs_recip(&x(3, 3)),
            Err(DuelError::NotInvertible(_))
        ));
    }

    #[test]
    fn ipow_examples() {
        let a = BiSeries::from_fn(5, 5, |i, j| {
            if i + j == 0 {
                2.0
            } else {
                0.3 / (1 + i * j) as f64
            }
        });
        assert_eq!(bs_ipow(&a, 0).unwrap(), BiSeries::one(5, 5));
        let px = bs_add(&BiSeries::one(5, 5), &x(5, 5)).unwrap();
        let sq = bs_ipow(&px, 2).unwrap();
        assert_eq!((sq.get(0, 0), sq.get(1, 0), sq.get(2, 0)), (1.0, 2.0, 1.0));
        let neg = bs_ipow(&a, -2).unwrap();
        let alt = bs_recip(&bs_mul(&a, &a).unwrap()).unwrap();
        for i in 0..=5 {
            for j in 0..=5 {
                assert!((neg.get(i, j) - alt.get(i, j)).abs() < 1e-10);
            }
        }
        assert!(bs_ipow(&x(2, 2), -1).is_err());
    }

    #[test]
    fn forward_examples() {
        let ones = vec![vec![1.0; 6]; 6];
        let d = d_forward(&ones, 5, 5);
        assert_eq!(d, BiSeries::one(5, 5));

        let mut delta = vec![vec![0.0; 4]; 4];
        delta[0][0] = 1.0;
        let d = d_forward(&delta, 3, 3);
        let expect = bs_mul(&x(3, 3).rsub_scalar(1.0), &y(3, 3).rsub_scalar(1.0)).unwrap();
        assert_eq!(d, expect);

        // f(p,q) = p: (1−x)(1−y) Σ p x^p y^q = (1−y)Σ_q y^q · x/(1−x) = x/(1−x) truncated
        let f: Vec<Vec<f64>> = (0..4).map(|p| vec![p as f64; 4]).collect();
        let d = d_forward(&f, 3, 3);
        for p in 0..=3 {
            for q in 0..=3 {
                let want = if q == 0 && p >= 1 { 1.0 } else { 0.0 };
                assert_eq!(d.get(p, q), want, "({p},{q})");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        let one = BiSeries::one(4, 4);
        for p in 0..=4 {
            for q in 0..=4 {
                assert_eq!(d_inverse(&one, p, q).unwrap(), 1.0);
            }
        }
        let xy = bs_add(&x(3, 3), &y(3, 3)).unwrap();
        assert_eq!(d_inverse(&xy, 1, 1).unwrap(), 2.0);
        assert!(matches!(
            d_inverse(&xy, 4, 0),
            Err(DuelError::TruncationExceeded { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_integer_grid(vals in proptest::collection::vec(-1_000_000i64..=1_000_000, 64)) {
            let f: Vec<Vec<f64>> = (0..8).map(|p| (0..8).map(|q| vals[p * 8 + q] as f64).collect()).collect();
            let d = d_forward(&f, 7, 7);
            for (p, row) in f.iter().enumerate() {
                for (q, &v) in row.iter().enumerate() {
                    prop_assert_eq!(d_inverse(&d, p, q).unwrap(), v);
                }
            }
        }

        #[test]
        fn add_is_elementwise(a in series(3, 4), b in series(3, 4)) {
            let s = bs_add(&a, &b).unwrap();
            for i in 0..=3 { for j in 0..=4 {
                prop_assert_eq!(s.get(i, j), a.get(i, j) + b.get(i, j));
            }}
        }

        #[test]
        fn mul_matches_brute_force(a in series(4, 4), b in series(4, 4)) {
            let fast = bs_mul(&a, &b).unwrap();
            let slow = brute_mul(&a, &b);
            for i in 0..=4 { for j in 0..=4 {
                prop_assert!((fast.get(i, j) - slow.get(i, j)).abs() < 1e-12);
            }}
        }

        #[test]
        fn recip_round_trip(mut a in series(5, 3)) {
            a.set(0, 0, 1.0);
            let p = bs_mul(&a, &bs_recip(&a).unwrap()).unwrap();
            let one = BiSeries::one(5, 3);
            for i in 0..=5 { for j in 0..=3 {
                // coefficient growth for random ±2 entries is bounded by the
                // largest recip coefficient; scale the tolerance accordingly
                let tol = 1e-10 * (1.0 + bs_recip(&a).unwrap().max_abs());
                prop_assert!((p.get(i, j) - one.get(i, j)).abs() < tol);
            }}
        }

        #[test]
        fn ring_axioms(a in series(3, 3), b in series(3, 3), c in series(3, 3)) {
            let l = bs_mul(&bs_mul(&a, &b).unwrap(), &c).unwrap();
            let r = bs_mul(&a, &bs_mul(&b, &c).unwrap()).unwrap();
            let dl = bs_mul(&a, &bs_add(&b, &c).unwrap()).unwrap();
            let dr = bs_add(&bs_mul(&a, &b).unwrap(), &bs_mul(&a, &c).unwrap()).unwrap();
            for i in 0..=3 { for j in 0..=3 {
                prop_assert!((l.get(i, j) - r.get(i, j)).abs() < 1e-10);
                prop_assert!((dl.get(i, j) - dr.get(i, j)).abs() < 1e-10);
            }}
        }
    }
}
