//! Chebyshev machinery and the per-point bias/variance objective of a `Poly(L)` estimator.
//!
//! An estimator polynomial `P(λ) = Σ a_l λ^l` with `a_0 = -1` defines the per-count map
//! `g_L(j) = a_j j! + 1` (for `j <= L`, and `1` above `L`). Under Poissonization with mean
//! `λ`, a symbol contributes bias `e^{-λ} P(λ)` and variance `Σ e^{-λ} a_l² λ^l l!`; the
//! worst case over `λ` of `reg_weight · variance + bias²` is what the solver minimizes.
//!
//! Ring-level operations (`cheb_t`, `poly_eval`, `shifted_cheb_coeffs`, `g_values`) are
//! generic over [`Scalar`], so they run over `f64`, `f32` or exact rationals. The objective
//! needs `exp`/`ln` and is generic over [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field-like scalar the polynomial machinery is generic over.
pub trait Scalar: Num + Clone + PartialOrd + Debug {}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + Debug {}

/// Floating-point scalar for the objective, which needs `exp` and `ln`.
pub trait Real: Scalar + Float + FromPrimitive {}

impl<T> Real for T where T: Scalar + Float + FromPrimitive {}

/// Polynomial in the monomial basis, `coeffs[l]` multiplying `x^l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Poly<T> {
    /// Builds a polynomial from `a_0..a_L`. At least one coefficient is required.
    pub fn new(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Precondition("polynomial needs at least a_0".into()));
        }
        Ok(Self { coeffs })
    }

    /// Builds an estimator polynomial `(-1, a_1, .., a_L)` from its free coefficients.
    pub fn estimator(free: impl IntoIterator<Item = T>) -> Self {
        let mut coeffs = vec![T::zero() - T::one()];
        coeffs.extend(free);
        Self { coeffs }
    }

    /// The pure counting estimator `(-1)`.
    pub fn counting() -> Self {
        Self::estimator(std::iter::empty())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// True when `a_0 = -1` exactly.
    pub fn is_estimator(&self) -> bool {
        self.coeffs[0] == T::zero() - T::one()
    }

    pub fn eval(&self, x: T) -> T {
        poly_eval(self, x)
    }
}

impl<T: Real> Poly<T> {
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Chebyshev polynomial of the first kind `T_degree(x)` by the three-term recurrence.
pub fn cheb_t<T: Scalar>(degree: usize, x: T) -> T {
    let two = T::one() + T::one();
    let mut prev = T::one();
    if degree == 0 {
        return prev;
    }
    let mut cur = x.clone();
    for _ in 1..degree {
        let next = two.clone() * x.clone() * cur.clone() - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Horner evaluation of `Σ a_l x^l`.
pub fn poly_eval<T: Scalar>(p: &Poly<T>, x: T) -> T {
    p.coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
}

/// Monomial coefficients of `R_L(x) = -T_L((2x - r - l)/(r - l)) / T_L((-r - l)/(r - l))`.
///
/// The affine map is composed into the Chebyshev recurrence directly in coefficient space.
/// `R_L(0) = -1`, and the returned constant coefficient is set to exactly `-1`.
pub fn shifted_cheb_coeffs<T: Scalar>(degree: usize, l: T, r: T) -> Result<Poly<T>> {
    let zero = T::zero();
    if !(l > zero && r > l) {
        return Err(Error::Domain(format!(
            "shifted Chebyshev interval needs 0 < l < r, got l={l:?}, r={r:?}"
        )));
    }
    if degree == 0 {
        return Err(Error::Precondition(
            "shifted Chebyshev degree must be >= 1".into(),
        ));
    }
    let two = T::one() + T::one();
    let width = r.clone() - l.clone();
    // y = alpha x + beta maps [l, r] onto [-1, 1]
    let alpha = two.clone() / width.clone();
    let beta = (zero.clone() - r - l) / width;

    let mut prev = vec![T::one()];
    let mut cur = vec![beta.clone(), alpha.clone()];
    for _ in 1..degree {
        let mut next = vec![T::zero(); cur.len() + 1];
        for (j, c) in cur.iter().enumerate() {
            let c2 = two.clone() * c.clone();
            next[j] = next[j].clone() + c2.clone() * beta.clone();
            next[j + 1] = next[j + 1].clone() + c2 * alpha.clone();
        }
        for (j, p) in prev.iter().enumerate() {
            next[j] = next[j].clone() - p.clone();
        }
        prev = cur;
        cur = next;
    }

    // constant coefficient of T_L(alpha x + beta) is T_L(beta) < -1 or > 1, never zero
    let denom = cur[0].clone();
    let mut coeffs: Vec<T> = cur
        .into_iter()
        .map(|c| T::zero() - c / denom.clone())
        .collect();
    coeffs[0] = T::zero() - T::one();
    Ok(Poly { coeffs })
}

/// Poisson mean and weight on the variance term for a single objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams<T = f64> {
    pub reg_weight: T,
    pub lambda: T,
}

impl<T: Real> ObjectiveParams<T> {
    pub fn new(reg_weight: T, lambda: T) -> Result<Self> {
        let p = Self { reg_weight, lambda };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(Error::Domain(format!(
                "lambda must be positive and finite, got {:?}",
                self.lambda.to_f64()
            )));
        }
        if !(self.reg_weight >= T::zero()) || !self.reg_weight.is_finite() {
            return Err(Error::Domain(format!(
                "reg_weight must be nonnegative, got {:?}",
                self.reg_weight.to_f64()
            )));
        }
        Ok(())
    }
}

/// Components of the per-point objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective<T = f64> {
    pub variance_term: T,
    pub bias: T,
    pub g: T,
}

/// `ln j!` for `j = 0..=max`.
pub fn ln_factorials<T: Float + FromPrimitive>(max: usize) -> Vec<T> {
    let mut table = Vec::with_capacity(max + 1);
    let mut acc = T::zero();
    table.push(acc);
    for j in 1..=max {
        acc = acc + T::from_usize(j).unwrap().ln();
        table.push(acc);
    }
    table
}

/// Variance term, bias and `g = variance_term + bias²` at one Poisson mean.
///
/// Variance summands are assembled as `exp(l ln λ + ln l! - λ) · a_l²` so large `λ` cannot
/// overflow `λ^l l!` before the `e^{-λ}` factor is applied.
pub fn objective_g<T: Real>(p: &Poly<T>, params: ObjectiveParams<T>) -> Result<Objective<T>> {
    params.validate()?;
    let lnf = ln_factorials::<T>(p.degree());
    Ok(objective_with_table(p, params, &lnf))
}

pub(crate) fn objective_with_table<T: Real>(
    p: &Poly<T>,
    params: ObjectiveParams<T>,
    ln_fact: &[T],
) -> Objective<T> {
    let lambda = params.lambda;
    let ln_lambda = lambda.ln();
    let mut var = T::zero();
    for (l, a) in p.coeffs().iter().enumerate() {
        if *a == T::zero() {
            continue;
        }
        let lw = T::from_usize(l).unwrap() * ln_lambda + ln_fact[l] - lambda;
        var = var + lw.exp() * *a * *a;
    }
    let variance_term = params.reg_weight * var;
    let bias = (-lambda).exp() * poly_eval(p, lambda);
    let bias = if bias.is_finite() {
        bias
    } else {
        // e^{-λ} underflows before P(λ) overflows; rebuild in log space
        let pv = poly_eval(p, lambda);
        let sign = if pv < T::zero() { -T::one() } else { T::one() };
        sign * (pv.abs().ln() - lambda).exp()
    };
    Objective {
        variance_term,
        bias,
        g: variance_term + bias * bias,
    }
}

/// `ln g(a, λ)`, evaluated entirely in log space.
///
/// Stays finite where `g` itself underflows (λ in the thousands), which is what sign checks
/// on `∂g/∂λ` far out on the tail need. Returns `-inf` only when `g` is exactly zero.
pub fn ln_objective(p: &Poly<f64>, reg_weight: f64, lambda: f64) -> f64 {
    let ln_lambda = lambda.ln();
    let mut terms: Vec<f64> = Vec::with_capacity(p.degree() + 2);
    if reg_weight > 0.0 {
        let ln_w = reg_weight.ln();
        let mut ln_fact = 0.0;
        for (l, a) in p.coeffs().iter().enumerate() {
            if l > 0 {
                ln_fact += (l as f64).ln();
            }
            if *a != 0.0 {
                terms.push(ln_w + 2.0 * a.abs().ln() + l as f64 * ln_lambda + ln_fact - lambda);
            }
        }
    }
    let ln_abs_p = ln_abs_poly(p, lambda);
    if ln_abs_p.is_finite() {
        terms.push(2.0 * (ln_abs_p - lambda));
    }
    log_sum_exp(&terms)
}

/// `ln |P(λ)|` for `λ > 0`, robust to `λ^L` overflowing.
fn ln_abs_poly(p: &Poly<f64>, lambda: f64) -> f64 {
    let direct = poly_eval(p, lambda);
    if direct.is_finite() {
        return direct.abs().ln();
    }
    // factor out λ^L: P(λ) = λ^L Σ a_l λ^{l-L}
    let inv = 1.0 / lambda;
    let scaled = p.coeffs().iter().fold(0.0, |acc, c| acc * inv + c);
    scaled.abs().ln() + p.degree() as f64 * lambda.ln()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Per-count values `g_L(0..=L)` and the tail value used for counts above `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GValues<T = f64> {
    pub values: Vec<T>,
    pub tail: T,
}

impl<T: Scalar> GValues<T> {
    /// `g_L(j)` for any count `j`.
    pub fn at(&self, count: usize) -> T {
        self.values
            .get(count)
            .cloned()
            .unwrap_or_else(|| self.tail.clone())
    }
}

/// `g_L(j) = a_j j! + 1` for `j <= L`, tail `1`.
pub fn g_values<T: Scalar>(p: &Poly<T>) -> Result<GValues<T>> {
    if !p.is_estimator() {
        return Err(Error::InvalidEstimator(format!(
            "a_0 must be -1, got {:?}",
            p.coeffs()[0]
        )));
    }
    let mut fact = T::one();
    let mut j_t = T::zero();
    let mut values = Vec::with_capacity(p.coeffs().len());
    for (j, a) in p.coeffs().iter().enumerate() {
        if j > 0 {
            j_t = j_t + T::one();
            fact = fact * j_t.clone();
        }
        values.push(a.clone() * fact.clone() + T::one());
    }
    values[0] = T::zero();
    Ok(GValues {
        values,
        tail: T::one(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn cheb_examples() {
        assert_eq!(cheb_t(0, 0.7), 1.0);
        assert!((cheb_t(2, 0.5) + 0.5).abs() < 1e-15);
        assert!((cheb_t(3, 2.0) - 26.0).abs() < 1e-12);
        assert_eq!(cheb_t(3, rat(2, 1)), rat(26, 1));
    }

    #[test]
    fn shifted_examples() {
        let p = shifted_cheb_coeffs(1, 1.0, 3.0).unwrap();
        assert_eq!(p.coeffs()[0], -1.0);
        assert!((p.coeffs()[1] - 0.5).abs() < 1e-15);

        let p = shifted_cheb_coeffs(2, 1.0, 3.0).unwrap();
        let want = [-1.0, 8.0 / 7.0, -2.0 / 7.0];
        for (a, b) in p.coeffs().iter().zip(want) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn shifted_exact_over_rationals() {
        let p = shifted_cheb_coeffs(2, rat(1, 1), rat(3, 1)).unwrap();
        assert_eq!(p.coeffs(), &[rat(-1, 1), rat(8, 7), rat(-2, 7)]);
        assert_eq!(p.eval(rat(2, 1)), rat(1, 7));
    }

    #[test]
    fn shifted_rejects_bad_interval() {
        assert!(matches!(
            shifted_cheb_coeffs(3, 2.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(shifted_cheb_coeffs(3, 0.0, 1.0).is_err());
        assert!(shifted_cheb_coeffs(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn eval_examples() {
        let p = Poly::new(vec![-1.0, 0.5]).unwrap();
        assert_eq!(poly_eval(&p, 0.0), -1.0);
        assert_eq!(poly_eval(&p, 4.0), 1.0);
        let q = Poly::new(vec![-1.0, 8.0 / 7.0, -2.0 / 7.0]).unwrap();
        assert!((poly_eval(&q, 2.0) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn objective_examples() {
        let p = Poly::<f64>::counting();
        let o = objective_g(&p, ObjectiveParams::new(0.1, 1.0).unwrap()).unwrap();
        let e = (-1.0f64).exp();
        assert!((o.variance_term - 0.1 * e).abs() < 1e-16);
        assert!((o.bias + e).abs() < 1e-16);
        assert!((o.g - 0.172_123).abs() < 1e-6);

        let p = Poly::new(vec![-1.0, 1.0]).unwrap();
        let o = objective_g(&p, ObjectiveParams::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(o.bias, 0.0);
        assert_eq!(o.g, 0.0);

        let p = Poly::<f64>::counting();
        let o = objective_g(&p, ObjectiveParams::new(0.5, 700.0).unwrap()).unwrap();
        assert!(o.g.is_finite() && o.g >= 0.0 && o.g < 1e-300);
    }

    #[test]
    fn objective_rejects_nonpositive_lambda() {
        let p = Poly::<f64>::counting();
        let bad = ObjectiveParams {
            reg_weight: 1.0,
            lambda: 0.0,
        };
        assert!(matches!(objective_g(&p, bad), Err(Error::Domain(_))));
        assert!(ObjectiveParams::new(1.0, -2.0).is_err());
        assert!(ObjectiveParams::new(-1.0, 2.0).is_err());
    }

    #[test]
    fn objective_large_lambda_with_high_degree() {
        let p = Poly::estimator(vec![2.0; 12]);
        let o = objective_g(&p, ObjectiveParams::new(1e-4, 5000.0).unwrap()).unwrap();
        assert!(o.g.is_finite() && o.variance_term >= 0.0);
    }

    #[test]
    fn ln_objective_matches_direct() {
        let p = Poly::estimator(vec![0.9, -0.3, 0.02]);
        for &lam in &[0.5, 1.0, 3.0, 10.0, 40.0] {
            let g = objective_g(&p, ObjectiveParams::new(1e-3, lam).unwrap())
                .unwrap()
                .g;
            let lg = ln_objective(&p, 1e-3, lam);
            assert!((lg - g.ln()).abs() < 1e-12, "lam={lam}: {lg} vs {}", g.ln());
        }
        // far tail where g underflows to zero
        assert!(ln_objective(&p, 1e-3, 5000.0).is_finite());
    }

    #[test]
    fn g_values_examples() {
        let p = Poly::new(vec![-1.0, 8.0 / 7.0, -2.0 / 7.0]).unwrap();
        let g = g_values(&p).unwrap();
        assert_eq!(g.values[0], 0.0);
        assert!((g.values[1] - 15.0 / 7.0).abs() < 1e-15);
        assert!((g.values[2] - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(g.tail, 1.0);
        assert_eq!(g.at(9), 1.0);

        let g = g_values(&Poly::<f64>::counting()).unwrap();
        assert_eq!(g.values, vec![0.0]);
        assert_eq!(g.tail, 1.0);

        let exact = g_values(&Poly::new(vec![rat(-1, 1), rat(8, 7), rat(-2, 7)]).unwrap()).unwrap();
        assert_eq!(exact.values, vec![rat(0, 1), rat(15, 7), rat(3, 7)]);
    }

    #[test]
    fn g_values_rejects_non_estimator() {
        let p = Poly::new(vec![-0.5, 1.0]).unwrap();
        assert!(matches!(g_values(&p), Err(Error::InvalidEstimator(_))));
    }

    #[test]
    fn works_in_f32() {
        let p = shifted_cheb_coeffs(2, 1.0f32, 3.0f32).unwrap();
        assert!((poly_eval(&p, 2.0f32) - 1.0 / 7.0).abs() < 1e-6);
        let o = objective_g(
            &Poly::<f32>::counting(),
            ObjectiveParams::new(0.1f32, 1.0).unwrap(),
        )
        .unwrap();
        assert!((o.g - 0.172_123).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cheb_bounded_on_unit_interval(deg in 0usize..=30, x in -1.0f64..=1.0) {
                prop_assert!(cheb_t(deg, x).abs() <= 1.0 + 1e-12);
            }

            #[test]
            fn shifted_value_at_zero(deg in 1usize..=12, l in 0.01f64..10.0, w in 0.01f64..10.0) {
                let p = shifted_cheb_coeffs(deg, l, l + w).unwrap();
                prop_assert!((poly_eval(&p, 0.0) + 1.0).abs() <= 1e-12);
            }

            #[test]
            fn objective_decomposes(
                free in proptest::collection::vec(-3.0f64..3.0, 0..10),
                w in 0.0f64..1.0,
                lam in 0.01f64..60.0,
            ) {
                let p = Poly::estimator(free);
                let o = objective_g(&p, ObjectiveParams::new(w, lam).unwrap()).unwrap();
                prop_assert!(o.variance_term >= 0.0);
                let sum = o.variance_term + o.bias * o.bias;
                prop_assert!((o.g - sum).abs() <= 1e-15 * sum.abs());
            }

            #[test]
            fn g_values_round_trip(
                free in proptest::collection::vec((0.01f64..5.0, any::<bool>()), 0..12),
            ) {
                let p = Poly::estimator(free.into_iter().map(|(m, neg)| if neg { -m } else { m }));
                let g = g_values(&p).unwrap();
                let mut fact = 1.0;
                for (j, a) in p.coeffs().iter().enumerate().skip(1) {
                    fact *= j as f64;
                    let back = (g.values[j] - 1.0) / fact;
                    prop_assert!((back - a).abs() <= 1e-12 * a.abs());
                }
            }
        }
    }
}
