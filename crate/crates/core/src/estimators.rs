//! RWC, RWC-S, the unweighted Chebyshev baseline, Good-Turing, and naive counting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Fingerprint;
use crate::error::{Error, Result};
use crate::poly::{g_values, shifted_cheb_coeffs};
use crate::solver::{
    build_grid, localized_interval, solve, IntervalSpec, SipProblem, SolveOptions, SolveResult,
    DEFAULT_TOL,
};
use crate::Polynomial;

pub const DEFAULT_C0: f64 = 0.558;
pub const DEFAULT_C1: f64 = 0.5;
pub const DEFAULT_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    Rwc,
    Rwcs,
    Wy,
    GoodTuring,
    Naive,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Rwc,
        EstimatorKind::Rwcs,
        EstimatorKind::Wy,
        EstimatorKind::GoodTuring,
        EstimatorKind::Naive,
    ];

    /// Stable CLI token.
    pub fn token(&self) -> &'static str {
        match self {
            EstimatorKind::Rwc => "rwc",
            EstimatorKind::Rwcs => "rwc-s",
            EstimatorKind::Wy => "wy",
            EstimatorKind::GoodTuring => "gt",
            EstimatorKind::Naive => "naive",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.token() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown estimator {s:?}; expected one of rwc, rwc-s, wy, gt, naive"
                ))
            })
    }
}

/// Estimator choice plus its construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub c0: f64,
    /// Right end of the unweighted baseline's interval is `c1 ln k`.
    pub c1: f64,
    /// Grid points for the solver.
    pub s: usize,
    pub tol: f64,
    /// Fall back to naive counting on baseline interval collapse or zero coverage.
    pub fallback: bool,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            c0: DEFAULT_C0,
            c1: DEFAULT_C1,
            s: DEFAULT_GRID_POINTS,
            tol: DEFAULT_TOL,
            fallback: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) || !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::Domain(format!(
                "c0 and c1 must be positive, got c0={}, c1={}",
                self.c0, self.c1
            )));
        }
        if self.s < 2 {
            return Err(Error::Domain(format!(
                "need s >= 2 grid points, got {}",
                self.s
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// `L = ⌊c0 ln k⌋`.
pub fn degree_for(k: f64, c0: f64) -> usize {
    let l = (c0 * k.ln()).floor();
    if l.is_finite() && l > 0.0 {
        l as usize
    } else {
        0
    }
}

/// `[n/k, c1 ln k]`, or an interval-collapse error when it is empty.
pub fn wy_interval(k: f64, n: f64, c1: f64) -> Result<IntervalSpec> {
    let (lo, hi) = (n / k, c1 * k.ln());
    if hi <= lo {
        return Err(Error::IntervalCollapse { lo, hi });
    }
    IntervalSpec::new(lo, hi)
}

/// Shifted Chebyshev polynomial of degree `⌊c0 ln k⌋` on `[n/k, c1 ln k]`.
pub fn wy_coefficients(k: f64, n: f64, c0: f64, c1: f64) -> Result<Polynomial> {
    if !(k >= 2.0 && k.is_finite()) || !(n >= 1.0 && n.is_finite()) {
        return Err(Error::Precondition(format!(
            "need k >= 2 and n >= 1, got k={k}, n={n}"
        )));
    }
    let iv = wy_interval(k, n, c1)?;
    if !(c0 * k.ln() >= 1.0) {
        return Err(Error::Precondition(format!(
            "c0 ln k = {} < 1 gives degree zero",
            c0 * k.ln()
        )));
    }
    shifted_cheb_coeffs(degree_for(k, c0), iv.lo, iv.hi)
}

/// Minimax coefficients with variance weight `reg_weight` over the localized interval.
pub fn solve_weighted(
    k: f64,
    n: f64,
    reg_weight: f64,
    spec: &EstimatorSpec,
) -> Result<SolveResult> {
    spec.validate()?;
    if !(k >= 2.0 && k.is_finite()) || !(n > 0.0 && n.is_finite()) {
        return Err(Error::Precondition(format!(
            "need k >= 2 and n > 0, got k={k}, n={n}"
        )));
    }
    let degree = degree_for(k, spec.c0);
    let (grid, degree) = if degree == 0 {
        (build_grid(IntervalSpec::point(n / k), 1)?, 0)
    } else {
        let iv = localized_interval(n, k, degree)?;
        let s = if iv.degenerate { 1 } else { spec.s };
        (build_grid(iv, s)?, degree)
    };
    let problem = SipProblem::new(degree, grid, reg_weight)?;
    solve(&problem, &SolveOptions::with_tol(spec.tol))
}

/// RWC: variance weight `1/k`.
pub fn rwc_coefficients(k: f64, n: f64, spec: &EstimatorSpec) -> Result<SolveResult> {
    solve_weighted(k, n, 1.0 / k, spec)
}

/// RWC-S: variance weight `1/Ŝ_c`, with `Ŝ_c` the counting estimate from the same sample.
pub fn rwcs_coefficients(
    k: f64,
    n: f64,
    s_count: f64,
    spec: &EstimatorSpec,
) -> Result<SolveResult> {
    if !(s_count >= 1.0 && s_count.is_finite()) {
        return Err(Error::Precondition(format!(
            "RWC-S needs a counting estimate >= 1, got {s_count}"
        )));
    }
    solve_weighted(k, n, 1.0 / s_count, spec)
}

/// `Σ_j h_j g_L(j)`; unseen symbols contribute nothing.
pub fn apply_poly_estimator(fp: &Fingerprint, p: &Polynomial) -> Result<f64> {
    let g = g_values(p)?;
    Ok(fp
        .iter()
        .map(|(j, hj)| hj as f64 * g.at(usize::try_from(j).unwrap_or(usize::MAX)))
        .sum())
}

/// `Ŝ_c / (1 - h1/n)`, computed as `Ŝ_c n / (n - h1)` so it is correctly rounded.
pub fn good_turing(fp: &Fingerprint) -> Result<f64> {
    let n = fp.n();
    if n == 0 {
        return Err(Error::Precondition(
            "Good-Turing needs at least one sample".into(),
        ));
    }
    let h1 = fp.get(1);
    if h1 == n {
        return Err(Error::CoverageZero);
    }
    Ok(fp.distinct() as f64 * n as f64 / (n - h1) as f64)
}

pub fn naive_count(fp: &Fingerprint) -> f64 {
    fp.distinct() as f64
}

/// Solver and construction details attached to an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Diagnostics {
    fn from_solve(r: &SolveResult) -> Self {
        Self {
            degree: Some(r.coeffs.degree()),
            interval: Some(r.grid.interval),
            reg_weight: Some(r.reg_weight),
            t_d: Some(r.t_d),
            duality_gap: Some(r.duality_gap),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Polynomial>,
    pub diagnostics: Diagnostics,
}

/// The data-independent part of an estimator for fixed `(k, n)`, reusable across samples.
#[derive(Debug, Clone)]
pub enum Prepared {
    Poly {
        kind: EstimatorKind,
        coeffs: Polynomial,
        diagnostics: Diagnostics,
    },
    /// Coefficients depend on the sample, so they are solved per fingerprint.
    Rwcs {
        spec: EstimatorSpec,
        k: f64,
        n: f64,
    },
    GoodTuring {
        fallback: bool,
    },
    Naive {
        note: Option<String>,
    },
}

/// Builds the reusable part of `spec` for sample size `n` and class parameter `k`.
pub fn prepare(spec: &EstimatorSpec, k: f64, n: f64) -> Result<Prepared> {
    spec.validate()?;
    Ok(match spec.kind {
        EstimatorKind::Naive => Prepared::Naive { note: None },
        EstimatorKind::GoodTuring => Prepared::GoodTuring {
            fallback: spec.fallback,
        },
        EstimatorKind::Rwcs => Prepared::Rwcs { spec: *spec, k, n },
        EstimatorKind::Rwc => {
            let r = rwc_coefficients(k, n, spec)?;
            Prepared::Poly {
                kind: EstimatorKind::Rwc,
                diagnostics: Diagnostics::from_solve(&r),
                coeffs: r.coeffs,
            }
        }
        EstimatorKind::Wy => match wy_coefficients(k, n, spec.c0, spec.c1) {
            Ok(coeffs) => Prepared::Poly {
                kind: EstimatorKind::Wy,
                diagnostics: Diagnostics {
                    degree: Some(coeffs.degree()),
                    interval: wy_interval(k, n, spec.c1).ok(),
                    ..Diagnostics::default()
                },
                coeffs,
            },
            Err(e @ Error::IntervalCollapse { .. }) if spec.fallback => Prepared::Naive {
                note: Some(format!("{e}; reported naive count")),
            },
            Err(e) => return Err(e),
        },
    })
}

impl Prepared {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Prepared::Poly { kind, .. } => *kind,
            Prepared::Rwcs { .. } => EstimatorKind::Rwcs,
            Prepared::GoodTuring { .. } => EstimatorKind::GoodTuring,
            Prepared::Naive { note: None } => EstimatorKind::Naive,
            Prepared::Naive { note: Some(_) } => EstimatorKind::Wy,
        }
    }

    pub fn apply(&self, fp: &Fingerprint) -> Result<EstimateResult> {
        let kind = self.kind();
        match self {
            Prepared::Poly {
                coeffs,
                diagnostics,
                ..
            } => Ok(EstimateResult {
                estimator: kind,
                value: apply_poly_estimator(fp, coeffs)?,
                coeffs: Some(coeffs.clone()),
                diagnostics: diagnostics.clone(),
            }),
            Prepared::Rwcs { spec, k, n } => {
                let r = rwcs_coefficients(*k, *n, naive_count(fp), spec)?;
                Ok(EstimateResult {
                    estimator: kind,
                    value: apply_poly_estimator(fp, &r.coeffs)?,
                    diagnostics: Diagnostics::from_solve(&r),
                    coeffs: Some(r.coeffs),
                })
            }
            Prepared::GoodTuring { fallback } => {
                let (value, notes) = match good_turing(fp) {
                    Ok(v) => (v, vec![]),
                    Err(e @ Error::CoverageZero) if *fallback => {
                        (naive_count(fp), vec![format!("{e}; reported naive count")])
                    }
                    Err(e) => return Err(e),
                };
                Ok(EstimateResult {
                    estimator: kind,
                    value,
                    coeffs: None,
                    diagnostics: Diagnostics {
                        notes,
                        ..Diagnostics::default()
                    },
                })
            }
            Prepared::Naive { note } => Ok(EstimateResult {
                estimator: kind,
                value: naive_count(fp),
                coeffs: None,
                diagnostics: Diagnostics {
                    notes: note.iter().cloned().collect(),
                    ..Diagnostics::default()
                },
            }),
        }
    }
}

/// Builds and applies `spec` to `fp` with class parameter `k`.
pub fn estimate(spec: &EstimatorSpec, fp: &Fingerprint, k: f64) -> Result<EstimateResult> {
    let n = fp.n();
    if n == 0 && matches!(spec.kind, EstimatorKind::Naive) {
        return prepare(spec, k, 1.0)?.apply(fp);
    }
    if n == 0 {
        return Err(Error::Precondition("empty sample".into()));
    }
    prepare(spec, k, n as f64)?.apply(fp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(pairs: &[(u64, u64)]) -> Fingerprint {
        Fingerprint::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn tokens_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.token().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("pjw".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn wy_examples() {
        let p = wy_coefficients(1e6, 1e6, 0.558, 0.5).unwrap();
        assert_eq!(p.degree(), 7);
        assert_eq!(p.coeffs()[0], -1.0);
        let iv = wy_interval(1e6, 1e6, 0.5).unwrap();
        assert_eq!(iv.lo, 1.0);
        assert!((iv.hi - 6.907_755_278_982_137).abs() < 1e-12);

        let p = wy_coefficients(8.0, 8.0, 0.558, 0.5).unwrap();
        assert_eq!(p.degree(), 1);
        let want = 2.0 / (1.0 + 0.5 * 8f64.ln());
        assert!((p.coeffs()[1] - want).abs() < 1e-14);
        assert!((p.coeffs()[1] - 0.98053).abs() < 1e-5);

        assert!(matches!(
            wy_coefficients(2.0, 0.1, 0.558, 0.5),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            wy_coefficients(2.0, 100.0, 0.558, 0.5),
            Err(Error::IntervalCollapse { .. })
        ));
        assert!(matches!(
            wy_coefficients(1e4, 1e5, 0.558, 0.5),
            Err(Error::IntervalCollapse { .. })
        ));
    }

    #[test]
    fn rwc_standard_instance() {
        let spec = EstimatorSpec::new(EstimatorKind::Rwc);
        let r = rwc_coefficients(1e6, 1e6, &spec).unwrap();
        assert_eq!(r.coeffs.degree(), 7);
        assert_eq!((r.grid.interval.lo, r.grid.interval.hi), (1.0, 45.5));
        assert_eq!(r.grid.len(), 1000);
        assert_eq!(r.reg_weight, 1e-6);
        assert!(r.duality_gap <= 1e-8);
    }

    #[test]
    fn rwc_degree_zero_is_counting() {
        let spec = EstimatorSpec::new(EstimatorKind::Rwc);
        let r = rwc_coefficients(5.0, 5.0, &spec).unwrap();
        assert_eq!(r.coeffs.coeffs(), &[-1.0]);
    }

    #[test]
    fn rwcs_examples() {
        let spec = EstimatorSpec {
            s: 200,
            ..EstimatorSpec::new(EstimatorKind::Rwcs)
        };
        let r = rwcs_coefficients(1e4, 1e4, 5000.0, &spec).unwrap();
        assert_eq!(r.reg_weight, 2e-4);
        let a = rwcs_coefficients(1e4, 1e4, 1e4, &spec).unwrap();
        let b = rwc_coefficients(1e4, 1e4, &spec).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        assert!(matches!(
            rwcs_coefficients(1e4, 1e4, 0.0, &spec),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn apply_examples() {
        let p = Polynomial::new(vec![-1.0, 8.0 / 7.0, -2.0 / 7.0]).unwrap();
        let v = apply_poly_estimator(&fp(&[(1, 2), (2, 1), (3, 1)]), &p).unwrap();
        assert!((v - 40.0 / 7.0).abs() < 1e-14);
        assert_eq!(apply_poly_estimator(&Fingerprint::new(), &p).unwrap(), 0.0);
        assert_eq!(
            apply_poly_estimator(&fp(&[(3, 4), (9, 2)]), &p).unwrap(),
            6.0
        );
        let bad = Polynomial::new(vec![1.0, 2.0]).unwrap();
        assert!(apply_poly_estimator(&fp(&[(1, 1)]), &bad).is_err());
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(good_turing(&fp(&[(1, 2), (2, 1), (3, 2)])).unwrap(), 6.25);
        assert_eq!(good_turing(&fp(&[(2, 3), (5, 1)])).unwrap(), 4.0);
        assert!(matches!(
            good_turing(&fp(&[(1, 5)])),
            Err(Error::CoverageZero)
        ));
        assert_eq!(Error::CoverageZero.exit_code(), 2);
        assert_eq!(naive_count(&fp(&[(1, 2), (2, 1), (3, 1)])), 4.0);
        assert_eq!(naive_count(&Fingerprint::new()), 0.0);
        assert_eq!(naive_count(&fp(&[(5, 3)])), 3.0);
    }

    #[test]
    fn dispatch() {
        let sample = fp(&[(1, 2), (2, 1), (3, 1)]);
        let naive = estimate(&EstimatorSpec::new(EstimatorKind::Naive), &sample, 100.0).unwrap();
        assert_eq!(naive.value, 4.0);

        let spec = EstimatorSpec {
            s: 100,
            ..EstimatorSpec::new(EstimatorKind::Rwcs)
        };
        let r = estimate(&spec, &sample, 100.0).unwrap();
        assert_eq!(r.diagnostics.reg_weight, Some(0.25));
        let direct = rwcs_coefficients(100.0, 7.0, 4.0, &spec).unwrap();
        assert_eq!(
            r.value,
            apply_poly_estimator(&sample, &direct.coeffs).unwrap()
        );

        let gt = estimate(
            &EstimatorSpec::new(EstimatorKind::GoodTuring),
            &fp(&[(2, 3)]),
            10.0,
        );
        assert_eq!(gt.unwrap().value, 3.0);

        let singletons = fp(&[(1, 4)]);
        let spec = EstimatorSpec::new(EstimatorKind::GoodTuring);
        assert!(matches!(
            estimate(&spec, &singletons, 10.0),
            Err(Error::CoverageZero)
        ));
        let spec = EstimatorSpec {
            fallback: true,
            ..spec
        };
        let r = estimate(&spec, &singletons, 10.0).unwrap();
        assert_eq!(r.value, 4.0);
        assert_eq!(r.diagnostics.notes.len(), 1);

        let spec = EstimatorSpec {
            fallback: true,
            ..EstimatorSpec::new(EstimatorKind::Wy)
        };
        let heavy = fp(&[(500, 20)]);
        let r = estimate(&spec, &heavy, 100.0).unwrap();
        assert_eq!((r.estimator, r.value), (EstimatorKind::Wy, 20.0));
        assert!(!r.diagnostics.notes.is_empty());
    }

    #[test]
    fn good_turing_dominates_naive() {
        for pairs in [&[(1, 3), (2, 2)][..], &[(1, 1), (4, 7)], &[(2, 2), (3, 1)]] {
            let f = fp(pairs);
            let gt = good_turing(&f).unwrap();
            let nc = naive_count(&f);
            assert!(gt >= nc);
            assert_eq!(gt == nc, f.get(1) == 0);
        }
    }

    #[test]
    fn poly_estimator_is_linear_in_the_fingerprint() {
        let p = wy_coefficients(1e4, 1e4, 0.558, 0.5).unwrap();
        let a = fp(&[(1, 10), (2, 4), (7, 1)]);
        let b = fp(&[(1, 3), (3, 2), (40, 5)]);
        let lhs = apply_poly_estimator(&a.merge(&b), &p).unwrap();
        let rhs = apply_poly_estimator(&a, &p).unwrap() + apply_poly_estimator(&b, &p).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
