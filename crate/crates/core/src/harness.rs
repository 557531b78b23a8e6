//! Risk curves over distribution suites, grid-convergence studies, and bias curves.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{child_seed, label_hash, DistributionSpec, Fingerprint, RNG_VERSION};
use crate::error::{Error, Result};
use crate::estimators::{degree_for, prepare, EstimatorSpec};
use crate::poly::{objective_g, ObjectiveParams};
use crate::solver::{
    build_grid, localized_interval, solve, IntervalSpec, SipProblem, SolveOptions,
};
use crate::Polynomial;

/// Fixed-width float formatting: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Squared-loss normalization: by `k²` or by the true support `S²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    K2,
    S2,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::K2 => "k2",
            Normalization::S2 => "s2",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "k2" => Ok(Normalization::K2),
            "s2" => Ok(Normalization::S2),
            _ => Err(Error::Domain(format!(
                "normalization must be k2 or s2, got {s:?}"
            ))),
        }
    }
}

/// One `(estimator, distribution, n)` cell. Statistics are `None` when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub estimator: String,
    pub distribution: String,
    pub n: u64,
    pub trials: usize,
    pub mean_estimate: Option<f64>,
    /// Population standard deviation of the estimates.
    pub std: Option<f64>,
    /// `Σ (Ŝ - S)² / trials`.
    pub mse: Option<f64>,
    pub normalization: Normalization,
    pub normalized_mse: Option<f64>,
    pub seed: u64,
    /// Seconds spent constructing and applying the estimator.
    pub runtime: f64,
    pub support: usize,
    pub k: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub rng: String,
    pub rows: Vec<RiskRow>,
}

const RISK_HEADER: [&str; 14] = [
    "estimator",
    "distribution",
    "n",
    "trials",
    "mean_estimate",
    "std",
    "mse",
    "normalization",
    "normalized_mse",
    "seed",
    "runtime",
    "support",
    "k",
    "error",
];

impl RiskReport {
    /// CSV with a header row. Runtimes are left blank unless `timings` is set, so that
    /// reruns are byte-identical.
    pub fn to_csv(&self, timings: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RISK_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.distribution.clone(),
                r.n.to_string(),
                r.trials.to_string(),
                fmt_opt(r.mean_estimate),
                fmt_opt(r.std),
                fmt_opt(r.mse),
                r.normalization.to_string(),
                fmt_opt(r.normalized_mse),
                r.seed.to_string(),
                if timings {
                    fmt_f64(r.runtime)
                } else {
                    String::new()
                },
                r.support.to_string(),
                fmt_f64(r.k),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// JSON mirror of the CSV; runtimes are zeroed unless `timings` is set.
    pub fn to_json(&self, timings: bool) -> Result<String> {
        let mut report = self.clone();
        if !timings {
            report.rows.iter_mut().for_each(|r| r.runtime = 0.0);
        }
        serde_json::to_string_pretty(&report).map_err(|e| Error::Domain(e.to_string()))
    }

    /// Worst case of the normalized MSE over the distribution suite for one estimator and `n`.
    /// `None` if the estimator has no successful rows there.
    pub fn worst_case(&self, estimator: &str, n: Option<u64>) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator && n.is_none_or(|n| r.n == n))
            .filter_map(|r| r.normalized_mse)
            .reduce(f64::max)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Seed of trial `trial` in the cell for `dist` at sample size `n`.
pub fn trial_seed(master: u64, dist: &DistributionSpec, n: u64, trial: u64) -> u64 {
    let cell = child_seed(
        master ^ label_hash(&format!("{}/{}", dist.label(), dist.support)),
        n,
    );
    child_seed(cell, trial)
}

/// Monte Carlo risk of every estimator on every distribution and sample size.
///
/// All estimators in a cell see the same `trials` samples. Data-independent coefficients
/// are solved once per cell and reused across trials. A failing cell is reported with its
/// error instead of aborting the sweep.
pub fn evaluate_risk(
    specs: &[EstimatorSpec],
    dists: &[DistributionSpec],
    n_grid: &[u64],
    trials: usize,
    seed: u64,
    normalization: Normalization,
) -> Result<RiskReport> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    let mut rows = Vec::with_capacity(specs.len() * dists.len() * n_grid.len());
    for dist in dists {
        let sampler = dist.sampler();
        let k = dist.k();
        let truth = dist.support as f64;
        let scale = match normalization {
            Normalization::K2 => k * k,
            Normalization::S2 => truth * truth,
        };
        for &n in n_grid {
            let samples: Vec<Fingerprint> = (0..trials as u64)
                .into_par_iter()
                .map(|t| sampler.fingerprint(n, trial_seed(seed, dist, n, t)))
                .collect();
            for spec in specs {
                let start = Instant::now();
                let outcome = prepare(spec, k, n as f64).and_then(|p| {
                    samples
                        .par_iter()
                        .map(|fp| p.apply(fp).map(|r| r.value))
                        .collect::<Result<Vec<f64>>>()
                });
                let runtime = start.elapsed().as_secs_f64();
                let mut row = RiskRow {
                    estimator: spec.kind.token().to_owned(),
                    distribution: dist.label(),
                    n,
                    trials,
                    mean_estimate: None,
                    std: None,
                    mse: None,
                    normalization,
                    normalized_mse: None,
                    seed,
                    runtime,
                    support: dist.support,
                    k,
                    error: None,
                };
                match outcome {
                    Ok(values) => {
                        let m = values.len() as f64;
                        let mean = values.iter().sum::<f64>() / m;
                        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                        let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m;
                        row.mean_estimate = Some(mean);
                        row.std = Some(var.sqrt());
                        row.mse = Some(mse);
                        row.normalized_mse = Some(mse / scale);
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                rows.push(row);
            }
        }
    }
    Ok(RiskReport {
        rng: RNG_VERSION.to_owned(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub s: usize,
    /// Grid spacing.
    pub d: f64,
    pub t_d: Option<f64>,
    pub duality_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub k: f64,
    pub n: f64,
    pub degree: usize,
    pub interval: IntervalSpec,
    pub rows: Vec<ConvergenceRow>,
    /// Value on the finest grid, standing in for the continuous optimum.
    pub t_ref: Option<f64>,
    /// Slope of `ln(t_ref - t_d)` against `ln d`, excluding the finest grid.
    pub exponent: Option<f64>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "s",
            "d",
            "t_d",
            "duality_gap",
            "t_ref_minus_t_d",
            "fitted_exponent",
            "error",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            let diff = match (self.t_ref, r.t_d) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            w.write_record([
                r.s.to_string(),
                fmt_f64(r.d),
                fmt_opt(r.t_d),
                fmt_opt(r.duality_gap),
                fmt_opt(diff),
                fmt_opt(self.exponent),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Solves the RWC program (variance weight `1/k`) on nested grids and fits the rate at which
/// `t_d` approaches the finest-grid value.
pub fn grid_convergence_study(
    k: f64,
    n: f64,
    s_list: &[usize],
    spec: &EstimatorSpec,
) -> Result<ConvergenceReport> {
    spec.validate()?;
    if s_list.is_empty() {
        return Err(Error::Domain("s_list must not be empty".into()));
    }
    for w in s_list.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a || a < 2 || (b - 1) % (a - 1) != 0 {
            return Err(Error::InvalidGrid(format!(
                "grids must be nested refinements: {b} points do not refine {a}"
            )));
        }
    }
    let degree = degree_for(k, spec.c0);
    if degree == 0 {
        return Err(Error::Precondition(format!("k = {k} gives degree zero")));
    }
    let interval = localized_interval(n, k, degree)?;
    if interval.degenerate {
        return Err(Error::Precondition(format!(
            "n/k = {} lies beyond the localized interval; nothing to discretize",
            n / k
        )));
    }
    let rows: Vec<ConvergenceRow> = s_list
        .par_iter()
        .map(|&s| {
            let grid = build_grid(interval, s);
            let d = interval.len() / (s - 1) as f64;
            let solved = grid
                .and_then(|g| SipProblem::new(degree, g, 1.0 / k))
                .and_then(|p| solve(&p, &SolveOptions::with_tol(spec.tol)));
            match solved {
                Ok(r) => ConvergenceRow {
                    s,
                    d,
                    t_d: Some(r.t_d),
                    duality_gap: Some(r.duality_gap),
                    error: None,
                },
                Err(e) => ConvergenceRow {
                    s,
                    d,
                    t_d: None,
                    duality_gap: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let t_ref = rows.last().and_then(|r| r.t_d);
    let exponent = t_ref.and_then(|t_ref| {
        let (x, y): (Vec<f64>, Vec<f64>) = rows[..rows.len() - 1]
            .iter()
            .filter_map(|r| r.t_d.map(|t| (r.d, t_ref - t)))
            .filter(|&(_, diff)| diff > 0.0)
            .map(|(d, diff)| (d.ln(), diff.ln()))
            .unzip();
        fit_slope(&x, &y)
    });
    Ok(ConvergenceReport {
        k,
        n,
        degree,
        interval,
        rows,
        t_ref,
        exponent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub lambda: f64,
    /// Signed `e^{-λ} P(λ)`.
    pub bias: f64,
    pub variance_term: f64,
    pub g: f64,
}

/// Objective components of `p` at `points` evenly spaced means over `interval`.
pub fn bias_curve(
    p: &Polynomial,
    interval: IntervalSpec,
    points: usize,
    reg_weight: f64,
) -> Result<Vec<BiasRow>> {
    if points < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points, got {points}"
        )));
    }
    if interval.degenerate {
        return Err(Error::InvalidGrid(
            "bias curve needs a non-degenerate interval".into(),
        ));
    }
    build_grid(interval, points)?
        .points
        .iter()
        .map(|&lambda| {
            let o = objective_g(p, ObjectiveParams::new(reg_weight, lambda)?)?;
            Ok(BiasRow {
                lambda,
                bias: o.bias,
                variance_term: o.variance_term,
                g: o.g,
            })
        })
        .collect()
}

pub fn bias_curve_csv(rows: &[BiasRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "bias", "variance_term", "g"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.lambda),
            fmt_f64(r.bias),
            fmt_f64(r.variance_term),
            fmt_f64(r.g),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_distribution, DistKind};
    use crate::estimators::{EstimatorKind, EstimatorSpec};

    fn naive() -> EstimatorSpec {
        EstimatorSpec::new(EstimatorKind::Naive)
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0).parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn naive_is_consistent_on_large_samples() {
        let d = DistributionSpec::new(DistKind::Uniform, 50).unwrap();
        let r = evaluate_risk(&[naive()], &[d], &[5000], 5, 7, Normalization::K2).unwrap();
        assert_eq!(r.rows[0].normalized_mse, Some(0.0));
        assert_eq!(r.rows[0].mean_estimate, Some(50.0));
    }

    #[test]
    fn single_trial_mse_is_the_squared_error() {
        let d = DistributionSpec::new(DistKind::Zipf(1.0), 200).unwrap();
        let r = evaluate_risk(
            &[naive()],
            std::slice::from_ref(&d),
            &[100],
            1,
            3,
            Normalization::S2,
        )
        .unwrap();
        let row = &r.rows[0];
        let est = d
            .sampler()
            .fingerprint(100, trial_seed(3, &d, 100, 0))
            .distinct() as f64;
        assert_eq!(row.mse, Some((est - 200.0).powi(2)));
        assert_eq!(row.std, Some(0.0));
        assert_eq!(row.normalized_mse, Some((est - 200.0).powi(2) / 40000.0));
    }

    #[test]
    fn report_is_deterministic_and_marks_errors() {
        let d = make_distribution(DistKind::Uniform, 1e-2).unwrap();
        let wy = EstimatorSpec::new(EstimatorKind::Wy);
        let specs = [naive(), wy];
        let a = evaluate_risk(
            &specs,
            std::slice::from_ref(&d),
            &[50, 500],
            4,
            11,
            Normalization::K2,
        )
        .unwrap();
        let b = evaluate_risk(&specs, &[d], &[50, 500], 4, 11, Normalization::K2).unwrap();
        assert_eq!(a.to_csv(false).unwrap(), b.to_csv(false).unwrap());
        let collapsed = a
            .rows
            .iter()
            .find(|r| r.estimator == "wy" && r.n == 500)
            .unwrap();
        assert!(collapsed.error.as_deref().unwrap().contains("collapsed"));
        assert!(collapsed.mse.is_none());
        let csv = a.to_csv(false).unwrap();
        assert!(
            csv.starts_with("estimator,distribution,n,trials,mean_estimate,std,mse,normalization")
        );
        assert_eq!(csv.lines().count(), 5);
        assert!(a.to_json(false).unwrap().contains("\"rows\""));
    }

    #[test]
    fn worst_case_takes_the_suite_max() {
        let d1 = DistributionSpec::new(DistKind::Uniform, 100).unwrap();
        let d2 = DistributionSpec::new(DistKind::Zipf(1.0), 100).unwrap();
        let r = evaluate_risk(&[naive()], &[d1, d2], &[100], 3, 5, Normalization::S2).unwrap();
        let max = r
            .rows
            .iter()
            .filter_map(|r| r.normalized_mse)
            .fold(0.0, f64::max);
        assert_eq!(r.worst_case("naive", Some(100)), Some(max));
        assert_eq!(r.worst_case("rwc", None), None);
    }

    #[test]
    fn convergence_checks_nesting() {
        let spec = EstimatorSpec::new(EstimatorKind::Rwc);
        assert!(grid_convergence_study(1e4, 1e4, &[11, 20], &spec).is_err());
        assert!(grid_convergence_study(1e4, 1e4, &[], &spec).is_err());
        let r = grid_convergence_study(1e4, 1e4, &[11], &spec).unwrap();
        assert!(r.exponent.is_none());
        assert_eq!(r.rows.len(), 1);
        let r = grid_convergence_study(1e4, 1e4, &[11, 21, 41], &spec).unwrap();
        let t: Vec<f64> = r.rows.iter().map(|r| r.t_d.unwrap()).collect();
        assert!(t.windows(2).all(|w| w[1] >= w[0] - 2.0 * spec.tol));
        assert!(r.to_csv().unwrap().lines().count() == 4);
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0];
        assert!((fit_slope(&x, &[1.0, 3.0, 5.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn bias_curve_examples() {
        let p = Polynomial::new(vec![-1.0, 1.0]).unwrap();
        let iv = IntervalSpec::new(1.0, 2.0).unwrap();
        let rows = bias_curve(&p, iv, 5, 0.0).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].bias, 0.0);
        for r in &rows {
            assert!((r.bias - (-r.lambda).exp() * (r.lambda - 1.0)).abs() < 1e-16);
        }
        let rows = bias_curve(&p, iv, 2, 0.1).unwrap();
        assert_eq!((rows[0].lambda, rows[1].lambda), (1.0, 2.0));
        assert!(bias_curve(&p, iv, 1, 0.1).is_err());
        assert!(bias_curve_csv(&rows)
            .unwrap()
            .starts_with("lambda,bias,variance_term,g\n"));
    }
}
