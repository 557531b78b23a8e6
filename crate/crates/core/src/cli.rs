//! Command-line surface: argument definitions and command handlers.
//!
//! Handlers return the text destined for stdout together with the exit code, so the
//! binary stays a thin shell and every command can be exercised in-process.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::data::{
    histogram_from_counts_file, make_distribution, tokenize_text, DistKind, Histogram,
};
use crate::error::{Error, Result};
use crate::estimators::{
    degree_for, prepare, rwc_coefficients, rwcs_coefficients, wy_coefficients, wy_interval,
    EstimateResult, EstimatorKind, EstimatorSpec, DEFAULT_C0, DEFAULT_C1, DEFAULT_GRID_POINTS,
};
use crate::harness::{
    bias_curve, bias_curve_csv, evaluate_risk, fmt_f64, grid_convergence_study, Normalization,
};
use crate::poly::g_values;
use crate::solver::{localized_interval, IntervalSpec, DEFAULT_TOL};
use crate::Polynomial;

#[derive(Debug, Parser)]
#[command(
    name = "suppest",
    version,
    about = "Support-size estimation from samples"
)]
pub struct Cli {
    /// Worker threads; results are identical for any value
    #[arg(long, global = true, env = "SUPPEST_THREADS", value_parser = positive_usize)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the support size of a text file or a counts file
    Estimate(EstimateArgs),
    /// Print the coefficients of a polynomial estimator as JSON
    Coeffs(CoeffsArgs),
    /// Monte Carlo risk over synthetic distributions
    Simulate(SimulateArgs),
    /// Grid-convergence study of the solver value
    Converge(ConvergeArgs),
    /// Bias and variance terms of an estimator polynomial over an interval
    BiasCurve(BiasCurveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Degree constant: L = floor(c0 ln k)
    #[arg(long, default_value_t = DEFAULT_C0, value_parser = positive_f64)]
    pub c0: f64,
    /// Baseline interval constant: right end c1 ln k
    #[arg(long, default_value_t = DEFAULT_C1, value_parser = positive_f64)]
    pub c1: f64,
    /// Grid points for the solver
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS, value_parser = positive_usize)]
    pub s: usize,
    /// Duality-gap tolerance
    #[arg(long, default_value_t = DEFAULT_TOL, value_parser = positive_f64)]
    pub tol: f64,
    /// Report the naive count when Good-Turing coverage is zero or the baseline interval collapses
    #[arg(long, default_value_t = false)]
    pub fallback: bool,
}

impl SolverArgs {
    fn spec(&self, kind: EstimatorKind) -> EstimatorSpec {
        EstimatorSpec {
            kind,
            c0: self.c0,
            c1: self.c1,
            s: self.s,
            tol: self.tol,
            fallback: self.fallback,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Text file to tokenize (lowercased words)
    #[arg(required_unless_present = "counts", conflicts_with = "counts")]
    pub input: Option<PathBuf>,
    /// Counts file: one `symbol<TAB>count` or bare count per line
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Estimators, comma separated: rwc, rwc-s, wy, gt, naive
    #[arg(long, value_delimiter = ',', default_value = "rwc-s")]
    pub estimator: Vec<EstimatorKind>,
    /// Inverse of the minimum class probability [default: sample size n]
    #[arg(long, value_parser = positive_f64)]
    pub k: Option<f64>,
    /// Clamp each estimate to [distinct observed, k]
    #[arg(long, default_value_t = false)]
    pub clamp: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CoeffsArgs {
    #[arg(long, value_parser = positive_f64)]
    pub k: f64,
    /// Sample size
    #[arg(long, value_parser = positive_f64)]
    pub n: f64,
    /// One of rwc, rwc-s, wy
    #[arg(long, default_value = "rwc")]
    pub estimator: EstimatorKind,
    /// Observed distinct count, needed by rwc-s
    #[arg(long, value_parser = positive_f64)]
    pub distinct: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Distributions, comma separated: uniform, zipf-<a>, benford [default: the six-distribution suite]
    #[arg(long, value_delimiter = ',')]
    pub dist: Vec<DistKind>,
    /// Target minimum class probability of each distribution
    #[arg(long, default_value_t = 1e-4, value_parser = positive_f64)]
    pub min_mass: f64,
    /// Sample sizes as fractions of k, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2", value_parser = positive_f64)]
    pub n_frac: Vec<f64>,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    pub trials: usize,
    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,
    #[arg(long, default_value = "k2", value_parser = parse_normalization)]
    pub normalization: Normalization,
    /// Estimators, comma separated
    #[arg(long, value_delimiter = ',', default_value = "rwc,rwc-s,wy,gt,naive")]
    pub estimator: Vec<EstimatorKind>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Fill in the runtime column; output is then no longer byte-reproducible
    #[arg(long, default_value_t = false)]
    pub timings: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergeArgs {
    #[arg(long, default_value_t = 1e4, value_parser = positive_f64)]
    pub k: f64,
    #[arg(long, default_value_t = 1e4, value_parser = positive_f64)]
    pub n: f64,
    /// Nested grid sizes, comma separated; the last one is the reference
    #[arg(long, value_delimiter = ',', default_value = "11,21,41,81,161,5121", value_parser = positive_usize)]
    pub s_list: Vec<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BiasCurveArgs {
    #[arg(long, value_parser = positive_f64)]
    pub k: f64,
    #[arg(long, value_parser = positive_f64)]
    pub n: f64,
    /// One of rwc, rwc-s, wy
    #[arg(long, default_value = "rwc")]
    pub estimator: EstimatorKind,
    /// Observed distinct count, needed by rwc-s
    #[arg(long, value_parser = positive_f64)]
    pub distinct: Option<f64>,
    /// Points on the curve
    #[arg(long, default_value_t = 200, value_parser = positive_usize)]
    pub points: usize,
    /// Left end of the curve [default: n/k]
    #[arg(long, value_parser = positive_f64)]
    pub lo: Option<f64>,
    /// Right end of the curve [default: right end of the localized interval]
    #[arg(long, value_parser = positive_f64)]
    pub hi: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("must be positive and finite, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(x) => Ok(x),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_normalization(s: &str) -> std::result::Result<Normalization, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Text for stdout plus the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            stderr: String::new(),
            code: 0,
        }
    }

    fn failed(e: &Error) -> Self {
        Self {
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
            code: e.exit_code(),
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Outcome {
    if let Some(threads) = cli.threads {
        // A pool installed earlier in this process keeps its size; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match &cli.command {
        Command::Estimate(a) => return cmd_estimate(a),
        Command::Coeffs(a) => cmd_coeffs(a).map(Outcome::ok),
        Command::Simulate(a) => return cmd_simulate(a),
        Command::Converge(a) => cmd_converge(a).map(Outcome::ok),
        Command::BiasCurve(a) => cmd_bias_curve(a).map(Outcome::ok),
    };
    result.unwrap_or_else(|e| Outcome::failed(&e))
}

fn load_histogram(a: &EstimateArgs) -> Result<Histogram> {
    match (&a.counts, &a.input) {
        (Some(path), _) => histogram_from_counts_file(path),
        (None, Some(path)) => Ok(Histogram::from_tokens(tokenize_text(&std::fs::read(
            path,
        )?)?)),
        (None, None) => Err(Error::Domain("no input given".into())),
    }
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(items.len());
    for &x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn cmd_estimate(a: &EstimateArgs) -> Outcome {
    let hist = match load_histogram(a) {
        Ok(h) => h,
        Err(e) => return Outcome::failed(&e),
    };
    let fp = hist.fingerprint();
    let n = fp.n();
    let distinct = fp.distinct() as f64;
    let mut notes = Vec::new();
    let k = match a.k {
        Some(k) => k,
        None => {
            notes.push(format!("k not supplied; using k = n = {n}"));
            n as f64
        }
    };
    let mut code = 0;
    let mut stderr = String::new();
    let mut results: Vec<std::result::Result<EstimateResult, (EstimatorKind, Error)>> = Vec::new();
    for kind in dedup(&a.estimator) {
        let spec = a.solver.spec(kind);
        let r = if n == 0 && kind != EstimatorKind::Naive {
            Err(Error::Precondition("empty sample".into()))
        } else {
            prepare(&spec, k, (n.max(1)) as f64).and_then(|p| p.apply(&fp))
        };
        match r {
            Ok(mut r) => {
                if a.clamp {
                    let clamped = r.value.clamp(distinct, k.max(distinct));
                    if clamped != r.value {
                        r.diagnostics
                            .notes
                            .push(format!("clamped from {}", fmt_f64(r.value)));
                        r.value = clamped;
                    }
                }
                results.push(Ok(r));
            }
            Err(e) => {
                stderr.push_str(&format!("error: {}: {e}\n", kind.token()));
                code = code.max(e.exit_code());
                results.push(Err((kind, e)));
            }
        }
    }
    let stdout = match a.format {
        Format::Json => {
            let rows: Vec<Value> = results
                .iter()
                .map(|r| match r {
                    Ok(r) => serde_json::to_value(r).expect("estimate serializes"),
                    Err((kind, e)) => json!({"estimator": kind.token(), "error": e.to_string()}),
                })
                .collect();
            let doc = json!({
                "n": n,
                "distinct": fp.distinct(),
                "k": k,
                "notes": notes,
                "results": rows,
            });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut rec = |fields: Vec<String>| w.write_record(fields).expect("in-memory csv");
            rec([
                "estimator",
                "value",
                "n",
                "distinct",
                "k",
                "degree",
                "t_d",
                "duality_gap",
                "notes",
                "error",
            ]
            .map(String::from)
            .to_vec());
            for r in &results {
                let base = |kind: EstimatorKind| vec![kind.token().to_owned()];
                match r {
                    Ok(r) => {
                        let d = &r.diagnostics;
                        let mut f = base(r.estimator);
                        f.extend([
                            fmt_f64(r.value),
                            n.to_string(),
                            fp.distinct().to_string(),
                            fmt_f64(k),
                            d.degree.map(|x| x.to_string()).unwrap_or_default(),
                            d.t_d.map(fmt_f64).unwrap_or_default(),
                            d.duality_gap.map(fmt_f64).unwrap_or_default(),
                            notes
                                .iter()
                                .chain(&d.notes)
                                .cloned()
                                .collect::<Vec<_>>()
                                .join("; "),
                            String::new(),
                        ]);
                        rec(f);
                    }
                    Err((kind, e)) => {
                        let mut f = base(*kind);
                        f.extend([
                            String::new(),
                            n.to_string(),
                            fp.distinct().to_string(),
                            fmt_f64(k),
                            String::new(),
                            String::new(),
                            String::new(),
                            notes.join("; "),
                            e.to_string(),
                        ]);
                        rec(f);
                    }
                }
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
        }
    };
    Outcome {
        stdout,
        stderr,
        code,
    }
}

fn decimal_strings(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| fmt_f64(x)).collect()
}

fn interval_json(iv: &IntervalSpec) -> Value {
    json!({"lo": fmt_f64(iv.lo), "hi": fmt_f64(iv.hi), "degenerate": iv.degenerate})
}

fn needs_poly(kind: EstimatorKind) -> Result<()> {
    match kind {
        EstimatorKind::Rwc | EstimatorKind::Rwcs | EstimatorKind::Wy => Ok(()),
        _ => Err(Error::Domain(format!(
            "{} is not a polynomial estimator; choose rwc, rwc-s or wy",
            kind.token()
        ))),
    }
}

pub fn cmd_coeffs(a: &CoeffsArgs) -> Result<String> {
    needs_poly(a.estimator)?;
    let spec = a.solver.spec(a.estimator);
    spec.validate()?;
    let doc = if a.estimator == EstimatorKind::Wy {
        let p = wy_coefficients(a.k, a.n, spec.c0, spec.c1)?;
        let iv = wy_interval(a.k, a.n, spec.c1)?;
        json!({
            "estimator": "wy",
            "k": fmt_f64(a.k),
            "n": fmt_f64(a.n),
            "degree": p.degree(),
            "interval": interval_json(&iv),
            "coeffs": decimal_strings(p.coeffs()),
            "g_values": decimal_strings(&g_values(&p)?.values),
        })
    } else {
        let r = if a.estimator == EstimatorKind::Rwcs {
            let distinct = a.distinct.ok_or_else(|| {
                Error::Domain("rwc-s needs --distinct (observed distinct count)".into())
            })?;
            rwcs_coefficients(a.k, a.n, distinct, &spec)?
        } else {
            rwc_coefficients(a.k, a.n, &spec)?
        };
        json!({
            "estimator": a.estimator.token(),
            "k": fmt_f64(a.k),
            "n": fmt_f64(a.n),
            "degree": r.coeffs.degree(),
            "interval": interval_json(&r.grid.interval),
            "grid_points": r.grid.len(),
            "reg_weight": fmt_f64(r.reg_weight),
            "coeffs": decimal_strings(r.coeffs.coeffs()),
            "g_values": decimal_strings(&g_values(&r.coeffs)?.values),
            "t_d": fmt_f64(r.t_d),
            "duality_gap": fmt_f64(r.duality_gap),
            "tol": fmt_f64(spec.tol),
            "iterations": r.iterations,
        })
    };
    Ok(serde_json::to_string_pretty(&doc).expect("json") + "\n")
}

pub fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let run = || -> Result<(String, bool)> {
        let kinds = if a.dist.is_empty() {
            DistKind::standard_suite()
        } else {
            a.dist.clone()
        };
        let dists = kinds
            .into_iter()
            .map(|kind| make_distribution(kind, a.min_mass))
            .collect::<Result<Vec<_>>>()?;
        let specs: Vec<EstimatorSpec> = dedup(&a.estimator)
            .into_iter()
            .map(|k| a.solver.spec(k))
            .collect();
        let mut rows = Vec::new();
        let mut rng = String::new();
        // Sample sizes depend on each distribution's own k.
        for dist in &dists {
            let n_grid = a
                .n_frac
                .iter()
                .map(|f| ((f * dist.k()).round() as u64).max(1))
                .collect::<Vec<_>>();
            let r = evaluate_risk(
                &specs,
                std::slice::from_ref(dist),
                &dedup(&n_grid),
                a.trials,
                a.seed,
                a.normalization,
            )?;
            rng = r.rng;
            rows.extend(r.rows);
        }
        let any_ok = rows.iter().any(|r| r.error.is_none());
        let report = crate::harness::RiskReport { rng, rows };
        let text = match a.format {
            Format::Csv => report.to_csv(a.timings)?,
            Format::Json => report.to_json(a.timings)? + "\n",
        };
        Ok((text, any_ok))
    };
    match run() {
        Ok((stdout, true)) => Outcome::ok(stdout),
        Ok((stdout, false)) => Outcome {
            stdout,
            stderr: "error: every cell failed\n".into(),
            code: 1,
        },
        Err(e) => Outcome::failed(&e),
    }
}

pub fn cmd_converge(a: &ConvergeArgs) -> Result<String> {
    let spec = a.solver.spec(EstimatorKind::Rwc);
    grid_convergence_study(a.k, a.n, &a.s_list, &spec)?.to_csv()
}

pub fn cmd_bias_curve(a: &BiasCurveArgs) -> Result<String> {
    needs_poly(a.estimator)?;
    let spec = a.solver.spec(a.estimator);
    spec.validate()?;
    let (p, reg): (Polynomial, f64) = match a.estimator {
        EstimatorKind::Wy => (wy_coefficients(a.k, a.n, spec.c0, spec.c1)?, 1.0 / a.k),
        EstimatorKind::Rwcs => {
            let distinct = a.distinct.ok_or_else(|| {
                Error::Domain("rwc-s needs --distinct (observed distinct count)".into())
            })?;
            let r = rwcs_coefficients(a.k, a.n, distinct, &spec)?;
            (r.coeffs, r.reg_weight)
        }
        _ => {
            let r = rwc_coefficients(a.k, a.n, &spec)?;
            (r.coeffs, r.reg_weight)
        }
    };
    let lo = a.lo.unwrap_or(a.n / a.k);
    let hi = match a.hi {
        Some(hi) => hi,
        None => localized_interval(a.n, a.k, degree_for(a.k, spec.c0).max(1))?.hi,
    };
    let rows = bias_curve(&p, IntervalSpec::new(lo, hi)?, a.points, reg)?;
    bias_curve_csv(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_follow_conventions() {
        let cli = Cli::try_parse_from(["suppest", "converge"]).unwrap();
        let Command::Converge(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.solver.c0, 0.558);
        assert_eq!(a.solver.c1, 0.5);
        assert_eq!(a.solver.s, 1000);
        assert_eq!(a.s_list, vec![11, 21, 41, 81, 161, 5121]);
    }

    #[test]
    fn numeric_flags_must_be_positive() {
        for bad in [
            vec!["suppest", "coeffs", "--k", "-1", "--n", "10"],
            vec!["suppest", "coeffs", "--k", "10", "--n", "0"],
            vec!["suppest", "simulate", "--trials", "0"],
            vec!["suppest", "converge", "--tol", "nan"],
            vec!["suppest", "simulate", "--bogus"],
        ] {
            assert!(Cli::try_parse_from(bad).is_err());
        }
    }

    #[test]
    fn collapse_and_non_poly_are_input_errors() {
        let cli = Cli::try_parse_from([
            "suppest",
            "coeffs",
            "--k",
            "2",
            "--n",
            "100",
            "--estimator",
            "wy",
        ])
        .unwrap();
        let out = run(&cli);
        assert_eq!(out.code, 1);
        assert!(out.stderr.contains("collapse"));
        let cli = Cli::try_parse_from([
            "suppest",
            "coeffs",
            "--k",
            "2",
            "--n",
            "100",
            "--estimator",
            "gt",
        ])
        .unwrap();
        assert_eq!(run(&cli).code, 1);
    }

    #[test]
    fn wy_coeffs_example() {
        let cli = Cli::try_parse_from([
            "suppest",
            "coeffs",
            "--k",
            "1e6",
            "--n",
            "1e6",
            "--estimator",
            "wy",
        ])
        .unwrap();
        let out = run(&cli);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["degree"], 7);
        let hi: f64 = v["interval"]["hi"].as_str().unwrap().parse().unwrap();
        assert!((hi - 6.907755278982137).abs() < 1e-12);
        assert_eq!(
            v["coeffs"][0].as_str().unwrap().parse::<f64>().unwrap(),
            -1.0
        );
    }
}
