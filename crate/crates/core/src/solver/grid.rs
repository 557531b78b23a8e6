use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beyond `LOCALIZATION_FACTOR · L` the objective is strictly decreasing in `λ` for every
/// `Poly(L)` coefficient vector when `L = ⌊0.558 ln k⌋`.
pub const LOCALIZATION_FACTOR: f64 = 6.5;

/// Closed optimization interval over Poisson means, or the single point `{lo}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
}

impl IntervalSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::InvalidInterval { lo, hi });
        }
        if hi == lo {
            return Ok(Self::point(lo));
        }
        Ok(Self {
            lo,
            hi,
            degenerate: false,
        })
    }

    pub fn point(at: f64) -> Self {
        Self {
            lo: at,
            hi: at,
            degenerate: true,
        }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

fn check_sizes(n: f64, k: f64, degree: usize) -> Result<()> {
    if !(n > 0.0 && k > 0.0 && n.is_finite() && k.is_finite()) {
        return Err(Error::Domain(format!(
            "n and k must be positive, got n={n}, k={k}"
        )));
    }
    if degree == 0 {
        return Err(Error::Domain("degree L must be at least 1".into()));
    }
    Ok(())
}

/// `[n/k, 6.5 L]` when `n/k < 6.5 L`, otherwise the single point `{n/k}`.
pub fn localized_interval(n: f64, k: f64, degree: usize) -> Result<IntervalSpec> {
    check_sizes(n, k, degree)?;
    let lo = n / k;
    let hi = LOCALIZATION_FACTOR * degree as f64;
    if lo < hi {
        IntervalSpec::new(lo, hi)
    } else {
        Ok(IntervalSpec::point(lo))
    }
}

/// `[n/k, n/k + πL/2]`, the interval that suffices when the variance term is dropped.
pub fn mrs_interval(n: f64, k: f64, degree: usize) -> Result<IntervalSpec> {
    check_sizes(n, k, degree)?;
    let lo = n / k;
    IntervalSpec::new(lo, lo + FRAC_PI_2 * degree as f64)
}

/// Uniform grid over an interval, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub interval: IntervalSpec,
    pub points: Vec<f64>,
    /// Spacing `(hi - lo)/(s - 1)`; zero for a single point.
    pub spacing: f64,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn build_grid(interval: IntervalSpec, s: usize) -> Result<GridSpec> {
    if interval.degenerate {
        if s != 1 {
            return Err(Error::InvalidGrid(format!(
                "a degenerate interval takes exactly one point, got s={s}"
            )));
        }
        return Ok(GridSpec {
            interval,
            points: vec![interval.lo],
            spacing: 0.0,
        });
    }
    if s < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points on [{}, {}], got s={s}",
            interval.lo, interval.hi
        )));
    }
    let d = interval.len() / (s - 1) as f64;
    let mut points: Vec<f64> = (0..s).map(|i| interval.lo + i as f64 * d).collect();
    points[s - 1] = interval.hi;
    Ok(GridSpec {
        interval,
        points,
        spacing: d,
    })
}

/// Grid refined `factor` times over the same interval; contains every point of `grid`.
pub fn refine(grid: &GridSpec, factor: usize) -> Result<GridSpec> {
    if grid.interval.degenerate {
        return Ok(grid.clone());
    }
    build_grid(grid.interval, (grid.len() - 1) * factor + 1)
}
