//! Discretized minimax solver for the regularized weighted Chebyshev problem.
//!
//! For a grid `λ_1..λ_s` the program is
//!
//! ```text
//! min t  s.t.  reg_weight · Σ_l e^{-λ_i} a_l² λ_i^l l! + (e^{-λ_i} P(λ_i, a))² <= t,  a_0 = -1
//! ```
//!
//! Every constraint is a convex quadratic in the free coefficients `a_1..a_L`, so the
//! problem is solved with a log-barrier interior-point method on the epigraph. The free
//! polynomial is carried as `P(λ) = -1 + λ Σ_j c_j T_j(τ(λ))`, with `τ` mapping the grid
//! interval onto `[-1, 1]`; this keeps `a_0 = -1` implicit and the Newton systems well
//! conditioned. Monomial coefficients are recovered by a fixed linear map.
//!
//! Each outer iteration produces simplex weights `w_i = 1/(τ s_i)`. The reported gap is
//! recomputed from scratch: the primal value is the max over the grid of the objective at
//! the returned coefficients, and the dual value is `q(w) = min_{a_0=-1} Σ w_i h_i(a)`
//! obtained by one linear least-squares solve. Since `q(w)` lower-bounds the discrete optimum
//! for any simplex `w`, the gap is a certificate independent of how well the barrier
//! subproblems were centered.

mod grid;

pub use grid::{
    build_grid, localized_interval, mrs_interval, refine, GridSpec, IntervalSpec,
    LOCALIZATION_FACTOR,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{ln_factorials, objective_with_table, ObjectiveParams, Poly};
use crate::Polynomial;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200_000;
/// Ridge added on request to unregularized problems, `ridge · Σ_{l>=1} a_l²` per point.
pub const DEFAULT_RIDGE: f64 = 1e-12;

const BARRIER_GROWTH: f64 = 2.0;
const CENTERING_TOL: f64 = 1e-7;

/// One discretized instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SipProblem {
    pub degree: usize,
    pub grid: GridSpec,
    pub reg_weight: f64,
    #[serde(default)]
    pub ridge: f64,
}

impl SipProblem {
    pub fn new(degree: usize, grid: GridSpec, reg_weight: f64) -> Result<Self> {
        let p = Self {
            degree,
            grid,
            reg_weight,
            ridge: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Adds `ridge · Σ a_l²` to every constraint.
    pub fn with_ridge(mut self, ridge: f64) -> Result<Self> {
        self.ridge = ridge;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::Domain(format!(
                "reg_weight must be nonnegative, got {}",
                self.reg_weight
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Domain(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        if self.grid.is_empty() || self.grid.points.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidGrid("grid points must be positive".into()));
        }
        if self.degree > 0
            && self.reg_weight == 0.0
            && self.ridge == 0.0
            && self.grid.len() < self.degree + 2
        {
            return Err(Error::RankDeficient(format!(
                "reg_weight = 0 with s = {} < L + 2 = {}",
                self.grid.len(),
                self.degree + 2
            )));
        }
        Ok(())
    }

    /// The per-point objective at `λ`: `g(a, λ)` plus the ridge term when enabled.
    pub fn point_objective(&self, coeffs: &Polynomial, lambda: f64) -> f64 {
        let lnf = ln_factorials::<f64>(coeffs.degree());
        self.point_objective_with(coeffs, lambda, &lnf)
    }

    fn point_objective_with(&self, coeffs: &Polynomial, lambda: f64, lnf: &[f64]) -> f64 {
        let o = objective_with_table(
            coeffs,
            ObjectiveParams {
                reg_weight: self.reg_weight,
                lambda,
            },
            lnf,
        );
        if self.ridge > 0.0 {
            o.g + self.ridge * coeffs.coeffs()[1..].iter().map(|a| a * a).sum::<f64>()
        } else {
            o.g
        }
    }

    /// Max of the per-point objective over `points`.
    pub fn max_objective(&self, coeffs: &Polynomial, points: &[f64]) -> f64 {
        let lnf = ln_factorials::<f64>(coeffs.degree());
        points
            .iter()
            .map(|&l| self.point_objective_with(coeffs, l, &lnf))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Absolute duality-gap target.
    pub tol: f64,
    /// Cap on Newton steps across all barrier stages.
    pub max_iter: usize,
    /// Starting free coefficients `a_1..a_L`; zero (the counting estimator) when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: None,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Certified solution of a [`SipProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub coeffs: Polynomial,
    /// Dual lower bound on the discrete optimum; the grid max at `coeffs` lies in
    /// `[t_d, t_d + duality_gap]`.
    pub t_d: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub dual_weights: Vec<f64>,
    pub grid: GridSpec,
    pub reg_weight: f64,
}

impl SolveResult {
    /// Max over the grid of the per-point objective at `coeffs`.
    pub fn primal_value(&self) -> f64 {
        self.t_d + self.duality_gap
    }
}

/// Solves the discretized program to an absolute duality gap of `opts.tol`.
pub fn solve(problem: &SipProblem, opts: &SolveOptions) -> Result<SolveResult> {
    problem.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if problem.degree == 0 {
        return Ok(solve_counting(problem));
    }
    let model = Model::new(problem);
    let init = match &opts.init {
        Some(a) => {
            if a.len() != problem.degree {
                return Err(Error::Precondition(format!(
                    "init has {} coefficients, expected L = {}",
                    a.len(),
                    problem.degree
                )));
            }
            model.basis_coords(a)?
        }
        None => {
            let m = problem.grid.len();
            model.lagrangian_minimizer(&vec![1.0 / m as f64; m])?
        }
    };
    if problem.grid.len() == 1 {
        let w = vec![1.0];
        let cert = model.certificate(&w)?;
        return Ok(SolveResult {
            coeffs: cert.coeffs,
            t_d: cert.dual,
            duality_gap: (cert.primal - cert.dual).max(0.0),
            iterations: 0,
            dual_weights: w,
            grid: problem.grid.clone(),
            reg_weight: problem.reg_weight,
        });
    }
    model.barrier(init, opts)
}

fn solve_counting(problem: &SipProblem) -> SolveResult {
    let coeffs = Polynomial::counting();
    let lnf = ln_factorials::<f64>(0);
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
    for (i, &l) in problem.grid.points.iter().enumerate() {
        let v = problem.point_objective_with(&coeffs, l, &lnf);
        if v > best {
            best = v;
            arg = i;
        }
    }
    let mut dual_weights = vec![0.0; problem.grid.len()];
    dual_weights[arg] = 1.0;
    SolveResult {
        coeffs,
        t_d: best,
        duality_gap: 0.0,
        iterations: 0,
        dual_weights,
        grid: problem.grid.clone(),
        reg_weight: problem.reg_weight,
    }
}

/// Max of the objective at `result.coeffs` on a grid `oversample` times finer than the
/// one solved. The excess over `t_d` measures discretization slack.
pub fn certify(result: &SolveResult, problem: &SipProblem, oversample: usize) -> Result<f64> {
    if oversample < 2 {
        return Err(Error::Precondition(format!(
            "oversample must be >= 2, got {oversample}"
        )));
    }
    let fine = refine(&problem.grid, oversample)?;
    Ok(problem.max_objective(&result.coeffs, &fine.points))
}

struct Certificate {
    coeffs: Polynomial,
    primal: f64,
    dual: f64,
}

/// Per-point data in scaled units (every objective divided by `scale`).
struct Model<'a> {
    problem: &'a SipProblem,
    dim: usize,
    scale: f64,
    /// Maps basis coordinates `c` to monomial coefficients `a_1..a_L`.
    basis: DMatrix<f64>,
    /// Row `i`: `λ_i T_j(τ(λ_i))`, so `P(λ_i) = -1 + phi_i · c`.
    phi: DMatrix<f64>,
    /// Row `i`: scaled variance weights on `a_l²` plus the ridge.
    diag: DMatrix<f64>,
    bias_w: Vec<f64>,
    constant: Vec<f64>,
    ln_fact: Vec<f64>,
}

struct PointEval {
    h: Vec<f64>,
    grads: Vec<DVector<f64>>,
}

impl<'a> Model<'a> {
    fn new(problem: &'a SipProblem) -> Self {
        let dim = problem.degree;
        let pts = &problem.grid.points;
        let m = pts.len();
        let w = problem.reg_weight;
        let scale = pts
            .iter()
            .map(|&l| w * (-l).exp() + (-2.0 * l).exp())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);

        let (blo, bhi) = if problem.grid.interval.degenerate {
            (0.5 * pts[0], 1.5 * pts[0])
        } else {
            (problem.grid.interval.lo, problem.grid.interval.hi)
        };
        let alpha = 2.0 / (bhi - blo);
        let beta = -(bhi + blo) / (bhi - blo);

        // monomial coefficients of T_j(alpha x + beta), j < dim
        let mut cheb: Vec<Vec<f64>> = Vec::with_capacity(dim);
        cheb.push(vec![1.0]);
        if dim > 1 {
            cheb.push(vec![beta, alpha]);
        }
        for j in 2..dim {
            let (prev, cur) = (&cheb[j - 2], &cheb[j - 1]);
            let mut next = vec![0.0; j + 1];
            for (i, c) in cur.iter().enumerate() {
                next[i] += 2.0 * beta * c;
                next[i + 1] += 2.0 * alpha * c;
            }
            for (i, p) in prev.iter().enumerate() {
                next[i] -= p;
            }
            cheb.push(next);
        }
        let mut basis = DMatrix::zeros(dim, dim);
        for (j, col) in cheb.iter().enumerate() {
            for (i, c) in col.iter().enumerate() {
                basis[(i, j)] = *c;
            }
        }

        let ln_fact = ln_factorials::<f64>(dim);
        let mut phi = DMatrix::zeros(m, dim);
        let mut diag = DMatrix::zeros(m, dim);
        let mut bias_w = Vec::with_capacity(m);
        let mut constant = Vec::with_capacity(m);
        for (i, &l) in pts.iter().enumerate() {
            let tau = alpha * l + beta;
            let (mut tp, mut tc) = (1.0, tau);
            for j in 0..dim {
                let tj = match j {
                    0 => 1.0,
                    1 => tau,
                    _ => {
                        let tn = 2.0 * tau * tc - tp;
                        tp = tc;
                        tc = tn;
                        tn
                    }
                };
                phi[(i, j)] = l * tj;
            }
            let ln_l = l.ln();
            for c in 1..=dim {
                let var = if w > 0.0 {
                    w * (c as f64 * ln_l + ln_fact[c] - l).exp()
                } else {
                    0.0
                };
                diag[(i, c - 1)] = (var + problem.ridge) / scale;
            }
            bias_w.push((-2.0 * l).exp() / scale);
            constant.push(w * (-l).exp() / scale);
        }

        Self {
            problem,
            dim,
            scale,
            basis,
            phi,
            diag,
            bias_w,
            constant,
            ln_fact,
        }
    }

    fn basis_coords(&self, free: &[f64]) -> Result<DVector<f64>> {
        let a = DVector::from_column_slice(free);
        self.basis
            .clone()
            .lu()
            .solve(&a)
            .ok_or_else(|| Error::Precondition("basis change is singular".into()))
    }

    fn to_poly(&self, c: &DVector<f64>) -> Polynomial {
        let a = &self.basis * c;
        Poly::estimator(a.iter().copied())
    }

    fn eval(&self, c: &DVector<f64>, with_grads: bool) -> PointEval {
        let u = &self.basis * c;
        let r = &self.phi * c;
        let m = self.phi.nrows();
        let mut h = Vec::with_capacity(m);
        let mut grads = Vec::with_capacity(if with_grads { m } else { 0 });
        for i in 0..m {
            let resid = r[i] - 1.0;
            let mut quad = 0.0;
            for l in 0..self.dim {
                quad += self.diag[(i, l)] * u[l] * u[l];
            }
            h.push(self.constant[i] + quad + self.bias_w[i] * resid * resid);
            if with_grads {
                let du = DVector::from_fn(self.dim, |l, _| 2.0 * self.diag[(i, l)] * u[l]);
                let mut g = self.basis.tr_mul(&du);
                let coef = 2.0 * self.bias_w[i] * resid;
                for j in 0..self.dim {
                    g[j] += coef * self.phi[(i, j)];
                }
                grads.push(g);
            }
        }
        PointEval { h, grads }
    }

    /// Gradient of the barrier function `τ t - Σ ln s_i` in `(c, t)`, and a factor `J` with
    /// `JᵀJ` equal to its Hessian.
    fn newton_system(&self, ev: &PointEval, s: &[f64], tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = s.len();
        let n = self.dim + 1;
        let mut grad = DVector::<f64>::zeros(n);
        let mut root = DMatrix::<f64>::zeros(2 * m + self.dim, n);
        let mut dsum = vec![0.0; self.dim];
        let mut sum_inv = 0.0;
        for i in 0..m {
            let inv = 1.0 / s[i];
            sum_inv += inv;
            let gi = &ev.grads[i];
            let sb = (2.0 * self.bias_w[i] * inv).sqrt();
            for j in 0..self.dim {
                grad[j] += inv * gi[j];
                root[(i, j)] = sb * self.phi[(i, j)];
                root[(m + i, j)] = inv * gi[j];
                dsum[j] += self.diag[(i, j)] * inv;
            }
            root[(m + i, self.dim)] = -inv;
        }
        grad[self.dim] = tau - sum_inv;
        for l in 0..self.dim {
            let sd = (2.0 * dsum[l]).sqrt();
            for j in 0..self.dim {
                root[(2 * m + l, j)] = sd * self.basis[(l, j)];
            }
        }
        (grad, root)
    }

    /// `argmin_c Σ w_i h_i(c)` as a linear least-squares problem solved by QR, which sees
    /// only the square root of the normal matrix's condition number.
    fn lagrangian_minimizer(&self, w: &[f64]) -> Result<DVector<f64>> {
        let active: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
        let rows = active.len() + self.dim;
        let mut design = DMatrix::<f64>::zeros(rows, self.dim);
        let mut target = DVector::<f64>::zeros(rows);
        for (r, &i) in active.iter().enumerate() {
            let sw = (w[i] * self.bias_w[i]).sqrt();
            for j in 0..self.dim {
                design[(r, j)] = sw * self.phi[(i, j)];
            }
            target[r] = sw;
        }
        for l in 0..self.dim {
            let d: f64 = active.iter().map(|&i| w[i] * self.diag[(i, l)]).sum();
            let sd = d.sqrt();
            for j in 0..self.dim {
                design[(active.len() + l, j)] = sd * self.basis[(l, j)];
            }
        }
        // equilibrate columns before factoring
        let norms: Vec<f64> = (0..self.dim)
            .map(|j| design.column(j).norm().max(f64::MIN_POSITIVE))
            .collect();
        for (j, nj) in norms.iter().enumerate() {
            design.column_mut(j).scale_mut(1.0 / nj);
        }
        let qr = design.qr();
        let r = qr.r();
        let rmax = (0..self.dim).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
        if (0..self.dim).any(|j| !(r[(j, j)].abs() > 1e-15 * rmax)) {
            return Err(Error::RankDeficient(
                "weighted constraint matrix is numerically singular".into(),
            ));
        }
        let qty = qr.q().tr_mul(&target);
        let mut c = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
        for (j, nj) in norms.iter().enumerate() {
            c[j] /= nj;
        }
        Ok(c)
    }

    /// Dual value at simplex weights `w`, plus the grid max at the Lagrangian minimizer.
    fn certificate(&self, w: &[f64]) -> Result<Certificate> {
        let c = self.lagrangian_minimizer(w)?;
        let coeffs = self.to_poly(&c);
        let pts = &self.problem.grid.points;
        let mut dual = 0.0;
        let mut primal = f64::NEG_INFINITY;
        for (i, &l) in pts.iter().enumerate() {
            let v = self.problem.point_objective_with(&coeffs, l, &self.ln_fact);
            dual += w[i] * v;
            primal = primal.max(v);
        }
        Ok(Certificate {
            coeffs,
            primal,
            dual,
        })
    }

    fn barrier(&self, mut c: DVector<f64>, opts: &SolveOptions) -> Result<SolveResult> {
        let m = self.phi.nrows();
        let tol_scaled = opts.tol / self.scale;

        let h0 = self.eval(&c, false).h;
        let hmax = h0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // slacks comparable to the objective itself, with τ chosen so that t is already centered
        let t = hmax + hmax.abs().max(f64::MIN_POSITIVE.sqrt());
        let mut s: Vec<f64> = h0.iter().map(|h| t - h).collect();
        let mut tau: f64 = s.iter().map(|v| 1.0 / v).sum();

        let mut iterations = 0usize;
        let mut best: Option<(Polynomial, f64)> = None;
        let mut best_dual: Option<(f64, Vec<f64>)> = None;

        loop {
            // centering; slacks are updated from exact quadratic increments, since `t - h_i`
            // loses every digit once the slacks shrink below the rounding level of `t`
            loop {
                let ev = self.eval(&c, true);
                let (grad, root) = self.newton_system(&ev, &s, tau);
                let step = newton_step(root, &grad)?;
                let decrement = -grad.dot(&step);
                if !(decrement > 2.0 * CENTERING_TOL) {
                    break;
                }
                let dc = step.rows(0, self.dim).into_owned();
                let dt = step[self.dim];
                let du = &self.basis * &dc;
                let dphi = &self.phi * &dc;
                let slope: Vec<f64> = ev.grads.iter().map(|g| g.dot(&dc)).collect();
                let curve: Vec<f64> = (0..m)
                    .map(|i| {
                        let var: f64 = (0..self.dim)
                            .map(|l| self.diag[(i, l)] * du[l] * du[l])
                            .sum();
                        var + self.bias_w[i] * dphi[i] * dphi[i]
                    })
                    .collect();
                let mut alpha = 1.0;
                let mut accepted = false;
                while alpha > 1e-8 {
                    let ds: Vec<f64> = (0..m)
                        .map(|i| alpha * dt - alpha * slope[i] - alpha * alpha * curve[i])
                        .collect();
                    if (0..m).all(|i| s[i] + ds[i] > 0.0) {
                        let df =
                            alpha * tau * dt - (0..m).map(|i| (ds[i] / s[i]).ln_1p()).sum::<f64>();
                        if df <= -0.25 * alpha * decrement {
                            c += alpha * &dc;
                            for (si, d) in s.iter_mut().zip(&ds) {
                                *si += d;
                            }
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                iterations += 1;
                // near the center, a damped step signals the rounding floor of the barrier value
                let stalled = decrement < 1e-2 && alpha < 1.0;
                if !accepted || stalled || iterations >= opts.max_iter {
                    break;
                }
            }

            // certificate from the current barrier weights
            let raw: Vec<f64> = s.iter().map(|v| 1.0 / (tau * v)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let cert = self.certificate(&w)?;

            let iterate = self.to_poly(&c);
            let iterate_val = self
                .problem
                .max_objective(&iterate, &self.problem.grid.points);
            for (poly, val) in [(iterate, iterate_val), (cert.coeffs.clone(), cert.primal)] {
                if best.as_ref().is_none_or(|(_, b)| val < *b) {
                    best = Some((poly, val));
                }
            }
            if best_dual.as_ref().is_none_or(|(d, _)| cert.dual > *d) {
                best_dual = Some((cert.dual, w));
            }
            let (coeffs, primal) = best.clone().unwrap();
            let (dual, weights) = best_dual.clone().unwrap();
            let gap = (primal - dual).max(0.0);
            let result = SolveResult {
                coeffs,
                t_d: dual,
                duality_gap: gap,
                iterations,
                dual_weights: weights,
                grid: self.problem.grid.clone(),
                reg_weight: self.problem.reg_weight,
            };
            if gap <= opts.tol {
                return Ok(result);
            }
            // once m/τ is far below the target the remaining gap is rounding, not progress
            if iterations >= opts.max_iter || (m as f64 / tau) < 1e-6 * tol_scaled {
                return Err(Error::NonConvergence {
                    gap,
                    iterations,
                    best: Box::new(result),
                });
            }
            tau *= BARRIER_GROWTH;
        }
    }
}

/// Solves `JᵀJ Δ = -grad` through a QR factorization of `J`.
fn newton_step(mut root: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let n = root.ncols();
    let norms: Vec<f64> = (0..n)
        .map(|j| root.column(j).norm().max(f64::MIN_POSITIVE))
        .collect();
    for (j, nj) in norms.iter().enumerate() {
        root.column_mut(j).scale_mut(1.0 / nj);
    }
    let r = root.qr().r();
    let rhs = DVector::from_fn(n, |j, _| -grad[j] / norms[j]);
    let y = r
        .tr_solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient("barrier Newton system is singular".into()))?;
    let mut step = r
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::RankDeficient("barrier Newton system is singular".into()))?;
    for (j, nj) in norms.iter().enumerate() {
        step[j] /= nj;
    }
    Ok(step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, s: usize) -> GridSpec {
        build_grid(IntervalSpec::new(lo, hi).unwrap(), s).unwrap()
    }

    #[test]
    fn degree_zero_closed_form() {
        let g = grid(2.0, 9.0, 50);
        let p = SipProblem::new(0, g, 0.3).unwrap();
        let r = solve(&p, &SolveOptions::default()).unwrap();
        let want = 0.3 * (-2.0f64).exp() + (-4.0f64).exp();
        assert!((r.t_d - want).abs() <= 1e-16);
        assert_eq!(r.duality_gap, 0.0);
        assert_eq!(r.coeffs.coeffs(), &[-1.0]);
        assert_eq!(certify(&r, &p, 4).unwrap(), r.t_d);
    }

    /// One free coefficient at one point: brute-force minimization over a fine 1-D grid.
    #[test]
    fn single_point_degree_one() {
        let g = build_grid(IntervalSpec::point(1.0), 1).unwrap();
        let p = SipProblem::new(1, g, 0.1).unwrap();
        let r = solve(&p, &SolveOptions::default()).unwrap();
        let a1 = r.coeffs.coeffs()[1];

        let f = |a: f64| p.point_objective(&Poly::estimator([a]), 1.0);
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        for i in 0..=200_000 {
            let a = i as f64 * 1e-5;
            let v = f(a);
            if v < best {
                best = v;
                arg = a;
            }
        }
        assert!((a1 - arg).abs() < 2e-5, "{a1} vs brute force {arg}");
        assert!((a1 - 1.0 / (0.1 * std::f64::consts::E + 1.0)).abs() < 1e-12);
        assert!((a1 - 0.786_270).abs() < 1e-6);
        assert_eq!(r.duality_gap, 0.0);
        assert_eq!(certify(&r, &p, 3).unwrap(), r.t_d);
    }

    #[test]
    fn certificate_holds_on_standard_instance() {
        let g = grid(1.0, 45.5, 1000);
        let p = SipProblem::new(7, g, 1e-6).unwrap();
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert!(r.duality_gap <= 1e-8);
        let max = p.max_objective(&r.coeffs, &p.grid.points);
        assert!(max >= r.t_d - 1e-15 && max <= r.t_d + r.duality_gap + 1e-15);
        let sum: f64 = r.dual_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(r.dual_weights.iter().all(|&w| w >= 0.0));
        assert_eq!(r.coeffs.coeffs()[0], -1.0);
    }

    #[test]
    fn unregularized_needs_enough_points() {
        let g = grid(1.0, 5.0, 4);
        assert!(matches!(
            SipProblem::new(3, g.clone(), 0.0),
            Err(Error::RankDeficient(_))
        ));
        let p = SipProblem::new(3, g, 0.0).unwrap_err();
        assert_eq!(p.exit_code(), 2);
        let g = grid(1.0, 5.0, 4);
        assert!(SipProblem::new(3, g.clone(), 0.0)
            .or_else(|_| SipProblem {
                degree: 3,
                grid: g,
                reg_weight: 0.0,
                ridge: 0.0
            }
            .with_ridge(DEFAULT_RIDGE))
            .is_ok());
    }

    #[test]
    fn rejects_bad_options() {
        let p = SipProblem::new(2, grid(1.0, 3.0, 10), 0.1).unwrap();
        assert!(solve(&p, &SolveOptions::with_tol(0.0)).is_err());
        let opts = SolveOptions {
            init: Some(vec![1.0]),
            ..SolveOptions::default()
        };
        assert!(matches!(solve(&p, &opts), Err(Error::Precondition(_))));
        assert!(certify(&solve(&p, &SolveOptions::default()).unwrap(), &p, 1).is_err());
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let p = SipProblem::new(5, grid(1.0, 32.5, 200), 1e-4).unwrap();
        let opts = SolveOptions {
            tol: 1e-12,
            max_iter: 3,
            init: None,
        };
        match solve(&p, &opts) {
            Err(Error::NonConvergence {
                best, iterations, ..
            }) => {
                assert!(iterations >= 3);
                assert_eq!(best.coeffs.degree(), 5);
                assert!(best.duality_gap > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_point_with_higher_degree() {
        let g = build_grid(IntervalSpec::point(50.0), 1).unwrap();
        let p = SipProblem::new(7, g, 1e-6).unwrap();
        let r = solve(&p, &SolveOptions::default()).unwrap();
        assert!(r.duality_gap <= 1e-8);
        assert_eq!(
            certify(&r, &p, 5).unwrap(),
            p.point_objective(&r.coeffs, 50.0)
        );
    }

    #[test]
    fn optimum_is_unique_across_starts() {
        let p = SipProblem::new(5, grid(1.0, 32.5, 1000), 1e-4).unwrap();
        let opts = SolveOptions::with_tol(1e-9);
        let a = solve(&p, &opts).unwrap();
        let b = solve(
            &p,
            &SolveOptions {
                init: Some(vec![1.0, -0.5, 0.1, 0.0, 0.0]),
                ..opts
            },
        )
        .unwrap();
        assert!((a.t_d - b.t_d).abs() <= 2e-9);
        for (x, y) in a.coeffs.coeffs().iter().zip(b.coeffs.coeffs()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn tight_tolerance_is_reachable() {
        let p = SipProblem::new(5, grid(1.0, 32.5, 1000), 1e-4).unwrap();
        let r = solve(&p, &SolveOptions::with_tol(1e-12)).unwrap();
        assert!(r.duality_gap <= 1e-12);
        assert!((r.t_d - 2.673_603_95e-4).abs() < 1e-12);
    }

    #[test]
    fn refinement_never_lowers_the_value() {
        let iv = IntervalSpec::new(1.0, 32.5).unwrap();
        let opts = SolveOptions::with_tol(1e-12);
        let mut prev = 0.0;
        for s in [11, 21, 41, 81, 161] {
            let p = SipProblem::new(5, build_grid(iv, s).unwrap(), 1e-4).unwrap();
            let r = solve(&p, &opts).unwrap();
            assert!(r.t_d + r.duality_gap >= prev - 1e-15);
            prev = r.t_d;
        }
    }
}
