//! Gap verdicts, beta scans and localization of the critical exponent.
//!
//! `L_-` has the gap property when exactly one eigenvalue of `K_-` exceeds
//! one, `L_+` when exactly four eigenvalues of `K_+` do (the negative state
//! plus the translation triplet). Since `K_+ = (2 beta + 1) K_-`, one
//! eigensolve of `K_-` gives both spectra; a direct `K_+` solve is available
//! as a cross-check.

use std::sync::Arc;

use rayon::prelude::*;

use crate::birman_schwinger::{make_bs_operator, Sign};
use crate::eigensolver::{cluster_multiplicities, top_eigs_from, EigenOptions, EigenSet};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField};
use crate::soliton::{solve_soliton, SolitonParams, SolitonResult};
use crate::special::{greens_weights, GreenWeights};

/// Bracket width at which bisection hands over to cubic interpolation.
pub const BISECTION_WIDTH: f64 = 1e-4;

/// Warm starts kept during a crossing search.
const WARM_CACHE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapParams {
    /// Soliton settings; `beta` is overwritten per evaluation.
    pub soliton: SolitonParams,
    pub eigen: EigenOptions,
    /// Eigenvalues of `K_+` to report (at least 5).
    pub k_plus: usize,
    /// Eigenvalues of `K_-` to report (at least 2).
    pub k_minus: usize,
    /// Also solve `K_+` directly and record its eigenvalues.
    pub cross_check: bool,
}

impl Default for GapParams {
    fn default() -> Self {
        Self { soliton: SolitonParams::new(1.0), eigen: EigenOptions::default(), k_plus: 6, k_minus: 2, cross_check: false }
    }
}

impl GapParams {
    fn validate(&self) -> Result<()> {
        if self.k_plus < 5 || self.k_minus < 2 {
            return Err(Error::InvalidParameter("need at least 5 eigenvalues of K+ and 2 of K-".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GapReport {
    pub beta: f64,
    pub grid: GridSpec,
    /// Top eigenvalues of `K_-`, non-increasing. Empty when the soliton did
    /// not converge.
    pub lambdas_minus: Vec<f64>,
    /// Top eigenvalues of `K_+`, non-increasing.
    pub lambdas_plus: Vec<f64>,
    /// Eigenvalues of a direct `K_+` solve, when requested.
    pub lambdas_plus_direct: Option<Vec<f64>>,
    /// `||K v - lambda v|| / lambda` of the computed pairs.
    pub eigen_residuals: Vec<f64>,
    pub clusters_plus: Vec<Vec<usize>>,
    /// Relative spread of `lambda_2 .. lambda_4` of `K_+`.
    pub triplet_spread: f64,
    /// `lambda_2(K_-) < 1`; `None` when the soliton did not converge.
    pub gap_minus_ok: Option<bool>,
    /// `lambda_5(K_+) < 1`.
    pub gap_plus_ok: Option<bool>,
    pub gap_property: Option<bool>,
    pub soliton_converged: bool,
    pub soliton_iterations: usize,
    pub soliton_residual: f64,
    pub soliton_m: f64,
    pub soliton_max_r: f64,
    pub eigen_converged: bool,
}

impl GapReport {
    pub fn lambda5_plus(&self) -> Option<f64> {
        self.lambdas_plus.get(4).copied()
    }

    pub fn lambda2_minus(&self) -> Option<f64> {
        self.lambdas_minus.get(1).copied()
    }
}

/// Relative spread of the values at indices 1..=3.
pub fn triplet_spread(values: &[f64]) -> f64 {
    if values.len() < 4 {
        return f64::NAN;
    }
    let t = &values[1..4];
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / hi.abs()
}

struct Warm {
    beta: f64,
    phi: RealField,
    fields: Vec<RealField>,
}

/// Shared state for repeated evaluations on one grid: the Green's weights
/// and the most recent solitons and eigenfields for warm starts.
pub struct GapSolver {
    grid: GridSpec,
    green: Arc<GreenWeights>,
    params: GapParams,
    warm: Vec<Warm>,
}

impl GapSolver {
    pub fn new(grid: GridSpec, params: GapParams) -> Result<Self> {
        params.validate()?;
        params.soliton.validate()?;
        Ok(Self { grid, green: Arc::new(greens_weights(grid)), params, warm: Vec::new() })
    }

    /// Reuses precomputed Green's weights.
    pub fn with_green(green: Arc<GreenWeights>, params: GapParams) -> Result<Self> {
        params.validate()?;
        params.soliton.validate()?;
        Ok(Self { grid: *green.grid(), green, params, warm: Vec::new() })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn params(&self) -> &GapParams {
        &self.params
    }

    pub fn green(&self) -> &Arc<GreenWeights> {
        &self.green
    }

    /// Drops the warm-start cache.
    pub fn forget(&mut self) {
        self.warm.clear();
    }

    fn nearest_warm(&self, beta: f64) -> Option<&Warm> {
        self.warm.iter().min_by(|a, b| (a.beta - beta).abs().total_cmp(&(b.beta - beta).abs()))
    }

    /// Solves for the soliton, warm-started from the closest cached one
    /// unless an explicit initial iterate is given.
    pub fn soliton(&self, beta: f64, initial: Option<&RealField>) -> Result<SolitonResult> {
        let params = SolitonParams { beta, ..self.params.soliton };
        let start = initial.or_else(|| self.nearest_warm(beta).map(|w| &w.phi));
        solve_soliton(self.grid, &params, start)
    }

    /// Full gap verdict at one exponent.
    pub fn check(&mut self, beta: f64) -> Result<GapReport> {
        self.check_from(beta, None)
    }

    /// Gap verdict starting the soliton iteration from `initial`.
    pub fn check_from(&mut self, beta: f64, initial: Option<&RealField>) -> Result<GapReport> {
        let sol = self.soliton(beta, initial)?;
        self.check_soliton(beta, sol)
    }

    fn check_soliton(&mut self, beta: f64, sol: SolitonResult) -> Result<GapReport> {
        let mut report = GapReport {
            beta,
            grid: self.grid,
            lambdas_minus: Vec::new(),
            lambdas_plus: Vec::new(),
            lambdas_plus_direct: None,
            eigen_residuals: Vec::new(),
            clusters_plus: Vec::new(),
            triplet_spread: f64::NAN,
            gap_minus_ok: None,
            gap_plus_ok: None,
            gap_property: None,
            soliton_converged: sol.converged,
            soliton_iterations: sol.iterations,
            soliton_residual: sol.residual(),
            soliton_m: sol.m(),
            soliton_max_r: sol.max_abs_r(),
            eigen_converged: false,
        };
        if !sol.converged {
            return Ok(report);
        }
        let k = self.params.k_plus.max(self.params.k_minus);
        let minus = make_bs_operator(&sol.phi, beta, Sign::Minus, self.green.clone())?;
        let start: Vec<RealField> = self.nearest_warm(beta).map(|w| w.fields.clone()).unwrap_or_default();
        let eig: EigenSet = top_eigs_from(&minus, self.grid, k, &self.params.eigen, &start)?;
        let scale = Sign::Plus.scale(beta);

        report.lambdas_minus = eig.values[..self.params.k_minus].to_vec();
        report.lambdas_plus = eig.values[..self.params.k_plus].iter().map(|v| scale * v).collect();
        report.eigen_residuals = eig.residuals.iter().zip(&eig.values).map(|(r, v)| r / v.abs()).collect();
        report.eigen_converged = eig.converged;
        report.clusters_plus = cluster_multiplicities(&report.lambdas_plus, self.params.eigen.cluster_tol);
        report.triplet_spread = triplet_spread(&report.lambdas_plus);
        if self.params.cross_check {
            let plus = minus.flipped();
            let direct = top_eigs_from(&plus, self.grid, self.params.k_plus, &self.params.eigen, &eig.fields)?;
            report.lambdas_plus_direct = Some(direct.values);
        }
        let minus_ok = report.lambdas_minus[1] < 1.0;
        let plus_ok = report.lambdas_plus[4] < 1.0;
        report.gap_minus_ok = Some(minus_ok);
        report.gap_plus_ok = Some(plus_ok);
        report.gap_property = Some(minus_ok && plus_ok);

        if self.warm.len() == WARM_CACHE {
            self.warm.remove(0);
        }
        self.warm.push(Warm { beta, phi: sol.phi, fields: eig.fields });
        Ok(report)
    }

    /// `lambda_5(K_+)` at `beta`; fails when the soliton does not converge.
    pub fn lambda5_plus(&mut self, beta: f64) -> Result<f64> {
        let report = self.check(beta)?;
        report.lambda5_plus().ok_or(Error::SolitonNotConverged { beta, residual: report.soliton_residual })
    }
}

/// Gap verdict at one exponent.
pub fn gap_check(beta: f64, grid: GridSpec, params: &GapParams) -> Result<GapReport> {
    GapSolver::new(grid, *params)?.check(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub beta: f64,
    pub lambda5_plus: f64,
    pub lambda2_minus: f64,
    pub lambda1_plus: f64,
    /// `lambda_6(K_+)`, NaN when fewer than six were computed.
    pub lambda6_plus: f64,
    pub triplet_spread: f64,
    pub soliton_residual: f64,
    /// Why the row has no eigenvalues, if it failed.
    pub failure: Option<String>,
}

impl ScanRow {
    fn from_report(r: &GapReport) -> Self {
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(f64::NAN);
        ScanRow {
            beta: r.beta,
            lambda5_plus: get(&r.lambdas_plus, 4),
            lambda2_minus: get(&r.lambdas_minus, 1),
            lambda1_plus: get(&r.lambdas_plus, 0),
            lambda6_plus: get(&r.lambdas_plus, 5),
            triplet_spread: r.triplet_spread,
            soliton_residual: r.soliton_residual,
            failure: (!r.soliton_converged).then(|| format!("soliton not converged (residual {:e})", r.soliton_residual)),
        }
    }

    fn failed(beta: f64, err: &Error) -> Self {
        ScanRow {
            beta,
            lambda5_plus: f64::NAN,
            lambda2_minus: f64::NAN,
            lambda1_plus: f64::NAN,
            lambda6_plus: f64::NAN,
            triplet_spread: f64::NAN,
            soliton_residual: f64::NAN,
            failure: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaScan {
    pub grid: GridSpec,
    pub rows: Vec<ScanRow>,
}

impl BetaScan {
    /// Indices `i` with `lambda5 - 1` changing sign between rows `i` and `i+1`.
    pub fn sign_changes(&self) -> Vec<usize> {
        self.rows
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0].lambda5_plus - 1.0) * (w[1].lambda5_plus - 1.0) < 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Each soliton starts from the previous one.
    SequentialWarm,
    /// Rows computed independently in parallel from the default guess.
    ParallelCold,
}

/// `n` equispaced exponents from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One gap report per exponent; failing rows are recorded and the scan goes on.
pub fn beta_scan(betas: &[f64], grid: GridSpec, params: &GapParams, mode: ScanMode) -> Result<BetaScan> {
    if betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("beta values must be strictly increasing".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 2.0)) {
        return Err(Error::InvalidParameter(format!("beta {b} outside (0, 2)")));
    }
    let solver = GapSolver::new(grid, *params)?;
    let row = |s: &mut GapSolver, beta: f64| match s.check(beta) {
        Ok(r) => ScanRow::from_report(&r),
        Err(e) => ScanRow::failed(beta, &e),
    };
    let rows = match mode {
        ScanMode::SequentialWarm => {
            let mut s = solver;
            betas.iter().map(|&b| row(&mut s, b)).collect()
        }
        ScanMode::ParallelCold => {
            let green = solver.green.clone();
            betas
                .par_iter()
                .map(|&b| {
                    let mut s = GapSolver::with_green(green.clone(), *params).expect("validated parameters");
                    row(&mut s, b)
                })
                .collect()
        }
    };
    Ok(BetaScan { grid, rows })
}

/// Interpolating cubic through four samples, in the scaled variable
/// `t = (beta - origin) / width` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    pub origin: f64,
    pub width: f64,
    /// Monomial coefficients `c0 + c1 t + c2 t^2 + c3 t^3` of `lambda - target`.
    pub coeffs: [f64; 4],
}

impl CubicFit {
    /// Fits `lambda - target` through four points with increasing abscissae.
    pub fn through(table: &[(f64, f64); 4], target: f64) -> Result<Self> {
        if table.iter().any(|(b, l)| !b.is_finite() || !l.is_finite()) {
            return Err(Error::NonFinite("interpolation table".into()));
        }
        if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidParameter("interpolation abscissae must increase".into()));
        }
        let origin = table[0].0;
        let width = table[3].0 - origin;
        let t: Vec<f64> = table.iter().map(|(b, _)| (b - origin) / width).collect();
        // Newton divided differences, then expansion into monomials.
        let mut d: Vec<f64> = table.iter().map(|(_, l)| l - target).collect();
        for j in 1..4 {
            for i in (j..4).rev() {
                d[i] = (d[i] - d[i - 1]) / (t[i] - t[i - j]);
            }
        }
        let mut c = [d[3], 0.0, 0.0, 0.0];
        // Horner: p = d0 + (t - t0)(d1 + (t - t1)(d2 + (t - t2) d3))
        let mut deg = 0;
        for i in (0..3).rev() {
            // c <- c * (t - t_i) + d_i
            let mut next = [0.0; 4];
            for k in 0..=deg {
                next[k + 1] += c[k];
                next[k] -= t[i] * c[k];
            }
            next[0] += d[i];
            c = next;
            deg += 1;
        }
        Ok(Self { origin, width, coeffs: c })
    }

    pub fn eval_scaled(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
    }

    pub fn eval(&self, beta: f64) -> f64 {
        self.eval_scaled((beta - self.origin) / self.width)
    }

    /// Derivative with respect to `beta`.
    pub fn slope(&self, beta: f64) -> f64 {
        let c = &self.coeffs;
        let t = (beta - self.origin) / self.width;
        ((3.0 * c[3] * t + 2.0 * c[2]) * t + c[1]) / self.width
    }

    /// All roots in the fitted interval, increasing. The interval is split
    /// at the critical points so each piece is monotone, then each piece
    /// with a sign change is bisected to full precision.
    pub fn roots(&self) -> Vec<f64> {
        let c = &self.coeffs;
        let mut cuts = vec![0.0];
        // p'(t) = 3 c3 t^2 + 2 c2 t + c1
        let (a, b, cc) = (3.0 * c[3], 2.0 * c[2], c[1]);
        let mut crit = Vec::new();
        if a.abs() > 0.0 {
            let disc = b * b - 4.0 * a * cc;
            if disc >= 0.0 {
                let s = disc.sqrt();
                let q = -0.5 * (b + b.signum() * s);
                if q != 0.0 {
                    crit.push(q / a);
                    crit.push(cc / q);
                } else {
                    crit.push(0.0);
                }
            }
        } else if b != 0.0 {
            crit.push(-cc / b);
        }
        crit.sort_by(f64::total_cmp);
        cuts.extend(crit.into_iter().filter(|t| *t > 0.0 && *t < 1.0));
        cuts.push(1.0);

        let mut roots: Vec<f64> = Vec::new();
        for w in cuts.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (flo, fhi) = (self.eval_scaled(lo), self.eval_scaled(hi));
            if flo == 0.0 {
                roots.push(lo);
                continue;
            }
            if fhi == 0.0 || flo * fhi > 0.0 {
                continue;
            }
            let rising = fhi > flo;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (self.eval_scaled(mid) > 0.0) == rising {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        if self.eval_scaled(1.0) == 0.0 {
            roots.push(1.0);
        }
        roots.dedup();
        roots.into_iter().map(|t| self.origin + self.width * t).collect()
    }
}

/// Outcome of the crossing search.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaStar {
    pub beta_star: f64,
    pub uncertainty: f64,
    /// Final bracket.
    pub bracket: (f64, f64),
    /// Four equispaced `(beta, lambda_5)` samples of the final fit.
    pub table: [(f64, f64); 4],
    pub fit: CubicFit,
    /// Every evaluation made, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// The cubic crossing of a four-row table with `target`, without any
/// operator evaluation. `value_error` is the uncertainty of each tabulated
/// value; it is propagated through the slope at the root.
pub fn table_crossing(table: &[(f64, f64); 4], target: f64, value_error: f64) -> Result<(f64, f64, CubicFit)> {
    let fit = CubicFit::through(table, target)?;
    let roots = fit.roots();
    match roots.as_slice() {
        [r] => Ok((*r, value_error / fit.slope(*r).abs(), fit)),
        [] => Err(Error::NoSignChange {
            lo: table[0].0,
            hi: table[3].0,
            f_lo: table[0].1 - target,
            f_hi: table[3].1 - target,
        }),
        _ => Err(Error::Degenerate(format!("{} crossings of the interpolating cubic", roots.len()))),
    }
}

/// Locates the crossing of `f(beta) = 1` in `bracket`: bisection down to
/// [`BISECTION_WIDTH`], then four-point cubic interpolation with the bracket
/// shrunk around each root until it is no wider than `beta_tol`.
/// `value_error` is the accuracy of each evaluation of `f`.
pub fn locate_crossing<F>(mut f: F, bracket: (f64, f64), beta_tol: f64, value_error: f64) -> Result<BetaStar>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(beta_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid bracket ({lo}, {hi}) or tolerance {beta_tol}")));
    }
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut eval = |b: f64, evals: &mut Vec<(f64, f64)>| -> Result<f64> {
        if let Some(&(_, v)) = evals.iter().find(|(x, _)| *x == b) {
            return Ok(v);
        }
        let v = f(b)?;
        evals.push((b, v));
        Ok(v)
    };
    let mut flo = eval(lo, &mut evals)? - 1.0;
    let fhi = eval(hi, &mut evals)? - 1.0;
    if flo * fhi > 0.0 || flo == 0.0 && fhi == 0.0 {
        return Err(Error::NoSignChange { lo, hi, f_lo: flo, f_hi: fhi });
    }
    loop {
        while hi - lo > BISECTION_WIDTH.max(beta_tol) {
            let mid = 0.5 * (lo + hi);
            let fm = eval(mid, &mut evals)? - 1.0;
            if fm * flo > 0.0 {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let w = hi - lo;
        let mut table = [(0.0, 0.0); 4];
        for (i, row) in table.iter_mut().enumerate() {
            let b = if i == 3 { hi } else { lo + w * i as f64 / 3.0 };
            *row = (b, eval(b, &mut evals)?);
        }
        match table_crossing(&table, 1.0, value_error) {
            Ok((root, propagated, fit)) => {
                // Slack for rounding in the width of a shrunk bracket.
                if w <= beta_tol * (1.0 + 1e-9) {
                    return Ok(BetaStar {
                        beta_star: root,
                        uncertainty: beta_tol.max(propagated),
                        bracket: (lo, hi),
                        table,
                        fit,
                        evaluations: evals,
                    });
                }
                // Shrink around the root, keeping the sign change.
                let half = 0.5 * (0.5 * beta_tol).max(w / 40.0);
                let (a, b) = ((root - half).max(lo), (root + half).min(hi));
                let (fa, fb) = (eval(a, &mut evals)? - 1.0, eval(b, &mut evals)? - 1.0);
                if fa * fb <= 0.0 && !(fa == 0.0 && fb == 0.0) {
                    (lo, hi, flo) = (a, b, fa);
                } else {
                    // The cubic misjudged: fall back to the table subinterval.
                    let i = (0..3).find(|&i| (table[i].1 - 1.0) * (table[i + 1].1 - 1.0) <= 0.0).unwrap_or(0);
                    (lo, hi, flo) = (table[i].0, table[i + 1].0, table[i].1 - 1.0);
                }
            }
            Err(Error::Degenerate(_)) => {
                // Several crossings: one bisection step, then refit.
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid, &mut evals)? - 1.0;
                if fm * flo > 0.0 {
                    (lo, flo) = (mid, fm);
                } else {
                    hi = mid;
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Crossing of `lambda_5(K_+) = 1` in `bracket` on `grid`.
pub fn find_beta_star(bracket: (f64, f64), grid: GridSpec, params: &GapParams, beta_tol: f64) -> Result<BetaStar> {
    let mut solver = GapSolver::new(grid, *params)?;
    let value_error = params.eigen.tol;
    locate_crossing(|b| solver.lambda5_plus(b), bracket, beta_tol, value_error)
}
