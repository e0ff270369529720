//! Ground state of `-Lap(phi) + phi = |phi|^(2 beta) phi` by the modified
//! Petviashvili iteration
//!
//! ```text
//! phi_{n+1} = M_n^gamma (I - Lap)^-1 (|phi_n|^(2 beta) phi_n) + delta sum_j R_{n,j} d_j phi_n
//! ```
//!
//! with `gamma = (2 beta + 1) / (2 beta)` and `delta = -1/2`. `M_n` is the
//! stabilizing amplitude factor and the `R_{n,j}` measure the translation
//! components of the iterate; `delta = -1/2` removes them to first order.
//!
//! Everything is evaluated in the Fourier domain from two transforms per
//! iterate (`phi` and the nonlinearity) and one inverse transform for the
//! update.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{det_sum, fft3, ifft3_owned, Axis, GridSpec, RealField, Spectrum};

/// Residual level below which the divergence detector is armed.
const DIVERGENCE_ARM: f64 = 1e-3;
/// Growth over the running minimum that counts as divergence.
const DIVERGENCE_GROWTH: f64 = 10.0;
/// Plain steps between two Aitken extrapolations.
const AITKEN_CADENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonParams {
    /// Nonlinearity exponent.
    pub beta: f64,
    /// Stopping tolerance on the relative Euler-Lagrange residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Translation damping constant.
    pub delta: f64,
    pub use_aitken: bool,
    /// Amplitude `a` of the default initial guess `a exp(-|x|^2)`.
    pub initial_amplitude: f64,
}

impl SolitonParams {
    pub fn new(beta: f64) -> Self {
        Self { beta, tol: 1e-11, max_iter: 500, delta: -0.5, use_aitken: true, initial_amplitude: 3.0 }
    }

    /// `gamma = (2 beta + 1) / (2 beta)`.
    pub fn gamma(&self) -> f64 {
        (2.0 * self.beta + 1.0) / (2.0 * self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        if !(self.initial_amplitude.is_finite() && self.initial_amplitude > 0.0) {
            return Err(Error::InvalidParameter("initial amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// Why the iteration stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The residual grew by 10x over its running minimum after having been
    /// below `1e-3`, or the iterate became non-finite or lost its amplitude.
    Diverged { iteration: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct SolitonResult {
    /// Converged profile, or the iterate with the smallest residual when the
    /// iteration did not converge.
    pub phi: RealField,
    pub params: SolitonParams,
    /// Number of Petviashvili steps taken.
    pub iterations: usize,
    /// Relative Euler-Lagrange residual of every analyzed iterate.
    pub residual_history: Vec<f64>,
    pub m_history: Vec<f64>,
    pub r_history: Vec<[f64; 3]>,
    /// `(history index, residual)` of each Aitken extrapolation, accepted or not.
    pub aitken_history: Vec<(usize, f64)>,
    pub converged: bool,
    pub termination: Termination,
}

impl SolitonResult {
    /// Residual of the returned profile.
    pub fn residual(&self) -> f64 {
        self.best_index().map(|i| self.residual_history[i]).unwrap_or(f64::INFINITY)
    }

    /// `M` of the returned profile.
    pub fn m(&self) -> f64 {
        self.best_index().map(|i| self.m_history[i]).unwrap_or(f64::NAN)
    }

    /// `R_j` of the returned profile.
    pub fn r(&self) -> [f64; 3] {
        self.best_index().map(|i| self.r_history[i]).unwrap_or([f64::NAN; 3])
    }

    pub fn max_abs_r(&self) -> f64 {
        self.r().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn best_index(&self) -> Option<usize> {
        if self.converged {
            return self.residual_history.len().checked_sub(1);
        }
        self.residual_history
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Sign-preserving power `|v|^(2 beta) v`, with `|v|` floored at `1e-300`.
#[inline]
pub fn signed_power(v: f64, beta: f64) -> f64 {
    let mag = v.abs().max(1e-300);
    let p = (mag.ln() * (2.0 * beta + 1.0)).exp();
    if v < 0.0 {
        -p
    } else {
        p
    }
}

/// The nonlinearity `|phi|^(2 beta) phi`.
pub fn nonlinearity(phi: &RealField, beta: f64) -> RealField {
    phi.map(|v| signed_power(v, beta))
}

/// Coefficient `R_j` together with a flag for a vanishing denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationCoefficient {
    pub value: f64,
    pub degenerate: bool,
}

/// Spectral data of one iterate shared by all the diagnostics.
struct Analysis {
    phi_hat: Spectrum,
    nl_hat: Spectrum,
    m: Result<f64>,
    r: [TranslationCoefficient; 3],
    residual: f64,
}

/// Per-grid lookup tables.
struct Symbols {
    grid: GridSpec,
    xi: Vec<f64>,
    xi_sq: Vec<f64>,
}

impl Symbols {
    fn new(grid: GridSpec) -> Self {
        Self { grid, xi: grid.frequencies(), xi_sq: grid.frequency_norms_sq() }
    }

    #[inline]
    fn axis_symbol(&self, idx: usize, axis: Axis) -> f64 {
        let (k1, k2, k3) = self.grid.unflat(idx);
        let k = [k1, k2, k3][axis.index()];
        if k == self.grid.n() / 2 {
            0.0
        } else {
            self.xi[k]
        }
    }

    fn analyze(&self, phi: &RealField, beta: f64) -> Analysis {
        let phi_hat = fft3(phi);
        let nl_hat = fft3(&nonlinearity(phi, beta));
        let m = self.m_ratio(&phi_hat, &nl_hat);
        let r = Axis::ALL.map(|a| self.r_ratio(&phi_hat, &nl_hat, a));
        let residual = self.residual(&phi_hat, &nl_hat);
        Analysis { phi_hat, nl_hat, m, r, residual }
    }

    /// `sum (1+|xi|^2) |phi^|^2 / Re sum conj(phi^) N^`.
    fn m_ratio(&self, phi_hat: &Spectrum, nl_hat: &Spectrum) -> Result<f64> {
        let (p, q) = (phi_hat.coeffs(), nl_hat.coeffs());
        let xs = &self.xi_sq;
        let num = det_sum(p.len(), |i| (1.0 + xs[i]) * p[i].norm_sqr());
        let den = det_sum(p.len(), |i| (p[i].conj() * q[i]).re);
        // Weighted normalization so the threshold is scale-meaningful.
        let w = self.grid.cell_volume() / self.grid.len() as f64;
        if !(den * w).is_finite() || (den * w).abs() < 1e-300 {
            return Err(Error::Degenerate(format!("M denominator {:e}", den * w)));
        }
        Ok(num / den)
    }

    /// Translation coefficient from the unconjugated Fourier pairings
    /// `sum (1+|xi|^2) phi^ (i xi_j phi^) / sum (i xi_j phi^)(i xi_j N^)`.
    ///
    /// The unconjugated pairing of two real fields is their inner product
    /// with one of them reflected through the origin, which is what makes
    /// the numerator sense an off-center iterate.
    fn r_ratio(&self, phi_hat: &Spectrum, nl_hat: &Spectrum, axis: Axis) -> TranslationCoefficient {
        let (p, q) = (phi_hat.coeffs(), nl_hat.coeffs());
        let xs = &self.xi_sq;
        let i = Complex64::new(0.0, 1.0);
        let num = det_sum(p.len(), |k| {
            let s = self.axis_symbol(k, axis);
            ((1.0 + xs[k]) * p[k] * (i * s * p[k])).re
        });
        let den = det_sum(p.len(), |k| {
            let s = self.axis_symbol(k, axis);
            -(s * s) * (p[k] * q[k]).re
        });
        let scale = (det_sum(p.len(), |k| {
            let s = self.axis_symbol(k, axis);
            s * s * p[k].norm_sqr()
        }) * det_sum(p.len(), |k| {
            let s = self.axis_symbol(k, axis);
            s * s * q[k].norm_sqr()
        }))
        .sqrt();
        if !(den.abs() > 1e-14 * scale) || !num.is_finite() {
            return TranslationCoefficient { value: 0.0, degenerate: true };
        }
        TranslationCoefficient { value: num / den, degenerate: false }
    }

    /// `|| (1 - Lap) phi - N || / || phi ||` by Parseval.
    fn residual(&self, phi_hat: &Spectrum, nl_hat: &Spectrum) -> f64 {
        let (p, q) = (phi_hat.coeffs(), nl_hat.coeffs());
        let xs = &self.xi_sq;
        let den = det_sum(p.len(), |i| p[i].norm_sqr());
        if den == 0.0 {
            return f64::INFINITY;
        }
        let num = det_sum(p.len(), |i| ((1.0 + xs[i]) * p[i] - q[i]).norm_sqr());
        (num / den).sqrt()
    }

    /// One Petviashvili update from the analysis of the current iterate.
    fn step(&self, a: &Analysis, params: &SolitonParams) -> Result<RealField> {
        let m = match &a.m {
            Ok(m) => *m,
            Err(e) => return Err(Error::Degenerate(e.to_string())),
        };
        if !(m > 0.0) {
            return Err(Error::Degenerate(format!(
                "M = {m:e} is not positive; the iterate is outside the basin of attraction"
            )));
        }
        let amp = m.powf(params.gamma());
        let xs = &self.xi_sq;
        let p = a.phi_hat.coeffs();
        let q = a.nl_hat.coeffs();
        let mut buf: Vec<Complex64> =
            q.par_iter().zip(xs.par_iter()).map(|(c, s)| c * (amp / (1.0 + s))).collect();
        if params.delta != 0.0 {
            let r = a.r.map(|c| params.delta * c.value);
            buf.par_iter_mut().enumerate().for_each(|(k, c)| {
                let (k1, k2, k3) = self.grid.unflat(k);
                let n2 = self.grid.n() / 2;
                let sym = |kk: usize| if kk == n2 { 0.0 } else { self.xi[kk] };
                let s = r[0] * sym(k1) + r[1] * sym(k2) + r[2] * sym(k3);
                *c += Complex64::new(0.0, s) * p[k];
            });
        }
        Ok(ifft3_owned(self.grid, &mut buf))
    }
}

/// Petviashvili stabilizing factor
/// `M = <phi, (1 - Lap) phi> / <phi, |phi|^(2 beta) phi>`, evaluated in the
/// Fourier domain.
pub fn compute_m(phi: &RealField, beta: f64) -> Result<f64> {
    let sym = Symbols::new(*phi.grid());
    sym.m_ratio(&fft3(phi), &fft3(&nonlinearity(phi, beta)))
}

/// Translation coefficient `R_j` of an iterate.
pub fn compute_r(phi: &RealField, beta: f64, axis: Axis) -> TranslationCoefficient {
    let sym = Symbols::new(*phi.grid());
    sym.r_ratio(&fft3(phi), &fft3(&nonlinearity(phi, beta)), axis)
}

/// Relative residual `|| -Lap phi + phi - |phi|^(2 beta) phi || / || phi ||`;
/// infinite for the zero field.
pub fn euler_lagrange_residual(phi: &RealField, beta: f64) -> f64 {
    let sym = Symbols::new(*phi.grid());
    sym.residual(&fft3(phi), &fft3(&nonlinearity(phi, beta)))
}

/// One modified Petviashvili update.
pub fn petviashvili_step(phi: &RealField, params: &SolitonParams) -> Result<RealField> {
    params.validate()?;
    let sym = Symbols::new(*phi.grid());
    let a = sym.analyze(phi, params.beta);
    sym.step(&a, params)
}

/// Pointwise Aitken extrapolation of three successive iterates. Points with
/// a second difference below `1e-14 (|f0| + 1)` keep `f2`.
pub fn aitken(f0: &RealField, f1: &RealField, f2: &RealField) -> Result<RealField> {
    if f0.grid() != f1.grid() || f0.grid() != f2.grid() {
        let (a, b) = (f0.grid(), if f0.grid() != f1.grid() { f1.grid() } else { f2.grid() });
        return Err(Error::GridMismatch { expected: (a.side(), a.n()), found: (b.side(), b.n()) });
    }
    let (a, b, c) = (f0.samples(), f1.samples(), f2.samples());
    let out: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let den = c[i] - 2.0 * b[i] + a[i];
            if den.abs() < 1e-14 * (a[i].abs() + 1.0) {
                c[i]
            } else {
                let d = b[i] - a[i];
                a[i] - d * d / den
            }
        })
        .collect();
    RealField::from_samples(*f0.grid(), out)
}

/// Default initial guess `a exp(-|x|^2)`.
pub fn gaussian_guess(grid: GridSpec, amplitude: f64) -> RealField {
    RealField::from_fn(grid, |x| amplitude * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp())
}

struct Recorder {
    residual: Vec<f64>,
    m: Vec<f64>,
    r: Vec<[f64; 3]>,
    aitken: Vec<(usize, f64)>,
    best: f64,
    best_phi: Option<RealField>,
    armed: bool,
}

impl Recorder {
    fn record(&mut self, phi: &RealField, a: &Analysis) {
        self.residual.push(a.residual);
        self.m.push(*a.m.as_ref().unwrap_or(&f64::NAN));
        self.r.push(a.r.map(|c| c.value));
        if a.residual < self.best {
            self.best = a.residual;
            self.best_phi = Some(phi.clone());
        }
        if a.residual < DIVERGENCE_ARM {
            self.armed = true;
        }
    }

    fn diverging(&self, residual: f64) -> Option<String> {
        if !residual.is_finite() {
            return Some("residual is not finite".into());
        }
        if self.armed && residual > DIVERGENCE_GROWTH * self.best {
            return Some(format!(
                "residual {residual:e} grew more than {DIVERGENCE_GROWTH}x above its minimum {:e}; \
                 this happens when L is of order N/4 or larger (refine the grid or shrink the box)",
                self.best
            ));
        }
        None
    }
}

/// Runs the modified Petviashvili iteration from `initial` (or the default
/// Gaussian) until the residual drops to `params.tol`.
///
/// Non-convergence is reported through [`SolitonResult::termination`]; only
/// invalid input is an error.
pub fn solve_soliton(
    grid: GridSpec,
    params: &SolitonParams,
    initial: Option<&RealField>,
) -> Result<SolitonResult> {
    params.validate()?;
    let mut phi = match initial {
        Some(f) => {
            if f.grid() != &grid {
                return Err(Error::GridMismatch {
                    expected: (grid.side(), grid.n()),
                    found: (f.grid().side(), f.grid().n()),
                });
            }
            f.clone()
        }
        None => gaussian_guess(grid, params.initial_amplitude),
    };
    let sym = Symbols::new(grid);
    let mut rec = Recorder {
        residual: Vec::new(),
        m: Vec::new(),
        r: Vec::new(),
        aitken: Vec::new(),
        best: f64::INFINITY,
        best_phi: None,
        armed: false,
    };

    let mut analysis = sym.analyze(&phi, params.beta);
    let mut window: Vec<RealField> = Vec::with_capacity(AITKEN_CADENCE);
    let mut steps = 0;
    let termination = loop {
        rec.record(&phi, &analysis);
        if analysis.residual <= params.tol {
            break Termination::Converged;
        }
        if let Some(reason) = rec.diverging(analysis.residual) {
            break Termination::Diverged { iteration: steps, reason };
        }
        if steps >= params.max_iter {
            break Termination::MaxIterations;
        }

        let next = match sym.step(&analysis, params) {
            Ok(f) => f,
            Err(e) => break Termination::Diverged { iteration: steps, reason: e.to_string() },
        };
        steps += 1;
        let next_analysis = sym.analyze(&next, params.beta);

        if params.use_aitken {
            window.push(next.clone());
            if window.len() == AITKEN_CADENCE {
                let extrapolated = aitken(&window[0], &window[1], &window[2])?;
                window.clear();
                let ext_analysis = sym.analyze(&extrapolated, params.beta);
                rec.aitken.push((rec.residual.len(), ext_analysis.residual));
                if ext_analysis.residual < next_analysis.residual {
                    phi = extrapolated;
                    analysis = ext_analysis;
                    continue;
                }
            }
        }
        phi = next;
        analysis = next_analysis;
    };

    let converged = termination == Termination::Converged;
    let phi = if converged { phi } else { rec.best_phi.take().unwrap_or(phi) };
    Ok(SolitonResult {
        phi,
        params: *params,
        iterations: steps,
        residual_history: rec.residual,
        m_history: rec.m,
        r_history: rec.r,
        aitken_history: rec.aitken,
        converged,
        termination,
    })
}
