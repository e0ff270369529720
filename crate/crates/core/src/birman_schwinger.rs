//! Matrix-free Birman-Schwinger operators
//!
//! ```text
//! K_- = U (-Lap)^-1 U,    K_+ = (2 beta + 1) U (-Lap)^-1 U,    U = phi^beta
//! ```
//!
//! discretized as `scale * U . ifft(G^ . fft(U . f))` with the band-limited
//! Green's weights. Eigenvalues of `K_-` above one count the bound states of
//! `L_-` below the continuum edge, and likewise for `K_+`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::eigensolver::LinearOperator;
use crate::error::{Error, Result};
use crate::grid::{transform3_in_place, RealField};
use crate::special::GreenWeights;

/// Which of the two linearized operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    /// Prefactor of the kernel: 1 for `K_-`, `2 beta + 1` for `K_+`.
    pub fn scale(self, beta: f64) -> f64 {
        match self {
            Sign::Minus => 1.0,
            Sign::Plus => 2.0 * beta + 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BSOperator {
    potential: RealField,
    green: Arc<GreenWeights>,
    scale: f64,
    beta: f64,
    sign: Sign,
}

/// Builds `K_-` or `K_+` from a converged soliton.
pub fn make_bs_operator(
    phi: &RealField,
    beta: f64,
    sign: Sign,
    green: Arc<GreenWeights>,
) -> Result<BSOperator> {
    if phi.grid() != green.grid() {
        return Err(Error::GridMismatch {
            expected: (green.grid().side(), green.grid().n()),
            found: (phi.grid().side(), phi.grid().n()),
        });
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let min = phi.min();
    if min < 0.0 {
        return Err(Error::NegativeSoliton(min));
    }
    let potential = phi.map(|v| v.powf(beta));
    Ok(BSOperator { potential, green, scale: sign.scale(beta), beta, sign })
}

impl BSOperator {
    /// The potential root `U = phi^beta`.
    pub fn potential(&self) -> &RealField {
        &self.potential
    }

    pub fn green(&self) -> &Arc<GreenWeights> {
        &self.green
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Same potential and kernel with a different prefactor.
    pub fn with_scale(&self, scale: f64) -> BSOperator {
        BSOperator { scale, ..self.clone() }
    }

    /// The other sign of the same soliton.
    pub fn flipped(&self) -> BSOperator {
        let sign = match self.sign {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        };
        BSOperator { sign, scale: sign.scale(self.beta), ..self.clone() }
    }

    /// Applies the operator to one or two raw sample vectors at the cost of
    /// one transform pair: the kernel is real, so the real and imaginary
    /// parts of `a + i b` convolve independently.
    fn apply_packed(&self, a: &[f64], b: Option<&[f64]>, out_a: &mut [f64], out_b: Option<&mut [f64]>) {
        let u = self.potential.samples();
        let grid = self.potential.grid();
        let mut buf: Vec<Complex64> = match b {
            Some(b) => (0..u.len()).into_par_iter().map(|i| Complex64::new(u[i] * a[i], u[i] * b[i])).collect(),
            None => (0..u.len()).into_par_iter().map(|i| Complex64::new(u[i] * a[i], 0.0)).collect(),
        };
        transform3_in_place(&mut buf, grid.n(), false);
        let norm = 1.0 / grid.len() as f64;
        buf.par_iter_mut().zip(self.green.spectrum().par_iter()).for_each(|(c, g)| *c *= g * norm);
        transform3_in_place(&mut buf, grid.n(), true);
        let s = self.scale;
        out_a.par_iter_mut().enumerate().for_each(|(i, o)| *o = s * (u[i] * buf[i].re));
        if let Some(out_b) = out_b {
            out_b.par_iter_mut().enumerate().for_each(|(i, o)| *o = s * (u[i] * buf[i].im));
        }
    }
}

/// `K f = scale * U . ifft(G^ . fft(U . f))`.
pub fn apply_bs(op: &BSOperator, f: &RealField) -> Result<RealField> {
    let grid = op.potential.grid();
    if f.grid() != grid {
        return Err(Error::GridMismatch {
            expected: (grid.side(), grid.n()),
            found: (f.grid().side(), f.grid().n()),
        });
    }
    let mut out = vec![0.0; grid.len()];
    op.apply_packed(f.samples(), None, &mut out, None);
    RealField::from_samples(*grid, out)
}

impl LinearOperator for BSOperator {
    fn dim(&self) -> usize {
        self.potential.samples().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_packed(x, None, y, None);
    }

    fn apply_block(&self, xs: &[&[f64]], ys: &mut [Vec<f64>]) {
        let mut i = 0;
        while i < xs.len() {
            if i + 1 < xs.len() {
                let (head, tail) = ys.split_at_mut(i + 1);
                self.apply_packed(xs[i], Some(xs[i + 1]), &mut head[i], Some(&mut tail[0]));
                i += 2;
            } else {
                self.apply_packed(xs[i], None, &mut ys[i], None);
                i += 1;
            }
        }
    }
}
