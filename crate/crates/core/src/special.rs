//! Sine integral and the band-limited free-space Green's weights.
//!
//! The discrete inverse Laplacian convolves with
//!
//! ```text
//! G(x_j) = h^3 / (2 pi^2 |x_j|) * Si(pi |x_j| / h)    x_j != 0
//! G(0)   = h^2 / (2 pi)
//! ```
//!
//! which is `h^3` times the inverse Fourier transform of `1/|xi|^2`
//! restricted to the ball `|xi| <= pi/h`. The convolution is circular over
//! the periodic box.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft3, ifft3_owned, GridSpec, RealField, Spectrum};

/// Switch point between the power series and the continued fraction.
const SERIES_LIMIT: f64 = 4.0;

/// Sine integral `Si(x) = int_0^x sin(t)/t dt`, odd in `x`.
pub fn sine_integral(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFinite("Si(NaN)".into()));
    }
    Ok(si(x))
}

/// Infallible variant for callers that already excluded NaN.
pub(crate) fn si(x: f64) -> f64 {
    if x < 0.0 {
        return -si(-x);
    }
    if x == f64::INFINITY {
        return FRAC_PI_2;
    }
    if x <= SERIES_LIMIT {
        si_series(x)
    } else {
        si_continued_fraction(x)
    }
}

/// Maclaurin series `sum (-1)^n x^(2n+1) / ((2n+1) (2n+1)!)`.
fn si_series(x: f64) -> f64 {
    let x2 = x * x;
    // term = (-1)^n x^(2n+1) / (2n+1)!
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        let k = (2 * n + 2) as f64;
        term *= -x2 / (k * (k + 1.0));
        n += 1;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() <= f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
    }
    sum
}

/// `Si(x) = pi/2 + Im E1(ix)` with the exponential integral evaluated by its
/// continued fraction (modified Lentz). The auxiliary functions
/// `f + i g = i e^{ix} E1(ix)` give `Si = pi/2 - f cos x - g sin x`.
fn si_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let one = Complex64::new(1.0, 0.0);
    // E1(z) = e^{-z} / (z + 1 - 1/(z + 3 - 4/(z + 5 - ...)))
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = one / b;
    let mut h = d;
    for i in 1..1000 {
        let a = -((i * i) as f64);
        b += Complex64::new(2.0, 0.0);
        d = one / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < f64::EPSILON {
            break;
        }
    }
    // h = e^{ix} E1(ix) up to the factor; E1(ix) = h (cos x - i sin x)
    let (s, c) = x.sin_cos();
    let e1 = h * Complex64::new(c, -s);
    FRAC_PI_2 + e1.im
}

/// Discrete Green's weights on a grid and their cached spectrum.
#[derive(Debug, Clone)]
pub struct GreenWeights {
    weights: RealField,
    spectrum: Vec<f64>,
}

/// Weight of a lattice point at distance `r` from the origin.
pub fn green_weight(grid: &GridSpec, r: f64) -> f64 {
    let h = grid.spacing();
    if r == 0.0 {
        h * h / (2.0 * PI)
    } else {
        h.powi(3) / (2.0 * PI * PI * r) * si(PI * r / h)
    }
}

/// Samples the Green's weights on `grid` and caches their spectrum.
pub fn greens_weights(grid: GridSpec) -> GreenWeights {
    let h = grid.spacing();
    let half = grid.n() / 2;
    // Weights depend only on the integer |j|^2, so every signed permutation
    // of a lattice point reads the same table entry.
    let table: Vec<f64> =
        (0..=3 * half * half).into_par_iter().map(|m| green_weight(&grid, (m as f64).sqrt() * h)).collect();
    let weights = RealField::from_fn(grid, |x| {
        let j = x.map(|v| (v / h).round() as i64);
        table[(j[0] * j[0] + j[1] * j[1] + j[2] * j[2]) as usize]
    });

    // Circular convolution needs the kernel with its origin at storage index 0.
    let n = grid.n();
    let src = weights.samples();
    let mut shifted = vec![0.0; grid.len()];
    shifted.par_chunks_mut(n * n).enumerate().for_each(|(a, plane)| {
        let a0 = (a + half) % n;
        for b in 0..n {
            let b0 = (b + half) % n;
            for c in 0..n {
                plane[b * n + c] = src[grid.flat(a0, b0, (c + half) % n)];
            }
        }
    });
    let shifted = RealField::from_samples(grid, shifted).expect("finite weights");
    // The kernel is even, so its spectrum is real.
    let spectrum = fft3(&shifted).coeffs().iter().map(|c| c.re).collect();
    GreenWeights { weights, spectrum }
}

impl GreenWeights {
    pub fn grid(&self) -> &GridSpec {
        self.weights.grid()
    }

    /// Weights sampled on the grid, centered at the origin.
    pub fn weights(&self) -> &RealField {
        &self.weights
    }

    /// Real Fourier multiplier of the circular convolution, wrap-around order.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Multiplies a spectrum by the kernel's multiplier in place.
    pub fn apply_to_spectrum(&self, spectrum: &mut Spectrum) -> Result<()> {
        if spectrum.grid() != self.grid() {
            return Err(Error::GridMismatch {
                expected: (self.grid().side(), self.grid().n()),
                found: (spectrum.grid().side(), spectrum.grid().n()),
            });
        }
        spectrum.coeffs_mut().par_iter_mut().zip(self.spectrum.par_iter()).for_each(|(c, g)| *c *= g);
        Ok(())
    }
}

/// Circular convolution `sum_k G(x_j - x_k) f(x_k)`: the discrete `(-Laplacian)^-1`.
pub fn apply_inverse_laplacian(f: &RealField, green: &GreenWeights) -> Result<RealField> {
    let mut s = fft3(f);
    green.apply_to_spectrum(&mut s)?;
    let grid = *f.grid();
    let mut buf = s.coeffs().to_vec();
    Ok(ifft3_owned(grid, &mut buf))
}
