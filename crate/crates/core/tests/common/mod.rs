//! Independent reference computations for the integration tests. None of
//! these call into the library's numerical kernels.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use nlsgap_core::{GridSpec, RealField};

/// `int_a^b f` by double-exponential quadrature on pieces of length <= `piece`.
fn integrate(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, piece: f64, abs_tol: f64) -> f64 {
    let pieces = ((b - a) / piece).ceil().max(1.0) as usize;
    let w = (b - a) / pieces as f64;
    // Summing small pieces first keeps round-off low.
    let mut parts: Vec<f64> = (0..pieces)
        .map(|i| quadrature::integrate(f, a + i as f64 * w, a + (i + 1) as f64 * w, abs_tol / pieces as f64).integral)
        .collect();
    parts.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    parts.iter().sum()
}

/// Sine integral by quadrature: directly for `x <= 10`, otherwise through
/// the non-oscillatory Laplace forms of the auxiliary functions
/// `f(x) = int_0^inf e^{-xt}/(1+t^2) dt`, `g(x) = int_0^inf t e^{-xt}/(1+t^2) dt`.
pub fn si_quadrature(x: f64) -> f64 {
    if x < 0.0 {
        return -si_quadrature(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= 10.0 {
        let sinc = |t: f64| if t == 0.0 { 1.0 } else { t.sin() / t };
        return integrate(sinc, 0.0, x, 1.0, 1e-17 * x);
    }
    // s = x t: f = (1/x) int e^{-s} / (1 + (s/x)^2) ds, g = (1/x^2) int s e^{-s} / (1 + (s/x)^2) ds
    let fx = integrate(|s: f64| (-s).exp() / (1.0 + (s / x) * (s / x)), 0.0, 45.0, 2.0, 1e-18) / x;
    let gx = integrate(|s: f64| s * (-s).exp() / (1.0 + (s / x) * (s / x)), 0.0, 50.0, 2.0, 1e-18) / (x * x);
    FRAC_PI_2 - fx * x.cos() - gx * x.sin()
}

/// Asymptotic expansion of the auxiliary functions, for `x` beyond ~40.
pub fn si_asymptotic(x: f64) -> f64 {
    // f ~ (1/x) sum (-1)^k (2k)! / x^{2k},  g ~ (1/x^2) sum (-1)^k (2k+1)! / x^{2k}
    let (mut f, mut g) = (0.0, 0.0);
    let (mut tf, mut tg) = (1.0 / x, 1.0 / (x * x));
    for k in 0..40 {
        f += tf;
        g += tg;
        let (a, b) = ((2 * k + 1) as f64, (2 * k + 2) as f64);
        let nf = -tf * a * b / (x * x);
        let ng = -tg * b * (b + 1.0) / (x * x);
        if nf.abs() > tf.abs() || ng.abs() > tg.abs() {
            break;
        }
        tf = nf;
        tg = ng;
    }
    FRAC_PI_2 - f * x.cos() - g * x.sin()
}

/// Green's weight from the quadrature sine integral.
pub fn green_weight_oracle(h: f64, r: f64) -> f64 {
    if r == 0.0 {
        h * h / (2.0 * PI)
    } else {
        h.powi(3) / (2.0 * PI * PI * r) * si_quadrature(PI * r / h)
    }
}

/// Lattice offset of storage index `i` along one axis, wrapped into `[-N/2, N/2)`.
fn wrapped(d: i64, n: i64) -> i64 {
    let m = d.rem_euclid(n);
    if m >= n / 2 {
        m - n
    } else {
        m
    }
}

/// Dense matrix of the circular convolution with the Green's weights.
pub fn dense_green(grid: &GridSpec) -> DMatrix<f64> {
    let n = grid.n() as i64;
    let h = grid.spacing();
    let len = grid.len();
    let mut table = std::collections::HashMap::new();
    let coords = |i: usize| [(i / (n * n) as usize) as i64, ((i / n as usize) % n as usize) as i64, (i % n as usize) as i64];
    DMatrix::from_fn(len, len, |i, j| {
        let (a, b) = (coords(i), coords(j));
        let m: i64 = (0..3).map(|k| wrapped(a[k] - b[k], n).pow(2)).sum();
        *table.entry(m).or_insert_with(|| green_weight_oracle(h, (m as f64).sqrt() * h))
    })
}

/// Dense `scale * diag(U) G diag(U)`.
pub fn dense_bs(potential: &RealField, scale: f64) -> DMatrix<f64> {
    let mut k = dense_green(potential.grid());
    let u = potential.samples();
    for j in 0..u.len() {
        for i in 0..u.len() {
            k[(i, j)] *= scale * u[i] * u[j];
        }
    }
    k
}

/// Eigenvalues in non-increasing order.
pub fn dense_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Centre value of the positive radial ground state of
/// `phi'' + (2/r) phi' - phi + phi^{2 beta + 1} = 0`, by shooting with RK4.
pub fn shooting_center(beta: f64) -> f64 {
    let p = 2.0 * beta + 1.0;
    // true: the trajectory crosses zero (initial value too large)
    let overshoots = |a: f64| -> bool {
        let rhs = |r: f64, y: [f64; 2]| [y[1], -2.0 / r * y[1] + y[0] - y[0].abs().powf(p - 1.0) * y[0]];
        let dr = 2e-4;
        let mut r = 1e-3;
        // Series start: phi = a + (a - a^p) r^2 / 6
        let c = (a - a.powf(p)) / 6.0;
        let mut y = [a + c * r * r, 2.0 * c * r];
        while r < 30.0 {
            let k1 = rhs(r, y);
            let k2 = rhs(r + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
            let k3 = rhs(r + dr / 2.0, [y[0] + dr / 2.0 * k2[0], y[1] + dr / 2.0 * k2[1]]);
            let k4 = rhs(r + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
            for i in 0..2 {
                y[i] += dr / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            r += dr;
            if y[0] < 0.0 {
                return true;
            }
            if y[1] > 0.0 {
                return false;
            }
        }
        false
    };
    let (mut lo, mut hi) = (1.5, 8.0);
    for _ in 0..45 {
        let mid = 0.5 * (lo + hi);
        if overshoots(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solution of `-Lap u = exp(-r^2 / s^2)` decaying at infinity.
pub fn gaussian_potential(s: f64, r: f64) -> f64 {
    let root_pi = PI.sqrt();
    if r < 1e-8 {
        return s * s / 2.0;
    }
    s.powi(3) * root_pi * libm::erf(r / s) / (4.0 * r)
}
