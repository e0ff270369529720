//! Cubic periodic grid, real fields, 3D discrete Fourier transforms and
//! spectral differentiation.
//!
//! A grid of side `L` with `N` points per axis samples
//! `x_j = (j1, j2, j3) * L/N` for `-N/2 <= j_k <= N/2 - 1`. Fields are stored
//! row-major over `(j1, j2, j3)` with `j3` fastest, and along each axis the
//! storage index is `j_k + N/2`, so storage index 0 is the corner
//! `x = -L/2` and the origin sits at storage index `N/2`.
//!
//! The forward transform is the plain unnormalized sum over storage indices
//! and the inverse carries the `1/N^3` factor. Frequency index `k` (in
//! wrap-around order) maps to `xi = 2*pi*k'/L` with `k' = k` for `k < N/2`
//! and `k' = k - N` otherwise; `k = N/2` is the unmatched Nyquist mode at
//! `xi = -pi*N/L`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Chunk length for deterministic parallel reductions.
const REDUCE_CHUNK: usize = 1 << 14;

/// Cubic computational box of side `side` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    side: f64,
    n: usize,
}

impl GridSpec {
    pub fn new(side: f64, n: usize) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("side length must be positive, got {side}")));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("points per axis must be even, got {n}")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 points per axis, got {n}")));
        }
        if side > n as f64 {
            return Err(Error::InvalidGrid(format!(
                "L = {side} exceeds N = {n}; the soliton iteration diverges for L of order N/4 and above"
            )));
        }
        Ok(Self { side, n })
    }

    /// Side length `L`.
    pub fn side(&self) -> f64 {
        self.side
    }

    /// Points per axis `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of samples `N^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Always false; grids have at least 64 points.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `h = L/N`.
    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Quadrature weight `h^3` of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    /// Largest frequency magnitude per axis, `pi N / L`.
    pub fn max_frequency(&self) -> f64 {
        PI * self.n as f64 / self.side
    }

    /// Signed lattice index `j` of storage index `i` along one axis.
    #[inline]
    pub fn lattice_index(&self, i: usize) -> i64 {
        i as i64 - (self.n / 2) as i64
    }

    /// Storage index of signed lattice index `j`, wrapped periodically.
    #[inline]
    pub fn storage_index(&self, j: i64) -> usize {
        let n = self.n as i64;
        (j + n / 2).rem_euclid(n) as usize
    }

    /// Coordinate of storage index `i` along one axis.
    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        self.lattice_index(i) as f64 * self.spacing()
    }

    /// Coordinates of every storage index along one axis.
    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i)).collect()
    }

    /// Signed integer frequency of wrap-around index `k`, in `[-N/2, N/2 - 1]`.
    #[inline]
    pub fn frequency_index(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Angular frequency `xi = 2 pi k'/L` of wrap-around index `k`.
    #[inline]
    pub fn frequency(&self, k: usize) -> f64 {
        2.0 * PI * self.frequency_index(k) as f64 / self.side
    }

    /// Angular frequencies of every wrap-around index along one axis.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.frequency(k)).collect()
    }

    /// Flat index of the triple `(i1, i2, i3)`, `i3` fastest.
    #[inline]
    pub fn flat(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.n + i2) * self.n + i3
    }

    /// Inverse of [`GridSpec::flat`].
    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Flat index of the sample at the origin.
    pub fn origin_index(&self) -> usize {
        let c = self.n / 2;
        self.flat(c, c, c)
    }

    /// `|xi|^2` for every spectral index, in flat wrap-around order.
    pub fn frequency_norms_sq(&self) -> Vec<f64> {
        let xi = self.frequencies();
        let n = self.n;
        let mut out = vec![0.0; self.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(k1, plane)| {
            for k2 in 0..n {
                for k3 in 0..n {
                    plane[k2 * n + k3] = xi[k1] * xi[k1] + xi[k2] * xi[k2] + xi[k3] * xi[k3];
                }
            }
        });
        out
    }

    fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: (self.side, self.n),
                found: (other.side, other.n),
            })
        }
    }
}

/// Builds a validated grid.
pub fn make_grid(side: f64, n: usize) -> Result<GridSpec> {
    GridSpec::new(side, n)
}

/// Real samples `f(x_j)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    samples: Vec<f64>,
}

impl RealField {
    pub fn from_samples(grid: GridSpec, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), found: samples.len() });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is {}", samples[i])));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, samples: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self { grid, samples: vec![value; grid.len()] }
    }

    /// Samples `f(x)` at every grid node.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        let x = grid.coordinates();
        let n = grid.n();
        let mut samples = vec![0.0; grid.len()];
        samples.par_chunks_mut(n * n).enumerate().for_each(|(i1, plane)| {
            for i2 in 0..n {
                for i3 in 0..n {
                    plane[i2 * n + i3] = f([x[i1], x[i2], x[i3]]);
                }
            }
        });
        Self { grid, samples }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Sample at signed lattice indices `(j1, j2, j3)`, wrapped periodically.
    pub fn at(&self, j: [i64; 3]) -> f64 {
        let g = &self.grid;
        self.samples[g.flat(g.storage_index(j[0]), g.storage_index(j[1]), g.storage_index(j[2]))]
    }

    pub fn map<F>(&self, f: F) -> RealField
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        RealField { grid: self.grid, samples: self.samples.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&mut self, s: f64) {
        self.samples.par_iter_mut().for_each(|v| *v *= s);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &RealField) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        self.samples.par_iter_mut().zip(other.samples.par_iter()).for_each(|(y, &x)| *y += a * x);
        Ok(())
    }

    /// Pointwise product.
    pub fn hadamard(&self, other: &RealField) -> Result<RealField> {
        self.grid.ensure_same(&other.grid)?;
        let samples =
            self.samples.par_iter().zip(other.samples.par_iter()).map(|(a, b)| a * b).collect();
        Ok(RealField { grid: self.grid, samples })
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.par_iter().fold(|| 0.0_f64, |m, v| m.max(v.abs())).reduce(|| 0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.par_iter().copied().reduce(|| f64::INFINITY, f64::min)
    }

    /// Field composed with a signed axis permutation: `out(x) = f(sigma x)`.
    ///
    /// `perm[a]` names the source axis of output axis `a` and `flip[a]`
    /// negates it. Sign flips act on the periodic lattice, so `-N/2` maps to
    /// itself.
    pub fn transform_axes(&self, perm: [usize; 3], flip: [bool; 3]) -> RealField {
        let g = self.grid;
        let n = g.n();
        let mut out = vec![0.0; g.len()];
        out.par_chunks_mut(n * n).enumerate().for_each(|(i1, plane)| {
            for i2 in 0..n {
                for i3 in 0..n {
                    let j = [g.lattice_index(i1), g.lattice_index(i2), g.lattice_index(i3)];
                    let mut src = [0i64; 3];
                    for a in 0..3 {
                        let v = j[a];
                        src[perm[a]] = if flip[a] { -v } else { v };
                    }
                    plane[i2 * n + i3] = self.at(src);
                }
            }
        });
        RealField { grid: g, samples: out }
    }
}

/// Fourier coefficients of a field, in flat wrap-around frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), found: coeffs.len() });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Flat index of the spectral index `(-k1, -k2, -k3)` mod `N`.
    #[inline]
    pub fn mirror_index(&self, idx: usize) -> usize {
        let g = &self.grid;
        let n = g.n();
        let (k1, k2, k3) = g.unflat(idx);
        g.flat((n - k1) % n, (n - k2) % n, (n - k3) % n)
    }

    /// Multiplies every coefficient by `m(k)` where `k` is the flat index.
    pub fn multiply_by<F>(&mut self, m: F)
    where
        F: Fn(usize) -> Complex64 + Sync,
    {
        self.coeffs.par_iter_mut().enumerate().for_each(|(i, c)| *c *= m(i));
    }
}

/// Cached one-dimensional plans for a given transform length.
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
        })
        .clone()
}

/// In-place unnormalized 3D transform of `data` laid out as an `n^3` cube.
pub(crate) fn transform3_in_place(data: &mut [Complex64], n: usize, inverse: bool) {
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let scratch_len = fft.get_inplace_scratch_len();
    let zero = Complex64::new(0.0, 0.0);
    let plane = n * n;

    // Axes 2 and 3 stay inside one j1-plane.
    data.par_chunks_mut(plane).for_each_init(
        || (vec![zero; scratch_len], vec![zero; n]),
        |(scratch, line), block| {
            fft.process_with_scratch(block, scratch);
            for i3 in 0..n {
                for i2 in 0..n {
                    line[i2] = block[i2 * n + i3];
                }
                fft.process_with_scratch(line, scratch);
                for i2 in 0..n {
                    block[i2 * n + i3] = line[i2];
                }
            }
        },
    );

    // Axis 1: gather each (i2, i3) pencil, transform, scatter back.
    let mut pencils = vec![zero; data.len()];
    {
        let src: &[Complex64] = data;
        pencils.par_chunks_mut(n * n).enumerate().for_each_init(
            || vec![zero; scratch_len],
            |scratch, (i2, rows)| {
                for i3 in 0..n {
                    let line = &mut rows[i3 * n..(i3 + 1) * n];
                    for (i1, v) in line.iter_mut().enumerate() {
                        *v = src[i1 * plane + i2 * n + i3];
                    }
                }
                fft.process_with_scratch(rows, scratch);
            },
        );
    }
    let src: &[Complex64] = &pencils;
    data.par_chunks_mut(plane).enumerate().for_each(|(i1, block)| {
        for i2 in 0..n {
            for i3 in 0..n {
                block[i2 * n + i3] = src[(i2 * n + i3) * n + i1];
            }
        }
    });
}

/// Forward transform `F[k] = sum_s f[s] exp(-2 pi i k.s / N)`.
pub fn fft3(f: &RealField) -> Spectrum {
    let mut coeffs: Vec<Complex64> = f.samples.par_iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform3_in_place(&mut coeffs, f.grid.n(), false);
    Spectrum { grid: f.grid, coeffs }
}

/// Inverse transform, normalized by `1/N^3`; returns the real part.
pub fn ifft3(spectrum: &Spectrum) -> RealField {
    let mut buf = spectrum.coeffs.clone();
    ifft3_owned(spectrum.grid, &mut buf)
}

/// Inverse transform consuming a scratch buffer of coefficients.
pub(crate) fn ifft3_owned(grid: GridSpec, buf: &mut [Complex64]) -> RealField {
    transform3_in_place(buf, grid.n(), true);
    let norm = 1.0 / grid.len() as f64;
    RealField { grid, samples: buf.par_iter().map(|c| c.re * norm).collect() }
}

/// Inverse transform keeping the imaginary parts, normalized by `1/N^3`.
pub fn ifft3_complex(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut buf = spectrum.coeffs.clone();
    transform3_in_place(&mut buf, spectrum.grid.n(), true);
    let norm = 1.0 / spectrum.grid.len() as f64;
    buf.par_iter_mut().for_each(|c| *c *= norm);
    buf
}

/// Coordinate axis of a derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::X3];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::X3 => 2,
        }
    }
}

/// Fourier symbol `i xi_axis` at flat spectral index `idx`, with the Nyquist
/// mode zeroed.
#[inline]
pub fn derivative_symbol(grid: &GridSpec, xi: &[f64], idx: usize, axis: Axis) -> Complex64 {
    let n = grid.n();
    let (k1, k2, k3) = grid.unflat(idx);
    let k = [k1, k2, k3][axis.index()];
    if k == n / 2 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, xi[k])
    }
}

/// Spectrum of the derivative along `axis`.
pub fn derivative_spectrum(spectrum: &Spectrum, axis: Axis) -> Spectrum {
    let grid = spectrum.grid;
    let xi = grid.frequencies();
    let mut out = spectrum.clone();
    out.multiply_by(|i| derivative_symbol(&grid, &xi, i, axis));
    out
}

/// Spectral derivative `d f / d x_axis`.
pub fn spectral_derivative(f: &RealField, axis: Axis) -> RealField {
    ifft3(&derivative_spectrum(&fft3(f), axis))
}

/// Deterministic parallel sum of `term(i)` for `i` in `0..len`.
pub(crate) fn det_sum<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let starts: Vec<usize> = (0..len).step_by(REDUCE_CHUNK).collect();
    let partial: Vec<f64> = starts
        .par_iter()
        .map(|&s| (s..(s + REDUCE_CHUNK).min(len)).map(&term).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Weighted discrete inner product `h^3 sum_j f(x_j) g(x_j)`.
pub fn inner_product(f: &RealField, g: &RealField) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    let (a, b) = (&f.samples, &g.samples);
    Ok(f.grid.cell_volume() * det_sum(a.len(), |i| a[i] * b[i]))
}

/// Weighted discrete norm `sqrt(<f, f>)`.
pub fn l2_norm(f: &RealField) -> f64 {
    let a = &f.samples;
    (f.grid.cell_volume() * det_sum(a.len(), |i| a[i] * a[i])).sqrt()
}

/// Squared weighted norm of the field a spectrum represents, via Parseval:
/// `h^3 / N^3 * sum_k |F_k|^2`.
pub fn spectral_norm_sq(spectrum: &Spectrum) -> f64 {
    let c = &spectrum.coeffs;
    spectrum.grid.cell_volume() / spectrum.grid.len() as f64 * det_sum(c.len(), |i| c[i].norm_sqr())
}

/// Hermitian spectral pairing `h^3/N^3 * Re sum_k conj(F_k) G_k`, equal to
/// the weighted physical inner product of the underlying fields.
pub fn spectral_inner(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    a.grid.ensure_same(&b.grid)?;
    let (x, y) = (&a.coeffs, &b.coeffs);
    let sum = det_sum(x.len(), |i| (x[i].conj() * y[i]).re);
    Ok(a.grid.cell_volume() / a.grid.len() as f64 * sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(20.0, 100).unwrap();
        assert!((g.spacing() - 0.2).abs() < 1e-15);
        let x = g.coordinates();
        assert!((x[0] + 10.0).abs() < 1e-12);
        assert!((x[99] - 9.8).abs() < 1e-12);
        assert!((g.max_frequency() - PI * 5.0).abs() < 1e-12);
        assert_eq!(x[g.n() / 2], 0.0);
        let xi = g.frequencies();
        let max = xi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!((max - g.max_frequency()).abs() < 1e-12);

        let g = make_grid(15.0, 60).unwrap();
        assert_eq!(g.spacing(), 0.25);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(20.0, 21), Err(Error::InvalidGrid(_))));
        assert!(make_grid(0.0, 10).is_err());
        assert!(make_grid(-1.0, 10).is_err());
        assert!(make_grid(20.0, 2).is_err());
        assert!(make_grid(11.0, 10).is_err());
        assert!(make_grid(10.0, 10).is_ok());
    }

    #[test]
    fn constant_field_concentrates_at_zero_frequency() {
        let g = make_grid(6.0, 8).unwrap();
        let s = fft3(&RealField::constant(g, 2.0));
        assert!((s.coeffs()[0].re - 2.0 * 512.0).abs() < 1e-10);
        for c in &s.coeffs()[1..] {
            assert!(c.norm() < 1e-11);
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let g = make_grid(6.0, 8).unwrap();
        let mut f = RealField::zeros(g);
        let o = g.origin_index();
        f.samples_mut()[o] = 1.0;
        for c in fft3(&f).coeffs() {
            assert!((c.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_sine_mode() {
        let g = make_grid(10.0, 16).unwrap();
        let w = 2.0 * PI / g.side();
        let f = RealField::from_fn(g, |x| (w * x[0]).sin());
        let d = spectral_derivative(&f, Axis::X1);
        let want = RealField::from_fn(g, |x| w * (w * x[0]).cos());
        let err = d.samples().iter().zip(want.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        let d2 = spectral_derivative(&f, Axis::X2);
        assert!(d2.max_abs() < 1e-13);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = make_grid(10.0, 12).unwrap();
        let f = RealField::constant(g, 3.5);
        for a in Axis::ALL {
            assert!(spectral_derivative(&f, a).max_abs() < 1e-14);
        }
    }

    #[test]
    fn radial_derivative_is_odd() {
        let g = make_grid(12.0, 24).unwrap();
        let f = RealField::from_fn(g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 3.0).exp());
        let d = spectral_derivative(&f, Axis::X1);
        let h = (g.n() / 2) as i64;
        for j1 in -h + 1..h {
            for j2 in [-3, 0, 5] {
                let a = d.at([j1, j2, 1]);
                let b = d.at([-j1, j2, 1]);
                assert!((a + b).abs() < 1e-13, "{j1} {j2}: {a} {b}");
            }
        }
    }

    #[test]
    fn box_volume_and_orthogonality() {
        let g = make_grid(10.0, 10).unwrap();
        let one = RealField::constant(g, 1.0);
        assert!((inner_product(&one, &one).unwrap() - 1000.0).abs() < 1e-10);
        let w = 2.0 * PI / g.side();
        let a = RealField::from_fn(g, |x| (w * x[0]).sin());
        let b = RealField::from_fn(g, |x| (2.0 * w * x[0]).sin());
        assert!(inner_product(&a, &b).unwrap().abs() < 1e-13);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = RealField::zeros(make_grid(6.0, 8).unwrap());
        let b = RealField::zeros(make_grid(8.0, 8).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch { .. })));
        assert!(RealField::from_samples(*a.grid(), vec![0.0; 10]).is_err());
        assert!(RealField::from_samples(*a.grid(), vec![f64::NAN; 512]).is_err());
    }

    #[test]
    fn storage_index_wraps() {
        let g = make_grid(8.0, 8).unwrap();
        assert_eq!(g.storage_index(0), 4);
        assert_eq!(g.storage_index(-4), 0);
        assert_eq!(g.storage_index(4), 0);
        assert_eq!(g.storage_index(3), 7);
        assert_eq!(g.frequency_index(4), -4);
        assert_eq!(g.frequency_index(3), 3);
    }
}
