//! Top eigenpairs of symmetric matrix-free operators.
//!
//! Thick-restart block Lanczos with full reorthogonalization: the basis is
//! grown by applying the operator to the newest block and orthogonalizing
//! (classical Gram-Schmidt, twice) against everything kept; Ritz pairs come
//! from the projected matrix `V^T K V`, diagonalized by cyclic Jacobi. On
//! restart the `k + 4` leading Ritz vectors are kept and the next block is
//! made of the residuals of the unconverged ones, padded with fresh random
//! directions.
//!
//! A block size above the largest multiplicity lets degenerate eigenvalues
//! appear with their full multiplicity; a single Krylov vector only ever
//! sees one direction of each eigenspace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{det_sum, GridSpec, RealField};

/// A symmetric operator acting on raw sample vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Applies the operator to several vectors; implementations may batch.
    fn apply_block(&self, xs: &[&[f64]], ys: &mut [Vec<f64>]) {
        for (x, y) in xs.iter().zip(ys.iter_mut()) {
            self.apply(x, y);
        }
    }
}

impl<F> LinearOperator for (usize, F)
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.1)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Relative residual `||K v - lambda v|| / |lambda|` required of every pair.
    pub tol: f64,
    pub max_restarts: usize,
    /// Largest basis size; defaults to `min(2k + 10, 40)`.
    pub basis_dim: Option<usize>,
    pub block_size: usize,
    pub seed: u64,
    /// Relative gap below which neighbouring eigenvalues form one cluster.
    pub cluster_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_restarts: 300, basis_dim: None, block_size: 4, seed: 0, cluster_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenSet {
    /// Eigenvalues, non-increasing.
    pub values: Vec<f64>,
    /// Eigenfields, orthonormal in the weighted discrete inner product.
    pub fields: Vec<RealField>,
    /// `||K v - lambda v|| / ||v||`, from a fresh application of the operator.
    pub residuals: Vec<f64>,
    /// Number of restarts performed.
    pub iterations: usize,
    /// Operator applications, including the symmetry probe.
    pub applications: usize,
    /// Groups of (0-based) indices with numerically equal eigenvalues.
    pub clusters: Vec<Vec<usize>>,
    /// Leading Ritz value after each restart.
    pub lambda1_history: Vec<f64>,
    pub converged: bool,
}

impl EigenSet {
    /// Largest relative spread `(max - min) / max` inside any cluster of
    /// size > 1.
    pub fn max_cluster_spread(&self) -> f64 {
        cluster_spread(&self.values, &self.clusters)
    }
}

/// Largest relative spread inside the clusters of size > 1.
pub fn cluster_spread(values: &[f64], clusters: &[Vec<usize>]) -> f64 {
    clusters
        .iter()
        .filter(|c| c.len() > 1)
        .map(|c| {
            let hi = c.iter().map(|&i| values[i]).fold(f64::NEG_INFINITY, f64::max);
            let lo = c.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
            (hi - lo) / hi.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Greedy grouping of sorted values: neighbours join a cluster when
/// `|v_i - v_{i+1}| <= rel_tol * max(|v_0|, 1)`.
pub fn cluster_multiplicities(values: &[f64], rel_tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let Some(first) = values.first() else {
        return out;
    };
    let tol = rel_tol * first.abs().max(1.0);
    for (i, v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (values[i - 1] - v).abs() <= tol => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    det_sum(a.len(), |i| a[i] * b[i])
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `sum_j c_j v_j`.
fn combine(vectors: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let n = vectors[0].len();
    let mut out = vec![0.0; n];
    out.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
        let start = c * 4096;
        let len = chunk.len();
        for (v, &w) in vectors.iter().zip(coeffs) {
            if w == 0.0 {
                continue;
            }
            for (o, x) in chunk.iter_mut().zip(&v[start..start + len]) {
                *o += w * x;
            }
        }
    });
    out
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Orthogonalizes `v` against the orthonormal `basis` twice; returns the
/// norm ratio after/before.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    let before = norm(v);
    if before == 0.0 {
        return 0.0;
    }
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(b, v)).collect();
        if !basis.is_empty() {
            let proj = combine(basis, &coeffs);
            v.par_iter_mut().zip(proj.par_iter()).for_each(|(x, p)| *x -= p);
        }
    }
    norm(v) / before
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.
/// Returns eigenvalues in non-increasing order and the matching
/// eigenvectors as columns (`vecs[row][col]`).
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vecs)
}

struct Krylov<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    basis: Vec<Vec<f64>>,
    images: Vec<Vec<f64>>,
    projected: Vec<Vec<f64>>,
    applications: usize,
}

impl<O: LinearOperator + ?Sized> Krylov<'_, O> {
    fn apply_all(&mut self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.op.dim();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let mut ys = vec![vec![0.0; n]; xs.len()];
        self.op.apply_block(&refs, &mut ys);
        self.applications += xs.len();
        ys
    }

    /// Appends orthonormalized `block` (with images) and extends the
    /// projected matrix.
    fn push_block(&mut self, block: Vec<Vec<f64>>) {
        let old = self.basis.len();
        let images = self.apply_all(&block);
        for (v, w) in block.into_iter().zip(images) {
            self.basis.push(v);
            self.images.push(w);
        }
        let m = self.basis.len();
        for row in self.projected.iter_mut() {
            row.resize(m, 0.0);
        }
        self.projected.resize(m, vec![0.0; m]);
        for j in old..m {
            for i in 0..=j {
                let h = dot(&self.basis[i], &self.images[j]);
                if i >= old {
                    // Both new: average the two available products.
                    let g = 0.5 * (h + dot(&self.basis[j], &self.images[i]));
                    self.projected[i][j] = g;
                    self.projected[j][i] = g;
                } else {
                    self.projected[i][j] = h;
                    self.projected[j][i] = h;
                }
            }
        }
    }
}

/// Top `k` eigenpairs of a symmetric positive operator on the grid.
pub fn top_eigs<O: LinearOperator + ?Sized>(
    op: &O,
    grid: GridSpec,
    k: usize,
    opts: &EigenOptions,
) -> Result<EigenSet> {
    top_eigs_from(op, grid, k, opts, &[])
}

/// As [`top_eigs`], seeding the first block with `start` (typically the
/// eigenfields of a nearby operator) before any random directions.
pub fn top_eigs_from<O: LinearOperator + ?Sized>(
    op: &O,
    grid: GridSpec,
    k: usize,
    opts: &EigenOptions,
    start: &[RealField],
) -> Result<EigenSet> {
    let n = op.dim();
    if n != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), found: n });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot compute {k} eigenpairs of a {n}-dimensional operator")));
    }
    if !(opts.tol > 0.0) || opts.block_size == 0 {
        return Err(Error::InvalidParameter("tolerance and block size must be positive".into()));
    }
    let block = opts.block_size.min(n);
    let keep = (k + 4).min(n);
    let m = opts.basis_dim.unwrap_or((2 * k + 10).min(40)).max(keep + block).min(n);
    let keep = keep.min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut applications = symmetry_probe(op, &mut rng)?;
    let mut kr = Krylov { op, basis: Vec::new(), images: Vec::new(), projected: Vec::new(), applications: 0 };

    if let Some(f) = start.iter().find(|f| *f.grid() != grid) {
        return Err(Error::GridMismatch { expected: (grid.side(), grid.n()), found: (f.grid().side(), f.grid().n()) });
    }
    let mut pending: Vec<Vec<f64>> = start.iter().map(|f| f.samples().to_vec()).collect();
    while pending.len() < block {
        pending.push(random_vector(&mut rng, n));
    }
    let mut lambda1_history = Vec::new();
    let mut restarts = 0;
    let mut refreshed = false;

    loop {
        // Grow the basis to its full size.
        while kr.basis.len() < m {
            let room = m - kr.basis.len();
            let mut accepted: Vec<Vec<f64>> = Vec::new();
            for mut v in pending.drain(..) {
                if accepted.len() == room {
                    break;
                }
                let mut all = kr.basis.clone();
                all.extend(accepted.iter().cloned());
                let mut ratio = orthogonalize(&mut v, &all);
                let mut tries = 0;
                while ratio < 1e-8 && tries < 5 {
                    v = random_vector(&mut rng, n);
                    ratio = orthogonalize(&mut v, &all);
                    tries += 1;
                }
                if ratio < 1e-8 {
                    continue;
                }
                let s = 1.0 / norm(&v);
                v.par_iter_mut().for_each(|x| *x *= s);
                accepted.push(v);
            }
            if accepted.is_empty() {
                break;
            }
            let start = kr.basis.len();
            kr.push_block(accepted);
            pending = kr.images[start..].to_vec();
        }

        // Rayleigh-Ritz.
        let (theta, y) = symmetric_eigen(&kr.projected);
        let mlen = kr.basis.len();
        let keep_now = keep.min(mlen);
        let mut ritz = Vec::with_capacity(keep_now);
        let mut ritz_images = Vec::with_capacity(keep_now);
        let mut residuals = Vec::with_capacity(keep_now);
        let mut residual_vecs = Vec::with_capacity(keep_now);
        for c in 0..keep_now {
            let coeffs: Vec<f64> = (0..mlen).map(|r| y[r][c]).collect();
            let v = combine(&kr.basis, &coeffs);
            let w = combine(&kr.images, &coeffs);
            let r: Vec<f64> = w.par_iter().zip(v.par_iter()).map(|(a, b)| a - theta[c] * b).collect();
            residuals.push(norm(&r));
            residual_vecs.push(r);
            ritz.push(v);
            ritz_images.push(w);
        }
        lambda1_history.push(theta[0]);
        let done = |i: usize| residuals[i] <= opts.tol * theta[i].abs().max(f64::MIN_POSITIVE);
        let all_done = (0..k).all(done);

        if all_done && !refreshed {
            // Recompute images from scratch so accumulated round-off in the
            // restarted images cannot fake convergence.
            kr.basis = ritz;
            kr.images = kr.apply_all(&kr.basis.clone());
            kr.projected = (0..keep_now)
                .map(|i| (0..keep_now).map(|j| dot(&kr.basis[i], &kr.images[j])).collect())
                .collect();
            for i in 0..keep_now {
                for j in 0..i {
                    let s = 0.5 * (kr.projected[i][j] + kr.projected[j][i]);
                    kr.projected[i][j] = s;
                    kr.projected[j][i] = s;
                }
            }
            refreshed = true;
            // Skip expansion: evaluate the refreshed subspace directly.
            let (theta, y) = symmetric_eigen(&kr.projected);
            let mut vals = Vec::with_capacity(k);
            let mut vecs = Vec::with_capacity(k);
            let mut res = Vec::with_capacity(k);
            for c in 0..k {
                let coeffs: Vec<f64> = (0..keep_now).map(|r| y[r][c]).collect();
                let v = combine(&kr.basis, &coeffs);
                let w = combine(&kr.images, &coeffs);
                let r: Vec<f64> = w.par_iter().zip(v.par_iter()).map(|(a, b)| a - theta[c] * b).collect();
                vals.push(theta[c]);
                res.push(norm(&r) / norm(&v));
                vecs.push(v);
            }
            let ok = (0..k).all(|i| res[i] <= opts.tol * vals[i].abs().max(f64::MIN_POSITIVE));
            if ok || restarts >= opts.max_restarts {
                applications += kr.applications;
                return Ok(finish(grid, vals, vecs, res, restarts, applications, lambda1_history, ok, opts));
            }
            // Continue from the refreshed subspace with its residuals.
            pending = (0..k)
                .filter(|&i| res[i] > opts.tol * vals[i].abs())
                .map(|i| {
                    let coeffs: Vec<f64> = (0..keep_now).map(|r| y[r][i]).collect();
                    let v = combine(&kr.basis, &coeffs);
                    let w = combine(&kr.images, &coeffs);
                    w.iter().zip(&v).map(|(a, b)| a - vals[i] * b).collect()
                })
                .collect();
            while pending.len() < block {
                pending.push(random_vector(&mut rng, n));
            }
            restarts += 1;
            continue;
        }

        if restarts >= opts.max_restarts {
            let vals = theta[..k].to_vec();
            let vecs = ritz[..k].to_vec();
            let res: Vec<f64> = (0..k)
                .map(|i| {
                    let mut w = vec![0.0; n];
                    op.apply(&vecs[i], &mut w);
                    applications += 1;
                    let r: Vec<f64> = w.iter().zip(&vecs[i]).map(|(a, b)| a - vals[i] * b).collect();
                    norm(&r)
                })
                .collect();
            applications += kr.applications;
            return Ok(finish(grid, vals, vecs, res, restarts, applications, lambda1_history, false, opts));
        }

        // Thick restart.
        restarts += 1;
        refreshed = false;
        kr.basis = ritz;
        kr.images = ritz_images;
        kr.projected = (0..keep_now)
            .map(|i| (0..keep_now).map(|j| if i == j { theta[i] } else { 0.0 }).collect())
            .collect();
        pending = (0..keep_now)
            .filter(|&i| !done(i) && residuals[i] > 0.0)
            .take(block)
            .map(|i| residual_vecs[i].clone())
            .collect();
        while pending.len() < block {
            pending.push(random_vector(&mut rng, n));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    grid: GridSpec,
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    iterations: usize,
    applications: usize,
    lambda1_history: Vec<f64>,
    converged: bool,
    opts: &EigenOptions,
) -> EigenSet {
    let w = 1.0 / grid.cell_volume().sqrt();
    let fields = vectors
        .into_iter()
        .map(|mut v| {
            let s = w / norm(&v);
            v.iter_mut().for_each(|x| *x *= s);
            RealField::from_samples(grid, v).expect("finite Ritz vector")
        })
        .collect();
    let clusters = cluster_multiplicities(&values, opts.cluster_tol);
    EigenSet { values, fields, residuals, iterations, applications, clusters, lambda1_history, converged }
}

/// Checks `<Kf, g> = <f, Kg>` on three random pairs.
fn symmetry_probe<O: LinearOperator + ?Sized>(op: &O, rng: &mut ChaCha8Rng) -> Result<usize> {
    let n = op.dim();
    for _ in 0..3 {
        let f = random_vector(rng, n);
        let g = random_vector(rng, n);
        let mut out = vec![vec![0.0; n]; 2];
        op.apply_block(&[&f, &g], &mut out);
        let (kf, kg) = (&out[0], &out[1]);
        let a = dot(kf, &g);
        let b = dot(&f, kg);
        let scale = norm(kf) * norm(&g) + norm(&f) * norm(kg);
        let defect = (a - b).abs();
        if defect > 1e-10 * scale {
            return Err(Error::NotSymmetric { defect });
        }
    }
    Ok(6)
}
