use std::sync::Arc;

use nlsgap_core::eigensolver::symmetric_eigen;
use nlsgap_core::grid::spectral_inner;
use nlsgap_core::io::{read_field_from, write_field_to};
use nlsgap_core::soliton::{compute_m, signed_power};
use nlsgap_core::special::apply_inverse_laplacian;
use nlsgap_core::{
    apply_bs, cluster_multiplicities, fft3, greens_weights, ifft3, inner_product, make_bs_operator, make_grid,
    spectral_derivative, Axis, CubicFit, GridSpec, RealField, Sign,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_strategy() -> impl Strategy<Value = GridSpec> {
    (prop::sample::select(vec![4usize, 6, 8, 10]), 0.2..1.0f64).prop_map(|(n, s)| make_grid(s * n as f64, n).unwrap())
}

fn random_field(g: GridSpec, rng: &mut ChaCha8Rng) -> RealField {
    RealField::from_samples(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Positive radial profile, invariant under the signed axis permutations.
fn radial_potential(g: GridSpec, rng: &mut ChaCha8Rng) -> RealField {
    let (a, w) = (rng.gen_range(0.5..4.0), rng.gen_range(0.2..1.5));
    RealField::from_fn(g, |x| a * (-w * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp() + 0.05)
}

fn max_diff(a: &RealField, b: &RealField) -> f64 {
    a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fft_round_trip(g in grid_strategy(), seed in any::<u64>()) {
        let f = random_field(g, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(max_diff(&ifft3(&fft3(&f)), &f) <= 1e-13);
    }

    #[test]
    fn parseval(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
        let phys = inner_product(&f, &h).unwrap();
        let spec = spectral_inner(&fft3(&f), &fft3(&h)).unwrap();
        prop_assert!(close(phys, spec, 1e-12), "{} {}", phys, spec);
    }

    #[test]
    fn derivative_is_linear_and_skew(g in grid_strategy(), seed in any::<u64>(), a in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
        for axis in [Axis::X1, Axis::X2, Axis::X3] {
            let mut sum = f.clone();
            sum.axpy(a, &h).unwrap();
            let mut want = spectral_derivative(&f, axis);
            want.axpy(a, &spectral_derivative(&h, axis)).unwrap();
            prop_assert!(max_diff(&spectral_derivative(&sum, axis), &want) <= 1e-10 * (1.0 + want.max_abs()));
            let lhs = inner_product(&spectral_derivative(&f, axis), &h).unwrap();
            let rhs = -inner_product(&f, &spectral_derivative(&h, axis)).unwrap();
            prop_assert!(close(lhs, rhs, 1e-11), "{} {}", lhs, rhs);
        }
        let c = spectral_derivative(&RealField::constant(g, 2.5), Axis::X2);
        prop_assert!(c.max_abs() <= 1e-12);
    }

    #[test]
    fn inverse_laplacian_is_symmetric_positive(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let green = greens_weights(g);
        let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
        let (gf, gh) = (apply_inverse_laplacian(&f, &green).unwrap(), apply_inverse_laplacian(&h, &green).unwrap());
        let (a, b) = (inner_product(&gf, &h).unwrap(), inner_product(&f, &gh).unwrap());
        prop_assert!(close(a, b, 1e-12), "{} {}", a, b);
        prop_assert!(inner_product(&gf, &f).unwrap() > 0.0);
    }

    #[test]
    fn bs_operator_properties(g in grid_strategy(), seed in any::<u64>(), beta in 0.5..1.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let green = Arc::new(greens_weights(g));
        let phi = radial_potential(g, &mut rng);
        let minus = make_bs_operator(&phi, beta, Sign::Minus, green.clone()).unwrap();
        let plus = make_bs_operator(&phi, beta, Sign::Plus, green.clone()).unwrap();
        let (f, h) = (random_field(g, &mut rng), random_field(g, &mut rng));
        let (kf, kh) = (apply_bs(&minus, &f).unwrap(), apply_bs(&minus, &h).unwrap());

        let (a, b) = (inner_product(&kf, &h).unwrap(), inner_product(&f, &kh).unwrap());
        prop_assert!(close(a, b, 1e-12), "symmetry {} {}", a, b);
        prop_assert!(inner_product(&kf, &f).unwrap() > 0.0);

        let mut scaled = kf.clone();
        scaled.scale(2.0 * beta + 1.0);
        prop_assert!(max_diff(&apply_bs(&plus, &f).unwrap(), &scaled) <= 1e-12 * (1.0 + scaled.max_abs()));

        // Rotations of the lattice commute with an operator built on a radial profile.
        let perm = [[1, 2, 0], [2, 1, 0], [0, 2, 1]][rng.gen_range(0..3)];
        let flip = [rng.gen(), rng.gen(), rng.gen()];
        let lhs = apply_bs(&minus, &f.transform_axes(perm, flip)).unwrap();
        let rhs = kf.transform_axes(perm, flip);
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn bs_operator_scales_with_amplitude(g in grid_strategy(), seed in any::<u64>(), beta in 0.5..1.5f64, c in 0.2..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let green = Arc::new(greens_weights(g));
        let phi = radial_potential(g, &mut rng);
        let mut big = phi.clone();
        big.scale(c);
        let f = random_field(g, &mut rng);
        let a = apply_bs(&make_bs_operator(&phi, beta, Sign::Minus, green.clone()).unwrap(), &f).unwrap();
        let mut want = a.clone();
        want.scale(c.powf(2.0 * beta));
        let got = apply_bs(&make_bs_operator(&big, beta, Sign::Minus, green).unwrap(), &f).unwrap();
        prop_assert!(max_diff(&got, &want) <= 1e-12 * (1.0 + want.max_abs()));
    }

    #[test]
    fn stabilizing_factor_is_homogeneous(g in grid_strategy(), seed in any::<u64>(), beta in 0.5..1.5f64, c in 0.2..5.0f64) {
        let phi = radial_potential(g, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut big = phi.clone();
        big.scale(c);
        let (m, mc) = (compute_m(&phi, beta).unwrap(), compute_m(&big, beta).unwrap());
        prop_assert!(close(mc, m * c.powf(-2.0 * beta), 1e-12), "{} {}", mc, m);
    }

    #[test]
    fn signed_power_is_odd(v in -10.0..10.0f64, beta in 0.1..2.0f64) {
        prop_assert_eq!(signed_power(-v, beta), -signed_power(v, beta));
        prop_assert!(signed_power(v, beta) * v >= 0.0);
    }

    #[test]
    fn clusters_partition_in_order(mut values in prop::collection::vec(-5.0..5.0f64, 1..20), tol in 1e-10..1e-1f64) {
        values.sort_by(|a, b| b.total_cmp(a));
        let clusters = cluster_multiplicities(&values, tol);
        let flat: Vec<usize> = clusters.iter().flatten().copied().collect();
        prop_assert_eq!(flat, (0..values.len()).collect::<Vec<_>>());
        let eps = tol * values[0].abs().max(1.0);
        for c in &clusters {
            prop_assert!(values[c[0]] - values[*c.last().unwrap()] <= eps * c.len() as f64);
        }
        for w in clusters.windows(2) {
            prop_assert!(values[*w[0].last().unwrap()] - values[w[1][0]] > eps);
        }
    }

    #[test]
    fn jacobi_diagonalizes(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        let (vals, vecs) = symmetric_eigen(&a);
        prop_assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let trace: f64 = (0..n).map(|i| a[i][i]).sum();
        prop_assert!(close(trace, vals.iter().sum(), 1e-12));
        for (k, lam) in vals.iter().enumerate() {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[i][j] * vecs[j][k]).sum();
                prop_assert!((av - lam * vecs[i][k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cubic_fit_reproduces_cubics(c in prop::array::uniform4(-2.0..2.0f64), lo in 0.5..1.0f64, w in 0.01..0.5f64) {
        let p = |b: f64| ((c[3] * b + c[2]) * b + c[1]) * b + c[0];
        let xs = [lo, lo + 0.3 * w, lo + 0.65 * w, lo + w];
        let table = xs.map(|b| (b, p(b)));
        let fit = CubicFit::through(&table, 0.0).unwrap();
        let scale = c.iter().map(|v| v.abs()).sum::<f64>() * 8.0;
        for k in 0..=10 {
            let b = lo + w * k as f64 / 10.0;
            prop_assert!((fit.eval(b) - p(b)).abs() <= 1e-11 * scale, "{} {}", fit.eval(b), p(b));
        }
        for r in fit.roots() {
            prop_assert!(r >= lo - 1e-12 && r <= lo + w + 1e-12);
            prop_assert!(fit.eval(r).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn field_dump_round_trips(g in grid_strategy(), seed in any::<u64>()) {
        let f = random_field(g, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut buf = Vec::new();
        write_field_to(&mut buf, &f).unwrap();
        prop_assert_eq!(buf.len(), 4 + 4 + 8 + 4 + 8 * g.len());
        let back = read_field_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.grid(), f.grid());
        prop_assert!(back.samples().iter().zip(f.samples()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
