#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdeig::gallery::{grcar, kahan, pentoep};
use sdeig::kernel::{shift, sigma_min};
use sdeig::{DenseMatrix, C64};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn named_matrices() -> Vec<(&'static str, DenseMatrix)> {
    vec![
        ("grcar(32)", grcar(32, 3).unwrap()),
        ("kahan(32)", kahan(32, 1.2).unwrap()),
        ("pentoep(32,0,0.5,0,0,1)", pentoep(32, 0.0, 0.5, 0.0, 0.0, 1.0).unwrap()),
    ]
}

pub fn sigma(a: &DenseMatrix, z: C64) -> f64 {
    sigma_min(&shift(a, z)).unwrap()
}

/// Central differences of `σ_min` in x and y.
pub fn fd_gradient(a: &DenseMatrix, z: C64, h: f64) -> C64 {
    let gx = (sigma(a, z + c(h, 0.0)) - sigma(a, z - c(h, 0.0))) / (2.0 * h);
    let gy = (sigma(a, z + c(0.0, h)) - sigma(a, z - c(0.0, h))) / (2.0 * h);
    c(gx, gy)
}

/// Second-order central differences `(g_xx, g_xy, g_yy)`.
pub fn fd_hessian(a: &DenseMatrix, z: C64, h: f64) -> (f64, f64, f64) {
    let s = |dx: f64, dy: f64| sigma(a, z + c(dx * h, dy * h));
    let s0 = s(0.0, 0.0);
    let gxx = (s(1.0, 0.0) - 2.0 * s0 + s(-1.0, 0.0)) / (h * h);
    let gyy = (s(0.0, 1.0) - 2.0 * s0 + s(0.0, -1.0)) / (h * h);
    let gxy = (s(1.0, 1.0) - s(1.0, -1.0) - s(-1.0, 1.0) + s(-1.0, -1.0)) / (4.0 * h * h);
    (gxx, gxy, gyy)
}

/// Smallest singular value by inverse iteration on `MᴴM`, independent of any SVD.
pub fn sigma_min_inverse_iteration(m: &DenseMatrix, iters: usize) -> f64 {
    let mm: &DMatrix<C64> = m.as_dmatrix();
    let b = mm.adjoint() * mm;
    let lu = b.clone().lu();
    let n = b.nrows();
    let mut x = DVector::from_fn(n, |i, _| c(1.0 + i as f64 * 0.01, 0.3 - i as f64 * 0.002));
    x /= c(x.norm(), 0.0);
    for _ in 0..iters {
        let y = lu.solve(&x).expect("nonsingular");
        x = &y / c(y.norm(), 0.0);
    }
    // Rayleigh quotient of MᴴM equals ‖Mx‖² for unit x.
    (mm * &x).norm()
}

/// Uniform point in the rectangle.
pub fn random_point(r: &mut ChaCha8Rng, x: (f64, f64), y: (f64, f64)) -> C64 {
    c(r.random_range(x.0..x.1), r.random_range(y.0..y.1))
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}
