//! Seeded random probes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::GradientTerm;
use crate::phase_space::{GridSpec, KernelGrid};
use crate::C64;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn entry(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| entry(rng)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n, n);
    // column-major fill, fixed order
    for v in m.iter_mut() {
        *v = entry(rng);
    }
    m
}

/// Kernel of a random operator with unit HS norm.
pub fn random_kernel(rng: &mut ChaCha8Rng, grid: GridSpec) -> KernelGrid {
    let k = KernelGrid::from_operator(grid, random_matrix(rng, grid.points())).expect("square");
    let n = k.hs_norm();
    k.scale(C64::new(1.0 / n, 0.0))
}

/// Kernel of a random operator with operator norm 1.
pub fn random_unit_operator(rng: &mut ChaCha8Rng, grid: GridSpec) -> KernelGrid {
    let m = random_matrix(rng, grid.points());
    let s = m.clone().singular_values().max();
    KernelGrid::from_operator(grid, m / C64::new(s, 0.0)).expect("square")
}

/// Random density matrix AA*/Tr(AA*) of the given rank.
pub fn random_psd(rng: &mut ChaCha8Rng, grid: GridSpec, rank: usize) -> KernelGrid {
    let np = grid.points();
    let mut a = DMatrix::zeros(np, rank);
    for v in a.iter_mut() {
        *v = entry(rng);
    }
    let rho = &a * a.adjoint();
    let tr: C64 = rho.trace();
    KernelGrid::from_operator(grid, rho / tr).expect("square")
}

/// A random gauge function: linear part plus a Gaussian bump.
pub fn random_gauge(rng: &mut ChaCha8Rng) -> (GradientTerm, GradientTerm) {
    let k = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let c = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    let amp = rng.random_range(-2.0..2.0);
    let width = rng.random_range(0.5..1.5);
    (GradientTerm::linear(k), GradientTerm::gaussian_bump(amp, c, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::make_grid;

    #[test]
    fn reproducible_and_normalized() {
        let g = make_grid(1, 16, 2.0).unwrap();
        let a = random_psd(&mut seeded(7), g, 3);
        let b = random_psd(&mut seeded(7), g, 3);
        assert_eq!(a, b);
        assert!((a.trace() - C64::new(1.0, 0.0)).norm() < 1e-13);
        let ev = a.operator_matrix().symmetric_eigenvalues();
        assert!(ev.min() > -1e-14);
        let u = random_unit_operator(&mut seeded(1), g);
        assert!((u.operator_matrix().singular_values().max() - 1.0).abs() < 1e-12);
        assert!((random_kernel(&mut seeded(2), g).hs_norm() - 1.0).abs() < 1e-12);
    }
}
