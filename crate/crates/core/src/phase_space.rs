//! Uniform phase-space grids, sampled symbols and operator kernels.
//!
//! Position nodes are x_k = -L + kΔx and momentum nodes ξ_m = (m - N/2)Δξ for
//! k, m in 0..N, with Δx = 2L/N and Δξ = 2π/(NΔx). Symbol samples are stored
//! row-major with all position axes first.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fft;
use crate::weights::TemperedWeight;
use crate::C64;

pub const BOUNDARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

pub fn make_grid(d: usize, n: usize, l: f64) -> Result<GridSpec> {
    if d != 1 && d != 2 {
        return Err(Error::InvalidGrid(format!("d = {d}, expected 1 or 2")));
    }
    if n < 8 || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(format!("N = {n} must be a power of two >= 8")));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidGrid(format!("L = {l} must be positive")));
    }
    Ok(GridSpec { d, n, l })
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    pub fn dxi(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n as f64 * self.dx())
    }

    /// Spacing of the midpoint grid used internally by the kernel transform.
    pub fn half_dx(&self) -> f64 {
        0.5 * self.dx()
    }

    /// Number of grid nodes per unit length when the integer lattice lies on the grid.
    pub fn lattice_step(&self) -> Option<usize> {
        let k = 1.0 / self.dx();
        let kr = k.round();
        if kr >= 1.0 && (k - kr).abs() < 1e-9 && (self.l - self.l.round()).abs() < 1e-9 {
            Some(kr as usize)
        } else {
            None
        }
    }

    /// Nodes per configuration space, N^d.
    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Samples per symbol, N^{2d}.
    pub fn symbol_len(&self) -> usize {
        self.points() * self.points()
    }

    pub fn symbol_shape(&self) -> Vec<usize> {
        vec![self.n; 2 * self.d]
    }

    #[inline]
    pub fn x_coord(&self, k: usize) -> f64 {
        -self.l + k as f64 * self.dx()
    }

    #[inline]
    pub fn xi_coord(&self, m: usize) -> f64 {
        (m as f64 - (self.n / 2) as f64) * self.dxi()
    }

    /// Per-axis indices of a flat configuration index.
    #[inline]
    pub fn unflatten(&self, p: usize) -> [usize; 2] {
        if self.d == 1 {
            [p, 0]
        } else {
            [p / self.n, p % self.n]
        }
    }

    #[inline]
    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        if self.d == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    /// Coordinates of flat position node `p` (trailing slot zero for d = 1).
    #[inline]
    pub fn position(&self, p: usize) -> [f64; 2] {
        let i = self.unflatten(p);
        if self.d == 1 {
            [self.x_coord(i[0]), 0.0]
        } else {
            [self.x_coord(i[0]), self.x_coord(i[1])]
        }
    }

    #[inline]
    pub fn momentum(&self, m: usize) -> [f64; 2] {
        let i = self.unflatten(m);
        if self.d == 1 {
            [self.xi_coord(i[0]), 0.0]
        } else {
            [self.xi_coord(i[0]), self.xi_coord(i[1])]
        }
    }

    /// Flat position index of the node at `x`, if `x` is a node.
    pub fn node_index(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for a in 0..self.d {
            let t = (x[a] + self.l) / self.dx();
            let r = t.round();
            if (t - r).abs() > 1e-9 || r < 0.0 || r >= self.n as f64 {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(self.flatten(idx))
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Samples of a phase-space symbol.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    pub grid: GridSpec,
    pub data: Vec<C64>,
    pub weight: Option<TemperedWeight>,
    boundary_mass: f64,
}

/// Shell mass ratios: index 0 is the full outer shell, then one entry per axis.
fn shell_masses(grid: &GridSpec, data: &[C64]) -> (f64, Vec<f64>) {
    let n = grid.n;
    let naxes = 2 * grid.d;
    let mut total = 0.0;
    let mut shell = 0.0;
    let mut per_axis = vec![0.0; naxes];
    let mut idx = vec![0usize; naxes];
    for v in data {
        let a = v.norm();
        total += a;
        let mut on = false;
        for (ax, &i) in idx.iter().enumerate() {
            if i == 0 || i == n - 1 {
                per_axis[ax] += a;
                on = true;
            }
        }
        if on {
            shell += a;
        }
        for ax in (0..naxes).rev() {
            idx[ax] += 1;
            if idx[ax] < n {
                break;
            }
            idx[ax] = 0;
        }
    }
    if total == 0.0 {
        return (0.0, per_axis);
    }
    (shell / total, per_axis.into_iter().map(|m| m / total).collect())
}

impl SymbolGrid {
    pub fn new(grid: GridSpec, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.symbol_len() {
            return Err(Error::GridMismatch(format!("{} samples for a grid of {}", data.len(), grid.symbol_len())));
        }
        let (boundary_mass, _) = shell_masses(&grid, &data);
        Ok(Self { grid, data, weight: None, boundary_mass })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![C64::new(0.0, 0.0); grid.symbol_len()], weight: None, boundary_mass: 0.0 }
    }

    pub fn constant(grid: GridSpec, c: C64) -> Self {
        Self::new(grid, vec![c; grid.symbol_len()]).expect("length matches")
    }

    /// Samples `f(x, ξ)` at every node; both arguments have length `d`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64], &[f64]) -> C64) -> Self {
        let np = grid.points();
        let d = grid.d;
        let mut data = Vec::with_capacity(grid.symbol_len());
        for p in 0..np {
            let x = grid.position(p);
            for m in 0..np {
                let xi = grid.momentum(m);
                data.push(f(&x[..d], &xi[..d]));
            }
        }
        Self::new(grid, data).expect("length matches")
    }

    pub fn with_weight(mut self, w: TemperedWeight) -> Self {
        self.weight = Some(w);
        self
    }

    /// Fraction of total |samples| on the outermost shell, recorded at construction.
    pub fn boundary_mass(&self) -> f64 {
        self.boundary_mass
    }

    /// Per-axis boundary mass (position axes first).
    pub fn axis_boundary_mass(&self) -> Vec<f64> {
        shell_masses(&self.grid, &self.data).1
    }

    pub fn is_constant(&self) -> bool {
        self.data.iter().all(|v| *v == self.data[0])
    }

    /// Errors with the first axis whose boundary mass exceeds `tol`.
    pub fn check_decay(&self, tol: f64) -> Result<()> {
        for (axis, mass) in self.axis_boundary_mass().into_iter().enumerate() {
            if mass > tol {
                return Err(Error::Aliasing { axis, mass, tol });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, p: usize, m: usize) -> C64 {
        self.data[p * self.grid.points() + m]
    }

    /// L² norm with the phase-space cell weight (ΔxΔξ)^d.
    pub fn norm_l2(&self) -> f64 {
        let w = (self.grid.dx() * self.grid.dxi()).powi(self.grid.d as i32);
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// ‖self − other‖₂ / ‖other‖₂.
    pub fn rel_diff(&self, other: &SymbolGrid) -> f64 {
        let num: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.data.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self::new(self.grid, self.data.iter().map(|v| f(*v)).collect()).expect("same length")
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|v| v * c)
    }

    pub fn zip_with(&self, other: &SymbolGrid, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Self::new(self.grid, self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn add(&self, other: &SymbolGrid) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymbolGrid) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &SymbolGrid) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }
}

fn symbol_vars(d: usize) -> &'static [&'static str] {
    if d == 1 {
        &["x", "xi", "x1", "xi1"]
    } else {
        &["x1", "x2", "xi1", "xi2"]
    }
}

/// Samples an expression in `x, xi` (d = 1, also `x1, xi1`) or `x1, x2, xi1, xi2` (d = 2).
pub fn sample_symbol(src: &str, grid: GridSpec) -> Result<SymbolGrid> {
    let e = Expr::parse(src, symbol_vars(grid.d))?;
    let np = grid.points();
    let mut data = Vec::with_capacity(grid.symbol_len());
    for p in 0..np {
        let x = grid.position(p);
        for m in 0..np {
            let xi = grid.momentum(m);
            let vars = if grid.d == 1 { [x[0], xi[0], x[0], xi[0]] } else { [x[0], x[1], xi[0], xi[1]] };
            data.push(C64::new(e.eval_checked(&vars)?, 0.0));
        }
    }
    SymbolGrid::new(grid, data)
}

/// The symplectic Fourier transform (2π)^{-d}∫ e^{i(y·ξ - x·η)} φ(y, η) dy dη on the grid.
/// It is an exact involution and unitary in the weighted ℓ² norm.
pub fn symplectic_fourier(phi: &SymbolGrid) -> Result<SymbolGrid> {
    if !phi.is_constant() {
        phi.check_decay(BOUNDARY_TOL)?;
    }
    Ok(symplectic_fourier_unchecked(phi))
}

pub fn symplectic_fourier_unchecked(phi: &SymbolGrid) -> SymbolGrid {
    let g = phi.grid;
    let n = g.n;
    let d = g.d;
    let shape = g.symbol_shape();
    let mut a = phi.data.clone();
    apply_checkerboard(&mut a, n, 2 * d);
    for ax in 0..d {
        fft::fft_axis(&mut a, &shape, ax, true);
        fft::fft_axis(&mut a, &shape, d + ax, false);
    }
    apply_checkerboard(&mut a, n, 2 * d);
    let np = g.points();
    let scale = 1.0 / np as f64;
    let mut out = vec![C64::new(0.0, 0.0); a.len()];
    for p in 0..np {
        for m in 0..np {
            out[p * np + m] = a[m * np + p] * scale;
        }
    }
    SymbolGrid::new(g, out).expect("same length")
}

/// Multiplies by (-1)^{sum of indices}.
fn apply_checkerboard(a: &mut [C64], n: usize, naxes: usize) {
    let mut idx = vec![0usize; naxes];
    for v in a.iter_mut() {
        if idx.iter().sum::<usize>() % 2 == 1 {
            *v = -*v;
        }
        for ax in (0..naxes).rev() {
            idx[ax] += 1;
            if idx[ax] < n {
                break;
            }
            idx[ax] = 0;
        }
    }
}

/// Discretized operator kernel with quadrature weight Δx^d.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub grid: GridSpec,
    pub mat: DMatrix<C64>,
}

impl KernelGrid {
    pub fn new(grid: GridSpec, mat: DMatrix<C64>) -> Result<Self> {
        let np = grid.points();
        if mat.nrows() != np || mat.ncols() != np {
            return Err(Error::GridMismatch(format!("{}x{} kernel for {np} nodes", mat.nrows(), mat.ncols())));
        }
        Ok(Self { grid, mat })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let np = grid.points();
        Self { grid, mat: DMatrix::zeros(np, np) }
    }

    /// Kernel of the identity operator, δ(x - y) = 1/Δx^d on the diagonal.
    pub fn identity(grid: GridSpec) -> Self {
        let np = grid.points();
        let w = grid.dx().powi(grid.d as i32);
        Self { grid, mat: DMatrix::from_diagonal_element(np, np, C64::new(1.0 / w, 0.0)) }
    }

    /// Kernel of the operator with matrix `op` acting on samples (kernel = op / Δx^d).
    pub fn from_operator(grid: GridSpec, op: DMatrix<C64>) -> Result<Self> {
        let w = grid.dx().powi(grid.d as i32);
        Self::new(grid, op.map(|v| v / w))
    }

    /// f(x)·conj(g(y)).
    pub fn rank_one(grid: GridSpec, f: &[C64], g: &[C64]) -> Self {
        let np = grid.points();
        Self { grid, mat: DMatrix::from_fn(np, np, |i, j| f[i] * g[j].conj()) }
    }

    pub fn weight(&self) -> f64 {
        self.grid.dx().powi(self.grid.d as i32)
    }

    /// Matrix of the operator acting on node samples, K·Δx^d.
    pub fn operator_matrix(&self) -> DMatrix<C64> {
        let w = self.weight();
        self.mat.map(|v| v * w)
    }

    /// Kernel of the product of the two operators.
    pub fn compose(&self, other: &KernelGrid) -> Result<KernelGrid> {
        self.grid.ensure_same(&other.grid)?;
        let mut m = &self.mat * &other.mat;
        let w = self.weight();
        m.iter_mut().for_each(|v| *v *= w);
        Ok(KernelGrid { grid: self.grid, mat: m })
    }

    /// g(x) = Σ_y K(x, y) f(y) Δx^d.
    pub fn apply(&self, f: &[C64]) -> Result<Vec<C64>> {
        if f.len() != self.mat.ncols() {
            return Err(Error::GridMismatch(format!("function of length {} for {} nodes", f.len(), self.mat.ncols())));
        }
        let w = self.weight();
        Ok((0..self.mat.nrows())
            .map(|i| {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..f.len() {
                    acc += self.mat[(i, j)] * f[j];
                }
                acc * w
            })
            .collect())
    }

    pub fn adjoint(&self) -> KernelGrid {
        KernelGrid { grid: self.grid, mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> KernelGrid {
        KernelGrid { grid: self.grid, mat: self.mat.transpose() }
    }

    pub fn conj(&self) -> KernelGrid {
        KernelGrid { grid: self.grid, mat: self.mat.map(|v| v.conj()) }
    }

    pub fn scale(&self, c: C64) -> KernelGrid {
        KernelGrid { grid: self.grid, mat: self.mat.map(|v| v * c) }
    }

    pub fn add(&self, other: &KernelGrid) -> Result<KernelGrid> {
        self.grid.ensure_same(&other.grid)?;
        Ok(KernelGrid { grid: self.grid, mat: &self.mat + &other.mat })
    }

    pub fn sub(&self, other: &KernelGrid) -> Result<KernelGrid> {
        self.grid.ensure_same(&other.grid)?;
        Ok(KernelGrid { grid: self.grid, mat: &self.mat - &other.mat })
    }

    /// Hilbert–Schmidt norm (Σ|K|² Δx^{2d})^{1/2}.
    pub fn hs_norm(&self) -> f64 {
        self.mat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() * self.weight()
    }

    /// ⟨self, other⟩_{B₂} = Σ self·conj(other)·Δx^{2d}.
    pub fn hs_inner(&self, other: &KernelGrid) -> C64 {
        let w = self.weight();
        self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a * b.conj()).sum::<C64>() * (w * w)
    }

    /// Duality pairing ⟨self, other⟩ = Σ self·other·Δx^{2d}, no conjugation.
    pub fn pairing(&self, other: &KernelGrid) -> C64 {
        let w = self.weight();
        self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a * b).sum::<C64>() * (w * w)
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().iter().sum::<C64>() * self.weight()
    }

    /// ‖self − other‖_HS / ‖other‖_HS.
    pub fn rel_diff(&self, other: &KernelGrid) -> f64 {
        let num: f64 = self.mat.iter().zip(other.mat.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = other.mat.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Weighted ℓ² norm of node samples, (Σ|f|²Δx^d)^{1/2}.
pub fn l2_norm(grid: &GridSpec, f: &[C64]) -> f64 {
    (f.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.dx().powi(grid.d as i32)).sqrt()
}

/// Samples a function of position at every node.
pub fn sample_function(grid: &GridSpec, f: impl Fn(&[f64]) -> C64) -> Vec<C64> {
    (0..grid.points()).map(|p| f(&grid.position(p)[..grid.d])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: GridSpec) -> SymbolGrid {
        SymbolGrid::from_fn(grid, |x, xi| {
            let r2: f64 = x.iter().chain(xi).map(|v| v * v).sum();
            C64::new((-r2 / 2.0).exp(), 0.0)
        })
    }

    #[test]
    fn grid_examples() {
        let g = make_grid(1, 64, 8.0).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert!((g.dxi() - 2.0 * PI / 16.0).abs() < 1e-15);
        let g2 = make_grid(2, 16, 6.0).unwrap();
        assert_eq!(g2.dx(), 0.75);
        assert!((g2.dxi() - 2.0 * PI / 12.0).abs() < 1e-15);
        assert!(make_grid(1, 7, 8.0).is_err());
        assert!(make_grid(3, 16, 8.0).is_err());
        assert!(make_grid(1, 16, 0.0).is_err());
        assert!((g.n as f64 * g.dx() * g.dxi() - 2.0 * PI).abs() < 1e-13);
        assert_eq!(g.lattice_step(), Some(4));
        assert_eq!(g2.lattice_step(), None);
        assert_eq!(g.xi_coord(32), 0.0);
    }

    #[test]
    fn sampling_examples() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let one = sample_symbol("1", g).unwrap();
        assert!(one.boundary_mass() > 0.01);
        assert!(one.check_decay(BOUNDARY_TOL).is_err());
        let ga = sample_symbol("exp(-(x^2+xi^2)/2)", g).unwrap();
        assert!(ga.boundary_mass() < 1e-12);
        let br = sample_symbol("sqrt(1+xi^2)", g).unwrap();
        for p in [0, 17] {
            for m in [0, 5, 32, 63] {
                let xi = g.xi_coord(m);
                assert!((br.at(p, m).re - (1.0 + xi * xi).sqrt()).abs() < 1e-14);
            }
        }
        assert!(sample_symbol("1/0", g).is_err());
    }

    #[test]
    fn gaussian_is_fixed_point() {
        for g in [make_grid(1, 64, 8.0).unwrap(), make_grid(2, 32, 8.0).unwrap()] {
            let ga = gaussian(g);
            let f = symplectic_fourier(&ga).unwrap();
            let err = f.data.iter().zip(&ga.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            // the d = 2 grid truncates the Gaussian at |ξ| = 2π, about 3e-9
            let tol = if g.d == 1 { 1e-10 } else { 1e-8 };
            assert!(err < tol, "d={} err={err}", g.d);
        }
    }

    #[test]
    fn shifted_gaussian_against_direct_sum() {
        let g = make_grid(1, 32, 8.0).unwrap();
        let phi = SymbolGrid::from_fn(g, |x, xi| C64::new((-((x[0] - 1.0).powi(2) + (xi[0] + 0.5).powi(2)) / 2.0).exp(), 0.0));
        let f = symplectic_fourier(&phi).unwrap();
        let w = g.dx() * g.dxi() / (2.0 * PI);
        for (k, m) in [(3usize, 7usize), (16, 16), (20, 9)] {
            let (x, xi) = (g.x_coord(k), g.xi_coord(m));
            let mut acc = C64::new(0.0, 0.0);
            for kk in 0..32 {
                for mm in 0..32 {
                    let (y, eta) = (g.x_coord(kk), g.xi_coord(mm));
                    acc += C64::from_polar(1.0, y * xi - x * eta) * phi.at(kk, mm);
                }
            }
            assert!((f.at(k, m) - acc * w).norm() < 1e-12);
        }
    }

    #[test]
    fn kernel_basics() {
        let g = make_grid(1, 16, 4.0).unwrap();
        let id = KernelGrid::identity(g);
        let f: Vec<C64> = (0..16).map(|i| C64::new(i as f64, 1.0)).collect();
        assert_eq!(id.apply(&f).unwrap(), f);
        let z = KernelGrid::zeros(g);
        assert!(z.apply(&f).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!((id.trace().re - 16.0).abs() < 1e-12);
        assert!(id.compose(&id).unwrap().rel_diff(&id) < 1e-15);
    }
}
