//! Boundedness, compactness and Schatten-class estimators.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{GridSpec, KernelGrid};
use crate::rng::{random_kernel, random_unit_operator, seeded};
use crate::superop::{FrameMatrix, MatrixRepr, Sandwich, SuperMap, SuperOperator, TensorSuperSymbol};
use crate::weyl::{sobolev_multiplier, weyl_kernel, QuantizationContext};
use crate::C64;

/// Largest dense SVD side.
pub const SVD_CAP: usize = 4096;
/// Largest side of a vectorized super matrix (N² at N = 32, d = 1).
pub const HS_SIDE_CAP: usize = 1024;

fn abs_sums(m: &DMatrix<C64>) -> (Vec<f64>, Vec<f64>) {
    let rows = (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v.norm()).sum()).collect();
    let cols = (0..m.ncols()).map(|j| m.column(j).iter().map(|v| v.norm()).sum()).collect();
    (rows, cols)
}

fn vmax(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// sqrt(max row abs-sum · max column abs-sum).
pub fn schur_bound_dense(m: &DMatrix<C64>) -> f64 {
    let (r, c) = abs_sums(m);
    (vmax(&r) * vmax(&c)).sqrt()
}

/// Schur bound of 𝕄. Factorized matrices use exact row and column sums for one
/// term and the triangle inequality across terms.
pub fn schur_bound(m: &FrameMatrix) -> f64 {
    match &m.repr {
        MatrixRepr::Sparse(map) => {
            let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
            let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
            for ((r, c), v) in map {
                *rows.entry(*r).or_insert(0.0) += v.norm();
                *cols.entry(*c).or_insert(0.0) += v.norm();
            }
            let r = rows.values().copied().fold(0.0, f64::max);
            let c = cols.values().copied().fold(0.0, f64::max);
            (r * c).sqrt()
        }
        MatrixRepr::Kron(terms) if terms.len() == 1 => {
            // row (a, b): Σ|U[a, ·]|·Σ|V[·, b]|; column (g, δ): Σ|U[·, g]|·Σ|V[δ, ·]|
            let (l, u, v) = &terms[0];
            let (ur, uc) = abs_sums(u);
            let (vr, vc) = abs_sums(v);
            l.norm() * (vmax(&ur) * vmax(&vc) * vmax(&uc) * vmax(&vr)).sqrt()
        }
        MatrixRepr::Kron(terms) => {
            let mut rmax = 0.0;
            let mut cmax = 0.0;
            for (l, u, v) in terms {
                let (ur, uc) = abs_sums(u);
                let (vr, vc) = abs_sums(v);
                rmax += l.norm() * vmax(&ur) * vmax(&vc);
                cmax += l.norm() * vmax(&uc) * vmax(&vr);
            }
            (rmax * cmax).sqrt()
        }
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    m.clone().singular_values().max()
}

/// (Σ σ^p)^{1/p}; p = ∞ gives σ_max.
pub fn schatten_from_singular(sv: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return vmax(sv);
    }
    sv.iter().map(|s| s.powf(p)).sum::<f64>().powf(1.0 / p)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0) {
        return Err(Error::Config { path: "p".into(), msg: format!("Schatten exponent must be positive, got {p}") });
    }
    Ok(())
}

/// Singular values of the operator (kernel times Δx^d), descending.
pub fn kernel_singular_values(k: &KernelGrid) -> Result<Vec<f64>> {
    let n = k.mat.nrows();
    if n > SVD_CAP {
        return Err(Error::DimensionCap { dim: n, cap: SVD_CAP });
    }
    let mut sv: Vec<f64> = k.operator_matrix().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn schatten_norm_kernel(k: &KernelGrid, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(schatten_from_singular(&kernel_singular_values(k)?, p))
}

/// Schatten norm of 𝕄 as an operator on ℓ². A single Kron term uses σ(U⊗V) = σ(U)σ(V).
pub fn schatten_norm_matrix(m: &FrameMatrix, p: f64) -> Result<f64> {
    check_p(p)?;
    let sv = match &m.repr {
        MatrixRepr::Kron(terms) if terms.len() == 1 => {
            let (l, u, v) = &terms[0];
            let su = u.clone().singular_values();
            let sw = v.clone().singular_values();
            su.iter().flat_map(|a| sw.iter().map(move |b| l.norm() * a * b)).collect::<Vec<_>>()
        }
        _ => m.to_dense()?.singular_values().iter().copied().collect(),
    };
    Ok(schatten_from_singular(&sv, p))
}

fn hs_side(grid: &GridSpec) -> Result<usize> {
    let side = grid.points() * grid.points();
    if side > HS_SIDE_CAP {
        return Err(Error::DimensionCap { dim: side, cap: HS_SIDE_CAP });
    }
    Ok(side)
}

/// Matrix of a super map on B₂ in the orthonormal basis of matrix units,
/// columns indexed by the column-major vectorization.
pub fn dense_super_matrix(map: &dyn SuperMap) -> Result<DMatrix<C64>> {
    let grid = map.grid();
    let side = hs_side(&grid)?;
    let np = grid.points();
    let w = grid.dx().powi(grid.d as i32);
    let cols: Vec<Vec<C64>> = (0..side)
        .into_par_iter()
        .map(|c| {
            let (p, q) = (c % np, c / np);
            let mut e = KernelGrid::zeros(grid);
            e.mat[(p, q)] = C64::new(1.0 / w, 0.0);
            let out = map.apply(&e)?.operator_matrix();
            Ok(out.iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(side, side, |r, c| cols[c][r]))
}

/// Σ λ Bᵀ ⊗ A, the vectorized form of Σ λ A ⊙ B.
pub fn sandwich_super_matrix(s: &Sandwich) -> Result<DMatrix<C64>> {
    let side = hs_side(&s.grid)?;
    let mut out = DMatrix::zeros(side, side);
    for (l, a, b) in &s.terms {
        out += b.operator_matrix().transpose().kronecker(&a.operator_matrix()) * *l;
    }
    Ok(out)
}

/// Singular values of a super operator on B₂, descending. One-term sandwiches use
/// σ(A)·σ(B); everything else goes through the dense matrix.
pub fn super_singular_values(op: &SuperOperator) -> Result<Vec<f64>> {
    let mut sv: Vec<f64> = match op.as_sandwich() {
        Some(s) if s.terms.len() == 1 => {
            hs_side(&s.grid)?;
            let (l, a, b) = &s.terms[0];
            let sa = kernel_singular_values(a)?;
            let sb = kernel_singular_values(b)?;
            sa.iter().flat_map(|x| sb.iter().map(move |y| l.norm() * x * y)).collect()
        }
        Some(s) => sandwich_super_matrix(s)?.singular_values().iter().copied().collect(),
        None => dense_super_matrix(op)?.singular_values().iter().copied().collect(),
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// max ‖𝔗S‖_HS / ‖S‖_HS over `count` random S.
pub fn hs_ratio_probe(map: &dyn SuperMap, count: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let inputs: Vec<KernelGrid> = (0..count).map(|_| random_kernel(&mut rng, map.grid())).collect();
    let ratios = inputs.par_iter().map(|s| Ok(map.apply(s)?.hs_norm() / s.hs_norm())).collect::<Result<Vec<f64>>>()?;
    Ok(vmax(&ratios))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProbeMode {
    Bounded,
    Compact,
    Schatten { p: f64 },
    TraceClassFromBounded,
}

/// Sobolev indices (s_L, s_R, s_L′, s_R′).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SobolevParams {
    pub s_l: f64,
    pub s_r: f64,
    pub s_l_prime: f64,
    pub s_r_prime: f64,
}

impl SobolevParams {
    pub fn is_zero(&self) -> bool {
        self.s_l == 0.0 && self.s_r == 0.0 && self.s_l_prime == 0.0 && self.s_r_prime == 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub mode: ProbeMode,
    pub params: SobolevParams,
    pub grid: GridSpec,
    pub operator_norm: f64,
    /// Leading singular values (at most 16).
    pub singular_head: Vec<f64>,
    /// σ_min / σ₁ over the computed spectrum.
    pub tail_ratio: f64,
    /// Fraction of singular values below 1e−3·σ₁.
    pub small_fraction: f64,
    /// Schatten norms keyed by p ("1", "2", "4", "inf").
    pub schatten: BTreeMap<String, f64>,
    pub trace_norm_sup: Option<f64>,
    /// L^p norm (or sup for bounded and compact modes) of the declared weight times the Sobolev factor.
    pub weight_integral: Option<f64>,
}

/// Conjugates Φ by Sobolev multipliers and estimates the requested property on
/// the vectorized super matrix.
pub fn super_bound_probe(phi: &TensorSuperSymbol, mode: ProbeMode, params: SobolevParams, ctx: &QuantizationContext, seed: u64) -> Result<BoundReport> {
    let grid = ctx.grid;
    if !params.is_zero() && !ctx.is_trivial() {
        return Err(Error::Capability("Sobolev conjugation is exact only for B = 0".into()));
    }
    hs_side(&grid)?;
    if let ProbeMode::Schatten { p } = mode {
        check_p(p)?;
    }
    let mut sandwich = Sandwich::quantize(phi, ctx)?;
    if !params.is_zero() {
        let chi = |s: f64| weyl_kernel(&sobolev_multiplier(s, grid), ctx);
        let (cl, cli) = (chi(params.s_l_prime)?, chi(-params.s_l)?);
        let (cr, cri) = (chi(params.s_r)?, chi(-params.s_r_prime)?);
        for (_, a, b) in sandwich.terms.iter_mut() {
            *a = cl.compose(&a.compose(&cli)?)?;
            *b = cr.compose(&b.compose(&cri)?)?;
        }
    }
    let op = SuperOperator::Sandwich(sandwich);
    let sv = super_singular_values(&op)?;
    let s1 = sv.first().copied().unwrap_or(0.0);
    let mut schatten = BTreeMap::new();
    for (k, p) in [("1", 1.0), ("2", 2.0), ("4", 4.0), ("inf", f64::INFINITY)] {
        schatten.insert(k.to_string(), schatten_from_singular(&sv, p));
    }
    if let ProbeMode::Schatten { p } = mode {
        schatten.insert(format!("{p}"), schatten_from_singular(&sv, p));
    }
    let trace_norm_sup = if mode == ProbeMode::TraceClassFromBounded {
        let mut rng = seeded(seed);
        let inputs: Vec<KernelGrid> = (0..5).map(|_| random_unit_operator(&mut rng, grid)).collect();
        let norms = inputs
            .par_iter()
            .map(|s| Ok(schatten_from_singular(&kernel_singular_values(&op.apply(s)?)?, 1.0)))
            .collect::<Result<Vec<f64>>>()?;
        Some(vmax(&norms))
    } else {
        None
    };
    let weight_integral = match (&phi.weight, grid.d) {
        (Some(m), 1) => Some(weight_norm(m, mode, &params, &grid)),
        _ => None,
    };
    Ok(BoundReport {
        mode,
        params,
        grid,
        operator_norm: s1,
        singular_head: sv.iter().take(16).copied().collect(),
        tail_ratio: if s1 > 0.0 { sv.last().copied().unwrap_or(0.0) / s1 } else { 0.0 },
        small_fraction: if s1 > 0.0 { sv.iter().filter(|s| **s < 1e-3 * s1).count() as f64 / sv.len() as f64 } else { 1.0 },
        schatten,
        trace_norm_sup,
        weight_integral,
    })
}

/// ‖M·(m₀^{s_L′−s_L} ⊗ m₀^{s_R−s_R′})‖ over the doubled grid, d = 1.
fn weight_norm(m: &crate::weights::TemperedWeight, mode: ProbeMode, s: &SobolevParams, g: &GridSpec) -> f64 {
    let n = g.n;
    let br = |xi: f64, e: f64| (1.0 + xi * xi).powf(0.5 * e);
    let vals = (0..n.pow(4)).map(|i| {
        let (xl, ml, xr, mr) = (g.x_coord(i / (n * n * n)), g.xi_coord((i / (n * n)) % n), g.x_coord((i / n) % n), g.xi_coord(i % n));
        m.eval(&[xl, ml, xr, mr]) * br(ml, s.s_l_prime - s.s_l) * br(mr, s.s_r - s.s_r_prime)
    });
    let cell = (g.dx() * g.dxi()).powi(2);
    match mode {
        ProbeMode::Bounded | ProbeMode::Compact => vals.fold(0.0, f64::max),
        ProbeMode::Schatten { p } => (vals.map(|v| v.powf(p)).sum::<f64>() * cell).powf(1.0 / p),
        ProbeMode::TraceClassFromBounded => vals.sum::<f64>() * cell,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{make_grid, SymbolGrid};
    use crate::rng::random_matrix;

    fn gauss(g: GridSpec, x0: f64) -> SymbolGrid {
        SymbolGrid::from_fn(g, move |x, xi| C64::new((-((x[0] - x0).powi(2) + xi[0] * xi[0]) / 2.0).exp(), 0.0))
    }

    #[test]
    fn schur_examples() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0)]));
        assert!((schur_bound_dense(&d) - 3.0).abs() < 1e-15);
        assert!((spectral_norm(&d) - 3.0).abs() < 1e-12);
        assert_eq!(schur_bound_dense(&DMatrix::zeros(4, 4)), 0.0);
        let mut rng = seeded(3);
        for _ in 0..5 {
            let m = random_matrix(&mut rng, 20).map_with_location(|i, j, v| v * (-((i as f64 - j as f64).powi(2)) / 4.0).exp());
            assert!(schur_bound_dense(&m) >= spectral_norm(&m));
        }
    }

    #[test]
    fn schatten_examples() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let id = KernelGrid::identity(g);
        assert!((schatten_norm_kernel(&id, f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
        assert!((schatten_norm_kernel(&id, 2.0).unwrap() - 8.0).abs() < 1e-12);
        let f: Vec<C64> = (0..64).map(|i| C64::new((-(g.x_coord(i)).powi(2)).exp(), 0.0)).collect();
        let r1 = KernelGrid::rank_one(g, &f, &f);
        let s1 = schatten_norm_kernel(&r1, f64::INFINITY).unwrap();
        for p in [1.0, 2.0, 4.0] {
            assert!((schatten_norm_kernel(&r1, p).unwrap() - s1).abs() < 1e-12 * s1);
        }
        let ctx = QuantizationContext::zero_field(g);
        let phi = gauss(g, 0.0);
        let k = weyl_kernel(&phi, &ctx).unwrap();
        let hs = phi.norm_l2() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((schatten_norm_kernel(&k, 2.0).unwrap() - hs).abs() < 1e-6 * hs);
        assert!(schatten_norm_kernel(&k, 0.0).is_err());
    }

    #[test]
    fn super_matrix_routes_agree() {
        let g = make_grid(1, 16, 4.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let phi = TensorSuperSymbol::single(gauss(g, 0.0), gauss(g, 0.5)).unwrap();
        let op = SuperOperator::tensor(phi, &ctx).unwrap();
        let a = dense_super_matrix(&op).unwrap();
        let b = sandwich_super_matrix(op.as_sandwich().unwrap()).unwrap();
        assert!((&a - &b).iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-12 * b.iter().map(|v| v.norm()).fold(0.0, f64::max));
        let mut dense: Vec<f64> = a.singular_values().iter().copied().collect();
        dense.sort_by(|x, y| y.total_cmp(x));
        let fast = super_singular_values(&op).unwrap();
        for (x, y) in dense.iter().zip(&fast).take(20) {
            assert!((x - y).abs() < 1e-10 * fast[0]);
        }
    }

    #[test]
    fn probe_identity_is_bounded_by_one() {
        let g = make_grid(1, 16, 4.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let r = super_bound_probe(&TensorSuperSymbol::identity(g), ProbeMode::Bounded, SobolevParams::default(), &ctx, 0).unwrap();
        assert!((r.operator_norm - 1.0).abs() < 1e-10);
        assert!(r.tail_ratio > 1.0 - 1e-10);
        let magnetic = QuantizationContext::constant(make_grid(2, 8, 2.0).unwrap(), 1.0).unwrap();
        let s = SobolevParams { s_l: 1.0, ..Default::default() };
        let id2 = TensorSuperSymbol::identity(magnetic.grid);
        assert!(matches!(super_bound_probe(&id2, ProbeMode::Bounded, s, &magnetic, 0), Err(Error::Capability(_))));
    }
}
