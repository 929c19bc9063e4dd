//! Kraus channels from quadratic partitions of unity in momentum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::signed_freq;
use crate::phase_space::{GridSpec, KernelGrid, SymbolGrid};
use crate::weyl::{adjoint_symbol, change_of_quantization, moyal, weyl_kernel, QuantizationContext};
use crate::window::FrameWindow;
use crate::C64;

/// Largest Choi dimension (matrix side dim²).
pub const CHOI_CAP: usize = 64;
/// Tolerance for the partition sum on the grid band.
pub const PARTITION_TOL: f64 = 1e-12;

/// Momentum bumps φ_n(ξ) = Π_j 𝔤(ξ_j/w − c_{n_j}), c = n − (count − 1)/2, with
/// w chosen so that the centres span [−band, band]. `count` is per axis.
///
/// Returns the symbols and the largest deviation of Σ|φ_n|² from 1 on the grid.
pub fn build_partition_symbols(count: usize, grid: GridSpec, band: Option<f64>) -> Result<(Vec<SymbolGrid>, f64)> {
    if count == 0 {
        return Err(Error::Config { path: "count".into(), msg: "need at least one Kraus symbol".into() });
    }
    if count == 1 {
        return Ok((vec![SymbolGrid::constant(grid, C64::new(1.0, 0.0))], 0.0));
    }
    let band = band.unwrap_or(std::f64::consts::PI / grid.dx());
    if !(band > 0.0) {
        return Err(Error::Config { path: "band".into(), msg: format!("band must be positive, got {band}") });
    }
    let win = FrameWindow::standard(1);
    let half = (count as f64 - 1.0) / 2.0;
    let w = band / half;
    let factor = move |xi: f64, n: usize| win.g1(xi / w - (n as f64 - half));
    let total = count.pow(grid.d as u32);
    let symbols: Vec<SymbolGrid> = (0..total)
        .map(|k| {
            let ns = if grid.d == 1 { [k, 0] } else { [k / count, k % count] };
            SymbolGrid::from_fn(grid, |_, xi| C64::new((0..grid.d).map(|j| factor(xi[j], ns[j])).product(), 0.0))
        })
        .collect();
    let residual = (0..grid.n.pow(grid.d as u32))
        .map(|m| {
            let s: f64 = symbols.iter().map(|p| p.at(0, m).norm_sqr()).sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if residual > PARTITION_TOL {
        return Err(Error::Truncation { residual, tol: PARTITION_TOL, radius: count });
    }
    Ok((symbols, residual))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KrausReport {
    /// sup |Σ_{n≤m} conj φ_n ⋆ φ_n| for each partial sum.
    pub sup_trajectory: Vec<f64>,
    /// sup |Σ φ_n^♯ ⋆ φ_n − 1| over the grid, φ^♯ the adjoint symbol.
    pub final_deviation: f64,
    /// The same with the pointwise conjugate in place of φ^♯.
    pub conj_deviation: f64,
    /// Spectral range [min, max] of each operator partial sum Σ_{n≤m} K_n* K_n.
    pub operator_trajectory: Vec<[f64; 2]>,
    /// Every operator partial sum lies between 0 and 1 within 1e−8.
    pub bounded: bool,
}

#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub ctx: QuantizationContext,
    pub symbols: Vec<SymbolGrid>,
    pub kraus: Vec<KernelGrid>,
    /// Hilbert adjoints of the Kraus kernels.
    pub kraus_adjoint: Vec<KernelGrid>,
    pub band_residual: f64,
}

impl ChannelSpec {
    pub fn from_symbols(ctx: &QuantizationContext, symbols: Vec<SymbolGrid>) -> Result<Self> {
        let pairs = symbols
            .par_iter()
            .map(|s| {
                let k = weyl_kernel(s, ctx)?;
                let ka = k.adjoint();
                Ok((k, ka))
            })
            .collect::<Result<Vec<_>>>()?;
        let (kraus, kraus_adjoint) = pairs.into_iter().unzip();
        Ok(Self { ctx: ctx.clone(), symbols, kraus, kraus_adjoint, band_residual: 0.0 })
    }

    /// Momentum partition; for B ≠ 0 each symbol is requantized as (k^A)⁻¹k⁰φ_n.
    pub fn partition(ctx: &QuantizationContext, count: usize, band: Option<f64>) -> Result<Self> {
        let (base, residual) = build_partition_symbols(count, ctx.grid, band)?;
        let symbols = if ctx.is_trivial() {
            base
        } else {
            base.par_iter().map(|s| change_of_quantization(s, ctx)).collect::<Result<Vec<_>>>()?
        };
        let mut spec = Self::from_symbols(ctx, symbols)?;
        spec.band_residual = residual;
        Ok(spec)
    }

    pub fn grid(&self) -> GridSpec {
        self.ctx.grid
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }
}

/// Partial sums of φ_n^♯ ⋆^B φ_n.
pub fn kraus_verify(spec: &ChannelSpec) -> Result<KrausReport> {
    let terms = spec
        .symbols
        .par_iter()
        .map(|s| Ok((moyal(&adjoint_symbol(s, &spec.ctx)?, s, &spec.ctx)?, moyal(&s.conj(), s, &spec.ctx)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = SymbolGrid::zeros(spec.grid());
    let mut conj_acc = SymbolGrid::zeros(spec.grid());
    let mut sup_trajectory = Vec::with_capacity(terms.len());
    for (t, c) in &terms {
        acc = acc.add(t)?;
        conj_acc = conj_acc.add(c)?;
        sup_trajectory.push(acc.max_abs());
    }
    let dev = |a: &SymbolGrid| a.data.iter().map(|v| (v - C64::new(1.0, 0.0)).norm()).fold(0.0, f64::max);
    let mut partial = KernelGrid::zeros(spec.grid());
    let mut operator_trajectory = Vec::with_capacity(spec.len());
    for (k, ka) in spec.kraus.iter().zip(&spec.kraus_adjoint) {
        partial.mat += &ka.compose(k)?.mat;
        let m = partial.operator_matrix();
        let ev = ((&m + m.adjoint()) * C64::new(0.5, 0.0)).symmetric_eigenvalues();
        operator_trajectory.push([ev.min(), ev.max()]);
    }
    let bounded = operator_trajectory.iter().all(|[lo, hi]| *lo >= -1e-8 && *hi <= 1.0 + 1e-8);
    Ok(KrausReport { sup_trajectory, operator_trajectory, final_deviation: dev(&acc), conj_deviation: dev(&conj_acc), bounded })
}

/// 𝔗ρ = Σ op(φ_n) ρ op(conj φ_n).
pub fn apply_channel(spec: &ChannelSpec, rho: &KernelGrid) -> Result<KernelGrid> {
    spec.grid().ensure_same(&rho.grid)?;
    let parts = spec
        .kraus
        .par_iter()
        .zip(&spec.kraus_adjoint)
        .map(|(k, ka)| k.compose(&rho.compose(ka)?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = KernelGrid::zeros(rho.grid);
    for p in &parts {
        out.mat += &p.mat;
    }
    Ok(out)
}

/// The `dim` lowest-frequency unit-norm plane waves as orthonormal columns.
pub fn fourier_modes(grid: GridSpec, dim: usize) -> Result<DMatrix<C64>> {
    let np = grid.points();
    if dim > np {
        return Err(Error::DimensionCap { dim, cap: np });
    }
    let n = grid.n;
    let mut ks: Vec<[i64; 2]> = (0..np)
        .map(|p| {
            let u = grid.unflatten(p);
            let f = |i: usize| signed_freq(i, n) as i64;
            if grid.d == 1 { [f(u[0]), 0] } else { [f(u[0]), f(u[1])] }
        })
        .collect();
    ks.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1], k[0], k[1]));
    let scale = (np as f64).sqrt();
    Ok(DMatrix::from_fn(np, dim, |p, c| {
        let u = grid.unflatten(p);
        let ph: f64 = (0..grid.d).map(|j| 2.0 * std::f64::consts::PI * ks[c][j] as f64 * u[j] as f64 / n as f64).sum();
        C64::from_polar(1.0 / scale, ph)
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiReport {
    pub dim: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub psd: bool,
}

/// Choi matrix Σ E_ij ⊗ P𝔗(e_i e_jᴴ)P of a map on operator matrices, compressed to `modes`.
pub fn choi_matrix(map: impl Fn(&DMatrix<C64>) -> Result<DMatrix<C64>> + Sync, modes: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let dim = modes.ncols();
    if dim > CHOI_CAP {
        return Err(Error::DimensionCap { dim, cap: CHOI_CAP });
    }
    let blocks = (0..dim * dim)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / dim, ij % dim);
            let e = modes.column(i) * modes.column(j).adjoint();
            let out = map(&e)?;
            Ok(modes.adjoint() * out * modes)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut c = DMatrix::zeros(dim * dim, dim * dim);
    for (ij, b) in blocks.iter().enumerate() {
        let (i, j) = (ij / dim, ij % dim);
        for k in 0..dim {
            for l in 0..dim {
                c[(i * dim + k, j * dim + l)] = b[(k, l)];
            }
        }
    }
    Ok(c)
}

fn choi_report(c: DMatrix<C64>, dim: usize) -> ChoiReport {
    let h = (&c + c.adjoint()) * C64::new(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    let min = ev.min();
    ChoiReport { dim, min_eigenvalue: min, max_eigenvalue: ev.max(), psd: min >= -1e-10 }
}

/// Complete-positivity certificate on the `dim` lowest Fourier modes.
pub fn choi_check(spec: &ChannelSpec, dim: usize) -> Result<ChoiReport> {
    if dim > CHOI_CAP {
        return Err(Error::DimensionCap { dim, cap: CHOI_CAP });
    }
    let modes = fourier_modes(spec.grid(), dim)?;
    // inputs are rank one: P K m_i m_jᴴ K* P = (Pᴴ K m_i)(m_jᴴ K* P)
    let comp: Vec<(DMatrix<C64>, DMatrix<C64>)> = spec
        .kraus
        .par_iter()
        .zip(&spec.kraus_adjoint)
        .map(|(k, ka)| (modes.adjoint() * k.operator_matrix() * &modes, modes.adjoint() * ka.operator_matrix() * &modes))
        .collect();
    let mut c = DMatrix::zeros(dim * dim, dim * dim);
    for (v, w) in &comp {
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        c[(i * dim + k, j * dim + l)] += v[(k, i)] * w[(j, l)];
                    }
                }
            }
        }
    }
    Ok(choi_report(c, dim))
}

/// The transpose map T ↦ Tᵀ, which is positive but not completely positive.
pub fn choi_transpose_control(grid: GridSpec, dim: usize) -> Result<ChoiReport> {
    let modes = fourier_modes(grid, dim)?;
    // transpose in the mode basis: P X P ↦ (P X P)ᵀ expressed back on the grid
    let c = choi_matrix(
        |x| {
            let y = modes.adjoint() * x * &modes;
            Ok(&modes * y.transpose() * modes.adjoint())
        },
        &modes,
    )?;
    Ok(choi_report(c, dim))
}
