//! Magnetic Weyl quantization on the grid.
//!
//! The kernel of op^A(φ) is
//! k(x, y) = e^{iφ(x,y)} (2π)^{-d} ∫ e^{i(x−y)·ξ} φ((x+y)/2, ξ) dξ.
//! Positions live on a periodic torus; a pair (x_i, y_k) uses the short-arc
//! separation n = wrap(i − k) ∈ [−N/2, N/2) and the midpoint y_k + nΔx/2, which is
//! either a node or a half node. Half-node samples come from a spectral half shift
//! along the position axes, so the map symbol ↔ kernel is an exact bijection.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::{circulation, transversal_gauge, GaugePotential, GradientTerm, MagneticField};
use crate::phase_space::{GridSpec, KernelGrid, SymbolGrid};
use crate::weights::TemperedWeight;
use crate::C64;

/// Grid, gauge and the table of circulations φ(x_i, y_k) between grid nodes.
#[derive(Debug, Clone)]
pub struct QuantizationContext {
    pub grid: GridSpec,
    gauge: GaugePotential,
    phase: Arc<Vec<f64>>,
    trivial: bool,
}

impl QuantizationContext {
    pub fn new(grid: GridSpec, field: &MagneticField) -> Result<Self> {
        Self::with_gauge(grid, transversal_gauge(field))
    }

    pub fn zero_field(grid: GridSpec) -> Self {
        let field = MagneticField::zero(grid.d).expect("grid dimension is valid");
        Self::new(grid, &field).expect("zero field needs no quadrature")
    }

    /// Context for a constant field b (b must be 0 when d = 1).
    pub fn constant(grid: GridSpec, b: f64) -> Result<Self> {
        Self::new(grid, &MagneticField::for_dim(grid.d, b)?)
    }

    pub fn with_gauge(grid: GridSpec, gauge: GaugePotential) -> Result<Self> {
        if gauge.dim() != grid.d {
            return Err(Error::GridMismatch(format!("field of dimension {} on a grid of dimension {}", gauge.dim(), grid.d)));
        }
        let np = grid.points();
        let trivial = gauge.field().is_zero() && gauge.gradients().is_empty();
        let phase = if trivial {
            vec![0.0; np * np]
        } else {
            let rows: Vec<Result<Vec<f64>>> = (0..np)
                .into_par_iter()
                .map(|i| {
                    let x = grid.position(i);
                    (0..i)
                        .map(|k| {
                            let y = grid.position(k);
                            circulation(&gauge, &x[..grid.d], &y[..grid.d])
                        })
                        .collect()
                })
                .collect();
            let mut table = vec![0.0; np * np];
            for (i, row) in rows.into_iter().enumerate() {
                for (k, v) in row?.into_iter().enumerate() {
                    table[i * np + k] = v;
                    table[k * np + i] = -v;
                }
            }
            table
        };
        Ok(Self { grid, gauge, phase: Arc::new(phase), trivial })
    }

    pub fn gauge(&self) -> &GaugePotential {
        &self.gauge
    }

    pub fn field(&self) -> &MagneticField {
        self.gauge.field()
    }

    /// True when all magnetic phases vanish.
    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// Cached φ(x_i, y_k) for flat node indices.
    #[inline]
    pub fn phase(&self, i: usize, k: usize) -> f64 {
        self.phase[i * self.grid.points() + k]
    }

    /// Same grid and gauge with A replaced by A + ∇g.
    pub fn gauge_transform(&self, g: GradientTerm) -> Result<Self> {
        Self::with_gauge(self.grid, self.gauge.with_gradient(g))
    }

    /// The B = 0 context on the same grid.
    pub fn unmagnetic(&self) -> Self {
        Self::zero_field(self.grid)
    }
}

/// Per-pair placement: midpoint pattern, base node and separation slot.
#[derive(Clone, Copy)]
struct Placement {
    pattern: usize,
    base: usize,
    slot: usize,
    odd: bool,
}

#[inline]
fn place(g: &GridSpec, i: [usize; 2], k: [usize; 2]) -> Placement {
    let n = g.n as i64;
    let mut pattern = 0;
    let mut base = [0usize; 2];
    let mut slot = [0usize; 2];
    let mut parity = 0i64;
    for a in 0..g.d {
        let mut s = i[a] as i64 - k[a] as i64;
        s = (s + n / 2).rem_euclid(n) - n / 2;
        let p = s.rem_euclid(2);
        pattern |= (p as usize) << a;
        base[a] = (k[a] as i64 + (s - p) / 2).rem_euclid(n) as usize;
        slot[a] = s.rem_euclid(n) as usize;
        parity += s;
    }
    Placement { pattern, base: g.flatten(base), slot: g.flatten(slot), odd: parity.rem_euclid(2) == 1 }
}

fn shift_positions(data: &mut [C64], g: &GridSpec, pattern: usize, sign: f64) {
    let shape = g.symbol_shape();
    for a in 0..g.d {
        if (pattern >> a) & 1 == 1 {
            fft::half_shift_axis(data, &shape, a, sign);
        }
    }
}

/// k^A φ as a dense kernel.
pub fn weyl_kernel(phi: &SymbolGrid, ctx: &QuantizationContext) -> Result<KernelGrid> {
    ctx.grid.ensure_same(&phi.grid)?;
    let g = ctx.grid;
    let np = g.points();
    let shape = g.symbol_shape();
    let tables: Vec<Vec<C64>> = (0..1usize << g.d)
        .map(|pattern| {
            let mut v = phi.data.clone();
            shift_positions(&mut v, &g, pattern, 1.0);
            for a in 0..g.d {
                fft::fft_axis(&mut v, &shape, g.d + a, true);
            }
            v
        })
        .collect();
    let pref = (g.dxi() / (2.0 * PI)).powi(g.d as i32);
    let rows: Vec<Vec<C64>> = (0..np)
        .into_par_iter()
        .map(|i| {
            let ii = g.unflatten(i);
            (0..np)
                .map(|k| {
                    let pl = place(&g, ii, g.unflatten(k));
                    let v = tables[pl.pattern][pl.base * np + pl.slot] * if pl.odd { -pref } else { pref };
                    if ctx.trivial {
                        v
                    } else {
                        v * C64::from_polar(1.0, ctx.phase(i, k))
                    }
                })
                .collect()
        })
        .collect();
    let mat = DMatrix::from_fn(np, np, |i, k| rows[i][k]);
    KernelGrid::new(g, mat)
}

/// (k^A)⁻¹: the exact inverse of [`weyl_kernel`].
pub fn weyl_dequantize(k: &KernelGrid, ctx: &QuantizationContext) -> Result<SymbolGrid> {
    ctx.grid.ensure_same(&k.grid)?;
    let g = ctx.grid;
    let np = g.points();
    let npat = 1usize << g.d;
    let mut h = vec![vec![C64::new(0.0, 0.0); g.symbol_len()]; npat];
    for i in 0..np {
        let ii = g.unflatten(i);
        for kk in 0..np {
            let pl = place(&g, ii, g.unflatten(kk));
            let mut v = k.mat[(i, kk)];
            if !ctx.trivial {
                v *= C64::from_polar(1.0, -ctx.phase(i, kk));
            }
            h[pl.pattern][pl.base * np + pl.slot] = if pl.odd { -v } else { v };
        }
    }
    let shape = g.symbol_shape();
    let scale = (2.0 * g.dx()).powi(g.d as i32) / npat as f64;
    let mut out = vec![C64::new(0.0, 0.0); g.symbol_len()];
    for (pattern, mut t) in h.into_iter().enumerate() {
        for a in 0..g.d {
            fft::fft_axis(&mut t, &shape, g.d + a, false);
        }
        shift_positions(&mut t, &g, pattern, -1.0);
        for (o, v) in out.iter_mut().zip(&t) {
            *o += v * scale;
        }
    }
    SymbolGrid::new(g, out)
}

/// g = op(K) f with quadrature weight.
pub fn apply_operator(k: &KernelGrid, f: &[C64]) -> Result<Vec<C64>> {
    k.apply(f)
}

/// (w^A(X) f)(y) = e^{−i(y + x/2)·ξ} e^{iφ(x+y, y)} f(x + y), with x on the position lattice.
pub fn weyl_system_apply(x: &[f64], xi: &[f64], f: &[C64], ctx: &QuantizationContext) -> Result<Vec<C64>> {
    let g = ctx.grid;
    if x.len() != g.d || xi.len() != g.d {
        return Err(Error::GridMismatch(format!("phase-space point of dimension {} on a grid of dimension {}", x.len(), g.d)));
    }
    if f.len() != g.points() {
        return Err(Error::GridMismatch(format!("function of length {} for {} nodes", f.len(), g.points())));
    }
    let mut shift = [0i64; 2];
    for a in 0..g.d {
        let t = x[a] / g.dx();
        if (t - t.round()).abs() > 1e-9 {
            return Err(Error::Capability(format!("displacement {} is not a multiple of Δx = {}", x[a], g.dx())));
        }
        shift[a] = t.round() as i64;
    }
    let n = g.n as i64;
    Ok((0..g.points())
        .map(|k| {
            let kk = g.unflatten(k);
            let mut z = [0usize; 2];
            for a in 0..g.d {
                z[a] = (kk[a] as i64 + shift[a]).rem_euclid(n) as usize;
            }
            let zi = g.flatten(z);
            let y = g.position(k);
            let dot: f64 = (0..g.d).map(|a| (y[a] + 0.5 * x[a]) * xi[a]).sum();
            f[zi] * C64::from_polar(1.0, ctx.phase(zi, k) - dot)
        })
        .collect())
}

/// Unitary matrix of w^A(X) acting on node samples.
pub fn weyl_system_matrix(x: &[f64], xi: &[f64], ctx: &QuantizationContext) -> Result<DMatrix<C64>> {
    let np = ctx.grid.points();
    let mut m = DMatrix::zeros(np, np);
    let mut e = vec![C64::new(0.0, 0.0); np];
    for j in 0..np {
        e.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        e[j] = C64::new(1.0, 0.0);
        let col = weyl_system_apply(x, xi, &e, ctx)?;
        for i in 0..np {
            m[(i, j)] = col[i];
        }
    }
    Ok(m)
}

/// Returns a copy of `ctx` with A → A + ∇g.
pub fn gauge_transform(ctx: &QuantizationContext, g: GradientTerm) -> Result<QuantizationContext> {
    ctx.gauge_transform(g)
}

/// Relative deviation of k^{A+∇g}φ from e^{ig} (k^A φ) e^{−ig}.
pub fn gauge_covariance_residual(phi: &SymbolGrid, ctx: &QuantizationContext, g: GradientTerm) -> Result<f64> {
    let grid = ctx.grid;
    let phase: Vec<C64> = (0..grid.points()).map(|p| C64::from_polar(1.0, g.value(&grid.position(p)))).collect();
    let moved = weyl_kernel(phi, &ctx.gauge_transform(g)?)?;
    let k = weyl_kernel(phi, ctx)?;
    let np = grid.points();
    let expect = DMatrix::from_fn(np, np, |i, j| phase[i] * k.mat[(i, j)] * phase[j].conj());
    Ok(moved.rel_diff(&KernelGrid::new(grid, expect)?))
}

/// φ ⋆^B ψ through kernel composition.
pub fn moyal(phi: &SymbolGrid, psi: &SymbolGrid, ctx: &QuantizationContext) -> Result<SymbolGrid> {
    let k = weyl_kernel(phi, ctx)?.compose(&weyl_kernel(psi, ctx)?)?;
    weyl_dequantize(&k, ctx)
}

/// χ_s(x, ξ) = ⟨ξ⟩^s, exact for B = 0.
pub fn sobolev_multiplier(s: f64, grid: GridSpec) -> SymbolGrid {
    SymbolGrid::from_fn(grid, |_, xi| C64::new((1.0 + xi.iter().map(|v| v * v).sum::<f64>()).powf(0.5 * s), 0.0))
        .with_weight(TemperedWeight::m0(grid.d, s))
}

/// (k^A)⁻¹ k⁰ φ.
pub fn change_of_quantization(phi: &SymbolGrid, ctx: &QuantizationContext) -> Result<SymbolGrid> {
    if ctx.is_trivial() {
        return Ok(phi.clone());
    }
    weyl_dequantize(&weyl_kernel(phi, &ctx.unmagnetic())?, ctx)
}

/// (k^A)⁻¹((k^Aφ)*), the symbol of the Hilbert adjoint. Equals conj φ when φ
/// vanishes near the momentum band edge; otherwise the grid aliases the two apart.
pub fn adjoint_symbol(phi: &SymbolGrid, ctx: &QuantizationContext) -> Result<SymbolGrid> {
    weyl_dequantize(&weyl_kernel(phi, ctx)?.adjoint(), ctx)
}

/// Kernel of the position operator Q_j.
pub fn position_operator(grid: GridSpec, j: usize) -> KernelGrid {
    let np = grid.points();
    let w = grid.dx().powi(grid.d as i32);
    KernelGrid::new(grid, DMatrix::from_fn(np, np, |a, b| if a == b { C64::new(grid.position(a)[j] / w, 0.0) } else { C64::new(0.0, 0.0) }))
        .expect("square of grid size")
}

/// Kernel of P^A_j = −i∂_j − A_j: spectral derivative plus gauge multiplication.
pub fn momentum_operator(ctx: &QuantizationContext, j: usize) -> Result<KernelGrid> {
    let g = ctx.grid;
    let xi = SymbolGrid::from_fn(g, |_, xi| C64::new(xi[j], 0.0));
    let mut k = weyl_kernel(&xi, &ctx.unmagnetic())?;
    if !ctx.is_trivial() {
        let w = g.dx().powi(g.d as i32);
        for p in 0..g.points() {
            let x = g.position(p);
            let a = ctx.gauge().eval(&x[..g.d])?;
            k.mat[(p, p)] -= C64::new(a[j] / w, 0.0);
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{make_grid, sample_function};

    fn gaussian(g: GridSpec, c: f64) -> SymbolGrid {
        SymbolGrid::from_fn(g, |x, xi| {
            let r2: f64 = x.iter().chain(xi).map(|v| v * v).sum();
            C64::new((-r2 / 2.0).exp(), 0.0) * C64::from_polar(1.0, c * x[0] * xi[0])
        })
    }

    #[test]
    fn identity_symbol_gives_delta() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let k = weyl_kernel(&SymbolGrid::constant(g, C64::new(1.0, 0.0)), &ctx).unwrap();
        assert!(k.rel_diff(&KernelGrid::identity(g)) < 1e-13);
        let g2 = make_grid(2, 16, 8.0).unwrap();
        let ctx2 = QuantizationContext::constant(g2, 1.0).unwrap();
        let k2 = weyl_kernel(&SymbolGrid::constant(g2, C64::new(1.0, 0.0)), &ctx2).unwrap();
        let id = KernelGrid::identity(g2);
        let off = k2.sub(&id).unwrap().max_abs();
        assert!(off < 1e-10 * id.max_abs(), "{off}");
        let one = weyl_dequantize(&KernelGrid::identity(g), &ctx).unwrap();
        assert!(one.data.iter().all(|v| (v - 1.0).norm() < 1e-13));
    }

    #[test]
    fn xi_symbol_is_derivative() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let k = weyl_kernel(&SymbolGrid::from_fn(g, |_, xi| C64::new(xi[0], 0.0)), &ctx).unwrap();
        let f = sample_function(&g, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let out = k.apply(&f).unwrap();
        let want = sample_function(&g, |x| C64::new(0.0, x[0] * (-x[0] * x[0] / 2.0).exp()));
        let num: f64 = out.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn round_trips() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let phi = gaussian(g, 0.3);
        let back = weyl_dequantize(&weyl_kernel(&phi, &ctx).unwrap(), &ctx).unwrap();
        assert!(back.rel_diff(&phi) < 1e-13);
        let g2 = make_grid(2, 16, 8.0).unwrap();
        let ctx2 = QuantizationContext::constant(g2, 1.0).unwrap();
        let phi2 = gaussian(g2, 0.0);
        let back2 = weyl_dequantize(&weyl_kernel(&phi2, &ctx2).unwrap(), &ctx2).unwrap();
        assert!(back2.rel_diff(&phi2) < 1e-12);
    }

    #[test]
    fn hs_correspondence_and_adjoint() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        // pairs exactly L apart have two torus midpoints; keep the kernel negligible there
        let phi = gaussian(g, 0.2);
        let k = weyl_kernel(&phi, &ctx).unwrap();
        let want = phi.norm_l2() / (2.0 * PI).sqrt();
        assert!((k.hs_norm() - want).abs() < 1e-12 * want);
        let kc = weyl_kernel(&phi.conj(), &ctx).unwrap();
        let r = kc.rel_diff(&k.adjoint());
        assert!(r < 1e-13, "{r}");
    }

    #[test]
    fn weyl_system_properties() {
        let g = make_grid(2, 16, 8.0).unwrap();
        let ctx = QuantizationContext::constant(g, 1.0).unwrap();
        let f = sample_function(&g, |x| C64::new((-(x[0] - 0.5).powi(2) - x[1] * x[1]).exp(), x[0] * 0.1));
        let out = weyl_system_apply(&[0.0, 0.0], &[0.0, 0.0], &f, &ctx).unwrap();
        assert_eq!(out, f);
        let out = weyl_system_apply(&[1.0, -2.0], &[0.3, 1.1], &f, &ctx).unwrap();
        let n0 = crate::phase_space::l2_norm(&g, &f);
        assert!((crate::phase_space::l2_norm(&g, &out) - n0).abs() < 1e-13 * n0);
        assert!(weyl_system_apply(&[0.3, 0.0], &[0.0, 0.0], &f, &ctx).is_err());
        let ctx0 = QuantizationContext::zero_field(g);
        let out = weyl_system_apply(&[1.0, 0.0], &[0.0, 0.0], &f, &ctx0).unwrap();
        // pure translation by one unit = 1 node along axis 0
        for p in 0..g.points() - 16 {
            assert_eq!(out[p], f[p + 16]);
        }
    }

    #[test]
    fn gauge_linear_phase() {
        let g = make_grid(1, 32, 4.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let ctx2 = ctx.gauge_transform(GradientTerm::linear([0.8, 0.0])).unwrap();
        let phi = gaussian(g, 0.0);
        let k = weyl_kernel(&phi, &ctx).unwrap();
        let k2 = weyl_kernel(&phi, &ctx2).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let ph = C64::from_polar(1.0, 0.8 * (g.x_coord(i) - g.x_coord(j)));
                assert!((k2.mat[(i, j)] - ph * k.mat[(i, j)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn gauge_covariance() {
        let g = make_grid(2, 16, 4.0).unwrap();
        let phi = SymbolGrid::from_fn(g, |x, xi| C64::new((-(x[0] * x[0] + x[1] * x[1] + xi[0] * xi[0] + xi[1] * xi[1]) / 2.0).exp(), 0.0));
        for b in [0.0, 1.0] {
            let ctx = QuantizationContext::constant(g, b).unwrap();
            let bump = GradientTerm::gaussian_bump(1.3, [0.4, -0.2], 0.8);
            assert!(gauge_covariance_residual(&phi, &ctx, bump).unwrap() < 1e-8);
            assert!(gauge_covariance_residual(&phi, &ctx, GradientTerm::linear([0.5, -0.7])).unwrap() < 1e-8);
        }
    }

    #[test]
    fn multipliers_commute() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let a = sobolev_multiplier(1.0, g);
        let b = sobolev_multiplier(-1.0, g);
        let p = moyal(&a, &b, &ctx).unwrap();
        assert!(p.data.iter().all(|v| (v - 1.0).norm() < 1e-10));
        let s2 = sobolev_multiplier(2.0, g);
        // ξ = 1 is not a node here; check ⟨ξ⟩² = 1 + ξ² at every node instead
        for m in 0..64 {
            let xi = g.xi_coord(m);
            assert!((s2.at(3, m).re - (1.0 + xi * xi)).abs() < 1e-12);
        }
        assert!(sobolev_multiplier(0.0, g).data.iter().all(|v| *v == C64::new(1.0, 0.0)));
    }
}
