//! Super symbols, super operators and their frame matrices.
//!
//! A super operator acts on kernels. The sandwich A ⊙ B sends T to ATB, so
//! (A₁ ⊙ B₁)(A₂ ⊙ B₂) = A₁A₂ ⊙ B₂B₁. Tensor symbols φ ⊗ ψ quantize to
//! op(φ) ⊙ op(ψ).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::decay::{DecayFit, Envelope, FLOOR};
use crate::error::{Error, Result};
use crate::frames::{FrameIndex, FrameIndexBox, FrameSystem};
use crate::phase_space::{GridSpec, KernelGrid, SymbolGrid};
use crate::weights::TemperedWeight;
use crate::weyl::{moyal, momentum_operator, position_operator, weyl_dequantize, weyl_kernel, weyl_system_matrix, QuantizationContext};
use crate::C64;

/// Largest number of terms a product may produce.
pub const MAX_TERMS: usize = 4096;
/// Largest grid size (N, d = 1) for the full four-axis super kernel.
pub const MAX_KERNEL_N: usize = 32;
/// Largest per-leg index count for column-by-column assembly.
pub const MAX_GENERAL_INDICES: usize = 64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct SuperTerm {
    pub lambda: C64,
    pub left: SymbolGrid,
    pub right: SymbolGrid,
}

/// Φ = Σ λ_n φ_n ⊗ ψ_n.
#[derive(Debug, Clone)]
pub struct TensorSuperSymbol {
    pub grid: GridSpec,
    pub terms: Vec<SuperTerm>,
    /// Declared weight on ℝ^{4d}.
    pub weight: Option<TemperedWeight>,
}

impl TensorSuperSymbol {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, terms: Vec::new(), weight: None }
    }

    pub fn single(left: SymbolGrid, right: SymbolGrid) -> Result<Self> {
        let mut s = Self::new(left.grid);
        s.push(C64::new(1.0, 0.0), left, right)?;
        Ok(s)
    }

    /// 1 ⊗ 1, the identity super operator.
    pub fn identity(grid: GridSpec) -> Self {
        let one = SymbolGrid::constant(grid, C64::new(1.0, 0.0));
        Self::single(one.clone(), one).expect("same grid")
    }

    pub fn push(&mut self, lambda: C64, left: SymbolGrid, right: SymbolGrid) -> Result<()> {
        self.grid.ensure_same(&left.grid)?;
        self.grid.ensure_same(&right.grid)?;
        self.terms.push(SuperTerm { lambda, left, right });
        Ok(())
    }

    pub fn with_weight(mut self, m: TemperedWeight) -> Self {
        self.weight = Some(m);
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut s = self.clone();
        s.terms.iter_mut().for_each(|t| t.lambda *= c);
        s
    }

    /// Evaluates Φ at a grid point (p_L, m_L, p_R, m_R).
    pub fn at(&self, pl: usize, ml: usize, pr: usize, mr: usize) -> C64 {
        self.terms.iter().map(|t| t.lambda * t.left.at(pl, ml) * t.right.at(pr, mr)).sum()
    }
}

/// Σ λ A ⊙ B on kernels.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub grid: GridSpec,
    pub terms: Vec<(C64, KernelGrid, KernelGrid)>,
}

impl Sandwich {
    pub fn identity(grid: GridSpec) -> Self {
        Self { grid, terms: vec![(C64::new(1.0, 0.0), KernelGrid::identity(grid), KernelGrid::identity(grid))] }
    }

    pub fn quantize(phi: &TensorSuperSymbol, ctx: &QuantizationContext) -> Result<Self> {
        ctx.grid.ensure_same(&phi.grid)?;
        let terms = phi
            .terms
            .par_iter()
            .map(|t| Ok((t.lambda, weyl_kernel(&t.left, ctx)?, weyl_kernel(&t.right, ctx)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: ctx.grid, terms })
    }

    pub fn apply(&self, t: &KernelGrid) -> Result<KernelGrid> {
        self.grid.ensure_same(&t.grid)?;
        let parts = self
            .terms
            .par_iter()
            .map(|(l, a, b)| Ok(a.compose(&t.compose(b)?)?.scale(*l)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = KernelGrid::zeros(self.grid);
        for p in &parts {
            out.mat += &p.mat;
        }
        Ok(out)
    }

    /// self ∘ other.
    pub fn compose(&self, other: &Sandwich) -> Result<Sandwich> {
        self.grid.ensure_same(&other.grid)?;
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (l1, a1, b1) in &self.terms {
            for (l2, a2, b2) in &other.terms {
                terms.push((l1 * l2, a1.compose(a2)?, b2.compose(b1)?));
            }
        }
        Ok(Sandwich { grid: self.grid, terms })
    }

    /// [𝔖, self] for a generator with kernel `o`.
    pub fn commutator(&self, side: Side, o: &KernelGrid) -> Result<Sandwich> {
        let terms = self
            .terms
            .iter()
            .map(|(l, a, b)| {
                Ok(match side {
                    Side::Left => (*l, o.compose(a)?.sub(&a.compose(o)?)?, b.clone()),
                    Side::Right => (*l, a.clone(), b.compose(o)?.sub(&o.compose(b)?)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sandwich { grid: self.grid, terms })
    }
}

/// 𝔒𝔭^A(Φ)T = Σ λ op(φ) T op(ψ).
pub fn apply_super_tensor(phi: &TensorSuperSymbol, t: &KernelGrid, ctx: &QuantizationContext) -> Result<KernelGrid> {
    Sandwich::quantize(phi, ctx)?.apply(t)
}

/// A super symbol sampled on the full doubled grid, d = 1, axes (x_L, ξ_L, x_R, ξ_R).
#[derive(Debug, Clone)]
pub struct SuperSymbolGrid {
    pub grid: GridSpec,
    pub data: Vec<C64>,
}

impl SuperSymbolGrid {
    fn check(grid: &GridSpec) -> Result<()> {
        if grid.d != 1 {
            return Err(Error::Capability("full super grids exist only for d = 1".into()));
        }
        if grid.n > MAX_KERNEL_N {
            return Err(Error::DimensionCap { dim: grid.n, cap: MAX_KERNEL_N });
        }
        Ok(())
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64, f64) -> C64 + Sync) -> Result<Self> {
        Self::check(&grid)?;
        let n = grid.n;
        let data = (0..n.pow(4))
            .into_par_iter()
            .map(|i| {
                let (xl, ml, xr, mr) = (i / (n * n * n), (i / (n * n)) % n, (i / n) % n, i % n);
                f(grid.x_coord(xl), grid.xi_coord(ml), grid.x_coord(xr), grid.xi_coord(mr))
            })
            .collect();
        Ok(Self { grid, data })
    }

    pub fn from_tensor(phi: &TensorSuperSymbol) -> Result<Self> {
        let grid = phi.grid;
        Self::check(&grid)?;
        let n = grid.n;
        let data = (0..n.pow(4))
            .into_par_iter()
            .map(|i| phi.at(i / (n * n * n), (i / (n * n)) % n, (i / n) % n, i % n))
            .collect();
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn at(&self, xl: usize, ml: usize, xr: usize, mr: usize) -> C64 {
        let n = self.grid.n;
        self.data[((xl * n + ml) * n + xr) * n + mr]
    }
}

/// K^AΦ as a matrix with rows (x_L, x_R) and columns (y_L, y_R), d = 1.
#[derive(Debug, Clone)]
pub struct SuperKernel {
    pub grid: GridSpec,
    pub mat: DMatrix<C64>,
}

impl SuperKernel {
    #[inline]
    pub fn at(&self, xl: usize, xr: usize, yl: usize, yr: usize) -> C64 {
        let n = self.grid.n;
        self.mat[(xl * n + xr, yl * n + yr)]
    }

    /// Σ λ k_L(x_L, y_L)·k_R(x_R, y_R) for factor pairs from [`super_weyl_factors`].
    pub fn from_factors(grid: GridSpec, factors: &[(C64, KernelGrid, KernelGrid)]) -> Result<Self> {
        SuperSymbolGrid::check(&grid)?;
        let n = grid.n;
        let mat = DMatrix::from_fn(n * n, n * n, |r, c| {
            let (xl, xr, yl, yr) = (r / n, r % n, c / n, c % n);
            factors.iter().map(|(l, a, b)| l * a.mat[(xl, yl)] * b.mat[(xr, yr)]).sum()
        });
        Ok(Self { grid, mat })
    }

    pub fn apply(&self, t: &KernelGrid) -> Result<KernelGrid> {
        self.grid.ensure_same(&t.grid)?;
        let n = self.grid.n;
        let w = t.weight();
        let v = DMatrix::from_fn(n * n, 1, |i, _| t.mat[(i / n, i % n)] * (w * w));
        let out = &self.mat * v;
        KernelGrid::new(self.grid, DMatrix::from_fn(n, n, |i, j| out[(i * n + j, 0)]))
    }
}

/// Full-grid magnetic super Weyl transform K^AΦ (d = 1).
///
/// Each pair of legs goes through the one-leg kernel transform; the right leg
/// enters transposed, K^A(φ⊗ψ)(x_L, x_R, y_L, y_R) = k^Aφ(x_L, y_L)·k^Aψ(y_R, x_R).
pub fn super_weyl_kernel(phi: &SuperSymbolGrid, ctx: &QuantizationContext) -> Result<SuperKernel> {
    let g = phi.grid;
    g.ensure_same(&ctx.grid)?;
    SuperSymbolGrid::check(&g)?;
    let n = g.n;
    // left legs for every right phase-space point: a[(x_L, y_L)][(x_R, ξ_R)]
    let left: Vec<KernelGrid> = (0..n * n)
        .into_par_iter()
        .map(|r| {
            let (xr, mr) = (r / n, r % n);
            let data = (0..n * n).map(|i| phi.at(i / n, i % n, xr, mr)).collect();
            weyl_kernel(&SymbolGrid::new(g, data)?, ctx)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<KernelGrid> = (0..n * n)
        .into_par_iter()
        .map(|l| {
            let (xl, yl) = (l / n, l % n);
            let data = (0..n * n).map(|r| left[r].mat[(xl, yl)]).collect();
            weyl_kernel(&SymbolGrid::new(g, data)?, ctx)
        })
        .collect::<Result<_>>()?;
    let mat = DMatrix::from_fn(n * n, n * n, |r, c| {
        let (xl, xr, yl, yr) = (r / n, r % n, c / n, c % n);
        rows[xl * n + yl].mat[(yr, xr)]
    });
    Ok(SuperKernel { grid: g, mat })
}

/// Per-term factors (λ, k^Aφ, (k^Aψ)ᵀ) of K^AΦ for tensor symbols, any d.
pub fn super_weyl_factors(phi: &TensorSuperSymbol, ctx: &QuantizationContext) -> Result<Vec<(C64, KernelGrid, KernelGrid)>> {
    Ok(Sandwich::quantize(phi, ctx)?.terms.into_iter().map(|(l, a, b)| (l, a, b.transpose())).collect())
}

/// W^A(𝐗)T = w^A(X_L) T w^A(X_R).
pub fn apply_super_weyl_system(xl: &[f64], xil: &[f64], xr: &[f64], xir: &[f64], t: &KernelGrid, ctx: &QuantizationContext) -> Result<KernelGrid> {
    ctx.grid.ensure_same(&t.grid)?;
    let wl = weyl_system_matrix(xl, xil, ctx)?;
    let wr = weyl_system_matrix(xr, xir, ctx)?;
    Ok(KernelGrid { grid: t.grid, mat: wl * &t.mat * wr })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// S ⊙ Id.
    Left,
    /// Id ⊙ S.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Position,
    Momentum,
}

/// One of Q_j ⊙ Id, Id ⊙ Q_j, P^A_j ⊙ Id, Id ⊙ P^A_j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Generator {
    pub side: Side,
    pub kind: GenKind,
    pub axis: usize,
}

impl Generator {
    pub fn new(side: Side, kind: GenKind, axis: usize) -> Self {
        Self { side, kind, axis }
    }

    pub fn all(d: usize) -> Vec<Generator> {
        let mut v = Vec::new();
        for axis in 0..d {
            for kind in [GenKind::Position, GenKind::Momentum] {
                for side in [Side::Left, Side::Right] {
                    v.push(Generator { side, kind, axis });
                }
            }
        }
        v
    }

    pub fn kernel(&self, ctx: &QuantizationContext) -> Result<KernelGrid> {
        if self.axis >= ctx.grid.d {
            return Err(Error::Capability(format!("axis {} on a {}-dimensional grid", self.axis, ctx.grid.d)));
        }
        match self.kind {
            GenKind::Position => Ok(position_operator(ctx.grid, self.axis)),
            GenKind::Momentum => momentum_operator(ctx, self.axis),
        }
    }

    /// Lattice value paired with the generator: α_j, or ω₀α′_j for momentum.
    pub fn coordinate(&self, idx: &FrameIndex, omega0: f64) -> f64 {
        match self.kind {
            GenKind::Position => idx.pos[self.axis] as f64,
            GenKind::Momentum => omega0 * idx.mom[self.axis] as f64,
        }
    }

    pub fn label(&self) -> String {
        let op = match self.kind {
            GenKind::Position => format!("Q{}", self.axis + 1),
            GenKind::Momentum => format!("P{}", self.axis + 1),
        };
        match self.side {
            Side::Left => format!("{op}⊙Id"),
            Side::Right => format!("Id⊙{op}"),
        }
    }
}

/// Anything that maps kernels to kernels.
pub trait SuperMap: Sync {
    fn grid(&self) -> GridSpec;
    fn apply(&self, t: &KernelGrid) -> Result<KernelGrid>;
}

impl SuperMap for Sandwich {
    fn grid(&self) -> GridSpec {
        self.grid
    }
    fn apply(&self, t: &KernelGrid) -> Result<KernelGrid> {
        Sandwich::apply(self, t)
    }
}

impl SuperMap for SuperKernel {
    fn grid(&self) -> GridSpec {
        self.grid
    }
    fn apply(&self, t: &KernelGrid) -> Result<KernelGrid> {
        SuperKernel::apply(self, t)
    }
}

/// A closure as a super map.
pub struct FnMap<F> {
    pub grid: GridSpec,
    pub f: F,
}

impl<F: Fn(&KernelGrid) -> Result<KernelGrid> + Sync> SuperMap for FnMap<F> {
    fn grid(&self) -> GridSpec {
        self.grid
    }
    fn apply(&self, t: &KernelGrid) -> Result<KernelGrid> {
        (self.f)(t)
    }
}

/// A super operator in one of its representations.
#[derive(Debug, Clone)]
pub enum SuperOperator {
    Tensor { symbol: TensorSuperSymbol, sandwich: Sandwich },
    Sandwich(Sandwich),
    Matrix { matrix: FrameMatrix, frames: Arc<FrameSystem> },
    Kernel(SuperKernel),
    Commutator { generator: Generator, gen_kernel: KernelGrid, inner: Box<SuperOperator> },
}

impl SuperOperator {
    pub fn tensor(symbol: TensorSuperSymbol, ctx: &QuantizationContext) -> Result<Self> {
        let sandwich = Sandwich::quantize(&symbol, ctx)?;
        Ok(SuperOperator::Tensor { symbol, sandwich })
    }

    pub fn identity(grid: GridSpec) -> Self {
        SuperOperator::Sandwich(Sandwich::identity(grid))
    }

    pub fn as_sandwich(&self) -> Option<&Sandwich> {
        match self {
            SuperOperator::Tensor { sandwich, .. } | SuperOperator::Sandwich(sandwich) => Some(sandwich),
            _ => None,
        }
    }

    pub fn representation(&self) -> &'static str {
        match self {
            SuperOperator::Tensor { .. } => "tensor",
            SuperOperator::Sandwich(_) => "sandwich",
            SuperOperator::Matrix { .. } => "matrix",
            SuperOperator::Kernel(_) => "kernel",
            SuperOperator::Commutator { .. } => "commutator",
        }
    }
}

impl SuperMap for SuperOperator {
    fn grid(&self) -> GridSpec {
        match self {
            SuperOperator::Tensor { sandwich, .. } | SuperOperator::Sandwich(sandwich) => sandwich.grid,
            SuperOperator::Matrix { frames, .. } => frames.grid(),
            SuperOperator::Kernel(k) => k.grid,
            SuperOperator::Commutator { gen_kernel, .. } => gen_kernel.grid,
        }
    }

    fn apply(&self, t: &KernelGrid) -> Result<KernelGrid> {
        match self {
            SuperOperator::Tensor { sandwich, .. } | SuperOperator::Sandwich(sandwich) => sandwich.apply(t),
            SuperOperator::Matrix { matrix, frames } => matrix.apply(frames, t),
            SuperOperator::Kernel(k) => k.apply(t),
            SuperOperator::Commutator { generator, gen_kernel, inner } => {
                let o = gen_kernel;
                let (st, ts) = match generator.side {
                    Side::Left => (o.compose(&inner.apply(t)?)?, inner.apply(&o.compose(t)?)?),
                    Side::Right => (inner.apply(t)?.compose(o)?, inner.apply(&t.compose(o)?)?),
                };
                st.sub(&ts)
            }
        }
    }
}

/// Storage for 𝕄 with rows (α̃, β̃) and columns (γ̃, δ̃).
#[derive(Debug, Clone)]
pub enum MatrixRepr {
    /// 𝕄 = Σ λ U[α̃, γ̃]·V[δ̃, β̃].
    Kron(Vec<(C64, DMatrix<C64>, DMatrix<C64>)>),
    /// (row, col) → entry, with row = a·n + b and col = g·n + δ.
    Sparse(BTreeMap<(usize, usize), C64>),
}

/// 𝕄^A over an index box.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub d: usize,
    pub bx: FrameIndexBox,
    pub omega0: f64,
    pub repr: MatrixRepr,
    pub weight: Option<TemperedWeight>,
}

impl FrameMatrix {
    /// Indices per leg.
    pub fn leg_len(&self) -> usize {
        self.bx.len(self.d)
    }

    pub fn indices(&self) -> Vec<FrameIndex> {
        self.bx.indices(self.d)
    }

    pub fn entry(&self, a: usize, b: usize, g: usize, dd: usize) -> C64 {
        let n = self.leg_len();
        match &self.repr {
            MatrixRepr::Kron(terms) => terms.iter().map(|(l, u, v)| l * u[(a, g)] * v[(dd, b)]).sum(),
            MatrixRepr::Sparse(m) => m.get(&(a * n + b, g * n + dd)).copied().unwrap_or(ZERO),
        }
    }

    /// Largest entry magnitude; for several Kron terms this is the triangle bound.
    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            MatrixRepr::Kron(terms) => terms.iter().map(|(l, u, v)| l.norm() * max_abs(u) * max_abs(v)).sum(),
            MatrixRepr::Sparse(m) => m.values().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    /// Stored entries above the drop threshold.
    pub fn nnz(&self) -> usize {
        let top = self.max_abs();
        match &self.repr {
            MatrixRepr::Sparse(m) => m.len(),
            MatrixRepr::Kron(_) => {
                let n = self.leg_len();
                let mut c = 0;
                for a in 0..n {
                    for b in 0..n {
                        for g in 0..n {
                            for dd in 0..n {
                                if self.entry(a, b, g, dd).norm() >= FLOOR * top && top > 0.0 {
                                    c += 1;
                                }
                            }
                        }
                    }
                }
                c
            }
        }
    }

    /// Nonzero entries as ((a, b, g, δ), value), row-major, above the drop threshold.
    pub fn entries(&self) -> Vec<([usize; 4], C64)> {
        let n = self.leg_len();
        let top = self.max_abs();
        let mut out = Vec::new();
        if top == 0.0 {
            return out;
        }
        match &self.repr {
            MatrixRepr::Sparse(m) => {
                for ((r, c), v) in m {
                    out.push(([r / n, r % n, c / n, c % n], *v));
                }
            }
            MatrixRepr::Kron(_) => {
                for a in 0..n {
                    for b in 0..n {
                        for g in 0..n {
                            for dd in 0..n {
                                let v = self.entry(a, b, g, dd);
                                if v.norm() >= FLOOR * top {
                                    out.push(([a, b, g, dd], v));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Dense n² × n² matrix; refuses past 4096 rows.
    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        let n = self.leg_len();
        const CAP: usize = 4096;
        if n * n > CAP {
            return Err(Error::DimensionCap { dim: n * n, cap: CAP });
        }
        Ok(DMatrix::from_fn(n * n, n * n, |r, c| self.entry(r / n, r % n, c / n, c % n)))
    }

    /// Point of ℝ^{2d} for a frame index: (α, ω₀α′).
    fn phase_point(&self, i: &FrameIndex, out: &mut Vec<f64>) {
        out.extend((0..self.d).map(|k| i.pos[k] as f64));
        out.extend((0..self.d).map(|k| self.omega0 * i.mom[k] as f64));
    }

    /// Fit of |𝕄| / M(midpoint) against ⟨(α̃, β̃) − (γ̃, δ̃)⟩.
    pub fn decay_fit(&self, m: Option<&TemperedWeight>) -> Result<DecayFit> {
        let idx = self.indices();
        let n = idx.len();
        if self.is_zero() {
            return Err(Error::EmptyMatrix);
        }
        if let Some(w) = m {
            if w.dim() != 4 * self.d {
                return Err(Error::InvalidWeight(format!("super weight of dimension {} for d = {}", w.dim(), self.d)));
            }
        }
        let mid = |a: usize, g: usize| -> Vec<f64> {
            let mut p = Vec::with_capacity(2 * self.d);
            let mut q = Vec::with_capacity(2 * self.d);
            self.phase_point(&idx[a], &mut p);
            self.phase_point(&idx[g], &mut q);
            p.iter().zip(&q).map(|(x, y)| 0.5 * (x + y)).collect()
        };
        let dist2 = |a: usize, g: usize| -> i64 {
            let (x, y) = (&idx[a], &idx[g]);
            (0..self.d).map(|k| (x.pos[k] - y.pos[k]).pow(2) + (x.mom[k] - y.mom[k]).pow(2)).sum()
        };
        let mut env = Envelope::new();
        match &self.repr {
            MatrixRepr::Kron(terms) if terms.len() == 1 => {
                let (l, u, v) = &terms[0];
                let factors = m.map(|w| w.tensor_factors());
                let (wl, wr) = match (m, factors) {
                    (None, _) => (None, None),
                    (Some(_), Some(Some((a, b)))) => (Some(a), Some(b)),
                    (Some(_), _) => return self.decay_fit_dense(m),
                };
                // max |U| per squared distance, then combine shells
                let leg = |mat: &DMatrix<C64>, w: Option<&TemperedWeight>, swap: bool| -> BTreeMap<i64, f64> {
                    let mut best = BTreeMap::new();
                    for r in 0..n {
                        for c in 0..n {
                            let mut val = mat[(r, c)].norm();
                            if let Some(w) = w {
                                val /= w.eval(&if swap { mid(c, r) } else { mid(r, c) });
                            }
                            let e = best.entry(dist2(r, c)).or_insert(0.0f64);
                            *e = e.max(val);
                        }
                    }
                    best
                };
                let bu = leg(u, wl, false);
                let bv = leg(v, wr, true);
                for (du, eu) in &bu {
                    for (dv, ev) in &bv {
                        env.add(((du + dv) as f64).sqrt(), l.norm() * eu * ev);
                    }
                }
            }
            _ => return self.decay_fit_dense(m),
        }
        env.fit()
    }

    fn decay_fit_dense(&self, m: Option<&TemperedWeight>) -> Result<DecayFit> {
        let idx = self.indices();
        let n = idx.len();
        if matches!(self.repr, MatrixRepr::Kron(_)) && n.pow(4) > 1 << 26 {
            return Err(Error::DimensionCap { dim: n.pow(4), cap: 1 << 26 });
        }
        let mut env = Envelope::new();
        let mut p = Vec::new();
        for (k, v) in self.entries() {
            let [a, b, g, dd] = k;
            let r2: i64 = (0..self.d)
                .map(|j| {
                    (idx[a].pos[j] - idx[g].pos[j]).pow(2)
                        + (idx[a].mom[j] - idx[g].mom[j]).pow(2)
                        + (idx[b].pos[j] - idx[dd].pos[j]).pow(2)
                        + (idx[b].mom[j] - idx[dd].mom[j]).pow(2)
                })
                .sum();
            let mut val = v.norm();
            if let Some(w) = m {
                p.clear();
                let mut q = Vec::new();
                self.phase_point(&idx[a], &mut p);
                self.phase_point(&idx[g], &mut q);
                let mut x: Vec<f64> = p.iter().zip(&q).map(|(s, t)| 0.5 * (s + t)).collect();
                p.clear();
                q.clear();
                self.phase_point(&idx[b], &mut p);
                self.phase_point(&idx[dd], &mut q);
                x.extend(p.iter().zip(&q).map(|(s, t)| 0.5 * (s + t)));
                val /= w.eval(&x);
            }
            env.add((r2 as f64).sqrt(), val);
        }
        env.fit()
    }

    /// Truncated action S ↦ Σ 𝕄 ⟨S, conj 𝒯_{γ̃,δ̃}⟩ 𝒯_{α̃,β̃}.
    pub fn apply(&self, frames: &FrameSystem, s: &KernelGrid) -> Result<KernelGrid> {
        frames.grid().ensure_same(&s.grid)?;
        let g = frames.synthesis_matrix(&self.bx)?;
        let w = s.weight();
        let c = g.adjoint() * &s.mat * &g * C64::new(w * w, 0.0);
        let n = self.leg_len();
        let d = match &self.repr {
            MatrixRepr::Kron(terms) => {
                let mut d = DMatrix::zeros(n, n);
                for (l, u, v) in terms {
                    d += u * &c * v * *l;
                }
                d
            }
            MatrixRepr::Sparse(m) => {
                let mut d = DMatrix::zeros(n, n);
                for ((r, col), v) in m {
                    d[(r / n, r % n)] += v * c[(col / n, col % n)];
                }
                d
            }
        };
        KernelGrid::new(s.grid, &g * d * g.adjoint())
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// 𝕄[(α̃, β̃), (γ̃, δ̃)] = ⟨S 𝒯_{γ̃,δ̃}, conj 𝒯_{α̃,β̃}⟩.
///
/// Sandwich forms give the factorized matrix directly; other forms are
/// assembled column by column.
pub fn matrix_elements(op: &SuperOperator, frames: &FrameSystem, bx: &FrameIndexBox) -> Result<FrameMatrix> {
    match op {
        SuperOperator::Tensor { sandwich, symbol } => {
            let mut m = sandwich_matrix(sandwich, frames, bx)?;
            m.weight = symbol.weight.clone();
            Ok(m)
        }
        SuperOperator::Sandwich(s) => sandwich_matrix(s, frames, bx),
        _ => matrix_elements_general(op, frames, bx),
    }
}

fn sandwich_matrix(s: &Sandwich, frames: &FrameSystem, bx: &FrameIndexBox) -> Result<FrameMatrix> {
    frames.grid().ensure_same(&s.grid)?;
    let g = frames.synthesis_matrix(bx)?;
    let gh = g.adjoint();
    let w = frames.grid().dx().powi(frames.d() as i32);
    let w2 = C64::new(w * w, 0.0);
    let terms = s
        .terms
        .par_iter()
        .map(|(l, a, b)| (*l, &gh * &a.mat * &g * w2, &gh * &b.mat * &g * w2))
        .collect();
    Ok(FrameMatrix { d: frames.d(), bx: *bx, omega0: frames.omega0, repr: MatrixRepr::Kron(terms), weight: None })
}

/// Column-by-column assembly for any super map; parallel over columns.
pub fn matrix_elements_general(map: &dyn SuperMap, frames: &FrameSystem, bx: &FrameIndexBox) -> Result<FrameMatrix> {
    frames.grid().ensure_same(&map.grid())?;
    let n = bx.len(frames.d());
    if n > MAX_GENERAL_INDICES {
        return Err(Error::DimensionCap { dim: n, cap: MAX_GENERAL_INDICES });
    }
    let idx = bx.indices(frames.d());
    let g = frames.synthesis_matrix(bx)?;
    let gh = g.adjoint();
    let w = frames.grid().dx().powi(frames.d() as i32);
    let vecs: Vec<Vec<C64>> = idx.iter().map(|i| frames.frame_vector(i)).collect::<Result<_>>()?;
    let cols: Vec<DMatrix<C64>> = (0..n * n)
        .into_par_iter()
        .map(|col| {
            let t = KernelGrid::rank_one(frames.grid(), &vecs[col / n], &vecs[col % n]);
            let x = map.apply(&t)?;
            Ok(&gh * &x.mat * &g * C64::new(w * w, 0.0))
        })
        .collect::<Result<_>>()?;
    let top = cols.iter().map(max_abs).fold(0.0, f64::max);
    let mut m = BTreeMap::new();
    for (col, d) in cols.iter().enumerate() {
        for a in 0..n {
            for b in 0..n {
                let v = d[(a, b)];
                if top > 0.0 && v.norm() >= FLOOR * top {
                    m.insert((a * n + b, col), v);
                }
            }
        }
    }
    Ok(FrameMatrix { d: frames.d(), bx: *bx, omega0: frames.omega0, repr: MatrixRepr::Sparse(m), weight: None })
}

/// Σ N (op⁻¹𝒯_{α̃,γ̃}) ⊗ (op⁻¹𝒯_{δ̃,β̃}), grouped by (α̃, γ̃).
///
/// Refuses unless the fitted decay order reaches 2d + 1.
pub fn dequantize_matrix(nm: &FrameMatrix, frames: &FrameSystem, ctx: &QuantizationContext) -> Result<TensorSuperSymbol> {
    let grid = frames.grid();
    grid.ensure_same(&ctx.grid)?;
    let mut out = TensorSuperSymbol::new(grid);
    out.weight = nm.weight.clone();
    if nm.is_zero() {
        return Ok(out);
    }
    let fit = nm.decay_fit(None)?;
    let required = 2.0 * nm.d as f64 + 1.0;
    if fit.n_star < required {
        return Err(Error::DecayScreen { n_star: fit.n_star, required });
    }
    let g = frames.synthesis_matrix(&nm.bx)?;
    let gh = g.adjoint();
    let to_symbol = |m: DMatrix<C64>| weyl_dequantize(&KernelGrid::new(grid, m)?, ctx);
    match &nm.repr {
        MatrixRepr::Kron(terms) => {
            for (l, u, v) in terms {
                out.push(*l, to_symbol(&g * u * &gh)?, to_symbol(&g * v * &gh)?)?;
            }
        }
        MatrixRepr::Sparse(m) => {
            let n = nm.leg_len();
            let top = nm.max_abs();
            let mut groups: BTreeMap<(usize, usize), DMatrix<C64>> = BTreeMap::new();
            for ((r, c), v) in m {
                if v.norm() < FLOOR * top {
                    continue;
                }
                let (a, b, gg, dd) = (r / n, r % n, c / n, c % n);
                groups.entry((a, gg)).or_insert_with(|| DMatrix::zeros(n, n))[(dd, b)] += v;
            }
            let terms = groups
                .into_par_iter()
                .map(|((a, gg), wmat)| {
                    let left = to_symbol(g.column(a) * g.column(gg).adjoint())?;
                    let right = to_symbol(&g * wmat * &gh)?;
                    Ok((left, right))
                })
                .collect::<Result<Vec<_>>>()?;
            for (left, right) in terms {
                out.push(C64::new(1.0, 0.0), left, right)?;
            }
        }
    }
    Ok(out)
}

/// Φ •^B ψ = (op^A)⁻¹(𝔒𝔭^A(Φ) op^A(ψ)).
pub fn semi_super_product(phi: &TensorSuperSymbol, psi: &SymbolGrid, ctx: &QuantizationContext) -> Result<SymbolGrid> {
    let k = apply_super_tensor(phi, &weyl_kernel(psi, ctx)?, ctx)?;
    weyl_dequantize(&k, ctx)
}

/// Φ #^B Ψ termwise: (φ₁ ⊗ ψ₁) # (φ₂ ⊗ ψ₂) = (φ₁ ⋆ φ₂) ⊗ (ψ₂ ⋆ ψ₁).
pub fn super_product(phi: &TensorSuperSymbol, psi: &TensorSuperSymbol, ctx: &QuantizationContext) -> Result<TensorSuperSymbol> {
    phi.grid.ensure_same(&psi.grid)?;
    let count = phi.len() * psi.len();
    if count > MAX_TERMS {
        return Err(Error::TermCap { count, cap: MAX_TERMS });
    }
    let pairs: Vec<(usize, usize)> = (0..phi.len()).flat_map(|i| (0..psi.len()).map(move |j| (i, j))).collect();
    let terms = pairs
        .par_iter()
        .map(|(i, j)| {
            let (a, b) = (&phi.terms[*i], &psi.terms[*j]);
            Ok((a.lambda * b.lambda, moyal(&a.left, &b.left, ctx)?, moyal(&b.right, &a.right, ctx)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = TensorSuperSymbol::new(phi.grid);
    for (l, left, right) in terms {
        out.push(l, left, right)?;
    }
    out.weight = match (&phi.weight, &psi.weight) {
        (Some(a), Some(b)) => Some(TemperedWeight::product(a, b)?),
        _ => None,
    };
    Ok(out)
}

/// [𝔖, S] for a Beals generator 𝔖.
pub fn beals_commutator(op: &SuperOperator, generator: Generator, ctx: &QuantizationContext) -> Result<SuperOperator> {
    let o = generator.kernel(ctx)?;
    match op {
        SuperOperator::Tensor { sandwich, .. } | SuperOperator::Sandwich(sandwich) => {
            Ok(SuperOperator::Sandwich(sandwich.commutator(generator.side, &o)?))
        }
        SuperOperator::Kernel(k) if k.grid.d > 1 => Err(Error::Capability("kernel form needs d = 1".into())),
        _ => Ok(SuperOperator::Commutator { generator, gen_kernel: o, inner: Box::new(op.clone()) }),
    }
}

/// Both sides of the three-term Beals decomposition on one index tuple.
#[derive(Debug, Clone, Copy)]
pub struct BealsEntry {
    pub tuple: [FrameIndex; 4],
    pub lhs: C64,
    pub rhs: C64,
}

/// Checks (c_α − c_γ)𝕄 (left generators) or (c_β − c_δ)𝕄 (right generators) against
/// the commutator term minus and plus the shifted-frame terms, over `probe`⁴.
pub fn beals_identity(op: &SuperOperator, generator: Generator, frames: &FrameSystem, probe: &[FrameIndex]) -> Result<Vec<BealsEntry>> {
    let ctx = &frames.ctx;
    let o = generator.kernel(ctx)?;
    let comm = beals_commutator(op, generator, ctx)?;
    let grid = frames.grid();
    let w = grid.dx().powi(grid.d as i32);
    let np = grid.points();
    let vecs: Vec<Vec<C64>> = probe.iter().map(|i| frames.frame_vector(i)).collect::<Result<_>>()?;
    let shifted: Vec<Vec<C64>> = probe
        .iter()
        .zip(&vecs)
        .map(|(i, v)| {
            let c = generator.coordinate(i, frames.omega0);
            let ov = o.apply(v)?;
            Ok(ov.iter().zip(v).map(|(a, b)| a - b * c).collect())
        })
        .collect::<Result<_>>()?;
    let conj = |v: &[C64]| -> Vec<C64> { v.iter().map(|x| x.conj()).collect() };
    // Σ Y(x, y) u(x) v(y) Δx^{2d}
    let pair = |y: &KernelGrid, u: &[C64], v: &[C64]| -> C64 {
        let mut acc = ZERO;
        for i in 0..np {
            let mut row = ZERO;
            for j in 0..np {
                row += y.mat[(i, j)] * v[j];
            }
            acc += u[i] * row;
        }
        acc * (w * w)
    };
    let k = probe.len();
    let tuples: Vec<[usize; 4]> = (0..k.pow(4)).map(|t| [t / (k * k * k), (t / (k * k)) % k, (t / k) % k, t % k]).collect();
    // applied kernels per column (g, δ)
    let cols = (0..k * k)
        .into_par_iter()
        .map(|c| {
            let (g, dd) = (c / k, c % k);
            let t = KernelGrid::rank_one(grid, &vecs[g], &vecs[dd]);
            let x = op.apply(&t)?;
            let cx = comm.apply(&t)?;
            let ts = match generator.side {
                Side::Left => KernelGrid::rank_one(grid, &shifted[g], &vecs[dd]),
                Side::Right => KernelGrid::rank_one(grid, &vecs[g], &shifted[dd]),
            };
            let xs = op.apply(&ts)?;
            Ok((x, cx, xs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tuples
        .par_iter()
        .map(|&[a, b, g, dd]| {
            let (x, cx, xs) = &cols[g * k + dd];
            let (ca, cb, cg, cd) = (
                generator.coordinate(&probe[a], frames.omega0),
                generator.coordinate(&probe[b], frames.omega0),
                generator.coordinate(&probe[g], frames.omega0),
                generator.coordinate(&probe[dd], frames.omega0),
            );
            let ua = conj(&vecs[a]);
            let m = pair(x, &ua, &vecs[b]);
            let (lhs, middle) = match generator.side {
                Side::Left => (m * (ca - cg), pair(x, &conj(&shifted[a]), &vecs[b])),
                Side::Right => (m * (cb - cd), pair(x, &ua, &shifted[b])),
            };
            let rhs = pair(cx, &ua, &vecs[b]) - middle + pair(xs, &ua, &vecs[b]);
            BealsEntry { tuple: [probe[a], probe[b], probe[g], probe[dd]], lhs, rhs }
        })
        .collect())
}

/// Largest |lhs − rhs| over the entries.
pub fn beals_residual(entries: &[BealsEntry]) -> f64 {
    entries.iter().map(|e| (e.lhs - e.rhs).norm()).fold(0.0, f64::max)
}
