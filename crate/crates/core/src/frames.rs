//! Magnetic Parseval frames 𝒢^A_α̃ and their rank-one operators 𝒯^A_{α̃,β̃}.
//!
//! Position translates run over the integer lattice, which must lie on the grid.
//! Momentum translates use the local DFT of length P (odd, nearest to 2π/Δx) over
//! the window support, with frequency ω₀ = 2π/(PΔx) ≈ 1, so that modulation is
//! exact on the grid and the frame is tight.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{DecayFit, Envelope};
use crate::error::{Error, Result};
use crate::geometry::circulation;
use crate::phase_space::{l2_norm, GridSpec, KernelGrid};
use crate::weyl::QuantizationContext;
use crate::C64;

pub use crate::window::FrameWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameIndex {
    /// Position lattice point α.
    pub pos: [i64; 2],
    /// Momentum index j; the momentum is ω₀·j.
    pub mom: [i64; 2],
}

impl FrameIndex {
    pub fn new(pos: [i64; 2], mom: [i64; 2]) -> Self {
        Self { pos, mom }
    }

    pub fn zero() -> Self {
        Self { pos: [0; 2], mom: [0; 2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIndexBox {
    pub r_pos: i64,
    pub r_mom: i64,
}

impl FrameIndexBox {
    pub fn new(r_pos: i64, r_mom: i64) -> Self {
        Self { r_pos, r_mom }
    }

    pub fn pos_side(&self) -> usize {
        (2 * self.r_pos + 1) as usize
    }

    pub fn mom_side(&self) -> usize {
        (2 * self.r_mom + 1) as usize
    }

    /// Number of indices in dimension d.
    pub fn len(&self, d: usize) -> usize {
        (self.pos_side() * self.mom_side()).pow(d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All indices, position-major and lexicographic.
    pub fn indices(&self, d: usize) -> Vec<FrameIndex> {
        let ps = self.pos_side();
        let ms = self.mom_side();
        let npos = ps.pow(d as u32);
        let nmom = ms.pow(d as u32);
        let mut out = Vec::with_capacity(npos * nmom);
        for a in 0..npos {
            let pos = if d == 1 { [a as i64 - self.r_pos, 0] } else { [(a / ps) as i64 - self.r_pos, (a % ps) as i64 - self.r_pos] };
            for b in 0..nmom {
                let mom = if d == 1 { [b as i64 - self.r_mom, 0] } else { [(b / ms) as i64 - self.r_mom, (b % ms) as i64 - self.r_mom] };
                out.push(FrameIndex { pos, mom });
            }
        }
        out
    }

    /// Position of `idx` in [`FrameIndexBox::indices`].
    pub fn position_of(&self, idx: &FrameIndex, d: usize) -> Option<usize> {
        let ps = self.pos_side() as i64;
        let ms = self.mom_side() as i64;
        let mut a = 0i64;
        let mut b = 0i64;
        for k in 0..d {
            let p = idx.pos[k] + self.r_pos;
            let m = idx.mom[k] + self.r_mom;
            if p < 0 || p >= ps || m < 0 || m >= ms {
                return None;
            }
            a = a * ps + p;
            b = b * ms + m;
        }
        Some((a * ms.pow(d as u32) + b) as usize)
    }

    pub fn contains(&self, idx: &FrameIndex, d: usize) -> bool {
        self.position_of(idx, d).is_some()
    }
}

/// Frame vectors restricted to their supports.
#[derive(Debug, Clone)]
pub struct FrameSystem {
    pub ctx: QuantizationContext,
    pub window: FrameWindow,
    /// Nodes per unit length.
    pub k: usize,
    /// Local DFT length.
    pub p: usize,
    pub omega0: f64,
    /// For each α in the full position box: (node, e^{iφ(x,α)}𝔤(x−α)·norm) over the support.
    supports: Vec<Vec<(usize, C64)>>,
    r_full: i64,
}

impl FrameSystem {
    pub fn new(ctx: &QuantizationContext, window: FrameWindow) -> Result<Self> {
        let g = ctx.grid;
        if window.d != g.d {
            return Err(Error::GridMismatch(format!("window of dimension {} on a grid of dimension {}", window.d, g.d)));
        }
        let k = g.lattice_step().ok_or_else(|| {
            Error::InvalidGrid(format!("frames need Δx = 1/k and integer L (got Δx = {}, L = {})", g.dx(), g.l))
        })?;
        let two_pi = 2.0 * std::f64::consts::PI;
        let p = (((two_pi * k as f64) - 1.0) / 2.0).round() as usize * 2 + 1;
        let omega0 = two_pi / (p as f64 * g.dx());
        let norm = (p as f64 * g.dx()).powf(-0.5 * g.d as f64);
        let r_full = g.l.round() as i64;
        let side = (2 * r_full + 1) as usize;
        let nalpha = side.pow(g.d as u32);
        let supports: Vec<Result<Vec<(usize, C64)>>> = (0..nalpha)
            .into_par_iter()
            .map(|a| {
                let alpha = if g.d == 1 {
                    [a as f64 - r_full as f64, 0.0]
                } else {
                    [(a / side) as f64 - r_full as f64, (a % side) as f64 - r_full as f64]
                };
                let mut out = Vec::new();
                for node in 0..g.points() {
                    let x = g.position(node);
                    let rel: Vec<f64> = (0..g.d).map(|i| x[i] - alpha[i]).collect();
                    let w = window.eval(&rel);
                    if w == 0.0 {
                        continue;
                    }
                    let ph = if ctx.is_trivial() { 0.0 } else { circulation(ctx.gauge(), &x[..g.d], &alpha[..g.d])? };
                    out.push((node, C64::from_polar(w * norm, ph)));
                }
                Ok(out)
            })
            .collect();
        let supports = supports.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { ctx: ctx.clone(), window, k, p, omega0, supports, r_full })
    }

    pub fn grid(&self) -> GridSpec {
        self.ctx.grid
    }

    pub fn d(&self) -> usize {
        self.ctx.grid.d
    }

    /// Largest symmetric momentum radius, (P − 1)/2.
    pub fn band_radius(&self) -> i64 {
        (self.p as i64 - 1) / 2
    }

    /// Box whose frame is tight on the grid: every lattice point meeting the grid, full DFT band.
    pub fn full_box(&self) -> FrameIndexBox {
        FrameIndexBox::new(self.r_full, self.band_radius())
    }

    /// (L − 1, min(N/4, band radius)).
    pub fn default_box(&self) -> FrameIndexBox {
        FrameIndexBox::new(self.r_full - 1, (self.grid().n as i64 / 4).min(self.band_radius()))
    }

    pub fn check_box(&self, b: &FrameIndexBox) -> Result<()> {
        if b.r_pos < 0 || b.r_pos > self.r_full || b.r_mom < 0 || b.r_mom > self.band_radius() {
            return Err(Error::IndexOutOfBox(format!(
                "box ({}, {}) exceeds the grid limits ({}, {})",
                b.r_pos,
                b.r_mom,
                self.r_full,
                self.band_radius()
            )));
        }
        Ok(())
    }

    fn alpha_slot(&self, idx: &FrameIndex) -> Result<usize> {
        let side = 2 * self.r_full + 1;
        let mut a = 0;
        for i in 0..self.d() {
            let p = idx.pos[i] + self.r_full;
            if p < 0 || p >= side || idx.mom[i].abs() > self.band_radius() {
                return Err(Error::IndexOutOfBox(format!("{idx:?}")));
            }
            a = a * side + p;
        }
        Ok(a as usize)
    }

    /// Nonzero samples of 𝒢_α̃ as (node, value).
    pub fn frame_vector_sparse(&self, idx: &FrameIndex) -> Result<Vec<(usize, C64)>> {
        let sup = &self.supports[self.alpha_slot(idx)?];
        let g = self.grid();
        Ok(sup
            .iter()
            .map(|(node, v)| {
                let x = g.position(*node);
                let arg: f64 = (0..g.d).map(|i| self.omega0 * idx.mom[i] as f64 * (x[i] - idx.pos[i] as f64)).sum();
                (*node, v * C64::from_polar(1.0, arg))
            })
            .collect())
    }

    /// 𝒢^A_α̃ = norm · e^{iφ(x,α)} 𝔤(x−α) e^{iω₀j·(x−α)} on all nodes.
    pub fn frame_vector(&self, idx: &FrameIndex) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.grid().points()];
        for (node, v) in self.frame_vector_sparse(idx)? {
            out[node] = v;
        }
        Ok(out)
    }

    /// Dense N^d × n matrix with the frame vectors of `b` as columns.
    pub fn synthesis_matrix(&self, b: &FrameIndexBox) -> Result<DMatrix<C64>> {
        self.check_box(b)?;
        let idx = b.indices(self.d());
        let mut g = DMatrix::zeros(self.grid().points(), idx.len());
        for (c, i) in idx.iter().enumerate() {
            for (node, v) in self.frame_vector_sparse(i)? {
                g[(node, c)] = v;
            }
        }
        Ok(g)
    }

    /// Coefficients ⟨f, conj 𝒢_α̃⟩ = Σ f·conj(𝒢)Δx^d over the box.
    pub fn analyze(&self, f: &[C64], b: &FrameIndexBox) -> Result<FrameCoefficients> {
        self.check_box(b)?;
        if f.len() != self.grid().points() {
            return Err(Error::GridMismatch(format!("function of length {} for {} nodes", f.len(), self.grid().points())));
        }
        let w = self.grid().dx().powi(self.d() as i32);
        let idx = b.indices(self.d());
        let values: Vec<C64> = idx
            .par_iter()
            .map(|i| {
                let s = self.frame_vector_sparse(i).expect("box checked");
                s.iter().map(|(node, v)| f[*node] * v.conj()).sum::<C64>() * w
            })
            .collect();
        Ok(FrameCoefficients { bx: *b, indices: idx, values })
    }

    /// Σ c_α̃ 𝒢_α̃.
    pub fn synthesize(&self, c: &FrameCoefficients) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); self.grid().points()];
        for (i, v) in c.indices.iter().zip(&c.values) {
            if *v == C64::new(0.0, 0.0) {
                continue;
            }
            for (node, g) in self.frame_vector_sparse(i)? {
                out[node] += v * g;
            }
        }
        Ok(out)
    }

    /// Analysis followed by synthesis; errors if the relative residual exceeds `tol`.
    pub fn analyze_checked(&self, f: &[C64], b: &FrameIndexBox, tol: f64) -> Result<FrameCoefficients> {
        let c = self.analyze(f, b)?;
        let r = self.synthesize(&c)?;
        let g = self.grid();
        let diff: Vec<C64> = r.iter().zip(f).map(|(a, b)| a - b).collect();
        let nf = l2_norm(&g, f);
        let res = if nf == 0.0 { 0.0 } else { l2_norm(&g, &diff) / nf };
        if res > tol {
            let radius = if b.r_pos < self.r_full { b.r_pos } else { b.r_mom } as usize;
            return Err(Error::Truncation { residual: res, tol, radius });
        }
        Ok(c)
    }

    /// Kernel of 𝒯_{α̃,β̃} = 𝒢_α̃ ⊗ conj 𝒢_β̃.
    pub fn frame_operator(&self, a: &FrameIndex, b: &FrameIndex) -> Result<KernelGrid> {
        Ok(KernelGrid::rank_one(self.grid(), &self.frame_vector(a)?, &self.frame_vector(b)?))
    }

    /// C[a, b] = ⟨S, 𝒯_ab⟩_{B₂} = (Gᴴ S G)[a, b] Δx^{2d}.
    pub fn hs_analyze(&self, s: &KernelGrid, b: &FrameIndexBox) -> Result<DMatrix<C64>> {
        self.grid().ensure_same(&s.grid)?;
        let n = b.len(self.d());
        const CAP: usize = 4096;
        if n > CAP {
            return Err(Error::DimensionCap { dim: n, cap: CAP });
        }
        let g = self.synthesis_matrix(b)?;
        let w = s.weight();
        let mut c = g.adjoint() * &s.mat * &g;
        c.iter_mut().for_each(|v| *v *= w * w);
        Ok(c)
    }

    /// Σ_{a,b} C[a,b] 𝒯_ab = G C Gᴴ.
    pub fn hs_synthesize(&self, c: &DMatrix<C64>, b: &FrameIndexBox) -> Result<KernelGrid> {
        let g = self.synthesis_matrix(b)?;
        KernelGrid::new(self.grid(), &g * c * g.adjoint())
    }

    /// Σ|⟨S, 𝒯_ab⟩|² over the box without storing the coefficient matrix.
    pub fn hs_coefficient_energy(&self, s: &KernelGrid, b: &FrameIndexBox) -> Result<f64> {
        self.grid().ensure_same(&s.grid)?;
        self.check_box(b)?;
        let idx = b.indices(self.d());
        let w = s.weight();
        let np = self.grid().points();
        let vectors: Vec<Vec<(usize, C64)>> = idx.par_iter().map(|i| self.frame_vector_sparse(i).expect("box checked")).collect();
        let wd = self.grid().dx().powi(self.d() as i32);
        let parts: Vec<f64> = vectors
            .par_iter()
            .map(|gb| {
                // v = S 𝒢_b Δx^d
                let mut v = vec![C64::new(0.0, 0.0); np];
                for (node, val) in gb {
                    for (i, vi) in v.iter_mut().enumerate() {
                        *vi += s.mat[(i, *node)] * val;
                    }
                }
                v.iter_mut().for_each(|x| *x *= w);
                vectors.iter().map(|ga| (ga.iter().map(|(node, g)| v[*node] * g.conj()).sum::<C64>() * wd).norm_sqr()).sum::<f64>()
            })
            .collect();
        Ok(parts.iter().sum())
    }
}

/// Frame coefficients over an index box.
#[derive(Debug, Clone)]
pub struct FrameCoefficients {
    pub bx: FrameIndexBox,
    pub indices: Vec<FrameIndex>,
    pub values: Vec<C64>,
}

impl FrameCoefficients {
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Power-law fit of |c_α̃| against ⟨α̃⟩ = ⟨(α, j)⟩.
    pub fn decay_fit(&self) -> Result<DecayFit> {
        let mut e = Envelope::new();
        for (i, v) in self.indices.iter().zip(&self.values) {
            let r2: f64 = i.pos.iter().chain(&i.mom).map(|x| (x * x) as f64).sum();
            e.add(r2.sqrt(), v.norm());
        }
        e.fit()
    }

    /// CSV rows α, α′, re, im (α and α′ joined with ';' when d = 2).
    pub fn to_csv(&self, d: usize) -> String {
        let mut s = String::from("alpha,alpha_prime,re,im\n");
        for (i, v) in self.indices.iter().zip(&self.values) {
            let j = |a: &[i64; 2]| if d == 1 { a[0].to_string() } else { format!("{};{}", a[0], a[1]) };
            s.push_str(&format!("{},{},{:e},{:e}\n", j(&i.pos), j(&i.mom), v.re, v.im));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{make_grid, sample_function};

    fn gauss(g: &GridSpec) -> Vec<C64> {
        sample_function(g, |x| C64::new((-x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>() / 2.0).exp(), 0.2 * x[0]))
    }

    #[test]
    fn lattice_and_band() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let fs = FrameSystem::new(&QuantizationContext::zero_field(g), FrameWindow::standard(1)).unwrap();
        assert_eq!((fs.k, fs.p), (4, 25));
        assert!((fs.omega0 - 1.00531).abs() < 1e-4);
        assert_eq!(fs.default_box(), FrameIndexBox::new(7, 12));
        assert!(FrameSystem::new(&QuantizationContext::zero_field(make_grid(1, 64, 6.0).unwrap()), FrameWindow::standard(1)).is_err());
        let b = FrameIndexBox::new(2, 3);
        for (n, i) in b.indices(2).iter().enumerate() {
            assert_eq!(b.position_of(i, 2), Some(n));
        }
    }

    #[test]
    fn frame_vector_examples() {
        let g = make_grid(1, 64, 8.0).unwrap();
        let fs = FrameSystem::new(&QuantizationContext::zero_field(g), FrameWindow::standard(1)).unwrap();
        let v = fs.frame_vector(&FrameIndex::zero()).unwrap();
        let norm = (fs.p as f64 * g.dx()).powf(-0.5);
        for node in 0..64 {
            let x = g.x_coord(node);
            assert!((v[node].re - norm * fs.window.g1(x)).abs() < 1e-15 && v[node].im == 0.0);
        }
        let n0 = l2_norm(&g, &v);
        for i in [FrameIndex::new([3, 0], [5, 0]), FrameIndex::new([-2, 0], [-12, 0])] {
            assert!((l2_norm(&g, &fs.frame_vector(&i).unwrap()) - n0).abs() < 1e-14);
        }
        let g2 = make_grid(2, 16, 4.0).unwrap();
        let f0 = FrameSystem::new(&QuantizationContext::zero_field(g2), FrameWindow::standard(2)).unwrap();
        let f1 = FrameSystem::new(&QuantizationContext::constant(g2, 1.0).unwrap(), FrameWindow::standard(2)).unwrap();
        let i = FrameIndex::new([1, -1], [2, 3]);
        let (a, b) = (f0.frame_vector(&i).unwrap(), f1.frame_vector(&i).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| (x.norm() - y.norm()).abs() < 1e-15));
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).norm() > 1e-3));
    }

    #[test]
    fn parseval_function_level() {
        for (g, b) in [(make_grid(1, 64, 8.0).unwrap(), 0.0), (make_grid(2, 16, 4.0).unwrap(), 1.0)] {
            let ctx = if g.d == 1 { QuantizationContext::zero_field(g) } else { QuantizationContext::constant(g, b).unwrap() };
            let fs = FrameSystem::new(&ctx, FrameWindow::standard(g.d)).unwrap();
            let f = gauss(&g);
            let c = fs.analyze(&f, &fs.full_box()).unwrap();
            let nf = l2_norm(&g, &f).powi(2);
            assert!((c.energy() - nf).abs() < 1e-12 * nf);
            let r = fs.synthesize(&c).unwrap();
            let diff: Vec<C64> = r.iter().zip(&f).map(|(a, b)| a - b).collect();
            assert!(l2_norm(&g, &diff) < 1e-12);
            let z = fs.analyze(&vec![C64::new(0.0, 0.0); g.points()], &fs.full_box()).unwrap();
            assert!(z.values.iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn rank_one_operator() {
        let g = make_grid(1, 32, 4.0).unwrap();
        let fs = FrameSystem::new(&QuantizationContext::zero_field(g), FrameWindow::standard(1)).unwrap();
        let a = FrameIndex::new([1, 0], [2, 0]);
        let b = FrameIndex::new([0, 0], [-1, 0]);
        let t = fs.frame_operator(&a, &b).unwrap();
        let sv = t.operator_matrix().singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|x, y| y.partial_cmp(x).unwrap());
        assert!(s[1] < 1e-10 * s[0]);
        let na = l2_norm(&g, &fs.frame_vector(&a).unwrap());
        let nb = l2_norm(&g, &fs.frame_vector(&b).unwrap());
        assert!((t.hs_norm() - na * nb).abs() < 1e-14);
        let taa = fs.frame_operator(&a, &a).unwrap();
        assert!((taa.trace().re - na * na).abs() < 1e-14);
        // applying 𝒯_ab to f gives 𝒢_a times ⟨f, conj 𝒢_b⟩
        let f = gauss(&g);
        let out = t.apply(&f).unwrap();
        let coef: C64 = fs.frame_vector(&b).unwrap().iter().zip(&f).map(|(gb, fv)| fv * gb.conj()).sum::<C64>() * g.dx();
        let ga = fs.frame_vector(&a).unwrap();
        assert!(out.iter().zip(&ga).all(|(o, x)| (o - x * coef).norm() < 1e-14));
    }

    #[test]
    fn parseval_hs_level() {
        let g = make_grid(1, 32, 4.0).unwrap();
        let fs = FrameSystem::new(&QuantizationContext::zero_field(g), FrameWindow::standard(1)).unwrap();
        let f = gauss(&g);
        let h = sample_function(&g, |x| C64::new((-x[0] * x[0]).exp(), 0.0));
        let s = KernelGrid::rank_one(g, &f, &h);
        let bx = fs.full_box();
        let c = fs.hs_analyze(&s, &bx).unwrap();
        let e: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        let ns = s.hs_norm().powi(2);
        assert!((e - ns).abs() < 1e-12 * ns);
        assert!((fs.hs_coefficient_energy(&s, &bx).unwrap() - ns).abs() < 1e-12 * ns);
        let back = fs.hs_synthesize(&c, &bx).unwrap();
        assert!(back.rel_diff(&s) < 1e-12);
    }
}
