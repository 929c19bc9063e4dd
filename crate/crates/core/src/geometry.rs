//! Magnetic fields, gauge potentials, circulations and fluxes.
//!
//! Positions are slices of length `d`; vector results are `[f64; 2]` with the
//! second slot zero when `d = 1`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature;

/// Orientation constant linking the circulation cocycle to the flux:
/// φ(x,y) + φ(y,z) + φ(z,x) = STOKES_SIGN · Γ(x,y,z).
pub const STOKES_SIGN: f64 = -1.0;

/// Half-width of the box on which derivative bounds are sampled.
const PROBE_RADIUS: f64 = 8.0;
const PROBE_STEP: f64 = 0.25;

#[derive(Clone)]
enum FieldKind {
    Zero,
    Constant(f64),
    Expr(Arc<Expr>),
}

#[derive(Clone)]
pub struct MagneticField {
    d: usize,
    kind: FieldKind,
    bounds: Vec<f64>,
}

impl fmt::Debug for MagneticField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FieldKind::Zero => write!(f, "MagneticField(d={}, 0)", self.d),
            FieldKind::Constant(b) => write!(f, "MagneticField(d=2, b={b})"),
            FieldKind::Expr(e) => write!(f, "MagneticField(d=2, B12={})", e.source()),
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(Error::Capability(format!("dimension {d} not supported (d must be 1 or 2)")))
    }
}

impl MagneticField {
    pub fn zero(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(Self { d, kind: FieldKind::Zero, bounds: vec![0.0; 3] })
    }

    /// Constant field B12 = b in two dimensions (`b = 0` gives the zero field).
    pub fn constant(b: f64) -> Self {
        if b == 0.0 {
            return Self { d: 2, kind: FieldKind::Zero, bounds: vec![0.0; 3] };
        }
        Self { d: 2, kind: FieldKind::Constant(b), bounds: vec![b.abs(), 0.0, 0.0] }
    }

    /// Field from an expression in `x1`, `x2`.
    pub fn from_expr(src: &str) -> Result<Self> {
        let e = Expr::parse(src, &["x1", "x2"])?;
        if e.is_constant() {
            return Ok(Self::constant(e.eval(&[0.0, 0.0])));
        }
        let mut f = Self { d: 2, kind: FieldKind::Expr(Arc::new(e)), bounds: vec![] };
        let sampled = f.sampled_bounds(PROBE_RADIUS, PROBE_STEP)?;
        f.bounds = sampled.iter().map(|b| 1.25 * b + 1e-12).collect();
        Ok(f)
    }

    /// Same as [`MagneticField::constant`] or [`MagneticField::zero`] as appropriate for `d`.
    pub fn for_dim(d: usize, b: f64) -> Result<Self> {
        check_dim(d)?;
        if d == 1 {
            if b != 0.0 {
                return Err(Error::Capability("a magnetic field on the line is identically zero".into()));
            }
            return Self::zero(1);
        }
        Ok(Self::constant(b))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `Some(b)` if B12 ≡ b (including the zero field).
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            FieldKind::Zero => Some(0.0),
            FieldKind::Constant(b) => Some(b),
            FieldKind::Expr(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FieldKind::Zero)
    }

    #[inline]
    pub fn b12(&self, x: &[f64]) -> f64 {
        match &self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::Constant(b) => *b,
            FieldKind::Expr(e) => e.eval(&[x[0], x[1]]),
        }
    }

    /// Component B_jk (0-based), antisymmetric in (j, k).
    pub fn component(&self, j: usize, k: usize, x: &[f64]) -> f64 {
        match (j, k) {
            (0, 1) => self.b12(x),
            (1, 0) => -self.b12(x),
            _ => 0.0,
        }
    }

    /// Declared sup-norm bounds of derivatives of B12 of order 0, 1, 2.
    pub fn derivative_bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Sampled sup norms of derivatives of order 0..=2 on a box, by central differences.
    pub fn sampled_bounds(&self, radius: f64, step: f64) -> Result<Vec<f64>> {
        if self.d == 1 {
            return Ok(vec![0.0; 3]);
        }
        let h = 1e-3;
        let n = (2.0 * radius / step).round() as i64;
        let mut out = [0.0f64; 3];
        for i in 0..=n {
            for j in 0..=n {
                let x = [-radius + i as f64 * step, -radius + j as f64 * step];
                let f = |dx: f64, dy: f64| self.b12(&[x[0] + dx, x[1] + dy]);
                let v = f(0.0, 0.0);
                if !v.is_finite() {
                    return Err(Error::InvalidWeight(format!("field not finite at {x:?}")));
                }
                let gx = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
                let gy = (f(0.0, h) - f(0.0, -h)) / (2.0 * h);
                let hxx = (f(h, 0.0) - 2.0 * v + f(-h, 0.0)) / (h * h);
                let hyy = (f(0.0, h) - 2.0 * v + f(0.0, -h)) / (h * h);
                let hxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                out[0] = out[0].max(v.abs());
                out[1] = out[1].max(gx.abs()).max(gy.abs());
                out[2] = out[2].max(hxx.abs()).max(hyy.abs()).max(hxy.abs());
            }
        }
        Ok(out.to_vec())
    }

    /// Checks the declared bounds on a probe box offset from the construction grid.
    pub fn verify_bounds(&self) -> Result<bool> {
        let s = self.sampled_bounds(PROBE_RADIUS - 0.1, PROBE_STEP * 0.8)?;
        Ok(s.iter().zip(&self.bounds).all(|(s, b)| *s <= *b + 1e-9))
    }
}

/// A pure-gauge addition g with its gradient.
#[derive(Clone)]
pub struct GradientTerm {
    pub label: String,
    g: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>,
}

impl fmt::Debug for GradientTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GradientTerm({})", self.label)
    }
}

impl GradientTerm {
    pub fn new(
        label: impl Into<String>,
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        Self { label: label.into(), g: Arc::new(g), grad: Arc::new(grad) }
    }

    /// g(x) = k·x.
    pub fn linear(k: [f64; 2]) -> Self {
        Self::new(
            format!("linear({},{})", k[0], k[1]),
            move |x| x.iter().zip(k).map(|(a, b)| a * b).sum(),
            move |x| if x.len() == 1 { [k[0], 0.0] } else { k },
        )
    }

    /// g(x) = amp · exp(-|x-c|²/(2w²)).
    pub fn gaussian_bump(amp: f64, center: [f64; 2], width: f64) -> Self {
        let val = move |x: &[f64]| {
            let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
            amp * (-r2 / (2.0 * width * width)).exp()
        };
        Self::new(
            format!("bump(amp={amp},c=({},{}),w={width})", center[0], center[1]),
            val,
            move |x: &[f64]| {
                let v = val(x);
                let mut g = [0.0; 2];
                for (i, xi) in x.iter().enumerate() {
                    g[i] = -v * (xi - center[i]) / (width * width);
                }
                g
            },
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; 2] {
        (self.grad)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Transversal,
    TransversalPlusGradient,
}

/// Vector potential: the transversal gauge of a field plus optional gradients.
#[derive(Debug, Clone)]
pub struct GaugePotential {
    field: MagneticField,
    gradients: Vec<GradientTerm>,
}

pub fn transversal_gauge(field: &MagneticField) -> GaugePotential {
    GaugePotential { field: field.clone(), gradients: Vec::new() }
}

impl GaugePotential {
    pub fn field(&self) -> &MagneticField {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.field.d
    }

    pub fn provenance(&self) -> Provenance {
        if self.gradients.is_empty() {
            Provenance::Transversal
        } else {
            Provenance::TransversalPlusGradient
        }
    }

    /// Gradients are always available: the transversal part is a quadrature and each
    /// gradient term ships its own derivative.
    pub fn gradient_available(&self) -> bool {
        true
    }

    pub fn gradients(&self) -> &[GradientTerm] {
        &self.gradients
    }

    pub fn with_gradient(&self, g: GradientTerm) -> Self {
        let mut out = self.clone();
        out.gradients.push(g);
        out
    }

    /// Sum of the gauge functions g at x.
    pub fn gauge_function(&self, x: &[f64]) -> f64 {
        self.gradients.iter().map(|g| g.value(x)).sum()
    }

    /// A(x).
    pub fn eval(&self, x: &[f64]) -> Result<[f64; 2]> {
        let origin = [0.0; 2];
        let mut a = relative_gauge(&self.field, x, &origin[..x.len()])?;
        for g in &self.gradients {
            let dg = g.gradient(x);
            a[0] += dg[0];
            a[1] += dg[1];
        }
        Ok(a)
    }
}

/// A(x; y), the transversal gauge centred at y.
pub fn relative_gauge(field: &MagneticField, x: &[f64], y: &[f64]) -> Result<[f64; 2]> {
    if field.d == 1 {
        return Ok([0.0; 2]);
    }
    let dx = [x[0] - y[0], x[1] - y[1]];
    let moment = match &field.kind {
        FieldKind::Zero => return Ok([0.0; 2]),
        FieldKind::Constant(b) => 0.5 * b,
        FieldKind::Expr(_) => {
            let v = quadrature::integrate(|s| [s * field.b12(&[y[0] + s * dx[0], y[1] + s * dx[1]])], x)?;
            v[0]
        }
    };
    // A_k(x;y) = Σ_j (x_j - y_j) ∫ s B_jk
    Ok([-dx[1] * moment, dx[0] * moment])
}

#[inline]
fn lex_less(x: &[f64], y: &[f64]) -> bool {
    for (a, b) in x.iter().zip(y) {
        if a != b {
            return a < b;
        }
    }
    false
}

/// Transversal part of φ(x, y) without any ordering convention.
fn transversal_circulation_raw(field: &MagneticField, x: &[f64], y: &[f64]) -> Result<f64> {
    match &field.kind {
        FieldKind::Zero => Ok(0.0),
        FieldKind::Constant(b) => Ok(0.5 * b * (x[1] * y[0] - x[0] * y[1])),
        FieldKind::Expr(_) => {
            // ∫_{[y,x]} A over the triangle (0, y, x): the cross term is constant along the segment.
            let cross = y[0] * x[1] - y[1] * x[0];
            if cross == 0.0 {
                return Ok(0.0);
            }
            let d = [x[0] - y[0], x[1] - y[1]];
            let mut pt = x.to_vec();
            pt.extend_from_slice(y);
            let v = quadrature::integrate_square(
                |t, s| s * field.b12(&[s * (y[0] + t * d[0]), s * (y[1] + t * d[1])]),
                &pt,
            )?;
            Ok(cross * v)
        }
    }
}

/// φ(x, y) = ∫_{[y,x]} A, the circulation along the segment from y to x.
///
/// The transversal part is evaluated in a canonical (lexicographic) orientation so
/// that antisymmetry holds to the last bit.
pub fn circulation(a: &GaugePotential, x: &[f64], y: &[f64]) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let field = &a.field;
    let mut phi = if field.d == 2 {
        if lex_less(x, y) {
            -transversal_circulation_raw(field, y, x)?
        } else {
            transversal_circulation_raw(field, x, y)?
        }
    } else {
        0.0
    };
    if !a.gradients.is_empty() {
        let (p, q, sign) = if lex_less(x, y) { (y, x, -1.0) } else { (x, y, 1.0) };
        let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
        let mut pt = p.to_vec();
        pt.extend_from_slice(q);
        let v = quadrature::integrate(
            |t| {
                let mut z = [0.0; 2];
                for i in 0..d.len() {
                    z[i] = q[i] + t * d[i];
                }
                let z = &z[..d.len()];
                let mut acc = 0.0;
                for g in &a.gradients {
                    let dg = g.gradient(z);
                    acc += dg.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
                }
                [acc]
            },
            &pt,
        );
        phi += sign * v?[0];
    }
    Ok(phi)
}

/// Γ(x, y, z) = ∫_{⟨x,y,z⟩} B, with the triangle oriented by its vertex order.
pub fn flux(field: &MagneticField, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
    if field.d == 1 {
        return Ok(0.0);
    }
    let u = [y[0] - x[0], y[1] - x[1]];
    let v = [z[0] - x[0], z[1] - x[1]];
    let cross = u[0] * v[1] - u[1] * v[0];
    match &field.kind {
        FieldKind::Zero => Ok(0.0),
        FieldKind::Constant(b) => Ok(0.5 * b * cross),
        FieldKind::Expr(_) => {
            if cross == 0.0 {
                return Ok(0.0);
            }
            let w = [z[0] - y[0], z[1] - y[1]];
            let pt = [x[0], x[1], y[0], y[1], z[0], z[1]];
            // P(s,t) = x + s(y-x) + st(z-y), Jacobian s·cross
            let val = quadrature::integrate_square(
                |s, t| s * field.b12(&[x[0] + s * u[0] + s * t * w[0], x[1] + s * u[1] + s * t * w[1]]),
                &pt,
            )?;
            Ok(cross * val)
        }
    }
}

/// max_j |∂_j φ(·, y)(x) − A_j(x) + A_j(x; y)| with central differences at step h.
pub fn magpotential_residual(a: &GaugePotential, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    let ax = a.eval(x)?;
    let rel = relative_gauge(a.field(), x, y)?;
    let mut worst = 0.0f64;
    for j in 0..2 {
        let (mut p, mut m) = ([x[0], x[1]], [x[0], x[1]]);
        p[j] += h;
        m[j] -= h;
        let d = (circulation(a, &p, y)? - circulation(a, &m, y)?) / (2.0 * h);
        worst = worst.max((d - ax[j] + rel[j]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn varying() -> MagneticField {
        MagneticField::from_expr("1 + 0.5*sin(x1)*cos(x2)").unwrap()
    }

    // Oracle: plain Gauss–Legendre at a fixed high order, independent of the adaptive path.
    fn gl_oracle(f: impl Fn(f64) -> f64) -> f64 {
        let r = quadrature::rule(256);
        r.nodes.iter().zip(&r.weights).map(|(x, w)| w * f(*x)).sum()
    }

    #[test]
    fn transversal_examples() {
        let a = transversal_gauge(&MagneticField::constant(1.0));
        let v = a.eval(&[1.0, 0.0]).unwrap();
        assert!((v[0]).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        let a3 = transversal_gauge(&MagneticField::constant(3.0));
        let v = a3.eval(&[2.0, 2.0]).unwrap();
        assert!((v[0] + 3.0).abs() < 1e-14 && (v[1] - 3.0).abs() < 1e-14);
        assert_eq!(a3.eval(&[0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn quadrature_matches_oracle_for_varying_field() {
        let f = varying();
        let x = [1.3, -0.7];
        let y = [-0.4, 0.9];
        let got = relative_gauge(&f, &x, &y).unwrap();
        let d = [x[0] - y[0], x[1] - y[1]];
        let m = gl_oracle(|s| s * f.b12(&[y[0] + s * d[0], y[1] + s * d[1]]));
        assert!((got[0] + d[1] * m).abs() < 1e-12);
        assert!((got[1] - d[0] * m).abs() < 1e-12);
        // circulation against a nested line integral of A(·;0)
        let a = transversal_gauge(&f);
        let phi = circulation(&a, &x, &y).unwrap();
        let line = gl_oracle(|t| {
            let z = [y[0] + t * d[0], y[1] + t * d[1]];
            let az = a.eval(&z).unwrap();
            az[0] * d[0] + az[1] * d[1]
        });
        assert!((phi - line).abs() < 1e-10, "{phi} vs {line}");
    }

    #[test]
    fn relative_gauge_examples() {
        let f = MagneticField::constant(1.0);
        assert_eq!(relative_gauge(&f, &[0.3, 0.4], &[0.3, 0.4]).unwrap(), [0.0, 0.0]);
        let x = [0.7, -1.1];
        let t = transversal_gauge(&f).eval(&x).unwrap();
        assert_eq!(relative_gauge(&f, &x, &[0.0, 0.0]).unwrap(), t);
        let v = relative_gauge(&f, &[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v[0] + 0.5).abs() < 1e-15 && v[1].abs() < 1e-15);
        let fe = MagneticField::from_expr("1 + 0*x1").unwrap();
        assert_eq!(fe.constant_value(), None);
        let q = relative_gauge(&fe, &[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((q[0] + 0.5).abs() < 1e-13 && q[1].abs() < 1e-13);
    }

    #[test]
    fn circulation_examples() {
        let a1 = transversal_gauge(&MagneticField::constant(1.0));
        assert!((circulation(&a1, &[1.0, 0.0], &[0.0, 1.0]).unwrap() + 0.5).abs() < 1e-15);
        let a2 = transversal_gauge(&MagneticField::constant(2.0));
        assert_eq!(circulation(&a2, &[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(circulation(&a2, &[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn flux_examples() {
        let o = [0.0, 0.0];
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        assert_eq!(flux(&MagneticField::constant(1.0), &o, &e1, &e2).unwrap(), 0.5);
        assert_eq!(flux(&MagneticField::constant(2.0), &o, &e1, &e2).unwrap(), 1.0);
        assert_eq!(flux(&MagneticField::constant(2.0), &o, &e1, &[2.0, 0.0]).unwrap(), 0.0);
        let fe = MagneticField::from_expr("1 + 0*x2").unwrap();
        assert!((flux(&fe, &o, &e1, &e2).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn stokes_sign_on_unit_triangle() {
        let f = MagneticField::constant(1.0);
        let a = transversal_gauge(&f);
        let (x, y, z) = ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        let s = circulation(&a, &x, &y).unwrap() + circulation(&a, &y, &z).unwrap() + circulation(&a, &z, &x).unwrap();
        let g = flux(&f, &x, &y, &z).unwrap();
        assert!((s - STOKES_SIGN * g).abs() < 1e-15);
    }

    #[test]
    fn stokes_for_varying_field() {
        let f = varying();
        let a = transversal_gauge(&f);
        let (x, y, z) = ([0.3, -1.2], [1.7, 0.4], [-0.9, 0.8]);
        let s = circulation(&a, &x, &y).unwrap() + circulation(&a, &y, &z).unwrap() + circulation(&a, &z, &x).unwrap();
        let g = flux(&f, &x, &y, &z).unwrap();
        assert!((s - STOKES_SIGN * g).abs() < 1e-8, "{s} {g}");
    }

    #[test]
    fn curl_of_transversal_gauge() {
        let f = varying();
        let a = transversal_gauge(&f);
        for x in [[0.3, 0.2], [-1.0, 2.0], [2.5, -0.5]] {
            let mut errs = vec![];
            for h in [0.1, 0.05] {
                let d = |i: usize, j: usize| {
                    let mut p = x;
                    let mut m = x;
                    p[j] += h;
                    m[j] -= h;
                    (a.eval(&p).unwrap()[i] - a.eval(&m).unwrap()[i]) / (2.0 * h)
                };
                errs.push((d(1, 0) - d(0, 1) - f.b12(&x)).abs());
            }
            assert!(errs[1] < 1e-3 && errs[1] < errs[0] / 3.0, "{errs:?}");
        }
    }

    #[test]
    fn magpotential_is_second_order() {
        let f = varying();
        let a = transversal_gauge(&f);
        let (x, y) = ([0.7, -0.4], [-1.1, 0.9]);
        let r: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|h| magpotential_residual(&a, &x, &y, *h).unwrap()).collect();
        assert!(r[0] > 1e-7, "{r:?}");
        for w in r.windows(2) {
            assert!((w[0] / w[1] - 4.0).abs() < 0.8, "{r:?}");
        }
    }

    #[test]
    fn gradient_terms_add_potential_difference() {
        let f = MagneticField::constant(1.0);
        let g = GradientTerm::gaussian_bump(0.7, [0.2, -0.1], 0.8);
        let a = transversal_gauge(&f).with_gradient(g.clone());
        assert_eq!(a.provenance(), Provenance::TransversalPlusGradient);
        let (x, y) = ([1.0, 0.5], [-0.3, 0.2]);
        let base = circulation(&transversal_gauge(&f), &x, &y).unwrap();
        let with = circulation(&a, &x, &y).unwrap();
        assert!((with - base - (g.value(&x) - g.value(&y))).abs() < 1e-12);
        assert_eq!(circulation(&a, &y, &x).unwrap(), -with);
    }

    #[test]
    fn derivative_bounds_hold() {
        let f = varying();
        assert!(f.verify_bounds().unwrap());
        assert_eq!(MagneticField::constant(2.0).derivative_bounds(), &[2.0, 0.0, 0.0]);
        assert!(MagneticField::for_dim(1, 1.0).is_err());
        assert!(MagneticField::zero(3).is_err());
    }
}
