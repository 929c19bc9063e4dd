//! MPDO1 binary arrays, the MPDO1S sparse frame-matrix variant, and CSV export.
//!
//! MPDO1 layout: `b"MPDO1"`, u8 version, u64 d, u64 N, f64 L, u8 kind, then
//! kind-specific extra u64 fields, then little-endian interleaved (re, im) f64.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::frames::{FrameCoefficients, FrameIndexBox};
use crate::phase_space::{make_grid, GridSpec, KernelGrid, SymbolGrid};
use crate::superop::{FrameMatrix, MatrixRepr};
use crate::C64;

pub const MAGIC: &[u8; 5] = b"MPDO1";
pub const MAGIC_SPARSE: &[u8; 6] = b"MPDO1S";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ArrayKind {
    Symbol = 0,
    Function = 1,
    Kernel = 2,
    /// Extra header: u64 R_pos, u64 R_mom.
    Coefficients = 3,
}

impl ArrayKind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Self::Symbol,
            1 => Self::Function,
            2 => Self::Kernel,
            3 => Self::Coefficients,
            _ => return Err(Error::Format(format!("unknown array kind {v}"))),
        })
    }
}

/// A decoded MPDO1 file.
#[derive(Debug, Clone)]
pub enum Array {
    Symbol(SymbolGrid),
    Function(GridSpec, Vec<C64>),
    Kernel(KernelGrid),
    Coefficients(GridSpec, FrameCoefficients),
}

impl Array {
    pub fn grid(&self) -> GridSpec {
        match self {
            Array::Symbol(s) => s.grid,
            Array::Function(g, _) | Array::Coefficients(g, _) => *g,
            Array::Kernel(k) => k.grid,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Array::Symbol(_) => "symbol",
            Array::Function(..) => "function",
            Array::Kernel(_) => "kernel",
            Array::Coefficients(..) => "coefficients",
        }
    }
}

fn put_values(buf: &mut Vec<u8>, vals: impl Iterator<Item = C64>) {
    for v in vals {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
}

fn header(grid: &GridSpec, kind: ArrayKind) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(grid.d as u64).to_le_bytes());
    buf.extend_from_slice(&(grid.n as u64).to_le_bytes());
    buf.extend_from_slice(&grid.l.to_le_bytes());
    buf.push(kind as u8);
    buf
}

pub fn encode(a: &Array) -> Vec<u8> {
    match a {
        Array::Symbol(s) => {
            let mut b = header(&s.grid, ArrayKind::Symbol);
            put_values(&mut b, s.data.iter().copied());
            b
        }
        Array::Function(g, f) => {
            let mut b = header(g, ArrayKind::Function);
            put_values(&mut b, f.iter().copied());
            b
        }
        Array::Kernel(k) => {
            let mut b = header(&k.grid, ArrayKind::Kernel);
            let n = k.mat.nrows();
            put_values(&mut b, (0..n * n).map(|i| k.mat[(i / n, i % n)]));
            b
        }
        Array::Coefficients(g, c) => {
            let mut b = header(g, ArrayKind::Coefficients);
            b.extend_from_slice(&(c.bx.r_pos as u64).to_le_bytes());
            b.extend_from_slice(&(c.bx.r_mom as u64).to_le_bytes());
            put_values(&mut b, c.values.iter().copied());
            b
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("truncated file at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn values(&mut self, n: usize) -> Result<Vec<C64>> {
        (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect()
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode(buf: &[u8]) -> Result<Array> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(5)? != MAGIC || buf.get(5) == Some(&b'S') {
        return Err(Error::Format("not an MPDO1 array".into()));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = c.u64()? as usize;
    let n = c.u64()? as usize;
    let l = c.f64()?;
    let grid = make_grid(d, n, l)?;
    let kind = ArrayKind::from_u8(c.u8()?)?;
    let out = match kind {
        ArrayKind::Symbol => Array::Symbol(SymbolGrid::new(grid, c.values(grid.symbol_len())?)?),
        ArrayKind::Function => Array::Function(grid, c.values(grid.points())?),
        ArrayKind::Kernel => {
            let np = grid.points();
            let v = c.values(np * np)?;
            Array::Kernel(KernelGrid::new(grid, DMatrix::from_row_slice(np, np, &v))?)
        }
        ArrayKind::Coefficients => {
            let bx = FrameIndexBox::new(c.u64()? as i64, c.u64()? as i64);
            let indices = bx.indices(d);
            let values = c.values(indices.len())?;
            Array::Coefficients(grid, FrameCoefficients { bx, indices, values })
        }
    };
    c.finish()?;
    Ok(out)
}

pub fn write_array(path: &Path, a: &Array) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode(a))?;
    Ok(())
}

pub fn read_array(path: &Path) -> Result<Array> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn read_symbol(path: &Path) -> Result<SymbolGrid> {
    match read_array(path)? {
        Array::Symbol(s) => Ok(s),
        other => Err(Error::Format(format!("{}: expected symbol, found {}", path.display(), other.kind_name()))),
    }
}

pub fn read_kernel(path: &Path) -> Result<KernelGrid> {
    match read_array(path)? {
        Array::Kernel(k) => Ok(k),
        other => Err(Error::Format(format!("{}: expected kernel, found {}", path.display(), other.kind_name()))),
    }
}

/// MPDO1S: magic, u8 version, u64 d, f64 ω₀, u64 R_pos, u64 R_mom, u64 count, then per
/// entry the indices α, α′, β, β′, γ, γ′, δ, δ′ (d i64 each) followed by (re, im).
pub fn encode_sparse(m: &FrameMatrix) -> Vec<u8> {
    let idx = m.indices();
    let entries = m.entries();
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC_SPARSE);
    b.push(VERSION);
    b.extend_from_slice(&(m.d as u64).to_le_bytes());
    b.extend_from_slice(&m.omega0.to_le_bytes());
    b.extend_from_slice(&(m.bx.r_pos as u64).to_le_bytes());
    b.extend_from_slice(&(m.bx.r_mom as u64).to_le_bytes());
    b.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (t, v) in entries {
        for k in t {
            let fi = idx[k];
            for part in [fi.pos, fi.mom] {
                for j in 0..m.d {
                    b.extend_from_slice(&part[j].to_le_bytes());
                }
            }
        }
        b.extend_from_slice(&v.re.to_le_bytes());
        b.extend_from_slice(&v.im.to_le_bytes());
    }
    b
}

pub fn decode_sparse(buf: &[u8]) -> Result<FrameMatrix> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(6)? != MAGIC_SPARSE {
        return Err(Error::Format("not an MPDO1S matrix".into()));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = c.u64()? as usize;
    if !(1..=2).contains(&d) {
        return Err(Error::Format(format!("dimension {d}")));
    }
    let omega0 = c.f64()?;
    let bx = FrameIndexBox::new(c.u64()? as i64, c.u64()? as i64);
    let count = c.u64()? as usize;
    let n = bx.len(d);
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let mut pos = [0usize; 4];
        for p in pos.iter_mut() {
            let mut fi = crate::frames::FrameIndex::zero();
            for j in 0..d {
                fi.pos[j] = c.i64()?;
            }
            for j in 0..d {
                fi.mom[j] = c.i64()?;
            }
            *p = bx.position_of(&fi, d).ok_or_else(|| Error::Format(format!("index {fi:?} outside box")))?;
        }
        let v = C64::new(c.f64()?, c.f64()?);
        map.insert((pos[0] * n + pos[1], pos[2] * n + pos[3]), v);
    }
    c.finish()?;
    Ok(FrameMatrix { d, bx, omega0, repr: MatrixRepr::Sparse(map), weight: None })
}

pub fn write_sparse(path: &Path, m: &FrameMatrix) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_sparse(m))?;
    Ok(())
}

pub fn read_sparse(path: &Path) -> Result<FrameMatrix> {
    decode_sparse(&std::fs::read(path)?)
}

fn multi(a: &[i64; 2], d: usize) -> String {
    if d == 1 { a[0].to_string() } else { format!("{};{}", a[0], a[1]) }
}

/// CSV with columns α, α′, β, β′, γ, γ′, δ, δ′, re, im. Multi-indices in d = 2 are `i;j`.
pub fn frame_matrix_csv(m: &FrameMatrix) -> String {
    let idx = m.indices();
    let mut s = String::from("alpha,alpha_prime,beta,beta_prime,gamma,gamma_prime,delta,delta_prime,re,im\n");
    for (t, v) in m.entries() {
        for k in t {
            s.push_str(&format!("{},{},", multi(&idx[k].pos, m.d), multi(&idx[k].mom, m.d)));
        }
        s.push_str(&format!("{:e},{:e}\n", v.re, v.im));
    }
    s
}

/// A 1-d slice of a symbol at fixed momentum index (d = 1) or a position-axis slice (d = 2).
pub fn symbol_slice_csv(s: &SymbolGrid, momentum_index: usize) -> String {
    let g = s.grid;
    let mut out = String::from("x,re,im\n");
    let m = if g.d == 1 { momentum_index } else { g.flatten([momentum_index, momentum_index]) };
    let np = g.points();
    for p in 0..np {
        let u = g.unflatten(p);
        if g.d == 2 && u[1] != g.n / 2 {
            continue;
        }
        let v = s.at(p, m);
        out.push_str(&format!("{},{:e},{:e}\n", g.x_coord(u[0]), v.re, v.im));
    }
    out
}

/// Sampled function as CSV (x or x1,x2; re; im).
pub fn function_csv(g: &GridSpec, f: &[C64]) -> String {
    let mut out = String::from(if g.d == 1 { "x,re,im\n" } else { "x1,x2,re,im\n" });
    for (p, v) in f.iter().enumerate() {
        let x = g.position(p);
        if g.d == 1 {
            out.push_str(&format!("{},{:e},{:e}\n", x[0], v.re, v.im));
        } else {
            out.push_str(&format!("{},{},{:e},{:e}\n", x[0], x[1], v.re, v.im));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::FrameSystem;
    use crate::phase_space::sample_symbol;
    use crate::rng::{random_kernel, seeded};
    use crate::superop::{matrix_elements, SuperOperator, TensorSuperSymbol};
    use crate::weyl::QuantizationContext;
    use crate::window::FrameWindow;

    #[test]
    fn array_round_trips() {
        let g = make_grid(2, 8, 2.0).unwrap();
        let s = sample_symbol("exp(-(x1^2+x2^2+xi1^2+xi2^2)/2)", g).unwrap();
        let Array::Symbol(back) = decode(&encode(&Array::Symbol(s.clone()))).unwrap() else { panic!() };
        assert_eq!(back.data, s.data);
        let k = random_kernel(&mut seeded(3), g);
        let Array::Kernel(kb) = decode(&encode(&Array::Kernel(k.clone()))).unwrap() else { panic!() };
        assert_eq!(kb.mat, k.mat);
        let bytes = encode(&Array::Kernel(k));
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(b"MPDX1").is_err());
    }

    #[test]
    fn sparse_round_trip() {
        let g = make_grid(1, 16, 2.0).unwrap();
        let ctx = QuantizationContext::zero_field(g);
        let frames = FrameSystem::new(&ctx, FrameWindow::standard(1)).unwrap();
        let phi = sample_symbol("exp(-(x^2+xi^2)/2)", g).unwrap();
        let op = SuperOperator::tensor(TensorSuperSymbol::single(phi.clone(), phi).unwrap(), &ctx).unwrap();
        let bx = FrameIndexBox::new(1, 1);
        let m = matrix_elements(&op, &frames, &bx).unwrap();
        let back = decode_sparse(&encode_sparse(&m)).unwrap();
        for (t, v) in m.entries() {
            assert_eq!(back.entry(t[0], t[1], t[2], t[3]), v);
        }
        assert_eq!(back.nnz(), m.entries().len());
        let csv = frame_matrix_csv(&m);
        assert_eq!(csv.lines().count(), m.entries().len() + 1);
    }
}
