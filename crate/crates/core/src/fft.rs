//! FFT plan registry and axis-wise transforms on row-major arrays.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::C64;

type PlanMap = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

fn registry() -> &'static RwLock<PlanMap> {
    static REG: OnceLock<RwLock<PlanMap>> = OnceLock::new();
    REG.get_or_init(|| RwLock::new(HashMap::new()))
}

pub fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    if let Some(p) = registry().read().unwrap().get(&(n, inverse)) {
        return p.clone();
    }
    let mut w = registry().write().unwrap();
    w.entry((n, inverse))
        .or_insert_with(|| {
            let dir = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
            FftPlanner::new().plan_fft(n, dir)
        })
        .clone()
}

/// Unnormalized transform along `axis` of an array with the given row-major shape.
/// Forward is Σ e^{-2πi jk/n}, inverse Σ e^{+2πi jk/n}.
pub fn fft_axis(data: &mut [C64], shape: &[usize], axis: usize, inverse: bool) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let block = len * inner;
    debug_assert_eq!(data.len() % block, 0);
    let p = plan(len, inverse);
    if inner == 1 {
        data.par_chunks_mut(len).for_each(|line| p.process(line));
        return;
    }
    data.par_chunks_mut(block).for_each(|chunk| {
        let mut line = vec![C64::new(0.0, 0.0); len];
        for i in 0..inner {
            for k in 0..len {
                line[k] = chunk[k * inner + i];
            }
            p.process(&mut line);
            for k in 0..len {
                chunk[k * inner + i] = line[k];
            }
        }
    });
}

/// Signed frequency of FFT bin k, in [-n/2, n/2).
#[inline]
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Half-sample shift along `axis`: f(x) -> f(x + sign·Δ/2) for a periodic band-limited
/// interpolant. The Nyquist bin is left untouched so the map stays real and unitary.
pub fn half_shift_axis(data: &mut [C64], shape: &[usize], axis: usize, sign: f64) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    fft_axis(data, shape, axis, false);
    let mult: Vec<C64> = (0..n)
        .map(|k| {
            let f = signed_freq(k, n);
            if f == -(n as i64) / 2 {
                C64::new(1.0 / n as f64, 0.0)
            } else {
                C64::from_polar(1.0 / n as f64, sign * std::f64::consts::PI * f as f64 / n as f64)
            }
        })
        .collect();
    let block = n * inner;
    data.par_chunks_mut(block).for_each(|chunk| {
        for k in 0..n {
            let m = mult[k];
            for v in &mut chunk[k * inner..(k + 1) * inner] {
                *v *= m;
            }
        }
    });
    fft_axis(data, shape, axis, true);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft(x: &[C64], inverse: bool) -> Vec<C64> {
        let n = x.len();
        let s = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| x[j] * C64::from_polar(1.0, s * 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn axis_transform_matches_dft() {
        let shape = [4, 8, 2];
        let data: Vec<C64> = (0..64).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        for axis in 0..3 {
            for inv in [false, true] {
                let mut d = data.clone();
                fft_axis(&mut d, &shape, axis, inv);
                // compare one line
                let inner: usize = shape[axis + 1..].iter().product();
                let line: Vec<C64> = (0..shape[axis]).map(|k| data[k * inner + 1 % inner.max(1)]).collect();
                let want = dft(&line, inv);
                for k in 0..shape[axis] {
                    assert!((d[k * inner + 1 % inner.max(1)] - want[k]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn half_shift_of_trig_polynomial() {
        let n = 16;
        let x: Vec<f64> = (0..n).map(|j| j as f64 * 2.0 * std::f64::consts::PI / n as f64).collect();
        let mut d: Vec<C64> = x.iter().map(|t| C64::new((2.0 * t).cos() + (3.0 * t).sin(), 0.0)).collect();
        half_shift_axis(&mut d, &[n], 0, 1.0);
        let h = std::f64::consts::PI / n as f64;
        for j in 0..n {
            let t = x[j] + h;
            assert!((d[j].re - ((2.0 * t).cos() + (3.0 * t).sin())).abs() < 1e-13);
        }
        let orig = d.clone();
        half_shift_axis(&mut d, &[n], 0, 1.0);
        half_shift_axis(&mut d, &[n], 0, -1.0);
        for j in 0..n {
            assert!((d[j] - orig[j]).norm() < 1e-13);
        }
    }
}
