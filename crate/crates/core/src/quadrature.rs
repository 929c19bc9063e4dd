//! Gauss–Legendre rules on [0, 1] with order doubling.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const BASE_ORDER: usize = 16;
pub const MAX_ORDER: usize = 256;
pub const TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn unit_rule(n: usize) -> Rule {
    let r = legendre_rule(n);
    Rule {
        nodes: r.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: r.weights.iter().map(|w| 0.5 * w).collect(),
    }
}

/// Cached rule of order `n` (16, 32, ..., 256) on [0, 1].
pub fn rule(n: usize) -> &'static Rule {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let mut v = Vec::new();
        let mut k = BASE_ORDER;
        while k <= MAX_ORDER {
            v.push(unit_rule(k));
            k *= 2;
        }
        v
    });
    let idx = (n / BASE_ORDER).trailing_zeros() as usize;
    assert!(n.is_power_of_two() && n >= BASE_ORDER && n <= MAX_ORDER, "unsupported order {n}");
    &rules[idx]
}

fn close<const K: usize>(a: &[f64; K], b: &[f64; K]) -> (bool, f64) {
    let mut err = 0.0f64;
    let mut scale = 1.0f64;
    for i in 0..K {
        err = err.max((a[i] - b[i]).abs());
        scale = scale.max(b[i].abs());
    }
    (err <= TOL * scale, err)
}

/// Integrates a K-vector valued `f` over [0, 1], doubling the order from 16
/// until successive estimates agree to 1e-10 (relative to max(1, |I|)).
pub fn integrate<const K: usize, F: Fn(f64) -> [f64; K]>(f: F, point: &[f64]) -> Result<[f64; K]> {
    let eval = |n: usize| {
        let r = rule(n);
        let mut acc = [0.0; K];
        for (x, w) in r.nodes.iter().zip(&r.weights) {
            let v = f(*x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        acc
    };
    let mut prev = eval(BASE_ORDER);
    let mut n = BASE_ORDER * 2;
    let mut last_err = f64::INFINITY;
    while n <= MAX_ORDER {
        let cur = eval(n);
        let (ok, err) = close(&prev, &cur);
        if ok {
            return Ok(cur);
        }
        last_err = err;
        prev = cur;
        n *= 2;
    }
    Err(Error::Quadrature { point: point.to_vec(), err: last_err })
}

/// Tensor-product rule on [0, 1]^2 with the same doubling policy.
pub fn integrate_square<F: Fn(f64, f64) -> f64>(f: F, point: &[f64]) -> Result<f64> {
    let eval = |n: usize| {
        let r = rule(n);
        let mut acc = 0.0;
        for (s, ws) in r.nodes.iter().zip(&r.weights) {
            let mut inner = 0.0;
            for (t, wt) in r.nodes.iter().zip(&r.weights) {
                inner += wt * f(*s, *t);
            }
            acc += ws * inner;
        }
        acc
    };
    let mut prev = eval(BASE_ORDER);
    let mut n = BASE_ORDER * 2;
    let mut last_err = f64::INFINITY;
    while n <= MAX_ORDER {
        let cur = eval(n);
        let (ok, err) = close(&[prev], &[cur]);
        if ok {
            return Ok(cur);
        }
        last_err = err;
        prev = cur;
        n *= 2;
    }
    Err(Error::Quadrature { point: point.to_vec(), err: last_err })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_polynomials_exact() {
        for n in [16, 32, 64, 128, 256] {
            let r = rule(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n} sum={s}");
            // degree 2n-1 exact
            let deg = 2 * n - 1;
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adaptive_converges_on_smooth() {
        let v = integrate(|t| [(3.0 * t).sin(), t.exp()], &[]).unwrap();
        assert!((v[0] - (1.0 - 3f64.cos()) / 3.0).abs() < 1e-13);
        assert!((v[1] - (1f64.exp() - 1.0)).abs() < 1e-13);
        let w = integrate_square(|s, t| s * t, &[]).unwrap();
        assert!((w - 0.25).abs() < 1e-14);
    }

    #[test]
    fn reports_nonconvergence() {
        let e = integrate(|t| [(1.0 / (t - 0.3)).sin()], &[1.0, 2.0]);
        assert!(matches!(e, Err(Error::Quadrature { .. })));
    }
}
