// Weyl kernels with and without a magnetic field, and their exact inverse.

use magsuper::phase_space::{make_grid, sample_symbol};
use magsuper::weyl::{weyl_dequantize, weyl_kernel, QuantizationContext};

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(1, 64, 8.0)?;
    let phi = sample_symbol("exp(-(x^2+xi^2)/2)", g)?;
    let ctx = QuantizationContext::zero_field(g);
    let k = weyl_kernel(&phi, &ctx)?;
    println!("d=1: |K|_HS = {:.10} (|phi|_2 / sqrt(2pi) = {:.10})", k.hs_norm(), phi.norm_l2() / (2.0 * std::f64::consts::PI).sqrt());
    println!("d=1: round trip {:.2e}", weyl_dequantize(&k, &ctx)?.rel_diff(&phi));

    let g2 = make_grid(2, 16, 4.0)?;
    let phi2 = sample_symbol("exp(-(x1^2+x2^2+xi1^2+xi2^2)/2)", g2)?;
    let magnetic = QuantizationContext::constant(g2, 1.0)?;
    let k2 = weyl_kernel(&phi2, &magnetic)?;
    let r = weyl_dequantize(&k2, &magnetic)?.rel_diff(&phi2);
    println!("d=2, b=1: round trip {r:.2e}");
    assert!(r < 1e-6);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("quantization example");
}
