// Moyal, semi-super and super products against operator composition.

use magsuper::phase_space::{make_grid, sample_symbol};
use magsuper::rng::{random_kernel, seeded};
use magsuper::superop::{apply_super_tensor, semi_super_product, super_product, TensorSuperSymbol};
use magsuper::weyl::{moyal, weyl_kernel, QuantizationContext};

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(2, 16, 4.0)?;
    let ctx = QuantizationContext::constant(g, 1.0)?;
    let a = sample_symbol("exp(-((x1-0.3)^2+x2^2+xi1^2+xi2^2)/2)", g)?;
    let b = sample_symbol("exp(-(x1^2+x2^2+(xi1+0.4)^2+xi2^2)/2)", g)?;
    let ab = moyal(&a, &b, &ctx)?;
    let direct = weyl_kernel(&a, &ctx)?.compose(&weyl_kernel(&b, &ctx)?)?;
    println!("b=1: op(a # b) vs op(a)op(b): {:.2e}", weyl_kernel(&ab, &ctx)?.rel_diff(&direct));

    // super products on a 1d grid
    let g1 = make_grid(1, 32, 4.0)?;
    let c1 = QuantizationContext::zero_field(g1);
    let s = |e: &str| sample_symbol(e, g1);
    let phi = TensorSuperSymbol::single(s("exp(-((x-0.3)^2+xi^2)/2)")?, s("exp(-(x^2+(xi-0.4)^2)/2)")?)?;
    let psi = TensorSuperSymbol::single(s("exp(-(x^2+(xi+0.3)^2)/2)")?, s("exp(-((x-0.5)^2+xi^2)/2)")?)?;
    let t = random_kernel(&mut seeded(2), g1);
    let lhs = apply_super_tensor(&super_product(&phi, &psi, &c1)?, &t, &c1)?;
    let rhs = apply_super_tensor(&phi, &apply_super_tensor(&psi, &t, &c1)?, &c1)?;
    println!("super product vs composition: {:.2e}", lhs.rel_diff(&rhs));

    let chi = s("exp(-(x^2+xi^2)/2)")?;
    let semi = semi_super_product(&TensorSuperSymbol::identity(g1), &chi, &c1)?;
    println!("(1 x 1) semi-product leaves chi fixed: {:.2e}", semi.rel_diff(&chi));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("products example");
}
