// A tensor super symbol applied two ways: as a sandwich, and through its full
// super Weyl kernel.

use magsuper::phase_space::{make_grid, sample_symbol};
use magsuper::rng::{random_kernel, seeded};
use magsuper::superop::{apply_super_tensor, super_weyl_kernel, SuperSymbolGrid, TensorSuperSymbol};
use magsuper::weyl::QuantizationContext;

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(1, 16, 4.0)?;
    let ctx = QuantizationContext::zero_field(g);
    let phi = TensorSuperSymbol::single(sample_symbol("exp(-((x-0.3)^2+xi^2)/2)", g)?, sample_symbol("exp(-(x^2+(xi-0.4)^2)/2)", g)?)?;
    let kernel = super_weyl_kernel(&SuperSymbolGrid::from_tensor(&phi)?, &ctx)?;
    let t = random_kernel(&mut seeded(3), g);
    let r = kernel.apply(&t)?.rel_diff(&apply_super_tensor(&phi, &t, &ctx)?);
    println!("super kernel vs sandwich: {r:.2e}");
    assert!(r < 1e-6);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("super kernel example");
}
