// Frame matrix of a super operator: off-diagonal decay, and the operator rebuilt
// from its matrix.

use magsuper::frames::FrameSystem;
use magsuper::phase_space::{make_grid, sample_symbol};
use magsuper::rng::{random_kernel, seeded};
use magsuper::superop::{apply_super_tensor, dequantize_matrix, matrix_elements, SuperOperator, TensorSuperSymbol};
use magsuper::weyl::QuantizationContext;
use magsuper::window::FrameWindow;

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(1, 32, 4.0)?;
    let ctx = QuantizationContext::zero_field(g);
    let fs = FrameSystem::new(&ctx, FrameWindow::standard(1))?;
    let gauss = sample_symbol("exp(-(x^2+xi^2)/2)", g)?;
    let phi = TensorSuperSymbol::single(gauss.clone(), gauss)?;
    let op = SuperOperator::tensor(phi.clone(), &ctx)?;
    let bx = fs.default_box();
    let m = matrix_elements(&op, &fs, &bx)?;
    let fit = m.decay_fit(None)?;
    println!("box ({}, {}), {} indices per leg, fitted order {:.2}", bx.r_pos, bx.r_mom, m.leg_len(), fit.n_star);
    for (r, e) in fit.envelope.iter().take(6) {
        println!("  shell {r:>5.2}  max |M| {e:.3e}");
    }

    let rebuilt = dequantize_matrix(&m, &fs, &ctx)?;
    let t = random_kernel(&mut seeded(1), g);
    let err = apply_super_tensor(&rebuilt, &t, &ctx)?.rel_diff(&apply_super_tensor(&phi, &t, &ctx)?);
    println!("rebuilt from the truncated box, the operator differs by {err:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("matrix decay example");
}
