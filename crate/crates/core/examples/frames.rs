// Frame analysis and synthesis of a function and of an operator.

use magsuper::frames::FrameSystem;
use magsuper::phase_space::{l2_norm, make_grid, sample_function, sample_symbol};
use magsuper::weyl::{weyl_kernel, QuantizationContext};
use magsuper::window::FrameWindow;
use magsuper::C64;

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(1, 64, 8.0)?;
    let ctx = QuantizationContext::zero_field(g);
    let fs = FrameSystem::new(&ctx, FrameWindow::standard(1))?;
    let f = sample_function(&g, |x| C64::new((-x[0] * x[0] / 2.0).exp(), 0.0));

    for (name, bx) in [("full", fs.full_box()), ("default", fs.default_box())] {
        let c = fs.analyze(&f, &bx)?;
        let back = fs.synthesize(&c)?;
        let diff: Vec<C64> = back.iter().zip(&f).map(|(a, b)| a - b).collect();
        println!(
            "{name:<8} box ({}, {}): {} coefficients, energy {:.12} vs |f|^2 {:.12}, synthesis error {:.1e}",
            bx.r_pos,
            bx.r_mom,
            c.values.len(),
            c.energy(),
            l2_norm(&g, &f).powi(2),
            l2_norm(&g, &diff)
        );
    }

    let k = weyl_kernel(&sample_symbol("exp(-(x^2+xi^2)/2)", g)?, &ctx)?;
    let e = fs.hs_coefficient_energy(&k, &fs.full_box())?;
    println!("HS level: coefficient energy {e:.12} vs |K|_HS^2 {:.12}", k.hs_norm().powi(2));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("frames example");
}
