// Singular values of a super operator with and without Sobolev conjugation.

use magsuper::analysis::{super_bound_probe, ProbeMode, SobolevParams};
use magsuper::phase_space::{make_grid, sample_symbol};
use magsuper::superop::TensorSuperSymbol;
use magsuper::weyl::QuantizationContext;

pub fn run_example() -> magsuper::Result<()> {
    for n in [16, 32] {
        let g = make_grid(1, n, 4.0)?;
        let ctx = QuantizationContext::zero_field(g);
        let gauss = sample_symbol("exp(-(x^2+xi^2)/2)", g)?;
        let phi = TensorSuperSymbol::single(gauss.clone(), gauss)?;
        let plain = super_bound_probe(&phi, ProbeMode::Schatten { p: 1.0 }, SobolevParams::default(), &ctx, 0)?;
        let s = SobolevParams { s_l: 1.0, s_r: 1.0, s_l_prime: 0.0, s_r_prime: 0.0 };
        let sob = super_bound_probe(&phi, ProbeMode::Bounded, s, &ctx, 0)?;
        println!(
            "N={n}: norm {:.6}, S1 {:.6}, S2 {:.6}, tail {:.1e}; with s=(1,1,0,0) norm {:.6}",
            plain.operator_norm, plain.schatten["1"], plain.schatten["2"], plain.tail_ratio, sob.operator_norm
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("bound probe example");
}
