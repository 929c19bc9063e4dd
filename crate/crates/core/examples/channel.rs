// A Kraus channel from a momentum partition, with and without a field.

use magsuper::channels::{apply_channel, choi_check, kraus_verify, ChannelSpec};
use magsuper::phase_space::make_grid;
use magsuper::rng::{random_psd, seeded};
use magsuper::weyl::QuantizationContext;

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(1, 32, 4.0)?;
    let spec = ChannelSpec::partition(&QuantizationContext::zero_field(g), 4, None)?;
    let rho = random_psd(&mut seeded(4), g, 3);
    let out = apply_channel(&spec, &rho)?;
    println!("B=0: {} Kraus operators, trace {:.12} -> {:.12}", spec.len(), rho.trace().re, out.trace().re);
    let choi = choi_check(&spec, 16)?;
    println!("B=0: Choi spectrum [{:.2e}, {:.3}]", choi.min_eigenvalue, choi.max_eigenvalue);

    let g2 = make_grid(2, 8, 2.0)?;
    let magnetic = ChannelSpec::partition(&QuantizationContext::constant(g2, 1.0)?, 2, None)?;
    let rep = kraus_verify(&magnetic)?;
    println!(
        "b=1: completeness {:.1e} (pointwise conjugate: {:.2}), partial sums in [0, 1]: {}",
        rep.final_deviation, rep.conj_deviation, rep.bounded
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("channel example");
}
