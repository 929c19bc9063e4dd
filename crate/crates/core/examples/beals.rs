// Commutators with position and momentum in frame coordinates.

use magsuper::frames::{FrameIndex, FrameIndexBox, FrameSystem};
use magsuper::phase_space::{make_grid, sample_symbol};
use magsuper::superop::{beals_commutator, beals_identity, beals_residual, matrix_elements, Generator, SuperOperator, TensorSuperSymbol};
use magsuper::weyl::QuantizationContext;
use magsuper::window::FrameWindow;

pub fn run_example() -> magsuper::Result<()> {
    let g = make_grid(1, 32, 4.0)?;
    let ctx = QuantizationContext::zero_field(g);
    let fs = FrameSystem::new(&ctx, FrameWindow::standard(1))?;
    let probe = [FrameIndex::new([0, 0], [0, 0]), FrameIndex::new([1, 0], [-1, 0]), FrameIndex::new([-1, 0], [2, 0])];

    let s = sample_symbol("(2+cos(pi*x/4))*(2+sin(xi))", g)?;
    let op = SuperOperator::tensor(TensorSuperSymbol::single(s.clone(), s)?, &ctx)?;
    let bx = FrameIndexBox::new(2, 5);
    let base = matrix_elements(&op, &fs, &bx)?.decay_fit(None)?;
    println!("base order {:.2} over shells {:?}", base.n_star, base.range);
    for gen in Generator::all(1) {
        let res = beals_residual(&beals_identity(&op, gen, &fs, &probe)?);
        let fit = matrix_elements(&beals_commutator(&op, gen, &ctx)?, &fs, &bx)?.decay_fit(None)?.refit(base.range)?;
        println!("{:<6} identity residual {res:.1e}, commutator order {:.2}", gen.label(), fit.n_star);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("beals example");
}
