// Circulations, fluxes and the Stokes cocycle for a varying field.

use magsuper::geometry::{circulation, flux, magpotential_residual, transversal_gauge, MagneticField, STOKES_SIGN};

pub fn run_example() -> magsuper::Result<()> {
    let field = MagneticField::from_expr("1 + 0.5*sin(x1)*cos(x2)")?;
    let a = transversal_gauge(&field);
    let (x, y, z) = ([0.3, -1.2], [1.7, 0.4], [-0.9, 0.8]);
    let loop_sum = circulation(&a, &x, &y)? + circulation(&a, &y, &z)? + circulation(&a, &z, &x)?;
    let gamma = flux(&field, &x, &y, &z)?;
    println!("circulation around triangle {loop_sum:.12}, s*flux {:.12}", STOKES_SIGN * gamma);
    assert!((loop_sum - STOKES_SIGN * gamma).abs() < 1e-8);

    for h in [0.1, 0.05, 0.025] {
        println!("h = {h:<6} potential identity residual {:.3e}", magpotential_residual(&a, &x, &y, h)?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("geometry example");
}
