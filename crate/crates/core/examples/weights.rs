// Lemma checks on the builtin weight corpus.

use magsuper::weights::{builtin_corpus, lemma_suite};

pub fn run_example() -> magsuper::Result<()> {
    println!("{:<36} {:>3} {:>9} {:>6} {:>9} {:>5}", "weight", "dim", "lebesgue", "decay", "sandwich", "pass");
    for m in builtin_corpus() {
        let r = lemma_suite(&m)?;
        println!("{:<36} {:>3} {:>9} {:>6} {:>9.4} {:>5}", r.weight, r.dim, r.lebesgue_pass, r.decay_pass, r.sandwich_constant, r.pass);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("weights example");
}
