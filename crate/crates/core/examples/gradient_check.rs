// Compares the hand-written backward pass against central differences.
//
// `cargo run --release --example gradient_check`

use mixtag::nn::gradcheck::{grad_check, linear_check, DropoutCheck, GradCheckConfig};

pub fn run_example() -> mixtag::Result<()> {
    for dropout in [DropoutCheck::Disabled, DropoutCheck::FrozenMask] {
        let report = grad_check(&GradCheckConfig { dropout, ..GradCheckConfig::default() }, 1)?;
        println!("{dropout:?}: {} coordinates, {} near kinks", report.checked(), report.kinks());
        for g in &report.groups {
            println!("  {:<24} {:.2e}", g.name, g.max_rel_error);
        }
        assert!(report.passed(1e-4), "{:?}", report.failures(1e-4));
    }
    let linear = linear_check(1)?;
    println!("linear head: {:.2e}", linear.max_rel_error());
    Ok(())
}

fn main() -> mixtag::Result<()> {
    run_example()
}
