//! Runs every acceptance criterion and prints one line per criterion.

use qpspectra::verify::{run_criterion, Suite};

const SEED: u64 = 20240611;

fn main() {
    let mut failed = Vec::new();
    for id in Suite::Core.ids() {
        let r = run_criterion(id, SEED);
        println!("{}", r.line());
        if !r.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", Suite::Core.ids().len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
