//! Finite-difference check of every differentiable building block.
//!
//! cargo run --example gradient_check -- [seed]

use merit::autodiff::{standard_suite, GRAD_TOL};

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let results = standard_suite(seed, 10, 6, 5, 1e-6).unwrap();
    let mut worst: f64 = 0.0;
    for (name, r) in &results {
        worst = worst.max(r.max_rel_error);
        println!("{name:<28} {:>4} coords  max rel err {:.2e}", r.coords_checked, r.max_rel_error);
    }
    println!("worst {worst:.2e} (tolerance {GRAD_TOL:e})");
}
