//! PPR diffusion of a small graph by dense solve and by power series.
//!
//! cargo run --example ppr_diffusion -- [alpha]

use merit::augment::{ppr_diffusion_exact, ppr_power_series};
use merit::SparseMatrix;

fn main() {
    let alpha: f64 = std::env::args().nth(1).map_or(0.15, |s| s.parse().expect("alpha"));

    // two triangles joined by a bridge 2-3
    let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)];
    let a = SparseMatrix::from_triplets(6, 6, edges.iter().flat_map(|&(i, j)| [(i, j, 1.0), (j, i, 1.0)]))
        .unwrap();

    let exact = ppr_diffusion_exact(&a, alpha).unwrap();
    let series = ppr_power_series(&a, alpha, 10_000, 1e-12).unwrap();
    println!("alpha = {alpha}");
    for i in 0..6 {
        let row: Vec<String> = exact.row(i).iter().map(|v| format!("{v:.4}")).collect();
        println!("  {}", row.join("  "));
    }
    println!("max |exact - series| = {:.2e}", exact.max_abs_diff(&series));

    for alpha in [0.05, 0.15, 0.5, 0.9] {
        let s = ppr_diffusion_exact(&a, alpha).unwrap();
        println!(
            "alpha {alpha:<4}  self {:.3}  neighbour {:.3}  far side {:.3}",
            s.get(0, 0),
            s.get(0, 1),
            s.get(0, 5)
        );
    }
}
