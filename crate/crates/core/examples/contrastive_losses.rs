//! Loss values for aligned, noisy and unrelated embedding pairs.

use merit::augment::seeded_rng;
use merit::autodiff::Tape;
use merit::losses::merit_objective;
use merit::DenseMatrix;
use rand::Rng;

fn main() {
    let mut rng = seeded_rng(0);
    let (s, d) = (32, 16);
    let base = DenseMatrix::from_fn(s, d, |_, _| rng.random_range(-1.0..1.0));

    for noise in [0.0, 0.3, 1.0, 10.0] {
        let jitter = |rng: &mut merit::augment::MeritRng| {
            DenseMatrix::from_fn(s, d, |i, j| base.get(i, j) + noise * rng.random_range(-1.0..1.0))
        };
        let views: Vec<DenseMatrix> = (0..4).map(|_| jitter(&mut rng)).collect();
        let mut t = Tape::new();
        let x: Vec<_> = views.into_iter().map(|v| t.constant(v)).collect();
        let o = merit_objective(&mut t, x[0], x[1], x[2], x[3], 0.6, 1.0).unwrap();
        println!(
            "noise {noise:<5} l_cn {:.4}  l_cv {:.4}  total {:.4}",
            t.scalar(o.l_cn),
            t.scalar(o.l_cv),
            t.scalar(o.total)
        );
    }
    println!("chance level for {s} nodes: ln({s}) = {:.4}", (s as f64).ln());
}
