mod common;

use common::*;
use merit::augment::{
    ppr_diffusion_exact, ppr_power_series, seeded_rng, GraphView, PropagationOperator,
};
use merit::autodiff::Tape;
use merit::eval::{probe_accuracy, probe_fit, LinearProbe};
use merit::graph::{symmetric_normalize, transition_matrix};
use merit::losses;
use merit::model::{MeritModel, Readout};
use merit::trainer::{adam_step, AdamParams, OptimizerState};
use merit::{DataSplit, DenseMatrix, Graph, SparseMatrix};
use rand::Rng;

#[test]
fn normalization_matches_definition() {
    let mut rng = seeded_rng(11);
    for n in [1, 2, 5, 17] {
        let a = random_graph(&mut rng, n, 0.3);
        for loops in [true, false] {
            let got = symmetric_normalize(&a, loops).unwrap().to_dense();
            assert!(max_diff(&gcn_norm(&a, loops), &got) < 1e-15);
        }
    }
}

#[test]
fn spmm_matches_dense_product() {
    let mut rng = seeded_rng(12);
    let a = symmetric_normalize(&random_graph(&mut rng, 30, 0.2), true).unwrap();
    let x = random_mat(&mut rng, 30, 7);
    let got = a.spmm(&x).unwrap();
    assert!(max_diff(&matmul(&dense_of(&a), &rows(&x)), &got) < 1e-14);
    let got_t = a.spmm_transpose(&x).unwrap();
    assert!(got_t.max_abs_diff(&got) < 1e-14);
}

#[test]
fn dense_products_match_loops() {
    let mut rng = seeded_rng(13);
    let a = random_mat(&mut rng, 9, 5);
    let b = random_mat(&mut rng, 5, 4);
    let c = random_mat(&mut rng, 9, 4);
    assert!(max_diff(&matmul(&rows(&a), &rows(&b)), &a.matmul(&b).unwrap()) < 1e-14);
    let bt = rows(&b.transpose());
    assert!(max_diff(&matmul(&rows(&a), &rows(&b)), &a.matmul_nt(&DenseMatrix::from_rows(&bt).unwrap()).unwrap()) < 1e-14);
    assert!(max_diff(&matmul(&rows(&a.transpose()), &rows(&c)), &a.matmul_tn(&c).unwrap()) < 1e-14);
}

#[test]
fn principal_submatrix_matches_indexing() {
    let mut rng = seeded_rng(14);
    let a = random_graph(&mut rng, 20, 0.3);
    let full = dense_of(&a);
    for (start, size) in [(0, 20), (3, 7), (19, 1), (5, 15)] {
        let sub = a.principal_submatrix(start, size).unwrap().to_dense();
        let want: Mat = (start..start + size)
            .map(|i| full[i][start..start + size].to_vec())
            .collect();
        assert_eq!(max_diff(&want, &sub), 0.0);
    }
    assert!(a.principal_submatrix(15, 6).is_err());
}

#[test]
fn ppr_matches_gauss_jordan_inverse() {
    let mut rng = seeded_rng(15);
    for n in [2, 6, 25] {
        let a = connected_graph(&mut rng, n, 0.2);
        for alpha in [0.05, 0.15, 0.5] {
            let want = ppr(&a, alpha);
            let exact = ppr_diffusion_exact(&a, alpha).unwrap();
            assert!(max_diff(&want, &exact) < 1e-10, "n={n} alpha={alpha}");
            let series = ppr_power_series(&a, alpha, 100_000, 1e-14).unwrap();
            assert!(max_diff(&want, &series) < 1e-9, "n={n} alpha={alpha}");
        }
    }
}

#[test]
fn ppr_two_node_closed_form() {
    // T = [[0,1],[1,0]]; (I − cT)^{-1} = [[1,c],[c,1]] / (1 − c²)
    let a = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let alpha = 0.2;
    let c = 1.0 - alpha;
    let s = ppr_diffusion_exact(&a, alpha).unwrap();
    let d = 1.0 - c * c;
    assert!((s.get(0, 0) - alpha / d).abs() < 1e-14);
    assert!((s.get(0, 1) - alpha * c / d).abs() < 1e-14);
}

#[test]
fn ppr_satisfies_fixed_point() {
    let mut rng = seeded_rng(16);
    let a = connected_graph(&mut rng, 30, 0.1);
    let alpha = 0.15;
    let s = ppr_diffusion_exact(&a, alpha).unwrap();
    let t = dense_of(&transition_matrix(&a).unwrap());
    let ts = matmul(&t, &rows(&s));
    let n = 30;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let rhs = alpha * f64::from(u8::from(i == j)) + (1.0 - alpha) * ts[i][j];
            worst = worst.max((s.get(i, j) - rhs).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn losses_match_scalar_loops() {
    let mut rng = seeded_rng(17);
    for _ in 0..20 {
        let s = rng.random_range(2..10);
        let d = rng.random_range(1..6);
        let tau = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.2..2.0) };
        let beta = rng.random_range(0.0..=1.0);
        let mats: Vec<DenseMatrix> = (0..4).map(|_| random_mat(&mut rng, s, d)).collect();
        let m: Vec<Mat> = mats.iter().map(rows).collect();
        let mut t = Tape::new();
        let ts: Vec<_> = mats.iter().map(|x| t.constant(x.clone())).collect();
        let cn = losses::cross_network_loss(&mut t, ts[0], ts[1], ts[2], ts[3], tau).unwrap();
        let cv = losses::cross_view_loss(&mut t, ts[0], ts[1], tau).unwrap();
        let tot = losses::total_loss(&mut t, cn, cv, beta).unwrap();
        let inter = losses::inter_view_loss(&mut t, ts[0], ts[1], tau).unwrap();
        let intra_l = losses::intra_view_loss(&mut t, ts[0], ts[1], tau).unwrap();

        assert!((t.scalar(cn) - cross_network(&m[0], &m[1], &m[2], &m[3], tau)).abs() < 1e-12);
        assert!((t.scalar(cv) - cross_view(&m[0], &m[1], tau)).abs() < 1e-12);
        assert!((t.scalar(tot) - total(&m[0], &m[1], &m[2], &m[3], beta, tau)).abs() < 1e-12);
        let col = |x| DenseMatrix::from_vec(s, 1, x).unwrap();
        assert!(t.value(inter.view1).max_abs_diff(&col(nce(&m[0], &m[1], tau))) < 1e-12);
        assert!(t.value(inter.view2).max_abs_diff(&col(nce(&m[1], &m[0], tau))) < 1e-12);
        assert!(t.value(intra_l.view1).max_abs_diff(&col(intra(&m[0], &m[1], tau))) < 1e-12);
        assert!(t.value(intra_l.view2).max_abs_diff(&col(intra(&m[1], &m[0], tau))) < 1e-12);
    }
}

#[test]
fn loss_of_identical_orthonormal_views() {
    // s orthonormal rows: positives have similarity 1, negatives 0
    let s = 4;
    let h = DenseMatrix::identity(s);
    let mut t = Tape::new();
    let x = t.constant(h);
    let cn = losses::cross_network_loss(&mut t, x, x, x, x, 1.0).unwrap();
    let want = -(1f64.exp() / (1f64.exp() + (s - 1) as f64)).ln();
    assert!((t.scalar(cn) - want).abs() < 1e-14);
}

#[test]
fn adam_matches_scalar_trace() {
    let (lr, b1, b2, eps) = (0.05, 0.8, 0.95, 1e-8);
    let grads = [1.0, -0.5, 2.0];
    let mut p = DenseMatrix::filled(1, 1, 0.3);
    let mut st = OptimizerState::new([&p]);
    let mut oracle = ScalarAdam::new();
    let mut q = 0.3;
    for g in grads {
        adam_step(
            &mut [&mut p],
            &[DenseMatrix::filled(1, 1, g)],
            &mut st,
            AdamParams {
                lr,
                beta1: b1,
                beta2: b2,
                eps,
                weight_decay: 0.0,
            },
        )
        .unwrap();
        q = oracle.step(q, g, lr, b1, b2, eps);
        assert!((p.get(0, 0) - q).abs() < 1e-15);
        assert!((st.first_moment[0].get(0, 0) - oracle.m).abs() < 1e-15);
        assert!((st.second_moment[0].get(0, 0) - oracle.v).abs() < 1e-15);
    }
}

#[test]
fn adam_first_step_and_decay() {
    let mut p = DenseMatrix::filled(1, 1, 1.0);
    let mut st = OptimizerState::new([&p]);
    let hp = AdamParams {
        lr: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.5,
    };
    adam_step(&mut [&mut p], &[DenseMatrix::filled(1, 1, 1.0)], &mut st, hp).unwrap();
    let want = 1.0 * (1.0 - 0.1 * 0.5) - 0.1 / (1.0 + 1e-8);
    assert!((p.get(0, 0) - want).abs() < 1e-15);
}

fn toy_probe_problem(seed: u64) -> (DenseMatrix, Vec<usize>) {
    let mut rng = seeded_rng(seed);
    let n = 60;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let x = DenseMatrix::from_fn(n, 4, |i, j| {
        let centre = if j == labels[i] { 1.0 } else { 0.0 };
        centre + rng.random_range(-1.0..1.0)
    });
    (x, labels)
}

#[test]
fn probe_reaches_independent_optimum() {
    let (x, y) = toy_probe_problem(18);
    let split = DataSplit {
        train_idx: (0..60).collect(),
        val_idx: vec![],
        test_idx: vec![],
    };
    let l2 = 1e-2;
    let probe = probe_fit(&x, &y, &split, l2, 20_000).unwrap();
    let mine = softmax_objective(&rows(&x), &y, &rows(&probe.weight), probe.bias.values(), l2);
    let other = softmax_solve(&rows(&x), &y, 3, l2, 0.5, 20_000);
    assert!((mine - other).abs() < 1e-6, "{mine} vs {other}");
    assert!((mine - probe.final_loss).abs() < 1e-12);
}

#[test]
fn probe_on_identical_embeddings_predicts_majority() {
    let x = DenseMatrix::filled(10, 3, 0.7);
    let y = vec![0, 1, 1, 1, 2, 1, 0, 1, 2, 1];
    let split = DataSplit {
        train_idx: (0..10).collect(),
        val_idx: vec![],
        test_idx: vec![],
    };
    let p = probe_fit(&x, &y, &split, 1e-4, 2000).unwrap();
    let acc = probe_accuracy(&p, &x, &y, &split.train_idx).unwrap();
    assert!((acc - 0.6).abs() < 1e-12);
}

#[test]
fn accuracy_matches_confusion_count() {
    let mut rng = seeded_rng(19);
    let c = 4;
    let x = random_mat(&mut rng, 20, 3);
    let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..c)).collect();
    let probe = LinearProbe {
        weight: random_mat(&mut rng, 3, c),
        bias: random_mat(&mut rng, 1, c),
        l2_penalty: 0.0,
        iterations: 0,
        final_loss: 0.0,
    };
    let mut confusion = vec![vec![0usize; c]; c];
    for i in 0..20 {
        let z: Vec<f64> = (0..c)
            .map(|k| probe.bias.get(0, k) + (0..3).map(|j| x.get(i, j) * probe.weight.get(j, k)).sum::<f64>())
            .collect();
        let mut best = 0;
        for k in 1..c {
            if z[k] > z[best] {
                best = k;
            }
        }
        confusion[labels[i]][best] += 1;
    }
    let diag: usize = (0..c).map(|k| confusion[k][k]).sum();
    let idx: Vec<usize> = (0..20).collect();
    assert_eq!(probe_accuracy(&probe, &x, &labels, &idx).unwrap(), diag as f64 / 20.0);
}

#[test]
fn random_probe_on_balanced_labels_is_near_chance() {
    let mut rng = seeded_rng(20);
    let c = 7;
    let n = 7000;
    let x = random_mat(&mut rng, n, 5);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let probe = LinearProbe {
        weight: random_mat(&mut rng, 5, c),
        bias: DenseMatrix::zeros(1, c),
        l2_penalty: 0.0,
        iterations: 0,
        final_loss: 0.0,
    };
    let idx: Vec<usize> = (0..n).collect();
    let acc = probe_accuracy(&probe, &x, &labels, &idx).unwrap();
    let sd = (1.0 / 7.0 * 6.0 / 7.0 / n as f64).sqrt();
    assert!((acc - 1.0 / 7.0).abs() < 5.0 * sd, "{acc}");
}

fn small_graph(seed: u64, n: usize, d: usize) -> Graph {
    let mut rng = seeded_rng(seed);
    let a = connected_graph(&mut rng, n, 0.3);
    let x = random_mat(&mut rng, n, d);
    Graph::new(x, a, None, None).unwrap()
}

#[test]
fn target_forward_equals_online_projection_at_init() {
    let g = small_graph(21, 9, 5);
    let mut model = MeritModel::new(5, 4, 0.7, &mut seeded_rng(1)).unwrap();
    let op = PropagationOperator::Sparse(symmetric_normalize(&g.adjacency, true).unwrap());
    let view = GraphView::new(g.features.clone(), op, (0..9).collect()).unwrap();
    let mut t = Tape::new();
    let b = model.bind(&mut t);
    let (z, _) = model.online_forward(&mut t, &b, &view, true).unwrap();
    let z_hat = model.target_forward(&mut t, &b, &view).unwrap();
    assert!(t.value(z).max_abs_diff(t.value(z_hat)) < 1e-10);
}

#[test]
fn encoder_is_permutation_equivariant() {
    let g = small_graph(22, 12, 6);
    let model = MeritModel::new(6, 5, 0.7, &mut seeded_rng(2)).unwrap();
    let perm = [3, 0, 11, 7, 1, 2, 10, 4, 9, 5, 8, 6];
    let norm = symmetric_normalize(&g.adjacency, true).unwrap();
    let base = model.encode(&g.features, &PropagationOperator::Sparse(norm.clone())).unwrap();
    let permuted = model
        .encode(
            &g.features.select_rows(&perm),
            &PropagationOperator::Sparse(norm.permute_symmetric(&perm).unwrap()),
        )
        .unwrap();
    assert!(base.select_rows(&perm).max_abs_diff(&permuted) < 1e-10);

    let dense = PropagationOperator::Dense(ppr_diffusion_exact(&g.adjacency, 0.2).unwrap());
    let base = model.encode(&g.features, &dense).unwrap();
    let pd = DenseMatrix::from_fn(12, 12, |i, j| dense.to_dense().get(perm[i], perm[j]));
    let permuted = model
        .encode(&g.features.select_rows(&perm), &PropagationOperator::Dense(pd))
        .unwrap();
    assert!(base.select_rows(&perm).max_abs_diff(&permuted) < 1e-10);
}

#[test]
fn inference_is_sum_of_two_encoder_passes() {
    let g = small_graph(23, 10, 4);
    let model = MeritModel::new(4, 3, 0.7, &mut seeded_rng(3)).unwrap();
    let s = ppr_diffusion_exact(&g.adjacency, 0.1).unwrap();
    let h = model.infer_embeddings(&g, &s, Readout::Encoder).unwrap();
    let a = model
        .encode(
            &g.features,
            &PropagationOperator::Sparse(symmetric_normalize(&g.adjacency, true).unwrap()),
        )
        .unwrap();
    let b = model.encode(&g.features, &PropagationOperator::Dense(s.clone())).unwrap();
    assert_eq!(h, a.add(&b).unwrap());
    assert_eq!(h, model.infer_embeddings(&g, &s, Readout::Encoder).unwrap());

    let mut zero = model.clone();
    zero.online.encoder.weight = DenseMatrix::zeros(4, 3);
    assert_eq!(zero.infer_embeddings(&g, &s, Readout::Encoder).unwrap(), DenseMatrix::zeros(10, 3));
    let through = model.infer_embeddings(&g, &s, Readout::ThroughProjector).unwrap();
    assert_eq!(through.shape(), (10, 3));
}

#[test]
fn accuracy_ignores_positive_scaling_and_shift_of_logits() {
    let (x, y) = toy_probe_problem(24);
    let split = DataSplit {
        train_idx: (0..30).collect(),
        val_idx: vec![],
        test_idx: (30..60).collect(),
    };
    let probe = probe_fit(&x, &y, &split, 1e-3, 500).unwrap();
    let base = probe_accuracy(&probe, &x, &y, &split.test_idx).unwrap();
    for (scale, shift) in [(3.0, 0.0), (0.01, 0.0), (1.0, -7.5), (250.0, 42.0)] {
        let moved = LinearProbe {
            weight: probe.weight.scale(scale),
            bias: DenseMatrix::from_fn(1, 3, |_, k| scale * probe.bias.get(0, k) + shift),
            ..probe.clone()
        };
        assert_eq!(moved.predict(&x).unwrap(), probe.predict(&x).unwrap());
        assert_eq!(probe_accuracy(&moved, &x, &y, &split.test_idx).unwrap(), base);
    }
}

#[test]
fn probe_is_deterministic_and_leaves_embeddings_alone() {
    let (x, y) = toy_probe_problem(25);
    let copy = x.clone();
    let split = merit::eval::make_splits_per_class(&y, 5, &mut seeded_rng(0)).unwrap();
    let a = probe_fit(&x, &y, &split, 1e-4, 300).unwrap();
    let b = probe_fit(&x, &y, &split, 1e-4, 300).unwrap();
    assert_eq!(a, b);
    assert_eq!(x, copy);
}

#[test]
fn thirty_per_class_over_fifteen_classes() {
    let labels: Vec<usize> = (0..15 * 80).map(|i| i % 15).collect();
    let s = merit::eval::make_splits_per_class(&labels, 30, &mut seeded_rng(5)).unwrap();
    assert_eq!(s.train_idx.len(), 450);
    assert_eq!(s.val_idx.len(), 450);
    assert_eq!(s.test_idx.len(), 15 * 80 - 900);
    let again = merit::eval::make_splits_per_class(&labels, 30, &mut seeded_rng(5)).unwrap();
    assert_eq!(s, again);
}
