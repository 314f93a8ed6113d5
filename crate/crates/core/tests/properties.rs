use gnn_core::cost::measure;
use gnn_core::gl::{poly_apply, rational_apply, GlEngine, RationalForm};
use gnn_core::graph::{
    build_csr, erdos_renyi, neighbor_split, normalize, partition, sample_neighborhood, NormKind, PartitionStrategy,
    Partitioning,
};
use gnn_core::lc::{conv_neighbors, eval_psi, lc_forward, lc_forward_traced, PsiContext};
use gnn_core::model::{Activation, ModelId, ALL_MODELS};
use gnn_core::rng::{stream_rng, uniform};
use gnn_core::sim::{run_sync, CostParams};
use gnn_core::trainer::{gcn_backward, gcn_forward_cached, random_instance, softmax_xent};
use gnn_core::{ExecMode, Graph, ModelSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn graph(n: usize, seed: u64) -> Graph {
    let d = 3.0f64.min((n.max(2) - 1) as f64);
    erdos_renyi(n, d, seed).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut stream_rng(seed, 17));
    p
}

fn strategy_of(i: u8) -> PartitionStrategy {
    [
        PartitionStrategy::Hash,
        PartitionStrategy::Range,
        PartitionStrategy::GreedyBalance,
    ][i as usize % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csr_of_permuted_edges_is_relabeled_csr(n in 2usize..24, seed in 0u64..500) {
        let g = graph(n, seed);
        let perm = shuffled(n, seed);
        let edges: Vec<_> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        prop_assert_eq!(build_csr(&edges, n).unwrap(), g.permute(&perm).unwrap());
    }

    #[test]
    fn neighbor_split_covers_degree(n in 2usize..24, parts in 1usize..5, s in 0u8..3, seed in 0u64..500) {
        let g = graph(n, seed);
        let p = partition(&g, parts.min(n), strategy_of(s)).unwrap();
        for i in 0..n {
            let (local, remote) = neighbor_split(&p, &g, i).unwrap();
            prop_assert_eq!(local.len() + remote.len(), g.degree(i));
        }
    }

    #[test]
    fn sample_size_within_geometric_bound(
        n in 2usize..30, fanout in 1usize..5, depth in 1usize..4, seed in 0u64..1000,
    ) {
        let g = graph(n, seed);
        let s = sample_neighborhood(&g, &[0, n - 1], fanout, depth, seed).unwrap();
        let bound: usize = (0..=depth as u32).map(|l| fanout.pow(l)).sum();
        for t in [0, n - 1] {
            prop_assert!(s.tree_size(t) <= bound);
            prop_assert!(s.support(t).len() <= bound);
        }
    }

    #[test]
    fn local_models_are_permutation_equivariant(
        n in 1usize..16, k in 1usize..5, mi in 0usize..12, seed in 0u64..300,
    ) {
        let model = ALL_MODELS.iter().copied().filter(|m| m.has_local()).nth(mi).unwrap();
        let g = graph(n, seed);
        let x = uniform(n, k, -1.0, 1.0, seed, 1);
        let spec = ModelSpec::random(model, &[k, k, k], Activation::Sigmoid, seed).unwrap();
        let perm = shuffled(n, seed);
        let y = lc_forward(&g, &x, &spec, ExecMode::Sequential).unwrap();
        let yp = lc_forward(&g.permute(&perm).unwrap(), &x.permute_rows(&perm), &spec, ExecMode::Sequential).unwrap();
        prop_assert!(y.permute_rows(&perm).max_abs_diff(&yp).unwrap() <= 1e-9);
    }

    #[test]
    fn edge_presentation_order_is_irrelevant(n in 2usize..16, mi in 0usize..12, seed in 0u64..300) {
        let model = ALL_MODELS.iter().copied().filter(|m| m.has_local()).nth(mi).unwrap();
        let g = graph(n, seed);
        let mut edges: Vec<_> = g.edges().iter().map(|&(u, v)| if (u + v) % 2 == 0 { (v, u) } else { (u, v) }).collect();
        edges.shuffle(&mut stream_rng(seed, 3));
        let h = build_csr(&edges, n).unwrap();
        let x = uniform(n, 3, -1.0, 1.0, seed, 1);
        let spec = ModelSpec::random(model, &[3, 3], Activation::Relu, seed).unwrap();
        prop_assert_eq!(
            lc_forward(&g, &x, &spec, ExecMode::Sequential).unwrap(),
            lc_forward(&h, &x, &spec, ExecMode::Sequential).unwrap()
        );
    }

    #[test]
    fn gat_weights_sum_to_one(n in 2usize..16, seed in 0u64..300) {
        let g = graph(n, seed);
        let spec = ModelSpec::random(ModelId::Gat, &[3, 2], Activation::None, seed).unwrap();
        let h = uniform(n, 3, 0.5, 1.5, seed, 2);
        for i in 0..n {
            let conv = conv_neighbors(&g, ModelId::Gat, i);
            let ctx = PsiContext { neighborhood: Some(conv.iter().map(|&j| h.row(j)).collect()), ..Default::default() };
            let total: f64 = conv
                .iter()
                .map(|&j| eval_psi(&spec, 0, h.row(i), h.row(j), &ctx).unwrap()[0] / h.get(j, 0))
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gcn_gradients_ignore_vertex_labels(n in 3usize..14, seed in 0u64..300) {
        let (g, x, labels, spec) = random_instance(n, &[3, 4, 2], seed).unwrap();
        let grads = |g: &Graph, x, labels| {
            let cache = gcn_forward_cached(g, x, &spec, ExecMode::Sequential).unwrap();
            let (_, dy) = softmax_xent(&cache.output, labels).unwrap();
            gcn_backward(Some(&cache), &dy, &spec).unwrap()
        };
        let perm = shuffled(n, seed);
        let a = grads(&g, &x, &labels);
        let b = grads(&g.permute(&perm).unwrap(), &x.permute_rows(&perm), &labels.permute(&perm).unwrap());
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            prop_assert!(wa.max_abs_diff(wb).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn sync_output_independent_of_partitioning(
        n in 2usize..20, parts in 1usize..5, s in 0u8..3, seed in 0u64..300,
    ) {
        let g = graph(n, seed);
        let x = uniform(n, 2, -1.0, 1.0, seed, 0);
        let spec = ModelSpec::random(ModelId::Gcn, &[2, 2, 2], Activation::Relu, seed).unwrap();
        let part = partition(&g, parts.min(n), strategy_of(s)).unwrap();
        let (out, trace) = run_sync(&g, &part, &x, &spec, &CostParams::default(), 1).unwrap();
        let reference = lc_forward(&g, &x, &spec, ExecMode::Sequential).unwrap();
        prop_assert!(out.max_abs_diff(&reference).unwrap() <= 1e-12);
        prop_assert_eq!(trace.words, (2 * 2 * part.directed_cut_edges(&g)) as u64);
    }

    #[test]
    fn execution_modes_are_bit_identical(n in 1usize..40, mi in 0usize..21, seed in 0u64..200) {
        let model = ALL_MODELS[mi];
        let g = graph(n, seed);
        let widths: &[usize] = if model.has_local() { &[3, 3, 3] } else { &[3, 3] };
        let spec = ModelSpec::random(model, widths, Activation::Relu, seed).unwrap();
        let x = uniform(n, 3, -1.0, 1.0, seed, 0);
        if model.has_local() {
            prop_assert_eq!(
                lc_forward(&g, &x, &spec, ExecMode::Sequential).unwrap(),
                lc_forward(&g, &x, &spec, ExecMode::Parallel).unwrap()
            );
        }
        if model.has_global() && (model != ModelId::Deepwalk && model != ModelId::Node2vec
            || (0..n).all(|i| g.degree(i) > 0)) {
            let mut s = GlEngine::new(ExecMode::Sequential);
            let mut p = GlEngine::new(ExecMode::Parallel);
            let a = s.forward(&g, &x, &spec);
            let b = p.forward(&g, &x, &spec);
            prop_assert_eq!(a, b);
            prop_assert_eq!(s.meter, p.meter);
        }
    }
}

#[test]
fn cg_solution_certified_by_explicit_residual() {
    let g = erdos_renyi(30, 4.0, 8).unwrap();
    let a = normalize(&g, NormKind::SymNorm).unwrap();
    let rhs = uniform(30, 3, -1.0, 1.0, 1, 1);
    let (alpha, tol) = (0.2, 1e-10);
    let (x, report) = rational_apply(RationalForm::Ppnp { alpha }, &a, &rhs, tol).unwrap();
    assert!(report.residual <= tol);
    // x = α S⁻¹ b  ⇒  S (x/α) = b with S = I − (1−α)Â
    for c in 0..3 {
        let xc: Vec<f64> = (0..30).map(|i| x.get(i, c) / alpha).collect();
        let mut r2 = 0.0;
        let mut b2 = 0.0;
        for i in 0..30 {
            let (cols, vals) = a.row(i);
            let ax: f64 = cols.iter().zip(vals).map(|(&j, v)| v * xc[j]).sum();
            r2 += (rhs.get(i, c) - (xc[i] - (1.0 - alpha) * ax)).powi(2);
            b2 += rhs.get(i, c).powi(2);
        }
        assert!(r2.sqrt() <= tol * b2.sqrt() * 1.0001, "column {c}");
    }
}

#[test]
fn poly_apply_issues_t_spmms() {
    let g = erdos_renyi(12, 3.0, 2).unwrap();
    let a = normalize(&g, NormKind::SymNorm).unwrap();
    let h = uniform(12, 2, -1.0, 1.0, 0, 0);
    for t in 0..6 {
        let mut eng = GlEngine::default();
        eng.poly_apply(&vec![0.5; t + 1], &a, &h).unwrap();
        assert_eq!(eng.meter.spmm_calls, t as u64);
    }
    assert!(poly_apply(&[], &a, &h).is_err());
}

#[test]
fn total_work_is_sum_of_parts() {
    let g = erdos_renyi(20, 4.0, 3).unwrap();
    for model in ALL_MODELS.into_iter().filter(|m| m.has_local()) {
        let spec = ModelSpec::random(model, &[3, 4, 2], Activation::Relu, 1).unwrap();
        let x = uniform(20, 3, -1.0, 1.0, 0, 0);
        let layers = lc_forward_traced(&g, &x, &spec, ExecMode::Parallel).unwrap();
        let r = measure(&g, &spec, &layers, &Partitioning::single(20));
        let per_layer: u64 = r.work_per_layer.iter().map(|t| t.total()).sum();
        assert_eq!(r.total_work(), r.work_pre + per_layer + r.work_post, "{model}");
        let again = lc_forward_traced(&g, &x, &spec, ExecMode::Sequential).unwrap();
        assert_eq!(measure(&g, &spec, &again, &Partitioning::single(20)), r);
    }
}

/// Per-edge UpdateEdge work at widths 2, 4, 8.
fn edge_work(model: ModelId) -> Vec<u64> {
    let g = erdos_renyi(24, 4.0, 5).unwrap();
    [2, 4, 8]
        .iter()
        .map(|&k| {
            let spec = ModelSpec::random(model, &[k, k], Activation::None, 0).unwrap();
            let x = uniform(24, k, -1.0, 1.0, 0, 0);
            let out = lc_forward_traced(&g, &x, &spec, ExecMode::Sequential).unwrap();
            let edges: usize = (0..24).map(|i| conv_neighbors(&g, model, i).len()).sum();
            let w = out[0].kernel_trace.update_edge;
            assert_eq!(w % edges as u64, 0, "{model} at k={k}");
            w / edges as u64
        })
        .collect()
}

#[test]
fn edge_work_scales_by_class() {
    // C-GNN: one coefficient multiply per feature
    assert_eq!(edge_work(ModelId::Gcn), vec![2, 4, 8]);
    // A-GNN dot-product: O(k)
    let va = edge_work(ModelId::VanillaAttn);
    assert_eq!(va[2] - va[1], 2 * (va[1] - va[0]));
    // MP-GNN: O(k²)
    let ec = edge_work(ModelId::Edgeconv1);
    assert_eq!(ec, vec![4, 16, 64]);
}
