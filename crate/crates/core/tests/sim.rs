use gnn_core::graph::{complete, erdos_renyi, partition, path, sbm, PartitionStrategy, Partitioning};
use gnn_core::lc::lc_forward;
use gnn_core::model::{Activation, ModelId, ModelSpec};
use gnn_core::rng::uniform;
use gnn_core::sim::{
    audit, pipeline_metrics, run_async, run_async_training, run_greedy, run_sync, CostParams, GradientStaleness,
    ReadKind, StalenessConfig,
};
use gnn_core::trainer::{community_task, train_full_batch, TrainConfig};
use gnn_core::{ExecMode, GnnError};

fn gcn(widths: &[usize], seed: u64) -> ModelSpec {
    ModelSpec::random(ModelId::Gcn, widths, Activation::Relu, seed).unwrap()
}

#[test]
fn single_partition_matches_lc_bitwise() {
    let g = erdos_renyi(20, 4.0, 1).unwrap();
    let x = uniform(20, 3, -1.0, 1.0, 2, 0);
    let spec = gcn(&[3, 4, 2], 3);
    let (out, trace) = run_sync(&g, &Partitioning::single(20), &x, &spec, &CostParams::default(), 1).unwrap();
    assert_eq!(out, lc_forward(&g, &x, &spec, ExecMode::Sequential).unwrap());
    assert_eq!(trace.words, 0);
}

#[test]
fn singleton_k3_words() {
    let g = complete(3);
    let part = partition(&g, 3, PartitionStrategy::Hash).unwrap();
    let spec = gcn(&[2, 2], 0);
    let (_, trace) = run_sync(
        &g,
        &part,
        &uniform(3, 2, 0.0, 1.0, 0, 0),
        &spec,
        &CostParams::default(),
        1,
    )
    .unwrap();
    assert_eq!(trace.words, 12);
}

#[test]
fn balanced_partitions_speed_up() {
    let g = erdos_renyi(48, 6.0, 5).unwrap();
    let x = uniform(48, 8, -1.0, 1.0, 1, 0);
    let spec = gcn(&[8, 8], 1);
    let costs = CostParams::default();
    let p1 = run_sync(&g, &Partitioning::single(48), &x, &spec, &costs, 1).unwrap().1;
    let part = partition(&g, 3, PartitionStrategy::GreedyBalance).unwrap();
    let p3 = run_sync(&g, &part, &x, &spec, &costs, 1).unwrap().1;
    assert!(p3.makespan() < p1.makespan(), "{} vs {}", p3.makespan(), p1.makespan());
}

#[test]
fn sync_barrier_count() {
    let g = path(6);
    let part = partition(&g, 2, PartitionStrategy::Range).unwrap();
    let spec = gcn(&[2, 2, 2, 2], 0);
    let (_, trace) = run_sync(
        &g,
        &part,
        &uniform(6, 2, 0.0, 1.0, 0, 0),
        &spec,
        &CostParams::default(),
        3,
    )
    .unwrap();
    assert_eq!(pipeline_metrics(&trace).barriers, 3 * 3 * 4);
}

#[test]
fn identity_config_collapses() {
    let g = erdos_renyi(16, 3.0, 9).unwrap();
    let x = uniform(16, 3, -1.0, 1.0, 4, 0);
    let part = partition(&g, 4, PartitionStrategy::Hash).unwrap();
    let sync = StalenessConfig::synchronous();
    for model in [ModelId::Gcn, ModelId::Gat, ModelId::Edgeconv5, ModelId::SagePool] {
        let spec = ModelSpec::random(model, &[3, 3, 3], Activation::Relu, 2).unwrap();
        let reference = lc_forward(&g, &x, &spec, ExecMode::Sequential).unwrap();
        let (a, ta) = run_async(&g, &part, &x, &spec, &sync, 2, &CostParams::default()).unwrap();
        let (s, ts) = run_sync(&g, &part, &x, &spec, &CostParams::default(), 2).unwrap();
        let (gr, _) = run_greedy(&g, &part, &x, &spec, &sync, 2, &CostParams::default()).unwrap();
        assert_eq!(a, s);
        assert_eq!(ta, ts);
        assert!(a.max_abs_diff(&reference).unwrap() <= 1e-12);
        assert!(gr.max_abs_diff(&reference).unwrap() <= 1e-12);
    }
}

#[test]
fn layer_gap_two_on_path() {
    let g = path(6);
    let part = partition(&g, 2, PartitionStrategy::Range).unwrap();
    let spec = gcn(&[2, 2, 2, 2], 0);
    let stale = StalenessConfig {
        l_psi_remote: 2,
        ..StalenessConfig::synchronous()
    };
    let (_, trace) = run_async(
        &g,
        &part,
        &uniform(6, 2, 0.0, 1.0, 0, 0),
        &spec,
        &stale,
        2,
        &CostParams::default(),
    )
    .unwrap();
    let gaps: Vec<usize> = trace
        .reads()
        .filter(|(_, r)| r.kind == ReadKind::PsiRemote)
        .map(|(e, r)| e.layer - r.layer)
        .collect();
    assert!(gaps.contains(&2));
    assert!(gaps.iter().all(|&g| g <= 2));
    assert!(audit(&trace, &stale, &GradientStaleness::synchronous()).is_empty());
}

#[test]
fn remote_iteration_staleness_hides_latency() {
    let g = complete(3);
    let part = Partitioning::from_owners(vec![0, 0, 1], 2).unwrap();
    let spec = gcn(&[2, 2, 2], 0);
    let costs = CostParams {
        gamma: 10.0,
        ..CostParams::default()
    };
    let x = uniform(3, 2, 0.0, 1.0, 0, 0);
    let stale = StalenessConfig {
        t_psi_remote: 1,
        ..StalenessConfig::synchronous()
    };
    let (_, sync) = run_sync(&g, &part, &x, &spec, &costs, 4).unwrap();
    let (_, asy) = run_async(&g, &part, &x, &spec, &stale, 4, &costs).unwrap();
    assert!(asy.makespan() < sync.makespan());
    assert_eq!(asy.words, sync.words);
    let m = pipeline_metrics(&asy);
    assert_eq!(m.barriers, 0);
}

#[test]
fn invalid_configs_rejected() {
    let g = complete(3);
    let part = Partitioning::single(3);
    let spec = gcn(&[2, 3], 0);
    let x = uniform(3, 2, 0.0, 1.0, 0, 0);
    let zero = StalenessConfig {
        l_psi_remote: 0,
        ..StalenessConfig::synchronous()
    };
    assert!(matches!(
        run_async(&g, &part, &x, &spec, &zero, 1, &CostParams::default()),
        Err(GnnError::InvalidStaleness(_))
    ));
    let gap = StalenessConfig {
        l_phi: 2,
        ..StalenessConfig::synchronous()
    };
    assert!(matches!(
        run_async(&g, &part, &x, &spec, &gap, 1, &CostParams::default()),
        Err(GnnError::InvalidStaleness(_))
    ));
}

#[test]
fn zero_staleness_training_matches_full_batch() {
    let s = sbm(30, 2, 0.4, 0.05, 1).unwrap();
    let (x, labels) = community_task(&s, 4, 1.0, 2).unwrap();
    let cfg = TrainConfig {
        widths: vec![4, 6, 2],
        epochs: 20,
        lr: 0.2,
        seed: 7,
    };
    let (_, reference) = train_full_batch(&s.graph, &x, &labels, &cfg, ExecMode::Sequential).unwrap();
    let part = partition(&s.graph, 3, PartitionStrategy::Hash).unwrap();
    let run = run_async_training(
        &s.graph,
        &part,
        &x,
        &labels,
        &StalenessConfig::synchronous(),
        &GradientStaleness::synchronous(),
        &cfg,
        &CostParams::default(),
    )
    .unwrap();
    assert_eq!(run.curve.len(), reference.len());
    for (a, b) in run.curve.iter().zip(&reference) {
        assert!((a.loss - b.loss).abs() <= 1e-9, "{} vs {}", a.loss, b.loss);
    }
}

#[test]
fn stale_training_respects_bounds_and_is_deterministic() {
    let s = sbm(30, 2, 0.4, 0.05, 1).unwrap();
    let (x, labels) = community_task(&s, 4, 1.0, 2).unwrap();
    let cfg = TrainConfig {
        widths: vec![4, 4, 2],
        epochs: 10,
        lr: 0.2,
        seed: 7,
    };
    let part = partition(&s.graph, 2, PartitionStrategy::Range).unwrap();
    let stale = StalenessConfig {
        t_psi_remote: 1,
        ..StalenessConfig::synchronous()
    };
    let grad = GradientStaleness {
        t_remote: 1,
        ..GradientStaleness::synchronous()
    };
    let costs = CostParams {
        gamma: 5.0,
        ..CostParams::default()
    };
    let a = run_async_training(&s.graph, &part, &x, &labels, &stale, &grad, &cfg, &costs).unwrap();
    let b = run_async_training(&s.graph, &part, &x, &labels, &stale, &grad, &cfg, &costs).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(audit(&a.trace, &stale, &grad).is_empty());
    assert!(a
        .trace
        .reads()
        .any(|(e, r)| r.kind == ReadKind::PsiRemote && r.iter < e.iter));
}
