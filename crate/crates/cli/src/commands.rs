use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use gnn_core::cost::{check_asymptotic, comm_volume, measure, FitRecord};
use gnn_core::gl::GlEngine;
use gnn_core::lc::{lc_forward, lc_forward_traced};
use gnn_core::sim::{audit, pipeline_metrics, run_async, run_async_training, run_sync, GradientStaleness, Trace};
use gnn_core::trainer::{
    curve_to_csv, finite_diff_grad, gcn_backward, gcn_forward_cached, instance_on, softmax_xent, train_full_batch,
    EpochRecord, TrainConfig,
};
use gnn_core::{ExecMode, Graph, ModelSpec};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GraphSource};
use crate::error::{CliError, CliResult};

pub const GRADCHECK_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

fn meta(command: &str) -> Value {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "timestamp": secs })
}

fn write_out(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> CliResult<()> {
    write_out(
        dir,
        name,
        &(serde_json::to_string_pretty(v).expect("plain data") + "\n"),
    )
}

fn random_spec(cfg: &ExperimentConfig) -> CliResult<ModelSpec> {
    Ok(ModelSpec::random_with(
        cfg.model,
        &cfg.uniform_widths(),
        cfg.activation,
        cfg.hyper()?,
        cfg.seed,
    )?)
}

pub fn verify(cfg: &ExperimentConfig) -> CliResult<()> {
    let m = cfg.model;
    if !m.has_global() {
        return Err(CliError::Capability(format!("model {m} has no global formulation")));
    }
    if !m.has_local() {
        return Err(CliError::Capability(format!("model {m} has no local formulation")));
    }
    let g = cfg.source()?.build(cfg.seed)?;
    let x = cfg.features(g.n());
    let spec = random_spec(cfg)?;
    let lc = lc_forward(&g, &x, &spec, ExecMode::Parallel)?;
    let gl = GlEngine::new(ExecMode::Parallel).forward(&g, &x, &spec)?;
    let diff = lc.max_abs_diff(&gl)?;
    let tol = 1e-9 * (1.0 + lc.max_abs());
    println!("model {m} n {} m {} layers {}", g.n(), g.m(), spec.num_layers());
    println!("max_abs_diff {diff:.6e} tolerance {tol:.6e}");
    if diff <= tol {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "LC and GL outputs differ by {diff:.6e}"
        )))
    }
}

fn sim_summary(label: &str, t: &Trace) {
    let m = pipeline_metrics(t);
    println!(
        "{label:<5} makespan {:.6} words {} barriers {} utilization {:.4}",
        m.makespan, m.words, m.barriers, m.utilization
    );
}

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<()> {
    let g = cfg.source()?.build(cfg.seed)?;
    let x = cfg.features(g.n());
    let spec = random_spec(cfg)?;
    let part = cfg.partitioning(&g)?;
    let (_, sync) = run_sync(&g, &part, &x, &spec, &cfg.costs, cfg.iterations)?;
    let (_, asy) = run_async(&g, &part, &x, &spec, &cfg.staleness, cfg.iterations, &cfg.costs)?;
    let violations = audit(&asy, &cfg.staleness, &GradientStaleness::synchronous());
    sim_summary("sync", &sync);
    sim_summary("async", &asy);
    let dir = &cfg.out_dir;
    write_out(dir, "trace_sync.jsonl", &sync.to_jsonl())?;
    write_out(dir, "trace_async.jsonl", &asy.to_jsonl())?;
    write_json(
        dir,
        "metrics.json",
        &json!({
            "meta": meta("simulate"),
            "model": cfg.model,
            "n": g.n(),
            "partitions": part.num_parts(),
            "iterations": cfg.iterations,
            "staleness": cfg.staleness,
            "sync": pipeline_metrics(&sync),
            "async": pipeline_metrics(&asy),
            "audit_violations": violations,
        }),
    )?;
    if let Some(v) = violations.first() {
        return Err(CliError::Verification(format!(
            "{} staleness violations, first: {v}",
            violations.len()
        )));
    }
    Ok(())
}

pub fn gradcheck(cfg: &ExperimentConfig, sign_flip: bool) -> CliResult<()> {
    if cfg.layers == 0 {
        eprintln!("warning: model has no layers; gradient check is vacuous");
        println!("max_rel_error 0 tolerance {GRADCHECK_TOL:e} instances 0");
        return Ok(());
    }
    let source = match (&cfg.graph, &cfg.gen) {
        (None, None) => GraphSource::Er { n: 12, degree: 3.0 },
        _ => cfg.source()?,
    };
    let widths = cfg.training_widths(cfg.classes.unwrap_or(3));
    let mut worst: f64 = 0.0;
    for i in 0..cfg.instances as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let (g, x, labels, spec) = instance_on(source.build(seed)?, &widths, seed)?;
        let cache = gcn_forward_cached(&g, &x, &spec, ExecMode::Parallel)?;
        let (_, dy) = softmax_xent(&cache.output, &labels)?;
        let mut grads = gcn_backward(Some(&cache), &dy, &spec)?;
        if sign_flip {
            grads.weights.iter_mut().for_each(|w| w.scale(-1.0));
        }
        let fd = finite_diff_grad(&g, &x, &labels, &spec, FD_STEP)?;
        let err = grads.max_rel_error(&fd)?;
        println!("instance {i} max_rel_error {err:.6e}");
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    println!(
        "max_rel_error {worst:.6e} tolerance {GRADCHECK_TOL:e} instances {}",
        cfg.instances
    );
    if worst <= GRADCHECK_TOL {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "gradient error {worst:.6e} exceeds {GRADCHECK_TOL:e}"
        )))
    }
}

pub const BENCH_HEADER: &str = "n,m,k,L,model,kernel,work,depth,comm";
pub const FIT_TERMS: [&str; 4] = ["m*k*L", "n*k^2*L", "n*k*L", "n+m"];

struct BenchRun {
    rows: Vec<String>,
    total_work: u64,
}

fn bench_one(cfg: &ExperimentConfig, g: &Graph) -> CliResult<BenchRun> {
    let x = cfg.features(g.n());
    let spec = random_spec(cfg)?;
    let part = cfg.partitioning(g)?;
    let l = spec.num_layers();
    let m = cfg.model;
    let prefix = format!("{},{},{},{},{}", g.n(), g.m(), cfg.k, l, m);
    let mut rows = Vec::new();
    let mut total_work = None;
    if m.has_local() {
        let layers = lc_forward_traced(g, &x, &spec, ExecMode::Parallel)?;
        let r = measure(g, &spec, &layers, &part);
        let w = r.layer_work_sum();
        let d = r
            .depth_per_layer
            .iter()
            .fold(gnn_core::KernelTally::default(), |mut acc, t| {
                acc.add(t);
                acc
            });
        let c = r.comm_words;
        for (name, work, depth) in [
            ("scatter", w.scatter, d.scatter),
            ("update_edge", w.update_edge, d.update_edge),
            ("aggregate", w.aggregate, d.aggregate),
            ("update_vertex", w.update_vertex, d.update_vertex),
            ("pre", r.work_pre, r.depth_pre),
            ("total", r.total_work(), r.total_depth()),
        ] {
            rows.push(format!("{prefix},{name},{work},{depth},{c}"));
        }
        total_work = Some(r.total_work());
    }
    if m.has_global() {
        let mut eng = GlEngine::new(ExecMode::Parallel);
        eng.forward(g, &x, &spec)?;
        let mt = eng.meter;
        let c = comm_volume(&part, g, cfg.k, l);
        for (name, work) in [
            ("spmm", mt.sparse_madds),
            ("gemm", mt.dense_madds),
            ("spmm_count", mt.spmm_calls),
            ("cg_iterations", mt.cg_iterations),
        ] {
            rows.push(format!("{prefix},{name},{work},,{c}"));
        }
        rows.push(format!("{prefix},gl_total,{},{},{c}", mt.total_madds(), mt.depth));
        total_work.get_or_insert(mt.total_madds());
    }
    Ok(BenchRun {
        rows,
        total_work: total_work.unwrap_or(0),
    })
}

pub fn bench(cfg: &ExperimentConfig) -> CliResult<()> {
    let source = cfg.source()?;
    let graphs: Vec<Graph> = if cfg.sizes.is_empty() {
        vec![source.build(cfg.seed)?]
    } else {
        cfg.sizes
            .iter()
            .map(|&n| source.with_n(n)?.build(cfg.seed))
            .collect::<CliResult<_>>()?
    };
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    let mut features = Vec::new();
    let mut measured = Vec::new();
    for g in &graphs {
        let run = bench_one(cfg, g)?;
        for r in &run.rows {
            let _ = writeln!(csv, "{r}");
        }
        let (n, m, k, l) = (g.n() as f64, g.m() as f64, cfg.k as f64, cfg.layers as f64);
        features.push(vec![m * k * l, n * k * k * l, n * k * l, n + m]);
        measured.push(run.total_work as f64);
    }
    print!("{csv}");
    write_out(&cfg.out_dir, "bench.csv", &csv)?;
    if graphs.len() >= 3 {
        let fit: FitRecord = check_asymptotic(&FIT_TERMS, &features, &measured)?;
        println!(
            "fit relative_residual {:.6e} flagged {}",
            fit.relative_residual, fit.flagged
        );
        write_json(&cfg.out_dir, "fit.json", &json!({ "meta": meta("bench"), "fit": fit }))?;
    } else if graphs.len() > 1 {
        println!("fit skipped: fewer than 3 sizes");
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<()> {
    let (g, x, labels) = cfg.task()?;
    let classes = cfg.classes.unwrap_or(labels.num_classes());
    let tc = TrainConfig {
        widths: cfg.training_widths(classes),
        epochs: cfg.training.epochs,
        lr: cfg.training.lr,
        seed: cfg.training.seed,
    };
    let distributed = cfg.partitions > 1
        || !cfg.staleness.is_synchronous()
        || cfg.gradient_staleness != GradientStaleness::synchronous();
    let curve: Vec<EpochRecord> = if distributed {
        let part = cfg.partitioning(&g)?;
        let run = run_async_training(
            &g,
            &part,
            &x,
            &labels,
            &cfg.staleness,
            &cfg.gradient_staleness,
            &tc,
            &cfg.costs,
        )?;
        write_out(&cfg.out_dir, "trace_train.jsonl", &run.trace.to_jsonl())?;
        let violations = audit(&run.trace, &cfg.staleness, &cfg.gradient_staleness);
        if let Some(v) = violations.first() {
            return Err(CliError::Verification(format!(
                "{} staleness violations, first: {v}",
                violations.len()
            )));
        }
        sim_summary("train", &run.trace);
        run.curve
    } else {
        train_full_batch(&g, &x, &labels, &tc, ExecMode::Parallel)?.1
    };
    write_out(&cfg.out_dir, "curve.csv", &curve_to_csv(&curve))?;
    match curve.last() {
        Some(r) => println!(
            "epochs {} final_loss {:.6e} train_acc {:.4}",
            curve.len(),
            r.loss,
            r.train_acc
        ),
        None => println!("epochs 0"),
    }
    Ok(())
}

pub fn gen(cfg: &ExperimentConfig) -> CliResult<()> {
    let source = cfg.source()?;
    let g = if let GraphSource::Sbm { .. } = source {
        let sbm = source.sbm(cfg.seed)?;
        let pairs: Vec<_> = sbm.community.iter().copied().enumerate().collect();
        let classes = sbm.community.iter().max().map_or(0, |c| c + 1);
        let labels = gnn_core::trainer::Labels::new(&pairs, classes, sbm.graph.n())?;
        write_out(&cfg.out_dir, "labels.txt", &labels.to_text())?;
        sbm.graph
    } else {
        source.build(cfg.seed)?
    };
    write_out(&cfg.out_dir, "graph.el", &g.to_edge_list())?;
    println!("n {} m {}", g.n(), g.m());
    Ok(())
}
