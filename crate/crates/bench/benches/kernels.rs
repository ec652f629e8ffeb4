//! Microbenchmarks for the kernels every campaign leans on: the single
//! agent projection, a full inner run, the bounded-variable simplex,
//! one secure-summation round, and the smallest-positive-eigenvalue
//! solve. Sizes mirror the larger end of the shipped campaigns.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use disagg_core::linalg::{LinearProgram, RowKind, Sense};
use disagg_core::model::stream_rng;
use disagg_core::{
    aggregate_words, lambda1, project_agent, random_instance, run_apm,
    sample_aggregate_candidate, sigma_from_bundles, solve_lp, split, AgentBlock, ApmParams,
    FaceConfig, ShareBundle, SigmaVector,
};
use rand::Rng;

fn bench_project_agent(c: &mut Criterion) {
    let inst = random_instance(8, 24, 1);
    let block = AgentBlock::from_instance(&inst, 0);
    let mut rng = stream_rng(1, 2);
    let point: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..2.0)).collect();
    c.bench_function("project_agent_t24", |b| {
        b.iter(|| project_agent(black_box(&block), black_box(&point)))
    });
}

fn bench_apm_inner(c: &mut Criterion) {
    let inst = random_instance(6, 12, 3);
    let mut rng = stream_rng(3, 40);
    let p = sample_aggregate_candidate(&inst, &mut rng);
    let y0 = inst.lower_matrix();
    let params = ApmParams::new(1e-8);
    c.bench_function("apm_full_run_n6_t12", |b| {
        b.iter(|| run_apm(black_box(&inst), black_box(&p), black_box(&y0), &params))
    });
}

fn bench_solve_lp(c: &mut Criterion) {
    // The support price of one agent block in a random direction: a
    // bounded-variable LP with a single budget row, the same shape the
    // subset-capacity and dual-pricing paths solve.
    let inst = random_instance(4, 16, 7);
    let block = AgentBlock::from_instance(&inst, 0);
    let t = block.horizon();
    let mut rng = stream_rng(7, 8);
    let direction: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut lp = LinearProgram::new(Sense::Maximize, direction);
    lp.var_lower = block.lower.clone();
    lp.var_upper = block.upper.clone();
    lp.add_row(vec![1.0; t], RowKind::Eq, block.demand);
    c.bench_function("solve_lp_support_t16", |b| {
        b.iter(|| solve_lp(black_box(&lp), 1e-9).expect("bounded and feasible"))
    });
}

fn bench_smc_round(c: &mut Criterion) {
    let (n, t) = (8usize, 12usize);
    let mut rng = stream_rng(11, 5);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..t).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    c.bench_function("smc_round_n8_t12", |b| {
        b.iter(|| {
            let mut inboxes: Vec<Vec<ShareBundle>> = vec![Vec::new(); n];
            for (sender, x) in xs.iter().enumerate() {
                for bundle in split(sender, x, n, &mut rng) {
                    inboxes[bundle.receiver].push(bundle);
                }
            }
            let sigmas: Vec<SigmaVector> = (0..n)
                .map(|owner| sigma_from_bundles(owner, &inboxes[owner]))
                .collect();
            black_box(aggregate_words(&sigmas))
        })
    });
}

fn bench_lambda1(c: &mut Criterion) {
    let saturated: Vec<Vec<usize>> = (0..6)
        .map(|n| (0..4).map(|k| (3 * n + 2 * k) % 12).collect())
        .collect();
    let config = FaceConfig::new(6, 12, saturated);
    c.bench_function("lambda1_n6_t12", |b| b.iter(|| black_box(lambda1(black_box(&config)))));
}

criterion_group!(
    kernels,
    bench_project_agent,
    bench_apm_inner,
    bench_solve_lp,
    bench_smc_round,
    bench_lambda1
);
criterion_main!(kernels);
