//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines. Every tolerance is pinned in code here.

mod common;

use common::chi2_goodness_of_fit;
use dualmem::agent::{AgentConfig, DqnAgent};
use dualmem::dual_memory::MemoryMode;
use dualmem::envs::EnvKind;
use dualmem::harness::{
    bench_memory_ops, compare, non_timing_csv, run_experiment, ExperimentConfig,
};
use dualmem::priority::{per_sample, psmm_select_removals, SumTree};
use dualmem::replay_core::Transition;
use dualmem::seeded_rng;
use rand::RngExt;

const P_FLOOR: f64 = 0.001;

fn pass(criterion: usize, name: &str, detail: &str) {
    println!("[ACCEPTANCE] criterion {criterion} ({name}): PASS — {detail}");
}

/// Criterion 1: 10^4 random update/total/prefix-find operations on 64 leaves
/// match a brute-force linear-array oracle exactly in returned indices and
/// within 1e-9 relative in totals.
#[test]
fn criterion_1_sum_tree_oracle_equivalence() {
    struct LinearOracle {
        leaves: Vec<f64>,
    }
    impl LinearOracle {
        fn total(&self) -> f64 {
            self.leaves.iter().sum()
        }
        fn prefix_find(&self, u: f64) -> usize {
            let mut acc = 0.0;
            for (j, &p) in self.leaves.iter().enumerate() {
                if p > 0.0 && u < acc + p {
                    return j;
                }
                acc += p;
            }
            panic!("u outside mass");
        }
    }

    let started = std::time::Instant::now();
    let mut tree = SumTree::new(64);
    let mut oracle = LinearOracle {
        leaves: vec![0.0; 64],
    };
    let mut rng = seeded_rng(1_001);
    let mut checked_ops = 0;
    while checked_ops < 10_000 {
        match rng.random_range(0..3u8) {
            0 => {
                let i = rng.random_range(0..64usize);
                let v = if rng.random_bool(0.15) {
                    0.0
                } else {
                    rng.random_range(0.0..20.0)
                };
                tree.update(i, v).unwrap();
                oracle.leaves[i] = v;
            }
            1 => {
                let direct = oracle.total();
                let rel = (tree.total() - direct).abs() / direct.abs().max(1.0);
                assert!(rel < 1e-9, "total drifted: {rel}");
            }
            _ => {
                let total = oracle.total();
                if total > 0.0 {
                    let u = rng.random_range(0.0..total);
                    assert_eq!(
                        tree.prefix_find(u).unwrap(),
                        oracle.prefix_find(u),
                        "prefix-find disagreement at u = {u}"
                    );
                }
            }
        }
        checked_ops += 1;
    }
    assert!(tree.consistency_error() < 1e-9);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    pass(
        1,
        "sum-tree oracle equivalence",
        "10^4 mixed ops, exact indices, totals within 1e-9",
    );
}

/// Criterion 2: PER frequencies over 10^5 draws match exact probabilities
/// (chi-square p > 0.001) for uniform, heavy-tailed, and two-point
/// configurations; PSMM removal frequencies match the normalized
/// inverse-priority distribution under the same test.
#[test]
fn criterion_2_sampling_distribution_fidelity() {
    let started = std::time::Instant::now();
    let configs: Vec<(&str, Vec<f64>)> = vec![
        ("uniform", vec![1.0; 64]),
        (
            "heavy-tailed",
            (0..64).map(|i| 1.0 / ((i + 1) as f64).powi(2)).collect(),
        ),
        ("two-point", vec![3.0, 1.0]),
    ];
    let mut rng = seeded_rng(1_002);
    for (name, priorities) in &configs {
        let mut tree = SumTree::new(priorities.len());
        for (i, &p) in priorities.iter().enumerate() {
            tree.update(i, p).unwrap();
        }
        let total: f64 = priorities.iter().sum();
        let probs: Vec<f64> = priorities.iter().map(|p| p / total).collect();
        let mut counts = vec![0u64; priorities.len()];
        let batch = 10;
        for _ in 0..100_000 / batch {
            let (idx, _) = per_sample(&tree, batch, 0.4, &mut rng).unwrap();
            for i in idx {
                counts[i] += 1;
            }
        }
        let p = chi2_goodness_of_fit(&counts, &probs);
        assert!(p > P_FLOOR, "PER config {name}: p = {p}");
    }

    // PSMM: removal probability proportional to 1/priority.
    for (name, priorities) in [
        ("two-point", vec![1.0, 3.0]),
        ("spread", vec![0.5, 1.0, 2.0, 4.0, 8.0, 0.25, 1.5, 3.0]),
    ] {
        let inv: Vec<f64> = priorities.iter().map(|p| 1.0 / p).collect();
        let inv_total: f64 = inv.iter().sum();
        let probs: Vec<f64> = inv.iter().map(|w| w / inv_total).collect();
        let mut counts = vec![0u64; priorities.len()];
        for _ in 0..100_000 {
            let picked = psmm_select_removals(&priorities, 1, 1.0, &mut rng).unwrap();
            counts[picked[0]] += 1;
        }
        let p = chi2_goodness_of_fit(&counts, &probs);
        assert!(p > P_FLOOR, "PSMM config {name}: p = {p}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    pass(
        2,
        "sampling-distribution fidelity",
        "3 PER configs + 2 PSMM configs, chi-square p > 0.001",
    );
}

/// Criterion 3: over a full 50,000-step dual-mode grid run, every refresh
/// report shows copied = t+n and evicted = max(0, t+n - free_space); counts
/// never exceed capacities; a full-cache refresh evicts exactly t+n.
#[test]
fn criterion_3_protocol_invariant_full_run() {
    let cfg = ExperimentConfig::preset(EnvKind::GridWorld, MemoryMode::DualDms);
    let result = run_experiment(&cfg).unwrap();
    let incoming = cfg.t + cfg.n;
    assert!(!result.refresh_log.is_empty());
    let mut full_refreshes = 0u64;
    for (step, r) in &result.refresh_log {
        assert_eq!(r.copied, incoming, "step {step}");
        let free_before = cfg.cache_capacity - r.cache_count_before;
        assert_eq!(
            r.evicted,
            incoming.saturating_sub(free_before),
            "step {step}"
        );
        assert!(r.cache_count <= cfg.cache_capacity, "step {step}");
        if r.cache_count_before == cfg.cache_capacity {
            full_refreshes += 1;
            assert_eq!(r.evicted, incoming, "full cache at step {step}");
        }
    }
    assert!(full_refreshes > 0, "cache never filled");
    for row in &result.rows {
        assert!(row.cache_count <= cfg.cache_capacity);
        assert!(row.main_count <= cfg.main_capacity);
    }
    pass(
        3,
        "protocol invariant",
        &format!(
            "{} refreshes checked, {} at full cache",
            result.refresh_log.len(),
            full_refreshes
        ),
    );
}

/// Criterion 4: analytic vs central-finite-difference gradients on 20 random
/// 4-8-8-2 networks, max relative error < 1e-4.
#[test]
fn criterion_4_gradient_correctness() {
    let started = std::time::Instant::now();
    let mut worst_overall = 0.0f64;
    for net_seed in 0..20u64 {
        let agent = DqnAgent::new(
            4,
            2,
            AgentConfig {
                hidden: vec![8, 8],
                ..AgentConfig::default()
            },
            2_000 + net_seed,
        )
        .unwrap();
        let mut rng = seeded_rng(3_000 + net_seed);
        let batch: Vec<Transition> = (0..8)
            .map(|i| {
                Transition::new(
                    (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    i % 2,
                    rng.random_range(-1.5..1.5),
                    (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    i % 4 == 0,
                )
            })
            .collect();
        let weights: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..1.0)).collect();
        let analytic = agent.loss_and_grads(&batch, &weights).unwrap().grads;
        let params = agent.network().params();
        let h = 1e-5;
        let mut probe = agent;
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += h;
            probe.network_mut().set_params(&plus).unwrap();
            let lp = probe.loss_and_grads(&batch, &weights).unwrap().loss;
            let mut minus = params.clone();
            minus[i] -= h;
            probe.network_mut().set_params(&minus).unwrap();
            let lm = probe.loss_and_grads(&batch, &weights).unwrap().loss;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
            worst_overall = worst_overall.max(rel);
        }
        probe.network_mut().set_params(&params).unwrap();
    }
    assert!(
        worst_overall < 1e-4,
        "max relative gradient error {worst_overall}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(
        4,
        "gradient correctness",
        &format!("20 networks, max relative error {worst_overall:.2e}"),
    );
}

/// Criterion 5: the dual-mode grid preset (2,000/500) reaches mean test
/// return >= 0.8 (optimal 0.93) within 50,000 steps in at least 4 of 5
/// seeds.
#[test]
fn criterion_5_learnability() {
    let mut finals = Vec::new();
    for seed in 0..5u64 {
        let mut cfg = ExperimentConfig::preset(EnvKind::GridWorld, MemoryMode::DualDms);
        cfg.seed = seed;
        let result = run_experiment(&cfg).unwrap();
        finals.push(result.final_test_return());
    }
    let passed = finals.iter().filter(|&&r| r >= 0.8).count();
    assert!(passed >= 4, "only {passed}/5 seeds reached 0.8: {finals:?}");
    pass(
        5,
        "learnability",
        &format!("{passed}/5 seeds >= 0.8, finals {finals:?}"),
    );
}

/// Criterion 6: dual-mode cycle time is capacity-independent (ratio of main
/// 10^5 to 10^4 below 1.5 with the cache fixed at 2,000) while the
/// single-buffer PSMM scan scales at least 5x under identical load.
#[test]
fn criterion_6_efficiency_claim() {
    let started = std::time::Instant::now();
    let capacities = [10_000, 100_000];
    let dms = bench_memory_ops(&capacities, MemoryMode::DualDms, 2_000, 16, 4, 150, 42).unwrap();
    let dms_ratio = dms[1].op_cycle_mean_us / dms[0].op_cycle_mean_us;
    assert!(
        dms_ratio < 1.5,
        "dual cycle ratio {dms_ratio} (times {:?} vs {:?})",
        dms[1].op_cycle_mean_us,
        dms[0].op_cycle_mean_us
    );
    let psmm = bench_memory_ops(&capacities, MemoryMode::SinglePsmm, 2_000, 16, 4, 40, 42).unwrap();
    let psmm_ratio = psmm[1].op_cycle_mean_us / psmm[0].op_cycle_mean_us;
    assert!(
        psmm_ratio >= 5.0,
        "single-psmm cycle ratio {psmm_ratio} (times {:?} vs {:?})",
        psmm[1].op_cycle_mean_us,
        psmm[0].op_cycle_mean_us
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    pass(
        6,
        "efficiency claim",
        &format!("dual ratio {dms_ratio:.2} < 1.5, single-psmm ratio {psmm_ratio:.1} >= 5"),
    );
}

/// Criterion 7: the comparison driver over 5 seeds emits three structurally
/// complete curves (both metric columns populated at every eval point); the
/// directional median comparison is reported without blocking, since
/// desk-scale run-to-run variance is large.
#[test]
fn criterion_7_comparison_artifact() {
    // Raw CSVs are retained under target/ for inspection.
    let dir =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance/compare");
    let _ = std::fs::remove_dir_all(&dir);
    // Reduced step budget keeps the 15-run sweep inside the test budget;
    // the full preset is available through the CLI.
    let mut base = ExperimentConfig::preset(EnvKind::CartPole, MemoryMode::DualDms);
    base.total_steps = 20_000;
    let seeds = [0, 1, 2, 3, 4];
    let summary = compare(&base, &seeds, &dir).unwrap();
    assert_eq!(summary.records.len(), 15);

    for mode in MemoryMode::ALL {
        for seed in seeds {
            let path = dir.join(format!("{mode}_seed{seed}.csv"));
            let text = std::fs::read_to_string(&path).unwrap();
            let rows: Vec<&str> = text.lines().skip(1).collect();
            assert_eq!(rows.len(), 20, "{path:?}");
            for row in rows {
                let cols: Vec<&str> = row.split(',').collect();
                assert_eq!(cols.len(), 8);
                let train: f64 = cols[2].parse().unwrap();
                let test: f64 = cols[3].parse().unwrap();
                assert!(train.is_finite(), "unpopulated train column in {path:?}");
                assert!(test.is_finite(), "unpopulated test column in {path:?}");
            }
        }
    }

    let median_of = |mode: MemoryMode| {
        summary
            .medians
            .iter()
            .find(|(m, _, _)| *m == mode)
            .map(|(_, _, test)| *test)
            .unwrap()
    };
    let dms = median_of(MemoryMode::DualDms);
    let per = median_of(MemoryMode::SinglePer);
    let psmm = median_of(MemoryMode::SinglePsmm);
    let expectation_met = dms >= per * 0.9 && dms >= psmm * 0.9;
    println!(
        "[ACCEPTANCE] criterion 7 directional expectation (non-blocking): \
         dms median {dms:.1} vs per {per:.1}, psmm {psmm:.1} -> {}",
        if expectation_met {
            "met"
        } else {
            "NOT met (reported, not failed)"
        }
    );
    pass(
        7,
        "comparison artifact",
        &format!(
            "15 runs, all metric columns populated; CSVs retained in {}",
            dir.display()
        ),
    );
}

/// Criterion 8: re-running any config with the same seed reproduces all
/// non-timing CSV columns byte-for-byte.
#[test]
fn criterion_8_determinism() {
    let mut configs = vec![
        ExperimentConfig::preset(EnvKind::GridWorld, MemoryMode::DualDms),
        ExperimentConfig::preset(EnvKind::GridWorld, MemoryMode::SinglePer),
        ExperimentConfig::preset(EnvKind::CartPole, MemoryMode::SinglePsmm),
    ];
    for cfg in &mut configs {
        cfg.total_steps = 4_000;
        cfg.seed = 9;
        let a = run_experiment(cfg).unwrap();
        let b = run_experiment(cfg).unwrap();
        assert_eq!(
            non_timing_csv(&a.rows),
            non_timing_csv(&b.rows),
            "{} {} not reproducible",
            cfg.env,
            cfg.mode
        );
    }
    pass(
        8,
        "determinism",
        "3 mode/env configs re-run byte-identically",
    );
}
