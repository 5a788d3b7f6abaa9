//! Experiment runner: three memory modes x environments x seeds, plus the
//! memory-cost micro-benchmark. Emits CSV metrics.
//!
//! The training loop acts epsilon-greedily, ingests every transition, and
//! every `n` environment steps refreshes the cache (dual mode) and performs
//! one importance-weighted training step. Metrics are appended every
//! `eval_interval` steps: the mean training return over the last 100
//! completed episodes and the mean test return over `eval_episodes`
//! near-greedy episodes.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngExt;

use crate::agent::{AgentConfig, DqnAgent};
use crate::dual_memory::{MemoryMode, MemoryPolicy, RefreshReport, ReplayMemory};
use crate::envs::{EnvKind, Environment};
use crate::priority::PriorityParams;
use crate::replay_core::Transition;
use crate::{derive_seed, seeded_rng, Error, Result};

/// Near-greedy exploration used during evaluation episodes.
pub const EVAL_EPSILON: f64 = 0.01;

/// Exact header of every metrics CSV.
pub const CSV_HEADER: &str =
    "step,episodes,train_return_mean100,test_return_mean,wall_clock_s,refresh_time_mean_us,cache_count,main_count";

const STREAM_ENV: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_ACTION: u64 = 3;
const STREAM_MEMORY: u64 = 4;

/// Stream id feeding [`derive_seed`] for the evaluation policy noise; part
/// of the reproducibility contract.
pub const STREAM_EVAL_POLICY: u64 = 5;

/// Everything one run needs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub mode: MemoryMode,
    pub main_capacity: usize,
    pub cache_capacity: usize,
    pub t: usize,
    pub n: usize,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub agent: AgentConfig,
    pub priority: PriorityParams,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale preset for an environment and mode. Single modes get one
    /// 10,000-unit buffer and dual mode an 8,000/2,000 split (scaled to
    /// 2,500 and 2,000/500 on the grid), training every 4 steps with t = 16.
    pub fn preset(env: EnvKind, mode: MemoryMode) -> Self {
        let (total_steps, hidden) = match env {
            EnvKind::GridWorld => (50_000, vec![32, 32]),
            EnvKind::CartPole => (150_000, vec![64, 64]),
        };
        let (main_capacity, cache_capacity) = match (env, mode) {
            (EnvKind::GridWorld, MemoryMode::DualDms) => (2_000, 500),
            (EnvKind::GridWorld, _) => (2_500, 0),
            (EnvKind::CartPole, MemoryMode::DualDms) => (8_000, 2_000),
            (EnvKind::CartPole, _) => (10_000, 0),
        };
        Self {
            env,
            mode,
            main_capacity,
            cache_capacity,
            t: 16,
            n: 4,
            total_steps,
            eval_interval: 1_000,
            eval_episodes: 10,
            seed: 0,
            agent: AgentConfig {
                // 0 = resolve to 20% of total_steps at run start.
                epsilon_decay_steps: 0,
                hidden,
                ..AgentConfig::default()
            },
            priority: PriorityParams::default(),
            out: None,
        }
    }

    pub fn memory_policy(&self) -> MemoryPolicy {
        MemoryPolicy {
            mode: self.mode,
            t: self.t,
            n: self.n,
            main_capacity: self.main_capacity,
            cache_capacity: match self.mode {
                MemoryMode::DualDms => self.cache_capacity,
                _ => 0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.memory_policy().validate()?;
        self.agent.validate()?;
        self.priority.validate()?;
        if self.eval_interval == 0 {
            return Err(Error::InvalidConfig(
                "eval_interval must be positive".into(),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(Error::InvalidConfig(
                "eval_episodes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Parse a flat `key=value` config file. `env` and `mode` choose the
    /// preset; every other key overrides it. `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_kv_text(&text)
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut env = EnvKind::GridWorld;
        let mut mode = MemoryMode::DualDms;
        for (key, value) in &pairs {
            match key.as_str() {
                "env" => env = value.parse()?,
                "mode" => mode = value.parse()?,
                _ => {}
            }
        }
        let mut cfg = Self::preset(env, mode);
        for (key, value) in &pairs {
            cfg.apply_kv(key, value)?;
        }
        Ok(cfg)
    }

    /// Apply one config-file key.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStrNum>(key: &str, value: &str) -> Result<T> {
            T::parse(value)
                .ok_or_else(|| Error::InvalidConfig(format!("invalid value '{value}' for {key}")))
        }
        match key {
            "env" => self.env = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "main_capacity" => self.main_capacity = num(key, value)?,
            "cache_capacity" => self.cache_capacity = num(key, value)?,
            "t" => self.t = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "total_steps" => self.total_steps = num(key, value)?,
            "eval_interval" => self.eval_interval = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gamma" => self.agent.gamma = num(key, value)?,
            "learning_rate" => self.agent.learning_rate = num(key, value)?,
            "batch_size" => self.agent.batch_size = num(key, value)?,
            "target_sync_interval" => self.agent.target_sync_interval = num(key, value)?,
            "epsilon_start" => self.agent.epsilon_start = num(key, value)?,
            "epsilon_end" => self.agent.epsilon_end = num(key, value)?,
            "epsilon_decay_steps" => self.agent.epsilon_decay_steps = num(key, value)?,
            "hidden" => {
                let sizes: Option<Vec<usize>> =
                    value.split(',').map(|s| s.trim().parse().ok()).collect();
                self.agent.hidden = sizes.ok_or_else(|| {
                    Error::InvalidConfig(format!("invalid value '{value}' for hidden"))
                })?;
            }
            "alpha" => self.priority.alpha = num(key, value)?,
            "beta" => self.priority.beta = num(key, value)?,
            "epsilon_priority" => self.priority.epsilon_priority = num(key, value)?,
            "alpha_remove" => self.priority.alpha_remove = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key '{other}'"
                )))
            }
        }
        Ok(())
    }
}

trait FromStrNum: Sized {
    fn parse(s: &str) -> Option<Self>;
}

impl FromStrNum for usize {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok().or_else(|| {
            // Accept scientific notation for capacities, e.g. 1e5.
            let f: f64 = s.parse().ok()?;
            (f.is_finite() && f >= 0.0 && f.fract() == 0.0).then_some(f as usize)
        })
    }
}

impl FromStrNum for u64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok().or_else(|| {
            let f: f64 = s.parse().ok()?;
            (f.is_finite() && f >= 0.0 && f.fract() == 0.0).then_some(f as u64)
        })
    }
}

impl FromStrNum for f64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

/// One metrics row, appended every `eval_interval` steps.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub step: u64,
    pub episodes: u64,
    pub train_return_mean100: f64,
    pub test_return_mean: f64,
    pub wall_clock_s: f64,
    pub refresh_time_mean_us: f64,
    pub cache_count: usize,
    pub main_count: usize,
}

/// Counters describing a finished run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    /// Training opportunities at the every-n cadence: floor(total_steps / n).
    pub scheduled_train_steps: u64,
    pub train_steps: u64,
    pub train_steps_skipped_warmup: u64,
    pub refreshes: u64,
    pub refreshes_skipped_warmup: u64,
    pub episodes: u64,
}

/// Full output of one run.
pub struct RunResult {
    pub rows: Vec<MetricsRow>,
    /// Every cache refresh with the step it happened at (dual mode).
    pub refresh_log: Vec<(u64, RefreshReport)>,
    pub summary: RunSummary,
}

impl RunResult {
    pub fn final_test_return(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.test_return_mean)
    }

    pub fn final_train_return(&self) -> f64 {
        self.rows
            .last()
            .map_or(f64::NAN, |r| r.train_return_mean100)
    }
}

/// Run the full training protocol for one config; writes the metrics CSV if
/// `cfg.out` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let spec = cfg.env.spec();
    let mut agent_cfg = cfg.agent.clone();
    if agent_cfg.epsilon_decay_steps == 0 {
        agent_cfg.epsilon_decay_steps = (cfg.total_steps / 5).max(1);
    }
    let mut agent = DqnAgent::new(
        spec.obs_dim,
        spec.action_count,
        agent_cfg.clone(),
        derive_seed(cfg.seed, STREAM_AGENT),
    )?;
    let mut memory = ReplayMemory::new(cfg.memory_policy(), cfg.priority)?;
    let mut env = cfg.env.build();
    let mut action_rng = seeded_rng(derive_seed(cfg.seed, STREAM_ACTION));
    let mut memory_rng = seeded_rng(derive_seed(cfg.seed, STREAM_MEMORY));
    let env_seed = derive_seed(cfg.seed, STREAM_ENV);

    let warm_need = cfg.t.max(agent_cfg.batch_size);
    let mut summary = RunSummary::default();
    let mut rows = Vec::with_capacity((cfg.total_steps / cfg.eval_interval) as usize);
    let mut refresh_log = Vec::new();
    let mut recent_returns: VecDeque<f64> = VecDeque::with_capacity(100);
    let mut episode_return = 0.0;
    let mut episode_idx = 0u64;
    let mut obs = env.reset(derive_seed(env_seed, episode_idx));
    let mut refresh_window_us: Vec<f64> = Vec::new();
    let started = Instant::now();

    for step in 1..=cfg.total_steps {
        let epsilon = agent_cfg.epsilon_at(step - 1);
        let action = agent.act_epsilon_greedy(&obs, epsilon, &mut action_rng);
        let outcome = env.step(action)?;
        episode_return += outcome.reward;
        memory.ingest(
            Transition::new(
                obs,
                action,
                outcome.reward,
                outcome.observation.clone(),
                outcome.terminal,
            ),
            &mut memory_rng,
        );
        if outcome.terminal {
            summary.episodes += 1;
            if recent_returns.len() == 100 {
                recent_returns.pop_front();
            }
            recent_returns.push_back(episode_return);
            episode_return = 0.0;
            episode_idx += 1;
            obs = env.reset(derive_seed(env_seed, episode_idx));
        } else {
            obs = outcome.observation;
        }

        if step % cfg.n as u64 == 0 {
            summary.scheduled_train_steps += 1;
            if cfg.mode == MemoryMode::DualDms {
                if memory.main_count() >= cfg.t {
                    let t0 = Instant::now();
                    let report = memory.refresh_cache(&mut memory_rng)?;
                    refresh_window_us.push(t0.elapsed().as_secs_f64() * 1e6);
                    refresh_log.push((step, report));
                    summary.refreshes += 1;
                } else {
                    memory.drop_pending();
                    summary.refreshes_skipped_warmup += 1;
                }
            }
            if memory.main_count() >= warm_need && memory.trainable_count() >= agent_cfg.batch_size
            {
                let (batch, weights, handles) =
                    memory.sample_minibatch(agent_cfg.batch_size, &mut memory_rng)?;
                let (_loss, tds) = agent.train_step(&batch, &weights)?;
                memory.update_priorities(&handles, &tds)?;
                summary.train_steps += 1;
            } else {
                summary.train_steps_skipped_warmup += 1;
            }
        }

        if step % cfg.eval_interval == 0 {
            let mut eval_env = cfg.env.build();
            let test_return_mean = evaluate(&agent, eval_env.as_mut(), cfg.eval_episodes, cfg.seed);
            let train_return_mean100 = if recent_returns.is_empty() {
                f64::NAN
            } else {
                recent_returns.iter().sum::<f64>() / recent_returns.len() as f64
            };
            let refresh_time_mean_us = if refresh_window_us.is_empty() {
                0.0
            } else {
                refresh_window_us.iter().sum::<f64>() / refresh_window_us.len() as f64
            };
            refresh_window_us.clear();
            rows.push(MetricsRow {
                step,
                episodes: summary.episodes,
                train_return_mean100,
                test_return_mean,
                wall_clock_s: started.elapsed().as_secs_f64(),
                refresh_time_mean_us,
                cache_count: memory.cache_count(),
                main_count: memory.main_count(),
            });
        }
    }

    if let Some(path) = &cfg.out {
        write_metrics_csv(&rows, path)?;
    }
    Ok(RunResult {
        rows,
        refresh_log,
        summary,
    })
}

/// Mean undiscounted return of `episodes` near-greedy episodes on evaluation
/// seeds `seed + i`. Touches neither replay memory nor network parameters.
pub fn evaluate(agent: &DqnAgent, env: &mut dyn Environment, episodes: usize, seed: u64) -> f64 {
    evaluate_with_epsilon(agent, env, episodes, seed, EVAL_EPSILON)
}

/// [`evaluate`] with an explicit exploration rate (0 gives pure greedy).
pub fn evaluate_with_epsilon(
    agent: &DqnAgent,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    epsilon: f64,
) -> f64 {
    assert!(episodes >= 1, "need at least one evaluation episode");
    let mut total = 0.0;
    for i in 0..episodes {
        let ep_seed = seed.wrapping_add(i as u64);
        let mut rng = seeded_rng(derive_seed(ep_seed, STREAM_EVAL_POLICY));
        let mut obs = env.reset(ep_seed);
        loop {
            let action = agent.act_epsilon_greedy(&obs, epsilon, &mut rng);
            let step = env.step(action).expect("episode still live");
            total += step.reward;
            if step.terminal {
                break;
            }
            obs = step.observation;
        }
    }
    total / episodes as f64
}

/// Serialize metrics rows to the pinned CSV layout.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            r.episodes,
            r.train_return_mean100,
            r.test_return_mean,
            r.wall_clock_s,
            r.refresh_time_mean_us,
            r.cache_count,
            r.main_count
        )
        .expect("string writes cannot fail");
    }
    out
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, metrics_csv(rows))?;
    Ok(())
}

/// The CSV columns that must reproduce byte-for-byte under a fixed seed
/// (everything except the two timing columns).
pub fn non_timing_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            r.episodes,
            r.train_return_mean100,
            r.test_return_mean,
            r.cache_count,
            r.main_count
        )
        .expect("string writes cannot fail");
    }
    out
}

// ---------------------------------------------------------------------------
// Three-way comparison driver
// ---------------------------------------------------------------------------

/// Final metrics of one (mode, seed) run.
#[derive(Debug, Clone)]
pub struct CompareRecord {
    pub mode: MemoryMode,
    pub seed: u64,
    pub final_train_return: f64,
    pub final_test_return: f64,
}

/// Output of the three-mode comparison.
#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub records: Vec<CompareRecord>,
    /// Per mode: (median final train return, median final test return).
    pub medians: Vec<(MemoryMode, f64, f64)>,
}

/// Run all three modes from a shared base config over the given seeds.
///
/// The base capacities are read as the dual split: single-mode runs get one
/// buffer of `main_capacity + cache_capacity`, matching the equal-total
/// three-way setup. Writes one CSV per (mode, seed) plus `summary.csv`.
pub fn compare(base: &ExperimentConfig, seeds: &[u64], out_dir: &Path) -> Result<CompareSummary> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "compare needs at least one seed".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;
    let mut records = Vec::new();
    for mode in MemoryMode::ALL {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.seed = seed;
            if mode != MemoryMode::DualDms {
                cfg.main_capacity = base.main_capacity + base.cache_capacity;
                cfg.cache_capacity = 0;
            }
            cfg.out = Some(out_dir.join(format!("{mode}_seed{seed}.csv")));
            let result = run_experiment(&cfg)?;
            records.push(CompareRecord {
                mode,
                seed,
                final_train_return: result.final_train_return(),
                final_test_return: result.final_test_return(),
            });
        }
    }

    let medians: Vec<(MemoryMode, f64, f64)> = MemoryMode::ALL
        .iter()
        .map(|&mode| {
            let trains: Vec<f64> = records
                .iter()
                .filter(|r| r.mode == mode)
                .map(|r| r.final_train_return)
                .collect();
            let tests: Vec<f64> = records
                .iter()
                .filter(|r| r.mode == mode)
                .map(|r| r.final_test_return)
                .collect();
            (mode, median(&trains), median(&tests))
        })
        .collect();

    let mut out = String::from("mode,seed,final_train_return_mean100,final_test_return_mean\n");
    for r in &records {
        writeln!(
            out,
            "{},{},{},{}",
            r.mode, r.seed, r.final_train_return, r.final_test_return
        )
        .expect("string writes cannot fail");
    }
    for (mode, train, test) in &medians {
        writeln!(out, "{mode},median,{train},{test}").expect("string writes cannot fail");
    }
    fs::write(out_dir.join("summary.csv"), out)?;

    Ok(CompareSummary { records, medians })
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

// ---------------------------------------------------------------------------
// Memory-cost micro-benchmark
// ---------------------------------------------------------------------------

/// Timing of one full memory-management cycle at a given capacity.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub mode: MemoryMode,
    pub main_capacity: usize,
    pub cache_capacity: usize,
    pub op_cycle_mean_us: f64,
    pub op_cycle_p95_us: f64,
}

pub const BENCH_CSV_HEADER: &str =
    "mode,main_capacity,cache_capacity,op_cycle_mean_us,op_cycle_p95_us";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.mode, r.main_capacity, r.cache_capacity, r.op_cycle_mean_us, r.op_cycle_p95_us
        )
        .expect("string writes cannot fail");
    }
    out
}

/// Measure one full memory-management cycle — ingest of `n` transitions,
/// cache refresh (dual mode), one 32-sample minibatch, one priority update;
/// no neural network — at each main capacity, on a memory pre-filled to
/// capacity with synthetic transitions and randomized priorities.
pub fn bench_memory_ops(
    capacities: &[usize],
    mode: MemoryMode,
    cache_capacity: usize,
    t: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    const BATCH: usize = 32;
    if trials == 0 {
        return Ok(Vec::new());
    }
    let mut rows = Vec::with_capacity(capacities.len());
    for &main_capacity in capacities {
        let policy = match mode {
            MemoryMode::DualDms => MemoryPolicy::dual(main_capacity, cache_capacity, t, n),
            MemoryMode::SinglePer => MemoryPolicy {
                t,
                n,
                ..MemoryPolicy::single_per(main_capacity)
            },
            MemoryMode::SinglePsmm => MemoryPolicy {
                t,
                n,
                ..MemoryPolicy::single_psmm(main_capacity)
            },
        };
        // Give PSMM a priority floor well above zero so inverse weights stay
        // bounded under the random TD errors below.
        let params = PriorityParams {
            epsilon_priority: 0.05,
            ..PriorityParams::default()
        };
        let mut memory = ReplayMemory::new(policy, params)?;
        let mut rng = seeded_rng(derive_seed(seed, main_capacity as u64));
        let mut tag = 0.0f64;
        let mut synth = move |rng: &mut rand::rngs::StdRng| {
            tag += 1.0;
            Transition::new(
                vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    tag.sin(),
                    tag.cos(),
                ],
                (tag as usize) % 2,
                rng.random_range(-1.0..1.0),
                vec![0.0, 0.0, 0.0, 0.0],
                false,
            )
        };

        // Pre-fill to capacity.
        match mode {
            MemoryMode::DualDms => {
                while !(memory.main_count() == main_capacity
                    && memory.cache_count() == cache_capacity)
                {
                    for _ in 0..n {
                        let tr = synth(&mut rng);
                        memory.ingest(tr, &mut rng);
                    }
                    if memory.main_count() >= t {
                        memory.refresh_cache(&mut rng)?;
                    } else {
                        memory.drop_pending();
                    }
                }
            }
            _ => {
                for _ in 0..main_capacity {
                    let tr = synth(&mut rng);
                    memory.ingest(tr, &mut rng);
                }
            }
        }

        // Randomize priorities with a few sample/update rounds.
        for _ in 0..10 {
            let count = memory.trainable_count();
            let batch = count.min(512);
            let (_, _, handles) = memory.sample_minibatch(batch, &mut rng)?;
            let tds: Vec<f64> = (0..batch).map(|_| rng.random_range(0.0..2.0)).collect();
            memory.update_priorities(&handles, &tds)?;
        }

        let mut cycle = |memory: &mut ReplayMemory, rng: &mut rand::rngs::StdRng| -> Result<()> {
            for _ in 0..n {
                let tr = synth(rng);
                memory.ingest(tr, rng);
            }
            if mode == MemoryMode::DualDms {
                memory.refresh_cache(rng)?;
            }
            let (_, _, handles) = memory.sample_minibatch(BATCH, rng)?;
            let tds: Vec<f64> = (0..BATCH).map(|_| rng.random_range(0.0..2.0)).collect();
            memory.update_priorities(&handles, &tds)?;
            Ok(())
        };

        // Warm-up, untimed.
        for _ in 0..3 {
            cycle(&mut memory, &mut rng)?;
        }
        let mut times_us = Vec::with_capacity(trials);
        for _ in 0..trials {
            let t0 = Instant::now();
            cycle(&mut memory, &mut rng)?;
            times_us.push(t0.elapsed().as_secs_f64() * 1e6);
        }
        times_us.sort_by(f64::total_cmp);
        let mean = times_us.iter().sum::<f64>() / times_us.len() as f64;
        let p95 =
            times_us[((times_us.len() as f64 * 0.95).ceil() as usize - 1).min(times_us.len() - 1)];
        rows.push(BenchRow {
            mode,
            main_capacity,
            cache_capacity: match mode {
                MemoryMode::DualDms => cache_capacity,
                _ => 0,
            },
            op_cycle_mean_us: mean,
            op_cycle_p95_us: p95,
        });
    }
    Ok(rows)
}
