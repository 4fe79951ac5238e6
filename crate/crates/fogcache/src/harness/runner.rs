//! Experiment orchestration: builds every requested scheme against one shared
//! world stream, advances them slot by slot, and writes the metrics files.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::config::{Scheme, SimConfig, SyncMode};
use super::metrics::{write_summaries, MetricsRow, MetricsWriter, SchemeSummary};
use super::world::{fnv1a, RngFactory, SimEnv, SlotWorld, WorldGen, FNV_OFFSET};
use crate::agent::{
    greedy_action, learn_batch, select_action, valid_actions, ActionId, AgentState, DdqnAgent,
    TargetRule, Transition,
};
use crate::baselines::{iql_update, LruState, TabularQ};
use crate::marl::MarlSystem;
use crate::radio::CacheMatrix;
use crate::topology::build_topology;
use crate::{Error, Result};

fn finish_row(
    scheme: Scheme,
    env: &SimEnv,
    cache: &CacheMatrix,
    world: &SlotWorld,
    sum_inst: &mut f64,
    seed: u64,
) -> MetricsRow {
    let eval = env.evaluate_slot(cache, &world.popularity, &world.z1_mean);
    *sum_inst += eval.inst_delay;
    MetricsRow {
        t: world.t,
        scheme,
        inst_delay_s: eval.inst_delay,
        cum_delay_s: *sum_inst / world.t as f64,
        global_reward: eval.global_reward,
        hit_local: eval.hit_local,
        hit_neighbor: eval.hit_neighbor,
        hit_cloud: eval.hit_cloud,
        seed,
    }
}

struct PendingLocal {
    state: AgentState,
    action: ActionId,
    reward: f64,
}

/// Independent DQN agents: local rewards, max targets, one learning step per
/// agent per slot, no communication.
struct DqnRunner {
    env: SimEnv,
    agents: Vec<DdqnAgent>,
    cache: CacheMatrix,
    pending: Vec<Option<PendingLocal>>,
    batch_size: usize,
    explore_rngs: Vec<ChaCha12Rng>,
    learn_rngs: Vec<ChaCha12Rng>,
    seed: u64,
    sum_inst: f64,
    consumed_hash: u64,
}

impl DqnRunner {
    fn new(config: &SimConfig, env: SimEnv, factory: &RngFactory) -> Result<Self> {
        let n = config.n_faps;
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let mut init_rng = factory.stream("dqn/net-init", i as u64);
            let mut agent = DdqnAgent::new(
                config.cache_capacity,
                config.library_size,
                config.state_encoding,
                &config.hidden_sizes,
                config.alpha,
                config.grad_clip_option(),
                config.gamma,
                config.nu,
                config.replay_capacity,
                &mut init_rng,
            )?;
            agent.sync_on_steps = matches!(config.sync_mode, SyncMode::Steps);
            agents.push(agent);
        }
        Ok(Self {
            env,
            agents,
            cache: CacheMatrix::new(n, config.cache_capacity, config.library_size),
            pending: (0..n).map(|_| None).collect(),
            batch_size: config.batch_size,
            explore_rngs: (0..n)
                .map(|i| factory.stream("dqn/explore", i as u64))
                .collect(),
            learn_rngs: (0..n)
                .map(|i| factory.stream("dqn/learn", i as u64))
                .collect(),
            seed: config.seed,
            sum_inst: 0.0,
            consumed_hash: FNV_OFFSET,
        })
    }

    fn run_slot(&mut self, world: &SlotWorld) -> Result<MetricsRow> {
        self.consumed_hash = fnv1a(self.consumed_hash, &world.draw_hash.to_le_bytes());
        for n in 0..self.agents.len() {
            let requested = world.requests[n];
            let state = AgentState {
                cached: self.cache.row(n).to_vec(),
                requested,
            };
            if let Some(p) = self.pending[n].take() {
                self.agents[n].memory.push(Transition {
                    state: p.state,
                    action: p.action,
                    reward: p.reward,
                    next_state: state.clone(),
                    neighbor_count: 0.0,
                });
            }
            let action = select_action(&self.agents[n], &state, &mut self.explore_rngs[n]);
            if action.0 != 0 {
                self.cache.replace(n, action.0, requested)?;
            }
            let reward = self
                .env
                .local_reward_of(&self.cache, &world.popularity[n], n);
            self.pending[n] = Some(PendingLocal {
                state,
                action,
                reward,
            });
            learn_batch(
                &mut self.agents[n],
                self.batch_size,
                &mut self.learn_rngs[n],
                TargetRule::IndependentDqn,
            )?;
        }
        Ok(finish_row(
            Scheme::Dqn,
            &self.env,
            &self.cache,
            world,
            &mut self.sum_inst,
            self.seed,
        ))
    }
}

/// Independent tabular Q-learning with the compressed state key.
struct IqlRunner {
    env: SimEnv,
    tables: Vec<TabularQ>,
    cache: CacheMatrix,
    pending: Vec<Option<PendingLocal>>,
    epsilon: f64,
    explore_rngs: Vec<ChaCha12Rng>,
    seed: u64,
    sum_inst: f64,
    consumed_hash: u64,
}

impl IqlRunner {
    fn new(config: &SimConfig, env: SimEnv, factory: &RngFactory) -> Self {
        let n = config.n_faps;
        Self {
            env,
            tables: (0..n)
                .map(|_| {
                    TabularQ::new(
                        config.cache_capacity,
                        config.iql_alpha,
                        config.gamma,
                        config.iql_table_cap,
                    )
                })
                .collect(),
            cache: CacheMatrix::new(n, config.cache_capacity, config.library_size),
            pending: (0..n).map(|_| None).collect(),
            epsilon: 1.0,
            explore_rngs: (0..n)
                .map(|i| factory.stream("iql/explore", i as u64))
                .collect(),
            seed: config.seed,
            sum_inst: 0.0,
            consumed_hash: FNV_OFFSET,
        }
    }

    fn run_slot(&mut self, world: &SlotWorld) -> Result<MetricsRow> {
        self.consumed_hash = fnv1a(self.consumed_hash, &world.draw_hash.to_le_bytes());
        for n in 0..self.tables.len() {
            let requested = world.requests[n];
            let state = AgentState {
                cached: self.cache.row(n).to_vec(),
                requested,
            };
            if let Some(p) = self.pending[n].take() {
                iql_update(&mut self.tables[n], &p.state, p.action, p.reward, &state)?;
            }
            let valid = valid_actions(&state);
            let rng = &mut self.explore_rngs[n];
            let action = if rng.random::<f64>() < self.epsilon {
                ActionId(valid[rng.random_range(0..valid.len())])
            } else {
                ActionId(greedy_action(&self.tables[n].action_values(&state), &valid))
            };
            if action.0 != 0 {
                self.cache.replace(n, action.0, requested)?;
            }
            let reward = self
                .env
                .local_reward_of(&self.cache, &world.popularity[n], n);
            self.pending[n] = Some(PendingLocal {
                state,
                action,
                reward,
            });
        }
        Ok(finish_row(
            Scheme::Iql,
            &self.env,
            &self.cache,
            world,
            &mut self.sum_inst,
            self.seed,
        ))
    }
}

/// Least-recently-used replacement on every request.
struct LruRunner {
    env: SimEnv,
    lists: Vec<LruState>,
    cache: CacheMatrix,
    seed: u64,
    sum_inst: f64,
    consumed_hash: u64,
}

impl LruRunner {
    fn new(config: &SimConfig, env: SimEnv) -> Self {
        let n = config.n_faps;
        Self {
            env,
            lists: (0..n).map(|_| LruState::new(config.cache_capacity)).collect(),
            cache: CacheMatrix::new(n, config.cache_capacity, config.library_size),
            seed: config.seed,
            sum_inst: 0.0,
            consumed_hash: FNV_OFFSET,
        }
    }

    fn run_slot(&mut self, world: &SlotWorld) -> Result<MetricsRow> {
        self.consumed_hash = fnv1a(self.consumed_hash, &world.draw_hash.to_le_bytes());
        for n in 0..self.lists.len() {
            self.lists[n].access(world.requests[n]);
            let entries = self.lists[n].entries().to_vec();
            self.cache.set_row(n, &entries)?;
        }
        Ok(finish_row(
            Scheme::Lru,
            &self.env,
            &self.cache,
            world,
            &mut self.sum_inst,
            self.seed,
        ))
    }
}

enum SchemeState {
    Marl(MarlSystem),
    Dqn(DqnRunner),
    Iql(IqlRunner),
    Lru(LruRunner),
}

impl SchemeState {
    fn build(scheme: Scheme, config: &SimConfig, env: SimEnv, factory: &RngFactory) -> Result<Self> {
        Ok(match scheme {
            Scheme::Marl => SchemeState::Marl(MarlSystem::new(config, env, factory)?),
            Scheme::Dqn => SchemeState::Dqn(DqnRunner::new(config, env, factory)?),
            Scheme::Iql => SchemeState::Iql(IqlRunner::new(config, env, factory)),
            Scheme::Lru => SchemeState::Lru(LruRunner::new(config, env)),
        })
    }

    fn set_epsilon(&mut self, epsilon: f64) {
        match self {
            SchemeState::Marl(s) => s.set_epsilon(epsilon),
            SchemeState::Dqn(s) => {
                for a in &mut s.agents {
                    a.epsilon = epsilon;
                }
            }
            SchemeState::Iql(s) => s.epsilon = epsilon,
            SchemeState::Lru(_) => {}
        }
    }

    fn sync_targets(&mut self) {
        match self {
            SchemeState::Marl(s) => s.sync_all(),
            SchemeState::Dqn(s) => {
                for a in &mut s.agents {
                    a.sync_now();
                }
            }
            _ => {}
        }
    }

    fn run_slot(&mut self, world: &SlotWorld) -> Result<MetricsRow> {
        match self {
            SchemeState::Marl(s) => s.run_slot(world),
            SchemeState::Dqn(s) => s.run_slot(world),
            SchemeState::Iql(s) => s.run_slot(world),
            SchemeState::Lru(s) => s.run_slot(world),
        }
    }

    fn consumed_hash(&self) -> u64 {
        match self {
            SchemeState::Marl(s) => s.consumed_hash(),
            SchemeState::Dqn(s) => s.consumed_hash,
            SchemeState::Iql(s) => s.consumed_hash,
            SchemeState::Lru(s) => s.consumed_hash,
        }
    }
}

/// Runs every configured scheme over one seeded world stream and writes
/// `metrics.csv`, `summary.csv`, and the resolved `config.toml` into
/// `out_dir`. Returns the per-scheme summaries.
pub fn run_experiment(config: &SimConfig, out_dir: &Path) -> Result<Vec<SchemeSummary>> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml())?;

    let mut writer = MetricsWriter::create(&out_dir.join("metrics.csv"))?;
    match run_all_slots(config, &mut writer) {
        Ok(summaries) => {
            writer.finish()?;
            write_summaries(&out_dir.join("summary.csv"), &summaries)?;
            Ok(summaries)
        }
        Err(e) => {
            writer.mark_incomplete(&e.to_string());
            Err(e)
        }
    }
}

fn run_all_slots(config: &SimConfig, writer: &mut MetricsWriter) -> Result<Vec<SchemeSummary>> {
    let factory = RngFactory::new(config.seed);
    let topology = build_topology(config.n_faps, config.cell_radius, &config.connectivity)?;
    let env = SimEnv {
        topology: topology.clone(),
        params: config.radio_params(),
        lambda: config.lambda,
        coop_mode: config.coop_delay_mode,
    };
    let mut gen = WorldGen::new(
        topology,
        config.radio_params(),
        config.users_per_fap,
        config.library_size,
        config.tau,
        config.consistent_preference,
        config.popularity_aggregation,
        &factory,
    )?;

    let mut schemes: Vec<(Scheme, SchemeState)> = config
        .schemes
        .iter()
        .map(|&s| Ok((s, SchemeState::build(s, config, env.clone(), &factory)?)))
        .collect::<Result<_>>()?;

    let horizon = config.horizon;
    let tail_len = (horizon / 4).max(1);
    let tail_start = horizon - tail_len + 1;
    let mut sum_full = vec![0.0f64; schemes.len()];
    let mut sum_tail = vec![0.0f64; schemes.len()];

    for t in 1..=horizon {
        let world = gen.next_slot()?;
        let epsilon = config.epsilon_at(t);
        for (i, (_, state)) in schemes.iter_mut().enumerate() {
            state.set_epsilon(epsilon);
            let row = state.run_slot(&world)?;
            sum_full[i] += row.inst_delay_s;
            if t >= tail_start {
                sum_tail[i] += row.inst_delay_s;
            }
            if t % config.record_interval == 0 {
                writer.write_row(&row)?;
            }
            if matches!(config.sync_mode, SyncMode::Slots) && t % config.nu == 0 {
                state.sync_targets();
            }
        }
    }

    // every scheme must have consumed the identical draw stream
    let reference = schemes[0].1.consumed_hash();
    for (scheme, state) in &schemes {
        if state.consumed_hash() != reference {
            return Err(Error::Domain(format!(
                "common-random-numbers violation: {scheme} consumed a different draw stream"
            )));
        }
    }

    Ok(schemes
        .iter()
        .enumerate()
        .map(|(i, (scheme, _))| SchemeSummary {
            scheme: *scheme,
            cache_capacity: config.cache_capacity,
            horizon,
            seed: config.seed,
            mean_delay_s: sum_full[i] / horizon as f64,
            tail_mean_delay_s: sum_tail[i] / tail_len as f64,
        })
        .collect())
}

/// One `run_experiment` per capacity (shared seed), each in its own
/// subdirectory, plus a capacity-indexed `sweep_summary.csv`.
pub fn sweep_capacity(
    config: &SimConfig,
    capacities: &[usize],
    out_dir: &Path,
) -> Result<Vec<SchemeSummary>> {
    if capacities.is_empty() {
        return Err(Error::Config("capacity sweep needs at least one value".into()));
    }
    for &s in capacities {
        if s == 0 || s > config.library_size {
            return Err(Error::Config(format!(
                "swept capacity {s} outside 1..=library_size {}",
                config.library_size
            )));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut all = Vec::new();
    for &s in capacities {
        let sub = SimConfig {
            cache_capacity: s,
            ..config.clone()
        };
        let summaries = run_experiment(&sub, &out_dir.join(format!("S{s}")))?;
        all.extend(summaries);
    }
    write_summaries(&out_dir.join("sweep_summary.csv"), &all)?;
    Ok(all)
}
