//! Multi-agent coordination: caching-history counters, the communication
//! observation, the global reward, the counter-scaled target rule, and the
//! joint learning loop that advances all cooperating agents by one slot.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    greedy_action, learn_batch, select_action, valid_actions, ActionId, AgentState, DdqnAgent,
    TargetRule, TargetState, Transition,
};
use crate::harness::config::{Scheme, SimConfig};
use crate::harness::metrics::MetricsRow;
use crate::harness::world::{fnv1a, RngFactory, SimEnv, SlotWorld};
use crate::popularity::FileId;
use crate::radio::CacheMatrix;
use crate::topology::Topology;
use crate::{Error, Result};

/// How neighbor counters aggregate into the observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationAggregation {
    /// Mean over neighbors, keeping the observation in `[0,1]`.
    Mean,
    /// Plain sum over neighbors.
    Sum,
}

/// `counts[n][f-1]`: how many times agent `n` has cached file `f` so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheCounters {
    counts: Vec<Vec<u64>>,
}

impl CacheCounters {
    pub fn new(n_faps: usize, library_size: usize) -> Self {
        Self {
            counts: vec![vec![0; library_size]; n_faps],
        }
    }

    pub fn get(&self, fap: usize, file: FileId) -> u64 {
        self.counts[fap][file as usize - 1]
    }
}

/// Applies the counter bookkeeping of one caching action: the requested
/// file's counter increments and the evicted file's counter resets to zero.
/// A "do not cache" action leaves everything untouched.
pub fn update_counters(
    counters: &mut CacheCounters,
    fap: usize,
    requested: FileId,
    action: ActionId,
    evicted: FileId,
) {
    if action.0 == 0 {
        return;
    }
    counters.counts[fap][requested as usize - 1] += 1;
    if evicted != 0 && evicted != requested {
        counters.counts[fap][evicted as usize - 1] = 0;
    }
}

/// Time-normalized view of how often the neighbors of `fap` have cached
/// `file`: aggregate over the neighbor set, divided by `t`.
pub fn neighbor_observation(
    counters: &CacheCounters,
    topology: &Topology,
    fap: usize,
    file: FileId,
    t: usize,
    aggregation: ObservationAggregation,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("slot index must be at least 1".into()));
    }
    let neighbors = topology.neighbors(fap);
    if neighbors.is_empty() {
        return Ok(0.0);
    }
    let sum: u64 = neighbors.iter().map(|&m| counters.get(m, file)).sum();
    let aggregated = match aggregation {
        ObservationAggregation::Mean => sum as f64 / neighbors.len() as f64,
        ObservationAggregation::Sum => sum as f64,
    };
    Ok(aggregated / t as f64)
}

/// Sum of the per-agent rewards with the addends retained.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalRewardSample {
    pub value: f64,
    pub per_agent: Vec<f64>,
}

pub fn global_reward(local_rewards: &[f64]) -> GlobalRewardSample {
    GlobalRewardSample {
        value: local_rewards.iter().sum(),
        per_agent: local_rewards.to_vec(),
    }
}

/// Counter-scaled cooperative target:
/// `(R + gamma * Qhat(s_eval, a*)) / (C + 1)` with `a*` chosen by the
/// current network. `target_state` picks which stored state is evaluated.
pub fn marl_target(agent: &DdqnAgent, transition: &Transition, target_state: TargetState) -> f64 {
    let eval_state = match target_state {
        TargetState::Next => &transition.next_state,
        TargetState::Current => &transition.state,
    };
    let enc = agent.encode(eval_state);
    let q_current = agent
        .current_net
        .forward(&enc)
        .expect("encoded state matches network input");
    let a_star = greedy_action(&q_current, &valid_actions(eval_state));
    let q_target = agent
        .target_net
        .forward(&enc)
        .expect("encoded state matches network input");
    (transition.reward + agent.discount * q_target[a_star]) / (transition.neighbor_count + 1.0)
}

struct PendingTransition {
    state: AgentState,
    action: ActionId,
    reward: f64,
    neighbor_count: f64,
}

/// The cooperative scheme: one DDQN per F-AP, shared counters, joint
/// learning across each neighbor set every slot.
pub struct MarlSystem {
    env: SimEnv,
    agents: Vec<DdqnAgent>,
    counters: CacheCounters,
    cache: CacheMatrix,
    pending: Vec<Option<PendingTransition>>,
    batch_size: usize,
    target_state: TargetState,
    observation_aggregation: ObservationAggregation,
    explore_rngs: Vec<ChaCha12Rng>,
    learn_rngs: Vec<ChaCha12Rng>,
    seed: u64,
    sum_inst_delay: f64,
    consumed_hash: u64,
}

impl MarlSystem {
    pub fn new(config: &SimConfig, env: SimEnv, factory: &RngFactory) -> Result<Self> {
        let n = config.n_faps;
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let mut init_rng = factory.stream("marl/net-init", i as u64);
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
            agent.sync_on_steps = matches!(config.sync_mode, super::harness::config::SyncMode::Steps);
            agents.push(agent);
        }
        Ok(Self {
            env,
            agents,
            counters: CacheCounters::new(n, config.library_size),
            cache: CacheMatrix::new(n, config.cache_capacity, config.library_size),
            pending: (0..n).map(|_| None).collect(),
            batch_size: config.batch_size,
            target_state: config.target_state,
            observation_aggregation: config.observation_aggregation,
            explore_rngs: (0..n)
                .map(|i| factory.stream("marl/explore", i as u64))
                .collect(),
            learn_rngs: (0..n)
                .map(|i| factory.stream("marl/learn", i as u64))
                .collect(),
            seed: config.seed,
            sum_inst_delay: 0.0,
            consumed_hash: crate::harness::world::FNV_OFFSET,
        })
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        for a in &mut self.agents {
            a.epsilon = epsilon;
        }
    }

    pub fn sync_all(&mut self) {
        for a in &mut self.agents {
            a.sync_now();
        }
    }

    pub fn cache(&self) -> &CacheMatrix {
        &self.cache
    }

    pub fn counters(&self) -> &CacheCounters {
        &self.counters
    }

    pub fn agents(&self) -> &[DdqnAgent] {
        &self.agents
    }

    pub fn consumed_hash(&self) -> u64 {
        self.consumed_hash
    }

    /// One full slot of the cooperative scheme, in F-AP index order:
    /// request, action, counter updates, observation, transition storage,
    /// then a joint learning round over each agent's neighbor set, and
    /// finally the slot metrics on the end-of-slot joint cache.
    pub fn run_slot(&mut self, world: &SlotWorld) -> Result<MetricsRow> {
        let t = world.t;
        let n_faps = self.agents.len();
        self.consumed_hash = fnv1a(self.consumed_hash, &world.draw_hash.to_le_bytes());

        for n in 0..n_faps {
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
                    neighbor_count: p.neighbor_count,
                });
            }

            let action = select_action(&self.agents[n], &state, &mut self.explore_rngs[n]);
            if action.0 != 0 {
                let evicted = self.cache.replace(n, action.0, requested)?;
                update_counters(&mut self.counters, n, requested, action, evicted);
            }

            let observation = neighbor_observation(
                &self.counters,
                &self.env.topology,
                n,
                requested,
                t,
                self.observation_aggregation,
            )?;
            let locals = self.env.local_rewards(&self.cache, &world.popularity);
            let reward = global_reward(&locals);
            self.pending[n] = Some(PendingTransition {
                state,
                action,
                reward: reward.value,
                neighbor_count: observation,
            });

            // joint learning round: this agent and its neighbors
            let mut members: Vec<usize> = self.env.topology.neighbors(n).to_vec();
            members.push(n);
            members.sort_unstable();
            for &m in &members {
                learn_batch(
                    &mut self.agents[m],
                    self.batch_size,
                    &mut self.learn_rngs[m],
                    TargetRule::Marl {
                        target_state: self.target_state,
                    },
                )?;
            }
        }

        let eval = self
            .env
            .evaluate_slot(&self.cache, &world.popularity, &world.z1_mean);
        self.sum_inst_delay += eval.inst_delay;
        Ok(MetricsRow {
            t,
            scheme: Scheme::Marl,
            inst_delay_s: eval.inst_delay,
            cum_delay_s: self.sum_inst_delay / t as f64,
            global_reward: eval.global_reward,
            hit_local: eval.hit_local,
            hit_neighbor: eval.hit_neighbor,
            hit_cloud: eval.hit_cloud,
            seed: self.seed,
        })
    }
}
