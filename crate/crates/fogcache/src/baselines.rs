//! Benchmark policies: least-recently-used replacement, independent tabular
//! Q-learning, and the max-target independent DQN. All of them run behind the
//! same slot loop as the cooperative scheme but never communicate.

use std::collections::HashMap;

use crate::agent::{greedy_action, AgentState, ActionId, DdqnAgent, Transition};
use crate::popularity::FileId;
use crate::{Error, Result};

/// Recency list, most recent first, never longer than the capacity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LruState {
    capacity: usize,
    entries: Vec<FileId>,
}

impl LruState {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn entries(&self) -> &[FileId] {
        &self.entries
    }

    pub fn contains(&self, file: FileId) -> bool {
        self.entries.contains(&file)
    }

    /// Hit moves the file to the front; a miss inserts at the front and
    /// evicts the least-recent entry once full.
    pub fn access(&mut self, file: FileId) {
        if let Some(pos) = self.entries.iter().position(|&f| f == file) {
            self.entries.remove(pos);
        } else if self.entries.len() == self.capacity {
            self.entries.pop();
        }
        if self.capacity > 0 {
            self.entries.insert(0, file);
        }
    }
}

/// Pure view of one LRU access.
pub fn lru_access(state: &LruState, file: FileId) -> LruState {
    let mut next = state.clone();
    next.access(file);
    next
}

/// Compressed tabular key: slot order is irrelevant to the value of a cache,
/// so rows are keyed by the sorted content plus the requested file.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QKey {
    cache: Vec<FileId>,
    requested: FileId,
}

impl QKey {
    pub fn from_state(state: &AgentState) -> Self {
        let mut cache = state.cached.clone();
        cache.sort_unstable();
        Self {
            cache,
            requested: state.requested,
        }
    }
}

/// Per-agent tabular action values with a hard size cap.
#[derive(Clone, Debug)]
pub struct TabularQ {
    table: HashMap<QKey, Vec<f64>>,
    pub learning_rate: f64,
    pub discount: f64,
    n_actions: usize,
    cap: usize,
}

impl TabularQ {
    pub fn new(cache_capacity: usize, learning_rate: f64, discount: f64, cap: usize) -> Self {
        Self {
            table: HashMap::new(),
            learning_rate,
            discount,
            n_actions: cache_capacity + 1,
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Action values for a state; unvisited entries read as zero.
    pub fn action_values(&self, state: &AgentState) -> Vec<f64> {
        self.table
            .get(&QKey::from_state(state))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    fn row_mut(&mut self, key: QKey) -> Result<&mut Vec<f64>> {
        if !self.table.contains_key(&key) && self.table.len() >= self.cap {
            return Err(Error::Capacity(format!(
                "tabular Q grew past {} states; shrink the library or cache size",
                self.cap
            )));
        }
        let n = self.n_actions;
        Ok(self.table.entry(key).or_insert_with(|| vec![0.0; n]))
    }
}

/// One tabular Q-learning update with the local reward:
/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
pub fn iql_update(
    q: &mut TabularQ,
    state: &AgentState,
    action: ActionId,
    reward: f64,
    next_state: &AgentState,
) -> Result<()> {
    if !reward.is_finite() {
        return Err(Error::Training(format!("non-finite reward {reward}")));
    }
    let next_max = q
        .action_values(next_state)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let (alpha, gamma) = (q.learning_rate, q.discount);
    let row = q.row_mut(QKey::from_state(state))?;
    let old = row[action.0];
    row[action.0] = old + alpha * (reward + gamma * next_max - old);
    Ok(())
}

/// Independent-DQN target: local reward plus a plain max over the frozen
/// target network, no cross-agent terms and no action masking — the
/// textbook max whose optimism the double estimator avoids.
pub fn independent_dqn_target(agent: &DdqnAgent, transition: &Transition) -> f64 {
    let next = agent.encode(&transition.next_state);
    let q_target = agent
        .target_net
        .forward(&next)
        .expect("encoded state matches network input");
    let all: Vec<usize> = (0..q_target.len()).collect();
    let best = greedy_action(&q_target, &all);
    transition.reward + agent.discount * q_target[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ddqn_target, ActionId};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::VecDeque;

    #[test]
    fn lru_textbook_sequences() {
        let mut s = LruState::new(2);
        for f in [1, 2, 3] {
            s.access(f);
        }
        assert_eq!(s.entries(), &[3, 2]);

        let mut s = LruState::new(2);
        for f in [1, 2, 1, 3] {
            s.access(f);
        }
        assert_eq!(s.entries(), &[3, 1]);
    }

    #[test]
    fn lru_pure_view_matches_in_place() {
        let mut a = LruState::new(3);
        let mut pure = LruState::new(3);
        for f in [5, 1, 5, 2, 9, 1] {
            a.access(f);
            pure = lru_access(&pure, f);
        }
        assert_eq!(a, pure);
    }

    /// Reference LRU built on a deque, kept deliberately naive.
    struct OracleLru {
        cap: usize,
        deque: VecDeque<FileId>,
    }

    impl OracleLru {
        fn access(&mut self, f: FileId) -> bool {
            let hit = self.deque.contains(&f);
            self.deque.retain(|&x| x != f);
            self.deque.push_front(f);
            while self.deque.len() > self.cap {
                self.deque.pop_back();
            }
            hit
        }
    }

    #[test]
    fn lru_agrees_with_reference_on_random_streams() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mut lru = LruState::new(4);
        let mut oracle = OracleLru {
            cap: 4,
            deque: VecDeque::new(),
        };
        for _ in 0..5000 {
            let f: FileId = rng.random_range(1..=12);
            let hit_lru = lru.contains(f);
            lru.access(f);
            let hit_oracle = oracle.access(f);
            assert_eq!(hit_lru, hit_oracle);
            assert_eq!(lru.entries(), oracle.deque.make_contiguous());
        }
    }

    fn st(cached: &[u32], requested: u32) -> AgentState {
        AgentState {
            cached: cached.to_vec(),
            requested,
        }
    }

    #[test]
    fn iql_full_overwrite_at_alpha_one() {
        let mut q = TabularQ::new(2, 1.0, 0.0, 1000);
        let s = st(&[1, 2], 3);
        iql_update(&mut q, &s, ActionId(1), 0.7, &st(&[3, 2], 1)).unwrap();
        assert_eq!(q.action_values(&s)[1], 0.7);
    }

    #[test]
    fn iql_zero_reward_keeps_zero_table() {
        let mut q = TabularQ::new(2, 0.5, 0.9, 1000);
        let s = st(&[1, 2], 3);
        iql_update(&mut q, &s, ActionId(0), 0.0, &s).unwrap();
        assert_eq!(q.action_values(&s), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn iql_two_state_chain_fixed_point() {
        // constant reward r on a two-state loop: Q converges to r/(1-gamma)
        let (r, gamma) = (0.4, 0.8);
        let mut q = TabularQ::new(1, 0.3, gamma, 1000);
        let s0 = st(&[1], 1);
        let s1 = st(&[1], 2);
        for _ in 0..2000 {
            iql_update(&mut q, &s0, ActionId(0), r, &s1).unwrap();
            iql_update(&mut q, &s1, ActionId(0), r, &s0).unwrap();
        }
        let expect = r / (1.0 - gamma);
        assert!((q.action_values(&s0)[0] - expect).abs() < 1e-9);
        assert!((q.action_values(&s1)[0] - expect).abs() < 1e-9);
    }

    #[test]
    fn iql_slot_order_does_not_split_states() {
        let mut q = TabularQ::new(2, 1.0, 0.0, 1000);
        iql_update(&mut q, &st(&[4, 9], 1), ActionId(0), 0.3, &st(&[4, 9], 2)).unwrap();
        // same cache content in the other slot order reads the same row
        assert_eq!(q.action_values(&st(&[9, 4], 1))[0], 0.3);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn iql_capacity_error_on_table_growth() {
        let mut q = TabularQ::new(1, 0.5, 0.9, 2);
        iql_update(&mut q, &st(&[1], 1), ActionId(0), 0.1, &st(&[1], 1)).unwrap();
        iql_update(&mut q, &st(&[1], 2), ActionId(0), 0.1, &st(&[1], 1)).unwrap();
        let third = iql_update(&mut q, &st(&[1], 3), ActionId(0), 0.1, &st(&[1], 1));
        assert!(matches!(third, Err(Error::Capacity(_))));
        // updating an existing row still works at the cap
        iql_update(&mut q, &st(&[1], 2), ActionId(0), 0.5, &st(&[1], 1)).unwrap();
    }

    fn discriminator_agent() -> DdqnAgent {
        let mut a = DdqnAgent::new(
            1,
            4,
            crate::agent::StateEncoding::Scalar,
            &[8],
            0.01,
            None,
            0.9,
            100,
            64,
            &mut ChaCha12Rng::seed_from_u64(9),
        )
        .unwrap();
        let zeros = vec![0.0; a.current_net.flat_params().len()];
        a.current_net.set_flat_params(&zeros);
        a.target_net.set_flat_params(&zeros);
        a.current_net.biases_mut(1).copy_from_slice(&[1.0, 0.0]);
        a.target_net.biases_mut(1).copy_from_slice(&[2.0, 5.0]);
        a
    }

    fn hand_transition() -> Transition {
        Transition {
            state: st(&[1], 2),
            action: ActionId(1),
            reward: 0.5,
            next_state: st(&[2], 3),
            neighbor_count: 0.0,
        }
    }

    #[test]
    fn dqn_target_gamma_zero_and_zero_net() {
        let mut a = discriminator_agent();
        a.discount = 0.0;
        assert_eq!(independent_dqn_target(&a, &hand_transition()), 0.5);
        let mut b = discriminator_agent();
        let zeros = vec![0.0; b.target_net.flat_params().len()];
        b.target_net.set_flat_params(&zeros);
        assert_eq!(independent_dqn_target(&b, &hand_transition()), 0.5);
    }

    #[test]
    fn dqn_and_ddqn_targets_differ_on_discriminator() {
        let a = discriminator_agent();
        let tr = hand_transition();
        // DQN maxes the target net (5.0); DDQN follows the current argmax (2.0)
        let dqn = independent_dqn_target(&a, &tr);
        let ddqn = ddqn_target(&a, &tr);
        assert!((dqn - (0.5 + 0.9 * 5.0)).abs() < 1e-12);
        assert!((ddqn - (0.5 + 0.9 * 2.0)).abs() < 1e-12);
        assert_ne!(dqn, ddqn);
    }
}
