//! Seeded world generation shared by every scheme in a run: user placement,
//! channel draws, popularity, and sampled requests — the common random
//! numbers — plus the delay/reward evaluation environment.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::popularity::{
    advance_preferences, fap_popularity, sample_request, FileId, PopularityAggregation,
    PopularityVector, PreferenceProfile,
};
use crate::radio::{
    delay_cloud_to_fap, draw_channel, miss_part, wireless_rate, CacheMatrix, CoopDelayMode,
    RadioParams, Tier,
};
use crate::topology::{place_users, Topology};
use crate::Result;

/// Derives independent, reproducible RNG streams from one master seed.
#[derive(Clone, Copy, Debug)]
pub struct RngFactory {
    master: u64,
}

impl RngFactory {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// A stream named by `(label, idx)`; identical inputs give identical
    /// streams, distinct inputs give unrelated ones.
    pub fn stream(&self, label: &str, idx: u64) -> ChaCha12Rng {
        let mut h = Sha256::new();
        h.update(self.master.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(idx.to_le_bytes());
        let digest = h.finalize();
        let seed: [u8; 32] = digest.as_slice().try_into().expect("sha256 is 32 bytes");
        ChaCha12Rng::from_seed(seed)
    }
}

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a fold used to fingerprint the draw streams each scheme consumes.
pub fn fnv1a(mut acc: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        acc ^= b as u64;
        acc = acc.wrapping_mul(FNV_PRIME);
    }
    acc
}

/// Everything random the environment decides for one slot. The same value is
/// handed to every scheme so their request and channel realizations match.
#[derive(Clone, Debug)]
pub struct SlotWorld {
    /// 1-based slot index.
    pub t: usize,
    /// Per-F-AP popularity for this slot.
    pub popularity: Vec<PopularityVector>,
    /// One sampled request per F-AP.
    pub requests: Vec<FileId>,
    /// Mean wireless delay over the served users of each F-AP, seconds.
    pub z1_mean: Vec<f64>,
    /// Fingerprint of the draws above.
    pub draw_hash: u64,
}

/// Stateful generator producing the slot sequence for one seeded run.
pub struct WorldGen {
    topology: Topology,
    params: RadioParams,
    profile: PreferenceProfile,
    users_per_fap: usize,
    consistent: bool,
    aggregation: PopularityAggregation,
    placement_rng: ChaCha12Rng,
    channel_rng: ChaCha12Rng,
    request_rng: ChaCha12Rng,
    preference_rng: ChaCha12Rng,
    steady_popularity: Option<Vec<PopularityVector>>,
    t: usize,
}

impl WorldGen {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        topology: Topology,
        params: RadioParams,
        users_per_fap: usize,
        library_size: usize,
        tau: f64,
        consistent: bool,
        aggregation: PopularityAggregation,
        factory: &RngFactory,
    ) -> Result<Self> {
        let mut preference_rng = factory.stream("world/preferences", 0);
        let profile = PreferenceProfile::new(
            topology.n_faps * users_per_fap,
            library_size,
            tau,
            &mut preference_rng,
        )?;
        Ok(Self {
            topology,
            params,
            profile,
            users_per_fap,
            consistent,
            aggregation,
            placement_rng: factory.stream("world/placement", 0),
            channel_rng: factory.stream("world/channel", 0),
            request_rng: factory.stream("world/requests", 0),
            preference_rng,
            steady_popularity: None,
            t: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn popularity_now(&mut self, layout: &crate::topology::UserLayout) -> Result<Vec<PopularityVector>> {
        if self.consistent {
            if let Some(p) = &self.steady_popularity {
                return Ok(p.clone());
            }
        }
        let pops = (0..self.topology.n_faps)
            .map(|n| fap_popularity(&self.profile, layout, n, self.aggregation))
            .collect::<Result<Vec<_>>>()?;
        if self.consistent {
            self.steady_popularity = Some(pops.clone());
        }
        Ok(pops)
    }

    pub fn next_slot(&mut self) -> Result<SlotWorld> {
        self.t += 1;
        if self.t > 1 {
            advance_preferences(&mut self.profile, self.consistent, &mut self.preference_rng);
        }
        let layout = place_users(&self.topology, self.users_per_fap, &mut self.placement_rng);
        let gains = draw_channel(self.topology.n_faps, self.users_per_fap, &mut self.channel_rng);
        let popularity = self.popularity_now(&layout)?;

        let mut z1_mean = Vec::with_capacity(self.topology.n_faps);
        for n in 0..self.topology.n_faps {
            let mut acc = 0.0;
            for k in 0..self.users_per_fap {
                let rate = wireless_rate(&self.params, gains.gains[n][k], layout.distances[n][k])
                    .max(self.params.rate_floor);
                acc += self.params.file_size / rate;
            }
            z1_mean.push(acc / self.users_per_fap as f64);
        }

        let requests: Vec<FileId> = popularity
            .iter()
            .map(|pop| sample_request(pop, &mut self.request_rng))
            .collect();

        let mut h = fnv1a(FNV_OFFSET, &(self.t as u64).to_le_bytes());
        for &r in &requests {
            h = fnv1a(h, &r.to_le_bytes());
        }
        for &z in &z1_mean {
            h = fnv1a(h, &z.to_bits().to_le_bytes());
        }

        Ok(SlotWorld {
            t: self.t,
            popularity,
            requests,
            z1_mean,
            draw_hash: h,
        })
    }
}

/// Aggregate metrics of one scheme over one slot.
#[derive(Clone, Copy, Debug)]
pub struct SlotEval {
    /// Instantaneous popularity-weighted delay summed over F-APs, seconds.
    pub inst_delay: f64,
    pub global_reward: f64,
    pub hit_local: f64,
    pub hit_neighbor: f64,
    pub hit_cloud: f64,
}

/// Delay/reward evaluation environment: topology, radio constants, and the
/// model switches. Pure with respect to the caches it is handed.
#[derive(Clone, Debug)]
pub struct SimEnv {
    pub topology: Topology,
    pub params: RadioParams,
    pub lambda: f64,
    pub coop_mode: CoopDelayMode,
}

impl SimEnv {
    /// Delay a request for `file` at `fap` pays on top of the wireless hop.
    pub fn miss_part(&self, cache: &CacheMatrix, fap: usize, file: FileId) -> f64 {
        miss_part(&self.params, cache, &self.topology, fap, file, self.coop_mode)
    }

    /// Local exponential reward of one F-AP against the joint cache.
    pub fn local_reward_of(
        &self,
        cache: &CacheMatrix,
        popularity: &PopularityVector,
        fap: usize,
    ) -> f64 {
        let mut acc = 0.0;
        for (i, &p) in popularity.probs().iter().enumerate() {
            let miss = self.miss_part(cache, fap, (i + 1) as FileId);
            acc += p * (-(self.lambda * miss)).exp();
        }
        acc
    }

    /// All per-F-AP local rewards.
    pub fn local_rewards(&self, cache: &CacheMatrix, popularity: &[PopularityVector]) -> Vec<f64> {
        (0..self.topology.n_faps)
            .map(|n| self.local_reward_of(cache, &popularity[n], n))
            .collect()
    }

    /// Instantaneous delay objective, hit-tier split, and global reward for
    /// one joint cache state.
    pub fn evaluate_slot(
        &self,
        cache: &CacheMatrix,
        popularity: &[PopularityVector],
        z1_mean: &[f64],
    ) -> SlotEval {
        let n_faps = self.topology.n_faps;
        let z3 = delay_cloud_to_fap(&self.params);
        let mut inst = 0.0;
        let mut reward = 0.0;
        let mut tiers = [0.0f64; 3];
        for n in 0..n_faps {
            let mut fap_reward = 0.0;
            for (i, &p) in popularity[n].probs().iter().enumerate() {
                let file = (i + 1) as FileId;
                let miss = match crate::radio::tier(cache, &self.topology, n, file) {
                    Tier::Local => {
                        tiers[0] += p;
                        0.0
                    }
                    Tier::Neighbor => {
                        tiers[1] += p;
                        crate::radio::delay_fap_to_fap(
                            &self.params,
                            cache.helper_count(&self.topology, n, file),
                            self.coop_mode,
                        )
                    }
                    Tier::Cloud => {
                        tiers[2] += p;
                        z3
                    }
                };
                inst += p * (z1_mean[n] + miss);
                fap_reward += p * (-(self.lambda * miss)).exp();
            }
            reward += fap_reward;
        }
        let norm: f64 = popularity.iter().map(PopularityVector::total).sum();
        SlotEval {
            inst_delay: inst,
            global_reward: reward,
            hit_local: tiers[0] / norm,
            hit_neighbor: tiers[1] / norm,
            hit_cloud: tiers[2] / norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popularity::PopularityAggregation;
    use crate::radio::PathlossMode;
    use crate::topology::{build_topology, ConnectivitySpec};

    fn params() -> RadioParams {
        RadioParams {
            bandwidth: 1.0e8,
            tx_power: 1.0,
            noise_psd: 4.0e-21,
            interference_power: 1.0e-13,
            pathloss_exponent: 3.0,
            file_size: 1.0e6,
            backhaul_rate: 1.0e8,
            inter_fap_rate: 1.0e9,
            rate_floor: 1.0e3,
            pathloss_mode: PathlossMode::Exponent,
        }
    }

    fn gen(seed: u64, consistent: bool) -> WorldGen {
        let topo = build_topology(3, 100.0, &ConnectivitySpec::default()).unwrap();
        WorldGen::new(
            topo,
            params(),
            4,
            20,
            1.1,
            consistent,
            PopularityAggregation::Mean,
            &RngFactory::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn rng_streams_are_stable_and_distinct() {
        use rand::Rng;
        let f = RngFactory::new(7);
        let a: u64 = f.stream("x", 0).random();
        let b: u64 = f.stream("x", 0).random();
        let c: u64 = f.stream("x", 1).random();
        let d: u64 = f.stream("y", 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn worlds_reproducible_per_seed() {
        let mut g1 = gen(5, true);
        let mut g2 = gen(5, true);
        for _ in 0..10 {
            let w1 = g1.next_slot().unwrap();
            let w2 = g2.next_slot().unwrap();
            assert_eq!(w1.requests, w2.requests);
            assert_eq!(w1.z1_mean, w2.z1_mean);
            assert_eq!(w1.draw_hash, w2.draw_hash);
        }
        let mut g3 = gen(6, true);
        assert_ne!(
            g3.next_slot().unwrap().draw_hash,
            gen(5, true).next_slot().unwrap().draw_hash
        );
    }

    #[test]
    fn consistent_worlds_keep_popularity_constant() {
        let mut g = gen(9, true);
        let first = g.next_slot().unwrap().popularity;
        for _ in 0..5 {
            assert_eq!(g.next_slot().unwrap().popularity, first);
        }
        let mut gi = gen(9, false);
        let a = gi.next_slot().unwrap().popularity;
        let b = gi.next_slot().unwrap().popularity;
        assert_ne!(a, b);
    }

    #[test]
    fn popularity_rows_normalized() {
        let mut g = gen(11, false);
        for _ in 0..4 {
            let w = g.next_slot().unwrap();
            for pop in &w.popularity {
                assert!((pop.total() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn local_reward_paths_agree() {
        // SimEnv's direct evaluation equals the agent-module formula fed with
        // full delay vectors
        let topo = build_topology(2, 100.0, &ConnectivitySpec::default()).unwrap();
        let env = SimEnv {
            topology: topo.clone(),
            params: params(),
            lambda: 0.8,
            coop_mode: CoopDelayMode::Literal,
        };
        let mut cache = CacheMatrix::new(2, 2, 5);
        cache.replace(0, 1, 2).unwrap();
        cache.replace(1, 1, 4).unwrap();
        let pop = PopularityVector::from_probs(vec![0.4, 0.3, 0.1, 0.15, 0.05]);
        let z1 = vec![0.0004; 5];
        let delays: Vec<f64> = (1..=5)
            .map(|f| z1[f as usize - 1] + env.miss_part(&cache, 0, f))
            .collect();
        let via_agent = crate::agent::local_reward(&pop, &delays, &z1, 0.8).unwrap();
        let direct = env.local_reward_of(&cache, &pop, 0);
        assert!((via_agent - direct).abs() < 1e-15);
    }

    #[test]
    fn slot_eval_tier_fractions_sum_to_one() {
        let mut g = gen(13, true);
        let w = g.next_slot().unwrap();
        let env = SimEnv {
            topology: g.topology().clone(),
            params: params(),
            lambda: 1.0,
            coop_mode: CoopDelayMode::Literal,
        };
        let mut cache = CacheMatrix::new(3, 2, 20);
        cache.replace(0, 1, 1).unwrap();
        cache.replace(1, 1, 7).unwrap();
        let eval = env.evaluate_slot(&cache, &w.popularity, &w.z1_mean);
        let total = eval.hit_local + eval.hit_neighbor + eval.hit_cloud;
        assert!((total - 1.0).abs() < 1e-9);
        assert!(eval.inst_delay > 0.0);
        assert!(eval.global_reward > 0.0 && eval.global_reward <= 3.0 + 1e-9);
    }
}
