// Temporary diagnostics for learning-quality tuning.
use fogcache::agent::{
    learn_batch, select_action, AgentState, DdqnAgent, StateEncoding, TargetRule, Transition,
};
use fogcache::harness::config::SimConfig;
use fogcache::harness::world::{RngFactory, SimEnv, WorldGen};
use fogcache::marl::MarlSystem;
use fogcache::popularity::PopularityAggregation;
use fogcache::radio::CacheMatrix;
use fogcache::topology::build_topology;

fn desk_config() -> SimConfig {
    SimConfig {
        n_faps: 3,
        users_per_fap: 15,
        library_size: 50,
        cache_capacity: 5,
        horizon: 5000,
        backhaul_rate: 1.0e6,
        inter_fap_rate: 1.0e7,
        nu: 10,
        batch_size: 128,
        hidden_sizes: vec![64],
        replay_capacity: 500,
        epsilon_end: 0.01,
        epsilon_anneal_frac: 0.35,
        ..Default::default()
    }
}

fn mass_of(cache: &CacheMatrix, pops: &[fogcache::popularity::PopularityVector], n: usize) -> f64 {
    cache
        .row(n)
        .iter()
        .filter(|&&f| f != 0)
        .map(|&f| pops[n].prob(f))
        .sum()
}

fn coverage_of(cache: &CacheMatrix, pops: &[fogcache::popularity::PopularityVector], n: usize) -> f64 {
    // popularity mass of F-AP n covered anywhere in the system
    (1..=pops[n].len() as u32)
        .filter(|&f| (0..cache.n_faps()).any(|m| cache.contains(m, f)))
        .map(|f| pops[n].prob(f))
        .sum()
}

#[test]
#[ignore]
fn joint_quality_probe() {
    let config = desk_config();
    let factory = RngFactory::new(1);
    let topology = build_topology(config.n_faps, config.cell_radius, &config.connectivity).unwrap();
    let env = SimEnv {
        topology: topology.clone(),
        params: config.radio_params(),
        lambda: config.lambda,
        coop_mode: config.coop_delay_mode,
    };

    // --- MARL ---
    let mut gen = WorldGen::new(
        topology.clone(),
        config.radio_params(),
        config.users_per_fap,
        config.library_size,
        config.tau,
        true,
        PopularityAggregation::Mean,
        &factory,
    )
    .unwrap();
    let mut marl = MarlSystem::new(&config, env.clone(), &factory).unwrap();
    let mut pops = None;
    for t in 1..=config.horizon {
        let w = gen.next_slot().unwrap();
        marl.set_epsilon(config.epsilon_at(t));
        marl.run_slot(&w).unwrap();
        if pops.is_none() {
            pops = Some(w.popularity.clone());
        }
        if t % 1000 == 0 {
            let pops = pops.as_ref().unwrap();
            let own: Vec<f64> = (0..3).map(|n| mass_of(marl.cache(), pops, n)).collect();
            let cov: Vec<f64> = (0..3).map(|n| coverage_of(marl.cache(), pops, n)).collect();
            println!("marl t={t} own={own:.3?} cov={cov:.3?}");
        }
    }

    // --- independent DQN (mirror of the runner loop) ---
    let mut gen = WorldGen::new(
        topology.clone(),
        config.radio_params(),
        config.users_per_fap,
        config.library_size,
        config.tau,
        true,
        PopularityAggregation::Mean,
        &factory,
    )
    .unwrap();
    let mut agents: Vec<DdqnAgent> = (0..3u64)
        .map(|i| {
            DdqnAgent::new(
                5,
                50,
                StateEncoding::OneHot,
                &[64],
                config.alpha,
                config.grad_clip_option(),
                config.gamma,
                config.nu,
                config.replay_capacity,
                &mut factory.stream("dqn/net-init", i),
            )
            .unwrap()
        })
        .collect();
    let mut cache = CacheMatrix::new(3, 5, 50);
    let mut pending: Vec<Option<(AgentState, fogcache::agent::ActionId, f64)>> =
        vec![None, None, None];
    let mut explore: Vec<_> = (0..3u64).map(|i| factory.stream("dqn/explore", i)).collect();
    let mut learn: Vec<_> = (0..3u64).map(|i| factory.stream("dqn/learn", i)).collect();
    for t in 1..=config.horizon {
        let w = gen.next_slot().unwrap();
        for n in 0..3 {
            let requested = w.requests[n];
            let state = AgentState {
                cached: cache.row(n).to_vec(),
                requested,
            };
            if let Some((s, a, r)) = pending[n].take() {
                agents[n].memory.push(Transition {
                    state: s,
                    action: a,
                    reward: r,
                    next_state: state.clone(),
                    neighbor_count: 0.0,
                });
            }
            agents[n].epsilon = config.epsilon_at(t);
            let action = select_action(&agents[n], &state, &mut explore[n]);
            if action.0 != 0 {
                cache.replace(n, action.0, requested).unwrap();
            }
            let r = env.local_reward_of(&cache, &w.popularity[n], n);
            pending[n] = Some((state, action, r));
            learn_batch(
                &mut agents[n],
                config.batch_size,
                &mut learn[n],
                TargetRule::IndependentDqn,
            )
            .unwrap();
        }
        if t % 1000 == 0 {
            let pops = &w.popularity;
            let own: Vec<f64> = (0..3).map(|n| mass_of(&cache, pops, n)).collect();
            let cov: Vec<f64> = (0..3).map(|n| coverage_of(&cache, pops, n)).collect();
            println!("dqn  t={t} own={own:.3?} cov={cov:.3?}");
        }
    }
}

#[test]
#[ignore]
fn coordination_ceiling_probe() {
    use fogcache::popularity::{fap_popularity, PreferenceProfile};
    use fogcache::topology::place_users;
    // how much delay the perfect joint placement saves over perfect
    // independent placement, as a function of tau
    for tau in [0.9, 1.1, 1.3, 1.5, 2.0] {
        let mut gaps = Vec::new();
        for seed in 1..=5u64 {
            let factory = RngFactory::new(seed);
            let topo = build_topology(3, 100.0, &Default::default()).unwrap();
            let mut pr = factory.stream("world/preferences", 0);
            let profile = PreferenceProfile::new(45, 50, tau, &mut pr).unwrap();
            let mut pl = factory.stream("place", 0);
            let layout = place_users(&topo, 15, &mut pl);
            let pops: Vec<_> = (0..3)
                .map(|n| fap_popularity(&profile, &layout, n, PopularityAggregation::Mean).unwrap())
                .collect();

            // independent: each agent holds its own top-5
            let mut indep: Vec<Vec<u32>> = Vec::new();
            for pop in &pops {
                let mut ranked: Vec<(u32, f64)> =
                    (1..=50u32).map(|f| (f, pop.prob(f))).collect();
                ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
                indep.push(ranked.iter().take(5).map(|&(f, _)| f).collect());
            }
            // coordinated: greedy max marginal total-popularity, 15 slots,
            // no duplicates anywhere (location-free approximation, Z2 ~ 0)
            let mut chosen: Vec<u32> = Vec::new();
            while chosen.len() < 15 {
                let best = (1..=50u32)
                    .filter(|f| !chosen.contains(f))
                    .max_by(|&a, &b| {
                        let va: f64 = pops.iter().map(|p| p.prob(a)).sum();
                        let vb: f64 = pops.iter().map(|p| p.prob(b)).sum();
                        va.partial_cmp(&vb).unwrap()
                    })
                    .unwrap();
                chosen.push(best);
            }
            let cloud = |sets: &[Vec<u32>]| -> f64 {
                let union: std::collections::HashSet<u32> =
                    sets.iter().flatten().copied().collect();
                (0..3)
                    .map(|n| {
                        (1..=50u32)
                            .filter(|f| !union.contains(f))
                            .map(|f| pops[n].prob(f))
                            .sum::<f64>()
                    })
                    .sum()
            };
            let c_indep = cloud(&indep);
            let c_coord = cloud(&[chosen.clone()]);
            gaps.push((c_indep - c_coord) / c_indep);
        }
        println!(
            "tau={tau}: relative cloud-mass reduction from coordination per seed {:?}",
            gaps.iter().map(|g| (g * 1000.0).round() / 10.0).collect::<Vec<_>>()
        );
    }
}
