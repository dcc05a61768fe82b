//! ECs kept awake by the coverage heuristic against the exhaustive optimum
//! on random tiny instances.

use edgenap::forecast::OriginLoad;
use edgenap::orchestrator::ideal::{ideal_schedule, random_tiny};
use edgenap::orchestrator::{coverage, Capacity};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut steps, mut optimal, mut extra) = (0, 0, 0);
    for _ in 0..100 {
        let inst = random_tiny(&mut rng);
        let best = ideal_schedule(&inst)?;
        let rs = inst.reach();
        let cap = Capacity {
            resources: inst.capacity,
            demand: inst.demand.clone(),
            service_rate: inst.service_rate,
            margin: 0.0,
        };
        for (cells, sol) in inst.cells.iter().zip(&best.steps) {
            let mut o = OriginLoad::zeros(inst.ecs, inst.services);
            for (u, &q) in cells.iter().enumerate() {
                o.add(q, inst.user_service[u], inst.rates[u]);
            }
            let cov = coverage(o.to_matrix(), &rs, &cap, &vec![true; inst.ecs], true);
            let ideal = sol.active.iter().filter(|a| **a).count();
            steps += 1;
            if cov.set.len() == ideal {
                optimal += 1;
            }
            extra += cov.set.len().saturating_sub(ideal);
        }
    }
    println!("{steps} steps: coverage optimal on {optimal}, {extra} extra ECs in total");
    Ok(())
}
