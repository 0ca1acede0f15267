use ader::harness::{run_training, EnvSpec, RunConfig, Variant};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let hidden: Vec<usize> = args
        .get(1)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![16, 16]);
    let seeds: Vec<u64> = args
        .get(2)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![1, 2]);
    let steps: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(50_000);

    for variant in [Variant::Ddpg, Variant::Td3, Variant::Basic] {
        for &seed in &seeds {
            let mut cfg = RunConfig::new(EnvSpec::default_grid(), variant, seed);
            cfg.agent.hidden = hidden.clone();
            cfg.agent.target_noise_std = 0.0;
            cfg.total_env_steps = steps;
            let t0 = Instant::now();
            let log = run_training(&cfg).unwrap();
            let storm = log.visitation.as_ref().unwrap().count((2, 2));
            let last = log.final_row().unwrap();
            println!(
                "{variant:?} seed {seed}: final_return {:>8.2} fail {:.2} storm_visits {:>6} ({:.0}s)",
                last.mean_return,
                last.failure_rate,
                storm,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
