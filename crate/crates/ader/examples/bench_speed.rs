use ader::harness::{run_training, EnvSpec, RunConfig, Variant};
use std::time::Instant;

fn main() {
    for hidden in [vec![16usize, 16], vec![32, 32], vec![64, 64]] {
        let mut cfg = RunConfig::new(EnvSpec::default_grid(), Variant::Basic, 1);
        cfg.agent.hidden = hidden.clone();
        cfg.agent.target_noise_std = 0.0;
        cfg.total_env_steps = 3000;
        cfg.eval_every = 2500;
        let t0 = Instant::now();
        let log = run_training(&cfg).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        // 1000 warmup steps are cheap; 2000 trained steps dominate.
        let per_50k = dt / 2000.0 * 49000.0;
        println!(
            "hidden {:?}: {dt:.2}s for 3k steps -> est {per_50k:.0}s per 50k-step run; rows {}",
            hidden,
            log.rows.len()
        );
    }
}
