//! Splitting identity `X^j = X̃^j + X̂^j`: the full scheme against the
//! linear + random-PDE pipeline on the identical persisted noise path.
//!
//! Run with `cargo run --release --example splitting`.

use sch::field::Field;
use sch::initial;
use sch::noise::{increment_from_draws, make_noise_mesh, read_noise_path, sample_increment, write_noise_path};
use sch::rng::StreamKey;
use sch::stepper::{step_full, step_linear, step_random, StepperState};
use sch::SolverConfig;

fn main() {
    let cfg = SolverConfig::new(2, 32, 0.2, 3.0).with_steps(50);
    let grid = cfg.grid().unwrap();
    let mesh = make_noise_mesh(2, cfg.eta, cfg.epsilon).unwrap();
    let seed = 2718;

    // sample and persist the path, then replay it from the file
    let draws: Vec<Vec<f64>> = (1..=cfg.steps as u64)
        .map(|j| sample_increment(&mesh, &grid, cfg.tau, StreamKey { seed, path: 0, step: j }).draws)
        .collect();
    let out = std::path::Path::new("out/splitting");
    std::fs::create_dir_all(out).unwrap();
    let path_file = out.join("path.schn");
    write_noise_path(&path_file, &mesh, cfg.tau, seed, &draws).unwrap();
    let replay = read_noise_path(&path_file).unwrap();
    println!("persisted {} increments to {}", replay.draws_per_step.len(), path_file.display());

    let x0 = initial::tanh_circle(&grid, &[0.5, 0.5], 0.25, cfg.epsilon).unwrap();

    let mut full = StepperState::initial(x0.clone(), cfg.epsilon);
    let mut x_tilde = Field::zeros(grid.clone());
    let mut x_hat = x0;
    let mut worst = 0.0f64;
    for (i, d) in replay.draws_per_step.into_iter().enumerate() {
        let inc = increment_from_draws(&mesh, &grid, cfg.tau, i + 1, d);
        full = step_full(&full, &inc, &cfg).expect("full scheme");
        x_tilde = step_linear(&x_tilde, &inc, &cfg);
        let (next, _) = step_random(&x_hat, &x_tilde, &cfg).expect("random-PDE scheme");
        x_hat = next;
        let defect = full.x.l2_distance(&(&x_tilde + &x_hat));
        worst = worst.max(defect);
        if (i + 1) % 10 == 0 {
            println!("step {:>3}: defect = {defect:.3e}", i + 1);
        }
    }
    println!("max splitting defect over {} steps: {worst:.3e} (tolerance 1e-8)", cfg.steps);
    assert!(worst <= cfg.split_tol);
}
