//! Monte-Carlo ensemble of trajectories with event-set probabilities.
//!
//! Run with `cargo run --release --example ensemble`.

use sch::config::InitialSection;
use sch::harness::{run_ensemble, TrajectoryOptions};
use sch::SolverConfig;

fn main() {
    let cfg = SolverConfig::new(2, 32, 0.2, 3.0).with_steps(50);
    let initial = InitialSection::TanhCircle { center: vec![0.5, 0.5], radius: 0.25 };
    let options = TrajectoryOptions { track_twin: true, track_split: true, ..Default::default() };

    let (stats, _records) = run_ensemble(&cfg, &initial, 32, 7, None, &options).expect("ensemble");

    println!("{} of {} paths completed", stats.completed, stats.paths);
    for f in &stats.failures {
        println!("  path {} failed: {}", f.path, f.message);
    }
    println!("\nscalar aggregates (mean +/- se):");
    for (name, s) in &stats.scalars {
        println!("  {name:<20} {:.6e} +/- {:.2e}  [{:.3e}, {:.3e}]", s.mean, s.std_error, s.min, s.max);
    }
    println!("\nevent probabilities:");
    for (name, p) in &stats.probabilities {
        println!("  P[{name}] = {p:.3}");
    }

    let out = std::path::Path::new("out/ensemble");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(
        out.join("ensemble.json"),
        serde_json::to_string_pretty(&stats).unwrap(),
    )
    .unwrap();
    println!("\naggregates written to {}", out.join("ensemble.json").display());
}
