//! Temporal order of the deterministic scheme: halved time steps against a
//! fine-τ self reference, least-squares order of the H⁻¹ error at T.
//!
//! Run with `cargo run --release --example convergence_order`.

use sch::config::InitialSection;
use sch::harness::convergence_study_tau;
use sch::SolverConfig;

fn main() {
    let cfg = SolverConfig::new(2, 64, 0.1, 3.0).with_steps(16);
    let initial = InitialSection::TanhCircle { center: vec![0.5, 0.5], radius: 0.25 };
    let report = convergence_study_tau(&cfg, &initial, 4, 1).expect("study");

    println!("{:>12} {:>14}", "tau", "|err|_(H^-1)");
    for (t, e) in report.taus.iter().zip(&report.errors) {
        println!("{t:>12.3e} {e:>14.6e}");
    }
    println!("reference tau = {:.3e}", report.reference_tau);
    println!(
        "fitted order = {:.3} +/- {:.3} (implicit Euler: 1)",
        report.order, report.order_std_error
    );

    let out = std::path::Path::new("out/convergence");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(out.join("convergence.json"), serde_json::to_string_pretty(&report).unwrap())
        .unwrap();
}
