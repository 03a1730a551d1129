//! Moments of the discrete white-noise increments against the closed-form
//! hat-covariance oracle, with the fitted mesh-size exponent.
//!
//! Run with `cargo run --release --example noise_moments`.

use sch::harness::noise_moment_study;

fn main() {
    let h_values = [0.25, 0.125, 0.0625];
    let report = noise_moment_study(2, 64, &h_values, 1e-4, 4000, 12345).expect("study");

    println!("{:>8} {:>14} {:>14} {:>10}  {:>14} {:>14}", "h", "E|m(dW)|^2", "oracle", "dev/se", "E|dW_bar|^2", "oracle");
    for e in &report.entries {
        let m = e.report.mean_sq;
        let c = e.report.corrected_norm_sq;
        println!(
            "{:>8.4} {:>14.6e} {:>14.6e} {:>10.2} {:>14.6e} {:>14.6e}",
            e.report.h,
            m.value,
            e.oracle_mean_sq,
            (m.value - e.oracle_mean_sq).abs() / m.std_error,
            c.value,
            e.oracle_corrected_norm_sq,
        );
    }
    let fit = report.h_exponent.expect("at least two mesh sizes");
    println!(
        "\nfitted exponent of E|dW_bar|^2 vs h: {:.3} +/- {:.3} (the bound h^-d tau gives -2)",
        fit.slope, fit.slope_std_error
    );

    let out = std::path::Path::new("out/noise_moments");
    std::fs::create_dir_all(out).unwrap();
    std::fs::write(out.join("noise_stats.json"), serde_json::to_string_pretty(&report).unwrap())
        .unwrap();
    println!("report written to {}", out.join("noise_stats.json").display());
}
