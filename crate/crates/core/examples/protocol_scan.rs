//! The full experiment with default settings: reset at zero bias, quench to
//! 2π, hold, read the flux. Prints the scan and the fitted oscillation.

use topo_squid::protocol::{run_scan, ProtocolConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ProtocolConfig::default();
    let r = run_scan(&cfg)?;
    println!("{:>6} {:>8} {:>8} {:>10}", "Δt", "P(2φ₀)", "stderr", "flux/φ₀");
    for p in &r.points {
        println!(
            "{:>6.1} {:>8.4} {:>8.4} {:>10.4}",
            p.hold_time,
            p.p2phi0,
            p.stderr,
            p.measured_phase / (2.0 * std::f64::consts::PI)
        );
    }
    println!(
        "fit: f = {:.4} MHz (spectral {:.4} MHz), visibility {:.3}, residual {:.3}",
        r.fit.frequency * 1e3,
        r.delta_e_spectral * 1e3,
        r.fit.visibility,
        r.fit.residual
    );
    for w in &r.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
