//! Shot-by-shot quasiparticle poisoning: fitted visibility of the flux
//! oscillation against the parity lifetime.

use topo_squid::protocol::{run_scan, InitMode, ProtocolConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>10} {:>10} {:>12} {:>10}", "τ (ns)", "f (MHz)", "visibility", "poisoned");
    for tau in [f64::INFINITY, 1e5, 1e4, 1e3, 200.0, 40.0] {
        let cfg = ProtocolConfig {
            init_mode: InitMode::IdealLeft,
            poisoning_rate: 1.0 / tau,
            shots_per_point: 2000,
            ..Default::default()
        };
        let r = run_scan(&cfg)?;
        let poisoned = r.shots.iter().filter(|s| s.flips > 0).count() as f64 / r.shots.len() as f64;
        println!(
            "{tau:>10.0} {:>10.3} {:>12.4} {:>9.1}%",
            r.fit.frequency * 1e3,
            r.fit.visibility,
            100.0 * poisoned
        );
    }
    Ok(())
}
