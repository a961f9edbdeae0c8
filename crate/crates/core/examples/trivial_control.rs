//! Same experiment with a conventional junction: the 2π-periodic coupling
//! leaves a single well at the hold bias and the flux always reads φ₀.

use std::f64::consts::PI;

use topo_squid::model::{CircuitParams, JunctionMode};
use topo_squid::protocol::{run_scan, InitMode, ProtocolConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for mode in [
        JunctionMode::Topological,
        JunctionMode::Combined,
        JunctionMode::TrivialTunneling,
        JunctionMode::TrivialFull,
    ] {
        let cfg = ProtocolConfig {
            circuit: CircuitParams { junction_mode: mode, ..CircuitParams::default() },
            init_mode: InitMode::IdealLeft,
            poisoning_rate: 0.0,
            ..Default::default()
        };
        let r = run_scan(&cfg)?;
        let flux = r.points.iter().map(|p| p.measured_phase).sum::<f64>() / (2.0 * PI * r.points.len() as f64);
        println!(
            "{mode:?}: visibility {:.3}, mean flux {:.3} φ₀, readout levels {:?}",
            r.fit.visibility, flux, r.readout_labels
        );
    }
    Ok(())
}
