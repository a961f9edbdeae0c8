//! Wells of the flux-biased loop before and after the bias quench, and the
//! parity anticrossing set by the Majorana overlap.

use std::f64::consts::PI;

use topo_squid::analysis::{anticrossing_gap, parity_transfer_amplitude, parity_transfer_rabi, scan_wells};
use topo_squid::grid::PhaseGrid;
use topo_squid::model::{CircuitParams, ParitySector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = CircuitParams::default();
    let g = PhaseGrid::default();
    for (label, phi_e) in [("reset", 0.0), ("hold", 2.0 * PI)] {
        for sector in [ParitySector::Even, ParitySector::Odd] {
            let w = scan_wells(&p, phi_e, sector, &g);
            let minima: Vec<String> = w.minima.iter().map(|m| format!("{:.4}", m.phi)).collect();
            println!("{label:>5} φ_e = {phi_e:.4}, {sector:?}: minima at [{}]", minima.join(", "));
            if let (Some(sep), Some(height)) = (w.separation, w.barrier_height) {
                println!("        separation {:.4}π, barrier {height:.3} GHz", sep / PI);
            }
        }
    }

    println!("anticrossing gap at φ = π: {:.3} GHz (2ε)", anticrossing_gap(&p, 0));
    for phi in [PI / 4.0, PI / 2.0, 0.9 * PI] {
        println!(
            "parity transfer at φ = {:.3}: {:.3e} (amplitude estimate), {:.3e} (two-level)",
            phi,
            parity_transfer_amplitude(phi, &p)?,
            parity_transfer_rabi(phi, &p)?
        );
    }
    Ok(())
}
