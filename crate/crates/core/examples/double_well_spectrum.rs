//! Lowest levels of the even-parity double well at the degeneracy bias and
//! how the tunnel splitting converges with the grid.

use std::f64::consts::PI;

use topo_squid::grid::PhaseGrid;
use topo_squid::model::{CircuitParams, ParitySector};
use topo_squid::spectral::{assemble_scalar, eigensolve, tunnel_splitting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = CircuitParams::default();
    let g = PhaseGrid::default();
    let h = assemble_scalar(&g, &p, 2.0 * PI, ParitySector::Even)?;
    let spec = eigensolve(&h, 6)?;
    for (i, e) in spec.eigenvalues.iter().enumerate() {
        println!("E{i} = {e:.9} GHz");
    }
    let de = spec.eigenvalues[1] - spec.eigenvalues[0];
    println!("ΔE = {:.4} MHz, oscillation period {:.2} ns", de * 1e3, 1.0 / de);

    for n in [2048, 4096, 8192, 16384] {
        let g = PhaseGrid::new(-6.0 * PI, 10.0 * PI, n)?;
        println!("N = {n:>5}: ΔE = {:.6} MHz", tunnel_splitting(&p, &g)? * 1e3);
    }
    Ok(())
}
