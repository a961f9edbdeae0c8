//! Both parity sectors coupled by the Majorana overlap ε: level parities and
//! the even doublet splitting as ε grows.

use std::f64::consts::PI;

use topo_squid::grid::PhaseGrid;
use topo_squid::model::CircuitParams;
use topo_squid::spectral::{assemble_spinor, eigensolve, even_doublet_splitting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = PhaseGrid::default();
    let p = CircuitParams::default();
    let spec = eigensolve(&assemble_spinor(&g, &p, 2.0 * PI)?, 6)?;
    for i in 0..spec.len() {
        println!("E{i} = {:.6} GHz, <σz> = {:+.6}", spec.eigenvalues[i], spec.parity_z(i));
    }

    println!("\n{:>10} {:>14}", "ε (GHz)", "doublet (MHz)");
    for epsilon in [1e-4, 1e-3, 1e-2, 0.1, 0.3, 1.0] {
        let p = CircuitParams { epsilon, ..p };
        let split = even_doublet_splitting(&p, &g, 2.0 * PI, 16)?;
        println!("{epsilon:>10.1e} {:>14.4}", split * 1e3);
    }
    Ok(())
}
