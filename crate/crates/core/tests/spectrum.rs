use std::f64::consts::PI;

use topo_squid::grid::PhaseGrid;
use topo_squid::model::{ChargeCounting, CircuitParams, JunctionMode, ParitySector};
use topo_squid::spectral::{
    assemble_scalar, assemble_spinor, eigensolve, even_doublet_splitting, lowest_gap, tunnel_splitting,
};

fn defaults() -> CircuitParams {
    CircuitParams::default()
}

fn levels(p: &CircuitParams, g: &PhaseGrid, phi_e: f64, sector: ParitySector, k: usize) -> Vec<f64> {
    let h = assemble_scalar(g, p, phi_e, sector).unwrap();
    eigensolve(&h, k).unwrap().eigenvalues
}

#[test]
fn splitting_lands_near_twenty_five_megahertz() {
    let de = tunnel_splitting(&defaults(), &PhaseGrid::default()).unwrap();
    assert!((0.0125..=0.0375).contains(&de), "ΔE = {de} GHz");
    // Tight check on the converged value.
    assert!((de - 0.025018).abs() < 5e-6, "ΔE = {de} GHz");
    let period = 1.0 / de;
    assert!((27.0..=80.0).contains(&period));
}

#[test]
fn box_levels_follow_hard_wall_formula() {
    let g = PhaseGrid::custom(0.0, 10.0, 1000).unwrap();
    let p = CircuitParams {
        e_m: 0.0,
        e_l: 1e-9,
        charge_counting: ChargeCounting::CooperPairs,
        ..defaults()
    };
    let e = levels(&p, &g, 5.0, ParitySector::Even, 4);
    let w = g.box_width();
    for (k, ek) in e.iter().enumerate() {
        let exact = p.e_c * ((k + 1) as f64 * PI / w).powi(2);
        assert!((ek - exact).abs() / exact < 1e-3, "level {k}: {ek} vs {exact}");
    }
}

#[test]
fn harmonic_ladder_in_both_charge_conventions() {
    let g = PhaseGrid::default();
    for (counting, coefficient) in [(ChargeCounting::CooperPairs, 3.0), (ChargeCounting::Electrons, 12.0)] {
        let p = CircuitParams { e_m: 0.0, charge_counting: counting, ..defaults() };
        let e = levels(&p, &g, 2.0 * PI, ParitySector::Even, 4);
        let spacing = 2.0 * (coefficient * p.e_l).sqrt();
        for (n, en) in e.iter().enumerate() {
            let exact = (n as f64 + 0.5) * spacing;
            assert!((en - exact).abs() / exact < 1e-3, "{counting:?} level {n}: {en} vs {exact}");
        }
        let gap = e[1] - e[0];
        assert!((gap - spacing).abs() / spacing < 1e-3);
    }
    // 2√(E_c E_L) with E_c = 3, E_L = 1.
    let p = CircuitParams { e_m: 0.0, charge_counting: ChargeCounting::CooperPairs, ..defaults() };
    let gap = lowest_gap(&p, &g, 2.0 * PI, ParitySector::Even).unwrap();
    assert!((gap - 2.0 * 3f64.sqrt()).abs() < 1e-3 * 2.0 * 3f64.sqrt());
}

#[test]
fn splitting_grows_with_charging_and_shrinks_with_coupling() {
    let g = PhaseGrid::default();
    let by_ec: Vec<f64> = [2.0, 3.0, 4.0]
        .iter()
        .map(|&e_c| tunnel_splitting(&CircuitParams { e_c, ..defaults() }, &g).unwrap())
        .collect();
    assert!(by_ec.windows(2).all(|w| w[1] > w[0]), "{by_ec:?}");
    let by_em: Vec<f64> = [20.0, 25.0, 30.0]
        .iter()
        .map(|&e_m| tunnel_splitting(&CircuitParams { e_m, ..defaults() }, &g).unwrap())
        .collect();
    assert!(by_em.windows(2).all(|w| w[1] < w[0]), "{by_em:?}");
}

#[test]
fn grid_doubling_and_window_changes_are_small() {
    let p = defaults();
    let g = PhaseGrid::default();
    let base = levels(&p, &g, 2.0 * PI, ParitySector::Even, 4);
    let fine = levels(&p, &g.refined(2), 2.0 * PI, ParitySector::Even, 4);
    for (a, b) in base.iter().zip(&fine) {
        assert!((a - b).abs() / a.abs() < 1e-3, "{a} vs {b}");
    }
    let wide = levels(&p, &g.widened(2.0 * PI), 2.0 * PI, ParitySector::Even, 4);
    for (a, b) in base.iter().zip(&wide) {
        assert!((a - b).abs() / a.abs() < 1e-9, "{a} vs {b}");
    }
    let de_base = base[1] - base[0];
    let de_fine = fine[1] - fine[0];
    assert!((de_base - de_fine).abs() / de_base < 1e-2);
}

#[test]
fn doublet_wavefunctions_have_definite_mirror_parity() {
    let g = PhaseGrid::default();
    let h = assemble_scalar(&g, &defaults(), 2.0 * PI, ParitySector::Even).unwrap();
    let s = eigensolve(&h, 2).unwrap();
    let n = g.n;
    // The window is symmetric about 2π, so φ_j and φ_{n-1-j} are mirror images.
    assert!((g.point(0) + g.point(n - 1) - 4.0 * PI).abs() < 1e-12);
    let (psi0, psi1) = (&s.eigenvectors[0], &s.eigenvectors[1]);
    let peak = psi0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for j in 0..n {
        assert!((psi0[j] - psi0[n - 1 - j]).abs() < 1e-6 * peak);
        assert!((psi1[j] + psi1[n - 1 - j]).abs() < 1e-6 * peak);
    }
}

#[test]
fn spinor_without_coupling_is_union_of_sectors() {
    let g = PhaseGrid::default();
    let p = CircuitParams { epsilon: 0.0, ..defaults() };
    let k = 6;
    let mut union = levels(&p, &g, 2.0 * PI, ParitySector::Even, k);
    union.extend(levels(&p, &g, 2.0 * PI, ParitySector::Odd, k));
    union.sort_by(f64::total_cmp);
    let spinor = eigensolve(&assemble_spinor(&g, &p, 2.0 * PI).unwrap(), k).unwrap();
    for (a, b) in spinor.eigenvalues.iter().zip(&union) {
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
    }
    for i in 0..k {
        assert!(spinor.parity_z(i).abs() > 1.0 - 1e-9);
    }
}

#[test]
fn weak_hybridization_keeps_levels_parity_polarized() {
    let g = PhaseGrid::default();
    let p = defaults();
    let s = eigensolve(&assemble_spinor(&g, &p, 2.0 * PI).unwrap(), 6).unwrap();
    for i in 0..s.len() {
        assert!(s.parity_z(i).abs() > 0.999, "level {i}: <σz> = {}", s.parity_z(i));
    }
    let scalar = tunnel_splitting(&p, &g).unwrap();
    let doublet = even_doublet_splitting(&p, &g, 2.0 * PI, 16).unwrap();
    assert!((doublet - scalar).abs() / scalar < 1e-2, "{doublet} vs {scalar}");
}

#[test]
fn stiff_loop_pins_phase_at_bias() {
    let g = PhaseGrid::custom(-2.0, 6.0, 2000).unwrap();
    let p = CircuitParams { e_l: 1e3, e_m: 25.0, ..defaults() };
    for phi_e in [0.5, 2.0, 3.5] {
        let h = assemble_scalar(&g, &p, phi_e, ParitySector::Even).unwrap();
        let s = eigensolve(&h, 1).unwrap();
        let d = s.density(0);
        let hh = g.spacing();
        let mean: f64 = g.points().zip(&d).map(|(x, w)| hh * x * w).sum();
        // The junction tilt shifts the minimum by at most E_m/(4 E_L) rad.
        assert!((mean - phi_e).abs() < 25.0 / 4e3 + 1e-3, "φ_e = {phi_e}: ⟨φ⟩ = {mean}");
    }
}

#[test]
fn combined_junction_barely_moves_the_splitting() {
    let g = PhaseGrid::default();
    let topo = tunnel_splitting(&defaults(), &g).unwrap();
    let combined = tunnel_splitting(&CircuitParams { junction_mode: JunctionMode::Combined, ..defaults() }, &g).unwrap();
    assert!((combined - topo).abs() / topo < 0.1, "{combined} vs {topo}");
}
