//! Finite-difference Hamiltonians on the phase grid and their low-lying
//! eigenpairs.
//!
//! The charging term becomes `c·(-d²/dφ²)` with `c` from
//! [`CircuitParams::kinetic_coefficient`], discretized by the 3-point
//! stencil with Dirichlet walls one spacing outside the grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::PhaseGrid;
use crate::linalg::SymBlockTridiag;
use crate::model::{self, CircuitParams, JunctionMode, ParitySector};

/// Which space the matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// One parity sector, dimension `N`.
    Scalar(ParitySector),
    /// Both parity components interleaved per grid point, dimension `2N`.
    Spinor,
}

/// Assembled, immutable Hamiltonian.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub kind: MatrixKind,
    pub grid: PhaseGrid,
    pub phi_e: f64,
    matrix: SymBlockTridiag,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn storage(&self) -> &SymBlockTridiag {
        &self.matrix
    }

    /// Entry `(i, j)`; spinor indices are `2·site + component`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        let b = self.matrix.block();
        (0..n).all(|i| {
            let hi = (i + b + 1).min(n);
            (i..hi).all(|j| self.get(i, j) == self.get(j, i))
        })
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm_inf()
    }
}

fn kinetic(g: &PhaseGrid, p: &CircuitParams) -> (f64, f64) {
    let h = g.spacing();
    let c = p.kinetic_coefficient();
    (2.0 * c / (h * h), -c / (h * h))
}

fn check_resolution(g: &PhaseGrid, p: &CircuitParams, max_u: f64) -> Result<()> {
    let h2 = g.spacing().powi(2);
    if max_u > 0.0 {
        let limit = 0.1 * p.kinetic_coefficient() / max_u;
        if h2 > limit {
            return Err(Error::GridTooCoarse { h2, limit });
        }
    }
    Ok(())
}

fn check_inputs(p: &CircuitParams, phi_e: f64) -> Result<()> {
    p.validate()?;
    if !phi_e.is_finite() {
        return Err(Error::domain("phi_e must be finite"));
    }
    Ok(())
}

/// Tridiagonal Hamiltonian of one parity sector.
pub fn assemble_scalar(
    g: &PhaseGrid,
    p: &CircuitParams,
    phi_e: f64,
    sector: ParitySector,
) -> Result<HamiltonianMatrix> {
    check_inputs(p, phi_e)?;
    let (k_diag, k_off) = kinetic(g, p);
    let u: Vec<f64> = g.points().map(|phi| model::potential(phi, phi_e, p, sector)).collect();
    let max_u = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check_resolution(g, p, max_u)?;
    let diag = u.iter().map(|v| k_diag + v).collect();
    Ok(HamiltonianMatrix {
        kind: MatrixKind::Scalar(sector),
        grid: *g,
        phi_e,
        matrix: SymBlockTridiag::new(1, diag, vec![k_off; g.n - 1]),
    })
}

/// Two-component Hamiltonian with pointwise parity mixing `ε σ_x`.
pub fn assemble_spinor(g: &PhaseGrid, p: &CircuitParams, phi_e: f64) -> Result<HamiltonianMatrix> {
    check_inputs(p, phi_e)?;
    let (k_diag, k_off) = kinetic(g, p);
    let mut diag = Vec::with_capacity(4 * g.n);
    let mut max_u = 0.0f64;
    for phi in g.points() {
        let s = model::potential_spinor(phi, phi_e, p);
        max_u = max_u.max(s.even.abs()).max(s.odd.abs());
        diag.extend_from_slice(&[k_diag + s.even, s.coupling, s.coupling, k_diag + s.odd]);
    }
    check_resolution(g, p, max_u)?;
    Ok(HamiltonianMatrix {
        kind: MatrixKind::Spinor,
        grid: *g,
        phi_e,
        matrix: SymBlockTridiag::new(2, diag, vec![k_off; g.n - 1]),
    })
}

/// Lowest eigenpairs of an assembled Hamiltonian.
///
/// Eigenvectors are normalized so that `h Σ |ψ_j|² = 1`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub kind: MatrixKind,
    pub grid: PhaseGrid,
    pub eigenvalues: Vec<f64>,
    /// Site-major vectors (spinor: `[e₀, o₀, e₁, o₁, …]`).
    pub eigenvectors: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    fn components(&self) -> usize {
        match self.kind {
            MatrixKind::Scalar(_) => 1,
            MatrixKind::Spinor => 2,
        }
    }

    /// Spatial profile of one parity component of state `i`. For a scalar
    /// spectrum the other sector is identically zero.
    pub fn component(&self, i: usize, sector: ParitySector) -> Vec<f64> {
        let v = &self.eigenvectors[i];
        match self.kind {
            MatrixKind::Scalar(s) if s == sector => v.clone(),
            MatrixKind::Scalar(_) => vec![0.0; v.len()],
            MatrixKind::Spinor => {
                let c = usize::from(sector == ParitySector::Odd);
                v.iter().skip(c).step_by(2).copied().collect()
            }
        }
    }

    /// `⟨ψ_i|ψ_j⟩` with the grid weight.
    pub fn overlap(&self, i: usize, j: usize) -> f64 {
        let h = self.grid.spacing();
        h * crate::linalg::dot(&self.eigenvectors[i], &self.eigenvectors[j])
    }

    /// `⟨σ_z⟩` of state `i`.
    pub fn parity_z(&self, i: usize) -> f64 {
        match self.kind {
            MatrixKind::Scalar(s) => s.sign(),
            MatrixKind::Spinor => {
                let h = self.grid.spacing();
                self.eigenvectors[i]
                    .chunks_exact(2)
                    .map(|c| h * (c[0] * c[0] - c[1] * c[1]))
                    .sum()
            }
        }
    }

    /// `⟨σ_x⟩` of state `i` (zero for scalar spectra).
    pub fn parity_x(&self, i: usize) -> f64 {
        match self.kind {
            MatrixKind::Scalar(_) => 0.0,
            MatrixKind::Spinor => {
                let h = self.grid.spacing();
                self.eigenvectors[i]
                    .chunks_exact(2)
                    .map(|c| 2.0 * h * c[0] * c[1])
                    .sum()
            }
        }
    }

    /// Probability density `Σ_components |ψ|²` per grid point.
    pub fn density(&self, i: usize) -> Vec<f64> {
        self.eigenvectors[i]
            .chunks_exact(self.components())
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect()
    }

    /// `E₁ - E₀`; `None` when fewer than two levels were computed.
    pub fn gap(&self) -> Option<f64> {
        (self.len() >= 2).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }
}

/// `k` lowest eigenpairs, ascending.
pub fn eigensolve(h: &HamiltonianMatrix, k: usize) -> Result<Spectrum> {
    if k == 0 || k > h.dim() {
        return Err(Error::domain(format!(
            "eigensolve needs 1 <= k <= {}, got {k}",
            h.dim()
        )));
    }
    let (eigenvalues, mut eigenvectors) = h.matrix.lowest_eigenpairs(k)?;
    let scale = 1.0 / h.grid.spacing().sqrt();
    for v in &mut eigenvectors {
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(Spectrum {
        kind: h.kind,
        grid: h.grid,
        eigenvalues,
        eigenvectors,
    })
}

/// Lowest two levels of one sector at bias `phi_e`.
pub fn lowest_gap(
    p: &CircuitParams,
    g: &PhaseGrid,
    phi_e: f64,
    sector: ParitySector,
) -> Result<f64> {
    let h = assemble_scalar(g, p, phi_e, sector)?;
    let s = eigensolve(&h, 2)?;
    Ok(s.eigenvalues[1] - s.eigenvalues[0])
}

/// Splitting of the two lowest even-dominated (`⟨σ_z⟩ > 0`) levels of the
/// spinor Hamiltonian, searching up to `max_levels` eigenpairs.
pub fn even_doublet_splitting(
    p: &CircuitParams,
    g: &PhaseGrid,
    phi_e: f64,
    max_levels: usize,
) -> Result<f64> {
    let h = assemble_spinor(g, p, phi_e)?;
    let s = eigensolve(&h, max_levels.min(h.dim()))?;
    let even: Vec<f64> = (0..s.len())
        .filter(|&i| s.parity_z(i) > 0.0)
        .map(|i| s.eigenvalues[i])
        .take(2)
        .collect();
    match even[..] {
        [a, b] => Ok(b - a),
        _ => Err(Error::domain(format!(
            "fewer than two even-dominated levels among the lowest {}",
            s.len()
        ))),
    }
}

/// Tunnel splitting `ΔE` of the even-parity double well at `φ_e = 2π`.
pub fn tunnel_splitting(p: &CircuitParams, g: &PhaseGrid) -> Result<f64> {
    match p.junction_mode {
        JunctionMode::Topological | JunctionMode::Combined => {}
        mode => {
            return Err(Error::domain(format!(
                "tunnel splitting needs a Majorana double well, junction mode is {mode:?}"
            )))
        }
    }
    lowest_gap(p, g, 2.0 * PI, ParitySector::Even)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChargeCounting;

    fn defaults() -> CircuitParams {
        CircuitParams::default()
    }

    #[test]
    fn scalar_entries_follow_stencil() {
        let g = PhaseGrid::default();
        let p = defaults();
        let h = assemble_scalar(&g, &p, 1.0, ParitySector::Odd).unwrap();
        let hs = g.spacing();
        let c = p.kinetic_coefficient();
        for j in [0usize, 7, 4095] {
            let phi = g.point(j);
            let u = model::potential(phi, 1.0, &p, ParitySector::Odd);
            assert!((h.get(j, j) - (2.0 * c / (hs * hs) + u)).abs() < 1e-12);
        }
        assert_eq!(h.get(3, 4), -c / (hs * hs));
        assert_eq!(h.get(3, 5), 0.0);
        assert!(h.is_symmetric());
    }

    #[test]
    fn spinor_entries_and_symmetry() {
        let g = PhaseGrid::custom(-6.0 * PI, 10.0 * PI, 2048).unwrap();
        let p = defaults();
        let h = assemble_spinor(&g, &p, 2.0 * PI).unwrap();
        assert_eq!(h.dim(), 4096);
        assert!(h.is_symmetric());
        assert_eq!(h.get(10, 11), p.epsilon);
        assert_eq!(h.get(10, 12), h.get(11, 13));
        assert_eq!(h.get(10, 13), 0.0);
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = PhaseGrid::custom(-6.0 * PI, 10.0 * PI, 64).unwrap();
        assert!(matches!(
            assemble_scalar(&g, &defaults(), 0.0, ParitySector::Even),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn heavy_particle_trips_guard() {
        let g = PhaseGrid::default();
        let p = CircuitParams { e_c: 1e-9, ..defaults() };
        assert!(assemble_scalar(&g, &p, 0.3, ParitySector::Even).is_err());
    }

    #[test]
    fn harmonic_ladder_cooper_pair_convention() {
        let g = PhaseGrid::default();
        let p = CircuitParams {
            e_m: 0.0,
            charge_counting: ChargeCounting::CooperPairs,
            ..defaults()
        };
        let h = assemble_scalar(&g, &p, 2.0 * PI, ParitySector::Even).unwrap();
        let s = eigensolve(&h, 5).unwrap();
        let w = 2.0 * (3.0f64).sqrt();
        for (k, e) in s.eigenvalues.iter().enumerate() {
            let exact = 0.5 * w * (2 * k + 1) as f64;
            assert!((e - exact).abs() / exact < 1e-3, "level {k}: {e} vs {exact}");
        }
    }

    #[test]
    fn eigenvectors_orthonormal_with_weight() {
        let g = PhaseGrid::custom(-6.0 * PI, 10.0 * PI, 2048).unwrap();
        let h = assemble_scalar(&g, &defaults(), 2.0 * PI, ParitySector::Even).unwrap();
        let s = eigensolve(&h, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s.overlap(i, j) - e).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn splitting_requires_double_well() {
        let g = PhaseGrid::custom(-6.0 * PI, 10.0 * PI, 2048).unwrap();
        let p = CircuitParams { junction_mode: JunctionMode::TrivialTunneling, ..defaults() };
        assert!(tunnel_splitting(&p, &g).is_err());
    }
}
