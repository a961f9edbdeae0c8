//! Symmetric block-tridiagonal matrices and a lowest-eigenpair solver.
//!
//! Blocks are 1×1 (scalar Schrödinger operator) or 2×2 (two parity
//! components per grid site). Off-diagonal blocks are multiples of the
//! identity, which is what a 3-point Laplacian acting on each component
//! produces. Eigenvalues come from bisection on the inertia of a block
//! LDLᵀ factorization, eigenvectors from inverse iteration with a pivoted
//! banded LU.

use crate::error::{Error, Result};

/// Symmetric block-tridiagonal matrix with identity-proportional couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBlockTridiag {
    block: usize,
    /// Row-major `block × block` diagonal blocks, one per site.
    diag: Vec<f64>,
    /// Coupling between site `j` and `j + 1`, times the identity.
    off: Vec<f64>,
}

impl SymBlockTridiag {
    /// Panics if the block size is not 1 or 2, the lengths disagree, or a
    /// diagonal block is not symmetric.
    pub fn new(block: usize, diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(block == 1 || block == 2, "block size must be 1 or 2");
        assert_eq!(diag.len() % (block * block), 0);
        let sites = diag.len() / (block * block);
        assert!(sites >= 1);
        assert_eq!(off.len(), sites - 1);
        if block == 2 {
            for s in 0..sites {
                assert_eq!(diag[4 * s + 1], diag[4 * s + 2], "diagonal block {s} not symmetric");
            }
        }
        Self { block, diag, off }
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn sites(&self) -> usize {
        self.off.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.sites() * self.block
    }

    pub fn diag_block(&self, site: usize) -> &[f64] {
        let b2 = self.block * self.block;
        &self.diag[site * b2..(site + 1) * b2]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.off
    }

    /// Entry `(i, j)` in the site-major ordering `index = site * block + component`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let b = self.block;
        let (si, ci) = (i / b, i % b);
        let (sj, cj) = (j / b, j % b);
        if si == sj {
            self.diag[si * b * b + ci * b + cj]
        } else if si.abs_diff(sj) == 1 && ci == cj {
            self.off[si.min(sj)]
        } else {
            0.0
        }
    }

    /// `y = A x` for real vectors.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let b = self.block;
        let n = self.sites();
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        for s in 0..n {
            let d = self.diag_block(s);
            for c in 0..b {
                let mut acc = 0.0;
                for k in 0..b {
                    acc += d[c * b + k] * x[s * b + k];
                }
                if s > 0 {
                    acc += self.off[s - 1] * x[(s - 1) * b + c];
                }
                if s + 1 < n {
                    acc += self.off[s] * x[(s + 1) * b + c];
                }
                y[s * b + c] = acc;
            }
        }
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let b = self.block;
        let n = self.sites();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..n {
            let d = self.diag_block(s);
            let nb = if s > 0 { self.off[s - 1].abs() } else { 0.0 }
                + if s + 1 < n { self.off[s].abs() } else { 0.0 };
            for c in 0..b {
                let mut radius = nb;
                for k in 0..b {
                    if k != c {
                        radius += d[c * b + k].abs();
                    }
                }
                lo = lo.min(d[c * b + c] - radius);
                hi = hi.max(d[c * b + c] + radius);
            }
        }
        (lo, hi)
    }

    /// Infinity norm, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    fn pivmin(&self) -> f64 {
        let max_off = self.off.iter().fold(1.0f64, |m, v| m.max(v * v));
        1e-280 * max_off
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester inertia of
    /// the block LDLᵀ factorization of `A - σI`).
    pub fn count_below(&self, sigma: f64) -> usize {
        let pivmin = self.pivmin();
        match self.block {
            1 => {
                let mut count = 0;
                let mut q = 1.0;
                for s in 0..self.sites() {
                    let mut v = self.diag[s] - sigma;
                    if s > 0 {
                        v -= self.off[s - 1] * self.off[s - 1] / q;
                    }
                    if v.abs() < pivmin {
                        v = -pivmin;
                    }
                    if v < 0.0 {
                        count += 1;
                    }
                    q = v;
                }
                count
            }
            _ => {
                let mut count = 0;
                // Inverse of the previous pivot block, symmetric [a c; c d].
                let (mut ia, mut ic, mut id) = (0.0, 0.0, 0.0);
                for s in 0..self.sites() {
                    let d = self.diag_block(s);
                    let (mut a, mut c, mut dd) = (d[0] - sigma, d[1], d[3] - sigma);
                    if s > 0 {
                        let t = self.off[s - 1] * self.off[s - 1];
                        a -= t * ia;
                        c -= t * ic;
                        dd -= t * id;
                    }
                    let mut det = a * dd - c * c;
                    if det.abs() < pivmin * (1.0 + a.abs() + dd.abs()) {
                        a -= pivmin;
                        dd -= pivmin;
                        det = a * dd - c * c;
                        if det == 0.0 {
                            det = -pivmin;
                        }
                    }
                    count += if det < 0.0 {
                        1
                    } else if a + dd < 0.0 {
                        2
                    } else {
                        0
                    };
                    ia = dd / det;
                    ic = -c / det;
                    id = a / det;
                }
                count
            }
        }
    }

    /// Dense banded copy with half-bandwidth `block`.
    fn banded(&self, shift: f64) -> Band {
        let n = self.dim();
        let p = self.block;
        let mut band = Band::zeros(n, p);
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let hi = (i + p).min(n - 1);
            for j in lo..=hi {
                let mut v = self.get(i, j);
                if i == j {
                    v -= shift;
                }
                band.set(i, j, v);
            }
        }
        band
    }

    /// Lowest `k` eigenvalues, ascending, by bisection.
    pub fn lowest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let n = self.dim();
        assert!(k >= 1 && k <= n, "requested {k} eigenvalues of a {n}-dimensional matrix");
        let (g_lo, g_hi) = self.gershgorin();
        let spread = (g_hi - g_lo).abs().max(1.0);
        let g_lo = g_lo - 1e-12 * spread - self.pivmin();
        let g_hi = g_hi + 1e-12 * spread + self.pivmin();
        // lower[j]: largest σ with count(σ) <= j; upper[j]: smallest σ with count(σ) >= j+1.
        let mut lower = vec![g_lo; k];
        let mut upper = vec![g_hi; k];
        let record = |sigma: f64, c: usize, lower: &mut [f64], upper: &mut [f64]| {
            for u in upper.iter_mut().take(c) {
                if sigma < *u {
                    *u = sigma;
                }
            }
            for l in lower.iter_mut().skip(c) {
                if sigma > *l {
                    *l = sigma;
                }
            }
        };
        let mut values = Vec::with_capacity(k);
        for i in 0..k {
            let (mut lo, mut hi) = (lower[i], upper[i]);
            for _ in 0..256 {
                let tol = 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + 4.0 * self.pivmin();
                if hi - lo <= tol {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let c = self.count_below(mid);
                record(mid, c, &mut lower, &mut upper);
                if c > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            values.push(0.5 * (lo + hi));
        }
        values
    }

    /// Lowest `k` eigenpairs. Eigenvectors have unit Euclidean norm and a
    /// positive largest-magnitude entry.
    pub fn lowest_eigenpairs(&self, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let values = self.lowest_eigenvalues(k);
        let norm = self.norm_inf().max(f64::MIN_POSITIVE);
        let tolerance = 1e-6 * norm;
        let cluster = 1e-3 * norm;
        let n = self.dim();
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut work = vec![0.0; n];
        for (i, &lambda) in values.iter().enumerate() {
            let lu = self.banded(lambda).factor(f64::EPSILON * norm);
            let mut x = start_vector(n, i);
            let mut residual = f64::INFINITY;
            for iter in 0..8 {
                lu.solve(&mut x);
                for (j, v) in vectors.iter().enumerate() {
                    if (values[j] - lambda).abs() <= cluster {
                        let proj = dot(v, &x);
                        axpy(-proj, v, &mut x);
                    }
                }
                let nrm = dot(&x, &x).sqrt();
                if !(nrm > 0.0) || !nrm.is_finite() {
                    x = start_vector(n, i + 7919 * (iter + 1));
                    continue;
                }
                x.iter_mut().for_each(|v| *v /= nrm);
                self.matvec(&x, &mut work);
                residual = work
                    .iter()
                    .zip(&x)
                    .map(|(hx, xv)| (hx - lambda * xv).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if iter >= 1 && residual <= 1e-3 * tolerance {
                    break;
                }
            }
            if !(residual <= tolerance) {
                return Err(Error::Convergence { residual, tolerance });
            }
            fix_sign(&mut x);
            vectors.push(x);
        }
        Ok((values, vectors))
    }
}

fn start_vector(n: usize, seed: usize) -> Vec<f64> {
    // Deterministic xorshift sequence in [-1, 1].
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (seed as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

fn fix_sign(x: &mut [f64]) {
    let mut best = 0usize;
    for (j, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() * (1.0 + 1e-9) {
            best = j;
        }
    }
    if x[best] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yv, xv)| *yv += alpha * xv);
}

/// General banded matrix with `p` sub-diagonals and room for `2p`
/// super-diagonals of fill from partial pivoting.
struct Band {
    n: usize,
    p: usize,
    width: usize,
    data: Vec<f64>,
}

impl Band {
    fn zeros(n: usize, p: usize) -> Self {
        let width = 3 * p + 1;
        Self {
            n,
            p,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.p >= i && j <= i + 2 * self.p);
        i * self.width + (j + self.p - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// In-place LU with partial pivoting; tiny pivots are replaced by `floor`.
    fn factor(mut self, floor: f64) -> BandLu {
        let (n, p) = (self.n, self.p);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + p).min(n - 1);
            let mut r = k;
            for i in k + 1..=last_row {
                if self.at(i, k).abs() > self.at(r, k).abs() {
                    r = i;
                }
            }
            piv[k] = r;
            let last_col = (k + 2 * p).min(n - 1);
            if r != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(r, j);
                    self.data.swap(a, b);
                }
            }
            let mut pivot = self.at(k, k);
            if pivot.abs() < floor {
                pivot = if pivot < 0.0 { -floor } else { floor };
                self.set(k, k, pivot);
            }
            for i in k + 1..=last_row {
                let l = self.at(i, k) / pivot;
                self.set(i, k, l);
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let v = self.at(i, j) - l * self.at(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        BandLu { band: self, piv }
    }
}

struct BandLu {
    band: Band,
    piv: Vec<usize>,
}

impl BandLu {
    fn solve(&self, b: &mut [f64]) {
        let (n, p) = (self.band.n, self.band.p);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + p).min(n - 1) {
                    b[i] -= self.band.at(i, k) * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + 2 * p).min(n - 1) {
                acc -= self.band.at(i, j) * b[j];
            }
            b[i] = acc / self.band.at(i, i);
        }
    }
}
