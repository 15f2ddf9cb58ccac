//! Eigenpairs of assembled Hermitian operators and samples from the range of
//! spectral projectors.
//!
//! Small systems use a dense Hermitian decomposition. Larger ones run a block
//! Krylov iteration with full reorthogonalization on `(H - sigma)^{-1}`, where
//! `sigma` lies below the Gershgorin bound and the inverse is applied through a
//! banded Cholesky factor of the reordered matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{CsrMatrix, DiscreteOperator};
use crate::error::{Result, UcError};
use crate::geometry::BoundaryCondition;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Residual tolerance relative to the Gershgorin scale of `H`.
    pub tol: f64,
    /// Largest `N` handled by the dense path.
    pub dense_limit: usize,
    pub block: usize,
    pub max_basis: usize,
    /// Seed of the starting block.
    pub seed: u64,
    /// Hermiticity defect (relative) above which the input is refused.
    pub hermitian_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            dense_limit: 400,
            block: 4,
            max_basis: 400,
            seed: 0x5eed,
            hermitian_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectralRequest {
    /// The `k` lowest eigenpairs.
    Lowest(usize),
    /// All eigenpairs with eigenvalue in `[lo, hi]`.
    Window(f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit Euclidean norm.
    pub eigenvectors: Vec<Vec<Complex64>>,
    pub window: Option<(f64, f64)>,
    /// `max ||H v - lambda v||`.
    pub residual_bound: f64,
    /// Scale the tolerance is relative to.
    pub scale: f64,
    pub method: String,
}

impl SpectrumSlice {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `max |<v_i, v_j> - delta_ij|`.
    pub fn gram_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate().skip(i) {
                let g = dot(a, b);
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - want).norm());
            }
        }
        worst
    }

    /// Keep only pairs with eigenvalue in `[lo, hi]`.
    pub fn restrict(mut self, lo: f64, hi: f64) -> Self {
        let keep: Vec<bool> = self.eigenvalues.iter().map(|&e| e >= lo && e <= hi).collect();
        let mut k = keep.iter();
        self.eigenvectors.retain(|_| *k.next().unwrap());
        self.eigenvalues.retain(|&e| e >= lo && e <= hi);
        self.window = Some((lo, hi));
        self
    }
}

/// `sum conj(a_i) b_i`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Scalars the band factorization runs over.
trait BandScalar: Copy + Default + std::ops::Sub<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Div<Output = Self> {
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn from_re(x: f64) -> Self;
}

impl BandScalar for f64 {
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn from_re(x: f64) -> Self {
        x
    }
}

impl BandScalar for Complex64 {
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// Lower band Cholesky factor, `A = L L^H`; row `i` stores columns `i-bw..=i`.
struct BandCholesky<S> {
    n: usize,
    bw: usize,
    l: Vec<S>,
}

impl<S: BandScalar> BandCholesky<S> {
    fn factor(n: usize, bw: usize, mut band: Vec<S>) -> Result<Self> {
        let w = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = band[i * w + (j + bw - i)];
                let (ri, rj) = (i * w + bw - i, j * w + bw - j);
                for k in k0..j {
                    s = s - band[ri + k] * band[rj + k].conj();
                }
                if j == i {
                    let p = s.re();
                    if !(p > 0.0) {
                        return Err(UcError::NotPositiveDefinite { row: i, pivot: p });
                    }
                    band[i * w + bw] = S::from_re(p.sqrt());
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l: band })
    }
}

impl BandCholesky<f64> {
    fn solve_real(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + k + self.bw - i] * x[k];
            }
            x[i] = s / self.l[i * w + self.bw];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.l[i * w + self.bw];
            let xi = x[i];
            for k in i.saturating_sub(self.bw)..i {
                x[k] -= self.l[i * w + k + self.bw - i] * xi;
            }
        }
    }
}

impl BandCholesky<Complex64> {
    fn solve_complex(&self, x: &mut [Complex64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + k + self.bw - i] * x[k];
            }
            x[i] = s / self.l[i * w + self.bw];
        }
        for i in (0..self.n).rev() {
            x[i] /= self.l[i * w + self.bw];
            let xi = x[i];
            for k in i.saturating_sub(self.bw)..i {
                x[k] -= self.l[i * w + k + self.bw - i].conj() * xi;
            }
        }
    }
}

enum Factor {
    Real(BandCholesky<f64>),
    Complex(BandCholesky<Complex64>),
}

/// Position of each cell in the banded ordering: natural along Dirichlet
/// axes, `0, n-1, 1, n-2, ...` along periodic axes so wrap-around neighbours
/// stay within two positions.
pub fn band_ordering(n: usize, d: usize, bc: BoundaryCondition) -> Vec<usize> {
    let pos: Vec<usize> = match bc {
        BoundaryCondition::Dirichlet => (0..n).collect(),
        BoundaryCondition::Periodic => {
            let mut p = vec![0; n];
            for (k, m) in (0..n).map(|k| if k % 2 == 0 { k / 2 } else { n - 1 - k / 2 }).enumerate() {
                p[m] = k;
            }
            p
        }
    };
    let total = n.pow(d as u32);
    (0..total)
        .map(|idx| {
            let mut rest = idx;
            let mut out = 0;
            let mut stride = 1;
            for _ in 0..d {
                out += pos[rest % n] * stride;
                rest /= n;
                stride *= n;
            }
            out
        })
        .collect()
}

/// Shift-inverted operator `(H - sigma)^{-1}` in a band ordering.
pub struct ShiftInvert {
    pub sigma: f64,
    pub bandwidth: usize,
    perm: Vec<usize>,
    factor: Factor,
}

impl ShiftInvert {
    pub fn new(m: &CsrMatrix, perm: Vec<usize>, sigma: f64) -> Result<Self> {
        let n = m.n;
        let mut bw = 0;
        let mut real = true;
        for i in 0..n {
            for (j, v) in m.row(i) {
                bw = bw.max(perm[i].abs_diff(perm[j]));
                real &= v.im == 0.0;
            }
        }
        let w = bw + 1;
        let factor = if real {
            let mut band = vec![0.0; n * w];
            for i in 0..n {
                for (j, v) in m.row(i) {
                    let (pi, pj) = (perm[i], perm[j]);
                    if pj <= pi {
                        band[pi * w + pj + bw - pi] += v.re - if i == j { sigma } else { 0.0 };
                    }
                }
            }
            Factor::Real(BandCholesky::factor(n, bw, band)?)
        } else {
            let mut band = vec![ZERO; n * w];
            for i in 0..n {
                for (j, v) in m.row(i) {
                    let (pi, pj) = (perm[i], perm[j]);
                    if pj <= pi {
                        band[pi * w + pj + bw - pi] += v - if i == j { sigma } else { 0.0 };
                    }
                }
            }
            Factor::Complex(BandCholesky::factor(n, bw, band)?)
        };
        Ok(Self {
            sigma,
            bandwidth: bw,
            perm,
            factor,
        })
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        match &self.factor {
            Factor::Real(f) => {
                let mut re = vec![0.0; n];
                let mut im = vec![0.0; n];
                for (i, z) in x.iter().enumerate() {
                    re[self.perm[i]] = z.re;
                    im[self.perm[i]] = z.im;
                }
                f.solve_real(&mut re);
                f.solve_real(&mut im);
                (0..n).map(|i| Complex64::new(re[self.perm[i]], im[self.perm[i]])).collect()
            }
            Factor::Complex(f) => {
                let mut y = vec![ZERO; n];
                for (i, z) in x.iter().enumerate() {
                    y[self.perm[i]] = *z;
                }
                f.solve_complex(&mut y);
                (0..n).map(|i| y[self.perm[i]]).collect()
            }
        }
    }
}

fn check_hermitian(op: &DiscreteOperator, opts: &SolverOptions) -> Result<()> {
    if !(op.hermitian_defect <= opts.hermitian_tol) {
        return Err(UcError::NonHermitian(op.hermitian_defect));
    }
    Ok(())
}

fn residual(m: &CsrMatrix, lambda: f64, v: &[Complex64]) -> f64 {
    let hv = m.mul(v);
    hv.iter().zip(v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum::<f64>().sqrt()
}

fn dense_all(m: &CsrMatrix) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let n = m.n;
    let mut dm = DMatrix::from_row_slice(n, n, &m.to_dense());
    // exact Hermitian symmetrization of rounding-level asymmetry
    let herm = (&dm + dm.adjoint()) * Complex64::new(0.5, 0.0);
    dm = herm;
    let eig = dm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Orthogonalize `w` against `basis` twice (classical Gram-Schmidt); returns the remaining norm.
fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
    norm2(w)
}

/// Lowest `k` eigenpairs by block Krylov on the shift-inverted operator.
fn krylov_lowest(op: &DiscreteOperator, k: usize, opts: &SolverOptions) -> Result<(Vec<f64>, Vec<Vec<Complex64>>, usize)> {
    let m = &op.matrix;
    let n = m.n;
    let (lo, _) = m.gershgorin();
    let sigma = lo - 1.0;
    let perm = band_ordering(op.domain.n, op.domain.d, op.bc);
    let si = ShiftInvert::new(m, perm, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p = opts.block.max(1);
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut images: Vec<Vec<Complex64>> = Vec::new();
    let mut block: Vec<Vec<Complex64>> = Vec::new();
    for _ in 0..p {
        let mut v: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
        let nv = orthogonalize(&mut v, &block);
        v.iter_mut().for_each(|z| *z /= nv);
        block.push(v);
    }
    let scale = {
        let (a, b) = m.gershgorin();
        a.abs().max(b.abs()).max(1.0)
    };
    let max_basis = opts.max_basis.min(n);
    loop {
        let fresh = block.len();
        for q in block.drain(..) {
            images.push(si.apply(&q));
            basis.push(q);
        }
        let dim = basis.len();
        // Rayleigh-Ritz on span(basis)
        let mut proj = DMatrix::from_element(dim, dim, ZERO);
        for i in 0..dim {
            for j in i..dim {
                let v = dot(&basis[i], &images[j]);
                proj[(i, j)] = v;
                proj[(j, i)] = v.conj();
            }
        }
        for i in 0..dim {
            proj[(i, i)] = Complex64::new(proj[(i, i)].re, 0.0);
        }
        let eig = proj.symmetric_eigen();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let want = k.min(dim);
        let mut vals = Vec::with_capacity(want);
        let mut vecs = Vec::with_capacity(want);
        let mut worst = 0.0f64;
        for &c in order.iter().take(want) {
            let theta = eig.eigenvalues[c];
            let y = eig.eigenvectors.column(c);
            let mut v = vec![ZERO; n];
            for (i, q) in basis.iter().enumerate() {
                axpy(y[i], q, &mut v);
            }
            let nv = norm2(&v);
            v.iter_mut().for_each(|z| *z /= nv);
            let lambda = sigma + 1.0 / theta;
            worst = worst.max(residual(m, lambda, &v));
            vals.push(lambda);
            vecs.push(v);
        }
        if want == k && worst <= opts.tol * scale {
            return Ok((vals, vecs, dim));
        }
        if dim >= max_basis {
            return Err(UcError::NoConvergence(format!(
                "basis {dim}: residual {worst:e} > {:e}",
                opts.tol * scale
            )));
        }
        // next block from the newest images
        for img in &images[dim - fresh..] {
            let mut w = img.clone();
            orthogonalize(&mut w, &basis);
            let nw = orthogonalize(&mut w, &block);
            if nw > 1e-10 * norm2(img) && basis.len() + block.len() < max_basis {
                w.iter_mut().for_each(|z| *z /= nw);
                block.push(w);
            }
        }
        if block.is_empty() {
            // invariant subspace: continue from a fresh random direction
            let mut v: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
            let nv = orthogonalize(&mut v, &basis);
            if nv < 1e-10 {
                return Err(UcError::NoConvergence("Krylov space exhausted".into()));
            }
            v.iter_mut().for_each(|z| *z /= nv);
            block.push(v);
        }
    }
}

/// Eigenpairs of a Hermitian operator.
pub fn eigensolve(op: &DiscreteOperator, request: SpectralRequest, opts: &SolverOptions) -> Result<SpectrumSlice> {
    check_hermitian(op, opts)?;
    let m = &op.matrix;
    let n = m.n;
    let scale = {
        let (a, b) = m.gershgorin();
        a.abs().max(b.abs()).max(1.0)
    };
    let (vals, vecs, method) = if n <= opts.dense_limit {
        let (v, e) = dense_all(m);
        (v, e, "dense".to_string())
    } else {
        match request {
            SpectralRequest::Lowest(k) => {
                let (v, e, dim) = krylov_lowest(op, k, opts)?;
                (v, e, format!("shift-invert block Krylov, basis {dim}"))
            }
            SpectralRequest::Window(_, hi) => {
                let mut k = 2 * opts.block.max(1);
                loop {
                    let (v, e, dim) = krylov_lowest(op, k.min(n), opts)?;
                    // the window is covered once a computed eigenvalue lies above it
                    if v.last().is_some_and(|&x| x > hi) || k >= n {
                        break (v, e, format!("shift-invert block Krylov, basis {dim}"));
                    }
                    k *= 2;
                }
            }
        }
    };
    let mut slice = SpectrumSlice {
        residual_bound: 0.0,
        eigenvalues: vals,
        eigenvectors: vecs,
        window: None,
        scale,
        method,
    };
    slice = match request {
        SpectralRequest::Lowest(k) => {
            slice.eigenvalues.truncate(k);
            slice.eigenvectors.truncate(k);
            slice
        }
        SpectralRequest::Window(lo, hi) => slice.restrict(lo, hi),
    };
    slice.residual_bound = slice
        .eigenvalues
        .iter()
        .zip(&slice.eigenvectors)
        .map(|(&l, v)| residual(m, l, v))
        .fold(0.0, f64::max);
    Ok(slice)
}

/// How the coefficients of a projector sample are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleCoefficients {
    Given(Vec<Complex64>),
    /// Independent complex Gaussians-like draws, uniform on `[-1, 1]^2`.
    Seeded(u64),
}

/// `psi = sum c_i v_i`, normalized to unit Euclidean norm.
pub fn projector_sample(slice: &SpectrumSlice, coefficients: &SampleCoefficients) -> Result<Vec<Complex64>> {
    if slice.is_empty() {
        return Err(UcError::EmptySlice);
    }
    let c: Vec<Complex64> = match coefficients {
        SampleCoefficients::Given(c) => {
            if c.len() != slice.len() {
                return Err(UcError::ShapeMismatch {
                    expected: slice.len(),
                    found: c.len(),
                });
            }
            c.clone()
        }
        SampleCoefficients::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..slice.len())
                .map(|_| Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
                .collect()
        }
    };
    let n = slice.eigenvectors[0].len();
    let mut psi = vec![ZERO; n];
    for (ci, v) in c.iter().zip(&slice.eigenvectors) {
        axpy(*ci, v, &mut psi);
    }
    let nrm = norm2(&psi);
    if nrm == 0.0 {
        return Err(UcError::ZeroNorm);
    }
    psi.iter_mut().for_each(|z| *z /= nrm);
    Ok(psi)
}

/// `(H - E) psi`.
pub fn energy_residual(op: &DiscreteOperator, energy: f64, psi: &[Complex64]) -> Vec<Complex64> {
    op.apply(psi).iter().zip(psi).map(|(a, p)| a - p * energy).collect()
}
