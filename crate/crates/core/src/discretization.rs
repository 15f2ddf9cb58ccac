//! Finite-difference assembly of `Op u = -div(A grad u) + b . grad u + c u (+ V u)`
//! on cell-centered cube grids, and the periodic / reflection extensions to
//! the `3^d` block around the cube.
//!
//! Values outside the cube are read through [`CubeDomain::fold`]. Under
//! Dirichlet conditions every quantity carries a parity per reflection axis
//! `p`: `psi` is odd; `a_pp`, `a_ij` (`i, j != p`) even; `a_pj` odd; `b_p` odd,
//! `b_i` (`i != p`) even; `c`, `V`, `zeta` even. The boundary rows of the
//! assembled matrix are exactly the stencil applied to the reflected data.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UcError};
use crate::fields::{check_boundary_conditions, sym_eigenvalues, CoefficientField};
use crate::geometry::{BoundaryCondition, CubeDomain};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Compressed sparse row matrix with complex entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from per-row entry lists; duplicates are summed, explicit zeros kept.
    pub fn from_rows(n: usize, rows: impl IntoIterator<Item = Vec<(usize, Complex64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = col.len();
            for (c, v) in row {
                if col.len() > start && *col.last().unwrap() == c {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        assert_eq!(row_ptr.len(), n + 1, "row count");
        Self { n, row_ptr, col, val }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col[r.clone()].binary_search(&j) {
            Ok(k) => self.val[r.start + k],
            Err(_) => ZERO,
        }
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `max |m_ij - conj(m_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.val.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Gershgorin bounds on the real parts of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..self.n {
            let mut radius = 0.0;
            let mut diag = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    diag = v.re;
                } else {
                    radius += v.norm();
                }
            }
            lo = lo.min(diag - radius);
            hi = hi.max(diag + radius);
        }
        (lo, hi)
    }

    /// Dense copy, row-major.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut m = vec![ZERO; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[i * self.n + j] = v;
            }
        }
        m
    }

    /// Coordinate listing `row,col,re,im`.
    pub fn to_coo_csv(&self) -> String {
        let mut s = String::from("row,col,re,im\n");
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i},{j},{:e},{:e}", v.re, v.im);
            }
        }
        s
    }
}

/// Which reflection parity the first-order coefficients get under Dirichlet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BParity {
    /// `b_p` odd across faces normal to `p`, the other components even.
    Consistent,
    /// The swapped table: `b_p` even, the other components odd. Breaks
    /// Hermiticity at the boundary; kept for comparison only.
    Swapped,
}

/// Unbounded multi-index to `(flat index, mask of axes reflected an odd number of times)`.
pub fn locate(domain: &CubeDomain, m: &[i64]) -> (usize, u32) {
    let mut idx = 0;
    let mut flips = 0u32;
    for (k, &mk) in m.iter().enumerate() {
        let (f, odd) = domain.fold(mk);
        idx = idx * domain.n + f;
        if odd {
            flips |= 1 << k;
        }
    }
    (idx, flips)
}

pub fn psi_parity(flips: u32) -> f64 {
    if flips.count_ones() % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Sign of `a_ij` after the reflections in `flips`.
pub fn a_parity(i: usize, j: usize, flips: u32) -> f64 {
    let mut s = 1.0;
    let mut f = flips;
    while f != 0 {
        let p = f.trailing_zeros() as usize;
        if (i == p) != (j == p) {
            s = -s;
        }
        f &= f - 1;
    }
    s
}

pub fn b_parity(i: usize, flips: u32, rule: BParity) -> f64 {
    let own = flips & (1 << i) != 0;
    let others = (flips & !(1 << i)).count_ones() % 2 == 1;
    let odd = match rule {
        BParity::Consistent => own,
        BParity::Swapped => others,
    };
    if odd {
        -1.0
    } else {
        1.0
    }
}

/// One row of the stencil, entries `(column, weight)` before merging.
fn row_stencil(
    field: &CoefficientField,
    domain: &CubeDomain,
    m: &[usize],
    with_potential: bool,
    rule: BParity,
    out: &mut Vec<(usize, Complex64)>,
) {
    out.clear();
    let d = domain.d;
    let h = domain.h;
    let h2 = h * h;
    let idx = domain.flat_index(m);
    let base: Vec<i64> = m.iter().map(|&v| v as i64).collect();
    let mut v = base.clone();
    let a_here = field.a_at(idx);
    let mut diag = field.c[idx];
    if with_potential {
        diag += field.v[idx];
    }
    let mut div_b = ZERO;
    for i in 0..d {
        for s in [1i64, -1] {
            v.copy_from_slice(&base);
            v[i] += s;
            let (nb, fl) = locate(domain, &v);
            let u_sign = psi_parity(fl);
            // -d_i(a_ii d_i u): face average
            let a_face = 0.5 * (a_here[i * d + i] + field.a_at(nb)[i * d + i]);
            diag += a_face / h2;
            out.push((nb, Complex64::new(-a_face / h2 * u_sign, 0.0)));
            // skew-split first-order term
            let b_nb = field.b[nb * d + i] * b_parity(i, fl, rule);
            let w = (field.b[idx * d + i] + b_nb) * (s as f64 / (4.0 * h));
            out.push((nb, w * u_sign));
            div_b += b_nb * (s as f64 / (2.0 * h));
        }
        // cross terms -d_i(a_ij d_j u), centered on both sides
        for j in 0..d {
            if j == i {
                continue;
            }
            for si in [1i64, -1] {
                v.copy_from_slice(&base);
                v[i] += si;
                let (ci, cf) = locate(domain, &v);
                let a_ij = field.a_at(ci)[i * d + j] * a_parity(i, j, cf);
                if a_ij == 0.0 {
                    continue;
                }
                for sj in [1i64, -1] {
                    v[j] = base[j] + sj;
                    let (nb, fl) = locate(domain, &v);
                    let w = -(si * sj) as f64 * a_ij / (4.0 * h2);
                    out.push((nb, Complex64::new(w * psi_parity(fl), 0.0)));
                }
                v[j] = base[j];
            }
        }
    }
    diag -= 0.5 * div_b;
    out.push((idx, diag));
}

/// Assembled operator on one cube.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub matrix: CsrMatrix,
    pub domain: CubeDomain,
    pub bc: BoundaryCondition,
    pub includes_potential: bool,
    /// `max |H_ij - conj(H_ji)|` relative to `max |H_ij|`.
    pub hermitian_defect: f64,
}

impl DiscreteOperator {
    pub fn len(&self) -> usize {
        self.matrix.n
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.n == 0
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        self.matrix.mul(psi)
    }

    /// Tolerance used to call the matrix Hermitian.
    pub fn hermitian_tolerance(&self) -> f64 {
        1e-12
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect <= self.hermitian_tolerance()
    }
}

fn check_field(field: &CoefficientField, domain: &CubeDomain) -> Result<()> {
    field.check_domain(domain)?;
    let d = domain.d;
    let mut worst = 0.0f64;
    for idx in 0..field.len() {
        let a = field.a_at(idx);
        for i in 0..d {
            for j in 0..i {
                worst = worst.max((a[i * d + j] - a[j * d + i]).abs());
            }
        }
    }
    if worst > 1e-12 {
        return Err(UcError::NonSymmetric(worst));
    }
    Ok(())
}

/// `H = Op + V` on `domain` with its boundary condition.
pub fn assemble(field: &CoefficientField, domain: &CubeDomain) -> Result<DiscreteOperator> {
    assemble_with(field, domain, true, BParity::Consistent)
}

pub fn assemble_with(
    field: &CoefficientField,
    domain: &CubeDomain,
    with_potential: bool,
    rule: BParity,
) -> Result<DiscreteOperator> {
    check_field(field, domain)?;
    let mut m = vec![0usize; domain.d];
    let mut buf = Vec::new();
    let rows = (0..domain.len()).map(|idx| {
        domain.multi_index(idx, &mut m);
        row_stencil(field, domain, &m, with_potential, rule, &mut buf);
        buf.clone()
    });
    let matrix = CsrMatrix::from_rows(domain.len(), rows);
    let scale = matrix.max_abs().max(f64::MIN_POSITIVE);
    let defect = matrix.hermitian_defect() / scale;
    Ok(DiscreteOperator {
        matrix,
        domain: domain.clone(),
        bc: domain.bc,
        includes_potential: with_potential,
        hermitian_defect: defect,
    })
}

/// Matrix-free `Op psi` (with or without `V`) at the cells in `cells`.
pub fn apply_operator_at(
    field: &CoefficientField,
    domain: &CubeDomain,
    psi: &[Complex64],
    with_potential: bool,
    cells: &[usize],
) -> Result<Vec<Complex64>> {
    check_field(field, domain)?;
    if psi.len() != domain.len() {
        return Err(UcError::ShapeMismatch {
            expected: domain.len(),
            found: psi.len(),
        });
    }
    let mut m = vec![0usize; domain.d];
    let mut buf = Vec::new();
    Ok(cells
        .iter()
        .map(|&idx| {
            domain.multi_index(idx, &mut m);
            row_stencil(field, domain, &m, with_potential, BParity::Consistent, &mut buf);
            buf.iter().map(|&(c, w)| w * psi[c]).sum()
        })
        .collect())
}

pub fn apply_operator(
    field: &CoefficientField,
    domain: &CubeDomain,
    psi: &[Complex64],
    with_potential: bool,
) -> Result<Vec<Complex64>> {
    let all: Vec<usize> = (0..domain.len()).collect();
    apply_operator_at(field, domain, psi, with_potential, &all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `max (|Op psi| - |V psi| - |zeta|)` over the checked cells.
    pub worst_violation: f64,
    pub worst_cell: usize,
    pub cells: usize,
}

/// Cellwise `|Op psi| <= |V psi| + |zeta|`, with `Op` excluding the field's own
/// potential (it belongs in `v` if wanted).
pub fn residual_inequality_check(
    psi: &[Complex64],
    field: &CoefficientField,
    v: &[f64],
    zeta: &[Complex64],
    domain: &CubeDomain,
) -> Result<ResidualReport> {
    let cells: Vec<usize> = (0..domain.len()).collect();
    residual_inequality_at(psi, field, v, zeta, domain, &cells)
}

pub fn residual_inequality_at(
    psi: &[Complex64],
    field: &CoefficientField,
    v: &[f64],
    zeta: &[Complex64],
    domain: &CubeDomain,
    cells: &[usize],
) -> Result<ResidualReport> {
    for len in [v.len(), zeta.len()] {
        if len != domain.len() {
            return Err(UcError::ShapeMismatch {
                expected: domain.len(),
                found: len,
            });
        }
    }
    let op = apply_operator_at(field, domain, psi, false, cells)?;
    let mut rep = ResidualReport {
        worst_violation: f64::NEG_INFINITY,
        worst_cell: 0,
        cells: cells.len(),
    };
    for (&idx, o) in cells.iter().zip(&op) {
        let viol = o.norm() - (v[idx] * psi[idx]).norm() - zeta[idx].norm();
        if viol > rep.worst_violation {
            rep.worst_violation = viol;
            rep.worst_cell = idx;
        }
    }
    Ok(rep)
}

/// Objects carried to the `3^d` block `(-3L/2, 3L/2)^d`.
#[derive(Clone, Debug)]
pub struct Extended {
    /// The block, same `h`, same boundary tag as the source.
    pub domain: CubeDomain,
    pub psi: Vec<Complex64>,
    pub field: CoefficientField,
    pub v: Vec<f64>,
    pub zeta: Vec<Complex64>,
    /// Largest `|psi(inside) - psi(outside)|` across faces of the central cube.
    pub interface_jump: f64,
    /// Largest centered-difference gradient of `psi` inside the central cube.
    pub gradient_estimate: f64,
}

impl Extended {
    /// Flat index in the block of a cell of the central cube.
    pub fn central_index(&self, m: &[usize], n: usize) -> usize {
        m.iter().fold(0, |acc, &mk| acc * self.domain.n + mk + n)
    }

    /// Block cells whose full stencil stays inside the block.
    pub fn interior_cells(&self) -> Vec<usize> {
        let d = self.domain.d;
        let nb = self.domain.n;
        let mut m = vec![0usize; d];
        (0..self.domain.len())
            .filter(|&idx| {
                self.domain.multi_index(idx, &mut m);
                m.iter().all(|&mk| mk >= 1 && mk + 1 < nb)
            })
            .collect()
    }
}

fn trace_jump_and_gradient(psi: &[Complex64], domain: &CubeDomain) -> (f64, f64) {
    let d = domain.d;
    let mut m = vec![0usize; d];
    let mut v = vec![0i64; d];
    let (mut jump, mut grad) = (0.0f64, 0.0f64);
    for idx in 0..domain.len() {
        domain.multi_index(idx, &mut m);
        for k in 0..d {
            for s in [1i64, -1] {
                for (t, &mt) in v.iter_mut().zip(&m) {
                    *t = mt as i64;
                }
                v[k] += s;
                let (nb, fl) = locate(domain, &v);
                let other = psi[nb] * psi_parity(fl);
                let outside = v[k] < 0 || v[k] >= domain.n as i64;
                if outside {
                    jump = jump.max((psi[idx] - other).norm());
                }
            }
            if m[k] >= 1 && m[k] + 1 < domain.n {
                let s = domain.stride(k);
                grad = grad.max((psi[idx + s] - psi[idx - s]).norm() / (2.0 * domain.h));
            }
        }
    }
    (jump, grad)
}

fn extend(
    psi: &[Complex64],
    field: &CoefficientField,
    v: &[f64],
    zeta: &[Complex64],
    domain: &CubeDomain,
) -> Result<Extended> {
    check_field(field, domain)?;
    for len in [psi.len(), v.len(), zeta.len()] {
        if len != domain.len() {
            return Err(UcError::ShapeMismatch {
                expected: domain.len(),
                found: len,
            });
        }
    }
    let d = domain.d;
    let n = domain.n as i64;
    let big = CubeDomain::new(d, 3.0 * domain.l, domain.h, domain.bc)?;
    let len = big.len();
    let mut out_psi = vec![ZERO; len];
    let mut out_v = vec![0.0; len];
    let mut out_zeta = vec![ZERO; len];
    let mut a = vec![0.0; len * d * d];
    let mut b = vec![ZERO; len * d];
    let mut c = vec![ZERO; len];
    let mut pot = vec![0.0; len];
    let mut mb = vec![0usize; d];
    let mut virt = vec![0i64; d];
    for idx in 0..len {
        big.multi_index(idx, &mut mb);
        for (t, &mk) in virt.iter_mut().zip(&mb) {
            *t = mk as i64 - n;
        }
        let (src, fl) = locate(domain, &virt);
        out_psi[idx] = psi[src] * psi_parity(fl);
        out_v[idx] = v[src];
        out_zeta[idx] = zeta[src];
        c[idx] = field.c[src];
        pot[idx] = field.v[src];
        let sa = field.a_at(src);
        for i in 0..d {
            b[idx * d + i] = field.b[src * d + i] * b_parity(i, fl, BParity::Consistent);
            for j in 0..d {
                a[(idx * d + i) * d + j] = sa[i * d + j] * a_parity(i, j, fl);
            }
        }
    }
    let mut ef = field.clone();
    ef.l = big.l;
    ef.n = big.n;
    ef.a = a;
    ef.b = b;
    ef.c = c;
    ef.v = pot;
    ef.refresh_norms();
    let (interface_jump, gradient_estimate) = trace_jump_and_gradient(psi, domain);
    Ok(Extended {
        domain: big,
        psi: out_psi,
        field: ef,
        v: out_v,
        zeta: out_zeta,
        interface_jump,
        gradient_estimate,
    })
}

/// Periodic continuation of `psi`, the coefficients, `V` and `zeta`.
pub fn extend_periodic(
    psi: &[Complex64],
    field: &CoefficientField,
    v: &[f64],
    zeta: &[Complex64],
    domain: &CubeDomain,
) -> Result<Extended> {
    if domain.bc != BoundaryCondition::Periodic {
        return Err(invalid("bc", "periodic extension needs a periodic domain"));
    }
    let rep = check_boundary_conditions(field);
    if !rep.periodic_ok {
        return Err(UcError::BoundaryCondition(format!(
            "(Per) violated by {:e} > {:e}",
            rep.periodic_violation, rep.tolerance
        )));
    }
    extend(psi, field, v, zeta, domain)
}

/// Reflection across the faces of the cube with the parity table above,
/// composed across axes for edge and corner blocks.
pub fn extend_dirichlet_reflection(
    psi: &[Complex64],
    field: &CoefficientField,
    v: &[f64],
    zeta: &[Complex64],
    domain: &CubeDomain,
) -> Result<Extended> {
    if domain.bc != BoundaryCondition::Dirichlet {
        return Err(invalid("bc", "reflection needs a Dirichlet domain"));
    }
    let rep = check_boundary_conditions(field);
    if !rep.dirichlet_ok {
        return Err(UcError::BoundaryCondition(format!(
            "(Dir) violated by {:e} > {:e}",
            rep.dirichlet_violation, rep.tolerance
        )));
    }
    let ext = extend(psi, field, v, zeta, domain)?;
    let scale = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = 10.0 * domain.h * ext.gradient_estimate + 1e-12 * scale;
    if ext.interface_jump > tol {
        return Err(UcError::BoundaryCondition(format!(
            "psi trace {:e} exceeds {:e}",
            ext.interface_jump, tol
        )));
    }
    Ok(ext)
}

/// Largest difference between the sorted eigenvalues of `A` at each block
/// cell and at the cell it was copied from.
pub fn extension_spectrum_defect(ext: &Extended, field: &CoefficientField, domain: &CubeDomain) -> f64 {
    let d = domain.d;
    let n = domain.n as i64;
    let mut mb = vec![0usize; d];
    let mut virt = vec![0i64; d];
    let mut worst = 0.0f64;
    for idx in 0..ext.domain.len() {
        ext.domain.multi_index(idx, &mut mb);
        for (t, &mk) in virt.iter_mut().zip(&mb) {
            *t = mk as i64 - n;
        }
        let (src, _) = locate(domain, &virt);
        let mut e1 = sym_eigenvalues(ext.field.a_at(idx), d);
        let mut e2 = sym_eigenvalues(field.a_at(src), d);
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (x, y) in e1.iter().zip(&e2) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{synthesize_analytic, AnalyticField, FieldTargets};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn dom(d: usize, l: f64, h: f64, bc: BoundaryCondition) -> CubeDomain {
        CubeDomain::new(d, l, h, bc).unwrap()
    }

    fn laplacian(d: usize, l: f64, h: f64, bc: BoundaryCondition) -> (CubeDomain, CoefficientField) {
        let domain = dom(d, l, h, bc);
        let f = CoefficientField::sample(&AnalyticField::identity(d), &domain).unwrap();
        (domain, f)
    }

    fn targets(t1: f64, t2: f64, nb: f64, nc: f64) -> FieldTargets {
        FieldTargets {
            theta1: t1,
            theta2: t2,
            norm_b: nb,
            norm_c: nc,
            norm_v: 0.0,
        }
    }

    fn dense_eigs(op: &DiscreteOperator) -> Vec<f64> {
        let n = op.len();
        let m = nalgebra::DMatrix::from_row_slice(n, n, &op.matrix.to_dense());
        let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn laplacian_1d_closed_forms() {
        let h = 1.0 / 16.0;
        for (bc, div) in [(BoundaryCondition::Dirichlet, 2.0), (BoundaryCondition::Periodic, 1.0)] {
            let (domain, f) = laplacian(1, 3.0, h, bc);
            let op = assemble(&f, &domain).unwrap();
            assert_eq!(op.hermitian_defect, 0.0);
            let e = dense_eigs(&op);
            let mut want: Vec<f64> = match bc {
                BoundaryCondition::Dirichlet => (1..=domain.n).collect::<Vec<_>>(),
                BoundaryCondition::Periodic => (0..domain.n).collect(),
            }
            .into_iter()
            .map(|k| 4.0 / (h * h) * (PI * k as f64 * h / (div * 3.0)).sin().powi(2))
            .collect();
            want.sort_by(f64::total_cmp);
            for (a, b) in e.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "{bc}: {a} vs {b}");
            }
        }
        let (domain, f) = laplacian(1, 1.0, 0.25, BoundaryCondition::Dirichlet);
        let op = assemble(&f, &domain).unwrap();
        assert_eq!(op.matrix.get(0, 0).re, 48.0);
        assert_eq!(op.matrix.get(0, 1).re, -16.0);
        assert_eq!(op.matrix.get(1, 1).re, 32.0);
    }

    #[test]
    fn dirichlet_sine_is_exact_eigenvector() {
        let (domain, f) = laplacian(1, 3.0, 1.0 / 32.0, BoundaryCondition::Dirichlet);
        let op = assemble(&f, &domain).unwrap();
        let psi: Vec<Complex64> = (0..domain.n)
            .map(|m| Complex64::new((PI * (domain.coord(m) + 1.5) / 3.0).sin(), 0.0))
            .collect();
        let lam = 4.0 * 1024.0 * (PI / (32.0 * 6.0)).sin().powi(2);
        for (hp, p) in op.apply(&psi).iter().zip(&psi) {
            assert!((hp - p * lam).norm() < 1e-10);
        }
    }

    #[test]
    fn separable_spectrum() {
        let domain = dom(2, 1.0, 0.125, BoundaryCondition::Dirichlet);
        let af = AnalyticField::constant(vec![2.0, 0.0, 0.0, 0.5], 2).unwrap();
        let f = CoefficientField::sample(&af, &domain).unwrap();
        let e = dense_eigs(&assemble(&f, &domain).unwrap());
        let one: Vec<f64> = (1..=8).map(|k| 4.0 / 0.015625 * (PI * k as f64 * 0.125 / 2.0).sin().powi(2)).collect();
        let mut want: Vec<f64> = one.iter().flat_map(|x| one.iter().map(move |y| 2.0 * x + 0.5 * y)).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn constant_shift_and_stencil_shape() {
        let (domain, mut f) = laplacian(2, 1.0, 0.25, BoundaryCondition::Periodic);
        let base = assemble(&f, &domain).unwrap();
        f.v = vec![0.75; domain.len()];
        let shifted = assemble(&f, &domain).unwrap();
        for i in 0..domain.len() {
            assert_eq!(shifted.matrix.get(i, i).re - base.matrix.get(i, i).re, 0.75);
        }
        assert_eq!(base.matrix.nnz(), 5 * domain.len());
        let af = synthesize_analytic(3, 2, 3.0, &targets(1.3, 0.05, 0.0, 0.0), BoundaryCondition::Periodic).unwrap();
        let domain = dom(2, 3.0, 0.25, BoundaryCondition::Periodic);
        let f = CoefficientField::sample(&af, &domain).unwrap();
        assert_eq!(assemble(&f, &domain).unwrap().matrix.nnz(), 9 * domain.len());
    }

    #[test]
    fn rejects_bad_input() {
        let (domain, mut f) = laplacian(2, 1.0, 0.25, BoundaryCondition::Dirichlet);
        let other = dom(2, 1.0, 0.125, BoundaryCondition::Dirichlet);
        assert!(matches!(assemble(&f, &other), Err(UcError::ShapeMismatch { .. })));
        f.a[1] = 0.3;
        assert!(matches!(assemble(&f, &domain), Err(UcError::NonSymmetric(_))));
    }

    #[test]
    fn self_adjoint_fields_assemble_hermitian() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Periodic] {
            for d in 1..=2 {
                for seed in 0..4 {
                    let af = synthesize_analytic(seed, d, 3.0, &targets(1.4, 0.05, 0.8, 1.5), bc).unwrap();
                    let domain = dom(d, 3.0, 0.25, bc);
                    let f = CoefficientField::sample(&af, &domain).unwrap();
                    let op = assemble(&f, &domain).unwrap();
                    assert!(op.hermitian_defect < 1e-14, "{bc} d={d}: {}", op.hermitian_defect);
                }
            }
        }
    }

    #[test]
    fn swapped_b_parity_is_not_hermitian() {
        let af = synthesize_analytic(1, 2, 3.0, &targets(1.2, 0.0, 0.8, 1.5), BoundaryCondition::Dirichlet).unwrap();
        let domain = dom(2, 3.0, 0.25, BoundaryCondition::Dirichlet);
        let f = CoefficientField::sample(&af, &domain).unwrap();
        let good = assemble_with(&f, &domain, true, BParity::Consistent).unwrap();
        let bad = assemble_with(&f, &domain, true, BParity::Swapped).unwrap();
        assert!(good.hermitian_defect < 1e-14);
        assert!(bad.hermitian_defect > 1e-3, "{}", bad.hermitian_defect);
        // the damage sits on the boundary diagonal: -i b_tilde / (2h)
        let first = bad.matrix.get(0, 0) - good.matrix.get(0, 0);
        assert!(first.im.abs() > 1e-3 && first.re.abs() < 1e-12);
    }

    #[test]
    fn matrix_free_matches_assembly() {
        let af = synthesize_analytic(9, 2, 3.0, &targets(1.3, 0.05, 0.5, 1.0), BoundaryCondition::Dirichlet).unwrap();
        let domain = dom(2, 3.0, 0.25, BoundaryCondition::Dirichlet);
        let f = CoefficientField::sample(&af, &domain).unwrap();
        let op = assemble(&f, &domain).unwrap();
        let psi: Vec<Complex64> = (0..domain.len()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let a = op.apply(&psi);
        let b = apply_operator(&f, &domain, &psi, true).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
        assert!(op.matrix.to_coo_csv().starts_with("row,col,re,im\n0,0,"));
    }

    #[test]
    fn residual_examples() {
        let (domain, f) = laplacian(1, 3.0, 1.0 / 32.0, BoundaryCondition::Dirichlet);
        let psi: Vec<Complex64> = (0..domain.n)
            .map(|m| Complex64::new((PI * (domain.coord(m) + 1.5) / 3.0).sin(), 0.0))
            .collect();
        let lam = 4.0 * 1024.0 * (PI / 192.0).sin().powi(2);
        let zero = vec![ZERO; domain.len()];
        let r = residual_inequality_check(&psi, &f, &vec![lam; domain.len()], &zero, &domain).unwrap();
        assert!(r.worst_violation < 1e-10);
        // zeta = (H - E) psi with V = E
        let e = 5.0;
        let hp = apply_operator(&f, &domain, &psi, false).unwrap();
        let zeta: Vec<Complex64> = hp.iter().zip(&psi).map(|(a, p)| a - p * e).collect();
        let r = residual_inequality_check(&psi, &f, &vec![e; domain.len()], &zeta, &domain).unwrap();
        assert!(r.worst_violation <= 1e-12);
        let big: Vec<Complex64> = hp.iter().map(|a| Complex64::new(a.norm() + 1.0, 0.0)).collect();
        let r = residual_inequality_check(&psi, &f, &vec![0.0; domain.len()], &big, &domain).unwrap();
        assert!(r.worst_violation <= -1.0 + 1e-12);
    }

    #[test]
    fn dirichlet_reflection_of_sine_is_global_sine() {
        let (domain, f) = laplacian(1, 3.0, 1.0 / 32.0, BoundaryCondition::Dirichlet);
        let s = |x: f64| (PI * (x + 1.5) / 3.0).sin();
        let psi: Vec<Complex64> = (0..domain.n).map(|m| Complex64::new(s(domain.coord(m)), 0.0)).collect();
        let zero = vec![ZERO; domain.len()];
        let ext = extend_dirichlet_reflection(&psi, &f, &vec![0.0; domain.len()], &zero, &domain).unwrap();
        for (m, p) in ext.psi.iter().enumerate() {
            assert!((p.re - s(ext.domain.coord(m))).abs() < 1e-12);
        }
        assert!(ext.interface_jump <= 10.0 * domain.h * ext.gradient_estimate);
        // a nonzero trace is rejected
        let bump: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); domain.len()];
        assert!(extend_dirichlet_reflection(&bump, &f, &vec![0.0; domain.len()], &zero, &domain).is_err());
    }

    #[test]
    fn periodic_extension_is_periodic_and_commutes() {
        let af = synthesize_analytic(4, 2, 3.0, &targets(1.3, 0.05, 0.4, 1.0), BoundaryCondition::Periodic).unwrap();
        let domain = dom(2, 3.0, 0.25, BoundaryCondition::Periodic);
        let f = CoefficientField::sample(&af, &domain).unwrap();
        let psi: Vec<Complex64> = (0..domain.len()).map(|i| Complex64::new((i as f64 * 0.7).sin(), 0.1)).collect();
        let zeta = vec![ZERO; domain.len()];
        let ext = extend_periodic(&psi, &f, &vec![0.0; domain.len()], &zeta, &domain).unwrap();
        let n = domain.n;
        let nb = ext.domain.n;
        for idx in 0..ext.domain.len() {
            let (i, j) = (idx / nb, idx % nb);
            if i + n < nb {
                assert_eq!(ext.psi[idx], ext.psi[idx + n * nb]);
            }
            if j + n < nb {
                assert_eq!(ext.psi[idx], ext.psi[idx + n]);
            }
        }
        let op = apply_operator(&f, &domain, &psi, true).unwrap();
        let cells: Vec<usize> = (0..domain.len()).map(|k| ext.central_index(&[k / n, k % n], n)).collect();
        let op_ext = apply_operator_at(&ext.field, &ext.domain, &ext.psi, true, &cells).unwrap();
        for (a, b) in op.iter().zip(&op_ext) {
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
        assert_eq!(extension_spectrum_defect(&ext, &f, &domain), 0.0);
    }

    #[test]
    fn reflection_preserves_residual_and_spectrum() {
        let af = synthesize_analytic(2, 2, 3.0, &targets(1.3, 0.04, 0.5, 1.0), BoundaryCondition::Dirichlet).unwrap();
        let domain = dom(2, 3.0, 0.125, BoundaryCondition::Dirichlet);
        let f = CoefficientField::sample(&af, &domain).unwrap();
        let op = assemble(&f, &domain).unwrap();
        // a smooth function with zero trace, not an eigenfunction: zeta absorbs Op psi
        let psi: Vec<Complex64> = (0..domain.len())
            .map(|i| {
                let x = domain.center(i);
                Complex64::new(((x[0] + 1.5) * PI / 3.0).sin() * (2.0 * (x[1] + 1.5) * PI / 3.0).sin(), 0.0)
            })
            .collect();
        let v = vec![0.5; domain.len()];
        let hp = apply_operator(&f, &domain, &psi, false).unwrap();
        let zeta: Vec<Complex64> = hp.iter().zip(&psi).map(|(a, p)| a - p * 0.5).collect();
        let ext = extend_dirichlet_reflection(&psi, &f, &v, &zeta, &domain).unwrap();
        let cells = ext.interior_cells();
        let r = residual_inequality_at(&ext.psi, &ext.field, &ext.v, &ext.zeta, &ext.domain, &cells).unwrap();
        assert!(r.worst_violation <= 1e-10, "{}", r.worst_violation);
        assert!(extension_spectrum_defect(&ext, &f, &domain) < 1e-14);
        for idx in 0..ext.domain.len() {
            let a = ext.field.a_at(idx);
            assert_eq!(a[1], a[2]);
        }
        assert!(op.is_hermitian());
    }

    #[test]
    fn corner_signs_compose_in_any_order() {
        for flips in 0..8u32 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 1.0;
                    for p in [2usize, 0, 1] {
                        if flips & (1 << p) != 0 {
                            s *= a_parity(i, j, 1 << p);
                        }
                    }
                    assert_eq!(s, a_parity(i, j, flips));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn periodic_fold_matches_wrap(m in -100i64..100, n in 1usize..9) {
            let domain = dom(1, n as f64, 1.0, BoundaryCondition::Periodic);
            let (idx, fl) = locate(&domain, &[m]);
            prop_assert_eq!(idx as i64, m.rem_euclid(n as i64));
            prop_assert_eq!(fl, 0);
        }

        #[test]
        fn hermitian_for_random_self_adjoint_fields(seed in 0u64..1000, d in 1usize..3, dir in any::<bool>()) {
            let bc = if dir { BoundaryCondition::Dirichlet } else { BoundaryCondition::Periodic };
            let af = synthesize_analytic(seed, d, 3.0, &targets(1.3, 0.03, 0.6, 1.5), bc).unwrap();
            let domain = dom(d, 3.0, 0.25, bc);
            let f = CoefficientField::sample(&af, &domain).unwrap();
            prop_assert!(assemble(&f, &domain).unwrap().hermitian_defect < 1e-14);
        }
    }
}
