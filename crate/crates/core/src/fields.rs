//! Coefficient fields `(A, b, c, V)`: analytic trigonometric models, their
//! grid samples, and validation of ellipticity, Lipschitz continuity,
//! self-adjointness and boundary conditions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UcError};
use crate::geometry::{BoundaryCondition, CubeDomain};

/// Scalar profile of a single coefficient mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Const,
    /// `cos(k x_axis + phase)`.
    Wave { axis: usize, k: f64, phase: f64 },
    /// `prod_i cos(k x_i)`; vanishes on every face when `k = pi/L`.
    CosProduct { k: f64 },
}

impl Profile {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Profile::Const => 1.0,
            Profile::Wave { axis, k, phase } => (k * x[axis] + phase).cos(),
            Profile::CosProduct { k } => x.iter().map(|&xi| (k * xi).cos()).product(),
        }
    }

    pub fn partial(&self, x: &[f64], j: usize) -> f64 {
        match *self {
            Profile::Const => 0.0,
            Profile::Wave { axis, k, phase } => {
                if j == axis {
                    -k * (k * x[axis] + phase).sin()
                } else {
                    0.0
                }
            }
            Profile::CosProduct { k } => x
                .iter()
                .enumerate()
                .map(|(i, &xi)| if i == j { -k * (k * xi).sin() } else { (k * xi).cos() })
                .product(),
        }
    }

    /// Upper bound on the Euclidean norm of the gradient.
    pub fn gradient_bound(&self) -> f64 {
        match *self {
            Profile::Const => 0.0,
            Profile::Wave { k, .. } | Profile::CosProduct { k } => k.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarMode {
    pub amplitude: f64,
    pub profile: Profile,
}

fn modes_value(modes: &[ScalarMode], x: &[f64]) -> f64 {
    modes.iter().map(|m| m.amplitude * m.profile.value(x)).sum()
}

fn modes_partial(modes: &[ScalarMode], x: &[f64], j: usize) -> f64 {
    modes.iter().map(|m| m.amplitude * m.profile.partial(x, j)).sum()
}

/// `amplitude * profile(x) * matrix` with `matrix` symmetric, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixMode {
    pub amplitude: f64,
    pub profile: Profile,
    pub matrix: Vec<f64>,
}

/// Smooth coefficients on all of `R^d`:
/// `A = A0 + sum of matrix modes`, `b = b_re + i b_tilde`, `c = c_re + i c_im`, `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticField {
    pub d: usize,
    pub a0: Vec<f64>,
    pub a_modes: Vec<MatrixMode>,
    /// Imaginary part of `b`, one list of modes per component.
    pub b_tilde: Vec<Vec<ScalarMode>>,
    /// Real part of `b`, one list of modes per component.
    pub b_re: Vec<Vec<ScalarMode>>,
    pub c_re: Vec<ScalarMode>,
    pub c_im: Vec<ScalarMode>,
    pub v: Vec<ScalarMode>,
    /// When set, `Im c` is replaced by `div(b_tilde)/2`.
    pub self_adjoint: bool,
    pub declared_theta1: f64,
    pub declared_theta2: f64,
}

impl AnalyticField {
    /// Constant coefficient matrix, zero lower-order terms.
    pub fn constant(a0: Vec<f64>, d: usize) -> Result<Self> {
        if a0.len() != d * d {
            return Err(UcError::ShapeMismatch {
                expected: d * d,
                found: a0.len(),
            });
        }
        let theta1 = ellipticity_of(&a0, d)?;
        Ok(Self {
            d,
            a0,
            a_modes: Vec::new(),
            b_tilde: vec![Vec::new(); d],
            b_re: vec![Vec::new(); d],
            c_re: Vec::new(),
            c_im: Vec::new(),
            v: Vec::new(),
            self_adjoint: true,
            declared_theta1: theta1,
            declared_theta2: 0.0,
        })
    }

    pub fn identity(d: usize) -> Self {
        let mut a0 = vec![0.0; d * d];
        for i in 0..d {
            a0[i * d + i] = 1.0;
        }
        Self::constant(a0, d).expect("identity is elliptic")
    }

    pub fn a(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a0);
        for m in &self.a_modes {
            let s = m.amplitude * m.profile.value(x);
            for (o, &mij) in out.iter_mut().zip(&m.matrix) {
                *o += s * mij;
            }
        }
    }

    /// `d A / d x_k`.
    pub fn da(&self, x: &[f64], k: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for m in &self.a_modes {
            let s = m.amplitude * m.profile.partial(x, k);
            for (o, &mij) in out.iter_mut().zip(&m.matrix) {
                *o += s * mij;
            }
        }
    }

    pub fn b_tilde_at(&self, x: &[f64], i: usize) -> f64 {
        modes_value(&self.b_tilde[i], x)
    }

    pub fn div_b_tilde(&self, x: &[f64]) -> f64 {
        (0..self.d).map(|i| modes_partial(&self.b_tilde[i], x, i)).sum()
    }

    pub fn b(&self, x: &[f64], i: usize) -> Complex64 {
        Complex64::new(modes_value(&self.b_re[i], x), modes_value(&self.b_tilde[i], x))
    }

    pub fn c(&self, x: &[f64]) -> Complex64 {
        let im = if self.self_adjoint {
            self.div_b_tilde(x) / 2.0
        } else {
            modes_value(&self.c_im, x)
        };
        Complex64::new(modes_value(&self.c_re, x), im)
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        modes_value(&self.v, x)
    }
}

/// Coefficients that can be evaluated, with derivatives of `A`, anywhere in `R^d`.
pub trait SmoothField {
    fn dim(&self) -> usize;
    fn a_at(&self, x: &[f64], out: &mut [f64]);
    fn da_at(&self, x: &[f64], k: usize, out: &mut [f64]);
    fn b_at(&self, x: &[f64], i: usize) -> Complex64;
    fn c_at(&self, x: &[f64]) -> Complex64;
    fn theta1(&self) -> f64;
    fn theta2(&self) -> f64;
}

impl SmoothField for AnalyticField {
    fn dim(&self) -> usize {
        self.d
    }
    fn a_at(&self, x: &[f64], out: &mut [f64]) {
        self.a(x, out)
    }
    fn da_at(&self, x: &[f64], k: usize, out: &mut [f64]) {
        self.da(x, k, out)
    }
    fn b_at(&self, x: &[f64], i: usize) -> Complex64 {
        self.b(x, i)
    }
    fn c_at(&self, x: &[f64]) -> Complex64 {
        self.c(x)
    }
    fn theta1(&self) -> f64 {
        self.declared_theta1
    }
    fn theta2(&self) -> f64 {
        self.declared_theta2
    }
}

/// Grid samples of a coefficient field on a cube, one value per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub h: f64,
    pub n: usize,
    pub layout: String,
    /// `N * d * d` entries.
    pub a: Vec<f64>,
    /// `N * d` entries.
    pub b: Vec<Complex64>,
    pub c: Vec<Complex64>,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    pub declared_theta1: f64,
    pub declared_theta2: f64,
    pub norm_b: f64,
    pub norm_c: f64,
    #[serde(rename = "norm_V")]
    pub norm_v: f64,
}

impl CoefficientField {
    /// Sample `field` at cell centers. Under self-adjointness `b = i b_tilde`
    /// and `Im c` is the discrete divergence from [`make_self_adjoint`], so the
    /// assembled operator is exactly Hermitian.
    pub fn sample(field: &AnalyticField, domain: &CubeDomain) -> Result<Self> {
        if field.d != domain.d {
            return Err(UcError::ShapeMismatch {
                expected: domain.d,
                found: field.d,
            });
        }
        let d = domain.d;
        let big_n = domain.len();
        let mut a = vec![0.0; big_n * d * d];
        let mut b = vec![Complex64::new(0.0, 0.0); big_n * d];
        let mut c = vec![Complex64::new(0.0, 0.0); big_n];
        let mut v = vec![0.0; big_n];
        let mut bt = vec![0.0; big_n * d];
        let mut ct = vec![0.0; big_n];
        for idx in 0..big_n {
            let x = domain.center(idx);
            field.a(&x, &mut a[idx * d * d..(idx + 1) * d * d]);
            for i in 0..d {
                b[idx * d + i] = field.b(&x, i);
                bt[idx * d + i] = field.b_tilde_at(&x, i);
            }
            c[idx] = field.c(&x);
            ct[idx] = c[idx].re;
            v[idx] = field.v(&x);
        }
        if field.self_adjoint {
            let (bs, cs) = make_self_adjoint(&bt, &ct, domain)?;
            for (bo, bsa) in b.iter_mut().zip(bs) {
                *bo = Complex64::new(bo.re, bsa.im);
            }
            c = cs;
        }
        let mut out = Self {
            d,
            l: domain.l,
            h: domain.h,
            n: domain.n,
            layout: "row-major, last axis fastest".into(),
            a,
            b,
            c,
            v,
            declared_theta1: field.declared_theta1,
            declared_theta2: field.declared_theta2,
            norm_b: 0.0,
            norm_c: 0.0,
            norm_v: 0.0,
        };
        out.refresh_norms();
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn refresh_norms(&mut self) {
        let d = self.d;
        self.norm_b = self
            .b
            .chunks(d)
            .map(|bi| bi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        self.norm_c = self.c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.norm_v = self.v.iter().map(|z| z.abs()).fold(0.0, f64::max);
    }

    pub fn a_at(&self, idx: usize) -> &[f64] {
        &self.a[idx * self.d * self.d..(idx + 1) * self.d * self.d]
    }

    pub fn check_domain(&self, domain: &CubeDomain) -> Result<()> {
        if self.d != domain.d || self.n != domain.n || self.len() != domain.len() {
            return Err(UcError::ShapeMismatch {
                expected: domain.len(),
                found: self.len(),
            });
        }
        Ok(())
    }

    /// Replace the potential, e.g. with i.i.d. values.
    pub fn with_potential(mut self, v: Vec<f64>) -> Result<Self> {
        if v.len() != self.len() {
            return Err(UcError::ShapeMismatch {
                expected: self.len(),
                found: v.len(),
            });
        }
        self.v = v;
        self.refresh_norms();
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        let d = f.d;
        let big_n = f.n.pow(d as u32);
        if f.a.len() != big_n * d * d || f.b.len() != big_n * d || f.c.len() != big_n || f.v.len() != big_n {
            return Err(UcError::ShapeMismatch {
                expected: big_n,
                found: f.v.len(),
            });
        }
        Ok(f)
    }
}

/// i.i.d. uniform potential on `[-norm, norm]`, one value per cell.
pub fn random_potential(len: usize, norm: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| if norm > 0.0 { rng.gen_range(-norm..=norm) } else { 0.0 })
        .collect()
}

/// Maximum absolute row sum.
pub fn row_sum_norm(m: &[f64], d: usize) -> f64 {
    (0..d)
        .map(|i| m[i * d..(i + 1) * d].iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric `d x d` matrix in ascending order.
pub fn sym_eigenvalues(m: &[f64], d: usize) -> Vec<f64> {
    match d {
        1 => vec![m[0]],
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            vec![mean - rad, mean + rad]
        }
        _ => {
            let mut ev: Vec<f64> = SymmetricEigen::new(DMatrix::from_row_slice(d, d, m)).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| a.total_cmp(b));
            ev
        }
    }
}

/// `max(lambda_max, 1/lambda_min)` of one symmetric matrix, at least 1.
pub fn ellipticity_of(m: &[f64], d: usize) -> Result<f64> {
    let ev = sym_eigenvalues(m, d);
    let lo = ev[0];
    let hi = ev[d - 1];
    if !(lo > 0.0) {
        return Err(UcError::NotPositiveDefinite { row: 0, pivot: lo });
    }
    Ok(hi.max(1.0 / lo).max(1.0))
}

/// `max(lambda_max, 1/lambda_min)` over all cells, at least 1.
pub fn estimate_ellipticity(a: &[f64], d: usize) -> Result<f64> {
    let mut theta = 1.0f64;
    for (cell, m) in a.chunks(d * d).enumerate() {
        let sym_defect = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (m[i * d + j] - m[j * d + i]).abs())
            .fold(0.0, f64::max);
        if sym_defect > 1e-12 * row_sum_norm(m, d).max(1.0) {
            return Err(UcError::NonSymmetric(sym_defect));
        }
        let t = ellipticity_of(m, d).map_err(|e| match e {
            UcError::NotPositiveDefinite { pivot, .. } => UcError::NotPositiveDefinite { row: cell, pivot },
            other => other,
        })?;
        theta = theta.max(t);
    }
    Ok(theta)
}

/// Largest `|A(x) - A(y)|_inf / h` over nearest-neighbour cell pairs.
///
/// A lower bound on the true constant. Periodic domains include the pairs
/// that meet across opposite faces.
pub fn estimate_lipschitz(a: &[f64], domain: &CubeDomain) -> f64 {
    let d = domain.d;
    let dd = d * d;
    let mut m = vec![0usize; d];
    let mut diff = vec![0.0; dd];
    let mut worst = 0.0f64;
    for idx in 0..domain.len() {
        domain.multi_index(idx, &mut m);
        for k in 0..d {
            let nb = if m[k] + 1 < domain.n {
                idx + domain.stride(k)
            } else if domain.bc == BoundaryCondition::Periodic && domain.n > 1 {
                idx + domain.stride(k) - domain.n * domain.stride(k)
            } else {
                continue;
            };
            for (t, dv) in diff.iter_mut().enumerate() {
                *dv = a[nb * dd + t] - a[idx * dd + t];
            }
            worst = worst.max(row_sum_norm(&diff, d) / domain.h);
        }
    }
    worst
}

/// Discrete divergence by centered differences, neighbours taken from the
/// domain's extension: periodic wrap, or reflection under which `b_i` is odd
/// across the faces normal to axis `i` and even across the others.
pub fn discrete_divergence(b_tilde: &[f64], domain: &CubeDomain) -> Vec<f64> {
    let d = domain.d;
    let mut m = vec![0usize; d];
    let mut out = vec![0.0; domain.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        domain.multi_index(idx, &mut m);
        let mut s = 0.0;
        for i in 0..d {
            let side = |delta: i64| {
                let (mi, odd) = domain.fold(m[i] as i64 + delta);
                let nb = idx - m[i] * domain.stride(i) + mi * domain.stride(i);
                let sign = if odd { -1.0 } else { 1.0 };
                sign * b_tilde[nb * d + i]
            };
            s += (side(1) - side(-1)) / (2.0 * domain.h);
        }
        *o = s;
    }
    out
}

/// `b = i b_tilde`, `c = c_tilde + i div_h(b_tilde)/2` with the divergence
/// taken in the same discrete form the assembly uses.
pub fn make_self_adjoint(
    b_tilde: &[f64],
    c_tilde: &[f64],
    domain: &CubeDomain,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if b_tilde.len() != domain.len() * domain.d || c_tilde.len() != domain.len() {
        return Err(UcError::ShapeMismatch {
            expected: domain.len(),
            found: c_tilde.len(),
        });
    }
    let div = discrete_divergence(b_tilde, domain);
    let b = b_tilde.iter().map(|&x| Complex64::new(0.0, x)).collect();
    let c = c_tilde.iter().zip(&div).map(|(&ct, &dv)| Complex64::new(ct, dv / 2.0)).collect();
    Ok((b, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// Off-diagonal entries vanish on every face.
    pub dirichlet_ok: bool,
    pub dirichlet_violation: f64,
    /// All entries agree on opposite faces.
    pub periodic_ok: bool,
    pub periodic_violation: f64,
    pub tolerance: f64,
}

/// Face traces are extrapolated quadratically from the three nearest cell
/// centers; the tolerance is `10 h theta2` plus a rounding floor.
pub fn check_boundary_conditions(field: &CoefficientField) -> BoundaryReport {
    let d = field.d;
    let n = field.n;
    let dd = d * d;
    let dom = CubeDomain {
        d,
        l: field.l,
        h: field.h,
        n,
        bc: BoundaryCondition::Dirichlet,
    };
    let trace = |face_axis: usize, low: bool, rest: &[usize], entry: usize| -> f64 {
        let mut m = rest.to_vec();
        let mut vals = [0.0; 3];
        for (s, val) in vals.iter_mut().enumerate() {
            let s = s.min(n.saturating_sub(1));
            m[face_axis] = if low { s } else { n - 1 - s };
            *val = field.a[dom.flat_index(&m) * dd + entry];
        }
        if n >= 3 {
            (15.0 * vals[0] - 10.0 * vals[1] + 3.0 * vals[2]) / 8.0
        } else {
            vals[0]
        }
    };
    let mut dir = 0.0f64;
    let mut per = 0.0f64;
    let mut m = vec![0usize; d];
    for idx in 0..field.len() {
        dom.multi_index(idx, &mut m);
        for p in 0..d {
            if m[p] != 0 {
                continue;
            }
            for entry in 0..dd {
                let lo = trace(p, true, &m, entry);
                let hi = trace(p, false, &m, entry);
                if entry / d != entry % d {
                    dir = dir.max(lo.abs()).max(hi.abs());
                }
                per = per.max((lo - hi).abs());
            }
        }
    }
    let tolerance = 10.0 * field.h * field.declared_theta2 + 1e-12;
    BoundaryReport {
        dirichlet_ok: dir <= tolerance,
        dirichlet_violation: dir,
        periodic_ok: per <= tolerance,
        periodic_violation: per,
        tolerance,
    }
}

/// Targets for [`synthesize_random_field`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTargets {
    pub theta1: f64,
    pub theta2: f64,
    pub norm_b: f64,
    pub norm_c: f64,
    #[serde(rename = "norm_V")]
    pub norm_v: f64,
}

impl Default for FieldTargets {
    fn default() -> Self {
        Self {
            theta1: 1.0,
            theta2: 0.0,
            norm_b: 0.0,
            norm_c: 0.0,
            norm_v: 0.0,
        }
    }
}

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize, diagonal_only: bool, off_only: bool) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            if (diagonal_only && i != j) || (off_only && i == j) {
                continue;
            }
            let v = rng.gen_range(-1.0..=1.0);
            s[i * d + j] = v;
            s[j * d + i] = v;
        }
    }
    let r = row_sum_norm(&s, d);
    if r > 0.0 {
        s.iter_mut().for_each(|x| *x /= r);
    }
    s
}

/// Low-frequency trigonometric field honoring the boundary condition, with
/// declared constants equal to the targets.
///
/// Dirichlet fields have diagonal `A0`, diagonal modulations even across
/// every face, off-diagonal entries carried by `prod cos(pi x_i / L)` and
/// `b_tilde_i ~ cos(pi x_i / L)`. Periodic fields use one-period waves.
pub fn synthesize_analytic(
    seed: u64,
    d: usize,
    l: f64,
    targets: &FieldTargets,
    bc: BoundaryCondition,
) -> Result<AnalyticField> {
    let t = targets.theta1;
    if !(t >= 1.0) {
        return Err(invalid("theta1", "target must be >= 1"));
    }
    if !(targets.theta2 >= 0.0) {
        return Err(invalid("theta2", "target must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirichlet = bc == BoundaryCondition::Dirichlet;
    let k1 = 2.0 * PI / l;
    let mut a_modes = Vec::new();
    let mut spread = 0.0;
    if targets.theta2 > 0.0 {
        let off_share = if dirichlet && d >= 2 { 0.02 } else { 0.0 };
        let axis = rng.gen_range(0..d);
        let phase = if dirichlet { 0.0 } else { rng.gen_range(0.0..2.0 * PI) };
        let s1 = random_symmetric(&mut rng, d, dirichlet, false);
        let eps1 = (1.0 - off_share) * targets.theta2 / k1;
        spread += eps1;
        a_modes.push(MatrixMode {
            amplitude: eps1,
            profile: Profile::Wave { axis, k: k1, phase },
            matrix: s1,
        });
        if off_share > 0.0 {
            let s2 = random_symmetric(&mut rng, d, false, true);
            let eps2 = off_share * targets.theta2 / (PI / l);
            spread += eps2;
            a_modes.push(MatrixMode {
                amplitude: eps2,
                profile: Profile::CosProduct { k: PI / l },
                matrix: s2,
            });
        }
        if 2.0 * spread > 0.05 * t || 1.0 / t + spread > t - spread {
            return Err(invalid(
                "theta2",
                format!("target {} is unreachable with theta1 = {t} on L = {l}", targets.theta2),
            ));
        }
    }
    // eigenvalues of A0: the largest sits at t - spread so the sup reaches t
    let lo = 1.0 / t + spread;
    let hi = t - spread;
    let mut lambdas: Vec<f64> = (0..d).map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { hi }).collect();
    lambdas[0] = hi;
    let a0 = if dirichlet || d == 1 || hi <= lo {
        let mut a0 = vec![0.0; d * d];
        for i in 0..d {
            a0[i * d + i] = lambdas[i];
        }
        a0
    } else {
        let g = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..=1.0));
        let q = g.qr().q();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas));
        let m = &q * lam * q.transpose();
        let mut a0 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a0[i * d + j] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        a0
    };
    // b = i b_tilde with sup |b_tilde| = norm_b
    let mut b_tilde = vec![Vec::new(); d];
    let mut div_bound = 0.0;
    if targets.norm_b > 0.0 {
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let beta: Vec<f64> = dir.iter().map(|x| x / nrm * targets.norm_b).collect();
        if dirichlet {
            for i in 0..d {
                b_tilde[i].push(ScalarMode {
                    amplitude: beta[i],
                    profile: Profile::Wave { axis: i, k: PI / l, phase: 0.0 },
                });
                div_bound += beta[i].abs() * PI / l;
            }
        } else {
            let axis = rng.gen_range(0..d);
            let phase = rng.gen_range(0.0..2.0 * PI);
            for i in 0..d {
                b_tilde[i].push(ScalarMode {
                    amplitude: beta[i],
                    profile: Profile::Wave { axis, k: k1, phase },
                });
            }
            div_bound = beta[axis].abs() * k1;
        }
    }
    let half_div = div_bound / 2.0;
    if half_div > targets.norm_c + 1e-12 {
        return Err(invalid(
            "norm_c",
            format!("|c| >= div(b)/2 = {half_div} exceeds the target {}", targets.norm_c),
        ));
    }
    let kappa = (targets.norm_c * targets.norm_c - half_div * half_div).max(0.0).sqrt();
    let c_re = if kappa > 0.0 {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        vec![ScalarMode {
            amplitude: sign * kappa,
            profile: Profile::Const,
        }]
    } else {
        Vec::new()
    };
    Ok(AnalyticField {
        d,
        a0,
        a_modes,
        b_tilde,
        b_re: vec![Vec::new(); d],
        c_re,
        c_im: Vec::new(),
        v: Vec::new(),
        self_adjoint: true,
        declared_theta1: t,
        declared_theta2: targets.theta2,
    })
}

/// Grid field on `domain` with i.i.d. potential; deterministic per seed.
pub fn synthesize_random_field(seed: u64, domain: &CubeDomain, targets: &FieldTargets) -> Result<CoefficientField> {
    let analytic = synthesize_analytic(seed, domain.d, domain.l, targets, domain.bc)?;
    let field = CoefficientField::sample(&analytic, domain)?;
    let v = random_potential(domain.len(), targets.norm_v, seed ^ 0x5eed_0f_7e11);
    field.with_potential(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(d: usize, l: f64, h: f64, bc: BoundaryCondition) -> CubeDomain {
        CubeDomain::new(d, l, h, bc).unwrap()
    }

    #[test]
    fn ellipticity_examples() {
        assert_eq!(estimate_ellipticity(&[1.0, 0.0, 0.0, 1.0], 2).unwrap(), 1.0);
        assert_eq!(estimate_ellipticity(&[2.0, 0.0, 0.0, 0.5], 2).unwrap(), 2.0);
        assert!(estimate_ellipticity(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
        assert!(matches!(
            estimate_ellipticity(&[1.0, 0.1, 0.0, 1.0], 2),
            Err(UcError::NonSymmetric(_))
        ));
        let m = [2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.7];
        let ev = sym_eigenvalues(&m, 3);
        let tr: f64 = ev.iter().sum();
        assert!((tr - 3.7).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_examples() {
        let dm = dom(1, 3.0, 1.0 / 32.0, BoundaryCondition::Dirichlet);
        let a: Vec<f64> = (0..dm.len()).map(|i| 2.0 + 0.1 * dm.coord(i)).collect();
        assert!((estimate_lipschitz(&a, &dm) - 0.1).abs() < 1e-12);
        let c = vec![1.5; dm.len()];
        assert_eq!(estimate_lipschitz(&c, &dm), 0.0);
        // row-sum norm of the difference
        let d2 = dom(2, 1.0, 0.5, BoundaryCondition::Dirichlet);
        let mut a = vec![0.0; 16];
        for idx in 0..4 {
            let x = d2.center(idx);
            let s = x[0];
            a[idx * 4..idx * 4 + 4].copy_from_slice(&[1.0 + s, s, s, 1.0]);
        }
        assert!((estimate_lipschitz(&a, &d2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn self_adjoint_construction() {
        let dm = dom(1, 3.0, 1.0 / 64.0, BoundaryCondition::Periodic);
        let bt: Vec<f64> = (0..dm.len()).map(|i| (2.0 * PI * dm.coord(i) / 3.0).sin()).collect();
        let ct = vec![0.3; dm.len()];
        let (b, c) = make_self_adjoint(&bt, &ct, &dm).unwrap();
        let mut worst = 0.0f64;
        for i in 0..dm.len() {
            assert_eq!(b[i].re, 0.0);
            assert_eq!(c[i].re, 0.3);
            let exact = PI * (2.0 * PI * dm.coord(i) / 3.0).cos() / 3.0;
            worst = worst.max((c[i].im - exact).abs());
        }
        assert!(worst < 1e-3, "{worst}");
        let zero = vec![0.0; dm.len()];
        let (b0, c0) = make_self_adjoint(&zero, &ct, &dm).unwrap();
        assert!(b0.iter().all(|z| z.norm() == 0.0));
        assert!(c0.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn divergence_second_order() {
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let dm = dom(1, 3.0, h, BoundaryCondition::Periodic);
            let bt: Vec<f64> = (0..dm.len()).map(|i| (2.0 * PI * dm.coord(i) / 3.0).sin()).collect();
            let div = discrete_divergence(&bt, &dm);
            let e = (0..dm.len())
                .map(|i| (div[i] - 2.0 * PI / 3.0 * (2.0 * PI * dm.coord(i) / 3.0).cos()).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 3.8 && errs[1] / errs[2] > 3.8, "{errs:?}");
    }

    #[test]
    fn boundary_checks() {
        let dm = dom(2, 3.0, 1.0 / 16.0, BoundaryCondition::Dirichlet);
        let diag = AnalyticField::constant(vec![2.0, 0.0, 0.0, 0.5], 2).unwrap();
        let f = CoefficientField::sample(&diag, &dm).unwrap();
        let r = check_boundary_conditions(&f);
        assert!(r.dirichlet_ok && r.periodic_ok);
        let full = AnalyticField::constant(vec![2.0, 0.3, 0.3, 0.5], 2).unwrap();
        let r = check_boundary_conditions(&CoefficientField::sample(&full, &dm).unwrap());
        assert!(!r.dirichlet_ok && r.periodic_ok);
        // off-diagonal profile vanishing on the faces
        let mut bump = diag.clone();
        bump.a_modes.push(MatrixMode {
            amplitude: 0.1,
            profile: Profile::CosProduct { k: PI / 3.0 },
            matrix: vec![0.0, 1.0, 1.0, 0.0],
        });
        bump.declared_theta2 = 0.1 * PI / 3.0;
        let r = check_boundary_conditions(&CoefficientField::sample(&bump, &dm).unwrap());
        assert!(r.dirichlet_ok, "{r:?}");
        assert!(r.dirichlet_violation < 1e-4);
    }

    #[test]
    fn synthesis_hits_targets() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Periodic] {
            for d in [1, 2] {
                for seed in 0..5 {
                    let dm = dom(d, 5.0, 1.0 / 16.0, bc);
                    let tg = FieldTargets {
                        theta1: 2.0,
                        theta2: 0.05,
                        norm_b: 0.2,
                        norm_c: 0.5,
                        norm_v: 1.0,
                    };
                    let f = synthesize_random_field(seed, &dm, &tg).unwrap();
                    let t1 = estimate_ellipticity(&f.a, d).unwrap();
                    let t2 = estimate_lipschitz(&f.a, &dm);
                    assert!(t1 <= 2.0 + 1e-12 && t1 >= 0.95 * 2.0, "{t1}");
                    assert!(t2 <= 0.05 * (1.0 + 1e-9) && t2 >= 0.95 * 0.05, "{bc} d={d}: {t2}");
                    assert!(f.norm_b <= 0.2 + 1e-12 && f.norm_b > 0.9 * 0.2);
                    assert!(f.norm_c <= 0.5 + 1e-3);
                    assert!(f.norm_v <= 1.0);
                    let r = check_boundary_conditions(&f);
                    match bc {
                        BoundaryCondition::Dirichlet => assert!(r.dirichlet_ok, "{r:?}"),
                        BoundaryCondition::Periodic => assert!(r.periodic_ok, "{r:?}"),
                    }
                    let g = synthesize_random_field(seed, &dm, &tg).unwrap();
                    assert_eq!(f, g);
                }
            }
        }
    }

    #[test]
    fn synthesis_trivial_and_rejections() {
        let dm = dom(2, 3.0, 0.25, BoundaryCondition::Periodic);
        let f = synthesize_random_field(1, &dm, &FieldTargets::default()).unwrap();
        assert!(f.a.chunks(4).all(|m| m == [1.0, 0.0, 0.0, 1.0]));
        let bad = FieldTargets {
            theta2: 0.1,
            ..Default::default()
        };
        assert!(synthesize_random_field(1, &dm, &bad).is_err());
        let bad = FieldTargets {
            theta1: 1.5,
            norm_b: 1.0,
            norm_c: 0.0,
            ..Default::default()
        };
        assert!(synthesize_random_field(1, &dm, &bad).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dm = dom(2, 3.0, 0.25, BoundaryCondition::Dirichlet);
        let tg = FieldTargets {
            theta1: 1.5,
            theta2: 0.02,
            norm_b: 0.1,
            norm_c: 0.2,
            norm_v: 1.0,
        };
        let f = synthesize_random_field(7, &dm, &tg).unwrap();
        let back = CoefficientField::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let dm = dom(2, 3.0, 0.25, BoundaryCondition::Dirichlet);
        let tg = FieldTargets {
            theta1: 1.5,
            theta2: 0.02,
            ..Default::default()
        };
        let f = synthesize_analytic(3, 2, 3.0, &tg, dm.bc).unwrap();
        let x = [0.3, -0.7];
        let mut da = [0.0; 4];
        let (mut p, mut m) = ([0.0; 4], [0.0; 4]);
        for k in 0..2 {
            f.da(&x, k, &mut da);
            let mut xp = x;
            let mut xm = x;
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            f.a(&xp, &mut p);
            f.a(&xm, &mut m);
            for t in 0..4 {
                assert!((da[t] - (p[t] - m[t]) / 2e-6).abs() < 1e-8);
            }
        }
    }
}
