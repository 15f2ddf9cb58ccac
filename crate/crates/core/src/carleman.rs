//! Carleman weight, radial cutoff, the pointwise cutoff estimate and a
//! discrete checker for the weighted Carleman inequality.
//!
//! The weight is `w(x) = phi(sigma(x/rho))` with `sigma(x) = (x^T A0^{-1} x)^{1/2}`
//! and `phi(r) = r exp(-int_0^r (1 - e^{-mu t})/t dt)`.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{carleman_constants, carleman_mu_threshold, mu1_of, ModelParams};
use crate::error::{invalid, Result, UcError};
use crate::fields::{ellipticity_of, synthesize_analytic, AnalyticField, FieldTargets, SmoothField};
use crate::geometry::{BoundaryCondition, CubeDomain};
use crate::quadrature::integrate;

/// Absolute tolerance of the `phi` quadrature.
pub const PHI_TOL: f64 = 1e-13;

/// `(1 - e^{-mu t})/t`, continued by `mu` at `t = 0`.
fn phi_integrand(t: f64, mu: f64) -> f64 {
    let s = mu * t;
    if s < 1e-4 {
        mu * (1.0 - s / 2.0 + s * s / 6.0 - s * s * s / 24.0)
    } else {
        -(-s).exp_m1() / t
    }
}

/// `int_0^r (1 - e^{-mu t})/t dt`.
pub fn phi_exponent(r: f64, mu: f64) -> f64 {
    integrate(&|t| phi_integrand(t, mu), 0.0, r, PHI_TOL)
}

pub fn phi(r: f64, mu: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(invalid("r", format!("phi needs r >= 0, got {r}")));
    }
    if !(mu > 0.0) {
        return Err(invalid("mu", "must be > 0"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r * (-phi_exponent(r, mu)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub d: usize,
    pub rho: f64,
    pub mu: f64,
    /// Frozen coefficient matrix, row-major.
    pub a0: Vec<f64>,
    pub a0_inv: Vec<f64>,
    /// `max(lambda_max(A0), 1/lambda_min(A0))`.
    pub theta1: f64,
    pub mu1: f64,
}

impl WeightFunction {
    pub fn new(rho: f64, mu: f64, a0: Vec<f64>, d: usize) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(invalid("rho", "must be > 0"));
        }
        if !(mu > 0.0) {
            return Err(invalid("mu", "must be > 0"));
        }
        if a0.len() != d * d {
            return Err(UcError::ShapeMismatch {
                expected: d * d,
                found: a0.len(),
            });
        }
        let theta1 = ellipticity_of(&a0, d)?;
        let inv = DMatrix::from_row_slice(d, d, &a0)
            .try_inverse()
            .ok_or(UcError::NotPositiveDefinite { row: 0, pivot: 0.0 })?;
        let mut a0_inv = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a0_inv[i * d + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        Ok(Self {
            d,
            rho,
            mu,
            a0,
            a0_inv,
            theta1,
            mu1: mu1_of(theta1, mu),
        })
    }

    /// `A0` frozen at `x0` of a smooth field.
    pub fn frozen<F: SmoothField + ?Sized>(rho: f64, mu: f64, field: &F, x0: &[f64]) -> Result<Self> {
        let d = field.dim();
        let mut a0 = vec![0.0; d * d];
        field.a_at(x0, &mut a0);
        Self::new(rho, mu, a0, d)
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += x[i] * self.a0_inv[i * d + j] * x[j];
            }
        }
        s.max(0.0).sqrt()
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        let r = self.sigma(x) / self.rho;
        if r == 0.0 {
            0.0
        } else {
            r * (-phi_exponent(r, self.mu)).exp()
        }
    }

    /// `ln w(x)`, finite away from the origin even when `w` is tiny.
    pub fn log_weight(&self, x: &[f64]) -> f64 {
        let r = self.sigma(x) / self.rho;
        r.ln() - phi_exponent(r, self.mu)
    }

    /// `ln w(x) - ln phi(r_ref)` with `r_ref` a value of `sigma/rho`; exact to
    /// working precision even when both logs are large and nearly equal.
    pub fn log_weight_difference(&self, x: &[f64], r_ref: f64) -> f64 {
        let r = self.sigma(x) / self.rho;
        let dr = r - r_ref;
        if dr.abs() <= 4.0 * f64::EPSILON * r_ref {
            return 0.0;
        }
        let tol = 1e-15 * dr.abs();
        let tail = if dr > 0.0 {
            integrate(&|t| phi_integrand(t, self.mu), r_ref, r, tol)
        } else {
            -integrate(&|t| phi_integrand(t, self.mu), r, r_ref, tol)
        };
        (dr / r_ref).ln_1p() - tail
    }

    /// `(sigma/(rho mu1), sigma/rho)`.
    pub fn bounds(&self, x: &[f64]) -> (f64, f64) {
        let s = self.sigma(x) / self.rho;
        (s / self.mu1, s)
    }

    /// `1/(e mu)`, valid where `|x| >= sqrt(theta1) rho / mu`.
    pub fn far_lower_bound(&self) -> f64 {
        1.0 / (E * self.mu)
    }

    pub fn far_radius(&self) -> f64 {
        self.theta1.sqrt() * self.rho / self.mu
    }
}

/// Random symmetric `A0` with spectrum in `[1/theta1, theta1]`, both ends attained when `d > 1`.
pub fn random_frozen_matrix(seed: u64, d: usize, theta1: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.qr().q();
    let eig: Vec<f64> = (0..d)
        .map(|k| match k {
            0 => theta1,
            1 => 1.0 / theta1,
            _ => rng.gen_range(1.0 / theta1..=theta1),
        })
        .collect();
    let eig = if d == 1 { vec![rng.gen_range(1.0 / theta1..=theta1)] } else { eig };
    let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig)) * q.transpose();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightBoundReport {
    pub points: usize,
    /// `min (w - sigma/(rho mu1))`.
    pub lower_slack: f64,
    /// `min (sigma/rho - w)`.
    pub upper_slack: f64,
    pub far_points: usize,
    /// `min (w - 1/(e mu))` over points with `|x| >= sqrt(theta1) rho / mu`.
    pub far_slack: f64,
}

impl WeightBoundReport {
    pub fn min_slack(&self) -> f64 {
        self.lower_slack.min(self.upper_slack).min(self.far_slack)
    }
}

/// Both weight bounds at `points` uniform samples of `B(rho)`.
pub fn check_weight_bounds(w: &WeightFunction, points: usize, seed: u64) -> WeightBoundReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = WeightBoundReport {
        points,
        lower_slack: f64::INFINITY,
        upper_slack: f64::INFINITY,
        far_points: 0,
        far_slack: f64::INFINITY,
    };
    let far = w.far_radius();
    let mut x = vec![0.0; w.d];
    let mut taken = 0;
    while taken < points {
        x.iter_mut().for_each(|v| *v = rng.gen_range(-w.rho..w.rho));
        let r = norm(&x);
        if r >= w.rho {
            continue;
        }
        taken += 1;
        let v = w.weight(&x);
        let (lo, hi) = w.bounds(&x);
        rep.lower_slack = rep.lower_slack.min(v - lo);
        rep.upper_slack = rep.upper_slack.min(hi - v);
        if r >= far {
            rep.far_points += 1;
            rep.far_slack = rep.far_slack.min(v - w.far_lower_bound());
        }
    }
    rep
}

fn smoothstep(t: f64) -> (f64, f64, f64) {
    let t2 = t * t;
    (
        t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
    )
}

/// Radial cutoff: 0 on `B(delta/4)`, quintic rise to 1 at `delta/2`, 1 up to
/// `2 e theta1 R`, quintic fall to 0 at `2 e theta1 R + D0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialCutoff {
    pub d: usize,
    pub delta: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    pub theta1: f64,
    /// Transition radii `delta/4, delta/2, 2 e theta1 R, 2 e theta1 R + D0`.
    pub radii: [f64; 4],
    /// `sqrt` of the largest of `max(|grad eta|, |lap eta|) delta^2` on the
    /// inner annulus and the same with `D0^2` on the outer one.
    pub measured_m: f64,
}

pub fn build_radial_cutoff(d: usize, delta: f64, r: f64, d0: f64, theta1: f64) -> Result<RadialCutoff> {
    if d == 0 || !(delta > 0.0) || !(r > 0.0) || !(d0 > 0.0) || !(theta1 >= 1.0) {
        return Err(invalid("delta", "cutoff needs d >= 1, delta, R, D0 > 0 and theta1 >= 1"));
    }
    let plateau = 2.0 * E * theta1 * r;
    if delta > d0 || delta > plateau {
        return Err(invalid(
            "delta",
            format!("radius ordering violated: need delta <= D0 ({d0}) and delta <= 2 e theta1 R ({plateau})"),
        ));
    }
    let mut c = RadialCutoff {
        d,
        delta,
        r,
        d0,
        theta1,
        radii: [delta / 4.0, delta / 2.0, plateau, plateau + d0],
        measured_m: 0.0,
    };
    let samples = 4096;
    let mut worst = 0.0f64;
    for (lo, hi, scale) in [(c.radii[0], c.radii[1], delta), (c.radii[2], c.radii[3], d0)] {
        for k in 0..=samples {
            let rr = lo + (hi - lo) * k as f64 / samples as f64;
            let (_, g, l) = c.profile_with_laplacian(rr);
            worst = worst.max(g.abs().max(l.abs()) * scale * scale);
        }
    }
    c.measured_m = worst.sqrt();
    Ok(c)
}

impl RadialCutoff {
    /// `(eta, eta', eta'')` as functions of the radius.
    pub fn profile(&self, r: f64) -> (f64, f64, f64) {
        let [r1, r2, r3, r4] = self.radii;
        if r <= r1 || r >= r4 {
            (0.0, 0.0, 0.0)
        } else if r < r2 {
            let w = r2 - r1;
            let (s, s1, s2) = smoothstep((r - r1) / w);
            (s, s1 / w, s2 / (w * w))
        } else if r <= r3 {
            (1.0, 0.0, 0.0)
        } else {
            let w = r4 - r3;
            let (s, s1, s2) = smoothstep((r - r3) / w);
            (1.0 - s, -s1 / w, -s2 / (w * w))
        }
    }

    /// `(eta, |grad eta|, lap eta)` at radius `r > 0`.
    pub fn profile_with_laplacian(&self, r: f64) -> (f64, f64, f64) {
        let (e, e1, e2) = self.profile(r);
        (e, e1.abs(), e2 + (self.d as f64 - 1.0) * e1 / r)
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        self.profile(norm(x)).0
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        if r == 0.0 {
            return vec![0.0; x.len()];
        }
        let e1 = self.profile(r).1;
        x.iter().map(|&xi| e1 * xi / r).collect()
    }

    /// Second derivatives `d_i d_j eta`, row-major.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let r = norm(x);
        let (_, e1, e2) = self.profile(r);
        let mut h = vec![0.0; d * d];
        if r == 0.0 {
            return h;
        }
        for i in 0..d {
            for j in 0..d {
                let xx = x[i] * x[j] / (r * r);
                let kd = if i == j { 1.0 } else { 0.0 };
                h[i * d + j] = e2 * xx + e1 * (kd - xx) / r;
            }
        }
        h
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `-div(A grad eta) + b . grad eta` from analytic derivatives.
pub fn op_c_eta<F: SmoothField + ?Sized>(cutoff: &RadialCutoff, field: &F, x: &[f64]) -> Complex64 {
    let d = x.len();
    let grad = cutoff.gradient(x);
    let hess = cutoff.hessian(x);
    let mut a = vec![0.0; d * d];
    let mut da = vec![0.0; d * d];
    field.a_at(x, &mut a);
    let mut second = 0.0;
    for i in 0..d {
        field.da_at(x, i, &mut da);
        for j in 0..d {
            second += da[i * d + j] * grad[j] + a[i * d + j] * hess[i * d + j];
        }
    }
    let mut first = Complex64::new(0.0, 0.0);
    for (i, &g) in grad.iter().enumerate() {
        first += field.b_at(x, i) * g;
    }
    first - second
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffBoundReport {
    /// Smallest `RHS - |Op_c eta|^2` over the evaluated points.
    pub worst_slack: f64,
    /// Smallest `(RHS - LHS) / max(RHS, tiny)`.
    pub worst_relative_slack: f64,
    pub evaluated: usize,
    /// Sample indices skipped because the point is at the origin.
    pub flagged: Vec<usize>,
}

/// Pointwise estimate
/// `|Op_c eta|^2 <= 3 theta1^2 |lap eta|^2 + 3 theta1^2 (2d-1)^2 |grad eta|^2/|x|^2 + 3 (theta2 d^2 + |b|)^2 |grad eta|^2`.
pub fn check_pointwise_cutoff_bound<F: SmoothField + ?Sized>(
    cutoff: &RadialCutoff,
    field: &F,
    norm_b: f64,
    points: &[Vec<f64>],
) -> CutoffBoundReport {
    let d = field.dim() as f64;
    let (t1, t2) = (field.theta1(), field.theta2());
    let mut worst = f64::INFINITY;
    let mut worst_rel = f64::INFINITY;
    let mut flagged = Vec::new();
    let mut evaluated = 0;
    for (k, x) in points.iter().enumerate() {
        let r = norm(x);
        if r < 1e-12 {
            flagged.push(k);
            continue;
        }
        let (_, g, lap) = cutoff.profile_with_laplacian(r);
        let lhs = op_c_eta(cutoff, field, x).norm_sqr();
        let rhs = 3.0 * t1 * t1 * lap * lap
            + 3.0 * t1 * t1 * (2.0 * d - 1.0).powi(2) * g * g / (r * r)
            + 3.0 * (t2 * d * d + norm_b).powi(2) * g * g;
        worst = worst.min(rhs - lhs);
        worst_rel = worst_rel.min((rhs - lhs) / rhs.max(1e-300));
        evaluated += 1;
    }
    CutoffBoundReport {
        worst_slack: worst,
        worst_relative_slack: worst_rel,
        evaluated,
        flagged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanResult {
    pub h: f64,
    pub alpha: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Natural logs of both integrals.
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// Both sides divided by `exp(log_scale)`.
    pub lhs: f64,
    pub rhs: f64,
    pub log_scale: f64,
    pub ratio: f64,
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
}

/// Discrete Carleman inequality
/// `int (alpha rho^2 w^{1-2 alpha} grad u^T A grad u + alpha^3 w^{-1-2 alpha} u^2) <= C rho^4 int w^{2-2 alpha} |Op u|^2`
/// on the cell-centered grid of `[-rho, rho]^d`, evaluated in log space.
///
/// Cells within `2h` of the origin are excluded. `u` must vanish outside
/// `B(rho)` and near the origin.
#[allow(clippy::too_many_arguments)]
pub fn check_carleman_inequality<F: SmoothField + ?Sized>(
    u: &[f64],
    domain: &CubeDomain,
    field: &F,
    weight: &WeightFunction,
    alpha: f64,
    carleman_c: f64,
    alpha0: f64,
) -> Result<CarlemanResult> {
    let d = domain.d;
    if u.len() != domain.len() {
        return Err(UcError::ShapeMismatch {
            expected: domain.len(),
            found: u.len(),
        });
    }
    if (domain.l - 2.0 * weight.rho).abs() > 1e-12 * weight.rho {
        return Err(invalid("rho", "grid must cover [-rho, rho]^d"));
    }
    let thr = carleman_mu_threshold(d, field.theta1(), field.theta2(), weight.rho);
    if !(weight.mu > thr) {
        return Err(UcError::Inadmissible(format!("mu = {} <= {thr}", weight.mu)));
    }
    if !(alpha >= alpha0) {
        return Err(UcError::Inadmissible(format!("alpha = {alpha} < alpha0 = {alpha0}")));
    }
    let h = domain.h;
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = CarlemanResult {
        h,
        alpha,
        c: carleman_c,
        log_lhs: f64::NEG_INFINITY,
        log_rhs: f64::NEG_INFINITY,
        lhs: 0.0,
        rhs: 0.0,
        log_scale: 0.0,
        ratio: 0.0,
    };
    if umax == 0.0 {
        return Ok(out);
    }
    // normalizing by the maximum keeps power-of-two rescalings bit-exact
    let un: Vec<f64> = u.iter().map(|v| v / umax).collect();
    let mut m = vec![0usize; d];
    for (idx, &v) in un.iter().enumerate() {
        let x = domain.center(idx);
        let r = norm(&x);
        if v.abs() > 1e-12 && (r >= weight.rho || r < 2.0 * h) {
            return Err(UcError::Support(format!(
                "u = {v:e} at |x| = {r}; needs support in B(rho) away from the origin"
            )));
        }
    }
    let get = |m: &[usize], k: usize, delta: i64| -> f64 {
        let mk = m[k] as i64 + delta;
        if mk < 0 || mk >= domain.n as i64 {
            0.0
        } else {
            let idx = domain.flat_index(m) - m[k] * domain.stride(k) + mk as usize * domain.stride(k);
            un[idx]
        }
    };
    // centered derivative along j at the cell shifted by `delta` along i
    let d_shift = |m: &[usize], i: usize, delta: i64, j: usize| -> f64 {
        let mut mm = m.to_vec();
        let mi = mm[i] as i64 + delta;
        if mi < 0 || mi >= domain.n as i64 {
            return 0.0;
        }
        mm[i] = mi as usize;
        (get(&mm, j, 1) - get(&mm, j, -1)) / (2.0 * h)
    };
    // Op u at m only sees u on the 3^d block around m
    let touches_support = |m: &[usize]| -> bool {
        let mut mm = m.to_vec();
        (0..3usize.pow(d as u32)).any(|code| {
            let mut c = code;
            for k in 0..d {
                let mk = m[k] as i64 + (c % 3) as i64 - 1;
                c /= 3;
                if mk < 0 || mk >= domain.n as i64 {
                    return false;
                }
                mm[k] = mk as usize;
            }
            un[domain.flat_index(&mm)] != 0.0
        })
    };
    let log_vol = d as f64 * h.ln();
    let rho = weight.rho;
    // per cell: position, ln w, and the three log terms without the -2 alpha ln w factor
    let mut cells: Vec<(Vec<f64>, f64, [f64; 3])> = Vec::new();
    let mut a = vec![0.0; d * d];
    let mut af = vec![0.0; d * d];
    let mut xf = vec![0.0; d];
    for idx in 0..domain.len() {
        domain.multi_index(idx, &mut m);
        let x: Vec<f64> = m.iter().map(|&mk| domain.coord(mk)).collect();
        let r = norm(&x);
        if r < 2.0 * h || r >= rho {
            continue;
        }
        let uc = un[idx];
        if !touches_support(&m) {
            continue;
        }
        let mut grad = vec![0.0; d];
        for (j, g) in grad.iter_mut().enumerate() {
            *g = (get(&m, j, 1) - get(&m, j, -1)) / (2.0 * h);
        }
        field.a_at(&x, &mut a);
        // -div(A grad u): compact flux for a^{ii}, centered flux for a^{ij}
        let mut div = 0.0;
        for i in 0..d {
            for sgn in [1.0f64, -1.0] {
                xf.copy_from_slice(&x);
                xf[i] += sgn * 0.5 * h;
                field.a_at(&xf, &mut af);
                let du = if sgn > 0.0 { get(&m, i, 1) - uc } else { uc - get(&m, i, -1) };
                div += sgn * af[i * d + i] * du / (h * h);
            }
            for j in 0..d {
                if j == i {
                    continue;
                }
                let mut flux = 0.0;
                for (sgn, delta) in [(1.0f64, 1i64), (-1.0, -1)] {
                    xf.copy_from_slice(&x);
                    xf[i] += sgn * h;
                    field.a_at(&xf, &mut af);
                    flux += sgn * af[i * d + j] * d_shift(&m, i, delta, j);
                }
                div += flux / (2.0 * h);
            }
        }
        let mut op = Complex64::new(-div, 0.0);
        for (i, &g) in grad.iter().enumerate() {
            op += field.b_at(&x, i) * g;
        }
        op += field.c_at(&x) * uc;
        let lw = weight.log_weight(&x);
        let energy: f64 = (0..d)
            .map(|i| (0..d).map(|j| grad[i] * a[i * d + j] * grad[j]).sum::<f64>())
            .sum();
        let op2 = op.norm_sqr();
        let ninf = f64::NEG_INFINITY;
        let t = [
            if energy > 0.0 { log_vol + (alpha * rho * rho).ln() + lw + energy.ln() } else { ninf },
            if uc != 0.0 { log_vol + 3.0 * alpha.ln() - lw + 2.0 * uc.abs().ln() } else { ninf },
            if op2 > 0.0 { log_vol + (carleman_c * rho.powi(4)).ln() + 2.0 * lw + op2.ln() } else { ninf },
        ];
        if t.iter().any(|v| *v > ninf) {
            cells.push((x, lw, t));
        }
    }
    // The weight enters as w^{-2 alpha} with alpha up to ~1e27: factor out the
    // smallest weight and evaluate the remaining exponents as differences.
    if cells.is_empty() {
        return Ok(out);
    }
    let r_ref = cells
        .iter()
        .map(|(x, _, _)| weight.sigma(x) / rho)
        .fold(f64::INFINITY, f64::min);
    let lw_ref = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let mut lhs_terms = Vec::new();
    let mut rhs_terms = Vec::new();
    for (x, lw, t) in &cells {
        let naive = lw - lw_ref;
        let diff = if 2.0 * alpha * naive > 1e4 { naive } else { weight.log_weight_difference(x, r_ref) };
        let damp = -2.0 * alpha * diff;
        lhs_terms.push(t[0] + damp);
        lhs_terms.push(t[1] + damp);
        rhs_terms.push(t[2] + damp);
    }
    let shift = 2.0 * umax.ln() - 2.0 * alpha * lw_ref;
    let ll = log_sum_exp(&lhs_terms);
    let lr = log_sum_exp(&rhs_terms);
    out.log_lhs = ll + shift;
    out.log_rhs = lr + shift;
    out.log_scale = out.log_lhs.max(out.log_rhs);
    out.lhs = (out.log_lhs - out.log_scale).exp();
    out.rhs = (out.log_rhs - out.log_scale).exp();
    out.ratio = if lr == f64::NEG_INFINITY {
        if ll == f64::NEG_INFINITY { 0.0 } else { f64::INFINITY }
    } else {
        (ll - lr).exp()
    };
    Ok(out)
}

/// One randomized Carleman experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanTrial {
    pub seed: u64,
    pub d: usize,
    pub rho: f64,
    pub mu: f64,
    pub alpha0: f64,
    pub alpha: f64,
    pub field: AnalyticField,
    /// Bump `(1 - |x - c|^2/r^2)^4 (1 + 0.3 sin(k . x + phase))`.
    pub bump_center: Vec<f64>,
    pub bump_radius: f64,
    pub bump_wave: Vec<f64>,
    pub bump_phase: f64,
    pub norm_b: f64,
    pub norm_c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanTrialConfig {
    pub rho: f64,
    /// `None` picks `0.1 + 1.5 x` the admissibility threshold.
    pub mu: Option<f64>,
    pub alpha_multiplier: f64,
    pub max_theta1: f64,
    pub max_theta2: f64,
    pub max_norm_b: f64,
    pub max_norm_c: f64,
}

impl Default for CarlemanTrialConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            mu: None,
            alpha_multiplier: 1.0,
            max_theta1: 1.5,
            max_theta2: 0.01,
            max_norm_b: 0.2,
            max_norm_c: 0.3,
        }
    }
}

impl CarlemanTrial {
    pub fn generate(seed: u64, d: usize, cfg: &CarlemanTrialConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = cfg.rho;
        let theta1 = rng.gen_range(1.0..=cfg.max_theta1.max(1.0));
        let theta2 = if theta1 > 1.05 { rng.gen_range(0.0..=cfg.max_theta2) } else { 0.0 };
        let norm_b = rng.gen_range(0.0..=cfg.max_norm_b);
        // |c| must dominate div(b)/2 for the self-adjoint construction
        let period = 8.0 * rho;
        let min_c = norm_b * 2.0 * PI / period / 2.0 * (d as f64).sqrt();
        let norm_c = rng.gen_range(min_c..=cfg.max_norm_c.max(min_c));
        let targets = FieldTargets {
            theta1,
            theta2,
            norm_b,
            norm_c,
            norm_v: 0.0,
        };
        let field = synthesize_analytic(rng.gen(), d, period, &targets, BoundaryCondition::Periodic)?;
        let thr = carleman_mu_threshold(d, theta1, theta2, rho);
        let mu = cfg.mu.unwrap_or(0.1 + 1.5 * thr);
        let p = ModelParams {
            d,
            theta1,
            theta2,
            norm_b,
            norm_c,
            ..ModelParams::default()
        };
        let cc = carleman_constants(&p, rho, mu, mu1_of(theta1, mu))?;
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let dn = norm(&dir).max(1e-9);
        let dist = if d == 1 { rng.gen_range(0.33..=0.42) * rho } else { rng.gen_range(0.4..=0.55) * rho };
        let radius = if d == 1 { rng.gen_range(0.06..=0.08) * rho } else { rng.gen_range(0.15..=0.25) * rho };
        let bump_center: Vec<f64> = dir.iter().map(|v| v / dn * dist).collect();
        let bump_wave: Vec<f64> = (0..d).map(|_| rng.gen_range(-6.0..=6.0) / rho).collect();
        Ok(Self {
            seed,
            d,
            rho,
            mu,
            alpha0: cc.alpha0,
            alpha: cc.alpha0 * cfg.alpha_multiplier.max(1.0),
            field,
            bump_center,
            bump_radius: radius,
            bump_wave,
            bump_phase: rng.gen_range(0.0..2.0 * PI),
            norm_b,
            norm_c,
        })
    }

    pub fn carleman_c(&self) -> Result<f64> {
        let p = ModelParams {
            d: self.d,
            theta1: self.field.declared_theta1,
            theta2: self.field.declared_theta2,
            norm_b: self.norm_b,
            norm_c: self.norm_c,
            ..ModelParams::default()
        };
        Ok(carleman_constants(&p, self.rho, self.mu, mu1_of(p.theta1, self.mu))?.c)
    }

    pub fn bump(&self, x: &[f64]) -> f64 {
        let s2: f64 = x.iter().zip(&self.bump_center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            / (self.bump_radius * self.bump_radius);
        if s2 >= 1.0 {
            return 0.0;
        }
        let phase: f64 = x.iter().zip(&self.bump_wave).map(|(a, k)| a * k).sum::<f64>() + self.bump_phase;
        (1.0 - s2).powi(4) * (1.0 + 0.3 * phase.sin())
    }

    pub fn run(&self, h: f64) -> Result<CarlemanResult> {
        let domain = CubeDomain::new(self.d, 2.0 * self.rho, h, BoundaryCondition::Dirichlet)?;
        let u: Vec<f64> = (0..domain.len()).map(|i| self.bump(&domain.center(i))).collect();
        let w = WeightFunction::frozen(self.rho, self.mu, &self.field, &vec![0.0; self.d])?;
        check_carleman_inequality(&u, &domain, &self.field, &w, self.alpha, self.carleman_c()?, self.alpha0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Ein(x) = sum_{k>=1} (-1)^{k+1} x^k / (k k!)`.
    fn ein_series(x: f64) -> f64 {
        let mut term = 1.0;
        let mut s = 0.0;
        for k in 1..200 {
            term *= x / k as f64;
            let add = if k % 2 == 1 { term } else { -term } / k as f64;
            s += add;
            if add.abs() < 1e-18 * s.abs() {
                break;
            }
        }
        s
    }

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth > 50 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 0)
    }

    #[test]
    fn phi_against_two_oracles() {
        // mu = 1, r = 1
        let series = ein_series(1.0);
        let simp = simpson(&|t: f64| if t == 0.0 { 1.0 } else { (1.0 - (-t).exp()) / t }, 0.0, 1.0, 1e-14);
        assert!((series - simp).abs() < 1e-10);
        assert!((phi_exponent(1.0, 1.0) - series).abs() < 1e-12);
        let p = phi(1.0, 1.0).unwrap();
        assert!((p - (-series).exp()).abs() < 1e-12);
        for (r, mu) in [(0.3, 2.0), (2.0, 0.7), (5.0, 3.0), (1e-6, 1.0)] {
            let want = r * (-ein_series(mu * r)).exp();
            assert!((phi(r, mu).unwrap() - want).abs() < 1e-12, "r={r} mu={mu}");
        }
    }

    #[test]
    fn phi_basic_properties() {
        assert_eq!(phi(0.0, 1.0).unwrap(), 0.0);
        assert!(phi(-1.0, 1.0).is_err());
        // mu -> 0: phi(r) -> r
        assert!((phi(2.0, 1e-12).unwrap() - 2.0).abs() < 1e-10);
        let mu = 1.7;
        let mut last_ratio = 1.0;
        let mut last = 0.0;
        for k in 1..200 {
            let r = 0.05 * k as f64;
            let p = phi(r, mu).unwrap();
            assert!(p <= r && p > last);
            assert!(p / r <= last_ratio + 1e-15);
            if r >= 1.0 / mu {
                assert!(p >= 1.0 / (E * mu));
            }
            last = p;
            last_ratio = p / r;
        }
    }

    #[test]
    fn weight_examples() {
        let w = WeightFunction::new(2.0, 1.0, vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(w.weight(&[0.0, 0.0]), 0.0);
        assert!((w.sigma(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
        let w = WeightFunction::new(1.0, 0.5, vec![2.0, 0.3, 0.3, 0.8], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
            if norm(&x) >= 1.0 {
                continue;
            }
            let v = w.weight(&x);
            let (lo, hi) = w.bounds(&x);
            assert!(v >= lo - 1e-10 && v <= hi + 1e-10);
            assert!((w.log_weight(&x) - v.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_bounds_for_random_frozen_matrices() {
        for seed in 0..5 {
            let a0 = random_frozen_matrix(seed, 2, 1.4);
            let w = WeightFunction::new(0.8, 2.5, a0, 2).unwrap();
            assert!((w.theta1 - 1.4).abs() < 1e-12);
            let r = check_weight_bounds(&w, 2000, seed);
            assert!(r.min_slack() >= -1e-10 && r.far_points > 0, "{r:?}");
        }
    }

    #[test]
    fn smoothstep_derivative_peaks() {
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for k in 0..=100_000 {
            let (_, s1, s2) = smoothstep(k as f64 / 100_000.0);
            m1 = m1.max(s1.abs());
            m2 = m2.max(s2.abs());
        }
        assert!((m1 - 15.0 / 8.0).abs() < 1e-9);
        assert!((m2 - 10.0 / 3f64.sqrt()).abs() < 1e-6);
        let (s, s1, s2) = smoothstep(1.0);
        assert_eq!((s, s1, s2), (1.0, 0.0, 0.0));
    }

    #[test]
    fn cutoff_shape() {
        let c = build_radial_cutoff(2, 0.25, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(c.eta(&[0.0, 0.0]), 0.0);
        let mid = (0.125 + 2.0 * E) / 2.0;
        assert_eq!(c.eta(&[mid, 0.0]), 1.0);
        assert_eq!(c.eta(&[0.0, 2.0 * E + 0.6]), 0.0);
        assert!(c.eta(&[0.1, 0.0]) > 0.0 && c.eta(&[0.1, 0.0]) < 1.0);
        assert!(build_radial_cutoff(2, 0.6, 1.0, 0.5, 1.0).is_err());
        // normalized bound does not depend on delta
        let a = build_radial_cutoff(2, 0.05, 1.0, 0.5, 1.0).unwrap();
        let b = build_radial_cutoff(2, 0.1, 1.0, 0.5, 1.0).unwrap();
        assert!((a.measured_m - b.measured_m).abs() < 1e-6 * a.measured_m);
        // C^2: one-sided second differences agree across the joints
        for r in c.radii {
            let lo = c.profile(r - 1e-9);
            let hi = c.profile(r + 1e-9);
            assert!((lo.0 - hi.0).abs() < 1e-6 && (lo.1 - hi.1).abs() < 1e-4 && (lo.2 - hi.2).abs() < 1e-2);
        }
    }

    #[test]
    fn cutoff_gradient_matches_differences() {
        let c = build_radial_cutoff(3, 0.4, 0.5, 0.4, 1.0).unwrap();
        let x = [0.09, -0.1, 0.05];
        let g = c.gradient(&x);
        let hs = c.hessian(&x);
        for i in 0..3 {
            let mut p = x;
            let mut m = x;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            assert!((g[i] - (c.eta(&p) - c.eta(&m)) / 2e-6).abs() < 1e-5);
            let gp = c.gradient(&p);
            let gm = c.gradient(&m);
            for j in 0..3 {
                assert!((hs[i * 3 + j] - (gp[j] - gm[j]) / 2e-6).abs() < 1e-3);
            }
        }
        let lap: f64 = (0..3).map(|i| hs[i * 3 + i]).sum();
        assert!((lap - c.profile_with_laplacian(norm(&x)).2).abs() < 1e-9);
    }

    struct Radial {
        eps: f64,
    }

    impl SmoothField for Radial {
        fn dim(&self) -> usize {
            2
        }
        fn a_at(&self, x: &[f64], out: &mut [f64]) {
            let a = 1.0 + self.eps * norm(x).powi(2);
            out.copy_from_slice(&[a, 0.0, 0.0, a]);
        }
        fn da_at(&self, x: &[f64], k: usize, out: &mut [f64]) {
            let da = 2.0 * self.eps * x[k];
            out.copy_from_slice(&[da, 0.0, 0.0, da]);
        }
        fn b_at(&self, _x: &[f64], _i: usize) -> Complex64 {
            Complex64::new(0.0, 0.0)
        }
        fn c_at(&self, _x: &[f64]) -> Complex64 {
            Complex64::new(0.0, 0.0)
        }
        // sup over |x| <= 4
        fn theta1(&self) -> f64 {
            1.0 + 16.0 * self.eps
        }
        fn theta2(&self) -> f64 {
            8.0 * self.eps
        }
    }

    #[test]
    fn radial_field_oracle() {
        let field = Radial { eps: 0.1 };
        let c = build_radial_cutoff(2, 0.4, 0.5, 0.4, 1.0).unwrap();
        for r in [0.11, 0.15, 0.19, 2.8, 3.0] {
            let x = [r * 0.6, r * 0.8];
            let (_, e1, _) = c.profile(r);
            let lap = c.profile_with_laplacian(r).2;
            // -div(a grad eta) = -(a'(r) eta' + a lap eta), a = 1 + eps r^2
            let exact = -(2.0 * 0.1 * r * e1 + (1.0 + 0.1 * r * r) * lap);
            assert!((op_c_eta(&c, &field, &x).re - exact).abs() < 1e-9 * (1.0 + exact.abs()));
        }
        let pts: Vec<Vec<f64>> = (0..400).map(|k| vec![0.0005 + 0.01 * k as f64, 0.0]).collect();
        let rep = check_pointwise_cutoff_bound(&c, &field, 0.0, &pts);
        assert!(rep.worst_slack >= 0.0);
    }

    #[test]
    fn identity_cutoff_bound_and_b_growth() {
        let c = build_radial_cutoff(2, 0.4, 0.5, 0.4, 1.0).unwrap();
        let id = AnalyticField::identity(2);
        let pts: Vec<Vec<f64>> = (1..500).map(|k| vec![0.007 * k as f64, 0.003 * k as f64]).collect();
        let mut with_pts = pts.clone();
        with_pts.push(vec![0.0, 0.0]);
        let rep = check_pointwise_cutoff_bound(&c, &id, 0.0, &with_pts);
        assert!(rep.worst_slack >= 0.0);
        assert_eq!(rep.flagged, vec![pts.len()]);
        // b -> 2b: the lhs grows by at most 4 and so does the b part of the rhs
        let mut f1 = AnalyticField::identity(2);
        f1.b_re[0].push(crate::fields::ScalarMode {
            amplitude: 0.5,
            profile: crate::fields::Profile::Const,
        });
        let mut f2 = f1.clone();
        f2.b_re[0][0].amplitude = 1.0;
        let r1 = check_pointwise_cutoff_bound(&c, &f1, 0.5, &pts);
        let r2 = check_pointwise_cutoff_bound(&c, &f2, 1.0, &pts);
        assert!(r1.worst_slack >= 0.0 && r2.worst_slack >= 0.0);
    }

    #[test]
    fn carleman_zero_and_homogeneity() {
        let trial = CarlemanTrial::generate(3, 1, &CarlemanTrialConfig::default()).unwrap();
        let dom = CubeDomain::new(1, 2.0, 1.0 / 64.0, BoundaryCondition::Dirichlet).unwrap();
        let w = WeightFunction::frozen(1.0, trial.mu, &trial.field, &[0.0]).unwrap();
        let c = trial.carleman_c().unwrap();
        let zero = vec![0.0; dom.len()];
        let r0 = check_carleman_inequality(&zero, &dom, &trial.field, &w, trial.alpha, c, trial.alpha0).unwrap();
        assert_eq!((r0.lhs, r0.rhs, r0.ratio), (0.0, 0.0, 0.0));
        let u: Vec<f64> = (0..dom.len()).map(|i| trial.bump(&dom.center(i))).collect();
        let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let a = check_carleman_inequality(&u, &dom, &trial.field, &w, trial.alpha, c, trial.alpha0).unwrap();
        let b = check_carleman_inequality(&u2, &dom, &trial.field, &w, trial.alpha, c, trial.alpha0).unwrap();
        assert_eq!(a.ratio, b.ratio);
        assert!(((b.log_lhs - a.log_lhs) - 4f64.ln()).abs() < 1e-12 * a.log_lhs.abs().max(1.0));
        assert!(a.ratio <= 1.0);
    }

    #[test]
    fn carleman_preconditions() {
        let trial = CarlemanTrial::generate(5, 1, &CarlemanTrialConfig::default()).unwrap();
        let dom = CubeDomain::new(1, 2.0, 1.0 / 64.0, BoundaryCondition::Dirichlet).unwrap();
        let w = WeightFunction::frozen(1.0, trial.mu, &trial.field, &[0.0]).unwrap();
        let c = trial.carleman_c().unwrap();
        let mut u = vec![0.0; dom.len()];
        u[dom.len() / 2] = 1.0;
        assert!(matches!(
            check_carleman_inequality(&u, &dom, &trial.field, &w, trial.alpha, c, trial.alpha0),
            Err(UcError::Support(_))
        ));
        let u: Vec<f64> = (0..dom.len()).map(|i| trial.bump(&dom.center(i))).collect();
        assert!(check_carleman_inequality(&u, &dom, &trial.field, &w, 0.5 * trial.alpha0, c, trial.alpha0).is_err());
    }

    #[test]
    fn carleman_1d_bump_refinement() {
        let trial = CarlemanTrial::generate(11, 1, &CarlemanTrialConfig::default()).unwrap();
        let r: Vec<f64> = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]
            .iter()
            .map(|&h| trial.run(h).unwrap().ratio)
            .collect();
        assert!(r.iter().all(|&x| x <= 1.0));
        assert!((r[1] - r[2]).abs() <= (r[0] - r[1]).abs() + 1e-15, "{r:?}");
    }

    proptest::proptest! {
        #[test]
        fn weight_bounds_hold_for_random_frozen_matrices(
            seed in 0u64..10_000,
            d in 1usize..4,
            theta1 in 1.0f64..3.0,
            rho in 0.2f64..5.0,
            mu in 0.3f64..6.0,
        ) {
            let w = WeightFunction::new(rho, mu, random_frozen_matrix(seed, d, theta1), d).unwrap();
            let r = check_weight_bounds(&w, 500, seed);
            proptest::prop_assert!(r.min_slack() >= -1e-10, "{:?}", r);
        }
    }
}
