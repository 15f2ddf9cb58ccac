//! Explicit constants of the quantitative unique continuation estimates.
//!
//! Every function here is a pure evaluation of a closed-form expression. The
//! constants span hundreds of millions of orders of magnitude, so anything
//! that is a power of a small base is carried as a natural logarithm and only
//! exponentiated at the very end (`value` fields may legitimately underflow to
//! `0.0` while `log_value` stays exact).
//!
//! Free, dimension-dependent constants that are never fixed numerically live
//! in [`FreeConstants`]; every bound is only as true as that choice.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UcError};

/// Model and geometry parameters shared by all constant evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub d: usize,
    /// Ellipticity constant, `theta1 >= 1`.
    pub theta1: f64,
    /// Lipschitz constant of the second-order coefficients (units 1/length).
    pub theta2: f64,
    #[serde(rename = "norm_V")]
    pub norm_v: f64,
    pub norm_b: f64,
    pub norm_c: f64,
    /// Lattice scale of the equidistributed sequence.
    #[serde(rename = "G")]
    pub g: f64,
    pub delta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    /// Outer radius of the observation annulus in the local estimate.
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    /// Bound on the potential in the local estimate.
    #[serde(rename = "K_V")]
    pub k_v: f64,
    /// Bound on the mass ratio `||psi||_Omega^2 / ||psi||_Theta^2`.
    pub beta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            d: 1,
            theta1: 1.0,
            theta2: 0.0,
            norm_v: 0.0,
            norm_b: 0.0,
            norm_c: 0.0,
            g: 1.0,
            delta: 0.25,
            l: 3.0,
            r: 1.0,
            d0: 0.5,
            k_v: 0.0,
            beta: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d", "dimension must be positive"));
        }
        if !(self.theta1 >= 1.0) || !self.theta1.is_finite() {
            return Err(invalid("theta1", format!("must be >= 1, got {}", self.theta1)));
        }
        for (name, v) in [
            ("theta2", self.theta2),
            ("norm_V", self.norm_v),
            ("norm_b", self.norm_b),
            ("norm_c", self.norm_c),
            ("K_V", self.k_v),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("G", self.g),
            ("delta", self.delta),
            ("L", self.l),
            ("R", self.r),
            ("D0", self.d0),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.beta >= 1.0) {
            return Err(invalid("beta", format!("must be >= 1, got {}", self.beta)));
        }
        Ok(())
    }

    fn df(&self) -> f64 {
        self.d as f64
    }

    /// Parameters of the local estimate as instantiated by the sampling
    /// argument: `R = sqrt(d) + 2`, `D0 = R/2`, `beta = 2 T^d`, `K_V = ||V||`.
    /// Meaningful for unit lattice scale; apply [`scale_parameters`] first.
    pub fn sampling_local(&self) -> ModelParams {
        let r = self.df().sqrt() + 2.0;
        let t = side_length_t(self.d, self.theta1) as f64;
        ModelParams {
            r,
            d0: r / 2.0,
            beta: 2.0 * t.powi(self.d as i32),
            k_v: self.norm_v,
            ..*self
        }
    }
}

/// Dimension constants the estimates leave unspecified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeConstants {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    /// Cutoff derivative bound.
    #[serde(rename = "M")]
    pub m: f64,
    /// Absolute constant of the Cacciopoli inequality.
    #[serde(rename = "Cprime")]
    pub c_prime: f64,
}

impl Default for FreeConstants {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            m: 1.0,
            c_prime: 1.0,
        }
    }
}

impl FreeConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) {
            return Err(invalid("K1", "must be > 0"));
        }
        if !(self.k2 > 0.0) {
            return Err(invalid("K2", "must be > 0"));
        }
        if !(self.m >= 1.0) {
            return Err(invalid("M", "must be >= 1"));
        }
        if !(self.c_prime >= 1.0) {
            return Err(invalid("Cprime", "must be >= 1"));
        }
        Ok(())
    }
}

/// Which smallness condition to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonContext {
    /// `1 - 33 e d R theta1^6 theta2` (local estimate).
    Quc,
    /// `1 - 33 e d (sqrt d + 2) theta1^6 theta2` (unit lattice).
    SamplingUnit,
    /// `1 - 33 e d (sqrt d + 2) theta1^6 G theta2`.
    SamplingG,
}

/// Smallness parameter. A non-positive return means the hypothesis fails;
/// callers chart it rather than abort.
pub fn admissibility_epsilon(p: &ModelParams, context: EpsilonContext) -> f64 {
    let d = p.df();
    let base = 33.0 * E * d * p.theta1.powi(6) * p.theta2;
    match context {
        EpsilonContext::Quc => 1.0 - base * p.r,
        EpsilonContext::SamplingUnit => 1.0 - base * (d.sqrt() + 2.0),
        EpsilonContext::SamplingG => 1.0 - base * (d.sqrt() + 2.0) * p.g,
    }
}

/// Carleman parameters of the local estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub mu: f64,
    pub mu1: f64,
    pub rho: f64,
}

/// Weight-bound factor `mu1`: `exp(sqrt(theta1) mu)` below one, `e sqrt(theta1) mu` above.
pub fn mu1_of(theta1: f64, mu: f64) -> f64 {
    let s = theta1.sqrt() * mu;
    if s <= 1.0 {
        s.exp()
    } else {
        E * s
    }
}

/// Threshold the Carleman parameter must exceed: `33 d theta1^{11/2} theta2 rho`.
pub fn carleman_mu_threshold(d: usize, theta1: f64, theta2: f64, rho: f64) -> f64 {
    33.0 * d as f64 * theta1.powf(5.5) * theta2 * rho
}

pub fn carleman_mu_rho(p: &ModelParams, eps0: f64) -> Result<CarlemanParams> {
    if !(eps0 > 0.0) {
        return Err(UcError::Inadmissible(format!("epsilon_0 = {eps0} <= 0")));
    }
    let rho = 2.0 * E * p.theta1 * p.r + 2.0 * p.d0;
    let mu = carleman_mu_threshold(p.d, p.theta1, p.theta2, rho)
        + rho * eps0 / (2.0 * E * p.r * p.theta1.sqrt());
    Ok(CarlemanParams {
        mu,
        mu1: mu1_of(p.theta1, mu),
        rho,
    })
}

/// Upper-bound constants of the Carleman estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanConstants {
    /// `C_mu = mu - 33 d theta1^{11/2} theta2 rho`.
    pub c_mu: f64,
    pub c_tilde: f64,
    pub alpha0_tilde: f64,
    /// `C = 6 C~`.
    pub c: f64,
    pub alpha0: f64,
}

/// `C = 6 C~` and `alpha0 = max(alpha0~, C rho^2 |b|^2 theta1^{3/2}, C^{1/3} rho^{4/3} |c|^{2/3} sqrt(theta1))`.
///
/// `norm_b`/`norm_c` are taken from `p`; the C~ and alpha0~ bounds only
/// depend on `d`, `theta1`, `rho theta2` and `mu`.
pub fn carleman_constants(p: &ModelParams, rho: f64, mu: f64, mu1: f64) -> Result<CarlemanConstants> {
    let d = p.df();
    let t1 = p.theta1;
    let c_mu = mu - carleman_mu_threshold(p.d, t1, p.theta2, rho);
    if !(c_mu > 0.0) {
        return Err(UcError::Inadmissible(format!(
            "C_mu = {c_mu} <= 0: mu must exceed 33 d theta1^(11/2) theta2 rho"
        )));
    }
    let st = t1.sqrt();
    let c_tilde = 2.0 * d * d * t1.powi(8) * (4.0 * mu * st).exp() * mu1.powi(4)
        * (3.0 * mu * mu + (9.0 * rho * p.theta2 + 3.0) * mu + 1.0)
        / c_mu;
    let alpha0_tilde = 11.0 * d.powi(4) * t1.powf(16.5) * (6.0 * mu * st).exp() * mu1.powi(6)
        * (3.0 * rho * p.theta2 + mu + 1.0).powi(2)
        * (1.0 + mu * (mu + 1.0) / c_mu);
    let c = 6.0 * c_tilde;
    let alpha0 = alpha0_tilde
        .max(c * rho * rho * p.norm_b * p.norm_b * t1.powf(1.5))
        .max(c.cbrt() * rho.powf(4.0 / 3.0) * p.norm_c.powf(2.0 / 3.0) * st);
    Ok(CarlemanConstants {
        c_mu,
        c_tilde,
        alpha0_tilde,
        c,
        alpha0,
    })
}

/// Cacciopoli prefactor `2|V|^2 + 1 + 2|b|^2 + 8 theta1^2 C'/r^2 + 2|c|`.
pub fn cacciopoli_prefactor(
    r: f64,
    norm_v: f64,
    norm_b: f64,
    norm_c: f64,
    theta1: f64,
    c_prime: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("r", format!("Cacciopoli radius must be > 0, got {r}")));
    }
    Ok(2.0 * norm_v * norm_v
        + 1.0
        + 2.0 * norm_b * norm_b
        + 8.0 * theta1 * theta1 * c_prime / (r * r)
        + 2.0 * norm_c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaStar {
    pub alpha1: f64,
    pub alpha3: f64,
    pub alpha_star: f64,
}

/// `alpha1`, `alpha3` (clamped at 0) and `alpha* = max(alpha0, alpha1, 1, alpha3)`.
///
/// The potential bound of the local estimate is `p.k_v`.
pub fn alpha_star(
    p: &ModelParams,
    fc: &FreeConstants,
    carleman_c: f64,
    alpha0: f64,
    cp: &CarlemanParams,
) -> Result<AlphaStar> {
    let (rho, mu) = (cp.rho, cp.mu);
    let t1 = p.theta1;
    let d = p.df();
    let q = rho / (t1.sqrt() * E * p.r * mu);
    if !(q > 1.0) {
        return Err(UcError::Inadmissible(format!(
            "rho / (sqrt(theta1) e R mu) = {q} <= 1"
        )));
    }
    let alpha1 = (16.0 * rho.powi(4) * carleman_c * p.k_v * p.k_v * t1.powf(1.5)).cbrt();
    let cac = cacciopoli_prefactor(p.d0 / 2.0, p.k_v, p.norm_b, p.norm_c, t1, fc.c_prime)?;
    let bracket = 3.0 * t1 * t1
        + 3.0 * t1 * t1 * d * d / (2.0 * E * t1 * p.r).powi(2)
        + 3.0 * (p.theta2 * d * d + p.norm_b).powi(2)
        + 4.0 * t1 * cac;
    let log_arg = (8.0 * carleman_c * rho.powi(3) * t1.sqrt() * p.r * p.beta / (E * E * mu * mu)).ln()
        + 4.0 * (fc.m / p.d0).ln()
        + bracket.ln();
    let alpha3 = if log_arg > 0.0 {
        log_arg / (2.0 * q.ln())
    } else {
        0.0
    };
    Ok(AlphaStar {
        alpha1,
        alpha3,
        alpha_star: alpha0.max(alpha1).max(1.0).max(alpha3),
    })
}

/// Every intermediate of the local (qUC) constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QucConstants {
    pub epsilon0: f64,
    pub carleman: CarlemanParams,
    pub constants: CarlemanConstants,
    pub alphas: AlphaStar,
    pub cac_delta_half: f64,
    pub cac_d0_half: f64,
    /// Prefactor in front of the power of delta.
    pub log_prefactor: f64,
    pub log_value: f64,
    pub value: f64,
}

/// The local unique continuation constant, evaluated in log space.
pub fn c_quc(p: &ModelParams, fc: &FreeConstants) -> Result<QucConstants> {
    p.validate()?;
    fc.validate()?;
    if !(p.delta < 2.0 * p.r) {
        return Err(invalid("delta", format!("must lie in (0, 2R), got {}", p.delta)));
    }
    let eps0 = admissibility_epsilon(p, EpsilonContext::Quc);
    let cp = carleman_mu_rho(p, eps0)?;
    let cc = carleman_constants(p, cp.rho, cp.mu, cp.mu1)?;
    let alphas = alpha_star(p, fc, cc.c, cc.alpha0, &cp)?;
    let t1 = p.theta1;
    let d = p.df();
    let delta = p.delta;
    let cac_delta_half = cacciopoli_prefactor(delta / 2.0, p.k_v, p.norm_b, p.norm_c, t1, fc.c_prime)?;
    let cac_d0_half = cacciopoli_prefactor(p.d0 / 2.0, p.k_v, p.norm_b, p.norm_c, t1, fc.c_prime)?;
    let denom = 3.0 * t1 * t1
        + 768.0 * t1 * t1 * d * d / (delta * delta)
        + 3.0 * (p.theta2 * d * d + p.norm_b).powi(2)
        + 4.0 * t1 * cac_delta_half;
    let log_prefactor = (4.0 * cp.mu1 * cp.mu1 * t1.sqrt() * delta * delta).ln()
        - (3.0 * p.r * cp.rho * cc.c).ln()
        - 4.0 * fc.m.ln()
        - denom.ln();
    let log_value =
        log_prefactor + 2.0 * alphas.alpha_star * (delta / (4.0 * cp.mu1 * t1 * p.r)).ln();
    Ok(QucConstants {
        epsilon0: eps0,
        carleman: cp,
        constants: cc,
        alphas,
        cac_delta_half,
        cac_d0_half,
        log_prefactor,
        log_value,
        value: log_value.exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBound {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub exponent: f64,
    pub log_value: f64,
    pub value: f64,
}

/// Closed-form lower bound on the local constant, valid for `2 D0 = R >= 1`,
/// `delta < 2`, `epsilon0 > 0`.
pub fn c_quc_lower_bound(p: &ModelParams, fc: &FreeConstants) -> Result<PowerBound> {
    p.validate()?;
    fc.validate()?;
    let tol = 1e-12 * p.r.max(1.0);
    if (2.0 * p.d0 - p.r).abs() > tol || p.r < 1.0 - tol {
        return Err(invalid("R", format!("regime requires 2 D0 = R >= 1 (R = {}, D0 = {})", p.r, p.d0)));
    }
    if !(p.delta < 2.0) {
        return Err(invalid("delta", "regime requires delta < 2"));
    }
    let eps0 = admissibility_epsilon(p, EpsilonContext::Quc);
    if !(eps0 > 0.0) {
        return Err(UcError::Inadmissible(format!("epsilon_0 = {eps0} <= 0")));
    }
    let t1 = p.theta1;
    let t2 = p.theta2;
    let c1 = fc.k1 * t1.powf(-15.5) * (-10.0 * t1).exp() / ((1.0 + t2) * (t1 + t2 * t2));
    let c2 = 10.0 * E * t1 * t1;
    let c3 = fc.k1 * t1.powi(25) * (15.0 * t1).exp() * (1.0 + t2).powi(2);
    let exponent = c3 / eps0
        * (1.0 + p.k_v.powf(2.0 / 3.0) + p.norm_b * p.norm_b + p.norm_c.powf(2.0 / 3.0))
        * p.r.powi(3)
        - eps0.ln()
        + p.beta.ln();
    let log_value = c1.ln() + exponent * (p.delta / (c2 * p.r)).ln();
    Ok(PowerBound {
        c1,
        c2,
        c3,
        exponent,
        log_value,
        value: log_value.exp(),
    })
}

/// The scale-free constant and its ingredients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfucConstant {
    pub epsilon2: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// Power of `delta / (G D2)`.
    pub exponent: f64,
    pub log_value: f64,
    pub value: f64,
}

fn sfuc_with_zero_order(p: &ModelParams, fc: &FreeConstants, zero_order: f64) -> Result<SfucConstant> {
    p.validate()?;
    fc.validate()?;
    let eps2 = admissibility_epsilon(p, EpsilonContext::SamplingG);
    if !(eps2 > 0.0) {
        return Err(UcError::Inadmissible(format!("epsilon_2 = {eps2} <= 0")));
    }
    if !(p.delta < p.g / 2.0) {
        return Err(invalid("delta", format!("must lie in (0, G/2), got {} with G = {}", p.delta, p.g)));
    }
    let (t1, g) = (p.theta1, p.g);
    let gt2 = g * p.theta2;
    let d1 = fc.k2 * t1.powf(-15.5 - p.df()) * (-10.0 * t1).exp() / ((1.0 + gt2) * (t1 + gt2 * gt2));
    let d2 = fc.k2 * t1 * t1;
    let d3 = fc.k2 * t1.powi(25) * (15.0 * t1).exp() * (1.0 + gt2).powi(2);
    let g43 = g.powf(4.0 / 3.0);
    let exponent = d3 / eps2
        * (1.0
            + g43 * zero_order.powf(2.0 / 3.0)
            + g * g * p.norm_b * p.norm_b
            + g43 * p.norm_c.powf(2.0 / 3.0))
        - eps2.ln();
    let log_value = d1.ln() + exponent * (p.delta / (g * d2)).ln();
    Ok(SfucConstant {
        epsilon2: eps2,
        d1,
        d2,
        d3,
        exponent,
        log_value,
        value: log_value.exp(),
    })
}

/// The scale-free unique continuation constant for `(G, delta)`-equidistributed sets.
pub fn c_sfuc(p: &ModelParams, fc: &FreeConstants) -> Result<SfucConstant> {
    sfuc_with_zero_order(p, fc, p.norm_v)
}

/// Admissible half-width of the spectral window at energy `e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaWindow {
    pub log_gamma: f64,
    pub gamma: f64,
    /// The scale-free constant with `|E|` in place of the potential norm;
    /// the projector bound is half of it.
    pub c_sfuc_energy: SfucConstant,
}

pub fn gamma_window(p: &ModelParams, fc: &FreeConstants, e: f64) -> Result<GammaWindow> {
    let c = sfuc_with_zero_order(p, fc, e.abs())?;
    let log_gamma = 0.5 * (c.log_value - 4.0 * p.g.ln());
    Ok(GammaWindow {
        log_gamma,
        gamma: log_gamma.exp(),
        c_sfuc_energy: c,
    })
}

/// Side length of the mass-comparison cube, `ceil(2 (sqrt d + 2)(2 e theta1 + 1))`.
pub fn side_length_t(d: usize, theta1: f64) -> u64 {
    (2.0 * ((d as f64).sqrt() + 2.0) * (2.0 * E * theta1 + 1.0)).ceil() as u64
}

/// Rescale to unit lattice: `x -> G x` maps the problem onto `G = 1`.
pub fn scale_parameters(p: &ModelParams) -> ModelParams {
    let g = p.g;
    ModelParams {
        g: 1.0,
        delta: p.delta / g,
        l: p.l / g,
        theta2: g * p.theta2,
        norm_b: g * p.norm_b,
        norm_c: g * g * p.norm_c,
        norm_v: g * g * p.norm_v,
        k_v: g * g * p.k_v,
        ..*p
    }
}

/// Flat audit record of every constant along the sampling path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UcConstantReport {
    pub params: ModelParams,
    pub free_constants: FreeConstants,
    /// `epsilon_2`; non-positive means the sampling hypothesis fails.
    pub epsilon: f64,
    pub admissible: bool,
    #[serde(rename = "T")]
    pub t: u64,
    pub local_params: Option<ModelParams>,
    pub mu: Option<f64>,
    pub mu1: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "carleman_C")]
    pub carleman_c: Option<f64>,
    pub carleman_alpha0: Option<f64>,
    pub c_mu: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: f64,
    pub alpha3: Option<f64>,
    pub alpha_star: Option<f64>,
    pub cac_delta_half: Option<f64>,
    #[serde(rename = "cac_D0_half")]
    pub cac_d0_half: Option<f64>,
    pub c_quc: Option<f64>,
    pub log_c_quc: Option<f64>,
    pub c_quc_lower: Option<f64>,
    pub log_c_quc_lower: Option<f64>,
    pub c_sfuc: Option<f64>,
    pub log_c_sfuc: Option<f64>,
    pub c_sfuc_exponent: Option<f64>,
    pub energy: f64,
    pub gamma: Option<f64>,
    pub log_gamma: Option<f64>,
    pub notes: Vec<String>,
}

/// Evaluate the whole chain for the sampling theorem at energy `energy`.
///
/// The local estimate is evaluated on the unit-scale problem with
/// `R = sqrt(d) + 2`, `D0 = R/2`, `beta = 2 T^d`. Inadmissible configurations
/// produce a report with `admissible = false` and the failing stages left
/// empty.
pub fn uc_report(p: &ModelParams, fc: &FreeConstants, energy: f64) -> Result<UcConstantReport> {
    p.validate()?;
    fc.validate()?;
    let epsilon = admissibility_epsilon(p, EpsilonContext::SamplingG);
    let mut report = UcConstantReport {
        params: *p,
        free_constants: *fc,
        epsilon,
        admissible: epsilon > 0.0,
        t: side_length_t(p.d, p.theta1),
        local_params: None,
        mu: None,
        mu1: None,
        rho: None,
        carleman_c: None,
        carleman_alpha0: None,
        c_mu: None,
        alpha1: None,
        alpha2: 1.0,
        alpha3: None,
        alpha_star: None,
        cac_delta_half: None,
        cac_d0_half: None,
        c_quc: None,
        log_c_quc: None,
        c_quc_lower: None,
        log_c_quc_lower: None,
        c_sfuc: None,
        log_c_sfuc: None,
        c_sfuc_exponent: None,
        energy,
        gamma: None,
        log_gamma: None,
        notes: Vec::new(),
    };
    if !report.admissible {
        report
            .notes
            .push(format!("epsilon_2 = {epsilon} <= 0: sampling hypothesis violated"));
        return Ok(report);
    }
    let local = scale_parameters(p).sampling_local();
    report.local_params = Some(local);
    match c_quc(&local, fc) {
        Ok(q) => {
            report.mu = Some(q.carleman.mu);
            report.mu1 = Some(q.carleman.mu1);
            report.rho = Some(q.carleman.rho);
            report.carleman_c = Some(q.constants.c);
            report.carleman_alpha0 = Some(q.constants.alpha0);
            report.c_mu = Some(q.constants.c_mu);
            report.alpha1 = Some(q.alphas.alpha1);
            report.alpha3 = Some(q.alphas.alpha3);
            report.alpha_star = Some(q.alphas.alpha_star);
            report.cac_delta_half = Some(q.cac_delta_half);
            report.cac_d0_half = Some(q.cac_d0_half);
            report.c_quc = Some(q.value);
            report.log_c_quc = Some(q.log_value);
        }
        Err(e) => report.notes.push(format!("local constant unavailable: {e}")),
    }
    match c_quc_lower_bound(&local, fc) {
        Ok(b) => {
            report.c_quc_lower = Some(b.value);
            report.log_c_quc_lower = Some(b.log_value);
        }
        Err(e) => report.notes.push(format!("lower bound unavailable: {e}")),
    }
    match c_sfuc(p, fc) {
        Ok(s) => {
            report.c_sfuc = Some(s.value);
            report.log_c_sfuc = Some(s.log_value);
            report.c_sfuc_exponent = Some(s.exponent);
        }
        Err(e) => report.notes.push(format!("C_sfUC unavailable: {e}")),
    }
    match gamma_window(p, fc, energy) {
        Ok(g) => {
            report.gamma = Some(g.gamma);
            report.log_gamma = Some(g.log_gamma);
        }
        Err(e) => report.notes.push(format!("gamma unavailable: {e}")),
    }
    Ok(report)
}
