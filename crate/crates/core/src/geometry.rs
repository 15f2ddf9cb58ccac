//! Cubes, equidistributed sequences, observation masks and the
//! dominating/weak site decomposition.
//!
//! Grids are cell-centered: cell `m` along an axis covers
//! `[-L/2 + m h, -L/2 + (m+1) h]` and is represented by its center.
//! Flat indices are row-major with the last axis fastest.

use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UcError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Periodic,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
            BoundaryCondition::Periodic => write!(f, "periodic"),
        }
    }
}

/// Returns `x / y` as an integer when it is one up to rounding.
pub fn integer_ratio(x: f64, y: f64) -> Option<usize> {
    let r = x / y;
    let k = r.round();
    if k >= 1.0 && (r - k).abs() <= 1e-9 * k.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

/// The open cube `(-L/2, L/2)^d` with a cell-centered tensor grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeDomain {
    pub d: usize,
    pub l: f64,
    pub h: f64,
    /// Cells per axis.
    pub n: usize,
    pub bc: BoundaryCondition,
}

impl CubeDomain {
    pub fn new(d: usize, l: f64, h: f64, bc: BoundaryCondition) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "dimension must be positive"));
        }
        if !(l > 0.0) || !(h > 0.0) {
            return Err(invalid("h", "L and h must be positive"));
        }
        let n = integer_ratio(l, h)
            .ok_or_else(|| invalid("h", format!("L/h = {} is not a positive integer", l / h)))?;
        Ok(Self { d, l, h, n, bc })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    pub fn coord(&self, m: usize) -> f64 {
        -self.l / 2.0 + (m as f64 + 0.5) * self.h
    }

    /// Coordinate of a possibly out-of-range cell index (no folding).
    pub fn coord_ext(&self, m: i64) -> f64 {
        -self.l / 2.0 + (m as f64 + 0.5) * self.h
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.d).rev() {
            out[k] = idx % self.n;
            idx /= self.n;
        }
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().fold(0, |acc, &mk| acc * self.n + mk)
    }

    /// Stride of axis `k` in the flat layout.
    pub fn stride(&self, k: usize) -> usize {
        self.n.pow((self.d - 1 - k) as u32)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mut m = vec![0; self.d];
        self.multi_index(idx, &mut m);
        m.iter().map(|&mk| self.coord(mk)).collect()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Map an unbounded cell index along one axis onto the cube.
    ///
    /// Periodic: wrap modulo `n`. Dirichlet: repeated reflection through the
    /// faces (period `2n`); the flag reports an odd number of reflections,
    /// so callers multiply by the quantity's parity for this axis.
    pub fn fold(&self, m: i64) -> (usize, bool) {
        let n = self.n as i64;
        match self.bc {
            BoundaryCondition::Periodic => (m.rem_euclid(n) as usize, false),
            BoundaryCondition::Dirichlet => {
                let r = m.rem_euclid(2 * n);
                if r < n {
                    (r as usize, false)
                } else {
                    ((2 * n - 1 - r) as usize, true)
                }
            }
        }
    }

    /// Discrete squared norm `h^d sum |psi|^2`.
    pub fn norm_sq<T: Copy + Into<num_complex::Complex64>>(&self, psi: &[T]) -> f64 {
        self.cell_volume() * psi.iter().map(|&v| v.into().norm_sqr()).sum::<f64>()
    }

    /// Discrete squared norm over the cells selected by `mask`.
    pub fn masked_norm_sq<T: Copy + Into<num_complex::Complex64>>(&self, psi: &[T], mask: &[bool]) -> f64 {
        self.cell_volume()
            * psi
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v.into().norm_sqr())
                .sum::<f64>()
    }

    /// Number of `G`-cells per axis, requiring `L/G` to be an odd integer.
    pub fn sites_per_axis(&self, g: f64) -> Result<usize> {
        match integer_ratio(self.l, g) {
            Some(k) if k % 2 == 1 => Ok(k),
            _ => Err(invalid("L", format!("L/G = {} must be an odd positive integer", self.l / g))),
        }
    }

    /// Cells per `G`-cell per axis.
    pub fn cells_per_site(&self, g: f64) -> Result<usize> {
        integer_ratio(g, self.h).ok_or_else(|| {
            UcError::Incommensurate(format!("G/h = {} is not an integer", g / self.h))
        })
    }
}

/// Integer lattice coordinates of a `G`-cell, centered so that the middle cell is `0`.
pub type Site = Vec<i64>;

/// Flat enumeration of `(L/G)^d` sites, row-major.
pub fn sites(d: usize, per_axis: usize) -> Vec<Site> {
    let half = (per_axis as i64 - 1) / 2;
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut i| {
            let mut s = vec![0i64; d];
            for k in (0..d).rev() {
                s[k] = (i % per_axis) as i64 - half;
                i /= per_axis;
            }
            s
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seed")]
pub enum SequenceMode {
    Centered,
    UniformRandom(u64),
}

/// One ball center per `G`-cell of the cube, each ball inside its cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistributedSequence {
    pub d: usize,
    #[serde(rename = "G")]
    pub g: f64,
    pub delta: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub mode: SequenceMode,
    /// Site `j` (in units of `G`) and its center `z_j`.
    pub sites: Vec<Site>,
    pub centers: Vec<Vec<f64>>,
}

pub fn generate_sequence(d: usize, g: f64, delta: f64, l: f64, mode: SequenceMode) -> Result<EquidistributedSequence> {
    if !(g > 0.0) {
        return Err(invalid("G", "must be positive"));
    }
    if !(delta > 0.0 && delta < g / 2.0) {
        return Err(invalid("delta", format!("need 0 < delta < G/2, got delta = {delta}, G = {g}")));
    }
    let per_axis = match integer_ratio(l, g) {
        Some(k) if k % 2 == 1 => k,
        _ => return Err(invalid("L", format!("L/G = {} must be an odd positive integer", l / g))),
    };
    let sites = sites(d, per_axis);
    let centers = match mode {
        SequenceMode::Centered => sites.iter().map(|s| s.iter().map(|&k| k as f64 * g).collect()).collect(),
        SequenceMode::UniformRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let half = g / 2.0 - delta;
            sites
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|&k| k as f64 * g + if half > 0.0 { rng.gen_range(-half..=half) } else { 0.0 })
                        .collect()
                })
                .collect()
        }
    };
    Ok(EquidistributedSequence {
        d,
        g,
        delta,
        l,
        mode,
        sites,
        centers,
    })
}

impl EquidistributedSequence {
    /// `G/2 - delta - max_j |z_j - j G|_inf`; nonnegative iff every ball sits in its cell.
    pub fn containment_margin(&self) -> f64 {
        let worst = self
            .sites
            .iter()
            .zip(&self.centers)
            .flat_map(|(s, z)| s.iter().zip(z).map(|(&k, &zk)| (zk - k as f64 * self.g).abs()))
            .fold(0.0, f64::max);
        self.g / 2.0 - self.delta - worst
    }

    /// Indicator of `S_{delta,L}` on the grid (membership by cell center).
    pub fn mask(&self, domain: &CubeDomain) -> Result<Vec<bool>> {
        if domain.d != self.d || (domain.l - self.l).abs() > 1e-12 * self.l {
            return Err(UcError::ShapeMismatch {
                expected: self.d,
                found: domain.d,
            });
        }
        let per_axis = integer_ratio(self.l, self.g).unwrap_or(1);
        let mut m = vec![0usize; self.d];
        let r2 = self.delta * self.delta;
        Ok((0..domain.len())
            .map(|i| {
                domain.multi_index(i, &mut m);
                let x: Vec<f64> = m.iter().map(|&mk| domain.coord(mk)).collect();
                // balls never leave their own cell, so only that one is tested
                let j = x.iter().fold(0usize, |acc, &xk| {
                    let c = (((xk + self.l / 2.0) / self.g).floor() as i64).clamp(0, per_axis as i64 - 1);
                    acc * per_axis + c as usize
                });
                let z = &self.centers[j];
                x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r2
            })
            .collect())
    }
}

/// Shift the first coordinate of a site by two.
pub fn near_neighbor(k: &[i64]) -> Site {
    let mut out = k.to_vec();
    out[0] += 2;
    out
}

/// [`near_neighbor`] on the `L/G`-periodic site lattice, centered coordinates.
pub fn near_neighbor_periodic(k: &[i64], per_axis: usize) -> Site {
    let half = (per_axis as i64 - 1) / 2;
    let mut out = near_neighbor(k);
    out[0] = (out[0] + half).rem_euclid(per_axis as i64) - half;
    out
}

/// Sums of `f` over every length-`w` run of consecutive folded indices
/// starting at `starts`, along one axis of a flat array.
fn box_sum_axis(
    f: &[f64],
    shape: &[usize],
    axis: usize,
    starts: &[i64],
    w: usize,
    fold: &dyn Fn(i64) -> usize,
    period: usize,
) -> (Vec<f64>, Vec<usize>) {
    let n_axis = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut new_shape = shape.to_vec();
    new_shape[axis] = starts.len();
    let mut out = vec![0.0; outer * starts.len() * inner];
    let mut prefix = vec![0.0; period + 1];
    for o in 0..outer {
        for i in 0..inner {
            for p in 0..period {
                let m = fold(p as i64);
                debug_assert!(m < n_axis);
                prefix[p + 1] = prefix[p] + f[(o * n_axis + m) * inner + i];
            }
            let total = prefix[period];
            for (si, &s) in starts.iter().enumerate() {
                let a = s.rem_euclid(period as i64) as usize;
                let full = w / period;
                let rem = w % period;
                let mut v = full as f64 * total;
                if a + rem <= period {
                    v += prefix[a + rem] - prefix[a];
                } else {
                    v += total - prefix[a] + prefix[a + rem - period];
                }
                out[(o * starts.len() + si) * inner + i] = v;
            }
        }
    }
    (out, new_shape)
}

/// Discrete mass of the extended `|psi|^2` over every site window of side `t_cells`
/// cells, centered on the site's own cube. Windows may exceed the domain;
/// the function is extended by the domain's boundary condition.
pub fn window_masses(domain: &CubeDomain, density: &[f64], g: f64, window_sites: u64) -> Result<Vec<f64>> {
    let per_axis = domain.sites_per_axis(g)?;
    let q = domain.cells_per_site(g)?;
    let t = window_sites as usize;
    if (q * (t + 1)) % 2 != 0 {
        return Err(UcError::Incommensurate(format!(
            "window of {t} sites is not aligned with {q} cells per site"
        )));
    }
    let w = t * q;
    let offset = (q as i64 - w as i64) / 2;
    let starts: Vec<i64> = (0..per_axis).map(|j| (j * q) as i64 + offset).collect();
    let period = match domain.bc {
        BoundaryCondition::Periodic => domain.n,
        BoundaryCondition::Dirichlet => 2 * domain.n,
    };
    let fold = |m: i64| domain.fold(m).0;
    let mut shape = vec![domain.n; domain.d];
    let mut cur = density.to_vec();
    for axis in 0..domain.d {
        let (next, s) = box_sum_axis(&cur, &shape, axis, &starts, w, &fold, period);
        cur = next;
        shape = s;
    }
    let vol = domain.cell_volume();
    Ok(cur.into_iter().map(|v| v * vol).collect())
}

/// Mass of each `G`-cell.
pub fn site_masses(domain: &CubeDomain, density: &[f64], g: f64) -> Result<Vec<f64>> {
    window_masses(domain, density, g, 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteDecomposition {
    #[serde(rename = "T")]
    pub t: u64,
    pub sites: Vec<Site>,
    pub dominating: Vec<bool>,
    pub site_mass: Vec<f64>,
    pub window_mass: Vec<f64>,
}

impl SiteDecomposition {
    pub fn dominating_mass(&self) -> f64 {
        self.site_mass.iter().zip(&self.dominating).filter(|(_, &d)| d).map(|(m, _)| m).sum()
    }

    pub fn weak_mass(&self) -> f64 {
        self.site_mass.iter().zip(&self.dominating).filter(|(_, &d)| !d).map(|(m, _)| m).sum()
    }
}

/// A site is dominating when its cube carries at least `1/(2 T^d)` of its
/// `T`-window's mass; ties count as dominating.
pub fn classify_sites<T: Copy + Into<num_complex::Complex64>>(
    domain: &CubeDomain,
    psi: &[T],
    g: f64,
    t: u64,
) -> Result<SiteDecomposition> {
    if psi.len() != domain.len() {
        return Err(UcError::ShapeMismatch {
            expected: domain.len(),
            found: psi.len(),
        });
    }
    let density: Vec<f64> = psi.iter().map(|&v| v.into().norm_sqr()).collect();
    let site_mass = site_masses(domain, &density, g)?;
    let window_mass = window_masses(domain, &density, g, t)?;
    let frac = 1.0 / (2.0 * (t as f64).powi(domain.d as i32));
    let dominating = site_mass.iter().zip(&window_mass).map(|(&s, &w)| s >= frac * w).collect();
    Ok(SiteDecomposition {
        t,
        sites: sites(domain.d, domain.sites_per_axis(g)?),
        dominating,
        site_mass,
        window_mass,
    })
}

/// Containment of the local-estimate ball around the shifted site's center
/// in the site's `T`-window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCheck {
    /// `2 e theta1 R + 2 D0` with `R = sqrt(d) + 2`, `D0 = R/2`.
    pub radius: f64,
    /// Largest `|z_{k+} - k|_inf` over the sequence.
    pub offset: f64,
    pub half_window: f64,
    /// `T/2 - offset - radius`; negative means the ball leaves the window.
    pub slack: f64,
    /// Smallest integer side length for which containment holds.
    pub minimal_t: u64,
}

/// Check `B(z_{k+}, 2 e theta1 R + 2 D0) inside Lambda_T(k)` at unit scale.
///
/// With `seq = None` the worst admissible offset `5/2 - delta` (unit scale) is used.
pub fn proof_containment(d: usize, theta1: f64, t: u64, seq: Option<&EquidistributedSequence>, delta: f64) -> ContainmentCheck {
    let r = (d as f64).sqrt() + 2.0;
    let radius = 2.0 * E * theta1 * r + r;
    let offset = match seq {
        Some(s) => s
            .sites
            .iter()
            .zip(&s.centers)
            .map(|(k, _)| {
                // k+ outside the cube: fall back to the worst position in its cell
                let kp = near_neighbor(k);
                match s.sites.iter().position(|x| *x == kp) {
                    Some(i) => s.centers[i]
                        .iter()
                        .zip(k)
                        .map(|(z, &kk)| (z / s.g - kk as f64).abs())
                        .fold(0.0, f64::max),
                    None => 2.5 - delta / s.g,
                }
            })
            .fold(0.0, f64::max),
        None => 2.5 - delta,
    };
    let half_window = t as f64 / 2.0;
    ContainmentCheck {
        radius,
        offset,
        half_window,
        slack: half_window - offset - radius,
        minimal_t: (2.0 * (offset + radius)).ceil() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::side_length_t;

    #[test]
    fn domain_basics() {
        let dom = CubeDomain::new(2, 3.0, 0.25, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(dom.n, 12);
        assert_eq!(dom.len(), 144);
        assert_eq!(dom.coord(0), -1.375);
        let mut m = [0; 2];
        dom.multi_index(37, &mut m);
        assert_eq!(m, [3, 1]);
        assert_eq!(dom.flat_index(&m), 37);
        assert!(CubeDomain::new(1, 3.0, 0.7, BoundaryCondition::Periodic).is_err());
    }

    #[test]
    fn fold_reflection_and_wrap() {
        let per = CubeDomain::new(1, 1.0, 0.25, BoundaryCondition::Periodic).unwrap();
        assert_eq!(per.fold(-1), (3, false));
        assert_eq!(per.fold(9), (1, false));
        let dir = CubeDomain::new(1, 1.0, 0.25, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(dir.fold(-1), (0, true));
        assert_eq!(dir.fold(4), (3, true));
        assert_eq!(dir.fold(7), (0, true));
        assert_eq!(dir.fold(8), (0, false));
        assert_eq!(dir.fold(-5), (3, false));
        // folded coordinate is the mirror image
        for m in -12..12 {
            let (k, odd) = dir.fold(m);
            let x = dir.coord_ext(m);
            let y = dir.coord(k);
            let mirrored = {
                let p = (x + 0.5).rem_euclid(2.0);
                if p < 1.0 { p - 0.5 } else { 1.5 - p }
            };
            assert!((y - mirrored).abs() < 1e-12, "{m}");
            assert_eq!(odd, (x + 0.5).rem_euclid(2.0) >= 1.0);
        }
    }

    #[test]
    fn centered_sequence() {
        let s = generate_sequence(1, 1.0, 0.25, 3.0, SequenceMode::Centered).unwrap();
        assert_eq!(s.centers, vec![vec![-1.0], vec![0.0], vec![1.0]]);
        assert_eq!(s.containment_margin(), 0.25);
    }

    #[test]
    fn random_sequences() {
        let a = generate_sequence(2, 1.0, 0.3, 5.0, SequenceMode::UniformRandom(1)).unwrap();
        let b = generate_sequence(2, 1.0, 0.3, 5.0, SequenceMode::UniformRandom(2)).unwrap();
        let a2 = generate_sequence(2, 1.0, 0.3, 5.0, SequenceMode::UniformRandom(1)).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.centers, b.centers);
        assert_eq!(a.centers.len(), 25);
        assert_eq!(b.centers.len(), 25);
        assert!(a.containment_margin() >= 0.0);
        assert!(b.containment_margin() >= 0.0);
        assert!(generate_sequence(1, 1.0, 0.5, 3.0, SequenceMode::Centered).is_err());
        assert!(generate_sequence(1, 1.0, 0.25, 4.0, SequenceMode::Centered).is_err());
    }

    #[test]
    fn mask_area_converges() {
        let seq = generate_sequence(2, 1.0, 0.25, 3.0, SequenceMode::Centered).unwrap();
        let target = std::f64::consts::PI / 16.0;
        let mut errs = Vec::new();
        for h in [1.0 / 32.0, 1.0 / 128.0, 1.0 / 512.0] {
            let dom = CubeDomain::new(2, 3.0, h, BoundaryCondition::Periodic).unwrap();
            let mask = seq.mask(&dom).unwrap();
            let frac = mask.iter().filter(|&&m| m).count() as f64 / dom.len() as f64;
            errs.push((frac - target).abs());
        }
        assert!(errs[2] < 2e-3, "{errs:?}");
        assert!(errs[2] < errs[0]);
    }

    #[test]
    fn mask_fraction_1d_near_half_cell() {
        let seq = generate_sequence(1, 1.0, 0.4999, 3.0, SequenceMode::Centered).unwrap();
        let dom = CubeDomain::new(1, 3.0, 1.0 / 64.0, BoundaryCondition::Periodic).unwrap();
        let mask = seq.mask(&dom).unwrap();
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn constant_psi_all_dominating() {
        let dom = CubeDomain::new(2, 3.0, 0.25, BoundaryCondition::Periodic).unwrap();
        let psi = vec![1.0f64; dom.len()];
        let dec = classify_sites(&dom, &psi, 1.0, 7).unwrap();
        assert!(dec.dominating.iter().all(|&d| d));
        for (s, w) in dec.site_mass.iter().zip(&dec.window_mass) {
            assert!((w / s - 49.0).abs() < 1e-12);
        }
    }

    #[test]
    fn windows_match_brute_force() {
        for bc in [BoundaryCondition::Periodic, BoundaryCondition::Dirichlet] {
            let dom = CubeDomain::new(2, 3.0, 0.25, bc).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let dens: Vec<f64> = (0..dom.len()).map(|_| rng.gen::<f64>()).collect();
            for t in [1u64, 2, 5, 8] {
                let w = window_masses(&dom, &dens, 1.0, t).unwrap();
                let q = 4i64;
                for (si, site) in sites(2, 3).iter().enumerate() {
                    let lo: Vec<i64> = site.iter().map(|&k| (k + 1) * q + (q - t as i64 * q) / 2).collect();
                    let mut s = 0.0;
                    for a in 0..(t as i64 * q) {
                        for b in 0..(t as i64 * q) {
                            let i = dom.fold(lo[0] + a).0;
                            let j = dom.fold(lo[1] + b).0;
                            s += dens[i * dom.n + j];
                        }
                    }
                    s *= dom.cell_volume();
                    assert!((w[si] - s).abs() < 1e-10 * s, "{bc} t={t}");
                }
            }
        }
    }

    #[test]
    fn tiling_identity_both_extensions() {
        for bc in [BoundaryCondition::Periodic, BoundaryCondition::Dirichlet] {
            for (l, t) in [(3.0, 5u64), (5.0, 39), (3.0, 4)] {
                let dom = CubeDomain::new(2, l, 0.25, bc).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let dens: Vec<f64> = (0..dom.len()).map(|_| rng.gen::<f64>()).collect();
                let total = dom.cell_volume() * dens.iter().sum::<f64>();
                let w: f64 = window_masses(&dom, &dens, 1.0, t).unwrap().iter().sum();
                let expect = (t * t) as f64 * total;
                assert!(((w - expect) / expect).abs() < 1e-12, "{bc} L={l} T={t}");
            }
        }
    }

    #[test]
    fn mass_splitting() {
        let dom = CubeDomain::new(2, 5.0, 0.25, BoundaryCondition::Dirichlet).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let psi: Vec<f64> = (0..dom.len()).map(|_| rng.gen::<f64>().powi(8)).collect();
            let dec = classify_sites(&dom, &psi, 1.0, side_length_t(2, 1.0)).unwrap();
            let total = dom.norm_sq(&psi);
            assert!(dec.weak_mass() < 0.5 * total);
            assert!(2.0 * dec.dominating_mass() > total);
        }
    }

    #[test]
    fn neighbor_shifts() {
        assert_eq!(near_neighbor(&[0, 0]), vec![2, 0]);
        assert_eq!(near_neighbor(&near_neighbor(&[1, -1])), vec![5, -1]);
        assert_eq!(near_neighbor_periodic(&[1], 3), vec![0]);
        assert_eq!(near_neighbor_periodic(&[0, 2], 5), vec![2, 2]);
        assert_eq!(near_neighbor_periodic(&[1, 2], 5), vec![-2, 2]);
    }

    #[test]
    fn printed_window_cannot_contain_local_ball() {
        for d in 1..=3 {
            for theta1 in [1.0, 2.0] {
                let t = side_length_t(d, theta1);
                let c = proof_containment(d, theta1, t, None, 0.25);
                // T/2 exceeds the radius by less than one, the shift is at least 3/2
                assert!(c.half_window - c.radius < 1.0);
                assert!(c.slack < 0.0, "d={d} theta1={theta1}: {c:?}");
                let ok = proof_containment(d, theta1, c.minimal_t, None, 0.25);
                assert!(ok.slack >= 0.0);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn splitting_and_tiling_for_random_densities(
            seed in 0u64..10_000,
            d in 1usize..3,
            half in 1usize..4,
            power in 1i32..12,
            t in 2u64..50,
        ) {
            let l = (2 * half + 1) as f64;
            let h = if d == 1 { 1.0 / 8.0 } else { 0.25 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi: Vec<f64> = (0..CubeDomain::new(d, l, h, BoundaryCondition::Dirichlet).unwrap().len())
                .map(|_| rng.gen::<f64>().powi(power))
                .collect();
            for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Periodic] {
                let dom = CubeDomain::new(d, l, h, bc).unwrap();
                let total = dom.norm_sq(&psi);
                let dec = classify_sites(&dom, &psi, 1.0, side_length_t(d, 1.0)).unwrap();
                proptest::prop_assert!(dec.weak_mass() < 0.5 * total);
                proptest::prop_assert!(2.0 * dec.dominating_mass() > total);
                let dens: Vec<f64> = psi.iter().map(|v| v * v).collect();
                let w: f64 = window_masses(&dom, &dens, 1.0, t).unwrap().iter().sum();
                let expect = (t as f64).powi(d as i32) * total;
                proptest::prop_assert!(((w - expect) / expect).abs() < 1e-10);
            }
        }
    }
}
