//! Bubble-adapted quadrature over the unit ball and over `R^n`.
//!
//! The integral is split by a partition of unity into one piece per
//! concentration center. Each piece is integrated in polar coordinates about
//! its center with the radial variable `s = ln(1 + λρ)`, which resolves the
//! `1/λ` core and the algebraic tail with the same panel width. Directions
//! come from a rule matched to the symmetry the caller declares.

use super::gauss::{composite, GaussLegendre};
use super::qmc::sphere_points;
use crate::error::{Error, Result};
use crate::special::{compensated_sum, sphere_area};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Integration domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    UnitBall,
    Whole,
}

/// Invariance class of the integrand (and of every center).
///
/// * `Radial`: integrand depends on `|x - c|` only; exactly one center.
/// * `Axial`: depends on `(x_1, |x_⊥|)`; centers on the `e_1` axis.
/// * `Planar`: depends on `(x_1, x_2, |x_⊥|)`; centers in the `e_1 e_2` plane.
/// * `Full`: no symmetry assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symmetry {
    Radial,
    Axial,
    Planar,
    Full,
}

impl Symmetry {
    /// The weaker (more general) of two symmetry classes.
    pub fn join(self, other: Symmetry) -> Symmetry {
        self.max(other)
    }

    /// Strongest class compatible with a set of points (never `Radial`).
    pub fn of_points<'a, I: IntoIterator<Item = &'a [f64]>>(points: I) -> Symmetry {
        let mut s = Symmetry::Axial;
        for p in points {
            let off_axis = p.iter().skip(1).any(|v| *v != 0.0);
            let off_plane = p.iter().skip(2).any(|v| *v != 0.0);
            if off_plane {
                return Symmetry::Full;
            }
            if off_axis {
                s = Symmetry::Planar;
            }
        }
        s
    }
}

/// Quadrature resolution and convergence control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre order per radial panel.
    pub radial_order: usize,
    /// Panel width in the variable `s = ln(1 + λρ)`.
    pub panel_width: f64,
    /// Nodes per angular variable for product rules.
    pub angular_nodes: usize,
    /// Sample count for quasi-Monte Carlo direction sets (`Full`, `n >= 7`).
    pub qmc_samples: usize,
    /// Target relative tolerance (relative to the L1 mass of the integrand).
    pub tolerance: f64,
    /// Maximum number of doublings after the base level.
    pub max_refinements: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_order: 16,
            panel_width: 1.0,
            angular_nodes: 16,
            qmc_samples: 4096,
            tolerance: 1e-8,
            max_refinements: 3,
            seed: 0x5eed,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_order == 0 || self.angular_nodes == 0 || self.qmc_samples == 0 {
            return Err(Error::InvalidInput("node counts must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) || !(self.panel_width > 0.0) {
            return Err(Error::InvalidInput(
                "tolerance and panel width must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Coarse rule for expensive integrands where only a few digits matter.
    pub fn coarse() -> Self {
        QuadratureSpec {
            radial_order: 12,
            panel_width: 1.5,
            angular_nodes: 8,
            qmc_samples: 1024,
            tolerance: 1e-4,
            max_refinements: 2,
            ..Default::default()
        }
    }

    /// Fine rule for high-accuracy expansion checks.
    pub fn fine() -> Self {
        QuadratureSpec {
            radial_order: 20,
            panel_width: 0.5,
            angular_nodes: 48,
            qmc_samples: 16384,
            tolerance: 1e-11,
            max_refinements: 2,
            ..Default::default()
        }
    }
}

/// Concentration center: location and rate λ setting the radial scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    pub point: Vec<f64>,
    pub scale: f64,
}

impl Center {
    pub fn new(point: Vec<f64>, scale: f64) -> Self {
        Center { point, scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    /// L1 mass `∫|f|` on the final rule.
    pub l1: f64,
    pub level: usize,
}

/// Direction set on `S^{n-1}` (possibly symmetry-reduced) with weights.
pub(crate) fn direction_rule(
    n: usize,
    sym: Symmetry,
    spec: &QuadratureSpec,
    level: usize,
) -> Vec<(Vec<f64>, f64)> {
    let m = spec.angular_nodes << level;
    match sym {
        Symmetry::Radial => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            vec![(e, sphere_area::<f64>(n))]
        }
        Symmetry::Axial => {
            let w0 = sphere_area::<f64>(n - 1);
            let rule = GaussLegendre::cached(m);
            rule.on_interval(0.0, std::f64::consts::PI)
                .map(|(th, w)| {
                    let mut d = vec![0.0; n];
                    d[0] = th.cos();
                    d[1] = th.sin();
                    (d, w * w0 * th.sin().powi(n as i32 - 2))
                })
                .collect()
        }
        Symmetry::Planar => {
            let w0 = sphere_area::<f64>(n - 2);
            let rule = GaussLegendre::cached(m);
            let npsi = 2 * m;
            let dpsi = 2.0 * std::f64::consts::PI / npsi as f64;
            let mut out = Vec::with_capacity(m * npsi);
            for (beta, wb) in rule.on_interval(0.0, std::f64::consts::FRAC_PI_2) {
                let (sb, cb) = beta.sin_cos();
                let wbeta = wb * w0 * sb * cb.powi(n as i32 - 3);
                for k in 0..npsi {
                    let psi = (k as f64 + 0.5) * dpsi;
                    let mut d = vec![0.0; n];
                    d[0] = sb * psi.cos();
                    d[1] = sb * psi.sin();
                    d[2] = cb;
                    out.push((d, wbeta * dpsi));
                }
            }
            out
        }
        Symmetry::Full => {
            if n <= 6 {
                hyperspherical_product(n, m)
            } else {
                let count = spec.qmc_samples << level;
                let w = sphere_area::<f64>(n) / count as f64;
                sphere_points(n, count, spec.seed)
                    .into_iter()
                    .map(|d| (d, w))
                    .collect()
            }
        }
    }
}

fn hyperspherical_product(n: usize, m: usize) -> Vec<(Vec<f64>, f64)> {
    let rule = GaussLegendre::cached(m);
    let polar: Vec<(f64, f64)> = rule.on_interval(0.0, std::f64::consts::PI).collect();
    let nphi = 2 * m;
    let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
    // Start from the circle and prepend polar angles.
    let mut dirs: Vec<(Vec<f64>, f64)> = (0..nphi)
        .map(|k| {
            let phi = (k as f64 + 0.5) * dphi;
            (vec![phi.cos(), phi.sin()], dphi)
        })
        .collect();
    for dim in 3..=n {
        let mut next = Vec::with_capacity(dirs.len() * polar.len());
        for &(th, w) in &polar {
            let (s, c) = th.sin_cos();
            let wt = w * s.powi(dim as i32 - 2);
            for (d, wd) in &dirs {
                let mut v = Vec::with_capacity(dim);
                v.push(c);
                v.extend(d.iter().map(|x| s * x));
                next.push((v, wd * wt));
            }
        }
        dirs = next;
    }
    dirs
}

const WHOLE_SPACE_REACH: f64 = 1e10;

fn partition_weight(z: &[f64], k: usize, centers: &[Center]) -> f64 {
    if centers.len() == 1 {
        return 1.0;
    }
    let q = |c: &Center| {
        let r2: f64 = z.iter().zip(&c.point).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 / (c.scale * c.scale) + r2
    };
    let qk = q(&centers[k]);
    let n = z.len() as i32;
    let denom: f64 = centers.iter().map(|c| (qk / q(c)).powi(n)).sum();
    1.0 / denom
}

struct Piece {
    sum: f64,
    l1: f64,
    tail: f64,
    divergent: bool,
}

#[allow(clippy::too_many_arguments)]
fn integrate_direction<F>(
    n: usize,
    f: &F,
    centers: &[Center],
    k: usize,
    dir: &[f64],
    domain: Domain,
    spec: &QuadratureSpec,
    level: usize,
) -> Piece
where
    F: Fn(&[f64]) -> f64,
{
    let c = &centers[k];
    let lam = c.scale;
    let rho_max = match domain {
        Domain::UnitBall => {
            let cd: f64 = c.point.iter().zip(dir).map(|(a, b)| a * b).sum();
            let c2: f64 = c.point.iter().map(|a| a * a).sum();
            -cd + (cd * cd + 1.0 - c2).max(0.0).sqrt()
        }
        Domain::Whole => WHOLE_SPACE_REACH / lam,
    };
    let s_max = (lam * rho_max).ln_1p();
    let width = spec.panel_width / (1u64 << level) as f64;
    let panels = ((s_max / width).ceil() as usize).max(1);
    let mut z = vec![0.0; n];
    let mut terms = Vec::with_capacity(panels * spec.radial_order);
    let mut l1 = 0.0;
    let eval = |rho: f64, z: &mut Vec<f64>| -> f64 {
        for i in 0..n {
            z[i] = c.point[i] + rho * dir[i];
        }
        let v = f(z);
        if v == 0.0 {
            0.0
        } else {
            v * partition_weight(z, k, centers)
        }
    };
    for (s, w) in composite(spec.radial_order, 0.0, s_max, panels) {
        let em1 = s.exp_m1();
        let rho = em1 / lam;
        let jac = (em1 + 1.0) / lam;
        let t = w * jac * rho.powi(n as i32 - 1) * eval(rho, &mut z);
        l1 += t.abs();
        terms.push(t);
    }
    let mut tail = 0.0;
    let mut divergent = false;
    if domain == Domain::Whole {
        let f1 = eval(rho_max, &mut z);
        let f2 = eval(2.0 * rho_max, &mut z);
        if f1 != 0.0 && f1.is_finite() {
            let q = if f2 != 0.0 {
                (f1.abs() / f2.abs()).ln() / std::f64::consts::LN_2
            } else {
                f64::INFINITY
            };
            if q <= n as f64 + 1e-6 {
                divergent = true;
            } else if q.is_finite() {
                tail = f1 * rho_max.powi(n as i32) / (q - n as f64);
            }
        }
    }
    Piece {
        sum: compensated_sum(terms),
        l1,
        tail,
        divergent,
    }
}

/// One fixed rule at refinement `level`; returns `(value, l1)`.
pub fn integrate_fixed<F>(
    n: usize,
    f: &F,
    centers: &[Center],
    domain: Domain,
    symmetry: Symmetry,
    spec: &QuadratureSpec,
    level: usize,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if centers.is_empty() {
        return Err(Error::InvalidInput("at least one center required".into()));
    }
    if symmetry == Symmetry::Radial && centers.len() != 1 {
        return Err(Error::InvalidInput(
            "radial rule takes exactly one center".into(),
        ));
    }
    let dirs = direction_rule(n, symmetry, spec, level);
    let tasks: Vec<(usize, usize)> = (0..centers.len())
        .flat_map(|k| (0..dirs.len()).map(move |d| (k, d)))
        .collect();
    let pieces: Vec<(f64, f64, f64, bool)> = tasks
        .par_iter()
        .map(|&(k, d)| {
            let (dir, w) = &dirs[d];
            let p = integrate_direction(n, f, centers, k, dir, domain, spec, level);
            (w * p.sum, w * p.l1, w * p.tail, p.divergent)
        })
        .collect();
    if pieces.iter().any(|p| p.3) {
        return Err(Error::InvalidInput(
            "integrand does not decay fast enough: divergent".into(),
        ));
    }
    let value = compensated_sum(pieces.iter().map(|p| p.0).chain(pieces.iter().map(|p| p.2)));
    let l1 = compensated_sum(pieces.iter().map(|p| p.1));
    Ok((value, l1))
}

/// Adaptive integration: doubles the rule until successive estimates agree to
/// `tolerance` relative to the L1 mass.
pub fn integrate<F>(
    n: usize,
    f: &F,
    centers: &[Center],
    domain: Domain,
    symmetry: Symmetry,
    spec: &QuadratureSpec,
) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    refine(spec, |level| {
        integrate_fixed(n, f, centers, domain, symmetry, spec, level)
    })
}

/// Doubling driver shared by the integrators.
pub fn refine<R>(spec: &QuadratureSpec, mut rule: R) -> Result<QuadResult>
where
    R: FnMut(usize) -> Result<(f64, f64)>,
{
    let (mut prev, _) = rule(0)?;
    let mut best = QuadResult {
        value: prev,
        error_estimate: f64::INFINITY,
        l1: f64::NAN,
        level: 0,
    };
    for level in 1..=spec.max_refinements.max(1) {
        let (v, l1) = rule(level)?;
        let err = (v - prev).abs();
        best = QuadResult {
            value: v,
            error_estimate: err,
            l1,
            level,
        };
        if err <= spec.tolerance * l1.max(f64::MIN_POSITIVE) {
            return Ok(best);
        }
        prev = v;
    }
    Err(Error::QuadratureNonConvergence {
        estimate: best.value,
        error_estimate: best.error_estimate,
    })
}

/// `∫_{|x|>1} f` along rays from the origin; `scale` sets the radial
/// resolution just outside the sphere.
pub fn integrate_exterior_fixed<F>(
    n: usize,
    f: &F,
    scale: f64,
    symmetry: Symmetry,
    spec: &QuadratureSpec,
    level: usize,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dirs = direction_rule(n, symmetry, spec, level);
    let s_max = (WHOLE_SPACE_REACH).ln_1p();
    let width = spec.panel_width / (1u64 << level) as f64;
    let panels = ((s_max / width).ceil() as usize).max(1);
    let nodes = composite(spec.radial_order, 0.0, s_max, panels);
    let parts: Vec<(f64, f64)> = dirs
        .par_iter()
        .map(|(dir, w)| {
            let mut z = vec![0.0; n];
            let mut terms = Vec::with_capacity(nodes.len());
            for &(s, ws) in &nodes {
                let em1 = s.exp_m1();
                let r = 1.0 + em1 / scale;
                let jac = (em1 + 1.0) / scale;
                for i in 0..n {
                    z[i] = r * dir[i];
                }
                terms.push(ws * jac * r.powi(n as i32 - 1) * f(&z));
            }
            let l1: f64 = terms.iter().map(|t| t.abs()).sum();
            (w * compensated_sum(terms), w * l1)
        })
        .collect();
    Ok((
        compensated_sum(parts.iter().map(|p| p.0)),
        compensated_sum(parts.iter().map(|p| p.1)),
    ))
}

pub fn integrate_exterior<F>(
    n: usize,
    f: &F,
    scale: f64,
    symmetry: Symmetry,
    spec: &QuadratureSpec,
) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    refine(spec, |level| {
        integrate_exterior_fixed(n, f, scale, symmetry, spec, level)
    })
}

/// `∫_Ω f` over the unit ball with concentration centers `(point, λ)`.
pub fn integrate_ball<F>(
    n: usize,
    f: &F,
    centers: &[Center],
    symmetry: Symmetry,
    spec: &QuadratureSpec,
) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    for c in centers {
        let r2: f64 = c.point.iter().map(|a| a * a).sum();
        if r2 >= 1.0 {
            return Err(Error::InvalidInput("center outside the unit ball".into()));
        }
    }
    integrate(n, f, centers, Domain::UnitBall, symmetry, spec)
}

/// `ω_{n-1} ∫_0^∞ g(r) r^{n-1} dr` for a radial profile `g`.
pub fn integrate_radial_rn<G>(g: G, n: usize, spec: &QuadratureSpec) -> Result<f64>
where
    G: Fn(f64) -> f64 + Sync,
{
    let f = |x: &[f64]| g(x.iter().map(|v| v * v).sum::<f64>().sqrt());
    let centers = [Center::new(vec![0.0; n], 1.0)];
    integrate(n, &f, &centers, Domain::Whole, Symmetry::Radial, spec).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{ball_volume, beta};

    #[test]
    fn constant_over_ball_is_volume() {
        let spec = QuadratureSpec::default();
        for sym in [Symmetry::Radial, Symmetry::Axial, Symmetry::Planar] {
            let c = [Center::new(vec![0.0; 6], 1.0)];
            let r = integrate_ball(6, &|_: &[f64]| 1.0, &c, sym, &spec).unwrap();
            assert!(
                (r.value - ball_volume(6)).abs() < 1e-10,
                "{sym:?} {}",
                r.value
            );
        }
        let c = [Center::new(vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0], 5.0)];
        let r = integrate_ball(6, &|_: &[f64]| 1.0, &c, Symmetry::Axial, &spec).unwrap();
        assert!((r.value - ball_volume(6)).abs() < 1e-9);
    }

    #[test]
    fn full_product_rule_small_dim() {
        let spec = QuadratureSpec {
            angular_nodes: 12,
            ..Default::default()
        };
        let c = [Center::new(vec![0.0; 5], 1.0)];
        let r = integrate_fixed(
            5,
            &|x: &[f64]| x[0] * x[0],
            &c,
            Domain::UnitBall,
            Symmetry::Full,
            &spec,
            0,
        )
        .unwrap();
        // ∫ x_1^2 over B^5 = vol/(n+2)
        assert!(
            (r.0 - ball_volume(5) / 7.0).abs() < 1e-9,
            "{} vs {}",
            r.0,
            ball_volume(5) / 7.0
        );
    }

    #[test]
    fn two_centers_partition_of_unity() {
        let spec = QuadratureSpec::default();
        let c = [
            Center::new(vec![0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 50.0),
            Center::new(vec![-0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 20.0),
        ];
        let r = integrate_ball(7, &|_: &[f64]| 1.0, &c, Symmetry::Axial, &spec).unwrap();
        assert!((r.value - ball_volume(7)).abs() < 1e-8 * ball_volume(7));
    }

    #[test]
    fn radial_beta_identity() {
        let spec = QuadratureSpec::default();
        let v = integrate_radial_rn(|r| (1.0 + r * r).powi(-6), 6, &spec).unwrap();
        let exact = sphere_area::<f64>(6) * 0.5 * beta(3.0, 3.0);
        assert!((v - exact).abs() < 1e-10 * exact);
        let g = integrate_radial_rn(|r| (-r * r).exp(), 5, &spec).unwrap();
        assert!((g - std::f64::consts::PI.powf(2.5)).abs() < 1e-10);
    }

    #[test]
    fn exterior_power() {
        // ∫_{|x|>1} |x|^{-2n} = ω / n
        let spec = QuadratureSpec::default();
        let n = 7;
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().powi(-(n as i32));
        let r = integrate_exterior(n, &f, 1.0, Symmetry::Radial, &spec).unwrap();
        let exact = sphere_area::<f64>(n) / n as f64;
        assert!((r.value - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn divergent_radial_is_error() {
        let spec = QuadratureSpec::default();
        assert!(integrate_radial_rn(|r| (1.0 + r * r).powf(-2.0), 6, &spec).is_err());
    }

    #[test]
    fn odd_integrand_vanishes() {
        let spec = QuadratureSpec::default();
        let c = [Center::new(vec![0.0; 6], 30.0)];
        let r = integrate_ball(
            6,
            &|x: &[f64]| x[0] * (1.0 + 900.0 * x.iter().map(|v| v * v).sum::<f64>()).powi(-4),
            &c,
            Symmetry::Axial,
            &spec,
        )
        .unwrap();
        assert!(r.value.abs() < 1e-8 * r.l1);
    }
}
