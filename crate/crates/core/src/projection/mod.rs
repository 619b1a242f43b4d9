//! Projected bubbles `Pδ` (Navier data removed), the correction
//! `φ = δ − Pδ`, and the energy pairing `(u, v)₂ = ∫ Δu Δv`.
//!
//! `φ` is biharmonic with `φ = δ` and `Δφ = Δδ` on the sphere. On the sphere
//! `1 + λ²|ω−a|² = C (1 − 2ρt + ρ²)` with `t = ω·â`, so both traces have
//! closed Gegenbauer expansions in `C_l^ν(t)`, `ν = (n−2)/2`. Mode `l` of `φ`
//! is `A_l r^l + B_l r^{l+2}` with `B_l = g_l/(4l+2n)` and `A_l = f_l − B_l`.

pub mod decompose;

use crate::bubbles::Bubble;
use crate::constants::{c_n, s_n};
use crate::error::{Error, Result};
use crate::green::{green_navier, regular_part_h};
use crate::numerics::quad::{integrate_ball, integrate_exterior, Center, QuadratureSpec, Symmetry};
use crate::scalar::{dot, norm};
use serde::{Deserialize, Serialize};

pub use decompose::{
    decompose, DecomposeOptions, DecomposeReport, Field, GridFunction, SyntheticField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Asymptotic,
}

const MAX_MODES: usize = 40_000;

#[derive(Debug, Clone)]
pub struct ProjectedBubble {
    pub bubble: Bubble<f64>,
    pub mode: Mode,
    axis: Vec<f64>,
    coeffs: Vec<(f64, f64)>,
    nu: f64,
}

impl ProjectedBubble {
    pub fn new(bubble: Bubble<f64>, mode: Mode) -> Result<Self> {
        bubble.validate()?;
        let n = bubble.dim();
        let ra = norm(&bubble.a);
        if ra >= 1.0 {
            return Err(Error::NearBoundary(1.0 - ra));
        }
        let axis = if ra > 0.0 {
            bubble.a.iter().map(|v| v / ra).collect()
        } else {
            crate::scalar::unit(n, 0)
        };
        let nu = (n as f64 - 2.0) / 2.0;
        let coeffs = match mode {
            Mode::Exact => modal_coefficients(n, ra, bubble.lambda)?,
            Mode::Asymptotic => Vec::new(),
        };
        Ok(ProjectedBubble {
            bubble,
            mode,
            axis,
            coeffs,
            nu,
        })
    }

    pub fn exact(bubble: Bubble<f64>) -> Result<Self> {
        Self::new(bubble, Mode::Exact)
    }

    pub fn dim(&self) -> usize {
        self.bubble.dim()
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    /// `φ(x) = δ(x) − Pδ(x)`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        match self.mode {
            Mode::Exact => {
                let r = norm(x);
                let t = if r > 0.0 {
                    (dot(x, &self.axis) / r).clamp(-1.0, 1.0)
                } else {
                    1.0
                };
                let r2 = r * r;
                let nu = self.nu;
                let (mut cm1, mut c0) = (0.0, 1.0);
                let mut pw = 1.0;
                let mut terms = Vec::with_capacity(self.coeffs.len());
                for (l, &(a, b)) in self.coeffs.iter().enumerate() {
                    terms.push((a + b * r2) * pw * c0);
                    let lf = l as f64;
                    let next = if l == 0 {
                        2.0 * nu * t
                    } else {
                        (2.0 * t * (lf + nu) * c0 - (lf + 2.0 * nu - 1.0) * cm1) / (lf + 1.0)
                    };
                    cm1 = c0;
                    c0 = next;
                    pw *= r;
                }
                crate::special::compensated_sum(terms)
            }
            Mode::Asymptotic => {
                let n = self.dim();
                let mu = (n as f64 - 4.0) / 2.0;
                let h = regular_part_h(&self.bubble.a, x).unwrap_or(f64::NAN);
                c_n::<f64>(n) * self.bubble.lambda.powf(-mu) * h
            }
        }
    }

    /// `Pδ(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bubble.eval(x) - self.phi(x)
    }

    /// The same projected bubble with its center rotated onto `+e_1`.
    pub fn canonical(&self) -> ProjectedBubble {
        let n = self.dim();
        let ra = norm(&self.bubble.a);
        ProjectedBubble {
            bubble: Bubble::new(crate::scalar::on_axis(n, ra), self.bubble.lambda),
            mode: self.mode,
            axis: crate::scalar::unit(n, 0),
            coeffs: self.coeffs.clone(),
            nu: self.nu,
        }
    }
}

fn modal_coefficients(n: usize, ra: f64, lam: f64) -> Result<Vec<(f64, f64)>> {
    let nf = n as f64;
    let mu = (nf - 4.0) / 2.0;
    let nu = mu + 1.0;
    let c = c_n::<f64>(n);
    let l2 = lam * lam;
    let big_a = 1.0 + l2 * (1.0 + ra * ra);
    let big_b = 2.0 * l2 * ra;
    if big_b <= 1e-300 * big_a || ra == 0.0 {
        let f0 = c * (lam / big_a).powf(mu);
        let g0 = -c
            * lam.powf(mu + 2.0)
            * (nf - 4.0)
            * (2.0 * big_a.powf(-nu) + (nf - 2.0) * big_a.powf(-nu - 1.0));
        let b0 = g0 / (2.0 * nf);
        return Ok(vec![(f0 - b0, b0)]);
    }
    let rho = big_b / (big_a + ((big_a - big_b) * (big_a + big_b)).sqrt());
    let cc = big_b / (2.0 * rho);
    let fpre = c * (lam / cc).powf(mu) * mu;
    let gpre = -c * lam.powf(mu + 2.0) * (nf - 4.0);
    let cnu = cc.powf(-nu);
    let cnu1 = cnu / cc;
    let one_m = (1.0 - rho) * (1.0 + rho);
    let mut out = Vec::new();
    let mut pw = 1.0;
    let mut bound1 = 1.0; // C_l^ν(1)
    let mut scale = 0.0f64;
    for l in 0..MAX_MODES {
        let lf = l as f64;
        let f = fpre * pw * (1.0 / (lf + mu) - rho * rho / (lf + mu + 2.0));
        let g = gpre * pw * (2.0 * cnu + (nf - 2.0) * cnu1 * (lf + nu) / (nu * one_m));
        let b = g / (4.0 * lf + 2.0 * nf);
        let a = f - b;
        out.push((a, b));
        let size = (a.abs() + b.abs()) * bound1;
        scale = scale.max(size);
        if l > 2 && size < 1e-18 * scale {
            return Ok(out);
        }
        pw *= rho;
        bound1 *= (lf + 2.0 * nu) / (lf + 1.0);
    }
    Err(Error::NearBoundary(1.0 - ra))
}

/// `Pδ(x)` in the requested mode.
pub fn pdelta(pb: &ProjectedBubble, x: &[f64]) -> f64 {
    pb.eval(x)
}

/// `κ_n^{-1} ∫_Ω G(x,y) δ^{(n+4)/(n−4)}(y) dy`, the Green representation of `Pδ(x)`.
pub fn pdelta_green_quadrature(b: &Bubble<f64>, x: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    let n = b.dim();
    let p = (n as f64 + 4.0) / (n as f64 - 4.0);
    // Rotate so that a is on e_1 and x lies in the e_1 e_2 plane.
    let ra = norm(&b.a);
    let rx = norm(x);
    let t = if ra > 0.0 && rx > 0.0 {
        dot(x, &b.a) / (ra * rx)
    } else {
        1.0
    };
    let a = crate::scalar::on_axis(n, ra);
    let mut xp = vec![0.0; n];
    xp[0] = rx * t;
    xp[1] = rx * (1.0 - t * t).max(0.0).sqrt();
    let bb = Bubble::new(a.clone(), b.lambda);
    let f = |y: &[f64]| -> f64 {
        match green_navier(&xp, y) {
            Ok(g) => g * (p * bb.ln_delta(y)).exp(),
            Err(_) => 0.0,
        }
    };
    let d = crate::scalar::dist(&a, &xp).max(1e-12);
    let centers = [
        Center::new(a.clone(), b.lambda),
        Center::new(xp.clone(), (4.0 / d).max(b.lambda)),
    ];
    let sym = Symmetry::of_points([a.as_slice(), xp.as_slice()]);
    Ok(integrate_ball(n, &f, &centers, sym, spec)?.value / crate::green::kappa::<f64>(n))
}

/// Bubbles with weights; the function `Σ α_i Pδ_i`.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub bubbles: Vec<ProjectedBubble>,
    pub alphas: Vec<f64>,
}

impl Configuration {
    pub fn new(bubbles: Vec<Bubble<f64>>, alphas: Vec<f64>, mode: Mode) -> Result<Self> {
        if bubbles.len() != alphas.len() || bubbles.is_empty() {
            return Err(Error::InvalidInput(
                "need one positive weight per bubble".into(),
            ));
        }
        if alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        let bubbles = bubbles
            .into_iter()
            .map(|b| ProjectedBubble::new(b, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(Configuration { bubbles, alphas })
    }

    pub fn dim(&self) -> usize {
        self.bubbles[0].dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bubbles
            .iter()
            .zip(&self.alphas)
            .map(|(b, a)| a * b.eval(x))
            .sum()
    }

    pub fn centers(&self) -> Vec<Center> {
        self.bubbles
            .iter()
            .map(|b| Center::new(b.bubble.a.clone(), b.bubble.lambda))
            .collect()
    }

    /// Symmetry class of the configuration alone.
    pub fn symmetry(&self) -> Symmetry {
        if self.bubbles.len() == 1 && self.bubbles[0].bubble.a.iter().all(|v| *v == 0.0) {
            return Symmetry::Radial;
        }
        Symmetry::of_points(self.bubbles.iter().map(|b| b.bubble.a.as_slice()))
    }
}

pub(crate) fn same_bubble(a: &Bubble<f64>, b: &Bubble<f64>) -> bool {
    a.lambda == b.lambda && a.a == b.a
}

/// `δ^{(n+4)/(n−4)}` through the log form.
pub fn delta_pow(b: &Bubble<f64>, x: &[f64]) -> f64 {
    let n = b.dim() as f64;
    ((n + 4.0) / (n - 4.0) * b.ln_delta(x)).exp()
}

/// `S_n − ‖Pδ‖²₂ = ∫_{|x|>1} δ^{2n/(n−4)} + ∫_Ω φ δ^{(n+4)/(n−4)}`, free of
/// cancellation against `S_n`.
pub fn norm_deficit(pb: &ProjectedBubble, spec: &QuadratureSpec) -> Result<f64> {
    let n = pb.dim();
    let nf = n as f64;
    let q = 2.0 * nf / (nf - 4.0);
    let c = pb.canonical();
    let b = c.bubble.clone();
    let d = 1.0 - b.a[0];
    let sym = if b.a[0] == 0.0 {
        Symmetry::Radial
    } else {
        Symmetry::Axial
    };
    let ext_spec = QuadratureSpec {
        angular_nodes: spec.angular_nodes.max((4.0 / d).ceil() as usize),
        ..spec.clone()
    };
    let ext = integrate_exterior(
        n,
        &|x: &[f64]| (q * b.ln_delta(x)).exp(),
        1.0 / d,
        sym,
        &ext_spec,
    )?;
    let centers = [Center::new(b.a.clone(), b.lambda)];
    let f = |x: &[f64]| c.phi(x) * delta_pow(&b, x);
    let int = integrate_ball(n, &f, &centers, sym, spec)?;
    Ok(ext.value + int.value)
}

/// `‖Pδ‖²₂`.
pub fn norm_sq(pb: &ProjectedBubble, spec: &QuadratureSpec) -> Result<f64> {
    Ok(s_n(pb.dim()) - norm_deficit(pb, spec)?)
}

/// `(Pδ_i, Pδ_j)₂ = ∫_Ω Pδ_i δ_j^{(n+4)/(n−4)}`.
pub fn inner_product(
    pi: &ProjectedBubble,
    pj: &ProjectedBubble,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if same_bubble(&pi.bubble, &pj.bubble) {
        return norm_sq(pi, spec);
    }
    let n = pi.dim();
    let bj = &pj.bubble;
    let f = |x: &[f64]| pi.eval(x) * delta_pow(bj, x);
    let centers = [
        Center::new(pi.bubble.a.clone(), pi.bubble.lambda),
        Center::new(bj.a.clone(), bj.lambda),
    ];
    let sym = Symmetry::of_points([pi.bubble.a.as_slice(), bj.a.as_slice()]);
    Ok(integrate_ball(n, &f, &centers, sym, spec)?.value)
}

/// `S_n − c2 H(a,a)/λ^{n−4}`.
pub fn norm_sq_expansion(b: &Bubble<f64>) -> Result<f64> {
    let n = b.dim();
    Ok(s_n(n) - crate::constants::c2(n) * crate::green::robin(&b.a)? / b.lambda.powi(n as i32 - 4))
}

/// `c2 (ε_ij − H(a_i,a_j)/(λ_iλ_j)^{(n−4)/2})`.
pub fn cross_product_expansion(bi: &Bubble<f64>, bj: &Bubble<f64>) -> Result<f64> {
    let n = bi.dim();
    let mu = (n as f64 - 4.0) / 2.0;
    let e = crate::bubbles::eps(&crate::bubbles::BubblePair::new(bi.clone(), bj.clone()));
    let h = regular_part_h(&bi.a, &bj.a)?;
    Ok(crate::constants::c2(n) * (e - h / (bi.lambda * bj.lambda).powf(mu)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::on_axis;

    fn bubble(n: usize, a: &[f64], l: f64) -> Bubble<f64> {
        let mut v = vec![0.0; n];
        v[..a.len()].copy_from_slice(a);
        Bubble::new(v, l)
    }

    #[test]
    fn navier_conditions_on_boundary() {
        for (n, a, l) in [
            (6, vec![0.3, 0.2], 40.0),
            (7, vec![0.0], 30.0),
            (7, vec![-0.8], 60.0),
        ] {
            let pb = ProjectedBubble::exact(bubble(n, &a, l)).unwrap();
            let peak = pb.bubble.peak();
            for k in 0..12 {
                let th = k as f64 * 0.26;
                let mut x = vec![0.0; n];
                x[0] = (1.0 - 1e-3) * th.cos();
                x[1] = (1.0 - 1e-3) * th.sin();
                assert!(pb.eval(&x).abs() <= 1e-4 * peak);
                x[0] /= 1.0 - 1e-3;
                x[1] /= 1.0 - 1e-3;
                assert!(pb.eval(&x).abs() <= 1e-10 * peak, "n={n} {}", pb.eval(&x));
            }
        }
    }

    #[test]
    fn laplacian_vanishes_on_boundary() {
        let n = 6;
        let pb = ProjectedBubble::exact(bubble(n, &[0.4, -0.1], 20.0)).unwrap();
        let h = 1e-3;
        let lap = |x: &[f64]| {
            let c = pb.eval(x);
            let mut acc = 0.0;
            let mut y = x.to_vec();
            for k in 0..n {
                y[k] = x[k] + h;
                acc += pb.eval(&y);
                y[k] = x[k] - h;
                acc += pb.eval(&y);
                y[k] = x[k];
            }
            (acc - 2.0 * n as f64 * c) / (h * h)
        };
        let inner = on_axis(n, 0.4);
        let edge = {
            let mut x = vec![0.0; n];
            x[0] = 0.6 * (1.0 - 2e-3);
            x[1] = 0.8 * (1.0 - 2e-3);
            x
        };
        assert!(lap(&edge).abs() < 1e-5 * lap(&inner).abs());
    }

    #[test]
    fn phi_is_biharmonic() {
        let n = 7;
        let pb = ProjectedBubble::exact(bubble(n, &[0.5], 15.0)).unwrap();
        let x0 = bubble(n, &[-0.1, 0.2, 0.1], 1.0).a;
        // Stencil error is O(h²); extrapolate it away.
        let bilap = |h: f64| {
            let lap = |x: &[f64]| {
                let c = pb.phi(x);
                let mut acc = 0.0;
                let mut y = x.to_vec();
                for k in 0..n {
                    y[k] = x[k] + h;
                    acc += pb.phi(&y);
                    y[k] = x[k] - h;
                    acc += pb.phi(&y);
                    y[k] = x[k];
                }
                (acc - 2.0 * n as f64 * c) / (h * h)
            };
            let c = lap(&x0);
            let mut acc = 0.0;
            let mut y = x0.clone();
            for k in 0..n {
                y[k] = x0[k] + h;
                acc += lap(&y);
                y[k] = x0[k] - h;
                acc += lap(&y);
                y[k] = x0[k];
            }

            (acc - 2.0 * n as f64 * c) / (h * h)
        };
        let extrap = (4.0 * bilap(1e-2) - bilap(2e-2)) / 3.0;
        assert!(extrap.abs() < 1e-4 * pb.phi(&x0), "{extrap}");
    }

    #[test]
    fn matches_green_representation() {
        let n = 6;
        let b = bubble(n, &[0.3], 12.0);
        let pb = ProjectedBubble::exact(b.clone()).unwrap();
        let x = bubble(n, &[0.1, 0.35], 1.0).a;
        let q = pdelta_green_quadrature(
            &b,
            &x,
            &QuadratureSpec {
                tolerance: 1e-7,
                ..Default::default()
            },
        )
        .unwrap();
        let e = pb.eval(&x);
        assert!((q - e).abs() < 1e-5 * e, "{q} vs {e}");
    }

    #[test]
    fn asymptotic_mode_close_for_large_rate() {
        let n = 7;
        let b = bubble(n, &[0.2, 0.1], 200.0);
        let ex = ProjectedBubble::new(b.clone(), Mode::Exact).unwrap();
        let asy = ProjectedBubble::new(b, Mode::Asymptotic).unwrap();
        let x = bubble(n, &[-0.3, 0.4], 1.0).a;
        assert!((ex.phi(&x) - asy.phi(&x)).abs() < 1e-3 * ex.phi(&x));
    }

    #[test]
    fn radial_norm_matches_expansion() {
        let n = 6;
        let b = bubble(n, &[], 100.0);
        let pb = ProjectedBubble::exact(b.clone()).unwrap();
        let spec = QuadratureSpec {
            tolerance: 1e-12,
            ..Default::default()
        };
        let v = norm_sq(&pb, &spec).unwrap();
        let e = norm_sq_expansion(&b).unwrap();
        assert!(v < s_n(n));
        assert!((v - e).abs() < 1e-3 * (s_n(n) - e), "{v} {e}");
    }

    #[test]
    fn deficit_matches_direct_pairing() {
        // ∫_Ω Pδ δ^p computed directly agrees with S_n − deficit.
        let n = 7;
        let b = bubble(n, &[0.3], 25.0);
        let pb = ProjectedBubble::exact(b.clone()).unwrap();
        let spec = QuadratureSpec {
            tolerance: 1e-10,
            ..Default::default()
        };
        let direct = integrate_ball(
            n,
            &|x: &[f64]| pb.eval(x) * delta_pow(&b, x),
            &[Center::new(b.a.clone(), 25.0)],
            Symmetry::Axial,
            &spec,
        )
        .unwrap()
        .value;
        let v = norm_sq(&pb, &spec).unwrap();
        assert!((direct - v).abs() < 1e-8 * v, "{direct} {v}");
    }
}
