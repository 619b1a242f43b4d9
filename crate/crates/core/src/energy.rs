//! The functional `J(u) = (∫_Ω K|u|^{2n/(n−4)})^{−(n−4)/n}` on sums of
//! projected bubbles: direct quadrature, the asymptotic expansion, gradient
//! pairings along the bubble parameters and the negative-part indicator.
//!
//! Quadrature uses the 0-homogeneous extension
//! `Ĵ(u) = ‖u‖₂² (∫ K|u|^{2n/(n−4)})^{−(n−4)/n}`, which equals `J(u/‖u‖₂)`.

use crate::bubbles::{eps, eps_derivs, Bubble, BubblePair};
use crate::constants::{c2, c3, c4, s_n};
use crate::error::{Error, Result};
use crate::green::{grad_h, regular_part_h, robin, robin_grad};
use crate::morse::KField;
use crate::numerics::quad::{integrate_ball, integrate_fixed, Center, Domain, QuadratureSpec};
use crate::projection::{inner_product, norm_sq, Configuration, Field};
use crate::scalar::{dot, norm};
use serde::{Deserialize, Serialize};

fn q_exp(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 - 4.0)
}

/// Terms of the expansion; they add up to `J_expansion` in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `S_n^{4/n} Σα_i² / (Σα_i^{2n/(n−4)} K(a_i))^{(n−4)/n}`
    pub leading: f64,
    pub laplacian_term: f64,
    pub robin_term: f64,
    pub interaction_term: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.leading + self.laplacian_term + self.robin_term + self.interaction_term
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub j_quadrature: Option<f64>,
    pub j_expansion: f64,
    pub breakdown: EnergyBreakdown,
    /// Size of the dropped remainder's argument,
    /// `Σλ_k^{−2} + Σ(λ_k d_k)^{−(n−4)} + Σ_{i≠j} ε_ij`.
    pub remainder_scale: f64,
    pub remainder_order: String,
    /// `|J_quadrature − J_expansion|` when the quadrature was run.
    pub gap: Option<f64>,
}

fn bubbles(cfg: &Configuration) -> Vec<&Bubble<f64>> {
    cfg.bubbles.iter().map(|b| &b.bubble).collect()
}

fn check_k(cfg: &Configuration, k: &KField) -> Result<()> {
    if cfg.dim() != k.dim {
        return Err(Error::InvalidInput(format!(
            "configuration dimension {} differs from K dimension {}",
            cfg.dim(),
            k.dim
        )));
    }
    Ok(())
}

/// `‖Σα_i Pδ_i‖₂²` by quadrature.
pub fn config_norm_sq(cfg: &Configuration, spec: &QuadratureSpec) -> Result<f64> {
    let m = cfg.bubbles.len();
    let mut total = 0.0;
    for i in 0..m {
        total += cfg.alphas[i] * cfg.alphas[i] * norm_sq(&cfg.bubbles[i], spec)?;
        for j in i + 1..m {
            total += 2.0
                * cfg.alphas[i]
                * cfg.alphas[j]
                * inner_product(&cfg.bubbles[i], &cfg.bubbles[j], spec)?;
        }
    }
    Ok(total)
}

fn k_integral_rule<'a>(
    cfg: &'a Configuration,
    k: &'a KField,
) -> (
    impl Fn(&[f64]) -> f64 + Sync + 'a,
    Vec<Center>,
    crate::numerics::quad::Symmetry,
) {
    let q = q_exp(cfg.dim());
    let centers = cfg.centers();
    let pts: Vec<&[f64]> = cfg.bubbles.iter().map(|b| b.bubble.a.as_slice()).collect();
    let sym = k.integrand_symmetry(&pts);
    let f = move |x: &[f64]| k.value(x) * cfg.eval(x).abs().powf(q);
    (f, centers, sym)
}

/// `∫_Ω K |u|^{2n/(n−4)}`.
pub fn k_integral(cfg: &Configuration, k: &KField, spec: &QuadratureSpec) -> Result<f64> {
    check_k(cfg, k)?;
    let (f, centers, sym) = k_integral_rule(cfg, k);
    Ok(integrate_ball(cfg.dim(), &f, &centers, sym, spec)?.value)
}

fn j_from(n: usize, norm2: f64, integral: f64) -> Result<f64> {
    if !(norm2 > 0.0) || !(integral > 0.0) {
        return Err(Error::Degenerate("vanishing norm or K-integral".into()));
    }
    let nf = n as f64;
    Ok(norm2 * integral.powf(-(nf - 4.0) / nf))
}

/// `J(u/‖u‖₂)` for `u = Σα_i Pδ_i`.
pub fn j_quadrature(cfg: &Configuration, k: &KField, spec: &QuadratureSpec) -> Result<f64> {
    let integral = k_integral(cfg, k, spec)?;
    let norm2 = config_norm_sq(cfg, spec)?;
    j_from(cfg.dim(), norm2, integral)
}

/// `J` with the K-integral on a fixed rule, for smooth finite differences.
fn j_quadrature_level(
    cfg: &Configuration,
    k: &KField,
    spec: &QuadratureSpec,
    level: usize,
) -> Result<f64> {
    check_k(cfg, k)?;
    let (f, centers, sym) = k_integral_rule(cfg, k);
    let (integral, _) =
        integrate_fixed(cfg.dim(), &f, &centers, Domain::UnitBall, sym, spec, level)?;
    let norm2 = config_norm_sq(cfg, spec)?;
    j_from(cfg.dim(), norm2, integral)
}

/// The expansion of `J` with `v = 0` and the remainder dropped.
pub fn j_expansion(cfg: &Configuration, k: &KField) -> Result<EnergyReport> {
    check_k(cfg, k)?;
    j_expansion_of(&bubbles(cfg), &cfg.alphas, k)
}

fn check_params(bs: &[&Bubble<f64>], alphas: &[f64], k: &KField) -> Result<()> {
    if bs.is_empty() || bs.len() != alphas.len() {
        return Err(Error::InvalidInput("need one weight per bubble".into()));
    }
    if bs.iter().any(|b| b.dim() != k.dim) {
        return Err(Error::InvalidInput("bubble and K dimensions differ".into()));
    }
    Ok(())
}

/// [`j_expansion`] on raw parameters.
pub fn j_expansion_of(bs: &[&Bubble<f64>], alphas: &[f64], k: &KField) -> Result<EnergyReport> {
    check_params(bs, alphas, k)?;
    let n = k.dim;
    let nf = n as f64;
    let q = q_exp(n);
    let s = s_n(n);
    let kv: Vec<f64> = bs.iter().map(|b| k.value(&b.a)).collect();
    if kv.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput(
            "K must be positive at the concentration points".into(),
        ));
    }
    let a = alphas;
    let num: f64 = a.iter().map(|x| x * x).sum();
    let den: f64 = a.iter().zip(&kv).map(|(x, kk)| x.powf(q) * kk).sum();
    let leading = s.powf(4.0 / nf) * num / den.powf((nf - 4.0) / nf);
    let d: f64 = s * kv.iter().map(|kk| kk.powf((4.0 - nf) / 4.0)).sum::<f64>();

    let mut lap = 0.0;
    let mut rob = 0.0;
    let mut inter = 0.0;
    let mut scale = 0.0;
    for (i, b) in bs.iter().enumerate() {
        let l = b.lambda;
        lap += k.laplacian(&b.a) / (kv[i].powf(nf / 4.0) * l * l);
        rob += robin(&b.a)? / (kv[i].powf((nf - 4.0) / 4.0) * l.powf(nf - 4.0));
        scale += l.powi(-2) + (l * (1.0 - norm(&b.a))).powf(4.0 - nf);
        for (j, c) in bs.iter().enumerate() {
            if i == j {
                continue;
            }
            let e = eps(&BubblePair::new((*b).clone(), (*c).clone()));
            let h = regular_part_h(&b.a, &c.a)?;
            inter += (e - h / (l * c.lambda).powf((nf - 4.0) / 2.0))
                / (kv[i] * kv[j]).powf((nf - 4.0) / 8.0);
            scale += e;
        }
    }
    let breakdown = EnergyBreakdown {
        leading,
        laplacian_term: leading * (-(nf - 4.0) / nf * c3(n) * lap / d),
        robin_term: leading * (c2(n) * rob / d),
        interaction_term: leading * (-c2(n) * inter / d),
    };
    Ok(EnergyReport {
        j_quadrature: None,
        j_expansion: breakdown.total(),
        breakdown,
        remainder_scale: scale,
        remainder_order: "o(Σλ_k^-2 + Σ(λ_k d_k)^-(n-4) + Σε_ij)".into(),
        gap: None,
    })
}

/// Expansion plus quadrature, with the gap between them.
pub fn energy_report(
    cfg: &Configuration,
    k: &KField,
    spec: &QuadratureSpec,
) -> Result<EnergyReport> {
    let mut r = j_expansion(cfg, k)?;
    let jq = j_quadrature(cfg, k, spec)?;
    r.gap = Some((jq - r.j_expansion).abs());
    r.j_quadrature = Some(jq);
    Ok(r)
}

/// Generator of a parameter direction of bubble `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Direction {
    /// `λ_i ∂Pδ_i/∂λ_i`
    Lambda { i: usize },
    /// `λ_i^{-1} ∂Pδ_i/∂a_i · e`, `e` a unit vector.
    A { i: usize, e: Vec<f64> },
}

impl Direction {
    fn index(&self) -> usize {
        match self {
            Direction::Lambda { i } | Direction::A { i, .. } => *i,
        }
    }

    fn check(&self, count: usize, dim: usize) -> Result<()> {
        if self.index() >= count {
            return Err(Error::InvalidInput(
                "direction refers to a missing bubble".into(),
            ));
        }
        if let Direction::A { e, .. } = self {
            if e.len() != dim || (norm(e) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(
                    "a-direction must be a unit vector of the right dimension".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Weights scaled so that the expansion of `‖u‖₂²` equals one.
pub fn normalized_alphas(cfg: &Configuration) -> Result<Vec<f64>> {
    normalized_alphas_of(&bubbles(cfg), &cfg.alphas)
}

pub fn normalized_alphas_of(bs: &[&Bubble<f64>], a: &[f64]) -> Result<Vec<f64>> {
    let n = bs[0].dim();
    let nf = n as f64;
    let mut total = 0.0;
    for (i, b) in bs.iter().enumerate() {
        total += a[i] * a[i] * (s_n(n) - c2(n) * robin(&b.a)? / b.lambda.powf(nf - 4.0));
        for (j, c) in bs.iter().enumerate() {
            if i != j {
                let e = eps(&BubblePair::new((*b).clone(), (*c).clone()));
                let h = regular_part_h(&b.a, &c.a)?;
                total +=
                    a[i] * a[j] * c2(n) * (e - h / (b.lambda * c.lambda).powf((nf - 4.0) / 2.0));
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "expansion of the norm is not positive".into(),
        ));
    }
    let s = total.sqrt();
    Ok(a.iter().map(|x| x / s).collect())
}

/// `(∂J(u), D)₂` from the expansions with remainders dropped, at the
/// normalized configuration.
pub fn grad_pairing_expansion(cfg: &Configuration, k: &KField, dir: &Direction) -> Result<f64> {
    check_k(cfg, k)?;
    dir.check(cfg.bubbles.len(), cfg.dim())?;
    grad_pairing_expansion_of(&bubbles(cfg), &cfg.alphas, k, dir)
}

/// [`grad_pairing_expansion`] on raw parameters.
pub fn grad_pairing_expansion_of(
    bs: &[&Bubble<f64>],
    alphas: &[f64],
    k: &KField,
    dir: &Direction,
) -> Result<f64> {
    check_params(bs, alphas, k)?;
    dir.check(bs.len(), k.dim)?;
    let n = k.dim;
    let nf = n as f64;
    let mu = (nf - 4.0) / 2.0;
    let j = j_expansion_of(bs, alphas, k)?.j_expansion;
    let jp = j.powf(nf / (nf - 4.0));
    let al = normalized_alphas_of(bs, alphas)?;
    let i = dir.index();
    let bi = bs[i];
    let (li, ki) = (bi.lambda, k.value(&bi.a));
    let c2n = c2(n);
    let bracket = match dir {
        Direction::Lambda { .. } => {
            let mut v = (nf - 4.0) / nf * c3(n) * al[i] * k.laplacian(&bi.a) / (ki * li * li)
                - mu * c2n * al[i] * robin(&bi.a)? / li.powf(nf - 4.0);
            for (jdx, bj) in bs.iter().enumerate() {
                if jdx == i {
                    continue;
                }
                let (dl, _) = eps_derivs(&BubblePair::new(bi.clone(), (*bj).clone()));
                let h = regular_part_h(&bi.a, &bj.a)?;
                v -= c2n * al[jdx] * (dl + mu * h / (li * bj.lambda).powf(mu));
            }
            v
        }
        Direction::A { e, .. } => {
            let gk = dot(&k.grad(&bi.a), e);
            let gr = dot(&robin_grad(&bi.a)?, e);
            let mut v = -c4(n) * al[i].powf((nf + 4.0) / (nf - 4.0)) * jp * gk / li
                + 0.5 * c2n * al[i] * gr / li.powf(nf - 3.0);
            for (jdx, bj) in bs.iter().enumerate() {
                if jdx == i {
                    continue;
                }
                let (_, da) = eps_derivs(&BubblePair::new(bi.clone(), (*bj).clone()));
                let gh = dot(&grad_h(&bi.a, &bj.a)?, e);
                let kj = k.value(&bj.a);
                let balance = 1.0
                    - jp * (al[i].powf(8.0 / (nf - 4.0)) * ki
                        + al[jdx].powf(8.0 / (nf - 4.0)) * kj);
                v +=
                    c2n * al[jdx] * (dot(&da, e) - gh / ((li * bj.lambda).powf(mu) * li)) * balance;
            }
            v
        }
    };
    Ok(2.0 * j * bracket)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub direction: Direction,
    pub expansion: f64,
    /// Richardson combination of the two central differences.
    pub finite_difference: f64,
    pub fd_step: f64,
    pub fd_at_step: f64,
    pub fd_at_half_step: f64,
    /// `|fd(h/2) − fd(h)| / |fd(h/2)|`
    pub step_change: f64,
    pub relative_gap: f64,
    pub noise_floor: f64,
    /// The difference quotient is not resolved above quadrature noise.
    pub below_noise: bool,
}

fn perturbed(cfg: &Configuration, dir: &Direction, t: f64) -> Result<Configuration> {
    let mut bs: Vec<Bubble<f64>> = cfg.bubbles.iter().map(|b| b.bubble.clone()).collect();
    let mode = cfg.bubbles[0].mode;
    match dir {
        Direction::Lambda { i } => bs[*i].lambda *= t.exp(),
        Direction::A { i, e } => {
            let l = bs[*i].lambda;
            for (a, v) in bs[*i].a.iter_mut().zip(e) {
                *a += t * v / l;
            }
        }
    }
    Configuration::new(bs, cfg.alphas.clone(), mode)
}

/// Default step of the finite-difference pairing.
pub const FD_STEP: f64 = 0.02;

/// Central differences of `Ĵ` under the generating perturbation, at steps
/// `h` and `h/2`, divided by the normalized weight of the moving bubble.
pub fn grad_pairing_fd(
    cfg: &Configuration,
    k: &KField,
    dir: &Direction,
    spec: &QuadratureSpec,
) -> Result<PairingReport> {
    grad_pairing_fd_step(cfg, k, dir, spec, FD_STEP)
}

pub fn grad_pairing_fd_step(
    cfg: &Configuration,
    k: &KField,
    dir: &Direction,
    spec: &QuadratureSpec,
    h: f64,
) -> Result<PairingReport> {
    check_k(cfg, k)?;
    dir.check(cfg.bubbles.len(), cfg.dim())?;
    // One rule level for every evaluation keeps Ĵ smooth in the parameters.
    let base_level = {
        let (f, centers, sym) = k_integral_rule(cfg, k);
        crate::numerics::quad::refine(spec, |lv| {
            integrate_fixed(cfg.dim(), &f, &centers, Domain::UnitBall, sym, spec, lv)
        })?
        .level
    };
    let j_at = |t: f64| -> Result<f64> {
        j_quadrature_level(&perturbed(cfg, dir, t)?, k, spec, base_level)
    };
    let norm2 = config_norm_sq(cfg, spec)?;
    let alpha = cfg.alphas[dir.index()] / norm2.sqrt();
    let d = |s: f64| -> Result<f64> { Ok((j_at(s)? - j_at(-s)?) / (2.0 * s * alpha)) };
    let d1 = d(h)?;
    let d2 = d(0.5 * h)?;
    let rich = (4.0 * d2 - d1) / 3.0;
    let j0 = j_quadrature_level(cfg, k, spec, base_level)?;
    let noise_floor = j0 * spec.tolerance.max(1e-14) / (h * alpha);
    let expansion = grad_pairing_expansion(cfg, k, dir)?;
    Ok(PairingReport {
        direction: dir.clone(),
        expansion,
        finite_difference: rich,
        fd_step: h,
        fd_at_step: d1,
        fd_at_half_step: d2,
        step_change: (d2 - d1).abs() / d2.abs().max(f64::MIN_POSITIVE),
        relative_gap: (rich - expansion).abs() / rich.abs().max(f64::MIN_POSITIVE),
        noise_floor,
        below_noise: rich.abs() <= noise_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativePart {
    /// `|u⁻|_{L^{2n/(n−4)}}`
    pub neg_norm: f64,
    pub j: f64,
    /// `ln(J^{(2n−4)/(n−4)} e^{2J} |u⁻|^{8/(n−4)})`, `−∞` when `u ≥ 0`.
    pub log_indicator: f64,
    pub eta: f64,
    pub in_v_eta: bool,
}

/// Negative-part norm of `u` and membership in `V_η(Σ⁺)`. `J(u)` needs the
/// energy norm of the field.
pub fn negative_part_indicator(
    u: &dyn Field,
    k: &KField,
    spec: &QuadratureSpec,
    eta: f64,
) -> Result<NegativePart> {
    let n = u.dim();
    if n != k.dim {
        return Err(Error::InvalidInput("field and K dimensions differ".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidInput("η must be positive".into()));
    }
    let nf = n as f64;
    let q = q_exp(n);
    let mut centers = u.quadrature_centers();
    if centers.is_empty() {
        centers.push(Center::new(vec![0.0; n], 1.0));
    }
    let pts: Vec<&[f64]> = centers.iter().map(|c| c.point.as_slice()).collect();
    let sym = u.symmetry().join(k.integrand_symmetry(&pts));
    let sym = if sym == crate::numerics::quad::Symmetry::Radial && centers.len() > 1 {
        crate::numerics::quad::Symmetry::Full
    } else {
        sym
    };
    let neg = |x: &[f64]| (-u.eval(x)).max(0.0).powf(q);
    let kint = |x: &[f64]| k.value(x) * u.eval(x).abs().powf(q);
    // The kink of u⁻ slows convergence; accept the last estimate.
    let fixed = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| -> Result<f64> {
        let lv = spec.max_refinements;
        Ok(integrate_fixed(n, &f, &centers, Domain::UnitBall, sym, spec, lv)?.0)
    };
    let neg_int = fixed(&neg)?;
    let k_int = fixed(&kint)?;
    let norm2 = u
        .energy_norm_sq()
        .ok_or_else(|| Error::InvalidInput("field has no energy norm".into()))?;
    let j = j_from(n, norm2, k_int)?;
    let neg_norm = neg_int.max(0.0).powf(1.0 / q);
    let log_indicator = if neg_norm > 0.0 {
        (2.0 * nf - 4.0) / (nf - 4.0) * j.ln() + 2.0 * j + 8.0 / (nf - 4.0) * neg_norm.ln()
    } else {
        f64::NEG_INFINITY
    };
    Ok(NegativePart {
        neg_norm,
        j,
        log_indicator,
        eta,
        in_v_eta: log_indicator < eta.ln(),
    })
}
