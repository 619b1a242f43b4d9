//! Universal constants of the bubble expansions.
//!
//! With `p* = 2n/(n-4)` and `c = c_n`:
//!
//! * `S_n = c^{p*} ∫ (1+|y|²)^{-n}`
//! * `c2  = c^{p*} ∫ (1+|y|²)^{-(n+4)/2}`
//! * `c3  = c^{p*}/(2n) ∫ |y|² (1+|y|²)^{-n}`
//! * `c4  = (n-4)/(2n) S_n`, from integrating `δ^{(n+4)/(n-4)} ∂_a δ` by parts
//!   against `K`.

use crate::error::{check_dim, Result};
use crate::numerics::quad::{integrate_radial_rn, QuadratureSpec};
use crate::scalar::Scalar;
use crate::special::{radial_power_integral, sphere_area};
use serde::{Deserialize, Serialize};

/// Closed-form constant set for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub n: usize,
    pub c_n: f64,
    #[serde(rename = "S_n")]
    pub s_n: f64,
    pub c2: f64,
    pub c3: f64,
    /// Closed-form `c4`.
    pub c4: f64,
    /// Numerical estimate of `c4` with its extrapolation spread, if computed.
    pub c4_estimate: Option<C4Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C4Estimate {
    pub value: f64,
    pub spread: f64,
    pub low_confidence: bool,
    /// Raw ratios at the sampled rates, in order.
    pub samples: Vec<(f64, f64)>,
}

impl ConstantSet {
    pub fn new(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(ConstantSet {
            n,
            c_n: c_n::<f64>(n),
            s_n: s_n(n),
            c2: c2(n),
            c3: c3(n),
            c4: c4(n),
            c4_estimate: None,
        })
    }
}

/// `c_n = ((n-4)(n-2)n(n+2))^{(n-4)/8}`.
pub fn c_n<T: Scalar>(n: usize) -> T {
    let nf = T::from_usize(n).unwrap();
    let four = T::lit(4.0);
    let two = T::lit(2.0);
    ((nf - four) * (nf - two) * nf * (nf + two)).powf((nf - four) / T::lit(8.0))
}

fn critical_power_of_c(n: usize) -> f64 {
    let nf = n as f64;
    c_n::<f64>(n).powf(2.0 * nf / (nf - 4.0))
}

pub fn s_n(n: usize) -> f64 {
    critical_power_of_c(n) * sphere_area::<f64>(n) * radial_power_integral(n, n as f64)
}

pub fn c2(n: usize) -> f64 {
    critical_power_of_c(n)
        * sphere_area::<f64>(n)
        * radial_power_integral(n, (n as f64 + 4.0) / 2.0)
}

pub fn c3(n: usize) -> f64 {
    // ∫ r^{n+1}(1+r²)^{-n} dr is the (n+2)-dimensional radial integral.
    let nf = n as f64;
    critical_power_of_c(n) / (2.0 * nf) * sphere_area::<f64>(n) * radial_power_integral(n + 2, nf)
}

pub fn c4(n: usize) -> f64 {
    let nf = n as f64;
    (nf - 4.0) / (2.0 * nf) * s_n(n)
}

/// Rates used by [`c4_estimate`].
pub const C4_LADDER: [f64; 3] = [50.0, 100.0, 200.0];
/// Spread above which the estimate is flagged.
pub const C4_SPREAD_LIMIT: f64 = 0.1;

/// `c4` as the large-λ limit of
/// `−λ (∂J, λ^{-1}∂Pδ/∂a·e) / (2J α^{(n+4)/(n−4)} J^{n/(n−4)} |∇K(a)|)`
/// with `e = ∇K(a)/|∇K(a)|`, for one bubble of weight `alpha` at `a`.
/// The ratio approaches its limit like λ^{-2}, which Richardson steps on
/// consecutive rates remove. The spread is the relative disagreement of the
/// two extrapolants.
pub fn c4_estimate_with(
    k: &crate::morse::KField,
    a: &[f64],
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<C4Estimate> {
    use crate::bubbles::Bubble;
    use crate::energy::{config_norm_sq, grad_pairing_fd, j_quadrature, Direction};
    use crate::projection::{Configuration, Mode};
    let n = k.dim;
    check_dim(n)?;
    let nf = n as f64;
    let g = k.grad(a);
    let gn = crate::scalar::norm(&g);
    if !(gn > 0.0) {
        return Err(crate::error::Error::InvalidInput(
            "c4 estimate needs ∇K(a) ≠ 0".into(),
        ));
    }
    let e: Vec<f64> = g.iter().map(|v| v / gn).collect();
    let mut samples = Vec::new();
    for &l in &C4_LADDER {
        let cfg = Configuration::new(vec![Bubble::new(a.to_vec(), l)], vec![alpha], Mode::Exact)?;
        let j = j_quadrature(&cfg, k, spec)?;
        let al = alpha / config_norm_sq(&cfg, spec)?.sqrt();
        let pairing =
            grad_pairing_fd(&cfg, k, &Direction::A { i: 0, e: e.clone() }, spec)?.finite_difference;
        let denom = 2.0 * j * al.powf((nf + 4.0) / (nf - 4.0)) * j.powf(nf / (nf - 4.0)) * gn;
        samples.push((l, -l * pairing / denom));
    }
    let r1 = (4.0 * samples[1].1 - samples[0].1) / 3.0;
    let r2 = (4.0 * samples[2].1 - samples[1].1) / 3.0;
    let spread = (r2 - r1).abs() / r2.abs();
    Ok(C4Estimate {
        value: r2,
        spread,
        low_confidence: !(spread <= C4_SPREAD_LIMIT),
        samples,
    })
}

/// [`c4_estimate_with`] on the single-bump field at `a = 0.2 e₁`.
pub fn c4_estimate(n: usize, spec: &QuadratureSpec) -> Result<C4Estimate> {
    check_dim(n)?;
    let k = crate::morse::field::single_bump(n)?;
    c4_estimate_with(&k, &crate::scalar::on_axis(n, 0.2), 1.0, spec)
}

/// Quadrature values of `(S_n, c2, c3)` from the defining integrals.
pub fn quadrature_constants(n: usize, spec: &QuadratureSpec) -> Result<(f64, f64, f64)> {
    check_dim(n)?;
    let nf = n as f64;
    let k = critical_power_of_c(n);
    let s = integrate_radial_rn(|r| (1.0 + r * r).powf(-nf), n, spec)?;
    let a = integrate_radial_rn(|r| (1.0 + r * r).powf(-(nf + 4.0) / 2.0), n, spec)?;
    let b = integrate_radial_rn(|r| r * r * (1.0 + r * r).powf(-nf), n, spec)?;
    Ok((k * s, k * a, k * b / (2.0 * nf)))
}

/// Sum of terms `coef · (1+s)^{-m}`, closed under the radial Laplacian in `s = r²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub terms: Vec<(f64, f64)>,
}

impl RadialProfile {
    pub fn power(coef: f64, m: f64) -> Self {
        RadialProfile {
            terms: vec![(coef, m)],
        }
    }

    /// `Δ` in `R^n` of `h(|x|²)`, i.e. `4 s h'' + 2n h'`.
    pub fn laplacian(&self, n: usize) -> Self {
        let nf = n as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut push = |c: f64, m: f64| {
            if let Some(t) = out.iter_mut().find(|t| (t.1 - m).abs() < 1e-12) {
                t.0 += c;
            } else {
                out.push((c, m));
            }
        };
        for &(c, m) in &self.terms {
            push(c * (4.0 * m * (m + 1.0) - 2.0 * nf * m), m + 1.0);
            push(-c * 4.0 * m * (m + 1.0), m + 2.0);
        }
        RadialProfile { terms: out }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, m)| c * (1.0 + s).powf(-m))
            .sum()
    }
}

/// Max relative residual `|Δ²δ − δ^{(n+4)/(n-4)}| / δ^{(n+4)/(n-4)}` over
/// seeded sample points, with `Δ²` applied symbolically.
pub fn residual_check(n: usize, samples: usize, seed: u64) -> Result<f64> {
    check_dim(n)?;
    let nf = n as f64;
    let mu = (nf - 4.0) / 2.0;
    let c = c_n::<f64>(n);
    let bilap = RadialProfile::power(1.0, mu).laplacian(n).laplacian(n);
    let p = (nf + 4.0) / (nf - 4.0);
    let pts = crate::numerics::qmc::halton(3, samples, seed);
    let mut worst = 0.0f64;
    for u in pts {
        // λ in [0.1, 1e3] log-uniform, |x - a| in [0, 2].
        let lam = 10f64.powf(-1.0 + 4.0 * u[0]);
        let r = 2.0 * u[1];
        let s = lam * lam * r * r;
        // δ = c λ^μ h(λ² r²)  ⇒  Δ²δ = c λ^{μ+4} (L² h)(λ² r²)
        let lhs = c * lam.powf(mu + 4.0) * bilap.eval(s);
        let rhs = (c * lam.powf(mu) * (1.0 + s).powf(-mu)).powf(p);
        worst = worst.max(((lhs - rhs) / rhs).abs());
    }
    Ok(worst)
}
