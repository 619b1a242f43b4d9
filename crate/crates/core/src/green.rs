//! Green function of `Δ²` on the unit ball with Navier conditions
//! `G = ΔG = 0` on the sphere, normalized so that `G = |x−y|^{4−n} − H`.
//!
//! `H` is evaluated from its Gegenbauer expansion. Writing `r = |x|`,
//! `s = |y|`, `t = x̂·ŷ`, `ν = (n−2)/2`,
//!
//! ```text
//! H = (n−4) Σ_p (rs)^p C_p^ν(t) [ (1 + 1/(2p+n−4) − 1/(2p+n)) / (p+ν) − (r²+s²)/(2p+n) ]
//! ```
//!
//! which is the mode-by-mode evaluation of `κ_n ∫ G_L(x,z) G_L(z,y) dz` after
//! the singular part has been removed. The iterated integral itself is
//! available as an independent quadrature check.

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_ball, Center, QuadratureSpec, Symmetry};
use crate::scalar::{dist, dot, norm, Scalar};
use crate::special::sphere_area;
use serde::{Deserialize, Serialize};

/// `κ_n = 2(n−4)(n−2)ω_{n−1}`, so that `Δ² |x|^{4−n} = κ_n δ_0`.
pub fn kappa<T: Scalar>(n: usize) -> T {
    let nf = T::from_usize(n).unwrap();
    T::lit(2.0) * (nf - T::lit(4.0)) * (nf - T::lit(2.0)) * sphere_area::<T>(n)
}

/// Fundamental solution of `−Δ`: `r^{2−n} / ((n−2) ω_{n−1})`.
pub fn laplace_fundamental<T: Scalar>(n: usize, r: T) -> T {
    let nf = T::from_usize(n).unwrap();
    r.powf(T::lit(2.0) - nf) / ((nf - T::lit(2.0)) * sphere_area::<T>(n))
}

fn check_interior<T: Scalar>(x: &[T]) -> Result<()> {
    let r = norm(x).to_f64_lossy();
    if !(r < 1.0) {
        return Err(Error::InvalidInput(format!(
            "point with |x| = {r} is not interior"
        )));
    }
    Ok(())
}

/// Dirichlet Green function of `−Δ` on the unit ball (image charge).
pub fn green_laplacian_ball<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_interior(x)?;
    check_interior(y)?;
    let n = x.len();
    let d = dist(x, y);
    if d == T::zero() {
        return Err(Error::CoincidentPoints(0.0));
    }
    let img = (dot(x, x) * dot(y, y) - T::lit(2.0) * dot(x, y) + T::one()).sqrt();
    Ok(laplace_fundamental(n, d) - laplace_fundamental(n, img))
}

fn polar<T: Scalar>(x: &[T], y: &[T]) -> (T, T, T) {
    let r = norm(x);
    let s = norm(y);
    let t = if r == T::zero() || s == T::zero() {
        T::one()
    } else {
        (dot(x, y) / (r * s)).max(-T::one()).min(T::one())
    };
    (r, s, t)
}

/// Sums the mode series for `H` and `∂_ρ H(ρ ê, ρ ê)` from `(r, s, t)`.
fn h_series<T: Scalar>(n: usize, r: T, s: T, t: T) -> T {
    let nf = T::from_usize(n).unwrap();
    let one = T::one();
    let two = T::lit(2.0);
    let nu = (nf - two) / two;
    let rs = r * s;
    let r2s2 = r * r + s * s;
    let mut sum = T::zero();
    // Gegenbauer recurrence for C_p(t) and the bound C_p(1).
    let (mut cm1, mut c0) = (T::zero(), one);
    let mut bound = one;
    let mut pw = one;
    let tol = T::epsilon() * T::lit(0.25);
    let mut p = 0usize;
    loop {
        let pf = T::from_usize(p).unwrap();
        let a = (one + one / (two * pf + nf - T::lit(4.0)) - one / (two * pf + nf)) / (pf + nu);
        let b = r2s2 / (two * pf + nf);
        let term = pw * c0 * (a - b);
        sum = sum + term;
        let envelope = pw * bound * (a + b);
        if rs == T::zero() || (p > 4 && envelope <= tol * sum.abs()) || p > 200_000 {
            break;
        }
        // advance to p + 1
        let next = if p == 0 {
            two * nu * t
        } else {
            (two * t * (pf + nu) * c0 - (pf + two * nu - one) * cm1) / (pf + one)
        };
        cm1 = c0;
        c0 = next;
        bound = bound * (pf + two * nu) / (pf + one);
        pw = pw * rs;
        p += 1;
    }
    (nf - T::lit(4.0)) * sum
}

/// Regular part `H(x, y)`; smooth and finite on the diagonal.
pub fn regular_part_h<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_interior(x)?;
    check_interior(y)?;
    let (r, s, t) = polar(x, y);
    Ok(h_series(x.len(), r, s, t))
}

/// `G(x, y) = |x−y|^{4−n} − H(x, y)`.
pub fn green_navier<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let d = dist(x, y);
    if d == T::zero() {
        return Err(Error::CoincidentPoints(0.0));
    }
    let n = x.len();
    let h = regular_part_h(x, y)?;
    Ok(d.powf(T::lit(4.0) - T::from_usize(n).unwrap()) - h)
}

/// Robin diagonal `H(a, a)`.
pub fn robin<T: Scalar>(a: &[T]) -> Result<T> {
    regular_part_h(a, a)
}

/// `H(0, 0) = 2(n−2)/n` from the two-stage radial solve.
pub fn robin_center(n: usize) -> f64 {
    2.0 * (n as f64 - 2.0) / n as f64
}

/// Radial oracle: `H(0, y) = 2(n−2)/n − (n−4)|y|²/n`.
pub fn h_center_radial(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    robin_center(n) - (nf - 4.0) * s * s / nf
}

/// `d/dρ H(ρ ê, ρ ê)`, the radial derivative of the Robin diagonal.
pub fn robin_radial_derivative(n: usize, rho: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("radius {rho} not in [0,1)")));
    }
    let nf = n as f64;
    let nu = (nf - 2.0) / 2.0;
    let r2 = rho * rho;
    let mut sum = 0.0;
    let mut c1 = 1.0; // C_p^ν(1)
    let mut pw = 1.0; // ρ^{2p}
    let mut p = 0usize;
    loop {
        let pf = p as f64;
        let a = (1.0 + 1.0 / (2.0 * pf + nf - 4.0) - 1.0 / (2.0 * pf + nf)) / (pf + nu);
        // d/dρ [ρ^{2p} (a − 2ρ²/(2p+n))]
        let term = c1
            * pw
            * (2.0 * pf * a / rho.max(f64::MIN_POSITIVE)
                - 2.0 * (2.0 * pf + 2.0) * rho / (2.0 * pf + nf));
        let term = if p == 0 { -4.0 * rho / nf } else { term };
        sum += term;
        if rho == 0.0 || (p > 4 && term.abs() <= 1e-17 * sum.abs()) || p > 400_000 {
            break;
        }
        c1 *= (pf + 2.0 * nu) / (pf + 1.0);
        pw *= r2;
        p += 1;
    }
    Ok((nf - 4.0) * sum)
}

/// `∇_a H(a, a)` (derivative of the diagonal).
pub fn robin_grad(a: &[f64]) -> Result<Vec<f64>> {
    check_interior(a)?;
    let r = norm(a);
    if r == 0.0 {
        return Ok(vec![0.0; a.len()]);
    }
    let d = robin_radial_derivative(a.len(), r)?;
    Ok(a.iter().map(|v| d * v / r).collect())
}

/// Gradient of `H` in its first argument by central differences, step
/// proportional to the distance to the boundary.
pub fn grad_h(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_interior(x)?;
    let h = 1e-4 * (1.0 - norm(x)).min(0.1);
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let up = regular_part_h(&xp, y)?;
        xp[k] = x[k] - h;
        let dn = regular_part_h(&xp, y)?;
        xp[k] = x[k];
        out.push((up - dn) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    #[serde(rename = "H")]
    pub h: f64,
    pub grad_h: Vec<f64>,
}

pub fn green_eval(x: &[f64], y: &[f64]) -> Result<GreenEval> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    crate::error::check_dim(x.len())?;
    let h = regular_part_h(x, y)?;
    let g = if dist(x, y) > 0.0 {
        Some(green_navier(x, y)?)
    } else {
        None
    };
    Ok(GreenEval {
        x: x.to_vec(),
        y: y.to_vec(),
        g,
        h,
        grad_h: grad_h(x, y)?,
    })
}

/// `κ_n ∫_Ω G_L(x,z) G_L(z,y) dz` by quadrature, after rotating the pair into
/// the `e_1 e_2` plane.
pub fn green_navier_quadrature(x: &[f64], y: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    check_interior(x)?;
    check_interior(y)?;
    let n = x.len();
    let d = dist(x, y);
    if d < 1e-6 {
        return Err(Error::CoincidentPoints(d));
    }
    let (r, s, t) = polar(x, y);
    let mut xp = vec![0.0; n];
    xp[0] = r;
    let mut yp = vec![0.0; n];
    yp[0] = s * t;
    yp[1] = s * (1.0 - t * t).max(0.0).sqrt();
    let gl = |z: &[f64]| -> f64 {
        let g1 = green_laplacian_ball(&xp, z).unwrap_or(0.0);
        let g2 = green_laplacian_ball(z, &yp).unwrap_or(0.0);
        g1 * g2
    };
    let lam = 10.0 / d;
    let centers = [Center::new(xp.clone(), lam), Center::new(yp.clone(), lam)];
    let sym = Symmetry::of_points([xp.as_slice(), yp.as_slice()]);
    let res = integrate_ball(n, &gl, &centers, sym, spec)?;
    Ok(kappa::<f64>(n) * res.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub r_squared: f64,
    pub samples: Vec<(f64, f64)>,
    pub poor_fit: bool,
}

/// Log-log fit of `∂H(a,a)/∂ν` against `d(a)` along a ray.
pub fn dh_dnu_rate_check(n: usize, direction: &[f64], ladder: &[f64]) -> Result<RateFit> {
    crate::error::check_dim(n)?;
    let dn = norm(direction);
    if direction.len() != n || dn == 0.0 {
        return Err(Error::InvalidInput(
            "direction must be a nonzero vector in R^n".into(),
        ));
    }
    let mut samples = Vec::new();
    for &d in ladder {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidInput(format!("distance {d} out of (0,1)")));
        }
        let a: Vec<f64> = direction.iter().map(|v| (1.0 - d) * v / dn).collect();
        let g = robin_grad(&a)?;
        let dnu = dot(&g, direction) / dn;
        samples.push((d, dnu));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.abs().ln()).collect();
    let slope = crate::bubbles::ls_slope(&xs, &ys);
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let f = my + slope * (x - mx);
            (y - f) * (y - f)
        })
        .sum();
    let r2 = 1.0 - ss_res / ss_tot;
    Ok(RateFit {
        exponent: slope,
        r_squared: r2,
        samples,
        poor_fit: r2 < 0.99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[f64], n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[..v.len()].copy_from_slice(v);
        x
    }

    #[test]
    fn laplacian_green_center_n5() {
        let y = pt(&[0.0, 0.5], 5);
        let g = green_laplacian_ball(&[0.0; 5], &y).unwrap();
        let k5 = 1.0 / (3.0 * sphere_area::<f64>(5));
        assert!((g - k5 * (0.5f64.powi(-3) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn laplacian_green_vanishes_on_boundary() {
        let x = pt(&[0.2, 0.3], 6);
        let y = pt(&[0.0, 0.0, 1.0 - 1e-12], 6);
        assert!(green_laplacian_ball(&x, &y).unwrap().abs() < 1e-9);
    }

    #[test]
    fn center_values_match_radial_oracle() {
        for n in 5..=10 {
            let h = robin(&vec![0.0; n]).unwrap();
            assert!((h - robin_center(n)).abs() < 1e-14);
            let y = pt(&[0.1, 0.4, -0.2], n);
            let s = norm(&y);
            let hy = regular_part_h(&vec![0.0; n], &y).unwrap();
            assert!((hy - h_center_radial(n, s)).abs() < 1e-13);
        }
        assert!((robin_center(6) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn navier_boundary_conditions() {
        // G and ΔG vanish as y reaches the sphere.
        let n = 7;
        let x = pt(&[0.3, -0.2], n);
        let rho = 1.0 - 1e-6;
        let y = pt(&[0.0, 0.6 * rho, 0.8 * rho], n);
        let g = green_navier(&x, &y).unwrap();
        assert!(g.abs() < 1e-4, "{g}");
        let h = 1e-3;
        let lap = |y: &[f64]| -> f64 {
            let c = green_navier(&x, y).unwrap();
            let mut acc = 0.0;
            let mut yy = y.to_vec();
            for k in 0..n {
                yy[k] = y[k] + h;
                acc += green_navier(&x, &yy).unwrap();
                yy[k] = y[k] - h;
                acc += green_navier(&x, &yy).unwrap();
                yy[k] = y[k];
            }
            (acc - 2.0 * n as f64 * c) / (h * h)
        };
        let near = pt(&[0.0, 0.6 * (1.0 - 2e-3), 0.8 * (1.0 - 2e-3)], n);
        let mid = pt(&[0.0, 0.3, 0.4], n);
        assert!(lap(&near).abs() < 2e-2 * lap(&mid).abs());
    }

    #[test]
    fn h_is_biharmonic_in_second_argument() {
        let n = 6;
        let x = pt(&[0.2, 0.1], n);
        let y0 = pt(&[-0.1, 0.3, 0.2], n);
        let h = 2e-2;
        let lap = |y: &[f64]| -> f64 {
            let c = regular_part_h(&x, y).unwrap();
            let mut acc = 0.0;
            let mut yy = y.to_vec();
            for k in 0..n {
                yy[k] = y[k] + h;
                acc += regular_part_h(&x, &yy).unwrap();
                yy[k] = y[k] - h;
                acc += regular_part_h(&x, &yy).unwrap();
                yy[k] = y[k];
            }
            (acc - 2.0 * n as f64 * c) / (h * h)
        };
        let c = lap(&y0);
        let mut acc = 0.0;
        let mut yy = y0.clone();
        for k in 0..n {
            yy[k] = y0[k] + h;
            acc += lap(&yy);
            yy[k] = y0[k] - h;
            acc += lap(&yy);
            yy[k] = y0[k];
        }
        let bilap = (acc - 2.0 * n as f64 * c) / (h * h);
        let scale = regular_part_h(&x, &y0).unwrap();
        assert!(bilap.abs() < 1e-3 * scale, "{bilap} vs {scale}");
    }

    #[test]
    fn spectral_matches_iterated_kernel() {
        let spec = QuadratureSpec {
            tolerance: 1e-7,
            ..Default::default()
        };
        for (n, x, y) in [
            (6, pt(&[0.3, 0.1], 6), pt(&[-0.2, 0.4, 0.1], 6)),
            (7, pt(&[0.5], 7), pt(&[0.1, -0.2], 7)),
        ] {
            let q = green_navier_quadrature(&x, &y, &spec).unwrap();
            let g = green_navier(&x, &y).unwrap();
            assert!((q - g).abs() < 1e-5 * g, "n={n}: {q} vs {g}");
        }
    }

    #[test]
    fn near_diagonal_normalization() {
        let n = 6;
        let x = vec![0.0; n];
        let y = pt(&[0.01], n);
        let v = green_navier(&x, &y).unwrap() * 0.01f64.powi(2);
        assert!((v - 1.0).abs() < 0.02);
    }

    #[test]
    fn robin_derivative_matches_fd() {
        let n = 7;
        for rho in [0.0, 0.3, 0.8, 0.95] {
            let d = robin_radial_derivative(n, rho).unwrap();
            let h = 1e-5;
            let up = robin(&pt(&[rho + h], n)).unwrap();
            let dn = robin(&pt(&[rho - h], n)).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6 * fd.abs().max(1.0), "{rho}: {d} {fd}");
        }
    }

    #[test]
    fn robin_boundary_blowup_bounded_ratio() {
        let n = 6;
        let vals: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|d| robin(&pt(&[1.0 - d], n)).unwrap() * d.powi(2))
            .collect();
        assert!(vals.iter().all(|v| *v > 0.05 && *v < 1.0), "{vals:?}");
    }

    #[test]
    fn rate_is_direction_independent() {
        let ladder = [0.2, 0.14, 0.1, 0.07, 0.05];
        let a = dh_dnu_rate_check(7, &pt(&[1.0], 7), &ladder).unwrap();
        let b = dh_dnu_rate_check(7, &pt(&[0.3, -0.5, 0.2, 0.1], 7), &ladder).unwrap();
        assert!((a.exponent - b.exponent).abs() < 1e-9);
        assert!(a.samples.iter().all(|s| s.1 > 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn symmetric_and_positive(
            x in proptest::collection::vec(-0.4f64..0.4, 6),
            y in proptest::collection::vec(-0.4f64..0.4, 6),
        ) {
            let h1 = regular_part_h(&x, &y).unwrap();
            let h2 = regular_part_h(&y, &x).unwrap();
            prop_assert!((h1 - h2).abs() <= 1e-12 * h1.abs());
            let g = green_navier(&x, &y).unwrap();
            prop_assert!(g > 0.0);
            prop_assert!(green_laplacian_ball(&x, &y).unwrap() == green_laplacian_ball(&y, &x).unwrap());
        }
    }
}
