//! Gamma/Beta helpers, sphere areas and Gegenbauer polynomials.

use crate::scalar::Scalar;
use statrs::function::gamma::ln_gamma;

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Euler Beta function `B(a, b)`, evaluated through log-Gamma.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Surface area of the unit sphere `S^{n-1}` in `R^n`.
pub fn sphere_area<T: Scalar>(n: usize) -> T {
    let nf = n as f64;
    let v = 2.0 * std::f64::consts::PI.powf(nf / 2.0) / gamma(nf / 2.0);
    T::lit(v)
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area::<f64>(n) / n as f64
}

/// `∫_0^∞ r^{n-1} (1 + r^2)^{-s} dr = B(n/2, s - n/2) / 2`.
pub fn radial_power_integral(n: usize, s: f64) -> f64 {
    let h = n as f64 / 2.0;
    0.5 * beta(h, s - h)
}

/// Fills `out[l] = C_l^{nu}(t)` for `l < out.len()` by the three-term recurrence.
pub fn gegenbauer_into<T: Scalar>(nu: T, t: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    out[0] = T::one();
    if out.len() == 1 {
        return;
    }
    let two = T::lit(2.0);
    out[1] = two * nu * t;
    for l in 2..out.len() {
        let lf = T::from_usize(l).unwrap();
        out[l] =
            (two * t * (lf + nu - T::one()) * out[l - 1] - (lf + two * nu - two) * out[l - 2]) / lf;
    }
}

/// Neumaier compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        let pi = std::f64::consts::PI;
        assert!((sphere_area::<f64>(3) - 4.0 * pi).abs() < 1e-12);
        assert!((sphere_area::<f64>(6) - pi.powi(3)).abs() < 1e-11);
        assert!((ball_volume(6) - pi.powi(3) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn gegenbauer_matches_legendre_at_half() {
        // C_l^{1/2} are the Legendre polynomials.
        let mut c = [0.0f64; 4];
        gegenbauer_into(0.5, 0.3, &mut c);
        assert!((c[2] - 0.5 * (3.0 * 0.09 - 1.0f64)).abs() < 1e-15);
        assert!((c[3] - 0.5 * (5.0 * 0.027 - 3.0 * 0.3f64)).abs() < 1e-15);
    }

    #[test]
    fn gegenbauer_generating_function() {
        let (nu, t, rho) = (2.5f64, -0.4f64, 0.3f64);
        let mut c = vec![0.0; 80];
        gegenbauer_into(nu, t, &mut c);
        let s: f64 = c
            .iter()
            .enumerate()
            .map(|(l, v)| v * rho.powi(l as i32))
            .sum();
        let exact = (1.0 - 2.0 * rho * t + rho * rho).powf(-nu);
        assert!((s - exact).abs() < 1e-13);
    }

    #[test]
    fn beta_identity() {
        assert!((beta(3.0, 2.0) - 1.0 / 12.0).abs() < 1e-14);
        assert!((radial_power_integral(6, 6.0) - 0.5 * beta(3.0, 3.0)).abs() < 1e-15);
    }
}
