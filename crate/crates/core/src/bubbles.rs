//! Standard bubbles `δ_{(a,λ)}` and their interaction quantity `ε_ij`.

use crate::constants::{c2, c_n};
use crate::error::{check_dim, Error, Result};
use crate::numerics::quad::{integrate, Center, Domain, QuadratureSpec, Symmetry};
use crate::scalar::{dist2, Scalar};
use serde::{Deserialize, Serialize};

/// `δ_{(a,λ)}(x) = c_n (λ / (1 + λ²|x−a|²))^{(n−4)/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble<T = f64> {
    pub a: Vec<T>,
    pub lambda: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubblePair<T = f64> {
    pub i: Bubble<T>,
    pub j: Bubble<T>,
}

fn mu<T: Scalar>(n: usize) -> T {
    T::lit((n as f64 - 4.0) / 2.0)
}

impl<T: Scalar> Bubble<T> {
    pub fn new(a: Vec<T>, lambda: T) -> Self {
        Bubble { a, lambda }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Rejects non-positive rates and centers off the unit ball.
    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim())?;
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "center has non-finite coordinates".into(),
            ));
        }
        Ok(())
    }

    /// `ln δ(x)`; stays finite where `δ` itself would overflow.
    pub fn ln_delta(&self, x: &[T]) -> T {
        let n = self.dim();
        let l = self.lambda;
        let q = T::one() + l * l * dist2(x, &self.a);
        c_n::<T>(n).ln() + mu::<T>(n) * (l.ln() - q.ln())
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.ln_delta(x).exp()
    }

    pub fn peak(&self) -> T {
        let n = self.dim();
        (c_n::<T>(n).ln() + mu::<T>(n) * self.lambda.ln()).exp()
    }
}

pub fn delta_eval<T: Scalar>(b: &Bubble<T>, x: &[T]) -> T {
    b.eval(x)
}

/// `(λ ∂δ/∂λ, λ^{-1} ∂δ/∂a)` at `x`.
pub fn delta_params_grad<T: Scalar>(b: &Bubble<T>, x: &[T]) -> (T, Vec<T>) {
    let n = b.dim();
    let m = mu::<T>(n);
    let l = b.lambda;
    let r2 = dist2(x, &b.a);
    let q = T::one() + l * l * r2;
    let d = b.eval(x);
    let dl = m * d * (T::one() - l * l * r2) / q;
    let f = T::lit(2.0) * m * l * d / q;
    let da = x.iter().zip(&b.a).map(|(&xi, &ai)| f * (xi - ai)).collect();
    (dl, da)
}

fn eps_base<T: Scalar>(p: &BubblePair<T>) -> T {
    let (li, lj) = (p.i.lambda, p.j.lambda);
    li / lj + lj / li + li * lj * dist2(&p.i.a, &p.j.a)
}

/// `ε_ij = (λ_i/λ_j + λ_j/λ_i + λ_iλ_j|a_i−a_j|²)^{−(n−4)/2}`.
pub fn eps<T: Scalar>(p: &BubblePair<T>) -> T {
    let n = p.i.dim();
    (-mu::<T>(n) * eps_base(p).ln()).exp()
}

/// `(λ_i ∂ε/∂λ_i, λ_i^{-1} ∂ε/∂a_i)`.
pub fn eps_derivs<T: Scalar>(p: &BubblePair<T>) -> (T, Vec<T>) {
    let n = p.i.dim();
    let m = mu::<T>(n);
    let (li, lj) = (p.i.lambda, p.j.lambda);
    let e = eps_base(p);
    let v = eps(p);
    let dl = -m * v * (li / lj - lj / li + li * lj * dist2(&p.i.a, &p.j.a)) / e;
    let f = -m * v * T::lit(2.0) * lj / e;
    let da =
        p.i.a
            .iter()
            .zip(&p.j.a)
            .map(|(&x, &y)| f * (x - y))
            .collect();
    (dl, da)
}

impl<T: Scalar> BubblePair<T> {
    pub fn new(i: Bubble<T>, j: Bubble<T>) -> Self {
        BubblePair { i, j }
    }

    pub fn swapped(&self) -> Self {
        BubblePair {
            i: self.j.clone(),
            j: self.i.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub eps: f64,
    pub quad: f64,
    pub leading: f64,
    pub residual: f64,
    pub quad_error: f64,
}

fn pair_centers(p: &BubblePair<f64>) -> (Vec<Center>, Symmetry) {
    let centers = vec![
        Center::new(p.i.a.clone(), p.i.lambda),
        Center::new(p.j.a.clone(), p.j.lambda),
    ];
    let sym = Symmetry::of_points([p.i.a.as_slice(), p.j.a.as_slice()]);
    (centers, sym)
}

/// `∫_{R^n} δ_i^{e_i} δ_j^{e_j}` by quadrature around both centers.
pub fn pair_power_integral(
    p: &BubblePair<f64>,
    ei: f64,
    ej: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    p.i.validate()?;
    p.j.validate()?;
    let (centers, sym) = pair_centers(p);
    let f = |x: &[f64]| (ei * p.i.ln_delta(x) + ej * p.j.ln_delta(x)).exp();
    let r = integrate(p.i.dim(), &f, &centers, Domain::Whole, sym, spec)?;
    Ok((r.value, r.error_estimate))
}

/// Compares `∫ δ_i^{(n+4)/(n−4)} δ_j` over `R^n` with `c2 ε_ij`.
pub fn interaction_integral_check(
    p: &BubblePair<f64>,
    spec: &QuadratureSpec,
) -> Result<InteractionReport> {
    let n = p.i.dim();
    let e = eps(p);
    let pw = (n as f64 + 4.0) / (n as f64 - 4.0);
    let (quad, err) = pair_power_integral(p, pw, 1.0, spec)?;
    let leading = c2(n) * e;
    Ok(InteractionReport {
        eps: e,
        quad,
        leading,
        residual: quad - leading,
        quad_error: err,
    })
}

/// Least-squares slope of `ln|residual|` against `ln ε` over a ladder of
/// equal-rate pairs at increasing separation along `e_1`.
pub fn interaction_residual_exponent(
    n: usize,
    lambda: f64,
    separations: &[f64],
    spec: &QuadratureSpec,
) -> Result<(f64, Vec<InteractionReport>)> {
    if separations.len() < 2 {
        return Err(Error::InvalidInput("need at least two separations".into()));
    }
    let mut reports = Vec::new();
    for &d in separations {
        let mut a = vec![0.0; n];
        a[0] = -d / 2.0;
        let mut b = vec![0.0; n];
        b[0] = d / 2.0;
        let pair = BubblePair::new(Bubble::new(a, lambda), Bubble::new(b, lambda));
        reports.push(interaction_integral_check(&pair, spec)?);
    }
    let xs: Vec<f64> = reports.iter().map(|r| r.eps.ln()).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.residual.abs().ln()).collect();
    Ok((ls_slope(&xs, &ys), reports))
}

/// Ordinary least-squares slope.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(n: usize, a0: f64, l: f64) -> Bubble<f64> {
        let mut a = vec![0.0; n];
        a[0] = a0;
        Bubble::new(a, l)
    }

    #[test]
    fn peak_and_unit_radius() {
        let n = 7;
        let bb = b(n, 0.1, 40.0);
        let p = c_n::<f64>(n) * 40f64.powf(1.5);
        assert!((bb.eval(&bb.a) - p).abs() < 1e-12 * p);
        let mut x = bb.a.clone();
        x[1] += 1.0 / 40.0;
        assert!((bb.eval(&x) - p * 2f64.powf(-1.5)).abs() < 1e-12 * p);
    }

    #[test]
    fn tail_limit() {
        let n = 8;
        let bb = b(n, 0.0, 10.0);
        let mut x = vec![0.0; n];
        x[0] = 3.0;
        let v = bb.eval(&x) * 3f64.powi(4);
        let lim = c_n::<f64>(n) / 100.0;
        assert!((v / lim - 1.0).abs() < 0.01);
    }

    #[test]
    fn no_overflow_at_extreme_rate() {
        let bb = b(10, 0.0, 1e4);
        let v = bb.eval(&bb.a);
        assert!(v.is_finite() && v > 0.0);
        let (dl, _) = delta_params_grad(&bb, &bb.a);
        assert!((dl - 3.0 * v).abs() < 1e-10 * v);
    }

    #[test]
    fn gradient_zero_at_center() {
        let bb = b(6, 0.2, 30.0);
        let (_, da) = delta_params_grad(&bb, &bb.a);
        assert!(da.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eps_identical_bubbles() {
        let p = BubblePair::new(b(6, 0.3, 20.0), b(6, 0.3, 20.0));
        assert!((eps(&p) - 0.5).abs() < 1e-15);
        let p9 = BubblePair::new(b(9, 0.0, 2.0), b(9, 0.0, 2.0));
        assert!((eps(&p9) - 2f64.powf(-2.5)).abs() < 1e-15);
    }

    #[test]
    fn eps_far_limit() {
        let p = BubblePair::new(b(7, -0.3, 100.0), b(7, 0.3, 100.0));
        let d2: f64 = 0.36 * 1e4;
        assert!((eps(&p) * d2.powf(1.5) - 1.0).abs() < 0.01);
    }

    #[test]
    fn f32_agrees_with_f64() {
        let x32 = [0.01f32, 0.0, 0.02, 0.0, 0.0, 0.0];
        let b32 = Bubble::new(vec![0.0f32; 6], 25.0f32);
        let x64: Vec<f64> = x32.iter().map(|v| *v as f64).collect();
        let b64 = Bubble::new(vec![0.0f64; 6], 25.0);
        let r = b32.eval(&x32) as f64 / b64.eval(&x64);
        assert!((r - 1.0).abs() < 1e-5);
    }

    #[test]
    fn interaction_leading_term_n7() {
        let p = BubblePair::new(b(7, -0.25, 50.0), b(7, 0.25, 50.0));
        let r = interaction_integral_check(&p, &QuadratureSpec::default()).unwrap();
        assert!((r.quad - r.leading).abs() / r.quad <= 0.05, "{r:?}");
        let s = interaction_integral_check(&p.swapped(), &QuadratureSpec::default()).unwrap();
        assert!((s.quad - r.quad).abs() < 1e-6 * r.quad);
    }

    #[test]
    fn interaction_depends_on_eps_only() {
        // Separated equal rates against concentric unequal rates with equal ε.
        let n = 7;
        let spec = QuadratureSpec::default();
        let p = BubblePair::new(b(n, -0.2, 50.0), b(n, 0.2, 50.0));
        let e = eps(&p);
        // κ + 1/κ = e^{-1/μ}
        let s = e.powf(-1.0 / 1.5);
        let kappa = 0.5 * (s + (s * s - 4.0).sqrt());
        let q = BubblePair::new(b(n, 0.0, 10.0), b(n, 0.0, 10.0 * kappa));
        assert!((eps(&q) / e - 1.0).abs() < 1e-12);
        let pw = 11.0 / 3.0;
        let (a, _) = pair_power_integral(&p, pw, 1.0, &spec).unwrap();
        let (c, _) = pair_power_integral(&q, pw, 1.0, &spec).unwrap();
        assert!((a / c - 1.0).abs() < 1e-7, "{a} {c}");
    }

    #[test]
    fn residual_exponent_n7() {
        let (slope, _) = interaction_residual_exponent(
            7,
            50.0,
            &[0.3, 0.45, 0.6, 0.9],
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((slope - 7.0 / 3.0).abs() < 0.1, "{slope}");
    }

    fn sample_pair(n: usize) -> impl Strategy<Value = BubblePair<f64>> {
        (
            proptest::collection::vec(-0.5f64..0.5, n),
            proptest::collection::vec(-0.5f64..0.5, n),
            0.0f64..4.0,
            0.0f64..4.0,
        )
            .prop_map(|(a, c, li, lj)| {
                BubblePair::new(
                    Bubble::new(a, 10f64.powf(li)),
                    Bubble::new(c, 10f64.powf(lj)),
                )
            })
    }

    proptest! {
        #[test]
        fn eps_symmetric_and_bounded(p in sample_pair(6)) {
            let e = eps(&p);
            prop_assert_eq!(e, eps(&p.swapped()));
            prop_assert!(e > 0.0 && e <= 0.5 + 1e-15);
        }

        #[test]
        fn lambda_log_derivative_bounded(
            a in proptest::collection::vec(-0.5f64..0.5, 8),
            x in proptest::collection::vec(-1.0f64..1.0, 8),
            l in 0.0f64..4.0,
        ) {
            let bb = Bubble::new(a, 10f64.powf(l));
            let (dl, _) = delta_params_grad(&bb, &x);
            prop_assert!(dl.abs() <= 2.0 * bb.eval(&x) * (1.0 + 1e-12));
        }

        #[test]
        fn derivatives_match_finite_differences(
            a in proptest::collection::vec(-0.5f64..0.5, 6),
            x in proptest::collection::vec(-0.6f64..0.6, 6),
            l in 0.0f64..2.5,
            k in 0usize..6,
        ) {
            let lam = 10f64.powf(l);
            let bb = Bubble::new(a.clone(), lam);
            let (dl, da) = delta_params_grad(&bb, &x);
            let h: f64 = 1e-5;
            let up = Bubble::new(a.clone(), lam * h.exp()).eval(&x);
            let dn = Bubble::new(a.clone(), lam * (-h).exp()).eval(&x);
            let fd = (up - dn) / (2.0 * h);
            let scale = bb.eval(&x);
            prop_assert!((fd - dl).abs() <= 1e-6 * scale);
            let mut ap = a.clone();
            ap[k] += h / lam;
            let mut am = a.clone();
            am[k] -= h / lam;
            let fda = (Bubble::new(ap, lam).eval(&x) - Bubble::new(am, lam).eval(&x)) / (2.0 * h);
            prop_assert!((fda - da[k]).abs() <= 1e-6 * scale);
        }

        #[test]
        fn eps_derivatives_match_fd(p in sample_pair(7), k in 0usize..7) {
            let (dl, da) = eps_derivs(&p);
            let e = eps(&p);
            let h: f64 = 1e-5;
            let mut q = p.clone();
            q.i.lambda = p.i.lambda * h.exp();
            let up = eps(&q);
            q.i.lambda = p.i.lambda * (-h).exp();
            let dn = eps(&q);
            prop_assert!(((up - dn) / (2.0 * h) - dl).abs() <= 1e-6 * e);
            let mut q = p.clone();
            q.i.a[k] += h / p.i.lambda;
            let up = eps(&q);
            q.i.a[k] -= 2.0 * h / p.i.lambda;
            let dn = eps(&q);
            prop_assert!(((up - dn) / (2.0 * h) - da[k]).abs() <= 1e-6 * e);
        }

        #[test]
        fn eps_lambda_derivative_sign(p in sample_pair(6)) {
            let (li, lj) = (p.i.lambda, p.j.lambda);
            let d2 = dist2(&p.i.a, &p.j.a);
            let (dl, _) = eps_derivs(&p);
            if li * lj * d2 > lj / li - li / lj + 1e-9 {
                prop_assert!(dl < 0.0);
            }
            let mut q = p.clone();
            q.j.lambda = li;
            if li * li * d2 > 2.0 {
                prop_assert!(eps_derivs(&q).0 < 0.0);
            }
        }
    }
}
