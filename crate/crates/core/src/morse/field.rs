//! Analytic K fields on the unit ball and the named catalogue.

use crate::error::{Error, Result};
use crate::numerics::quad::Symmetry;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// One additive piece of a K field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Const {
        value: f64,
    },
    /// `coef · |x − center|²`
    Quadratic {
        coef: f64,
        center: Vec<f64>,
    },
    /// `Σ coefs[k] · x_k²`
    Diagonal {
        coefs: Vec<f64>,
    },
    /// `height · exp(−|x − center|² / (2 width²))`
    Gaussian {
        height: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `coef · (x₁³ − 3 x₁ x₂²)`, harmonic and degenerate at the origin.
    MonkeySaddle {
        coef: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KField {
    pub dim: usize,
    pub name: String,
    pub description: String,
    pub terms: Vec<Term>,
}

pub const CATALOGUE: &[&str] = &[
    "single-bump",
    "two-bump",
    "three-bump",
    "constant",
    "monkey-saddle",
    "borderline",
];

/// Default width of the `borderline` field; the H-corrected sign at the
/// origin is positive here. Below [`BORDERLINE_FLIP_WIDTH`] it is negative.
pub const BORDERLINE_WIDTH: f64 = 0.045;
/// Approximate width at which the n = 6 borderline sign changes.
pub const BORDERLINE_FLIP_WIDTH: f64 = 0.0396;

fn gauss_arg<T: Scalar>(x: &[T], c: &[f64], w: f64) -> (T, T) {
    let r2: T = x
        .iter()
        .zip(c)
        .map(|(&xi, &ci)| (xi - T::lit(ci)) * (xi - T::lit(ci)))
        .sum();
    (r2, (-r2 / T::lit(2.0 * w * w)).exp())
}

impl KField {
    pub fn new(
        dim: usize,
        name: impl Into<String>,
        description: impl Into<String>,
        terms: Vec<Term>,
    ) -> Result<Self> {
        let k = KField {
            dim,
            name: name.into(),
            description: description.into(),
            terms,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_dim(self.dim)?;
        for t in &self.terms {
            let ok = match t {
                Term::Const { value } => value.is_finite(),
                Term::Quadratic { coef, center } => coef.is_finite() && center.len() == self.dim,
                Term::Diagonal { coefs } => {
                    coefs.len() == self.dim && coefs.iter().all(|c| c.is_finite())
                }
                Term::Gaussian {
                    height,
                    center,
                    width,
                } => height.is_finite() && center.len() == self.dim && *width > 0.0,
                Term::MonkeySaddle { coef } => coef.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidInput(format!("malformed K term {t:?}")));
            }
        }
        Ok(())
    }

    pub fn value<T: Scalar>(&self, x: &[T]) -> T {
        let mut v = T::zero();
        for t in &self.terms {
            v = v + match t {
                Term::Const { value } => T::lit(*value),
                Term::Quadratic { coef, center } => {
                    let r2: T = x
                        .iter()
                        .zip(center)
                        .map(|(&a, &c)| (a - T::lit(c)) * (a - T::lit(c)))
                        .sum();
                    T::lit(*coef) * r2
                }
                Term::Diagonal { coefs } => {
                    x.iter().zip(coefs).map(|(&a, &c)| T::lit(c) * a * a).sum()
                }
                Term::Gaussian {
                    height,
                    center,
                    width,
                } => T::lit(*height) * gauss_arg(x, center, *width).1,
                Term::MonkeySaddle { coef } => {
                    let (x1, x2) = (x[0], x[1]);
                    T::lit(*coef) * (x1 * x1 * x1 - T::lit(3.0) * x1 * x2 * x2)
                }
            };
        }
        v
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut g = vec![0.0; n];
        for t in &self.terms {
            match t {
                Term::Const { .. } => {}
                Term::Quadratic { coef, center } => {
                    for k in 0..n {
                        g[k] += 2.0 * coef * (x[k] - center[k]);
                    }
                }
                Term::Diagonal { coefs } => {
                    for k in 0..n {
                        g[k] += 2.0 * coefs[k] * x[k];
                    }
                }
                Term::Gaussian {
                    height,
                    center,
                    width,
                } => {
                    let (_, e) = gauss_arg(x, center, *width);
                    let s = -height * e / (width * width);
                    for k in 0..n {
                        g[k] += s * (x[k] - center[k]);
                    }
                }
                Term::MonkeySaddle { coef } => {
                    g[0] += coef * (3.0 * x[0] * x[0] - 3.0 * x[1] * x[1]);
                    g[1] += coef * (-6.0 * x[0] * x[1]);
                }
            }
        }
        g
    }

    /// Row-major `n × n` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for t in &self.terms {
            match t {
                Term::Const { .. } => {}
                Term::Quadratic { coef, .. } => {
                    for k in 0..n {
                        h[k * n + k] += 2.0 * coef;
                    }
                }
                Term::Diagonal { coefs } => {
                    for k in 0..n {
                        h[k * n + k] += 2.0 * coefs[k];
                    }
                }
                Term::Gaussian {
                    height,
                    center,
                    width,
                } => {
                    let (_, e) = gauss_arg(x, center, *width);
                    let w2 = width * width;
                    for i in 0..n {
                        for j in 0..n {
                            let d = if i == j { 1.0 } else { 0.0 };
                            h[i * n + j] += height
                                * e
                                * ((x[i] - center[i]) * (x[j] - center[j]) / (w2 * w2) - d / w2);
                        }
                    }
                }
                Term::MonkeySaddle { coef } => {
                    h[0] += 6.0 * coef * x[0];
                    h[1] -= 6.0 * coef * x[1];
                    h[n] -= 6.0 * coef * x[1];
                    h[n + 1] -= 6.0 * coef * x[0];
                }
            }
        }
        h
    }

    /// ΔK from per-term closed forms, independent of [`KField::hessian`].
    pub fn laplacian<T: Scalar>(&self, x: &[T]) -> T {
        let nf = T::from_usize(self.dim).unwrap();
        let mut v = T::zero();
        for t in &self.terms {
            v = v + match t {
                Term::Const { .. } | Term::MonkeySaddle { .. } => T::zero(),
                Term::Quadratic { coef, .. } => T::lit(2.0 * coef) * nf,
                Term::Diagonal { coefs } => T::lit(2.0 * coefs.iter().sum::<f64>()),
                Term::Gaussian {
                    height,
                    center,
                    width,
                } => {
                    let (r2, e) = gauss_arg(x, center, *width);
                    let w2 = T::lit(width * width);
                    T::lit(*height) * e * (r2 / (w2 * w2) - nf / w2)
                }
            };
        }
        v
    }

    /// Outward normal derivative `∂K/∂ν = ∇K(x)·x` at a unit vector `x`.
    pub fn normal_derivative(&self, x: &[f64]) -> f64 {
        let r = crate::scalar::norm(x);
        self.grad(x).iter().zip(x).map(|(g, xi)| g * xi / r).sum()
    }

    /// Symmetry class of `K · g` when `g` is symmetric about `points`
    /// (radial only if everything is radial about the origin).
    pub fn integrand_symmetry(&self, points: &[&[f64]]) -> Symmetry {
        let mut anchors: Vec<&[f64]> = points.to_vec();
        let mut intrinsic = Symmetry::Radial;
        for t in &self.terms {
            match t {
                Term::Const { .. } => {}
                Term::Quadratic { center, .. } | Term::Gaussian { center, .. } => {
                    anchors.push(center)
                }
                Term::Diagonal { coefs } => {
                    let s = if coefs.iter().all(|c| *c == coefs[0]) {
                        Symmetry::Radial
                    } else if coefs[1..].iter().all(|c| *c == coefs[1]) {
                        Symmetry::Axial
                    } else if coefs[2..].iter().all(|c| *c == coefs[2]) {
                        Symmetry::Planar
                    } else {
                        Symmetry::Full
                    };
                    intrinsic = intrinsic.join(s);
                }
                Term::MonkeySaddle { .. } => intrinsic = intrinsic.join(Symmetry::Planar),
            }
        }
        if intrinsic == Symmetry::Radial && anchors.iter().all(|p| p.iter().all(|v| *v == 0.0)) {
            return Symmetry::Radial;
        }
        Symmetry::of_points(anchors).join(intrinsic)
    }

    /// Largest |K| over the supplied points, at least 1e-300.
    pub fn scale_over(&self, pts: &[Vec<f64>]) -> f64 {
        pts.iter()
            .map(|p| self.value(p).abs())
            .fold(1e-300, f64::max)
    }
}

fn axis(n: usize, s: f64) -> Vec<f64> {
    crate::scalar::on_axis(n, s)
}

fn gaussian(n: usize, s: f64, height: f64, width: f64) -> Term {
    Term::Gaussian {
        height,
        center: axis(n, s),
        width,
    }
}

fn base(n: usize, c: f64, q: f64) -> Vec<Term> {
    vec![
        Term::Const { value: c },
        Term::Quadratic {
            coef: -q,
            center: vec![0.0; n],
        },
    ]
}

/// `1.5 − 0.3|x|² + 0.6·exp(−|x|²/0.18)`: one maximum at the origin.
pub fn single_bump(n: usize) -> Result<KField> {
    let mut t = base(n, 1.5, 0.3);
    t.push(gaussian(n, 0.0, 0.6, 0.3));
    KField::new(
        n,
        "single-bump",
        "radially decreasing base with one centred Gaussian bump",
        t,
    )
}

/// Two narrow bumps at ±0.3 e₁ with heights `h1`, `h2` on `0.6 − 0.02|x|²`.
pub fn two_bump_with(n: usize, h1: f64, h2: f64) -> Result<KField> {
    let mut t = base(n, 0.6, 0.02);
    t.push(gaussian(n, 0.3, h1, 0.08));
    t.push(gaussian(n, -0.3, h2, 0.08));
    KField::new(
        n,
        "two-bump",
        format!("bumps of heights {h1} and {h2} at ±0.3 e1, width 0.08, on 0.6 − 0.02|x|²"),
        t,
    )
}

pub fn two_bump(n: usize) -> Result<KField> {
    two_bump_with(n, 0.5, 0.4)
}

/// Three bumps on the e₁ axis with saddles between them.
pub fn three_bump(n: usize) -> Result<KField> {
    let mut t = base(n, 0.6, 0.1);
    t.push(gaussian(n, 0.5, 0.35, 0.15));
    t.push(gaussian(n, 0.0, 0.4, 0.15));
    t.push(gaussian(n, -0.5, 0.3, 0.15));
    KField::new(
        n,
        "three-bump",
        "three bumps at 0.5, 0, −0.5 on the e1 axis over 0.6 − 0.1|x|²",
        t,
    )
}

pub fn constant(n: usize) -> Result<KField> {
    KField::new(n, "constant", "K ≡ 1", vec![Term::Const { value: 1.0 }])
}

/// `1 + 0.1(x₁³ − 3x₁x₂²) − 0.1 Σ_{k≥3} x_k²`: degenerate critical point at 0.
pub fn monkey_saddle(n: usize) -> Result<KField> {
    let mut coefs = vec![-0.1; n];
    coefs[0] = 0.0;
    coefs[1] = 0.0;
    KField::new(
        n,
        "monkey-saddle",
        "monkey saddle in (x1, x2) with a transverse maximum; degenerate at the origin",
        vec![
            Term::Const { value: 1.0 },
            Term::MonkeySaddle { coef: 0.1 },
            Term::Diagonal { coefs },
        ],
    )
}

/// Two tall narrow bumps at ±0.1 e₁ around an origin saddle. For n = 6 the
/// sign of `−ΔK(0)/(60K(0)) + H(0,0)` changes as `width` crosses
/// [`BORDERLINE_FLIP_WIDTH`].
pub fn borderline(n: usize, width: f64) -> Result<KField> {
    let mut t = base(n, 1.0, 0.05);
    t.push(gaussian(n, 0.1, 6.0, width));
    t.push(gaussian(n, -0.1, 6.0, width));
    KField::new(
        n,
        format!("borderline:{width}"),
        format!("bumps of height 6 at ±0.1 e1, width {width}"),
        t,
    )
}

/// Looks a field up by name. `borderline:<width>` selects the bump width.
pub fn catalogued_k(name: &str, n: usize) -> Result<KField> {
    match name {
        "single-bump" => single_bump(n),
        "two-bump" => two_bump(n),
        "three-bump" => three_bump(n),
        "constant" => constant(n),
        "monkey-saddle" => monkey_saddle(n),
        "borderline" => borderline(n, BORDERLINE_WIDTH),
        _ => {
            if let Some(w) = name.strip_prefix("borderline:") {
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad borderline width {w:?}")))?;
                if w > 0.0 && w.is_finite() {
                    return borderline(n, w);
                }
                return Err(Error::InvalidInput(format!("bad borderline width {w}")));
            }
            Err(Error::UnknownField {
                name: name.to_string(),
                catalogue: CATALOGUE.join(", "),
            })
        }
    }
}
