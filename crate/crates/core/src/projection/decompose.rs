//! Projection of a function onto the manifold of sums of projected bubbles.
//!
//! For fixed centers and rates the best weights solve `M α = b` with
//! `M_ij = (Pδ_i, Pδ_j)₂` and `b_i = (u, Pδ_i)₂`. The centers and rates are
//! then found by Newton iteration on the orthogonality conditions
//! `(u − Σ α_j Pδ_j, D Pδ_i)₂ = 0` for `D ∈ {λ∂_λ, λ^{-1}∂_a}`, each pairing
//! evaluated as `∫ w · D(δ_i^{(n+4)/(n−4)})`.

use super::{delta_pow, Mode, ProjectedBubble};
use crate::bubbles::Bubble;
use crate::constants::c_n;
use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_fixed, Center, Domain, QuadratureSpec, Symmetry};
use crate::scalar::{dist2, norm};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A function on the unit ball that can be paired with bubbles.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn symmetry(&self) -> Symmetry;

    /// `‖u‖²₂` when known.
    fn energy_norm_sq(&self) -> Option<f64> {
        None
    }

    /// Extra concentration points the quadrature should resolve.
    fn quadrature_centers(&self) -> Vec<Center> {
        Vec::new()
    }

    /// Starting points for the bubble search, if the field knows them.
    fn seeds(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// `∫_Ω u g` with the quadrature anchored at `b` and the field centers.
    fn integrate_against(
        &self,
        b: &Bubble<f64>,
        g: &(dyn Fn(&[f64]) -> f64 + Sync),
        spec: &QuadratureSpec,
        level: usize,
    ) -> Result<f64> {
        let mut centers = vec![Center::new(b.a.clone(), b.lambda)];
        centers.extend(self.quadrature_centers());
        let sym = self.symmetry().join(Symmetry::of_points(
            centers.iter().map(|c| c.point.as_slice()),
        ));
        let f = |x: &[f64]| self.eval(x) * g(x);
        integrate_fixed(self.dim(), &f, &centers, Domain::UnitBall, sym, spec, level).map(|r| r.0)
    }
}

/// `Σ c_k Pδ_k` with its exact energy norm.
#[derive(Debug, Clone)]
pub struct SyntheticField {
    pub terms: Vec<(f64, ProjectedBubble)>,
    pub norm_sq: f64,
    symmetry: Symmetry,
}

impl SyntheticField {
    pub fn new(terms: Vec<(f64, Bubble<f64>)>, spec: &QuadratureSpec) -> Result<Self> {
        let pbs: Vec<(f64, ProjectedBubble)> = terms
            .into_iter()
            .map(|(c, b)| ProjectedBubble::exact(b).map(|p| (c, p)))
            .collect::<Result<_>>()?;
        let mut norm_sq = 0.0;
        for (ci, pi) in &pbs {
            for (cj, pj) in &pbs {
                norm_sq += ci * cj * super::inner_product(pi, pj, spec)?;
            }
        }
        let symmetry = Symmetry::of_points(pbs.iter().map(|(_, p)| p.bubble.a.as_slice()));
        Ok(SyntheticField {
            terms: pbs,
            norm_sq,
            symmetry,
        })
    }
}

impl Field for SyntheticField {
    fn dim(&self) -> usize {
        self.terms[0].1.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, p)| c * p.eval(x)).sum()
    }
    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }
    fn energy_norm_sq(&self) -> Option<f64> {
        Some(self.norm_sq)
    }
    fn quadrature_centers(&self) -> Vec<Center> {
        self.terms
            .iter()
            .map(|(_, p)| Center::new(p.bubble.a.clone(), p.bubble.lambda))
            .collect()
    }
}

/// Sampled function on a symmetry-reduced grid.
///
/// * `axial`: coordinates `(x_1, |x_⊥|)`.
/// * `planar`: coordinates `(x_1, x_2, |x_⊥|)`.
///
/// `values` is row-major with the last coordinate fastest. Points outside
/// the unit ball evaluate to zero; inside, values are multilinear
/// interpolants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub dim: usize,
    pub symmetry: Symmetry,
    pub shape: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_norm_sq: Option<f64>,
    /// Optional concentration hints `(point, scale)` for quadrature.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hints: Vec<(Vec<f64>, f64)>,
}

impl GridFunction {
    fn reduced_dim(sym: Symmetry) -> Result<usize> {
        match sym {
            Symmetry::Axial => Ok(2),
            Symmetry::Planar => Ok(3),
            _ => Err(Error::InvalidInput(
                "grid functions support axial and planar layouts".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_dim(self.dim)?;
        let k = Self::reduced_dim(self.symmetry)?;
        if self.shape.len() != k || self.lower.len() != k || self.upper.len() != k {
            return Err(Error::InvalidInput(format!(
                "grid descriptor must have {k} axes"
            )));
        }
        if self.shape.iter().any(|s| *s < 2) {
            return Err(Error::InvalidInput(
                "each axis needs at least two nodes".into(),
            ));
        }
        if self.shape.iter().product::<usize>() != self.values.len() {
            return Err(Error::InvalidInput(
                "values length does not match shape".into(),
            ));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u > l)) {
            return Err(Error::InvalidInput(
                "upper bounds must exceed lower bounds".into(),
            ));
        }
        Ok(())
    }

    /// Samples any field on a regular reduced grid covering the ball.
    pub fn sample<F: Field + ?Sized>(field: &F, symmetry: Symmetry, nodes: usize) -> Result<Self> {
        let k = Self::reduced_dim(symmetry)?;
        let n = field.dim();
        let mut lower = vec![-1.0; k];
        let mut upper = vec![1.0; k];
        lower[k - 1] = 0.0;
        upper[k - 1] = 1.0;
        let shape = vec![nodes; k];
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; k];
        for _ in 0..total {
            let red: Vec<f64> = (0..k)
                .map(|d| lower[d] + (upper[d] - lower[d]) * idx[d] as f64 / (nodes - 1) as f64)
                .collect();
            let mut x = vec![0.0; n];
            x[..k - 1].copy_from_slice(&red[..k - 1]);
            x[k - 1] = red[k - 1];
            values.push(if norm(&x) < 1.0 { field.eval(&x) } else { 0.0 });
            for d in (0..k).rev() {
                idx[d] += 1;
                if idx[d] < nodes {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(GridFunction {
            dim: n,
            symmetry,
            shape,
            lower,
            upper,
            values,
            energy_norm_sq: field.energy_norm_sq(),
            hints: field
                .quadrature_centers()
                .into_iter()
                .map(|c| (c.point, c.scale))
                .collect(),
        })
    }

    fn reduce(&self, x: &[f64]) -> Vec<f64> {
        let k = self.shape.len();
        let mut r: Vec<f64> = x[..k - 1].to_vec();
        let perp: f64 = x[k - 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        r.push(perp);
        r
    }
}

impl Field for GridFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        if norm(x) >= 1.0 {
            return 0.0;
        }
        let r = self.reduce(x);
        let k = r.len();
        let mut base = vec![0usize; k];
        let mut frac = vec![0.0; k];
        for d in 0..k {
            let m = self.shape[d];
            let u = ((r[d] - self.lower[d]) / (self.upper[d] - self.lower[d]) * (m - 1) as f64)
                .clamp(0.0, (m - 1) as f64);
            let i = (u.floor() as usize).min(m - 2);
            base[d] = i;
            frac[d] = u - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << k) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for d in 0..k {
                let bit = (corner >> d) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                flat = flat * self.shape[d] + base[d] + bit;
            }
            acc += w * self.values[flat];
        }
        acc
    }

    fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    fn energy_norm_sq(&self) -> Option<f64> {
        self.energy_norm_sq
    }

    fn quadrature_centers(&self) -> Vec<Center> {
        self.hints
            .iter()
            .map(|(p, s)| Center::new(p.clone(), *s))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub bubbles: usize,
    pub quadrature: QuadratureSpec,
    /// Fixed refinement level; a fixed rule keeps the objective smooth.
    pub level: usize,
    pub max_iterations: usize,
    /// Stop when every orthogonality residual is below this fraction of
    /// `‖residual‖·‖direction‖`, or the Newton step is below `step_tol`.
    pub v0_tol: f64,
    pub step_tol: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            bubbles: 1,
            quadrature: QuadratureSpec {
                radial_order: 20,
                panel_width: 0.5,
                angular_nodes: 24,
                ..Default::default()
            },
            level: 0,
            max_iterations: 60,
            v0_tol: 1e-6,
            step_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBubble {
    pub alpha: f64,
    pub a: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub bubbles: Vec<FittedBubble>,
    /// `‖u − Σ α_i Pδ_i‖₂`, when `‖u‖₂` is known.
    pub residual_norm: Option<f64>,
    /// Raw orthogonality pairings, bubble-major, `λ∂_λ` first.
    pub v0_pairings: Vec<f64>,
    /// Pairings divided by `‖residual‖·‖direction‖`, when defined.
    pub v0_ratios: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Coordinates of the center that are free under the field symmetry.
fn free_axes(sym: Symmetry, n: usize) -> Vec<usize> {
    match sym {
        Symmetry::Radial => vec![],
        Symmetry::Axial => vec![0],
        Symmetry::Planar => vec![0, 1],
        Symmetry::Full => (0..n).collect(),
    }
}

struct State {
    a: Vec<Vec<f64>>,
    lambda: Vec<f64>,
}

impl State {
    fn bubbles(&self) -> Vec<Bubble<f64>> {
        self.a
            .iter()
            .zip(&self.lambda)
            .map(|(a, l)| Bubble::new(a.clone(), *l))
            .collect()
    }
}

/// `D(δ^p)` for `D = λ∂_λ` (`dir = None`) or `λ^{-1}∂_{a_k}` (`dir = Some(k)`).
fn delta_pow_derivative(b: &Bubble<f64>, dir: Option<usize>, x: &[f64]) -> f64 {
    let n = b.dim() as f64;
    let p = (n + 4.0) / (n - 4.0);
    let mu = (n - 4.0) / 2.0;
    let l = b.lambda;
    let r2 = dist2(x, &b.a);
    let q = 1.0 + l * l * r2;
    let dp = delta_pow(b, x);
    match dir {
        None => p * dp * mu * (1.0 - l * l * r2) / q,
        Some(k) => p * dp * 2.0 * mu * l * (x[k] - b.a[k]) / q,
    }
}

struct Evaluation {
    alpha: Vec<f64>,
    g: Vec<f64>,
    fitted_sq: f64,
}

fn evaluate<F: Field + ?Sized>(
    field: &F,
    st: &State,
    axes: &[usize],
    opt: &DecomposeOptions,
) -> Result<Evaluation> {
    let bs = st.bubbles();
    let pbs: Vec<ProjectedBubble> = bs
        .iter()
        .map(|b| ProjectedBubble::new(b.clone(), Mode::Exact))
        .collect::<Result<_>>()?;
    let p = bs.len();
    let n = field.dim();
    let spec = &opt.quadrature;
    let level = opt.level;
    let pair = |w: &(dyn Fn(&[f64]) -> f64 + Sync),
                i: usize,
                g: &(dyn Fn(&[f64]) -> f64 + Sync)|
     -> Result<f64> {
        let mut centers: Vec<Center> = bs
            .iter()
            .map(|b| Center::new(b.a.clone(), b.lambda))
            .collect();
        let _ = i;
        centers.extend(field.quadrature_centers());
        let sym = field.symmetry().join(Symmetry::of_points(
            centers.iter().map(|c| c.point.as_slice()),
        ));
        let f = |x: &[f64]| w(x) * g(x);
        integrate_fixed(n, &f, &centers, Domain::UnitBall, sym, spec, level).map(|r| r.0)
    };
    let mut bvec = DVector::zeros(p);
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        let bi = &bs[i];
        bvec[i] = field.integrate_against(bi, &|x| delta_pow(bi, x), spec, level)?;
        for j in 0..p {
            let pj = &pbs[j];
            m[(i, j)] = pair(&|x| pj.eval(x), i, &|x| delta_pow(bi, x))?;
        }
    }
    let m = (&m + m.transpose()) * 0.5;
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("bubble Gram matrix is not positive definite".into()))?;
    let alpha = chol.solve(&bvec);
    let fitted_sq = bvec.dot(&alpha);
    let mut g = Vec::new();
    for (i, bi) in bs.iter().enumerate() {
        let dirs: Vec<Option<usize>> = std::iter::once(None)
            .chain(axes.iter().map(|k| Some(*k)))
            .collect();
        for d in dirs {
            let gd = |x: &[f64]| delta_pow_derivative(bi, d, x);
            let mut v = field.integrate_against(bi, &gd, spec, level)?;
            for j in 0..p {
                let pj = &pbs[j];
                v -= alpha[j] * pair(&|x| pj.eval(x), i, &gd)?;
            }
            g.push(v);
        }
    }
    Ok(Evaluation {
        alpha: alpha.iter().copied().collect(),
        g,
        fitted_sq,
    })
}

fn apply_step(st: &State, axes: &[usize], step: &[f64]) -> State {
    let stride = 1 + axes.len();
    let mut a = st.a.clone();
    let mut lambda = st.lambda.clone();
    for i in 0..st.lambda.len() {
        let l0 = st.lambda[i];
        lambda[i] = l0 * step[i * stride].exp();
        for (k, ax) in axes.iter().enumerate() {
            a[i][*ax] += step[i * stride + 1 + k] / l0;
        }
    }
    State { a, lambda }
}

/// Local maxima of the field on a grid in the free subspace, refined by
/// pattern search.
pub fn peak_seeds<F: Field + ?Sized>(field: &F, count: usize) -> Result<Vec<Vec<f64>>> {
    let n = field.dim();
    let seeds = field.seeds();
    if !seeds.is_empty() {
        return Ok(seeds);
    }
    let axes = free_axes(field.symmetry(), n);
    let m: usize = match axes.len() {
        0 => return Ok(vec![vec![0.0; n]]),
        1 => 801,
        2 => 241,
        _ => {
            return Err(Error::InvalidInput(
                "fields without axial or planar symmetry must supply seeds".into(),
            ))
        }
    };
    let h = 2.0 / (m - 1) as f64;
    let grid_pt = |idx: &[usize]| -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (k, ax) in axes.iter().enumerate() {
            x[*ax] = -1.0 + h * idx[k] as f64;
        }
        x
    };
    let mut vals = vec![f64::NEG_INFINITY; m.pow(axes.len() as u32)];
    let flat = |idx: &[usize]| idx.iter().fold(0, |acc, i| acc * m + i);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..vals.len() {
        let x = grid_pt(&idx);
        if norm(&x) < 1.0 {
            vals[flat(&idx)] = field.eval(&x);
        }
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    let mut maxima: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..vals.len() {
        let v = vals[flat(&idx)];
        if v.is_finite() && v > 0.0 {
            let mut is_max = true;
            for d in 0..idx.len() {
                for s in [-1i64, 1] {
                    let j = idx[d] as i64 + s;
                    if j < 0 || j >= m as i64 {
                        continue;
                    }
                    let mut nb = idx.clone();
                    nb[d] = j as usize;
                    if vals[flat(&nb)] > v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                maxima.push((v, idx.clone()));
            }
        }
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    for (_, idx) in maxima.into_iter().take(count) {
        let mut x = grid_pt(&idx);
        let mut step = h;
        let mut best = field.eval(&x);
        while step > 1e-10 {
            let mut moved = false;
            for ax in &axes {
                for s in [-1.0, 1.0] {
                    let mut y = x.clone();
                    y[*ax] += s * step;
                    if norm(&y) < 1.0 {
                        let v = field.eval(&y);
                        if v > best {
                            best = v;
                            x = y;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Best approximation of `u` by `Σ_{i≤p} α_i Pδ_{(a_i,λ_i)}`.
pub fn decompose<F: Field + ?Sized>(field: &F, opt: &DecomposeOptions) -> Result<DecomposeReport> {
    let n = field.dim();
    crate::error::check_dim(n)?;
    let p = opt.bubbles;
    if p == 0 || p > 2 {
        return Err(Error::InvalidInput("decompose supports p = 1 or 2".into()));
    }
    let axes = free_axes(field.symmetry(), n);
    let seeds = peak_seeds(field, p)?;
    if seeds.len() < p {
        return Err(Error::NonConvergence(format!(
            "found {} peaks, need {p}",
            seeds.len()
        )));
    }
    let mu = (n as f64 - 4.0) / 2.0;
    let cn = c_n::<f64>(n);
    let mut st = State {
        a: seeds[..p].to_vec(),
        lambda: seeds[..p]
            .iter()
            .map(|x| (field.eval(x).max(1e-300) / cn).powf(1.0 / mu).max(1.0))
            .collect(),
    };
    let nv = p * (1 + axes.len());
    let mut ev = evaluate(field, &st, &axes, opt)?;
    let gnorm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opt.max_iterations {
        iterations += 1;
        let h = 1e-6;
        let mut jac = DMatrix::zeros(nv, nv);
        for k in 0..nv {
            let mut e = vec![0.0; nv];
            e[k] = h;
            let up = evaluate(field, &apply_step(&st, &axes, &e), &axes, opt)?;
            e[k] = -h;
            let dn = evaluate(field, &apply_step(&st, &axes, &e), &axes, opt)?;
            for r in 0..nv {
                jac[(r, k)] = (up.g[r] - dn.g[r]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_iterator(nv, ev.g.iter().map(|v| -v));
        let step = jac.clone().lu().solve(&rhs).ok_or_else(|| {
            Error::Degenerate("singular Jacobian in decompose (bubble collision?)".into())
        })?;
        let mut t = 1.0;
        let g0 = gnorm(&ev.g);
        let mut accepted = false;
        while t > 1e-4 {
            let s: Vec<f64> = step.iter().map(|v| (t * v).clamp(-0.5, 0.5)).collect();
            let cand = apply_step(&st, &axes, &s);
            if cand.a.iter().all(|a| norm(a) < 1.0) {
                if let Ok(ce) = evaluate(field, &cand, &axes, opt) {
                    if gnorm(&ce.g) < g0 || t * step.amax() < opt.step_tol {
                        st = cand;
                        ev = ce;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let small_step = step.amax() < opt.step_tol;
        if !accepted || small_step {
            converged = small_step || g0 < 1e-14;
            break;
        }
        if let Some(u2) = field.energy_norm_sq() {
            let res = (u2 - ev.fitted_sq).max(0.0).sqrt();
            if res > 0.0 && gnorm(&ev.g) <= opt.v0_tol * res * 1e-2 {
                converged = true;
                break;
            }
        }
    }
    let residual_norm = field
        .energy_norm_sq()
        .map(|u2| (u2 - ev.fitted_sq).max(0.0).sqrt());
    let dir_norms = direction_norms(&st, &axes, opt)?;
    let v0_ratios = residual_norm.filter(|r| *r > 0.0).map(|r| {
        ev.g.iter()
            .zip(&dir_norms)
            .map(|(g, d)| g.abs() / (r * d))
            .collect::<Vec<f64>>()
    });
    let ok = converged
        || v0_ratios
            .as_ref()
            .is_some_and(|v| v.iter().all(|x| *x <= opt.v0_tol));
    let mut bubbles: Vec<FittedBubble> = (0..p)
        .map(|i| FittedBubble {
            alpha: ev.alpha[i],
            a: st.a[i].clone(),
            lambda: st.lambda[i],
        })
        .collect();
    bubbles.sort_by(|x, y| {
        x.a.partial_cmp(&y.a)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.lambda.total_cmp(&y.lambda))
    });
    let report = DecomposeReport {
        bubbles,
        residual_norm,
        v0_pairings: ev.g,
        v0_ratios,
        iterations,
    };
    if !ok {
        return Err(Error::NonConvergence(format!(
            "decompose stopped after {iterations} iterations; best iterate {:?}",
            report.bubbles
        )));
    }
    Ok(report)
}

/// `‖D Pδ_i‖₂` for each orthogonality direction, via a parameter
/// difference of `Pδ` paired with the analytic `D(δ^p)`.
fn direction_norms(st: &State, axes: &[usize], opt: &DecomposeOptions) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for b in st.bubbles() {
        let n = b.dim();
        let dirs: Vec<Option<usize>> = std::iter::once(None)
            .chain(axes.iter().map(|k| Some(*k)))
            .collect();
        for d in dirs {
            let h = 1e-5;
            let shift = |s: f64| -> Result<ProjectedBubble> {
                let mut c = b.clone();
                match d {
                    None => c.lambda *= s.exp(),
                    Some(k) => c.a[k] += s / b.lambda,
                }
                ProjectedBubble::exact(c)
            };
            let (up, dn) = (shift(h)?, shift(-h)?);
            let f =
                |x: &[f64]| (up.eval(x) - dn.eval(x)) / (2.0 * h) * delta_pow_derivative(&b, d, x);
            let centers = [Center::new(b.a.clone(), b.lambda)];
            let sym = if d.is_some_and(|k| k > 0) {
                Symmetry::Planar
            } else {
                Symmetry::Axial
            }
            .join(Symmetry::of_points([b.a.as_slice()]));
            let sym = if n < 3 { Symmetry::Full } else { sym };
            let v = integrate_fixed(
                n,
                &f,
                &centers,
                Domain::UnitBall,
                sym,
                &opt.quadrature,
                opt.level,
            )?
            .0;
            out.push(v.max(0.0).sqrt());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::on_axis;

    #[test]
    fn recovers_exact_single_bubble() {
        let n = 7;
        let spec = QuadratureSpec::default();
        let f =
            SyntheticField::new(vec![(1.3, Bubble::new(on_axis(n, 0.1), 80.0))], &spec).unwrap();
        let rep = decompose(&f, &DecomposeOptions::default()).unwrap();
        let b = &rep.bubbles[0];
        assert!((b.alpha - 1.3).abs() < 1e-6, "{rep:?}");
        assert!((b.a[0] - 0.1).abs() < 1e-6);
        assert!((b.lambda / 80.0 - 1.0).abs() < 1e-6);
        assert!(rep.residual_norm.unwrap() < 1e-3);
    }

    #[test]
    fn grid_roundtrip_interpolates() {
        let n = 6;
        let spec = QuadratureSpec::default();
        let f =
            SyntheticField::new(vec![(1.0, Bubble::new(on_axis(n, -0.2), 5.0))], &spec).unwrap();
        let g = GridFunction::sample(&f, Symmetry::Axial, 201).unwrap();
        g.validate().unwrap();
        let mut x = on_axis(n, 0.3);
        x[3] = 0.2;
        assert!((g.eval(&x) - f.eval(&x)).abs() < 1e-3 * f.eval(&on_axis(n, -0.2)));
        let s = serde_json::to_string(&g).unwrap();
        let back: GridFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back.shape, g.shape);
        assert!(back
            .values
            .iter()
            .zip(&g.values)
            .all(|(a, b)| (a - b).abs() <= 1e-15 * b.abs()));
    }
}
