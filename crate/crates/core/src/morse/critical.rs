//! Critical points of K by seeded Newton iteration.

use super::field::KField;
use crate::error::Result;
use crate::numerics::qmc::halton;
use crate::scalar::{dist, norm};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub y: Vec<f64>,
    pub k_value: f64,
    pub morse_index: usize,
    pub laplacian_k: f64,
    /// `H(y, y)`, filled for n = 6 only.
    pub robin_value: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    /// Nondegenerate points sorted by decreasing K.
    pub points: Vec<CriticalPoint>,
    /// Points rejected because the Hessian is (numerically) singular.
    pub degenerate: Vec<CriticalPoint>,
    pub seeds: usize,
    pub converged: usize,
    /// More than `MAX_DISTINCT` distinct limits: the critical set is not a set
    /// of isolated points. Only a sample is kept in `degenerate`.
    pub non_isolated: bool,
}

impl CriticalSearch {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.degenerate.is_empty()
    }
}

const GRAD_TOL: f64 = 1e-13;
const MAX_ITER: usize = 300;
const MAX_STEP: f64 = 0.1;
const DEDUP: f64 = 1e-6;
/// Relative eigenvalue threshold below which a Hessian counts as singular.
pub const DEGENERACY_TOL: f64 = 1e-4;
const MAX_GRID: usize = 200_000;
const MAX_DISTINCT: usize = 1000;

fn eigen(k: &KField, y: &[f64]) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let n = k.dim;
    SymmetricEigen::new(DMatrix::from_row_slice(n, n, &k.hessian(y)))
}

/// Newton on ∇K with a pseudo-inverse for near-singular directions and a
/// step cap. Returns the limit if it lies inside the ball.
fn newton(k: &KField, seed: &[f64]) -> Option<Vec<f64>> {
    let mut x = seed.to_vec();
    for _ in 0..MAX_ITER {
        let g = k.grad(&x);
        if norm(&g) < GRAD_TOL {
            return (norm(&x) < 1.0).then_some(x);
        }
        let e = eigen(k, &x);
        let big = e.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = vec![0.0; x.len()];
        for (j, &lam) in e.eigenvalues.iter().enumerate() {
            if lam.abs() <= 1e-14 * big {
                continue;
            }
            let v = e.eigenvectors.column(j);
            let c: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / lam;
            for i in 0..x.len() {
                step[i] -= c * v[i];
            }
        }
        let s = norm(&step);
        if s == 0.0 || !s.is_finite() {
            return None;
        }
        let scale = if s > MAX_STEP { MAX_STEP / s } else { 1.0 };
        for i in 0..x.len() {
            x[i] += scale * step[i];
        }
        if norm(&x) > 1.2 {
            return None;
        }
    }
    None
}

/// Seed set: a full grid with `per_axis` nodes per coordinate in [−0.95, 0.95]
/// while it has at most 200k points; beyond that, the grid spans the leading
/// coordinates only, topped up with Halton points. Always includes the origin
/// and a fine grid on each coordinate axis.
pub fn seeds(n: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(2);
    let node = |i: usize| -0.95 + 1.9 * i as f64 / (per_axis - 1) as f64;
    let mut d = n;
    while d > 1 && per_axis.saturating_pow(d as u32) > MAX_GRID {
        d -= 1;
    }
    let mut out = vec![vec![0.0; n]];
    let total = per_axis.pow(d as u32);
    for mut idx in 0..total {
        let mut p = vec![0.0; n];
        for c in p.iter_mut().take(d) {
            *c = node(idx % per_axis);
            idx /= per_axis;
        }
        if norm(&p) < 0.98 {
            out.push(p);
        }
    }
    if d < n {
        for h in halton(n, 20_000, 0x5eed) {
            let p: Vec<f64> = h.iter().map(|u| 1.9 * u - 0.95).collect();
            if norm(&p) < 0.98 {
                out.push(p);
            }
        }
    }
    let fine = 4 * per_axis + 1;
    for axis in 0..n {
        for i in 0..fine {
            let mut p = vec![0.0; n];
            p[axis] = -0.97 + 1.94 * i as f64 / (fine - 1) as f64;
            out.push(p);
        }
    }
    out
}

/// Classifies a converged point.
pub fn classify(k: &KField, y: Vec<f64>) -> Result<(CriticalPoint, bool)> {
    let e = eigen(k, &y);
    let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let big = ev.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let degenerate = ev.iter().any(|v| v.abs() < DEGENERACY_TOL * big);
    let robin_value = if k.dim == 6 {
        Some(crate::green::robin(&y)?)
    } else {
        None
    };
    let cp = CriticalPoint {
        k_value: k.value(&y),
        morse_index: ev.iter().filter(|v| **v < 0.0).count(),
        laplacian_k: k.laplacian(&y),
        robin_value,
        grad_norm: norm(&k.grad(&y)),
        eigenvalues: ev,
        y,
    };
    Ok((cp, degenerate))
}

/// Newton from every seed, deduplicated in seed order, then classified.
pub fn find_critical_points(k: &KField, per_axis: usize) -> Result<CriticalSearch> {
    let s = seeds(k.dim, per_axis);
    let limits: Vec<Option<Vec<f64>>> = s.par_iter().map(|p| newton(k, p)).collect();
    let converged = limits.iter().filter(|l| l.is_some()).count();
    // Coarse pass on quantized coordinates, then exact pairwise merging.
    let mut cells = std::collections::HashSet::new();
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut non_isolated = false;
    for y in limits.into_iter().flatten() {
        let key: Vec<i64> = y.iter().map(|v| (v / DEDUP).round() as i64).collect();
        if !cells.insert(key) {
            continue;
        }
        if unique.iter().all(|u| dist(u, &y) > DEDUP) {
            unique.push(y);
        }
        if unique.len() > MAX_DISTINCT {
            non_isolated = true;
            unique.truncate(10);
            break;
        }
    }
    let mut points = Vec::new();
    let mut degenerate = Vec::new();
    for y in unique {
        let (cp, deg) = classify(k, y)?;
        if deg || non_isolated {
            degenerate.push(cp);
        } else {
            points.push(cp);
        }
    }
    let order = |a: &CriticalPoint, b: &CriticalPoint| {
        b.k_value.total_cmp(&a.k_value).then_with(|| {
            a.y.iter()
                .zip(&b.y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    };
    points.sort_by(order);
    degenerate.sort_by(order);
    Ok(CriticalSearch {
        points,
        degenerate,
        seeds: s.len(),
        converged,
        non_isolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morse::field::*;

    #[test]
    fn single_bump_has_one_maximum() {
        for n in [6, 7, 9] {
            let r = find_critical_points(&single_bump(n).unwrap(), 5).unwrap();
            assert_eq!(r.points.len(), 1, "n={n}");
            let p = &r.points[0];
            assert_eq!(p.morse_index, n);
            assert!(norm(&p.y) < 1e-12);
            assert!(r.degenerate.is_empty());
        }
    }

    #[test]
    fn two_bump_maxima_and_saddle() {
        let r = find_critical_points(&two_bump(7).unwrap(), 5).unwrap();
        let idx: Vec<usize> = r.points.iter().map(|p| p.morse_index).collect();
        assert_eq!(idx, vec![7, 7, 6]);
        for p in &r.points {
            assert!(p.grad_norm < 1e-10);
            assert!(p.y[1..].iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn monkey_saddle_is_degenerate() {
        let r = find_critical_points(&monkey_saddle(7).unwrap(), 5).unwrap();
        assert!(r.points.is_empty());
        assert_eq!(r.degenerate.len(), 1);
        assert!(norm(&r.degenerate[0].y) < 1e-5);
    }

    #[test]
    fn constant_field_is_entirely_degenerate() {
        let r = find_critical_points(&constant(7).unwrap(), 5).unwrap();
        assert!(r.points.is_empty());
        assert!(r.non_isolated);
        assert!(!r.is_empty());
    }

    #[test]
    fn seed_grid_is_capped() {
        assert!(seeds(10, 5).len() < 250_000);
        assert!(seeds(7, 5).iter().any(|p| norm(p) == 0.0));
    }
}
