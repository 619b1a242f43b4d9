//! Mechanical checks of the standing assumptions on K.

use super::cpi::{enumerate_cpi_single, Membership};
use super::critical::{find_critical_points, CriticalPoint, CriticalSearch};
use super::field::KField;
use crate::error::Result;
use crate::numerics::ode::{integrate, Event, OdeSpec, Stop};
use crate::numerics::qmc::sphere_points;
use crate::scalar::{dist, norm};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Only a sufficient condition was tested.
    Partial,
    NotChecked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Boundary {
        x: Vec<f64>,
        normal_derivative: f64,
    },
    Point {
        y: Vec<f64>,
        k_value: f64,
        morse_index: usize,
        value: f64,
        note: String,
    },
    Inequality {
        y0: Vec<f64>,
        y: Vec<f64>,
        lhs: f64,
        rhs: f64,
        holds: bool,
    },
    Trajectory {
        from: Vec<f64>,
        to: Vec<f64>,
        start: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionResult {
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableManifoldRow {
    pub y: Vec<f64>,
    pub morse_index: usize,
    /// `n − index` under the descending flow of K.
    pub stable_dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub dim: usize,
    pub field: String,
    pub results: Vec<AssumptionResult>,
    pub stable_manifolds: Vec<StableManifoldRow>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seeds_per_axis: usize,
    pub boundary_samples: usize,
    /// Shots per unstable subspace in the (A5) search.
    pub shots: usize,
    /// Restricts (A7) to points of index `n − (k + 1)`; `None` checks every
    /// point with `−ΔK > 0` other than the global maximum.
    pub a7_k: Option<usize>,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seeds_per_axis: 5,
            boundary_samples: 2000,
            shots: 16,
            a7_k: None,
            seed: 0x5eed,
        }
    }
}

fn point_witness(p: &CriticalPoint, value: f64, note: &str) -> Witness {
    Witness::Point {
        y: p.y.clone(),
        k_value: p.k_value,
        morse_index: p.morse_index,
        value,
        note: note.to_string(),
    }
}

fn result(
    name: &str,
    status: Status,
    detail: impl Into<String>,
    witnesses: Vec<Witness>,
) -> AssumptionResult {
    AssumptionResult {
        name: name.to_string(),
        status,
        detail: detail.into(),
        witnesses,
    }
}

fn check_a0(k: &KField, samples: usize, seed: u64) -> AssumptionResult {
    let mut worst: Option<(Vec<f64>, f64)> = None;
    let mut bad = Vec::new();
    for x in sphere_points(k.dim, samples, seed) {
        let d = k.normal_derivative(&x);
        if worst.as_ref().is_none_or(|w| d > w.1) {
            worst = Some((x.clone(), d));
        }
        if d >= 0.0 && bad.len() < 5 {
            bad.push(Witness::Boundary {
                x,
                normal_derivative: d,
            });
        }
    }
    let (x, d) = worst.expect("at least one boundary sample");
    if bad.is_empty() {
        result(
            "A0",
            Status::Pass,
            format!("∂K/∂ν < 0 at {samples} boundary samples; largest {d:.3e}"),
            vec![Witness::Boundary {
                x,
                normal_derivative: d,
            }],
        )
    } else {
        result(
            "A0",
            Status::Fail,
            "∂K/∂ν ≥ 0 at sampled boundary points",
            bad,
        )
    }
}

fn check_a1(search: &CriticalSearch) -> AssumptionResult {
    if search.is_empty() {
        return result("A1", Status::Fail, "no critical points found", vec![]);
    }
    if search.non_isolated {
        let w = search
            .degenerate
            .iter()
            .map(|p| point_witness(p, 0.0, "non-isolated"))
            .collect();
        return result("A1", Status::Fail, "critical set is not isolated", w);
    }
    if !search.degenerate.is_empty() {
        let w = search
            .degenerate
            .iter()
            .map(|p| {
                let m = p
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |m, v| m.min(v.abs()));
                point_witness(p, m, "smallest |Hessian eigenvalue|")
            })
            .collect();
        return result("A1", Status::Fail, "degenerate critical point", w);
    }
    result(
        "A1",
        Status::Pass,
        format!("{} nondegenerate critical points", search.points.len()),
        vec![],
    )
}

fn check_a2(points: &[CriticalPoint], n: usize) -> Result<Vec<AssumptionResult>> {
    let (classified, _) = enumerate_cpi_single(points, n)?;
    let witnesses: Vec<Witness> = points
        .iter()
        .zip(&classified)
        .map(|(p, c)| {
            point_witness(
                p,
                c.sign_value,
                &format!("{:?}", c.membership).to_lowercase(),
            )
        })
        .collect();
    let indeterminate = classified
        .iter()
        .any(|c| c.membership == Membership::Indeterminate);
    // Points are sorted by decreasing K: included ones must come first.
    let first_excluded = classified
        .iter()
        .position(|c| c.membership != Membership::Included);
    let ordered = first_excluded.is_none_or(|i| {
        classified[i..]
            .iter()
            .all(|c| c.membership != Membership::Included)
    });
    let ties = first_excluded.is_some_and(|i| i > 0 && points[i - 1].k_value <= points[i].k_value);
    let a2 = if indeterminate {
        result(
            "A2",
            Status::Fail,
            "a sign lies inside the indeterminate band",
            witnesses.clone(),
        )
    } else if !ordered || ties {
        result(
            "A2",
            Status::Fail,
            "CPI-qualifying points are not exactly the top of the K ordering",
            witnesses.clone(),
        )
    } else {
        result(
            "A2",
            Status::Pass,
            "strict signs consistent with the K ordering",
            witnesses.clone(),
        )
    };

    // (A2′): the tail below the last included point must be strictly negative;
    // points above it with sign ≤ 0 need an index window set by (A3).
    let last_included = classified
        .iter()
        .rposition(|c| c.membership == Membership::Included);
    let tail_start = last_included.map_or(0, |i| i + 1);
    let tail_ok = classified[tail_start..]
        .iter()
        .all(|c| c.membership == Membership::Excluded);
    let head_nonpositive: Vec<Witness> = points[..tail_start]
        .iter()
        .zip(&classified[..tail_start])
        .filter(|(_, c)| c.membership != Membership::Included)
        .map(|(p, c)| point_witness(p, c.sign_value, "needs index window from (A3)"))
        .collect();
    let a2p = if !tail_ok {
        result(
            "A2'",
            Status::Fail,
            "indeterminate sign below the qualifying set",
            witnesses,
        )
    } else if head_nonpositive.is_empty() {
        result(
            "A2'",
            Status::Pass,
            "reduces to (A2): no non-qualifying point above the cut",
            witnesses,
        )
    } else {
        result(
            "A2'",
            Status::Partial,
            "index window n − m + 3 ≤ index ≤ n − 2 depends on m from (A3), not computed",
            head_nonpositive,
        )
    };
    Ok(vec![a2, a2p])
}

/// Descending K-gradient shots from each `−ΔK < 0` point along its unstable
/// subspace; a shot that settles on a `−ΔK > 0` point is a witness of a
/// connecting orbit.
fn check_a5(
    k: &KField,
    points: &[CriticalPoint],
    shots: usize,
    seed: u64,
) -> Result<AssumptionResult> {
    let n = k.dim;
    let zero_lap: Vec<Witness> = points
        .iter()
        .filter(|p| p.laplacian_k.abs() <= 1e-8 * p.k_value.abs())
        .map(|p| point_witness(p, p.laplacian_k, "ΔK = 0"))
        .collect();
    if !zero_lap.is_empty() {
        return Ok(result(
            "A5",
            Status::Fail,
            "ΔK vanishes at a critical point",
            zero_lap,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = OdeSpec {
        rtol: 1e-9,
        atol: 1e-12,
        h0: 1e-3,
        t_max: 1e4,
        max_steps: 100_000,
        ..OdeSpec::default()
    };
    let mut hits = Vec::new();
    let mut fired = 0usize;
    for src in points.iter().filter(|p| p.laplacian_k > 0.0) {
        let e = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &k.hessian(&src.y)));
        let unstable: Vec<Vec<f64>> = (0..n)
            .filter(|&j| e.eigenvalues[j] < 0.0)
            .map(|j| e.eigenvectors.column(j).iter().copied().collect())
            .collect();
        if unstable.is_empty() {
            continue;
        }
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for v in &unstable {
            dirs.push(v.clone());
            dirs.push(v.iter().map(|x| -x).collect());
        }
        for _ in 0..shots {
            let mut d = vec![0.0; n];
            for v in &unstable {
                let c: f64 = rng.random_range(-1.0..1.0);
                for i in 0..n {
                    d[i] += c * v[i];
                }
            }
            let s = norm(&d);
            if s > 0.0 {
                dirs.push(d.iter().map(|x| x / s).collect());
            }
        }
        for d in dirs {
            let start: Vec<f64> = src.y.iter().zip(&d).map(|(y, v)| y + 1e-4 * v).collect();
            let events = [
                Event::new("exit", |_, x: &[f64]| 0.999 - norm(x)),
                Event::new("settled", |_, x: &[f64]| norm(&k.grad(x)) - 1e-9),
            ];
            let out = integrate(
                |_, x, dx| {
                    let g = k.grad(x);
                    for i in 0..n {
                        dx[i] = -g[i];
                    }
                    Ok(())
                },
                0.0,
                &start,
                &spec,
                &events,
                |_, _| {},
            )?;
            fired += 1;
            if out.stop != Stop::Event("settled".into()) {
                continue;
            }
            if let Some(t) = points
                .iter()
                .filter(|p| dist(&p.y, &src.y) > 1e-6 && dist(&p.y, &out.y) < 1e-3)
                .find(|p| p.laplacian_k < 0.0)
            {
                hits.push(Witness::Trajectory {
                    from: src.y.clone(),
                    to: t.y.clone(),
                    start,
                });
            }
        }
    }
    Ok(if hits.is_empty() {
        result(
            "A5",
            Status::Partial,
            format!("no connecting orbit found in {fired} shots (sufficient check only)"),
            vec![],
        )
    } else {
        result(
            "A5",
            Status::Fail,
            "descending orbit from a −ΔK < 0 point to a −ΔK > 0 point",
            hits,
        )
    })
}

fn check_a7(points: &[CriticalPoint], n: usize, k_opt: Option<usize>) -> AssumptionResult {
    let Some(top) = points.first() else {
        return result("A7", Status::NotChecked, "no critical points", vec![]);
    };
    let e = (n as f64 - 4.0) / 4.0;
    let lhs = 2.0 / top.k_value.powf(e);
    let mut w = Vec::new();
    for p in &points[1..] {
        if p.laplacian_k >= 0.0 {
            continue;
        }
        if let Some(k) = k_opt {
            if p.morse_index + k + 1 != n {
                continue;
            }
        }
        let rhs = 1.0 / p.k_value.powf(e);
        w.push(Witness::Inequality {
            y0: top.y.clone(),
            y: p.y.clone(),
            lhs,
            rhs,
            holds: lhs < rhs,
        });
    }
    let failed = w
        .iter()
        .any(|w| matches!(w, Witness::Inequality { holds: false, .. }));
    let scope = match k_opt {
        Some(k) => format!("points of index {} with −ΔK > 0", n as i64 - k as i64 - 1),
        None => "all points other than the maximum with −ΔK > 0".to_string(),
    };
    if w.is_empty() {
        result("A7", Status::Pass, format!("vacuous: no {scope}"), w)
    } else if failed {
        result(
            "A7",
            Status::Fail,
            format!("2/K(y0)^((n-4)/4) < 1/K(y)^((n-4)/4) fails for {scope}"),
            w,
        )
    } else {
        result("A7", Status::Pass, format!("holds for {scope}"), w)
    }
}

/// Runs the critical point search and every check.
pub fn check_assumptions(k: &KField, n: usize, opts: &CheckOptions) -> Result<AssumptionReport> {
    crate::error::check_dim(n)?;
    if k.dim != n {
        return Err(crate::error::Error::InvalidInput(format!(
            "field dimension {} differs from n = {n}",
            k.dim
        )));
    }
    let search = find_critical_points(k, opts.seeds_per_axis)?;
    check_with(k, n, &search, opts)
}

pub fn check_with(
    k: &KField,
    n: usize,
    search: &CriticalSearch,
    opts: &CheckOptions,
) -> Result<AssumptionReport> {
    let pts = &search.points;
    let mut results = vec![
        check_a0(k, opts.boundary_samples, opts.seed),
        check_a1(search),
    ];
    if n >= 6 && !pts.is_empty() {
        results.extend(check_a2(pts, n)?);
    } else {
        results.push(result(
            "A2",
            Status::NotChecked,
            "needs n ≥ 6 and critical points",
            vec![],
        ));
        results.push(result(
            "A2'",
            Status::NotChecked,
            "needs n ≥ 6 and critical points",
            vec![],
        ));
    }
    for name in ["A3", "A4", "A6"] {
        results.push(result(
            name,
            Status::NotChecked,
            "not checked (out of scope)",
            vec![],
        ));
    }
    results.push(check_a5(k, pts, opts.shots, opts.seed)?);
    results.push(check_a7(pts, n, opts.a7_k));
    let stable_manifolds = pts
        .iter()
        .map(|p| StableManifoldRow {
            y: p.y.clone(),
            morse_index: p.morse_index,
            stable_dimension: n - p.morse_index,
        })
        .collect();
    Ok(AssumptionReport {
        dim: n,
        field: k.name.clone(),
        results,
        stable_manifolds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morse::field::*;

    #[test]
    fn single_bump_passes_a0_a1_a2() {
        let r = check_assumptions(&single_bump(7).unwrap(), 7, &CheckOptions::default()).unwrap();
        assert_eq!(r.get("A0").unwrap().status, Status::Pass);
        assert_eq!(r.get("A1").unwrap().status, Status::Pass);
        assert_eq!(r.get("A2").unwrap().status, Status::Pass);
        assert_eq!(r.get("A3").unwrap().status, Status::NotChecked);
        assert_eq!(r.stable_manifolds[0].stable_dimension, 0);
    }

    #[test]
    fn a7_fails_for_heights_one_and_point_nine() {
        let k = two_bump_with(7, 0.4, 0.3).unwrap();
        let r = check_assumptions(&k, 7, &CheckOptions::default()).unwrap();
        let a7 = r.get("A7").unwrap();
        assert_eq!(a7.status, Status::Fail);
        match &a7.witnesses[0] {
            Witness::Inequality {
                lhs, rhs, holds, ..
            } => {
                assert!(!holds);
                assert!(lhs > rhs);
            }
            w => panic!("{w:?}"),
        }
    }

    #[test]
    fn monkey_saddle_fails_a1() {
        let r = check_assumptions(&monkey_saddle(7).unwrap(), 7, &CheckOptions::default()).unwrap();
        let a1 = r.get("A1").unwrap();
        assert_eq!(a1.status, Status::Fail);
        match &a1.witnesses[0] {
            Witness::Point { y, .. } => assert!(norm(y) < 1e-5),
            w => panic!("{w:?}"),
        }
    }

    #[test]
    fn two_bump_a5_is_partial() {
        let r = check_assumptions(&two_bump(7).unwrap(), 7, &CheckOptions::default()).unwrap();
        assert_eq!(r.get("A5").unwrap().status, Status::Partial);
        assert_eq!(r.get("A2").unwrap().status, Status::Pass);
    }

    #[test]
    fn a0_fails_for_outward_increasing_field() {
        let k = KField::new(
            7,
            "bowl",
            "1 + |x|²",
            vec![
                super::super::field::Term::Const { value: 1.0 },
                super::super::field::Term::Quadratic {
                    coef: 1.0,
                    center: vec![0.0; 7],
                },
            ],
        )
        .unwrap();
        let r = check_assumptions(&k, 7, &CheckOptions::default()).unwrap();
        assert_eq!(r.get("A0").unwrap().status, Status::Fail);
        // the minimum at 0 has ΔK > 0, so nothing qualifies
        assert_eq!(r.get("A2").unwrap().status, Status::Pass);
    }
}
