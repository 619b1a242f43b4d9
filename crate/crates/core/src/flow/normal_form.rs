//! Normal-form level, the two-bubble initial map and the sampling estimate
//! of intersection numbers.

use super::integrate::{integrate_flow, Terminal};
use super::{FlowContext, FlowState};
use crate::bubbles::Bubble;
use crate::constants::s_n;
use crate::energy::j_quadrature;
use crate::error::{Error, Result};
use crate::morse::KField;
use crate::numerics::ode::OdeSpec;
use crate::numerics::QuadratureSpec;
use crate::projection::{Configuration, Mode};
use crate::scalar::dist;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `S_n^{4/n} K(a)^{−(n−4)/n} (1 − cη ΔK(y) / (λ² K(y)^{n/4}))`.
pub fn psi_normal_form(a: &[f64], lambda: f64, y: &[f64], k: &KField, c_eta: f64) -> f64 {
    let nf = k.dim as f64;
    let ky = k.value(y);
    s_n(k.dim).powf(4.0 / nf)
        * k.value(a).powf(-(nf - 4.0) / nf)
        * (1.0 - c_eta / (lambda * lambda) * k.laplacian(y) / ky.powf(nf / 4.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CEtaFit {
    /// Least-squares value over the ladder.
    pub c_eta: f64,
    /// `(λ, cη(λ))` from each rung.
    pub samples: Vec<(f64, f64)>,
    /// Largest relative deviation of a rung from the fit.
    pub spread: f64,
}

/// Fits `cη` so that `Ψ(y, λ, y)` matches the quadrature energy of a bubble
/// centred at `y` along the ladder.
pub fn fit_c_eta(k: &KField, y: &[f64], ladder: &[f64], spec: &QuadratureSpec) -> Result<CEtaFit> {
    let nf = k.dim as f64;
    let lap = k.laplacian(y);
    if lap == 0.0 || ladder.is_empty() {
        return Err(Error::InvalidInput(
            "fit needs ΔK(y) ≠ 0 and a non-empty ladder".into(),
        ));
    }
    let base = psi_normal_form(y, 1.0, y, k, 0.0);
    let scale = lap / k.value(y).powf(nf / 4.0);
    let mut samples = Vec::new();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &l in ladder {
        let cfg = Configuration::new(vec![Bubble::new(y.to_vec(), l)], vec![1.0], Mode::Exact)?;
        let rel = j_quadrature(&cfg, k, spec)? / base - 1.0;
        // rel = −cη x with x = scale/λ²
        let x = scale / (l * l);
        samples.push((l, -rel / x));
        sxy += -rel * x;
        sxx += x * x;
    }
    let c_eta = sxy / sxx;
    let spread = samples
        .iter()
        .map(|s| (s.1 / c_eta - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(CEtaFit {
        c_eta,
        samples,
        spread,
    })
}

/// `f_λ(α, x)`: weights `α/K(y₀)^{(n−4)/8}` at `y₀` and
/// `(1−α)/K(x)^{(n−4)/8}` at `x`, normalized by the norm expansion. `α` of 0
/// or 1 gives a single bubble.
pub fn f_lambda_initial(
    alpha: f64,
    y0: &[f64],
    x: &[f64],
    lambda: f64,
    k: &KField,
) -> Result<FlowState> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput("alpha must lie in [0, 1]".into()));
    }
    let nf = k.dim as f64;
    let w = |p: &[f64]| k.value(p).powf(-(nf - 4.0) / 8.0);
    let (bubbles, raw) = if alpha == 1.0 {
        (vec![Bubble::new(y0.to_vec(), lambda)], vec![w(y0)])
    } else if alpha == 0.0 {
        (vec![Bubble::new(x.to_vec(), lambda)], vec![w(x)])
    } else {
        if dist(x, y0) == 0.0 {
            return Err(Error::CoincidentPoints(0.0));
        }
        (
            vec![
                Bubble::new(y0.to_vec(), lambda),
                Bubble::new(x.to_vec(), lambda),
            ],
            vec![alpha * w(y0), (1.0 - alpha) * w(x)],
        )
    };
    for b in &bubbles {
        b.validate()?;
    }
    let refs: Vec<&Bubble<f64>> = bubbles.iter().collect();
    let alphas = crate::energy::normalized_alphas_of(&refs, &raw)?;
    Ok(FlowState {
        bubbles,
        alphas,
        time: 0.0,
    })
}

/// Balance defect `|α₁^{8/(n−4)}K(a₁) / (α₂^{8/(n−4)}K(a₂)) − 1|`.
fn balance_defect(s: &FlowState, k: &KField) -> f64 {
    if s.p() < 2 {
        return 0.0;
    }
    let e = 8.0 / (k.dim as f64 - 4.0);
    let v: Vec<f64> = s
        .bubbles
        .iter()
        .zip(&s.alphas)
        .map(|(b, a)| a.powf(e) * k.value(&b.a))
        .collect();
    (v[0] / v[1] - 1.0).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionOptions {
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub ode: OdeSpec,
    /// Repeat with the α grid refined twice and compare parities.
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEstimate {
    /// Flows ending at the two-mass CPI `(y₀, y_i)`.
    pub count: usize,
    pub total: usize,
    /// Budget terminals and failed integrations.
    pub unresolved: usize,
    pub parity: usize,
    pub refined_count: Option<usize>,
    pub stable: Option<bool>,
    /// Always true: sampling cannot certify an intersection number.
    pub heuristic: bool,
}

enum Outcome {
    Hit,
    Miss,
    Unresolved,
}

fn run_one(
    alpha: f64,
    y0: &[f64],
    yi: &[f64],
    x: &[f64],
    ctx: &FlowContext,
    lambda: f64,
    ode: &OdeSpec,
) -> Outcome {
    let Ok(mut s) = f_lambda_initial(alpha, y0, x, lambda, &ctx.k) else {
        return Outcome::Unresolved;
    };
    // Off balance, the sum is close to its dominant bubble alone.
    if s.p() == 2 && balance_defect(&s, &ctx.k) >= ctx.constants.epsilon {
        let keep = if alpha >= 0.5 { 0 } else { 1 };
        s = match FlowState::new(vec![s.bubbles[keep].clone()], &ctx.k) {
            Ok(s) => s,
            Err(_) => return Outcome::Unresolved,
        };
    }
    let Ok(st) = FlowState::new(s.bubbles, &ctx.k) else {
        return Outcome::Unresolved;
    };
    if !st.in_v(ctx.constants.epsilon) {
        return Outcome::Miss;
    }
    match integrate_flow(&st, ctx, ode) {
        Ok(o) => match o.terminal {
            Terminal::Cpi { record } => {
                let tol = ctx.constants.cpi_tol;
                let on = |p: &[f64]| record.points.iter().any(|q| dist(q, p) < tol);
                if record.points.len() == 2 && on(y0) && on(yi) {
                    Outcome::Hit
                } else {
                    Outcome::Miss
                }
            }
            Terminal::ExitV { .. } => Outcome::Miss,
            Terminal::Budget { .. } => Outcome::Unresolved,
        },
        Err(_) => Outcome::Unresolved,
    }
}

fn tally(
    alphas: &[f64],
    xs: &[Vec<f64>],
    y0: &[f64],
    yi: &[f64],
    ctx: &FlowContext,
    opt: &IntersectionOptions,
) -> (usize, usize, usize) {
    let jobs: Vec<(f64, &Vec<f64>)> = xs
        .iter()
        .flat_map(|x| alphas.iter().map(move |a| (*a, x)))
        .collect();
    let res: Vec<Outcome> = jobs
        .par_iter()
        .map(|(a, x)| run_one(*a, y0, yi, x, ctx, opt.lambda, &opt.ode))
        .collect();
    let hits = res.iter().filter(|o| matches!(o, Outcome::Hit)).count();
    let un = res
        .iter()
        .filter(|o| matches!(o, Outcome::Unresolved))
        .count();
    (hits, res.len(), un)
}

/// Counts flows from `f_λ(α, x)` over the sample that end at the two-mass CPI
/// `(y₀, y_i)`, with `y₀` the global maximum of K. Heuristic.
pub fn estimate_intersection_number(
    y_i: &[f64],
    xs: &[Vec<f64>],
    ctx: &FlowContext,
    opt: &IntersectionOptions,
) -> Result<IntersectionEstimate> {
    let y0 = ctx
        .critical
        .iter()
        .max_by(|a, b| a.k_value.total_cmp(&b.k_value))
        .ok_or_else(|| Error::InvalidInput("K has no nondegenerate critical points".into()))?
        .y
        .clone();
    if opt.alphas.is_empty() || xs.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one α and one sample point".into(),
        ));
    }
    let (count, total, unresolved) = tally(&opt.alphas, xs, &y0, y_i, ctx, opt);
    let (refined_count, stable) = if opt.refine {
        let mut fine = opt.alphas.clone();
        let mut sorted = opt.alphas.clone();
        sorted.sort_by(f64::total_cmp);
        fine.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let (c2, _, _) = tally(&fine, xs, &y0, y_i, ctx, opt);
        (Some(c2), Some(c2 % 2 == count % 2))
    } else {
        (None, None)
    };
    Ok(IntersectionEstimate {
        count,
        total,
        unresolved,
        parity: count % 2,
        refined_count,
        stable,
        heuristic: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morse::field::{single_bump, two_bump};
    use crate::scalar::on_axis;

    #[test]
    fn psi_decreases_to_level() {
        let k = single_bump(7).unwrap();
        let y = vec![0.0; 7];
        let level = crate::morse::single_level(7, k.value(&y));
        let mut prev = f64::INFINITY;
        for l in [10.0, 100.0, 1000.0, 1e5] {
            let v = psi_normal_form(&y, l, &y, &k, 1.0);
            assert!(v > level && v < prev);
            prev = v;
        }
        assert!((prev - level) / level < 1e-8);
    }

    #[test]
    fn c_eta_positive_and_stable() {
        let k = single_bump(7).unwrap();
        let spec = QuadratureSpec {
            tolerance: 1e-11,
            ..Default::default()
        };
        let f = fit_c_eta(&k, &[0.0; 7], &[25.0, 50.0, 100.0, 200.0], &spec).unwrap();
        assert!(f.c_eta > 0.0);
        assert!(f.spread < 0.2, "{f:?}");
    }

    #[test]
    fn f_lambda_limits() {
        let k = two_bump(7).unwrap();
        let (y0, x) = (on_axis(7, 0.3), on_axis(7, -0.3));
        let s = f_lambda_initial(1.0, &y0, &x, 50.0, &k).unwrap();
        assert_eq!(s.p(), 1);
        assert_eq!(s.bubbles[0].a, y0);
        let h = f_lambda_initial(0.5, &y0, &x, 50.0, &k).unwrap();
        assert!(balance_defect(&h, &k) < 1e-12);
        let kk = crate::morse::field::constant(7).unwrap();
        let e = f_lambda_initial(0.5, &y0, &x, 50.0, &kk).unwrap();
        assert!((e.alphas[0] - e.alphas[1]).abs() < 1e-15);
        assert!(
            e.eps12().unwrap() < 0.05
                && e.bubbles
                    .iter()
                    .all(|b| b.lambda * (1.0 - crate::scalar::norm(&b.a)) > 20.0)
        );
    }
}
