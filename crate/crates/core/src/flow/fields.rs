//! The single- and two-bubble pseudogradients as blended case fields.
//!
//! Each case field is built from four movers:
//! * `inward`: `w = −ν_a`, pushing the center away from the boundary;
//! * `climb`: `w = ∇K(a)/|∇K(a)|`;
//! * `scale(s)`: `s λ ∂Pδ/∂λ`;
//! * `settle`: `w = λ∇K(a)`, i.e. `da/dt = ∇K(a)`. It rides along with every
//!   λ-mover near a critical point so that the center converges to it while
//!   λ runs off. Inside the near-critical region `|∇K| ≤ 2C₂/λ` it is
//!   bounded by `2C₂`.
//!
//! Case indicators are blended with quintic ramps over ±10% bands around
//! each threshold (the `[C₂/λ, 2C₂/λ]` overlap for the gradient
//! test of the single-bubble field).

use super::{BubbleVelocity, FlowContext, FlowState};
use crate::bubbles::Bubble;
use crate::error::{Error, Result};
use crate::scalar::norm;
use serde::{Deserialize, Serialize};

/// A field value with the weights of the case fields that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEval {
    pub velocity: Vec<BubbleVelocity>,
    /// `(case, weight)` for every case with positive weight.
    pub weights: Vec<(String, f64)>,
}

impl FieldEval {
    /// The case with the largest weight.
    pub fn regime(&self) -> &str {
        self.weights
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|w| w.0.as_str())
            .unwrap_or("none")
    }
}

/// Quintic ramp from 0 at `lo` to 1 at `hi`.
fn ramp(x: f64, lo: f64, hi: f64) -> f64 {
    let u = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

/// Smooth indicator of `x ≥ t`.
fn above(x: f64, t: f64) -> f64 {
    ramp(x, 0.9 * t, 1.1 * t)
}

struct Mix {
    p: usize,
    n: usize,
    velocity: Vec<BubbleVelocity>,
    weights: Vec<(String, f64)>,
}

/// One case field: a velocity per bubble.
type Case = Vec<BubbleVelocity>;

impl Mix {
    fn new(p: usize, n: usize) -> Self {
        Mix {
            p,
            n,
            velocity: vec![BubbleVelocity::zero(n); p],
            weights: Vec::new(),
        }
    }

    fn empty(&self) -> Case {
        vec![BubbleVelocity::zero(self.n); self.p]
    }

    fn add(&mut self, label: &str, w: f64, case: &Case) {
        if w <= 0.0 {
            return;
        }
        for (v, c) in self.velocity.iter_mut().zip(case) {
            v.add_scaled(w, c);
        }
        match self.weights.iter_mut().find(|(l, _)| l == label) {
            Some(e) => e.1 += w,
            None => self.weights.push((label.to_string(), w)),
        }
    }

    fn finish(self) -> FieldEval {
        FieldEval {
            velocity: self.velocity,
            weights: self.weights,
        }
    }
}

fn outward(a: &[f64]) -> Vec<f64> {
    let r = norm(a);
    if r == 0.0 {
        vec![0.0; a.len()]
    } else {
        a.iter().map(|v| v / r).collect()
    }
}

fn inward(v: &mut BubbleVelocity, b: &Bubble<f64>, scale: f64) {
    for (x, nu) in v.a.iter_mut().zip(outward(&b.a)) {
        *x -= scale * nu;
    }
}

fn climb(ctx: &FlowContext, v: &mut BubbleVelocity, b: &Bubble<f64>, scale: f64) {
    let g = ctx.k.grad(&b.a);
    let gn = norm(&g);
    if gn > 0.0 {
        for (x, gi) in v.a.iter_mut().zip(g) {
            *x += scale * gi / gn;
        }
    }
}

fn settle(ctx: &FlowContext, v: &mut BubbleVelocity, b: &Bubble<f64>) {
    for (x, gi) in v.a.iter_mut().zip(ctx.k.grad(&b.a)) {
        *x += b.lambda * gi;
    }
}

/// Weight of the gradient case (`|∇K(a)| ≥ C₂/λ` fully on at `2C₂/λ`).
fn gradient_weight(ctx: &FlowContext, b: &Bubble<f64>) -> f64 {
    ramp(
        norm(&ctx.k.grad(&b.a)) * b.lambda / ctx.constants.c2,
        1.0,
        2.0,
    )
}

/// Single-bubble cases for bubble `i` of the mix, with overall weight `w`.
fn y1_into(
    ctx: &FlowContext,
    mix: &mut Mix,
    i: usize,
    b: &Bubble<f64>,
    w: f64,
    base: &Case,
    prefix: &str,
) {
    let d = 1.0 - norm(&b.a);
    let near = 1.0 - above(d, ctx.constants.d0);
    let g = gradient_weight(ctx, b);
    let mut c1 = base.clone();
    inward(&mut c1[i], b, 1.0);
    let mut c2 = base.clone();
    climb(ctx, &mut c2[i], b, 1.0);
    let mut c3 = base.clone();
    c3[i].log_lambda += ctx.lambda_sign(&b.a);
    settle(ctx, &mut c3[i], b);
    mix.add(&format!("{prefix}W1"), w * near, &c1);
    mix.add(&format!("{prefix}W2"), w * (1.0 - near) * g, &c2);
    mix.add(&format!("{prefix}W3"), w * (1.0 - near) * (1.0 - g), &c3);
}

fn check(state: &FlowState, ctx: &FlowContext, p: usize) -> Result<()> {
    if state.p() != p {
        return Err(Error::InvalidInput(format!(
            "field expects {p} bubble(s), state has {}",
            state.p()
        )));
    }
    for b in &state.bubbles {
        if b.dim() != ctx.k.dim {
            return Err(Error::InvalidInput("state and K dimensions differ".into()));
        }
        if norm(&b.a) >= 1.0 {
            return Err(Error::NearBoundary(1.0 - norm(&b.a)));
        }
    }
    Ok(())
}

/// The single-bubble pseudogradient: inward motion near the boundary,
/// climbing K where `|∇K| ≥ C₂/λ`, and `sign(−ΔK(y)) λ∂Pδ/∂λ` near a
/// critical point `y`.
pub fn y1_field(state: &FlowState, ctx: &FlowContext) -> Result<FieldEval> {
    check(state, ctx, 1)?;
    let mut mix = Mix::new(1, ctx.k.dim);
    let base = mix.empty();
    y1_into(ctx, &mut mix, 0, &state.bubbles[0], 1.0, &base, "");
    Ok(mix.finish())
}

/// Both centers at least `d₀` inside: the four interior subsets.
fn interior(ctx: &FlowContext, state: &FlowState, mix: &mut Mix, lo: usize, hi: usize, w: f64) {
    let c = &ctx.constants;
    let bs = &state.bubbles;
    let eps12 = state.eps12().unwrap_or(0.0);
    let zero = mix.empty();
    let e = above(eps12 * bs[hi].lambda.powi(2) / c.c1, 1.0);
    let tau: Vec<f64> = bs
        .iter()
        .map(|b| above(norm(&ctx.k.grad(&b.a)) * b.lambda / c.c2, 1.0))
        .collect();
    let r = above(bs[hi].lambda / (10.0 * bs[lo].lambda), 1.0);
    let q = r * (1.0 - tau[lo]);
    let mut g = zero.clone();
    for i in 0..2 {
        climb(ctx, &mut g[i], &bs[i], tau[i]);
    }
    let mut w1 = g.clone();
    w1[hi].log_lambda -= c.big_m;
    let mut w2 = w1.clone();
    w2[lo].log_lambda += c.big_m.sqrt() * ctx.lambda_sign(&bs[lo].a);
    settle(ctx, &mut w2[lo], &bs[lo]);
    mix.add("W1", w * e * (1.0 - q), &w1);
    mix.add("W2", w * e * q, &w2);

    let t_any = 1.0 - (1.0 - tau[0]) * (1.0 - tau[1]);
    let mut w3b = zero.clone();
    climb(ctx, &mut w3b[hi], &bs[hi], 1.0);
    w3b[lo].log_lambda += ctx.lambda_sign(&bs[lo].a);
    settle(ctx, &mut w3b[lo], &bs[lo]);
    mix.add("W3'", w * (1.0 - e) * t_any * (1.0 - q), &g);
    mix.add("W3''", w * (1.0 - e) * t_any * q, &w3b);

    let w4 = w * (1.0 - e) * (1.0 - t_any);
    if w4 > 0.0 {
        let (ylo, yhi) = (ctx.nearest(&bs[lo].a), ctx.nearest(&bs[hi].a));
        let mut f = zero.clone();
        settle(ctx, &mut f[lo], &bs[lo]);
        settle(ctx, &mut f[hi], &bs[hi]);
        if ylo == yhi {
            f[lo].log_lambda += ctx.lambda_sign(&bs[lo].a);
            mix.add("W4'", w4, &f);
        } else {
            let (s_lo, s_hi) = (ctx.lambda_sign(&bs[lo].a), ctx.lambda_sign(&bs[hi].a));
            if s_lo < 0.0 {
                f[lo].log_lambda -= 1.0;
            } else if s_hi < 0.0 {
                f[hi].log_lambda -= 1.0 - r;
                f[lo].log_lambda += r;
            } else {
                f[lo].log_lambda += 1.0;
                f[hi].log_lambda += 1.0;
            }
            mix.add("W4''", w4, &f);
        }
    }
}

/// Both centers within `2d₀` of the boundary.
fn both_boundary(
    ctx: &FlowContext,
    state: &FlowState,
    mix: &mut Mix,
    lo: usize,
    hi: usize,
    w: f64,
) {
    let c = &ctx.constants;
    let bs = &state.bubbles;
    let nf = ctx.k.dim as f64;
    let d = state.distances();
    let eps12 = state.eps12().unwrap_or(0.0);
    let zero = mix.empty();
    let mut w7 = zero.clone();
    for i in 0..2 {
        inward(&mut w7[i], &bs[i], 1.0);
    }
    let k1 = above(d[0].max(d[1]) / d[0].min(d[1]) / c.m1, 1.0);
    mix.add("W7", w * k1, &w7);

    let k3 = above(bs[hi].lambda / bs[lo].lambda / c.m2, 1.0);
    let amax = state.alphas.iter().fold(0.0f64, |m, a| m.max(*a));
    let mut w8 = zero.clone();
    for i in 0..2 {
        inward(
            &mut w8[i],
            &bs[i],
            state.alphas[i] / amax * bs[i].lambda / bs[hi].lambda,
        );
    }
    // W9 joins when ε₁₂ exceeds m/(λ_i d_i)^{n−4} for both bubbles.
    let z: f64 = (0..2)
        .map(|i| above(eps12 * (bs[i].lambda * d[i]).powf(nf - 4.0) / c.m, 1.0))
        .product();
    let mut w89 = w8.clone();
    for v in w89.iter_mut() {
        v.log_lambda -= 1.0;
    }
    mix.add("W8", w * (1.0 - k1) * (1.0 - k3) * (1.0 - z), &w8);
    mix.add("W8+W9", w * (1.0 - k1) * (1.0 - k3) * z, &w89);
    let mut w10 = w7.clone();
    w10[hi].log_lambda -= 2.0 * c.m;
    w10[lo].log_lambda += c.m;
    mix.add("W10", w * (1.0 - k1) * k3, &w10);
}

/// The two-bubble pseudogradient.
///
/// Interior pairs (both `d_i ≥ d₀`) use the four subsets driven by `ε₁₂`
/// against `C₁/λ₂²` with `λ₁ ≤ λ₂`. A single bubble near the boundary moves
/// inward, adding the single-bubble field of the other when that one is much
/// flatter. Two boundary bubbles follow the three boundary cases.
pub fn y2_field(state: &FlowState, ctx: &FlowContext) -> Result<FieldEval> {
    check(state, ctx, 2)?;
    let n = ctx.k.dim;
    let c = &ctx.constants;
    let bs = &state.bubbles;
    let d: Vec<f64> = state.distances();
    let mut mix = Mix::new(2, n);
    let zero = mix.empty();

    let b_near: Vec<f64> = d.iter().map(|x| 1.0 - above(*x, c.d0)).collect();
    let c_near: Vec<f64> = d.iter().map(|x| 1.0 - above(*x, 2.0 * c.d0)).collect();
    let w_a1 = (1.0 - b_near[0]) * (1.0 - b_near[1]);
    let w_a2 = [b_near[0] * (1.0 - c_near[1]), b_near[1] * (1.0 - c_near[0])];
    let w_a3 = (1.0 - w_a1 - w_a2[0] - w_a2[1]).max(0.0);

    // The cases assume λ_lo ≤ λ_hi; both labellings are blended across
    // λ₀ ≈ λ₁ so the field stays continuous.
    let sigma = ramp(
        (bs[1].lambda / bs[0].lambda).ln(),
        -(1.1f64).ln(),
        (1.1f64).ln(),
    );
    for (lo, hi, w) in [(0, 1, sigma), (1, 0, 1.0 - sigma)] {
        if w_a1 * w > 0.0 {
            interior(ctx, state, &mut mix, lo, hi, w_a1 * w);
        }
        if w_a3 * w > 0.0 {
            both_boundary(ctx, state, &mut mix, lo, hi, w_a3 * w);
        }
    }

    // One bubble near the boundary, the other well inside.
    for i in 0..2 {
        if w_a2[i] <= 0.0 {
            continue;
        }
        let j = 1 - i;
        let mut w5 = zero.clone();
        inward(&mut w5[i], &bs[i], 1.0);
        let rho = above(bs[i].lambda / (10.0 * bs[j].lambda), 1.0);
        mix.add("W5", w_a2[i] * (1.0 - rho), &w5);
        if rho > 0.0 {
            y1_into(ctx, &mut mix, j, &bs[j], w_a2[i] * rho, &w5, "W6/");
        }
    }

    Ok(mix.finish())
}
