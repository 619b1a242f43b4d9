//! Trajectory invariants: energy monotonicity, boundary repulsion and the
//! λ-increase audit.

use navier_cpi::flow::{
    default_ode_spec, f_lambda_initial, integrate_flow, FlowConstants, FlowContext, FlowOutcome,
    FlowState, Terminal,
};
use navier_cpi::morse::field::{single_bump, two_bump};
use navier_cpi::scalar::{norm, on_axis};
use navier_cpi::Bubble;
use proptest::prelude::*;
use std::sync::OnceLock;

fn single_ctx() -> &'static FlowContext {
    static C: OnceLock<FlowContext> = OnceLock::new();
    C.get_or_init(|| FlowContext::new(single_bump(7).unwrap(), FlowConstants::default()).unwrap())
}

fn two_ctx() -> &'static FlowContext {
    static C: OnceLock<FlowContext> = OnceLock::new();
    C.get_or_init(|| FlowContext::new(two_bump(7).unwrap(), FlowConstants::default()).unwrap())
}

fn flow(ctx: &FlowContext, s: FlowState) -> FlowOutcome {
    integrate_flow(&s, ctx, &default_ode_spec()).unwrap()
}

fn boundary_ok(o: &FlowOutcome, d0: f64) -> bool {
    o.trace
        .samples
        .windows(2)
        .all(|w| (0..w[0].d.len()).all(|i| w[0].d[i] >= d0 || w[1].d[i] >= w[0].d[i] - 1e-12))
}

/// Every step that raises some λ_i has a_i attached to a critical point with
/// ΔK < 0 at one of its ends. A step may cross from one attraction cell into
/// another, so either end counts.
fn lambda_audit(o: &FlowOutcome, ctx: &FlowContext) -> Result<(), String> {
    for w in o.trace.samples.windows(2) {
        for i in 0..w[0].lambda.len() {
            if w[1].lambda[i] > w[0].lambda[i] * (1.0 + 1e-12) {
                let lap = |k: usize| -> Result<f64, String> {
                    let near = w[k].nearest[i].ok_or("no critical point recorded")?;
                    Ok(ctx.critical[near].laplacian_k)
                };
                if lap(0)? >= 0.0 && lap(1)? >= 0.0 {
                    return Err(format!(
                        "λ{i} grew at t = {} near a point with ΔK = {}",
                        w[0].t,
                        lap(0)?
                    ));
                }
            }
        }
    }
    Ok(())
}

fn direction(theta: f64, r: f64) -> Vec<f64> {
    let mut a = vec![0.0; 7];
    a[0] = r * theta.cos();
    a[1] = r * theta.sin();
    a
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn single_bubble_invariants(theta in 0.0..std::f64::consts::TAU, r in 0.0..0.9f64, lf in 1.0..3.0f64) {
        let ctx = single_ctx();
        let a = direction(theta, r);
        let lambda = lf * 20.0 / (1.0 - norm(&a));
        let o = flow(ctx, FlowState::new(vec![Bubble::new(a, lambda)], &ctx.k).unwrap());
        prop_assert_eq!(o.trace.energy_violations, 0);
        prop_assert!(boundary_ok(&o, ctx.constants.d0));
        prop_assert!(lambda_audit(&o, ctx).is_ok(), "{:?}", lambda_audit(&o, ctx));
    }
}

#[test]
fn two_bubble_invariants() {
    let ctx = two_ctx();
    let m: Vec<Vec<f64>> = ctx
        .critical
        .iter()
        .filter(|p| p.morse_index == 7)
        .map(|p| p.y.clone())
        .collect();
    for (dx, lambda) in [(0.01, 30.0), (0.1, 40.0), (0.15, 40.0)] {
        let x0: Vec<f64> = m[0].iter().map(|v| v * (1.0 - dx / norm(&m[0]))).collect();
        let x1: Vec<f64> = m[1].iter().map(|v| v * (1.0 - dx / norm(&m[1]))).collect();
        let o = flow(
            ctx,
            f_lambda_initial(0.5, &x0, &x1, lambda, &ctx.k).unwrap(),
        );
        assert_eq!(o.trace.energy_violations, 0, "dx = {dx}");
        assert!(boundary_ok(&o, ctx.constants.d0));
        lambda_audit(&o, ctx).unwrap();
    }
}

#[test]
fn saddle_start_deflates() {
    // The two-bump saddle has ΔK ≈ 0.59 > 0, so λ falls there. The Robin term
    // outweighs the ΔK term for λ below about 210, so ε must keep V above that.
    let constants = FlowConstants {
        epsilon: 0.004,
        ..FlowConstants::default()
    };
    let ctx =
        FlowContext::with_critical(two_bump(7).unwrap(), constants, two_ctx().critical.clone())
            .unwrap();
    let saddle = ctx.critical.iter().find(|p| p.morse_index == 6).unwrap();
    let mut a = saddle.y.clone();
    a[1] += 0.01;
    let o = flow(
        &ctx,
        FlowState::new(vec![Bubble::new(a, 400.0)], &ctx.k).unwrap(),
    );
    lambda_audit(&o, &ctx).unwrap();
    assert_eq!(
        o.trace.energy_violations, 0,
        "{}",
        o.trace.max_energy_increase
    );
    assert!(
        matches!(o.terminal, Terminal::ExitV { .. }),
        "{:?}",
        o.terminal
    );
    let l = &o.trace.samples;
    assert!(l.last().unwrap().lambda[0] < l[0].lambda[0]);
}

#[test]
fn boundary_start_moves_inward() {
    let ctx = single_ctx();
    let o = flow(
        ctx,
        FlowState::new(vec![Bubble::new(on_axis(7, -0.97), 900.0)], &ctx.k).unwrap(),
    );
    assert!(o.trace.samples[0].d[0] < ctx.constants.d0);
    assert!(boundary_ok(&o, ctx.constants.d0));
    assert!(o.trace.samples.last().unwrap().d[0] > ctx.constants.d0);
}
