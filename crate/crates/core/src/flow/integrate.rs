//! Integration of the pseudogradient flows with event detection and
//! terminal classification.

use super::fields::{y1_field, y2_field, FieldEval};
use super::{FlowContext, FlowState};
use crate::bubbles::Bubble;
use crate::energy::j_expansion_of;
use crate::error::{Error, Result};
use crate::morse::{pair_level, single_level, CpiRecord};
use crate::numerics::ode::{self, Event, OdeSpec, Stop};
use crate::scalar::{dist, norm};
use serde::{Deserialize, Serialize};

/// One accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub a: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Energy from the expansion.
    pub j: f64,
    pub regime: String,
    pub d: Vec<f64>,
    pub eps12: Option<f64>,
    /// Nearest nondegenerate critical point of K for each bubble.
    pub nearest: Vec<Option<usize>>,
}

impl FlowSample {
    pub fn state(&self) -> FlowState {
        FlowState {
            bubbles: self
                .a
                .iter()
                .zip(&self.lambda)
                .map(|(a, l)| Bubble::new(a.clone(), *l))
                .collect(),
            alphas: self.alphas.clone(),
            time: self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub t: f64,
    /// `regime`, `exit`, `lambda_cap`, `cpi`, `budget`.
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Cpi { record: CpiRecord },
    ExitV { condition: String },
    Budget { reason: String },
}

impl Terminal {
    pub fn label(&self) -> &'static str {
        match self {
            Terminal::Cpi { .. } => "cpi",
            Terminal::ExitV { .. } => "exit",
            Terminal::Budget { .. } => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub samples: Vec<FlowSample>,
    pub events: Vec<FlowEvent>,
    /// Accepted steps whose energy rose by more than 1e−8 relative.
    pub energy_violations: usize,
    /// Largest relative energy increase over one accepted step.
    pub max_energy_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub trace: FlowTrace,
    pub terminal: Terminal,
    pub final_state: FlowState,
    pub steps: usize,
}

/// Relative per-step tolerance for the energy history.
pub const ENERGY_TOL: f64 = 1e-8;

fn unpack(y: &[f64], n: usize) -> Vec<Bubble<f64>> {
    y.chunks(n + 1)
        .map(|c| Bubble::new(c[1..].to_vec(), c[0].exp()))
        .collect()
}

fn pack(bs: &[Bubble<f64>]) -> Vec<f64> {
    bs.iter()
        .flat_map(|b| std::iter::once(b.lambda.ln()).chain(b.a.iter().copied()))
        .collect()
}

fn field(state: &FlowState, ctx: &FlowContext) -> Result<FieldEval> {
    if state.p() == 1 {
        y1_field(state, ctx)
    } else {
        y2_field(state, ctx)
    }
}

fn state_at(y: &[f64], t: f64, ctx: &FlowContext) -> Result<FlowState> {
    let mut s = FlowState::new(unpack(y, ctx.k.dim), &ctx.k)?;
    s.time = t;
    Ok(s)
}

/// CPI record for a capped state, if every center sits on a distinct
/// qualifying critical point.
fn classify_capped(state: &FlowState, ctx: &FlowContext) -> Option<CpiRecord> {
    let n = ctx.k.dim;
    let mut idx = Vec::new();
    for b in &state.bubbles {
        let i = ctx.nearest(&b.a)?;
        let cp = &ctx.critical[i];
        if dist(&b.a, &cp.y) >= ctx.constants.cpi_tol || !(cp.laplacian_k < 0.0) {
            return None;
        }
        idx.push(i);
    }
    let cps: Vec<_> = idx.iter().map(|&i| &ctx.critical[i]).collect();
    match cps.as_slice() {
        [a] => Some(CpiRecord {
            points: vec![a.y.clone()],
            k_values: vec![a.k_value],
            level: single_level(n, a.k_value),
            morse_index_at_infinity: n as i64 - a.morse_index as i64,
        }),
        [a, b] if idx[0] != idx[1] => Some(CpiRecord {
            points: vec![a.y.clone(), b.y.clone()],
            k_values: vec![a.k_value, b.k_value],
            level: pair_level(n, a.k_value, b.k_value),
            morse_index_at_infinity: 2 * n as i64 - (a.morse_index + b.morse_index) as i64 + 1,
        }),
        _ => None,
    }
}

/// Integrates the one- or two-bubble field from `init` until the state caps
/// at `λ_min = λ_cap`, leaves V(p, ε), or the ODE budget runs out.
pub fn integrate_flow(init: &FlowState, ctx: &FlowContext, spec: &OdeSpec) -> Result<FlowOutcome> {
    let n = ctx.k.dim;
    let c = &ctx.constants;
    let start = FlowState::new(init.bubbles.clone(), &ctx.k)?;
    if !start.in_v(c.epsilon) {
        return Err(Error::InvalidInput(format!(
            "initial state is outside V({}, {}): {:?}",
            start.p(),
            c.epsilon,
            start.v_margins(c.epsilon)
        )));
    }
    let y0 = pack(&start.bubbles);
    let t0 = init.time;
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let s = state_at(y, t, ctx)?;
        let f = field(&s, ctx)?;
        for (i, (b, v)) in s.bubbles.iter().zip(&f.velocity).enumerate() {
            let o = &mut out[i * (n + 1)..(i + 1) * (n + 1)];
            o[0] = v.log_lambda;
            for (x, w) in o[1..].iter_mut().zip(&v.a) {
                *x = w / b.lambda;
            }
        }
        Ok(())
    };
    let cap = c.lambda_cap.ln();
    let eps = c.epsilon;
    let events = [
        Event::new("lambda_cap", move |_, y: &[f64]| {
            cap - y
                .chunks(n + 1)
                .map(|ch| ch[0])
                .fold(f64::INFINITY, f64::min)
        }),
        Event::new("exit", move |_, y: &[f64]| {
            let bs = unpack(y, n);
            if bs.iter().any(|b| norm(&b.a) >= 1.0) {
                return -1.0;
            }
            let s = FlowState {
                bubbles: bs,
                alphas: vec![],
                time: 0.0,
            };
            s.v_margins(eps)
                .iter()
                .map(|m| m.1)
                .fold(f64::INFINITY, f64::min)
        }),
    ];

    let mut samples: Vec<FlowSample> = Vec::new();
    let mut log: Vec<FlowEvent> = Vec::new();
    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut fail: Option<Error> = None;
    let observer = |t: f64, y: &[f64]| {
        let sample = (|| -> Result<FlowSample> {
            let s = state_at(y, t, ctx)?;
            let refs: Vec<&Bubble<f64>> = s.bubbles.iter().collect();
            let j = j_expansion_of(&refs, &s.alphas, &ctx.k)?.j_expansion;
            let f = field(&s, ctx)?;
            Ok(FlowSample {
                t,
                a: s.bubbles.iter().map(|b| b.a.clone()).collect(),
                lambda: s.bubbles.iter().map(|b| b.lambda).collect(),
                alphas: s.alphas.clone(),
                j,
                regime: f.regime().to_string(),
                d: s.distances(),
                eps12: s.eps12(),
                nearest: s.bubbles.iter().map(|b| ctx.nearest(&b.a)).collect(),
            })
        })();
        match sample {
            Ok(smp) => {
                if let Some(prev) = samples.last() {
                    let rise = (smp.j - prev.j) / prev.j.abs();
                    worst = worst.max(rise);
                    if rise > ENERGY_TOL {
                        violations += 1;
                    }
                    if prev.regime != smp.regime {
                        log.push(FlowEvent {
                            t,
                            kind: "regime".into(),
                            detail: format!("{} -> {}", prev.regime, smp.regime),
                        });
                    }
                } else {
                    log.push(FlowEvent {
                        t,
                        kind: "regime".into(),
                        detail: smp.regime.clone(),
                    });
                }
                samples.push(smp);
            }
            Err(e) => {
                fail.get_or_insert(e);
            }
        }
    };
    let out = ode::integrate(rhs, t0, &y0, spec, &events, observer);
    if let Some(e) = fail {
        return Err(e);
    }
    let (terminal, y_end, t_end, steps) = match out {
        Ok(o) => {
            let term = match &o.stop {
                Stop::Event(name) if name == "lambda_cap" => {
                    let s = state_at(&o.y, o.t, ctx)?;
                    log.push(FlowEvent {
                        t: o.t,
                        kind: "lambda_cap".into(),
                        detail: String::new(),
                    });
                    match classify_capped(&s, ctx) {
                        Some(record) => Terminal::Cpi { record },
                        None => Terminal::Budget {
                            reason: "lambda cap reached away from qualifying critical points"
                                .into(),
                        },
                    }
                }
                Stop::Event(_) => {
                    let bs = unpack(&o.y, n);
                    let s = FlowState {
                        bubbles: bs,
                        alphas: vec![],
                        time: o.t,
                    };
                    let cond = s
                        .v_margins(eps)
                        .into_iter()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|m| m.0.to_string())
                        .unwrap_or_default();
                    Terminal::ExitV { condition: cond }
                }
                Stop::TimeLimit => Terminal::Budget {
                    reason: "time limit".into(),
                },
                Stop::StepLimit => Terminal::Budget {
                    reason: "step limit".into(),
                },
            };
            (term, o.y, o.t, o.steps)
        }
        Err(Error::StepUnderflow { t, steps }) => {
            let last = samples
                .last()
                .map(|s| pack(&s.state().bubbles))
                .unwrap_or(y0.clone());
            (
                Terminal::Budget {
                    reason: format!("persistent step rejection at t = {t}"),
                },
                last,
                t,
                steps,
            )
        }
        Err(e) => return Err(e),
    };
    log.push(FlowEvent {
        t: t_end,
        kind: terminal.label().into(),
        detail: match &terminal {
            Terminal::Cpi { record } => format!("level {}", record.level),
            Terminal::ExitV { condition } => condition.clone(),
            Terminal::Budget { reason } => reason.clone(),
        },
    });
    let final_state = match state_at(&y_end, t_end, ctx) {
        Ok(s) => s,
        Err(_) => samples.last().map(|s| s.state()).unwrap_or(start),
    };
    Ok(FlowOutcome {
        trace: FlowTrace {
            samples,
            events: log,
            energy_violations: violations,
            max_energy_increase: worst,
        },
        terminal,
        final_state,
        steps,
    })
}

/// Default integration budget for flows.
pub fn default_ode_spec() -> OdeSpec {
    OdeSpec {
        rtol: 1e-9,
        atol: 1e-12,
        h0: 1e-4,
        h_min: 1e-13,
        h_max: 1.0,
        max_steps: 200_000,
        t_max: 5000.0,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{FlowConstants, FlowContext, FlowState};
    use super::*;
    use crate::morse::field::{single_bump, two_bump};
    use crate::scalar::on_axis;

    #[test]
    fn single_bump_reaches_maximum() {
        let ctx = FlowContext::new(single_bump(7).unwrap(), FlowConstants::default()).unwrap();
        let init = FlowState::new(vec![Bubble::new(on_axis(7, 0.05), 30.0)], &ctx.k).unwrap();
        let out = integrate_flow(&init, &ctx, &default_ode_spec()).unwrap();
        let Terminal::Cpi { record } = &out.terminal else {
            panic!("{:?}", out.terminal)
        };
        assert_eq!(record.morse_index_at_infinity, 0);
        assert_eq!(
            out.trace.energy_violations, 0,
            "{}",
            out.trace.max_energy_increase
        );
        assert!(norm(&out.final_state.bubbles[0].a) < 1e-3);
    }

    #[test]
    fn positive_laplacian_exits() {
        let ctx = FlowContext::new(two_bump(7).unwrap(), FlowConstants::default()).unwrap();
        let saddle = ctx
            .critical
            .iter()
            .find(|p| p.laplacian_k > 0.0)
            .unwrap()
            .y
            .clone();
        let init = FlowState::new(vec![Bubble::new(saddle, 40.0)], &ctx.k).unwrap();
        let out = integrate_flow(&init, &ctx, &default_ode_spec()).unwrap();
        assert_eq!(out.terminal.label(), "exit", "{:?}", out.terminal);
    }

    #[test]
    fn outside_v_rejected() {
        let ctx = FlowContext::new(single_bump(7).unwrap(), FlowConstants::default()).unwrap();
        let init = FlowState::new(vec![Bubble::new(on_axis(7, 0.9), 30.0)], &ctx.k).unwrap();
        assert!(integrate_flow(&init, &ctx, &default_ode_spec()).is_err());
    }
}
