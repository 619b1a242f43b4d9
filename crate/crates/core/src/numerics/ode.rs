//! Dormand–Prince 5(4) integrator with event location.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSpec {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub t_max: f64,
}

impl Default for OdeSpec {
    fn default() -> Self {
        OdeSpec {
            rtol: 1e-8,
            atol: 1e-10,
            h0: 1e-3,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 200_000,
            t_max: 1e6,
        }
    }
}

/// `g(t, y)` of an event.
pub type EventFn<'a> = Box<dyn Fn(f64, &[f64]) -> f64 + 'a>;

/// Scalar event function. Fires when `g` moves from positive to `<= 0`.
pub struct Event<'a> {
    pub name: String,
    pub g: EventFn<'a>,
}

impl<'a> Event<'a> {
    pub fn new(name: impl Into<String>, g: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Event {
            name: name.into(),
            g: Box::new(g),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stop {
    Event(String),
    TimeLimit,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOutcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub stop: Stop,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between fifth and fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, th: f64, out: &mut [f64]) {
    let t2 = th * th;
    let t3 = t2 * th;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + th;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
}

/// Integrate `y' = f(t, y)` from `t0` until an event fires, `t_max` is
/// reached, or the step budget runs out. `observer` sees every accepted step.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    spec: &OdeSpec,
    events: &[Event<'_>],
    mut observer: O,
) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]),
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut h = spec.h0.min(spec.h_max);
    f(t, &y, &mut k[0])?;
    let mut gprev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    if let Some(i) = gprev.iter().position(|g| *g <= 0.0) {
        return Ok(OdeOutcome {
            t,
            y,
            steps: 0,
            stop: Stop::Event(events[i].name.clone()),
        });
    }
    observer(t, &y);
    let mut steps = 0;
    while steps < spec.max_steps {
        if t >= spec.t_max {
            return Ok(OdeOutcome {
                t,
                y,
                steps,
                stop: Stop::TimeLimit,
            });
        }
        h = h.min(spec.t_max - t);
        // A stage that leaves the field's domain rejects the step.
        let mut stage_err = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                ytmp[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if let Err(e) = f(t + C[s] * h, &ytmp, &mut tail[0]) {
                stage_err = Some(e);
                break;
            }
        }
        if let Some(e) = stage_err {
            h *= 0.25;
            if h < spec.h_min {
                return Err(e);
            }
            continue;
        }
        // Stage 7 was evaluated at the fifth-order solution.
        ynew.copy_from_slice(&ytmp);
        let mut err = 0.0f64;
        for i in 0..n {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            let sc = spec.atol + spec.rtol * y[i].abs().max(ynew[i].abs());
            err = err.max((h * e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            if h < spec.h_min {
                return Err(Error::StepUnderflow { t, steps });
            }
            continue;
        }
        if err <= 1.0 {
            steps += 1;
            let gnew: Vec<f64> = events.iter().map(|e| (e.g)(t + h, &ynew)).collect();
            if let Some(idx) = gnew.iter().position(|g| *g <= 0.0) {
                // Bisection on the Hermite interpolant for the earliest crossing.
                let mut best: Option<(f64, usize)> = None;
                for (i, g1) in gnew.iter().enumerate() {
                    if *g1 > 0.0 || gprev[i] <= 0.0 {
                        continue;
                    }
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        hermite(&y, &k[0], &ynew, &k[6], h, mid, &mut ytmp);
                        if (events[i].g)(t + mid * h, &ytmp) <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    if best.is_none_or(|(b, _)| hi < b) {
                        best = Some((hi, i));
                    }
                }
                let (th, i) = best.unwrap_or((1.0, idx));
                hermite(&y, &k[0], &ynew, &k[6], h, th, &mut ytmp);
                let te = t + th * h;
                observer(te, &ytmp);
                return Ok(OdeOutcome {
                    t: te,
                    y: ytmp,
                    steps,
                    stop: Stop::Event(events[i].name.clone()),
                });
            }
            gprev = gnew;
            t += h;
            y.copy_from_slice(&ynew);
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
            observer(t, &y);
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(spec.h_max);
        if h < spec.h_min {
            return Err(Error::StepUnderflow { t, steps });
        }
    }
    Ok(OdeOutcome {
        t,
        y,
        steps,
        stop: Stop::StepLimit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let spec = OdeSpec {
            t_max: 2.0,
            ..Default::default()
        };
        let out = integrate(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &spec,
            &[],
            |_, _| {},
        )
        .unwrap();
        assert_eq!(out.stop, Stop::TimeLimit);
        assert!((out.y[0] - (-2.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let spec = OdeSpec {
            t_max: 20.0,
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let out = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0, 0.0],
            &spec,
            &[],
            |_, _| {},
        )
        .unwrap();
        assert!((out.y[0] - 20f64.cos()).abs() < 1e-7);
    }

    #[test]
    fn event_location() {
        // y = e^t crosses 3 at ln 3.
        let ev = [Event::new("reach", |_, y: &[f64]| 3.0 - y[0])];
        let out = integrate(
            |_, y, dy| {
                dy[0] = y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &OdeSpec::default(),
            &ev,
            |_, _| {},
        )
        .unwrap();
        assert_eq!(out.stop, Stop::Event("reach".into()));
        assert!((out.t - 3f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn blowup_underflows() {
        let spec = OdeSpec {
            t_max: 10.0,
            ..Default::default()
        };
        let r = integrate(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            &spec,
            &[],
            |_, _| {},
        );
        assert!(matches!(r, Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn domain_errors_shrink_the_step() {
        // y' = 1 on y < 1; a large first step lands outside and must be retried.
        let spec = OdeSpec {
            t_max: 10.0,
            h0: 5.0,
            ..Default::default()
        };
        let out = integrate(
            |_, y, dy| {
                if y[0] >= 1.0 {
                    return Err(Error::InvalidInput("outside".into()));
                }
                dy[0] = 1.0;
                Ok(())
            },
            0.0,
            &[0.0],
            &spec,
            &[Event::new("edge", |_, y: &[f64]| 0.9 - y[0])],
            |_, _| {},
        )
        .unwrap();
        assert_eq!(out.stop, Stop::Event("edge".into()));
        assert!((out.t - 0.9).abs() < 1e-9);
    }
}
