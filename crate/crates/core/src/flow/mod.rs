//! Reduced pseudogradient flows on bubble parameters.
//!
//! A state is one or two bubbles `(a_i, λ_i)` with weights slaved to the
//! balance `α_i^{8/(n−4)} K(a_i) = const`. Vector fields are expressed in
//! generator coefficients: bubble `i` moves by
//! `s_i λ_i ∂Pδ_i/∂λ_i + λ_i^{-1} ∂Pδ_i/∂a_i · w_i`, which in parameters is
//! `dλ_i/dt = s_i λ_i`, `da_i/dt = w_i / λ_i`.

mod fields;
mod integrate;
mod normal_form;

pub use crate::morse::CpiRecord;
pub use fields::{y1_field, y2_field, FieldEval};
pub use integrate::{
    default_ode_spec, integrate_flow, FlowEvent, FlowOutcome, FlowSample, FlowTrace, Terminal,
};
pub use normal_form::{
    estimate_intersection_number, f_lambda_initial, fit_c_eta, psi_normal_form, CEtaFit,
    IntersectionEstimate, IntersectionOptions,
};

use crate::bubbles::{eps, Bubble, BubblePair};
use crate::error::{Error, Result};
use crate::morse::{find_critical_points, CriticalPoint, KField};
use crate::scalar::norm;
use serde::{Deserialize, Serialize};

/// Tunable constants of the pseudogradient construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConstants {
    pub d0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    pub m: f64,
    pub epsilon: f64,
    pub lambda_cap: f64,
    pub eta: f64,
    /// Distance to a critical point of K below which a capped state is a CPI.
    pub cpi_tol: f64,
}

impl Default for FlowConstants {
    fn default() -> Self {
        FlowConstants {
            d0: 0.1,
            c1: 10.0,
            c2: 100.0,
            big_m: 100.0,
            m1: 10.0,
            m2: 100.0,
            m: 100.0,
            epsilon: 0.05,
            lambda_cap: 1e3,
            eta: 1e-2,
            cpi_tol: 1e-3,
        }
    }
}

impl FlowConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.d0,
            self.c1,
            self.c2,
            self.big_m,
            self.m1,
            self.m2,
            self.m,
            self.epsilon,
            self.lambda_cap,
            self.eta,
            self.cpi_tol,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "flow constants must be positive and finite".into(),
            ));
        }
        if self.d0 >= 0.5 {
            return Err(Error::InvalidInput(
                "d0 must be below 1/2 on the unit ball".into(),
            ));
        }
        if self.epsilon >= 1.0 {
            return Err(Error::InvalidInput("epsilon must be below 1".into()));
        }
        Ok(())
    }
}

/// Bubble parameters plus slaved weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub bubbles: Vec<Bubble<f64>>,
    pub alphas: Vec<f64>,
    pub time: f64,
}

impl FlowState {
    /// State with weights set by the balance condition.
    pub fn new(bubbles: Vec<Bubble<f64>>, k: &KField) -> Result<Self> {
        if bubbles.is_empty() || bubbles.len() > 2 {
            return Err(Error::InvalidInput(
                "flows handle one or two bubbles".into(),
            ));
        }
        for b in &bubbles {
            b.validate()?;
            if b.dim() != k.dim {
                return Err(Error::InvalidInput("bubble and K dimensions differ".into()));
            }
            if norm(&b.a) >= 1.0 {
                return Err(Error::NearBoundary(1.0 - norm(&b.a)));
            }
        }
        let alphas = slaved_alphas(&bubbles, k)?;
        Ok(FlowState {
            bubbles,
            alphas,
            time: 0.0,
        })
    }

    pub fn p(&self) -> usize {
        self.bubbles.len()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.bubbles.iter().map(|b| 1.0 - norm(&b.a)).collect()
    }

    pub fn eps12(&self) -> Option<f64> {
        (self.p() == 2).then(|| {
            eps(&BubblePair::new(
                self.bubbles[0].clone(),
                self.bubbles[1].clone(),
            ))
        })
    }

    /// Margins of the V(p, ε) conditions in log form; all positive inside.
    /// Balance holds by construction and is not listed.
    pub fn v_margins(&self, epsilon: f64) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        for b in &self.bubbles {
            out.push(("lambda", (b.lambda * epsilon).ln()));
            out.push(("lambda_d", (b.lambda * (1.0 - norm(&b.a)) * epsilon).ln()));
        }
        if let Some(e) = self.eps12() {
            out.push(("eps12", (epsilon / e).ln()));
        }
        out
    }

    pub fn in_v(&self, epsilon: f64) -> bool {
        self.v_margins(epsilon).iter().all(|(_, m)| *m > 0.0)
    }
}

/// `α_i ∝ K(a_i)^{−(n−4)/8}`, scaled so the norm expansion is one.
pub fn slaved_alphas(bubbles: &[Bubble<f64>], k: &KField) -> Result<Vec<f64>> {
    let nf = k.dim as f64;
    let raw: Vec<f64> = bubbles
        .iter()
        .map(|b| {
            let kv = k.value(&b.a);
            if kv > 0.0 {
                Ok(kv.powf(-(nf - 4.0) / 8.0))
            } else {
                Err(Error::InvalidInput(
                    "K must be positive at the bubble centers".into(),
                ))
            }
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&Bubble<f64>> = bubbles.iter().collect();
    crate::energy::normalized_alphas_of(&refs, &raw)
}

/// Everything a flow needs to know about K.
#[derive(Debug, Clone)]
pub struct FlowContext {
    pub k: KField,
    pub constants: FlowConstants,
    /// Nondegenerate critical points of K.
    pub critical: Vec<CriticalPoint>,
}

impl FlowContext {
    pub fn new(k: KField, constants: FlowConstants) -> Result<Self> {
        let search = find_critical_points(&k, 5)?;
        Self::with_critical(k, constants, search.points)
    }

    pub fn with_critical(
        k: KField,
        constants: FlowConstants,
        critical: Vec<CriticalPoint>,
    ) -> Result<Self> {
        constants.validate()?;
        if k.dim < 7 {
            return Err(Error::InvalidInput(format!(
                "flows need n >= 7, got {}",
                k.dim
            )));
        }
        Ok(FlowContext {
            k,
            constants,
            critical,
        })
    }

    /// Index of the nearest critical point of K.
    pub fn nearest(&self, a: &[f64]) -> Option<usize> {
        self.critical
            .iter()
            .enumerate()
            .map(|(i, c)| (i, crate::scalar::dist(a, &c.y)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| i)
    }

    /// `sign(−ΔK(y))` at the critical point nearest to `a`, or at `a` itself
    /// when K has none.
    pub fn lambda_sign(&self, a: &[f64]) -> f64 {
        let lap = match self.nearest(a) {
            Some(i) => self.critical[i].laplacian_k,
            None => self.k.laplacian(a),
        };
        if lap < 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Generator coefficients of one bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleVelocity {
    /// `s` in `s λ ∂Pδ/∂λ`.
    pub log_lambda: f64,
    /// `w` in `λ^{-1} ∂Pδ/∂a · w`.
    pub a: Vec<f64>,
}

impl BubbleVelocity {
    pub fn zero(n: usize) -> Self {
        BubbleVelocity {
            log_lambda: 0.0,
            a: vec![0.0; n],
        }
    }

    fn add_scaled(&mut self, w: f64, o: &BubbleVelocity) {
        self.log_lambda += w * o.log_lambda;
        for (x, y) in self.a.iter_mut().zip(&o.a) {
            *x += w * y;
        }
    }
}

/// The bound `Σλ_i^{-2} + Σ|∇K(a_i)|/λ_i + Σ(λ_i d_i)^{−(n−3)}` plus
/// `ε₁₂^{(n−3)/(n−4)}` for two bubbles.
pub fn lower_bound_expression(state: &FlowState, k: &KField) -> f64 {
    let nf = k.dim as f64;
    let mut v = 0.0;
    for b in &state.bubbles {
        let d = 1.0 - norm(&b.a);
        v += b.lambda.powi(-2) + norm(&k.grad(&b.a)) / b.lambda + (b.lambda * d).powf(-(nf - 3.0));
    }
    if let Some(e) = state.eps12() {
        v += e.powf((nf - 3.0) / (nf - 4.0));
    }
    v
}

/// `(−∂J(u), Y)₂` by central differences of the quadrature energy along the
/// parameter motion generated by `vel`, with Richardson extrapolation.
pub fn pairing_fd(
    state: &FlowState,
    vel: &[BubbleVelocity],
    k: &KField,
    spec: &crate::numerics::QuadratureSpec,
) -> Result<f64> {
    use crate::energy::{config_norm_sq, j_quadrature};
    use crate::projection::{Configuration, Mode};
    let cfg = Configuration::new(state.bubbles.clone(), state.alphas.clone(), Mode::Exact)?;
    let unorm = config_norm_sq(&cfg, spec)?.sqrt();
    // Bubble i contributes α_i times its generator; undo that with ᾱ_i.
    let moved = |t: f64| -> Result<f64> {
        let bs: Vec<Bubble<f64>> = state
            .bubbles
            .iter()
            .zip(vel)
            .zip(&state.alphas)
            .map(|((b, v), al)| {
                let c = t * unorm / al;
                let lambda = b.lambda * (c * v.log_lambda).exp();
                let a =
                    b.a.iter()
                        .zip(&v.a)
                        .map(|(x, w)| x + c * w / b.lambda)
                        .collect();
                Bubble::new(a, lambda)
            })
            .collect();
        j_quadrature(
            &Configuration::new(bs, state.alphas.clone(), Mode::Exact)?,
            k,
            spec,
        )
    };
    // Largest parameter move at t = h is 0.02 in generator units.
    let speed = vel
        .iter()
        .zip(&state.alphas)
        .map(|(v, al)| unorm / al * (v.log_lambda.abs() + norm(&v.a)))
        .fold(0.0, f64::max);
    if speed == 0.0 {
        return Ok(0.0);
    }
    let h = 0.02 / speed;
    let d = |s: f64| -> Result<f64> { Ok((moved(s)? - moved(-s)?) / (2.0 * s)) };
    let (d1, d2) = (d(h)?, d(0.5 * h)?);
    Ok(-(4.0 * d2 - d1) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morse::field::single_bump;
    use crate::scalar::on_axis;

    #[test]
    fn slaved_weights_balance() {
        let k = crate::morse::field::two_bump(7).unwrap();
        let s = FlowState::new(
            vec![
                Bubble::new(on_axis(7, 0.3), 50.0),
                Bubble::new(on_axis(7, -0.3), 60.0),
            ],
            &k,
        )
        .unwrap();
        let r: Vec<f64> = s
            .bubbles
            .iter()
            .zip(&s.alphas)
            .map(|(b, a)| a.powf(8.0 / 3.0) * k.value(&b.a))
            .collect();
        assert!((r[0] / r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn v_membership() {
        let k = single_bump(7).unwrap();
        let s = FlowState::new(vec![Bubble::new(on_axis(7, 0.5), 50.0)], &k).unwrap();
        assert!(s.in_v(0.05));
        assert!(!s.in_v(0.01));
    }

    #[test]
    fn constants_validate() {
        assert!(FlowConstants::default().validate().is_ok());
        let c = FlowConstants {
            m: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn flows_need_dimension_seven() {
        let k = single_bump(6).unwrap();
        assert!(FlowContext::with_critical(k, FlowConstants::default(), vec![]).is_err());
    }
}
