//! Subcommand bodies. Each writes its files into the run directory as it
//! goes, so partial outputs survive a failure.

use super::config::ExperimentConfig;
use super::manifest::{InputRecord, RunDir};
use crate::bubbles::{ls_slope, Bubble};
use crate::constants::{c4_estimate, ConstantSet};
use crate::energy::energy_report;
use crate::error::{Error, Result};
use crate::flow::{
    estimate_intersection_number, f_lambda_initial, integrate_flow, FlowContext, FlowOutcome,
    FlowState, IntersectionOptions, Terminal,
};
use crate::green::green_eval;
use crate::morse::assumptions::check_with;
use crate::morse::{catalogued_k, cpi_table, find_critical_points, KField};
use crate::numerics::qmc::sphere_points;
use crate::projection::{decompose, Configuration, Field, GridFunction, Mode, SyntheticField};
use crate::scalar::{dist, norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

pub type Inputs = BTreeMap<String, InputRecord>;

fn num(v: f64) -> String {
    format!("{v}")
}

fn input<'a>(inputs: &'a Inputs, name: &str) -> Result<&'a Value> {
    inputs
        .get(name)
        .map(|r| &r.content)
        .ok_or_else(|| Error::InvalidInput(format!("missing input {name:?}")))
}

fn point(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    if v.len() != n {
        return Err(Error::InvalidInput(format!(
            "{what} needs {n} coordinates, got {}",
            v.len()
        )));
    }
    if !(norm(v) < 1.0) {
        return Err(Error::InvalidInput(format!(
            "{what} must lie inside the unit ball"
        )));
    }
    Ok(v.to_vec())
}

fn field(cfg: &ExperimentConfig) -> Result<KField> {
    catalogued_k(&cfg.k_field, cfg.dim)
}

pub fn constants(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Value> {
    let mut cs = ConstantSet::new(cfg.dim)?;
    out.write_json("constants.json", &cs)?;
    if cfg.estimate_c4 {
        cs.c4_estimate = Some(c4_estimate(cfg.dim, &cfg.quadrature())?);
        out.write_json("constants.json", &cs)?;
    }
    Ok(serde_json::to_value(&cs).expect("serializable"))
}

pub fn green(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Value> {
    let x = point(&cfg.probe_x, cfg.dim, "probe_x")?;
    let y = point(&cfg.probe_y, cfg.dim, "probe_y")?;
    let g = green_eval(&x, &y)?;
    out.write_json("green.json", &g)?;
    Ok(serde_json::to_value(&g).expect("serializable"))
}

#[derive(Debug, Clone, Serialize)]
struct LadderRow {
    lambda: f64,
    j_quad: f64,
    j_exp: f64,
    gap: f64,
    order_estimate: Option<f64>,
}

pub fn verify_expansion(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Value> {
    let n = cfg.dim;
    let k = field(cfg)?;
    let center = if cfg.center.is_empty() {
        vec![0.0; n]
    } else {
        point(&cfg.center, n, "center")?
    };
    if cfg.lambda_ladder.len() < 2 {
        return Err(Error::InvalidInput(
            "the ladder needs at least two rates".into(),
        ));
    }
    let spec = cfg.quadrature();
    let header: Vec<String> = ["lambda", "J_quad", "J_exp", "gap", "order_estimate"]
        .map(String::from)
        .to_vec();
    let mut rows: Vec<LadderRow> = Vec::new();
    let mut failure = None;
    for &l in &cfg.lambda_ladder {
        let r = Configuration::new(vec![Bubble::new(center.clone(), l)], vec![1.0], Mode::Exact)
            .and_then(|c| energy_report(&c, &k, &spec));
        match r {
            Ok(r) => {
                let jq = r.j_quadrature.expect("quadrature ran");
                let gap = (jq - r.j_expansion).abs() / jq;
                let order = rows
                    .last()
                    .map(|p| -(gap / p.gap).ln() / (l / p.lambda).ln());
                rows.push(LadderRow {
                    lambda: l,
                    j_quad: jq,
                    j_exp: r.j_expansion,
                    gap,
                    order_estimate: order,
                });
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        let csv: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    num(r.lambda),
                    num(r.j_quad),
                    num(r.j_exp),
                    num(r.gap),
                    r.order_estimate.map(num).unwrap_or_default(),
                ]
            })
            .collect();
        out.write_csv("ladder.csv", &header, &csv)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.lambda.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.gap.ln()).collect();
    let summary = json!({
        "dim": n,
        "k_field": cfg.k_field,
        "center": center,
        "slope": ls_slope(&xs, &ys),
        "gap_shrinking": rows.windows(2).all(|w| w[1].gap < w[0].gap),
        "rows": rows,
    });
    out.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn context(cfg: &ExperimentConfig) -> Result<FlowContext> {
    let k = field(cfg)?;
    if cfg.dim < 7 {
        return Err(Error::InvalidInput(format!(
            "flows need dim >= 7, got {}",
            cfg.dim
        )));
    }
    let search = find_critical_points(&k, cfg.seeds_per_axis)?;
    FlowContext::with_critical(k, cfg.flow_constants(), search.points)
}

#[derive(Debug, Clone, Deserialize)]
struct FLambdaInit {
    alpha: f64,
    y0: Vec<f64>,
    x: Vec<f64>,
    lambda: f64,
}

/// Initial data: explicit bubbles, or the two-bubble map `f_λ(α, x)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum FlowInit {
    Bubbles { bubbles: Vec<Bubble<f64>> },
    FLambda { f_lambda: FLambdaInit },
}

fn initial_state(v: &Value, ctx: &FlowContext) -> Result<FlowState> {
    let init: FlowInit = serde_json::from_value(v.clone()).map_err(|e| {
        Error::Parse(format!(
            "init: expected {{\"bubbles\": [...]}} or {{\"f_lambda\": {{...}}}}: {e}"
        ))
    })?;
    let n = ctx.k.dim;
    let s = match init {
        FlowInit::Bubbles { bubbles } => {
            if !(1..=2).contains(&bubbles.len()) {
                return Err(Error::InvalidInput("flows take one or two bubbles".into()));
            }
            for b in &bubbles {
                point(&b.a, n, "bubble center")?;
                b.validate()?;
            }
            FlowState::new(bubbles, &ctx.k)?
        }
        FlowInit::FLambda { f_lambda: f } => {
            let y0 = point(&f.y0, n, "y0")?;
            let x = point(&f.x, n, "x")?;
            f_lambda_initial(f.alpha, &y0, &x, f.lambda, &ctx.k)?
        }
    };
    Ok(s)
}

fn trace_csv(o: &FlowOutcome, n: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let p = o.final_state.bubbles.len();
    let mut header = vec!["time".to_string()];
    for i in 1..=p {
        header.extend((1..=n).map(|k| format!("a{i}_{k}")));
        header.push(format!("lambda{i}"));
    }
    header.extend(["J".to_string(), "regime".to_string()]);
    header.extend((1..=p).map(|i| format!("d{i}")));
    header.push("eps12".to_string());
    let rows = o
        .trace
        .samples
        .iter()
        .map(|s| {
            let mut r = vec![num(s.t)];
            for (a, l) in s.a.iter().zip(&s.lambda) {
                r.extend(a.iter().map(|v| num(*v)));
                r.push(num(*l));
            }
            r.push(num(s.j));
            r.push(s.regime.clone());
            r.extend(s.d.iter().map(|v| num(*v)));
            r.push(s.eps12.map(num).unwrap_or_default());
            r
        })
        .collect();
    (header, rows)
}

pub fn flow(cfg: &ExperimentConfig, inputs: &Inputs, out: &mut RunDir) -> Result<Value> {
    let ctx = context(cfg)?;
    let init = initial_state(input(inputs, "init")?, &ctx)?;
    let o = integrate_flow(&init, &ctx, &cfg.ode())?;
    let (header, rows) = trace_csv(&o, cfg.dim);
    out.write_csv("trace.csv", &header, &rows)?;
    let record = json!({
        "terminal": o.terminal,
        "steps": o.steps,
        "final_time": o.final_state.time,
        "final_state": o.final_state,
        "final_j": o.trace.samples.last().map(|s| s.j),
        "energy_violations": o.trace.energy_violations,
        "max_energy_increase": o.trace.max_energy_increase,
        "events": o.trace.events,
    });
    out.write_json("terminal.json", &record)?;
    if let Terminal::Budget { reason } = &o.terminal {
        return Err(Error::NonConvergence(format!(
            "flow budget exhausted: {reason}"
        )));
    }
    Ok(record)
}

/// Seeded sample of points in the ball of radius `r`.
fn sample_points(n: usize, count: usize, r: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sphere_points(n, count, seed)
        .into_iter()
        .map(|u| {
            let rho = r * rng.random::<f64>().powf(1.0 / n as f64);
            u.into_iter().map(|v| rho * v).collect()
        })
        .collect()
}

pub fn flow_batch(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Value> {
    let ctx = context(cfg)?;
    let top = ctx
        .critical
        .iter()
        .max_by(|a, b| a.k_value.total_cmp(&b.k_value))
        .ok_or_else(|| Error::InvalidInput("K has no nondegenerate critical points".into()))?
        .clone();
    let targets: Vec<_> = ctx
        .critical
        .iter()
        .filter(|c| c.laplacian_k < 0.0 && dist(&c.y, &top.y) > 0.0)
        .cloned()
        .collect();
    let mut xs: Vec<Vec<f64>> = targets.iter().map(|t| t.y.clone()).collect();
    xs.extend(
        sample_points(cfg.dim, cfg.batch_points, cfg.batch_radius, cfg.seed)
            .into_iter()
            .filter(|x| dist(x, &top.y) > 1e-3),
    );
    let m = cfg.batch_alphas;
    let alphas: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let opt = IntersectionOptions {
        alphas: alphas.clone(),
        lambda: cfg.batch_lambda,
        ode: cfg.ode(),
        refine: cfg.batch_refine,
    };
    let mut results = Vec::new();
    for t in &targets {
        let est = estimate_intersection_number(&t.y, &xs, &ctx, &opt)?;
        results.push(json!({ "y_i": t.y, "k_value": t.k_value, "morse_index": t.morse_index, "estimate": est }));
        let partial = json!({ "y0": top.y, "alphas": alphas, "points": xs, "targets": results, "complete": false });
        out.write_json("batch.json", &partial)?;
    }
    let summary = json!({ "y0": top.y, "alphas": alphas, "points": xs, "targets": results, "complete": true });
    out.write_json("batch.json", &summary)?;
    Ok(summary)
}

pub fn enumerate_cpi(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Value> {
    let k = field(cfg)?;
    let search = find_critical_points(&k, cfg.seeds_per_axis)?;
    let table = cpi_table(&search.points, cfg.dim)?;
    out.write_json(
        "cpi.json",
        &json!({ "dim": cfg.dim, "k_field": cfg.k_field, "table": table }),
    )?;
    let report = check_with(&k, cfg.dim, &search, &cfg.check_options())?;
    let doc =
        json!({ "dim": cfg.dim, "k_field": cfg.k_field, "table": table, "assumptions": report });
    out.write_json("cpi.json", &doc)?;
    Ok(doc)
}

pub fn check_assumptions(cfg: &ExperimentConfig, out: &mut RunDir) -> Result<Value> {
    let k = field(cfg)?;
    let search = find_critical_points(&k, cfg.seeds_per_axis)?;
    let report = check_with(&k, cfg.dim, &search, &cfg.check_options())?;
    out.write_json("assumptions.json", &report)?;
    Ok(serde_json::to_value(&report).expect("serializable"))
}

#[derive(Debug, Clone, Deserialize)]
struct WeightedBubble {
    alpha: f64,
    a: Vec<f64>,
    lambda: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum DecomposeInput {
    Synthetic { synthetic: Vec<WeightedBubble> },
    Grid(GridFunction),
}

pub fn decompose_cmd(cfg: &ExperimentConfig, inputs: &Inputs, out: &mut RunDir) -> Result<Value> {
    let input: DecomposeInput =
        serde_json::from_value(input(inputs, "field")?.clone()).map_err(|e| {
            Error::Parse(format!(
                "field: expected a grid function or {{\"synthetic\": [{{alpha, a, lambda}}]}}: {e}"
            ))
        })?;
    let opt = cfg.decompose_options();
    let report = match input {
        DecomposeInput::Grid(g) => {
            g.validate()?;
            if g.dim != cfg.dim {
                return Err(Error::InvalidInput(format!(
                    "grid dimension {} but dim = {}",
                    g.dim, cfg.dim
                )));
            }
            decompose(&g, &opt)?
        }
        DecomposeInput::Synthetic { synthetic } => {
            if synthetic.is_empty() {
                return Err(Error::InvalidInput(
                    "synthetic field needs at least one bubble".into(),
                ));
            }
            let mut terms = Vec::new();
            for w in synthetic {
                let b = Bubble::new(point(&w.a, cfg.dim, "bubble center")?, w.lambda);
                b.validate()?;
                terms.push((w.alpha, b));
            }
            let f = SyntheticField::new(terms, &opt.quadrature)?;
            if cfg.decompose_grid_nodes > 0 {
                let g = GridFunction::sample(&f, f.symmetry(), cfg.decompose_grid_nodes)?;
                decompose(&g, &opt)?
            } else {
                decompose(&f, &opt)?
            }
        }
    };
    out.write_json("decompose.json", &report)?;
    Ok(serde_json::to_value(&report).expect("serializable"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_points_seeded_and_inside() {
        let a = sample_points(7, 20, 0.6, 3);
        assert_eq!(a, sample_points(7, 20, 0.6, 3));
        assert_ne!(a, sample_points(7, 20, 0.6, 4));
        assert!(a.iter().all(|p| norm(p) <= 0.6 + 1e-12));
    }

    #[test]
    fn init_formats() {
        let k = catalogued_k("single-bump", 7).unwrap();
        let ctx = FlowContext::with_critical(k, Default::default(), vec![]).unwrap();
        let v = json!({"bubbles": [{"a": [0.1, 0, 0, 0, 0, 0, 0], "lambda": 30.0}]});
        assert_eq!(initial_state(&v, &ctx).unwrap().p(), 1);
        let v = json!({"f_lambda": {"alpha": 0.5, "y0": [0.3, 0, 0, 0, 0, 0, 0], "x": [-0.3, 0, 0, 0, 0, 0, 0], "lambda": 30.0}});
        assert_eq!(initial_state(&v, &ctx).unwrap().p(), 2);
        let v = json!({"bubbles": [{"a": [1.1, 0, 0, 0, 0, 0, 0], "lambda": 30.0}]});
        assert!(matches!(
            initial_state(&v, &ctx),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            initial_state(&json!({"oops": 1}), &ctx),
            Err(Error::Parse(_))
        ));
    }
}
