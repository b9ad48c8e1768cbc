//! Browser bindings for the warning-mechanism toolkit.
//!
//! Three interactive operations, all returning JSON strings so the page
//! needs no generated TypeScript types:
//!
//! * [`mechanism_curves`] — warning level and drift over the proportion
//!   axis, with classified equilibria and QoS/i-QoS;
//! * [`adversary_sweep`] — analytic QoS and i-QoS of all four mechanisms
//!   over an adversary-fraction grid;
//! * [`simulate_path`] — one live sample path of the read chain against
//!   the predicted limit.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fpwm_core::bp_sim::{run_path, PathOptions};
use fpwm_core::design::{self, ThresholdMode};
use fpwm_core::model::{PostType, SystemConfig};
use fpwm_core::presets::ConfigFamily;
use fpwm_core::warning::{analyze, warning_value, Mechanism, WarningSpec};
use fpwm_core::Error;

fn family(name: &str) -> Result<ConfigFamily, Error> {
    match name {
        "smart_all" => Ok(ConfigFamily::SmartAllParticipating),
        "smart" => Ok(ConfigFamily::Smart),
        "naive" => Ok(ConfigFamily::Naive),
        other => Err(Error::Parse(format!("unknown family `{other}`"))),
    }
}

fn mechanism(name: &str) -> Result<Mechanism, Error> {
    name.parse()
}

fn post(name: &str) -> Result<PostType, Error> {
    name.parse()
}

fn mode(adjusted: bool) -> ThresholdMode {
    if adjusted {
        ThresholdMode::AdversaryAdjusted
    } else {
        ThresholdMode::Plain
    }
}

fn err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[derive(Serialize)]
struct EquilibriumOut {
    beta: f64,
    kind: &'static str,
}

#[derive(Serialize)]
struct CurvesOut {
    mechanism: &'static str,
    post: &'static str,
    mu_a: f64,
    w: f64,
    b: f64,
    phi: Option<f64>,
    threshold: f64,
    beta: Vec<f64>,
    omega: Vec<f64>,
    g: Vec<f64>,
    equilibria: Vec<EquilibriumOut>,
    beta_lower: f64,
    beta_upper: f64,
    qos: f64,
    iqos: f64,
}

fn curves(
    family_name: &str,
    mua: f64,
    mechanism_name: &str,
    post_name: &str,
    adjusted: bool,
    samples: usize,
) -> Result<CurvesOut, Error> {
    let cfg: SystemConfig = family(family_name)?.config(mua)?;
    let mech = mechanism(mechanism_name)?;
    let post = post(post_name)?;
    let m = mode(adjusted);
    let designed = design::design_for(mech, &cfg, m)?;
    let spec: WarningSpec = designed.spec;
    let analysis = analyze(&spec, &cfg, post)?;
    let n = samples.clamp(16, 4096);
    let beta: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let omega = beta.iter().map(|&x| warning_value(&spec, &cfg, x)).collect();
    let g = beta
        .iter()
        .map(|&x| fpwm_core::warning::g_direct(&spec, &cfg, post, x))
        .collect();
    Ok(CurvesOut {
        mechanism: mech.name(),
        post: post.name(),
        mu_a: mua,
        w: spec.w(),
        b: spec.b(),
        phi: spec.phi(),
        threshold: designed.threshold_used,
        beta,
        omega,
        g,
        equilibria: analysis
            .equilibria
            .iter()
            .map(|e| EquilibriumOut {
                beta: e.beta,
                kind: e.kind.name(),
            })
            .collect(),
        beta_lower: analysis.beta_lower,
        beta_upper: analysis.beta_upper,
        qos: analysis.qos,
        iqos: analysis.iqos,
    })
}

/// Warning and drift curves of a designed mechanism, with equilibria.
#[wasm_bindgen]
pub fn mechanism_curves(
    family: &str,
    mu_a: f64,
    mechanism: &str,
    post: &str,
    adjusted: bool,
    samples: usize,
) -> Result<String, JsValue> {
    to_json(&curves(family, mu_a, mechanism, post, adjusted, samples).map_err(err)?)
}

#[derive(Serialize)]
struct SweepPoint {
    mu_a: f64,
    qos: Option<f64>,
    iqos: Option<f64>,
    real_sup: Option<f64>,
    threshold: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepSeries {
    mechanism: &'static str,
    points: Vec<SweepPoint>,
}

/// Analytic QoS/i-QoS of all four mechanisms over an adversary grid,
/// plus the real-post sup for the safety view.
#[wasm_bindgen]
pub fn adversary_sweep(
    family_name: &str,
    adjusted: bool,
    grid_points: usize,
) -> Result<String, JsValue> {
    let fam = family(family_name).map_err(err)?;
    let cap = fam.mua_cap();
    let n = grid_points.clamp(2, 64);
    let grid: Vec<f64> = (0..n).map(|i| cap * i as f64 / (n - 1) as f64).collect();
    let m = mode(adjusted);
    let mut series = Vec::new();
    for mech in Mechanism::ALL {
        let mut points = Vec::new();
        for &mua in &grid {
            let cfg = match fam.config(mua) {
                Ok(c) => c,
                Err(e) => {
                    points.push(SweepPoint {
                        mu_a: mua,
                        qos: None,
                        iqos: None,
                        real_sup: None,
                        threshold: f64::NAN,
                        error: Some(e.to_string()),
                    });
                    continue;
                }
            };
            let threshold = design::threshold_for(&cfg, m).unwrap_or(f64::NAN);
            match design::design_for(mech, &cfg, m)
                .and_then(|d| Ok((analyze(&d.spec, &cfg, PostType::Fake)?, d)))
                .and_then(|(fake, d)| Ok((fake, analyze(&d.spec, &cfg, PostType::Real)?)))
            {
                Ok((fake, real)) => points.push(SweepPoint {
                    mu_a: mua,
                    qos: Some(fake.qos),
                    iqos: Some(fake.iqos),
                    real_sup: Some(real.safety_sup()),
                    threshold,
                    error: None,
                }),
                Err(e) => points.push(SweepPoint {
                    mu_a: mua,
                    qos: None,
                    iqos: None,
                    real_sup: None,
                    threshold,
                    error: Some(e.to_string()),
                }),
            }
        }
        series.push(SweepSeries {
            mechanism: mech.name(),
            points,
        });
    }
    to_json(&series)
}

#[derive(Serialize)]
struct PathOut {
    epochs: Vec<u64>,
    beta: Vec<f64>,
    psi_c: Vec<f64>,
    extinct_at: Option<u64>,
    theory: Vec<f64>,
    qos: f64,
    iqos: f64,
}

/// One sample path under the designed mechanism, with the analytic limit
/// proportions for comparison.
#[wasm_bindgen]
pub fn simulate_path(
    family_name: &str,
    mu_a: f64,
    mechanism_name: &str,
    post_name: &str,
    adjusted: bool,
    events: u64,
    seed: u64,
) -> Result<String, JsValue> {
    let cfg = family(family_name)
        .and_then(|f| f.config(mu_a))
        .map_err(err)?;
    let mech = mechanism(mechanism_name).map_err(err)?;
    let post = post(post_name).map_err(err)?;
    let designed = design::design_for(mech, &cfg, mode(adjusted)).map_err(err)?;
    let analysis = analyze(&designed.spec, &cfg, post).map_err(err)?;
    let events = events.clamp(100, 200_000);
    let result = run_path(
        &cfg,
        post,
        |beta| warning_value(&designed.spec, &cfg, beta),
        PathOptions::new(events, (events / 800).max(1)),
        seed,
    );
    let out = PathOut {
        epochs: result.trace.iter().map(|p| p.epoch).collect(),
        beta: result.trace.iter().map(|p| p.beta).collect(),
        psi_c: result.trace.iter().map(|p| p.upsilon[0]).collect(),
        extinct_at: result.extinct_at,
        theory: analysis.equilibria.iter().map(|e| e.beta).collect(),
        qos: analysis.qos,
        iqos: analysis.iqos,
    };
    to_json(&out)
}
