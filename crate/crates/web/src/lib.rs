use wasm_bindgen::prelude::*;

use spindiff::crystal::StructureKind;
use spindiff::particle::{
    rate_model, simulate_buildup, simulate_decay, InitialCondition, ParticleGeometry, Relaxation, SECONDS_PER_HOUR,
};
use spindiff::scaling::{predict_zq_width, reference_fit, ScalingQuantity};

fn js(e: spindiff::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn structure(name: &str) -> Result<StructureKind, JsError> {
    name.parse().map_err(js)
}

/// Particle trace sampled every `step_h` hours. Returns `[t_h..., signal...]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn particle_trace(
    buildup: bool,
    radius: f64,
    shell: f64,
    d: f64,
    t1_in: f64,
    t1_out: f64,
    hours: f64,
    step_h: f64,
) -> Result<Vec<f64>, JsError> {
    if !(step_h > 0.0 && hours >= step_h) {
        return Err(JsError::new("need 0 < step ≤ duration"));
    }
    let g = ParticleGeometry::new(radius, shell, 400).map_err(js)?;
    let m = Relaxation { d, t1_in, t1_out };
    let n = (hours / step_h).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * step_h * SECONDS_PER_HOUR).collect();
    let trace = if buildup {
        simulate_buildup(&g, &m, 1.0, &times).map_err(js)?.0
    } else {
        simulate_decay(&g, &m, &InitialCondition::Uniform(1.0), &times).map_err(js)?
    };
    let mut out: Vec<f64> = trace.times.iter().map(|t| t / SECONDS_PER_HOUR).collect();
    out.extend_from_slice(&trace.values);
    Ok(out)
}

/// ZQ line width in Hz from the reference power law at each abundance (percent).
#[wasm_bindgen]
pub fn zq_width_curve(structure_name: &str, gamma: f64, a: f64, abundances: Vec<f64>) -> Result<Vec<f64>, JsError> {
    let fit = reference_fit(structure(structure_name)?, ScalingQuantity::ZqWidth);
    abundances.iter().map(|&f| predict_zq_width(gamma, a, &fit, f).map_err(js)).collect()
}

/// Reference (u, m) for the ZQ width and D/p0 laws: `[u_zq, m_zq, u_d, m_d]`.
#[wasm_bindgen]
pub fn reference_exponents(structure_name: &str) -> Result<Vec<f64>, JsError> {
    let s = structure(structure_name)?;
    let zq = reference_fit(s, ScalingQuantity::ZqWidth);
    let d = reference_fit(s, ScalingQuantity::DOverP0);
    Ok(vec![zq.u, zq.m, d.u, d.m])
}

/// `[k_W, k_R]` in h⁻¹.
#[wasm_bindgen]
pub fn rate_constants(p0: f64, tau_h: f64, asymptote: f64) -> Result<Vec<f64>, JsError> {
    let m = rate_model(p0, tau_h, asymptote).map_err(js)?;
    Ok(vec![m.k_w, m.k_r])
}
