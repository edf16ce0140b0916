//! Core-shell nanoparticle polarization dynamics on a radial finite-volume
//! grid, relaxation-time grid search and the one-compartment rate model.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleGeometry {
    /// nm
    pub radius: f64,
    /// nm
    pub shell_thickness: f64,
    pub n_elements: usize,
}

impl ParticleGeometry {
    pub fn new(radius: f64, shell_thickness: f64, n_elements: usize) -> Result<Self> {
        let g = Self {
            radius,
            shell_thickness,
            n_elements,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("radius", "must be positive"));
        }
        if !(self.shell_thickness > 0.0 && self.shell_thickness < self.radius) {
            return Err(invalid("shell_thickness", "must lie strictly between 0 and the radius"));
        }
        if self.n_elements < 10 {
            return Err(invalid("n_elements", "must be at least 10"));
        }
        Ok(())
    }

    pub fn element_width(&self) -> f64 {
        self.radius / self.n_elements as f64
    }

    /// Element edges r_0 = 0 … r_N = R.
    pub fn edges(&self) -> Vec<f64> {
        let h = self.element_width();
        (0..=self.n_elements).map(|k| k as f64 * h).collect()
    }

    /// Element volumes in nm³.
    pub fn volumes(&self) -> Vec<f64> {
        let e = self.edges();
        e.windows(2)
            .map(|w| 4.0 / 3.0 * std::f64::consts::PI * (w[1].powi(3) - w[0].powi(3)))
            .collect()
    }

    /// Index of the first element whose inner edge lies in the shell.
    pub fn first_shell_element(&self) -> usize {
        let core = self.radius - self.shell_thickness;
        let h = self.element_width();
        let k = (core / h - 1e-9).ceil();
        (k.max(0.0) as usize).min(self.n_elements - 1)
    }

    pub fn shell_volume_fraction(&self) -> f64 {
        let core = self.first_shell_element() as f64 * self.element_width();
        1.0 - (core / self.radius).powi(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub values: Vec<f64>,
    /// s
    pub time: f64,
}

impl RadialProfile {
    pub fn uniform(geometry: &ParticleGeometry, value: f64) -> Self {
        Self {
            values: vec![value; geometry.n_elements],
            time: 0.0,
        }
    }
}

pub fn volume_average(profile: &RadialProfile, geometry: &ParticleGeometry) -> Result<f64> {
    if profile.values.len() != geometry.n_elements {
        return Err(invalid("profile", "length does not match the geometry"));
    }
    let v = geometry.volumes();
    let total: f64 = v.iter().sum();
    Ok(profile.values.iter().zip(&v).map(|(p, w)| p * w).sum::<f64>() / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    BuildUp,
    Decay,
}

/// Parameters a simulated trace was generated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSource {
    pub geometry: ParticleGeometry,
    pub relaxation: Relaxation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// s
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: TraceKind,
    /// None for measured data
    pub source: Option<TraceSource>,
}

impl Trace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kind: TraceKind) -> Result<Self> {
        if times.len() != values.len() {
            return Err(invalid("trace", "times and values differ in length"));
        }
        check_times(&times)?;
        Ok(Self {
            times,
            values,
            kind,
            source: None,
        })
    }

    /// Linear interpolation, clamped at both ends.
    pub fn interpolate(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 {
            return f64::NAN;
        }
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }

    /// Largest absolute deviation from `other` at this trace's times,
    /// relative to this trace's largest magnitude.
    pub fn max_relative_change(&self, other: &Trace) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dev = self
            .times
            .iter()
            .zip(&self.values)
            .fold(0.0f64, |m, (&t, &v)| m.max((other.interpolate(t) - v).abs()));
        dev / scale
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(&t) = times.first() {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::NonMonotonicTime { index: 0 });
        }
    }
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::NonMonotonicTime { index: i + 1 });
        }
    }
    Ok(())
}

/// Time-step schedule of the implicit solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// First step as a fraction of min(R²/D, T1_min).
    pub initial_fraction: f64,
    /// Largest step as a fraction of T1_min.
    pub max_fraction: f64,
    /// Geometric growth per step.
    pub growth: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            initial_fraction: 1e-2,
            max_fraction: 1e-2,
            growth: 1.2,
        }
    }
}

impl StepControl {
    /// Every step divided by `k`.
    pub fn refined(&self, k: f64) -> Self {
        Self {
            initial_fraction: self.initial_fraction / k,
            max_fraction: self.max_fraction / k,
            growth: self.growth,
        }
    }
}

/// Physical model parameters of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    /// nm²/s
    pub d: f64,
    /// h
    pub t1_in: f64,
    /// h
    pub t1_out: f64,
}

impl Relaxation {
    fn validate(&self, allow_zero_d: bool) -> Result<()> {
        let d_ok = if allow_zero_d { self.d >= 0.0 } else { self.d > 0.0 };
        if !(d_ok && self.d.is_finite()) {
            return Err(invalid("D", "must be positive and finite"));
        }
        if !(self.t1_in > 0.0) || !(self.t1_out > 0.0) {
            return Err(invalid("T1", "relaxation times must be positive"));
        }
        Ok(())
    }
}

struct Solver {
    n: usize,
    vol: Vec<f64>,
    /// conductance between element i and i+1, nm³/s
    cond: Vec<f64>,
    /// 1/T1 per element, 1/s
    rate: Vec<f64>,
    clamp: Option<(usize, f64)>,
    // scratch
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

impl Solver {
    fn new(geometry: &ParticleGeometry, model: &Relaxation, clamp: Option<f64>) -> Self {
        let n = geometry.n_elements;
        let h = geometry.element_width();
        let edges = geometry.edges();
        let vol: Vec<f64> = edges.windows(2).map(|w| (w[1].powi(3) - w[0].powi(3)) / 3.0).collect();
        let cond: Vec<f64> = (0..n.saturating_sub(1)).map(|i| model.d * edges[i + 1].powi(2) / h).collect();
        let shell = geometry.first_shell_element();
        let rate: Vec<f64> = (0..n)
            .map(|i| {
                let t1 = if i >= shell { model.t1_out } else { model.t1_in };
                1.0 / (t1 * SECONDS_PER_HOUR)
            })
            .collect();
        Self {
            n,
            vol,
            cond,
            rate,
            clamp: clamp.map(|p| (shell, p)),
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    /// Exact relaxation over `dt` on every free element.
    fn relax(&self, p: &mut [f64], dt: f64) {
        let end = self.clamp.map_or(self.n, |(first, _)| first);
        for i in 0..end {
            p[i] *= (-dt * self.rate[i]).exp();
        }
    }

    /// Backward Euler over `dt` in place; relaxation is included when
    /// `with_sink`. Solved for the increment so that the flux balance, not
    /// the absolute level, carries the round-off.
    fn implicit(&mut self, p: &mut [f64], dt: f64, with_sink: bool) {
        let n = self.n;
        for i in 0..n {
            let gl = if i > 0 { self.cond[i - 1] } else { 0.0 };
            let gr = if i + 1 < n { self.cond[i] } else { 0.0 };
            let sink = if with_sink { self.vol[i] * self.rate[i] } else { 0.0 };
            let flux_l = if i > 0 { gl * (p[i - 1] - p[i]) } else { 0.0 };
            let flux_r = if i + 1 < n { gr * (p[i + 1] - p[i]) } else { 0.0 };
            self.lower[i] = -gl;
            self.upper[i] = -gr;
            self.diag[i] = self.vol[i] / dt + gl + gr + sink;
            self.rhs[i] = flux_l + flux_r - sink * p[i];
        }
        if let Some((first, value)) = self.clamp {
            for i in first..n {
                self.lower[i] = 0.0;
                self.upper[i] = 0.0;
                self.diag[i] = 1.0;
                self.rhs[i] = value - p[i];
            }
        }
        // Thomas algorithm; the matrix is an M-matrix so no pivoting
        for i in 1..n {
            let w = self.lower[i] / self.diag[i - 1];
            self.diag[i] -= w * self.upper[i - 1];
            self.rhs[i] -= w * self.rhs[i - 1];
        }
        let mut next = self.rhs[n - 1] / self.diag[n - 1];
        p[n - 1] += next;
        for i in (0..n - 1).rev() {
            next = (self.rhs[i] - self.upper[i] * next) / self.diag[i];
            p[i] += next;
        }
    }

    // Clamped runs stay fully implicit: the fixed point is then independent
    // of dt and the trace monotone under a growing step. Free runs split off
    // the exact relaxation.
    fn step(&mut self, p: &mut [f64], dt: f64) {
        if self.clamp.is_some() {
            self.implicit(p, dt, true);
            return;
        }
        self.relax(p, 0.5 * dt);
        if self.cond.iter().any(|&g| g > 0.0) {
            self.implicit(p, dt, false);
        }
        self.relax(p, 0.5 * dt);
    }
}

fn integrate(
    geometry: &ParticleGeometry,
    model: &Relaxation,
    clamp: Option<f64>,
    mut profile: Vec<f64>,
    times: &[f64],
    control: &StepControl,
    kind: TraceKind,
) -> Result<(Trace, RadialProfile)> {
    check_times(times)?;
    let mut solver = Solver::new(geometry, model, clamp);
    if let Some((first, value)) = solver.clamp {
        for p in &mut profile[first..] {
            *p = value;
        }
    }
    let t1_min = model.t1_in.min(model.t1_out) * SECONDS_PER_HOUR;
    let tau_diff = if model.d > 0.0 {
        geometry.radius * geometry.radius / model.d
    } else {
        f64::INFINITY
    };
    let base = tau_diff.min(t1_min);
    let mut dt = control.initial_fraction * base;
    let dt_max = if t1_min.is_finite() {
        control.max_fraction * t1_min
    } else {
        tau_diff
    }
    .max(dt);
    let v = geometry.volumes();
    let total: f64 = v.iter().sum();
    let average = |p: &[f64]| p.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / total;
    let mut t = 0.0;
    let mut values = Vec::with_capacity(times.len());
    for &target in times {
        while t < target {
            let h = dt.min(target - t);
            solver.step(&mut profile, h);
            // land exactly on output times
            t = if target - t - h <= 1e-12 * target.max(1.0) { target } else { t + h };
            dt = (dt * control.growth).min(dt_max);
        }
        let avg = average(&profile);
        if !avg.is_finite() {
            return Err(Error::NonFinite { time: t });
        }
        values.push(avg);
    }
    let end = times.last().copied().unwrap_or(0.0);
    Ok((
        Trace {
            times: times.to_vec(),
            values,
            kind,
            source: Some(TraceSource {
                geometry: *geometry,
                relaxation: *model,
            }),
        },
        RadialProfile {
            values: profile,
            time: end,
        },
    ))
}

/// Build-up with every shell element held at `p_shell` and an empty core.
pub fn simulate_buildup(
    geometry: &ParticleGeometry,
    model: &Relaxation,
    p_shell: f64,
    times: &[f64],
) -> Result<(Trace, RadialProfile)> {
    simulate_buildup_with(geometry, model, p_shell, times, &StepControl::default())
}

pub fn simulate_buildup_with(
    geometry: &ParticleGeometry,
    model: &Relaxation,
    p_shell: f64,
    times: &[f64],
    control: &StepControl,
) -> Result<(Trace, RadialProfile)> {
    geometry.validate()?;
    model.validate(false)?;
    if !p_shell.is_finite() {
        return Err(invalid("p_shell", "must be finite"));
    }
    let start = vec![0.0; geometry.n_elements];
    integrate(geometry, model, Some(p_shell), start, times, control, TraceKind::BuildUp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Uniform(f64),
    Profile(RadialProfile),
}

/// Free relaxation with zero flux at both ends and no clamp.
pub fn simulate_decay(geometry: &ParticleGeometry, model: &Relaxation, initial: &InitialCondition, times: &[f64]) -> Result<Trace> {
    simulate_decay_with(geometry, model, initial, times, &StepControl::default())
}

pub fn simulate_decay_with(
    geometry: &ParticleGeometry,
    model: &Relaxation,
    initial: &InitialCondition,
    times: &[f64],
    control: &StepControl,
) -> Result<Trace> {
    geometry.validate()?;
    model.validate(true)?;
    let start = match initial {
        InitialCondition::Uniform(x) => vec![*x; geometry.n_elements],
        InitialCondition::Profile(p) => {
            if p.values.len() != geometry.n_elements {
                return Err(invalid("initial", "profile length does not match the geometry"));
            }
            p.values.clone()
        }
    };
    Ok(integrate(geometry, model, None, start, times, control, TraceKind::Decay)?.0)
}

/// Logarithmic axis of the relaxation-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogAxis {
    /// h
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LogAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp())
            .collect()
    }

    /// Ratio between neighbouring nodes.
    pub fn step_ratio(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.max / self.min).powf(1.0 / (self.count - 1) as f64)
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.min > 0.0 && self.max >= self.min && self.count >= 1) {
            return Err(invalid(name, "needs 0 < min ≤ max and at least one node"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t1_in: LogAxis,
    pub t1_out: LogAxis,
    pub refine: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        let axis = LogAxis {
            min: 0.05,
            max: 50.0,
            count: 40,
        };
        Self {
            t1_in: axis,
            t1_out: axis,
            refine: true,
        }
    }
}

/// What the experimental trace is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitModel {
    BuildUp { p_shell: f64 },
    Decay { initial: InitialCondition },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub t1_in: f64,
    pub t1_out: f64,
    pub residue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// h
    pub t1_in: f64,
    pub t1_out: f64,
    pub residue: f64,
    pub surface: Vec<SurfacePoint>,
    /// Node spacing ratio of the final grid on each axis.
    pub cell_ratio_in: f64,
    pub cell_ratio_out: f64,
    /// Residue varies by less than 1 % across the coarse grid.
    pub insensitive: bool,
}

impl FitResult {
    /// Both fitted times lie within one final grid cell of (t1_in, t1_out).
    pub fn within_cell(&self, t1_in: f64, t1_out: f64) -> bool {
        let ratio = |a: f64, b: f64| (a / b).max(b / a);
        ratio(self.t1_in, t1_in) <= self.cell_ratio_in * (1.0 + 1e-9) && ratio(self.t1_out, t1_out) <= self.cell_ratio_out * (1.0 + 1e-9)
    }

    /// Range of the residue along each axis through the optimum, (t1_in, t1_out).
    pub fn axis_ranges(&self) -> (f64, f64) {
        let close = |a: f64, b: f64| (a / b - 1.0).abs() < 1e-9;
        let range = |pts: Vec<f64>| {
            let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = pts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let along_in = self.surface.iter().filter(|p| close(p.t1_out, self.t1_out)).map(|p| p.residue).collect();
        let along_out = self.surface.iter().filter(|p| close(p.t1_in, self.t1_in)).map(|p| p.residue).collect();
        (range(along_in), range(along_out))
    }
}

pub fn residue(experimental: &Trace, simulated: &Trace) -> f64 {
    experimental
        .times
        .iter()
        .zip(&experimental.values)
        .map(|(&t, &y)| {
            let d = simulated.interpolate(t) - y;
            d * d
        })
        .sum()
}

fn simulate_model(geometry: &ParticleGeometry, relax: &Relaxation, model: &FitModel, times: &[f64]) -> Result<Trace> {
    match model {
        FitModel::BuildUp { p_shell } => Ok(simulate_buildup(geometry, relax, *p_shell, times)?.0),
        FitModel::Decay { initial } => simulate_decay(geometry, relax, initial, times),
    }
}

/// Least-squares grid search over (T1,in, T1,out) with optional refinement.
pub fn fit_t1(experimental: &Trace, geometry: &ParticleGeometry, d: f64, model: &FitModel, grid: &GridSpec) -> Result<FitResult> {
    if experimental.times.len() < 3 {
        return Err(invalid("experimental", "needs at least three points"));
    }
    check_times(&experimental.times)?;
    grid.t1_in.validate("t1_in grid")?;
    grid.t1_out.validate("t1_out grid")?;
    let times = &experimental.times;
    let eval = |pairs: &[(f64, f64)]| -> Result<Vec<SurfacePoint>> {
        par::map_indexed(pairs.len(), |k| {
            let (t1_in, t1_out) = pairs[k];
            let sim = simulate_model(geometry, &Relaxation { d, t1_in, t1_out }, model, times)?;
            Ok(SurfacePoint {
                t1_in,
                t1_out,
                residue: residue(experimental, &sim),
            })
        })
        .into_iter()
        .collect()
    };
    let ins = grid.t1_in.values();
    let outs = grid.t1_out.values();
    let pairs: Vec<(f64, f64)> = ins.iter().flat_map(|&a| outs.iter().map(move |&b| (a, b))).collect();
    let mut surface = eval(&pairs)?;
    let best = |s: &[SurfacePoint]| *s.iter().min_by(|a, b| a.residue.total_cmp(&b.residue)).unwrap();
    let lo = surface.iter().map(|p| p.residue).fold(f64::INFINITY, f64::min);
    let hi = surface.iter().map(|p| p.residue).fold(f64::NEG_INFINITY, f64::max);
    let insensitive = hi <= lo * 1.01 || hi - lo <= 1e-300;
    let mut cell_in = grid.t1_in.step_ratio();
    let mut cell_out = grid.t1_out.step_ratio();
    if grid.refine {
        let b = best(&surface);
        let (ri, ro) = (grid.t1_in.step_ratio().sqrt(), grid.t1_out.step_ratio().sqrt());
        let mut extra = Vec::new();
        for i in -2i32..=2 {
            for o in -2i32..=2 {
                if i % 2 == 0 && o % 2 == 0 {
                    continue;
                }
                extra.push((b.t1_in * ri.powi(i), b.t1_out * ro.powi(o)));
            }
        }
        surface.extend(eval(&extra)?);
        cell_in = ri;
        cell_out = ro;
    }
    let b = best(&surface);
    Ok(FitResult {
        t1_in: b.t1_in,
        t1_out: b.t1_out,
        residue: b.residue,
        surface,
        cell_ratio_in: cell_in,
        cell_ratio_out: cell_out,
        insensitive,
    })
}

/// One-compartment build-up model dP/dt = (A − P)·k_W − k_R·P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModelParams {
    /// 1/h
    pub k_w: f64,
    pub k_r: f64,
    pub asymptote: f64,
    pub p0: f64,
    /// h
    pub tau_bup: f64,
}

pub fn rate_model(p0: f64, tau_bup: f64, asymptote: f64) -> Result<RateModelParams> {
    if !(p0 > 0.0) {
        return Err(invalid("P0", "must be positive"));
    }
    if !(tau_bup > 0.0) {
        return Err(invalid("tau_bup", "must be positive"));
    }
    if p0 > asymptote {
        return Err(Error::InconsistentAsymptote { p0, asymptote });
    }
    let k_w = p0 / (asymptote * tau_bup);
    Ok(RateModelParams {
        k_w,
        k_r: (1.0 - p0 / asymptote) / tau_bup,
        asymptote,
        p0,
        tau_bup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonoExponential {
    pub amplitude: f64,
    /// same unit as the trace times
    pub tau: f64,
}

impl MonoExponential {
    pub fn eval(&self, kind: TraceKind, t: f64) -> f64 {
        shape(kind, t, self.tau) * self.amplitude
    }
}

fn shape(kind: TraceKind, t: f64, tau: f64) -> f64 {
    match kind {
        TraceKind::Decay => (-t / tau).exp(),
        TraceKind::BuildUp => -(-t / tau).exp_m1(),
    }
}

/// Least squares of B·e^(−t/τ) (decay) or B·(1 − e^(−t/τ)) (build-up).
pub fn fit_mono_exponential(trace: &Trace) -> Result<MonoExponential> {
    if trace.times.len() < 3 {
        return Err(invalid("trace", "needs at least three points"));
    }
    check_times(&trace.times)?;
    let kind = trace.kind;
    // B is linear once τ is fixed
    let amp = |tau: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (&t, &y) in trace.times.iter().zip(&trace.values) {
            let g = shape(kind, t, tau);
            num += g * y;
            den += g * g;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let cost = |tau: f64| {
        let b = amp(tau);
        trace
            .times
            .iter()
            .zip(&trace.values)
            .map(|(&t, &y)| {
                let r = b * shape(kind, t, tau) - y;
                r * r
            })
            .sum::<f64>()
    };
    let span = trace.times[trace.times.len() - 1] - trace.times[0];
    let dtmin = trace.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (mut a, mut b) = ((dtmin * 1e-3).ln(), (span * 1e3).ln());
    // coarse scan then golden section in log τ
    let n = 200;
    let mut best = (f64::INFINITY, a);
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let c = cost(x.exp());
        if c < best.0 {
            best = (c, x);
        }
    }
    let step = (b - a) / n as f64;
    a = best.1 - step;
    b = best.1 + step;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (cost(x1.exp()), cost(x2.exp()));
    for _ in 0..200 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2.exp());
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    // Gauss-Newton polish on (B, τ)
    let mut tau = (0.5 * (a + b)).exp();
    let mut amp_v = amp(tau);
    let mut last = cost(tau);
    for it in 0..100 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&t, &y) in trace.times.iter().zip(&trace.values) {
            let e = (-t / tau).exp();
            let (g, dg) = match kind {
                TraceKind::Decay => (e, e * t / (tau * tau)),
                TraceKind::BuildUp => (1.0 - e, -e * t / (tau * tau)),
            };
            let j = [g, amp_v * dg];
            let r = amp_v * g - y;
            for p in 0..2 {
                jtr[p] += j[p] * r;
                for q in 0..2 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dt = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        let (na, nt) = (amp_v - da, tau - dt);
        if !(nt > 0.0) {
            break;
        }
        let nc = {
            let mut s = 0.0;
            for (&t, &y) in trace.times.iter().zip(&trace.values) {
                let r = na * shape(kind, t, nt) - y;
                s += r * r;
            }
            s
        };
        if nc > last {
            break;
        }
        let small = (dt / tau).abs() < 1e-15 && (da / amp_v.abs().max(1e-300)).abs() < 1e-15;
        amp_v = na;
        tau = nt;
        last = nc;
        if small || it == 99 {
            break;
        }
    }
    if !(tau.is_finite() && amp_v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: 100,
            residue: last,
        });
    }
    Ok(MonoExponential { amplitude: amp_v, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn geom(r: f64) -> ParticleGeometry {
        ParticleGeometry::new(r, 3.0, 1000).unwrap()
    }

    fn hours(v: &[f64]) -> Vec<f64> {
        v.iter().map(|h| h * SECONDS_PER_HOUR).collect()
    }

    #[test]
    fn geometry_checks() {
        assert!(ParticleGeometry::new(10.0, 10.0, 1000).is_err());
        assert!(ParticleGeometry::new(10.0, 3.0, 5).is_err());
        let g = geom(10.0);
        assert_eq!(g.first_shell_element(), 700);
        assert_relative_eq!(g.shell_volume_fraction(), 0.657, epsilon = 1e-12);
        assert_relative_eq!(g.volumes().iter().sum::<f64>(), 4.0 / 3.0 * std::f64::consts::PI * 1000.0, max_relative = 1e-12);
    }

    #[test]
    fn volume_averages() {
        let g = geom(10.0);
        assert_relative_eq!(volume_average(&RadialProfile::uniform(&g, 0.3), &g).unwrap(), 0.3, epsilon = 1e-14);
        let mut p = RadialProfile::uniform(&g, 0.0);
        for v in &mut p.values[700..] {
            *v = 1.0;
        }
        assert_relative_eq!(volume_average(&p, &g).unwrap(), 0.657, epsilon = 1e-12);
        // P = r/R: ∫ (r/R) r² dr / ∫ r² dr = 3/4
        let h = g.element_width();
        let lin = RadialProfile {
            values: (0..1000)
                .map(|i| {
                    let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                    // cell average of r over the shell volume
                    0.75 * (b.powi(4) - a.powi(4)) / (b.powi(3) - a.powi(3)) / 10.0
                })
                .collect(),
            time: 0.0,
        };
        assert!((volume_average(&lin, &g).unwrap() - 0.75).abs() < 1e-6);
        assert!(volume_average(&RadialProfile { values: vec![0.0; 3], time: 0.0 }, &g).is_err());
    }

    #[test]
    fn rejects_bad_time_grid() {
        let g = geom(10.0);
        let m = Relaxation {
            d: 3.6,
            t1_in: 1.0,
            t1_out: 1.0,
        };
        let err = simulate_decay(&g, &m, &InitialCondition::Uniform(1.0), &[0.0, 10.0, 10.0]).unwrap_err();
        assert_eq!(err, Error::NonMonotonicTime { index: 2 });
    }

    #[test]
    fn uniform_relaxation_is_exponential() {
        let g = geom(10.0);
        let m = Relaxation {
            d: 51.0,
            t1_in: 0.7,
            t1_out: 0.7,
        };
        let times = hours(&[0.0, 0.1, 0.5, 1.0, 2.0]);
        let tr = simulate_decay(&g, &m, &InitialCondition::Uniform(1.0), &times).unwrap();
        for (t, v) in tr.times.iter().zip(&tr.values) {
            let exact = (-t / (0.7 * SECONDS_PER_HOUR)).exp();
            assert!((v - exact).abs() < 2e-3, "{t} {v} {exact}");
        }
    }

    #[test]
    fn buildup_without_sink_fills_particle() {
        let g = geom(10.0);
        let m = Relaxation {
            d: 3.6,
            t1_in: 1e12,
            t1_out: 1e12,
        };
        let (tr, prof) = simulate_buildup(&g, &m, 0.04, &[10.0, 600.0, 3600.0]).unwrap();
        assert!((tr.values[2] - 0.04).abs() < 1e-6);
        assert!(prof.values.iter().all(|&p| (p - 0.04).abs() < 1e-6));
        assert!(tr.values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn conservation_without_relaxation() {
        let g = geom(10.0);
        let m = Relaxation {
            d: 51.0,
            t1_in: f64::INFINITY,
            t1_out: f64::INFINITY,
        };
        let h = g.element_width();
        let start = RadialProfile {
            values: (0..g.n_elements).map(|i| if i as f64 * h > 7.0 { 1.0 } else { 0.0 }).collect(),
            time: 0.0,
        };
        let tr = simulate_decay(&g, &m, &InitialCondition::Profile(start), &hours(&[0.0, 1.0, 5.0])).unwrap();
        for v in &tr.values {
            assert!((v - tr.values[0]).abs() < 1e-9 * 5.0, "{v} {:?}", tr.values);
        }
    }

    #[test]
    fn two_compartment_without_diffusion() {
        let g = geom(10.0);
        let m = Relaxation {
            d: 0.0,
            t1_in: 3.0,
            t1_out: 0.3,
        };
        let times = hours(&[0.0, 0.2, 1.0, 4.0]);
        let tr = simulate_decay(&g, &m, &InitialCondition::Uniform(1.0), &times).unwrap();
        for (t, v) in times.iter().zip(&tr.values) {
            let th = t / SECONDS_PER_HOUR;
            let exact = 0.657 * (-th / 0.3).exp() + 0.343 * (-th / 3.0).exp();
            assert!((v - exact).abs() < 1e-12, "{v} {exact}");
        }
    }

    #[test]
    fn step_and_grid_halving() {
        let times = hours(&[0.05, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0]);
        for r in [10.0, 25.0] {
            for d in [3.6, 51.0] {
                for (t1_in, t1_out) in [(3.0, 0.3), (1.0, 0.5)] {
                    let m = Relaxation { d, t1_in, t1_out };
                    let g = geom(r);
                    let fine = ParticleGeometry::new(r, 3.0, 2000).unwrap();
                    let base = simulate_decay(&g, &m, &InitialCondition::Uniform(1.0), &times).unwrap();
                    let half_dt = simulate_decay_with(&g, &m, &InitialCondition::Uniform(1.0), &times, &StepControl::default().refined(2.0)).unwrap();
                    let half_dx = simulate_decay(&fine, &m, &InitialCondition::Uniform(1.0), &times).unwrap();
                    assert!(base.max_relative_change(&half_dt) < 1e-3, "dt {r} {d}");
                    assert!(base.max_relative_change(&half_dx) < 1e-3, "dx {r} {d}");
                    let (b, _) = simulate_buildup(&g, &m, 0.05, &times).unwrap();
                    let (bt, _) = simulate_buildup_with(&g, &m, 0.05, &times, &StepControl::default().refined(2.0)).unwrap();
                    let (bx, _) = simulate_buildup(&fine, &m, 0.05, &times).unwrap();
                    assert!(b.max_relative_change(&bt) < 1e-3);
                    assert!(b.max_relative_change(&bx) < 1e-3);
                }
            }
        }
    }

    #[test]
    fn buildup_profile_bounded_by_clamp() {
        let g = geom(25.0);
        let m = Relaxation {
            d: 3.6,
            t1_in: 2.0,
            t1_out: 0.3,
        };
        let (tr, prof) = simulate_buildup(&g, &m, 0.04, &hours(&[0.01, 0.1, 1.0])).unwrap();
        assert!(prof.values.iter().all(|&p| (0.0..=0.04).contains(&p)));
        assert!(tr.values.windows(2).all(|w| w[1] >= w[0]), "{:?}", tr.values);
        assert!(tr.source.is_some());
    }

    #[test]
    fn rate_model_identities() {
        let r = rate_model(0.023, 2.6, 0.023).unwrap();
        assert_eq!(r.k_r, 0.0);
        let a = rate_model(0.023, 2.6, 0.05).unwrap();
        let b = rate_model(0.023, 2.6, 0.10).unwrap();
        assert_relative_eq!(b.k_w, 0.5 * a.k_w, max_relative = 1e-15);
        assert!(matches!(rate_model(0.1, 1.0, 0.05), Err(Error::InconsistentAsymptote { .. })));
    }

    #[test]
    fn mono_exponential_exact() {
        let times: Vec<f64> = (0..30).map(|i| i as f64 * 300.0).collect();
        for kind in [TraceKind::Decay, TraceKind::BuildUp] {
            let truth = MonoExponential {
                amplitude: 0.8,
                tau: 2400.0,
            };
            let values = times.iter().map(|&t| truth.eval(kind, t)).collect();
            let fit = fit_mono_exponential(&Trace::new(times.clone(), values, kind).unwrap()).unwrap();
            assert_relative_eq!(fit.tau, truth.tau, max_relative = 1e-9);
            assert_relative_eq!(fit.amplitude, truth.amplitude, max_relative = 1e-9);
        }
    }

    #[test]
    fn grid_axis() {
        let a = LogAxis {
            min: 0.1,
            max: 10.0,
            count: 3,
        };
        let v = a.values();
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(a.step_ratio(), 10.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn rate_model_round_trip(p0 in 1e-4f64..0.5, tau in 0.1f64..50.0, extra in 1.0f64..20.0) {
            let a = p0 * extra;
            let r = rate_model(p0, tau, a).unwrap();
            prop_assert!(((r.k_w + r.k_r) * tau - 1.0).abs() < 1e-12);
            prop_assert!((a * r.k_w * tau / p0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn decay_stays_between_bounds(t1_in in 0.5f64..5.0, t1_out in 0.1f64..0.5, d in 0.5f64..60.0) {
            let g = ParticleGeometry::new(10.0, 3.0, 100).unwrap();
            let m = Relaxation { d, t1_in, t1_out };
            let times = hours(&[0.1, 0.3, 0.6, 1.0]);
            let tr = simulate_decay(&g, &m, &InitialCondition::Uniform(1.0), &times).unwrap();
            for (t, v) in tr.times.iter().zip(&tr.values) {
                let lo = (-t / (t1_out * SECONDS_PER_HOUR)).exp();
                let hi = (-t / (t1_in * SECONDS_PER_HOUR)).exp();
                prop_assert!(*v >= lo * (1.0 - 1e-3) && *v <= hi * (1.0 + 1e-3));
            }
            prop_assert!(tr.values.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
