//! Power laws of the ZQ width and of D/p0 in the isotope abundance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crystal::StructureKind;
use crate::diffusion::SweepTable;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingQuantity {
    /// Hz, prefactor γ̃²/ã³
    ZqWidth,
    /// prefactor γ̃²/ã² (see `prefactor`)
    DOverP0,
}

impl fmt::Display for ScalingQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingQuantity::ZqWidth => "zq_width",
            ScalingQuantity::DOverP0 => "d_over_p0",
        })
    }
}

impl FromStr for ScalingQuantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zq_width" | "zq" => Ok(Self::ZqWidth),
            "d_over_p0" | "d" => Ok(Self::DOverP0),
            other => Err(invalid("quantity", format!("unknown quantity `{other}`"))),
        }
    }
}

/// γ̃ = γ/10⁶ rad s⁻¹ T⁻¹, ã = a/1 Å.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedUnits {
    pub gamma: f64,
    pub a: f64,
}

impl ReducedUnits {
    pub const UNIT: ReducedUnits = ReducedUnits { gamma: 1.0, a: 1.0 };

    pub fn from_physical(gamma: f64, lattice_constant: f64) -> Self {
        Self {
            gamma: gamma / 1e6,
            a: lattice_constant,
        }
    }

    pub fn prefactor(&self, q: ScalingQuantity) -> f64 {
        let g2 = self.gamma * self.gamma;
        match q {
            ScalingQuantity::ZqWidth => g2 / self.a.powi(3),
            ScalingQuantity::DOverP0 => g2 / (self.a * self.a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub quantity: ScalingQuantity,
    pub structure: StructureKind,
    pub u: f64,
    pub m: f64,
    pub u_err: f64,
    pub m_err: f64,
    /// percent
    pub f_min: f64,
    pub f_max: f64,
    /// ln(value) − ln(fit) per input point
    pub residuals: Vec<f64>,
}

impl PowerLawFit {
    /// Reduced-unit value u·f^m at `f_percent`.
    pub fn eval(&self, f_percent: f64) -> f64 {
        if f_percent <= 0.0 {
            return 0.0;
        }
        self.u * f_percent.powf(self.m)
    }

    /// Standard error of ln(u·f^m), ignoring the u–m covariance sign.
    pub fn log_error(&self, f_percent: f64) -> f64 {
        let lu = self.u_err / self.u;
        let lm = self.m_err * f_percent.ln().abs();
        (lu * lu + lm * lm).sqrt()
    }
}

/// Unweighted least squares of ln(value/prefactor) against ln(f).
pub fn fit_power_law(
    points: &[(f64, f64)],
    quantity: ScalingQuantity,
    structure: StructureKind,
    units: ReducedUnits,
) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(invalid("points", "need at least three"));
    }
    let pre = units.prefactor(quantity);
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(f, v) in points {
        if !(f > 0.0 && v > 0.0 && f.is_finite() && v.is_finite()) {
            return Err(invalid("points", format!("non-positive entry ({f}, {v})")));
        }
        xs.push(f.ln());
        ys.push((v / pre).ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "all abundances coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let m = sxy / sxx;
    let b = my - m * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (b + m * x)).collect();
    let s2 = if xs.len() > 2 {
        residuals.iter().map(|r| r * r).sum::<f64>() / (n - 2.0)
    } else {
        0.0
    };
    let m_err = (s2 / sxx).sqrt();
    let b_err = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let u = b.exp();
    let (f_min, f_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    Ok(PowerLawFit {
        quantity,
        structure,
        u,
        m,
        u_err: u * b_err,
        m_err,
        f_min,
        f_max,
        residuals,
    })
}

fn expect(fit: &PowerLawFit, q: ScalingQuantity) -> Result<()> {
    if fit.quantity != q {
        return Err(invalid("fit", format!("expected a {q} fit, got {}", fit.quantity)));
    }
    Ok(())
}

/// ZQ FWHM in Hz for γ in rad s⁻¹ T⁻¹ and `a` in Å.
pub fn predict_zq_width(gamma: f64, a: f64, fit: &PowerLawFit, f_percent: f64) -> Result<f64> {
    expect(fit, ScalingQuantity::ZqWidth)?;
    Ok(ReducedUnits::from_physical(gamma, a).prefactor(ScalingQuantity::ZqWidth) * fit.eval(f_percent))
}

/// D from the D/p0 law; the unit follows whatever the fit was made in.
pub fn predict_d(gamma: f64, a: f64, fit: &PowerLawFit, f_percent: f64, p0: f64) -> Result<f64> {
    expect(fit, ScalingQuantity::DOverP0)?;
    if p0 < 0.0 {
        return Err(invalid("p0", "must be non-negative"));
    }
    Ok(ReducedUnits::from_physical(gamma, a).prefactor(ScalingQuantity::DOverP0) * fit.eval(f_percent) * p0)
}

/// (f_i / f_0)² for each entry.
pub fn abundance_rate_ratio(f_percent: &[f64]) -> Result<Vec<f64>> {
    let first = *f_percent.first().ok_or_else(|| invalid("abundances", "list is empty"))?;
    if !(first > 0.0) {
        return Err(invalid("abundances", "reference must be positive"));
    }
    Ok(f_percent.iter().map(|f| (f / first).powi(2)).collect())
}

/// (f percent, ZQ FWHM) and (f percent, D/p0) points of a sweep.
pub fn sweep_points(table: &SweepTable) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let zq = table.points.iter().map(|p| (p.line.abundance * 100.0, p.line.fwhm_zq)).collect();
    let d = table
        .points
        .iter()
        .map(|p| (p.line.abundance * 100.0, p.lattice_sum.value / p.p0.p0))
        .collect();
    (zq, d)
}

/// Reference (u_zq, m_zq, u_d, m_d) per structure in reduced units.
pub const REFERENCE_FITS: [(StructureKind, [f64; 4]); 4] = [
    (StructureKind::SimpleCubic, [0.456, 0.568, 0.049, 1.118]),
    (StructureKind::Bcc, [0.918, 0.552, 0.075, 1.099]),
    (StructureKind::Fcc, [1.88, 0.544, 0.226, 1.063]),
    (StructureKind::DiamondCubic, [4.44, 0.563, 0.455, 1.052]),
];

pub fn reference_fit(structure: StructureKind, quantity: ScalingQuantity) -> PowerLawFit {
    let v = REFERENCE_FITS.iter().find(|(k, _)| *k == structure).map(|(_, v)| *v).unwrap();
    let (u, m) = match quantity {
        ScalingQuantity::ZqWidth => (v[0], v[1]),
        ScalingQuantity::DOverP0 => (v[2], v[3]),
    };
    PowerLawFit {
        quantity,
        structure,
        u,
        m,
        u_err: 0.0,
        m_err: 0.0,
        f_min: 0.5,
        f_max: 100.0,
        residuals: Vec::new(),
    }
}

/// One row per structure: ZQ and D/p0 parameters with their errors.
pub fn write_table<W: std::io::Write>(fits: &[(PowerLawFit, PowerLawFit)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "structure,u_zq,u_zq_err,m_zq,m_zq_err,u_d,u_d_err,m_d,m_d_err")?;
    for (zq, d) in fits {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            zq.structure, zq.u, zq.u_err, zq.m, zq.m_err, d.u, d.u_err, d.m, d.m_err
        )?;
    }
    Ok(())
}
