//! Spin-diffusion coefficients from the nearest-neighbour formula and from
//! lattice sums of flip-flop rates.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crystal::{self, build_lattice, nn_distance, zcw_orientations, CubicStructure, Vec3};
use crate::dipolar::{coupling_constant, cutoff_radius, p2, Ensemble, SpinSpecies, WeightKind};
use crate::error::{invalid, Result};
use crate::linewidth::{occupied_within, powder_linewidths, std_dev, LineWidthResult, LineWidthSettings, SpectralDensity};
use crate::par;

/// Å² → nm²
pub const ANGSTROM2_TO_NM2: f64 = 1e-2;

/// `W_ij = (π/2)·d_ij²·p0`, d in Hz, p0 in s.
pub fn flip_flop_rate(d_ij: f64, p0: &SpectralDensity) -> Result<f64> {
    if !(p0.p0 > 0.0) {
        return Err(invalid("p0", "must be positive"));
    }
    Ok(0.5 * PI * d_ij * d_ij * p0.p0)
}

/// `(Δν/30)·r_nn²` in nm²/s for a width in Hz and a distance in Å.
pub fn d_nearest_neighbor(fwhm_dd: f64, r_nn: f64) -> Result<f64> {
    if !(fwhm_dd >= 0.0 && fwhm_dd.is_finite()) {
        return Err(invalid("fwhm_dd", "must be non-negative and finite"));
    }
    if !(r_nn > 0.0) {
        return Err(invalid("r_nn", "must be positive"));
    }
    Ok(fwhm_dd / 30.0 * r_nn * r_nn * ANGSTROM2_TO_NM2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionMethod {
    NearestNeighbor,
    LatticeSum,
}

impl fmt::Display for DiffusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiffusionMethod::NearestNeighbor => "nearest_neighbor",
            DiffusionMethod::LatticeSum => "lattice_sum",
        })
    }
}

/// Unit in which d enters the lattice sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingUnit {
    #[default]
    Hertz,
    /// d in rad/s
    Angular,
}

impl fmt::Display for CouplingUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingUnit::Hertz => "hertz",
            CouplingUnit::Angular => "angular",
        })
    }
}

impl std::str::FromStr for CouplingUnit {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hertz" | "hz" => Ok(CouplingUnit::Hertz),
            "angular" | "rad" => Ok(CouplingUnit::Angular),
            other => Err(invalid("coupling_unit", format!("unknown unit `{other}`"))),
        }
    }
}

impl std::str::FromStr for DiffusionMethod {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nearest_neighbor" => Ok(DiffusionMethod::NearestNeighbor),
            "lattice_sum" => Ok(DiffusionMethod::LatticeSum),
            other => Err(invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

impl CouplingUnit {
    fn d2_factor(self) -> f64 {
        match self {
            CouplingUnit::Hertz => 1.0,
            CouplingUnit::Angular => 4.0 * PI * PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionCoefficient {
    /// nm²/s
    pub value: f64,
    pub method: DiffusionMethod,
    pub structure: CubicStructure,
    pub abundance: f64,
    pub p0: SpectralDensity,
    pub seed: u64,
    pub n_lattices: usize,
    pub n_orientations: usize,
    /// r_nn for the nearest-neighbour method, d²r² cut-off for the lattice sum (Å)
    pub length: f64,
    /// r_nn hit the closest site distance, or the lattice sum saw no neighbour
    pub flagged: bool,
}

/// Ensemble- and powder-averaged `Σ_j (π/4)·d_ij²·r_ij²` (D/p0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSum {
    /// Hz²·nm² (or (rad/s)²·nm²)
    pub mean: f64,
    /// spread across lattices
    pub std: f64,
    pub n_empty: usize,
    pub cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSumSettings {
    pub ensemble: Ensemble,
    pub n_orientations: usize,
    pub species: SpinSpecies,
    pub unit: CouplingUnit,
}

/// `Σ (π/4) d² r²` restricted to `cutoff` (Å), averaged over the ZCW set and
/// the ensemble.
pub fn lattice_sum(structure: CubicStructure, fraction: f64, cutoff: f64, settings: &LatticeSumSettings) -> Result<LatticeSum> {
    let ens = settings.ensemble;
    ens.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("abundance", format!("{fraction} is outside (0, 1]")));
    }
    if !(cutoff > 0.0) {
        return Err(invalid("cutoff", "must be positive"));
    }
    let lattice = build_lattice(structure, ens.extent)?;
    let zcw = zcw_orientations(settings.n_orientations);
    let dirs: Vec<(Vec3, f64)> = zcw.iter().map(|(o, w)| (o.direction(), w)).collect();
    let c0 = coupling_constant(settings.species, settings.species);
    let pref = 0.25 * PI * c0 * c0 * settings.unit.d2_factor() * ANGSTROM2_TO_NM2;
    let distinct = if fraction >= 1.0 { 1 } else { ens.n_lattices };
    let sums: Vec<f64> = par::map_indexed(distinct, |m| {
        let sites = occupied_within(&lattice, fraction, ens.member_seed(m, fraction), cutoff);
        sites
            .iter()
            .map(|r| {
                let r2 = crystal::dot(r, r);
                let ang: f64 = dirs
                    .iter()
                    .map(|(n, w)| {
                        let g = p2(r, r2, n);
                        w * g * g
                    })
                    .sum();
                ang / (r2 * r2)
            })
            .sum::<f64>()
            * pref
    });
    let n_empty = sums.iter().filter(|&&s| s == 0.0).count() * (ens.n_lattices / distinct);
    let mean = sums.iter().sum::<f64>() / distinct as f64;
    Ok(LatticeSum {
        mean,
        std: std_dev(&sums),
        n_empty,
        cutoff,
    })
}

/// D_lat = p0·Σ (π/4) d² r² in nm²/s.
pub fn d_lattice_sum(
    structure: CubicStructure,
    fraction: f64,
    p0: SpectralDensity,
    cutoff: f64,
    settings: &LatticeSumSettings,
) -> Result<DiffusionCoefficient> {
    if !(p0.p0 > 0.0) {
        return Err(invalid("p0", "must be positive"));
    }
    let sum = lattice_sum(structure, fraction, cutoff, settings)?;
    Ok(DiffusionCoefficient {
        value: sum.mean * p0.p0,
        method: DiffusionMethod::LatticeSum,
        structure,
        abundance: fraction,
        p0,
        seed: settings.ensemble.seed,
        n_lattices: settings.ensemble.n_lattices,
        n_orientations: zcw_orientations(settings.n_orientations).len(),
        length: cutoff,
        flagged: sum.n_empty == settings.ensemble.n_lattices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub linewidth: LineWidthSettings,
    pub threshold: f64,
    pub unit: CouplingUnit,
    pub poisson_correction: bool,
    /// Replaces the simulated ZQ line when set.
    pub p0_override: Option<SpectralDensity>,
}

impl SweepConfig {
    pub fn new(linewidth: LineWidthSettings) -> Self {
        Self {
            linewidth,
            threshold: 0.95,
            unit: CouplingUnit::Hertz,
            poisson_correction: false,
            p0_override: None,
        }
    }

    fn lattice_sum_settings(&self) -> LatticeSumSettings {
        LatticeSumSettings {
            ensemble: self.linewidth.ensemble,
            n_orientations: self.linewidth.n_orientations,
            species: self.linewidth.species,
            unit: self.unit,
        }
    }
}

/// Everything computed at one abundance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub line: LineWidthResult,
    pub p0: SpectralDensity,
    pub cutoff_d2: f64,
    pub cutoff_d2r2: f64,
    /// D/p0
    pub geometry: LatticeSum,
    pub nearest_neighbor: DiffusionCoefficient,
    pub lattice_sum: DiffusionCoefficient,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub points: Vec<SweepPoint>,
    /// (abundance, error message) of abundances that failed
    pub failures: Vec<(f64, String)>,
    pub unit: CouplingUnit,
}

pub fn sweep_point(structure: CubicStructure, fraction: f64, config: &SweepConfig) -> Result<SweepPoint> {
    let lw = &config.linewidth;
    let c2 = cutoff_radius(structure, fraction, WeightKind::DSquared, &lw.ensemble, config.threshold)?;
    let c4 = cutoff_radius(structure, fraction, WeightKind::DSquaredRSquared, &lw.ensemble, config.threshold)?;
    let line = powder_linewidths(structure, fraction, c2.radius, lw)?;
    let p0 = match config.p0_override {
        Some(p) => p,
        None => SpectralDensity::from_linewidth(&line)?,
    };
    let nn = nn_distance(&structure, fraction, config.poisson_correction)?;
    let geometry = lattice_sum(structure, fraction, c4.radius, &config.lattice_sum_settings())?;
    let common = |value, method, length, flagged| DiffusionCoefficient {
        value,
        method,
        structure,
        abundance: fraction,
        p0,
        seed: lw.ensemble.seed,
        n_lattices: lw.ensemble.n_lattices,
        n_orientations: line.n_orientations,
        length,
        flagged,
    };
    let nearest_neighbor = common(
        d_nearest_neighbor(line.fwhm_zq, nn.value)?,
        DiffusionMethod::NearestNeighbor,
        nn.value,
        nn.clamped,
    );
    let lattice_sum = common(
        geometry.mean * p0.p0,
        DiffusionMethod::LatticeSum,
        c4.radius,
        geometry.n_empty == lw.ensemble.n_lattices,
    );
    Ok(SweepPoint {
        line,
        p0,
        cutoff_d2: c2.radius,
        cutoff_d2r2: c4.radius,
        geometry,
        nearest_neighbor,
        lattice_sum,
    })
}

/// Full pipeline at every abundance; failures are collected, not fatal.
pub fn abundance_sweep(structure: CubicStructure, fractions: &[f64], config: &SweepConfig) -> Result<SweepTable> {
    if fractions.is_empty() {
        return Err(invalid("abundances", "list is empty"));
    }
    let mut table = SweepTable {
        unit: config.unit,
        ..SweepTable::default()
    };
    for &f in fractions {
        match sweep_point(structure, f, config) {
            Ok(p) => table.points.push(p),
            Err(e) => table.failures.push((f, e.to_string())),
        }
    }
    Ok(table)
}

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "structure,abundance_percent,method,D_nm2_per_s,fwhm_zq_hz,fwhm_sq_hz,p0_s,cutoff_angstrom,coupling_unit,seed")?;
        for p in &self.points {
            for d in [&p.nearest_neighbor, &p.lattice_sum] {
                writeln!(
                    w,
                    "{},{},{},{:.6e},{:.6},{:.6},{:.6e},{:.6},{},{}",
                    d.structure.kind,
                    d.abundance * 100.0,
                    d.method,
                    d.value,
                    p.line.fwhm_zq,
                    p.line.fwhm_sq,
                    d.p0.p0,
                    d.length,
                    self.unit,
                    d.seed
                )?;
            }
        }
        Ok(())
    }
}
