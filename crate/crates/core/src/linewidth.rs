//! Second moments of the single- and zero-quantum lines and their Gaussian
//! widths, averaged over orientations and lattice realizations.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::crystal::{self, build_lattice, occupancy_mask, zcw_orientations, CubicStructure, LatticePositions, Orientation, Vec3};
use crate::dipolar::{coupling_constant, p2, Ensemble, SpinSpecies};
use crate::error::{invalid, Error, Result};
use crate::par;

/// `p0 · FWHM` for a Gaussian line.
pub const GAUSSIAN_PEAK_FWHM: f64 = 0.939_437_278_699_651_1;

pub fn fwhm_from_m2(m2: f64) -> f64 {
    2.0 * (2.0 * LN_2 * m2).sqrt()
}

pub fn m2_from_fwhm(fwhm: f64) -> f64 {
    let h = fwhm / 2.0;
    h * h / (2.0 * LN_2)
}

/// Multipliers of the two moment forms `Σ d_ik²` and `Σ (d_ik − d_jk)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub c_sq: f64,
    pub c_zq: f64,
}

impl MomentConstants {
    /// Values fixed by [`crate::oracle::calibrate`] and stored in
    /// `crates/core/data/calibration.txt`.
    pub const CALIBRATED: MomentConstants = MomentConstants { c_sq: 1.0, c_zq: 1.0 };
}

impl Default for MomentConstants {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    /// Hz²
    pub m2: f64,
    pub isolated: bool,
}

fn pair_coupling(c0: f64, r: &Vec3, n: &Vec3) -> f64 {
    let r2 = crystal::dot(r, r);
    c0 * p2(r, r2, n) / (r2 * r2.sqrt())
}

/// SQ second moment of `central` from the z-z field of `others`.
pub fn m2_single_quantum(
    central: &Vec3,
    others: &[Vec3],
    orientation: &Orientation,
    species: SpinSpecies,
    constants: &MomentConstants,
) -> Result<Moment> {
    let n = orientation.direction();
    let c0 = coupling_constant(species, species);
    let mut sum = 0.0;
    for p in others {
        let r = crystal::sub(p, central);
        if crystal::dot(&r, &r) == 0.0 {
            return Err(Error::ZeroDisplacement);
        }
        let d = pair_coupling(c0, &r, &n);
        sum += d * d;
    }
    Ok(Moment {
        m2: constants.c_sq * sum,
        isolated: others.is_empty(),
    })
}

/// ZQ second moment of the `central`–`target` flip-flop detuned by `background`.
pub fn m2_zero_quantum(
    central: &Vec3,
    target: &Vec3,
    background: &[Vec3],
    orientation: &Orientation,
    species: SpinSpecies,
    constants: &MomentConstants,
) -> Result<Moment> {
    let n = orientation.direction();
    let c0 = coupling_constant(species, species);
    let rij = crystal::sub(target, central);
    if crystal::dot(&rij, &rij) == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let mut sum = 0.0;
    for p in background {
        let rik = crystal::sub(p, central);
        let rjk = crystal::sub(p, target);
        if crystal::dot(&rik, &rik) == 0.0 || crystal::dot(&rjk, &rjk) == 0.0 {
            return Err(Error::ZeroDisplacement);
        }
        let delta = pair_coupling(c0, &rik, &n) - pair_coupling(c0, &rjk, &n);
        sum += delta * delta;
    }
    Ok(Moment {
        m2: constants.c_zq * sum,
        isolated: background.is_empty(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetWeighting {
    /// Every target spin within the cut-off counts once.
    #[default]
    Uniform,
    /// Targets weighted by their flip-flop rate, ∝ d_ij².
    FlipFlopRate,
}

/// How per-configuration moments are combined into one width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Convert the target-averaged M2 of every (lattice, orientation) pair to
    /// a width and average the widths.
    #[default]
    WidthPerConfiguration,
    /// Average M2 over all pairs and convert once.
    PooledMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineWidthSettings {
    pub ensemble: Ensemble,
    pub n_orientations: usize,
    pub species: SpinSpecies,
    pub constants: MomentConstants,
    /// Background radius in units of the d² cut-off.
    pub background_factor: f64,
    pub weighting: TargetWeighting,
    pub averaging: Averaging,
}

impl LineWidthSettings {
    pub fn new(ensemble: Ensemble, n_orientations: usize, species: SpinSpecies) -> Self {
        Self {
            ensemble,
            n_orientations,
            species,
            constants: MomentConstants::CALIBRATED,
            background_factor: 2.0,
            weighting: TargetWeighting::Uniform,
            averaging: Averaging::WidthPerConfiguration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineWidthResult {
    pub structure: CubicStructure,
    pub abundance: f64,
    /// Å
    pub cutoff: f64,
    pub averaging: Averaging,
    /// Pooled second moments, Hz²
    pub m2_sq: f64,
    pub m2_zq: f64,
    /// Hz
    pub fwhm_sq: f64,
    pub fwhm_zq: f64,
    /// Spread of the per-lattice widths, Hz.
    pub std_sq: f64,
    pub std_zq: f64,
    pub n_lattices: usize,
    pub n_orientations: usize,
    /// (lattice, orientation) pairs without any target spin.
    pub n_isolated: usize,
    pub seed: u64,
    /// ZQ width per orientation, averaged over lattices, Hz.
    pub fwhm_zq_per_orientation: Vec<f64>,
}

impl LineWidthResult {
    /// Smallest and largest per-orientation ZQ width relative to the mean width.
    pub fn orientation_spread(&self) -> (f64, f64) {
        let v = &self.fwhm_zq_per_orientation;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo / mean - 1.0, hi / mean - 1.0)
    }
}

/// Occupied sites of one realization within `radius` of the central spin,
/// central excluded, central at the origin.
pub(crate) fn occupied_within(lattice: &LatticePositions, fraction: f64, seed: u64, radius: f64) -> Vec<Vec3> {
    let mask = occupancy_mask(lattice.len(), lattice.central_index, fraction, seed);
    let r2max = radius * radius * (1.0 + 1e-12);
    lattice
        .positions
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|&(i, (p, keep))| keep && i != lattice.central_index && crystal::dot(p, p) <= r2max)
        .map(|(_, (p, _))| *p)
        .collect()
}

struct Neighbourhood {
    sites: Vec<Vec3>,
    targets: Vec<usize>,
    /// Spins within the background radius of the central spin.
    sq_set: Vec<usize>,
    /// Background of each target, indices into `sites`.
    backgrounds: Vec<Vec<u32>>,
}

impl Neighbourhood {
    fn new(sites: Vec<Vec3>, cutoff: f64, background_radius: f64) -> Self {
        let rc2 = cutoff * cutoff * (1.0 + 1e-12);
        let rb2 = background_radius * background_radius * (1.0 + 1e-12);
        let r2: Vec<f64> = sites.iter().map(|p| crystal::dot(p, p)).collect();
        let targets: Vec<usize> = (0..sites.len()).filter(|&k| r2[k] <= rc2).collect();
        let sq_set: Vec<usize> = (0..sites.len()).filter(|&k| r2[k] <= rb2).collect();
        let backgrounds = targets
            .iter()
            .map(|&j| {
                (0..sites.len())
                    .filter(|&k| {
                        if k == j {
                            return false;
                        }
                        if r2[k] <= rb2 {
                            return true;
                        }
                        let d = crystal::sub(&sites[k], &sites[j]);
                        crystal::dot(&d, &d) <= rb2
                    })
                    .map(|k| k as u32)
                    .collect()
            })
            .collect();
        Self {
            sites,
            targets,
            sq_set,
            backgrounds,
        }
    }

    /// (M2_SQ, M2_ZQ) for one orientation, or `None` without targets.
    fn moments(&self, n: &Vec3, c0: f64, constants: &MomentConstants, weighting: TargetWeighting) -> Option<(f64, f64)> {
        if self.targets.is_empty() {
            return None;
        }
        let d: Vec<f64> = self.sites.iter().map(|p| pair_coupling(c0, p, n)).collect();
        let sq: f64 = self.sq_set.iter().map(|&k| d[k] * d[k]).sum();
        let mut zq = 0.0;
        let mut wsum = 0.0;
        for (&j, bg) in self.targets.iter().zip(&self.backgrounds) {
            let pj = &self.sites[j];
            let mut acc = 0.0;
            for &k in bg {
                let k = k as usize;
                let r = crystal::sub(&self.sites[k], pj);
                let delta = d[k] - pair_coupling(c0, &r, n);
                acc += delta * delta;
            }
            let w = match weighting {
                TargetWeighting::Uniform => 1.0,
                TargetWeighting::FlipFlopRate => d[j] * d[j],
            };
            zq += w * acc;
            wsum += w;
        }
        let zq = if wsum > 0.0 { zq / wsum } else { 0.0 };
        Some((constants.c_sq * sq, constants.c_zq * zq))
    }
}

/// Powder- and ensemble-averaged SQ/ZQ line widths at one abundance.
///
/// `cutoff` is the d² cut-off radius in Å for this (structure, abundance).
pub fn powder_linewidths(
    structure: CubicStructure,
    fraction: f64,
    cutoff: f64,
    settings: &LineWidthSettings,
) -> Result<LineWidthResult> {
    let ens = settings.ensemble;
    ens.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("abundance", format!("{fraction} is outside (0, 1]")));
    }
    if !(cutoff > 0.0) {
        return Err(invalid("cutoff", "must be positive"));
    }
    if !(settings.background_factor >= 1.0) {
        return Err(invalid("background_factor", "must be at least 1"));
    }
    let background_radius = settings.background_factor * cutoff;
    let gather = cutoff + background_radius;
    let lattice = build_lattice(structure, ens.extent)?;
    if gather > lattice.inscribed_radius() {
        return Err(Error::BoxTooSmall {
            threshold: gather,
            limit_angstrom: lattice.inscribed_radius(),
        });
    }
    let zcw = zcw_orientations(settings.n_orientations);
    let dirs: Vec<Vec3> = zcw.orientations.iter().map(|o| o.direction()).collect();
    let c0 = coupling_constant(settings.species, settings.species);
    // Full occupation leaves nothing random; every member is the same lattice.
    let distinct = if fraction >= 1.0 { 1 } else { ens.n_lattices };

    let per_lattice: Vec<Vec<Option<(f64, f64)>>> = par::map_indexed(distinct, |m| {
        let sites = occupied_within(&lattice, fraction, ens.member_seed(m, fraction), gather);
        let hood = Neighbourhood::new(sites, cutoff, background_radius);
        dirs.iter()
            .map(|n| hood.moments(n, c0, &settings.constants, settings.weighting))
            .collect()
    });

    let n_orient = zcw.len();
    let width = |m2: f64| fwhm_from_m2(m2);
    // per configuration: (sq, zq) reduced to the averaged quantity
    let reduce = |m2: f64| match settings.averaging {
        Averaging::WidthPerConfiguration => width(m2),
        Averaging::PooledMoment => m2,
    };
    let finish = |mean: f64| match settings.averaging {
        Averaging::WidthPerConfiguration => mean,
        Averaging::PooledMoment => width(mean),
    };
    let (mut m2_sq, mut m2_zq, mut q_sq, mut q_zq) = (0.0, 0.0, 0.0, 0.0);
    let mut used = 0usize;
    let mut isolated = 0usize;
    let mut orient_zq = vec![0.0; n_orient];
    let mut orient_n = vec![0usize; n_orient];
    let mut lattice_sq = Vec::with_capacity(distinct);
    let mut lattice_zq = Vec::with_capacity(distinct);
    for row in &per_lattice {
        let (mut lsq, mut lzq, mut ln) = (0.0, 0.0, 0usize);
        for (o, cell) in row.iter().enumerate() {
            match *cell {
                Some((sq, zq)) => {
                    m2_sq += sq;
                    m2_zq += zq;
                    lsq += reduce(sq);
                    lzq += reduce(zq);
                    ln += 1;
                    orient_zq[o] += reduce(zq);
                    orient_n[o] += 1;
                }
                None => isolated += 1,
            }
        }
        if ln > 0 {
            q_sq += lsq;
            q_zq += lzq;
            used += ln;
            lattice_sq.push(finish(lsq / ln as f64));
            lattice_zq.push(finish(lzq / ln as f64));
        }
    }
    if used == 0 {
        return Err(Error::DegenerateAbundance { abundance: fraction });
    }
    let scale = ens.n_lattices / distinct;
    let n = used as f64;
    Ok(LineWidthResult {
        structure,
        abundance: fraction,
        cutoff,
        averaging: settings.averaging,
        m2_sq: m2_sq / n,
        m2_zq: m2_zq / n,
        fwhm_sq: finish(q_sq / n),
        fwhm_zq: finish(q_zq / n),
        std_sq: std_dev(&lattice_sq),
        std_zq: std_dev(&lattice_zq),
        n_lattices: ens.n_lattices,
        n_orientations: n_orient,
        n_isolated: isolated * scale,
        seed: ens.seed,
        fwhm_zq_per_orientation: orient_zq
            .iter()
            .zip(&orient_n)
            .map(|(s, &k)| if k > 0 { finish(s / k as f64) } else { 0.0 })
            .collect(),
    })
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySource {
    GaussianFromFwhm,
    ExperimentalTabulated,
}

/// Normalized ZQ line evaluated at zero frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    /// s
    pub p0: f64,
    pub source: DensitySource,
}

impl SpectralDensity {
    /// Gaussian line of the given FWHM in Hz.
    pub fn gaussian(fwhm: f64) -> Result<Self> {
        if !(fwhm > 0.0) {
            return Err(invalid("fwhm", "must be positive"));
        }
        Ok(Self {
            p0: GAUSSIAN_PEAK_FWHM / fwhm,
            source: DensitySource::GaussianFromFwhm,
        })
    }

    pub fn from_linewidth(line: &LineWidthResult) -> Result<Self> {
        Self::gaussian(line.fwhm_zq)
    }

    /// Tabulated line `(offset Hz, intensity)`, normalized by trapezoidal area
    /// and linearly interpolated at zero offset.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Normalization("need at least two points".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Normalization("non-finite entries".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Normalization("offsets must be strictly increasing".into()));
        }
        if points.iter().any(|p| p.1 < 0.0) {
            return Err(Error::Normalization("negative intensity".into()));
        }
        let area: f64 = points.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
        if !(area > 0.0) {
            return Err(Error::Normalization("zero area".into()));
        }
        let (first, last) = (points[0].0, points[points.len() - 1].0);
        if !(first <= 0.0 && last >= 0.0) {
            return Err(Error::Normalization("zero offset outside the tabulated range".into()));
        }
        let i = points.partition_point(|p| p.0 <= 0.0).clamp(1, points.len() - 1);
        let (x0, y0) = points[i - 1];
        let (x1, y1) = points[i];
        let y = y0 + (y1 - y0) * (0.0 - x0) / (x1 - x0);
        let p0 = y / area;
        if !(p0 > 0.0) {
            return Err(Error::Normalization("line vanishes at zero offset".into()));
        }
        Ok(Self {
            p0,
            source: DensitySource::ExperimentalTabulated,
        })
    }

    /// FWHM of the Gaussian with this peak density.
    pub fn gaussian_fwhm(&self) -> f64 {
        GAUSSIAN_PEAK_FWHM / self.p0
    }
}

/// `2√(ln2/π)`, kept next to its closed form for the tests.
pub fn gaussian_peak_fwhm() -> f64 {
    2.0 * (LN_2 / PI).sqrt()
}
