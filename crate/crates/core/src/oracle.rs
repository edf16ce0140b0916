//! Brute-force references: exact diagonalization of up to four dipolar
//! coupled spins, uncut lattice sums and closed-form particle traces.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crystal::{self, Orientation, OccupiedLattice, Vec3};
use crate::dipolar::{coupling, SpinSpecies};
use crate::error::{invalid, Error, Result};
use crate::linewidth::{m2_single_quantum, m2_zero_quantum, MomentConstants};
use crate::par;
use crate::particle::{ParticleGeometry, Trace, TraceKind, SECONDS_PER_HOUR};
use crate::rng;

pub const MAX_SPINS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallSpinSystem {
    /// Å
    pub positions: Vec<Vec3>,
    pub species: Vec<SpinSpecies>,
    pub orientation: Orientation,
}

impl SmallSpinSystem {
    pub fn new(positions: Vec<Vec3>, species: Vec<SpinSpecies>, orientation: Orientation) -> Result<Self> {
        if positions.len() > MAX_SPINS {
            return Err(Error::TooManySpins {
                max: MAX_SPINS,
                got: positions.len(),
            });
        }
        if positions.len() < 2 {
            return Err(invalid("positions", "need at least two spins"));
        }
        if species.len() != positions.len() {
            return Err(invalid("species", "one species per position"));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                let r = crystal::sub(&positions[j], &positions[i]);
                if crystal::dot(&r, &r) == 0.0 {
                    return Err(Error::ZeroDisplacement);
                }
            }
        }
        Ok(Self {
            positions,
            species,
            orientation,
        })
    }

    pub fn homonuclear(positions: Vec<Vec3>, species: SpinSpecies, orientation: Orientation) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![species; n], orientation)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Secular couplings d_ij in Hz.
    pub fn couplings(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let r = crystal::sub(&self.positions[j], &self.positions[i]);
                let v = coupling(&r, &self.orientation, self.species[i], self.species[j])?;
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        Ok(d)
    }

    /// Same system with spin `k` relabelled as `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut pos = vec![[0.0; 3]; self.len()];
        let mut sp = self.species.clone();
        for (k, &to) in perm.iter().enumerate() {
            pos[to] = self.positions[k];
            sp[to] = self.species[k];
        }
        Self::new(pos, sp, self.orientation)
    }
}

/// Which secular terms enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DipolarTerms {
    /// 2 d I_i^z I_j^z
    #[default]
    ZzOnly,
    /// 2 d I_i^z I_j^z − d/2 (I_i⁺I_j⁻ + I_i⁻I_j⁺)
    Secular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// (Hz, intensity), intensities summing to one
    pub lines: Vec<(f64, f64)>,
    pub mean: f64,
    /// Hz²
    pub m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMoments {
    /// probe I_0⁺
    pub single_quantum: Spectrum,
    /// probe Σ_k I_k⁺
    pub collective: Spectrum,
    /// probe I_0⁺ I_1⁻
    pub zero_quantum: Spectrum,
}

fn iz(state: usize, k: usize) -> f64 {
    if state >> k & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Hamiltonian in Hz on the product basis; bit k set means spin k down.
pub fn hamiltonian(system: &SmallSpinSystem, terms: DipolarTerms) -> Result<DMatrix<f64>> {
    let n = system.len();
    let dim = 1 << n;
    let d = system.couplings()?;
    let mut h = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        for i in 0..n {
            for j in i + 1..n {
                h[(s, s)] += 2.0 * d[i][j] * iz(s, i) * iz(s, j);
                if terms == DipolarTerms::Secular && (s >> i & 1) != (s >> j & 1) {
                    let t = s ^ (1 << i) ^ (1 << j);
                    h[(t, s)] -= 0.5 * d[i][j];
                }
            }
        }
    }
    Ok(h)
}

fn raising(dim: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        if s >> k & 1 == 1 {
            m[(s ^ (1 << k), s)] = 1.0;
        }
    }
    m
}

fn spectrum(eig: &SymmetricEigen<f64, nalgebra::Dyn>, probe: &DMatrix<f64>) -> Spectrum {
    let v = &eig.eigenvectors;
    let o = v.transpose() * probe * v;
    let dim = o.nrows();
    let mut raw = Vec::new();
    let mut total = 0.0;
    for a in 0..dim {
        for b in 0..dim {
            let w = o[(a, b)] * o[(a, b)];
            if w > 1e-14 {
                raw.push((eig.eigenvalues[a] - eig.eigenvalues[b], w));
                total += w;
            }
        }
    }
    let mean = raw.iter().map(|(f, w)| f * w).sum::<f64>() / total;
    let m2 = raw.iter().map(|(f, w)| w * (f - mean) * (f - mean)).sum::<f64>() / total;
    raw.sort_by(|x, y| x.0.total_cmp(&y.0));
    let scale = raw.iter().fold(1.0f64, |m, (f, _)| m.max(f.abs()));
    let mut lines: Vec<(f64, f64)> = Vec::new();
    for (f, w) in raw {
        match lines.last_mut() {
            Some(last) if (last.0 - f).abs() <= 1e-9 * scale => last.1 += w / total,
            _ => lines.push((f, w / total)),
        }
    }
    Spectrum { lines, mean, m2 }
}

/// Transition frequencies, intensities and second moments at infinite temperature.
pub fn exact_transition_moments(system: &SmallSpinSystem, terms: DipolarTerms) -> Result<TransitionMoments> {
    let h = hamiltonian(system, terms)?;
    let dim = h.nrows();
    let eig = SymmetricEigen::new(h);
    let i0 = raising(dim, 0);
    let mut coll = DMatrix::zeros(dim, dim);
    for k in 0..system.len() {
        coll += raising(dim, k);
    }
    let zq = &i0 * raising(dim, 1).transpose();
    Ok(TransitionMoments {
        single_quantum: spectrum(&eig, &i0),
        collective: spectrum(&eig, &coll),
        zero_quantum: spectrum(&eig, &zq),
    })
}

/// Moments of spin 0 (SQ) and of the 0–1 flip-flop (ZQ) from the lattice formulas.
pub fn formula_moments(system: &SmallSpinSystem, constants: &MomentConstants) -> Result<(f64, f64)> {
    let species = system.species[0];
    if system.species.iter().any(|s| *s != species) {
        return Err(invalid("species", "formula moments are homonuclear"));
    }
    let p = &system.positions;
    let sq = m2_single_quantum(&p[0], &p[1..], &system.orientation, species, constants)?;
    let zq = m2_zero_quantum(&p[0], &p[1], &p[2..], &system.orientation, species, constants)?;
    Ok((sq.m2, zq.m2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub terms: DipolarTerms,
    pub constants: MomentConstants,
    /// (max − min)/mean of the per-system ratios
    pub spread_sq: f64,
    pub spread_zq: f64,
    pub n_systems: usize,
    pub seed: u64,
}

impl Calibration {
    pub fn is_geometry_independent(&self, tolerance: f64) -> bool {
        self.spread_sq <= tolerance && self.spread_zq <= tolerance
    }
}

/// Three homonuclear spins with all distances in [1.5, 6] Å and a random field direction.
pub fn random_three_spin(seed: u64, species: SpinSpecies) -> SmallSpinSystem {
    let mut r = rng::stream(seed);
    loop {
        let mut p = vec![[0.0; 3]];
        for _ in 0..2 {
            p.push([r.random_range(-4.0..4.0), r.random_range(-4.0..4.0), r.random_range(-4.0..4.0)]);
        }
        let ok = (0..3).all(|i| {
            (i + 1..3).all(|j| {
                let v = crystal::sub(&p[i], &p[j]);
                (1.5..6.0).contains(&crystal::dot(&v, &v).sqrt())
            })
        });
        if ok {
            let o = Orientation::new(r.random_range(0.0..std::f64::consts::TAU), r.random_range(0.0..std::f64::consts::PI));
            return SmallSpinSystem::homonuclear(p, species, o).unwrap();
        }
    }
}

/// Ratio of exact to formula second moments over random three-spin systems.
pub fn calibrate(terms: DipolarTerms, n_systems: usize, seed: u64) -> Result<Calibration> {
    if n_systems == 0 {
        return Err(invalid("n_systems", "must be positive"));
    }
    let unit = MomentConstants { c_sq: 1.0, c_zq: 1.0 };
    let ratios: Vec<Result<(f64, f64)>> = par::map_indexed(n_systems, |k| {
        let sys = random_three_spin(rng::member_seed(seed, k as u64, 0.0), SpinSpecies::SI29);
        let exact = exact_transition_moments(&sys, terms)?;
        let (sq, zq) = formula_moments(&sys, &unit)?;
        Ok((exact.single_quantum.m2 / sq, exact.zero_quantum.m2 / zq))
    });
    let ratios: Vec<(f64, f64)> = ratios.into_iter().collect::<Result<_>>()?;
    let stats = |v: Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, (hi - lo) / mean)
    };
    let (c_sq, spread_sq) = stats(ratios.iter().map(|r| r.0).collect());
    let (c_zq, spread_zq) = stats(ratios.iter().map(|r| r.1).collect());
    Ok(Calibration {
        terms,
        constants: MomentConstants { c_sq, c_zq },
        spread_sq,
        spread_zq,
        n_systems,
        seed,
    })
}

impl Calibration {
    /// Plain-text record: `key = value` lines.
    pub fn to_record(&self, version: &str) -> String {
        let terms = match self.terms {
            DipolarTerms::ZzOnly => "zz_only",
            DipolarTerms::Secular => "secular",
        };
        format!(
            "version = {version}\nterms = {terms}\nc_sq = {:.15e}\nc_zq = {:.15e}\nspread_sq = {:.3e}\nspread_zq = {:.3e}\nn_systems = {}\nseed = {}\n",
            self.constants.c_sq, self.constants.c_zq, self.spread_sq, self.spread_zq, self.n_systems, self.seed
        )
    }
}

/// Reads `c_sq` and `c_zq` back from a record; `#` lines are skipped.
pub fn parse_record(text: &str) -> Result<MomentConstants> {
    let mut c_sq = None;
    let mut c_zq = None;
    for line in text.lines().filter(|l| !l.trim_start().starts_with('#')) {
        let Some((k, v)) = line.split_once('=') else { continue };
        let v: Option<f64> = v.trim().parse().ok();
        match k.trim() {
            "c_sq" => c_sq = v,
            "c_zq" => c_zq = v,
            _ => {}
        }
    }
    match (c_sq, c_zq) {
        (Some(c_sq), Some(c_zq)) => Ok(MomentConstants { c_sq, c_zq }),
        _ => Err(invalid("calibration record", "needs numeric c_sq and c_zq")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumQuantity {
    /// Σ d², Hz²
    DSquared,
    /// Σ d² r², Hz² Å²
    DSquaredRSquared,
    /// Σ (π/4) d² r², Hz² Å²
    DiffusionSum,
}

pub const ORACLE_MAX_EXTENT: usize = 8;

/// Sum over every occupied site of the lattice, no cut-off.
pub fn unrestricted_lattice_sum(
    lattice: &OccupiedLattice,
    quantity: SumQuantity,
    orientation: &Orientation,
    species: SpinSpecies,
) -> Result<f64> {
    if lattice.extent > ORACLE_MAX_EXTENT {
        let side = (2 * lattice.extent + 1) as u128;
        let max_side = (2 * ORACLE_MAX_EXTENT + 1) as usize;
        return Err(Error::SiteBudgetExceeded {
            requested: side.pow(3) * lattice.structure.basis_size() as u128,
            budget: max_side.pow(3) * lattice.structure.basis_size(),
        });
    }
    let c = lattice.central();
    let mut sum = 0.0;
    for p in lattice.neighbors() {
        let r = crystal::sub(p, &c);
        let d = coupling(&r, orientation, species, species)?;
        let r2 = crystal::dot(&r, &r);
        sum += match quantity {
            SumQuantity::DSquared => d * d,
            SumQuantity::DSquaredRSquared => d * d * r2,
            SumQuantity::DiffusionSum => std::f64::consts::FRAC_PI_4 * d * d * r2,
        };
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClosedFormCase {
    /// t1 in h
    UniformDecay { t1: f64 },
    /// No diffusion; shell and core relax independently.
    TwoCompartmentDecay { geometry: ParticleGeometry, t1_in: f64, t1_out: f64 },
    /// Long-time limit of a clamped build-up without relaxation.
    ClampedBuildUpLimit { p_shell: f64 },
}

/// Analytic volume-averaged traces for a uniform unit start (decays).
pub fn closed_form_trace(case: &ClosedFormCase, times: &[f64]) -> Result<Trace> {
    let (kind, values): (TraceKind, Vec<f64>) = match *case {
        ClosedFormCase::UniformDecay { t1 } => (TraceKind::Decay, times.iter().map(|t| (-t / (t1 * SECONDS_PER_HOUR)).exp()).collect()),
        ClosedFormCase::TwoCompartmentDecay { geometry, t1_in, t1_out } => {
            let phi = geometry.shell_volume_fraction();
            (
                TraceKind::Decay,
                times
                    .iter()
                    .map(|t| {
                        let th = t / SECONDS_PER_HOUR;
                        phi * (-th / t1_out).exp() + (1.0 - phi) * (-th / t1_in).exp()
                    })
                    .collect(),
            )
        }
        ClosedFormCase::ClampedBuildUpLimit { p_shell } => (TraceKind::BuildUp, vec![p_shell; times.len()]),
    };
    Trace::new(times.to_vec(), values, kind)
}
