//! Secular dipolar couplings, cumulative coupling profiles and cut-off radii.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crystal::{self, build_lattice, occupancy_mask, CubicStructure, OccupiedLattice, Orientation, Vec3};
use crate::error::{invalid, Error, Result};
use crate::{par, rng};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// μ0/4π, T·m/A.
pub const MU0_OVER_4PI: f64 = 1e-7;

/// Abundance grid (fractions) on which cut-off tables are tabulated.
pub const ABUNDANCE_GRID: [f64; 10] = [0.005, 0.01, 0.02, 0.047, 0.10, 0.20, 0.30, 0.50, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSpecies {
    /// rad·s⁻¹·T⁻¹
    pub gamma: f64,
}

impl SpinSpecies {
    pub const SI29: SpinSpecies = SpinSpecies { gamma: -53.190e6 };
    /// γ = 10⁶ rad·s⁻¹·T⁻¹, the unit of the reduced scaling laws.
    pub const REDUCED: SpinSpecies = SpinSpecies { gamma: 1e6 };

    pub fn new(gamma: f64) -> Result<Self> {
        if gamma == 0.0 || !gamma.is_finite() {
            return Err(invalid("gamma", "must be finite and non-zero"));
        }
        Ok(Self { gamma })
    }

    pub fn spin(&self) -> f64 {
        0.5
    }
}

/// Coupling strength in Hz of two spins one Ångström apart along the field.
pub fn coupling_constant(si: SpinSpecies, sj: SpinSpecies) -> f64 {
    MU0_OVER_4PI * HBAR * si.gamma * sj.gamma / 1e-30 / (2.0 * PI)
}

/// `(3cos²θ − 1)/2` for displacement `r` and unit field direction `n`.
pub(crate) fn p2(r: &Vec3, r2: f64, n: &Vec3) -> f64 {
    let c = crystal::dot(r, n);
    1.5 * c * c / r2 - 0.5
}

/// Secular dipolar coupling d_ij in Hz, sign preserved.
pub fn coupling(r_vec: &Vec3, orientation: &Orientation, si: SpinSpecies, sj: SpinSpecies) -> Result<f64> {
    let r2 = crystal::dot(r_vec, r_vec);
    if r2 == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let n = orientation.direction();
    Ok(coupling_constant(si, sj) * p2(r_vec, r2, &n) / (r2 * r2.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// d²
    DSquared,
    /// d²·r²
    DSquaredRSquared,
}

impl WeightKind {
    pub const ALL: [WeightKind; 2] = [WeightKind::DSquared, WeightKind::DSquaredRSquared];

    pub fn name(self) -> &'static str {
        match self {
            WeightKind::DSquared => "d2",
            WeightKind::DSquaredRSquared => "d2r2",
        }
    }

    /// Weight of one site up to a constant factor.
    fn geometric(self, p2: f64, r2: f64) -> f64 {
        let g = p2 * p2 / (r2 * r2);
        match self {
            WeightKind::DSquared => g / r2,
            WeightKind::DSquaredRSquared => g,
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d2" | "d_squared" => Ok(WeightKind::DSquared),
            "d2r2" | "d_squared_r_squared" => Ok(WeightKind::DSquaredRSquared),
            other => Err(invalid("weight_kind", format!("unknown weight `{other}`"))),
        }
    }
}

/// Monotone enclosed-fraction curve, one point per distinct distance.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingProfile {
    /// Å, strictly increasing, first entry 0
    pub radii: Vec<f64>,
    /// starts at 0, ends at 1
    pub fractions: Vec<f64>,
}

impl CouplingProfile {
    /// Enclosed fraction at radius `r` (inclusive).
    pub fn fraction_within(&self, r: f64) -> f64 {
        let idx = self.radii.partition_point(|&x| x <= r * (1.0 + 1e-12));
        if idx == 0 {
            0.0
        } else {
            self.fractions[idx - 1]
        }
    }
}

/// Cumulative d² or d²r² profile around the central spin of one lattice.
pub fn cumulative_profile(lattice: &OccupiedLattice, kind: WeightKind, orientation: &Orientation) -> Result<CouplingProfile> {
    if lattice.sites.len() < 2 {
        return Err(Error::EmptyProfile);
    }
    let n = orientation.direction();
    let c = lattice.central();
    let mut items: Vec<(f64, f64)> = lattice
        .neighbors()
        .map(|p| {
            let r = crystal::sub(p, &c);
            let r2 = crystal::dot(&r, &r);
            (r2, kind.geometric(p2(&r, r2, &n), r2))
        })
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = items.iter().map(|x| x.1).sum();
    if total <= 0.0 {
        return Err(Error::EmptyProfile);
    }
    let mut radii = vec![0.0];
    let mut fractions = vec![0.0];
    let mut acc = 0.0;
    let mut i = 0;
    while i < items.len() {
        let r2 = items[i].0;
        while i < items.len() && items[i].0 <= r2 * (1.0 + 1e-12) {
            acc += items[i].1;
            i += 1;
        }
        radii.push(r2.sqrt());
        fractions.push(acc / total);
    }
    *fractions.last_mut().unwrap() = 1.0;
    Ok(CouplingProfile { radii, fractions })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingCutoff {
    pub structure: CubicStructure,
    pub abundance: f64,
    pub weight_kind: WeightKind,
    pub threshold: f64,
    /// Å
    pub radius: f64,
    pub contained_fraction: f64,
}

/// Ensemble settings shared by the lattice kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub extent: usize,
    pub n_lattices: usize,
    pub seed: u64,
}

impl Ensemble {
    pub fn validate(&self) -> Result<()> {
        if self.n_lattices == 0 {
            return Err(invalid("n_lattices", "must be at least 1"));
        }
        if self.extent == 0 {
            return Err(invalid("extent", "must be at least 1"));
        }
        Ok(())
    }

    pub fn member_seed(&self, index: usize, fraction: f64) -> u64 {
        rng::member_seed(self.seed, index as u64, fraction)
    }
}

/// Lattice positions with their squared distance from the origin binned on
/// the quarter-lattice-constant grid shared by every supported basis.
pub(crate) struct ShellIndex {
    pub positions: Vec<Vec3>,
    pub central_index: usize,
    pub shell: Vec<u32>,
    pub n_shells: usize,
}

impl ShellIndex {
    pub fn new(structure: CubicStructure, extent: usize) -> Result<Self> {
        let lattice = build_lattice(structure, extent)?;
        let q = 4.0 / structure.lattice_constant;
        let shell: Vec<u32> = lattice
            .positions
            .iter()
            .map(|p| {
                let n2: i64 = p.iter().map(|x| (x * q).round() as i64).map(|v| v * v).sum();
                n2 as u32
            })
            .collect();
        let n_shells = shell.iter().copied().max().unwrap_or(0) as usize + 1;
        Ok(Self {
            positions: lattice.positions,
            central_index: lattice.central_index,
            shell,
            n_shells,
        })
    }

    pub fn shell_radius(&self, s: usize, a: f64) -> f64 {
        (s as f64).sqrt() * a / 4.0
    }
}

/// Mean cumulative profile over an ensemble, evaluated on lattice shells.
pub fn ensemble_profile(
    structure: CubicStructure,
    fraction: f64,
    kind: WeightKind,
    ensemble: &Ensemble,
    orientation: &Orientation,
) -> Result<CouplingProfile> {
    ensemble.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("abundance", format!("{fraction} is outside (0, 1]")));
    }
    let index = ShellIndex::new(structure, ensemble.extent)?;
    let n = orientation.direction();
    let weights: Vec<f64> = index
        .positions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if i == index.central_index {
                0.0
            } else {
                let r2 = crystal::dot(r, r);
                kind.geometric(p2(r, r2, &n), r2)
            }
        })
        .collect();
    let per_lattice: Vec<Option<Vec<f64>>> = par::map_indexed(ensemble.n_lattices, |m| {
        let mask = occupancy_mask(index.positions.len(), index.central_index, fraction, ensemble.member_seed(m, fraction));
        let mut bins = vec![0.0; index.n_shells];
        for ((&keep, &s), &w) in mask.iter().zip(&index.shell).zip(&weights) {
            if keep {
                bins[s as usize] += w;
            }
        }
        let total: f64 = bins.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut acc = 0.0;
        for b in bins.iter_mut() {
            acc += *b;
            *b = acc / total;
        }
        Some(bins)
    });
    let mut mean = vec![0.0; index.n_shells];
    let mut used = 0usize;
    for bins in per_lattice.into_iter().flatten() {
        for (m, b) in mean.iter_mut().zip(bins) {
            *m += b;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::EmptyProfile);
    }
    let mut occupied = vec![false; index.n_shells];
    for &s in &index.shell {
        occupied[s as usize] = true;
    }
    let mut radii = Vec::new();
    let mut fractions = Vec::new();
    for (s, &m) in mean.iter().enumerate() {
        if occupied[s] {
            radii.push(index.shell_radius(s, structure.lattice_constant));
            fractions.push(m / used as f64);
        }
    }
    Ok(CouplingProfile { radii, fractions })
}

/// Smallest radius whose ensemble-mean enclosed fraction reaches `threshold`.
pub fn cutoff_radius(
    structure: CubicStructure,
    fraction: f64,
    kind: WeightKind,
    ensemble: &Ensemble,
    threshold: f64,
) -> Result<CouplingCutoff> {
    cutoff_radius_oriented(structure, fraction, kind, ensemble, threshold, &Orientation::Z)
}

/// [`cutoff_radius`] with the field along an arbitrary direction.
pub fn cutoff_radius_oriented(
    structure: CubicStructure,
    fraction: f64,
    kind: WeightKind,
    ensemble: &Ensemble,
    threshold: f64,
    orientation: &Orientation,
) -> Result<CouplingCutoff> {
    if !(threshold > 0.0 && threshold < 1.0) {
        let limit_angstrom = ensemble.extent as f64 * structure.lattice_constant;
        if threshold >= 1.0 {
            return Err(Error::BoxTooSmall {
                threshold,
                limit_angstrom,
            });
        }
        return Err(invalid("threshold", format!("{threshold} is outside (0, 1)")));
    }
    let profile = ensemble_profile(structure, fraction, kind, ensemble, orientation)?;
    let limit = ensemble.extent as f64 * structure.lattice_constant;
    let hit = profile.fractions.iter().position(|&x| x >= threshold);
    match hit {
        Some(i) if profile.radii[i] <= limit * (1.0 + 1e-12) => Ok(CouplingCutoff {
            structure,
            abundance: fraction,
            weight_kind: kind,
            threshold,
            radius: profile.radii[i],
            contained_fraction: profile.fractions[i],
        }),
        _ => Err(Error::BoxTooSmall {
            threshold,
            limit_angstrom: limit,
        }),
    }
}

/// Cut-off radii cached per abundance grid point.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CutoffTable {
    pub entries: Vec<CouplingCutoff>,
}

impl CutoffTable {
    pub fn compute(
        structure: CubicStructure,
        grid: &[f64],
        kinds: &[WeightKind],
        ensemble: &Ensemble,
        threshold: f64,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(grid.len() * kinds.len());
        for &f in grid {
            for &kind in kinds {
                entries.push(cutoff_radius(structure, f, kind, ensemble, threshold)?);
            }
        }
        Ok(Self { entries })
    }

    /// Entry whose abundance is closest to `fraction` on a log scale.
    pub fn lookup(&self, fraction: f64, kind: WeightKind) -> Option<&CouplingCutoff> {
        self.entries
            .iter()
            .filter(|e| e.weight_kind == kind)
            .min_by(|a, b| {
                let da = (a.abundance.ln() - fraction.ln()).abs();
                let db = (b.abundance.ln() - fraction.ln()).abs();
                da.total_cmp(&db)
            })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "structure,abundance_percent,weight_kind,threshold,radius_angstrom,contained_fraction")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6}",
                e.structure.kind,
                e.abundance * 100.0,
                e.weight_kind,
                e.threshold,
                e.radius,
                e.contained_fraction
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::StructureKind;
    use approx::assert_relative_eq;

    fn si() -> CubicStructure {
        CubicStructure::new(StructureKind::DiamondCubic, 5.43).unwrap()
    }

    #[test]
    fn silicon_pair_along_field() {
        let d = coupling(&[0.0, 0.0, 5.43], &Orientation::Z, SpinSpecies::SI29, SpinSpecies::SI29).unwrap();
        assert!((d - 29.7).abs() < 0.05, "{d}");
    }

    #[test]
    fn magic_angle_and_perpendicular() {
        let s = SpinSpecies::SI29;
        let r = 4.0;
        let t = (1.0f64 / 3f64.sqrt()).acos();
        let d = coupling(&[r * t.sin(), 0.0, r * t.cos()], &Orientation::Z, s, s).unwrap();
        assert!(d.abs() < 1e-12);
        let par = coupling(&[0.0, 0.0, r], &Orientation::Z, s, s).unwrap();
        let perp = coupling(&[r, 0.0, 0.0], &Orientation::Z, s, s).unwrap();
        assert_relative_eq!(perp, -0.5 * par, epsilon = 1e-12);
    }

    #[test]
    fn zero_displacement_is_an_error() {
        let s = SpinSpecies::REDUCED;
        assert_eq!(coupling(&[0.0; 3], &Orientation::Z, s, s), Err(Error::ZeroDisplacement));
    }

    #[test]
    fn nearest_neighbour_in_diamond_is_at_magic_angle() {
        let s = SpinSpecies::SI29;
        let a = 5.43;
        let d = coupling(&[a / 4.0, a / 4.0, a / 4.0], &Orientation::Z, s, s).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn profile_ends_at_one_and_is_monotone() {
        let lat = OccupiedLattice::generate(si(), 4, 0.3, 5).unwrap();
        for kind in WeightKind::ALL {
            let p = cumulative_profile(&lat, kind, &Orientation::Z).unwrap();
            assert_eq!(*p.fractions.last().unwrap(), 1.0);
            assert_eq!(p.fractions[0], 0.0);
            assert!(p.fractions.windows(2).all(|w| w[1] >= w[0]));
            assert!(p.radii.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn single_spin_profile_is_empty() {
        let lat = OccupiedLattice::generate(si(), 0, 1e-9, 1).unwrap();
        assert_eq!(lat.sites.len(), 1);
        assert_eq!(cumulative_profile(&lat, WeightKind::DSquared, &Orientation::Z), Err(Error::EmptyProfile));
    }

    #[test]
    fn ensemble_profile_matches_single_lattice_profiles() {
        let ens = Ensemble {
            extent: 3,
            n_lattices: 3,
            seed: 11,
        };
        let f = 0.4;
        let mean = ensemble_profile(si(), f, WeightKind::DSquared, &ens, &Orientation::Z).unwrap();
        for (r, m) in mean.radii.iter().zip(&mean.fractions).step_by(7) {
            let mut acc = 0.0;
            for i in 0..3 {
                let lat = OccupiedLattice::generate(si(), 3, f, ens.member_seed(i, f)).unwrap();
                acc += cumulative_profile(&lat, WeightKind::DSquared, &Orientation::Z)
                    .unwrap()
                    .fraction_within(*r);
            }
            assert!((acc / 3.0 - m).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn threshold_one_is_box_too_small() {
        let ens = Ensemble {
            extent: 3,
            n_lattices: 2,
            seed: 1,
        };
        let err = cutoff_radius(si(), 0.5, WeightKind::DSquared, &ens, 1.0).unwrap_err();
        assert!(matches!(err, Error::BoxTooSmall { .. }));
    }

    #[test]
    fn cutoff_contains_threshold() {
        let ens = Ensemble {
            extent: 6,
            n_lattices: 4,
            seed: 3,
        };
        let c = cutoff_radius(si(), 0.3, WeightKind::DSquared, &ens, 0.95).unwrap();
        assert!(c.contained_fraction >= 0.95);
        assert!(c.radius <= 6.0 * 5.43);
    }

    #[test]
    fn table_lookup_is_nearest_in_log() {
        let mk = |f: f64, r: f64| CouplingCutoff {
            structure: si(),
            abundance: f,
            weight_kind: WeightKind::DSquared,
            threshold: 0.95,
            radius: r,
            contained_fraction: 0.95,
        };
        let t = CutoffTable {
            entries: vec![mk(0.02, 3.0), mk(0.047, 2.0), mk(0.1, 1.0)],
        };
        assert_eq!(t.lookup(0.05, WeightKind::DSquared).unwrap().radius, 2.0);
        assert_eq!(t.lookup(0.08, WeightKind::DSquared).unwrap().radius, 1.0);
        assert!(t.lookup(0.05, WeightKind::DSquaredRSquared).is_none());
    }
}
