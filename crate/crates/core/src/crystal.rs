//! Finite cubic crystals with random isotopic occupation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

pub type Vec3 = [f64; 3];

/// Default ceiling on the number of lattice positions generated at once.
pub const DEFAULT_SITE_BUDGET: usize = 20_000_000;

/// Statistical nearest-neighbour distance correction for random occupation.
pub const POISSON_NN_FACTOR: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    #[serde(alias = "sc")]
    SimpleCubic,
    Bcc,
    Fcc,
    #[serde(alias = "diamond")]
    DiamondCubic,
}

impl StructureKind {
    pub const ALL: [StructureKind; 4] = [
        StructureKind::SimpleCubic,
        StructureKind::Bcc,
        StructureKind::Fcc,
        StructureKind::DiamondCubic,
    ];

    /// Fractional basis of the conventional cell.
    pub fn basis(self) -> &'static [Vec3] {
        const SC: [Vec3; 1] = [[0.0, 0.0, 0.0]];
        const BCC: [Vec3; 2] = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.5]];
        const FCC: [Vec3; 4] = [
            [0.0, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.5, 0.0, 0.5],
            [0.0, 0.5, 0.5],
        ];
        const DIAMOND: [Vec3; 8] = [
            [0.0, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.5, 0.0, 0.5],
            [0.0, 0.5, 0.5],
            [0.25, 0.25, 0.25],
            [0.75, 0.75, 0.25],
            [0.75, 0.25, 0.75],
            [0.25, 0.75, 0.75],
        ];
        match self {
            StructureKind::SimpleCubic => &SC,
            StructureKind::Bcc => &BCC,
            StructureKind::Fcc => &FCC,
            StructureKind::DiamondCubic => &DIAMOND,
        }
    }

    /// Closest inter-site distance in units of the lattice constant.
    pub fn min_distance_factor(self) -> f64 {
        match self {
            StructureKind::SimpleCubic => 1.0,
            StructureKind::Bcc => 3f64.sqrt() / 2.0,
            StructureKind::Fcc => 1.0 / 2f64.sqrt(),
            StructureKind::DiamondCubic => 3f64.sqrt() / 4.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::SimpleCubic => "simple_cubic",
            StructureKind::Bcc => "bcc",
            StructureKind::Fcc => "fcc",
            StructureKind::DiamondCubic => "diamond_cubic",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "simple_cubic" | "sc" => Ok(StructureKind::SimpleCubic),
            "bcc" | "body_centered_cubic" => Ok(StructureKind::Bcc),
            "fcc" | "face_centered_cubic" => Ok(StructureKind::Fcc),
            "diamond_cubic" | "diamond" => Ok(StructureKind::DiamondCubic),
            other => Err(invalid("structure", format!("unknown structure `{other}`"))),
        }
    }
}

/// A cubic Bravais lattice (with basis) and its lattice constant in Å.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicStructure {
    pub kind: StructureKind,
    pub lattice_constant: f64,
}

impl CubicStructure {
    pub fn new(kind: StructureKind, lattice_constant: f64) -> Result<Self> {
        if !(lattice_constant > 0.0 && lattice_constant.is_finite()) {
            return Err(invalid("lattice_constant", "must be positive and finite"));
        }
        Ok(Self {
            kind,
            lattice_constant,
        })
    }

    /// Silicon: diamond cubic, a = 5.431 Å.
    pub fn silicon() -> Self {
        Self {
            kind: StructureKind::DiamondCubic,
            lattice_constant: 5.431,
        }
    }

    pub fn basis(&self) -> &'static [Vec3] {
        self.kind.basis()
    }

    pub fn basis_size(&self) -> usize {
        self.kind.basis().len()
    }

    /// Minimum inter-site distance in Å.
    pub fn min_distance(&self) -> f64 {
        self.kind.min_distance_factor() * self.lattice_constant
    }
}

/// Lattice positions of a `(2·extent+1)³` block of conventional cells.
///
/// Sites are ordered cell-major (x slowest), basis-minor. The central cell's
/// first basis site sits at the origin.
#[derive(Debug, Clone)]
pub struct LatticePositions {
    pub structure: CubicStructure,
    pub extent: usize,
    pub positions: Vec<Vec3>,
    pub central_index: usize,
}

pub fn build_lattice(structure: CubicStructure, extent: usize) -> Result<LatticePositions> {
    build_lattice_with_budget(structure, extent, DEFAULT_SITE_BUDGET)
}

pub fn build_lattice_with_budget(
    structure: CubicStructure,
    extent: usize,
    budget: usize,
) -> Result<LatticePositions> {
    let side = 2 * extent as u128 + 1;
    let count = side * side * side * structure.basis_size() as u128;
    if count > budget as u128 {
        return Err(Error::SiteBudgetExceeded {
            requested: count,
            budget,
        });
    }
    let a = structure.lattice_constant;
    let ext = extent as i64;
    let basis = structure.basis();
    let mut positions = Vec::with_capacity(count as usize);
    for i in -ext..=ext {
        for j in -ext..=ext {
            for k in -ext..=ext {
                for b in basis {
                    positions.push([
                        (i as f64 + b[0]) * a,
                        (j as f64 + b[1]) * a,
                        (k as f64 + b[2]) * a,
                    ]);
                }
            }
        }
    }
    let side = side as usize;
    let central_cell = (extent * side + extent) * side + extent;
    Ok(LatticePositions {
        structure,
        extent,
        positions,
        central_index: central_cell * basis.len(),
    })
}

impl LatticePositions {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Radius of the sphere inscribed in the box, in Å.
    pub fn inscribed_radius(&self) -> f64 {
        self.extent as f64 * self.structure.lattice_constant
    }
}

/// Bernoulli occupation of every non-central site.
///
/// One uniform draw is consumed per non-central site in site order, so any
/// caller that walks the same positions with the same seed sees the same
/// realization.
pub fn occupancy_mask(n_sites: usize, central_index: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let mut rng = rng::stream(seed);
    (0..n_sites)
        .map(|i| {
            if i == central_index {
                true
            } else {
                rng.random::<f64>() < fraction
            }
        })
        .collect()
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(invalid("abundance", format!("{fraction} is outside (0, 1]")))
    }
}

/// One random isotopic realization of a finite crystal.
#[derive(Debug, Clone)]
pub struct OccupiedLattice {
    pub structure: CubicStructure,
    pub extent: usize,
    pub abundance: f64,
    pub seed: u64,
    /// Cartesian positions (Å) of occupied sites, in lattice order.
    pub sites: Vec<Vec3>,
    pub central_index: usize,
}

pub fn occupy(lattice: &LatticePositions, fraction: f64, seed: u64) -> Result<OccupiedLattice> {
    check_fraction(fraction)?;
    let mask = occupancy_mask(lattice.len(), lattice.central_index, fraction, seed);
    let mut sites = Vec::new();
    let mut central_index = 0;
    for (i, (&keep, p)) in mask.iter().zip(&lattice.positions).enumerate() {
        if keep {
            if i == lattice.central_index {
                central_index = sites.len();
            }
            sites.push(*p);
        }
    }
    Ok(OccupiedLattice {
        structure: lattice.structure,
        extent: lattice.extent,
        abundance: fraction,
        seed,
        sites,
        central_index,
    })
}

impl OccupiedLattice {
    pub fn generate(structure: CubicStructure, extent: usize, fraction: f64, seed: u64) -> Result<Self> {
        occupy(&build_lattice(structure, extent)?, fraction, seed)
    }

    pub fn central(&self) -> Vec3 {
        self.sites[self.central_index]
    }

    /// Occupied sites other than the central one.
    pub fn neighbors(&self) -> impl Iterator<Item = &Vec3> + '_ {
        self.sites
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.central_index)
            .map(|(_, p)| p)
    }
}

/// Magnetic-field direction in the crystal frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub alpha: f64,
    pub beta: f64,
}

impl Orientation {
    /// Field along the crystal z axis, the (100) direction.
    pub const Z: Orientation = Orientation {
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha: alpha.rem_euclid(2.0 * PI),
            beta: beta.clamp(0.0, PI),
        }
    }

    /// Unit vector of the field direction.
    pub fn direction(&self) -> Vec3 {
        let (sb, cb) = self.beta.sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        [sb * ca, sb * sa, cb]
    }
}

/// A ZCW powder-averaging set.
#[derive(Debug, Clone)]
pub struct ZcwSet {
    pub requested: usize,
    pub orientations: Vec<Orientation>,
    pub weights: Vec<f64>,
}

impl ZcwSet {
    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Orientation, f64)> + '_ {
        self.orientations.iter().zip(self.weights.iter().copied())
    }
}

/// Fibonacci numbers `F_1 = F_2 = 1, ...` up to the first one ≥ `limit`.
fn fibonacci_upto(limit: usize) -> Vec<usize> {
    let mut fib = vec![1usize, 1];
    while *fib.last().unwrap() < limit {
        let n = fib.len();
        fib.push(fib[n - 1] + fib[n - 2]);
    }
    fib
}

/// Zaremba–Conroy–Wolfsberg orientations over the full sphere.
///
/// Admissible set sizes are Fibonacci numbers `N = F_{M+2}`, with the
/// generator `F_M`. A request between two admissible sizes takes the closer
/// one (the larger on a tie); `requested` keeps the original number.
pub fn zcw_orientations(n: usize) -> ZcwSet {
    let n = n.max(1);
    let fib = fibonacci_upto(n);
    // fib[k] holds F_{k+1}
    let upper = fib.len() - 1;
    let idx = if fib[upper] == n || upper == 0 {
        upper
    } else {
        let lower = upper - 1;
        if n - fib[lower] < fib[upper] - n {
            lower
        } else {
            upper
        }
    };
    let size = fib[idx];
    let generator = if idx >= 2 { fib[idx - 2] } else { 1 };
    let inv = 1.0 / size as f64;
    let orientations = (0..size)
        .map(|j| {
            let alpha = 2.0 * PI * ((j * generator) % size) as f64 * inv;
            let beta = (2.0 * (j as f64 * inv) - 1.0).clamp(-1.0, 1.0).acos();
            Orientation { alpha, beta }
        })
        .collect();
    ZcwSet {
        requested: n,
        orientations,
        weights: vec![inv; size],
    }
}

/// Statistical nearest-neighbour distance of a diluted lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnDistance {
    /// Å
    pub value: f64,
    pub clamped: bool,
}

/// `(f · basis / a³)^(-1/3)`, optionally scaled by [`POISSON_NN_FACTOR`] and
/// clamped to the closest inter-site distance.
pub fn nn_distance(structure: &CubicStructure, fraction: f64, poisson_correction: bool) -> Result<NnDistance> {
    check_fraction(fraction)?;
    let a = structure.lattice_constant;
    let density = fraction * structure.basis_size() as f64 / (a * a * a);
    let mut value = density.powf(-1.0 / 3.0);
    if poisson_correction {
        value *= POISSON_NN_FACTOR;
    }
    let floor = structure.min_distance();
    if value < floor * (1.0 - 1e-12) {
        Ok(NnDistance {
            value: floor,
            clamped: true,
        })
    } else {
        Ok(NnDistance {
            value,
            clamped: false,
        })
    }
}


pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
