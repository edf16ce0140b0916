#![allow(dead_code)]

use spindiff::crystal::{CubicStructure, StructureKind};
use spindiff::dipolar::{Ensemble, SpinSpecies};
use spindiff::diffusion::{CouplingUnit, SweepConfig};
use spindiff::linewidth::LineWidthSettings;

pub const DESK_LATTICES: usize = 25;
pub const DESK_ORIENTATIONS: usize = 144;
pub const PAPER_LATTICES: usize = 100;
pub const PAPER_ORIENTATIONS: usize = 1597;
pub const SEED: u64 = 0;

/// Smallest box per structure that holds three d² cut-offs at every grid abundance.
pub fn desk_extent(kind: StructureKind) -> usize {
    match kind {
        StructureKind::DiamondCubic => 15,
        StructureKind::Fcc => 22,
        StructureKind::Bcc => 28,
        StructureKind::SimpleCubic => 36,
    }
}

pub fn sweep_config(extent: usize, lattices: usize, orientations: usize, species: SpinSpecies, unit: CouplingUnit) -> SweepConfig {
    let ens = Ensemble {
        extent,
        n_lattices: lattices,
        seed: SEED,
    };
    let mut c = SweepConfig::new(LineWidthSettings::new(ens, orientations, species));
    c.unit = unit;
    c
}

pub fn silicon_desk() -> (CubicStructure, SweepConfig) {
    (
        CubicStructure::silicon(),
        sweep_config(15, DESK_LATTICES, DESK_ORIENTATIONS, SpinSpecies::SI29, CouplingUnit::Hertz),
    )
}

pub fn reduced(kind: StructureKind) -> (CubicStructure, SweepConfig) {
    (
        CubicStructure::new(kind, 1.0).unwrap(),
        sweep_config(desk_extent(kind), DESK_LATTICES, DESK_ORIENTATIONS, SpinSpecies::REDUCED, CouplingUnit::Angular),
    )
}
