mod common;

use approx::assert_relative_eq;

use spindiff::crystal::{CubicStructure, StructureKind};
use spindiff::diffusion::{abundance_sweep, CouplingUnit};
use spindiff::dipolar::SpinSpecies;
use spindiff::scaling::{fit_power_law, sweep_points, ReducedUnits, ScalingQuantity};

const FRACTIONS: [f64; 3] = [0.3, 0.5, 0.8];

fn small(unit: CouplingUnit, species: SpinSpecies) -> spindiff::diffusion::SweepConfig {
    common::sweep_config(6, 3, 20, species, unit)
}

#[test]
fn sweep_is_deterministic() {
    let cfg = small(CouplingUnit::Hertz, SpinSpecies::SI29);
    let a = abundance_sweep(CubicStructure::silicon(), &FRACTIONS, &cfg).unwrap();
    let b = abundance_sweep(CubicStructure::silicon(), &FRACTIONS, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    assert_eq!(a.points.len(), FRACTIONS.len());
}

#[test]
fn widths_and_diffusion_grow_with_abundance() {
    let t = abundance_sweep(CubicStructure::silicon(), &FRACTIONS, &small(CouplingUnit::Hertz, SpinSpecies::SI29)).unwrap();
    for w in t.points.windows(2) {
        assert!(w[1].line.fwhm_zq > w[0].line.fwhm_zq);
        assert!(w[1].line.fwhm_sq > w[0].line.fwhm_sq);
        assert!(w[1].lattice_sum.value > w[0].lattice_sum.value);
    }
}

#[test]
fn physical_sweep_is_a_rescaled_reduced_sweep() {
    let species = SpinSpecies::SI29;
    let a = 5.431;
    let reduced = abundance_sweep(
        CubicStructure::new(StructureKind::DiamondCubic, 1.0).unwrap(),
        &FRACTIONS,
        &small(CouplingUnit::Angular, SpinSpecies::REDUCED),
    )
    .unwrap();
    let physical = abundance_sweep(CubicStructure::silicon(), &FRACTIONS, &small(CouplingUnit::Angular, species)).unwrap();
    let units = ReducedUnits::from_physical(species.gamma, a);
    let (zq_r, d_r) = sweep_points(&reduced);
    let (zq_p, d_p) = sweep_points(&physical);
    for k in 0..FRACTIONS.len() {
        assert_relative_eq!(zq_p[k].1, zq_r[k].1 * units.prefactor(ScalingQuantity::ZqWidth), max_relative = 1e-9);
        // Σ d² r² carries γ⁴/a⁴, not the γ²/a² of the D/p0 law
        let g2a2 = units.prefactor(ScalingQuantity::DOverP0);
        assert_relative_eq!(d_p[k].1, d_r[k].1 * g2a2 * g2a2, max_relative = 1e-9);
    }
    let fr = fit_power_law(&zq_r, ScalingQuantity::ZqWidth, StructureKind::DiamondCubic, ReducedUnits::UNIT).unwrap();
    let fp = fit_power_law(&zq_p, ScalingQuantity::ZqWidth, StructureKind::DiamondCubic, units).unwrap();
    assert_relative_eq!(fr.u, fp.u, max_relative = 1e-9);
    assert_relative_eq!(fr.m, fp.m, max_relative = 1e-9);
}
