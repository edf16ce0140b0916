use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spindiff::crystal::{CubicStructure, StructureKind};
use spindiff::dipolar::{Ensemble, SpinSpecies};
use spindiff::diffusion::{CouplingUnit, SweepConfig};
use spindiff::linewidth::{Averaging, LineWidthSettings, TargetWeighting};
use spindiff::particle::{GridSpec, LogAxis, ParticleGeometry, TraceKind};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub structures: Vec<StructureKind>,
    /// Å
    pub lattice_constant: f64,
    /// rad s⁻¹ T⁻¹
    pub gamma: f64,
    /// percent
    pub abundances: Vec<f64>,
    pub threshold: f64,
    pub coupling_unit: CouplingUnit,
    pub poisson_correction: bool,
    pub ensemble: EnsembleConfig,
    pub linewidth: LineWidthConfig,
    pub particle: ParticleConfig,
    pub calibration: CalibrationConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            structures: vec![StructureKind::DiamondCubic],
            lattice_constant: 5.431,
            gamma: SpinSpecies::SI29.gamma,
            abundances: spindiff::dipolar::ABUNDANCE_GRID.iter().map(|f| f * 100.0).collect(),
            threshold: 0.95,
            coupling_unit: CouplingUnit::Hertz,
            poisson_correction: false,
            ensemble: EnsembleConfig::default(),
            linewidth: LineWidthConfig::default(),
            particle: ParticleConfig::default(),
            calibration: CalibrationConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// cells on each side of the central cell; profile default per structure when unset
    pub extent: Option<usize>,
    pub lattices: Option<usize>,
    pub orientations: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineWidthConfig {
    pub averaging: Averaging,
    pub weighting: TargetWeighting,
    pub background_factor: f64,
}

impl Default for LineWidthConfig {
    fn default() -> Self {
        Self {
            averaging: Averaging::WidthPerConfiguration,
            weighting: TargetWeighting::Uniform,
            background_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DSource {
    Explicit,
    NearestNeighbor,
    LatticeSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleConfig {
    /// nm
    pub radius: f64,
    pub shell: f64,
    pub elements: usize,
    pub d_source: DSource,
    /// nm²/s, used when `d_source = "explicit"`
    pub d: f64,
    /// percent, for computed D
    pub abundance: f64,
    pub kind: TraceKind,
    /// h
    pub t1_in: f64,
    pub t1_out: f64,
    /// clamp value for build-ups, start value for decays
    pub polarization: f64,
    /// h
    pub duration: f64,
    pub step: f64,
    pub grid: GridConfig,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            radius: 10.0,
            shell: 3.0,
            elements: 1000,
            d_source: DSource::Explicit,
            d: 3.6,
            abundance: 4.7,
            kind: TraceKind::Decay,
            t1_in: 3.0,
            t1_out: 0.3,
            polarization: 1.0,
            duration: 6.0,
            step: 1.0 / 6.0,
            grid: GridConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// h
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub refine: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            min: g.t1_in.min,
            max: g.t1_in.max,
            count: g.t1_in.count,
            refine: g.refine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub systems: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { systems: 200 }
    }
}

/// Input locations; output location is a flag, not part of the hash.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub trace: Option<PathBuf>,
    pub sweeps: Vec<PathBuf>,
}

/// Config with the profile and flags applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub config: RunConfig,
    pub profile: &'static str,
    pub extents: Vec<(StructureKind, usize)>,
    pub lattices: usize,
    pub orientations: usize,
}

fn desk_extent(kind: StructureKind) -> usize {
    match kind {
        StructureKind::DiamondCubic => 15,
        StructureKind::Fcc => 22,
        StructureKind::Bcc => 28,
        StructureKind::SimpleCubic => 36,
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<RunConfig, Failure> {
    toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))
}

fn field(name: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("field `{name}`: {reason}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.structures.is_empty() {
            return Err(field("structures", "must list at least one structure"));
        }
        if !(self.lattice_constant > 0.0) {
            return Err(field("lattice_constant", "must be positive"));
        }
        if !(self.gamma != 0.0 && self.gamma.is_finite()) {
            return Err(field("gamma", "must be non-zero"));
        }
        if self.abundances.is_empty() {
            return Err(field("abundances", "must not be empty"));
        }
        for f in &self.abundances {
            if !(*f > 0.0 && *f <= 100.0) {
                return Err(field("abundances", format!("{f} is outside (0, 100]")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(field("threshold", "must lie in (0, 1)"));
        }
        if !(self.linewidth.background_factor >= 1.0) {
            return Err(field("linewidth.background_factor", "must be at least 1"));
        }
        let p = &self.particle;
        ParticleGeometry::new(p.radius, p.shell, p.elements).map_err(|e| field("particle", e))?;
        if !(p.d >= 0.0) {
            return Err(field("particle.d", "must be non-negative"));
        }
        if !(p.t1_in > 0.0 && p.t1_out > 0.0) {
            return Err(field("particle.t1_in/t1_out", "must be positive"));
        }
        if !(p.duration > 0.0 && p.step > 0.0 && p.step <= p.duration) {
            return Err(field("particle.duration/step", "need 0 < step ≤ duration"));
        }
        if !(p.grid.min > 0.0 && p.grid.max >= p.grid.min && p.grid.count >= 1) {
            return Err(field("particle.grid", "need 0 < min ≤ max and count ≥ 1"));
        }
        if self.calibration.systems == 0 {
            return Err(field("calibration.systems", "must be positive"));
        }
        if let Some(e) = self.ensemble.extent {
            if e == 0 {
                return Err(field("ensemble.extent", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn resolve(mut self, profile: Profile, seed: Option<u64>) -> Result<Resolved, Failure> {
        if let Some(s) = seed {
            self.ensemble.seed = s;
        }
        self.validate()?;
        let (lattices, orientations, scale) = match profile {
            Profile::Desk => (25, 144, 1),
            Profile::Paper => (100, 1597, 2),
        };
        let extents = self
            .structures
            .iter()
            .map(|&k| (k, self.ensemble.extent.unwrap_or(desk_extent(k) * scale)))
            .collect();
        Ok(Resolved {
            lattices: self.ensemble.lattices.unwrap_or(lattices),
            orientations: self.ensemble.orientations.unwrap_or(orientations),
            profile: match profile {
                Profile::Desk => "desk",
                Profile::Paper => "paper",
            },
            extents,
            config: self,
        })
    }
}

impl Resolved {
    /// SHA-256 over the canonical JSON form of the resolved settings.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.config.ensemble.seed
    }

    pub fn structure(&self, kind: StructureKind) -> Result<CubicStructure, Failure> {
        CubicStructure::new(kind, self.config.lattice_constant).map_err(|e| field("lattice_constant", e))
    }

    pub fn ensemble(&self, kind: StructureKind) -> Ensemble {
        let extent = self.extents.iter().find(|(k, _)| *k == kind).map(|e| e.1).unwrap_or(15);
        Ensemble {
            extent,
            n_lattices: self.lattices,
            seed: self.seed(),
        }
    }

    pub fn species(&self) -> SpinSpecies {
        SpinSpecies { gamma: self.config.gamma }
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.config.abundances.iter().map(|f| f / 100.0).collect()
    }

    pub fn linewidth(&self, kind: StructureKind) -> LineWidthSettings {
        let mut s = LineWidthSettings::new(self.ensemble(kind), self.orientations, self.species());
        s.averaging = self.config.linewidth.averaging;
        s.weighting = self.config.linewidth.weighting;
        s.background_factor = self.config.linewidth.background_factor;
        s
    }

    pub fn sweep(&self, kind: StructureKind) -> SweepConfig {
        let mut s = SweepConfig::new(self.linewidth(kind));
        s.threshold = self.config.threshold;
        s.unit = self.config.coupling_unit;
        s.poisson_correction = self.config.poisson_correction;
        s
    }

    pub fn geometry(&self) -> ParticleGeometry {
        let p = &self.config.particle;
        ParticleGeometry {
            radius: p.radius,
            shell_thickness: p.shell,
            n_elements: p.elements,
        }
    }

    pub fn grid(&self) -> GridSpec {
        let g = &self.config.particle.grid;
        let axis = LogAxis {
            min: g.min,
            max: g.max,
            count: g.count,
        };
        GridSpec {
            t1_in: axis,
            t1_out: axis,
            refine: g.refine,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let e = parse("structures = [\"diamond\"]\nbogus = 1\n").unwrap_err();
        let Failure::Config(m) = e else { panic!() };
        assert!(m.contains("bogus"), "{m}");
        assert!(m.contains("line 2"), "{m}");
    }

    #[test]
    fn nested_sections() {
        let c = parse("[ensemble]\nextent = 4\nseed = 9\n[particle]\nradius = 25.0\nkind = \"build_up\"\n").unwrap();
        assert_eq!(c.ensemble.extent, Some(4));
        assert_eq!(c.particle.radius, 25.0);
        assert_eq!(c.particle.kind, TraceKind::BuildUp);
    }

    #[test]
    fn field_level_validation() {
        let c = parse("threshold = 1.5\n").unwrap();
        let Err(Failure::Config(m)) = c.validate() else { panic!() };
        assert!(m.contains("threshold"));
    }

    #[test]
    fn hash_tracks_meaningful_fields() {
        let base = RunConfig::default().resolve(Profile::Desk, None).unwrap();
        let same = parse("# comment only\n").unwrap().resolve(Profile::Desk, None).unwrap();
        assert_eq!(base.hash(), same.hash());
        let other = RunConfig::default().resolve(Profile::Desk, Some(2)).unwrap();
        assert_ne!(base.hash(), other.hash());
        let paper = RunConfig::default().resolve(Profile::Paper, None).unwrap();
        assert_ne!(base.hash(), paper.hash());
    }

    #[test]
    fn profiles() {
        let d = RunConfig::default().resolve(Profile::Desk, None).unwrap();
        assert_eq!((d.lattices, d.orientations), (25, 144));
        assert_eq!(d.ensemble(StructureKind::DiamondCubic).extent, 15);
        let p = RunConfig::default().resolve(Profile::Paper, None).unwrap();
        assert_eq!((p.lattices, p.orientations), (100, 1597));
        assert_eq!(p.ensemble(StructureKind::DiamondCubic).extent, 30);
    }
}
