mod config;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spindiff::diffusion::{abundance_sweep, sweep_point, DiffusionMethod};
use spindiff::dipolar::{cutoff_radius, CutoffTable, WeightKind};
use spindiff::linewidth::powder_linewidths;
use spindiff::oracle::{calibrate, DipolarTerms};
use spindiff::particle::{
    fit_t1, simulate_buildup, simulate_decay, FitModel, InitialCondition, Relaxation, TraceKind, SECONDS_PER_HOUR,
};
use spindiff::scaling::{fit_power_law, write_table, ReducedUnits, ScalingQuantity};

use config::{DSource, Profile, Resolved};
use output::OutDir;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<spindiff::Error> for Failure {
    fn from(e: spindiff::Error) -> Self {
        match e {
            spindiff::Error::InvalidParameter { .. } | spindiff::Error::TooManySpins { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "spindiff", version, about = "Spin-diffusion coefficients and core-shell particle fits")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,
    /// Overrides `ensemble.seed`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// d² and d²r² cut-off radii over the abundance grid
    Cutoffs,
    /// Powder SQ/ZQ line widths over the abundance grid
    Linewidth,
    /// Nearest-neighbour and lattice-sum D over the abundance grid
    Diffusion,
    /// Power-law fits from diffusion CSVs
    Scaling {
        /// Diffusion CSVs (default: `paths.sweeps`)
        sweeps: Vec<PathBuf>,
    },
    /// Core-shell particle simulation and T1 fits
    Particle {
        #[command(subcommand)]
        action: ParticleAction,
    },
    /// Moment constants from exact three-spin spectra
    Calibrate,
}

#[derive(Subcommand)]
enum ParticleAction {
    /// Simulate the configured trace
    Sim,
    /// Grid-search T1,in and T1,out against a measured trace
    Fit {
        /// CSV with `time_s,signal[,normalization]` (default: `paths.trace`)
        trace: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spindiff: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let resolved = config::load(cli.common.config.as_deref())?.resolve(cli.common.profile, cli.common.seed)?;
    let mut out = OutDir::new(&cli.common.out_dir, &resolved)?;
    match cli.command {
        Command::Cutoffs => cutoffs(&resolved, &mut out)?,
        Command::Linewidth => linewidth(&resolved, &mut out)?,
        Command::Diffusion => diffusion(&resolved, &mut out)?,
        Command::Scaling { sweeps } => scaling(&resolved, &mut out, sweeps)?,
        Command::Particle { action } => match action {
            ParticleAction::Sim => particle_sim(&resolved, &mut out)?,
            ParticleAction::Fit { trace } => particle_fit(&resolved, &mut out, trace)?,
        },
        Command::Calibrate => calibration(&resolved, &mut out)?,
    }
    Ok(out.written)
}

fn cutoffs(r: &Resolved, out: &mut OutDir) -> Result<(), Failure> {
    let mut tables = Vec::new();
    for &kind in &r.config.structures {
        let s = r.structure(kind)?;
        tables.push(CutoffTable::compute(s, &r.fractions(), &WeightKind::ALL, &r.ensemble(kind), r.config.threshold)?);
    }
    out.write("cutoffs.csv", |w| {
        for (k, t) in tables.iter().enumerate() {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            let text = String::from_utf8_lossy(&buf);
            // one header for all structures
            let body = if k == 0 { &text[..] } else { text.split_once('\n').map_or("", |x| x.1) };
            w.write_all(body.as_bytes())?;
        }
        Ok(())
    })
}

fn linewidth(r: &Resolved, out: &mut OutDir) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for &kind in &r.config.structures {
        let s = r.structure(kind)?;
        let settings = r.linewidth(kind);
        for f in r.fractions() {
            let c = cutoff_radius(s, f, WeightKind::DSquared, &settings.ensemble, r.config.threshold)?;
            match powder_linewidths(s, f, c.radius, &settings) {
                Ok(l) => rows.push(l),
                Err(e) => eprintln!("spindiff: {kind} at {} %: {e}", f * 100.0),
            }
        }
    }
    if rows.is_empty() {
        return Err(Failure::Numerical("no abundance produced a line width".into()));
    }
    out.write("linewidth.csv", |w| {
        writeln!(
            w,
            "structure,abundance_percent,fwhm_sq_hz,fwhm_zq_hz,std_sq_hz,std_zq_hz,m2_sq_hz2,m2_zq_hz2,cutoff_angstrom,n_lattices,n_orientations,n_isolated,seed"
        )?;
        for l in &rows {
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e},{:.6},{},{},{},{}",
                l.structure.kind,
                l.abundance * 100.0,
                l.fwhm_sq,
                l.fwhm_zq,
                l.std_sq,
                l.std_zq,
                l.m2_sq,
                l.m2_zq,
                l.cutoff,
                l.n_lattices,
                l.n_orientations,
                l.n_isolated,
                l.seed
            )?;
        }
        Ok(())
    })
}

fn diffusion(r: &Resolved, out: &mut OutDir) -> Result<(), Failure> {
    let mut tables = Vec::new();
    for &kind in &r.config.structures {
        let t = abundance_sweep(r.structure(kind)?, &r.fractions(), &r.sweep(kind))?;
        for (f, e) in &t.failures {
            eprintln!("spindiff: {kind} at {} %: {e}", f * 100.0);
        }
        tables.push(t);
    }
    if tables.iter().all(|t| t.points.is_empty()) {
        return Err(Failure::Numerical("every abundance failed".into()));
    }
    out.write("diffusion.csv", |w| {
        for (k, t) in tables.iter().enumerate() {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            let text = String::from_utf8_lossy(&buf);
            let body = if k == 0 { &text[..] } else { text.split_once('\n').map_or("", |x| x.1) };
            w.write_all(body.as_bytes())?;
        }
        Ok(())
    })
}

fn scaling(r: &Resolved, out: &mut OutDir, sweeps: Vec<PathBuf>) -> Result<(), Failure> {
    let paths = if sweeps.is_empty() { r.config.paths.sweeps.clone() } else { sweeps };
    if paths.is_empty() {
        return Err(Failure::Config("no diffusion CSVs given".into()));
    }
    let units = ReducedUnits::from_physical(r.config.gamma, r.config.lattice_constant);
    let mut fits = Vec::new();
    for (kind, rows) in inputs::read_sweeps(&paths)? {
        let zq = fit_power_law(&rows.zq, ScalingQuantity::ZqWidth, kind, units)?;
        let d = fit_power_law(&rows.d_over_p0, ScalingQuantity::DOverP0, kind, units)?;
        fits.push((zq, d));
    }
    if fits.is_empty() {
        return Err(Failure::Config("no lattice-sum rows in the inputs".into()));
    }
    out.write("scaling.csv", |w| write_table(&fits, w))
}

fn particle_d(r: &Resolved) -> Result<f64, Failure> {
    let p = &r.config.particle;
    let method = match p.d_source {
        DSource::Explicit => return Ok(p.d),
        DSource::NearestNeighbor => DiffusionMethod::NearestNeighbor,
        DSource::LatticeSum => DiffusionMethod::LatticeSum,
    };
    let kind = r.config.structures[0];
    let pt = sweep_point(r.structure(kind)?, p.abundance / 100.0, &r.sweep(kind))?;
    Ok(match method {
        DiffusionMethod::NearestNeighbor => pt.nearest_neighbor.value,
        DiffusionMethod::LatticeSum => pt.lattice_sum.value,
    })
}

fn particle_sim(r: &Resolved, out: &mut OutDir) -> Result<(), Failure> {
    let p = &r.config.particle;
    let g = r.geometry();
    let relax = Relaxation {
        d: particle_d(r)?,
        t1_in: p.t1_in,
        t1_out: p.t1_out,
    };
    let n = (p.duration / p.step).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * p.step * SECONDS_PER_HOUR).collect();
    let (trace, profile) = match p.kind {
        TraceKind::BuildUp => {
            let (t, prof) = simulate_buildup(&g, &relax, p.polarization, &times)?;
            (t, Some(prof))
        }
        TraceKind::Decay => (simulate_decay(&g, &relax, &InitialCondition::Uniform(p.polarization), &times)?, None),
    };
    out.write("trace.csv", |w| {
        writeln!(w, "time_s,signal")?;
        for (t, v) in trace.times.iter().zip(&trace.values) {
            writeln!(w, "{t},{v:.12e}")?;
        }
        Ok(())
    })?;
    if let Some(prof) = profile {
        let h = g.element_width();
        out.write("profile.csv", |w| {
            writeln!(w, "r_nm,polarization")?;
            for (i, v) in prof.values.iter().enumerate() {
                writeln!(w, "{:.6},{v:.12e}", (i as f64 + 0.5) * h)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn particle_fit(r: &Resolved, out: &mut OutDir, trace: Option<PathBuf>) -> Result<(), Failure> {
    let p = &r.config.particle;
    let path = trace
        .or_else(|| r.config.paths.trace.clone())
        .ok_or_else(|| Failure::Config("no trace CSV given".into()))?;
    let exp = inputs::read_trace(&path, p.kind)?;
    let d = particle_d(r)?;
    let model = match p.kind {
        TraceKind::BuildUp => FitModel::BuildUp { p_shell: p.polarization },
        TraceKind::Decay => FitModel::Decay {
            initial: InitialCondition::Uniform(p.polarization),
        },
    };
    let fit = fit_t1(&exp, &r.geometry(), d, &model, &r.grid())?;
    if fit.insensitive {
        eprintln!("spindiff: warning: residue varies by less than 1 % over the grid; the fit is insensitive");
    }
    out.write("fit.csv", |w| {
        writeln!(w, "t1_in_h,t1_out_h,residue,cell_ratio_in,cell_ratio_out,insensitive,d_nm2_per_s")?;
        writeln!(
            w,
            "{:.6},{:.6},{:.6e},{:.6},{:.6},{},{}",
            fit.t1_in, fit.t1_out, fit.residue, fit.cell_ratio_in, fit.cell_ratio_out, fit.insensitive, d
        )
    })?;
    let mut surface = fit.surface.clone();
    surface.sort_by(|a, b| a.t1_in.total_cmp(&b.t1_in).then(a.t1_out.total_cmp(&b.t1_out)));
    out.write("surface.csv", |w| {
        writeln!(w, "t1_in_h,t1_out_h,residue")?;
        for s in &surface {
            writeln!(w, "{:.6},{:.6},{:.6e}", s.t1_in, s.t1_out, s.residue)?;
        }
        Ok(())
    })
}

fn calibration(r: &Resolved, out: &mut OutDir) -> Result<(), Failure> {
    let cal = calibrate(DipolarTerms::ZzOnly, r.config.calibration.systems, r.seed())?;
    if !cal.is_geometry_independent(1e-8) {
        return Err(Failure::Numerical(format!(
            "moment ratios depend on geometry (spread {:.2e}, {:.2e})",
            cal.spread_sq, cal.spread_zq
        )));
    }
    let record = cal.to_record(env!("CARGO_PKG_VERSION"));
    out.write("calibration.txt", |w| w.write_all(record.as_bytes()))
}
