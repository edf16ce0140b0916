use std::collections::BTreeMap;
use std::path::Path;

use spindiff::crystal::StructureKind;
use spindiff::particle::{Trace, TraceKind};

use crate::Failure;

fn reader(path: &Path) -> Result<csv::Reader<std::io::Cursor<String>>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    // provenance and comment lines
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(std::io::Cursor::new(body)))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, Failure> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Failure::Config(format!("{}: missing column `{name}`", path.display())))
}

fn number(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<f64, Failure> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse::<f64>()
        .map_err(|_| Failure::Config(format!("{}: line {line}: `{raw}` is not a number", path.display())))
}

/// `time_s,signal[,normalization]`
pub fn read_trace(path: &Path, kind: TraceKind) -> Result<Trace, Failure> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?.clone();
    let t = column(&headers, "time_s", path)?;
    let s = column(&headers, "signal", path)?;
    let norm = headers.iter().position(|h| h == "normalization");
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Failure::Config(format!("{}: line {line}: {e}", path.display())))?;
        let mut v = number(&rec, s, path, line)?;
        if let Some(n) = norm {
            let d = number(&rec, n, path, line)?;
            if d == 0.0 {
                return Err(Failure::Config(format!("{}: line {line}: zero normalization", path.display())));
            }
            v /= d;
        }
        times.push(number(&rec, t, path, line)?);
        values.push(v);
    }
    Trace::new(times, values, kind).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub struct SweepRows {
    /// (percent, ZQ FWHM)
    pub zq: Vec<(f64, f64)>,
    /// (percent, D/p0)
    pub d_over_p0: Vec<(f64, f64)>,
}

/// Lattice-sum rows of sweep CSVs grouped by structure.
pub fn read_sweeps(paths: &[impl AsRef<Path>]) -> Result<BTreeMap<StructureKind, SweepRows>, Failure> {
    let mut out: BTreeMap<StructureKind, SweepRows> = BTreeMap::new();
    for path in paths {
        let path = path.as_ref();
        let mut rdr = reader(path)?;
        let headers = rdr.headers().map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?.clone();
        let cs = column(&headers, "structure", path)?;
        let cf = column(&headers, "abundance_percent", path)?;
        let cm = column(&headers, "method", path)?;
        let cd = column(&headers, "D_nm2_per_s", path)?;
        let cw = column(&headers, "fwhm_zq_hz", path)?;
        let cp = column(&headers, "p0_s", path)?;
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Failure::Config(format!("{}: line {line}: {e}", path.display())))?;
            if rec.get(cm) != Some("lattice_sum") {
                continue;
            }
            let kind: StructureKind = rec
                .get(cs)
                .unwrap_or("")
                .parse()
                .map_err(|e| Failure::Config(format!("{}: line {line}: {e}", path.display())))?;
            let f = number(&rec, cf, path, line)?;
            let entry = out.entry(kind).or_insert_with(|| SweepRows {
                zq: Vec::new(),
                d_over_p0: Vec::new(),
            });
            entry.zq.push((f, number(&rec, cw, path, line)?));
            entry.d_over_p0.push((f, number(&rec, cd, path, line)? / number(&rec, cp, path, line)?));
        }
    }
    Ok(out)
}
