//! CSV tables and JSON manifests. Floats are written in Rust's shortest
//! round-trip form, so equal data gives equal bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::averaging::AveragedCoefficients;
use crate::error::{Error, Result};
use crate::rng::path_seed_label;
use crate::simulate::{EnsembleKind, PathEnsemble, StopRecord};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path)?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// One row per path and record: `path,t,h1..hn[,phi..][,w..]`.
pub fn write_ensemble_csv(path: &Path, ens: &PathEnsemble) -> Result<usize> {
    let mut w = writer(path)?;
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((1..=ens.n).map(|i| format!("h{i}")));
    let fast = ens.has_fast();
    if fast {
        header.extend((1..=ens.p).map(|i| format!("phi{i}")));
        header.extend((1..=ens.m).map(|i| format!("w{i}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    let mut rows = 0;
    for p in 0..ens.n_paths {
        for (k, &t) in ens.times.iter().enumerate() {
            let mut rec = vec![p.to_string(), num(t)];
            rec.extend(ens.h_at(p, k).iter().map(|&v| num(v)));
            if fast {
                rec.extend(ens.phi_at(p, k).iter().map(|&v| num(v)));
                rec.extend(ens.w_at(p, k).iter().map(|&v| num(v)));
            }
            w.write_record(&rec).map_err(csv_err)?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// Run metadata that the CSV files do not carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub kind: EnsembleKind,
    pub eps: Option<f64>,
    pub dt: f64,
    pub master_seed: u64,
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("line {line}: `{s}` is not a number")))
}

/// Inverse of [`write_ensemble_csv`] and [`write_stops_csv`]. Rows must be
/// grouped by path with the same record times for every path.
pub fn read_ensemble_csv(paths_csv: &Path, stops_csv: &Path, meta: EnsembleMeta) -> Result<PathEnsemble> {
    let mut r = csv::Reader::from_path(paths_csv).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let count = |prefix: &str| {
        header.iter().filter(|h| h.strip_prefix(prefix).is_some_and(|d| d.parse::<usize>().is_ok())).count()
    };
    let (n, p, m) = (count("h"), count("phi"), count("w"));
    if header.len() < 2 || header[0] != "path" || header[1] != "t" || header.len() != 2 + n + p + m || n == 0 {
        return Err(Error::Parse(format!("{}: unexpected header {header:?}", paths_csv.display())));
    }
    let (mut times, mut h, mut phi, mut w) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows_per_path: Vec<usize> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let path: usize = rec[0].parse().map_err(|_| Error::Parse(format!("line {line}: bad path index")))?;
        if path == rows_per_path.len() {
            rows_per_path.push(0);
        } else if path + 1 != rows_per_path.len() {
            return Err(Error::Parse(format!("line {line}: rows are not grouped by path")));
        }
        let t = parse_num(&rec[1], line)?;
        let k = rows_per_path[path];
        if path == 0 {
            times.push(t);
        } else if times.get(k) != Some(&t) {
            return Err(Error::Parse(format!("line {line}: record times differ between paths")));
        }
        rows_per_path[path] += 1;
        for (j, v) in rec.iter().skip(2).enumerate() {
            let x = parse_num(v, line)?;
            if j < n {
                h.push(x);
            } else if j < n + p {
                phi.push(x);
            } else {
                w.push(x);
            }
        }
    }
    if rows_per_path.iter().any(|&c| c != times.len()) {
        return Err(Error::Parse(format!("{}: paths have different record counts", paths_csv.display())));
    }
    let n_paths = rows_per_path.len();
    let mut stops = vec![None; n_paths];
    let mut sr = csv::Reader::from_path(stops_csv).map_err(csv_err)?;
    for (i, rec) in sr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let path: usize = rec[0].parse().map_err(|_| Error::Parse(format!("line {line}: bad path index")))?;
        if path >= n_paths {
            return Err(Error::Parse(format!("line {line}: path {path} not in the ensemble")));
        }
        if &rec[1] == "1" {
            let reason = serde_json::from_str(&rec[3]).map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
            stops[path] = Some(StopRecord { time: parse_num(&rec[2], line)?, reason });
        }
    }
    Ok(PathEnsemble {
        kind: meta.kind,
        times,
        n_paths,
        n,
        p,
        m,
        h,
        phi,
        w,
        stops,
        seeds: (0..n_paths as u64).map(|i| path_seed_label(meta.master_seed, i)).collect(),
        eps: meta.eps,
        dt: meta.dt,
        master_seed: meta.master_seed,
    })
}

/// Per-path stop flags: `path,stopped,time,reason`.
pub fn write_stops_csv(path: &Path, ens: &PathEnsemble) -> Result<usize> {
    let mut w = writer(path)?;
    w.write_record(["path", "stopped", "time", "reason"]).map_err(csv_err)?;
    for (p, s) in ens.stops.iter().enumerate() {
        let (stopped, time, reason) = match s {
            None => ("0".to_string(), String::new(), String::new()),
            Some(s) => {
                let r = serde_json::to_string(&s.reason).map_err(|e| Error::Io(e.to_string()))?;
                ("1".to_string(), num(s.time), r)
            }
        };
        w.write_record([p.to_string(), stopped, time, reason]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(ens.stops.len())
}

/// One row per grid node: `h1..hn, A_ij (row-major), B_i`.
pub fn write_coefficients_csv(path: &Path, coeffs: &AveragedCoefficients) -> Result<usize> {
    let n = coeffs.n;
    let mut w = writer(path)?;
    let mut header: Vec<String> = (1..=n).map(|i| format!("h{i}")).collect();
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("A{i}{j}"));
        }
    }
    header.extend((1..=n).map(|i| format!("B{i}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut h = vec![0.0; n];
    for k in 0..coeffs.grid.len() {
        coeffs.grid.node(k, &mut h);
        let mut rec: Vec<String> = h.iter().map(|&v| num(v)).collect();
        rec.extend(coeffs.node_a(k).iter().map(|&v| num(v)));
        rec.extend(coeffs.node_b(k).iter().map(|&v| num(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(coeffs.grid.len())
}

/// Generic table writer.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<usize> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(rows.len())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub rows: usize,
}

/// Provenance of a run: everything needed to reproduce it, and nothing that
/// varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            tool: "stochavg".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            artifacts: vec![],
        }
    }

    pub fn add(&mut self, file: &str, rows: usize) {
        self.artifacts.push(ArtifactEntry { file: file.into(), rows });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::HGrid;

    #[test]
    fn coefficient_table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let grid = HGrid::new(vec![0.0], vec![1.0], vec![2]).unwrap();
        let c = AveragedCoefficients::from_fn(grid, "t", |h, a, b| {
            a[0] = h[0];
            b[0] = 0.5;
        })
        .unwrap();
        let p = dir.path().join("c.csv");
        assert_eq!(write_coefficients_csv(&p, &c).unwrap(), 2);
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "h1,A11,B1\n0,0,0.5\n1,1,0.5\n");
    }

    #[test]
    fn ensemble_csv_roundtrip() {
        use crate::simulate::{simulate_fast_slow, InitialState, SimulationConfig};
        use crate::systems::{coupled_oscillator_model, CoupledOscillatorSpec};
        let dir = tempfile::tempdir().unwrap();
        let m = coupled_oscillator_model(CoupledOscillatorSpec::doubly_noised()).unwrap();
        let mut cfg = SimulationConfig::new(0.2, 4e-3, 0.1, 3, 8);
        cfg.record_dt = Some(0.02);
        cfg.h_floor = Some(0.9);
        let e = simulate_fast_slow(&m, &InitialState::at(vec![0.95, 1.0]), &cfg).unwrap();
        let (p, s) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
        write_ensemble_csv(&p, &e).unwrap();
        write_stops_csv(&s, &e).unwrap();
        let meta = EnsembleMeta { kind: e.kind, eps: e.eps, dt: e.dt, master_seed: e.master_seed };
        assert_eq!(read_ensemble_csv(&p, &s, meta).unwrap(), e);
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("simulate", Some(3), serde_json::json!({"eps": 0.1}));
        m.add("paths.csv", 10);
        let p = dir.path().join("m.json");
        write_json(&p, &m).unwrap();
        assert_eq!(read_json::<Manifest>(&p).unwrap(), m);
    }
}
