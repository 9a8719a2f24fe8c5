//! File formats: Matrix Market system directories, CSV dumps and JSON
//! reports.
//!
//! A system directory holds `J.mtx`, `R.mtx`, `Q.mtx`, `B.mtx` (dense
//! `array real general`) and `system.meta` with `n=<int>` and `m=<int>`.
//! Numbers are written with `{:.17e}`, so output is byte-deterministic and
//! round-trips exactly.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::experiment::ComparisonRow;
use crate::linalg::{sigma_max, CMatrix};
use crate::reduce::ReductionReport;
use crate::sampling::SampleSet;
use crate::system::PHSystem;

pub const RESPONSE_HEADER: [&str; 2] = ["omega", "sigma_max"];
pub const SAMPLES_HEADER: [&str; 1] = ["omega"];
pub const REPORT_HEADER: [&str; 5] = ["gamma", "n_samples", "loss", "opt_iters", "seconds"];
pub const COMPARISON_HEADER: [&str; 7] = [
    "r",
    "seconds_fixed",
    "seconds_adaptive",
    "ratio",
    "n_samples_final",
    "hinf_adaptive",
    "hinf_fixed",
];

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

pub fn write_mtx(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", a.nrows(), a.ncols()));
    // column-major, as the format prescribes
    for v in a.iter() {
        out.push_str(&format!("{v:.17e}\n"));
    }
    create_parent(path)?;
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a real Matrix Market file in `array` or `coordinate` layout.
pub fn read_mtx(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let banner = lines.next().ok_or_else(|| parse_err(path, "empty file"))?;
    let fields: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(path, format!("bad banner `{banner}`")));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(path, format!("unsupported field `{}`", fields[3])));
    }
    let symmetry = fields[4].as_str();
    if !matches!(symmetry, "general" | "symmetric" | "skew-symmetric") {
        return Err(parse_err(path, format!("unsupported symmetry `{symmetry}`")));
    }
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let dims: Vec<usize> = body
        .next()
        .ok_or_else(|| parse_err(path, "missing size line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, format!("bad size entry `{t}`"))))
        .collect::<Result<_>>()?;
    let num = |t: &str| -> Result<f64> {
        t.parse::<f64>().map_err(|_| parse_err(path, format!("bad number `{t}`")))
    };
    let sign = if symmetry == "skew-symmetric" { -1.0 } else { 1.0 };
    match (fields[2].as_str(), dims.as_slice()) {
        ("array", &[rows, cols]) => {
            let mut a = DMatrix::zeros(rows, cols);
            if symmetry == "general" {
                let vals: Vec<f64> = body.map(num).collect::<Result<_>>()?;
                if vals.len() != rows * cols {
                    return Err(parse_err(path, format!("expected {} values, found {}", rows * cols, vals.len())));
                }
                a.copy_from_slice(&vals);
            } else {
                if rows != cols {
                    return Err(parse_err(path, "symmetric storage needs a square matrix"));
                }
                let first = usize::from(symmetry == "skew-symmetric");
                for j in 0..cols {
                    for i in j + first..rows {
                        let t = body.next().ok_or_else(|| parse_err(path, "too few values"))?;
                        let v = num(t)?;
                        a[(i, j)] = v;
                        a[(j, i)] = sign * v;
                    }
                }
            }
            Ok(a)
        }
        ("coordinate", &[rows, cols, nnz]) => {
            let mut a = DMatrix::zeros(rows, cols);
            let mut count = 0;
            for line in body {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(path, format!("bad entry line `{line}`")));
                }
                let (i, j): (usize, usize) = (
                    t[0].parse().map_err(|_| parse_err(path, format!("bad row `{}`", t[0])))?,
                    t[1].parse().map_err(|_| parse_err(path, format!("bad column `{}`", t[1])))?,
                );
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(path, format!("index ({i}, {j}) out of range")));
                }
                let v = num(t[2])?;
                a[(i - 1, j - 1)] = v;
                if symmetry != "general" && i != j {
                    a[(j - 1, i - 1)] = sign * v;
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(path, format!("expected {nnz} entries, found {count}")));
            }
            Ok(a)
        }
        (layout, _) => Err(parse_err(path, format!("bad size line for layout `{layout}`"))),
    }
}

pub fn write_system(dir: &Path, sys: &PHSystem) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_mtx(&dir.join("J.mtx"), sys.j())?;
    write_mtx(&dir.join("R.mtx"), sys.r())?;
    write_mtx(&dir.join("Q.mtx"), sys.q())?;
    write_mtx(&dir.join("B.mtx"), sys.b())?;
    let meta = dir.join("system.meta");
    fs::write(&meta, format!("n={}\nm={}\n", sys.n(), sys.m())).map_err(|e| Error::io(&meta, e))
}

fn read_meta(path: &Path) -> Result<(usize, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut n, mut m) = (None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, format!("expected key=value, got `{line}`")))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| parse_err(path, format!("bad integer in `{line}`")))?;
        match key.trim() {
            "n" => n = Some(value),
            "m" => m = Some(value),
            other => return Err(parse_err(path, format!("unknown key `{other}`"))),
        }
    }
    match (n, m) {
        (Some(n), Some(m)) => Ok((n, m)),
        _ => Err(parse_err(path, "need both n and m")),
    }
}

/// Reads a system directory and validates it against `system.meta` and the
/// structural invariants.
pub fn read_system(dir: &Path) -> Result<PHSystem> {
    let meta = dir.join("system.meta");
    let (n, m) = read_meta(&meta)?;
    let load = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        let path = dir.join(name);
        let a = read_mtx(&path)?;
        if a.shape() != (rows, cols) {
            return Err(parse_err(
                &path,
                format!("expected {rows}x{cols} from system.meta, found {}x{}", a.nrows(), a.ncols()),
            ));
        }
        Ok(a)
    };
    let j = load("J.mtx", n, n)?;
    let r = load("R.mtx", n, n)?;
    let q = load("Q.mtx", n, n)?;
    let b = load("B.mtx", n, m)?;
    PHSystem::new(j, r, q, b).map_err(|e| parse_err(dir, e.to_string()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, format!("{other:?}")),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Frequency-response table. With `entries`, columns `re_ij,im_ij` (1-based,
/// row-major) follow the largest singular value.
pub fn write_response_csv(path: &Path, omegas: &[f64], values: &[CMatrix], entries: bool) -> Result<()> {
    Error::check_len("response values", omegas.len(), values.len())?;
    let m = values.first().map_or(0, |h| h.nrows());
    let mut header: Vec<String> = RESPONSE_HEADER.iter().map(|s| s.to_string()).collect();
    if entries {
        for i in 1..=m {
            for j in 1..=m {
                header.push(format!("re_{i}{j}"));
                header.push(format!("im_{i}{j}"));
            }
        }
    }
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (omega, h) in omegas.iter().zip(values) {
        let mut row = vec![fmt(*omega), fmt(sigma_max(h))];
        if entries {
            for i in 0..m {
                for j in 0..m {
                    row.push(fmt(h[(i, j)].re));
                    row.push(fmt(h[(i, j)].im));
                }
            }
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    drop(w);
    validate_csv(path, &RESPONSE_HEADER)
}

pub fn write_samples_csv(path: &Path, samples: &SampleSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SAMPLES_HEADER).map_err(|e| csv_err(path, e))?;
    for &omega in samples.as_slice() {
        w.write_record([fmt(omega)]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    drop(w);
    validate_csv(path, &SAMPLES_HEADER)
}

pub fn read_samples_csv(path: &Path) -> Result<SampleSet> {
    let (_, rows) = read_numeric_csv(path)?;
    SampleSet::new(rows.into_iter().map(|r| r[0]).collect()).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_report_csv(path: &Path, report: &ReductionReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(REPORT_HEADER).map_err(|e| csv_err(path, e))?;
    for it in &report.iterations {
        w.write_record([
            fmt(it.gamma),
            it.n_samples.to_string(),
            fmt(it.loss),
            it.opt_iters.to_string(),
            fmt(it.seconds),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    drop(w);
    validate_csv(path, &REPORT_HEADER)
}

pub fn write_report_json(path: &Path, report: &ReductionReport) -> Result<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    read_report_json(path).map(|_| ())
}

pub fn read_report_json(path: &Path) -> Result<ReductionReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: ReductionReport =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))?;
    if report.theta.len() != report.theta_len {
        return Err(parse_err(path, "theta_len does not match theta"));
    }
    Ok(report)
}

/// One row per reduced order, columns as in [`COMPARISON_HEADER`].
pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(COMPARISON_HEADER).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record([
            row.r.to_string(),
            fmt(row.seconds_fixed),
            fmt(row.seconds_adaptive),
            fmt(row.ratio),
            row.n_samples_final.to_string(),
            fmt(row.hinf_adaptive),
            fmt(row.hinf_fixed),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    drop(w);
    validate_csv(path, &COMPARISON_HEADER)
}

/// Reads a CSV whose cells are all numeric; returns the header and rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, t)| {
                t.parse::<f64>().map_err(|_| {
                    parse_err(path, format!("row {}: column `{}` is not numeric: `{t}`", k + 1, header[c]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Checks that the header starts with `expected` and every cell is numeric.
pub fn validate_csv(path: &Path, expected: &[&str]) -> Result<()> {
    let (header, _) = read_numeric_csv(path)?;
    if header.len() < expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(parse_err(
            path,
            format!("header {header:?} does not start with {expected:?}"),
        ));
    }
    Ok(())
}

/// Path helper for per-level artifacts, e.g. `levels/03_samples.csv`.
pub fn level_path(dir: &Path, index: usize, suffix: &str) -> PathBuf {
    dir.join("levels").join(format!("{index:02}_{suffix}"))
}
