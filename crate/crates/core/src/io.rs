//! Readers for observed-entry files, the model directory format and the
//! trace CSV.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::diagnostics::TraceRow;
use crate::error::{Error, Result};
use crate::scaling::{Axes, ScaleFlags, ScalingParams};
use crate::splr::{FactorPair, ObservedMatrix, SourcedEntry};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "iter,seconds,F,H,frob_delta,eta,rank,flops";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// `coordinate real general`, 1-based.
    MatrixMarket,
    /// `row,col,value` lines, 0-based, optional header and `# shape m n`.
    CsvTriplets,
    /// Whitespace-separated `user item rating [timestamp]`, 1-based.
    MovieLens,
}

impl DataFormat {
    pub fn index_base(self) -> usize {
        match self {
            DataFormat::CsvTriplets => 0,
            DataFormat::MatrixMarket | DataFormat::MovieLens => 1,
        }
    }

    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "mtx" | "mm" => Some(DataFormat::MatrixMarket),
            "csv" => Some(DataFormat::CsvTriplets),
            "data" => Some(DataFormat::MovieLens),
            _ => None,
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::MatrixMarket => "matrixmarket",
            DataFormat::CsvTriplets => "csv_triplets",
            DataFormat::MovieLens => "movielens",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrixmarket" | "mtx" => Ok(DataFormat::MatrixMarket),
            "csv_triplets" | "csv" => Ok(DataFormat::CsvTriplets),
            "movielens" => Ok(DataFormat::MovieLens),
            other => Err(Error::InvalidConfig(format!(
                "unknown format '{other}' (expected matrixmarket, csv_triplets or movielens)"
            ))),
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, column: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, column, format!("missing {what}")))?;
    tok.trim()
        .parse()
        .map_err(|_| parse_err(line, column, format!("cannot parse {what} from '{}'", tok.trim())))
}

fn index(tok: Option<&str>, base: usize, line: usize, column: usize, what: &str) -> Result<usize> {
    let raw: usize = field(tok, line, column, what)?;
    raw.checked_sub(base)
        .ok_or_else(|| parse_err(line, column, format!("{what} {raw} is below the index base {base}")))
}

pub fn load_observed(path: &Path, format: DataFormat) -> Result<ObservedMatrix> {
    let file = fs::File::open(path)?;
    read_observed(BufReader::new(file), format)
}

pub fn read_observed<R: Read>(reader: R, format: DataFormat) -> Result<ObservedMatrix> {
    let reader = BufReader::new(reader);
    match format {
        DataFormat::MatrixMarket => read_matrix_market(reader),
        DataFormat::CsvTriplets => read_delimited(reader, Some(','), 0, true),
        DataFormat::MovieLens => read_delimited(reader, None, 1, false),
    }
}

fn read_matrix_market<R: BufRead>(reader: R) -> Result<ObservedMatrix> {
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let banner = banner?;
    let words: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.first().map(String::as_str) != Some("%%matrixmarket") || words.len() < 5 {
        return Err(parse_err(1, 1, "expected a %%MatrixMarket banner"));
    }
    if words[1] != "matrix" || words[2] != "coordinate" {
        return Err(parse_err(1, 1, "only 'matrix coordinate' files are supported"));
    }
    if !matches!(words[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(1, 1, format!("unsupported field type '{}'", words[3])));
    }
    if words[4] != "general" {
        return Err(parse_err(1, 1, format!("unsupported symmetry '{}'", words[4])));
    }
    let mut shape: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut tok = t.split_whitespace();
        match shape {
            None => {
                let m = field(tok.next(), no, 1, "row count")?;
                let n = field(tok.next(), no, 2, "column count")?;
                let nnz = field(tok.next(), no, 3, "entry count")?;
                shape = Some((m, n, nnz));
                entries.reserve(nnz);
            }
            Some(_) => {
                let row = index(tok.next(), 1, no, 1, "row index")?;
                let col = index(tok.next(), 1, no, 2, "column index")?;
                let value = field(tok.next(), no, 3, "value")?;
                entries.push(SourcedEntry {
                    row,
                    col,
                    value,
                    line: no,
                });
            }
        }
    }
    let (m, n, nnz) = shape.ok_or_else(|| parse_err(1, 1, "missing size line"))?;
    if entries.len() != nnz {
        return Err(parse_err(
            entries.last().map_or(1, |e| e.line),
            1,
            format!("size line declares {nnz} entries, file has {}", entries.len()),
        ));
    }
    ObservedMatrix::from_sourced(m, n, entries)
}

/// `delim = None` splits on whitespace. The shape is the largest index
/// plus one unless a `# shape m n` line says otherwise.
fn read_delimited<R: BufRead>(
    reader: R,
    delim: Option<char>,
    base: usize,
    allow_header: bool,
) -> Result<ObservedMatrix> {
    let mut entries = Vec::new();
    let mut declared: Option<(usize, usize)> = None;
    let mut seen_data = false;
    for (k, line) in reader.lines().enumerate() {
        let no = k + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            let mut w = c.split_whitespace();
            if w.next() == Some("shape") {
                declared = Some((
                    field(w.next(), no, 2, "row count")?,
                    field(w.next(), no, 3, "column count")?,
                ));
            }
            continue;
        }
        let toks: Vec<&str> = match delim {
            Some(d) => t.split(d).collect(),
            None => t.split_whitespace().collect(),
        };
        if allow_header && !seen_data && toks[0].trim().parse::<usize>().is_err() {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let row = index(toks.first().copied(), base, no, 1, "row index")?;
        let col = index(toks.get(1).copied(), base, no, 2, "column index")?;
        let value = field(toks.get(2).copied(), no, 3, "value")?;
        entries.push(SourcedEntry {
            row,
            col,
            value,
            line: no,
        });
    }
    let (m, n) = declared.unwrap_or_else(|| {
        (
            entries.iter().map(|e| e.row + 1).max().unwrap_or(0),
            entries.iter().map(|e| e.col + 1).max().unwrap_or(0),
        )
    });
    ObservedMatrix::from_sourced(m, n, entries)
}

/// Writes `coordinate real general` with 1-based indices.
pub fn write_matrix_market(path: &Path, x: &ObservedMatrix) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", x.nrows(), x.ncols(), x.nnz())?;
    for (i, j, v) in x.entries() {
        writeln!(w, "{} {} {}", i + 1, j + 1, fmt_f64(v))?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits: round-trips every finite double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn write_trace<W: Write>(mut w: W, rows: &[TraceRow], deterministic: bool) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", trace_line(r, deterministic))?;
    }
    w.flush()?;
    Ok(())
}

/// One trace row as CSV. Wall time is written as 0 in deterministic mode
/// so that repeated runs produce identical files.
pub fn trace_line(r: &TraceRow, deterministic: bool) -> String {
    let secs = if deterministic { 0.0 } else { r.seconds };
    format!(
        "{},{},{},{},{},{},{},{}",
        r.iter,
        fmt_f64(secs),
        fmt_f64(r.f),
        fmt_f64(r.h),
        fmt_f64(r.frob_delta),
        fmt_f64(r.eta),
        r.rank,
        r.flops
    )
}

pub fn read_trace<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let no = k + 1;
        let line = line?;
        if no == 1 {
            if !line.starts_with(TRACE_HEADER) {
                return Err(parse_err(1, 1, "missing trace header"));
            }
            continue;
        }
        let mut t = line.split(',');
        out.push(TraceRow {
            iter: field(t.next(), no, 1, "iter")?,
            seconds: field(t.next(), no, 2, "seconds")?,
            f: field(t.next(), no, 3, "F")?,
            h: field(t.next(), no, 4, "H")?,
            frob_delta: field(t.next(), no, 5, "frob_delta")?,
            eta: field(t.next(), no, 6, "eta")?,
            rank: field(t.next(), no, 7, "rank")?,
            flops: field(t.next(), no, 8, "flops")?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub format_version: u32,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub lambda: f64,
    pub algorithm: String,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub lambda_max: f64,
}

/// A fitted model with optional scaling, stored as a directory of text
/// files: `meta.txt`, `u.csv`, `d.csv`, `v.csv` and `scaling.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub meta: ModelMeta,
    pub factors: FactorPair,
    pub scaling: Option<ScalingParams>,
}

fn bundle_err(msg: impl Into<String>) -> Error {
    Error::Bundle(msg.into())
}

fn write_matrix_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Array2::zeros((rows, cols));
    if cols == 0 {
        return Ok(out);
    }
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != rows {
        return Err(bundle_err(format!(
            "{}: expected {rows} rows, found {}",
            path.display(),
            lines.len()
        )));
    }
    for (i, line) in lines.iter().enumerate() {
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != cols {
            return Err(bundle_err(format!(
                "{} line {}: expected {cols} values, found {}",
                path.display(),
                i + 1,
                toks.len()
            )));
        }
        for (j, t) in toks.iter().enumerate() {
            out[[i, j]] = field(Some(t), i + 1, j + 1, "value")?;
        }
    }
    Ok(out)
}

impl ModelBundle {
    pub fn new(meta: ModelMeta, factors: FactorPair, scaling: Option<ScalingParams>) -> Result<Self> {
        let b = ModelBundle { meta, factors, scaling };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, r) = (self.meta.m, self.meta.n, self.meta.rank);
        let f = &self.factors;
        if f.nrows() != m || f.ncols() != n || f.rank() != r {
            return Err(bundle_err(format!(
                "meta says {m}x{n} rank {r}, factors are {}x{} rank {}",
                f.nrows(),
                f.ncols(),
                f.rank()
            )));
        }
        if let Some(s) = &self.scaling {
            if s.nrows() != m || s.ncols() != n {
                return Err(bundle_err(format!(
                    "scaling is {}x{}, model is {m}x{n}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            s.validate()?;
        }
        Ok(())
    }

    /// Prediction on the data scale.
    pub fn predict(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.meta.m || j >= self.meta.n {
            return Err(Error::IndexOutOfBounds {
                row: i,
                col: j,
                nrows: self.meta.m,
                ncols: self.meta.n,
            });
        }
        let z = self.factors.predict(i, j);
        Ok(match &self.scaling {
            Some(p) => p.inverse(z, i, j),
            None => z,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        let m = &self.meta;
        let mut meta = String::new();
        let mut kv = |k: &str, v: String| {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(&v);
            meta.push('\n');
        };
        kv("format_version", m.format_version.to_string());
        kv("m", m.m.to_string());
        kv("n", m.n.to_string());
        kv("rank", m.rank.to_string());
        kv("lambda", fmt_f64(m.lambda));
        kv("algorithm", m.algorithm.clone());
        kv("seed", m.seed.to_string());
        kv("converged", m.converged.to_string());
        kv("iterations", m.iterations.to_string());
        kv("lambda_max", fmt_f64(m.lambda_max));
        match &self.scaling {
            Some(s) => {
                kv("center", s.flags.center.to_string());
                kv("scale", s.flags.scale.to_string());
            }
            None => kv("scaling", "none".into()),
        }
        fs::write(dir.join("meta.txt"), meta)?;
        write_matrix_csv(&dir.join("u.csv"), &self.factors.u)?;
        write_matrix_csv(&dir.join("v.csv"), &self.factors.v)?;
        let d: String = self.factors.d.iter().map(|&v| fmt_f64(v) + "\n").collect();
        fs::write(dir.join("d.csv"), d)?;
        let scaling_path = dir.join("scaling.csv");
        match &self.scaling {
            Some(s) => {
                let mut w = BufWriter::new(fs::File::create(&scaling_path)?);
                writeln!(w, "param,index,value")?;
                for (name, vec) in [
                    ("alpha", &s.alpha),
                    ("beta", &s.beta),
                    ("tau", &s.tau),
                    ("gamma", &s.gamma),
                ] {
                    for (k, v) in vec.iter().enumerate() {
                        writeln!(w, "{name},{k},{}", fmt_f64(*v))?;
                    }
                }
                w.flush()?;
            }
            None if scaling_path.exists() => fs::remove_file(scaling_path)?,
            None => {}
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("meta.txt"))?;
        let mut map = std::collections::BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| bundle_err(format!("meta.txt line {}: expected key=value", k + 1)))?;
            map.insert(key.trim().to_string(), val.trim().to_string());
        }
        fn get<T: FromStr>(map: &std::collections::BTreeMap<String, String>, key: &str) -> Result<T> {
            let v = map
                .get(key)
                .ok_or_else(|| bundle_err(format!("meta.txt is missing '{key}'")))?;
            v.parse()
                .map_err(|_| bundle_err(format!("meta.txt: bad value '{v}' for '{key}'")))
        }
        let meta = ModelMeta {
            format_version: get(&map, "format_version")?,
            m: get(&map, "m")?,
            n: get(&map, "n")?,
            rank: get(&map, "rank")?,
            lambda: get(&map, "lambda")?,
            algorithm: get(&map, "algorithm")?,
            seed: get(&map, "seed")?,
            converged: get(&map, "converged")?,
            iterations: get(&map, "iterations")?,
            lambda_max: get(&map, "lambda_max")?,
        };
        if meta.format_version != BUNDLE_FORMAT_VERSION {
            return Err(bundle_err(format!(
                "format version {} is not supported (expected {BUNDLE_FORMAT_VERSION})",
                meta.format_version
            )));
        }
        let u = read_matrix_csv(&dir.join("u.csv"), meta.m, meta.rank)?;
        let v = read_matrix_csv(&dir.join("v.csv"), meta.n, meta.rank)?;
        let d_text = fs::read_to_string(dir.join("d.csv"))?;
        let d: Vec<f64> = d_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, l)| field(Some(l), k + 1, 1, "singular value"))
            .collect::<Result<_>>()?;
        if d.len() != meta.rank {
            return Err(bundle_err(format!(
                "d.csv has {} values, meta says rank {}",
                d.len(),
                meta.rank
            )));
        }
        let factors = FactorPair::new(u, Array1::from(d), v)?;
        let scaling = if map.contains_key("center") {
            let flags = ScaleFlags::new(get::<Axes>(&map, "center")?, get::<Axes>(&map, "scale")?);
            Some(read_scaling(&dir.join("scaling.csv"), meta.m, meta.n, flags)?)
        } else {
            None
        };
        ModelBundle::new(meta, factors, scaling)
    }
}

fn read_scaling(path: &Path, m: usize, n: usize, flags: ScaleFlags) -> Result<ScalingParams> {
    let mut p = ScalingParams::identity(m, n, flags);
    let text = fs::read_to_string(path)?;
    let mut seen = [vec![false; m], vec![false; n], vec![false; m], vec![false; n]];
    for (k, line) in text.lines().enumerate().skip(1) {
        let no = k + 1;
        let mut t = line.split(',');
        let name = t.next().unwrap_or("");
        let idx: usize = field(t.next(), no, 2, "index")?;
        let val: f64 = field(t.next(), no, 3, "value")?;
        let (slot, vec) = match name {
            "alpha" => (0, &mut p.alpha),
            "beta" => (1, &mut p.beta),
            "tau" => (2, &mut p.tau),
            "gamma" => (3, &mut p.gamma),
            other => return Err(parse_err(no, 1, format!("unknown scaling parameter '{other}'"))),
        };
        if idx >= vec.len() {
            return Err(parse_err(no, 2, format!("{name} index {idx} out of range")));
        }
        vec[idx] = val;
        seen[slot][idx] = true;
    }
    if seen.iter().any(|s| s.iter().any(|x| !x)) {
        return Err(bundle_err("scaling.csv does not list every parameter"));
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reads_small_matrix_market() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n2 2 2\n1 1 1.0\n2 2 2.0\n";
        let x = read_observed(text.as_bytes(), DataFormat::MatrixMarket).unwrap();
        assert_eq!((x.nrows(), x.ncols(), x.nnz()), (2, 2, 2));
        assert_eq!(x.get(1, 1), Some(2.0));
    }

    #[test]
    fn duplicate_names_both_lines() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n2 2 2.0\n1 1 5.0\n";
        match read_observed(text.as_bytes(), DataFormat::MatrixMarket) {
            Err(Error::DuplicateEntry {
                row: 0,
                col: 0,
                first_line: 3,
                second_line: 5,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n";
        assert!(matches!(
            read_observed(text.as_bytes(), DataFormat::MatrixMarket),
            Err(Error::Parse { line: 3, column: 2, .. })
        ));
        let oob = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(
            read_observed(oob.as_bytes(), DataFormat::MatrixMarket),
            Err(Error::IndexOutOfBounds { row: 2, .. })
        ));
        let zero = "%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1.0\n";
        assert!(matches!(
            read_observed(zero.as_bytes(), DataFormat::MatrixMarket),
            Err(Error::Parse { .. })
        ));
        let sym = "%%MatrixMarket matrix coordinate real symmetric\n2 2 0\n";
        assert!(read_observed(sym.as_bytes(), DataFormat::MatrixMarket).is_err());
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(read_observed(short.as_bytes(), DataFormat::MatrixMarket).is_err());
    }

    #[test]
    fn csv_and_movielens() {
        let csv = "row,col,value\n0,0,1.5\n# shape 3 4\n2,1,-2\n";
        let x = read_observed(csv.as_bytes(), DataFormat::CsvTriplets).unwrap();
        assert_eq!((x.nrows(), x.ncols(), x.nnz()), (3, 4, 2));
        let ml = "1\t1\t5\t874965758\n2\t3\t3\t876893171\n";
        let y = read_observed(ml.as_bytes(), DataFormat::MovieLens).unwrap();
        assert_eq!((y.nrows(), y.ncols()), (2, 3));
        assert_eq!(y.get(1, 2), Some(3.0));
    }

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = ObservedMatrix::from_triplets(3, 2, vec![(0, 1, 0.1), (2, 0, -1.0 / 3.0)]).unwrap();
        let p = dir.path().join("x.mtx");
        write_matrix_market(&p, &x).unwrap();
        assert_eq!(load_observed(&p, DataFormat::MatrixMarket).unwrap(), x);
    }

    #[test]
    fn trace_round_trip() {
        let rows = vec![TraceRow {
            iter: 3,
            seconds: 0.25,
            f: 1.0 / 3.0,
            h: 0.3,
            frob_delta: f64::NAN,
            eta: 1e-300,
            rank: 2,
            flops: 12345,
        }];
        let mut buf = Vec::new();
        write_trace(&mut buf, &rows, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back[0].seconds, 0.0);
        assert_eq!(back[0].f, rows[0].f);
        assert!(back[0].frob_delta.is_nan());
        assert_eq!(back[0].eta, 1e-300);
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let u = array![[0.6, 0.0], [0.8, 0.0], [0.0, 1.0]];
        let v = array![[1.0 / 2f64.sqrt(), 0.0], [1.0 / 2f64.sqrt(), 0.0], [0.0, 1.0]];
        let factors = FactorPair::new(u, array![2.5, 1.0 / 7.0], v).unwrap();
        let mut scaling = ScalingParams::identity(3, 3, ScaleFlags::all());
        scaling.alpha[1] = 0.1;
        scaling.gamma[2] = 1.7;
        let meta = ModelMeta {
            format_version: BUNDLE_FORMAT_VERSION,
            m: 3,
            n: 3,
            rank: 2,
            lambda: 0.3,
            algorithm: "softimpute_als".into(),
            seed: 42,
            converged: true,
            iterations: 17,
            lambda_max: 4.2,
        };
        let b = ModelBundle::new(meta, factors, Some(scaling)).unwrap();
        b.save(dir.path()).unwrap();
        let c = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(b, c);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(b.predict(i, j).unwrap().to_bits(), c.predict(i, j).unwrap().to_bits());
            }
        }
        let zero = ModelBundle::new(
            ModelMeta {
                rank: 0,
                ..c.meta.clone()
            },
            FactorPair::zero(3, 3),
            None,
        )
        .unwrap();
        zero.save(dir.path()).unwrap();
        assert_eq!(ModelBundle::load(dir.path()).unwrap(), zero);
    }

    #[test]
    fn bundle_rejects_inconsistent_meta() {
        let dir = tempfile::tempdir().unwrap();
        let b = ModelBundle {
            meta: ModelMeta {
                format_version: BUNDLE_FORMAT_VERSION,
                m: 2,
                n: 2,
                rank: 1,
                lambda: 1.0,
                algorithm: "als".into(),
                seed: 1,
                converged: true,
                iterations: 1,
                lambda_max: 2.0,
            },
            factors: FactorPair::zero(2, 2),
            scaling: None,
        };
        assert!(b.validate().is_err());
        assert!(b.save(dir.path()).is_err());
    }

    #[test]
    fn format_names() {
        for f in [DataFormat::MatrixMarket, DataFormat::CsvTriplets, DataFormat::MovieLens] {
            assert_eq!(f.to_string().parse::<DataFormat>().unwrap(), f);
        }
        assert_eq!(
            DataFormat::from_path(Path::new("a/u.data")),
            Some(DataFormat::MovieLens)
        );
    }
}
