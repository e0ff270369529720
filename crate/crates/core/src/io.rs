//! Field dumps and CSV reports.
//!
//! Binary field layout, all little-endian:
//!
//! ```text
//! b"NLSF" | u32 version = 1 | f64 L | u32 N | N^3 f64 samples (j3 fastest)
//! ```
//!
//! CSV reals are written with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gap::{BetaScan, BetaStar, CubicFit, GapReport, ScanRow};
use crate::grid::{GridSpec, RealField};
use crate::soliton::SolitonResult;

pub const MAGIC: &[u8; 4] = b"NLSF";
pub const VERSION: u32 = 1;

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

pub fn write_field_to<W: Write>(mut w: W, field: &RealField) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&g.side().to_le_bytes())?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    for v in field.samples() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_from<R: Read>(mut r: R) -> Result<RealField> {
    let mut head = [0u8; 20];
    r.read_exact(&mut head).map_err(|_| Error::Format("truncated header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let side = f64::from_le_bytes(head[8..16].try_into().expect("8 bytes"));
    let n = u32::from_le_bytes(head[16..20].try_into().expect("4 bytes")) as usize;
    let grid = GridSpec::new(side, n).map_err(|e| Error::Format(format!("invalid grid in header: {e}")))?;
    let mut bytes = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated sample data".into()))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    let samples = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    RealField::from_samples(grid, samples).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field(path: impl AsRef<Path>, field: &RealField) -> Result<()> {
    write_field_to(BufWriter::new(File::create(path)?), field)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<RealField> {
    read_field_from(BufReader::new(File::open(path)?))
}

/// Reads a field and insists on the given grid.
pub fn read_field_on(path: impl AsRef<Path>, grid: GridSpec) -> Result<RealField> {
    let f = read_field(path)?;
    if *f.grid() != grid {
        return Err(Error::GridMismatch {
            expected: (grid.side(), grid.n()),
            found: (f.grid().side(), f.grid().n()),
        });
    }
    Ok(f)
}

/// One line of a soliton convergence history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub residual: f64,
    pub m: f64,
    pub r: [f64; 3],
}

pub fn history_rows(result: &SolitonResult) -> Vec<HistoryRow> {
    (0..result.residual_history.len())
        .map(|i| HistoryRow {
            iter: i,
            residual: result.residual_history[i],
            m: result.m_history[i],
            r: result.r_history[i],
        })
        .collect()
}

pub fn write_history<W: Write>(w: W, rows: &[HistoryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iter", "residual", "M", "R1", "R2", "R3"])?;
    for r in rows {
        out.write_record([
            r.iter.to_string(),
            fmt_real(r.residual),
            fmt_real(r.m),
            fmt_real(r.r[0]),
            fmt_real(r.r[1]),
            fmt_real(r.r[2]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<HistoryRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["iter", "residual", "M", "R1", "R2", "R3"])?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let iter = rec[0].trim().parse().map_err(|_| Error::Format(format!("bad iteration {:?}", &rec[0])))?;
            Ok(HistoryRow {
                iter,
                residual: parse_real(&rec[1])?,
                m: parse_real(&rec[2])?,
                r: [parse_real(&rec[3])?, parse_real(&rec[4])?, parse_real(&rec[5])?],
            })
        })
        .collect()
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got = rdr.headers()?;
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::Format(format!("expected columns {want:?}, found {:?}", got.iter().collect::<Vec<_>>())));
    }
    Ok(())
}

pub const SCAN_COLUMNS: [&str; 7] =
    ["beta", "lambda5_plus", "lambda2_minus", "lambda1_plus", "triplet_spread", "soliton_residual", "lambda6_plus"];

pub fn write_scan<W: Write>(w: W, scan: &BetaScan) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCAN_COLUMNS)?;
    for r in &scan.rows {
        out.write_record(
            [r.beta, r.lambda5_plus, r.lambda2_minus, r.lambda1_plus, r.triplet_spread, r.soliton_residual, r.lambda6_plus]
                .map(fmt_real),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a scan table. Failure messages are not stored in the CSV, so
/// rows come back with `failure: None`.
pub fn read_scan<R: Read>(r: R, grid: GridSpec) -> Result<BetaScan> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &SCAN_COLUMNS)?;
    let rows = rdr
        .records()
        .map(|rec| {
            let rec = rec?;
            let v: Vec<f64> = rec.iter().map(parse_real).collect::<Result<_>>()?;
            Ok(ScanRow {
                beta: v[0],
                lambda5_plus: v[1],
                lambda2_minus: v[2],
                lambda1_plus: v[3],
                triplet_spread: v[4],
                soliton_residual: v[5],
                lambda6_plus: v[6],
                failure: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BetaScan { grid, rows })
}

/// Eigenvalue table of a gap report: one row per computed eigenvalue.
pub fn write_gap_report<W: Write>(w: W, report: &GapReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["operator", "index", "lambda", "relative_residual"])?;
    let res = |i: usize| report.eigen_residuals.get(i).copied().unwrap_or(f64::NAN);
    for (i, l) in report.lambdas_minus.iter().enumerate() {
        out.write_record(["K-".to_string(), (i + 1).to_string(), fmt_real(*l), fmt_real(res(i))])?;
    }
    for (i, l) in report.lambdas_plus.iter().enumerate() {
        // The K+ values are rescaled K- values, so they share residuals.
        out.write_record(["K+".to_string(), (i + 1).to_string(), fmt_real(*l), fmt_real(res(i))])?;
    }
    if let Some(direct) = &report.lambdas_plus_direct {
        for (i, l) in direct.iter().enumerate() {
            out.write_record(["K+direct".to_string(), (i + 1).to_string(), fmt_real(*l), String::new()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a `(beta, lambda_5)` interpolation table of exactly four rows; a
/// header line is optional.
pub fn read_table<R: Read>(r: R) -> Result<[(f64, f64); 4]> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format(format!("row {} needs two columns", i + 1)));
        }
        match (rec[0].trim().parse::<f64>(), rec[1].trim().parse::<f64>()) {
            (Ok(b), Ok(l)) => rows.push((b, l)),
            _ if i == 0 => continue,
            _ => return Err(Error::Format(format!("row {} is not numeric", i + 1))),
        }
    }
    rows.try_into().map_err(|v: Vec<_>| Error::Format(format!("expected 4 table rows, found {}", v.len())))
}

/// Everything a crossing search reports, in CSV-friendly form.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaStarReport {
    pub bracket: (f64, f64),
    pub table: [(f64, f64); 4],
    pub fit: CubicFit,
    pub beta_star: f64,
    pub uncertainty: f64,
    pub evaluations: Vec<(f64, f64)>,
}

impl From<&BetaStar> for BetaStarReport {
    fn from(s: &BetaStar) -> Self {
        BetaStarReport {
            bracket: s.bracket,
            table: s.table,
            fit: s.fit,
            beta_star: s.beta_star,
            uncertainty: s.uncertainty,
            evaluations: s.evaluations.clone(),
        }
    }
}

/// Rows `record,x,y`: `table` (beta, lambda5), `bracket` (lo, hi), `scaling`
/// (origin, width), `coefficient` (power, value), `root` (beta*,
/// uncertainty) and `evaluation` (beta, lambda5).
pub fn write_beta_star<W: Write>(w: W, rep: &BetaStarReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["record", "x", "y"])?;
    let mut row = |kind: &str, x: String, y: f64| out.write_record([kind.to_string(), x, fmt_real(y)]);
    for (b, l) in rep.table {
        row("table", fmt_real(b), l)?;
    }
    row("bracket", fmt_real(rep.bracket.0), rep.bracket.1)?;
    row("scaling", fmt_real(rep.fit.origin), rep.fit.width)?;
    for (p, c) in rep.fit.coeffs.iter().enumerate() {
        row("coefficient", p.to_string(), *c)?;
    }
    row("root", fmt_real(rep.beta_star), rep.uncertainty)?;
    for (b, l) in &rep.evaluations {
        row("evaluation", fmt_real(*b), *l)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_beta_star<R: Read>(r: R) -> Result<BetaStarReport> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["record", "x", "y"])?;
    let mut table = Vec::new();
    let mut bracket = None;
    let mut scaling = None;
    let mut coeffs = [f64::NAN; 4];
    let mut root = None;
    let mut evaluations = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (x, y) = (&rec[1], parse_real(&rec[2])?);
        match rec[0].trim() {
            "table" => table.push((parse_real(x)?, y)),
            "bracket" => bracket = Some((parse_real(x)?, y)),
            "scaling" => scaling = Some((parse_real(x)?, y)),
            "coefficient" => {
                let p: usize = x.trim().parse().map_err(|_| Error::Format(format!("bad power {x:?}")))?;
                *coeffs.get_mut(p).ok_or_else(|| Error::Format(format!("power {p} out of range")))? = y;
            }
            "root" => root = Some((parse_real(x)?, y)),
            "evaluation" => evaluations.push((parse_real(x)?, y)),
            other => return Err(Error::Format(format!("unknown record {other:?}"))),
        }
    }
    let missing = |what: &str| Error::Format(format!("missing {what} record"));
    let table: [(f64, f64); 4] =
        table.try_into().map_err(|v: Vec<_>| Error::Format(format!("expected 4 table rows, found {}", v.len())))?;
    let (origin, width) = scaling.ok_or_else(|| missing("scaling"))?;
    let (beta_star, uncertainty) = root.ok_or_else(|| missing("root"))?;
    Ok(BetaStarReport {
        bracket: bracket.ok_or_else(|| missing("bracket"))?,
        table,
        fit: CubicFit { origin, width, coeffs },
        beta_star,
        uncertainty,
        evaluations,
    })
}
