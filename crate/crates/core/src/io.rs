//! CSV tables for fields, ledgers, reports and streamlines.
//!
//! Floats are written in shortest round-trip form, so reading a table back
//! reproduces the values bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::analysis::{DirectionScalingReport, Histogram};
use crate::committor::CommittorField;
use crate::error::{Error, Result};
use crate::flux::{alpha_hat, CrossingLedger, CurrentField};
use crate::reference::{FdGrid, GridScalarField, GridVectorField};
use crate::streamlines::Streamline;
use crate::tessellation::{MetastableIndexSets, Tessellation};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    if !path.exists() {
        return Err(Error::Io(format!("missing input {}", path.display())));
    }
    Ok(csv::Reader::from_path(path)?)
}

fn xy(p: &[f64]) -> [String; 2] {
    [
        p[0].to_string(),
        p.get(1).map(f64::to_string).unwrap_or_default(),
    ]
}

fn num(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Io(format!("bad {what} value {field:?}")))
}

fn count(field: &str, what: &str) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Io(format!("bad {what} value {field:?}")))
}

/// `cells.csv`: cell_id, gx, gy, mu, in_J, in_K.
pub fn write_cells(
    path: &Path,
    tess: &Tessellation,
    mu: &[f64],
    sets: &MetastableIndexSets,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["cell_id", "gx", "gy", "mu", "in_J", "in_K"])?;
    for i in 0..tess.n_cells() {
        let [gx, gy] = xy(tess.generator(i));
        w.write_record([
            i.to_string(),
            gx,
            gy,
            mu[i].to_string(),
            u8::from(sets.in_j(i)).to_string(),
            u8::from(sets.in_k(i)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `facets.csv`: i, k, nx, ny, sigma (each facet once, `i < k`).
pub fn write_facets(path: &Path, tess: &Tessellation) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["i", "k", "nx", "ny", "sigma"])?;
    for f in tess.facets() {
        let [nx, ny] = xy(&f.normal);
        w.write_record([
            f.i.to_string(),
            f.k.to_string(),
            nx,
            ny,
            f.measure.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `committor.csv`: cell_id, gx, gy, q_tilde, n_samples, n_censored.
pub fn write_committor(path: &Path, tess: &Tessellation, q: &CommittorField) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["cell_id", "gx", "gy", "q_tilde", "n_samples", "n_censored"])?;
    for i in 0..tess.n_cells() {
        let [gx, gy] = xy(tess.generator(i));
        w.write_record([
            i.to_string(),
            gx,
            gy,
            q.values[i].to_string(),
            q.n_samples[i].to_string(),
            q.n_censored[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_committor(path: &Path, tess: &Tessellation) -> Result<CommittorField> {
    let mut r = reader(path)?;
    let mut field = CommittorField {
        values: Vec::new(),
        n_samples: Vec::new(),
        n_censored: Vec::new(),
        tess_id: tess.fingerprint(),
    };
    for rec in r.records() {
        let rec = rec?;
        field.values.push(num(&rec[3], "q_tilde")?);
        field.n_samples.push(count(&rec[4], "n_samples")?);
        field.n_censored.push(count(&rec[5], "n_censored")?);
    }
    if field.values.len() != tess.n_cells() {
        return Err(Error::ShapeMismatch {
            left: field.values.len(),
            right: tess.n_cells(),
        });
    }
    Ok(field)
}

/// `current.csv`: cell_id, gx, gy, jx, jy, residual.
pub fn write_current(path: &Path, tess: &Tessellation, field: &CurrentField) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["cell_id", "gx", "gy", "jx", "jy", "residual"])?;
    for i in 0..tess.n_cells() {
        let [gx, gy] = xy(tess.generator(i));
        let [jx, jy] = xy(field.vector(i));
        w.write_record([i.to_string(), gx, gy, jx, jy, field.residual[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_current(path: &Path, tess: &Tessellation) -> Result<CurrentField> {
    let mut r = reader(path)?;
    let d = tess.dim();
    let mut vectors = Vec::new();
    let mut residual = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        vectors.push(num(&rec[3], "jx")?);
        if d == 2 {
            vectors.push(num(&rec[4], "jy")?);
        }
        residual.push(num(&rec[5], "residual")?);
    }
    let mut field = CurrentField::from_vectors(tess, vectors)?;
    field.residual = residual;
    Ok(field)
}

/// `ledger.csv`: i, k, net, alpha_hat over adjacent pairs with nonzero net.
pub fn write_ledger(path: &Path, tess: &Tessellation, ledger: &CrossingLedger) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["i", "k", "net", "alpha_hat"])?;
    for ((i, k), net) in ledger.pairs() {
        w.write_record([
            i.to_string(),
            k.to_string(),
            net.to_string(),
            alpha_hat(ledger, tess, i, k).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `reference.csv`: node_id, gx, gy, q_ref, jx_ref, jy_ref.
pub fn write_reference(
    path: &Path,
    grid: &FdGrid,
    q: &GridScalarField,
    j: &GridVectorField,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["node_id", "gx", "gy", "q_ref", "jx_ref", "jy_ref"])?;
    for n in 0..grid.n_nodes() {
        let [gx, gy] = xy(&grid.node(n));
        let [jx, jy] = xy(j.at(n));
        w.write_record([n.to_string(), gx, gy, q.values[n].to_string(), jx, jy])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `reference.csv` back onto the node layout of `grid`.
pub fn read_reference(path: &Path, grid: &FdGrid) -> Result<(GridScalarField, GridVectorField)> {
    let mut r = reader(path)?;
    let d = grid.spec().dim();
    let mut q = Vec::new();
    let mut j = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        q.push(num(&rec[3], "q_ref")?);
        j.push(num(&rec[4], "jx_ref")?);
        if d == 2 {
            j.push(num(&rec[5], "jy_ref")?);
        }
    }
    if q.len() != grid.n_nodes() {
        return Err(Error::ShapeMismatch {
            left: q.len(),
            right: grid.n_nodes(),
        });
    }
    Ok((
        GridScalarField {
            spec: grid.spec().clone(),
            values: q,
        },
        GridVectorField {
            spec: grid.spec().clone(),
            values: j,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub rho: f64,
    pub h: f64,
    pub dt: f64,
    pub l2_mu_q: Option<f64>,
    pub l2_mu_j: Option<f64>,
}

/// `errors.csv`: rho, h, dt, l2_mu_q, l2_mu_j; missing metrics are empty.
pub fn write_errors(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["rho", "h", "dt", "l2_mu_q", "l2_mu_j"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.rho.to_string(),
            r.h.to_string(),
            r.dt.to_string(),
            opt(r.l2_mu_q),
            opt(r.l2_mu_j),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_errors(path: &Path) -> Result<Vec<ErrorRow>> {
    let mut r = reader(path)?;
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, "error").map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ErrorRow {
            rho: num(&rec[0], "rho")?,
            h: num(&rec[1], "h")?,
            dt: num(&rec[2], "dt")?,
            l2_mu_q: opt(&rec[3])?,
            l2_mu_j: opt(&rec[4])?,
        });
    }
    Ok(rows)
}

/// `dr_report.csv`: cell_id, D, R, masked; masked cells have empty D and R.
pub fn write_dr_report(path: &Path, report: &DirectionScalingReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["cell_id", "D", "R", "masked"])?;
    for i in 0..report.masked.len() {
        let (d, r) = if report.masked[i] {
            (String::new(), String::new())
        } else {
            (report.direction[i].to_string(), report.ratio[i].to_string())
        };
        w.write_record([i.to_string(), d, r, u8::from(report.masked[i]).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `histograms.csv`: metric, bin_lo, bin_hi, count.
pub fn write_histograms(path: &Path, hists: &[(&str, &Histogram)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["metric", "bin_lo", "bin_hi", "count"])?;
    for (name, h) in hists {
        for (b, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(b);
            w.write_record([
                name.to_string(),
                lo.to_string(),
                hi.to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `streamlines.csv`: streamline_id, t, x1, x2, status.
pub fn write_streamlines(path: &Path, lines: &[Streamline]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["streamline_id", "t", "x1", "x2", "status"])?;
    for (id, s) in lines.iter().enumerate() {
        for j in 0..s.len() {
            let [x1, x2] = xy(s.point(j));
            w.write_record([
                id.to_string(),
                s.times[j].to_string(),
                x1,
                x2,
                s.status.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `contents` to `path` followed by a newline.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(contents.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
