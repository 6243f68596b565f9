//! CSV exports with a one-line JSON comment header, and the matrix reader.

use std::io::{BufRead, BufReader, Read, Write};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::histogram::{BinAxis, Histogram1D, Histogram2D};
use crate::spdc::{GridAxis, JsaGrid};

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::data(format!("csv: {k:?}")),
    }
}

fn header_line<W: Write>(w: &mut W, meta: &Value) -> Result<()> {
    writeln!(w, "# {meta}")?;
    Ok(())
}

/// `lo_tick,hi_tick,center_ps,count[,wavelength_nm]`; `wavelength` maps a bin centre in ps.
pub fn write_hist1d<W: Write>(
    mut w: W,
    h: &Histogram1D,
    mut meta: Value,
    wavelength: Option<&dyn Fn(f64) -> f64>,
) -> Result<()> {
    meta["axis"] = serde_json::to_value(h.axis)?;
    meta["underflow"] = json!(h.under);
    meta["overflow"] = json!(h.over);
    meta["units"] = json!({"time": "ps", "tick_ps": h.axis.tick_ps});
    header_line(&mut w, &meta)?;
    let mut c = csv::Writer::from_writer(w);
    let mut cols = vec!["lo_tick", "hi_tick", "center_ps", "count"];
    if wavelength.is_some() {
        cols.push("wavelength_nm");
    }
    c.write_record(&cols).map_err(csv_err)?;
    for k in 0..h.axis.bins {
        let ps = h.axis.center_ps(k);
        let mut row =
            vec![h.axis.edge(k).to_string(), (h.axis.edge(k + 1) - 1).to_string(), ps.to_string(), h.counts[k].to_string()];
        if let Some(f) = wavelength {
            row.push(f(ps).to_string());
        }
        c.write_record(&row).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

fn write_matrix<W: Write, T: ToString>(mut w: W, meta: &Value, cols: usize, data: &[T]) -> Result<()> {
    header_line(&mut w, meta)?;
    let mut c = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in data.chunks(cols.max(1)) {
        c.write_record(row.iter().map(ToString::to_string)).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Count matrix, signal rows × idler columns.
pub fn write_jsi<W: Write>(w: W, h: &Histogram2D, mut meta: Value) -> Result<()> {
    meta["kind"] = json!("jsi");
    meta["rows"] = json!("signal");
    meta["signal_axis"] = serde_json::to_value(h.signal)?;
    meta["idler_axis"] = serde_json::to_value(h.idler)?;
    meta["out_of_range"] = json!(h.out_of_range);
    meta["total"] = json!(h.in_range());
    write_matrix(w, &meta, h.idler.bins, &h.counts)
}

/// |f|² on the frequency grid.
pub fn write_jsa_intensity<W: Write>(w: W, jsa: &JsaGrid, mut meta: Value) -> Result<()> {
    let g = &jsa.grid;
    meta["kind"] = json!("jsi");
    meta["rows"] = json!("signal");
    meta["signal_axis"] = json!({"start": g.signal.start, "step": g.signal.step, "len": g.signal.len, "unit": "rad/ps"});
    meta["idler_axis"] = json!({"start": g.idler.start, "step": g.idler.step, "len": g.idler.len, "unit": "rad/ps"});
    write_matrix(w, &meta, jsa.n_idler(), &jsa.intensity())
}

/// `index,lo_tick,center_ps[,wavelength_nm]` for a histogram axis.
pub fn write_bin_axis<W: Write>(w: W, axis: &BinAxis, wavelength: Option<&dyn Fn(f64) -> f64>) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    let mut cols = vec!["index", "lo_tick", "center_ps"];
    if wavelength.is_some() {
        cols.push("wavelength_nm");
    }
    c.write_record(&cols).map_err(csv_err)?;
    for k in 0..axis.bins {
        let ps = axis.center_ps(k);
        let mut row = vec![k.to_string(), axis.edge(k).to_string(), ps.to_string()];
        if let Some(f) = wavelength {
            row.push(f(ps).to_string());
        }
        c.write_record(&row).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// `index,omega_rad_per_ps,wavelength_nm`.
pub fn write_grid_axis<W: Write>(w: W, axis: &GridAxis) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["index", "omega_rad_per_ps", "wavelength_nm"]).map_err(csv_err)?;
    for k in 0..axis.len {
        c.write_record([k.to_string(), axis.omega(k).to_string(), axis.wavelength_nm(k).to_string()]).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Numeric matrix with its optional JSON header.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub meta: Option<Value>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

pub fn read_matrix<R: Read>(source: R) -> Result<Matrix> {
    let mut r = BufReader::new(source);
    let mut meta = None;
    let mut first = String::new();
    r.read_line(&mut first)?;
    let rest: Box<dyn Read> = match first.trim_start().strip_prefix('#') {
        Some(m) => {
            meta = serde_json::from_str(m.trim()).ok();
            Box::new(r)
        }
        None => Box::new(std::io::Cursor::new(first.into_bytes()).chain(r)),
    };
    let mut c = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(rest);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in c.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(n) if n != rec.len() => {
                return Err(Error::data(format!("row {rows} has {} columns, expected {n}", rec.len())))
            }
            _ => {}
        }
        for f in rec.iter() {
            let v: f64 = f.parse().map_err(|_| Error::data(format!("row {rows}: {f:?} is not a number")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("matrix entry"));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::data("empty matrix"))?;
    Ok(Matrix { meta, rows, cols, values })
}
