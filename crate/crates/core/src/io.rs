//! CSV and binary readers and writers for datasets, embeddings and tables.
//!
//! Floats are written with 17 significant digits so every value survives a
//! round trip. Lines end in `\n`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::datasets::{DataMatrix, Intrinsic};
use crate::error::{Error, Result};
use crate::graph::SquareMatrix;
use crate::nre::{NreCurve, SearchRound};
use crate::spectral::{Embedding, SpectrumTable};

pub const INTRINSIC_PREFIX: &str = "intrinsic_";
pub const TRIPLET_MAGIC: &[u8; 8] = b"DMTRIP01";

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Write a header and float rows.
fn write_table<W: Write>(w: W, header: &[String], rows: &DMatrix<f64>) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header)?;
    for r in 0..rows.nrows() {
        out.write_record(rows.row(r).iter().map(|v| format_float(*v)))?;
    }
    out.flush()?;
    Ok(())
}

fn append_intrinsic(
    header: &mut Vec<String>,
    values: &DMatrix<f64>,
    intrinsic: Option<&Intrinsic>,
) -> Result<DMatrix<f64>> {
    let Some(intr) = intrinsic else {
        return Ok(values.clone());
    };
    if intr.values.nrows() != values.nrows() {
        return Err(Error::Dimension(format!(
            "{} rows but {} intrinsic rows",
            values.nrows(),
            intr.values.nrows()
        )));
    }
    header.extend(intr.names.iter().map(|n| format!("{INTRINSIC_PREFIX}{n}")));
    let (n, a, b) = (values.nrows(), values.ncols(), intr.values.ncols());
    Ok(DMatrix::from_fn(n, a + b, |r, c| {
        if c < a {
            values[(r, c)]
        } else {
            intr.values[(r, c - a)]
        }
    }))
}

pub fn write_data_matrix_to<W: Write>(w: W, x: &DataMatrix) -> Result<()> {
    let mut header = x.column_names().to_vec();
    let all = append_intrinsic(&mut header, x.values(), x.intrinsic())?;
    write_table(w, &header, &all)
}

pub fn write_data_matrix(path: &Path, x: &DataMatrix) -> Result<()> {
    write_data_matrix_to(create(path)?, x)
}

/// Parse a data CSV: a header row, then one row of floats per point.
/// Columns named `intrinsic_*` become intrinsic coordinates.
pub fn parse_data_matrix(bytes: &[u8]) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Format("missing header row".into()));
    }
    let is_intrinsic: Vec<bool> = header.iter().map(|h| h.starts_with(INTRINSIC_PREFIX)).collect();
    let data_names: Vec<String> = header
        .iter()
        .zip(&is_intrinsic)
        .filter(|(_, i)| !**i)
        .map(|(h, _)| h.clone())
        .collect();
    let intr_names: Vec<String> = header
        .iter()
        .zip(&is_intrinsic)
        .filter(|(_, i)| **i)
        .map(|(h, _)| h[INTRINSIC_PREFIX.len()..].to_string())
        .collect();

    let mut data = Vec::new();
    let mut intr = Vec::new();
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Format(format!(
                "row {} has {} fields, header has {}",
                line + 1,
                record.len(),
                header.len()
            )));
        }
        for (field, intrinsic) in record.iter().zip(&is_intrinsic) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", line + 1)))?;
            if *intrinsic {
                intr.push(v);
            } else {
                data.push(v);
            }
        }
        rows += 1;
    }
    let values = DMatrix::from_row_slice(rows, data_names.len(), &data);
    let x = DataMatrix::new(values, data_names)?;
    if intr_names.is_empty() {
        Ok(x)
    } else {
        let iv = DMatrix::from_row_slice(rows, intr_names.len(), &intr);
        x.with_intrinsic(intr_names, iv)
    }
}

pub fn read_data_matrix(path: &Path) -> Result<DataMatrix> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_data_matrix(&bytes)
}

/// Embedding columns (`psi_<i>` or `pc_<i>`) followed by pass-through
/// intrinsic columns.
pub fn write_embedding(path: &Path, emb: &Embedding, intrinsic: Option<&Intrinsic>) -> Result<()> {
    let mut header = emb.column_names();
    let all = append_intrinsic(&mut header, &emb.coords, intrinsic)?;
    write_table(create(path)?, &header, &all)
}

/// Like [`write_embedding`] with a leading `row` column holding each point's
/// index in the full dataset.
pub fn write_embedding_rows(
    path: &Path,
    emb: &Embedding,
    intrinsic: Option<&Intrinsic>,
    rows: &[usize],
) -> Result<()> {
    if rows.len() != emb.n() {
        return Err(Error::Dimension(format!("{} row labels for {} points", rows.len(), emb.n())));
    }
    let mut header = emb.column_names();
    let all = append_intrinsic(&mut header, &emb.coords, intrinsic)?;
    let mut out = csv_writer(create(path)?);
    out.write_record(std::iter::once("row".to_string()).chain(header))?;
    for (r, idx) in rows.iter().enumerate() {
        out.write_record(std::iter::once(idx.to_string()).chain(all.row(r).iter().map(|v| format_float(*v))))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_spectrum(path: &Path, table: &SpectrumTable) -> Result<()> {
    let mut out = csv_writer(create(path)?);
    let mut header = vec!["index".to_string(), "lambda".to_string()];
    header.extend(table.t_list.iter().map(|t| format!("lambda_pow_{t}")));
    out.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.index.to_string(), format_float(row.lambda)];
        rec.extend(row.powers.iter().map(|v| format_float(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn join_components(components: &[usize]) -> String {
    components.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

/// Curve table `(set_size, components, nre)`; components are `;`-separated.
/// An optional baseline row for the empty set comes first.
pub fn write_curve(path: &Path, baseline: Option<f64>, curve: &NreCurve) -> Result<()> {
    let mut out = csv_writer(create(path)?);
    out.write_record(["set_size", "components", "nre"])?;
    if let Some(b) = baseline {
        out.write_record(["0".to_string(), String::new(), format_float(b)])?;
    }
    for e in &curve.entries {
        out.write_record([
            e.components.len().to_string(),
            join_components(&e.components),
            format_float(e.nre),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per candidate per search round.
pub fn write_rounds(path: &Path, rounds: &[SearchRound]) -> Result<()> {
    let mut out = csv_writer(create(path)?);
    out.write_record(["round", "chosen_before", "candidate", "nre", "picked", "error"])?;
    for r in rounds {
        for c in &r.candidates {
            out.write_record([
                (r.round + 1).to_string(),
                join_components(&r.chosen_before),
                c.component.to_string(),
                c.nre.map(format_float).unwrap_or_default(),
                u8::from(c.component == r.picked).to_string(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_triplets_csv(path: &Path, m: &SquareMatrix) -> Result<()> {
    let mut out = csv_writer(create(path)?);
    out.write_record(["row", "col", "value"])?;
    for (r, c, v) in m.triplets() {
        out.write_record([r.to_string(), c.to_string(), format_float(v)])?;
    }
    out.flush()?;
    Ok(())
}

/// Binary layout, little endian: magic `DMTRIP01`, `n: u64`, `nnz: u64`,
/// then `nnz` records of `(row: u64, col: u64, value: f64)`.
pub fn encode_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 24 * triplets.len());
    out.extend_from_slice(TRIPLET_MAGIC);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(triplets.len() as u64).to_le_bytes());
    for &(r, c, v) in triplets {
        out.extend_from_slice(&(r as u64).to_le_bytes());
        out.extend_from_slice(&(c as u64).to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

/// Inverse of [`encode_triplets`]. Returns the dimension and the entries.
pub fn decode_triplets(bytes: &[u8]) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    if bytes.len() < 24 || &bytes[..8] != TRIPLET_MAGIC {
        return Err(Error::Format("not a triplet file".into()));
    }
    let n = read_u64(bytes, 8);
    let nnz = read_u64(bytes, 16);
    let body = bytes.len() - 24;
    if body % 24 != 0 || (body / 24) as u64 != nnz {
        return Err(Error::Format(format!(
            "header announces {nnz} entries, body holds {} bytes",
            body
        )));
    }
    let n = usize::try_from(n).map_err(|_| Error::Format("dimension overflows usize".into()))?;
    let mut out = Vec::with_capacity(body / 24);
    for k in 0..body / 24 {
        let at = 24 + 24 * k;
        let (r, c) = (read_u64(bytes, at), read_u64(bytes, at + 8));
        if r >= n as u64 || c >= n as u64 {
            return Err(Error::Format(format!("entry {k} at ({r}, {c}) outside {n}x{n}")));
        }
        let v = f64::from_le_bytes(bytes[at + 16..at + 24].try_into().unwrap());
        out.push((r as usize, c as usize, v));
    }
    Ok((n, out))
}

pub fn write_triplets_binary(path: &Path, m: &SquareMatrix) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&encode_triplets(m.dim(), &m.triplets()))?;
    w.flush()?;
    Ok(())
}
