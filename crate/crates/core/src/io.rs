//! File formats: coordinate text (.mtx), dense CSV (.csv), and raw
//! binary (.bin) matrices, vector batches, activation traces, node
//! attribute tables, permutations, and the restructured-system bundle
//! directory.
//!
//! Text floats use the shortest round-trip decimal form, so write/read
//! cycles reproduce in-memory values exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boolmat::BoolMatrix;
use crate::error::{Error, Result};
use crate::realmat::{Nonlinearity, RealMatrix, RealVector};
use crate::runtime::{BlockOp, Embedding, Projection, RestructuredSystem, SubOperator};
use crate::structure::{invert_permutation, validate_permutation, NodeAttributeTable, NodeRow};
use crate::training::ActivationTrace;

const BIN_MAGIC: &[u8; 8] = b"DCMPMAT1";

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn parse_f64(tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(format!("bad float {tok:?}")))
}

fn parse_usize(tok: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(format!("bad integer {tok:?}")))
}

/// Writes a matrix in 1-based coordinate text: comment lines start with
/// `%`, the first data line is `rows cols nnz`, then one `i j value`
/// line per stored (nonzero) entry in row-major order.
pub fn write_matrix_mtx(path: &Path, m: &RealMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let nnz = m.entries().iter().filter(|&&v| v != 0.0).count();
    writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), nnz)?;
    for i in 0..m.n_rows() {
        for j in 0..m.n_cols() {
            let v = m.get(i, j);
            if v != 0.0 {
                writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_mtx(path: &Path) -> Result<RealMatrix> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut m = RealMatrix::zeros(0, 0);
    let mut seen = 0usize;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match dims {
            None => {
                if toks.len() != 3 {
                    return Err(parse_err("header must be `rows cols nnz`"));
                }
                let (r, c, nnz) = (
                    parse_usize(toks[0])?,
                    parse_usize(toks[1])?,
                    parse_usize(toks[2])?,
                );
                dims = Some((r, c, nnz));
                m = RealMatrix::zeros(r, c);
            }
            Some((r, c, _)) => {
                if toks.len() != 3 {
                    return Err(parse_err(format!("bad entry line {line:?}")));
                }
                let (i, j) = (parse_usize(toks[0])?, parse_usize(toks[1])?);
                let v = parse_f64(toks[2])?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(parse_err(format!("index ({i},{j}) out of bounds")));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i - 1, col: j - 1 });
                }
                m.set(i - 1, j - 1, v);
                seen += 1;
            }
        }
    }
    match dims {
        Some((_, _, nnz)) if nnz == seen => Ok(m),
        Some((_, _, nnz)) => Err(parse_err(format!("expected {nnz} entries, found {seen}"))),
        None => Err(parse_err("empty matrix file")),
    }
}

/// Dense CSV: one row per line, comma-separated values, no header.
pub fn write_matrix_csv(path: &Path, m: &RealMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for i in 0..m.n_rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<RealMatrix> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| parse_f64(t.trim()))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err("ragged CSV rows"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err("empty CSV matrix"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    RealMatrix::from_entries(r, c, rows.into_iter().flatten().collect())
}

/// Raw binary: 8-byte magic, u64 LE rows, u64 LE cols, then row-major
/// f64 LE entries.
pub fn write_matrix_bin(path: &Path, m: &RealMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(BIN_MAGIC)?;
    out.write_all(&(m.n_rows() as u64).to_le_bytes())?;
    out.write_all(&(m.n_cols() as u64).to_le_bytes())?;
    for &v in m.entries() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<RealMatrix> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 24 || &data[0..8] != BIN_MAGIC {
        return Err(parse_err("bad binary matrix header"));
    }
    let r = u64::from_le_bytes(data[8..16].try_into().unwrap()) as usize;
    let c = u64::from_le_bytes(data[16..24].try_into().unwrap()) as usize;
    let need = 24 + r * c * 8;
    if data.len() != need {
        return Err(parse_err(format!(
            "binary matrix payload is {} bytes, expected {need}",
            data.len()
        )));
    }
    let entries: Vec<f64> = data[24..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    RealMatrix::from_entries(r, c, entries)
}

/// Dispatches on extension: `.mtx`, `.csv`, or `.bin`.
pub fn write_matrix(path: &Path, m: &RealMatrix) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => write_matrix_mtx(path, m),
        Some("csv") => write_matrix_csv(path, m),
        Some("bin") => write_matrix_bin(path, m),
        other => Err(Error::InvalidInput(format!(
            "unsupported matrix extension {other:?} (use .mtx/.csv/.bin)"
        ))),
    }
}

pub fn read_matrix(path: &Path) -> Result<RealMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => read_matrix_mtx(path),
        Some("csv") => read_matrix_csv(path),
        Some("bin") => read_matrix_bin(path),
        other => Err(Error::InvalidInput(format!(
            "unsupported matrix extension {other:?} (use .mtx/.csv/.bin)"
        ))),
    }
}

/// Writes a Boolean relation as coordinate text with unit values.
pub fn write_bool_matrix(path: &Path, m: &BoolMatrix) -> Result<()> {
    let mut dense = RealMatrix::zeros(m.n(), m.n());
    for i in 0..m.n() {
        for j in m.row_indices(i) {
            dense.set(i, j, 1.0);
        }
    }
    write_matrix_mtx(path, &dense)
}

pub fn read_bool_matrix(path: &Path) -> Result<BoolMatrix> {
    let dense = read_matrix(path)?;
    if !dense.is_square() {
        return Err(Error::InvalidInput("adjacency matrix must be square".into()));
    }
    let n = dense.n_rows();
    let mut m = BoolMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if dense.get(i, j) != 0.0 {
                m.set(i, j, true);
            }
        }
    }
    Ok(m)
}

/// Vector batch CSV: one vector per line, comma-separated.
pub fn write_vectors_csv(path: &Path, vs: &[RealVector]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for v in vs {
        let row: Vec<String> = v.entries().iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vectors_csv(path: &Path) -> Result<Vec<RealVector>> {
    let m = read_matrix_csv(path)?;
    Ok((0..m.n_rows())
        .map(|i| RealVector::from_entries(m.row(i).to_vec()).expect("entries already validated"))
        .collect())
}

/// Activation trace: one step per line, space-separated 1-based indices;
/// empty lines encode empty steps.
pub fn write_trace(path: &Path, trace: &ActivationTrace) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for step in &trace.steps {
        let toks: Vec<String> = step.iter().map(|&i| (i + 1).to_string()).collect();
        writeln!(out, "{}", toks.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path, n: usize) -> Result<ActivationTrace> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut steps = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let step = line
            .split_whitespace()
            .map(|t| {
                let i = parse_usize(t)?;
                if i == 0 {
                    return Err(parse_err("trace indices are 1-based"));
                }
                Ok(i - 1)
            })
            .collect::<Result<Vec<usize>>>()?;
        steps.push(step);
    }
    ActivationTrace::new(n, steps)
}

const NODE_TABLE_HEADER: &str = "V_TAG,S_TAG,G_TAG,L_TAG,I_TAG,V_NewTAG";

pub fn write_node_table(path: &Path, table: &NodeAttributeTable) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{NODE_TABLE_HEADER}")?;
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.v_tag, r.s_tag, r.g_tag, r.l_tag, r.i_tag, r.v_new_tag
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_node_table(path: &Path) -> Result<NodeAttributeTable> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == NODE_TABLE_HEADER => {}
        _ => return Err(parse_err("missing node table header")),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = line
            .split(',')
            .map(|t| parse_usize(t.trim()))
            .collect::<Result<Vec<usize>>>()?;
        if f.len() != 6 {
            return Err(parse_err("node table rows need six columns"));
        }
        rows.push(NodeRow {
            v_tag: f[0],
            s_tag: f[1],
            g_tag: f[2],
            l_tag: f[3],
            i_tag: f[4],
            v_new_tag: f[5],
        });
    }
    let n = rows.len();
    for (pos, r) in rows.iter().enumerate() {
        if r.v_new_tag != pos + 1 {
            return Err(parse_err("node table must be sorted by V_NewTAG"));
        }
    }
    Ok(NodeAttributeTable { n, rows })
}

/// Permutation CSV: header `new,old`, 1-based, sorted by `new`.
pub fn write_permutation(path: &Path, perm: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "new,old")?;
    for (a, &old) in perm.iter().enumerate() {
        writeln!(out, "{},{}", a + 1, old + 1)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_permutation(path: &Path) -> Result<Vec<usize>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == "new,old" => {}
        _ => return Err(parse_err("missing permutation header `new,old`")),
    }
    let mut perm = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 2 {
            return Err(parse_err("permutation rows need two columns"));
        }
        let new = parse_usize(toks[0].trim())?;
        let old = parse_usize(toks[1].trim())?;
        if new != perm.len() + 1 || old == 0 {
            return Err(parse_err("permutation rows must be 1-based and sorted by new"));
        }
        perm.push(old - 1);
    }
    validate_permutation(&perm, perm.len())?;
    Ok(perm)
}

/// Bundle metadata; `updates` counts redistributed training updates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BundleMeta {
    pub n: usize,
    pub block_count: usize,
    /// Channel-sequence length; 0 for scalar systems.
    pub k_channels: usize,
    pub nonlinearity: String,
    pub isolated_last: bool,
    pub updates: u64,
}

/// Writes a restructured system as a bundle directory:
/// `permutation.csv`, `blocks/NNN.mtx`, `blocks/NNN.range` (1-based
/// inclusive new-index range), `dormant.txt`, `meta.json`.
pub fn write_bundle(dir: &Path, sys: &RestructuredSystem, meta: &BundleMeta) -> Result<()> {
    fs::create_dir_all(dir.join("blocks"))?;
    write_permutation(&dir.join("permutation.csv"), &sys.permutation)?;
    for (idx, sub) in sys.operators.iter().enumerate() {
        let m = match &sub.op {
            BlockOp::Dense(m) => m,
            BlockOp::Channels(_) => {
                return Err(Error::InvalidInput(
                    "bundle serialization covers dense sub-operators only".into(),
                ))
            }
        };
        let stem = format!("{:03}", idx + 1);
        write_matrix_mtx(&dir.join("blocks").join(format!("{stem}.mtx")), m)?;
        let start = sub.embedding.table[0];
        let end = *sub.embedding.table.last().unwrap();
        fs::write(
            dir.join("blocks").join(format!("{stem}.range")),
            format!("{} {}\n", start + 1, end + 1),
        )?;
    }
    let dormant: String = sys
        .dormant
        .iter()
        .map(|&p| format!("{}\n", p + 1))
        .collect();
    fs::write(dir.join("dormant.txt"), dormant)?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::InternalInvariant(e.to_string()))?;
    fs::write(dir.join("meta.json"), json + "\n")?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<(RestructuredSystem, BundleMeta)> {
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| parse_err(format!("meta.json: {e}")))?;
    let perm = read_permutation(&dir.join("permutation.csv"))?;
    if perm.len() != meta.n {
        return Err(parse_err("permutation length disagrees with meta.json"));
    }
    let inverse = invert_permutation(&perm);
    let mut operators = Vec::with_capacity(meta.block_count);
    for idx in 0..meta.block_count {
        let stem = format!("{:03}", idx + 1);
        let m = read_matrix_mtx(&dir.join("blocks").join(format!("{stem}.mtx")))?;
        let range_text = fs::read_to_string(dir.join("blocks").join(format!("{stem}.range")))?;
        let toks: Vec<&str> = range_text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err("range file needs `start end`"));
        }
        let start = parse_usize(toks[0])?;
        let end = parse_usize(toks[1])?;
        if start == 0 || end < start || end > meta.n {
            return Err(parse_err(format!("bad block range {start} {end}")));
        }
        let len = end - start + 1;
        if m.n_rows() != len || m.n_cols() != len {
            return Err(parse_err(format!(
                "block {stem} is {}x{}, range implies {len}",
                m.n_rows(),
                m.n_cols()
            )));
        }
        let ambient: Vec<usize> = (start - 1..end).collect();
        let mut source_order: Vec<usize> = (0..len).collect();
        source_order.sort_by_key(|&lj| perm[ambient[lj]]);
        operators.push(SubOperator {
            projection: Projection {
                table: ambient.clone(),
            },
            embedding: Embedding { table: ambient },
            op: BlockOp::Dense(m),
            // Subdivision boundaries are not persisted; a loaded block
            // is treated as a single component span.
            cuts: vec![len],
            source_order,
        });
    }
    let mut dormant = Vec::new();
    for line in fs::read_to_string(dir.join("dormant.txt"))?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let p = parse_usize(line.trim())?;
        if p == 0 || p > meta.n {
            return Err(parse_err(format!("dormant index {p} out of range")));
        }
        dormant.push(p - 1);
    }
    let sys = RestructuredSystem {
        n: meta.n,
        permutation: perm,
        inverse,
        operators,
        dormant,
        nonlinearity: Nonlinearity::from_id(&meta.nonlinearity)?,
    };
    Ok((sys, meta))
}
