//! Matrix Market files and instance directories with a JSON manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::FactoredMatrix;
use crate::numkit::{Mat, SparseMatrix};
use crate::operator::MultitermOperator;
use crate::problems::{PrecondRecipe, ProblemInstance};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Writes a sparse matrix in coordinate format. Values use the shortest
/// representation that reads back to the same `f64`.
pub fn write_mm_sparse<W: Write>(mut w: W, a: &SparseMatrix) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Writes a dense matrix in array (column-major) format.
pub fn write_mm_dense<W: Write>(mut w: W, a: &Mat) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for v in a.iter() {
        writeln!(w, "{:e}", v)?;
    }
    Ok(())
}

/// Contents of a Matrix Market file.
#[derive(Debug, Clone, PartialEq)]
pub enum MmMatrix {
    Sparse(SparseMatrix),
    Dense(Mat),
}

impl MmMatrix {
    pub fn into_sparse(self) -> SparseMatrix {
        match self {
            MmMatrix::Sparse(a) => a,
            MmMatrix::Dense(a) => SparseMatrix::from_dense(&a),
        }
    }

    pub fn into_dense(self) -> Mat {
        match self {
            MmMatrix::Sparse(a) => a.to_dense(),
            MmMatrix::Dense(a) => a,
        }
    }
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(format!("bad {what}")))
}

/// Reads real `coordinate` (general or symmetric) and `array` (general)
/// Matrix Market data.
pub fn read_mm<R: std::io::Read>(r: R) -> Result<MmMatrix> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| parse_err("empty Matrix Market file"))??;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(parse_err(format!("bad Matrix Market header `{header}`")));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(parse_err(format!("unsupported field `{}`", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        s => return Err(parse_err(format!("unsupported symmetry `{s}`"))),
    };
    let mut body = lines.filter(|l| l.as_ref().map_or(true, |s| !s.starts_with('%') && !s.trim().is_empty()));
    let size = body.next().ok_or_else(|| parse_err("missing size line"))??;
    let mut it = size.split_whitespace();
    let rows: usize = num(it.next(), "row count")?;
    let cols: usize = num(it.next(), "column count")?;
    match h[2].as_str() {
        "coordinate" => {
            let nnz: usize = num(it.next(), "entry count")?;
            let mut t = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
            for _ in 0..nnz {
                let line = body.next().ok_or_else(|| parse_err("truncated entry list"))??;
                let mut it = line.split_whitespace();
                let i: usize = num(it.next(), "row index")?;
                let j: usize = num(it.next(), "column index")?;
                let v: f64 = num(it.next(), "value")?;
                if i == 0 || j == 0 {
                    return Err(parse_err("indices are 1-based"));
                }
                t.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    t.push((j - 1, i - 1, v));
                }
            }
            Ok(MmMatrix::Sparse(SparseMatrix::from_triplets(rows, cols, &t)?))
        }
        "array" => {
            if symmetric {
                return Err(parse_err("symmetric array format is not supported"));
            }
            let mut vals = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let line = body.next().ok_or_else(|| parse_err("truncated array"))??;
                vals.push(num(line.split_whitespace().next(), "value")?);
            }
            Ok(MmMatrix::Dense(Mat::from_vec(rows, cols, vals)))
        }
        f => Err(parse_err(format!("unsupported format `{f}`"))),
    }
}

/// Description of an instance directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub family: String,
    pub rows: usize,
    pub cols: usize,
    /// `(A_i, B_i)` file names.
    pub terms: Vec<(String, String)>,
    /// Left and right factor file names of `F`.
    pub rhs: (String, String),
    pub preconditioners: BTreeMap<String, RecipeFiles>,
    pub meta: BTreeMap<String, serde_json::Value>,
    /// SHA-256 of every listed file, hex encoded.
    pub sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeFiles {
    pub kind: String,
    pub matrices: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, bytes: Vec<u8>, hashes: &mut BTreeMap<String, String>) -> Result<()> {
    hashes.insert(name.to_string(), sha256_hex(&bytes));
    fs::write(dir.join(name), bytes)?;
    Ok(())
}

fn sparse_bytes(a: &SparseMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_mm_sparse(&mut buf, a)?;
    Ok(buf)
}

fn dense_bytes(a: &Mat) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_mm_dense(&mut buf, a)?;
    Ok(buf)
}

/// Writes `inst` to `dir` (created if missing) and returns the manifest.
pub fn export_instance(inst: &ProblemInstance, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut sha = BTreeMap::new();
    let mut terms = Vec::new();
    for (i, (a, b)) in inst.op.a().iter().zip(inst.op.b()).enumerate() {
        let (fa, fb) = (format!("a{i}.mtx"), format!("b{i}.mtx"));
        write_file(dir, &fa, sparse_bytes(a)?, &mut sha)?;
        write_file(dir, &fb, sparse_bytes(b)?, &mut sha)?;
        terms.push((fa, fb));
    }
    write_file(dir, "f_left.mtx", dense_bytes(&inst.rhs.left)?, &mut sha)?;
    write_file(dir, "f_right.mtx", dense_bytes(&inst.rhs.right)?, &mut sha)?;
    let mut preconditioners = BTreeMap::new();
    for (label, recipe) in [("P1", &inst.p1), ("P2", &inst.p2)] {
        let Some(recipe) = recipe else { continue };
        let mut matrices = BTreeMap::new();
        for (name, m) in recipe.matrices() {
            let file = format!("{}_{name}.mtx", label.to_ascii_lowercase());
            write_file(dir, &file, sparse_bytes(m)?, &mut sha)?;
            matrices.insert(name.to_string(), file);
        }
        preconditioners.insert(label.to_string(), RecipeFiles { kind: recipe.kind().into(), matrices });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        family: inst.family.clone(),
        rows: inst.rows(),
        cols: inst.cols(),
        terms,
        rhs: ("f_left.mtx".into(), "f_right.mtx".into()),
        preconditioners,
        meta: inst.meta.clone(),
        sha256: sha,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_checked(dir: &Path, name: &str, m: &Manifest) -> Result<MmMatrix> {
    if name.contains('/') || name.contains('\\') || name.starts_with('.') {
        return Err(parse_err(format!("file name `{name}` escapes the instance directory")));
    }
    let bytes = fs::read(dir.join(name))?;
    let want = m.sha256.get(name).ok_or_else(|| parse_err(format!("no hash for `{name}`")))?;
    if &sha256_hex(&bytes) != want {
        return Err(parse_err(format!("hash mismatch for `{name}`")));
    }
    read_mm(bytes.as_slice())
}

/// Reads an instance directory, verifying every file hash.
pub fn import_instance(dir: &Path) -> Result<ProblemInstance> {
    let m: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if m.format_version != FORMAT_VERSION {
        return Err(parse_err(format!("unsupported manifest version {}", m.format_version)));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (fa, fb) in &m.terms {
        a.push(read_checked(dir, fa, &m)?.into_sparse());
        b.push(read_checked(dir, fb, &m)?.into_sparse());
    }
    let op = MultitermOperator::new(a, b)?;
    let rhs = FactoredMatrix::new(
        read_checked(dir, &m.rhs.0, &m)?.into_dense(),
        read_checked(dir, &m.rhs.1, &m)?.into_dense(),
    )?;
    if op.rows() != m.rows || op.cols() != m.cols {
        return Err(Error::DimensionMismatch("manifest dimensions".into()));
    }
    let mut inst = ProblemInstance::new(&m.family, op, rhs)?;
    for (label, files) in &m.preconditioners {
        let mut mats = BTreeMap::new();
        for (name, file) in &files.matrices {
            mats.insert(name.clone(), read_checked(dir, file, &m)?.into_sparse());
        }
        let recipe = PrecondRecipe::from_matrices(&files.kind, mats)?;
        match label.as_str() {
            "P1" => inst.p1 = Some(recipe),
            "P2" => inst.p2 = Some(recipe),
            other => return Err(parse_err(format!("unknown preconditioner label `{other}`"))),
        }
    }
    inst.meta = m.meta;
    Ok(inst)
}
