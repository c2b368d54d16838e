//! Multi-class samples, precision sets and edge sets, with CSV/JSON I/O.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks on precision matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `k` independent classes of observations over the same `p` nodes.
///
/// Class `t` holds an `n[t] x p` data matrix. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiNetworkSample {
    names: Vec<String>,
    data: Vec<DMatrix<f64>>,
}

impl MultiNetworkSample {
    /// Validates and wraps the class matrices. Node names default to `X1..Xp`.
    pub fn new(data: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = data.first().map(|m| m.ncols()).unwrap_or(0);
        let names = (1..=p).map(|j| format!("X{j}")).collect();
        Self::with_names(names, data)
    }

    pub fn with_names(names: Vec<String>, data: Vec<DMatrix<f64>>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Invalid("sample needs at least one class".into()));
        }
        let p = data[0].ncols();
        if p < 2 {
            return Err(Error::Invalid(format!("need at least 2 nodes, got {p}")));
        }
        if names.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} node names for {p} columns",
                names.len()
            )));
        }
        for (t, m) in data.iter().enumerate() {
            if m.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "class {t} has {} columns, expected {p}",
                    m.ncols()
                )));
            }
            if m.nrows() < 2 {
                return Err(Error::Invalid(format!(
                    "class {t} has {} rows, need at least 2",
                    m.nrows()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("class {t} contains non-finite values")));
            }
        }
        Ok(Self { names, data })
    }

    pub fn k(&self) -> usize {
        self.data.len()
    }

    pub fn p(&self) -> usize {
        self.data[0].ncols()
    }

    /// Per-class sample sizes.
    pub fn n(&self) -> Vec<usize> {
        self.data.iter().map(|m| m.nrows()).collect()
    }

    /// Smallest class size.
    pub fn n0(&self) -> usize {
        self.data.iter().map(|m| m.nrows()).min().unwrap()
    }

    /// Total sample size over all classes.
    pub fn total_n(&self) -> usize {
        self.data.iter().map(|m| m.nrows()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn class(&self, t: usize) -> &DMatrix<f64> {
        &self.data[t]
    }

    pub fn classes(&self) -> &[DMatrix<f64>] {
        &self.data
    }

    /// Copy with every column of every class shifted to mean zero.
    pub fn centered(&self) -> Self {
        let data = self
            .data
            .iter()
            .map(|m| {
                let mut c = m.clone();
                for mut col in c.column_iter_mut() {
                    let mean = col.mean();
                    col.add_scalar_mut(-mean);
                }
                c
            })
            .collect();
        Self {
            names: self.names.clone(),
            data,
        }
    }

    /// Sample second-moment matrices `X^T X / n` per class (the model is mean zero).
    pub fn covariances(&self) -> Vec<DMatrix<f64>> {
        self.data
            .iter()
            .map(|m| (m.transpose() * m) / m.nrows() as f64)
            .collect()
    }

    /// Reads one CSV file per class; all files must share the same header.
    pub fn load_csv<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Invalid("no sample files given".into()));
        }
        let mut header: Option<Vec<String>> = None;
        let mut data = Vec::with_capacity(paths.len());
        for path in paths {
            let path = path.as_ref();
            let shown = path.display().to_string();
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
            let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
            match &header {
                None => header = Some(names.clone()),
                Some(h) if h.len() != names.len() => {
                    return Err(Error::DimensionMismatch(format!(
                        "{shown} has {} columns, expected {}",
                        names.len(),
                        h.len()
                    )))
                }
                Some(h) if *h != names => {
                    return Err(Error::DimensionMismatch(format!(
                        "{shown} header differs from the first file"
                    )))
                }
                Some(_) => {}
            }
            let p = names.len();
            let mut values = Vec::new();
            let mut rows = 0;
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| match e.kind() {
                    csv::ErrorKind::UnequalLengths { .. } => Error::DimensionMismatch(format!(
                        "{shown}: row {} has the wrong number of fields",
                        i + 1
                    )),
                    _ => Error::Csv(e),
                })?;
                for (c, field) in rec.iter().enumerate() {
                    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                        path: shown.clone(),
                        row: i + 1,
                        col: c + 1,
                        msg: format!("non-numeric cell {field:?}"),
                    })?;
                    values.push(v);
                }
                rows += 1;
            }
            if rows < 2 {
                return Err(Error::Invalid(format!("{shown} has {rows} data rows, need at least 2")));
            }
            data.push(DMatrix::from_row_slice(rows, p, &values));
        }
        Self::with_names(header.unwrap(), data)
    }

    /// Writes class `t` to `path` as CSV with a header row.
    ///
    /// Values use Rust's shortest round-trip formatting, so a save/load cycle is bit-exact.
    pub fn save_class_csv<P: AsRef<Path>>(&self, t: usize, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", self.names.join(","))?;
        let m = &self.data[t];
        let mut line = String::new();
        for i in 0..m.nrows() {
            line.clear();
            for j in 0..m.ncols() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:?}", m[(i, j)]));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `k` symmetric `p x p` precision matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSet {
    omega: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PrecisionSetJson {
    k: usize,
    p: usize,
    omega: Vec<Vec<Vec<f64>>>,
}

impl PrecisionSet {
    /// Wraps the matrices after checking shape and symmetry.
    pub fn new(omega: Vec<DMatrix<f64>>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Invalid("precision set needs at least one matrix".into()));
        }
        let p = omega[0].nrows();
        for (t, m) in omega.iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {t} is {}x{}, expected {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let scale = m.amax().max(1.0);
            for a in 0..p {
                for b in (a + 1)..p {
                    if (m[(a, b)] - m[(b, a)]).abs() > SYMMETRY_TOL * scale {
                        return Err(Error::Invalid(format!(
                            "matrix {t} is not symmetric at ({a},{b})"
                        )));
                    }
                }
            }
        }
        Ok(Self { omega })
    }

    /// Identity precision for every class.
    pub fn identity(k: usize, p: usize) -> Self {
        Self {
            omega: vec![DMatrix::identity(p, p); k],
        }
    }

    pub fn k(&self) -> usize {
        self.omega.len()
    }

    pub fn p(&self) -> usize {
        self.omega[0].nrows()
    }

    pub fn matrix(&self, t: usize) -> &DMatrix<f64> {
        &self.omega[t]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.omega
    }

    /// The joint link vector `(omega^(1)_ab, ..., omega^(k)_ab)`.
    pub fn link(&self, a: usize, b: usize) -> Vec<f64> {
        self.omega.iter().map(|m| m[(a, b)]).collect()
    }

    /// Checks that every matrix is positive definite (Cholesky succeeds).
    pub fn check_positive_definite(&self) -> Result<()> {
        for (t, m) in self.omega.iter().enumerate() {
            if m.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite { index: t });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let j = PrecisionSetJson {
            k: self.k(),
            p: self.p(),
            omega: self.omega.iter().map(matrix_rows).collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: PrecisionSetJson = serde_json::from_str(s)?;
        if j.omega.len() != j.k {
            return Err(Error::DimensionMismatch(format!(
                "k = {} but {} matrices present",
                j.k,
                j.omega.len()
            )));
        }
        let omega = j
            .omega
            .iter()
            .map(|rows| rows_matrix(rows, j.p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(omega)
    }

    pub fn save_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load_json<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Pairs whose joint link vector has some entry with magnitude above `tol`.
    pub fn edge_set(&self, tol: f64) -> EdgeSet {
        let p = self.p();
        let mut edges = EdgeSet::empty(p);
        for a in 0..p {
            for b in (a + 1)..p {
                if self.omega.iter().any(|m| m[(a, b)].abs() > tol) {
                    edges.insert(a, b);
                }
            }
        }
        edges
    }
}

/// Joint support of `truth` at threshold `tol` (use 0 for generator output).
pub fn true_edge_set(truth: &PrecisionSet, tol: f64) -> EdgeSet {
    truth.edge_set(tol)
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub(crate) fn rows_matrix(rows: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch(format!("expected a {p}x{p} matrix")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// Undirected edges over `p` nodes, stored as `(a, b)` with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    /// Inserts the unordered pair `{a, b}`. Self-loops are ignored.
    pub fn insert(&mut self, a: usize, b: usize) -> bool {
        assert!(a < self.p && b < self.p, "node index out of range");
        if a == b {
            return false;
        }
        self.edges.insert((a.min(b), a.max(b)))
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.p];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Maximum node degree.
    pub fn sparsity(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let e: EdgeSet = serde_json::from_str(s)?;
        for &(a, b) in &e.edges {
            if a >= b || b >= e.p {
                return Err(Error::Invalid(format!("non-canonical edge ({a},{b})")));
            }
        }
        Ok(e)
    }
}
