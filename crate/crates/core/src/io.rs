//! Plain-text file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! format here reads back bit-for-bit.
//!
//! * Box QP: a line with `n`, `n` lines of Hessian rows, one line with `h`.
//! * Dataset CSV: a metadata line `n_x,n_u,N_d`, then one row per transition
//!   `x_1..x_nx,u_1..u_nu,x+_1..x+_nx`.
//! * Predictor and condensed containers: `#` header, `key value` lines, and
//!   matrix blocks introduced by `name rows cols` followed by row-major rows.
//! * Trajectory CSV: `t,y1..yM,u1..uK` with a header row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::boxqp::BoxQp;
use crate::condensed::CondensedData;
use crate::error::{Error, Result};
use crate::koopman::{LiftedPredictor, ObservableMap, SnapshotDataset};

const PREDICTOR_HEADER: &str = "# kmpc predictor v1";
const CONDENSED_HEADER: &str = "# kmpc condensed v1";

/// Line source that tracks 1-based line numbers and skips blank lines.
struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Self { inner: reader.lines(), line: 0 }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    fn expect_line(&mut self, what: &str) -> Result<String> {
        self.next_line()?.ok_or_else(|| self.error(format!("unexpected end of file, expected {what}")))
    }

    fn error(&self, detail: impl Into<String>) -> Error {
        Error::Parse { line: self.line, detail: detail.into() }
    }

    fn floats(&self, text: &str, sep: Option<char>, expected: usize) -> Result<Vec<f64>> {
        let fields: Vec<&str> = match sep {
            Some(c) => text.split(c).map(str::trim).collect(),
            None => text.split_whitespace().collect(),
        };
        if fields.len() != expected {
            return Err(self.error(format!("expected {expected} values, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| self.error(format!("{f:?}: {e}"))))
            .collect()
    }

    fn key_value(&mut self, key: &str) -> Result<String> {
        let l = self.expect_line(key)?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
            _ => Err(self.error(format!("expected `{key} <value>`, found {l:?}"))),
        }
    }

    fn key_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.key_value(key)?;
        v.parse().map_err(|e| self.error(format!("{key}: {e}")))
    }

    fn matrix(&mut self, name: &str) -> Result<DMatrix<f64>> {
        let l = self.expect_line(name)?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let (rows, cols) = match parts.as_slice() {
            [n, r, c] if *n == name => (
                r.parse::<usize>().map_err(|e| self.error(e.to_string()))?,
                c.parse::<usize>().map_err(|e| self.error(e.to_string()))?,
            ),
            _ => return Err(self.error(format!("expected `{name} <rows> <cols>`, found {l:?}"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = self.expect_line(name)?;
            data.extend(self.floats(&row, None, cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn header(&mut self, expected: &str) -> Result<()> {
        let l = self.expect_line("header")?;
        if l.trim() != expected {
            return Err(self.error(format!("expected header {expected:?}, found {l:?}")));
        }
        Ok(())
    }
}

fn write_row<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>, sep: &str) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(sep.as_bytes())?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    writeln!(w)?;
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "{name} {} {}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        write_row(w, row.iter().copied(), " ")?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn write_box_qp<W: Write>(w: &mut W, qp: &BoxQp) -> Result<()> {
    writeln!(w, "{}", qp.dim())?;
    for row in qp.hessian().row_iter() {
        write_row(w, row.iter().copied(), " ")?;
    }
    write_row(w, qp.gradient().iter().copied(), " ")
}

/// Parse and validate a box QP; structural problems are `Parse` errors and
/// an asymmetric or non-finite problem is rejected by [`BoxQp::new`].
pub fn read_box_qp<R: BufRead>(r: R) -> Result<BoxQp> {
    let mut lines = Lines::new(r);
    let first = lines.expect_line("dimension")?;
    let n: usize = first.trim().parse().map_err(|e| lines.error(format!("dimension {first:?}: {e}")))?;
    if n == 0 {
        return Err(lines.error("dimension must be >= 1"));
    }
    let mut h_data = Vec::with_capacity(n * n);
    for _ in 0..n {
        let row = lines.expect_line("Hessian row")?;
        h_data.extend(lines.floats(&row, None, n)?);
    }
    let row = lines.expect_line("gradient row")?;
    let h = lines.floats(&row, None, n)?;
    if let Some(extra) = lines.next_line()? {
        return Err(lines.error(format!("trailing content {extra:?}")));
    }
    BoxQp::new(DMatrix::from_row_slice(n, n, &h_data), DVector::from_vec(h))
}

pub fn load_box_qp(path: &Path) -> Result<BoxQp> {
    read_box_qp(open(path)?)
}

pub fn save_box_qp(path: &Path, qp: &BoxQp) -> Result<()> {
    let mut w = create(path)?;
    write_box_qp(&mut w, qp)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, data: &SnapshotDataset) -> Result<()> {
    writeln!(w, "{},{},{}", data.state_dim(), data.input_dim(), data.len())?;
    for j in 0..data.len() {
        let values = data
            .x
            .column(j)
            .iter()
            .chain(data.u.column(j).iter())
            .chain(data.x_plus.column(j).iter())
            .copied()
            .collect::<Vec<_>>();
        write_row(w, values, ",")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<SnapshotDataset> {
    let mut lines = Lines::new(r);
    let meta = lines.expect_line("metadata `n_x,n_u,N_d`")?;
    let dims: Vec<usize> = meta
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| lines.error(format!("metadata {meta:?}: {e}")))?;
    let [n_x, n_u, n_d] = dims[..] else {
        return Err(lines.error(format!("metadata must be `n_x,n_u,N_d`, found {meta:?}")));
    };
    let width = 2 * n_x + n_u;
    let mut x = DMatrix::zeros(n_x, n_d);
    let mut u = DMatrix::zeros(n_u, n_d);
    let mut x_plus = DMatrix::zeros(n_x, n_d);
    for j in 0..n_d {
        let row = lines.expect_line("transition row")?;
        let v = lines.floats(&row, Some(','), width)?;
        x.column_mut(j).copy_from_slice(&v[..n_x]);
        u.column_mut(j).copy_from_slice(&v[n_x..n_x + n_u]);
        x_plus.column_mut(j).copy_from_slice(&v[n_x + n_u..]);
    }
    if let Some(extra) = lines.next_line()? {
        return Err(lines.error(format!("more rows than the declared N_d = {n_d}: {extra:.40}")));
    }
    SnapshotDataset::new(x, u, x_plus)
}

pub fn save_dataset(path: &Path, data: &SnapshotDataset) -> Result<()> {
    let mut w = create(path)?;
    write_dataset(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<SnapshotDataset> {
    read_dataset(open(path)?)
}

pub fn write_predictor<W: Write>(w: &mut W, p: &LiftedPredictor) -> Result<()> {
    writeln!(w, "{PREDICTOR_HEADER}")?;
    writeln!(w, "observable {}", p.observable.kind())?;
    writeln!(w, "n_x {}", p.state_dim())?;
    writeln!(w, "n_psi {}", p.lifted_dim())?;
    writeln!(w, "n_u {}", p.input_dim())?;
    write_matrix(w, "A", &p.a)?;
    write_matrix(w, "B", &p.b)?;
    write_matrix(w, "C", &p.c)
}

/// The observable is resolved through the built-in dictionary registry.
pub fn read_predictor<R: BufRead>(r: R) -> Result<LiftedPredictor> {
    let mut lines = Lines::new(r);
    lines.header(PREDICTOR_HEADER)?;
    let kind = lines.key_value("observable")?;
    let n_x = lines.key_usize("n_x")?;
    let n_psi = lines.key_usize("n_psi")?;
    let n_u = lines.key_usize("n_u")?;
    let observable = ObservableMap::from_name(&kind, n_x)?;
    if observable.lifted_dim() != n_psi {
        return Err(lines.error(format!(
            "observable {kind} lifts n_x = {n_x} to {}, header says n_psi = {n_psi}",
            observable.lifted_dim()
        )));
    }
    let a = lines.matrix("A")?;
    let b = lines.matrix("B")?;
    let c = lines.matrix("C")?;
    if b.ncols() != n_u {
        return Err(lines.error(format!("B has {} columns, header says n_u = {n_u}", b.ncols())));
    }
    LiftedPredictor::new(a, b, c, observable)
}

pub fn save_predictor(path: &Path, p: &LiftedPredictor) -> Result<()> {
    let mut w = create(path)?;
    write_predictor(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_predictor(path: &Path) -> Result<LiftedPredictor> {
    read_predictor(open(path)?)
}

/// The parts of [`CondensedData`] that are stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMatrices {
    pub n_x: usize,
    pub n_psi: usize,
    pub n_u: usize,
    pub horizon: usize,
    pub hessian: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

impl From<&CondensedData> for CondensedMatrices {
    fn from(cd: &CondensedData) -> Self {
        Self {
            n_x: cd.n_x,
            n_psi: cd.n_psi,
            n_u: cd.n_u,
            horizon: cd.horizon,
            hessian: cd.hessian.clone(),
            s: cd.s.clone(),
        }
    }
}

pub fn write_condensed<W: Write>(w: &mut W, cd: &CondensedData) -> Result<()> {
    writeln!(w, "{CONDENSED_HEADER}")?;
    writeln!(w, "n_x {}", cd.n_x)?;
    writeln!(w, "n_psi {}", cd.n_psi)?;
    writeln!(w, "n_u {}", cd.n_u)?;
    writeln!(w, "horizon {}", cd.horizon)?;
    write_matrix(w, "H", &cd.hessian)?;
    write_matrix(w, "S", &cd.s)
}

pub fn read_condensed<R: BufRead>(r: R) -> Result<CondensedMatrices> {
    let mut lines = Lines::new(r);
    lines.header(CONDENSED_HEADER)?;
    let n_x = lines.key_usize("n_x")?;
    let n_psi = lines.key_usize("n_psi")?;
    let n_u = lines.key_usize("n_u")?;
    let horizon = lines.key_usize("horizon")?;
    let hessian = lines.matrix("H")?;
    let s = lines.matrix("S")?;
    let n = horizon * n_u;
    if hessian.shape() != (n, n) || s.shape() != (horizon * n_psi, n) {
        return Err(lines.error("H or S does not match the declared dimensions"));
    }
    Ok(CondensedMatrices { n_x, n_psi, n_u, horizon, hessian, s })
}

pub fn save_condensed(path: &Path, cd: &CondensedData) -> Result<()> {
    let mut w = create(path)?;
    write_condensed(&mut w, cd)?;
    w.flush()?;
    Ok(())
}

/// Incremental writer for `t,y1..yM,u1..uK` rows.
pub struct TrajectoryWriter<W: Write> {
    out: W,
    nodes: usize,
    inputs: usize,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W, nodes: usize, inputs: usize) -> Result<Self> {
        let mut header = String::from("t");
        for i in 1..=nodes {
            header.push_str(&format!(",y{i}"));
        }
        for i in 1..=inputs {
            header.push_str(&format!(",u{i}"));
        }
        writeln!(out, "{header}")?;
        Ok(Self { out, nodes, inputs })
    }

    pub fn record(&mut self, t: f64, y: &[f64], u: &[f64]) -> Result<()> {
        if y.len() != self.nodes || u.len() != self.inputs {
            return Err(Error::dim(format!(
                "trajectory row has {} states and {} inputs, expected {} and {}",
                y.len(),
                u.len(),
                self.nodes,
                self.inputs
            )));
        }
        write_row(&mut self.out, std::iter::once(t).chain(y.iter().copied()).chain(u.iter().copied()), ",")
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// One parsed trajectory row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

/// Read a trajectory CSV; the input count is taken from the `u*` columns of the header.
pub fn read_trajectory<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = Lines::new(r);
    let header = lines.expect_line("trajectory header")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(lines.error("trajectory header must start with `t`"));
    }
    let nodes = cols.iter().filter(|c| c.starts_with('y')).count();
    let inputs = cols.iter().filter(|c| c.starts_with('u')).count();
    if nodes + inputs + 1 != cols.len() {
        return Err(lines.error("trajectory header must be `t,y1..yM,u1..uK`"));
    }
    let mut rows = Vec::new();
    while let Some(l) = lines.next_line()? {
        let v = lines.floats(&l, Some(','), cols.len())?;
        rows.push(TrajectoryRow {
            t: v[0],
            y: v[1..=nodes].to_vec(),
            u: v[nodes + 1..].to_vec(),
        });
    }
    Ok(rows)
}
