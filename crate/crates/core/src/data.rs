//! Weighted point clouds, toy dataset generators and sample-file I/O.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Tolerance on `|sum(weights) - 1|`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A weighted empirical measure: `n` atoms in `R^d` with simplex weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    points: Array2<f64>,
    weights: Vec<f64>,
    label: Option<String>,
}

impl SampleSet {
    /// Uniformly weighted set.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::with_weights(points, uniform_weights(n), None)
    }

    pub fn with_weights(points: Array2<f64>, weights: Vec<f64>, label: Option<String>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 {
            return Err(Error::invalid("sample set needs at least one point"));
        }
        if d == 0 {
            return Err(Error::invalid("sample set needs dimension >= 1"));
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: weights.len(),
            });
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate in row {}", pos / d)));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        // Row slices are borrowed as contiguous memory downstream.
        let points = if points.is_standard_layout() {
            points
        } else {
            points.as_standard_layout().into_owned()
        };
        Ok(Self { points, weights, label })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| w == u)
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    /// Largest Euclidean norm among the atoms.
    pub fn radius(&self) -> f64 {
        self.points
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    /// Rows `i mod n` for `i in 0..count`, uniformly weighted.
    pub fn cycled(&self, count: usize) -> Result<Self> {
        let d = self.dim();
        let n = self.len();
        let pts = Array2::from_shape_fn((count, d), |(i, k)| self.points[[i % n, k]]);
        let mut out = Self::new(pts)?;
        out.label = self.label.clone();
        Ok(out)
    }
}

/// Neumaier summation; the naive running sum of `n` copies of `1/n` drifts by `O(n)` ulps.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = rows.first().map(Vec::len).unwrap_or(0);
    let mut flat = Vec::with_capacity(rows.len() * d);
    for (row, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::RaggedRow {
                row,
                expected: d,
                found: r.len(),
            });
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::invalid(e.to_string()))
}

/// The toy distributions shipped with the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    Gaussian,
    GaussianMixture,
    Moons,
    Circles,
    SCurve,
    Checkerboard,
}

impl DatasetName {
    pub const ALL: [DatasetName; 6] = [
        DatasetName::Gaussian,
        DatasetName::GaussianMixture,
        DatasetName::Moons,
        DatasetName::Circles,
        DatasetName::SCurve,
        DatasetName::Checkerboard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Gaussian => "gaussian",
            DatasetName::GaussianMixture => "gaussian-mixture",
            DatasetName::Moons => "moons",
            DatasetName::Circles => "circles",
            DatasetName::SCurve => "s-curve",
            DatasetName::Checkerboard => "checkerboard",
        }
    }

    pub fn default_noise(self) -> f64 {
        match self {
            DatasetName::Gaussian | DatasetName::Checkerboard => 0.0,
            DatasetName::GaussianMixture => 0.5,
            DatasetName::Moons | DatasetName::Circles | DatasetName::SCurve => 0.05,
        }
    }

    pub fn is_planar(self) -> bool {
        !matches!(self, DatasetName::Gaussian | DatasetName::GaussianMixture)
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

/// Everything that determines a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub n: usize,
    pub seed: u64,
    pub noise: f64,
    pub dim: usize,
}

impl DatasetSpec {
    /// Spec with the dataset's default noise level and `dim = 2`.
    pub fn new(name: DatasetName, n: usize, seed: u64) -> Self {
        Self {
            name,
            n,
            seed,
            noise: name.default_noise(),
            dim: 2,
        }
    }

    pub fn noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Parse `name:n:seed[:noise[:dim]]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=5).contains(&parts.len()) {
            return Err(Error::invalid(format!(
                "dataset spec `{s}` must look like name:n:seed[:noise[:dim]]"
            )));
        }
        let name: DatasetName = parts[0].parse()?;
        let bad = |what: &str| Error::invalid(format!("bad {what} in dataset spec `{s}`"));
        let n = parts[1].parse().map_err(|_| bad("n"))?;
        let seed = parts[2].parse().map_err(|_| bad("seed"))?;
        let mut spec = Self::new(name, n, seed);
        if let Some(p) = parts.get(3) {
            spec.noise = p.parse().map_err(|_| bad("noise"))?;
        }
        if let Some(p) = parts.get(4) {
            spec.dim = p.parse().map_err(|_| bad("dim"))?;
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dataset size n must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::invalid("noise must be finite and nonnegative"));
        }
        if self.name.is_planar() && self.dim != 2 {
            return Err(Error::invalid(format!("{} is a planar dataset (dim must be 2)", self.name)));
        }
        Ok(())
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}:{}", self.name, self.n, self.seed, self.noise, self.dim)
    }
}

/// Number of modes and their radius for `gaussian-mixture`.
pub const MIXTURE_MODES: usize = 8;
pub const MIXTURE_RADIUS: f64 = 8.0;

/// Mixture centers; modes sit on a circle in the first two coordinates.
pub fn mixture_centers(dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((MIXTURE_MODES, dim), |(m, k)| {
        let angle = 2.0 * PI * m as f64 / MIXTURE_MODES as f64;
        match k {
            0 => MIXTURE_RADIUS * angle.cos(),
            1 => MIXTURE_RADIUS * angle.sin(),
            _ => 0.0,
        }
    })
}

/// Draw a dataset. Output depends only on the fields of `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<SampleSet> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let (n, d) = (spec.n, spec.dim);
    let mut pts = Array2::<f64>::zeros((n, d));
    let centers = mixture_centers(d);

    for i in 0..n {
        let mut row = pts.row_mut(i);
        match spec.name {
            DatasetName::Gaussian => {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            DatasetName::GaussianMixture => {
                let m = rng.random_range(0..MIXTURE_MODES);
                row.assign(&centers.row(m));
            }
            DatasetName::Moons => {
                let theta = PI * rng.random::<f64>();
                if i % 2 == 0 {
                    row[0] = theta.cos();
                    row[1] = theta.sin();
                } else {
                    row[0] = 1.0 - theta.cos();
                    row[1] = 0.5 - theta.sin();
                }
            }
            DatasetName::Circles => {
                let theta = 2.0 * PI * rng.random::<f64>();
                let r = if i % 2 == 0 { 1.0 } else { 0.5 };
                row[0] = r * theta.cos();
                row[1] = r * theta.sin();
            }
            DatasetName::SCurve => {
                let t = 3.0 * PI * (rng.random::<f64>() - 0.5);
                row[0] = t.sin();
                row[1] = t.signum() * (t.cos() - 1.0);
            }
            DatasetName::Checkerboard => {
                let x1 = 4.0 * rng.random::<f64>() - 2.0;
                let lift = if rng.random::<bool>() { 2.0 } else { 0.0 };
                let x2 = rng.random::<f64>() - lift + x1.floor().rem_euclid(2.0);
                row[0] = 2.0 * x1;
                row[1] = 2.0 * x2;
            }
        }
        if spec.name != DatasetName::Gaussian && spec.noise > 0.0 {
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += spec.noise * z;
            }
        }
    }
    Ok(SampleSet::new(pts)?.with_label(spec.name.as_str()))
}

/// On-disk sample formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` means JSON; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SampleSetJson {
    points: Vec<Vec<f64>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

pub fn read_samples(path: impl AsRef<Path>, format: Format) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => read_csv(BufReader::new(file)),
        Format::Json => {
            let raw: SampleSetJson = serde_json::from_reader(BufReader::new(file))?;
            let points = rows_to_array(&raw.points)?;
            let n = points.nrows();
            SampleSet::with_weights(points, raw.weights.unwrap_or_else(|| uniform_weights(n)), raw.label)
        }
    }
}

fn read_csv<R: std::io::Read>(reader: R) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .len();
    let mut flat = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        if rec.len() != width {
            return Err(Error::RaggedRow {
                row: rows,
                expected: width,
                found: rec.len(),
            });
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteInput { line });
            }
            flat.push(v);
        }
        rows += 1;
    }
    let pts = Array2::from_shape_vec((rows, width), flat).map_err(|e| Error::invalid(e.to_string()))?;
    SampleSet::new(pts)
}

/// Write `set`. CSV carries coordinates only, JSON also carries weights and label.
pub fn write_samples(set: &SampleSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => {
            write_csv_matrix(&mut w, set.points()).map_err(|e| Error::io(path, e))?;
        }
        Format::Json => {
            let raw = SampleSetJson {
                points: set.points.rows().into_iter().map(|r| r.to_vec()).collect(),
                weights: Some(set.weights.clone()),
                label: set.label.clone(),
            };
            serde_json::to_writer(&mut w, &raw)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header `x0..x{d-1}` then one row per point, shortest round-trip decimals.
pub(crate) fn write_csv_matrix<W: Write>(w: &mut W, pts: ArrayView2<'_, f64>) -> std::io::Result<()> {
    let header: Vec<String> = (0..pts.ncols()).map(|k| format!("x{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in pts.rows() {
        write_floats(w, row.iter().copied())?;
        writeln!(w)?;
    }
    Ok(())
}

pub(crate) fn write_floats<W: Write>(w: &mut W, vals: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for (k, v) in vals.enumerate() {
        if k > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{v:?}")?;
    }
    Ok(())
}
