//! Records, datasets, min-max normalization, CSV ingestion and the synthetic
//! stochastic system used for benchmarking.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub inputs: Vec<f64>,
    pub output: f64,
}

/// Row-major table of records sharing one input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            inputs: Vec::with_capacity(dim * n),
            outputs: Vec::with_capacity(n),
        }
    }

    pub fn from_records(records: &[Record]) -> Result<Self> {
        let first = records.first().ok_or(Error::Empty("record set"))?;
        let mut ds = Self::with_capacity(first.inputs.len(), records.len());
        for r in records {
            ds.push(&r.inputs, r.output)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, inputs: &[f64], output: f64) -> Result<()> {
        if inputs.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: inputs.len(),
            });
        }
        if !output.is_finite() || inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("record"));
        }
        self.inputs.extend_from_slice(inputs);
        self.outputs.push(output);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output(&self, i: usize) -> f64 {
        self.outputs[i]
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn record(&self, i: usize) -> Record {
        Record {
            inputs: self.input(i).to_vec(),
            output: self.output(i),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs
            .chunks_exact(self.dim.max(1))
            .zip(self.outputs.iter().copied())
    }

    /// Copy of the records at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut out = Dataset::with_capacity(self.dim, idx.len());
        for &i in idx {
            out.inputs.extend_from_slice(self.input(i));
            out.outputs.push(self.outputs[i]);
        }
        out
    }

    /// Same inputs, replaced outputs.
    pub fn with_outputs(&self, outputs: Vec<f64>) -> Result<Dataset> {
        if outputs.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: outputs.len(),
            });
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outputs"));
        }
        Ok(Dataset {
            dim: self.dim,
            inputs: self.inputs.clone(),
            outputs,
        })
    }

    /// FNV-1a over the raw bits of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.dim as u64);
        for v in self.inputs.iter().chain(&self.outputs) {
            eat(v.to_bits());
        }
        h
    }

    /// Writes `x1,...,xm,y` rows with a header; values use the shortest
    /// round-trip decimal form.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = (1..=self.dim)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for (x, y) in self.records() {
            for v in x {
                write!(w, "{v},").map_err(io)?;
            }
            writeln!(w, "{y}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Min-max range of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub lo: f64,
    pub hi: f64,
}

impl ColumnRange {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Self { lo, hi }
    }

    fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    /// Constant columns map to 0.5.
    pub fn to_unit(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }
}

/// Per-column affine maps fitted on a training set and reused for any other
/// data passed through the same model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationMaps {
    pub inputs: Vec<ColumnRange>,
    pub output: ColumnRange,
}

impl NormalizationMaps {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let inputs = (0..ds.dim())
            .map(|j| ColumnRange::of((0..ds.len()).map(|i| ds.input(i)[j])))
            .collect();
        let output = ColumnRange::of(ds.outputs().iter().copied());
        Ok(Self { inputs, output })
    }

    /// Maps that leave inputs in `[0, 1]` untouched and only scale the output.
    pub fn identity_inputs(dim: usize, output: ColumnRange) -> Self {
        Self {
            inputs: vec![ColumnRange { lo: 0.0, hi: 1.0 }; dim],
            output,
        }
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.inputs)
            .map(|(&v, c)| c.to_unit(v))
            .collect()
    }

    pub fn normalize_output(&self, y: f64) -> f64 {
        self.output.to_unit(y)
    }

    pub fn denormalize_output(&self, y_norm: f64) -> f64 {
        self.output.from_unit(y_norm)
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.inputs.len() {
            return Err(Error::Dimension {
                expected: self.inputs.len(),
                got: ds.dim(),
            });
        }
        let mut out = Dataset::with_capacity(ds.dim(), ds.len());
        for (x, y) in ds.records() {
            out.inputs.extend(self.normalize_input(x));
            out.outputs.push(self.normalize_output(y));
        }
        Ok(out)
    }
}

/// Fits min-max maps on `ds` and returns the normalized copy.
pub fn normalize(ds: &Dataset) -> Result<(Dataset, NormalizationMaps)> {
    let maps = NormalizationMaps::fit(ds)?;
    Ok((maps.apply(ds)?, maps))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputColumn {
    Index(usize),
    Name(String),
    Last,
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub output: OutputColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            output: OutputColumn::Last,
        }
    }
}

/// Loads a numeric CSV file. Rows and columns in error messages are 0-based
/// data-row and field indices.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let csv_err = |row: usize, column: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => csv_err(0, 0, format!("{other:?}")),
        })?;

    let headers = if opts.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| csv_err(0, 0, e.to_string()))?
                .iter()
                .map(|h| h.trim_matches('"').to_string())
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    let mut width: Option<usize> = headers.as_ref().map(|h| h.len());
    let mut out_col: Option<usize> = None;
    let mut ds: Option<Dataset> = None;
    let mut row_inputs = Vec::new();

    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(row, 0, e.to_string()))?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(csv_err(
                row,
                rec.len().min(w),
                format!("expected {w} fields, found {}", rec.len()),
            ));
        }
        let oc = match out_col {
            Some(c) => c,
            None => {
                let c = resolve_output_column(&opts.output, headers.as_deref(), w)
                    .map_err(|m| csv_err(row, 0, m))?;
                out_col = Some(c);
                c
            }
        };
        row_inputs.clear();
        let mut output = 0.0;
        for (column, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| csv_err(row, column, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(csv_err(row, column, "non-finite value".into()));
            }
            if column == oc {
                output = v;
            } else {
                row_inputs.push(v);
            }
        }
        ds.get_or_insert_with(|| Dataset::new(w - 1))
            .push(&row_inputs, output)?;
    }
    ds.ok_or(Error::Empty("csv data"))
}

fn resolve_output_column(
    sel: &OutputColumn,
    headers: Option<&[String]>,
    width: usize,
) -> std::result::Result<usize, String> {
    if width < 2 {
        return Err("need at least one input and one output column".into());
    }
    match sel {
        OutputColumn::Last => Ok(width - 1),
        OutputColumn::Index(i) if *i < width => Ok(*i),
        OutputColumn::Index(i) => Err(format!("output column {i} out of range (width {width})")),
        OutputColumn::Name(name) => headers
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| format!("no column named {name:?}")),
    }
}

/// Input dimension of the synthetic stochastic system.
pub const SYNTHETIC_DIM: usize = 5;

/// The four probe inputs whose output distributions are plotted in the
/// reference experiment.
pub const REFERENCE_PROBES: [[f64; SYNTHETIC_DIM]; 4] = [
    [0.5, 0.5, 0.5, 0.5, 0.5],
    [0.65, 0.0, 0.5, 0.5, 0.5],
    [0.68, 1.0, 0.5, 0.5, 0.5],
    [0.74, 1.0, 0.5, 0.5, 1.0],
];

/// Evaluates the synthetic system at input `x` with perturbation draws `c`
/// and perturbation amplitude `amplitude` (`X* = x + amplitude (c - 0.5)`).
/// Perturbed inputs are not clipped.
pub fn eval_perturbed(x: &[f64], c: &[f64], amplitude: f64) -> Result<f64> {
    for v in [x, c] {
        if v.len() != SYNTHETIC_DIM {
            return Err(Error::Dimension {
                expected: SYNTHETIC_DIM,
                got: v.len(),
            });
        }
    }
    let mut s = [0.0; SYNTHETIC_DIM];
    for j in 0..SYNTHETIC_DIM {
        s[j] = x[j] + amplitude * (c[j] - 0.5);
    }
    Ok(system_output(&s))
}

/// The synthetic system with the reference perturbation amplitude 0.4.
pub fn eval_benchmark_system(x: &[f64], c: &[f64]) -> Result<f64> {
    eval_perturbed(x, c, 0.4)
}

fn system_output(s: &[f64; SYNTHETIC_DIM]) -> f64 {
    let scale = s[4].exp();
    let a = 20.0 * (s[0] - 0.5 + s[1] / 6.0) * scale;
    let b = 20.0 * (s[0] - 0.5 - s[1] / 6.0) * scale;
    (2.0 + 2.0 * s[2]) / (3.0 * PI) * (a.atan() + FRAC_PI_2)
        + (2.0 + 2.0 * s[3]) / (3.0 * PI) * (b.atan() + FRAC_PI_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            noise_amplitude: 0.4,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn new(noise_amplitude: f64, seed: u64) -> Result<Self> {
        if !(noise_amplitude >= 0.0 && noise_amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise amplitude must be finite and >= 0, got {noise_amplitude}"
            )));
        }
        Ok(Self {
            noise_amplitude,
            seed,
        })
    }

    /// `n` records with inputs uniform on `[0,1)^5` and outputs from one
    /// fresh perturbation draw each.
    pub fn generate(&self, n: usize) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        let mut rng = rng::seeded(self.seed);
        let mut ds = Dataset::with_capacity(SYNTHETIC_DIM, n);
        let mut x = [0.0; SYNTHETIC_DIM];
        let mut c = [0.0; SYNTHETIC_DIM];
        for _ in 0..n {
            x.iter_mut().for_each(|v| *v = rng.gen());
            c.iter_mut().for_each(|v| *v = rng.gen());
            let y = eval_perturbed(&x, &c, self.noise_amplitude)?;
            ds.push(&x, y)?;
        }
        Ok(ds)
    }

    /// `n_mc` independent outputs at fixed input `x`, sorted ascending.
    pub fn oracle_sample(&self, x: &[f64], n_mc: usize, seed: u64) -> Result<Vec<f64>> {
        if n_mc == 0 {
            return Err(Error::InvalidParameter("n_mc must be >= 1".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut c = [0.0; SYNTHETIC_DIM];
        let mut out = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            c.iter_mut().for_each(|v| *v = rng.gen());
            out.push(eval_perturbed(x, &c, self.noise_amplitude)?);
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}
