//! CSV exchange format for samples and populations.
//!
//! Samples carry columns `y1..yd`, `x1..xp`, `weight` (`1 / pi`), `stratum`,
//! `psu` and, for two-stage samples, `pi1` (first-stage probability). Column
//! order is free; unknown columns are rejected.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::population::FinitePopulation;
use super::sample::{SampleDesign, SurveySample};
use crate::error::{Error, Result};

struct Layout {
    y: Vec<usize>,
    x: Vec<usize>,
    named: Vec<(&'static str, Option<usize>)>,
}

impl Layout {
    fn column(&self, name: &str) -> Option<usize> {
        self.named
            .iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, c)| *c)
    }
}

fn schema(column: impl Into<String>, row: Option<usize>, message: impl Into<String>) -> Error {
    Error::Schema {
        column: column.into(),
        row,
        message: message.into(),
    }
}

/// Resolves header positions. `required` and `optional` name the non-indexed
/// columns; indexed families `y<k>` and `x<k>` must run 1..=count.
fn layout(
    headers: &csv::StringRecord,
    required: &[&'static str],
    optional: &[&'static str],
    need_y: bool,
    need_x: bool,
) -> Result<Layout> {
    let mut y: Vec<(usize, usize)> = Vec::new();
    let mut x: Vec<(usize, usize)> = Vec::new();
    let mut named: Vec<(&'static str, Option<usize>)> = required
        .iter()
        .chain(optional)
        .map(|n| (*n, None))
        .collect();
    for (col, raw) in headers.iter().enumerate() {
        let name = raw.trim();
        let indexed = |prefix: char| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.starts_with('0') {
                return None;
            }
            rest.parse::<usize>().ok()
        };
        if let Some(k) = indexed('y') {
            y.push((k, col));
        } else if let Some(k) = indexed('x') {
            x.push((k, col));
        } else if let Some(slot) = named.iter_mut().find(|(n, _)| *n == name) {
            if slot.1.is_some() {
                return Err(schema(name, None, "duplicate column"));
            }
            slot.1 = Some(col);
        } else {
            return Err(schema(name, None, "unknown column"));
        }
    }
    let family =
        |mut cols: Vec<(usize, usize)>, prefix: &str, needed: bool| -> Result<Vec<usize>> {
            cols.sort_unstable();
            if cols.is_empty() && needed {
                return Err(schema(format!("{prefix}1"), None, "missing column"));
            }
            for (pos, (k, _)) in cols.iter().enumerate() {
                if *k != pos + 1 {
                    return Err(schema(
                        format!("{prefix}{}", pos + 1),
                        None,
                        "missing column",
                    ));
                }
            }
            Ok(cols.into_iter().map(|(_, c)| c).collect())
        };
    let y = family(y, "y", need_y)?;
    let x = family(x, "x", need_x)?;
    for (name, col) in &named {
        if col.is_none() && required.contains(name) {
            return Err(schema(*name, None, "missing column"));
        }
    }
    Ok(Layout {
        y,
        x,
        named: std::mem::take(&mut named),
    })
}

fn field<'a>(record: &'a csv::StringRecord, col: usize, name: &str, row: usize) -> Result<&'a str> {
    match record.get(col).map(str::trim) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(schema(name, Some(row), "missing value")),
    }
}

fn real(record: &csv::StringRecord, col: usize, name: &str, row: usize) -> Result<f64> {
    let s = field(record, col, name, row)?;
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(schema(
            name,
            Some(row),
            format!("`{s}` is not a finite number"),
        )),
    }
}

fn label(record: &csv::StringRecord, col: usize, name: &str, row: usize) -> Result<u32> {
    let s = field(record, col, name, row)?;
    s.parse::<u32>().map_err(|_| {
        schema(
            name,
            Some(row),
            format!("`{s}` is not a nonnegative integer label"),
        )
    })
}

fn reader<R: Read>(input: R) -> Result<(csv::Reader<R>, csv::StringRecord)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(schema("header", None, "header row is missing"));
    }
    Ok((rdr, headers))
}

/// Reads a sample file. Data rows are numbered from 1.
///
/// Without a `pi1` column the sample is treated as a single-stage Poisson
/// sample; with it, as a two-stage sample whose second-stage probability is
/// `pi / pi1`.
pub fn read_sample<R: Read>(input: R) -> Result<SurveySample> {
    let (mut rdr, headers) = reader(input)?;
    let lay = layout(
        &headers,
        &["weight", "stratum", "psu"],
        &["pi1"],
        true,
        false,
    )?;
    let (w_col, h_col, j_col) = (
        lay.column("weight").expect("required"),
        lay.column("stratum").expect("required"),
        lay.column("psu").expect("required"),
    );
    let pi1_col = lay.column("pi1");
    let (d, p) = (lay.y.len(), lay.x.len());
    let (mut ys, mut xs, mut pi, mut stratum, mut psu, mut pi1) = (
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
    );
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (k, &c) in lay.y.iter().enumerate() {
            ys.push(real(&record, c, &format!("y{}", k + 1), row)?);
        }
        for (k, &c) in lay.x.iter().enumerate() {
            xs.push(real(&record, c, &format!("x{}", k + 1), row)?);
        }
        let w = real(&record, w_col, "weight", row)?;
        if w < 1.0 {
            return Err(Error::InvalidWeights { row, value: w });
        }
        pi.push(1.0 / w);
        stratum.push(label(&record, h_col, "stratum", row)?);
        psu.push(label(&record, j_col, "psu", row)?);
        if let Some(c) = pi1_col {
            let v = real(&record, c, "pi1", row)?;
            if !(v > 0.0 && v <= 1.0) || v < 1.0 / w {
                return Err(schema(
                    "pi1",
                    Some(row),
                    format!("{v} is not a valid first-stage probability"),
                ));
            }
            pi1.push(v);
        }
    }
    let n = pi.len();
    if n == 0 {
        return Err(schema("weight", None, "no data rows"));
    }
    let y = Array2::from_shape_vec((n, d), ys).expect("row-major shape");
    let x = Array2::from_shape_vec((n, p), xs).expect("row-major shape");
    let design = if pi1_col.is_some() {
        let stage2 = pi
            .iter()
            .zip(&pi1)
            .map(|(p, a)| (p / a).min(1.0))
            .collect::<Vec<_>>();
        // Recompute pi from the factors so the stored product is exact.
        for i in 0..n {
            pi[i] = pi1[i] * stage2[i];
        }
        SampleDesign::TwoStage {
            stage1_pi: pi1,
            stage2_pi: stage2,
        }
    } else {
        SampleDesign::Poisson
    };
    SurveySample::new(x, y, pi, stratum, psu, design)
}

pub fn read_sample_file(path: &Path) -> Result<SurveySample> {
    read_sample(std::fs::File::open(path)?)
}

/// Query points for prediction: covariates and, optionally, outcomes to test
/// for tolerance-region membership.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTable {
    pub x: Array2<f64>,
    pub y: Option<Array2<f64>>,
}

impl QueryTable {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Reads query rows with columns `x1..xp` and optionally `y1..yd`. An empty
/// input, or a header without rows, yields no queries.
pub fn read_queries<R: Read>(
    mut input: R,
    covariates: usize,
    outcomes: usize,
) -> Result<QueryTable> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok(QueryTable {
            x: Array2::zeros((0, covariates)),
            y: None,
        });
    }
    let (mut rdr, headers) = reader(text.as_bytes())?;
    let lay = layout(&headers, &[], &[], false, true)?;
    if lay.x.len() != covariates {
        return Err(schema(
            format!("x{}", lay.x.len().min(covariates) + 1),
            None,
            format!(
                "model expects {covariates} covariates, file has {}",
                lay.x.len()
            ),
        ));
    }
    if !lay.y.is_empty() && lay.y.len() != outcomes {
        return Err(schema(
            format!("y{}", lay.y.len().min(outcomes) + 1),
            None,
            format!("model has {outcomes} outcomes, file has {}", lay.y.len()),
        ));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (k, &c) in lay.x.iter().enumerate() {
            xs.push(real(&record, c, &format!("x{}", k + 1), row)?);
        }
        for (k, &c) in lay.y.iter().enumerate() {
            ys.push(real(&record, c, &format!("y{}", k + 1), row)?);
        }
        rows += 1;
    }
    let x = Array2::from_shape_vec((rows, covariates), xs).expect("row-major fill");
    let y = (!lay.y.is_empty())
        .then(|| Array2::from_shape_vec((rows, outcomes), ys).expect("row-major fill"));
    Ok(QueryTable { x, y })
}

fn push_reals(rec: &mut Vec<String>, values: impl IntoIterator<Item = f64>) {
    // `Display` for f64 is the shortest representation that round-trips.
    rec.extend(values.into_iter().map(|v| v.to_string()));
}

pub fn write_sample<W: Write>(sample: &SurveySample, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let two_stage = match sample.design() {
        SampleDesign::TwoStage { stage1_pi, .. } => Some(stage1_pi),
        _ => None,
    };
    let mut header: Vec<String> = (1..=sample.outcome_dim())
        .map(|k| format!("y{k}"))
        .collect();
    header.extend((1..=sample.n_covariates()).map(|k| format!("x{k}")));
    header.extend(["weight", "stratum", "psu"].map(String::from));
    if two_stage.is_some() {
        header.push("pi1".into());
    }
    wtr.write_record(&header)?;
    let w = sample.weights();
    for i in 0..sample.len() {
        let mut rec = Vec::with_capacity(header.len());
        push_reals(&mut rec, sample.outcome(i).iter().copied());
        push_reals(&mut rec, sample.covariates(i).iter().copied());
        push_reals(&mut rec, [w[i]]);
        rec.push(sample.strata()[i].to_string());
        rec.push(sample.psus()[i].to_string());
        if let Some(p1) = two_stage {
            push_reals(&mut rec, [p1[i]]);
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Population files carry `y1..yd`, `x1..xp`, `z`, `stratum`, `psu`.
pub fn write_population<W: Write>(pop: &FinitePopulation, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=pop.outcome_dim()).map(|k| format!("y{k}")).collect();
    header.extend((1..=pop.n_covariates()).map(|k| format!("x{k}")));
    header.extend(["z", "stratum", "psu"].map(String::from));
    wtr.write_record(&header)?;
    for i in 0..pop.len() {
        let mut rec = Vec::with_capacity(header.len());
        push_reals(&mut rec, pop.y().row(i).iter().copied());
        push_reals(&mut rec, pop.covariates(i).iter().copied());
        push_reals(&mut rec, [pop.z()[i]]);
        rec.push(pop.strata()[i].to_string());
        rec.push(pop.psus()[i].to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_population<R: Read>(input: R) -> Result<FinitePopulation> {
    let (mut rdr, headers) = reader(input)?;
    let lay = layout(&headers, &["z", "stratum", "psu"], &[], true, false)?;
    let (z_col, h_col, j_col) = (
        lay.column("z").expect("required"),
        lay.column("stratum").expect("required"),
        lay.column("psu").expect("required"),
    );
    let (d, p) = (lay.y.len(), lay.x.len());
    let (mut ys, mut xs, mut z, mut stratum, mut psu) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (k, &c) in lay.y.iter().enumerate() {
            ys.push(real(&record, c, &format!("y{}", k + 1), row)?);
        }
        for (k, &c) in lay.x.iter().enumerate() {
            xs.push(real(&record, c, &format!("x{}", k + 1), row)?);
        }
        z.push(real(&record, z_col, "z", row)?);
        stratum.push(label(&record, h_col, "stratum", row)?);
        psu.push(label(&record, j_col, "psu", row)?);
    }
    let n = z.len();
    let y = Array2::from_shape_vec((n, d), ys).expect("row-major shape");
    let x = Array2::from_shape_vec((n, p), xs).expect("row-major shape");
    FinitePopulation::new(x, y, z, stratum, psu)
}
