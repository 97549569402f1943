use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgotError};

/// How a flattened context window maps back onto time and state coordinates.
///
/// Entry `t * ambient + c` of a window vector is coordinate `c` at time
/// offset `t * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowLayout {
    pub context: usize,
    pub ambient: usize,
    pub dt: f64,
}

impl WindowLayout {
    pub fn dim(&self) -> usize {
        self.context * self.ambient
    }

    /// Time span covered by a window, from first to last sample.
    pub fn span(&self) -> f64 {
        (self.context.saturating_sub(1)) as f64 * self.dt
    }
}

/// A uniformly sampled multivariate time series, `T x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub dt: f64,
}

/// Paired snapshots `(x_i, y_i)` one lag `dt` apart.
#[derive(Debug, Clone)]
pub struct TrajectoryDataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub dt: f64,
    pub window: Option<WindowLayout>,
}

impl TrajectoryDataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, dt: f64) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(SgotError::Dimension(format!(
                "x is {:?} but y is {:?}",
                x.shape(),
                y.shape()
            )));
        }
        if x.nrows() < 2 {
            return Err(SgotError::InsufficientData(format!(
                "need at least 2 snapshot pairs, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(SgotError::Dimension("state dimension is zero".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SgotError::Parameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { x, y, dt, window: None })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Sliding-window (delay-embedded) snapshot pairs with stride one.
pub fn windowed_pairs(series: &DMatrix<f64>, context: usize, dt_sample: f64) -> Result<TrajectoryDataset> {
    let t = series.nrows();
    let amb = series.ncols();
    if context == 0 {
        return Err(SgotError::Parameter("context window must be >= 1".into()));
    }
    if t <= context {
        return Err(SgotError::InsufficientData(format!(
            "series of length {t} is too short for a context window of {context}"
        )));
    }
    let n = t - context;
    let d = context * amb;
    let window = |start: usize| {
        let mut row = Vec::with_capacity(d);
        for s in start..start + context {
            for c in 0..amb {
                row.push(series[(s, c)]);
            }
        }
        row
    };
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n * d);
    for i in 0..n {
        xs.extend(window(i));
        ys.extend(window(i + 1));
    }
    let x = DMatrix::from_row_slice(n, d, &xs);
    let y = DMatrix::from_row_slice(n, d, &ys);
    let mut data = TrajectoryDataset::new(x, y, dt_sample)?;
    data.window = Some(WindowLayout { context, ambient: amb, dt: dt_sample });
    Ok(data)
}

/// Parse the trajectory CSV format: a `# dt=<seconds>` header line, then one
/// comma-separated row of state coordinates per time step.
pub fn parse_trajectory_csv<R: BufRead>(reader: R) -> Result<Trajectory> {
    let mut lines = reader.lines();
    let head = loop {
        match lines.next() {
            None => return Err(SgotError::InsufficientData("empty trajectory file".into())),
            Some(l) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
        }
    };
    let dt = parse_dt_header(&head)?;
    let rest: Vec<String> = lines.collect::<std::io::Result<_>>()?;
    let body = rest.join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SgotError::Parse(format!("row {}: {e}", k + 1)))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(SgotError::Parse(format!(
                    "row {} has {} columns, expected {w}",
                    k + 1,
                    rec.len()
                )))
            }
            _ => {}
        }
        for f in rec.iter() {
            let v: f64 = f
                .parse()
                .map_err(|_| SgotError::Parse(format!("row {}: cannot parse '{f}'", k + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| SgotError::InsufficientData("trajectory has no rows".into()))?;
    Ok(Trajectory { states: DMatrix::from_row_slice(rows, width, &values), dt })
}

fn parse_dt_header(line: &str) -> Result<f64> {
    let t = line.trim();
    let rest = t
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|r| r.strip_prefix("dt"))
        .map(str::trim)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| SgotError::Parse(format!("expected '# dt=<seconds>' header, got '{t}'")))?;
    let dt: f64 = rest
        .trim()
        .parse()
        .map_err(|_| SgotError::Parse(format!("bad dt value '{}'", rest.trim())))?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SgotError::Parse(format!("dt must be positive, got {dt}")));
    }
    Ok(dt)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let f = std::fs::File::open(path)?;
    parse_trajectory_csv(std::io::BufReader::new(f))
}

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    writeln!(w, "# dt={}", traj.dt)?;
    for row in traj.states.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}
