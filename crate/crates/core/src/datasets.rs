//! Synthetic manifolds and the preprocessing transforms applied to them.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Generator parameters carried alongside the observed columns, e.g. the
/// roll angle and height of a Swiss roll.
#[derive(Clone, Debug, PartialEq)]
pub struct Intrinsic {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

/// An `n x p` matrix of observations.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    column_names: Vec<String>,
    intrinsic: Option<Intrinsic>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::param(format!(
                "a dataset needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::param("a dataset needs at least one column"));
        }
        if column_names.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} column names for {} columns",
                column_names.len(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::param(format!("non-finite entry at row {r}, column {c}")));
        }
        Ok(Self {
            values,
            column_names,
            intrinsic: None,
        })
    }

    /// Build with default column names `x0, x1, ...`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(values, names)
    }

    pub fn with_intrinsic(mut self, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != self.nrows() {
            return Err(Error::Dimension(format!(
                "intrinsic has {} rows, data has {}",
                values.nrows(),
                self.nrows()
            )));
        }
        if names.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} intrinsic names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        self.intrinsic = Some(Intrinsic { names, values });
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn intrinsic(&self) -> Option<&Intrinsic> {
        self.intrinsic.as_ref()
    }

    /// Intrinsic column by name, if present.
    pub fn intrinsic_column(&self, name: &str) -> Option<Vec<f64>> {
        let intr = self.intrinsic.as_ref()?;
        let j = intr.names.iter().position(|n| n == name)?;
        Some(intr.values.column(j).iter().copied().collect())
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::param(format!("row index {bad} out of range")));
        }
        let values = self.values.select_rows(rows);
        let mut out = Self::new(values, self.column_names.clone())?;
        if let Some(intr) = &self.intrinsic {
            out.intrinsic = Some(Intrinsic {
                names: intr.names.clone(),
                values: intr.values.select_rows(rows),
            });
        }
        Ok(out)
    }

    fn check_column(&self, j: usize) -> Result<()> {
        if j >= self.ncols() {
            return Err(Error::param(format!(
                "column index {j} out of range for {} columns",
                self.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwissRollParams {
    pub n: usize,
    pub noise_sigma: f64,
    pub width: f64,
    pub seed: u64,
}

pub const SWISS_ROLL_S_MIN: f64 = 1.5 * PI;
pub const SWISS_ROLL_S_MAX: f64 = 4.5 * PI;

/// Samples `(s cos s, h, s sin s)` plus isotropic Gaussian noise, with
/// `s ~ U[3pi/2, 9pi/2]` and `h ~ U[0, width]`. Intrinsic columns are `s`
/// and `h`.
pub fn make_swiss_roll(params: SwissRollParams) -> Result<DataMatrix> {
    let SwissRollParams {
        n,
        noise_sigma,
        width,
        seed,
    } = params;
    if n < 2 {
        return Err(Error::param(format!("swiss roll needs n >= 2, got {n}")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::param(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::param(format!("width must be > 0, got {width}")));
    }

    let mut rng = seed::rng(seed);
    let mut values = DMatrix::zeros(n, 3);
    let mut intrinsic = DMatrix::zeros(n, 2);
    for i in 0..n {
        let s = SWISS_ROLL_S_MIN + (SWISS_ROLL_S_MAX - SWISS_ROLL_S_MIN) * rng.random::<f64>();
        let h = width * rng.random::<f64>();
        let xi: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        values[(i, 0)] = s * s.cos() + noise_sigma * xi[0];
        values[(i, 1)] = h + noise_sigma * xi[1];
        values[(i, 2)] = s * s.sin() + noise_sigma * xi[2];
        intrinsic[(i, 0)] = s;
        intrinsic[(i, 1)] = h;
    }
    DataMatrix::new(values, vec!["x".into(), "y".into(), "z".into()])?
        .with_intrinsic(vec!["s".into(), "h".into()], intrinsic)
}

/// Arc length of the roll's spiral measured from its inner end,
/// `int_{3pi/2}^{s} sqrt(1 + u^2) du`.
pub fn swiss_roll_arc_length(s: f64) -> f64 {
    fn primitive(u: f64) -> f64 {
        0.5 * (u * (1.0 + u * u).sqrt() + u.asinh())
    }
    primitive(s) - primitive(SWISS_ROLL_S_MIN)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Line,
    Arc,
    Spiral,
    Circle,
}

impl CurveKind {
    pub fn is_closed(self) -> bool {
        matches!(self, CurveKind::Circle)
    }

    /// Point on the curve for parameter `tau` in `[0, 1]`.
    pub fn point(self, tau: f64) -> [f64; 2] {
        match self {
            CurveKind::Line => [2.0 * tau, tau],
            CurveKind::Arc => [(PI * tau).cos(), (PI * tau).sin()],
            CurveKind::Spiral => {
                let theta = 3.0 * PI * tau;
                let r = 1.0 + theta / PI;
                [r * theta.cos(), r * theta.sin()]
            }
            CurveKind::Circle => [(2.0 * PI * tau).cos(), (2.0 * PI * tau).sin()],
        }
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(CurveKind::Line),
            "arc" => Ok(CurveKind::Arc),
            "spiral" => Ok(CurveKind::Spiral),
            "circle" => Ok(CurveKind::Circle),
            other => Err(Error::param(format!("unknown curve kind `{other}`"))),
        }
    }
}

/// Points equally spaced in arc length along a planar curve, plus noise.
///
/// Arc length is inverted on a polyline with ten vertices per requested
/// sample. The intrinsic column `arc_length` is normalized to `[0, 1]`.
pub fn make_curve_1d(kind: CurveKind, n: usize, noise_sigma: f64, seed: u64) -> Result<DataMatrix> {
    if n < 10 {
        return Err(Error::param(format!("1-d curves need n >= 10, got {n}")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::param(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }

    let vertices = 10 * n + 1;
    let taus: Vec<f64> = (0..vertices).map(|i| i as f64 / (vertices - 1) as f64).collect();
    let mut cumulative = Vec::with_capacity(vertices);
    cumulative.push(0.0);
    let mut prev = kind.point(0.0);
    for &tau in &taus[1..] {
        let p = kind.point(tau);
        let step = ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
        cumulative.push(cumulative.last().unwrap() + step);
        prev = p;
    }
    let total = *cumulative.last().unwrap();
    let denom = if kind.is_closed() { n } else { n - 1 } as f64;

    let mut rng = seed::rng(seed);
    let mut values = DMatrix::zeros(n, 2);
    let mut intrinsic = DMatrix::zeros(n, 1);
    let mut seg = 0;
    for i in 0..n {
        let target = total * i as f64 / denom;
        while seg + 2 < vertices && cumulative[seg + 1] < target {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let frac = if span > 0.0 {
            ((target - cumulative[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let tau = taus[seg] + frac * (taus[seg + 1] - taus[seg]);
        let p = kind.point(tau);
        for (d, &coord) in p.iter().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            values[(i, d)] = coord + noise_sigma * xi;
        }
        intrinsic[(i, 0)] = target / total;
    }
    DataMatrix::new(values, vec!["x".into(), "y".into()])?
        .with_intrinsic(vec!["arc_length".into()], intrinsic)
}

fn column_mean_sd(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Zero mean and unit population standard deviation per column.
pub fn standardize(x: &DataMatrix) -> Result<DataMatrix> {
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let (mean, sd) = column_mean_sd(&x.column(j));
        if !(sd > 0.0) {
            return Err(Error::DegenerateColumn {
                column: x.column_names[j].clone(),
                what: "standardization",
            });
        }
        out.values.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

/// Affine map of every column onto `[0, 1]`.
pub fn minmax_normalize(x: &DataMatrix) -> Result<DataMatrix> {
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let col = x.values.column(j);
        let lo = col.min();
        let hi = col.max();
        if !(hi > lo) {
            return Err(Error::DegenerateColumn {
                column: x.column_names[j].clone(),
                what: "min-max normalization",
            });
        }
        out.values.column_mut(j).apply(|v| *v = (*v - lo) / (hi - lo));
    }
    Ok(out)
}

pub fn scale_column(x: &DataMatrix, j: usize, factor: f64) -> Result<DataMatrix> {
    x.check_column(j)?;
    if !factor.is_finite() {
        return Err(Error::param(format!("scale factor must be finite, got {factor}")));
    }
    let mut out = x.clone();
    out.values.column_mut(j).apply(|v| *v *= factor);
    Ok(out)
}

/// Append `copies` noisy duplicates of column `j`. Copy `c` draws its noise
/// from a stream keyed by `(seed, c)`.
pub fn duplicate_column(
    x: &DataMatrix,
    j: usize,
    copies: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<DataMatrix> {
    x.check_column(j)?;
    if copies < 1 {
        return Err(Error::param("copies must be >= 1"));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::param(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let n = x.nrows();
    let p = x.ncols();
    let mut values = x.values.clone().resize_horizontally(p + copies, 0.0);
    let mut names = x.column_names.clone();
    for c in 0..copies {
        let mut rng = seed::rng(seed::derive(seed, &[c as u64]));
        for i in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            values[(i, p + c)] = x.values[(i, j)] + noise_sigma * xi;
        }
        names.push(format!("{}_copy{}", x.column_names[j], c + 1));
    }
    let mut out = DataMatrix::new(values, names)?;
    out.intrinsic = x.intrinsic.clone();
    Ok(out)
}

/// Snap column `j` onto the nearest of the sorted `levels`; exact ties go
/// to the lower level.
pub fn discretize_column(x: &DataMatrix, j: usize, levels: &[f64]) -> Result<DataMatrix> {
    x.check_column(j)?;
    if levels.is_empty() {
        return Err(Error::param("discretization needs at least one level"));
    }
    if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("discretization levels must be finite and sorted"));
    }
    let mut out = x.clone();
    out.values.column_mut(j).apply(|v| {
        let mut best = levels[0];
        let mut best_dist = (*v - best).abs();
        for &l in &levels[1..] {
            let d = (*v - l).abs();
            if d < best_dist {
                best = l;
                best_dist = d;
            }
        }
        *v = best;
    });
    Ok(out)
}
