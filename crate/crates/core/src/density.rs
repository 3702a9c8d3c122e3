//! Analytic density families on R^1 and R^2.
//!
//! Every family evaluates pointwise via [`Density::eval`], reports a finite
//! box carrying all but a requested tail mass via [`Density::support_box`],
//! and round-trips through the serializable [`DensityDescriptor`] form.
//! Differential entropy is available in closed form for Gaussians and
//! exponentials and by midpoint quadrature for everything else.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::{GridDensity, DEFAULT_CELLS_1D, DEFAULT_CELLS_2D};

/// Tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// A symmetric matrix of dimension 1 or 2, stored densely.
///
/// Eigenvalues, determinants, and inverses use the closed 2x2 formulas, so
/// every query is exact up to rounding and needs no factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    /// Row-major entries; length `dim * dim`.
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from explicit rows, rejecting non-square, oversized, or
    /// asymmetric input (tolerance [`SYMMETRY_TOL`]).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > 2 {
            return Err(Error::invalid(
                "covariance",
                format!("only 1x1 and 2x2 matrices are supported, got {dim}x{dim}"),
            ));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::invalid("covariance", "entries must be finite"));
                }
                data.push(v);
            }
        }
        if dim == 2 {
            let skew = (data[1] - data[2]).abs();
            let scale = data[1].abs().max(data[2].abs()).max(1.0);
            if skew > SYMMETRY_TOL * scale {
                return Err(Error::invalid(
                    "covariance",
                    format!("matrix is not symmetric: |a01 - a10| = {skew:.3e}"),
                ));
            }
            // Store the symmetrized off-diagonal so downstream algebra sees
            // one consistent value.
            let off = 0.5 * (data[1] + data[2]);
            data[1] = off;
            data[2] = off;
        }
        Ok(SymMatrix { dim, data })
    }

    /// 1x1 matrix.
    pub fn scalar(v: f64) -> Result<Self> {
        SymMatrix::from_rows(&[vec![v]])
    }

    /// 2x2 matrix from its upper triangle.
    pub fn from_upper(xx: f64, xy: f64, yy: f64) -> Result<Self> {
        SymMatrix::from_rows(&[vec![xx, xy], vec![xy, yy]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.data[0],
            _ => self.data[0] * self.data[3] - self.data[1] * self.data[2],
        }
    }

    /// Eigenvalues in ascending order (closed form).
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.data[0]],
            _ => {
                let half_trace = 0.5 * (self.data[0] + self.data[3]);
                let half_diff = 0.5 * (self.data[0] - self.data[3]);
                let radius = (half_diff * half_diff + self.data[1] * self.data[1]).sqrt();
                vec![half_trace - radius, half_trace + radius]
            }
        }
    }

    /// Inverse, failing on a singular or indefinite matrix.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if self.eigenvalues().iter().any(|&l| l <= 0.0) {
            return Err(Error::invalid(
                "covariance",
                "matrix must be positive definite",
            ));
        }
        let data = match self.dim {
            1 => vec![1.0 / self.data[0]],
            _ => vec![
                self.data[3] / det,
                -self.data[1] / det,
                -self.data[2] / det,
                self.data[0] / det,
            ],
        };
        Ok(SymMatrix {
            dim: self.dim,
            data,
        })
    }

    /// Quadratic form `dx' * self * dx`.
    pub fn quad_form(&self, dx: &[f64]) -> f64 {
        match self.dim {
            1 => self.data[0] * dx[0] * dx[0],
            _ => {
                self.data[0] * dx[0] * dx[0]
                    + 2.0 * self.data[1] * dx[0] * dx[1]
                    + self.data[3] * dx[1] * dx[1]
            }
        }
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(SymMatrix {
            dim: self.dim,
            data,
        })
    }

    /// Rows as nested vectors (descriptor form).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j)).collect())
            .collect()
    }
}

/// A non-degenerate Gaussian with precomputed inverse covariance and
/// log-normalization constant.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: SymMatrix,
    inv_cov: SymMatrix,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                got: mean.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mean", "entries must be finite"));
        }
        if cov.eigenvalues().iter().any(|&l| l <= 0.0) {
            return Err(Error::invalid(
                "covariance",
                "matrix must be positive definite",
            ));
        }
        let inv_cov = cov.inverse()?;
        let dim = mean.len() as f64;
        let log_norm = -0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + cov.det().ln());
        Ok(Gaussian {
            mean,
            cov,
            inv_cov,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut dx = [0.0; 2];
        for (i, (xi, mi)) in x.iter().zip(&self.mean).enumerate() {
            dx[i] = xi - mi;
        }
        let q = self.inv_cov.quad_form(&dx[..self.dim()]);
        (self.log_norm - 0.5 * q).exp()
    }

    /// Differential entropy, `0.5 * ln((2*pi*e)^m * det(cov))`.
    pub fn entropy(&self) -> f64 {
        let m = self.dim() as f64;
        0.5 * (m * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + self.cov.det().ln())
    }
}

/// One piece of a piecewise density: `scale * base` restricted to
/// `[lo, hi)`, where either bound may be infinite.
#[derive(Debug, Clone)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub scale: f64,
    pub base: Density,
}

/// A 1-D density assembled from scaled restrictions of other densities to
/// disjoint intervals, normalized globally at construction.
#[derive(Debug, Clone)]
pub struct Piecewise {
    pieces: Vec<Piece>,
    /// Total unnormalized mass; kept for inspection.
    raw_mass: f64,
}

impl Piecewise {
    /// Builds and normalizes. Pieces are sorted by lower bound and must not
    /// overlap (touching endpoints are fine). Scales must be positive and
    /// bases one-dimensional.
    pub fn new(mut pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::invalid("pieces", "at least one piece is required"));
        }
        for piece in &pieces {
            if piece.base.dim() != 1 {
                return Err(Error::invalid("pieces", "piece bases must be 1-D"));
            }
            if !(piece.scale > 0.0) || !piece.scale.is_finite() {
                return Err(Error::invalid("pieces", "piece scales must be positive"));
            }
            if piece.lo.is_nan() || piece.hi.is_nan() || piece.lo >= piece.hi {
                return Err(Error::invalid(
                    "pieces",
                    "piece bounds must satisfy lo < hi",
                ));
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for pair in pieces.windows(2) {
            if pair[0].hi > pair[1].lo + 1e-12 {
                return Err(Error::invalid(
                    "pieces",
                    format!(
                        "pieces overlap: [{}, {}) and [{}, {})",
                        pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi
                    ),
                ));
            }
        }
        let mut raw_mass = 0.0;
        for piece in &pieces {
            let m = interval_mass(&piece.base, piece.lo, piece.hi)?;
            raw_mass += piece.scale * m;
        }
        if !(raw_mass > 0.0) || !raw_mass.is_finite() {
            return Err(Error::degenerate(format!(
                "piecewise density has unnormalizable mass {raw_mass}"
            )));
        }
        for piece in &mut pieces {
            piece.scale /= raw_mass;
        }
        Ok(Piecewise { pieces, raw_mass })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Unnormalized mass the constructor divided out.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    fn eval(&self, x: f64) -> f64 {
        for piece in &self.pieces {
            if x >= piece.lo && x < piece.hi {
                return piece.scale * piece.base.eval(&[x]);
            }
        }
        0.0
    }
}

/// Mass a 1-D density assigns to `[lo, hi]`, in closed form where one
/// exists and by fine midpoint quadrature otherwise.
fn interval_mass(d: &Density, lo: f64, hi: f64) -> Result<f64> {
    match d {
        Density::Gaussian(g) if g.dim() == 1 => {
            let mu = g.mean()[0];
            let sd = g.cov().entry(0, 0).sqrt();
            let upper = if hi.is_infinite() {
                1.0
            } else {
                std_normal_cdf((hi - mu) / sd)
            };
            let lower = if lo.is_infinite() {
                0.0
            } else {
                std_normal_cdf((lo - mu) / sd)
            };
            Ok(upper - lower)
        }
        Density::Exponential { rate } => {
            let a = lo.max(0.0);
            if hi <= 0.0 {
                return Ok(0.0);
            }
            let upper = if hi.is_infinite() {
                0.0
            } else {
                (-rate * hi).exp()
            };
            Ok((-rate * a).exp() - upper)
        }
        Density::Uniform { lower, upper } if lower.len() == 1 => {
            let overlap = (hi.min(upper[0]) - lo.max(lower[0])).max(0.0);
            Ok(overlap / (upper[0] - lower[0]))
        }
        _ => {
            // No closed form: clip to the base's own effective support and
            // integrate by midpoints on a fine 1-D mesh.
            let support = d.support_box(1e-12)?;
            let a = lo.max(support[0].0);
            let b = hi.min(support[0].1);
            if b <= a {
                return Ok(0.0);
            }
            let n = 1 << 16;
            let dx = (b - a) / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                total += d.eval(&[a + (i as f64 + 0.5) * dx]);
            }
            Ok(total * dx)
        }
    }
}

/// A probability density on R^1 or R^2.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(Gaussian),
    /// Convex combination of Gaussians; weights sum to one.
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<Gaussian>,
    },
    /// `rate * exp(-rate * x)` on `[0, inf)`.
    Exponential { rate: f64 },
    /// Constant on an axis-aligned box.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// `2 * phi(x) * Phi(shape * x)` on the line.
    SkewNormal { shape: f64 },
    Piecewise(Piecewise),
    /// A density already tabulated on a grid, evaluated by cell lookup.
    Grid(GridDensity),
}

impl Density {
    /// 1-D Gaussian from mean and variance.
    pub fn gaussian1(mean: f64, var: f64) -> Result<Self> {
        Ok(Density::Gaussian(Gaussian::new(
            vec![mean],
            SymMatrix::scalar(var)?,
        )?))
    }

    /// 2-D Gaussian from mean and covariance rows.
    pub fn gaussian2(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        Ok(Density::Gaussian(Gaussian::new(
            mean.to_vec(),
            SymMatrix::from_rows(&[cov[0].to_vec(), cov[1].to_vec()])?,
        )?))
    }

    /// Gaussian mixture; weights must be positive and are normalized to one.
    pub fn mixture(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::invalid(
                "weights",
                "one weight per component is required",
            ));
        }
        if weights.is_empty() {
            return Err(Error::invalid("weights", "mixture must not be empty"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", "weights must be positive"));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::invalid(
                "components",
                "all components must share one dimension",
            ));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Density::GaussianMixture {
            weights,
            components,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::invalid("rate", "rate must be positive"));
        }
        Ok(Density::Exponential { rate })
    }

    /// Uniform density on a 1-D interval or 2-D box.
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() || lower.len() > 2 {
            return Err(Error::invalid("lower", "dimension must be 1 or 2"));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::invalid("lower", "bounds must satisfy lo < hi"));
            }
        }
        Ok(Density::Uniform { lower, upper })
    }

    pub fn skew_normal(shape: f64) -> Result<Self> {
        if !shape.is_finite() {
            return Err(Error::invalid("shape", "shape must be finite"));
        }
        Ok(Density::SkewNormal { shape })
    }

    /// A continuous density that is Gaussian-shaped with variance `var_left`
    /// for `x < 0` and variance `var_right` for `x >= 0`, the two halves
    /// scaled to meet continuously at zero and integrate to one.
    pub fn two_sided_gaussian(var_left: f64, var_right: f64) -> Result<Self> {
        if !(var_left > 0.0) || !(var_right > 0.0) {
            return Err(Error::invalid("var_left", "variances must be positive"));
        }
        // Continuity at zero forces scale_right / scale_left to equal
        // sigma_right / sigma_left; total mass then fixes both.
        let ratio = (var_right / var_left).sqrt();
        let left = Piece {
            lo: f64::NEG_INFINITY,
            hi: 0.0,
            scale: 1.0,
            base: Density::gaussian1(0.0, var_left)?,
        };
        let right = Piece {
            lo: 0.0,
            hi: f64::INFINITY,
            scale: ratio,
            base: Density::gaussian1(0.0, var_right)?,
        };
        Ok(Density::Piecewise(Piecewise::new(vec![left, right])?))
    }

    /// An exponential with rate `rate` whose tail beyond `cut` is lifted by
    /// a constant factor chosen so the whole density still integrates to
    /// one while the body on `[0, cut]` keeps the exact unit-rate-style
    /// shape `exp(-rate * x)`.
    pub fn scaled_tail_exponential(rate: f64, cut: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::invalid("rate", "rate must be positive"));
        }
        if !(cut > 0.0) || !cut.is_finite() {
            return Err(Error::invalid("cut", "cut must be positive and finite"));
        }
        // Body mass is integral of exp(-rate x) over [0, cut], i.e.
        // (1 - exp(-rate cut)) / rate; the tail factor k solves
        // body + k * exp(-rate cut) / rate = 1.
        let tail_raw = (-rate * cut).exp();
        let k = (rate - 1.0 + tail_raw) / tail_raw;
        if !(k > 0.0) {
            return Err(Error::invalid(
                "rate",
                "no positive tail factor balances this body; use rate closer to 1",
            ));
        }
        // Express both pieces through the normalized Exponential family:
        // exp(-rate x) = (1/rate) * [rate * exp(-rate x)].
        let body = Piece {
            lo: 0.0,
            hi: cut,
            scale: 1.0 / rate,
            base: Density::exponential(rate)?,
        };
        let tail = Piece {
            lo: cut,
            hi: f64::INFINITY,
            scale: k / rate,
            base: Density::exponential(rate)?,
        };
        Ok(Density::Piecewise(Piecewise::new(vec![body, tail])?))
    }

    /// Dimension of the underlying space (1 or 2).
    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(g) => g.dim(),
            Density::GaussianMixture { components, .. } => components[0].dim(),
            Density::Exponential { .. } => 1,
            Density::Uniform { lower, .. } => lower.len(),
            Density::SkewNormal { .. } => 1,
            Density::Piecewise(_) => 1,
            Density::Grid(g) => g.dim(),
        }
    }

    /// Pointwise evaluation. Points outside a family's support return zero.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Density::Gaussian(g) => g.eval(x),
            Density::GaussianMixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| w * c.eval(x))
                .sum(),
            Density::Exponential { rate } => {
                if x[0] < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x[0]).exp()
                }
            }
            Density::Uniform { lower, upper } => {
                let inside = lower
                    .iter()
                    .zip(upper)
                    .zip(x)
                    .all(|((lo, hi), xi)| xi >= lo && xi <= hi);
                if inside {
                    let volume: f64 = lower.iter().zip(upper).map(|(lo, hi)| hi - lo).product();
                    1.0 / volume
                } else {
                    0.0
                }
            }
            Density::SkewNormal { shape } => {
                let phi = (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt();
                2.0 * phi * std_normal_cdf(shape * x[0])
            }
            Density::Piecewise(p) => p.eval(x[0]),
            Density::Grid(g) => g.eval(x),
        }
    }

    /// An axis-aligned box carrying at least `1 - mass_tol` of the mass.
    pub fn support_box(&self, mass_tol: f64) -> Result<Vec<(f64, f64)>> {
        if !(mass_tol > 0.0 && mass_tol < 1.0) {
            return Err(Error::invalid(
                "mass_tol",
                "tail tolerance must lie in (0, 1)",
            ));
        }
        match self {
            Density::Gaussian(g) => {
                // Split the tail budget across axes and sides.
                let m = g.dim() as f64;
                let z = std_normal_quantile(1.0 - 0.5 * mass_tol / m);
                Ok((0..g.dim())
                    .map(|i| {
                        let sd = g.cov().entry(i, i).sqrt();
                        (g.mean()[i] - z * sd, g.mean()[i] + z * sd)
                    })
                    .collect())
            }
            Density::GaussianMixture { components, .. } => {
                // The union of per-component boxes at the same tolerance
                // excludes at most a weighted average of the same tails.
                let mut boxes = components.iter().map(|c| {
                    let m = c.dim() as f64;
                    let z = std_normal_quantile(1.0 - 0.5 * mass_tol / m);
                    (0..c.dim())
                        .map(|i| {
                            let sd = c.cov().entry(i, i).sqrt();
                            (c.mean()[i] - z * sd, c.mean()[i] + z * sd)
                        })
                        .collect::<Vec<_>>()
                });
                let first = boxes.next().expect("mixtures are non-empty");
                Ok(boxes.fold(first, |acc, b| union_boxes(&acc, &b)))
            }
            Density::Exponential { rate } => Ok(vec![(0.0, -mass_tol.ln() / rate)]),
            Density::Uniform { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(&lo, &hi)| (lo, hi))
                .collect()),
            Density::SkewNormal { .. } => {
                // Both tails are dominated by 2 * phi, so a symmetric box at
                // the quantile for a quarter of the budget per side works
                // for every shape parameter.
                let z = std_normal_quantile(1.0 - 0.25 * mass_tol);
                Ok(vec![(-z, z)])
            }
            Density::Piecewise(p) => {
                let per_piece = mass_tol / p.pieces().len() as f64;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for piece in p.pieces() {
                    let base_box = piece.base.support_box(per_piece)?;
                    lo = lo.min(piece.lo.max(base_box[0].0));
                    hi = hi.max(piece.hi.min(base_box[0].1));
                }
                Ok(vec![(lo, hi)])
            }
            Density::Grid(g) => Ok(g.bounds().to_vec()),
        }
    }

    /// Tabulates on `bounds` with `cells` cells per axis.
    pub fn to_grid(&self, bounds: &[(f64, f64)], cells: &[usize]) -> Result<GridDensity> {
        GridDensity::from_density(self, bounds, cells)
    }

    /// Tabulates on the density's own effective support (tail mass `1e-6`)
    /// at the default resolution for its dimension.
    pub fn to_default_grid(&self) -> Result<GridDensity> {
        let bounds = self.support_box(1e-6)?;
        let cells = default_cells(self.dim());
        self.to_grid(&bounds, &cells)
    }

    /// Differential entropy in nats: closed form for Gaussians and
    /// exponentials, default-grid quadrature otherwise.
    pub fn entropy(&self) -> Result<f64> {
        match self {
            Density::Gaussian(g) => Ok(g.entropy()),
            Density::Exponential { rate } => Ok(1.0 - rate.ln()),
            Density::Uniform { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| (hi - lo).ln())
                .sum()),
            Density::Grid(g) => Ok(g.entropy()),
            _ => Ok(self.to_default_grid()?.entropy()),
        }
    }

    /// Name of the family, for error messages.
    pub fn family_name(&self) -> &'static str {
        match self {
            Density::Gaussian(_) => "gaussian",
            Density::GaussianMixture { .. } => "gaussian_mixture",
            Density::Exponential { .. } => "exponential",
            Density::Uniform { .. } => "uniform",
            Density::SkewNormal { .. } => "skew_normal",
            Density::Piecewise(_) => "piecewise",
            Density::Grid(_) => "grid",
        }
    }
}

/// Default per-axis resolution for each supported dimension.
pub fn default_cells(dim: usize) -> Vec<usize> {
    match dim {
        1 => vec![DEFAULT_CELLS_1D],
        _ => vec![DEFAULT_CELLS_2D, DEFAULT_CELLS_2D],
    }
}

/// Smallest box containing both arguments.
pub fn union_boxes(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    a.iter()
        .zip(b)
        .map(|(&(alo, ahi), &(blo, bhi))| (alo.min(blo), ahi.max(bhi)))
        .collect()
}

// ---------------------------------------------------------------------------
// Serializable descriptors
// ---------------------------------------------------------------------------

/// Gaussian parameters in plain-data form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// One piece of a serialized piecewise density; `null` bounds mean
/// unbounded on that side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceDescriptor {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub scale: f64,
    pub base: Box<DensityDescriptor>,
}

/// Plain-data form of [`Density`], round-trippable through JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum DensityDescriptor {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<GaussianParams>,
    },
    Exponential {
        rate: f64,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    SkewNormal {
        shape: f64,
    },
    Piecewise {
        pieces: Vec<PieceDescriptor>,
    },
    Grid {
        bounds: Vec<(f64, f64)>,
        cells: Vec<usize>,
        values: Vec<f64>,
    },
}

impl TryFrom<DensityDescriptor> for Density {
    type Error = Error;

    fn try_from(desc: DensityDescriptor) -> Result<Density> {
        match desc {
            DensityDescriptor::Gaussian { mean, covariance } => {
                let cov = SymMatrix::from_rows(&covariance)?;
                Ok(Density::Gaussian(Gaussian::new(mean, cov)?))
            }
            DensityDescriptor::GaussianMixture {
                weights,
                components,
            } => {
                let comps = components
                    .into_iter()
                    .map(|c| Gaussian::new(c.mean, SymMatrix::from_rows(&c.covariance)?))
                    .collect::<Result<Vec<_>>>()?;
                Density::mixture(weights, comps)
            }
            DensityDescriptor::Exponential { rate } => Density::exponential(rate),
            DensityDescriptor::Uniform { lower, upper } => Density::uniform(lower, upper),
            DensityDescriptor::SkewNormal { shape } => Density::skew_normal(shape),
            DensityDescriptor::Piecewise { pieces } => {
                let built = pieces
                    .into_iter()
                    .map(|p| {
                        Ok(Piece {
                            lo: p.lo.unwrap_or(f64::NEG_INFINITY),
                            hi: p.hi.unwrap_or(f64::INFINITY),
                            scale: p.scale,
                            base: Density::try_from(*p.base)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Density::Piecewise(Piecewise::new(built)?))
            }
            DensityDescriptor::Grid {
                bounds,
                cells,
                values,
            } => Ok(Density::Grid(GridDensity::from_values(
                &bounds, &cells, values,
            )?)),
        }
    }
}

impl From<&Density> for DensityDescriptor {
    fn from(d: &Density) -> DensityDescriptor {
        match d {
            Density::Gaussian(g) => DensityDescriptor::Gaussian {
                mean: g.mean().to_vec(),
                covariance: g.cov().rows(),
            },
            Density::GaussianMixture {
                weights,
                components,
            } => DensityDescriptor::GaussianMixture {
                weights: weights.clone(),
                components: components
                    .iter()
                    .map(|c| GaussianParams {
                        mean: c.mean().to_vec(),
                        covariance: c.cov().rows(),
                    })
                    .collect(),
            },
            Density::Exponential { rate } => DensityDescriptor::Exponential { rate: *rate },
            Density::Uniform { lower, upper } => DensityDescriptor::Uniform {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            Density::SkewNormal { shape } => DensityDescriptor::SkewNormal { shape: *shape },
            Density::Piecewise(p) => DensityDescriptor::Piecewise {
                pieces: p
                    .pieces()
                    .iter()
                    .map(|piece| PieceDescriptor {
                        lo: piece.lo.is_finite().then_some(piece.lo),
                        hi: piece.hi.is_finite().then_some(piece.hi),
                        scale: piece.scale,
                        base: Box::new(DensityDescriptor::from(&piece.base)),
                    })
                    .collect(),
            },
            Density::Grid(g) => DensityDescriptor::Grid {
                bounds: g.bounds().to_vec(),
                cells: g.cells().to_vec(),
                values: g.values().to_vec(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TIGHT: f64 = 1e-12;

    #[test]
    fn standard_normal_density_at_one() {
        let g = Density::gaussian1(0.0, 1.0).unwrap();
        assert!((g.eval(&[1.0]) - 0.24197072451914337).abs() < TIGHT);
    }

    #[test]
    fn gaussian_support_box_uses_tail_quantile() {
        let g = Density::gaussian1(0.0, 1.0).unwrap();
        let b = g.support_box(1e-6).unwrap();
        // Two-sided 1e-6 tail budget puts each edge at the 1 - 5e-7 quantile.
        assert!((b[0].1 - 4.891638475699398).abs() < 1e-9);
        assert!((b[0].0 + b[0].1).abs() < TIGHT);
    }

    #[test]
    fn exponential_support_box_is_exact() {
        let e = Density::exponential(1.0).unwrap();
        let b = e.support_box(1e-6).unwrap();
        assert_eq!(b[0].0, 0.0);
        assert!((b[0].1 - 13.815510557964274).abs() < 1e-9);
    }

    #[test]
    fn gaussian_entropy_closed_form() {
        let g = Density::gaussian1(0.0, 1.0).unwrap();
        assert!((g.entropy().unwrap() - 1.4189385332046727).abs() < TIGHT);
        let g2 = Density::gaussian2([0.0, 0.0], [[4.0, 0.0], [0.0, 1.0]]).unwrap();
        // 0.5 * ln((2 pi e)^2 * 4)
        let expected = 0.5 * ((2.0 * std::f64::consts::PI * std::f64::consts::E).powi(2) * 4.0).ln();
        assert!((g2.entropy().unwrap() - expected).abs() < TIGHT);
    }

    #[test]
    fn exponential_entropy_closed_form() {
        let e = Density::exponential(2.0).unwrap();
        assert!((e.entropy().unwrap() - (1.0 - 2.0f64.ln())).abs() < TIGHT);
    }

    #[test]
    fn asymmetric_covariance_is_rejected() {
        let got = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.3, 1.0]]);
        assert!(matches!(
            got,
            Err(Error::InvalidParameter { field: "covariance", .. })
        ));
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let cov = SymMatrix::from_upper(1.0, 2.0, 1.0).unwrap();
        assert!(Gaussian::new(vec![0.0, 0.0], cov).is_err());
    }

    #[test]
    fn eigenvalues_of_correlated_covariance() {
        let m = SymMatrix::from_upper(6.0, 2.0, 3.0).unwrap();
        let eig = m.eigenvalues();
        // Closed form: (9 +- sqrt(9 + 16)) / 2 = 2 and 7.
        assert!((eig[0] - 2.0).abs() < TIGHT);
        assert!((eig[1] - 7.0).abs() < TIGHT);
    }

    #[test]
    fn two_sided_gaussian_is_continuous_and_normalized() {
        let d = Density::two_sided_gaussian(1.0, 2.0).unwrap();
        // Continuity at zero.
        let left = d.eval(&[-1e-9]);
        let right = d.eval(&[1e-9]);
        assert!((left - right).abs() < 1e-9);
        // Left piece carries 2 / (1 + sqrt(2)) of a half-Gaussian, so the
        // scale on the left half is 2 / (1 + sqrt(2)).
        let k1 = 2.0 / (1.0 + std::f64::consts::SQRT_2);
        assert!((d.eval(&[-1.0]) - k1 * 0.24197072451914337).abs() < 1e-12);
        // Numeric mass check on a wide grid.
        let grid = d.to_default_grid().unwrap();
        assert!((grid.renorm_factor() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaled_tail_exponential_matches_hand_computed_factor() {
        let d = Density::scaled_tail_exponential(0.8, 1.0).unwrap();
        // k = (rate - 1 + exp(-rate c)) / exp(-rate c) at rate 0.8, c 1.
        let k = 0.5548918143015065;
        assert!((d.eval(&[0.5]) - (-0.8f64 * 0.5).exp()).abs() < TIGHT);
        assert!((d.eval(&[2.0]) - k * (-0.8f64 * 2.0).exp()).abs() < TIGHT);
        // Midpoint quadrature is only O(dx)-accurate across the jump at the
        // cut, so the raw mass lands within ~1e-4 of one, not machine eps.
        let grid = d.to_default_grid().unwrap();
        assert!((grid.renorm_factor() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn skew_normal_peak_value() {
        // At the origin the skew-normal equals phi(0) for every shape.
        let d = Density::skew_normal(2.0).unwrap();
        assert!((d.eval(&[0.0]) - 0.3989422804014327 * 0.5 * 2.0).abs() < TIGHT);
    }

    #[test]
    fn descriptor_round_trip_gaussian() {
        let d = Density::gaussian2([1.0, -2.0], [[2.0, 0.5], [0.5, 3.0]]).unwrap();
        let desc = DensityDescriptor::from(&d);
        let json = serde_json::to_string(&desc).unwrap();
        assert!(json.contains("\"family\":\"gaussian\""));
        let back: DensityDescriptor = serde_json::from_str(&json).unwrap();
        let rebuilt = Density::try_from(back).unwrap();
        assert!((rebuilt.eval(&[0.3, -1.0]) - d.eval(&[0.3, -1.0])).abs() < TIGHT);
    }

    #[test]
    fn descriptor_round_trip_piecewise_with_open_bounds() {
        let d = Density::two_sided_gaussian(1.0, 2.0).unwrap();
        let desc = DensityDescriptor::from(&d);
        let json = serde_json::to_string(&desc).unwrap();
        // Unbounded endpoints serialize as null, not a sentinel number.
        assert!(json.contains("\"lo\":null"));
        let back: DensityDescriptor = serde_json::from_str(&json).unwrap();
        let rebuilt = Density::try_from(back).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            assert!((rebuilt.eval(&[x]) - d.eval(&[x])).abs() < 1e-12);
        }
    }

    #[test]
    fn descriptor_rejects_bad_mixture_weights() {
        let desc = DensityDescriptor::GaussianMixture {
            weights: vec![0.5, -0.5],
            components: vec![
                GaussianParams {
                    mean: vec![0.0],
                    covariance: vec![vec![1.0]],
                },
                GaussianParams {
                    mean: vec![1.0],
                    covariance: vec![vec![1.0]],
                },
            ],
        };
        let err = Density::try_from(desc).unwrap_err();
        assert!(err.to_string().contains("weights"));
    }

    #[test]
    fn mixture_weights_normalize() {
        let comps = vec![
            Gaussian::new(vec![0.0], SymMatrix::scalar(1.0).unwrap()).unwrap(),
            Gaussian::new(vec![5.0], SymMatrix::scalar(1.0).unwrap()).unwrap(),
        ];
        let d = Density::mixture(vec![2.0, 2.0], comps).unwrap();
        if let Density::GaussianMixture { weights, .. } = &d {
            assert!((weights[0] - 0.5).abs() < TIGHT);
        } else {
            panic!("expected mixture");
        }
    }

    #[test]
    fn piecewise_rejects_overlapping_pieces() {
        let mk = |lo: f64, hi: f64| Piece {
            lo,
            hi,
            scale: 1.0,
            base: Density::uniform(vec![-10.0], vec![10.0]).unwrap(),
        };
        let err = Piecewise::new(vec![mk(0.0, 2.0), mk(1.0, 3.0)]).unwrap_err();
        assert!(err.to_string().contains("overlap"));
    }
}
