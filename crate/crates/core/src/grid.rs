//! Regular-grid tabulation of densities and grid-level functionals.
//!
//! A [`GridDensity`] samples a density at cell centers of an axis-aligned
//! box, renormalizes so the midpoint-rule mass is exactly one, and records
//! the factor it divided out. All downstream machinery — level sets,
//! conservativeness checks, fusion — operates on these tabulations, so the
//! cell ordering here (row-major, axis 0 outermost) fixes the ordering of
//! every exported artifact.

use crate::density::Density;
use crate::error::{Error, Result};

/// Default cells per axis in one dimension.
pub const DEFAULT_CELLS_1D: usize = 4096;
/// Default cells per axis in two dimensions.
pub const DEFAULT_CELLS_2D: usize = 512;
/// Minimum cells per axis accepted by any constructor.
pub const MIN_CELLS_PER_AXIS: usize = 64;

/// Values below this are treated as "no support" by the checks that need a
/// hard zero/nonzero distinction.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Result of a grid Kullback-Leibler computation.
#[derive(Debug, Clone, Copy)]
pub struct KlDivergence {
    /// Divergence in nats; `f64::INFINITY` when `infinite` is set.
    pub nats: f64,
    /// True when the first argument has mass where the second has none.
    pub infinite: bool,
}

/// A density tabulated at the cell centers of a regular grid.
#[derive(Debug, Clone)]
pub struct GridDensity {
    bounds: Vec<(f64, f64)>,
    cells: Vec<usize>,
    /// Cell-center values, row-major with axis 0 outermost; integrates to
    /// one under the midpoint rule.
    values: Vec<f64>,
    /// Per-axis cell-center coordinates, cached for hot loops.
    axis_centers: Vec<Vec<f64>>,
    cell_volume: f64,
    /// Midpoint-rule mass of the raw samples before normalization.
    renorm_factor: f64,
}

fn validate_geometry(bounds: &[(f64, f64)], cells: &[usize]) -> Result<()> {
    if bounds.is_empty() || bounds.len() > 2 {
        return Err(Error::degenerate(format!(
            "dimension must be 1 or 2, got {}",
            bounds.len()
        )));
    }
    if cells.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: cells.len(),
        });
    }
    for (axis, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::degenerate(format!(
                "axis {axis} bounds [{lo}, {hi}] are not a finite interval"
            )));
        }
    }
    for (axis, &n) in cells.iter().enumerate() {
        if n < MIN_CELLS_PER_AXIS {
            return Err(Error::degenerate(format!(
                "axis {axis} has {n} cells; at least {MIN_CELLS_PER_AXIS} are required"
            )));
        }
    }
    Ok(())
}

fn centers_for(bounds: &[(f64, f64)], cells: &[usize]) -> Vec<Vec<f64>> {
    bounds
        .iter()
        .zip(cells)
        .map(|(&(lo, hi), &n)| {
            let dx = (hi - lo) / n as f64;
            (0..n).map(|i| lo + (i as f64 + 0.5) * dx).collect()
        })
        .collect()
}

impl GridDensity {
    /// Samples `density` at cell centers and normalizes.
    pub fn from_density(
        density: &Density,
        bounds: &[(f64, f64)],
        cells: &[usize],
    ) -> Result<Self> {
        if density.dim() != bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: density.dim(),
                got: bounds.len(),
            });
        }
        Self::from_fn(bounds, cells, |x| density.eval(x))
    }

    /// Samples an arbitrary function at cell centers and normalizes.
    /// Negative or non-finite samples are rejected with their location.
    pub fn from_fn(
        bounds: &[(f64, f64)],
        cells: &[usize],
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        validate_geometry(bounds, cells)?;
        let axis_centers = centers_for(bounds, cells);
        let total_cells: usize = cells.iter().product();
        let mut values = Vec::with_capacity(total_cells);
        match bounds.len() {
            1 => {
                for &x in &axis_centers[0] {
                    values.push(check_sample(f(&[x]), &[x])?);
                }
            }
            _ => {
                for &x in &axis_centers[0] {
                    for &y in &axis_centers[1] {
                        values.push(check_sample(f(&[x, y]), &[x, y])?);
                    }
                }
            }
        }
        let cell_volume: f64 = bounds
            .iter()
            .zip(cells)
            .map(|(&(lo, hi), &n)| (hi - lo) / n as f64)
            .product();
        let raw_mass: f64 = values.iter().sum::<f64>() * cell_volume;
        if !(raw_mass > 0.0) || !raw_mass.is_finite() {
            return Err(Error::degenerate(format!(
                "sampled mass {raw_mass} cannot be normalized; \
                 the grid box may miss the density's support"
            )));
        }
        for v in &mut values {
            *v /= raw_mass;
        }
        Ok(GridDensity {
            bounds: bounds.to_vec(),
            cells: cells.to_vec(),
            values,
            axis_centers,
            cell_volume,
            renorm_factor: raw_mass,
        })
    }

    /// Wraps precomputed cell values (e.g. read back from disk),
    /// normalizing them like any other sample set.
    pub fn from_values(bounds: &[(f64, f64)], cells: &[usize], values: Vec<f64>) -> Result<Self> {
        validate_geometry(bounds, cells)?;
        let expected: usize = cells.iter().product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        let axis_centers = centers_for(bounds, cells);
        let mut values = values;
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::degenerate(format!(
                    "value {v} at cell {idx} is not a valid density sample"
                )));
            }
        }
        let cell_volume: f64 = bounds
            .iter()
            .zip(cells)
            .map(|(&(lo, hi), &n)| (hi - lo) / n as f64)
            .product();
        let raw_mass: f64 = values.iter().sum::<f64>() * cell_volume;
        if !(raw_mass > 0.0) || !raw_mass.is_finite() {
            return Err(Error::degenerate(format!(
                "values sum to mass {raw_mass}, which cannot be normalized"
            )));
        }
        for v in &mut values {
            *v /= raw_mass;
        }
        Ok(GridDensity {
            bounds: bounds.to_vec(),
            cells: cells.to_vec(),
            values,
            axis_centers,
            cell_volume,
            renorm_factor: raw_mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Mass of the raw samples that construction divided out.
    pub fn renorm_factor(&self) -> f64 {
        self.renorm_factor
    }

    /// Cell-center coordinates along one axis.
    pub fn axis_centers(&self, axis: usize) -> &[f64] {
        &self.axis_centers[axis]
    }

    /// Center of the cell at a linear index, as `(x, y)`; the second
    /// coordinate is zero in one dimension.
    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        match self.dim() {
            1 => (self.axis_centers[0][idx], 0.0),
            _ => {
                let n1 = self.cells[1];
                (self.axis_centers[0][idx / n1], self.axis_centers[1][idx % n1])
            }
        }
    }

    /// Cell-center coordinates as a vector, for callers that want a slice.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let (x, y) = self.cell_center(idx);
        match self.dim() {
            1 => vec![x],
            _ => vec![x, y],
        }
    }

    /// True when the cell touches the grid boundary on any axis.
    pub fn is_boundary_cell(&self, idx: usize) -> bool {
        match self.dim() {
            1 => idx == 0 || idx + 1 == self.cells[0],
            _ => {
                let n1 = self.cells[1];
                let i0 = idx / n1;
                let i1 = idx % n1;
                i0 == 0 || i0 + 1 == self.cells[0] || i1 == 0 || i1 + 1 == n1
            }
        }
    }

    /// Midpoint-rule mass (one up to rounding, by construction).
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume
    }

    /// Nearest-cell lookup; zero outside the box.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        for axis in 0..self.dim() {
            let (lo, hi) = self.bounds[axis];
            let xi = x[axis];
            if xi < lo || xi > hi {
                return 0.0;
            }
            let n = self.cells[axis];
            let u = ((xi - lo) / (hi - lo) * n as f64) as usize;
            idx = idx * n + u.min(n - 1);
        }
        self.values[idx]
    }

    /// Differential entropy of the tabulated density, in nats.
    pub fn entropy(&self) -> f64 {
        let mut h = 0.0;
        for &v in &self.values {
            if v > 0.0 {
                h -= v * v.ln();
            }
        }
        h * self.cell_volume
    }

    /// True when both grids share the same lattice: equal cell counts and
    /// bounds equal to within a relative tolerance.
    pub fn same_lattice(&self, other: &GridDensity) -> bool {
        if self.cells != other.cells || self.bounds.len() != other.bounds.len() {
            return false;
        }
        self.bounds.iter().zip(&other.bounds).all(|(a, b)| {
            let span = (a.1 - a.0).abs().max(1.0);
            (a.0 - b.0).abs() <= 1e-9 * span && (a.1 - b.1).abs() <= 1e-9 * span
        })
    }

    fn require_same_lattice(&self, other: &GridDensity, what: &str) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::lattice(format!(
                "{what} requires both densities on one lattice \
                 (cells {:?} vs {:?}, bounds {:?} vs {:?})",
                self.cells, other.cells, self.bounds, other.bounds
            )))
        }
    }

    /// Kullback-Leibler divergence `KL(self || other)` on a shared lattice.
    /// Mass of `self` where `other` vanishes makes the divergence infinite;
    /// that is reported through the flag rather than an error.
    pub fn kl_divergence(&self, other: &GridDensity) -> Result<KlDivergence> {
        self.require_same_lattice(other, "KL divergence")?;
        let mut nats = 0.0;
        for (&p, &q) in self.values.iter().zip(&other.values) {
            if p <= 0.0 {
                continue;
            }
            if q <= 0.0 {
                return Ok(KlDivergence {
                    nats: f64::INFINITY,
                    infinite: true,
                });
            }
            nats += p * (p / q).ln();
        }
        Ok(KlDivergence {
            nats: nats * self.cell_volume,
            infinite: false,
        })
    }

    /// Mass-weighted centroid of the tabulation.
    pub fn centroid(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        for (idx, &v) in self.values.iter().enumerate() {
            let w = v * self.cell_volume;
            let (x, y) = self.cell_center(idx);
            acc[0] += w * x;
            if self.dim() == 2 {
                acc[1] += w * y;
            }
        }
        acc
    }

    /// Pointwise product with `f` evaluated at cell centers, renormalized.
    /// Returns the new density and the pre-normalization mass (the evidence
    /// when `f` is a likelihood).
    pub fn reweight(&self, f: impl Fn(&[f64]) -> f64) -> Result<(GridDensity, f64)> {
        let mut raw = Vec::with_capacity(self.values.len());
        for (idx, &v) in self.values.iter().enumerate() {
            let coords = self.coords(idx);
            let w = f(&coords);
            if !w.is_finite() || w < 0.0 {
                return Err(Error::degenerate(format!(
                    "reweighting function returned {w} at {coords:?}"
                )));
            }
            raw.push(v * w);
        }
        let evidence: f64 = raw.iter().sum::<f64>() * self.cell_volume;
        if !(evidence > 0.0) {
            return Err(Error::degenerate(
                "reweighted density has zero mass everywhere on the grid",
            ));
        }
        for v in &mut raw {
            *v /= evidence;
        }
        let out = GridDensity {
            bounds: self.bounds.clone(),
            cells: self.cells.clone(),
            values: raw,
            axis_centers: self.axis_centers.clone(),
            cell_volume: self.cell_volume,
            renorm_factor: evidence,
        };
        Ok((out, evidence))
    }
}

fn check_sample(v: f64, at: &[f64]) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        Err(Error::degenerate(format!(
            "density sample {v} at {at:?} is not usable"
        )))
    } else {
        Ok(v)
    }
}

/// Grids two densities of equal dimension on the union of their effective
/// supports (tail mass `1e-6` each), so every pairwise check sees both on
/// one lattice.
pub fn common_pair(
    truth: &Density,
    candidate: &Density,
    cells: &[usize],
) -> Result<(GridDensity, GridDensity)> {
    if truth.dim() != candidate.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            got: candidate.dim(),
        });
    }
    let bounds = crate::density::union_boxes(
        &truth.support_box(1e-6)?,
        &candidate.support_box(1e-6)?,
    );
    let t = truth.to_grid(&bounds, cells)?;
    let c = candidate.to_grid(&bounds, cells)?;
    Ok((t, c))
}
