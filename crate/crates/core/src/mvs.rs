//! Minimum-volume sets on grids and in closed form.
//!
//! A minimum-volume set at level `alpha` is the smallest-volume region
//! carrying at least `alpha` probability; for a density it is a super-level
//! set, so on a grid it is a prefix of the cells sorted by density. The
//! sort order here is pinned — descending density, then ascending distance
//! from the mass centroid, then ascending linear index — which makes every
//! set, threshold, and exported curve deterministic even through ties.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::density::{Density, SymMatrix};
use crate::error::{Error, Result};
use crate::grid::GridDensity;

/// Step used to refine a level found on a coarse alpha grid.
pub const ALPHA_REFINE_STEP: f64 = 0.001;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Cells of `grid` in canonical admit order: density descending, then
/// squared distance from the mass centroid ascending, then index ascending.
pub fn canonical_order(grid: &GridDensity) -> Vec<usize> {
    let centroid = grid.centroid();
    let cx = centroid[0];
    let cy = if grid.dim() == 2 { centroid[1] } else { 0.0 };
    let values = grid.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b].total_cmp(&values[a]).then_with(|| {
            let (ax, ay) = grid.cell_center(a);
            let (bx, by) = grid.cell_center(b);
            let da = (ax - cx).powi(2) + (ay - cy).powi(2);
            let db = (bx - cx).powi(2) + (by - cy).powi(2);
            da.total_cmp(&db).then_with(|| a.cmp(&b))
        })
    });
    order
}

/// A grid's cells in canonical admit order with cumulative masses, the
/// shared engine behind thresholds, level sets, and condition curves.
#[derive(Debug, Clone)]
pub struct MvOrder {
    order: Vec<usize>,
    /// `prefix_mass[i]` is the mass of the first `i + 1` cells.
    prefix_mass: Vec<f64>,
}

impl MvOrder {
    pub fn new(grid: &GridDensity) -> Self {
        let order = canonical_order(grid);
        let volume = grid.cell_volume();
        let values = grid.values();
        let mut acc = 0.0;
        let prefix_mass = order
            .iter()
            .map(|&idx| {
                acc += values[idx] * volume;
                acc
            })
            .collect();
        MvOrder { order, prefix_mass }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn prefix_mass(&self) -> &[f64] {
        &self.prefix_mass
    }

    /// Index into the admit order of the last cell of the level-`alpha`
    /// set: the first position whose cumulative mass reaches `alpha`.
    pub fn cut_at(&self, alpha: f64) -> usize {
        let k = self.prefix_mass.partition_point(|&m| m < alpha);
        k.min(self.prefix_mass.len() - 1)
    }
}

/// A minimum-volume set extracted from a grid.
#[derive(Debug, Clone)]
pub struct MvSet {
    /// Requested probability level.
    pub alpha: f64,
    /// Density value of the last admitted cell; the set is
    /// `{x : p(x) >= threshold}` up to tie-breaking.
    pub threshold: f64,
    /// Mass actually enclosed; at least `alpha`, and overshooting by at
    /// most one cell's mass.
    pub achieved_mass: f64,
    /// Member cells as ascending linear indices.
    pub cells: Vec<usize>,
}

impl MvSet {
    /// Boolean membership mask over the grid's cells.
    pub fn mask(&self, num_cells: usize) -> Vec<bool> {
        let mut mask = vec![false; num_cells];
        for &idx in &self.cells {
            mask[idx] = true;
        }
        mask
    }
}

/// Density value at the boundary of the level-`alpha` minimum-volume set.
pub fn level_threshold(grid: &GridDensity, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let order = MvOrder::new(grid);
    Ok(grid.values()[order.order()[order.cut_at(alpha)]])
}

/// The level-`alpha` minimum-volume set of a gridded density.
pub fn mv_set_grid(grid: &GridDensity, alpha: f64) -> Result<MvSet> {
    check_alpha(alpha)?;
    let order = MvOrder::new(grid);
    mv_set_from_order(grid, &order, alpha)
}

/// Same as [`mv_set_grid`] but reusing a precomputed order, for callers
/// extracting many levels from one grid.
pub fn mv_set_from_order(grid: &GridDensity, order: &MvOrder, alpha: f64) -> Result<MvSet> {
    check_alpha(alpha)?;
    let cut = order.cut_at(alpha);
    let mut cells: Vec<usize> = order.order()[..=cut].to_vec();
    cells.sort_unstable();
    Ok(MvSet {
        alpha,
        threshold: grid.values()[order.order()[cut]],
        achieved_mass: order.prefix_mass()[cut],
        cells,
    })
}

/// Closed-form minimum-volume set for families that admit one.
#[derive(Debug, Clone)]
pub enum AnalyticMvSet {
    /// `{x : (x - mean)' cov^{-1} (x - mean) <= radius_sq}`.
    Ellipsoid {
        mean: Vec<f64>,
        inv_cov: SymMatrix,
        radius_sq: f64,
    },
    /// A closed interval on the line.
    Interval { lo: f64, hi: f64 },
    /// An axis-aligned box.
    Box { bounds: Vec<(f64, f64)> },
}

impl AnalyticMvSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            AnalyticMvSet::Ellipsoid {
                mean,
                inv_cov,
                radius_sq,
            } => {
                let mut dx = [0.0; 2];
                for (i, (xi, mi)) in x.iter().zip(mean).enumerate() {
                    dx[i] = xi - mi;
                }
                inv_cov.quad_form(&dx[..mean.len()]) <= *radius_sq
            }
            AnalyticMvSet::Interval { lo, hi } => x[0] >= *lo && x[0] <= *hi,
            AnalyticMvSet::Box { bounds } => bounds
                .iter()
                .zip(x)
                .all(|(&(lo, hi), &xi)| xi >= lo && xi <= hi),
        }
    }
}

/// Closed-form level-`alpha` minimum-volume set.
///
/// Gaussians give the ellipsoid at the chi-squared quantile, exponentials
/// the interval from zero to the `alpha` quantile, uniforms a centered box
/// (their minimum-volume sets are non-unique; centering is the canonical
/// pick). Other families have no closed form and must be gridded.
pub fn mv_set_analytic(density: &Density, alpha: f64) -> Result<AnalyticMvSet> {
    check_alpha(alpha)?;
    match density {
        Density::Gaussian(g) => {
            let chi2 = ChiSquared::new(g.dim() as f64).expect("dim is 1 or 2");
            Ok(AnalyticMvSet::Ellipsoid {
                mean: g.mean().to_vec(),
                inv_cov: g.cov().inverse()?,
                radius_sq: chi2.inverse_cdf(alpha),
            })
        }
        Density::Exponential { rate } => Ok(AnalyticMvSet::Interval {
            lo: 0.0,
            hi: -(1.0 - alpha).ln() / rate,
        }),
        Density::Uniform { lower, upper } => {
            // Any sub-box of volume fraction alpha works; take the centered
            // one, shrinking every side by alpha^(1/m).
            let m = lower.len() as f64;
            let shrink = alpha.powf(1.0 / m);
            Ok(AnalyticMvSet::Box {
                bounds: lower
                    .iter()
                    .zip(upper)
                    .map(|(&lo, &hi)| {
                        let mid = 0.5 * (lo + hi);
                        let half = 0.5 * (hi - lo) * shrink;
                        (mid - half, mid + half)
                    })
                    .collect(),
            })
        }
        other => Err(Error::UnsupportedFamily {
            operation: "mv_set_analytic",
            family: other.family_name(),
        }),
    }
}

/// Cells within `mode_tol` (relative) of the grid's maximum value, as
/// ascending indices. `mode_tol` must lie in `(0, 0.05]`.
pub fn mode_set(grid: &GridDensity, mode_tol: f64) -> Result<Vec<usize>> {
    if !(mode_tol > 0.0 && mode_tol <= 0.05) {
        return Err(Error::invalid(
            "mode_tol",
            format!("must lie in (0, 0.05], got {mode_tol}"),
        ));
    }
    let max = grid.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cutoff = (1.0 - mode_tol) * max;
    Ok(grid
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= cutoff)
        .map(|(i, _)| i)
        .collect())
}

/// Number of connected components of a cell set under 4-neighborhood
/// adjacency (2-neighborhood in one dimension).
pub fn component_count(grid: &GridDensity, cells: &[usize]) -> usize {
    let n = grid.num_cells();
    let mut member = vec![false; n];
    for &idx in cells {
        member[idx] = true;
    }
    let (n0, n1) = match grid.dim() {
        1 => (grid.cells()[0], 1),
        _ => (grid.cells()[0], grid.cells()[1]),
    };
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut stack = Vec::new();
    for &start in cells {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let i0 = idx / n1;
            let i1 = idx % n1;
            let mut push = |ni0: usize, ni1: usize| {
                let nidx = ni0 * n1 + ni1;
                if member[nidx] && !seen[nidx] {
                    seen[nidx] = true;
                    stack.push(nidx);
                }
            };
            if i0 > 0 {
                push(i0 - 1, i1);
            }
            if i0 + 1 < n0 {
                push(i0 + 1, i1);
            }
            if i1 > 0 {
                push(i0, i1 - 1);
            }
            if i1 + 1 < n1 {
                push(i0, i1 + 1);
            }
        }
    }
    components
}

/// The two mass-comparison curves behind the weak-conservativeness check.
///
/// For a truth `t` and candidate `c` on one lattice, at each level `alpha`:
/// `cond2 = P_t(M_t) - P_c(M_t)` where `M_t` is the truth's level-`alpha`
/// minimum-volume set, and `cond3 = P_t(M_c) - P_c(M_c)` where `M_c` is the
/// candidate's. A conservative candidate keeps both non-negative: it never
/// claims more mass than the truth holds on either family of sets.
#[derive(Debug, Clone)]
pub struct ConditionCurves {
    alphas: Vec<f64>,
    cond2: Vec<f64>,
    cond3: Vec<f64>,
    /// Cumulative t- and c-mass along t's admit order.
    pt_on_t: Vec<f64>,
    pc_on_t: Vec<f64>,
    /// Cumulative t- and c-mass along c's admit order.
    pt_on_c: Vec<f64>,
    pc_on_c: Vec<f64>,
}

fn cumulate(order: &[usize], values: &[f64], volume: f64) -> Vec<f64> {
    let mut acc = 0.0;
    order
        .iter()
        .map(|&idx| {
            acc += values[idx] * volume;
            acc
        })
        .collect()
}

impl ConditionCurves {
    pub fn new(truth: &GridDensity, candidate: &GridDensity, alphas: &[f64]) -> Result<Self> {
        if !truth.same_lattice(candidate) {
            return Err(Error::lattice(
                "condition curves need truth and candidate on one lattice".to_string(),
            ));
        }
        if alphas.is_empty() {
            return Err(Error::invalid("alphas", "at least one level is required"));
        }
        for &a in alphas {
            check_alpha(a)?;
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "alphas",
                "levels must be strictly increasing",
            ));
        }
        let volume = truth.cell_volume();
        let t_order = canonical_order(truth);
        let c_order = canonical_order(candidate);
        let pt_on_t = cumulate(&t_order, truth.values(), volume);
        let pc_on_t = cumulate(&t_order, candidate.values(), volume);
        let pt_on_c = cumulate(&c_order, truth.values(), volume);
        let pc_on_c = cumulate(&c_order, candidate.values(), volume);
        let mut curves = ConditionCurves {
            alphas: alphas.to_vec(),
            cond2: Vec::with_capacity(alphas.len()),
            cond3: Vec::with_capacity(alphas.len()),
            pt_on_t,
            pc_on_t,
            pt_on_c,
            pc_on_c,
        };
        for &alpha in alphas {
            let (c2, c3) = curves.eval(alpha);
            curves.cond2.push(c2);
            curves.cond3.push(c3);
        }
        Ok(curves)
    }

    /// `(cond2, cond3)` at an arbitrary level, via the cached cumulative
    /// masses.
    pub fn eval(&self, alpha: f64) -> (f64, f64) {
        let last = self.pt_on_t.len() - 1;
        let kt = self.pt_on_t.partition_point(|&m| m < alpha).min(last);
        let kc = self.pc_on_c.partition_point(|&m| m < alpha).min(last);
        (
            self.pt_on_t[kt] - self.pc_on_t[kt],
            self.pt_on_c[kc] - self.pc_on_c[kc],
        )
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// `(alpha, cond2, cond3)` triples in level order.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.alphas
            .iter()
            .zip(&self.cond2)
            .zip(&self.cond3)
            .map(|((&a, &c2), &c3)| (a, c2, c3))
    }

    /// Worst (most negative) curve value over all tested levels.
    pub fn min_value(&self) -> f64 {
        self.cond2
            .iter()
            .chain(&self.cond3)
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest level from which both curves stay above `-curve_tol` for
    /// every tested level onward, refined to [`ALPHA_REFINE_STEP`] between
    /// the bracketing grid levels. `None` when even the top level fails.
    pub fn alpha_star(&self, curve_tol: f64) -> Option<f64> {
        let ok = |c2: f64, c3: f64| c2 >= -curve_tol && c3 >= -curve_tol;
        // Backward scan for the first grid index from which the suffix is
        // clean.
        let mut first_ok = None;
        for i in (0..self.alphas.len()).rev() {
            if ok(self.cond2[i], self.cond3[i]) {
                first_ok = Some(i);
            } else {
                break;
            }
        }
        let i = first_ok?;
        if i == 0 {
            return Some(self.alphas[0]);
        }
        // Refine inside the bracket (alphas[i-1], alphas[i]]: walk fine
        // steps and keep the smallest level whose fine suffix is clean.
        let lo = self.alphas[i - 1];
        let hi = self.alphas[i];
        let steps = ((hi - lo) / ALPHA_REFINE_STEP).round() as usize;
        let mut refined = hi;
        for s in (1..steps).rev() {
            let a = lo + s as f64 * ALPHA_REFINE_STEP;
            if a >= hi {
                continue;
            }
            let (c2, c3) = self.eval(a);
            if ok(c2, c3) {
                refined = a;
            } else {
                break;
            }
        }
        Some(refined)
    }
}

/// The default level grid: `0.01, 0.02, ..., 0.99` plus `0.999`.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut alphas: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    alphas.push(0.999);
    alphas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Density;

    #[test]
    fn default_alpha_grid_shape() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[98], 0.99);
        assert_eq!(g[99], 0.999);
    }

    #[test]
    fn median_level_threshold_of_standard_normal() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let g = d.to_default_grid().unwrap();
        let t = level_threshold(&g, 0.5).unwrap();
        // Boundary sits at |x| = 0.6744..., where the density is 0.317776...
        assert!((t - 0.31777657880721446).abs() < 1e-3, "got {t}");
    }

    #[test]
    fn mv_set_mass_overshoots_by_at_most_one_cell() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let g = d.to_default_grid().unwrap();
        let max_cell_mass = g
            .values()
            .iter()
            .cloned()
            .fold(0.0f64, f64::max)
            * g.cell_volume();
        for alpha in [0.1, 0.5, 0.9, 0.999] {
            let set = mv_set_grid(&g, alpha).unwrap();
            assert!(set.achieved_mass >= alpha);
            assert!(set.achieved_mass <= alpha + max_cell_mass + 1e-12);
        }
    }

    #[test]
    fn mv_sets_nest() {
        let comps = vec![
            crate::density::Gaussian::new(vec![0.0], SymMatrix::scalar(1.0).unwrap()).unwrap(),
            crate::density::Gaussian::new(vec![4.0], SymMatrix::scalar(0.5).unwrap()).unwrap(),
        ];
        let d = Density::mixture(vec![0.5, 0.5], comps).unwrap();
        let g = d.to_default_grid().unwrap();
        let small = mv_set_grid(&g, 0.3).unwrap();
        let large = mv_set_grid(&g, 0.7).unwrap();
        let large_mask = large.mask(g.num_cells());
        assert!(small.cells.iter().all(|&i| large_mask[i]));
    }

    #[test]
    fn analytic_gaussian_set_uses_chi_squared_radius() {
        let d = Density::gaussian2([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        match mv_set_analytic(&d, 0.5).unwrap() {
            AnalyticMvSet::Ellipsoid { radius_sq, .. } => {
                assert!((radius_sq - 1.3862943611198906).abs() < 1e-9);
            }
            other => panic!("expected ellipsoid, got {other:?}"),
        }
    }

    #[test]
    fn analytic_exponential_set_is_lower_interval() {
        let d = Density::exponential(2.0).unwrap();
        match mv_set_analytic(&d, 0.5).unwrap() {
            AnalyticMvSet::Interval { lo, hi } => {
                assert_eq!(lo, 0.0);
                assert!((hi - 0.34657359027997264).abs() < 1e-12);
            }
            other => panic!("expected interval, got {other:?}"),
        }
    }

    #[test]
    fn analytic_uniform_set_is_centered() {
        let d = Density::uniform(vec![0.0], vec![4.0]).unwrap();
        match mv_set_analytic(&d, 0.5).unwrap() {
            AnalyticMvSet::Box { bounds } => {
                assert!((bounds[0].0 - 1.0).abs() < 1e-12);
                assert!((bounds[0].1 - 3.0).abs() < 1e-12);
            }
            other => panic!("expected box, got {other:?}"),
        }
    }

    #[test]
    fn analytic_set_unsupported_for_mixtures() {
        let comps = vec![
            crate::density::Gaussian::new(vec![0.0], SymMatrix::scalar(1.0).unwrap()).unwrap(),
        ];
        let d = Density::mixture(vec![1.0], comps).unwrap();
        assert!(matches!(
            mv_set_analytic(&d, 0.5),
            Err(Error::UnsupportedFamily { .. })
        ));
    }

    #[test]
    fn alpha_validation() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let g = d.to_default_grid().unwrap();
        assert!(matches!(
            mv_set_grid(&g, 0.0),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            mv_set_grid(&g, 1.0),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            level_threshold(&g, -0.2),
            Err(Error::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn mode_set_of_unimodal_density_is_one_component() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let g = d.to_default_grid().unwrap();
        let cells = mode_set(&g, 0.01).unwrap();
        assert!(!cells.is_empty());
        assert_eq!(component_count(&g, &cells), 1);
    }

    #[test]
    fn mode_set_of_symmetric_bimodal_mixture_has_two_components() {
        let comps = vec![
            crate::density::Gaussian::new(vec![-5.0], SymMatrix::scalar(1.0).unwrap()).unwrap(),
            crate::density::Gaussian::new(vec![5.0], SymMatrix::scalar(1.0).unwrap()).unwrap(),
        ];
        let d = Density::mixture(vec![0.5, 0.5], comps).unwrap();
        // Symmetric box so the two peaks sample identically.
        let g = d.to_grid(&[(-10.0, 10.0)], &[4096]).unwrap();
        let cells = mode_set(&g, 0.01).unwrap();
        assert_eq!(component_count(&g, &cells), 2);
    }

    #[test]
    fn mode_tol_range_is_enforced() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let g = d.to_default_grid().unwrap();
        assert!(mode_set(&g, 0.0).is_err());
        assert!(mode_set(&g, 0.06).is_err());
        assert!(mode_set(&g, 0.05).is_ok());
    }

    #[test]
    fn curves_vanish_for_identical_densities() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let g = d.to_default_grid().unwrap();
        let curves = ConditionCurves::new(&g, &g, &default_alpha_grid()).unwrap();
        for (_, c2, c3) in curves.points() {
            assert!(c2.abs() < 1e-12);
            assert!(c3.abs() < 1e-12);
        }
        assert_eq!(curves.alpha_star(1e-9), Some(0.01));
    }

    #[test]
    fn inflated_candidate_passes_from_the_bottom() {
        let truth = Density::gaussian1(0.0, 1.0).unwrap();
        let cand = Density::gaussian1(0.0, 4.0).unwrap();
        let (t, c) = crate::grid::common_pair(&truth, &cand, &[4096]).unwrap();
        let curves = ConditionCurves::new(&t, &c, &default_alpha_grid()).unwrap();
        assert_eq!(curves.alpha_star(1e-3), Some(0.01));
        assert!(curves.min_value() > -1e-3);
    }

    #[test]
    fn deflated_candidate_never_passes() {
        let truth = Density::gaussian1(0.0, 1.0).unwrap();
        let cand = Density::gaussian1(0.0, 0.25).unwrap();
        let (t, c) = crate::grid::common_pair(&truth, &cand, &[4096]).unwrap();
        let curves = ConditionCurves::new(&t, &c, &default_alpha_grid()).unwrap();
        assert_eq!(curves.alpha_star(1e-3), None);
    }

    #[test]
    fn shifted_inflated_candidate_passes_above_a_level() {
        // Candidate N(1, 2.25) against truth N(0, 1): conservative only
        // beyond a mid-range level.
        let truth = Density::gaussian1(0.0, 1.0).unwrap();
        let cand = Density::gaussian1(1.0, 2.25).unwrap();
        let (t, c) = crate::grid::common_pair(&truth, &cand, &[4096]).unwrap();
        let curves = ConditionCurves::new(&t, &c, &default_alpha_grid()).unwrap();
        let astar = curves.alpha_star(2.0 * 2.0 / 4096.0).unwrap();
        assert!(astar > 0.6 && astar < 0.7, "got {astar}");
    }

    #[test]
    fn curves_reject_mismatched_lattices() {
        let d = Density::gaussian1(0.0, 1.0).unwrap();
        let a = d.to_grid(&[(-6.0, 6.0)], &[128]).unwrap();
        let b = d.to_grid(&[(-6.0, 6.0)], &[256]).unwrap();
        assert!(ConditionCurves::new(&a, &b, &[0.5]).is_err());
    }
}
