//! The conservativeness definitions and their checkers.
//!
//! Six notions of "candidate density `p_c` is conservative with respect to
//! truth `p_t`" are implemented, from strongest to weakest in spirit:
//!
//! * covariance dominance (`p.d.` / `p.s.d.`) — Gaussian pairs only;
//! * strict conservativeness — every minimum-volume set of the truth is
//!   contained in the candidate's set at the same level;
//! * weak conservativeness — support containment plus two cross-mass
//!   inequalities holding from some level `alpha'` upward;
//! * order preservation with entropy increase;
//! * entropy increase dominating the KL divergence;
//! * a sufficient-condition certificate (bounded disagreement set).
//!
//! All checkers take the candidate first and the truth second.

use serde::Serialize;

use crate::density::{Density, SymMatrix};
use crate::error::{Error, Result};
use crate::grid::{common_pair, GridDensity, SUPPORT_EPS};
use crate::mvs::{mode_set, ConditionCurves, MvOrder};

/// Eigenvalue tolerance for the positive-(semi)definite comparison.
pub const TOL_PD: f64 = 1e-10;
/// Truth mass allowed to escape containment at one level before the strict
/// check fails (absorbs boundary-cell quantization).
pub const CONTAINMENT_SLACK: f64 = 1e-3;
/// Density gaps below this are ties for the order-preservation check.
pub const ORDER_TOL: f64 = 1e-9;
/// Cells in the deterministic order-preservation subsample.
pub const ORDER_SAMPLES: usize = 2000;
/// Gap below which two cell values count as equal when building the
/// disagreement set A.
pub const GAP_EPS: f64 = 1e-12;
/// Relative tolerance for the mode-containment endpoint of the strict
/// check.
pub const MODE_TOL: f64 = 0.01;

/// Tunable knobs shared by the density-level checkers. `None` fields fall
/// back to dimension-dependent defaults.
#[derive(Debug, Clone)]
pub struct CheckSettings {
    /// Cells per axis; default 4096 in 1-D, 512 in 2-D.
    pub cells_per_axis: Option<usize>,
    /// Probability levels to test; default 0.01..0.99 step 0.01 plus 0.999.
    pub alphas: Vec<f64>,
    /// Quadrature mass slack; default `2 / cells_per_axis`.
    pub mass_slack: Option<f64>,
    /// Condition-curve tolerance; default `2 * mass_slack`.
    pub curve_tol: Option<f64>,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            cells_per_axis: None,
            alphas: crate::mvs::default_alpha_grid(),
            mass_slack: None,
            curve_tol: None,
        }
    }
}

impl CheckSettings {
    /// Per-axis cell counts for a given dimension.
    pub fn cells(&self, dim: usize) -> Vec<usize> {
        match self.cells_per_axis {
            Some(n) => vec![n; dim],
            None => crate::density::default_cells(dim),
        }
    }

    /// Mass slack after applying defaults.
    pub fn resolved_mass_slack(&self, dim: usize) -> f64 {
        self.mass_slack
            .unwrap_or_else(|| 2.0 / self.cells(dim)[0] as f64)
    }

    /// Curve tolerance after applying defaults.
    pub fn resolved_curve_tol(&self, dim: usize) -> f64 {
        self.curve_tol
            .unwrap_or_else(|| 2.0 * self.resolved_mass_slack(dim))
    }
}

/// Outcome of the covariance comparison `cov_c - cov_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdVerdict {
    /// All eigenvalues of the difference exceed `TOL_PD`.
    StrictPd,
    /// All eigenvalues at least `-TOL_PD`.
    Psd,
    Neither,
}

/// Eigenvalue test of `candidate_cov - truth_cov`.
pub fn psd_compare(candidate_cov: &SymMatrix, truth_cov: &SymMatrix) -> Result<PsdVerdict> {
    let diff = candidate_cov.sub(truth_cov)?;
    let eig = diff.eigenvalues();
    if eig.iter().all(|&l| l > TOL_PD) {
        Ok(PsdVerdict::StrictPd)
    } else if eig.iter().all(|&l| l >= -TOL_PD) {
        Ok(PsdVerdict::Psd)
    } else {
        Ok(PsdVerdict::Neither)
    }
}

/// Covariance comparison within a full report; non-Gaussian inputs make it
/// inapplicable rather than being moment-matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceComparison {
    StrictPd,
    Psd,
    Neither,
    NotApplicable,
}

impl CovarianceComparison {
    pub fn is_pd(self) -> bool {
        self == CovarianceComparison::StrictPd
    }

    pub fn is_psd(self) -> bool {
        matches!(
            self,
            CovarianceComparison::StrictPd | CovarianceComparison::Psd
        )
    }
}

/// Support-containment result.
#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    /// True iff the candidate is positive on every cell where the truth is.
    pub ok: bool,
    /// Cells where the truth has mass but the candidate does not.
    pub violating_cells: usize,
}

/// Checks `supp(p_c) ⊇ supp(p_t)` cell-wise at tolerance [`SUPPORT_EPS`].
pub fn check_support_grids(
    candidate: &GridDensity,
    truth: &GridDensity,
) -> Result<SupportReport> {
    require_lattice(candidate, truth, "support check")?;
    let violating_cells = truth
        .values()
        .iter()
        .zip(candidate.values())
        .filter(|(&t, &c)| t > SUPPORT_EPS && c <= SUPPORT_EPS)
        .count();
    Ok(SupportReport {
        ok: violating_cells == 0,
        violating_cells,
    })
}

/// Density-level wrapper of [`check_support_grids`]: grids both inputs on
/// the union of their effective supports.
pub fn check_support(
    candidate: &Density,
    truth: &Density,
    settings: &CheckSettings,
) -> Result<SupportReport> {
    let (t, c) = common_pair(truth, candidate, &settings.cells(truth.dim()))?;
    check_support_grids(&c, &t)
}

/// Strict-conservativeness result.
#[derive(Debug, Clone, Serialize)]
pub struct StrictReport {
    pub ok: bool,
    /// Support containment (the level-one endpoint).
    pub support: SupportReport,
    /// Whether the truth's mode set lies inside the candidate's (the
    /// level-zero endpoint).
    pub modes_contained: bool,
    /// First tested level whose containment failed, if any.
    pub first_failing_alpha: Option<f64>,
    /// Truth mass escaping containment at that level.
    pub violation_mass: Option<f64>,
}

/// Containment of minimum-volume sets at every tested level, on grids.
///
/// The level endpoints are handled per their limits: `alpha -> 0` becomes
/// mode-set containment and `alpha -> 1` becomes support containment. At
/// interior levels the sets are compared as threshold masks, tolerating up
/// to [`CONTAINMENT_SLACK`] of escaping truth mass per level — raised to
/// the heaviest single truth cell when that is larger, since a level-set
/// boundary is only resolved to one cell and a near-coincident level can
/// flip a boundary cell between the two cuts without any violation in the
/// underlying densities.
pub fn check_strict_grids(
    candidate: &GridDensity,
    truth: &GridDensity,
    alphas: &[f64],
) -> Result<StrictReport> {
    require_lattice(candidate, truth, "strict check")?;
    let support = check_support_grids(candidate, truth)?;

    let truth_modes = mode_set(truth, MODE_TOL)?;
    let candidate_modes = mode_set(candidate, MODE_TOL)?;
    let mut in_candidate = vec![false; candidate.num_cells()];
    for &idx in &candidate_modes {
        in_candidate[idx] = true;
    }
    let modes_contained = truth_modes.iter().all(|&idx| in_candidate[idx]);

    let t_order = MvOrder::new(truth);
    let c_order = MvOrder::new(candidate);
    let tv = truth.values();
    let cv = candidate.values();
    let volume = truth.cell_volume();

    let max_cell_mass = tv.iter().copied().fold(0.0f64, f64::max) * volume;
    let slack = CONTAINMENT_SLACK.max(max_cell_mass);

    let mut first_failing_alpha = None;
    let mut violation_mass = None;
    for &alpha in alphas {
        let beta_t = tv[t_order.order()[t_order.cut_at(alpha)]];
        let beta_c = cv[c_order.order()[c_order.cut_at(alpha)]];
        let mut escaped = 0.0;
        for (&t, &c) in tv.iter().zip(cv) {
            if t >= beta_t && c < beta_c {
                escaped += t * volume;
            }
        }
        if escaped > slack {
            first_failing_alpha = Some(alpha);
            violation_mass = Some(escaped);
            break;
        }
    }

    Ok(StrictReport {
        ok: support.ok && modes_contained && first_failing_alpha.is_none(),
        support,
        modes_contained,
        first_failing_alpha,
        violation_mass,
    })
}

/// Density-level wrapper of [`check_strict_grids`].
pub fn check_strict(
    candidate: &Density,
    truth: &Density,
    settings: &CheckSettings,
) -> Result<StrictReport> {
    let (t, c) = common_pair(truth, candidate, &settings.cells(truth.dim()))?;
    check_strict_grids(&c, &t, &settings.alphas)
}

/// Weak-conservativeness result.
#[derive(Debug, Clone, Serialize)]
pub struct WeakReport {
    pub ok: bool,
    pub support: SupportReport,
    /// Smallest tested level from which both condition curves stay above
    /// `-curve_tol`; `None` when even the top level fails.
    pub alpha_star: Option<f64>,
    /// Most negative curve value over all tested levels.
    pub min_curve: f64,
    /// Tolerance the verdict used.
    pub curve_tol: f64,
}

/// Weak conservativeness on grids: support containment plus both condition
/// curves non-negative (within `curve_tol`) from some level upward.
/// Returns the curves for plotting alongside the verdict.
pub fn check_weak_grids(
    candidate: &GridDensity,
    truth: &GridDensity,
    alphas: &[f64],
    curve_tol: f64,
) -> Result<(WeakReport, ConditionCurves)> {
    let support = check_support_grids(candidate, truth)?;
    let curves = ConditionCurves::new(truth, candidate, alphas)?;
    let alpha_star = curves.alpha_star(curve_tol);
    let report = WeakReport {
        ok: support.ok && alpha_star.is_some(),
        support,
        alpha_star,
        min_curve: curves.min_value(),
        curve_tol,
    };
    Ok((report, curves))
}

/// Density-level wrapper of [`check_weak_grids`].
pub fn check_weak(
    candidate: &Density,
    truth: &Density,
    settings: &CheckSettings,
) -> Result<(WeakReport, ConditionCurves)> {
    let dim = truth.dim();
    let (t, c) = common_pair(truth, candidate, &settings.cells(dim))?;
    check_weak_grids(&c, &t, &settings.alphas, settings.resolved_curve_tol(dim))
}

/// Order-preservation-plus-entropy result.
#[derive(Debug, Clone, Serialize)]
pub struct OrderEntropyReport {
    pub ok: bool,
    /// True iff no sampled pair is ranked oppositely by the two densities.
    pub order_preserved: bool,
    pub violating_pairs: usize,
    pub sampled_pairs: usize,
    /// Fraction of sampled pairs that violate.
    pub violation_fraction: f64,
    pub entropy_candidate: f64,
    pub entropy_truth: f64,
}

/// Checks that the candidate ranks points like the truth does (on all
/// pairs from a deterministic stride subsample of about [`ORDER_SAMPLES`]
/// cells) and carries at least as much entropy.
pub fn check_order_entropy(
    candidate: &GridDensity,
    truth: &GridDensity,
) -> Result<OrderEntropyReport> {
    require_lattice(candidate, truth, "order-preservation check")?;
    let n = truth.num_cells();
    let stride = (n / ORDER_SAMPLES).max(1);
    let sampled: Vec<usize> = (0..n).step_by(stride).collect();
    let tv = truth.values();
    let cv = candidate.values();
    let mut violating_pairs = 0usize;
    let mut sampled_pairs = 0usize;
    for (i, &a) in sampled.iter().enumerate() {
        for &b in &sampled[i + 1..] {
            sampled_pairs += 1;
            let dt = tv[a] - tv[b];
            let dc = cv[a] - cv[b];
            if dt.abs() > ORDER_TOL && dc.abs() > ORDER_TOL && dt * dc < 0.0 {
                violating_pairs += 1;
            }
        }
    }
    let entropy_candidate = candidate.entropy();
    let entropy_truth = truth.entropy();
    let order_preserved = violating_pairs == 0;
    Ok(OrderEntropyReport {
        ok: order_preserved && entropy_candidate >= entropy_truth - 1e-12,
        order_preserved,
        violating_pairs,
        sampled_pairs,
        violation_fraction: violating_pairs as f64 / sampled_pairs.max(1) as f64,
        entropy_candidate,
        entropy_truth,
    })
}

/// Entropy-gap-versus-KL result.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyKlReport {
    pub ok: bool,
    /// `H(p_c) - H(p_t)` on the grid.
    pub entropy_gap: f64,
    /// `KL(p_t || p_c)` on the grid; this direction penalizes the
    /// candidate being small where the truth has mass.
    pub kl: f64,
    /// Set when the truth has mass where the candidate vanishes; the
    /// verdict is false in that case.
    pub infinite_kl: bool,
}

/// Checks `H(p_c) - H(p_t) >= KL(p_t || p_c)` on a shared lattice.
pub fn check_entropy_kl(candidate: &GridDensity, truth: &GridDensity) -> Result<EntropyKlReport> {
    let kl = truth.kl_divergence(candidate)?;
    let entropy_gap = candidate.entropy() - truth.entropy();
    Ok(EntropyKlReport {
        ok: !kl.infinite && entropy_gap + 1e-12 >= kl.nats,
        entropy_gap,
        kl: kl.nats,
        infinite_kl: kl.infinite,
    })
}

/// Bounded-disagreement certificate.
#[derive(Debug, Clone, Serialize)]
pub struct SufficientReport {
    /// True iff the certificate applies, i.e. A is bounded (vacuously true
    /// for empty A).
    pub applies: bool,
    /// Whether the set `A = {x : p_c(x) < p_t(x)}` avoids the grid
    /// boundary.
    pub set_a_bounded: bool,
    /// `min p_c` over A; `None` when A is empty.
    pub epsilon: Option<f64>,
    /// Number of cells in A.
    pub a_cells: usize,
}

/// Certifies weak conservativeness by boundedness of the set where the
/// candidate undercuts the truth (gaps above [`GAP_EPS`] only).
pub fn sufficient_condition_test(
    candidate: &GridDensity,
    truth: &GridDensity,
) -> Result<SufficientReport> {
    require_lattice(candidate, truth, "sufficient-condition test")?;
    let mut bounded = true;
    let mut epsilon = f64::INFINITY;
    let mut a_cells = 0usize;
    for (idx, (&t, &c)) in truth.values().iter().zip(candidate.values()).enumerate() {
        if t - c > GAP_EPS {
            a_cells += 1;
            epsilon = epsilon.min(c);
            if truth.is_boundary_cell(idx) {
                bounded = false;
            }
        }
    }
    Ok(SufficientReport {
        applies: bounded,
        set_a_bounded: bounded,
        epsilon: (a_cells > 0).then_some(epsilon),
        a_cells,
    })
}

/// Everything the library can say about one candidate/truth pair.
#[derive(Debug, Clone, Serialize)]
pub struct ConservativenessReport {
    pub covariance: CovarianceComparison,
    pub support: SupportReport,
    pub strict: StrictReport,
    pub weak: WeakReport,
    pub order_entropy: OrderEntropyReport,
    pub entropy_kl: EntropyKlReport,
    pub sufficient: SufficientReport,
    /// The condition curves as parallel arrays (also exportable as CSV).
    pub curve_alphas: Vec<f64>,
    pub curve_cond2: Vec<f64>,
    pub curve_cond3: Vec<f64>,
    /// Lattice the checks ran on.
    pub grid_bounds: Vec<(f64, f64)>,
    pub grid_cells: Vec<usize>,
}

impl ConservativenessReport {
    /// The boolean verdict a given definition name maps to; used by the
    /// command-line front end's `--definition` flag. `pd`/`psd` are false
    /// when inapplicable.
    pub fn verdict(&self, definition: &str) -> Option<bool> {
        match definition {
            "pd" => Some(self.covariance.is_pd()),
            "psd" => Some(self.covariance.is_psd()),
            "strict" => Some(self.strict.ok),
            "weak" => Some(self.weak.ok),
            "geop" => Some(self.order_entropy.ok),
            "gekl" => Some(self.entropy_kl.ok),
            "all" => Some(self.all_applicable_hold()),
            _ => None,
        }
    }

    /// True iff every applicable definition holds (covariance only counts
    /// when the pair was Gaussian/Gaussian).
    pub fn all_applicable_hold(&self) -> bool {
        let cov_ok = match self.covariance {
            CovarianceComparison::NotApplicable => true,
            other => other.is_psd(),
        };
        cov_ok
            && self.strict.ok
            && self.weak.ok
            && self.order_entropy.ok
            && self.entropy_kl.ok
    }
}

/// Runs every applicable checker on a pair of densities gridded to one
/// lattice. The covariance comparison only applies to Gaussian pairs.
pub fn full_report(
    candidate: &Density,
    truth: &Density,
    settings: &CheckSettings,
) -> Result<ConservativenessReport> {
    let dim = truth.dim();
    let covariance = match (candidate, truth) {
        (Density::Gaussian(gc), Density::Gaussian(gt)) => {
            match psd_compare(gc.cov(), gt.cov())? {
                PsdVerdict::StrictPd => CovarianceComparison::StrictPd,
                PsdVerdict::Psd => CovarianceComparison::Psd,
                PsdVerdict::Neither => CovarianceComparison::Neither,
            }
        }
        _ => CovarianceComparison::NotApplicable,
    };
    let (t, c) = common_pair(truth, candidate, &settings.cells(dim))?;
    full_report_grids(
        &c,
        &t,
        covariance,
        &settings.alphas,
        settings.resolved_curve_tol(dim),
    )
}

/// Grid-level report assembly, for callers that already hold both
/// tabulations (fusion verification, resolution studies).
pub fn full_report_grids(
    candidate: &GridDensity,
    truth: &GridDensity,
    covariance: CovarianceComparison,
    alphas: &[f64],
    curve_tol: f64,
) -> Result<ConservativenessReport> {
    let support = check_support_grids(candidate, truth)?;
    let strict = check_strict_grids(candidate, truth, alphas)?;
    let (weak, curves) = check_weak_grids(candidate, truth, alphas, curve_tol)?;
    let order_entropy = check_order_entropy(candidate, truth)?;
    let entropy_kl = check_entropy_kl(candidate, truth)?;
    let sufficient = sufficient_condition_test(candidate, truth)?;
    let mut curve_alphas = Vec::with_capacity(alphas.len());
    let mut curve_cond2 = Vec::with_capacity(alphas.len());
    let mut curve_cond3 = Vec::with_capacity(alphas.len());
    for (a, c2, c3) in curves.points() {
        curve_alphas.push(a);
        curve_cond2.push(c2);
        curve_cond3.push(c3);
    }
    Ok(ConservativenessReport {
        covariance,
        support,
        strict,
        weak,
        order_entropy,
        entropy_kl,
        sufficient,
        curve_alphas,
        curve_cond2,
        curve_cond3,
        grid_bounds: truth.bounds().to_vec(),
        grid_cells: truth.cells().to_vec(),
    })
}

fn require_lattice(a: &GridDensity, b: &GridDensity, what: &str) -> Result<()> {
    if a.same_lattice(b) {
        Ok(())
    } else {
        Err(Error::lattice(format!(
            "{what} requires both densities on one lattice"
        )))
    }
}
