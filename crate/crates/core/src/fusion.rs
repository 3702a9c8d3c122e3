//! Correlation-agnostic density fusion and Bayesian updates.
//!
//! Inputs arrive factored as one common density shared by every source and
//! a unique factor per source. The oracle fusion multiplies the common
//! factor in once; the practical rules (linear pool, log-linear pool,
//! generalized power mean) never see the factorization and must stay
//! conservative with respect to that oracle.
//!
//! All pooling happens in log space with max-shift renormalization so that
//! weighted products of small tail values cannot underflow to a zero grid.

use serde::Deserialize;

use crate::conservativeness::{full_report_grids, ConservativenessReport, CovarianceComparison};
use crate::density::{union_boxes, Density, DensityDescriptor};
use crate::error::{Error, Result};
use crate::grid::GridDensity;

/// Mass tolerance used when bounding each input's support box.
const BOX_TAIL_MASS: f64 = 1e-6;
/// Fraction of each axis span added as padding, split over both sides.
const BOX_PAD_FRACTION: f64 = 0.10;
/// Weights must sum to one within this.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A fusion problem: `n >= 2` sources that all observed the common factor
/// and one unique factor each, plus pooling weights and a default power
/// exponent.
#[derive(Debug, Clone)]
pub struct FusionScenario {
    /// Shared factor; `None` means improper flat common information
    /// (constant over the box).
    pub common: Option<Density>,
    /// Unique factor of each source.
    pub uniques: Vec<Density>,
    /// Pooling weights, one per source.
    pub weights: Vec<f64>,
    /// Default exponent for the power-mean rule.
    pub exponent_q: f64,
}

impl FusionScenario {
    pub fn new(
        common: Option<Density>,
        uniques: Vec<Density>,
        weights: Vec<f64>,
        exponent_q: f64,
    ) -> Result<Self> {
        if uniques.len() < 2 {
            return Err(Error::invalid(
                "uniques",
                format!("fusion needs at least two sources, got {}", uniques.len()),
            ));
        }
        if weights.len() != uniques.len() {
            return Err(Error::invalid(
                "weights",
                format!(
                    "expected one weight per source ({}), got {}",
                    uniques.len(),
                    weights.len()
                ),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "weights",
                "weights must be finite and non-negative".to_string(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(
                "weights",
                format!("weights must sum to 1, got {total}"),
            ));
        }
        let dim = uniques[0].dim();
        for (i, u) in uniques.iter().enumerate() {
            if u.dim() != dim {
                return Err(Error::invalid(
                    "uniques",
                    format!("source {i} has dimension {}, expected {dim}", u.dim()),
                ));
            }
        }
        if let Some(c) = &common {
            if c.dim() != dim {
                return Err(Error::invalid(
                    "common",
                    format!("common has dimension {}, sources have {dim}", c.dim()),
                ));
            }
        }
        if exponent_q.is_nan() {
            return Err(Error::invalid("q", "exponent must not be NaN".to_string()));
        }
        Ok(FusionScenario {
            common,
            uniques,
            weights,
            exponent_q,
        })
    }

    pub fn dim(&self) -> usize {
        self.uniques[0].dim()
    }

    /// Lattice bounds: the union of every factor's effective-support box,
    /// padded by [`BOX_PAD_FRACTION`] of each span (half per side) so tail
    /// behaviour stays visible.
    pub fn lattice_bounds(&self) -> Result<Vec<(f64, f64)>> {
        let mut merged = self.uniques[0].support_box(BOX_TAIL_MASS)?;
        for u in &self.uniques[1..] {
            merged = union_boxes(&merged, &u.support_box(BOX_TAIL_MASS)?);
        }
        if let Some(c) = &self.common {
            merged = union_boxes(&merged, &c.support_box(BOX_TAIL_MASS)?);
        }
        Ok(merged
            .into_iter()
            .map(|(lo, hi)| {
                let pad = 0.5 * BOX_PAD_FRACTION * (hi - lo);
                (lo - pad, hi + pad)
            })
            .collect())
    }
}

/// The implemented pooling rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionRule {
    /// Weighted arithmetic mean of the inputs.
    Lop,
    /// Weighted geometric mean, renormalized.
    Llop,
    /// Cell-wise weighted power mean with this exponent; 0 recovers the
    /// log-linear pool, 1 the linear pool, and the infinities the
    /// cell-wise min/max.
    PowerMean(f64),
}

impl FusionRule {
    /// Stable tag for file names and reports.
    pub fn tag(&self) -> String {
        match self {
            FusionRule::Lop => "lop".to_string(),
            FusionRule::Llop => "llop".to_string(),
            FusionRule::PowerMean(q) => format!("power_mean(q={})", format_q(*q)),
        }
    }

    /// Builds a rule from the scenario-file fields.
    pub fn from_fields(rule: &str, q: Option<f64>) -> Result<FusionRule> {
        match rule {
            "lop" => Ok(FusionRule::Lop),
            "llop" => Ok(FusionRule::Llop),
            "power_mean" => match q {
                Some(q) if !q.is_nan() => Ok(FusionRule::PowerMean(q)),
                Some(_) => Err(Error::invalid("q", "exponent must not be NaN".to_string())),
                None => Err(Error::invalid(
                    "q",
                    "rule \"power_mean\" requires an exponent".to_string(),
                )),
            },
            other => Err(Error::invalid(
                "rule",
                format!("unknown rule {other:?}; expected \"lop\", \"llop\", or \"power_mean\""),
            )),
        }
    }
}

fn format_q(q: f64) -> String {
    if q == f64::INFINITY {
        "inf".to_string()
    } else if q == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{q}")
    }
}

/// Output of one fusion run: the pooled density, the oracle it must stay
/// conservative against, and both normalizing constants.
#[derive(Debug, Clone)]
pub struct FusedResult {
    pub fused: GridDensity,
    pub oracle: GridDensity,
    pub rule: FusionRule,
    pub normalizer_fused: f64,
    pub normalizer_oracle: f64,
}

/// Tabulates each source's density `p_i ∝ p_C · p_{i∖C}` on the scenario
/// lattice, each renormalized. The product is evaluated analytically per
/// cell so the inputs are quantized exactly once.
pub fn inputs_from_scenario(s: &FusionScenario, cells: &[usize]) -> Result<Vec<GridDensity>> {
    let bounds = s.lattice_bounds()?;
    s.uniques
        .iter()
        .map(|u| match &s.common {
            Some(c) => GridDensity::from_fn(&bounds, cells, |x| c.eval(x) * u.eval(x)),
            None => u.to_grid(&bounds, cells),
        })
        .collect()
}

/// The oracle: common factor counted once, `p_t ∝ p_C · ∏ p_{i∖C}`,
/// renormalized on the scenario lattice. Its normalizing constant is the
/// grid's recorded renormalization factor.
pub fn true_fusion(s: &FusionScenario, cells: &[usize]) -> Result<GridDensity> {
    let bounds = s.lattice_bounds()?;
    GridDensity::from_fn(&bounds, cells, |x| {
        let mut v = match &s.common {
            Some(c) => c.eval(x),
            None => 1.0,
        };
        for u in &s.uniques {
            v *= u.eval(x);
        }
        v
    })
}

fn check_pool(inputs: &[GridDensity], weights: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid(
            "inputs",
            "need at least one density to pool".to_string(),
        ));
    }
    if weights.len() != inputs.len() {
        return Err(Error::invalid(
            "weights",
            format!("expected {} weights, got {}", inputs.len(), weights.len()),
        ));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid(
            "weights",
            "weights must be finite and non-negative".to_string(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(
            "weights",
            format!("weights must sum to 1, got {total}"),
        ));
    }
    for w in &inputs[1..] {
        if !w.same_lattice(&inputs[0]) {
            return Err(Error::lattice(
                "pooled densities must share one lattice".to_string(),
            ));
        }
    }
    Ok(())
}

/// Linear opinion pool `Σ ω_i p_i`, renormalized to absorb quadrature
/// error. Returns the density and its normalizing constant.
pub fn lop_with_normalizer(
    inputs: &[GridDensity],
    weights: &[f64],
) -> Result<(GridDensity, f64)> {
    check_pool(inputs, weights)?;
    let n = inputs[0].num_cells();
    let mut values = vec![0.0; n];
    for (w, input) in weights.iter().zip(inputs) {
        if *w == 0.0 {
            continue;
        }
        for (v, &p) in values.iter_mut().zip(input.values()) {
            *v += w * p;
        }
    }
    let grid = GridDensity::from_values(inputs[0].bounds(), inputs[0].cells(), values)?;
    let eta = grid.renorm_factor();
    Ok((grid, eta))
}

/// See [`lop_with_normalizer`].
pub fn lop(inputs: &[GridDensity], weights: &[f64]) -> Result<GridDensity> {
    lop_with_normalizer(inputs, weights).map(|(g, _)| g)
}

/// Builds a grid from per-cell log values via a global max shift; the
/// returned normalizer is the integral of the un-shifted values.
fn grid_from_log_values(
    template: &GridDensity,
    log_values: Vec<f64>,
) -> Result<(GridDensity, f64)> {
    let shift = log_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::degenerate(
            "pooled density vanishes on the whole lattice".to_string(),
        ));
    }
    let values: Vec<f64> = log_values.into_iter().map(|l| (l - shift).exp()).collect();
    let grid = GridDensity::from_values(template.bounds(), template.cells(), values)?;
    let eta = shift.exp() * grid.renorm_factor();
    Ok((grid, eta))
}

/// Log-linear opinion pool `∏ p_i^{ω_i}`, renormalized. Cells where any
/// positively-weighted input vanishes are zero.
pub fn llop_with_normalizer(
    inputs: &[GridDensity],
    weights: &[f64],
) -> Result<(GridDensity, f64)> {
    check_pool(inputs, weights)?;
    let n = inputs[0].num_cells();
    let mut log_values = vec![0.0; n];
    for (w, input) in weights.iter().zip(inputs) {
        if *w == 0.0 {
            continue;
        }
        for (l, &p) in log_values.iter_mut().zip(input.values()) {
            *l += w * p.ln();
        }
    }
    grid_from_log_values(&inputs[0], log_values)
}

/// See [`llop_with_normalizer`].
pub fn llop(inputs: &[GridDensity], weights: &[f64]) -> Result<GridDensity> {
    llop_with_normalizer(inputs, weights).map(|(g, _)| g)
}

/// Generalized power-mean pool `(Σ ω_i p_i^q)^{1/q}`, renormalized.
///
/// `q = 0` dispatches to the log-linear pool, `q = 1` to the linear pool,
/// and `q = ±∞` to the exact cell-wise min/max over positively-weighted
/// inputs. Finite exponents run per cell as a max-shifted log-sum-exp, so
/// extreme `|q|` cannot overflow.
pub fn power_mean_with_normalizer(
    inputs: &[GridDensity],
    weights: &[f64],
    q: f64,
) -> Result<(GridDensity, f64)> {
    if q.is_nan() {
        return Err(Error::invalid("q", "exponent must not be NaN".to_string()));
    }
    if q == 0.0 {
        return llop_with_normalizer(inputs, weights);
    }
    if q == 1.0 {
        return lop_with_normalizer(inputs, weights);
    }
    check_pool(inputs, weights)?;
    let active: Vec<usize> = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, _)| i)
        .collect();
    let n = inputs[0].num_cells();

    if q.is_infinite() {
        let extreme = if q > 0.0 { f64::max } else { f64::min };
        let values: Vec<f64> = (0..n)
            .map(|j| {
                active
                    .iter()
                    .map(|&i| inputs[i].values()[j])
                    .reduce(extreme)
                    .unwrap_or(0.0)
            })
            .collect();
        let grid = GridDensity::from_values(inputs[0].bounds(), inputs[0].cells(), values)?;
        let eta = grid.renorm_factor();
        return Ok((grid, eta));
    }

    let log_values: Vec<f64> = (0..n)
        .map(|j| {
            // Per-cell log-sum-exp of q·ln p_i terms; a vanishing input
            // zeroes the cell for q < 0 and merely drops out for q > 0.
            let mut scaled = Vec::with_capacity(active.len());
            for &i in &active {
                let p = inputs[i].values()[j];
                if p <= 0.0 {
                    if q < 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    continue;
                }
                scaled.push((weights[i], q * p.ln()));
            }
            let peak = scaled
                .iter()
                .map(|&(_, ql)| ql)
                .fold(f64::NEG_INFINITY, f64::max);
            if !peak.is_finite() {
                return f64::NEG_INFINITY;
            }
            let sum: f64 = scaled.iter().map(|&(w, ql)| w * (ql - peak).exp()).sum();
            (peak + sum.ln()) / q
        })
        .collect();
    grid_from_log_values(&inputs[0], log_values)
}

/// See [`power_mean_with_normalizer`].
pub fn power_mean_fusion(
    inputs: &[GridDensity],
    weights: &[f64],
    q: f64,
) -> Result<GridDensity> {
    power_mean_with_normalizer(inputs, weights, q).map(|(g, _)| g)
}

/// Applies one rule to pre-tabulated inputs.
pub fn apply_rule(
    inputs: &[GridDensity],
    weights: &[f64],
    rule: FusionRule,
) -> Result<(GridDensity, f64)> {
    match rule {
        FusionRule::Lop => lop_with_normalizer(inputs, weights),
        FusionRule::Llop => llop_with_normalizer(inputs, weights),
        FusionRule::PowerMean(q) => power_mean_with_normalizer(inputs, weights, q),
    }
}

/// End-to-end run of one scenario under one rule.
pub fn run_fusion(s: &FusionScenario, rule: FusionRule, cells: &[usize]) -> Result<FusedResult> {
    let inputs = inputs_from_scenario(s, cells)?;
    let oracle = true_fusion(s, cells)?;
    let (fused, normalizer_fused) = apply_rule(&inputs, &s.weights, rule)?;
    let normalizer_oracle = oracle.renorm_factor();
    Ok(FusedResult {
        fused,
        oracle,
        rule,
        normalizer_fused,
        normalizer_oracle,
    })
}

/// Bayesian posterior update of a gridded prior against a pointwise
/// likelihood (not required to normalize in x). Returns the posterior and
/// the evidence.
pub fn bayes_update<F>(prior: &GridDensity, likelihood: F) -> Result<(GridDensity, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    prior.reweight(likelihood)
}

/// Fuses, builds the oracle, and checks every applicable conservativeness
/// definition of the pooled density against the oracle.
pub fn fusion_conservativeness(
    s: &FusionScenario,
    rule: FusionRule,
    cells: &[usize],
    alphas: &[f64],
    curve_tol: f64,
) -> Result<(FusedResult, ConservativenessReport)> {
    let result = run_fusion(s, rule, cells)?;
    let report = full_report_grids(
        &result.fused,
        &result.oracle,
        CovarianceComparison::NotApplicable,
        alphas,
        curve_tol,
    )?;
    Ok((result, report))
}

/// On-disk form of a fusion scenario.
#[derive(Debug, Clone, Deserialize)]
pub struct FusionScenarioFile {
    /// `null` selects improper flat common information.
    pub common: Option<DensityDescriptor>,
    pub uniques: Vec<DensityDescriptor>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub q: Option<QValue>,
    #[serde(default)]
    pub rule: Option<String>,
}

/// An exponent in a scenario file: a JSON number, or `"inf"`/`"-inf"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum QValue {
    Number(f64),
    Word(String),
}

impl QValue {
    fn as_f64(&self) -> Result<f64> {
        match self {
            QValue::Number(q) if q.is_nan() => {
                Err(Error::invalid("q", "exponent must not be NaN".to_string()))
            }
            QValue::Number(q) => Ok(*q),
            QValue::Word(w) => match w.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(Error::invalid(
                    "q",
                    format!("expected a number, \"inf\", or \"-inf\", got {other:?}"),
                )),
            },
        }
    }
}

impl FusionScenarioFile {
    /// Validates the file into a runnable scenario plus the rule it names.
    /// A missing rule defaults to the linear pool.
    pub fn into_scenario(self) -> Result<(FusionScenario, FusionRule)> {
        let common = self.common.map(Density::try_from).transpose()?;
        let uniques: Vec<Density> = self
            .uniques
            .into_iter()
            .map(Density::try_from)
            .collect::<Result<_>>()?;
        let q = self.q.as_ref().map(QValue::as_f64).transpose()?;
        let rule = FusionRule::from_fields(self.rule.as_deref().unwrap_or("lop"), q)?;
        let scenario = FusionScenario::new(common, uniques, self.weights, q.unwrap_or(1.0))?;
        Ok((scenario, rule))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Density;

    fn grid_pair_1d(a: &Density, b: &Density, cells: usize) -> (GridDensity, GridDensity) {
        let ba = a.support_box(BOX_TAIL_MASS).unwrap();
        let bb = b.support_box(BOX_TAIL_MASS).unwrap();
        let bounds = union_boxes(&ba, &bb);
        (
            a.to_grid(&bounds, &[cells]).unwrap(),
            b.to_grid(&bounds, &[cells]).unwrap(),
        )
    }

    fn sup_diff(a: &GridDensity, b: &GridDensity) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn figure4_scenario() -> FusionScenario {
        let common = Density::mixture(
            vec![0.5, 0.5],
            vec![
                crate::density::Gaussian::new(vec![-1.8], crate::SymMatrix::scalar(1.0).unwrap())
                    .unwrap(),
                crate::density::Gaussian::new(vec![1.8], crate::SymMatrix::scalar(1.0).unwrap())
                    .unwrap(),
            ],
        )
        .unwrap();
        FusionScenario::new(
            Some(common),
            vec![
                Density::gaussian1(-0.6, 1.0).unwrap(),
                Density::gaussian1(-1.4, 1.0).unwrap(),
            ],
            vec![0.5, 0.5],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn scenario_rejects_single_source() {
        let err = FusionScenario::new(
            None,
            vec![Density::gaussian1(0.0, 1.0).unwrap()],
            vec![1.0],
            1.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("uniques"), "{err}");
    }

    #[test]
    fn scenario_rejects_bad_weights() {
        let two = || {
            vec![
                Density::gaussian1(0.0, 1.0).unwrap(),
                Density::gaussian1(1.0, 1.0).unwrap(),
            ]
        };
        assert!(FusionScenario::new(None, two(), vec![0.5, 0.4], 1.0).is_err());
        assert!(FusionScenario::new(None, two(), vec![1.5, -0.5], 1.0).is_err());
        assert!(FusionScenario::new(None, two(), vec![1.0], 1.0).is_err());
    }

    #[test]
    fn scenario_rejects_dimension_mismatch() {
        let err = FusionScenario::new(
            None,
            vec![
                Density::gaussian1(0.0, 1.0).unwrap(),
                Density::gaussian2([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            ],
            vec![0.5, 0.5],
            1.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("dimension"), "{err}");
    }

    #[test]
    fn flat_common_inputs_are_the_uniques_restricted_to_the_box() {
        let s = FusionScenario::new(
            None,
            vec![
                Density::gaussian1(0.0, 1.0).unwrap(),
                Density::gaussian1(0.0, 1.0).unwrap(),
            ],
            vec![0.5, 0.5],
            1.0,
        )
        .unwrap();
        let inputs = inputs_from_scenario(&s, &[4096]).unwrap();
        let bounds = s.lattice_bounds().unwrap();
        let direct = Density::gaussian1(0.0, 1.0)
            .unwrap()
            .to_grid(&bounds, &[4096])
            .unwrap();
        assert!(sup_diff(&inputs[0], &direct) < 1e-12);
        assert!(sup_diff(&inputs[0], &inputs[1]) < 1e-12);
    }

    #[test]
    fn flat_common_oracle_is_the_precision_sum() {
        // Two standard normals multiply to N(0, 1/2): precisions add.
        let s = FusionScenario::new(
            None,
            vec![
                Density::gaussian1(0.0, 1.0).unwrap(),
                Density::gaussian1(0.0, 1.0).unwrap(),
            ],
            vec![0.5, 0.5],
            1.0,
        )
        .unwrap();
        let oracle = true_fusion(&s, &[4096]).unwrap();
        let expected = Density::gaussian1(0.0, 0.5)
            .unwrap()
            .to_grid(oracle.bounds(), &[4096])
            .unwrap();
        assert!(sup_diff(&oracle, &expected) < 1e-9);
    }

    #[test]
    fn bimodal_common_input_peaks_left_of_center() {
        // The first source's density inherits the common factor's left
        // mode, pulled toward its unique factor.
        let s = figure4_scenario();
        let inputs = inputs_from_scenario(&s, &[4096]).unwrap();
        let p1 = &inputs[0];
        let argmax = (0..p1.num_cells())
            .max_by(|&a, &b| p1.values()[a].total_cmp(&p1.values()[b]))
            .unwrap();
        let (x, _) = p1.cell_center(argmax);
        assert!(
            (x - -1.1734872844496893).abs() < 2.0 * p1.cell_volume(),
            "argmax at {x}"
        );
    }

    #[test]
    fn lop_is_idempotent_on_identical_inputs() {
        let d = Density::gaussian1(0.3, 1.7).unwrap();
        let (a, b) = grid_pair_1d(&d, &d, 2048);
        let pooled = lop(&[a.clone(), b], &[0.25, 0.75]).unwrap();
        assert!(sup_diff(&pooled, &a) < 1e-12);
    }

    #[test]
    fn lop_of_mirror_gaussians_is_symmetric_with_zero_mean() {
        let (a, b) = grid_pair_1d(
            &Density::gaussian1(-1.0, 1.0).unwrap(),
            &Density::gaussian1(1.0, 1.0).unwrap(),
            4096,
        );
        let pooled = lop(&[a, b], &[0.5, 0.5]).unwrap();
        let centroid = pooled.centroid();
        assert!(centroid[0].abs() < 1e-9, "mean {}", centroid[0]);
        let v = pooled.values();
        let n = v.len();
        for j in 0..n / 2 {
            assert!((v[j] - v[n - 1 - j]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_weights_return_one_input_for_every_rule() {
        let (a, b) = grid_pair_1d(
            &Density::gaussian1(-1.0, 1.0).unwrap(),
            &Density::gaussian1(1.0, 2.0).unwrap(),
            2048,
        );
        let inputs = [a.clone(), b.clone()];
        for rule in [
            FusionRule::Lop,
            FusionRule::Llop,
            FusionRule::PowerMean(-2.0),
            FusionRule::PowerMean(0.5),
            FusionRule::PowerMean(f64::INFINITY),
            FusionRule::PowerMean(f64::NEG_INFINITY),
        ] {
            let (first, _) = apply_rule(&inputs, &[1.0, 0.0], rule).unwrap();
            let (second, _) = apply_rule(&inputs, &[0.0, 1.0], rule).unwrap();
            assert!(sup_diff(&first, &a) < 1e-12, "{}", rule.tag());
            assert!(sup_diff(&second, &b) < 1e-12, "{}", rule.tag());
        }
    }

    #[test]
    fn llop_is_idempotent_and_matches_information_pooling() {
        let (a, b) = grid_pair_1d(
            &Density::gaussian1(0.0, 1.0).unwrap(),
            &Density::gaussian1(0.0, 1.0).unwrap(),
            4096,
        );
        let pooled = llop(&[a.clone(), b], &[0.5, 0.5]).unwrap();
        assert!(sup_diff(&pooled, &a) < 1e-12);

        // Mirror means, equal halves: the geometric pool of N(-1,1) and
        // N(1,1) is N(0,1) again (information-weighted combination).
        let (a, b) = grid_pair_1d(
            &Density::gaussian1(-1.0, 1.0).unwrap(),
            &Density::gaussian1(1.0, 1.0).unwrap(),
            4096,
        );
        let pooled = llop(&[a.clone(), b], &[0.5, 0.5]).unwrap();
        let expected = Density::gaussian1(0.0, 1.0)
            .unwrap()
            .to_grid(a.bounds(), &[4096])
            .unwrap();
        assert!(sup_diff(&pooled, &expected) < 1e-9);
    }

    #[test]
    fn power_mean_at_one_dispatches_to_lop_exactly() {
        let s = figure4_scenario();
        let inputs = inputs_from_scenario(&s, &[4096]).unwrap();
        let via_pm = power_mean_fusion(&inputs, &s.weights, 1.0).unwrap();
        let via_lop = lop(&inputs, &s.weights).unwrap();
        assert_eq!(via_pm.values(), via_lop.values());
    }

    #[test]
    fn power_mean_near_zero_approaches_llop() {
        let s = figure4_scenario();
        let inputs = inputs_from_scenario(&s, &[4096]).unwrap();
        let via_pm = power_mean_fusion(&inputs, &s.weights, 1e-6).unwrap();
        let via_llop = llop(&inputs, &s.weights).unwrap();
        assert!(sup_diff(&via_pm, &via_llop) < 1e-4);
    }

    #[test]
    fn infinite_exponents_are_cellwise_extremes() {
        let (a, b) = grid_pair_1d(
            &Density::gaussian1(-1.0, 1.0).unwrap(),
            &Density::gaussian1(1.0, 1.0).unwrap(),
            4096,
        );
        let hi = power_mean_fusion(&[a.clone(), b.clone()], &[0.5, 0.5], f64::INFINITY).unwrap();
        let lo =
            power_mean_fusion(&[a.clone(), b.clone()], &[0.5, 0.5], f64::NEG_INFINITY).unwrap();
        let max_direct: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| x.max(y))
            .collect();
        let min_direct: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(&x, &y)| x.min(y))
            .collect();
        let max_grid = GridDensity::from_values(a.bounds(), a.cells(), max_direct).unwrap();
        let min_grid = GridDensity::from_values(a.bounds(), a.cells(), min_direct).unwrap();
        assert!(sup_diff(&hi, &max_grid) < 1e-12);
        assert!(sup_diff(&lo, &min_grid) < 1e-12);
        // The max pool is symmetric and keeps the center shallow: the dip
        // between the two peaks stays above half the peak value, unlike
        // the min pool whose center crater is the global shape.
        let v = hi.values();
        let n = v.len();
        for j in 0..n / 2 {
            assert!((v[j] - v[n - 1 - j]).abs() < 1e-12);
        }
        let mid = hi.eval(&[0.0]);
        let peak = v.iter().copied().fold(0.0, f64::max);
        assert!(mid > 0.5 * peak, "{mid} vs peak {peak}");
        assert!(mid < peak);
    }

    #[test]
    fn vanishing_inputs_zero_the_cell_for_nonpositive_exponents() {
        let uniform = Density::uniform(vec![0.0], vec![1.0]).unwrap();
        let gauss = Density::gaussian1(0.0, 1.0).unwrap();
        let (u, g) = grid_pair_1d(&uniform, &gauss, 2048);
        let probe = [-2.0];
        assert_eq!(u.eval(&probe), 0.0);
        let weights = [0.5, 0.5];
        let inputs = [u, g];
        for q in [f64::NEG_INFINITY, -2.0, 0.0] {
            let pooled = power_mean_fusion(&inputs, &weights, q).unwrap();
            assert_eq!(pooled.eval(&probe), 0.0, "q = {q}");
        }
        for q in [0.5, 1.0, f64::INFINITY] {
            let pooled = power_mean_fusion(&inputs, &weights, q).unwrap();
            assert!(pooled.eval(&probe) > 0.0, "q = {q}");
        }
    }

    #[test]
    fn fused_and_oracle_normalize_with_positive_constants() {
        let s = figure4_scenario();
        for rule in [
            FusionRule::Lop,
            FusionRule::Llop,
            FusionRule::PowerMean(-2.0),
            FusionRule::PowerMean(2.0),
        ] {
            let result = run_fusion(&s, rule, &[4096]).unwrap();
            assert!((result.fused.mass() - 1.0).abs() < 1e-9);
            assert!((result.oracle.mass() - 1.0).abs() < 1e-9);
            assert!(result.normalizer_fused.is_finite() && result.normalizer_fused > 0.0);
            assert!(result.normalizer_oracle.is_finite() && result.normalizer_oracle > 0.0);
        }
    }

    #[test]
    fn bayes_update_with_flat_likelihood_is_identity() {
        let prior = Density::gaussian1(0.0, 1.0)
            .unwrap()
            .to_default_grid()
            .unwrap();
        let (posterior, evidence) = bayes_update(&prior, |_| 1.0).unwrap();
        assert!(sup_diff(&posterior, &prior) < 1e-12);
        assert!((evidence - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bayes_update_matches_conjugate_gaussian_posterior() {
        let prior = Density::gaussian1(0.0, 1.0)
            .unwrap()
            .to_default_grid()
            .unwrap();
        let like = Density::gaussian1(1.0, 1.0).unwrap();
        let (posterior, _) = bayes_update(&prior, |x| like.eval(x)).unwrap();
        let expected = Density::gaussian1(0.5, 0.5)
            .unwrap()
            .to_grid(prior.bounds(), prior.cells())
            .unwrap();
        assert!(sup_diff(&posterior, &expected) < 1e-9);
    }

    #[test]
    fn figure4_pools_are_weakly_conservative_with_bounded_disagreement() {
        let s = figure4_scenario();
        let alphas = crate::mvs::default_alpha_grid();
        for rule in [FusionRule::Lop, FusionRule::Llop, FusionRule::PowerMean(0.5)] {
            let (_, report) =
                fusion_conservativeness(&s, rule, &[4096], &alphas, 2.0 * 2.0 / 4096.0).unwrap();
            assert!(report.weak.ok, "{}: {:?}", rule.tag(), report.weak);
            assert_eq!(report.weak.alpha_star, Some(0.01), "{}", rule.tag());
            assert!(report.sufficient.set_a_bounded, "{}", rule.tag());
            assert_eq!(
                report.covariance,
                CovarianceComparison::NotApplicable
            );
        }
    }

    #[test]
    fn scenario_file_round_trips_and_validates() {
        let text = r#"{
            "common": {"family": "gaussian_mixture", "params": {
                "weights": [0.5, 0.5],
                "components": [
                    {"mean": [-1.8], "covariance": [[1.0]]},
                    {"mean": [1.8], "covariance": [[1.0]]}
                ]}},
            "uniques": [
                {"family": "gaussian", "params": {"mean": [-0.6], "covariance": [[1.0]]}},
                {"family": "gaussian", "params": {"mean": [-1.4], "covariance": [[1.0]]}}
            ],
            "weights": [0.5, 0.5],
            "q": "inf",
            "rule": "power_mean"
        }"#;
        let file: FusionScenarioFile = serde_json::from_str(text).unwrap();
        let (scenario, rule) = file.into_scenario().unwrap();
        assert_eq!(rule, FusionRule::PowerMean(f64::INFINITY));
        assert_eq!(scenario.uniques.len(), 2);
        assert!(scenario.common.is_some());

        let no_q = r#"{
            "common": null,
            "uniques": [
                {"family": "gaussian", "params": {"mean": [0.0], "covariance": [[1.0]]}},
                {"family": "gaussian", "params": {"mean": [1.0], "covariance": [[1.0]]}}
            ],
            "weights": [0.5, 0.5],
            "rule": "power_mean"
        }"#;
        let file: FusionScenarioFile = serde_json::from_str(no_q).unwrap();
        let err = file.into_scenario().unwrap_err();
        assert!(err.to_string().contains('q'), "{err}");

        let bad_rule = r#"{
            "common": null,
            "uniques": [
                {"family": "gaussian", "params": {"mean": [0.0], "covariance": [[1.0]]}},
                {"family": "gaussian", "params": {"mean": [1.0], "covariance": [[1.0]]}}
            ],
            "weights": [0.5, 0.5],
            "rule": "median"
        }"#;
        let file: FusionScenarioFile = serde_json::from_str(bad_rule).unwrap();
        let err = file.into_scenario().unwrap_err();
        assert!(err.to_string().contains("rule"), "{err}");
    }
}
