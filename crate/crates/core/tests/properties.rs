//! Property tests for the invariants the library is built around:
//! minimum-volume-set structure, the definitional equivalences on
//! structured families, and the algebraic identities of the pooling
//! rules.

use proptest::prelude::*;

use mvcons::conservativeness::{
    check_order_entropy, check_strict_grids, check_weak_grids, psd_compare, PsdVerdict,
};
use mvcons::density::{std_normal_quantile, Density, Gaussian, SymMatrix};
use mvcons::fusion::{apply_rule, inputs_from_scenario, FusionRule, FusionScenario};
use mvcons::grid::common_pair;
use mvcons::mvs::{default_alpha_grid, mv_set_grid};

/// The densities the set-structure invariants are exercised on: both
/// tails, bounded support, a lifted tail, multimodality, and two axes.
fn structure_families() -> Vec<Density> {
    vec![
        Density::gaussian1(0.0, 1.0).unwrap(),
        Density::gaussian1(1.0, 2.25).unwrap(),
        Density::exponential(1.3).unwrap(),
        Density::scaled_tail_exponential(0.8, 1.0).unwrap(),
        Density::mixture(
            vec![0.5, 0.5],
            vec![
                Gaussian::new(vec![-1.8], SymMatrix::scalar(1.0).unwrap()).unwrap(),
                Gaussian::new(vec![1.8], SymMatrix::scalar(1.0).unwrap()).unwrap(),
            ],
        )
        .unwrap(),
        Density::gaussian2([0.0, 0.0], [[4.0, 0.0], [0.0, 1.0]]).unwrap(),
    ]
}

fn grid_for(density: &Density) -> mvcons::grid::GridDensity {
    let cells = if density.dim() == 1 {
        vec![4096]
    } else {
        vec![256, 256]
    };
    density
        .to_grid(&density.support_box(1e-6).unwrap(), &cells)
        .unwrap()
}

#[test]
fn mv_sets_nest_across_levels() {
    for density in structure_families() {
        let grid = grid_for(&density);
        let levels: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        let mut previous: Option<Vec<usize>> = None;
        for &alpha in &levels {
            let set = mv_set_grid(&grid, alpha).unwrap();
            if let Some(prev) = &previous {
                // Admission is a fixed total order, so each set must
                // extend the previous one as an exact prefix.
                assert!(set.cells.len() >= prev.len());
                let mut sorted_prev = prev.clone();
                let mut sorted_now = set.cells.clone();
                sorted_prev.sort_unstable();
                sorted_now.sort_unstable();
                assert!(
                    sorted_prev.iter().all(|c| sorted_now.binary_search(c).is_ok()),
                    "level {alpha} does not contain its predecessor"
                );
            }
            previous = Some(set.cells.clone());
        }
    }
}

#[test]
fn mv_set_mass_overshoots_by_at_most_one_cell() {
    for density in structure_families() {
        let grid = grid_for(&density);
        let volume = grid.cell_volume();
        let max_cell_mass = grid
            .values()
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
            * volume;
        let slack = (2.0 / grid.cells()[0] as f64).max(max_cell_mass);
        for &alpha in &default_alpha_grid() {
            let set = mv_set_grid(&grid, alpha).unwrap();
            assert!(
                set.achieved_mass >= alpha - 1e-12,
                "undershoot at {alpha}: {}",
                set.achieved_mass
            );
            assert!(
                set.achieved_mass <= alpha + slack,
                "overshoot at {alpha}: {} > {alpha} + {slack}",
                set.achieved_mass
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// For equal-mean Gaussians the positive-semi-definite covariance
    /// comparison and strict conservativeness are the same predicate
    /// (pairs drawn with a 5% margin to stay clear of the boundary).
    #[test]
    fn equal_mean_gaussian_psd_iff_strict_1d(
        vt in 0.25f64..4.0,
        ratio in prop_oneof![1.05f64..3.0, 0.3f64..0.95],
        mean in -2.0f64..2.0,
    ) {
        let vc = vt * ratio;
        let truth = Density::gaussian1(mean, vt).unwrap();
        let candidate = Density::gaussian1(mean, vc).unwrap();
        let psd = psd_compare(
            &SymMatrix::scalar(vc).unwrap(),
            &SymMatrix::scalar(vt).unwrap(),
        )
        .unwrap() != PsdVerdict::Neither;
        let (t, c) = common_pair(&truth, &candidate, &[4096]).unwrap();
        let strict = check_strict_grids(&c, &t, &default_alpha_grid()).unwrap();
        prop_assert_eq!(psd, strict.ok, "ratio {} gave strict {:?}", ratio, strict);
    }

    #[test]
    fn equal_mean_gaussian_psd_iff_strict_2d(
        vx in 0.5f64..4.0,
        vy in 0.5f64..4.0,
        rx in prop_oneof![1.05f64..2.5, 0.4f64..0.95],
        ry in prop_oneof![1.05f64..2.5, 0.4f64..0.95],
    ) {
        let truth = Density::gaussian2([0.0, 0.0], [[vx, 0.0], [0.0, vy]]).unwrap();
        let candidate =
            Density::gaussian2([0.0, 0.0], [[vx * rx, 0.0], [0.0, vy * ry]]).unwrap();
        let psd = psd_compare(
            &SymMatrix::from_upper(vx * rx, 0.0, vy * ry).unwrap(),
            &SymMatrix::from_upper(vx, 0.0, vy).unwrap(),
        )
        .unwrap() != PsdVerdict::Neither;
        let (t, c) = common_pair(&truth, &candidate, &[192, 192]).unwrap();
        let strict = check_strict_grids(&c, &t, &default_alpha_grid()).unwrap();
        prop_assert_eq!(psd, strict.ok, "ratios ({}, {}) gave {:?}", rx, ry, strict);
    }

    /// Inflating a Gaussian covariance by a scalar factor preserves the
    /// density ordering and raises entropy; deflating lowers entropy, so
    /// the order/entropy verdict tracks the factor's side of one.
    #[test]
    fn scaled_covariance_order_entropy_tracks_the_factor(
        vt in 0.25f64..4.0,
        factor in prop_oneof![1.05f64..3.0, 0.3f64..0.95],
        mean in -2.0f64..2.0,
    ) {
        let truth = Density::gaussian1(mean, vt).unwrap();
        let candidate = Density::gaussian1(mean, vt * factor).unwrap();
        let (t, c) = common_pair(&truth, &candidate, &[4096]).unwrap();
        let report = check_order_entropy(&c, &t).unwrap();
        prop_assert_eq!(report.ok, factor > 1.0, "factor {} gave {:?}", factor, report);
    }

    /// On the exponential family strict conservativeness and the
    /// order/entropy definition always agree.
    #[test]
    fn exponential_strict_iff_order_entropy(
        rate_t in 0.2f64..3.0,
        log_ratio in prop_oneof![0.05f64..1.5, -1.5f64..-0.05],
    ) {
        let rate_c = rate_t * log_ratio.exp();
        let truth = Density::exponential(rate_t).unwrap();
        let candidate = Density::exponential(rate_c).unwrap();
        let (t, c) = common_pair(&truth, &candidate, &[4096]).unwrap();
        let strict = check_strict_grids(&c, &t, &default_alpha_grid()).unwrap();
        let order = check_order_entropy(&c, &t).unwrap();
        prop_assert_eq!(strict.ok, order.ok);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    /// Kullback-Leibler divergence between mixture grids is nonnegative
    /// and vanishes on identical inputs.
    #[test]
    fn kl_divergence_nonnegative(
        m1 in -2.0f64..2.0,
        m2 in -2.0f64..2.0,
        v1 in 0.3f64..3.0,
        v2 in 0.3f64..3.0,
        w in 0.1f64..0.9,
    ) {
        let a = Density::mixture(
            vec![w, 1.0 - w],
            vec![
                Gaussian::new(vec![m1], SymMatrix::scalar(v1).unwrap()).unwrap(),
                Gaussian::new(vec![m2], SymMatrix::scalar(v2).unwrap()).unwrap(),
            ],
        )
        .unwrap();
        let b = Density::mixture(
            vec![1.0 - w, w],
            vec![
                Gaussian::new(vec![m2], SymMatrix::scalar(v2).unwrap()).unwrap(),
                Gaussian::new(vec![m1], SymMatrix::scalar(v1).unwrap()).unwrap(),
            ],
        )
        .unwrap();
        let (ga, gb) = common_pair(&a, &b, &[1024]).unwrap();
        let kl = ga.kl_divergence(&gb).unwrap();
        prop_assert!(kl.nats >= -1e-12, "KL = {}", kl.nats);
        let self_kl = ga.kl_divergence(&ga).unwrap();
        prop_assert!(self_kl.nats.abs() <= 1e-12);
    }

    /// Tabulated densities integrate to one under the midpoint rule.
    #[test]
    fn grids_are_normalized(
        mean in -3.0f64..3.0,
        var in 0.25f64..4.0,
        cells in 64usize..4096,
    ) {
        let density = Density::gaussian1(mean, var).unwrap();
        let grid = density
            .to_grid(&density.support_box(1e-6).unwrap(), &[cells])
            .unwrap();
        let mass: f64 = grid.values().iter().sum::<f64>() * grid.cell_volume();
        prop_assert!((mass - 1.0).abs() <= 1e-9, "mass = {mass}");
    }
}

fn two_input_scenario(m1: f64, m2: f64, v1: f64, v2: f64, w: f64, q: f64) -> FusionScenario {
    FusionScenario::new(
        None,
        vec![
            Density::gaussian1(m1, v1).unwrap(),
            Density::gaussian1(m2, v2).unwrap(),
        ],
        vec![w, 1.0 - w],
        q,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Before renormalization the weighted power mean is nondecreasing
    /// in its exponent at every cell.
    #[test]
    fn power_mean_is_monotone_in_the_exponent(
        m1 in -1.5f64..1.5,
        m2 in -1.5f64..1.5,
        v1 in 0.5f64..2.0,
        v2 in 0.5f64..2.0,
        w in 0.1f64..0.9,
    ) {
        let scenario = two_input_scenario(m1, m2, v1, v2, w, 1.0);
        let inputs = inputs_from_scenario(&scenario, &[1024]).unwrap();
        let qs = [-2.0, 0.0, 0.5, 1.0, 2.0];
        let mut raw: Vec<Vec<f64>> = Vec::new();
        for &q in &qs {
            let (pooled, eta) =
                apply_rule(&inputs, &scenario.weights, FusionRule::PowerMean(q)).unwrap();
            raw.push(pooled.values().iter().map(|v| v * eta).collect());
        }
        for pair in raw.windows(2) {
            for (lo, hi) in pair[0].iter().zip(&pair[1]) {
                prop_assert!(
                    *hi >= lo - 1e-9 * lo.abs().max(1.0),
                    "power mean decreased: {lo} -> {hi}"
                );
            }
        }
    }

    /// A weight vector concentrated on one input returns that input
    /// unchanged, whatever the rule.
    #[test]
    fn degenerate_weights_return_the_selected_input(
        m1 in -1.5f64..1.5,
        m2 in -1.5f64..1.5,
        v1 in 0.5f64..2.0,
        v2 in 0.5f64..2.0,
        pick in 0usize..2,
        q in prop_oneof![Just(-2.0), Just(0.5), Just(2.0)],
    ) {
        let mut weights = vec![0.0, 0.0];
        weights[pick] = 1.0;
        let scenario = FusionScenario::new(
            None,
            vec![
                Density::gaussian1(m1, v1).unwrap(),
                Density::gaussian1(m2, v2).unwrap(),
            ],
            weights.clone(),
            q,
        )
        .unwrap();
        let inputs = inputs_from_scenario(&scenario, &[1024]).unwrap();
        for rule in [FusionRule::Lop, FusionRule::Llop, FusionRule::PowerMean(q)] {
            let (pooled, _) = apply_rule(&inputs, &weights, rule).unwrap();
            for (got, want) in pooled.values().iter().zip(inputs[pick].values()) {
                prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    /// Exponent one short-circuits to the linear pool exactly.
    #[test]
    fn power_mean_at_one_is_the_linear_pool(
        m1 in -1.5f64..1.5,
        m2 in -1.5f64..1.5,
        v1 in 0.5f64..2.0,
        v2 in 0.5f64..2.0,
        w in 0.1f64..0.9,
    ) {
        let scenario = two_input_scenario(m1, m2, v1, v2, w, 1.0);
        let inputs = inputs_from_scenario(&scenario, &[1024]).unwrap();
        let (pm, _) =
            apply_rule(&inputs, &scenario.weights, FusionRule::PowerMean(1.0)).unwrap();
        let (lop, _) = apply_rule(&inputs, &scenario.weights, FusionRule::Lop).unwrap();
        prop_assert_eq!(pm.values(), lop.values());
    }

    /// A vanishing exponent approaches the log-linear pool.
    #[test]
    fn power_mean_near_zero_approaches_the_log_linear_pool(
        m1 in -1.5f64..1.5,
        m2 in -1.5f64..1.5,
        v1 in 0.5f64..2.0,
        v2 in 0.5f64..2.0,
        w in 0.1f64..0.9,
    ) {
        let scenario = two_input_scenario(m1, m2, v1, v2, w, 1e-6);
        let inputs = inputs_from_scenario(&scenario, &[1024]).unwrap();
        let (pm, _) =
            apply_rule(&inputs, &scenario.weights, FusionRule::PowerMean(1e-6)).unwrap();
        let (llop, _) = apply_rule(&inputs, &scenario.weights, FusionRule::Llop).unwrap();
        for (a, b) in pm.values().iter().zip(llop.values()) {
            prop_assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    /// The minimum-volume interval of a Gaussian is the symmetric
    /// quantile interval around its mean.
    #[test]
    fn gaussian_mv_set_matches_the_analytic_interval(
        mean in -2.0f64..2.0,
        var in 0.25f64..4.0,
        alpha in prop_oneof![Just(0.2), Just(0.5), Just(0.8)],
    ) {
        let density = Density::gaussian1(mean, var).unwrap();
        let grid = density
            .to_grid(&density.support_box(1e-6).unwrap(), &[4096])
            .unwrap();
        let set = mv_set_grid(&grid, alpha).unwrap();
        let xs: Vec<f64> = set.cells.iter().map(|&c| grid.coords(c)[0]).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let half = var.sqrt() * std_normal_quantile(0.5 + alpha / 2.0);
        let b = grid.bounds()[0];
        let width = (b.1 - b.0) / 4096.0;
        prop_assert!((lo - (mean - half)).abs() <= 2.0 * width, "lo {lo} vs {}", mean - half);
        prop_assert!((hi - (mean + half)).abs() <= 2.0 * width, "hi {hi} vs {}", mean + half);
    }

    /// Strict conservativeness implies the weak form with the level
    /// threshold sitting at the bottom of the tested range.
    #[test]
    fn strict_implies_weak_from_the_first_level(
        vt in 0.25f64..3.0,
        factor in 1.1f64..3.0,
        mean in -2.0f64..2.0,
    ) {
        let truth = Density::gaussian1(mean, vt).unwrap();
        let candidate = Density::gaussian1(mean, vt * factor).unwrap();
        let alphas = default_alpha_grid();
        let (t, c) = common_pair(&truth, &candidate, &[4096]).unwrap();
        let strict = check_strict_grids(&c, &t, &alphas).unwrap();
        prop_assert!(strict.ok);
        let (weak, _) = check_weak_grids(&c, &t, &alphas, 2.0 * 2.0 / 4096.0).unwrap();
        prop_assert!(weak.ok);
        prop_assert_eq!(weak.alpha_star, Some(alphas[0]));
    }
}
