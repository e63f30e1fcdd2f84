use alphax_core::indicators::IndicatorPanel;
use alphax_core::market_data::{generate_synthetic_universe, MarketData, ReleaseCalendar};
use alphax_core::valuation::{
    best_split, feature_vectors, fit_forest, panel_history, project_panel, training_panel, Dataset,
    ForestConfig, Node, RegressionTree, ValuationConfig, N_FEATURES,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum()
}

/// Every threshold between adjacent distinct values of every feature,
/// scored with a two-pass SSE.
fn exhaustive_split(data: &Dataset, min_leaf: usize) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..data.n_features() {
        let mut xs: Vec<f64> = data.x.iter().map(|r| r[f]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for w in xs.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = (0..data.len()).filter(|&i| data.x[i][f] <= t).map(|i| data.y[i]).collect();
            let right: Vec<f64> = (0..data.len()).filter(|&i| data.x[i][f] > t).map(|i| data.y[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let s = sse(&left) + sse(&right);
            if best.is_none_or(|b| s < b.2) {
                best = Some((f, t, s));
            }
        }
    }
    best
}

fn step_panel() -> Dataset {
    let mut d = Dataset::default();
    for i in 0..100 {
        let x = i as f64 / 10.0;
        d.push(vec![x], if x < 4.0 { 0.9 } else { 1.25 });
    }
    d
}

#[test]
fn step_function_splits_at_the_boundary() {
    let data = step_panel();
    let cfg = ForestConfig { max_depth: 1, min_leaf: 5, ..Default::default() };
    let rows: Vec<usize> = (0..data.len()).collect();
    let tree = RegressionTree::fit(&data, &rows, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
    let Node::Split { feature, threshold, .. } = *tree.root() else { panic!("no split") };
    assert_eq!(feature, 0);
    assert_eq!(threshold, 3.95);
    assert_eq!(tree.predict(&[1.0]), 0.9);
    assert_eq!(tree.predict(&[9.0]), 1.25);
    let (f, t, _) = exhaustive_split(&data, 5).unwrap();
    assert_eq!((f, t), (0, threshold));

    let forest = fit_forest(&data, &ForestConfig::default()).unwrap();
    assert_eq!(forest.predict(&[0.5]), 0.9);
    assert_eq!(forest.predict(&[8.5]), 1.25);
}

#[test]
fn constant_target_predicts_the_constant() {
    let mut d = Dataset::default();
    let c = 1.0 / 3.0 + 0.7;
    for i in 0..40 {
        d.push((0..N_FEATURES).map(|f| ((i * 7 + f * 3) % 11) as f64).collect(), c);
    }
    let forest = fit_forest(&d, &ForestConfig::default()).unwrap();
    for i in 0..40 {
        assert_eq!(forest.predict(&d.x[i]), c);
    }
    assert_eq!(forest.predict(&[100.0; N_FEATURES]), c);
}

#[test]
fn empty_panel_has_no_model() {
    assert!(fit_forest(&Dataset::default(), &ForestConfig::default()).is_none());
}

fn random_panel() -> impl Strategy<Value = Dataset> {
    (1usize..60, 1usize..5).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(-5i32..5, d), n),
            prop::collection::vec(0.5f64..2.0, n),
        )
            .prop_map(|(x, y)| Dataset {
                x: x.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect(),
                y,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn best_split_matches_exhaustive_search(data in random_panel(), min_leaf in 1usize..6) {
        let rows: Vec<usize> = (0..data.len()).collect();
        let features: Vec<usize> = (0..data.n_features()).collect();
        let got = best_split(&data, &rows, &features, min_leaf);
        let want = exhaustive_split(&data, min_leaf);
        prop_assert_eq!(got.is_some(), want.is_some());
        if let (Some(g), Some(w)) = (got, want) {
            prop_assert!((g.sse - w.2).abs() <= 1e-9 * (1.0 + w.2));
            // the chosen split really achieves the optimum
            let left: Vec<f64> = rows.iter().filter(|&&i| data.x[i][g.feature] <= g.threshold).map(|&i| data.y[i]).collect();
            let right: Vec<f64> = rows.iter().filter(|&&i| data.x[i][g.feature] > g.threshold).map(|&i| data.y[i]).collect();
            prop_assert!((sse(&left) + sse(&right) - w.2).abs() <= 1e-9 * (1.0 + w.2));
            prop_assert!(left.len() >= min_leaf && right.len() >= min_leaf);
        }
    }

    #[test]
    fn forest_stays_within_target_range(data in random_panel(), seed in any::<u64>(), probe in prop::collection::vec(-8.0f64..8.0, 4)) {
        let cfg = ForestConfig { n_trees: 15, seed, ..Default::default() };
        let model = fit_forest(&data, &cfg).unwrap();
        let lo = data.y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let x = &probe[..data.n_features()];
        let p = model.predict(x);
        prop_assert!(lo <= p && p <= hi);
        for row in &data.x {
            let p = model.predict(row);
            prop_assert!(lo <= p && p <= hi);
        }
        for tree in model.trees() {
            prop_assert!(tree.depth() <= cfg.max_depth);
            let leaves: Vec<usize> = tree.nodes().iter().filter_map(|n| match n { Node::Leaf { n, .. } => Some(*n), _ => None }).collect();
            if leaves.len() > 1 {
                prop_assert!(leaves.iter().all(|&n| n >= cfg.min_leaf));
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_forests() {
    let ds = generate_synthetic_universe(11, 12, 6).unwrap();
    let data = MarketData::new(ds.bars, ds.statements, ds.risk_free, ds.index_weights, ds.universe);
    let t = ReleaseCalendar.release_date(ds.first_decision.offset(3));
    let history = panel_history(&data.view(t), t);
    let panel = training_panel(&history);
    assert!(panel.len() > 50);
    let cfg = ForestConfig { seed: 42, ..Default::default() };
    let a = fit_forest(&panel, &cfg).unwrap();
    let b = fit_forest(&panel, &cfg).unwrap();
    assert_eq!(a, b);
    let other = fit_forest(&panel, &ForestConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn projections_ignore_future_data() {
    let ds = generate_synthetic_universe(4, 8, 6).unwrap();
    let data = MarketData::new(
        ds.bars.clone(),
        ds.statements.clone(),
        ds.risk_free.clone(),
        ds.index_weights.clone(),
        ds.universe.clone(),
    );
    let cfg = ValuationConfig::default();
    for k in 0..4 {
        let t = ReleaseCalendar.release_date(ds.first_decision.offset(k));
        let project = |data: &MarketData| {
            let view = data.view(t);
            let history = panel_history(&view, t);
            project_panel(&IndicatorPanel::build(&view), &history, &cfg).unwrap()
        };
        let full = project(&data);
        assert!(!full.is_empty());

        // scramble everything after t
        let mut bars = ds.bars.clone();
        for b in bars.values_mut().flatten().filter(|b| b.date > t) {
            b.close = b.low;
            b.high *= 3.0;
        }
        let mut statements = ds.statements.clone();
        for s in statements.iter_mut().filter(|s| s.release_date > t) {
            s.net_income = -s.net_income;
        }
        let mutated = MarketData::new(bars, statements, ds.risk_free.clone(), ds.index_weights.clone(), ds.universe.clone());
        assert_eq!(full, project(&mutated));
        assert_eq!(full, project(&data.truncated(t)));
    }
}

#[test]
fn imputation_uses_cross_sectional_median() {
    let ds = generate_synthetic_universe(9, 6, 3).unwrap();
    let data = MarketData::new(ds.bars, ds.statements, ds.risk_free, ds.index_weights, ds.universe);
    let t = ReleaseCalendar.release_date(ds.first_decision);
    let mut panel = IndicatorPanel::build(&data.view(t));
    let first = panel.rows.keys().next().unwrap().clone();
    panel.rows.get_mut(&first).unwrap().raw.book_yield = None;
    let fv = feature_vectors(&panel);
    let mut others: Vec<f64> = panel.rows.values().filter_map(|r| r.raw.book_yield).collect();
    others.sort_by(f64::total_cmp);
    assert_eq!(others.len(), 5);
    assert_eq!(fv[&first].0[5], others[2]);
}
