use std::collections::{BTreeMap, BTreeSet, HashMap};

use laborflow::features::{cluster_feature, entropy, FeatureVector, LabelCounts, LabelTable};
use laborflow::flows::normalize_flux;
use laborflow::graph::{build_network_with_report, extract_core};
use laborflow::hierarchy::CommunityTree;
use laborflow::overrep::{background_prior, compare_corpora, prune_tree, NodeZ, PruneConfig};
use laborflow::synth::{generate, SynthConfig};
use laborflow::trends::{flux_series, ols, CareerData, FluxFilters};
use laborflow::{build_network, LaborFlowNetwork, Month, MonthWindow, TransitionRecord};
use ndarray::Array2;
use proptest::prelude::*;

fn month(y: i32, m: u8) -> Month {
    Month::new(y, m).unwrap()
}

fn records() -> impl Strategy<Value = Vec<TransitionRecord>> {
    prop::collection::vec((0u8..6, 0u8..5, 0u8..5, 0u8..4), 1..60).prop_map(|rows| {
        rows.into_iter()
            .map(|(m, a, b, t)| TransitionRecord {
                member_id: format!("m{m}"),
                from_firm: format!("f{a}"),
                to_firm: format!("f{b}"),
                start_month: month(2010, t + 1),
            })
            .collect()
    })
}

fn wide() -> MonthWindow {
    MonthWindow::years(2000, 2030).unwrap()
}

proptest! {
    #[test]
    fn fractional_weights_sum_to_event_count(recs in records()) {
        let (net, report) = build_network_with_report(&recs, wide());
        let events: BTreeSet<(&str, Month)> = recs
            .iter()
            .filter(|r| r.from_firm != r.to_firm)
            .map(|r| (r.member_id.as_str(), r.start_month))
            .collect();
        prop_assert!((net.total_weight() - events.len() as f64).abs() < 1e-9);
        prop_assert_eq!(report.events, events.len());
    }

    #[test]
    fn record_order_does_not_matter(recs in records(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut laborflow::seed::rng(seed));
        let a = build_network(&recs, wide());
        let b = build_network(&shuffled, wide());
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.write_edge_list(&mut wa).unwrap();
        b.write_edge_list(&mut wb).unwrap();
        prop_assert_eq!(wa, wb);
    }

    #[test]
    fn core_is_idempotent_and_monotone(recs in records(), k in 1usize..4) {
        let net = build_network(&recs, wide());
        if let Ok(core) = extract_core(&net, 0.0, k) {
            let again = extract_core(&core, 0.0, k).unwrap();
            prop_assert_eq!(core.firms(), again.firms());
            if let Ok(deeper) = extract_core(&net, 0.0, k + 1) {
                let outer: BTreeSet<&String> = core.firms().iter().collect();
                prop_assert!(deeper.firms().iter().all(|f| outer.contains(f)));
            }
        }
    }

    #[test]
    fn entropy_is_bounded(counts in prop::collection::btree_map("[a-f]", 1u64..50, 1..6)) {
        let v = FeatureVector::from_counts(&counts);
        let h = entropy(&v).unwrap();
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (v.support() as f64).ln() + 1e-12);
    }

    #[test]
    fn cluster_feature_pools_by_employee_count(
        firms in prop::collection::vec(prop::collection::btree_map("[a-d]", 1u64..20, 1..4), 1..6)
    ) {
        let table = LabelTable::from_counts(
            firms.iter().enumerate().map(|(i, c)| (format!("f{i}"), c.clone())).collect(),
        );
        let names: Vec<String> = (0..firms.len()).map(|i| format!("f{i}")).collect();
        let pooled = cluster_feature(&names, &table);
        let total: u64 = firms.iter().flat_map(|c| c.values()).sum();
        let mut avg: BTreeMap<String, f64> = BTreeMap::new();
        for c in &firms {
            let n: u64 = c.values().sum();
            let v = FeatureVector::from_counts(c);
            for (l, p) in v.probs() {
                *avg.entry(l.clone()).or_default() += p * n as f64 / total as f64;
            }
        }
        for (l, p) in &avg {
            prop_assert!((pooled.get(l) - p).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_is_antisymmetric_and_tracks_proportions(
        a in prop::collection::btree_map("[a-e]", 0u64..40, 2..5),
        b in prop::collection::btree_map("[a-e]", 0u64..40, 2..5),
    ) {
        let mut bg: LabelCounts = a.clone();
        for (l, c) in &b {
            *bg.entry(l.clone()).or_default() += c;
        }
        bg.retain(|_, c| *c > 0);
        prop_assume!(bg.len() >= 2);
        let a: LabelCounts = a.into_iter().filter(|(_, c)| *c > 0).collect();
        let b: LabelCounts = b.into_iter().filter(|(_, c)| *c > 0).collect();
        let prior = background_prior(&bg, 0.01 * bg.values().sum::<u64>() as f64).unwrap();
        let ab = compare_corpora(&a, &b, &prior).unwrap();
        let ba = compare_corpora(&b, &a, &prior).unwrap();
        for s in &ab {
            let t = ba.iter().find(|t| t.label == s.label).unwrap();
            prop_assert!((s.delta + t.delta).abs() < 1e-12);
        }
    }

    #[test]
    fn ols_is_affine_and_shift_equivariant(
        ys in prop::collection::vec(-50.0f64..50.0, 3..10),
        scale in -5.0f64..5.0,
        offset in -100.0f64..100.0,
        shift in -1000.0f64..1000.0,
    ) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
        let base = ols(&pts).unwrap();
        let affine: Vec<(f64, f64)> = pts.iter().map(|&(t, y)| (t, scale * y + offset)).collect();
        let fit = ols(&affine).unwrap();
        prop_assert!((fit.slope - scale * base.slope).abs() < 1e-9);
        prop_assert!((fit.intercept - (scale * base.intercept + offset)).abs() < 1e-9);
        let moved: Vec<(f64, f64)> = pts.iter().map(|&(t, y)| (t + shift, y)).collect();
        prop_assert!((ols(&moved).unwrap().slope - base.slope).abs() < 1e-9);
    }

    #[test]
    fn flux_marginals_are_reconstructed(cells in prop::collection::vec(0.0f64..10.0, 16)) {
        let w = Array2::from_shape_vec((4, 4), cells).unwrap();
        prop_assume!(w.sum() > 0.0);
        let groups: Vec<String> = (0..4).map(|i| format!("g{i}")).collect();
        let m = normalize_flux(groups, w).unwrap();
        for i in 0..4 {
            let row: f64 = (0..4)
                .map(|j| m.t[[i, j]].map_or(0.0, |t| t * m.expected[[i, j]]))
                .sum();
            prop_assert!((row - m.s_out[i]).abs() < 1e-9);
        }
    }
}

fn random_tree(seed: u64) -> (CommunityTree, Vec<NodeZ>) {
    use rand::Rng;
    let mut rng = laborflow::seed::rng(seed);
    let firms: Vec<String> = (0..40).map(|i| format!("f{i:02}")).collect();
    let mut tree = CommunityTree::new(firms);
    let mut frontier = vec![0usize];
    while let Some(node) = frontier.pop() {
        let members = tree.node(node).firms.clone();
        if members.len() < 4 || rng.random_bool(0.3) {
            continue;
        }
        let k = rng.random_range(2..=3.min(members.len()));
        let groups: Vec<Vec<String>> = (0..k)
            .map(|g| members.iter().skip(g).step_by(k).cloned().collect())
            .collect();
        frontier.extend(tree.add_children(node, groups).unwrap());
    }
    let z = (0..tree.len())
        .map(|i| {
            if i == 0 {
                NodeZ::UNSCORED
            } else {
                NodeZ { industry: rng.random_range(-3.0..20.0), region: rng.random_range(-3.0..20.0) }
            }
        })
        .collect();
    (tree, z)
}

#[test]
fn pruned_sets_are_disjoint_and_monotone_in_keep_threshold() {
    for seed in 0..100 {
        let (tree, z) = random_tree(seed);
        let strict = prune_tree(&tree, &z, &PruneConfig::new(5.0, 10.0));
        let loose = prune_tree(&tree, &z, &PruneConfig::new(1.0, 10.0));
        for (i, &a) in strict.iter().enumerate() {
            for &b in &strict[i + 1..] {
                assert!(!tree.is_ancestor(a, b) && !tree.is_ancestor(b, a));
            }
        }
        // Lowering the keep threshold never loses a saved cluster.
        let loose: BTreeSet<usize> = loose.into_iter().collect();
        assert!(strict.iter().all(|n| loose.contains(n)), "seed {seed}");
    }
}

#[test]
fn cross_unit_moves_balance_per_year() {
    let d = generate(&SynthConfig::benchmark(5)).unwrap();
    let grouping = d.planted_grouping(2);
    let data = CareerData { transitions: &d.transitions, spells: &d.spells, profiles: &d.profiles };
    let filters = FluxFilters {
        first_jobs_as_influx: false,
        last_jobs_as_outflux: false,
        ..FluxFilters::default()
    };
    let panel = flux_series(&data, &grouping, 2008..=2015, &filters);
    for y in 0..8 {
        let inflow: f64 = panel.series.values().map(|s| s.influx[y]).sum();
        let outflow: f64 = panel.series.values().map(|s| s.outflux[y]).sum();
        assert!((inflow - outflow).abs() < 1e-9);
    }
}

#[test]
fn realized_cross_block_share_matches_rates() {
    let cfg = SynthConfig::benchmark(11);
    let d = generate(&cfg).unwrap();
    let top = d.planted_grouping(1);
    let index: HashMap<&str, usize> = d.roster.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
    let mut expected = 0.0;
    let mut cross = 0usize;
    for t in &d.transitions {
        expected += cfg.destination_probabilities(index[t.from_firm.as_str()]).unwrap()[0];
        if top[&t.from_firm] != top[&t.to_firm] {
            cross += 1;
        }
    }
    let n = d.transitions.len() as f64;
    let p = expected / n;
    let sigma = (n * p * (1.0 - p)).sqrt();
    assert!((cross as f64 - n * p).abs() < 3.0 * sigma, "cross {cross}, expected {}", n * p);
}

#[test]
fn disconnected_blocks_leave_the_largest_as_core() {
    let cfg = SynthConfig {
        branching: vec![3],
        block_sizes: vec![8, 14, 10],
        rates: vec![0.0, 1.0],
        members_per_firm: 10,
        industry_level: 1,
        region_level: 1,
        ..SynthConfig::benchmark(2)
    };
    let d = generate(&cfg).unwrap();
    let net = build_network(&d.transitions, wide());
    let core = extract_core(&net, 0.0, 2).unwrap();
    let blocks: BTreeSet<String> = core.firms().iter().map(|f| d.planted_grouping(1)[f].clone()).collect();
    assert_eq!(blocks, BTreeSet::from(["1".to_string()]));
    assert_eq!(core.firm_count(), 14);
}

#[test]
fn synth_output_is_byte_identical_for_a_seed() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { members_per_firm: 3, ..SynthConfig::benchmark(9) };
    let files = generate(&cfg).unwrap().write_all(dir_a.path()).unwrap();
    generate(&cfg).unwrap().write_all(dir_b.path()).unwrap();
    for f in files {
        let a = std::fs::read(dir_a.path().join(f)).unwrap();
        let b = std::fs::read(dir_b.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn edge_list_round_trips() {
    let net = LaborFlowNetwork::from_edges(["a", "b", "c"], [("a", "b", 0.5), ("c", "a", 2.0)]).unwrap();
    let mut buf = Vec::new();
    net.write_edge_list(&mut buf).unwrap();
    let back = LaborFlowNetwork::read_edge_list(buf.as_slice()).unwrap();
    assert_eq!(back.weight("a", "b"), 0.5);
    assert_eq!(back.weight("c", "a"), 2.0);
}
