//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! measured values and runtime; the process exits non-zero if any fails.
//!
//! Runtime limits are checked against release builds only, since debug
//! builds of the numeric code run an order of magnitude slower.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use laborflow::features::{diagnose, DiagnosticsOptions, LabelTable};
use laborflow::flows::normalize_flux;
use laborflow::hierarchy::HierarchyOptions;
use laborflow::metrics::nmi;
use laborflow::overrep::{compare_corpora, prune_tree, Combine, NodeZ, PruneConfig, PruneMode};
use laborflow::seed::rng;
use laborflow::synth::{generate, SynthConfig, SynthData};
use laborflow::trends::{
    aggregate_marketcap, flux_series, ols, trend_regression, CareerData, FluxFilters, TrendRegression, TrendWindows,
};
use laborflow::{build_network, detect_hierarchy, louvain, CommunityTree, LaborFlowNetwork, MonthWindow};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

/// Outcome of one criterion.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

const RELEASE: bool = !cfg!(debug_assertions);

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let mut v = f();
    let took = start.elapsed();
    v.detail = format!("{} [{:.2}s]", v.detail, took.as_secs_f64());
    if let Some(limit) = limit {
        if RELEASE && took > limit {
            v.pass = false;
            v.detail += &format!(" exceeds {}s limit", limit.as_secs());
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Oracles

/// Directed modularity straight from the definition.
fn oracle_q(n: usize, edges: &[(usize, usize, f64)], comm: &[usize]) -> f64 {
    let m: f64 = edges.iter().map(|e| e.2).sum();
    if m == 0.0 {
        return 0.0;
    }
    let mut s_out = vec![0.0; n];
    let mut s_in = vec![0.0; n];
    for &(i, j, w) in edges {
        s_out[i] += w;
        s_in[j] += w;
    }
    let mut q = 0.0;
    for &(i, j, w) in edges {
        if comm[i] == comm[j] {
            q += w;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if comm[i] == comm[j] {
                q -= s_out[i] * s_in[j] / m;
            }
        }
    }
    q / m
}

/// Best modularity over every set partition, via restricted growth strings.
fn exhaustive_q(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    fn rec(pos: usize, n: usize, max: usize, cur: &mut Vec<usize>, edges: &[(usize, usize, f64)], best: &mut f64) {
        if pos == n {
            *best = best.max(oracle_q(n, edges, cur));
            return;
        }
        for c in 0..=max + 1 {
            cur[pos] = c;
            rec(pos + 1, n, max.max(c), cur, edges, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut cur = vec![0; n];
    rec(1, n, 0, &mut cur, edges, &mut best);
    best
}

fn firm(i: usize) -> String {
    format!("n{i:03}")
}

fn network(n: usize, edges: &[(usize, usize, f64)]) -> LaborFlowNetwork {
    LaborFlowNetwork::from_edges(
        (0..n).map(firm),
        edges.iter().map(|&(i, j, w)| (firm(i), firm(j), w)),
    )
    .unwrap()
}

/// Assignment of a louvain partition as a vector indexed like `firm(i)`.
fn louvain_assignment(n: usize, edges: &[(usize, usize, f64)], seed: u64) -> (Vec<usize>, f64) {
    let p = louvain(&network(n, edges), seed);
    ((0..n).map(|i| p.assignment[&firm(i)]).collect(), p.modularity)
}

/// Two directed cliques joined by a single reciprocated bridge.
fn clique_bridge(a: usize, b: usize, w: f64) -> (usize, Vec<(usize, usize, f64)>) {
    let mut edges = Vec::new();
    for (lo, hi) in [(0, a), (a, a + b)] {
        for i in lo..hi {
            for j in lo..hi {
                if i != j {
                    edges.push((i, j, w));
                }
            }
        }
    }
    edges.push((a - 1, a, 1.0));
    edges.push((a, a - 1, 1.0));
    (a + b, edges)
}

fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(density) {
                edges.push((i, j, rng.random_range(0.5..5.0)));
            }
        }
    }
    edges
}

/// Random graph with `k` planted groups: dense inside, sparse across.
fn planted_graph(rng: &mut impl Rng, n: usize, k: usize, p_in: f64, p_out: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = if i % k == j % k { p_in } else { p_out };
            if i != j && rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.5..3.0)));
            }
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Criteria

fn modularity_oracle() -> Verdict {
    let mut cases: Vec<(String, usize, Vec<(usize, usize, f64)>, bool)> = Vec::new();
    for (a, b, w) in [(3, 3, 1.0), (4, 4, 1.0), (3, 4, 2.0), (4, 3, 1.5), (3, 5, 1.0)] {
        let (n, e) = clique_bridge(a, b, w);
        cases.push((format!("clique-bridge {a}+{b}"), n, e, true));
    }
    let mut r = rng(101);
    while cases.len() < 20 {
        let n = r.random_range(4..=8);
        let e = if cases.len() % 2 == 0 {
            random_graph(&mut r, n, 0.35)
        } else {
            planted_graph(&mut r, n, 2, 0.8, 0.15)
        };
        if e.is_empty() {
            continue;
        }
        cases.push((format!("random n={n}"), n, e, false));
    }
    let mut worst_ratio = f64::INFINITY;
    let mut failures = Vec::new();
    for (idx, (name, n, edges, exact)) in cases.iter().enumerate() {
        let q_star = exhaustive_q(*n, edges);
        let (assign, q) = louvain_assignment(*n, edges, idx as u64);
        let q_check = oracle_q(*n, edges, &assign);
        if (q - q_check).abs() > 1e-9 {
            failures.push(format!("{name}: reported Q {q} but oracle gives {q_check}"));
        }
        if q_star > 0.0 {
            worst_ratio = worst_ratio.min(q_check / q_star);
        }
        let ok = if *exact {
            (q_check - q_star).abs() <= 1e-12
        } else {
            q_check >= 0.95 * q_star - 1e-12
        };
        if !ok {
            failures.push(format!("{name}: Q {q_check:.6} vs Q* {q_star:.6}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "20 graphs, worst Q/Q* = {worst_ratio:.4}, clique-bridge exact{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {failures:?}")
            }
        ),
    )
}

/// Largest gain from moving any single node to any other community,
/// including a new singleton, computed from community aggregates.
fn best_single_move(n: usize, edges: &[(usize, usize, f64)], comm: &[usize]) -> f64 {
    let m: f64 = edges.iter().map(|e| e.2).sum();
    let k = comm.iter().max().map_or(0, |&c| c + 1) + 1;
    let mut k_out = vec![0.0; n];
    let mut k_in = vec![0.0; n];
    let mut self_w = vec![0.0; n];
    let mut out_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut in_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut internal = vec![0.0; k];
    let mut c_out = vec![0.0; k];
    let mut c_in = vec![0.0; k];
    for &(i, j, w) in edges {
        k_out[i] += w;
        k_in[j] += w;
        c_out[comm[i]] += w;
        c_in[comm[j]] += w;
        if i == j {
            self_w[i] += w;
        } else {
            out_adj[i].push((j, w));
            in_adj[j].push((i, w));
        }
        if comm[i] == comm[j] {
            internal[comm[i]] += w;
        }
    }
    let term = |w_cc: f64, so: f64, si: f64| (w_cc - so * si / m) / m;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let mut to = vec![0.0; k];
        let mut from = vec![0.0; k];
        for &(j, w) in &out_adj[i] {
            to[comm[j]] += w;
        }
        for &(j, w) in &in_adj[i] {
            from[comm[j]] += w;
        }
        let a = comm[i];
        let old_a = term(internal[a], c_out[a], c_in[a]);
        let new_a = term(
            internal[a] - to[a] - from[a] - self_w[i],
            c_out[a] - k_out[i],
            c_in[a] - k_in[i],
        );
        for b in 0..k {
            if b == a {
                continue;
            }
            let old_b = term(internal[b], c_out[b], c_in[b]);
            let new_b = term(
                internal[b] + to[b] + from[b] + self_w[i],
                c_out[b] + k_out[i],
                c_in[b] + k_in[i],
            );
            best = best.max(new_a + new_b - old_a - old_b);
        }
    }
    best
}

fn local_optimality() -> Verdict {
    let mut r = rng(202);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for g in 0..50u64 {
        let n = r.random_range(20..=200);
        let edges = if g % 2 == 0 {
            let k = r.random_range(2..=8);
            planted_graph(&mut r, n, k, (10.0 * k as f64 / n as f64).min(0.9), 2.0 / n as f64)
        } else {
            random_graph(&mut r, n, (6.0 / n as f64).min(1.0))
        };
        if edges.is_empty() {
            continue;
        }
        let (assign, _) = louvain_assignment(n, &edges, g);
        let gain = best_single_move(n, &edges, &assign);
        worst = worst.max(gain);
        if gain > 1e-12 {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!("50 graphs, largest single-move gain {worst:.3e} (limit 1e-12), {failures} failing"),
    )
}

fn benchmark_network(d: &SynthData) -> LaborFlowNetwork {
    build_network(&d.transitions, MonthWindow::years(2000, 2030).unwrap())
}

/// NMI between the tree's level-`k` partition and the planted blocks at
/// depth `k`, over the firms in the tree.
fn level_nmi(tree: &CommunityTree, d: &SynthData, k: usize) -> f64 {
    let labels = tree.level_labels(k).unwrap();
    let planted = d.planted_grouping(k);
    let (found, truth): (Vec<usize>, Vec<&str>) = labels
        .iter()
        .map(|(f, &node)| (node, planted[*f].as_str()))
        .unzip();
    nmi(&found, &truth)
}

fn planted_recovery() -> Verdict {
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for seed in 0..10u64 {
        let d = generate(&SynthConfig::benchmark(seed)).unwrap();
        let tree = detect_hierarchy(
            &benchmark_network(&d),
            &HierarchyOptions {
                seed,
                ..Default::default()
            },
        );
        l1.push(level_nmi(&tree, &d, 1));
        l2.push(if tree.depth() >= 2 { level_nmi(&tree, &d, 2) } else { 0.0 });
    }
    let min1 = l1.iter().copied().fold(f64::INFINITY, f64::min);
    let min2 = l2.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        min1 >= 0.9 && min2 >= 0.8,
        format!("10 seeds, min level-1 NMI {min1:.4} (>= 0.9), min level-2 NMI {min2:.4} (>= 0.8)"),
    )
}

struct EntropyRun {
    dbar: Vec<f64>,
    /// Per non-root level: (delta, sd) for industry then region.
    deltas: Vec<[(f64, f64); 2]>,
}

fn entropy_run(seed: u64, alignment: f64) -> EntropyRun {
    let mut cfg = SynthConfig::benchmark(seed);
    cfg.industry_alignment = alignment;
    cfg.region_alignment = alignment;
    let d = generate(&cfg).unwrap();
    let tree = detect_hierarchy(
        &benchmark_network(&d),
        &HierarchyOptions {
            seed,
            ..Default::default()
        },
    );
    let firm_labels = |f: fn(&laborflow::synth::PlantedFirm) -> &String| -> BTreeMap<String, String> {
        d.planted.iter().map(|p| (p.firm.clone(), f(p).clone())).collect()
    };
    let ind = LabelTable::from_firm_labels(&firm_labels(|p| &p.industry), &d.spells);
    let reg = LabelTable::from_firm_labels(&firm_labels(|p| &p.region), &d.spells);
    let (diag, null) = diagnose(
        &tree,
        &ind,
        &reg,
        &DiagnosticsOptions {
            seed,
            n_rep: 100,
            ..Default::default()
        },
    )
    .unwrap();
    EntropyRun {
        dbar: diag.iter().map(|l| l.mean_reduction_industry).collect(),
        deltas: null
            .iter()
            .skip(1)
            .map(|l| {
                [
                    (l.delta_industry, l.null_sd_industry),
                    (l.delta_region, l.null_sd_region),
                ]
            })
            .collect(),
    }
}

fn entropy_reduction() -> Verdict {
    let seeds = 0..4u64;
    let mut notes = Vec::new();
    let mut pass = true;
    let mut min_aligned_sd = f64::INFINITY;
    let mut max_random_sd: f64 = 0.0;
    for seed in seeds {
        let aligned = entropy_run(seed, 0.9);
        let increasing = aligned.dbar.windows(2).all(|w| w[1] > w[0]);
        if !increasing {
            pass = false;
            notes.push(format!("seed {seed}: d-bar not strictly increasing {:?}", aligned.dbar));
        }
        for (k, pair) in aligned.deltas.iter().enumerate() {
            for &(delta, sd) in pair {
                let ratio = delta / sd;
                min_aligned_sd = min_aligned_sd.min(ratio);
                if !(delta > 0.0 && delta.abs() > 3.0 * sd) {
                    pass = false;
                    notes.push(format!("seed {seed} level {}: aligned delta {delta:.4}, sd {sd:.4}", k + 1));
                }
            }
        }
        let random = entropy_run(seed, 0.0);
        for (k, pair) in random.deltas.iter().enumerate() {
            for &(delta, sd) in pair {
                max_random_sd = max_random_sd.max(delta.abs() / sd);
                if delta.abs() >= 3.0 * sd {
                    pass = false;
                    notes.push(format!("seed {seed} level {}: random delta {delta:.4}, sd {sd:.4}", k + 1));
                }
            }
        }
    }
    verdict(
        pass,
        format!(
            "4 seeds, aligned d-bar strictly increasing, min aligned delta {min_aligned_sd:.1} SD (> 3), \
             max random |delta| {max_random_sd:.2} SD (< 3){}",
            if notes.is_empty() {
                String::new()
            } else {
                format!("; {notes:?}")
            }
        ),
    )
}

fn flux_exactness() -> Verdict {
    let mut r = rng(505);
    let mut worst_t: f64 = 0.0;
    let mut worst_marginal: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(2..=12);
        let groups: Vec<String> = (0..k).map(|i| format!("g{i}")).collect();
        // Rank one, with some empty rows and columns.
        let u: Vec<f64> = (0..k)
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.1..50.0) })
            .collect();
        let v: Vec<f64> = (0..k)
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.1..50.0) })
            .collect();
        if u.iter().all(|&x| x == 0.0) || v.iter().all(|&x| x == 0.0) {
            continue;
        }
        let w = Array2::from_shape_fn((k, k), |(i, j)| u[i] * v[j]);
        let m = normalize_flux(groups.clone(), w).unwrap();
        for t in m.t.iter().flatten() {
            worst_t = worst_t.max((t - 1.0).abs());
        }
        // Sparse general matrices for the marginal identity.
        let w = Array2::from_shape_fn((k, k), |_| {
            if r.random_bool(0.4) {
                r.random_range(0.0..100.0)
            } else {
                0.0
            }
        });
        if w.sum() == 0.0 {
            continue;
        }
        let m = normalize_flux(groups, w.clone()).unwrap();
        for i in 0..k {
            let rebuilt: f64 = (0..k)
                .filter_map(|j| m.t[[i, j]].map(|t| t * m.expected[[i, j]]))
                .sum();
            let s_out: f64 = w.row(i).sum();
            worst_marginal = worst_marginal.max((rebuilt - s_out).abs());
        }
    }
    verdict(
        worst_t <= 1e-9 && worst_marginal <= 1e-9,
        format!("100 cases, max |T-1| {worst_t:.2e}, max marginal error {worst_marginal:.2e} (limit 1e-9)"),
    )
}

fn ols_exactness() -> Verdict {
    let mut r = rng(606);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(3..=15);
        let t0 = r.random_range(1990.0..2020.0f64).floor();
        let ts: Vec<f64> = (0..n).map(|i| t0 + i as f64).collect();
        let (a, b) = (r.random_range(-5.0..5.0), r.random_range(-2.0..2.0));
        let exact: Vec<(f64, f64)> = ts.iter().map(|&t| (t, a + b * (t - t0))).collect();
        let fit = ols(&exact).unwrap();
        worst = worst.max((fit.slope - b).abs());

        let noisy: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| (t, a + b * (t - t0) + r.random_range(-1.0..1.0)))
            .collect();
        let base = ols(&noisy).unwrap();
        let (c, s) = (r.random_range(-10.0..10.0), r.random_range(-4.0..4.0));
        let affine: Vec<(f64, f64)> = noisy.iter().map(|&(t, y)| (t, c + s * y)).collect();
        let fa = ols(&affine).unwrap();
        worst = worst.max((fa.slope - s * base.slope).abs());
        worst = worst.max((fa.slope_se - s.abs() * base.slope_se).abs());
        let shift = r.random_range(-50.0..50.0f64).round();
        let shifted: Vec<(f64, f64)> = noisy.iter().map(|&(t, y)| (t + shift, y)).collect();
        let fs = ols(&shifted).unwrap();
        worst = worst.max((fs.slope - base.slope).abs());
        worst = worst.max((fs.slope_se - base.slope_se).abs());
    }
    verdict(
        worst <= 1e-9,
        format!("100 cases, max deviation {worst:.2e} (limit 1e-9)"),
    )
}

fn coupled_regression(d: &SynthData, grouping: &BTreeMap<String, String>) -> TrendRegression {
    let data = CareerData {
        transitions: &d.transitions,
        spells: &d.spells,
        profiles: &d.profiles,
    };
    let windows = TrendWindows::default();
    let flux = flux_series(&data, grouping, 2008..=2015, &FluxFilters::default());
    let mc = aggregate_marketcap(&d.marketcap, grouping, None);
    let units: Vec<String> = grouping
        .values()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    trend_regression(&units, &mc, &flux, &windows).unwrap()
}

fn second_stage() -> Verdict {
    const TRUE_SLOPE: f64 = 0.5;
    let mut slopes = Vec::new();
    let mut var_sum = 0.0;
    let mut covered = 0;
    let mut wins = 0;
    for seed in 0..20u64 {
        let d = generate(&SynthConfig::coupled(seed)).unwrap();
        let planted = d.planted_grouping(1);
        let fit = coupled_regression(&d, &planted);
        let mut units: Vec<String> = planted.values().cloned().collect();
        units.shuffle(&mut rng(seed + 1000));
        let shuffled: BTreeMap<String, String> = planted.keys().cloned().zip(units).collect();
        let null = coupled_regression(&d, &shuffled);
        if (fit.fit.slope - TRUE_SLOPE).abs() <= 2.0 * fit.fit.slope_se {
            covered += 1;
        }
        if fit.correlation.unwrap_or(f64::NEG_INFINITY) > null.correlation.unwrap_or(f64::NEG_INFINITY) {
            wins += 1;
        }
        slopes.push(fit.fit.slope);
        var_sum += fit.fit.slope_se.powi(2);
    }
    let mean = slopes.iter().sum::<f64>() / 20.0;
    let pooled_se = var_sum.sqrt() / 20.0;
    let recovered = (mean - TRUE_SLOPE).abs() <= 2.0 * pooled_se;
    verdict(
        recovered && wins >= 18,
        format!(
            "20 seeds, mean slope {mean:.4} vs 0.5 (pooled 2 SE = {:.4}), \
             per-seed 2-SE coverage {covered}/20, cluster beats shuffled correlation {wins}/20 (>= 18)",
            2.0 * pooled_se
        ),
    )
}

fn random_counts(r: &mut impl Rng, labels: usize) -> BTreeMap<String, u64> {
    (0..labels)
        .filter_map(|l| {
            let c = if r.random_bool(0.2) { 0 } else { r.random_range(0..200u64) };
            (c > 0).then(|| (format!("l{l}"), c))
        })
        .collect()
}

fn overrep_algebra() -> Verdict {
    let mut r = rng(808);
    let mut worst: f64 = 0.0;
    let mut sign_failures = 0;
    let mut scored = 0;
    for _ in 0..1000 {
        let labels = r.random_range(2..=10);
        let a = random_counts(&mut r, labels);
        let b = random_counts(&mut r, labels);
        let (na, nb) = (a.values().sum::<u64>() as f64, b.values().sum::<u64>() as f64);
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let mut bg = a.clone();
        for (l, c) in &b {
            *bg.entry(l.clone()).or_default() += c;
        }
        if bg.len() < 2 {
            continue;
        }
        let n_bg = na + nb;
        let alpha0 = 0.01 * n_bg;
        let prior: BTreeMap<String, f64> = bg.iter().map(|(l, &c)| (l.clone(), alpha0 * c as f64 / n_bg)).collect();
        let ab = compare_corpora(&a, &b, &prior).unwrap();
        let ba: HashMap<String, f64> = compare_corpora(&b, &a, &prior)
            .unwrap()
            .into_iter()
            .map(|s| (s.label, s.delta))
            .collect();
        for s in &ab {
            scored += 1;
            worst = worst.max((s.delta + ba[&s.label]).abs());
            // Direction of the prior-smoothed proportion difference.
            let alpha = prior[&s.label];
            let pa = (a.get(&s.label).copied().unwrap_or(0) as f64 + alpha) / (na + alpha0);
            let pb = (b.get(&s.label).copied().unwrap_or(0) as f64 + alpha) / (nb + alpha0);
            let diff = pa - pb;
            let sign_ok = if diff.abs() < 1e-12 {
                s.z.abs() < 1e-6
            } else {
                s.z.signum() == diff.signum()
            };
            if !sign_ok {
                sign_failures += 1;
            }
        }
    }
    verdict(
        worst <= 1e-12 && sign_failures == 0,
        format!(
            "1000 configurations, {scored} label scores, max |d(a,b)+d(b,a)| {worst:.2e} (limit 1e-12), \
             {sign_failures} sign mismatches"
        ),
    )
}

/// Builds a tree from `(node id, child count)` splits, applied in order.
/// Firms are dealt round-robin to the children.
fn hand_tree(splits: &[(&str, usize)]) -> CommunityTree {
    let mut tree = CommunityTree::new((0..64).map(|i| format!("f{i:02}")));
    for &(id, k) in splits {
        let node = tree.find(id).unwrap_or_else(|| panic!("no node {id}"));
        let firms = tree.node(node).firms.clone();
        let groups: Vec<Vec<String>> = (0..k).map(|g| firms.iter().skip(g).step_by(k).cloned().collect()).collect();
        tree.add_children(node, groups).unwrap();
    }
    tree
}

fn hand_z(tree: &CommunityTree, z: &[(&str, f64, f64)]) -> Vec<NodeZ> {
    let mut out = vec![NodeZ::UNSCORED; tree.len()];
    for n in 1..tree.len() {
        out[n] = NodeZ {
            industry: 0.0,
            region: 0.0,
        };
    }
    for &(id, industry, region) in z {
        out[tree.find(id).unwrap()] = NodeZ { industry, region };
    }
    out
}

struct PruneCase {
    name: &'static str,
    splits: &'static [(&'static str, usize)],
    z: &'static [(&'static str, f64, f64)],
    cfg: PruneConfig,
    expected: &'static [&'static str],
}

const SWAPPED_LITERAL: PruneConfig = PruneConfig {
    theta_keep: 100.0,
    theta_break: 1.96,
    mode: PruneMode::Literal,
    combine: Combine::Both,
};

fn prune_cases() -> Vec<PruneCase> {
    const NESTED: &[(&str, usize)] = &[("0", 2), ("0.0", 2), ("0.0.0", 2), ("0.1", 2)];
    const NESTED_Z: &[(&str, f64, f64)] = &[
        ("0.0", 12.0, 15.0),
        ("0.0.0", 11.0, 11.0),
        ("0.0.0.0", 3.0, 3.0),
        ("0.0.0.1", 1.0, 1.0),
        ("0.0.1", 5.0, 5.0),
        ("0.1", 12.0, 9.0),
        ("0.1.0", 3.0, 3.0),
        ("0.1.1", 3.0, 3.0),
    ];
    const SPLIT: &[(&str, usize)] = &[("0", 2), ("0.0", 2)];
    const SPLIT_Z: &[(&str, f64, f64)] = &[("0.0", 150.0, 50.0), ("0.0.0", 3.0, 3.0), ("0.0.1", 3.0, 3.0), ("0.1", 1.0, 3.0)];
    vec![
        PruneCase {
            name: "flat, keep threshold only",
            splits: &[("0", 3)],
            z: &[("0.0", 5.0, 5.0), ("0.1", 1.0, 5.0), ("0.2", 2.0, 2.0)],
            cfg: PruneConfig::FINANCIAL,
            expected: &["0.0", "0.2"],
        },
        PruneCase {
            name: "break recursion, leaves never recursed",
            splits: &[("0", 2), ("0.0", 2)],
            z: &[("0.0", 150.0, 150.0), ("0.0.0", 3.0, 3.0), ("0.0.1", 0.0, 0.0), ("0.1", 120.0, 120.0)],
            cfg: PruneConfig::FINANCIAL,
            expected: &["0.1", "0.0.0"],
        },
        PruneCase {
            name: "both labels required to break",
            splits: SPLIT,
            z: SPLIT_Z,
            cfg: PruneConfig::FINANCIAL,
            expected: &["0.0"],
        },
        PruneCase {
            name: "either label may break",
            splits: SPLIT,
            z: SPLIT_Z,
            cfg: PruneConfig {
                combine: Combine::Either,
                ..PruneConfig::FINANCIAL
            },
            expected: &["0.1", "0.0.0", "0.0.1"],
        },
        PruneCase {
            name: "nested, visualization preset",
            splits: NESTED,
            z: NESTED_Z,
            cfg: PruneConfig::VISUALIZATION,
            expected: &["0.1", "0.0.1", "0.0.0.0"],
        },
        PruneCase {
            name: "nested, financial preset",
            splits: NESTED,
            z: NESTED_Z,
            cfg: PruneConfig::FINANCIAL,
            expected: &["0.0", "0.1"],
        },
        PruneCase {
            name: "thresholds are strict",
            splits: &[("0", 2), ("0.1", 2)],
            z: &[("0.0", 1.96, 5.0), ("0.1", 100.0, 100.0), ("0.1.0", 2.0, 2.0), ("0.1.1", 1.97, 1.97)],
            cfg: PruneConfig::FINANCIAL,
            expected: &["0.1"],
        },
        PruneCase {
            name: "deep chain",
            splits: &[("0", 2), ("0.0", 2), ("0.0.0", 2)],
            z: &[
                ("0.0", 200.0, 200.0),
                ("0.0.0", 200.0, 200.0),
                ("0.0.0.0", 200.0, 200.0),
                ("0.0.0.1", 50.0, 50.0),
                ("0.0.1", 0.0, 0.0),
                ("0.1", -5.0, 10.0),
            ],
            cfg: PruneConfig::FINANCIAL,
            expected: &["0.0.0.0", "0.0.0.1"],
        },
        PruneCase {
            name: "nothing significant",
            splits: &[("0", 3), ("0.1", 2)],
            z: &[("0.0", 1.0, 1.0), ("0.1", 1.0, 1.0), ("0.2", 1.0, 1.0), ("0.1.0", 1.0, 1.0), ("0.1.1", 1.0, 1.0)],
            cfg: PruneConfig::FINANCIAL,
            expected: &[],
        },
        PruneCase {
            name: "literal walk with swapped thresholds",
            splits: &[("0", 2), ("0.0", 2)],
            z: &[("0.0", 150.0, 150.0), ("0.0.0", 3.0, 3.0), ("0.0.1", 1.0, 1.0), ("0.1", 50.0, 50.0)],
            cfg: SWAPPED_LITERAL,
            expected: &["0.1", "0.0.0"],
        },
        PruneCase {
            name: "literal walk with financial thresholds saves nothing",
            splits: &[("0", 2), ("0.0", 2)],
            z: &[("0.0", 150.0, 150.0), ("0.0.0", 3.0, 3.0), ("0.0.1", 0.0, 0.0), ("0.1", 120.0, 120.0)],
            cfg: PruneConfig {
                mode: PruneMode::Literal,
                ..PruneConfig::FINANCIAL
            },
            expected: &[],
        },
    ]
}

fn random_tree(seed: u64) -> (CommunityTree, Vec<NodeZ>) {
    let mut r = rng(seed);
    let mut tree = CommunityTree::new((0..40).map(|i| format!("f{i:02}")));
    let mut frontier = vec![0usize];
    while let Some(node) = frontier.pop() {
        let members = tree.node(node).firms.clone();
        if members.len() < 4 || r.random_bool(0.3) {
            continue;
        }
        let k = r.random_range(2..=3);
        let groups: Vec<Vec<String>> = (0..k).map(|g| members.iter().skip(g).step_by(k).cloned().collect()).collect();
        frontier.extend(tree.add_children(node, groups).unwrap());
    }
    let z = (0..tree.len())
        .map(|i| {
            if i == 0 {
                NodeZ::UNSCORED
            } else {
                NodeZ {
                    industry: r.random_range(-3.0..150.0),
                    region: r.random_range(-3.0..150.0),
                }
            }
        })
        .collect();
    (tree, z)
}

fn prune_correctness() -> Verdict {
    let mut failures = Vec::new();
    let cases = prune_cases();
    for c in &cases {
        let tree = hand_tree(c.splits);
        let saved = prune_tree(&tree, &hand_z(&tree, c.z), &c.cfg);
        let ids: Vec<&str> = saved.iter().map(|&i| tree.node(i).id.as_str()).collect();
        if ids != c.expected {
            failures.push(format!("{}: got {ids:?}, expected {:?}", c.name, c.expected));
        }
    }
    let mut random_failures = 0;
    for seed in 0..100 {
        let (tree, z) = random_tree(seed);
        let thresholds = [1.0, 1.96, 5.0, 20.0];
        let mut previous: Option<BTreeSet<usize>> = None;
        for &keep in thresholds.iter().rev() {
            let saved = prune_tree(&tree, &z, &PruneConfig::new(keep, 100.0));
            let disjoint = saved.iter().enumerate().all(|(i, &a)| {
                saved[i + 1..]
                    .iter()
                    .all(|&b| a != b && !tree.is_ancestor(a, b) && !tree.is_ancestor(b, a))
            });
            let set: BTreeSet<usize> = saved.into_iter().collect();
            // Lowering the keep threshold only adds clusters.
            let monotone = previous.as_ref().is_none_or(|p| p.is_subset(&set));
            if !(disjoint && monotone) {
                random_failures += 1;
            }
            previous = Some(set);
        }
    }
    verdict(
        failures.is_empty() && random_failures == 0,
        format!(
            "{} handcrafted cases, {} mismatches; 100 random trees, {random_failures} disjointness/monotonicity violations{}",
            cases.len(),
            failures.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {failures:?}")
            }
        ),
    )
}

fn digest_dir(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = std::fs::read(e.path()).unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                hex::encode(Sha256::digest(&bytes)),
            )
        })
        .collect()
}

fn pipeline_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_laborflow"))
            .args(["all", "--set", "seed=42", "--out"])
            .arg(&out)
            .env_remove("LABORFLOW_CONFIG")
            .status()
            .unwrap();
        if !status.success() {
            return verdict(false, format!("run {run} exited with {status}"));
        }
        digests.push(digest_dir(&out));
    }
    let differing: Vec<&String> = digests[0]
        .iter()
        .filter(|(f, h)| digests[1].get(*f) != Some(h))
        .map(|(f, _)| f)
        .collect();
    verdict(
        differing.is_empty() && digests[0].len() == digests[1].len(),
        format!(
            "{} artifacts per run, {} differing {:?}",
            digests[0].len(),
            differing.len(),
            differing
        ),
    )
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: Vec<(&str, Option<Duration>, fn() -> Verdict)> = vec![
        ("modularity oracle", secs(10), modularity_oracle),
        ("local optimality", secs(30), local_optimality),
        ("planted hierarchy recovery", secs(60), planted_recovery),
        ("entropy reduction", None, entropy_reduction),
        ("flux normalization", None, flux_exactness),
        ("OLS exactness", None, ols_exactness),
        ("second-stage recovery", None, second_stage),
        ("over-representation algebra", None, overrep_algebra),
        ("prune correctness", None, prune_correctness),
        ("pipeline determinism", None, pipeline_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let v = timed(limit, f);
        println!(
            "criterion {:>2} {}: {} {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            v.detail
        );
        if !v.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
