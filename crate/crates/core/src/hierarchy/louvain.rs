//! Two-phase Louvain optimization of directed modularity.
//!
//! The gain of inserting an isolated node `i` into community `C` is
//!
//! ```text
//! dQ(i, C) = [w(i->C) + w(C->i)] / m - [s_out(i) * S_in(C) + s_in(i) * S_out(C)] / m^2
//! ```
//!
//! and a move from `D` to `C` changes Q by `dQ(i, C) - dQ(i, D \ {i})`.
//! Besides neighboring communities every node may also move into an empty
//! community (gain zero), so a finished run is locally optimal against every
//! single-node relocation.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::digraph::Digraph;

/// Moves are accepted only when they raise Q by more than this.
pub const MIN_GAIN: f64 = 1e-12;

/// Independent runs per call. Greedy sweeps can stall in a poor local
/// optimum on small or noisy graphs; the best of several node orders
/// escapes most of them.
pub const RESTARTS: usize = 8;

/// One local-move phase. Returns whether any node changed community.
pub(crate) fn local_moves(g: &Digraph, comm: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
    let n = g.len();
    let m = g.total;
    if n == 0 || m <= 0.0 {
        return false;
    }
    let mut comm_out = vec![0.0; n];
    let mut comm_in = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        comm_out[comm[i]] += g.out_strength[i];
        comm_in[comm[i]] += g.in_strength[i];
        size[comm[i]] += 1;
    }
    let mut empty: std::collections::BTreeSet<usize> = (0..n).filter(|&c| size[c] == 0).collect();

    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut any_move = false;

    loop {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let home = comm[i];
            let (so, si) = (g.out_strength[i], g.in_strength[i]);
            for &(j, w) in g.out[i].iter().chain(g.inn[i].iter()) {
                let c = comm[j];
                if links[c] == 0.0 {
                    touched.push(c);
                }
                links[c] += w;
            }

            comm_out[home] -= so;
            comm_in[home] -= si;
            size[home] -= 1;
            if size[home] == 0 {
                empty.insert(home);
            }

            let gain = |c: usize, link: f64| link - (so * comm_in[c] + si * comm_out[c]) / m;
            let stay = gain(home, links[home]);

            let mut best = home;
            let mut best_gain = f64::NEG_INFINITY;
            touched.sort_unstable();
            for &c in &touched {
                if c == home {
                    continue;
                }
                let gc = gain(c, links[c]);
                if gc > best_gain {
                    best_gain = gc;
                    best = c;
                }
            }
            if size[home] > 0 {
                if let Some(&e) = empty.iter().next() {
                    if 0.0 > best_gain || (0.0 == best_gain && e < best) {
                        best_gain = 0.0;
                        best = e;
                    }
                }
            }

            let target = if best != home && (best_gain - stay) / m > MIN_GAIN {
                best
            } else {
                home
            };
            if target != home {
                moved = true;
            }
            comm[i] = target;
            comm_out[target] += so;
            comm_in[target] += si;
            if size[target] == 0 {
                empty.remove(&target);
            }
            size[target] += 1;

            for &c in &touched {
                links[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any_move = true;
    }
    any_move
}

/// Relabels `assign` to `0..k` by first appearance and returns `k`.
pub(crate) fn compact(assign: &mut [usize]) -> usize {
    let mut map = std::collections::HashMap::new();
    for a in assign.iter_mut() {
        let next = map.len();
        *a = *map.entry(*a).or_insert(next);
    }
    map.len()
}

/// Full multi-level run. The outer loop repeats the base-level sweep after
/// every aggregation pass, and stops only when neither the base graph nor any
/// aggregated graph admits an improving move.
pub(crate) fn louvain(g: &Digraph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.len();
    let mut assign: Vec<usize> = (0..n).collect();
    if n == 0 || g.total <= 0.0 {
        return assign;
    }
    loop {
        let moved_base = local_moves(g, &mut assign, rng);
        let mut k = compact(&mut assign);
        let mut agg = g.aggregate(&assign, k);
        let mut moved_higher = false;
        loop {
            let mut sub: Vec<usize> = (0..k).collect();
            if !local_moves(&agg, &mut sub, rng) {
                break;
            }
            moved_higher = true;
            let k2 = compact(&mut sub);
            for a in assign.iter_mut() {
                *a = sub[*a];
            }
            agg = agg.aggregate(&sub, k2);
            k = k2;
        }
        if !moved_base && !moved_higher {
            break;
        }
    }
    compact(&mut assign);
    assign
}

/// Best of [`RESTARTS`] runs drawn from one random stream. A later run
/// replaces the incumbent only if it beats it by more than [`MIN_GAIN`].
pub(crate) fn best_of_restarts(g: &Digraph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut best = louvain(g, rng);
    let mut best_q = g.modularity(&best);
    for _ in 1..RESTARTS {
        let assign = louvain(g, rng);
        let q = g.modularity(&assign);
        if q > best_q + MIN_GAIN {
            best = assign;
            best_q = q;
        }
    }
    best
}
