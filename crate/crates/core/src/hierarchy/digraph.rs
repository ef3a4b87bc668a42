use crate::graph::LaborFlowNetwork;

use super::ModularityKind;

/// Compact adjacency for modularity work. Self-loops are stored apart from
/// the neighbor lists; strengths include them.
#[derive(Debug, Clone)]
pub(crate) struct Digraph {
    pub out: Vec<Vec<(usize, f64)>>,
    pub inn: Vec<Vec<(usize, f64)>>,
    pub self_loop: Vec<f64>,
    pub out_strength: Vec<f64>,
    pub in_strength: Vec<f64>,
    pub total: f64,
}

impl Digraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut g = Self {
            out: vec![Vec::new(); n],
            inn: vec![Vec::new(); n],
            self_loop: vec![0.0; n],
            out_strength: vec![0.0; n],
            in_strength: vec![0.0; n],
            total: 0.0,
        };
        for (i, j, w) in edges {
            if i == j {
                g.self_loop[i] += w;
            } else {
                g.out[i].push((j, w));
                g.inn[j].push((i, w));
            }
            g.out_strength[i] += w;
            g.in_strength[j] += w;
            g.total += w;
        }
        g
    }

    pub fn from_network(net: &LaborFlowNetwork, kind: ModularityKind) -> Self {
        let n = net.firm_count();
        match kind {
            ModularityKind::Directed => Self::from_edges(n, net.edge_indices()),
            // A + A^T fed to the directed formula reproduces undirected
            // modularity with total weight 2m.
            ModularityKind::Symmetrized => Self::from_edges(
                n,
                net.edge_indices()
                    .flat_map(|(i, j, w)| [(i, j, w), (j, i, w)]),
            ),
        }
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    /// Collapses nodes into `k` communities given by `assign`.
    pub fn aggregate(&self, assign: &[usize], k: usize) -> Self {
        let mut acc: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for i in 0..self.len() {
            let ci = assign[i];
            if self.self_loop[i] != 0.0 {
                *acc[ci].entry(ci).or_insert(0.0) += self.self_loop[i];
            }
            for &(j, w) in &self.out[i] {
                *acc[ci].entry(assign[j]).or_insert(0.0) += w;
            }
        }
        Self::from_edges(
            k,
            acc.into_iter()
                .enumerate()
                .flat_map(|(c, row)| row.into_iter().map(move |(d, w)| (c, d, w))),
        )
    }

    /// Directed modularity of `assign` (labels need not be compact).
    pub fn modularity(&self, assign: &[usize]) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        let m = self.total;
        let k = assign.iter().copied().max().map_or(0, |x| x + 1);
        let mut internal = vec![0.0; k];
        let mut s_out = vec![0.0; k];
        let mut s_in = vec![0.0; k];
        for i in 0..self.len() {
            let c = assign[i];
            internal[c] += self.self_loop[i];
            for &(j, w) in &self.out[i] {
                if assign[j] == c {
                    internal[c] += w;
                }
            }
            s_out[c] += self.out_strength[i];
            s_in[c] += self.in_strength[i];
        }
        (0..k)
            .map(|c| internal[c] / m - s_out[c] * s_in[c] / (m * m))
            .sum()
    }
}
