//! The directed, weighted firm-to-firm labor flow network.
//!
//! Edge weights count job transitions. When a member starts several jobs in
//! the same month the unit weight of that event is split evenly across its
//! distinct transition edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::month::{Month, MonthWindow};
use crate::records::{EmploymentSpell, IngestError, TransitionRecord};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("empty core: the {0} stage removed every firm")]
    EmptyCore(CoreStage),
    #[error("edge {from} -> {to} has invalid weight {weight}")]
    InvalidWeight { from: String, to: String, weight: f64 },
    #[error("edge endpoint `{0}` is not a firm of the network")]
    UnknownFirm(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// The three filters applied by [`extract_core`], in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoreStage {
    WeightFilter,
    KCore,
    LargestComponent,
}

impl CoreStage {
    pub fn number(self) -> u8 {
        match self {
            CoreStage::WeightFilter => 1,
            CoreStage::KCore => 2,
            CoreStage::LargestComponent => 3,
        }
    }
}

impl fmt::Display for CoreStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CoreStage::WeightFilter => "edge-weight filter",
            CoreStage::KCore => "k-core",
            CoreStage::LargestComponent => "largest-component",
        };
        write!(f, "{name} (stage {})", self.number())
    }
}

/// Directed graph of firms. Firms are kept sorted so that indices, edge
/// order and every derived output are independent of input order.
#[derive(Debug, Clone, PartialEq)]
pub struct LaborFlowNetwork {
    firms: Vec<String>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), f64>,
    window: Option<MonthWindow>,
}

impl LaborFlowNetwork {
    /// Builds a network from an explicit firm list and weighted edges.
    /// Parallel edges are summed; self-loops are discarded.
    pub fn from_edges<F, E, S>(firms: F, edges: E) -> Result<Self, GraphError>
    where
        F: IntoIterator<Item = S>,
        S: Into<String>,
        E: IntoIterator<Item = (S, S, f64)>,
    {
        let mut firm_set: BTreeSet<String> = firms.into_iter().map(Into::into).collect();
        let edges: Vec<(String, String, f64)> = edges
            .into_iter()
            .map(|(a, b, w)| (a.into(), b.into(), w))
            .collect();
        for (from, to, weight) in &edges {
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(GraphError::InvalidWeight {
                    from: from.clone(),
                    to: to.clone(),
                    weight: *weight,
                });
            }
            for f in [from, to] {
                if !firm_set.contains(f) {
                    return Err(GraphError::UnknownFirm(f.clone()));
                }
            }
        }
        let firms: Vec<String> = std::mem::take(&mut firm_set).into_iter().collect();
        let index: HashMap<String, usize> =
            firms.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        let mut map = BTreeMap::new();
        for (from, to, weight) in edges {
            if from == to {
                continue;
            }
            *map.entry((index[&from], index[&to])).or_insert(0.0) += weight;
        }
        Ok(Self {
            firms,
            index,
            edges: map,
            window: None,
        })
    }

    fn from_indexed(
        firms: Vec<String>,
        edges: BTreeMap<(usize, usize), f64>,
        window: Option<MonthWindow>,
    ) -> Self {
        let index = firms.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        Self {
            firms,
            index,
            edges,
            window,
        }
    }

    pub fn with_window(mut self, window: MonthWindow) -> Self {
        self.window = Some(window);
        self
    }

    pub fn window(&self) -> Option<MonthWindow> {
        self.window
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn firm_count(&self) -> usize {
        self.firms.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.firms.is_empty()
    }

    pub fn index_of(&self, firm: &str) -> Option<usize> {
        self.index.get(firm).copied()
    }

    pub fn contains_firm(&self, firm: &str) -> bool {
        self.index.contains_key(firm)
    }

    /// Edges as `(from_index, to_index, weight)` in index order.
    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.edges
            .iter()
            .map(|(&(i, j), &w)| (self.firms[i].as_str(), self.firms[j].as_str(), w))
    }

    pub fn weight(&self, from: &str, to: &str) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.edges.get(&(i, j)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Subgraph on `firms` keeping only edges with both endpoints inside.
    /// Unknown firm names are ignored.
    pub fn induced_subgraph<S: AsRef<str>>(&self, firms: &[S]) -> Self {
        let keep: BTreeSet<usize> = firms
            .iter()
            .filter_map(|f| self.index_of(f.as_ref()))
            .collect();
        self.restrict(&keep)
    }

    fn restrict(&self, keep: &BTreeSet<usize>) -> Self {
        let remap: HashMap<usize, usize> =
            keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let firms = keep.iter().map(|&i| self.firms[i].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|(&(i, j), &w)| Some(((*remap.get(&i)?, *remap.get(&j)?), w)))
            .collect();
        Self::from_indexed(firms, edges, self.window)
    }

    /// Writes `from,to,weight` rows with weights at 9 decimal places.
    pub fn write_edge_list<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["from", "to", "weight"])?;
        for (from, to, weight) in self.edges() {
            w.write_record([from, to, &format!("{weight:.9}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an edge list written by [`write_edge_list`](Self::write_edge_list).
    /// The firm set is the set of edge endpoints.
    pub fn read_edge_list<R: Read>(input: R) -> Result<Self, GraphError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(IngestError::from)?
            .iter()
            .map(str::to_string)
            .collect();
        if header != ["from", "to", "weight"] {
            return Err(IngestError::Schema {
                file: "edge list",
                expected: vec!["from", "to", "weight"],
                found: header,
            }
            .into());
        }
        let mut edges = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(IngestError::from)?;
            let weight: f64 = row[2].trim().parse().map_err(|_| GraphError::InvalidWeight {
                from: row[0].to_string(),
                to: row[1].to_string(),
                weight: f64::NAN,
            })?;
            edges.push((row[0].to_string(), row[1].to_string(), weight));
        }
        let firms: BTreeSet<String> = edges
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        Self::from_edges(firms, edges)
    }
}

/// A transition after fractional splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMove {
    pub member_id: String,
    pub from_firm: String,
    pub to_firm: String,
    pub start_month: Month,
    pub weight: f64,
}

/// Groups transitions by `(member, start_month)` and gives each of the `k`
/// distinct edges in a group weight `1/k`. Self-loops are dropped before
/// counting `k`, so a group consisting only of self-loops carries no weight.
pub fn split_transitions<'a, I>(records: I) -> Vec<WeightedMove>
where
    I: IntoIterator<Item = &'a TransitionRecord>,
{
    let mut groups: BTreeMap<(&str, Month), BTreeSet<(&str, &str)>> = BTreeMap::new();
    for r in records {
        if r.from_firm == r.to_firm {
            continue;
        }
        groups
            .entry((r.member_id.as_str(), r.start_month))
            .or_default()
            .insert((r.from_firm.as_str(), r.to_firm.as_str()));
    }
    let mut out = Vec::new();
    for ((member, month), edges) in groups {
        let weight = 1.0 / edges.len() as f64;
        for (from, to) in edges {
            out.push(WeightedMove {
                member_id: member.to_string(),
                from_firm: from.to_string(),
                to_firm: to.to_string(),
                start_month: month,
                weight,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    /// Member-month transition events inside the window.
    pub events: usize,
    pub outside_window: usize,
    pub self_loops: usize,
}

/// Builds the network from transitions whose new job starts inside `window`.
pub fn build_network(records: &[TransitionRecord], window: MonthWindow) -> LaborFlowNetwork {
    build_network_with_report(records, window).0
}

pub fn build_network_with_report(
    records: &[TransitionRecord],
    window: MonthWindow,
) -> (LaborFlowNetwork, BuildReport) {
    let mut report = BuildReport::default();
    let in_window: Vec<&TransitionRecord> = records
        .iter()
        .filter(|r| {
            let keep = window.contains(r.start_month);
            if !keep {
                report.outside_window += 1;
            } else if r.from_firm == r.to_firm {
                report.self_loops += 1;
            }
            keep
        })
        .collect();
    let moves = split_transitions(in_window);
    let events: HashSet<(&str, Month)> = moves
        .iter()
        .map(|m| (m.member_id.as_str(), m.start_month))
        .collect();
    report.events = events.len();

    let firms: BTreeSet<&str> = moves
        .iter()
        .flat_map(|m| [m.from_firm.as_str(), m.to_firm.as_str()])
        .collect();
    let firms: Vec<String> = firms.into_iter().map(str::to_string).collect();
    let index: HashMap<&str, usize> = firms
        .iter()
        .enumerate()
        .map(|(i, f)| (f.as_str(), i))
        .collect();
    // Summation order follows the sorted group order, so weights do not
    // depend on the order of `records`.
    let mut edges = BTreeMap::new();
    for m in &moves {
        let key = (index[m.from_firm.as_str()], index[m.to_firm.as_str()]);
        *edges.entry(key).or_insert(0.0) += m.weight;
    }
    (
        LaborFlowNetwork::from_indexed(firms, edges, Some(window)),
        report,
    )
}

/// Core extraction: drop edges lighter than `min_weight`, take the
/// `core_k`-core of the undirected simple projection, then keep the largest
/// weakly connected component.
pub fn extract_core(
    net: &LaborFlowNetwork,
    min_weight: f64,
    core_k: usize,
) -> Result<LaborFlowNetwork, GraphError> {
    // (1) weight filter
    let edges: BTreeMap<(usize, usize), f64> = net
        .edges
        .iter()
        .filter(|&(_, &w)| w >= min_weight)
        .map(|(&k, &w)| (k, w))
        .collect();
    if edges.is_empty() && core_k > 0 {
        return Err(GraphError::EmptyCore(CoreStage::WeightFilter));
    }
    let filtered = LaborFlowNetwork::from_indexed(net.firms.clone(), edges, net.window);

    // (2) k-core on the undirected projection
    let n = filtered.firm_count();
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, j, _) in filtered.edge_indices() {
        neighbors[i].insert(j);
        neighbors[j].insert(i);
    }
    let mut degree: Vec<usize> = neighbors.iter().map(BTreeSet::len).collect();
    let mut removed = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&v| degree[v] < core_k).collect();
    for &v in &stack {
        removed[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &u in &neighbors[v] {
            if !removed[u] {
                degree[u] -= 1;
                if degree[u] < core_k {
                    removed[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    let survivors: BTreeSet<usize> = (0..n).filter(|&v| !removed[v]).collect();
    if survivors.is_empty() {
        return Err(GraphError::EmptyCore(CoreStage::KCore));
    }

    // (3) largest weakly connected component
    let mut uf = UnionFind::new(n);
    for (i, j, _) in filtered.edge_indices() {
        if !removed[i] && !removed[j] {
            uf.union(i, j);
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &v in &survivors {
        components.entry(uf.find(v)).or_default().push(v);
    }
    // Ties go to the component holding the smallest firm id.
    let largest = components
        .into_values()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .ok_or(GraphError::EmptyCore(CoreStage::LargestComponent))?;
    let keep: BTreeSet<usize> = largest.into_iter().collect();
    Ok(filtered.restrict(&keep))
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Number of distinct members holding a job at `firm` during month `t`.
pub fn firm_size(spells: &[EmploymentSpell], firm: &str, t: Month) -> usize {
    spells
        .iter()
        .filter(|s| s.firm == firm && s.covers(t))
        .map(|s| s.member_id.as_str())
        .collect::<HashSet<_>>()
        .len()
}
