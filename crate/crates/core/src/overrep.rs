//! Over-represented labels via log-odds with an informative Dirichlet prior,
//! and metadata-based pruning of the community tree.
//!
//! For label `w`, corpora `i` and `j` and prior pseudo-counts `f^b`:
//!
//! ```text
//! delta = ln((f_i + f_b) / (N_i + N_b - f_i - f_b)) - ln((f_j + f_b) / (N_j + N_b - f_j - f_b))
//! var   = 1 / (f_i + f_b) + 1 / (f_j + f_b)
//! z     = delta / sqrt(var)
//! ```

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Attribute, LabelCounts, LabelTable};
use crate::hierarchy::CommunityTree;

#[derive(Debug, Error, PartialEq)]
pub enum OverrepError {
    #[error("label `{0}` is absent from the background corpus")]
    LabelNotInBackground(String),
    #[error("label `{label}` has {cluster} occurrences in the cluster but {background} in the background")]
    InconsistentBackground {
        label: String,
        cluster: u64,
        background: u64,
    },
    #[error("prior strength must be positive, got {0}")]
    InvalidPrior(f64),
    #[error("the prior has a single label, so every log-odds is unbounded")]
    SingleLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub label: String,
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
}

/// Scores every label of `prior` for corpus `a` against corpus `b`.
/// The result is sorted by `z` descending, ties by label.
pub fn compare_corpora(
    a: &LabelCounts,
    b: &LabelCounts,
    prior: &BTreeMap<String, f64>,
) -> Result<Vec<LabelScore>, OverrepError> {
    for l in a.keys().chain(b.keys()) {
        if !prior.get(l).is_some_and(|&p| p > 0.0) {
            return Err(OverrepError::LabelNotInBackground(l.clone()));
        }
    }
    if prior.values().filter(|&&p| p > 0.0).count() < 2 {
        return Err(OverrepError::SingleLabel);
    }
    let n_a: f64 = a.values().sum::<u64>() as f64;
    let n_b: f64 = b.values().sum::<u64>() as f64;
    let n_prior: f64 = prior.values().sum();
    let log_odds = |f: f64, n: f64| (f / (n + n_prior - f)).ln();
    let mut out: Vec<LabelScore> = prior
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(label, &fb)| {
            let fa = a.get(label).copied().unwrap_or(0) as f64 + fb;
            let fj = b.get(label).copied().unwrap_or(0) as f64 + fb;
            let delta = log_odds(fa, n_a) - log_odds(fj, n_b);
            let variance = 1.0 / fa + 1.0 / fj;
            LabelScore {
                label: label.clone(),
                delta,
                variance,
                z: delta / variance.sqrt(),
            }
        })
        .collect();
    sort_scores(&mut out);
    Ok(out)
}

fn sort_scores(scores: &mut [LabelScore]) {
    scores.sort_by(|x, y| y.z.total_cmp(&x.z).then_with(|| x.label.cmp(&y.label)));
}

/// Pseudo-counts proportional to background frequency with total mass
/// `prior_strength`.
pub fn background_prior(
    background: &LabelCounts,
    prior_strength: f64,
) -> Result<BTreeMap<String, f64>, OverrepError> {
    if !(prior_strength > 0.0 && prior_strength.is_finite()) {
        return Err(OverrepError::InvalidPrior(prior_strength));
    }
    let total: u64 = background.values().sum();
    Ok(background
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(l, &c)| (l.clone(), prior_strength * c as f64 / total as f64))
        .collect())
}

/// Default prior mass: 1% of the background label count.
pub fn default_prior_strength(background: &LabelCounts) -> f64 {
    0.01 * background.values().sum::<u64>() as f64
}

/// Scores a cluster against all other clusters, i.e. the background minus
/// the cluster itself.
pub fn log_odds_scores(
    cluster: &LabelCounts,
    background: &LabelCounts,
    prior_strength: f64,
) -> Result<Vec<LabelScore>, OverrepError> {
    let mut complement = background.clone();
    for (l, &c) in cluster {
        let bg = background
            .get(l)
            .copied()
            .filter(|&b| b > 0)
            .ok_or_else(|| OverrepError::LabelNotInBackground(l.clone()))?;
        if c > bg {
            return Err(OverrepError::InconsistentBackground {
                label: l.clone(),
                cluster: c,
                background: bg,
            });
        }
        *complement.get_mut(l).expect("checked above") -= c;
    }
    let prior = background_prior(background, prior_strength)?;
    compare_corpora(cluster, &complement, &prior)
}

/// Label scores of one tree node for one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterScores {
    pub node: usize,
    pub attribute: Attribute,
    pub scores: Vec<LabelScore>,
}

/// Scores every non-root node against the rest of the tree. The prior mass
/// is `prior_fraction` times the background label count.
pub fn score_tree(
    tree: &CommunityTree,
    tables: &[(Attribute, &LabelTable)],
    prior_fraction: f64,
) -> Result<Vec<ClusterScores>, OverrepError> {
    let mut out = Vec::new();
    for &(attribute, table) in tables {
        let background = table.pooled(&tree.root().firms);
        let strength = prior_fraction * background.values().sum::<u64>() as f64;
        let scored: Vec<ClusterScores> = (1..tree.len())
            .into_par_iter()
            .map(|node| {
                let counts = table.pooled(&tree.node(node).firms);
                Ok(ClusterScores {
                    node,
                    attribute,
                    scores: log_odds_scores(&counts, &background, strength)?,
                })
            })
            .collect::<Result<_, OverrepError>>()?;
        out.extend(scored);
    }
    Ok(out)
}

/// Largest industry and region Z of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeZ {
    pub industry: f64,
    pub region: f64,
}

impl NodeZ {
    pub const UNSCORED: NodeZ = NodeZ {
        industry: f64::NEG_INFINITY,
        region: f64::NEG_INFINITY,
    };
}

/// Per-node maxima, indexed like the tree's nodes. The root is unscored.
pub fn max_z(tree: &CommunityTree, scores: &[ClusterScores]) -> Vec<NodeZ> {
    let mut out = vec![NodeZ::UNSCORED; tree.len()];
    for cs in scores {
        let best = cs.scores.iter().map(|s| s.z).fold(f64::NEG_INFINITY, f64::max);
        match cs.attribute {
            Attribute::Industry => out[cs.node].industry = best,
            Attribute::Region => out[cs.node].region = best,
            Attribute::Skill => {}
        }
    }
    out
}

/// `cluster_id,label_type,label,delta,variance,z`, sorted by z descending.
pub fn write_scores_csv<W: Write>(
    out: W,
    tree: &CommunityTree,
    scores: &[ClusterScores],
) -> std::io::Result<()> {
    let mut rows: Vec<(&str, &str, &LabelScore)> = scores
        .iter()
        .flat_map(|cs| {
            let id = tree.node(cs.node).id.as_str();
            cs.scores.iter().map(move |s| (id, cs.attribute.name(), s))
        })
        .collect();
    rows.sort_by(|a, b| {
        b.2.z
            .total_cmp(&a.2.z)
            .then_with(|| a.0.cmp(b.0))
            .then_with(|| a.1.cmp(b.1))
            .then_with(|| a.2.label.cmp(&b.2.label))
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster_id", "label_type", "label", "delta", "variance", "z"])?;
    for (id, kind, s) in rows {
        w.write_record([
            id,
            kind,
            s.label.as_str(),
            &format!("{:.9}", s.delta),
            &format!("{:.9}", s.variance),
            &format!("{:.9}", s.z),
        ])?;
    }
    w.flush()
}

/// How the two thresholds drive the walk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    /// Recurse into children above the break threshold; keep
    /// non-breakable nodes and leaves above the keep threshold.
    #[default]
    Prose,
    /// The published pseudocode verbatim: recurse above the keep threshold,
    /// save above the break threshold otherwise.
    Literal,
}

/// Whether a node needs both an industry and a region label over the
/// threshold, or either one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Both,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub theta_keep: f64,
    pub theta_break: f64,
    pub mode: PruneMode,
    pub combine: Combine,
}

impl PruneConfig {
    /// Thresholds used for the financial analysis: keep 1.96, break 100.
    pub const FINANCIAL: PruneConfig = PruneConfig {
        theta_keep: 1.96,
        theta_break: 100.0,
        mode: PruneMode::Prose,
        combine: Combine::Both,
    };

    /// Visualization preset: break 10, keep unchanged at 1.96.
    pub const VISUALIZATION: PruneConfig = PruneConfig {
        theta_keep: 1.96,
        theta_break: 10.0,
        mode: PruneMode::Prose,
        combine: Combine::Both,
    };

    pub fn new(theta_keep: f64, theta_break: f64) -> Self {
        Self {
            theta_keep,
            theta_break,
            ..Self::FINANCIAL
        }
    }

    /// Human-readable warnings for suspicious settings.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.theta_break < self.theta_keep {
            w.push(format!(
                "break threshold {} is below keep threshold {}",
                self.theta_break, self.theta_keep
            ));
        }
        w
    }

    fn exceeds(&self, z: NodeZ, theta: f64) -> bool {
        match self.combine {
            Combine::Both => z.industry > theta && z.region > theta,
            Combine::Either => z.industry > theta || z.region > theta,
        }
    }
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self::FINANCIAL
    }
}

/// Breadth-first pruning walk from the root. Returns the saved node
/// indices in visit order; no saved node is an ancestor of another.
pub fn prune_tree(tree: &CommunityTree, scores: &[NodeZ], cfg: &PruneConfig) -> Vec<usize> {
    assert_eq!(scores.len(), tree.len(), "one NodeZ per tree node");
    let mut visit = std::collections::VecDeque::from([0usize]);
    let mut saved = Vec::new();
    while let Some(node) = visit.pop_front() {
        for &child in &tree.node(node).children {
            let z = scores[child];
            match cfg.mode {
                PruneMode::Prose => {
                    let leaf = tree.node(child).is_leaf();
                    if !leaf && cfg.exceeds(z, cfg.theta_break) {
                        visit.push_back(child);
                    } else if cfg.exceeds(z, cfg.theta_keep) {
                        saved.push(child);
                    }
                }
                PruneMode::Literal => {
                    if cfg.exceeds(z, cfg.theta_keep) {
                        visit.push_back(child);
                    } else if cfg.exceeds(z, cfg.theta_break) {
                        saved.push(child);
                    }
                }
            }
        }
    }
    saved
}

/// Saved clusters as a JSON array of node ids.
pub fn save_list_json(tree: &CommunityTree, saved: &[usize]) -> String {
    let ids: Vec<&str> = saved.iter().map(|&i| tree.node(i).id.as_str()).collect();
    serde_json::to_string_pretty(&ids).expect("ids serialize")
}
