//! Feature vectors, label entropy, and entropy-reduction diagnostics over
//! the levels of a community tree.
//!
//! For a community `j` and one attribute (industry or region),
//! `d_j = (H(V) - H(C_j)) / H(V)` where `H(V)` is the entropy of the pooled
//! label distribution of every firm in the tree. Per level `k`:
//!
//! * `rho_k` is the share of communities with `d_j(industry) > d_j(region)`;
//! * `d_k` is the firm-count weighted mean of `d_j`, with the Cochran
//!   standard error of a weighted mean (see [`cochran_se`]);
//! * `Delta_k = d_k - mean(d_k')` where `d_k'` is recomputed after a random
//!   bijection of firms onto tree positions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{CommunityTree, HierarchyError};
use crate::records::{EmploymentSpell, Profile};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("entropy of an empty population is undefined")]
    EmptyPopulation,
    #[error("degenerate global entropy {0}: every firm carries the same label")]
    DegenerateGlobalEntropy(f64),
    #[error("level {0} has no community with a labeled population")]
    EmptyLevel(usize),
    #[error(transparent)]
    Tree(#[from] HierarchyError),
}

pub type LabelCounts = BTreeMap<String, u64>;

/// Empirical distribution of a population over labels. An empty population
/// gives the zero vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    probs: BTreeMap<String, f64>,
    population: u64,
}

impl FeatureVector {
    pub fn from_counts(counts: &LabelCounts) -> Self {
        let population: u64 = counts.values().sum();
        let probs = if population == 0 {
            BTreeMap::new()
        } else {
            counts
                .iter()
                .filter(|(_, &c)| c > 0)
                .map(|(l, &c)| (l.clone(), c as f64 / population as f64))
                .collect()
        };
        Self { probs, population }
    }

    pub fn is_empty(&self) -> bool {
        self.population == 0
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn get(&self, label: &str) -> f64 {
        self.probs.get(label).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &BTreeMap<String, f64> {
        &self.probs
    }

    pub fn support(&self) -> usize {
        self.probs.len()
    }

    /// Most frequent label; ties go to the lexicographically smallest.
    pub fn canonical_label(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (l, &p) in &self.probs {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((l, p));
            }
        }
        best.map(|(l, _)| l)
    }
}

/// Distribution of a firm's employees; missing attributes are left out of
/// the denominator.
pub fn firm_feature<'a>(labels: impl IntoIterator<Item = Option<&'a str>>) -> FeatureVector {
    let mut counts = LabelCounts::new();
    for l in labels.into_iter().flatten() {
        *counts.entry(l.to_string()).or_default() += 1;
    }
    FeatureVector::from_counts(&counts)
}

/// Employee-weighted distribution pooled over the firms of a cluster.
pub fn cluster_feature<S: AsRef<str>>(firms: &[S], table: &LabelTable) -> FeatureVector {
    FeatureVector::from_counts(&table.pooled(firms))
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(v: &FeatureVector) -> Result<f64, FeatureError> {
    if v.is_empty() {
        return Err(FeatureError::EmptyPopulation);
    }
    Ok(entropy_of_probs(v.probs.values().copied()))
}

fn entropy_of_probs(probs: impl Iterator<Item = f64>) -> f64 {
    let h: f64 = probs.filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
    h.max(0.0)
}

fn entropy_of_counts(counts: &[u64], total: u64) -> f64 {
    let t = total as f64;
    entropy_of_probs(counts.iter().map(|&c| c as f64 / t))
}

/// `(global_h - cluster_h) / global_h`.
pub fn entropy_reduction(cluster_h: f64, global_h: f64) -> Result<f64, FeatureError> {
    if !(global_h > 0.0) {
        return Err(FeatureError::DegenerateGlobalEntropy(global_h));
    }
    Ok((global_h - cluster_h) / global_h)
}

/// Which profile attribute a [`LabelTable`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Industry,
    Region,
    Skill,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Industry => "industry",
            Attribute::Region => "region",
            Attribute::Skill => "skill",
        }
    }

    fn labels(self, p: &Profile) -> Vec<&str> {
        match self {
            Attribute::Industry => p.industry.as_deref().into_iter().collect(),
            Attribute::Region => p.region.as_deref().into_iter().collect(),
            Attribute::Skill => p.skills.iter().map(String::as_str).collect(),
        }
    }
}

/// Unit of population used when pooling labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationUnit {
    #[default]
    Employees,
    /// Each firm contributes its canonical label once.
    Firms,
}

/// Per-firm label counts for one attribute.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    counts: BTreeMap<String, LabelCounts>,
}

impl LabelTable {
    pub fn from_counts(counts: BTreeMap<String, LabelCounts>) -> Self {
        Self { counts }
    }

    /// A firm's employees are the distinct members with any spell there.
    pub fn from_employment(
        spells: &[EmploymentSpell],
        profiles: &[Profile],
        attribute: Attribute,
    ) -> Self {
        let by_member: HashMap<&str, &Profile> =
            profiles.iter().map(|p| (p.member_id.as_str(), p)).collect();
        let mut staff: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for s in spells {
            staff.entry(s.firm.as_str()).or_default().insert(s.member_id.as_str());
        }
        let mut counts = BTreeMap::new();
        for (firm, members) in staff {
            let mut c = LabelCounts::new();
            for m in members {
                if let Some(p) = by_member.get(m) {
                    for l in attribute.labels(p) {
                        *c.entry(l.to_string()).or_default() += 1;
                    }
                }
            }
            counts.insert(firm.to_string(), c);
        }
        Self { counts }
    }

    /// Firm-level metadata: every employee of a firm carries the firm's
    /// label. Firms without employees in `spells` are left out.
    pub fn from_firm_labels(labels: &BTreeMap<String, String>, spells: &[EmploymentSpell]) -> Self {
        let mut staff: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for s in spells {
            staff.entry(s.firm.as_str()).or_default().insert(s.member_id.as_str());
        }
        let counts = staff
            .into_iter()
            .filter_map(|(firm, members)| {
                let label = labels.get(firm)?;
                Some((firm.to_string(), LabelCounts::from([(label.clone(), members.len() as u64)])))
            })
            .collect();
        Self { counts }
    }

    pub fn counts(&self, firm: &str) -> Option<&LabelCounts> {
        self.counts.get(firm)
    }

    pub fn firms(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn firm_feature(&self, firm: &str) -> FeatureVector {
        self.counts(firm)
            .map(FeatureVector::from_counts)
            .unwrap_or_default()
    }

    pub fn canonical_labels(&self) -> BTreeMap<String, String> {
        self.counts
            .iter()
            .filter_map(|(f, c)| {
                let v = FeatureVector::from_counts(c);
                v.canonical_label().map(|l| (f.clone(), l.to_string()))
            })
            .collect()
    }

    pub fn firm_unit(&self) -> Self {
        let counts = self
            .canonical_labels()
            .into_iter()
            .map(|(f, l)| (f, LabelCounts::from([(l, 1)])))
            .collect();
        Self { counts }
    }

    pub fn in_unit(&self, unit: PopulationUnit) -> Self {
        match unit {
            PopulationUnit::Employees => self.clone(),
            PopulationUnit::Firms => self.firm_unit(),
        }
    }

    pub fn pooled<S: AsRef<str>>(&self, firms: &[S]) -> LabelCounts {
        let mut out = LabelCounts::new();
        for f in firms {
            if let Some(c) = self.counts.get(f.as_ref()) {
                for (l, &n) in c {
                    *out.entry(l.clone()).or_default() += n;
                }
            }
        }
        out
    }
}

/// Cochran's standard error of the weighted mean `x_w = sum(w x) / sum(w)`:
///
/// ```text
/// SE^2 = n / ((n-1) W^2) * [ sum (w_i x_i - W x_w)^2
///                            - 2 x_w sum (w_i - W)(w_i x_i - W x_w)
///                            + x_w^2 sum (w_i - W)^2 ]
/// ```
///
/// with `W` the mean weight. Fewer than two observations give 0.
pub fn cochran_se(values: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(values.len(), weights.len());
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let wsum: f64 = weights.iter().sum();
    let wbar = wsum / nf;
    let xw = values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for (&x, &w) in values.iter().zip(weights) {
        let dev = w * x - wbar * xw;
        a += dev * dev;
        b += (w - wbar) * dev;
        c += (w - wbar) * (w - wbar);
    }
    let var = nf / ((nf - 1.0) * wbar * wbar) * (a - 2.0 * xw * b + xw * xw * c);
    var.max(0.0).sqrt()
}

/// Per-level summary behind the entropy-reduction figures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub communities: usize,
    pub rho: f64,
    pub mean_reduction_industry: f64,
    pub mean_reduction_region: f64,
    pub se_industry: f64,
    pub se_region: f64,
    /// Set once the shuffle null model has been run.
    pub delta_industry: Option<f64>,
    pub delta_region: Option<f64>,
}

/// Labels and tree positions in index form, shared by observed and
/// shuffled evaluations.
struct Indexed {
    /// Label counts per root firm (index = position in the root's firm list).
    per_firm: Vec<Vec<(usize, u64)>>,
    n_labels: usize,
    global_h: f64,
}

impl Indexed {
    fn new(tree: &CommunityTree, table: &LabelTable) -> Result<Self, FeatureError> {
        let mut label_ix: BTreeMap<&str, usize> = BTreeMap::new();
        for f in &tree.root().firms {
            if let Some(c) = table.counts(f) {
                for l in c.keys() {
                    let next = label_ix.len();
                    label_ix.entry(l.as_str()).or_insert(next);
                }
            }
        }
        let per_firm: Vec<Vec<(usize, u64)>> = tree
            .root()
            .firms
            .iter()
            .map(|f| {
                table
                    .counts(f)
                    .map(|c| {
                        c.iter()
                            .filter(|(_, &n)| n > 0)
                            .map(|(l, &n)| (label_ix[l.as_str()], n))
                            .collect()
                    })
                    .unwrap_or_default()
            })
            .collect();
        let n_labels = label_ix.len();
        let mut global = vec![0u64; n_labels];
        for row in &per_firm {
            for &(l, n) in row {
                global[l] += n;
            }
        }
        let total: u64 = global.iter().sum();
        if total == 0 {
            return Err(FeatureError::EmptyPopulation);
        }
        let global_h = entropy_of_counts(&global, total);
        if global_h <= 0.0 {
            return Err(FeatureError::DegenerateGlobalEntropy(global_h));
        }
        Ok(Self {
            per_firm,
            n_labels,
            global_h,
        })
    }

    /// `d_j` of a community whose members sit at `positions`, reading labels
    /// through `perm` (firm at position p carries the labels of `perm[p]`).
    fn reduction(&self, positions: &[usize], perm: &[usize], scratch: &mut Vec<u64>) -> Option<f64> {
        scratch.clear();
        scratch.resize(self.n_labels, 0);
        let mut total = 0;
        for &p in positions {
            for &(l, n) in &self.per_firm[perm[p]] {
                scratch[l] += n;
                total += n;
            }
        }
        if total == 0 {
            return None;
        }
        let h = entropy_of_counts(scratch, total);
        Some((self.global_h - h) / self.global_h)
    }
}

struct TreePositions {
    /// Root-firm positions of each node.
    members: Vec<Vec<usize>>,
    levels: Vec<Vec<usize>>,
}

impl TreePositions {
    fn new(tree: &CommunityTree) -> Result<Self, FeatureError> {
        let pos: HashMap<&str, usize> = tree
            .root()
            .firms
            .iter()
            .enumerate()
            .map(|(i, f)| (f.as_str(), i))
            .collect();
        let members = tree
            .nodes()
            .iter()
            .map(|n| n.firms.iter().map(|f| pos[f.as_str()]).collect())
            .collect();
        let levels = (0..=tree.depth())
            .map(|k| tree.level_partition(k))
            .collect::<Result<_, _>>()?;
        Ok(Self { members, levels })
    }
}

struct LevelMeans {
    industry: Option<f64>,
    region: Option<f64>,
}

fn weighted(values: &[(f64, f64)]) -> Option<f64> {
    let wsum: f64 = values.iter().map(|v| v.1).sum();
    (wsum > 0.0).then(|| values.iter().map(|(d, w)| d * w).sum::<f64>() / wsum)
}

fn level_means(
    pos: &TreePositions,
    k: usize,
    ind: &Indexed,
    reg: &Indexed,
    perm: &[usize],
    scratch: &mut Vec<u64>,
) -> LevelMeans {
    let mut di = Vec::new();
    let mut dr = Vec::new();
    for &node in &pos.levels[k] {
        let m = &pos.members[node];
        let w = m.len() as f64;
        if let Some(d) = ind.reduction(m, perm, scratch) {
            di.push((d, w));
        }
        if let Some(d) = reg.reduction(m, perm, scratch) {
            dr.push((d, w));
        }
    }
    LevelMeans {
        industry: weighted(&di),
        region: weighted(&dr),
    }
}

fn observed_level(
    pos: &TreePositions,
    k: usize,
    ind: &Indexed,
    reg: &Indexed,
) -> Result<LevelDiagnostics, FeatureError> {
    let identity: Vec<usize> = (0..ind.per_firm.len()).collect();
    let mut scratch = Vec::new();
    let mut di = (Vec::new(), Vec::new());
    let mut dr = (Vec::new(), Vec::new());
    let mut both = 0usize;
    let mut industry_wins = 0usize;
    for &node in &pos.levels[k] {
        let m = &pos.members[node];
        let w = m.len() as f64;
        let a = ind.reduction(m, &identity, &mut scratch);
        let b = reg.reduction(m, &identity, &mut scratch);
        if let Some(d) = a {
            di.0.push(d);
            di.1.push(w);
        }
        if let Some(d) = b {
            dr.0.push(d);
            dr.1.push(w);
        }
        if let (Some(a), Some(b)) = (a, b) {
            both += 1;
            if a > b {
                industry_wins += 1;
            }
        }
    }
    if di.0.is_empty() || dr.0.is_empty() || both == 0 {
        return Err(FeatureError::EmptyLevel(k));
    }
    let mean = |v: &(Vec<f64>, Vec<f64>)| {
        v.0.iter().zip(&v.1).map(|(d, w)| d * w).sum::<f64>() / v.1.iter().sum::<f64>()
    };
    Ok(LevelDiagnostics {
        level: k,
        communities: pos.levels[k].len(),
        rho: industry_wins as f64 / both as f64,
        mean_reduction_industry: mean(&di),
        mean_reduction_region: mean(&dr),
        se_industry: cochran_se(&di.0, &di.1),
        se_region: cochran_se(&dr.0, &dr.1),
        delta_industry: None,
        delta_region: None,
    })
}

/// Observed diagnostics for level `k` (deltas unset).
pub fn level_diagnostics(
    tree: &CommunityTree,
    industry: &LabelTable,
    region: &LabelTable,
    k: usize,
) -> Result<LevelDiagnostics, FeatureError> {
    if k > tree.depth() {
        return Err(HierarchyError::NoSuchLevel(k).into());
    }
    let pos = TreePositions::new(tree)?;
    let ind = Indexed::new(tree, industry)?;
    let reg = Indexed::new(tree, region)?;
    observed_level(&pos, k, &ind, &reg)
}

/// Tree-shuffle null result for one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullLevel {
    pub level: usize,
    pub observed_industry: f64,
    pub observed_region: f64,
    pub null_mean_industry: f64,
    pub null_mean_region: f64,
    pub null_sd_industry: f64,
    pub null_sd_region: f64,
    pub delta_industry: f64,
    pub delta_region: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Tree-shuffling null model: each replicate applies a uniform random
/// bijection of firms onto tree positions (shape, sizes and nesting are
/// untouched) and recomputes `d_k'`. Replicate `r` uses seed
/// `derive_seed(seed, r)`.
pub fn shuffle_null(
    tree: &CommunityTree,
    industry: &LabelTable,
    region: &LabelTable,
    seed: u64,
    n_rep: usize,
) -> Result<Vec<NullLevel>, FeatureError> {
    let n_rep = n_rep.max(1);
    let pos = TreePositions::new(tree)?;
    let ind = Indexed::new(tree, industry)?;
    let reg = Indexed::new(tree, region)?;
    let n = ind.per_firm.len();
    let levels = pos.levels.len();

    let observed: Vec<LevelDiagnostics> = (0..levels)
        .map(|k| observed_level(&pos, k, &ind, &reg))
        .collect::<Result<_, _>>()?;

    let replicates: Vec<Vec<LevelMeans>> = (0..n_rep)
        .into_par_iter()
        .map(|r| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng(derive_seed(seed, r as u64)));
            let mut scratch = Vec::new();
            (0..levels)
                .map(|k| level_means(&pos, k, &ind, &reg, &perm, &mut scratch))
                .collect()
        })
        .collect();

    Ok(observed
        .iter()
        .map(|obs| {
            let k = obs.level;
            let ni: Vec<f64> = replicates.iter().filter_map(|r| r[k].industry).collect();
            let nr: Vec<f64> = replicates.iter().filter_map(|r| r[k].region).collect();
            let (mi, si) = mean_sd(&ni);
            let (mr, sr) = mean_sd(&nr);
            NullLevel {
                level: k,
                observed_industry: obs.mean_reduction_industry,
                observed_region: obs.mean_reduction_region,
                null_mean_industry: mi,
                null_mean_region: mr,
                null_sd_industry: si,
                null_sd_region: sr,
                delta_industry: obs.mean_reduction_industry - mi,
                delta_region: obs.mean_reduction_region - mr,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsOptions {
    pub unit: PopulationUnit,
    pub seed: u64,
    pub n_rep: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            unit: PopulationUnit::Employees,
            seed: 0,
            n_rep: 100,
        }
    }
}

/// Observed diagnostics for every level with null-model deltas filled in.
pub fn diagnose(
    tree: &CommunityTree,
    industry: &LabelTable,
    region: &LabelTable,
    opts: &DiagnosticsOptions,
) -> Result<(Vec<LevelDiagnostics>, Vec<NullLevel>), FeatureError> {
    let industry = industry.in_unit(opts.unit);
    let region = region.in_unit(opts.unit);
    let null = shuffle_null(tree, &industry, &region, opts.seed, opts.n_rep)?;
    let diags = (0..=tree.depth())
        .map(|k| {
            let mut d = level_diagnostics(tree, &industry, &region, k)?;
            d.delta_industry = Some(null[k].delta_industry);
            d.delta_region = Some(null[k].delta_region);
            Ok(d)
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    Ok((diags, null))
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.9}")).unwrap_or_default()
}

/// `level,rho,d_ind,d_reg,se_ind,se_reg,delta_ind,delta_reg`.
pub fn write_diagnostics_csv<W: Write>(out: W, rows: &[LevelDiagnostics]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "level", "rho", "d_ind", "d_reg", "se_ind", "se_reg", "delta_ind", "delta_reg",
    ])?;
    for d in rows {
        w.write_record([
            d.level.to_string(),
            format!("{:.9}", d.rho),
            format!("{:.9}", d.mean_reduction_industry),
            format!("{:.9}", d.mean_reduction_region),
            format!("{:.9}", d.se_industry),
            format!("{:.9}", d.se_region),
            cell(d.delta_industry),
            cell(d.delta_region),
        ])?;
    }
    w.flush()
}
