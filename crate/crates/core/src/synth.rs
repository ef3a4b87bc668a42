//! Synthetic job histories with a planted hierarchy of firm blocks.
//!
//! Firms are laid out in a balanced tree of blocks (`branching[d]` children
//! per block at depth `d`, leaf blocks sized by `block_sizes`). A member who
//! changes jobs picks the destination firm `j` with weight
//! `rates[depth of the deepest block containing both firms]`, so
//! `rates[0]` governs moves between top-level blocks and the last entry
//! governs moves inside a leaf block. Industry and region labels, skills and
//! market caps are planted per block as well, which gives every analysis a
//! known answer to recover.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::month::Month;
use crate::records::{
    self, EmploymentSpell, IngestError, MarketCapRecord, Profile, TransitionRecord,
};
use crate::seed::rng;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("at least one hierarchy level is required")]
    NoLevels,
    #[error("branching at depth {0} must be at least 2")]
    Branching(usize),
    #[error("expected {expected} leaf block sizes, found {found}")]
    BlockCount { expected: usize, found: usize },
    #[error("leaf block {0} is empty")]
    EmptyBlock(usize),
    #[error("expected {expected} mixing rates (one per shared depth), found {found}")]
    RateCount { expected: usize, found: usize },
    #[error("mixing rates must be finite and non-negative")]
    NegativeRate,
    #[error("{0} must lie in [0, 1]")]
    Probability(&'static str),
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("label level {0} is outside 1..=levels")]
    LabelLevel(usize),
    #[error("first year must not be after last year")]
    Years,
    #[error("members_per_firm must be positive")]
    NoMembers,
}

/// Entry/exit dynamics that tie each leaf block's market-cap trend to its
/// labor-flux trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// `beta_MC = slope * beta_LF + noise`.
    pub slope: f64,
    /// Standard deviation of the planted flux trends.
    pub trend_sd: f64,
    /// Standard deviation of the noise added to each block's market-cap trend.
    pub noise_sd: f64,
    /// Mean number of entrants (and of exits) per block and year at mid-period.
    pub turnover: f64,
    /// Per firm-year noise on log market cap.
    pub marketcap_noise_sd: f64,
}

impl Default for Coupling {
    fn default() -> Self {
        Self {
            slope: 0.5,
            trend_sd: 0.3,
            noise_sd: 0.05,
            turnover: 200.0,
            marketcap_noise_sd: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Children per block, one entry per level below the root.
    pub branching: Vec<usize>,
    /// Firms per leaf block in lexicographic path order.
    pub block_sizes: Vec<usize>,
    /// Pair rate indexed by the depth of the deepest shared block
    /// (`0..=levels`).
    pub rates: Vec<f64>,
    pub members_per_firm: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Chance that a member changes jobs in a given year.
    pub move_prob: f64,
    /// Chance that a job change also starts a second, short concurrent job.
    pub multi_job_prob: f64,
    pub industry_alignment: f64,
    pub region_alignment: f64,
    /// Block depth that carries the industry label.
    pub industry_level: usize,
    pub region_level: usize,
    pub degree_prob: f64,
    pub skills_per_member: usize,
    /// Chance that each skill is drawn from the home block's favored set.
    pub skill_alignment: f64,
    pub coupling: Option<Coupling>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::benchmark(0)
    }
}

impl SynthConfig {
    /// Two-level benchmark: 4 blocks of 3 sub-blocks of 25 firms. Pairs in
    /// the same sub-block move at rate 1, pairs in sibling sub-blocks at 0.4,
    /// and the cross-block rate is set so that the mean within-block pair
    /// rate is ten times the cross-block one.
    pub fn benchmark(seed: u64) -> Self {
        let branching = vec![4, 3];
        let block_sizes = vec![25; 12];
        let (same, sibling) = (1.0, 0.4);
        let within_pairs = 25.0 * 3.0 - 1.0;
        let within_mean = (24.0 * same + 50.0 * sibling) / within_pairs;
        Self {
            branching,
            block_sizes,
            rates: vec![within_mean / 10.0, sibling, same],
            members_per_firm: 30,
            first_year: 2008,
            last_year: 2015,
            move_prob: 0.3,
            multi_job_prob: 0.05,
            industry_alignment: 0.9,
            region_alignment: 0.9,
            industry_level: 2,
            region_level: 2,
            degree_prob: 0.7,
            skills_per_member: 3,
            skill_alignment: 0.7,
            coupling: None,
            seed,
        }
    }

    /// Flat blocks without cross-block moves, with entry and exit coupled to
    /// market cap.
    pub fn coupled(seed: u64) -> Self {
        Self {
            branching: vec![16],
            block_sizes: vec![12; 16],
            rates: vec![0.0, 1.0],
            members_per_firm: 150,
            first_year: 2008,
            last_year: 2015,
            move_prob: 0.2,
            multi_job_prob: 0.0,
            industry_level: 1,
            region_level: 1,
            degree_prob: 1.0,
            coupling: Some(Coupling::default()),
            ..Self::benchmark(seed)
        }
    }

    pub fn levels(&self) -> usize {
        self.branching.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.branching.iter().product()
    }

    pub fn n_firms(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.branching.is_empty() {
            return Err(SynthError::NoLevels);
        }
        if let Some(d) = self.branching.iter().position(|&b| b < 2) {
            return Err(SynthError::Branching(d));
        }
        if self.block_sizes.len() != self.leaf_count() {
            return Err(SynthError::BlockCount {
                expected: self.leaf_count(),
                found: self.block_sizes.len(),
            });
        }
        if let Some(b) = self.block_sizes.iter().position(|&s| s == 0) {
            return Err(SynthError::EmptyBlock(b));
        }
        if self.rates.len() != self.levels() + 1 {
            return Err(SynthError::RateCount {
                expected: self.levels() + 1,
                found: self.rates.len(),
            });
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(SynthError::NegativeRate);
        }
        for (name, p) in [
            ("move_prob", self.move_prob),
            ("multi_job_prob", self.multi_job_prob),
            ("industry_alignment", self.industry_alignment),
            ("region_alignment", self.region_alignment),
            ("degree_prob", self.degree_prob),
            ("skill_alignment", self.skill_alignment),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Probability(name));
            }
        }
        for level in [self.industry_level, self.region_level] {
            if level == 0 || level > self.levels() {
                return Err(SynthError::LabelLevel(level));
            }
        }
        if self.first_year > self.last_year {
            return Err(SynthError::Years);
        }
        if self.members_per_firm == 0 {
            return Err(SynthError::NoMembers);
        }
        if let Some(c) = &self.coupling {
            for (name, x) in [
                ("coupling trend_sd", c.trend_sd),
                ("coupling noise_sd", c.noise_sd),
                ("coupling turnover", c.turnover),
                ("coupling marketcap_noise_sd", c.marketcap_noise_sd),
            ] {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(SynthError::Negative(name));
                }
            }
            if !c.slope.is_finite() {
                return Err(SynthError::Negative("coupling slope"));
            }
        }
        Ok(())
    }

    /// Probability that a job change from `firm` (an index into the firm
    /// list) lands at each shared depth. All zero when the firm has no
    /// reachable destination.
    pub fn destination_probabilities(&self, firm: usize) -> Result<Vec<f64>, SynthError> {
        self.validate()?;
        Ok(Layout::new(self).depth_weights(firm, &self.rates).0)
    }
}

/// Contiguous firm ranges of every block containing each firm.
struct Layout {
    /// `paths[f][d]` is the child index at depth `d + 1`.
    paths: Vec<Vec<usize>>,
    /// `ranges[f][d]` is the firm range of the depth-`d` block holding `f`.
    ranges: Vec<Vec<(usize, usize)>>,
    leaf_of: Vec<usize>,
    leaf_ranges: Vec<(usize, usize)>,
}

impl Layout {
    fn new(cfg: &SynthConfig) -> Self {
        let levels = cfg.levels();
        let leaf_paths: Vec<Vec<usize>> = (0..cfg.leaf_count())
            .map(|mut l| {
                let mut path = vec![0; levels];
                for d in (0..levels).rev() {
                    path[d] = l % cfg.branching[d];
                    l /= cfg.branching[d];
                }
                path
            })
            .collect();
        let mut leaf_ranges = Vec::new();
        let mut start = 0;
        for &s in &cfg.block_sizes {
            leaf_ranges.push((start, start + s));
            start += s;
        }
        let mut paths = Vec::new();
        let mut leaf_of = Vec::new();
        for (l, &(a, b)) in leaf_ranges.iter().enumerate() {
            for _ in a..b {
                paths.push(leaf_paths[l].clone());
                leaf_of.push(l);
            }
        }
        // A block at depth d is a run of leaves sharing the first d path entries.
        let mut ranges = Vec::with_capacity(paths.len());
        for f in 0..paths.len() {
            let mut r = Vec::with_capacity(levels + 1);
            for d in 0..=levels {
                let prefix = &paths[f][..d];
                let leaves: Vec<usize> = (0..leaf_paths.len())
                    .filter(|&l| &leaf_paths[l][..d] == prefix)
                    .collect();
                let lo = leaf_ranges[*leaves.first().expect("own leaf")].0;
                let hi = leaf_ranges[*leaves.last().expect("own leaf")].1;
                r.push((lo, hi));
            }
            ranges.push(r);
        }
        Self {
            paths,
            ranges,
            leaf_of,
            leaf_ranges,
        }
    }

    /// Destination candidates per shared depth: `(probabilities, counts)`.
    fn depth_weights(&self, f: usize, rates: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let r = &self.ranges[f];
        let levels = r.len() - 1;
        let counts: Vec<usize> = (0..=levels)
            .map(|d| {
                let outer = r[d].1 - r[d].0;
                let inner = if d == levels { 1 } else { r[d + 1].1 - r[d + 1].0 };
                outer - inner
            })
            .collect();
        let raw: Vec<f64> = counts.iter().zip(rates).map(|(&c, &x)| c as f64 * x).collect();
        let total: f64 = raw.iter().sum();
        let probs = if total > 0.0 {
            raw.iter().map(|x| x / total).collect()
        } else {
            vec![0.0; raw.len()]
        };
        (probs, counts)
    }

    /// Uniform firm among those whose deepest shared block with `f` is at `d`.
    fn pick_at_depth(&self, f: usize, d: usize, rng: &mut ChaCha8Rng) -> usize {
        let r = &self.ranges[f];
        let (lo, hi) = r[d];
        let (ilo, ihi) = if d + 1 < r.len() { r[d + 1] } else { (f, f + 1) };
        let k = rng.random_range(0..(hi - lo) - (ihi - ilo));
        let j = lo + k;
        if j < ilo {
            j
        } else {
            j + (ihi - ilo)
        }
    }

    fn block_key(&self, f: usize, depth: usize) -> String {
        self.paths[f][..depth]
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// Ground truth for one firm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlantedFirm {
    pub firm: String,
    /// Child index at each depth below the root.
    pub path: Vec<usize>,
    pub industry: String,
    pub region: String,
}

impl PlantedFirm {
    /// Dot-joined path prefix of length `depth`, e.g. `"2.1"`.
    pub fn block_at(&self, depth: usize) -> String {
        self.path[..depth.min(self.path.len())]
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// Planted trends of one leaf block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedTrend {
    pub unit: String,
    pub flux_trend: f64,
    pub marketcap_trend: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub transitions: Vec<TransitionRecord>,
    pub spells: Vec<EmploymentSpell>,
    pub profiles: Vec<Profile>,
    pub marketcap: Vec<MarketCapRecord>,
    pub roster: Vec<String>,
    pub planted: Vec<PlantedFirm>,
    pub trends: Vec<PlantedTrend>,
}

pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const SPELLS_FILE: &str = "spells.csv";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const MARKETCAP_FILE: &str = "marketcap.csv";
pub const ROSTER_FILE: &str = "roster.csv";
pub const PLANTED_LABELS_FILE: &str = "planted_labels.csv";
pub const PLANTED_TRENDS_FILE: &str = "planted_trends.csv";

impl SynthData {
    /// Firm to planted block at `depth`, e.g. depth 1 gives top-level blocks.
    pub fn planted_grouping(&self, depth: usize) -> BTreeMap<String, String> {
        self.planted
            .iter()
            .map(|p| (p.firm.clone(), p.block_at(depth)))
            .collect()
    }

    pub fn write_planted_labels<W: std::io::Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["firm", "true_path", "true_industry", "true_region"])?;
        for p in &self.planted {
            let depth = p.path.len();
            w.write_record([&p.firm, &p.block_at(depth), &p.industry, &p.region])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_planted_trends<W: std::io::Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["unit", "flux_trend", "marketcap_trend"])?;
        for t in &self.trends {
            w.write_record([
                t.unit.clone(),
                format!("{:.9}", t.flux_trend),
                format!("{:.9}", t.marketcap_trend),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes every table into `dir` and returns the file names written.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<&'static str>, IngestError> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>, IngestError> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        records::write_transitions(open(TRANSITIONS_FILE)?, &self.transitions)?;
        records::write_spells(open(SPELLS_FILE)?, &self.spells)?;
        records::write_profiles(open(PROFILES_FILE)?, &self.profiles)?;
        records::write_marketcap(open(MARKETCAP_FILE)?, &self.marketcap)?;
        records::write_roster(open(ROSTER_FILE)?, &self.roster)?;
        self.write_planted_labels(open(PLANTED_LABELS_FILE)?)?;
        self.write_planted_trends(open(PLANTED_TRENDS_FILE)?)?;
        Ok(vec![
            TRANSITIONS_FILE,
            SPELLS_FILE,
            PROFILES_FILE,
            MARKETCAP_FILE,
            ROSTER_FILE,
            PLANTED_LABELS_FILE,
            PLANTED_TRENDS_FILE,
        ])
    }
}

struct Member {
    firm: usize,
    spell: usize,
    active: bool,
}

fn month(year: i32, m: u8) -> Month {
    Month::new(year, m).expect("valid month")
}

/// Label of `f` at `depth`: its own block's label with probability
/// `alignment`, otherwise a uniformly random block label at that depth.
fn plant_label(
    layout: &Layout,
    f: usize,
    depth: usize,
    prefix: &str,
    alignment: f64,
    all: &[String],
    rng: &mut ChaCha8Rng,
) -> String {
    if rng.random_bool(alignment) {
        format!("{prefix}-{}", layout.block_key(f, depth))
    } else {
        all.choose(rng).expect("at least one block").clone()
    }
}

/// Generates a full synthetic dataset. Output depends only on `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let mut rng = rng(cfg.seed);
    let layout = Layout::new(cfg);
    let n = cfg.n_firms();
    let firm_ids: Vec<String> = (0..n).map(|i| format!("f{i:04}")).collect();
    let leaf_count = cfg.leaf_count();

    let block_labels = |prefix: &str, depth: usize| -> Vec<String> {
        let mut v: Vec<String> = (0..n)
            .map(|f| format!("{prefix}-{}", layout.block_key(f, depth)))
            .collect();
        v.dedup();
        v
    };
    let industries = block_labels("ind", cfg.industry_level);
    let regions = block_labels("reg", cfg.region_level);
    let mut planted = Vec::with_capacity(n);
    for f in 0..n {
        let industry = plant_label(
            &layout,
            f,
            cfg.industry_level,
            "ind",
            cfg.industry_alignment,
            &industries,
            &mut rng,
        );
        let region = plant_label(
            &layout,
            f,
            cfg.region_level,
            "reg",
            cfg.region_alignment,
            &regions,
            &mut rng,
        );
        planted.push(PlantedFirm {
            firm: firm_ids[f].clone(),
            path: layout.paths[f].clone(),
            industry,
            region,
        });
    }

    let favored: Vec<Vec<String>> = (0..leaf_count)
        .map(|l| {
            let key = layout.block_key(layout.leaf_ranges[l].0, cfg.levels());
            (0..3).map(|k| format!("skill-{key}-{k}")).collect()
        })
        .collect();
    let generic: Vec<String> = (0..12).map(|k| format!("skill-{k}")).collect();

    let mut profiles = Vec::new();
    let mut spells: Vec<EmploymentSpell> = Vec::new();
    let mut transitions = Vec::new();
    let mut members: Vec<Member> = Vec::new();

    let hire = |firm: usize,
                    start: Month,
                    rng: &mut ChaCha8Rng,
                    profiles: &mut Vec<Profile>,
                    spells: &mut Vec<EmploymentSpell>,
                    members: &mut Vec<Member>| {
        let id = format!("m{:06}", members.len());
        let leaf = layout.leaf_of[firm];
        let mut skills = Vec::new();
        for _ in 0..cfg.skills_per_member {
            let pool = if rng.random_bool(cfg.skill_alignment) {
                &favored[leaf]
            } else {
                &generic
            };
            let s = pool.choose(rng).expect("non-empty pool").clone();
            if !skills.contains(&s) {
                skills.push(s);
            }
        }
        skills.sort();
        // A member reports the home firm's label with probability `alignment`
        // and a uniformly random one otherwise, so zero alignment leaves
        // member labels independent of where people work.
        let region = if rng.random_bool(cfg.region_alignment) {
            planted[firm].region.clone()
        } else {
            regions.choose(rng).expect("at least one block").clone()
        };
        let industry = if rng.random_bool(cfg.industry_alignment) {
            planted[firm].industry.clone()
        } else {
            industries.choose(rng).expect("at least one block").clone()
        };
        profiles.push(Profile {
            member_id: id.clone(),
            region: Some(region),
            industry: Some(industry),
            degree: rng.random_bool(cfg.degree_prob).then(|| "BS".to_string()),
            skills,
        });
        spells.push(EmploymentSpell {
            member_id: id,
            firm: firm_ids[firm].clone(),
            start_month: start,
            end_month: None,
        });
        members.push(Member {
            firm,
            spell: spells.len() - 1,
            active: true,
        });
    };

    for f in 0..n {
        for _ in 0..cfg.members_per_firm {
            let start = month(cfg.first_year, rng.random_range(1..=12));
            hire(f, start, &mut rng, &mut profiles, &mut spells, &mut members);
        }
    }

    let coupling = cfg.coupling.as_ref();
    let mid = (cfg.first_year + cfg.last_year) as f64 / 2.0;
    let mut flux_trend = vec![0.0; leaf_count];
    let mut mc_trend = vec![0.0; leaf_count];
    match coupling {
        Some(c) => {
            let gamma = Normal::new(0.0, c.trend_sd).expect("valid sd");
            let noise = Normal::new(0.0, c.noise_sd).expect("valid sd");
            for l in 0..leaf_count {
                flux_trend[l] = gamma.sample(&mut rng);
                mc_trend[l] = c.slope * flux_trend[l] + noise.sample(&mut rng);
            }
        }
        None => {
            let free = Normal::new(0.0, 0.1).expect("valid sd");
            for t in mc_trend.iter_mut() {
                *t = free.sample(&mut rng);
            }
        }
    }

    let weights: Vec<Vec<f64>> = (0..n).map(|f| layout.depth_weights(f, &cfg.rates).0).collect();
    for year in cfg.first_year + 1..=cfg.last_year {
        for i in 0..members.len() {
            if !members[i].active || !rng.random_bool(cfg.move_prob) {
                continue;
            }
            let from = members[i].firm;
            let w = &weights[from];
            if w.iter().all(|&p| p == 0.0) {
                continue;
            }
            let start = month(year, rng.random_range(1..=12));
            let pick = |rng: &mut ChaCha8Rng| {
                let mut u: f64 = rng.random();
                let mut depth = w.len() - 1;
                for (d, &p) in w.iter().enumerate() {
                    if u < p {
                        depth = d;
                        break;
                    }
                    u -= p;
                }
                // Guard against rounding landing on a zero-weight depth.
                while w[depth] == 0.0 {
                    depth -= 1;
                }
                layout.pick_at_depth(from, depth, rng)
            };
            let to = pick(&mut rng);
            let member_id = spells[members[i].spell].member_id.clone();
            let prev = members[i].spell;
            let end = start.offset(-1).max(spells[prev].start_month);
            spells[prev].end_month = Some(end);
            transitions.push(TransitionRecord {
                member_id: member_id.clone(),
                from_firm: firm_ids[from].clone(),
                to_firm: firm_ids[to].clone(),
                start_month: start,
            });
            spells.push(EmploymentSpell {
                member_id: member_id.clone(),
                firm: firm_ids[to].clone(),
                start_month: start,
                end_month: None,
            });
            members[i].firm = to;
            members[i].spell = spells.len() - 1;

            if rng.random_bool(cfg.multi_job_prob) {
                let side = pick(&mut rng);
                if side != to {
                    transitions.push(TransitionRecord {
                        member_id: member_id.clone(),
                        from_firm: firm_ids[from].clone(),
                        to_firm: firm_ids[side].clone(),
                        start_month: start,
                    });
                    let len = rng.random_range(1..=6);
                    spells.push(EmploymentSpell {
                        member_id,
                        firm: firm_ids[side].clone(),
                        start_month: start,
                        end_month: Some(start.offset(len)),
                    });
                }
            }
        }

        if let Some(c) = coupling {
            let dt = year as f64 - mid;
            for l in 0..leaf_count {
                let g = flux_trend[l];
                let exits = poisson(c.turnover * (-g * dt / 2.0).exp(), &mut rng);
                let entrants = poisson(c.turnover * (g * dt / 2.0).exp(), &mut rng);
                let pool: Vec<usize> = (0..members.len())
                    .filter(|&i| members[i].active && layout.leaf_of[members[i].firm] == l)
                    .collect();
                let leaving: Vec<usize> = pool
                    .choose_multiple(&mut rng, exits.min(pool.len()))
                    .copied()
                    .collect();
                let mut leaving = leaving;
                leaving.sort_unstable();
                for i in leaving {
                    let s = members[i].spell;
                    let m = month(year, rng.random_range(1..=12));
                    spells[s].end_month = Some(m.max(spells[s].start_month));
                    members[i].active = false;
                }
                let (lo, hi) = layout.leaf_ranges[l];
                for _ in 0..entrants {
                    let f = rng.random_range(lo..hi);
                    let start = month(year, rng.random_range(1..=12));
                    hire(f, start, &mut rng, &mut profiles, &mut spells, &mut members);
                }
            }
        }
    }

    let mut marketcap = Vec::new();
    let mc_noise = Normal::new(0.0, coupling.map_or(0.05, |c| c.marketcap_noise_sd))
        .expect("valid sd");
    let base = Normal::new(7.0, 1.0).expect("valid sd");
    for f in 0..n {
        let a = base.sample(&mut rng);
        let beta = mc_trend[layout.leaf_of[f]];
        for year in cfg.first_year..=cfg.last_year {
            let log_mc = a + beta * (year as f64 - mid) + mc_noise.sample(&mut rng);
            marketcap.push(MarketCapRecord {
                firm: firm_ids[f].clone(),
                year,
                q4_marketcap: log_mc.exp(),
            });
        }
    }

    let trends = (0..leaf_count)
        .map(|l| PlantedTrend {
            unit: layout.block_key(layout.leaf_ranges[l].0, cfg.levels()),
            flux_trend: flux_trend[l],
            marketcap_trend: mc_trend[l],
        })
        .collect();

    Ok(SynthData {
        transitions,
        spells,
        profiles,
        marketcap,
        roster: firm_ids,
        planted,
        trends,
    })
}

fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as usize
}
