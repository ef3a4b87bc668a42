//! Influx/outflux series per unit, OLS trends, the second-stage regression
//! of market-cap trends on labor-flux trends, and the quartile skill
//! comparison.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::LabelCounts;
use crate::graph::split_transitions;
use crate::month::Month;
use crate::overrep::{background_prior, compare_corpora, OverrepError};
use crate::records::{EmploymentSpell, MarketCapRecord, Profile, TransitionRecord};

#[derive(Debug, Error, PartialEq)]
pub enum TrendError {
    #[error("need at least 2 points with distinct times, got {0}")]
    TooFewPoints(usize),
    #[error("all points share the same time value")]
    ZeroTimeVariance,
    #[error("need at least {needed} units, got {got}")]
    TooFewUnits { needed: usize, got: usize },
    #[error(transparent)]
    Overrep(#[from] OverrepError),
}

/// Result of `y = slope * t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    /// Classical OLS standard error of the slope; 0 when `n = 2`.
    pub slope_se: f64,
    pub n: usize,
}

/// Ordinary least squares on `(t, y)` pairs, skipping missing `y`.
pub fn ols_trend(points: &[(f64, Option<f64>)]) -> Result<TrendFit, TrendError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(t, y)| y.map(|y| (t, y)))
        .collect();
    ols(&pts)
}

pub fn ols(points: &[(f64, f64)]) -> Result<TrendFit, TrendError> {
    let n = points.len();
    if n < 2 {
        return Err(TrendError::TooFewPoints(n));
    }
    let nf = n as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(TrendError::ZeroTimeVariance);
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - t_mean) * (p.1 - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let slope_se = if n > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(TrendFit {
        slope,
        intercept,
        slope_se,
        n,
    })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Which moves count toward influx/outflux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxFilters {
    /// Count only members with a degree on their profile.
    pub require_degree: bool,
    /// A member's first recorded job is influx for its unit.
    pub first_jobs_as_influx: bool,
    /// A member's last recorded job, if it ended, is outflux for its unit.
    pub last_jobs_as_outflux: bool,
    /// Use `ln((S_in + 1) / (S_out + 1))` instead of leaving zero years missing.
    pub smoothing: bool,
}

impl Default for FluxFilters {
    fn default() -> Self {
        Self {
            require_degree: true,
            first_jobs_as_influx: true,
            last_jobs_as_outflux: true,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxSeries {
    pub unit: String,
    pub years: Vec<i32>,
    pub influx: Vec<f64>,
    pub outflux: Vec<f64>,
    pub log_ratio: Vec<Option<f64>>,
}

impl FluxSeries {
    /// `(year, log_ratio)` pairs inside `years`.
    pub fn points(&self, years: &RangeInclusive<i32>) -> Vec<(f64, Option<f64>)> {
        self.years
            .iter()
            .zip(&self.log_ratio)
            .filter(|(y, _)| years.contains(y))
            .map(|(&y, &r)| (y as f64, r))
            .collect()
    }

    /// `ln(sum S_in / sum S_out)` over `years`.
    pub fn total_log_ratio(&self, years: &RangeInclusive<i32>) -> Option<f64> {
        let (mut i, mut o) = (0.0, 0.0);
        for (k, y) in self.years.iter().enumerate() {
            if years.contains(y) {
                i += self.influx[k];
                o += self.outflux[k];
            }
        }
        (i > 0.0 && o > 0.0).then(|| (i / o).ln())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FluxPanel {
    pub series: BTreeMap<String, FluxSeries>,
    /// Units with no flux in any year.
    pub excluded: Vec<String>,
}

/// Job histories consumed by [`flux_series`].
#[derive(Debug, Clone, Copy)]
pub struct CareerData<'a> {
    pub transitions: &'a [TransitionRecord],
    pub spells: &'a [EmploymentSpell],
    pub profiles: &'a [Profile],
}

/// First-job and last-job events of each member, split evenly when several
/// spells tie.
fn career_endpoints(spells: &[&EmploymentSpell]) -> (Vec<(String, Month, f64)>, Vec<(String, Month, f64)>) {
    let mut by_member: BTreeMap<&str, Vec<&EmploymentSpell>> = BTreeMap::new();
    for s in spells {
        by_member.entry(s.member_id.as_str()).or_default().push(s);
    }
    let mut firsts = Vec::new();
    let mut lasts = Vec::new();
    for list in by_member.values() {
        let start = list.iter().map(|s| s.start_month).min().expect("non-empty");
        let first: BTreeSet<&str> = list
            .iter()
            .filter(|s| s.start_month == start)
            .map(|s| s.firm.as_str())
            .collect();
        let w = 1.0 / first.len() as f64;
        firsts.extend(first.into_iter().map(|f| (f.to_string(), start, w)));

        if list.iter().any(|s| s.end_month.is_none()) {
            continue;
        }
        let end = list.iter().filter_map(|s| s.end_month).max().expect("all ended");
        let last: BTreeSet<&str> = list
            .iter()
            .filter(|s| s.end_month == Some(end))
            .map(|s| s.firm.as_str())
            .collect();
        let w = 1.0 / last.len() as f64;
        lasts.extend(last.into_iter().map(|f| (f.to_string(), end, w)));
    }
    (firsts, lasts)
}

/// Yearly influx/outflux per unit. Moves inside a unit are ignored; a move
/// between units is outflux for the source and influx for the destination
/// in the year the new job starts. Simultaneous moves are split `1/k`.
pub fn flux_series(
    data: &CareerData<'_>,
    grouping: &BTreeMap<String, String>,
    years: RangeInclusive<i32>,
    filters: &FluxFilters,
) -> FluxPanel {
    let eligible: Option<BTreeSet<&str>> = filters.require_degree.then(|| {
        data.profiles
            .iter()
            .filter(|p| p.has_degree())
            .map(|p| p.member_id.as_str())
            .collect()
    });
    let keep = |m: &str| eligible.as_ref().is_none_or(|e| e.contains(m));

    let units: BTreeSet<&str> = grouping.values().map(String::as_str).collect();
    let year_list: Vec<i32> = years.clone().collect();
    let ny = year_list.len();
    let mut influx: BTreeMap<&str, Vec<f64>> = units.iter().map(|&u| (u, vec![0.0; ny])).collect();
    let mut outflux = influx.clone();
    let slot = |m: Month| years.contains(&m.year()).then(|| (m.year() - *years.start()) as usize);
    let unit = |f: &str| grouping.get(f).map(String::as_str);

    let moves = split_transitions(data.transitions.iter().filter(|r| keep(&r.member_id)));
    for mv in &moves {
        let Some(y) = slot(mv.start_month) else { continue };
        let (src, dst) = (unit(&mv.from_firm), unit(&mv.to_firm));
        if src == dst {
            continue;
        }
        if let Some(u) = dst {
            influx.get_mut(u).expect("unit")[y] += mv.weight;
        }
        if let Some(u) = src {
            outflux.get_mut(u).expect("unit")[y] += mv.weight;
        }
    }

    if filters.first_jobs_as_influx || filters.last_jobs_as_outflux {
        let spells: Vec<&EmploymentSpell> =
            data.spells.iter().filter(|s| keep(&s.member_id)).collect();
        let (firsts, lasts) = career_endpoints(&spells);
        if filters.first_jobs_as_influx {
            for (firm, m, w) in firsts {
                if let (Some(u), Some(y)) = (unit(&firm), slot(m)) {
                    influx.get_mut(u).expect("unit")[y] += w;
                }
            }
        }
        if filters.last_jobs_as_outflux {
            for (firm, m, w) in lasts {
                if let (Some(u), Some(y)) = (unit(&firm), slot(m)) {
                    outflux.get_mut(u).expect("unit")[y] += w;
                }
            }
        }
    }

    let mut panel = FluxPanel::default();
    for u in units {
        let (i, o) = (&influx[u], &outflux[u]);
        if i.iter().chain(o).all(|&x| x == 0.0) {
            panel.excluded.push(u.to_string());
            continue;
        }
        let log_ratio = i
            .iter()
            .zip(o)
            .map(|(&a, &b)| {
                if filters.smoothing {
                    Some(((a + 1.0) / (b + 1.0)).ln())
                } else {
                    (a > 0.0 && b > 0.0).then(|| (a / b).ln())
                }
            })
            .collect();
        panel.series.insert(
            u.to_string(),
            FluxSeries {
                unit: u.to_string(),
                years: year_list.clone(),
                influx: i.clone(),
                outflux: o.clone(),
                log_ratio,
            },
        );
    }
    panel
}

/// Natural log of summed Q4 market cap, per unit and year.
pub type MarketCapPanel = BTreeMap<String, BTreeMap<i32, f64>>;

/// Sums market cap within each unit and takes the natural log. Non-positive
/// values are dropped; firms outside `roster` are ignored when one is given.
pub fn aggregate_marketcap(
    records: &[MarketCapRecord],
    grouping: &BTreeMap<String, String>,
    roster: Option<&BTreeSet<String>>,
) -> MarketCapPanel {
    let mut sums: BTreeMap<&str, BTreeMap<i32, f64>> = BTreeMap::new();
    let mut ordered: Vec<&MarketCapRecord> = records.iter().collect();
    ordered.sort_by(|a, b| (&a.firm, a.year).cmp(&(&b.firm, b.year)));
    for r in ordered {
        if !(r.q4_marketcap > 0.0 && r.q4_marketcap.is_finite()) {
            continue;
        }
        if roster.is_some_and(|ro| !ro.contains(&r.firm)) {
            continue;
        }
        if let Some(u) = grouping.get(&r.firm) {
            *sums.entry(u).or_default().entry(r.year).or_insert(0.0) += r.q4_marketcap;
        }
    }
    sums.into_iter()
        .map(|(u, years)| {
            (
                u.to_string(),
                years.into_iter().map(|(y, s)| (y, s.ln())).collect(),
            )
        })
        .collect()
}

/// Inclusive year windows for the two first-stage fits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendWindows {
    pub marketcap: RangeInclusive<i32>,
    pub flux: RangeInclusive<i32>,
}

impl Default for TrendWindows {
    fn default() -> Self {
        Self {
            marketcap: 2011..=2014,
            flux: 2010..=2014,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitTrend {
    pub unit: String,
    pub flux: TrendFit,
    pub marketcap: TrendFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRegression {
    pub rows: Vec<UnitTrend>,
    /// `(unit, reason)` for units without both fits.
    pub dropped: Vec<(String, String)>,
    /// `beta_MC = slope * beta_LF + intercept`.
    pub fit: TrendFit,
    pub correlation: Option<f64>,
}

/// Fits the flux and market-cap trend of every unit, then regresses the
/// market-cap slopes on the flux slopes.
pub fn trend_regression(
    units: &[String],
    marketcap: &MarketCapPanel,
    flux: &FluxPanel,
    windows: &TrendWindows,
) -> Result<TrendRegression, TrendError> {
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    let unique: BTreeSet<&String> = units.iter().collect();
    for unit in unique {
        let Some(series) = flux.series.get(unit) else {
            dropped.push((unit.clone(), "no flux series".to_string()));
            continue;
        };
        let Some(mc) = marketcap.get(unit) else {
            dropped.push((unit.clone(), "no market cap".to_string()));
            continue;
        };
        let lf = match ols_trend(&series.points(&windows.flux)) {
            Ok(f) => f,
            Err(e) => {
                dropped.push((unit.clone(), format!("flux trend: {e}")));
                continue;
            }
        };
        let mc_pts: Vec<(f64, f64)> = mc
            .range(windows.marketcap.clone())
            .map(|(&y, &v)| (y as f64, v))
            .collect();
        let mcf = match ols(&mc_pts) {
            Ok(f) => f,
            Err(e) => {
                dropped.push((unit.clone(), format!("market cap trend: {e}")));
                continue;
            }
        };
        rows.push(UnitTrend {
            unit: unit.clone(),
            flux: lf,
            marketcap: mcf,
        });
    }
    if rows.len() < 2 {
        return Err(TrendError::TooFewUnits {
            needed: 2,
            got: rows.len(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.flux.slope).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.marketcap.slope).collect();
    let pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    let fit = ols(&pts)?;
    Ok(TrendRegression {
        correlation: pearson(&xs, &ys),
        rows,
        dropped,
        fit,
    })
}

/// `unit,beta_LF,se_LF,beta_MC,se_MC`.
pub fn write_unit_trends_csv<W: Write>(out: W, reg: &TrendRegression) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit", "beta_LF", "se_LF", "beta_MC", "se_MC"])?;
    for r in &reg.rows {
        w.write_record([
            r.unit.clone(),
            format!("{:.9}", r.flux.slope),
            format!("{:.9}", r.flux.slope_se),
            format!("{:.9}", r.marketcap.slope),
            format!("{:.9}", r.marketcap.slope_se),
        ])?;
    }
    w.flush()
}

/// Distinct members who held a job at any firm of each unit.
pub fn unit_members(
    spells: &[EmploymentSpell],
    grouping: &BTreeMap<String, String>,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for s in spells {
        if let Some(u) = grouping.get(&s.firm) {
            out.entry(u.clone()).or_default().insert(s.member_id.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillRow {
    pub skill: String,
    /// Share of top-quartile members holding the skill.
    pub p_top: f64,
    pub p_bottom: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuartileSkillReport {
    pub top_units: Vec<String>,
    pub bottom_units: Vec<String>,
    pub rows: Vec<SkillRow>,
}

/// Ranks units by `metric`, pools the skills of members in the top and
/// bottom quartiles (`floor(n/4)` units each), and scores each skill with
/// the log-odds machinery, top against bottom. The prior mass is
/// `prior_fraction` times the pooled skill count.
pub fn quartile_skills(
    metric: &BTreeMap<String, f64>,
    members: &BTreeMap<String, BTreeSet<String>>,
    skills: &HashMap<String, Vec<String>>,
    prior_fraction: f64,
) -> Result<QuartileSkillReport, TrendError> {
    let n = metric.len();
    if n < 4 {
        return Err(TrendError::TooFewUnits { needed: 4, got: n });
    }
    let mut ranked: Vec<(&String, f64)> = metric.iter().map(|(u, &v)| (u, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let q = n / 4;
    let top: Vec<String> = ranked[..q].iter().map(|(u, _)| (*u).clone()).collect();
    let bottom: Vec<String> = ranked[n - q..].iter().map(|(u, _)| (*u).clone()).collect();

    let pool = |units: &[String]| -> (usize, LabelCounts) {
        let people: BTreeSet<&String> = units
            .iter()
            .filter_map(|u| members.get(u))
            .flatten()
            .collect();
        let mut counts = LabelCounts::new();
        for m in &people {
            if let Some(list) = skills.get(m.as_str()) {
                let distinct: BTreeSet<&String> = list.iter().collect();
                for s in distinct {
                    *counts.entry(s.clone()).or_default() += 1;
                }
            }
        }
        (people.len(), counts)
    };
    let (n_top, top_counts) = pool(&top);
    let (n_bottom, bottom_counts) = pool(&bottom);

    let mut background = top_counts.clone();
    for (s, &c) in &bottom_counts {
        *background.entry(s.clone()).or_default() += c;
    }
    let strength = prior_fraction * background.values().sum::<u64>() as f64;
    let prior = background_prior(&background, strength)?;
    let scores = compare_corpora(&top_counts, &bottom_counts, &prior)?;
    let frac = |c: Option<&u64>, n: usize| {
        if n == 0 {
            0.0
        } else {
            c.copied().unwrap_or(0) as f64 / n as f64
        }
    };
    let rows = scores
        .into_iter()
        .map(|s| SkillRow {
            p_top: frac(top_counts.get(&s.label), n_top),
            p_bottom: frac(bottom_counts.get(&s.label), n_bottom),
            z: s.z,
            skill: s.label,
        })
        .collect();
    Ok(QuartileSkillReport {
        top_units: top,
        bottom_units: bottom,
        rows,
    })
}

/// `skill,p_top,p_bottom,z`, sorted by z descending.
pub fn write_skill_report_csv<W: Write>(out: W, report: &QuartileSkillReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["skill", "p_top", "p_bottom", "z"])?;
    for r in &report.rows {
        w.write_record([
            r.skill.clone(),
            format!("{:.9}", r.p_top),
            format!("{:.9}", r.p_bottom),
            format!("{:.9}", r.z),
        ])?;
    }
    w.flush()
}
