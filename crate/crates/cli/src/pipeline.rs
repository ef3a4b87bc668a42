//! Pipeline stages. Each stage reads only files on disk, writes its
//! artifacts into the output directory, and records a manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use laborflow::features::{diagnose, write_diagnostics_csv, Attribute, DiagnosticsOptions, LabelTable};
use laborflow::flows::{aggregate_flux, normalize_flux, write_marginals_csv, write_normalized_csv, write_raw_csv};
use laborflow::graph::{build_network_with_report, extract_core};
use laborflow::hierarchy::{detect_hierarchy, HierarchyOptions};
use laborflow::overrep::{prune_tree, save_list_json, score_tree, write_scores_csv, NodeZ, PruneConfig};
use laborflow::records::{self, EmploymentSpell, IngestReport, Profile};
use laborflow::seed::derive_seed;
use laborflow::synth::{self, SynthConfig};
use laborflow::trends::{
    aggregate_marketcap, flux_series, quartile_skills, trend_regression, unit_members, write_skill_report_csv,
    write_unit_trends_csv, CareerData, FluxFilters, TrendWindows,
};
use laborflow::{CommunityTree, LaborFlowNetwork, MonthWindow};
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::error::{other, CliError};
use crate::manifest::Manifest;

pub const NETWORK_FILE: &str = "network.csv";
pub const CORE_FILE: &str = "core.csv";
pub const BUILD_REPORT_FILE: &str = "build_report.json";
pub const TREE_FILE: &str = "tree.json";
pub const TREE_PATHS_FILE: &str = "tree_paths.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const NULL_MODEL_FILE: &str = "null_model.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const SAVE_LIST_FILE: &str = "save_list.json";
pub const FLUX_REPORT_FILE: &str = "flux_report.json";
pub const FLUX_SERIES_FILE: &str = "flux_series.csv";
pub const UNIT_TRENDS_FILE: &str = "unit_trends.csv";
pub const TREND_SUMMARY_FILE: &str = "trend_summary.json";
pub const SKILL_REPORT_FILE: &str = "skill_report.csv";

/// Stream indices under the top-level seed.
const SYNTH_STREAM: u64 = 0;
const DETECT_STREAM: u64 = 1;
const DIAGNOSE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Build,
    Detect,
    Diagnose,
    Overrep,
    Prune,
    Flux,
    Trends,
}

impl Stage {
    pub const PIPELINE: [Stage; 7] = [
        Stage::Build,
        Stage::Detect,
        Stage::Diagnose,
        Stage::Overrep,
        Stage::Prune,
        Stage::Flux,
        Stage::Trends,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Build => "build",
            Stage::Detect => "detect",
            Stage::Diagnose => "diagnose",
            Stage::Overrep => "overrep",
            Stage::Prune => "prune",
            Stage::Flux => "flux",
            Stage::Trends => "trends",
        }
    }

    /// Config keys that influence the stage's outputs.
    fn parameters(self) -> &'static [&'static str] {
        match self {
            Stage::Synth => &[
                "seed",
                "synth_preset",
                "synth_members_per_firm",
                "synth_alignment",
                "synth_move_prob",
            ],
            Stage::Build => &["transitions", "window_start", "window_end", "min_weight", "core_k"],
            Stage::Detect => &["seed", "min_size", "modularity"],
            Stage::Diagnose => &["seed", "spells", "profiles", "population", "n_rep"],
            Stage::Overrep => &["spells", "profiles", "prior_fraction"],
            Stage::Prune => &["theta_keep", "theta_break", "prune_mode", "prune_combine"],
            Stage::Flux => &[
                "spells",
                "profiles",
                "flux_network",
                "flux_level",
                "flux_include_within",
            ],
            Stage::Trends => &[
                "transitions",
                "spells",
                "profiles",
                "marketcap",
                "roster",
                "trend_level",
                "flux_start",
                "flux_end",
                "mc_start",
                "mc_end",
                "require_degree",
                "first_jobs_as_influx",
                "last_jobs_as_outflux",
                "smoothing",
                "quartile_metric",
                "prior_fraction",
            ],
        }
    }
}

/// Files a stage read and wrote.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

pub struct Runner<'a> {
    cfg: &'a Config,
    out: PathBuf,
    seed: u64,
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    require(path)?;
    Ok(BufReader::new(File::open(path)?))
}

fn warn_rejections(path: &Path, report: &IngestReport) {
    if !report.rejected.is_empty() {
        eprintln!(
            "warning: {}: {} row(s) rejected, first at line {}: {}",
            path.display(),
            report.rejected.len(),
            report.rejected[0].line,
            report.rejected[0].reason
        );
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a Config) -> Result<Self, CliError> {
        cfg.validate()?;
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            cfg,
            out,
            seed: cfg.parse("seed")?,
        })
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn run(&self, stage: Stage) -> Result<(), CliError> {
        let io = match stage {
            Stage::Synth => self.synth()?,
            Stage::Build => self.build()?,
            Stage::Detect => self.detect()?,
            Stage::Diagnose => self.diagnose()?,
            Stage::Overrep => self.overrep()?,
            Stage::Prune => self.prune()?,
            Stage::Flux => self.flux()?,
            Stage::Trends => self.trends()?,
        };
        let manifest = Manifest::new(
            stage.name(),
            self.seed,
            self.cfg.snapshot(stage.parameters()),
            &io.inputs,
            &io.outputs,
        )?;
        manifest.write(&self.artifact(&format!("manifest_{}.json", stage.name())))?;
        Ok(())
    }

    /// Runs synth when no transitions file is configured, then every stage.
    pub fn run_all(&self) -> Result<(), (Stage, CliError)> {
        if !self.cfg.is_set("transitions") {
            self.run(Stage::Synth).map_err(|e| (Stage::Synth, e))?;
        }
        for stage in Stage::PIPELINE {
            self.run(stage).map_err(|e| (stage, e))?;
        }
        Ok(())
    }

    fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let seed = derive_seed(self.seed, SYNTH_STREAM);
        let mut sc = match self.cfg.raw("synth_preset") {
            "coupled" => SynthConfig::coupled(seed),
            _ => SynthConfig::benchmark(seed),
        };
        if let Some(m) = self.cfg.optional("synth_members_per_firm")? {
            sc.members_per_firm = m;
        }
        if let Some(a) = self.cfg.optional("synth_alignment")? {
            sc.industry_alignment = a;
            sc.region_alignment = a;
        }
        if let Some(p) = self.cfg.optional("synth_move_prob")? {
            sc.move_prob = p;
        }
        sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(sc)
    }

    fn synth(&self) -> Result<Io, CliError> {
        let sc = self.synth_config()?;
        let data = synth::generate(&sc).map_err(|e| CliError::Config(e.to_string()))?;
        let files = data.write_all(&self.out)?;
        let config_path = self.artifact("synth_config.json");
        write_json(&config_path, &sc)?;
        let mut outputs: Vec<PathBuf> = files.iter().map(|f| self.artifact(f)).collect();
        outputs.push(config_path);
        Ok(Io {
            inputs: Vec::new(),
            outputs,
        })
    }

    fn build(&self) -> Result<Io, CliError> {
        let path = self.cfg.input("transitions", synth::TRANSITIONS_FILE);
        let (recs, ingest) = records::read_transitions(open(&path)?)?;
        warn_rejections(&path, &ingest);
        let window = MonthWindow::new(self.cfg.month("window_start")?, self.cfg.month("window_end")?)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let (net, report) = build_network_with_report(&recs, window);
        let network = self.artifact(NETWORK_FILE);
        net.write_edge_list(BufWriter::new(File::create(&network)?))?;
        let core = extract_core(&net, self.cfg.positive("min_weight")?, self.cfg.parse("core_k")?)?;
        let core_path = self.artifact(CORE_FILE);
        core.write_edge_list(BufWriter::new(File::create(&core_path)?))?;
        let summary = |n: &LaborFlowNetwork| {
            json!({
                "firms": n.firm_count(),
                "edges": n.edge_count(),
                "total_weight": format!("{:.9}", n.total_weight()),
            })
        };
        let report_path = self.artifact(BUILD_REPORT_FILE);
        write_json(
            &report_path,
            &json!({
                "ingest": ingest,
                "events": report.events,
                "outside_window": report.outside_window,
                "self_loops": report.self_loops,
                "network": summary(&net),
                "core": summary(&core),
            }),
        )?;
        Ok(Io {
            inputs: vec![path],
            outputs: vec![network, core_path, report_path],
        })
    }

    fn read_network(&self, name: &str) -> Result<(PathBuf, LaborFlowNetwork), CliError> {
        let path = self.artifact(name);
        let net = LaborFlowNetwork::read_edge_list(open(&path)?)?;
        Ok((path, net))
    }

    fn read_tree(&self) -> Result<(PathBuf, CommunityTree), CliError> {
        let path = self.artifact(TREE_FILE);
        require(&path)?;
        let text = std::fs::read_to_string(&path)?;
        let tree = CommunityTree::from_json(&text).map_err(|e| CliError::Schema(e.to_string()))?;
        Ok((path, tree))
    }

    fn read_people(&self) -> Result<(Vec<PathBuf>, Vec<EmploymentSpell>, Vec<Profile>), CliError> {
        let sp = self.cfg.input("spells", synth::SPELLS_FILE);
        let pp = self.cfg.input("profiles", synth::PROFILES_FILE);
        let (spells, r1) = records::read_spells(open(&sp)?)?;
        warn_rejections(&sp, &r1);
        let (profiles, r2) = records::read_profiles(open(&pp)?)?;
        warn_rejections(&pp, &r2);
        Ok((vec![sp, pp], spells, profiles))
    }

    fn detect(&self) -> Result<Io, CliError> {
        let (input, net) = self.read_network(CORE_FILE)?;
        let opts = HierarchyOptions {
            min_size: self.cfg.parse("min_size")?,
            seed: derive_seed(self.seed, DETECT_STREAM),
            kind: self.cfg.modularity()?,
        };
        let tree = detect_hierarchy(&net, &opts);
        let tree_path = self.artifact(TREE_FILE);
        std::fs::write(&tree_path, tree.to_json() + "\n")?;
        let paths = self.artifact(TREE_PATHS_FILE);
        tree.write_paths_csv(BufWriter::new(File::create(&paths)?))?;
        Ok(Io {
            inputs: vec![input],
            outputs: vec![tree_path, paths],
        })
    }

    fn diagnose(&self) -> Result<Io, CliError> {
        let (tree_path, tree) = self.read_tree()?;
        let (mut inputs, spells, profiles) = self.read_people()?;
        let ind = LabelTable::from_employment(&spells, &profiles, Attribute::Industry);
        let reg = LabelTable::from_employment(&spells, &profiles, Attribute::Region);
        let opts = DiagnosticsOptions {
            unit: self.cfg.population()?,
            seed: derive_seed(self.seed, DIAGNOSE_STREAM),
            n_rep: self.cfg.parse("n_rep")?,
        };
        let (diags, null) = diagnose(&tree, &ind, &reg, &opts).map_err(other)?;
        let diag_path = self.artifact(DIAGNOSTICS_FILE);
        write_diagnostics_csv(BufWriter::new(File::create(&diag_path)?), &diags)?;
        let null_path = self.artifact(NULL_MODEL_FILE);
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&null_path)?));
        w.write_record([
            "level",
            "observed_ind",
            "null_mean_ind",
            "null_sd_ind",
            "delta_ind",
            "observed_reg",
            "null_mean_reg",
            "null_sd_reg",
            "delta_reg",
        ])?;
        for n in &null {
            let f = |x: f64| format!("{x:.9}");
            w.write_record([
                n.level.to_string(),
                f(n.observed_industry),
                f(n.null_mean_industry),
                f(n.null_sd_industry),
                f(n.delta_industry),
                f(n.observed_region),
                f(n.null_mean_region),
                f(n.null_sd_region),
                f(n.delta_region),
            ])?;
        }
        w.flush()?;
        inputs.insert(0, tree_path);
        Ok(Io {
            inputs,
            outputs: vec![diag_path, null_path],
        })
    }

    fn overrep(&self) -> Result<Io, CliError> {
        let (tree_path, tree) = self.read_tree()?;
        let (mut inputs, spells, profiles) = self.read_people()?;
        let tables: Vec<(Attribute, LabelTable)> = [Attribute::Industry, Attribute::Region, Attribute::Skill]
            .into_iter()
            .map(|a| (a, LabelTable::from_employment(&spells, &profiles, a)))
            .collect();
        let refs: Vec<(Attribute, &LabelTable)> = tables.iter().map(|(a, t)| (*a, t)).collect();
        let scores = score_tree(&tree, &refs, self.cfg.positive("prior_fraction")?).map_err(other)?;
        let path = self.artifact(SCORES_FILE);
        write_scores_csv(BufWriter::new(File::create(&path)?), &tree, &scores)?;
        inputs.insert(0, tree_path);
        Ok(Io {
            inputs,
            outputs: vec![path],
        })
    }

    fn prune(&self) -> Result<Io, CliError> {
        let (tree_path, tree) = self.read_tree()?;
        let scores_path = self.artifact(SCORES_FILE);
        let mut rdr = csv::Reader::from_reader(open(&scores_path)?);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["cluster_id", "label_type", "label", "delta", "variance", "z"] {
            return Err(CliError::Schema(format!(
                "{}: unexpected header {header:?}",
                scores_path.display()
            )));
        }
        let mut z = vec![NodeZ::UNSCORED; tree.len()];
        for row in rdr.records() {
            let row = row?;
            let node = tree
                .find(&row[0])
                .ok_or_else(|| CliError::Schema(format!("scores refer to unknown cluster `{}`", &row[0])))?;
            let value: f64 = row[5]
                .parse()
                .map_err(|_| CliError::Schema(format!("bad z value `{}`", &row[5])))?;
            let slot = match &row[1] {
                "industry" => &mut z[node].industry,
                "region" => &mut z[node].region,
                _ => continue,
            };
            *slot = slot.max(value);
        }
        let cfg = PruneConfig {
            theta_keep: self.cfg.positive("theta_keep")?,
            theta_break: self.cfg.positive("theta_break")?,
            mode: self.cfg.prune_mode()?,
            combine: self.cfg.prune_combine()?,
        };
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        let saved = prune_tree(&tree, &z, &cfg);
        let path = self.artifact(SAVE_LIST_FILE);
        std::fs::write(&path, save_list_json(&tree, &saved) + "\n")?;
        Ok(Io {
            inputs: vec![tree_path, scores_path],
            outputs: vec![path],
        })
    }

    fn level_grouping(&self, tree: &CommunityTree, key: &str) -> Result<BTreeMap<String, String>, CliError> {
        let level: usize = self.cfg.parse(key)?;
        let labels = tree
            .level_labels(level)
            .map_err(|e| CliError::Config(format!("{key}: {e}")))?;
        Ok(labels
            .into_iter()
            .map(|(f, idx)| (f.to_string(), tree.node(idx).id.clone()))
            .collect())
    }

    fn flux(&self) -> Result<Io, CliError> {
        let net_file = match self.cfg.raw("flux_network") {
            "core" => CORE_FILE,
            _ => NETWORK_FILE,
        };
        let (net_path, net) = self.read_network(net_file)?;
        let (tree_path, tree) = self.read_tree()?;
        let (people, spells, profiles) = self.read_people()?;
        let include_within: bool = self.cfg.parse("flux_include_within")?;

        let groupings: Vec<(&str, BTreeMap<String, String>)> = vec![
            (
                "industry",
                LabelTable::from_employment(&spells, &profiles, Attribute::Industry).canonical_labels(),
            ),
            (
                "region",
                LabelTable::from_employment(&spells, &profiles, Attribute::Region).canonical_labels(),
            ),
            ("cluster", self.level_grouping(&tree, "flux_level")?),
        ];
        let mut outputs = Vec::new();
        let mut report = BTreeMap::new();
        for (name, grouping) in groupings {
            let agg = aggregate_flux(&net, &grouping, include_within);
            let entry = match normalize_flux(agg.groups, agg.w) {
                Ok(m) => {
                    for (suffix, writer) in [
                        ("raw", write_raw_csv as fn(_, &_) -> _),
                        ("normalized", write_normalized_csv),
                        ("marginals", write_marginals_csv),
                    ] {
                        let path = self.artifact(&format!("flux_{name}_{suffix}.csv"));
                        writer(BufWriter::new(File::create(&path)?), &m)?;
                        outputs.push(path);
                    }
                    json!({
                        "groups": m.groups.len(),
                        "ungrouped_firms": agg.ungrouped_firms,
                        "undefined_columns": m.undefined_columns(),
                    })
                }
                Err(e) => json!({ "skipped": e.to_string(), "ungrouped_firms": agg.ungrouped_firms }),
            };
            report.insert(name, entry);
        }
        let report_path = self.artifact(FLUX_REPORT_FILE);
        write_json(&report_path, &report)?;
        outputs.push(report_path);
        let mut inputs = vec![net_path, tree_path];
        inputs.extend(people);
        Ok(Io { inputs, outputs })
    }

    fn trends(&self) -> Result<Io, CliError> {
        let (tree_path, tree) = self.read_tree()?;
        let tp = self.cfg.input("transitions", synth::TRANSITIONS_FILE);
        let (transitions, r) = records::read_transitions(open(&tp)?)?;
        warn_rejections(&tp, &r);
        let (people, spells, profiles) = self.read_people()?;
        let mp = self.cfg.input("marketcap", synth::MARKETCAP_FILE);
        let (marketcap, r) = records::read_marketcap(open(&mp)?)?;
        warn_rejections(&mp, &r);
        let mut inputs = vec![tree_path, tp];
        inputs.extend(people);
        inputs.push(mp);

        let roster_path = self.cfg.input("roster", synth::ROSTER_FILE);
        let roster: Option<BTreeSet<String>> = if self.cfg.is_set("roster") || roster_path.is_file() {
            let (firms, r) = records::read_roster(open(&roster_path)?)?;
            warn_rejections(&roster_path, &r);
            inputs.push(roster_path);
            Some(firms.into_iter().collect())
        } else {
            None
        };

        let grouping = self.level_grouping(&tree, "trend_level")?;
        let windows = TrendWindows {
            marketcap: self.cfg.parse("mc_start")?..=self.cfg.parse("mc_end")?,
            flux: self.cfg.parse("flux_start")?..=self.cfg.parse("flux_end")?,
        };
        let filters = FluxFilters {
            require_degree: self.cfg.parse("require_degree")?,
            first_jobs_as_influx: self.cfg.parse("first_jobs_as_influx")?,
            last_jobs_as_outflux: self.cfg.parse("last_jobs_as_outflux")?,
            smoothing: self.cfg.parse("smoothing")?,
        };
        let data = CareerData {
            transitions: &transitions,
            spells: &spells,
            profiles: &profiles,
        };
        let first = *windows.flux.start().min(windows.marketcap.start());
        let last = *windows.flux.end().max(windows.marketcap.end());
        let panel = flux_series(&data, &grouping, first..=last, &filters);
        let mc = aggregate_marketcap(&marketcap, &grouping, roster.as_ref());
        let units: Vec<String> = grouping.values().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let reg = trend_regression(&units, &mc, &panel, &windows).map_err(other)?;

        let series_path = self.artifact(FLUX_SERIES_FILE);
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&series_path)?));
        w.write_record(["unit", "year", "influx", "outflux", "log_ratio"])?;
        for s in panel.series.values() {
            for (k, y) in s.years.iter().enumerate() {
                w.write_record([
                    s.unit.clone(),
                    y.to_string(),
                    format!("{:.9}", s.influx[k]),
                    format!("{:.9}", s.outflux[k]),
                    s.log_ratio[k].map(|v| format!("{v:.9}")).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        let trends_path = self.artifact(UNIT_TRENDS_FILE);
        write_unit_trends_csv(BufWriter::new(File::create(&trends_path)?), &reg)?;

        let metric: BTreeMap<String, f64> = match self.cfg.raw("quartile_metric") {
            "trend" => reg.rows.iter().map(|r| (r.unit.clone(), r.flux.slope)).collect(),
            _ => panel
                .series
                .iter()
                .filter_map(|(u, s)| s.total_log_ratio(&windows.flux).map(|v| (u.clone(), v)))
                .collect(),
        };
        let members = unit_members(&spells, &grouping);
        let skills: HashMap<String, Vec<String>> = profiles
            .iter()
            .map(|p| (p.member_id.clone(), p.skills.clone()))
            .collect();
        let mut outputs = vec![series_path, trends_path];
        let skill_status = match quartile_skills(&metric, &members, &skills, self.cfg.positive("prior_fraction")?) {
            Ok(report) => {
                let path = self.artifact(SKILL_REPORT_FILE);
                write_skill_report_csv(BufWriter::new(File::create(&path)?), &report)?;
                outputs.push(path);
                json!({ "top_units": report.top_units, "bottom_units": report.bottom_units })
            }
            Err(e) => json!({ "skipped": e.to_string() }),
        };
        let f = |x: f64| format!("{x:.9}");
        let summary_path = self.artifact(TREND_SUMMARY_FILE);
        write_json(
            &summary_path,
            &json!({
                "slope": f(reg.fit.slope),
                "intercept": f(reg.fit.intercept),
                "slope_se": f(reg.fit.slope_se),
                "units": reg.fit.n,
                "correlation": reg.correlation.map(f),
                "dropped": reg.dropped.iter().map(|(u, why)| json!({"unit": u, "reason": why})).collect::<Vec<_>>(),
                "excluded_without_flux": panel.excluded,
                "skill_report": skill_status,
            }),
        )?;
        outputs.push(summary_path);
        Ok(Io { inputs, outputs })
    }
}
