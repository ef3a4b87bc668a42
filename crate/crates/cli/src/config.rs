//! Flat `key = value` configuration with typed accessors.
//!
//! Lines starting with `#` are comments. Every key has a default, unknown
//! keys are rejected, and `--set key=value` overrides are applied after the
//! file in command-line order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use laborflow::features::PopulationUnit;
use laborflow::hierarchy::ModularityKind;
use laborflow::overrep::{Combine, PruneMode};
use laborflow::Month;

use crate::error::CliError;

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "top-level seed; every stage derives its own stream from it"),
    ("out_dir", "laborflow-out", "directory for all artifacts"),
    ("transitions", "", "transitions CSV (default: <out_dir>/transitions.csv)"),
    ("spells", "", "employment spells CSV (default: <out_dir>/spells.csv)"),
    ("profiles", "", "member profiles CSV (default: <out_dir>/profiles.csv)"),
    ("marketcap", "", "market cap CSV (default: <out_dir>/marketcap.csv)"),
    ("roster", "", "firm roster CSV; empty uses <out_dir>/roster.csv if present"),
    ("window_start", "2000-01", "first month of the network window (inclusive)"),
    ("window_end", "2016-01", "end of the network window (exclusive)"),
    ("min_weight", "2", "edges lighter than this are dropped before the k-core"),
    ("core_k", "2", "k of the k-core"),
    ("min_size", "10", "communities at or below this size are not split"),
    ("modularity", "directed", "directed | symmetrized"),
    ("population", "employees", "diagnostics population unit: employees | firms"),
    ("n_rep", "100", "shuffle null replicates"),
    ("prior_fraction", "0.01", "prior mass as a fraction of the background label count"),
    ("theta_keep", "1.96", "prune keep threshold"),
    ("theta_break", "100", "prune break threshold"),
    ("prune_mode", "prose", "prose | literal"),
    ("prune_combine", "both", "both | either"),
    ("flux_network", "full", "network used for flux matrices: full | core"),
    ("flux_level", "1", "hierarchy level used as the cluster grouping for flux matrices"),
    ("flux_include_within", "true", "keep within-group flow on the diagonal"),
    ("trend_level", "1", "hierarchy level whose clusters are the trend units"),
    ("flux_start", "2010", "first year of the flux trend fit"),
    ("flux_end", "2014", "last year of the flux trend fit"),
    ("mc_start", "2011", "first year of the market cap trend fit"),
    ("mc_end", "2014", "last year of the market cap trend fit"),
    ("require_degree", "true", "count only members with a degree"),
    ("first_jobs_as_influx", "true", "a first job counts as influx"),
    ("last_jobs_as_outflux", "true", "an ended last job counts as outflux"),
    ("smoothing", "false", "use ln((in+1)/(out+1)) instead of leaving zero years missing"),
    ("quartile_metric", "total", "unit ranking for the skill report: total | trend"),
    ("synth_preset", "benchmark", "benchmark | coupled"),
    ("synth_members_per_firm", "", "override the preset's members per firm"),
    ("synth_alignment", "", "override the preset's industry and region alignment"),
    ("synth_move_prob", "", "override the preset's yearly move probability"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Config(format!("unknown key `{key}`"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", n + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e| bad(key, v, e))
    }

    /// `None` for an empty value.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn positive(&self, key: &str) -> Result<f64, CliError> {
        let x: f64 = self.parse(key)?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(bad(key, self.raw(key), "must be positive"))
        }
    }

    pub fn month(&self, key: &str) -> Result<Month, CliError> {
        self.parse(key)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out_dir"))
    }

    /// Configured path, or `<out_dir>/<default_name>` when unset.
    pub fn input(&self, key: &str, default_name: &str) -> PathBuf {
        match self.raw(key) {
            "" => self.out_dir().join(default_name),
            p => PathBuf::from(p),
        }
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    pub fn modularity(&self) -> Result<ModularityKind, CliError> {
        match self.raw("modularity") {
            "directed" => Ok(ModularityKind::Directed),
            "symmetrized" => Ok(ModularityKind::Symmetrized),
            v => Err(bad("modularity", v, "expected directed or symmetrized")),
        }
    }

    pub fn population(&self) -> Result<PopulationUnit, CliError> {
        match self.raw("population") {
            "employees" => Ok(PopulationUnit::Employees),
            "firms" => Ok(PopulationUnit::Firms),
            v => Err(bad("population", v, "expected employees or firms")),
        }
    }

    pub fn prune_mode(&self) -> Result<PruneMode, CliError> {
        match self.raw("prune_mode") {
            "prose" => Ok(PruneMode::Prose),
            "literal" => Ok(PruneMode::Literal),
            v => Err(bad("prune_mode", v, "expected prose or literal")),
        }
    }

    pub fn prune_combine(&self) -> Result<Combine, CliError> {
        match self.raw("prune_combine") {
            "both" => Ok(Combine::Both),
            "either" => Ok(Combine::Either),
            v => Err(bad("prune_combine", v, "expected both or either")),
        }
    }

    pub fn one_of(&self, key: &str, allowed: &[&str]) -> Result<String, CliError> {
        let v = self.raw(key);
        if allowed.contains(&v) {
            Ok(v.to_string())
        } else {
            Err(bad(key, v, format!("expected one of {}", allowed.join(", "))))
        }
    }

    /// Parses every typed key so that bad values fail before any stage runs.
    pub fn validate(&self) -> Result<(), CliError> {
        self.parse::<u64>("seed")?;
        let start = self.month("window_start")?;
        let end = self.month("window_end")?;
        if start >= end {
            return Err(CliError::Config("window_start must precede window_end".into()));
        }
        self.positive("min_weight")?;
        self.parse::<usize>("core_k")?;
        self.parse::<usize>("min_size")?;
        self.modularity()?;
        self.population()?;
        if self.parse::<usize>("n_rep")? == 0 {
            return Err(bad("n_rep", self.raw("n_rep"), "must be at least 1"));
        }
        self.positive("prior_fraction")?;
        self.positive("theta_keep")?;
        self.positive("theta_break")?;
        self.prune_mode()?;
        self.prune_combine()?;
        self.one_of("flux_network", &["full", "core"])?;
        self.parse::<usize>("flux_level")?;
        self.parse::<bool>("flux_include_within")?;
        self.parse::<usize>("trend_level")?;
        for (a, b) in [("flux_start", "flux_end"), ("mc_start", "mc_end")] {
            if self.parse::<i32>(a)? > self.parse::<i32>(b)? {
                return Err(CliError::Config(format!("{a} must not exceed {b}")));
            }
        }
        for key in ["require_degree", "first_jobs_as_influx", "last_jobs_as_outflux", "smoothing"] {
            self.parse::<bool>(key)?;
        }
        self.one_of("quartile_metric", &["total", "trend"])?;
        self.one_of("synth_preset", &["benchmark", "coupled"])?;
        self.optional::<usize>("synth_members_per_firm")?;
        self.optional::<f64>("synth_alignment")?;
        self.optional::<f64>("synth_move_prob")?;
        Ok(())
    }

    /// Values of `keys`, with paths reduced to their file names so that
    /// manifests do not depend on where the run happened.
    pub fn snapshot(&self, keys: &[&str]) -> BTreeMap<String, String> {
        keys.iter()
            .map(|&k| {
                let v = self.raw(k);
                let v = if is_path_key(k) && !v.is_empty() {
                    Path::new(v)
                        .file_name()
                        .map_or(v.to_string(), |n| n.to_string_lossy().into_owned())
                } else {
                    v.to_string()
                };
                (k.to_string(), v)
            })
            .collect()
    }
}

fn is_path_key(key: &str) -> bool {
    matches!(
        key,
        "out_dir" | "transitions" | "spells" | "profiles" | "marketcap" | "roster"
    )
}
