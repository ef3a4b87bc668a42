//! Group-level flux matrices and their normalization against the
//! independent-marginals null model `E(w_ij) = S_out_i * S_in_j / sum_k S_in_k`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::graph::LaborFlowNetwork;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("flux matrix is all zero")]
    AllZero,
    #[error("flux entry ({0}, {1}) is negative or not finite")]
    InvalidEntry(usize, usize),
    #[error("flux matrix must be square with one row per group")]
    Shape,
}

/// Raw group-to-group flux.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxAggregate {
    pub groups: Vec<String>,
    pub w: Array2<f64>,
    /// Firms of the network with no group; their edges are left out.
    pub ungrouped_firms: usize,
}

/// Sums edge weights between groups. Groups are ordered by name; the
/// diagonal holds within-group flow when `include_within` is set and is
/// zero otherwise.
pub fn aggregate_flux(
    net: &LaborFlowNetwork,
    group_of: &BTreeMap<String, String>,
    include_within: bool,
) -> FluxAggregate {
    let groups: Vec<String> = net
        .firms()
        .iter()
        .filter_map(|f| group_of.get(f).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let gix: BTreeMap<&str, usize> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let firm_group: Vec<Option<usize>> = net
        .firms()
        .iter()
        .map(|f| group_of.get(f).map(|g| gix[g.as_str()]))
        .collect();
    let k = groups.len();
    let mut w = Array2::zeros((k, k));
    for (i, j, weight) in net.edge_indices() {
        if let (Some(a), Some(b)) = (firm_group[i], firm_group[j]) {
            if a != b || include_within {
                w[[a, b]] += weight;
            }
        }
    }
    FluxAggregate {
        ungrouped_firms: firm_group.iter().filter(|g| g.is_none()).count(),
        groups,
        w,
    }
}

/// Normalized flux. `t[[i, j]]` is `None` where the expected flux is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMatrix {
    pub groups: Vec<String>,
    pub w: Array2<f64>,
    pub expected: Array2<f64>,
    pub t: Array2<Option<f64>>,
    pub s_out: Vec<f64>,
    pub s_in: Vec<f64>,
}

pub fn normalize_flux(groups: Vec<String>, w: Array2<f64>) -> Result<FluxMatrix, FlowError> {
    let (rows, cols) = w.dim();
    if rows != cols || rows != groups.len() {
        return Err(FlowError::Shape);
    }
    for ((i, j), &x) in w.indexed_iter() {
        if !(x.is_finite() && x >= 0.0) {
            return Err(FlowError::InvalidEntry(i, j));
        }
    }
    let s_out: Vec<f64> = w.rows().into_iter().map(|r| r.sum()).collect();
    let s_in: Vec<f64> = w.columns().into_iter().map(|c| c.sum()).collect();
    let total: f64 = s_in.iter().sum();
    if total <= 0.0 {
        return Err(FlowError::AllZero);
    }
    let expected = Array2::from_shape_fn((rows, cols), |(i, j)| s_out[i] * s_in[j] / total);
    let t = Array2::from_shape_fn((rows, cols), |(i, j)| {
        let e = expected[[i, j]];
        (e > 0.0).then(|| w[[i, j]] / e)
    });
    Ok(FluxMatrix {
        groups,
        w,
        expected,
        t,
        s_out,
        s_in,
    })
}

impl FluxMatrix {
    /// Groups whose influx is zero; their T column is undefined.
    pub fn undefined_columns(&self) -> Vec<&str> {
        self.s_in
            .iter()
            .zip(&self.groups)
            .filter(|(&s, _)| s == 0.0)
            .map(|(_, g)| g.as_str())
            .collect()
    }
}

fn write_matrix<W: Write, T>(
    out: W,
    groups: &[String],
    m: &Array2<T>,
    fmt: impl Fn(&T) -> String,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(groups.iter().cloned());
    w.write_record(&header)?;
    for (i, g) in groups.iter().enumerate() {
        let mut row = vec![g.clone()];
        row.extend(m.row(i).iter().map(&fmt));
        w.write_record(&row)?;
    }
    w.flush()
}

/// Raw flux with group labels as header row and column.
pub fn write_raw_csv<W: Write>(out: W, m: &FluxMatrix) -> std::io::Result<()> {
    write_matrix(out, &m.groups, &m.w, |x| format!("{x:.9}"))
}

/// Normalized flux; undefined entries are empty cells.
pub fn write_normalized_csv<W: Write>(out: W, m: &FluxMatrix) -> std::io::Result<()> {
    write_matrix(out, &m.groups, &m.t, |x| {
        x.map(|v| format!("{v:.9}")).unwrap_or_default()
    })
}

#[derive(Serialize)]
struct MarginalRow<'a> {
    group: &'a str,
    s_out: String,
    s_in: String,
}

/// `group,s_out,s_in`.
pub fn write_marginals_csv<W: Write>(out: W, m: &FluxMatrix) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, g) in m.groups.iter().enumerate() {
        w.serialize(MarginalRow {
            group: g,
            s_out: format!("{:.9}", m.s_out[i]),
            s_in: format!("{:.9}", m.s_in[i]),
        })?;
    }
    w.flush()
}
