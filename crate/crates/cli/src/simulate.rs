//! `lue simulate`: IMSE sweeps over experiment grids.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use lue_core::simulation::{
    compute_imse, config_hash, AllocationPlan, ExperimentConfig, NetworkSpec, OutcomeDistribution,
};

use crate::output::{metadata_lines, parse_json};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub sweeps: Vec<Sweep>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Output file stem.
    pub name: String,
    /// An experiment config; its `seed` may be omitted when `--seed` is given.
    pub base: serde_json::Value,
    #[serde(default)]
    pub grid: Grid,
    /// Settings with at most this many units enumerate all allocations.
    #[serde(default)]
    pub exact_max_n: Option<usize>,
}

/// Axes are expanded as a Cartesian product, outermost first in field order.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub p_edge: Vec<f64>,
    #[serde(default)]
    pub mu1: Vec<f64>,
    #[serde(default)]
    pub delta1: Vec<f64>,
    #[serde(default)]
    pub eta1: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    N(usize),
    K(usize),
    PEdge(f64),
    Mu1(f64),
    Delta1(f64),
    Eta1(f64),
}

impl Axis {
    fn label(self) -> String {
        match self {
            Axis::N(v) => format!("n={v}"),
            Axis::K(v) => format!("k={v}"),
            Axis::PEdge(v) => format!("p_edge={v}"),
            Axis::Mu1(v) => format!("mu1={v}"),
            Axis::Delta1(v) => format!("delta1={v}"),
            Axis::Eta1(v) => format!("eta1={v}"),
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig) -> Result<()> {
        let bad = |what: &str| anyhow!("grid axis {} does not apply to {what}", self.label());
        match (self, &mut cfg.network, &mut cfg.distribution) {
            (Axis::N(v), NetworkSpec::KRegular { n, .. } | NetworkSpec::ErdosRenyi { n, .. }, _) => *n = v,
            (Axis::K(v), NetworkSpec::KRegular { k, .. }, _) => *k = v,
            (Axis::PEdge(v), NetworkSpec::ErdosRenyi { p_edge, .. }, _) => *p_edge = v,
            (Axis::N(_) | Axis::K(_) | Axis::PEdge(_), _, _) => return Err(bad("this network")),
            (
                Axis::Mu1(v),
                _,
                OutcomeDistribution::Independent { mu1 } | OutcomeDistribution::Interaction { mu1, .. },
            ) => *mu1 = v,
            (Axis::Delta1(v), _, OutcomeDistribution::Interaction { delta1, .. }) => *delta1 = v,
            (Axis::Eta1(v), _, OutcomeDistribution::Dilated { eta1 }) => *eta1 = v,
            _ => return Err(bad("this outcome distribution")),
        }
        Ok(())
    }
}

impl Grid {
    fn axes(&self) -> Vec<Vec<Axis>> {
        let mut axes: Vec<Vec<Axis>> = vec![
            self.n.iter().map(|&v| Axis::N(v)).collect(),
            self.k.iter().map(|&v| Axis::K(v)).collect(),
            self.p_edge.iter().map(|&v| Axis::PEdge(v)).collect(),
            self.mu1.iter().map(|&v| Axis::Mu1(v)).collect(),
            self.delta1.iter().map(|&v| Axis::Delta1(v)).collect(),
            self.eta1.iter().map(|&v| Axis::Eta1(v)).collect(),
        ];
        axes.retain(|a| !a.is_empty());
        axes
    }

    /// Every grid point, in row-major order.
    fn points(&self) -> Vec<Vec<Axis>> {
        let mut out: Vec<Vec<Axis>> = vec![Vec::new()];
        for axis in self.axes() {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// A grid point ready to run.
pub struct Setting {
    pub label: String,
    pub config: ExperimentConfig,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Expands one sweep into its settings.
pub fn expand(sweep: &Sweep, index: usize, seed: Option<u64>, base_dir: &Path) -> Result<Vec<Setting>> {
    if !valid_name(&sweep.name) {
        bail!("sweeps[{index}].name `{}` must use only letters, digits, `-` and `_`", sweep.name);
    }
    let mut base = sweep.base.clone();
    if let Some(seed) = seed {
        base.as_object_mut()
            .ok_or_else(|| anyhow!("sweeps[{index}].base must be an object"))?
            .insert("seed".into(), seed.into());
    }
    let base: ExperimentConfig = serde_path_to_error::deserialize(&base)
        .map_err(|e| anyhow!("schema error at sweeps[{index}].base.{}: {}", e.path(), e.inner()))?;
    let mut base = base;
    if let NetworkSpec::EdgeList { path } = &mut base.network {
        if path.is_relative() {
            *path = base_dir.join(&*path);
        }
    }
    let mut settings = Vec::new();
    for point in sweep.grid.points() {
        let mut cfg = base.clone();
        for axis in &point {
            axis.apply(&mut cfg).with_context(|| format!("sweeps[{index}].grid"))?;
        }
        if let (Some(max), Some(n)) = (sweep.exact_max_n, cfg.n()) {
            if n <= max {
                cfg.allocation = AllocationPlan::Exhaustive;
            }
        }
        let label = if point.is_empty() {
            "base".to_string()
        } else {
            point.iter().map(|a| a.label()).collect::<Vec<_>>().join(" ")
        };
        settings.push(Setting { label, config: cfg });
    }
    Ok(settings)
}

pub struct SweepResult {
    pub path: PathBuf,
    pub contents: String,
    pub failures: usize,
}

/// Runs every setting of one sweep; failed settings are recorded in the
/// output and counted.
pub fn run_sweep(sweep: &Sweep, settings: &[Setting], seed: Option<u64>, out_dir: &Path) -> Result<SweepResult> {
    let hash = config_hash(&serde_json::json!({ "sweep": sweep, "seed": seed }));
    let mut head = metadata_lines(&hash, settings.first().map(|s| s.config.seed));
    head.push(format!("# sweep {} with {} settings", sweep.name, settings.len()));
    let mut body = csv::Writer::from_writer(Vec::new());
    let mut wrote_rows = false;
    let mut failures = 0;
    for (i, setting) in settings.iter().enumerate() {
        let cfg = &setting.config;
        let mode = match cfg.allocation {
            AllocationPlan::Exhaustive => "exact enumeration".to_string(),
            AllocationPlan::Sample { count } => {
                format!("{count} sampled allocations per draw, shared by all estimators")
            }
        };
        match compute_imse(cfg) {
            Ok(report) => {
                log::info!("{} [{}] finished in {:.2}s", sweep.name, setting.label, report.runtime_secs);
                let mut line = format!("# setting {i} {}: {} ({mode})", setting.label, report.config_hash);
                if report.excluded_units > 0 {
                    line += &format!(", excluded for in-degree 0: {}", report.excluded_units);
                }
                head.push(line);
                for row in report.rows() {
                    body.serialize(row)?;
                    wrote_rows = true;
                }
            }
            Err(e) => {
                failures += 1;
                log::error!("{} [{}] failed: {e}", sweep.name, setting.label);
                head.push(format!("# setting {i} {}: {} FAILED: {e}", setting.label, cfg.hash()));
            }
        }
    }
    let mut table = String::from_utf8(body.into_inner()?)?;
    if !wrote_rows {
        table = "estimator,n,k_or_p,distribution,mu1_or_eta1,delta1,imse,bias2,variance,se,seed\n".into();
    }
    Ok(SweepResult {
        path: out_dir.join(format!("{}.csv", sweep.name)),
        contents: format!("{}\n{}", head.join("\n"), table),
        failures,
    })
}

/// Parses a sweep file.
pub fn load(text: &str) -> Result<SweepFile> {
    let (file, _hash): (SweepFile, String) = parse_json(text)?;
    if file.sweeps.is_empty() {
        bail!("schema error at sweeps: no sweeps given");
    }
    Ok(file)
}
