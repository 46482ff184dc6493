//! `lue weights`: MIV LUE weights for one exposure spec.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use lue_core::design::{bernoulli_distribution, ExposureDistribution};
use lue_core::exposure::{Exposure, ExposureSpec};
use lue_core::mivlue::{
    max_alpha3, six_term_alpha_from_weights, six_term_alpha_weights, six_term_support, solve_mivlue,
    solve_mivlue_limit, solve_mivlue_on_support, LimitOptions, MivlueSolution, PriorSpec, SixTerm,
};
use nalgebra::DMatrix;

use crate::output::{metadata_lines, parse_json};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsInput {
    pub spec: ExposureSpec,
    pub probabilities: ProbabilityInput,
    #[serde(default)]
    pub prior: Option<PriorInput>,
    /// Restricts the weights to these exposures.
    #[serde(default)]
    pub support: Option<Vec<Exposure>>,
    /// Follow the limiting prior sequence for `support` instead of a fixed prior.
    #[serde(default)]
    pub limit: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbabilityInput {
    Uniform,
    /// Network-interference exposures `(d, z)` of a unit with in-degree `m_1`.
    Bernoulli { p_treat: f64 },
    Table(Vec<ProbabilityEntry>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilityEntry {
    pub exposure: Exposure,
    pub probability: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorInput {
    Variances(Vec<f64>),
    Covariance(Vec<Vec<f64>>),
}

fn distribution(spec: &ExposureSpec, input: &ProbabilityInput) -> Result<ExposureDistribution> {
    Ok(match input {
        ProbabilityInput::Uniform => ExposureDistribution::uniform(spec),
        ProbabilityInput::Bernoulli { p_treat } => {
            let levels = spec.levels();
            if levels.len() != 2 || levels[1] != 1 {
                bail!("probabilities.bernoulli needs spec levels [d, 1], got {levels:?}");
            }
            bernoulli_distribution(levels[0], *p_treat).context("probabilities.bernoulli")?
        }
        ProbabilityInput::Table(entries) => {
            let pairs: Vec<(Exposure, f64)> = entries.iter().map(|e| (e.exposure.clone(), e.probability)).collect();
            ExposureDistribution::from_pairs(spec.clone(), &pairs).context("probabilities.table")?
        }
    })
}

fn prior(spec: &ExposureSpec, input: &PriorInput) -> Result<PriorSpec> {
    let dim = spec.num_parameters();
    match input {
        PriorInput::Variances(v) => {
            if v.len() != dim {
                bail!("prior.variances: expected {dim} entries, found {}", v.len());
            }
            PriorSpec::diagonal(v).context("prior.variances")
        }
        PriorInput::Covariance(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                bail!("prior.covariance: expected a {dim} x {dim} matrix");
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
            PriorSpec::dense(m).context("prior.covariance")
        }
    }
}

/// `(m, j)` when `support` is exactly a six-term exposure set.
fn six_term_indices(spec: &ExposureSpec, support: &[Exposure]) -> Option<(usize, usize)> {
    let levels = spec.levels();
    if levels.len() != 2 || support.len() != 6 {
        return None;
    }
    let given: BTreeSet<&Exposure> = support.iter().collect();
    for m in 1..levels[0] {
        for j in 1..=levels[1] {
            let six = six_term_support(spec, m, j).ok()?;
            if six.iter().collect::<BTreeSet<_>>() == given {
                return Some((m, j));
            }
        }
    }
    None
}

pub struct WeightsOutput {
    pub weights_csv: String,
    pub alpha: Option<(PathBuf, String)>,
}

fn solve(input: &WeightsInput, probs: &ExposureDistribution) -> Result<(MivlueSolution, String)> {
    let spec = &input.spec;
    if input.limit {
        let support = input.support.as_deref().ok_or_else(|| anyhow!("limit: requires a support"))?;
        let lim = solve_mivlue_limit(spec, probs, support, &LimitOptions::default())?;
        return Ok((lim.solution, format!("limit (converged at eta={:e})", lim.eta)));
    }
    let prior_input = input.prior.as_ref().ok_or_else(|| anyhow!("prior: missing field"))?;
    let prior = prior(spec, prior_input)?;
    match &input.support {
        Some(support) => Ok((solve_mivlue_on_support(spec, probs, &prior, support)?, "restricted".into())),
        None => Ok((solve_mivlue(spec, probs, &prior)?, "full".into())),
    }
}

/// Builds every output in memory; nothing is written here.
pub fn run(text: &str, output: &Path) -> Result<WeightsOutput> {
    let (input, hash): (WeightsInput, String) = parse_json(text)?;
    let spec = &input.spec;
    let probs = distribution(spec, &input.probabilities)?;
    let (sol, mode) = solve(&input, &probs)?;

    let mut head = metadata_lines(&hash, None);
    head.push(format!("# solver {mode}, condition {:.3e}", sol.condition));
    if let Some(w) = &sol.warning {
        head.push(format!("# warning {w}"));
    }
    let mut body = csv::Writer::from_writer(Vec::new());
    body.write_record(["exposure", "weight", "variance", "probability"])?;
    for row in &sol.rows {
        body.write_record([
            row.exposure.to_string(),
            format!("{:e}", row.weight),
            format!("{:e}", row.variance),
            format!("{:e}", row.probability),
        ])?;
    }
    let weights_csv = format!("{}\n{}", head.join("\n"), String::from_utf8(body.into_inner()?)?);

    let alpha = match input.support.as_deref().and_then(|s| six_term_indices(spec, s)) {
        None => None,
        Some((m, j)) => {
            let six = six_term_support(spec, m, j)?;
            let mut p = [0.0; 6];
            let mut v = [0.0; 6];
            let mut w = [0.0; 6];
            for (i, e) in six.iter().enumerate() {
                let row = sol.rows.iter().find(|r| &r.exposure == e).expect("solution covers the support");
                p[i] = row.probability;
                v[i] = row.variance;
                w[i] = row.weight;
            }
            let (a1, a2, a3) = six_term_alpha_weights(&SixTerm::new(p, v)?)?;
            let (b1, b2, b3) = six_term_alpha_from_weights(&p, &w);
            let max = max_alpha3(&p)?;
            let mut out = csv::Writer::from_writer(Vec::new());
            out.write_record(["source", "alpha1", "alpha2", "alpha3", "max_alpha3"])?;
            for (name, a) in [("closed_form", (a1, a2, a3)), ("weights", (b1, b2, b3))] {
                out.write_record([
                    name.to_string(),
                    format!("{:e}", a.0),
                    format!("{:e}", a.1),
                    format!("{:e}", a.2),
                    format!("{max:e}"),
                ])?;
            }
            let mut head = metadata_lines(&hash, None);
            head.push(format!("# six-term set m={m} j={j}"));
            let text = format!("{}\n{}", head.join("\n"), String::from_utf8(out.into_inner()?)?);
            Some((alpha_path(output), text))
        }
    };
    Ok(WeightsOutput { weights_csv, alpha })
}

/// `<dir>/<stem>_alpha.csv` next to `output`.
pub fn alpha_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "weights".into());
    output.with_file_name(format!("{stem}_alpha.csv"))
}
