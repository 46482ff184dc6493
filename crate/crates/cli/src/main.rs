use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use lue_core::design::{bernoulli_distribution, ExposureDistribution};
use lue_core::estimators::{basis_size, build_malue_set, build_zero_estimators, lue_dimension};
use lue_core::exposure::ExposureSpec;
use lue_core::simulation::config_hash;
use lue_core::verify::run_checks;

mod output;
mod simulate;
mod weights;

use output::{metadata_lines, write_all};

#[derive(Parser)]
#[command(name = "lue", version, about = "Linear unbiased estimators under exposure mappings")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-integrated-variance weights for one exposure spec.
    Weights {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// List the affine basis of linear unbiased estimators.
    Basis {
        /// Number of exposure components.
        #[arg(long)]
        k: usize,
        /// Comma-separated levels m_1,..,m_K.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Use Bernoulli exposure probabilities for a spec `[d, 1]` instead of uniform ones.
        #[arg(long)]
        p_treat: Option<f64>,
    },
    /// Run IMSE sweeps described by a JSON file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Master seed shared by every setting; overrides seeds in the file.
        #[arg(long)]
        seed: Option<u64>,
        /// List the settings of each sweep without running them.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the built-in oracle checks.
    Verify {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LUE_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("LUE_THREADS={v} is not a thread count"))?;
        if n == 0 {
            bail!("LUE_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run_weights(input: PathBuf, output: PathBuf) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let out = weights::run(&text, &output)?;
    let mut files = vec![(output.as_path(), out.weights_csv.as_str())];
    if let Some((path, text)) = &out.alpha {
        files.push((path.as_path(), text.as_str()));
    }
    write_all(&files)?;
    Ok(ExitCode::SUCCESS)
}

fn run_basis(k: usize, m: Vec<usize>, p_treat: Option<f64>) -> Result<ExitCode> {
    if m.len() != k {
        bail!("--k {k} does not match {} levels in --m", m.len());
    }
    let spec = ExposureSpec::new(m.clone())?;
    let probs = match p_treat {
        None => ExposureDistribution::uniform(&spec),
        Some(p) => {
            if k != 2 || m[1] != 1 {
                bail!("--p-treat needs levels d,1");
            }
            bernoulli_distribution(m[0], p)?
        }
    };
    let malues = build_malue_set(&spec, &probs)?;
    let zeros = build_zero_estimators(&spec, &probs)?;
    let hash = config_hash(&serde_json::json!({ "k": k, "m": m, "p_treat": p_treat }));
    let mut out = metadata_lines(&hash, None).join("\n");
    out += &format!(
        "\nmalue={} zero={} basis={} dim={}\n",
        malues.len(),
        zeros.len(),
        basis_size(&spec),
        lue_dimension(&spec)
    );
    for (set, ests) in [("M", &malues), ("Z", &zeros)] {
        for est in ests.iter() {
            out += &format!("\n# {set} {}\n{}", est.label, est.to_records());
        }
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(config: PathBuf, out_dir: PathBuf, seed: Option<u64>, dry_run: bool) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    let file = simulate::load(&text)?;
    let base_dir = config.parent().map(PathBuf::from).unwrap_or_default();
    if dry_run {
        for (i, sweep) in file.sweeps.iter().enumerate() {
            let settings = simulate::expand(sweep, i, seed, &base_dir)?;
            println!("{}: {} settings", sweep.name, settings.len());
            for s in &settings {
                println!("  {} {}", s.label, s.config.hash());
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    if !out_dir.is_dir() {
        std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    }
    let mut failures = 0;
    for (i, sweep) in file.sweeps.iter().enumerate() {
        let settings = match simulate::expand(sweep, i, seed, &base_dir) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: sweep {}: {e:#}", sweep.name);
                failures += 1;
                continue;
            }
        };
        let result = simulate::run_sweep(sweep, &settings, seed, &out_dir)?;
        write_all(&[(result.path.as_path(), result.contents.as_str())])?;
        eprintln!(
            "{}: {} settings, {} failed -> {}",
            sweep.name,
            settings.len(),
            result.failures,
            result.path.display()
        );
        failures += result.failures;
    }
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_verify(filter: Option<String>) -> Result<ExitCode> {
    let results = run_checks(filter.as_deref());
    if results.is_empty() {
        bail!("no check matches `{}`", filter.unwrap_or_default());
    }
    let mut failed = 0;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({:.3}s): {}", r.name, r.elapsed.as_secs_f64(), r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Weights { input, output } => run_weights(input, output),
        Command::Basis { k, m, p_treat } => run_basis(k, m, p_treat),
        Command::Simulate { config, out_dir, seed, dry_run } => run_simulate(config, out_dir, seed, dry_run),
        Command::Verify { filter } => run_verify(filter),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
