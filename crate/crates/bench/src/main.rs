use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;

use amdp_bench::experiment::{run_cell, GridPoint, DEFAULT_MAX_OUTER};
use amdp_bench::{run_experiment, save_instance, write_csv, ExperimentConfig, InstanceSpec};
use amdp_core::{enumerate_optimal, Algorithm, ConfidenceParams};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amdp", about = "Average-reward MDP learners under a generative model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact optimal gain, bias and spans by policy enumeration.
    Oracle { instance: InstanceSpec },
    /// Run one learner once and score its policy exactly.
    Solve {
        instance: InstanceSpec,
        #[arg(long)]
        algo: Algorithm,
        #[arg(long, conflicts_with = "eps")]
        n: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha_scale: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_OUTER)]
        max_outer: u32,
    },
    /// Run a TOML sweep and write CSV rows.
    Sweep {
        config: PathBuf,
        /// Overrides the config's `output`; `-` writes to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check that an instance parses and is well formed.
    Validate { instance: InstanceSpec },
    /// Write an instance to the JSON file format.
    Export { instance: InstanceSpec, path: PathBuf },
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("[{}]", parts.join(", "))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Oracle { instance } => {
            let mdp = instance.build()?;
            let opt = enumerate_optimal(&mdp)?;
            println!("instance               {instance}");
            println!("rho*                   {}", fmt_vec(&opt.rho_star));
            println!("h*                     {}", fmt_vec(&opt.h_star));
            println!("sp(h*)                 {:.9}", opt.span_h_star);
            println!("min gain-optimal span  {:.9}", opt.min_gain_optimal_span);
            println!("blackwell policy       {:?}", opt.blackwell_policy.actions());
        }
        Command::Solve {
            instance,
            algo,
            n,
            eps,
            seed,
            delta,
            alpha_scale,
            max_outer,
        } => {
            let point = match (algo, n, eps) {
                (Algorithm::FixedEps, _, Some(e)) => GridPoint::Eps(e),
                (Algorithm::FixedEps, _, None) => bail!("fixed_eps needs --eps"),
                (_, Some(n), _) => GridPoint::N(n),
                (_, None, _) => bail!("{} needs --n", algo.name()),
            };
            let mdp = instance.build()?;
            let opt = enumerate_optimal(&mdp)?;
            let params = ConfidenceParams::scaled(delta, alpha_scale)?;
            let out = run_cell(&mdp, &opt, algo, point, &params, max_outer, seed)?;
            println!("rho_hat           {}", out.rho_hat);
            println!("policy min gain   {}", out.policy_min_gain);
            println!("rho*              {}", out.rho_star);
            println!("suboptimality     {}", out.suboptimality());
            println!("horizon           {}", out.horizon);
            if let Some(i) = out.span_index {
                println!("span index        {i}");
            }
            println!("samples per pair  {}", out.samples_per_pair);
            if let (Some((lo, hi)), Some(t)) = (out.interval, out.termination) {
                println!("interval          [{lo}, {hi}] ({t:?})");
            }
        }
        Command::Sweep { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_experiment(&cfg)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            match output.or_else(|| cfg.output.clone()) {
                Some(p) if p.as_os_str() != "-" => {
                    let f = File::create(&p).with_context(|| format!("cannot create {}", p.display()))?;
                    write_csv(&rows, BufWriter::new(f))?;
                    eprintln!("wrote {} rows to {}", rows.len(), p.display());
                }
                _ => write_csv(&rows, io::stdout().lock())?,
            }
            if failed > 0 {
                eprintln!("{failed} cells failed; see the status column");
            }
        }
        Command::Validate { instance } => {
            let mdp = instance.build()?;
            println!(
                "ok: {} states, {} actions, {} deterministic policies",
                mdp.n_states(),
                mdp.n_actions(),
                mdp.policy_count().map_or("too many".to_string(), |c| c.to_string())
            );
        }
        Command::Export { instance, path } => {
            let mdp = instance.build()?;
            save_instance(&mdp, &path)?;
        }
    }
    Ok(())
}
