use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use isac_harness::config::{self, ExperimentConfig, Method};
use isac_harness::{metrics, plot, report, scenario, sweep};

#[derive(Parser)]
#[command(name = "isac", about = "Joint sensing and channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file overlaid on the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `quick` or `paper`; overrides the file's `preset` key.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated subset of omp, turbo_cs, sbi_separate, sbi_joint.
    #[arg(long)]
    methods: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and write a text report.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Index into the configured SNR list.
        #[arg(long, default_value_t = 0)]
        snr_index: usize,
    },
    /// Monte Carlo sweep to CSV (and SVG when enabled).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Oracle, gradient and consistency checks; exits non-zero on failure.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = config::load(c.config.as_deref(), c.preset.as_deref())?;
    if let Some(s) = c.seed {
        cfg.sweep.seed = s;
    }
    if let Some(m) = &c.methods {
        cfg.sweep.methods = m.split(',').map(Method::parse).collect::<Result<_, _>>()?;
    }
    if let Some(w) = c.workers {
        cfg.sweep.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { common, trial, snr_index } => {
            let cfg = load(&common)?;
            if snr_index >= cfg.sweep.snr_db.len() {
                bail!("snr index {snr_index} out of range");
            }
            let t = scenario::make_trial(&cfg, trial, snr_index)?;
            let gate = cfg.sweep.gate_cells * cfg.system.resolution;
            let mut text = report::trial_header(&t);
            for &m in &cfg.sweep.methods {
                let est = scenario::run_method(&cfg, m, &t)?;
                let met = metrics::evaluate(&t.problem, &t.scene, &est, gate);
                text.push_str(&report::estimate_section(m, &est, &met));
            }
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join(format!("simulate_trial{trial}_snr{snr_index}.txt"));
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            print!("{text}");
        }
        Command::Sweep { common, trials } => {
            let mut cfg = load(&common)?;
            if let Some(t) = trials {
                cfg.sweep.trials = t;
            }
            let out = sweep::run_sweep(&cfg)?;
            let agg = sweep::write_outputs(&common.out, &out)?;
            std::fs::write(common.out.join("config.toml"), cfg.to_toml())?;
            if cfg.sweep.plots {
                for (name, svg) in plot::standard_plots(&agg) {
                    std::fs::write(common.out.join(name), svg)?;
                }
            }
            for row in &agg {
                let f = |m: &str| row.stat(m).map_or("n/a".into(), |s| format!("{:.4}±{:.4}", s.mean, s.se));
                println!(
                    "{:<13} {:>6} dB  rmse_t {}  rmse_s {}  nmse_r {}  nmse_c {}  failures {}",
                    row.method,
                    row.snr_db,
                    f("rmse_target"),
                    f("rmse_scatterer"),
                    f("nmse_radar"),
                    f("nmse_comm"),
                    row.failures
                );
            }
        }
        Command::Validate { common } => {
            let cfg = load(&common)?;
            let checks = isac_harness::validate::run_checks(&cfg);
            let mut failed = 0;
            for c in &checks {
                println!("{c}");
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                bail!("{failed} check(s) failed");
            }
        }
    }
    Ok(())
}
