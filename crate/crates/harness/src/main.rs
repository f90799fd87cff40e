use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reveal_core::dataset::{collect, split, Dataset, Split, MANIFEST_FILE};
use reveal_core::model::{evaluate_ap, load_params, save_params, Ablation};
use reveal_core::planner::Policy;
use reveal_core::rng::Rng;
use reveal_harness::config::{ApRow, ExperimentConfig, ExperimentKind};
use reveal_harness::error::{input, Result};
use reveal_harness::experiments::{self as ex, Models};
use reveal_harness::mask::read_mask;
use reveal_harness::table::{fmt_f, Table};

#[derive(Parser)]
#[command(name = "reveal", version, about = "Plant-occlusion reveal experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a labeled interaction dataset for `setting`.
    Collect(Common),
    /// Train one model on `dataset.path`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "full")]
        ablation: String,
    },
    /// Test-split AP of the configured checkpoints on `dataset.path`.
    EvalAp(Common),
    /// Run one episode on `setting`.
    Episode {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ppg")]
        policy: String,
        #[arg(long)]
        steps: Option<usize>,
        /// P1 bitmap of the region to reveal.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Run the experiment named in the config.
    Experiment(Common),
}

fn load(c: &Common) -> Result<(ExperimentConfig, u64)> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    fs::create_dir_all(&c.out)?;
    Ok((cfg, seed))
}

fn dataset_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    let p = cfg.dataset.path.as_deref().ok_or_else(|| input("config needs dataset.path"))?;
    if !p.join(MANIFEST_FILE).is_file() {
        return Err(input(format!("{} is not a dataset directory", p.display())));
    }
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(c) => {
            let (cfg, seed) = load(&c)?;
            let setting = cfg.setting;
            let space = setting.space();
            let master = Rng::new(seed);
            let manifest = collect(
                &setting.sim_config(),
                &space,
                cfg.dataset.samples,
                &master.substream("collect").substream(setting.name()),
                &c.out,
                &cfg.dataset.collect,
            )?;
            let manifest = split(&manifest, &mut master.substream("split").substream(setting.name()))?;
            manifest.write_jsonl(&c.out.join(MANIFEST_FILE))?;
            let ds = Dataset::load(&c.out, &space)?;
            let all: Vec<_> = ds.samples.iter().collect();
            ex::reveal_by_direction(&all, &space).table()?.write(&c.out.join("direction_stats.csv"))?;
            println!("collected {} samples into {}", manifest.len(), c.out.display());
        }
        Command::Train { common: c, ablation } => {
            let (cfg, seed) = load(&c)?;
            let ablation = Ablation::from_name(&ablation)?;
            let row = match ablation {
                Ablation::Full => ApRow::Full,
                Ablation::NoAction => ApRow::NoAction,
                Ablation::NoRgb => ApRow::NoRgb,
                Ablation::NoHeight => ApRow::NoHeight,
                Ablation::Blind => ApRow::Blind,
            };
            let space = cfg.setting.space();
            let ds = Dataset::load(dataset_dir(&cfg)?, &space)?;
            let (params, history) = ex::train_row(row, &ds, &space, &cfg, seed)?;
            save_params(&params, &c.out.join("model.ckpt"))?;
            let mut t = Table::new(&["epoch", "train_loss", "val_ap"]);
            for e in &history.epochs {
                t.push(vec![e.epoch.to_string(), fmt_f(e.train_loss), fmt_f(e.val_ap)])?;
            }
            t.write(&c.out.join("history.csv"))?;
            println!("best epoch {} -> {}", history.best_epoch, c.out.join("model.ckpt").display());
        }
        Command::EvalAp(c) => {
            let (cfg, _) = load(&c)?;
            let kind = cfg.setting.kind();
            let space = cfg.setting.space();
            let ds = Dataset::load(dataset_dir(&cfg)?, &space)?;
            let test = ds.split_samples(Split::Test);
            let mut t = Table::new(&["checkpoint", "ablation", "test_ap"]);
            for blind in [false, true] {
                if let Some(path) = cfg.checkpoints.get(kind, blind) {
                    let p = load_params(path)?;
                    t.push(vec![path.display().to_string(), p.arch.ablation.name().into(), fmt_f(evaluate_ap(&p, &test)?)])?;
                }
            }
            if t.rows.is_empty() {
                return Err(input("no checkpoint configured for this plant kind"));
            }
            t.write(&c.out.join("eval_ap.csv"))?;
            print!("{}", t.to_csv()?);
        }
        Command::Episode {
            common: c,
            policy,
            steps,
            target,
        } => {
            let (cfg, seed) = load(&c)?;
            let policy = Policy::from_name(&policy)?;
            let target = target.or_else(|| cfg.target.clone()).map(|p| read_mask(&p)).transpose()?;
            let models = Models::load(&cfg, &[cfg.setting.kind()], &[policy])?;
            let trace = ex::run_single_episode(&cfg, policy, steps.unwrap_or(cfg.steps), target.as_ref(), &models, seed)?;
            fs::write(c.out.join("trace.jsonl"), trace.to_jsonl()?)?;
            ex::write_meta(&c.out, "episode", seed, &cfg)?;
            println!("cumulative reveal {} cells over {} steps", trace.cumulative(), trace.steps.len());
        }
        Command::Experiment(c) => {
            let (cfg, seed) = load(&c)?;
            let kind = cfg.experiment.ok_or_else(|| input("config does not name an experiment"))?;
            let (kinds, policies) = ex::requirements(&cfg, kind);
            let models = Models::load(&cfg, &kinds, &policies)?;
            match kind {
                ExperimentKind::OfflineAp => {
                    let r = ex::run_offline_ap(&cfg, seed)?;
                    r.write(&c.out)?;
                    print!("{}", r.table.to_csv()?);
                }
                ExperimentKind::SingleAction => {
                    let r = ex::run_single_action(&cfg, cfg.setting, &models, seed)?;
                    r.write(&c.out)?;
                    print!("{}", r.summary_table()?.to_csv()?);
                }
                ExperimentKind::LongHorizon => {
                    let r = ex::run_long_horizon(&cfg, &models, seed)?;
                    r.write(&c.out, "long_horizon.csv", "cumulative reveal")?;
                    print!("{}", r.curves.to_csv()?);
                }
                ExperimentKind::Targeted => {
                    let path = cfg.target.as_deref().ok_or_else(|| input("targeted runs need `target`"))?;
                    let r = ex::run_targeted(&cfg, &read_mask(path)?, &models, seed)?;
                    r.write(&c.out, "targeted.csv", "in-target reveal")?;
                    print!("{}", r.curves.to_csv()?);
                }
                ExperimentKind::Growth => {
                    let r = ex::run_growth(&cfg, seed)?;
                    r.write(&c.out)?;
                    print!("{}", r.single.summary_table()?.to_csv()?);
                }
            }
            ex::write_meta(&c.out, kind.name(), seed, &cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

