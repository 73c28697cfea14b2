use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ran_core::io::{gen_synthetic_corpus, load_image, read_manifest};
use ran_core::nets::{score_image, Aggregate, RanModel};
use ran_core::train::{
    eval_benchmark, gor_experiment, label_patches, patch_pairs, phase1_pretrain_restorator, phase2_adversarial,
    phase3_pretrain_evaluator, phase4_finetune_evaluator, repeated_splits_ttest, split_by_reference, Curve, Dataset,
    Predictor, SplitSpec, GOR_LEVELS,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, SNAPSHOT};
use crate::FormatError;

#[derive(Debug, Parser)]
#[command(name = "ran", version, about = "Restoration-based no-reference image quality pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    #[value(name = "4")]
    Four,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregateArg {
    Weighted,
    Mean,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: pristine images, distorted variants and manifest.csv.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one training phase, or all four, and write checkpoints and loss curves to --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        phase: Phase,
        #[arg(long)]
        out: PathBuf,
        /// Corpus manifest; overrides paths.manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Config override, repeatable: --set train.phase1_iters=200
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Score one image and print its quality report as JSON.
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        aggregate: Option<AggregateArg>,
    },
    /// Gain-of-restoration experiment on the pristine images of a corpus.
    Gor {
        #[arg(long)]
        ckpt: PathBuf,
        /// Directory holding manifest.csv.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// SROCC and fitted PLCC on the test split of a scored manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split_seed: u64,
        /// Replace predictions by the targets (harness self-check).
        #[arg(long)]
        oracle: bool,
        /// Append `srocc,plcc` to this CSV for later `ttest` use.
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Two-sided tests on per-split SROCC and PLCC of two result CSVs.
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Finite-difference gradient checks of every op and network.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn load_checkpoint_dir(dir: &Path) -> Result<(RunConfig, RanModel)> {
    let cfg = RunConfig::load(Some(&dir.join(SNAPSHOT)), &[])?;
    let model = RanModel::load(cfg.network.clone(), dir)?;
    Ok((cfg, model))
}

fn write_curves(dir: &Path, curves: &[&Curve]) -> Result<()> {
    for c in curves {
        c.write_csv(dir.join(format!("{}.csv", c.name)))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { out, n, size, seed } => {
            let corpus = gen_synthetic_corpus(n, size, seed)?;
            let rows = corpus.write(&out)?;
            print_json(&json!({
                "root": out,
                "pristine": corpus.pristine.len(),
                "distorted": rows.len(),
                "manifest": out.join("manifest.csv"),
            }))?;
        }
        Command::Train {
            config,
            phase,
            out,
            manifest,
            set,
        } => train(config.as_deref(), phase, &out, manifest, &set)?,
        Command::Score { ckpt, image, aggregate } => {
            let (cfg, model) = load_checkpoint_dir(&ckpt)?;
            let img = load_image(&image)?;
            let mode = match aggregate {
                Some(AggregateArg::Weighted) => Aggregate::Weighted,
                Some(AggregateArg::Mean) => Aggregate::Mean,
                None => cfg.network.aggregate,
            };
            let rep = score_image(
                &model.restorator,
                &model.r_params,
                &model.evaluator,
                &model.e_params,
                &img,
                cfg.network.patch_size,
                mode,
                image.to_string_lossy(),
            )?;
            print_json(&rep)?;
        }
        Command::Gor { ckpt, corpus, out, seed } => {
            let (_, model) = load_checkpoint_dir(&ckpt)?;
            let manifest = corpus.join("manifest.csv");
            let mut seen = BTreeSet::new();
            let mut pristine = Vec::new();
            for row in read_manifest(&manifest)? {
                if seen.insert(row.reference_path.clone()) {
                    pristine.push(load_image(row.resolve(&corpus).1)?);
                }
            }
            let rep = gor_experiment(&model, &pristine, &GOR_LEVELS, seed)?;
            rep.write_csv(&out)?;
            if !rep.restorator_trained {
                eprintln!("warning: restorator has not been trained; the verdicts are not meaningful");
            }
            print_json(&json!({
                "images": pristine.len(),
                "csv": out,
                "restorator_trained": rep.restorator_trained,
                "verdicts": rep.verdicts,
                "families_monotone_psnr": rep.families_passing("psnr"),
                "families_monotone_ssim": rep.families_passing("ssim"),
            }))?;
        }
        Command::Eval {
            ckpt,
            manifest,
            split_seed,
            oracle,
            results,
        } => {
            let (cfg, model) = load_checkpoint_dir(&ckpt)?;
            let ds = Dataset::from_manifest(&manifest)?;
            let spec = SplitSpec {
                seed: split_seed,
                ..cfg.train.split.clone()
            };
            let split = split_by_reference(&ds, &spec)?;
            let predictor = if oracle { Predictor::Oracle } else { Predictor::Model };
            let rep = eval_benchmark(&model, &ds, &split, predictor)?;
            if let Some(path) = results {
                append_result(&path, rep.srocc, rep.plcc)?;
            }
            print_json(&rep)?;
        }
        Command::Ttest { a, b } => {
            let rep = repeated_splits_ttest(&read_results(&a)?, &read_results(&b)?)?;
            print_json(&rep)?;
        }
        Command::Gradcheck { seeds } => {
            let mut results = Vec::new();
            for seed in 0..seeds {
                results.extend(ran_tensor::gradcheck::op_suite(seed));
                results.extend(ran_core::nets::gradcheck::network_suite(seed));
            }
            let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
            for r in &failed {
                eprintln!("FAILED {r}");
            }
            let worst = results.iter().map(|r| r.max_rel_err / r.tol).fold(0.0, f64::max);
            print_json(&json!({
                "checks": results.len(),
                "failed": failed.iter().map(|r| json!({"name": r.name, "seed": r.seed, "max_rel_err": r.max_rel_err, "tol": r.tol})).collect::<Vec<_>>(),
                "worst_err_over_tol": worst,
            }))?;
            if !failed.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train(config: Option<&Path>, phase: Phase, out: &Path, manifest: Option<PathBuf>, set: &[String]) -> Result<()> {
    let cfg = RunConfig::load(config, set)?;
    let manifest = match manifest {
        Some(m) => m,
        None if !cfg.paths.manifest.is_empty() => PathBuf::from(&cfg.paths.manifest),
        None => bail!("no corpus manifest: pass --manifest or set paths.manifest"),
    };
    let ds = Dataset::from_manifest(&manifest)?;
    let split = split_by_reference(&ds, &cfg.train.split)?;
    let phases: Vec<u8> = match phase {
        Phase::One => vec![1],
        Phase::Two => vec![2],
        Phase::Three => vec![3],
        Phase::Four => vec![4],
        Phase::All => vec![1, 2, 3, 4],
    };
    let mut model = if phases[0] == 1 {
        RanModel::new(cfg.network.clone(), cfg.train.seed)?
    } else {
        RanModel::load(cfg.network.clone(), out)
            .with_context(|| format!("phase {} resumes from the checkpoints in {}", phases[0], out.display()))?
    };
    let pairs = patch_pairs(&ds, &split.train, cfg.network.patch_size)?;
    let mut summary = serde_json::Map::new();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for p in phases {
        match p {
            1 => {
                let c = phase1_pretrain_restorator(&mut model, &cfg.train, &pairs)?;
                write_curves(out, &[&c])?;
                summary.insert("phase1_final_loss".into(), json!(c.last()));
            }
            2 => {
                let r = phase2_adversarial(&mut model, &cfg.train, &pairs)?;
                write_curves(out, &[&r.rec_loss, &r.adv_loss, &r.critic_loss])?;
                summary.insert(
                    "phase2".into(),
                    json!({
                        "restorator_updates": r.restorator_updates,
                        "critic_updates": r.critic_updates,
                        "max_abs_critic_param": r.max_abs_critic_param,
                        "lr_schedule": r.lr_schedule,
                        "final_d_real": r.final_d_real,
                        "final_d_fake": r.final_d_fake,
                    }),
                );
            }
            3 => {
                let labeled = label_patches(&model, &pairs)?;
                let c = phase3_pretrain_evaluator(&mut model, &cfg.train, &labeled)?;
                write_curves(out, &[&c])?;
                summary.insert("phase3_final_loss".into(), json!(c.last()));
            }
            _ => {
                let r = phase4_finetune_evaluator(&mut model, &cfg.train, &ds, &split)?;
                write_curves(out, &[&r.train_loss, &r.val_srocc])?;
                summary.insert("phase4_best_iteration".into(), json!(r.best_iteration));
                summary.insert("phase4_best_val_srocc".into(), json!(r.best_val_srocc));
            }
        }
        model.save(out)?;
        std::fs::write(out.join(SNAPSHOT), cfg.to_toml()).with_context(|| format!("writing {SNAPSHOT}"))?;
    }
    summary.insert("phases_done".into(), json!(model.phases_done));
    summary.insert("checkpoint_dir".into(), json!(out));
    print_json(&summary)
}

fn append_result(path: &Path, srocc: f64, plcc: f64) -> Result<()> {
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(["srocc", "plcc"])?;
    }
    w.write_record([format!("{srocc:?}"), format!("{plcc:?}")])?;
    w.flush()?;
    Ok(())
}

fn read_results(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FormatError(format!("{} lacks a {name} column", path.display())))
    };
    let (si, pi) = (col("srocc")?, col("plcc")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| FormatError(format!("{}: bad number in row {:?}", path.display(), rec)).into())
        };
        out.push((parse(si)?, parse(pi)?));
    }
    Ok(out)
}
