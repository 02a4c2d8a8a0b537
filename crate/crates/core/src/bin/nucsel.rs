use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nucsel::clustering::{dual_level_clustering, DualConfig, DEFAULT_MAX_ITER};
use nucsel::corpus::{load_corpus, read_manifest};
use nucsel::features::{builtin_store, FeatureKey, FeatureStore};
use nucsel::masksynth::{BankTransforms, SynthMaskConfig};
use nucsel::metrics::{paired_ttest, MatchCriterion};
use nucsel::patch::{crop1, PatchRef};
use nucsel::pipeline::eval::{
    evaluate_dirs, mean_scores, pair_by_image, read_score_column, scores_csv,
};
use nucsel::pipeline::run::{layout, PatchFile};
use nucsel::pipeline::synth::synth_masks_to_dir;
use nucsel::pipeline::{report, run, RunConfig};
use nucsel::selection::{baseline_rnd_cen_crop, baseline_rnd_crop, cps_select, Ablation};

#[derive(Parser)]
#[command(
    name = "nucsel",
    version,
    about = "Patch selection, mask synthesis and segmentation metrics"
)]
struct Cli {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, env = "NUCSEL_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Sampling {
    /// Corpus manifest: JSON list of {id, path}
    #[arg(long)]
    manifest: PathBuf,
    /// Patch side in pixels (even)
    #[arg(long, default_value_t = 256)]
    s: u32,
    /// Sliding-window stride in pixels
    #[arg(long, default_value_t = 15)]
    t: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    RndCrop,
    RndCenCrop,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate sliding-window patches
    Crop {
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export built-in features of every patch and quadrant
    Features {
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        l2_normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dual-level clustering and patch selection
    Select {
        /// Corpus manifest (needed unless --features is given)
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        s: u32,
        #[arg(long, default_value_t = 15)]
        t: u32,
        /// Feature file to use instead of built-in features
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        k1: usize,
        #[arg(long, default_value_t = 4)]
        k2: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "full")]
        ablation: String,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random selection baselines
    Baseline {
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        k1: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize instance masks from one annotated mask
    SynthMasks {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 320)]
        canvas: u32,
        #[arg(long, default_value_t = 256)]
        size: u32,
        /// Nuclei per mask (default: source density)
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_flips: bool,
        #[arg(long)]
        no_rotations: bool,
        #[arg(long, default_value_t = 4)]
        random_crops: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-image AJI and Dice between two mask directories
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "match", default_value = "jaccard")]
        criterion: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired t-test between two score tables
    Ttest {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "aji")]
        column: String,
    },
    /// Render tables and charts for a run directory
    Report { run_dir: PathBuf },
    /// Run every stage from a JSON config
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Crop { .. } => "crop",
            Command::Features { .. } => "features",
            Command::Select { .. } => "select",
            Command::Baseline { .. } => "baseline",
            Command::SynthMasks { .. } => "synth-masks",
            Command::Eval { .. } => "eval",
            Command::Ttest { .. } => "ttest",
            Command::Report { .. } => "report",
            Command::Run { .. } => "run",
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| path.display().to_string())
}

fn sample(
    sampling: &Sampling,
) -> Result<(Vec<nucsel::patch::ImageRecord>, nucsel::patch::PatchPool)> {
    let images = load_corpus(&read_manifest(&sampling.manifest)?)?;
    let pool = crop1(&images, sampling.s, sampling.t)?;
    for w in &pool.warnings {
        log::warn!("{}: {}", w.image_id, w.message);
    }
    Ok((images, pool))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Crop { sampling, out } => {
            let (_, pool) = sample(&sampling)?;
            println!("{} patches", pool.patches.len());
            write_json(
                &out,
                &PatchFile {
                    s: sampling.s,
                    t: sampling.t,
                    patches: pool.patches,
                    warnings: pool.warnings,
                },
            )
        }
        Command::Features {
            sampling,
            l2_normalize,
            out,
        } => {
            let (images, pool) = sample(&sampling)?;
            let mut store = builtin_store(&images, &pool.patches)?;
            if l2_normalize {
                store = store.l2_normalized();
            }
            store.write(&out)?;
            println!("{} rows of dimension {}", store.len(), store.dim());
            Ok(())
        }
        Command::Select {
            manifest,
            s,
            t,
            features,
            k1,
            k2,
            seed,
            ablation,
            max_iter,
            restarts,
            out,
        } => {
            let ablation: Ablation = ablation.parse()?;
            let (patches, store) = match (&features, &manifest) {
                (Some(path), _) => {
                    let store = FeatureStore::read(path)?;
                    let patches: Vec<PatchRef> = store
                        .keys()
                        .iter()
                        .filter_map(|k| match k {
                            FeatureKey::Patch(p) => Some(p.clone()),
                            FeatureKey::Region(_) => None,
                        })
                        .collect();
                    store.require_patches(&patches)?;
                    (patches, store)
                }
                (None, Some(m)) => {
                    let (images, pool) = sample(&Sampling {
                        manifest: m.clone(),
                        s,
                        t,
                    })?;
                    let store = builtin_store(&images, &pool.patches)?;
                    (pool.patches, store)
                }
                (None, None) => bail!("either --manifest or --features is required"),
            };
            let dual = dual_level_clustering(
                &patches,
                &store,
                &DualConfig {
                    k1,
                    k2,
                    seed,
                    max_iter,
                    restarts,
                },
            )?;
            let report = cps_select(&dual, &store, ablation)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join(layout::CLUSTERING), &dual)?;
            write_json(&out.join(layout::SELECTION), &report)?;
            fs::write(out.join(layout::TERMS), report.terms_csv())?;
            for c in &report.clusters {
                println!(
                    "cluster {}: {} (d1 {:.6}, d2 {:.6}, d3 {:.6})",
                    c.cluster, c.chosen, c.terms.d1, c.terms.d2, c.terms.d3
                );
            }
            Ok(())
        }
        Command::Baseline {
            kind,
            sampling,
            k1,
            seed,
            out,
        } => {
            let (images, pool) = sample(&sampling)?;
            let picked = match kind {
                BaselineKind::RndCrop => baseline_rnd_crop(&pool.patches, k1, seed)?,
                BaselineKind::RndCenCrop => baseline_rnd_cen_crop(&images, k1, sampling.s, seed)?,
            };
            for p in &picked {
                println!("{p}");
            }
            write_json(&out, &picked)
        }
        Command::SynthMasks {
            bank,
            count,
            canvas,
            size,
            q,
            seed,
            no_flips,
            no_rotations,
            random_crops,
            out,
        } => {
            let cfg = SynthMaskConfig {
                q,
                canvas_width: canvas,
                canvas_height: canvas,
                width: size,
                height: size,
                seed,
                ..SynthMaskConfig::default()
            };
            let transforms = BankTransforms {
                flips: !no_flips,
                rotations: !no_rotations,
                random_crops,
                seed: nucsel::seed::named(seed, "bank"),
                ..BankTransforms::default()
            };
            let m = synth_masks_to_dir(&bank, &out, count, &cfg, &transforms)?;
            let short = m.masks.iter().filter(|e| e.shortfall.is_some()).count();
            println!(
                "{} masks from a bank of {} shapes ({} with placement shortfall)",
                m.masks.len(),
                m.bank_size,
                short
            );
            Ok(())
        }
        Command::Eval {
            gt,
            pred,
            criterion,
            out,
        } => {
            let criterion: MatchCriterion = criterion.parse()?;
            let scores = evaluate_dirs(&gt, &pred, criterion)?;
            if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(d)?;
            }
            fs::write(&out, scores_csv(&scores))?;
            match mean_scores(&scores) {
                Some((a, d)) => {
                    println!("{} images: mean AJI {a:.4}, mean Dice {d:.4}", scores.len())
                }
                None => println!("no ground-truth masks found"),
            }
            Ok(())
        }
        Command::Ttest { a, b, column } => {
            let ca = read_score_column(&a, &column)?;
            let cb = read_score_column(&b, &column)?;
            let (xs, ys) = pair_by_image(&ca, &cb)?;
            let r = paired_ttest(&xs, &ys)?;
            println!("n = {}, mean difference = {}", r.n, r.mean_diff);
            println!("t = {}, df = {}, p = {}", r.t, r.df, r.p);
            if let Some(flag) = r.degenerate {
                println!("degenerate: {flag:?}");
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            for f in report(&run_dir)? {
                println!("{}", run_dir.join(f).display());
            }
            Ok(())
        }
        Command::Run { config } => {
            let cfg = RunConfig::from_file(&config)?;
            let summary = run(&cfg)?;
            println!(
                "stages run: [{}], reused: [{}]",
                summary.executed.join(", "),
                summary.skipped.join(", ")
            );
            for p in summary.selected {
                println!("selected {p}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error[setup]: {e}");
            return ExitCode::FAILURE;
        }
    }
    let stage = cli.command.stage();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let tag = match e.downcast_ref::<nucsel::Error>() {
                Some(nucsel::Error::Stage { stage, .. }) => stage.clone(),
                _ => stage.to_string(),
            };
            eprintln!("error[{tag}]: {}", chain(&e));
            ExitCode::FAILURE
        }
    }
}

fn chain(e: &anyhow::Error) -> String {
    e.chain()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(": ")
}
