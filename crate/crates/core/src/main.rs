//! Command-line front end: architecture search, single-genome training,
//! dataset degradation preview, and genome reports.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evorestore::compiler;
use evorestore::evolution::{self, SearchConfig, TrainSettings};
use evorestore::genome::{comparator_genome, Genome};
use evorestore::tasks::{
    self, corrupted_baseline_mse, degradation_rng, ImageDataset, RestorationTask, Split,
};
use evorestore::{checkpoint, TensorData};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "evorestore",
    about = "Evolutionary search over convolutional image-restoration networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataOpts {
    /// Restoration task: superres, denoise-uniform, denoise-gaussian,
    /// deblur, compressive-sensing, checkerboard
    #[arg(long, default_value = "denoise-gaussian")]
    task: String,
    /// Folder of PNG images; omitted = synthetic dataset
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic image size (8, 16, 32 or 64)
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Synthetic dataset image count
    #[arg(long, default_value_t = 40)]
    count: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary architecture search
    Search {
        #[command(flatten)]
        data: DataOpts,
        /// JSON search configuration (defaults applied per field)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Force single-threaded, bit-reproducible execution
        #[arg(long)]
        deterministic: bool,
        /// Overall wall-clock budget in seconds
        #[arg(long)]
        budget_seconds: Option<f64>,
        /// Per-sample activation memory limit, in scalar elements
        #[arg(long)]
        mem_limit: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        /// Training iterations per individual per generation
        #[arg(long)]
        iters: Option<usize>,
        /// Output directory for logs and checkpoints
        #[arg(long, default_value = "search-out")]
        output: PathBuf,
    },
    /// Train one genome (from JSON, or the built-in encoder-decoder
    /// baseline) and report restoration quality
    Train {
        #[command(flatten)]
        data: DataOpts,
        /// Genome JSON file
        #[arg(long, conflicts_with = "baseline")]
        genome: Option<PathBuf>,
        /// Use the hand-built encoder-decoder baseline genome
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 8)]
        minibatch: usize,
        #[arg(long, default_value_t = 50)]
        val_minibatches: usize,
        #[arg(long, default_value_t = 1 << 20)]
        mem_limit: usize,
        /// Seconds allowed per 1000 training iterations
        #[arg(long, default_value_t = 50.0)]
        time_budget: f64,
        /// Where to write the trained weights (optional)
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write clean/corrupted PNG pairs for a task
    Degrade {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "degrade-out")]
        output: PathBuf,
    },
    /// Validate a genome and print its compiled execution plan
    Report {
        /// Genome JSON file
        #[arg(long)]
        genome: PathBuf,
        /// Input channels,height,width for compilation
        #[arg(long, default_value = "3,32,32")]
        input: String,
        #[arg(long, default_value_t = 1 << 20)]
        mem_limit: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_task(name: &str) -> Result<RestorationTask> {
    RestorationTask::from_name(name).ok_or_else(|| {
        anyhow!(
            "unknown task {name:?}; expected one of superres, denoise-uniform, \
             denoise-gaussian, deblur, compressive-sensing, checkerboard"
        )
    })
}

fn load_dataset(opts: &DataOpts, seed: u64) -> Result<ImageDataset<f32>> {
    let ds = match &opts.data {
        Some(dir) => tasks::load_image_folder(dir)
            .with_context(|| format!("loading images from {}", dir.display()))?,
        None => {
            if !matches!(opts.size, 8 | 16 | 32 | 64) {
                bail!("--size must be 8, 16, 32 or 64");
            }
            if opts.count < 5 {
                bail!("--count must be at least 5");
            }
            tasks::synth_dataset(seed ^ 0x64617461, opts.count, opts.size)
        }
    };
    if ds.images.len() < 5 {
        bail!("dataset needs at least 5 images for train/validation/test splits");
    }
    Ok(ds)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search {
            data,
            config,
            seed,
            threads,
            deterministic,
            budget_seconds,
            mem_limit,
            generations,
            iters,
            output,
        } => {
            let mut cfg: SearchConfig = match config {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => SearchConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if deterministic {
                cfg.threads = 1;
            }
            if let Some(b) = budget_seconds {
                cfg.wall_clock_budget_secs = b;
            }
            if let Some(m) = mem_limit {
                cfg.mem_limit_elements = m;
            }
            if let Some(g) = generations {
                cfg.max_generations = g;
            }
            if let Some(i) = iters {
                cfg.train_iters = i;
            }
            cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;

            let task = load_task(&data.task)?;
            let dataset = load_dataset(&data, cfg.seed)?;
            std::fs::create_dir_all(&output)?;

            eprintln!(
                "searching: task={} images={} population={} generations<={}",
                data.task,
                dataset.images.len(),
                cfg.initial_population,
                cfg.max_generations
            );
            let result = evolution::run_search(&cfg, &task, &dataset);

            let mut csv = String::from(evolution::FitnessRecord::csv_header());
            csv.push('\n');
            for r in &result.log {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
            std::fs::write(output.join("log.csv"), csv)?;
            std::fs::write(output.join("best-genome.json"), result.best_genome.to_json())?;
            checkpoint::save(&result.best_state, &output.join("best-weights.bin"))?;
            std::fs::write(output.join("dataset-manifest.json"), dataset.manifest())?;

            println!(
                "generations run: {} (population sizes {:?})",
                result.generations_run, result.population_sizes
            );
            println!(
                "best individual: id={} gen={} val_mse={:.6e} val_psnr={:.3} dB params={}",
                result.best_record.id,
                result.best_record.generation,
                result.best_record.val_mse,
                result.best_record.val_psnr,
                result.best_record.parameter_count
            );
            println!("artifacts written to {}", output.display());
            Ok(())
        }
        Command::Train {
            data,
            genome,
            baseline,
            seed,
            iters,
            minibatch,
            val_minibatches,
            mem_limit,
            time_budget,
            output,
        } => {
            let g = load_genome(genome.as_deref(), baseline)?;
            let task = load_task(&data.task)?;
            let dataset = load_dataset(&data, seed)?;
            let settings = TrainSettings {
                iters,
                minibatch,
                val_minibatches,
                mem_limit_elements: mem_limit,
                time_budget_secs: time_budget,
                train_seed: seed,
                eval_seed: seed ^ 0x6576616c,
                task_seed: seed ^ 0x7461736b,
            };
            let img = dataset.images[0].shape;
            let plan = compiler::compile(&g, (task.input_channels(), img.h, img.w), mem_limit);
            println!("{}", plan.pretty());
            let (_, state, record) =
                evolution::train_individual::<f32>(&g, &dataset, &task, &settings);
            if record.numeric_failure {
                bail!("training failed numerically (non-finite loss or gradients)");
            }
            let base_mse =
                corrupted_baseline_mse(&dataset, Split::Validation, &task, settings.task_seed);
            println!(
                "trained {} iterations in {:.1}s{}{}",
                record.train_curve.len(),
                record.seconds,
                if record.time_exceeded {
                    " (time budget hit)"
                } else {
                    ""
                },
                if record.mem_truncated {
                    " (memory-truncated plan)"
                } else {
                    ""
                }
            );
            println!(
                "validation: mse={:.6e} psnr={:.3} dB (corrupted input baseline {:.3} dB)",
                record.val_mse,
                record.val_psnr,
                tasks::psnr(base_mse)
            );
            if let Some(path) = output {
                checkpoint::save(&state, &path)?;
                println!("weights written to {}", path.display());
            }
            Ok(())
        }
        Command::Degrade {
            data,
            seed,
            output,
        } => {
            let task = load_task(&data.task)?;
            let dataset = load_dataset(&data, seed)?;
            std::fs::create_dir_all(&output)?;
            let task_seed = seed ^ 0x7461736b;
            for (i, clean) in dataset.images.iter().enumerate() {
                let mut rng = degradation_rng(task_seed, i);
                let corrupted: TensorData<f32> = tasks::degrade(clean, &task, &mut rng);
                tasks::save_png(clean, &output.join(format!("{i:04}-clean.png")))?;
                tasks::save_png(&corrupted, &output.join(format!("{i:04}-corrupted.png")))?;
            }
            println!(
                "wrote {} clean/corrupted pairs to {}",
                dataset.images.len(),
                output.display()
            );
            Ok(())
        }
        Command::Report {
            genome,
            input,
            mem_limit,
        } => {
            let g = load_genome(Some(&genome), false)?;
            let dims: Vec<usize> = input
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| anyhow!("--input must be three integers: channels,height,width"))?;
            if dims.len() != 3 {
                bail!("--input must be three integers: channels,height,width");
            }
            let plan = compiler::compile(&g, (dims[0], dims[1], dims[2]), mem_limit);
            println!("nodes: {}", g.len());
            println!("{}", plan.pretty());
            println!("parameters: {}", plan.count_parameters());
            println!(
                "activation memory: {} elements per sample (limit {}){}",
                plan.estimate_memory(),
                mem_limit,
                match plan.truncated_at {
                    Some(i) => format!(" — truncated at step {i}"),
                    None => String::new(),
                }
            );
            Ok(())
        }
    }
}

fn load_genome(path: Option<&Path>, baseline: bool) -> Result<Genome> {
    if baseline {
        return Ok(comparator_genome());
    }
    let path = path.ok_or_else(|| anyhow!("provide --genome <file> or --baseline"))?;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Genome::from_json(&text).map_err(|e| anyhow!("invalid genome: {e}"))
}
