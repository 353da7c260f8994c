//! The generational search loop: train, evaluate, halve, clone-if-small,
//! elitism, crossover, mutation, under wall-clock / memory / iteration
//! budgets.

use crate::compiler::{self, ExecutionPlan, ModelState};
use crate::genome::{random_genome, Genome, InitConfig};
use crate::scalar::Scalar;
use crate::tasks::{make_batch, psnr, ImageDataset, RestorationTask, Split};
use crate::tensor::optim::OptimizerState;
use crate::variation::{crossover, mutate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub initial_population: usize,
    pub min_population: usize,
    pub elites: usize,
    pub crossover_prob: f64,
    pub mutation_rate: f64,
    /// Gradient iterations per individual per generation.
    pub train_iters: usize,
    pub minibatch: usize,
    pub val_minibatches: usize,
    pub max_generations: usize,
    pub wall_clock_budget_secs: f64,
    pub mem_limit_elements: usize,
    /// Seconds allowed for the first 1000 training iterations.
    pub individual_time_budget_secs: f64,
    pub init: InitConfig,
    pub seed: u64,
    /// 0 = one rayon task per individual; 1 = fully serial.
    pub threads: usize,
    pub keep_elite_weights: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            initial_population: 32,
            min_population: 8,
            elites: 2,
            crossover_prob: 0.5,
            mutation_rate: 0.5,
            train_iters: 20_000,
            minibatch: 8,
            val_minibatches: 1000,
            max_generations: 20,
            wall_clock_budget_secs: 7200.0,
            mem_limit_elements: 1 << 20,
            individual_time_budget_secs: 50.0,
            init: InitConfig::default(),
            seed: 0,
            threads: 0,
            keep_elite_weights: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_population < 2 {
            return Err("min_population must be >= 2".into());
        }
        if self.initial_population < self.min_population {
            return Err("initial_population must be >= min_population".into());
        }
        if self.elites >= self.min_population {
            return Err("elites must be < min_population".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err("crossover_prob must be in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err("mutation_rate must be in [0,1]".into());
        }
        if self.minibatch == 0 {
            return Err("minibatch must be positive".into());
        }
        if self.val_minibatches == 0 {
            return Err("val_minibatches must be positive".into());
        }
        if self.mem_limit_elements == 0 {
            return Err("mem_limit_elements must be positive".into());
        }
        if self.individual_time_budget_secs <= 0.0 {
            return Err("individual_time_budget_secs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub id: u64,
    pub generation: usize,
    pub parents: Vec<u64>,
    pub val_mse: f64,
    pub val_psnr: f64,
    pub train_curve: Vec<f64>,
    pub time_exceeded: bool,
    pub mem_truncated: bool,
    pub numeric_failure: bool,
    pub parameter_count: usize,
    pub seconds: f64,
}

impl FitnessRecord {
    pub fn csv_header() -> &'static str {
        "generation,id,parents,val_mse,val_psnr,parameters,time_exceeded,mem_truncated,numeric_failure,seconds"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3}",
            self.generation,
            self.id,
            self.parents
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            self.val_mse,
            self.val_psnr,
            self.parameter_count,
            self.time_exceeded,
            self.mem_truncated,
            self.numeric_failure,
            self.seconds
        )
    }
}

#[derive(Clone, Debug)]
pub struct Individual {
    pub id: u64,
    pub parents: Vec<u64>,
    pub genome: Genome,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainSettings {
    pub iters: usize,
    pub minibatch: usize,
    pub val_minibatches: usize,
    pub mem_limit_elements: usize,
    pub time_budget_secs: f64,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub task_seed: u64,
}

/// Trains one genome with its own optimizer genes and evaluates it on
/// fixed-seed validation minibatches.
pub fn train_individual<T: Scalar>(
    genome: &Genome,
    dataset: &ImageDataset<T>,
    task: &RestorationTask,
    settings: &TrainSettings,
) -> (ExecutionPlan, ModelState<T>, FitnessRecord) {
    let start = Instant::now();
    let img = dataset.images[0].shape;
    let input_shape = (task.input_channels(), img.h, img.w);
    let target_shape = (3usize, img.h, img.w);
    let plan = compiler::compile(genome, input_shape, settings.mem_limit_elements);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.train_seed);
    let mut state = compiler::init_params::<T, _>(&plan, &mut rng);
    let mut opt = OptimizerState::<T>::new(
        genome.optimizer.kind,
        genome.optimizer.lr0,
        genome.optimizer.decay,
    );

    let mut record = FitnessRecord {
        id: 0,
        generation: 0,
        parents: Vec::new(),
        val_mse: f64::INFINITY,
        val_psnr: f64::NEG_INFINITY,
        train_curve: Vec::new(),
        time_exceeded: false,
        mem_truncated: plan.truncated_at.is_some(),
        numeric_failure: false,
        parameter_count: plan.count_parameters(),
        seconds: 0.0,
    };

    let train_range = dataset.split_indices(Split::Train);
    'train: for it in 0..settings.iters {
        let indices: Vec<usize> = (0..settings.minibatch)
            .map(|_| rng.gen_range(train_range.clone()))
            .collect();
        let (input, target) = make_batch(dataset, &indices, task, settings.task_seed);
        let step = (|| -> Result<f64, crate::TensorError> {
            let mut exec = compiler::execute(&plan, &mut state, input, target_shape, true)?;
            let t = exec.tape.leaf(target);
            let loss = exec.tape.mse_loss(exec.output, t)?;
            let loss_val = exec.tape.value(loss).data[0].to_f64_lossy();
            exec.tape.backward(loss)?;
            let grads: Vec<_> = exec
                .param_vars
                .iter()
                .zip(&state.params)
                .map(|(&v, p)| {
                    exec.tape
                        .grad(v)
                        .cloned()
                        .unwrap_or_else(|| crate::TensorData::zeros(p.shape))
                })
                .collect();
            opt.step(&mut state.params, &grads)?;
            Ok(loss_val)
        })();
        match step {
            Ok(loss) => record.train_curve.push(loss),
            Err(_) => {
                record.numeric_failure = true;
                break 'train;
            }
        }
        // Wall-clock rule: 50 s per 1000 iterations, checked on a prorated
        // schedule so runaway individuals stop early.
        if (it + 1) % 50 == 0 || it + 1 == 1000 {
            let allowed = settings.time_budget_secs * (it + 1) as f64 / 1000.0;
            if start.elapsed().as_secs_f64() > allowed {
                record.time_exceeded = true;
                break 'train;
            }
        }
    }

    if !record.numeric_failure {
        match evaluate(&plan, &mut state, dataset, task, settings) {
            Ok(mse) => {
                record.val_mse = mse;
                record.val_psnr = psnr(mse);
            }
            Err(_) => record.numeric_failure = true,
        }
    }
    record.seconds = start.elapsed().as_secs_f64();
    (plan, state, record)
}

/// Mean validation MSE over `val_minibatches` fixed-seed minibatches.
pub fn evaluate<T: Scalar>(
    plan: &ExecutionPlan,
    state: &mut ModelState<T>,
    dataset: &ImageDataset<T>,
    task: &RestorationTask,
    settings: &TrainSettings,
) -> Result<f64, crate::TensorError> {
    let img = dataset.images[0].shape;
    let target_shape = (3usize, img.h, img.w);
    let val_range = dataset.split_indices(Split::Validation);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.eval_seed);
    let mut total = 0.0;
    for _ in 0..settings.val_minibatches {
        let indices: Vec<usize> = (0..settings.minibatch)
            .map(|_| rng.gen_range(val_range.clone()))
            .collect();
        let (input, target) = make_batch(dataset, &indices, task, settings.task_seed);
        let mut exec = compiler::execute(plan, state, input, target_shape, false)?;
        let t = exec.tape.leaf(target);
        let loss = exec.tape.mse_loss(exec.output, t)?;
        let v = exec.tape.value(loss).data[0].to_f64_lossy();
        if !v.is_finite() {
            return Err(crate::TensorError::NonFinite("validation loss"));
        }
        total += v;
    }
    Ok(total / settings.val_minibatches as f64)
}

#[derive(Clone, Debug)]
pub struct Evaluated {
    pub individual: Individual,
    pub record: FitnessRecord,
}

/// Fitness ordering: lower validation MSE, ties by fewer parameters,
/// then lower id.
pub fn fitness_order(a: &Evaluated, b: &Evaluated) -> std::cmp::Ordering {
    a.record
        .val_mse
        .total_cmp(&b.record.val_mse)
        .then(a.record.parameter_count.cmp(&b.record.parameter_count))
        .then(a.individual.id.cmp(&b.individual.id))
}

/// Selection + reproduction: kill the worst half, clone everyone if the
/// population falls below the minimum, copy elites unchanged, crossover
/// with probability p_c, then mutate all non-elites.
pub fn step_generation<R: Rng>(
    mut evaluated: Vec<Evaluated>,
    config: &SearchConfig,
    next_id: &mut u64,
    rng: &mut R,
) -> Vec<Individual> {
    evaluated.sort_by(fitness_order);
    let survivors_len = (evaluated.len() / 2).max(1);
    evaluated.truncate(survivors_len);
    let mut pool: Vec<Individual> = evaluated.into_iter().map(|e| e.individual).collect();
    if pool.len() < config.min_population {
        let clones: Vec<Individual> = pool.clone();
        pool.extend(clones);
    }

    let mut next = Vec::with_capacity(pool.len());
    for (rank, ind) in pool.iter().enumerate() {
        if rank < config.elites {
            // Elites pass through bit-exact.
            next.push(Individual {
                id: ind.id,
                parents: ind.parents.clone(),
                genome: ind.genome.clone(),
            });
            continue;
        }
        let mut genome = ind.genome.clone();
        let mut parents = vec![ind.id];
        if rng.gen_bool(config.crossover_prob) {
            let partner = &pool[rng.gen_range(0..pool.len())];
            parents.push(partner.id);
            genome = crossover(&genome, &partner.genome, rng);
        }
        genome = mutate(&genome, config.mutation_rate, rng);
        let id = *next_id;
        *next_id += 1;
        next.push(Individual {
            id,
            parents,
            genome,
        });
    }
    next
}

#[derive(Debug)]
pub struct SearchResult {
    pub best_genome: Genome,
    pub best_state: ModelState<f32>,
    pub best_record: FitnessRecord,
    pub log: Vec<FitnessRecord>,
    pub generations_run: usize,
    pub population_sizes: Vec<usize>,
    /// Seed the run used for per-image degradations; evaluating the best
    /// model on held-out splits must reuse it.
    pub task_seed: u64,
}

fn mix_seed(seed: u64, gen: usize, id: u64) -> u64 {
    let mut x = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(gen as u64)
        .wrapping_mul(0xBF58476D1CE4E5B9)
        .wrapping_add(id);
    x ^= x >> 31;
    x.wrapping_mul(0x94D049BB133111EB)
}

/// Runs the generational loop until the wall-clock budget expires or
/// `max_generations` is reached; returns the best-ever individual with
/// its trained parameters and the full per-individual log.
pub fn run_search(
    config: &SearchConfig,
    task: &RestorationTask,
    dataset: &ImageDataset<f32>,
) -> SearchResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut next_id: u64 = 0;
    let mut population: Vec<Individual> = (0..config.initial_population)
        .map(|_| {
            let id = next_id;
            next_id += 1;
            Individual {
                id,
                parents: Vec::new(),
                genome: random_genome(&config.init, &mut rng),
            }
        })
        .collect();

    let task_seed = mix_seed(config.seed, 0, 0x7461736b);
    let mut log: Vec<FitnessRecord> = Vec::new();
    let mut population_sizes = Vec::new();
    let mut best: Option<(Genome, ModelState<f32>, FitnessRecord)> = None;
    let mut generations_run = 0;

    // One evaluation seed for the whole run so fitness is comparable
    // across generations and best-ever tracking is meaningful.
    let eval_seed = mix_seed(config.seed, 0, 0x6576616c);
    for gen in 0..config.max_generations {
        population_sizes.push(population.len());
        let settings_for = |ind: &Individual| TrainSettings {
            iters: config.train_iters,
            minibatch: config.minibatch,
            val_minibatches: config.val_minibatches,
            mem_limit_elements: config.mem_limit_elements,
            time_budget_secs: config.individual_time_budget_secs,
            train_seed: mix_seed(config.seed, gen, ind.id),
            eval_seed,
            task_seed,
        };
        let train_one = |ind: &Individual| {
            let settings = settings_for(ind);
            let (_, state, mut record) =
                train_individual::<f32>(&ind.genome, dataset, task, &settings);
            record.id = ind.id;
            record.generation = gen;
            record.parents = ind.parents.clone();
            (ind.clone(), state, record)
        };
        let results: Vec<(Individual, ModelState<f32>, FitnessRecord)> = if config.threads == 1 {
            population.iter().map(train_one).collect()
        } else {
            population.par_iter().map(train_one).collect()
        };

        let mut evaluated = Vec::with_capacity(results.len());
        for (individual, state, record) in results {
            let better = match &best {
                Some((_, _, b)) => record.val_mse < b.val_mse,
                None => true,
            };
            if better && !record.numeric_failure {
                best = Some((individual.genome.clone(), state, record.clone()));
            }
            log.push(record.clone());
            evaluated.push(Evaluated { individual, record });
        }
        generations_run = gen + 1;

        if start.elapsed().as_secs_f64() >= config.wall_clock_budget_secs {
            break;
        }
        if gen + 1 < config.max_generations {
            population = step_generation(evaluated, config, &mut next_id, &mut rng);
        }
    }

    let (best_genome, best_state, best_record) = best.unwrap_or_else(|| {
        // Everything failed numerically; fall back to the first individual.
        let ind = &population[0];
        let settings = TrainSettings {
            iters: 0,
            minibatch: config.minibatch,
            val_minibatches: 1,
            mem_limit_elements: config.mem_limit_elements,
            time_budget_secs: config.individual_time_budget_secs,
            train_seed: config.seed,
            eval_seed: config.seed,
            task_seed,
        };
        let (_, state, record) = train_individual::<f32>(&ind.genome, dataset, task, &settings);
        (ind.genome.clone(), state, record)
    });

    SearchResult {
        best_genome,
        best_state,
        best_record,
        log,
        generations_run,
        population_sizes,
        task_seed,
    }
}
