use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use sparse_ising::activation::Activation;
use sparse_ising::bench::{
    campaign, fps_run, gen_semiprime, pipeline, write_campaign_csv, Instance, PipelineConfig, Semiprime,
};
use sparse_ising::circuit::{build_factorizer, build_sat, Circuit};
use sparse_ising::cnf::CnfFormula;
use sparse_ising::coloring::{density, dsatur, Coloring};
use sparse_ising::error_models::{empirical_kl, mask_experiment, write_kl_csv, MaskExperiment, MaskKind};
use sparse_ising::gates::{gate_model, GateKind};
use sparse_ising::model::{boltzmann_exact, Beta, IsingModel, SpinState, MAX_ENUMERATION_NODES};
use sparse_ising::rng::RngKind;
use sparse_ising::sampler::{measure_fps, sample_histogram, AnnealSchedule, Chain, NoTarget, SamplerConfig, UpdateMode};
use sparse_ising::sparsify::{sparsify_circuit, DEFAULT_COPY_WEIGHT};
use sparse_ising::tts::{GoalObserver, RestartPolicy, Target, resolve_goal};

/// Sparse Ising machine toolkit.
#[derive(Parser)]
#[command(name = "sparse-ising", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an array-multiplier factorizer circuit.
    BuildFact(BuildFactArgs),
    /// Build a 3-SAT circuit from a DIMACS file.
    BuildSat(BuildSatArgs),
    /// Split high fan-out nodes so every node has at most k neighbors.
    Sparsify(SparsifyArgs),
    /// DSATUR-color a circuit into independent update blocks.
    Color(ColorArgs),
    /// Fixed-temperature sampling; compares against the exact distribution
    /// when the model is small enough.
    Sample(SampleArgs),
    /// One simulated-annealing run.
    Anneal(AnnealArgs),
    /// Time-to-solution campaign with restarts.
    Tts(TtsArgs),
    /// Flips per second over one or more problems.
    Fps(FpsArgs),
    /// KL curve of the error-mask models.
    Masks(MasksArgs),
    /// Random semiprime with two equal-width prime factors.
    GenSemiprime(GenSemiprimeArgs),
}

#[derive(Args, Clone)]
struct SamplerArgs {
    #[arg(long, default_value_t = 0.2)]
    beta_start: f64,
    #[arg(long, default_value_t = 5.0)]
    beta_end: f64,
    #[arg(long, default_value_t = 100)]
    beta_steps: usize,
    #[arg(long, default_value_t = 10)]
    sweeps_per_beta: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// chromatic, sequential or parallel.
    #[arg(long, default_value = "chromatic")]
    mode: UpdateMode,
    /// counter or lfsr.
    #[arg(long, default_value = "counter")]
    rng: RngKind,
    /// Round beta*J to this many fractional bits.
    #[arg(long)]
    quantized_beta: Option<u32>,
    /// Use a tanh lookup table with this output precision.
    #[arg(long)]
    lut_bits: Option<u32>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    record_every: u64,
}

impl SamplerArgs {
    fn config(&self) -> anyhow::Result<SamplerConfig> {
        Ok(SamplerConfig {
            mode: self.mode,
            rng: self.rng,
            seed: self.seed,
            schedule: AnnealSchedule::linear(self.beta_start, self.beta_end, self.beta_steps)?,
            sweeps_per_beta: self.sweeps_per_beta,
            quantized_beta: self.quantized_beta,
            activation: match self.lut_bits {
                Some(bits) => Activation::Lut { bits },
                None => Activation::Exact,
            },
            threads: self.threads,
            record_every: self.record_every,
        })
    }
}

#[derive(Args)]
struct BuildFactArgs {
    /// Bits per factor.
    #[arg(long)]
    m: usize,
    /// Product to clamp on the outputs.
    #[arg(long)]
    product: Option<u128>,
    /// Known factors to plant, as A,B.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<u64>>,
    /// Sparsify to this degree bound.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_COPY_WEIGHT)]
    jt: i32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildSatArgs {
    #[arg(long)]
    cnf: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_COPY_WEIGHT)]
    jt: i32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SparsifyArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_COPY_WEIGHT)]
    jt: i32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ColorArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A circuit JSON, a model JSON, or a single gate.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    #[arg(long)]
    circuit: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// COPY, NOT, AND, OR or FULL_ADDER.
    #[arg(long)]
    gate: Option<String>,
}

impl ModelSource {
    fn load(&self) -> anyhow::Result<IsingModel> {
        if let Some(path) = &self.circuit {
            return Ok(read_circuit(path)?.compose()?);
        }
        if let Some(path) = &self.model {
            return Ok(IsingModel::from_json(&read(path)?)?);
        }
        let name = self.gate.as_deref().unwrap_or_default();
        let kind = match name.to_ascii_uppercase().as_str() {
            "COPY" => GateKind::Copy,
            "NOT" => GateKind::Not,
            "AND" => GateKind::And,
            "OR" => GateKind::Or,
            "FA" | "FULL_ADDER" => GateKind::FullAdder,
            _ => bail!("unknown gate `{name}`"),
        };
        Ok(gate_model(kind))
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    source: ModelSource,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 100_000)]
    sweeps: u64,
    #[arg(long, default_value_t = 100)]
    burn_in: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "chromatic")]
    mode: UpdateMode,
    #[arg(long, default_value = "counter")]
    rng: RngKind,
    /// Histogram CSV (state,count,empirical,exact).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnnealArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Stop early at this target (100, 99 or 95).
    #[arg(long)]
    target: Option<Target>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Problem selection shared by `tts` and `fps`.
#[derive(Args)]
struct ProblemArgs {
    /// DIMACS files.
    #[arg(long, num_args = 1..)]
    cnf: Vec<PathBuf>,
    /// Semiprime widths; one generated instance per width.
    #[arg(long, num_args = 1..)]
    bits: Vec<u32>,
    /// Seed for semiprime generation.
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
    /// Degree bound (default 5 for factorization, 4 for SAT).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_COPY_WEIGHT)]
    jt: i32,
}

impl ProblemArgs {
    fn instances(&self) -> anyhow::Result<Vec<Instance>> {
        let mut out: Vec<Instance> = self.cnf.iter().map(Instance::sat).collect();
        for &bits in &self.bits {
            out.push(Instance::factorization(gen_semiprime(bits, self.instance_seed ^ bits as u64)?));
        }
        if out.is_empty() {
            bail!("give at least one --cnf or --bits");
        }
        Ok(out)
    }
}

#[derive(Args)]
struct TtsArgs {
    #[command(flatten)]
    problems: ProblemArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value = "99")]
    target: Target,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 1_000)]
    min_sweeps: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_sweeps: u64,
    /// Also write per-instance artifacts from one pipeline run.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Build and validate without sampling.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct FpsArgs {
    #[command(flatten)]
    problems: ProblemArgs,
    #[arg(long, default_value_t = 1_000)]
    sweeps: u64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MasksArgs {
    #[command(flatten)]
    source: ModelSource,
    /// single, double or both.
    #[arg(long, default_value = "both")]
    kind: String,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 400)]
    masks: usize,
    #[arg(long, default_value_t = 20_000)]
    samples: u64,
    #[arg(long, default_value_t = 100)]
    burn_in: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "counter")]
    rng: RngKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSemiprimeArgs {
    #[arg(long)]
    bits: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_circuit(path: &Path) -> anyhow::Result<Circuit> {
    Ok(Circuit::from_json(&read(path)?)?)
}

fn write_circuit(circuit: &Circuit, path: &Path) -> anyhow::Result<()> {
    fs::write(path, circuit.to_json()?).with_context(|| format!("writing {}", path.display()))
}

fn describe(circuit: &Circuit) -> anyhow::Result<()> {
    let model = circuit.compose()?;
    println!(
        "nodes {} edges {} max_degree {} density {:.4}%",
        model.len(),
        model.num_edges(),
        model.max_degree(),
        100.0 * density(&model)?
    );
    Ok(())
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn std::io::Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    })
}

/// Exit status 2 means the run completed without reaching its target.
fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::BuildFact(a) => {
            let mut c = build_factorizer(a.m)?;
            if let Some(p) = a.product {
                c.clamp_product(p)?;
            }
            if let Some(f) = &a.factors {
                if f.len() != 2 {
                    bail!("--factors takes exactly two values, A,B");
                }
                if a.product.is_none() {
                    c.clamp_product(f[0] as u128 * f[1] as u128)?;
                }
                c.plant_factors(f[0], f[1])?;
            }
            if let Some(k) = a.k {
                c = sparsify_circuit(&c, k, a.jt)?;
            }
            describe(&c)?;
            write_circuit(&c, &a.out)?;
        }
        Command::BuildSat(a) => {
            let cnf = CnfFormula::read(&a.cnf)?;
            let mut c = build_sat(&cnf)?;
            c.clamp_output_true()?;
            if let Some(k) = a.k {
                c = sparsify_circuit(&c, k, a.jt)?;
            }
            describe(&c)?;
            write_circuit(&c, &a.out)?;
        }
        Command::Sparsify(a) => {
            let c = sparsify_circuit(&read_circuit(&a.circuit)?, a.k, a.jt)?;
            describe(&c)?;
            write_circuit(&c, &a.out)?;
        }
        Command::Color(a) => {
            let model = read_circuit(&a.circuit)?.compose()?;
            let coloring = dsatur(&model);
            coloring.check(&model)?;
            println!(
                "colors {} max_degree {} density {:.4}%",
                coloring.num_colors(),
                model.max_degree(),
                100.0 * density(&model)?
            );
            if let Some(out) = &a.out {
                coloring.write_csv(fs::File::create(out)?)?;
            }
        }
        Command::Sample(a) => {
            let model = a.source.load()?;
            let beta = Beta::new(a.beta)?;
            let coloring = dsatur(&model);
            let mut chain = Chain::new(&model, Some(&coloring), a.rng, a.seed)?;
            if model.num_free() > MAX_ENUMERATION_NODES {
                for _ in 0..a.burn_in + a.sweeps {
                    chain.sweep(a.mode, beta)?;
                }
                println!("energy {} flips {}", chain.energy(), chain.flips());
                return Ok(true);
            }
            let counts = sample_histogram(&mut chain, a.mode, beta, a.burn_in, a.sweeps)?;
            let reference = match a.mode {
                UpdateMode::FullyParallel => sparse_ising::error_models::parallel_analytical(&model, beta)?,
                _ => boltzmann_exact(&model, beta)?,
            };
            println!("KL {:.6}", empirical_kl(&counts, &reference)?);
            let mut w = csv::Writer::from_writer(output(&a.out)?);
            w.write_record(["state", "count", "empirical", "exact"])?;
            for (k, &c) in counts.iter().enumerate() {
                w.serialize((reference.label(k), c, c as f64 / a.sweeps as f64, reference.probs()[k]))?;
            }
            w.flush()?;
        }
        Command::Anneal(a) => {
            let circuit = read_circuit(&a.circuit)?;
            let model = circuit.compose()?;
            let config = a.sampler.config()?;
            let coloring: Option<Coloring> = (config.mode == UpdateMode::Chromatic).then(|| dsatur(&model));
            let mut chain = Chain::from_config(&model, coloring.as_ref(), &config)?;
            let out = match a.target {
                Some(t) => {
                    let goal = resolve_goal(&circuit, t)?;
                    let mut obs = GoalObserver::new(&circuit, goal, chain.model().unit());
                    chain.anneal(&config, &mut obs)?
                }
                None => chain.anneal(&config, &mut NoTarget)?,
            };
            let best = SpinState::from_values(&model, out.best_state.clone())?;
            println!("best_energy {} final_energy {}", out.best_energy, out.final_energy);
            if let Some((a, b)) = circuit.decode_factors(&out.best_state) {
                println!("factors {a} x {b} = {}", a as u128 * b as u128);
            }
            if let Some(s) = circuit.satisfied_clauses(&out.best_state) {
                println!("satisfied_clauses {s}");
            }
            if let Some(dir) = &a.out_dir {
                fs::create_dir_all(dir)?;
                out.stats.write_csv(fs::File::create(dir.join("run.csv"))?)?;
                let fps = measure_fps(&out.stats).ok();
                let summary = serde_json::json!({
                    "fps": fps.map(|f| f.fps),
                    "flips_per_sweep": fps.map(|f| f.flips_per_sweep),
                    "sweeps": out.stats.sweeps,
                    "reached_at_sweep": out.reached_at.map(|r| r.0),
                    "reached_at_ns": out.reached_at.map(|r| r.1),
                    "best_energy": out.best_energy,
                    "best_state": best.to_hex(),
                });
                fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            }
            if a.target.is_some() && out.reached_at.is_none() {
                return Ok(false);
            }
        }
        Command::Tts(a) => {
            let instances = a.problems.instances()?;
            let mut all_reached = true;
            let mut rows = Vec::new();
            for inst in &instances {
                let config = PipelineConfig {
                    k: a.problems.k.unwrap_or(inst.default_k()),
                    j_t: a.problems.jt,
                    sampler: a.sampler.config()?,
                    target: a.target,
                    policy: RestartPolicy {
                        min_sweeps: a.min_sweeps,
                        growth: 2,
                        max_total_sweeps: a.max_sweeps,
                    },
                    dry_run: a.dry_run,
                };
                let report = pipeline(inst, &config, a.out_dir.as_deref())?;
                eprintln!(
                    "{}: nodes {} colors {} density {:.4}%",
                    inst.id,
                    report.graph.nodes,
                    report.graph.colors,
                    100.0 * report.graph.density
                );
                if a.dry_run {
                    continue;
                }
                let r = campaign(std::slice::from_ref(inst), a.repeats, &[a.target], &config)?;
                all_reached &= r.iter().all(|row| row.success_rate == 1.0);
                rows.extend(r);
            }
            if !a.dry_run {
                let path = a.out_dir.as_ref().map(|d| d.join("campaign.csv"));
                write_campaign_csv(&rows, output(&path)?)?;
            }
            return Ok(all_reached);
        }
        Command::Fps(a) => {
            let mut w = csv::Writer::from_writer(output(&a.out)?);
            w.write_record(["id", "nodes", "free_nodes", "colors", "sweeps", "flips", "wall_ns", "fps", "flips_per_sweep"])?;
            for inst in a.problems.instances()? {
                let built = sparse_ising::bench::build_instance(&inst, a.problems.k.unwrap_or(inst.default_k()), a.problems.jt)?;
                let r = fps_run(&built.circuit, &built.coloring, a.beta, a.sweeps, a.threads, a.seed)?;
                w.serialize((
                    &inst.id,
                    built.graph.nodes,
                    r.flips_per_sweep as u64,
                    built.graph.colors,
                    a.sweeps,
                    r.flips,
                    r.wall_ns,
                    r.fps,
                    r.flips_per_sweep,
                ))?;
            }
            w.flush()?;
        }
        Command::Masks(a) => {
            let model = a.source.load()?;
            let kinds = match a.kind.as_str() {
                "both" => vec![MaskKind::Single, MaskKind::Double],
                k => vec![k.parse()?],
            };
            let mut points = Vec::new();
            for kind in kinds {
                let exp = MaskExperiment {
                    kind,
                    beta: a.beta,
                    masks_per_rate: a.masks,
                    samples_per_mask: a.samples,
                    burn_in: a.burn_in,
                    error_rates: MaskExperiment::entry_grid(&model),
                    rng: a.rng,
                    seed: a.seed,
                };
                points.extend(mask_experiment(&model, &exp)?);
            }
            write_kl_csv(&points, output(&a.out)?)?;
        }
        Command::GenSemiprime(a) => {
            let s: Semiprime = gen_semiprime(a.bits, a.seed)?;
            println!("{}", serde_json::to_string(&s)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
