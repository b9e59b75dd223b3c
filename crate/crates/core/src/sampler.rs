//! Gibbs sampling engines and simulated annealing.
//!
//! Chromatic mode visits color blocks in ascending order; nodes inside a
//! block are independent, so updating them one after another or all at once
//! gives the same result. Every node draws from its own random stream, which
//! makes trajectories independent of update order and thread count.

use std::io::Write;
use std::sync::atomic::{AtomicI8, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activation::{Activation, Nonlinearity};
use crate::coloring::Coloring;
use crate::error::{Error, Result};
use crate::model::{Beta, IsingModel, SpinState};
use crate::rng::{mix64, node_seed, NodeStreams, RngKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    #[default]
    Chromatic,
    SequentialGibbs,
    FullyParallel,
}

impl std::str::FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chromatic" => Ok(UpdateMode::Chromatic),
            "sequential" | "sequential_gibbs" => Ok(UpdateMode::SequentialGibbs),
            "parallel" | "fully_parallel" => Ok(UpdateMode::FullyParallel),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}`"))),
        }
    }
}

/// Linear inverse-temperature ramp over `steps` levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub steps: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            beta_start: 0.2,
            beta_end: 5.0,
            steps: 100,
        }
    }
}

impl AnnealSchedule {
    pub fn linear(beta_start: f64, beta_end: f64, steps: usize) -> Result<Self> {
        let s = AnnealSchedule {
            beta_start,
            beta_end,
            steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn fixed(beta: f64) -> Result<Self> {
        Self::linear(beta, beta, 1)
    }

    pub fn validate(&self) -> Result<()> {
        Beta::new(self.beta_start)?;
        Beta::new(self.beta_end)?;
        if self.beta_end < self.beta_start {
            return Err(Error::InvalidArgument(
                "annealing schedule must be nondecreasing".into(),
            ));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        Ok(())
    }

    pub fn beta_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            self.beta_start
        } else {
            let t = step.min(self.steps - 1) as f64 / (self.steps - 1) as f64;
            self.beta_start + (self.beta_end - self.beta_start) * t
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: UpdateMode,
    pub rng: RngKind,
    pub seed: u64,
    pub schedule: AnnealSchedule,
    pub sweeps_per_beta: u64,
    /// Round `beta * J` and `beta * h` to this many fractional bits.
    pub quantized_beta: Option<u32>,
    pub activation: Activation,
    /// Worker threads for chromatic sweeps; 1 runs serially.
    pub threads: usize,
    /// Keep a trace record every this many sweeps (0: final record only).
    pub record_every: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: UpdateMode::Chromatic,
            rng: RngKind::CounterBased,
            seed: 0,
            schedule: AnnealSchedule::default(),
            sweeps_per_beta: 10,
            quantized_beta: None,
            activation: Activation::Exact,
            threads: 1,
            record_every: 0,
        }
    }
}

impl SamplerConfig {
    pub fn total_sweeps(&self) -> u64 {
        self.schedule.steps as u64 * self.sweeps_per_beta
    }
}

/// One trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sweep: u64,
    pub beta: f64,
    pub energy: f64,
    pub satisfied_clauses: Option<usize>,
    pub cumulative_flips: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub records: Vec<RunRecord>,
    pub sweeps: u64,
    pub flips: u64,
    /// Time spent sweeping, excluding setup and output.
    pub wall_ns: u64,
    pub free_nodes: usize,
}

impl RunStats {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "sweep",
            "beta",
            "energy",
            "satisfied_clauses",
            "cumulative_flips",
            "wall_ns",
        ])?;
        for r in &self.records {
            w.serialize((
                r.sweep,
                r.beta,
                r.energy,
                r.satisfied_clauses,
                r.cumulative_flips,
                r.wall_ns,
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub fps: f64,
    pub flips: u64,
    pub wall_ns: u64,
    pub flips_per_sweep: f64,
}

/// Flips per wall-clock second over the sweeping time of a run.
pub fn measure_fps(stats: &RunStats) -> Result<FpsReport> {
    if stats.sweeps == 0 || stats.wall_ns == 0 {
        return Err(Error::EmptyRun);
    }
    Ok(FpsReport {
        fps: stats.flips as f64 / (stats.wall_ns as f64 * 1e-9),
        flips: stats.flips,
        wall_ns: stats.wall_ns,
        flips_per_sweep: stats.flips as f64 / stats.sweeps as f64,
    })
}

/// Checked after every sweep during annealing.
pub trait Observer {
    /// Whether the run may stop early. `energy` is in stored bipolar units.
    fn reached(&mut self, values: &[i8], energy: i64) -> bool;

    /// Clause count to place in trace records, if meaningful.
    fn clauses(&mut self, _values: &[i8]) -> Option<usize> {
        None
    }
}

/// Observer that never stops a run.
pub struct NoTarget;

impl Observer for NoTarget {
    fn reached(&mut self, _values: &[i8], _energy: i64) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub final_state: Vec<i8>,
    pub best_state: Vec<i8>,
    /// Best energy seen, in real units.
    pub best_energy: f64,
    pub final_energy: f64,
    pub stats: RunStats,
    /// Sweep count and sweeping time when the observer first reported success.
    pub reached_at: Option<(u64, u64)>,
}

/// Scaled input `beta * I_i` for reading node values through `read`.
#[inline]
fn beta_field(
    model: &IsingModel,
    quant: Option<u32>,
    read: impl Fn(usize) -> i8,
    i: usize,
    beta: f64,
) -> (i64, f64) {
    let mut raw = model.h()[i] as i64;
    match quant {
        None => {
            for &(j, w) in model.neighbors(i) {
                raw += w as i64 * read(j as usize) as i64;
            }
            (raw, beta * model.unit() * raw as f64)
        }
        Some(bits) => {
            let scale = (bits as f64).exp2();
            let q = |w: i32| (beta * model.unit() * w as f64 * scale).round() / scale;
            let mut scaled = q(model.h()[i]);
            for &(j, w) in model.neighbors(i) {
                let m = read(j as usize);
                raw += w as i64 * m as i64;
                scaled += q(w) * m as f64;
            }
            (raw, scaled)
        }
    }
}

/// A single Markov chain over a bipolar copy of a model.
#[derive(Debug, Clone)]
pub struct Chain {
    model: IsingModel,
    coloring: Option<Coloring>,
    values: Vec<i8>,
    streams: NodeStreams,
    energy: i64,
    flips: u64,
    sweeps: u64,
    free: Vec<usize>,
    nonlinearity: Nonlinearity,
    quant: Option<u32>,
    buffer: Vec<i64>,
}

impl Chain {
    /// Random initial state drawn from `seed`; a coloring, if given, must be proper.
    pub fn new(
        model: &IsingModel,
        coloring: Option<&Coloring>,
        rng: RngKind,
        seed: u64,
    ) -> Result<Self> {
        let model = model.bipolar()?;
        if let Some(c) = coloring {
            c.check(&model)?;
        }
        let n = model.len();
        let mut values = SpinState::new(&model).into_values();
        let init_seed = mix64(seed ^ 0x5EED_1A17_0000_0001);
        for i in model.free_nodes() {
            values[i] = if node_seed(init_seed, i) & 1 == 1 { 1 } else { -1 };
        }
        let energy = model.energy_raw_values(&values);
        Ok(Chain {
            free: model.free_nodes(),
            streams: NodeStreams::new(rng, seed, n),
            coloring: coloring.cloned(),
            nonlinearity: Nonlinearity::Exact,
            quant: None,
            buffer: vec![0; n],
            model,
            values,
            energy,
            flips: 0,
            sweeps: 0,
        })
    }

    pub fn from_config(
        model: &IsingModel,
        coloring: Option<&Coloring>,
        config: &SamplerConfig,
    ) -> Result<Self> {
        let mut chain = Self::new(model, coloring, config.rng, config.seed)?;
        chain.set_activation(config.activation)?;
        chain.quant = config.quantized_beta;
        Ok(chain)
    }

    pub fn set_activation(&mut self, activation: Activation) -> Result<()> {
        self.nonlinearity = Nonlinearity::new(activation)?;
        Ok(())
    }

    pub fn set_quantized_beta(&mut self, bits: Option<u32>) {
        self.quant = bits;
    }

    /// Replaces the state (bipolar values; clamps must hold).
    pub fn set_state(&mut self, values: &[i8]) -> Result<()> {
        let state = SpinState::from_values(&self.model, values.to_vec())?;
        self.values = state.into_values();
        self.energy = self.model.energy_raw_values(&self.values);
        Ok(())
    }

    pub fn model(&self) -> &IsingModel {
        &self.model
    }

    pub fn coloring(&self) -> Option<&Coloring> {
        self.coloring.as_ref()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn state(&self) -> SpinState {
        SpinState::from_values(&self.model, self.values.clone()).expect("chain state is valid")
    }

    /// Current energy in stored units, maintained incrementally.
    pub fn energy_raw(&self) -> i64 {
        self.energy
    }

    pub fn energy(&self) -> f64 {
        self.energy as f64 * self.model.unit()
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Applies a p-bit decision computed elsewhere (error models).
    pub(crate) fn apply(&mut self, i: usize, new: i8) {
        let old = self.values[i];
        if new != old {
            let raw = self.model.field_raw(&self.values, i);
            self.energy -= (new - old) as i64 * raw;
            self.values[i] = new;
        }
        self.flips += 1;
    }

    pub(crate) fn finish_sweep(&mut self) {
        self.sweeps += 1;
    }

    pub(crate) fn decide(&mut self, i: usize, scaled_field: f64) -> i8 {
        let u = self.streams.signed(i);
        if self.nonlinearity.tanh(scaled_field) > u {
            1
        } else {
            -1
        }
    }

    #[inline]
    fn update_node(&mut self, i: usize, beta: f64) {
        let values = &self.values;
        let (raw, scaled) = beta_field(&self.model, self.quant, |j| values[j], i, beta);
        let u = self.streams.signed(i);
        let new = if self.nonlinearity.tanh(scaled) > u { 1 } else { -1 };
        let old = self.values[i];
        if new != old {
            self.energy -= (new - old) as i64 * raw;
            self.values[i] = new;
        }
        self.flips += 1;
    }

    pub fn sweep(&mut self, mode: UpdateMode, beta: Beta) -> Result<()> {
        match mode {
            UpdateMode::Chromatic => self.sweep_chromatic(beta),
            UpdateMode::SequentialGibbs => {
                self.sweep_sequential(beta);
                Ok(())
            }
            UpdateMode::FullyParallel => {
                self.sweep_parallel(beta);
                Ok(())
            }
        }
    }

    /// One pass over the color blocks in ascending order.
    pub fn sweep_chromatic(&mut self, beta: Beta) -> Result<()> {
        let coloring = self
            .coloring
            .take()
            .ok_or_else(|| Error::InvalidArgument("chromatic mode needs a coloring".into()))?;
        for block in coloring.blocks() {
            for &i in block {
                self.update_node(i, beta.value());
            }
        }
        self.coloring = Some(coloring);
        self.sweeps += 1;
        Ok(())
    }

    /// Standard Gibbs: free nodes one at a time in index order.
    pub fn sweep_sequential(&mut self, beta: Beta) {
        for k in 0..self.free.len() {
            let i = self.free[k];
            self.update_node(i, beta.value());
        }
        self.sweeps += 1;
    }

    /// Every free node updated at once from the previous state.
    pub fn sweep_parallel(&mut self, beta: Beta) {
        let b = beta.value();
        let mut decisions = std::mem::take(&mut self.buffer);
        for &i in &self.free {
            let values = &self.values;
            let (_, scaled) = beta_field(&self.model, self.quant, |j| values[j], i, b);
            let u = self.streams.signed(i);
            decisions[i] = if self.nonlinearity.tanh(scaled) > u { 1 } else { -1 };
        }
        for &i in &self.free {
            self.values[i] = decisions[i] as i8;
        }
        self.buffer = decisions;
        self.flips += self.free.len() as u64;
        self.energy = self.model.energy_raw_values(&self.values);
        self.sweeps += 1;
    }

    /// Runs `count` chromatic sweeps at one temperature with the nodes of
    /// every block split into `threads` tiles, one per worker, and a barrier
    /// between blocks. The trajectory is identical to serial chromatic sweeps.
    pub fn sweep_chromatic_tiled(&mut self, beta: Beta, count: u64, threads: usize) -> Result<()> {
        if threads <= 1 {
            for _ in 0..count {
                self.sweep_chromatic(beta)?;
            }
            return Ok(());
        }
        let coloring = self
            .coloring
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("chromatic mode needs a coloring".into()))?;
        let tiles: Vec<Vec<&[usize]>> = (0..threads)
            .map(|t| {
                coloring
                    .blocks()
                    .iter()
                    .map(|block| {
                        let lo = block.len() * t / threads;
                        let hi = block.len() * (t + 1) / threads;
                        &block[lo..hi]
                    })
                    .collect()
            })
            .collect();
        let model = &self.model;
        let quant = self.quant;
        let nonlinearity = &self.nonlinearity;
        let b = beta.value();
        // AtomicI8 has the same size, alignment and bit validity as i8.
        let values: &[AtomicI8] =
            unsafe { &*(self.values.as_mut_slice() as *mut [i8] as *const [AtomicI8]) };
        let streams = self.streams.handle();
        let barrier = Barrier::new(threads);

        let work = |tile: &[&[usize]]| -> (i64, u64) {
            let mut delta = 0i64;
            let mut flips = 0u64;
            for _ in 0..count {
                for nodes in tile {
                    for &i in *nodes {
                        let read = |j: usize| values[j].load(Ordering::Relaxed);
                        let (raw, scaled) = beta_field(model, quant, read, i, b);
                        // Each node lives in exactly one tile.
                        let u = unsafe { streams.signed(i) };
                        let new = if nonlinearity.tanh(scaled) > u { 1 } else { -1 };
                        let old = values[i].load(Ordering::Relaxed);
                        if new != old {
                            delta -= (new - old) as i64 * raw;
                            values[i].store(new, Ordering::Relaxed);
                        }
                        flips += 1;
                    }
                    barrier.wait();
                }
            }
            (delta, flips)
        };

        let (delta, flips) = std::thread::scope(|scope| {
            let handles: Vec<_> = tiles[1..]
                .iter()
                .map(|tile| scope.spawn(|| work(tile)))
                .collect();
            let mut total = work(&tiles[0]);
            for h in handles {
                let (d, f) = h.join().expect("sweep worker panicked");
                total.0 += d;
                total.1 += f;
            }
            total
        });
        self.energy += delta;
        self.flips += flips;
        self.sweeps += count;
        Ok(())
    }

    /// Runs the configured schedule from the current state.
    pub fn anneal(
        &mut self,
        config: &SamplerConfig,
        observer: &mut dyn Observer,
    ) -> Result<AnnealOutcome> {
        config.schedule.validate()?;
        if config.mode == UpdateMode::Chromatic && self.coloring.is_none() {
            return Err(Error::InvalidArgument("chromatic mode needs a coloring".into()));
        }
        let unit = self.model.unit();
        let start_flips = self.flips;
        let start_sweeps = self.sweeps;
        let mut stats = RunStats {
            free_nodes: self.free.len(),
            ..RunStats::default()
        };
        let mut best_energy = self.energy;
        let mut best_state = self.values.clone();
        let mut elapsed = 0u64;
        let mut reached_at = None;
        let mut beta = config.schedule.beta_start;

        if observer.reached(&self.values, self.energy) {
            reached_at = Some((0, 0));
        }
        let tiled = config.threads > 1 && config.mode == UpdateMode::Chromatic;
        'outer: for step in 0..config.schedule.steps {
            if reached_at.is_some() {
                break;
            }
            beta = config.schedule.beta_at(step);
            let b = Beta::new(beta)?;
            let batch = if tiled { config.sweeps_per_beta } else { 1 };
            let mut done = 0;
            while done < config.sweeps_per_beta {
                let t0 = Instant::now();
                if tiled {
                    self.sweep_chromatic_tiled(b, batch, config.threads)?;
                } else {
                    self.sweep(config.mode, b)?;
                }
                elapsed += t0.elapsed().as_nanos() as u64;
                done += batch;
                let sweep = self.sweeps - start_sweeps;
                if self.energy < best_energy {
                    best_energy = self.energy;
                    best_state.copy_from_slice(&self.values);
                }
                if config.record_every > 0 && sweep.is_multiple_of(config.record_every) {
                    stats.records.push(RunRecord {
                        sweep,
                        beta,
                        energy: self.energy as f64 * unit,
                        satisfied_clauses: observer.clauses(&self.values),
                        cumulative_flips: self.flips - start_flips,
                        wall_ns: elapsed,
                    });
                }
                if observer.reached(&self.values, self.energy) {
                    reached_at = Some((sweep, elapsed));
                    break 'outer;
                }
            }
        }
        stats.sweeps = self.sweeps - start_sweeps;
        stats.flips = self.flips - start_flips;
        stats.wall_ns = elapsed;
        if stats.records.last().map(|r| r.sweep) != Some(stats.sweeps) {
            stats.records.push(RunRecord {
                sweep: stats.sweeps,
                beta,
                energy: self.energy as f64 * unit,
                satisfied_clauses: observer.clauses(&self.values),
                cumulative_flips: stats.flips,
                wall_ns: elapsed,
            });
        }
        Ok(AnnealOutcome {
            final_state: self.values.clone(),
            best_state,
            best_energy: best_energy as f64 * unit,
            final_energy: self.energy as f64 * unit,
            stats,
            reached_at,
        })
    }
}

/// Builds a chain from `config` and runs its schedule.
pub fn anneal(
    model: &IsingModel,
    coloring: Option<&Coloring>,
    config: &SamplerConfig,
    observer: &mut dyn Observer,
) -> Result<AnnealOutcome> {
    let mut chain = Chain::from_config(model, coloring, config)?;
    chain.anneal(config, observer)
}

/// Empirical distribution over the free nodes: `sweeps` samples, one after
/// each sweep, following `burn_in` discarded sweeps.
pub fn sample_histogram(
    chain: &mut Chain,
    mode: UpdateMode,
    beta: Beta,
    burn_in: u64,
    sweeps: u64,
) -> Result<Vec<u64>> {
    let free = chain.free_nodes().to_vec();
    if free.len() > crate::model::MAX_ENUMERATION_NODES {
        return Err(Error::TooManyFreeNodes {
            free: free.len(),
            limit: crate::model::MAX_ENUMERATION_NODES,
        });
    }
    for _ in 0..burn_in {
        chain.sweep(mode, beta)?;
    }
    let mut counts = vec![0u64; 1 << free.len()];
    for _ in 0..sweeps {
        chain.sweep(mode, beta)?;
        counts[crate::model::state_index(&free, chain.values())] += 1;
    }
    Ok(counts)
}
