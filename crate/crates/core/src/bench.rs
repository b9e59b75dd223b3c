//! Problem generation, the build-sparsify-color-anneal pipeline, and
//! repeat campaigns.

use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_factorizer, build_sat, Circuit, Problem};
use crate::cnf::CnfFormula;
use crate::coloring::{density, dsatur, Coloring};
use crate::error::{Error, Result};
use crate::model::{Beta, SpinState};
use crate::rng::{mix64, RngKind};
use crate::sampler::{measure_fps, Chain, FpsReport, RunStats, SamplerConfig};
use crate::sparsify::{predict_sparse_count, sparsify_circuit, ProblemSize, DEFAULT_COPY_WEIGHT};
use crate::tts::{measure_tts, RestartPolicy, Target, TtsResult};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Miller-Rabin with `rounds` random bases.
pub fn is_probable_prime<R: Rng + ?Sized>(n: u64, rounds: usize, rng: &mut R) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_range(2..n - 1);
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Semiprime {
    pub bits: u32,
    pub p: u128,
    pub a: u64,
    pub b: u64,
}

impl Semiprime {
    /// A known pair; `p` must come out at exactly `bits` bits.
    pub fn from_factors(a: u64, b: u64) -> Self {
        let p = a as u128 * b as u128;
        Semiprime {
            bits: 128 - p.leading_zeros(),
            p,
            a: a.min(b),
            b: a.max(b),
        }
    }
}

/// Random `bits`-bit semiprime with two `bits/2`-bit prime factors.
pub fn gen_semiprime(bits: u32, seed: u64) -> Result<Semiprime> {
    if bits < 4 || bits % 2 == 1 || bits > 64 {
        return Err(Error::InvalidArgument(format!(
            "semiprime width must be even and in 4..=64, got {bits}"
        )));
    }
    let half = bits / 2;
    let mut rng = StdRng::seed_from_u64(seed);
    let lo = 1u64 << (half - 1);
    let hi = (1u64 << half) - 1;
    let prime = |rng: &mut StdRng| loop {
        let c = rng.gen_range(lo..=hi);
        if is_probable_prime(c, 64, rng) {
            return c;
        }
    };
    loop {
        let a = prime(&mut rng);
        let b = prime(&mut rng);
        let s = Semiprime::from_factors(a, b);
        if s.bits == bits {
            return Ok(s);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    Factorization(Semiprime),
    Sat { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(flatten)]
    pub kind: InstanceKind,
}

impl Instance {
    pub fn factorization(s: Semiprime) -> Self {
        Instance {
            id: format!("fact{}-{}", s.bits, s.p),
            kind: InstanceKind::Factorization(s),
        }
    }

    pub fn sat(path: impl AsRef<Path>) -> Self {
        let path = path.as_ref().to_path_buf();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sat".into());
        Instance {
            id,
            kind: InstanceKind::Sat { path },
        }
    }

    /// Size along the x axis of campaign plots: product bits or clause count.
    pub fn size(&self) -> Result<usize> {
        Ok(match &self.kind {
            InstanceKind::Factorization(s) => s.bits as usize,
            InstanceKind::Sat { path } => CnfFormula::read(path)?.num_clauses(),
        })
    }

    /// Fused circuit with outputs clamped and, for factorization, the
    /// factors planted.
    pub fn build(&self) -> Result<Circuit> {
        match &self.kind {
            InstanceKind::Factorization(s) => {
                let mut c = build_factorizer(s.bits as usize / 2)?;
                c.clamp_product(s.p)?;
                c.plant_factors(s.a, s.b)?;
                Ok(c)
            }
            InstanceKind::Sat { path } => {
                let mut c = build_sat(&CnfFormula::read(path)?)?;
                c.clamp_output_true()?;
                Ok(c)
            }
        }
    }

    /// Default degree bound for the problem family.
    pub fn default_k(&self) -> usize {
        match self.kind {
            InstanceKind::Factorization(_) => 5,
            InstanceKind::Sat { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub j_t: i32,
    pub sampler: SamplerConfig,
    pub target: Target,
    pub policy: RestartPolicy,
    /// Build and validate only.
    pub dry_run: bool,
}

impl PipelineConfig {
    pub fn new(k: usize, target: Target) -> Self {
        PipelineConfig {
            k,
            j_t: DEFAULT_COPY_WEIGHT,
            sampler: SamplerConfig::default(),
            target,
            policy: RestartPolicy::default(),
            dry_run: false,
        }
    }
}

/// Graph statistics of a built instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub fused_nodes: usize,
    pub nodes: usize,
    pub predicted_nodes: Option<usize>,
    pub edges: usize,
    pub max_degree: usize,
    pub density: f64,
    pub colors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub id: String,
    pub graph: GraphReport,
    pub tts: Option<TtsResult>,
    pub fps: Option<FpsReport>,
}

/// Summary written next to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub nodes: usize,
    pub colors: usize,
    pub target: Target,
    pub success: bool,
    pub tts_sweeps: u64,
    pub tts_ns: u64,
    pub attempts: usize,
    pub fps: Option<f64>,
    pub flips_per_sweep: Option<f64>,
    pub best_energy: f64,
    /// Best state, one bit per node, little-endian hex.
    pub best_state: String,
    pub decoded: Option<String>,
}

/// Built artifacts of an instance.
pub struct Built {
    pub circuit: Circuit,
    pub coloring: Coloring,
    pub graph: GraphReport,
}

/// Builds, sparsifies to degree `k`, colors and cross-checks the node count.
pub fn build_instance(instance: &Instance, k: usize, j_t: i32) -> Result<Built> {
    let fused = instance.build()?;
    let fused_nodes = fused.n;
    let predicted = match &fused.problem {
        Problem::Factorizer(l) => {
            predict_sparse_count(ProblemSize::Factorizer { m: l.m }, k).ok()
        }
        Problem::Sat(l) => {
            let every_var_occurs = {
                let mut seen = vec![false; l.cnf.v];
                for clause in &l.cnf.clauses {
                    for lit in clause {
                        seen[lit.unsigned_abs() as usize - 1] = true;
                    }
                }
                seen.iter().all(|&s| s)
            };
            if every_var_occurs {
                predict_sparse_count(ProblemSize::Sat { c: l.cnf.num_clauses() }, k).ok()
            } else {
                None
            }
        }
        Problem::Generic => None,
    };
    let circuit = sparsify_circuit(&fused, k, j_t)?;
    if let Some(p) = predicted {
        if p != circuit.n {
            return Err(Error::InvalidArgument(format!(
                "built {} nodes but the count formula gives {p}",
                circuit.n
            )));
        }
    }
    let model = circuit.compose()?;
    if model.max_degree() > k {
        return Err(Error::DegreeBoundTooSmall {
            k,
            reason: format!("sparsified graph has degree {}", model.max_degree()),
        });
    }
    let coloring = dsatur(&model);
    coloring.check(&model)?;
    let graph = GraphReport {
        fused_nodes,
        nodes: circuit.n,
        predicted_nodes: predicted,
        edges: model.num_edges(),
        max_degree: model.max_degree(),
        density: density(&model)?,
        colors: coloring.num_colors(),
    };
    Ok(Built {
        circuit,
        coloring,
        graph,
    })
}

fn decode(circuit: &Circuit, state: &[i8]) -> Option<String> {
    if state.is_empty() {
        return None;
    }
    if let Some((a, b)) = circuit.decode_factors(state) {
        return Some(format!("{a}x{b}"));
    }
    circuit
        .satisfied_clauses(state)
        .map(|s| format!("{s}/{} clauses", circuit.sat().map_or(0, |l| l.cnf.num_clauses())))
}

/// build, sparsify, color, anneal. With `out_dir`, writes `<id>.circuit.json`,
/// `<id>.colors.csv`, `<id>.run.csv` and `<id>.summary.json`.
pub fn pipeline(instance: &Instance, config: &PipelineConfig, out_dir: Option<&Path>) -> Result<PipelineReport> {
    let built = build_instance(instance, config.k, config.j_t)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.circuit.json", instance.id)), built.circuit.to_json()?)?;
        built
            .coloring
            .write_csv(fs::File::create(dir.join(format!("{}.colors.csv", instance.id)))?)?;
    }
    if config.dry_run {
        return Ok(PipelineReport {
            id: instance.id.clone(),
            graph: built.graph,
            tts: None,
            fps: None,
        });
    }
    let tts = measure_tts(
        &built.circuit,
        Some(&built.coloring),
        &config.sampler,
        config.target,
        &config.policy,
        None,
    )?;
    let fps = measure_fps(&totals(&tts)).ok();
    if let Some(dir) = out_dir {
        tts.last_run
            .write_csv(fs::File::create(dir.join(format!("{}.run.csv", instance.id)))?)?;
        let model = built.circuit.compose()?;
        let best_state = if tts.best_state.is_empty() {
            String::new()
        } else {
            SpinState::from_values(&model, tts.best_state.clone())?.to_hex()
        };
        let summary = RunSummary {
            id: instance.id.clone(),
            nodes: built.graph.nodes,
            colors: built.graph.colors,
            target: tts.target,
            success: tts.success,
            tts_sweeps: tts.sweeps,
            tts_ns: tts.wall_ns,
            attempts: tts.attempts,
            fps: fps.map(|f| f.fps),
            flips_per_sweep: fps.map(|f| f.flips_per_sweep),
            best_energy: tts.best_energy,
            best_state,
            decoded: decode(&built.circuit, &tts.best_state),
        };
        fs::write(
            dir.join(format!("{}.summary.json", instance.id)),
            serde_json::to_string_pretty(&summary)?,
        )?;
    }
    Ok(PipelineReport {
        id: instance.id.clone(),
        graph: built.graph,
        tts: Some(tts),
        fps,
    })
}

/// Totals of a TTS run in the form `measure_fps` expects.
fn totals(tts: &TtsResult) -> RunStats {
    RunStats {
        records: Vec::new(),
        sweeps: tts.sweeps,
        flips: tts.flips,
        wall_ns: tts.wall_ns,
        free_nodes: tts.last_run.free_nodes,
    }
}

/// Fixed-temperature chromatic sweeps for throughput measurement.
pub fn fps_run(circuit: &Circuit, coloring: &Coloring, beta: f64, sweeps: u64, threads: usize, seed: u64) -> Result<FpsReport> {
    let model = circuit.compose()?;
    let mut chain = Chain::new(&model, Some(coloring), RngKind::CounterBased, seed)?;
    let beta = Beta::new(beta)?;
    let start = std::time::Instant::now();
    chain.sweep_chromatic_tiled(beta, sweeps, threads)?;
    let wall_ns = start.elapsed().as_nanos() as u64;
    measure_fps(&RunStats {
        records: Vec::new(),
        sweeps: chain.sweeps(),
        flips: chain.flips(),
        wall_ns,
        free_nodes: chain.free_nodes().len(),
    })
}

/// One aggregated campaign row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub id: String,
    pub size: usize,
    pub nodes: usize,
    pub target: String,
    pub repeats: usize,
    pub success_rate: f64,
    pub mean_tts_sweeps: f64,
    pub median_tts_sweeps: f64,
    pub mean_tts_ns: f64,
    pub median_tts_ns: f64,
    pub fps: f64,
    pub flips_per_sweep: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Runs every instance `repeats` times per target with distinct seeds.
/// TTS statistics cover successful repeats only.
pub fn campaign(
    instances: &[Instance],
    repeats: usize,
    targets: &[Target],
    config: &PipelineConfig,
) -> Result<Vec<CampaignRow>> {
    if instances.is_empty() || repeats == 0 || targets.is_empty() {
        return Err(Error::InvalidArgument(
            "campaign needs instances, targets and at least one repeat".into(),
        ));
    }
    let mut rows = Vec::new();
    for instance in instances {
        let built = build_instance(instance, config.k, config.j_t)?;
        let size = instance.size()?;
        for &target in targets {
            let runs = (0..repeats)
                .into_par_iter()
                .map(|r| {
                    let sampler = SamplerConfig {
                        seed: mix64(config.sampler.seed ^ mix64(r as u64)),
                        ..config.sampler.clone()
                    };
                    measure_tts(&built.circuit, Some(&built.coloring), &sampler, target, &config.policy, None)
                })
                .collect::<Result<Vec<_>>>()?;
            let ok: Vec<&TtsResult> = runs.iter().filter(|r| r.success).collect();
            let mean = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
            let sweeps: Vec<f64> = ok.iter().map(|r| r.sweeps as f64).collect();
            let ns: Vec<f64> = ok.iter().map(|r| r.wall_ns as f64).collect();
            let flips: u64 = runs.iter().map(|r| r.flips).sum();
            let total_sweeps: u64 = runs.iter().map(|r| r.sweeps).sum();
            let total_ns: u64 = runs.iter().map(|r| r.wall_ns).sum();
            rows.push(CampaignRow {
                id: instance.id.clone(),
                size,
                nodes: built.graph.nodes,
                target: target.to_string(),
                repeats,
                success_rate: ok.len() as f64 / repeats as f64,
                mean_tts_sweeps: mean(&sweeps),
                median_tts_sweeps: median(sweeps),
                mean_tts_ns: mean(&ns),
                median_tts_ns: median(ns),
                fps: if total_ns > 0 { flips as f64 / (total_ns as f64 * 1e-9) } else { 0.0 },
                flips_per_sweep: if total_sweeps > 0 { flips as f64 / total_sweeps as f64 } else { 0.0 },
            });
        }
    }
    Ok(rows)
}

pub fn write_campaign_csv<W: std::io::Write>(rows: &[CampaignRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        let mut rng = StdRng::seed_from_u64(1);
        let trial = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 0..5000u64 {
            assert_eq!(is_probable_prime(n, 64, &mut rng), trial(n), "{n}");
        }
        assert!(is_probable_prime(65479, 64, &mut rng));
        assert!(is_probable_prime(65327, 64, &mut rng));
        // Carmichael numbers.
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911] {
            assert!(!is_probable_prime(n, 64, &mut rng));
        }
        assert!(is_probable_prime(18446744073709551557, 64, &mut rng));
    }

    #[test]
    fn semiprimes_have_exact_width() {
        for bits in (4..=50).step_by(2) {
            let s = gen_semiprime(bits, bits as u64).unwrap();
            assert_eq!(128 - s.p.leading_zeros(), bits);
            assert_eq!(s.a as u128 * s.b as u128, s.p);
            assert_eq!(64 - s.a.leading_zeros(), bits / 2);
            assert_eq!(64 - s.b.leading_zeros(), bits / 2);
        }
        assert_eq!(gen_semiprime(20, 3).unwrap(), gen_semiprime(20, 3).unwrap());
        assert!(gen_semiprime(7, 0).is_err());
        assert!(gen_semiprime(2, 0).is_err());
    }

    #[test]
    fn known_32_bit_product() {
        let s = Semiprime::from_factors(65479, 65327);
        assert_eq!(s.p, 4277546633);
        assert_eq!(s.bits, 32);
    }

    #[test]
    fn dry_run_builds_only() {
        let inst = Instance::factorization(Semiprime::from_factors(89, 97));
        let cfg = PipelineConfig {
            dry_run: true,
            ..PipelineConfig::new(5, Target::Tts99)
        };
        let dir = tempfile::tempdir().unwrap();
        let r = pipeline(&inst, &cfg, Some(dir.path())).unwrap();
        assert!(r.tts.is_none());
        assert_eq!(r.graph.nodes, 399);
        assert_eq!(r.graph.predicted_nodes, Some(399));
        assert!(dir.path().join(format!("{}.circuit.json", inst.id)).exists());
        assert!(!dir.path().join(format!("{}.summary.json", inst.id)).exists());
    }

    #[test]
    fn empty_campaign_is_rejected() {
        let cfg = PipelineConfig::new(5, Target::Tts99);
        let inst = Instance::factorization(Semiprime::from_factors(5, 7));
        assert!(campaign(&[], 1, &[Target::Tts99], &cfg).is_err());
        assert!(campaign(&[inst], 0, &[Target::Tts99], &cfg).is_err());
    }
}
