//! Inexact Gibbs sampling: neighbor reads that fail, modeled by error masks
//! over the directed entries of `J`, plus the exact parallel-update limit and
//! KL divergence.

use std::io::Write;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    boltzmann_exact, normalize_log_weights, state_index, Beta, Distribution, IsingModel,
    MAX_ENUMERATION_NODES,
};
use crate::rng::{mix64, RngKind};
use crate::sampler::Chain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// A failing entry reads the neighbor with its sign flipped.
    Single,
    /// A failing entry reads the neighbor's value from before the sweep.
    Double,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Single => "single",
            MaskKind::Double => "double",
        }
    }
}

impl std::fmt::Display for MaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(MaskKind::Single),
            "double" => Ok(MaskKind::Double),
            _ => Err(Error::InvalidArgument(format!("unknown mask kind `{s}`"))),
        }
    }
}

/// Failure flags aligned with a model's directed adjacency list: entry
/// `(i <- j)` sits at the position of `j` in row `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMask {
    kind: MaskKind,
    failing: Vec<bool>,
}

impl ErrorMask {
    pub fn all_pass(model: &IsingModel, kind: MaskKind) -> Self {
        ErrorMask {
            kind,
            failing: vec![false; model.num_directed_entries()],
        }
    }

    /// Exactly `round(error_rate * 2|E|)` failing entries, drawn uniformly
    /// without replacement.
    pub fn random<R: rand::Rng + ?Sized>(
        model: &IsingModel,
        kind: MaskKind,
        error_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&error_rate) {
            return Err(Error::InvalidArgument(format!(
                "error rate must lie in [0, 1], got {error_rate}"
            )));
        }
        let total = model.num_directed_entries();
        let count = (error_rate * total as f64).round() as usize;
        let mut failing = vec![false; total];
        for k in rand::seq::index::sample(rng, total, count) {
            failing[k] = true;
        }
        Ok(ErrorMask { kind, failing })
    }

    /// Mask with the listed directed entries `(i, j)` (node `i` reading `j`)
    /// failing.
    pub fn from_entries(model: &IsingModel, kind: MaskKind, entries: &[(usize, usize)]) -> Result<Self> {
        let mut mask = Self::all_pass(model, kind);
        for &(i, j) in entries {
            if i >= model.len() {
                return Err(Error::NodeOutOfRange { node: i, n: model.len() });
            }
            let row = model.row_range(i);
            let pos = model
                .neighbors(i)
                .binary_search_by_key(&(j as u32), |&(k, _)| k)
                .map_err(|_| Error::InvalidArgument(format!("no edge ({i}, {j})")))?;
            mask.failing[row.start + pos] = true;
        }
        Ok(mask)
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn num_failing(&self) -> usize {
        self.failing.iter().filter(|&&f| f).count()
    }

    pub fn error_rate(&self) -> f64 {
        if self.failing.is_empty() {
            0.0
        } else {
            self.num_failing() as f64 / self.failing.len() as f64
        }
    }

    fn check(&self, model: &IsingModel, kind: MaskKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::MaskKindMismatch {
                expected: kind.name(),
                got: self.kind.name(),
            });
        }
        if self.failing.len() != model.num_directed_entries() {
            return Err(Error::SizeMismatch {
                expected: model.num_directed_entries(),
                got: self.failing.len(),
            });
        }
        Ok(())
    }
}

fn single_raw(model: &IsingModel, values: &[i8], failing: &[bool], i: usize) -> i64 {
    let row = model.row_range(i);
    let mut acc = model.h()[i] as i64;
    for (&(j, w), &fail) in model.neighbors(i).iter().zip(&failing[row]) {
        let m = values[j as usize] as i64;
        acc += if fail { -w as i64 * m } else { w as i64 * m };
    }
    acc
}

fn double_raw(model: &IsingModel, new: &[i8], old: &[i8], failing: &[bool], i: usize) -> i64 {
    let row = model.row_range(i);
    let mut acc = model.h()[i] as i64;
    for (&(j, w), &fail) in model.neighbors(i).iter().zip(&failing[row]) {
        let m = if fail { old[j as usize] } else { new[j as usize] };
        acc += w as i64 * m as i64;
    }
    acc
}

/// `sum_j M_ij J_ij m_j + h_i` with `M_ij = -1` on failing entries.
pub fn field_single_mask(model: &IsingModel, values: &[i8], mask: &ErrorMask, i: usize) -> Result<f64> {
    mask.check(model, MaskKind::Single)?;
    Ok(single_raw(model, values, &mask.failing, i) as f64 * model.unit())
}

/// Passing entries read `new`, failing entries read `old`.
pub fn field_double_mask(
    model: &IsingModel,
    new: &[i8],
    old: &[i8],
    mask: &ErrorMask,
    i: usize,
) -> Result<f64> {
    mask.check(model, MaskKind::Double)?;
    Ok(double_raw(model, new, old, &mask.failing, i) as f64 * model.unit())
}

/// One sequential sweep (free nodes in index order) whose fields go through
/// `mask`. The snapshot for double masks is taken at the start of the sweep.
/// With no failing entries this is exactly [`Chain::sweep_sequential`].
pub fn masked_sweep(chain: &mut Chain, mask: &ErrorMask, beta: Beta, snapshot: &mut Vec<i8>) -> Result<()> {
    mask.check(chain.model(), mask.kind)?;
    let scale = beta.value() * chain.model().unit();
    if mask.kind == MaskKind::Double {
        snapshot.clear();
        snapshot.extend_from_slice(chain.values());
    }
    for k in 0..chain.free_nodes().len() {
        let i = chain.free_nodes()[k];
        let raw = match mask.kind {
            MaskKind::Single => single_raw(chain.model(), chain.values(), &mask.failing, i),
            MaskKind::Double => double_raw(chain.model(), chain.values(), snapshot, &mask.failing, i),
        };
        let new = chain.decide(i, scale * raw as f64);
        chain.apply(i, new);
    }
    chain.finish_sweep();
    Ok(())
}

/// Stationary distribution of the fully parallel update:
/// `p(m) ∝ prod_i cosh(beta I_i(m)) exp(beta m_i h_i)` over free nodes, with
/// clamped neighbors folded into `h`.
pub fn parallel_analytical(model: &IsingModel, beta: Beta) -> Result<Distribution> {
    let model = model.bipolar()?;
    let unit = model.unit();
    let b = beta.value();
    let free = model.free_nodes();
    let h_eff: Vec<i64> = (0..model.len())
        .map(|i| {
            model.h()[i] as i64
                + model
                    .neighbors(i)
                    .iter()
                    .filter_map(|&(j, w)| model.clamp_value(j as usize).map(|v| w as i64 * v as i64))
                    .sum::<i64>()
        })
        .collect();
    let ln_cosh = |x: f64| x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2;
    let mut log_weights = vec![0.0; 1usize << free.len()];
    model.enumerate_free(|index, values, _| {
        log_weights[index] = free
            .iter()
            .map(|&i| {
                let field = model.field_raw(values, i) as f64 * unit;
                ln_cosh(b * field) + b * values[i] as f64 * h_eff[i] as f64 * unit
            })
            .sum();
    })?;
    Distribution::new(free, normalize_log_weights(log_weights))
}

/// `sum p ln(p / q)`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (k, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::ZeroReference(k));
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Histogram normalized with add-epsilon smoothing, `epsilon = 1 / (10 S)`.
pub fn smoothed_distribution(counts: &[u64]) -> Vec<f64> {
    let samples: u64 = counts.iter().sum();
    if samples == 0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    let eps = 1.0 / (10.0 * samples as f64);
    let norm = 1.0 + eps * counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 / samples as f64 + eps) / norm)
        .collect()
}

/// KL of a smoothed histogram against a reference distribution.
pub fn empirical_kl(counts: &[u64], reference: &Distribution) -> Result<f64> {
    kl_divergence(&smoothed_distribution(counts), reference.probs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskExperiment {
    pub kind: MaskKind,
    pub beta: f64,
    pub masks_per_rate: usize,
    pub samples_per_mask: u64,
    pub burn_in: u64,
    pub error_rates: Vec<f64>,
    pub rng: RngKind,
    pub seed: u64,
}

impl MaskExperiment {
    /// The `0/T, 1/T, ..., T/T` grid over `T` directed entries.
    pub fn entry_grid(model: &IsingModel) -> Vec<f64> {
        let total = model.num_directed_entries().max(1);
        (0..=total).map(|k| k as f64 / total as f64).collect()
    }
}

/// One point of a KL curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlPoint {
    #[serde(rename = "Er")]
    pub error_rate: f64,
    pub kind: MaskKind,
    pub mean_kl: f64,
    pub std_kl: f64,
    pub n_masks: usize,
}

/// Histogram of `samples` states (one per sweep after `burn_in`) of a chain
/// running under `mask`.
pub fn masked_histogram(
    model: &IsingModel,
    mask: &ErrorMask,
    beta: Beta,
    rng: RngKind,
    seed: u64,
    burn_in: u64,
    samples: u64,
) -> Result<Vec<u64>> {
    let mut chain = Chain::new(model, None, rng, seed)?;
    let free = chain.free_nodes().to_vec();
    if free.len() > MAX_ENUMERATION_NODES {
        return Err(Error::TooManyFreeNodes {
            free: free.len(),
            limit: MAX_ENUMERATION_NODES,
        });
    }
    let mut snapshot = Vec::with_capacity(model.len());
    for _ in 0..burn_in {
        masked_sweep(&mut chain, mask, beta, &mut snapshot)?;
    }
    let mut counts = vec![0u64; 1 << free.len()];
    for _ in 0..samples {
        masked_sweep(&mut chain, mask, beta, &mut snapshot)?;
        counts[state_index(&free, chain.values())] += 1;
    }
    Ok(counts)
}

/// For every error rate, runs one chain per random mask and reports the mean
/// and standard deviation of the per-mask KL against the Boltzmann
/// distribution. Masks run in parallel.
pub fn mask_experiment(model: &IsingModel, exp: &MaskExperiment) -> Result<Vec<KlPoint>> {
    if exp.masks_per_rate == 0 || exp.samples_per_mask == 0 {
        return Err(Error::InvalidArgument("need at least one mask and one sample".into()));
    }
    let model = model.bipolar()?;
    let beta = Beta::new(exp.beta)?;
    let reference = boltzmann_exact(&model, beta)?;
    exp.error_rates
        .iter()
        .enumerate()
        .map(|(r, &rate)| {
            let kls = (0..exp.masks_per_rate)
                .into_par_iter()
                .map(|m| {
                    let stream = mix64(exp.seed ^ mix64(((r as u64) << 32) | m as u64));
                    let mut rng = StdRng::seed_from_u64(stream);
                    let mask = ErrorMask::random(&model, exp.kind, rate, &mut rng)?;
                    let counts = masked_histogram(
                        &model,
                        &mask,
                        beta,
                        exp.rng,
                        mix64(stream),
                        exp.burn_in,
                        exp.samples_per_mask,
                    )?;
                    empirical_kl(&counts, &reference)
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = kls.len() as f64;
            let mean = kls.iter().sum::<f64>() / n;
            let var = if kls.len() > 1 {
                kls.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Ok(KlPoint {
                error_rate: rate,
                kind: exp.kind,
                mean_kl: mean,
                std_kl: var.sqrt(),
                n_masks: kls.len(),
            })
        })
        .collect()
}

/// Writes `Er,kind,mean_KL,std_KL,n_masks` rows.
pub fn write_kl_csv<W: Write>(points: &[KlPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["Er", "kind", "mean_KL", "std_KL", "n_masks"])?;
    for p in points {
        w.serialize((p.error_rate, p.kind.name(), p.mean_kl, p.std_kl, p.n_masks))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{gate_model, GateKind};
    use crate::model::{ModelBuilder, SpinState};

    fn beta(b: f64) -> Beta {
        Beta::new(b).unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let kl = kl_divergence(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert!((kl - (2f64.ln() - 0.5 * 3f64.ln())).abs() < 1e-12);
        assert!((kl - 0.1438).abs() < 1e-4);
        assert!(matches!(kl_divergence(&[1.0], &[0.5, 0.5]), Err(Error::SupportMismatch(1, 2))));
        assert!(matches!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::ZeroReference(1))));
    }

    #[test]
    fn smoothing_keeps_mass() {
        let p = smoothed_distribution(&[10, 0, 0, 30]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] > 0.0);
    }

    #[test]
    fn all_pass_single_mask_is_local_field() {
        let model = gate_model(GateKind::FullAdder);
        let mask = ErrorMask::all_pass(&model, MaskKind::Single);
        for index in 0..32 {
            let s = SpinState::from_index(&model, index);
            for i in 0..5 {
                assert_eq!(
                    field_single_mask(&model, s.values(), &mask, i).unwrap(),
                    model.local_field(&s, i).unwrap()
                );
            }
        }
    }

    #[test]
    fn one_failing_entry_shifts_field() {
        let model = gate_model(GateKind::FullAdder);
        let mask = ErrorMask::from_entries(&model, MaskKind::Single, &[(4, 1)]).unwrap();
        assert_eq!(mask.num_failing(), 1);
        assert_eq!(mask.error_rate(), 0.05);
        for index in 0..32 {
            let s = SpinState::from_index(&model, index);
            let exact = model.local_field(&s, 4).unwrap();
            let masked = field_single_mask(&model, s.values(), &mask, 4).unwrap();
            let w = model.weight(4, 1) as f64;
            assert_eq!(exact - masked, 2.0 * w * s.get(1) as f64);
            assert_eq!(
                field_single_mask(&model, s.values(), &mask, 3).unwrap(),
                model.local_field(&s, 3).unwrap()
            );
        }
    }

    #[test]
    fn double_mask_mixes_new_and_old() {
        let model = gate_model(GateKind::FullAdder);
        let mask = ErrorMask::from_entries(&model, MaskKind::Double, &[(0, 3), (0, 4)]).unwrap();
        let new = [1, 1, -1, 1, -1];
        let old = [-1, -1, -1, -1, 1];
        // h_a + J_ab b_new + J_ac c_new + J_as s_old + J_acout cout_old
        let expect = model.h()[0] as f64 - 1.0 * 1.0 + -1.0 * -1.0 + 1.0 * -1.0 + 2.0 * 1.0;
        assert_eq!(field_double_mask(&model, &new, &old, &mask, 0).unwrap(), expect);
        assert!(matches!(
            field_single_mask(&model, &new, &mask, 0),
            Err(Error::MaskKindMismatch { .. })
        ));
    }

    #[test]
    fn zero_error_rate_reproduces_exact_chain() {
        let model = gate_model(GateKind::FullAdder);
        for kind in [MaskKind::Single, MaskKind::Double] {
            let mask = ErrorMask::all_pass(&model, kind);
            let mut exact = Chain::new(&model, None, RngKind::CounterBased, 9).unwrap();
            let mut masked = Chain::new(&model, None, RngKind::CounterBased, 9).unwrap();
            let mut snapshot = Vec::new();
            for _ in 0..1000 {
                exact.sweep_sequential(beta(1.0));
                masked_sweep(&mut masked, &mask, beta(1.0), &mut snapshot).unwrap();
                assert_eq!(exact.values(), masked.values());
            }
            assert_eq!(exact.energy_raw(), masked.energy_raw());
        }
    }

    #[test]
    fn full_double_mask_is_parallel_update() {
        let model = gate_model(GateKind::FullAdder);
        let mut rng = StdRng::seed_from_u64(1);
        let mask = ErrorMask::random(&model, MaskKind::Double, 1.0, &mut rng).unwrap();
        assert_eq!(mask.num_failing(), 20);
        let mut parallel = Chain::new(&model, None, RngKind::CounterBased, 4).unwrap();
        let mut masked = Chain::new(&model, None, RngKind::CounterBased, 4).unwrap();
        let mut snapshot = Vec::new();
        for _ in 0..1000 {
            parallel.sweep_parallel(beta(1.0));
            masked_sweep(&mut masked, &mask, beta(1.0), &mut snapshot).unwrap();
            assert_eq!(parallel.values(), masked.values());
        }
    }

    #[test]
    fn full_single_mask_turns_copy_into_not() {
        let copy = gate_model(GateKind::Copy);
        let not = gate_model(GateKind::Not);
        let mask = ErrorMask::from_entries(&copy, MaskKind::Single, &[(0, 1), (1, 0)]).unwrap();
        let a = masked_histogram(&copy, &mask, beta(1.0), RngKind::CounterBased, 3, 0, 50_000).unwrap();
        let not_mask = ErrorMask::all_pass(&not, MaskKind::Single);
        let b = masked_histogram(&not, &not_mask, beta(1.0), RngKind::CounterBased, 3, 0, 50_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_analytical_without_couplings_is_boltzmann() {
        let mut b = ModelBuilder::new(3);
        b.add_bias(0, 1).unwrap().add_bias(1, -2).unwrap().add_bias(2, 3).unwrap();
        let model = b.build().unwrap();
        let p = parallel_analytical(&model, beta(0.7)).unwrap();
        let q = boltzmann_exact(&model, beta(0.7)).unwrap();
        for (a, b) in p.probs().iter().zip(q.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_analytical_single_node() {
        let mut b = ModelBuilder::new(1);
        b.add_bias(0, 1).unwrap();
        let model = b.build().unwrap();
        let p = parallel_analytical(&model, beta(1.0)).unwrap();
        assert!((p.probs()[1] - (1.0 + 1f64.tanh()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn random_mask_counts_are_exact() {
        let model = gate_model(GateKind::FullAdder);
        let mut rng = StdRng::seed_from_u64(5);
        for k in 0..=20 {
            let mask = ErrorMask::random(&model, MaskKind::Single, k as f64 / 20.0, &mut rng).unwrap();
            assert_eq!(mask.num_failing(), k);
        }
        assert!(ErrorMask::random(&model, MaskKind::Single, 1.5, &mut rng).is_err());
        assert_eq!(MaskExperiment::entry_grid(&model).len(), 21);
    }

    #[test]
    fn kl_csv_header() {
        let mut buf = Vec::new();
        write_kl_csv(
            &[KlPoint {
                error_rate: 0.25,
                kind: MaskKind::Double,
                mean_kl: 0.5,
                std_kl: 0.0,
                n_masks: 3,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "Er,kind,mean_KL,std_KL,n_masks\n0.25,double,0.5,0.0,3\n"
        );
    }
}
