use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use sparse_ising::circuit::{build_factorizer, build_sat, fused_factorizer_count, fused_sat_count};
use sparse_ising::cnf::CnfFormula;
use sparse_ising::coloring::{dsatur, validate};
use sparse_ising::error_models::{kl_divergence, ErrorMask, MaskKind};
use sparse_ising::gates::{gate_model, ground_states, negate_pin, ALL_GATES};
use sparse_ising::model::{boltzmann_exact, Beta, IsingModel, ModelBuilder, SpinState};
use sparse_ising::rng::{Lfsr32, RngKind};
use sparse_ising::sampler::{AnnealSchedule, Chain, UpdateMode};
use sparse_ising::sparsify::{predict_sparse_count, sparsify, sparsify_circuit, ProblemSize};

fn beta(b: f64) -> Beta {
    Beta::new(b).unwrap()
}

/// Random integer model: `n` nodes, couplings on a random subset of pairs,
/// optional clamps.
fn arb_model(max_n: usize) -> impl Strategy<Value = IsingModel> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            Just(n),
            prop::collection::vec(prop::option::weighted(0.6, -3i64..=3), pairs),
            prop::collection::vec(-3i64..=3, n),
            prop::collection::vec(prop::option::weighted(0.2, prop::bool::ANY), n),
        )
            .prop_map(|(n, couplings, h, clamps)| {
                let mut b = ModelBuilder::new(n);
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if let Some(w) = couplings[k] {
                            if w != 0 {
                                b.add_coupling(i, j, w).unwrap();
                            }
                        }
                        k += 1;
                    }
                }
                for (i, &w) in h.iter().enumerate() {
                    b.add_bias(i, w).unwrap();
                }
                for (i, c) in clamps.iter().enumerate() {
                    if let Some(v) = c {
                        b.clamp(i, if *v { 1 } else { -1 }).unwrap();
                    }
                }
                b.build().unwrap()
            })
    })
}

fn arb_cnf(max_v: usize, max_c: usize) -> impl Strategy<Value = CnfFormula> {
    (3..=max_v, 1..=max_c, any::<u64>()).prop_map(|(v, c, seed)| {
        CnfFormula::random(v, c, &mut StdRng::seed_from_u64(seed)).unwrap()
    })
}

fn assert_symmetric(model: &IsingModel) {
    for i in 0..model.len() {
        assert_eq!(model.weight(i, i), 0);
        for &(j, w) in model.neighbors(i) {
            assert_ne!(j as usize, i);
            assert_eq!(model.weight(j as usize, i), w);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn models_are_symmetric(model in arb_model(10)) {
        assert_symmetric(&model);
        assert_symmetric(&model.to_binary().unwrap());
    }

    #[test]
    fn binary_round_trip(model in arb_model(10)) {
        prop_assert_eq!(model.to_binary().unwrap().to_bipolar().unwrap(), model);
    }

    #[test]
    fn binary_and_bipolar_energies_agree(model in arb_model(8), index in any::<usize>()) {
        let state = SpinState::from_index(&model, index % (1 << model.num_free()));
        let binary = model.to_binary().unwrap();
        let e = model.energy(&state).unwrap();
        prop_assert_eq!(binary.energy(&state.to_binary()).unwrap(), e);
    }

    #[test]
    fn boltzmann_ignores_energy_shift(model in arb_model(8), shift in -50i64..50, b in 0.0f64..3.0) {
        let mut builder = ModelBuilder::new(model.len());
        for e in model.edges() {
            builder.add_coupling(e.i, e.j, e.weight as i64).unwrap();
        }
        for (i, &h) in model.h().iter().enumerate() {
            builder.add_bias(i, h as i64).unwrap();
        }
        for (&i, &v) in model.clamps() {
            builder.clamp(i, v).unwrap();
        }
        builder.add_offset(model.offset() + shift);
        let shifted = builder.build().unwrap();
        let p = boltzmann_exact(&model, beta(b)).unwrap();
        let q = boltzmann_exact(&shifted, beta(b)).unwrap();
        for (x, y) in p.probs().iter().zip(q.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clamping_is_conditioning(model in arb_model(8), pick in any::<usize>(), up in any::<bool>(), b in 0.0f64..3.0) {
        let free = model.free_nodes();
        prop_assume!(!free.is_empty());
        let c = free[pick % free.len()];
        let value = if up { 1 } else { -1 };
        let clamped = model.with_clamp(c, value).unwrap();
        let full = boltzmann_exact(&model, beta(b)).unwrap();
        let cond = boltzmann_exact(&clamped, beta(b)).unwrap();
        let states: Vec<SpinState> = (0..cond.len()).map(|i| SpinState::from_index(&clamped, i)).collect();
        let z: f64 = states.iter().map(|s| full.prob_of(s.values())).sum();
        for s in &states {
            prop_assert!((cond.prob_of(s.values()) - full.prob_of(s.values()) / z).abs() < 1e-12);
        }
    }

    #[test]
    fn negate_pin_conjugates_energy(model in arb_model(8), pick in any::<usize>(), index in any::<usize>()) {
        let unclamped = model.without_clamps();
        let pin = pick % unclamped.len();
        let negated = negate_pin(&unclamped, pin).unwrap();
        let state = SpinState::from_index(&unclamped, index % (1 << unclamped.len()));
        let mut flipped = state.values().to_vec();
        flipped[pin] = -flipped[pin];
        let flipped = SpinState::from_values(&unclamped, flipped).unwrap();
        prop_assert_eq!(negated.energy_raw(&state).unwrap(), unclamped.energy_raw(&flipped).unwrap());
    }

    #[test]
    fn dsatur_is_proper_and_deterministic(model in arb_model(12)) {
        let coloring = dsatur(&model);
        prop_assert!(validate(&model, &coloring));
        prop_assert!(coloring.num_colors() <= model.max_degree() + 1);
        prop_assert_eq!(&dsatur(&model), &coloring);
        let blocks: usize = coloring.blocks().iter().map(Vec::len).sum();
        prop_assert_eq!(blocks, model.num_free());
        for block in coloring.blocks() {
            for &i in block {
                prop_assert!(!model.is_clamped(i));
                for &j in block {
                    prop_assert_eq!(model.weight(i, j), 0);
                }
            }
        }
    }

    #[test]
    fn flips_per_cycle_equal_free_nodes(model in arb_model(12), seed in any::<u64>(), lfsr in any::<bool>()) {
        let coloring = dsatur(&model);
        let rng = if lfsr { RngKind::Lfsr32 } else { RngKind::CounterBased };
        let mut chain = Chain::new(&model, Some(&coloring), rng, seed).unwrap();
        let clamps = model.clamps().clone();
        let mut last = 0;
        for s in 0..20 {
            chain.sweep_chromatic(beta(0.25 * s as f64)).unwrap();
            prop_assert_eq!(chain.flips() - last, model.num_free() as u64);
            last = chain.flips();
            for (&i, &v) in &clamps {
                prop_assert_eq!(chain.values()[i], v);
            }
            prop_assert_eq!(chain.energy_raw(), chain.model().energy_raw_values(chain.values()));
        }
    }

    #[test]
    fn trajectories_are_reproducible(model in arb_model(10), seed in any::<u64>(), mode in 0usize..3) {
        let mode = [UpdateMode::Chromatic, UpdateMode::SequentialGibbs, UpdateMode::FullyParallel][mode];
        let coloring = dsatur(&model);
        let mut a = Chain::new(&model, Some(&coloring), RngKind::CounterBased, seed).unwrap();
        let mut b = Chain::new(&model, Some(&coloring), RngKind::CounterBased, seed).unwrap();
        for _ in 0..10 {
            a.sweep(mode, beta(1.0)).unwrap();
            b.sweep(mode, beta(1.0)).unwrap();
            prop_assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn kl_is_nonnegative(raw_p in prop::collection::vec(0.01f64..1.0, 2..16), seed in any::<u64>()) {
        let total: f64 = raw_p.iter().sum();
        let p: Vec<f64> = raw_p.iter().map(|x| x / total).collect();
        let mut rng = StdRng::seed_from_u64(seed);
        let raw_q: Vec<f64> = p.iter().map(|_| rand::Rng::gen_range(&mut rng, 0.01..1.0)).collect();
        let total: f64 = raw_q.iter().sum();
        let q: Vec<f64> = raw_q.iter().map(|x| x / total).collect();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn masks_hit_exact_rates(model in arb_model(8), rate in 0.0f64..=1.0, seed in any::<u64>()) {
        let total = model.num_directed_entries();
        let mask = ErrorMask::random(&model, MaskKind::Double, rate, &mut StdRng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(mask.num_failing(), (rate * total as f64).round() as usize);
        prop_assert!((0.0..=1.0).contains(&mask.error_rate()));
    }

    #[test]
    fn cnf_dimacs_round_trip(cnf in arb_cnf(30, 60)) {
        prop_assert_eq!(CnfFormula::parse_dimacs(&cnf.to_dimacs()).unwrap(), cnf);
    }

    #[test]
    fn fused_sat_count_formula(cnf in arb_cnf(30, 60)) {
        prop_assert_eq!(build_sat(&cnf).unwrap().n, fused_sat_count(cnf.v, cnf.num_clauses()));
    }

    #[test]
    fn sparse_sat_respects_bound(cnf in arb_cnf(20, 60), k in 4usize..8) {
        let mut c = build_sat(&cnf).unwrap();
        c.clamp_output_true().unwrap();
        let sparse = sparsify_circuit(&c, k, 1).unwrap();
        prop_assert!(sparse.compose().unwrap().max_degree() <= k);
        if let Some(plan) = &sparse.plan {
            for group in plan.groups.iter().filter(|g| g.iter().all(|r| !sparse.clamps.contains_key(r))) {
                let copies = plan.copy_edges.iter().filter(|(a, b)| group.contains(a) && group.contains(b)).count();
                prop_assert_eq!(copies + 1, group.len());
            }
        }
        let every_var_used = (1..=cnf.v as u32).all(|x| cnf.clauses.iter().flatten().any(|l| l.unsigned_abs() == x));
        if every_var_used {
            let predicted = predict_sparse_count(ProblemSize::Sat { c: cnf.num_clauses() }, k).unwrap();
            prop_assert_eq!(sparse.n, predicted);
        }
    }

    #[test]
    fn generic_sparsify_respects_bound(model in arb_model(12), k in 3usize..6) {
        let (sparse, plan) = sparsify(&model, k, 1).unwrap();
        prop_assert!(sparse.max_degree() <= k);
        assert_symmetric(&sparse);
        prop_assert_eq!(plan.sparse_n(), sparse.len());
    }

    #[test]
    fn planted_factorization_meets_gate_bound(m in 2usize..=10, a in any::<u64>(), b in any::<u64>()) {
        let mask = (1u64 << m) - 1;
        let (a, b) = (a & mask, b & mask);
        let mut c = build_factorizer(m).unwrap();
        c.clamp_product(a as u128 * b as u128).unwrap();
        c.plant_factors(a, b).unwrap();
        prop_assert_eq!(c.planted_energy().unwrap(), Some(c.gate_energy_bound().unwrap()));
        let sparse = sparsify_circuit(&c, 5, 1).unwrap();
        prop_assert!(sparse.compose().unwrap().max_degree() <= 5);
        prop_assert_eq!(sparse.planted_energy().unwrap(), Some(sparse.gate_energy_bound().unwrap()));
        prop_assert_eq!(sparse.decode_factors(sparse.planted.as_ref().unwrap()), Some((a, b)));
    }

    #[test]
    fn lfsr_state_never_zero(seed in any::<u64>()) {
        let mut lfsr = Lfsr32::from_seed(seed);
        for _ in 0..1000 {
            prop_assert_ne!(lfsr.step(), 0);
        }
    }

    #[test]
    fn schedules_are_monotone(start in 0.0f64..2.0, span in 0.0f64..10.0, steps in 1usize..200) {
        let s = AnnealSchedule::linear(start, start + span, steps).unwrap();
        for t in 1..steps {
            prop_assert!(s.beta_at(t) >= s.beta_at(t - 1));
        }
    }
}

#[test]
fn fused_factorizer_count_formula() {
    for m in 2..=25 {
        assert_eq!(build_factorizer(m).unwrap().n, fused_factorizer_count(m), "m={m}");
    }
}

#[test]
fn sparse_factorizer_count_formula() {
    for m in 3..=25 {
        let sparse = sparsify_circuit(&build_factorizer(m).unwrap(), 5, 1).unwrap();
        let predicted = predict_sparse_count(ProblemSize::Factorizer { m }, 5).unwrap();
        assert_eq!(sparse.n, predicted, "m={m}");
        assert!(sparse.compose().unwrap().max_degree() <= 5);
    }
}

#[test]
fn gates_have_unit_gap_and_exact_minima() {
    for kind in ALL_GATES {
        let gs = ground_states(&gate_model(kind)).unwrap();
        assert_eq!(gs.states.len(), 1 << kind.num_inputs(), "{kind}");
        assert!(gs.gap.unwrap() >= 1, "{kind}");
        assert_eq!(gs.energy, kind.ground_energy());
        for s in &gs.states {
            let pins: Vec<bool> = s.to_bipolar().values().iter().map(|&v| v > 0).collect();
            assert!(kind.satisfied(&pins));
        }
    }
}

#[test]
fn planted_factorization_is_global_minimum() {
    for (m, a, b) in [(2u64, 3u64, 2u64), (2, 3, 3), (3, 5, 7), (3, 7, 6), (3, 1, 5)] {
        let mut c = build_factorizer(m as usize).unwrap();
        c.clamp_product((a * b) as u128).unwrap();
        c.plant_factors(a, b).unwrap();
        let model = c.compose().unwrap();
        let gs = ground_states(&model).unwrap();
        assert_eq!(Some(gs.energy), c.planted_energy().unwrap());
        for s in &gs.states {
            let (x, y) = c.decode_factors(s.values()).unwrap();
            assert_eq!(x * y, a * b);
        }
    }
}

#[test]
fn sat_ground_energy_tracks_satisfiability() {
    let mut rng = StdRng::seed_from_u64(17);
    let mut seen = BTreeMap::new();
    // Every sign pattern over three variables: unsatisfiable.
    let all_signs: Vec<[i32; 3]> = (0..8)
        .map(|s| [1, 2, 3].map(|x: i32| if s >> (x - 1) & 1 == 1 { x } else { -x }))
        .collect();
    let mut formulas = vec![CnfFormula::new(3, all_signs).unwrap()];
    for _ in 0..60 {
        let v = 3 + rand::Rng::gen_range(&mut rng, 0..2);
        let c = rand::Rng::gen_range(&mut rng, 1..=8);
        formulas.push(CnfFormula::random(v, c, &mut rng).unwrap());
    }
    for cnf in formulas {
        let mut circuit = build_sat(&cnf).unwrap();
        circuit.clamp_output_true().unwrap();
        let model = circuit.compose().unwrap();
        if model.num_free() > 20 {
            continue;
        }
        let satisfiable = cnf.brute_force_solution().unwrap().is_some();
        let ground = ground_states(&model).unwrap().energy;
        assert_eq!(ground == circuit.gate_energy_bound().unwrap(), satisfiable, "{cnf:?}");
        *seen.entry(satisfiable).or_insert(0) += 1;
    }
    assert!(seen.get(&true).copied().unwrap_or(0) > 0);
    assert!(seen.get(&false).copied().unwrap_or(0) > 0);
}

#[test]
fn copy_pair_disagreement_probability() {
    let mut b = ModelBuilder::new(2);
    b.add_coupling(0, 1, 1).unwrap();
    let pair = b.build().unwrap();
    for bt in [0.25, 0.5, 1.0, 1.5] {
        let mut chain = Chain::new(&pair, None, RngKind::CounterBased, 99).unwrap();
        let n = 200_000u64;
        let mut differ = 0u64;
        for _ in 0..n {
            chain.sweep_sequential(beta(bt));
            differ += (chain.values()[0] != chain.values()[1]) as u64;
        }
        let x = (-2.0 * bt).exp();
        let p = x / (1.0 + x);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let got = differ as f64 / n as f64;
        // Successive sweeps are correlated, so allow a few binomial sigmas.
        assert!((got - p).abs() < 6.0 * sigma, "beta {bt}: {got} vs {p}");
    }
}

#[test]
fn kl_shrinks_with_samples() {
    use sparse_ising::error_models::empirical_kl;
    use sparse_ising::sampler::sample_histogram;
    let model = gate_model(sparse_ising::gates::GateKind::FullAdder);
    let exact = boltzmann_exact(&model, beta(1.0)).unwrap();
    let coloring = dsatur(&model);
    let kl = |samples| {
        let mut chain = Chain::new(&model, Some(&coloring), RngKind::CounterBased, 4).unwrap();
        let counts = sample_histogram(&mut chain, UpdateMode::Chromatic, beta(1.0), 100, samples).unwrap();
        empirical_kl(&counts, &exact).unwrap()
    };
    let (small, large) = (kl(1_000), kl(200_000));
    assert!(large < small, "{large} !< {small}");
}

#[test]
fn bundled_cnf_files_round_trip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cnf");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cnf = CnfFormula::read(&path).unwrap();
        assert_eq!(CnfFormula::parse_dimacs(&cnf.to_dimacs()).unwrap(), cnf, "{}", path.display());
        assert!(cnf.clauses.iter().flatten().all(|l| l.unsigned_abs() as usize <= cnf.v && *l != 0));
    }
}

#[test]
fn negative_beta_is_rejected() {
    assert!(Beta::new(-0.1).is_err());
    assert!(Beta::new(f64::NAN).is_err());
    assert!(Beta::new(0.0).is_ok());
}

#[test]
fn masks_only_flag_existing_edges() {
    let fa = gate_model(sparse_ising::gates::GateKind::FullAdder);
    assert!(ErrorMask::from_entries(&fa, MaskKind::Single, &[(0, 4)]).is_ok());
    let mut b = ModelBuilder::new(3);
    b.add_coupling(0, 1, 1).unwrap();
    let path = b.build().unwrap();
    assert!(ErrorMask::from_entries(&path, MaskKind::Single, &[(0, 2)]).is_err());
    assert!(ErrorMask::random(&path, MaskKind::Single, 1.5, &mut StdRng::seed_from_u64(0)).is_err());
}
