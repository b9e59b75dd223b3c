//! Degree-bounded sparsification. High fan-out nodes are split into replicas
//! tied together by ferromagnetic COPY couplings of strength `J_T`; in every
//! ground state all replicas agree, so projecting back is exact.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateInstance, Problem};
use crate::error::{Error, Result};
use crate::gates::GateKind;
use crate::model::{IsingModel, ModelBuilder};

pub const DEFAULT_COPY_WEIGHT: i32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsifyPlan {
    pub k: usize,
    pub j_t: i32,
    /// Node count before sparsification.
    pub fused_n: usize,
    /// Replicas of each original node, the original index first.
    pub groups: Vec<Vec<usize>>,
    pub copy_edges: Vec<(usize, usize)>,
}

impl SparsifyPlan {
    pub fn identity(n: usize, k: usize, j_t: i32) -> Self {
        SparsifyPlan {
            k,
            j_t,
            fused_n: n,
            groups: (0..n).map(|i| vec![i]).collect(),
            copy_edges: Vec::new(),
        }
    }

    /// True when no node was split.
    pub fn is_empty(&self) -> bool {
        self.copy_edges.is_empty() && self.groups.iter().all(|g| g.len() == 1)
    }

    pub fn sparse_n(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Replica-majority projection onto the original nodes; an even split
    /// takes the value of the lowest-indexed replica. The flag reports
    /// whether every group was unanimous.
    pub fn project(&self, values: &[i8]) -> (Vec<i8>, bool) {
        let mut agree = true;
        let out = self
            .groups
            .iter()
            .map(|group| {
                let up = group.iter().filter(|&&r| values[r] > 0).count();
                let down = group.len() - up;
                if up != 0 && down != 0 {
                    agree = false;
                }
                match up.cmp(&down) {
                    std::cmp::Ordering::Greater => 1,
                    std::cmp::Ordering::Less => -1,
                    std::cmp::Ordering::Equal => {
                        let lowest = *group.iter().min().expect("groups are nonempty");
                        if values[lowest] > 0 {
                            1
                        } else {
                            -1
                        }
                    }
                }
            })
            .collect();
        (out, agree)
    }

    /// Copies original-node values onto every replica.
    pub fn lift(&self, fused: &[i8]) -> Vec<i8> {
        let mut out = vec![0i8; self.sparse_n()];
        for (i, group) in self.groups.iter().enumerate() {
            for &r in group {
                out[r] = fused[i];
            }
        }
        out
    }
}

/// Hands out fresh node indices after the originals.
struct Allocator {
    next: usize,
}

impl Allocator {
    fn take(&mut self) -> usize {
        self.next += 1;
        self.next - 1
    }
}

/// Joins `leaves` with a `(k-1)`-ary tree of new copy nodes whose root is
/// `root`. Returns the internal nodes (root last) and the tree edges.
fn copy_tree(
    leaves: &[usize],
    root: usize,
    k: usize,
    alloc: &mut Allocator,
) -> (Vec<usize>, Vec<(usize, usize)>) {
    let arity = k - 1;
    let mut internal = Vec::new();
    let mut edges = Vec::new();
    let mut level = leaves.to_vec();
    loop {
        let parents = level.len().div_ceil(arity);
        let mut next = Vec::with_capacity(parents);
        for chunk in level.chunks(arity) {
            let parent = if parents == 1 { root } else { alloc.take() };
            for &child in chunk {
                edges.push((parent, child));
            }
            internal.push(parent);
            next.push(parent);
        }
        if parents == 1 {
            break;
        }
        level = next;
    }
    (internal, edges)
}

/// Number of internal copy nodes in a `(k-1)`-ary tree over `m` leaves.
pub fn tree_overhead(m: usize, k: usize) -> usize {
    let mut a = m;
    let mut total = 0;
    loop {
        a = a.div_ceil(k - 1);
        total += a;
        if a <= 1 {
            return total;
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k < 3 {
        return Err(Error::DegreeBoundTooSmall {
            k,
            reason: "a replica needs a copy edge plus at least one payload edge".into(),
        });
    }
    Ok(())
}

/// A copy weight that makes [`sparsify`] exact on any model: if replicas
/// disagree, aligning them all with the original index flips payload
/// couplings worth at most the node's absolute row sum while healing at
/// least one copy edge worth `2 J_T`.
pub fn exact_copy_weight(model: &IsingModel, k: usize) -> i32 {
    (0..model.len())
        .filter(|&i| model.degree(i) > k && !model.is_clamped(i))
        .map(|i| model.abs_row_sum(i))
        .max()
        .map_or(DEFAULT_COPY_WEIGHT, |s| (s + 1).min(i32::MAX as i64) as i32)
}

/// Sparsifies an arbitrary model. Free nodes above degree `k` have their
/// couplings (ordered by neighbor) dealt into leaves of `k - 1`; two leaves
/// are joined directly, more by a copy tree rooted at the original index.
/// Clamped nodes need no agreement and are packed `k` couplings per replica.
/// Biases stay on the original index. Without gate structure the split is
/// only guaranteed exact for `J_T >= exact_copy_weight(model, k)`; use
/// [`sparsify_circuit`] to get exactness at any positive `J_T`.
pub fn sparsify(model: &IsingModel, k: usize, j_t: i32) -> Result<(IsingModel, SparsifyPlan)> {
    check_k(k)?;
    if j_t <= 0 {
        return Err(Error::InvalidArgument("J_T must be positive".into()));
    }
    let model = model.bipolar()?;
    let n = model.len();
    let mut alloc = Allocator { next: n };
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut copy_edges = Vec::new();
    // endpoint[i][pos]: replica of i that carries its pos-th coupling.
    let mut endpoint: Vec<Vec<usize>> = (0..n).map(|i| vec![i; model.degree(i)]).collect();

    for i in 0..n {
        let degree = model.degree(i);
        if degree <= k {
            continue;
        }
        if model.is_clamped(i) {
            for (c, chunk) in endpoint[i].chunks_mut(k).enumerate() {
                let replica = if c == 0 { i } else { alloc.take() };
                chunk.fill(replica);
                if c > 0 {
                    groups[i].push(replica);
                }
            }
            continue;
        }
        let leaves = degree.div_ceil(k - 1);
        if leaves == 2 {
            let other = alloc.take();
            for (pos, slot) in endpoint[i].iter_mut().enumerate() {
                *slot = if pos < k - 1 { i } else { other };
            }
            groups[i].push(other);
            copy_edges.push((i, other));
            continue;
        }
        let leaf_nodes: Vec<usize> = (0..leaves).map(|_| alloc.take()).collect();
        for (pos, slot) in endpoint[i].iter_mut().enumerate() {
            *slot = leaf_nodes[pos / (k - 1)];
        }
        let (internal, edges) = copy_tree(&leaf_nodes, i, k, &mut alloc);
        groups[i].extend(leaf_nodes);
        groups[i].extend(internal.into_iter().filter(|&x| x != i));
        copy_edges.extend(edges);
    }

    let mut b = ModelBuilder::new(alloc.next);
    for i in 0..n {
        for (pos, &(j, w)) in model.neighbors(i).iter().enumerate() {
            let j = j as usize;
            if i < j {
                let back = model
                    .neighbors(j)
                    .binary_search_by_key(&(i as u32), |&(x, _)| x)
                    .expect("symmetric adjacency");
                b.add_coupling(endpoint[i][pos], endpoint[j][back], w as i64)?;
            }
        }
        b.add_bias(i, model.h()[i] as i64)?;
    }
    for &(x, y) in &copy_edges {
        b.add_coupling(x, y, j_t as i64)?;
    }
    for (&i, &v) in model.clamps() {
        for &r in &groups[i] {
            b.clamp(r, v)?;
        }
    }
    b.add_offset(model.offset());
    let sparse = b.frac_bits(model.frac_bits()).build()?;
    let plan = SparsifyPlan {
        k,
        j_t,
        fused_n: n,
        groups,
        copy_edges,
    };
    Ok((sparse, plan))
}

/// How a circuit's split nodes are joined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    Tree,
    Chain,
}

/// Sparsifies a circuit using gate provenance: a split node gets one replica
/// per gate pin, so each replica carries exactly one gate's couplings and bias.
///
/// Factorizer and generic circuits split only nodes above degree `k`, joining
/// two pins directly and more through a `(k-1)`-ary copy tree. SAT circuits
/// always split variable nodes into a copy chain. Clamped nodes above degree
/// `k` are packed into clamped replicas without copy gates.
pub fn sparsify_circuit(circuit: &Circuit, k: usize, j_t: i32) -> Result<Circuit> {
    check_k(k)?;
    if j_t <= 0 {
        return Err(Error::InvalidArgument("J_T must be positive".into()));
    }
    if circuit.plan.is_some() {
        return Err(Error::InvalidArgument("circuit is already sparsified".into()));
    }
    let fused = circuit.compose()?;
    let n = circuit.n;
    let pins = circuit.pins_by_node();
    let always_chain: BTreeSet<usize> = match &circuit.problem {
        Problem::Sat(layout) => layout.vars.iter().copied().collect(),
        _ => BTreeSet::new(),
    };
    let scheme = match circuit.problem {
        Problem::Sat(_) => Scheme::Chain,
        _ => Scheme::Tree,
    };

    let mut alloc = Allocator { next: n };
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut copy_edges = Vec::new();
    let mut gates = circuit.gates.clone();
    let degree_of = |(g, p): (usize, usize)| circuit.gates[g].pin_degree(p);
    let too_small = |node: usize, reason: String| Error::DegreeBoundTooSmall {
        k,
        reason: format!("node {node}: {reason}"),
    };

    for node in 0..n {
        let node_pins = &pins[node];
        let forced = always_chain.contains(&node) && node_pins.len() > 1;
        // Neighbors split later get one replica per pin, so a clamped node is
        // judged by its pin degrees rather than its distinct fused neighbors.
        let degree = if circuit.clamps.contains_key(&node) {
            node_pins.iter().map(|&gp| degree_of(gp)).sum()
        } else {
            fused.degree(node)
        };
        if degree <= k && !forced {
            continue;
        }
        if let Some(&(g, p)) = node_pins.iter().find(|&&gp| degree_of(gp) > k) {
            return Err(too_small(
                node,
                format!("gate {g} pin {p} alone has degree {}", degree_of((g, p))),
            ));
        }
        if circuit.clamps.contains_key(&node) {
            let mut load = 0;
            let mut replica = node;
            for &(g, p) in node_pins {
                let d = degree_of((g, p));
                if load + d > k {
                    replica = alloc.take();
                    groups[node].push(replica);
                    load = 0;
                }
                load += d;
                gates[g].pins[p] = replica;
            }
            continue;
        }
        if node_pins.len() < 2 {
            return Err(too_small(node, "single pin exceeds the bound".into()));
        }
        let max_pin = node_pins.iter().map(|&gp| degree_of(gp)).max().unwrap_or(0);
        match scheme {
            Scheme::Chain => {
                let needed = if node_pins.len() == 2 { 1 } else { 2 };
                if max_pin + needed > k {
                    return Err(too_small(node, "no room for chain copy edges".into()));
                }
                let mut prev = None;
                for (idx, &(g, p)) in node_pins.iter().enumerate() {
                    let replica = if idx == 0 { node } else { alloc.take() };
                    if idx > 0 {
                        groups[node].push(replica);
                    }
                    gates[g].pins[p] = replica;
                    if let Some(prev) = prev {
                        copy_edges.push((prev, replica));
                    }
                    prev = Some(replica);
                }
            }
            Scheme::Tree if node_pins.len() == 2 => {
                if max_pin + 1 > k {
                    return Err(too_small(node, "no room for a copy edge".into()));
                }
                let other = alloc.take();
                groups[node].push(other);
                let (g, p) = node_pins[1];
                gates[g].pins[p] = other;
                copy_edges.push((node, other));
            }
            Scheme::Tree => {
                if max_pin + 1 > k {
                    return Err(too_small(node, "no room for a copy edge".into()));
                }
                let leaves: Vec<usize> = node_pins.iter().map(|_| alloc.take()).collect();
                for (&(g, p), &leaf) in node_pins.iter().zip(&leaves) {
                    gates[g].pins[p] = leaf;
                }
                let (internal, edges) = copy_tree(&leaves, node, k, &mut alloc);
                groups[node].extend(leaves);
                groups[node].extend(internal.into_iter().filter(|&x| x != node));
                copy_edges.extend(edges);
            }
        }
    }

    for &(x, y) in &copy_edges {
        gates.push(GateInstance {
            kind: GateKind::Copy,
            pins: vec![x, y],
            negated: Vec::new(),
            scale: j_t,
        });
    }
    let mut clamps = BTreeMap::new();
    for (&node, &value) in &circuit.clamps {
        for &r in &groups[node] {
            clamps.insert(r, value);
        }
    }
    let plan = SparsifyPlan {
        k,
        j_t,
        fused_n: n,
        groups,
        copy_edges,
    };
    let planted = circuit.planted.as_ref().map(|p| plan.lift(p));
    let sparse = Circuit {
        n: alloc.next,
        gates,
        clamps,
        problem: circuit.problem.clone(),
        planted,
        plan: Some(plan),
    };
    sparse.validate()?;
    let model = sparse.compose()?;
    if let Some(node) = (0..model.len()).find(|&i| model.degree(i) > k) {
        return Err(too_small(node, format!("degree {} after splitting", model.degree(node))));
    }
    Ok(sparse)
}

/// Problem families with closed-form sparse node counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemSize {
    /// Array multiplier with `m`-bit factors.
    Factorizer { m: usize },
    /// 3-SAT with `c` clauses in which every variable occurs.
    Sat { c: usize },
}

/// Node count of the sparsified circuit: `8m^2 - 5m + 2m f(m, k)` for the
/// factorizer (`m >= 3`, `k >= 5`), where `f` sums the levels of the copy
/// tree over each input's `m` pins, and `4c + ceil(c / floor(k/2))` for 3-SAT
/// (`k >= 4`), which is `ceil(9c/2)` at `k = 4`.
pub fn predict_sparse_count(problem: ProblemSize, k: usize) -> Result<usize> {
    match problem {
        ProblemSize::Factorizer { m } => {
            if k < 5 {
                return Err(Error::DegreeBoundTooSmall {
                    k,
                    reason: "full-adder pins have 4 couplings plus a copy edge".into(),
                });
            }
            if m < 3 {
                return Err(Error::InvalidArgument(
                    "the count formula assumes m >= 3 (inputs above the bound)".into(),
                ));
            }
            Ok(8 * m * m - 5 * m + 2 * m * tree_overhead(m, k))
        }
        ProblemSize::Sat { c } => {
            if k < 4 {
                return Err(Error::DegreeBoundTooSmall {
                    k,
                    reason: "chained literal replicas need 2 gate edges plus 2 copy edges".into(),
                });
            }
            Ok(4 * c + c.div_ceil(k / 2))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{and_or_example, build_factorizer, build_sat};
    use crate::cnf::CnfFormula;
    use crate::gates::ground_states;
    use rand::SeedableRng;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tree_overhead_matches_log_recursion() {
        assert_eq!(tree_overhead(16, 5), 5);
        assert_eq!(tree_overhead(7, 5), 3);
        assert_eq!(tree_overhead(4, 5), 1);
        assert_eq!(tree_overhead(25, 5), 7 + 2 + 1);
    }

    #[test]
    fn predicted_counts() {
        assert_eq!(predict_sparse_count(ProblemSize::Factorizer { m: 16 }, 5).unwrap(), 2128);
        assert_eq!(predict_sparse_count(ProblemSize::Factorizer { m: 7 }, 5).unwrap(), 399);
        assert_eq!(predict_sparse_count(ProblemSize::Sat { c: 91 }, 4).unwrap(), 410);
        assert_eq!(predict_sparse_count(ProblemSize::Sat { c: 430 }, 4).unwrap(), 1935);
        assert_eq!(predict_sparse_count(ProblemSize::Sat { c: 1065 }, 4).unwrap(), 4793);
        assert!(predict_sparse_count(ProblemSize::Sat { c: 10 }, 3).is_err());
    }

    #[test]
    fn factorizer_construction_matches_formula() {
        for m in 3..=25 {
            let sparse = sparsify_circuit(&build_factorizer(m).unwrap(), 5, 1).unwrap();
            let model = sparse.compose().unwrap();
            assert_eq!(
                model.len(),
                predict_sparse_count(ProblemSize::Factorizer { m }, 5).unwrap(),
                "m={m}"
            );
            assert!(model.max_degree() <= 5);
        }
    }

    #[test]
    fn factorizer_needs_k_five() {
        assert!(matches!(
            sparsify_circuit(&build_factorizer(4).unwrap(), 4, 1),
            Err(Error::DegreeBoundTooSmall { .. })
        ));
    }

    #[test]
    fn already_sparse_model_is_unchanged() {
        let model = and_or_example().compose().unwrap();
        let (sparse, plan) = sparsify(&model, 4, 1).unwrap();
        assert_eq!(sparse, model);
        assert!(plan.is_empty());
    }

    #[test]
    fn split_and_or_example() {
        let sparse = sparsify_circuit(&and_or_example(), 3, 1).unwrap();
        assert_eq!(sparse.n, 6);
        let plan = sparse.plan.as_ref().unwrap();
        assert_eq!(plan.groups[2], vec![2, 5]);
        let model = sparse.compose().unwrap().with_clamp(4, 1).unwrap();
        assert!(model.max_degree() <= 3);
        let gs = ground_states(&model).unwrap();
        // Columns m1 m2 m3 m3' m4.
        assert_eq!(
            gs.labels(&[0, 1, 2, 5, 3]),
            set(&["00001", "01001", "10001", "11110", "11111"])
        );
    }

    #[test]
    fn generic_split_of_and_or_example() {
        let model = and_or_example().compose().unwrap().with_clamp(4, 1).unwrap();
        let j_t = exact_copy_weight(&model, 3);
        assert_eq!(j_t, 8);
        let (sparse, plan) = sparsify(&model, 3, j_t).unwrap();
        assert!(sparse.max_degree() <= 3);
        let fused_gs = ground_states(&model).unwrap().labels(&[0, 1, 2, 3, 4]);
        let gs = ground_states(&sparse).unwrap();
        let projected: BTreeSet<String> = gs
            .states
            .iter()
            .map(|s| {
                let (p, agree) = plan.project(s.values());
                assert!(agree);
                p.iter().map(|&v| if v > 0 { '1' } else { '0' }).collect()
            })
            .collect();
        assert_eq!(projected, fused_gs);
    }

    #[test]
    fn unit_copy_weight_is_not_enough_without_gate_structure() {
        // All of m3's bias sits on one replica, so a disagreeing pair can win.
        let model = and_or_example().compose().unwrap().with_clamp(4, 1).unwrap();
        let (sparse, plan) = sparsify(&model, 3, 1).unwrap();
        let gs = ground_states(&sparse).unwrap();
        assert!(gs.states.iter().any(|s| !plan.project(s.values()).1));
    }

    #[test]
    fn sat_counts_for_small_formula() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let f = CnfFormula::random(20, 91, &mut rng).unwrap();
        let c = build_sat(&f).unwrap();
        let sparse = sparsify_circuit(&c, 4, 1).unwrap();
        let used: BTreeSet<u32> = f.clauses.iter().flatten().map(|l| l.unsigned_abs()).collect();
        assert_eq!(used.len(), 20);
        assert_eq!(sparse.n, 410);
        assert!(sparse.compose().unwrap().max_degree() <= 4);
    }

    #[test]
    fn reported_color_counts() {
        use crate::coloring::{dsatur, validate};
        let sparse = sparsify_circuit(&build_factorizer(16).unwrap(), 5, 1).unwrap();
        let model = sparse.compose().unwrap();
        let c = dsatur(&model);
        assert!(validate(&model, &c));
        assert_eq!(c.num_colors(), 5);
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let f = CnfFormula::random(100, 430, &mut rng).unwrap();
        let model = sparsify_circuit(&build_sat(&f).unwrap(), 4, 1).unwrap().compose().unwrap();
        let c = dsatur(&model);
        assert!(validate(&model, &c));
        assert_eq!(c.num_colors(), 4);
    }

    #[test]
    fn projection_tie_break() {
        let plan = SparsifyPlan {
            k: 3,
            j_t: 1,
            fused_n: 1,
            groups: vec![vec![0, 1]],
            copy_edges: vec![(0, 1)],
        };
        assert_eq!(plan.project(&[1, -1]), (vec![1], false));
        assert_eq!(plan.project(&[-1, 1]), (vec![-1], false));
        assert_eq!(plan.project(&[1, 1]), (vec![1], true));
    }

    #[test]
    fn planted_state_survives_sparsification() {
        let mut c = build_factorizer(4).unwrap();
        c.plant_factors(13, 11).unwrap();
        c.clamp_product(143).unwrap();
        let sparse = sparsify_circuit(&c, 5, 1).unwrap();
        let copies = sparse.plan.as_ref().unwrap().copy_edges.len() as i64;
        let fused_e = c.planted_energy().unwrap().unwrap();
        assert_eq!(sparse.planted_energy().unwrap(), Some(fused_e - copies));
        assert_eq!(sparse.gate_energy_bound().unwrap(), fused_e - copies);
        let planted = sparse.planted.clone().unwrap();
        assert_eq!(sparse.decode_factors(&planted), Some((13, 11)));
    }
}
