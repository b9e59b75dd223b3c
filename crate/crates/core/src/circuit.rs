//! Gate netlists, node fusion and the two problem compilers (array
//! multiplier for factoring, OR-gate chains for 3-SAT).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cnf::CnfFormula;
use crate::error::{Error, Result};
use crate::gates::GateKind;
use crate::model::{IsingModel, ModelBuilder, SpinState};
use crate::sparsify::SparsifyPlan;

/// One gate placed in a circuit. `pins[p]` is the node wired to pin `p`;
/// a negated pin sees the complement of its node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateInstance {
    pub kind: GateKind,
    pub pins: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negated: Vec<bool>,
    /// Multiplier on all gate weights (used for COPY gates with `J_T != 1`).
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: i32,
}

fn one() -> i32 {
    1
}

fn is_one(x: &i32) -> bool {
    *x == 1
}

impl GateInstance {
    pub fn new(kind: GateKind, pins: Vec<usize>) -> Self {
        GateInstance {
            kind,
            pins,
            negated: Vec::new(),
            scale: 1,
        }
    }

    pub fn is_negated(&self, pin: usize) -> bool {
        self.negated.get(pin).copied().unwrap_or(false)
    }

    /// Couplings between pins (`(pin_a, pin_b, w)`) and per-pin biases with
    /// negation and scale applied.
    pub fn pin_weights(&self) -> (Vec<(usize, usize, i32)>, Vec<i32>) {
        let sign = |p: usize| if self.is_negated(p) { -1 } else { 1 };
        let (edges, h) = self.kind.weights();
        let edges = edges
            .into_iter()
            .map(|(p, q, w)| (p, q, w * sign(p) * sign(q) * self.scale))
            .collect();
        let h = h
            .into_iter()
            .enumerate()
            .map(|(p, w)| w * sign(p) * self.scale)
            .collect();
        (edges, h)
    }

    /// Number of couplings incident to `pin` inside this gate.
    pub fn pin_degree(&self, pin: usize) -> usize {
        let (edges, _) = self.pin_weights();
        edges
            .iter()
            .filter(|&&(p, q, w)| w != 0 && (p == pin || q == pin))
            .count()
    }
}

/// Node roles of an array multiplier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizerLayout {
    pub m: usize,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// Product bits, least significant first (`2m` entries).
    pub p: Vec<usize>,
    /// Nodes tied to logic 0.
    pub constants: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatLayout {
    pub cnf: CnfFormula,
    /// Node of variable `x` is `vars[x - 1]`.
    pub vars: Vec<usize>,
    /// Middle node of each clause.
    pub clause_nodes: Vec<usize>,
    pub out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Generic,
    Factorizer(FactorizerLayout),
    Sat(SatLayout),
}

/// A gate netlist over `n` (already fused) nodes. Every gate pin maps to
/// exactly one node; several pins on one node is what fusion means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<GateInstance>,
    /// Bipolar clamp values.
    #[serde(default)]
    pub clamps: BTreeMap<usize, i8>,
    pub problem: Problem,
    /// A known ground state (bipolar, length `n`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<i8>>,
    /// Present when this circuit is the sparsified form of another.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SparsifyPlan>,
}

/// Accumulates gates over freely allocated nodes, with union-find fusion.
#[derive(Debug, Clone, Default)]
pub struct CircuitBuilder {
    parent: Vec<usize>,
    gates: Vec<GateInstance>,
    clamps: BTreeMap<usize, i8>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    pub fn add_nodes(&mut self, count: usize) -> Vec<usize> {
        (0..count).map(|_| self.add_node()).collect()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn add_gate(&mut self, kind: GateKind, pins: &[usize]) -> Result<usize> {
        self.add_gate_negated(kind, pins, &[])
    }

    pub fn add_gate_negated(
        &mut self,
        kind: GateKind,
        pins: &[usize],
        negated: &[bool],
    ) -> Result<usize> {
        let gate = GateInstance {
            kind,
            pins: pins.to_vec(),
            negated: if negated.iter().any(|&x| x) {
                negated.to_vec()
            } else {
                Vec::new()
            },
            scale: 1,
        };
        check_gate(&gate, self.gates.len(), self.parent.len())?;
        self.gates.push(gate);
        Ok(self.gates.len() - 1)
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges two nodes into one fusion class.
    pub fn fuse(&mut self, a: usize, b: usize) -> Result<()> {
        let n = self.parent.len();
        for node in [a, b] {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
        }
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
        Ok(())
    }

    pub fn clamp(&mut self, node: usize, value: i8) -> Result<()> {
        if node >= self.parent.len() {
            return Err(Error::NodeOutOfRange {
                node,
                n: self.parent.len(),
            });
        }
        if value != 1 && value != -1 {
            return Err(Error::InvalidSpin { node, value });
        }
        self.clamps.insert(node, value);
        Ok(())
    }

    /// Resolves fusion classes into compact node indices (ordered by each
    /// class's smallest member) and returns the circuit plus the map from
    /// builder nodes to circuit nodes.
    pub fn build(mut self, problem: Problem) -> Result<(Circuit, Vec<usize>)> {
        let n = self.parent.len();
        let roots: Vec<usize> = (0..n).map(|x| self.find(x)).collect();
        let mut index_of_root = vec![usize::MAX; n];
        let mut next = 0;
        let mut map = vec![0; n];
        for x in 0..n {
            let r = roots[x];
            if index_of_root[r] == usize::MAX {
                index_of_root[r] = next;
                next += 1;
            }
            map[x] = index_of_root[r];
        }
        let mut clamps = BTreeMap::new();
        for (&node, &value) in &self.clamps {
            if let Some(&prev) = clamps.get(&map[node]) {
                if prev != value {
                    return Err(Error::InvalidArgument(format!(
                        "fused node {} clamped to both {prev} and {value}",
                        map[node]
                    )));
                }
            }
            clamps.insert(map[node], value);
        }
        let gates = self
            .gates
            .into_iter()
            .map(|mut g| {
                for p in &mut g.pins {
                    *p = map[*p];
                }
                g
            })
            .collect();
        let circuit = Circuit {
            n: next,
            gates,
            clamps,
            problem,
            planted: None,
            plan: None,
        };
        Ok((circuit, map))
    }
}

fn check_gate(gate: &GateInstance, index: usize, n: usize) -> Result<()> {
    if gate.pins.len() != gate.kind.num_pins() {
        return Err(Error::PinConflict {
            gate: index,
            msg: format!(
                "{} takes {} pins, got {}",
                gate.kind,
                gate.kind.num_pins(),
                gate.pins.len()
            ),
        });
    }
    if !gate.negated.is_empty() && gate.negated.len() != gate.pins.len() {
        return Err(Error::PinConflict {
            gate: index,
            msg: "negation flags do not match pin count".into(),
        });
    }
    if let Some(&p) = gate.pins.iter().find(|&&p| p >= n) {
        return Err(Error::PinConflict {
            gate: index,
            msg: format!("pin wired to node {p} but the circuit has {n} nodes"),
        });
    }
    Ok(())
}

impl Circuit {
    /// Wraps a single gate with no fusion.
    pub fn single_gate(kind: GateKind) -> Self {
        let mut b = CircuitBuilder::new();
        let pins = b.add_nodes(kind.num_pins());
        b.add_gate(kind, &pins).expect("fresh pins");
        b.build(Problem::Generic).expect("no clamps").0
    }

    pub fn validate(&self) -> Result<()> {
        for (index, gate) in self.gates.iter().enumerate() {
            check_gate(gate, index, self.n)?;
        }
        for (&node, &value) in &self.clamps {
            if node >= self.n {
                return Err(Error::NodeOutOfRange { node, n: self.n });
            }
            if value != 1 && value != -1 {
                return Err(Error::InvalidSpin { node, value });
            }
        }
        Ok(())
    }

    /// Sums every gate's couplings and biases onto the fused nodes. A gate
    /// coupling whose two pins share a node is constant (`m^2 = 1`) and is
    /// folded into the model offset.
    pub fn compose(&self) -> Result<IsingModel> {
        self.validate()?;
        let mut b = ModelBuilder::new(self.n);
        for gate in &self.gates {
            let (edges, h) = gate.pin_weights();
            for (p, q, w) in edges {
                let (i, j) = (gate.pins[p], gate.pins[q]);
                if i == j {
                    b.add_offset(-(w as i64));
                } else {
                    b.add_coupling(i, j, w as i64)?;
                }
            }
            for (p, w) in h.into_iter().enumerate() {
                b.add_bias(gate.pins[p], w as i64)?;
            }
        }
        for (&node, &value) in &self.clamps {
            b.clamp(node, value)?;
        }
        b.build()
    }

    /// Number of gate couplings folded into the offset by fusion.
    pub fn fused_self_edges(&self) -> usize {
        self.gates
            .iter()
            .map(|g| {
                g.pin_weights()
                    .0
                    .iter()
                    .filter(|&&(p, q, w)| w != 0 && g.pins[p] == g.pins[q])
                    .count()
            })
            .sum()
    }

    /// `(gate, pin)` pairs wired to each node.
    pub fn pins_by_node(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.n];
        for (g, gate) in self.gates.iter().enumerate() {
            for (p, &node) in gate.pins.iter().enumerate() {
                out[node].push((g, p));
            }
        }
        out
    }

    pub fn clamp(&mut self, node: usize, value: i8) -> Result<()> {
        if node >= self.n {
            return Err(Error::NodeOutOfRange { node, n: self.n });
        }
        if value != 1 && value != -1 {
            return Err(Error::InvalidSpin { node, value });
        }
        self.clamps.insert(node, value);
        if let Some(plan) = &self.plan {
            if let Some(group) = plan.groups.get(node) {
                for &replica in group {
                    self.clamps.insert(replica, value);
                }
            }
        }
        Ok(())
    }

    pub fn factorizer(&self) -> Option<&FactorizerLayout> {
        match &self.problem {
            Problem::Factorizer(layout) => Some(layout),
            _ => None,
        }
    }

    pub fn sat(&self) -> Option<&SatLayout> {
        match &self.problem {
            Problem::Sat(layout) => Some(layout),
            _ => None,
        }
    }

    /// Clamps the product bits of a factorizer to `p`.
    pub fn clamp_product(&mut self, p: u128) -> Result<()> {
        let layout = self
            .factorizer()
            .ok_or_else(|| Error::InvalidArgument("not a factorizer circuit".into()))?
            .clone();
        let bits = layout.p.len();
        if bits < 128 && p >> bits != 0 {
            return Err(Error::InvalidArgument(format!(
                "product {p} does not fit in {bits} bits"
            )));
        }
        for (bit, &node) in layout.p.iter().enumerate() {
            self.clamp(node, if p >> bit & 1 == 1 { 1 } else { -1 })?;
        }
        if let Some(planted) = &self.planted {
            if self.decode_product(planted) != Some(p) {
                self.planted = None;
            }
        }
        Ok(())
    }

    /// Clamps the single SAT output node to true.
    pub fn clamp_output_true(&mut self) -> Result<()> {
        let out = self
            .sat()
            .ok_or_else(|| Error::InvalidArgument("not a SAT circuit".into()))?
            .out;
        self.clamp(out, 1)
    }

    /// Simulates the netlist forward from the given node values. Gates must
    /// appear in topological order; clamps act as known values and any
    /// computed output that contradicts a known value is an error.
    pub fn propagate(&self, known: &BTreeMap<usize, bool>) -> Result<Vec<bool>> {
        let mut value: Vec<Option<bool>> = vec![None; self.n];
        for (&node, &v) in &self.clamps {
            value[node] = Some(v > 0);
        }
        for (&node, &v) in known {
            if node >= self.n {
                return Err(Error::NodeOutOfRange { node, n: self.n });
            }
            value[node] = Some(v);
        }
        for (g, gate) in self.gates.iter().enumerate() {
            let inputs = gate.kind.num_inputs();
            let pin_value = |p: usize, value: &[Option<bool>]| {
                value[gate.pins[p]].map(|v| v ^ gate.is_negated(p))
            };
            let ins: Vec<bool> = (0..inputs)
                .map(|p| {
                    pin_value(p, &value).ok_or_else(|| Error::PinConflict {
                        gate: g,
                        msg: format!("input pin {p} has no value during propagation"),
                    })
                })
                .collect::<Result<_>>()?;
            for (k, out) in gate.kind.eval(&ins).into_iter().enumerate() {
                let p = inputs + k;
                let node_value = out ^ gate.is_negated(p);
                match value[gate.pins[p]] {
                    Some(existing) if existing != node_value => {
                        return Err(Error::PinConflict {
                            gate: g,
                            msg: format!("output pin {p} contradicts node {}", gate.pins[p]),
                        })
                    }
                    _ => value[gate.pins[p]] = Some(node_value),
                }
            }
        }
        value
            .into_iter()
            .enumerate()
            .map(|(node, v)| {
                v.ok_or_else(|| Error::InvalidArgument(format!("node {node} left undetermined")))
            })
            .collect()
    }

    /// Records the factors `a`, `b` and the implied internal state as the planted solution.
    pub fn plant_factors(&mut self, a: u64, b: u64) -> Result<()> {
        let layout = self
            .factorizer()
            .ok_or_else(|| Error::InvalidArgument("not a factorizer circuit".into()))?
            .clone();
        let m = layout.m;
        if m < 64 && (a >> m != 0 || b >> m != 0) {
            return Err(Error::InvalidArgument(format!(
                "factors must fit in {m} bits"
            )));
        }
        let mut known = BTreeMap::new();
        for bit in 0..m {
            known.insert(layout.a[bit], a >> bit & 1 == 1);
            known.insert(layout.b[bit], b >> bit & 1 == 1);
        }
        let values = self.propagate(&known)?;
        self.planted = Some(values.iter().map(|&v| if v { 1 } else { -1 }).collect());
        Ok(())
    }

    /// Records a satisfying assignment and the implied clause nodes as the planted solution.
    pub fn plant_assignment(&mut self, assignment: &[bool]) -> Result<()> {
        let layout = self
            .sat()
            .ok_or_else(|| Error::InvalidArgument("not a SAT circuit".into()))?
            .clone();
        if assignment.len() != layout.cnf.v {
            return Err(Error::SizeMismatch {
                expected: layout.cnf.v,
                got: assignment.len(),
            });
        }
        let known = layout
            .vars
            .iter()
            .zip(assignment)
            .map(|(&node, &v)| (node, v))
            .collect();
        let values = self.propagate(&known)?;
        self.planted = Some(values.iter().map(|&v| if v { 1 } else { -1 }).collect());
        Ok(())
    }

    /// Planted state as a [`SpinState`] of the composed model.
    pub fn planted_state(&self, model: &IsingModel) -> Option<Result<SpinState>> {
        let planted = self.planted.as_ref()?;
        Some(SpinState::from_values(model, planted.clone()))
    }

    /// Energy of the planted state, in model units.
    pub fn planted_energy(&self) -> Result<Option<i64>> {
        let model = self.compose()?;
        match self.planted_state(&model) {
            Some(state) => Ok(Some(model.energy_raw(&state?)?)),
            None => Ok(None),
        }
    }

    /// Sum of per-gate ground energies plus fusion constants: a lower bound
    /// on the composed energy, attained exactly when every gate is satisfied.
    pub fn gate_energy_bound(&self) -> Result<i64> {
        let model = self.compose()?;
        let gates: i64 = self
            .gates
            .iter()
            .map(|g| g.kind.ground_energy() * g.scale as i64)
            .sum();
        Ok(gates + model.offset())
    }

    /// Bipolar node values of the fused (pre-sparsification) circuit, plus
    /// whether every replica group agreed.
    pub fn project(&self, values: &[i8]) -> (Vec<i8>, bool) {
        match &self.plan {
            Some(plan) => plan.project(values),
            None => (values.to_vec(), true),
        }
    }

    pub fn decode_factors(&self, values: &[i8]) -> Option<(u64, u64)> {
        let layout = self.factorizer()?;
        let (fused, _) = self.project(values);
        let read = |nodes: &[usize]| {
            nodes
                .iter()
                .enumerate()
                .fold(0u64, |acc, (bit, &node)| acc | ((fused[node] > 0) as u64) << bit)
        };
        Some((read(&layout.a), read(&layout.b)))
    }

    pub fn decode_product(&self, values: &[i8]) -> Option<u128> {
        let layout = self.factorizer()?;
        let (fused, _) = self.project(values);
        Some(
            layout
                .p
                .iter()
                .enumerate()
                .fold(0u128, |acc, (bit, &node)| acc | ((fused[node] > 0) as u128) << bit),
        )
    }

    /// Variable assignment read from the (projected) variable nodes.
    pub fn assignment(&self, values: &[i8]) -> Option<Vec<bool>> {
        let layout = self.sat()?;
        let (fused, _) = self.project(values);
        Some(layout.vars.iter().map(|&node| fused[node] > 0).collect())
    }

    pub fn satisfied_clauses(&self, values: &[i8]) -> Option<usize> {
        let layout = self.sat()?;
        Some(layout.cnf.satisfied_clauses(&self.assignment(values)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let circuit: Circuit = serde_json::from_str(text)?;
        circuit.validate()?;
        Ok(circuit)
    }
}

/// Array multiplier of two `m`-bit factors: `m^2` AND gates for the partial
/// products and `m - 1` rows of `m` ripple-carry full adders. Unused adder
/// inputs are tied to dedicated constant nodes clamped to 0.
pub fn build_factorizer(m: usize) -> Result<Circuit> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "factorizer needs m >= 2, got {m}"
        )));
    }
    let mut c = CircuitBuilder::new();
    let a = c.add_nodes(m);
    let b = c.add_nodes(m);
    let mut pp = vec![vec![0usize; m]; m];
    for i in 0..m {
        for j in 0..m {
            pp[i][j] = c.add_node();
            c.add_gate(GateKind::And, &[a[i], b[j], pp[i][j]])?;
        }
    }
    let mut constants = Vec::new();
    let mut zero = |c: &mut CircuitBuilder| {
        let node = c.add_node();
        c.clamp(node, -1).expect("fresh node");
        constants.push(node);
        node
    };

    let mut p = vec![pp[0][0]];
    let mut prev_s: Vec<usize> = Vec::new();
    let mut prev_cout = 0usize;
    for r in 1..m {
        let mut s_row = Vec::with_capacity(m);
        let mut carry = zero(&mut c);
        for j in 0..m {
            let x = match (r, j + 1 < m) {
                (1, true) => pp[j + 1][0],
                (1, false) => zero(&mut c),
                (_, true) => prev_s[j + 1],
                (_, false) => prev_cout,
            };
            let s = c.add_node();
            let cout = c.add_node();
            c.add_gate(GateKind::FullAdder, &[x, pp[j][r], carry, s, cout])?;
            s_row.push(s);
            carry = cout;
        }
        p.push(s_row[0]);
        prev_s = s_row;
        prev_cout = carry;
    }
    p.extend_from_slice(&prev_s[1..]);
    p.push(prev_cout);

    let layout = FactorizerLayout {
        m,
        a,
        b,
        p,
        constants,
    };
    let (circuit, _) = c.build(Problem::Factorizer(layout))?;
    Ok(circuit)
}

/// Each clause `(l1 | l2 | l3)` becomes `OR(l1, l2) -> t` and `OR(t, l3) -> out`,
/// with every clause sharing one `out` node clamped true. Negative literals
/// negate the gate pin rather than adding NOT gates.
pub fn build_sat(cnf: &CnfFormula) -> Result<Circuit> {
    cnf.validate()?;
    let mut c = CircuitBuilder::new();
    let vars = c.add_nodes(cnf.v);
    let clause_nodes = c.add_nodes(cnf.num_clauses());
    let out = c.add_node();
    let node = |lit: i32| vars[lit.unsigned_abs() as usize - 1];
    for (k, &[l1, l2, l3]) in cnf.clauses.iter().enumerate() {
        let t = clause_nodes[k];
        c.add_gate_negated(
            GateKind::Or,
            &[node(l1), node(l2), t],
            &[l1 < 0, l2 < 0, false],
        )?;
        c.add_gate_negated(GateKind::Or, &[t, node(l3), out], &[false, l3 < 0, false])?;
    }
    c.clamp(out, 1)?;
    let layout = SatLayout {
        cnf: cnf.clone(),
        vars,
        clause_nodes,
        out,
    };
    let (circuit, _) = c.build(Problem::Sat(layout))?;
    Ok(circuit)
}

/// The five-node AND-into-OR example: `m3 = m1 AND m2`, `m5 = m3 OR m4`.
pub fn and_or_example() -> Circuit {
    let mut c = CircuitBuilder::new();
    let and = c.add_nodes(3);
    let or = c.add_nodes(3);
    c.add_gate(GateKind::And, &and).expect("fresh pins");
    c.add_gate(GateKind::Or, &or).expect("fresh pins");
    c.fuse(and[2], or[0]).expect("valid nodes");
    // Fusing builder nodes 2 and 3 leaves the order m1, m2, m3, m4, m5.
    c.build(Problem::Generic).expect("no clamps").0
}

/// Predicted node count of the fused factorizer.
pub fn fused_factorizer_count(m: usize) -> usize {
    3 * m * m + m
}

pub fn fused_sat_count(v: usize, c: usize) -> usize {
    c + v + 1
}
