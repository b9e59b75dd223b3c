//! Probabilistic gate library: COPY, NOT, AND, OR and the full adder.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Edge, IsingModel, Representation, SpinState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateKind {
    Copy,
    Not,
    And,
    Or,
    FullAdder,
}

pub const ALL_GATES: [GateKind; 5] = [
    GateKind::Copy,
    GateKind::Not,
    GateKind::And,
    GateKind::Or,
    GateKind::FullAdder,
];

const AND_EDGES: [(usize, usize, i32); 3] = [(0, 1, -1), (0, 2, 2), (1, 2, 2)];
const AND_H: [i32; 3] = [1, 1, -2];
const OR_H: [i32; 3] = [-1, -1, 2];

#[rustfmt::skip]
const J_FA: [[i32; 5]; 5] = [
    [ 0, -1, -1,  1,  2],
    [-1,  0, -1,  1,  2],
    [-1, -1,  0,  1,  2],
    [ 1,  1,  1,  0, -2],
    [ 2,  2,  2, -2,  0],
];

impl GateKind {
    pub fn num_pins(self) -> usize {
        match self {
            GateKind::Copy | GateKind::Not => 2,
            GateKind::And | GateKind::Or => 3,
            GateKind::FullAdder => 5,
        }
    }

    pub fn pin_names(self) -> &'static [&'static str] {
        match self {
            GateKind::Copy | GateKind::Not => &["in", "out"],
            GateKind::And | GateKind::Or => &["a", "b", "out"],
            GateKind::FullAdder => &["a", "b", "cin", "s", "cout"],
        }
    }

    pub fn num_inputs(self) -> usize {
        match self {
            GateKind::Copy | GateKind::Not => 1,
            GateKind::And | GateKind::Or => 2,
            GateKind::FullAdder => 3,
        }
    }

    /// Output bits for the given input bits.
    pub fn eval(self, inputs: &[bool]) -> Vec<bool> {
        match self {
            GateKind::Copy => vec![inputs[0]],
            GateKind::Not => vec![!inputs[0]],
            GateKind::And => vec![inputs[0] && inputs[1]],
            GateKind::Or => vec![inputs[0] || inputs[1]],
            GateKind::FullAdder => {
                let sum = inputs[..3].iter().filter(|&&b| b).count();
                vec![sum & 1 == 1, sum >= 2]
            }
        }
    }

    /// Whether a full pin assignment satisfies the gate's Boolean relation.
    pub fn satisfied(self, pins: &[bool]) -> bool {
        let (inputs, outputs) = pins.split_at(self.num_inputs());
        self.eval(inputs) == outputs
    }

    /// Truth table as pin bit strings, first pin first.
    pub fn truth_table(self) -> BTreeSet<String> {
        let inputs = self.num_inputs();
        (0..1usize << inputs)
            .map(|row| {
                let bits: Vec<bool> = (0..inputs).map(|b| row >> (inputs - 1 - b) & 1 == 1).collect();
                let mut pins = bits.clone();
                pins.extend(self.eval(&bits));
                pins.iter().map(|&b| if b { '1' } else { '0' }).collect()
            })
            .collect()
    }

    /// Gate weights as `(i, j, w)` with `i < j`, and biases.
    pub fn weights(self) -> (Vec<(usize, usize, i32)>, Vec<i32>) {
        match self {
            GateKind::Copy => (vec![(0, 1, 1)], vec![0, 0]),
            GateKind::Not => (vec![(0, 1, -1)], vec![0, 0]),
            GateKind::And => (AND_EDGES.to_vec(), AND_H.to_vec()),
            GateKind::Or => (AND_EDGES.to_vec(), OR_H.to_vec()),
            GateKind::FullAdder => {
                let mut edges = Vec::new();
                for (i, row) in J_FA.iter().enumerate() {
                    for (j, &w) in row.iter().enumerate().skip(i + 1) {
                        edges.push((i, j, w));
                    }
                }
                (edges, vec![0; 5])
            }
        }
    }

    /// Energy of any truth-table row.
    pub fn ground_energy(self) -> i64 {
        match self {
            GateKind::Copy | GateKind::Not => -1,
            GateKind::And | GateKind::Or => -3,
            GateKind::FullAdder => -4,
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GateKind::Copy => "COPY",
            GateKind::Not => "NOT",
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::FullAdder => "FULL_ADDER",
        };
        f.write_str(name)
    }
}

/// The bipolar model of a single gate.
pub fn gate_model(kind: GateKind) -> IsingModel {
    let (edges, h) = kind.weights();
    IsingModel::from_parts(
        kind.num_pins(),
        Representation::Bipolar,
        edges,
        h,
        BTreeMap::new(),
    )
    .expect("gate constants are well formed")
}

/// All minimum-energy states of a model, found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundStates {
    /// Minimum energy in the model's stored units.
    pub energy: i64,
    pub states: Vec<SpinState>,
    /// Smallest excited energy minus the ground energy, if any excited state exists.
    pub gap: Option<i64>,
}

impl GroundStates {
    /// Bit strings of the ground states restricted to `nodes`, in the given order.
    pub fn labels(&self, nodes: &[usize]) -> BTreeSet<String> {
        self.states
            .iter()
            .map(|s| {
                let bip = s.to_bipolar();
                nodes
                    .iter()
                    .map(|&i| if bip.get(i) > 0 { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }

    /// Labels over every node, in node order.
    pub fn full_labels(&self) -> BTreeSet<String> {
        self.states.iter().map(|s| s.bit_string()).collect()
    }
}

pub fn ground_states(model: &IsingModel) -> Result<GroundStates> {
    let mut best = i64::MAX;
    let mut second = i64::MAX;
    let mut indices = Vec::new();
    let free = model.enumerate_free(|index, _, energy| match energy.cmp(&best) {
        std::cmp::Ordering::Less => {
            second = best;
            best = energy;
            indices.clear();
            indices.push(index);
        }
        std::cmp::Ordering::Equal => indices.push(index),
        std::cmp::Ordering::Greater => second = second.min(energy),
    })?;
    indices.sort_unstable();
    let states = indices
        .into_iter()
        .map(|index| {
            let mut values = SpinState::new(model).into_values();
            for (b, &node) in free.iter().enumerate() {
                let spin = if index >> b & 1 == 1 { 1 } else { -1 };
                values[node] = model.representation().from_bipolar_value(spin);
            }
            SpinState::from_values(model, values).expect("enumerated states are valid")
        })
        .collect();
    Ok(GroundStates {
        energy: best,
        states,
        gap: (second != i64::MAX).then(|| second - best),
    })
}

/// Complements one pin: flips the sign of its couplings and bias, so that
/// `E'(.., m_pin, ..) = E(.., -m_pin, ..)`. A clamp on the pin is complemented too.
pub fn negate_pin(model: &IsingModel, pin: usize) -> Result<IsingModel> {
    if model.representation() != Representation::Bipolar {
        return Err(Error::RepresentationMismatch {
            expected: Representation::Bipolar,
            got: model.representation(),
        });
    }
    if pin >= model.len() {
        return Err(Error::NodeOutOfRange {
            node: pin,
            n: model.len(),
        });
    }
    let edges = model
        .edges()
        .iter()
        .map(|&e| {
            if e.i == pin || e.j == pin {
                Edge { weight: -e.weight, ..e }
            } else {
                e
            }
        })
        .collect();
    let mut h = model.h().to_vec();
    h[pin] = -h[pin];
    let mut clamps = model.clamps().clone();
    if let Some(v) = clamps.get_mut(&pin) {
        *v = -*v;
    }
    model.rebuild(model.len(), edges, h, clamps, model.offset())
}
