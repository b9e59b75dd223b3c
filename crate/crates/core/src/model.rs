//! The Ising substrate shared by every other module.
//!
//! Couplings and biases are signed integers on a fixed-point grid: the real
//! value of a stored weight `w` is `w / 2^frac_bits`. Every gate in the
//! library uses small integers, so `frac_bits` is zero for compiled circuits
//! and energies are exact integers.
//!
//! Energies follow the usual sign convention
//! `E = -(sum_{i<j} J_ij m_i m_j + sum_i h_i m_i) + offset` over bipolar spins.
//! Binary models use `{0, 1}` values with `J_b = 2 J` and `h_b = h - J 1`;
//! their energy is expressed in the same units as the bipolar form
//! (`E = -2 (sum J_b x_i x_j + sum h_b x_i) + offset`), so a bipolar model and
//! its binary conversion assign identical energies to corresponding states.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of free nodes the exhaustive oracles will enumerate.
pub const MAX_ENUMERATION_NODES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Bipolar,
    Binary,
}

impl Representation {
    pub fn is_valid(self, value: i8) -> bool {
        match self {
            Representation::Bipolar => value == 1 || value == -1,
            Representation::Binary => value == 0 || value == 1,
        }
    }

    /// Maps a value of this representation onto `{-1, +1}`.
    pub fn to_bipolar_value(self, value: i8) -> i8 {
        match self {
            Representation::Bipolar => value,
            Representation::Binary => 2 * value - 1,
        }
    }

    pub fn from_bipolar_value(self, spin: i8) -> i8 {
        match self {
            Representation::Bipolar => spin,
            Representation::Binary => (spin + 1) / 2,
        }
    }

    /// The "off" value (`-1` or `0`).
    pub fn low(self) -> i8 {
        self.from_bipolar_value(-1)
    }
}

/// Inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Beta(value))
        } else {
            Err(Error::InvalidBeta(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Beta::new(value)
    }
}

impl From<Beta> for f64 {
    fn from(beta: Beta) -> f64 {
        beta.0
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One undirected coupling, stored once with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: i32,
}

/// Accumulates couplings and biases before freezing them into an [`IsingModel`].
///
/// Repeated couplings between the same pair are summed, which is exactly what
/// fusing two gate pins onto one node requires.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    n: usize,
    representation: Representation,
    frac_bits: u32,
    couplings: BTreeMap<(usize, usize), i64>,
    h: Vec<i64>,
    clamps: BTreeMap<usize, i8>,
    offset: i64,
}

impl ModelBuilder {
    pub fn new(n: usize) -> Self {
        Self::with_representation(n, Representation::Bipolar)
    }

    pub fn with_representation(n: usize, representation: Representation) -> Self {
        ModelBuilder {
            n,
            representation,
            frac_bits: 0,
            couplings: BTreeMap::new(),
            h: vec![0; n],
            clamps: BTreeMap::new(),
            offset: 0,
        }
    }

    pub fn frac_bits(mut self, bits: u32) -> Self {
        self.frac_bits = bits;
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Appends a fresh node and returns its index.
    pub fn add_node(&mut self) -> usize {
        self.h.push(0);
        self.n += 1;
        self.n - 1
    }

    fn check(&self, node: usize) -> Result<()> {
        if node < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node, n: self.n })
        }
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, weight: i64) -> Result<&mut Self> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Err(Error::SelfEdge(i));
        }
        let key = (i.min(j), i.max(j));
        *self.couplings.entry(key).or_insert(0) += weight;
        Ok(self)
    }

    pub fn add_bias(&mut self, i: usize, weight: i64) -> Result<&mut Self> {
        self.check(i)?;
        self.h[i] += weight;
        Ok(self)
    }

    pub fn clamp(&mut self, i: usize, value: i8) -> Result<&mut Self> {
        self.check(i)?;
        if !self.representation.is_valid(value) {
            return Err(Error::InvalidSpin { node: i, value });
        }
        self.clamps.insert(i, value);
        Ok(self)
    }

    pub fn add_offset(&mut self, offset: i64) -> &mut Self {
        self.offset += offset;
        self
    }

    pub fn build(self) -> Result<IsingModel> {
        let edges = self
            .couplings
            .into_iter()
            .filter(|&(_, w)| w != 0)
            .map(|((i, j), w)| {
                Ok(Edge {
                    i,
                    j,
                    weight: i32::try_from(w).map_err(|_| Error::WeightOverflow(w))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let h = self
            .h
            .into_iter()
            .map(|w| i32::try_from(w).map_err(|_| Error::WeightOverflow(w)))
            .collect::<Result<Vec<_>>>()?;
        IsingModel::assemble(
            self.n,
            self.representation,
            self.frac_bits,
            edges,
            h,
            self.clamps,
            self.offset,
        )
    }
}

/// Sparse symmetric Ising model with clamps. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    n: usize,
    representation: Representation,
    frac_bits: u32,
    edges: Vec<Edge>,
    h: Vec<i32>,
    clamps: BTreeMap<usize, i8>,
    offset: i64,
    row_start: Vec<usize>,
    adjacency: Vec<(u32, i32)>,
}

impl IsingModel {
    fn assemble(
        n: usize,
        representation: Representation,
        frac_bits: u32,
        mut edges: Vec<Edge>,
        h: Vec<i32>,
        clamps: BTreeMap<usize, i8>,
        offset: i64,
    ) -> Result<Self> {
        if h.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                got: h.len(),
            });
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidArgument("too many nodes".into()));
        }
        for e in &mut edges {
            if e.i == e.j {
                return Err(Error::SelfEdge(e.i));
            }
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
            if e.j >= n {
                return Err(Error::NodeOutOfRange { node: e.j, n });
            }
        }
        edges.sort();
        for pair in edges.windows(2) {
            if pair[0].i == pair[1].i && pair[0].j == pair[1].j {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge ({}, {})",
                    pair[0].i, pair[0].j
                )));
            }
        }
        edges.retain(|e| e.weight != 0);
        for (&node, &value) in &clamps {
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
            if !representation.is_valid(value) {
                return Err(Error::InvalidSpin { node, value });
            }
        }

        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for d in &degree {
            row_start.push(row_start.last().unwrap() + d);
        }
        let mut fill = row_start[..n].to_vec();
        let mut adjacency = vec![(0u32, 0i32); row_start[n]];
        for e in &edges {
            adjacency[fill[e.i]] = (e.j as u32, e.weight);
            fill[e.i] += 1;
            adjacency[fill[e.j]] = (e.i as u32, e.weight);
            fill[e.j] += 1;
        }
        for i in 0..n {
            adjacency[row_start[i]..row_start[i + 1]].sort_unstable_by_key(|&(j, _)| j);
        }

        Ok(IsingModel {
            n,
            representation,
            frac_bits,
            edges,
            h,
            clamps,
            offset,
            row_start,
            adjacency,
        })
    }

    /// Builds a model from explicit parts; edges may be given in any order but
    /// each unordered pair at most once.
    pub fn from_parts(
        n: usize,
        representation: Representation,
        edges: impl IntoIterator<Item = (usize, usize, i32)>,
        h: Vec<i32>,
        clamps: BTreeMap<usize, i8>,
    ) -> Result<Self> {
        let edges = edges
            .into_iter()
            .map(|(i, j, weight)| Edge { i, j, weight })
            .collect();
        Self::assemble(n, representation, 0, edges, h, clamps, 0)
    }

    /// Same grid, representation and offset as `self`, with new weights.
    pub(crate) fn rebuild(
        &self,
        n: usize,
        edges: Vec<Edge>,
        h: Vec<i32>,
        clamps: BTreeMap<usize, i8>,
        offset: i64,
    ) -> Result<Self> {
        Self::assemble(n, self.representation, self.frac_bits, edges, h, clamps, offset)
    }

    pub fn zero(n: usize) -> Self {
        ModelBuilder::new(n).build().expect("empty model is valid")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Real value of one unit of stored weight.
    pub fn unit(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn h(&self) -> &[i32] {
        &self.h
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn clamps(&self) -> &BTreeMap<usize, i8> {
        &self.clamps
    }

    pub fn clamp_value(&self, node: usize) -> Option<i8> {
        self.clamps.get(&node).copied()
    }

    pub fn is_clamped(&self, node: usize) -> bool {
        self.clamps.contains_key(&node)
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.clamps.contains_key(i)).collect()
    }

    pub fn num_free(&self) -> usize {
        self.n - self.clamps.len()
    }

    /// Neighbors of `i` with coupling weights, sorted by neighbor index.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(u32, i32)] {
        &self.adjacency[self.row_start[i]..self.row_start[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_start[i + 1] - self.row_start[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Stored weight between `i` and `j` (zero when uncoupled).
    pub fn weight(&self, i: usize, j: usize) -> i32 {
        if i >= self.n || j >= self.n {
            return 0;
        }
        let row = self.neighbors(i);
        match row.binary_search_by_key(&(j as u32), |&(k, _)| k) {
            Ok(pos) => row[pos].1,
            Err(_) => 0,
        }
    }

    /// Positions of row `i` in the directed adjacency list.
    pub(crate) fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_start[i]..self.row_start[i + 1]
    }

    /// Number of directed off-diagonal entries, `2 |E|`.
    pub fn num_directed_entries(&self) -> usize {
        self.adjacency.len()
    }

    /// Sum of `|J_ij|` over the row of `i`.
    pub fn abs_row_sum(&self, i: usize) -> i64 {
        self.neighbors(i).iter().map(|&(_, w)| (w as i64).abs()).sum()
    }

    fn check_state(&self, state: &SpinState) -> Result<()> {
        if state.len() != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                got: state.len(),
            });
        }
        if state.representation() != self.representation {
            return Err(Error::RepresentationMismatch {
                expected: self.representation,
                got: state.representation(),
            });
        }
        Ok(())
    }

    /// `sum_j J_ij v_j + h_i` in stored units, for raw values of the model's
    /// own representation.
    #[inline]
    pub fn field_raw(&self, values: &[i8], i: usize) -> i64 {
        let mut acc = self.h[i] as i64;
        for &(j, w) in self.neighbors(i) {
            acc += w as i64 * values[j as usize] as i64;
        }
        acc
    }

    /// Energy in stored units (exact).
    pub fn energy_raw_values(&self, values: &[i8]) -> i64 {
        let mut pair = 0i64;
        for e in &self.edges {
            pair += e.weight as i64 * values[e.i] as i64 * values[e.j] as i64;
        }
        let bias: i64 = self
            .h
            .iter()
            .zip(values)
            .map(|(&h, &v)| h as i64 * v as i64)
            .sum();
        match self.representation {
            Representation::Bipolar => -(pair + bias) + self.offset,
            Representation::Binary => -2 * (pair + bias) + self.offset,
        }
    }

    pub fn energy_raw(&self, state: &SpinState) -> Result<i64> {
        self.check_state(state)?;
        Ok(self.energy_raw_values(state.values()))
    }

    pub fn energy(&self, state: &SpinState) -> Result<f64> {
        Ok(self.energy_raw(state)? as f64 * self.unit())
    }

    /// Input to node `i`: `sum_j J_ij m_j + h_i`, equal to `-dE/dm_i` for
    /// bipolar states.
    pub fn local_field(&self, state: &SpinState, i: usize) -> Result<f64> {
        self.check_state(state)?;
        if i >= self.n {
            return Err(Error::NodeOutOfRange { node: i, n: self.n });
        }
        Ok(self.field_raw(state.values(), i) as f64 * self.unit())
    }

    /// Returns a copy with node `i` clamped to `value`.
    pub fn with_clamp(&self, i: usize, value: i8) -> Result<IsingModel> {
        if i >= self.n {
            return Err(Error::NodeOutOfRange { node: i, n: self.n });
        }
        if !self.representation.is_valid(value) {
            return Err(Error::InvalidSpin { node: i, value });
        }
        let mut out = self.clone();
        out.clamps.insert(i, value);
        Ok(out)
    }

    pub fn with_clamps(&self, clamps: &BTreeMap<usize, i8>) -> Result<IsingModel> {
        let mut out = self.clone();
        for (&i, &v) in clamps {
            out = out.with_clamp(i, v)?;
        }
        Ok(out)
    }

    pub fn without_clamps(&self) -> IsingModel {
        let mut out = self.clone();
        out.clamps.clear();
        out
    }

    /// Default magnitude for bias clamping: twice the largest possible
    /// `|sum_j J_ij m_j| + |h_i|` over all nodes.
    pub fn default_clamp_bias(&self) -> i64 {
        (0..self.n)
            .map(|i| self.abs_row_sum(i) + (self.h[i] as i64).abs())
            .max()
            .unwrap_or(0)
            .max(1)
            * 2
    }

    /// Replaces frozen clamps with large finite biases on the clamped nodes.
    /// Only defined for bipolar models.
    pub fn with_bias_clamps(&self, magnitude: Option<i64>) -> Result<IsingModel> {
        self.require(Representation::Bipolar)?;
        let magnitude = magnitude.unwrap_or_else(|| self.default_clamp_bias());
        let mut h: Vec<i64> = self.h.iter().map(|&x| x as i64).collect();
        for (&i, &v) in &self.clamps {
            h[i] += magnitude * v as i64;
        }
        let h = h
            .into_iter()
            .map(|w| i32::try_from(w).map_err(|_| Error::WeightOverflow(w)))
            .collect::<Result<Vec<_>>>()?;
        IsingModel::assemble(
            self.n,
            self.representation,
            self.frac_bits,
            self.edges.clone(),
            h,
            BTreeMap::new(),
            self.offset,
        )
    }

    fn require(&self, representation: Representation) -> Result<()> {
        if self.representation == representation {
            Ok(())
        } else {
            Err(Error::RepresentationMismatch {
                expected: representation,
                got: self.representation,
            })
        }
    }

    /// Bipolar to binary: `J_b = 2 J`, `h_b = h - J 1`, with the offset
    /// adjusted so energies of corresponding states are identical.
    pub fn to_binary(&self) -> Result<IsingModel> {
        self.require(Representation::Bipolar)?;
        let mut row_sum = vec![0i64; self.n];
        let mut pair_total = 0i64;
        for e in &self.edges {
            row_sum[e.i] += e.weight as i64;
            row_sum[e.j] += e.weight as i64;
            pair_total += e.weight as i64;
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let w = 2 * e.weight as i64;
                Ok(Edge {
                    weight: i32::try_from(w).map_err(|_| Error::WeightOverflow(w))?,
                    ..*e
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let h = self
            .h
            .iter()
            .zip(&row_sum)
            .map(|(&h, &r)| {
                let w = h as i64 - r;
                i32::try_from(w).map_err(|_| Error::WeightOverflow(w))
            })
            .collect::<Result<Vec<_>>>()?;
        let h_total: i64 = self.h.iter().map(|&x| x as i64).sum();
        let clamps = self
            .clamps
            .iter()
            .map(|(&i, &v)| (i, Representation::Binary.from_bipolar_value(v)))
            .collect();
        IsingModel::assemble(
            self.n,
            Representation::Binary,
            self.frac_bits,
            edges,
            h,
            clamps,
            self.offset - pair_total + h_total,
        )
    }

    /// Binary to bipolar, the exact inverse of [`IsingModel::to_binary`].
    /// Odd binary couplings move the model onto a grid one bit finer.
    pub fn to_bipolar(&self) -> Result<IsingModel> {
        self.require(Representation::Binary)?;
        let exact_halves = self.edges.iter().all(|e| e.weight % 2 == 0);
        let (frac_bits, scale) = if exact_halves {
            (self.frac_bits, 1i64)
        } else {
            (self.frac_bits + 1, 2i64)
        };
        // In the output grid, J = J_b * scale / 2.
        let half = |w: i32| (w as i64 * scale) / 2;
        let mut row_sum = vec![0i64; self.n];
        let mut pair_total = 0i64;
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let w = half(e.weight);
            row_sum[e.i] += w;
            row_sum[e.j] += w;
            pair_total += w;
            edges.push(Edge {
                weight: i32::try_from(w).map_err(|_| Error::WeightOverflow(w))?,
                ..*e
            });
        }
        let mut h_total = 0i64;
        let mut h = Vec::with_capacity(self.n);
        for (i, &hb) in self.h.iter().enumerate() {
            let w = hb as i64 * scale + row_sum[i];
            h_total += w;
            h.push(i32::try_from(w).map_err(|_| Error::WeightOverflow(w))?);
        }
        let clamps = self
            .clamps
            .iter()
            .map(|(&i, &v)| (i, Representation::Binary.to_bipolar_value(v)))
            .collect();
        IsingModel::assemble(
            self.n,
            Representation::Bipolar,
            frac_bits,
            edges,
            h,
            clamps,
            self.offset * scale + pair_total - h_total,
        )
    }

    /// The bipolar form of this model (a clone when already bipolar).
    pub fn bipolar(&self) -> Result<IsingModel> {
        match self.representation {
            Representation::Bipolar => Ok(self.clone()),
            Representation::Binary => self.to_bipolar(),
        }
    }

    /// Visits every assignment of the free nodes in Gray-code order with its
    /// exact energy. Values passed to `visit` are bipolar; bit `b` of the
    /// index is set when `free[b]` is `+1`.
    pub(crate) fn enumerate_free<F>(&self, mut visit: F) -> Result<Vec<usize>>
    where
        F: FnMut(usize, &[i8], i64),
    {
        let model = self.bipolar()?;
        let free = model.free_nodes();
        if free.len() > MAX_ENUMERATION_NODES {
            return Err(Error::TooManyFreeNodes {
                free: free.len(),
                limit: MAX_ENUMERATION_NODES,
            });
        }
        let mut values = vec![-1i8; model.n];
        for (&i, &v) in &model.clamps {
            values[i] = v;
        }
        let mut energy = model.energy_raw_values(&values);
        // Scale factor between the bipolar grid and this model's grid.
        let shift = model.frac_bits - self.frac_bits;
        let mut index = 0usize;
        visit(index, &values, energy >> shift);
        for g in 1usize..(1usize << free.len()) {
            let bit = g.trailing_zeros() as usize;
            let node = free[bit];
            let old = values[node];
            energy += 2 * old as i64 * model.field_raw(&values, node);
            values[node] = -old;
            index ^= 1 << bit;
            visit(index, &values, energy >> shift);
        }
        Ok(free)
    }
}

/// Probabilities over all assignments of a model's free nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    free: Vec<usize>,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(free: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << free.len() {
            return Err(Error::SupportMismatch(1usize << free.len(), probs.len()));
        }
        Ok(Distribution { free, probs })
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the free-node assignment held in `values` (any representation;
    /// positive values count as set bits).
    pub fn index_of(&self, values: &[i8]) -> usize {
        state_index(&self.free, values)
    }

    pub fn prob_of(&self, values: &[i8]) -> f64 {
        self.probs[self.index_of(values)]
    }

    /// Bit string of a state index over the free nodes, first free node first.
    pub fn label(&self, index: usize) -> String {
        (0..self.free.len())
            .map(|b| if index >> b & 1 == 1 { '1' } else { '0' })
            .collect()
    }
}

/// Index of the assignment of `free` nodes in `values` (bit `b` set when
/// `values[free[b]] > 0`).
pub fn state_index(free: &[usize], values: &[i8]) -> usize {
    free.iter()
        .enumerate()
        .filter(|&(_, &node)| values[node] > 0)
        .fold(0, |acc, (b, _)| acc | 1 << b)
}

/// Exact Boltzmann distribution `p ∝ exp(-beta E)` over the free nodes.
pub fn boltzmann_exact(model: &IsingModel, beta: Beta) -> Result<Distribution> {
    let unit = model.unit();
    let mut log_weights = Vec::new();
    let free = model.enumerate_free(|index, _, energy| {
        if log_weights.is_empty() {
            log_weights = vec![0.0; 1usize << model.num_free()];
        }
        log_weights[index] = -beta.value() * energy as f64 * unit;
    })?;
    Distribution::new(free, normalize_log_weights(log_weights))
}

pub(crate) fn normalize_log_weights(mut log_weights: Vec<f64>) -> Vec<f64> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in &mut log_weights {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in &mut log_weights {
        *w /= total;
    }
    log_weights
}

/// The p-bit activation: `sgn(tanh(beta I) - u)` for `u` uniform on `(-1, 1)`.
#[inline]
pub fn pbit_update(field: f64, beta: Beta, u: f64) -> i8 {
    if (beta.value() * field).tanh() > u {
        1
    } else {
        -1
    }
}

/// Spin values of one configuration, tagged with their representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinState {
    values: Vec<i8>,
    representation: Representation,
}

impl SpinState {
    /// All free nodes low, clamped nodes at their clamp values.
    pub fn new(model: &IsingModel) -> Self {
        let low = model.representation.low();
        let mut values = vec![low; model.n];
        for (&i, &v) in &model.clamps {
            values[i] = v;
        }
        SpinState {
            values,
            representation: model.representation,
        }
    }

    pub fn from_values(model: &IsingModel, values: Vec<i8>) -> Result<Self> {
        if values.len() != model.n {
            return Err(Error::SizeMismatch {
                expected: model.n,
                got: values.len(),
            });
        }
        for (node, &value) in values.iter().enumerate() {
            if !model.representation.is_valid(value) {
                return Err(Error::InvalidSpin { node, value });
            }
        }
        for (&node, &expected) in &model.clamps {
            if values[node] != expected {
                return Err(Error::ClampViolation {
                    node,
                    expected,
                    got: values[node],
                });
            }
        }
        Ok(SpinState {
            values,
            representation: model.representation,
        })
    }

    pub fn random<R: Rng + ?Sized>(model: &IsingModel, rng: &mut R) -> Self {
        let mut state = SpinState::new(model);
        for i in 0..model.n {
            if !model.is_clamped(i) {
                let spin = if rng.gen::<bool>() { 1 } else { -1 };
                state.values[i] = model.representation.from_bipolar_value(spin);
            }
        }
        state
    }

    /// State whose free nodes follow the bits of `index` (see [`state_index`]).
    pub fn from_index(model: &IsingModel, index: usize) -> Self {
        let mut state = SpinState::new(model);
        for (b, node) in model.free_nodes().into_iter().enumerate() {
            let spin = if index >> b & 1 == 1 { 1 } else { -1 };
            state.values[node] = model.representation.from_bipolar_value(spin);
        }
        state
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn into_values(self) -> Vec<i8> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn get(&self, i: usize) -> i8 {
        self.values[i]
    }

    pub fn to_bipolar(&self) -> SpinState {
        SpinState {
            values: self
                .values
                .iter()
                .map(|&v| self.representation.to_bipolar_value(v))
                .collect(),
            representation: Representation::Bipolar,
        }
    }

    pub fn to_binary(&self) -> SpinState {
        SpinState {
            values: self
                .to_bipolar()
                .values
                .iter()
                .map(|&v| Representation::Binary.from_bipolar_value(v))
                .collect(),
            representation: Representation::Binary,
        }
    }

    /// Bits packed little-endian into hex, node 0 in the lowest bit.
    pub fn to_hex(&self) -> String {
        let bits: Vec<bool> = self
            .values
            .iter()
            .map(|&v| self.representation.to_bipolar_value(v) > 0)
            .collect();
        let mut out = String::with_capacity(bits.len().div_ceil(4));
        for chunk in bits.chunks(4).rev() {
            let nibble = chunk
                .iter()
                .enumerate()
                .fold(0u32, |acc, (b, &set)| acc | (set as u32) << b);
            out.push(char::from_digit(nibble, 16).unwrap());
        }
        out
    }

    /// Bit string in node order, e.g. `"101"` for `[+1, -1, +1]`.
    pub fn bit_string(&self) -> String {
        self.values
            .iter()
            .map(|&v| {
                if self.representation.to_bipolar_value(v) > 0 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }
}

/// JSON layout of a model:
/// `{n, representation, edges: [[i, j, w], ...], h: [...], clamps: {index: value}}`
/// with edges sorted by `(i, j)`. `frac_bits` and `offset` are written only
/// when nonzero.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelJson {
    pub n: usize,
    pub representation: Representation,
    pub edges: Vec<(usize, usize, i32)>,
    pub h: Vec<i32>,
    #[serde(default)]
    pub clamps: BTreeMap<usize, i8>,
    #[serde(default, skip_serializing_if = "is_zero_u32")]
    pub frac_bits: u32,
    #[serde(default, skip_serializing_if = "is_zero_i64")]
    pub offset: i64,
}

fn is_zero_u32(x: &u32) -> bool {
    *x == 0
}

fn is_zero_i64(x: &i64) -> bool {
    *x == 0
}

impl From<&IsingModel> for ModelJson {
    fn from(model: &IsingModel) -> Self {
        ModelJson {
            n: model.n,
            representation: model.representation,
            edges: model.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            h: model.h.clone(),
            clamps: model.clamps.clone(),
            frac_bits: model.frac_bits,
            offset: model.offset,
        }
    }
}

impl TryFrom<ModelJson> for IsingModel {
    type Error = Error;

    fn try_from(json: ModelJson) -> Result<Self> {
        let edges = json
            .edges
            .into_iter()
            .map(|(i, j, weight)| Edge { i, j, weight })
            .collect();
        IsingModel::assemble(
            json.n,
            json.representation,
            json.frac_bits,
            edges,
            json.h,
            json.clamps,
            json.offset,
        )
    }
}

impl IsingModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: ModelJson = serde_json::from_str(text)?;
        IsingModel::try_from(json)
    }
}
