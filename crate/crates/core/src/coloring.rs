//! Graph coloring into independent update blocks, plus density metrics.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IsingModel;

/// Color of every unclamped node. Clamped nodes are never updated and carry
/// no color.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Option<u32>>", into = "Vec<Option<u32>>")]
pub struct Coloring {
    colors: Vec<Option<u32>>,
    blocks: Vec<Vec<usize>>,
}

impl From<Vec<Option<u32>>> for Coloring {
    fn from(colors: Vec<Option<u32>>) -> Self {
        Coloring::from_colors(colors)
    }
}

impl From<Coloring> for Vec<Option<u32>> {
    fn from(c: Coloring) -> Self {
        c.colors
    }
}

impl Coloring {
    pub fn from_colors(colors: Vec<Option<u32>>) -> Self {
        let num = colors.iter().flatten().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut blocks = vec![Vec::new(); num];
        for (node, c) in colors.iter().enumerate() {
            if let Some(c) = c {
                blocks[*c as usize].push(node);
            }
        }
        Coloring { colors, blocks }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color(&self, node: usize) -> Option<u32> {
        self.colors[node]
    }

    pub fn colors(&self) -> &[Option<u32>] {
        &self.colors
    }

    /// Nodes of each color, ascending within a block.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_colors(&self) -> usize {
        self.blocks.len()
    }

    /// Errors on the first monochromatic edge, a colored clamped node, or an
    /// uncolored free node.
    pub fn check(&self, model: &IsingModel) -> Result<()> {
        if self.colors.len() != model.len() {
            return Err(Error::SizeMismatch {
                expected: model.len(),
                got: self.colors.len(),
            });
        }
        for (i, c) in self.colors.iter().enumerate() {
            if c.is_some() == model.is_clamped(i) {
                return Err(Error::InvalidArgument(format!(
                    "node {i}: clamped nodes must be uncolored and free nodes colored"
                )));
            }
        }
        for e in model.edges() {
            if let (Some(a), Some(b)) = (self.colors[e.i], self.colors[e.j]) {
                if a == b {
                    return Err(Error::ImproperColoring(e.i, e.j));
                }
            }
        }
        Ok(())
    }

    /// Writes `node,color` rows for colored nodes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "color"])?;
        for (node, c) in self.colors.iter().enumerate() {
            if let Some(c) = c {
                w.serialize((node, c))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, n: usize) -> Result<Self> {
        let mut colors = vec![None; n];
        for row in csv::Reader::from_reader(reader).deserialize() {
            let (node, color): (usize, u32) = row?;
            if node >= n {
                return Err(Error::NodeOutOfRange { node, n });
            }
            colors[node] = Some(color);
        }
        Ok(Coloring::from_colors(colors))
    }
}

/// True iff no edge joins two nodes of the same color.
pub fn validate(model: &IsingModel, coloring: &Coloring) -> bool {
    coloring.check(model).is_ok()
}

/// DSATUR greedy coloring of the free nodes. The next node is the one with
/// the most distinct neighbor colors, ties going to the higher degree among
/// free nodes and then the lower index; it takes the smallest color unused
/// by its neighbors.
pub fn dsatur(model: &IsingModel) -> Coloring {
    let n = model.len();
    let free: Vec<bool> = (0..n).map(|i| !model.is_clamped(i)).collect();
    let degree: Vec<usize> = (0..n)
        .map(|i| {
            model
                .neighbors(i)
                .iter()
                .filter(|&&(j, _)| free[j as usize])
                .count()
        })
        .collect();
    let mut seen: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
    let mut colors: Vec<Option<u32>> = vec![None; n];
    // Ordered so that the first element is the next node to color.
    let key = |sat: usize, i: usize| (std::cmp::Reverse(sat), std::cmp::Reverse(degree[i]), i);
    let mut queue: BTreeSet<_> = (0..n).filter(|&i| free[i]).map(|i| key(0, i)).collect();

    while let Some(top) = queue.pop_first() {
        let i = top.2;
        let mut c = 0u32;
        while seen[i].contains(&c) {
            c += 1;
        }
        colors[i] = Some(c);
        for &(j, _) in model.neighbors(i) {
            let j = j as usize;
            if free[j] && colors[j].is_none() && !seen[j].contains(&c) {
                queue.remove(&key(seen[j].len(), j));
                seen[j].insert(c);
                queue.insert(key(seen[j].len(), j));
            }
        }
    }
    Coloring::from_colors(colors)
}

/// Graph density `2|E| / (|V|^2 - |V|)`.
pub fn density(model: &IsingModel) -> Result<f64> {
    let n = model.len();
    if n < 2 {
        return Err(Error::InvalidArgument("density needs at least 2 nodes".into()));
    }
    Ok(2.0 * model.num_edges() as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Largest density of an `n`-node graph with maximum degree `k`.
pub fn density_max(k: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("density needs at least 2 nodes".into()));
    }
    Ok(k as f64 / (n as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelBuilder, Representation};
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn complete(n: usize) -> IsingModel {
        let mut b = ModelBuilder::new(n);
        for i in 0..n {
            for j in i + 1..n {
                b.add_coupling(i, j, 1).unwrap();
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn edgeless_graph_needs_one_color() {
        let c = dsatur(&IsingModel::zero(6));
        assert_eq!(c.num_colors(), 1);
        assert_eq!(c.blocks()[0], vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn complete_graph() {
        let model = complete(4);
        assert_eq!(density(&model).unwrap(), 1.0);
        assert_eq!(dsatur(&model).num_colors(), 4);
    }

    #[test]
    fn odd_cycle_needs_three() {
        let model = IsingModel::from_parts(
            5,
            Representation::Bipolar,
            (0..5).map(|i| (i, (i + 1) % 5, 1)),
            vec![0; 5],
            BTreeMap::new(),
        )
        .unwrap();
        let c = dsatur(&model);
        assert!(validate(&model, &c));
        assert_eq!(c.num_colors(), 3);
    }

    #[test]
    fn same_color_copy_pair_is_invalid() {
        let model = complete(2);
        let c = Coloring::from_colors(vec![Some(0), Some(0)]);
        assert!(!validate(&model, &c));
        assert!(matches!(c.check(&model), Err(Error::ImproperColoring(0, 1))));
    }

    #[test]
    fn clamped_nodes_are_uncolored() {
        let model = complete(3).with_clamp(1, -1).unwrap();
        let c = dsatur(&model);
        assert_eq!(c.color(1), None);
        assert_eq!(c.num_colors(), 2);
        assert!(validate(&model, &c));
    }

    #[test]
    fn random_colorings_agree_with_edge_scan() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2..12);
            let mut b = ModelBuilder::new(n);
            let mut adjacent = vec![vec![false; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(0.3) {
                        b.add_coupling(i, j, 1).unwrap();
                        adjacent[i][j] = true;
                    }
                }
            }
            let model = b.build().unwrap();
            let colors: Vec<Option<u32>> = (0..n).map(|_| Some(rng.gen_range(0..3))).collect();
            let mut proper = true;
            for i in 0..n {
                for j in i + 1..n {
                    if adjacent[i][j] && colors[i] == colors[j] {
                        proper = false;
                    }
                }
            }
            assert_eq!(validate(&model, &Coloring::from_colors(colors)), proper);
        }
    }

    #[test]
    fn density_max_bound() {
        assert_eq!(density_max(5, 11).unwrap(), 0.5);
        assert!(density_max(5, 1).is_err());
        assert!(density(&IsingModel::zero(1)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let model = complete(4).with_clamp(3, 1).unwrap();
        let c = dsatur(&model);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("node,color\n"));
        assert_eq!(Coloring::read_csv(&buf[..], 4).unwrap(), c);
    }
}
