//! Atomic structures and their graphs: periodic neighbor search, radial and
//! angular edge features, per-node extras, and batching.

pub mod elements;
mod features;
mod neighbor;
mod rbf;
mod structure;

pub use features::{charge_feature, embed_species, long_range_feature, SpeciesIndex};
pub use neighbor::{build_neighbor_list, NeighborList};
pub use rbf::bessel_rbf;
pub use structure::{det3, inverse3, perpendicular_heights, AtomicStructure, Mat3};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irreps::spherical_harmonics;
use crate::tensor::Tensor;

/// How structures become graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSettings {
    pub r_cut: f64,
    pub n_rbf: usize,
    /// Order of the edge spherical harmonics.
    pub sh_l_max: u32,
    #[serde(default)]
    pub long_range: bool,
    #[serde(default)]
    pub charge: bool,
}

impl GraphSettings {
    pub fn num_node_extras(&self) -> usize {
        self.long_range as usize + self.charge as usize
    }
}

/// A graph, or a batch of disjoint graphs, ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomGraph {
    pub species: Vec<u32>,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    pub edge_shift: Vec<[i32; 3]>,
    pub edge_vec: Vec<[f64; 3]>,
    pub edge_len: Vec<f64>,
    /// `[E, n_rbf]`
    pub edge_rbf: Tensor,
    /// `[E, (sh_l_max+1)²]`
    pub edge_sh: Tensor,
    /// `[N, n_extra]`: mean distance and/or total charge columns.
    pub node_extra: Tensor,
    pub graph_index: Vec<usize>,
    pub atoms_per_graph: Vec<usize>,
}

impl AtomGraph {
    pub fn build(s: &AtomicStructure, settings: &GraphSettings) -> Result<Self> {
        let nl = build_neighbor_list(s, settings.r_cut)?;
        let edge_rbf = bessel_rbf(&nl.len, settings.r_cut, settings.n_rbf)?;
        let dirs: Vec<[f64; 3]> = nl
            .vec
            .iter()
            .zip(&nl.len)
            .map(|(v, &d)| [v[0] / d, v[1] / d, v[2] / d])
            .collect();
        let edge_sh = spherical_harmonics(settings.sh_l_max, &dirs)?;
        let n = s.len();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        if settings.long_range {
            cols.push(long_range_feature(s)?);
        }
        if settings.charge {
            cols.push(charge_feature(s));
        }
        let mut extra = vec![0.0; n * cols.len()];
        for (c, col) in cols.iter().enumerate() {
            for i in 0..n {
                extra[i * cols.len() + c] = col[i];
            }
        }
        Ok(AtomGraph {
            species: s.species.clone(),
            edge_src: nl.src,
            edge_dst: nl.dst,
            edge_shift: nl.shift,
            edge_vec: nl.vec,
            edge_len: nl.len,
            edge_rbf,
            edge_sh,
            node_extra: Tensor::new(vec![n, cols.len()], extra)?,
            graph_index: vec![0; n],
            atoms_per_graph: vec![n],
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.species.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_src.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.atoms_per_graph.len()
    }

    /// Concatenates graphs into one disjoint batch.
    pub fn batch(graphs: &[&AtomGraph]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::Contract("cannot batch zero graphs".into()))?;
        let (n_rbf, n_sh, n_extra) = (first.edge_rbf.cols(), first.edge_sh.cols(), first.node_extra.cols());
        let mut out = AtomGraph {
            species: Vec::new(),
            edge_src: Vec::new(),
            edge_dst: Vec::new(),
            edge_shift: Vec::new(),
            edge_vec: Vec::new(),
            edge_len: Vec::new(),
            edge_rbf: Tensor::zeros(&[0, n_rbf]),
            edge_sh: Tensor::zeros(&[0, n_sh]),
            node_extra: Tensor::zeros(&[0, n_extra]),
            graph_index: Vec::new(),
            atoms_per_graph: Vec::new(),
        };
        let (mut rbf, mut sh, mut extra) = (Vec::new(), Vec::new(), Vec::new());
        for g in graphs {
            if g.edge_rbf.cols() != n_rbf || g.edge_sh.cols() != n_sh || g.node_extra.cols() != n_extra {
                return Err(Error::Contract("graphs in a batch were built with different settings".into()));
            }
            let (node0, graph0) = (out.species.len(), out.atoms_per_graph.len());
            out.species.extend_from_slice(&g.species);
            out.edge_src.extend(g.edge_src.iter().map(|&i| i + node0));
            out.edge_dst.extend(g.edge_dst.iter().map(|&i| i + node0));
            out.edge_shift.extend_from_slice(&g.edge_shift);
            out.edge_vec.extend_from_slice(&g.edge_vec);
            out.edge_len.extend_from_slice(&g.edge_len);
            out.graph_index.extend(g.graph_index.iter().map(|&b| b + graph0));
            out.atoms_per_graph.extend_from_slice(&g.atoms_per_graph);
            rbf.extend_from_slice(g.edge_rbf.data());
            sh.extend_from_slice(g.edge_sh.data());
            extra.extend_from_slice(g.node_extra.data());
        }
        let (e, n) = (out.edge_src.len(), out.species.len());
        out.edge_rbf = Tensor::new(vec![e, n_rbf], rbf)?;
        out.edge_sh = Tensor::new(vec![e, n_sh], sh)?;
        out.node_extra = Tensor::new(vec![n, n_extra], extra)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> GraphSettings {
        GraphSettings {
            r_cut: 3.0,
            n_rbf: 4,
            sh_l_max: 2,
            long_range: true,
            charge: true,
        }
    }

    #[test]
    fn build_and_batch() {
        let a = AtomicStructure::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![1, 1]).unwrap();
        let mut b = AtomicStructure::new(vec![[0.0; 3], [0.0, 1.5, 0.0], [0.0, 0.0, 9.0]], vec![6, 8, 1]).unwrap();
        b.total_charge = Some(-1);
        let ga = AtomGraph::build(&a, &settings()).unwrap();
        let gb = AtomGraph::build(&b, &settings()).unwrap();
        assert_eq!(ga.num_edges(), 2);
        assert_eq!(gb.num_edges(), 2);
        assert_eq!(gb.edge_sh.shape(), &[2, 9]);
        assert_eq!(gb.node_extra.row(0)[1], -1.0);
        let batch = AtomGraph::batch(&[&ga, &gb]).unwrap();
        assert_eq!(batch.num_nodes(), 5);
        assert_eq!(batch.graph_index, vec![0, 0, 1, 1, 1]);
        assert_eq!(batch.edge_dst, vec![0, 1, 2, 3]);
        assert_eq!(batch.edge_src, vec![1, 0, 3, 2]);
        for e in 0..batch.num_edges() {
            let v = batch.edge_vec[e];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((n - batch.edge_len[e]).abs() < 1e-12);
            assert!(batch.edge_len[e] > 0.0 && batch.edge_len[e] <= 3.0);
        }
    }

    #[test]
    fn isolated_atom_has_no_edges() {
        let s = AtomicStructure::new(vec![[0.0; 3]], vec![1]).unwrap();
        let g = AtomGraph::build(&s, &settings()).unwrap();
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.edge_rbf.shape(), &[0, 4]);
    }
}
