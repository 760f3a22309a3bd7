//! The network: species embedding and lifting, energy and force
//! message-passing stacks, multi-perspective pooling, and the energy, force
//! and stress heads.

mod config;
mod heads;
mod layer;
mod mlp;
mod params;
mod pooling;

pub use config::ModelConfig;
pub use heads::ForceHead;
pub use layer::{channel_scalars, EdgeInputs, MessagePassingLayer};
pub use mlp::Mlp;
pub use params::{ParamEntry, ParamStore};
pub use pooling::{PoolLayout, Pooled};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AtomGraph, AtomicStructure, SpeciesIndex};
use crate::irreps::{EquivariantLinear, Irrep, IrrepsSpec, IrrepsTensor};
use crate::tensor::{Segments, Tape, Tensor, Var};

/// Target scaling: `E = energy_scale·MLP + Σ_i e0(z_i)`, `f = force_scale·head`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Reference energy per species, aligned with the sorted species list.
    pub e0: Vec<f64>,
    pub energy_scale: f64,
    pub force_scale: f64,
    pub stress_scale: f64,
}

impl Normalization {
    pub fn identity(n_species: usize) -> Self {
        Normalization {
            e0: vec![0.0; n_species],
            energy_scale: 1.0,
            force_scale: 1.0,
            stress_scale: 1.0,
        }
    }
}

/// Tape handles produced by one forward pass over a (batched) graph.
#[derive(Clone, Debug)]
pub struct Outputs {
    /// `[B, 1]` eV.
    pub energy: Var,
    /// `[N, 3]` eV/Å.
    pub forces: Option<Var>,
    /// `[B, 6]` Voigt.
    pub stress: Option<Var>,
    /// Node features after the energy stack.
    pub energy_features: IrrepsTensor,
    /// Node features after the force stack.
    pub force_features: IrrepsTensor,
    /// `[B, P]` rotation-invariant pooled features.
    pub pooled: Var,
}

/// Plain per-structure predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub energy: f64,
    pub forces: Option<Vec<[f64; 3]>>,
    pub stress: Option<[f64; 6]>,
}

#[derive(Clone, Debug)]
pub struct MlaNet {
    config: ModelConfig,
    species: SpeciesIndex,
    params: ParamStore,
    pub normalization: Normalization,
    embedding: usize,
    lift: EquivariantLinear,
    lift_slot: usize,
    trunk: Vec<MessagePassingLayer>,
    force_layers: Vec<MessagePassingLayer>,
    pool: PoolLayout,
    energy_mlp: Mlp,
    force_head: Option<ForceHead>,
    stress_mlp: Option<Mlp>,
    sh_spec: IrrepsSpec,
}

impl MlaNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let species = SpeciesIndex::new(&config.species)?;
        let hidden = config.hidden_irreps.clone();
        let sh_spec = IrrepsSpec::spherical_harmonics(config.l_max);
        let mut params = ParamStore::new();

        let embed_dim = config.embed_dim();
        let table = (0..species.len() * embed_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let embedding = params.add("embedding", Tensor::new(vec![species.len(), embed_dim], table)?);
        let node_in = IrrepsSpec::scalars(embed_dim + config.graph_settings().num_node_extras());
        let lift = EquivariantLinear::new_partial(&node_in, &hidden, false)?;
        let lift_slot = params.add("lift.weight", lift.init_weights(&mut rng));

        let mut make = |prefix: String, params: &mut ParamStore| {
            MessagePassingLayer::new(
                params,
                &prefix,
                &hidden,
                &sh_spec,
                config.n_rbf,
                config.n_heads,
                config.temperature,
                &config.tp_filter,
                &mut rng,
            )
        };
        let trunk = (0..config.n_layers_energy)
            .map(|k| make(format!("energy_layer{k}"), &mut params))
            .collect::<Result<Vec<_>>>()?;
        let force_layers = (0..config.n_layers_force)
            .map(|k| make(format!("force_layer{k}"), &mut params))
            .collect::<Result<Vec<_>>>()?;

        let pool = PoolLayout::new(&hidden);
        let p_dim = pool.invariant_dim();
        let width = hidden.num_scalars();
        let mut dims = vec![p_dim];
        dims.extend(std::iter::repeat_n(width, config.n_mlp_layers));
        dims.push(1);
        let energy_mlp = Mlp::new(&mut params, "energy_head", &dims, &mut rng);
        let force_head = if hidden.contains(Irrep::VECTOR) {
            let input = hidden.concat(&IrrepsSpec::scalars(p_dim));
            Some(ForceHead::new(&mut params, &input, &hidden, config.n_mlp_layers, &mut rng)?)
        } else {
            None
        };
        let stress_mlp = config.stress.then(|| {
            let mut d = dims.clone();
            *d.last_mut().expect("non-empty") = 6;
            Mlp::new(&mut params, "stress_head", &d, &mut rng)
        });
        Ok(MlaNet {
            normalization: Normalization::identity(species.len()),
            config,
            species,
            params,
            embedding,
            lift,
            lift_slot,
            trunk,
            force_layers,
            pool,
            energy_mlp,
            force_head,
            stress_mlp,
            sh_spec,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn species_index(&self) -> &SpeciesIndex {
        &self.species
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn has_force_head(&self) -> bool {
        self.force_head.is_some()
    }

    pub fn has_stress_head(&self) -> bool {
        self.stress_mlp.is_some()
    }

    pub fn trunk_layers(&self) -> &[MessagePassingLayer] {
        &self.trunk
    }

    pub fn graph(&self, s: &AtomicStructure) -> Result<AtomGraph> {
        self.species.rows_of(&s.species)?;
        AtomGraph::build(s, &self.config.graph_settings())
    }

    /// Species embedding (plus node extras) lifted into the hidden layout.
    pub fn lift(&self, tape: &mut Tape, g: &AtomGraph, p: &[Var]) -> Result<IrrepsTensor> {
        let emb = crate::graph::embed_species(tape, &g.species, &self.species, p[self.embedding])?;
        let input = if g.node_extra.cols() > 0 {
            let extra = tape.constant(g.node_extra.clone());
            let v = tape.concat(&[emb.var, extra], 1)?;
            IrrepsTensor::new(IrrepsSpec::scalars(tape.shape(v)[1]), v)
        } else {
            emb
        };
        self.lift.apply(tape, &input, p[self.lift_slot], None)
    }

    pub fn forward(&self, tape: &mut Tape, g: &AtomGraph, p: &[Var]) -> Result<Outputs> {
        if p.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} parameter handles for {} parameters",
                p.len(),
                self.params.len()
            )));
        }
        if g.edge_sh.cols() != self.sh_spec.dim() || g.edge_rbf.cols() != self.config.n_rbf {
            return Err(Error::Contract("graph was built with settings that differ from the model".into()));
        }
        let n = g.num_nodes();
        let rbf = IrrepsTensor::new(IrrepsSpec::scalars(self.config.n_rbf), tape.constant(g.edge_rbf.clone()));
        let sh = IrrepsTensor::new(self.sh_spec.clone(), tape.constant(g.edge_sh.clone()));
        let dst_segments = Segments::new(g.edge_dst.clone(), n)?;
        let edges = EdgeInputs {
            rbf: &rbf,
            sh: &sh,
            src: &g.edge_src,
            dst: &g.edge_dst,
            dst_segments: &dst_segments,
            num_nodes: n,
        };
        let mut x = self.lift(tape, g, p)?;
        for layer in &self.trunk {
            x = layer.forward(tape, &x, &edges, p)?;
        }
        let energy_features = x.clone();
        for layer in &self.force_layers {
            x = layer.forward(tape, &x, &edges, p)?;
        }
        let force_features = x;

        let graphs = Segments::new(g.graph_index.clone(), g.num_graphs())?;
        let pooled = self.pool.pool(tape, &energy_features, &graphs)?;
        let inv = self.pool.invariants(tape, &pooled)?;

        let nrm = &self.normalization;
        let raw = self.energy_mlp.apply(tape, inv, p)?;
        let scaled = tape.scale(raw, nrm.energy_scale);
        let mut shift = vec![0.0; g.num_graphs()];
        for (&z, &b) in g.species.iter().zip(&g.graph_index) {
            shift[b] += nrm.e0[self.species.row(z)?];
        }
        let shift = tape.constant(Tensor::new(vec![g.num_graphs(), 1], shift)?);
        let energy = tape.add(scaled, shift)?;

        let forces = match &self.force_head {
            Some(head) => {
                let bcast = tape.index_select(inv, &g.graph_index)?;
                let cat = tape.concat(&[force_features.var, bcast], 1)?;
                let input = IrrepsTensor::new(head.input_spec().clone(), cat);
                let f = head.apply(tape, &input, p)?;
                Some(tape.scale(f, nrm.force_scale))
            }
            None => None,
        };
        let stress = match &self.stress_mlp {
            Some(mlp) => {
                let s = mlp.apply(tape, inv, p)?;
                Some(tape.scale(s, nrm.stress_scale))
            }
            None => None,
        };
        Ok(Outputs {
            energy,
            forces,
            stress,
            energy_features,
            force_features,
            pooled: inv,
        })
    }

    /// Inference on an already built (possibly batched) graph.
    pub fn predict_graph(&self, g: &AtomGraph) -> Result<Vec<Prediction>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let out = self.forward(&mut tape, g, &p)?;
        let e = tape.value(out.energy).data();
        let f = out.forces.map(|v| tape.value(v).data());
        let s = out.stress.map(|v| tape.value(v).data());
        let mut preds = Vec::with_capacity(g.num_graphs());
        let mut start = 0;
        for (b, &count) in g.atoms_per_graph.iter().enumerate() {
            let forces = f.map(|f| (start..start + count).map(|i| [f[3 * i], f[3 * i + 1], f[3 * i + 2]]).collect());
            let stress = s.map(|s| std::array::from_fn(|k| s[6 * b + k]));
            preds.push(Prediction {
                energy: e[b],
                forces,
                stress,
            });
            start += count;
        }
        Ok(preds)
    }

    pub fn predict(&self, s: &AtomicStructure) -> Result<Prediction> {
        let g = self.graph(s)?;
        Ok(self.predict_graph(&g)?.remove(0))
    }

    pub fn predict_batch(&self, structures: &[AtomicStructure]) -> Result<Vec<Prediction>> {
        let graphs = structures.iter().map(|s| self.graph(s)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&AtomGraph> = graphs.iter().collect();
        self.predict_graph(&AtomGraph::batch(&refs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn water() -> AtomicStructure {
        AtomicStructure::new(vec![[0.0, 0.0, 0.1], [0.76, 0.0, -0.5], [-0.76, 0.1, -0.5]], vec![8, 1, 1]).unwrap()
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let mut cfg = ModelConfig::small(&[1, 8], "4x0e+2x1o+1x2e").unwrap();
        cfg.stress = true;
        let net = MlaNet::new(cfg.clone(), 3).unwrap();
        let a = net.predict(&water()).unwrap();
        let b = MlaNet::new(cfg, 3).unwrap().predict(&water()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.forces.as_ref().unwrap().len(), 3);
        assert!(a.energy.is_finite());
        assert!(a.stress.unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn batch_matches_individual() {
        let net = MlaNet::new(ModelConfig::small(&[1, 8], "4x0e+2x1o").unwrap(), 1).unwrap();
        let w = water();
        let mut h2 = AtomicStructure::new(vec![[0.0; 3], [0.74, 0.0, 0.0]], vec![1, 1]).unwrap();
        h2.positions[1][1] = 0.05;
        let batch = net.predict_batch(&[w.clone(), h2.clone()]).unwrap();
        let solo = [net.predict(&w).unwrap(), net.predict(&h2).unwrap()];
        for (b, s) in batch.iter().zip(&solo) {
            assert!((b.energy - s.energy).abs() < 1e-12);
            for (fb, fs) in b.forces.as_ref().unwrap().iter().zip(s.forces.as_ref().unwrap()) {
                for k in 0..3 {
                    assert!((fb[k] - fs[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn isolated_atom_is_finite() {
        let net = MlaNet::new(ModelConfig::small(&[18], "4x0e+2x1o").unwrap(), 2).unwrap();
        let p = net.predict(&AtomicStructure::new(vec![[0.0; 3]], vec![18]).unwrap()).unwrap();
        assert!(p.energy.is_finite());
        // no edges: every l>0 feature stays zero, so the force vanishes
        assert_eq!(p.forces.unwrap()[0], [0.0; 3]);
    }

    #[test]
    fn scalar_only_hidden_has_no_force_head() {
        let mut cfg = ModelConfig::small(&[1], "4x0e").unwrap();
        cfg.n_layers_force = 0;
        cfg.l_max = 1;
        let net = MlaNet::new(cfg, 0).unwrap();
        assert!(!net.has_force_head());
        let s = AtomicStructure::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![1, 1]).unwrap();
        assert!(net.predict(&s).unwrap().forces.is_none());
    }

    #[test]
    fn unknown_species_rejected() {
        let net = MlaNet::new(ModelConfig::small(&[1], "4x0e+2x1o").unwrap(), 0).unwrap();
        assert!(matches!(net.predict(&water()), Err(Error::Data(_))));
    }
}
