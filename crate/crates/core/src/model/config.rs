use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSettings;
use crate::irreps::{Irrep, IrrepsSpec, PathFilter, CG_L_MAX};

fn default_n_rbf() -> usize {
    8
}

fn default_heads() -> usize {
    1
}

/// Network architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Atomic numbers the model can embed; run configs may leave this empty
    /// to take the species present in the training data.
    #[serde(default)]
    pub species: Vec<u32>,
    pub hidden_irreps: IrrepsSpec,
    /// Order of the edge spherical harmonics.
    pub l_max: u32,
    pub n_layers_energy: usize,
    pub n_layers_force: usize,
    pub n_mlp_layers: usize,
    pub r_cut: f64,
    #[serde(default = "default_n_rbf")]
    pub n_rbf: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    /// Attention temperature; defaults to √(scalar attention channels per head).
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Width of the species embedding; defaults to the hidden 0e multiplicity.
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default)]
    pub long_range: bool,
    #[serde(default)]
    pub charge: bool,
    #[serde(default)]
    pub stress: bool,
    /// Path selection for the attention and gating tensor products.
    #[serde(default)]
    pub tp_filter: PathFilter,
}

impl ModelConfig {
    /// A compact configuration for tests and desk-scale runs.
    pub fn small(species: &[u32], hidden: &str) -> Result<Self> {
        Ok(ModelConfig {
            species: species.to_vec(),
            hidden_irreps: IrrepsSpec::parse(hidden)?,
            l_max: 2,
            n_layers_energy: 1,
            n_layers_force: 1,
            n_mlp_layers: 1,
            r_cut: 4.0,
            n_rbf: 8,
            n_heads: 1,
            temperature: None,
            embed_dim: None,
            long_range: false,
            charge: false,
            stress: false,
            tp_filter: PathFilter::default(),
        })
    }

    /// Published per-dataset architectures (cutoff, depths, hidden irreps).
    pub fn preset(name: &str, species: &[u32]) -> Result<Self> {
        let wide = "128x0e+64x1o+32x2e+32x3o";
        let (r_cut, l_e, l_f, l_mlp, hidden) = match name.to_ascii_lowercase().as_str() {
            "qm7" => (5.0, 1, 0, 1, "128x0e+64x1o"),
            "qm9" | "qm9s" => (6.0, 1, 0, 1, "128x0e+64x1o"),
            "md17" => (6.0, 1, 4, 1, wide),
            "sio2" | "gesbte" | "phosphorus" | "bilayer_graphene" => (5.0, 1, 0, 4, wide),
            "formate" | "water" => (5.0, 1, 2, 4, wide),
            "c10h2" => (4.23, 1, 2, 4, wide),
            "ag3" | "nacl" => (5.29, 1, 2, 4, wide),
            other => return Err(Error::Config(format!("unknown preset {other:?}"))),
        };
        let name = name.to_ascii_lowercase();
        Ok(ModelConfig {
            species: species.to_vec(),
            hidden_irreps: IrrepsSpec::parse(hidden)?,
            l_max: 3,
            n_layers_energy: l_e,
            n_layers_force: l_f,
            n_mlp_layers: l_mlp,
            r_cut,
            n_rbf: 8,
            n_heads: 1,
            temperature: None,
            embed_dim: None,
            long_range: name == "phosphorus",
            charge: matches!(name.as_str(), "c10h2" | "ag3" | "nacl"),
            stress: false,
            tp_filter: PathFilter::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hidden_irreps;
        if self.species.is_empty() || self.species.contains(&0) {
            return Err(Error::Config("species must be a non-empty list of atomic numbers".into()));
        }
        if !h.contains(Irrep::SCALAR) {
            return Err(Error::Config(format!("hidden irreps {h} need a 0e entry for the heads")));
        }
        if self.n_layers_force > 0 && !h.contains(Irrep::VECTOR) {
            return Err(Error::Config(format!(
                "hidden irreps {h} need a 1o entry when force layers are requested"
            )));
        }
        if h.l_max() > CG_L_MAX {
            return Err(Error::Config(format!("hidden order {} exceeds the supported {CG_L_MAX}", h.l_max())));
        }
        if self.l_max < h.l_max() {
            return Err(Error::Config(format!(
                "l_max {} is below the largest hidden order {}",
                self.l_max,
                h.l_max()
            )));
        }
        if self.n_heads == 0 || h.entries().iter().any(|e| e.mult % self.n_heads != 0) {
            return Err(Error::Config(format!(
                "{} heads do not divide every multiplicity of {h}",
                self.n_heads
            )));
        }
        if !(self.r_cut > 0.0 && self.r_cut.is_finite()) {
            return Err(Error::Config(format!("r_cut must be positive, got {}", self.r_cut)));
        }
        if self.n_rbf == 0 {
            return Err(Error::Config("n_rbf must be at least 1".into()));
        }
        if self.temperature.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.embed_dim == Some(0) {
            return Err(Error::Config("embed_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn graph_settings(&self) -> GraphSettings {
        GraphSettings {
            r_cut: self.r_cut,
            n_rbf: self.n_rbf,
            sh_l_max: self.l_max,
            long_range: self.long_range,
            charge: self.charge,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim.unwrap_or_else(|| self.hidden_irreps.num_scalars())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["qm7", "qm9", "md17", "sio2", "water", "c10h2", "ag3"] {
            ModelConfig::preset(name, &[1, 6]).unwrap().validate().unwrap();
        }
        assert!(ModelConfig::preset("nope", &[1]).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let mut c = ModelConfig::small(&[1], "4x1o").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.hidden_irreps = IrrepsSpec::parse("4x0e+2x2e").unwrap();
        assert!(c.validate().is_err());
        c.n_layers_force = 0;
        c.validate().unwrap();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 2;
        c.validate().unwrap();
        c.l_max = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"species = [1]
hidden_irreps = "4x0e+2x1o"
l_max = 1
n_layers_energy = 1
n_layers_force = 0
n_mlp_layers = 1
r_cut = 4.0
typo = 3
"#;
        assert!(toml::from_str::<ModelConfig>(text).is_err());
        let ok: ModelConfig = toml::from_str(&text.replace("typo = 3\n", "")).unwrap();
        assert_eq!(ok.n_rbf, 8);
        assert_eq!(ok.hidden_irreps.to_string(), "4x0e+2x1o");
    }
}
