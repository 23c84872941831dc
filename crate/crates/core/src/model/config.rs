use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvOperator {
    #[serde(rename = "graphconv")]
    GraphConv,
    #[serde(rename = "cgconv")]
    CGConv,
}

impl FromStr for ConvOperator {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graphconv" => Ok(ConvOperator::GraphConv),
            "cgconv" => Ok(ConvOperator::CGConv),
            _ => Err(ModelError::Config(format!("unknown conv operator `{s}`"))),
        }
    }
}

impl fmt::Display for ConvOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvOperator::GraphConv => "graphconv",
            ConvOperator::CGConv => "cgconv",
        })
    }
}

/// LESets architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv_operator: ConvOperator,
    pub n_conv_layers: usize,
    /// Depth of the output MLP; the last layer is linear.
    pub n_fc_layers: usize,
    pub hidden_dim: usize,
    pub use_att: bool,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_conv_layers < 1 {
            return Err(ModelError::Config("n_conv_layers must be >= 1".into()));
        }
        if self.n_fc_layers < 1 {
            return Err(ModelError::Config("n_fc_layers must be >= 1".into()));
        }
        if self.hidden_dim < 1 {
            return Err(ModelError::Config("hidden_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn preset(preset: Preset) -> Self {
        let (conv_operator, n_conv_layers, use_att) = match preset {
            Preset::Youngs => (ConvOperator::GraphConv, 2, true),
            Preset::Bulk => (ConvOperator::CGConv, 3, false),
            Preset::Rws => (ConvOperator::CGConv, 2, false),
        };
        ModelConfig {
            conv_operator,
            n_conv_layers,
            n_fc_layers: 3,
            hidden_dim: 32,
            use_att,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Tuned architectures for the three target properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Youngs,
    Bulk,
    Rws,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Youngs, Preset::Bulk, Preset::Rws];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Youngs => "youngs",
            Preset::Bulk => "bulk",
            Preset::Rws => "rws",
        }
    }
}

impl FromStr for Preset {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "youngs" => Ok(Preset::Youngs),
            "bulk" => Ok(Preset::Bulk),
            "rws" => Ok(Preset::Rws),
            _ => Err(ModelError::Config(format!(
                "unknown preset `{s}` (expected youngs, bulk or rws)"
            ))),
        }
    }
}

/// Deep Sets baseline over element feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepSetsConfig {
    pub phi_layers: usize,
    pub n_fc_layers: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for DeepSetsConfig {
    fn default() -> Self {
        DeepSetsConfig {
            phi_layers: 2,
            n_fc_layers: 3,
            hidden_dim: 32,
            seed: 0,
        }
    }
}

impl DeepSetsConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.phi_layers < 1 || self.n_fc_layers < 1 || self.hidden_dim < 1 {
            return Err(ModelError::Config(
                "deep sets layers and hidden_dim must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Architecture of any model this crate can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelSpec {
    #[serde(rename = "lesets")]
    LESets(ModelConfig),
    #[serde(rename = "deepsets")]
    DeepSets(DeepSetsConfig),
}

impl ModelSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            ModelSpec::LESets(c) => ModelSpec::LESets(c.with_seed(seed)),
            ModelSpec::DeepSets(c) => ModelSpec::DeepSets(c.with_seed(seed)),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::LESets(c) => c.seed,
            ModelSpec::DeepSets(c) => c.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let y = ModelConfig::preset(Preset::Youngs);
        assert_eq!(y.conv_operator, ConvOperator::GraphConv);
        assert_eq!((y.n_conv_layers, y.n_fc_layers, y.hidden_dim, y.use_att), (2, 3, 32, true));
        let b = ModelConfig::preset(Preset::Bulk);
        assert_eq!(b.conv_operator, ConvOperator::CGConv);
        assert_eq!((b.n_conv_layers, b.n_fc_layers, b.hidden_dim, b.use_att), (3, 3, 32, false));
        let r = ModelConfig::preset(Preset::Rws);
        assert_eq!(r.conv_operator, ConvOperator::CGConv);
        assert_eq!((r.n_conv_layers, r.n_fc_layers, r.hidden_dim, r.use_att), (2, 3, 32, false));
        assert_eq!("bulk".parse::<Preset>().unwrap(), Preset::Bulk);
        assert!("other".parse::<Preset>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::preset(Preset::Bulk);
        c.n_conv_layers = 0;
        assert!(c.validate().is_err());
        c = ModelConfig::preset(Preset::Bulk);
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn spec_json_is_tagged() {
        let spec = ModelSpec::LESets(ModelConfig::preset(Preset::Youngs));
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#""kind":"lesets""#));
        assert!(text.contains(r#""conv_operator":"graphconv""#));
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }
}
