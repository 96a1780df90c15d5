//! JSON weight files for trained residual models.

use std::path::Path;

use cncbf_core::dynamics::{CollisionGeometry, Profile};
use cncbf_core::net::{Layer, MlpParams, Normalization, ResidualModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "cncbf-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub parameter_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// Row-major, one inner array per output unit.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub robot_radius: f64,
    pub obstacle_radius: f64,
    pub r_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub grid_sha256: String,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub subsample: f64,
    /// Hash of the canonical JSON of the training configuration.
    pub config_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub profile: Profile,
    pub architecture: Architecture,
    pub normalization: Normalization,
    pub layers: Vec<LayerRecord>,
    pub geometry: GeometryRecord,
    pub provenance: Provenance,
}

impl WeightFile {
    pub fn from_model(model: &ResidualModel, provenance: Provenance) -> Self {
        let p = &model.params;
        Self {
            format: FORMAT.into(),
            version: VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            profile: model.profile,
            architecture: Architecture {
                layer_sizes: p.sizes(),
                hidden_activation: "sin".into(),
                output_activation: "softplus".into(),
                parameter_count: p.param_count(),
            },
            normalization: model.normalization,
            layers: p
                .layers
                .iter()
                .map(|l| LayerRecord { weights: l.weights.chunks(l.n_in).map(<[f64]>::to_vec).collect(), bias: l.bias.clone() })
                .collect(),
            geometry: GeometryRecord {
                robot_radius: model.geometry.robot_radius,
                obstacle_radius: model.geometry.obstacle_radius,
                r_min: model.geometry.r_min(),
            },
            provenance,
        }
    }

    /// Rebuilds the model, checking every self-description against the
    /// actual contents.
    pub fn to_model(&self, path: &Path) -> CliResult<ResidualModel> {
        let bad = |r: String| CliError::format(path, r);
        if self.format != FORMAT || self.version != VERSION {
            return Err(bad(format!("unsupported format {} v{}", self.format, self.version)));
        }
        if self.architecture.hidden_activation != "sin" || self.architecture.output_activation != "softplus" {
            return Err(bad("only sin hidden / softplus output networks are supported".into()));
        }
        let sizes = &self.architecture.layer_sizes;
        if sizes.len() != self.layers.len() + 1 {
            return Err(bad("layer count does not match architecture".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, rec) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (sizes[i], sizes[i + 1]);
            if rec.weights.len() != n_out || rec.weights.iter().any(|r| r.len() != n_in) || rec.bias.len() != n_out {
                return Err(bad(format!("layer {i} does not match {n_in}→{n_out}")));
            }
            layers.push(Layer { n_in, n_out, weights: rec.weights.concat(), bias: rec.bias.clone() });
        }
        let params = MlpParams { layers };
        params.validate().map_err(|e| bad(e.to_string()))?;
        if params.param_count() != self.architecture.parameter_count {
            return Err(bad("parameter count does not match architecture".into()));
        }
        if params.input_dim() != 4 {
            return Err(bad("network input must be the 4D relative state".into()));
        }
        let geometry = CollisionGeometry::new(self.geometry.robot_radius, self.geometry.obstacle_radius)
            .map_err(|e| bad(e.to_string()))?;
        if (geometry.r_min() - self.geometry.r_min).abs() > 1e-12 {
            return Err(bad("r_min does not equal the sum of the radii".into()));
        }
        let n = &self.normalization;
        if (0..4).any(|d| !(n.upper[d] > n.lower[d])) {
            return Err(bad("normalization box is empty".into()));
        }
        Ok(ResidualModel { profile: self.profile, params, normalization: self.normalization, geometry })
    }
}

pub fn to_json(w: &WeightFile) -> String {
    let mut s = serde_json::to_string_pretty(w).expect("weight file serializes");
    s.push('\n');
    s
}

pub fn write(path: &Path, w: &WeightFile) -> CliResult<()> {
    std::fs::write(path, to_json(w)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<WeightFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

/// Reads a weight file and refuses it if it was trained for a different
/// profile than `expected`.
pub fn load_model(path: &Path, expected: Option<Profile>) -> CliResult<(WeightFile, ResidualModel)> {
    let w = read(path)?;
    let model = w.to_model(path)?;
    if let Some(p) = expected {
        if p != model.profile {
            return Err(CliError::Validation(format!(
                "{} holds {} weights but the {} profile was requested",
                path.display(),
                model.profile.name(),
                p.name()
            )));
        }
    }
    Ok((w, model))
}
