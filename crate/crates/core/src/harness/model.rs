//! Architecture-agnostic model handling: specs, training and checkpoints.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ae::{build_ae, train_ae, AeModel, AeSpec, AeTrainConfig};
use crate::ctn::{build_ctn, train_ctn, CtnModel, CtnScale, CtnSpec, CtnTrainConfig};
use crate::cvnn::{read_checkpoint, write_checkpoint, ArchMode, Checkpoint, ParamView, Parameterized, Tensor};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::train::{History, Trainable};

/// A network architecture together with its training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ModelSpec {
    Ae { spec: AeSpec, train: AeTrainConfig },
    Ctn { spec: CtnSpec, train: CtnTrainConfig },
}

impl ModelSpec {
    pub fn ae(mode: ArchMode) -> Self {
        ModelSpec::Ae { spec: AeSpec::new(mode), train: AeTrainConfig::default() }
    }

    pub fn ctn(mode: ArchMode, window: usize, scale: CtnScale) -> Self {
        let train = match scale {
            CtnScale::Full => CtnTrainConfig::full(0),
            CtnScale::Desk => CtnTrainConfig::desk(0),
        };
        ModelSpec::Ctn { spec: CtnSpec::new(mode, window, scale), train }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Ae { spec, .. } => spec.validate(),
            ModelSpec::Ctn { spec, .. } => spec.validate(),
        }
    }

    pub fn model_name(&self) -> &'static str {
        match self {
            ModelSpec::Ae { .. } => "AE",
            ModelSpec::Ctn { .. } => "CTN",
        }
    }

    pub fn mode(&self) -> ArchMode {
        match self {
            ModelSpec::Ae { spec, .. } => spec.mode,
            ModelSpec::Ctn { spec, .. } => spec.mode,
        }
    }

    /// Encoder window for the ConvTasNet, `-` otherwise.
    pub fn window_label(&self) -> String {
        match self {
            ModelSpec::Ae { .. } => "-".into(),
            ModelSpec::Ctn { spec, .. } => spec.window.to_string(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Ae { spec, .. } => format!("AE/{}", spec.mode),
            ModelSpec::Ctn { spec, .. } => format!("CTN/{}/W{}", spec.mode, spec.window),
        }
    }

    pub fn build(&self, seed: u64) -> Result<AnyModel> {
        Ok(match self {
            ModelSpec::Ae { spec, .. } => AnyModel::Ae(build_ae(spec, seed)?),
            ModelSpec::Ctn { spec, .. } => AnyModel::Ctn(build_ctn(spec, seed)?),
        })
    }

    /// Initializes with `seed` and trains with the recipe, also seeded by `seed`.
    pub fn train(&self, split: &Split, seed: u64) -> Result<(AnyModel, History)> {
        match self {
            ModelSpec::Ae { spec, train } => {
                let cfg = AeTrainConfig { seed, ..train.clone() };
                let (m, h) = train_ae(build_ae(spec, seed)?, split, &cfg)?;
                Ok((AnyModel::Ae(m), h))
            }
            ModelSpec::Ctn { spec, train } => {
                let cfg = CtnTrainConfig { seed, ..train.clone() };
                let (m, h) = train_ctn(build_ctn(spec, seed)?, split, &cfg)?;
                Ok((AnyModel::Ctn(m), h))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Ae(AeModel),
    Ctn(CtnModel),
}

impl Parameterized for AnyModel {
    fn collect_params<'a>(&'a mut self, out: &mut Vec<ParamView<'a>>) {
        match self {
            AnyModel::Ae(m) => m.collect_params(out),
            AnyModel::Ctn(m) => m.collect_params(out),
        }
    }
}

impl Trainable for AnyModel {
    fn predict(&mut self, noisy: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        match self {
            AnyModel::Ae(m) => m.predict(noisy),
            AnyModel::Ctn(m) => m.predict(noisy),
        }
    }

    fn backprop(&mut self, grad: &Tensor<Complex64>) -> Result<()> {
        match self {
            AnyModel::Ae(m) => m.backprop(grad),
            AnyModel::Ctn(m) => m.backprop(grad),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SavedMeta {
    model: ModelSpec,
    seed: u64,
    history: History,
}

/// Writes a trained member; the file records the spec, seed and history.
pub fn save_model(path: &Path, spec: &ModelSpec, seed: u64, history: &History, model: &mut AnyModel) -> Result<()> {
    let meta = serde_json::to_value(SavedMeta { model: spec.clone(), seed, history: history.clone() })?;
    write_checkpoint(path, &Checkpoint::capture(meta, model))
}

pub fn load_model(path: &Path) -> Result<(ModelSpec, u64, History, AnyModel)> {
    let ckpt = read_checkpoint(path)?;
    let meta: SavedMeta = serde_json::from_value(ckpt.spec.clone())
        .map_err(|e| Error::Format(format!("{}: checkpoint metadata: {e}", path.display())))?;
    let mut model = meta.model.build(meta.seed)?;
    ckpt.apply(&mut model)?;
    Ok((meta.model, meta.seed, meta.history, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_round_trip() {
        for spec in [ModelSpec::ae(ArchMode::DualReal1C), ModelSpec::ctn(ArchMode::ComplexNet, 64, CtnScale::Desk)] {
            let s = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), spec);
        }
    }

    #[test]
    fn labels() {
        assert_eq!(ModelSpec::ae(ArchMode::DualReal2).label(), "AE/DualReal2");
        let c = ModelSpec::ctn(ArchMode::ComplexNet, 128, CtnScale::Desk);
        assert_eq!(c.label(), "CTN/ComplexNet/W128");
        assert_eq!(c.window_label(), "128");
        assert_eq!(ModelSpec::ae(ArchMode::ComplexNet).window_label(), "-");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nqr");
        for spec in [ModelSpec::ae(ArchMode::DualReal2), ModelSpec::ctn(ArchMode::DualReal1C, 32, CtnScale::Desk)] {
            let mut m = spec.build(3).unwrap();
            m.quantize_f32();
            let h = History { train_loss: vec![0.5], val_loss: vec![0.25], best_epoch: 0, stopped_early: false };
            save_model(&path, &spec, 3, &h, &mut m).unwrap();
            let (spec2, seed, h2, mut m2) = load_model(&path).unwrap();
            assert_eq!((&spec2, seed, &h2), (&spec, 3, &h));
            let (a, b) = (m.snapshot(), m2.snapshot());
            assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
            let first = std::fs::read(&path).unwrap();
            save_model(&path, &spec2, seed, &h2, &mut m2).unwrap();
            assert_eq!(first, std::fs::read(&path).unwrap());
        }
    }
}
