use std::path::Path;

use serde_json::Value;

use super::param::Parameterized;
use crate::container::{self, ContainerKind, PayloadReader, PayloadWriter};
use crate::error::{Error, Result};

/// Parameters of a saved model plus the model description needed to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: Value,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn capture<M: Parameterized + ?Sized>(spec: Value, model: &mut M) -> Self {
        let params = model.params();
        Self {
            spec,
            shapes: params.iter().map(|p| p.shape.to_vec()).collect(),
            values: params.iter().map(|p| p.value.iter().map(|&v| v as f32).collect()).collect(),
        }
    }

    /// Copies the stored values into a freshly built model of the same shape.
    pub fn apply<M: Parameterized + ?Sized>(&self, model: &mut M) -> Result<()> {
        let params = model.params();
        if params.len() != self.values.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                self.values.len(),
                params.len()
            )));
        }
        for (i, (p, v)) in params.into_iter().zip(&self.values).enumerate() {
            if p.value.len() != v.len() || p.shape != self.shapes[i].as_slice() {
                return Err(Error::Format(format!("checkpoint tensor {i} has shape {:?}, model {:?}", self.shapes[i], p.shape)));
            }
            for (dst, src) in p.value.iter_mut().zip(v) {
                *dst = f64::from(*src);
            }
        }
        Ok(())
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let total: usize = ckpt.values.iter().map(Vec::len).sum();
    let mut w = PayloadWriter::with_capacity(4 * total);
    ckpt.values.iter().flatten().for_each(|v| w.f32(*v));
    let lengths: Vec<usize> = ckpt.values.iter().map(Vec::len).collect();
    let meta = serde_json::json!({ "spec": ckpt.spec, "shapes": ckpt.shapes, "lengths": lengths });
    container::write(path, ContainerKind::Checkpoint, meta, &w.finish())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (header, payload) = container::read(path, Some(ContainerKind::Checkpoint))?;
    let field = |name: &str| header.meta.get(name).cloned().ok_or_else(|| Error::Format(format!("checkpoint lacks '{name}'")));
    let spec = field("spec")?;
    let shapes: Vec<Vec<usize>> = serde_json::from_value(field("shapes")?)?;
    let lengths: Vec<usize> = serde_json::from_value(field("lengths")?)?;
    if lengths.len() != shapes.len() {
        return Err(Error::Format("checkpoint shape and length tables differ".into()));
    }
    let mut r = PayloadReader::new(&payload);
    let values = lengths
        .iter()
        .map(|&n| (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Checkpoint { spec, shapes, values })
}
