use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::Module;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Flat `path → tensor` map; keys are sorted so the JSON form is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn capture(module: &mut dyn Module) -> Self {
        let mut tensors = BTreeMap::new();
        module.visit("", &mut |t| {
            tensors.insert(
                t.name,
                StoredTensor {
                    shape: t.shape,
                    data: t.value.to_vec(),
                },
            );
        });
        Self { tensors }
    }

    /// Copies every tensor into `module`; all of the module's tensors must be
    /// present with matching shapes.
    pub fn restore(&self, module: &mut dyn Module) -> Result<()> {
        let mut err = None;
        module.visit("", &mut |t| {
            if err.is_some() {
                return;
            }
            match self.tensors.get(&t.name) {
                None => err = Some(format!("missing tensor {}", t.name)),
                Some(s) if s.shape != t.shape || s.data.len() != t.value.len() => {
                    err = Some(format!(
                        "tensor {} has shape {:?}, expected {:?}",
                        t.name, s.shape, t.shape
                    ))
                }
                Some(s) => t.value.copy_from_slice(&s.data),
            }
        });
        match err {
            Some(e) => Err(Error::Checkpoint(e)),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.tensors)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(Self {
            tensors: serde_json::from_str(s)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{BatchNorm1d, Dense};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn capture_restore_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Dense::new(3, 2, &mut rng);
        let ck = Checkpoint::capture(&mut a);
        let json = ck.to_json().unwrap();
        assert!(json.starts_with("{\"bias\""));
        let mut b = Dense::zeros(3, 2);
        Checkpoint::from_json(&json).unwrap().restore(&mut b).unwrap();
        assert_eq!(a, b);
        let mut wrong = Dense::zeros(2, 2);
        assert!(ck.restore(&mut wrong).is_err());
        let mut bn = BatchNorm1d::new(2);
        assert!(ck.restore(&mut bn).is_err());
    }
}
