//! Versioned JSON model files.
//!
//! Floats are written in shortest round-trip form, so loading a saved model
//! reproduces every stored number bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{ForestStructure, KnnModel, NaiveBayes, TanModel};
use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::eval::{FittedModel, MethodKind, Trained};
use crate::features::{FeatureMap, FeatureMapFile, FeatureTag, PairScreen};
use crate::slb::{SlbConfig, SlbModel, ThresholdSelection};
use crate::svm::{LinearModel, Regularization, TrainDiagnostics};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: MethodKind,
    pub feature_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
    #[serde(flatten)]
    pub body: ModelBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelBody {
    Slb {
        config: SlbConfig,
        screen: PairScreen,
        selection: Option<ThresholdSelection>,
        kdes: FeatureMapFile,
        weights: Vec<f64>,
        tags: Vec<FeatureTag>,
        regularization: Regularization,
        diagnostics: TrainDiagnostics,
    },
    NaiveBayes {
        kdes: FeatureMapFile,
        log_prior_ratio: f64,
        tags: Vec<FeatureTag>,
    },
    Tan {
        kdes: FeatureMapFile,
        structures: [ForestStructure; 2],
        log_prior_ratio: f64,
        weights: Vec<f64>,
        tags: Vec<FeatureTag>,
    },
    Knn(KnnModel),
}

impl ModelFile {
    pub fn from_trained(t: &Trained, feature_names: &[String]) -> Result<ModelFile> {
        let body = match &t.model {
            FittedModel::Slb(m) => ModelBody::Slb {
                config: m.config.clone(),
                screen: m.screen.clone(),
                selection: m.selection.clone(),
                kdes: m.feature_map.to_file(),
                weights: m.linear.weights.clone(),
                tags: m.feature_map.tags(),
                regularization: m.linear.regularization,
                diagnostics: m.linear.diagnostics.clone(),
            },
            FittedModel::Nb(m) => ModelBody::NaiveBayes {
                kdes: m.map.to_file(),
                log_prior_ratio: m.log_prior_ratio,
                tags: m.map.tags(),
            },
            FittedModel::Tan(m) => ModelBody::Tan {
                kdes: m.map.to_file(),
                structures: m.structures.clone(),
                log_prior_ratio: m.log_prior_ratio,
                weights: m.weights().to_vec(),
                tags: m.map.tags(),
            },
            FittedModel::Knn(m) => ModelBody::Knn(m.clone()),
            FittedModel::Oracle(_) => {
                return Err(Error::Format("the oracle classifier cannot be saved".into()));
            }
        };
        Ok(ModelFile {
            format_version: FORMAT_VERSION,
            method: t.method,
            feature_names: feature_names.to_vec(),
            standardizer: t.standardizer.clone(),
            body,
        })
    }

    pub fn into_trained(self) -> Result<Trained> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} (this build reads {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let d = self.feature_names.len();
        let check = |map: &FeatureMap, tags: &[FeatureTag]| -> Result<()> {
            if map.d() != d {
                return Err(Error::Format(format!("{} feature names for a {}-feature map", d, map.d())));
            }
            if map.tags() != tags {
                return Err(Error::Format("feature tags do not match the stored layout".into()));
            }
            Ok(())
        };
        let model = match self.body {
            ModelBody::Slb {
                config,
                screen,
                selection,
                kdes,
                weights,
                tags,
                regularization,
                diagnostics,
            } => {
                let feature_map = FeatureMap::from_file(&kdes)?;
                check(&feature_map, &tags)?;
                if weights.len() != tags.len() {
                    return Err(Error::Format("weight count does not match the feature layout".into()));
                }
                FittedModel::Slb(Box::new(SlbModel {
                    feature_map,
                    linear: LinearModel {
                        weights,
                        regularization,
                        diagnostics,
                    },
                    screen,
                    config,
                    selection,
                }))
            }
            ModelBody::NaiveBayes {
                kdes,
                log_prior_ratio,
                tags,
            } => {
                let map = FeatureMap::from_file(&kdes)?;
                check(&map, &tags)?;
                FittedModel::Nb(NaiveBayes { map, log_prior_ratio })
            }
            ModelBody::Tan {
                kdes,
                structures,
                log_prior_ratio,
                weights,
                tags,
            } => {
                let map = FeatureMap::from_file(&kdes)?;
                check(&map, &tags)?;
                let tan = TanModel::from_parts(map, structures, log_prior_ratio)?;
                if tan.weights() != weights.as_slice() {
                    return Err(Error::Format("stored TAN weights disagree with the stored structures".into()));
                }
                FittedModel::Tan(tan)
            }
            ModelBody::Knn(m) => {
                if m.x.cols() != d || m.x.rows() != m.y.len() {
                    return Err(Error::Format("kNN training sample has the wrong shape".into()));
                }
                FittedModel::Knn(m)
            }
        };
        if let Some(s) = &self.standardizer {
            if s.means.len() != d || s.scales.len() != d {
                return Err(Error::Format("standardizer has the wrong dimension".into()));
            }
        }
        Ok(Trained {
            method: self.method,
            standardizer: self.standardizer,
            model,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelFile> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("format_version").and_then(|x| x.as_u64()) {
            Some(ver) if ver == FORMAT_VERSION as u64 => {}
            Some(ver) => {
                return Err(Error::Format(format!(
                    "model format version {ver} (this build reads {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Format("missing format_version".into())),
        }
        Ok(serde_json::from_value(v)?)
    }
}

pub fn save_model(t: &Trained, feature_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let json = ModelFile::from_trained(t, feature_names)?.to_json()?;
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Load a model and its feature names.
pub fn load_model(path: impl AsRef<Path>) -> Result<(Trained, Vec<String>)> {
    let s = fs::read_to_string(path)?;
    let file = ModelFile::from_json(&s)?;
    let names = file.feature_names.clone();
    Ok((file.into_trained()?, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_feature_names, Dataset, Label, Matrix};
    use crate::eval::{fit_method, Classifier, MethodConfig};
    use crate::rng::Rng;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn toy(seed: u64) -> Dataset {
        let mut r = Rng::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for k in 0..60 {
            let l = if k % 2 == 0 { Label::Pos } else { Label::Neg };
            let a: f64 = r.sample(StandardNormal);
            rows.push(vec![a + l.sign(), a * 0.7 + r.sample::<f64, _>(StandardNormal), r.sample(StandardNormal)]);
            y.push(l);
        }
        Dataset::from_matrix(Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn every_method_round_trips() {
        let ds = toy(1);
        let names = default_feature_names(3);
        let mut cfg = MethodConfig::default();
        cfg.slb.grid = None;
        let probe = Matrix::from_rows(&(0..100).map(|k| vec![k as f64 * 0.07 - 3.0, 0.3, -(k as f64) * 0.01]).collect::<Vec<_>>()).unwrap();
        for m in [MethodKind::SlbMinus, MethodKind::Lu, MethodKind::Nb, MethodKind::Tan, MethodKind::Knn] {
            let mut t = fit_method(m, &ds, &cfg, None, &Rng::new(2)).unwrap();
            if let FittedModel::Slb(s) = &mut t.model {
                // the per-epoch trace is not persisted
                s.linear.diagnostics.trace.clear();
            }
            let json = ModelFile::from_trained(&t, &names).unwrap().to_json().unwrap();
            let back = ModelFile::from_json(&json).unwrap().into_trained().unwrap();
            assert_eq!(back, t, "{m}");
            let a = t.decision_values(&probe).unwrap();
            let b = back.decision_values(&probe).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{m}");
        }
    }

    #[test]
    fn version_is_checked() {
        let ds = toy(3);
        let t = fit_method(MethodKind::Nb, &ds, &MethodConfig::default(), None, &Rng::new(1)).unwrap();
        let json = ModelFile::from_trained(&t, &default_feature_names(3)).unwrap().to_json().unwrap();
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
        assert!(matches!(ModelFile::from_json(&bumped), Err(Error::Format(_))));
        assert!(matches!(ModelFile::from_json("{}"), Err(Error::Format(_))));
    }
}
