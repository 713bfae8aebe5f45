#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use texsynth::dataset::{extract_examples, preprocess_actions, split_sections, synthetic_suite, Subset};
use texsynth::neural::{train_stage2, Architecture, CodeSource, ModelFile, ModelMode, SpectralModel, TrainConfig};
use texsynth_cli::session::ServiceModel;

/// A small embedding model trained on two synthetic materials whose probe
/// lifts off (zero force) for part of the script. Trained once per test
/// binary.
pub fn trained_model() -> ModelFile {
    static MODEL: OnceLock<ModelFile> = OnceLock::new();
    MODEL.get_or_init(train_model).clone()
}

fn train_model() -> ModelFile {
    let mut suite = synthetic_suite(2, 3);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for m in &mut suite {
        m.force_range = (-1.0, 2.5);
        let rec = preprocess_actions(&m.render(50_000).unwrap()).unwrap();
        let split = split_sections(&rec).unwrap();
        train.extend(extract_examples(&rec, &split, Subset::Train));
        val.extend(extract_examples(&rec, &split, Subset::Val));
    }
    let ids = suite.iter().map(|m| m.material_id.clone()).collect();
    let arch = Architecture {
        action_hidden: 32,
        predictor_hidden: 64,
    };
    let model = SpectralModel::new(ModelMode::Embedding, ids, arch, 1).unwrap();
    let cfg = TrainConfig {
        max_epochs: 60,
        seed: 1,
        ..Default::default()
    };
    ModelFile::single(train_stage2(model, &train, &val, CodeSource::Embedding, &cfg).unwrap().model)
}

pub fn service_model() -> Arc<ServiceModel> {
    Arc::new(ServiceModel::new(trained_model(), BTreeMap::new()).unwrap())
}
