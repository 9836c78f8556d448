//! Parameter generation and persistence for the fusion pipeline.
//!
//! Weights travel as a single JSON document: `{"d", "heads", "params"}`
//! where `params` maps dotted names (`mlp.fc1.weight`, `mha.head2.q.bias`,
//! `ln1.gamma`, `semantic_table.Walk`, ...) to `{"shape", "data"}` entries
//! with row-major data. Keys are emitted in sorted order and floats in
//! shortest round-trip form, so saving is byte-stable and save/load is
//! bit-exact.
//!
//! Seeded initialization draws every affine parameter from a single
//! ChaCha8 stream, uniform on `[-1/sqrt(d), 1/sqrt(d)]`, in a frozen order:
//! content embed, style embed, mlp, encoder, attention heads (q, k, v per
//! head), attention output, then feed-forward — weights row-major before
//! biases. Layer-norm parameters start at the identity (gamma 1, beta 0)
//! and are not drawn. Semantic gates use one decorrelated substream per
//! label (seed xor golden-ratio multiple of the label index) pushed
//! through a sigmoid, so every gate lies strictly inside (0, 1) and
//! adding labels would not shift the other tables.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Affine, HeadWeights, LayerNormParams, MhaWeights, SaPmtWeights, StylenetError, TwoLayer,
    CONTENT_VOCABULARY, POSE_INPUT_DIM,
};

#[derive(Debug, Error)]
pub enum WeightIoError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightFile {
    d: usize,
    heads: usize,
    params: BTreeMap<String, ParamEntry>,
}

fn check_dims(d: usize, heads: usize) -> Result<(), StylenetError> {
    if d < 2 || d % 2 != 0 || heads == 0 || d % heads != 0 {
        return Err(StylenetError::BadDims { d, heads });
    }
    Ok(())
}

/// The full expected parameter name/shape listing for a given geometry.
fn param_specs(d: usize, heads: usize) -> Vec<(String, Vec<usize>)> {
    fn affine(specs: &mut Vec<(String, Vec<usize>)>, name: &str, out: usize, inp: usize) {
        specs.push((format!("{name}.weight"), vec![out, inp]));
        specs.push((format!("{name}.bias"), vec![out]));
    }
    let dh = d / heads;
    let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
    affine(&mut specs, "pose_embed_content", d, POSE_INPUT_DIM);
    affine(&mut specs, "pose_embed_style", d, POSE_INPUT_DIM);
    affine(&mut specs, "mlp.fc1", d, d);
    affine(&mut specs, "mlp.fc2", d, d);
    affine(&mut specs, "encoder.fc1", d, d);
    affine(&mut specs, "encoder.fc2", d, d);
    for h in 0..heads {
        affine(&mut specs, &format!("mha.head{h}.q"), dh, d);
        affine(&mut specs, &format!("mha.head{h}.k"), dh, d);
        affine(&mut specs, &format!("mha.head{h}.v"), dh, d);
    }
    affine(&mut specs, "mha.out", d, d);
    specs.push(("ln1.gamma".into(), vec![d]));
    specs.push(("ln1.beta".into(), vec![d]));
    specs.push(("ln2.gamma".into(), vec![d]));
    specs.push(("ln2.beta".into(), vec![d]));
    affine(&mut specs, "ffn.fc1", 4 * d, d);
    affine(&mut specs, "ffn.fc2", d, 4 * d);
    for label in CONTENT_VOCABULARY {
        specs.push((format!("semantic_table.{label}"), vec![d]));
    }
    specs
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Deterministic weight initialization for a `d`-wide, `heads`-head model.
pub fn seeded_weights(seed: u64, d: usize, heads: usize) -> Result<SaPmtWeights, StylenetError> {
    check_dims(d, heads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (d as f64).sqrt();
    let mut draw_affine = |out: usize, inp: usize| -> Affine {
        let mut weight = Array2::zeros((out, inp));
        for r in 0..out {
            for c in 0..inp {
                weight[[r, c]] = rng.gen_range(-bound..=bound);
            }
        }
        let mut bias = Array1::zeros(out);
        for b in bias.iter_mut() {
            *b = rng.gen_range(-bound..=bound);
        }
        Affine { weight, bias }
    };

    let pose_embed_content = draw_affine(d, POSE_INPUT_DIM);
    let pose_embed_style = draw_affine(d, POSE_INPUT_DIM);
    let mlp = TwoLayer {
        fc1: draw_affine(d, d),
        fc2: draw_affine(d, d),
    };
    let encoder = TwoLayer {
        fc1: draw_affine(d, d),
        fc2: draw_affine(d, d),
    };
    let dh = d / heads;
    let head_weights: Vec<HeadWeights> = (0..heads)
        .map(|_| HeadWeights {
            q: draw_affine(dh, d),
            k: draw_affine(dh, d),
            v: draw_affine(dh, d),
        })
        .collect();
    let mha = MhaWeights {
        heads: head_weights,
        out: draw_affine(d, d),
    };
    let ffn = TwoLayer {
        fc1: draw_affine(4 * d, d),
        fc2: draw_affine(d, 4 * d),
    };

    let identity_ln = || LayerNormParams {
        gamma: Array1::ones(d),
        beta: Array1::zeros(d),
    };

    let mut semantic_table = BTreeMap::new();
    for (i, label) in CONTENT_VOCABULARY.iter().enumerate() {
        let sub_seed = seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut sub = ChaCha8Rng::seed_from_u64(sub_seed);
        let mut gate = Array1::zeros(d);
        for g in gate.iter_mut() {
            *g = sigmoid(sub.gen_range(-3.0..3.0));
        }
        semantic_table.insert((*label).to_string(), gate);
    }

    Ok(SaPmtWeights {
        d,
        pose_embed_content,
        pose_embed_style,
        mlp,
        encoder,
        mha,
        ln1: identity_ln(),
        ln2: identity_ln(),
        ffn,
        semantic_table,
    })
}

fn entry_1d(a: &Array1<f64>) -> ParamEntry {
    ParamEntry {
        shape: vec![a.len()],
        data: a.to_vec(),
    }
}

fn entry_2d(a: &Array2<f64>) -> ParamEntry {
    let (r, c) = a.dim();
    ParamEntry {
        shape: vec![r, c],
        data: a.iter().copied().collect(), // row-major
    }
}

fn insert_affine(params: &mut BTreeMap<String, ParamEntry>, name: &str, a: &Affine) {
    params.insert(format!("{name}.weight"), entry_2d(&a.weight));
    params.insert(format!("{name}.bias"), entry_1d(&a.bias));
}

/// Serializes weights to the canonical JSON document.
pub fn weights_to_json(w: &SaPmtWeights) -> String {
    let mut params = BTreeMap::new();
    insert_affine(&mut params, "pose_embed_content", &w.pose_embed_content);
    insert_affine(&mut params, "pose_embed_style", &w.pose_embed_style);
    insert_affine(&mut params, "mlp.fc1", &w.mlp.fc1);
    insert_affine(&mut params, "mlp.fc2", &w.mlp.fc2);
    insert_affine(&mut params, "encoder.fc1", &w.encoder.fc1);
    insert_affine(&mut params, "encoder.fc2", &w.encoder.fc2);
    for (h, head) in w.mha.heads.iter().enumerate() {
        insert_affine(&mut params, &format!("mha.head{h}.q"), &head.q);
        insert_affine(&mut params, &format!("mha.head{h}.k"), &head.k);
        insert_affine(&mut params, &format!("mha.head{h}.v"), &head.v);
    }
    insert_affine(&mut params, "mha.out", &w.mha.out);
    params.insert("ln1.gamma".into(), entry_1d(&w.ln1.gamma));
    params.insert("ln1.beta".into(), entry_1d(&w.ln1.beta));
    params.insert("ln2.gamma".into(), entry_1d(&w.ln2.gamma));
    params.insert("ln2.beta".into(), entry_1d(&w.ln2.beta));
    insert_affine(&mut params, "ffn.fc1", &w.ffn.fc1);
    insert_affine(&mut params, "ffn.fc2", &w.ffn.fc2);
    for (label, gate) in &w.semantic_table {
        params.insert(format!("semantic_table.{label}"), entry_1d(gate));
    }
    let file = WeightFile {
        d: w.d,
        heads: w.head_count(),
        params,
    };
    let mut s = serde_json::to_string(&file).expect("weight serialization cannot fail");
    s.push('\n');
    s
}

pub fn save_weights(w: &SaPmtWeights, path: &Path) -> Result<(), WeightIoError> {
    std::fs::write(path, weights_to_json(w)).map_err(|source| WeightIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_weights(path: &Path) -> Result<SaPmtWeights, WeightIoError> {
    if !path.exists() {
        return Err(WeightIoError::NotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| WeightIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    weights_from_json(&text, &path.display().to_string())
}

/// Parses and validates a weight document. `origin` names the source in
/// errors. Every expected parameter must be present with the exact shape,
/// no extras are allowed, all values must be finite, and semantic gates
/// must lie in [0, 1].
pub fn weights_from_json(text: &str, origin: &str) -> Result<SaPmtWeights, WeightIoError> {
    let file: WeightFile = serde_json::from_str(text).map_err(|e| WeightIoError::Parse {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    let schema_err = |detail: String| WeightIoError::Schema {
        path: origin.to_string(),
        detail,
    };
    check_dims(file.d, file.heads).map_err(|e| schema_err(e.to_string()))?;

    let specs = param_specs(file.d, file.heads);
    for (name, shape) in &specs {
        match file.params.get(name) {
            None => return Err(schema_err(format!("missing parameter {:?}", name))),
            Some(entry) => {
                if &entry.shape != shape {
                    return Err(schema_err(format!(
                        "parameter {:?}: expected shape {:?}, found {:?}",
                        name, shape, entry.shape
                    )));
                }
                let expected_len: usize = shape.iter().product();
                if entry.data.len() != expected_len {
                    return Err(schema_err(format!(
                        "parameter {:?}: shape {:?} needs {} values, found {}",
                        name,
                        shape,
                        expected_len,
                        entry.data.len()
                    )));
                }
                if let Some(bad) = entry.data.iter().find(|v| !v.is_finite()) {
                    return Err(schema_err(format!(
                        "parameter {:?}: non-finite value {}",
                        name, bad
                    )));
                }
                if name.starts_with("semantic_table.")
                    && entry.data.iter().any(|&v| !(0.0..=1.0).contains(&v))
                {
                    return Err(schema_err(format!(
                        "parameter {:?}: semantic gates must lie in [0, 1]",
                        name
                    )));
                }
            }
        }
    }
    let expected: std::collections::BTreeSet<&str> =
        specs.iter().map(|(n, _)| n.as_str()).collect();
    if let Some(extra) = file.params.keys().find(|k| !expected.contains(k.as_str())) {
        return Err(schema_err(format!("unknown parameter {:?}", extra)));
    }

    let take_1d = |name: &str| -> Array1<f64> {
        Array1::from_vec(file.params[name].data.clone())
    };
    let take_affine = |name: &str| -> Affine {
        let w = &file.params[format!("{name}.weight").as_str()];
        Affine {
            weight: Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data.clone())
                .expect("shape validated above"),
            bias: take_1d(&format!("{name}.bias")),
        }
    };

    let mut semantic_table = BTreeMap::new();
    for label in CONTENT_VOCABULARY {
        semantic_table.insert(
            label.to_string(),
            take_1d(&format!("semantic_table.{label}")),
        );
    }
    Ok(SaPmtWeights {
        d: file.d,
        pose_embed_content: take_affine("pose_embed_content"),
        pose_embed_style: take_affine("pose_embed_style"),
        mlp: TwoLayer {
            fc1: take_affine("mlp.fc1"),
            fc2: take_affine("mlp.fc2"),
        },
        encoder: TwoLayer {
            fc1: take_affine("encoder.fc1"),
            fc2: take_affine("encoder.fc2"),
        },
        mha: MhaWeights {
            heads: (0..file.heads)
                .map(|h| HeadWeights {
                    q: take_affine(&format!("mha.head{h}.q")),
                    k: take_affine(&format!("mha.head{h}.k")),
                    v: take_affine(&format!("mha.head{h}.v")),
                })
                .collect(),
            out: take_affine("mha.out"),
        },
        ln1: LayerNormParams {
            gamma: take_1d("ln1.gamma"),
            beta: take_1d("ln1.beta"),
        },
        ln2: LayerNormParams {
            gamma: take_1d("ln2.gamma"),
            beta: take_1d("ln2.beta"),
        },
        ffn: TwoLayer {
            fc1: take_affine("ffn.fc1"),
            fc2: take_affine("ffn.fc2"),
        },
        semantic_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn seeded_weights_are_deterministic() {
        let a = seeded_weights(7, 16, 4).unwrap();
        let b = seeded_weights(7, 16, 4).unwrap();
        assert_eq!(a, b);
        let c = seeded_weights(8, 16, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn seeded_weights_have_documented_shapes() {
        let w = seeded_weights(0, 64, 4).unwrap();
        assert_eq!(w.pose_embed_content.weight.dim(), (64, 40));
        assert_eq!(w.pose_embed_style.bias.len(), 64);
        assert_eq!(w.mha.heads.len(), 4);
        assert_eq!(w.mha.heads[2].q.weight.dim(), (16, 64));
        assert_eq!(w.mha.out.weight.dim(), (64, 64));
        assert_eq!(w.ffn.fc1.weight.dim(), (256, 64));
        assert_eq!(w.ffn.fc2.weight.dim(), (64, 256));
        assert_eq!(w.ln1.gamma, Array1::<f64>::ones(64));
        assert_eq!(w.ln2.beta, Array1::<f64>::zeros(64));
        assert_eq!(w.semantic_table.len(), 20);
        // Affine draws respect the 1/sqrt(d) bound.
        let bound = 1.0 / 8.0;
        assert!(w.mlp.fc1.weight.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn semantic_gates_lie_strictly_inside_unit_interval() {
        let w = seeded_weights(3, 16, 2).unwrap();
        for label in CONTENT_VOCABULARY {
            let gate = &w.semantic_table[label];
            assert_eq!(gate.len(), 16);
            assert!(gate.iter().all(|&g| g > 0.0 && g < 1.0), "label {}", label);
        }
        // Distinct labels get distinct gates.
        assert_ne!(w.semantic_table["Walk"], w.semantic_table["Run"]);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(seeded_weights(0, 15, 3).is_err()); // odd d
        assert!(seeded_weights(0, 16, 3).is_err()); // 16 % 3 != 0
        assert!(seeded_weights(0, 16, 0).is_err());
        assert!(seeded_weights(0, 0, 1).is_err());
    }

    #[test]
    fn param_listing_is_complete() {
        let specs = param_specs(16, 4);
        // 6 affine pairs + 3 per head * 4 heads + out + 4 ln + 2 ffn + 20 gates.
        assert_eq!(specs.len(), 42 + 6 * 4);
        let w = seeded_weights(1, 16, 4).unwrap();
        let json = weights_to_json(&w);
        let file: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(file["params"].as_object().unwrap().len(), specs.len());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.json");
        let w = seeded_weights(99, 16, 4).unwrap();
        save_weights(&w, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(loaded, w);
        save_weights(&loaded, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first, "save must be byte-stable");
    }

    fn mutate_weight_json(mutate: impl FnOnce(&mut Value)) -> Result<SaPmtWeights, WeightIoError> {
        let w = seeded_weights(5, 16, 2).unwrap();
        let mut v: Value = serde_json::from_str(&weights_to_json(&w)).unwrap();
        mutate(&mut v);
        weights_from_json(&v.to_string(), "test")
    }

    #[test]
    fn missing_parameter_is_named() {
        let err = mutate_weight_json(|v| {
            v["params"].as_object_mut().unwrap().remove("mlp.fc1.weight");
        })
        .unwrap_err();
        match err {
            WeightIoError::Schema { detail, .. } => {
                assert!(detail.contains("missing parameter"), "got {}", detail);
                assert!(detail.contains("mlp.fc1.weight"), "got {}", detail);
            }
            other => panic!("expected schema error, got {:?}", other),
        }
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let err = mutate_weight_json(|v| {
            let params = v["params"].as_object_mut().unwrap();
            params.insert(
                "mlp.fc3.weight".into(),
                serde_json::json!({"shape": [1], "data": [0.0]}),
            );
        })
        .unwrap_err();
        match err {
            WeightIoError::Schema { detail, .. } => {
                assert!(detail.contains("unknown parameter"), "got {}", detail)
            }
            other => panic!("expected schema error, got {:?}", other),
        }
    }

    #[test]
    fn wrong_shape_is_rejected_with_both_shapes() {
        let err = mutate_weight_json(|v| {
            v["params"]["ln1.gamma"]["shape"] = serde_json::json!([8]);
            v["params"]["ln1.gamma"]["data"] = serde_json::json!(vec![1.0; 8]);
        })
        .unwrap_err();
        match err {
            WeightIoError::Schema { detail, .. } => {
                assert!(detail.contains("[16]") && detail.contains("[8]"), "got {}", detail)
            }
            other => panic!("expected schema error, got {:?}", other),
        }
    }

    #[test]
    fn short_data_is_rejected() {
        let err = mutate_weight_json(|v| {
            v["params"]["ln1.beta"]["data"] = serde_json::json!([0.0, 0.0]);
        })
        .unwrap_err();
        assert!(matches!(err, WeightIoError::Schema { .. }));
    }

    #[test]
    fn out_of_range_semantic_gate_is_rejected() {
        let err = mutate_weight_json(|v| {
            v["params"]["semantic_table.Walk"]["data"][0] = serde_json::json!(2.0);
        })
        .unwrap_err();
        match err {
            WeightIoError::Schema { detail, .. } => {
                assert!(detail.contains("semantic"), "got {}", detail)
            }
            other => panic!("expected schema error, got {:?}", other),
        }
    }

    #[test]
    fn inconsistent_geometry_is_rejected() {
        let err = mutate_weight_json(|v| {
            v["heads"] = serde_json::json!(3);
        })
        .unwrap_err();
        assert!(matches!(err, WeightIoError::Schema { .. }));
    }

    #[test]
    fn missing_file_is_reported_as_not_found() {
        let err = load_weights(Path::new("/nonexistent/weights.json")).unwrap_err();
        match err {
            WeightIoError::NotFound(p) => assert!(p.contains("nonexistent")),
            other => panic!("expected not-found, got {:?}", other),
        }
    }
}
