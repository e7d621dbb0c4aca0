//! Canonical JSON model format.
//!
//! ```text
//! { "kind": "rf-majority" | "bt-binary", "base_margin": num, "classes": int,
//!   "features": [{"id": int, "name": str, "domain": {"type": "real"|"int"|"bool", "lo": num, "hi": num}}],
//!   "trees": [node] }
//! node = {"feat": int, "op": "<" | "<=", "thr": num, "l": node, "r": node} | {"leaf": num}
//! ```
//!
//! Thresholds, scores and bounds are written as decimal strings; numbers are
//! accepted on input as well.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::{Domain, FeatureSpec, Leaf, ModelError, ModelKind, Node, SplitOp, Tree, TreeEnsembleModel};
use crate::rational::{rational_from_json, Rational};

fn schema(path: &str, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, ModelError> {
    obj.get(key)
        .ok_or_else(|| schema(path, format!("missing field `{key}`")))
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ModelError> {
    value
        .as_object()
        .ok_or_else(|| schema(path, "expected an object"))
}

fn as_int(value: &Value, path: &str) -> Result<i64, ModelError> {
    value
        .as_i64()
        .ok_or_else(|| schema(path, format!("expected an integer, found {value}")))
}

fn as_rational(value: &Value, path: &str) -> Result<Rational, ModelError> {
    rational_from_json(value).map_err(|e| schema(path, e.to_string()))
}

pub fn load_model(bytes: &[u8]) -> Result<TreeEnsembleModel, ModelError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| schema("$", e.to_string()))?;
    let root = as_object(&doc, "$")?;

    let kind = match field(root, "kind", "$")?.as_str() {
        Some("rf-majority") => ModelKind::RfMajority,
        Some("bt-binary") => ModelKind::BtBinary,
        other => return Err(schema("$.kind", format!("unknown model kind {other:?}"))),
    };
    let base_margin = match root.get("base_margin") {
        Some(v) => as_rational(v, "$.base_margin")?,
        None => Rational::ZERO,
    };
    let classes = as_int(field(root, "classes", "$")?, "$.classes")?;
    if classes < 1 || classes > u32::MAX as i64 {
        return Err(schema("$.classes", "class count out of range"));
    }

    let feature_values = field(root, "features", "$")?
        .as_array()
        .ok_or_else(|| schema("$.features", "expected an array"))?;
    let mut features = Vec::with_capacity(feature_values.len());
    for (index, value) in feature_values.iter().enumerate() {
        let path = format!("$.features[{index}]");
        features.push(parse_feature(value, &path)?);
    }

    let tree_values = field(root, "trees", "$")?
        .as_array()
        .ok_or_else(|| schema("$.trees", "expected an array"))?;
    let mut trees = Vec::with_capacity(tree_values.len());
    for (index, value) in tree_values.iter().enumerate() {
        let path = format!("$.trees[{index}]");
        trees.push(parse_node(value, &path, kind, &features)?);
    }

    TreeEnsembleModel::new(kind, features, trees, classes as u32, base_margin)
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<TreeEnsembleModel, ModelError> {
    let bytes = std::fs::read(path.as_ref())
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))?;
    load_model(&bytes)
}

fn parse_feature(value: &Value, path: &str) -> Result<FeatureSpec, ModelError> {
    let obj = as_object(value, path)?;
    let id = as_int(field(obj, "id", path)?, &format!("{path}.id"))?;
    if id < 1 {
        return Err(schema(&format!("{path}.id"), "feature ids are 1-based"));
    }
    let name = match obj.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema(&format!("{path}.name"), "expected a string")),
        None => format!("x{id}"),
    };
    let dpath = format!("{path}.domain");
    let domain_obj = as_object(field(obj, "domain", path)?, &dpath)?;
    let bound = |key: &str| -> Result<Rational, ModelError> {
        as_rational(field(domain_obj, key, &dpath)?, &format!("{dpath}.{key}"))
    };
    let domain = match field(domain_obj, "type", &dpath)?.as_str() {
        Some("real") => Domain::Real {
            lo: bound("lo")?,
            hi: bound("hi")?,
        },
        Some("int") => Domain::Int {
            lo: bound("lo")?,
            hi: bound("hi")?,
        },
        Some("bool") => Domain::Bool,
        other => return Err(schema(&format!("{dpath}.type"), format!("unknown domain type {other:?}"))),
    };
    Ok(FeatureSpec {
        id: id as usize,
        name,
        domain,
    })
}

fn parse_node(value: &Value, path: &str, kind: ModelKind, features: &[FeatureSpec]) -> Result<Tree, ModelError> {
    let obj = as_object(value, path)?;
    if let Some(leaf) = obj.get("leaf") {
        let lpath = format!("{path}.leaf");
        return match kind {
            ModelKind::RfMajority => {
                let k = as_int(leaf, &lpath).or_else(|_| {
                    // "1" is accepted as well as 1
                    let r = as_rational(leaf, &lpath)?;
                    if r.is_integer() {
                        Ok(r.numer() as i64)
                    } else {
                        Err(schema(&lpath, "class leaf must be an integer"))
                    }
                })?;
                if k < 0 {
                    return Err(schema(&lpath, "negative class id"));
                }
                Ok(Tree::leaf(Leaf::Class(k as u32)))
            }
            ModelKind::BtBinary => Ok(Tree::leaf(Leaf::Score(as_rational(leaf, &lpath)?))),
        };
    }
    let fpath = format!("{path}.feat");
    let feature = as_int(field(obj, "feat", path)?, &fpath)?;
    if feature < 1 || feature as usize > features.len() {
        return Err(ModelError::UnknownFeature {
            path: fpath,
            feature,
            num_features: features.len(),
        });
    }
    let op = match field(obj, "op", path)?.as_str() {
        Some("<") => SplitOp::Lt,
        Some("<=") => SplitOp::Le,
        other => return Err(schema(&format!("{path}.op"), format!("unknown operator {other:?}"))),
    };
    let tpath = format!("{path}.thr");
    let threshold = as_rational(field(obj, "thr", path)?, &tpath)?;
    let domain = features[feature as usize - 1].domain;
    if threshold < domain.lo() || threshold > domain.hi() {
        return Err(ModelError::ThresholdOutsideDomain {
            path: tpath,
            feature: feature as usize,
            threshold,
        });
    }
    let left = parse_node(field(obj, "l", path)?, &format!("{path}.l"), kind, features)?;
    let right = parse_node(field(obj, "r", path)?, &format!("{path}.r"), kind, features)?;
    Ok(Tree::split(feature as usize, op, threshold, left, right))
}

pub fn save_model(model: &TreeEnsembleModel) -> Value {
    let features: Vec<Value> = model
        .features()
        .iter()
        .map(|spec| {
            let domain = match spec.domain {
                Domain::Real { lo, hi } => json!({"type": "real", "lo": lo.to_string(), "hi": hi.to_string()}),
                Domain::Int { lo, hi } => json!({"type": "int", "lo": lo.to_string(), "hi": hi.to_string()}),
                Domain::Bool => json!({"type": "bool", "lo": "0", "hi": "1"}),
            };
            json!({"id": spec.id, "name": spec.name, "domain": domain})
        })
        .collect();
    let trees: Vec<Value> = model.trees().iter().map(|tree| node_json(tree, 0)).collect();
    json!({
        "kind": model.kind().to_string(),
        "base_margin": model.base_margin().to_string(),
        "classes": model.num_classes(),
        "features": features,
        "trees": trees,
    })
}

pub fn save_model_string(model: &TreeEnsembleModel) -> String {
    serde_json::to_string_pretty(&save_model(model)).expect("model JSON serializes")
}

fn node_json(tree: &Tree, index: usize) -> Value {
    match tree.node(index) {
        Node::Leaf(Leaf::Class(k)) => json!({"leaf": k}),
        Node::Leaf(Leaf::Score(s)) => json!({"leaf": s.to_string()}),
        Node::Split {
            feature,
            op,
            threshold,
            left,
            right,
        } => json!({
            "feat": feature,
            "op": op.symbol(),
            "thr": threshold.to_string(),
            "l": node_json(tree, *left),
            "r": node_json(tree, *right),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STUMP: &str = r#"{
        "kind": "rf-majority", "classes": 2,
        "features": [{"id": 1, "name": "a", "domain": {"type": "real", "lo": 0, "hi": "10"}}],
        "trees": [{"feat": 1, "op": "<=", "thr": "2.5", "l": {"leaf": 0}, "r": {"leaf": 1}}]
    }"#;

    #[test]
    fn loads_a_stump() {
        let model = load_model(STUMP.as_bytes()).unwrap();
        assert_eq!(model.num_features(), 1);
        assert_eq!(model.trees().len(), 1);
        assert_eq!(model.predict(&["2.5".parse().unwrap()]).unwrap(), 0);
        assert_eq!(model.predict(&["2.6".parse().unwrap()]).unwrap(), 1);
    }

    #[test]
    fn unknown_feature_reports_path() {
        let doc = STUMP.replace(r#""feat": 1"#, r#""feat": 10"#);
        match load_model(doc.as_bytes()) {
            Err(ModelError::UnknownFeature { path, feature, .. }) => {
                assert_eq!(path, "$.trees[0].feat");
                assert_eq!(feature, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn threshold_outside_domain_reports_path() {
        let doc = STUMP.replace(r#""2.5""#, r#""12""#);
        match load_model(doc.as_bytes()) {
            Err(ModelError::ThresholdOutsideDomain { path, .. }) => assert_eq!(path, "$.trees[0].thr"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_paths() {
        let doc = STUMP.replace(r#""op": "<=""#, r#""op": "==""#);
        match load_model(doc.as_bytes()) {
            Err(ModelError::Schema { path, .. }) => assert_eq!(path, "$.trees[0].op"),
            other => panic!("unexpected {other:?}"),
        }
        let doc = STUMP.replace(r#""l": {"leaf": 0}"#, r#""l": {"leaf": "x"}"#);
        match load_model(doc.as_bytes()) {
            Err(ModelError::Schema { path, .. }) => assert_eq!(path, "$.trees[0].l.leaf"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(load_model(b"[1]").is_err());
        assert!(load_model(b"not json").is_err());
    }

    #[test]
    fn save_then_load_is_identity() {
        let model = load_model(STUMP.as_bytes()).unwrap();
        let again = load_model(save_model_string(&model).as_bytes()).unwrap();
        assert_eq!(model, again);
    }
}
