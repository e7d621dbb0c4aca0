//! Built-in example models and their reference instances.
//!
//! * `xd6`: four boolean-feature trees where `{7,8,9}` looks like an AXp of
//!   the all-ones-but-`x2` instance but is not even sufficient.
//! * `pima`: three trees over eight real features where `{1}` is not a
//!   contrastive explanation.
//! * `phoneme`: a two-tree boosted model whose score at the instance is
//!   `-1.020375043`.

use crate::model::{load_model, parse_point, Instance, TreeEnsembleModel};
use crate::rational::Rational;

pub const XD6_JSON: &str = include_str!("../fixtures/xd6.json");
pub const PIMA_JSON: &str = include_str!("../fixtures/pima.json");
pub const PHONEME_JSON: &str = include_str!("../fixtures/phoneme.json");

pub const XD6_POINT: &str = "1,0,1,1,1,1,1,1,1";
/// Tied 2-2 vote, resolved to class 0.
pub const XD6_COUNTEREXAMPLE: &str = "1,1,0,1,1,0,1,1,1";
pub const PIMA_POINT: &str = "9.0,57.0,80.0,37.0,0.0,32.8,0.096,41.0";
pub const PHONEME_POINT: &str = "3.306,0.653,0.313,0.669,-0.218";

pub const NAMES: [&str; 3] = ["xd6", "pima", "phoneme"];

pub fn model(name: &str) -> Option<TreeEnsembleModel> {
    let json = match name {
        "xd6" => XD6_JSON,
        "pima" => PIMA_JSON,
        "phoneme" => PHONEME_JSON,
        _ => return None,
    };
    Some(load_model(json.as_bytes()).expect("built-in fixture is well formed"))
}

pub fn point(name: &str) -> Option<Vec<Rational>> {
    let text = match name {
        "xd6" => XD6_POINT,
        "pima" => PIMA_POINT,
        "phoneme" => PHONEME_POINT,
        _ => return None,
    };
    Some(parse_point(text).expect("built-in point is well formed"))
}

/// The fixture model with its reference instance labelled by the model.
pub fn load(name: &str) -> Option<(TreeEnsembleModel, Instance)> {
    let model = model(name)?;
    let instance = Instance::predicted(&model, point(name)?).expect("built-in point fits its model");
    Some((model, instance))
}

pub fn xd6() -> (TreeEnsembleModel, Instance) {
    load("xd6").expect("known fixture")
}

pub fn pima() -> (TreeEnsembleModel, Instance) {
    load("pima").expect("known fixture")
}

pub fn phoneme() -> (TreeEnsembleModel, Instance) {
    load("phoneme").expect("known fixture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TreeOutput;

    fn votes(model: &TreeEnsembleModel, point: &[Rational]) -> Vec<u32> {
        model
            .per_tree_outputs(point)
            .unwrap()
            .into_iter()
            .map(|o| match o {
                TreeOutput::Vote(k) => k,
                TreeOutput::Score(_) => panic!("forest expected"),
            })
            .collect()
    }

    #[test]
    fn xd6_votes() {
        let (model, inst) = xd6();
        assert_eq!(model.trees().len(), 4);
        assert_eq!(votes(&model, &inst.point), vec![1, 1, 1, 1]);
        assert_eq!(inst.klass, 1);
        let w = parse_point(XD6_COUNTEREXAMPLE).unwrap();
        assert_eq!(votes(&model, &w), vec![0, 1, 1, 0]);
        assert_eq!(model.predict(&w).unwrap(), 0);
    }

    #[test]
    fn pima_votes() {
        let (model, inst) = pima();
        assert_eq!(votes(&model, &inst.point), vec![0, 0, 1]);
        assert_eq!(inst.klass, 0);
    }

    #[test]
    fn phoneme_score() {
        let (model, inst) = phoneme();
        let outputs = model.per_tree_outputs(&inst.point).unwrap();
        assert_eq!(
            outputs,
            vec![
                TreeOutput::Score("-0.564179122".parse().unwrap()),
                TreeOutput::Score("-0.456195921".parse().unwrap()),
            ]
        );
        assert_eq!(model.score(&inst.point).unwrap(), "-1.020375043".parse().unwrap());
        assert_eq!(inst.klass, 0);
    }

    #[test]
    fn unknown_name() {
        assert!(load("iris").is_none());
    }
}
