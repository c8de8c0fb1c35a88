use proptest::prelude::*;

use enertree::eval::{EvalConfig, TrainedModel};
use enertree::synthetic::{generate_dataset, ModelSpec, SyntheticSpec};
use enertree::tree_regressor::{predict_sum, TreeRegressorFile};
use enertree::{FeatureSubset, FeatureVector, ModelTree, Node, NodeKind, PrimitiveRegressorSet, RegressorKind};

fn arb_features(b: u32, s: u32) -> impl Strategy<Value = FeatureVector> {
    proptest::array::uniform10(0.0f64..100.0).prop_map(move |v| {
        let mut a = [0.0; 12];
        a[0] = f64::from(b);
        a[1] = f64::from(s);
        a[2..].copy_from_slice(&v);
        FeatureVector::from_array(a)
    })
}

/// Arbitrary tree shapes with unique names and optional ground truth.
fn arb_tree() -> impl Strategy<Value = ModelTree> {
    (1u32..64, 1u32..512).prop_flat_map(|(b, s)| {
        let leaf = (arb_features(b, s), proptest::option::of(0.01f64..100.0)).prop_map(|(f, g)| {
            let mut n = Node::leaf("x", "Linear", f);
            n.ground_truth_energy = g;
            n
        });
        let tree = leaf.prop_recursive(4, 40, 4, move |inner| {
            (proptest::collection::vec(inner, 1..4), arb_features(b, s), proptest::option::of(0.01f64..100.0)).prop_map(
                |(kids, f, g)| {
                    let mut n = Node::internal("x", NodeKind::Module, f, kids);
                    n.ground_truth_energy = g;
                    n
                },
            )
        });
        (tree, arb_features(b, s)).prop_map(move |(child, f)| {
            let mut root = Node::internal("Root", NodeKind::Model, f, vec![child]);
            let mut i = 0;
            fn rename(n: &mut Node, i: &mut usize) {
                let base = if n.is_leaf() { "Linear" } else if n.kind == NodeKind::Model { "Root" } else { "Block" };
                n.name = format!("{base}:{i}");
                n.type_name = base.to_string();
                *i += 1;
                n.children.iter_mut().for_each(|c| rename(c, i));
            }
            rename(&mut root, &mut i);
            ModelTree { model_name: "m".into(), batch_size: b, seq_len: s, root }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_json_round_trips(t in arb_tree()) {
        let back = ModelTree::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_json(), t.to_json());
    }

    #[test]
    fn predict_sum_telescopes(t in arb_tree(), seed in 0u64..1000) {
        let leaves: enertree::PredictionMap = t
            .iter()
            .filter(|n| n.is_leaf())
            .enumerate()
            .map(|(i, n)| (n.name.clone(), 0.5 + ((seed + i as u64) % 17) as f64))
            .collect();
        let p = predict_sum(&t, &leaves).unwrap();
        let total: f64 = leaves.values().sum();
        prop_assert!((p[&t.root.name] - total).abs() <= 1e-9 * total);
        prop_assert_eq!(p.len(), t.node_count());
    }
}

#[test]
fn trained_model_files_round_trip() {
    let spec = SyntheticSpec {
        models: SyntheticSpec::biased(4).models.into_iter().map(|m| ModelSpec { n_layers: 1, ..m }).collect(),
        batch_sizes: vec![8],
        seq_lens: vec![32, 64],
        ..SyntheticSpec::biased(4)
    };
    let trees = generate_dataset(&spec).unwrap().trees;
    for kind in [RegressorKind::End2End, RegressorKind::StepWise, RegressorKind::PredictedSum, RegressorKind::Unstructured] {
        let mut cfg = EvalConfig::new(kind, FeatureSubset::All, 0);
        cfg.train.epochs = 10;
        let model = TrainedModel::train(&trees, &cfg).unwrap();
        let leaf_json = model.leaf.to_json();
        let file = TreeRegressorFile::new(model.aggregator.clone(), &leaf_json);
        let back = TreeRegressorFile::from_json(&file.to_json()).unwrap();
        assert!(back.matches_leaf_file(&leaf_json));
        let leaf = PrimitiveRegressorSet::from_json(&leaf_json).unwrap();
        let again = TrainedModel { leaf, aggregator: back.regressor };
        for t in &trees {
            assert_eq!(again.predict(t).unwrap(), model.predict(t).unwrap(), "{}", kind.as_str());
        }
    }
}
