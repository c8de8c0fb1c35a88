//! Downstream analyses over predicted energies: bottleneck breakdowns,
//! energy/accuracy selection, power-log integration and cost estimates.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tree::{ModelTree, Node, PredictionMap};

/// Sample period of the reference power monitor, in seconds.
pub const DEFAULT_POWER_INTERVAL_S: f64 = 0.17;
pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Modules whose children are all ML leaves.
pub fn leaf_parents(tree: &ModelTree) -> Vec<&Node> {
    tree.iter()
        .skip(1)
        .filter(|n| !n.is_leaf() && n.children.iter().all(Node::is_leaf))
        .collect()
}

/// Share of root energy (percent) spent in each leaf-parent module type,
/// averaged over `runs`. A type missing from a tree counts as 0 there.
/// Shares are raw and need not sum to 100.
pub fn bottleneck_breakdown(runs: &[(&ModelTree, &PredictionMap)]) -> Result<BTreeMap<String, f64>> {
    if runs.is_empty() {
        return Err(Error::Empty("bottleneck input trees"));
    }
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for (tree, preds) in runs {
        let root = get(preds, &tree.root.name)?;
        let mut per_tree: BTreeMap<&str, f64> = BTreeMap::new();
        for n in leaf_parents(tree) {
            *per_tree.entry(n.type_name.as_str()).or_default() += get(preds, &n.name)?;
        }
        for (ty, e) in per_tree {
            *totals.entry(ty.to_string()).or_default() += 100.0 * e / root;
        }
    }
    let k = runs.len() as f64;
    Ok(totals.into_iter().map(|(t, s)| (t, s / k)).collect())
}

/// Rescales shares so they sum to 100.
pub fn renormalize(shares: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = shares.values().sum();
    if total <= 0.0 {
        return shares.clone();
    }
    shares.iter().map(|(k, v)| (k.clone(), 100.0 * v / total)).collect()
}

fn get(p: &PredictionMap, name: &str) -> Result<f64> {
    p.get(name).copied().ok_or_else(|| Error::MissingPrediction(name.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    #[serde(rename = "voltage_v")]
    pub voltage: f64,
    #[serde(rename = "current_a")]
    pub current: f64,
}

pub fn read_power_log(path: impl AsRef<Path>) -> Result<Vec<PowerSample>> {
    read_power_csv(std::fs::File::open(path)?)
}

pub fn read_power_csv<R: Read>(r: R) -> Result<Vec<PowerSample>> {
    let samples: Vec<PowerSample> = csv::Reader::from_reader(r).deserialize().collect::<std::result::Result<_, _>>()?;
    for w in samples.windows(2) {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::InvalidInput(format!(
                "power log timestamps decrease at {} s",
                w[1].timestamp
            )));
        }
    }
    Ok(samples)
}

/// `Σ V·I·interval` over fixed-period samples, in joules.
pub fn integrate_power(samples: &[PowerSample], interval_s: f64) -> Result<f64> {
    if !(interval_s > 0.0) {
        return Err(Error::InvalidInput(format!("sampling interval must be positive, got {interval_s}")));
    }
    let mut joules = 0.0;
    for s in samples {
        if !(s.voltage >= 0.0 && s.current >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative reading at {} s: {} V, {} A",
                s.timestamp, s.voltage, s.current
            )));
        }
        joules += s.voltage * s.current * interval_s;
    }
    Ok(joules)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryCost {
    pub kwh: f64,
    pub usd: f64,
}

pub fn cost_of_queries(energy_per_query_j: f64, n_queries: f64, usd_per_kwh: f64) -> Result<QueryCost> {
    if [energy_per_query_j, n_queries, usd_per_kwh].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("cost inputs must be non-negative".into()));
    }
    let kwh = energy_per_query_j * n_queries / JOULES_PER_KWH;
    Ok(QueryCost { kwh, usd: kwh * usd_per_kwh })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCandidate {
    pub model_name: String,
    pub accuracy: f64,
    #[serde(rename = "predicted_energy_j")]
    pub predicted_energy: f64,
    #[serde(rename = "ground_truth_energy_j", default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_energy: Option<f64>,
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<TradeoffCandidate>> {
    read_candidates_csv(std::fs::File::open(path)?)
}

pub fn read_candidates_csv<R: Read>(r: R) -> Result<Vec<TradeoffCandidate>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let out: Vec<TradeoffCandidate> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    if let Some(c) = out.iter().find(|c| !(c.predicted_energy > 0.0)) {
        return Err(Error::InvalidInput(format!("candidate `{}` has non-positive energy", c.model_name)));
    }
    Ok(out)
}

/// Most accurate candidate within `budget_j`; ties go to lower energy, then name.
pub fn tradeoff_select(candidates: &[TradeoffCandidate], budget_j: f64) -> Result<&TradeoffCandidate> {
    if candidates.is_empty() {
        return Err(Error::Empty("trade-off candidates"));
    }
    candidates
        .iter()
        .filter(|c| c.predicted_energy <= budget_j)
        .max_by(|a, b| {
            a.accuracy
                .total_cmp(&b.accuracy)
                .then_with(|| b.predicted_energy.total_cmp(&a.predicted_energy))
                .then_with(|| b.model_name.cmp(&a.model_name))
        })
        .ok_or(Error::NoCandidate(budget_j))
}

/// Candidates not dominated by another with no more energy and strictly
/// higher accuracy, sorted by energy.
pub fn pareto_front(candidates: &[TradeoffCandidate]) -> Vec<&TradeoffCandidate> {
    let mut front: Vec<&TradeoffCandidate> = candidates
        .iter()
        .filter(|c| {
            !candidates
                .iter()
                .any(|o| o.predicted_energy <= c.predicted_energy && o.accuracy > c.accuracy)
        })
        .collect();
    front.sort_by(|a, b| {
        a.predicted_energy
            .partial_cmp(&b.predicted_energy)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.model_name.cmp(&b.model_name))
    });
    front
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::tree::NodeKind;

    fn cand(name: &str, e: f64, acc: f64) -> TradeoffCandidate {
        TradeoffCandidate { model_name: name.into(), accuracy: acc, predicted_energy: e, ground_truth_energy: None }
    }

    fn two_module_tree() -> ModelTree {
        let f = FeatureVector { batch_size: 1.0, seq_len: 1.0, ..Default::default() };
        let a = Node::internal(
            "A:0",
            NodeKind::Module,
            f,
            vec![Node::leaf("Linear:0", "Linear", f), Node::leaf("Linear:1", "Linear", f)],
        );
        let a1 = Node::internal("A:1", NodeKind::Module, f, vec![Node::leaf("Linear:2", "Linear", f)]);
        let b = Node::internal("B:0", NodeKind::Module, f, vec![Node::leaf("Softmax:0", "Softmax", f)]);
        ModelTree { model_name: "m".into(), batch_size: 1, seq_len: 1, root: Node::internal("M", NodeKind::Model, f, vec![a, a1, b]) }
    }

    #[test]
    fn bottleneck_groups_by_type() {
        let t = two_module_tree();
        let p: PredictionMap = [("M", 10.0), ("A:0", 2.0), ("A:1", 3.0), ("B:0", 5.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let b = bottleneck_breakdown(&[(&t, &p)]).unwrap();
        assert_eq!(b["A"], 50.0);
        assert_eq!(b["B"], 50.0);

        let mut q = p.clone();
        q.insert("M".into(), 20.0);
        let avg = bottleneck_breakdown(&[(&t, &p), (&t, &q)]).unwrap();
        assert_eq!(avg["A"], 37.5);

        let mut missing = p;
        missing.remove("B:0");
        assert!(bottleneck_breakdown(&[(&t, &missing)]).is_err());
    }

    #[test]
    fn bottleneck_single_module_is_everything() {
        let f = FeatureVector { batch_size: 1.0, seq_len: 1.0, ..Default::default() };
        let t = ModelTree {
            model_name: "m".into(),
            batch_size: 1,
            seq_len: 1,
            root: Node::internal(
                "M",
                NodeKind::Model,
                f,
                vec![Node::internal("Only:0", NodeKind::Module, f, vec![Node::leaf("Linear:0", "Linear", f)])],
            ),
        };
        let p: PredictionMap = [("M".to_string(), 4.0), ("Only:0".to_string(), 4.0)].into_iter().collect();
        assert_eq!(bottleneck_breakdown(&[(&t, &p)]).unwrap()["Only"], 100.0);
    }

    #[test]
    fn renormalized_shares_sum_to_100() {
        let s: BTreeMap<String, f64> = [("a".to_string(), 30.0), ("b".to_string(), 90.0)].into_iter().collect();
        let r = renormalize(&s);
        assert_eq!(r["a"], 25.0);
        assert_eq!(r["b"], 75.0);
    }

    #[test]
    fn power_integration() {
        let s = vec![PowerSample { timestamp: 0.0, voltage: 120.0, current: 0.5 }; 10];
        assert!((integrate_power(&s, 0.17).unwrap() - 102.0).abs() < 1e-9);
        assert_eq!(integrate_power(&[], 0.17).unwrap(), 0.0);
        let neg = [PowerSample { timestamp: 0.0, voltage: -1.0, current: 0.5 }];
        assert!(integrate_power(&neg, 0.17).is_err());
        assert!(integrate_power(&s, 0.0).is_err());
    }

    #[test]
    fn power_log_rejects_decreasing_timestamps() {
        let ok = "timestamp_s,voltage_v,current_a\n0,120,0.5\n0.17,120,0.5\n";
        assert_eq!(read_power_csv(ok.as_bytes()).unwrap().len(), 2);
        let bad = "timestamp_s,voltage_v,current_a\n0.17,120,0.5\n0,120,0.5\n";
        assert!(read_power_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn zero_queries_cost_nothing() {
        assert_eq!(cost_of_queries(100.0, 0.0, 0.1319).unwrap(), QueryCost { kwh: 0.0, usd: 0.0 });
    }

    #[test]
    fn tradeoff_examples() {
        let c = vec![cand("a", 4.0, 88.0), cand("b", 12.0, 89.0), cand("c", 6.0, 85.0)];
        assert_eq!(tradeoff_select(&c, 10.0).unwrap().model_name, "a");
        assert!(matches!(tradeoff_select(&c, 3.0), Err(Error::NoCandidate(_))));
        let front: Vec<&str> = pareto_front(&c).iter().map(|c| c.model_name.as_str()).collect();
        assert_eq!(front, vec!["a", "b"]);
    }

    #[test]
    fn tradeoff_ties_break_on_energy_then_name() {
        let c = vec![cand("z", 5.0, 90.0), cand("y", 4.0, 90.0), cand("x", 4.0, 90.0)];
        assert_eq!(tradeoff_select(&c, 10.0).unwrap().model_name, "x");
    }

    #[test]
    fn candidates_csv_with_optional_column() {
        let doc = "model_name,accuracy,predicted_energy_j,ground_truth_energy_j\nbert,0.91,12.5,12.0\ntiny,0.80,1.5,\n";
        let c = read_candidates_csv(doc.as_bytes()).unwrap();
        assert_eq!(c[0].ground_truth_energy, Some(12.0));
        assert_eq!(c[1].ground_truth_energy, None);
        let short = "model_name,accuracy,predicted_energy_j\nbert,0.91,12.5\n";
        assert_eq!(read_candidates_csv(short.as_bytes()).unwrap().len(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn integration_is_linear_and_additive(
                a in proptest::collection::vec((0.0f64..250.0, 0.0f64..10.0), 0..30),
                b in proptest::collection::vec((0.0f64..250.0, 0.0f64..10.0), 0..30),
                dt in 0.01f64..1.0,
            ) {
                let mk = |v: &[(f64, f64)]| v.iter().map(|&(volt, amp)| PowerSample { timestamp: 0.0, voltage: volt, current: amp }).collect::<Vec<_>>();
                let (sa, sb) = (mk(&a), mk(&b));
                let mut both = sa.clone();
                both.extend(&sb);
                let ea = integrate_power(&sa, dt).unwrap();
                let eb = integrate_power(&sb, dt).unwrap();
                let tol = 1e-9 * (1.0 + ea + eb);
                prop_assert!((integrate_power(&both, dt).unwrap() - (ea + eb)).abs() <= tol);
                prop_assert!((integrate_power(&sa, 2.0 * dt).unwrap() - 2.0 * ea).abs() <= tol);
            }

            #[test]
            fn selection_ignores_candidate_order(
                raw in proptest::collection::vec((1.0f64..20.0, 50.0f64..100.0), 1..12),
                budget in 1.0f64..25.0,
            ) {
                let c: Vec<_> = raw.iter().enumerate().map(|(i, &(e, a))| cand(&format!("m{i}"), e, a)).collect();
                let mut r = c.clone();
                r.reverse();
                match (tradeoff_select(&c, budget), tradeoff_select(&r, budget)) {
                    (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false),
                }
            }
        }
    }
}
