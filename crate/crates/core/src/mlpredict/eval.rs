use std::collections::BTreeMap;

use super::{
    permute_group, split_chronological, train_forest, undersample_majority, ForestModel, Hyperparameters,
    LabeledDataset, Target, NEUTRON,
};

/// Area under the ROC curve with tied scores sharing their average rank,
/// which equals trapezoidal integration over every distinct threshold.
/// `None` when either class is absent.
pub fn evaluate_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one score per label");
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mean_rank * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mitigation costs and benefits, all in node-hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MitigationParams {
    pub cost_per_mitigation: f64,
    pub benefit_per_true_positive: f64,
    pub training_cost: f64,
}

/// `TP * benefit - positives * cost - training`.
pub fn cost_benefit(predictions: &[bool], labels: &[bool], params: &MitigationParams) -> f64 {
    let positives = predictions.iter().filter(|&&p| p).count() as f64;
    let tp = predictions.iter().zip(labels).filter(|(&p, &l)| p && l).count() as f64;
    tp * params.benefit_per_true_positive - positives * params.cost_per_mitigation - params.training_cost
}

/// Grid point with the best validation AUC; the first wins ties. Grid
/// points whose validation AUC is undefined are skipped.
pub fn tune(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    grid: &[Hyperparameters],
    seed: u64,
) -> Option<(Hyperparameters, f64)> {
    let mut best: Option<(Hyperparameters, f64)> = None;
    for &h in grid {
        let m = train_forest(train, h, seed);
        let Some(auc) = evaluate_auc(&m.predict_all(validation), &validation.labels) else {
            continue;
        };
        if best.is_none_or(|(_, b)| auc > b) {
            best = Some((h, auc));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub target: Target,
    pub seed: u64,
    /// Negatives kept per positive in the training data; `None` keeps all.
    pub undersample_ratio: Option<f64>,
    pub grid: Vec<Hyperparameters>,
    pub permute_neutron: bool,
    /// Scores at or above this threshold count as positive predictions.
    pub decision_threshold: f64,
    /// Cost-benefit parameters; used for the UE target only.
    pub mitigation: Option<MitigationParams>,
}

impl ExperimentConfig {
    pub fn new(target: Target, seed: u64) -> Self {
        Self {
            target,
            seed,
            undersample_ratio: Some(1.0),
            grid: super::default_grid(),
            permute_neutron: false,
            decision_threshold: 0.5,
            mitigation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Test-set AUC; `None` when the test set lacks either class.
    pub auc: Option<f64>,
    pub validation_auc: Option<f64>,
    pub hyper: Hyperparameters,
    pub group_importance: BTreeMap<String, f64>,
    pub feature_importance: Vec<(String, f64)>,
    pub saved_node_hours: Option<f64>,
    pub confusion: Confusion,
    pub train_rows: usize,
    pub train_positives: usize,
    pub test_rows: usize,
    pub test_positives: usize,
}

/// Split, undersample, tune on validation, retrain on train plus
/// validation, and evaluate on the test split.
pub fn run_experiment(data: &LabeledDataset, config: &ExperimentConfig) -> (ForestModel, EvaluationReport) {
    let data = if config.permute_neutron { permute_group(data, NEUTRON, config.seed) } else { data.clone() };
    let (train, validation, test) = split_chronological(&data);
    let balance = |d: &LabeledDataset| match config.undersample_ratio {
        Some(r) => undersample_majority(d, r, config.seed),
        None => d.clone(),
    };
    let fallback = config.grid.first().copied().unwrap_or_default();
    let (hyper, validation_auc) = if config.grid.len() > 1 {
        match tune(&balance(&train), &validation, &config.grid, config.seed) {
            Some((h, a)) => (h, Some(a)),
            None => (fallback, None),
        }
    } else {
        (fallback, None)
    };
    let final_train = balance(&train.concat(&validation));
    let model = train_forest(&final_train, hyper, config.seed);
    let scores = model.predict_all(&test);
    let predictions: Vec<bool> = scores.iter().map(|&s| s >= config.decision_threshold).collect();
    let mut confusion = Confusion::default();
    for (&p, &l) in predictions.iter().zip(&test.labels) {
        match (p, l) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fp += 1,
            (false, false) => confusion.tn += 1,
            (false, true) => confusion.fn_ += 1,
        }
    }
    let saved_node_hours = match (config.target, config.mitigation) {
        (Target::UeNextDay, Some(m)) => Some(cost_benefit(&predictions, &test.labels, &m)),
        _ => None,
    };
    let report = EvaluationReport {
        auc: evaluate_auc(&scores, &test.labels),
        validation_auc,
        hyper,
        group_importance: model.gini_group_importance(),
        feature_importance: model.feature_names.iter().cloned().zip(model.feature_importance()).collect(),
        saved_node_hours,
        confusion,
        train_rows: final_train.rows(),
        train_positives: final_train.positives(),
        test_rows: test.rows(),
        test_positives: test.positives(),
    };
    (model, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Fraction of (positive, negative) pairs ranked correctly, ties half.
    fn pair_auc(s: &[f64], l: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(evaluate_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(evaluate_auc(&[0.5; 6], &[true, false, true, false, false, true]), Some(0.5));
        assert_eq!(evaluate_auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn auc_of_random_ranking() {
        let mut rng = crate::rng::stream(1, 0);
        use rand::Rng;
        let s: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let l: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.3)).collect();
        let a = evaluate_auc(&s, &l).unwrap();
        assert!((a - 0.5).abs() < 0.05, "{a}");
    }

    #[test]
    fn cost_benefit_examples() {
        let p = MitigationParams { cost_per_mitigation: 1.0, benefit_per_true_positive: 5.0, training_cost: 3.0 };
        assert_eq!(cost_benefit(&[false; 4], &[true, false, true, false], &p), -3.0);
        assert_eq!(cost_benefit(&[true; 10], &[true; 10], &p), 37.0);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(v in prop::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            match evaluate_auc(&s, &l) {
                Some(a) => prop_assert!((a - pair_auc(&s, &l)).abs() < 1e-12),
                None => prop_assert!(l.iter().all(|&x| x) || l.iter().all(|&x| !x)),
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform(v in prop::collection::vec((0u8..10, any::<bool>()), 2..60)) {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 - 1.0).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            prop_assert_eq!(evaluate_auc(&s, &l), evaluate_auc(&t, &l));
        }
    }
}
