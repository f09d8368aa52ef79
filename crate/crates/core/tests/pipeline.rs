use copgraph::dataset::{k_core_filter, split, CoreMode, SplitSpec};
use copgraph::eval::{
    ablation_sweep, fit_and_evaluate, grid_search, AblationKind, AblationSetup, EvalConfig, GridSpec, Objective, Protocol, Target,
};
use copgraph::format::{load_model, save_model};
use copgraph::model::{build_model, ModelParams};
use copgraph::synthetic::{anchor_id, complement_id, generate, SyntheticConfig};
use copgraph::{Interaction, InteractionLog};

fn synthetic() -> InteractionLog {
    generate(&SyntheticConfig::default()).unwrap().log
}

#[test]
fn saved_model_answers_like_the_original() {
    let log = synthetic();
    let model = build_model(&log, &ModelParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cpg");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    for item in log.items().iter().take(20) {
        assert_eq!(loaded.recommend(item, 10).unwrap(), model.recommend(item, 10).unwrap());
    }
}

#[test]
fn planted_complement_ranks_first() {
    let log = synthetic();
    let model = build_model(&log, &ModelParams::default().with_triplet(0.0, 1, 2)).unwrap();
    let mut hits = 0;
    for p in 0..40 {
        let top = model.recommend(&anchor_id(p, 0), 1).unwrap();
        hits += usize::from(top[0].item == complement_id(p));
    }
    assert!(hits >= 36, "{hits}/40 anchors lead to their complement");
}

#[test]
fn complement_direction_is_respected() {
    // everyone buys a then b; the graph must point from a to b only
    let recs = (0..6).flat_map(|u| {
        let user = format!("u{u}");
        [Interaction::new(user.clone(), "a", 1, "x"), Interaction::new(user, "b", 2, "y")]
    });
    let log = InteractionLog::from_interactions(recs).unwrap();
    let model = build_model(&log, &ModelParams::default().with_triplet(0.5, 2, 1)).unwrap();
    assert_eq!(model.recommend("a", 5).unwrap()[0].item, "b");
    assert!(model.recommend("b", 5).unwrap().is_empty());
}

#[test]
fn grid_ties_prefer_small_settings() {
    // one user per item pair with no held-out overlap: every point scores zero
    let recs = (0..4).flat_map(|u| (0..4).map(move |t| Interaction::new(format!("u{u}"), format!("i{}", (u * 4 + t) % 16), t as u64, "")));
    let log = InteractionLog::from_interactions(recs).unwrap();
    let s = split(&log, &SplitSpec::sequential()).unwrap();
    let config = EvalConfig::new(vec![5], Protocol::Sequential, Target::Test).unwrap();
    let grid = GridSpec {
        alphas: vec![1.0, 0.5],
        lambdas: vec![3, 2],
        kappas: vec![4, 2],
        objective: Objective::default(),
    };
    let out = grid_search(&s, &ModelParams::default(), &grid, &config).unwrap();
    assert_eq!(out.points.len(), 8);
    assert!(out.points.iter().all(|p| p.outcome.as_ref().unwrap().ndcg[0] == 0.0));
    assert_eq!((out.best.lambda, out.best.kappa, out.best.alpha), (2, 2, 0.5));
}

#[test]
fn grid_winner_matches_direct_fit() {
    let log = synthetic();
    let s = split(&log, &SplitSpec::sequential()).unwrap();
    let config = EvalConfig::new(vec![5, 10], Protocol::Sequential, Target::Test).unwrap();
    let grid = GridSpec {
        alphas: vec![0.0, 1.0],
        lambdas: vec![1, 2],
        kappas: vec![1, 3],
        objective: "recall@10".parse().unwrap(),
    };
    let out = grid_search(&s, &ModelParams::default(), &grid, &config).unwrap();
    let best_row = out
        .points
        .iter()
        .map(|p| p.outcome.as_ref().unwrap().recall[1])
        .fold(f64::MIN, f64::max);
    assert_eq!(out.best_validation, best_row);
    let (_, direct) = fit_and_evaluate(&s, &out.best, &config).unwrap();
    assert_eq!(direct, out.test_report);
}

#[test]
fn ablations_label_every_setting() {
    let log = synthetic();
    let setup = AblationSetup {
        log: &log,
        base: ModelParams::default().with_triplet(0.5, 2, 2),
        split: SplitSpec::sequential(),
        core_mode: CoreMode::Iterative,
        config: EvalConfig::new(vec![5], Protocol::Sequential, Target::Test).unwrap(),
    };
    let agg = ablation_sweep(&AblationKind::Aggregation, &setup).unwrap();
    assert_eq!(agg.len(), 7);
    assert_eq!(agg[0].label, "agg=inv");

    let core = ablation_sweep(&AblationKind::KCore(vec![1, 8]), &setup).unwrap();
    let eight = k_core_filter(&log, 8, CoreMode::Iterative).unwrap();
    assert_eq!(
        core[1].report.n_evaluated + core[1].report.n_skipped,
        split(&eight, &SplitSpec::sequential()).unwrap().test.len()
    );

    let ties = ablation_sweep(&AblationKind::TieShuffle(vec![1, 2]), &setup).unwrap();
    let labels: Vec<&str> = ties.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["original", "shuffled seed=1", "shuffled seed=2", "shuffled mean"]);
    // no ties in this log, so shuffling changes nothing
    assert_eq!(ties[0].report.ndcg, ties[3].report.ndcg);
}
