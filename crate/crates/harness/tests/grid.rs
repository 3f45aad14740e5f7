use distill_core::corpus::{synthetic_java_corpus, CodeSample, SummaryField};
use distill_core::metrics::Embedder;
use distill_core::teacher::mock_summary;
use distill_harness::grid::{grid_report, run_experiment_grid, CellOutcome, ExperimentGrid, Measure};
use distill_harness::pipeline::{prepare_data, ModelSpec, PreparedData};

fn data() -> PreparedData {
    let corpus: Vec<CodeSample> = synthetic_java_corpus(120, 4)
        .into_iter()
        .map(|mut s| {
            s.teacher = Some(mock_summary(&s.code));
            s
        })
        .collect();
    prepare_data(corpus, SummaryField::Teacher, &[30, 60], 12, 4).unwrap()
}

fn tiny(name: &str, d: usize) -> ModelSpec {
    let mut s = ModelSpec::desk_small();
    s.name = name.into();
    s.config.d = d;
    s.config.epochs = 1;
    s.config.context_length = 96;
    s.bpe_vocab = 300;
    s
}

fn grid(dir: &std::path::Path) -> ExperimentGrid {
    ExperimentGrid {
        models: vec![tiny("a16", 16), tiny("b32", 32)],
        tiers: vec![30, 60],
        seeds: vec![1],
        out_dir: dir.to_path_buf(),
    }
}

#[test]
fn failed_cell_leaves_the_others_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(dir.path());
    let d = data();
    let emb = Embedder::hashed(16, 0);
    let fail = |k: &distill_harness::grid::CellKey| {
        if k.model == "b32" && k.tier == 30 {
            Err("injected fault".to_string())
        } else {
            Ok(())
        }
    };
    let run = run_experiment_grid(&g, &d, &emb, Some(&fail)).unwrap();
    assert_eq!(run.cells.len(), 4);
    let done = run.cells.iter().filter(|c| matches!(c.outcome, CellOutcome::Done { .. })).count();
    assert_eq!(done, 3);
    let report = grid_report(&g, &run.cells, Measure::Meteor).render();
    let missing = report
        .lines()
        .skip(4)
        .flat_map(|l| l.split('|').skip(1))
        .filter(|cell| cell.trim() == "-")
        .count();
    assert_eq!(missing, 1, "{report}");

    let again = run_experiment_grid(&g, &d, &emb, None).unwrap();
    assert_eq!(again.log.iter().filter(|l| l.ends_with("reused")).count(), 3);
    assert!(again.cells.iter().all(|c| matches!(c.outcome, CellOutcome::Done { .. })));
    for c in &run.cells {
        if matches!(c.outcome, CellOutcome::Done { .. }) {
            assert!(again.cells.contains(c));
        }
    }
    assert!(dir.path().join("run.log").exists());
    assert!(dir.path().join("cells/a16__30__s1/predictions.jsonl").exists());
}

#[test]
fn rerunning_a_cell_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = grid(dir.path());
    g.models.truncate(1);
    g.tiers.truncate(1);
    let d = data();
    let emb = Embedder::hashed(16, 0);
    let first = run_experiment_grid(&g, &d, &emb, None).unwrap();
    std::fs::remove_dir_all(dir.path().join("cells")).unwrap();
    let second = run_experiment_grid(&g, &d, &emb, None).unwrap();
    match (&first.cells[0].outcome, &second.cells[0].outcome) {
        (
            CellOutcome::Done { meteor: m1, use_score: u1, final_loss: l1, .. },
            CellOutcome::Done { meteor: m2, use_score: u2, final_loss: l2, .. },
        ) => assert_eq!((m1, u1, l1), (m2, u2, l2)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_groups_models_by_family() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = grid(dir.path());
    let mut t = ModelSpec::transformer();
    t.config.epochs = 1;
    g.models.push(t);
    let text = grid_report(&g, &[], Measure::Use).render();
    let header = text.lines().nth(1).unwrap();
    assert!(header.contains("decoder-only") && header.contains("encoder-decoder"), "{text}");
    assert!(g.validate().is_ok());
    g.models.push(tiny("a16", 8));
    assert!(g.validate().is_err());
}
