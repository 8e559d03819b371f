mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use common::{write_dump, CountingChat, SharedChat};
use jic_core::dialogue::Dialogue;
use jic_core::io::{read_json, read_jsonl, sha256_file};
use jic_core::pipeline::{
    Pipeline, PipelineConfig, RunManifest, Services, Stage, Target, TraitReport, WorkdirLock, DIALOGUES, MANIFEST_FILE,
    SKIPS, STATS, TRAIT_REPORT,
};
use jic_core::Error;

const SIX_AUTHORS: [usize; 6] = [1, 2, 3, 1, 2, 3];

fn config(root: &Path) -> PipelineConfig {
    let dump = root.join("dump.jsonl");
    if !dump.exists() {
        write_dump(&dump, &SIX_AUTHORS);
    }
    let mut c = PipelineConfig::default();
    c.paths.corpus = dump;
    c.paths.workdir = root.join("work");
    c.offline = true;
    c.test_size = 2;
    c.generation.workers = 2;
    c
}

fn checksums(workdir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(workdir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != MANIFEST_FILE)
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                sha256_file(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn stage_before_its_prerequisite_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::from_config(config(dir.path())).unwrap();
    p.run(Target::Stage(Stage::Ingest), false).unwrap();
    p.run(Target::Stage(Stage::Cluster), false).unwrap();
    match p.run(Target::Stage(Stage::Filter), false) {
        Err(Error::Prerequisite { stage, missing }) => {
            assert_eq!(stage, "filter");
            assert_eq!(missing, "traits");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn run_all_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = Pipeline::from_config(config(a.path()))
        .unwrap()
        .run(Target::All, false)
        .unwrap();
    assert_eq!(summary.completed, Stage::ALL.to_vec());
    Pipeline::from_config(config(b.path()))
        .unwrap()
        .run(Target::All, false)
        .unwrap();
    let (ca, cb) = (checksums(&a.path().join("work")), checksums(&b.path().join("work")));
    assert!(ca.contains_key(STATS));
    assert_eq!(ca, cb);

    let skips: Vec<serde_json::Value> = read_jsonl(&a.path().join("work").join(SKIPS)).unwrap();
    assert!(skips.is_empty());
}

#[test]
fn rerun_in_place_keeps_outputs_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::from_config(config(dir.path())).unwrap();
    p.run(Target::All, false).unwrap();
    let before = checksums(&dir.path().join("work"));
    p.run(Target::All, false).unwrap();
    assert_eq!(before, checksums(&dir.path().join("work")));
}

#[test]
fn changed_config_is_refused_without_force() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::from_config(config(dir.path()))
        .unwrap()
        .run(Target::Stage(Stage::Ingest), false)
        .unwrap();
    let mut changed = config(dir.path());
    changed.alpha = 0.5;
    let p = Pipeline::from_config(changed).unwrap();
    assert!(matches!(
        p.run(Target::Stage(Stage::Cluster), false),
        Err(Error::ConfigMismatch { .. })
    ));
    p.run(Target::Stage(Stage::Cluster), true).unwrap();
    let m = RunManifest::load(&dir.path().join("work")).unwrap().unwrap();
    assert_eq!(m.config_hash, p.config().config_hash());
}

#[test]
fn edited_prerequisite_output_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::from_config(config(dir.path())).unwrap();
    p.run(Target::Stage(Stage::Ingest), false).unwrap();
    let corpus = dir.path().join("work").join("corpus.jsonl");
    let mut text = std::fs::read_to_string(&corpus).unwrap();
    text.push('\n');
    std::fs::write(&corpus, text).unwrap();
    assert!(matches!(
        p.run(Target::Stage(Stage::Cluster), false),
        Err(Error::StaleOutput { .. })
    ));
}

#[test]
fn locked_workdir_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    std::fs::create_dir_all(&cfg.paths.workdir).unwrap();
    let _held = WorkdirLock::acquire(&cfg.paths.workdir).unwrap();
    let p = Pipeline::from_config(cfg).unwrap();
    assert!(matches!(
        p.run(Target::Stage(Stage::Ingest), false),
        Err(Error::Locked(_))
    ));
}

#[test]
fn upstream_change_invalidates_downstream_markers() {
    let dir = tempfile::tempdir().unwrap();
    Pipeline::from_config(config(dir.path()))
        .unwrap()
        .run(Target::All, false)
        .unwrap();
    let mut loose = config(dir.path());
    loose.beta = 3.0;
    let p = Pipeline::from_config(loose).unwrap();
    p.run(Target::Stage(Stage::Filter), true).unwrap();
    let report: TraitReport = read_json(&dir.path().join("work").join(TRAIT_REPORT)).unwrap();
    assert_eq!(report.beta, 3.0);
    let m = RunManifest::load(&dir.path().join("work")).unwrap().unwrap();
    assert!(report.entries_retained > 0);
    assert!(!m.stages.contains_key("generate"));
    assert!(m.stages.contains_key("traits"));
    assert!(matches!(
        p.run(Target::Stage(Stage::Toxicity), false),
        Err(Error::Prerequisite { .. })
    ));
}

#[test]
fn interrupted_generate_resumes_without_duplicate_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let base = Services::offline(&cfg);
    let setup = Pipeline::new(cfg.clone(), base.clone()).unwrap();
    for s in [Stage::Ingest, Stage::Cluster, Stage::Traits, Stage::Filter] {
        setup.run(Target::Stage(s), false).unwrap();
    }

    let flag = Arc::new(AtomicBool::new(false));
    let first = Arc::new(CountingChat::cancelling(flag.clone(), 2));
    let services = Services {
        chat: Arc::new(SharedChat(first.clone())),
        ..base.clone()
    };
    let mut one_worker = cfg.clone();
    one_worker.generation.workers = 1;
    let p = Pipeline::new(one_worker, services).unwrap().with_cancel(flag);
    assert!(matches!(
        p.run(Target::Stage(Stage::Generate), false),
        Err(Error::Interrupted(_))
    ));
    let m = RunManifest::load(&cfg.paths.workdir).unwrap().unwrap();
    assert!(m.generation.as_ref().unwrap().interrupted);
    assert!(!m.stages.contains_key("generate"));

    let second = Arc::new(CountingChat::new());
    let services = Services {
        chat: Arc::new(SharedChat(second.clone())),
        ..base
    };
    Pipeline::new(cfg.clone(), services)
        .unwrap()
        .run(Target::Stage(Stage::Generate), false)
        .unwrap();
    let dialogues: Vec<Dialogue> = read_jsonl(&cfg.paths.workdir.join(DIALOGUES)).unwrap();
    assert_eq!(first.total() + second.total(), dialogues.len());
    let a = first.per_prompt.lock().unwrap();
    assert!(second.per_prompt.lock().unwrap().keys().all(|k| !a.contains_key(k)));
}
