//! Rendered prompts compared against files in `tests/golden/`.
//! Regenerate with `UPDATE_GOLDEN=1 cargo test --test golden`.

use std::path::PathBuf;

use evotree::agents::{build_executor_prompt, build_executor_prompt_styled, build_validator_prompt, ExecutorStyle, PromptBundle, TaskQuery};
use evotree::evaluation::synth::synth_corpus;
use evotree::gateway::HashEmbedder;
use evotree::memory::{MemoryEntry, MemoryStore, StoreKind};
use evotree::{ReasonMode, Task};

fn check(name: &str, bundle: &PromptBundle) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    let text = bundle.render_text();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, want, "prompt drifted from {}", path.display());
}

fn entry(kind: StoreKind, task: Task, question: &str, answer: &str, reason: &str) -> MemoryEntry {
    let mut store = MemoryStore::new(kind, task);
    store.add_entry(question, answer, Some(reason), &HashEmbedder::default()).unwrap().clone()
}

fn query(task: Task) -> TaskQuery {
    let m = synth_corpus(42);
    let case = m.test_cases(task)[0];
    case.gold_query(task)
}

#[test]
fn executor_prompts() {
    for task in Task::ALL {
        let q = query(task);
        let ok = entry(StoreKind::RecordLibrary, task, "Earlier incident", "1. Reactor trip", "Matched the sequence.");
        let bad = entry(StoreKind::ExperienceBase, task, "Other incident", "1. Wait", "Listed no actual items.");
        for (mode, suffix) in [(ReasonMode::WithoutReasons, "without_reasons"), (ReasonMode::WithReasons, "with_reasons")] {
            let bundle = build_executor_prompt(task.executor(), &q, std::slice::from_ref(&ok), std::slice::from_ref(&bad), mode).unwrap();
            check(&format!("{}_{}", task.executor().as_str(), suffix), &bundle);
        }
        let bare = build_executor_prompt(task.executor(), &q, &[], &[], ReasonMode::WithoutReasons).unwrap();
        check(&format!("{}_no_memory", task.executor().as_str()), &bare);
    }
}

#[test]
fn baseline_styles() {
    let q = query(Task::Task2);
    for (style, name) in [(ExecutorStyle::Bare, "bare"), (ExecutorStyle::StepByStep, "step_by_step")] {
        let bundle =
            build_executor_prompt_styled(style, Task::Task2.executor(), &q, &[], &[], ReasonMode::WithoutReasons).unwrap();
        check(&format!("task2_style_{name}"), &bundle);
    }
}

#[test]
fn validator_prompts() {
    for task in Task::ALL {
        let q = query(task);
        let bundle =
            build_validator_prompt(task.validator(), &q, "1. Candidate item", Some("1. Reference item"), ReasonMode::WithReasons)
                .unwrap();
        check(task.validator().as_str(), &bundle);
    }
}
