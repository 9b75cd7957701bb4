//! Seeded synthetic incident corpus with the shipped acronym distribution
//! and train/test splits. Every case is marked `synthetic`.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{DatasetManifest, DeclaredSplits, ACRONYM_COUNTS};
use super::EvalError;
use crate::pipeline::{IncidentCase, Split};

pub const DEFAULT_SEED: u64 = 42;

struct Profile {
    acronym: &'static str,
    triggers: &'static [&'static str],
    subevents: &'static [&'static str],
    headers: &'static [&'static str],
    /// Headers that may be absent in a given case.
    optional_headers: &'static [&'static str],
    actions: &'static [&'static str],
}

const PROFILES: [Profile; 11] = [
    Profile {
        acronym: "LOCA",
        triggers: &[
            "a double-ended guillotine break of a cold leg",
            "a pressurizer surge line rupture",
            "a failed-open pressurizer relief valve",
            "a reactor coolant pump seal failure",
        ],
        subevents: &[
            "Primary coolant discharge into containment",
            "Rapid primary pressure drop",
            "Pressurizer level loss",
            "Containment pressure and temperature rise",
            "Core uncovery risk",
        ],
        headers: &[
            "Reactor trip",
            "Safety injection",
            "Accumulator injection",
            "Containment spray",
            "Low-pressure recirculation",
        ],
        optional_headers: &["Containment spray"],
        actions: &[
            "Verify reactor trip and turbine trip",
            "Confirm safety injection flow",
            "Stop reactor coolant pumps when trip criteria are met",
            "Align low-pressure recirculation before refueling water tank depletion",
        ],
    },
    Profile {
        acronym: "LOHSA",
        triggers: &[
            "loss of condenser vacuum",
            "closure of all main steam isolation valves",
            "loss of circulating water pumps",
        ],
        subevents: &[
            "Loss of secondary heat removal",
            "Steam generator pressure rise",
            "Primary temperature rise",
            "Steam generator level decrease",
        ],
        headers: &[
            "Reactor trip",
            "Auxiliary feedwater",
            "Steam dump to atmosphere",
            "Feed and bleed",
        ],
        optional_headers: &["Feed and bleed"],
        actions: &[
            "Verify reactor trip",
            "Start auxiliary feedwater pumps",
            "Open atmospheric steam dump valves",
            "Initiate feed and bleed if steam generator levels cannot be recovered",
        ],
    },
    Profile {
        acronym: "LOFW",
        triggers: &["a trip of both main feedwater pumps", "a feedwater control valve failure"],
        subevents: &[
            "Main feedwater flow loss",
            "Steam generator level decrease",
            "Primary temperature and pressure rise",
        ],
        headers: &["Reactor trip", "Auxiliary feedwater", "Secondary heat removal", "Feed and bleed"],
        optional_headers: &["Feed and bleed"],
        actions: &[
            "Verify reactor trip on low steam generator level",
            "Confirm auxiliary feedwater start",
            "Control steam generator levels",
            "Prepare feed and bleed",
        ],
    },
    Profile {
        acronym: "LOOP",
        triggers: &["a grid disturbance that trips all offsite feeders", "a switchyard fire"],
        subevents: &[
            "Offsite power loss",
            "Reactor coolant pump coastdown",
            "Main feedwater loss",
            "Diesel generator demand",
        ],
        headers: &["Reactor trip", "Emergency diesel generators", "Auxiliary feedwater", "Natural circulation"],
        optional_headers: &[],
        actions: &[
            "Verify reactor trip",
            "Confirm emergency diesel generator start and load sequencing",
            "Verify auxiliary feedwater flow",
            "Confirm natural circulation",
        ],
    },
    Profile {
        acronym: "ATWS",
        triggers: &[
            "a loss of feedwater with failure of the rods to insert",
            "a turbine trip with a stuck control rod bank",
            "a loss of load with failed scram breakers",
        ],
        subevents: &[
            "Scram failure",
            "Primary pressure excursion",
            "Reactor power remains high",
            "Secondary heat removal demand",
            "Pressurizer relief valve challenge",
        ],
        headers: &[
            "Manual reactor trip",
            "Turbine trip",
            "Auxiliary feedwater",
            "Emergency boration",
            "Primary pressure relief",
        ],
        optional_headers: &["Primary pressure relief"],
        actions: &[
            "Attempt manual reactor trip",
            "Trip the turbine",
            "Start emergency boration",
            "Insert control rods manually",
        ],
    },
    Profile {
        acronym: "MFLB",
        triggers: &["a main feedwater line rupture inside containment", "a feedwater header break"],
        subevents: &[
            "Feedwater discharge",
            "Affected steam generator blowdown",
            "Steam generator level decrease",
            "Containment pressure rise",
        ],
        headers: &[
            "Reactor trip",
            "Feedwater isolation",
            "Auxiliary feedwater to intact steam generators",
            "Safety injection",
        ],
        optional_headers: &["Safety injection"],
        actions: &[
            "Verify reactor trip",
            "Isolate feedwater to the faulted steam generator",
            "Align auxiliary feedwater to intact steam generators",
        ],
    },
    Profile {
        acronym: "MSLB",
        triggers: &[
            "a main steam line rupture upstream of the isolation valves",
            "a main steam line rupture in the turbine building",
            "a stuck-open main steam safety valve",
        ],
        subevents: &[
            "Uncontrolled steam release",
            "Primary overcooling",
            "Positive reactivity insertion",
            "Steam generator depressurization",
        ],
        headers: &[
            "Reactor trip",
            "Main steam isolation",
            "Safety injection",
            "Auxiliary feedwater isolation to faulted steam generator",
            "Boron injection",
        ],
        optional_headers: &["Boron injection"],
        actions: &[
            "Verify reactor trip and safety injection",
            "Close main steam isolation valves",
            "Isolate the faulted steam generator",
            "Control reactor coolant temperature",
        ],
    },
    Profile {
        acronym: "LODC",
        triggers: &["loss of a vital DC bus", "a battery charger failure with battery depletion"],
        subevents: &[
            "Loss of DC control power",
            "Breaker control failure",
            "Instrumentation loss",
            "Turbine trip",
        ],
        headers: &["Reactor trip", "Alternate DC supply", "Auxiliary feedwater", "Instrument power recovery"],
        optional_headers: &["Instrument power recovery"],
        actions: &[
            "Verify reactor trip",
            "Transfer loads to the alternate DC supply",
            "Start auxiliary feedwater locally",
            "Restore battery charger",
        ],
    },
    Profile {
        acronym: "SGTR",
        triggers: &["a steam generator tube rupture", "multiple steam generator tube failures"],
        subevents: &[
            "Primary to secondary leakage",
            "Secondary radiation alarm",
            "Pressurizer level decrease",
            "Ruptured steam generator level rise",
        ],
        headers: &[
            "Reactor trip",
            "Safety injection",
            "Ruptured steam generator isolation",
            "Primary cooldown and depressurization",
        ],
        optional_headers: &[],
        actions: &[
            "Identify and isolate the ruptured steam generator",
            "Cool down the primary through intact steam generators",
            "Depressurize the primary to stop break flow",
            "Terminate safety injection when criteria are met",
        ],
    },
    Profile {
        acronym: "MSLB+SGTR",
        triggers: &[
            "a steam line break that induces a tube rupture",
            "a tube rupture followed by a stuck-open safety valve",
        ],
        subevents: &[
            "Uncontrolled steam release",
            "Primary to secondary leakage",
            "Primary overcooling",
            "Radioactive release path outside containment",
        ],
        headers: &[
            "Reactor trip",
            "Main steam isolation",
            "Safety injection",
            "Ruptured steam generator isolation",
            "Primary depressurization",
        ],
        optional_headers: &[],
        actions: &[
            "Verify reactor trip and safety injection",
            "Isolate the faulted and ruptured steam generator",
            "Cool down through intact steam generators",
            "Depressurize the primary",
        ],
    },
    Profile {
        acronym: "SLTE",
        triggers: &["a turbine control valve oscillation", "a condensate pump trip"],
        subevents: &[
            "Secondary load mismatch",
            "Primary temperature transient",
            "Steam generator level swing",
        ],
        headers: &["Turbine runback", "Reactor power control", "Steam generator level control", "Reactor trip"],
        optional_headers: &["Reactor trip"],
        actions: &[
            "Reduce turbine load",
            "Stabilize reactor power",
            "Control steam generator levels manually",
        ],
    },
];

const UNITS: [&str; 4] = ["Unit 1", "Unit 2", "Unit 3", "Unit 4"];
const POWER: [u32; 4] = [100, 98, 75, 50];

fn profile(acronym: &str) -> &'static Profile {
    PROFILES.iter().find(|p| p.acronym == acronym).expect("profile for every acronym")
}

fn make_case(p: &Profile, name: &str, index: usize, rng: &mut ChaCha8Rng) -> IncidentCase {
    let trigger = *p.triggers.choose(rng).expect("triggers");
    let unit = *UNITS.choose(rng).expect("units");
    let power = *POWER.choose(rng).expect("power");
    let minute = rng.random_range(2..40);

    let keep = rng.random_range(3..=p.subevents.len());
    let subevents: Vec<String> = p.subevents[..keep].iter().map(|s| s.to_string()).collect();

    let headers: Vec<String> = p
        .headers
        .iter()
        .filter(|h| !p.optional_headers.contains(h) || rng.random_bool(0.5))
        .map(|s| s.to_string())
        .collect();

    let n_actions = rng.random_range(2..=p.actions.len());
    let actions: Vec<String> = p.actions[..n_actions].iter().map(|s| s.to_string()).collect();

    let process = format!(
        "{}. At minute {minute} the plant responds through: {}.",
        subevents.join(". "),
        headers.join(", ").to_lowercase(),
    );
    IncidentCase {
        case_id: format!("syn-{}-{:02}", p.acronym.to_lowercase().replace('+', "-"), index + 1),
        initiating_event: name.to_string(),
        acronym: p.acronym.to_string(),
        ie_description: format!("Synthetic scenario. {unit} operating at {power}% power experiences {trigger}."),
        event_process_and_response: process,
        gold_subevents: subevents,
        gold_header_events: headers,
        gold_operator_actions: actions,
        split: Split::Train,
        task1_split: None,
        synthetic: true,
    }
}

/// Deterministic corpus for `seed`.
pub fn synth_corpus(seed: u64) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let declared = DeclaredSplits::default();
    let mut cases = Vec::new();
    for (name, acronym, count) in ACRONYM_COUNTS {
        let p = profile(acronym);
        for i in 0..count {
            cases.push(make_case(p, name, i, &mut rng));
        }
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.shuffle(&mut rng);
    for &i in &order[..declared.task23.test] {
        cases[i].split = Split::Test;
    }
    order.shuffle(&mut rng);
    let t1 = declared.task1;
    for (n, &i) in order[..t1.train + t1.test].iter().enumerate() {
        cases[i].task1_split = Some(if n < t1.test { Split::Test } else { Split::Train });
    }
    DatasetManifest { cases, declared }
}

pub fn write_corpus(path: impl AsRef<Path>, seed: u64) -> Result<DatasetManifest, EvalError> {
    let path = path.as_ref();
    let manifest = synth_corpus(seed);
    std::fs::write(path, manifest.to_jsonl()).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::parse_dataset;
    use crate::types::Task;

    #[test]
    fn same_seed_same_bytes() {
        assert_eq!(synth_corpus(42).to_jsonl(), synth_corpus(42).to_jsonl());
        assert_ne!(synth_corpus(42).to_jsonl(), synth_corpus(43).to_jsonl());
    }

    #[test]
    fn histogram_and_splits() {
        for seed in [0, 42, 7] {
            let m = parse_dataset(&synth_corpus(seed).to_jsonl()).unwrap();
            assert!(m.distribution_issues().is_empty(), "{:?}", m.distribution_issues());
            assert_eq!(m.split_counts(Task::Task1).to_string(), "10/3");
            assert_eq!(m.split_counts(Task::Task3).to_string(), "31/7");
        }
    }

    #[test]
    fn every_profile_matches_table() {
        for (_, acronym, _) in ACRONYM_COUNTS {
            let p = profile(acronym);
            assert!(p.subevents.len() >= 3);
            assert!(p.actions.len() >= 2);
            assert!(p.optional_headers.iter().all(|h| p.headers.contains(h)));
        }
    }
}
