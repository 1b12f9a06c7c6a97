mod common;

use std::fs;

use noracl::datasets::build_stream;
use noracl::diagnostics::{accuracy, EVENT_COLUMNS, METRICS_COLUMNS};
use noracl::rng::stream_rng;
use noracl::runner::{parse_config, resolve, run_with_data, set_key, Ablation};
use noracl::{Benchmark, GrowableMlp, Mode, RunSummary};

fn data() -> (noracl::Dataset, noracl::Dataset) {
    (common::synthetic_digits(40, 0), common::synthetic_digits(10, 1))
}

#[test]
fn runs_are_deterministic() {
    let (train, test) = data();
    let cfg = common::tiny_config("");
    let a = run_with_data(&cfg, &train, &test).unwrap();
    let b = run_with_data(&cfg, &train, &test).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.logs[0].records, b.logs[0].records);
    assert_eq!(a.logs[0].events, b.logs[0].events);
    assert!(a.logs[0].summary.ok(), "{:?}", a.logs[0].summary.error);
}

#[test]
fn refused_growth_matches_static_training() {
    let (train, test) = data();
    let capped = common::tiny_config("[growth]\nmax_width = 6");
    let fixed = common::tiny_config("mode = \"static_ewc\"");
    let a = run_with_data(&capped, &train, &test).unwrap();
    let b = run_with_data(&fixed, &train, &test).unwrap();
    let acc = |r: &noracl::runner::ExperimentResult| {
        r.logs[0].records.iter().map(|m| m.task_accuracies.clone()).collect::<Vec<_>>()
    };
    assert_eq!(acc(&a), acc(&b));
    assert!(a.logs[0].events.iter().all(|e| e.outcome != "grown"));
    assert_eq!(a.logs[0].summary.final_widths, vec![6, 5]);
}

#[test]
fn full_trigger_events_have_both_signals_and_respect_cooldown() {
    let (train, test) = data();
    let cfg = common::tiny_config("epochs = 12\n[growth]\ncooldown = 2");
    let r = run_with_data(&cfg, &train, &test).unwrap();
    let log = &r.logs[0];
    assert!(log.summary.ok());
    let grown: Vec<_> = log.events.iter().filter(|e| e.outcome == "grown").collect();
    assert!(!grown.is_empty(), "expected at least one growth event");
    for e in &grown {
        assert_eq!((e.ed_saturated, e.fisher_saturated), (Some(true), Some(true)));
    }
    for pair in grown.windows(2) {
        if pair[0].task == pair[1].task && pair[0].epoch != pair[1].epoch {
            assert!(pair[1].epoch - pair[0].epoch > cfg.growth.cooldown);
        }
    }
    let widths: Vec<&Vec<usize>> = log.records.iter().map(|m| &m.widths).collect();
    for w in widths.windows(2) {
        assert!(w[0].iter().zip(w[1]).all(|(a, b)| a <= b));
    }
}

#[test]
fn fixed_per_task_adds_k_per_layer_per_task() {
    let (train, test) = data();
    let cfg = common::tiny_config("tasks = 10\nepochs = 1\nepochs_first = 1\nmode = \"ablation:fixed_per_task\"\n[growth]\nfixed_k = 4");
    let r = run_with_data(&cfg, &train, &test).unwrap();
    let s = &r.logs[0].summary;
    let added: usize = s.final_widths.iter().sum::<usize>() - s.initial_widths.iter().sum::<usize>();
    assert_eq!(added, 80);
}

#[test]
fn scheduled_growth_fires_only_on_listed_tasks() {
    let (train, test) = data();
    let cfg = common::tiny_config("tasks = 10\nepochs = 1\nepochs_first = 1\nmode = \"ablation:scheduled\"\n[growth]\nschedule_k = 3");
    let r = run_with_data(&cfg, &train, &test).unwrap();
    let tasks: Vec<usize> = r.logs[0].events.iter().filter(|e| e.outcome == "grown").map(|e| e.task).collect();
    assert_eq!(tasks, vec![0, 0, 5, 5]);
}

#[test]
fn every_ablation_variant_runs() {
    let (train, test) = data();
    for a in Ablation::ALL {
        let cfg = common::tiny_config(&format!("tasks = 2\nmode = \"ablation:{}\"", a.name()));
        let r = run_with_data(&cfg, &train, &test).unwrap();
        assert!(r.logs[0].summary.ok(), "{}: {:?}", a.name(), r.logs[0].summary.error);
    }
}

#[test]
fn outputs_follow_documented_columns() {
    let (train, test) = data();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::tiny_config("seeds = [0, 1]");
    cfg.out_dir = Some(dir.path().to_path_buf());
    run_with_data(&cfg, &train, &test).unwrap();
    for seed in [0, 1] {
        let d = dir.path().join(format!("seed-{seed}"));
        let mut m = csv::Reader::from_path(d.join("metrics.csv")).unwrap();
        let header: Vec<String> = m.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, METRICS_COLUMNS);
        assert_eq!(m.records().count(), 3 + 4 + 4);
        let mut e = csv::Reader::from_path(d.join("growth_events.csv")).unwrap();
        let header: Vec<String> = e.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, EVENT_COLUMNS);
        let s: RunSummary = serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.seed, seed);
        assert_eq!(s.config_hash, cfg.hash().unwrap());
    }
}

#[test]
fn static_mode_never_grows() {
    let (train, test) = data();
    let cfg = common::tiny_config("mode = \"static_ewc\"");
    let r = run_with_data(&cfg, &train, &test).unwrap();
    let s = &r.logs[0].summary;
    assert_eq!(s.final_param_count, s.initial_param_count);
    assert!(r.logs[0].events.is_empty());
}

#[test]
fn diverging_seed_fails_alone() {
    let (train, test) = data();
    let cfg = common::tiny_config("seeds = [0, 1]\nlr_first = 1e300\nclip = 1e300");
    let r = run_with_data(&cfg, &train, &test).unwrap();
    assert_eq!(r.logs.len(), 2);
    for log in &r.logs {
        if let Some(e) = &log.summary.error {
            assert!(e.contains("seed"), "{e}");
        }
    }
}

#[test]
fn untrained_model_is_at_chance() {
    let (train, test) = data();
    let stream = build_stream(Benchmark::Permuted, 1, 0, &train, &test).unwrap();
    let mut accs = Vec::new();
    for seed in 0..5 {
        let mlp = GrowableMlp::new(64, &[32, 32], 10, &mut stream_rng(seed, &[])).unwrap();
        accs.push(accuracy(&mlp, &stream.tasks[0].test).unwrap());
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.1).abs() < 0.08, "{accs:?}");
}

#[test]
fn config_errors_name_the_key() {
    for (text, key) in [
        ("[growth]\ngamma = 1.5", "growth.gamma"),
        ("[growth]\neps = 0.0", "growth.eps"),
        ("lambda = -1.0", "lambda"),
        ("benchmark = \"cifar\"", "benchmark"),
        ("mode = \"grow_fast\"", "mode"),
    ] {
        let err = resolve(text.parse().unwrap()).unwrap_err().to_string();
        assert!(err.contains(key), "{text}: {err}");
    }
    assert!(resolve("unknown_key = 1".parse().unwrap()).is_err());
}

#[test]
fn overrides_and_files_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, "benchmark = \"rotated\"\nhidden = [16]\n[growth]\ngamma = 0.8\n").unwrap();
    let from_file = parse_config(&path).unwrap();
    let mut table = toml::Table::new();
    set_key(&mut table, "benchmark", "\"rotated\"").unwrap();
    set_key(&mut table, "hidden", "[16]").unwrap();
    set_key(&mut table, "growth.gamma", "0.8").unwrap();
    assert_eq!(resolve(table).unwrap(), from_file);
    assert_eq!(from_file.lambda, 2000.0);
    assert_eq!(from_file.tasks, 5);
    assert_eq!(from_file.mode, Mode::Noracl);
}

#[test]
fn binary_split_and_rotated_streams_run() {
    let (train, test) = data();
    for extra in ["benchmark = \"binary_split\"", "benchmark = \"rotated\""] {
        let cfg = common::tiny_config(extra);
        let r = run_with_data(&cfg, &train, &test).unwrap();
        assert!(r.logs[0].summary.ok(), "{extra}: {:?}", r.logs[0].summary.error);
    }
}
