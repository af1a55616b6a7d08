use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flowgate::dicom::{DataSet, DicomFile};
use flowgate::map::op_study_loader;
use flowgate::par::Execution;
use flowgate::rules::{evaluate_batch, parse_rules, Engine};
use flowgate::sim::{gen_synthetic_study, synthetic_study, SeriesSpec, SyntheticStudySpec};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

const RULES: &str = r#"
[source modality1]
calling_ae = MOD1

[destination pacs]
host = 127.0.0.1
port = 104
called_ae = PACS

[destination ai]
host = 127.0.0.1
port = 105
called_ae = AI

[rule mr_brain]
when = modality == "MR" and study_description ~ "(?i)brain"
route = ai : parallel

[rule thin_ct]
when = modality == "CT" and slice_thickness < 1.0
block = true

[rule chest]
when = modality == "CT" and (study_description ~ "CHEST" or series_description == "2.5 mm")
route = pacs, ai : parallel
priority = HIGH
continue = true

[rule archive]
when = true
route = pacs : parallel
"#;

fn rules_evaluation(c: &mut Criterion) {
    let rules = parse_rules(RULES).unwrap();
    let source = rules.sources[0].clone();
    let engine = Engine::new(rules);
    let files: Vec<DicomFile> = (0..8)
        .flat_map(|seed| synthetic_study(&SyntheticStudySpec::chest_ct(seed, vec![SeriesSpec::new(256, 2, 2, 2.5)])).unwrap())
        .collect();
    let datasets: Vec<&DataSet> = files.iter().map(|f| &f.dataset).collect();
    let items: Vec<_> = datasets.iter().map(|d| (*d, &source)).collect();
    let mut group = c.benchmark_group("evaluate_batch");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, items.len()), &exec, |b, &exec| {
            b.iter(|| black_box(evaluate_batch(&engine, &items, exec)))
        });
    }
    group.finish();
}

fn study_loading(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..4 {
        let spec = SyntheticStudySpec::chest_ct(seed, vec![SeriesSpec::new(64, 64, 64, 2.5)]);
        gen_synthetic_study(&spec, &dir.path().join(format!("study{seed}"))).unwrap();
    }
    let mut group = c.benchmark_group("op_study_loader");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 256), &exec, |b, &exec| {
            b.iter(|| black_box(op_study_loader(dir.path(), exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, rules_evaluation, study_loading);
criterion_main!(benches);
