use criterion::{criterion_group, criterion_main, Criterion};
use protoforge::cegis::synthesize;
use protoforge::enumerate::Strategy;
use protoforge_bench::corpus_case;

fn synthesize_cases(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthesize");
    group.sample_size(10);
    for case in ["2pc-pre", "lock_serv-prepost", "decentralized_lock-prepost"] {
        let lc = corpus_case(case);
        group.bench_function(case, |b| {
            b.iter(|| synthesize(&lc.sketch, &lc.config).unwrap())
        });
    }
    let lc = corpus_case("2pc-pre");
    let mut naive = lc.config.clone();
    naive.strategy = Strategy::Naive;
    group.bench_function("2pc-pre naive", |b| {
        b.iter(|| synthesize(&lc.sketch, &naive).unwrap())
    });
    group.finish();
}

criterion_group!(benches, synthesize_cases);
criterion_main!(benches);
