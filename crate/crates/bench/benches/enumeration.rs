use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use protoforge::enumerate::{CachedEnumerator, NaiveEnumerator};
use protoforge_bench::set_grammar;

fn enumerate_to_size(c: &mut Criterion) {
    let (g, sig) = set_grammar();
    let mut group = c.benchmark_group("set grammar to size 7");
    for (label, reduce, sc) in [
        ("unreduced", false, false),
        ("reduced", true, false),
        ("reduced+shortcircuit", true, true),
    ] {
        group.bench_function(BenchmarkId::new("cached", label), |b| {
            b.iter(|| {
                CachedEnumerator::new(g.clone(), sig.clone(), reduce, sc)
                    .unwrap()
                    .take_while(|e| e.size() <= 7)
                    .count()
            })
        });
    }
    group.bench_function("naive to size 5", |b| {
        b.iter(|| {
            NaiveEnumerator::new(g.clone(), sig.clone())
                .unwrap()
                .take_while(|e| e.size() <= 5)
                .count()
        })
    });
    group.finish();
}

criterion_group!(benches, enumerate_to_size);
criterion_main!(benches);
