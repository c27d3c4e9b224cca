use criterion::{criterion_group, criterion_main, Criterion};
use panelwise_core::replay::{run, ReplayScript};

fn replay(c: &mut Criterion) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/ethan.json");
    let script = ReplayScript::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    c.bench_function("replay_ethan", |b| b.iter(|| run(&script).unwrap()));
}

criterion_group!(benches, replay);
criterion_main!(benches);
