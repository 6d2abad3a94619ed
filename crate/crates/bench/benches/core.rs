use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use serde_json::json;

use dig_bench::Setup;
use dig_core::binding::{enumerate_root, parse_input, reduce, BindingState};
use dig_core::interface::{synthesize, SynthOptions};
use dig_core::tooling::{generate_workload, plan_tutorial, UserModel};
use dig_core::{fixtures, parse_grammar, QualifiedName};

fn grammar(c: &mut Criterion) {
    c.bench_function("parse_grammar/all_fixtures", |b| {
        b.iter(|| {
            for (_, src) in fixtures::GRAMMARS {
                black_box(parse_grammar(src).unwrap());
            }
        })
    });
}

fn query_space(c: &mut Criterion) {
    let d = Setup::drought();
    c.bench_function("enumerate/drought", |b| {
        b.iter(|| black_box(enumerate_root(&d.model, "q", None, 10_000).unwrap().len()))
    });
    let sql = "SELECT year, payout1(*), ... FROM evi WHERE dekad BETWEEN 1 AND 2";
    let root = QualifiedName::root("q");
    c.bench_function("parse_input/drought", |b| {
        b.iter(|| {
            let mut st = BindingState::new();
            parse_input(&d.model, &mut st, &root, black_box(sql), None).unwrap();
            st
        })
    });
    let st = d.state(json!({"t": 2, "s": 1, "e": 2}));
    c.bench_function("reduce/drought", |b| b.iter(|| black_box(reduce(&d.model, &st))));
}

fn interfaces(c: &mut Criterion) {
    let x = Setup::crossfilter();
    c.bench_function("synthesize/crossfilter", |b| {
        b.iter(|| black_box(synthesize(&x.ast, x.catalog.as_ref(), &SynthOptions::default()).unwrap()))
    });
    let d = Setup::drought();
    let (start, end) = (d.state(json!({"t": 1, "s": 10, "e": 23})), d.state(json!({"t": 2, "s": 1, "e": 2})));
    c.bench_function("tutorial/drought", |b| {
        b.iter(|| black_box(plan_tutorial(&d.model, &d.spec, &start, &end, None).unwrap()))
    });
}

fn workloads(c: &mut Criterion) {
    let d = Setup::drought();
    let user = UserModel::default();
    c.bench_function("workload/drought_1000", |b| {
        b.iter(|| black_box(generate_workload(&d.model, &d.spec, &user, 1000, 7, None).unwrap()))
    });
    let x = Setup::crossfilter();
    c.bench_function("workload/crossfilter_1000", |b| {
        b.iter(|| black_box(generate_workload(&x.model, &x.spec, &user, 1000, 7, x.catalog.as_ref()).unwrap()))
    });
}

criterion_group!(benches, grammar, query_space, interfaces, workloads);
criterion_main!(benches);
