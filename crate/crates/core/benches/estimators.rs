//! Sample-parallel estimator kernels against a plain sequential loop over
//! the same work. Build with `--no-default-features` to route the library
//! path through its sequential fallback as well.

use chance_design::fem::{Layout, Mesh};
use chance_design::field::{MaternConfig, MaternField};
use chance_design::forward::{sigmoid, thermal_compliance, ForwardModel, MaterialParams};
use chance_design::par;
use chance_design::risk::{mc_moments, SampleSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn setup() -> (ForwardModel, MaternField) {
    let mesh = Mesh::beam_insulator(&Layout::default(), 8, 6).unwrap();
    let p = MaterialParams { u_top: [0.0, 0.0], traction: [2.6e7, 0.0], ..Default::default() };
    let model = ForwardModel::new(mesh, p).unwrap();
    let field = MaternField::new(model.parameter_mesh(), MaternConfig { sigma: 0.5, corr_length: 0.25, ..Default::default() }).unwrap();
    (model, field)
}

fn compliance(model: &ForwardModel, m: &[f64]) -> chance_design::Result<f64> {
    let phi: Vec<f64> = m.iter().map(|v| sigmoid(0.5 + v)).collect();
    let st = model.solve_state(&phi)?;
    Ok(thermal_compliance(model, &st, &phi))
}

fn monte_carlo(c: &mut Criterion) {
    let (model, field) = setup();
    let label = if par::is_parallel() { "library (rayon)" } else { "library (sequential build)" };
    let mut group = c.benchmark_group("mc_compliance");
    group.sample_size(10);
    for count in [64usize, 256] {
        let samples = SampleSet::draw(&field, count, 3);
        group.bench_with_input(BenchmarkId::new(label, count), &samples, |b, s| {
            b.iter(|| mc_moments(&s.evaluate(|m| compliance(&model, m))).unwrap().mean)
        });
        group.bench_with_input(BenchmarkId::new("sequential loop", count), &samples, |b, s| {
            b.iter(|| {
                let vals: Vec<_> = (0..s.len()).map(|i| compliance(&model, &s.sample(i))).collect();
                mc_moments(&vals).unwrap().mean
            })
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let (_, field) = setup();
    let mut group = c.benchmark_group("field_samples");
    group.bench_function("SampleSet::draw 512", |b| b.iter(|| black_box(SampleSet::draw(&field, 512, 1)).len()));
    group.bench_function("sequential 512", |b| {
        b.iter(|| {
            (0..512u64)
                .map(|i| {
                    let xi = field.draw_noise(&mut MaternField::rng(1, i));
                    black_box((field.fluctuation(&xi), field.precision_of_fluctuation(&xi)))
                })
                .count()
        })
    });
    group.finish();
}

criterion_group!(benches, monte_carlo, sampling);
criterion_main!(benches);
