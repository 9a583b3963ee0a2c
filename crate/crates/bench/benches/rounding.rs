use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use cyclecancel::multilinear::{eval, gradient};
use cyclecancel::{
    brute_opt_maxmin, cancel_all_cycles, nonuniform_pipage, solve_mms, solve_nsw, solve_santa, BruteLimits,
    CancelOptions, EvalMode, MmsParams, NswParams, SantaParams,
};
use cyclecancel_bench::{mixed_instance, uniform_point};

fn multilinear(c: &mut Criterion) {
    let mut group = c.benchmark_group("multilinear");
    for m in [8, 12, 16] {
        let inst = mixed_instance(1, m, 1);
        let x = vec![0.5; m];
        group.bench_with_input(BenchmarkId::new("exact_eval", m), &m, |b, _| {
            b.iter(|| eval(inst.valuation(0), black_box(&x), EvalMode::Exact).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("exact_gradient", m), &m, |b, _| {
            b.iter(|| gradient(inst.valuation(0), black_box(&x), EvalMode::Exact).unwrap())
        });
    }
    let inst = mixed_instance(1, 40, 1);
    let x = vec![0.5; 40];
    let sampled = EvalMode::Sampled { samples: 10_000, seed: 0 };
    group.bench_function("sampled_eval/40", |b| b.iter(|| eval(inst.valuation(0), black_box(&x), sampled).unwrap()));
    group.finish();
}

fn rounding(c: &mut Criterion) {
    let mut group = c.benchmark_group("rounding");
    for (n, m) in [(3, 8), (5, 12)] {
        let inst = mixed_instance(n, m, 2);
        let x = uniform_point(&inst);
        let opts = CancelOptions::default();
        group.bench_function(format!("cancel_all_cycles/{n}x{m}"), |b| {
            b.iter(|| cancel_all_cycles(black_box(&x), inst.valuations(), &opts).unwrap())
        });
        group.bench_function(format!("nonuniform_pipage/{n}x{m}"), |b| {
            b.iter(|| nonuniform_pipage(black_box(&x), inst.valuations(), &opts).unwrap())
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    let inst = mixed_instance(3, 8, 3);
    group.bench_function("santa/3x8", |b| b.iter(|| solve_santa(&inst, &SantaParams::default()).unwrap()));
    group.bench_function("nsw/3x8", |b| b.iter(|| solve_nsw(&inst, &NswParams::default()).unwrap()));
    let mms = MmsParams {
        oracle: false,
        ..MmsParams::default()
    };
    group.bench_function("mms/3x8", |b| b.iter(|| solve_mms(&inst, &mms).unwrap()));
    group.bench_function("brute_maxmin/3x8", |b| {
        b.iter(|| brute_opt_maxmin(&inst, &BruteLimits::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, multilinear, rounding, solvers);
criterion_main!(benches);
