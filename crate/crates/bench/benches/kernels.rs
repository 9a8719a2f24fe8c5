use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use phred_bench::{benchmark_fom, fixed_context, initial};
use phred_core::linalg::C64;
use phred_core::resolvent::FastTransfer;
use phred_core::{adapt_samples, loss_gradient, AdaptOptions, ErrorFunction};

fn transfer_eval(c: &mut Criterion) {
    let fom = benchmark_fom();
    let sys = fom.system().clone();
    let fast = FastTransfer::new(&sys);
    let s = C64::new(0.0, 1.3);
    let mut group = c.benchmark_group("transfer_eval_n100");
    group.bench_function("dense_lu", |b| b.iter(|| sys.transfer_eval(black_box(s)).unwrap()));
    group.bench_function("hessenberg", |b| b.iter(|| fast.eval(black_box(s)).unwrap()));
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let fom = benchmark_fom();
    let mut group = c.benchmark_group("loss_gradient");
    group.sample_size(20);
    for r in [8, 20] {
        let (theta, _) = initial(&fom, r);
        for k in [30, 800] {
            let ctx = fixed_context(&fom, k, 1e-4);
            group.bench_with_input(BenchmarkId::new(format!("r{r}"), k), &ctx, |b, ctx| {
                b.iter(|| loss_gradient(ctx, black_box(&theta)).unwrap())
            });
        }
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let fom = benchmark_fom();
    let mut group = c.benchmark_group("adapt_samples_r8");
    group.sample_size(10);
    let (theta, s0) = initial(&fom, 8);
    // full-order responses are cached after the first pass, so this times the
    // sweeps and reduced-model evaluations
    let err = ErrorFunction::new(fom.clone(), Some(&theta.assemble())).unwrap();
    for gamma in [1e-1, 1e-2, 1e-3] {
        group.bench_with_input(BenchmarkId::from_parameter(gamma), &gamma, |b, &g| {
            b.iter(|| adapt_samples(&err, &s0, g, AdaptOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transfer_eval, gradient, sampling);
criterion_main!(benches);
