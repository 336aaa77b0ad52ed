use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use csforge_core::bounds::{mse_lower_bound, SystemOperator};
use csforge_core::linalg::{psd_project, sym_eig, Matrix};
use csforge_core::model::{
    exponential_covariance, source_covariance, ChannelSpec, CovarianceMode, SourceModel,
    SupportCollection, SystemSpec,
};
use csforge_core::recon::omp;
use csforge_core::rng::Stream;

fn random_sym(n: usize, stream: &mut Stream) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| stream.normal());
    g.t_matmul(&g).scale(1.0 / n as f64)
}

fn bench_sym_eig(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    for n in [8usize, 24, 48] {
        let mut stream = Stream::root(7);
        let m = random_sym(n, &mut stream);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| sym_eig(m).unwrap())
        });
    }
    group.finish();
}

fn bench_psd_project(c: &mut Criterion) {
    let mut group = c.benchmark_group("psd_project");
    for n in [6usize, 12, 36] {
        let mut stream = Stream::root(11);
        let g = Matrix::from_fn(n, n, |_, _| stream.normal());
        let m = g.add(&g.transpose()).scale(0.5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| psd_project(m).unwrap())
        });
    }
    group.finish();
}

fn bench_omp(c: &mut Criterion) {
    let mut group = c.benchmark_group("omp");
    for (m_rows, n, k) in [(12usize, 24usize, 2usize), (18, 36, 3)] {
        let mut stream = Stream::root(3);
        let a = Matrix::from_fn(m_rows, n, |_, _| stream.normal() / (m_rows as f64).sqrt());
        let x: Vec<f64> = (0..n).map(|i| if i < k { 1.0 + i as f64 } else { 0.0 }).collect();
        let y = a.matvec(&x);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{}x{}k{}", m_rows, n, k)),
            &(a, y),
            |b, (a, y)| b.iter(|| omp(y, a, k, None).unwrap()),
        );
    }
    group.finish();
}

fn bench_lower_bound(c: &mut Criterion) {
    let mut group = c.benchmark_group("mse_lower_bound");
    for (n, k) in [(12usize, 2usize), (24, 3)] {
        let r = exponential_covariance(k, 0.5, 1.0).unwrap();
        let model = SourceModel::new(n, k, r.clone()).unwrap();
        let _rx = source_covariance(&model, CovarianceMode::Analytic).unwrap();
        let spec = ChannelSpec::identity(n, 0.5, 0.0, 0.1, n / 2, 10.0).unwrap();
        let sys = SystemSpec::Single(spec);
        let supports = SupportCollection::exact(n, k).unwrap();
        let mut stream = Stream::root(5);
        let a = Matrix::from_fn(n / 2, n, |_, _| stream.normal());
        let op = SystemOperator::new(&[a.clone()], &sys).unwrap();
        let _ = op;
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("N{}K{}", n, k)),
            &(a, sys, r, supports),
            |b, (a, sys, r, supports)| {
                b.iter(|| mse_lower_bound(std::slice::from_ref(a), sys, r, supports).unwrap())
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_sym_eig, bench_psd_project, bench_omp, bench_lower_bound);
criterion_main!(benches);
