use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ebff::ctm::{chi_partition, EnumConfig};
use ebff::formfactor::{f_face_2m, ContourSpec, FF2Params, RadiusRule};
use ebff::freefield::{ope_check_all, BosonSpec, FieldContext};
use ebff::kernels::{KernelContext, LocalOp};
use ebff::{EllipticParams, Exec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn chi(c: &mut Criterion) {
    let p = EllipticParams::new(3, 2.5, 0.35).unwrap();
    let mut g = c.benchmark_group("chi_partition_n3_J12");
    for (name, exec) in MODES {
        let cfg = EnumConfig { exec, ..EnumConfig::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| chi_partition(0, 12, &p, &cfg).unwrap()));
    }
    g.finish();
}

fn contour(c: &mut Criterion) {
    let params = EllipticParams::new(2, 3.0, 0.4).unwrap();
    let ctx = KernelContext::new(params);
    let p = FF2Params::new(params, 0.3, 0.05, 0.7, 0, vec![0.1, 0.3, 0.45, 0.6]).unwrap();
    let spec = ContourSpec::new(RadiusRule::GeometricMean, 512);
    let mut g = c.benchmark_group("f_face_m2_N512");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| f_face_2m(&p, LocalOp::SigmaZ, &spec, &ctx, exec).unwrap())
        });
    }
    g.finish();
}

fn ope(c: &mut Criterion) {
    let ctx = FieldContext::new(EllipticParams::new(3, 2.5, 0.3).unwrap(), BosonSpec::default());
    let mut g = c.benchmark_group("ope_check_all_n3_order12");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| ope_check_all(12, &ctx, exec)));
    }
    g.finish();
}

criterion_group!(benches, chi, contour, ope);
criterion_main!(benches);
