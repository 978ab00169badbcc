use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tubeloc::eval::{detect_all, PipelineConfig};
use tubeloc::geom::CameraIntrinsics;
use tubeloc::par::Execution;
use tubeloc::sim::{generate_trajectory, generate_world, render_dataset, JitterProfile, WorldConfig};
use tubeloc::zones::{build_all_maps, partition_uniform, MapParams};

fn bench(c: &mut Criterion) {
    let world = generate_world(1, &WorldConfig::default()).unwrap();
    let k = CameraIntrinsics::from_fov(64, 90.0).unwrap();
    let traj = generate_trajectory(&world, 11, 96, &JitterProfile::train());
    let data = render_dataset(&world, &traj, &k, Execution::Sequential).unwrap();
    let poses = data.poses();

    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        let mut g = c.benchmark_group("render_96");
        g.sample_size(10);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| render_dataset(&world, &traj, &k, exec).unwrap()));
        g.finish();

        let cfg = PipelineConfig { parallel: exec == Execution::Parallel, ..PipelineConfig::default() };
        let mut g = c.benchmark_group("detect_96");
        g.sample_size(10);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| detect_all(&cfg, &data.images).unwrap()));
        g.finish();

        let partition = partition_uniform(&poses, 4).unwrap();
        let mut g = c.benchmark_group("maps_96");
        g.sample_size(10);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_all_maps(partition.clone(), &data.images, &poses, &k, &MapParams::default(), exec).unwrap())
        });
        g.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
