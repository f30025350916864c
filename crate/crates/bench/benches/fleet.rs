use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use fleet_core::hub::EventLog;
use fleet_core::planner::plan_with_radius;
use fleet_core::protocol::{decode, encode, Frame, FrameType, TelemetryPayload};
use fleet_core::scenario::Scenario;
use fleet_core::verify::verify_bytes;
use fleet_core::{Point, Pose2D, Rect};

fn codec(c: &mut Criterion) {
    let tel = TelemetryPayload {
        pose: Pose2D::new(3.25, -1.5, 0.7),
        battery: 0.42,
        carrying: None,
        following: None,
        activity: Some("scan".into()),
        arm: None,
    };
    let frame = Frame::new(FrameType::Telemetry, 1234, 5678, "spot", "hub", &tel);
    let line = encode(&frame).unwrap();
    c.bench_function("encode telemetry", |b| b.iter(|| encode(black_box(&frame)).unwrap()));
    c.bench_function("decode telemetry", |b| b.iter(|| decode(black_box(&line)).unwrap()));
}

fn planner(c: &mut Criterion) {
    let bounds = Rect::new(Point::new(0.0, 0.0), Point::new(20.0, 20.0));
    let obstacles: Vec<Rect> = (0..6)
        .map(|i| {
            let x = 2.5 + 3.0 * i as f64;
            let (y0, y1) = if i % 2 == 0 { (0.0, 14.0) } else { (6.0, 20.0) };
            Rect::new(Point::new(x, y0), Point::new(x + 0.5, y1))
        })
        .collect();
    c.bench_function("plan through slalom", |b| {
        b.iter(|| plan_with_radius(&obstacles, bounds, black_box(Point::new(1.0, 1.0)), black_box(Point::new(19.0, 19.0)), 0.3).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("headless run");
    g.sample_size(10);
    for name in ["m1", "m3", "full"] {
        let s = Scenario::load(&format!("bundled:{name}")).unwrap();
        g.bench_function(name, |b| {
            b.iter_batched(|| s.build(EventLog::in_memory()).unwrap(), |sim| sim.run().unwrap().0, BatchSize::LargeInput)
        });
    }
    g.finish();
}

fn verification(c: &mut Criterion) {
    let s = Scenario::load("bundled:full").unwrap();
    let (outcome, sim) = s.build(EventLog::in_memory()).unwrap().run().unwrap();
    let log = sim.hub().log().bytes().unwrap().to_vec();
    c.bench_function("verify full log", |b| b.iter(|| verify_bytes(black_box(&log), Some(&outcome.digest))));
}

criterion_group!(benches, codec, planner, simulation, verification);
criterion_main!(benches);
