use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use systolic_bench::{network, CIFAR_CONV, CIFAR_DWS, RESNET_BLOCK, TWO_CELL};
use systolic_core::hw_model::{build_blackbox_lut, LutSpace};
use systolic_core::smooth::{SmoothNetwork, SmoothParams};
use systolic_core::{
    network_cost, optimize_channels, simulate_network, ChannelSearchSpace, CostModelKind,
    HardwareConfig, HardwareLossParams, LayerSpec, OptimConfig,
};

fn hard_model(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let mut g = c.benchmark_group("network_cost");
    for (name, text) in [
        ("cifar_conv", CIFAR_CONV),
        ("cifar_dws", CIFAR_DWS),
        ("resnet_block", RESNET_BLOCK),
    ] {
        let spec = network(text);
        for kind in [CostModelKind::Hard, CostModelKind::Roofline] {
            g.bench_function(format!("{name}/{}", kind.name()), |b| {
                b.iter(|| network_cost(black_box(&spec), &hw, kind, None).unwrap())
            });
        }
    }
    g.finish();
}

fn smooth_gradient(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let hl = HardwareLossParams::new(1.0, 1.0).unwrap();
    let p = SmoothParams::default();
    let net = SmoothNetwork::new(&network(CIFAR_CONV)).unwrap();
    c.bench_function("smooth_loss_and_gradient/cifar_conv", |b| {
        b.iter(|| {
            let vars = SmoothNetwork::variables(black_box(&[150.0, 200.0, 250.0]));
            net.loss(&vars, &hw, &p, &hl).unwrap()
        })
    });
}

fn simulator(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let mut g = c.benchmark_group("simulate");
    for (name, text) in [("cifar_conv", CIFAR_CONV), ("resnet_block", RESNET_BLOCK)] {
        let spec = network(text);
        g.bench_function(name, |b| {
            b.iter(|| simulate_network(black_box(&spec), &hw, false).unwrap())
        });
    }
    g.finish();
}

fn optimizer(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let spec = network(TWO_CELL);
    let space = ChannelSearchSpace::default();
    let cfg = OptimConfig {
        seed: Some(1),
        ..OptimConfig::default()
    };
    let mut g = c.benchmark_group("optimize");
    g.sample_size(20);
    g.bench_function("two_cell", |b| {
        b.iter(|| optimize_channels(black_box(&spec), &hw, &space, &cfg).unwrap())
    });
    g.finish();
}

fn lut_query(c: &mut Criterion) {
    let hw = HardwareConfig::default();
    let space = LutSpace {
        spatial: vec![8, 16, 32],
        ..LutSpace::default()
    };
    let lut = build_blackbox_lut(&space, &hw).unwrap();
    let layer = LayerSpec::conv(3, 150, 210, 16, 16, 1);
    c.bench_function("lut_query", |b| {
        b.iter(|| lut.query(black_box(&layer)).unwrap())
    });
}

criterion_group!(
    benches,
    hard_model,
    smooth_gradient,
    simulator,
    optimizer,
    lut_query
);
criterion_main!(benches);
