use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use scldgm::analysis::sigma_from_eb_no;
use scldgm::codec::{transmit, ConcatenatedCode, DecoderConfig};
use scldgm::dde::{channel_pmf, evolve_inner, DdeOptions};
use scldgm::grid::{convolve_with, r_combine, r_power_tree, ConvolutionMethod};
use scldgm::{CodeEnsemble, EnsembleKind, LlrGrid, QuantizedPmf};

fn message_pmf(n_bits: u32) -> QuantizedPmf {
    let grid = LlrGrid::new(50.0, n_bits).unwrap();
    QuantizedPmf::gaussian(&grid, 2.0, 4.0).unwrap()
}

fn check_rule(c: &mut Criterion) {
    let mut g = c.benchmark_group("r_combine");
    for n_bits in [8, 9, 10] {
        let p = message_pmf(n_bits);
        g.bench_with_input(BenchmarkId::from_parameter(n_bits), &p, |b, p| b.iter(|| r_combine(black_box(p), p).unwrap()));
    }
    g.finish();
    let p = message_pmf(10);
    c.bench_function("r_power_tree/199", |b| b.iter(|| r_power_tree(black_box(&p), 199)));
}

fn variable_rule(c: &mut Criterion) {
    let p = message_pmf(10);
    let mut g = c.benchmark_group("convolve");
    for (name, method) in [("direct", ConvolutionMethod::Direct), ("fast", ConvolutionMethod::Fast)] {
        g.bench_function(name, |b| b.iter(|| convolve_with(method, black_box(&p), &p).unwrap()));
    }
    g.finish();
}

fn dde_iteration(c: &mut Criterion) {
    let inner = CodeEnsemble::regular(EnsembleKind::LdgmInner, 7, 7).unwrap();
    let opts = DdeOptions::default().with_max_iters(1);
    let sigma = sigma_from_eb_no(0.8, 25.0 / 51.0);
    channel_pmf(&opts.grid, sigma).unwrap();
    c.bench_function("dde_inner_iteration/(7,7)", |b| b.iter(|| evolve_inner(&inner, black_box(sigma), &opts).unwrap()));
}

fn decode(c: &mut Criterion) {
    let inner = CodeEnsemble::regular(EnsembleKind::LdgmInner, 7, 7).unwrap();
    let outer = CodeEnsemble::regular(EnsembleKind::LdgmOuter, 4, 200).unwrap();
    let code = ConcatenatedCode::build(&inner, &outer, 2000, 1).unwrap();
    let word = code.encode(&vec![0; 2000]).unwrap();
    let llr = transmit(&word, sigma_from_eb_no(1.2, code.rates().rate()), 5).unwrap();
    let cfg = DecoderConfig::default();
    let mut g = c.benchmark_group("decode");
    g.sample_size(10);
    g.bench_function("two_step/k2000", |b| b.iter(|| code.decode_two_step(black_box(&llr), &cfg).unwrap()));
    g.bench_function("joint/k2000", |b| b.iter(|| code.decode_joint(black_box(&llr), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, check_rule, variable_rule, dde_iteration, decode);
criterion_main!(benches);
