use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use atm_core::input::{parse_stack_str, OutputSet};
use atm_core::par::Execution;
use atm_core::sweep::{evaluate_sweep, SweepOptions};

const STACK: &str = r#"
[media.lead]
kind = "free-particle"

[media.barrier]
kind = "bendaniel-duke"
mass = 0.8
potential = "1.5 u"

[media.well]
kind = "bendaniel-duke"
mass = 1.2
potential = "0 u"

[exterior]
left = "lead"
right = "lead"

[sweep]
omega_min = "0.1 u"
omega_max = "4 u"
count = 64
eta = "1e-3 u"
outputs = ["transfer", "dos", "transmission", "identity-report"]
z = ["0.5 u", "3 u"]
"#;

fn superlattice(periods: usize) -> String {
    let mut text = STACK.to_string();
    for _ in 0..periods {
        text.push_str("\n[[layers]]\nmedium = \"barrier\"\nthickness = \"0.4 u\"\n");
        text.push_str("\n[[layers]]\nmedium = \"well\"\nthickness = \"0.9 u\"\n");
    }
    text
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for periods in [4usize, 32] {
        let d = parse_stack_str(&superlattice(periods)).unwrap();
        let mut spec = d.sweep.clone().unwrap();
        spec.outputs = OutputSet { transfer: true, dos: true, transmission: true, identity_report: true, ..Default::default() };
        for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let opts = SweepOptions { execution, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(name, periods), &periods, |b, _| {
                b.iter(|| evaluate_sweep(&d.stack, &spec, &opts))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
