// SPDX-License-Identifier: Apache-2.0

use cosim_core::axi::check_trace;
use cosim_core::kernel::{CycleIo, HardwareProcess};
use cosim_core::programs::Builtin;
use cosim_core::scenario::{run_scenario, CongestionConfig, DutConfig, RunOptions, ScenarioConfig};
use cosim_core::signals::{Beat, ChannelId, StreamBeat};
use cosim_core::{Kernel, KernelConfig};
use proptest::prelude::*;

fn matmul_scenario(m: u32, rows: usize, cols: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(DutConfig::SystolicSoc { rows, cols }, Builtin::Matmul);
    c.firmware.params.m = m;
    c.max_cycles = 100_000;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn congestion_only_delays(
        seed in any::<u64>(),
        prob in 0.0f64..0.9,
        lo in 0u32..4,
        extra in 0u32..5,
        m in 1u32..6,
        rows in 1usize..9,
        cols in 1usize..9,
    ) {
        let base = matmul_scenario(m, rows, cols);
        let clean = run_scenario(&base, &RunOptions::default()).unwrap();
        let mut cfg = base.clone();
        cfg.congestion = CongestionConfig::uniform(prob, lo, lo + extra);
        cfg.congestion.seed = Some(seed);
        let opts = RunOptions { record_trace: true, ..Default::default() };
        let run = run_scenario(&cfg, &opts).unwrap();
        prop_assert_eq!(run.exit_code(), 0);
        prop_assert!(check_trace(run.trace.as_ref().unwrap()).is_empty());
        prop_assert!(run.memory.same_contents(&clean.memory));
    }
}

/// A free-running counter exposed as a stream payload; `follow` copies
/// another counter's committed value.
struct Counter {
    name: &'static str,
    own: ChannelId,
    follow: Option<ChannelId>,
    n: u8,
}

impl HardwareProcess for Counter {
    fn name(&self) -> &str {
        self.name
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        self.n = match self.follow.and_then(|f| io.payload(f).cloned()) {
            Some(Beat::Stream(s)) => s.data[0].wrapping_add(1),
            _ => self.n.wrapping_add(1),
        };
        io.drive(self.own, Some(Beat::Stream(StreamBeat { data: vec![self.n], last: false })));
        io.drive_ready(self.own, true);
    }
}

fn counters(swap: bool) -> Vec<Vec<Option<Beat>>> {
    let mut k = Kernel::new();
    let a = k.add_stream("a", 1).unwrap();
    let b = k.add_stream("b", 1).unwrap();
    let pa = Counter { name: "a", own: a, follow: Some(b), n: 0 };
    let pb = Counter { name: "b", own: b, follow: Some(a), n: 100 };
    if swap {
        k.register_process(Box::new(pb)).unwrap();
        k.register_process(Box::new(pa)).unwrap();
    } else {
        k.register_process(Box::new(pa)).unwrap();
        k.register_process(Box::new(pb)).unwrap();
    }
    k.enable_trace();
    k.run(&KernelConfig { max_cycles: 32, ..Default::default() }).unwrap();
    k.trace().unwrap().cycles.iter().map(|c| c.iter().map(|s| s.payload.clone()).collect()).collect()
}

#[test]
fn registration_order_does_not_matter() {
    let x = counters(false);
    assert_eq!(x, counters(true));
    // Each counter sees the other's value from the previous cycle.
    let val = |t: usize, c: usize| match &x[t][c] {
        Some(Beat::Stream(s)) => s.data[0],
        _ => panic!("no payload"),
    };
    for t in 2..x.len() {
        assert_eq!(val(t, 0), val(t - 1, 1).wrapping_add(1));
        assert_eq!(val(t, 1), val(t - 1, 0).wrapping_add(1));
    }
}

#[test]
fn same_seed_same_result() {
    let mut cfg = matmul_scenario(4, 8, 8);
    cfg.congestion = CongestionConfig::uniform(0.4, 0, 5);
    cfg.seed = 99;
    let opts = RunOptions { record_trace: true, ..Default::default() };
    let a = run_scenario(&cfg, &opts).unwrap();
    let b = run_scenario(&cfg, &opts).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.report, b.report);
}
