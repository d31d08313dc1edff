// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fail.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::oracle;
use cosim_core::axi::{check_trace, AddrBeat, Rule};
use cosim_core::kernel::{CycleIo, HardwareProcess};
use cosim_core::memory::MemoryImage;
use cosim_core::programs::{Builtin, A_ADDR, O_ADDR, PING_ADDR, PONG_ADDR, P_ADDR, W_ADDR};
use cosim_core::scenario::{
    run_scenario, ArbitrationConfig, CongestionConfig, DutConfig, PolicyKind, ReportFormat, RunOptions, ScenarioConfig,
    ScenarioRun,
};
use cosim_core::signals::{AxiChannels, Beat};
use cosim_core::{CongestionProfile, Kernel, KernelConfig, Mutation, Outcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioRun, String> {
    run_scenario(cfg, opts).map_err(|e| e.to_string())
}

fn matmul(m: u32, r: usize, c: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(DutConfig::SystolicSoc { rows: r, cols: c }, Builtin::Matmul);
    cfg.firmware.params.m = m;
    cfg.seed = seed;
    cfg.max_cycles = 200_000;
    cfg
}

// DDR layout shared with the firmware: one 16-byte beat per int8 row, and
// ceil(C/4) beats of little-endian i32 lanes per output or psum row.
fn i8_rows(mem: &MemoryImage, base: u64, rows: usize, cols: usize) -> Vec<Vec<i8>> {
    (0..rows).map(|i| mem.peek(base + 16 * i as u64, cols).into_iter().map(|b| b as i8).collect()).collect()
}

fn i32_rows(mem: &MemoryImage, base: u64, rows: usize, cols: usize) -> Vec<Vec<i32>> {
    let stride = cols.div_ceil(4) as u64 * 16;
    (0..rows)
        .map(|i| {
            mem.peek(base + stride * i as u64, cols * 4)
                .chunks(4)
                .map(|b| i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect()
        })
        .collect()
}

fn c1_golden() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    for i in 0..50 {
        let (m, r, c) = (rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16));
        let cfg = matmul(m as u32, r, c, rng.gen_range(0..1 << 40));
        let out = run(&cfg, &RunOptions::default())?;
        ensure(out.result.outcome == Outcome::FirmwareDone { exit_code: 0 }, || {
            format!("job {i} ({m}x{r}x{c}): {:?}", out.result.outcome)
        })?;
        let mem = &out.memory;
        let a = i8_rows(mem, A_ADDR, m, r);
        let w = i8_rows(mem, W_ADDR, r, c);
        let p = i32_rows(mem, P_ADDR, m, c);
        ensure(i32_rows(mem, O_ADDR, m, c) == oracle(&a, &w, &p), || format!("job {i} ({m}x{r}x{c}) differs"))?;
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(60), || format!("took {el:?}"))?;
    Ok(format!("50 jobs bit-exact in {el:.2?}"))
}

fn c2_congestion() -> Check {
    let t = Instant::now();
    let base = matmul(12, 16, 16, 42);
    let opts = RunOptions { record_trace: true, ..Default::default() };
    let clean = run(&base, &opts)?;
    let mut cycles = vec![clean.result.final_cycle];
    let mut runs = vec![clean];
    for s in 1..=20u64 {
        let mut cfg = base.clone();
        cfg.congestion = CongestionConfig::uniform([0.2, 0.5, 0.8][(s % 3) as usize], 0, 7);
        cfg.congestion.seed = Some(s);
        let r = run(&cfg, &opts)?;
        cycles.push(r.result.final_cycle);
        runs.push(r);
    }
    for (i, r) in runs.iter().enumerate() {
        ensure(r.exit_code() == 0, || format!("run {i}: exit {}", r.exit_code()))?;
        ensure(r.memory.same_contents(&runs[0].memory), || format!("run {i}: DDR differs"))?;
        let v = check_trace(r.trace.as_ref().unwrap());
        ensure(v.is_empty(), || format!("run {i}: {} violations, first {}", v.len(), v[0]))?;
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(120), || format!("took {el:?}"))?;
    Ok(format!(
        "21 runs identical, 0 violations, {}..{} cycles, {el:.2?}",
        cycles.iter().min().unwrap(),
        cycles.iter().max().unwrap()
    ))
}

fn outputs(cfg: &ScenarioConfig) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        vcd: Some(dir.path().join("wave.vcd")),
        report_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let r = run(cfg, &opts)?;
    r.files
        .iter()
        .map(|f| Ok((f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(f).map_err(|e| e.to_string())?)))
        .collect()
}

fn c3_determinism() -> Check {
    let mut cfg = matmul(6, 8, 8, 3);
    cfg.congestion = CongestionConfig::uniform(0.5, 0, 7);
    let (a, b) = (outputs(&cfg)?, outputs(&cfg)?);
    for f in ["wave.vcd", "bandwidth.csv", "stalls.csv", "heatmap.csv"] {
        ensure(a.contains_key(f), || format!("{f} missing"))?;
        ensure(a.get(f) == b.get(f), || format!("{f} differs"))?;
    }
    ensure(a == b, || "outputs differ".into())?;
    Ok(format!("{} files byte-identical, VCD {} bytes", a.len(), a["wave.vcd"].len()))
}

fn c4_hang() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut worst = 0;
    for i in 0..10 {
        let (rows, cols) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        let mut cfg = ScenarioConfig::new(DutConfig::SystolicSoc { rows, cols }, Builtin::HangReproducer);
        cfg.firmware.params.m = rng.gen_range(1..=16);
        cfg.firmware.params.deficit_beats = rng.gen_range(1..=64);
        cfg.seed = rng.gen();
        cfg.seed >>= 1;
        cfg.max_cycles = 50_000;
        let r = run(&cfg, &RunOptions::default())?;
        ensure(r.result.outcome == Outcome::Hang, || format!("case {i}: {:?}", r.result.outcome))?;
        let named = r.result.diagnostics.iter().any(|d| d.contains("port 'output' W channel stuck"));
        ensure(named, || format!("case {i}: diagnostics {:?}", r.result.diagnostics))?;
        worst = worst.max(r.result.final_cycle);
    }
    Ok(format!("10 deficits hang on output W, latest at cycle {worst}"))
}

fn suite() -> Vec<(&'static str, ScenarioConfig)> {
    let mut v = vec![
        ("matmul", matmul(8, 8, 8, 1)),
        ("matmul-odd", matmul(5, 7, 13, 2)),
        ("regfile", ScenarioConfig::new(DutConfig::RegisterFile { n_regs: 32 }, Builtin::RegfileSmoke)),
        ("ping-pong", ScenarioConfig::new(DutConfig::SystolicSoc { rows: 8, cols: 8 }, Builtin::PingPong)),
        ("dma-stress", ScenarioConfig::new(DutConfig::DmaBench, Builtin::DmaStress)),
    ];
    let mut hang = ScenarioConfig::new(DutConfig::SystolicSoc { rows: 8, cols: 8 }, Builtin::HangReproducer);
    hang.max_cycles = 50_000;
    v.push(("hang", hang));
    let congested: Vec<_> = v
        .iter()
        .map(|(n, c)| {
            let mut c = c.clone();
            c.congestion = CongestionConfig::uniform(0.5, 0, 7);
            c.seed = 9;
            (*n, c)
        })
        .collect();
    v.extend(congested);
    v
}

fn c5_mutations() -> Check {
    let mut cfg = matmul(8, 8, 8, 5);
    cfg.congestion = CongestionConfig::uniform(0.3, 0, 3);
    let cases = [
        (Mutation::RetractValid, Rule::ValidStability),
        (Mutation::CorruptStalledPayload, Rule::ValidStability),
        (Mutation::EarlyLast, Rule::Last),
    ];
    let mut notes = Vec::new();
    for (m, rule) in cases {
        let opts = RunOptions { mutation: Some(("psum".into(), m)), record_trace: true, ..Default::default() };
        let r = run(&cfg, &opts)?;
        let offline = check_trace(r.trace.as_ref().unwrap());
        let hit = offline.iter().filter(|v| v.rule == rule).count();
        ensure(hit >= 1, || format!("{m:?}: no {rule} violation ({} others)", offline.len()))?;
        ensure(r.violations.iter().any(|v| v.rule == rule), || format!("{m:?}: online checker missed it"))?;
        ensure(r.exit_code() == 3, || format!("{m:?}: exit {}", r.exit_code()))?;
        notes.push(format!("{m:?}->{rule}x{hit}"));
    }
    let mut clean = 0;
    for (name, cfg) in suite() {
        let r = run(&cfg, &RunOptions { record_trace: true, ..Default::default() })?;
        let v = check_trace(r.trace.as_ref().unwrap());
        ensure(v.is_empty() && r.violations.is_empty(), || format!("{name}: {} violations", v.len()))?;
        clean += 1;
    }
    Ok(format!("{}; {clean} unmutated runs clean", notes.join(", ")))
}

/// Keeps one port's read queue full with 16-beat bursts.
struct Streamer {
    port: AxiChannels,
    next: u64,
    end: u64,
}

impl HardwareProcess for Streamer {
    fn name(&self) -> &str {
        "streamer"
    }

    fn step(&mut self, io: &mut CycleIo<'_>) {
        if io.fired(self.port.ar) {
            self.next += 256;
        }
        let ar = (self.next < self.end).then(|| Beat::Addr(AddrBeat::incr(0, self.next, 16, 4)));
        io.drive(self.port.ar, ar);
        io.drive_ready(self.port.r, true);
    }
}

fn full_rate() -> Result<f64, String> {
    let mut k = Kernel::new();
    let port = k.add_manager_port("synthetic", 16, CongestionProfile::none()).map_err(|e| e.to_string())?;
    k.register_process(Box::new(Streamer { port, next: 0, end: 64 * 1024 })).map_err(|e| e.to_string())?;
    k.run(&KernelConfig { max_cycles: 8192, ..Default::default() }).map_err(|e| e.to_string())?;
    let bw = k.profiler().bandwidth(256).map_err(|e| e.to_string())?;
    let w = &bw.port("synthetic").unwrap().windows;
    // Windows strictly inside the transfer.
    let inner = &w[1..w.len().saturating_sub(1).max(1)];
    let max = inner.iter().map(|x| x.utilization).fold(0.0, f64::max);
    ensure(inner.iter().filter(|x| x.utilization == 1.0).count() >= 8, || format!("peak {max}"))?;
    Ok(max)
}

fn c6_conservation() -> Check {
    let mut n = 0;
    for (name, cfg) in suite() {
        let r = run(&cfg, &RunOptions::default())?;
        let (win, rec, mem) = (r.report.window_bytes(), r.record_bytes, r.memory_side_bytes());
        ensure(win == rec && rec == mem, || format!("{name}: windows {win}, records {rec}, memory {mem}"))?;
        for p in &r.report.bandwidth.ports {
            for w in &p.windows {
                ensure((0.0..=1.0).contains(&w.utilization), || format!("{name}/{}: {}", p.port, w.utilization))?;
            }
        }
        n += 1;
    }
    let u = full_rate()?;
    Ok(format!("{n} scenarios conserve bytes, utilization within [0,1], synthetic port peaks at {u}"))
}

fn c7_stall_priority() -> Check {
    let mut cfg = ScenarioConfig::new(DutConfig::DmaBench, Builtin::DmaStress);
    cfg.arbitration = ArbitrationConfig {
        policy: PolicyKind::FixedPriority,
        order: ["input", "weights", "psum", "output"].map(String::from).to_vec(),
    };
    let r = run(&cfg, &RunOptions::default())?;
    ensure(r.exit_code() == 0, || format!("exit {}", r.exit_code()))?;
    let s = &r.report.stalls;
    ensure(s["weights"] >= s["input"], || format!("stalls {s:?}"))?;
    Ok(format!("stalls weights {} >= input {} (psum {}, output {})", s["weights"], s["input"], s["psum"], s["output"]))
}

fn c8_ping_pong() -> Check {
    let mut cfg = ScenarioConfig::new(DutConfig::SystolicSoc { rows: 8, cols: 8 }, Builtin::PingPong);
    let period = cfg.firmware.params.layer_period_cycles;
    cfg.report.addr_bucket_bytes = 0x8000;
    cfg.report.time_bucket_cycles = period;
    cfg.report.format = ReportFormat::Csv;
    let r = run(&cfg, &RunOptions::default())?;
    ensure(r.exit_code() == 0, || format!("exit {}", r.exit_code()))?;
    let hm = &r.report.heatmap;
    let (ping, pong) = (PING_ADDR / 0x8000, PONG_ADDR / 0x8000);
    ensure(ping != pong, || "buffers share a bucket".into())?;
    let layers = cfg.firmware.params.layers as u64;
    let mut pattern = String::new();
    for t in 0..layers {
        let a = hm.cell(ping, t);
        let b = hm.cell(pong, t);
        let (ia, ib) = (a.reads + a.writes > 0, b.reads + b.writes > 0);
        ensure(ia != ib, || format!("time bucket {t}: ping {ia}, pong {ib}"))?;
        let want_ping = t % 2 == 0;
        ensure(ia == want_ping, || format!("time bucket {t} out of phase"))?;
        pattern.push(if ia { 'A' } else { 'B' });
    }
    ensure(layers >= 6, || format!("only {layers} buckets"))?;
    Ok(format!("{layers} time buckets alternate {pattern}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 golden-model equivalence", c1_golden),
        ("2 congestion invariance", c2_congestion),
        ("3 determinism", c3_determinism),
        ("4 hang detection", c4_hang),
        ("5 protocol checker sensitivity", c5_mutations),
        ("6 profiler conservation", c6_conservation),
        ("7 weights stall more than input", c7_stall_priority),
        ("8 ping-pong heatmap alternation", c8_ping_pong),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match out {
            Ok(msg) => println!("criterion {name}: PASS ({msg})"),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({msg})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
